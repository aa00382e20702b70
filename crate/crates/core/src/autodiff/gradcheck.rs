//! Central finite-difference checks of the recorded backward rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Unary, Var};
use super::tensor::Tensor;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;

/// Outcome of comparing one analytic gradient against finite differences.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: String,
    pub rel_error: f64,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.rel_error <= tol
    }
}

/// Central differences of `f` at `x` with step `h`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Norm-wise relative error `‖a − n‖ / max(‖a‖, ‖n‖)`, NaN-propagating.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if diff.is_nan() || scale.is_nan() {
        return f64::NAN;
    }
    if scale < 1e-300 {
        return diff;
    }
    diff / scale
}

/// Checks the gradient of `build` with respect to each of `inputs`.
///
/// `build` records a scalar on the graph given one [`Var`] per input.
pub fn check_scalar_fn<F>(name: &str, inputs: &[Tensor], build: F) -> Result<Vec<GradCheck>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.constant(t)).collect();
        let root = build(&mut g, &vars)?;
        g.item(root)
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
    let root = build(&mut g, &vars)?;
    g.backward(root)?;

    let mut out = Vec::with_capacity(inputs.len());
    for (k, input) in inputs.iter().enumerate() {
        let analytic = g
            .grad(vars[k])
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; input.numel()]);
        let numeric = finite_difference(
            |x| {
                let mut vals = inputs.to_vec();
                vals[k] = Tensor::new(input.shape().to_vec(), x.to_vec()).expect("same shape");
                eval(&vals).unwrap_or(f64::NAN)
            },
            input.data(),
            FD_STEP,
        );
        let label = if inputs.len() > 1 {
            format!("{name}[arg{k}]")
        } else {
            name.to_string()
        };
        out.push(GradCheck {
            name: label,
            rel_error: relative_error(&analytic, &numeric),
        });
    }
    Ok(out)
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape from product")
}

fn away_from_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = rng.random_range(-2.0..2.0);
            if v.abs() > 1e-3 {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape from product")
}

/// Weighted sum so that every output element carries a distinct upstream gradient.
fn weighted_sum(g: &mut Graph, y: Var, weights: &Tensor) -> Result<Var> {
    let w = g.constant(weights);
    let prod = g.mul(y, w)?;
    g.sum(prod, None)
}

/// Gradient checks for every differentiable operation on random inputs in
/// `[-2, 2]` (positive inputs for `sqrt_eps`, none within `1e-3` of relu's kink).
pub fn check_all_ops(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let shape = [3, 4];
    let w = uniform(&mut rng, &shape, -2.0, 2.0);

    let unaries: [(&str, Unary); 11] = [
        ("tanh", Unary::Tanh),
        ("sigmoid", Unary::Sigmoid),
        ("relu", Unary::Relu),
        ("cos", Unary::Cos),
        ("sin", Unary::Sin),
        ("sqrt_eps", Unary::SqrtEps),
        ("square", Unary::Square),
        ("neg", Unary::Neg),
        ("scale", Unary::Scale(-1.7)),
        ("shift", Unary::Shift(0.4)),
        ("softplus", Unary::Softplus),
    ];
    for (name, kind) in unaries {
        let x = match kind {
            Unary::Relu => away_from_kink(&mut rng, &shape),
            Unary::SqrtEps => uniform(&mut rng, &shape, 0.05, 2.0),
            _ => uniform(&mut rng, &shape, -2.0, 2.0),
        };
        out.extend(check_scalar_fn(name, &[x], |g, v| {
            let y = g.unary(kind, v[0])?;
            weighted_sum(g, y, &w)
        })?);
    }

    let a = uniform(&mut rng, &shape, -2.0, 2.0);
    let b = uniform(&mut rng, &shape, -2.0, 2.0);
    let s = uniform(&mut rng, &[], -2.0, 2.0);
    for name in ["add", "sub", "mul"] {
        let op = |g: &mut Graph, x: Var, y: Var| match name {
            "add" => g.add(x, y),
            "sub" => g.sub(x, y),
            _ => g.mul(x, y),
        };
        out.extend(check_scalar_fn(name, &[a.clone(), b.clone()], |g, v| {
            let y = op(g, v[0], v[1])?;
            weighted_sum(g, y, &w)
        })?);
        out.extend(check_scalar_fn(
            &format!("{name}_scalar"),
            &[a.clone(), s.clone()],
            |g, v| {
                let y = op(g, v[0], v[1])?;
                weighted_sum(g, y, &w)
            },
        )?);
    }

    out.extend(check_scalar_fn("modulus", &[a.clone(), b.clone()], |g, v| {
        let y = g.modulus(v[0], v[1])?;
        weighted_sum(g, y, &w)
    })?);

    let m1 = uniform(&mut rng, &[3, 3], -2.0, 2.0);
    let m2 = uniform(&mut rng, &[3, 3], -2.0, 2.0);
    out.extend(check_scalar_fn("matmul", &[m1, m2], |g, v| {
        let y = g.matmul(v[0], v[1])?;
        g.sum(y, None)
    })?);

    let wt = uniform(&mut rng, &[4, 3], -2.0, 2.0);
    out.extend(check_scalar_fn("transpose", &[a.clone()], |g, v| {
        let y = g.transpose(v[0])?;
        weighted_sum(g, y, &wt)
    })?);

    let bias = uniform(&mut rng, &[4], -2.0, 2.0);
    out.extend(check_scalar_fn("add_row", &[a.clone(), bias], |g, v| {
        let y = g.add_row(v[0], v[1])?;
        weighted_sum(g, y, &w)
    })?);

    let w_axis0 = uniform(&mut rng, &[4], -2.0, 2.0);
    let w_axis1 = uniform(&mut rng, &[3], -2.0, 2.0);
    out.extend(check_scalar_fn("sum", &[a.clone()], |g, v| {
        let y = g.sum(v[0], Some(0))?;
        weighted_sum(g, y, &w_axis0)
    })?);
    out.extend(check_scalar_fn("mean_axis", &[a.clone()], |g, v| {
        let y = g.mean(v[0], Some(1))?;
        weighted_sum(g, y, &w_axis1)
    })?);
    out.extend(check_scalar_fn("mean_all", &[a], |g, v| {
        let sq = g.square(v[0])?;
        g.mean(sq, None)
    })?);

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_difference_of_cubic() {
        let d = finite_difference(|x| x[0].powi(3), &[2.0], 1e-5);
        assert!((d[0] - 12.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_flags_nan() {
        assert!(relative_error(&[f64::NAN], &[1.0]).is_nan());
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn every_op_matches_finite_differences() {
        for seed in 0..3 {
            for check in check_all_ops(seed).unwrap() {
                assert!(
                    check.passes(1e-5),
                    "{} rel error {:e}",
                    check.name,
                    check.rel_error
                );
            }
        }
    }

    #[test]
    fn matmul_gradient_wrt_lhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = uniform(&mut rng, &[3, 3], -2.0, 2.0);
        let b = uniform(&mut rng, &[3, 3], -2.0, 2.0);
        let checks = check_scalar_fn("matmul", &[a, b], |g, v| {
            let y = g.matmul(v[0], v[1])?;
            g.sum(y, None)
        })
        .unwrap();
        assert!(checks[0].rel_error <= 1e-5);
    }
}
