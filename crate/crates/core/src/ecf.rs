//! Empirical characteristic functions and the characteristic-function loss.
//!
//! Every loss comes in two forms: a graph form that records onto a
//! [`Graph`] and is differentiable with respect to the samples, and a plain
//! form working on detached [`Tensor`]s for evaluation workloads. Both compute
//! the same per-frequency quantity
//!
//! ```text
//! c_α(t) = α (|Φx| − |Φy|)² + (1 − α) · 2 (|Φx||Φy| − Re Φx Re Φy − Im Φx Im Φy)
//! ```
//!
//! which is the amplitude/phase split of `|Φx − Φy|²` with the cosine of the
//! phase gap written as a normalized dot product. The distance averages
//! `sqrt(c_α + ε)` over the frequency draw.

use crate::autodiff::{Graph, Tensor, Var, MODULUS_FLOOR, SQRT_EPS};
use crate::error::{Error, Result};

/// Settings of the CF loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfLossConfig {
    alpha: f64,
    num_freqs: usize,
    epsilon: f64,
}

impl Default for CfLossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            num_freqs: 64,
            epsilon: SQRT_EPS,
        }
    }
}

impl CfLossConfig {
    pub fn new(alpha: f64, num_freqs: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
        }
        if num_freqs == 0 {
            return Err(Error::invalid("num_freqs must be at least 1"));
        }
        Ok(Self {
            alpha,
            num_freqs,
            epsilon: SQRT_EPS,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn num_freqs(&self) -> usize {
        self.num_freqs
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")))
    }
}

fn check_pair(samples: &[usize], freqs: &[usize]) -> Result<()> {
    let ok = samples.len() == 2 && freqs.len() == 2 && samples[1] == freqs[1] && samples[0] >= 1;
    if ok {
        Ok(())
    } else {
        Err(Error::Shape {
            op: "ecf",
            lhs: samples.to_vec(),
            rhs: freqs.to_vec(),
        })
    }
}

/// Detached ECF values at `k` frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct EcfEval {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub freqs: Tensor,
}

impl EcfEval {
    /// `(1/n) Σᵢ exp(j tⱼᵀ xᵢ)` for every frequency row `tⱼ`.
    pub fn evaluate(samples: &Tensor, freqs: &Tensor) -> Result<Self> {
        check_pair(samples.shape(), freqs.shape())?;
        let n = samples.rows();
        let k = freqs.rows();
        let mut re = vec![0.0; k];
        let mut im = vec![0.0; k];
        for x in samples.row_iter() {
            for j in 0..k {
                let phase: f64 = freqs.row(j).iter().zip(x).map(|(t, v)| t * v).sum();
                let (s, c) = phase.sin_cos();
                re[j] += c;
                im[j] += s;
            }
        }
        let inv = 1.0 / n as f64;
        re.iter_mut().for_each(|v| *v *= inv);
        im.iter_mut().for_each(|v| *v *= inv);
        Ok(Self {
            re,
            im,
            freqs: freqs.clone(),
        })
    }

    /// Assembles precomputed ECF values at `freqs` `[k, m]`.
    pub fn from_parts(re: Vec<f64>, im: Vec<f64>, freqs: Tensor) -> Result<Self> {
        if re.len() != im.len() || freqs.rank() != 2 || freqs.rows() != re.len() {
            return Err(Error::Shape {
                op: "EcfEval::from_parts",
                lhs: vec![re.len(), im.len()],
                rhs: freqs.shape().to_vec(),
            });
        }
        Ok(Self { re, im, freqs })
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn modulus(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(r, i)| r.hypot(*i)).collect()
    }

    /// Moduli and principal angles in `(−π, π]`; the angle is 0 wherever the
    /// modulus is below `1e-12`.
    pub fn amplitude_phase(&self) -> (Vec<f64>, Vec<f64>) {
        let amp = self.modulus();
        let phase = self
            .re
            .iter()
            .zip(&self.im)
            .zip(&amp)
            .map(|((&r, &i), &a)| {
                if a < MODULUS_FLOOR {
                    0.0
                } else {
                    let p = i.atan2(r);
                    if p <= -std::f64::consts::PI {
                        std::f64::consts::PI
                    } else {
                        p
                    }
                }
            })
            .collect();
        (amp, phase)
    }

    fn check_same_freqs(&self, other: &EcfEval) -> Result<()> {
        if self.freqs.shape() == other.freqs.shape() && self.freqs.data() == other.freqs.data() {
            Ok(())
        } else {
            Err(Error::invalid("ECFs evaluated at different frequencies"))
        }
    }
}

/// `|Φa(t) − Φb(t)|²` per frequency.
pub fn c_values(a: &EcfEval, b: &EcfEval) -> Result<Vec<f64>> {
    a.check_same_freqs(b)?;
    Ok((0..a.len())
        .map(|j| {
            let dr = a.re[j] - b.re[j];
            let di = a.im[j] - b.im[j];
            dr * dr + di * di
        })
        .collect())
}

/// Amplitude term `(|Φa| − |Φb|)²` and phase term `2|Φa||Φb|(1 − cos Δa)` per frequency.
pub fn amplitude_phase_terms(a: &EcfEval, b: &EcfEval) -> Result<(Vec<f64>, Vec<f64>)> {
    a.check_same_freqs(b)?;
    let (ma, mb) = (a.modulus(), b.modulus());
    let mut amp = Vec::with_capacity(a.len());
    let mut phase = Vec::with_capacity(a.len());
    for j in 0..a.len() {
        let d = ma[j] - mb[j];
        amp.push(d * d);
        phase.push(if ma[j] < MODULUS_FLOOR || mb[j] < MODULUS_FLOOR {
            0.0
        } else {
            let dot = a.re[j] * b.re[j] + a.im[j] * b.im[j];
            2.0 * (ma[j] * mb[j] - dot)
        });
    }
    Ok((amp, phase))
}

/// α-weighted amplitude/phase loss per frequency.
pub fn c_alpha_values(a: &EcfEval, b: &EcfEval, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let (amp, phase) = amplitude_phase_terms(a, b)?;
    Ok(amp
        .iter()
        .zip(&phase)
        .map(|(m, p)| alpha * m + (1.0 - alpha) * p)
        .collect())
}

/// `(1/k) Σⱼ sqrt(c_α(tⱼ) + ε)` from precomputed ECFs.
pub fn cf_distance_from_ecf(a: &EcfEval, b: &EcfEval, cfg: &CfLossConfig) -> Result<f64> {
    let c = c_alpha_values(a, b, cfg.alpha)?;
    if c.is_empty() {
        return Err(Error::invalid("no frequencies"));
    }
    Ok(c.iter().map(|v| (v + cfg.epsilon).sqrt()).sum::<f64>() / c.len() as f64)
}

/// Detached CF distance between two sample sets at a shared frequency draw.
pub fn cf_distance_value(a: &Tensor, b: &Tensor, freqs: &Tensor, cfg: &CfLossConfig) -> Result<f64> {
    if a.rows() == 0 || b.rows() == 0 || a.numel() == 0 || b.numel() == 0 {
        return Err(Error::invalid("empty sample set"));
    }
    let ea = EcfEval::evaluate(a, freqs)?;
    let eb = EcfEval::evaluate(b, freqs)?;
    cf_distance_from_ecf(&ea, &eb, cfg)
}

/// ECF recorded on a graph.
#[derive(Debug, Clone, Copy)]
pub struct EcfVars {
    pub re: Var,
    pub im: Var,
    pub freqs: Var,
}

/// Records the ECF of `samples` `[n, m]` at `freqs` `[k, m]`.
pub fn ecf(g: &mut Graph, samples: Var, freqs: Var) -> Result<EcfVars> {
    check_pair(g.shape(samples)?, g.shape(freqs)?)?;
    let ft = g.transpose(freqs)?;
    let proj = g.matmul(samples, ft)?;
    let c = g.cos(proj)?;
    let s = g.sin(proj)?;
    let re = g.mean(c, Some(0))?;
    let im = g.mean(s, Some(0))?;
    Ok(EcfVars { re, im, freqs })
}

fn check_graph_freqs(g: &Graph, a: &EcfVars, b: &EcfVars) -> Result<()> {
    if a.freqs == b.freqs || g.value(a.freqs)? == g.value(b.freqs)? {
        Ok(())
    } else {
        Err(Error::invalid("ECFs evaluated at different frequencies"))
    }
}

/// Graph form of [`c_values`].
pub fn c_of_t(g: &mut Graph, a: &EcfVars, b: &EcfVars) -> Result<Var> {
    check_graph_freqs(g, a, b)?;
    let dr = g.sub(a.re, b.re)?;
    let di = g.sub(a.im, b.im)?;
    let dr2 = g.square(dr)?;
    let di2 = g.square(di)?;
    g.add(dr2, di2)
}

/// Graph form of [`c_alpha_values`].
pub fn c_alpha_of_t(g: &mut Graph, a: &EcfVars, b: &EcfVars, alpha: f64) -> Result<Var> {
    check_alpha(alpha)?;
    check_graph_freqs(g, a, b)?;
    let ma = g.modulus(a.re, a.im)?;
    let mb = g.modulus(b.re, b.im)?;

    let dm = g.sub(ma, mb)?;
    let amp = g.square(dm)?;

    let rr = g.mul(a.re, b.re)?;
    let ii = g.mul(a.im, b.im)?;
    let dot = g.add(rr, ii)?;
    let mm = g.mul(ma, mb)?;
    let gap = g.sub(mm, dot)?;
    // zero the phase term where either modulus is degenerate
    let mask: Vec<f64> = g
        .value(ma)?
        .iter()
        .zip(g.value(mb)?)
        .map(|(&x, &y)| f64::from(u8::from(x >= MODULUS_FLOOR && y >= MODULUS_FLOOR)))
        .collect();
    let mask = g.constant(&Tensor::vector(mask));
    let gap = g.mul(gap, mask)?;
    let phase = g.scale(gap, 2.0)?;

    let amp = g.scale(amp, alpha)?;
    let phase = g.scale(phase, 1.0 - alpha)?;
    g.add(amp, phase)
}

/// Monte Carlo CF distance `(1/k) Σⱼ sqrt(c_α(tⱼ) + ε)`, differentiable with
/// respect to both sample sets (and the frequencies).
pub fn cf_distance(
    g: &mut Graph,
    a_samples: Var,
    b_samples: Var,
    freqs: Var,
    cfg: &CfLossConfig,
) -> Result<Var> {
    for v in [a_samples, b_samples] {
        let shape = g.shape(v)?;
        if shape.iter().product::<usize>() == 0 {
            return Err(Error::invalid("empty sample set"));
        }
    }
    let ea = ecf(g, a_samples, freqs)?;
    let eb = ecf(g, b_samples, freqs)?;
    let c = c_alpha_of_t(g, &ea, &eb, cfg.alpha)?;
    let shifted = g.shift(c, cfg.epsilon - SQRT_EPS)?;
    let root = g.sqrt_eps(shifted)?;
    g.mean(root, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{check_scalar_fn, relative_error};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn col(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    fn gaussian(n: usize, m: usize, mu: f64, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * m)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                mu + e
            })
            .collect::<Vec<f64>>();
        Tensor::new(vec![n, m], data).unwrap()
    }

    #[test]
    fn zero_frequency_is_one() {
        let x = gaussian(17, 3, 0.4, 1);
        let e = EcfEval::evaluate(&x, &Tensor::zeros(&[1, 3])).unwrap();
        assert_eq!((e.re[0], e.im[0]), (1.0, 0.0));
    }

    #[test]
    fn single_sample_is_unit_phasor() {
        let x = Tensor::from_rows(&[vec![0.3, -1.1]]).unwrap();
        let t = Tensor::from_rows(&[vec![2.0, 0.5]]).unwrap();
        let e = EcfEval::evaluate(&x, &t).unwrap();
        let p: f64 = 0.6 - 0.55;
        assert!((e.re[0] - p.cos()).abs() < 1e-15);
        assert!((e.im[0] - p.sin()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_ecf_matches_cf() {
        let x = gaussian(100_000, 1, 0.0, 2);
        let e = EcfEval::evaluate(&x, &col(&[1.0])).unwrap();
        assert!((e.re[0] - (-0.5f64).exp()).abs() < 0.02);
        assert!(e.im[0].abs() < 0.02);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let x = Tensor::zeros(&[4, 2]);
        let t = Tensor::zeros(&[3, 3]);
        assert!(EcfEval::evaluate(&x, &t).is_err());
        let mut g = Graph::new();
        let (xv, tv) = (g.constant(&x), g.constant(&t));
        assert!(ecf(&mut g, xv, tv).is_err());
    }

    #[test]
    fn c_values_examples() {
        let t = col(&[0.5, 1.0, 2.0]);
        let a = EcfEval::evaluate(&gaussian(50, 1, 0.0, 3), &t).unwrap();
        assert!(c_values(&a, &a).unwrap().iter().all(|&v| v == 0.0));

        let x = EcfEval::evaluate(&col(&[0.0]), &col(&[1.0])).unwrap();
        let y = EcfEval::evaluate(&col(&[PI]), &col(&[1.0])).unwrap();
        assert!((c_values(&x, &y).unwrap()[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn c_values_match_shifted_gaussian_closed_form() {
        // X ~ N(0,1), Y ~ N(1,1): c(t) = 2 e^{-t²} (1 - cos t)
        let ts = [0.5, 1.0, 2.0];
        let t = col(&ts);
        let a = EcfEval::evaluate(&gaussian(100_000, 1, 0.0, 4), &t).unwrap();
        let b = EcfEval::evaluate(&gaussian(100_000, 1, 1.0, 5), &t).unwrap();
        let c = c_values(&a, &b).unwrap();
        for (j, &tj) in ts.iter().enumerate() {
            let exact = 2.0 * (-tj * tj).exp() * (1.0 - tj.cos());
            assert!((c[j] - exact).abs() < 0.05, "t={tj}: {} vs {exact}", c[j]);
        }
    }

    #[test]
    fn frequency_mismatch_rejected() {
        let x = gaussian(5, 1, 0.0, 6);
        let a = EcfEval::evaluate(&x, &col(&[1.0])).unwrap();
        let b = EcfEval::evaluate(&x, &col(&[2.0])).unwrap();
        assert!(c_values(&a, &b).is_err());
        assert!(c_alpha_values(&a, &a, 1.5).is_err());
    }

    #[test]
    fn c_alpha_examples() {
        let t = col(&[0.3, 0.9, 1.7]);
        let a = EcfEval::evaluate(&gaussian(40, 1, 0.2, 7), &t).unwrap();
        let b = EcfEval::evaluate(&gaussian(40, 1, -0.5, 8), &t).unwrap();
        let c = c_values(&a, &b).unwrap();
        let half = c_alpha_values(&a, &b, 0.5).unwrap();
        for j in 0..3 {
            assert!((half[j] - c[j] / 2.0).abs() < 1e-12);
        }
        for alpha in [0.0, 0.3, 1.0] {
            assert!(c_alpha_values(&a, &a, alpha).unwrap().iter().all(|v| v.abs() < 1e-15));
        }

        // equal amplitudes r, phase gap π
        let r = 0.6;
        let freqs = col(&[1.0]);
        let x = EcfEval {
            re: vec![r],
            im: vec![0.0],
            freqs: freqs.clone(),
        };
        let y = EcfEval {
            re: vec![-r],
            im: vec![0.0],
            freqs,
        };
        let v = c_alpha_values(&x, &y, 0.0).unwrap()[0];
        assert!((v - 4.0 * r * r).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let cfg = CfLossConfig::default();
        let x = gaussian(30, 2, 0.0, 9);
        let t = gaussian(8, 2, 0.0, 10);
        let same = cf_distance_value(&x, &x, &t, &cfg).unwrap();
        assert!(same <= 1e-6 + 1e-15);

        let d = cf_distance_value(&col(&[0.0]), &col(&[PI]), &col(&[1.0]), &cfg).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-9);

        let empty = Tensor::zeros(&[0, 1]);
        assert!(cf_distance_value(&empty, &col(&[1.0]), &col(&[1.0]), &cfg).is_err());
    }

    #[test]
    fn amplitude_phase_examples() {
        let freqs = col(&[1.0, 2.0, 3.0]);
        let e = EcfEval {
            re: vec![1.0, 0.0, -1.0],
            im: vec![0.0, 1.0, -0.0],
            freqs,
        };
        let (a, p) = e.amplitude_phase();
        assert_eq!(a, vec![1.0, 1.0, 1.0]);
        assert_eq!(p[0], 0.0);
        assert!((p[1] - PI / 2.0).abs() < 1e-15);
        assert_eq!(p[2], PI);

        let x = gaussian(100_000, 1, 2.0, 11);
        let e = EcfEval::evaluate(&x, &col(&[0.5])).unwrap();
        let (a, p) = e.amplitude_phase();
        assert!((a[0] - (-0.125f64).exp()).abs() < 0.02);
        assert!((p[0] - 1.0).abs() < 0.02);
    }

    #[test]
    fn graph_and_plain_routes_agree() {
        let cfg = CfLossConfig::new(0.3, 6).unwrap();
        let a = gaussian(25, 2, 0.1, 12);
        let b = gaussian(31, 2, -0.4, 13);
        let t = gaussian(6, 2, 0.0, 14);
        let plain = cf_distance_value(&a, &b, &t, &cfg).unwrap();
        let mut g = Graph::new();
        let (av, bv, tv) = (g.constant(&a), g.constant(&b), g.constant(&t));
        let d = cf_distance(&mut g, av, bv, tv, &cfg).unwrap();
        assert!((g.item(d).unwrap() - plain).abs() < 1e-13);
    }

    #[test]
    fn distance_gradient_matches_finite_differences() {
        let a = gaussian(6, 2, 0.0, 15);
        let b = gaussian(7, 2, 0.5, 16);
        let t = gaussian(5, 2, 0.0, 17);
        for alpha in [0.1, 0.5, 0.9] {
            let cfg = CfLossConfig::new(alpha, 5).unwrap();
            let checks = check_scalar_fn("cf_distance", &[a.clone(), b.clone()], |g, v| {
                let tv = g.constant(&t);
                cf_distance(g, v[0], v[1], tv, &cfg)
            })
            .unwrap();
            for c in checks {
                assert!(c.rel_error <= 1e-4, "{} {:e}", c.name, c.rel_error);
            }
        }
        assert_eq!(relative_error(&[1.0], &[1.0]), 0.0);
    }

    fn small_set() -> impl Strategy<Value = Tensor> {
        (1usize..12).prop_flat_map(|n| {
            prop::collection::vec(-3.0f64..3.0, n * 2)
                .prop_map(move |d| Tensor::new(vec![n, 2], d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn metric_axioms(a in small_set(), b in small_set(), c in small_set(),
                         t in prop::collection::vec(-2.0f64..2.0, 8), alpha in 0.0f64..=1.0) {
            let t = Tensor::new(vec![4, 2], t).unwrap();
            let cfg = CfLossConfig::new(alpha, 4).unwrap();
            let ab = cf_distance_value(&a, &b, &t, &cfg).unwrap();
            let ba = cf_distance_value(&b, &a, &t, &cfg).unwrap();
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!(ab >= 0.0);
            prop_assert!(ab <= 2.0);
            // the triangle inequality is a property of the unweighted loss
            let vanilla = CfLossConfig::new(0.5, 4).unwrap();
            let ab = cf_distance_value(&a, &b, &t, &vanilla).unwrap();
            let ac = cf_distance_value(&a, &c, &t, &vanilla).unwrap();
            let bc = cf_distance_value(&b, &c, &t, &vanilla).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn ecf_modulus_bounded(x in small_set(), t in prop::collection::vec(-5.0f64..5.0, 6)) {
            let t = Tensor::new(vec![3, 2], t).unwrap();
            let e = EcfEval::evaluate(&x, &t).unwrap();
            for m in e.modulus() {
                prop_assert!(m <= 1.0 + 1e-9);
            }
        }

        #[test]
        fn decomposition_identity(ar in -1.0f64..1.0, ai in -1.0f64..1.0,
                                  br in -1.0f64..1.0, bi in -1.0f64..1.0) {
            let freqs = col(&[1.0]);
            let a = EcfEval { re: vec![ar], im: vec![ai], freqs: freqs.clone() };
            let b = EcfEval { re: vec![br], im: vec![bi], freqs };
            let c = c_values(&a, &b).unwrap()[0];
            let (amp, phase) = amplitude_phase_terms(&a, &b).unwrap();
            prop_assert!((c - amp[0] - phase[0]).abs() < 1e-12);
        }
    }
}
