//! Frequency draws for the CF loss and latent noise.
//!
//! Frequencies come either from a fixed zero-mean Gaussian or from a scale
//! mixture of normals whose per-dimension scales are produced by the t-net:
//! `t = base ⊙ (softplus(h(σ)) + 1e-4)` with `base` and `σ` standard draws.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nets::BoundMlp;

/// Lower bound added to the softplus scale.
pub const SCALE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreqMode {
    FixedGaussian,
    ScaleMixture,
}

/// How the CF loss draws its frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqSampler {
    mode: FreqMode,
    base_variance: f64,
    dim: usize,
}

impl FreqSampler {
    pub fn new(mode: FreqMode, base_variance: f64, dim: usize) -> Result<Self> {
        if !(base_variance > 0.0) {
            return Err(Error::invalid(format!(
                "base variance must be positive, got {base_variance}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("frequency dimension must be at least 1"));
        }
        Ok(Self {
            mode,
            base_variance,
            dim,
        })
    }

    pub fn mode(&self) -> FreqMode {
        self.mode
    }

    pub fn base_variance(&self) -> f64 {
        self.base_variance
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Records `k` frequencies on `g`. The scale-mixture mode needs the bound
    /// t-net; its draws are differentiable with respect to the t-net parameters.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        k: usize,
        tnet: Option<&BoundMlp>,
        rng: &mut R,
    ) -> Result<Var> {
        let base = sample_fixed(k, self.dim, self.base_variance, rng)?;
        match (self.mode, tnet) {
            (FreqMode::FixedGaussian, _) => Ok(g.constant(&base)),
            (FreqMode::ScaleMixture, Some(h)) => {
                let sigma = sample_fixed(k, self.dim, 1.0, rng)?;
                let base = g.constant(&base);
                let sigma = g.constant(&sigma);
                sample_mixture(g, base, sigma, h)
            }
            (FreqMode::ScaleMixture, None) => {
                Err(Error::invalid("scale-mixture sampling needs a t-net"))
            }
        }
    }
}

/// `k × m` i.i.d. zero-mean Gaussian draws with the given variance.
pub fn sample_fixed<R: Rng + ?Sized>(k: usize, m: usize, variance: f64, rng: &mut R) -> Result<Tensor> {
    if !(variance > 0.0) {
        return Err(Error::invalid(format!("variance must be positive, got {variance}")));
    }
    if k == 0 || m == 0 {
        return Err(Error::invalid("frequency draw needs k, m >= 1"));
    }
    let sd = variance.sqrt();
    let data = (0..k * m)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            sd * e
        })
        .collect();
    Tensor::matrix(k, m, data)
}

/// Reparametrized scale-mixture draw `base ⊙ (softplus(h(σ)) + 1e-4)`.
pub fn sample_mixture(g: &mut Graph, base: Var, sigma_inputs: Var, tnet: &BoundMlp) -> Result<Var> {
    let (bs, ss) = (g.shape(base)?.to_vec(), g.shape(sigma_inputs)?.to_vec());
    if bs.len() != 2 || bs != ss {
        return Err(Error::Shape {
            op: "sample_mixture",
            lhs: bs,
            rhs: ss,
        });
    }
    let h = tnet.forward(g, sigma_inputs)?;
    let hs = g.shape(h)?.to_vec();
    if hs != bs {
        return Err(Error::Shape {
            op: "sample_mixture",
            lhs: bs,
            rhs: hs,
        });
    }
    let sp = g.softplus(h)?;
    let scale = g.shift(sp, SCALE_FLOOR)?;
    g.mul(base, scale)
}

/// Distribution of generator inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentSpec {
    dim: usize,
    variance: f64,
}

impl LatentSpec {
    pub fn new(dim: usize, variance: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("latent dimension must be at least 1"));
        }
        if !(variance > 0.0) {
            return Err(Error::invalid(format!(
                "latent variance must be positive, got {variance}"
            )));
        }
        Ok(Self { dim, variance })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

/// `b × dim` latent draws.
pub fn sample_latent<R: Rng + ?Sized>(b: usize, spec: &LatentSpec, rng: &mut R) -> Result<Tensor> {
    sample_fixed(b, spec.dim, spec.variance, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{finite_difference, relative_error};
    use crate::nets::{Mlp, MlpSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn column_stats(t: &Tensor, j: usize) -> (f64, f64) {
        let n = t.rows() as f64;
        let mean = t.row_iter().map(|r| r[j]).sum::<f64>() / n;
        let var = t.row_iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn fixed_draw_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = 100_000;
        let var = 2.5;
        let t = sample_fixed(k, 3, var, &mut rng).unwrap();
        for j in 0..3 {
            let (mean, v) = column_stats(&t, j);
            assert!(mean.abs() <= 3.0 * (var / k as f64).sqrt());
            assert!((v - var).abs() <= 0.05 * var);
        }
    }

    #[test]
    fn fixed_draw_is_seeded() {
        let a = sample_fixed(5, 2, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_fixed(5, 2, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(sample_fixed(5, 2, 0.0, &mut ChaCha8Rng::seed_from_u64(9)).is_err());
    }

    #[test]
    fn latent_variance_and_validation() {
        let spec = LatentSpec::new(2, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = sample_latent(100_000, &spec, &mut rng).unwrap();
        for j in 0..2 {
            let (_, v) = column_stats(&z, j);
            assert!((v - 0.3).abs() <= 0.05 * 0.3);
        }
        assert!(LatentSpec::new(2, 0.0).is_err());
        assert!(LatentSpec::new(0, 1.0).is_err());
    }

    fn zero_tnet(m: usize) -> Mlp {
        let mut net = Mlp::new(MlpSpec::tnet(m), 0).unwrap();
        for p in net.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        net
    }

    #[test]
    fn zero_tnet_gives_softplus_zero_scale() {
        let net = zero_tnet(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = sample_fixed(4, 2, 1.0, &mut rng).unwrap();
        let sigma = sample_fixed(4, 2, 1.0, &mut rng).unwrap();
        let mut g = Graph::new();
        let h = net.bind(&mut g, false);
        let (bv, sv) = (g.constant(&base), g.constant(&sigma));
        let t = sample_mixture(&mut g, bv, sv, &h).unwrap();
        let scale = 2f64.ln() + 1e-4;
        assert!((scale - 0.6932).abs() < 1e-4);
        for (tv, bv) in g.value(t).unwrap().iter().zip(base.data()) {
            assert!((tv - scale * bv).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_sigma_rows_share_scale() {
        let net = Mlp::new(MlpSpec::tnet(3), 4).unwrap();
        let sigma = Tensor::from_rows(&[vec![0.2, -0.7, 1.1], vec![0.2, -0.7, 1.1]]).unwrap();
        let ones = Tensor::full(&[2, 3], 1.0);
        let mut g = Graph::new();
        let h = net.bind(&mut g, false);
        let (bv, sv) = (g.constant(&ones), g.constant(&sigma));
        let t_var = sample_mixture(&mut g, bv, sv, &h).unwrap();
        let t = g.tensor(t_var).unwrap();
        assert_eq!(t.row(0), t.row(1));
    }

    #[test]
    fn mismatched_batches_rejected() {
        let net = Mlp::new(MlpSpec::tnet(2), 4).unwrap();
        let mut g = Graph::new();
        let h = net.bind(&mut g, false);
        let b = g.constant(&Tensor::zeros(&[3, 2]));
        let s = g.constant(&Tensor::zeros(&[4, 2]));
        assert!(sample_mixture(&mut g, b, s, &h).is_err());
    }

    #[test]
    fn mixture_gradient_wrt_tnet_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(MlpSpec::tnet(2), 6).unwrap();
        let base = sample_fixed(5, 2, 1.0, &mut rng).unwrap();
        let sigma = sample_fixed(5, 2, 1.0, &mut rng).unwrap();
        let x = sample_fixed(7, 2, 1.0, &mut rng).unwrap();

        // loss = mean_j cos(t_j · x_0) + sum t²
        let loss = |net: &Mlp, with_grad: bool| {
            let mut g = Graph::new();
            let h = net.bind(&mut g, with_grad);
            let (bv, sv) = (g.constant(&base), g.constant(&sigma));
            let t = sample_mixture(&mut g, bv, sv, &h).unwrap();
            let xv = g.constant(&x);
            let xt = g.transpose(xv).unwrap();
            let p = g.matmul(t, xt).unwrap();
            let c = g.cos(p).unwrap();
            let sq = g.square(t).unwrap();
            let a = g.mean(c, None).unwrap();
            let b = g.sum(sq, None).unwrap();
            let root = g.add(a, b).unwrap();
            (g, h, root)
        };

        let (mut g, h, root) = loss(&net, true);
        g.backward(root).unwrap();
        let grads = h.param_grads(&g);

        for (idx, analytic) in grads.iter().enumerate() {
            let numeric = finite_difference(
                |x| {
                    let mut probe = net.clone();
                    probe.params_mut()[idx].data_mut().copy_from_slice(x);
                    let (g, _, root) = loss(&probe, false);
                    g.item(root).unwrap()
                },
                net.params()[idx].data(),
                1e-5,
            );
            let err = relative_error(analytic, &numeric);
            assert!(err <= 1e-4, "param {idx}: {err:e}");
        }
    }

    #[test]
    fn mixture_draws_stay_finite_and_centered() {
        let mut net = Mlp::new(MlpSpec::tnet(2), 7).unwrap();
        // push outputs to extremes
        for p in net.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v *= 300.0);
        }
        let sampler = FreqSampler::new(FreqMode::ScaleMixture, 1.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut g = Graph::new();
        let h = net.bind(&mut g, false);
        let t = sampler.draw(&mut g, 20_000, Some(&h), &mut rng).unwrap();
        let t = g.tensor(t).unwrap();
        assert!(t.is_finite());

        let net = Mlp::new(MlpSpec::tnet(2), 7).unwrap();
        let k = 20_000;
        let base = sample_fixed(k, 2, 1.0, &mut rng).unwrap();
        let sigma = sample_fixed(k, 2, 1.0, &mut rng).unwrap();
        let mut g = Graph::new();
        let h = net.bind(&mut g, false);
        let (bv, sv) = (g.constant(&base), g.constant(&sigma));
        let t_var = sample_mixture(&mut g, bv, sv, &h).unwrap();
        let t = g.tensor(t_var).unwrap();
        let raw_var = h.forward(&mut g, sv).unwrap();
        let raw = g.tensor(raw_var).unwrap();
        let max_scale = raw
            .data()
            .iter()
            .map(|v| v.max(0.0) + (-v.abs()).exp().ln_1p() + SCALE_FLOOR)
            .fold(0.0, f64::max);
        for j in 0..2 {
            let (mean, _) = column_stats(&t, j);
            assert!(mean.abs() <= 3.0 * max_scale / (k as f64).sqrt());
        }
    }

    #[test]
    fn scale_mixture_requires_tnet() {
        let sampler = FreqSampler::new(FreqMode::ScaleMixture, 1.0, 2).unwrap();
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sampler.draw(&mut g, 3, None, &mut rng).is_err());
        assert!(FreqSampler::new(FreqMode::FixedGaussian, 0.0, 2).is_err());
    }
}
