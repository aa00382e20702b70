//! Phase/amplitude swap between two image sets.
//!
//! For a diagonal Gaussian the CF phase is `tᵀμ` and the amplitude is
//! `exp(−tᵀΣt/2)`, so exchanging phase and amplitude between two fits is the
//! same as exchanging their means and variances.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Per-pixel independent Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagGaussian {
    /// Maximum-likelihood fit with variances floored at [`VARIANCE_FLOOR`].
    pub fn fit(samples: &Tensor) -> Result<Self> {
        if samples.rank() != 2 || samples.rows() == 0 {
            return Err(Error::invalid("cannot fit an empty sample set"));
        }
        let (n, m) = (samples.rows() as f64, samples.cols());
        let mut mean = vec![0.0; m];
        for row in samples.row_iter() {
            mean.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        mean.iter_mut().for_each(|v| *v /= n);
        let mut var = vec![0.0; m];
        for row in samples.row_iter() {
            for ((v, x), mu) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - mu) * (x - mu);
            }
        }
        var.iter_mut().for_each(|v| *v = (*v / n).max(VARIANCE_FLOOR));
        Ok(Self { mean, var })
    }

    /// Mean of `self`, variance of `other`.
    pub fn with_variance_of(&self, other: &DiagGaussian) -> Self {
        Self {
            mean: self.mean.clone(),
            var: other.var.clone(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Tensor> {
        let m = self.mean.len();
        let mut data = Vec::with_capacity(n * m);
        for _ in 0..n {
            for (mu, v) in self.mean.iter().zip(&self.var) {
                let e: f64 = StandardNormal.sample(rng);
                data.push(mu + v.sqrt() * e);
            }
        }
        Tensor::matrix(n, m, data)
    }
}

#[derive(Debug, Clone)]
pub struct SwapOutput {
    pub fit_a: DiagGaussian,
    pub fit_b: DiagGaussian,
    /// `(μ_A, Σ_A)`
    pub a: Tensor,
    /// `(μ_B, Σ_B)`
    pub b: Tensor,
    /// `(μ_A, Σ_B)`: phase of A, amplitude of B.
    pub phase_a_amp_b: Tensor,
    /// `(μ_B, Σ_A)`: phase of B, amplitude of A.
    pub phase_b_amp_a: Tensor,
}

impl SwapOutput {
    pub fn sets(&self) -> [(&'static str, &Tensor); 4] {
        [
            ("a", &self.a),
            ("b", &self.b),
            ("phase_a_amp_b", &self.phase_a_amp_b),
            ("phase_b_amp_a", &self.phase_b_amp_a),
        ]
    }
}

pub fn swap_experiment<R: Rng + ?Sized>(
    set_a: &Tensor,
    set_b: &Tensor,
    n_out: usize,
    rng: &mut R,
) -> Result<SwapOutput> {
    if set_a.rank() != 2 || set_b.rank() != 2 || set_a.rows() == 0 || set_b.rows() == 0 {
        return Err(Error::invalid("swap needs two non-empty image sets"));
    }
    if set_a.cols() != set_b.cols() {
        return Err(Error::Shape {
            op: "swap_experiment",
            lhs: set_a.shape().to_vec(),
            rhs: set_b.shape().to_vec(),
        });
    }
    if n_out == 0 {
        return Err(Error::invalid("n_out must be at least 1"));
    }
    let fit_a = DiagGaussian::fit(set_a)?;
    let fit_b = DiagGaussian::fit(set_b)?;
    let a = fit_a.sample(n_out, rng)?;
    let b = fit_b.sample(n_out, rng)?;
    let phase_a_amp_b = fit_a.with_variance_of(&fit_b).sample(n_out, rng)?;
    let phase_b_amp_a = fit_b.with_variance_of(&fit_a).sample(n_out, rng)?;
    Ok(SwapOutput {
        fit_a,
        fit_b,
        a,
        b,
        phase_a_amp_b,
        phase_b_amp_a,
    })
}

/// Index of the nearest class mean for every row.
pub fn nearest_mean_labels(samples: &Tensor, means: &[&[f64]]) -> Vec<usize> {
    samples
        .row_iter()
        .map(|row| {
            let d2 = |m: &[f64]| row.iter().zip(m).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            (0..means.len())
                .min_by(|&i, &j| d2(means[i]).total_cmp(&d2(means[j])))
                .unwrap_or(0)
        })
        .collect()
}

/// Share of rows classified to `class`.
pub fn fraction_assigned(samples: &Tensor, means: &[&[f64]], class: usize) -> f64 {
    let labels = nearest_mean_labels(samples, means);
    labels.iter().filter(|&&l| l == class).count() as f64 / labels.len().max(1) as f64
}
