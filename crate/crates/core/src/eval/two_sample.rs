//! Permutation two-sample test on the CF distance.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::Tensor;
use crate::ecf::{cf_distance_from_ecf, CfLossConfig, EcfEval};
use crate::error::{Error, Result};
use crate::freq::sample_fixed;

pub const MIN_PERMUTATIONS: usize = 100;
/// Permuted statistics within this of the observed one count as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Per-sample phasors `(cos tⱼᵀxᵢ, sin tⱼᵀxᵢ)` of the pooled sample, so that
/// relabelling only re-sums rows.
struct Phasors {
    k: usize,
    freqs: Tensor,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Phasors {
    fn new(pooled: &[&[f64]], freqs: &Tensor) -> Self {
        let k = freqs.rows();
        let mut cos = Vec::with_capacity(pooled.len() * k);
        let mut sin = Vec::with_capacity(pooled.len() * k);
        for x in pooled {
            for t in freqs.row_iter() {
                let (s, c) = t.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>().sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Self {
            k,
            freqs: freqs.clone(),
            cos,
            sin,
        }
    }

    fn ecf(&self, idx: &[usize]) -> Result<EcfEval> {
        let mut re = vec![0.0; self.k];
        let mut im = vec![0.0; self.k];
        for &i in idx {
            let row = i * self.k..(i + 1) * self.k;
            re.iter_mut().zip(&self.cos[row.clone()]).for_each(|(a, b)| *a += b);
            im.iter_mut().zip(&self.sin[row]).for_each(|(a, b)| *a += b);
        }
        let n = idx.len() as f64;
        re.iter_mut().chain(im.iter_mut()).for_each(|v| *v /= n);
        EcfEval::from_parts(re, im, self.freqs.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// `p = (1 + #{perm ≥ obs}) / (1 + num_perms)` under pooled relabelling.
pub fn permutation_test<R: Rng + ?Sized>(
    a: &Tensor,
    b: &Tensor,
    freqs: &Tensor,
    cfg: &CfLossConfig,
    num_perms: usize,
    rng: &mut R,
) -> Result<TestOutcome> {
    if a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols() || freqs.cols() != a.cols() {
        return Err(Error::Shape {
            op: "permutation_test",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    if a.rows() < 2 || b.rows() < 2 {
        return Err(Error::invalid(format!(
            "each group needs at least 2 samples, got {} and {}",
            a.rows(),
            b.rows()
        )));
    }
    if num_perms < MIN_PERMUTATIONS {
        return Err(Error::invalid(format!(
            "need at least {MIN_PERMUTATIONS} permutations, got {num_perms}"
        )));
    }
    let pooled: Vec<&[f64]> = a.row_iter().chain(b.row_iter()).collect();
    let table = Phasors::new(&pooled, freqs);
    let na = a.rows();
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    let stat = |idx: &[usize]| -> Result<f64> {
        cf_distance_from_ecf(&table.ecf(&idx[..na])?, &table.ecf(&idx[na..])?, cfg)
    };
    let observed = stat(&idx)?;
    let mut exceed = 0usize;
    for _ in 0..num_perms {
        idx.shuffle(rng);
        if stat(&idx)? >= observed - TIE_TOLERANCE {
            exceed += 1;
        }
    }
    Ok(TestOutcome {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + num_perms) as f64,
    })
}

/// Repeated independent tests of `N(0,1)` against `N(shift,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub n: usize,
    pub shift: f64,
    pub trials: usize,
    pub num_perms: usize,
    pub num_freqs: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n: 256,
            shift: 1.0,
            trials: 200,
            num_perms: 200,
            num_freqs: 16,
            level: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutcome {
    pub outcomes: Vec<TestOutcome>,
    /// Share of trials with `p ≤ level`.
    pub rejection_rate: f64,
}

fn gaussian_column<R: Rng + ?Sized>(n: usize, mean: f64, rng: &mut R) -> Result<Tensor> {
    let v = (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            mean + e
        })
        .collect();
    Tensor::matrix(n, 1, v)
}

/// Each trial uses its own ChaCha stream, so trials are independent of
/// how many came before.
pub fn two_sample_study(cfg: &StudyConfig) -> Result<StudyOutcome> {
    if cfg.trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::invalid(format!("level {} outside (0, 1)", cfg.level)));
    }
    let loss = CfLossConfig::new(0.5, cfg.num_freqs)?;
    let mut outcomes = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(trial as u64);
        let a = gaussian_column(cfg.n, 0.0, &mut rng)?;
        let b = gaussian_column(cfg.n, cfg.shift, &mut rng)?;
        let t = sample_fixed(cfg.num_freqs, 1, 1.0, &mut rng)?;
        outcomes.push(permutation_test(&a, &b, &t, &loss, cfg.num_perms, &mut rng)?);
    }
    let rejected = outcomes.iter().filter(|o| o.p_value <= cfg.level).count();
    Ok(StudyOutcome {
        rejection_rate: rejected as f64 / cfg.trials as f64,
        outcomes,
    })
}
