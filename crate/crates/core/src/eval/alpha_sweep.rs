//! Generator-only training on the CF loss for a range of `α`, no critic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph, Tensor};
use crate::datasets::MixtureSpec;
use crate::ecf::{cf_distance, CfLossConfig};
use crate::error::{Error, Result};
use crate::freq::{sample_fixed, sample_latent, LatentSpec};
use crate::nets::{Activation, Mlp, MlpSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepBudget {
    pub iterations: usize,
    pub batch: usize,
    pub num_freqs: usize,
    pub lr: f64,
    pub latent_dim: usize,
    pub z_variance: f64,
    pub t_variance: f64,
    pub hidden: Vec<usize>,
    /// Samples used to measure the final spread.
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for SweepBudget {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch: 64,
            num_freqs: 64,
            lr: 2e-3,
            latent_dim: 4,
            z_variance: 1.0,
            t_variance: 1.0,
            hidden: vec![32, 32],
            eval_samples: 4096,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaResult {
    pub alpha: f64,
    /// RMS distance of generated samples from the data mean.
    pub spread: f64,
    pub data_spread: f64,
    /// Mean loss over the last tenth of training.
    pub final_loss: f64,
    pub max_loss: f64,
    /// Iteration at which a non-finite loss appeared, if any.
    pub diverged_at: Option<usize>,
}

impl AlphaResult {
    pub fn finite(&self) -> bool {
        self.diverged_at.is_none() && self.spread.is_finite() && self.max_loss.is_finite()
    }
}

pub const SPREAD_CSV_HEADER: &str = "alpha,spread,data_spread,final_loss,max_loss,diverged_at";

pub fn spread_csv(results: &[AlphaResult]) -> String {
    let mut out = format!("{SPREAD_CSV_HEADER}\n");
    for r in results {
        let div = r.diverged_at.map_or(String::new(), |i| i.to_string());
        out.push_str(&format!(
            "{},{:.10},{:.10},{:.10},{:.10},{div}\n",
            r.alpha, r.spread, r.data_spread, r.final_loss, r.max_loss
        ));
    }
    out
}

fn rms_about(x: &Tensor, centre: &[f64]) -> f64 {
    let m = centre.len();
    let ss: f64 = x
        .data()
        .chunks(m)
        .map(|row| row.iter().zip(centre).map(|(a, c)| (a - c) * (a - c)).sum::<f64>())
        .sum();
    (ss / x.rows() as f64).sqrt()
}

/// Trains one generator with loss weight `alpha`.
pub fn train_alpha(data: &MixtureSpec, alpha: f64, budget: &SweepBudget) -> Result<AlphaResult> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    if budget.iterations == 0 || budget.batch == 0 || budget.eval_samples == 0 {
        return Err(Error::invalid("sweep budget needs positive iterations and batch sizes"));
    }
    let dim = data.dim();
    let cfg = CfLossConfig::new(alpha, budget.num_freqs)?;
    let latent = LatentSpec::new(budget.latent_dim, budget.z_variance)?;
    let dims = [&[budget.latent_dim][..], &budget.hidden, &[dim]].concat();
    let spec = MlpSpec::new(dims, Activation::Relu, Activation::Identity)?;
    let mut gen = Mlp::new(spec, budget.seed)?;
    let adam = AdamConfig {
        lr: budget.lr,
        ..AdamConfig::default()
    };
    let mut opt = AdamState::new(gen.params());
    // same stream for every α so runs differ only in the loss weight
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);

    let mut losses = Vec::with_capacity(budget.iterations);
    let mut diverged_at = None;
    for it in 1..=budget.iterations {
        let x = data.sample(budget.batch, &mut rng)?;
        let z = sample_latent(budget.batch, &latent, &mut rng)?;
        let t = sample_fixed(budget.num_freqs, dim, budget.t_variance, &mut rng)?;
        let mut g = Graph::new();
        let bound = gen.bind(&mut g, true);
        let (xv, zv, tv) = (g.constant(&x), g.constant(&z), g.constant(&t));
        let y = bound.forward(&mut g, zv)?;
        let loss = cf_distance(&mut g, y, xv, tv, &cfg)?;
        let value = g.item(loss)?;
        if !value.is_finite() {
            diverged_at = Some(it);
            break;
        }
        losses.push(value);
        g.backward(loss)?;
        gen.load_grads(&g, &bound)?;
        adam_step(gen.params_mut(), &mut opt, &adam)?;
    }

    let real = data.sample(budget.eval_samples, &mut rng)?;
    let centre: Vec<f64> = (0..dim)
        .map(|j| real.data().iter().skip(j).step_by(dim).sum::<f64>() / real.rows() as f64)
        .collect();
    let z = sample_latent(budget.eval_samples, &latent, &mut rng)?;
    let fake = gen.predict(&z)?;
    let tail = &losses[losses.len() - losses.len() / 10..];
    Ok(AlphaResult {
        alpha,
        spread: rms_about(&fake, &centre),
        data_spread: rms_about(&real, &centre),
        final_loss: if tail.is_empty() {
            f64::NAN
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        },
        max_loss: losses.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
        diverged_at,
    })
}

/// Runs every `α` in parallel; results keep the order of `alphas`.
pub fn alpha_sweep(data: &MixtureSpec, alphas: &[f64], budget: &SweepBudget) -> Result<Vec<AlphaResult>> {
    if alphas.is_empty() {
        return Err(Error::invalid("alpha list is empty"));
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = alphas
            .iter()
            .map(|&a| s.spawn(move || train_alpha(data, a, budget)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("alpha run panicked"))
            .collect()
    })
}
