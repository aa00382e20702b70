//! The reciprocal adversarial training loop.
//!
//! Each iteration runs one critic step and then one generator step, both with
//! fresh draws of data, latent noise and frequencies.
//!
//! Critic (and t-net) minimise
//! `C(f(x̄), z) − C(f(g(z)), z) + λ·mean‖z − f(g(z))‖²`;
//! the generator minimises `C(f(g(z)), f(x̄))`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph, Tensor, Var};
use crate::datasets::DataSource;
use crate::ecf::{cf_distance, CfLossConfig};
use crate::error::{Error, Result};
use crate::freq::{sample_fixed, sample_latent, sample_mixture, LatentSpec};
use crate::nets::{build_default_nets, Activation, BoundMlp, Mlp, Networks};

pub const TELEMETRY_WINDOW: usize = 500;
pub const TELEMETRY_FLUSH_EVERY: usize = 100;
pub const TELEMETRY_HEADER: &str = "iteration,critic_loss,gen_loss,reciprocal_loss,embed_dist";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_data: usize,
    pub batch_gen: usize,
    pub batch_freq: usize,
    pub batch_sigma: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub latent_dim: usize,
    pub z_variance: f64,
    pub t_variance: f64,
    pub use_tnet: bool,
    pub use_anchor: bool,
    pub use_reciprocal: bool,
    pub hidden: Vec<usize>,
    pub generator_output: Activation,
    pub iterations: usize,
    pub checkpoint_interval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_data: 64,
            batch_gen: 64,
            batch_freq: 64,
            batch_sigma: 64,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            lambda: 1.0,
            alpha: 0.5,
            latent_dim: 2,
            z_variance: 0.3,
            t_variance: 1.0,
            use_tnet: true,
            use_anchor: true,
            use_reciprocal: true,
            hidden: vec![128, 128],
            generator_output: Activation::Identity,
            iterations: 5000,
            checkpoint_interval: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let batches = [self.batch_data, self.batch_gen, self.batch_freq, self.batch_sigma];
        if batches.contains(&0) {
            return Err(Error::invalid("batch sizes must be at least 1"));
        }
        if self.use_tnet && self.batch_freq != self.batch_sigma {
            return Err(Error::invalid(format!(
                "t-net draws are paired: batch_freq {} must equal batch_sigma {}",
                self.batch_freq, self.batch_sigma
            )));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("adam betas must lie in [0, 1)"));
        }
        if self.latent_dim == 0 {
            return Err(Error::invalid("latent_dim must be at least 1"));
        }
        if !(self.z_variance > 0.0) || !(self.t_variance > 0.0) {
            return Err(Error::invalid("noise variances must be positive"));
        }
        Ok(())
    }

    /// Weight of the reciprocal term actually applied.
    pub fn effective_lambda(&self) -> f64 {
        if self.use_reciprocal {
            self.lambda
        } else {
            0.0
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryRecord {
    pub iteration: usize,
    pub critic_loss: f64,
    pub gen_loss: f64,
    pub reciprocal_loss: f64,
    pub embed_dist: f64,
}

impl TelemetryRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.iteration, self.critic_loss, self.gen_loss, self.reciprocal_loss, self.embed_dist
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    CriticLoss,
    GenLoss,
    ReciprocalLoss,
    EmbedDist,
}

impl Metric {
    fn of(self, r: &TelemetryRecord) -> f64 {
        match self {
            Metric::CriticLoss => r.critic_loss,
            Metric::GenLoss => r.gen_loss,
            Metric::ReciprocalLoss => r.reciprocal_loss,
            Metric::EmbedDist => r.embed_dist,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTelemetry {
    records: Vec<TelemetryRecord>,
}

impl TrainTelemetry {
    pub fn records(&self) -> &[TelemetryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, r: TelemetryRecord) {
        self.records.push(r);
    }

    /// Mean of `metric` over the window ending at 1-based `iteration`.
    pub fn moving_average(&self, metric: Metric, iteration: usize) -> Option<f64> {
        if iteration == 0 || iteration > self.records.len() {
            return None;
        }
        let start = iteration.saturating_sub(TELEMETRY_WINDOW);
        let w = &self.records[start..iteration];
        Some(w.iter().map(|r| metric.of(r)).sum::<f64>() / w.len() as f64)
    }

    /// The last `TELEMETRY_WINDOW` records.
    pub fn recent(&self) -> Vec<TelemetryRecord> {
        let start = self.records.len().saturating_sub(TELEMETRY_WINDOW);
        self.records[start..].to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticLosses {
    /// The adversarial part `L`.
    pub critic_loss: f64,
    pub reciprocal_loss: f64,
    /// `C(f(x̄), z)`.
    pub embed_dist: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorLosses {
    pub gen_loss: f64,
    pub grad_norm: f64,
}

/// Random inputs of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDraws {
    pub z: Tensor,
    pub base: Tensor,
    pub sigma: Option<Tensor>,
}

/// Networks, optimiser moments and loss settings of a run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub nets: Networks,
    config: TrainConfig,
    cf: CfLossConfig,
    latent: LatentSpec,
    adam: AdamConfig,
    critic_opt: AdamState,
    tnet_opt: AdamState,
    gen_opt: AdamState,
}

impl TrainState {
    pub fn new(config: TrainConfig, data_dim: usize) -> Result<Self> {
        config.validate()?;
        let nets = build_default_nets(
            data_dim,
            config.latent_dim,
            &config.hidden,
            config.generator_output,
            config.seed,
        )?;
        Self::from_nets(config, nets)
    }

    pub fn from_nets(config: TrainConfig, nets: Networks) -> Result<Self> {
        config.validate()?;
        let m = config.latent_dim;
        if nets.critic.spec().output_dim() != m || nets.generator.spec().input_dim() != m {
            return Err(Error::invalid("network widths disagree with latent_dim"));
        }
        if nets.critic.spec().input_dim() != nets.generator.spec().output_dim() {
            return Err(Error::invalid("critic input width differs from generator output"));
        }
        Ok(Self {
            cf: CfLossConfig::new(config.alpha, config.batch_freq)?,
            latent: LatentSpec::new(m, config.z_variance)?,
            adam: config.adam(),
            critic_opt: AdamState::new(nets.critic.params()),
            tnet_opt: AdamState::new(nets.tnet.params()),
            gen_opt: AdamState::new(nets.generator.params()),
            nets,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn data_dim(&self) -> usize {
        self.nets.critic.spec().input_dim()
    }

    /// Draws `z`, `t` and (with the t-net) `σ`, in that order.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<StepDraws> {
        let c = &self.config;
        let z = sample_latent(c.batch_gen, &self.latent, rng)?;
        let base = sample_fixed(c.batch_freq, c.latent_dim, c.t_variance, rng)?;
        let sigma = if c.use_tnet {
            Some(sample_fixed(c.batch_sigma, c.latent_dim, 1.0, rng)?)
        } else {
            None
        };
        Ok(StepDraws { z, base, sigma })
    }

    fn record_freqs(&self, g: &mut Graph, d: &StepDraws, tnet: Option<&BoundMlp>) -> Result<Var> {
        let base = g.constant(&d.base);
        match (&d.sigma, tnet) {
            (Some(sigma), Some(h)) => {
                let s = g.constant(sigma);
                sample_mixture(g, base, s, h)
            }
            _ => Ok(base),
        }
    }

    fn check_batch(&self, batch_real: &Tensor) -> Result<()> {
        if batch_real.rank() != 2 || batch_real.cols() != self.data_dim() || batch_real.rows() == 0 {
            return Err(Error::Shape {
                op: "training batch",
                lhs: batch_real.shape().to_vec(),
                rhs: vec![self.config.batch_data, self.data_dim()],
            });
        }
        Ok(())
    }

    /// Critic objective for fixed draws, without updating anything.
    pub fn critic_losses(&self, batch_real: &Tensor, draws: &StepDraws) -> Result<CriticLosses> {
        let mut g = Graph::new();
        Ok(self.critic_graph(&mut g, batch_real, draws, false)?.1)
    }

    fn critic_graph(
        &self,
        g: &mut Graph,
        batch_real: &Tensor,
        d: &StepDraws,
        with_grad: bool,
    ) -> Result<((Var, BoundMlp, Option<BoundMlp>), CriticLosses)> {
        self.check_batch(batch_real)?;
        let c = &self.config;
        let critic = self.nets.critic.bind(g, with_grad);
        let gen = self.nets.generator.bind(g, false);
        let tnet = c.use_tnet.then(|| self.nets.tnet.bind(g, with_grad));
        let t = self.record_freqs(g, d, tnet.as_ref())?;

        let x = g.constant(batch_real);
        let z = g.constant(&d.z);
        let fx = critic.forward(g, x)?;
        let gz = gen.forward(g, z)?;
        let fgz = critic.forward(g, gz)?;

        let embed = cf_distance(g, fx, z, t, &self.cf)?;
        let adv = if c.use_anchor {
            let fake = cf_distance(g, fgz, z, t, &self.cf)?;
            g.sub(embed, fake)?
        } else {
            let d = cf_distance(g, fgz, fx, t, &self.cf)?;
            g.neg(d)?
        };
        let recip = reciprocal_graph(g, z, fgz)?;
        let weighted = g.scale(recip, c.effective_lambda())?;
        let total = g.add(adv, weighted)?;

        let losses = CriticLosses {
            critic_loss: g.item(adv)?,
            reciprocal_loss: g.item(recip)?,
            embed_dist: g.item(embed)?,
        };
        Ok(((total, critic, tnet), losses))
    }

    /// One critic (and t-net) update. Generator parameters are not touched.
    pub fn critic_step<R: Rng + ?Sized>(&mut self, batch_real: &Tensor, rng: &mut R) -> Result<CriticLosses> {
        let draws = self.draw(rng)?;
        self.critic_step_with(batch_real, &draws)
    }

    pub fn critic_step_with(&mut self, batch_real: &Tensor, draws: &StepDraws) -> Result<CriticLosses> {
        let mut g = Graph::new();
        let ((total, critic, tnet), losses) = self.critic_graph(&mut g, batch_real, draws, true)?;
        let total_value = g.item(total)?;
        if !total_value.is_finite() {
            return Err(Error::NonFinite {
                what: "critic loss",
                iteration: 0,
                recent: Vec::new(),
            });
        }
        g.backward(total)?;
        self.nets.critic.load_grads(&g, &critic)?;
        update(self.nets.critic.params_mut(), &mut self.critic_opt, &self.adam, "critic parameters")?;
        if let Some(h) = tnet {
            self.nets.tnet.load_grads(&g, &h)?;
            update(self.nets.tnet.params_mut(), &mut self.tnet_opt, &self.adam, "t-net parameters")?;
        }
        Ok(losses)
    }

    /// Generator objective `C(f(g(z)), f(x̄))` for fixed draws.
    pub fn generator_loss(&self, batch_real: &Tensor, draws: &StepDraws) -> Result<f64> {
        let mut g = Graph::new();
        let (loss, _) = self.generator_graph(&mut g, batch_real, draws, false)?;
        g.item(loss)
    }

    fn generator_graph(
        &self,
        g: &mut Graph,
        batch_real: &Tensor,
        d: &StepDraws,
        with_grad: bool,
    ) -> Result<(Var, BoundMlp)> {
        self.check_batch(batch_real)?;
        let critic = self.nets.critic.bind(g, false);
        let gen = self.nets.generator.bind(g, with_grad);
        let tnet = self.config.use_tnet.then(|| self.nets.tnet.bind(g, false));
        let t = self.record_freqs(g, d, tnet.as_ref())?;
        let x = g.constant(batch_real);
        let z = g.constant(&d.z);
        let fx = critic.forward(g, x)?;
        let gz = gen.forward(g, z)?;
        let fgz = critic.forward(g, gz)?;
        Ok((cf_distance(g, fgz, fx, t, &self.cf)?, gen))
    }

    /// One generator update. Critic and t-net parameters are not touched.
    pub fn generator_step<R: Rng + ?Sized>(&mut self, batch_real: &Tensor, rng: &mut R) -> Result<GeneratorLosses> {
        let draws = self.draw(rng)?;
        self.generator_step_with(batch_real, &draws)
    }

    pub fn generator_step_with(&mut self, batch_real: &Tensor, draws: &StepDraws) -> Result<GeneratorLosses> {
        let mut g = Graph::new();
        let (loss, gen) = self.generator_graph(&mut g, batch_real, draws, true)?;
        let gen_loss = g.item(loss)?;
        if !gen_loss.is_finite() {
            return Err(Error::NonFinite {
                what: "generator loss",
                iteration: 0,
                recent: Vec::new(),
            });
        }
        g.backward(loss)?;
        let grads = gen.param_grads(&g);
        let grad_norm = grads.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        self.nets.generator.load_grads(&g, &gen)?;
        update(self.nets.generator.params_mut(), &mut self.gen_opt, &self.adam, "generator parameters")?;
        Ok(GeneratorLosses { gen_loss, grad_norm })
    }

    /// Draws `n` generated samples.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Tensor> {
        let z = sample_latent(n, &self.latent, rng)?;
        self.nets.generator.predict(&z)
    }
}

fn reciprocal_graph(g: &mut Graph, z: Var, fgz: Var) -> Result<Var> {
    let diff = g.sub(z, fgz)?;
    let sq = g.square(diff)?;
    let per_row = g.sum(sq, Some(1))?;
    g.mean(per_row, None)
}

/// Adam step, then drop the consumed gradients and refuse non-finite weights.
fn update(params: &mut [Tensor], opt: &mut AdamState, adam: &AdamConfig, what: &'static str) -> Result<()> {
    adam_step(params, opt, adam)?;
    params.iter_mut().for_each(Tensor::clear_grad);
    if params.iter().all(Tensor::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what,
            iteration: 0,
            recent: Vec::new(),
        })
    }
}

/// `(1/b) Σᵢ ‖zᵢ − f(g(zᵢ))‖²`.
pub fn reciprocal_loss(z: &Tensor, f: &Mlp, g: &Mlp) -> Result<f64> {
    let back = f.predict(&g.predict(z)?)?;
    if back.shape() != z.shape() {
        return Err(Error::Shape {
            op: "reciprocal_loss",
            lhs: z.shape().to_vec(),
            rhs: back.shape().to_vec(),
        });
    }
    let b = z.rows() as f64;
    Ok(z.data().iter().zip(back.data()).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / b)
}

/// Where a run writes its telemetry and checkpoints.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub telemetry: TrainTelemetry,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const FINAL_CHECKPOINT_FILE: &str = "final.bin";
pub const TELEMETRY_FILE: &str = "telemetry.csv";

struct CsvSink {
    out: BufWriter<File>,
}

impl CsvSink {
    fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{TELEMETRY_HEADER}")?;
        Ok(Self { out })
    }
}

/// Runs `config.iterations` critic/generator iterations. The run RNG is
/// seeded from `config.seed` and drives data batches and all noise draws.
pub fn train(config: TrainConfig, data: &mut dyn DataSource) -> Result<TrainOutcome> {
    train_with(config, data, &TrainOptions::default())
}

pub fn train_with(config: TrainConfig, data: &mut dyn DataSource, opts: &TrainOptions) -> Result<TrainOutcome> {
    let mut state = TrainState::new(config, data.dim())?;
    let telemetry = run_iterations(&mut state, data, opts)?;
    Ok(TrainOutcome { state, telemetry })
}

/// Continues training an existing state for `state.config().iterations`.
pub fn run_iterations(state: &mut TrainState, data: &mut dyn DataSource, opts: &TrainOptions) -> Result<TrainTelemetry> {
    let cfg = state.config().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut telemetry = TrainTelemetry::default();
    let mut sink = match &opts.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(CsvSink::create(&dir.join(TELEMETRY_FILE))?)
        }
        None => None,
    };
    let fail = |what, iteration, t: &TrainTelemetry, sink: &mut Option<CsvSink>| {
        if let Some(s) = sink {
            // best effort: the abort itself is the error worth reporting
            let _ = s.out.flush();
        }
        Error::NonFinite {
            what,
            iteration,
            recent: t.recent(),
        }
    };

    for it in 1..=cfg.iterations {
        let batch = data.batch(cfg.batch_data, &mut rng)?;
        if !batch.is_finite() {
            return Err(fail("data batch", it, &telemetry, &mut sink));
        }
        let c = match state.critic_step(&batch, &mut rng) {
            Err(Error::NonFinite { what, .. }) => return Err(fail(what, it, &telemetry, &mut sink)),
            other => other?,
        };
        let batch = data.batch(cfg.batch_data, &mut rng)?;
        if !batch.is_finite() {
            return Err(fail("data batch", it, &telemetry, &mut sink));
        }
        let gl = match state.generator_step(&batch, &mut rng) {
            Err(Error::NonFinite { what, .. }) => return Err(fail(what, it, &telemetry, &mut sink)),
            other => other?,
        };
        let rec = TelemetryRecord {
            iteration: it,
            critic_loss: c.critic_loss,
            gen_loss: gl.gen_loss,
            reciprocal_loss: c.reciprocal_loss,
            embed_dist: c.embed_dist,
        };
        if ![rec.critic_loss, rec.reciprocal_loss, rec.embed_dist].iter().all(|v| v.is_finite()) {
            return Err(fail("telemetry", it, &telemetry, &mut sink));
        }
        telemetry.push(rec);
        if let Some(s) = sink.as_mut() {
            writeln!(s.out, "{}", rec.csv_line())?;
            if it % TELEMETRY_FLUSH_EVERY == 0 {
                s.out.flush()?;
            }
        }
        if let Some(dir) = &opts.out_dir {
            if cfg.checkpoint_interval > 0 && it % cfg.checkpoint_interval == 0 {
                state.nets.save(&dir.join(CHECKPOINT_FILE))?;
            }
        }
    }
    if let Some(mut s) = sink {
        s.out.flush()?;
    }
    if let Some(dir) = &opts.out_dir {
        state.nets.save(&dir.join(FINAL_CHECKPOINT_FILE))?;
    }
    Ok(telemetry)
}
