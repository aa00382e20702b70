//! Executable property suites for the CF distance: metric axioms,
//! boundedness, analytic-CF agreement, the amplitude/phase identity, gradient
//! correctness, point-mass extrema and the reciprocal equivalence.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::gradcheck::{check_all_ops, check_scalar_fn};
use crate::autodiff::{Tensor, SQRT_EPS};
use crate::datasets::{EllipticalSpec, Family};
use crate::ecf::{
    amplitude_phase_terms, c_alpha_values, c_values, cf_distance, cf_distance_from_ecf, CfLossConfig,
    EcfEval,
};
use crate::error::Result;
use crate::freq::sample_fixed;
use crate::nets::{Activation, Mlp, MlpSpec};
use crate::trainer::reciprocal_loss;

/// Relative room for rounding in `c` and in the mean over frequencies.
pub const CEILING_ROUNDING: f64 = 1e-13;

/// Largest value the smoothed distance can take, `sqrt(4 + ε)`, widened by
/// [`CEILING_ROUNDING`].
pub fn distance_ceiling() -> f64 {
    (4.0 + SQRT_EPS).sqrt() * (1.0 + CEILING_ROUNDING)
}

pub const TRIANGLE_TOL: f64 = 1e-9;
pub const IDENTITY_TOL: f64 = 1e-12;
pub const OP_GRAD_TOL: f64 = 1e-5;
pub const END_TO_END_GRAD_TOL: f64 = 1e-4;

/// Deliberate defects for exercising the harness itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// `c(t) = Δre² − Δim²` instead of `Δre² + Δim²`.
    FlipSign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub trials: usize,
    pub samples: usize,
    pub num_freqs: usize,
    pub analytic_samples: usize,
    pub fault: Fault,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 500,
            samples: 512,
            num_freqs: 64,
            analytic_samples: 100_000,
            fault: Fault::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    /// Headline measurement, compared against `limit`.
    pub measured: f64,
    pub limit: f64,
    pub detail: String,
    pub counterexample: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub results: Vec<SuiteResult>,
    /// Largest CF distance observed anywhere in the run.
    pub max_distance: f64,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<14} {:<6} {:>14} {:>14}  detail\n", "suite", "result", "measured", "limit");
        for r in &self.results {
            out.push_str(&format!(
                "{:<14} {:<6} {:>14.6e} {:>14.6e}  {}\n",
                r.name,
                if r.passed { "PASS" } else { "FAIL" },
                r.measured,
                r.limit,
                r.detail
            ));
            if let Some(c) = &r.counterexample {
                out.push_str(&format!("    counterexample: {c}\n"));
            }
        }
        out.push_str(&format!("max observed distance: {:.15}\n", self.max_distance));
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("suite,passed,measured,limit,seconds\n");
        for r in &self.results {
            out.push_str(&format!(
                "{},{},{:e},{:e},{:.3}\n",
                r.name,
                u8::from(r.passed),
                r.measured,
                r.limit,
                r.seconds
            ));
        }
        out
    }
}

fn distance(a: &EcfEval, b: &EcfEval, cfg: &CfLossConfig, fault: Fault) -> Result<f64> {
    match fault {
        Fault::None => cf_distance_from_ecf(a, b, cfg),
        Fault::FlipSign => {
            let k = a.re.len() as f64;
            Ok((0..a.re.len())
                .map(|j| {
                    let (dr, di) = (a.re[j] - b.re[j], a.im[j] - b.im[j]);
                    (dr * dr - di * di + cfg.epsilon()).sqrt()
                })
                .sum::<f64>()
                / k)
        }
    }
}

fn random_set<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Tensor> {
    let family = match rng.random_range(0..4) {
        0 => Family::Gaussian,
        1 => Family::Laplace,
        2 => Family::StudentT(rng.random_range(1.5..8.0)),
        _ => Family::Cauchy,
    };
    let mu = vec![rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
    let sigma = vec![rng.random_range(0.05..2.0), rng.random_range(0.05..2.0)];
    EllipticalSpec::new(family, mu, sigma)?.sample(n, rng)
}

/// Symmetry (bit-exact), non-negativity and the triangle inequality over
/// random triples sharing one frequency draw.
pub fn axioms_suite(cfg: &SuiteConfig, max_seen: &mut f64) -> Result<SuiteResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let loss = CfLossConfig::new(0.5, cfg.num_freqs)?;
    let mut worst = f64::NEG_INFINITY;
    let mut counterexample = None;
    let mut asym = 0usize;
    let mut negative = 0usize;
    for trial in 0..cfg.trials {
        let t = sample_fixed(cfg.num_freqs, 2, 1.0, &mut rng)?;
        let sets = [
            random_set(cfg.samples, &mut rng)?,
            random_set(cfg.samples, &mut rng)?,
            random_set(cfg.samples, &mut rng)?,
        ];
        let e: Vec<EcfEval> = sets.iter().map(|s| EcfEval::evaluate(s, &t)).collect::<Result<_>>()?;
        let mut d = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                d[i][j] = distance(&e[i], &e[j], &loss, cfg.fault)?;
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                *max_seen = max_seen.max(d[i][j]);
                if d[i][j].to_bits() != d[j][i].to_bits() {
                    asym += 1;
                }
                if !(d[i][j] >= 0.0) {
                    negative += 1;
                }
                for k in 0..3 {
                    let excess = d[i][k] - (d[i][j] + d[j][k]);
                    let excess = if excess.is_nan() { f64::INFINITY } else { excess };
                    if excess > worst {
                        worst = excess;
                        if excess > TRIANGLE_TOL {
                            counterexample = Some(format!(
                                "trial {trial}: d({i},{k})={:.6e} > d({i},{j})+d({j},{k})={:.6e}",
                                d[i][k],
                                d[i][j] + d[j][k]
                            ));
                        }
                    }
                }
            }
        }
    }
    let passed = asym == 0 && negative == 0 && worst <= TRIANGLE_TOL;
    if counterexample.is_none() && !passed {
        counterexample = Some(format!("{asym} asymmetric pairs, {negative} negative or NaN distances"));
    }
    Ok(SuiteResult {
        name: "axioms",
        passed,
        measured: worst,
        limit: TRIANGLE_TOL,
        detail: format!(
            "{} triples, n={}, asymmetric={asym}, negative={negative}, max triangle excess",
            cfg.trials, cfg.samples
        ),
        counterexample,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Adversarial point masses: mass at 0 against mass at `x` with `tᵀx = π`
/// for every frequency, across α.
pub fn boundedness_suite(cfg: &SuiteConfig, max_seen: &mut f64) -> Result<SuiteResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xb0);
    let mut local_max = f64::NEG_INFINITY;
    for _ in 0..200 {
        let s: f64 = rng.random_range(0.1..5.0);
        // every frequency is ±s along the first axis
        let t_data: Vec<f64> = (0..cfg.num_freqs)
            .flat_map(|_| [if rng.random::<bool>() { s } else { -s }, 0.0])
            .collect();
        let t = Tensor::matrix(cfg.num_freqs, 2, t_data)?;
        let a = Tensor::matrix(1, 2, vec![0.0, 0.0])?;
        let b = Tensor::matrix(1, 2, vec![PI / s, rng.random_range(-1.0..1.0)])?;
        let (ea, eb) = (EcfEval::evaluate(&a, &t)?, EcfEval::evaluate(&b, &t)?);
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let loss = CfLossConfig::new(alpha, cfg.num_freqs)?;
            local_max = local_max.max(distance(&ea, &eb, &loss, cfg.fault)?);
        }
    }
    *max_seen = max_seen.max(local_max);
    let limit = distance_ceiling();
    let overall = *max_seen;
    Ok(SuiteResult {
        name: "boundedness",
        passed: overall <= limit,
        measured: overall,
        limit,
        detail: format!("point-mass max {local_max:.15}; limit is sqrt(4 + eps)"),
        counterexample: (overall > limit).then(|| format!("distance {overall}")),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Families and frequencies checked against their analytic CFs.
pub fn analytic_cases() -> Result<(Vec<(&'static str, EllipticalSpec)>, Vec<[f64; 2]>)> {
    let mu = vec![0.3, -0.2];
    let sigma = vec![0.8, 0.5];
    let specs = vec![
        ("gaussian", EllipticalSpec::new(Family::Gaussian, mu.clone(), sigma.clone())?),
        ("laplace", EllipticalSpec::new(Family::Laplace, mu.clone(), sigma.clone())?),
        ("student_t5", EllipticalSpec::new(Family::StudentT(5.0), mu.clone(), sigma.clone())?),
        ("cauchy", EllipticalSpec::new(Family::Cauchy, mu, sigma)?),
    ];
    let freqs = vec![[0.1, 0.2], [0.5, -0.3], [1.0, 0.5], [-1.5, 0.7], [2.0, -2.0]];
    Ok((specs, freqs))
}

fn ecf_errors(spec: &EllipticalSpec, freqs: &[[f64; 2]], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let x = spec.sample(n, rng)?;
    let t = Tensor::matrix(freqs.len(), 2, freqs.iter().flatten().copied().collect())?;
    let e = EcfEval::evaluate(&x, &t)?;
    Ok(freqs
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let (re, im) = spec.characteristic_function(f);
            (e.re[j] - re).hypot(e.im[j] - im)
        })
        .collect())
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub const SLOPE_TARGET: f64 = -0.5;
pub const SLOPE_TOL: f64 = 0.15;
pub const SLOPE_SIZES: [usize; 4] = [100, 1_000, 10_000, 100_000];
const SLOPE_REPS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticOutcome {
    /// Largest `|ECF − CF|` at `analytic_samples`, per family.
    pub max_error: Vec<(&'static str, f64)>,
    pub envelope: f64,
    pub slope: f64,
    pub rms_by_size: Vec<(usize, f64)>,
}

pub fn analytic_measurements(cfg: &SuiteConfig) -> Result<AnalyticOutcome> {
    let (specs, freqs) = analytic_cases()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xcf);
    let n = cfg.analytic_samples;
    let envelope = 2.0 * 3.0 / (n as f64).sqrt();
    let mut max_error = Vec::new();
    for (name, spec) in &specs {
        let errs = ecf_errors(spec, &freqs, n, &mut rng)?;
        max_error.push((*name, errs.iter().fold(0.0f64, |a, &b| a.max(b))));
    }
    let mut rms_by_size = Vec::new();
    for &size in &SLOPE_SIZES {
        let mut ss = 0.0;
        let mut count = 0usize;
        for _ in 0..SLOPE_REPS {
            for (_, spec) in &specs {
                for e in ecf_errors(spec, &freqs, size, &mut rng)? {
                    ss += e * e;
                    count += 1;
                }
            }
        }
        rms_by_size.push((size, (ss / count as f64).sqrt()));
    }
    let xs: Vec<f64> = rms_by_size.iter().map(|(n, _)| *n as f64).collect();
    let ys: Vec<f64> = rms_by_size.iter().map(|(_, e)| *e).collect();
    Ok(AnalyticOutcome {
        max_error,
        envelope,
        slope: log_log_slope(&xs, &ys),
        rms_by_size,
    })
}

pub fn analytic_suite(cfg: &SuiteConfig) -> Result<SuiteResult> {
    let start = Instant::now();
    let out = analytic_measurements(cfg)?;
    let worst = out.max_error.iter().fold(0.0f64, |a, (_, e)| a.max(*e));
    let slope_ok = (out.slope - SLOPE_TARGET).abs() <= SLOPE_TOL;
    let passed = worst <= out.envelope && slope_ok;
    let per: Vec<String> = out.max_error.iter().map(|(n, e)| format!("{n}={e:.2e}")).collect();
    Ok(SuiteResult {
        name: "analytic_cf",
        passed,
        measured: worst,
        limit: out.envelope,
        detail: format!("{}; slope {:.3}", per.join(" "), out.slope),
        counterexample: (!passed).then(|| format!("max error {worst:.3e}, slope {:.3}", out.slope)),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn random_ecf<R: Rng + ?Sized>(freqs: &Tensor, rng: &mut R) -> Result<EcfEval> {
    let k = freqs.rows();
    let mut re = Vec::with_capacity(k);
    let mut im = Vec::with_capacity(k);
    for _ in 0..k {
        // include degenerate moduli now and then
        let r = match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1e-14,
            _ => rng.random_range(0.0..=1.0),
        };
        let th: f64 = rng.random_range(-PI..PI);
        re.push(r * th.cos());
        im.push(r * th.sin());
    }
    EcfEval::from_parts(re, im, freqs.clone())
}

/// `c = amplitude + phase` and `c_{0.5} = c/2` on random ECF pairs.
pub fn decomposition_suite(cfg: &SuiteConfig, pairs: usize) -> Result<SuiteResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xde);
    let mut worst = 0.0f64;
    let mut counterexample = None;
    // the identity is pointwise in t, so the frequency values are immaterial
    let freqs = Tensor::matrix(8, 1, (0..8).map(f64::from).collect())?;
    for p in 0..pairs {
        let (a, b) = (random_ecf(&freqs, &mut rng)?, random_ecf(&freqs, &mut rng)?);
        let c = c_values(&a, &b)?;
        let (amp, phase) = amplitude_phase_terms(&a, &b)?;
        let half = c_alpha_values(&a, &b, 0.5)?;
        for j in 0..c.len() {
            let e1 = (c[j] - (amp[j] + phase[j])).abs();
            let e2 = (half[j] - c[j] / 2.0).abs();
            let e = e1.max(e2);
            if e > worst {
                worst = e;
                if e > IDENTITY_TOL {
                    counterexample = Some(format!(
                        "pair {p} freq {j}: a=({}, {}) b=({}, {})",
                        a.re[j], a.im[j], b.re[j], b.im[j]
                    ));
                }
            }
        }
    }
    Ok(SuiteResult {
        name: "decomposition",
        passed: worst <= IDENTITY_TOL,
        measured: worst,
        limit: IDENTITY_TOL,
        detail: format!("{pairs} ECF pairs, max |c - (amp + phase)| and |c_0.5 - c/2|"),
        counterexample,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Worst relative error of the end-to-end distance gradient with respect
/// to both sample sets and the frequencies.
pub fn end_to_end_gradient_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = sample_fixed(12, 3, 1.0, &mut rng)?;
    let b = sample_fixed(10, 3, 2.0, &mut rng)?;
    let t = sample_fixed(6, 3, 1.0, &mut rng)?;
    let mut worst = 0.0f64;
    for alpha in [0.5, 0.2, 0.9] {
        let loss = CfLossConfig::new(alpha, 6)?;
        let checks = check_scalar_fn("cf_distance", &[a.clone(), b.clone(), t.clone()], |g, v| {
            cf_distance(g, v[0], v[1], v[2], &loss)
        })?;
        for c in checks {
            worst = worst.max(if c.rel_error.is_nan() { f64::INFINITY } else { c.rel_error });
        }
    }
    Ok(worst)
}

pub fn gradient_suite(cfg: &SuiteConfig) -> Result<SuiteResult> {
    let start = Instant::now();
    let ops = check_all_ops(cfg.seed)?;
    let worst_op = ops
        .iter()
        .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
        .expect("at least one op");
    let e2e = end_to_end_gradient_error(cfg.seed)?;
    let failing: Vec<String> = ops
        .iter()
        .filter(|c| !c.passes(OP_GRAD_TOL))
        .map(|c| format!("{}={:.2e}", c.name, c.rel_error))
        .collect();
    let passed = failing.is_empty() && e2e <= END_TO_END_GRAD_TOL;
    Ok(SuiteResult {
        name: "gradients",
        passed,
        measured: worst_op.rel_error,
        limit: OP_GRAD_TOL,
        detail: format!(
            "{} op checks, worst {} ; end-to-end {e2e:.2e} (limit {END_TO_END_GRAD_TOL:e})",
            ops.len(),
            worst_op.name
        ),
        counterexample: (!passed).then(|| format!("{} ; end-to-end {e2e:.2e}", failing.join(" "))),
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointMassOutcome {
    pub grid: Vec<f64>,
    pub c: Vec<f64>,
    pub argmax: usize,
    /// Distance under a point mass at each grid frequency.
    pub point_distances: Vec<f64>,
    /// Largest distance among random frequency distributions on the grid.
    pub best_mixture: f64,
    pub at_zero: f64,
}

/// Point-mass frequency distributions on a 100-point grid for a fixed pair of
/// sample sets.
pub fn point_mass_measurements(seed: u64) -> Result<PointMassOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e);
    let a = EllipticalSpec::new(Family::Gaussian, vec![0.0], vec![1.0])?.sample(2000, &mut rng)?;
    let b = EllipticalSpec::new(Family::Laplace, vec![0.5], vec![0.7])?.sample(2000, &mut rng)?;
    let grid: Vec<f64> = (0..100).map(|i| -5.0 + 10.0 * i as f64 / 99.0).collect();
    let t = Tensor::matrix(grid.len(), 1, grid.clone())?;
    let (ea, eb) = (EcfEval::evaluate(&a, &t)?, EcfEval::evaluate(&b, &t)?);
    let loss = CfLossConfig::new(0.5, 1)?;
    let c = c_alpha_values(&ea, &eb, 0.5)?;
    let point_distances: Vec<f64> = (0..grid.len())
        .map(|j| {
            let tj = Tensor::matrix(1, 1, vec![grid[j]])?;
            let one = |e: &EcfEval| EcfEval::from_parts(vec![e.re[j]], vec![e.im[j]], tj.clone());
            cf_distance_from_ecf(&one(&ea)?, &one(&eb)?, &loss)
        })
        .collect::<Result<_>>()?;
    let argmax = (0..c.len()).max_by(|&i, &j| c[i].total_cmp(&c[j])).expect("grid");
    let mut best_mixture = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let w: Vec<f64> = (0..grid.len()).map(|_| rng.random::<f64>().powi(4)).collect();
        let total: f64 = w.iter().sum();
        let d: f64 = w.iter().zip(&point_distances).map(|(w, d)| w * d).sum::<f64>() / total;
        best_mixture = best_mixture.max(d);
    }
    let zero = Tensor::matrix(1, 1, vec![0.0])?;
    let at_zero = crate::ecf::cf_distance_value(&a, &b, &zero, &loss)?;
    Ok(PointMassOutcome {
        grid,
        c,
        argmax,
        point_distances,
        best_mixture,
        at_zero,
    })
}

pub fn point_mass_suite(cfg: &SuiteConfig, max_seen: &mut f64) -> Result<SuiteResult> {
    let start = Instant::now();
    let out = point_mass_measurements(cfg.seed)?;
    let top = out.point_distances[out.argmax];
    let dominated = out.point_distances.iter().all(|&d| d <= top) && out.best_mixture <= top;
    let zero_ok = out.at_zero <= SQRT_EPS.sqrt();
    *max_seen = max_seen.max(top);
    Ok(SuiteResult {
        name: "point_mass",
        passed: dominated && zero_ok,
        measured: out.at_zero,
        limit: SQRT_EPS.sqrt(),
        detail: format!(
            "argmax t={:.4} distance {top:.6}, best grid mixture {:.6}, distance at t=0",
            out.grid[out.argmax], out.best_mixture
        ),
        counterexample: (!(dominated && zero_ok)).then(|| "argmax point mass dominated".to_string()),
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReciprocalOutcome {
    /// `E‖z − f(g(z))‖²`
    pub forward: f64,
    /// `E‖ȳ − g(f(ȳ))‖²` on g's range.
    pub backward: f64,
    /// `C(f(Ȳ), Z)` for `Ȳ = g(Z')`.
    pub embed_dist: f64,
    /// Mean + 3 std of `C` between independent draws of `Z`.
    pub noise_floor: f64,
}

/// An invertible affine `g` into `(−1, 1)^m` and its exact inverse `f`, both
/// as identity-activation [`Mlp`]s.
pub fn affine_pair(m: usize, seed: u64) -> Result<(Mlp, Mlp)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // orthogonal Q from Gram-Schmidt on a random matrix
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m);
    while q.len() < m {
        let mut v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        for u in &q {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-3 {
            q.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    // |zW + b|_∞ ≤ scale·‖z‖₂ + 0.05 < 1 for z ∈ (−1, 1)^m
    let scale = 0.9 / (m as f64).sqrt();
    let bias: Vec<f64> = (0..m).map(|_| rng.random_range(-0.05..0.05)).collect();
    let wg: Vec<f64> = (0..m).flat_map(|i| (0..m).map(|j| scale * q[i][j]).collect::<Vec<_>>()).collect();
    // W⁻¹ = Qᵀ / scale, b_f = −b_g W⁻¹
    let wf: Vec<f64> = (0..m).flat_map(|i| (0..m).map(|j| q[j][i] / scale).collect::<Vec<_>>()).collect();
    let bf: Vec<f64> = (0..m)
        .map(|j| -(0..m).map(|i| bias[i] * wf[i * m + j]).sum::<f64>())
        .collect();
    let spec = MlpSpec::new(vec![m, m], Activation::Identity, Activation::Identity)?;
    let g = Mlp::from_params(spec.clone(), vec![Tensor::matrix(m, m, wg)?, Tensor::vector(bias)])?;
    let f = Mlp::from_params(spec, vec![Tensor::matrix(m, m, wf)?, Tensor::vector(bf)])?;
    Ok((g, f))
}

fn uniform_cube<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Tensor> {
    Tensor::matrix(n, m, (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect())
}

pub fn reciprocal_measurements(seed: u64) -> Result<ReciprocalOutcome> {
    let (m, n, k) = (4, 512, 64);
    let (g, f) = affine_pair(m, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4ec);
    let z = uniform_cube(n, m, &mut rng)?;
    let forward = reciprocal_loss(&z, &f, &g)?;
    let y = g.predict(&uniform_cube(n, m, &mut rng)?)?;
    let backward = reciprocal_loss(&y, &g, &f)?;
    let loss = CfLossConfig::new(0.5, k)?;
    let t = sample_fixed(k, m, 1.0, &mut rng)?;
    let embed_dist = crate::ecf::cf_distance_value(&f.predict(&y)?, &z, &t, &loss)?;
    let null: Vec<f64> = (0..100)
        .map(|_| {
            let (p, q) = (uniform_cube(n, m, &mut rng)?, uniform_cube(n, m, &mut rng)?);
            crate::ecf::cf_distance_value(&p, &q, &t, &loss)
        })
        .collect::<Result<_>>()?;
    let mean = null.iter().sum::<f64>() / null.len() as f64;
    let sd = (null.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (null.len() - 1) as f64).sqrt();
    Ok(ReciprocalOutcome {
        forward,
        backward,
        embed_dist,
        noise_floor: mean + 3.0 * sd,
    })
}

pub fn reciprocal_suite(cfg: &SuiteConfig) -> Result<SuiteResult> {
    let start = Instant::now();
    let out = reciprocal_measurements(cfg.seed)?;
    let passed = out.forward <= 1e-24 && out.backward <= 1e-12 && out.embed_dist <= out.noise_floor;
    Ok(SuiteResult {
        name: "reciprocal",
        passed,
        measured: out.backward,
        limit: 1e-12,
        detail: format!(
            "forward {:.2e}, C(f(Y), Z) {:.4} vs floor {:.4}, backward",
            out.forward, out.embed_dist, out.noise_floor
        ),
        counterexample: (!passed).then(|| format!("{out:?}")),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs every suite in order.
pub fn run_all(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut max_seen = f64::NEG_INFINITY;
    let mut results = vec![axioms_suite(cfg, &mut max_seen)?];
    results.push(point_mass_suite(cfg, &mut max_seen)?);
    // boundedness last among the distance suites so it sees every maximum
    results.push(boundedness_suite(cfg, &mut max_seen)?);
    results.push(analytic_suite(cfg)?);
    results.push(decomposition_suite(cfg, 10_000)?);
    results.push(gradient_suite(cfg)?);
    results.push(reciprocal_suite(cfg)?);
    Ok(SuiteReport {
        results,
        max_distance: max_seen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> SuiteConfig {
        SuiteConfig {
            trials: 20,
            samples: 64,
            num_freqs: 16,
            analytic_samples: 20_000,
            ..SuiteConfig::default()
        }
    }

    #[test]
    fn axioms_hold_and_fault_is_caught() {
        let mut m = 0.0;
        assert!(axioms_suite(&quick(), &mut m).unwrap().passed);
        let faulty = SuiteConfig { fault: Fault::FlipSign, ..quick() };
        let r = axioms_suite(&faulty, &mut m).unwrap();
        assert!(!r.passed);
        assert!(r.counterexample.is_some());
    }

    #[test]
    fn boundedness_reaches_but_never_exceeds_ceiling() {
        let mut m = 0.0;
        let r = boundedness_suite(&quick(), &mut m).unwrap();
        assert!(r.passed);
        assert!(m > 1.99, "{m}");
    }

    #[test]
    fn slope_of_exact_power_law() {
        let x = [1.0, 10.0, 100.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((log_log_slope(&x, &y) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn decomposition_and_point_mass() {
        assert!(decomposition_suite(&quick(), 500).unwrap().passed);
        let mut m = 0.0;
        assert!(point_mass_suite(&quick(), &mut m).unwrap().passed);
    }

    #[test]
    fn affine_pair_is_inverse_and_in_range() {
        let (g, f) = affine_pair(5, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = uniform_cube(200, 5, &mut rng).unwrap();
        let y = g.predict(&z).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1.0));
        assert!(reciprocal_loss(&z, &f, &g).unwrap() < 1e-24);
    }
}
