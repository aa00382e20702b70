use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rcfgan_core::datasets::{load_idx, TensorSource};
use rcfgan_core::eval::suites::{gradient_suite, run_all, Fault, SuiteConfig};
use rcfgan_core::eval::{
    fraction_assigned, mode_coverage, nearest_mean_labels, points_csv, scatter_png, spread_csv, two_sample_study,
    StudyConfig, SweepBudget,
};
use rcfgan_core::trainer::{train_with, Metric, TrainOptions, CHECKPOINT_FILE, FINAL_CHECKPOINT_FILE, TELEMETRY_FILE};
use rcfgan_core::{DataSource, Error, IdxDataset, MixtureSpec, Preset, Tensor};

use crate::config::{DatasetChoice, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Property(String),
    #[error("{0}")]
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Property(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    pub fn context(self, cmd: &str) -> Self {
        match self {
            Failure::Usage(m) => Failure::Usage(format!("{cmd}: {m}")),
            Failure::Property(m) => Failure::Property(format!("{cmd}: {m}")),
            Failure::Runtime(m) => Failure::Runtime(format!("{cmd}: {m}")),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Idx(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", path.display()))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(io(&path))
}

/// Creates the output directory and records the resolved config there.
fn prepare(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(&cfg.out).map_err(io(&cfg.out))?;
    write(&cfg.out, "config.txt", &cfg.render())?;
    Ok(cfg.out.clone())
}

fn readme(dir: &Path, command: &str, files: &[(&str, &str)]) -> Result<(), Failure> {
    let mut s = format!("# rcfgan {command}\n\nResolved configuration: `config.txt` (re-usable with `--config`).\n\n");
    for (f, what) in files {
        let _ = writeln!(s, "- `{f}`: {what}");
    }
    write(dir, "README.md", &s)
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        println!("{}", msg.as_ref());
    }
}

fn must_exist(p: &Path) -> Result<(), Failure> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("dataset file not found: {}", p.display())))
    }
}

fn load_idx_checked(images: &Path, labels: &Path) -> Result<IdxDataset, Failure> {
    must_exist(images)?;
    must_exist(labels)?;
    Ok(load_idx(images, labels)?)
}

pub fn train(cfg: &RunConfig, quiet: bool) -> Result<(), Failure> {
    let (mut source, mixture): (Box<dyn DataSource>, Option<MixtureSpec>) = match &cfg.dataset {
        DatasetChoice::Preset(p) => {
            let m = MixtureSpec::preset(*p);
            (Box::new(m.clone()), Some(m))
        }
        DatasetChoice::Idx => {
            let (Some(i), Some(l)) = (&cfg.idx_images, &cfg.idx_labels) else {
                return Err(Failure::Usage("dataset = idx needs idx_images and idx_labels".into()));
            };
            let ds = load_idx_checked(i, l)?;
            let images = match cfg.idx_digit {
                Some(d) => ds.images_with_label(d),
                None => ds.images().clone(),
            };
            if images.rows() == 0 {
                return Err(Failure::Usage(format!("no images with label {:?}", cfg.idx_digit)));
            }
            (Box::new(TensorSource::new(images)?), None)
        }
    };
    let out = prepare(cfg)?;
    let start = Instant::now();
    let opts = TrainOptions {
        out_dir: Some(out.clone()),
    };
    let outcome = match train_with(cfg.train.clone(), source.as_mut(), &opts) {
        Err(Error::NonFinite {
            what,
            iteration,
            recent,
        }) => {
            let mut dump = format!("{}\n", rcfgan_core::trainer::TELEMETRY_HEADER);
            for r in &recent {
                dump.push_str(&r.csv_line());
                dump.push('\n');
            }
            write(&out, "abort_window.csv", &dump)?;
            eprint!("{dump}");
            return Err(Failure::Runtime(format!(
                "non-finite {what} at iteration {iteration}; last {} records in abort_window.csv",
                recent.len()
            )));
        }
        other => other?,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    rng.set_stream(1);
    let generated = outcome.state.generate(cfg.eval_samples, &mut rng)?;
    write(&out, "samples.csv", &points_csv(&generated, None)?)?;
    let mut files = vec![
        (
            TELEMETRY_FILE,
            "one row per iteration: iteration, critic_loss, gen_loss, reciprocal_loss, embed_dist",
        ),
        (CHECKPOINT_FILE, "networks at the last checkpoint interval"),
        (FINAL_CHECKPOINT_FILE, "networks after the last iteration"),
        ("samples.csv", "generated samples, columns x0..x{d-1}"),
    ];
    let tel = &outcome.telemetry;
    let n = tel.len();
    if n > 0 {
        let avg = |m| tel.moving_average(m, n).unwrap_or(f64::NAN);
        say(
            quiet,
            format!(
                "{n} iterations in {:.1}s; last-window means: critic {:.5} gen {:.5} reciprocal {:.5} embed {:.5}",
                start.elapsed().as_secs_f64(),
                avg(Metric::CriticLoss),
                avg(Metric::GenLoss),
                avg(Metric::ReciprocalLoss),
                avg(Metric::EmbedDist)
            ),
        );
    }
    if let Some(m) = mixture.filter(|m| m.dim() == 2) {
        let report = mode_coverage(&generated, &m)?;
        write(&out, "modes.csv", &report.csv())?;
        let real = m.sample(cfg.eval_samples, &mut rng)?;
        let both = Tensor::matrix(
            2 * cfg.eval_samples,
            2,
            generated.data().iter().chain(real.data()).copied().collect(),
        )?;
        let labels: Vec<usize> = (0..2 * cfg.eval_samples).map(|i| usize::from(i >= cfg.eval_samples)).collect();
        scatter_png(&out.join("scatter.png"), &both, Some(&labels))?;
        files.push(("modes.csv", "mode coverage: per-mode counts, threshold, covered modes, high-quality fraction"));
        files.push(("scatter.png", "generated (blue) and real (orange) samples"));
        say(
            quiet,
            format!(
                "modes covered {}/{}  high-quality fraction {:.3}",
                report.modes_covered, report.total_modes, report.high_quality_fraction
            ),
        );
    }
    readme(&out, "train", &files)
}

pub fn validate_metric(cfg: &RunConfig, fault: bool, quiet: bool) -> Result<(), Failure> {
    let out = prepare(cfg)?;
    let suite = SuiteConfig {
        seed: cfg.train.seed,
        trials: cfg.suite_trials,
        samples: cfg.suite_samples,
        num_freqs: cfg.suite_freqs,
        analytic_samples: cfg.analytic_samples,
        fault: if fault { Fault::FlipSign } else { Fault::None },
    };
    let report = run_all(&suite)?;
    write(&out, "suites.csv", &report.csv())?;
    readme(
        &out,
        "validate-metric",
        &[("suites.csv", "suite, passed (0/1), measured, limit, seconds")],
    )?;
    if report.all_passed() {
        say(quiet, report.table());
        Ok(())
    } else {
        print!("{}", report.table());
        let failed: Vec<&str> = report.results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        Err(Failure::Property(format!("failed suites: {}", failed.join(", "))))
    }
}

pub fn grad_check(cfg: &RunConfig, quiet: bool) -> Result<(), Failure> {
    let out = prepare(cfg)?;
    let mut csv = String::from("seed,passed,worst_op_rel_error,detail\n");
    let mut failures = Vec::new();
    for k in 0..cfg.grad_trials.max(1) {
        let seed = cfg.train.seed.wrapping_add(k as u64);
        let r = gradient_suite(&SuiteConfig {
            seed,
            ..SuiteConfig::default()
        })?;
        let _ = writeln!(csv, "{seed},{},{:e},\"{}\"", u8::from(r.passed), r.measured, r.detail);
        say(quiet, format!("seed {seed}: {} {}", if r.passed { "PASS" } else { "FAIL" }, r.detail));
        if let Some(c) = r.counterexample {
            failures.push(format!("seed {seed}: {c}"));
        }
    }
    write(&out, "grad_check.csv", &csv)?;
    readme(&out, "grad-check", &[("grad_check.csv", "seed, passed, worst op relative error, detail")])?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Property(failures.join("; ")))
    }
}

/// Finds the image and label IDX files inside `dir`.
fn find_idx(dir: &Path) -> Result<(PathBuf, PathBuf), Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    let mut names: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    names.sort();
    let pick = |keys: [&str; 2]| {
        names
            .iter()
            .find(|p| {
                let n = p.file_name().map(|n| n.to_string_lossy().to_lowercase()).unwrap_or_default();
                keys.iter().any(|k| n.contains(k))
            })
            .cloned()
    };
    match (pick(["images", "idx3"]), pick(["labels", "idx1"])) {
        (Some(i), Some(l)) => Ok((i, l)),
        _ => Err(Failure::Usage(format!(
            "{}: expected an IDX image file and label file",
            dir.display()
        ))),
    }
}

pub fn swap(cfg: &RunConfig, mnist: Option<&Path>, quiet: bool) -> Result<(), Failure> {
    let (images, labels) = match (mnist, &cfg.idx_images, &cfg.idx_labels) {
        (Some(dir), _, _) => find_idx(dir)?,
        (None, Some(i), Some(l)) => (i.clone(), l.clone()),
        _ => return Err(Failure::Usage("give --mnist DIR or idx_images/idx_labels in the config".into())),
    };
    let ds = load_idx_checked(&images, &labels)?;
    let (da, db) = cfg.swap_digits;
    let (set_a, set_b) = (ds.images_with_label(da), ds.images_with_label(db));
    for (d, s) in [(da, &set_a), (db, &set_b)] {
        if s.rows() == 0 {
            return Err(Failure::Usage(format!("no images of digit {d} in {}", images.display())));
        }
    }
    let out = prepare(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let res = rcfgan_core::eval::swap_experiment(&set_a, &set_b, cfg.swap_samples, &mut rng)?;
    let means = [res.fit_a.mean.as_slice(), res.fit_b.mean.as_slice()];
    let mut report = String::from("set,phase_class,amplitude_class,n,to_a,to_b,fraction_phase_class\n");
    let mut files = Vec::new();
    let classes = [(da, da), (db, db), (da, db), (db, da)];
    for ((name, set), (phase, amp)) in res.sets().into_iter().zip(classes) {
        write(&out, &format!("{name}.csv"), &points_csv(set, None)?)?;
        let labels = nearest_mean_labels(set, &means);
        let to_a = labels.iter().filter(|&&l| l == 0).count();
        let target = usize::from(phase != da);
        let frac = fraction_assigned(set, &means, target);
        let _ = writeln!(report, "{name},{phase},{amp},{},{to_a},{},{frac:.6}", set.rows(), set.rows() - to_a);
        say(
            quiet,
            format!("{name:<14} mean of digit {phase}, variance of digit {amp}: {:.1}% classified as {phase}", 100.0 * frac),
        );
    }
    for name in ["a", "b", "phase_a_amp_b", "phase_b_amp_a"] {
        files.push((name, "samples, one 784-pixel row each, columns x0..x783"));
    }
    write(&out, "classification.csv", &report)?;
    let grid = sample_grid(&res.sets().map(|(_, t)| t), 10)?;
    grid.save(out.join("swap.png"))
        .map_err(|e| Failure::Runtime(format!("swap.png: {e}")))?;
    let mut listing: Vec<(String, &str)> = files.iter().map(|(n, w)| (format!("{n}.csv"), *w)).collect();
    listing.push((
        "classification.csv".into(),
        "set, phase_class, amplitude_class, n, to_a, to_b, fraction_phase_class (nearest class mean)",
    ));
    listing.push(("swap.png".into(), "first 10 samples of each set, one row per set"));
    let borrowed: Vec<(&str, &str)> = listing.iter().map(|(n, w)| (n.as_str(), *w)).collect();
    readme(&out, "swap", &borrowed)
}

/// Rows of 28×28 images, one row per set.
fn sample_grid(sets: &[&Tensor], per_row: usize) -> Result<image::GrayImage, Failure> {
    const SIDE: u32 = 28;
    let mut img = image::GrayImage::new(SIDE * per_row as u32, SIDE * sets.len() as u32);
    for (r, set) in sets.iter().enumerate() {
        if set.cols() != (SIDE * SIDE) as usize {
            return Err(Failure::Usage(format!("expected 784-pixel images, got {}", set.cols())));
        }
        for (c, row) in set.row_iter().take(per_row).enumerate() {
            for (k, v) in row.iter().enumerate() {
                let (x, y) = (k as u32 % SIDE, k as u32 / SIDE);
                let p = rcfgan_core::datasets::unit_to_pixel(*v);
                img.put_pixel(c as u32 * SIDE + x, r as u32 * SIDE + y, image::Luma([p]));
            }
        }
    }
    Ok(img)
}

pub fn alpha_sweep(cfg: &RunConfig, quiet: bool) -> Result<(), Failure> {
    let out = prepare(cfg)?;
    let budget = SweepBudget {
        iterations: cfg.sweep_iterations,
        lr: cfg.sweep_lr,
        seed: cfg.train.seed,
        ..SweepBudget::default()
    };
    let data = MixtureSpec::preset(Preset::Bimodal1d);
    let results = rcfgan_core::eval::alpha_sweep(&data, &cfg.alphas, &budget)?;
    write(&out, "spread.csv", &spread_csv(&results))?;
    for r in &results {
        let status = match r.diverged_at {
            Some(i) => format!("diverged at {i}"),
            None => "finite".into(),
        };
        say(
            quiet,
            format!(
                "alpha {:<6} spread {:.4} (data {:.4})  final loss {:.4}  {status}",
                r.alpha, r.spread, r.data_spread, r.final_loss
            ),
        );
    }
    readme(
        &out,
        "alpha-sweep",
        &[(
            "spread.csv",
            "alpha, spread (RMS distance of generated samples from the data mean), data_spread, final_loss, max_loss, diverged_at (empty when finite)",
        )],
    )
}

pub fn two_sample(cfg: &RunConfig, null: bool, quiet: bool) -> Result<(), Failure> {
    let out = prepare(cfg)?;
    let study = StudyConfig {
        n: cfg.two_sample_n,
        shift: if null { 0.0 } else { cfg.two_sample_shift },
        trials: cfg.two_sample_trials,
        num_perms: cfg.two_sample_perms,
        num_freqs: cfg.two_sample_freqs,
        level: cfg.two_sample_level,
        seed: cfg.train.seed,
    };
    let res = two_sample_study(&study)?;
    let mut trials = String::from("trial,statistic,p_value,rejected\n");
    for (i, o) in res.outcomes.iter().enumerate() {
        let _ = writeln!(
            trials,
            "{i},{:.12e},{:.6},{}",
            o.statistic,
            o.p_value,
            u8::from(o.p_value <= study.level)
        );
    }
    write(&out, "trials.csv", &trials)?;
    let mode = if null { "null" } else { "power" };
    write(
        &out,
        "summary.csv",
        &format!(
            "mode,n,shift,trials,permutations,level,rejection_rate\n{mode},{},{},{},{},{},{:.6}\n",
            study.n, study.shift, study.trials, study.num_perms, study.level, res.rejection_rate
        ),
    )?;
    say(
        quiet,
        format!(
            "{mode}: N(0,1) vs N({},1), n={} per group, {} trials: rejection rate {:.3} at level {}",
            study.shift, study.n, study.trials, res.rejection_rate, study.level
        ),
    );
    readme(
        &out,
        "two-sample",
        &[
            ("trials.csv", "trial, statistic (CF distance), p_value, rejected (0/1)"),
            ("summary.csv", "mode, n, shift, trials, permutations, level, rejection_rate"),
        ],
    )
}
