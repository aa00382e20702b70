use crate::autodiff::Tensor;
use crate::datasets::MixtureSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    pub modes_covered: usize,
    pub total_modes: usize,
    pub high_quality_fraction: f64,
    pub per_mode_counts: Vec<usize>,
    /// Samples a mode needs within 3 std to count as covered.
    pub threshold: usize,
}

impl ModeReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("mode,count,covered\n");
        for (i, &c) in self.per_mode_counts.iter().enumerate() {
            out.push_str(&format!("{i},{c},{}\n", u8::from(c >= self.threshold)));
        }
        out.push_str(&format!(
            "# modes_covered={}/{} high_quality_fraction={:.6} threshold={}\n",
            self.modes_covered, self.total_modes, self.high_quality_fraction, self.threshold
        ));
        out
    }
}

/// Coverage threshold `max(5, n/(10K))`, capped at the `⌈n/K⌉` a perfectly
/// balanced sample would place on each mode.
pub fn coverage_threshold(n: usize, modes: usize) -> usize {
    let balanced = n.div_ceil(modes).max(1);
    (n / (10 * modes)).max(5).min(balanced)
}

/// Assigns each sample to its nearest component mean and counts those that
/// fall within 3 component std of it in every coordinate.
pub fn mode_coverage(generated: &Tensor, spec: &MixtureSpec) -> Result<ModeReport> {
    if generated.rank() != 2 || generated.cols() != 2 || spec.dim() != 2 {
        return Err(Error::Shape {
            op: "mode_coverage",
            lhs: generated.shape().to_vec(),
            rhs: vec![spec.dim()],
        });
    }
    let means = spec.means();
    let stds = spec.stds();
    let k = means.len();
    let mut counts = vec![0usize; k];
    let mut good = 0usize;
    for row in generated.row_iter() {
        let (best, _) = means
            .iter()
            .enumerate()
            .map(|(i, m)| (i, (row[0] - m[0]).powi(2) + (row[1] - m[1]).powi(2)))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        let m = &means[best];
        if (row[0] - m[0]).abs().max((row[1] - m[1]).abs()) <= 3.0 * stds[best] {
            counts[best] += 1;
            good += 1;
        }
    }
    let n = generated.rows();
    let threshold = coverage_threshold(n, k);
    Ok(ModeReport {
        modes_covered: counts.iter().filter(|&&c| c >= threshold).count(),
        total_modes: k,
        high_quality_fraction: if n == 0 { 0.0 } else { good as f64 / n as f64 },
        per_mode_counts: counts,
        threshold,
    })
}
