use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::elliptical::{EllipticalSpec, Family};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Named mixture benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Ring8,
    Grid25,
    TwoMoons,
    Bimodal1d,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Ring8, Preset::Grid25, Preset::TwoMoons, Preset::Bimodal1d];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Ring8 => "ring8",
            Preset::Grid25 => "grid25",
            Preset::TwoMoons => "two_moons",
            Preset::Bimodal1d => "bimodal1d",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown preset {s:?}")))
    }
}

pub const RING8_RADIUS: f64 = 2.0;
pub const RING8_STD: f64 = 0.02;
pub const GRID25_STD: f64 = 0.05;
pub const TWO_MOONS_STD: f64 = 0.05;
pub const BIMODAL_CENTRE: f64 = 0.5;
pub const BIMODAL_STD: f64 = 0.1;

/// Finite mixture of elliptical components.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    components: Vec<(f64, EllipticalSpec)>,
    cumulative: Vec<f64>,
    preset: Option<Preset>,
}

impl MixtureSpec {
    pub fn new(components: Vec<(f64, EllipticalSpec)>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::invalid("mixture needs at least one component"))?;
        let dim = first.1.dim();
        if components.iter().any(|(_, c)| c.dim() != dim) {
            return Err(Error::invalid("mixture components differ in dimension"));
        }
        if components.iter().any(|(w, _)| !(*w > 0.0)) {
            return Err(Error::invalid("mixture weights must be positive"));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = components
            .iter()
            .map(|(w, _)| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self {
            components,
            cumulative,
            preset: None,
        })
    }

    pub fn preset(preset: Preset) -> Self {
        let gauss2 = |x: f64, y: f64, std: f64| {
            EllipticalSpec::isotropic(Family::Gaussian, vec![x, y], std).expect("valid preset")
        };
        let means: Vec<(f64, EllipticalSpec)> = match preset {
            Preset::Ring8 => (0..8)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / 8.0;
                    gauss2(RING8_RADIUS * a.cos(), RING8_RADIUS * a.sin(), RING8_STD)
                })
                .map(|c| (1.0 / 8.0, c))
                .collect(),
            Preset::Grid25 => (0..25)
                .map(|i| gauss2((i / 5) as f64 - 2.0, (i % 5) as f64 - 2.0, GRID25_STD))
                .map(|c| (1.0 / 25.0, c))
                .collect(),
            Preset::TwoMoons => {
                // 12 components per arc, arcs rescaled to sit inside [−2, 2]²
                let per = 12;
                let mut out = Vec::with_capacity(2 * per);
                for i in 0..per {
                    let a = PI * i as f64 / (per - 1) as f64;
                    let upper = (a.cos() - 0.5, a.sin() - 0.25);
                    let lower = (1.0 - a.cos() - 0.5, 0.5 - a.sin() - 0.25);
                    for (x, y) in [upper, lower] {
                        out.push((1.0 / (2 * per) as f64, gauss2(1.5 * x, 1.5 * y, TWO_MOONS_STD)));
                    }
                }
                out
            }
            Preset::Bimodal1d => [-BIMODAL_CENTRE, BIMODAL_CENTRE]
                .into_iter()
                .map(|m| {
                    let c = EllipticalSpec::isotropic(Family::Gaussian, vec![m], BIMODAL_STD)
                        .expect("valid preset");
                    (0.5, c)
                })
                .collect(),
        };
        let mut spec = Self::new(means).expect("preset weights sum to one");
        spec.preset = Some(preset);
        spec
    }

    pub fn preset_kind(&self) -> Option<Preset> {
        self.preset
    }

    pub fn components(&self) -> &[(f64, EllipticalSpec)] {
        &self.components
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].1.dim()
    }

    /// Component means, one row per component.
    pub fn means(&self) -> Vec<Vec<f64>> {
        self.components.iter().map(|(_, c)| c.mu().to_vec()).collect()
    }

    /// Per-component standard deviation (largest axis).
    pub fn stds(&self) -> Vec<f64> {
        self.components
            .iter()
            .map(|(_, c)| c.sigma().iter().fold(0.0f64, |a, &s| a.max(s)).sqrt())
            .collect()
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.components.len() - 1)
    }

    /// Draws `n` rows together with the component index of each.
    pub fn sample_labeled<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Tensor, Vec<usize>)> {
        if n == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        let m = self.dim();
        let mut data = vec![0.0; n * m];
        let mut labels = Vec::with_capacity(n);
        for row in data.chunks_mut(m) {
            let k = self.pick(rng);
            self.components[k].1.sample_into(rng, row);
            labels.push(k);
        }
        Ok((Tensor::matrix(n, m, data)?, labels))
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Tensor> {
        Ok(self.sample_labeled(n, rng)?.0)
    }
}
