use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Elliptical family, identified by its density generator `ψ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Gaussian,
    Laplace,
    StudentT(f64),
    Cauchy,
}

impl Family {
    /// `ψ(s)` such that the CF is `exp(j tᵀμ) ψ(tᵀΣt)`.
    pub fn psi(self, s: f64) -> f64 {
        match self {
            Family::Gaussian => (-s / 2.0).exp(),
            Family::Laplace => 1.0 / (1.0 + s),
            Family::Cauchy => (-s.sqrt()).exp(),
            Family::StudentT(nu) => student_t_psi(nu, s),
        }
    }
}

/// Student-t density generator. Closed form for odd `ν` via the half-integer
/// Bessel K expansion; otherwise the chi-square scale mixture
/// `E[exp(−s ν / (2W))]`, `W ~ χ²_ν`, by quadrature.
fn student_t_psi(nu: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 1.0;
    }
    let p = (nu - 1.0) / 2.0;
    if p >= 0.0 && p.fract() == 0.0 && p < 60.0 {
        let p = p as u64;
        let x = (nu * s).sqrt();
        // Σ_k (p+k)! / (k! (p−k)!) (2x)^{−k}
        let mut sum = 0.0;
        let mut coef = 1.0; // k = 0 term: p!/p! = 1
        for k in 0..=p {
            if k > 0 {
                coef *= ((p + k) * (p - k + 1)) as f64 / k as f64;
            }
            sum += coef / (2.0 * x).powi(k as i32);
        }
        let log_scale = 0.5 * std::f64::consts::PI.ln() + p as f64 * x.ln()
            - x
            - ln_gamma(p as f64 + 0.5)
            - p as f64 * 2f64.ln();
        return log_scale.exp() * sum;
    }
    // integrate over u = ln w with the χ²_ν density
    let half = nu / 2.0;
    let log_norm = -half * 2f64.ln() - ln_gamma(half);
    let (lo, hi, n) = (-40.0f64, (nu + 60.0 * nu.sqrt() + 200.0).ln(), 20_000usize);
    let h = (hi - lo) / n as f64;
    let f = |u: f64| {
        let w = u.exp();
        let log_pdf = log_norm + (half - 1.0) * u - w / 2.0;
        (log_pdf + u - s * nu / (2.0 * w)).exp()
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += weight * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// Elliptical distribution with centre `mu` and diagonal scale `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticalSpec {
    family: Family,
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl EllipticalSpec {
    pub fn new(family: Family, mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.is_empty() || mu.len() != sigma.len() {
            return Err(Error::invalid(format!(
                "centre and scale lengths differ ({} vs {})",
                mu.len(),
                sigma.len()
            )));
        }
        if sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("scale entries must be positive"));
        }
        if let Family::StudentT(nu) = family {
            if !(nu > 0.0) {
                return Err(Error::invalid(format!("Student-t needs ν > 0, got {nu}")));
            }
        }
        Ok(Self { family, mu, sigma })
    }

    /// Isotropic spec with standard deviation `std` per coordinate.
    pub fn isotropic(family: Family, mu: Vec<f64>, std: f64) -> Result<Self> {
        let sigma = vec![std * std; mu.len()];
        Self::new(family, mu, sigma)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Analytic CF at `t` as `(re, im)`.
    pub fn characteristic_function(&self, t: &[f64]) -> (f64, f64) {
        let quad: f64 = t.iter().zip(&self.sigma).map(|(ti, s)| ti * ti * s).sum();
        let shift: f64 = t.iter().zip(&self.mu).map(|(ti, m)| ti * m).sum();
        let amp = self.family.psi(quad);
        (amp * shift.cos(), amp * shift.sin())
    }

    /// Draws a single standardized point `y` so that `x = μ + √Σ ⊙ y`.
    fn standard_draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let m = out.len();
        for v in out.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let radial = match self.family {
            Family::Gaussian => 1.0,
            Family::StudentT(nu) => student_radial(nu, rng),
            Family::Cauchy => student_radial(1.0, rng),
            Family::Laplace if m == 1 => {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                out[0] = e1 - e2;
                1.0
            }
            Family::Laplace => {
                let e: f64 = Exp1.sample(rng);
                (2.0 * e).sqrt()
            }
        };
        out.iter_mut().for_each(|v| *v *= radial);
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Tensor> {
        if n == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        let m = self.dim();
        let mut data = vec![0.0; n * m];
        for row in data.chunks_mut(m) {
            self.sample_into(rng, row);
        }
        Tensor::matrix(n, m, data)
    }

    pub(crate) fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, row: &mut [f64]) {
        self.standard_draw(rng, row);
        for ((v, mu), s) in row.iter_mut().zip(&self.mu).zip(&self.sigma) {
            *v = mu + s.sqrt() * *v;
        }
    }
}

/// `1 / sqrt(W/ν)` with `W ~ χ²_ν`.
fn student_radial<R: Rng + ?Sized>(nu: f64, rng: &mut R) -> f64 {
    let w: f64 = ChiSquared::new(nu).expect("ν validated positive").sample(rng);
    1.0 / (w / nu).sqrt()
}
