//! von Mises-Fisher distribution on the unit sphere `S^{r-1}`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use super::bessel::{bessel_ratio, ln_gamma, log_bessel_i, log_series_sum, switch_point};
use crate::error::{dimension, domain, Result};
use crate::rng::{substream, tag};
use crate::scalar::Real;

/// Tolerance on the norm of a [`UnitVector`].
pub const UNIT_NORM_TOL: f64 = 1e-8;

/// Vector on the unit sphere of dimension `r >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector<T: Real>(DVector<T>);

impl<T: Real> UnitVector<T> {
    /// Validates that `coords` already has unit norm.
    pub fn new(coords: DVector<T>) -> Result<Self> {
        if coords.len() < 2 {
            return domain(format!("unit vectors need dimension >= 2, got {}", coords.len()));
        }
        let dev = (coords.norm() - T::one()).abs();
        if !(dev <= T::lit(UNIT_NORM_TOL).max(T::eps() * T::lit(64.0))) {
            return domain(format!("vector norm deviates from 1 by {dev}"));
        }
        Ok(Self(coords))
    }

    /// Normalizes `coords`; fails on the zero vector.
    pub fn normalize(coords: DVector<T>) -> Result<Self> {
        let norm = coords.norm();
        if !(norm > T::zero()) || !norm.is_finite() {
            return domain("cannot normalize a zero or non-finite vector");
        }
        Self::new(coords / norm)
    }

    /// First standard basis vector `e_1` in dimension `dim`.
    pub fn basis(dim: usize) -> Result<Self> {
        let mut v = DVector::zeros(dim);
        if dim > 0 {
            v[0] = T::one();
        }
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<T> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<T> {
        self.0
    }

    pub fn dot(&self, other: &Self) -> T {
        self.0.dot(&other.0)
    }
}

/// Mean direction and concentration of a vMF law.
#[derive(Debug, Clone, PartialEq)]
pub struct VmfParams<T: Real> {
    pub mean_direction: UnitVector<T>,
    pub concentration: T,
}

impl<T: Real> VmfParams<T> {
    pub fn new(mean_direction: UnitVector<T>, concentration: T) -> Result<Self> {
        if !(concentration >= T::zero()) || !concentration.is_finite() {
            return domain(format!("concentration must be finite and >= 0, got {concentration}"));
        }
        Ok(Self {
            mean_direction,
            concentration,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean_direction.dim()
    }
}

/// `log C_r(kappa)`, the log normalizing constant of the vMF density on
/// `S^{r-1}`. Continuous at `kappa = 0`, where it equals minus the log surface
/// area of the sphere.
pub fn log_normalizer<T: Real>(dim: usize, kappa: T) -> T {
    let half = T::count(dim) * T::lit(0.5);
    let order = half - T::one();
    if kappa <= T::zero() {
        return ln_gamma(half) - T::lit(2.0).ln() - half * T::pi().ln();
    }
    if kappa < switch_point(order) {
        // the (kappa/2)^order factors cancel analytically
        -half * T::two_pi().ln() + order * T::lit(2.0).ln() + ln_gamma(order + T::one())
            - log_series_sum(order, kappa)
    } else {
        order * kappa.ln()
            - half * T::two_pi().ln()
            - log_bessel_i(order, kappa).expect("valid bessel arguments")
    }
}

/// Derivative of `log C_r(kappa)` in `kappa`, which is `-A_r(kappa)`.
pub fn log_normalizer_derivative<T: Real>(dim: usize, kappa: T) -> T {
    -mean_resultant_ratio(dim, kappa)
}

/// Log density of `point` under `params`.
pub fn vmf_log_density<T: Real>(point: &UnitVector<T>, params: &VmfParams<T>) -> Result<T> {
    if point.dim() != params.dim() {
        return dimension(format!(
            "point has dimension {}, mean direction has {}",
            point.dim(),
            params.dim()
        ));
    }
    let kappa = params.concentration;
    Ok(log_normalizer(point.dim(), kappa) + kappa * point.dot(&params.mean_direction))
}

/// Mean resultant length `A_r(kappa) = I_{r/2}(kappa) / I_{r/2-1}(kappa)`.
pub fn mean_resultant_ratio<T: Real>(dim: usize, kappa: T) -> T {
    if kappa <= T::zero() {
        return T::zero();
    }
    let order = T::count(dim) * T::lit(0.5) - T::one();
    bessel_ratio(order, kappa)
}

/// `d A_r / d kappa = 1 - A^2 - (r - 1) A / kappa`.
pub fn mean_resultant_ratio_derivative<T: Real>(dim: usize, kappa: T) -> T {
    if kappa <= T::zero() {
        return T::one() / T::count(dim);
    }
    let a = mean_resultant_ratio(dim, kappa);
    T::one() - a * a - T::count(dim - 1) * a / kappa
}

/// Inverts `A_r`: finds `kappa` with `A_r(kappa) = rbar`.
///
/// Starts from `rbar (r - rbar^2) / (1 - rbar^2)` and applies at most 20
/// safeguarded Newton steps.
pub fn concentration_from_resultant<T: Real>(dim: usize, rbar: T) -> Result<T> {
    if dim < 2 {
        return domain(format!("dimension must be >= 2, got {dim}"));
    }
    if !(rbar >= T::zero()) || !(rbar < T::one()) {
        return domain(format!("mean resultant length must lie in [0, 1), got {rbar}"));
    }
    if rbar == T::zero() {
        return Ok(T::zero());
    }
    let r = T::count(dim);
    let r2 = rbar * rbar;
    let mut kappa = rbar * (r - r2) / (T::one() - r2);
    let target_tol = T::eps() * T::lit(16.0);
    for _ in 0..20 {
        let a = mean_resultant_ratio(dim, kappa);
        let resid = a - rbar;
        if resid.abs() <= target_tol {
            break;
        }
        let slope = mean_resultant_ratio_derivative(dim, kappa);
        if !(slope > T::zero()) {
            break;
        }
        let mut next = kappa - resid / slope;
        if !(next > T::zero()) {
            next = kappa * T::lit(0.5);
        }
        if (next - kappa).abs() <= kappa * T::eps() {
            kappa = next;
            break;
        }
        kappa = next;
    }
    Ok(kappa)
}

/// Draws `count` i.i.d. vMF samples.
///
/// Uses Wood's rejection scheme for the cosine to the mean direction and a
/// uniform tangent direction, then maps `e_1` onto the mean with a Householder
/// reflection. Draw `t` uses its own substream of `rng_seed`, so results do not
/// depend on how many draws are requested.
pub fn sample_vmf<T: Real>(params: &VmfParams<T>, count: usize, rng_seed: u64) -> Result<Vec<UnitVector<T>>> {
    if count == 0 {
        return domain("sample count must be >= 1");
    }
    let mean: Vec<f64> = params.mean_direction.as_vector().iter().map(|x| x.as_f64()).collect();
    let kappa = params.concentration.as_f64();
    let sampler = WoodSampler::new(mean.len(), kappa);
    (0..count)
        .map(|t| {
            let mut rng = substream(rng_seed, tag::VMF, t as u64);
            let x = sampler.sample_around(&mean, &mut rng);
            UnitVector::normalize(DVector::from_iterator(x.len(), x.into_iter().map(T::lit)))
        })
        .collect()
}

/// Rejection sampler for the vMF cosine `w = <x, mu>`.
#[derive(Debug, Clone)]
pub struct WoodSampler {
    dim: usize,
    kappa: f64,
    b: f64,
    x0: f64,
    c: f64,
    beta: Beta<f64>,
}

impl WoodSampler {
    pub fn new(dim: usize, kappa: f64) -> Self {
        assert!(dim >= 2, "vMF sampling needs dimension >= 2");
        let m = (dim - 1) as f64;
        // b = (-2k + sqrt(4k^2 + m^2)) / m, rewritten without cancellation
        let b = m / (2.0 * kappa + (4.0 * kappa * kappa + m * m).sqrt());
        let x0 = (1.0 - b) / (1.0 + b);
        let c = kappa * x0 + m * (1.0 - x0 * x0).ln();
        let beta = Beta::new(m / 2.0, m / 2.0).expect("valid beta parameters");
        Self {
            dim,
            kappa,
            b,
            x0,
            c,
            beta,
        }
    }

    /// Samples the cosine between a draw and the mean direction.
    pub fn sample_cosine<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let m = (self.dim - 1) as f64;
        loop {
            let z = self.beta.sample(rng);
            let w = (1.0 - (1.0 + self.b) * z) / (1.0 - (1.0 - self.b) * z);
            let u: f64 = rng.random();
            if self.kappa * w + m * (1.0 - self.x0 * w).ln() - self.c >= u.ln() {
                return w.clamp(-1.0, 1.0);
            }
        }
    }

    /// Samples a point around `mean` (unit norm, length `dim`).
    pub fn sample_around<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Vec<f64> {
        let w = self.sample_cosine(rng);
        let mut tangent: Vec<f64> = loop {
            let g: Vec<f64> = (0..self.dim - 1).map(|_| rng.sample(StandardNormal)).collect();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-300 {
                break g.into_iter().map(|x| x / norm).collect();
            }
        };
        let s = (1.0 - w * w).max(0.0).sqrt();
        // point around e_1
        let mut y = Vec::with_capacity(self.dim);
        y.push(w);
        y.extend(tangent.drain(..).map(|t| s * t));
        householder_from_e1(mean, &mut y);
        y
    }
}

/// Applies the reflection exchanging `e_1` and `target` to `y` in place.
fn householder_from_e1(target: &[f64], y: &mut [f64]) {
    let mut u: Vec<f64> = target.iter().map(|t| -t).collect();
    u[0] += 1.0;
    let norm2: f64 = u.iter().map(|x| x * x).sum();
    if norm2 < 1e-30 {
        return;
    }
    let proj: f64 = u.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * proj / norm2;
    for (yi, ui) in y.iter_mut().zip(u.iter()) {
        *yi -= f * ui;
    }
}
