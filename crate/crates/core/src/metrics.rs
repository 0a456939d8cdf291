//! Distribution metrics for 2-D sample sets.
//!
//! Sample quality is scored by the Fréchet distance between Gaussians
//! moment-matched to real and generated points, directly in data space. For
//! 2x2 covariances the matrix square root reduces to a closed form, so no
//! linear-algebra dependency is needed.

use core::fmt;

use crate::gan::DatasetSpec;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsError {
    /// Moment matching needs at least 3 points for an unbiased covariance.
    InsufficientSamples { got: usize },
    EmptyScores,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::InsufficientSamples { got } => {
                write!(f, "insufficient samples: need at least 3 points, got {}", got)
            }
            MetricsError::EmptyScores => write!(f, "score lists must be non-empty"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MetricsError {}

/// Mean and covariance of a 2-D point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl GaussianFit {
    /// Moment-matches a Gaussian: sample mean, unbiased (n-1) covariance.
    /// Covariance eigenvalues may dip slightly below zero numerically; they
    /// are clamped to zero so downstream square roots stay real.
    pub fn fit(points: &[[f64; 2]]) -> Result<GaussianFit, MetricsError> {
        if points.len() < 3 {
            return Err(MetricsError::InsufficientSamples { got: points.len() });
        }
        let n = points.len() as f64;
        let mut mean = [0.0f64; 2];
        for p in points {
            mean[0] += p[0];
            mean[1] += p[1];
        }
        mean[0] /= n;
        mean[1] /= n;
        let mut cov = [[0.0f64; 2]; 2];
        for p in points {
            let dx = p[0] - mean[0];
            let dy = p[1] - mean[1];
            cov[0][0] += dx * dx;
            cov[0][1] += dx * dy;
            cov[1][1] += dy * dy;
        }
        let denom = n - 1.0;
        cov[0][0] /= denom;
        cov[0][1] /= denom;
        cov[1][1] /= denom;
        cov[1][0] = cov[0][1];
        Ok(GaussianFit { mean, cov }.clamped())
    }

    fn clamped(mut self) -> GaussianFit {
        let a = self.cov[0][0];
        let b = self.cov[0][1];
        let d = self.cov[1][1];
        let half_tr = 0.5 * (a + d);
        let disc = (0.5 * (a - d)) * (0.5 * (a - d)) + b * b;
        let root = disc.max(0.0).sqrt();
        let lo = half_tr - root;
        if lo >= 0.0 {
            return self;
        }
        debug_assert!(lo >= -1e-9, "sample covariance far from PSD: {}", lo);
        // rebuild from the eigendecomposition with the negative value at zero
        let hi = half_tr + root;
        let (vx, vy) = if b.abs() > 1e-300 {
            (hi - d, b)
        } else if a >= d {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let norm = (vx * vx + vy * vy).sqrt();
        let (ux, uy) = (vx / norm, vy / norm);
        self.cov[0][0] = hi * ux * ux;
        self.cov[0][1] = hi * ux * uy;
        self.cov[1][0] = self.cov[0][1];
        self.cov[1][1] = hi * uy * uy;
        self
    }
}

/// Fréchet distance between two fitted Gaussians:
/// `|mu1 - mu2|^2 + tr(C1 + C2 - 2 (C1 C2)^(1/2))`.
///
/// For 2x2 matrices `tr((C1 C2)^(1/2)) = sqrt(tr(C1 C2) + 2 sqrt(det(C1 C2)))`;
/// negative determinants from rounding are clamped to zero, as is the final
/// distance, and the result is symmetric in its arguments.
pub fn frechet_from_fits(a: &GaussianFit, b: &GaussianFit) -> f64 {
    let dx = a.mean[0] - b.mean[0];
    let dy = a.mean[1] - b.mean[1];
    let mean_term = dx * dx + dy * dy;

    let p = a.cov;
    let q = b.cov;
    let m00 = p[0][0] * q[0][0] + p[0][1] * q[1][0];
    let m01 = p[0][0] * q[0][1] + p[0][1] * q[1][1];
    let m10 = p[1][0] * q[0][0] + p[1][1] * q[1][0];
    let m11 = p[1][0] * q[0][1] + p[1][1] * q[1][1];
    let tr_prod = m00 + m11;
    let det_prod = (m00 * m11 - m01 * m10).max(0.0);
    let tr_sqrt = (tr_prod + 2.0 * det_prod.sqrt()).max(0.0).sqrt();

    let dist = mean_term + (p[0][0] + p[1][1]) + (q[0][0] + q[1][1]) - 2.0 * tr_sqrt;
    dist.max(0.0)
}

/// Fits both point sets and returns their Fréchet distance.
pub fn frechet_distance(xs: &[[f64; 2]], ys: &[[f64; 2]]) -> Result<f64, MetricsError> {
    let a = GaussianFit::fit(xs)?;
    let b = GaussianFit::fit(ys)?;
    Ok(frechet_from_fits(&a, &b))
}

/// Counts dataset modes that have at least one generated point within
/// `radius_mult * sigma` of the mode center. Returns `(covered, total)`.
pub fn mode_coverage(points: &[[f64; 2]], spec: &DatasetSpec, radius_mult: f64) -> (usize, usize) {
    let centers = spec.mode_centers();
    let radius = radius_mult * spec.sigma;
    let r2 = radius * radius;
    let covered = centers
        .iter()
        .filter(|c| {
            points.iter().any(|p| {
                let dx = p[0] - c[0];
                let dy = p[1] - c[1];
                dx * dx + dy * dy <= r2
            })
        })
        .count();
    (covered, centers.len())
}

/// Fraction of correct discriminator calls at threshold 0.5: real scores must
/// exceed it, fake scores must not.
pub fn discriminator_accuracy(real: &[f64], fake: &[f64]) -> Result<f64, MetricsError> {
    if real.is_empty() || fake.is_empty() {
        return Err(MetricsError::EmptyScores);
    }
    let hits_real = real.iter().filter(|s| **s > 0.5).count();
    let hits_fake = fake.iter().filter(|s| **s <= 0.5).count();
    Ok((hits_real + hits_fake) as f64 / (real.len() + fake.len()) as f64)
}
