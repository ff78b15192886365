//! Fréchet distance between two Gaussians fitted to embeddings.
//!
//! `F = |mu_b - mu_e|^2 + tr(S_b) + tr(S_e) - 2 tr((S_b S_e)^(1/2))`. The
//! trace of the square root is taken as the sum of square roots of the
//! eigenvalues of the symmetric matrix `S_b^(1/2) S_e S_b^(1/2)`, which has
//! the same spectrum as `S_b S_e` but stays symmetric in floating point.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::gaussian::{fit_gaussian, GaussianStats};
use super::MetricsError;

pub const DEFAULT_EPS: f64 = 1e-6;

/// Upper bounds of the two better categories; intervals are half-open.
pub const HIGHLY_SIMILAR_BELOW: f64 = 10.0;
pub const MODERATELY_SIMILAR_BELOW: f64 = 15.0;

const EIGEN_TOL: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadCategory {
    HighlySimilar,
    ModeratelySimilar,
    SignificantlyDistinct,
}

impl FadCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            FadCategory::HighlySimilar => "highly_similar",
            FadCategory::ModeratelySimilar => "moderately_similar",
            FadCategory::SignificantlyDistinct => "significantly_distinct",
        }
    }
}

impl fmt::Display for FadCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn categorize_fad(value: f64) -> Result<FadCategory, MetricsError> {
    if value.is_nan() || value < 0.0 {
        return Err(MetricsError::NegativeScore(value));
    }
    Ok(if value < HIGHLY_SIMILAR_BELOW {
        FadCategory::HighlySimilar
    } else if value < MODERATELY_SIMILAR_BELOW {
        FadCategory::ModeratelySimilar
    } else {
        FadCategory::SignificantlyDistinct
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadResult {
    pub value: f64,
    pub category: FadCategory,
    pub mean_term: f64,
    pub trace_term: f64,
    pub stabilization_eps_used: f64,
}

/// When to add `eps * I` to both covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stabilize {
    /// Only if a covariance has a clearly negative eigenvalue.
    OnFailure,
    /// Unconditionally; needed for covariances fitted from few frames.
    Always,
}

pub fn frechet_distance(
    bg: &GaussianStats,
    eval: &GaussianStats,
    eps: f64,
) -> Result<FadResult, MetricsError> {
    frechet_distance_with(bg, eval, eps, Stabilize::OnFailure)
}

pub fn frechet_distance_with(
    bg: &GaussianStats,
    eval: &GaussianStats,
    eps: f64,
    stabilize: Stabilize,
) -> Result<FadResult, MetricsError> {
    let d = bg.dim();
    if eval.dim() != d {
        return Err(MetricsError::DimMismatch {
            expected: d,
            got: eval.dim(),
        });
    }
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(MetricsError::InvalidEps(eps));
    }
    let diff = &bg.mean - &eval.mean;
    let mean_term = diff.dot(&diff);

    let first_eps = match stabilize {
        Stabilize::Always => eps,
        Stabilize::OnFailure => 0.0,
    };
    let (trace_sqrt, eps_used) = match trace_sqrt_product(&bg.covariance, &eval.covariance, first_eps) {
        Ok(t) => (t, first_eps),
        Err(MetricsError::NotPsd) if first_eps == 0.0 && eps > 0.0 => {
            (trace_sqrt_product(&bg.covariance, &eval.covariance, eps)?, eps)
        }
        Err(e) => return Err(e),
    };
    let shift = 2.0 * eps_used * d as f64;
    let trace_term =
        (bg.covariance.trace() + eval.covariance.trace() + shift - 2.0 * trace_sqrt).max(0.0);
    let value = mean_term + trace_term;
    Ok(FadResult {
        value,
        category: categorize_fad(value)?,
        mean_term,
        trace_term,
        stabilization_eps_used: eps_used,
    })
}

fn shifted(m: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    if eps == 0.0 {
        return m.clone();
    }
    let mut out = m.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += eps;
    }
    out
}

fn eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, MetricsError> {
    SymmetricEigen::try_new(m, EIGEN_TOL, EIGEN_MAX_ITER).ok_or(MetricsError::NumericalFailure)
}

fn is_numerically_psd(values: &nalgebra::DVector<f64>) -> bool {
    let scale = values.amax().max(1.0);
    values.iter().all(|&l| l.is_finite() && l >= -1e-10 * scale)
}

// Sum of sqrt-eigenvalues of S_b^(1/2) S_e S_b^(1/2) with `eps` added to
// both diagonals. Errs when either matrix is clearly indefinite.
fn trace_sqrt_product(sb: &DMatrix<f64>, se: &DMatrix<f64>, eps: f64) -> Result<f64, MetricsError> {
    let sb = shifted(sb, eps);
    let se = shifted(se, eps);
    let eb = eigen(sb)?;
    if !is_numerically_psd(&eb.eigenvalues) {
        return Err(MetricsError::NotPsd);
    }
    let ee = eigen(se.clone())?;
    if !is_numerically_psd(&ee.eigenvalues) {
        return Err(MetricsError::NotPsd);
    }
    let roots = eb.eigenvalues.map(|l| l.max(0.0).sqrt());
    let sqrt_b = &eb.eigenvectors * DMatrix::from_diagonal(&roots) * eb.eigenvectors.transpose();
    let mut m = &sqrt_b * se * &sqrt_b;
    let mt = m.transpose();
    m = (m + mt) * 0.5;
    let em = eigen(m)?;
    Ok(em.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum())
}

/// How embeddings are grouped before fitting Gaussians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadMode {
    /// All reference vectors of a class against all generated vectors of it.
    PerGroup,
    /// Frames of one generated clip against frames of its own reference.
    PerSample,
}

/// FAD between a reference vector set and a generated one.
///
/// Per-sample scoring always stabilizes because a handful of frames cannot
/// give a full-rank covariance.
pub fn fad_between<V: AsRef<[f64]>>(
    reference: &[V],
    generated: &[V],
    mode: FadMode,
    eps: f64,
) -> Result<FadResult, MetricsError> {
    let bg = fit_gaussian(reference)?;
    let ev = fit_gaussian(generated)?;
    let stabilize = match mode {
        FadMode::PerGroup => Stabilize::OnFailure,
        FadMode::PerSample => Stabilize::Always,
    };
    let eps = match mode {
        FadMode::PerSample if eps == 0.0 => DEFAULT_EPS,
        _ => eps,
    };
    frechet_distance_with(&bg, &ev, eps, stabilize)
}
