use nalgebra::{DMatrix, DVector};

use super::MetricsError;

/// Mean and unbiased covariance of a set of embedding vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub count: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Builds stats directly from moments, checking shape, symmetry and
    /// finiteness.
    pub fn from_moments(
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
        count: usize,
    ) -> Result<Self, MetricsError> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(MetricsError::DimMismatch {
                expected: d,
                got: covariance.nrows(),
            });
        }
        if count < 2 {
            return Err(MetricsError::TooFewVectors(count));
        }
        if mean.iter().chain(covariance.iter()).any(|x| !x.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        let scale = covariance.amax().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12 * scale {
                    return Err(MetricsError::NotSymmetric);
                }
            }
        }
        Ok(GaussianStats {
            mean,
            covariance,
            count,
        })
    }
}

/// Fits mean and covariance (divisor N-1) to `vectors`.
pub fn fit_gaussian<V: AsRef<[f64]>>(vectors: &[V]) -> Result<GaussianStats, MetricsError> {
    let n = vectors.len();
    if n < 2 {
        return Err(MetricsError::TooFewVectors(n));
    }
    let d = vectors[0].as_ref().len();
    if d == 0 {
        return Err(MetricsError::DimMismatch { expected: 1, got: 0 });
    }
    let mut mean = DVector::<f64>::zeros(d);
    for v in vectors {
        let v = v.as_ref();
        if v.len() != d {
            return Err(MetricsError::DimMismatch {
                expected: d,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean /= n as f64;

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for v in vectors {
        for (c, (x, m)) in centered.iter_mut().zip(v.as_ref().iter().zip(mean.iter())) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(GaussianStats {
        mean,
        covariance: cov,
        count: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_pair() {
        let g = fit_gaussian(&[[0.0], [2.0]]).unwrap();
        assert_eq!(g.mean[0], 1.0);
        assert_eq!(g.covariance[(0, 0)], 2.0);
        assert_eq!(g.count, 2);
    }

    #[test]
    fn identical_vectors_have_zero_covariance() {
        let v = [0.5, -1.0, 3.0];
        let g = fit_gaussian(&[v, v, v, v]).unwrap();
        assert_eq!(g.mean.as_slice(), &v);
        assert!(g.covariance.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn preconditions() {
        assert!(matches!(fit_gaussian(&[[1.0]]), Err(MetricsError::TooFewVectors(1))));
        assert!(matches!(
            fit_gaussian(&[vec![1.0, 2.0], vec![1.0]]),
            Err(MetricsError::DimMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(
            fit_gaussian(&[[1.0], [f64::NAN]]),
            Err(MetricsError::NonFinite)
        ));
    }

    #[test]
    fn matches_hand_covariance_2d() {
        // (1,2),(3,6),(5,4): mean (3,4); deviations (-2,-2),(0,2),(2,0)
        let g = fit_gaussian(&[[1.0, 2.0], [3.0, 6.0], [5.0, 4.0]]).unwrap();
        assert_eq!(g.mean.as_slice(), &[3.0, 4.0]);
        assert_eq!(g.covariance[(0, 0)], 4.0);
        assert_eq!(g.covariance[(1, 1)], 4.0);
        assert_eq!(g.covariance[(0, 1)], 2.0);
        assert_eq!(g.covariance[(1, 0)], 2.0);
    }
}
