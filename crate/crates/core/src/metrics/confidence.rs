use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Lower edges of the confidence bins; the last bin is closed at 1.
pub const BIN_EDGES: [f64; 4] = [0.0, 0.30, 0.50, 0.70];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSummary {
    pub n: usize,
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub bins: Vec<ConfidenceBin>,
}

pub fn bin_index(value: f64) -> usize {
    BIN_EDGES.iter().rposition(|&edge| value >= edge).unwrap_or(0)
}

pub fn summarize_confidence(values: &[f64]) -> Result<ConfidenceSummary, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(MetricsError::OutOfRange(bad));
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut counts = [0usize; 4];
    for &v in values {
        counts[bin_index(v)] += 1;
    }
    let bins = counts
        .iter()
        .enumerate()
        .map(|(i, &count)| ConfidenceBin {
            lower: BIN_EDGES[i],
            upper: BIN_EDGES.get(i + 1).copied().unwrap_or(1.0),
            count,
            percent: 100.0 * count as f64 / n as f64,
        })
        .collect();
    Ok(ConfidenceSummary {
        n,
        max: sorted[n - 1],
        min: sorted[0],
        mean: mean.clamp(sorted[0], sorted[n - 1]),
        median,
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_values() {
        let s = summarize_confidence(&[0.33, 1.00]).unwrap();
        assert_eq!(s.min, 0.33);
        assert_eq!(s.max, 1.0);
        assert!((s.mean - 0.665).abs() < 1e-12);
        assert!((s.median - 0.665).abs() < 1e-12);
    }

    #[test]
    fn hand_counted_bins() {
        let s = summarize_confidence(&[0.4, 0.6, 0.8, 0.9]).unwrap();
        let counts: Vec<usize> = s.bins.iter().map(|b| b.count).collect();
        let pcts: Vec<f64> = s.bins.iter().map(|b| b.percent).collect();
        assert_eq!(counts, vec![0, 1, 1, 2]);
        assert_eq!(pcts, vec![0.0, 25.0, 25.0, 50.0]);
    }

    #[test]
    fn singleton_and_edges() {
        let s = summarize_confidence(&[0.5]).unwrap();
        assert_eq!(s.median, 0.5);
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.bins[2].count, 1);
        assert_eq!(bin_index(0.0), 0);
        assert_eq!(bin_index(0.30), 1);
        assert_eq!(bin_index(0.70), 3);
        assert_eq!(bin_index(1.0), 3);
    }

    #[test]
    fn errors() {
        assert!(matches!(summarize_confidence(&[]), Err(MetricsError::EmptyInput)));
        assert!(matches!(summarize_confidence(&[1.2]), Err(MetricsError::OutOfRange(_))));
        assert!(matches!(summarize_confidence(&[f64::NAN]), Err(MetricsError::OutOfRange(_))));
    }
}
