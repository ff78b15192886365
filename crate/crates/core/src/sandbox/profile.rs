//! Per-tier acceptance rules for produced audio.
//!
//! These numbers mirror the constraints stated in the builtin prompts; a test
//! keeps the two in agreement.

use serde::{Deserialize, Serialize};

use super::wav::WaveInfo;
use crate::corpus::Tier;

/// Slack around the duration range.
pub const DURATION_TOLERANCE: f64 = 0.5;

/// Peaks below this fraction of full scale count as silence.
pub const SILENCE_PEAK: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierProfile {
    pub tier: Tier,
    pub expected_sample_rate: u32,
    pub duration_range: (f64, f64),
    pub silence_peak_threshold: f64,
}

impl TierProfile {
    pub fn for_tier(tier: Tier) -> TierProfile {
        let (rate, range) = match tier {
            Tier::Notes => (16_000, (4.0, 4.0)),
            Tier::Environment => (44_100, (2.0, 3.0)),
            // the speech prompt leaves the rate open; 16 kHz matches the
            // reference recordings
            Tier::Speech => (16_000, (2.0, 2.0)),
        };
        TierProfile {
            tier,
            expected_sample_rate: rate,
            duration_range: range,
            silence_peak_threshold: SILENCE_PEAK,
        }
    }

    pub fn accepts(&self, info: &WaveInfo) -> bool {
        let (lo, hi) = self.duration_range;
        info.sample_rate == self.expected_sample_rate
            && info.duration >= lo - DURATION_TOLERANCE
            && info.duration <= hi + DURATION_TOLERANCE
            && info.peak_amplitude > self.silence_peak_threshold
    }
}
