use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::embed::{MPNET_ID, USE_ID};

/// Slack applied at every band edge. Real-valued edges such as
/// `|0.9 - 0.7| <= 0.2` do not survive binary floating point exactly.
pub const EDGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GateError {
    #[error("similarity score {0} lies outside [-1, 1]")]
    ScoreOutOfRange(f64),
    #[error("invalid band [{lower}, {upper}]: need -1 <= lower < upper <= 1")]
    InvalidBand { lower: f64, upper: f64 },
    #[error("invalid gate configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown gate mode {0:?} (expected use, mpnet or dual)")]
    UnknownMode(String),
}

/// Closed similarity interval for one encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBand", into = "RawBand")]
pub struct EncoderBand {
    lower: f64,
    upper: f64,
}

#[derive(Serialize, Deserialize)]
struct RawBand {
    lower: f64,
    upper: f64,
}

impl TryFrom<RawBand> for EncoderBand {
    type Error = GateError;
    fn try_from(raw: RawBand) -> Result<Self, GateError> {
        EncoderBand::new(raw.lower, raw.upper)
    }
}

impl From<EncoderBand> for RawBand {
    fn from(band: EncoderBand) -> Self {
        RawBand { lower: band.lower, upper: band.upper }
    }
}

impl EncoderBand {
    pub const USE_DEFAULT: EncoderBand = EncoderBand { lower: 0.60, upper: 0.90 };
    pub const MPNET_DEFAULT: EncoderBand = EncoderBand { lower: 0.70, upper: 0.90 };

    pub fn new(lower: f64, upper: f64) -> Result<Self, GateError> {
        if !(-1.0..=1.0).contains(&lower) || !(-1.0..=1.0).contains(&upper) || lower >= upper {
            return Err(GateError::InvalidBand { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    fn check(&self, score: f64) -> GateReason {
        if score < self.lower - EDGE_TOLERANCE {
            GateReason::BelowLower
        } else if score > self.upper + EDGE_TOLERANCE {
            GateReason::AboveCap
        } else {
            GateReason::InBand
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    #[serde(alias = "use")]
    SingleUse,
    #[serde(alias = "mpnet")]
    SingleMpnet,
    #[serde(alias = "both")]
    Dual,
}

impl FromStr for GateMode {
    type Err = GateError;
    fn from_str(s: &str) -> Result<Self, GateError> {
        match s {
            "use" | "single_use" => Ok(GateMode::SingleUse),
            "mpnet" | "single_mpnet" => Ok(GateMode::SingleMpnet),
            "dual" | "both" => Ok(GateMode::Dual),
            other => Err(GateError::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for GateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateMode::SingleUse => "use",
            GateMode::SingleMpnet => "mpnet",
            GateMode::Dual => "dual",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub mode: GateMode,
    pub use_band: EncoderBand,
    pub mpnet_band: EncoderBand,
    /// Relaxed lower bound for the USE score when both encoders vote.
    pub dual_use_lower: f64,
    /// Largest tolerated gap between the two encoder scores.
    pub agreement_delta: f64,
    /// Upper cap on the USE score in dual mode.
    pub upper_cap: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            mode: GateMode::Dual,
            use_band: EncoderBand::USE_DEFAULT,
            mpnet_band: EncoderBand::MPNET_DEFAULT,
            dual_use_lower: 0.50,
            agreement_delta: 0.20,
            upper_cap: 0.90,
        }
    }
}

impl GateConfig {
    pub fn with_mode(mode: GateMode) -> Self {
        Self { mode, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), GateError> {
        if !(0.0..=2.0).contains(&self.agreement_delta) {
            return Err(GateError::InvalidConfig(format!(
                "agreement_delta {} outside [0, 2]",
                self.agreement_delta
            )));
        }
        if !(self.dual_use_lower < self.upper_cap) {
            return Err(GateError::InvalidConfig(format!(
                "dual_use_lower {} must be below upper_cap {}",
                self.dual_use_lower, self.upper_cap
            )));
        }
        Ok(())
    }

    /// Provider ids whose scores this configuration consumes.
    pub fn required_providers(&self) -> &'static [&'static str] {
        match self.mode {
            GateMode::SingleUse => &[USE_ID],
            GateMode::SingleMpnet => &[MPNET_ID],
            GateMode::Dual => &[USE_ID, MPNET_ID],
        }
    }

    /// Apply the configured rule to whichever scores are available.
    pub fn decide(
        &self,
        use_score: Option<f64>,
        mpnet_score: Option<f64>,
    ) -> Result<GateDecision, GateError> {
        let missing = || {
            let mut scores = BTreeMap::new();
            if let Some(s) = use_score {
                scores.insert(USE_ID.to_string(), s);
            }
            if let Some(s) = mpnet_score {
                scores.insert(MPNET_ID.to_string(), s);
            }
            GateDecision { accepted: false, scores, reason: GateReason::MissingScore }
        };
        match self.mode {
            GateMode::SingleUse => match use_score {
                Some(s) => gate_single(s, &self.use_band).map(|d| d.with_score(USE_ID, s)),
                None => Ok(missing()),
            },
            GateMode::SingleMpnet => match mpnet_score {
                Some(s) => gate_single(s, &self.mpnet_band).map(|d| d.with_score(MPNET_ID, s)),
                None => Ok(missing()),
            },
            GateMode::Dual => match (use_score, mpnet_score) {
                (Some(u), Some(m)) => gate_dual(u, m, self),
                _ => Ok(missing()),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateReason {
    InBand,
    BelowLower,
    AboveCap,
    Disagreement,
    MissingScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub accepted: bool,
    pub scores: BTreeMap<String, f64>,
    pub reason: GateReason,
}

impl GateDecision {
    fn from_reason(reason: GateReason) -> Self {
        Self { accepted: reason == GateReason::InBand, scores: BTreeMap::new(), reason }
    }

    fn with_score(mut self, provider: &str, score: f64) -> Self {
        self.scores.insert(provider.to_string(), score);
        self
    }
}

fn check_range(score: f64) -> Result<(), GateError> {
    if (-1.0..=1.0).contains(&score) {
        Ok(())
    } else {
        Err(GateError::ScoreOutOfRange(score))
    }
}

/// Accept iff `lower <= score <= upper`.
pub fn gate_single(score: f64, band: &EncoderBand) -> Result<GateDecision, GateError> {
    check_range(score)?;
    Ok(GateDecision::from_reason(band.check(score)))
}

/// Both-encoder rule. Checks run in a fixed order and the first failure
/// names the reason:
///
/// 1. USE score at least `dual_use_lower`
/// 2. MPNet score inside `mpnet_band`
/// 3. USE score at most `upper_cap`
/// 4. `|use - mpnet| <= agreement_delta`
pub fn gate_dual(s_use: f64, s_mpnet: f64, cfg: &GateConfig) -> Result<GateDecision, GateError> {
    check_range(s_use)?;
    check_range(s_mpnet)?;
    let reason = if s_use < cfg.dual_use_lower - EDGE_TOLERANCE {
        GateReason::BelowLower
    } else if cfg.mpnet_band.check(s_mpnet) != GateReason::InBand {
        cfg.mpnet_band.check(s_mpnet)
    } else if s_use > cfg.upper_cap + EDGE_TOLERANCE {
        GateReason::AboveCap
    } else if !scores_agree(s_use, s_mpnet, cfg.agreement_delta) {
        GateReason::Disagreement
    } else {
        GateReason::InBand
    };
    Ok(GateDecision::from_reason(reason)
        .with_score(USE_ID, s_use)
        .with_score(MPNET_ID, s_mpnet))
}

pub(crate) fn scores_agree(a: f64, b: f64, delta: f64) -> bool {
    (a - b).abs() <= delta + EDGE_TOLERANCE
}
