//! Problem configuration: one JSON file carrying the market, the preference
//! pair, the capital and risk budgets, and solver knobs. Unknown keys are
//! rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use shortfall_core::bsmarket::{MarketModel, Truncation};
use shortfall_core::discrete::DiscreteMarket;
use shortfall_core::preferences::{LossFn, UtilityFn};

/// Either market form, detected by shape: a discrete market carries a
/// `probs` key, a Black-Scholes market a `T` key.
#[derive(Debug, Clone)]
pub enum MarketKind {
    BlackScholes(Box<MarketModel>),
    Discrete(DiscreteMarket),
}

/// Optional pinned solution values; `verify` compares against them when
/// present, which turns a config into a regression golden file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedValues {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_value: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    market: serde_json::Value,
    utility: UtilityFn,
    loss: LossFn,
    x: f64,
    x1: f64,
    #[serde(default)]
    truncation: Option<Truncation>,
    #[serde(default = "default_quadrature_order")]
    quadrature_order: usize,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default)]
    expected: Option<ExpectedValues>,
}

fn default_quadrature_order() -> usize {
    64
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub market: MarketKind,
    pub utility: UtilityFn,
    pub loss: LossFn,
    pub x: f64,
    pub x1: f64,
    pub truncation: Truncation,
    pub quadrature_order: usize,
    pub seed: u64,
    pub expected: Option<ExpectedValues>,
}

impl ProblemConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let data = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&data)
    }

    pub fn parse(data: &str) -> Result<Self, String> {
        let raw: RawConfig =
            serde_json::from_str(data).map_err(|e| format!("config schema error: {e}"))?;
        let market = match &raw.market {
            serde_json::Value::Object(map) if map.contains_key("probs") => {
                let m: DiscreteMarket = serde_json::from_value(raw.market.clone())
                    .map_err(|e| format!("discrete market schema error: {e}"))?;
                MarketKind::Discrete(m)
            }
            serde_json::Value::Object(_) => {
                let m: MarketModel = serde_json::from_value(raw.market.clone())
                    .map_err(|e| format!("market schema error: {e}"))?;
                MarketKind::BlackScholes(Box::new(m))
            }
            _ => return Err("config field `market` must be an object".into()),
        };
        if !(raw.x > 0.0) || !raw.x.is_finite() {
            return Err(format!("x must be a positive real, got {}", raw.x));
        }
        if !raw.x1.is_finite() {
            return Err(format!("x1 must be finite, got {}", raw.x1));
        }
        if raw.quadrature_order < 1 || raw.quadrature_order > 256 {
            return Err(format!(
                "quadrature_order must be in 1..=256, got {}",
                raw.quadrature_order
            ));
        }
        Ok(ProblemConfig {
            market,
            utility: raw.utility,
            loss: raw.loss,
            x: raw.x,
            x1: raw.x1,
            truncation: raw.truncation.unwrap_or_default(),
            quadrature_order: raw.quadrature_order,
            seed: raw.seed,
            expected: raw.expected,
        })
    }
}
