//! Scenario configuration files.
//!
//! Human-editable TOML with a strict schema: unknown keys are rejected
//! everywhere, so a typo cannot silently fall back to a default. Physical
//! quantities carry the units documented per model (`models` module);
//! values are range-checked at load.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    pub chain: ChainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryConfig>,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// One of the built-in model names.
    pub name: String,
    /// Parameter overrides; units as documented per model.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    /// Terminal level N; `alpha` must list N + 1 entries (α_0 … α_N).
    pub n: usize,
    pub alpha: Vec<AlphaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sqrt_slope_cap: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaKind {
    Linear,
    Sqrt,
    Power,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaConfig {
    pub kind: AlphaKind,
    pub gain: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    IccbfQp,
    ClfCbfQpClipped,
    IccbfClfRelaxed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesiredKind {
    Zero,
    ClfRate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// `iccbf-qp`: what to track when the barrier row is slack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired: Option<DesiredKind>,
    /// CLF decay rate (desired-control rate for `iccbf-qp`, row rate for
    /// the relaxed and clipped programs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clf_rate: Option<f64>,
    /// `clf-cbf-qp-clipped`: plain barrier-row gain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cbf_gain: Option<f64>,
    /// `clf-cbf-qp-clipped`: quadratic penalty on the CLF slack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_penalty: Option<f64>,
    /// `iccbf-clf-relaxed`: linear weight on the CLF slack δ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_weight: Option<f64>,
    /// `iccbf-clf-relaxed`: linear weight on the barrier gain increment k.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_weight: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub x0: Vec<f64>,
    /// Horizon, s.
    pub t_end: f64,
    /// Fixed integration step, s.
    pub dt: f64,
    /// Stop when the model's goal metric drops to this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_range: Option<f64>,
    /// Evaluate the controller per integration stage instead of per step.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub per_stage_control: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Search box, one [lo, hi] per state coordinate.
    pub domain: Vec<[f64; 2]>,
    /// Quasi-random sample count (≥ 1000).
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_starts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Also write the refinement trace CSV.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub write_trace: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    /// State coordinates the grid spans (2-D models: [0, 1]).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<[usize; 2]>,
    /// Fixed values of the remaining coordinates (full state template).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<Vec<f64>>,
    pub grid: [GridAxisConfig; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxisConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Shape and range checks that do not need the model built.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));

        // jets carry 2^depth coefficients, so the chain depth must stay small
        if self.chain.n >= 16 {
            return fail(format!("chain.n = {} is beyond any supported depth", self.chain.n));
        }
        if self.chain.alpha.len() != self.chain.n + 1 {
            return fail(format!(
                "chain.n = {} needs {} alpha entries, got {}",
                self.chain.n,
                self.chain.n + 1,
                self.chain.alpha.len()
            ));
        }
        if let Some(d) = self.chain.max_depth {
            if d > 16 {
                return fail(format!("chain.max_depth = {d} is beyond any supported depth"));
            }
        }
        for (k, v) in &self.model.params {
            if !v.is_finite() {
                return fail(format!("model.params.{k} must be finite, got {v}"));
            }
        }
        for (i, a) in self.chain.alpha.iter().enumerate() {
            if !(a.gain > 0.0 && a.gain.is_finite()) {
                return fail(format!("alpha[{i}].gain must be positive, got {}", a.gain));
            }
            match a.kind {
                AlphaKind::Power => {
                    let e = a.exponent.unwrap_or(0.0);
                    if !(e > 0.0 && e.is_finite()) {
                        return fail(format!(
                            "alpha[{i}] of kind power needs a positive exponent"
                        ));
                    }
                }
                _ => {
                    if a.exponent.is_some() {
                        return fail(format!(
                            "alpha[{i}].exponent only applies to the power kind"
                        ));
                    }
                }
            }
        }
        if let Some(m) = self.chain.margin {
            if !(m >= 0.0 && m.is_finite()) {
                return fail(format!("chain.margin must be nonnegative, got {m}"));
            }
        }
        if let Some(cap) = self.chain.sqrt_slope_cap {
            if !(cap > 0.0 && cap.is_finite()) {
                return fail(format!("chain.sqrt_slope_cap must be positive, got {cap}"));
            }
        }

        if let Some(sim) = &self.sim {
            if !(sim.dt > 0.0 && sim.dt.is_finite()) {
                return fail(format!("sim.dt must be positive, got {}", sim.dt));
            }
            if !(sim.t_end > 0.0 && sim.t_end.is_finite()) {
                return fail(format!("sim.t_end must be positive, got {}", sim.t_end));
            }
            if sim.x0.iter().any(|v| !v.is_finite()) {
                return fail("sim.x0 must be finite".into());
            }
            if sim.t_end / sim.dt > 1e8 {
                return fail(format!(
                    "sim horizon needs {} steps; refusing more than 1e8",
                    sim.t_end / sim.dt
                ));
            }
            if let Some(goal) = sim.goal_range {
                if !(goal > 0.0 && goal.is_finite()) {
                    return fail(format!("sim.goal_range must be positive, got {goal}"));
                }
            }
        }

        if let Some(v) = &self.verify {
            if v.budget < crate::verify::MIN_BUDGET {
                return fail(format!(
                    "verify.budget must be at least {}, got {}",
                    crate::verify::MIN_BUDGET,
                    v.budget
                ));
            }
            if v.budget > 100_000_000 {
                return fail(format!("verify.budget = {} is unreasonably large", v.budget));
            }
            for [lo, hi] in &v.domain {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return fail(format!("verify.domain interval [{lo}, {hi}] is invalid"));
                }
            }
        }

        if let Some(b) = &self.boundary {
            for g in &b.grid {
                if !(g.min.is_finite() && g.max.is_finite() && g.min < g.max) {
                    return fail(format!(
                        "boundary.grid interval [{}, {}] is invalid",
                        g.min, g.max
                    ));
                }
                if g.points < 2 {
                    return fail("boundary.grid needs at least 2 points per axis".into());
                }
                if g.points > 10_000 {
                    return fail(format!("boundary.grid axis of {} points is too fine", g.points));
                }
            }
            if let Some(fixed) = &b.fixed {
                if fixed.iter().any(|v| !v.is_finite()) {
                    return fail("boundary.fixed must be finite".into());
                }
            }
            if let Some([a, bx]) = b.axes {
                if a == bx {
                    return fail("boundary.axes must name two distinct coordinates".into());
                }
            }
        }

        if let Some(c) = &self.controller {
            let need_pos = |name: &str, v: Option<f64>| -> Result<(), ConfigError> {
                match v {
                    Some(x) if x > 0.0 && x.is_finite() => Ok(()),
                    Some(x) => Err(ConfigError::Invalid(format!(
                        "controller.{name} must be positive, got {x}"
                    ))),
                    None => Ok(()),
                }
            };
            need_pos("clf_rate", c.clf_rate)?;
            need_pos("cbf_gain", c.cbf_gain)?;
            need_pos("delta_penalty", c.delta_penalty)?;
            need_pos("delta_weight", c.delta_weight)?;
            need_pos("k_weight", c.k_weight)?;
        }

        if self.output.dir.is_empty() {
            return fail("output.dir must not be empty".into());
        }
        Ok(())
    }
}
