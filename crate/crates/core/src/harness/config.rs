//! JSON run description.

use serde::{Deserialize, Serialize};

use crate::adversary::{AttackSpec, SwitchingSpec};
use crate::aggregators::AggregatorSpec;
use crate::error::{Error, Result};
use crate::estimators::jmax_for;
use crate::objectives::{NoiseModel, ObjectiveSpec};
use crate::optimize::{Domain, LogBase, LrKind};
use crate::vecmath::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// MLMC gradients, robust aggregation, no fail-safe.
    Alg1Mlmc,
    /// MLMC with the fail-safe filter, `c_E = √(2κ + 1/m)`.
    Alg2Opt1 { kappa: f64 },
    /// MLMC with the fail-safe filter and level-wise MFM aggregation.
    Alg2Opt2,
    /// Worker momentum `m ← β·m + (1−β)·g`, aggregated every round.
    Momentum { beta: f64 },
    /// Plain mini-batch SGD with robust aggregation.
    Sgd,
}

impl Method {
    pub fn is_mlmc(&self) -> bool {
        matches!(self, Method::Alg1Mlmc | Method::Alg2Opt1 { .. } | Method::Alg2Opt2)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Alg1Mlmc => "alg1_mlmc",
            Method::Alg2Opt1 { .. } => "alg2_opt1",
            Method::Alg2Opt2 => "alg2_opt2",
            Method::Momentum { .. } => "momentum",
            Method::Sgd => "sgd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrConfig {
    Fixed {
        eta: f64,
    },
    AdagradNorm {
        eta0: f64,
    },
    /// One of the analytic step-size rules, computed from the run's constants.
    /// `kappa` is the aggregator's robustness constant; option-1 runs fall
    /// back to the method's own `kappa`.
    Theoretical {
        rule: LrKind,
        #[serde(default)]
        kappa: Option<f64>,
        #[serde(default)]
        log_base: LogBase,
    },
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

fn default_switching() -> SwitchingSpec {
    SwitchingSpec::Static { byz_indices: Vec::new() }
}

fn default_attack() -> AttackSpec {
    AttackSpec::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub objective: ObjectiveSpec,
    pub noise: NoiseModel,
    pub start: Vector,
    /// Number of workers `m`.
    pub workers: usize,
    pub method: Method,
    pub aggregator: AggregatorSpec,
    #[serde(default = "default_attack")]
    pub attack: AttackSpec,
    #[serde(default = "default_switching")]
    pub switching: SwitchingSpec,
    pub lr: LrConfig,
    /// Number of rounds `T`.
    pub horizon: usize,
    #[serde(default)]
    pub domain: Domain,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub seeds_count: usize,
    /// Replaces the default level cap `⌊log₂ T⌋`.
    #[serde(default)]
    pub jmax_override: Option<u32>,
    /// Share one sample stream between MLMC levels (prefix averages).
    #[serde(default = "default_true")]
    pub coupled_batches: bool,
    /// Per-worker mini-batch of the SGD and momentum baselines.
    #[serde(default = "default_one")]
    pub batch_size: usize,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn jmax(&self) -> u32 {
        self.jmax_override.unwrap_or_else(|| jmax_for(self.horizon.max(1)))
    }

    /// Checks every field that can be checked without building the run.
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.seeds_count == 0 {
            return Err(Error::config("seeds_count", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if let Some(j) = self.jmax_override {
            if j > 30 {
                return Err(Error::config("jmax_override", "must be at most 30"));
            }
        }
        let obj = self
            .objective
            .build()
            .map_err(|e| Error::config("objective", e.to_string()))?;
        if self.start.dim() != obj.dim() {
            return Err(Error::config(
                "start",
                format!("has dimension {}, objective has {}", self.start.dim(), obj.dim()),
            ));
        }
        self.noise.validate()?;
        if let NoiseModel::Drift { direction, .. } = &self.noise {
            if direction.dim() != obj.dim() {
                return Err(Error::config("noise.direction", "dimension differs from the objective"));
            }
        }
        self.aggregator.validate()?;
        if let AggregatorSpec::Cwtm { trim_k } = self.aggregator {
            if 2 * trim_k >= self.workers {
                return Err(Error::config("aggregator.trim_k", "need 2·trim_k < workers"));
            }
        }
        self.attack.validate()?;
        match &self.attack {
            AttackSpec::FixedShift { v } | AttackSpec::MomentumDynamic { v, .. } if v.dim() != obj.dim() => {
                return Err(Error::config("attack.v", "dimension differs from the objective"));
            }
            _ => {}
        }
        self.switching.validate(self.workers)?;
        if let SwitchingSpec::Static { .. } | SwitchingSpec::Periodic { .. } = self.switching {
            if self.switching.max_fraction(self.workers) >= 0.5 {
                return Err(Error::config("switching", "Byzantine fraction must be below 1/2"));
            }
        }
        self.domain
            .validate(obj.dim())
            .map_err(|e| Error::config("domain", e.to_string()))?;

        match &self.method {
            Method::Momentum { beta } if !(0.0..1.0).contains(beta) => {
                return Err(Error::config("method.beta", "must lie in [0, 1)"));
            }
            Method::Alg2Opt1 { kappa } if !(*kappa >= 0.0 && kappa.is_finite()) => {
                return Err(Error::config("method.kappa", "must be finite and non-negative"));
            }
            _ => {}
        }
        if matches!(self.method, Method::Alg2Opt1 { .. } | Method::Alg2Opt2) {
            match self.noise.bound() {
                Some(v) if v > 0.0 => {}
                _ => {
                    return Err(Error::config(
                        "noise",
                        "fail-safe methods need bounded noise with a positive bound",
                    ))
                }
            }
        }

        match &self.lr {
            LrConfig::Fixed { eta } if !(*eta > 0.0 && eta.is_finite()) => {
                return Err(Error::config("lr.eta", "must be positive"));
            }
            LrConfig::AdagradNorm { eta0 } if !(*eta0 > 0.0 && eta0.is_finite()) => {
                return Err(Error::config("lr.eta0", "must be positive"));
            }
            LrConfig::Theoretical { rule, kappa, .. } => {
                let kappa = kappa.or(match self.method {
                    Method::Alg2Opt1 { kappa } => Some(kappa),
                    _ => None,
                });
                if kappa.is_none() {
                    return Err(Error::config("lr.kappa", "theoretical rates need κ"));
                }
                if matches!(rule, LrKind::StaticConvex | LrKind::DynamicConvexOpt1) && self.domain.diameter().is_none() {
                    return Err(Error::config("lr.rule", "convex rates need a bounded domain"));
                }
                if matches!(rule, LrKind::DynamicNonconvexOpt1 | LrKind::DynamicConvexOpt1)
                    && self.noise.bound().is_none()
                {
                    return Err(Error::config("lr.rule", "dynamic rates need bounded noise"));
                }
                if self.horizon < 2 {
                    return Err(Error::config("horizon", "theoretical rates need T ≥ 2"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "objective": {"kind": "quadratic", "a": [[2, 1], [1, 2]]},
        "noise": {"kind": "gaussian", "sigma": 0.5},
        "start": [1, 1],
        "workers": 10,
        "method": {"kind": "alg1_mlmc"},
        "aggregator": {"kind": "cwtm", "trim_k": 2},
        "attack": {"kind": "sign_flip"},
        "switching": {"kind": "static", "byz_indices": [0, 1]},
        "lr": {"kind": "fixed", "eta": 0.01},
        "horizon": 100
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_json(BASE).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.seeds_count, 1);
        assert!(cfg.coupled_batches);
        assert_eq!(cfg.domain, Domain::Unconstrained);
        assert_eq!(cfg.jmax(), 6);
        let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    fn with(field: &str, value: serde_json::Value) -> Result<RunConfig> {
        let mut doc: serde_json::Value = serde_json::from_str(BASE).unwrap();
        doc[field] = value;
        RunConfig::from_json(&doc.to_string())
    }

    #[test]
    fn rejects_bad_fields() {
        use serde_json::json;
        let cases = [
            ("workers", json!(0)),
            ("start", json!([1, 1, 1])),
            ("aggregator", json!({"kind": "cwtm", "trim_k": 5})),
            ("switching", json!({"kind": "static", "byz_indices": [0, 1, 2, 3, 4]})),
            ("method", json!({"kind": "alg2_opt2"})),
            ("method", json!({"kind": "momentum", "beta": 1.0})),
            ("lr", json!({"kind": "theoretical", "rule": "static_nonconvex"})),
            ("lr", json!({"kind": "fixed", "eta": -1})),
            ("bogus", json!(1)),
        ];
        for (field, value) in cases {
            let err = with(field, value.clone()).unwrap_err();
            assert!(err.is_config(), "{field} = {value}: {err}");
        }
    }
}
