//! Projected SGD, AdaGrad-Norm step sizes, learning-rate formulas and the
//! deterministic inequality checks that go with them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::Vector;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    #[default]
    Unconstrained,
    L2Ball { center: Vector, radius: f64 },
    Box { lo: Vector, hi: Vector },
}

impl Domain {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Domain::Unconstrained => Ok(()),
            Domain::L2Ball { center, radius } => {
                if center.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: center.dim(),
                    });
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::config("domain.radius", "must be positive"));
                }
                Ok(())
            }
            Domain::Box { lo, hi } => {
                for b in [lo, hi] {
                    if b.dim() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            actual: b.dim(),
                        });
                    }
                }
                if lo.as_slice().iter().zip(hi.as_slice()).any(|(l, h)| l > h) {
                    return Err(Error::config("domain", "box needs lo ≤ hi in every coordinate"));
                }
                Ok(())
            }
        }
    }

    /// Diameter `D`, or `None` when unbounded.
    pub fn diameter(&self) -> Option<f64> {
        match self {
            Domain::Unconstrained => None,
            Domain::L2Ball { radius, .. } => Some(2.0 * radius),
            Domain::Box { lo, hi } => Some(hi.distance(lo)),
        }
    }

    pub fn contains(&self, x: &Vector) -> bool {
        match self {
            Domain::Unconstrained => true,
            Domain::L2Ball { center, radius } => x.distance(center) <= radius * (1.0 + 1e-12),
            Domain::Box { lo, hi } => x
                .as_slice()
                .iter()
                .zip(lo.as_slice().iter().zip(hi.as_slice()))
                .all(|(v, (l, h))| l <= v && v <= h),
        }
    }
}

/// Euclidean projection onto `domain`.
pub fn project(domain: &Domain, x: &Vector) -> Result<Vector> {
    domain.validate(x.dim())?;
    Ok(match domain {
        Domain::Unconstrained => x.clone(),
        Domain::L2Ball { center, radius } => {
            let offset = x.sub(center)?;
            let r = offset.l2_norm();
            if r <= *radius {
                x.clone()
            } else {
                center.axpy(radius / r, &offset)?
            }
        }
        Domain::Box { lo, hi } => Vector::new(
            x.as_slice()
                .iter()
                .zip(lo.as_slice().iter().zip(hi.as_slice()))
                .map(|(v, (l, h))| v.clamp(*l, *h))
                .collect(),
        )?,
    })
}

/// `Π(x − η·g)`.
pub fn sgd_step(x: &Vector, g: &Vector, eta: f64, domain: &Domain) -> Result<Vector> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    project(domain, &x.axpy(-eta, g)?)
}

/// AdaGrad-Norm state: `η_t = η₀/√(Σ_{s≤t}‖g_s‖²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdagradNorm {
    pub eta0: f64,
    pub accumulated: f64,
}

impl AdagradNorm {
    pub fn new(eta0: f64) -> Result<Self> {
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::invalid("AdaGrad η₀ must be positive"));
        }
        Ok(AdagradNorm { eta0, accumulated: 0.0 })
    }

    /// Current step size, `None` while every gradient so far was zero.
    pub fn rate(&self) -> Option<f64> {
        (self.accumulated > 0.0).then(|| self.eta0 / self.accumulated.sqrt())
    }

    /// Accumulates `‖g‖²` and takes a projected step; no movement while the
    /// accumulator is zero.
    pub fn step(&mut self, x: &Vector, g: &Vector, domain: &Domain) -> Result<Vector> {
        self.accumulated += g.norm_sq();
        match self.rate() {
            Some(eta) => sgd_step(x, g, eta, domain),
            None => project(domain, x),
        }
    }
}

/// Functional form of [`AdagradNorm::step`].
pub fn adagrad_step(state: &AdagradNorm, x: &Vector, g: &Vector, domain: &Domain) -> Result<(Vector, AdagradNorm)> {
    let mut next = state.clone();
    let y = next.step(x, g, domain)?;
    Ok((y, next))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrKind {
    StaticNonconvex,
    StaticConvex,
    DynamicNonconvexOpt1,
    DynamicConvexOpt1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Two,
    Natural,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.log2(),
            LogBase::Natural => x.ln(),
        }
    }
}

/// Inputs of [`theoretical_lr`]. `noise` is `σ` for the static formulas
/// and `V` for the dynamic ones; `c` is the universal coefficient `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LrConstants {
    pub delta1: Option<f64>,
    pub diameter: Option<f64>,
    pub noise: f64,
    pub smoothness: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub c: Option<f64>,
    /// Base of the bare `log T` factor.
    pub log_base: LogBase,
}

fn need(value: Option<f64>, name: &str) -> Result<f64> {
    match value {
        Some(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(Error::invalid(format!("{name} must be given and positive"))),
    }
}

/// Analytic step sizes:
///
/// * static nonconvex: `min{√Δ₁/(4σ√(LγT log T)), 1/L}`
/// * static convex: `min{D/(8σ√(γT log T)), 1/(2L)}`
/// * dynamic nonconvex: `min{√Δ₁/(3CV√(LγT log T)), 1/L}`
/// * dynamic convex: `min{D/(6CV√(γT log T)), 1/(2L)}`
pub fn theoretical_lr(kind: LrKind, k: &LrConstants) -> Result<f64> {
    if k.horizon < 2 {
        return Err(Error::invalid("theoretical learning rates need T ≥ 2"));
    }
    let l = need(Some(k.smoothness), "L")?;
    let gamma = need(Some(k.gamma), "γ")?;
    if !(k.noise >= 0.0 && k.noise.is_finite()) {
        return Err(Error::invalid("noise level must be finite and non-negative"));
    }
    let t = k.horizon as f64;
    let log_t = k.log_base.log(t);
    let (term, cap) = match kind {
        LrKind::StaticNonconvex => {
            let d1 = need(k.delta1, "Δ₁")?;
            (d1.sqrt() / (4.0 * k.noise * (l * gamma * t * log_t).sqrt()), 1.0 / l)
        }
        LrKind::StaticConvex => {
            let d = need(k.diameter, "D")?;
            (d / (8.0 * k.noise * (gamma * t * log_t).sqrt()), 1.0 / (2.0 * l))
        }
        LrKind::DynamicNonconvexOpt1 => {
            let d1 = need(k.delta1, "Δ₁")?;
            let c = need(k.c, "C")?;
            (d1.sqrt() / (3.0 * c * k.noise * (l * gamma * t * log_t).sqrt()), 1.0 / l)
        }
        LrKind::DynamicConvexOpt1 => {
            let d = need(k.diameter, "D")?;
            let c = need(k.c, "C")?;
            (d / (6.0 * c * k.noise * (gamma * t * log_t).sqrt()), 1.0 / (2.0 * l))
        }
    };
    // Zero noise makes the first term infinite; the cap then applies.
    Ok(if term.is_nan() { cap } else { term.min(cap) })
}

/// `ζ = 2M/η₀ + η₀L`, reported alongside AdaGrad runs.
pub fn zeta(bound_m: f64, eta0: f64, smoothness: f64) -> f64 {
    2.0 * bound_m / eta0 + eta0 * smoothness
}

/// Iterates `x_t` and the gradients `g_t` used to step from them.
#[derive(Debug, Clone, PartialEq)]
pub struct AdagradTrace {
    pub iterates: Vec<Vector>,
    pub gradients: Vec<Vector>,
    pub eta0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretCheck {
    /// `Σ g_tᵀ(x_t − u)`.
    pub lhs: f64,
    /// `(D²/(2η₀) + η₀)·√(Σ‖g_t‖²)`.
    pub rhs: f64,
    pub holds: bool,
}

pub fn adagrad_regret(trace: &AdagradTrace, u: &Vector, diameter: f64) -> Result<RegretCheck> {
    if trace.gradients.is_empty() {
        return Err(Error::Empty("AdaGrad trace"));
    }
    if trace.iterates.len() < trace.gradients.len() {
        return Err(Error::invalid("trace needs one iterate per gradient"));
    }
    let mut lhs = 0.0;
    let mut sq = 0.0;
    for (x, g) in trace.iterates.iter().zip(&trace.gradients) {
        lhs += g.dot(&x.sub(u)?)?;
        sq += g.norm_sq();
    }
    let rhs = (diameter * diameter / (2.0 * trace.eta0) + trace.eta0) * sq.sqrt();
    let holds = lhs <= rhs + 1e-9 * (1.0 + rhs.abs());
    Ok(RegretCheck { lhs, rhs, holds })
}

/// `Σ g_tᵀ(x_t − u) ≤ (D²/(2η₀) + η₀)√(Σ‖g_t‖²)`, up to `1e-9` slack.
pub fn check_adagrad_regret(trace: &AdagradTrace, u: &Vector, diameter: f64) -> Result<bool> {
    Ok(adagrad_regret(trace, u, diameter)?.holds)
}

/// Right side of the biased-SGD bound for a fixed step `η`:
/// `2Δ₁/(Tη) + ηL·avg V² + avg ‖b‖²`.
pub fn biased_sgd_bound(delta1: f64, horizon: usize, eta: f64, smoothness: f64, avg_v2: f64, avg_b2: f64) -> f64 {
    2.0 * delta1 / (horizon as f64 * eta) + eta * smoothness * avg_v2 + avg_b2
}
