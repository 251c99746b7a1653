//! Byzantine attacks and identity-switching strategies, including the
//! rotating momentum attack that defeats worker momentum.
//!
//! Byzantine sets are pure functions of `(spec, seed, t, k)`: every random
//! choice draws from a stream keyed by the seed and the round (and, where
//! relevant, the computation index), so any round can be replayed in
//! isolation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::{keyed_seed, stream, streams};
use crate::vecmath::{self, Vector};

/// Key separating within-round relabelling draws from the base strategy.
const RELABEL_KEY: u64 = 0x05E1_ABE1;

fn default_ipm_epsilon() -> f64 {
    0.1
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SwitchingSpec {
    /// A fixed Byzantine set.
    Static { byz_indices: Vec<usize> },
    /// A uniformly random `⌊δm⌋`-subset, redrawn every `period` rounds.
    Periodic { period: usize, delta: f64 },
    /// Each round every worker triggers a Byzantine window of `duration`
    /// rounds with probability `p`; at most `⌊δmax·m⌋` are Byzantine at once.
    Bernoulli { p: f64, duration: usize, delta_max: f64 },
    /// `base` for the first computation of each round; each later
    /// computation is relabelled with probability `flip_probability` to a
    /// fresh random set of the same size.
    WithinRound {
        base: Box<SwitchingSpec>,
        flip_probability: f64,
    },
    /// Thirds of each `1/α`-round epoch belong to successive thirds of the
    /// workers (the schedule of the momentum attack). Needs `3 | m`.
    RotatingThirds { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackSpec {
    /// No replacement: Byzantine workers send their honest gradients.
    None,
    /// Send the negated honest gradient.
    SignFlip,
    /// Send `−ε·(honest mean)`.
    Ipm {
        #[serde(default = "default_ipm_epsilon")]
        epsilon: f64,
    },
    /// Send `(honest mean) − z·(honest per-coordinate std)`; `z` defaults to
    /// the value implied by `m` and the Byzantine count.
    Alie {
        #[serde(default)]
        z: Option<f64>,
    },
    /// Send the honest gradient plus a constant `v`.
    FixedShift { v: Vector },
    /// Send the honest gradient plus `scale·v_t` from the momentum-attack
    /// schedule with parameter `alpha`.
    MomentumDynamic {
        alpha: f64,
        v: Vector,
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

/// `1/(3α)` as an integer, or an error when it is not one or `α > 1/6`.
pub fn momentum_third(alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0 / 6.0 + 1e-15) {
        return Err(Error::invalid(format!("momentum attack needs 0 < α ≤ 1/6, got {alpha}")));
    }
    let third = 1.0 / (3.0 * alpha);
    let n = third.round();
    if (third - n).abs() > 1e-9 * n {
        return Err(Error::invalid(format!("1/(3α) must be an integer, got {third}")));
    }
    Ok(n as usize)
}

fn check_probability(field: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::config(field, "must lie in [0, 1]"))
    }
}

impl SwitchingSpec {
    pub fn validate(&self, m: usize) -> Result<()> {
        if m == 0 {
            return Err(Error::config("m", "must be at least 1"));
        }
        match self {
            SwitchingSpec::Static { byz_indices } => {
                let mut sorted = byz_indices.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != byz_indices.len() {
                    return Err(Error::config("switching.byz_indices", "duplicate index"));
                }
                if let Some(&bad) = sorted.iter().find(|&&i| i >= m) {
                    return Err(Error::config(
                        "switching.byz_indices",
                        format!("index {bad} out of range for m = {m}"),
                    ));
                }
            }
            SwitchingSpec::Periodic { period, delta } => {
                if *period == 0 {
                    return Err(Error::config("switching.period", "must be at least 1"));
                }
                if !(0.0..1.0).contains(delta) {
                    return Err(Error::config("switching.delta", "must lie in [0, 1)"));
                }
            }
            SwitchingSpec::Bernoulli { p, duration, delta_max } => {
                check_probability("switching.p", *p)?;
                if *duration == 0 {
                    return Err(Error::config("switching.duration", "must be at least 1"));
                }
                if !(0.0..1.0).contains(delta_max) {
                    return Err(Error::config("switching.delta_max", "must lie in [0, 1)"));
                }
            }
            SwitchingSpec::WithinRound { base, flip_probability } => {
                check_probability("switching.flip_probability", *flip_probability)?;
                base.validate(m)?;
            }
            SwitchingSpec::RotatingThirds { alpha } => {
                momentum_third(*alpha).map_err(|e| Error::config("switching.alpha", e.to_string()))?;
                if !m.is_multiple_of(3) {
                    return Err(Error::config("m", "rotating thirds need m divisible by 3"));
                }
            }
        }
        Ok(())
    }

    /// Largest Byzantine fraction the strategy can produce in one round.
    pub fn max_fraction(&self, m: usize) -> f64 {
        match self {
            SwitchingSpec::Static { byz_indices } => byz_indices.len() as f64 / m as f64,
            SwitchingSpec::Periodic { delta, .. } => crate::aggregators::byzantine_count(*delta, m) as f64 / m as f64,
            SwitchingSpec::Bernoulli { delta_max, .. } => {
                crate::aggregators::byzantine_count(*delta_max, m) as f64 / m as f64
            }
            SwitchingSpec::WithinRound { base, .. } => base.max_fraction(m),
            SwitchingSpec::RotatingThirds { .. } => 1.0 / 3.0,
        }
    }

    /// Whether membership can change between computations of one round.
    pub fn varies_within_round(&self) -> bool {
        matches!(self, SwitchingSpec::WithinRound { .. })
    }
}

#[derive(Debug, Clone)]
struct BernoulliState {
    /// Last round processed (0 before the first).
    round: usize,
    /// Byzantine rounds left for each worker, counting the next round.
    remaining: Vec<usize>,
    current: Vec<usize>,
}

/// Stateful evaluator of a [`SwitchingSpec`] for one run. Rounds may be
/// queried in any order; the Bernoulli strategy replays from round 1 when
/// asked for an earlier round than the last one it computed.
#[derive(Debug, Clone)]
pub struct SwitchingSchedule {
    spec: SwitchingSpec,
    m: usize,
    seed: u64,
    bernoulli: Option<BernoulliState>,
    base: Option<Box<SwitchingSchedule>>,
}

impl SwitchingSchedule {
    pub fn new(spec: &SwitchingSpec, m: usize, seed: u64) -> Result<Self> {
        spec.validate(m)?;
        let base = match spec {
            SwitchingSpec::WithinRound { base, .. } => Some(Box::new(SwitchingSchedule::new(base, m, seed)?)),
            _ => None,
        };
        Ok(SwitchingSchedule {
            spec: spec.clone(),
            m,
            seed,
            bernoulli: None,
            base,
        })
    }

    pub fn spec(&self) -> &SwitchingSpec {
        &self.spec
    }

    pub fn workers(&self) -> usize {
        self.m
    }

    /// Sorted Byzantine indices for round `t ≥ 1`, computation `k ≥ 1`.
    pub fn set(&mut self, t: usize, k: usize) -> Result<Vec<usize>> {
        if t == 0 || k == 0 {
            return Err(Error::invalid("rounds and computation indices start at 1"));
        }
        let m = self.m;
        Ok(match &self.spec {
            SwitchingSpec::Static { byz_indices } => {
                let mut s = byz_indices.clone();
                s.sort_unstable();
                s
            }
            SwitchingSpec::Periodic { period, delta } => {
                let block = ((t - 1) / period) as u64;
                let size = crate::aggregators::byzantine_count(*delta, m);
                random_subset(m, size, keyed_seed(self.seed, &[streams::SWITCHING, block]))
            }
            SwitchingSpec::Bernoulli { p, duration, delta_max } => {
                let (p, duration) = (*p, *duration);
                let cap = crate::aggregators::byzantine_count(*delta_max, m);
                self.bernoulli_set(t, p, duration, cap)
            }
            SwitchingSpec::WithinRound { flip_probability, .. } => {
                let flip = *flip_probability;
                let base = self.base.as_mut().expect("within-round schedule has a base").set(t, 1)?;
                if k == 1 {
                    base
                } else {
                    let mut rng = stream(keyed_seed(
                        self.seed,
                        &[streams::SWITCHING, RELABEL_KEY, t as u64, k as u64],
                    ));
                    if rng.gen_bool(flip) {
                        random_subset(m, base.len(), rng.gen())
                    } else {
                        base
                    }
                }
            }
            SwitchingSpec::RotatingThirds { alpha } => {
                let third = momentum_third(*alpha)?;
                let group = ((t - 1) % (3 * third)) / third;
                let size = m / 3;
                (group * size..(group + 1) * size).collect()
            }
        })
    }

    fn bernoulli_set(&mut self, t: usize, p: f64, duration: usize, cap: usize) -> Vec<usize> {
        let m = self.m;
        let fresh = || BernoulliState {
            round: 0,
            remaining: vec![0; m],
            current: Vec::new(),
        };
        let mut state = self.bernoulli.take().unwrap_or_else(fresh);
        if state.round > t {
            state = fresh();
        }
        while state.round < t {
            let r = state.round + 1;
            let mut rng = stream(keyed_seed(self.seed, &[streams::SWITCHING, r as u64]));
            let mut active = state.remaining.iter().filter(|&&x| x > 0).count();
            // One draw per worker every round, so the stream layout does not
            // depend on the state.
            for i in 0..m {
                let hit = rng.gen_bool(p);
                if !hit {
                    continue;
                }
                if state.remaining[i] > 0 {
                    state.remaining[i] = duration;
                } else if active < cap {
                    state.remaining[i] = duration;
                    active += 1;
                }
            }
            state.current = (0..m).filter(|&i| state.remaining[i] > 0).collect();
            for x in state.remaining.iter_mut() {
                *x = x.saturating_sub(1);
            }
            state.round = r;
        }
        let out = state.current.clone();
        self.bernoulli = Some(state);
        out
    }

    /// Workers Byzantine at any computation `1..=computations` of round `t`.
    pub fn union_over(&mut self, t: usize, computations: usize) -> Result<Vec<usize>> {
        let first = self.set(t, 1)?;
        if !self.spec.varies_within_round() {
            return Ok(first);
        }
        let mut mark = vec![false; self.m];
        for i in first {
            mark[i] = true;
        }
        for k in 2..=computations {
            for i in self.set(t, k)? {
                mark[i] = true;
            }
        }
        Ok((0..self.m).filter(|&i| mark[i]).collect())
    }

    /// True iff the set differs across computations `1..=computations`.
    pub fn is_dynamic(&mut self, t: usize, computations: usize) -> Result<bool> {
        if !self.spec.varies_within_round() {
            return Ok(false);
        }
        let first = self.set(t, 1)?;
        for k in 2..=computations {
            if self.set(t, k)? != first {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

fn random_subset(m: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut stream(seed));
    let mut s = idx[..size.min(m)].to_vec();
    s.sort_unstable();
    s
}

/// Byzantine set of round `t`, computation `k` (fresh evaluation).
pub fn byzantine_set(spec: &SwitchingSpec, t: usize, k: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    SwitchingSchedule::new(spec, m, seed)?.set(t, k)
}

/// ALIE's default `z = Φ⁻¹((m − s)/(m − b))` with `s = ⌊m/2 + 1⌋` and `b`
/// Byzantine workers.
pub fn alie_z(m: usize, byzantine: usize) -> Result<f64> {
    let s = m / 2 + 1;
    if byzantine >= m || s >= m {
        return Err(Error::invalid(format!(
            "ALIE z is undefined for m = {m}, {byzantine} Byzantine"
        )));
    }
    let q = (m - s) as f64 / (m - byzantine) as f64;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("ALIE quantile {q} outside (0, 1)")));
    }
    Ok(Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(q))
}

/// Momentum-attack shift `v_t`.
///
/// First epoch: `v/α` at `t ∈ {1/(3α)+1, 2/(3α)+1}`, else `v`. Later epochs:
/// `v·(1 − (1−α)^{2/(3α)+1})/α` at the first round of every third, else `v`.
/// With the bias recursion started from `b₁ = v₁·1{Byzantine}`, this keeps a
/// Byzantine worker's bias exactly at `v` throughout its third.
pub fn momentum_attack_vector(t: usize, alpha: f64, v: &Vector) -> Result<Vector> {
    Ok(v.scale(momentum_attack_coefficient(t, alpha)?))
}

/// Scalar `c_t` with `v_t = c_t·v`.
pub fn momentum_attack_coefficient(t: usize, alpha: f64) -> Result<f64> {
    if t == 0 {
        return Err(Error::invalid("rounds start at 1"));
    }
    let third = momentum_third(alpha)?;
    let epoch = 3 * third;
    Ok(if t <= epoch {
        if t == third + 1 || t == 2 * third + 1 {
            1.0 / alpha
        } else {
            1.0
        }
    } else if (t - 1).is_multiple_of(third) {
        (1.0 - (1.0 - alpha).powi(2 * third as i32 + 1)) / alpha
    } else {
        1.0
    })
}

/// Whether worker `i ∈ {1, 2, 3}` is Byzantine at round `t`.
pub fn momentum_attack_assignment(t: usize, alpha: f64, worker: usize) -> Result<bool> {
    if !(1..=3).contains(&worker) || t == 0 {
        return Err(Error::invalid("worker must be 1, 2 or 3 and t ≥ 1"));
    }
    let third = momentum_third(alpha)?;
    Ok(((t - 1) % (3 * third)) / third + 1 == worker)
}

/// Result of simulating the momentum-attack bias recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaReport {
    pub alpha: f64,
    pub horizon: usize,
    /// `min θ_{t,i}` over `t > 1/α`.
    pub theta_min: f64,
    /// `max θ_{t,i}` over `t > 1/α`.
    pub theta_max: f64,
    /// `(1−α)^{2/(3α)}`, the predicted floor.
    pub theta_floor: f64,
    /// `max ‖b_{t,i} − v‖` over Byzantine rounds from the second epoch on.
    pub max_byzantine_deviation: f64,
    /// First-epoch Byzantine rounds `(t, i)` where `b_{t,i} ≠ v`.
    pub first_epoch_anomalies: Vec<(usize, usize)>,
    /// Rounds `t ≥ 2` whose Byzantine worker differs from round `t − 1`.
    pub switches: usize,
    pub passed: bool,
}

/// Runs `b_{t,i} = (1−α)b_{t−1,i} + α·v_t·1{i Byzantine at t}` with
/// `b_{1,i} = v₁·1{i Byzantine at 1}` and checks the bias stays at `v`
/// during Byzantine thirds and within `[(5/6)⁴, 1]·v` afterwards.
pub fn verify_theta_bounds(alpha: f64, v: &Vector, horizon: usize) -> Result<ThetaReport> {
    let third = momentum_third(alpha)?;
    let epoch = 3 * third;
    let vnorm = v.l2_norm();
    if vnorm == 0.0 {
        return Err(Error::invalid("attack vector must be non-zero"));
    }
    let theta_lower = (5.0f64 / 6.0).powi(4);
    let mut bias = [Vector::zeros(v.dim()), Vector::zeros(v.dim()), Vector::zeros(v.dim())];
    let mut theta_min = f64::INFINITY;
    let mut theta_max = f64::NEG_INFINITY;
    let mut max_dev: f64 = 0.0;
    let mut anomalies = Vec::new();
    let mut switches = 0;
    let mut prev_byz = 0;
    for t in 1..=horizon {
        let vt = momentum_attack_vector(t, alpha, v)?;
        let mut byz_now = 0;
        for (w, b) in bias.iter_mut().enumerate() {
            let is_byz = momentum_attack_assignment(t, alpha, w + 1)?;
            if is_byz {
                byz_now = w + 1;
            }
            *b = if t == 1 {
                if is_byz {
                    vt.clone()
                } else {
                    Vector::zeros(v.dim())
                }
            } else {
                let decayed = b.scale(1.0 - alpha);
                if is_byz {
                    decayed.axpy(alpha, &vt)?
                } else {
                    decayed
                }
            };
            let dev = b.distance(v);
            if is_byz {
                if t > epoch {
                    max_dev = max_dev.max(dev);
                } else if dev > 1e-12 * vnorm {
                    anomalies.push((t, w + 1));
                }
            }
            if t > epoch {
                let theta = b.dot(v)? / (vnorm * vnorm);
                theta_min = theta_min.min(theta);
                theta_max = theta_max.max(theta);
            }
        }
        if t >= 2 && byz_now != prev_byz {
            switches += 1;
        }
        prev_byz = byz_now;
    }
    let theta_floor = (1.0 - alpha).powi(2 * third as i32);
    let passed = horizon <= epoch
        || (max_dev <= 1e-12 * vnorm.max(1.0)
            && theta_min >= theta_lower - 1e-12
            && theta_max <= 1.0 + 1e-12);
    Ok(ThetaReport {
        alpha,
        horizon,
        theta_min,
        theta_max,
        theta_floor,
        max_byzantine_deviation: max_dev,
        first_epoch_anomalies: anomalies,
        switches,
        passed,
    })
}

/// Replaces the Byzantine entries of `honest` according to `spec`.
/// `round` is the 1-based round, used by the momentum attack.
pub fn apply_attack(spec: &AttackSpec, honest: &[Vector], byz: &[usize], round: usize) -> Result<Vec<Vector>> {
    let m = honest.len();
    if let Some(&bad) = byz.iter().find(|&&i| i >= m) {
        return Err(Error::invalid(format!("Byzantine index {bad} out of range for {m} workers")));
    }
    let mut out = honest.to_vec();
    if byz.is_empty() {
        return Ok(out);
    }
    let mut is_byz = vec![false; m];
    for &i in byz {
        is_byz[i] = true;
    }
    let honest_idx: Vec<usize> = (0..m).filter(|&i| !is_byz[i]).collect();
    let byz_count = m - honest_idx.len();

    match spec {
        AttackSpec::None => {}
        AttackSpec::SignFlip => {
            for &i in byz {
                out[i] = honest[i].scale(-1.0);
            }
        }
        AttackSpec::Ipm { epsilon } => {
            if honest_idx.is_empty() {
                return Err(Error::invalid("IPM needs at least one honest worker"));
            }
            let msg = vecmath::mean_of(honest, &honest_idx)?.scale(-epsilon);
            for &i in byz {
                out[i] = msg.clone();
            }
        }
        AttackSpec::Alie { z } => {
            if honest_idx.is_empty() {
                return Err(Error::invalid("ALIE needs at least one honest worker"));
            }
            let z = match z {
                Some(z) => *z,
                None => alie_z(m, byz_count)?,
            };
            let mean = vecmath::mean_of(honest, &honest_idx)?;
            let std = coordinate_std(honest, &honest_idx, &mean);
            let msg = mean.axpy(-z, &std)?;
            for &i in byz {
                out[i] = msg.clone();
            }
        }
        AttackSpec::FixedShift { v } => {
            for &i in byz {
                out[i] = honest[i].add(v)?;
            }
        }
        AttackSpec::MomentumDynamic { alpha, v, scale } => {
            let shift = momentum_attack_vector(round, *alpha, v)?.scale(*scale);
            for &i in byz {
                out[i] = honest[i].add(&shift)?;
            }
        }
    }
    Ok(out)
}

/// Population standard deviation per coordinate over `indices`.
fn coordinate_std(vs: &[Vector], indices: &[usize], mean: &Vector) -> Vector {
    let n = indices.len() as f64;
    let data = (0..mean.dim())
        .map(|c| {
            let var = indices.iter().map(|&i| (vs[i][c] - mean[c]).powi(2)).sum::<f64>() / n;
            var.sqrt()
        })
        .collect();
    Vector::from_vec_unchecked(data)
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            AttackSpec::Ipm { epsilon } if !epsilon.is_finite() => Err(Error::config("attack.epsilon", "must be finite")),
            AttackSpec::Alie { z: Some(z) } if !z.is_finite() => Err(Error::config("attack.z", "must be finite")),
            AttackSpec::MomentumDynamic { alpha, scale, .. } => {
                momentum_third(*alpha).map_err(|e| Error::config("attack.alpha", e.to_string()))?;
                if !scale.is_finite() {
                    return Err(Error::config("attack.scale", "must be finite"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttackSpec::None => "none",
            AttackSpec::SignFlip => "sign_flip",
            AttackSpec::Ipm { .. } => "ipm",
            AttackSpec::Alie { .. } => "alie",
            AttackSpec::FixedShift { .. } => "fixed_shift",
            AttackSpec::MomentumDynamic { .. } => "momentum_dynamic",
        }
    }
}
