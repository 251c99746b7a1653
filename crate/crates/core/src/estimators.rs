//! Multilevel Monte Carlo (MLMC) gradient estimation with an optional
//! fail-safe filter, plus the worker-momentum baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregators::{aggregate, AggregatorSpec};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::vecmath::Vector;

/// Cap on the number of coin flips when sampling a level.
const MAX_LEVEL: u32 = 64;

/// `⌊log₂ T⌋`.
pub fn jmax_for(horizon: usize) -> u32 {
    assert!(horizon >= 1, "horizon must be positive");
    usize::BITS - 1 - horizon.leading_zeros()
}

/// `γ = κ + 1/m`, the constant in the static-identity rates.
pub fn gamma_static(kappa: f64, m: usize) -> f64 {
    kappa + 1.0 / m as f64
}

/// `γ = 2κ + 1/m`, the constant used by the Option-1 fail-safe.
pub fn gamma_dynamic(kappa: f64, m: usize) -> f64 {
    2.0 * kappa + 1.0 / m as f64
}

/// Universal coefficient `C = √(8·ln(16·m²·T))`.
pub fn universal_c(m: usize, horizon: usize) -> f64 {
    (8.0 * (16.0 * (m as f64).powi(2) * horizon as f64).ln()).sqrt()
}

/// `C̃ = 2√2·C`, the constant of the Option-2 analysis.
pub fn c_tilde(m: usize, horizon: usize) -> f64 {
    2.0 * std::f64::consts::SQRT_2 * universal_c(m, horizon)
}

/// Option-2 MFM threshold at level `j`: `2CV/√(2^j)`.
pub fn mfm_level_threshold(c: f64, v: f64, level: u32) -> f64 {
    2.0 * c * v / 2f64.powf(level as f64 / 2.0)
}

/// Which fail-safe variant guards the MLMC correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailsafeOption {
    /// No filter.
    Plain,
    /// `c_E = √(2κ + 1/m)` with any robust aggregator.
    Opt1 { kappa: f64, m: usize },
    /// `c_E = 6√2` with level-dependent MFM aggregation.
    Opt2 { m: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcParams {
    pub horizon: usize,
    pub jmax: u32,
    pub option: FailsafeOption,
    /// Almost-sure noise bound; only read by the fail-safe options.
    pub v: f64,
}

impl MlmcParams {
    pub fn new(horizon: usize, option: FailsafeOption, v: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be positive"));
        }
        Self::with_jmax(horizon, jmax_for(horizon), option, v)
    }

    pub fn plain(horizon: usize) -> Result<Self> {
        Self::new(horizon, FailsafeOption::Plain, 0.0)
    }

    /// Like [`MlmcParams::new`] with an explicit level cap.
    pub fn with_jmax(horizon: usize, jmax: u32, option: FailsafeOption, v: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be positive"));
        }
        if jmax > MAX_LEVEL - 2 {
            return Err(Error::invalid("level cap too large"));
        }
        match option {
            FailsafeOption::Plain => {}
            FailsafeOption::Opt1 { kappa, m } => {
                if m == 0 || !(kappa >= 0.0 && kappa.is_finite()) {
                    return Err(Error::invalid("option 1 needs m ≥ 1 and finite κ ≥ 0"));
                }
            }
            FailsafeOption::Opt2 { m } => {
                if m == 0 {
                    return Err(Error::invalid("option 2 needs m ≥ 1"));
                }
            }
        }
        if !matches!(option, FailsafeOption::Plain) && !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid("fail-safe options need a positive noise bound V"));
        }
        Ok(MlmcParams {
            horizon,
            jmax,
            option,
            v,
        })
    }

    fn workers(&self) -> Option<usize> {
        match self.option {
            FailsafeOption::Plain => None,
            FailsafeOption::Opt1 { m, .. } | FailsafeOption::Opt2 { m } => Some(m),
        }
    }

    /// `C` for this configuration, if a fail-safe is active.
    pub fn universal_c(&self) -> Option<f64> {
        self.workers().map(|m| universal_c(m, self.horizon))
    }

    pub fn c_e(&self) -> Option<f64> {
        match self.option {
            FailsafeOption::Plain => None,
            FailsafeOption::Opt1 { kappa, m } => Some(gamma_dynamic(kappa, m).sqrt()),
            FailsafeOption::Opt2 { .. } => Some(6.0 * std::f64::consts::SQRT_2),
        }
    }

    /// Fail-safe radius at level `J`: `(1+√2)·c_E·C·V/√(2^J)`.
    pub fn failsafe_threshold(&self, level: u32) -> Option<f64> {
        let c = self.universal_c()?;
        let c_e = self.c_e()?;
        Some((1.0 + std::f64::consts::SQRT_2) * c_e * c * self.v / 2f64.powf(level as f64 / 2.0))
    }

    /// Aggregator used at level `j`: Option 2 always uses MFM with the
    /// level threshold, otherwise `spec` unchanged.
    pub fn level_aggregator(&self, spec: &AggregatorSpec, level: u32) -> AggregatorSpec {
        match self.option {
            FailsafeOption::Opt2 { m } => AggregatorSpec::Mfm {
                threshold: mfm_level_threshold(universal_c(m, self.horizon), self.v, level),
            },
            _ => spec.clone(),
        }
    }

    /// Expected per-worker cost, `1 + 1.5·Jmax`, by summing over levels.
    pub fn expected_cost(&self) -> f64 {
        let mut total = 0.5f64.powi(self.jmax as i32); // tail mass, cost 1
        for j in 1..=self.jmax {
            total += 0.5f64.powi(j as i32) * level_cost(j, self.jmax) as f64;
        }
        total
    }
}

/// `J ~ Geom(1/2)` on `{1, 2, ...}`: fair coin flips up to the first head.
pub fn sample_level(rng: &mut SimRng) -> u32 {
    let mut j = 1;
    while j < MAX_LEVEL && !rng.gen::<bool>() {
        j += 1;
    }
    j
}

/// Gradient evaluations charged to each worker for level `J`.
pub fn level_cost(level: u32, jmax: u32) -> u64 {
    if level >= 1 && level <= jmax {
        1 + (1u64 << (level - 1)) + (1u64 << level)
    } else {
        1
    }
}

/// Batch sizes computed for level `J`: `[1, 2^{J−1}, 2^J]`, or `[1]` above
/// the cap.
pub fn level_batch_sizes(level: u32, jmax: u32) -> Vec<usize> {
    if level >= 1 && level <= jmax {
        vec![1, 1usize << (level - 1), 1usize << level]
    } else {
        vec![1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcOutput {
    pub gradient: Vector,
    pub level: u32,
    pub used_correction: bool,
    /// The fail-safe rejected the correction this round.
    pub failsafe_triggered: bool,
    pub per_worker_cost: u64,
}

/// Fail-safe test `‖ĝ^J − ĝ^{J−1}‖ ≤ (1+√2)·c_E·C·V/√(2^J)`.
pub fn failsafe_event(ghat_j: &Vector, ghat_jm1: &Vector, level: u32, params: &MlmcParams) -> Result<bool> {
    if level == 0 {
        return Err(Error::invalid("fail-safe level must be at least 1"));
    }
    let threshold = params
        .failsafe_threshold(level)
        .ok_or_else(|| Error::invalid("fail-safe event is undefined without a fail-safe option"))?;
    Ok(ghat_j.sub(ghat_jm1)?.l2_norm() <= threshold)
}

/// Combines the three level estimates for a given `J ≤ Jmax`.
pub fn combine_levels(
    g0: &Vector,
    g_jm1: &Vector,
    g_j: &Vector,
    level: u32,
    params: &MlmcParams,
) -> Result<MlmcOutput> {
    let failsafe_triggered = match params.option {
        FailsafeOption::Plain => false,
        _ => !failsafe_event(g_j, g_jm1, level, params)?,
    };
    let gradient = if failsafe_triggered {
        g0.clone()
    } else {
        g0.axpy((1u64 << level) as f64, &g_j.sub(g_jm1)?)?
    };
    Ok(MlmcOutput {
        gradient,
        level,
        used_correction: !failsafe_triggered,
        failsafe_triggered,
        per_worker_cost: level_cost(level, params.jmax),
    })
}

/// MLMC estimate at a fixed level from a level-indexed oracle `j ↦ g^j`.
/// Levels `J−1` and `J` are queried only when `J ≤ Jmax`.
pub fn mlmc_at_level<F>(oracle: &mut F, params: &MlmcParams, level: u32) -> Result<MlmcOutput>
where
    F: FnMut(u32) -> Result<Vector>,
{
    if level == 0 {
        return Err(Error::invalid("MLMC level must be at least 1"));
    }
    let g0 = oracle(0)?;
    if level > params.jmax {
        return Ok(MlmcOutput {
            gradient: g0,
            level,
            used_correction: false,
            failsafe_triggered: false,
            per_worker_cost: 1,
        });
    }
    let g_jm1 = oracle(level - 1)?;
    let g_j = oracle(level)?;
    combine_levels(&g0, &g_jm1, &g_j, level, params)
}

pub fn mlmc_from_oracle<F>(oracle: &mut F, params: &MlmcParams, rng: &mut SimRng) -> Result<MlmcOutput>
where
    F: FnMut(u32) -> Result<Vector>,
{
    let level = sample_level(rng);
    mlmc_at_level(oracle, params, level)
}

/// Exact moments of the MLMC estimate for a deterministic oracle, summed
/// over `J ∈ {1..Jmax}` plus the single tail branch `J > Jmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmcMoments {
    pub mean: Vector,
    /// `E‖g − E g‖²`.
    pub variance: f64,
    pub expected_cost: f64,
}

pub fn enumerate_mlmc<F>(oracle: &mut F, params: &MlmcParams) -> Result<MlmcMoments>
where
    F: FnMut(u32) -> Result<Vector>,
{
    let mut branches: Vec<(f64, MlmcOutput)> = Vec::with_capacity(params.jmax as usize + 1);
    for j in 1..=params.jmax {
        branches.push((0.5f64.powi(j as i32), mlmc_at_level(oracle, params, j)?));
    }
    branches.push((0.5f64.powi(params.jmax as i32), mlmc_at_level(oracle, params, params.jmax + 1)?));

    let dim = branches[0].1.gradient.dim();
    let mut mean = Vector::zeros(dim);
    let mut expected_cost = 0.0;
    for (p, out) in &branches {
        mean = mean.axpy(*p, &out.gradient)?;
        expected_cost += p * out.per_worker_cost as f64;
    }
    let variance = branches
        .iter()
        .map(|(p, out)| p * out.gradient.distance(&mean).powi(2))
        .sum();
    Ok(MlmcMoments {
        mean,
        variance,
        expected_cost,
    })
}

/// Source of one round's worker messages.
pub trait RoundWorkers {
    /// Messages for each requested batch size, indexed `[size][worker]`,
    /// with Byzantine entries already replaced.
    fn level_messages(&mut self, sizes: &[usize]) -> Result<Vec<Vec<Vector>>>;
}

/// One MLMC round over `m` workers at a fixed level: every worker reports
/// batch averages, each level is aggregated, and the levels are combined.
pub fn aggregated_mlmc_round_at<W: RoundWorkers + ?Sized>(
    workers: &mut W,
    spec: &AggregatorSpec,
    params: &MlmcParams,
    level: u32,
) -> Result<MlmcOutput> {
    if level == 0 {
        return Err(Error::invalid("MLMC level must be at least 1"));
    }
    let sizes = level_batch_sizes(level, params.jmax);
    let msgs = workers.level_messages(&sizes)?;
    if msgs.len() != sizes.len() || msgs.iter().any(|l| l.is_empty()) {
        return Err(Error::invalid("workers returned the wrong number of levels"));
    }
    let g0 = aggregate(&params.level_aggregator(spec, 0), &msgs[0])?;
    if sizes.len() == 1 {
        return Ok(MlmcOutput {
            gradient: g0,
            level,
            used_correction: false,
            failsafe_triggered: false,
            per_worker_cost: 1,
        });
    }
    let g_jm1 = aggregate(&params.level_aggregator(spec, level - 1), &msgs[1])?;
    let g_j = aggregate(&params.level_aggregator(spec, level), &msgs[2])?;
    combine_levels(&g0, &g_jm1, &g_j, level, params)
}

pub fn aggregated_mlmc_round<W: RoundWorkers + ?Sized>(
    workers: &mut W,
    spec: &AggregatorSpec,
    params: &MlmcParams,
    rng: &mut SimRng,
) -> Result<MlmcOutput> {
    let level = sample_level(rng);
    aggregated_mlmc_round_at(workers, spec, params, level)
}

/// Per-worker exponential moving averages `m_i ← β·m_i + (1−β)·g_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    beta: f64,
    momenta: Vec<Vector>,
    /// False until the first update when the state is warm-started.
    started: bool,
}

impl MomentumState {
    /// All momenta start at zero.
    pub fn new(beta: f64, workers: usize, dim: usize) -> Result<Self> {
        Self::from_momenta(beta, vec![Vector::zeros(dim); workers])
    }

    pub fn from_momenta(beta: f64, momenta: Vec<Vector>) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::invalid("momentum β must lie in [0, 1)"));
        }
        if momenta.is_empty() {
            return Err(Error::Empty("momentum workers"));
        }
        Ok(MomentumState {
            beta,
            momenta,
            started: true,
        })
    }

    /// State whose first update copies the messages (`m₁ = g₁`) instead of
    /// averaging them with zero.
    pub fn warm_start(beta: f64, workers: usize, dim: usize) -> Result<Self> {
        let mut s = Self::new(beta, workers, dim)?;
        s.started = false;
        Ok(s)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn momenta(&self) -> &[Vector] {
        &self.momenta
    }

    pub fn update(&mut self, messages: &[Vector]) -> Result<()> {
        if messages.len() != self.momenta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.momenta.len(),
                actual: messages.len(),
            });
        }
        if !self.started {
            if let Some(bad) = messages.iter().zip(&self.momenta).find(|(g, m)| g.dim() != m.dim()) {
                return Err(Error::DimensionMismatch {
                    expected: bad.1.dim(),
                    actual: bad.0.dim(),
                });
            }
            self.momenta = messages.to_vec();
            self.started = true;
            return Ok(());
        }
        let next = self
            .momenta
            .iter()
            .zip(messages)
            .map(|(m, g)| m.scale(self.beta).axpy(1.0 - self.beta, g))
            .collect::<Result<Vec<_>>>()?;
        self.momenta = next;
        Ok(())
    }
}

/// Functional form of [`MomentumState::update`].
pub fn momentum_update(state: &MomentumState, messages: &[Vector]) -> Result<MomentumState> {
    let mut next = state.clone();
    next.update(messages)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{lmgo_query, NoiseModel, Objective};
    use crate::rng::stream;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn v(xs: &[f64]) -> Vector {
        Vector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn jmax_is_floor_log2() {
        assert_eq!(jmax_for(1), 0);
        assert_eq!(jmax_for(2), 1);
        assert_eq!(jmax_for(1000), 9);
        assert_eq!(jmax_for(1024), 10);
        assert_eq!(jmax_for(1025), 10);
        for t in 1..5000usize {
            let j = jmax_for(t);
            assert!((1usize << j) <= t && 2 * (1usize << j) > t);
        }
    }

    #[test]
    fn level_law_matches_geometric() {
        let mut rng = stream(42);
        let draws = 1_000_000;
        let mut counts = [0u64; 12];
        let mut sum = 0u64;
        for _ in 0..draws {
            let j = sample_level(&mut rng);
            assert!(j >= 1);
            sum += j as u64;
            counts[(j as usize).min(11)] += 1;
        }
        let mean = sum as f64 / draws as f64;
        assert!((mean - 2.0).abs() < 0.01, "E[J] = {mean}");
        // Chi-square over bins 1..=10 plus the tail J ≥ 11.
        let mut stat = 0.0;
        for (j, &count) in counts.iter().enumerate().skip(1) {
            let p = 0.5f64.powi(j.min(10) as i32);
            let expected = p * draws as f64;
            stat += (count as f64 - expected).powi(2) / expected;
        }
        let p_value = 1.0 - ChiSquared::new(10.0).unwrap().cdf(stat);
        assert!(p_value > 0.01, "chi2 {stat}, p {p_value}");
    }

    #[test]
    fn constant_oracle_is_unbiased_every_level() {
        let params = MlmcParams::plain(1000).unwrap();
        let target = v(&[1.5, -2.0]);
        for j in 1..=12 {
            let out = mlmc_at_level(&mut |_| Ok(target.clone()), &params, j).unwrap();
            assert_eq!(out.gradient, target);
        }
    }

    #[test]
    fn tail_level_returns_single_sample() {
        let params = MlmcParams::plain(64).unwrap();
        let mut queried = Vec::new();
        let out = mlmc_at_level(
            &mut |j| {
                queried.push(j);
                Ok(v(&[j as f64]))
            },
            &params,
            params.jmax + 1,
        )
        .unwrap();
        assert_eq!(out.gradient, v(&[0.0]));
        assert_eq!(queried, vec![0]);
        assert_eq!(out.per_worker_cost, 1);
        assert!(!out.used_correction);
    }

    #[test]
    fn drift_oracle_level_two() {
        let q = Objective::quadratic(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let drift = NoiseModel::Drift {
            c: 1.0,
            direction: Vector::basis(2, 0),
        };
        let zero = Vector::zeros(2);
        let mut rng = stream(0);
        let params = MlmcParams::plain(8).unwrap();
        let out = mlmc_at_level(
            &mut |j| lmgo_query(&q, &drift, &zero, 1 << j, &mut rng),
            &params,
            2,
        )
        .unwrap();
        let expected = 1.0 + 4.0 * (0.5 - std::f64::consts::FRAC_1_SQRT_2);
        assert!((out.gradient[0] - expected).abs() < 1e-15);
        assert!((expected - 0.17157).abs() < 1e-5);
        assert_eq!(out.gradient[1], 0.0);
        assert_eq!(out.per_worker_cost, 1 + 2 + 4);
    }

    #[test]
    fn enumeration_telescopes_for_drift() {
        let q = Objective::quadratic(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let dir = v(&[0.6, 0.8]);
        let x = v(&[0.3, -0.4]);
        for (c, t) in [(1.0, 1024usize), (0.5, 1000), (3.0, 17)] {
            let drift = NoiseModel::Drift { c, direction: dir.clone() };
            let params = MlmcParams::plain(t).unwrap();
            let mut rng = stream(0);
            let mom = enumerate_mlmc(&mut |j| lmgo_query(&q, &drift, &x, 1 << j, &mut rng), &params).unwrap();
            let top = lmgo_query(&q, &drift, &x, 1 << params.jmax, &mut rng).unwrap();
            assert!(mom.mean.distance(&top) < 1e-12);
            let bias = mom.mean.distance(&q.exact_gradient(&x).unwrap());
            let exact_bias = c / 2f64.powf(params.jmax as f64 / 2.0);
            assert!((bias - exact_bias).abs() < 1e-12);
            assert!(bias <= (2.0 * c * c / t as f64).sqrt());
            assert!(mom.variance <= 14.0 * c * c * (t as f64).log2());
            assert!((mom.expected_cost - (1.0 + 1.5 * params.jmax as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn failsafe_examples() {
        let p = MlmcParams::new(1000, FailsafeOption::Opt1 { kappa: 0.1, m: 10 }, 1.0).unwrap();
        let c = p.universal_c().unwrap();
        assert!((c - 10.690).abs() < 1e-3, "C = {c}");
        let thr = p.failsafe_threshold(4).unwrap();
        assert!((thr - 3.534).abs() < 1e-3, "threshold {thr}");
        let a = v(&[0.0, 0.0]);
        assert!(failsafe_event(&a, &a, 4, &p).unwrap());
        assert!(!failsafe_event(&v(&[3.6, 0.0]), &a, 4, &p).unwrap());
        assert!(failsafe_event(&v(&[thr, 0.0]), &a, 4, &p).unwrap());
        assert!(failsafe_event(&a, &a, 0, &p).is_err());
        let plain = MlmcParams::plain(1000).unwrap();
        assert!(failsafe_event(&a, &a, 4, &plain).is_err());

        let p2 = MlmcParams::new(1000, FailsafeOption::Opt2 { m: 10 }, 1.0).unwrap();
        assert_eq!(p2.c_e().unwrap(), 6.0 * std::f64::consts::SQRT_2);
        let expected_c_tilde = 2.0 * std::f64::consts::SQRT_2 * c;
        assert!((c_tilde(10, 1000) - expected_c_tilde).abs() < 1e-12);
        match p2.level_aggregator(&AggregatorSpec::Mean, 2) {
            AggregatorSpec::Mfm { threshold } => assert!((threshold - c).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn failsafe_rejection_falls_back() {
        let p = MlmcParams::new(1000, FailsafeOption::Opt1 { kappa: 0.1, m: 10 }, 1.0).unwrap();
        let g0 = v(&[1.0, 1.0]);
        let out = combine_levels(&g0, &v(&[0.0, 0.0]), &v(&[100.0, 0.0]), 3, &p).unwrap();
        assert!(out.failsafe_triggered && !out.used_correction);
        assert_eq!(out.gradient, g0);
        let out = combine_levels(&g0, &v(&[0.0, 0.0]), &v(&[0.1, 0.0]), 3, &p).unwrap();
        assert!(out.used_correction);
        assert!(out.gradient.distance(&v(&[1.8, 1.0])) < 1e-12);
    }

    #[test]
    fn gammas() {
        assert!((gamma_static(0.1, 10) - 0.2).abs() < 1e-15);
        assert!((gamma_dynamic(0.1, 10) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn costs() {
        assert_eq!(level_cost(1, 10), 4);
        assert_eq!(level_cost(10, 10), 1 + 512 + 1024);
        assert_eq!(level_cost(11, 10), 1);
        assert_eq!(level_batch_sizes(3, 10), vec![1, 4, 8]);
        assert_eq!(level_batch_sizes(11, 10), vec![1]);
        let p = MlmcParams::plain(1024).unwrap();
        assert_eq!(p.expected_cost(), 16.0);
    }

    struct Exact(Vector, usize);
    impl RoundWorkers for Exact {
        fn level_messages(&mut self, sizes: &[usize]) -> Result<Vec<Vec<Vector>>> {
            Ok(sizes.iter().map(|_| vec![self.0.clone(); self.1]).collect())
        }
    }

    #[test]
    fn noiseless_round_returns_gradient() {
        let g = v(&[2.0, -1.0]);
        let params = MlmcParams::plain(512).unwrap();
        let mut rng = stream(5);
        let mut w = Exact(g.clone(), 7);
        let mut total = 0u64;
        let rounds = 100_000;
        for _ in 0..rounds {
            let out = aggregated_mlmc_round(&mut w, &AggregatorSpec::Cwmed, &params, &mut rng).unwrap();
            assert_eq!(out.gradient, g);
            total += out.per_worker_cost;
        }
        let avg = total as f64 / rounds as f64;
        assert!(avg <= 1.0 + 1.5 * params.jmax as f64 + 0.5, "avg cost {avg}");
    }

    #[test]
    fn momentum_examples() {
        let mut s = MomentumState::new(0.0, 1, 1).unwrap();
        s.update(&[v(&[7.0])]).unwrap();
        assert_eq!(s.momenta()[0], v(&[7.0]));

        let s = MomentumState::from_momenta(0.9, vec![v(&[0.0])]).unwrap();
        let s = momentum_update(&s, &[v(&[10.0])]).unwrap();
        assert!((s.momenta()[0][0] - 1.0).abs() < 1e-12);

        let g = v(&[3.0, -1.0]);
        let m0 = v(&[0.0, 5.0]);
        let mut s = MomentumState::from_momenta(0.7, vec![m0.clone()]).unwrap();
        for t in 1..=30 {
            s.update(std::slice::from_ref(&g)).unwrap();
            let expect = 0.7f64.powi(t) * m0.distance(&g);
            assert!((s.momenta()[0].distance(&g) - expect).abs() < 1e-12);
        }
        assert!(MomentumState::new(1.0, 1, 1).is_err());
        let mut w = MomentumState::warm_start(0.9, 1, 1).unwrap();
        w.update(&[v(&[10.0])]).unwrap();
        assert_eq!(w.momenta()[0], v(&[10.0]));
        w.update(&[v(&[0.0])]).unwrap();
        assert!((w.momenta()[0][0] - 9.0).abs() < 1e-12);
        assert!(s.update(&[]).is_err());
    }
}
