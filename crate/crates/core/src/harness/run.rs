//! The round loop.

use crate::adversary::{apply_attack, SwitchingSchedule};
use crate::aggregators::aggregate;
use crate::error::{Error, Result};
use crate::estimators::{
    aggregated_mlmc_round_at, gamma_dynamic, gamma_static, level_batch_sizes, sample_level, universal_c,
    FailsafeOption, MlmcParams, MomentumState, RoundWorkers,
};
use crate::harness::config::{LrConfig, Method, RunConfig};
use crate::objectives::{GradientOracle, Objective};
use crate::optimize::{project, sgd_step, theoretical_lr, AdagradNorm, LrConstants, LrKind};
use crate::rng::{child_seed, stream, streams, SimRng};
use crate::vecmath::Vector;

/// Metrics of one round, measured at the iterate the round starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    /// `f(x_t) − f*`.
    pub gap: f64,
    /// `‖∇f(x_t)‖²`.
    pub grad_norm_sq: f64,
    /// Byzantine fraction at the round's first computation.
    pub byz_fraction: f64,
    /// Gradient evaluations charged to each worker.
    pub cost: u64,
    /// MLMC level, 0 for methods without levels.
    pub level: u32,
    pub failsafe: bool,
    pub dynamic_round: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub rounds: Vec<RoundRecord>,
    /// `x_1, …, x_{T+1}`.
    pub iterates: Vec<Vector>,
    /// The aggregated gradient used to step from each `x_t`.
    pub step_gradients: Vec<Vector>,
    /// Evaluations counted by the oracle, per worker.
    pub oracle_counts: Vec<u64>,
    /// Step size (fixed or theoretical); `None` for AdaGrad.
    pub eta: Option<f64>,
    pub final_gap: f64,
    pub final_grad_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub avg_grad_norm_sq: f64,
    pub min_gap: f64,
    pub final_gap: f64,
    pub total_cost: u64,
    pub failsafe_count: usize,
    pub dynamic_rounds: usize,
}

impl RunTrace {
    pub fn summary(&self) -> RunSummary {
        let t = self.rounds.len().max(1) as f64;
        RunSummary {
            avg_grad_norm_sq: self.rounds.iter().map(|r| r.grad_norm_sq).sum::<f64>() / t,
            min_gap: self.rounds.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min),
            final_gap: self.final_gap,
            total_cost: self.rounds.iter().map(|r| r.cost).sum(),
            failsafe_count: self.rounds.iter().filter(|r| r.failsafe).count(),
            dynamic_rounds: self.rounds.iter().filter(|r| r.dynamic_round).count(),
        }
    }
}

/// Step size of a `theoretical` learning-rate config.
pub fn resolve_theoretical_lr(cfg: &RunConfig, obj: &Objective) -> Result<f64> {
    let LrConfig::Theoretical { rule, kappa, log_base } = &cfg.lr else {
        return Err(Error::invalid("not a theoretical learning rate"));
    };
    let kappa = kappa
        .or(match cfg.method {
            Method::Alg2Opt1 { kappa } => Some(kappa),
            _ => None,
        })
        .ok_or_else(|| Error::config("lr.kappa", "theoretical rates need κ"))?;
    let m = cfg.workers;
    let dynamic = matches!(rule, LrKind::DynamicNonconvexOpt1 | LrKind::DynamicConvexOpt1);
    let constants = LrConstants {
        delta1: Some(obj.gap(&cfg.start)?),
        diameter: cfg.domain.diameter(),
        noise: if dynamic {
            cfg.noise.bound().unwrap_or(f64::INFINITY)
        } else {
            cfg.noise.variance().sqrt()
        },
        smoothness: obj.smoothness(),
        gamma: if dynamic {
            gamma_dynamic(kappa, m)
        } else {
            gamma_static(kappa, m)
        },
        horizon: cfg.horizon,
        c: Some(universal_c(m, cfg.horizon)),
        log_base: *log_base,
    };
    theoretical_lr(*rule, &constants).map_err(|e| Error::config("lr", e.to_string()))
}

enum Stepper {
    Fixed(f64),
    Adagrad(AdagradNorm),
}

/// Honest computation plus adversarial replacement for one round.
struct Workers<'a, 'o> {
    cfg: &'a RunConfig,
    oracle: &'a mut GradientOracle<'o>,
    schedule: &'a mut SwitchingSchedule,
    noise_rng: &'a mut SimRng,
    x: &'a Vector,
    t: usize,
}

impl RoundWorkers for Workers<'_, '_> {
    fn level_messages(&mut self, sizes: &[usize]) -> Result<Vec<Vec<Vector>>> {
        let m = self.cfg.workers;
        // honest[worker][level]
        let mut honest = Vec::with_capacity(m);
        for i in 0..m {
            honest.push(
                self.oracle
                    .level_batches(i, self.x, sizes, self.cfg.coupled_batches, self.noise_rng)?,
            );
        }
        let mut out = Vec::with_capacity(sizes.len());
        for (level, &n) in sizes.iter().enumerate() {
            let msgs: Vec<Vector> = honest.iter().map(|w| w[level].clone()).collect();
            // A worker corrupts a batch if it is Byzantine at any of the
            // computations that batch covers.
            let byz = self.schedule.union_over(self.t, n)?;
            out.push(apply_attack(&self.cfg.attack, &msgs, &byz, self.t)?);
        }
        Ok(out)
    }
}

/// Executes one run with the config's own seed.
pub fn run(cfg: &RunConfig) -> Result<RunTrace> {
    run_with_seed(cfg, cfg.seed)
}

pub fn run_with_seed(cfg: &RunConfig, seed: u64) -> Result<RunTrace> {
    cfg.validate()?;
    let obj = cfg.objective.build()?;
    let m = cfg.workers;
    let jmax = cfg.jmax();

    let mlmc = match cfg.method {
        Method::Alg1Mlmc => Some(MlmcParams::with_jmax(cfg.horizon, jmax, FailsafeOption::Plain, 0.0)?),
        Method::Alg2Opt1 { kappa } => Some(MlmcParams::with_jmax(
            cfg.horizon,
            jmax,
            FailsafeOption::Opt1 { kappa, m },
            cfg.noise.bound().unwrap_or(0.0),
        )?),
        Method::Alg2Opt2 => Some(MlmcParams::with_jmax(
            cfg.horizon,
            jmax,
            FailsafeOption::Opt2 { m },
            cfg.noise.bound().unwrap_or(0.0),
        )?),
        _ => None,
    };
    let mut momentum = match cfg.method {
        Method::Momentum { beta } => Some(MomentumState::warm_start(beta, m, obj.dim())?),
        _ => None,
    };
    let mut stepper = match cfg.lr {
        LrConfig::Fixed { eta } => Stepper::Fixed(eta),
        LrConfig::AdagradNorm { eta0 } => Stepper::Adagrad(AdagradNorm::new(eta0)?),
        LrConfig::Theoretical { .. } => Stepper::Fixed(resolve_theoretical_lr(cfg, &obj)?),
    };

    let mut level_rng = stream(child_seed(seed, streams::LEVELS));
    let mut noise_rng = stream(child_seed(seed, streams::NOISE));
    let mut schedule = SwitchingSchedule::new(&cfg.switching, m, child_seed(seed, streams::SWITCHING))?;
    let mut oracle = GradientOracle::new(&obj, &cfg.noise, m);

    let mut x = project(&cfg.domain, &cfg.start)?;
    let mut rounds = Vec::with_capacity(cfg.horizon);
    let mut iterates = Vec::with_capacity(cfg.horizon + 1);
    let mut step_gradients = Vec::with_capacity(cfg.horizon);

    for t in 1..=cfg.horizon {
        let grad = obj.exact_gradient(&x)?;
        let gap = obj.gap(&x)?;
        let byz_now = schedule.set(t, 1)?;
        let byz_fraction = byz_now.len() as f64 / m as f64;

        let (g, cost, level, failsafe, dynamic_round) = if let Some(params) = &mlmc {
            let level = sample_level(&mut level_rng);
            let computations = *level_batch_sizes(level, params.jmax).last().expect("non-empty");
            let dynamic = level <= params.jmax && schedule.is_dynamic(t, computations)?;
            let mut workers = Workers {
                cfg,
                oracle: &mut oracle,
                schedule: &mut schedule,
                noise_rng: &mut noise_rng,
                x: &x,
                t,
            };
            let out = aggregated_mlmc_round_at(&mut workers, &cfg.aggregator, params, level)?;
            (out.gradient, out.per_worker_cost, level, out.failsafe_triggered, dynamic)
        } else {
            let n = cfg.batch_size;
            let mut honest = Vec::with_capacity(m);
            for i in 0..m {
                honest.push(oracle.minibatch(i, &x, n, &mut noise_rng)?);
            }
            let byz = schedule.union_over(t, n)?;
            let msgs = apply_attack(&cfg.attack, &honest, &byz, t)?;
            let dynamic = schedule.is_dynamic(t, n)?;
            let g = match momentum.as_mut() {
                Some(state) => {
                    state.update(&msgs)?;
                    aggregate(&cfg.aggregator, state.momenta())?
                }
                None => aggregate(&cfg.aggregator, &msgs)?,
            };
            (g, n as u64, 0, false, dynamic)
        };

        if !g.is_finite() {
            return Err(Error::NonFinite("aggregated gradient"));
        }
        let next = match &mut stepper {
            Stepper::Fixed(eta) => sgd_step(&x, &g, *eta, &cfg.domain)?,
            Stepper::Adagrad(state) => state.step(&x, &g, &cfg.domain)?,
        };
        rounds.push(RoundRecord {
            t,
            gap,
            grad_norm_sq: grad.norm_sq(),
            byz_fraction,
            cost,
            level,
            failsafe,
            dynamic_round,
        });
        iterates.push(x);
        step_gradients.push(g);
        x = next;
    }

    let final_gap = obj.gap(&x)?;
    let final_grad_norm_sq = obj.exact_gradient(&x)?.norm_sq();
    iterates.push(x);
    Ok(RunTrace {
        seed,
        rounds,
        iterates,
        step_gradients,
        oracle_counts: oracle.counts().to_vec(),
        eta: match stepper {
            Stepper::Fixed(eta) => Some(eta),
            Stepper::Adagrad(_) => None,
        },
        final_gap,
        final_grad_norm_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{AttackSpec, SwitchingSpec};
    use crate::aggregators::AggregatorSpec;
    use crate::objectives::{NoiseModel, ObjectiveSpec};
    use crate::optimize::Domain;

    fn base() -> RunConfig {
        RunConfig {
            objective: ObjectiveSpec::two_by_two(),
            noise: NoiseModel::Gaussian { sigma: 0.0 },
            start: Vector::new(vec![1.0, 1.0]).unwrap(),
            workers: 5,
            method: Method::Sgd,
            aggregator: AggregatorSpec::Mean,
            attack: AttackSpec::None,
            switching: SwitchingSpec::Static { byz_indices: vec![] },
            lr: LrConfig::Fixed { eta: 1.0 / 3.0 },
            horizon: 50,
            domain: Domain::Unconstrained,
            seed: 1,
            seeds_count: 1,
            jmax_override: None,
            coupled_batches: true,
            batch_size: 1,
        }
    }

    #[test]
    fn noiseless_gd_contracts() {
        let trace = run(&base()).unwrap();
        let gap0 = trace.rounds[0].gap;
        let mut prev = f64::INFINITY;
        for r in &trace.rounds {
            assert!(r.gap <= prev);
            prev = r.gap;
            // (1 − μ/L)^{2(t−1)} with μ = 1, L = 3.
            assert!(r.gap <= gap0 * (2.0f64 / 3.0).powi(2 * (r.t as i32 - 1)) * (1.0 + 1e-12));
        }
        assert!(trace.final_gap <= gap0 * (2.0f64 / 3.0).powi(100));
    }

    #[test]
    fn momentum_without_attack_converges() {
        let cfg = RunConfig {
            method: Method::Momentum { beta: 0.9 },
            aggregator: AggregatorSpec::Cwmed,
            workers: 3,
            noise: NoiseModel::Gaussian { sigma: 0.5 },
            attack: AttackSpec::MomentumDynamic {
                alpha: 1.0 / 30.0,
                v: Vector::new(vec![1.0, 1.0]).unwrap(),
                scale: 0.0,
            },
            switching: SwitchingSpec::RotatingThirds { alpha: 1.0 / 30.0 },
            lr: LrConfig::Fixed { eta: 0.05 },
            horizon: 2000,
            ..base()
        };
        let trace = run(&cfg).unwrap();
        assert!(trace.final_gap < 0.01 * trace.rounds[0].gap, "{}", trace.final_gap);
    }

    #[test]
    fn costs_match_oracle_counts() {
        let cfg = RunConfig {
            method: Method::Alg1Mlmc,
            noise: NoiseModel::Gaussian { sigma: 1.0 },
            aggregator: AggregatorSpec::Cwmed,
            attack: AttackSpec::SignFlip,
            switching: SwitchingSpec::Static { byz_indices: vec![0] },
            lr: LrConfig::Fixed { eta: 0.01 },
            horizon: 300,
            ..base()
        };
        let trace = run(&cfg).unwrap();
        let total: u64 = trace.rounds.iter().map(|r| r.cost).sum();
        assert!(trace.oracle_counts.iter().all(|&c| c == total));
        assert!(trace.rounds.iter().all(|r| r.level >= 1 && !r.dynamic_round));
        assert_eq!(trace.iterates.len(), 301);
    }

    #[test]
    fn repeat_runs_are_identical() {
        let cfg = RunConfig {
            method: Method::Alg2Opt2,
            noise: NoiseModel::BoundedBall { v: 1.0 },
            aggregator: AggregatorSpec::Mfm { threshold: 1.0 },
            attack: AttackSpec::Ipm { epsilon: 0.1 },
            switching: SwitchingSpec::Bernoulli {
                p: 0.1,
                duration: 3,
                delta_max: 0.4,
            },
            lr: LrConfig::AdagradNorm { eta0: 0.5 },
            horizon: 200,
            ..base()
        };
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.rounds.iter().all(|r| r.byz_fraction <= 0.4));
    }

    #[test]
    fn within_round_flips_mark_dynamic_rounds() {
        let cfg = RunConfig {
            method: Method::Alg1Mlmc,
            noise: NoiseModel::Gaussian { sigma: 0.1 },
            workers: 10,
            aggregator: AggregatorSpec::Cwmed,
            attack: AttackSpec::SignFlip,
            switching: SwitchingSpec::WithinRound {
                base: Box::new(SwitchingSpec::Static { byz_indices: vec![0, 1] }),
                flip_probability: 1.0,
            },
            lr: LrConfig::Fixed { eta: 0.01 },
            horizon: 200,
            ..base()
        };
        let trace = run(&cfg).unwrap();
        // A relabel can land on the same subset, so only most rounds switch.
        let eligible = trace.rounds.iter().filter(|r| r.level <= cfg.jmax()).count();
        let dynamic = trace.rounds.iter().filter(|r| r.dynamic_round).count();
        assert!(trace.rounds.iter().all(|r| !r.dynamic_round || r.level <= cfg.jmax()));
        assert!(dynamic as f64 >= 0.9 * eligible as f64, "{dynamic}/{eligible}");
    }
}
