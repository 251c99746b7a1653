//! Built-in property suites. Each returns per-check measured values and
//! bounds; all randomness comes from fixed seeds.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::adversary::{apply_attack, verify_theta_bounds, AttackSpec, SwitchingSpec};
use crate::aggregators::{aggregate, estimate_kappa, mfm_aggregate, mfm_select, AggregatorSpec};
use crate::error::{Error, Result};
use crate::estimators::{
    enumerate_mlmc, failsafe_event, level_batch_sizes, mlmc_at_level, sample_level, FailsafeOption, MlmcParams,
};
use crate::harness::config::{LrConfig, Method, RunConfig};
use crate::harness::export::write_rounds;
use crate::harness::run::{run_with_seed, RunTrace};
use crate::harness::sweep::{replicate_seed, run_points, SweepPoint};
use crate::objectives::{lmgo_query, GradientOracle, NoiseModel, Objective, ObjectiveSpec};
use crate::optimize::{adagrad_regret, biased_sgd_bound, sgd_step, AdagradTrace, Domain, LrKind};
use crate::rng::{child_seed, stream, SimRng};
use crate::vecmath::Vector;

const SEED: u64 = 0xB12A_5EED;

/// Property suites in the order `byzsim verify --suite all` runs them.
pub const SUITES: [&str; 10] = [
    "mlmc",
    "aggregation",
    "mfm",
    "failsafe",
    "momentum_attack",
    "adagrad",
    "sgd_bounds",
    "momentum_experiment",
    "static_scaling",
    "determinism",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// How `measured` is compared with `bound`, for display.
    pub relation: &'static str,
    pub bound: f64,
    pub passed: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} {} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.relation,
            self.bound
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    fn new(suite: &str) -> Self {
        VerifyReport {
            suite: suite.to_string(),
            checks: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, measured: f64, relation: &'static str, bound: f64, passed: bool) {
        self.checks.push(Check {
            name: name.to_string(),
            measured,
            relation,
            bound,
            passed,
        });
    }

    fn le(&mut self, name: &str, measured: f64, bound: f64) {
        self.push(name, measured, "<=", bound, measured <= bound);
    }

    fn ge(&mut self, name: &str, measured: f64, bound: f64) {
        self.push(name, measured, ">=", bound, measured >= bound);
    }

    fn close(&mut self, name: &str, measured: f64, target: f64, tol: f64) {
        self.push(name, measured, "~=", target, (measured - target).abs() <= tol);
    }

    /// Reported for context; never fails.
    fn info(&mut self, name: &str, measured: f64) {
        self.push(name, measured, "(info)", f64::NAN, true);
    }
}

/// Runs a suite by name.
pub fn verify(suite: &str) -> Result<VerifyReport> {
    match suite {
        "mlmc" => mlmc(),
        "aggregation" => aggregation(),
        "mfm" => mfm(),
        "failsafe" => failsafe(),
        "momentum_attack" => momentum_attack(),
        "adagrad" => adagrad(),
        "sgd_bounds" => sgd_bounds(),
        "momentum_experiment" => momentum_experiment(),
        "static_scaling" => static_scaling(),
        "determinism" => determinism(),
        other => Err(Error::UnknownSuite(other.to_string())),
    }
}

fn v2(a: f64, b: f64) -> Vector {
    Vector::new(vec![a, b]).expect("finite")
}

fn gaussian(dim: usize, scale: f64, rng: &mut SimRng) -> Vector {
    Vector::new((0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()).expect("finite")
}

/// Bias, variance and cost of the MLMC estimator on the drift oracle, by
/// exact enumeration, plus a Monte Carlo cost estimate.
fn mlmc() -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("mlmc");
    let (c, horizon) = (1.0, 1024);
    let obj = Objective::quadratic(&[vec![2.0, 1.0], vec![1.0, 2.0]])?;
    let noise = NoiseModel::Drift {
        c,
        direction: v2(0.6, 0.8),
    };
    let x = v2(1.0, -2.0);
    let grad = obj.exact_gradient(&x)?;
    let params = MlmcParams::plain(horizon)?;
    let mut rng = stream(SEED);
    let mut oracle = |j: u32| lmgo_query(&obj, &noise, &x, 1usize << j, &mut rng);
    let moments = enumerate_mlmc(&mut oracle, &params)?;

    let bias = moments.mean.distance(&grad);
    let exact = c / 2f64.powi(params.jmax as i32).sqrt();
    rep.info("jmax", params.jmax as f64);
    rep.close("bias equals c/sqrt(2^jmax)", bias, exact, 1e-12);
    rep.le("bias", bias, (2.0 * c * c / horizon as f64).sqrt());
    rep.le("variance", moments.variance, 14.0 * c * c * (horizon as f64).log2());
    rep.close("expected cost", moments.expected_cost, 1.0 + 1.5 * params.jmax as f64, 1e-12);

    let samples = 100_000;
    let mut lvl_rng = stream(child_seed(SEED, 1));
    let mut total = 0u64;
    for _ in 0..samples {
        let j = sample_level(&mut lvl_rng);
        total += mlmc_at_level(&mut |_| Ok(grad.clone()), &params, j)?.per_worker_cost;
    }
    let mc = total as f64 / samples as f64;
    rep.close("monte carlo cost", mc, 1.0 + 1.5 * params.jmax as f64, 0.5);
    Ok(rep)
}

/// Fixed-seed κ estimate shared by the suites that need one.
pub fn kappa_hat(spec: &AggregatorSpec, m: usize, delta: f64) -> Result<f64> {
    let mut rng = stream(child_seed(SEED, 0xCAFE));
    Ok(estimate_kappa(spec, m, delta, 2000, &mut rng)?.max_ratio)
}

/// Mean squared error of aggregated mini-batch gradients.
fn aggregation() -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("aggregation");
    let (m, n, sigma, trials) = (10usize, 16usize, 1.0, 10_000);
    let obj = ObjectiveSpec::two_by_two().build()?;
    let noise = NoiseModel::Gaussian { sigma };
    let x = v2(1.0, 1.0);
    let grad = obj.exact_gradient(&x)?;
    let mut oracle = GradientOracle::new(&obj, &noise, m);
    let mut rng = stream(child_seed(SEED, 2));

    let mut mse_mean = 0.0;
    let mut mse_cwmed = 0.0;
    let byz = [0usize, 1];
    for _ in 0..trials {
        let msgs = (0..m)
            .map(|i| oracle.minibatch(i, &x, n, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        mse_mean += aggregate(&AggregatorSpec::Mean, &msgs)?.distance(&grad).powi(2);
        let attacked = apply_attack(&AttackSpec::SignFlip, &msgs, &byz, 1)?;
        mse_cwmed += aggregate(&AggregatorSpec::Cwmed, &attacked)?.distance(&grad).powi(2);
    }
    mse_mean /= trials as f64;
    mse_cwmed /= trials as f64;

    let target = sigma * sigma / (n * m) as f64;
    rep.ge("mean mse lower", mse_mean, 0.9 * target);
    rep.le("mean mse upper", mse_mean, 1.1 * target);
    let kappa = kappa_hat(&AggregatorSpec::Cwmed, m, 0.2)?;
    rep.info("cwmed kappa estimate", kappa);
    rep.le(
        "cwmed mse under sign flip",
        mse_cwmed,
        2.0 * sigma * sigma / n as f64 * (kappa + 1.0 / m as f64),
    );

    // Mean is not robust: a single far point drives the ratio up.
    let mean_kappa = kappa_hat(&AggregatorSpec::Mean, 10, 0.1)?;
    rep.ge("mean kappa unbounded", mean_kappa, 1e6);
    Ok(rep)
}

/// Random MFM instances whose honest messages lie within `T/4` of the true
/// gradient, against several Byzantine placements.
fn mfm() -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("mfm");
    let trials = 10_000;
    let mut rng = stream(child_seed(SEED, 3));
    let (mut empty_majority, mut honest_dropped, mut far_selected, mut clean_mismatch) = (0, 0, 0, 0);

    for trial in 0..trials {
        let dim = rng.gen_range(1..=5);
        let m = rng.gen_range(3..=15);
        let b = rng.gen_range(0..=(m - 1) / 2);
        let threshold = rng.gen_range(0.1..10.0);
        let grad = gaussian(dim, 5.0, &mut rng);
        let ball = NoiseModel::BoundedBall { v: threshold / 4.0 };
        let mut msgs = (0..m)
            .map(|_| grad.add(&ball.draw(dim, &mut rng)?))
            .collect::<Result<Vec<_>>>()?;
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        let byz = &order[..b];
        let cluster = grad.add(&gaussian(dim, threshold * rng.gen_range(0.0..3.0), &mut rng))?;
        for &i in byz {
            msgs[i] = match trial % 3 {
                0 => grad.add(&gaussian(dim, threshold * rng.gen_range(0.0..5.0), &mut rng))?,
                1 => cluster.clone(),
                _ => grad.add(&gaussian(dim, 1e6, &mut rng))?,
            };
        }
        let sel = mfm_select(&msgs, threshold)?;
        if sel.majority.is_empty() {
            empty_majority += 1;
            continue;
        }
        let honest: Vec<usize> = order[b..].to_vec();
        if honest.iter().any(|i| !sel.selected.contains(i)) {
            honest_dropped += 1;
        }
        if sel.selected.iter().any(|&i| msgs[i].distance(&grad) > 2.0 * threshold) {
            far_selected += 1;
        }
        if b == 0 {
            let all: Vec<usize> = (0..m).collect();
            let mean = crate::vecmath::mean_of(&msgs, &all)?;
            if mfm_aggregate(&msgs, threshold)?.distance(&mean) > 1e-12 * (1.0 + mean.l2_norm()) {
                clean_mismatch += 1;
            }
        }
    }
    rep.le("empty majority set", empty_majority as f64, 0.0);
    rep.le("honest worker filtered out", honest_dropped as f64, 0.0);
    rep.le("selected message farther than 2T", far_selected as f64, 0.0);
    rep.le("clean output differs from mean", clean_mismatch as f64, 0.0);

    let msgs: Vec<Vector> = [0.0, 0.0, 0.0, 3.0].iter().map(|&x| Vector::new(vec![x])).collect::<Result<_>>()?;
    let out = mfm_aggregate(&msgs, 4.0)?;
    rep.close("counterexample output", out[0], 0.75, 0.0);
    Ok(rep)
}

/// Frequency with which the fail-safe event fails on static rounds.
fn failsafe() -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("failsafe");
    let (m, horizon, v) = (10usize, 1000usize, 1.0);
    let obj = ObjectiveSpec::two_by_two().build()?;
    let noise = NoiseModel::BoundedBall { v };
    let x = v2(1.0, 1.0);
    let byz = [0usize, 1];
    let kappa = kappa_hat(&AggregatorSpec::Cwmed, m, 0.2)?;
    rep.info("cwmed kappa estimate", kappa);
    let bound = 10.0 / (2.0 * m as f64 * horizon as f64);

    let cases = [
        ("option 1 cwmed", FailsafeOption::Opt1 { kappa, m }, 100_000usize),
        ("option 2 mfm", FailsafeOption::Opt2 { m }, 20_000),
    ];
    for (k, (name, option, evaluations)) in cases.into_iter().enumerate() {
        let params = MlmcParams::new(horizon, option, v)?;
        let mut oracle = GradientOracle::new(&obj, &noise, m);
        let mut rng = stream(child_seed(SEED, 40 + k as u64));
        let mut failures = 0usize;
        for e in 0..evaluations {
            let j = 1 + (e as u32 % params.jmax);
            let sizes = &level_batch_sizes(j, params.jmax)[1..];
            let mut per_level: [Vec<Vector>; 2] = [Vec::with_capacity(m), Vec::with_capacity(m)];
            for i in 0..m {
                for (l, g) in oracle.level_batches(i, &x, sizes, true, &mut rng)?.into_iter().enumerate() {
                    per_level[l].push(g);
                }
            }
            let ghat: Vec<Vector> = per_level
                .iter()
                .zip([j - 1, j])
                .map(|(msgs, level)| {
                    let attacked = apply_attack(&AttackSpec::SignFlip, msgs, &byz, 1)?;
                    aggregate(&params.level_aggregator(&AggregatorSpec::Cwmed, level), &attacked)
                })
                .collect::<Result<_>>()?;
            if !failsafe_event(&ghat[1], &ghat[0], j, &params)? {
                failures += 1;
            }
        }
        rep.le(
            &format!("{name} failure frequency"),
            failures as f64 / evaluations as f64,
            bound,
        );
    }
    Ok(rep)
}

/// Bias recursion of the dynamic momentum attack.
fn momentum_attack() -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("momentum_attack");
    let alpha = 1.0 / 30.0;
    let horizon = 3000;
    let r = verify_theta_bounds(alpha, &v2(1.0, 1.0), horizon)?;
    rep.le("bias deviation in byzantine thirds", r.max_byzantine_deviation, 1e-12);
    rep.ge("theta min", r.theta_min, (5.0f64 / 6.0).powi(4));
    rep.le("theta max", r.theta_max, 1.0 + 1e-12);
    rep.close("theta floor", r.theta_floor, (29.0f64 / 30.0).powi(20), 1e-12);
    rep.close("switching rounds", r.switches as f64, 3.0 * alpha * horizon as f64, 3.0);
    rep.info("first epoch anomalies", r.first_epoch_anomalies.len() as f64);
    Ok(rep)
}

fn random_spd(dim: usize, rng: &mut SimRng) -> Vec<Vec<f64>> {
    let b: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    let dot: f64 = (0..dim).map(|k| b[i][k] * b[j][k]).sum();
                    dot / dim as f64 + if i == j { 0.2 } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

/// A random bounded-domain AdaGrad-Norm run description.
pub fn random_adagrad_config(rng: &mut SimRng) -> Result<RunConfig> {
    let objective = match rng.gen_range(0..3) {
        0 => {
            let dim = rng.gen_range(2..=4);
            ObjectiveSpec::Quadratic {
                a: random_spd(dim, rng),
            }
        }
        1 => ObjectiveSpec::LeastSquares {
            dim: rng.gen_range(2..=5),
        },
        _ => ObjectiveSpec::Logistic {
            dim: rng.gen_range(2..=5),
            reg: 0.1,
        },
    };
    let obj = objective.build()?;
    let dim = obj.dim();
    let opt = obj.minimizer().clone();
    let domain = if rng.gen_bool(0.5) {
        let offset = gaussian(dim, 0.5, rng);
        Domain::L2Ball {
            radius: offset.l2_norm() + rng.gen_range(0.5..3.0),
            center: opt.add(&offset)?,
        }
    } else {
        let lo = opt.as_slice().iter().map(|x| x - rng.gen_range(0.5..2.0)).collect();
        let hi = opt.as_slice().iter().map(|x| x + rng.gen_range(0.5..2.0)).collect();
        Domain::Box {
            lo: Vector::new(lo)?,
            hi: Vector::new(hi)?,
        }
    };
    let noise = if rng.gen_bool(0.5) {
        NoiseModel::Gaussian {
            sigma: rng.gen_range(0.0..2.0),
        }
    } else {
        NoiseModel::BoundedBall {
            v: rng.gen_range(0.1..2.0),
        }
    };
    let workers = rng.gen_range(3..=10);
    let delta = [0.0, 0.1, 0.2, 0.3][rng.gen_range(0..4)];
    let byz_count = crate::aggregators::byzantine_count(delta, workers);
    let switching = match rng.gen_range(0..3) {
        0 => {
            let mut idx: Vec<usize> = (0..workers).collect();
            idx.shuffle(rng);
            SwitchingSpec::Static {
                byz_indices: idx[..byz_count].to_vec(),
            }
        }
        1 => SwitchingSpec::Periodic {
            period: rng.gen_range(1..=20),
            delta,
        },
        _ => SwitchingSpec::Bernoulli {
            p: rng.gen_range(0.0..0.3),
            duration: rng.gen_range(1..=10),
            delta_max: delta,
        },
    };
    let attack = match rng.gen_range(0..5) {
        0 => AttackSpec::None,
        1 => AttackSpec::SignFlip,
        2 => AttackSpec::Ipm { epsilon: 0.1 },
        3 => AttackSpec::Alie { z: None },
        _ => AttackSpec::FixedShift {
            v: gaussian(dim, 3.0, rng),
        },
    };
    let aggregator = match rng.gen_range(0..5) {
        0 => AggregatorSpec::Mean,
        1 => AggregatorSpec::Cwmed,
        2 => AggregatorSpec::Cwtm {
            trim_k: byz_count.min((workers - 1) / 2),
        },
        3 => AggregatorSpec::Geomed {
            tol: 1e-8,
            max_iter: 500,
        },
        _ => AggregatorSpec::Mfm {
            threshold: rng.gen_range(0.5..5.0),
        },
    };
    let bounded = noise.bound().is_some_and(|b| b > 0.0);
    let method = match rng.gen_range(0..5) {
        0 => Method::Sgd,
        1 => Method::Momentum {
            beta: [0.5, 0.9][rng.gen_range(0..2)],
        },
        2 => Method::Alg1Mlmc,
        3 if bounded => Method::Alg2Opt1 { kappa: 1.0 },
        4 if bounded => Method::Alg2Opt2,
        _ => Method::Alg1Mlmc,
    };
    Ok(RunConfig {
        objective,
        noise,
        start: gaussian(dim, 3.0, rng),
        workers,
        method,
        aggregator,
        attack,
        switching,
        lr: LrConfig::AdagradNorm {
            eta0: rng.gen_range(0.05..2.0),
        },
        horizon: 200,
        domain,
        seed: rng.gen(),
        seeds_count: 1,
        jmax_override: None,
        coupled_batches: rng.gen_bool(0.5),
        batch_size: rng.gen_range(1..=4),
    })
}

/// The AdaGrad-Norm regret inequality against `x*` on random runs.
fn adagrad() -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("adagrad");
    let mut rng = stream(child_seed(SEED, 5));
    let points = (0..1000)
        .map(|run_id| {
            let config = random_adagrad_config(&mut rng)?;
            Ok(SweepPoint {
                run_id,
                axes: Vec::new(),
                replicate: 0,
                seed: config.seed,
                config,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let runs = run_points(points)?;
    let mut failures = 0usize;
    let mut worst: f64 = f64::NEG_INFINITY;
    for r in &runs {
        let cfg = &r.point.config;
        let obj = cfg.objective.build()?;
        let LrConfig::AdagradNorm { eta0 } = cfg.lr else {
            unreachable!("adagrad suite builds adagrad configs")
        };
        let trace = AdagradTrace {
            iterates: r.trace.iterates[..cfg.horizon].to_vec(),
            gradients: r.trace.step_gradients.clone(),
            eta0,
        };
        let diameter = cfg.domain.diameter().expect("bounded domain");
        let check = adagrad_regret(&trace, obj.minimizer(), diameter)?;
        if !check.holds {
            failures += 1;
        }
        if check.rhs > 0.0 {
            worst = worst.max(check.lhs / check.rhs);
        }
    }
    rep.info("runs", runs.len() as f64);
    rep.info("largest lhs/rhs", worst);
    rep.le("regret inequality failures", failures as f64, 0.0);

    // Test of the test: a trace whose steps are 10⁴ times smaller than the
    // claimed η₀ stays far from u and must violate the inequality.
    let obj = ObjectiveSpec::two_by_two().build()?;
    let (radius, diameter) = (10.0, 20.0);
    let domain = Domain::L2Ball {
        center: v2(0.0, 0.0),
        radius,
    };
    let eta0 = diameter / std::f64::consts::SQRT_2;
    let mut x = v2(9.0, -4.0);
    let (mut iterates, mut gradients, mut acc) = (Vec::new(), Vec::new(), 0.0);
    for _ in 0..200 {
        let g = obj.exact_gradient(&x)?;
        acc += g.norm_sq();
        iterates.push(x.clone());
        gradients.push(g.clone());
        x = sgd_step(&x, &g, 1e-4 * eta0 / acc.sqrt(), &domain)?;
    }
    let corrupted = adagrad_regret(
        &AdagradTrace {
            iterates,
            gradients,
            eta0,
        },
        obj.minimizer(),
        diameter,
    )?;
    rep.push(
        "corrupted trace is rejected",
        corrupted.lhs,
        ">",
        corrupted.rhs,
        !corrupted.holds,
    );
    Ok(rep)
}

/// Biased SGD on smooth objectives against `2Δ₁/(Tη) + ηL·V² + ‖b‖²`.
fn sgd_bounds() -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("sgd_bounds");
    let cases = [
        (ObjectiveSpec::two_by_two(), 0.3, 0.5),
        (ObjectiveSpec::LeastSquares { dim: 4 }, 0.1, 1.0),
        (ObjectiveSpec::Logistic { dim: 3, reg: 0.1 }, 0.05, 0.2),
    ];
    let horizon = 500;
    let mut runs = 0;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for (case, (spec, bias_norm, v)) in cases.iter().enumerate() {
        let obj = spec.build()?;
        let dim = obj.dim();
        let l = obj.smoothness();
        let eta = 0.5 / l;
        let noise = NoiseModel::BoundedBall { v: *v };
        for seed in 0..20u64 {
            let mut rng = stream(child_seed(SEED ^ 0x5D, (case as u64) << 32 | seed));
            let start = gaussian(dim, 2.0, &mut rng);
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let delta1 = obj.gap(&start)?;
            let mut x = start;
            let (mut grad_sq, mut bias_sq) = (0.0, 0.0);
            for t in 0..horizon {
                let grad = obj.exact_gradient(&x)?;
                grad_sq += grad.norm_sq();
                // A slowly rotating bias of fixed norm in the first plane.
                let angle = phase + 0.01 * t as f64;
                let mut b = vec![0.0; dim];
                b[0] = bias_norm * angle.cos();
                b[1] = bias_norm * angle.sin();
                let b = Vector::new(b)?;
                bias_sq += b.norm_sq();
                let g = grad.add(&b)?.add(&noise.draw(dim, &mut rng)?)?;
                x = sgd_step(&x, &g, eta, &Domain::Unconstrained)?;
            }
            let measured = grad_sq / horizon as f64;
            let bound = biased_sgd_bound(delta1, horizon, eta, l, noise.variance(), bias_sq / horizon as f64);
            worst = worst.max(measured / bound);
            runs += 1;
            if measured > 2.0 * bound {
                violations += 1;
            }
        }
    }

    // The same inequality through the full harness: drift noise is a pure
    // deterministic bias of norm c.
    for seed in 0..20u64 {
        let cfg = RunConfig {
            objective: ObjectiveSpec::two_by_two(),
            noise: NoiseModel::Drift {
                c: 0.4,
                direction: v2(0.6, -0.8),
            },
            start: v2(2.0, -1.0),
            workers: 5,
            method: Method::Sgd,
            aggregator: AggregatorSpec::Mean,
            attack: AttackSpec::None,
            switching: SwitchingSpec::Static { byz_indices: vec![] },
            lr: LrConfig::Fixed { eta: 0.1 },
            horizon: 200 + 10 * seed as usize,
            domain: Domain::Unconstrained,
            seed,
            seeds_count: 1,
            jmax_override: None,
            coupled_batches: true,
            batch_size: 1,
        };
        let trace = run_with_seed(&cfg, seed)?;
        let obj = cfg.objective.build()?;
        let measured = trace.summary().avg_grad_norm_sq;
        let bound = biased_sgd_bound(obj.gap(&cfg.start)?, cfg.horizon, 0.1, obj.smoothness(), 0.0, 0.16);
        worst = worst.max(measured / bound);
        runs += 1;
        if measured > 2.0 * bound {
            violations += 1;
        }
    }
    rep.info("runs", runs as f64);
    rep.info("largest measured/bound", worst);
    rep.le("runs exceeding twice the bound", violations as f64, 0.0);
    Ok(rep)
}

/// Spearman rank correlation, ties given their average rank.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(x: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
        let mut r = vec![0.0; x.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// The two-dimensional quadratic under the rotating momentum attack.
pub fn momentum_experiment_config(method: Method, scale: f64) -> RunConfig {
    let alpha = 1.0 / 99.0;
    RunConfig {
        objective: ObjectiveSpec::two_by_two(),
        // Per-coordinate standard deviation 0.5.
        noise: NoiseModel::Gaussian {
            sigma: 0.5 * std::f64::consts::SQRT_2,
        },
        start: v2(1.0, 1.0),
        workers: 3,
        method,
        aggregator: AggregatorSpec::Cwmed,
        attack: AttackSpec::MomentumDynamic {
            alpha,
            v: v2(1.0, 1.0),
            scale,
        },
        switching: SwitchingSpec::RotatingThirds { alpha },
        lr: LrConfig::Fixed { eta: 5e-3 },
        horizon: 3000,
        domain: Domain::Unconstrained,
        seed: SEED,
        seeds_count: 1,
        jmax_override: None,
        coupled_batches: true,
        batch_size: 1,
    }
}

/// Mean final gap per config over `seeds` replicates.
fn mean_final_gaps(configs: Vec<RunConfig>, seeds: usize) -> Result<Vec<f64>> {
    let n = configs.len();
    let points: Vec<SweepPoint> = configs
        .into_iter()
        .enumerate()
        .flat_map(|(c, config)| {
            (0..seeds).map(move |s| SweepPoint {
                run_id: c * seeds + s,
                axes: Vec::new(),
                replicate: s,
                seed: replicate_seed(config.seed, s),
                config: config.clone(),
            })
        })
        .collect();
    let runs = run_points(points)?;
    let mut means = vec![0.0; n];
    for r in &runs {
        means[r.point.run_id / seeds] += r.trace.final_gap / seeds as f64;
    }
    Ok(means)
}

fn momentum_experiment() -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("momentum_experiment");
    let scales = [0.0, 0.5, 1.0, 2.0, 5.0];
    let seeds = 20;
    let momentum = mean_final_gaps(
        scales
            .iter()
            .map(|&s| momentum_experiment_config(Method::Momentum { beta: 0.99 }, s))
            .collect(),
        seeds,
    )?;
    for (s, g) in scales.iter().zip(&momentum) {
        rep.info(&format!("momentum mean final gap at scale {s}"), *g);
    }
    let drops = momentum.windows(2).filter(|w| w[1] < w[0]).count();
    rep.le("momentum gap decreases between scales", drops as f64, 0.0);
    rep.ge("momentum spearman", spearman(&scales, &momentum), 0.9);
    rep.ge("momentum gap ratio scale 5 vs 0", momentum[4] / momentum[0], 5.0);

    let mlmc = mean_final_gaps(
        [0.0, 5.0]
            .iter()
            .map(|&s| momentum_experiment_config(Method::Alg1Mlmc, s))
            .collect(),
        seeds,
    )?;
    rep.info("mlmc mean final gap at scale 0", mlmc[0]);
    rep.info("mlmc mean final gap at scale 5", mlmc[1]);
    rep.le("mlmc gap ratio scale 5 vs 0", mlmc[1] / mlmc[0], 3.0);
    Ok(rep)
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Plain MLMC under a static sign-flip attack with the theoretical rate.
pub fn static_scaling_config(horizon: usize, kappa: f64) -> RunConfig {
    RunConfig {
        objective: ObjectiveSpec::two_by_two(),
        noise: NoiseModel::Gaussian { sigma: 0.5 },
        start: v2(1.0, 1.0),
        workers: 10,
        method: Method::Alg1Mlmc,
        aggregator: AggregatorSpec::Cwtm { trim_k: 2 },
        attack: AttackSpec::SignFlip,
        switching: SwitchingSpec::Static { byz_indices: vec![0, 1] },
        lr: LrConfig::Theoretical {
            rule: LrKind::StaticNonconvex,
            kappa: Some(kappa),
            log_base: Default::default(),
        },
        horizon,
        domain: Domain::Unconstrained,
        seed: SEED,
        seeds_count: 1,
        jmax_override: None,
        coupled_batches: true,
        batch_size: 1,
    }
}

fn static_scaling() -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("static_scaling");
    let kappa = kappa_hat(&AggregatorSpec::Cwtm { trim_k: 2 }, 10, 0.2)?;
    rep.info("cwtm kappa estimate", kappa);
    let horizons = [500usize, 2000, 8000];
    let seeds = 10;
    let points: Vec<SweepPoint> = horizons
        .iter()
        .enumerate()
        .flat_map(|(h, &horizon)| {
            let config = static_scaling_config(horizon, kappa);
            (0..seeds).map(move |s| SweepPoint {
                run_id: h * seeds + s,
                axes: Vec::new(),
                replicate: s,
                seed: replicate_seed(config.seed, s),
                config: config.clone(),
            })
        })
        .collect();
    let runs = run_points(points)?;
    let mut metric = vec![0.0; horizons.len()];
    for r in &runs {
        metric[r.point.run_id / seeds] += r.trace.summary().avg_grad_norm_sq / seeds as f64;
    }
    for (h, m) in horizons.iter().zip(&metric) {
        rep.info(&format!("mean avg squared gradient norm at T={h}"), *m);
    }
    rep.le(
        "metric finite",
        metric.iter().filter(|m| !m.is_finite()).count() as f64,
        0.0,
    );
    let drops = metric.windows(2).filter(|w| w[1] >= w[0]).count();
    rep.le("metric fails to decrease in T", drops as f64, 0.0);
    let lx: Vec<f64> = horizons.iter().map(|&h| (h as f64).ln()).collect();
    let ly: Vec<f64> = metric.iter().map(|m| m.ln()).collect();
    rep.le("log-log slope", slope(&lx, &ly), -0.35);
    Ok(rep)
}

/// Configurations covering every method, switching rule and attack.
pub fn determinism_matrix() -> Vec<RunConfig> {
    let base = RunConfig {
        objective: ObjectiveSpec::two_by_two(),
        noise: NoiseModel::BoundedBall { v: 1.0 },
        start: v2(1.0, -1.0),
        workers: 6,
        method: Method::Alg1Mlmc,
        aggregator: AggregatorSpec::Cwmed,
        attack: AttackSpec::SignFlip,
        switching: SwitchingSpec::Static { byz_indices: vec![0, 3] },
        lr: LrConfig::Fixed { eta: 0.02 },
        horizon: 150,
        domain: Domain::Unconstrained,
        seed: 77,
        seeds_count: 1,
        jmax_override: None,
        coupled_batches: true,
        batch_size: 1,
    };
    vec![
        base.clone(),
        RunConfig {
            method: Method::Alg2Opt1 { kappa: 2.0 },
            switching: SwitchingSpec::Periodic { period: 7, delta: 0.34 },
            attack: AttackSpec::Alie { z: None },
            ..base.clone()
        },
        RunConfig {
            method: Method::Alg2Opt2,
            switching: SwitchingSpec::Bernoulli {
                p: 0.05,
                duration: 4,
                delta_max: 0.34,
            },
            attack: AttackSpec::Ipm { epsilon: 0.5 },
            lr: LrConfig::AdagradNorm { eta0: 0.3 },
            coupled_batches: false,
            ..base.clone()
        },
        RunConfig {
            switching: SwitchingSpec::WithinRound {
                base: Box::new(SwitchingSpec::Static { byz_indices: vec![1] }),
                flip_probability: 0.5,
            },
            aggregator: AggregatorSpec::geomed(),
            jmax_override: Some(4),
            ..base.clone()
        },
        RunConfig {
            objective: ObjectiveSpec::Logistic { dim: 3, reg: 0.1 },
            start: Vector::zeros(3),
            method: Method::Momentum { beta: 0.9 },
            noise: NoiseModel::Gaussian { sigma: 1.0 },
            attack: AttackSpec::FixedShift {
                v: Vector::new(vec![1.0, 0.0, -1.0]).expect("finite"),
            },
            aggregator: AggregatorSpec::Cwtm { trim_k: 2 },
            domain: Domain::L2Ball {
                center: Vector::zeros(3),
                radius: 5.0,
            },
            ..base.clone()
        },
        RunConfig {
            objective: ObjectiveSpec::LeastSquares { dim: 4 },
            start: Vector::zeros(4),
            method: Method::Sgd,
            batch_size: 3,
            noise: NoiseModel::Gaussian { sigma: 0.5 },
            attack: AttackSpec::None,
            aggregator: AggregatorSpec::Mean,
            lr: LrConfig::Theoretical {
                rule: LrKind::StaticNonconvex,
                kappa: Some(1.0),
                log_base: Default::default(),
            },
            ..base.clone()
        },
        momentum_experiment_config(Method::Momentum { beta: 0.99 }, 2.0),
        RunConfig {
            horizon: 300,
            ..momentum_experiment_config(Method::Alg1Mlmc, 2.0)
        },
    ]
}

fn csv_bytes(trace: &RunTrace) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_rounds(&mut buf, &[(0, trace)])?;
    Ok(buf)
}

fn determinism() -> Result<VerifyReport> {
    let mut rep = VerifyReport::new("determinism");
    let matrix = determinism_matrix();
    let (mut csv_mismatch, mut count_mismatch, mut sweep_mismatch) = (0, 0, 0);
    let mut sequential = Vec::new();
    for cfg in &matrix {
        let a = run_with_seed(cfg, cfg.seed)?;
        let b = run_with_seed(cfg, cfg.seed)?;
        if csv_bytes(&a)? != csv_bytes(&b)? || a != b {
            csv_mismatch += 1;
        }
        let total: u64 = a.rounds.iter().map(|r| r.cost).sum();
        if a.oracle_counts.iter().any(|&c| c != total) {
            count_mismatch += 1;
        }
        sequential.push(a);
    }
    // Parallel execution must reproduce sequential results.
    let points = matrix
        .iter()
        .enumerate()
        .map(|(run_id, config)| SweepPoint {
            run_id,
            axes: Vec::new(),
            replicate: 0,
            seed: config.seed,
            config: config.clone(),
        })
        .collect();
    for (r, seq) in run_points(points)?.iter().zip(&sequential) {
        if &r.trace != seq {
            sweep_mismatch += 1;
        }
    }
    rep.info("configs", matrix.len() as f64);
    rep.le("repeat runs with different csv", csv_mismatch as f64, 0.0);
    rep.le("oracle count differs from summed cost", count_mismatch as f64, 0.0);
    rep.le("parallel runs differ from sequential", sweep_mismatch as f64, 0.0);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_an_error() {
        assert!(matches!(verify("nope"), Err(Error::UnknownSuite(_))));
    }

    #[test]
    fn spearman_and_slope() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 3.0]) - 0.9486832980505138).abs() < 1e-12);
        assert!((slope(&[0.0, 1.0, 2.0], &[1.0, -1.0, -3.0]) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn quick_suites_pass() {
        for suite in ["mlmc", "mfm", "momentum_attack"] {
            let rep = verify(suite).unwrap();
            assert!(rep.passed(), "{suite}: {:?}", rep.checks);
        }
    }
}
