//! Robust aggregation rules and an empirical probe of their robustness
//! constant.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::vecmath::{self, Vector};

/// Denominator floor used by Weiszfeld at (near-)coincident points.
const WEISZFELD_FLOOR: f64 = 1e-12;
/// Honest-variance level below which a robustness ratio is undefined.
const DEGENERATE_VARIANCE: f64 = 1e-24;

fn default_tol() -> f64 {
    1e-9
}

fn default_max_iter() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregatorSpec {
    Mean,
    Cwmed,
    Cwtm {
        trim_k: usize,
    },
    Geomed {
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    Mfm {
        threshold: f64,
    },
}

impl AggregatorSpec {
    pub fn geomed() -> Self {
        AggregatorSpec::Geomed {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }

    /// Trimmed mean that drops `⌊δ·m⌋` values from each side.
    pub fn cwtm_for(delta: f64, m: usize) -> Self {
        AggregatorSpec::Cwtm {
            trim_k: byzantine_count(delta, m),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AggregatorSpec::Mean => "mean",
            AggregatorSpec::Cwmed => "cwmed",
            AggregatorSpec::Cwtm { .. } => "cwtm",
            AggregatorSpec::Geomed { .. } => "geomed",
            AggregatorSpec::Mfm { .. } => "mfm",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AggregatorSpec::Geomed { tol, max_iter } => {
                if !(*tol > 0.0 && tol.is_finite()) {
                    return Err(Error::config("aggregator.tol", "must be positive"));
                }
                if *max_iter == 0 {
                    return Err(Error::config("aggregator.max_iter", "must be at least 1"));
                }
            }
            AggregatorSpec::Mfm { threshold } if !(*threshold > 0.0 && threshold.is_finite()) => {
                return Err(Error::config("aggregator.threshold", "must be positive"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// `⌊δ·m⌋`, robust to `δ·m` landing a hair below an integer.
pub fn byzantine_count(delta: f64, m: usize) -> usize {
    (delta * m as f64 + 1e-9).floor().max(0.0) as usize
}

fn check_dims(msgs: &[Vector]) -> Result<usize> {
    let first = msgs.first().ok_or(Error::Empty("aggregator input"))?;
    let d = first.dim();
    for v in msgs {
        if v.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: v.dim(),
            });
        }
    }
    Ok(d)
}

pub fn aggregate(spec: &AggregatorSpec, msgs: &[Vector]) -> Result<Vector> {
    spec.validate()?;
    check_dims(msgs)?;
    match spec {
        AggregatorSpec::Mean => vecmath::mean(msgs),
        AggregatorSpec::Cwmed => vecmath::coordinate_median(msgs),
        AggregatorSpec::Cwtm { trim_k } => vecmath::coordinate_trimmed_mean(msgs, *trim_k),
        AggregatorSpec::Geomed { tol, max_iter } => geometric_median(msgs, *tol, *max_iter),
        AggregatorSpec::Mfm { threshold } => mfm_aggregate(msgs, *threshold),
    }
}

/// `Σ ‖y − g_i‖`.
pub fn sum_of_distances(y: &Vector, msgs: &[Vector]) -> f64 {
    msgs.iter().map(|g| y.distance(g)).sum()
}

/// Norm of the minimal subgradient of `Σ‖y − g_i‖` at `y`: zero exactly at a
/// minimizer.
pub fn stationarity_residual(y: &Vector, msgs: &[Vector]) -> f64 {
    let mut pull = vec![0.0; y.dim()];
    let mut coincident = 0usize;
    for g in msgs {
        let dist = y.distance(g);
        if dist == 0.0 {
            coincident += 1;
            continue;
        }
        for ((p, a), b) in pull.iter_mut().zip(y.as_slice()).zip(g.as_slice()) {
            *p += (a - b) / dist;
        }
    }
    let norm = pull.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm - coincident as f64).max(0.0)
}

/// Weiszfeld iteration for the geometric median.
///
/// Stops once the subgradient residual is at most `tol`, otherwise returns
/// the best iterate seen in `max_iter` steps. Each step also tests whether
/// the input point nearest the iterate is itself optimal, since plain
/// Weiszfeld only approaches such minimizers geometrically.
pub fn geometric_median(msgs: &[Vector], tol: f64, max_iter: usize) -> Result<Vector> {
    let d = check_dims(msgs)?;
    if msgs.len() == 1 {
        return Ok(msgs[0].clone());
    }
    let mut y = vecmath::mean(msgs)?;
    let mut best = y.clone();
    let mut best_obj = sum_of_distances(&y, msgs);
    for _ in 0..max_iter.max(1) {
        if stationarity_residual(&y, msgs) <= tol {
            return Ok(y);
        }
        let nearest = msgs
            .iter()
            .min_by(|a, b| y.distance(a).total_cmp(&y.distance(b)))
            .expect("non-empty");
        if stationarity_residual(nearest, msgs) <= tol {
            return Ok(nearest.clone());
        }

        let mut num = vec![0.0; d];
        let mut den = 0.0;
        for g in msgs {
            let w = 1.0 / y.distance(g).max(WEISZFELD_FLOOR);
            den += w;
            for (n, x) in num.iter_mut().zip(g.as_slice()) {
                *n += w * x;
            }
        }
        let next = Vector::from_vec_unchecked(num.into_iter().map(|n| n / den).collect());
        let obj = sum_of_distances(&next, msgs);
        if obj < best_obj {
            best_obj = obj;
            best = next.clone();
        }
        let moved = next.distance(&y);
        y = next;
        if moved == 0.0 {
            break;
        }
    }
    Ok(best)
}

/// Internals of one MFM evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MfmSelection {
    /// Indices whose `T/2`-ball holds a strict majority of the messages.
    pub majority: Vec<usize>,
    /// Smallest index in `majority`, used as the median representative.
    pub median_index: Option<usize>,
    /// Indices within `T` of the representative; these are averaged.
    pub selected: Vec<usize>,
}

pub fn mfm_select(msgs: &[Vector], threshold: f64) -> Result<MfmSelection> {
    check_dims(msgs)?;
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::invalid("MFM threshold must be positive"));
    }
    let m = msgs.len();
    let majority: Vec<usize> = (0..m)
        .filter(|&i| {
            let close = msgs.iter().filter(|g| g.distance(&msgs[i]) <= threshold / 2.0).count();
            2 * close > m
        })
        .collect();
    let median_index = majority.first().copied();
    let selected = match median_index {
        Some(k) => (0..m).filter(|&i| msgs[i].distance(&msgs[k]) <= threshold).collect(),
        None => Vec::new(),
    };
    Ok(MfmSelection {
        majority,
        median_index,
        selected,
    })
}

/// Median-filtered mean: the zero vector when no majority ball exists.
pub fn mfm_aggregate(msgs: &[Vector], threshold: f64) -> Result<Vector> {
    let sel = mfm_select(msgs, threshold)?;
    if sel.selected.is_empty() {
        return Ok(Vector::zeros(msgs[0].dim()));
    }
    vecmath::mean_of(msgs, &sel.selected)
}

/// Outcome of one robustness-ratio evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Value(f64),
    /// Honest variance below `1e-24`; the ratio is undefined.
    Degenerate,
}

/// `‖A(msgs) − ḡ_S‖² / ((1/|S|) Σ_{i∈S} ‖g_i − ḡ_S‖²)`.
pub fn robustness_ratio(spec: &AggregatorSpec, msgs: &[Vector], honest: &[usize]) -> Result<Ratio> {
    if honest.is_empty() {
        return Err(Error::Empty("honest set"));
    }
    if let Some(&bad) = honest.iter().find(|&&i| i >= msgs.len()) {
        return Err(Error::invalid(format!("honest index {bad} out of range")));
    }
    let agg = aggregate(spec, msgs)?;
    let center = vecmath::mean_of(msgs, honest)?;
    let spread = honest.iter().map(|&i| msgs[i].distance(&center).powi(2)).sum::<f64>() / honest.len() as f64;
    if spread < DEGENERATE_VARIANCE {
        return Ok(Ratio::Degenerate);
    }
    Ok(Ratio::Value(agg.distance(&center).powi(2) / spread))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub max_ratio: f64,
    pub trials: usize,
    pub degenerate_count: usize,
}

/// Knobs for [`estimate_kappa_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct KappaProbe {
    pub dim: usize,
    /// Scale of honest deviations around their centre; zero makes every
    /// trial degenerate.
    pub honest_spread: f64,
    /// Byzantine offsets, in units of the honest standard deviation.
    pub magnitudes: Vec<f64>,
}

impl Default for KappaProbe {
    fn default() -> Self {
        KappaProbe {
            dim: 3,
            honest_spread: 1.0,
            magnitudes: vec![0.5, 1.0, 2.0, 5.0, 10.0, 100.0, 1e4, 1e6],
        }
    }
}

pub fn estimate_kappa(
    spec: &AggregatorSpec,
    m: usize,
    delta: f64,
    trials: usize,
    rng: &mut SimRng,
) -> Result<RobustnessReport> {
    estimate_kappa_with(spec, m, delta, trials, &KappaProbe::default(), rng)
}

fn gaussian_vec(dim: usize, scale: f64, rng: &mut SimRng) -> Vector {
    Vector::from_vec_unchecked((0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
}

fn unit(v: Vector) -> Option<Vector> {
    let n = v.l2_norm();
    (n > 0.0).then(|| v.scale(1.0 / n))
}

/// Monte Carlo upper envelope of the robustness ratio: random honest clouds
/// against a menu of Byzantine placements (one collinear far point, a tight
/// cluster at an offset from the honest mean, an antipodal split) swept over
/// offset magnitudes. Every trial counts once; a trial's ratio is the worst
/// over its menu.
pub fn estimate_kappa_with(
    spec: &AggregatorSpec,
    m: usize,
    delta: f64,
    trials: usize,
    probe: &KappaProbe,
    rng: &mut SimRng,
) -> Result<RobustnessReport> {
    if !(0.0..0.5).contains(&delta) {
        return Err(Error::invalid("delta must lie in [0, 1/2)"));
    }
    if trials == 0 || m == 0 || probe.dim == 0 {
        return Err(Error::invalid("trials, m and dim must be positive"));
    }
    spec.validate()?;
    let b = byzantine_count(delta, m);
    let h = m - b;
    let mut max_ratio: f64 = 0.0;
    let mut degenerate_count = 0;

    for _ in 0..trials {
        let center = gaussian_vec(probe.dim, 3.0, rng);
        let spread = probe.honest_spread * (0.1 + 2.0 * rng.gen::<f64>());
        let honest: Vec<Vector> = (0..h)
            .map(|_| center.add(&gaussian_vec(probe.dim, spread, rng)).expect("same dim"))
            .collect();
        let hmean = vecmath::mean(&honest)?;
        let sd = (honest.iter().map(|g| g.distance(&hmean).powi(2)).sum::<f64>() / h as f64).sqrt();

        // Direction of the honest point farthest from the mean, or a random
        // direction if the cloud is a point.
        let far = honest
            .iter()
            .max_by(|a, b| a.distance(&hmean).total_cmp(&b.distance(&hmean)))
            .and_then(|g| unit(g.sub(&hmean).expect("same dim")));
        let random_dir = loop {
            if let Some(u) = unit(gaussian_vec(probe.dim, 1.0, rng)) {
                break u;
            }
        };
        let collinear = far.unwrap_or_else(|| random_dir.clone());
        let step = if sd > 0.0 { sd } else { 1.0 };

        // Random placement of honest workers among the m slots.
        let mut slots: Vec<usize> = (0..m).collect();
        slots.shuffle(rng);
        let honest_idx: Vec<usize> = slots[..h].to_vec();

        let mut worst: Option<f64> = None;
        let mut degenerate = false;
        let mut evaluate = |byz: Vec<Vector>| -> Result<()> {
            let mut msgs = vec![Vector::zeros(probe.dim); m];
            for (slot, g) in honest_idx.iter().zip(&honest) {
                msgs[*slot] = g.clone();
            }
            for (slot, g) in slots[h..].iter().zip(byz) {
                msgs[*slot] = g;
            }
            match robustness_ratio(spec, &msgs, &honest_idx)? {
                Ratio::Value(r) => worst = Some(worst.map_or(r, |w: f64| w.max(r))),
                Ratio::Degenerate => degenerate = true,
            }
            Ok(())
        };

        if b == 0 {
            evaluate(Vec::new())?;
        }
        for &mag in if b == 0 { &[][..] } else { &probe.magnitudes[..] } {
            let shift = mag * step;
            // Collinear far point(s).
            evaluate(
                (0..b)
                    .map(|_| hmean.axpy(shift, &collinear).expect("same dim"))
                    .collect(),
            )?;
            // Cluster at mean + offset with small jitter.
            let anchor = hmean.axpy(shift, &random_dir).expect("same dim");
            let cluster: Vec<Vector> = (0..b)
                .map(|_| anchor.add(&gaussian_vec(probe.dim, 0.01 * step, rng)).expect("same dim"))
                .collect();
            evaluate(cluster)?;
            // Antipodal split.
            evaluate(
                (0..b)
                    .map(|k| {
                        let s = if k % 2 == 0 { shift } else { -shift };
                        hmean.axpy(s, &random_dir).expect("same dim")
                    })
                    .collect(),
            )?;
        }

        match worst {
            Some(r) => max_ratio = max_ratio.max(r),
            None if degenerate => degenerate_count += 1,
            None => {}
        }
    }

    Ok(RobustnessReport {
        max_ratio,
        trials,
        degenerate_count,
    })
}
