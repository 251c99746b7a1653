//! Synthetic objectives with exact gradients, additive-noise stochastic
//! gradient oracles, and the deterministic drift oracle used to exercise the
//! MLMC estimator in isolation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, SimRng};
use crate::vecmath::Vector;

/// Seed of the generator that produces the built-in regression and
/// classification datasets. Fixed so the data are part of the program.
const DATASET_SEED: u64 = 0x5EED_DA7A;
const DATASET_POINTS: usize = 50;
const MAX_DATASET_DIM: usize = 10;

/// Serializable description of an objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    /// `f(x) = ½ xᵀAx` for a symmetric positive-definite `a`.
    Quadratic { a: Vec<Vec<f64>> },
    /// `f(x) = (1/2n)‖Ax − b‖²` on the built-in 50-point dataset.
    LeastSquares { dim: usize },
    /// L2-regularised logistic loss on the built-in 50-point dataset.
    Logistic {
        dim: usize,
        #[serde(default = "default_logistic_reg")]
        reg: f64,
    },
}

fn default_logistic_reg() -> f64 {
    0.1
}

impl ObjectiveSpec {
    /// The 2-D quadratic with `A = [[2, 1], [1, 2]]`.
    pub fn two_by_two() -> Self {
        ObjectiveSpec::Quadratic {
            a: vec![vec![2.0, 1.0], vec![1.0, 2.0]],
        }
    }

    pub fn build(&self) -> Result<Objective> {
        match self {
            ObjectiveSpec::Quadratic { a } => Objective::quadratic(a),
            ObjectiveSpec::LeastSquares { dim } => Objective::least_squares(*dim),
            ObjectiveSpec::Logistic { dim, reg } => Objective::logistic(*dim, *reg),
        }
    }
}

#[derive(Debug, Clone)]
enum ObjectiveKind {
    Quadratic {
        a: DMatrix<f64>,
    },
    LeastSquares {
        design: DMatrix<f64>,
        targets: DVector<f64>,
    },
    Logistic {
        features: DMatrix<f64>,
        labels: DVector<f64>,
        reg: f64,
    },
}

/// A smooth objective with known minimizer, optimal value and smoothness.
#[derive(Debug, Clone)]
pub struct Objective {
    kind: ObjectiveKind,
    dim: usize,
    minimizer: Vector,
    f_star: f64,
    smoothness: f64,
    strong_convexity: f64,
}

fn sym_eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn to_dvec(x: &Vector) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

fn from_dvec(v: DVector<f64>) -> Vector {
    Vector::from_vec_unchecked(v.as_slice().to_vec())
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dataset(dim: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if dim == 0 || dim > MAX_DATASET_DIM {
        return Err(Error::invalid(format!(
            "dataset dimension must be in 1..={MAX_DATASET_DIM}, got {dim}"
        )));
    }
    let mut rng = stream(DATASET_SEED ^ dim as u64);
    let design = DMatrix::from_fn(DATASET_POINTS, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let truth = DVector::from_fn(dim, |i, _| 1.0 - 0.25 * i as f64);
    let noise = DVector::from_fn(DATASET_POINTS, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
    let targets = &design * &truth + noise;
    Ok((design, targets))
}

impl Objective {
    pub fn quadratic(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("quadratic matrix must be square and non-empty"));
        }
        let a = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quadratic matrix"));
        }
        if (&a - a.transpose()).amax() > 1e-12 {
            return Err(Error::invalid("quadratic matrix must be symmetric"));
        }
        let (mu, l) = sym_eigen_range(&a);
        if mu <= 0.0 {
            return Err(Error::invalid("quadratic matrix must be positive definite"));
        }
        Ok(Objective {
            kind: ObjectiveKind::Quadratic { a },
            dim: d,
            minimizer: Vector::zeros(d),
            f_star: 0.0,
            smoothness: l,
            strong_convexity: mu,
        })
    }

    pub fn least_squares(dim: usize) -> Result<Self> {
        let (design, targets) = dataset(dim)?;
        let n = DATASET_POINTS as f64;
        let gram = design.transpose() * &design / n;
        let rhs = design.transpose() * &targets / n;
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invalid("least-squares Gram matrix is singular"))?;
        let x_star = chol.solve(&rhs);
        let (mu, l) = sym_eigen_range(&gram);
        let mut obj = Objective {
            kind: ObjectiveKind::LeastSquares { design, targets },
            dim,
            minimizer: from_dvec(x_star),
            f_star: 0.0,
            smoothness: l,
            strong_convexity: mu,
        };
        obj.f_star = obj.value(&obj.minimizer.clone())?;
        Ok(obj)
    }

    pub fn logistic(dim: usize, reg: f64) -> Result<Self> {
        if !(reg > 0.0 && reg.is_finite()) {
            return Err(Error::invalid("logistic regularisation must be positive"));
        }
        let (features, scores) = dataset(dim)?;
        let labels = scores.map(|s| if s >= 0.0 { 1.0 } else { -1.0 });
        let n = DATASET_POINTS as f64;
        let (_, top) = sym_eigen_range(&(features.transpose() * &features));
        let mut obj = Objective {
            kind: ObjectiveKind::Logistic {
                features,
                labels,
                reg,
            },
            dim,
            minimizer: Vector::zeros(dim),
            f_star: 0.0,
            smoothness: top / (4.0 * n) + reg,
            strong_convexity: reg,
        };
        obj.minimizer = obj.newton_minimize()?;
        obj.f_star = obj.value(&obj.minimizer.clone())?;
        Ok(obj)
    }

    /// Damped Newton iterations for the (strongly convex) logistic loss.
    fn newton_minimize(&self) -> Result<Vector> {
        let ObjectiveKind::Logistic {
            features,
            labels,
            reg,
        } = &self.kind
        else {
            unreachable!("newton_minimize is only used for the logistic objective");
        };
        let n = features.nrows() as f64;
        let mut x = DVector::zeros(self.dim);
        for _ in 0..100 {
            let g = to_dvec(&self.exact_gradient(&from_dvec(x.clone()))?);
            if g.norm() <= 1e-13 {
                break;
            }
            let margins = features * &x;
            let mut hess = DMatrix::identity(self.dim, self.dim) * *reg;
            for (r, (&mrg, &y)) in margins.iter().zip(labels.iter()).enumerate() {
                let s = sigmoid(y * mrg);
                let w = s * (1.0 - s) / n;
                let row = features.row(r).transpose();
                hess += &row * row.transpose() * w;
            }
            let step = hess
                .cholesky()
                .ok_or_else(|| Error::invalid("logistic Hessian is not positive definite"))?
                .solve(&g);
            x -= step;
        }
        Ok(from_dvec(x))
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.dim(),
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn minimizer(&self) -> &Vector {
        &self.minimizer
    }

    pub fn optimal_value(&self) -> f64 {
        self.f_star
    }

    /// Smoothness constant `L`: the largest Hessian eigenvalue bound.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// Strong-convexity constant `μ` (smallest Hessian eigenvalue bound).
    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        self.check_dim(x)?;
        let xv = to_dvec(x);
        Ok(match &self.kind {
            ObjectiveKind::Quadratic { a } => 0.5 * xv.dot(&(a * &xv)),
            ObjectiveKind::LeastSquares { design, targets } => {
                let r = design * &xv - targets;
                r.norm_squared() / (2.0 * design.nrows() as f64)
            }
            ObjectiveKind::Logistic {
                features,
                labels,
                reg,
            } => {
                let margins = features * &xv;
                let loss: f64 = margins
                    .iter()
                    .zip(labels.iter())
                    .map(|(&mrg, &y)| softplus(-y * mrg))
                    .sum();
                loss / features.nrows() as f64 + 0.5 * reg * xv.norm_squared()
            }
        })
    }

    /// Optimality gap `f(x) − f*`.
    pub fn gap(&self, x: &Vector) -> Result<f64> {
        Ok(self.value(x)? - self.f_star)
    }

    pub fn exact_gradient(&self, x: &Vector) -> Result<Vector> {
        self.check_dim(x)?;
        let xv = to_dvec(x);
        let g = match &self.kind {
            ObjectiveKind::Quadratic { a } => a * &xv,
            ObjectiveKind::LeastSquares { design, targets } => {
                design.transpose() * (design * &xv - targets) / design.nrows() as f64
            }
            ObjectiveKind::Logistic {
                features,
                labels,
                reg,
            } => {
                let margins = features * &xv;
                let weights = DVector::from_iterator(
                    labels.len(),
                    margins
                        .iter()
                        .zip(labels.iter())
                        .map(|(&mrg, &y)| -y * sigmoid(-y * mrg)),
                );
                features.transpose() * weights / features.nrows() as f64 + &xv * *reg
            }
        };
        Ok(from_dvec(g))
    }
}

/// Starting point, domain and boundedness facts about an objective that the
/// learning-rate formulas consume.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveMeta {
    /// `f(x₁) − f*`.
    pub delta1: f64,
    pub diameter: Option<f64>,
    /// Bound `M` on `|f|` over the domain, when known.
    pub bound_m: Option<f64>,
}

impl ObjectiveMeta {
    pub fn new(obj: &Objective, start: &Vector, diameter: Option<f64>, bound_m: Option<f64>) -> Result<Self> {
        Ok(ObjectiveMeta {
            delta1: obj.gap(start)?,
            diameter,
            bound_m,
        })
    }

    /// Recomputes `Δ₁` from `start` and compares with the stored value.
    pub fn matches_start(&self, obj: &Objective, start: &Vector) -> Result<bool> {
        Ok((obj.gap(start)? - self.delta1).abs() <= 1e-10)
    }
}

/// Noise added to the exact gradient by the stochastic oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Isotropic Gaussian with covariance `(σ²/d)·I`, total variance `σ²`.
    Gaussian { sigma: f64 },
    /// Uniform direction, radius uniform in `[0, v]`; norm never exceeds `v`.
    BoundedBall { v: f64 },
    /// Deterministic linear-MSE oracle `∇f(x) + (c/√N)·direction`.
    Drift { c: f64, direction: Vector },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Gaussian { sigma } if !(*sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::config("noise.sigma", "must be finite and non-negative"))
            }
            NoiseModel::BoundedBall { v } if !(*v >= 0.0 && v.is_finite()) => {
                Err(Error::config("noise.v", "must be finite and non-negative"))
            }
            NoiseModel::Drift { c, direction } => {
                if !(*c >= 0.0 && c.is_finite()) {
                    return Err(Error::config("noise.c", "must be finite and non-negative"));
                }
                if (direction.l2_norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::config("noise.direction", "must be a unit vector"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `E‖noise‖²` of a single draw.
    pub fn variance(&self) -> f64 {
        match self {
            NoiseModel::Gaussian { sigma } => sigma * sigma,
            NoiseModel::BoundedBall { v } => v * v / 3.0,
            NoiseModel::Drift { c, .. } => c * c,
        }
    }

    /// Almost-sure bound on the noise norm, if one exists.
    pub fn bound(&self) -> Option<f64> {
        match self {
            NoiseModel::BoundedBall { v } => Some(*v),
            NoiseModel::Drift { c, .. } => Some(*c),
            NoiseModel::Gaussian { sigma } if *sigma == 0.0 => Some(0.0),
            NoiseModel::Gaussian { .. } => None,
        }
    }

    /// One noise draw. Drift noise has no per-sample form.
    pub fn draw(&self, dim: usize, rng: &mut SimRng) -> Result<Vector> {
        match self {
            NoiseModel::Gaussian { sigma } => {
                let s = sigma / (dim as f64).sqrt();
                Ok(Vector::from_vec_unchecked(
                    (0..dim).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect(),
                ))
            }
            NoiseModel::BoundedBall { v } => {
                let dir = loop {
                    let d: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if n > 1e-300 {
                        break Vector::from_vec_unchecked(d).scale(1.0 / n);
                    }
                };
                // Shrink by a few ulps so rounding in the normalisation can
                // never push the norm past `v`.
                let radius = v * rng.gen::<f64>() * (1.0 - 4.0 * f64::EPSILON);
                Ok(dir.scale(radius))
            }
            NoiseModel::Drift { .. } => Err(Error::invalid(
                "drift noise is a batch-level oracle and has no per-sample draw",
            )),
        }
    }
}

/// `∇f(x)` plus one noise draw.
pub fn stochastic_gradient(obj: &Objective, noise: &NoiseModel, x: &Vector, rng: &mut SimRng) -> Result<Vector> {
    let g = obj.exact_gradient(x)?;
    let n = noise.draw(obj.dim(), rng)?;
    g.add(&n)
}

/// Average of `n` stochastic gradients at `x`.
pub fn minibatch_gradient(
    obj: &Objective,
    noise: &NoiseModel,
    x: &Vector,
    n: usize,
    rng: &mut SimRng,
) -> Result<Vector> {
    if n == 0 {
        return Err(Error::invalid("mini-batch size must be at least 1"));
    }
    let g = obj.exact_gradient(x)?;
    let mut acc = vec![0.0; obj.dim()];
    for _ in 0..n {
        let z = noise.draw(obj.dim(), rng)?;
        for (a, v) in acc.iter_mut().zip(z.as_slice()) {
            *a += v;
        }
    }
    let inv = 1.0 / n as f64;
    g.add(&Vector::from_vec_unchecked(acc.into_iter().map(|a| a * inv).collect()))
}

/// Linear-MSE gradient oracle with budget `n`: deterministic for drift noise,
/// a mini-batch average otherwise.
pub fn lmgo_query(obj: &Objective, noise: &NoiseModel, x: &Vector, n: usize, rng: &mut SimRng) -> Result<Vector> {
    if n == 0 {
        return Err(Error::invalid("oracle budget must be at least 1"));
    }
    match noise {
        NoiseModel::Drift { c, direction } => {
            let g = obj.exact_gradient(x)?;
            g.axpy(c / (n as f64).sqrt(), direction)
        }
        _ => minibatch_gradient(obj, noise, x, n, rng),
    }
}

/// Stochastic oracle shared by the simulated workers, with a per-worker count
/// of charged gradient evaluations.
#[derive(Debug)]
pub struct GradientOracle<'a> {
    objective: &'a Objective,
    noise: &'a NoiseModel,
    counts: Vec<u64>,
}

impl<'a> GradientOracle<'a> {
    pub fn new(objective: &'a Objective, noise: &'a NoiseModel, workers: usize) -> Self {
        GradientOracle {
            objective,
            noise,
            counts: vec![0; workers],
        }
    }

    pub fn objective(&self) -> &Objective {
        self.objective
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn minibatch(&mut self, worker: usize, x: &Vector, n: usize, rng: &mut SimRng) -> Result<Vector> {
        let g = lmgo_query(self.objective, self.noise, x, n, rng)?;
        self.counts[worker] += n as u64;
        Ok(g)
    }

    /// Mini-batch averages of the requested sizes.
    ///
    /// With `coupled`, one stream of `max(sizes)` samples is drawn and each
    /// level is a prefix average of it; otherwise each level draws its own
    /// batch. Either way every level is charged its full size, so the count
    /// is `Σ sizes`.
    pub fn level_batches(
        &mut self,
        worker: usize,
        x: &Vector,
        sizes: &[usize],
        coupled: bool,
        rng: &mut SimRng,
    ) -> Result<Vec<Vector>> {
        if sizes.contains(&0) {
            return Err(Error::invalid("mini-batch size must be at least 1"));
        }
        let out = if !coupled || matches!(self.noise, NoiseModel::Drift { .. }) {
            sizes
                .iter()
                .map(|&n| lmgo_query(self.objective, self.noise, x, n, rng))
                .collect::<Result<Vec<_>>>()?
        } else {
            let dim = self.objective.dim();
            let longest = sizes.iter().copied().max().unwrap_or(1);
            let grad = self.objective.exact_gradient(x)?;
            let mut prefix = vec![vec![0.0; dim]; longest + 1];
            for k in 1..=longest {
                let z = self.noise.draw(dim, rng)?;
                let (done, rest) = prefix.split_at_mut(k);
                for ((p, prev), v) in rest[0].iter_mut().zip(&done[k - 1]).zip(z.as_slice()) {
                    *p = prev + v;
                }
            }
            sizes
                .iter()
                .map(|&n| {
                    let inv = 1.0 / n as f64;
                    let avg = Vector::from_vec_unchecked(prefix[n].iter().map(|s| s * inv).collect());
                    grad.add(&avg)
                })
                .collect::<Result<Vec<_>>>()?
        };
        self.counts[worker] += sizes.iter().map(|&s| s as u64).sum::<u64>();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> Objective {
        ObjectiveSpec::two_by_two().build().unwrap()
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn quadratic_gradient_examples() {
        let q = quad();
        assert_eq!(q.exact_gradient(&v(&[1.0, 0.0])).unwrap(), v(&[2.0, 1.0]));
        assert_eq!(q.exact_gradient(&v(&[1.0, 1.0])).unwrap(), v(&[3.0, 3.0]));
        assert!(q.exact_gradient(q.minimizer()).unwrap().l2_norm() <= 1e-10);
        assert!(matches!(
            q.exact_gradient(&v(&[1.0])),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn quadratic_smoothness_matches_closed_form() {
        // Eigenvalues of [[a, b], [b, c]]: (a+c)/2 ± sqrt(((a−c)/2)² + b²).
        let (a, b, c) = (2.0_f64, 1.0_f64, 2.0_f64);
        let mid = 0.5 * (a + c);
        let rad = ((0.5 * (a - c)).powi(2) + b * b).sqrt();
        let q = quad();
        assert!((q.smoothness() - (mid + rad)).abs() < 1e-12);
        assert!((q.strong_convexity() - (mid - rad)).abs() < 1e-12);

        let q2 = Objective::quadratic(&[vec![5.0, -2.0], vec![-2.0, 1.5]]).unwrap();
        let mid = 0.5 * (5.0 + 1.5);
        let rad = ((0.5_f64 * (5.0 - 1.5)).powi(2) + 4.0).sqrt();
        assert!((q2.smoothness() - (mid + rad)).abs() < 1e-12);
    }

    #[test]
    fn quadratic_rejects_bad_matrices() {
        assert!(Objective::quadratic(&[vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
        assert!(Objective::quadratic(&[vec![1.0, 0.0], vec![0.0, -1.0]]).is_err());
        assert!(Objective::quadratic(&[]).is_err());
    }

    #[test]
    fn minimizers_are_stationary() {
        for obj in [
            quad(),
            Objective::least_squares(5).unwrap(),
            Objective::logistic(4, 0.1).unwrap(),
            Objective::logistic(10, 0.05).unwrap(),
        ] {
            let g = obj.exact_gradient(obj.minimizer()).unwrap();
            assert!(g.l2_norm() <= 1e-10, "gradient at minimizer: {:?}", g);
            assert!(obj.gap(obj.minimizer()).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn dataset_dimension_is_limited() {
        assert!(Objective::least_squares(0).is_err());
        assert!(Objective::least_squares(11).is_err());
        assert!(Objective::logistic(3, 0.0).is_err());
    }

    #[test]
    fn gradients_match_central_differences() {
        let objs = [
            quad(),
            Objective::least_squares(6).unwrap(),
            Objective::logistic(5, 0.1).unwrap(),
        ];
        let mut rng = stream(99);
        let h = 1e-5;
        for obj in &objs {
            for _ in 0..100 {
                let x = Vector::from_vec_unchecked((0..obj.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect());
                let g = obj.exact_gradient(&x).unwrap();
                let fd: Vec<f64> = (0..obj.dim())
                    .map(|i| {
                        let e = Vector::basis(obj.dim(), i);
                        let up = obj.value(&x.axpy(h, &e).unwrap()).unwrap();
                        let dn = obj.value(&x.axpy(-h, &e).unwrap()).unwrap();
                        (up - dn) / (2.0 * h)
                    })
                    .collect();
                let fd = Vector::from_vec_unchecked(fd);
                let err = g.distance(&fd);
                assert!(err <= 1e-5 * g.l2_norm().max(1.0), "fd error {err} for {:?}", g);
            }
        }
    }

    #[test]
    fn meta_recomputes_delta() {
        let q = quad();
        let x1 = v(&[1.0, 1.0]);
        let meta = ObjectiveMeta::new(&q, &x1, Some(4.0), None).unwrap();
        assert_eq!(meta.delta1, 3.0);
        assert!(meta.matches_start(&q, &x1).unwrap());
        assert!(!meta.matches_start(&q, &v(&[0.0, 1.0])).unwrap());
    }

    #[test]
    fn zero_noise_gives_exact_gradient() {
        let q = quad();
        let x = v(&[0.3, -1.2]);
        let exact = q.exact_gradient(&x).unwrap();
        let mut rng = stream(1);
        let noise = NoiseModel::Gaussian { sigma: 0.0 };
        assert_eq!(stochastic_gradient(&q, &noise, &x, &mut rng).unwrap(), exact);
        for n in [1, 7, 64] {
            assert_eq!(minibatch_gradient(&q, &noise, &x, n, &mut rng).unwrap(), exact);
        }
    }

    #[test]
    fn bounded_ball_never_exceeds_radius() {
        let q = quad();
        let x = v(&[1.0, -1.0]);
        let exact = q.exact_gradient(&x).unwrap();
        let noise = NoiseModel::BoundedBall { v: 0.7 };
        let mut rng = stream(3);
        for _ in 0..100_000 {
            let g = stochastic_gradient(&q, &noise, &x, &mut rng).unwrap();
            assert!(g.distance(&exact) <= 0.7 + 1e-15);
        }
        let mut rng = stream(4);
        for _ in 0..20_000 {
            assert!(noise.draw(5, &mut rng).unwrap().l2_norm() <= 0.7);
        }
    }

    #[test]
    fn gaussian_total_variance() {
        let q = quad();
        let x = v(&[0.5, 0.5]);
        let exact = q.exact_gradient(&x).unwrap();
        let noise = NoiseModel::Gaussian { sigma: 0.5 };
        let mut rng = stream(11);
        let draws = 100_000;
        let mse: f64 = (0..draws)
            .map(|_| stochastic_gradient(&q, &noise, &x, &mut rng).unwrap().sub(&exact).unwrap().norm_sq())
            .sum::<f64>()
            / draws as f64;
        assert!((0.24..=0.26).contains(&mse), "mse {mse}");
    }

    #[test]
    fn minibatch_mse_scales_inversely() {
        let q = quad();
        let x = v(&[0.0, 2.0]);
        let exact = q.exact_gradient(&x).unwrap();
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        let mut rng = stream(12);
        let mse = |n: usize, trials: usize, rng: &mut SimRng| {
            (0..trials)
                .map(|_| minibatch_gradient(&q, &noise, &x, n, rng).unwrap().sub(&exact).unwrap().norm_sq())
                .sum::<f64>()
                / trials as f64
        };
        let m100 = mse(100, 10_000, &mut rng);
        assert!((0.0095..=0.0105).contains(&m100), "mse {m100}");
        let m1 = mse(1, 40_000, &mut rng);
        let m16 = mse(16, 40_000, &mut rng);
        let ratio = m16 / m1;
        assert!((0.8 / 16.0..=1.2 / 16.0).contains(&ratio), "ratio {ratio}");
        assert!(minibatch_gradient(&q, &noise, &x, 0, &mut rng).is_err());
    }

    #[test]
    fn drift_oracle_examples() {
        let q = quad();
        let zero = Vector::zeros(2);
        let mut rng = stream(0);
        let drift = NoiseModel::Drift {
            c: 1.0,
            direction: Vector::basis(2, 0),
        };
        assert_eq!(lmgo_query(&q, &drift, &zero, 4, &mut rng).unwrap(), v(&[0.5, 0.0]));
        let x = v(&[0.2, 0.9]);
        let still = NoiseModel::Drift {
            c: 0.0,
            direction: Vector::basis(2, 1),
        };
        assert_eq!(lmgo_query(&q, &still, &x, 9, &mut rng).unwrap(), q.exact_gradient(&x).unwrap());
        // Deterministic given (x, N).
        let a = lmgo_query(&q, &drift, &x, 3, &mut stream(1)).unwrap();
        let b = lmgo_query(&q, &drift, &x, 3, &mut stream(2)).unwrap();
        assert_eq!(a, b);
        // Exact MSE c²/N.
        let err = a.sub(&q.exact_gradient(&x).unwrap()).unwrap().norm_sq();
        assert!((err - 1.0 / 3.0).abs() < 1e-15);
        assert!(drift.draw(2, &mut rng).is_err());
    }

    #[test]
    fn gaussian_batch_lmgo_mse_matches_c_squared_over_n() {
        let q = quad();
        let x = v(&[1.0, 2.0]);
        let exact = q.exact_gradient(&x).unwrap();
        let c = 0.8;
        let noise = NoiseModel::Gaussian { sigma: c };
        let mut rng = stream(5);
        for n in [1usize, 4, 16] {
            let trials = 10_000;
            let mse = (0..trials)
                .map(|_| lmgo_query(&q, &noise, &x, n, &mut rng).unwrap().sub(&exact).unwrap().norm_sq())
                .sum::<f64>()
                / trials as f64;
            let target = c * c / n as f64;
            assert!((mse / target - 1.0).abs() < 0.1, "N={n}: mse {mse} vs {target}");
        }
    }

    #[test]
    fn level_batches_charge_every_level() {
        let q = quad();
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        let x = v(&[0.0, 0.0]);
        let mut oracle = GradientOracle::new(&q, &noise, 2);
        let mut rng = stream(8);
        let coupled = oracle.level_batches(0, &x, &[1, 4, 8], true, &mut rng).unwrap();
        let indep = oracle.level_batches(1, &x, &[1, 4, 8], false, &mut rng).unwrap();
        assert_eq!(coupled.len(), 3);
        assert_eq!(indep.len(), 3);
        assert_eq!(oracle.counts(), &[13, 13]);
    }

    #[test]
    fn coupled_levels_share_a_prefix() {
        // With coupling, the size-2 average and the size-4 average agree on
        // their common first two samples: 4·g⁴ − 2·g² is the sum of samples 3, 4.
        let q = quad();
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        let x = v(&[0.0, 0.0]);
        let mut oracle = GradientOracle::new(&q, &noise, 1);
        let levels = oracle.level_batches(0, &x, &[1, 2, 4], true, &mut stream(21)).unwrap();
        let mut rng = stream(21);
        let samples: Vec<Vector> = (0..4).map(|_| noise.draw(2, &mut rng).unwrap()).collect();
        assert!(levels[0].distance(&samples[0]) < 1e-15);
        let two = crate::vecmath::mean(&samples[..2]).unwrap();
        assert!(levels[1].distance(&two) < 1e-15);
        let four = crate::vecmath::mean(&samples).unwrap();
        assert!(levels[2].distance(&four) < 1e-15);
    }
}
