//! Synthetic convex learning tasks with subgradient oracles.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::domain::Domain;
use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskKind {
    QuadraticConsensus,
    RidgeRegression,
    LogisticRegression,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::QuadraticConsensus => "quadratic_consensus",
            TaskKind::RidgeRegression => "ridge_regression",
            TaskKind::LogisticRegression => "logistic_regression",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quadratic_consensus" | "quadratic" => Ok(TaskKind::QuadraticConsensus),
            "ridge_regression" | "ridge" => Ok(TaskKind::RidgeRegression),
            "logistic_regression" | "logistic" => Ok(TaskKind::LogisticRegression),
            other => Err(Error::Config(format!("unknown task kind {other:?}"))),
        }
    }
}

/// Generation parameters for [`make_task`].
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub devices: usize,
    pub dim: usize,
    /// Label-sorted sharding instead of an i.i.d. split.
    pub heterogeneous: bool,
    pub samples_per_device: usize,
    pub batch: usize,
    pub ridge: f64,
    /// Standard deviation of additive noise on quadratic gradients.
    pub gradient_noise: f64,
    /// Spread of the quadratic targets around their mean.
    pub target_spread: f64,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, devices: usize, dim: usize) -> Self {
        TaskSpec {
            kind,
            devices,
            dim,
            heterogeneous: false,
            samples_per_device: 50,
            batch: 10,
            ridge: 0.1,
            gradient_noise: 0.0,
            target_spread: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
enum Local {
    Quadratic { target: DVector<f64> },
    Samples { a: DMatrix<f64>, b: DVector<f64> },
}

/// Objectives `f_k`, the feasible set and the constants used by the step rule.
#[derive(Clone, Debug)]
pub struct Task {
    pub kind: TaskKind,
    pub dim: usize,
    pub domain: Domain,
    /// Lipschitz constant of every `f_k` over the domain.
    pub lipschitz: f64,
    /// Bound on the root second moment of stochastic subgradients.
    pub omega: f64,
    /// Proximal radius: `|x*|^2 / 2 <= R^2`.
    pub radius: f64,
    pub x_star: DVector<f64>,
    pub f_star: f64,
    ridge: f64,
    batch: usize,
    gradient_noise: f64,
    locals: Vec<Local>,
}

const CALIBRATION_POINTS: usize = 2000;

fn gaussian_vec<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Split rows among devices: shuffled, or sorted by key and dealt two shards each.
fn partition<R: Rng>(keys: &[f64], devices: usize, sorted: bool, rng: &mut R) -> Vec<Vec<usize>> {
    let n = keys.len();
    let mut order: Vec<usize> = (0..n).collect();
    let per = n / devices;
    if !sorted {
        order.shuffle(rng);
        return (0..devices).map(|k| order[k * per..(k + 1) * per].to_vec()).collect();
    }
    order.sort_by(|&i, &j| keys[i].total_cmp(&keys[j]).then(i.cmp(&j)));
    let shard = per / 2;
    let mut shards: Vec<usize> = (0..2 * devices).collect();
    shards.shuffle(rng);
    (0..devices)
        .map(|k| {
            let mut rows = Vec::with_capacity(2 * shard);
            for &s in &shards[2 * k..2 * k + 2] {
                rows.extend_from_slice(&order[s * shard..(s + 1) * shard]);
            }
            rows
        })
        .collect()
}

fn select_rows(a: &DMatrix<f64>, b: &DVector<f64>, rows: &[usize]) -> Local {
    let sa = DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)]);
    let sb = DVector::from_fn(rows.len(), |i, _| b[rows[i]]);
    Local::Samples { a: sa, b: sb }
}

/// Build a task. Constants are calibrated from oracle draws at points
/// sampled uniformly in the domain.
pub fn make_task(spec: &TaskSpec, rng: &mut Stream) -> Result<Task> {
    if spec.devices < 2 || spec.dim == 0 {
        return Err(Error::Config(format!("need K >= 2 and D >= 1, got K={} D={}", spec.devices, spec.dim)));
    }
    let (k, d) = (spec.devices, spec.dim);
    let locals = match spec.kind {
        TaskKind::QuadraticConsensus => {
            let center = gaussian_vec(d, rng);
            (0..k)
                .map(|_| {
                    let off = if spec.heterogeneous { gaussian_vec(d, rng) * spec.target_spread } else { DVector::zeros(d) };
                    Local::Quadratic { target: &center + off }
                })
                .collect()
        }
        TaskKind::RidgeRegression | TaskKind::LogisticRegression => {
            if spec.samples_per_device < 2 || spec.batch == 0 {
                return Err(Error::Config("need at least 2 samples per device and batch >= 1".into()));
            }
            let n = spec.samples_per_device * k;
            let truth = gaussian_vec(d, rng);
            let a = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt());
            let logits = &a * &truth;
            let b = match spec.kind {
                TaskKind::RidgeRegression => logits.map(|t| t + 0.1 * rng.sample::<f64, _>(StandardNormal)),
                _ => {
                    let u = Uniform::new(0.0, 1.0).expect("valid range");
                    logits.map(|t| if u.sample(rng) < sigmoid(2.0 * t) { 1.0 } else { 0.0 })
                }
            };
            // ties among binary labels are broken by index, so sorting groups classes
            let shards = partition(b.as_slice(), k, spec.heterogeneous, rng);
            shards.iter().map(|rows| select_rows(&a, &b, rows)).collect()
        }
    };
    let mut task = Task {
        kind: spec.kind,
        dim: d,
        domain: Domain::Unconstrained,
        lipschitz: 0.0,
        omega: 0.0,
        radius: 0.0,
        x_star: DVector::zeros(d),
        f_star: 0.0,
        ridge: if spec.kind == TaskKind::QuadraticConsensus { 0.0 } else { spec.ridge },
        batch: spec.batch,
        gradient_noise: spec.gradient_noise,
        locals,
    };
    task.x_star = task.solve()?;
    task.f_star = task.value(&task.x_star);
    let r = (2.0 * task.x_star.norm()).max(1e-3);
    task.domain = Domain::Ball { radius: r };
    task.radius = (task.x_star.norm() / std::f64::consts::SQRT_2).max(1e-3);
    task.calibrate(rng);
    Ok(task)
}

impl Task {
    pub fn devices(&self) -> usize {
        self.locals.len()
    }

    /// Local objective `f_k(x)`.
    pub fn local_value(&self, k: usize, x: &DVector<f64>) -> f64 {
        match &self.locals[k] {
            Local::Quadratic { target } => 0.5 * (x - target).norm_squared(),
            Local::Samples { a, b } => {
                let m = a.nrows() as f64;
                let pred = a * x;
                let loss = match self.kind {
                    TaskKind::RidgeRegression => 0.5 * (pred - b).norm_squared() / m,
                    _ => pred.iter().zip(b.iter()).map(|(t, y)| log1p_exp(*t) - y * t).sum::<f64>() / m,
                };
                loss + 0.5 * self.ridge * x.norm_squared()
            }
        }
    }

    /// Global objective `(1/K) sum_k f_k(x)`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (0..self.devices()).map(|k| self.local_value(k, x)).sum::<f64>() / self.devices() as f64
    }

    /// Full-batch gradient of `f_k`.
    pub fn gradient(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        match &self.locals[k] {
            Local::Quadratic { target } => x - target,
            Local::Samples { a, b } => {
                let m = a.nrows() as f64;
                let resid = self.residual(a * x, b);
                a.tr_mul(&resid) / m + x * self.ridge
            }
        }
    }

    fn residual(&self, pred: DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            TaskKind::RidgeRegression => pred - b,
            _ => DVector::from_fn(pred.len(), |i, _| sigmoid(pred[i]) - b[i]),
        }
    }

    /// Stochastic subgradient: a minibatch drawn with replacement, or the
    /// exact quadratic gradient plus Gaussian noise.
    pub fn stochastic_gradient<R: Rng>(&self, k: usize, x: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        match &self.locals[k] {
            Local::Quadratic { target } => {
                let mut g = x - target;
                if self.gradient_noise > 0.0 {
                    g += gaussian_vec(self.dim, rng) * self.gradient_noise;
                }
                g
            }
            Local::Samples { a, b } => {
                let m = a.nrows();
                let mut g = x * self.ridge;
                let w = 1.0 / self.batch as f64;
                for _ in 0..self.batch {
                    let i = rng.random_range(0..m);
                    let row = a.row(i);
                    let t = row.dot(&x.transpose());
                    let r = match self.kind {
                        TaskKind::RidgeRegression => t - b[i],
                        _ => sigmoid(t) - b[i],
                    };
                    g.axpy(w * r, &row.transpose(), 1.0);
                }
                g
            }
        }
    }

    fn solve(&self) -> Result<DVector<f64>> {
        let d = self.dim;
        let k = self.devices() as f64;
        match self.kind {
            TaskKind::QuadraticConsensus => {
                let sum = self.locals.iter().fold(DVector::zeros(d), |acc, l| match l {
                    Local::Quadratic { target } => acc + target,
                    _ => acc,
                });
                Ok(sum / k)
            }
            TaskKind::RidgeRegression => {
                let mut lhs = DMatrix::identity(d, d) * (k * self.ridge);
                let mut rhs = DVector::zeros(d);
                for l in &self.locals {
                    if let Local::Samples { a, b } = l {
                        let m = a.nrows() as f64;
                        lhs += a.tr_mul(a) / m;
                        rhs += a.tr_mul(b) / m;
                    }
                }
                lhs.cholesky()
                    .map(|c| c.solve(&rhs))
                    .ok_or_else(|| Error::Data("normal equations are not positive definite".into()))
            }
            TaskKind::LogisticRegression => {
                let mut x = DVector::zeros(d);
                for _ in 0..100 {
                    let mut grad = DVector::zeros(d);
                    let mut hess = DMatrix::zeros(d, d);
                    for (j, l) in self.locals.iter().enumerate() {
                        grad += self.gradient(j, &x);
                        if let Local::Samples { a, .. } = l {
                            let m = a.nrows() as f64;
                            let p = a * &x;
                            let w = DVector::from_fn(p.len(), |i, _| {
                                let s = sigmoid(p[i]);
                                s * (1.0 - s) / m
                            });
                            let aw = DMatrix::from_fn(a.nrows(), d, |i, c| a[(i, c)] * w[i]);
                            hess += a.tr_mul(&aw);
                        }
                    }
                    grad /= k;
                    hess /= k;
                    hess += DMatrix::identity(d, d) * self.ridge;
                    let step = hess
                        .cholesky()
                        .map(|c| c.solve(&grad))
                        .ok_or_else(|| Error::Data("logistic Hessian is not positive definite".into()))?;
                    x -= &step;
                    if step.norm() <= 1e-13 * (1.0 + x.norm()) {
                        break;
                    }
                }
                Ok(x)
            }
        }
    }

    fn calibrate(&mut self, rng: &mut Stream) {
        let r = match self.domain {
            Domain::Ball { radius } => radius,
            Domain::Unconstrained => 1.0,
        };
        let u = Uniform::new(0.0, 1.0).expect("valid range");
        let mut norms = Vec::with_capacity(CALIBRATION_POINTS);
        let mut exact = 0.0f64;
        for i in 0..CALIBRATION_POINTS {
            let dir = gaussian_vec(self.dim, rng);
            let dir = if dir.norm() > 0.0 { dir.normalize() } else { dir };
            let x = dir * (r * Distribution::<f64>::sample(&u, rng).powf(1.0 / self.dim as f64));
            let k = i % self.devices();
            norms.push(self.stochastic_gradient(k, &x, rng).norm());
            exact = exact.max(self.gradient(k, &x).norm());
        }
        norms.sort_by(f64::total_cmp);
        let idx = ((norms.len() as f64 * 0.999).ceil() as usize).min(norms.len()) - 1;
        self.omega = 1.5 * norms[idx];
        self.lipschitz = match &self.locals[0] {
            Local::Quadratic { .. } => self
                .locals
                .iter()
                .map(|l| match l {
                    Local::Quadratic { target } => r + target.norm(),
                    _ => 0.0,
                })
                .fold(0.0, f64::max),
            Local::Samples { .. } => 1.5 * exact,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain as RngDomain};

    #[test]
    fn quadratic_common_target() {
        let mut rng = substream(1, RngDomain::Task, 0, 0);
        let task = make_task(&TaskSpec::new(TaskKind::QuadraticConsensus, 4, 3), &mut rng).unwrap();
        let c = match &task.locals[0] {
            Local::Quadratic { target } => target.clone(),
            _ => unreachable!(),
        };
        assert!((&task.x_star - &c).norm() < 1e-15);
        assert!((task.lipschitz - 3.0 * c.norm()).abs() < 1e-12);
        assert!(task.omega >= task.lipschitz);
        assert!(task.f_star.abs() < 1e-20);
    }

    #[test]
    fn ridge_optimum_has_zero_gradient() {
        let mut rng = substream(2, RngDomain::Task, 0, 0);
        let mut spec = TaskSpec::new(TaskKind::RidgeRegression, 5, 6);
        spec.heterogeneous = true;
        let task = make_task(&spec, &mut rng).unwrap();
        let g = (0..5).fold(DVector::zeros(6), |acc, k| acc + task.gradient(k, &task.x_star));
        assert!(g.norm() < 1e-10);
        let drift = (0..5).map(|k| task.gradient(k, &task.x_star).norm()).fold(0.0, f64::max);
        assert!(drift > 1e-3);
    }

    #[test]
    fn logistic_newton_converges() {
        let mut rng = substream(3, RngDomain::Task, 0, 0);
        let task = make_task(&TaskSpec::new(TaskKind::LogisticRegression, 4, 5), &mut rng).unwrap();
        let g = (0..4).fold(DVector::zeros(5), |acc, k| acc + task.gradient(k, &task.x_star));
        assert!(g.norm() < 1e-9);
        let nudged = &task.x_star + DVector::from_element(5, 1e-3);
        assert!(task.value(&nudged) > task.f_star);
    }

    #[test]
    fn minibatch_gradient_is_unbiased() {
        let mut rng = substream(4, RngDomain::Task, 0, 0);
        let task = make_task(&TaskSpec::new(TaskKind::RidgeRegression, 3, 4), &mut rng).unwrap();
        let x = DVector::from_element(4, 0.3);
        let n = 20000;
        let mean = (0..n).fold(DVector::zeros(4), |acc, _| acc + task.stochastic_gradient(1, &x, &mut rng)) / n as f64;
        assert!((mean - task.gradient(1, &x)).norm() < 0.02);
    }
}
