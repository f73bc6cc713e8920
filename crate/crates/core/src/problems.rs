//! Objectives with known smoothness and noise constants.
//!
//! Each problem exposes the full gradient, per-sample stochastic gradients and
//! the mini-batch average of `b` i.i.d. draws, plus the constants the theory
//! needs: `L`, the per-sample `L_i` for finite sums, `sigma^2` and `f*`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::SampleStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma2 {
    /// Exact bound, known by construction.
    Certified(f64),
    /// Monte-Carlo estimate over a probe set; see [`estimate_sigma2`].
    Estimated(f64),
    Unknown,
}

impl Sigma2 {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Sigma2::Certified(v) | Sigma2::Estimated(v) => Some(v),
            Sigma2::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConstants {
    /// Number of component functions; `None` for noise-injected objectives.
    pub n: Option<usize>,
    /// Mean smoothness constant.
    pub l: f64,
    pub l_i: Option<Vec<f64>>,
    pub sigma2: Sigma2,
    pub f_star: f64,
    /// Gradient-norm tolerance reached when `f_star` was computed numerically.
    pub f_star_tolerance: Option<f64>,
}

/// Loss, full gradient and stochastic gradients of a smooth objective.
///
/// `minibatch_gradient` must be an unbiased estimate of `full_gradient`
/// whose mean squared error is at most `sigma^2 / b`.
pub trait GradientOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn loss(&self, theta: &[f64]) -> f64;

    fn full_gradient(&self, theta: &[f64], out: &mut [f64]);

    /// One stochastic gradient `grad f_xi(theta)`.
    fn sample_gradient(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]);

    /// Average of `b` i.i.d. stochastic gradients.
    fn minibatch_gradient(&self, theta: &[f64], b: usize, rng: &mut dyn RngCore, out: &mut [f64]) {
        assert!(b >= 1, "batch size must be >= 1");
        let mut scratch = vec![0.0; out.len()];
        out.fill(0.0);
        for _ in 0..b {
            self.sample_gradient(theta, rng, &mut scratch);
            for (o, s) in out.iter_mut().zip(&scratch) {
                *o += s;
            }
        }
        let inv = 1.0 / b as f64;
        out.iter_mut().for_each(|o| *o *= inv);
    }

    /// Average gradient over specific component indices. Only finite sums
    /// support this.
    fn indexed_gradient(&self, _theta: &[f64], _indices: &[usize], _out: &mut [f64]) -> Result<()> {
        Err(Error::InvalidProblem(
            "objective has no indexed components".into(),
        ))
    }

    fn constants(&self) -> &ProblemConstants;

    fn name(&self) -> &'static str;

    fn full_gradient_vec(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.full_gradient(theta, &mut g);
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `f(theta) = 1/2 theta^T A theta` with diagonal `A`, and stochastic
/// gradients `A theta + z`, `z ~ N(0, sigma^2/d I)` so `E||z||^2 = sigma^2`.
#[derive(Debug, Clone)]
pub struct NoisyQuadratic {
    spectrum: Vec<f64>,
    noise_sd: f64,
    constants: ProblemConstants,
}

impl NoisyQuadratic {
    pub fn new(spectrum: Vec<f64>, sigma2: f64) -> Result<Self> {
        if spectrum.is_empty() {
            return Err(Error::InvalidProblem("empty curvature spectrum".into()));
        }
        if let Some(bad) = spectrum.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidProblem(format!(
                "eigenvalues must be positive, got {bad}"
            )));
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidProblem(format!("sigma2 must be >= 0, got {sigma2}")));
        }
        let l = spectrum.iter().copied().fold(0.0, f64::max);
        let noise_sd = (sigma2 / spectrum.len() as f64).sqrt();
        Ok(NoisyQuadratic {
            spectrum,
            noise_sd,
            constants: ProblemConstants {
                n: None,
                l,
                l_i: None,
                sigma2: Sigma2::Certified(sigma2),
                f_star: 0.0,
                f_star_tolerance: None,
            },
        })
    }

    /// Identity curvature scaled to `l` in `dim` dimensions.
    pub fn isotropic(dim: usize, l: f64, sigma2: f64) -> Result<Self> {
        Self::new(vec![l; dim], sigma2)
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    fn noisy_gradient(&self, theta: &[f64], sd: f64, rng: &mut dyn RngCore, out: &mut [f64]) {
        for ((o, &lam), &th) in out.iter_mut().zip(&self.spectrum).zip(theta) {
            let z: f64 = StandardNormal.sample(rng);
            *o = lam * th + sd * z;
        }
    }
}

impl GradientOracle for NoisyQuadratic {
    fn dim(&self) -> usize {
        self.spectrum.len()
    }

    fn loss(&self, theta: &[f64]) -> f64 {
        0.5 * self
            .spectrum
            .iter()
            .zip(theta)
            .map(|(l, t)| l * t * t)
            .sum::<f64>()
    }

    fn full_gradient(&self, theta: &[f64], out: &mut [f64]) {
        for ((o, &lam), &th) in out.iter_mut().zip(&self.spectrum).zip(theta) {
            *o = lam * th;
        }
    }

    fn sample_gradient(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        self.noisy_gradient(theta, self.noise_sd, rng, out);
    }

    /// The mean of `b` i.i.d. `N(0, s^2)` draws is `N(0, s^2/b)`, so one draw
    /// per coordinate suffices.
    fn minibatch_gradient(&self, theta: &[f64], b: usize, rng: &mut dyn RngCore, out: &mut [f64]) {
        assert!(b >= 1, "batch size must be >= 1");
        self.noisy_gradient(theta, self.noise_sd / (b as f64).sqrt(), rng, out);
    }

    fn constants(&self) -> &ProblemConstants {
        &self.constants
    }

    fn name(&self) -> &'static str {
        "noisy_quadratic"
    }
}

/// Shared storage for finite-sum problems: row-major features and labels.
#[derive(Debug, Clone)]
struct Dataset {
    n: usize,
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    fn row_norms_sq(&self) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), self.row(i))).collect()
    }

    fn check(n: usize, dim: usize) -> Result<()> {
        if n == 0 || dim == 0 {
            return Err(Error::InvalidProblem(format!(
                "need n >= 1 and dim >= 1, got n={n}, dim={dim}"
            )));
        }
        Ok(())
    }

    fn gaussian(n: usize, dim: usize, rng: &mut dyn RngCore) -> (Vec<f64>, Vec<f64>) {
        let theta_true: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let x: Vec<f64> = (0..n * dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        (theta_true, x)
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.dim, &self.x)
    }
}

/// Per-sample loss of a linear model, as a function of `z = x_i . theta` and the label.
pub trait ComponentLoss: std::fmt::Debug + Clone + Send + Sync {
    const NAME: &'static str;

    fn value(z: f64, y: f64) -> f64;

    /// `d value / d z`, so `grad f_i(theta) = derivative(z, y) x_i`.
    fn derivative(z: f64, y: f64) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct SquaredLoss;

impl ComponentLoss for SquaredLoss {
    const NAME: &'static str = "least_squares";

    fn value(z: f64, y: f64) -> f64 {
        0.5 * (z - y) * (z - y)
    }

    fn derivative(z: f64, y: f64) -> f64 {
        z - y
    }
}

/// `log(1 + exp(-y z))` with `y in {-1, +1}`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticLoss;

impl ComponentLoss for LogisticLoss {
    const NAME: &'static str = "logistic";

    fn value(z: f64, y: f64) -> f64 {
        softplus(-y * z)
    }

    fn derivative(z: f64, y: f64) -> f64 {
        -y * sigmoid(-y * z)
    }
}

fn softplus(z: f64) -> f64 {
    // log(1 + e^z) without overflow
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `f(theta) = (1/n) sum_i loss(x_i . theta, y_i)` over a seeded synthetic dataset.
#[derive(Debug, Clone)]
pub struct FiniteSum<K> {
    data: Dataset,
    theta_star: Vec<f64>,
    constants: ProblemConstants,
    _loss: std::marker::PhantomData<K>,
}

/// Gaussian features, planted `theta_true`, labels with additive Gaussian noise.
pub type LeastSquares = FiniteSum<SquaredLoss>;

/// Gaussian features, labels drawn from the logistic model of a planted `theta_true`.
pub type Logistic = FiniteSum<LogisticLoss>;

impl<K: ComponentLoss> FiniteSum<K> {
    fn from_data(data: Dataset, smoothness_scale: f64) -> Self {
        let l_i: Vec<f64> = data
            .row_norms_sq()
            .into_iter()
            .map(|v| v * smoothness_scale)
            .collect();
        let l = l_i.iter().sum::<f64>() / data.n as f64;
        let dim = data.dim;
        FiniteSum {
            constants: ProblemConstants {
                n: Some(data.n),
                l,
                l_i: Some(l_i),
                sigma2: Sigma2::Unknown,
                f_star: 0.0,
                f_star_tolerance: None,
            },
            data,
            theta_star: vec![0.0; dim],
            _loss: std::marker::PhantomData,
        }
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn num_samples(&self) -> usize {
        self.data.n
    }

    pub fn component_gradient(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        let row = self.data.row(i);
        let c = K::derivative(dot(row, theta), self.data.y[i]);
        for (o, x) in out.iter_mut().zip(row) {
            *o = c * x;
        }
    }

    /// Exact `(1/n) sum_i ||grad f_i(theta) - grad f(theta)||^2`.
    pub fn exact_sample_variance(&self, theta: &[f64]) -> f64 {
        let full = self.full_gradient_vec(theta);
        let mut g = vec![0.0; self.data.dim];
        let total: f64 = (0..self.data.n)
            .map(|i| {
                self.component_gradient(i, theta, &mut g);
                g.iter().zip(&full).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })
            .sum();
        total / self.data.n as f64
    }

    fn accumulate(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        let row = self.data.row(i);
        axpy(K::derivative(dot(row, theta), self.data.y[i]), row, out);
    }
}

impl LeastSquares {
    pub const LABEL_NOISE: f64 = 0.5;

    /// `f*` comes from a minimum-norm SVD least-squares solve, so `n < dim` works too.
    pub fn new(n: usize, dim: usize, seed: u64) -> Result<Self> {
        Dataset::check(n, dim)?;
        let mut rng = SampleStream::new(seed).data();
        let (theta_true, x) = Dataset::gaussian(n, dim, &mut rng);
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let e: f64 = StandardNormal.sample(&mut rng);
                dot(&x[i * dim..(i + 1) * dim], &theta_true) + Self::LABEL_NOISE * e
            })
            .collect();
        let mut out = Self::from_data(Dataset { n, dim, x, y }, 1.0);

        let svd = out.data.matrix().svd(true, true);
        out.theta_star = svd
            .solve(&DVector::from_column_slice(&out.data.y), 1e-12)
            .map_err(|e| Error::InvalidProblem(format!("least-squares solve: {e}")))?
            .iter()
            .copied()
            .collect();
        out.constants.f_star = out.loss(&out.theta_star);
        Ok(out)
    }
}

impl Logistic {
    pub const F_STAR_TOLERANCE: f64 = 1e-10;
    const F_STAR_MAX_ITERS: usize = 500_000;

    /// `f*` is found numerically; the gradient norm reached is kept in
    /// `constants().f_star_tolerance`.
    pub fn new(n: usize, dim: usize, seed: u64) -> Result<Self> {
        Dataset::check(n, dim)?;
        let mut rng = SampleStream::new(seed).data();
        let (theta_true, x) = Dataset::gaussian(n, dim, &mut rng);
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let p = sigmoid(dot(&x[i * dim..(i + 1) * dim], &theta_true));
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        let mut out = Self::from_data(Dataset { n, dim, x, y }, 0.25);
        let (theta_star, tol) = out.descend_to_stationarity();
        out.constants.f_star = out.loss(&theta_star);
        out.constants.f_star_tolerance = Some(tol);
        out.theta_star = theta_star;
        Ok(out)
    }

    /// Full-gradient descent with step `1/L_H`, `L_H = lambda_max(X^T X / n) / 4`,
    /// until `||grad f|| <= F_STAR_TOLERANCE`.
    fn descend_to_stationarity(&self) -> (Vec<f64>, f64) {
        let x = self.data.matrix();
        let gram = x.transpose() * &x / self.data.n as f64;
        let lambda_max = gram
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(0.0, f64::max);
        let step = 4.0 / lambda_max.max(f64::MIN_POSITIVE);
        let mut theta = vec![0.0; self.data.dim];
        let mut g = vec![0.0; self.data.dim];
        let mut norm = f64::INFINITY;
        for _ in 0..Self::F_STAR_MAX_ITERS {
            self.full_gradient(&theta, &mut g);
            norm = dot(&g, &g).sqrt();
            if norm <= Self::F_STAR_TOLERANCE {
                break;
            }
            axpy(-step, &g, &mut theta);
        }
        (theta, norm)
    }
}

impl<K: ComponentLoss> GradientOracle for FiniteSum<K> {
    fn dim(&self) -> usize {
        self.data.dim
    }

    fn loss(&self, theta: &[f64]) -> f64 {
        let total: f64 = (0..self.data.n)
            .map(|i| K::value(dot(self.data.row(i), theta), self.data.y[i]))
            .sum();
        total / self.data.n as f64
    }

    fn full_gradient(&self, theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.data.n {
            self.accumulate(i, theta, out);
        }
        let inv = 1.0 / self.data.n as f64;
        out.iter_mut().for_each(|o| *o *= inv);
    }

    fn sample_gradient(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        let i = rng.random_range(0..self.data.n);
        self.component_gradient(i, theta, out);
    }

    /// Uniform sampling with replacement.
    fn minibatch_gradient(&self, theta: &[f64], b: usize, rng: &mut dyn RngCore, out: &mut [f64]) {
        assert!(b >= 1, "batch size must be >= 1");
        out.fill(0.0);
        for _ in 0..b {
            let i = rng.random_range(0..self.data.n);
            self.accumulate(i, theta, out);
        }
        let inv = 1.0 / b as f64;
        out.iter_mut().for_each(|o| *o *= inv);
    }

    fn indexed_gradient(&self, theta: &[f64], indices: &[usize], out: &mut [f64]) -> Result<()> {
        if indices.is_empty() {
            return Err(Error::InvalidProblem("empty index set".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.data.n) {
            return Err(Error::InvalidProblem(format!(
                "sample index {bad} out of range for n = {}",
                self.data.n
            )));
        }
        out.fill(0.0);
        for &i in indices {
            self.accumulate(i, theta, out);
        }
        let inv = 1.0 / indices.len() as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        Ok(())
    }

    fn constants(&self) -> &ProblemConstants {
        &self.constants
    }

    fn name(&self) -> &'static str {
        K::NAME
    }
}

/// Config-selectable problem.
#[derive(Debug, Clone)]
pub enum Problem {
    NoisyQuadratic(NoisyQuadratic),
    LeastSquares(LeastSquares),
    Logistic(Logistic),
}

impl Problem {
    fn inner(&self) -> &dyn GradientOracle {
        match self {
            Problem::NoisyQuadratic(p) => p,
            Problem::LeastSquares(p) => p,
            Problem::Logistic(p) => p,
        }
    }

    fn constants_mut(&mut self) -> &mut ProblemConstants {
        match self {
            Problem::NoisyQuadratic(p) => &mut p.constants,
            Problem::LeastSquares(p) => &mut p.constants,
            Problem::Logistic(p) => &mut p.constants,
        }
    }

    /// Fills in `sigma^2` with a probe-set estimate when no certified value exists.
    pub fn ensure_sigma2(&mut self, probes: &[Vec<f64>], draws: usize, seed: u64) -> Result<f64> {
        if let Some(v) = self.constants().sigma2.value() {
            return Ok(v);
        }
        let v = estimate_sigma2(self, probes, draws, seed)?;
        self.constants_mut().sigma2 = Sigma2::Estimated(v);
        Ok(v)
    }
}

impl GradientOracle for Problem {
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn loss(&self, theta: &[f64]) -> f64 {
        self.inner().loss(theta)
    }
    fn full_gradient(&self, theta: &[f64], out: &mut [f64]) {
        self.inner().full_gradient(theta, out)
    }
    fn sample_gradient(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        self.inner().sample_gradient(theta, rng, out)
    }
    fn minibatch_gradient(&self, theta: &[f64], b: usize, rng: &mut dyn RngCore, out: &mut [f64]) {
        self.inner().minibatch_gradient(theta, b, rng, out)
    }
    fn indexed_gradient(&self, theta: &[f64], indices: &[usize], out: &mut [f64]) -> Result<()> {
        self.inner().indexed_gradient(theta, indices, out)
    }
    fn constants(&self) -> &ProblemConstants {
        self.inner().constants()
    }
    fn name(&self) -> &'static str {
        self.inner().name()
    }
}

/// Largest Monte-Carlo estimate of `E||grad f_xi(theta) - grad f(theta)||^2`
/// over the probe points, `draws` single-sample gradients per point.
pub fn estimate_sigma2<P: GradientOracle + ?Sized>(
    problem: &P,
    probes: &[Vec<f64>],
    draws: usize,
    seed: u64,
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::InvalidParams("empty probe set".into()));
    }
    if draws < 1000 {
        return Err(Error::InvalidParams(format!(
            "need at least 1000 draws per probe, got {draws}"
        )));
    }
    let d = problem.dim();
    let stream = SampleStream::new(seed);
    let mut g = vec![0.0; d];
    let mut best: f64 = 0.0;
    for (k, theta) in probes.iter().enumerate() {
        if theta.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: theta.len(),
            });
        }
        let full = problem.full_gradient_vec(theta);
        let mut rng = stream.iteration(k as u64);
        let mut acc = 0.0;
        for _ in 0..draws {
            problem.sample_gradient(theta, &mut rng, &mut g);
            acc += g.iter().zip(&full).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        best = best.max(acc / draws as f64);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_identity_curvature() {
        let p = NoisyQuadratic::new(vec![1.0, 1.0], 0.0).unwrap();
        let theta = [1.0, 0.0];
        assert_eq!(p.full_gradient_vec(&theta), [1.0, 0.0]);
        assert_eq!(p.loss(&theta), 0.5);
        let mut rng = SampleStream::new(1).iteration(0);
        let mut g = [0.0; 2];
        p.minibatch_gradient(&theta, 4, &mut rng, &mut g);
        assert_eq!(g, [1.0, 0.0]);
        assert_eq!(p.constants().l, 1.0);
        assert_eq!(p.constants().f_star, 0.0);
    }

    #[test]
    fn quadratic_rejects_bad_spectrum() {
        assert!(NoisyQuadratic::new(vec![1.0, 0.0], 1.0).is_err());
        assert!(NoisyQuadratic::new(vec![-2.0], 1.0).is_err());
        assert!(NoisyQuadratic::new(vec![], 1.0).is_err());
        assert!(NoisyQuadratic::new(vec![1.0], -1.0).is_err());
    }

    #[test]
    fn quadratic_l_is_max_eigenvalue() {
        let p = NoisyQuadratic::new(vec![0.1, 3.0, 0.5], 1.0).unwrap();
        assert_eq!(p.constants().l, 3.0);
        assert_eq!(p.constants().sigma2, Sigma2::Certified(1.0));
    }

    #[test]
    fn quadratic_minibatch_variance() {
        let p = NoisyQuadratic::isotropic(5, 1.0, 2.0).unwrap();
        let theta = [0.3, -1.0, 2.0, 0.0, 1.0];
        let full = p.full_gradient_vec(&theta);
        let stream = SampleStream::new(11);
        let draws = 100_000;
        let mut g = [0.0; 5];
        let mut acc = 0.0;
        for k in 0..draws {
            p.minibatch_gradient(&theta, 4, &mut stream.iteration(k), &mut g);
            acc += g.iter().zip(&full).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        let var = acc / draws as f64;
        let expect = 2.0 / 4.0;
        assert!(var >= 0.97 * expect && var <= 1.03 * expect, "variance {var}");
    }

    #[test]
    fn sigma2_estimate_on_quadratic() {
        let p = NoisyQuadratic::isotropic(10, 1.0, 1.0).unwrap();
        let probes = vec![vec![0.0; 10], vec![1.0; 10]];
        let est = estimate_sigma2(&p, &probes, 100_000, 5).unwrap();
        assert!((0.97..=1.03).contains(&est), "estimate {est}");

        let quiet = NoisyQuadratic::isotropic(10, 1.0, 0.0).unwrap();
        assert_eq!(estimate_sigma2(&quiet, &probes, 1000, 5).unwrap(), 0.0);

        assert!(estimate_sigma2(&p, &[], 1000, 5).is_err());
        assert!(estimate_sigma2(&p, &probes, 999, 5).is_err());
        assert!(estimate_sigma2(&p, &[vec![0.0; 3]], 1000, 5).is_err());
    }

    #[test]
    fn least_squares_singleton_has_no_noise() {
        let p = LeastSquares::new(1, 3, 2).unwrap();
        let theta = [0.5, -0.2, 1.0];
        let full = p.full_gradient_vec(&theta);
        let mut g = [0.0; 3];
        for k in 0..5 {
            p.minibatch_gradient(&theta, 1, &mut SampleStream::new(0).iteration(k), &mut g);
            assert_eq!(g.to_vec(), full);
        }
        assert_eq!(p.exact_sample_variance(&theta), 0.0);
    }

    #[test]
    fn least_squares_constants() {
        let p = LeastSquares::new(50, 4, 9).unwrap();
        let c = p.constants();
        let direct: f64 = (0..50).map(|i| dot(p.data.row(i), p.data.row(i))).sum::<f64>() / 50.0;
        assert!((c.l - direct).abs() <= 1e-12 * direct);
        assert_eq!(c.n, Some(50));
        // theta* is stationary
        let g = p.full_gradient_vec(p.theta_star());
        assert!(dot(&g, &g).sqrt() < 1e-10);
        assert!(c.f_star > 0.0);
    }

    #[test]
    fn underdetermined_least_squares_interpolates() {
        let p = LeastSquares::new(3, 8, 1).unwrap();
        assert!(p.constants().f_star < 1e-20);
    }

    #[test]
    fn logistic_gradient_at_origin() {
        let p = Logistic::new(40, 3, 4).unwrap();
        let g = p.full_gradient_vec(&[0.0; 3]);
        let mut expect = [0.0; 3];
        for i in 0..40 {
            axpy(-p.data.y[i] / 2.0 / 40.0, p.data.row(i), &mut expect);
        }
        for (a, b) in g.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn logistic_f_star_reached() {
        let p = Logistic::new(200, 5, 8).unwrap();
        let c = p.constants();
        assert!(c.f_star_tolerance.unwrap() <= Logistic::F_STAR_TOLERANCE);
        assert!(c.f_star > 0.0 && c.f_star < std::f64::consts::LN_2);
        assert_eq!(c.l_i.as_ref().unwrap().len(), 200);
    }

    #[test]
    fn indexed_gradients() {
        let p = LeastSquares::new(10, 2, 3).unwrap();
        let theta = [0.1, 0.2];
        let mut g = [0.0; 2];
        p.indexed_gradient(&theta, &(0..10).collect::<Vec<_>>(), &mut g).unwrap();
        let full = p.full_gradient_vec(&theta);
        for (a, b) in g.iter().zip(&full) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(p.indexed_gradient(&theta, &[10], &mut g).is_err());
        assert!(p.indexed_gradient(&theta, &[], &mut g).is_err());
        let q = NoisyQuadratic::isotropic(2, 1.0, 1.0).unwrap();
        assert!(q.indexed_gradient(&theta, &[0], &mut g).is_err());
    }

    #[test]
    fn problem_wrapper_estimates_sigma2_once() {
        let mut p = Problem::LeastSquares(LeastSquares::new(30, 3, 1).unwrap());
        assert_eq!(p.constants().sigma2, Sigma2::Unknown);
        let v = p.ensure_sigma2(&[vec![0.0; 3]], 2000, 1).unwrap();
        assert_eq!(p.constants().sigma2, Sigma2::Estimated(v));
        assert_eq!(p.ensure_sigma2(&[], 0, 0).unwrap(), v);
    }

    #[test]
    fn construction_is_seeded() {
        let a = Logistic::new(20, 3, 77).unwrap();
        let b = Logistic::new(20, 3, 77).unwrap();
        assert_eq!(a.data.x, b.data.x);
        assert_eq!(a.data.y, b.data.y);
        let c = Logistic::new(20, 3, 78).unwrap();
        assert_ne!(a.data.x, c.data.x);
    }
}
