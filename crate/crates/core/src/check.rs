//! Numerical checks of the oracle contract: central finite differences,
//! Monte-Carlo moments of mini-batch gradients, and log-log slope fits.

use crate::error::{Error, Result};
use crate::problems::GradientOracle;
use crate::rng::SampleStream;

/// Default relative step for [`central_difference_gradient`].
pub const FD_STEP: f64 = 1e-5;

/// Gradient of `problem.loss` by central differences, step `h * max(1, |theta_i|)`.
pub fn central_difference_gradient<P: GradientOracle + ?Sized>(problem: &P, theta: &[f64], h: f64) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let step = h * theta[i].abs().max(1.0);
            x[i] = theta[i] + step;
            let up = problem.loss(&x);
            x[i] = theta[i] - step;
            let down = problem.loss(&x);
            x[i] = theta[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `||g - g_fd|| / max(||g||, ||g_fd||)`; zero when both vanish.
pub fn gradient_check<P: GradientOracle + ?Sized>(problem: &P, theta: &[f64]) -> f64 {
    let g = problem.full_gradient_vec(theta);
    let fd = central_difference_gradient(problem, theta, FD_STEP);
    let diff = norm(g.iter().zip(&fd).map(|(a, b)| a - b));
    let scale = norm(g.iter().copied()).max(norm(fd.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn norm(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|v| v * v).sum::<f64>().sqrt()
}

/// Monte-Carlo summary of `draws` mini-batch gradients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchMoments {
    pub full: Vec<f64>,
    pub mean: Vec<f64>,
    /// Per-coordinate standard error of `mean`.
    pub std_err: Vec<f64>,
    /// Mean of `||g_B - grad f||^2`.
    pub mse: f64,
}

impl MinibatchMoments {
    /// Largest `|mean_i - full_i| / std_err_i` over coordinates with nonzero spread.
    pub fn max_z_score(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.full)
            .zip(&self.std_err)
            .filter(|(_, &se)| se > 0.0)
            .map(|((m, f), se)| (m - f).abs() / se)
            .fold(0.0, f64::max)
    }
}

pub fn minibatch_moments<P: GradientOracle + ?Sized>(
    problem: &P,
    theta: &[f64],
    b: usize,
    draws: usize,
    seed: u64,
) -> Result<MinibatchMoments> {
    if draws < 2 {
        return Err(Error::InvalidParams("need at least 2 draws".into()));
    }
    let d = problem.dim();
    let full = problem.full_gradient_vec(theta);
    let stream = SampleStream::new(seed);
    let mut g = vec![0.0; d];
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let mut mse = 0.0;
    for k in 0..draws {
        let mut rng = stream.iteration(k as u64);
        problem.minibatch_gradient(theta, b, &mut rng, &mut g);
        for i in 0..d {
            // centred on the exact gradient for numerical stability
            let dev = g[i] - full[i];
            sum[i] += dev;
            sum_sq[i] += dev * dev;
            mse += dev * dev;
        }
    }
    let k = draws as f64;
    let mean: Vec<f64> = sum.iter().zip(&full).map(|(s, f)| f + s / k).collect();
    let std_err = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, sq)| {
            let var = (sq - s * s / k) / (k - 1.0);
            (var.max(0.0) / k).sqrt()
        })
        .collect();
    Ok(MinibatchMoments {
        full,
        mean,
        std_err,
        mse: mse / k,
    })
}

/// Ordinary least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
