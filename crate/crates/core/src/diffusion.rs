//! DDPM forward/reverse machinery over flat real tensors, independent of the
//! denoiser that drives it.
//!
//! Timesteps are 1-based (`1..=T`), so `beta(t)` is the variance added by the
//! step that produces `x_t`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxel::{Frame, VoxelGrid};

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if let Some(b) = beta.iter().find(|&&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::Config(format!("beta {b} outside (0, 1)")));
        }
        if beta.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("betas must be nondecreasing".into()));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let alpha_bar = alpha
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(NoiseSchedule {
            beta,
            alpha,
            alpha_bar,
        })
    }

    /// `beta` linear in `t` from `beta_start` at `t = 1` to `beta_end` at `t = T`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < beta_start ≤ beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let beta = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(beta)
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    fn idx(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::Timestep {
                t,
                steps: self.steps(),
            });
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule is valid")
    }
}

/// Convenience wrapper for [`NoiseSchedule::linear`].
pub fn linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    NoiseSchedule::linear(steps, beta_start, beta_end)
}

/// Predicts the noise component of `x_t`.
pub trait Denoiser: Send + Sync {
    fn predict_noise(&self, x_t: &[f64], t: usize) -> Vec<f64>;
}

/// Always predicts zero noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn predict_noise(&self, x_t: &[f64], _t: usize) -> Vec<f64> {
        vec![0.0; x_t.len()]
    }
}

/// Posterior-mean noise predictor for data drawn elementwise from
/// `N(mean_i, variance)`. With `variance = 0` it pins samples to `mean`.
#[derive(Debug, Clone)]
pub struct GaussianPriorDenoiser {
    mean: Vec<f64>,
    variance: f64,
    schedule: NoiseSchedule,
}

impl GaussianPriorDenoiser {
    pub fn new(mean: Vec<f64>, variance: f64, schedule: NoiseSchedule) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::Config(format!("variance must be ≥ 0, got {variance}")));
        }
        Ok(GaussianPriorDenoiser {
            mean,
            variance,
            schedule,
        })
    }
}

impl Denoiser for GaussianPriorDenoiser {
    fn predict_noise(&self, x_t: &[f64], t: usize) -> Vec<f64> {
        let ab = self.schedule.alpha_bar(t);
        let scale = (1.0 - ab).sqrt() / (ab * self.variance + 1.0 - ab);
        x_t.iter()
            .zip(self.mean.iter().cycle())
            .map(|(x, m)| scale * (x - ab.sqrt() * m))
            .collect()
    }
}

fn same_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

/// `sqrt(ᾱ_t) x0 + sqrt(1 - ᾱ_t) eps`.
pub fn forward_sample(x0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    same_len(x0.len(), eps.len())?;
    let ab = sched.alpha_bar[sched.idx(t)?];
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// Squared residual `‖eps - ε_φ(x_t, t)‖²` of the noise-prediction objective.
pub fn ddpm_loss(
    x0: &[f64],
    t: usize,
    eps: &[f64],
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
) -> Result<f64> {
    let x_t = forward_sample(x0, t, eps, sched)?;
    let pred = denoiser.predict_noise(&x_t, t);
    same_len(eps.len(), pred.len())?;
    Ok(eps.iter().zip(&pred).map(|(e, p)| (e - p) * (e - p)).sum())
}

/// One ancestral step `x_t → x_{t-1}` with variance `β_t` (mean only at `t = 1`).
pub fn reverse_step<R: Rng + ?Sized>(
    x_t: &[f64],
    t: usize,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let i = sched.idx(t)?;
    let eps = denoiser.predict_noise(x_t, t);
    same_len(x_t.len(), eps.len())?;
    let (beta, alpha, ab) = (sched.beta[i], sched.alpha[i], sched.alpha_bar[i]);
    let coef = beta / (1.0 - ab).sqrt();
    let inv_sqrt_alpha = 1.0 / alpha.sqrt();
    let sigma = beta.sqrt();
    Ok(x_t
        .iter()
        .zip(&eps)
        .map(|(x, e)| {
            let mean = inv_sqrt_alpha * (x - coef * e);
            if t > 1 {
                let z: f64 = rng.sample(StandardNormal);
                mean + sigma * z
            } else {
                mean
            }
        })
        .collect())
}

/// Runs the full reverse chain from `x_T ~ N(0, I)` and returns `x_0`.
pub fn sample_tensor<R: Rng + ?Sized>(
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    len: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut x: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    for t in (1..=sched.steps()).rev() {
        x = reverse_step(&x, t, denoiser, sched, rng)?;
    }
    Ok(x)
}

/// Occupancy as `{-1, +1}` in x-fastest order.
pub fn encode_grid(grid: &VoxelGrid) -> Vec<f64> {
    grid.occupancy()
        .iter()
        .map(|&b| if b { 1.0 } else { -1.0 })
        .collect()
}

/// Samples an `r³` tensor and marks voxels whose value exceeds `threshold`.
pub fn sample_grid<R: Rng + ?Sized>(
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    resolution: usize,
    rng: &mut R,
    threshold: f64,
) -> Result<VoxelGrid> {
    let x = sample_tensor(denoiser, sched, resolution.pow(3), rng)?;
    VoxelGrid::from_occupancy(
        resolution,
        x.iter().map(|&v| v > threshold).collect(),
        Frame::unit(resolution),
    )
}
