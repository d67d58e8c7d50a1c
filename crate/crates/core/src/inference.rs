//! Moving-block bootstrap covariance of the WCCV vector, the plug-in
//! gradient of the coefficient map, sandwich covariance of the coefficients
//! and normal-theory confidence intervals.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SvoError};
use crate::linalg::{min_eigenvalue, symmetrize_upper, SymmetricSolver};
use crate::svo::{aggregate, optimal_coefficients, CoefficientVector, WeightVector};
use crate::wavelet::{flat_index, unflatten_wccv, wccv_vector, WaveletPyramid};

pub const DEFAULT_REPLICATES: usize = 500;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub block_size: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl BootstrapConfig {
    /// Default block size for the pyramid and `DEFAULT_REPLICATES`.
    pub fn for_pyramid(pyramid: &WaveletPyramid, seed: u64) -> Self {
        let m_last = *pyramid.coefficient_counts().last().unwrap_or(&1);
        Self {
            block_size: default_block_size(pyramid.n_samples(), m_last),
            replicates: DEFAULT_REPLICATES,
            seed,
        }
    }

    pub fn validate(&self, m_last: usize) -> Result<()> {
        if self.block_size == 0 {
            return Err(SvoError::InvalidBootstrap("block size must be positive".into()));
        }
        if self.block_size > m_last {
            return Err(SvoError::InvalidBootstrap(format!(
                "block size {} exceeds the {} coefficients of the deepest level",
                self.block_size, m_last
            )));
        }
        if self.replicates < 2 {
            return Err(SvoError::InvalidBootstrap(format!(
                "at least 2 replicates are required, got {}",
                self.replicates
            )));
        }
        Ok(())
    }
}

/// Smallest integer `n` with `n³ ≥ T`, clamped to `[2, m_last]`.
pub fn default_block_size(n_samples: usize, m_last: usize) -> usize {
    let mut n = (n_samples as f64).cbrt().ceil() as usize;
    while n > 1 && (n - 1).pow(3) >= n_samples {
        n -= 1;
    }
    while n.pow(3) < n_samples {
        n += 1;
    }
    n.max(2).min(m_last.max(1))
}

/// Trimmed coefficients: `rows[i]` is a `J × M_J` matrix holding the first
/// `M_J` coefficients of sensor `i` at every level; `removed[j-1] = M_j − M_J`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trimmed {
    pub rows: Vec<DMatrix<f64>>,
    pub removed: Vec<usize>,
}

pub fn trim(pyramid: &WaveletPyramid) -> Trimmed {
    let counts = pyramid.coefficient_counts();
    let m_last = *counts.last().expect("pyramid has at least one level");
    let j_max = pyramid.n_levels();
    let rows = (0..pyramid.n_sensors())
        .map(|i| DMatrix::from_fn(j_max, m_last, |j, t| pyramid.level(j + 1)[i][t]))
        .collect();
    let removed = counts.iter().map(|m| m - m_last).collect();
    Trimmed { rows, removed }
}

/// Random indices of one bootstrap replicate (all 0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResamplePlan {
    /// Block starts in `[0, M_J − l]`.
    pub block_starts: Vec<usize>,
    /// Completion start per level in `[0, M_J]`; `None` where nothing was removed.
    pub completion_starts: Vec<Option<usize>>,
}

impl ResamplePlan {
    /// Draws block starts first, then one completion start for every level
    /// that lost coefficients to trimming.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, m_last: usize, removed: &[usize], block_size: usize) -> Self {
        let n_blocks = m_last.div_ceil(block_size);
        let max_start = m_last - block_size;
        let block_starts = (0..n_blocks).map(|_| rng.random_range(0..=max_start)).collect();
        let completion_starts = removed
            .iter()
            .map(|&d| (d > 0).then(|| rng.random_range(0..=m_last)))
            .collect();
        Self {
            block_starts,
            completion_starts,
        }
    }

    /// `(start, len)` segments of the resampled trimmed stream.
    fn segments(&self, m_last: usize, block_size: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n_blocks = self.block_starts.len();
        self.block_starts.iter().enumerate().map(move |(b, &u)| {
            let len = if b + 1 == n_blocks {
                m_last - block_size * (n_blocks - 1)
            } else {
                block_size
            };
            (u, len)
        })
    }
}

fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// The plan of every replicate, each drawn from its own stream of `seed`.
pub fn resample_plans(pyramid: &WaveletPyramid, config: &BootstrapConfig) -> Result<Vec<ResamplePlan>> {
    let counts = pyramid.coefficient_counts();
    let m_last = *counts.last().ok_or_else(|| SvoError::InvalidArgument("empty pyramid".into()))?;
    config.validate(m_last)?;
    let removed: Vec<usize> = counts.iter().map(|m| m - m_last).collect();
    Ok((0..config.replicates)
        .map(|h| ResamplePlan::draw(&mut replicate_rng(config.seed, h), m_last, &removed, config.block_size))
        .collect())
}

/// Materializes one resample: the trimmed streams are rebuilt from blocks
/// shared across sensors and levels, then each level is extended back to
/// `M_j` coefficients with a contiguous run from its untrimmed coefficients.
pub fn mbb_resample(pyramid: &WaveletPyramid, plan: &ResamplePlan, block_size: usize) -> Result<WaveletPyramid> {
    let counts = pyramid.coefficient_counts();
    let m_last = *counts.last().ok_or_else(|| SvoError::InvalidArgument("empty pyramid".into()))?;
    if block_size == 0 || block_size > m_last {
        return Err(SvoError::InvalidBootstrap(format!(
            "block size {block_size} outside [1, {m_last}]"
        )));
    }
    if plan.completion_starts.len() != pyramid.n_levels() {
        return Err(SvoError::DimensionMismatch("plan does not match the pyramid depth".into()));
    }
    let levels = pyramid
        .levels()
        .iter()
        .zip(&counts)
        .zip(&plan.completion_starts)
        .map(|((level, &m_j), completion)| {
            level
                .iter()
                .map(|w| {
                    let mut out = Vec::with_capacity(m_j);
                    for (u, len) in plan.segments(m_last, block_size) {
                        out.extend_from_slice(&w[u..u + len]);
                    }
                    if let Some(start) = completion {
                        let d = m_j - m_last;
                        out.extend_from_slice(&w[*start..start + d]);
                    }
                    out
                })
                .collect()
        })
        .collect();
    WaveletPyramid::from_levels(levels, pyramid.n_samples())
}

/// Compensated running sums of `a[t]·b[t]`, with `prefix[0] = 0`.
fn product_prefix(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + 1);
    out.push(0.0);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let v = x * y;
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        out.push(sum + comp);
    }
    out
}

/// `V̂* = (T/H) Σ_h (γ̂*_h − γ̂)(γ̂*_h − γ̂)ᵀ` over `Jp²` slots.
///
/// Each resampled WCCV is a sum of block sums of `W_i·W_k`, so it is read off
/// prefix sums instead of materializing the resample.
pub fn estimate_v(pyramid: &WaveletPyramid, config: &BootstrapConfig) -> Result<DMatrix<f64>> {
    let plans = resample_plans(pyramid, config)?;
    let deviations = replicate_deviations(pyramid, &plans, config.block_size);
    Ok(second_moment(&deviations, pyramid.n_samples()))
}

/// The `H × Jp²` matrix of `γ̂*_h − γ̂`.
pub fn replicate_deviations(pyramid: &WaveletPyramid, plans: &[ResamplePlan], block_size: usize) -> DMatrix<f64> {
    let p = pyramid.n_sensors();
    let counts = pyramid.coefficient_counts();
    let m_last = *counts.last().expect("non-empty pyramid");
    let n_slots = pyramid.n_levels() * p * p;
    let tasks: Vec<(usize, usize, usize)> = (1..=pyramid.n_levels())
        .flat_map(|j| (0..p).flat_map(move |i| (i..p).map(move |k| (j, i, k))))
        .collect();

    let columns: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(j, i, k)| {
            let level = pyramid.level(j);
            let m_j = counts[j - 1];
            let d = m_j - m_last;
            let prefix = product_prefix(&level[i], &level[k]);
            let original = prefix[m_j] / m_j as f64;
            plans
                .iter()
                .map(|plan| {
                    let mut s: f64 = plan
                        .segments(m_last, block_size)
                        .map(|(u, len)| prefix[u + len] - prefix[u])
                        .sum();
                    if let Some(start) = plan.completion_starts[j - 1] {
                        s += prefix[start + d] - prefix[start];
                    }
                    s / m_j as f64 - original
                })
                .collect()
        })
        .collect();

    let mut dev = DMatrix::zeros(plans.len(), n_slots);
    for (&(j, i, k), col) in tasks.iter().zip(&columns) {
        for (h, v) in col.iter().enumerate() {
            dev[(h, flat_index(j, i, k, p))] = *v;
            dev[(h, flat_index(j, k, i, p))] = *v;
        }
    }
    dev
}

fn second_moment(deviations: &DMatrix<f64>, n_samples: usize) -> DMatrix<f64> {
    let h = deviations.nrows() as f64;
    let mut v = deviations.tr_mul(deviations) * (n_samples as f64 / h);
    symmetrize_upper(&mut v);
    v
}

/// The same estimate through materialized resamples; used to cross-check the
/// fast path.
pub fn estimate_v_direct(pyramid: &WaveletPyramid, config: &BootstrapConfig) -> Result<DMatrix<f64>> {
    let plans = resample_plans(pyramid, config)?;
    let gamma = DVector::from_vec(wccv_vector(pyramid));
    let mut dev = DMatrix::zeros(plans.len(), gamma.len());
    for (h, plan) in plans.iter().enumerate() {
        let star = DVector::from_vec(wccv_vector(&mbb_resample(pyramid, plan, config.block_size)?));
        dev.set_row(h, &(star - &gamma).transpose());
    }
    Ok(second_moment(&dev, pyramid.n_samples()))
}

/// Jacobian of `γ ↦ A(γ)⁻¹1 / (1ᵀA(γ)⁻¹1)` at `gamma_hat`, `p × Jp²`.
pub fn gradient_g(gamma_hat: &[f64], p: usize, weights: &WeightVector) -> Result<DMatrix<f64>> {
    let per_level = unflatten_wccv(gamma_hat, p)?;
    let a0 = aggregate(&per_level, weights)?;
    let solver = SymmetricSolver::new(&a0)?;
    let ones = DVector::from_element(p, 1.0);
    let u = solver.solve(&ones)?;
    let s = u.sum();
    if !(s > 0.0) {
        return Err(SvoError::NotPositiveDefinite);
    }
    let inv = solver.solve_matrix(&DMatrix::identity(p, p))?;
    // projection I/s − u1ᵀ/s²
    let mut proj = DMatrix::identity(p, p) / s;
    for r in 0..p {
        for c in 0..p {
            proj[(r, c)] -= u[r] / (s * s);
        }
    }
    // P·A⁻¹e_i, reused for every slot
    let proj_inv = &proj * &inv;
    let mut g = DMatrix::zeros(p, gamma_hat.len());
    for (j, &w) in weights.as_slice().iter().enumerate() {
        for i in 0..p {
            for k in 0..p {
                let col = flat_index(j + 1, i, k, p);
                let scale = -w * u[k];
                for r in 0..p {
                    g[(r, col)] = scale * proj_inv[(r, i)];
                }
            }
        }
    }
    Ok(g)
}

/// `Ĝ V̂* Ĝᵀ`, symmetrized.
pub fn sandwich(g: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if g.ncols() != v.nrows() || !v.is_square() {
        return Err(SvoError::DimensionMismatch(format!(
            "gradient is {}x{}, covariance {}x{}",
            g.nrows(),
            g.ncols(),
            v.nrows(),
            v.ncols()
        )));
    }
    let mut sigma = g * v * g.transpose();
    symmetrize_upper(&mut sigma);
    Ok(sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub point: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceIntervals {
    pub alpha: f64,
    pub intervals: Vec<Interval>,
}

pub fn normal_quantile(prob: f64) -> f64 {
    Normal::standard().inverse_cdf(prob)
}

/// `ĉ_i ± z_{1−α/2} sqrt(Σ̂_ii / T)`.
pub fn intervals(c: &CoefficientVector, sigma: &DMatrix<f64>, alpha: f64, n_samples: usize) -> Result<ConfidenceIntervals> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SvoError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if sigma.shape() != (c.len(), c.len()) {
        return Err(SvoError::DimensionMismatch(format!(
            "{}x{} covariance for {} coefficients",
            sigma.nrows(),
            sigma.ncols(),
            c.len()
        )));
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    let intervals = c
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &point)| {
            let var = sigma[(i, i)];
            if var < -1e-12 {
                return Err(SvoError::Inconsistent(format!(
                    "negative variance {var:e} for coefficient {}",
                    i + 1
                )));
            }
            let half = z * (var.max(0.0) / n_samples as f64).sqrt();
            Ok(Interval {
                lower: point - half,
                point,
                upper: point + half,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConfidenceIntervals { alpha, intervals })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimates {
    pub v_star: DMatrix<f64>,
    pub g_hat: DMatrix<f64>,
    pub sigma_star: DMatrix<f64>,
}

/// Estimated coefficients with their bootstrap covariance and intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFit {
    pub coefficients: CoefficientVector,
    pub weights: WeightVector,
    pub covariance: CovarianceEstimates,
    pub intervals: ConfidenceIntervals,
    pub config: BootstrapConfig,
}

pub fn infer(pyramid: &WaveletPyramid, weights: &WeightVector, config: &BootstrapConfig, alpha: f64) -> Result<CoefficientFit> {
    let p = pyramid.n_sensors();
    if weights.len() != pyramid.n_levels() {
        return Err(SvoError::DimensionMismatch(format!(
            "{} weights for {} levels",
            weights.len(),
            pyramid.n_levels()
        )));
    }
    let gamma = wccv_vector(pyramid);
    let per_level = unflatten_wccv(&gamma, p)?;
    let coefficients = optimal_coefficients(&aggregate(&per_level, weights)?)?;
    let v_star = estimate_v(pyramid, config)?;
    let lambda_min = min_eigenvalue(&v_star);
    let scale = v_star.diagonal().amax().max(f64::MIN_POSITIVE);
    if lambda_min < -1e-9 * scale {
        return Err(SvoError::Inconsistent(format!(
            "bootstrap covariance has eigenvalue {lambda_min:e}"
        )));
    }
    let g_hat = gradient_g(&gamma, p, weights)?;
    let sigma_star = sandwich(&g_hat, &v_star)?;
    let intervals = intervals(&coefficients, &sigma_star, alpha, pyramid.n_samples())?;
    Ok(CoefficientFit {
        coefficients,
        weights: weights.clone(),
        covariance: CovarianceEstimates {
            v_star,
            g_hat,
            sigma_star,
        },
        intervals,
        config: *config,
    })
}
