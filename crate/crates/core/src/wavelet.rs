//! Haar maximal-overlap wavelet transform and lag-zero wavelet
//! (cross-)covariance estimation for multichannel signals.
//!
//! Levels are numbered from 1: level `j` uses a filter of length `2^j` and
//! corresponds to the dyadic scale `τ_j = 2^j` samples. Sensor indices are
//! 0-based.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Result, SvoError};
use crate::svo::{aggregate, WeightVector};

/// `p` equally long sensor signals sampled at a common rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalArray {
    data: Vec<Vec<f64>>,
    sample_rate_hz: f64,
    labels: Vec<String>,
}

impl SignalArray {
    pub fn new(data: Vec<Vec<f64>>, sample_rate_hz: f64, labels: Vec<String>) -> Result<Self> {
        if data.is_empty() {
            return Err(SvoError::InvalidSignal("at least one sensor is required".into()));
        }
        let len = data[0].len();
        if len < 2 {
            return Err(SvoError::InvalidSignal(format!(
                "signals need at least 2 samples, got {len}"
            )));
        }
        if let Some(i) = data.iter().position(|row| row.len() != len) {
            return Err(SvoError::InvalidSignal(format!(
                "sensor {i} has {} samples, expected {len}",
                data[i].len()
            )));
        }
        for (i, row) in data.iter().enumerate() {
            if let Some(t) = row.iter().position(|v| !v.is_finite()) {
                return Err(SvoError::InvalidSignal(format!(
                    "non-finite sample at sensor {i}, index {t}"
                )));
            }
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(SvoError::InvalidSignal(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if labels.len() != data.len() {
            return Err(SvoError::InvalidSignal(format!(
                "{} labels for {} sensors",
                labels.len(),
                data.len()
            )));
        }
        Ok(Self {
            data,
            sample_rate_hz,
            labels,
        })
    }

    /// Rows with default labels `s1…sp` and a unit sample rate.
    pub fn from_rows(data: Vec<Vec<f64>>) -> Result<Self> {
        let labels = default_labels(data.len());
        Self::new(data, 1.0, labels)
    }

    pub fn n_sensors(&self) -> usize {
        self.data.len()
    }

    pub fn len(&self) -> usize {
        self.data[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.data
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn with_sample_rate(mut self, hz: f64) -> Result<Self> {
        if !(hz.is_finite() && hz > 0.0) {
            return Err(SvoError::InvalidSignal(format!("sample rate must be positive, got {hz}")));
        }
        self.sample_rate_hz = hz;
        Ok(self)
    }

    /// Splits every signal in two halves and treats the second half as if it
    /// had been recorded jointly with the first, doubling the sensor count.
    /// An odd trailing sample is dropped.
    pub fn split_halves(&self) -> Result<Self> {
        let half = self.len() / 2;
        let mut data = Vec::with_capacity(2 * self.n_sensors());
        let mut labels = Vec::with_capacity(2 * self.n_sensors());
        for (row, label) in self.data.iter().zip(&self.labels) {
            data.push(row[..half].to_vec());
            labels.push(format!("{label}_a"));
        }
        for (row, label) in self.data.iter().zip(&self.labels) {
            data.push(row[half..2 * half].to_vec());
            labels.push(format!("{label}_b"));
        }
        Self::new(data, self.sample_rate_hz, labels)
    }
}

pub fn default_labels(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("s{i}")).collect()
}

/// Haar filter taps at `level`: `2^(level-1)` taps of `+2^-level` followed by
/// as many of `-2^-level`. Tap `l` multiplies the sample `l` steps in the past.
///
/// # Panics
/// If `level` is 0.
pub fn haar_filter(level: usize) -> Vec<f64> {
    assert!(level >= 1, "wavelet levels start at 1");
    let len = 1usize << level;
    let tap = (-(level as f64)).exp2();
    (0..len).map(|l| if l < len / 2 { tap } else { -tap }).collect()
}

/// Largest level with at least one full-support coefficient: `⌊log₂ T⌋`.
pub fn max_level(n_samples: usize) -> usize {
    if n_samples < 2 {
        0
    } else {
        (usize::BITS - 1 - n_samples.leading_zeros()) as usize
    }
}

/// Default number of levels `⌊log₂ T⌋ − 1` (at least 1).
pub fn default_levels(n_samples: usize) -> usize {
    max_level(n_samples).saturating_sub(1).max(1)
}

/// Number of full-support coefficients at `level`: `T − 2^level + 1`.
pub fn coefficient_count(n_samples: usize, level: usize) -> usize {
    n_samples + 1 - (1usize << level)
}

/// Per-level wavelet coefficients of every sensor. Level `j` holds `p` rows
/// of `M_j = T − 2^j + 1` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    levels: Vec<Vec<Vec<f64>>>,
    n_samples: usize,
}

impl WaveletPyramid {
    /// Builds a pyramid from raw coefficients (`levels[j-1][i]`), checking
    /// the `M_j = T − 2^j + 1` length law.
    pub fn from_levels(levels: Vec<Vec<Vec<f64>>>, n_samples: usize) -> Result<Self> {
        if levels.is_empty() {
            return Err(SvoError::InvalidArgument("pyramid needs at least one level".into()));
        }
        let p = levels[0].len();
        if p == 0 {
            return Err(SvoError::InvalidArgument("pyramid needs at least one sensor".into()));
        }
        if max_level(n_samples) < levels.len() {
            return Err(SvoError::LevelTooLarge {
                requested: levels.len(),
                max: max_level(n_samples),
                samples: n_samples,
            });
        }
        for (idx, lvl) in levels.iter().enumerate() {
            let m = coefficient_count(n_samples, idx + 1);
            if lvl.len() != p || lvl.iter().any(|row| row.len() != m) {
                return Err(SvoError::DimensionMismatch(format!(
                    "level {} must hold {p} rows of {m} coefficients",
                    idx + 1
                )));
            }
        }
        Ok(Self { levels, n_samples })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.levels[0].len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Coefficients at `level` (1-based), one row per sensor.
    pub fn level(&self, level: usize) -> &[Vec<f64>] {
        &self.levels[level - 1]
    }

    pub fn levels(&self) -> &[Vec<Vec<f64>>] {
        &self.levels
    }

    pub fn filter_lengths(&self) -> Vec<usize> {
        (1..=self.n_levels()).map(|j| 1usize << j).collect()
    }

    pub fn coefficient_counts(&self) -> Vec<usize> {
        (1..=self.n_levels())
            .map(|j| coefficient_count(self.n_samples, j))
            .collect()
    }
}

/// Haar MODWT keeping only full-support coefficients.
///
/// Computed with the à trous recursion on running block means,
/// `W_j[t] = (V_{j-1}[t + 2^{j-1}] − V_{j-1}[t]) / 2`, which is algebraically
/// identical to convolving with [`haar_filter`].
pub fn modwt(signals: &SignalArray, levels: usize) -> Result<WaveletPyramid> {
    let t = signals.len();
    let max = max_level(t);
    if levels == 0 || levels > max {
        return Err(SvoError::LevelTooLarge {
            requested: levels,
            max,
            samples: t,
        });
    }
    let per_sensor: Vec<Vec<Vec<f64>>> = signals
        .rows()
        .par_iter()
        .map(|row| modwt_row(row, levels))
        .collect();
    // transpose to level-major
    let mut out: Vec<Vec<Vec<f64>>> = (0..levels).map(|_| Vec::with_capacity(signals.n_sensors())).collect();
    for sensor in per_sensor {
        for (j, coeffs) in sensor.into_iter().enumerate() {
            out[j].push(coeffs);
        }
    }
    Ok(WaveletPyramid {
        levels: out,
        n_samples: t,
    })
}

fn modwt_row(x: &[f64], levels: usize) -> Vec<Vec<f64>> {
    let mut smooth = x.to_vec();
    let mut out = Vec::with_capacity(levels);
    for j in 1..=levels {
        let half = 1usize << (j - 1);
        let m = smooth.len() - half;
        let mut w = Vec::with_capacity(m);
        let mut next = Vec::with_capacity(m);
        for t in 0..m {
            let older = smooth[t];
            let recent = smooth[t + half];
            w.push(0.5 * (recent - older));
            next.push(0.5 * (recent + older));
        }
        out.push(w);
        smooth = next;
    }
    out
}

fn dot_mean(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    s / a.len() as f64
}

/// Lag-zero wavelet cross-covariance estimate between sensors `i` and `k` at
/// `level`: `(1/M_j) Σ_t W_{i,j,t} W_{k,j,t}`. No mean is removed; Haar
/// coefficients of a process with stationary increments have mean zero.
pub fn wccv_hat(pyramid: &WaveletPyramid, i: usize, k: usize, level: usize) -> Result<f64> {
    let p = pyramid.n_sensors();
    if i >= p || k >= p {
        return Err(SvoError::InvalidArgument(format!(
            "sensor index ({i}, {k}) out of range for {p} sensors"
        )));
    }
    if level == 0 || level > pyramid.n_levels() {
        return Err(SvoError::InvalidArgument(format!(
            "level {level} out of range 1..={}",
            pyramid.n_levels()
        )));
    }
    let lvl = pyramid.level(level);
    let (a, b) = if i <= k { (&lvl[i], &lvl[k]) } else { (&lvl[k], &lvl[i]) };
    Ok(dot_mean(a, b))
}

/// `p × p` matrix of `wccv_hat` at one level, computed on the upper triangle
/// and mirrored.
pub fn wccv_matrix(pyramid: &WaveletPyramid, level: usize) -> DMatrix<f64> {
    let lvl = pyramid.level(level);
    let p = lvl.len();
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        for k in i..p {
            let v = dot_mean(&lvl[i], &lvl[k]);
            a[(i, k)] = v;
            a[(k, i)] = v;
        }
    }
    a
}

/// Per-level WCCV matrices `Â_j` and their weighted sum `Â₀ = Σ ω_j Â_j`.
#[derive(Debug, Clone)]
pub struct ScaleCovariances {
    pub per_level: Vec<DMatrix<f64>>,
    pub weighted: DMatrix<f64>,
    pub weights: WeightVector,
}

pub fn wccv_matrices(pyramid: &WaveletPyramid, weights: &WeightVector) -> Result<ScaleCovariances> {
    if weights.len() != pyramid.n_levels() {
        return Err(SvoError::DimensionMismatch(format!(
            "{} weights for {} levels",
            weights.len(),
            pyramid.n_levels()
        )));
    }
    let per_level: Vec<DMatrix<f64>> = (1..=pyramid.n_levels())
        .into_par_iter()
        .map(|j| wccv_matrix(pyramid, j))
        .collect();
    let weighted = aggregate(&per_level, weights)?;
    Ok(ScaleCovariances {
        per_level,
        weighted,
        weights: weights.clone(),
    })
}

/// Position of `(level, i, k)` in the flattened WCCV vector: level-major,
/// then row-major over the sensor pair. Both `(i, k)` and `(k, i)` have a
/// slot, so the vector has `J p²` entries.
pub fn flat_index(level: usize, i: usize, k: usize, p: usize) -> usize {
    (level - 1) * p * p + i * p + k
}

/// Inverse of [`flat_index`]: `(level, i, k)`.
pub fn unflatten_index(m: usize, p: usize) -> (usize, usize, usize) {
    let level = m / (p * p) + 1;
    let r = m % (p * p);
    (level, r / p, r % p)
}

/// Flattened WCCV vector `γ̂` of length `J p²`.
pub fn wccv_vector(pyramid: &WaveletPyramid) -> Vec<f64> {
    let p = pyramid.n_sensors();
    let mut out = vec![0.0; pyramid.n_levels() * p * p];
    for j in 1..=pyramid.n_levels() {
        let a = wccv_matrix(pyramid, j);
        for i in 0..p {
            for k in 0..p {
                out[flat_index(j, i, k, p)] = a[(i, k)];
            }
        }
    }
    out
}

/// Rebuilds the per-level matrices from a flattened WCCV vector.
pub fn unflatten_wccv(gamma: &[f64], p: usize) -> Result<Vec<DMatrix<f64>>> {
    if p == 0 || !gamma.len().is_multiple_of(p * p) {
        return Err(SvoError::DimensionMismatch(format!(
            "WCCV vector of length {} is not a multiple of p² = {}",
            gamma.len(),
            p * p
        )));
    }
    Ok(gamma
        .chunks(p * p)
        .map(|c| DMatrix::from_row_slice(p, p, c))
        .collect())
}

/// Level-wise wavelet variance of a single signal.
pub fn wavelet_variance(signal: &[f64], levels: usize) -> Result<Vec<f64>> {
    let arr = SignalArray::from_rows(vec![signal.to_vec()])?;
    let pyr = modwt(&arr, levels)?;
    Ok((1..=levels).map(|j| dot_mean(&pyr.level(j)[0], &pyr.level(j)[0])).collect())
}

/// Removes each sensor's sample mean.
pub fn demean(signals: &SignalArray) -> SignalArray {
    let data = signals
        .rows()
        .iter()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            row.iter().map(|v| v - mean).collect()
        })
        .collect();
    SignalArray {
        data,
        sample_rate_hz: signals.sample_rate_hz,
        labels: signals.labels.clone(),
    }
}
