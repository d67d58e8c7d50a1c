//! Scale-wise variance optimization: level weights, the aggregate WCCV
//! matrix, the closed-form minimum-variance coefficients and the fused
//! virtual signal.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvoError};
use crate::linalg::{is_symmetric, SymmetricSolver};
use crate::wavelet::SignalArray;

/// Long-scale weights for 19 levels, as published for the simulation studies.
pub const LONG_SCALE_19: [f64; 19] = [
    0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.001, 0.003, 0.007, 0.018, 0.041, 0.077,
    0.112, 0.135, 0.147, 0.151, 0.153, 0.153,
];

/// Short-scale weights for 19 levels.
pub const SHORT_SCALE_19: [f64; 19] = [
    0.118, 0.118, 0.117, 0.117, 0.116, 0.112, 0.104, 0.086, 0.059, 0.032, 0.014, 0.006, 0.002,
    0.001, 0.000, 0.000, 0.000, 0.000, 0.000,
];

/// Long-scale weights for 21 levels (recorded-array case study).
pub const LONG_SCALE_21: [f64; 21] = [
    0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.001, 0.003, 0.007, 0.018,
    0.041, 0.077, 0.112, 0.135, 0.147, 0.151, 0.153, 0.153,
];

/// Short-scale weights for 21 levels.
pub const SHORT_SCALE_21: [f64; 21] = [
    0.105, 0.105, 0.105, 0.105, 0.105, 0.103, 0.100, 0.093, 0.077, 0.053, 0.028, 0.013, 0.005,
    0.002, 0.001, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000,
];

const SUM_TOL: f64 = 1e-12;
const COEF_SUM_TOL: f64 = 1e-10;

/// Nonnegative level weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    omega: Vec<f64>,
}

impl WeightVector {
    /// Normalizes nonnegative weights to sum one.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(SvoError::InvalidWeights("weight vector is empty".into()));
        }
        if let Some(j) = raw.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(SvoError::InvalidWeights(format!(
                "weight {} at level {} is negative or non-finite",
                raw[j],
                j + 1
            )));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(SvoError::InvalidWeights("weights sum to zero".into()));
        }
        let omega: Vec<f64> = raw.iter().map(|w| w / total).collect();
        debug_assert!((omega.iter().sum::<f64>() - 1.0).abs() < SUM_TOL);
        Ok(Self { omega })
    }

    pub fn equal(levels: usize) -> Self {
        Self {
            omega: vec![1.0 / levels as f64; levels],
        }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.omega
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightPreset {
    Equal,
    /// Emphasizes the largest scales (random-walk and bias-instability region).
    LongScale,
    /// Emphasizes the smallest scales (white-noise region).
    ShortScale,
}

impl WeightPreset {
    pub fn name(self) -> &'static str {
        match self {
            WeightPreset::Equal => "equal",
            WeightPreset::LongScale => "long-scale",
            WeightPreset::ShortScale => "short-scale",
        }
    }

    /// The published vector with `levels` entries, unnormalized.
    pub fn raw(self, levels: usize) -> Option<&'static [f64]> {
        match (self, levels) {
            (WeightPreset::LongScale, 19) => Some(&LONG_SCALE_19),
            (WeightPreset::LongScale, 21) => Some(&LONG_SCALE_21),
            (WeightPreset::ShortScale, 19) => Some(&SHORT_SCALE_19),
            (WeightPreset::ShortScale, 21) => Some(&SHORT_SCALE_21),
            _ => None,
        }
    }

    fn shipped_lengths(self) -> &'static [usize] {
        match self {
            WeightPreset::Equal => &[],
            _ => &[19, 21],
        }
    }
}

impl fmt::Display for WeightPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightPreset {
    type Err = SvoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "equal" => Ok(WeightPreset::Equal),
            "long-scale" | "long" | "omega1" => Ok(WeightPreset::LongScale),
            "short-scale" | "short" | "omega2" => Ok(WeightPreset::ShortScale),
            other => Err(SvoError::InvalidWeights(format!("unknown weight preset `{other}`"))),
        }
    }
}

/// How to build a weight vector.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    Preset(WeightPreset),
    Explicit(Vec<f64>),
}

impl FromStr for WeightSpec {
    type Err = SvoError;

    /// A preset name or a comma-separated list of weights.
    fn from_str(s: &str) -> Result<Self> {
        if let Ok(p) = s.parse::<WeightPreset>() {
            return Ok(WeightSpec::Preset(p));
        }
        let values: std::result::Result<Vec<f64>, _> =
            s.split(',').map(|v| v.trim().parse::<f64>()).collect();
        values
            .map(WeightSpec::Explicit)
            .map_err(|_| SvoError::InvalidWeights(format!("`{s}` is neither a preset nor a list of numbers")))
    }
}

/// Builds the weight vector for `levels` levels. Presets must match one of
/// the shipped lengths exactly; see [`adapt_preset`] for other depths.
pub fn make_weights(spec: &WeightSpec, levels: usize) -> Result<WeightVector> {
    match spec {
        WeightSpec::Preset(WeightPreset::Equal) => {
            if levels == 0 {
                return Err(SvoError::InvalidWeights("zero levels".into()));
            }
            Ok(WeightVector::equal(levels))
        }
        WeightSpec::Preset(preset) => match preset.raw(levels) {
            Some(raw) => WeightVector::new(raw.to_vec()),
            None => Err(SvoError::PresetLength {
                name: preset.name().to_string(),
                preset_len: preset.shipped_lengths()[0],
                levels,
            }),
        },
        WeightSpec::Explicit(values) => {
            if values.len() != levels {
                return Err(SvoError::PresetLength {
                    name: "explicit".into(),
                    preset_len: values.len(),
                    levels,
                });
            }
            WeightVector::new(values.clone())
        }
    }
}

/// Fits a preset to a decomposition depth other than the shipped ones.
///
/// The long-scale profile is aligned on the deepest level (leading entries
/// dropped, or zeros prepended), which is how the 21-level vector relates to
/// the 19-level one. The short-scale profile is aligned on level 1 (trailing
/// entries dropped, or zeros appended). The result is renormalized.
pub fn adapt_preset(preset: WeightPreset, levels: usize) -> Result<WeightVector> {
    if levels == 0 {
        return Err(SvoError::InvalidWeights("zero levels".into()));
    }
    if let Some(raw) = preset.raw(levels) {
        return WeightVector::new(raw.to_vec());
    }
    let raw: Vec<f64> = match preset {
        WeightPreset::Equal => return Ok(WeightVector::equal(levels)),
        WeightPreset::LongScale => {
            let base: &[f64] = if levels > 19 { &LONG_SCALE_21 } else { &LONG_SCALE_19 };
            if levels <= base.len() {
                base[base.len() - levels..].to_vec()
            } else {
                let mut v = vec![0.0; levels - base.len()];
                v.extend_from_slice(base);
                v
            }
        }
        WeightPreset::ShortScale => {
            let base: &[f64] = if levels > 19 { &SHORT_SCALE_21 } else { &SHORT_SCALE_19 };
            let mut v: Vec<f64> = base.iter().copied().take(levels).collect();
            v.resize(levels, 0.0);
            v
        }
    };
    WeightVector::new(raw)
}

/// Fusion coefficients constrained to sum to one. Entries may be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    c: Vec<f64>,
}

impl CoefficientVector {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
            return Err(SvoError::InvalidArgument("coefficients must be finite and non-empty".into()));
        }
        let s: f64 = c.iter().sum();
        if (s - 1.0).abs() > COEF_SUM_TOL {
            return Err(SvoError::InvalidArgument(format!(
                "coefficients sum to {s}, expected 1"
            )));
        }
        Ok(Self { c })
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.c)
    }
}

/// `S_t = cᵀ X_t` together with the coefficients and labels that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualSignal {
    pub samples: Vec<f64>,
    pub coefficients: CoefficientVector,
    pub labels: Vec<String>,
}

/// `A₀ = Σ_j ω_j A_j`.
pub fn aggregate(per_level: &[DMatrix<f64>], weights: &WeightVector) -> Result<DMatrix<f64>> {
    if per_level.len() != weights.len() {
        return Err(SvoError::DimensionMismatch(format!(
            "{} level matrices for {} weights",
            per_level.len(),
            weights.len()
        )));
    }
    let p = per_level
        .first()
        .map(|a| a.nrows())
        .ok_or_else(|| SvoError::InvalidArgument("no level matrices".into()))?;
    let mut a0 = DMatrix::zeros(p, p);
    for (a, &w) in per_level.iter().zip(weights.as_slice()) {
        if a.shape() != (p, p) {
            return Err(SvoError::DimensionMismatch("level matrices differ in size".into()));
        }
        a0 += a * w;
    }
    Ok(a0)
}

/// `c = A₀⁻¹1 / (1ᵀA₀⁻¹1)`, the minimizer of `cᵀA₀c` subject to `cᵀ1 = 1`
/// when `A₀` is positive definite.
pub fn optimal_coefficients(a0: &DMatrix<f64>) -> Result<CoefficientVector> {
    if !a0.is_square() || a0.nrows() == 0 {
        return Err(SvoError::DimensionMismatch(format!(
            "aggregate matrix must be square, got {}x{}",
            a0.nrows(),
            a0.ncols()
        )));
    }
    if !is_symmetric(a0, 1e-10) {
        return Err(SvoError::InvalidArgument("aggregate matrix is not symmetric".into()));
    }
    let solver = SymmetricSolver::new(a0)?;
    let ones = DVector::from_element(a0.nrows(), 1.0);
    let u = solver.solve(&ones)?;
    let denom = u.sum();
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(SvoError::NotPositiveDefinite);
    }
    let mut c: Vec<f64> = u.iter().map(|v| v / denom).collect();
    // Put the rounding residue of the sum on the largest entry so the
    // constraint holds to machine precision.
    let resid = 1.0 - c.iter().sum::<f64>();
    let imax = c
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    c[imax] += resid;
    CoefficientVector::new(c)
}

/// Minimum-norm minimizer of `cᵀA₀c` subject to `cᵀ1 = 1` for a positive
/// semi-definite `A₀` that may be singular. Eigenvalues below
/// `1e-12 · λ_max` count as zero. Agrees with [`optimal_coefficients`] when
/// `A₀` is well conditioned.
pub fn min_norm_coefficients(a0: &DMatrix<f64>) -> Result<CoefficientVector> {
    if !a0.is_square() || a0.nrows() == 0 {
        return Err(SvoError::DimensionMismatch(format!(
            "aggregate matrix must be square, got {}x{}",
            a0.nrows(),
            a0.ncols()
        )));
    }
    if !is_symmetric(a0, 1e-10) {
        return Err(SvoError::InvalidArgument("aggregate matrix is not symmetric".into()));
    }
    let p = a0.nrows();
    let eig = a0.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.amax();
    let tol = 1e-12 * lambda_max;
    if eig.eigenvalues.min() < -1e-9 * lambda_max.max(f64::MIN_POSITIVE) {
        return Err(SvoError::NotPsd(format!("eigenvalue {:e}", eig.eigenvalues.min())));
    }
    let ones = DVector::from_element(p, 1.0);
    let mut null_part = DVector::zeros(p);
    let mut pinv_ones = DVector::zeros(p);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let proj = v.dot(&ones);
        if lambda <= tol {
            null_part += v * proj;
        } else {
            pinv_ones += v * (proj / lambda);
        }
    }
    // A null direction with nonzero sum reaches zero variance.
    let c = if null_part.norm_squared() > 1e-12 * p as f64 {
        &null_part / null_part.sum()
    } else {
        let denom = pinv_ones.sum();
        if !(denom > 0.0) {
            return Err(SvoError::NotPositiveDefinite);
        }
        &pinv_ones / denom
    };
    let mut c: Vec<f64> = c.iter().copied().collect();
    let resid = 1.0 - c.iter().sum::<f64>();
    let imax = c
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    c[imax] += resid;
    CoefficientVector::new(c)
}

pub fn fuse(signals: &SignalArray, c: &CoefficientVector) -> Result<VirtualSignal> {
    if c.len() != signals.n_sensors() {
        return Err(SvoError::DimensionMismatch(format!(
            "{} coefficients for {} sensors",
            c.len(),
            signals.n_sensors()
        )));
    }
    let mut samples = vec![0.0; signals.len()];
    for (row, &ci) in signals.rows().iter().zip(c.as_slice()) {
        for (s, x) in samples.iter_mut().zip(row) {
            *s += ci * x;
        }
    }
    Ok(VirtualSignal {
        samples,
        coefficients: c.clone(),
        labels: signals.labels().to_vec(),
    })
}

/// Wavelet variance of the fused signal at each level: `cᵀ A_j c`.
pub fn virtual_wv(per_level: &[DMatrix<f64>], c: &CoefficientVector) -> Result<Vec<f64>> {
    let cv = c.to_dvector();
    per_level
        .iter()
        .map(|a| {
            if a.shape() != (c.len(), c.len()) {
                return Err(SvoError::DimensionMismatch(format!(
                    "{}x{} matrix for {} coefficients",
                    a.nrows(),
                    a.ncols(),
                    c.len()
                )));
            }
            Ok(quad_form(a, &cv))
        })
        .collect()
}

pub(crate) fn quad_form(a: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    let n = c.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for k in 0..n {
            row += a[(i, k)] * c[k];
        }
        s += c[i] * row;
    }
    s
}
