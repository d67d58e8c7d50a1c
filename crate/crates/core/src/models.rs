//! Parametric sensor-array error models: white noise plus random walk, and
//! white noise plus a sum of AR(1) processes. Simulators, closed-form wavelet
//! covariances and a two-parameter wavelet-moment fit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvoError};
use crate::linalg::{is_symmetric, psd_factor};
use crate::svo::{aggregate, optimal_coefficients, CoefficientVector, WeightVector};
use crate::wavelet::{max_level, wavelet_variance, SignalArray};

const PSD_TOL: f64 = 1e-12;

/// `X_t = 1δ + b_t + ξ_t`, `b_t = b_{t−1} + η_t`, `ξ ~ N(0, R)`, `η ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WnRwModel {
    r: DMatrix<f64>,
    q: DMatrix<f64>,
    delta: f64,
}

fn check_diagonal(r: &DMatrix<f64>) -> Result<()> {
    if !r.is_square() || r.nrows() == 0 {
        return Err(SvoError::InvalidModel("white-noise covariance must be square".into()));
    }
    for i in 0..r.nrows() {
        for k in 0..r.ncols() {
            let v = r[(i, k)];
            if !v.is_finite() || (i != k && v != 0.0) || (i == k && v < 0.0) {
                return Err(SvoError::InvalidModel(format!(
                    "white-noise covariance must be diagonal and nonnegative (entry ({}, {}) = {v})",
                    i + 1,
                    k + 1
                )));
            }
        }
    }
    Ok(())
}

fn check_psd(name: &str, m: &DMatrix<f64>, p: usize) -> Result<DMatrix<f64>> {
    if m.shape() != (p, p) {
        return Err(SvoError::InvalidModel(format!(
            "{name} is {}x{}, expected {p}x{p}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_symmetric(m, 1e-12) {
        return Err(SvoError::InvalidModel(format!("{name} is not symmetric")));
    }
    psd_factor(m, PSD_TOL).map_err(|e| SvoError::InvalidModel(format!("{name}: {e}")))
}

impl WnRwModel {
    pub fn new(r: DMatrix<f64>, q: DMatrix<f64>, delta: f64) -> Result<Self> {
        check_diagonal(&r)?;
        check_psd("random-walk covariance", &q, r.nrows())?;
        if !delta.is_finite() {
            return Err(SvoError::InvalidModel("delta must be finite".into()));
        }
        Ok(Self { r, q, delta })
    }

    pub fn n_sensors(&self) -> usize {
        self.r.nrows()
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Component {
    pub phi: f64,
    pub p: DMatrix<f64>,
}

/// How AR(1) states are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ar1Start {
    /// Each component drawn from its stationary law `N(0, P/(1−φ²))`.
    #[default]
    Stationary,
    /// Start at zero and discard `⌈10/(1−φ_max)⌉` samples.
    BurnIn,
}

/// `X_t = 1δ + Σ_m b_{m;t} + ξ_t`, `b_{m;t} = φ_m b_{m;t−1} + η_{m;t}`,
/// `η_m ~ N(0, P_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WnAr1Model {
    r: DMatrix<f64>,
    components: Vec<Ar1Component>,
    delta: f64,
    start: Ar1Start,
}

impl WnAr1Model {
    pub fn new(r: DMatrix<f64>, components: Vec<Ar1Component>, delta: f64) -> Result<Self> {
        check_diagonal(&r)?;
        for (m, c) in components.iter().enumerate() {
            if !(c.phi.abs() < 1.0) {
                return Err(SvoError::InvalidModel(format!(
                    "AR(1) component {} has |phi| = {} >= 1",
                    m + 1,
                    c.phi.abs()
                )));
            }
            check_psd(&format!("AR(1) component {} covariance", m + 1), &c.p, r.nrows())?;
        }
        if !delta.is_finite() {
            return Err(SvoError::InvalidModel("delta must be finite".into()));
        }
        Ok(Self {
            r,
            components,
            delta,
            start: Ar1Start::Stationary,
        })
    }

    pub fn with_start(mut self, start: Ar1Start) -> Self {
        self.start = start;
        self
    }

    pub fn n_sensors(&self) -> usize {
        self.r.nrows()
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn components(&self) -> &[Ar1Component] {
        &self.components
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn start(&self) -> Ar1Start {
        self.start
    }

    pub fn burn_in(&self) -> usize {
        let phi_max = self.components.iter().map(|c| c.phi.abs()).fold(0.0, f64::max);
        (10.0 / (1.0 - phi_max)).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarWnRwFit {
    pub sigma2: f64,
    pub gamma2: f64,
}

fn standard_normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn white_noise_scales(r: &DMatrix<f64>) -> Vec<f64> {
    r.diagonal().iter().map(|v| v.sqrt()).collect()
}

pub fn simulate_wn_rw<R: Rng + ?Sized>(model: &WnRwModel, n_samples: usize, rng: &mut R) -> Result<SignalArray> {
    let p = model.n_sensors();
    let l_q = psd_factor(&model.q, PSD_TOL)?;
    let sd = white_noise_scales(&model.r);
    let mut rows = vec![Vec::with_capacity(n_samples); p];
    let mut level = DVector::zeros(p);
    for _ in 0..n_samples {
        let xi = standard_normals(rng, p);
        let eta = &l_q * standard_normals(rng, p);
        level += eta;
        for i in 0..p {
            rows[i].push(model.delta + level[i] + sd[i] * xi[i]);
        }
    }
    SignalArray::from_rows(rows)
}

pub fn simulate_wn_ar1<R: Rng + ?Sized>(model: &WnAr1Model, n_samples: usize, rng: &mut R) -> Result<SignalArray> {
    let p = model.n_sensors();
    let factors = model
        .components
        .iter()
        .map(|c| psd_factor(&c.p, PSD_TOL))
        .collect::<Result<Vec<_>>>()?;
    let sd = white_noise_scales(&model.r);
    let mut states: Vec<DVector<f64>> = match model.start {
        Ar1Start::Stationary => model
            .components
            .iter()
            .zip(&factors)
            .map(|(c, l)| l * standard_normals(rng, p) / (1.0 - c.phi * c.phi).sqrt())
            .collect(),
        Ar1Start::BurnIn => vec![DVector::zeros(p); model.components.len()],
    };
    let skip = match model.start {
        Ar1Start::Stationary => 0,
        Ar1Start::BurnIn => model.burn_in(),
    };
    let mut rows = vec![Vec::with_capacity(n_samples); p];
    for t in 0..skip + n_samples {
        let xi = standard_normals(rng, p);
        for ((state, c), l) in states.iter_mut().zip(&model.components).zip(&factors) {
            let eta = l * standard_normals(rng, p);
            *state *= c.phi;
            *state += eta;
        }
        if t < skip {
            continue;
        }
        for i in 0..p {
            let ar: f64 = states.iter().map(|s| s[i]).sum();
            rows[i].push(model.delta + ar + sd[i] * xi[i]);
        }
    }
    SignalArray::from_rows(rows)
}

/// Regressors of the white-noise and random-walk variances in the level-`j`
/// Haar wavelet variance.
pub fn wn_rw_regressors(level: usize) -> (f64, f64) {
    let tau = 2f64.powi(level as i32);
    (1.0 / tau, (tau * tau + 2.0) / (12.0 * tau))
}

/// `A_j = R/τ_j + Q(τ_j² + 2)/(12τ_j)`, `τ_j = 2^j`.
pub fn closed_form_wccv_wn_rw(model: &WnRwModel, level: usize) -> DMatrix<f64> {
    assert!(level >= 1, "levels start at 1");
    let (a, b) = wn_rw_regressors(level);
    &model.r * a + &model.q * b
}

/// Coefficients minimizing the closed-form weighted wavelet variance.
pub fn closed_form_coefficients(model: &WnRwModel, weights: &WeightVector) -> Result<CoefficientVector> {
    let per_level: Vec<_> = (1..=weights.len()).map(|j| closed_form_wccv_wn_rw(model, j)).collect();
    optimal_coefficients(&aggregate(&per_level, weights)?)
}

/// Least-squares fit of `ν_j ≈ σ²/τ_j + γ²(τ_j²+2)/(12τ_j)` over
/// nonnegative `(σ², γ²)`, given wavelet variances for levels `1..=J`.
pub fn gmwm_fit_from_wv(wv: &[f64]) -> ScalarWnRwFit {
    let (mut saa, mut sab, mut sbb, mut sav, mut sbv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (j, &v) in wv.iter().enumerate() {
        let (a, b) = wn_rw_regressors(j + 1);
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        sav += a * v;
        sbv += b * v;
    }
    let objective = |s: f64, g: f64| {
        wv.iter()
            .enumerate()
            .map(|(j, &v)| {
                let (a, b) = wn_rw_regressors(j + 1);
                (v - s * a - g * b).powi(2)
            })
            .sum::<f64>()
    };
    let mut candidates = vec![(0.0, 0.0)];
    if saa > 0.0 {
        candidates.push(((sav / saa).max(0.0), 0.0));
    }
    if sbb > 0.0 {
        candidates.push((0.0, (sbv / sbb).max(0.0)));
    }
    let det = saa * sbb - sab * sab;
    if det > 0.0 {
        let s = (sav * sbb - sbv * sab) / det;
        let g = (sbv * saa - sav * sab) / det;
        if s >= 0.0 && g >= 0.0 {
            candidates.push((s, g));
        }
    }
    let (sigma2, gamma2) = candidates
        .into_iter()
        .min_by(|x, y| objective(x.0, x.1).total_cmp(&objective(y.0, y.1)))
        .expect("at least the origin");
    ScalarWnRwFit { sigma2, gamma2 }
}

pub fn gmwm_fit_wn_rw(signal: &[f64], levels: usize) -> Result<ScalarWnRwFit> {
    if levels == 0 || levels > max_level(signal.len()) {
        return Err(SvoError::LevelTooLarge {
            requested: levels,
            max: max_level(signal.len()),
            samples: signal.len(),
        });
    }
    Ok(gmwm_fit_from_wv(&wavelet_variance(signal, levels)?))
}

/// Either benchmark model.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    WnRw(WnRwModel),
    WnAr1(WnAr1Model),
}

impl ModelSpec {
    pub fn n_sensors(&self) -> usize {
        match self {
            ModelSpec::WnRw(m) => m.n_sensors(),
            ModelSpec::WnAr1(m) => m.n_sensors(),
        }
    }

    pub fn simulate<R: Rng + ?Sized>(&self, n_samples: usize, rng: &mut R) -> Result<SignalArray> {
        match self {
            ModelSpec::WnRw(m) => simulate_wn_rw(m, n_samples, rng),
            ModelSpec::WnAr1(m) => simulate_wn_ar1(m, n_samples, rng),
        }
    }

    /// Random-walk innovation covariance, when the model has one.
    pub fn random_walk_covariance(&self) -> Option<&DMatrix<f64>> {
        match self {
            ModelSpec::WnRw(m) => Some(&m.q),
            ModelSpec::WnAr1(_) => None,
        }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        match self {
            ModelSpec::WnRw(m) => ModelSpec::WnRw(m.with_delta(delta)),
            ModelSpec::WnAr1(mut m) => {
                m.delta = delta;
                ModelSpec::WnAr1(m)
            }
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "case1" => Ok(ModelSpec::WnRw(presets::case1())),
            "case2" => Ok(ModelSpec::WnAr1(presets::case2())),
            other => Err(SvoError::InvalidModel(format!(
                "unknown model preset `{other}` (expected case1 or case2)"
            ))),
        }
    }

    pub fn describe(&self) -> ModelDescription {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        match self {
            ModelSpec::WnRw(m) => ModelDescription::WnRw {
                r: m.r.diagonal().iter().copied().collect(),
                q: rows(&m.q),
                delta: m.delta,
            },
            ModelSpec::WnAr1(m) => ModelDescription::WnAr1 {
                r: m.r.diagonal().iter().copied().collect(),
                components: m
                    .components
                    .iter()
                    .map(|c| Ar1Description { phi: c.phi, p: rows(&c.p) })
                    .collect(),
                delta: m.delta,
                start: m.start,
            },
        }
    }

    /// Named matrices of the model, for export.
    pub fn matrices(&self) -> Vec<(String, DMatrix<f64>)> {
        match self {
            ModelSpec::WnRw(m) => vec![("R".into(), m.r.clone()), ("Q".into(), m.q.clone())],
            ModelSpec::WnAr1(m) => {
                let mut out = vec![("R".to_string(), m.r.clone())];
                for (k, c) in m.components.iter().enumerate() {
                    out.push((format!("P{}", k + 1), c.p.clone()));
                }
                out
            }
        }
    }
}

/// Serializable form of a [`ModelSpec`]; white-noise covariances are given
/// by their diagonal, all values in base units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelDescription {
    WnRw {
        r: Vec<f64>,
        q: Vec<Vec<f64>>,
        #[serde(default)]
        delta: f64,
    },
    WnAr1 {
        r: Vec<f64>,
        components: Vec<Ar1Description>,
        #[serde(default)]
        delta: f64,
        #[serde(default)]
        start: Ar1Start,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ar1Description {
    pub phi: f64,
    pub p: Vec<Vec<f64>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(SvoError::InvalidModel(format!("{name} must be a square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, k| rows[i][k]))
}

impl TryFrom<ModelDescription> for ModelSpec {
    type Error = SvoError;

    fn try_from(d: ModelDescription) -> Result<Self> {
        match d {
            ModelDescription::WnRw { r, q, delta } => Ok(ModelSpec::WnRw(WnRwModel::new(
                DMatrix::from_diagonal(&DVector::from_vec(r)),
                matrix_from_rows(&q, "q")?,
                delta,
            )?)),
            ModelDescription::WnAr1 {
                r,
                components,
                delta,
                start,
            } => {
                let comps = components
                    .iter()
                    .enumerate()
                    .map(|(k, c)| {
                        Ok(Ar1Component {
                            phi: c.phi,
                            p: matrix_from_rows(&c.p, &format!("component {} p", k + 1))?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ModelSpec::WnAr1(
                    WnAr1Model::new(DMatrix::from_diagonal(&DVector::from_vec(r)), comps, delta)?.with_start(start),
                ))
            }
        }
    }
}

/// The two six-gyroscope benchmark arrays, in deg²/s².
pub mod presets {
    use super::*;

    pub const R_DIAG: [f64; 6] = [2.805556, 1.977778, 1.361111, 1.063889, 1.069444, 2.538889];
    pub const R_SCALE: f64 = 1e-7;

    #[rustfmt::skip]
    pub const Q: [f64; 36] = [
         0.255058, -0.008573,  0.102881, -0.162894, -0.240055, -0.055727,
        -0.008573,  0.471536,  0.199331,  0.010717,  0.032150,  0.207905,
         0.102881,  0.199331,  3.489369, -1.281722,  0.055727, -0.302212,
        -0.162894,  0.010717, -1.281722,  2.091907,  0.409379,  0.544410,
        -0.240055,  0.032150,  0.055727,  0.409379,  0.555127,  0.244342,
        -0.055727,  0.207905, -0.302212,  0.544410,  0.244342,  2.501286,
    ];
    pub const Q_SCALE: f64 = 1e-13;

    pub const PHI: [f64; 3] = [0.9975214, 0.9998705, 0.9999933];

    #[rustfmt::skip]
    pub const P1: [f64; 36] = [
         0.400813, -0.018061, -0.044770, -0.104857,  0.254671, -0.234950,
        -0.018061,  1.177847, -0.012905, -0.374198, -0.051101,  0.284942,
        -0.044770, -0.012905,  1.965775,  0.202629, -0.175089,  0.144629,
        -0.104857, -0.374198,  0.202629,  1.309887,  0.023176,  0.412761,
         0.254671, -0.051101, -0.175089,  0.023176,  1.928375,  0.571453,
        -0.234950,  0.284942,  0.144629,  0.412761,  0.571453,  1.434466,
    ];
    #[rustfmt::skip]
    pub const P2: [f64; 36] = [
         6.713833,  1.515552,  1.245013, -0.071179,  0.428489,  0.957757,
         1.515552,  5.607230,  2.264650, -0.773724,  0.281054,  1.440987,
         1.245013,  2.264650,  7.499051, -0.162687, -0.529317, -0.999575,
        -0.071179, -0.773724, -0.162687,  1.207920, -0.187305,  0.681702,
         0.428489,  0.281054, -0.529317, -0.187305,  7.499327,  2.414762,
         0.957757,  1.440987, -0.999575,  0.681702,  2.414762,  6.461646,
    ];
    #[rustfmt::skip]
    pub const P3: [f64; 36] = [
         5.062006, -0.643280,  0.326013,  0.697800,  1.727949,  0.738584,
        -0.643280,  1.612038, -0.318449, -0.383634, -0.768214, -0.100044,
         0.326013, -0.318449,  2.102923,  0.091458,  0.398505, -0.137760,
         0.697800, -0.383634,  0.091458,  0.788177, -0.129179,  0.519119,
         1.727949, -0.768214,  0.398505, -0.129179,  5.442670,  0.378632,
         0.738584, -0.100044, -0.137760,  0.519119,  0.378632,  4.990004,
    ];
    pub const P_SCALES: [f64; 3] = [1e-11, 1e-13, 1e-14];

    /// Sampling rate of the simulated arrays.
    pub const SAMPLE_RATE_HZ: f64 = 10.0;

    fn r() -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(6, R_DIAG.iter().map(|v| v * R_SCALE)))
    }

    fn square(values: &[f64; 36], scale: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(6, 6, values) * scale
    }

    pub fn case1() -> WnRwModel {
        WnRwModel::new(r(), square(&Q, Q_SCALE), 0.0).expect("case 1 preset is valid")
    }

    pub fn case2() -> WnAr1Model {
        let components = PHI
            .iter()
            .zip([&P1, &P2, &P3])
            .zip(P_SCALES)
            .map(|((&phi, p), s)| Ar1Component { phi, p: square(p, s) })
            .collect();
        WnAr1Model::new(r(), components, 0.0).expect("case 2 preset is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svo::WeightPreset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn sample_var(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn noise_free_is_constant() {
        let m = WnRwModel::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), 5.0).unwrap();
        let s = simulate_wn_rw(&m, 50, &mut rng(1)).unwrap();
        assert!(s.rows().iter().flatten().all(|&v| v == 5.0));
    }

    #[test]
    fn white_noise_only() {
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let m = WnRwModel::new(r, DMatrix::zeros(2, 2), 2.0).unwrap();
        let s = simulate_wn_rw(&m, 100_000, &mut rng(2)).unwrap();
        for (row, want) in s.rows().iter().zip([1.0, 4.0]) {
            assert!((sample_var(row) / want - 1.0).abs() < 0.05);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            assert!((mean - 2.0).abs() < 0.05);
        }
    }

    #[test]
    fn innovations_follow_q() {
        let q = presets::case1().q().clone() / presets::Q_SCALE;
        let m = WnRwModel::new(DMatrix::zeros(6, 6), q.clone(), 0.0).unwrap();
        let s = simulate_wn_rw(&m, 100_000, &mut rng(3)).unwrap();
        let diffs: Vec<Vec<f64>> = s
            .rows()
            .iter()
            .map(|r| std::iter::once(r[0]).chain(r.windows(2).map(|w| w[1] - w[0])).collect())
            .collect();
        let n = diffs[0].len() as f64;
        for i in 0..6 {
            for k in 0..6 {
                let c: f64 = diffs[i].iter().zip(&diffs[k]).map(|(a, b)| a * b).sum::<f64>() / n;
                let se = ((q[(i, i)] * q[(k, k)] + q[(i, k)].powi(2)) / n).sqrt();
                assert!((c - q[(i, k)]).abs() < (0.05 * q[(i, k)].abs()).max(4.0 * se), "({i},{k}) {c} vs {}", q[(i, k)]);
            }
        }
    }

    #[test]
    fn invalid_models_rejected() {
        let bad_q = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(WnRwModel::new(DMatrix::identity(2, 2), bad_q, 0.0).is_err());
        let off_diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0]);
        assert!(WnRwModel::new(off_diag, DMatrix::zeros(2, 2), 0.0).is_err());
        let unit_root = Ar1Component { phi: 1.0, p: scalar(1.0) };
        assert!(matches!(WnAr1Model::new(scalar(1.0), vec![unit_root], 0.0), Err(SvoError::InvalidModel(_))));
    }

    #[test]
    fn ar1_stationary_variance() {
        let m = WnAr1Model::new(scalar(0.0), vec![Ar1Component { phi: 0.5, p: scalar(0.75) }], 0.0).unwrap();
        let s = simulate_wn_ar1(&m, 100_000, &mut rng(4)).unwrap();
        assert!((sample_var(s.row(0)) - 1.0).abs() < 0.05);
    }

    #[test]
    fn ar1_with_zero_phi_is_white() {
        let m = WnAr1Model::new(scalar(1.0), vec![Ar1Component { phi: 0.0, p: scalar(2.0) }], 0.0).unwrap();
        let s = simulate_wn_ar1(&m, 100_000, &mut rng(5)).unwrap();
        let x = s.row(0);
        assert!((sample_var(x) / 3.0 - 1.0).abs() < 0.05);
        let lag1: f64 = x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / x.len() as f64;
        assert!(lag1.abs() < 0.05);
    }

    #[test]
    fn burn_in_start() {
        let m = WnAr1Model::new(scalar(0.0), vec![Ar1Component { phi: 0.75, p: scalar(0.4375) }], 0.0)
            .unwrap()
            .with_start(Ar1Start::BurnIn);
        assert_eq!(m.burn_in(), 40);
        let s = simulate_wn_ar1(&m, 100_000, &mut rng(6)).unwrap();
        assert!((sample_var(s.row(0)) - 1.0).abs() < 0.05);
    }

    #[test]
    fn simulation_is_seeded() {
        let m = ModelSpec::preset("case2").unwrap();
        let a = m.simulate(500, &mut rng(9)).unwrap();
        let b = m.simulate(500, &mut rng(9)).unwrap();
        let c = m.simulate(500, &mut rng(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn closed_form_examples() {
        let wn = WnRwModel::new(DMatrix::identity(3, 3), DMatrix::zeros(3, 3), 0.0).unwrap();
        assert_eq!(closed_form_wccv_wn_rw(&wn, 1), DMatrix::identity(3, 3) * 0.5);
        let q = presets::case1().q().clone();
        let rw = WnRwModel::new(DMatrix::zeros(6, 6), q.clone(), 0.0).unwrap();
        assert!((closed_form_wccv_wn_rw(&rw, 1) - &q / 4.0).amax() < 1e-28);
        assert!((closed_form_wccv_wn_rw(&rw, 2) - &q * 0.375).amax() < 1e-28);
    }

    #[test]
    fn closed_form_matches_simulation() {
        // level 1 of a random walk is η_t/2 and level 2 averages overlapping increments
        let m = WnRwModel::new(scalar(0.5), scalar(2.0), 0.0).unwrap();
        let reps = 200;
        let mut acc = [0.0; 3];
        for r in 0..reps {
            let s = simulate_wn_rw(&m, 4096, &mut rng(100 + r)).unwrap();
            let wv = wavelet_variance(s.row(0), 3).unwrap();
            for j in 0..3 {
                acc[j] += wv[j] / reps as f64;
            }
        }
        for j in 0..3 {
            let want = closed_form_wccv_wn_rw(&m, j + 1)[(0, 0)];
            assert!((acc[j] / want - 1.0).abs() < 0.03, "level {}: {} vs {want}", j + 1, acc[j]);
        }
    }

    #[test]
    fn preset_scales() {
        let c1 = presets::case1();
        assert!((c1.r()[(0, 0)] - 2.805556e-7).abs() < 1e-18);
        assert!((c1.q()[(5, 5)] - 2.501286e-13).abs() < 1e-24);
        let c2 = presets::case2();
        assert_eq!(c2.components().len(), 3);
        assert!((c2.components()[2].p[(0, 0)] - 5.062006e-14).abs() < 1e-25);
        assert_eq!(c2.components()[1].phi, 0.9998705);
        // wavelet-variance crossover of the WN+RW model sits at intermediate scales
        let wn = |j| closed_form_wccv_wn_rw(&WnRwModel::new(c1.r().clone(), DMatrix::zeros(6, 6), 0.0).unwrap(), j)[(2, 2)];
        let rw = |j| closed_form_wccv_wn_rw(&WnRwModel::new(DMatrix::zeros(6, 6), c1.q().clone(), 0.0).unwrap(), j)[(2, 2)];
        assert!(wn(8) > rw(8) && wn(16) < rw(16));
    }

    #[test]
    fn closed_form_coefficients_sum_to_one() {
        let w = crate::svo::adapt_preset(WeightPreset::ShortScale, 10).unwrap();
        let c0 = closed_form_coefficients(&presets::case1(), &w).unwrap();
        assert!((c0.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // white noise dominates the short scales: the noisiest sensor gets the least weight
        let (imin, _) = c0.as_slice().iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert_eq!(imin, 0);
    }

    #[test]
    fn gmwm_recovers_pure_models() {
        let wn = WnRwModel::new(scalar(1.0), scalar(0.0), 0.0).unwrap();
        let mut sig = Vec::new();
        let mut gam = Vec::new();
        for r in 0..20 {
            let s = simulate_wn_rw(&wn, 1 << 16, &mut rng(200 + r)).unwrap();
            let fit = gmwm_fit_wn_rw(s.row(0), 12).unwrap();
            sig.push(fit.sigma2);
            gam.push(fit.gamma2);
        }
        let mean_sig = sig.iter().sum::<f64>() / 20.0;
        assert!((mean_sig - 1.0).abs() < 0.05);
        assert!(sig.iter().all(|s| (s - 1.0).abs() < 0.05));
        assert!(gam.iter().all(|&g| g < 1e-2 * mean_sig / 1.0));

        let rw = WnRwModel::new(scalar(0.0), scalar(1e-6), 0.0).unwrap();
        let mut fits = Vec::new();
        for r in 0..20 {
            let s = simulate_wn_rw(&rw, 1 << 16, &mut rng(300 + r)).unwrap();
            fits.push(gmwm_fit_wn_rw(s.row(0), 8).unwrap().gamma2);
        }
        let mean = fits.iter().sum::<f64>() / 20.0;
        assert!((mean / 1e-6 - 1.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn gmwm_zero_signal() {
        let fit = gmwm_fit_wn_rw(&vec![0.0; 256], 6).unwrap();
        assert_eq!(fit, ScalarWnRwFit { sigma2: 0.0, gamma2: 0.0 });
        assert!(gmwm_fit_wn_rw(&vec![0.0; 256], 9).is_err());
    }

    #[test]
    fn gmwm_exact_curve() {
        let wv: Vec<f64> = (1..=10)
            .map(|j| {
                let (a, b) = wn_rw_regressors(j);
                2.0 * a + 0.01 * b
            })
            .collect();
        let fit = gmwm_fit_from_wv(&wv);
        assert!((fit.sigma2 - 2.0).abs() < 1e-9 && (fit.gamma2 - 0.01).abs() < 1e-12);
        // negative curvature clamps the random walk to zero
        let wv: Vec<f64> = (1..=6).map(|j| 1.0 / 2f64.powi(j)).collect();
        assert_eq!(gmwm_fit_from_wv(&wv).gamma2, 0.0);
    }

    #[test]
    fn description_round_trip() {
        for name in ["case1", "case2"] {
            let m = ModelSpec::preset(name).unwrap();
            let back = ModelSpec::try_from(m.describe()).unwrap();
            assert_eq!(m, back);
        }
        assert!(ModelSpec::preset("case3").is_err());
    }
}
