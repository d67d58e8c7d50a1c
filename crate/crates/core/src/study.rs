//! Monte Carlo protocols: out-of-sample method comparison, interval
//! coverage and consistency of the estimated coefficients.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{equal_weights, estimate_q_wn_rw, rdvg_coefficients};
use crate::error::{Result, SvoError};
use crate::inference::{default_block_size, infer, BootstrapConfig};
use crate::models::{closed_form_coefficients, gmwm_fit_from_wv, ModelSpec, ScalarWnRwFit, WnRwModel};
use crate::svo::{aggregate, optimal_coefficients, virtual_wv, CoefficientVector, WeightVector};
use crate::wavelet::{coefficient_count, max_level, modwt, wccv_matrix, SignalArray};

const DOMAIN_FIT: u64 = 1;
const DOMAIN_EVAL: u64 = 2;
const DOMAIN_COVERAGE: u64 = 3;
const DOMAIN_BOOTSTRAP: u64 = 4;
const DOMAIN_CONSISTENCY: u64 = 5;

/// Independent stream `index` of purpose `domain` under a run seed.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 48) | index);
    rng
}

/// A 64-bit seed derived from a run seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    let mut z = seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-level WCCV matrices of an array.
pub fn scale_matrices(signals: &SignalArray, levels: usize) -> Result<Vec<DMatrix<f64>>> {
    let pyr = modwt(signals, levels)?;
    Ok((1..=levels).map(|j| wccv_matrix(&pyr, j)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SvoLong,
    SvoShort,
    Equal,
    RdvgOracle,
    RdvgEstimated,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::SvoLong,
        Method::SvoShort,
        Method::Equal,
        Method::RdvgOracle,
        Method::RdvgEstimated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SvoLong => "svo-long",
            Method::SvoShort => "svo-short",
            Method::Equal => "equal",
            Method::RdvgOracle => "rdvg-oracle",
            Method::RdvgEstimated => "rdvg-estimated",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SvoError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| SvoError::InvalidArgument(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub n_fit: usize,
    pub n_eval: usize,
    pub n_samples: usize,
    pub levels: usize,
    pub long_weights: WeightVector,
    pub short_weights: WeightVector,
    pub seed: u64,
}

impl CompareConfig {
    fn validate(&self) -> Result<()> {
        if self.n_fit == 0 || self.n_eval == 0 {
            return Err(SvoError::InvalidArgument("need at least one fit and one evaluation array".into()));
        }
        let max = max_level(self.n_samples);
        if self.levels == 0 || self.levels > max {
            return Err(SvoError::LevelTooLarge {
                requested: self.levels,
                max,
                samples: self.n_samples,
            });
        }
        for w in [&self.long_weights, &self.short_weights] {
            if w.len() != self.levels {
                return Err(SvoError::DimensionMismatch(format!(
                    "{} weights for {} levels",
                    w.len(),
                    self.levels
                )));
            }
        }
        Ok(())
    }
}

/// Results of one method across the protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResults {
    pub method: Method,
    /// One coefficient vector per fit array.
    pub coefficients: Vec<Vec<f64>>,
    /// Out-of-sample fused wavelet variance, `n_fit · n_eval` curves of `J` levels,
    /// ordered by fit index then evaluation index.
    pub wv_curves: Vec<Vec<f64>>,
    /// Two-parameter fits of every out-of-sample fused signal.
    pub fits: Vec<ScalarWnRwFit>,
    pub wv_mean: Vec<f64>,
    /// Standard error of `wv_mean`, from the spread of per-fit averages.
    pub wv_se: Vec<f64>,
}

impl MethodResults {
    pub fn median_sigma2(&self) -> f64 {
        median(self.fits.iter().map(|f| f.sigma2).collect())
    }

    pub fn median_gamma2(&self) -> f64 {
        median(self.fits.iter().map(|f| f.gamma2).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub n_fit: usize,
    pub n_eval: usize,
    pub n_samples: usize,
    pub levels: usize,
    pub seed: u64,
    pub methods: Vec<MethodResults>,
    /// Mean per-sensor wavelet variance over the evaluation arrays, `p × J`.
    pub sensor_wv_mean: Vec<Vec<f64>>,
}

impl CompareReport {
    pub fn method(&self, m: Method) -> Option<&MethodResults> {
        self.methods.iter().find(|r| r.method == m)
    }

    /// `mean_wv(m) / mean_wv(equal)` per level.
    pub fn ratio_to_equal(&self, m: Method) -> Option<Vec<f64>> {
        let eq = self.method(Method::Equal)?;
        let r = self.method(m)?;
        Some(r.wv_mean.iter().zip(&eq.wv_mean).map(|(a, b)| a / b).collect())
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn methods_for(model: &ModelSpec) -> Vec<Method> {
    Method::ALL
        .into_iter()
        .filter(|m| *m != Method::RdvgOracle || model.random_walk_covariance().is_some())
        .collect()
}

/// Coefficients of every method on one fit array.
fn fit_methods(
    model: &ModelSpec,
    methods: &[Method],
    signals: &SignalArray,
    config: &CompareConfig,
) -> Result<Vec<CoefficientVector>> {
    let per_level = scale_matrices(signals, config.levels)?;
    methods
        .iter()
        .map(|m| match m {
            Method::SvoLong => optimal_coefficients(&aggregate(&per_level, &config.long_weights)?),
            Method::SvoShort => optimal_coefficients(&aggregate(&per_level, &config.short_weights)?),
            Method::Equal => Ok(equal_weights(signals.n_sensors())),
            Method::RdvgOracle => rdvg_coefficients(model.random_walk_covariance().expect("filtered")),
            Method::RdvgEstimated => rdvg_coefficients(&estimate_q_wn_rw(signals)?),
        })
        .collect()
}

struct FitOutcome {
    coefficients: Vec<CoefficientVector>,
    curves: Vec<Vec<Vec<f64>>>,
    sensor_wv: Vec<Vec<f64>>,
}

/// Fits every method on `n_fit` arrays and evaluates each fit on `n_eval`
/// fresh arrays; all methods share the evaluation arrays of a fit index.
pub fn compare(model: &ModelSpec, config: &CompareConfig) -> Result<CompareReport> {
    config.validate()?;
    let methods = methods_for(model);
    let p = model.n_sensors();
    let outcomes: Vec<FitOutcome> = (0..config.n_fit)
        .into_par_iter()
        .map(|k| {
            let fit_array = model.simulate(config.n_samples, &mut substream(config.seed, DOMAIN_FIT, k as u64))?;
            let coefficients = fit_methods(model, &methods, &fit_array, config)?;
            let mut curves = vec![Vec::with_capacity(config.n_eval); methods.len()];
            let mut sensor_wv = vec![vec![0.0; config.levels]; p];
            for e in 0..config.n_eval {
                let index = (k * config.n_eval + e) as u64;
                let eval = model.simulate(config.n_samples, &mut substream(config.seed, DOMAIN_EVAL, index))?;
                let per_level = scale_matrices(&eval, config.levels)?;
                for (curve, c) in curves.iter_mut().zip(&coefficients) {
                    curve.push(virtual_wv(&per_level, c)?);
                }
                for (i, row) in sensor_wv.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v += per_level[j][(i, i)];
                    }
                }
            }
            Ok(FitOutcome {
                coefficients,
                curves,
                sensor_wv,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_curves = (config.n_fit * config.n_eval) as f64;
    let mut sensor_wv_mean = vec![vec![0.0; config.levels]; p];
    for o in &outcomes {
        for (acc, row) in sensor_wv_mean.iter_mut().zip(&o.sensor_wv) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v / n_curves;
            }
        }
    }

    let results = methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let coefficients = outcomes.iter().map(|o| o.coefficients[mi].as_slice().to_vec()).collect();
            let wv_curves: Vec<Vec<f64>> = outcomes.iter().flat_map(|o| o.curves[mi].iter().cloned()).collect();
            let fits = wv_curves.iter().map(|c| gmwm_fit_from_wv(c)).collect();
            let (wv_mean, wv_se) = level_mean_and_se(&outcomes.iter().map(|o| &o.curves[mi]).collect::<Vec<_>>(), config.levels);
            MethodResults {
                method,
                coefficients,
                wv_curves,
                fits,
                wv_mean,
                wv_se,
            }
        })
        .collect();

    Ok(CompareReport {
        n_fit: config.n_fit,
        n_eval: config.n_eval,
        n_samples: config.n_samples,
        levels: config.levels,
        seed: config.seed,
        methods: results,
        sensor_wv_mean,
    })
}

/// Grand mean per level, and its standard error from the per-fit means.
fn level_mean_and_se(groups: &[&Vec<Vec<f64>>], levels: usize) -> (Vec<f64>, Vec<f64>) {
    let n = groups.len() as f64;
    let group_means: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| (0..levels).map(|j| g.iter().map(|c| c[j]).sum::<f64>() / g.len() as f64).collect())
        .collect();
    let mean: Vec<f64> = (0..levels).map(|j| group_means.iter().map(|g| g[j]).sum::<f64>() / n).collect();
    let se = (0..levels)
        .map(|j| {
            if groups.len() < 2 {
                return f64::NAN;
            }
            let var = group_means.iter().map(|g| (g[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        })
        .collect();
    (mean, se)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    pub n_samples: usize,
    pub levels: usize,
    pub weights: WeightVector,
    pub replicates: usize,
    /// `None` selects the default block size.
    pub block_size: Option<usize>,
    pub mc_reps: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n_samples: usize,
    pub levels: usize,
    pub mc_reps: usize,
    pub replicates: usize,
    pub block_size: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Closed-form target coefficients.
    pub target: Vec<f64>,
    /// Fraction of replicates whose interval contains the target, per coefficient.
    pub coverage: Vec<f64>,
    /// Mean interval half-width per coefficient.
    pub mean_half_width: Vec<f64>,
    /// Monte Carlo standard deviation of the estimates per coefficient.
    pub empirical_sd: Vec<f64>,
    /// Mean of `sqrt(Σ̂_ii / T)` per coefficient.
    pub mean_estimated_sd: Vec<f64>,
    pub estimates: Vec<Vec<f64>>,
}

impl CoverageReport {
    /// Binomial standard error of a coverage estimate at the nominal level.
    pub fn mc_error(&self) -> f64 {
        let q = 1.0 - self.alpha;
        (q * (1.0 - q) / self.mc_reps as f64).sqrt()
    }
}

pub fn coverage(model: &WnRwModel, config: &CoverageConfig) -> Result<CoverageReport> {
    if config.weights.len() != config.levels {
        return Err(SvoError::DimensionMismatch(format!(
            "{} weights for {} levels",
            config.weights.len(),
            config.levels
        )));
    }
    if config.mc_reps == 0 {
        return Err(SvoError::InvalidArgument("need at least one Monte Carlo replicate".into()));
    }
    let max = max_level(config.n_samples);
    if config.levels == 0 || config.levels > max {
        return Err(SvoError::LevelTooLarge {
            requested: config.levels,
            max,
            samples: config.n_samples,
        });
    }
    let target = closed_form_coefficients(model, &config.weights)?;
    let m_last = coefficient_count(config.n_samples, config.levels);
    let block_size = config.block_size.unwrap_or_else(|| default_block_size(config.n_samples, m_last));
    let spec = ModelSpec::WnRw(model.clone());
    let p = model.n_sensors();
    let sqrt_t = (config.n_samples as f64).sqrt();

    let runs: Vec<(Vec<f64>, Vec<bool>, Vec<f64>, Vec<f64>)> = (0..config.mc_reps)
        .into_par_iter()
        .map(|r| {
            let signals = spec.simulate(config.n_samples, &mut substream(config.seed, DOMAIN_COVERAGE, r as u64))?;
            let pyr = modwt(&signals, config.levels)?;
            let boot = BootstrapConfig {
                block_size,
                replicates: config.replicates,
                seed: derive_seed(config.seed, DOMAIN_BOOTSTRAP, r as u64),
            };
            let fit = infer(&pyr, &config.weights, &boot, config.alpha)?;
            let hits = fit
                .intervals
                .intervals
                .iter()
                .zip(target.as_slice())
                .map(|(iv, &c0)| iv.contains(c0))
                .collect();
            let half = fit.intervals.intervals.iter().map(|iv| iv.half_width()).collect();
            let sd = (0..p)
                .map(|i| fit.covariance.sigma_star[(i, i)].max(0.0).sqrt() / sqrt_t)
                .collect();
            Ok((fit.coefficients.as_slice().to_vec(), hits, half, sd))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = config.mc_reps as f64;
    let col_mean = |f: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
        (0..p).map(|i| (0..runs.len()).map(|r| f(r, i)).sum::<f64>() / n).collect()
    };
    let coverage = col_mean(&|r, i| runs[r].1[i] as u8 as f64);
    let mean_half_width = col_mean(&|r, i| runs[r].2[i]);
    let mean_estimated_sd = col_mean(&|r, i| runs[r].3[i]);
    let mean_est = col_mean(&|r, i| runs[r].0[i]);
    let empirical_sd = (0..p)
        .map(|i| {
            if runs.len() < 2 {
                return f64::NAN;
            }
            (runs.iter().map(|r| (r.0[i] - mean_est[i]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect();

    Ok(CoverageReport {
        n_samples: config.n_samples,
        levels: config.levels,
        mc_reps: config.mc_reps,
        replicates: config.replicates,
        block_size,
        alpha: config.alpha,
        seed: config.seed,
        target: target.as_slice().to_vec(),
        coverage,
        mean_half_width,
        empirical_sd,
        mean_estimated_sd,
        estimates: runs.into_iter().map(|r| r.0).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyPoint {
    pub n_samples: usize,
    pub median_error: f64,
    pub errors: Vec<f64>,
}

/// Distance `‖ĉ − c₀‖₂` over `mc_reps` arrays at each length.
pub fn consistency(
    model: &WnRwModel,
    weights: &WeightVector,
    lengths: &[usize],
    mc_reps: usize,
    seed: u64,
) -> Result<Vec<ConsistencyPoint>> {
    let target = closed_form_coefficients(model, weights)?;
    let spec = ModelSpec::WnRw(model.clone());
    let levels = weights.len();
    lengths
        .iter()
        .enumerate()
        .map(|(li, &n)| {
            let errors = (0..mc_reps)
                .into_par_iter()
                .map(|r| {
                    let index = ((li as u64) << 32) | r as u64;
                    let signals = spec.simulate(n, &mut substream(seed, DOMAIN_CONSISTENCY, index))?;
                    let per_level = scale_matrices(&signals, levels)?;
                    let c = optimal_coefficients(&aggregate(&per_level, weights)?)?;
                    Ok(c.as_slice()
                        .iter()
                        .zip(target.as_slice())
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(ConsistencyPoint {
                n_samples: n,
                median_error: median(errors.clone()),
                errors,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::presets;
    use crate::svo::{adapt_preset, WeightPreset};

    fn small_config(seed: u64) -> CompareConfig {
        CompareConfig {
            n_fit: 5,
            n_eval: 2,
            n_samples: 1 << 10,
            levels: 8,
            long_weights: adapt_preset(WeightPreset::LongScale, 8).unwrap(),
            short_weights: adapt_preset(WeightPreset::ShortScale, 8).unwrap(),
            seed,
        }
    }

    #[test]
    fn compare_bookkeeping() {
        let model = ModelSpec::preset("case1").unwrap();
        let report = compare(&model, &small_config(1)).unwrap();
        assert_eq!(report.methods.len(), 5);
        for m in &report.methods {
            assert_eq!(m.coefficients.len(), 5);
            assert_eq!(m.wv_curves.len(), 10);
            assert_eq!(m.fits.len(), 10);
            assert!(m.wv_curves.iter().flatten().all(|v| *v >= 0.0));
            for c in &m.coefficients {
                assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
        }
        let eq = report.ratio_to_equal(Method::Equal).unwrap();
        assert!(eq.iter().all(|r| (r - 1.0).abs() < 1e-15));
    }

    #[test]
    fn compare_without_random_walk_skips_oracle() {
        let model = ModelSpec::preset("case2").unwrap();
        let report = compare(&model, &small_config(2)).unwrap();
        assert!(report.method(Method::RdvgOracle).is_none());
        assert_eq!(report.methods.len(), 4);
    }

    #[test]
    fn compare_is_deterministic() {
        let model = ModelSpec::preset("case1").unwrap();
        let a = compare(&model, &small_config(3)).unwrap();
        let b = compare(&model, &small_config(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seeds_and_streams_differ() {
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 3, 3));
        use rand::Rng;
        let a: u64 = substream(5, 1, 0).random();
        let b: u64 = substream(5, 1, 1).random();
        assert_ne!(a, b);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn small_coverage_run() {
        let cfg = CoverageConfig {
            n_samples: 1 << 11,
            levels: 5,
            weights: adapt_preset(WeightPreset::ShortScale, 5).unwrap(),
            replicates: 30,
            block_size: None,
            mc_reps: 4,
            alpha: 0.05,
            seed: 8,
        };
        let report = coverage(&presets::case1(), &cfg).unwrap();
        assert_eq!(report.block_size, 13);
        assert_eq!(report.coverage.len(), 6);
        assert!(report.coverage.iter().all(|c| (0.0..=1.0).contains(c)));
        assert_eq!(report, coverage(&presets::case1(), &cfg).unwrap());
    }
}
