//! Seeded, parallel Monte Carlo experiments.
//!
//! Replicate j of sample size n draws its data from the streams keyed by
//! `(seed, n, j)`, so results do not depend on the number of worker threads.
//! Per-replicate results are collected in replicate order and reduced by
//! pairwise summation.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::{AngularModel, CosineLaw, SampleSet};
use crate::efficiency::{m_avar_law, r_avar_law};
use crate::error::{Error, Result};
use crate::estimators::{one_step_r_estimate, Classical, EstimateResult};
use crate::geometry::{normalize, TangentVector, UnitVector};
use crate::rng::ReplicateStreams;
use crate::score::{cross_info_law, fisher_matrix, rank_central_sequence, score_from_law, ScoreFunction};

/// Runs with fewer replicates than this are flagged as low confidence.
pub const LOW_CONFIDENCE_REPLICATES: usize = 50;
/// Replicate count used when a run is requested at full scale.
pub const FULL_SCALE_REPLICATES: usize = 1000;

/// One estimator of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum EstimatorSpec {
    Mean,
    Median,
    OnestepR { score: AngularModel, preliminary: Classical },
}

impl EstimatorSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Mean => "mean".into(),
            Self::Median => "median".into(),
            Self::OnestepR { score, preliminary } => format!("onestep-r[{score}|{preliminary}]"),
        }
    }
}

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub truth: AngularModel,
    pub k: usize,
    pub theta_true: UnitVector,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub estimators: Vec<EstimatorSpec>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if let Some(n) = self.n_grid.iter().find(|&&n| n < 10) {
            return Err(Error::Config(format!("sample size {n} is below 10")));
        }
        if self.n_grid.is_empty() || self.estimators.is_empty() {
            return Err(Error::Config("n_grid and estimators must be non-empty".into()));
        }
        if self.theta_true.dim() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, found: self.theta_true.dim() });
        }
        Ok(())
    }
}

/// Streams for replicate `j` at sample size `n`.
pub fn replicate_streams(seed: u64, n: usize, j: usize) -> ReplicateStreams {
    ReplicateStreams::new(seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15), j as u64)
}

/// Summation by recursive halving, for reproducible totals.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1.0) / n).sqrt())
}

/// Estimators with their score functions resolved once per experiment.
struct Prepared {
    spec: EstimatorSpec,
    score: Option<ScoreFunction>,
}

fn prepare(estimators: &[EstimatorSpec], k: usize) -> Result<Vec<Prepared>> {
    let mut scores: HashMap<String, ScoreFunction> = HashMap::new();
    estimators
        .iter()
        .map(|spec| {
            let score = match spec {
                EstimatorSpec::OnestepR { score, .. } => {
                    let key = score.to_string();
                    if !scores.contains_key(&key) {
                        let s = score_from_law(Arc::new(CosineLaw::new(score.clone(), k)?));
                        s.information()?;
                        scores.insert(key.clone(), s);
                    }
                    Some(scores[&key].clone())
                }
                _ => None,
            };
            Ok(Prepared { spec: spec.clone(), score })
        })
        .collect()
}

/// Outcome of one estimator on one replicate; failures keep only their message.
type Outcome<T> = std::result::Result<T, String>;

/// Runs the estimators on one sample. Preliminaries are computed at most once.
fn run_estimators(prepared: &[Prepared], sample: &SampleSet) -> Vec<Outcome<EstimateResult>> {
    let mut cache: HashMap<Classical, Outcome<EstimateResult>> = HashMap::new();
    let mut classical = |c: Classical| -> Outcome<EstimateResult> {
        cache.entry(c).or_insert_with(|| c.estimate(sample).map_err(|e| e.to_string())).clone()
    };
    prepared
        .iter()
        .map(|p| match &p.spec {
            EstimatorSpec::Mean => classical(Classical::Mean),
            EstimatorSpec::Median => classical(Classical::Median),
            EstimatorSpec::OnestepR { preliminary, .. } => {
                let pre = classical(*preliminary)?;
                one_step_r_estimate(sample, p.score.as_ref().expect("prepared score"), &pre).map_err(|e| e.to_string())
            }
        })
        .collect()
}

/// MSE summary for one estimator at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseEntry {
    pub estimator: String,
    pub n: usize,
    /// Per-coordinate mean squared errors.
    pub m: Vec<f64>,
    pub m_norm: f64,
    /// Monte Carlo standard errors of `m`.
    pub se: Vec<f64>,
    /// Delta-method standard error of `m_norm`.
    pub m_norm_se: f64,
    pub replicates_used: usize,
    pub failures: usize,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseReport {
    pub truth: String,
    pub k: usize,
    pub replicates: usize,
    pub seed: u64,
    pub entries: Vec<MseEntry>,
}

impl MseReport {
    pub fn entry(&self, estimator: &str, n: usize) -> Option<&MseEntry> {
        self.entries.iter().find(|e| e.estimator == estimator && e.n == n)
    }

    pub fn to_csv(&self) -> String {
        let k = self.k;
        let mut out = String::from("estimator,n,m_norm,m_norm_se");
        for i in 1..=k {
            let _ = write!(out, ",m{i}");
        }
        for i in 1..=k {
            let _ = write!(out, ",se{i}");
        }
        out.push_str(",replicates_used,failures,low_confidence\n");
        for e in &self.entries {
            let _ = write!(out, "{},{},{},{}", e.estimator, e.n, e.m_norm, e.m_norm_se);
            for v in e.m.iter().chain(&e.se) {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{},{}", e.replicates_used, e.failures, e.low_confidence);
        }
        out
    }
}

fn summarize(label: String, n: usize, replicates: usize, errors: Vec<Vec<f64>>, failures: usize, last: Option<String>) -> Result<MseEntry> {
    if failures > 0 && failures * 100 >= replicates {
        return Err(Error::TooManyFailures { failed: failures, replicates, last: last.unwrap_or_default() });
    }
    let k = errors.first().map_or(0, Vec::len);
    let mut m = Vec::with_capacity(k);
    let mut se = Vec::with_capacity(k);
    for i in 0..k {
        let col: Vec<f64> = errors.iter().map(|e| e[i]).collect();
        let (mi, si) = mean_and_se(&col);
        m.push(mi);
        se.push(si);
    }
    let m_norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    // gradient of ||m|| is m / ||m||; project each replicate onto it
    let proj: Vec<f64> = errors
        .iter()
        .map(|e| e.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>() / m_norm.max(f64::MIN_POSITIVE))
        .collect();
    let (_, m_norm_se) = mean_and_se(&proj);
    Ok(MseEntry {
        estimator: label,
        n,
        m,
        m_norm,
        se,
        m_norm_se,
        replicates_used: errors.len(),
        failures,
        low_confidence: replicates < LOW_CONFIDENCE_REPLICATES,
    })
}

/// Per-coordinate MSE of every estimator at every sample size.
pub fn run_mse_experiment(config: &ExperimentConfig) -> Result<MseReport> {
    config.validate()?;
    let law = CosineLaw::new(config.truth.clone(), config.k)?;
    let prepared = prepare(&config.estimators, config.k)?;
    let theta = config.theta_true.as_slice();
    let mut entries = Vec::new();
    for &n in &config.n_grid {
        let per_rep: Vec<Vec<Outcome<Vec<f64>>>> = (0..config.replicates)
            .into_par_iter()
            .map(|j| {
                let sample = law.sample(&config.theta_true, n, &replicate_streams(config.seed, n, j));
                match sample {
                    Ok(s) => run_estimators(&prepared, &s)
                        .into_iter()
                        .map(|r| {
                            r.map(|e| e.theta_hat.as_slice().iter().zip(theta).map(|(a, b)| (a - b).powi(2)).collect())
                        })
                        .collect(),
                    Err(e) => prepared.iter().map(|_| Err(e.to_string())).collect(),
                }
            })
            .collect();
        for (idx, p) in prepared.iter().enumerate() {
            let mut errors = Vec::with_capacity(config.replicates);
            let mut failures = 0;
            let mut last = None;
            for rep in &per_rep {
                match &rep[idx] {
                    Ok(e) => errors.push(e.clone()),
                    Err(err) => {
                        failures += 1;
                        last = Some(err.clone());
                    }
                }
            }
            entries.push(summarize(p.spec.label(), n, config.replicates, errors, failures, last)?);
        }
    }
    Ok(MseReport {
        truth: config.truth.to_string(),
        k: config.k,
        replicates: config.replicates,
        seed: config.seed,
        entries,
    })
}

/// Monte Carlo mean of P Delta(theta + n^{-1/2} t) - Delta(theta) + Gamma_{K,g} t, with P = I - theta theta'.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearityPoint {
    pub n: usize,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub bias_norm: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearityReport {
    pub truth: String,
    pub score: String,
    pub j_cross: f64,
    pub replicates: usize,
    pub points: Vec<LinearityPoint>,
    pub low_confidence: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn run_linearity_diagnostic(
    truth: &AngularModel,
    theta: &UnitVector,
    score: &ScoreFunction,
    t: &TangentVector,
    n_grid: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<LinearityReport> {
    if t.base() != theta {
        return Err(Error::InvalidParameter("perturbation must be tangent at theta".into()));
    }
    if replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    let k = theta.dim();
    let law = CosineLaw::new(truth.clone(), k)?;
    let j_cross = cross_info_law(score, &law)?;
    let gamma_t: Vec<f64> = (fisher_matrix(theta, j_cross) * DVector::from_column_slice(t.coords())).iter().copied().collect();
    let zero = t.coords().iter().all(|&c| c == 0.0);
    let mut points = Vec::new();
    for &n in n_grid {
        let moved = if zero {
            theta.clone()
        } else {
            let step = 1.0 / (n as f64).sqrt();
            normalize(&theta.as_slice().iter().zip(t.coords()).map(|(a, b)| a + step * b).collect::<Vec<_>>())?
        };
        let per_rep: Vec<Result<Vec<f64>>> = (0..replicates)
            .into_par_iter()
            .map(|j| {
                let s = law.sample(theta, n, &replicate_streams(seed, n, j))?;
                let d0 = rank_central_sequence(theta, score, &s)?;
                if zero {
                    return Ok(vec![0.0; k]);
                }
                // compare in the tangent space at theta, as local coordinates would;
                // otherwise d1 keeps an O(n^{-1/2}) component along theta
                let d1 = rank_central_sequence(&moved, score, &s)?;
                let along: f64 = d1.iter().zip(theta.as_slice()).map(|(a, b)| a * b).sum();
                Ok((0..k).map(|i| d1[i] - along * theta.as_slice()[i] - d0[i] + gamma_t[i]).collect())
            })
            .collect();
        let failures = per_rep.iter().filter(|r| r.is_err()).count();
        let ok: Vec<&Vec<f64>> = per_rep.iter().filter_map(|r| r.as_ref().ok()).collect();
        let mut mean = Vec::with_capacity(k);
        let mut se = Vec::with_capacity(k);
        for i in 0..k {
            let col: Vec<f64> = ok.iter().map(|v| v[i]).collect();
            let (m, s) = mean_and_se(&col);
            mean.push(m);
            se.push(s);
        }
        let bias_norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        points.push(LinearityPoint { n, mean, se, bias_norm, failures });
    }
    Ok(LinearityReport {
        truth: truth.to_string(),
        score: score.label(),
        j_cross,
        replicates,
        points,
        low_confidence: replicates < LOW_CONFIDENCE_REPLICATES,
    })
}

/// Empirical covariance of sqrt(n)(theta_hat - theta) against its asymptotic target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityReport {
    pub estimator: String,
    pub n: usize,
    pub replicates_used: usize,
    pub failures: usize,
    /// Row-major k x k.
    pub empirical_cov: Vec<f64>,
    /// Row-major k x k.
    pub target_cov: Vec<f64>,
    /// ||empirical - target||_F / ||target||_F.
    pub relative_frobenius: f64,
    /// theta' C theta of the empirical covariance.
    pub theta_variance: f64,
    pub low_confidence: bool,
}

pub fn run_normality_diagnostic(
    truth: &AngularModel,
    theta: &UnitVector,
    estimator: &EstimatorSpec,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<NormalityReport> {
    if replicates < 2 {
        return Err(Error::Config("need at least two replicates".into()));
    }
    let k = theta.dim();
    let law = CosineLaw::new(truth.clone(), k)?;
    let prepared = prepare(std::slice::from_ref(estimator), k)?;
    let factor = match (estimator, &prepared[0].score) {
        (EstimatorSpec::OnestepR { .. }, Some(score)) => r_avar_law(score, &law)?.value,
        (EstimatorSpec::Mean, _) => m_avar_law(&Classical::Mean.spec(), &law)?.value,
        _ => m_avar_law(&Classical::Median.spec(), &law)?.value,
    };
    let root_n = (n as f64).sqrt();
    let per_rep: Vec<Outcome<Vec<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|j| {
            let s = law.sample(theta, n, &replicate_streams(seed, n, j)).map_err(|e| e.to_string())?;
            let est = run_estimators(&prepared, &s).pop().expect("one estimator")?;
            Ok(est.theta_hat.as_slice().iter().zip(theta.as_slice()).map(|(a, b)| root_n * (a - b)).collect())
        })
        .collect();
    let failures = per_rep.iter().filter(|r| r.is_err()).count();
    let ok: Vec<&Vec<f64>> = per_rep.iter().filter_map(|r| r.as_ref().ok()).collect();
    let m = ok.len() as f64;
    let means: Vec<f64> = (0..k).map(|i| pairwise_sum(&ok.iter().map(|v| v[i]).collect::<Vec<_>>()) / m).collect();
    let mut cov = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let prods: Vec<f64> = ok.iter().map(|v| (v[a] - means[a]) * (v[b] - means[b])).collect();
            cov[(a, b)] = pairwise_sum(&prods) / (m - 1.0);
        }
    }
    let target = crate::score::projector(theta) * factor;
    let relative_frobenius = (&cov - &target).norm() / target.norm();
    let t = DVector::from_column_slice(theta.as_slice());
    let theta_variance = (t.transpose() * &cov * &t)[(0, 0)];
    let row_major = |mat: &DMatrix<f64>| mat.transpose().iter().copied().collect::<Vec<f64>>();
    Ok(NormalityReport {
        estimator: estimator.label(),
        n,
        replicates_used: ok.len(),
        failures,
        empirical_cov: row_major(&cov),
        target_cov: row_major(&target),
        relative_frobenius,
        theta_variance,
        low_confidence: replicates < LOW_CONFIDENCE_REPLICATES,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::score_from_model;

    fn config(replicates: usize) -> ExperimentConfig {
        ExperimentConfig {
            truth: "fvml:2".parse().unwrap(),
            k: 3,
            theta_true: normalize(&[1.0, 1.0, 0.0]).unwrap(),
            n_grid: vec![50],
            replicates,
            estimators: vec![
                EstimatorSpec::Mean,
                EstimatorSpec::Median,
                EstimatorSpec::OnestepR { score: "fvml:2".parse().unwrap(), preliminary: Classical::Mean },
            ],
            seed: 17,
        }
    }

    #[test]
    fn config_json_round_trip() {
        let c = config(10);
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains(r#""method":"onestep-r""#));
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        let mut bad = c.clone();
        bad.n_grid = vec![5];
        assert!(matches!(run_mse_experiment(&bad), Err(Error::Config(_))));
        bad.n_grid = vec![50];
        bad.replicates = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_replicate_is_its_squared_error() {
        let c = config(1);
        let r = run_mse_experiment(&c).unwrap();
        let law = CosineLaw::new(c.truth.clone(), 3).unwrap();
        let s = law.sample(&c.theta_true, 50, &replicate_streams(17, 50, 0)).unwrap();
        let mean = crate::estimators::spherical_mean(&s).unwrap().theta_hat;
        let e = r.entry("mean", 50).unwrap();
        for i in 0..3 {
            assert_eq!(e.m[i], (mean.as_slice()[i] - c.theta_true.as_slice()[i]).powi(2));
        }
        assert!(e.low_confidence);
        assert!((e.m_norm - e.m.iter().map(|x| x * x).sum::<f64>().sqrt()).abs() < 1e-12);
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let c = config(20);
        let a = run_mse_experiment(&c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_mse_experiment(&c)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_csv().lines().count(), 4);
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn linearity_zero_perturbation() {
        let th = normalize(&[0.0, 0.0, 1.0]).unwrap();
        let m: AngularModel = "fvml:2".parse().unwrap();
        let k = score_from_model(&m, 3).unwrap();
        let t = TangentVector::zero(th.clone());
        let r = run_linearity_diagnostic(&m, &th, &k, &t, &[50, 100], 5, 1).unwrap();
        for p in &r.points {
            assert!(p.mean.iter().all(|&x| x == 0.0));
        }
        assert!(r.low_confidence);
    }

    #[test]
    fn normality_small_run_flags_low_confidence() {
        let th = normalize(&[0.0, 1.0, 0.0]).unwrap();
        let m: AngularModel = "fvml:2".parse().unwrap();
        let r = run_normality_diagnostic(&m, &th, &EstimatorSpec::Mean, 100, 10, 3).unwrap();
        assert!(r.low_confidence);
        assert_eq!(r.empirical_cov.len(), 9);
        assert_eq!(r.replicates_used, 10);
    }
}
