//! Spherical mean, spherical median, generic M-estimators and the one-step
//! R-estimator.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::angular::SampleSet;
use crate::error::{Error, Result};
use crate::geometry::{dot, norm, normalize, UnitVector};
use crate::score::{rank_central_sequence_with, PoleSigns, ScoreFunction};

/// Largest weight the median is allowed to give a single observation.
const PSI_CAP: f64 = 1e8;
const MAX_ITER: usize = 500;
const RESIDUAL_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 40;
/// Relative width at which the beta bisection stops.
const BETA_REL_TOL: f64 = 1e-12;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// An M-estimator given by its weight psi(t) = -d rho(t)/dt.
#[derive(Clone)]
pub struct MEstimatorSpec {
    name: String,
    psi: RealFn,
    /// psi(t) sqrt(1 - t^2), in a form that is finite at t = +-1.
    psi_root: RealFn,
    /// rho(t), used for step control when known.
    rho: Option<RealFn>,
    /// The objective is a sum of arc lengths, minimized possibly at a data point.
    arc_length: bool,
}

impl fmt::Debug for MEstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MEstimatorSpec").field("name", &self.name).finish_non_exhaustive()
    }
}

impl MEstimatorSpec {
    /// A generic weight; must be finite on (-1 + 1e-6, 1 - 1e-6).
    pub fn new<F>(name: impl Into<String>, psi: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        for i in 0..=1000 {
            let t = (-1.0 + 1e-6) + i as f64 * (2.0 - 2e-6) / 1000.0;
            if !psi(t).is_finite() {
                return Err(Error::InvalidParameter(format!("psi is not finite at t = {t}")));
            }
        }
        let psi: RealFn = Arc::new(psi);
        let inner = psi.clone();
        Ok(Self {
            name: name.into(),
            psi,
            psi_root: Arc::new(move |t: f64| inner(t) * (1.0 - t * t).max(0.0).sqrt()),
            rho: None,
            arc_length: false,
        })
    }

    /// psi = 2: the spherical mean.
    pub fn mean() -> Self {
        Self {
            name: "mean".into(),
            psi: Arc::new(|_| 2.0),
            psi_root: Arc::new(|t: f64| 2.0 * (1.0 - t * t).max(0.0).sqrt()),
            rho: Some(Arc::new(|t| -2.0 * t)),
            arc_length: false,
        }
    }

    /// psi = (1 - t^2)^{-1/2}: the spherical median.
    pub fn median() -> Self {
        Self {
            name: "median".into(),
            psi: Arc::new(|t: f64| (1.0 / (1.0 - t * t).max(0.0).sqrt()).min(PSI_CAP)),
            psi_root: Arc::new(|_| 1.0),
            rho: Some(Arc::new(|t: f64| t.clamp(-1.0, 1.0).acos())),
            arc_length: true,
        }
    }

    /// c psi, which defines the same estimator.
    pub fn scaled(&self, c: f64) -> Self {
        let (p, r) = (self.psi.clone(), self.psi_root.clone());
        Self {
            name: format!("{c}*{}", self.name),
            psi: Arc::new(move |t| c * p(t)),
            psi_root: Arc::new(move |t| c * r(t)),
            rho: self.rho.clone().map(|f| -> RealFn { Arc::new(move |t| c * f(t)) }),
            arc_length: self.arc_length,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn psi(&self, t: f64) -> f64 {
        (self.psi)(t)
    }

    pub fn psi_root(&self, t: f64) -> f64 {
        (self.psi_root)(t)
    }

    fn objective(&self, theta: &[f64], sample: &SampleSet) -> Option<f64> {
        let rho = self.rho.as_ref()?;
        Some(sample.iter().map(|x| rho(dot(theta, x.as_slice()))).sum())
    }
}

/// The two classical M-estimators, used as preliminaries and as ARE references.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classical {
    Mean,
    Median,
}

impl Classical {
    pub fn spec(self) -> MEstimatorSpec {
        match self {
            Self::Mean => MEstimatorSpec::mean(),
            Self::Median => MEstimatorSpec::median(),
        }
    }

    pub fn estimate(self, sample: &SampleSet) -> Result<EstimateResult> {
        match self {
            Self::Mean => spherical_mean(sample),
            Self::Median => spherical_median(sample),
        }
    }
}

impl fmt::Display for Classical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Median => "median",
        })
    }
}

impl FromStr for Classical {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Self::Mean),
            "median" => Ok(Self::Median),
            other => Err(Error::InvalidParameter(format!("expected mean or median, got '{other}'"))),
        }
    }
}

/// An estimate of theta with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub theta_hat: UnitVector,
    pub method: String,
    pub preliminary: Option<UnitVector>,
    pub beta_hat: Option<f64>,
    pub j_cross_hat: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl EstimateResult {
    fn plain(theta_hat: UnitVector, method: &str, iterations: usize, converged: bool) -> Self {
        Self {
            theta_hat,
            method: method.into(),
            preliminary: None,
            beta_hat: None,
            j_cross_hat: None,
            iterations,
            converged,
        }
    }
}

/// The normalized sample mean.
pub fn spherical_mean(sample: &SampleSet) -> Result<EstimateResult> {
    let r = sample.resultant();
    if norm(&r) <= 1e-12 * sample.len() as f64 {
        return Err(Error::DegenerateSample("resultant vanishes".into()));
    }
    Ok(EstimateResult::plain(normalize(&r)?, "mean", 0, true))
}

/// Minimizer of the summed arc lengths to the observations.
pub fn spherical_median(sample: &SampleSet) -> Result<EstimateResult> {
    let init = match spherical_mean(sample) {
        Ok(m) => m.theta_hat,
        Err(_) => sample.vectors()[0].clone(),
    };
    let mut r = m_estimate(&MEstimatorSpec::median(), sample, &init)?;
    r.method = "median".into();
    Ok(r)
}

/// sum psi(t_i) X_i at theta and its tangent part divided by n.
fn weighted_sum(spec: &MEstimatorSpec, theta: &[f64], sample: &SampleSet) -> (Vec<f64>, f64) {
    let mut g = vec![0.0; theta.len()];
    let mut tangent = vec![0.0; theta.len()];
    for x in sample.iter() {
        let xs = x.as_slice();
        let t = dot(theta, xs);
        let w = spec.psi(t);
        for j in 0..g.len() {
            g[j] += w * xs[j];
            tangent[j] += w * (xs[j] - t * theta[j]);
        }
    }
    let residual = norm(&tangent) / sample.len() as f64;
    (g, residual)
}

/// True when theta sits on data points and the remaining signs are balanced
/// by them: the subgradient optimality condition of the median objective.
fn median_kink_optimal(theta: &[f64], sample: &SampleSet) -> bool {
    let mut at_point = 0usize;
    let mut signs = vec![0.0; theta.len()];
    for x in sample.iter() {
        let xs = x.as_slice();
        let t = dot(theta, xs);
        let tangent: Vec<f64> = xs.iter().zip(theta).map(|(a, b)| a - t * b).collect();
        let r = norm(&tangent);
        if r < 1e-7 && t > 0.0 {
            at_point += 1;
        } else if r > 0.0 {
            for (s, v) in signs.iter_mut().zip(&tangent) {
                *s += v / r;
            }
        }
    }
    at_point > 0 && norm(&signs) <= at_point as f64 + 1e-9
}

/// The observation closest to `theta`, if it is within 1e-2 rad and satisfies
/// the vertex optimality condition. Weiszfeld steps approach such minima only
/// sublinearly.
fn optimal_vertex_near(theta: &[f64], sample: &SampleSet) -> Option<UnitVector> {
    let nearest = sample.iter().max_by(|a, b| dot(theta, a.as_slice()).total_cmp(&dot(theta, b.as_slice())))?;
    if dot(theta, nearest.as_slice()) < (1e-2f64).cos() {
        return None;
    }
    median_kink_optimal(nearest.as_slice(), sample).then(|| nearest.clone())
}

/// Fixed-point iteration theta <- normalize(sum psi(X_i'theta) X_i), with step
/// halving whenever the objective is known and fails to decrease.
pub fn m_estimate(spec: &MEstimatorSpec, sample: &SampleSet, init: &UnitVector) -> Result<EstimateResult> {
    if init.dim() != sample.k() {
        return Err(Error::DimensionMismatch { expected: sample.k(), found: init.dim() });
    }
    let mut theta = init.as_slice().to_vec();
    let mut obj = spec.objective(&theta, sample);
    for iter in 0..MAX_ITER {
        let (g, residual) = weighted_sum(spec, &theta, sample);
        if residual <= RESIDUAL_TOL {
            return Ok(EstimateResult::plain(UnitVector::from_raw(theta), spec.name(), iter, true));
        }
        if spec.arc_length {
            if let Some(x) = optimal_vertex_near(&theta, sample) {
                return Ok(EstimateResult::plain(x, spec.name(), iter, true));
            }
        }
        let target = normalize(&g)?.into_vec();
        let mut next = target.clone();
        if let Some(current) = obj {
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let cand: Vec<f64> = theta.iter().zip(&target).map(|(a, b)| a + lambda * (b - a)).collect();
                if let Ok(c) = normalize(&cand) {
                    let c = c.into_vec();
                    let v = spec.objective(&c, sample).expect("objective known");
                    if v <= current + 1e-13 * (1.0 + current.abs()) {
                        accepted = Some((c, v));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            match accepted {
                Some((c, v)) => {
                    next = c;
                    obj = Some(v);
                }
                None => {
                    // no descent direction left at this precision
                    let converged = spec.arc_length && median_kink_optimal(&theta, sample);
                    return Ok(EstimateResult::plain(UnitVector::from_raw(theta), spec.name(), iter, converged));
                }
            }
        }
        if next == theta {
            let converged = spec.arc_length && median_kink_optimal(&theta, sample);
            return Ok(EstimateResult::plain(UnitVector::from_raw(theta), spec.name(), iter, converged));
        }
        theta = next;
    }
    let (_, residual) = weighted_sum(spec, &theta, sample);
    let converged = residual <= RESIDUAL_TOL || (spec.arc_length && median_kink_optimal(&theta, sample));
    Ok(EstimateResult::plain(UnitVector::from_raw(theta), spec.name(), MAX_ITER, converged))
}

/// Quantities shared by every evaluation of h at one preliminary estimate.
struct HSearch<'a> {
    theta: &'a UnitVector,
    score: &'a ScoreFunction,
    sample: &'a SampleSet,
    delta: Vec<f64>,
    j_score: f64,
}

impl<'a> HSearch<'a> {
    fn new(theta: &'a UnitVector, score: &'a ScoreFunction, sample: &'a SampleSet) -> Result<Self> {
        let delta = rank_central_sequence_with(theta, score, sample, PoleSigns::Zero)?;
        let size = norm(&delta);
        if size < 1e-12 {
            return Err(Error::DegenerateCentralSequence(size));
        }
        let j_score = score.information()?;
        Ok(Self { theta, score, sample, delta, j_score })
    }

    fn k1(&self) -> f64 {
        self.theta.dim() as f64 - 1.0
    }

    /// theta + n^{-1/2} beta (k-1) Delta, normalized.
    fn moved(&self, beta: f64) -> Result<UnitVector> {
        let step = beta * self.k1() / (self.sample.len() as f64).sqrt();
        let v: Vec<f64> = self.theta.as_slice().iter().zip(&self.delta).map(|(t, d)| t + step * d).collect();
        normalize(&v)
    }

    fn h(&self, beta: f64) -> Result<f64> {
        let d = rank_central_sequence_with(&self.moved(beta)?, self.score, self.sample, PoleSigns::Zero)?;
        Ok(self.k1() / self.j_score * dot(&self.delta, &d))
    }
}

/// h(beta) = ((k-1)/J(K)) Delta(theta)' Delta(theta(beta)).
///
/// Inside the one-step machinery an observation that coincides with the
/// current location (typical when the median preliminary sits on a data
/// point) contributes a zero sign.
pub fn h_function(beta: f64, theta_pre: &UnitVector, score: &ScoreFunction, sample: &SampleSet) -> Result<f64> {
    HSearch::new(theta_pre, score, sample)?.h(beta)
}

/// Smallest positive beta with h(beta) < 0 on a doubling grid, refined by
/// bisection. Returns (beta_hat, 1/beta_hat).
pub fn estimate_cross_info(theta_pre: &UnitVector, score: &ScoreFunction, sample: &SampleSet) -> Result<(f64, f64)> {
    let search = HSearch::new(theta_pre, score, sample)?;
    locate_beta(&search)
}

fn locate_beta(search: &HSearch<'_>) -> Result<(f64, f64)> {
    // beta_hat estimates 1/J(K,g) and scales like 1/sqrt(J(K)) under K -> cK
    let unit = 1.0 / search.j_score.sqrt();
    let beta_min = 1e-4 * unit;
    let beta_max = 1e4 * unit;
    let mut lo = 0.0;
    let mut hi = beta_min;
    loop {
        if search.h(hi)? < 0.0 {
            break;
        }
        if hi >= beta_max {
            return Err(Error::NoSignChange { beta_max });
        }
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > BETA_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if search.h(mid)? < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((hi, 1.0 / hi))
}

/// theta_pre + n^{-1/2} (k-1) beta_hat Delta, normalized.
pub fn one_step_r_estimate(sample: &SampleSet, score: &ScoreFunction, preliminary: &EstimateResult) -> Result<EstimateResult> {
    let theta = &preliminary.theta_hat;
    let base = EstimateResult {
        theta_hat: theta.clone(),
        method: "onestep-r".into(),
        preliminary: Some(theta.clone()),
        beta_hat: None,
        j_cross_hat: None,
        iterations: 0,
        converged: true,
    };
    let search = match HSearch::new(theta, score, sample) {
        Ok(s) => s,
        Err(Error::DegenerateCentralSequence(_)) => return Ok(base),
        Err(e) => return Err(e),
    };
    let (beta, j) = locate_beta(&search)?;
    Ok(EstimateResult {
        theta_hat: search.moved(beta)?,
        beta_hat: Some(beta),
        j_cross_hat: Some(j),
        iterations: 1,
        ..base
    })
}
