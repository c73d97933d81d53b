//! Score functions on (0,1), information functionals and central sequences.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::angular::{AngularModel, CosineLaw, SampleSet};
use crate::error::{Error, Result};
use crate::geometry::{rank_cosines, sign_raw, UnitVector};
use crate::quadrature;

const GRID: usize = 4096;
/// Relative tolerance for u-domain integrals.
const U_REL_TOL: f64 = 1e-10;
/// Relative tolerance for t-domain cross-information integrals.
const T_REL_TOL: f64 = 1e-10;

/// Where a score function comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreDescriptor {
    ModelInduced { model: AngularModel, k: usize },
    Custom { name: String },
}

type ScoreFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A score K: [0,1] -> R used to weight cosine ranks.
#[derive(Clone)]
pub struct ScoreFunction {
    eval: ScoreFn,
    descriptor: ScoreDescriptor,
    law: Option<Arc<CosineLaw>>,
    rank_cache: Arc<Mutex<HashMap<usize, Arc<Vec<f64>>>>>,
    information: Arc<OnceLock<f64>>,
}

impl fmt::Debug for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScoreFunction").field("descriptor", &self.descriptor).finish_non_exhaustive()
    }
}

impl ScoreFunction {
    fn from_parts(eval: ScoreFn, descriptor: ScoreDescriptor, law: Option<Arc<CosineLaw>>) -> Self {
        Self { eval, descriptor, law, rank_cache: Arc::default(), information: Arc::default() }
    }

    /// A user-supplied score, checked for finiteness on a 4096-point grid of [0,1].
    pub fn custom<F>(name: impl Into<String>, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        for i in 0..GRID {
            let u = i as f64 / (GRID - 1) as f64;
            let v = f(u);
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("score is not finite at u = {u}")));
            }
        }
        Ok(Self::from_parts(Arc::new(f), ScoreDescriptor::Custom { name: name.into() }, None))
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::custom(format!("const({c})"), move |_| c)
    }

    /// c K for c > 0.
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.eval.clone();
        Self::from_parts(
            Arc::new(move |u| c * inner(u)),
            ScoreDescriptor::Custom { name: format!("{c}*{}", self.label()) },
            None,
        )
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.eval)(u)
    }

    pub fn descriptor(&self) -> &ScoreDescriptor {
        &self.descriptor
    }

    /// The cosine law behind a model-induced score.
    pub fn law(&self) -> Option<&CosineLaw> {
        self.law.as_deref()
    }

    pub fn label(&self) -> String {
        match &self.descriptor {
            ScoreDescriptor::ModelInduced { model, .. } => format!("K[{model}]"),
            ScoreDescriptor::Custom { name } => name.clone(),
        }
    }

    /// J_k(K), computed once.
    pub fn information(&self) -> Result<f64> {
        if let Some(&j) = self.information.get() {
            return Ok(j);
        }
        let j = info_score(self)?;
        Ok(*self.information.get_or_init(|| j))
    }

    /// K(r/(n+1)) for r = 1..n, cached per n.
    pub fn rank_scores(&self, n: usize) -> Arc<Vec<f64>> {
        if let Some(v) = self.rank_cache.lock().expect("rank cache poisoned").get(&n) {
            return v.clone();
        }
        let v: Arc<Vec<f64>> = Arc::new((1..=n).map(|r| self.eval(r as f64 / (n + 1) as f64)).collect());
        self.rank_cache.lock().expect("rank cache poisoned").insert(n, v.clone());
        v
    }
}

/// The optimal score K_f(u) = phi_f(F^{-1}(u)) sqrt(1 - F^{-1}(u)^2) of a model.
pub fn score_from_model(model: &AngularModel, k: usize) -> Result<ScoreFunction> {
    let law = Arc::new(CosineLaw::new(model.clone(), k)?);
    Ok(score_from_law(law))
}

/// Like [`score_from_model`], reusing an existing cosine law.
pub fn score_from_law(law: Arc<CosineLaw>) -> ScoreFunction {
    let inner = law.clone();
    let descriptor = ScoreDescriptor::ModelInduced { model: law.model().clone(), k: law.k() };
    ScoreFunction::from_parts(
        Arc::new(move |u| inner.model().weighted_score(inner.quantile(u))),
        descriptor,
        Some(law),
    )
}

/// J_k(f) = E[phi^2(t)(1 - t^2)].
pub fn info_angular(model: &AngularModel, k: usize) -> Result<f64> {
    info_angular_law(&CosineLaw::new(model.clone(), k)?)
}

pub fn info_angular_law(law: &CosineLaw) -> Result<f64> {
    let m = law.model();
    Ok(law.expect(|t| m.weighted_score(t).powi(2))?.value)
}

/// J_k(K) = int_0^1 K^2(u) du.
pub fn info_score(score: &ScoreFunction) -> Result<f64> {
    Ok(quadrature::integrate(|u| score.eval(u).powi(2), 0.0, 1.0, U_REL_TOL, 1e-15)?.value)
}

/// J_k(K, g) = E_g[K(G(t)) phi_g(t) sqrt(1 - t^2)], integrated over the cosine.
pub fn cross_info(score: &ScoreFunction, truth: &AngularModel, k: usize) -> Result<f64> {
    cross_info_law(score, &CosineLaw::new(truth.clone(), k)?)
}

pub fn cross_info_law(score: &ScoreFunction, truth: &CosineLaw) -> Result<f64> {
    let m = truth.model();
    let q = truth.expect_with_tol(|t| score.eval(truth.cdf(t)) * m.weighted_score(t), T_REL_TOL)?;
    Ok(q.value)
}

/// J_k(K, g) as int_0^1 K(u) K_g(u) du; a cross-check of [`cross_info`].
pub fn cross_info_u_domain(score: &ScoreFunction, truth: &AngularModel, k: usize) -> Result<f64> {
    let kg = score_from_model(truth, k)?;
    Ok(quadrature::integrate(|u| score.eval(u) * kg.eval(u), 0.0, 1.0, U_REL_TOL, 1e-15)?.value)
}

/// Information functionals of a score against a truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformationReport {
    /// J_k(g)
    pub j_angular: f64,
    /// J_k(K)
    pub j_score: f64,
    /// J_k(K, g)
    pub j_cross: f64,
    /// Combined tolerance implied by the quadrature settings.
    pub quadrature_error: f64,
}

impl InformationReport {
    /// Cauchy-Schwarz: j_cross^2 <= j_score j_angular.
    pub fn cauchy_schwarz_holds(&self) -> bool {
        self.j_cross.powi(2) <= self.j_score * self.j_angular + self.quadrature_error
    }
}

pub fn information_report(score: &ScoreFunction, truth: &AngularModel, k: usize) -> Result<InformationReport> {
    let law = CosineLaw::new(truth.clone(), k)?;
    let j_angular = info_angular_law(&law)?;
    let j_score = info_score(score)?;
    let j_cross = cross_info_law(score, &law)?;
    let quadrature_error = 1e-8 * (j_score * j_angular).max(1.0);
    Ok(InformationReport { j_angular, j_score, j_cross, quadrature_error })
}

/// What to do with observations at +-theta, whose sign is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoleSigns {
    /// Fail with `DegenerateSign`.
    Error,
    /// Give them a zero sign, the usual spatial-sign convention.
    Zero,
}

fn accumulate(
    theta: &UnitVector,
    sample: &SampleSet,
    poles: PoleSigns,
    weight: impl Fn(usize, f64) -> f64,
) -> Result<Vec<f64>> {
    if theta.dim() != sample.k() {
        return Err(Error::DimensionMismatch { expected: sample.k(), found: theta.dim() });
    }
    let th = theta.as_slice();
    let mut acc = vec![0.0; th.len()];
    for (i, x) in sample.iter().enumerate() {
        let s = match (sign_raw(th, x.as_slice()), poles) {
            (Ok(s), _) => s,
            (Err(Error::DegenerateSign), PoleSigns::Zero) => continue,
            (Err(e), _) => return Err(e),
        };
        let w = weight(i, x.dot(theta));
        for (a, si) in acc.iter_mut().zip(s.as_slice()) {
            *a += w * si;
        }
    }
    let scale = (sample.len() as f64).sqrt();
    Ok(acc.into_iter().map(|a| a / scale).collect())
}

/// n^{-1/2} sum phi_f(t_i) sqrt(1 - t_i^2) S_theta(X_i).
pub fn parametric_central_sequence(theta: &UnitVector, model: &AngularModel, sample: &SampleSet) -> Result<Vec<f64>> {
    accumulate(theta, sample, PoleSigns::Error, |_, t| model.weighted_score(t))
}

/// n^{-1/2} sum K(R_i/(n+1)) S_theta(X_i), with R_i the rank of X_i' theta.
pub fn rank_central_sequence(theta: &UnitVector, score: &ScoreFunction, sample: &SampleSet) -> Result<Vec<f64>> {
    rank_central_sequence_with(theta, score, sample, PoleSigns::Error)
}

/// [`rank_central_sequence`] with an explicit policy for observations at +-theta.
pub fn rank_central_sequence_with(
    theta: &UnitVector,
    score: &ScoreFunction,
    sample: &SampleSet,
    poles: PoleSigns,
) -> Result<Vec<f64>> {
    if theta.dim() != sample.k() {
        return Err(Error::DimensionMismatch { expected: sample.k(), found: theta.dim() });
    }
    let ranks = rank_cosines(theta, sample);
    let scores = score.rank_scores(sample.len());
    accumulate(theta, sample, poles, |i, _| scores[ranks[i] - 1])
}

/// n^{-1/2} sum K(G(t_i)) S_theta(X_i): the score-based statistic that the
/// rank version approximates when the data come from the law G.
pub fn score_central_sequence(
    theta: &UnitVector,
    score: &ScoreFunction,
    truth: &CosineLaw,
    sample: &SampleSet,
) -> Result<Vec<f64>> {
    accumulate(theta, sample, PoleSigns::Error, |_, t| score.eval(truth.cdf(t)))
}

/// Gamma = (j/(k-1)) (I - theta theta').
pub fn fisher_matrix(theta: &UnitVector, j: f64) -> DMatrix<f64> {
    let k = theta.dim();
    projector(theta) * (j / (k as f64 - 1.0))
}

/// Moore-Penrose inverse of [`fisher_matrix`]: ((k-1)/j) (I - theta theta').
pub fn fisher_pseudo_inverse(theta: &UnitVector, j: f64) -> DMatrix<f64> {
    let k = theta.dim();
    if j == 0.0 {
        return DMatrix::zeros(k, k);
    }
    projector(theta) * ((k as f64 - 1.0) / j)
}

/// I - theta theta'.
pub fn projector(theta: &UnitVector) -> DMatrix<f64> {
    let k = theta.dim();
    let t = nalgebra::DVector::from_column_slice(theta.as_slice());
    DMatrix::identity(k, k) - &t * t.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::sample;
    use crate::geometry::normalize;

    fn fvml2() -> AngularModel {
        AngularModel::fvml(2.0).unwrap()
    }

    #[test]
    fn model_score_examples() {
        let k = score_from_model(&AngularModel::lin(2.0).unwrap(), 3).unwrap();
        assert!((k.eval(0.375) - 0.5).abs() < 1e-10);
        // logistic score is finite at both ends
        let l = score_from_model(&AngularModel::logis(2.0, 1.0).unwrap(), 3).unwrap();
        let e = 2.0 * (-std::f64::consts::PI).exp();
        assert!((l.eval(0.0) - (1.0 - e) / (1.0 + e)).abs() < 1e-10);
        assert!((l.eval(1.0) - (1.0 - 2.0) / 3.0).abs() < 1e-10);
        assert!((l.eval(1.0 - 1e-9) - l.eval(1.0)).abs() < 1e-3);
        // FVML: K(u) = kappa sqrt(1 - q(u)^2)
        let f = score_from_model(&fvml2(), 3).unwrap();
        let law = f.law().unwrap();
        let q = law.quantile(0.3);
        assert!((f.eval(0.3) - 2.0 * (1.0 - q * q).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn info_angular_fvml_matches_moments() {
        let law = CosineLaw::new(fvml2(), 3).unwrap();
        let m2 = law.expect(|t| t * t).unwrap().value;
        // independent oracle: E[t^2] for k=3 FVML in closed form, 1 - 2A(kappa)/kappa
        let a = 1.0 / 2f64.tanh() - 0.5;
        assert!((m2 - (1.0 - 2.0 * a / 2.0)).abs() < 1e-12);
        let j = info_angular(&fvml2(), 3).unwrap();
        assert!((j - 4.0 * (1.0 - m2)).abs() < 1e-10);
        assert!((j - 4.0 * a).abs() < 1e-10);
    }

    #[test]
    fn info_score_examples() {
        assert!((info_score(&ScoreFunction::constant(3.0).unwrap()).unwrap() - 9.0).abs() < 1e-12);
        let id = ScoreFunction::custom("u", |u| u).unwrap();
        assert!((info_score(&id).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn change_of_variables_identity() {
        for m in [fvml2(), AngularModel::lin(2.0).unwrap(), AngularModel::logis(1.0, 1.0).unwrap()] {
            let ja = info_angular(&m, 3).unwrap();
            let k = score_from_model(&m, 3).unwrap();
            let js = info_score(&k).unwrap();
            let jc = cross_info(&k, &m, 3).unwrap();
            assert!((ja - js).abs() < 1e-6, "{m}: {ja} vs {js}");
            assert!((ja - jc).abs() < 1e-6, "{m}: {ja} vs {jc}");
        }
    }

    #[test]
    fn cross_info_examples() {
        let zero = ScoreFunction::constant(0.0).unwrap();
        assert_eq!(cross_info(&zero, &fvml2(), 3).unwrap(), 0.0);
        let k = score_from_model(&fvml2(), 3).unwrap();
        let lin = AngularModel::lin(2.0).unwrap();
        let t_dom = cross_info(&k, &lin, 3).unwrap();
        let u_dom = cross_info_u_domain(&k, &lin, 3).unwrap();
        assert!((t_dom - u_dom).abs() < 1e-6, "{t_dom} vs {u_dom}");
        let rep = information_report(&k, &lin, 3).unwrap();
        assert!(rep.cauchy_schwarz_holds());
    }

    #[test]
    fn custom_scores_are_checked() {
        assert!(ScoreFunction::custom("pole", |u| 1.0 / u).is_err());
        let s = ScoreFunction::custom("u", |u| u).unwrap();
        assert_eq!(&*s.rank_scores(3), &[0.25, 0.5, 0.75]);
        assert!(std::sync::Arc::ptr_eq(&s.rank_scores(3), &s.rank_scores(3)));
    }

    #[test]
    fn central_sequence_examples() {
        let theta = UnitVector::basis(3, 0).unwrap();
        let x = normalize(&[0.0, 0.6, 0.8]).unwrap();
        let one = SampleSet::new(vec![x.clone()]).unwrap();
        let d = parametric_central_sequence(&theta, &AngularModel::fvml(3.0).unwrap(), &one).unwrap();
        for (a, b) in d.iter().zip(x.as_slice()) {
            assert!((a - 3.0 * b).abs() < 1e-15);
        }
        let k = ScoreFunction::custom("u", |u| u).unwrap();
        let r = rank_central_sequence(&theta, &k, &one).unwrap();
        for (a, b) in r.iter().zip(x.as_slice()) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
        let at_pole = SampleSet::new(vec![theta.clone()]).unwrap();
        assert!(matches!(rank_central_sequence(&theta, &k, &at_pole), Err(Error::DegenerateSign)));
        let zero = rank_central_sequence_with(&theta, &k, &at_pole, PoleSigns::Zero).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn central_sequences_are_tangent() {
        let theta = normalize(&[1.0, -2.0, 0.5]).unwrap();
        let s = sample(&fvml2(), 3, &theta, 500, 3).unwrap();
        let k = score_from_model(&fvml2(), 3).unwrap();
        for d in [
            rank_central_sequence(&theta, &k, &s).unwrap(),
            parametric_central_sequence(&theta, &fvml2(), &s).unwrap(),
        ] {
            let c: f64 = d.iter().zip(theta.as_slice()).map(|(a, b)| a * b).sum();
            assert!(c.abs() < 1e-9);
        }
    }

    #[test]
    fn fisher_matrix_examples() {
        let theta = UnitVector::basis(3, 0).unwrap();
        let g = fisher_matrix(&theta, 2.0);
        assert_eq!(g, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 1.0, 1.0])));
        let theta = normalize(&[0.3, -0.4, 0.5]).unwrap();
        let g = fisher_matrix(&theta, 1.7);
        let t = nalgebra::DVector::from_column_slice(theta.as_slice());
        assert!((&g * &t).norm() < 1e-15);
        assert!((g.trace() - 1.7).abs() < 1e-14);
        let p = fisher_pseudo_inverse(&theta, 1.7);
        assert!((&g * &p * &g - &g).norm() < 1e-12);
    }
}
