//! Asymptotic variance factors and asymptotic relative efficiencies.
//!
//! Both M- and R-estimators of theta have asymptotic covariance
//! rho (I - theta theta') / n; the factor rho is what gets compared here.
//! `are(m, r) = rho_M / rho_R`, so entries above 1 favor the R-estimator.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::angular::{AngularModel, CosineLaw};
use crate::error::{Error, Result};
use crate::estimators::{Classical, MEstimatorSpec};
use crate::score::{cross_info_law, info_angular_law, score_from_law, ScoreFunction};

/// Relative tolerance for the M-estimator moment integrals.
const REL_TOL: f64 = 1e-11;

/// The scalar rho in the asymptotic covariance rho (I - theta theta').
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvarFactor {
    pub value: f64,
    pub estimator: String,
    pub truth: AngularModel,
    pub k: usize,
}

/// (k-1) E[psi^2 (1-t^2)] / E^2[psi phi_g (1-t^2)] under the truth g.
pub fn m_avar(spec: &MEstimatorSpec, truth: &AngularModel, k: usize) -> Result<AvarFactor> {
    m_avar_law(spec, &CosineLaw::new(truth.clone(), k)?)
}

pub fn m_avar_law(spec: &MEstimatorSpec, law: &CosineLaw) -> Result<AvarFactor> {
    let g = law.model();
    let num = law.expect_with_tol(|t| spec.psi_root(t).powi(2), REL_TOL)?.value;
    let den = law.expect_with_tol(|t| spec.psi_root(t) * g.weighted_score(t), REL_TOL)?.value;
    if den.abs() <= 1e-14 * num.sqrt() {
        return Err(Error::ZeroCrossInfo);
    }
    Ok(AvarFactor {
        value: (law.k() as f64 - 1.0) * num / (den * den),
        estimator: spec.name().to_string(),
        truth: g.clone(),
        k: law.k(),
    })
}

/// (k-1) J_k(K) / J_k(K, g)^2.
pub fn r_avar(score: &ScoreFunction, truth: &AngularModel, k: usize) -> Result<AvarFactor> {
    r_avar_law(score, &CosineLaw::new(truth.clone(), k)?)
}

pub fn r_avar_law(score: &ScoreFunction, law: &CosineLaw) -> Result<AvarFactor> {
    let j = score.information()?;
    let jc = cross_info_law(score, law)?;
    if jc.abs() <= 1e-10 * j.sqrt() {
        return Err(Error::ZeroCrossInfo);
    }
    Ok(AvarFactor {
        value: (law.k() as f64 - 1.0) * j / (jc * jc),
        estimator: score.label(),
        truth: law.model().clone(),
        k: law.k(),
    })
}

/// (k-1) / J_k(g): the smallest achievable factor under g.
pub fn efficiency_bound(truth: &AngularModel, k: usize) -> Result<f64> {
    let law = CosineLaw::new(truth.clone(), k)?;
    Ok((k as f64 - 1.0) / info_angular_law(&law)?)
}

/// num.value / den.value for factors computed under the same truth.
pub fn are(num: &AvarFactor, den: &AvarFactor) -> Result<f64> {
    if num.truth != den.truth || num.k != den.k {
        return Err(Error::MixedTruth(
            format!("{} (k={})", num.truth, num.k),
            format!("{} (k={})", den.truth, den.k),
        ));
    }
    Ok(num.value / den.value)
}

/// AREs of model-score R-estimators against a classical reference.
#[derive(Debug, Clone, Serialize)]
pub struct AreTable {
    pub rows: Vec<AngularModel>,
    pub cols: Vec<AngularModel>,
    /// entries[i][j]: R-estimator with the score of cols[j] under rows[i].
    pub entries: Vec<Vec<f64>>,
    pub reference: Classical,
    pub k: usize,
}

impl AreTable {
    pub fn get(&self, row: &AngularModel, col: &AngularModel) -> Option<f64> {
        let i = self.rows.iter().position(|r| r == row)?;
        let j = self.cols.iter().position(|c| c == col)?;
        Some(self.entries[i][j])
    }

    /// Header `truth,<score>,...`, one row per truth, full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("truth");
        for c in &self.cols {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (r, row) in self.rows.iter().zip(&self.entries) {
            out.push_str(&r.to_string());
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Aligned text with four decimals.
    pub fn to_text(&self) -> String {
        let first = self.rows.iter().map(|r| r.to_string().len()).max().unwrap_or(5).max(5);
        let width = self.cols.iter().map(|c| c.to_string().len()).max().unwrap_or(6).max(6) + 2;
        let mut out = format!("{:<first$}", "truth");
        for c in &self.cols {
            let _ = write!(out, "{:>width$}", c.to_string());
        }
        out.push('\n');
        for (r, row) in self.rows.iter().zip(&self.entries) {
            let _ = write!(out, "{:<first$}", r.to_string());
            for v in row {
                let _ = write!(out, "{v:>width$.4}");
            }
            out.push('\n');
        }
        out
    }
}

/// The truths of the standard comparison grid.
pub fn standard_truths() -> Vec<AngularModel> {
    [
        "fvml:1", "fvml:2", "fvml:6", "lin:2", "lin:4", "log:2.5", "log:4", "logis:1,1", "logis:2,1", "sq:1.1",
    ]
    .iter()
    .map(|s| s.parse().expect("valid model"))
    .collect()
}

/// The scores of the standard comparison grid.
pub fn standard_scores() -> Vec<AngularModel> {
    ["fvml:2", "fvml:6", "lin:2", "lin:4", "log:2.5", "logis:1,1", "logis:2,1", "sq:1.1"]
        .iter()
        .map(|s| s.parse().expect("valid model"))
        .collect()
}

/// ARE of every (truth, score) pair against the reference M-estimator.
pub fn are_table(truths: &[AngularModel], scores: &[AngularModel], reference: Classical, k: usize) -> Result<AreTable> {
    let laws: Vec<Arc<CosineLaw>> = truths
        .par_iter()
        .map(|m| CosineLaw::new(m.clone(), k).map(Arc::new))
        .collect::<Result<_>>()?;
    let score_fns: Vec<ScoreFunction> = scores
        .par_iter()
        .map(|m| {
            let s = score_from_law(Arc::new(CosineLaw::new(m.clone(), k)?));
            s.information()?;
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let spec = reference.spec();
    let m_factors: Vec<AvarFactor> = laws.par_iter().map(|l| m_avar_law(&spec, l)).collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> = (0..truths.len()).flat_map(|i| (0..scores.len()).map(move |j| (i, j))).collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let r = r_avar_law(&score_fns[j], &laws[i])?;
            are(&m_factors[i], &r)
        })
        .collect::<Result<_>>()?;
    let entries = values.chunks(scores.len().max(1)).map(<[f64]>::to_vec).collect();
    Ok(AreTable { rows: truths.to_vec(), cols: scores.to_vec(), entries, reference, k })
}
