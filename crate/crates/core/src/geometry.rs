//! Unit-sphere primitives: unit and tangent vectors, multivariate signs,
//! the spherical-coordinate chart, rotations and cosine ranks.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::angular::SampleSet;
use crate::error::{Error, Result};

/// Tolerance on unit norms and orthogonality.
pub const ORTHO_TOL: f64 = 1e-9;
/// Deviations above this are rejected instead of repaired.
pub const REPAIR_TOL: f64 = 1e-6;

const ZERO_NORM: f64 = 1e-12;
const SIGN_FLOOR: f64 = 1e-10;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// A point on the unit sphere S^{k-1}, k >= 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector(Vec<f64>);

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        UnitVector::new(v)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(v: UnitVector) -> Self {
        v.0
    }
}

impl UnitVector {
    /// Wraps coordinates that are already (close to) unit norm.
    ///
    /// Norms within 1e-9 of one are kept as they are, norms within 1e-6 are
    /// re-normalized, anything further off is rejected.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::UnsupportedDimension(coords.len()));
        }
        let r = norm(&coords);
        if !r.is_finite() {
            return Err(Error::InvalidParameter("non-finite coordinates".into()));
        }
        let dev = (r - 1.0).abs();
        if dev <= ORTHO_TOL {
            Ok(Self(coords))
        } else if dev <= REPAIR_TOL {
            Ok(Self(coords.into_iter().map(|x| x / r).collect()))
        } else {
            Err(Error::InvalidParameter(format!(
                "vector norm {r} is not 1 (deviation {dev:e})"
            )))
        }
    }

    /// The i-th canonical basis vector of R^k.
    pub fn basis(k: usize, i: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::UnsupportedDimension(k));
        }
        if i >= k {
            return Err(Error::DimensionMismatch { expected: k, found: i + 1 });
        }
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        Ok(Self(v))
    }

    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn neg(&self) -> UnitVector {
        UnitVector(self.0.iter().map(|x| -x).collect())
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A vector in the tangent space at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: UnitVector,
    coords: Vec<f64>,
}

impl TangentVector {
    /// Builds a tangent vector, re-projecting small violations of orthogonality.
    pub fn new(base: UnitVector, coords: Vec<f64>) -> Result<Self> {
        check_dim(base.dim(), coords.len())?;
        let off = dot(base.as_slice(), &coords);
        let scale = norm(&coords).max(1.0);
        if off.abs() > REPAIR_TOL * scale {
            return Err(Error::InvalidParameter(format!(
                "vector is not tangent at the base point (inner product {off:e})"
            )));
        }
        Ok(tangent_project_raw(&base, &coords))
    }

    pub fn zero(base: UnitVector) -> Self {
        let k = base.dim();
        Self { base, coords: vec![0.0; k] }
    }

    pub fn base(&self) -> &UnitVector {
        &self.base
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }
}

/// Angles (eta_1, ..., eta_{k-1}) of the spherical-coordinate chart.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalCoordinates(pub Vec<f64>);

/// A proper rotation of R^k.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation(DMatrix<f64>);

impl Rotation {
    /// Validates orthogonality and unit determinant to 1e-9.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() < 2 {
            return Err(Error::InvalidParameter("rotation must be a square k x k matrix, k >= 2".into()));
        }
        let k = matrix.nrows();
        let gram = matrix.transpose() * &matrix;
        let err = (gram - DMatrix::<f64>::identity(k, k)).amax();
        if err > ORTHO_TOL {
            return Err(Error::InvalidParameter(format!("matrix is not orthogonal (error {err:e})")));
        }
        let det = matrix.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::InvalidParameter(format!("determinant {det} is not +1")));
        }
        Ok(Self(matrix))
    }

    pub fn identity(k: usize) -> Self {
        Self(DMatrix::identity(k, k))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn apply_slice(&self, v: &[f64]) -> Vec<f64> {
        let k = self.dim();
        (0..k)
            .map(|i| (0..k).map(|j| self.0[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn apply(&self, v: &UnitVector) -> UnitVector {
        UnitVector(self.apply_slice(v.as_slice()))
    }

    pub fn apply_sample(&self, sample: &SampleSet) -> SampleSet {
        sample.map_vectors(|x| self.apply(x))
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &Rotation) -> Rotation {
        Rotation(&self.0 * &first.0)
    }

    pub fn inverse(&self) -> Rotation {
        Rotation(self.0.transpose())
    }
}

/// Scales `v` to unit length.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    if v.len() < 2 {
        return Err(Error::UnsupportedDimension(v.len()));
    }
    let r = norm(v);
    if r.is_nan() || r <= ZERO_NORM {
        return Err(Error::ZeroVector(r));
    }
    Ok(UnitVector(v.iter().map(|x| x / r).collect()))
}

fn tangent_project_raw(theta: &UnitVector, v: &[f64]) -> TangentVector {
    let c = dot(theta.as_slice(), v);
    let coords = v
        .iter()
        .zip(theta.as_slice())
        .map(|(x, t)| x - c * t)
        .collect();
    TangentVector { base: theta.clone(), coords }
}

/// Applies the projector (I_k - theta theta') to `v`.
pub fn tangent_project(theta: &UnitVector, v: &[f64]) -> Result<TangentVector> {
    check_dim(theta.dim(), v.len())?;
    Ok(tangent_project_raw(theta, v))
}

/// Multivariate sign of `x` with respect to the location `theta`.
pub fn sign_of(theta: &UnitVector, x: &UnitVector) -> Result<UnitVector> {
    check_dim(theta.dim(), x.dim())?;
    sign_raw(theta.as_slice(), x.as_slice())
}

pub(crate) fn sign_raw(theta: &[f64], x: &[f64]) -> Result<UnitVector> {
    let c = dot(theta, x);
    let u: Vec<f64> = x.iter().zip(theta).map(|(xi, ti)| xi - c * ti).collect();
    let r = norm(&u);
    if r.is_nan() || r <= SIGN_FLOOR {
        return Err(Error::DegenerateSign);
    }
    Ok(UnitVector(u.into_iter().map(|v| v / r).collect()))
}

/// The spherical-coordinate chart eta -> theta.
pub fn chart(eta: &SphericalCoordinates) -> UnitVector {
    let m = eta.0.len();
    let mut out = Vec::with_capacity(m + 1);
    let mut sin_prod = 1.0;
    for &e in &eta.0 {
        out.push(sin_prod * e.cos());
        sin_prod *= e.sin();
    }
    out.push(sin_prod);
    UnitVector(out)
}

/// Jacobian (k x (k-1)) of [`chart`].
pub fn chart_jacobian(eta: &SphericalCoordinates) -> DMatrix<f64> {
    let m = eta.0.len();
    let k = m + 1;
    let (s, c): (Vec<f64>, Vec<f64>) = eta.0.iter().map(|e| (e.sin(), e.cos())).unzip();
    let mut jac = DMatrix::zeros(k, m);
    for i in 0..k {
        // coordinate i is prod_{j<i} sin(eta_j) * (cos(eta_i) if i < m else 1)
        for col in 0..m.min(i + 1) {
            let mut v = 1.0;
            for j in 0..i.min(m) {
                v *= if j == col { c[j] } else { s[j] };
            }
            if i < m {
                v *= if col == i { -s[i] } else { c[i] };
            }
            jac[(i, col)] = v;
        }
    }
    jac
}

/// Inverse of [`chart`]: eta_1..eta_{k-2} in [0, pi], eta_{k-1} in (-pi, pi].
///
/// Angles left undetermined at gimbal-locked points are set to zero.
pub fn chart_inverse(theta: &UnitVector) -> SphericalCoordinates {
    let x = theta.as_slice();
    let k = x.len();
    let mut eta = Vec::with_capacity(k - 1);
    // tail[j] = || (x_j, ..., x_{k-1}) ||
    let mut tail = vec![0.0_f64; k + 1];
    for j in (0..k).rev() {
        tail[j] = tail[j + 1].hypot(x[j]);
    }
    for j in 0..k - 2 {
        if tail[j] == 0.0 {
            eta.push(0.0);
        } else {
            eta.push(tail[j + 1].atan2(x[j]));
        }
    }
    let last = x[k - 1].atan2(x[k - 2]);
    // atan2 returns -pi for (-0.0, negative); fold into (-pi, pi].
    eta.push(if last <= -std::f64::consts::PI { std::f64::consts::PI } else { last });
    SphericalCoordinates(eta)
}

fn planar_rotation(a: &[f64], b: &[f64]) -> DMatrix<f64> {
    // R = I + W + W^2 / (1 + c), W = b a' - a b'
    let k = a.len();
    let c = dot(a, b);
    let w = DMatrix::from_fn(k, k, |i, j| b[i] * a[j] - a[i] * b[j]);
    let w2 = &w * &w;
    DMatrix::identity(k, k) + &w + w2 / (1.0 + c)
}

/// A rotation taking `a` to `b`.
pub fn rotation_between(a: &UnitVector, b: &UnitVector) -> Result<Rotation> {
    check_dim(a.dim(), b.dim())?;
    let (av, bv) = (a.as_slice(), b.as_slice());
    if dot(av, bv) > -0.5 {
        return Ok(Rotation(planar_rotation(av, bv)));
    }
    // near-antipodal: pass through a midpoint orthogonal to a
    let pivot = av
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut e = vec![0.0; av.len()];
    e[pivot] = 1.0;
    let mid = sign_raw(av, &e)?;
    let first = planar_rotation(av, mid.as_slice());
    let second = planar_rotation(mid.as_slice(), bv);
    Ok(Rotation(second * first))
}

/// Cosines x_i' theta for every observation.
pub fn cosines(theta: &UnitVector, sample: &SampleSet) -> Vec<f64> {
    sample.iter().map(|x| x.dot(theta)).collect()
}

/// Ordinal ranks (1-based) of `values`; ties go to the earlier index.
pub fn ordinal_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

/// Ranks of the cosines x_i' theta within the sample.
pub fn rank_cosines(theta: &UnitVector, sample: &SampleSet) -> Vec<usize> {
    ordinal_ranks(&cosines(theta, sample))
}
