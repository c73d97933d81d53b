//! Angular-function families, the law of the cosine t = X'theta, exact
//! sampling through the tangent-normal decomposition, the monotone group
//! action, and the FVML concentration MLE.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, sign_raw, UnitVector};
use crate::quadrature::{self, Quad};
use crate::rng::ReplicateStreams;
use crate::special;

/// Grid size used to verify positivity and monotonicity of custom profiles.
const SHAPE_GRID: usize = 1024;
/// Number of nodes of the tabulated cdf.
pub const CDF_NODES: usize = 4096;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied angular function together with its log-derivative.
#[derive(Clone)]
pub struct CustomAngular {
    name: String,
    f1: RealFn,
    score: RealFn,
}

impl fmt::Debug for CustomAngular {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomAngular").field("name", &self.name).finish_non_exhaustive()
    }
}

/// An angular function f1 on [-1, 1].
#[derive(Debug, Clone)]
pub enum AngularModel {
    /// exp(kappa t)
    Fvml { kappa: f64 },
    /// t + a
    Lin { a: f64 },
    /// log(t + a)
    Log { a: f64 },
    /// a e^{-b arccos t} / (1 + a e^{-b arccos t})^2
    Logis { a: f64, b: f64 },
    /// sqrt(t + a)
    Sq { a: f64 },
    Custom(CustomAngular),
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn above(name: &str, v: f64, bound: f64) -> Result<f64> {
    if v.is_finite() && v > bound {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must exceed {bound}, got {v}")))
    }
}

impl AngularModel {
    pub fn fvml(kappa: f64) -> Result<Self> {
        Ok(Self::Fvml { kappa: positive("kappa", kappa)? })
    }

    pub fn lin(a: f64) -> Result<Self> {
        Ok(Self::Lin { a: above("a", a, 1.0)? })
    }

    pub fn log(a: f64) -> Result<Self> {
        Ok(Self::Log { a: above("a", a, 2.0)? })
    }

    /// Logistic family. For a > 1 the profile peaks inside (-1, 1); such
    /// members are accepted because they are part of the standard comparison grid.
    pub fn logis(a: f64, b: f64) -> Result<Self> {
        Ok(Self::Logis { a: positive("a", a)?, b: positive("b", b)? })
    }

    pub fn sq(a: f64) -> Result<Self> {
        Ok(Self::Sq { a: above("a", a, 1.0)? })
    }

    /// A custom profile `f1` with log-derivative `score`; both are checked on a
    /// 1024-point grid for positivity, strict monotonicity and finiteness.
    pub fn custom<F, G>(name: impl Into<String>, f1: F, score: G) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let model = Self::Custom(CustomAngular { name: name.into(), f1: Arc::new(f1), score: Arc::new(score) });
        model.check_shape()?;
        Ok(model)
    }

    fn check_shape(&self) -> Result<()> {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..SHAPE_GRID {
            let t = -1.0 + 2.0 * i as f64 / (SHAPE_GRID - 1) as f64;
            let v = self.raw_value(t);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("f1({t}) = {v} is not positive and finite")));
            }
            if v <= prev {
                return Err(Error::NotMonotone(format!("f1 decreases near t = {t}")));
            }
            prev = v;
            let w = self.weighted_score(t);
            if !w.is_finite() {
                return Err(Error::InvalidParameter(format!("score is not finite at t = {t}")));
            }
        }
        Ok(())
    }

    /// True when f1 is strictly increasing on the 1024-point check grid.
    pub fn is_monotone(&self) -> bool {
        let mut prev = f64::NEG_INFINITY;
        (0..SHAPE_GRID).all(|i| {
            let v = self.raw_value(-1.0 + 2.0 * i as f64 / (SHAPE_GRID - 1) as f64);
            let ok = v > prev;
            prev = v;
            ok
        })
    }

    fn raw_value(&self, t: f64) -> f64 {
        match self {
            Self::Fvml { kappa } => (kappa * t).exp(),
            Self::Lin { a } => t + a,
            Self::Log { a } => (t + a).ln(),
            Self::Logis { a, b } => {
                let s = a * (-b * t.acos()).exp();
                s / ((1.0 + s) * (1.0 + s))
            }
            Self::Sq { a } => (t + a).sqrt(),
            Self::Custom(c) => (c.f1)(t),
        }
    }

    /// f1 up to a positive constant, scaled to stay finite for large kappa.
    fn scaled_value(&self, t: f64) -> f64 {
        match self {
            Self::Fvml { kappa } => (kappa * (t - 1.0)).exp(),
            _ => self.raw_value(t),
        }
    }

    /// log of the constant dropped by `scaled_value`.
    fn scale_log(&self) -> f64 {
        match self {
            Self::Fvml { kappa } => *kappa,
            _ => 0.0,
        }
    }

    /// The angular function f1(t), t in [-1, 1].
    pub fn value(&self, t: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&t) {
            return Err(Error::Domain { what: "angular function", value: t });
        }
        Ok(self.raw_value(t))
    }

    /// The log-derivative phi = f1'/f1.
    pub fn score(&self, t: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&t) {
            return Err(Error::Domain { what: "angular score", value: t });
        }
        Ok(match self {
            Self::Fvml { kappa } => *kappa,
            Self::Lin { a } => 1.0 / (t + a),
            Self::Log { a } => 1.0 / ((t + a) * (t + a).ln()),
            Self::Logis { .. } => {
                if t.abs() >= 1.0 {
                    return Err(Error::Domain { what: "logistic angular score", value: t });
                }
                self.weighted_score(t) / (1.0 - t * t).sqrt()
            }
            Self::Sq { a } => 0.5 / (t + a),
            Self::Custom(c) => (c.score)(t),
        })
    }

    /// phi(t) sqrt(1 - t^2), evaluated in a form that stays finite at t = +-1.
    pub fn weighted_score(&self, t: f64) -> f64 {
        let t = t.clamp(-1.0, 1.0);
        let r = (1.0 - t * t).max(0.0).sqrt();
        match self {
            Self::Fvml { kappa } => kappa * r,
            Self::Lin { a } => r / (t + a),
            Self::Log { a } => r / ((t + a) * (t + a).ln()),
            Self::Logis { a, b } => {
                let s = a * (-b * t.acos()).exp();
                b * (1.0 - s) / (1.0 + s)
            }
            Self::Sq { a } => 0.5 * r / (t + a),
            Self::Custom(c) => {
                if r == 0.0 {
                    // limit from inside; custom scores may blow up at the poles
                    let inner = t - t.signum() * 1e-12;
                    (c.score)(inner) * (1.0 - inner * inner).sqrt()
                } else {
                    (c.score)(t) * r
                }
            }
        }
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

impl fmt::Display for AngularModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fvml { kappa } => write!(f, "FVML({})", fmt_num(*kappa)),
            Self::Lin { a } => write!(f, "Lin({})", fmt_num(*a)),
            Self::Log { a } => write!(f, "Log({})", fmt_num(*a)),
            Self::Logis { a, b } => write!(f, "Logis({},{})", fmt_num(*a), fmt_num(*b)),
            Self::Sq { a } => write!(f, "Sq({})", fmt_num(*a)),
            Self::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

impl PartialEq for AngularModel {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Custom(a), Self::Custom(b)) => Arc::ptr_eq(&a.f1, &b.f1),
            (Self::Custom(_), _) | (_, Self::Custom(_)) => false,
            _ => self.to_string() == other.to_string(),
        }
    }
}

/// Parses `fvml:2`, `lin:2`, `log:2.5`, `logis:2,1`, `sq:1.1` and the display
/// forms `FVML(2)`, `Logis(2,1)`, ...
impl FromStr for AngularModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParameter(format!("cannot parse angular model '{s}'"));
        let (family, args) = if let Some(open) = s.find('(') {
            let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
            (&s[..open], inner)
        } else {
            s.split_once(':').ok_or_else(bad)?
        };
        let params: Vec<f64> = args
            .split([',', ':'])
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let one = |p: &[f64]| if p.len() == 1 { Ok(p[0]) } else { Err(bad()) };
        match family.trim().to_ascii_lowercase().as_str() {
            "fvml" | "vmf" => Self::fvml(one(&params)?),
            "lin" => Self::lin(one(&params)?),
            "log" => Self::log(one(&params)?),
            "logis" => {
                if params.len() != 2 {
                    return Err(bad());
                }
                Self::logis(params[0], params[1])
            }
            "sq" => Self::sq(one(&params)?),
            _ => Err(bad()),
        }
    }
}

impl Serialize for AngularModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AngularModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The law of t = X'theta on [-1, 1] induced by an angular model in dimension k.
///
/// The density is proportional to f1(t) (1 - t^2)^{(k-3)/2}. All integrals are
/// taken in the angle u = arccos t, which absorbs the endpoint factor.
#[derive(Debug, Clone)]
pub struct CosineLaw {
    model: AngularModel,
    k: usize,
    /// Integral of the scaled weight over the angle; the table's own total.
    scaled_mass: f64,
    /// Adaptive-quadrature value of the same integral.
    scaled_mass_adaptive: f64,
    /// cdf at t_j = -cos(pi j / (N - 1)).
    cdf_table: Vec<f64>,
}

fn node_angle(j: usize) -> f64 {
    std::f64::consts::PI * (1.0 - j as f64 / (CDF_NODES - 1) as f64)
}

const PANEL_WIDTH: f64 = std::f64::consts::PI / (CDF_NODES - 1) as f64;

impl CosineLaw {
    pub fn new(model: AngularModel, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::UnsupportedDimension(k));
        }
        let mut law = CosineLaw { model, k, scaled_mass: 1.0, scaled_mass_adaptive: 1.0, cdf_table: Vec::new() };
        let adaptive = quadrature::integrate(|a| law.angle_weight(a), 0.0, std::f64::consts::PI, 1e-12, 0.0)?;
        if adaptive.value.is_nan() || adaptive.value <= 0.0 {
            return Err(Error::NonIntegrable(format!("{} has zero mass", law.model)));
        }
        let mut table = Vec::with_capacity(CDF_NODES);
        let mut acc = 0.0;
        table.push(0.0);
        for j in 0..CDF_NODES - 1 {
            acc += quadrature::fixed(|a| law.angle_weight(a), node_angle(j + 1), node_angle(j));
            table.push(acc);
        }
        if !acc.is_finite() || ((acc - adaptive.value) / adaptive.value).abs() > 1e-10 {
            return Err(Error::NonIntegrable(format!(
                "cdf table total {acc} disagrees with adaptive normalization {}",
                adaptive.value
            )));
        }
        for c in &mut table {
            *c /= acc;
        }
        *table.last_mut().expect("non-empty") = 1.0;
        law.scaled_mass = acc;
        law.scaled_mass_adaptive = adaptive.value;
        law.cdf_table = table;
        Ok(law)
    }

    pub fn model(&self) -> &AngularModel {
        &self.model
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Scaled f1(cos u) sin(u)^{k-2}: the density of the angle, unnormalized.
    fn angle_weight(&self, u: f64) -> f64 {
        let t = u.cos();
        let s = u.sin().max(0.0);
        self.model.scaled_value(t) * s.powi(self.k as i32 - 2)
    }

    /// The constant c with density(t) = c f1(t) (1 - t^2)^{(k-3)/2}.
    pub fn norm_constant(&self) -> f64 {
        (-self.model.scale_log()).exp() / self.scaled_mass
    }

    /// Relative disagreement between the tabulated and adaptive normalizations.
    pub fn normalization_discrepancy(&self) -> f64 {
        ((self.scaled_mass - self.scaled_mass_adaptive) / self.scaled_mass_adaptive).abs()
    }

    /// Density of t.
    pub fn pdf(&self, t: f64) -> f64 {
        if !(-1.0..=1.0).contains(&t) {
            return 0.0;
        }
        let base = self.model.scaled_value(t) / self.scaled_mass;
        let e = (self.k as f64 - 3.0) / 2.0;
        if e == 0.0 {
            base
        } else {
            base * (1.0 - t * t).max(0.0).powf(e)
        }
    }

    fn panel_of_angle(u: f64) -> usize {
        let j = ((std::f64::consts::PI - u) / PANEL_WIDTH).floor();
        (j.max(0.0) as usize).min(CDF_NODES - 2)
    }

    fn cdf_at_angle(&self, u: f64, j: usize) -> f64 {
        let partial = quadrature::fixed(|a| self.angle_weight(a), u, node_angle(j));
        self.cdf_table[j] + partial / self.scaled_mass
    }

    /// P(T <= t).
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= -1.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        let u = t.acos();
        let j = Self::panel_of_angle(u);
        self.cdf_at_angle(u, j).clamp(0.0, 1.0)
    }

    /// Inverse cdf: table lookup, then safeguarded Newton inside the panel.
    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return -1.0;
        }
        if p >= 1.0 {
            return 1.0;
        }
        let idx = self.cdf_table.partition_point(|&c| c < p);
        let j = idx.saturating_sub(1).min(CDF_NODES - 2);
        let (c0, c1) = (self.cdf_table[j], self.cdf_table[j + 1]);
        let (mut lo, mut hi) = (node_angle(j + 1), node_angle(j));
        // G(u) = cdf at angle u is decreasing in u: G(lo) = c1 >= p > c0 = G(hi)
        let frac = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.5 };
        let mut u = hi - frac * (hi - lo);
        for _ in 0..60 {
            let g = self.cdf_at_angle(u, j) - p;
            if g.abs() <= 2.0 * f64::EPSILON * p.max(1e-300) {
                break;
            }
            if g > 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let w = self.angle_weight(u) / self.scaled_mass;
            let mut next = u + g / w;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() <= 1e-16 || hi - lo <= 1e-16 {
                u = next;
                break;
            }
            u = next;
        }
        u.cos()
    }

    /// E[h(T)] by adaptive quadrature in the angle.
    pub fn expect<F: Fn(f64) -> f64>(&self, h: F) -> Result<Quad> {
        self.expect_with_tol(h, 1e-12)
    }

    /// E[h(T)] to the given relative tolerance.
    pub fn expect_with_tol<F: Fn(f64) -> f64>(&self, h: F, rel_tol: f64) -> Result<Quad> {
        let q = quadrature::integrate(
            |u| h(u.cos()) * self.angle_weight(u),
            0.0,
            std::f64::consts::PI,
            rel_tol,
            1e-15 * self.scaled_mass,
        )?;
        Ok(Quad { value: q.value / self.scaled_mass, abs_error: q.abs_error / self.scaled_mass })
    }

    /// Draws n observations around `theta` using the given replicate streams.
    pub fn sample(&self, theta: &UnitVector, n: usize, streams: &ReplicateStreams) -> Result<SampleSet> {
        if theta.dim() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, found: theta.dim() });
        }
        if n == 0 {
            return Err(Error::InvalidParameter("sample size must be at least 1".into()));
        }
        let vectors = (0..n)
            .map(|i| {
                let mut rng = streams.observation(i as u64);
                let p = open_unit(&mut rng);
                let t = self.quantile(p);
                let s = uniform_tangent_sign(theta, &mut rng);
                compose_point(theta.as_slice(), t, s.as_slice())
            })
            .collect();
        SampleSet::new(vectors)
    }
}

/// Uniform draw in (0, 1), never hitting either endpoint.
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// t theta + sqrt(1 - t^2) s, renormalized against rounding.
fn compose_point(theta: &[f64], t: f64, s: &[f64]) -> UnitVector {
    let r = (1.0 - t * t).max(0.0).sqrt();
    let v: Vec<f64> = theta.iter().zip(s).map(|(a, b)| t * a + r * b).collect();
    let len = norm(&v);
    UnitVector::from_raw(v.into_iter().map(|x| x / len).collect())
}

/// A uniformly distributed unit vector in the tangent space at `theta`.
pub fn uniform_tangent_sign<R: Rng + ?Sized>(theta: &UnitVector, rng: &mut R) -> UnitVector {
    let th = theta.as_slice();
    loop {
        let z: Vec<f64> = (0..th.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        if let Ok(s) = sign_raw(th, &z) {
            if norm(&z) > 1e-6 {
                return s;
            }
        }
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Generated { seed: u64, model: String, theta: Vec<f64> },
    File { path: String, sha256: String },
}

/// n unit vectors of a common dimension k.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    vectors: Vec<UnitVector>,
    provenance: Option<Provenance>,
}

impl SampleSet {
    pub fn new(vectors: Vec<UnitVector>) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::DegenerateSample("sample is empty".into()))?;
        let k = first.dim();
        if let Some(bad) = vectors.iter().find(|v| v.dim() != k) {
            return Err(Error::DimensionMismatch { expected: k, found: bad.dim() });
        }
        Ok(Self { vectors, provenance: None })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn k(&self) -> usize {
        self.vectors[0].dim()
    }

    pub fn vectors(&self) -> &[UnitVector] {
        &self.vectors
    }

    pub fn iter(&self) -> std::slice::Iter<'_, UnitVector> {
        self.vectors.iter()
    }

    pub fn map_vectors<F: FnMut(&UnitVector) -> UnitVector>(&self, f: F) -> SampleSet {
        SampleSet { vectors: self.vectors.iter().map(f).collect(), provenance: None }
    }

    /// Sum of the observations.
    pub fn resultant(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.k()];
        for v in &self.vectors {
            for (a, x) in acc.iter_mut().zip(v.as_slice()) {
                *a += x;
            }
        }
        acc
    }

    /// Length of the sample mean vector.
    pub fn mean_resultant_length(&self) -> f64 {
        norm(&self.resultant()) / self.len() as f64
    }
}

/// Draws an i.i.d. sample of size n from the rotationally symmetric law with
/// angular function `model` and location `theta`.
pub fn sample(model: &AngularModel, k: usize, theta: &UnitVector, n: usize, seed: u64) -> Result<SampleSet> {
    let law = CosineLaw::new(model.clone(), k)?;
    let s = law.sample(theta, n, &ReplicateStreams::new(seed, 0))?;
    Ok(s.with_provenance(Provenance::Generated {
        seed,
        model: model.to_string(),
        theta: theta.as_slice().to_vec(),
    }))
}

/// Replaces every X_i by h(X_i'theta) theta + sqrt(1 - h^2) S_theta(X_i).
///
/// `h` must map [-1, 1] into itself, fix +-1 and be nondecreasing; this is
/// spot-checked on a grid. Observations at +-theta have no sign and are
/// returned unchanged (h fixes the poles).
pub fn apply_monotone_transform<H: Fn(f64) -> f64>(h: H, theta: &UnitVector, sample: &SampleSet) -> Result<SampleSet> {
    if theta.dim() != sample.k() {
        return Err(Error::DimensionMismatch { expected: sample.k(), found: theta.dim() });
    }
    if (h(1.0) - 1.0).abs() > 1e-12 || (h(-1.0) + 1.0).abs() > 1e-12 {
        return Err(Error::InvalidGroupElement("h must fix -1 and 1".into()));
    }
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=2048 {
        let t = -1.0 + i as f64 / 1024.0;
        let v = h(t);
        if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&v) || v < prev {
            return Err(Error::InvalidGroupElement(format!("h is not a nondecreasing map into [-1, 1] near t = {t}")));
        }
        prev = v;
    }
    let th = theta.as_slice();
    let vectors = sample
        .iter()
        .map(|x| match sign_raw(th, x.as_slice()) {
            Ok(s) => {
                let t = dot(th, x.as_slice()).clamp(-1.0, 1.0);
                compose_point(th, h(t).clamp(-1.0, 1.0), s.as_slice())
            }
            Err(_) => x.clone(),
        })
        .collect();
    SampleSet::new(vectors)
}

/// Maximum-likelihood FVML concentration: solves A_k(kappa) = ||mean||.
pub fn fvml_concentration_mle(sample: &SampleSet) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::DegenerateSample("need at least two observations".into()));
    }
    let rbar = sample.mean_resultant_length();
    if rbar >= 1.0 - 1e-12 {
        return Err(Error::DegenerateSample("all observations coincide".into()));
    }
    if rbar <= 1e-12 {
        return Err(Error::DegenerateSample("mean resultant vanishes".into()));
    }
    special::invert_mean_resultant(sample.k(), rbar)
}
