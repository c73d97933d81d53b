//! Rank-based one-step estimation of the location of a rotationally symmetric
//! distribution on the unit sphere.
//!
//! The pieces, bottom up:
//!
//! * [`geometry`]: unit vectors, signs, the spherical chart, rotations, ranks.
//! * [`angular`]: angular-function families, the law of the cosine, sampling.
//! * [`score`]: rank scores, information integrals, central sequences.
//! * [`estimators`]: spherical mean and median, M-estimators, the one-step R-estimator.
//! * [`efficiency`]: asymptotic variance factors and ARE tables.
//! * [`montecarlo`]: seeded, parallel simulation studies.
//! * [`io`]: dataset parsing, CSV/JSON output, run manifests.

pub mod angular;
pub mod efficiency;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod io;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;
pub mod score;
pub mod special;

pub use angular::{AngularModel, CosineLaw, SampleSet};
pub use error::{Error, Result};
pub use estimators::{Classical, EstimateResult, MEstimatorSpec};
pub use geometry::UnitVector;
pub use score::ScoreFunction;
