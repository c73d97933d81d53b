//! Randomized invariant suites shared by the property tests and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sphrank::angular::{apply_monotone_transform, sample};
use sphrank::estimators::{m_estimate, one_step_r_estimate, spherical_mean, Classical, MEstimatorSpec};
use sphrank::geometry::{
    chart, chart_inverse, chart_jacobian, normalize, rank_cosines, sign_of, tangent_project, Rotation,
    SphericalCoordinates,
};
use sphrank::io::{parse_dataset_bytes, write_sample_csv, DatasetFormat};
use sphrank::score::{rank_central_sequence, score_from_model};
use sphrank::{AngularModel, ScoreFunction, UnitVector};

pub const CASES: u32 = 1000;

type Check<T> = Result<T, TestCaseError>;

/// Runs `test` on `cases` deterministic draws from `strategy`.
fn check<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Check<()>) -> Result<(), String>
where
    S: Strategy,
    S::Value: Debug,
{
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

pub fn gaussian_unit(k: usize, rng: &mut ChaCha8Rng) -> UnitVector {
    loop {
        let v: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            return normalize(&v).unwrap();
        }
    }
}

/// Haar rotation from the QR factor of a Gaussian matrix.
pub fn random_rotation(k: usize, rng: &mut ChaCha8Rng) -> Rotation {
    let a = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    Rotation::new(q).unwrap()
}

fn models() -> [AngularModel; 3] {
    [AngularModel::fvml(2.0).unwrap(), AngularModel::lin(2.0).unwrap(), AngularModel::sq(1.1).unwrap()]
}

fn score_for(k: usize) -> &'static ScoreFunction {
    static S: OnceLock<Vec<ScoreFunction>> = OnceLock::new();
    let all = S.get_or_init(|| {
        (3..=4)
            .map(|k| score_from_model(&AngularModel::fvml(2.0).unwrap(), k).unwrap())
            .collect()
    });
    &all[k - 3]
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

type NamedMap = (&'static str, fn(f64) -> f64);

fn monotone_maps() -> [NamedMap; 3] {
    [
        ("sine", |t| (PI * t / 2.0).sin()),
        ("cube", |t| t * t * t),
        ("tanh", |t| (2.0 * t).tanh() / 2.0_f64.tanh()),
    ]
}

fn setup(k: usize, seed: u64) -> (ChaCha8Rng, UnitVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = gaussian_unit(k, &mut rng);
    (rng, theta)
}

pub fn group_invariance() -> Result<(), String> {
    check(CASES, (2usize..=5, 0usize..3, any::<u64>(), 5usize..40), |(k, model, seed, n)| {
        let (_, theta) = setup(k, seed);
        let s = sample(&models()[model], k, &theta, n, seed).unwrap();
        let ranks = rank_cosines(&theta, &s);
        for (name, h) in monotone_maps() {
            let moved = apply_monotone_transform(h, &theta, &s).unwrap();
            prop_assert_eq!(&rank_cosines(&theta, &moved), &ranks, "ranks changed under {}", name);
            for (x, y) in s.iter().zip(moved.iter()) {
                let a = sign_of(&theta, x).unwrap();
                let Ok(b) = sign_of(&theta, y) else {
                    // h(t) rounded onto a pole: nothing left to compare
                    prop_assert!(1.0 - h(x.dot(&theta)).abs() <= 1e-14, "sign lost under {}", name);
                    continue;
                };
                // a sign is recovered from a point to eps / ||tangent part||
                let c = y.dot(&theta);
                let tangent = y.as_slice().iter().zip(theta.as_slice()).map(|(v, t)| (v - c * t).powi(2)).sum::<f64>().sqrt();
                let tol = 1e-12 + 8.0 * f64::EPSILON / tangent;
                prop_assert!(max_abs_diff(a.as_slice(), b.as_slice()) <= tol, "sign changed under {}", name);
            }
        }
        Ok(())
    })
}

pub fn group_composition() -> Result<(), String> {
    check(CASES, (2usize..=5, any::<u64>()), |(k, seed)| {
        let (_, theta) = setup(k, seed);
        let s = sample(&models()[1], k, &theta, 20, seed).unwrap();
        let [(_, h1), (_, h2), _] = monotone_maps();
        let twice = apply_monotone_transform(h2, &theta, &apply_monotone_transform(h1, &theta, &s).unwrap()).unwrap();
        let once = apply_monotone_transform(|t| h2(h1(t)), &theta, &s).unwrap();
        for (a, b) in twice.iter().zip(once.iter()) {
            prop_assert!((a.dot(&theta) - b.dot(&theta)).abs() <= 1e-12);
        }
        Ok(())
    })
}

pub fn sign_equivariance() -> Result<(), String> {
    check(CASES, (2usize..=6, any::<u64>()), |(k, seed)| {
        let (mut rng, theta) = setup(k, seed);
        let x = gaussian_unit(k, &mut rng);
        let r = random_rotation(k, &mut rng);
        let lhs = sign_of(&r.apply(&theta), &r.apply(&x)).unwrap();
        let rhs = r.apply(&sign_of(&theta, &x).unwrap());
        prop_assert!(max_abs_diff(lhs.as_slice(), rhs.as_slice()) <= 1e-9);
        Ok(())
    })
}

pub fn central_sequence_equivariance() -> Result<(), String> {
    check(CASES, (3usize..=4, any::<u64>(), 10usize..60), |(k, seed, n)| {
        let (mut rng, theta) = setup(k, seed);
        let r = random_rotation(k, &mut rng);
        let s = sample(&models()[0], k, &theta, n, seed).unwrap();
        let score = score_for(k);
        let lhs = rank_central_sequence(&r.apply(&theta), score, &r.apply_sample(&s)).unwrap();
        let rhs = r.apply_slice(&rank_central_sequence(&theta, score, &s).unwrap());
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-9);
        Ok(())
    })
}

pub fn estimator_equivariance() -> Result<(), String> {
    check(CASES, (3usize..=4, 0usize..3, any::<u64>(), 30usize..80), |(k, model, seed, n)| {
        let (mut rng, theta) = setup(k, seed);
        let r = random_rotation(k, &mut rng);
        let s = sample(&models()[model], k, &theta, n, seed).unwrap();
        let rs = r.apply_sample(&s);
        let score = score_for(k);
        let a = one_step_r_estimate(&rs, score, &spherical_mean(&rs).unwrap()).unwrap();
        let b = one_step_r_estimate(&s, score, &spherical_mean(&s).unwrap()).unwrap();
        let rb = r.apply(&b.theta_hat);
        prop_assert!(max_abs_diff(a.theta_hat.as_slice(), rb.as_slice()) <= 1e-9, "{:?} vs {:?}", a.theta_hat, rb);
        prop_assert!((a.theta_hat.dot(&a.theta_hat) - 1.0).abs() <= 1e-12);
        Ok(())
    })
}

pub fn unit_norm_and_tangency() -> Result<(), String> {
    check(CASES, (2usize..=6, any::<u64>()), |(k, seed)| {
        let (mut rng, theta) = setup(k, seed);
        let x = gaussian_unit(k, &mut rng);
        let s = sign_of(&theta, &x).unwrap();
        prop_assert!((s.dot(&s) - 1.0).abs() <= 1e-9);
        prop_assert!(s.dot(&theta).abs() <= 1e-9);
        let v: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t = tangent_project(&theta, &v).unwrap();
        let along: f64 = t.coords().iter().zip(theta.as_slice()).map(|(a, b)| a * b).sum();
        prop_assert!(along.abs() <= 1e-9);
        Ok(())
    })
}

pub fn chart_round_trips() -> Result<(), String> {
    check(CASES, (2usize..=6, any::<u64>()), |(k, seed)| {
        let (_, theta) = setup(k, seed);
        let back = chart(&chart_inverse(&theta));
        prop_assert!(max_abs_diff(back.as_slice(), theta.as_slice()) <= 1e-9);
        Ok(())
    })?;
    let angles = (prop::collection::vec(0.05f64..PI - 0.05, 1..=4), -PI + 0.05..PI - 0.05);
    check(CASES, angles, |(mut eta, last)| {
        eta.push(last);
        let back = chart_inverse(&chart(&SphericalCoordinates(eta.clone())));
        prop_assert!(max_abs_diff(&back.0, &eta) <= 1e-9);
        Ok(())
    })
}

pub fn jacobian_identities() -> Result<(), String> {
    check(CASES, (prop::collection::vec(0.0f64..PI, 1..=4), -PI..PI), |(mut eta, last)| {
        eta.push(last);
        let eta = SphericalCoordinates(eta);
        let theta = DMatrix::from_column_slice(eta.0.len() + 1, 1, chart(&eta).as_slice());
        let j = chart_jacobian(&eta);
        let k = j.nrows();
        let p = DMatrix::identity(k, k) - &theta * theta.transpose();
        prop_assert!((j.transpose() * &p * &j - j.transpose() * &j).amax() <= 1e-9);
        Ok(())
    })?;
    let generic = (prop::collection::vec(0.2f64..PI - 0.2, 1..=4), -PI..PI, any::<u64>());
    check(CASES, generic, |(mut eta, last, seed)| {
        eta.push(last);
        let eta = SphericalCoordinates(eta);
        let k = eta.0.len() + 1;
        let r = random_rotation(k, &mut ChaCha8Rng::seed_from_u64(seed));
        let d = r.matrix() * chart_jacobian(&eta);
        let theta = DMatrix::from_column_slice(k, 1, &r.apply_slice(chart(&eta).as_slice()));
        let gram = (d.transpose() * &d).try_inverse().unwrap();
        let p = DMatrix::identity(k, k) - &theta * theta.transpose();
        prop_assert!((&d * gram * d.transpose() - p).amax() <= 1e-8);
        Ok(())
    })
}

pub fn csv_round_trip() -> Result<(), String> {
    check(CASES, (2usize..=5, any::<u64>(), 1usize..30), |(k, seed, n)| {
        let (_, theta) = setup(k, seed);
        let s = sample(&models()[2], k, &theta, n, seed).unwrap();
        let mut buf = Vec::new();
        write_sample_csv(&s, &mut buf).unwrap();
        let back = parse_dataset_bytes(&buf, DatasetFormat::VectorsCsv, Some(k)).unwrap().sample;
        for (a, b) in s.iter().zip(back.iter()) {
            prop_assert!(max_abs_diff(a.as_slice(), b.as_slice()) <= 1e-12);
        }
        Ok(())
    })
}

pub fn constant_psi_is_the_mean() -> Result<(), String> {
    check(200, (2usize..=5, any::<u64>(), 10usize..50), |(k, seed, n)| {
        let (_, theta) = setup(k, seed);
        let s = sample(&models()[0], k, &theta, n, seed).unwrap();
        let mean = Classical::Mean.estimate(&s).unwrap();
        let spec = MEstimatorSpec::new("constant", |_| 3.0).unwrap();
        let m = m_estimate(&spec, &s, &mean.theta_hat).unwrap();
        prop_assert!(max_abs_diff(m.theta_hat.as_slice(), mean.theta_hat.as_slice()) <= 1e-12);
        Ok(())
    })
}

pub type Suite = fn() -> Result<(), String>;

/// The suites gated by the acceptance run.
pub fn acceptance_suites() -> Vec<(&'static str, Suite)> {
    vec![
        ("sign/rank invariance under three monotone maps", group_invariance),
        ("sign equivariance", sign_equivariance),
        ("rank central sequence equivariance", central_sequence_equivariance),
        ("one-step estimator equivariance", estimator_equivariance),
        ("unit norm and tangency", unit_norm_and_tangency),
        ("chart round trips", chart_round_trips),
        ("projector identities from chart Jacobians", jacobian_identities),
    ]
}
