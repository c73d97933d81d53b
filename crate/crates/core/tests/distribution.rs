use std::f64::consts::PI;

use sphrank::angular::{sample, uniform_tangent_sign};
use sphrank::geometry::{normalize, rank_cosines, rotation_between, sign_of};
use sphrank::rng::ReplicateStreams;
use sphrank::score::{rank_central_sequence, score_from_model};
use sphrank::special::fvml_mean_resultant;
use sphrank::{AngularModel, SampleSet, UnitVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn north() -> UnitVector {
    UnitVector::basis(3, 2).unwrap()
}

fn model(s: &str) -> AngularModel {
    s.parse().unwrap()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, _) = mean_se(a);
    let (mb, _) = mean_se(b);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Cell of (rank decile, sign quadrant) at the north pole.
fn rank_sign_cells(s: &SampleSet) -> Vec<usize> {
    let theta = north();
    let ranks = rank_cosines(&theta, s);
    let n = s.len();
    s.iter()
        .zip(ranks)
        .map(|(x, r)| {
            let sg = sign_of(&theta, x).unwrap();
            let quadrant = usize::from(sg.as_slice()[0] > 0.0) * 2 + usize::from(sg.as_slice()[1] > 0.0);
            let decile = ((r - 1) * 10) / n;
            decile * 4 + quadrant
        })
        .collect()
}

#[test]
fn ranks_and_signs_are_distribution_free() {
    let n = 5000;
    let a = rank_sign_cells(&sample(&model("fvml:2"), 3, &north(), n, 101).unwrap());
    let b = rank_sign_cells(&sample(&model("lin:2"), 3, &north(), n, 202).unwrap());
    let mut table = [[0.0_f64; 40]; 2];
    for &c in &a {
        table[0][c] += 1.0;
    }
    for &c in &b {
        table[1][c] += 1.0;
    }
    let total = 2.0 * n as f64;
    let mut stat = 0.0;
    for j in 0..40 {
        let col = table[0][j] + table[1][j];
        for row in &table {
            let expected = col * n as f64 / total;
            stat += (row[j] - expected).powi(2) / expected;
        }
    }
    let p = 1.0 - ChiSquared::new(39.0).unwrap().cdf(stat);
    assert!(p > 0.001, "homogeneity chi-square {stat}, p = {p}");
}

#[test]
fn sign_moments_do_not_depend_on_the_model() {
    let n = 5000;
    let moments = |m: &str, seed| -> Vec<(f64, f64)> {
        let s = sample(&model(m), 3, &north(), n, seed).unwrap();
        let signs: Vec<UnitVector> = s.iter().map(|x| sign_of(&north(), x).unwrap()).collect();
        let f: [fn(&[f64]) -> f64; 4] = [|v| v[0], |v| v[1], |v| v[0] * v[0], |v| v[0] * v[1]];
        f.iter()
            .map(|g| mean_se(&signs.iter().map(|v| g(v.as_slice())).collect::<Vec<_>>()))
            .collect()
    };
    let a = moments("fvml:2", 5);
    let b = moments("sq:1.1", 6);
    for ((ma, sa), (mb, sb)) in a.iter().zip(&b) {
        assert!((ma - mb).abs() < 4.0 * (sa * sa + sb * sb).sqrt(), "{ma} vs {mb}");
    }
}

#[test]
fn cosine_and_sign_are_uncorrelated() {
    let theta = normalize(&[1.0, -2.0, 0.5]).unwrap();
    for m in ["fvml:2", "logis:2,1", "sq:1.1"] {
        let s = sample(&model(m), 3, &theta, 10_000, 17).unwrap();
        let t: Vec<f64> = s.iter().map(|x| x.dot(&theta)).collect();
        let signs: Vec<UnitVector> = s.iter().map(|x| sign_of(&theta, x).unwrap()).collect();
        for i in 0..3 {
            let c: Vec<f64> = signs.iter().map(|v| v.as_slice()[i]).collect();
            let r = correlation(&t, &c);
            assert!(r.abs() < 0.05, "{m}: corr(t, S_{i}) = {r}");
        }
    }
}

#[test]
fn tangent_angle_is_uniform() {
    // Kolmogorov-Smirnov against U(0, 2 pi); 1.63 / sqrt(n) is the 1% point
    let streams = ReplicateStreams::new(9, 0);
    let n = 20_000;
    let mut angles: Vec<f64> = (0..n)
        .map(|i| {
            let s = uniform_tangent_sign(&north(), &mut streams.observation(i as u64));
            let a = s.as_slice()[1].atan2(s.as_slice()[0]);
            if a < 0.0 { a + 2.0 * PI } else { a }
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    let d = angles
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let f = a / (2.0 * PI);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 1.63 / (n as f64).sqrt(), "KS distance {d}");
}

#[test]
fn fvml_cosine_mean_matches_the_bessel_ratio() {
    for (kappa, k) in [(2.0, 3), (6.0, 3), (1.0, 4), (3.0, 2)] {
        let theta = UnitVector::basis(k, 0).unwrap();
        let s = sample(&AngularModel::fvml(kappa).unwrap(), k, &theta, 20_000, 3).unwrap();
        let t: Vec<f64> = s.iter().map(|x| x.dot(&theta)).collect();
        let (m, se) = mean_se(&t);
        let expected = fvml_mean_resultant(k, kappa);
        assert!((m - expected).abs() < 4.0 * se, "kappa {kappa}, k {k}: {m} vs {expected}");
    }
}

#[test]
fn sampling_commutes_with_rotation() {
    let theta = normalize(&[0.3, 0.4, -0.8]).unwrap();
    let back = rotation_between(&theta, &north()).unwrap();
    let n = 20_000;
    let at_theta = back.apply_sample(&sample(&model("lin:4"), 3, &theta, n, 31).unwrap());
    let at_pole = sample(&model("lin:4"), 3, &north(), n, 32).unwrap();
    for j in 0..3 {
        for p in [1, 2] {
            let a: Vec<f64> = at_theta.iter().map(|x| x.as_slice()[j].powi(p)).collect();
            let b: Vec<f64> = at_pole.iter().map(|x| x.as_slice()[j].powi(p)).collect();
            let ((ma, sa), (mb, sb)) = (mean_se(&a), mean_se(&b));
            assert!((ma - mb).abs() < 3.0 * (sa * sa + sb * sb).sqrt(), "coordinate {j}, power {p}: {ma} vs {mb}");
        }
    }
}

#[test]
fn rank_central_sequence_has_mean_zero_and_the_right_covariance() {
    let theta = normalize(&[1.0, 1.0, 1.0]).unwrap();
    let score = score_from_model(&model("fvml:2"), 3).unwrap();
    let truth = model("logis:1,1");
    let (n, reps) = (200, 500);
    let deltas: Vec<Vec<f64>> = (0..reps)
        .map(|j| rank_central_sequence(&theta, &score, &sample(&truth, 3, &theta, n, 1000 + j).unwrap()).unwrap())
        .collect();
    for i in 0..3 {
        let col: Vec<f64> = deltas.iter().take(200).map(|d| d[i]).collect();
        let (m, se) = mean_se(&col);
        assert!(m.abs() < 3.0 * se, "coordinate {i}: mean {m}, se {se}");
    }
    let j = score.information().unwrap();
    let mut err = 0.0;
    let mut size = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            let emp = deltas.iter().map(|d| d[a] * d[b]).sum::<f64>() / reps as f64;
            let proj = f64::from(u8::from(a == b)) - theta.as_slice()[a] * theta.as_slice()[b];
            let target = j / 2.0 * proj;
            err += (emp - target).powi(2);
            size += target * target;
        }
    }
    let rel = (err / size).sqrt();
    assert!(rel < 0.10, "relative Frobenius distance {rel}");
}
