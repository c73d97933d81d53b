//! Adaptive Gauss-Kronrod (10/21 point) integration.

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const MAX_INTERVALS: usize = 4000;

/// Value and estimated absolute error of an integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut e = err.abs();
    if res_asc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / res_asc).powf(1.5);
        e = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * res_abs);
    }
    e
}

/// Single 21-point Kronrod estimate with its embedded 10-point Gauss error.
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let (f1, f2) = (f(center - dx), f(center + dx));
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let hl = half.abs();
    let err = rescale_error((res_k - res_g) * half, res_abs * hl, res_asc * hl);
    (res_k * half, err)
}

/// Fixed 21-point Kronrod rule on [a, b]; exact for polynomials of degree 31.
pub fn fixed<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    gk21(&f, a, b).0
}

/// Integrates `f` over [a, b] until the estimated error is below
/// `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<Quad> {
    integrate_with_breaks(f, &[a, b], rel_tol, abs_tol)
}

/// Like [`integrate`], with initial subdivision points (e.g. known kinks).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Quad> {
    if breaks.len() < 2 {
        return Err(Error::NonIntegrable("need at least two break points".into()));
    }
    let mut panels: Vec<Panel> = breaks
        .windows(2)
        .filter(|w| w[0] != w[1])
        .map(|w| {
            let (value, error) = gk21(&f, w[0], w[1]);
            Panel { a: w[0], b: w[1], value, error }
        })
        .collect();
    if panels.is_empty() {
        return Ok(Quad { value: 0.0, abs_error: 0.0 });
    }
    loop {
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::NonIntegrable("integrand produced a non-finite value".into()));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Quad { value, abs_error: error });
        }
        if panels.len() >= MAX_INTERVALS {
            return Err(Error::NonIntegrable(format!(
                "error estimate {error:e} above tolerance after {MAX_INTERVALS} subdivisions"
            )));
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // interval exhausted at machine precision; accept what we have
            let value: f64 = panels.iter().map(|q| q.value).sum::<f64>() + p.value;
            let error: f64 = panels.iter().map(|q| q.error).sum::<f64>() + p.error;
            return Ok(Quad { value, abs_error: error });
        }
        let (v1, e1) = gk21(&f, p.a, mid);
        let (v2, e2) = gk21(&f, mid, p.b);
        panels.push(Panel { a: p.a, b: mid, value: v1, error: e1 });
        panels.push(Panel { a: mid, b: p.b, value: v2, error: e2 });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn weights_integrate_constants() {
        assert!((fixed(|_| 1.0, -1.0, 1.0) - 2.0).abs() < 1e-15);
        assert!((fixed(|x| x.powi(30), -1.0, 1.0) - 2.0 / 31.0).abs() < 1e-15);
    }

    #[test]
    fn smooth_integrals() {
        let q = integrate(f64::sin, 0.0, PI, 1e-12, 0.0).unwrap();
        assert!((q.value - 2.0).abs() < 1e-13);
        let q = integrate(|x| (-x * x).exp(), -10.0, 10.0, 1e-12, 0.0).unwrap();
        assert!((q.value - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn endpoint_singularity() {
        // int_0^1 x^{-1/2} dx = 2
        let q = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10, 0.0).unwrap();
        assert!((q.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn non_finite_is_reported() {
        // the 21-point center lands on the pole
        let r = integrate(|x| 1.0 / (x - 0.5), 0.0, 1.0, 1e-10, 0.0);
        assert!(matches!(r, Err(Error::NonIntegrable(_))));
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let q = integrate(|x| x * x, 1.0, 0.0, 1e-12, 0.0).unwrap();
        assert!((q.value + 1.0 / 3.0).abs() < 1e-14);
    }
}
