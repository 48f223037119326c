//! Globally adaptive 21-point Gauss–Kronrod quadrature for complex-valued
//! integrands on a finite interval.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

use crate::error::{Error, Result};

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

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_938_886_805,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Gauss weights for the odd-indexed Kronrod nodes `XGK[1], XGK[3], …`.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub relative: f64,
    pub absolute: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            relative: 1e-9,
            absolute: 0.0,
            max_intervals: 2000,
        }
    }
}

impl Tolerance {
    pub fn relative(relative: f64) -> Self {
        Self {
            relative,
            ..Self::default()
        }
    }

    pub fn with_absolute(mut self, absolute: f64) -> Self {
        self.absolute = absolute;
        self
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> (Complex64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = Complex64::new(0.0, 0.0);
    for j in 0..10 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += pair * WGK[j];
        if j % 2 == 1 {
            gauss += pair * WG[j / 2];
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).norm();
    (value, error)
}

/// Integrates `f` over `[a, b]`, splitting first at every breakpoint that
/// lies strictly inside the interval.
pub fn integrate<F>(mut f: F, a: f64, b: f64, breakpoints: &[f64], tol: Tolerance) -> Result<Integral>
where
    F: FnMut(f64) -> Complex64,
{
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(Error::InvalidParameter(format!("bad integration interval [{a}, {b}]")));
    }
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > a && *x < b)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(a);
    edges.extend(cuts);
    edges.push(b);

    let mut heap = BinaryHeap::new();
    let mut total = Complex64::new(0.0, 0.0);
    let mut total_error = 0.0;
    let mut evaluations = 0;
    for w in edges.windows(2) {
        let (value, error) = gk21(&mut f, w[0], w[1]);
        evaluations += 21;
        total += value;
        total_error += error;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }

    let target = |total: Complex64| tol.absolute.max(tol.relative * total.norm());
    loop {
        if !(total.is_finite() && total_error.is_finite()) {
            return Err(Error::QuadratureFailure {
                tolerance: tol.relative,
                estimate: f64::INFINITY,
            });
        }
        if total_error <= target(total) {
            break;
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::QuadratureFailure {
                tolerance: tol.relative,
                estimate: total_error,
            });
        }
        let worst = heap.pop().expect("at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            return Err(Error::QuadratureFailure {
                tolerance: tol.relative,
                estimate: total_error,
            });
        }
        let (lv, le) = gk21(&mut f, worst.a, mid);
        let (rv, re) = gk21(&mut f, mid, worst.b);
        evaluations += 42;
        total += lv + rv - worst.value;
        total_error += le + re - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: lv,
            error: le,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: rv,
            error: re,
        });
    }

    // Re-sum to shed the round-off accumulated by the running updates.
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(Integral {
        value,
        error,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| c(x.powi(7) - 3.0 * x * x, x), -1.0, 2.0, &[], Tolerance::default()).unwrap();
        let exact = c((256.0 - 1.0) / 8.0 - 9.0, 1.5);
        assert!((r.value - exact).norm() < 1e-13);
        assert_eq!(r.evaluations, 21);
    }

    #[test]
    fn narrow_lorentzian() {
        // ∫ 1/(x - i ε) over [-1, 1] = 2i atan(1/ε)
        let eps = 1e-3;
        let r = integrate(|x| 1.0 / c(x, -eps), -1.0, 1.0, &[0.0], Tolerance::relative(1e-11)).unwrap();
        let exact = c(0.0, 2.0 * (1.0 / eps).atan());
        assert!((r.value - exact).norm() < 1e-10 * exact.norm(), "{:?}", r.value);
    }

    #[test]
    fn oscillatory_exponential() {
        let r = integrate(|x| c(0.0, 40.0 * x).exp(), 0.0, 3.0, &[], Tolerance::relative(1e-12)).unwrap();
        let exact = (c(0.0, 120.0).exp() - 1.0) / c(0.0, 40.0);
        assert!((r.value - exact).norm() < 1e-12);
    }

    #[test]
    fn breakpoints_outside_are_ignored() {
        let r = integrate(|x| c(x.exp(), 0.0), 0.0, 1.0, &[-1.0, 0.0, 5.0, f64::NAN], Tolerance::default())
            .unwrap();
        assert!((r.value.re - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn unreachable_tolerance_fails() {
        let tol = Tolerance {
            relative: 1e-14,
            absolute: 0.0,
            max_intervals: 4,
        };
        let r = integrate(|x| c(1.0 / x.sqrt(), 0.0), 0.0, 1.0, &[], tol);
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
        let r = integrate(|x| c(1.0 / x, 0.0), -1.0, 1.0, &[], Tolerance::default());
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
        assert!(integrate(|_| c(1.0, 0.0), 1.0, 1.0, &[], Tolerance::default()).is_err());
    }
}
