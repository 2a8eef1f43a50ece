//! Adaptive Gauss–Kronrod (7/15) quadrature with global subdivision.
//!
//! Used for every `∫ dr / G(r)` in the crate. Semi-infinite ranges go through the
//! substitution `r = 1/u`, which maps `[a, ∞)` onto `(0, 1/a]`; the Kronrod nodes
//! never touch the endpoints so the integrand is never evaluated at `u = 0`.

#![allow(clippy::excessive_precision)]

use std::collections::BinaryHeap;

use thiserror::Error;

/// Absolute tolerance used for all `1/G` integrals.
pub const DEFAULT_ABS_TOL: f64 = 1e-10;

const MAX_SUBDIVISIONS: usize = 4000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("integrand is not finite at r = {at}")]
    NonFinite { at: f64 },
    #[error("adaptive quadrature did not reach tolerance {tol:e} (estimate {estimate}, error {error:e})")]
    NotConverged { tol: f64, estimate: f64, error: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
}

fn kronrod15<F>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadratureError>
where
    F: Fn(f64) -> f64,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadratureError::NonFinite { at: center });
    }
    let mut gauss = fc * WG[3];
    let mut kronrod = fc * WGK[7];
    for (k, &x) in XGK[..7].iter().enumerate() {
        let dx = half * x;
        let (xl, xr) = (center - dx, center + dx);
        let (fl, fr) = (f(xl), f(xr));
        if !fl.is_finite() {
            return Err(QuadratureError::NonFinite { at: xl });
        }
        if !fr.is_finite() {
            return Err(QuadratureError::NonFinite { at: xr });
        }
        kronrod += WGK[k] * (fl + fr);
        if k % 2 == 1 {
            gauss += WG[k / 2] * (fl + fr);
        }
    }
    let value = kronrod * half;
    let err = ((kronrod - gauss) * half).abs();
    Ok((value, err))
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Integrates `f` over the finite interval `[a, b]` to an absolute tolerance.
pub fn integrate<F>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<Estimate, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(Estimate { value: 0.0, abs_error: 0.0 });
    }
    let (value, err) = kronrod15(&f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, err });
    let mut total = value;
    let mut total_err = err;
    while total_err > abs_tol {
        if heap.len() >= MAX_SUBDIVISIONS {
            return Err(QuadratureError::NotConverged {
                tol: abs_tol,
                estimate: total,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // interval can no longer be split in floating point
            return Err(QuadratureError::NotConverged {
                tol: abs_tol,
                estimate: total,
                error: total_err,
            });
        }
        let (lv, le) = kronrod15(&f, worst.a, mid)?;
        let (rv, re) = kronrod15(&f, mid, worst.b)?;
        heap.push(Piece { a: worst.a, b: mid, value: lv, err: le });
        heap.push(Piece { a: mid, b: worst.b, value: rv, err: re });
        total = heap.iter().map(|p| p.value).sum();
        total_err = heap.iter().map(|p| p.err).sum();
    }
    // Re-sum in interval order so the result does not depend on heap layout.
    let mut pieces = heap.into_vec();
    pieces.sort_by(|x, y| x.a.total_cmp(&y.a));
    Ok(Estimate {
        value: pieces.iter().map(|p| p.value).sum(),
        abs_error: total_err,
    })
}

/// Integrates `f` over `[a, ∞)` with `a > 0` via `r = 1/u`.
pub fn integrate_to_infinity<F>(f: F, a: f64, abs_tol: f64) -> Result<Estimate, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    debug_assert!(a > 0.0);
    integrate(
        |u: f64| {
            let r = 1.0 / u;
            let v = f(r) / (u * u);
            // the integrand decays faster than any power for certified tails; an
            // overflowing G shows up as 0 * inf here
            if v.is_nan() {
                0.0
            } else {
                v
            }
        },
        0.0,
        1.0 / a,
        abs_tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let est = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((est.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn log_integral() {
        let est = integrate(|r| 1.0 / r, 1.0, 100.0, DEFAULT_ABS_TOL).unwrap();
        assert!((est.value - 100f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let fwd = integrate(f64::exp, 0.0, 1.0, 1e-12).unwrap().value;
        let back = integrate(f64::exp, 1.0, 0.0, 1e-12).unwrap().value;
        assert!((fwd + back).abs() < 1e-14);
    }

    #[test]
    fn sinh_tail() {
        // ∫_1^∞ dr / sinh r = -ln tanh(1/2)
        let est = integrate_to_infinity(|r| 1.0 / r.sinh(), 1.0, DEFAULT_ABS_TOL).unwrap();
        assert!((est.value + (0.5f64).tanh().ln()).abs() < 1e-9);
    }

    #[test]
    fn nonfinite_integrand_is_reported() {
        let err = integrate(|x| 1.0 / (x - 0.5), 0.0, 1.0, 1e-10).unwrap_err();
        assert!(matches!(
            err,
            QuadratureError::NonFinite { .. } | QuadratureError::NotConverged { .. }
        ));
    }
}
