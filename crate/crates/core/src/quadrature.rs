//! Globally adaptive Gauss–Kronrod (7/15) quadrature for complex integrands.

use num_complex::Complex64;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not converge: error estimate {estimate:.3e} after {intervals} subintervals")]
    NoConvergence { estimate: f64, intervals: usize },
    #[error("integrand returned a non-finite value at x = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

const MAX_INTERVALS: usize = 20_000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
// Gauss weights for the odd-indexed Kronrod nodes (and the centre).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Result<Segment, QuadratureError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let eval = |x: f64| {
        let v = f(x);
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite(x))
        }
    };
    let fc = eval(c)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (i, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let pair = eval(c - h * x)? + eval(c + h * x)?;
        kronrod += pair * w;
        if i % 2 == 1 {
            gauss += pair * WG[i / 2];
        }
    }
    Ok(Segment {
        a,
        b,
        value: kronrod * h,
        error: ((kronrod - gauss) * h).norm(),
    })
}

/// Integrates `f` over `[a, b]`, bisecting the worst segment until the
/// summed error estimate meets `tol`.
pub fn integrate<F: Fn(f64) -> Complex64>(
    f: F,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<Complex64, QuadratureError> {
    // Seed with enough panels that oscillatory integrands are resolved.
    let panels = 64;
    let width = (b - a) / panels as f64;
    let mut heap = BinaryHeap::with_capacity(4 * panels);
    for i in 0..panels {
        let lo = a + width * i as f64;
        let hi = if i + 1 == panels { b } else { lo + width };
        heap.push(gk15(&f, lo, hi)?);
    }
    let mut total: Complex64 = heap.iter().map(|s| s.value).sum();
    let mut err: f64 = heap.iter().map(|s| s.error).sum();
    loop {
        if err <= tol.abs.max(tol.rel * total.norm()) {
            return Ok(total);
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(QuadratureError::NoConvergence {
                estimate: err,
                intervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (left, right) = (gk15(&f, worst.a, mid)?, gk15(&f, mid, worst.b)?);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: Tolerance = Tolerance {
        abs: 1e-13,
        rel: 1e-12,
    };

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| Complex64::new(x.powi(5) - 2.0 * x, x * x), -1.0, 2.0, TOL).unwrap();
        assert!((v.re - (64.0 / 6.0 - 1.0 / 6.0 - 3.0)).abs() < 1e-12);
        assert!((v.im - 3.0).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_exponential() {
        let v = integrate(|x| Complex64::new(0.0, 5.0 * x).exp(), 0.0, 40.0, TOL).unwrap();
        let exact = (Complex64::new(0.0, 200.0).exp() - 1.0) / Complex64::new(0.0, 5.0);
        assert!((v - exact).norm() < 1e-11);
    }

    #[test]
    fn lorentzian_total_weight() {
        let v = integrate(|x| Complex64::new(1.0 / (1.0 + x * x), 0.0), -1e3, 1e3, TOL).unwrap();
        assert!((v.re - 2.0 * 1e3f64.atan()).abs() < 1e-10);
    }

    #[test]
    fn singular_integrand_fails_to_converge() {
        let err = integrate(|x| Complex64::new(1.0 / x.abs(), 0.0), -1.0, 1.0, TOL);
        assert!(err.is_err());
    }
}
