//! Dormand–Prince 5(4) integrator for small complex systems.
//!
//! The integrator lands exactly on every requested output time instead of
//! interpolating, so grid values carry the full step accuracy.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("non-finite derivative or state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },
    #[error("output grid must be ascending and non-negative")]
    BadGrid,
}

impl IntegrationError {
    pub fn time(&self) -> Option<f64> {
        match *self {
            Self::StepUnderflow { t } | Self::NonFinite { t } | Self::TooManySteps { t } => Some(t),
            Self::BadGrid => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel: 1e-9,
            abs: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn halved(self) -> Self {
        Self {
            rel: 0.5 * self.rel,
            abs: 0.5 * self.abs,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order weights minus embedded fourth-order weights. The error norm is
// the componentwise maximum.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 10.0;
const MAX_STEPS: usize = 2_000_000;

type State<const N: usize> = [Complex64; N];

fn axpy<const N: usize>(y: &State<N>, h: f64, terms: &[(f64, &State<N>)]) -> State<N> {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(c, k) in terms {
            acc += k[i] * c;
        }
        *o += acc * h;
    }
    out
}

fn all_finite<const N: usize>(y: &State<N>) -> bool {
    y.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Integrates `dy/dt = rhs(t, y)` from `t = 0` and returns the state at each
/// time of `grid`. `rhs` may signal failure by returning `None`.
pub fn integrate<const N: usize, F>(
    mut rhs: F,
    y0: State<N>,
    grid: &[f64],
    tol: Tolerances,
) -> (Vec<State<N>>, Option<IntegrationError>)
where
    F: FnMut(f64, &State<N>) -> Option<State<N>>,
{
    let mut out = Vec::with_capacity(grid.len());
    if grid.first().is_some_and(|&t| t < 0.0) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return (out, Some(IntegrationError::BadGrid));
    }

    let mut eval = |t: f64, y: &State<N>| -> Result<State<N>, IntegrationError> {
        match rhs(t, y) {
            Some(d) if all_finite(&d) => Ok(d),
            _ => Err(IntegrationError::NonFinite { t }),
        }
    };

    let mut t = 0.0;
    let mut y = y0;
    let mut k1 = match eval(t, &y) {
        Ok(k) => k,
        Err(e) => return (out, Some(e)),
    };
    let span = grid.last().copied().unwrap_or(0.0);
    let mut h = initial_step(&y, &k1, tol, span);
    let mut steps = 0usize;

    for &target in grid {
        while t < target {
            if steps >= MAX_STEPS {
                return (out, Some(IntegrationError::TooManySteps { t }));
            }
            steps += 1;
            let remaining = target - t;
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            if step <= 1e-13 * t.abs().max(1.0) && !last {
                return (out, Some(IntegrationError::StepUnderflow { t }));
            }

            let attempt = (|| {
                let k2 = eval(t + C2 * step, &axpy(&y, step, &[(A21, &k1)]))?;
                let k3 = eval(t + C3 * step, &axpy(&y, step, &[(A31, &k1), (A32, &k2)]))?;
                let k4 = eval(
                    t + C4 * step,
                    &axpy(&y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
                )?;
                let k5 = eval(
                    t + C5 * step,
                    &axpy(&y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
                )?;
                let k6 = eval(
                    t + step,
                    &axpy(
                        &y,
                        step,
                        &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                    ),
                )?;
                let y_new = axpy(
                    &y,
                    step,
                    &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
                );
                let k7 = eval(t + step, &y_new)?;
                let mut err_max = 0.0f64;
                for i in 0..N {
                    let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6
                        + k7[i] * E7)
                        * step;
                    let scale = tol.abs + tol.rel * y[i].norm().max(y_new[i].norm());
                    err_max = err_max.max(e.norm() / scale);
                }
                Ok((y_new, k7, err_max))
            })();

            let (y_new, k7, err) = match attempt {
                Ok(v) => v,
                // A non-finite stage is treated as a rejected step.
                Err(IntegrationError::NonFinite { .. }) => {
                    h = 0.25 * step;
                    if h <= 1e-13 * t.abs().max(1.0) {
                        return (out, Some(IntegrationError::StepUnderflow { t }));
                    }
                    continue;
                }
                Err(e) => return (out, Some(e)),
            };

            let scale = if err == 0.0 {
                MAX_SCALE
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_SCALE, MAX_SCALE)
            };
            if err <= 1.0 && all_finite(&y_new) {
                t = if last { target } else { t + step };
                y = y_new;
                k1 = k7;
                // Keep the unclipped step when the grid forced a short one.
                h = if last { h.max(step * scale) } else { step * scale };
            } else {
                h = step * scale.min(1.0);
                if h <= 1e-13 * t.abs().max(1.0) {
                    return (out, Some(IntegrationError::StepUnderflow { t }));
                }
            }
        }
        out.push(y);
    }
    (out, None)
}

fn initial_step<const N: usize>(y: &State<N>, dy: &State<N>, tol: Tolerances, span: f64) -> f64 {
    let mut d0 = 0.0f64;
    let mut d1 = 0.0f64;
    for i in 0..N {
        let sc = tol.abs + tol.rel * y[i].norm();
        d0 = d0.max(y[i].norm() / sc);
        d1 = d1.max(dy[i].norm() / sc);
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.clamp(1e-10, span.max(1e-10))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn exponential_decay_and_rotation() {
        let w = Complex64::new(-0.7, 3.0);
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let (ys, err) = integrate(|_, y: &[Complex64; 1]| Some([w * y[0]]), [c(1.0)], &grid, Tolerances::default());
        assert!(err.is_none());
        for (t, y) in grid.iter().zip(&ys) {
            assert!((y[0] - (w * *t).exp()).norm() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn time_dependent_linear_system() {
        // y' = 2t y, y(0) = 1 → e^{t²}
        let grid = [0.0, 0.5, 1.0, 1.5];
        let (ys, err) = integrate(|t, y: &[Complex64; 1]| Some([y[0] * (2.0 * t)]), [c(1.0)], &grid, Tolerances::default());
        assert!(err.is_none());
        for (t, y) in grid.iter().zip(&ys) {
            let exact = (t * t).exp();
            assert!((y[0].re - exact).abs() < 1e-8 * exact);
        }
    }

    #[test]
    fn blow_up_is_reported_near_singular_time() {
        // y' = y², y(0) = 1 → 1/(1 − t)
        let grid = [0.5, 2.0];
        let (ys, err) = integrate(|_, y: &[Complex64; 1]| Some([y[0] * y[0]]), [c(1.0)], &grid, Tolerances::default());
        assert_eq!(ys.len(), 1);
        let t_star = err.expect("must fail").time().unwrap();
        assert!((t_star - 1.0).abs() < 1e-3, "t* = {t_star}");
    }

    #[test]
    fn rejects_descending_grid() {
        let (_, err) = integrate(|_, y: &[Complex64; 1]| Some(*y), [c(1.0)], &[1.0, 0.5], Tolerances::default());
        assert_eq!(err, Some(IntegrationError::BadGrid));
    }

    #[test]
    fn zero_time_returns_initial_state() {
        let (ys, err) = integrate(|_, y: &[Complex64; 1]| Some(*y), [c(2.0)], &[0.0, 0.0 + 1e-3], Tolerances::default());
        assert!(err.is_none());
        assert_eq!(ys[0][0], c(2.0));
    }
}
