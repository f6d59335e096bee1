//! Closed-form reservoir functions feeding the single-qubit master equation.
//!
//! Everything is expressed in units of the Lorentzian width: rates and
//! frequencies are ratios to γ and times are γt, so γ itself never appears
//! as a parameter.

use num_complex::Complex64;
use std::f64::consts::TAU;
use thiserror::Error;

use crate::quadrature::{self, QuadratureError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("coupling strength must be finite and non-negative, got {0}")]
    Lambda(f64),
    #[error("transition frequency must be finite and positive, got {0}")]
    Omega0(f64),
    #[error("squeeze magnitude must be finite and non-negative, got {0}")]
    Squeeze(f64),
    #[error("squeeze phase must be finite, got {0}")]
    Phase(f64),
}

/// Physical inputs of one qubit–reservoir pair, in units of γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReservoirParams {
    /// Coupling strength λ/γ. Zero is the decoupled limit.
    pub lambda: f64,
    /// Atomic transition frequency ω₀/γ.
    pub omega0: f64,
    /// Squeeze magnitude r.
    pub r: f64,
    /// Squeeze phase θ in radians.
    pub theta: f64,
}

impl ReservoirParams {
    pub fn new(lambda: f64, omega0: f64, r: f64, theta: f64) -> Result<Self, ParamError> {
        let params = Self {
            lambda,
            omega0,
            r,
            theta,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(ParamError::Lambda(self.lambda));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(ParamError::Omega0(self.omega0));
        }
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(ParamError::Squeeze(self.r));
        }
        if !self.theta.is_finite() {
            return Err(ParamError::Phase(self.theta));
        }
        Ok(())
    }

    /// Squeeze phase reduced to [0, 2π).
    pub fn theta_wrapped(&self) -> f64 {
        self.theta.rem_euclid(TAU)
    }

    /// `γ + 2iω₀` with γ = 1.
    fn counter_rate(&self) -> Complex64 {
        Complex64::new(1.0, 2.0 * self.omega0)
    }
}

/// Second moments of the squeezed vacuum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeMoments {
    /// Mean photon number per mode, sinh²r.
    pub n: f64,
    /// Anomalous correlation −e^{iθ} sinh r cosh r.
    pub m: Complex64,
}

pub fn squeeze_moments(params: &ReservoirParams) -> SqueezeMoments {
    let (s, c) = (params.r.sinh(), params.r.cosh());
    SqueezeMoments {
        n: s * s,
        m: -Complex64::from_polar(s * c, params.theta),
    }
}

/// Running integrals of the reservoir kernels at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSample {
    pub t: f64,
    /// Running integral of the counter-rotating kernel.
    pub alpha: Complex64,
    /// Running integral of the resonant kernel.
    pub f: f64,
    /// Time integral of `alpha`.
    pub alpha_tilde: Complex64,
    /// Time integral of `f`.
    pub big_f: f64,
}

/// `1 − e^{−z t}` without cancellation for small |z t|.
fn one_minus_exp(z: Complex64, t: f64) -> Complex64 {
    let w = -z * t;
    if w.norm() < 1e-5 {
        // −(w + w²/2 + w³/6)
        -(w * (1.0 + w * (0.5 + w / 6.0)))
    } else {
        1.0 - w.exp()
    }
}

pub fn correlations(params: &ReservoirParams, t: f64) -> CorrelationSample {
    let lam = params.lambda;
    let z = params.counter_rate();
    let decay = one_minus_exp(z, t);
    let alpha = lam * decay / (2.0 * z);
    let alpha_tilde = lam * (t - decay / z) / (2.0 * z);
    let f = 0.5 * lam * (-(-t).exp_m1());
    // t − (1 − e^{−t}) = t + expm1(−t)
    let big_f = 0.5 * lam * (t + (-t).exp_m1());
    CorrelationSample {
        t,
        alpha,
        f,
        alpha_tilde,
        big_f,
    }
}

/// Resonant (rotating-wave) reservoir kernel, `(λ/2) e^{−t}`.
pub fn kernel_resonant(params: &ReservoirParams, t: f64) -> Complex64 {
    Complex64::new(0.5 * params.lambda * (-t).exp(), 0.0)
}

/// Counter-rotating reservoir kernel, `(λ/2) e^{(−1 + 2iω₀) t}`.
pub fn kernel_counter(params: &ReservoirParams, t: f64) -> Complex64 {
    0.5 * params.lambda * Complex64::new(-t, 2.0 * params.omega0 * t).exp()
}

/// Coefficients of the time-local generator at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorCoeffs {
    pub gamma: f64,
    pub eps0: Complex64,
    pub eps_plus: Complex64,
    pub eps_minus: Complex64,
    pub nu0: f64,
    pub nu_plus: f64,
    pub nu_minus: f64,
}

pub fn generator_coeffs(params: &ReservoirParams, t: f64) -> GeneratorCoeffs {
    let SqueezeMoments { n, m } = squeeze_moments(params);
    let CorrelationSample { alpha, f, .. } = correlations(params, t);
    coeffs_from(params.omega0, n, m, alpha, f)
}

pub(crate) fn coeffs_from(
    omega0: f64,
    n: f64,
    m: Complex64,
    alpha: Complex64,
    f: f64,
) -> GeneratorCoeffs {
    let (mr, mi) = (m.re, m.im);
    let (ar, ai) = (alpha.re, alpha.im);
    let two_n1 = 2.0 * n + 1.0;

    let gamma = 2.0 * mr * f + 2.0 * (mr * ar + mi * ai) + two_n1 * (f + ar);
    let eps0 = Complex64::new(
        0.0,
        -2.0 * (omega0 + 2.0 * (mi * ar - mi * f - mr * ar) - two_n1 * ar),
    );
    let eps_plus = 2.0 * m * f + 2.0 * m.conj() * alpha + two_n1 * (f + alpha);
    let eps_minus = 2.0 * m * alpha.conj() + 2.0 * m.conj() * f + two_n1 * (f + alpha.conj());
    let nu0 = 2.0 * (ar - f);
    let shared = mr * f + mr * ar + mi * ai;
    let nu_plus = 2.0 * (shared + n * f + (n + 1.0) * ar);
    let nu_minus = 2.0 * (shared + (n + 1.0) * f + n * ar);

    GeneratorCoeffs {
        gamma,
        eps0,
        eps_plus,
        eps_minus,
        nu0,
        nu_plus,
        nu_minus,
    }
}

/// Exponent Γ_k(t) of the scalar prefactor e^{−Γ_k} of the exact map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccumulatedDecay {
    pub gamma_k: f64,
}

pub fn accumulated_decay(params: &ReservoirParams, t: f64) -> AccumulatedDecay {
    let SqueezeMoments { n, m } = squeeze_moments(params);
    let c = correlations(params, t);
    let gamma_k = (2.0 * m.re + 2.0 * n + 1.0) * (c.big_f + c.alpha_tilde.re)
        + 2.0 * m.im * c.alpha_tilde.im;
    AccumulatedDecay { gamma_k }
}

/// Half-width of the frequency window used by [`kernel_quadrature_check`].
pub const KERNEL_WINDOW: f64 = 50.0;

/// Lorentzian spectral density `J(ω) = (λ/2π) / ((ω − ω₀)² + 1)`.
pub fn spectral_density(params: &ReservoirParams, omega: f64) -> f64 {
    let d = omega - params.omega0;
    params.lambda / TAU / (d * d + 1.0)
}

/// Largest deviation between the closed-form kernels and adaptive quadrature
/// of the Lorentzian over `[ω₀ − 50, ω₀ + 50]`.
pub fn kernel_quadrature_check(params: &ReservoirParams, t: f64) -> Result<f64, QuadratureError> {
    let (lo, hi) = (params.omega0 - KERNEL_WINDOW, params.omega0 + KERNEL_WINDOW);
    let w0 = params.omega0;
    let tol = quadrature::Tolerance {
        abs: 1e-12 * params.lambda.max(1.0),
        rel: 1e-10,
    };
    let resonant = quadrature::integrate(
        |w| spectral_density(params, w) * Complex64::new(0.0, -(w - w0) * t).exp(),
        lo,
        hi,
        tol,
    )?;
    let counter = quadrature::integrate(
        |w| spectral_density(params, w) * Complex64::new(0.0, (w + w0) * t).exp(),
        lo,
        hi,
        tol,
    )?;
    let d1 = (resonant - kernel_resonant(params, t)).norm();
    let d2 = (counter - kernel_counter(params, t)).norm();
    Ok(d1.max(d2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn figure_params() -> ReservoirParams {
        ReservoirParams::new(10.0, 10.0, 0.2, FRAC_PI_4).unwrap()
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(ReservoirParams::new(-1.0, 1.0, 0.0, 0.0).is_err());
        assert!(ReservoirParams::new(1.0, 0.0, 0.0, 0.0).is_err());
        assert!(ReservoirParams::new(1.0, 1.0, -0.1, 0.0).is_err());
        assert!(ReservoirParams::new(1.0, 1.0, 0.1, f64::NAN).is_err());
        assert!(ReservoirParams::new(0.0, 1.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn vacuum_moments_vanish() {
        let p = ReservoirParams::new(10.0, 10.0, 0.0, 1.3).unwrap();
        let sm = squeeze_moments(&p);
        assert_eq!(sm.n, 0.0);
        assert_eq!(sm.m, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn moments_at_figure_point() {
        let sm = squeeze_moments(&figure_params());
        assert!((sm.n - 0.040_536).abs() < 1e-6);
        // −sinh(0.2)cosh(0.2)/√2
        assert!((sm.m.re + 0.145_222_877_481_658_5).abs() < 1e-12);
        assert!((sm.m.im + 0.145_222_877_481_658_5).abs() < 1e-12);
        assert!((sm.m.norm_sqr() - sm.n * (sm.n + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn correlations_vanish_at_origin() {
        let c = correlations(&figure_params(), 0.0);
        assert_eq!(c.f, 0.0);
        assert_eq!(c.big_f, 0.0);
        assert_eq!(c.alpha.norm(), 0.0);
        assert_eq!(c.alpha_tilde.norm(), 0.0);
    }

    #[test]
    fn correlations_at_unit_time() {
        let c = correlations(&figure_params(), 1.0);
        // 5(1 − e^{−1}) and 5 e^{−1}
        assert!((c.f - 3.160_602_794_142_788).abs() < 1e-12);
        assert!((c.big_f - 1.839_397_205_857_212).abs() < 1e-12);
    }

    #[test]
    fn alpha_steady_limit() {
        let c = correlations(&figure_params(), 60.0);
        let expected = Complex64::new(5.0, -100.0) / 401.0;
        assert!((c.alpha - expected).norm() < 1e-15);
        assert!((c.alpha.re - 0.012_469).abs() < 1e-6);
        assert!((c.alpha.im + 0.249_377).abs() < 1e-6);
    }

    #[test]
    fn generator_at_origin_is_free_precession() {
        let p = figure_params();
        let g = generator_coeffs(&p, 0.0);
        assert_eq!(g.gamma, 0.0);
        assert_eq!(g.nu0, 0.0);
        assert_eq!(g.nu_plus, 0.0);
        assert_eq!(g.nu_minus, 0.0);
        assert_eq!(g.eps_plus.norm(), 0.0);
        assert_eq!(g.eps_minus.norm(), 0.0);
        assert_eq!(g.eps0, Complex64::new(0.0, -20.0));
    }

    #[test]
    fn generator_matches_extended_precision_values() {
        // Reference values evaluated independently at 40 significant digits.
        let g = generator_coeffs(&figure_params(), 1.0);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12 * b.abs().max(1.0);
        assert!(close(g.gamma, 2.633_793_565_952_926_679_3));
        assert!(close(g.eps0.re, 0.0) && close(g.eps0.im, -21.631_966_795_228_302_61));
        assert!(close(g.eps_plus.re, 2.633_793_565_952_926_679_3));
        assert!(close(g.eps_plus.im, -1.054_833_443_142_070_339_3));
        assert!(close(g.eps_minus.re, 2.633_793_565_952_926_679_3));
        assert!(close(g.eps_minus.im, 1.054_833_443_142_070_339_3));
        assert!(close(g.nu0, -6.132_503_574_013_655_623_6));
        assert!(close(g.nu_plus, -0.432_458_221_053_901_132_52));
        assert!(close(g.nu_minus, 5.700_045_352_959_754_491_1));
        let gk = accumulated_decay(&figure_params(), 1.0).gamma_k;
        assert!(close(gk, 1.543_053_864_466_033_974_9));
    }

    #[test]
    fn accumulated_decay_is_the_integral_of_gamma() {
        let p = figure_params();
        let tol = crate::quadrature::Tolerance { abs: 1e-13, rel: 1e-13 };
        for &t in &[0.5, 1.0, 3.0] {
            let q = crate::quadrature::integrate(|s| Complex64::new(generator_coeffs(&p, s).gamma, 0.0), 0.0, t, tol)
                .unwrap();
            assert!((q.re - accumulated_decay(&p, t).gamma_k).abs() <= 1e-9, "t={t}");
        }
    }

    #[test]
    fn decoupled_generator() {
        let p = ReservoirParams::new(0.0, 3.5, 0.7, 2.0).unwrap();
        for &t in &[0.0, 0.3, 4.0] {
            let g = generator_coeffs(&p, t);
            assert_eq!(g.gamma, 0.0);
            assert_eq!(g.eps0, Complex64::new(0.0, -7.0));
            assert_eq!(g.eps_plus.norm() + g.eps_minus.norm(), 0.0);
            assert_eq!(g.nu0.abs() + g.nu_plus.abs() + g.nu_minus.abs(), 0.0);
        }
    }

    #[test]
    fn vacuum_decay_reduces() {
        let p = ReservoirParams::new(7.0, 4.0, 0.0, 0.9).unwrap();
        for &t in &[0.0, 0.5, 2.0, 5.0] {
            let c = correlations(&p, t);
            let gk = accumulated_decay(&p, t).gamma_k;
            assert!((gk - (c.big_f + c.alpha_tilde.re)).abs() <= 1e-12);
        }
        assert_eq!(accumulated_decay(&p, 0.0).gamma_k, 0.0);
    }

    #[test]
    fn antiderivatives_match_by_central_difference() {
        let p = figure_params();
        let h = 1e-4;
        for &t in &[0.1, 0.7, 1.0, 2.5, 4.9] {
            let (a, b) = (correlations(&p, t + h), correlations(&p, t - h));
            let c = correlations(&p, t);
            let dat = (a.alpha_tilde - b.alpha_tilde) / (2.0 * h);
            let dbf = (a.big_f - b.big_f) / (2.0 * h);
            assert!((dat - c.alpha).norm() < 1e-6, "t={t}");
            assert!((dbf - c.f).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn kernels_are_derivatives_of_running_integrals() {
        // d f/dt = α₁ and d α/dt = conj(α₂)
        let p = figure_params();
        let h = 1e-5;
        for &t in &[0.2, 1.5, 3.0] {
            let df = (correlations(&p, t + h).f - correlations(&p, t - h).f) / (2.0 * h);
            assert!((df - kernel_resonant(&p, t).re).abs() < 1e-7);
            let da = (correlations(&p, t + h).alpha - correlations(&p, t - h).alpha) / (2.0 * h);
            assert!((da - kernel_counter(&p, t).conj()).norm() < 1e-6);
        }
    }

    #[test]
    fn quadrature_check_decoupled_is_zero() {
        let p = ReservoirParams::new(0.0, 10.0, 0.2, 0.0).unwrap();
        assert_eq!(kernel_quadrature_check(&p, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_check_late_time() {
        let p = figure_params();
        let res = kernel_quadrature_check(&p, 5.0).unwrap();
        assert!(res <= 1e-3 * p.lambda, "residual {res}");
    }
}
