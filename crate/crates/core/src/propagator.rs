//! Exact single-qubit evolution through the disentangled product of
//! exponentials.
//!
//! The time-ordered exponentials of the coherence algebra (J₀, J±) and the
//! population algebra (K₀, K±) are each written as
//! `e^{X₊ A₊} e^{X₀ A₀} e^{X₋ A₋}`, whose scalar functions obey
//!
//! ```text
//! X₊' = μ₊ − μ₋ X₊² + μ₀ X₊
//! X₀' = μ₀ − 2 μ₋ X₊
//! X₋' = μ₋ e^{X₀}
//! ```
//!
//! with `μ = ε` for the J family and `μ = υ` for the K family, all starting
//! from zero so that the map is the identity at t = 0.

use num_complex::Complex64;
use thiserror::Error;

use crate::coefficients::{
    accumulated_decay, coeffs_from, correlations, squeeze_moments, AccumulatedDecay,
    ReservoirParams,
};
use crate::ode::{self, IntegrationError, Tolerances};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagatorError {
    #[error("propagator singularity at t = {t}")]
    Singularity { t: f64 },
    #[error("map overflow at t = {t}")]
    MapOverflow { t: f64 },
    #[error("time grid must be strictly ascending and non-negative")]
    BadGrid,
}

impl PropagatorError {
    pub fn time(&self) -> Option<f64> {
        match *self {
            Self::Singularity { t } | Self::MapOverflow { t } => Some(t),
            Self::BadGrid => None,
        }
    }
}

impl From<IntegrationError> for PropagatorError {
    fn from(e: IntegrationError) -> Self {
        match e.time() {
            Some(t) => Self::Singularity { t },
            None => Self::BadGrid,
        }
    }
}

/// Disentangling functions at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiState {
    pub t: f64,
    pub j_plus: Complex64,
    pub j_zero: Complex64,
    pub j_minus: Complex64,
    pub k_plus: f64,
    pub k_zero: f64,
    pub k_minus: f64,
}

impl RiccatiState {
    pub fn zero(t: f64) -> Self {
        Self {
            t,
            j_plus: Complex64::new(0.0, 0.0),
            j_zero: Complex64::new(0.0, 0.0),
            j_minus: Complex64::new(0.0, 0.0),
            k_plus: 0.0,
            k_zero: 0.0,
            k_minus: 0.0,
        }
    }
}

// State layout: [j₊, j₀, j₋, k₊, k₀, k₋]. The K family is carried as complex
// numbers with zero imaginary parts; υ is real so they stay exactly real.
type Packed = [Complex64; 6];

fn riccati_triplet(
    mu0: Complex64,
    mu_plus: Complex64,
    mu_minus: Complex64,
    x_plus: Complex64,
    x_zero: Complex64,
) -> Option<[Complex64; 3]> {
    let e = x_zero.exp();
    if !(e.re.is_finite() && e.im.is_finite()) {
        return None;
    }
    Some([
        mu_plus - mu_minus * x_plus * x_plus + mu0 * x_plus,
        mu0 - 2.0 * mu_minus * x_plus,
        mu_minus * e,
    ])
}

fn riccati_rhs(params: &ReservoirParams, t: f64, y: &Packed) -> Option<Packed> {
    let sm = squeeze_moments(params);
    let c = correlations(params, t);
    let g = coeffs_from(params.omega0, sm.n, sm.m, c.alpha, c.f);
    let j = riccati_triplet(g.eps0, g.eps_plus, g.eps_minus, y[0], y[1])?;
    let k = riccati_triplet(
        Complex64::new(g.nu0, 0.0),
        Complex64::new(g.nu_plus, 0.0),
        Complex64::new(g.nu_minus, 0.0),
        y[3],
        y[4],
    )?;
    Some([j[0], j[1], j[2], k[0], k[1], k[2]])
}

fn unpack(t: f64, y: &Packed) -> RiccatiState {
    RiccatiState {
        t,
        j_plus: y[0],
        j_zero: y[1],
        j_minus: y[2],
        k_plus: y[3].re,
        k_zero: y[4].re,
        k_minus: y[5].re,
    }
}

/// Integrates the disentangling system, returning every state reached before
/// a failure together with the failure itself.
pub fn integrate_riccati_partial(
    params: &ReservoirParams,
    t_grid: &[f64],
    tol: Tolerances,
) -> (Vec<RiccatiState>, Option<PropagatorError>) {
    let zero = Complex64::new(0.0, 0.0);
    let (ys, err) = ode::integrate(|t, y| riccati_rhs(params, t, y), [zero; 6], t_grid, tol);
    let states = t_grid.iter().zip(&ys).map(|(&t, y)| unpack(t, y)).collect();
    (states, err.map(PropagatorError::from))
}

/// Disentangling functions on every time of `t_grid` (integration starts at
/// t = 0 regardless of the first grid time).
pub fn integrate_riccati(
    params: &ReservoirParams,
    t_grid: &[f64],
    tol: Tolerances,
) -> Result<Vec<RiccatiState>, PropagatorError> {
    match integrate_riccati_partial(params, t_grid, tol) {
        (states, None) => Ok(states),
        (_, Some(e)) => Err(e),
    }
}

/// Elements of the exact single-qubit map. The physical map is these times
/// `e^{−Γ_k}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleQubitMap {
    pub t: f64,
    pub l: f64,
    pub m: f64,
    pub n: f64,
    pub p: f64,
    pub q: Complex64,
    pub r_map: Complex64,
    pub x: Complex64,
    pub y: Complex64,
    pub gamma_k: f64,
}

/// 4×4 superoperator on `(ρ11, ρ10, ρ01, ρ00)`.
pub type Superop = [[Complex64; 4]; 4];

impl SingleQubitMap {
    pub fn identity(t: f64) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self {
            t,
            l: 1.0,
            m: 0.0,
            n: 1.0,
            p: 0.0,
            q: one,
            r_map: zero,
            x: one,
            y: zero,
            gamma_k: 0.0,
        }
    }

    /// The physical map, prefactor included, as a matrix on the vectorized
    /// density matrix.
    pub fn superoperator(&self) -> Superop {
        let s = (-self.gamma_k).exp();
        let re = |v: f64| Complex64::new(v * s, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        [
            [re(self.l), zero, zero, re(self.m)],
            [zero, self.x * s, self.y * s, zero],
            [zero, self.r_map * s, self.q * s, zero],
            [re(self.p), zero, zero, re(self.n)],
        ]
    }
}

fn finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

pub fn assemble_map(
    state: &RiccatiState,
    decay: AccumulatedDecay,
) -> Result<SingleQubitMap, PropagatorError> {
    let t = state.t;
    let overflow = PropagatorError::MapOverflow { t };

    let (ek_up, ek_down) = ((0.5 * state.k_zero).exp(), (-0.5 * state.k_zero).exp());
    if !(ek_up.is_finite() && ek_down.is_finite()) {
        return Err(overflow);
    }
    let (ej_up, ej_down) = ((0.5 * state.j_zero).exp(), (-0.5 * state.j_zero).exp());
    if !(finite(ej_up) && finite(ej_down)) {
        return Err(overflow);
    }

    let map = SingleQubitMap {
        t,
        l: ek_up + ek_down * state.k_plus * state.k_minus,
        m: ek_down * state.k_plus,
        n: ek_down,
        p: ek_down * state.k_minus,
        q: ej_down,
        r_map: ej_down * state.j_minus,
        x: ej_up + ej_down * state.j_plus * state.j_minus,
        y: ej_down * state.j_plus,
        gamma_k: decay.gamma_k,
    };
    let reals = [map.l, map.m, map.n, map.p, map.gamma_k];
    let complexes = [map.q, map.r_map, map.x, map.y];
    if reals.iter().all(|v| v.is_finite()) && complexes.iter().all(|&z| finite(z)) {
        Ok(map)
    } else {
        Err(overflow)
    }
}

/// Maps on every time reached before a failure, plus the failure.
pub fn propagate_partial(
    params: &ReservoirParams,
    t_grid: &[f64],
    tol: Tolerances,
) -> (Vec<SingleQubitMap>, Option<PropagatorError>) {
    let (states, mut err) = integrate_riccati_partial(params, t_grid, tol);
    let mut maps = Vec::with_capacity(states.len());
    for s in &states {
        match assemble_map(s, accumulated_decay(params, s.t)) {
            Ok(m) => maps.push(m),
            Err(e) => {
                err = Some(e);
                break;
            }
        }
    }
    (maps, err)
}

/// Exact maps on every time of `t_grid`.
pub fn propagate(
    params: &ReservoirParams,
    t_grid: &[f64],
    tol: Tolerances,
) -> Result<Vec<SingleQubitMap>, PropagatorError> {
    integrate_riccati(params, t_grid, tol)?
        .iter()
        .map(|s| assemble_map(s, accumulated_decay(params, s.t)))
        .collect()
}

/// Single-qubit density matrix in the basis `{|1⟩, |0⟩}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitDensity(pub [[Complex64; 2]; 2]);

impl QubitDensity {
    pub fn from_entries(rho11: Complex64, rho10: Complex64, rho01: Complex64, rho00: Complex64) -> Self {
        Self([[rho11, rho10], [rho01, rho00]])
    }

    pub fn excited() -> Self {
        let (one, zero) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        Self::from_entries(one, zero, zero, zero)
    }

    pub fn ground() -> Self {
        let (one, zero) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        Self::from_entries(zero, zero, zero, one)
    }

    /// Pure state `a|1⟩ + b|0⟩`, normalized.
    pub fn pure(a: Complex64, b: Complex64) -> Self {
        let norm = a.norm_sqr() + b.norm_sqr();
        let (a, b) = (a / norm.sqrt(), b / norm.sqrt());
        Self::from_entries(a * a.conj(), a * b.conj(), b * a.conj(), b * b.conj())
    }

    /// `(ρ11, ρ10, ρ01, ρ00)`.
    pub fn to_vec(&self) -> [Complex64; 4] {
        [self.0[0][0], self.0[0][1], self.0[1][0], self.0[1][1]]
    }

    pub fn from_vec(v: [Complex64; 4]) -> Self {
        Self::from_entries(v[0], v[1], v[2], v[3])
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    /// Largest deviation from Hermiticity.
    pub fn hermitian_defect(&self) -> f64 {
        let a = &self.0;
        (a[0][1] - a[1][0].conj())
            .norm()
            .max(a[0][0].im.abs())
            .max(a[1][1].im.abs())
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = &self.0;
        let (d1, d0) = (a[0][0].re, a[1][1].re);
        let off = 0.5 * (a[0][1] + a[1][0].conj());
        let mean = 0.5 * (d1 + d0);
        let rad = (0.25 * (d1 - d0).powi(2) + off.norm_sqr()).sqrt();
        [mean - rad, mean + rad]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.to_vec()
            .iter()
            .zip(other.to_vec().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

pub fn evolve_qubit(map: &SingleQubitMap, rho0: &QubitDensity) -> QubitDensity {
    let s = (-map.gamma_k).exp();
    let [[r11, r10], [r01, r00]] = rho0.0;
    QubitDensity([
        [(r11 * map.l + r00 * map.m) * s, (map.x * r10 + map.y * r01) * s],
        [(map.q * r01 + map.r_map * r10) * s, (r00 * map.n + r11 * map.p) * s],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn figure_params() -> ReservoirParams {
        ReservoirParams::new(10.0, 10.0, 0.2, FRAC_PI_4).unwrap()
    }

    fn grid(t_max: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn decoupled_riccati_is_pure_phase() {
        let p = ReservoirParams::new(0.0, 3.0, 0.4, 1.0).unwrap();
        let g = grid(4.0, 21);
        let states = integrate_riccati(&p, &g, Tolerances::default()).unwrap();
        for s in &states {
            assert!((s.j_zero - Complex64::new(0.0, -6.0 * s.t)).norm() < 1e-9);
            assert_eq!(s.j_plus.norm() + s.j_minus.norm(), 0.0);
            assert_eq!(s.k_plus.abs() + s.k_zero.abs() + s.k_minus.abs(), 0.0);
        }
    }

    #[test]
    fn origin_state_is_zero() {
        let states = integrate_riccati(&figure_params(), &[0.0, 0.5], Tolerances::default()).unwrap();
        assert_eq!(states[0], RiccatiState::zero(0.0));
    }

    #[test]
    fn zero_state_assembles_identity() {
        let m = assemble_map(&RiccatiState::zero(0.0), AccumulatedDecay { gamma_k: 0.0 }).unwrap();
        assert_eq!(m, SingleQubitMap::identity(0.0));
    }

    #[test]
    fn decoupled_map_rotates_coherences() {
        let p = ReservoirParams::new(0.0, 2.5, 0.0, 0.0).unwrap();
        let t = 1.3;
        let maps = propagate(&p, &[t], Tolerances::default()).unwrap();
        let m = maps[0];
        assert!((m.x - Complex64::new(0.0, -2.5 * t).exp()).norm() < 1e-9);
        assert!((m.q - Complex64::new(0.0, 2.5 * t).exp()).norm() < 1e-9);
        assert_eq!((m.l, m.m, m.n, m.p), (1.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn ground_state_is_stationary_when_decoupled() {
        let p = ReservoirParams::new(0.0, 5.0, 0.0, 0.0).unwrap();
        for m in propagate(&p, &grid(3.0, 7), Tolerances::default()).unwrap() {
            let rho = evolve_qubit(&m, &QubitDensity::ground());
            assert!(rho.max_abs_diff(&QubitDensity::ground()) < 1e-12);
        }
    }

    #[test]
    fn map_preserves_trace() {
        let p = figure_params();
        for m in propagate(&p, &grid(5.0, 51), Tolerances::default()).unwrap() {
            let s = (-m.gamma_k).exp();
            assert!((s * (m.l + m.p) - 1.0).abs() < 1e-9, "t={}", m.t);
            assert!((s * (m.m + m.n) - 1.0).abs() < 1e-9, "t={}", m.t);
        }
    }

    #[test]
    fn self_convergence_under_halved_tolerance() {
        let p = figure_params();
        let tol = Tolerances::default();
        let a = integrate_riccati(&p, &[1.0], tol).unwrap()[0];
        let b = integrate_riccati(&p, &[1.0], tol.halved()).unwrap()[0];
        let diffs = [
            (a.j_plus - b.j_plus).norm(),
            (a.j_zero - b.j_zero).norm(),
            (a.j_minus - b.j_minus).norm(),
            (a.k_plus - b.k_plus).abs(),
            (a.k_zero - b.k_zero).abs(),
            (a.k_minus - b.k_minus).abs(),
        ];
        for d in diffs {
            assert!(d <= 1e-7, "{diffs:?}");
        }
    }

    #[test]
    fn evolved_state_is_hermitian_with_unit_trace() {
        let p = figure_params();
        let rho0 = QubitDensity::pure(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8));
        for m in propagate(&p, &grid(5.0, 26), Tolerances::default()).unwrap() {
            let rho = evolve_qubit(&m, &rho0);
            assert!((rho.trace() - 1.0).norm() < 1e-9, "t = {}", m.t);
            assert!(rho.hermitian_defect() < 1e-10, "t = {}", m.t);
        }
    }

    #[test]
    fn rejects_bad_grid() {
        let err = integrate_riccati(&figure_params(), &[1.0, 0.5], Tolerances::default());
        assert_eq!(err, Err(PropagatorError::BadGrid));
    }
}
