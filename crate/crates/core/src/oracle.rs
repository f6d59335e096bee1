//! Direct integration of the master equation as a 4×4 linear system.
//!
//! Vectorization order is `(ρ11, ρ10, ρ01, ρ00)` throughout. This path shares
//! the coefficient functions with the algebraic propagator but not its
//! integration route, so agreement between the two checks the disentangling.

use num_complex::Complex64;
use thiserror::Error;

use crate::coefficients::{generator_coeffs, ReservoirParams};
use crate::ode::{self, IntegrationError, Tolerances};
use crate::entanglement::TwoQubitDensity;
use crate::propagator::{QubitDensity, Superop};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("direct integration failed at t = {t}")]
    Integration { t: f64 },
    #[error("time grid must be strictly ascending and non-negative")]
    BadGrid,
}

impl From<IntegrationError> for OracleError {
    fn from(e: IntegrationError) -> Self {
        match e.time() {
            Some(t) => Self::Integration { t },
            None => Self::BadGrid,
        }
    }
}

/// Superoperator matrices with every entry doubled, so that all six are
/// integer valued (J₀ and K₀ carry halves).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DoubledSuperops {
    pub j0: [[i64; 4]; 4],
    pub j_plus: [[i64; 4]; 4],
    pub j_minus: [[i64; 4]; 4],
    pub k0: [[i64; 4]; 4],
    pub k_plus: [[i64; 4]; 4],
    pub k_minus: [[i64; 4]; 4],
}

/// The six superoperators as complex matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Superops {
    pub j0: Superop,
    pub j_plus: Superop,
    pub j_minus: Superop,
    pub k0: Superop,
    pub k_plus: Superop,
    pub k_minus: Superop,
}

// 2×2 helpers in basis {|1⟩, |0⟩}, with entries scaled by two.
type M2 = [[i64; 2]; 2];
const SIGMA_Z: M2 = [[1, 0], [0, -1]];
const SIGMA_PLUS: M2 = [[0, 1], [0, 0]];
const SIGMA_MINUS: M2 = [[0, 0], [1, 0]];
const EXCITED: M2 = [[1, 0], [0, 0]];

fn mul2(a: &M2, b: &M2) -> M2 {
    let mut out = [[0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = (0..2).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn basis(idx: usize) -> M2 {
    let mut e = [[0; 2]; 2];
    e[idx / 2][idx % 2] = 1;
    e
}

fn vectorize(m: &M2) -> [i64; 4] {
    [m[0][0], m[0][1], m[1][0], m[1][1]]
}

/// Builds the matrix of a superoperator by applying it to the four basis
/// matrices; `op` must return twice the image.
fn tabulate(op: impl Fn(&M2) -> M2) -> [[i64; 4]; 4] {
    let mut out = [[0; 4]; 4];
    for col in 0..4 {
        let image = vectorize(&op(&basis(col)));
        for row in 0..4 {
            out[row][col] = image[row];
        }
    }
    out
}

pub fn doubled_superoperators() -> DoubledSuperops {
    let scale = |m: M2| m.map(|r| r.map(|v| 2 * v));
    DoubledSuperops {
        // 2·[σz/4, ρ] = (σz ρ − ρ σz)/2; entries of the commutator are even.
        j0: tabulate(|r| {
            let (a, b) = (mul2(&SIGMA_Z, r), mul2(r, &SIGMA_Z));
            let mut out = [[0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] = (a[i][j] - b[i][j]) / 2;
                }
            }
            out
        }),
        j_plus: tabulate(|r| scale(mul2(&mul2(&SIGMA_PLUS, r), &SIGMA_PLUS))),
        j_minus: tabulate(|r| scale(mul2(&mul2(&SIGMA_MINUS, r), &SIGMA_MINUS))),
        // 2·K₀ρ = P ρ + ρ P − ρ with P = σ₊σ₋.
        k0: tabulate(|r| {
            debug_assert_eq!(mul2(&SIGMA_PLUS, &SIGMA_MINUS), EXCITED);
            let (a, b) = (mul2(&EXCITED, r), mul2(r, &EXCITED));
            let mut out = [[0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] = a[i][j] + b[i][j] - r[i][j];
                }
            }
            out
        }),
        k_plus: tabulate(|r| scale(mul2(&mul2(&SIGMA_PLUS, r), &SIGMA_MINUS))),
        k_minus: tabulate(|r| scale(mul2(&mul2(&SIGMA_MINUS, r), &SIGMA_PLUS))),
    }
}

fn halve(m: &[[i64; 4]; 4]) -> Superop {
    m.map(|row| row.map(|v| Complex64::new(v as f64 * 0.5, 0.0)))
}

pub fn superoperator_matrices() -> Superops {
    let d = doubled_superoperators();
    Superops {
        j0: halve(&d.j0),
        j_plus: halve(&d.j_plus),
        j_minus: halve(&d.j_minus),
        k0: halve(&d.k0),
        k_plus: halve(&d.k_plus),
        k_minus: halve(&d.k_minus),
    }
}

/// Generator of the master equation at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiouvillianSample {
    pub t: f64,
    pub matrix: Superop,
}

impl LiouvillianSample {
    /// `d(tr ρ)/dt` coefficients: sum of the ρ11 and ρ00 rows.
    pub fn trace_row(&self) -> [Complex64; 4] {
        let mut out = [Complex64::new(0.0, 0.0); 4];
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.matrix[0][c] + self.matrix[3][c];
        }
        out
    }
}

pub fn liouvillian(params: &ReservoirParams, t: f64) -> LiouvillianSample {
    let g = generator_coeffs(params, t);
    let s = superoperator_matrices();
    let terms: [(Complex64, &Superop); 6] = [
        (g.eps0, &s.j0),
        (g.eps_plus, &s.j_plus),
        (g.eps_minus, &s.j_minus),
        (Complex64::new(g.nu0, 0.0), &s.k0),
        (Complex64::new(g.nu_plus, 0.0), &s.k_plus),
        (Complex64::new(g.nu_minus, 0.0), &s.k_minus),
    ];
    let mut matrix = [[Complex64::new(0.0, 0.0); 4]; 4];
    for (i, row) in matrix.iter_mut().enumerate() {
        row[i] -= g.gamma;
        for (j, entry) in row.iter_mut().enumerate() {
            for (coef, op) in &terms {
                *entry += *coef * op[i][j];
            }
        }
    }
    LiouvillianSample { t, matrix }
}

fn apply(m: &Superop, v: &[Complex64; 4]) -> [Complex64; 4] {
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out
}

/// Integrates `dv/dt = L(t) v` from `rho0` and returns the state at every
/// time of `t_grid`.
pub fn evolve_direct(
    params: &ReservoirParams,
    rho0: &QubitDensity,
    t_grid: &[f64],
    tol: Tolerances,
) -> Result<Vec<QubitDensity>, OracleError> {
    let (ys, err) = ode::integrate(
        |t, v| Some(apply(&liouvillian(params, t).matrix, v)),
        rho0.to_vec(),
        t_grid,
        tol,
    );
    if let Some(e) = err {
        return Err(e.into());
    }
    Ok(ys.into_iter().map(QubitDensity::from_vec).collect())
}

/// Integrates the full 4×4 propagator `dU/dt = L(t) U`, `U(0) = I`.
pub fn propagator_direct(
    params: &ReservoirParams,
    t_grid: &[f64],
    tol: Tolerances,
) -> Result<Vec<Superop>, OracleError> {
    let zero = Complex64::new(0.0, 0.0);
    let mut init = [zero; 16];
    for i in 0..4 {
        init[5 * i] = Complex64::new(1.0, 0.0);
    }
    let (ys, err) = ode::integrate(
        |t, u: &[Complex64; 16]| {
            let l = liouvillian(params, t).matrix;
            let mut du = [zero; 16];
            for i in 0..4 {
                for j in 0..4 {
                    du[4 * i + j] = (0..4).map(|k| l[i][k] * u[4 * k + j]).sum();
                }
            }
            Some(du)
        },
        init,
        t_grid,
        tol,
    );
    if let Some(e) = err {
        return Err(e.into());
    }
    Ok(ys
        .into_iter()
        .map(|u| {
            let mut m = [[zero; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    m[i][j] = u[4 * i + j];
                }
            }
            m
        })
        .collect())
}

/// Applies `u ⊗ u` to a two-qubit state by expanding `rho0` over the
/// product basis `|a⟩⟨c| ⊗ |b⟩⟨d|`, mapping each factor with `u`, and
/// recombining the images with an explicit Kronecker product.
pub fn joint_density_kron(u: &Superop, rho0: &TwoQubitDensity) -> TwoQubitDensity {
    use nalgebra::Matrix2;
    let zero = Complex64::new(0.0, 0.0);
    // Image of the single-qubit unit matrix |a⟩⟨c|, basis {|1⟩, |0⟩}.
    let image = |row: usize, col: usize| -> Matrix2<Complex64> {
        let mut unit = Matrix2::from_element(zero);
        unit[(row, col)] = Complex64::new(1.0, 0.0);
        let v = [unit[(0, 0)], unit[(0, 1)], unit[(1, 0)], unit[(1, 1)]];
        let w = apply(u, &v);
        Matrix2::new(w[0], w[1], w[2], w[3])
    };
    let mut out = nalgebra::Matrix4::from_element(zero);
    for k in 0..4 {
        for l in 0..4 {
            let c = rho0.0[k][l];
            if c == zero {
                continue;
            }
            let first = image(k / 2, l / 2);
            let second = image(k % 2, l % 2);
            out += first.kronecker(&second) * c;
        }
    }
    TwoQubitDensity(std::array::from_fn(|i| std::array::from_fn(|j| out[(i, j)])))
}

/// Integer matrix product and commutator helpers for the algebra checks.
pub mod algebra {
    pub type IMat = [[i64; 4]; 4];

    pub fn mul(a: &IMat, b: &IMat) -> IMat {
        let mut out = [[0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        out
    }

    pub fn commutator(a: &IMat, b: &IMat) -> IMat {
        let (ab, ba) = (mul(a, b), mul(b, a));
        let mut out = [[0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = ab[i][j] - ba[i][j];
            }
        }
        out
    }

    pub fn scale(a: &IMat, k: i64) -> IMat {
        a.map(|r| r.map(|v| v * k))
    }

    /// Every relation of the two commuting su(2) copies, on doubled
    /// matrices: a relation `[A, B] = c·C` becomes `[2A, 2B] = 2c·(2C)`.
    /// Returns `(name, holds)` pairs.
    pub fn check_relations(d: &super::DoubledSuperops) -> Vec<(String, bool)> {
        let mut out = Vec::new();
        for (fam, zero, plus, minus) in [
            ("J", &d.j0, &d.j_plus, &d.j_minus),
            ("K", &d.k0, &d.k_plus, &d.k_minus),
        ] {
            out.push((
                format!("[{fam}-,{fam}+] = -2{fam}0"),
                commutator(minus, plus) == scale(zero, -4),
            ));
            out.push((
                format!("[{fam}0,{fam}+] = +{fam}+"),
                commutator(zero, plus) == scale(plus, 2),
            ));
            out.push((
                format!("[{fam}0,{fam}-] = -{fam}-"),
                commutator(zero, minus) == scale(minus, -2),
            ));
        }
        let js = [("J0", &d.j0), ("J+", &d.j_plus), ("J-", &d.j_minus)];
        let ks = [("K0", &d.k0), ("K+", &d.k_plus), ("K-", &d.k_minus)];
        for (kn, k) in ks {
            for (jn, j) in js {
                out.push((format!("[{kn},{jn}] = 0"), commutator(k, j) == [[0; 4]; 4]));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn j0_is_half_diagonal() {
        let s = superoperator_matrices();
        let diag: Vec<Complex64> = (0..4).map(|i| s.j0[i][i]).collect();
        assert_eq!(diag, vec![c(0.0), c(0.5), c(-0.5), c(0.0)]);
        let k0: Vec<Complex64> = (0..4).map(|i| s.k0[i][i]).collect();
        assert_eq!(k0, vec![c(0.5), c(0.0), c(0.0), c(-0.5)]);
    }

    #[test]
    fn raising_lowering_have_single_entries() {
        let d = doubled_superoperators();
        let count = |m: &[[i64; 4]; 4]| m.iter().flatten().filter(|&&v| v != 0).count();
        for m in [&d.j_plus, &d.j_minus, &d.k_plus, &d.k_minus] {
            assert_eq!(count(m), 1);
        }
        // J₊ feeds ρ01 into ρ10; K₊ feeds ρ00 into ρ11.
        assert_eq!(d.j_plus[1][2], 2);
        assert_eq!(d.j_minus[2][1], 2);
        assert_eq!(d.k_plus[0][3], 2);
        assert_eq!(d.k_minus[3][0], 2);
    }

    #[test]
    fn commutation_relations_hold_exactly() {
        for (name, ok) in algebra::check_relations(&doubled_superoperators()) {
            assert!(ok, "{name}");
        }
    }

    #[test]
    fn liouvillian_at_origin() {
        let p = ReservoirParams::new(10.0, 10.0, 0.2, FRAC_PI_4).unwrap();
        let l = liouvillian(&p, 0.0).matrix;
        for i in 0..4 {
            for j in 0..4 {
                let expected = match (i, j) {
                    (1, 1) => Complex64::new(0.0, -10.0),
                    (2, 2) => Complex64::new(0.0, 10.0),
                    _ => c(0.0),
                };
                assert!((l[i][j] - expected).norm() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn decoupled_liouvillian_is_constant() {
        let p = ReservoirParams::new(0.0, 4.0, 0.5, 1.0).unwrap();
        let l0 = liouvillian(&p, 0.0).matrix;
        assert_eq!(liouvillian(&p, 3.7).matrix, l0);
    }

    #[test]
    fn generator_preserves_trace() {
        let p = ReservoirParams::new(13.0, 4.2, 0.9, 2.2).unwrap();
        for &t in &[0.1, 1.0, 3.3] {
            for v in liouvillian(&p, t).trace_row() {
                assert!(v.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn decoupled_free_precession() {
        let p = ReservoirParams::new(0.0, 3.0, 0.0, 0.0).unwrap();
        let rho0 = QubitDensity::pure(c(1.0), c(1.0));
        let grid = [0.0, 0.7, 2.0];
        let out = evolve_direct(&p, &rho0, &grid, Tolerances::default()).unwrap();
        assert_eq!(out[0], rho0);
        for (t, rho) in grid.iter().zip(&out) {
            assert!((rho.0[0][0] - c(0.5)).norm() < 1e-12);
            let phase = Complex64::new(0.0, -3.0 * t).exp();
            assert!((rho.0[0][1] - phase * 0.5).norm() < 1e-9);
        }
    }

    #[test]
    fn evolution_is_linear() {
        let p = ReservoirParams::new(8.0, 5.0, 0.4, 0.3).unwrap();
        let r1 = QubitDensity::pure(c(0.3), Complex64::new(0.4, 0.5));
        let r2 = QubitDensity::excited();
        let a = 0.35;
        let mix = QubitDensity::from_vec(std::array::from_fn(|i| {
            r1.to_vec()[i] * a + r2.to_vec()[i] * (1.0 - a)
        }));
        let grid = [0.5, 2.0, 4.0];
        let tol = Tolerances::default();
        let e1 = evolve_direct(&p, &r1, &grid, tol).unwrap();
        let e2 = evolve_direct(&p, &r2, &grid, tol).unwrap();
        let em = evolve_direct(&p, &mix, &grid, tol).unwrap();
        for k in 0..grid.len() {
            let combo = QubitDensity::from_vec(std::array::from_fn(|i| {
                e1[k].to_vec()[i] * a + e2[k].to_vec()[i] * (1.0 - a)
            }));
            assert!(combo.max_abs_diff(&em[k]) < 1e-9);
        }
    }
}
