//! Two-qubit states built from two identical single-qubit maps, their
//! concurrence, and sudden-death detection on concurrence series.

use nalgebra::Matrix4;
use num_complex::Complex64;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::propagator::SingleQubitMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntanglementError {
    #[error("beta must lie strictly between 0 and 1, got {0}")]
    Beta(f64),
    #[error("state is not X-shaped (off-X magnitude {0:.3e}); use concurrence_full")]
    NotXState(f64),
    #[error("series needs at least {needed} points, got {got}")]
    GridTooCoarse { needed: usize, got: usize },
    #[error("time and concurrence series differ in length")]
    LengthMismatch,
}

/// Which Bell-like family the initial state belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BellFamily {
    /// β|01⟩ + η|10⟩ (odd parity).
    Phi,
    /// β|00⟩ + η|11⟩ (even parity).
    Psi,
}

impl fmt::Display for BellFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Phi => "phi",
            Self::Psi => "psi",
        })
    }
}

impl FromStr for BellFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "phi" => Ok(Self::Phi),
            "psi" => Ok(Self::Psi),
            other => Err(format!("unknown family '{other}' (expected phi or psi)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellFamilyState {
    pub family: BellFamily,
    /// Real amplitude β.
    pub beta: f64,
    /// Phase of η = √(1 − β²) e^{iφ}.
    pub phi: f64,
}

impl BellFamilyState {
    pub fn from_beta_sq(family: BellFamily, beta_sq: f64, phi: f64) -> Self {
        Self {
            family,
            beta: beta_sq.sqrt(),
            phi,
        }
    }

    pub fn eta(&self) -> Complex64 {
        Complex64::from_polar((1.0 - self.beta * self.beta).sqrt(), self.phi)
    }
}

/// Basis positions in {|11⟩, |10⟩, |01⟩, |00⟩}.
const IDX_11: usize = 0;
const IDX_10: usize = 1;
const IDX_01: usize = 2;
const IDX_00: usize = 3;

/// Two-qubit density matrix in the basis {|11⟩, |10⟩, |01⟩, |00⟩}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitDensity(pub [[Complex64; 4]; 4]);

impl TwoQubitDensity {
    pub fn trace(&self) -> Complex64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max((self.0[i][j] - self.0[j][i].conj()).norm());
            }
        }
        worst
    }

    /// Largest magnitude outside the diagonal and anti-diagonal.
    pub fn off_x_magnitude(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                if i != j && i + j != 3 {
                    worst = worst.max(self.0[i][j].norm());
                }
            }
        }
        worst
    }

    pub fn to_matrix(&self) -> Matrix4<Complex64> {
        Matrix4::from_fn(|i, j| self.0[i][j])
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let m = self.to_matrix();
        let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        [ev[0], ev[1], ev[2], ev[3]]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        worst
    }
}

pub fn initial_state(spec: &BellFamilyState) -> Result<TwoQubitDensity, EntanglementError> {
    if !(spec.beta > 0.0 && spec.beta < 1.0) {
        return Err(EntanglementError::Beta(spec.beta));
    }
    let mut psi = [Complex64::new(0.0, 0.0); 4];
    let (b, e) = (Complex64::new(spec.beta, 0.0), spec.eta());
    match spec.family {
        BellFamily::Phi => {
            psi[IDX_01] = b;
            psi[IDX_10] = e;
        }
        BellFamily::Psi => {
            psi[IDX_00] = b;
            psi[IDX_11] = e;
        }
    }
    let mut rho = [[Complex64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            rho[i][j] = psi[i] * psi[j].conj();
        }
    }
    Ok(TwoQubitDensity(rho))
}

/// Qubit levels `(a, b)` of each basis index, with 1 = excited.
const LEVELS: [(usize, usize); 4] = [(1, 1), (1, 0), (0, 1), (0, 0)];

/// Position of `|a⟩⟨c|` in the single-qubit vectorization `(ρ11, ρ10, ρ01, ρ00)`.
fn single_index(a: usize, c: usize) -> usize {
    2 * (1 - a) + (1 - c)
}

/// Applies the same single-qubit map to both qubits.
pub fn joint_density(map: &SingleQubitMap, rho0: &TwoQubitDensity) -> TwoQubitDensity {
    let s = map.superoperator();
    // Each output component of the single-qubit map draws from at most two
    // inputs, so the product map is evaluated sparsely.
    let sources: [Vec<(usize, Complex64)>; 4] = std::array::from_fn(|row| {
        (0..4)
            .filter(|&col| s[row][col] != Complex64::new(0.0, 0.0))
            .map(|col| (col, s[row][col]))
            .collect()
    });
    let level_of = |idx: usize| -> (usize, usize) { (1 - idx / 2, 1 - idx % 2) };

    let mut out = [[Complex64::new(0.0, 0.0); 4]; 4];
    for (i, &(a, b)) in LEVELS.iter().enumerate() {
        for (j, &(c, d)) in LEVELS.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(src_a, wa) in &sources[single_index(a, c)] {
                let (a2, c2) = level_of(src_a);
                for &(src_b, wb) in &sources[single_index(b, d)] {
                    let (b2, d2) = level_of(src_b);
                    let k = 2 * (1 - a2) + (1 - b2);
                    let l = 2 * (1 - c2) + (1 - d2);
                    acc += wa * wb * rho0.0[k][l];
                }
            }
            out[i][j] = acc;
        }
    }
    TwoQubitDensity(out)
}

/// Threshold on off-X entries accepted by [`concurrence_x`].
pub const X_SHAPE_TOLERANCE: f64 = 1e-8;

/// Closed-form concurrence of an X-shaped state, `max{0, c₁, c₂}` with
/// `c₁ = 2(|ρ23| − √(ρ11ρ44))` and `c₂ = 2(|ρ14| − √(ρ22ρ33))`.
///
/// Population products are taken in magnitude: a negative product only
/// arises for states that are not positive semidefinite.
pub fn concurrence_x(rho: &TwoQubitDensity) -> Result<f64, EntanglementError> {
    let off = rho.off_x_magnitude();
    if off > X_SHAPE_TOLERANCE {
        return Err(EntanglementError::NotXState(off));
    }
    let (c1, c2) = x_branches(rho);
    Ok(c1.max(c2).max(0.0))
}

/// The two branches `(c₁, c₂)` of the X-state formula before clamping.
pub fn x_branches(rho: &TwoQubitDensity) -> (f64, f64) {
    let r = &rho.0;
    let pop = |i: usize| r[i][i].re;
    let c1 = 2.0
        * (r[IDX_10][IDX_01].norm() - (pop(IDX_11) * pop(IDX_00)).abs().sqrt());
    let c2 = 2.0
        * (r[IDX_11][IDX_00].norm() - (pop(IDX_10) * pop(IDX_01)).abs().sqrt());
    (c1, c2)
}

/// Eigenvalues below this flag a state as not positive semidefinite.
pub const VALIDITY_THRESHOLD: f64 = -1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValidityWarning {
    /// The density matrix has an eigenvalue below −1e-8.
    NegativeEigenvalue(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullConcurrence {
    pub value: f64,
    pub min_eigenvalue: f64,
    pub warning: Option<ValidityWarning>,
}

/// Wootters concurrence. The decreasing λᵢ are the square roots of the
/// eigenvalues of `ρ (σy⊗σy) ρ* (σy⊗σy)`, obtained as the singular values of
/// `τ = Wᵀ (σy⊗σy) W` with `ρ = W W†`. This avoids square roots of rounding
/// noise in near-pure states. Negative eigenvalues of `ρ` are clipped to zero
/// when forming `W`, and a warning is attached when they go below
/// [`VALIDITY_THRESHOLD`].
pub fn concurrence_full(rho: &TwoQubitDensity) -> FullConcurrence {
    let m = rho.to_matrix();
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut w = eig.eigenvectors.clone();
    for (j, &p) in eig.eigenvalues.iter().enumerate() {
        w.column_mut(j).scale_mut(p.max(0.0).sqrt());
    }
    let i = Complex64::new(0.0, 1.0);
    let zero = Complex64::new(0.0, 0.0);
    // σy = [[0, i], [−i, 0]] for the ordering {|1⟩, |0⟩}.
    let sy = nalgebra::Matrix2::new(zero, i, -i, zero);
    let yy = sy.kronecker(&sy);
    let tau = w.transpose() * yy * w;
    let mut lambdas: Vec<f64> = tau.singular_values().iter().copied().collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let value = (lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0);
    let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let warning = (min_eigenvalue < VALIDITY_THRESHOLD)
        .then_some(ValidityWarning::NegativeEigenvalue(min_eigenvalue));
    FullConcurrence {
        value,
        min_eigenvalue,
        warning,
    }
}

/// Death/revival detection settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsdConfig {
    /// Concurrence at or below this counts as zero.
    pub threshold: f64,
    /// Consecutive points required to confirm a death or revival.
    pub window: usize,
}

impl Default for EsdConfig {
    fn default() -> Self {
        Self {
            threshold: 1e-6,
            window: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EsdSummary {
    pub esd_time: Option<f64>,
    pub revival_count: usize,
    pub dark_intervals: Vec<(f64, f64)>,
}

/// Concurrence over time plus its death/revival summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcurrenceSeries {
    pub t_grid: Vec<f64>,
    pub c_values: Vec<f64>,
    pub esd_time: Option<f64>,
    pub revival_count: usize,
    pub dark_intervals: Vec<(f64, f64)>,
}

impl ConcurrenceSeries {
    pub fn new(t_grid: Vec<f64>, c_values: Vec<f64>, cfg: EsdConfig) -> Result<Self, EntanglementError> {
        let s = detect_esd(&t_grid, &c_values, cfg)?;
        Ok(Self {
            t_grid,
            c_values,
            esd_time: s.esd_time,
            revival_count: s.revival_count,
            dark_intervals: s.dark_intervals,
        })
    }
}

/// Time at which the segment `i-1 → i` crosses `level`.
fn crossing(t: &[f64], c: &[f64], i: usize, level: f64) -> f64 {
    let (t0, t1, c0, c1) = (t[i - 1], t[i], c[i - 1], c[i]);
    if (c1 - c0).abs() < f64::MIN_POSITIVE {
        return t1;
    }
    t0 + (level - c0) * (t1 - t0) / (c1 - c0)
}

pub fn detect_esd(t: &[f64], c: &[f64], cfg: EsdConfig) -> Result<EsdSummary, EntanglementError> {
    if t.len() != c.len() {
        return Err(EntanglementError::LengthMismatch);
    }
    let needed = 2 * cfg.window.max(1);
    if t.len() < needed {
        return Err(EntanglementError::GridTooCoarse {
            needed,
            got: t.len(),
        });
    }
    let dark = |i: usize| c[i] <= cfg.threshold;
    let w = cfg.window.max(1);
    // A run of `w` points starting at `i` all satisfying `pred`.
    let sustained = |i: usize, want_dark: bool| i + w <= c.len() && (i..i + w).all(|k| dark(k) == want_dark);

    let mut summary = EsdSummary::default();
    let mut is_dark = dark(0) && sustained(0, true);
    let mut open_start = if is_dark { Some(t[0]) } else { None };
    if is_dark {
        summary.esd_time = Some(t[0]);
    }
    for i in 1..c.len() {
        if !is_dark && dark(i) && !dark(i - 1) && sustained(i, true) {
            let at = crossing(t, c, i, cfg.threshold);
            summary.esd_time.get_or_insert(at);
            open_start = Some(at);
            is_dark = true;
        } else if is_dark && !dark(i) && dark(i - 1) && sustained(i, false) {
            let at = crossing(t, c, i, cfg.threshold);
            if let Some(start) = open_start.take() {
                summary.dark_intervals.push((start, at));
            }
            summary.revival_count += 1;
            is_dark = false;
        }
    }
    if let Some(start) = open_start {
        summary.dark_intervals.push((start, *t.last().expect("non-empty")));
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn bell(family: BellFamily, beta_sq: f64) -> TwoQubitDensity {
        initial_state(&BellFamilyState::from_beta_sq(family, beta_sq, 0.0)).unwrap()
    }

    #[test]
    fn phi_bell_layout() {
        let r = bell(BellFamily::Phi, 0.5).0;
        for (i, j) in [(1, 1), (2, 2), (1, 2), (2, 1)] {
            assert!((r[i][j] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
        assert_eq!(r[0][0], Complex64::new(0.0, 0.0));
        assert_eq!(r[0][3], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn psi_bell_layout() {
        let r = bell(BellFamily::Psi, 0.5).0;
        for (i, j) in [(0, 0), (3, 3), (0, 3), (3, 0)] {
            assert!((r[i][j] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn rejects_beta_out_of_range() {
        for beta in [0.0, 1.0, -0.2, 1.5] {
            let s = BellFamilyState {
                family: BellFamily::Phi,
                beta,
                phi: 0.0,
            };
            assert_eq!(initial_state(&s), Err(EntanglementError::Beta(beta)));
        }
    }

    #[test]
    fn bell_states_are_maximally_entangled() {
        for fam in [BellFamily::Phi, BellFamily::Psi] {
            let rho = bell(fam, 0.5);
            assert!((concurrence_x(&rho).unwrap() - 1.0).abs() < 1e-12);
            assert!((concurrence_full(&rho).value - 1.0).abs() < 1e-12);
        }
        let s = BellFamilyState {
            family: BellFamily::Psi,
            beta: FRAC_1_SQRT_2,
            phi: 0.0,
        };
        assert!((concurrence_full(&initial_state(&s).unwrap()).value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_state_concurrence_for_any_phase() {
        for fam in [BellFamily::Phi, BellFamily::Psi] {
            for k in 1..10 {
                let beta_sq = 0.1 * k as f64;
                let expected = 2.0 * (beta_sq * (1.0 - beta_sq)).sqrt();
                for phi in [0.0, 0.7, 2.5, -1.3] {
                    let rho = initial_state(&BellFamilyState::from_beta_sq(fam, beta_sq, phi)).unwrap();
                    assert!((concurrence_x(&rho).unwrap() - expected).abs() < 1e-12);
                    assert!((concurrence_full(&rho).value - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn near_product_state_has_no_entanglement() {
        let rho = bell(BellFamily::Phi, 1.0 - 1e-14);
        assert!(concurrence_x(&rho).unwrap() < 1e-6);
    }

    #[test]
    fn maximally_mixed_is_separable() {
        let mut r = [[Complex64::new(0.0, 0.0); 4]; 4];
        for (i, row) in r.iter_mut().enumerate() {
            row[i] = Complex64::new(0.25, 0.0);
        }
        let rho = TwoQubitDensity(r);
        assert_eq!(concurrence_x(&rho).unwrap(), 0.0);
        let full = concurrence_full(&rho);
        assert!(full.value.abs() < 1e-12);
        assert!(full.warning.is_none());
    }

    #[test]
    fn non_x_state_is_rejected() {
        let mut rho = bell(BellFamily::Phi, 0.5);
        rho.0[0][1] = Complex64::new(1e-3, 0.0);
        rho.0[1][0] = Complex64::new(1e-3, 0.0);
        assert!(matches!(concurrence_x(&rho), Err(EntanglementError::NotXState(_))));
    }

    #[test]
    fn negative_eigenvalue_is_flagged() {
        let mut r = [[Complex64::new(0.0, 0.0); 4]; 4];
        r[0][0] = Complex64::new(1.1, 0.0);
        r[3][3] = Complex64::new(-0.1, 0.0);
        let full = concurrence_full(&TwoQubitDensity(r));
        assert!(matches!(full.warning, Some(ValidityWarning::NegativeEigenvalue(v)) if (v + 0.1).abs() < 1e-12));
    }

    #[test]
    fn identity_map_leaves_state_unchanged() {
        let rho = bell(BellFamily::Psi, 0.3);
        let out = joint_density(&SingleQubitMap::identity(0.0), &rho);
        assert!(out.max_abs_diff(&rho) < 1e-15);
    }

    #[test]
    fn constant_series_has_no_death() {
        let t: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let s = detect_esd(&t, &vec![1.0; 20], EsdConfig::default()).unwrap();
        assert_eq!(s, EsdSummary::default());
    }

    #[test]
    fn dip_to_zero_then_return() {
        let t: Vec<f64> = (0..=100).map(|i| i as f64 * 0.05).collect();
        let c: Vec<f64> = t
            .iter()
            .map(|&x| if (2.0..=3.0).contains(&x) { 0.0 } else { (x - 2.5).abs() - 0.5 })
            .map(|v: f64| v.max(0.0))
            .collect();
        let s = detect_esd(&t, &c, EsdConfig::default()).unwrap();
        assert!((s.esd_time.unwrap() - 2.0).abs() < 0.05);
        assert_eq!(s.revival_count, 1);
        assert_eq!(s.dark_intervals.len(), 1);
        assert!((s.dark_intervals[0].1 - 3.0).abs() < 0.05);
    }

    #[test]
    fn short_blips_are_ignored() {
        let t: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let mut c = vec![0.5; 40];
        c[10] = 0.0;
        c[11] = 0.0;
        for v in c.iter_mut().skip(20) {
            *v = 0.0;
        }
        c[30] = 0.2;
        let s = detect_esd(&t, &c, EsdConfig::default()).unwrap();
        assert_eq!(s.revival_count, 0);
        assert!((s.esd_time.unwrap() - 20.0).abs() < 1.0);
        assert_eq!(s.dark_intervals, vec![(s.esd_time.unwrap(), 39.0)]);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let t = [0.0, 1.0, 2.0];
        assert!(matches!(
            detect_esd(&t, &[1.0, 1.0, 1.0], EsdConfig::default()),
            Err(EntanglementError::GridTooCoarse { .. })
        ));
    }
}
