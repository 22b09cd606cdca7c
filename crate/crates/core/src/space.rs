//! The composite Hilbert space `(ion 1 spin) ⊗ (ion 2 spin) ⊗ (motion)`,
//! its elementary operators and the physical parameter set of the gate.
//!
//! Spin basis order per ion is `|↑⟩ = 0`, `|↓⟩ = 1`; the dressed basis order
//! is `|+⟩ = 0`, `|−⟩ = 1`, where `|±⟩ = (|↑⟩ ± |↓⟩)/√2`. With these orders
//! the single-ion change of basis is the Hadamard matrix, which is its own
//! inverse. Composite index of `|s1, s2, n⟩` is `(2·s1 + s2)·(n_max+1) + n`.

use serde::{Deserialize, Serialize};

use crate::error::{GateError, Result};
use crate::linalg::{DenseMatrix, SparseOp};
use crate::scalar::{cone, czero, Real, C};

/// CODATA 2018 values used everywhere a physical constant is needed.
pub mod constants {
    /// Reduced Planck constant, J·s.
    pub const HBAR: f64 = 1.054_571_817e-34;
    /// Unified atomic mass unit, kg.
    pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
    /// Mass of ⁹Be, in atomic mass units.
    pub const BE9_MASS_U: f64 = 9.012_183_1;
}

/// Single-ion computational basis state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    Up = 0,
    Down = 1,
}

/// Single-ion dressed basis state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dressed {
    Plus = 0,
    Minus = 1,
}

/// Highest retained Fock level of the gate mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FockCutoff {
    n_max: usize,
}

impl FockCutoff {
    /// Default cutoff for thermal occupations up to 0.3.
    pub const DEFAULT_N_MAX: usize = 15;

    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(GateError::param("n_max", "Fock cutoff must be at least 1"));
        }
        Ok(Self { n_max })
    }

    pub fn n_max(self) -> usize {
        self.n_max
    }

    /// Number of retained motional levels.
    pub fn motional_dim(self) -> usize {
        self.n_max + 1
    }

    /// Dimension of the full two-ion composite space.
    pub fn dim(self) -> usize {
        4 * (self.n_max + 1)
    }

    /// Composite index of `|s1, s2, n⟩`.
    #[inline]
    pub fn index(self, s1: Spin, s2: Spin, n: usize) -> usize {
        debug_assert!(n <= self.n_max);
        (2 * s1 as usize + s2 as usize) * self.motional_dim() + n
    }

    /// Composite index from a two-ion spin index in `0..4`.
    #[inline]
    pub fn index_of(self, spin_pair: usize, n: usize) -> usize {
        spin_pair * self.motional_dim() + n
    }
}

impl Default for FockCutoff {
    fn default() -> Self {
        Self {
            n_max: Self::DEFAULT_N_MAX,
        }
    }
}

impl TryFrom<usize> for FockCutoff {
    type Error = GateError;
    fn try_from(n: usize) -> Result<Self> {
        Self::new(n)
    }
}

impl From<FockCutoff> for usize {
    fn from(c: FockCutoff) -> usize {
        c.n_max
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeLabel {
    Com,
    Stretch,
}

/// Axial normal mode seen by the two ions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeGeometry<T: Real = f64> {
    pub label: ModeLabel,
    /// Mode angular frequency, rad/s.
    pub omega_nu: T,
    /// Normalized per-ion participation `(ξ₁, ξ₂)`.
    pub xi: [T; 2],
    /// Single-ion mass, kg.
    pub ion_mass: T,
    /// Projection of the Raman difference wave vector on the trap axis, 1/m.
    pub delta_k_z: T,
}

impl<T: Real> ModeGeometry<T> {
    pub fn new(label: ModeLabel, omega_nu: T, ion_mass: T, delta_k_z: T) -> Self {
        let h = T::FRAC_1_SQRT_2();
        let xi = match label {
            ModeLabel::Com => [h, h],
            ModeLabel::Stretch => [h, -h],
        };
        Self {
            label,
            omega_nu,
            xi,
            ion_mass,
            delta_k_z,
        }
    }

    /// ⁹Be⁺ pair addressed by counter-propagating 313 nm Raman beams at 90°,
    /// `Δk_z = 2√2·π/λ`.
    pub fn beryllium(label: ModeLabel, mode_frequency_hz: f64, wavelength_m: f64) -> Self {
        let dk = 2.0 * std::f64::consts::SQRT_2 * std::f64::consts::PI / wavelength_m;
        Self::new(
            label,
            T::lit(2.0 * std::f64::consts::PI * mode_frequency_hz),
            T::lit(constants::BE9_MASS_U * constants::ATOMIC_MASS_UNIT),
            T::lit(dk),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let norm = self.xi[0] * self.xi[0] + self.xi[1] * self.xi[1];
        if (norm - T::one()).abs() > T::state_tol() {
            return Err(GateError::param("xi", "mode amplitudes must satisfy ξ₁² + ξ₂² = 1"));
        }
        let h = T::FRAC_1_SQRT_2();
        let tol = T::state_tol();
        let ok = match self.label {
            ModeLabel::Com => (self.xi[0] - h).abs() < tol && (self.xi[1] - h).abs() < tol,
            ModeLabel::Stretch => (self.xi[0] - h).abs() < tol && (self.xi[1] + h).abs() < tol,
        };
        if !ok {
            return Err(GateError::param("xi", "amplitudes do not match the mode label"));
        }
        if !(self.omega_nu > T::zero()) || !(self.ion_mass > T::zero()) {
            return Err(GateError::param("geometry", "mass and mode frequency must be positive"));
        }
        if !(self.delta_k_z >= T::zero()) {
            return Err(GateError::param("delta_k_z", "must be non-negative"));
        }
        Ok(())
    }
}

/// Lamb-Dicke parameter `η = Δk_z·√(ħ / 2mω_ν)`.
pub fn lamb_dicke<T: Real>(geometry: &ModeGeometry<T>) -> Result<T> {
    if !(geometry.ion_mass > T::zero()) {
        return Err(GateError::param("ion_mass", "must be positive"));
    }
    if !(geometry.omega_nu > T::zero()) {
        return Err(GateError::param("omega_nu", "must be positive"));
    }
    if !(geometry.delta_k_z >= T::zero()) {
        return Err(GateError::param("delta_k_z", "must be non-negative"));
    }
    let hbar = T::lit(constants::HBAR);
    let z0 = (hbar / (T::lit(2.0) * geometry.ion_mass * geometry.omega_nu)).sqrt();
    Ok(geometry.delta_k_z * z0)
}

/// Every physical symbol of the lab-frame gate Hamiltonian. Frequencies are
/// angular (rad/s), phases in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams<T: Real = f64> {
    /// Carrier Rabi frequency `Ω_C`.
    pub omega_c: T,
    /// Resonant base Rabi frequency `Ω₀` of the sideband beams.
    pub omega_0: T,
    pub eta: T,
    /// Sideband detuning `δ` (blue of the sideband resonance).
    pub delta: T,
    /// Carrier phase `φ`.
    pub phi: T,
    /// Per-ion sideband phases `φ′_j`.
    pub phi_prime: [T; 2],
    pub geometry: ModeGeometry<T>,
    pub cutoff: FockCutoff,
}

impl<T: Real> GateParams<T> {
    /// Parameters with `η` derived from the geometry and zero phases.
    pub fn new(omega_c: T, omega_0: T, delta: T, geometry: ModeGeometry<T>, cutoff: FockCutoff) -> Result<Self> {
        let eta = lamb_dicke(&geometry)?;
        let p = Self {
            omega_c,
            omega_0,
            eta,
            delta,
            phi: T::zero(),
            phi_prime: [T::zero(); 2],
            geometry,
            cutoff,
        };
        p.validate()?;
        Ok(p)
    }

    /// Per-ion sideband Rabi frequency `Ω_j = Ω₀·η·ξ_j`.
    #[inline]
    pub fn sideband_rabi(&self, ion: usize) -> T {
        self.omega_0 * self.eta * self.geometry.xi[ion]
    }

    /// Sets `Ω₀` so that `|Ω_j| = per_ion` for a mode with `|ξ_j| = 1/√2`.
    pub fn with_sideband_rabi(mut self, per_ion: T) -> Self {
        self.omega_0 = per_ion / (self.eta * self.geometry.xi[0].abs());
        self
    }

    pub fn with_cutoff(mut self, cutoff: FockCutoff) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let finite = [self.omega_c, self.omega_0, self.eta, self.delta, self.phi]
            .iter()
            .chain(self.phi_prime.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(GateError::param("gate_params", "all values must be finite"));
        }
        if !(self.delta > T::zero()) {
            return Err(GateError::param("delta", "blue-detuned gate requires δ > 0"));
        }
        if self.omega_c < T::zero() || self.omega_0 < T::zero() || self.eta < T::zero() {
            return Err(GateError::param("gate_params", "Rabi frequencies and η must be non-negative"));
        }
        Ok(())
    }
}

/// Lowering and raising operators on the truncated oscillator.
pub fn ladder_operators<T: Real>(cutoff: FockCutoff) -> (SparseOp<T>, SparseOp<T>) {
    let dim = cutoff.motional_dim();
    let lowering = SparseOp::from_triplets(
        dim,
        (1..dim)
            .map(|n| (n - 1, n, C::new(T::from_usize_lossy(n).sqrt(), T::zero())))
            .collect(),
    );
    let raising = lowering.adjoint();
    (lowering, raising)
}

fn pauli<T: Real>(entries: &[(usize, usize, C<T>)]) -> SparseOp<T> {
    SparseOp::from_triplets(2, entries.to_vec())
}

/// `σ⁺ = |↑⟩⟨↓|` on one ion.
pub fn sigma_plus_single<T: Real>() -> SparseOp<T> {
    pauli(&[(Spin::Up as usize, Spin::Down as usize, cone())])
}

pub fn sigma_z_single<T: Real>() -> SparseOp<T> {
    pauli(&[(0, 0, cone()), (1, 1, -cone::<T>())])
}

/// Embeds `(ion-1 op) ⊗ (ion-2 op) ⊗ (motion op)`.
pub fn embed<T: Real>(ion1: &SparseOp<T>, ion2: &SparseOp<T>, motion: &SparseOp<T>) -> SparseOp<T> {
    ion1.kron(ion2).kron(motion)
}

/// Embeds a single-ion operator on `ion` (0 or 1) with identities elsewhere.
pub fn embed_ion<T: Real>(op: &SparseOp<T>, ion: usize, motion: &SparseOp<T>) -> SparseOp<T> {
    let id = SparseOp::identity(2);
    if ion == 0 {
        embed(op, &id, motion)
    } else {
        embed(&id, op, motion)
    }
}

/// Spin operators of both ions embedded in the composite space.
#[derive(Clone, Debug)]
pub struct SpinOperators<T: Real = f64> {
    pub plus: [SparseOp<T>; 2],
    pub minus: [SparseOp<T>; 2],
    pub x: [SparseOp<T>; 2],
    pub z: [SparseOp<T>; 2],
}

pub fn spin_operators<T: Real>(cutoff: FockCutoff) -> SpinOperators<T> {
    let id_m = SparseOp::identity(cutoff.motional_dim());
    let sp = sigma_plus_single::<T>();
    let sm = sp.adjoint();
    let sx = sp.plus(&sm);
    let sz = sigma_z_single::<T>();
    let both = |op: &SparseOp<T>| [embed_ion(op, 0, &id_m), embed_ion(op, 1, &id_m)];
    SpinOperators {
        plus: both(&sp),
        minus: both(&sm),
        x: both(&sx),
        z: both(&sz),
    }
}

/// Single-ion change of basis from `(↑, ↓)` to `(+, −)` coordinates.
pub fn dressed_change_of_basis_single<T: Real>() -> DenseMatrix<T> {
    let h = C::new(T::FRAC_1_SQRT_2(), T::zero());
    DenseMatrix::from_row_major(2, vec![h, h, h, -h])
}

/// Two-ion change of basis `{|↑⟩,|↓⟩}⊗² → {|+⟩,|−⟩}⊗²`; unitary and self-inverse.
pub fn dressed_change_of_basis<T: Real>() -> DenseMatrix<T> {
    let b = dressed_change_of_basis_single::<T>();
    b.kron(&b)
}

/// The two-ion change of basis acting on the composite space (identity on motion).
pub fn dressed_change_of_basis_composite<T: Real>(cutoff: FockCutoff) -> SparseOp<T> {
    SparseOp::from_dense(&dressed_change_of_basis::<T>()).kron(&SparseOp::identity(cutoff.motional_dim()))
}

/// Thermal (geometric) distribution over retained Fock levels.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalState<T: Real = f64> {
    pub n_bar: T,
    /// `p_n = n̄ⁿ/(1+n̄)ⁿ⁺¹` before renormalization.
    pub raw_populations: Vec<T>,
    /// Renormalized over `0..=n_max`.
    pub populations: Vec<T>,
    /// Probability mass above `n_max` that was discarded.
    pub truncated_weight: T,
}

impl<T: Real> ThermalState<T> {
    pub fn mean_occupation(&self) -> T {
        self.populations
            .iter()
            .enumerate()
            .map(|(n, p)| T::from_usize_lossy(n) * *p)
            .sum()
    }

    pub fn density(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.populations.len());
        for (n, p) in self.populations.iter().enumerate() {
            m[(n, n)] = C::new(*p, T::zero());
        }
        m
    }

    pub fn is_ground(&self) -> bool {
        self.populations[0] == T::one()
    }
}

pub fn thermal_state<T: Real>(n_bar: T, cutoff: FockCutoff) -> Result<ThermalState<T>> {
    if !(n_bar >= T::zero()) || !n_bar.is_finite() {
        return Err(GateError::param("n_bar", "mean occupation must be finite and non-negative"));
    }
    let dim = cutoff.motional_dim();
    let ratio = n_bar / (T::one() + n_bar);
    let p0 = T::one() / (T::one() + n_bar);
    let raw: Vec<T> = (0..dim).map(|n| p0 * ratio.powi(n as i32)).collect();
    let truncated_weight = ratio.powi(dim as i32);
    let kept: T = raw.iter().copied().sum();
    let populations = raw.iter().map(|p| *p / kept).collect();
    if truncated_weight > T::lit(1e-6) {
        log::warn!(
            "thermal state n̄ = {n_bar} loses weight {truncated_weight:e} above n_max = {}",
            cutoff.n_max()
        );
    }
    Ok(ThermalState {
        n_bar,
        raw_populations: raw,
        populations,
        truncated_weight,
    })
}

/// Two-ion spin amplitudes in `(↑↑, ↑↓, ↓↑, ↓↓)` order.
pub fn spin_basis<T: Real>(s1: Spin, s2: Spin) -> [C<T>; 4] {
    let mut v = [czero(); 4];
    v[2 * s1 as usize + s2 as usize] = cone();
    v
}

/// `(|↓↓⟩ + |↑↑⟩)/√2`
pub fn bell_target<T: Real>() -> [C<T>; 4] {
    let h = C::new(T::FRAC_1_SQRT_2(), T::zero());
    [h, czero(), czero(), h]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn commutator(a: &SparseOp<f64>, b: &SparseOp<f64>) -> DenseMatrix<f64> {
        a.matmul(b).to_dense().sub(&b.matmul(a).to_dense())
    }

    #[test]
    fn cutoff_rejects_zero() {
        assert!(FockCutoff::new(0).is_err());
        assert!(FockCutoff::new(1).is_ok());
    }

    #[test]
    fn ladder_matrix_elements() {
        let (a, ad) = ladder_operators::<f64>(FockCutoff::new(2).unwrap());
        // a|1> = |0>
        let v = a.mul_vec(&[czero(), cone(), czero()]);
        assert_relative_eq!(v[0].re, 1.0);
        assert_eq!(v[1], czero());
        let (a3, _) = ladder_operators::<f64>(FockCutoff::new(3).unwrap());
        let d = a3.to_dense();
        assert_relative_eq!(d[(2, 3)].re, 1.732_050_807_568_877_2, epsilon = 1e-15);
        assert!(ad.to_dense().max_abs_diff(&a.to_dense().adjoint()) == 0.0);
    }

    #[test]
    fn ladder_commutator_has_truncation_corner() {
        for n_max in 1..6 {
            let c = FockCutoff::new(n_max).unwrap();
            let (a, ad) = ladder_operators::<f64>(c);
            let comm = commutator(&a, &ad);
            // independent oracle: explicit double loop over matrix elements
            for r in 0..=n_max {
                for col in 0..=n_max {
                    let expect = if r != col {
                        0.0
                    } else if r < n_max {
                        1.0
                    } else {
                        -(n_max as f64)
                    };
                    assert!((comm[(r, col)].re - expect).abs() < 1e-12);
                    assert!(comm[(r, col)].im.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn spin_operator_algebra() {
        let c = FockCutoff::new(2).unwrap();
        let s = spin_operators::<f64>(c);
        let mut psi = vec![czero(); c.dim()];
        psi[c.index(Spin::Down, Spin::Down, 0)] = cone();
        let out = s.plus[0].mul_vec(&psi);
        assert_eq!(out[c.index(Spin::Up, Spin::Down, 0)], cone());
        assert_relative_eq!(crate::linalg::norm_sqr(&out), 1.0);
        assert_eq!(s.plus[0].matmul(&s.plus[0]).nnz(), 0);
        assert!(commutator(&s.z[0], &s.x[1]).max_abs_diff(&DenseMatrix::zeros(c.dim())) == 0.0);
        assert!(s.plus[1].adjoint().to_dense().max_abs_diff(&s.minus[1].to_dense()) == 0.0);
        for op in s.x.iter().chain(s.z.iter()) {
            assert!(op.hermiticity_error() <= 1e-12);
        }
    }

    #[test]
    fn dressed_basis_is_involutive_unitary() {
        let u = dressed_change_of_basis::<f64>();
        let id = DenseMatrix::identity(4);
        assert!(u.matmul(&u).max_abs_diff(&id) < 1e-12);
        assert!(u.matmul(&u.adjoint()).max_abs_diff(&id) < 1e-12);
        // |↑> -> (|+> + |->)/√2 on one ion
        let b = dressed_change_of_basis_single::<f64>();
        let up = b.matvec(&[cone(), czero()]);
        assert_relative_eq!(up[0].re, std::f64::consts::FRAC_1_SQRT_2);
        assert_relative_eq!(up[1].re, std::f64::consts::FRAC_1_SQRT_2);
        // |+> -> (|↑> + |↓>)/√2 (inverse map)
        let plus = b.matvec(&[cone(), czero()]);
        assert_relative_eq!(plus[0].re, plus[1].re);
    }

    #[test]
    fn thermal_distribution() {
        let c = FockCutoff::new(15).unwrap();
        let g = thermal_state(0.0, c).unwrap();
        assert!(g.is_ground());
        let t = thermal_state(0.05, c).unwrap();
        assert_relative_eq!(t.raw_populations[0], 0.952_380_952_380_952_4, epsilon = 1e-15);
        let t = thermal_state(0.2, c).unwrap();
        let tr: f64 = t.populations.iter().sum();
        assert!((tr - 1.0).abs() < 1e-12);
        assert!((t.mean_occupation() - 0.2).abs() < 1e-9);
        assert!(thermal_state(0.3, c).unwrap().truncated_weight < 1e-9);
        assert!(thermal_state(-0.1, c).is_err());
    }

    #[test]
    fn lamb_dicke_beryllium_stretch() {
        let g = ModeGeometry::<f64>::beryllium(ModeLabel::Stretch, 4.5e6, 313e-9);
        // independent 30-digit evaluation of the same constants
        assert_relative_eq!(lamb_dicke(&g).unwrap(), 0.316_911_404_436_102_5, max_relative = 1e-12);
        let mut g2 = g;
        g2.omega_nu = g.omega_nu * 2.0;
        assert_relative_eq!(
            lamb_dicke(&g2).unwrap(),
            lamb_dicke(&g).unwrap() / 2f64.sqrt(),
            max_relative = 1e-14
        );
        g2.delta_k_z = 0.0;
        assert_eq!(lamb_dicke(&g2).unwrap(), 0.0);
        g2.ion_mass = 0.0;
        assert!(lamb_dicke(&g2).is_err());
    }

    #[test]
    fn geometry_invariants() {
        let g = ModeGeometry::<f64>::beryllium(ModeLabel::Com, 2.6e6, 313e-9);
        assert!(g.validate().is_ok());
        let mut bad = g;
        bad.xi = [0.5, 0.5];
        assert!(bad.validate().is_err());
        let p = GateParams::new(
            1.0,
            2.0,
            3.0,
            ModeGeometry::beryllium(ModeLabel::Stretch, 4.5e6, 313e-9),
            FockCutoff::default(),
        )
        .unwrap();
        assert_relative_eq!(p.sideband_rabi(0), 2.0 * p.eta * std::f64::consts::FRAC_1_SQRT_2);
        assert_relative_eq!(p.sideband_rabi(1), -p.sideband_rabi(0));
        let mut q = p;
        q.delta = -1.0;
        assert!(q.validate().is_err());
    }
}
