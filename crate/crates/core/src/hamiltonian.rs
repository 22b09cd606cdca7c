//! Gate Hamiltonians in units of ħ (angular frequency, rad/s).
//!
//! * [`GateHamiltonian::lab_into`]: carrier plus blue sideband in the
//!   interaction frame of qubit and motion, Lamb-Dicke limit.
//! * [`GateHamiltonian::dressed_into`]: the same dynamics seen from the frame
//!   rotating with the carrier and expressed in the `|±⟩` basis, including the
//!   off-resonant dressed-state flip term at `2Ω_C`.
//! * [`GateHamiltonian::dressed_rwa_into`]: the spin-dependent force alone.
//! * [`GateHamiltonian::secular_into`]: the lab-frame counterpart of the
//!   spin-dependent force for an arbitrary carrier axis; it is what the
//!   "ideal gate" runs use, because it stays valid across carrier phase jumps.

use serde::{Deserialize, Serialize};

use crate::error::{GateError, Result};
use crate::linalg::DenseMatrix;
use crate::linalg::SparseOp;
use crate::scalar::{ci, cis, cone, creal, Real, C};
use crate::space::{
    dressed_change_of_basis_composite, embed_ion, ladder_operators, sigma_plus_single, sigma_z_single, FockCutoff, GateParams,
};
use crate::state::{CompositeState, Representation};

/// Drive settings that hold over one pulse segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveSnapshot<T: Real = f64> {
    pub carrier_on: bool,
    /// Added to the carrier phase `φ`.
    pub carrier_phase: T,
    /// Multiplier on `Ω_C`.
    pub carrier_scale: T,
    pub sideband_on: bool,
    /// Added to each `φ′_j`.
    pub sideband_phase_offsets: [T; 2],
    /// Per-ion multiplier on `Ω_j` (both equal for a uniform intensity change).
    pub sideband_scale: [T; 2],
}

impl<T: Real> DriveSnapshot<T> {
    /// Carrier and sideband both on.
    pub fn gate(carrier_phase: T) -> Self {
        Self {
            carrier_on: true,
            carrier_phase,
            carrier_scale: T::one(),
            sideband_on: true,
            sideband_phase_offsets: [T::zero(); 2],
            sideband_scale: [T::one(); 2],
        }
    }

    pub fn carrier_only(carrier_phase: T) -> Self {
        Self {
            sideband_on: false,
            ..Self::gate(carrier_phase)
        }
    }

    pub fn idle() -> Self {
        Self {
            carrier_on: false,
            ..Self::carrier_only(T::zero())
        }
    }

    pub fn with_sideband_scale(mut self, s: T) -> Self {
        self.sideband_scale = [s, s];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.carrier_scale < T::zero() || self.sideband_scale.iter().any(|s| *s < T::zero()) {
            return Err(GateError::param("drive", "scales must be non-negative"));
        }
        Ok(())
    }
}

/// Which Hamiltonian drives a lab-frame run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianModel {
    /// Carrier plus sideband, including the fast dressed-state flip term.
    Full,
    /// Carrier plus the secular (rotating-wave) part of the sideband only.
    Secular,
}

/// Embedded operators that the gate Hamiltonians are assembled from.
#[derive(Clone, Debug)]
pub struct OperatorSet<T: Real = f64> {
    pub cutoff: FockCutoff,
    pub sigma_plus: [SparseOp<T>; 2],
    pub sigma_minus: [SparseOp<T>; 2],
    /// `σ⁺_j a†`, `σ⁻_j a`, `σ⁻_j a†`, `σ⁺_j a`
    pub sp_ad: [SparseOp<T>; 2],
    pub sm_a: [SparseOp<T>; 2],
    pub sm_ad: [SparseOp<T>; 2],
    pub sp_a: [SparseOp<T>; 2],
    /// In dressed coordinates: `(|+⟩⟨+| − |−⟩⟨−|)_j a†` and `… a`.
    pub z_ad: [SparseOp<T>; 2],
    pub z_a: [SparseOp<T>; 2],
    /// `|−⟩⟨+|_j a†`, `|−⟩⟨+|_j a`, `|+⟩⟨−|_j a†`, `|+⟩⟨−|_j a`
    pub lower_ad: [SparseOp<T>; 2],
    pub lower_a: [SparseOp<T>; 2],
    pub raise_ad: [SparseOp<T>; 2],
    pub raise_a: [SparseOp<T>; 2],
}

impl<T: Real> OperatorSet<T> {
    pub fn new(cutoff: FockCutoff) -> Self {
        let (a, ad) = ladder_operators::<T>(cutoff);
        let id_m = SparseOp::identity(cutoff.motional_dim());
        let sp = sigma_plus_single::<T>();
        let sm = sp.adjoint();
        let sz = sigma_z_single::<T>();
        let pair = |spin: &SparseOp<T>, motion: &SparseOp<T>| [embed_ion(spin, 0, motion), embed_ion(spin, 1, motion)];
        // In (+, −) coordinates |+⟩⟨−| has the matrix of σ⁺ and |−⟩⟨+| that of σ⁻.
        Self {
            cutoff,
            sigma_plus: pair(&sp, &id_m),
            sigma_minus: pair(&sm, &id_m),
            sp_ad: pair(&sp, &ad),
            sm_a: pair(&sm, &a),
            sm_ad: pair(&sm, &ad),
            sp_a: pair(&sp, &a),
            z_ad: pair(&sz, &ad),
            z_a: pair(&sz, &a),
            lower_ad: pair(&sm, &ad),
            lower_a: pair(&sm, &a),
            raise_ad: pair(&sp, &ad),
            raise_a: pair(&sp, &a),
        }
    }
}

/// Parameters together with the operator set for their cutoff.
#[derive(Clone, Debug)]
pub struct GateHamiltonian<T: Real = f64> {
    params: GateParams<T>,
    ops: OperatorSet<T>,
}

impl<T: Real> GateHamiltonian<T> {
    pub fn new(params: GateParams<T>) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            ops: OperatorSet::new(params.cutoff),
            params,
        })
    }

    pub fn params(&self) -> &GateParams<T> {
        &self.params
    }

    pub fn operators(&self) -> &OperatorSet<T> {
        &self.ops
    }

    pub fn dim(&self) -> usize {
        self.params.cutoff.dim()
    }

    /// Replaces the physical parameters, keeping operators when the cutoff is unchanged.
    pub fn with_params(&self, params: GateParams<T>) -> Result<Self> {
        params.validate()?;
        if params.cutoff == self.params.cutoff {
            Ok(Self {
                params,
                ops: self.ops.clone(),
            })
        } else {
            Self::new(params)
        }
    }

    fn push_carrier(&self, drive: &DriveSnapshot<T>, carrier_mult: T, out: &mut SparseOp<T>) {
        if !drive.carrier_on {
            return;
        }
        let amp = self.params.omega_c * drive.carrier_scale * carrier_mult;
        let c = cis(self.params.phi + drive.carrier_phase) * amp;
        for j in 0..2 {
            out.push_scaled(&self.ops.sigma_plus[j], c);
            out.push_scaled(&self.ops.sigma_minus[j], c.conj());
        }
    }

    /// `i Ω_j s_j e^{−iδt} e^{iφ′_j}`, the coefficient of `σ⁺_j a†`.
    fn sideband_coefficient(&self, drive: &DriveSnapshot<T>, j: usize, t: T) -> C<T> {
        let p = &self.params;
        let amp = p.sideband_rabi(j) * drive.sideband_scale[j];
        ci::<T>() * cis(p.phi_prime[j] + drive.sideband_phase_offsets[j] - p.delta * t) * amp
    }

    /// Lab-frame Hamiltonian; `carrier_mult` multiplies `Ω_C` on top of the snapshot.
    pub fn lab_into(&self, drive: &DriveSnapshot<T>, t: T, carrier_mult: T, out: &mut SparseOp<T>) {
        out.clear();
        self.push_carrier(drive, carrier_mult, out);
        if drive.sideband_on {
            for j in 0..2 {
                let g = self.sideband_coefficient(drive, j, t);
                out.push_scaled(&self.ops.sp_ad[j], g);
                out.push_scaled(&self.ops.sm_a[j], g.conj());
            }
        }
    }

    /// Carrier plus the part of the sideband that commutes with the carrier.
    ///
    /// For carrier axis `σ_φ = e^{iφ}σ⁺ + e^{−iφ}σ⁻` the secular part of `σ⁺`
    /// is `½e^{−iφ}σ_φ`. With the carrier off there is nothing to project on
    /// and the full sideband term is used.
    pub fn secular_into(&self, drive: &DriveSnapshot<T>, t: T, carrier_mult: T, out: &mut SparseOp<T>) {
        let dressed = drive.carrier_on && drive.carrier_scale * carrier_mult > T::zero();
        if !dressed {
            return self.lab_into(drive, t, carrier_mult, out);
        }
        out.clear();
        self.push_carrier(drive, carrier_mult, out);
        if drive.sideband_on {
            let half = T::lit(0.5);
            let rot = cis(-T::lit(2.0) * (self.params.phi + drive.carrier_phase));
            for j in 0..2 {
                let g = self.sideband_coefficient(drive, j, t) * half;
                out.push_scaled(&self.ops.sp_ad[j], g);
                out.push_scaled(&self.ops.sm_ad[j], g * rot);
                out.push_scaled(&self.ops.sm_a[j], g.conj());
                out.push_scaled(&self.ops.sp_a[j], (g * rot).conj());
            }
        }
    }

    pub fn model_into(&self, model: HamiltonianModel, drive: &DriveSnapshot<T>, t: T, carrier_mult: T, out: &mut SparseOp<T>) {
        match model {
            HamiltonianModel::Full => self.lab_into(drive, t, carrier_mult, out),
            HamiltonianModel::Secular => self.secular_into(drive, t, carrier_mult, out),
        }
    }

    fn dressed_frequency(&self, drive: &DriveSnapshot<T>) -> Result<T> {
        if !drive.carrier_on {
            return Err(GateError::FrameUndefined("carrier is off".into()));
        }
        let phase = self.params.phi + drive.carrier_phase;
        let wrapped = phase.sin().abs() + (T::one() - phase.cos());
        if wrapped > T::lit(1e-12) {
            return Err(GateError::FrameUndefined(format!(
                "dressed frame is defined for carrier phase 0, got {phase}"
            )));
        }
        Ok(self.params.omega_c * drive.carrier_scale)
    }

    fn push_dressed(&self, drive: &DriveSnapshot<T>, t: T, with_flip: bool, out: &mut SparseOp<T>) -> Result<()> {
        let omega = self.dressed_frequency(drive)?;
        out.clear();
        if !drive.sideband_on {
            return Ok(());
        }
        let p = &self.params;
        let two = T::lit(2.0);
        for j in 0..2 {
            let f = ci::<T>() * (p.sideband_rabi(j) * drive.sideband_scale[j] / two);
            let e = cis(p.phi_prime[j] + drive.sideband_phase_offsets[j] - p.delta * t);
            out.push_scaled(&self.ops.z_ad[j], f * e);
            out.push_scaled(&self.ops.z_a[j], -(f * e.conj()));
            if with_flip {
                let down = f * cis(-two * omega * t);
                let up = -(f * cis(two * omega * t));
                out.push_scaled(&self.ops.lower_ad[j], down * e);
                out.push_scaled(&self.ops.lower_a[j], down * e.conj());
                out.push_scaled(&self.ops.raise_ad[j], up * e);
                out.push_scaled(&self.ops.raise_a[j], up * e.conj());
            }
        }
        Ok(())
    }

    /// Dressed-frame Hamiltonian (both terms), in `(+, −)` coordinates.
    pub fn dressed_into(&self, drive: &DriveSnapshot<T>, t: T, out: &mut SparseOp<T>) -> Result<()> {
        self.push_dressed(drive, t, true, out)
    }

    /// Dressed-frame spin-dependent force only.
    pub fn dressed_rwa_into(&self, drive: &DriveSnapshot<T>, t: T, out: &mut SparseOp<T>) -> Result<()> {
        self.push_dressed(drive, t, false, out)
    }

    /// Maps a lab-frame state at time `t` into the dressed frame.
    pub fn to_dressed_frame(&self, state: &CompositeState<T>, drive: &DriveSnapshot<T>, t: T) -> Result<CompositeState<T>> {
        let omega = self.dressed_frequency(drive)?;
        frame_map(state, omega, t, false)
    }

    /// Inverse of [`Self::to_dressed_frame`].
    pub fn from_dressed_frame(&self, state: &CompositeState<T>, drive: &DriveSnapshot<T>, t: T) -> Result<CompositeState<T>> {
        let omega = self.dressed_frequency(drive)?;
        frame_map(state, omega, t, true)
    }
}

/// `|ψ_d⟩ = e^{iΩt(s₁+s₂)}·B|ψ⟩` with `s = ±1` on `|±⟩`, or its inverse.
fn frame_map<T: Real>(state: &CompositeState<T>, omega: T, t: T, inverse: bool) -> Result<CompositeState<T>> {
    let cutoff = state.cutoff();
    let basis = dressed_change_of_basis_composite::<T>(cutoff);
    let dm = cutoff.motional_dim();
    let sign = if inverse { -T::one() } else { T::one() };
    let phases: Vec<C<T>> = (0..cutoff.dim())
        .map(|k| {
            let pair = k / dm;
            let s1 = if pair / 2 == 0 { T::one() } else { -T::one() };
            let s2 = if pair.is_multiple_of(2) { T::one() } else { -T::one() };
            cis(sign * omega * t * (s1 + s2))
        })
        .collect();
    Ok(match state.representation() {
        Representation::Pure(v) => {
            let out = if inverse {
                let rotated: Vec<C<T>> = v.iter().zip(&phases).map(|(a, p)| *a * *p).collect();
                basis.mul_vec(&rotated)
            } else {
                basis.mul_vec(v).into_iter().zip(&phases).map(|(a, p)| a * *p).collect()
            };
            CompositeState::pure_unchecked(cutoff, out)
        }
        Representation::Mixed(m) => {
            let d = DenseMatrix::from_fn(cutoff.dim(), |r, c| if r == c { phases[r] } else { creal(T::zero()) });
            let bd = basis.to_dense();
            let u = if inverse { bd.matmul(&d) } else { d.matmul(&bd) };
            let out = u.matmul(m).matmul(&u.adjoint());
            CompositeState::mixed_unchecked(cutoff, out)
        }
    })
}

/// Lab-frame Hamiltonian as a standalone operator.
pub fn h_lab<T: Real>(params: &GateParams<T>, drive: &DriveSnapshot<T>, t: T) -> Result<SparseOp<T>> {
    let h = GateHamiltonian::new(*params)?;
    let mut out = SparseOp::zeros(h.dim());
    h.lab_into(drive, t, T::one(), &mut out);
    Ok(out)
}

pub fn h_dressed<T: Real>(params: &GateParams<T>, drive: &DriveSnapshot<T>, t: T) -> Result<SparseOp<T>> {
    let h = GateHamiltonian::new(*params)?;
    let mut out = SparseOp::zeros(h.dim());
    h.dressed_into(drive, t, &mut out)?;
    Ok(out)
}

pub fn h_dressed_rwa<T: Real>(params: &GateParams<T>, drive: &DriveSnapshot<T>, t: T) -> Result<SparseOp<T>> {
    let h = GateHamiltonian::new(*params)?;
    let mut out = SparseOp::zeros(h.dim());
    h.dressed_rwa_into(drive, t, &mut out)?;
    Ok(out)
}

pub fn to_dressed_frame<T: Real>(
    state: &CompositeState<T>,
    params: &GateParams<T>,
    drive: &DriveSnapshot<T>,
    t: T,
) -> Result<CompositeState<T>> {
    GateHamiltonian::new(*params)?.to_dressed_frame(state, drive, t)
}

/// `Σ_j (|+⟩⟨+| − |−⟩⟨−|)_j`-type products used to check dressed-population conservation:
/// returns the dressed-coordinate projector `|s⟩⟨s|` on ion `ion` for `s ∈ {+, −}`.
pub fn dressed_projector<T: Real>(cutoff: FockCutoff, ion: usize, plus: bool) -> SparseOp<T> {
    let k = if plus { 0 } else { 1 };
    let p = SparseOp::from_triplets(2, vec![(k, k, cone())]);
    embed_ion(&p, ion, &SparseOp::identity(cutoff.motional_dim()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::space::{ModeGeometry, ModeLabel, Spin};
    use proptest::prelude::*;

    fn params(n_max: usize) -> GateParams<f64> {
        let g = ModeGeometry::beryllium(ModeLabel::Stretch, 4.5e6, 313e-9);
        let delta = 2.0 * std::f64::consts::PI * 9.5e3;
        GateParams::new(
            2.0 * std::f64::consts::PI * 50e3,
            0.0,
            delta,
            g,
            FockCutoff::new(n_max).unwrap(),
        )
        .unwrap()
        .with_sideband_rabi(delta / 2.0)
    }

    fn dense(op: &SparseOp<f64>) -> DenseMatrix<f64> {
        op.to_dense()
    }

    #[test]
    fn carrier_only_is_sigma_x_sum() {
        let p = params(3);
        let h = h_lab(&p, &DriveSnapshot::carrier_only(0.0), 1e-5).unwrap();
        let s = crate::space::spin_operators::<f64>(p.cutoff);
        let expect = s.x[0].plus(&s.x[1]).scaled(creal(p.omega_c));
        assert!(dense(&h).max_abs_diff(&dense(&expect)) < 1e-6);
    }

    #[test]
    fn sideband_matrix_element() {
        let mut p = params(4);
        p.phi_prime = [0.3, -0.2];
        let t = 3.7e-5;
        let mut drive = DriveSnapshot::gate(0.0);
        drive.carrier_on = false;
        let h = dense(&h_lab(&p, &drive, t).unwrap());
        let c = p.cutoff;
        for n in 0..4 {
            let got = h[(c.index(Spin::Up, Spin::Down, n + 1), c.index(Spin::Down, Spin::Down, n))];
            let expect = C::new(0.0, 1.0) * p.sideband_rabi(0) * ((n + 1) as f64).sqrt() * cis(-p.delta * t + p.phi_prime[0]);
            assert!((got - expect).norm() < 1e-9 * expect.norm());
        }
    }

    #[test]
    fn flip_and_force_prefactors_match() {
        let p = params(3);
        let t = 1.3e-5;
        let full = dense(&h_dressed(&p, &DriveSnapshot::gate(0.0), t).unwrap());
        let c = p.cutoff;
        let force = full[(c.index(Spin::Up, Spin::Down, 1), c.index(Spin::Up, Spin::Down, 0))].norm();
        // |+⟩⟨−| element on ion 1 with a†: |−,·,0⟩ -> |+,·,1⟩ (dressed index 0 = +)
        let flip = full[(c.index(Spin::Up, Spin::Down, 1), c.index(Spin::Down, Spin::Down, 0))].norm();
        // on |+−⟩ both ions push the same way: Ω₁/2 − Ω₂/2 = Ω₁, twice the per-ion prefactor
        let per_ion = p.sideband_rabi(0).abs() / 2.0;
        assert!((force - 2.0 * per_ion).abs() < 1e-9 * force);
        assert!((flip - per_ion).abs() < 1e-9 * flip);
    }

    #[test]
    fn stretch_force_annihilates_plus_plus() {
        let p = params(4);
        let h = h_dressed_rwa(&p, &DriveSnapshot::gate(0.0), 2e-5).unwrap();
        let c = p.cutoff;
        for n in 0..=4 {
            let mut v = vec![creal(0.0); c.dim()];
            v[c.index(Spin::Up, Spin::Up, n)] = cone();
            let out = h.mul_vec(&v);
            assert!(crate::linalg::norm_sqr(&out) < 1e-20);
        }
        // |+−⟩ couples with amplitude (Ω₁ − Ω₂)/2 = Ω₀ηξ₁
        let d = dense(&h);
        let amp = d[(c.index(Spin::Up, Spin::Down, 1), c.index(Spin::Up, Spin::Down, 0))].norm();
        assert!((amp - p.omega_0 * p.eta * p.geometry.xi[0]).abs() < 1e-9 * amp);
    }

    #[test]
    fn rwa_is_full_minus_flip_and_conserves_dressed_populations() {
        let p = params(3);
        let c = p.cutoff;
        let dm = c.motional_dim();
        let drive = DriveSnapshot::gate(0.0);
        for &t in &[0.0, 1e-6, 4.4e-5] {
            let full = dense(&h_dressed(&p, &drive, t).unwrap());
            let rwa = dense(&h_dressed_rwa(&p, &drive, t).unwrap());
            for ion in 0..2 {
                for plus in [true, false] {
                    let pr = dense(&dressed_projector(c, ion, plus));
                    let comm = rwa.matmul(&pr).sub(&pr.matmul(&rwa));
                    assert!(comm.max_abs_diff(&DenseMatrix::zeros(c.dim())) < 1e-9);
                }
            }
            // what remains flips exactly one ion's dressed label
            let diff = full.sub(&rwa);
            let mut nonzero = 0;
            for r in 0..c.dim() {
                for col in 0..c.dim() {
                    if diff[(r, col)].norm() > 1e-9 {
                        nonzero += 1;
                        let flipped = (r / dm) ^ (col / dm);
                        assert!(flipped == 1 || flipped == 2);
                    }
                }
            }
            assert!(nonzero > 0);
        }
        let off = DriveSnapshot::gate(0.0).with_sideband_scale(0.0);
        assert_eq!(h_dressed_rwa(&p, &off, 1e-5).unwrap().nnz(), 0);
    }

    #[test]
    fn dressed_frame_rejects_phase_jumps() {
        let p = params(2);
        let st = CompositeState::product_pure(p.cutoff, &crate::space::spin_basis(Spin::Down, Spin::Down), 0).unwrap();
        assert!(to_dressed_frame(&st, &p, &DriveSnapshot::gate(std::f64::consts::PI), 1e-6).is_err());
        assert!(to_dressed_frame(&st, &p, &DriveSnapshot::idle(), 1e-6).is_err());
        // t = 0 reduces to the basis change
        let d = to_dressed_frame(&st, &p, &DriveSnapshot::gate(0.0), 0.0).unwrap();
        let b = dressed_change_of_basis_composite::<f64>(p.cutoff).mul_vec(st.amplitudes().unwrap());
        assert_eq!(d.amplitudes().unwrap(), &b[..]);
        assert!((d.trace() - 1.0).abs() < 1e-12);
        let back = GateHamiltonian::new(p)
            .unwrap()
            .from_dressed_frame(&d, &DriveSnapshot::gate(0.0), 0.0)
            .unwrap();
        for (x, y) in back.amplitudes().unwrap().iter().zip(st.amplitudes().unwrap()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn secular_matches_dressed_rwa_under_frame_map() {
        // With φ = 0 the secular sideband is iΩ_j/2·σx_j(a†e^{−iδt} − h.c.), and σx is
        // the dressed population difference.
        let p = params(3);
        let g = GateHamiltonian::new(p).unwrap();
        let mut sec = SparseOp::zeros(p.cutoff.dim());
        let t = 2.1e-5;
        let mut drive = DriveSnapshot::gate(0.0);
        drive.carrier_scale = 0.0 + 1.0;
        g.secular_into(&drive, t, 1.0, &mut sec);
        let mut carrier = SparseOp::zeros(p.cutoff.dim());
        g.lab_into(&DriveSnapshot::carrier_only(0.0), t, 1.0, &mut carrier);
        let sideband_part = dense(&sec).sub(&dense(&carrier));
        let b = dense(&dressed_change_of_basis_composite::<f64>(p.cutoff));
        let mapped = b.matmul(&sideband_part).matmul(&b);
        let rwa = dense(&h_dressed_rwa(&p, &drive, t).unwrap());
        assert!(mapped.max_abs_diff(&rwa) < 1e-6);
    }

    proptest! {
        #[test]
        fn hamiltonians_are_hermitian(
            t in 0.0f64..3e-4,
            phi in -6.3f64..6.3,
            p1 in -6.3f64..6.3,
            p2 in -6.3f64..6.3,
            cphase in -6.3f64..6.3,
            s1 in 0.0f64..2.0,
            s2 in 0.0f64..2.0,
        ) {
            let mut p = params(5);
            p.phi = phi;
            p.phi_prime = [p1, p2];
            let mut drive = DriveSnapshot::gate(cphase);
            drive.sideband_scale = [s1, s2];
            drive.carrier_scale = s2;
            let g = GateHamiltonian::new(p).unwrap();
            let mut out = SparseOp::zeros(p.cutoff.dim());
            let scale = p.omega_c.max(p.omega_0);
            g.lab_into(&drive, t, 1.0, &mut out);
            prop_assert!(out.hermiticity_error() <= 1e-12 * scale);
            g.secular_into(&drive, t, 1.0, &mut out);
            prop_assert!(out.hermiticity_error() <= 1e-12 * scale);
            let mut p0 = p;
            p0.phi = 0.0;
            let g0 = GateHamiltonian::new(p0).unwrap();
            g0.dressed_into(&DriveSnapshot::gate(0.0), t, &mut out).unwrap();
            prop_assert!(out.hermiticity_error() <= 1e-12 * scale);
            g0.dressed_rwa_into(&DriveSnapshot::gate(0.0), t, &mut out).unwrap();
            prop_assert!(out.hermiticity_error() <= 1e-12 * scale);
        }
    }
}
