use crate::error::{GateError, Result};
use crate::linalg::{inner, norm_sqr, DenseMatrix};
use crate::scalar::{czero, Real, C};
use crate::space::{FockCutoff, ThermalState};

#[derive(Clone, Debug, PartialEq)]
pub enum Representation<T: Real = f64> {
    Pure(Vec<C<T>>),
    Mixed(DenseMatrix<T>),
}

/// Pure vector or density operator over the composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeState<T: Real = f64> {
    cutoff: FockCutoff,
    repr: Representation<T>,
}

impl<T: Real> CompositeState<T> {
    pub fn pure(cutoff: FockCutoff, amplitudes: Vec<C<T>>) -> Result<Self> {
        if amplitudes.len() != cutoff.dim() {
            return Err(GateError::InvalidState(format!(
                "expected {} amplitudes, got {}",
                cutoff.dim(),
                amplitudes.len()
            )));
        }
        let n = norm_sqr(&amplitudes).sqrt();
        if (n - T::one()).abs() > T::state_tol() {
            return Err(GateError::InvalidState(format!("norm {n} is not 1")));
        }
        Ok(Self::pure_unchecked(cutoff, amplitudes))
    }

    pub(crate) fn pure_unchecked(cutoff: FockCutoff, amplitudes: Vec<C<T>>) -> Self {
        Self {
            cutoff,
            repr: Representation::Pure(amplitudes),
        }
    }

    pub fn mixed(cutoff: FockCutoff, rho: DenseMatrix<T>) -> Result<Self> {
        if rho.dim() != cutoff.dim() {
            return Err(GateError::InvalidState(format!(
                "expected dimension {}, got {}",
                cutoff.dim(),
                rho.dim()
            )));
        }
        let s = Self::mixed_unchecked(cutoff, rho);
        s.validate()?;
        Ok(s)
    }

    pub(crate) fn mixed_unchecked(cutoff: FockCutoff, rho: DenseMatrix<T>) -> Self {
        Self {
            cutoff,
            repr: Representation::Mixed(rho),
        }
    }

    /// `|s⟩ ⊗ |n⟩` for a two-ion spin vector in `(↑↑, ↑↓, ↓↑, ↓↓)` order.
    pub fn product_pure(cutoff: FockCutoff, spin: &[C<T>; 4], n: usize) -> Result<Self> {
        if n > cutoff.n_max() {
            return Err(GateError::param("n", "Fock level above cutoff"));
        }
        let mut v = vec![czero(); cutoff.dim()];
        for (s, a) in spin.iter().enumerate() {
            v[cutoff.index_of(s, n)] = *a;
        }
        Self::pure(cutoff, v)
    }

    /// `|s⟩⟨s| ⊗ ρ_thermal`; stays pure when the motion is in its ground state.
    pub fn spin_with_thermal(cutoff: FockCutoff, spin: &[C<T>; 4], motion: &ThermalState<T>) -> Result<Self> {
        if motion.populations.len() != cutoff.motional_dim() {
            return Err(GateError::InvalidState("thermal state built for another cutoff".into()));
        }
        if motion.is_ground() {
            return Self::product_pure(cutoff, spin, 0);
        }
        let dm = cutoff.motional_dim();
        let mut rho = DenseMatrix::zeros(cutoff.dim());
        for a in 0..4 {
            for b in 0..4 {
                let s = spin[a] * spin[b].conj();
                if s == czero() {
                    continue;
                }
                for (n, p) in motion.populations.iter().enumerate() {
                    rho[(a * dm + n, b * dm + n)] = s * *p;
                }
            }
        }
        Self::mixed(cutoff, rho)
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.cutoff.dim()
    }

    pub fn representation(&self) -> &Representation<T> {
        &self.repr
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.repr, Representation::Pure(_))
    }

    pub fn amplitudes(&self) -> Option<&[C<T>]> {
        match &self.repr {
            Representation::Pure(v) => Some(v),
            Representation::Mixed(_) => None,
        }
    }

    pub fn to_density(&self) -> DenseMatrix<T> {
        match &self.repr {
            Representation::Pure(v) => DenseMatrix::outer(v),
            Representation::Mixed(m) => m.clone(),
        }
    }

    pub fn into_mixed(self) -> Self {
        let rho = self.to_density();
        Self::mixed_unchecked(self.cutoff, rho)
    }

    /// Norm of a pure state or trace of a density operator.
    pub fn trace(&self) -> T {
        match &self.repr {
            Representation::Pure(v) => norm_sqr(v),
            Representation::Mixed(m) => m.trace().re,
        }
    }

    /// Checks the representation invariants (unit norm/trace, Hermiticity, positivity).
    pub fn validate(&self) -> Result<()> {
        match &self.repr {
            Representation::Pure(v) => {
                let n = norm_sqr(v).sqrt();
                if (n - T::one()).abs() > T::state_tol() {
                    return Err(GateError::InvalidState(format!("norm {n} is not 1")));
                }
            }
            Representation::Mixed(m) => {
                let herm = m.hermiticity_error();
                if herm > T::state_tol() {
                    return Err(GateError::InvalidState(format!("not Hermitian ({herm:e})")));
                }
                let tr = m.trace();
                if (tr.re - T::one()).abs() > T::state_tol() || tr.im.abs() > T::state_tol() {
                    return Err(GateError::InvalidState(format!("trace {tr} is not 1")));
                }
                let min = self.min_eigenvalue();
                if min < -1e-8 {
                    return Err(GateError::InvalidState(format!("negative eigenvalue {min:e}")));
                }
            }
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match &self.repr {
            Representation::Pure(_) => 0.0,
            Representation::Mixed(m) => m.hermitian_eigenvalues()[0],
        }
    }

    /// Reduced two-ion spin density operator (motion traced out).
    pub fn spin_density(&self) -> DenseMatrix<T> {
        let dm = self.cutoff.motional_dim();
        let mut out = DenseMatrix::zeros(4);
        match &self.repr {
            Representation::Pure(v) => {
                for a in 0..4 {
                    for b in 0..4 {
                        out[(a, b)] = (0..dm).fold(czero(), |acc, n| acc + v[a * dm + n] * v[b * dm + n].conj());
                    }
                }
            }
            Representation::Mixed(m) => {
                for a in 0..4 {
                    for b in 0..4 {
                        out[(a, b)] = (0..dm).fold(czero(), |acc, n| acc + m[(a * dm + n, b * dm + n)]);
                    }
                }
            }
        }
        out
    }

    /// Reduced motional density operator (spins traced out).
    pub fn motional_density(&self) -> DenseMatrix<T> {
        let dm = self.cutoff.motional_dim();
        let mut out = DenseMatrix::zeros(dm);
        for n in 0..dm {
            for k in 0..dm {
                out[(n, k)] = match &self.repr {
                    Representation::Pure(v) => (0..4).fold(czero(), |acc, a| acc + v[a * dm + n] * v[a * dm + k].conj()),
                    Representation::Mixed(m) => (0..4).fold(czero(), |acc, a| acc + m[(a * dm + n, a * dm + k)]),
                };
            }
        }
        out
    }

    /// Population in the two highest retained Fock levels.
    pub fn leakage_proxy(&self) -> T {
        let m = self.motional_density();
        let n = m.dim();
        m[(n - 1, n - 1)].re + m[(n - 2, n - 2)].re
    }

    /// Von Neumann entropy (nats) of the reduced motional state.
    pub fn motional_entropy(&self) -> f64 {
        self.motional_density()
            .hermitian_eigenvalues()
            .into_iter()
            .filter(|p| *p > 1e-15)
            .map(|p| -p * p.ln())
            .sum()
    }

    /// `⟨target|ρ|target⟩` for a composite-space pure target.
    pub fn overlap_with(&self, target: &[C<T>]) -> T {
        match &self.repr {
            Representation::Pure(v) => inner(target, v).norm_sqr(),
            Representation::Mixed(m) => inner(target, &m.matvec(target)).re,
        }
    }

    /// `⟨s|ρ_spin|s⟩` for a two-ion spin target.
    pub fn spin_fidelity(&self, target: &[C<T>; 4]) -> T {
        let rho = self.spin_density();
        inner(target, &rho.matvec(target)).re
    }

    /// Decomposition `ρ = Σ w_k |ψ_k⟩⟨ψ_k|` with weights above `min_weight`.
    pub fn pure_components(&self, min_weight: f64) -> Vec<(T, Vec<C<T>>)> {
        match &self.repr {
            Representation::Pure(v) => vec![(T::one(), v.clone())],
            Representation::Mixed(m) => {
                if is_diagonal(m) {
                    (0..m.dim())
                        .filter(|&i| m[(i, i)].re.to_f64_lossy() > min_weight)
                        .map(|i| {
                            let mut v = vec![czero(); m.dim()];
                            v[i] = C::new(T::one(), T::zero());
                            (m[(i, i)].re, v)
                        })
                        .collect()
                } else {
                    m.hermitian_eigensystem()
                        .into_iter()
                        .filter(|(w, _)| *w > min_weight)
                        .map(|(w, v)| (T::lit(w), v))
                        .collect()
                }
            }
        }
    }

    /// Weighted mixture of states on the same cutoff.
    pub fn mixture(parts: &[(T, CompositeState<T>)]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| GateError::InvalidState("empty mixture".into()))?;
        let cutoff = first.1.cutoff;
        let mut rho = DenseMatrix::zeros(cutoff.dim());
        for (w, s) in parts {
            if s.cutoff != cutoff {
                return Err(GateError::InvalidState("mixture of different cutoffs".into()));
            }
            match &s.repr {
                Representation::Pure(v) => {
                    let n = cutoff.dim();
                    let buf = rho.as_mut_slice();
                    for r in 0..n {
                        let a = v[r] * *w;
                        for c in 0..n {
                            buf[r * n + c] = buf[r * n + c] + a * v[c].conj();
                        }
                    }
                }
                Representation::Mixed(m) => {
                    for (d, x) in rho.as_mut_slice().iter_mut().zip(m.as_slice()) {
                        *d = *d + *x * *w;
                    }
                }
            }
        }
        Ok(Self::mixed_unchecked(cutoff, rho))
    }
}

fn is_diagonal<T: Real>(m: &DenseMatrix<T>) -> bool {
    let n = m.dim();
    (0..n).all(|r| (0..n).all(|c| r == c || m[(r, c)] == czero()))
}
