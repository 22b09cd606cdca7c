//! Adaptive explicit Runge-Kutta integration on flat complex buffers.

use serde::{Deserialize, Serialize};

use crate::error::{GateError, Result};
use crate::scalar::{czero, Real, C};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig<T: Real = f64> {
    pub rel_tol: T,
    pub abs_tol: T,
    /// Upper bound on a single step, seconds.
    pub max_step: T,
    /// Only the embedded 5(4) Dormand-Prince pair is provided.
    pub scheme_order: u32,
    /// Step budget per call before giving up.
    pub max_steps: usize,
}

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(3e-11),
            abs_tol: T::lit(3e-13),
            max_step: T::lit(1e-5),
            scheme_order: 5,
            max_steps: 5_000_000,
        }
    }
}

impl<T: Real> IntegratorConfig<T> {
    pub fn with_tolerance(mut self, rel: T, abs: T) -> Self {
        self.rel_tol = rel;
        self.abs_tol = abs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |x: T| x > T::zero() && x <= T::lit(1e-2);
        if !in_range(self.rel_tol) || !in_range(self.abs_tol) {
            return Err(GateError::param("tolerance", "tolerances must lie in (0, 1e-2]"));
        }
        if !(self.max_step > T::zero()) {
            return Err(GateError::param("max_step", "must be positive"));
        }
        if self.scheme_order != 5 {
            return Err(GateError::param("scheme_order", "only order 5 is available"));
        }
        Ok(())
    }
}

/// Counters accumulated over one or more integration calls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl StepStats {
    pub fn merge(&mut self, other: &StepStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.evaluations += other.evaluations;
    }
}

// Dormand & Prince (1980) 5(4) tableau.
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Reusable stage storage for one problem size.
pub struct Workspace<T: Real> {
    k: [Vec<C<T>>; 7],
    stage: Vec<C<T>>,
    next: Vec<C<T>>,
    /// Step size carried over between calls.
    pub last_step: Option<T>,
}

impl<T: Real> Workspace<T> {
    pub fn new(len: usize) -> Self {
        let z = || vec![czero(); len];
        Self {
            k: [z(), z(), z(), z(), z(), z(), z()],
            stage: z(),
            next: z(),
            last_step: None,
        }
    }
}

#[inline]
fn combine<T: Real>(out: &mut [C<T>], y: &[C<T>], h: T, terms: &[(f64, &[C<T>])]) {
    let coeffs: Vec<(T, &[C<T>])> = terms.iter().map(|(a, k)| (h * T::lit(*a), *k)).collect();
    for i in 0..out.len() {
        let mut acc = y[i];
        for (a, k) in &coeffs {
            acc = acc + k[i] * *a;
        }
        out[i] = acc;
    }
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1` in place.
///
/// `after_step` runs on every accepted state (used to re-symmetrize density
/// operators) and returns true if it changed the state, in which case the
/// first-same-as-last derivative is recomputed. `f` must overwrite its output.
pub fn integrate<T, F, G>(
    cfg: &IntegratorConfig<T>,
    ws: &mut Workspace<T>,
    y: &mut [C<T>],
    t0: T,
    t1: T,
    mut f: F,
    mut after_step: G,
) -> Result<StepStats>
where
    T: Real,
    F: FnMut(T, &[C<T>], &mut [C<T>]),
    G: FnMut(&mut [C<T>]) -> bool,
{
    let mut stats = StepStats::default();
    let span = t1 - t0;
    if span <= T::zero() {
        return Ok(stats);
    }
    let n = y.len();
    let max_step = cfg.max_step.min(span);
    let [k1, k2, k3, k4, k5, k6, k7] = &mut ws.k;
    let stage = &mut ws.stage;
    let next = &mut ws.next;

    f(t0, y, k1);
    stats.evaluations += 1;

    let mut h = match ws.last_step {
        Some(h) => h.min(max_step),
        None => initial_step(cfg, y, k1, max_step),
    };
    let mut t = t0;
    let floor = T::step_floor() * (t0.abs().max(t1.abs())).max(span);
    let safety = T::lit(0.9);
    let fac_min = T::lit(0.2);
    let fac_max = T::lit(5.0);
    let order_exp = T::lit(-1.0 / 5.0);
    let mut last_err = T::zero();

    while t < t1 {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(GateError::StepUnderflow {
                t: t.to_f64_lossy(),
                step: h.to_f64_lossy(),
                worst_error: last_err.to_f64_lossy(),
            });
        }
        let last = t + h >= t1;
        let h_eff = if last { t1 - t } else { h };

        combine(stage, y, h_eff, &[(A21, k1)]);
        f(t + h_eff * T::lit(C2), stage, k2);
        combine(stage, y, h_eff, &[(A31, k1), (A32, k2)]);
        f(t + h_eff * T::lit(C3), stage, k3);
        combine(stage, y, h_eff, &[(A41, k1), (A42, k2), (A43, k3)]);
        f(t + h_eff * T::lit(C4), stage, k4);
        combine(stage, y, h_eff, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]);
        f(t + h_eff * T::lit(C5), stage, k5);
        combine(stage, y, h_eff, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]);
        f(t + h_eff, stage, k6);
        combine(next, y, h_eff, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
        f(t + h_eff, next, k7);
        stats.evaluations += 6;

        // RMS of the scaled embedded error estimate.
        let mut acc = T::zero();
        let e = [E1, E3, E4, E5, E6, E7].map(|x| T::lit(x) * h_eff);
        for i in 0..n {
            let err = k1[i] * e[0] + k3[i] * e[1] + k4[i] * e[2] + k5[i] * e[3] + k6[i] * e[4] + k7[i] * e[5];
            let sc = cfg.abs_tol + cfg.rel_tol * y[i].norm().max(next[i].norm());
            acc = acc + err.norm_sqr() / (sc * sc);
        }
        let err = (acc / T::from_usize_lossy(n)).sqrt();
        last_err = err;

        if err <= T::one() {
            t = if last { t1 } else { t + h_eff };
            y.copy_from_slice(next);
            if after_step(y) {
                f(t, y, k1);
                stats.evaluations += 1;
            } else {
                std::mem::swap(k1, k7);
            }
            stats.accepted += 1;
            let fac = if err == T::zero() {
                fac_max
            } else {
                (safety * err.powf(order_exp)).min(fac_max).max(fac_min)
            };
            if !last {
                h = (h_eff * fac).min(max_step);
            }
        } else {
            stats.rejected += 1;
            let fac = (safety * err.powf(order_exp)).max(fac_min);
            h = h_eff * fac;
            if h < floor {
                return Err(GateError::StepUnderflow {
                    t: t.to_f64_lossy(),
                    step: h.to_f64_lossy(),
                    worst_error: err.to_f64_lossy(),
                });
            }
        }
    }
    ws.last_step = Some(h);
    Ok(stats)
}

fn initial_step<T: Real>(cfg: &IntegratorConfig<T>, y: &[C<T>], dy: &[C<T>], max_step: T) -> T {
    let n = T::from_usize_lossy(y.len());
    let mut d0 = T::zero();
    let mut d1 = T::zero();
    for (a, b) in y.iter().zip(dy) {
        let sc = cfg.abs_tol + cfg.rel_tol * a.norm();
        d0 = d0 + a.norm_sqr() / (sc * sc);
        d1 = d1 + b.norm_sqr() / (sc * sc);
    }
    let d0 = (d0 / n).sqrt();
    let d1 = (d1 / n).sqrt();
    let h = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) {
        T::lit(1e-6) * max_step
    } else {
        T::lit(0.01) * d0 / d1
    };
    h.min(max_step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ci;

    #[test]
    fn exponential_decay_and_rotation() {
        // y' = (−1 + 2i) y, y(0) = 1
        let cfg = IntegratorConfig::<f64> {
            max_step: 1.0,
            ..Default::default()
        };
        let mut ws = Workspace::new(1);
        let mut y = vec![C::new(1.0, 0.0)];
        let lam = C::new(-1.0, 2.0);
        integrate(&cfg, &mut ws, &mut y, 0.0, 3.0, |_, y, dy| dy[0] = lam * y[0], |_| false).unwrap();
        let exact = (lam * 3.0).exp();
        assert!((y[0] - exact).norm() < 1e-9);
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = i cos(t) y  =>  y = exp(i sin t)
        let cfg = IntegratorConfig::<f64> {
            max_step: 0.5,
            ..Default::default()
        };
        let mut ws = Workspace::new(1);
        let mut y = vec![C::new(1.0, 0.0)];
        integrate(
            &cfg,
            &mut ws,
            &mut y,
            0.0,
            10.0,
            |t, y, dy| dy[0] = ci::<f64>() * t.cos() * y[0],
            |_| false,
        )
        .unwrap();
        let exact = C::new(0.0, 10f64.sin()).exp();
        assert!((y[0] - exact).norm() < 1e-8);
    }

    #[test]
    fn step_budget_exhaustion_is_reported() {
        let cfg = IntegratorConfig::<f64> {
            max_step: 1.0,
            max_steps: 3,
            ..Default::default()
        };
        let mut ws = Workspace::new(1);
        let mut y = vec![C::new(1.0, 0.0)];
        let err = integrate(
            &cfg,
            &mut ws,
            &mut y,
            0.0,
            100.0,
            |_, y, dy| dy[0] = ci::<f64>() * 50.0 * y[0],
            |_| false,
        );
        assert!(matches!(err, Err(GateError::StepUnderflow { .. })));
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = IntegratorConfig::<f64> {
            rel_tol: 0.1,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.rel_tol = 1e-8;
        c.scheme_order = 4;
        assert!(c.validate().is_err());
    }
}
