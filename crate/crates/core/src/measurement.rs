//! Readout: populations, fluorescence histograms, Poisson-mixture fits,
//! parity scans and Bell fidelity.
//!
//! `|↓⟩` is bright and `|↑⟩` dark, so `P2 = P_↓↓` and `P0 = P_↑↑`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::dynamics::shot_rng;
use crate::error::{GateError, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::C;
use crate::state::CompositeState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    pub mean_counts_per_bright_ion: f64,
    pub mean_background_counts: f64,
    /// Seconds; metadata only.
    pub detection_window: f64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self {
            mean_counts_per_bright_ion: 30.0,
            mean_background_counts: 3.0,
            detection_window: 250e-6,
        }
    }
}

impl DetectionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_counts_per_bright_ion >= 0.0) || !(self.mean_background_counts >= 0.0) {
            return Err(GateError::param("detection", "mean counts must be non-negative"));
        }
        Ok(())
    }

    /// Poisson mean with `k` bright ions.
    pub fn mean(&self, k: usize) -> f64 {
        self.mean_background_counts + k as f64 * self.mean_counts_per_bright_ion
    }
}

/// Probabilities of 0, 1 and 2 bright ions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationProbs {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

impl PopulationProbs {
    pub fn new(p0: f64, p1: f64, p2: f64) -> Result<Self> {
        let p = Self { p0, p1, p2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.p0, self.p1, self.p2];
        if all.iter().any(|x| !(-1e-12..=1.0 + 1e-12).contains(x)) {
            return Err(GateError::param("populations", "each probability must lie in [0, 1]"));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(GateError::param("populations", "probabilities must sum to 1"));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p0, self.p1, self.p2]
    }

    pub fn from_array(p: [f64; 3]) -> Self {
        Self {
            p0: p[0],
            p1: p[1],
            p2: p[2],
        }
    }
}

/// Traces out the motion and bins the spin populations by bright-ion count.
pub fn populations_from_state(state: &CompositeState) -> PopulationProbs {
    populations_from_spin_density(&state.spin_density())
}

/// Same binning for an already reduced 4×4 spin density operator.
pub fn populations_from_spin_density(s: &DenseMatrix) -> PopulationProbs {
    let diag: [f64; 4] = std::array::from_fn(|i| s[(i, i)].re.max(0.0));
    let total: f64 = diag.iter().sum();
    PopulationProbs {
        p0: diag[0] / total,
        p1: (diag[1] + diag[2]) / total,
        p2: diag[3] / total,
    }
}

/// Count histogram; `counts[c]` is the (possibly fractional) number of shots with `c` photons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<f64>,
}

impl Histogram {
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        let t = self.total();
        self.counts.iter().enumerate().map(|(c, n)| c as f64 * n).sum::<f64>() / t
    }

    /// CSV with columns `bin, value, stderr` (Poisson error `√value`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,value,stderr\n");
        for (c, n) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{c},{},{}", fmt_f64(*n), fmt_f64(n.sqrt()));
        }
        out
    }
}

const SHOT_BLOCK: usize = 256;

/// Draws `shots` detections: bright-ion class from `p`, then Poisson counts.
/// Shot blocks use independent seeded streams.
pub fn simulate_histogram(p: &PopulationProbs, det: &DetectionModel, shots: usize, seed: u64) -> Result<Histogram> {
    p.validate()?;
    det.validate()?;
    if shots == 0 {
        return Err(GateError::param("shots", "need at least one shot"));
    }
    let dists: Vec<Option<Poisson<f64>>> = (0..3)
        .map(|k| {
            let m = det.mean(k);
            if m > 0.0 {
                Poisson::new(m)
                    .map(Some)
                    .map_err(|e| GateError::param("detection", e.to_string()))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let mut counts: Vec<f64> = Vec::new();
    let mut done = 0;
    let mut block = 0u64;
    while done < shots {
        let mut rng = shot_rng(seed, block);
        let n = SHOT_BLOCK.min(shots - done);
        for _ in 0..n {
            let u: f64 = rng.random();
            let k = if u < p.p0 {
                0
            } else if u < p.p0 + p.p1 {
                1
            } else {
                2
            };
            let c = dists[k].as_ref().map_or(0, |d| d.sample(&mut rng) as usize);
            if c >= counts.len() {
                counts.resize(c + 1, 0.0);
            }
            counts[c] += 1.0;
        }
        done += n;
        block += 1;
    }
    Ok(Histogram { counts })
}

/// Infinite-shot limit scaled to `shots`, truncated at `max_count`.
pub fn expected_histogram(p: &PopulationProbs, det: &DetectionModel, shots: f64, max_count: usize) -> Histogram {
    let w = p.as_array();
    let counts = (0..=max_count)
        .map(|c| shots * (0..3).map(|k| w[k] * poisson_pmf(c, det.mean(k))).sum::<f64>())
        .collect();
    Histogram { counts }
}

pub fn poisson_pmf(c: usize, mu: f64) -> f64 {
    if mu == 0.0 {
        return if c == 0 { 1.0 } else { 0.0 };
    }
    (c as f64 * mu.ln() - mu - ln_factorial(c)).exp()
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum MixtureFitMode {
    /// Fit `λ_bg` and `λ_ion` jointly with the weights, starting from these values.
    Free { lambda_bg: f64, lambda_ion: f64 },
    /// Hold the Poisson means at calibration values.
    Frozen { lambda_bg: f64, lambda_ion: f64 },
}

impl MixtureFitMode {
    pub fn free(det: &DetectionModel) -> Self {
        MixtureFitMode::Free {
            lambda_bg: det.mean_background_counts,
            lambda_ion: det.mean_counts_per_bright_ion,
        }
    }

    pub fn frozen(det: &DetectionModel) -> Self {
        MixtureFitMode::Frozen {
            lambda_bg: det.mean_background_counts,
            lambda_ion: det.mean_counts_per_bright_ion,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub probs: PopulationProbs,
    /// Standard errors of `(P0, P1, P2)`.
    pub probs_stderr: [f64; 3],
    pub lambda_bg: f64,
    pub lambda_ion: f64,
    /// `None` when the means were frozen; infinite when not identifiable.
    pub lambda_stderr: Option<[f64; 2]>,
    pub log_likelihood: f64,
    pub iterations: usize,
}

const MIN_SHOTS: f64 = 100.0;
const EM_MAX_ITER: usize = 20_000;
const EM_TOL: f64 = 1e-13;

/// Maximum-likelihood three-component Poisson mixture with means
/// `λ_bg + k·λ_ion`, by EM with a Newton update of the means.
pub fn fit_poisson_mixture(hist: &Histogram, mode: MixtureFitMode) -> Result<MixtureFit> {
    let n_tot = hist.total();
    if !(n_tot >= MIN_SHOTS) {
        return Err(GateError::param(
            "histogram",
            format!("need at least {MIN_SHOTS} shots, got {n_tot}"),
        ));
    }
    let bins: Vec<(f64, f64)> = hist
        .counts
        .iter()
        .enumerate()
        .filter(|(_, n)| **n > 0.0)
        .map(|(c, n)| (c as f64, *n))
        .collect();
    if bins.len() < 2 {
        return Err(GateError::NonIdentifiable("all shots have the same count".into()));
    }
    let (mut b, mut l, free) = match mode {
        MixtureFitMode::Free { lambda_bg, lambda_ion } => (lambda_bg, lambda_ion, true),
        MixtureFitMode::Frozen { lambda_bg, lambda_ion } => (lambda_bg, lambda_ion, false),
    };
    if !(b > 0.0) || !(l > 0.0) {
        return Err(GateError::param("lambda", "Poisson means must be positive"));
    }
    let mut w = [1.0 / 3.0; 3];
    let mut ll_prev = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut resp = vec![[0.0; 3]; bins.len()];
    for it in 0..EM_MAX_ITER {
        iterations = it + 1;
        // E step
        let mut ll = 0.0;
        for (i, &(c, n)) in bins.iter().enumerate() {
            let terms: [f64; 3] = std::array::from_fn(|k| w[k] * pmf_f(c, b + k as f64 * l));
            let f: f64 = terms.iter().sum();
            ll += n * f.max(f64::MIN_POSITIVE).ln();
            for k in 0..3 {
                resp[i][k] = if f > 0.0 { terms[k] / f } else { 1.0 / 3.0 };
            }
        }
        // M step: weights in closed form, means by a damped Newton step
        for k in 0..3 {
            w[k] = bins.iter().zip(&resp).map(|(&(_, n), r)| n * r[k]).sum::<f64>() / n_tot;
        }
        if free {
            let (nb, nl) = newton_means(&bins, &resp, b, l);
            b = nb;
            l = nl;
        }
        if (ll - ll_prev).abs() <= EM_TOL * ll.abs().max(1.0) {
            break;
        }
        ll_prev = ll;
    }
    let ll = log_likelihood(&bins, &w, b, l);
    let (probs_stderr, lambda_stderr) = observed_errors(&bins, &w, b, l, free)?;
    Ok(MixtureFit {
        probs: PopulationProbs::from_array(w),
        probs_stderr,
        lambda_bg: b,
        lambda_ion: l,
        lambda_stderr,
        log_likelihood: ll,
        iterations,
    })
}

fn pmf_f(c: f64, mu: f64) -> f64 {
    poisson_pmf(c as usize, mu)
}

fn log_likelihood(bins: &[(f64, f64)], w: &[f64; 3], b: f64, l: f64) -> f64 {
    bins.iter()
        .map(|&(c, n)| {
            n * (0..3)
                .map(|k| w[k] * pmf_f(c, b + k as f64 * l))
                .sum::<f64>()
                .max(f64::MIN_POSITIVE)
                .ln()
        })
        .sum()
}

/// One Newton step on the expected complete-data log-likelihood in `(λ_bg, λ_ion)`.
fn newton_means(bins: &[(f64, f64)], resp: &[[f64; 3]], b: f64, l: f64) -> (f64, f64) {
    let (mut gb, mut gl, mut hbb, mut hbl, mut hll) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&(c, n), r) in bins.iter().zip(resp) {
        for (k, rk) in r.iter().enumerate() {
            let kf = k as f64;
            let mu = b + kf * l;
            let wgt = n * rk;
            gb += wgt * (c / mu - 1.0);
            gl += wgt * kf * (c / mu - 1.0);
            let h = wgt * c / (mu * mu);
            hbb -= h;
            hbl -= kf * h;
            hll -= kf * kf * h;
        }
    }
    let det = hbb * hll - hbl * hbl;
    if !(det > 0.0) {
        return (b, l);
    }
    let db = -(hll * gb - hbl * gl) / det;
    let dl = -(-hbl * gb + hbb * gl) / det;
    let mut s = 1.0;
    while s > 1e-6 {
        let (nb, nl) = (b + s * db, l + s * dl);
        if nb > 0.0 && nl > 0.0 {
            return (nb, nl);
        }
        s *= 0.5;
    }
    (b, l)
}

/// Standard errors from the observed information of the marginal likelihood.
/// Parameters: `(w0, w1, [λ_bg, λ_ion])` with `w2 = 1 − w0 − w1`.
fn observed_errors(bins: &[(f64, f64)], w: &[f64; 3], b: f64, l: f64, free: bool) -> Result<([f64; 3], Option<[f64; 2]>)> {
    let dim = if free { 4 } else { 2 };
    let mut info = DMatrix::<f64>::zeros(dim, dim);
    for &(c, n) in bins {
        let mu: [f64; 3] = std::array::from_fn(|k| b + k as f64 * l);
        let p: [f64; 3] = std::array::from_fn(|k| pmf_f(c, mu[k]));
        let f: f64 = (0..3).map(|k| w[k] * p[k]).sum();
        if !(f > 0.0) {
            continue;
        }
        // u_k = ∂ log P_k / ∂μ_k, v_k = ∂² P_k/∂μ_k² / P_k
        let u: [f64; 3] = std::array::from_fn(|k| c / mu[k] - 1.0);
        let v: [f64; 3] = std::array::from_fn(|k| u[k] * u[k] - c / (mu[k] * mu[k]));
        let mut grad = DVector::<f64>::zeros(dim);
        grad[0] = p[0] - p[2];
        grad[1] = p[1] - p[2];
        let mut hess = DMatrix::<f64>::zeros(dim, dim);
        if free {
            grad[2] = (0..3).map(|k| w[k] * p[k] * u[k]).sum();
            grad[3] = (0..3).map(|k| w[k] * p[k] * u[k] * k as f64).sum();
            hess[(0, 2)] = p[0] * u[0] - p[2] * u[2];
            hess[(0, 3)] = -2.0 * p[2] * u[2];
            hess[(1, 2)] = p[1] * u[1] - p[2] * u[2];
            hess[(1, 3)] = p[1] * u[1] - 2.0 * p[2] * u[2];
            hess[(2, 2)] = (0..3).map(|k| w[k] * p[k] * v[k]).sum();
            hess[(2, 3)] = (0..3).map(|k| w[k] * p[k] * v[k] * k as f64).sum();
            hess[(3, 3)] = (0..3).map(|k| w[k] * p[k] * v[k] * (k * k) as f64).sum();
            for r in 0..dim {
                for s in 0..r {
                    hess[(r, s)] = hess[(s, r)];
                }
            }
        }
        info += (&grad * grad.transpose() / (f * f) - hess / f) * n;
    }
    let cov = match info.clone().try_inverse() {
        Some(cov) if (0..dim).all(|i| cov[(i, i)] >= 0.0 && cov[(i, i)].is_finite()) => cov,
        _ if free => {
            // means not identifiable (e.g. a single populated class): fall back to frozen means
            let (p_err, _) = observed_errors(bins, w, b, l, false)?;
            return Ok((p_err, Some([f64::INFINITY; 2])));
        }
        _ => return Err(GateError::IllConditioned("observed information is singular".into())),
    };
    let var2 = cov[(0, 0)] + cov[(1, 1)] + 2.0 * cov[(0, 1)];
    let p_err = [cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt(), var2.max(0.0).sqrt()];
    let l_err = free.then(|| [cov[(2, 2)].sqrt(), cov[(3, 3)].sqrt()]);
    Ok((p_err, l_err))
}

/// `P2 + P0 − P1`
pub fn parity(p: &PopulationProbs) -> f64 {
    p.p2 + p.p0 - p.p1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityFit {
    /// Contrast, reported non-negative.
    pub a: f64,
    pub phi0: f64,
    pub b: f64,
    /// Standard errors of `(A, φ0, B)`.
    pub stderr: [f64; 3],
    pub residual_rms: f64,
    /// Condition number of the normal equations.
    pub condition: f64,
}

impl ParityFit {
    pub fn model(&self, phi: f64) -> f64 {
        self.a * (2.0 * phi + self.phi0).cos() + self.b
    }

    /// JSON records `(parameter, estimate, stderr)`.
    pub fn records(&self) -> Vec<FitRecord> {
        vec![
            FitRecord::new("A", self.a, self.stderr[0]),
            FitRecord::new("phi0", self.phi0, self.stderr[1]),
            FitRecord::new("B", self.b, self.stderr[2]),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub parameter: String,
    pub estimate: f64,
    pub stderr: f64,
}

impl FitRecord {
    pub fn new(parameter: &str, estimate: f64, stderr: f64) -> Self {
        Self {
            parameter: parameter.into(),
            estimate,
            stderr,
        }
    }
}

/// Largest condition number accepted for the parity normal equations.
pub const PARITY_MAX_CONDITION: f64 = 1e8;

/// Least-squares fit of `A cos(2φ + φ0) + B`; `weights` are optional `1/σ²`.
pub fn fit_parity(phis: &[f64], values: &[f64], stderrs: Option<&[f64]>) -> Result<ParityFit> {
    let n = phis.len();
    if n != values.len() || stderrs.is_some_and(|s| s.len() != n) {
        return Err(GateError::param("parity_scan", "length mismatch"));
    }
    if n < 8 {
        return Err(GateError::param("parity_scan", "need at least 8 phase points"));
    }
    let lo = phis.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = phis.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // n points evenly covering a full period of 2φ span (n−1)/n of it
    if 2.0 * (hi - lo) < 2.0 * std::f64::consts::PI * (n as f64 - 1.0) / n as f64 - 1e-9 {
        return Err(GateError::param("parity_scan", "grid must span 2π in 2φ"));
    }
    let wts: Vec<f64> = match stderrs {
        Some(s) if s.iter().all(|x| *x > 0.0) => s.iter().map(|x| 1.0 / (x * x)).collect(),
        _ => vec![1.0; n],
    };
    let x = DMatrix::from_fn(n, 3, |r, c| match c {
        0 => (2.0 * phis[r]).cos(),
        1 => (2.0 * phis[r]).sin(),
        _ => 1.0,
    });
    let wm = DMatrix::from_diagonal(&DVector::from_vec(wts.clone()));
    let y = DVector::from_column_slice(values);
    let xtw = x.transpose() * &wm;
    let normal = &xtw * &x;
    let sv = normal.clone().singular_values();
    let condition = sv.max() / sv.min();
    if !condition.is_finite() || condition > PARITY_MAX_CONDITION {
        return Err(GateError::IllConditioned(format!(
            "parity grid aliases (condition {condition:e})"
        )));
    }
    let inv = normal
        .try_inverse()
        .ok_or_else(|| GateError::IllConditioned("singular normal equations".into()))?;
    let beta = &inv * (&xtw * &y);
    let resid = &y - &x * &beta;
    let rss: f64 = resid.iter().zip(&wts).map(|(r, w)| r * r * w).sum();
    let residual_rms = (resid.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    // with given σ the covariance is (XᵀWX)⁻¹, otherwise scaled by the residual variance
    let scale = if stderrs.is_some() { 1.0 } else { rss / (n - 3) as f64 };
    let cov = inv * scale;
    let (c1, c2, b) = (beta[0], beta[1], beta[2]);
    let a = c1.hypot(c2);
    let phi0 = (-c2).atan2(c1);
    let (sa, sphi) = if a > 0.0 {
        let ga = [c1 / a, c2 / a];
        let gp = [c2 / (a * a), -c1 / (a * a)];
        let q = |g: [f64; 2]| {
            (g[0] * g[0] * cov[(0, 0)] + 2.0 * g[0] * g[1] * cov[(0, 1)] + g[1] * g[1] * cov[(1, 1)])
                .max(0.0)
                .sqrt()
        };
        (q(ga), q(gp))
    } else {
        (cov[(0, 0)].max(0.0).sqrt(), f64::INFINITY)
    };
    Ok(ParityFit {
        a,
        phi0,
        b,
        stderr: [sa, sphi, cov[(2, 2)].max(0.0).sqrt()],
        residual_rms,
        condition,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityPoint {
    pub phi: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityScan {
    pub points: Vec<ParityPoint>,
    pub fit: ParityFit,
}

impl ParityScan {
    /// CSV with columns `phi, value, stderr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phi,value,stderr\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", fmt_f64(p.phi), fmt_f64(p.value), fmt_f64(p.stderr));
        }
        out
    }
}

/// `n` analysis phases evenly covering `[0, 2π)`, two periods of the parity.
pub fn default_phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * std::f64::consts::PI * k as f64 / n as f64).collect()
}

/// Evaluates `(parity, stderr)` at each phase and fits the oscillation.
/// Zero standard errors (exact mode) give an unweighted fit.
pub fn parity_scan(phis: &[f64], mut point: impl FnMut(usize, f64) -> Result<(f64, f64)>) -> Result<ParityScan> {
    let mut points = Vec::with_capacity(phis.len());
    for (i, &phi) in phis.iter().enumerate() {
        let (value, stderr) = point(i, phi)?;
        points.push(ParityPoint { phi, value, stderr });
    }
    let values: Vec<f64> = points.iter().map(|p| p.value).collect();
    let errs: Vec<f64> = points.iter().map(|p| p.stderr).collect();
    let weighted = errs.iter().all(|e| *e > 0.0);
    let fit = fit_parity(phis, &values, weighted.then_some(errs.as_slice()))?;
    Ok(ParityScan { points, fit })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub value: f64,
    pub stderr: f64,
}

/// `F = (P0 + P2 + A)/2` with first-order error propagation.
pub fn bell_fidelity(p0_plus_p2: f64, p_stderr: f64, a: f64, a_stderr: f64) -> Fidelity {
    Fidelity {
        value: 0.5 * (p0_plus_p2 + a),
        stderr: 0.5 * p_stderr.hypot(a_stderr),
    }
}

/// `⟨target|ρ_spin|target⟩` after tracing out the motion.
pub fn fidelity_exact(state: &CompositeState, target: &[C<f64>; 4]) -> f64 {
    state.spin_fidelity(target)
}

/// Everything one readout campaign produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub histograms: Vec<Histogram>,
    pub populations: PopulationProbs,
    pub populations_stderr: [f64; 3],
    pub parity: Option<ParityFit>,
    pub fidelity: Option<Fidelity>,
}

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}
