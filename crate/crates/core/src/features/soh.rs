//! Sum-of-harmonics model of the gait energy signal, fitted by nonlinear least
//! squares over a small set of candidate fundamentals with BIC order selection.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dsp::EnergySignal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SohConfig {
    pub q_max: usize,
    /// Half-width of the refinement interval around each candidate, Hz.
    pub search_halfwidth: f64,
    /// Golden-section stopping width, Hz.
    pub tolerance: f64,
    /// Residual floor relative to the signal variance, keeps the log-likelihood finite
    /// on noiseless data.
    pub residual_floor: f64,
}

impl Default for SohConfig {
    fn default() -> Self {
        Self { q_max: 5, search_halfwidth: 0.05, tolerance: 1e-5, residual_floor: 1e-10 }
    }
}

/// x(t) = Σ α_i cos(2π i f0 t + φ_i), i = 1..q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SohModel {
    pub f0: f64,
    pub q: usize,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    /// Squared error of the fit.
    pub residual: f64,
    pub bic: f64,
}

impl SohModel {
    /// Amplitudes zero-padded to `len`.
    pub fn padded_amplitudes(&self, len: usize) -> Vec<f64> {
        let mut out = self.amplitudes.clone();
        out.resize(len, 0.0);
        out.truncate(len);
        out
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.amplitudes
            .iter()
            .zip(&self.phases)
            .enumerate()
            .map(|(i, (a, p))| a * (2.0 * PI * (i + 1) as f64 * self.f0 * t + p).cos())
            .sum()
    }
}

/// Linear least-squares fit of q harmonics of `f0` plus an offset; returns (u, v)
/// pairs and residual. The offset matters when the window holds few cycles.
pub(crate) fn harmonic_ls(t: &[f64], e: &[f64], f0: f64, q: usize) -> (Vec<(f64, f64)>, f64) {
    let n = t.len();
    let z = DMatrix::from_fn(n, 2 * q + 1, |r, c| {
        if c == 2 * q {
            return 1.0;
        }
        let arg = 2.0 * PI * (c / 2 + 1) as f64 * f0 * t[r];
        if c % 2 == 0 { arg.cos() } else { arg.sin() }
    });
    let y = DVector::from_column_slice(e);
    let gram = z.tr_mul(&z);
    let rhs = z.tr_mul(&y);
    let h = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram.svd(true, true).solve(&rhs, 1e-12).unwrap_or_else(|_| DVector::zeros(2 * q + 1)),
    };
    let residual = (&y - &z * &h).norm_squared();
    let pairs = (0..q).map(|i| (h[2 * i], h[2 * i + 1])).collect();
    (pairs, residual)
}

/// Minimise `f` on [a, b] by golden-section search.
pub(crate) fn golden_section(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd { c } else { d }
}

/// Fit the sum-of-harmonics model to the mean-removed energy signal. Candidate
/// fundamentals are `f_md`, `f_md / 2` and `f_md / 3`, each refined within
/// `±search_halfwidth`. The fundamental with the lowest BIC at a common bandwidth is
/// kept, then its order is chosen by BIC over `1..=q_max`.
pub fn fit_soh(energy: &EnergySignal, f_md: f64, cfg: &SohConfig) -> Result<SohModel> {
    if !(f_md.is_finite() && f_md > 0.0) {
        return Err(Error::InvalidConfig(format!("f_mD must be positive, got {f_md}")));
    }
    if cfg.q_max == 0 {
        return Err(Error::InvalidConfig("q_max must be >= 1".into()));
    }
    let n = energy.values.len();
    if n != energy.time_axis.len() {
        return Err(Error::DimensionMismatch { expected: n, got: energy.time_axis.len() });
    }
    if n < 2 * cfg.q_max + 1 {
        return Err(Error::TooShort { needed: 2 * cfg.q_max + 1, got: n });
    }
    if energy.values.iter().chain(&energy.time_axis).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("energy signal"));
    }
    let mean = energy.values.iter().sum::<f64>() / n as f64;
    let e: Vec<f64> = energy.values.iter().map(|v| v - mean).collect();
    let total: f64 = e.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(Error::Constant("energy signal"));
    }
    let t = &energy.time_axis;
    let floor = cfg.residual_floor * total / n as f64;
    let nf = n as f64;

    let bic = |xi: f64, q: usize| nf * (xi / nf).max(floor).ln() + (2 * q + 1) as f64 * nf.ln();
    let refine = |centre: f64, q: usize| {
        let lo = (centre - cfg.search_halfwidth).max(1e-6);
        let hi = centre + cfg.search_halfwidth;
        let f0 = golden_section(lo, hi, cfg.tolerance, |f| harmonic_ls(t, &e, f, q).1);
        (f0, harmonic_ls(t, &e, f0, q).1)
    };

    // Fundamental: each candidate is fitted up to the same highest frequency,
    // q_max harmonics of the lowest candidate, so that no candidate gains from
    // merely reaching further up the spectrum.
    let mut fundamental: Option<(f64, f64)> = None; // (bic, centre)
    for divisor in [1usize, 2, 3] {
        let centre = f_md / divisor as f64;
        let q = (cfg.q_max * divisor / 3).max(1);
        let (_, xi) = refine(centre, q);
        let b = bic(xi, q);
        if fundamental.is_none_or(|(best, _)| b < best) {
            fundamental = Some((b, centre));
        }
    }
    let centre = fundamental.expect("at least one candidate").1;

    // Order: the full range of orders for the chosen fundamental.
    let mut best: Option<(f64, f64, usize)> = None; // (bic, f0, q)
    for q in 1..=cfg.q_max {
        let (f0, xi) = refine(centre, q);
        let b = bic(xi, q);
        if best.is_none_or(|(bb, _, _)| b < bb) {
            best = Some((b, f0, q));
        }
    }
    let (bic, f0, q) = best.expect("at least one candidate");
    let (pairs, residual) = harmonic_ls(t, &e, f0, q);
    // u cos + v sin = α cos(θ + φ) with u = α cos φ, v = -α sin φ.
    let amplitudes = pairs.iter().map(|(u, v)| u.hypot(*v)).collect();
    let phases = pairs.iter().map(|(u, v)| (-v).atan2(*u)).collect();
    Ok(SohModel { f0, q, amplitudes, phases, residual, bic })
}

/// Expected gait harmonic ratios.
pub const HARMONIC_RATIOS: [f64; 3] = [1.0, 0.5, 1.0 / 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicRatio {
    /// Snapped to one of [`HARMONIC_RATIOS`].
    pub beta: f64,
    pub raw: f64,
    /// Raw ratio lies outside [1/4, 3/2].
    pub flagged: bool,
}

/// β = f0 / f_mD, snapped to the nearest of 1, 1/2, 1/3.
pub fn gait_harmonic_ratio(f0: f64, f_md: f64) -> Result<HarmonicRatio> {
    if !(f0.is_finite() && f_md.is_finite() && f0 > 0.0 && f_md > 0.0) {
        return Err(Error::InvalidConfig(format!("frequencies must be positive (f0 {f0}, f_mD {f_md})")));
    }
    let raw = f0 / f_md;
    let beta = HARMONIC_RATIOS
        .iter()
        .copied()
        .min_by(|a, b| (a - raw).abs().total_cmp(&(b - raw).abs()))
        .unwrap();
    Ok(HarmonicRatio { beta, raw, flagged: !(0.25..=1.5).contains(&raw) })
}
