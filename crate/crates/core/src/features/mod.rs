//! Physical gait features and the cadence-domain baseline feature sets.

mod baseline;
mod soh;
mod spline;

pub use baseline::{
    baseline_bjorklund, baseline_ricci, BaselineFeaturesB, BaselineFeaturesR, BaselineVariantB,
    BaselineVariantR, RicciConfig,
};
pub use soh::{fit_soh, gait_harmonic_ratio, HarmonicRatio, SohConfig, SohModel, HARMONIC_RATIOS};
pub use spline::NaturalSpline;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cvd::{cadence_axis, DopplerSpectrum, CADENCE_STEP, N_CADENCE};
use crate::dsp::EnvelopeSignal;
use crate::error::{Error, Result};
use crate::sim::RadarConfig;

/// Doppler span of the moving average applied before picking the base velocity, Hz.
pub const BASE_VELOCITY_SMOOTHING_HZ: f64 = 11.0;

/// Odd window length closest to `span / resolution`.
pub(crate) fn odd_window(span: f64, resolution: f64) -> usize {
    let x = span / resolution;
    (2.0 * ((x - 1.0) / 2.0).round().max(0.0) + 1.0) as usize
}

/// Centred moving average; the window shrinks at the edges.
pub(crate) fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Slowest radial speed accepted as a base velocity, m/s. Slower Doppler bins hold
/// stance feet and a grounded cane, whose on/off pattern survives mean removal.
pub const MIN_BASE_VELOCITY: f64 = 0.1;

/// Base velocity from the peak of the smoothed mean Doppler spectrum, ignoring
/// speeds below [`MIN_BASE_VELOCITY`]. A flat-topped maximum resolves to the middle
/// of its plateau; separate equal maxima resolve to the lowest (signed) Doppler
/// frequency.
pub fn estimate_base_velocity(mds: &DopplerSpectrum, cfg: &RadarConfig) -> Result<f64> {
    let n = mds.values.len();
    if n != mds.doppler_axis.len() {
        return Err(Error::DimensionMismatch { expected: n, got: mds.doppler_axis.len() });
    }
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    if mds.values.iter().all(|&v| v == 0.0) {
        return Err(Error::Constant("mean Doppler spectrum is all zero"));
    }
    let resolution = (mds.doppler_axis[1] - mds.doppler_axis[0]).abs();
    let mut smoothed = moving_average(&mds.values, odd_window(BASE_VELOCITY_SMOOTHING_HZ, resolution));
    for (s, &f) in smoothed.iter_mut().zip(&mds.doppler_axis) {
        if cfg.velocity_from_observed(f).abs() < MIN_BASE_VELOCITY {
            *s = f64::NEG_INFINITY;
        }
    }
    let max = smoothed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::NoBinsLeft(cfg.observed_frequency(MIN_BASE_VELOCITY).abs()));
    }
    let lowest = (0..n)
        .filter(|&i| smoothed[i] == max)
        .min_by(|&a, &b| mds.doppler_axis[a].total_cmp(&mds.doppler_axis[b]))
        .unwrap();
    let mut lo = lowest;
    while lo > 0 && smoothed[lo - 1] == max {
        lo -= 1;
    }
    let mut hi = lowest;
    while hi + 1 < n && smoothed[hi + 1] == max {
        hi += 1;
    }
    let mut plateau: Vec<usize> = (lo..=hi).collect();
    plateau.sort_by(|&a, &b| mds.doppler_axis[a].total_cmp(&mds.doppler_axis[b]));
    let best = plateau[(plateau.len() - 1) / 2];
    Ok(cfg.velocity_from_observed(mds.doppler_axis[best]))
}

/// Cadence-grid spectrum magnitude of a uniformly sampled, mean-removed series.
fn cadence_spectrum_of(values: &[f64], sample_rate: f64) -> Vec<f64> {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    (0..N_CADENCE)
        .map(|j| {
            let w = 2.0 * std::f64::consts::PI * j as f64 * CADENCE_STEP / sample_rate;
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in values.iter().enumerate() {
                let (s, c) = (w * t as f64).sin_cos();
                re += (v - mean) * c;
                im += (v - mean) * s;
            }
            re.hypot(im)
        })
        .collect()
}

/// Micro-Doppler repetition frequency: the cadence (0.04 Hz grid, DC excluded) with
/// the largest Fourier magnitude of the mean-removed envelope.
pub fn estimate_fmd(env: &EnvelopeSignal) -> Result<f64> {
    let n = env.values.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    let first = env.values[0];
    if env.values.iter().all(|&v| v == first) {
        return Err(Error::Constant("envelope"));
    }
    let fr = env.sample_rate();
    let spectrum = cadence_spectrum_of(&env.values, fr);
    let axis = cadence_axis();
    // Only cadences below the envelope Nyquist rate are meaningful.
    let usable = axis.iter().take_while(|&&c| c < fr / 2.0).count();
    let idx = crate::cvd::argmax(&spectrum[1..usable.max(2)]).unwrap() + 1;
    Ok(axis[idx])
}

/// Which envelope values enter the top-decile average for f_Dmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdmaxMode {
    /// Every envelope sample.
    #[default]
    AllSamples,
    /// Only local maxima of |envelope|.
    PeakValues,
}

/// Mean of the highest 10 % of |envelope| values, carrying the envelope's sign. The
/// count is `max(1, floor(n / 10))`.
pub fn estimate_fdmax(env: &EnvelopeSignal, mode: FdmaxMode) -> Result<f64> {
    if env.values.is_empty() {
        return Err(Error::Empty("envelope"));
    }
    let mut mags: Vec<f64> = match mode {
        FdmaxMode::AllSamples => env.values.iter().map(|v| v.abs()).collect(),
        FdmaxMode::PeakValues => {
            let abs: Vec<f64> = env.values.iter().map(|v| v.abs()).collect();
            let peaks = PeakConfig::default().peaks(&abs, env.sample_rate());
            if peaks.is_empty() { abs } else { peaks.iter().map(|&i| abs[i]).collect() }
        }
    };
    mags.sort_by(|a, b| b.total_cmp(a));
    let k = (mags.len() / 10).max(1);
    let mean = mags[..k].iter().sum::<f64>() / k as f64;
    let sign = if env.values.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    Ok(sign * mean)
}

/// Indices (ascending) of local maxima with height `>= min_height`, chosen greedily
/// by height so that no two are closer than `min_distance` samples. Plateaus count
/// once, at their first sample.
pub fn find_peaks(x: &[f64], min_height: f64, min_distance: usize) -> Vec<usize> {
    let candidates: Vec<usize> = local_maxima(x).into_iter().filter(|&i| x[i] >= min_height).collect();
    select_separated(x, candidates, min_distance)
}

fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[j + 1] == x[i] {
            j += 1;
        }
        if i > 0 && x[i - 1] < x[i] && j + 1 < n && x[j + 1] < x[i] {
            out.push(i);
        }
        i = j + 1;
    }
    out
}

fn select_separated(x: &[f64], mut candidates: Vec<usize>, min_distance: usize) -> Vec<usize> {
    candidates.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::new();
    for c in candidates {
        if chosen.iter().all(|&k| c.abs_diff(k) >= min_distance) {
            chosen.push(c);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Height of peak `i` above the higher of the two minima separating it from taller
/// samples (or the signal ends) on either side.
pub fn prominence(x: &[f64], i: usize) -> f64 {
    let h = x[i];
    let mut left = h;
    for &v in x[..i].iter().rev() {
        if v > h {
            break;
        }
        left = left.min(v);
    }
    let mut right = h;
    for &v in &x[i + 1..] {
        if v > h {
            break;
        }
        right = right.min(v);
    }
    h - left.max(right)
}

/// Local maxima whose prominence is at least `min_prominence`, separated by at least
/// `min_distance` samples.
pub fn find_prominent_peaks(x: &[f64], min_prominence: f64, min_distance: usize) -> Vec<usize> {
    let candidates: Vec<usize> =
        local_maxima(x).into_iter().filter(|&i| prominence(x, i) >= min_prominence).collect();
    select_separated(x, candidates, min_distance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakConfig {
    /// Minimum time between envelope peaks, s.
    pub min_separation: f64,
    /// Minimum peak prominence relative to the range of |envelope|.
    pub min_prominence_fraction: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self { min_separation: 0.25, min_prominence_fraction: 0.2 }
    }
}

impl PeakConfig {
    fn peaks(&self, abs: &[f64], sample_rate: f64) -> Vec<usize> {
        let max = abs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = abs.iter().cloned().fold(f64::INFINITY, f64::min);
        let distance = (self.min_separation * sample_rate).round().max(1.0) as usize;
        find_prominent_peaks(abs, self.min_prominence_fraction * (max - min), distance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientOfVariation {
    pub value: f64,
    /// Fewer than two envelope peaks; `value` is imputed as 0.
    pub missing: bool,
}

/// σ/μ of a natural cubic spline through the peaks of |envelope|, sampled at the
/// envelope times between the first and last peak.
pub fn coefficient_of_variation(env: &EnvelopeSignal, cfg: &PeakConfig) -> Result<CoefficientOfVariation> {
    if env.values.len() != env.time_axis.len() {
        return Err(Error::DimensionMismatch { expected: env.values.len(), got: env.time_axis.len() });
    }
    let abs: Vec<f64> = env.values.iter().map(|v| v.abs()).collect();
    let max = abs.iter().cloned().fold(0.0, f64::max);
    let missing = CoefficientOfVariation { value: 0.0, missing: true };
    if max == 0.0 {
        return Ok(missing);
    }
    let peaks = cfg.peaks(&abs, env.sample_rate());
    if peaks.len() < 2 {
        log::warn!("fewer than two envelope peaks; c_v imputed as 0");
        return Ok(missing);
    }
    let x: Vec<f64> = peaks.iter().map(|&i| env.time_axis[i]).collect();
    let y: Vec<f64> = peaks.iter().map(|&i| abs[i]).collect();
    let spline = NaturalSpline::new(&x, &y)?;
    let first = peaks[0];
    let last = *peaks.last().unwrap();
    let samples: Vec<f64> = env.time_axis[first..=last].iter().map(|&t| spline.eval(t)).collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Ok(missing);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(CoefficientOfVariation { value: var.sqrt() / mean, missing: false })
}

/// z^phy = [f_mD, |f_Dmax|, c_v, β, α_1..α_5].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalFeatures {
    pub f_md: f64,
    pub f_dmax: f64,
    pub c_v: f64,
    pub beta: f64,
    pub alphas: [f64; 5],
    /// Names of features that were imputed.
    pub missing: Vec<String>,
}

impl PhysicalFeatures {
    pub const NAMES: [&'static str; 9] =
        ["f_mD", "fDmax", "cv", "beta", "alpha1", "alpha2", "alpha3", "alpha4", "alpha5"];

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.f_md, self.f_dmax.abs(), self.c_v, self.beta];
        v.extend_from_slice(&self.alphas);
        v
    }
}

/// Hand-crafted feature sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    Phy,
    B1,
    B2,
    R1,
    R2,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [FeatureSet::Phy, FeatureSet::B1, FeatureSet::B2, FeatureSet::R1, FeatureSet::R2];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Phy => "phy",
            FeatureSet::B1 => "b1",
            FeatureSet::B2 => "b2",
            FeatureSet::R1 => "r1",
            FeatureSet::R2 => "r2",
        }
    }

    pub fn len(self) -> usize {
        self.names().len()
    }

    pub fn names(self) -> Vec<String> {
        match self {
            FeatureSet::Phy => PhysicalFeatures::NAMES.iter().map(|s| s.to_string()).collect(),
            FeatureSet::B1 => BaselineFeaturesB::names(BaselineVariantB::B1),
            FeatureSet::B2 => BaselineFeaturesB::names(BaselineVariantB::B2),
            FeatureSet::R1 => BaselineFeaturesR::names(BaselineVariantR::R1, 0),
            FeatureSet::R2 => BaselineFeaturesR::names(BaselineVariantR::R2, crate::cvd::N_DOPPLER_PIXELS),
        }
    }
}

impl std::fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown feature set '{s}'")))
    }
}

/// Resample `values` to `len` points by linear interpolation over the index range.
pub(crate) fn resample_linear(values: &[f64], len: usize) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return vec![0.0; len];
    }
    if n == 1 || len == 1 {
        return vec![values[0]; len];
    }
    (0..len)
        .map(|m| {
            let pos = m as f64 * (n - 1) as f64 / (len - 1) as f64;
            let i = (pos.floor() as usize).min(n - 2);
            let f = pos - i as f64;
            values[i] * (1.0 - f) + values[i + 1] * f
        })
        .collect()
}

/// Copy column `j` of an image.
pub(crate) fn column(values: &Array2<f64>, j: usize) -> Vec<f64> {
    values.column(j).to_vec()
}
