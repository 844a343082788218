//! Point-scatterer gait simulator.
//!
//! A walker is modelled as a handful of point scatterers (torso, two legs,
//! two feet and optionally a cane), each with its own radial velocity track.
//! The complex baseband return is the superposition of the scatterers with
//! phase accumulated from the instantaneous Doppler shift.
//!
//! Sign convention: radial velocities are positive toward the radar.
//! `doppler_shift` evaluates `-f_c * 2v/c * cos(theta)` and every scatterer
//! contributes `exp(-j * phase)`, so a scatterer approaching the radar shows
//! up at a *positive* frequency in the spectrogram. [`OBSERVED_FREQUENCY_SIGN`]
//! is the single constant relating the two.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed spectrogram frequency = `OBSERVED_FREQUENCY_SIGN * doppler_shift(v)`.
pub const OBSERVED_FREQUENCY_SIGN: f64 = -1.0;

/// Relative amplitude of the torso's periodic velocity sway.
pub const TORSO_SWAY: f64 = 0.02;
/// Relative depth of the torso's periodic reflectivity fluctuation.
pub const TORSO_RCS_MODULATION: f64 = 0.1;
/// Fraction of the event interval occupied by a single foot (or cane) burst.
pub const BURST_DUTY: f64 = 0.65;

const TORSO_REFLECTIVITY: f64 = 1.0;
const LEG_REFLECTIVITY: f64 = 0.3;
/// Positions of the leg scatterers between hip (0) and foot (1).
const LEG_SEGMENTS: [f64; 3] = [0.25, 0.5, 0.75];
const FOOT_REFLECTIVITY: f64 = 0.5;
const CANE_REFLECTIVITY: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarConfig {
    /// Hz
    pub carrier_frequency: f64,
    /// m/s
    pub propagation_speed: f64,
    /// Hz
    pub sampling_frequency: f64,
    /// s
    pub duration: f64,
    /// Angle between motion and line of sight, radians.
    pub aspect_angle: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            carrier_frequency: 24.0e9,
            propagation_speed: 2.998e8,
            sampling_frequency: 2560.0,
            duration: 6.0,
            aspect_angle: 0.0,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.carrier_frequency) {
            return Err(Error::InvalidConfig("carrier_frequency must be > 0".into()));
        }
        if !positive(self.propagation_speed) {
            return Err(Error::InvalidConfig("propagation_speed must be > 0".into()));
        }
        if !positive(self.sampling_frequency) {
            return Err(Error::InvalidConfig("sampling_frequency must be > 0".into()));
        }
        if !positive(self.duration) {
            return Err(Error::InvalidConfig("duration must be > 0".into()));
        }
        if !self.aspect_angle.is_finite() {
            return Err(Error::InvalidConfig("aspect_angle must be finite".into()));
        }
        Ok(())
    }

    /// Number of samples, `round(duration * f_s)`.
    pub fn n_samples(&self) -> usize {
        (self.duration * self.sampling_frequency).round() as usize
    }

    /// Observed spectrogram frequency of a scatterer moving at `v` (m/s, positive toward).
    pub fn observed_frequency(&self, v: f64) -> f64 {
        OBSERVED_FREQUENCY_SIGN * doppler_shift(v, self.aspect_angle, self)
    }

    /// Inverse of [`RadarConfig::observed_frequency`] at the configured aspect angle.
    pub fn velocity_from_observed(&self, f: f64) -> f64 {
        let scale = -self.carrier_frequency * 2.0 / self.propagation_speed * self.aspect_angle.cos();
        (OBSERVED_FREQUENCY_SIGN * f) / scale
    }
}

/// Doppler shift of a scatterer with radial velocity `v` at angle `theta`.
pub fn doppler_shift(v: f64, theta: f64, cfg: &RadarConfig) -> f64 {
    -cfg.carrier_frequency * (2.0 * v / cfg.propagation_speed) * theta.cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GaitClass {
    #[serde(rename = "NW")]
    Nw,
    #[serde(rename = "L1")]
    L1,
    #[serde(rename = "L2")]
    L2,
    #[serde(rename = "CW")]
    Cw,
    #[serde(rename = "CW/oos")]
    CwOos,
}

impl GaitClass {
    pub const ALL: [GaitClass; 5] = [
        GaitClass::Nw,
        GaitClass::L1,
        GaitClass::L2,
        GaitClass::Cw,
        GaitClass::CwOos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GaitClass::Nw => "NW",
            GaitClass::L1 => "L1",
            GaitClass::L2 => "L2",
            GaitClass::Cw => "CW",
            GaitClass::CwOos => "CW/oos",
        }
    }

    /// Position in the canonical order NW, L1, L2, CW, CW/oos.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Expected ratio between the gait fundamental and the micro-Doppler repetition frequency.
    pub fn expected_harmonic_ratio(self) -> f64 {
        match self {
            GaitClass::Nw | GaitClass::L2 => 1.0,
            GaitClass::L1 | GaitClass::Cw => 0.5,
            GaitClass::CwOos => 1.0 / 3.0,
        }
    }
}

impl fmt::Display for GaitClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GaitClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NW" => Ok(GaitClass::Nw),
            "L1" => Ok(GaitClass::L1),
            "L2" => Ok(GaitClass::L2),
            "CW" => Ok(GaitClass::Cw),
            "CW/oos" => Ok(GaitClass::CwOos),
            other => Err(Error::Format(format!("unknown gait class {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Toward,
    Away,
}

impl Direction {
    /// Sign of the observed Doppler frequencies produced by this walking direction.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Toward => 1.0,
            Direction::Away => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Toward => "toward",
            Direction::Away => "away",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toward" => Ok(Direction::Toward),
            "away" => Ok(Direction::Away),
            other => Err(Error::Format(format!("unknown direction {other:?}"))),
        }
    }
}

/// One point scatterer sampled at the radar sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScattererTrack {
    pub id: String,
    pub reflectivity: f64,
    /// Radial velocity per sample, m/s, positive toward the radar.
    pub radial_velocity: Vec<f64>,
    /// Optional per-sample multiplicative reflectivity fluctuation.
    pub amplitude: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitProfile {
    pub gait_class: GaitClass,
    /// Walking speed, m/s.
    pub base_velocity: f64,
    /// Rate of micro-Doppler stride signatures, Hz (one signature per leg swing).
    pub stride_rate: f64,
    pub direction: Direction,
    pub peak_foot_velocity: f64,
    pub limp_attenuation: f64,
    pub cane_peak_velocity: f64,
    /// SNR against total signal power, dB. `None` synthesizes a noiseless signal.
    pub noise_snr: Option<f64>,
    pub rng_seed: u64,
    /// Gait phase at t = 0 as a fraction of the event period.
    pub gait_phase: f64,
}

impl Default for GaitProfile {
    fn default() -> Self {
        Self {
            gait_class: GaitClass::Nw,
            base_velocity: 1.0,
            stride_rate: 0.9,
            direction: Direction::Toward,
            peak_foot_velocity: 2.8,
            limp_attenuation: 0.6,
            cane_peak_velocity: 2.2,
            noise_snr: None,
            rng_seed: 0,
            gait_phase: 0.0,
        }
    }
}

impl GaitProfile {
    pub fn new(gait_class: GaitClass) -> Self {
        Self { gait_class, ..Self::default() }
    }

    /// Rate of micro-Doppler events of any limb, Hz.
    pub fn micro_doppler_rate(&self) -> f64 {
        match self.gait_class {
            // Two strides and one cane movement form one period of three evenly spaced events.
            GaitClass::CwOos => 1.5 * self.stride_rate,
            _ => self.stride_rate,
        }
    }

    pub fn validate(&self, cfg: &RadarConfig) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidProfile(msg.to_string()));
        if !(0.5..=2.0).contains(&self.stride_rate) {
            return bad("stride_rate must lie in [0.5, 2.0] Hz");
        }
        if !(self.base_velocity.is_finite() && self.base_velocity > 0.0) {
            return bad("base_velocity must be > 0");
        }
        if !(self.base_velocity < self.peak_foot_velocity) {
            return bad("base_velocity must be below peak_foot_velocity");
        }
        if !(self.limp_attenuation > 0.0 && self.limp_attenuation <= 1.0) {
            return bad("limp_attenuation must lie in (0, 1]");
        }
        if !(self.cane_peak_velocity.is_finite() && self.cane_peak_velocity > 0.0) {
            return bad("cane_peak_velocity must be > 0");
        }
        if let Some(snr) = self.noise_snr {
            if !snr.is_finite() {
                return bad("noise_snr must be finite (use None for a noiseless signal)");
            }
        }
        if !self.gait_phase.is_finite() {
            return bad("gait_phase must be finite");
        }
        let v_max = self
            .peak_foot_velocity
            .max(self.cane_peak_velocity)
            .max(self.base_velocity * (1.0 + TORSO_SWAY));
        let f_max = doppler_shift(v_max, 0.0, cfg).abs();
        if cfg.sampling_frequency <= 2.0 * f_max {
            return Err(Error::InvalidConfig(format!(
                "sampling frequency {} Hz cannot represent Doppler shifts up to {:.1} Hz",
                cfg.sampling_frequency, f_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IQRecording {
    pub samples: Vec<Complex64>,
    pub config: RadarConfig,
    pub label: Option<GaitClass>,
    pub subject_id: Option<String>,
    pub direction: Direction,
}

impl IQRecording {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Limb {
    FootA,
    FootB,
    Cane,
}

#[derive(Debug, Clone, Copy)]
struct Burst {
    start: f64,
    peak: f64,
    limb: Limb,
}

fn event_interval(p: &GaitProfile) -> f64 {
    1.0 / p.micro_doppler_rate()
}

/// The sequence of limb bursts covering `[-period, duration]`.
fn burst_schedule(p: &GaitProfile, duration: f64) -> Vec<Burst> {
    let interval = event_interval(p);
    let cycle: &[Limb] = match p.gait_class {
        GaitClass::CwOos => &[Limb::FootA, Limb::FootB, Limb::Cane],
        _ => &[Limb::FootA, Limb::FootB],
    };
    let phase = p.gait_phase.rem_euclid(1.0);
    let first = -(cycle.len() as i64) - 1;
    let last = (duration / interval).ceil() as i64 + 1;
    let mut bursts = Vec::new();
    for k in first..=last {
        let start = (k as f64 + phase) * interval;
        let limb = cycle[k.rem_euclid(cycle.len() as i64) as usize];
        let foot = p.peak_foot_velocity;
        let limped = foot * p.limp_attenuation;
        match (p.gait_class, limb) {
            (_, Limb::Cane) => bursts.push(Burst { start, peak: p.cane_peak_velocity, limb }),
            (GaitClass::L1, Limb::FootB) => bursts.push(Burst { start, peak: limped, limb }),
            (GaitClass::L2, _) => bursts.push(Burst { start, peak: limped, limb }),
            (GaitClass::Cw, Limb::FootB) => {
                bursts.push(Burst { start, peak: foot, limb });
                bursts.push(Burst { start, peak: p.cane_peak_velocity, limb: Limb::Cane });
            }
            _ => bursts.push(Burst { start, peak: foot, limb }),
        }
    }
    bursts
}

fn burst_velocity(bursts: &[Burst], limb: Limb, width: f64, t: f64) -> f64 {
    bursts
        .iter()
        .filter(|b| b.limb == limb && t >= b.start && t < b.start + width)
        .map(|b| b.peak * (PI * (t - b.start) / width).sin())
        .sum()
}

/// Scatterer velocity tracks for a gait profile.
pub fn gait_tracks(profile: &GaitProfile, cfg: &RadarConfig) -> Result<Vec<ScattererTrack>> {
    cfg.validate()?;
    profile.validate(cfg)?;
    let n = cfg.n_samples();
    let fs = cfg.sampling_frequency;
    let sign = profile.direction.sign();
    let width = BURST_DUTY * event_interval(profile);
    let bursts = burst_schedule(profile, cfg.duration);
    let has_cane = matches!(profile.gait_class, GaitClass::Cw | GaitClass::CwOos);
    let phase0 = 2.0 * PI * profile.gait_phase;

    let mut torso = Vec::with_capacity(n);
    let mut torso_amp = Vec::with_capacity(n);
    let mut foot_a = Vec::with_capacity(n);
    let mut foot_b = Vec::with_capacity(n);
    let mut cane = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        let arg = 2.0 * PI * profile.stride_rate * t + phase0;
        let v_torso = profile.base_velocity * (1.0 + TORSO_SWAY * arg.sin());
        torso.push(sign * v_torso);
        torso_amp.push(1.0 + TORSO_RCS_MODULATION * arg.cos());
        foot_a.push(sign * burst_velocity(&bursts, Limb::FootA, width, t));
        foot_b.push(sign * burst_velocity(&bursts, Limb::FootB, width, t));
        if has_cane {
            cane.push(sign * burst_velocity(&bursts, Limb::Cane, width, t));
        }
    }
    let mut tracks = Vec::new();
    for (name, foot) in [("a", &foot_a), ("b", &foot_b)] {
        for (k, s) in LEG_SEGMENTS.iter().enumerate() {
            tracks.push(ScattererTrack {
                id: format!("leg_{name}_{}", k + 1),
                reflectivity: LEG_REFLECTIVITY,
                radial_velocity: torso.iter().zip(foot.iter()).map(|(t, f)| (1.0 - s) * t + s * f).collect(),
                amplitude: None,
            });
        }
    }
    for (name, foot) in [("foot_a", foot_a), ("foot_b", foot_b)] {
        tracks.push(ScattererTrack {
            id: name.into(),
            reflectivity: FOOT_REFLECTIVITY,
            radial_velocity: foot,
            amplitude: None,
        });
    }
    tracks.insert(
        0,
        ScattererTrack {
            id: "torso".into(),
            reflectivity: TORSO_REFLECTIVITY,
            radial_velocity: torso,
            amplitude: Some(torso_amp),
        },
    );
    if has_cane {
        tracks.push(ScattererTrack {
            id: "cane".into(),
            reflectivity: CANE_REFLECTIVITY,
            radial_velocity: cane,
            amplitude: None,
        });
    }
    Ok(tracks)
}

/// Superimpose scatterer tracks into a complex baseband signal, optionally adding
/// complex white Gaussian noise at `snr_db` relative to the total signal power.
pub fn render_tracks(
    tracks: &[ScattererTrack],
    cfg: &RadarConfig,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    let n = cfg.n_samples();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for track in tracks {
        if track.radial_velocity.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: track.radial_velocity.len() });
        }
        if !(track.reflectivity >= 0.0) {
            return Err(Error::InvalidProfile(format!("negative reflectivity on {}", track.id)));
        }
        let mut phase = 0.0;
        for (i, &v) in track.radial_velocity.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite("scatterer velocity"));
            }
            phase += 2.0 * PI * doppler_shift(v, cfg.aspect_angle, cfg) / cfg.sampling_frequency;
            let gain = track.amplitude.as_ref().map_or(1.0, |a| a[i]);
            out[i] += Complex64::from_polar(0.5 * track.reflectivity * gain, -phase);
        }
    }
    if let Some(snr) = snr_db {
        let power = out.iter().map(|s| s.norm_sqr()).sum::<f64>() / n.max(1) as f64;
        let sigma = (power / 10f64.powf(snr / 10.0) / 2.0).sqrt();
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("finite sigma");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for s in out.iter_mut() {
                *s += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            }
        }
    }
    Ok(out)
}

/// Synthesize one labelled recording from a gait profile.
pub fn synthesize_gait(profile: &GaitProfile, cfg: &RadarConfig) -> Result<IQRecording> {
    let tracks = gait_tracks(profile, cfg)?;
    let samples = render_tracks(&tracks, cfg, profile.noise_snr, profile.rng_seed)?;
    Ok(IQRecording {
        samples,
        config: *cfg,
        label: Some(profile.gait_class),
        subject_id: None,
        direction: profile.direction,
    })
}

/// Corpus layout and subject jitter for [`synthesize_dataset_with`].
///
/// Each subject draws a base stride rate, walking speed, peak foot velocity,
/// limp attenuation and cane velocity uniformly from the ranges below; every
/// run then jitters those by up to `run_jitter` (relative) and draws a random
/// gait phase. Runs alternate toward/away, starting with toward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetOptions {
    pub n_subjects: usize,
    pub runs_per_class: usize,
    pub seed: u64,
    pub snr_db: Option<f64>,
    pub radar: RadarConfig,
    pub stride_rate: (f64, f64),
    pub base_velocity: (f64, f64),
    pub peak_foot_velocity: (f64, f64),
    pub limp_attenuation: (f64, f64),
    pub cane_peak_velocity: (f64, f64),
    pub run_jitter: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            n_subjects: 10,
            runs_per_class: 20,
            seed: 7,
            snr_db: Some(10.0),
            radar: RadarConfig::default(),
            stride_rate: (0.75, 1.05),
            base_velocity: (0.8, 1.2),
            peak_foot_velocity: (2.5, 3.0),
            limp_attenuation: (0.5, 0.7),
            cane_peak_velocity: (1.8, 2.4),
            run_jitter: 0.03,
        }
    }
}

/// A profile together with its dataset bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub subject_id: String,
    pub profile: GaitProfile,
}

/// Draw the per-recording profiles of a dataset without rendering any samples.
pub fn dataset_profiles(opts: &DatasetOptions) -> Vec<DatasetEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let draw = |(lo, hi): (f64, f64), rng: &mut ChaCha8Rng| {
        if hi > lo { rng.random_range(lo..hi) } else { lo }
    };
    let mut entries = Vec::with_capacity(opts.n_subjects * opts.runs_per_class * 5);
    for s in 0..opts.n_subjects {
        let stride = draw(opts.stride_rate, &mut rng);
        let base = draw(opts.base_velocity, &mut rng);
        let foot = draw(opts.peak_foot_velocity, &mut rng);
        let limp = draw(opts.limp_attenuation, &mut rng);
        let cane = draw(opts.cane_peak_velocity, &mut rng);
        let j = opts.run_jitter;
        for class in GaitClass::ALL {
            for r in 0..opts.runs_per_class {
                let jitter = |v: f64, rng: &mut ChaCha8Rng| v * draw((1.0 - j, 1.0 + j), rng);
                let profile = GaitProfile {
                    gait_class: class,
                    base_velocity: jitter(base, &mut rng),
                    stride_rate: jitter(stride, &mut rng).clamp(0.5, 2.0),
                    direction: if r % 2 == 0 { Direction::Toward } else { Direction::Away },
                    peak_foot_velocity: jitter(foot, &mut rng),
                    limp_attenuation: jitter(limp, &mut rng).clamp(0.05, 1.0),
                    cane_peak_velocity: jitter(cane, &mut rng),
                    noise_snr: opts.snr_db,
                    rng_seed: rng.random(),
                    gait_phase: draw((0.0, 1.0), &mut rng),
                };
                entries.push(DatasetEntry { subject_id: format!("S{:02}", s + 1), profile });
            }
        }
    }
    entries
}

/// Render a full dataset. Deterministic for a given option set.
pub fn synthesize_dataset_with(opts: &DatasetOptions) -> Result<Vec<IQRecording>> {
    if opts.n_subjects == 0 || opts.runs_per_class == 0 {
        return Err(Error::InvalidConfig("n_subjects and runs_per_class must be >= 1".into()));
    }
    dataset_profiles(opts)
        .into_par_iter()
        .map(|entry| {
            let mut rec = synthesize_gait(&entry.profile, &opts.radar)?;
            rec.subject_id = Some(entry.subject_id);
            Ok(rec)
        })
        .collect()
}

/// Render `n_subjects * runs_per_class * 5` recordings with default jitter ranges at 10 dB SNR.
pub fn synthesize_dataset(n_subjects: usize, runs_per_class: usize, seed: u64) -> Result<Vec<IQRecording>> {
    synthesize_dataset_with(&DatasetOptions { n_subjects, runs_per_class, seed, ..Default::default() })
}
