//! Cadence-velocity representations and the fixed-size image catalogue used for
//! subspace learning.
//!
//! All images are `Doppler pixels × (time | cadence)` with the Doppler axis ordered
//! outward from zero Doppler, so toward and away recordings share one layout.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::sim::{Direction, IQRecording};

/// Cadence grid spacing, Hz.
pub const CADENCE_STEP: f64 = 0.04;
/// Number of cadence bins, 0 to 5.12 Hz inclusive.
pub const N_CADENCE: usize = 129;
/// Doppler pixels per image.
pub const N_DOPPLER_PIXELS: usize = 101;
/// Doppler pixel width, Hz.
pub const DOPPLER_PIXEL_HZ: f64 = 5.0;
/// Time pixels of the spectrogram image.
pub const N_TIME_PIXELS: usize = 192;
/// Warped CVDs place the repetition frequency here.
pub const REFERENCE_FMD: f64 = 1.0;
/// Warped CVDs place the maximal Doppler shift here.
pub const REFERENCE_FDMAX: f64 = 500.0;

pub fn cadence_axis() -> Vec<f64> {
    (0..N_CADENCE).map(|j| j as f64 * CADENCE_STEP).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVDImage {
    /// Doppler pixels × cadence bins.
    pub values: Array2<f64>,
    pub cadence_axis: Vec<f64>,
    /// Signed pixel-centre Doppler, ordered outward from zero.
    pub doppler_axis: Vec<f64>,
    pub preprocessed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadenceSpectrum {
    pub values: Vec<f64>,
    pub cadence_axis: Vec<f64>,
}

impl CadenceSpectrum {
    /// Cadence of the largest value, skipping the zero-cadence bin.
    pub fn peak_cadence(&self) -> f64 {
        let idx = argmax(&self.values[1..]).map_or(0, |i| i + 1);
        self.cadence_axis[idx]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DopplerSpectrum {
    pub values: Vec<f64>,
    pub doppler_axis: Vec<f64>,
}

/// First index of the maximum; `None` for an empty slice.
pub(crate) fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= *v => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RepresentationKind {
    #[serde(rename = "SPECTROGRAM")]
    Spectrogram,
    #[serde(rename = "CVD")]
    Cvd,
    #[serde(rename = "MCS")]
    Mcs,
    #[serde(rename = "CVD_PRE")]
    CvdPre,
    #[serde(rename = "MCS_PRE")]
    McsPre,
    #[serde(rename = "FT_FILTERED_TIME")]
    FtFilteredTime,
}

impl RepresentationKind {
    pub const ALL: [RepresentationKind; 6] = [
        RepresentationKind::Spectrogram,
        RepresentationKind::Cvd,
        RepresentationKind::Mcs,
        RepresentationKind::CvdPre,
        RepresentationKind::McsPre,
        RepresentationKind::FtFilteredTime,
    ];

    /// (rows, cols) of the representation.
    pub fn dims(self) -> (usize, usize) {
        match self {
            RepresentationKind::Spectrogram => (N_DOPPLER_PIXELS, N_TIME_PIXELS),
            RepresentationKind::Cvd | RepresentationKind::CvdPre => (N_DOPPLER_PIXELS, N_CADENCE),
            RepresentationKind::Mcs | RepresentationKind::McsPre | RepresentationKind::FtFilteredTime => {
                (1, N_CADENCE)
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RepresentationKind::Spectrogram => "SPECTROGRAM",
            RepresentationKind::Cvd => "CVD",
            RepresentationKind::Mcs => "MCS",
            RepresentationKind::CvdPre => "CVD_PRE",
            RepresentationKind::McsPre => "MCS_PRE",
            RepresentationKind::FtFilteredTime => "FT_FILTERED_TIME",
        }
    }

    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|k| *k == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl std::fmt::Display for RepresentationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RepresentationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown representation '{s}'")))
    }
}

/// Spectrogram columns averaged into each Doppler pixel, outward from zero Doppler.
fn doppler_groups(spec: &Spectrogram, direction: Direction) -> Result<Vec<Vec<usize>>> {
    let res = spec.doppler_resolution();
    let per_pixel = ((DOPPLER_PIXEL_HZ / res).round() as usize).max(1);
    let half = spec.half_plane(direction);
    let needed = per_pixel * N_DOPPLER_PIXELS;
    if half.len() < needed {
        return Err(Error::InvalidConfig(format!(
            "Doppler half-plane has {} bins, {} needed for {} pixels",
            half.len(),
            needed,
            N_DOPPLER_PIXELS
        )));
    }
    Ok(half[..needed].chunks(per_pixel).map(|c| c.to_vec()).collect())
}

fn pixel_axis(spec: &Spectrogram, groups: &[Vec<usize>]) -> Vec<f64> {
    groups
        .iter()
        .map(|g| g.iter().map(|&c| spec.doppler_axis[c]).sum::<f64>() / g.len() as f64)
        .collect()
}

/// Magnitude of the DTFT of each mean-removed column of `series` (frames × columns)
/// at the cadence grid. Returns columns × cadence bins.
fn cadence_magnitudes(series: ArrayView2<f64>, frame_rate: f64) -> Array2<f64> {
    let n = series.nrows();
    let mut centred = series.to_owned();
    for mut col in centred.axis_iter_mut(Axis(1)) {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            col.fill(0.0);
        } else {
            let mean = col.sum() / n as f64;
            col.mapv_inplace(|v| v - mean);
        }
    }
    let mut cos = Array2::<f64>::zeros((n, N_CADENCE));
    let mut sin = Array2::<f64>::zeros((n, N_CADENCE));
    for t in 0..n {
        for j in 0..N_CADENCE {
            let phase = 2.0 * PI * (j as f64 * CADENCE_STEP) * t as f64 / frame_rate;
            cos[[t, j]] = phase.cos();
            sin[[t, j]] = phase.sin();
        }
    }
    let re = centred.t().dot(&cos);
    let im = centred.t().dot(&sin);
    let mut out = re;
    out.zip_mut_with(&im, |r, i| *r = r.hypot(*i));
    out
}

fn normalize_max(values: &mut Array2<f64>) {
    let max = values.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        values.mapv_inplace(|v| v / max);
    }
}

fn check_cadence_nyquist(frame_rate: f64) -> Result<()> {
    let max_cadence = (N_CADENCE - 1) as f64 * CADENCE_STEP;
    if !(frame_rate.is_finite() && frame_rate / 2.0 >= max_cadence) {
        return Err(Error::CadenceNyquist { frame_rate, max_cadence });
    }
    Ok(())
}

/// Cadence-velocity diagram of the half-plane matching `direction`: per-bin mean
/// removal, Fourier magnitude on the 0.04 Hz grid up to 5.12 Hz, 4-bin Doppler
/// averaging to 101 pixels, then scaling to a maximum of one.
pub fn cvd(spec: &Spectrogram, direction: Direction) -> Result<CVDImage> {
    if !spec.noise_reduced {
        return Err(Error::NotDenoised);
    }
    if spec.n_frames() < 2 {
        return Err(Error::TooShort { needed: 2, got: spec.n_frames() });
    }
    let frame_rate = spec.frame_rate();
    check_cadence_nyquist(frame_rate)?;
    let groups = doppler_groups(spec, direction)?;
    let cols: Vec<usize> = groups.iter().flatten().copied().collect();
    let series = spec.values.select(Axis(1), &cols);
    let mags = cadence_magnitudes(series.view(), frame_rate);

    let per_pixel = groups[0].len();
    let mut values = Array2::<f64>::zeros((N_DOPPLER_PIXELS, N_CADENCE));
    for (p, mut row) in values.axis_iter_mut(Axis(0)).enumerate() {
        for i in 0..per_pixel {
            row += &mags.row(p * per_pixel + i);
        }
        row /= per_pixel as f64;
    }
    normalize_max(&mut values);
    Ok(CVDImage { values, cadence_axis: cadence_axis(), doppler_axis: pixel_axis(spec, &groups), preprocessed: false })
}

/// Doppler-averaged CVD.
pub fn mean_cadence_spectrum(c: &CVDImage) -> CadenceSpectrum {
    let k = c.values.nrows().max(1) as f64;
    CadenceSpectrum { values: c.values.sum_axis(Axis(0)).mapv(|v| v / k).to_vec(), cadence_axis: c.cadence_axis.clone() }
}

/// Cadence-averaged CVD.
pub fn mean_doppler_spectrum(c: &CVDImage) -> DopplerSpectrum {
    let l = c.values.ncols().max(1) as f64;
    DopplerSpectrum { values: c.values.sum_axis(Axis(1)).mapv(|v| v / l).to_vec(), doppler_axis: c.doppler_axis.clone() }
}

/// Bilinear sample of `img` at fractional (row, col); zero outside the image.
fn bilinear(img: &Array2<f64>, r: f64, c: f64) -> f64 {
    // Snap coordinates that differ from a grid line only by rounding.
    let snap = |x: f64| if (x - x.round()).abs() < 1e-9 { x.round() } else { x };
    let (r, c) = (snap(r), snap(c));
    let (rows, cols) = img.dim();
    if r < 0.0 || c < 0.0 || r > (rows - 1) as f64 || c > (cols - 1) as f64 {
        return 0.0;
    }
    let r0 = r.floor() as usize;
    let c0 = c.floor() as usize;
    let r1 = (r0 + 1).min(rows - 1);
    let c1 = (c0 + 1).min(cols - 1);
    let fr = r - r0 as f64;
    let fc = c - c0 as f64;
    let top = img[[r0, c0]] * (1.0 - fc) + img[[r0, c1]] * fc;
    let bottom = img[[r1, c0]] * (1.0 - fc) + img[[r1, c1]] * fc;
    top * (1.0 - fr) + bottom * fr
}

/// Warp the CVD so that `f_md` maps to 1 Hz and `f_dmax` maps to 500 Hz, resample
/// onto the standard grid and rescale to a maximum of one.
pub fn preprocess_cvd(c: &CVDImage, f_md: f64, f_dmax: f64) -> Result<CVDImage> {
    let f_dmax = f_dmax.abs();
    if !(f_md.is_finite() && f_dmax.is_finite()) || f_md <= 0.0 || f_dmax == 0.0 {
        return Err(Error::InvalidConfig(format!("warp factors must be finite and positive (f_mD {f_md}, f_Dmax {f_dmax})")));
    }
    let (rows, cols) = c.values.dim();
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidConfig("CVD must be at least 2 × 2 to warp".into()));
    }
    let doppler_scale = f_dmax / REFERENCE_FDMAX;
    let cadence_scale = f_md / REFERENCE_FMD;
    let d0 = c.doppler_axis[0].abs();
    let d_step = c.doppler_axis[1].abs() - d0;
    let c0 = c.cadence_axis[0];
    let c_step = c.cadence_axis[1] - c0;

    let mut values = Array2::<f64>::zeros((rows, cols));
    for r in 0..rows {
        let src_r = ((c.doppler_axis[r].abs() * doppler_scale) - d0) / d_step;
        for k in 0..cols {
            let src_c = (c.cadence_axis[k] * cadence_scale - c0) / c_step;
            values[[r, k]] = bilinear(&c.values, src_r, src_c);
        }
    }
    normalize_max(&mut values);
    Ok(CVDImage { values, preprocessed: true, ..c.clone() })
}

/// Brick-wall high-pass of `samples` at `cutoff` Hz (two-sided), via the FFT.
fn high_pass(samples: &[Complex64], fs: f64, cutoff: f64) -> Vec<Complex64> {
    let n = samples.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf = samples.to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (j, x) in buf.iter_mut().enumerate() {
        let k = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        if (k * fs / n as f64).abs() < cutoff {
            *x = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|x| x / n as f64).collect()
}

fn power_cadence_spectrum(samples: &[Complex64], fs: f64) -> CadenceSpectrum {
    let power = Array2::from_shape_vec((samples.len(), 1), samples.iter().map(|s| s.norm_sqr()).collect()).unwrap();
    let mags = cadence_magnitudes(power.view(), fs);
    CadenceSpectrum { values: mags.row(0).to_vec(), cadence_axis: cadence_axis() }
}

/// Cadence spectrum of the instantaneous power of the raw recording, no filtering.
pub fn ft_unfiltered_time(rec: &IQRecording) -> Result<CadenceSpectrum> {
    if rec.samples.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: rec.samples.len() });
    }
    let fs = rec.config.sampling_frequency;
    check_cadence_nyquist(fs)?;
    Ok(power_cadence_spectrum(&rec.samples, fs))
}

/// Remove Doppler components below `|doppler_shift(2 v0)|`, then take the cadence
/// spectrum of the instantaneous power of what remains. Not normalized.
pub fn ft_filtered_time(rec: &IQRecording, v0: f64) -> Result<CadenceSpectrum> {
    if !(v0.is_finite() && v0 != 0.0) {
        return Err(Error::InvalidConfig(format!("base velocity must be finite and nonzero, got {v0}")));
    }
    if rec.samples.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: rec.samples.len() });
    }
    let fs = rec.config.sampling_frequency;
    check_cadence_nyquist(fs)?;
    let cutoff = rec.config.observed_frequency(2.0 * v0.abs()).abs();
    if cutoff >= fs / 2.0 {
        return Err(Error::CutoffAboveNyquist { cutoff, nyquist: fs / 2.0 });
    }
    let filtered = high_pass(&rec.samples, fs, cutoff);
    Ok(power_cadence_spectrum(&filtered, fs))
}

/// Fixed-size spectrogram image: the `direction` half-plane averaged into 101
/// Doppler pixels, the frame axis area-averaged onto 192 time pixels, scaled to a
/// maximum of one.
pub fn spectrogram_image(spec: &Spectrogram, direction: Direction) -> Result<Array2<f64>> {
    let groups = doppler_groups(spec, direction)?;
    let n = spec.n_frames();
    if n == 0 {
        return Err(Error::Empty("spectrogram"));
    }
    let mut pixels = Array2::<f64>::zeros((n, N_DOPPLER_PIXELS));
    for (p, g) in groups.iter().enumerate() {
        for &c in g {
            let mut col = pixels.column_mut(p);
            col += &spec.values.column(c);
        }
        let mut col = pixels.column_mut(p);
        col /= g.len() as f64;
    }
    // Time pixel j covers frames [j n / 192, (j+1) n / 192), partial frames weighted by overlap.
    let width = n as f64 / N_TIME_PIXELS as f64;
    let mut out = Array2::<f64>::zeros((N_DOPPLER_PIXELS, N_TIME_PIXELS));
    for j in 0..N_TIME_PIXELS {
        let lo = j as f64 * width;
        let hi = lo + width;
        let mut acc = Array1::<f64>::zeros(N_DOPPLER_PIXELS);
        let mut t = lo.floor() as usize;
        while (t as f64) < hi && t < n {
            let overlap = (hi.min(t as f64 + 1.0) - lo.max(t as f64)).max(0.0);
            acc.scaled_add(overlap, &pixels.row(t));
            t += 1;
        }
        out.column_mut(j).assign(&(acc / width));
    }
    normalize_max(&mut out);
    Ok(out)
}
