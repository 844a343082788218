//! Time-frequency analysis of baseband radar returns.
//!
//! The spectrogram is stored with its Doppler axis in ascending order,
//! `[-f_s/2, f_s/2)`, zero Doppler at column `K/2`.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Direction, IQRecording};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hamming,
    Hann,
    Rectangular,
}

impl Window {
    /// Symmetric window coefficients of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        if len == 1 {
            return vec![1.0];
        }
        let denom = (len - 1) as f64;
        (0..len)
            .map(|m| {
                let x = 2.0 * PI * m as f64 / denom;
                match self {
                    Window::Hamming => 0.54 - 0.46 * x.cos(),
                    Window::Hann => 0.5 - 0.5 * x.cos(),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub window: Window,
    pub window_length: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::for_sampling_rate(2560.0)
    }
}

impl StftConfig {
    /// Hamming window of about 0.1 s, hop of one sample, 2048 frequency points.
    pub fn for_sampling_rate(fs: f64) -> Self {
        Self {
            window: Window::Hamming,
            window_length: (0.1 * fs).round().max(1.0) as usize,
            hop: 1,
            fft_size: 2048,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 || self.window_length > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "window_length must satisfy 0 < {} <= fft_size {}",
                self.window_length, self.fft_size
            )));
        }
        if self.hop == 0 {
            return Err(Error::InvalidConfig("hop must be >= 1".into()));
        }
        Ok(())
    }
}

/// Squared-magnitude STFT, frames × Doppler bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub values: Array2<f64>,
    /// Frame centre times, s.
    pub time_axis: Vec<f64>,
    /// Ascending Doppler frequencies, Hz.
    pub doppler_axis: Vec<f64>,
    pub noise_reduced: bool,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.values.ncols()
    }

    /// Frames per second.
    pub fn frame_rate(&self) -> f64 {
        if self.time_axis.len() < 2 {
            return f64::INFINITY;
        }
        1.0 / (self.time_axis[1] - self.time_axis[0])
    }

    /// Doppler bin spacing, Hz.
    pub fn doppler_resolution(&self) -> f64 {
        self.doppler_axis[1] - self.doppler_axis[0]
    }

    /// Column index of the zero-Doppler bin.
    pub fn zero_bin(&self) -> usize {
        self.n_bins() / 2
    }

    /// Column indices of the half-plane matching `direction`, ordered from zero Doppler outward.
    pub fn half_plane(&self, direction: Direction) -> Vec<usize> {
        let zero = self.zero_bin();
        match direction {
            Direction::Toward => (zero..self.n_bins()).collect(),
            Direction::Away => (0..=zero).rev().collect(),
        }
    }

    /// Same axes with values multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Spectrogram {
        Spectrogram { values: &self.values * alpha, ..self.clone() }
    }
}

/// Per-frame extremal micro-Doppler frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSignal {
    pub values: Vec<f64>,
    pub time_axis: Vec<f64>,
}

impl EnvelopeSignal {
    pub fn sample_rate(&self) -> f64 {
        if self.time_axis.len() < 2 {
            return f64::INFINITY;
        }
        1.0 / (self.time_axis[1] - self.time_axis[0])
    }
}

/// Mean micro-Doppler energy per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySignal {
    pub values: Vec<f64>,
    pub time_axis: Vec<f64>,
}

impl EnergySignal {
    pub fn sample_rate(&self) -> f64 {
        if self.time_axis.len() < 2 {
            return f64::INFINITY;
        }
        1.0 / (self.time_axis[1] - self.time_axis[0])
    }
}

/// Subtract the complex sample mean.
pub fn remove_mean(rec: &IQRecording) -> Result<IQRecording> {
    Ok(IQRecording { samples: remove_mean_samples(&rec.samples)?, ..rec.clone() })
}

fn remove_mean_samples(samples: &[Complex64]) -> Result<Vec<Complex64>> {
    if samples.is_empty() {
        return Err(Error::Empty("recording"));
    }
    let mean = samples.iter().sum::<Complex64>() / samples.len() as f64;
    Ok(samples.iter().map(|s| s - mean).collect())
}

/// Spectrogram of the mean-removed recording. Trailing frames that would need
/// samples past the end of the recording are dropped.
pub fn spectrogram(rec: &IQRecording, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let n = rec.samples.len();
    if n < cfg.window_length {
        return Err(Error::TooShort { needed: cfg.window_length, got: n });
    }
    let fs = rec.config.sampling_frequency;
    let signal = remove_mean_samples(&rec.samples)?;
    let window = cfg.window.coefficients(cfg.window_length);
    let k = cfg.fft_size;
    let n_frames = (n - cfg.window_length) / cfg.hop + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(k);
    let half = k / 2;

    let mut values = Array2::<f64>::zeros((n_frames, k));
    values.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each_init(
        || vec![Complex64::new(0.0, 0.0); k],
        |buf, (frame, mut row)| {
            let start = frame * cfg.hop;
            for (m, slot) in buf.iter_mut().enumerate() {
                *slot = if m < window.len() { signal[start + m] * window[m] } else { Complex64::new(0.0, 0.0) };
            }
            fft.process(buf);
            // fftshift: DFT index j holds frequency j (j < K/2) or j - K.
            for (j, x) in buf.iter().enumerate() {
                let col = (j + half) % k;
                row[col] = x.norm_sqr();
            }
        },
    );

    let centre = (cfg.window_length as f64 - 1.0) / 2.0;
    let time_axis = (0..n_frames).map(|i| (i as f64 * cfg.hop as f64 + centre) / fs).collect();
    let doppler_axis = (0..k).map(|c| (c as f64 - half as f64) * fs / k as f64).collect();
    Ok(Spectrogram { values, time_axis, doppler_axis, noise_reduced: false })
}

/// Adaptive noise-floor parameters for [`denoise`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiseConfig {
    pub quantile: f64,
    pub margin_db: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self { quantile: 0.6, margin_db: 6.0 }
    }
}

/// Linear-interpolation quantile of an unsorted slice. `q` in [0, 1].
pub(crate) fn quantile(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let pos = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let (_, lo_val, upper) = values.select_nth_unstable_by(lo, |a, b| a.total_cmp(b));
    let lo_val = *lo_val;
    if frac == 0.0 || upper.is_empty() {
        return lo_val;
    }
    let hi_val = upper.iter().cloned().fold(f64::INFINITY, f64::min);
    lo_val + frac * (hi_val - lo_val)
}

/// Per-Doppler-bin thresholds: the bin's temporal `quantile`, capped by the median
/// of all bins' quantiles (so persistent tones do not raise their own floor), then
/// scaled by `margin_db`.
pub fn noise_thresholds(spec: &Spectrogram, cfg: &DenoiseConfig) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&cfg.quantile) || !cfg.margin_db.is_finite() {
        return Err(Error::InvalidConfig("denoise quantile must lie in [0,1] and margin be finite".into()));
    }
    let mut column = vec![0.0; spec.n_frames()];
    let per_bin: Vec<f64> = spec
        .values
        .axis_iter(Axis(1))
        .map(|col| {
            column.iter_mut().zip(col.iter()).for_each(|(d, s)| *d = *s);
            quantile(&mut column, cfg.quantile)
        })
        .collect();
    let mut sorted = per_bin.clone();
    let floor = quantile(&mut sorted, 0.5);
    let gain = 10f64.powf(cfg.margin_db / 10.0);
    Ok(per_bin.into_iter().map(|q| q.min(floor) * gain).collect())
}

/// Zero every entry strictly below its bin's threshold.
pub fn apply_thresholds(spec: &Spectrogram, thresholds: &[f64]) -> Result<Spectrogram> {
    if thresholds.len() != spec.n_bins() {
        return Err(Error::DimensionMismatch { expected: spec.n_bins(), got: thresholds.len() });
    }
    let mut values = spec.values.clone();
    for mut row in values.axis_iter_mut(Axis(0)) {
        for (v, t) in row.iter_mut().zip(thresholds) {
            if *v < *t {
                *v = 0.0;
            }
        }
    }
    Ok(Spectrogram { values, noise_reduced: true, ..spec.clone() })
}

/// Suppress background noise with per-bin adaptive thresholds.
pub fn denoise(spec: &Spectrogram, cfg: &DenoiseConfig) -> Result<Spectrogram> {
    if spec.noise_reduced {
        return Err(Error::AlreadyDenoised);
    }
    let thresholds = noise_thresholds(spec, cfg)?;
    apply_thresholds(spec, &thresholds)
}

/// Extremal micro-Doppler frequency per frame: walking outward from zero Doppler on
/// the half-plane of `direction`, the first bin at which the cumulative frame energy
/// reaches `energy_fraction` of that half-plane's energy. Empty frames give 0 Hz.
pub fn envelope(spec: &Spectrogram, direction: Direction, energy_fraction: f64) -> Result<EnvelopeSignal> {
    if !spec.noise_reduced {
        return Err(Error::NotDenoised);
    }
    if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
        return Err(Error::InvalidConfig("energy_fraction must lie in (0, 1]".into()));
    }
    let bins = spec.half_plane(direction);
    let opposite = spec.half_plane(match direction {
        Direction::Toward => Direction::Away,
        Direction::Away => Direction::Toward,
    });
    let zero = spec.zero_bin();
    let side_energy = |cols: &[usize]| -> f64 {
        cols.iter().filter(|&&c| c != zero).map(|&c| spec.values.column(c).sum()).sum()
    };
    if side_energy(&bins) < side_energy(&opposite) {
        return Err(Error::DirectionMismatch { requested: direction.as_str() });
    }

    let values = spec
        .values
        .axis_iter(Axis(0))
        .map(|row| {
            let total: f64 = bins.iter().map(|&c| row[c]).sum();
            if total <= 0.0 {
                return 0.0;
            }
            let target = energy_fraction * total;
            let mut cumulative = 0.0;
            for &c in &bins {
                cumulative += row[c];
                if cumulative >= target {
                    return spec.doppler_axis[c];
                }
            }
            spec.doppler_axis[*bins.last().unwrap()]
        })
        .collect();
    Ok(EnvelopeSignal { values, time_axis: spec.time_axis.clone() })
}

/// Mean energy per frame over the bins on `direction`'s half-plane with
/// `|f| > torso_exclusion`.
pub fn energy_signal(spec: &Spectrogram, direction: Direction, torso_exclusion: f64) -> Result<EnergySignal> {
    if !spec.noise_reduced {
        return Err(Error::NotDenoised);
    }
    let sign = direction.sign();
    let cols: Vec<usize> = spec
        .doppler_axis
        .iter()
        .enumerate()
        .filter(|(_, &f)| f * sign > 0.0 && f.abs() > torso_exclusion)
        .map(|(c, _)| c)
        .collect();
    if cols.is_empty() {
        return Err(Error::NoBinsLeft(torso_exclusion));
    }
    let k = cols.len() as f64;
    let values = spec
        .values
        .axis_iter(Axis(0))
        .map(|row| cols.iter().map(|&c| row[c]).sum::<f64>() / k)
        .collect();
    Ok(EnergySignal { values, time_axis: spec.time_axis.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RadarConfig;

    fn recording(samples: Vec<Complex64>, fs: f64) -> IQRecording {
        let config = RadarConfig { sampling_frequency: fs, duration: samples.len() as f64 / fs, ..Default::default() };
        IQRecording { samples, config, label: None, subject_id: None, direction: Direction::Toward }
    }

    fn tone(freq: f64, fs: f64, n: usize) -> Vec<Complex64> {
        (0..n).map(|i| Complex64::from_polar(1.0, 2.0 * PI * freq * i as f64 / fs)).collect()
    }

    #[test]
    fn remove_mean_examples() {
        let rec = recording(vec![Complex64::new(3.0, -2.0); 8], 8.0);
        assert!(remove_mean(&rec).unwrap().samples.iter().all(|s| s.norm() == 0.0));
        let rec = recording(vec![1.0, 2.0, 3.0].into_iter().map(|x| Complex64::new(x, 0.0)).collect(), 3.0);
        let out: Vec<f64> = remove_mean(&rec).unwrap().samples.iter().map(|s| s.re).collect();
        assert_eq!(out, vec![-1.0, 0.0, 1.0]);
        let empty = recording(vec![], 1.0);
        assert!(matches!(remove_mean(&empty), Err(Error::Empty(_))));
    }

    #[test]
    fn window_shapes() {
        let w = Window::Hamming.coefficients(5);
        assert!((w[0] - 0.08).abs() < 1e-12 && (w[2] - 1.0).abs() < 1e-12 && (w[4] - 0.08).abs() < 1e-12);
        assert_eq!(Window::Rectangular.coefficients(3), vec![1.0; 3]);
    }

    #[test]
    fn default_config_matches_radar_defaults() {
        let cfg = StftConfig::default();
        assert_eq!((cfg.window_length, cfg.hop, cfg.fft_size), (256, 1, 2048));
        assert!(StftConfig { hop: 0, ..cfg }.validate().is_err());
        assert!(StftConfig { window_length: 4096, ..cfg }.validate().is_err());
    }

    #[test]
    fn zero_input_gives_zero_spectrogram() {
        let rec = recording(vec![Complex64::new(0.0, 0.0); 600], 2560.0);
        let cfg = StftConfig { hop: 7, ..Default::default() };
        let s = spectrogram(&rec, &cfg).unwrap();
        assert_eq!(s.n_frames(), (600 - 256) / 7 + 1);
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_short_is_rejected() {
        let rec = recording(vec![Complex64::new(1.0, 0.0); 100], 2560.0);
        assert!(matches!(spectrogram(&rec, &StftConfig::default()), Err(Error::TooShort { .. })));
    }

    #[test]
    fn tone_lands_in_nearest_bin() {
        let fs = 2560.0;
        let rec = recording(tone(-160.0, fs, 2000), fs);
        let s = spectrogram(&rec, &StftConfig { hop: 50, ..Default::default() }).unwrap();
        // bin spacing 1.25 Hz, so -160 Hz is exactly column 1024 - 128
        for row in s.values.axis_iter(Axis(0)) {
            let arg = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert!((arg as i64 - 896).abs() <= 1, "{arg}");
        }
        assert_eq!(s.doppler_axis[896], -160.0);
        assert!(s.doppler_axis.windows(2).all(|w| w[1] > w[0]));
        assert!(s.time_axis.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn parseval_on_toy_signal() {
        // Brute-force: energy of the windowed segment times K equals the row sum.
        let fs = 32.0;
        let samples: Vec<Complex64> =
            (0..32).map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos() + 0.1 * i as f64)).collect();
        let rec = recording(samples.clone(), fs);
        let cfg = StftConfig { window: Window::Hamming, window_length: 8, hop: 1, fft_size: 16 };
        let s = spectrogram(&rec, &cfg).unwrap();
        let mean = samples.iter().sum::<Complex64>() / 32.0;
        let w = Window::Hamming.coefficients(8);
        for n in 0..s.n_frames() {
            let direct: f64 = (0..8).map(|m| (w[m] * (samples[n + m] - mean)).norm_sqr()).sum::<f64>() * 16.0;
            let row: f64 = s.values.row(n).sum();
            assert!((row - direct).abs() < 1e-9 * direct.max(1.0));
        }
        // and each entry against a direct DFT sum
        for n in [0, 5, 24] {
            for k in 0..16 {
                let x: Complex64 = (0..8)
                    .map(|m| {
                        w[m] * (samples[n + m] - mean) * Complex64::from_polar(1.0, -2.0 * PI * (m * k) as f64 / 16.0)
                    })
                    .sum();
                let col = (k + 8) % 16;
                assert!((s.values[[n, col]] - x.norm_sqr()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn quantile_interpolates() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&mut v, 0.0), 1.0);
        assert_eq!(quantile(&mut v, 1.0), 4.0);
        assert!((quantile(&mut v, 0.5) - 2.5).abs() < 1e-12);
    }

    fn noise_spectrogram() -> Spectrogram {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let samples = (0..4000).map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))).collect();
        let rec = recording(samples, 2560.0);
        spectrogram(&rec, &StftConfig { hop: 64, fft_size: 512, ..Default::default() }).unwrap()
    }

    #[test]
    fn denoise_zeroes_most_of_pure_noise() {
        let s = noise_spectrogram();
        let d = denoise(&s, &DenoiseConfig::default()).unwrap();
        let zeroed = d.values.iter().filter(|&&v| v == 0.0).count() as f64 / d.values.len() as f64;
        assert!(zeroed >= 0.6, "{zeroed}");
        assert!(d.noise_reduced);
        assert!(matches!(denoise(&d, &DenoiseConfig::default()), Err(Error::AlreadyDenoised)));
    }

    #[test]
    fn denoise_keeps_tone_ridge() {
        let fs = 2560.0;
        let rec = recording(tone(300.0, fs, 3000), fs);
        let s = spectrogram(&rec, &StftConfig { hop: 40, ..Default::default() }).unwrap();
        let d = denoise(&s, &DenoiseConfig::default()).unwrap();
        for (a, b) in s.values.axis_iter(Axis(0)).zip(d.values.axis_iter(Axis(0))) {
            let argmax = |r: ndarray::ArrayView1<f64>| r.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
            assert_eq!(argmax(a), argmax(b));
            assert!(b.iter().any(|&v| v > 0.0));
        }
    }

    #[test]
    fn denoise_idempotent_and_never_increases() {
        let s = noise_spectrogram();
        let thr = noise_thresholds(&s, &DenoiseConfig::default()).unwrap();
        let once = apply_thresholds(&s, &thr).unwrap();
        let twice = apply_thresholds(&once, &thr).unwrap();
        assert_eq!(once.values, twice.values);
        assert!(once.values.iter().zip(s.values.iter()).all(|(a, b)| a <= b));
    }

    #[test]
    fn all_zero_spectrogram_passes_through() {
        let rec = recording(vec![Complex64::new(0.0, 0.0); 600], 2560.0);
        let s = spectrogram(&rec, &StftConfig { hop: 30, ..Default::default() }).unwrap();
        let d = denoise(&s, &DenoiseConfig::default()).unwrap();
        assert_eq!(d.values, s.values);
        let env = envelope(&d, Direction::Toward, 0.95).unwrap();
        assert!(env.values.iter().all(|&v| v == 0.0));
        let e = energy_signal(&d, Direction::Toward, 100.0).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn envelope_requires_denoised_and_matching_direction() {
        let fs = 2560.0;
        let rec = recording(tone(250.0, fs, 3000), fs);
        let s = spectrogram(&rec, &StftConfig { hop: 40, ..Default::default() }).unwrap();
        assert!(matches!(envelope(&s, Direction::Toward, 0.95), Err(Error::NotDenoised)));
        let d = denoise(&s, &DenoiseConfig::default()).unwrap();
        let env = envelope(&d, Direction::Toward, 0.95).unwrap();
        // Upper edge of the occupied band: inside the Hamming main lobe (2 f_s / M = 20 Hz).
        assert!(env.values.iter().all(|&v| (250.0..=270.0).contains(&v)), "{:?}", &env.values[..4]);
        assert!(matches!(envelope(&d, Direction::Away, 0.95), Err(Error::DirectionMismatch { .. })));
    }

    #[test]
    fn energy_signal_linear_and_guarded() {
        let s = noise_spectrogram();
        let d = denoise(&s, &DenoiseConfig::default()).unwrap();
        let e1 = energy_signal(&d, Direction::Toward, 50.0).unwrap();
        let e2 = energy_signal(&d.scaled(4.0), Direction::Toward, 50.0).unwrap();
        for (a, b) in e1.values.iter().zip(&e2.values) {
            assert_eq!(4.0 * a, *b);
        }
        assert!(matches!(energy_signal(&d, Direction::Toward, 5000.0), Err(Error::NoBinsLeft(_))));
    }
}
