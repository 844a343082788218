//! Per-recording analysis chain: spectrogram, noise suppression, cadence-velocity
//! diagram, physical features and the fixed-size representations.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cvd::{
    self, mean_cadence_spectrum, mean_doppler_spectrum, preprocess_cvd, spectrogram_image, CVDImage,
    RepresentationKind,
};
use crate::dsp::{self, DenoiseConfig, StftConfig};
use crate::error::{Error, Result};
use crate::features::{
    self, baseline_bjorklund, baseline_ricci, coefficient_of_variation, estimate_base_velocity, estimate_fdmax,
    estimate_fmd, fit_soh, gait_harmonic_ratio, BaselineFeaturesB, BaselineFeaturesR, BaselineVariantB,
    BaselineVariantR, FdmaxMode, PeakConfig, PhysicalFeatures, RicciConfig, SohConfig, SohModel,
};
use crate::ml::Dataset;
use crate::sim::{synthesize_gait, DatasetEntry, Direction, GaitClass, IQRecording, RadarConfig};

/// Frames kept per second of signal after time decimation.
pub const FRAME_RATE: f64 = 128.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// STFT parameters. `hop` is the time decimation factor: a hop of 20 samples
    /// equals a one-sample hop followed by keeping every 20th frame.
    pub stft: StftConfig,
    pub denoise: DenoiseConfig,
    pub energy_fraction: f64,
    /// Added to the torso Doppler to form the energy-signal exclusion band, Hz.
    pub torso_margin_hz: f64,
    pub fdmax_mode: FdmaxMode,
    pub peaks: PeakConfig,
    pub soh: SohConfig,
    pub ricci: RicciConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_sampling_rate(2560.0)
    }
}

impl PipelineConfig {
    pub fn for_sampling_rate(fs: f64) -> Self {
        let mut stft = StftConfig::for_sampling_rate(fs);
        stft.hop = (fs / FRAME_RATE).round().max(1.0) as usize;
        Self {
            stft,
            denoise: DenoiseConfig::default(),
            energy_fraction: 0.95,
            torso_margin_hz: 25.0,
            fdmax_mode: FdmaxMode::AllSamples,
            peaks: PeakConfig::default(),
            soh: SohConfig::default(),
            ricci: RicciConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if !(self.energy_fraction > 0.0 && self.energy_fraction <= 1.0) {
            return Err(Error::InvalidConfig("energy_fraction must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.denoise.quantile) {
            return Err(Error::InvalidConfig("denoise quantile must lie in [0, 1]".into()));
        }
        if !(self.torso_margin_hz >= 0.0) {
            return Err(Error::InvalidConfig("torso_margin_hz must be >= 0".into()));
        }
        if self.soh.q_max == 0 || self.soh.q_max > 5 {
            return Err(Error::InvalidConfig("soh.q_max must lie in 1..=5".into()));
        }
        if self.ricci.delta == 0 {
            return Err(Error::InvalidConfig("ricci.delta must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything derived from one recording that downstream feature sets need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub label: Option<GaitClass>,
    pub subject_id: Option<String>,
    pub direction: Direction,
    pub cvd: CVDImage,
    pub v0: Option<f64>,
    pub f_md: Option<f64>,
    pub f_dmax: Option<f64>,
    pub c_v: f64,
    pub soh: Option<SohModel>,
    pub beta: Option<f64>,
    pub physical: PhysicalFeatures,
    pub bjorklund: Option<BaselineFeaturesB>,
    pub ricci: Option<BaselineFeaturesR>,
    /// Representations requested at analysis time, each row-major.
    pub representations: BTreeMap<RepresentationKind, Array2<f64>>,
}

impl Analysis {
    pub fn representation(&self, kind: RepresentationKind) -> Result<&Array2<f64>> {
        self.representations
            .get(&kind)
            .ok_or_else(|| Error::InvalidConfig(format!("representation {kind} was not computed")))
    }
}

fn check_dims(kind: RepresentationKind, img: &Array2<f64>) -> Result<()> {
    let (r, c) = kind.dims();
    if img.dim() != (r, c) {
        return Err(Error::DimensionMismatch { expected: r * c, got: img.len() });
    }
    Ok(())
}

fn row(values: Vec<f64>) -> Array2<f64> {
    let n = values.len();
    Array2::from_shape_vec((1, n), values).expect("row vector")
}

/// Run the full per-recording chain. Feature estimators that fail are recorded as
/// missing and zero-imputed rather than aborting the recording.
pub fn analyze(rec: &IQRecording, cfg: &PipelineConfig, kinds: &[RepresentationKind]) -> Result<Analysis> {
    cfg.validate()?;
    let radar = &rec.config;
    let direction = rec.direction;
    let spec = dsp::spectrogram(rec, &cfg.stft)?;
    let den = dsp::denoise(&spec, &cfg.denoise)?;
    drop(spec);
    let cvd_img = cvd::cvd(&den, direction)?;
    let mds = mean_doppler_spectrum(&cvd_img);
    let mut missing = Vec::new();

    let v0 = estimate_base_velocity(&mds, radar).ok();
    let env = dsp::envelope(&den, direction, cfg.energy_fraction);
    let f_md = env.as_ref().ok().and_then(|e| estimate_fmd(e).ok());
    let f_dmax = env.as_ref().ok().and_then(|e| estimate_fdmax(e, cfg.fdmax_mode).ok());
    let c_v = match env.as_ref().ok().map(|e| coefficient_of_variation(e, &cfg.peaks)) {
        Some(Ok(cv)) if !cv.missing => cv.value,
        _ => {
            missing.push("cv".to_string());
            0.0
        }
    };
    let torso = v0.map_or(0.0, |v| radar.observed_frequency(v).abs());
    let soh = match (f_md, dsp::energy_signal(&den, direction, torso + cfg.torso_margin_hz)) {
        (Some(f), Ok(e)) => fit_soh(&e, f, &cfg.soh).ok(),
        _ => None,
    };
    let beta = match (&soh, f_md) {
        (Some(m), Some(f)) => gait_harmonic_ratio(m.f0, f).ok().map(|r| r.beta),
        _ => None,
    };
    for (name, ok) in [("f_mD", f_md.is_some()), ("fDmax", f_dmax.is_some()), ("beta", beta.is_some())] {
        if !ok {
            missing.push(name.to_string());
        }
    }
    if soh.is_none() {
        missing.push("alpha".to_string());
    }
    let mut alphas = [0.0; 5];
    if let Some(m) = &soh {
        alphas.copy_from_slice(&m.padded_amplitudes(5));
    }
    let physical = PhysicalFeatures {
        f_md: f_md.unwrap_or(0.0),
        f_dmax: f_dmax.unwrap_or(0.0),
        c_v,
        beta: beta.unwrap_or(0.0),
        alphas,
        missing,
    };
    let bjorklund = baseline_bjorklund(&cvd_img, &mds, radar, BaselineVariantB::B1).ok();
    let ricci = f_md.and_then(|f| baseline_ricci(&cvd_img, f, BaselineVariantR::R1, &cfg.ricci).ok());

    let mut representations = BTreeMap::new();
    let mut pre: Option<CVDImage> = None;
    for &kind in kinds {
        let img = match kind {
            RepresentationKind::Spectrogram => spectrogram_image(&den, direction)?,
            RepresentationKind::Cvd => cvd_img.values.clone(),
            RepresentationKind::Mcs => row(mean_cadence_spectrum(&cvd_img).values),
            RepresentationKind::CvdPre | RepresentationKind::McsPre => {
                if pre.is_none() {
                    pre = Some(warped(&cvd_img, f_md, f_dmax)?);
                }
                let p = pre.as_ref().unwrap();
                if kind == RepresentationKind::CvdPre {
                    p.values.clone()
                } else {
                    row(mean_cadence_spectrum(p).values)
                }
            }
            RepresentationKind::FtFilteredTime => {
                let v = v0.ok_or_else(|| Error::Constant("base velocity unavailable"))?;
                let mut s = cvd::ft_filtered_time(rec, v)?.values;
                let max = s.iter().cloned().fold(0.0, f64::max);
                if max > 0.0 {
                    s.iter_mut().for_each(|x| *x /= max);
                }
                row(s)
            }
        };
        check_dims(kind, &img)?;
        representations.insert(kind, img);
    }

    Ok(Analysis {
        label: rec.label,
        subject_id: rec.subject_id.clone(),
        direction,
        cvd: cvd_img,
        v0,         f_md,
        f_dmax,
        c_v,
        soh,
        beta,
        physical,
        bjorklund,
        ricci,
        representations,
    })
}

/// Warped CVD; without usable warp factors the raw CVD is passed through.
fn warped(c: &CVDImage, f_md: Option<f64>, f_dmax: Option<f64>) -> Result<CVDImage> {
    match (f_md, f_dmax) {
        (Some(f), Some(d)) if f > 0.0 && d != 0.0 => preprocess_cvd(c, f, d),
        _ => {
            log::warn!("missing warp factors; using the raw CVD");
            Ok(CVDImage { preprocessed: true, ..c.clone() })
        }
    }
}

/// Bjorklund variant B2 from an analysis computed with B1.
pub fn bjorklund_b2(a: &Analysis) -> Option<BaselineFeaturesB> {
    a.bjorklund.clone().map(|b| BaselineFeaturesB { variant: BaselineVariantB::B2, ..b })
}

/// Ricci variant R2 from an analysis.
pub fn ricci_r2(a: &Analysis) -> Option<BaselineFeaturesR> {
    a.ricci.clone().map(|r| BaselineFeaturesR { variant: BaselineVariantR::R2, ..r })
}

/// Zero-imputed feature vector for a named non-subspace feature set.
pub fn feature_vector(a: &Analysis, set: features::FeatureSet) -> Vec<f64> {
    use features::FeatureSet;
    match set {
        FeatureSet::Phy => a.physical.to_vec(),
        FeatureSet::B1 => a.bjorklund.as_ref().map_or(vec![0.0; 304], |b| b.to_vec()),
        FeatureSet::B2 => bjorklund_b2(a).map_or(vec![0.0; 4], |b| b.to_vec()),
        FeatureSet::R1 => a.ricci.as_ref().map_or(vec![0.0; 3], |r| r.to_vec()),
        FeatureSet::R2 => ricci_r2(a).map_or(vec![0.0; crate::cvd::N_DOPPLER_PIXELS], |r| r.to_vec()),
    }
}

/// Synthesize and analyze dataset entries in parallel without keeping the IQ data.
pub fn analyze_entries(
    entries: &[DatasetEntry],
    radar: &RadarConfig,
    cfg: &PipelineConfig,
    kinds: &[RepresentationKind],
) -> Result<Vec<Analysis>> {
    use rayon::prelude::*;
    entries
        .par_iter()
        .map(|e| {
            let mut rec = synthesize_gait(&e.profile, radar)?;
            rec.subject_id = Some(e.subject_id.clone());
            analyze(&rec, cfg, kinds)
        })
        .collect()
}

/// What each dataset row holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Features(features::FeatureSet),
    Image(RepresentationKind),
}

/// Stack analyses into an ml dataset; every analysis must carry a label.
pub fn to_dataset(analyses: &[Analysis], source: Source) -> Result<Dataset> {
    let rows: Vec<Vec<f64>> = analyses
        .iter()
        .map(|a| match source {
            Source::Features(set) => Ok(feature_vector(a, set)),
            Source::Image(kind) => Ok(a.representation(kind)?.iter().copied().collect()),
        })
        .collect::<Result<_>>()?;
    let width = rows.first().map_or(0, Vec::len);
    let mut x = Array2::zeros((rows.len(), width));
    for (mut dst, r) in x.rows_mut().into_iter().zip(&rows) {
        if r.len() != width {
            return Err(Error::DimensionMismatch { expected: width, got: r.len() });
        }
        dst.iter_mut().zip(r).for_each(|(d, v)| *d = *v);
    }
    let labels = analyses
        .iter()
        .map(|a| a.label.ok_or_else(|| Error::InvalidConfig("unlabeled recording in dataset".into())))
        .collect::<Result<_>>()?;
    let subjects = analyses.iter().map(|a| a.subject_id.clone().unwrap_or_default()).collect();
    let directions = analyses.iter().map(|a| a.direction).collect();
    Dataset::new(x, labels, subjects, directions)
}
