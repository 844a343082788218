//! Cadence-domain feature sets from earlier radar gait work, used for comparison.

use serde::{Deserialize, Serialize};

use super::{column, estimate_base_velocity, find_peaks, resample_linear};
use crate::cvd::{mean_cadence_spectrum, CVDImage, DopplerSpectrum};
use crate::error::{Error, Result};
use crate::sim::RadarConfig;

/// Samples per resampled velocity profile.
pub const PROFILE_LEN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineVariantB {
    B1,
    B2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineVariantR {
    R1,
    R2,
}

/// Three strongest mCS cadences, their velocity profiles and the base velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFeaturesB {
    pub cadences: [f64; 3],
    pub profiles: [Vec<f64>; 3],
    pub v0: f64,
    pub variant: BaselineVariantB,
}

impl BaselineFeaturesB {
    /// B1: `[f1 f2 f3 Γ1 Γ2 Γ3 v0]` (304 values). B2: `[f1 f2 f3 |v0|]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.cadences.to_vec();
        match self.variant {
            BaselineVariantB::B1 => {
                for p in &self.profiles {
                    v.extend_from_slice(p);
                }
                v.push(self.v0);
            }
            BaselineVariantB::B2 => v.push(self.v0.abs()),
        }
        v
    }

    pub fn names(variant: BaselineVariantB) -> Vec<String> {
        let mut n: Vec<String> = (1..=3).map(|i| format!("f{i}")).collect();
        if variant == BaselineVariantB::B1 {
            for i in 1..=3 {
                n.extend((0..PROFILE_LEN).map(|k| format!("gamma{i}_{k}")));
            }
            n.push("v0".into());
        } else {
            n.push("abs_v0".into());
        }
        n
    }
}

/// Peaks of the mean cadence spectrum (zero cadence excluded) are picked by height with
/// a two-bin minimum separation; absent peaks leave zero cadences and zero profiles.
pub fn baseline_bjorklund(
    c: &CVDImage,
    mds: &DopplerSpectrum,
    cfg: &RadarConfig,
    variant: BaselineVariantB,
) -> Result<BaselineFeaturesB> {
    let mcs = mean_cadence_spectrum(c);
    let mut shifted = mcs.values.clone();
    shifted[0] = f64::NEG_INFINITY;
    let mut peaks = find_peaks(&shifted, f64::MIN_POSITIVE, 2);
    peaks.sort_by(|&a, &b| shifted[b].total_cmp(&shifted[a]).then(a.cmp(&b)));
    peaks.truncate(3);

    let mut cadences = [0.0; 3];
    let mut profiles: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; PROFILE_LEN]);
    for (slot, &p) in peaks.iter().enumerate() {
        cadences[slot] = c.cadence_axis[p];
        profiles[slot] = resample_linear(&column(&c.values, p), PROFILE_LEN);
    }
    let v0 = estimate_base_velocity(mds, cfg)?;
    Ok(BaselineFeaturesB { cadences, profiles, v0, variant })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RicciConfig {
    /// Number of cadence bins averaged around f_mD.
    pub delta: usize,
    /// Threshold on the normalized Doppler profile.
    pub gamma: f64,
}

impl Default for RicciConfig {
    fn default() -> Self {
        Self { delta: 5, gamma: 0.05 }
    }
}

/// Doppler profile around f_mD and its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFeaturesR {
    pub f_md: f64,
    /// Smallest |Doppler| with profile above γ, Hz.
    pub fd_min: f64,
    /// Largest |Doppler| with profile above γ, Hz.
    pub fd_max: f64,
    pub profile: Vec<f64>,
    pub variant: BaselineVariantR,
    /// The profile never exceeds γ; `fd_min` and `fd_max` are imputed as 0.
    pub missing: bool,
}

impl BaselineFeaturesR {
    /// R1: `[f_mD fD_min fD_max]`. R2: the 101-sample profile.
    pub fn to_vec(&self) -> Vec<f64> {
        match self.variant {
            BaselineVariantR::R1 => vec![self.f_md, self.fd_min, self.fd_max],
            BaselineVariantR::R2 => self.profile.clone(),
        }
    }

    pub fn names(variant: BaselineVariantR, len: usize) -> Vec<String> {
        match variant {
            BaselineVariantR::R1 => vec!["f_mD".into(), "fD_mD_min".into(), "fD_mD_max".into()],
            BaselineVariantR::R2 => (0..len).map(|k| format!("gamma_mD_{k}")).collect(),
        }
    }
}

/// Mean of the `delta` CVD columns centred on f_mD, scaled to a maximum of one, and
/// the extreme |Doppler| values where it exceeds γ.
pub fn baseline_ricci(c: &CVDImage, f_md: f64, variant: BaselineVariantR, cfg: &RicciConfig) -> Result<BaselineFeaturesR> {
    let last = *c.cadence_axis.last().ok_or(Error::Empty("cadence axis"))?;
    if !(f_md.is_finite() && f_md >= c.cadence_axis[0] && f_md <= last) {
        return Err(Error::OutOfRange(format!("f_mD {f_md} Hz outside cadence axis [0, {last}]")));
    }
    if cfg.delta == 0 {
        return Err(Error::InvalidConfig("delta must be >= 1".into()));
    }
    let step = c.cadence_axis[1] - c.cadence_axis[0];
    let centre = ((f_md - c.cadence_axis[0]) / step).round() as i64;
    let lo = (centre - (cfg.delta as i64 - 1) / 2).max(0) as usize;
    let hi = ((lo + cfg.delta) as i64).min(c.values.ncols() as i64) as usize;
    let rows = c.values.nrows();
    let mut profile = vec![0.0; rows];
    for j in lo..hi {
        for (r, p) in profile.iter_mut().enumerate() {
            *p += c.values[[r, j]];
        }
    }
    let max = profile.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        profile.iter_mut().for_each(|p| *p /= max);
    }
    let above: Vec<f64> =
        profile.iter().zip(&c.doppler_axis).filter(|(p, _)| **p > cfg.gamma).map(|(_, f)| f.abs()).collect();
    let (fd_min, fd_max, missing) = if above.is_empty() {
        (0.0, 0.0, true)
    } else {
        (above.iter().cloned().fold(f64::INFINITY, f64::min), above.iter().cloned().fold(0.0, f64::max), false)
    };
    Ok(BaselineFeaturesR { f_md, fd_min, fd_max, profile, variant, missing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvd::{cadence_axis, mean_doppler_spectrum};
    use ndarray::Array2;

    fn image(values: Array2<f64>) -> CVDImage {
        CVDImage {
            values,
            cadence_axis: cadence_axis(),
            doppler_axis: (0..101).map(|i| 5.0 * i as f64 + 1.875).collect(),
            preprocessed: false,
        }
    }

    #[test]
    fn bjorklund_layout_and_padding() {
        let mut v = Array2::<f64>::zeros((101, 129));
        for r in 20..40 {
            v[[r, 23]] = 1.0;
            v[[r, 0]] = 5.0;
        }
        let c = image(v);
        let mds = mean_doppler_spectrum(&c);
        let cfg = RadarConfig::default();
        let b1 = baseline_bjorklund(&c, &mds, &cfg, BaselineVariantB::B1).unwrap();
        assert_eq!(b1.to_vec().len(), 304);
        assert!((b1.cadences[0] - 0.92).abs() < 1e-12);
        assert_eq!(b1.cadences[1..], [0.0, 0.0][..]);
        assert_eq!(b1.profiles[1], vec![0.0; 100]);
        assert!(b1.profiles[0].iter().any(|&p| p == 1.0));
        let b2 = baseline_bjorklund(&c, &mds, &cfg, BaselineVariantB::B2).unwrap();
        assert_eq!(b2.to_vec().len(), 4);
        assert!(b2.to_vec()[3] >= 0.0);
        assert_eq!(BaselineFeaturesB::names(BaselineVariantB::B1).len(), 304);
    }

    #[test]
    fn bjorklund_orders_peaks_by_height() {
        let mut v = Array2::<f64>::zeros((101, 129));
        v.row_mut(10).fill(0.01);
        v[[10, 20]] = 0.3;
        v[[10, 40]] = 0.9;
        v[[10, 60]] = 0.6;
        v[[10, 80]] = 0.1;
        let c = image(v);
        let mds = mean_doppler_spectrum(&c);
        let b = baseline_bjorklund(&c, &mds, &RadarConfig::default(), BaselineVariantB::B1).unwrap();
        let expect = [1.6, 2.4, 0.8];
        for (a, e) in b.cadences.iter().zip(expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn ricci_support_and_missing() {
        let mut v = Array2::<f64>::zeros((101, 129));
        // energy at 50..350 Hz (pixels 10..=69) in cadence column 25 (1.0 Hz)
        for r in 10..70 {
            v[[r, 25]] = 1.0;
        }
        let c = image(v);
        let r1 = baseline_ricci(&c, 1.0, BaselineVariantR::R1, &RicciConfig::default()).unwrap();
        assert!(!r1.missing);
        assert!((r1.fd_min - 51.875).abs() < 1e-9 && (r1.fd_max - 346.875).abs() < 1e-9);
        assert_eq!(r1.to_vec().len(), 3);
        let r2 = baseline_ricci(&c, 1.0, BaselineVariantR::R2, &RicciConfig::default()).unwrap();
        assert_eq!(r2.to_vec().len(), 101);
        // 1.2 Hz is 5 bins away: window [28, 33) misses column 25.
        let r = baseline_ricci(&c, 1.2, BaselineVariantR::R1, &RicciConfig::default()).unwrap();
        assert!(r.missing && r.fd_min == 0.0 && r.fd_max == 0.0);
        assert!(baseline_ricci(&c, 6.0, BaselineVariantR::R1, &RicciConfig::default()).is_err());
    }
}
