use std::path::Path;

use anyhow::Context;
use microdoppler::cvd::RepresentationKind;
use microdoppler::features::FeatureSet;
use microdoppler::ml::{ClassifierParams, CvScheme, DirectionFilter};
use microdoppler::pipeline::PipelineConfig;
use microdoppler::sim::DatasetOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Invalid;

/// Feature set named in a run config: a hand-crafted set or eigenimage projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FeatureChoice {
    Phy,
    B1,
    B2,
    R1,
    R2,
    Pca,
}

impl FeatureChoice {
    pub fn fixed(self) -> Option<FeatureSet> {
        match self {
            FeatureChoice::Phy => Some(FeatureSet::Phy),
            FeatureChoice::B1 => Some(FeatureSet::B1),
            FeatureChoice::B2 => Some(FeatureSet::B2),
            FeatureChoice::R1 => Some(FeatureSet::R1),
            FeatureChoice::R2 => Some(FeatureSet::R2),
            FeatureChoice::Pca => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self.fixed() {
            Some(s) => s.as_str(),
            None => "pca",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub min_accuracy: Option<f64>,
    pub max_fpr: Option<f64>,
    pub max_fnr: Option<f64>,
}

/// Every parameter of a run in one document. Its hash tags all outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetOptions,
    pub pipeline: PipelineConfig,
    pub features: FeatureChoice,
    /// Image fed to PCA when `features` is `pca`.
    pub representation: RepresentationKind,
    pub lambda: usize,
    pub center: bool,
    pub classifier: ClassifierParams,
    pub cv: CvScheme,
    /// Subset whose report is checked against `thresholds`.
    pub direction: DirectionFilter,
    pub sweep_lambdas: Vec<usize>,
    pub sweep_kappas: Vec<usize>,
    pub thresholds: Thresholds,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetOptions::default(),
            pipeline: PipelineConfig::default(),
            features: FeatureChoice::Pca,
            representation: RepresentationKind::CvdPre,
            lambda: 22,
            center: true,
            classifier: ClassifierParams::default(),
            cv: CvScheme::StratifiedKFold { k: 10, seed: 7 },
            direction: DirectionFilter::Pooled,
            sweep_lambdas: vec![1, 2, 3, 5, 7, 10, 15, 20, 22, 25, 30, 35, 40],
            sweep_kappas: vec![1, 3, 5, 7, 9],
            thresholds: Thresholds::default(),
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.dataset.radar.validate()?;
        self.pipeline.validate()?;
        let (r, c) = self.representation.dims();
        if self.lambda == 0 || self.lambda > r * c {
            return Err(Invalid(format!("lambda must lie in 1..={}", r * c)).into());
        }
        if self.classifier.kappa == 0 || self.sweep_kappas.contains(&0) {
            return Err(Invalid("kappa must be >= 1".into()).into());
        }
        if self.sweep_lambdas.contains(&0) {
            return Err(Invalid("sweep lambdas must be >= 1".into()).into());
        }
        if let CvScheme::StratifiedKFold { k, .. } = self.cv {
            if k < 2 {
                return Err(Invalid("cv.k must be >= 2".into()).into());
            }
        }
        let t = &self.thresholds;
        for v in [t.min_accuracy, t.max_fpr, t.max_fnr].into_iter().flatten() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Invalid(format!("threshold {v} outside [0, 1]")).into());
            }
        }
        if self.threads == Some(0) {
            return Err(Invalid("threads must be >= 1".into()).into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
