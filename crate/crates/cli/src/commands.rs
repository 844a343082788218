use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use microdoppler::cvd::{cadence_axis, RepresentationKind, N_TIME_PIXELS};
use microdoppler::io::{self, Axis, FeatureRow, Manifest, ManifestEntry, Sidecar};
use microdoppler::ml::{self, DirectionFilter, EvalReport, Featurizer};
use microdoppler::pipeline::{analyze, feature_vector, to_dataset, Analysis, Source};
use microdoppler::sim::{dataset_profiles, synthesize_gait, DatasetOptions, GaitClass};
use microdoppler::subspace::{self, SubspaceModel};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{FeatureChoice, RunConfig};
use crate::plot::{self, PlotKind};
use crate::{Invalid, Unmet};

fn class_slug(c: GaitClass) -> String {
    c.as_str().replace('/', "-").to_lowercase()
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

/// Write the IQ files and `manifest.csv` for the configured corpus.
pub fn simulate(opts: &DatasetOptions, out: &Path) -> anyhow::Result<Manifest> {
    if opts.n_subjects == 0 || opts.runs_per_class == 0 {
        return Err(Invalid("subjects and runs must be >= 1".into()).into());
    }
    opts.radar.validate()?;
    create_dir(out)?;
    let entries = dataset_profiles(opts);
    let manifest_entries: Vec<ManifestEntry> = entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| -> anyhow::Result<ManifestEntry> {
            let mut rec = synthesize_gait(&e.profile, &opts.radar)?;
            rec.subject_id = Some(e.subject_id.clone());
            let name = format!("{}_{}_{}_{:04}.iq", e.subject_id, class_slug(e.profile.gait_class), e.profile.direction.as_str(), i);
            io::write_iq(&rec, &out.join(&name)).with_context(|| format!("writing {name}"))?;
            Ok(ManifestEntry {
                file: PathBuf::from(name),
                subject_id: e.subject_id.clone(),
                class: e.profile.gait_class,
                direction: e.profile.direction,
            })
        })
        .collect::<anyhow::Result<_>>()?;
    let manifest = Manifest { root: out.to_path_buf(), entries: manifest_entries };
    manifest.save(&out.join("manifest.csv"))?;
    Ok(manifest)
}

pub fn class_counts(m: &Manifest) -> BTreeMap<GaitClass, usize> {
    let mut counts = BTreeMap::new();
    for e in &m.entries {
        *counts.entry(e.class).or_insert(0) += 1;
    }
    counts
}

/// Analyze every manifest entry in parallel; errors name the recording.
fn analyze_manifest(m: &Manifest, cfg: &RunConfig, kinds: &[RepresentationKind]) -> anyhow::Result<Vec<Analysis>> {
    if m.entries.is_empty() {
        return Err(Invalid("manifest lists no recordings".into()).into());
    }
    m.entries
        .par_iter()
        .map(|e| -> anyhow::Result<Analysis> {
            let run = || -> anyhow::Result<Analysis> {
                let rec = m.read(e)?;
                Ok(analyze(&rec, &cfg.pipeline, kinds)?)
            };
            run().with_context(|| format!("recording {}", e.file.display()))
        })
        .collect()
}

fn stem_of(e: &ManifestEntry) -> String {
    e.file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| e.file.display().to_string())
}

fn axes(kind: RepresentationKind, a: &Analysis, duration: f64) -> (Option<Axis>, Option<Axis>) {
    let doppler = |name: &str| Axis { name: name.into(), unit: "Hz".into(), values: a.cvd.doppler_axis.clone() };
    let cadence = |name: &str| Axis { name: name.into(), unit: "Hz".into(), values: cadence_axis() };
    match kind {
        RepresentationKind::Spectrogram => {
            let dt = duration / N_TIME_PIXELS as f64;
            let t = Axis { name: "time".into(), unit: "s".into(), values: (0..N_TIME_PIXELS).map(|i| (i as f64 + 0.5) * dt).collect() };
            (Some(doppler("doppler")), Some(t))
        }
        RepresentationKind::Cvd => (Some(doppler("doppler")), Some(cadence("cadence"))),
        RepresentationKind::CvdPre => (Some(doppler("warped doppler")), Some(cadence("warped cadence"))),
        RepresentationKind::Mcs | RepresentationKind::FtFilteredTime => (None, Some(cadence("cadence"))),
        RepresentationKind::McsPre => (None, Some(cadence("warped cadence"))),
    }
}

/// Export `kind` for every recording as `<outdir>/<stem>_<KIND>.{csv,json}`.
pub fn represent(m: &Manifest, kind: RepresentationKind, cfg: &RunConfig, out: &Path) -> anyhow::Result<usize> {
    create_dir(out)?;
    let hash = cfg.hash();
    if m.entries.is_empty() {
        return Err(Invalid("manifest lists no recordings".into()).into());
    }
    m.entries.par_iter().try_for_each(|e| -> anyhow::Result<()> {
        let export = || -> anyhow::Result<()> {
            let rec = m.read(e)?;
            let a = analyze(&rec, &cfg.pipeline, &[kind])?;
            let img = a.representation(kind)?;
            let (rows, cols) = kind.dims();
            if img.dim() != (rows, cols) {
                anyhow::bail!("{kind} is {:?}, contract is {rows} × {cols}", img.dim());
            }
            let (row_axis, col_axis) = axes(kind, &a, rec.config.duration);
            let sidecar = Sidecar {
                kind: kind.as_str().into(),
                rows,
                cols,
                row_axis,
                col_axis,
                source: Some(e.file.display().to_string()),
                config_hash: Some(hash.clone()),
            };
            io::write_matrix(img, &sidecar, &out.join(format!("{}_{}", stem_of(e), kind.as_str())))?;
            Ok(())
        };
        export().with_context(|| format!("recording {}", e.file.display()))
    })?;
    Ok(m.entries.len())
}

fn image_rows(analyses: &[Analysis], kind: RepresentationKind) -> anyhow::Result<Array2<f64>> {
    let (r, c) = kind.dims();
    let mut x = Array2::zeros((analyses.len(), r * c));
    for (mut dst, a) in x.rows_mut().into_iter().zip(analyses) {
        dst.iter_mut().zip(a.representation(kind)?.iter()).for_each(|(d, v)| *d = *v);
    }
    Ok(x)
}

/// Fit a subspace on every recording of the manifest.
pub fn fit_pca(m: &Manifest, kind: RepresentationKind, lambda: usize, center: bool, cfg: &RunConfig) -> anyhow::Result<SubspaceModel> {
    let analyses = analyze_manifest(m, cfg, &[kind])?;
    let x = image_rows(&analyses, kind)?;
    if lambda == 0 || lambda > x.nrows().min(x.ncols()) {
        return Err(Invalid(format!("lambda must lie in 1..={} for {} recordings", x.nrows().min(x.ncols()), x.nrows())).into());
    }
    Ok(subspace::fit_rows(x.view(), kind, lambda, center)?)
}

pub enum PcaSource<'a> {
    Model(&'a SubspaceModel),
    Fit { lambda: usize, center: bool },
}

/// One feature row per recording. For `pca`, returns the model used as well.
pub fn featurize(
    m: &Manifest,
    choice: FeatureChoice,
    pca: Option<PcaSource<'_>>,
    kind: RepresentationKind,
    cfg: &RunConfig,
) -> anyhow::Result<(Vec<String>, Vec<FeatureRow>, Option<SubspaceModel>)> {
    let (kinds, model_kind) = match (&choice, &pca) {
        (FeatureChoice::Pca, None) => {
            return Err(Invalid("pca features need --model or --fit".into()).into());
        }
        (FeatureChoice::Pca, Some(PcaSource::Model(model))) => (vec![model.representation], Some(model.representation)),
        (FeatureChoice::Pca, Some(PcaSource::Fit { .. })) => (vec![kind], Some(kind)),
        _ => (vec![], None),
    };
    let analyses = analyze_manifest(m, cfg, &kinds)?;
    let (names, values, model): (Vec<String>, Array2<f64>, Option<SubspaceModel>) = match choice.fixed() {
        Some(set) => {
            let mut x = Array2::zeros((analyses.len(), set.len()));
            for (mut dst, a) in x.rows_mut().into_iter().zip(&analyses) {
                dst.iter_mut().zip(feature_vector(a, set)).for_each(|(d, v)| *d = v);
            }
            (set.names(), x, None)
        }
        None => {
            let kind = model_kind.expect("pca kind");
            let x = image_rows(&analyses, kind)?;
            let model = match pca.expect("checked above") {
                PcaSource::Model(model) => model.clone(),
                PcaSource::Fit { lambda, center } => {
                    if lambda == 0 || lambda > x.nrows().min(x.ncols()) {
                        return Err(Invalid(format!("lambda must lie in 1..={}", x.nrows().min(x.ncols()))).into());
                    }
                    subspace::fit_rows(x.view(), kind, lambda, center)?
                }
            };
            let z = subspace::project_rows(&model, x.view())?;
            let names = (1..=model.lambda()).map(|i| format!("pc{i}")).collect();
            (names, z, Some(model))
        }
    };
    let rows = m
        .entries
        .iter()
        .zip(values.rows())
        .map(|(e, v)| FeatureRow {
            file: e.file.display().to_string(),
            subject_id: e.subject_id.clone(),
            class: e.class,
            direction: e.direction,
            values: v.to_vec(),
        })
        .collect();
    Ok((names, rows, model))
}

#[derive(Debug, Serialize)]
pub struct EvaluationOutput {
    pub config_hash: String,
    pub features: &'static str,
    pub representation: Option<RepresentationKind>,
    pub lambda: Option<usize>,
    pub kappa: usize,
    pub n_recordings: usize,
    pub reports: BTreeMap<&'static str, EvalReport>,
    pub thresholds_met: bool,
}

fn direction_name(d: DirectionFilter) -> &'static str {
    match d {
        DirectionFilter::Pooled => "pooled",
        DirectionFilter::Toward => "toward",
        DirectionFilter::Away => "away",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    Lambda,
    Kappa,
}

/// Cross-validate on pooled, toward and away subsets and write `report.json`,
/// `confusion_<subset>.csv` and any requested sweep CSVs into `out`.
pub fn evaluate(m: &Manifest, cfg: &RunConfig, sweeps: &[SweepAxis], out: &Path) -> anyhow::Result<EvaluationOutput> {
    create_dir(out)?;
    let (source, featurizer) = match cfg.features.fixed() {
        Some(set) => (Source::Features(set), Featurizer::Fixed),
        None => (
            Source::Image(cfg.representation),
            Featurizer::Pca { kind: cfg.representation, lambda: cfg.lambda, center: cfg.center },
        ),
    };
    if sweeps.contains(&SweepAxis::Lambda) && cfg.features != FeatureChoice::Pca {
        return Err(Invalid("a lambda sweep needs features = pca".into()).into());
    }
    let kinds: Vec<RepresentationKind> = match source {
        Source::Image(k) => vec![k],
        Source::Features(_) => vec![],
    };
    let analyses = analyze_manifest(m, cfg, &kinds)?;
    let data = to_dataset(&analyses, source)?;

    let mut reports = BTreeMap::new();
    for d in DirectionFilter::ALL {
        let subset = data.filter(d);
        let report = ml::run_experiment(&subset, &featurizer, &cfg.classifier, cfg.cv)
            .with_context(|| format!("{} subset", direction_name(d)))?;
        let mut csv = Vec::new();
        report.confusion.write_csv(&mut csv)?;
        io::write_atomic(&out.join(format!("confusion_{}.csv", direction_name(d))), &csv)?;
        reports.insert(direction_name(d), report);
    }

    let main = data.filter(cfg.direction);
    for axis in sweeps {
        let points = match axis {
            SweepAxis::Lambda => ml::sweep(&main, &featurizer, &[cfg.classifier.kappa], Some(&cfg.sweep_lambdas), cfg.classifier.standardize, cfg.cv, None)?,
            SweepAxis::Kappa => ml::sweep(&main, &featurizer, &cfg.sweep_kappas, None, cfg.classifier.standardize, cfg.cv, None)?,
        };
        let mut csv = Vec::new();
        ml::write_sweep_csv(&points, &mut csv)?;
        let name = match axis {
            SweepAxis::Lambda => "sweep_lambda.csv",
            SweepAxis::Kappa => "sweep_kappa.csv",
        };
        io::write_atomic(&out.join(name), &csv)?;
    }

    let checked = &reports[direction_name(cfg.direction)];
    let t = &cfg.thresholds;
    let thresholds_met = t.min_accuracy.is_none_or(|v| checked.accuracy >= v)
        && t.max_fpr.is_none_or(|v| checked.fpr <= v)
        && t.max_fnr.is_none_or(|v| checked.fnr <= v);
    let output = EvaluationOutput {
        config_hash: cfg.hash(),
        features: cfg.features.as_str(),
        representation: (cfg.features == FeatureChoice::Pca).then_some(cfg.representation),
        lambda: (cfg.features == FeatureChoice::Pca).then_some(cfg.lambda),
        kappa: cfg.classifier.kappa,
        n_recordings: data.len(),
        reports,
        thresholds_met,
    };
    io::write_atomic(&out.join("report.json"), &serde_json::to_vec_pretty(&output)?)?;
    io::write_atomic(&out.join("run_config.json"), &serde_json::to_vec_pretty(cfg)?)?;
    Ok(output)
}

/// Fail with [`Unmet`] when the checked report misses a threshold.
pub fn check_thresholds(o: &EvaluationOutput) -> anyhow::Result<()> {
    if o.thresholds_met {
        Ok(())
    } else {
        Err(Unmet.into())
    }
}

/// Accepts `<stem>`, `<stem>.csv` or `<stem>.json`.
pub fn plot(input: &Path, kind: PlotKind, out: &Path) -> anyhow::Result<()> {
    let stem = match input.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("json") => input.with_extension(""),
        _ => input.to_path_buf(),
    };
    let (m, sidecar) = io::read_matrix(&stem).with_context(|| format!("reading {}", stem.display()))?;
    plot::render(&m, &sidecar, kind, out)
}
