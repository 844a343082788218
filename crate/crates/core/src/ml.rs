//! Nearest-neighbour classification, cross-validation splits and the evaluation
//! metrics (accuracy, FPR and FNR with "abnormal or assisted" as the positive class).

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cvd::RepresentationKind;
use crate::error::{Error, Result};
use crate::sim::{Direction, GaitClass};
use crate::subspace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: GaitClass,
    pub subject_id: String,
    pub direction: Direction,
}

fn sq_dist(a: ArrayView1<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Majority vote over the κ nearest rows of `train` (Euclidean). Equal distances
/// are ordered by training index; a tied vote goes to the tied class whose
/// member comes first in that order.
pub fn knn_predict(train: ArrayView2<f64>, labels: &[GaitClass], query: &[f64], kappa: usize) -> Result<GaitClass> {
    let n = train.nrows();
    if n == 0 {
        return Err(Error::Empty("training set"));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    if train.ncols() != query.len() {
        return Err(Error::DimensionMismatch { expected: train.ncols(), got: query.len() });
    }
    if kappa == 0 || kappa > n {
        return Err(Error::OutOfRange(format!("kappa {kappa} not in 1..={n}")));
    }
    let mut dist: Vec<(f64, usize)> =
        train.axis_iter(Axis(0)).enumerate().map(|(i, row)| (sq_dist(row, query), i)).collect();
    let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if kappa < n {
        dist.select_nth_unstable_by(kappa - 1, by_key);
    }
    let nearest = &mut dist[..kappa];
    nearest.sort_unstable_by(by_key);
    let mut votes = [0usize; 5];
    for &(_, i) in nearest.iter() {
        votes[labels[i].index()] += 1;
    }
    let top = *votes.iter().max().unwrap();
    let winner = nearest.iter().map(|&(_, i)| labels[i]).find(|c| votes[c.index()] == top).unwrap();
    Ok(winner)
}

pub fn knn_classify(train: &[LabeledSample], query: &[f64], kappa: usize) -> Result<GaitClass> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let dim = train[0].features.len();
    let mut x = Array2::zeros((train.len(), dim));
    for (mut row, s) in x.axis_iter_mut(Axis(0)).zip(train) {
        if s.features.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: s.features.len() });
        }
        row.assign(&ArrayView1::from(&s.features[..]));
    }
    let labels: Vec<GaitClass> = train.iter().map(|s| s.label).collect();
    knn_predict(x.view(), &labels, query, kappa)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn split_from_test(n: usize, test: Vec<usize>) -> Split {
    let mut is_test = vec![false; n];
    test.iter().for_each(|&i| is_test[i] = true);
    Split { train: (0..n).filter(|&i| !is_test[i]).collect(), test }
}

/// Class-stratified k-fold splits. Each class is shuffled and dealt round-robin
/// over the folds, continuing where the previous class stopped, so fold sizes
/// differ by at most one and per-class counts by at most one.
pub fn stratified_kfold(labels: &[GaitClass], k: usize, seed: u64) -> Result<Vec<Split>> {
    if k < 2 {
        return Err(Error::OutOfRange(format!("k = {k} must be at least 2")));
    }
    let mut by_class: BTreeMap<GaitClass, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    for (c, members) in &by_class {
        if members.len() < k {
            return Err(Error::TooFewMembers { class: c.to_string(), count: members.len(), k });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    Ok(folds
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            split_from_test(labels.len(), test)
        })
        .collect())
}

/// One split per subject, in subject order; the subject's recordings form the test set.
pub fn leave_one_subject_out(subjects: &[String]) -> Result<Vec<(String, Split)>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in subjects.iter().enumerate() {
        groups.entry(s.as_str()).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::OutOfRange(format!("need at least 2 subjects, got {}", groups.len())));
    }
    Ok(groups.into_iter().map(|(s, test)| (s.to_string(), split_from_test(subjects.len(), test))).collect())
}

/// Counts indexed [true][predicted] in the order NW, L1, L2, CW, CW/oos.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 5]; 5],
}

impl ConfusionMatrix {
    pub fn from_pairs(predictions: &[GaitClass], truths: &[GaitClass]) -> Result<Self> {
        if predictions.len() != truths.len() {
            return Err(Error::DimensionMismatch { expected: truths.len(), got: predictions.len() });
        }
        let mut m = Self::default();
        for (p, t) in predictions.iter().zip(truths) {
            m.counts[t.index()][p.index()] += 1;
        }
        Ok(m)
    }

    pub fn merge(&mut self, other: &Self) {
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..5).map(|i| self.counts[i][i]).sum();
        ratio(correct, self.total())
    }

    /// Normal walks classified as anything else.
    pub fn fpr(&self) -> f64 {
        let nw = &self.counts[GaitClass::Nw.index()];
        ratio(nw.iter().sum::<u64>() - nw[GaitClass::Nw.index()], nw.iter().sum())
    }

    /// Abnormal or assisted walks classified as normal.
    pub fn fnr(&self) -> f64 {
        let nw = GaitClass::Nw.index();
        let rows = self.counts.iter().enumerate().filter(|(i, _)| *i != nw);
        let (missed, total) = rows.fold((0, 0), |(m, t), (_, r)| (m + r[nw], t + r.iter().sum::<u64>()));
        ratio(missed, total)
    }

    /// Row-normalized percentages.
    pub fn percent(&self) -> [[f64; 5]; 5] {
        let mut out = [[0.0; 5]; 5];
        for (o, r) in out.iter_mut().zip(&self.counts) {
            let total: u64 = r.iter().sum();
            for (x, &c) in o.iter_mut().zip(r) {
                *x = 100.0 * ratio(c, total);
            }
        }
        out
    }

    /// CSV with a header row and one row per true class.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["true/predicted".to_string()];
        header.extend(GaitClass::ALL.iter().map(|c| c.to_string()));
        out.write_record(&header)?;
        for (c, r) in GaitClass::ALL.iter().zip(&self.counts) {
            let mut rec = vec![c.to_string()];
            rec.extend(r.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 { 0.0 } else { a as f64 / b as f64 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub confusion_percent: [[f64; 5]; 5],
    pub accuracy: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub tpr: f64,
    /// 1.96 · std / sqrt(k) over fold accuracies; 0 for a single fold.
    pub ci95_halfwidth: f64,
    pub fpr_ci95_halfwidth: f64,
    pub fnr_ci95_halfwidth: f64,
    pub fold_accuracies: Vec<f64>,
}

fn ci95(scores: &[f64]) -> f64 {
    let k = scores.len();
    if k < 2 {
        return 0.0;
    }
    let mean = scores.iter().sum::<f64>() / k as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    1.96 * var.sqrt() / (k as f64).sqrt()
}

/// Metrics for one set of aligned predictions.
pub fn evaluate(predictions: &[GaitClass], truths: &[GaitClass]) -> Result<EvalReport> {
    if truths.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let m = ConfusionMatrix::from_pairs(predictions, truths)?;
    Ok(report_from_folds(&[m]))
}

/// Pooled metrics over folds, with confidence half-widths from the per-fold scores.
pub fn report_from_folds(folds: &[ConfusionMatrix]) -> EvalReport {
    let mut pooled = ConfusionMatrix::default();
    folds.iter().for_each(|f| pooled.merge(f));
    let fold_accuracies: Vec<f64> = folds.iter().map(|f| f.accuracy()).collect();
    let fprs: Vec<f64> = folds.iter().map(|f| f.fpr()).collect();
    let fnrs: Vec<f64> = folds.iter().map(|f| f.fnr()).collect();
    let fnr = pooled.fnr();
    EvalReport {
        confusion: pooled,
        confusion_percent: pooled.percent(),
        accuracy: pooled.accuracy(),
        fpr: pooled.fpr(),
        fnr,
        tpr: 1.0 - fnr,
        ci95_halfwidth: ci95(&fold_accuracies),
        fpr_ci95_halfwidth: ci95(&fprs),
        fnr_ci95_halfwidth: ci95(&fnrs),
        fold_accuracies,
    }
}

/// Which recordings an experiment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionFilter {
    #[default]
    Pooled,
    Toward,
    Away,
}

impl DirectionFilter {
    pub const ALL: [DirectionFilter; 3] = [DirectionFilter::Pooled, DirectionFilter::Toward, DirectionFilter::Away];

    pub fn keeps(self, d: Direction) -> bool {
        match self {
            DirectionFilter::Pooled => true,
            DirectionFilter::Toward => d == Direction::Toward,
            DirectionFilter::Away => d == Direction::Away,
        }
    }
}

/// Feature matrix (one row per recording) with labels and grouping metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub labels: Vec<GaitClass>,
    pub subjects: Vec<String>,
    pub directions: Vec<Direction>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, labels: Vec<GaitClass>, subjects: Vec<String>, directions: Vec<Direction>) -> Result<Self> {
        let n = x.nrows();
        for len in [labels.len(), subjects.len(), directions.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self { x, labels, subjects, directions })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            subjects: idx.iter().map(|&i| self.subjects[i].clone()).collect(),
            directions: idx.iter().map(|&i| self.directions[i]).collect(),
        }
    }

    pub fn filter(&self, f: DirectionFilter) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| f.keeps(self.directions[i])).collect();
        self.select(&idx)
    }
}

/// How rows of a [`Dataset`] become classifier inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "type")]
pub enum Featurizer {
    /// Rows are already feature vectors.
    Fixed,
    /// Rows are vectorized images of `kind`; a subspace is fitted on each training fold.
    Pca { kind: RepresentationKind, lambda: usize, center: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierParams {
    pub kappa: usize,
    /// Scale every feature to zero mean and unit variance using training-fold statistics.
    pub standardize: bool,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self { kappa: 1, standardize: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum CvScheme {
    StratifiedKFold { k: usize, seed: u64 },
    LeaveOneSubjectOut,
}

impl Default for CvScheme {
    fn default() -> Self {
        CvScheme::StratifiedKFold { k: 10, seed: 0 }
    }
}

pub fn splits(data: &Dataset, scheme: CvScheme) -> Result<Vec<Split>> {
    match scheme {
        CvScheme::StratifiedKFold { k, seed } => stratified_kfold(&data.labels, k, seed),
        CvScheme::LeaveOneSubjectOut => Ok(leave_one_subject_out(&data.subjects)?.into_iter().map(|(_, s)| s).collect()),
    }
}

/// Checks that a training-side fit never sees a test index.
pub struct FoldGuard {
    is_test: Vec<bool>,
}

impl FoldGuard {
    pub fn new(n: usize, split: &Split) -> Self {
        let mut is_test = vec![false; n];
        split.test.iter().for_each(|&i| is_test[i] = true);
        Self { is_test }
    }

    pub fn check(&self, fit_indices: &[usize]) -> Result<()> {
        match fit_indices.iter().find(|&&i| self.is_test.get(i).copied().unwrap_or(false)) {
            Some(&i) => Err(Error::Leakage(i)),
            None => Ok(()),
        }
    }
}

/// Called once per training-side fit with (fold, indices fitted on, test indices).
pub type FitHook<'a> = &'a (dyn Fn(usize, &[usize], &[usize]) + Sync);

/// Per-fold transformed features, computed for the largest λ requested.
struct FoldFeatures {
    train: Array2<f64>,
    test: Array2<f64>,
}

fn fold_features(
    data: &Dataset,
    split: &Split,
    featurizer: &Featurizer,
    fold: usize,
    hook: Option<FitHook>,
) -> Result<FoldFeatures> {
    let guard = FoldGuard::new(data.len(), split);
    let train_x = data.x.select(Axis(0), &split.train);
    let test_x = data.x.select(Axis(0), &split.test);
    match featurizer {
        Featurizer::Fixed => Ok(FoldFeatures { train: train_x, test: test_x }),
        Featurizer::Pca { kind, lambda, center } => {
            guard.check(&split.train)?;
            if let Some(h) = hook {
                h(fold, &split.train, &split.test);
            }
            let model = subspace::fit_rows(train_x.view(), *kind, *lambda, *center)?;
            Ok(FoldFeatures {
                train: subspace::project_rows(&model, train_x.view())?,
                test: subspace::project_rows(&model, test_x.view())?,
            })
        }
    }
}

fn standardize(train: &mut Array2<f64>, test: &mut Array2<f64>) {
    for j in 0..train.ncols() {
        let col = train.column(j);
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        train.column_mut(j).mapv_inplace(|v| (v - mean) / sd);
        test.column_mut(j).mapv_inplace(|v| (v - mean) / sd);
    }
}

fn predict_fold(
    train: &Array2<f64>,
    test: &Array2<f64>,
    train_labels: &[GaitClass],
    dims: usize,
    params: &ClassifierParams,
) -> Result<Vec<GaitClass>> {
    let mut tr = train.slice(ndarray::s![.., ..dims]).to_owned();
    let mut te = test.slice(ndarray::s![.., ..dims]).to_owned();
    if params.standardize {
        standardize(&mut tr, &mut te);
    }
    te.axis_iter(Axis(0))
        .map(|q| knn_predict(tr.view(), train_labels, q.as_slice().expect("owned row"), params.kappa))
        .collect()
}

/// Cross-validated evaluation. Folds run in parallel; results do not depend on
/// scheduling.
pub fn run_experiment(
    data: &Dataset,
    featurizer: &Featurizer,
    params: &ClassifierParams,
    scheme: CvScheme,
) -> Result<EvalReport> {
    run_experiment_with_hook(data, featurizer, params, scheme, None)
}

pub fn run_experiment_with_hook(
    data: &Dataset,
    featurizer: &Featurizer,
    params: &ClassifierParams,
    scheme: CvScheme,
    hook: Option<FitHook>,
) -> Result<EvalReport> {
    let grid = sweep(data, featurizer, &[params.kappa], None, params.standardize, scheme, hook)?;
    Ok(grid.into_iter().next().expect("one grid point").report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: Option<usize>,
    pub kappa: usize,
    pub report: EvalReport,
}

/// Evaluate every (λ, κ) pair. Each fold is featurized once with the largest λ and
/// truncated for smaller ones, which is exact because principal components nest.
/// `lambdas = None` uses the featurizer as is.
pub fn sweep(
    data: &Dataset,
    featurizer: &Featurizer,
    kappas: &[usize],
    lambdas: Option<&[usize]>,
    standardize: bool,
    scheme: CvScheme,
    hook: Option<FitHook>,
) -> Result<Vec<SweepPoint>> {
    if kappas.is_empty() {
        return Err(Error::Empty("kappa grid"));
    }
    let (feat, lambda_list): (Featurizer, Vec<Option<usize>>) = match (featurizer, lambdas) {
        (Featurizer::Pca { kind, center, .. }, Some(ls)) => {
            let max = *ls.iter().max().ok_or(Error::Empty("lambda grid"))?;
            if ls.contains(&0) {
                return Err(Error::OutOfRange("lambda must be >= 1".into()));
            }
            (Featurizer::Pca { kind: *kind, lambda: max, center: *center }, ls.iter().map(|&l| Some(l)).collect())
        }
        (Featurizer::Pca { lambda, .. }, None) => (featurizer.clone(), vec![Some(*lambda)]),
        (Featurizer::Fixed, None) => (Featurizer::Fixed, vec![None]),
        (Featurizer::Fixed, Some(_)) => {
            return Err(Error::InvalidConfig("a lambda sweep needs a PCA featurizer".into()));
        }
    };
    let splits = splits(data, scheme)?;
    let per_fold: Vec<Vec<ConfusionMatrix>> = splits
        .par_iter()
        .enumerate()
        .map(|(fold, split)| -> Result<Vec<ConfusionMatrix>> {
            let f = fold_features(data, split, &feat, fold, hook)?;
            let train_labels: Vec<GaitClass> = split.train.iter().map(|&i| data.labels[i]).collect();
            let truths: Vec<GaitClass> = split.test.iter().map(|&i| data.labels[i]).collect();
            let mut out = Vec::with_capacity(lambda_list.len() * kappas.len());
            for l in &lambda_list {
                let dims = l.unwrap_or(f.train.ncols());
                for &kappa in kappas {
                    let params = ClassifierParams { kappa, standardize };
                    let pred = predict_fold(&f.train, &f.test, &train_labels, dims, &params)?;
                    out.push(ConfusionMatrix::from_pairs(&pred, &truths)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    for (li, l) in lambda_list.iter().enumerate() {
        for (ki, &kappa) in kappas.iter().enumerate() {
            let folds: Vec<ConfusionMatrix> = per_fold.iter().map(|f| f[li * kappas.len() + ki]).collect();
            points.push(SweepPoint { lambda: *l, kappa, report: report_from_folds(&folds) });
        }
    }
    Ok(points)
}

/// CSV with columns lambda,kappa,accuracy,ci95,fpr,fnr.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lambda", "kappa", "accuracy", "ci95", "fpr", "fnr"])?;
    for p in points {
        out.write_record([
            p.lambda.map_or(String::new(), |l| l.to_string()),
            p.kappa.to_string(),
            format!("{:.6}", p.report.accuracy),
            format!("{:.6}", p.report.ci95_halfwidth),
            format!("{:.6}", p.report.fpr),
            format!("{:.6}", p.report.fnr),
        ])?;
    }
    out.flush()?;
    Ok(())
}
