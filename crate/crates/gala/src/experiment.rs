//! End-to-end experiment runs behind the CLI subcommands.
//!
//! Every run computes all of its results in memory before the output
//! directory is touched, so a failing run leaves nothing behind.

use std::path::{Path, PathBuf};

use gala_core::{
    assign_groups, cross_similarity_report, evaluate, predict, rebalance, synthesize, train, CrossSimilarity, Dataset,
    EvalReport, GradAccumulators, Group, GroupAccuracy, GroupAssignment, LongTailProfile, LossKind, PredictionMatrix,
    Role, TrainOutput,
};
use serde::Serialize;

use crate::config::{DataSource, ExperimentConfig, LossName};
use crate::csv_io::{self, cell};
use crate::error::{Error, Result};
use crate::report::{write_json, write_jsonl, AccumulatorDump, Checkpoint, EvalReportJson, HistoryLine};

/// Row tolerance for probability matrices read from text.
pub const CSV_PROB_TOL: f64 = 1e-6;

pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.data {
        DataSource::Synthetic(s) => {
            let (train, test) = synthesize(&s.profile()?, s.dim, s.separation, s.test_per_class, s.seed)?;
            Ok((train, test))
        }
        DataSource::Csv(c) => {
            let train = csv_io::read_dataset(&c.train, None, Role::Train)?;
            let test = csv_io::read_dataset(&c.test, Some(train.num_classes()), Role::Test)?;
            if test.dim() != train.dim() {
                return Err(Error::Format {
                    path: c.test.clone(),
                    message: format!("{} features, train set has {}", test.dim(), train.dim()),
                });
            }
            Ok((train, test))
        }
    }
}

/// Everything one training run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub loss: LossKind,
    pub tau: f64,
    pub groups: GroupAssignment,
    pub train_counts: Vec<usize>,
    pub output: TrainOutput,
    pub probs: PredictionMatrix,
    pub raw: EvalReport,
    pub rebalanced: EvalReport,
    pub test_labels: Vec<usize>,
    pub cross_similarity: Option<Vec<CrossSimilarity>>,
}

impl RunResult {
    pub fn final_similarity(&self) -> &[f64] {
        self.output.history.records.last().map_or(&[], |r| &r.similarity)
    }

    pub fn gradient_ratio(&self) -> Vec<f64> {
        ratio_or_nan(&self.output.accumulators)
    }

    /// max_j / min_j of the final gradient ratio.
    pub fn gradient_ratio_spread(&self) -> f64 {
        spread(&self.gradient_ratio())
    }

    /// Mean final weight/feature similarity over tail classes.
    pub fn tail_similarity(&self) -> Option<f64> {
        group_mean(&self.groups, Group::Tail, self.final_similarity())
    }
}

fn ratio_or_nan(acc: &GradAccumulators) -> Vec<f64> {
    acc.theta.iter().zip(&acc.nu).map(|(t, n)| if *n > 0.0 { t / n } else { f64::NAN }).collect()
}

fn spread(v: &[f64]) -> f64 {
    let finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    if finite.is_empty() || min <= 0.0 {
        f64::NAN
    } else {
        max / min
    }
}

fn group_mean(groups: &GroupAssignment, g: Group, values: &[f64]) -> Option<f64> {
    let v: Vec<f64> = groups.classes(g).filter_map(|c| values.get(c).copied()).filter(|x| !x.is_nan()).collect();
    gala_core::math::mean(&v)
}

/// Trains on `train`, then evaluates raw and re-balanced predictions on `test`.
pub fn execute(cfg: &ExperimentConfig, train_set: &Dataset, test_set: &Dataset) -> Result<RunResult> {
    let tc = cfg.train.to_core();
    let groups = assign_groups(train_set.class_counts(), cfg.groups.head_threshold, cfg.groups.tail_threshold)?;
    let output = train(&tc, train_set)?;
    let probs = PredictionMatrix::from_model(&output.params, test_set.features())?;
    let raw = evaluate(&predict(probs.matrix()), test_set.labels(), &groups)?;
    let rebalanced = evaluate(&predict(&rebalance(&probs, tc.tau)?), test_set.labels(), &groups)?;
    let cross_similarity = cross_similarity_report(&output.params, train_set, &groups).ok();
    Ok(RunResult {
        loss: tc.loss,
        tau: tc.tau,
        groups,
        train_counts: train_set.class_counts().to_vec(),
        output,
        probs,
        raw,
        rebalanced,
        test_labels: test_set.labels().to_vec(),
        cross_similarity,
    })
}

#[derive(Debug, Serialize)]
struct CrossSimilarityJson {
    to_head: Option<f64>,
    to_tail: Option<f64>,
}

#[derive(Debug, Serialize)]
struct FinalDiagnostics {
    gradient_ratio: Vec<f64>,
    gradient_ratio_spread: f64,
    phi: Vec<f64>,
    phi_normalized: Vec<f64>,
    similarity: Vec<f64>,
    tail_similarity: Option<f64>,
    cross_similarity: Option<Vec<CrossSimilarityJson>>,
    weight_norms: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct EvalDocument {
    loss: &'static str,
    tau: f64,
    groups: Vec<&'static str>,
    train_counts: Vec<usize>,
    raw: EvalReportJson,
    rebalanced: EvalReportJson,
    diagnostics: FinalDiagnostics,
}

fn eval_document(r: &RunResult) -> EvalDocument {
    let acc = &r.output.accumulators;
    EvalDocument {
        loss: r.loss.as_str(),
        tau: r.tau,
        groups: r.groups.0.iter().map(Group::as_str).collect(),
        train_counts: r.train_counts.clone(),
        raw: (&r.raw).into(),
        rebalanced: (&r.rebalanced).into(),
        diagnostics: FinalDiagnostics {
            gradient_ratio: r.gradient_ratio(),
            gradient_ratio_spread: r.gradient_ratio_spread(),
            phi: acc.produced_negative_distribution(false),
            phi_normalized: acc.produced_negative_distribution(true),
            similarity: r.final_similarity().to_vec(),
            tail_similarity: r.tail_similarity(),
            cross_similarity: r
                .cross_similarity
                .as_ref()
                .map(|v| v.iter().map(|c| CrossSimilarityJson { to_head: c.to_head, to_tail: c.to_tail }).collect()),
            weight_norms: r.output.params.weight_norms(),
        },
    }
}

fn per_epoch_csv(path: &Path, k: usize, rows: impl Iterator<Item = (usize, Vec<f64>)>) -> Result<()> {
    let mut out = Vec::new();
    let mut header = vec!["epoch".to_string()];
    header.extend((0..k).map(|c| format!("c{c}")));
    out.push(header);
    for (epoch, values) in rows {
        let mut row = vec![epoch.to_string()];
        row.extend(values.iter().map(|v| cell(*v)));
        out.push(row);
    }
    csv_io::write_rows(path, &out)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes the full artifact set of one run into `dir`.
pub fn write_run(dir: &Path, manifest: &ExperimentConfig, r: &RunResult) -> Result<()> {
    create_dir(dir)?;
    let k = r.groups.len();
    let records = &r.output.history.records;

    std::fs::write(dir.join("manifest.json"), manifest.to_json()?).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("checkpoint.json"), &Checkpoint::from(&r.output.params))?;
    write_jsonl(&dir.join("history.jsonl"), records.iter().map(HistoryLine::from))?;
    write_jsonl(
        &dir.join("accumulators.jsonl"),
        records.iter().map(|rec| AccumulatorDump::new(rec.epoch, &rec.accumulators)),
    )?;
    write_json(&dir.join("eval.json"), &eval_document(r))?;

    per_epoch_csv(
        &dir.join("gradient_ratio.csv"),
        k,
        records.iter().map(|rec| (rec.epoch, ratio_or_nan(&rec.accumulators))),
    )?;
    per_epoch_csv(
        &dir.join("phi_distribution.csv"),
        k,
        records.iter().map(|rec| (rec.epoch, rec.accumulators.produced_negative_distribution(true))),
    )?;
    per_epoch_csv(&dir.join("similarity.csv"), k, records.iter().map(|rec| (rec.epoch, rec.similarity.clone())))?;
    per_epoch_csv(&dir.join("weight_norms.csv"), k, records.iter().map(|rec| (rec.epoch, rec.weight_norms.clone())))?;

    let ratio = r.gradient_ratio();
    let sim = r.final_similarity();
    let norms = r.output.params.weight_norms();
    let mut rows = vec![[
        "class",
        "train_count",
        "group",
        "accuracy",
        "accuracy_rebalanced",
        "positive_predictions",
        "positive_predictions_rebalanced",
        "gradient_ratio",
        "phi",
        "similarity",
        "weight_norm",
    ]
    .map(String::from)
    .to_vec()];
    for c in 0..k {
        rows.push(vec![
            c.to_string(),
            r.train_counts[c].to_string(),
            r.groups.get(c).as_str().to_string(),
            cell(r.raw.per_class_accuracy[c]),
            cell(r.rebalanced.per_class_accuracy[c]),
            r.raw.positive_prediction_counts[c].to_string(),
            r.rebalanced.positive_prediction_counts[c].to_string(),
            cell(ratio[c]),
            cell(r.output.accumulators.phi[c]),
            cell(sim.get(c).copied().unwrap_or(f64::NAN)),
            cell(norms[c]),
        ]);
    }
    csv_io::write_rows(&dir.join("per_class.csv"), &rows)?;

    csv_io::write_matrix(&dir.join("test_probs.csv"), r.probs.matrix(), "p")?;
    csv_io::write_labels(&dir.join("test_labels.csv"), "label", &r.test_labels)?;
    csv_io::write_counts(&dir.join("train_counts.csv"), &r.train_counts)?;
    Ok(())
}

pub fn run_train(cfg: &ExperimentConfig, out: &Path) -> Result<RunResult> {
    cfg.validate()?;
    let (train_set, test_set) = load_data(cfg)?;
    let result = execute(cfg, &train_set, &test_set)?;
    write_run(out, &cfg.manifest(), &result)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub top1: f64,
    pub group_accuracy: GroupJson,
    pub rebalanced_top1: f64,
    pub rebalanced_group_accuracy: GroupJson,
    pub gradient_ratio_spread: f64,
    pub tail_similarity: Option<f64>,
    pub epoch1_mean_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupJson {
    pub head: Option<f64>,
    pub medium: Option<f64>,
    pub tail: Option<f64>,
}

impl From<GroupAccuracy> for GroupJson {
    fn from(g: GroupAccuracy) -> Self {
        Self { head: g.head, medium: g.medium, tail: g.tail }
    }
}

impl From<&RunResult> for RunSummary {
    fn from(r: &RunResult) -> Self {
        Self {
            top1: r.raw.top1,
            group_accuracy: r.raw.group_accuracy.into(),
            rebalanced_top1: r.rebalanced.top1,
            rebalanced_group_accuracy: r.rebalanced.group_accuracy.into(),
            gradient_ratio_spread: r.gradient_ratio_spread(),
            tail_similarity: r.tail_similarity(),
            epoch1_mean_loss: r.output.history.records.first().map_or(f64::NAN, |e| e.mean_loss),
        }
    }
}

/// GALA minus cross-entropy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareDeltas {
    pub top1: f64,
    pub head: Option<f64>,
    pub medium: Option<f64>,
    pub tail: Option<f64>,
    pub rebalanced_top1: f64,
    pub rebalanced_tail: Option<f64>,
    pub gradient_ratio_spread: f64,
    pub tail_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub tau: f64,
    pub cross_entropy: RunSummary,
    pub gala: RunSummary,
    pub deltas: CompareDeltas,
    pub epoch1_loss_equal: bool,
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

impl CompareReport {
    pub fn new(ce: &RunResult, gala: &RunResult) -> Self {
        let c = RunSummary::from(ce);
        let g = RunSummary::from(gala);
        let deltas = CompareDeltas {
            top1: g.top1 - c.top1,
            head: diff(g.group_accuracy.head, c.group_accuracy.head),
            medium: diff(g.group_accuracy.medium, c.group_accuracy.medium),
            tail: diff(g.group_accuracy.tail, c.group_accuracy.tail),
            rebalanced_top1: g.rebalanced_top1 - c.rebalanced_top1,
            rebalanced_tail: diff(g.rebalanced_group_accuracy.tail, c.rebalanced_group_accuracy.tail),
            gradient_ratio_spread: g.gradient_ratio_spread - c.gradient_ratio_spread,
            tail_similarity: diff(g.tail_similarity, c.tail_similarity),
        };
        Self {
            tau: ce.tau,
            epoch1_loss_equal: c.epoch1_mean_loss == g.epoch1_mean_loss,
            cross_entropy: c,
            gala: g,
            deltas,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareResult {
    pub cross_entropy: RunResult,
    pub gala: RunResult,
    pub report: CompareReport,
}

fn with_loss(cfg: &ExperimentConfig, loss: LossName) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.train.loss = loss;
    c
}

/// Trains cross-entropy and GALA on the same data, seed and batch order.
pub fn compare(cfg: &ExperimentConfig) -> Result<CompareResult> {
    cfg.validate()?;
    let (train_set, test_set) = load_data(cfg)?;
    let ce = execute(&with_loss(cfg, LossName::CrossEntropy), &train_set, &test_set)?;
    let gala = execute(&with_loss(cfg, LossName::Gala), &train_set, &test_set)?;
    let report = CompareReport::new(&ce, &gala);
    Ok(CompareResult { cross_entropy: ce, gala, report })
}

pub fn run_compare(cfg: &ExperimentConfig, out: &Path) -> Result<CompareResult> {
    let result = compare(cfg)?;
    create_dir(out)?;
    let manifest = cfg.manifest();
    std::fs::write(out.join("manifest.json"), manifest.to_json()?).map_err(|e| Error::io(out, e))?;
    write_run(&out.join("cross_entropy"), &with_loss(&manifest, LossName::CrossEntropy), &result.cross_entropy)?;
    write_run(&out.join("gala"), &with_loss(&manifest, LossName::Gala), &result.gala)?;
    write_json(&out.join("compare.json"), &result.report)?;
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct RebalanceOptions {
    pub probs: PathBuf,
    pub tau: f64,
    pub truth: Option<PathBuf>,
    /// Per-class training counts for head/medium/tail grouping.
    pub counts: Option<PathBuf>,
    pub head_threshold: usize,
    pub tail_threshold: usize,
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct RebalanceDocument {
    tau: f64,
    baseline: EvalReportJson,
    rebalanced: EvalReportJson,
}

#[derive(Debug, Clone)]
pub struct RebalanceOutcome {
    pub rebalanced: gala_core::Matrix,
    pub predictions: Vec<usize>,
    /// Reports at `tau = 0` and at the requested `tau`, when truth was given.
    pub reports: Option<(EvalReport, EvalReport)>,
}

pub fn run_rebalance(opts: &RebalanceOptions) -> Result<RebalanceOutcome> {
    let raw = csv_io::read_matrix(&opts.probs)?;
    let probs = PredictionMatrix::with_tolerance(raw, CSV_PROB_TOL)
        .map_err(|e| Error::Format { path: opts.probs.clone(), message: e.to_string() })?;
    let k = probs.num_classes();
    let rebalanced = rebalance(&probs, opts.tau)?;
    let predictions = predict(&rebalanced);

    let reports = match &opts.truth {
        None => None,
        Some(path) => {
            let truth = csv_io::read_labels(path)?;
            if truth.len() != probs.matrix().rows() {
                return Err(Error::Format {
                    path: path.clone(),
                    message: format!("{} labels for {} probability rows", truth.len(), probs.matrix().rows()),
                });
            }
            if let Some((i, t)) = truth.iter().enumerate().find(|(_, &t)| t >= k) {
                return Err(Error::Format {
                    path: path.clone(),
                    message: format!("label {t} in row {} exceeds the {k} probability columns", i + 1),
                });
            }
            let groups = match &opts.counts {
                Some(c) => {
                    let counts = csv_io::read_counts(c)?;
                    if counts.len() != k {
                        return Err(Error::Format {
                            path: c.clone(),
                            message: format!("{} classes, probability matrix has {k}", counts.len()),
                        });
                    }
                    assign_groups(&counts, opts.head_threshold, opts.tail_threshold)?
                }
                None => GroupAssignment(vec![Group::Medium; k]),
            };
            let baseline = evaluate(&predict(probs.matrix()), &truth, &groups)?;
            let after = evaluate(&predictions, &truth, &groups)?;
            Some((baseline, after))
        }
    };

    create_dir(&opts.out)?;
    csv_io::write_matrix(&opts.out.join("rebalanced.csv"), &rebalanced, "p")?;
    csv_io::write_labels(&opts.out.join("predictions.csv"), "prediction", &predictions)?;
    if let Some((b, a)) = &reports {
        write_json(
            &opts.out.join("rebalance_eval.json"),
            &RebalanceDocument { tau: opts.tau, baseline: b.into(), rebalanced: a.into() },
        )?;
    }
    Ok(RebalanceOutcome { rebalanced, predictions, reports })
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub num_classes: usize,
    pub imbalance_factor: f64,
    pub max_count: usize,
    pub dim: usize,
    pub separation: f64,
    pub test_per_class: usize,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn run_synth(opts: &SynthOptions) -> Result<(Dataset, Dataset)> {
    let profile = LongTailProfile::new(opts.num_classes, opts.max_count, opts.imbalance_factor)?;
    let (train_set, test_set) = synthesize(&profile, opts.dim, opts.separation, opts.test_per_class, opts.seed)?;
    create_dir(&opts.out)?;
    csv_io::write_dataset(&opts.out.join("train.csv"), &train_set)?;
    csv_io::write_dataset(&opts.out.join("test.csv"), &test_set)?;
    csv_io::write_counts(&opts.out.join("train_counts.csv"), train_set.class_counts())?;
    Ok((train_set, test_set))
}
