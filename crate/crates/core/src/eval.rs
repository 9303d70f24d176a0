//! Token and grouping metrics, cross-validation runs and result tables.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotation::{Label, LabelSet};
use crate::corpus::SourceKind;
use crate::dataset::{Dataset, DatasetRecord, FoldPlan, MstInstance, FOLD_COUNT};
use crate::encoder::{Encoder, TinyConfig, TINY};
use crate::error::{contract, write_file, write_json, Error, Result};
use crate::iaa::Column;
use crate::mst::{train_mst, MstConfig, MstModel};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, DEFAULT_SEED};
use crate::sst::{train_sst, SstConfig, SstModel};
use crate::train::TrainLog;

/// Binary confusion counts without true negatives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn add(&mut self, predicted: bool, gold: bool) {
        match (predicted, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => {}
        }
    }

    /// Adds one decision per token for `label`. Panics on length mismatch;
    /// use `evaluate_tokens` for a checked version.
    pub fn add_labels(&mut self, pred: &[LabelSet], gold: &[LabelSet], label: Label) {
        assert_eq!(pred.len(), gold.len(), "token count mismatch");
        for (p, g) in pred.iter().zip(gold) {
            self.add(p.contains(label), g.contains(label));
        }
    }

    pub fn merge(&mut self, other: &Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// F1, taken as 1 when there is nothing to find and nothing was found.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

/// Token-level F1 for one label.
pub fn evaluate_tokens(pred: &[LabelSet], gold: &[LabelSet], label: Label) -> Result<f64> {
    contract!(
        pred.len() == gold.len(),
        "predicted {} tokens but gold has {}",
        pred.len(),
        gold.len()
    );
    let mut c = Counts::default();
    c.add_labels(pred, gold, label);
    Ok(c.f1())
}

/// Pairwise F1 of the grouping head over gold trigger tokens.
pub fn evaluate_grouping<T: Scalar>(model: &MstModel<T>, instances: &[MstInstance]) -> Result<f64> {
    let mut c = Counts::default();
    for inst in instances {
        c.merge(&model.grouping_counts(inst)?);
    }
    Ok(c.f1())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sst,
    Mst,
}

impl ModelKind {
    pub fn title(self) -> &'static str {
        match self {
            ModelKind::Sst => "SST",
            ModelKind::Mst => "MST",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sst" => Ok(ModelKind::Sst),
            "mst" => Ok(ModelKind::Mst),
            _ => Err(Error::Validation(format!("unknown model kind {s:?}"))),
        }
    }
}

/// Masking used when the encoder was adapted. Recorded, not applied: the
/// encoder reference must already point at the adapted checkpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskingVariant {
    #[default]
    None,
    Um,
    Pmi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelKind,
    /// `tiny` or a checkpoint directory.
    pub encoder: String,
    pub masking: MaskingVariant,
    pub tiny: TinyConfig,
    pub dataset: PathBuf,
    pub folds: PathBuf,
    pub sst: SstConfig,
    pub mst: MstConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            model: ModelKind::Mst,
            encoder: TINY.into(),
            masking: MaskingVariant::None,
            tiny: TinyConfig::default(),
            dataset: PathBuf::from("dataset.json"),
            folds: PathBuf::from("folds.json"),
            sst: SstConfig::default(),
            mst: MstConfig::default(),
            seed: DEFAULT_SEED,
        }
    }
}

/// Row of a metrics table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReportRow {
    Label(Label),
    MacroAvg,
    TriggerGrouping,
}

impl ReportRow {
    pub const ALL: [ReportRow; 5] = [
        ReportRow::Label(Label::Trigger),
        ReportRow::Label(Label::Cause),
        ReportRow::Label(Label::Effect),
        ReportRow::MacroAvg,
        ReportRow::TriggerGrouping,
    ];

    pub fn title(self) -> &'static str {
        match self {
            ReportRow::Label(l) => l.as_str(),
            ReportRow::MacroAvg => "Macro Avg",
            ReportRow::TriggerGrouping => "Trigger Grouping",
        }
    }

    fn index(self) -> usize {
        Self::ALL.iter().position(|&r| r == self).expect("row listed")
    }

    /// Name used in metrics records.
    pub fn key(self) -> &'static str {
        match self {
            ReportRow::Label(l) => l.as_str(),
            ReportRow::MacroAvg => "MacroAvg",
            ReportRow::TriggerGrouping => "TriggerGrouping",
        }
    }
}

fn column_index(c: Column) -> usize {
    Column::ALL.iter().position(|&x| x == c).expect("column listed")
}

/// Mean and population standard deviation across folds, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.0}±{:.0}", self.mean.round(), self.std.round())
    }
}

/// Raw counts of one fold for one label (or grouping) on one test source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub label: String,
    pub source: SourceKind,
    pub fold: usize,
    pub f1: f64,
    #[serde(flatten)]
    pub counts: Counts,
}

/// Per-fold counts: `[row: Trigger, Cause, Effect, TriggerGrouping][source]`.
pub type FoldCounts = [[Option<Counts>; 2]; 4];

const GROUPING: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub model: ModelKind,
    pub folds: usize,
    /// `[row][column]` in `ReportRow::ALL` × `Column::ALL` order.
    cells: [[Option<Stat>; 4]; 5],
    records: Vec<MetricsRecord>,
}

/// Per-fold F1 values for every cell, in percent.
fn fold_values(c: &FoldCounts) -> [[Option<f64>; 4]; 5] {
    let mut out = [[None; 4]; 5];
    let row_values = |row: &[Option<Counts>; 2]| -> [Option<f64>; 4] {
        let present: Vec<Counts> = row.iter().flatten().copied().collect();
        if present.is_empty() {
            return [None; 4];
        }
        let mut pooled = Counts::default();
        present.iter().for_each(|c| pooled.merge(c));
        let macro_ = present.iter().map(Counts::f1).sum::<f64>() / present.len() as f64;
        [
            row[0].map(|c| 100.0 * c.f1()),
            row[1].map(|c| 100.0 * c.f1()),
            Some(100.0 * pooled.f1()),
            Some(100.0 * macro_),
        ]
    };
    for k in 0..3 {
        out[k] = row_values(&c[k]);
    }
    for col in 0..4 {
        let vals: Vec<f64> = (0..3).filter_map(|k| out[k][col]).collect();
        if vals.len() == 3 {
            out[3][col] = Some(vals.iter().sum::<f64>() / 3.0);
        }
    }
    out[4] = row_values(&c[GROUPING]);
    out
}

impl MetricsReport {
    /// Aggregates per-fold counts.
    pub fn from_fold_counts(name: &str, model: ModelKind, folds: &[FoldCounts]) -> Result<Self> {
        contract!(!folds.is_empty(), "no fold results to report");
        let per_fold: Vec<_> = folds.iter().map(fold_values).collect();
        let mut cells = [[None; 4]; 5];
        for (r, row) in cells.iter_mut().enumerate() {
            if r == 4 && model == ModelKind::Sst {
                continue;
            }
            for (col, cell) in row.iter_mut().enumerate() {
                let vals: Vec<f64> = per_fold.iter().filter_map(|f| f[r][col]).collect();
                if vals.len() == folds.len() {
                    *cell = Stat::of(&vals);
                }
            }
        }
        let mut records = Vec::new();
        for (fold, fc) in folds.iter().enumerate() {
            for (k, row) in fc.iter().enumerate() {
                if k == GROUPING && model == ModelKind::Sst {
                    continue;
                }
                let label = if k == GROUPING {
                    ReportRow::TriggerGrouping.key()
                } else {
                    Label::REPORT_ORDER[k].as_str()
                };
                for (s, counts) in row.iter().enumerate() {
                    if let Some(counts) = counts {
                        records.push(MetricsRecord {
                            label: label.into(),
                            source: SourceKind::ALL[s],
                            fold,
                            f1: counts.f1(),
                            counts: *counts,
                        });
                    }
                }
            }
        }
        Ok(Self {
            name: name.into(),
            model,
            folds: folds.len(),
            cells,
            records,
        })
    }

    /// A report with given cell values and no raw records.
    pub fn from_cells(name: &str, model: ModelKind, cells: [[Option<Stat>; 4]; 5]) -> Result<Self> {
        contract!(
            cells.iter().flatten().any(Option::is_some),
            "report has no values"
        );
        contract!(
            model == ModelKind::Mst || cells[4].iter().all(Option::is_none),
            "an SST report has no grouping row"
        );
        Ok(Self {
            name: name.into(),
            model,
            folds: 0,
            cells,
            records: Vec::new(),
        })
    }

    pub fn cell(&self, row: ReportRow, column: Column) -> Option<Stat> {
        self.cells[row.index()][column_index(column)]
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.records
    }

    /// Records serialized one JSON object per line.
    pub fn records_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    fn rows(&self) -> Vec<ReportRow> {
        ReportRow::ALL
            .into_iter()
            .filter(|&r| r != ReportRow::TriggerGrouping || self.model == ModelKind::Mst)
            .collect()
    }
}

fn finish(out: String) -> String {
    out.lines().map(str::trim_end).collect::<Vec<_>>().join("\n") + "\n"
}

/// F1 table for one model: label rows by test source, `mean±std` percent.
pub fn render_report(report: &MetricsReport) -> Result<String> {
    contract!(
        report.cells.iter().flatten().any(Option::is_some),
        "cannot render an empty report"
    );
    let fmt = |s: Option<Stat>| s.map_or("-".to_string(), |s| s.to_string());
    let mut out = format!("{} ({})\n", report.name, report.model.title());
    out.push_str(&format!("{:<18}", "Annotation Type"));
    for c in Column::ALL {
        out.push_str(&format!("{:<11}", c.title()));
    }
    out.push('\n');
    for row in report.rows() {
        out.push_str(&format!("{:<18}", row.title()));
        for c in Column::ALL {
            out.push_str(&format!("{:<11}", fmt(report.cell(row, c))));
        }
        out.push('\n');
    }
    Ok(finish(out))
}

/// One model block with SST and MST side by side under each test source.
/// The grouping row shows `-` for SST.
pub fn render_comparison(title: &str, sst: &MetricsReport, mst: &MetricsReport) -> Result<String> {
    contract!(
        sst.model == ModelKind::Sst && mst.model == ModelKind::Mst,
        "comparison needs an SST and an MST report"
    );
    for r in [sst, mst] {
        contract!(r.cells.iter().flatten().any(Option::is_some), "cannot render an empty report");
    }
    let fmt = |s: Option<Stat>| s.map_or("-".to_string(), |s| s.to_string());
    let mut out = String::new();
    out.push_str(&format!("{:<18}{:<18}", "Model", "Annotation Type"));
    for c in Column::ALL {
        out.push_str(&format!("{:<16}", c.title()));
    }
    out.push('\n');
    out.push_str(&format!("{:<36}", ""));
    for _ in Column::ALL {
        out.push_str(&format!("{:<8}{:<8}", "SST", "MST"));
    }
    out.push('\n');
    for (i, row) in ReportRow::ALL.into_iter().enumerate() {
        out.push_str(&format!("{:<18}{:<18}", if i == 0 { title } else { "" }, row.title()));
        for c in Column::ALL {
            out.push_str(&format!("{:<8}{:<8}", fmt(sst.cell(row, c)), fmt(mst.cell(row, c))));
        }
        out.push('\n');
    }
    Ok(finish(out))
}

fn source_index(s: SourceKind) -> usize {
    SourceKind::ALL.iter().position(|&x| x == s).expect("source listed")
}

/// Counts of a trained SST model on `test`.
pub fn sst_fold_counts<T: Scalar>(model: &SstModel<T>, test: &[DatasetRecord]) -> Result<FoldCounts> {
    let mut out: FoldCounts = [[None; 2]; 4];
    for rec in test {
        let inst = rec.sst();
        let pred = model.predict_tokens(&inst.tokens)?;
        let s = source_index(rec.source_kind);
        for (k, label) in Label::REPORT_ORDER.into_iter().enumerate() {
            let mut c = Counts::default();
            c.add_labels(&pred, &inst.labels, label);
            out[k][s].get_or_insert_with(Counts::default).merge(&c);
        }
    }
    Ok(out)
}

/// Counts of a trained MST model on `test`, including grouping.
pub fn mst_fold_counts<T: Scalar>(model: &MstModel<T>, test: &[DatasetRecord]) -> Result<FoldCounts> {
    let mut out: FoldCounts = [[None; 2]; 4];
    for rec in test {
        let inst = rec.mst();
        let s = source_index(rec.source_kind);
        for (k, c) in model.token_counts(&inst)?.iter().enumerate() {
            out[k][s].get_or_insert_with(Counts::default).merge(c);
        }
        out[GROUPING][s]
            .get_or_insert_with(Counts::default)
            .merge(&model.grouping_counts(&inst)?);
    }
    Ok(out)
}

fn fold_encoder<T: Scalar>(config: &ExperimentConfig, train: &[DatasetRecord], seed: u64) -> Result<Encoder<T>> {
    if config.encoder == TINY {
        let words = train.iter().flat_map(|r| r.tokens.tokens.iter().map(|t| t.text.as_str()));
        Encoder::tiny(words, config.tiny, seed)
    } else {
        Encoder::from_checkpoint(Path::new(&config.encoder))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldLog {
    pub fold: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub log: TrainLog,
}

/// Outcome of a cross-validation run.
#[derive(Debug, Clone)]
pub struct CvRun {
    pub report: MetricsReport,
    pub logs: Vec<FoldLog>,
}

/// Trains one model per fold, early-stopping on the fold's dev split, and
/// tests every fold on the shared held-out set.
///
/// With `out`, the run directory receives `config.json`, `fold-<k>/` with
/// `log.json`, `counts.json` and `model/`, then `metrics.jsonl`,
/// `report.json` and `table.txt`. Folds finished before a failure stay on
/// disk.
pub fn run_cv_with<T: Scalar>(
    config: &ExperimentConfig,
    dataset: &Dataset,
    plan: &FoldPlan,
    out: Option<&Path>,
) -> Result<CvRun> {
    contract!(plan.folds.len() == FOLD_COUNT, "fold plan must have {FOLD_COUNT} folds");
    let test = dataset.select(&plan.test_ids)?;
    contract!(!test.is_empty(), "fold plan has an empty test set");
    if let Some(dir) = out {
        write_json(&dir.join("config.json"), config)?;
    }
    let mut all_counts = Vec::new();
    let mut logs = Vec::new();
    for k in 0..plan.folds.len() {
        let train = dataset.select(&plan.train_ids(k))?;
        let dev = dataset.select(plan.dev_ids(k))?;
        let seed = derive_seed(config.seed, &[k as u64]);
        let encoder = fold_encoder::<T>(config, &train, seed)?;
        let fold_dir = out.map(|d| d.join(format!("fold-{k}")));
        let (counts, log) = match config.model {
            ModelKind::Sst => {
                let mut c = config.sst.clone();
                c.train.seed = seed;
                let tr: Vec<_> = train.iter().map(DatasetRecord::sst).collect();
                let dv: Vec<_> = dev.iter().map(DatasetRecord::sst).collect();
                let (model, log) = train_sst(&tr, &dv, encoder, &c)?;
                if let Some(d) = &fold_dir {
                    model.save(&d.join("model"))?;
                }
                (sst_fold_counts(&model, &test)?, log)
            }
            ModelKind::Mst => {
                let mut c = config.mst.clone();
                c.train.seed = seed;
                let tr: Vec<_> = train.iter().map(DatasetRecord::mst).collect();
                let dv: Vec<_> = dev.iter().map(DatasetRecord::mst).collect();
                let (model, log) = train_mst(&tr, &dv, encoder, &c)?;
                if let Some(d) = &fold_dir {
                    model.save(&d.join("model"))?;
                }
                (mst_fold_counts(&model, &test)?, log)
            }
        };
        let fold_log = FoldLog {
            fold: k,
            train: train.len(),
            dev: dev.len(),
            test: test.len(),
            log,
        };
        if let Some(d) = &fold_dir {
            write_json(&d.join("log.json"), &fold_log)?;
            write_json(&d.join("counts.json"), &counts)?;
        }
        log::info!("fold {k} done (best epoch {})", fold_log.log.best_epoch);
        all_counts.push(counts);
        logs.push(fold_log);
    }
    let report = MetricsReport::from_fold_counts(&config.name, config.model, &all_counts)?;
    if let Some(dir) = out {
        write_file(&dir.join("metrics.jsonl"), report.records_jsonl())?;
        write_json(&dir.join("report.json"), &report)?;
        write_file(&dir.join("table.txt"), render_report(&report)?)?;
    }
    Ok(CvRun { report, logs })
}

/// Reads the dataset and fold plan named by `config` and runs
/// cross-validation in `f32`.
pub fn run_cv(config: &ExperimentConfig, out: Option<&Path>) -> Result<CvRun> {
    let dataset = Dataset::read(&config.dataset)?;
    let plan = FoldPlan::read(&config.folds)?;
    run_cv_with::<f32>(config, &dataset, &plan, out)
}

/// Per-label summary used in logs and CLI output.
pub fn summary(report: &MetricsReport) -> BTreeMap<String, String> {
    report
        .rows()
        .into_iter()
        .filter_map(|r| report.cell(r, Column::MicroAvg).map(|s| (r.key().to_string(), s.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(bits: &[u8], label: Label) -> Vec<LabelSet> {
        bits.iter()
            .map(|&b| if b == 1 { LabelSet::of(&[label]) } else { LabelSet::EMPTY })
            .collect()
    }

    #[test]
    fn token_f1_examples() {
        let l = Label::Cause;
        let gold = sets(&[0, 0, 1, 1, 1, 0], l);
        assert_eq!(evaluate_tokens(&gold, &gold, l).unwrap(), 1.0);
        assert_eq!(evaluate_tokens(&sets(&[0; 6], l), &gold, l).unwrap(), 0.0);
        let pred = sets(&[0, 1, 1, 1, 0, 0], l);
        let gold = sets(&[0, 0, 1, 1, 1, 0], l);
        assert!((evaluate_tokens(&pred, &gold, l).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(evaluate_tokens(&pred[..2], &gold, l).is_err());
    }

    #[test]
    fn degenerate_f1_is_one() {
        assert_eq!(Counts::default().f1(), 1.0);
    }

    #[test]
    fn stat_uses_population_std() {
        let s = Stat::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert_eq!(Stat { mean: 97.6, std: 1.4 }.to_string(), "98±1");
    }

    fn counts(tp: u64, fp: u64, fn_: u64) -> Option<Counts> {
        Some(Counts { tp, fp, fn_ })
    }

    #[test]
    fn micro_pools_and_macro_averages() {
        let fc: FoldCounts = [
            [counts(1, 0, 0), counts(1, 1, 1)],
            [counts(1, 0, 0), counts(1, 0, 0)],
            [counts(1, 0, 0), counts(1, 0, 0)],
            [None, None],
        ];
        let r = MetricsReport::from_fold_counts("x", ModelKind::Sst, &[fc]).unwrap();
        let t = ReportRow::Label(Label::Trigger);
        assert!((r.cell(t, Column::Slides).unwrap().mean - 50.0).abs() < 1e-9);
        assert!((r.cell(t, Column::MicroAvg).unwrap().mean - 200.0 / 3.0).abs() < 1e-9);
        assert!((r.cell(t, Column::MacroAvg).unwrap().mean - 75.0).abs() < 1e-9);
        let m = r.cell(ReportRow::MacroAvg, Column::Fmea).unwrap().mean;
        assert!((m - 100.0).abs() < 1e-9);
        assert!(r.cell(ReportRow::TriggerGrouping, Column::Fmea).is_none());
        assert_eq!(r.records().len(), 6);
        assert!(!render_report(&r).unwrap().contains("Grouping"));
    }

    #[test]
    fn empty_report_is_rejected() {
        assert!(MetricsReport::from_fold_counts("x", ModelKind::Mst, &[]).is_err());
        assert!(MetricsReport::from_cells("x", ModelKind::Mst, [[None; 4]; 5]).is_err());
    }
}
