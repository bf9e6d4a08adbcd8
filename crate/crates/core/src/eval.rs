//! Metrics and evaluation drivers: mining F1, top-1 retrieval accuracy,
//! STS rank correlation, threshold transfer, the ablation grid and the
//! single-layer sweep.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::feature_store::FeatureSet;
use crate::miner::{
    apply_threshold, build_index, mine_candidates, optimize_threshold, retrieve_top1_with_workers,
    EmbeddingIndex, MiningConfig, ScoredPair,
};
use crate::model::{AblationFlags, AlignmentModel, TrainingMode};
use crate::trainer::{init_model, train_multipair, PairCorpus, TrainConfig};

/// Gold translation pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gold {
    pairs: BTreeSet<(u64, u64)>,
}

impl Gold {
    pub fn insert(&mut self, src: u64, trg: u64) -> bool {
        self.pairs.insert((src, trg))
    }

    pub fn contains(&self, src: u64, trg: u64) -> bool {
        self.pairs.contains(&(src, trg))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.pairs.iter().copied()
    }

    /// Distinct source ids.
    pub fn sources(&self) -> BTreeSet<u64> {
        self.pairs.iter().map(|p| p.0).collect()
    }
}

impl FromIterator<(u64, u64)> for Gold {
    fn from_iter<I: IntoIterator<Item = (u64, u64)>>(iter: I) -> Self {
        Gold {
            pairs: iter.into_iter().collect(),
        }
    }
}

/// `(precision, recall, F1)` from counts. Empty predictions give zeros.
pub fn f1_from_counts(tp: usize, predicted: usize, gold: usize) -> (f64, f64, f64) {
    let p = if predicted == 0 {
        0.0
    } else {
        tp as f64 / predicted as f64
    };
    let r = if gold == 0 {
        0.0
    } else {
        tp as f64 / gold as f64
    };
    let f = if predicted + gold == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (predicted + gold) as f64
    };
    (p, r, f)
}

/// Set-level precision, recall and F1; repeated predictions count once.
pub fn f1(predicted: &[ScoredPair], gold: &Gold) -> (f64, f64, f64) {
    let set: BTreeSet<(u64, u64)> = predicted.iter().map(|p| (p.src_id, p.trg_id)).collect();
    let tp = set.iter().filter(|(s, t)| gold.contains(*s, *t)).count();
    f1_from_counts(tp, set.len(), gold.len())
}

/// Fraction of gold sources whose first prediction is a gold target.
pub fn p_at_1(predicted: &[ScoredPair], gold: &Gold) -> f64 {
    let sources = gold.sources();
    if sources.is_empty() {
        return 0.0;
    }
    let mut first: BTreeMap<u64, u64> = BTreeMap::new();
    for p in predicted {
        first.entry(p.src_id).or_insert(p.trg_id);
    }
    let hits = sources
        .iter()
        .filter(|s| first.get(s).is_some_and(|t| gold.contains(**s, *t)))
        .count();
    hits as f64 / sources.len() as f64
}

/// 1-based ranks; tied values share their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Empty("need at least two scores"));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// One evaluation result. Metrics and config keep insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub task: String,
    pub metrics: Vec<(String, f64)>,
    pub config: Vec<(String, String)>,
}

impl EvalReport {
    pub fn new(task: impl Into<String>) -> Self {
        EvalReport {
            task: task.into(),
            ..Default::default()
        }
    }

    pub fn with_metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.push((name.to_owned(), value));
        self
    }

    pub fn with_config(mut self, key: &str, value: impl ToString) -> Self {
        self.config.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    /// `task=<label> key=value ...` on one line.
    pub fn to_record(&self) -> String {
        let mut line = format!("task={}", self.task);
        for (k, v) in &self.metrics {
            let _ = write!(line, " {k}={v}");
        }
        for (k, v) in &self.config {
            let _ = write!(line, " {k}={v}");
        }
        line
    }
}

/// Aligned text table over the union of metric names.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut cols: Vec<&str> = Vec::new();
    for r in reports {
        for (k, _) in &r.metrics {
            if !cols.contains(&k.as_str()) {
                cols.push(k);
            }
        }
    }
    let width = reports
        .iter()
        .map(|r| r.task.len())
        .max()
        .unwrap_or(4)
        .max(4);
    let mut out = format!("{:<width$}", "task");
    for c in &cols {
        let _ = write!(out, "  {:>10}", c);
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<width$}", r.task);
        for c in &cols {
            match r.metric(c) {
                Some(v) => {
                    let _ = write!(out, "  {:>10.4}", v);
                }
                None => {
                    let _ = write!(out, "  {:>10}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Writes the table followed by one record per report.
pub fn write_reports(path: &Path, reports: &[EvalReport]) -> Result<()> {
    std::fs::write(path, format_reports(reports)).map_err(|e| Error::io(path, e))
}

pub fn format_reports(reports: &[EvalReport]) -> String {
    let mut text = render_table(reports);
    text.push('\n');
    for r in reports {
        text.push_str(&r.to_record());
        text.push('\n');
    }
    text
}

/// Encodes a feature set and indexes the embeddings.
pub fn embed(model: &AlignmentModel, fs: &FeatureSet) -> Result<EmbeddingIndex> {
    build_index(&model.encode_set(fs)?)
}

/// Mined pairs scored and thresholded against gold at the optimal threshold.
pub fn mining_report(task: &str, pairs: &[ScoredPair], gold: &Gold) -> Result<EvalReport> {
    let (tau, _) = optimize_threshold(pairs, gold)?;
    let (p, r, f) = f1(&apply_threshold(pairs, tau), gold);
    Ok(EvalReport::new(task)
        .with_metric("precision", p)
        .with_metric("recall", r)
        .with_metric("f1", f)
        .with_metric("threshold", tau))
}

/// Encode, mine, optimize the threshold, report P/R/F1.
pub fn run_mining_eval(
    model: &AlignmentModel,
    src: &FeatureSet,
    trg: &FeatureSet,
    gold: &Gold,
    cfg: &MiningConfig,
) -> Result<EvalReport> {
    let pairs = mine_candidates(&embed(model, src)?, &embed(model, trg)?, cfg)?;
    Ok(mining_report(
        &format!("mine/{}-{}", src.language, trg.language),
        &pairs,
        gold,
    )?
    .with_config("k", cfg.k)
    .with_config("margin", format!("{:?}", cfg.margin).to_lowercase())
    .with_config("direction", format!("{:?}", cfg.direction).to_lowercase()))
}

/// Top-1 cosine retrieval accuracy.
pub fn run_retrieval_eval(
    model: &AlignmentModel,
    src: &FeatureSet,
    trg: &FeatureSet,
    gold: &Gold,
    workers: usize,
) -> Result<EvalReport> {
    let top = retrieve_top1_with_workers(&embed(model, src)?, &embed(model, trg)?, workers)?;
    Ok(
        EvalReport::new(format!("retrieve/{}-{}", src.language, trg.language))
            .with_metric("accuracy", p_at_1(&top, gold)),
    )
}

/// Cosine of each encoded pair `(a[id], b[id])` against gold similarity
/// scores, as a Spearman correlation.
pub fn run_sts_eval(
    model: &AlignmentModel,
    a: &FeatureSet,
    b: &FeatureSet,
    gold_scores: &[(u64, f64)],
) -> Result<EvalReport> {
    let ea: BTreeMap<u64, Vec<f64>> = model.encode_set(a)?.into_iter().collect();
    let eb: BTreeMap<u64, Vec<f64>> = model.encode_set(b)?.into_iter().collect();
    let mut sims = Vec::with_capacity(gold_scores.len());
    for (id, _) in gold_scores {
        let (x, y) = ea
            .get(id)
            .zip(eb.get(id))
            .ok_or_else(|| Error::invariant(format!("STS id {id} missing from features")))?;
        sims.push(crate::losses::cosine(x, y)?);
    }
    let gold: Vec<f64> = gold_scores.iter().map(|(_, s)| *s).collect();
    Ok(
        EvalReport::new(format!("sts/{}-{}", a.language, b.language))
            .with_metric("spearman", spearman(&sims, &gold)?),
    )
}

/// Reads `id<TAB>score` lines.
pub fn read_sts_gold(path: &Path) -> Result<Vec<(u64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: m.to_owned(),
        };
        let mut f = line.split('\t');
        let id = f
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("bad id"))?;
        let score = f
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("bad score"))?;
        out.push((id, score));
    }
    Ok(out)
}

/// A mining task: two feature sets and their gold alignment.
#[derive(Debug, Clone)]
pub struct MiningTask {
    pub label: String,
    pub src: FeatureSet,
    pub trg: FeatureSet,
    pub gold: Gold,
}

/// F1 of one task at its own optimal threshold and at the pivot's.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferRow {
    pub label: String,
    pub optimized_threshold: f64,
    pub optimized_f1: f64,
    pub transferred_f1: f64,
}

impl TransferRow {
    pub fn report(&self, pivot_threshold: f64) -> EvalReport {
        EvalReport::new(format!("transfer/{}", self.label))
            .with_metric("f1_optimized", self.optimized_f1)
            .with_metric("f1_transferred", self.transferred_f1)
            .with_metric("threshold_own", self.optimized_threshold)
            .with_metric("threshold_pivot", pivot_threshold)
    }
}

/// Optimizes the threshold on `pivot` and applies it to every other task.
/// Returns the pivot threshold and one row per other task.
pub fn threshold_transfer(
    model: &AlignmentModel,
    pivot: &MiningTask,
    others: &[MiningTask],
    cfg: &MiningConfig,
) -> Result<(f64, Vec<TransferRow>)> {
    if others.is_empty() {
        return Err(Error::Empty("transfer tasks"));
    }
    let mine =
        |t: &MiningTask| mine_candidates(&embed(model, &t.src)?, &embed(model, &t.trg)?, cfg);
    let (tau_pivot, _) = optimize_threshold(&mine(pivot)?, &pivot.gold)?;
    let rows = others
        .iter()
        .map(|t| {
            let pairs = mine(t)?;
            let (tau, best) = optimize_threshold(&pairs, &t.gold)?;
            Ok(TransferRow {
                label: t.label.clone(),
                optimized_threshold: tau,
                optimized_f1: best,
                transferred_f1: f1(&apply_threshold(&pairs, tau_pivot), &t.gold).2,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((tau_pivot, rows))
}

/// Training objective of an ablation cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    AdversarialOnly,
    CycleOnly,
    Full,
    Supervised,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::AdversarialOnly,
        Objective::CycleOnly,
        Objective::Full,
        Objective::Supervised,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Objective::AdversarialOnly => "adv_only",
            Objective::CycleOnly => "cycle_only",
            Objective::Full => "adv_cycle",
            Objective::Supervised => "supervised",
        }
    }

    /// `base` with this objective's mode and loss terms; seeds and schedule
    /// are kept.
    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let template = match self {
            Objective::Supervised => TrainConfig::supervised(base.seed),
            _ => TrainConfig::unsupervised(base.seed),
        };
        let mut cfg = TrainConfig {
            mode: template.mode,
            loss: if base.mode == template.mode {
                base.loss
            } else {
                template.loss
            },
            clip: if base.mode == template.mode {
                base.clip
            } else {
                template.clip
            },
            ..base.clone()
        };
        cfg.use_adversarial = matches!(self, Objective::AdversarialOnly | Objective::Full);
        cfg.use_cycle = matches!(self, Objective::CycleOnly | Objective::Full);
        cfg
    }
}

/// Layer-combination only, linear map only, both.
pub const ABLATION_FLAGS: [(&str, AblationFlags); 3] = [
    (
        "combination",
        AblationFlags {
            use_layer_combination: true,
            use_linear_map: false,
        },
    ),
    (
        "map",
        AblationFlags {
            use_layer_combination: false,
            use_linear_map: true,
        },
    ),
    (
        "both",
        AblationFlags {
            use_layer_combination: true,
            use_linear_map: true,
        },
    ),
];

/// Trains one model on `train` and reports held-out retrieval accuracy.
/// Unsupervised objectives ignore the pairing of `train`.
pub fn train_and_retrieve(
    train: &PairCorpus,
    test: &MiningTask,
    cfg: &TrainConfig,
    label: &str,
) -> Result<EvalReport> {
    let corpus = PairCorpus {
        paired: train.paired && cfg.mode == TrainingMode::Supervised,
        ..train.clone()
    };
    let init = init_model(cfg, train.source.n_layers, train.source.dim)?;
    let (model, _) = train_multipair(std::slice::from_ref(&corpus), init, cfg)?;
    let top =
        retrieve_top1_with_workers(&embed(&model, &test.src)?, &embed(&model, &test.trg)?, 1)?;
    Ok(EvalReport::new(label)
        .with_metric("accuracy", p_at_1(&top, &test.gold))
        .with_config("seed", cfg.seed)
        .with_config("steps", cfg.total_steps))
}

/// Every objective crossed with every flag setting: 12 reports, labelled
/// `ablation/<objective>/<flags>`.
pub fn ablation_suite(
    train: &PairCorpus,
    test: &MiningTask,
    base: &TrainConfig,
) -> Result<Vec<EvalReport>> {
    let mut out = Vec::with_capacity(12);
    for obj in Objective::ALL {
        for (flag_label, flags) in ABLATION_FLAGS {
            let cfg = TrainConfig {
                flags,
                ..obj.configure(base)
            };
            let label = format!("ablation/{}/{}", obj.label(), flag_label);
            out.push(train_and_retrieve(train, test, &cfg, &label)?);
        }
    }
    Ok(out)
}

/// Trains and evaluates on each single-layer view, one report per listed
/// layer, labelled `layer/<index>`.
pub fn layer_sweep(
    train: &PairCorpus,
    test: &MiningTask,
    cfg: &TrainConfig,
    layers: &[usize],
) -> Result<Vec<EvalReport>> {
    if layers.is_empty() {
        return Err(Error::Empty("layer list"));
    }
    layers
        .iter()
        .map(|&l| {
            let view = |fs: &FeatureSet| fs.select_layers(&[l]);
            let train = PairCorpus::new(view(&train.source)?, view(&train.target)?, train.paired)?;
            let test = MiningTask {
                src: view(&test.src)?,
                trg: view(&test.trg)?,
                ..test.clone()
            };
            train_and_retrieve(&train, &test, cfg, &format!("layer/{l}"))
                .map(|r| r.with_config("layer", l))
        })
        .collect()
}
