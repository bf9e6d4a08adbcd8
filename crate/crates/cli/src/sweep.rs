//! Experiment suites over the desk synthetic corpus, repeated over seeds and
//! summarized by per-cell medians.

use std::collections::BTreeMap;

use anyhow::Result;
use xlalign::eval::{
    ablation_suite, layer_sweep, mining_report, threshold_transfer, EvalReport, MiningTask,
};
use xlalign::miner::{mine_candidates, MiningConfig};
use xlalign::synth::{generate, SynthConfig};
use xlalign::trainer::{init_model, train_supervised, PairCorpus, TrainConfig};
use xlalign::TrainingMode;

use crate::config::{parse_list, Settings};
use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Suite {
    Ablation,
    Layers,
    Transfer,
}

/// `label metric op value`, checked against the median report.
#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    label: String,
    metric: String,
    op: String,
    value: f64,
}

impl Assertion {
    fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split_whitespace().collect();
        let bad = || {
            UsageError(format!(
                "assert expects `label metric op value`, got {text:?}"
            ))
        };
        let [label, metric, op, value] = parts[..] else {
            return Err(bad().into());
        };
        if !matches!(op, ">=" | "<=" | ">" | "<") {
            return Err(bad().into());
        }
        Ok(Assertion {
            label: label.to_owned(),
            metric: metric.to_owned(),
            op: op.to_owned(),
            value: value.parse().map_err(|_| bad())?,
        })
    }

    fn check(&self, reports: &[EvalReport]) -> Option<(f64, bool)> {
        let got = reports
            .iter()
            .find(|r| r.task == self.label)?
            .metric(&self.metric)?;
        let ok = match self.op.as_str() {
            ">=" => got >= self.value,
            "<=" => got <= self.value,
            ">" => got > self.value,
            _ => got < self.value,
        };
        Some((got, ok))
    }
}

pub struct SweepOutcome {
    pub per_seed: Vec<EvalReport>,
    pub medians: Vec<EvalReport>,
    /// One line per assertion.
    pub checks: Vec<String>,
    pub all_passed: bool,
}

struct Plan {
    suite: Suite,
    seeds: Vec<u64>,
    steps: Option<u64>,
    batch: Option<usize>,
    lr: Option<f64>,
    alpha: Option<f64>,
    n_neg: Option<usize>,
    lambda: Option<f64>,
    kappa: Option<usize>,
    clip: Option<Option<f64>>,
    mode: TrainingMode,
    layers: Option<Vec<usize>>,
    layer_noise: Option<Vec<f64>>,
    sigma: Option<f64>,
    pairs: usize,
    assertions: Vec<Assertion>,
}

impl Plan {
    fn from_settings(s: &Settings, seed: u64) -> Result<Self> {
        let suite = match s.pick::<String>(None, "suite")?.as_deref() {
            Some("ablation") => Suite::Ablation,
            Some("layers") => Suite::Layers,
            Some("transfer") => Suite::Transfer,
            other => {
                return Err(UsageError(format!(
                    "config key suite must be ablation, layers or transfer, got {other:?}"
                ))
                .into())
            }
        };
        let count = s.pick::<u64>(None, "seeds")?.unwrap_or(1);
        if count == 0 {
            return Err(UsageError("seeds must be at least 1".into()).into());
        }
        let clip = match s.pick::<String>(None, "clip")? {
            None => None,
            Some(v) if v == "none" => Some(None),
            Some(v) => Some(Some(
                v.parse::<f64>()
                    .map_err(|e| UsageError(format!("config key clip: {e}")))?,
            )),
        };
        let mode = match s.pick::<String>(None, "mode")?.as_deref() {
            None | Some("supervised") => TrainingMode::Supervised,
            Some("unsupervised") => TrainingMode::Unsupervised,
            Some(m) => return Err(UsageError(format!("unknown mode {m:?}")).into()),
        };
        let plan = Plan {
            suite,
            seeds: (seed..seed + count).collect(),
            steps: s.pick(None, "steps")?,
            batch: s.pick(None, "batch")?,
            lr: s.pick(None, "lr")?,
            alpha: s.pick(None, "alpha")?,
            n_neg: s.pick(None, "n-neg")?,
            lambda: s.pick(None, "lambda")?,
            kappa: s.pick(None, "kappa")?,
            clip,
            mode,
            layers: s
                .pick::<String>(None, "layers")?
                .map(|v| parse_list(&v))
                .transpose()?,
            layer_noise: s
                .pick::<String>(None, "layer-noise")?
                .map(|v| parse_list(&v))
                .transpose()?,
            sigma: s.pick(None, "sigma")?,
            pairs: s.pick(None, "pairs")?.unwrap_or(3),
            assertions: s
                .all("assert")
                .into_iter()
                .map(Assertion::parse)
                .collect::<Result<_>>()?,
        };
        Ok(plan)
    }

    fn train_config(&self, base: TrainConfig) -> TrainConfig {
        let mut c = base;
        if let Some(v) = self.steps {
            c.total_steps = v;
        }
        if let Some(v) = self.batch {
            c.batch_size = v;
        }
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.alpha {
            c.loss.alpha = v;
        }
        if let Some(v) = self.n_neg {
            c.loss.n_negatives = v;
        }
        if let Some(v) = self.lambda {
            c.loss.cycle_weight = v;
        }
        if let Some(v) = self.kappa {
            c.kappa = v;
        }
        if let Some(v) = self.clip {
            c.clip = v;
        }
        c
    }

    fn synth(
        &self,
        seed: u64,
        languages: usize,
    ) -> Result<(PairCorpus, Vec<(FeatureSets, xlalign::eval::Gold)>)> {
        let mut sc = SynthConfig::desk(seed);
        sc.languages = (0..languages).map(|i| format!("l{i}")).collect();
        if let Some(p) = &self.layer_noise {
            sc.layer_noise_profile = p.clone();
        }
        if let Some(s) = self.sigma {
            sc.sigma = s;
        }
        let corpus = generate(&sc)?;
        let (train, test) = corpus.split_at(SynthConfig::DESK_TRAIN);
        let pivot = PairCorpus::new(train.sets[0].clone(), train.sets[1].clone(), true)?;
        let held = test
            .sets
            .chunks(2)
            .map(|c| ((c[0].clone(), c[1].clone()), test.gold.clone()))
            .collect();
        Ok((pivot, held))
    }

    fn run_seed(&self, seed: u64) -> Result<Vec<EvalReport>> {
        let task = |(src, trg): FeatureSets, gold, label: String| MiningTask {
            label,
            src,
            trg,
            gold,
        };
        match self.suite {
            Suite::Ablation => {
                let (train, mut held) = self.synth(seed, 2)?;
                let (sets, gold) = held.remove(0);
                let base = self.train_config(TrainConfig::desk_unsupervised(seed));
                Ok(ablation_suite(
                    &train,
                    &task(sets, gold, "held-out".into()),
                    &base,
                )?)
            }
            Suite::Layers => {
                let (train, mut held) = self.synth(seed, 2)?;
                let (sets, gold) = held.remove(0);
                let base = match self.mode {
                    TrainingMode::Supervised => TrainConfig::supervised(seed),
                    TrainingMode::Unsupervised => TrainConfig::desk_unsupervised(seed),
                };
                let layers = self
                    .layers
                    .clone()
                    .unwrap_or_else(|| (0..train.source.n_layers).collect());
                Ok(layer_sweep(
                    &train,
                    &task(sets, gold, "held-out".into()),
                    &self.train_config(base),
                    &layers,
                )?)
            }
            Suite::Transfer => {
                if self.pairs == 0 {
                    return Err(UsageError("pairs must be at least 1".into()).into());
                }
                let (train, held) = self.synth(seed, 2 * (self.pairs + 1))?;
                let cfg = self.train_config(TrainConfig::supervised(seed));
                let init = init_model(&cfg, train.source.n_layers, train.source.dim)?;
                let (model, _) = train_supervised(&train, init, &cfg)?;
                let mut tasks: Vec<MiningTask> = held
                    .into_iter()
                    .enumerate()
                    .map(|(i, (sets, gold))| task(sets, gold, format!("pair{i}")))
                    .collect();
                let pivot = tasks.remove(0);
                let mining = MiningConfig::default();
                let (tau, rows) = threshold_transfer(&model, &pivot, &tasks, &mining)?;
                let pivot_pairs = mine_candidates(
                    &xlalign::eval::embed(&model, &pivot.src)?,
                    &xlalign::eval::embed(&model, &pivot.trg)?,
                    &mining,
                )?;
                let mut out = vec![mining_report("transfer/pivot", &pivot_pairs, &pivot.gold)?];
                out.extend(rows.iter().map(|r| {
                    r.report(tau)
                        .with_metric("drop", r.optimized_f1 - r.transferred_f1)
                }));
                Ok(out)
            }
        }
    }
}

type FeatureSets = (xlalign::FeatureSet, xlalign::FeatureSet);

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Per-label, per-metric medians; labels keep first-seen order.
pub fn medians(reports: &[EvalReport], n_seeds: usize) -> Vec<EvalReport> {
    let mut order: Vec<&str> = Vec::new();
    let mut values: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    let mut metric_order: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in reports {
        if !order.contains(&r.task.as_str()) {
            order.push(&r.task);
        }
        for (m, v) in &r.metrics {
            let names = metric_order.entry(&r.task).or_default();
            if !names.contains(&m.as_str()) {
                names.push(m);
            }
            values.entry((&r.task, m)).or_default().push(*v);
        }
    }
    order
        .into_iter()
        .map(|label| {
            let mut rep = EvalReport::new(label);
            for m in &metric_order[label] {
                rep = rep.with_metric(m, median(values[&(label, *m)].clone()));
            }
            rep.with_config("seeds", n_seeds)
        })
        .collect()
}

pub fn run(settings: &Settings, seed: u64) -> Result<SweepOutcome> {
    let plan = Plan::from_settings(settings, seed)?;
    settings.finish()?;
    let mut per_seed = Vec::new();
    for &s in &plan.seeds {
        per_seed.extend(plan.run_seed(s)?);
    }
    let medians = medians(&per_seed, plan.seeds.len());
    let mut checks = Vec::new();
    let mut all_passed = true;
    for a in &plan.assertions {
        let line = match a.check(&medians) {
            Some((got, ok)) => {
                all_passed &= ok;
                format!(
                    "{} {} {} {} {}: median {got}",
                    if ok { "PASS" } else { "FAIL" },
                    a.label,
                    a.metric,
                    a.op,
                    a.value
                )
            }
            None => {
                all_passed = false;
                format!("FAIL {} {}: no such report", a.label, a.metric)
            }
        };
        checks.push(line);
    }
    Ok(SweepOutcome {
        per_seed,
        medians,
        checks,
        all_passed,
    })
}
