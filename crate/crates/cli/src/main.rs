//! `xlalign`: synthesize features, train alignment heads, mine and evaluate.
//!
//! Exit codes: 0 success, 1 failed sweep assertion, 2 usage, 3 I/O,
//! 4 invariant or format error.

mod config;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use xlalign::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use xlalign::eval::{
    f1, format_reports, mining_report, read_sts_gold, run_mining_eval, run_retrieval_eval,
    run_sts_eval, EvalReport,
};
use xlalign::miner::{
    apply_threshold, build_index, mine_candidates, read_gold, read_pairs, write_gold, write_pairs,
    MarginKind, MiningConfig, MiningDirection,
};
use xlalign::synth::{generate, generate_hubbed, SynthConfig};
use xlalign::trainer::{init_model, write_trace, PairCorpus, TrainConfig, Trainer};
use xlalign::{read_features, write_features, AblationFlags, FeatureSet, TrainingMode};

use config::{parse_list, Settings};

/// A command-line mistake: bad flag combination, missing value, bad config.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

const EXIT_ASSERTION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<xlalign::Error>() {
            return match e {
                xlalign::Error::Io { .. } => EXIT_IO,
                xlalign::Error::Config(_) => EXIT_USAGE,
                _ => EXIT_INVARIANT,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_INVARIANT
}

#[derive(Parser)]
#[command(
    name = "xlalign",
    version,
    about = "Cross-lingual sentence alignment over frozen encoder features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multilingual corpus with known translations.
    Synth(SynthArgs),
    /// Train an alignment head and write a checkpoint plus a loss trace.
    Train(TrainArgs),
    /// Encode two feature files and write scored candidate pairs.
    Mine(MineArgs),
    /// Score mined pairs or a checkpoint against gold.
    Eval(EvalArgs),
    /// Run an ablation, layer or threshold-transfer suite from a config file.
    Sweep(SweepArgs),
    /// Print a checkpoint header and its learned layer weights.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Hubbed,
}

#[derive(Args)]
struct SynthArgs {
    /// Base configuration.
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Generator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated language tags.
    #[arg(long)]
    languages: Option<String>,
    /// Sentences per language.
    #[arg(long)]
    n: Option<usize>,
    /// Write the first N sentences as `train.*` and the rest as `test.*`.
    #[arg(long)]
    split: Option<usize>,
    /// Base noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Comma-separated extra noise per layer.
    #[arg(long)]
    layer_noise: Option<String>,
    /// key = value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum ModeArg {
    Supervised,
    Unsupervised,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum ObjectiveArg {
    Full,
    AdvOnly,
    CycleOnly,
}

#[derive(Args)]
struct TrainArgs {
    /// Training mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Source and target feature files; repeat for round-robin multi-pair training.
    #[arg(long, num_args = 2, value_names = ["SRC", "TRG"], action = clap::ArgAction::Append)]
    pairs: Vec<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Loss trace CSV (default: <out>.loss.csv).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Encoder steps (total, including resumed ones).
    #[arg(long)]
    steps: Option<u64>,
    /// Batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Ranking margin alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// Negatives per anchor.
    #[arg(long)]
    n_neg: Option<usize>,
    /// Cycle-loss weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Critic updates per encoder update.
    #[arg(long)]
    kappa: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Critic weight-clipping bound.
    #[arg(long)]
    clip: Option<f64>,
    /// Output dimension of the linear map.
    #[arg(long)]
    d_out: Option<usize>,
    /// Critic hidden width.
    #[arg(long)]
    hidden: Option<usize>,
    /// Unsupervised objective.
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Comma-separated layer indices to keep.
    #[arg(long)]
    layers: Option<String>,
    /// Use uniform layer weights.
    #[arg(long)]
    no_layer_combination: bool,
    /// Use the identity map.
    #[arg(long)]
    no_linear_map: bool,
    /// Continue from a checkpoint that carries training state.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// key = value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MarginArg {
    Ratio,
    Absolute,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Forward,
    Backward,
    Union,
}

#[derive(Args)]
struct MiningFlags {
    /// Neighbors for candidate generation and the margin scale.
    #[arg(long)]
    k: Option<usize>,
    /// Margin scoring.
    #[arg(long, value_enum)]
    margin: Option<MarginArg>,
    /// Candidate directions.
    #[arg(long, value_enum)]
    direction: Option<DirectionArg>,
    /// Neighbor-search threads.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct MineArgs {
    /// Checkpoint.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Source-language features.
    #[arg(long)]
    features_src: Option<PathBuf>,
    /// Target-language features.
    #[arg(long)]
    features_trg: Option<PathBuf>,
    /// Scored pairs to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep only pairs scoring at least this.
    #[arg(long)]
    threshold: Option<f64>,
    /// Comma-separated layer indices to keep.
    #[arg(long)]
    layers: Option<String>,
    #[command(flatten)]
    mining: MiningFlags,
    /// key = value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum TaskArg {
    Mining,
    Retrieval,
    Sts,
}

#[derive(Args)]
struct EvalArgs {
    /// What to evaluate (default: mining).
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Scored pairs from `mine`; replaces --model for mining.
    #[arg(long)]
    mined: Option<PathBuf>,
    /// Checkpoint.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Source-language features.
    #[arg(long)]
    features_src: Option<PathBuf>,
    /// Target-language features.
    #[arg(long)]
    features_trg: Option<PathBuf>,
    /// Gold pairs (`src<TAB>trg`) or, for STS, `id<TAB>score`.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Fixed threshold instead of the F1-optimal one.
    #[arg(long)]
    threshold: Option<f64>,
    /// Comma-separated layer indices to keep.
    #[arg(long)]
    layers: Option<String>,
    #[command(flatten)]
    mining: MiningFlags,
    /// Report file (table plus key=value records).
    #[arg(long)]
    out: Option<PathBuf>,
    /// key = value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Suite description (key = value).
    #[arg(long)]
    config: PathBuf,
    /// First seed; `seeds = N` in the config runs N consecutive seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Report file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Checkpoint.
    #[arg(long)]
    model: PathBuf,
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("missing required --{flag}")))
}

fn load_features(path: &Path, layers: Option<&[usize]>) -> Result<FeatureSet> {
    let fs = read_features(path).with_context(|| format!("reading features {}", path.display()))?;
    match layers {
        Some(l) => Ok(fs.select_layers(l)?),
        None => Ok(fs),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| xlalign::Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    Ok(())
}

fn layer_list(s: &Settings, cli: Option<String>) -> Result<Option<Vec<usize>>> {
    s.pick::<String>(cli, "layers")?
        .map(|v| parse_list(&v))
        .transpose()
}

fn synth(a: SynthArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let seed = require(s.pick(a.seed, "seed")?, "seed")?;
    let out = require(s.path(a.out, "out"), "out")?;
    let preset = match s.pick::<String>(None, "preset")?.as_deref() {
        None => a.preset,
        Some("desk") => Preset::Desk,
        Some("hubbed") => Preset::Hubbed,
        Some(p) => return Err(usage(format!("unknown preset {p:?}"))),
    };
    let mut cfg = match preset {
        Preset::Desk => SynthConfig::desk(seed),
        Preset::Hubbed => SynthConfig::hubbed(seed),
    };
    if let Some(l) = s.pick::<String>(a.languages, "languages")? {
        cfg.languages = parse_list(&l)?;
    }
    if let Some(n) = s.pick(a.n, "n")? {
        cfg.n_sentences = n;
    }
    if let Some(v) = s.pick(a.sigma, "sigma")? {
        cfg.sigma = v;
    }
    if let Some(p) = s.pick::<String>(a.layer_noise, "layer-noise")? {
        cfg.layer_noise_profile = parse_list(&p)?;
    }
    let default_split = matches!(preset, Preset::Desk).then_some(SynthConfig::DESK_TRAIN);
    let split = s.pick(a.split, "split")?.or(default_split);
    s.finish()?;

    let corpus = if cfg.hub.is_some() {
        generate_hubbed(&cfg)?
    } else {
        generate(&cfg)?
    };
    fs::create_dir_all(&out).map_err(|e| xlalign::Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let parts = match split {
        Some(at) if at > 0 && at < cfg.n_sentences => {
            let (train, test) = corpus.split_at(at);
            vec![("train.", train), ("test.", test)]
        }
        Some(at) => {
            return Err(usage(format!(
                "split {at} must lie strictly inside 0..{}",
                cfg.n_sentences
            )))
        }
        None => vec![("", corpus)],
    };
    for (prefix, part) in &parts {
        for set in &part.sets {
            write_features(out.join(format!("{prefix}{}.alnf", set.language)), set)?;
        }
        write_gold(&out.join(format!("{prefix}gold.tsv")), &part.gold)?;
        if !part.hubs.is_empty() {
            let ids: Vec<String> = part.hubs.iter().map(u64::to_string).collect();
            write_text(
                &out.join(format!("{prefix}hubs.txt")),
                &(ids.join("\n") + "\n"),
            )?;
        }
    }
    eprintln!(
        "wrote {} languages to {}",
        cfg.languages.len(),
        out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let seed = require(s.pick(a.seed, "seed")?, "seed")?;
    let out = require(s.path(a.out, "out"), "out")?;
    let mode = match s.pick::<String>(None, "mode")?.as_deref() {
        _ if a.mode.is_some() => a.mode.unwrap(),
        None => return Err(usage("missing required --mode")),
        Some("supervised") => ModeArg::Supervised,
        Some("unsupervised") => ModeArg::Unsupervised,
        Some(m) => return Err(usage(format!("unknown mode {m:?}"))),
    };
    let mut cfg = match mode {
        ModeArg::Supervised => TrainConfig::supervised(seed),
        ModeArg::Unsupervised => TrainConfig::unsupervised(seed),
    };
    if let Some(v) = s.pick(a.steps, "steps")? {
        cfg.total_steps = v;
    }
    if let Some(v) = s.pick(a.batch, "batch")? {
        cfg.batch_size = v;
    }
    if let Some(v) = s.pick(a.alpha, "alpha")? {
        cfg.loss.alpha = v;
    }
    if let Some(v) = s.pick(a.n_neg, "n-neg")? {
        cfg.loss.n_negatives = v;
    }
    if let Some(v) = s.pick(a.lambda, "lambda")? {
        cfg.loss.cycle_weight = v;
    }
    if let Some(v) = s.pick(a.kappa, "kappa")? {
        cfg.kappa = v;
    }
    if let Some(v) = s.pick(a.lr, "lr")? {
        cfg.lr = v;
    }
    if let Some(v) = s.pick(a.clip, "clip")? {
        cfg.clip = Some(v);
    }
    cfg.d_out = s.pick(a.d_out, "d-out")?;
    cfg.disc_hidden = s.pick(a.hidden, "hidden")?;
    let objective = match s.pick::<String>(None, "objective")?.as_deref() {
        _ if a.objective.is_some() => a.objective.unwrap(),
        None | Some("full") => ObjectiveArg::Full,
        Some("adv-only") => ObjectiveArg::AdvOnly,
        Some("cycle-only") => ObjectiveArg::CycleOnly,
        Some(o) => return Err(usage(format!("unknown objective {o:?}"))),
    };
    if objective != ObjectiveArg::Full && mode == ModeArg::Supervised {
        return Err(usage("--objective applies to unsupervised training only"));
    }
    cfg.use_adversarial = objective != ObjectiveArg::CycleOnly;
    cfg.use_cycle = objective != ObjectiveArg::AdvOnly;
    cfg.flags = AblationFlags {
        use_layer_combination: !s.flag(a.no_layer_combination, "no-layer-combination")?,
        use_linear_map: !s.flag(a.no_linear_map, "no-linear-map")?,
    };
    let layers = layer_list(&s, a.layers)?;
    let pair_paths: Vec<PathBuf> = if a.pairs.is_empty() {
        s.all("pairs")
            .iter()
            .flat_map(|v| {
                v.split_whitespace()
                    .map(|p| s.resolve(p))
                    .collect::<Vec<_>>()
            })
            .collect()
    } else {
        s.all("pairs");
        a.pairs
    };
    let resume = s.path(a.resume, "resume");
    let trace_path = s.path(a.trace, "trace");
    s.finish()?;

    if pair_paths.is_empty() || !pair_paths.len().is_multiple_of(2) {
        return Err(usage(
            "--pairs takes a source and a target file, at least once",
        ));
    }
    let paired = mode == ModeArg::Supervised;
    let corpora = pair_paths
        .chunks(2)
        .map(|p| {
            PairCorpus::new(
                load_features(&p[0], layers.as_deref())?,
                load_features(&p[1], layers.as_deref())?,
                paired,
            )
            .with_context(|| format!("pairing {} with {}", p[0].display(), p[1].display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (l, d) = (corpora[0].source.n_layers, corpora[0].source.dim);

    let mut trainer = match resume {
        Some(path) => {
            let ck = load_checkpoint(&path)
                .with_context(|| format!("reading checkpoint {}", path.display()))?;
            let state = ck
                .state
                .ok_or_else(|| usage(format!("{} holds no training state", path.display())))?;
            Trainer::resume(ck.model, state, &cfg, &corpora)?
        }
        None => Trainer::new(init_model(&cfg, l, d)?, &cfg, &corpora)?,
    };
    let mut trace = Vec::new();
    trainer.run(&mut trace)?;
    save_checkpoint(
        &out,
        &Checkpoint {
            model: trainer.model.clone(),
            state: Some(trainer.state.clone()),
        },
    )?;
    let trace_path = trace_path.unwrap_or_else(|| {
        let mut p = out.clone().into_os_string();
        p.push(".loss.csv");
        PathBuf::from(p)
    });
    write_trace(&trace_path, &trace)?;
    if let Some(last) = trace.last() {
        eprintln!("step {} L_total {}", last.step, last.total);
    }
    Ok(())
}

fn mining_config(s: &Settings, f: MiningFlags) -> Result<MiningConfig> {
    let mut cfg = MiningConfig::default();
    if let Some(k) = s.pick(f.k, "k")? {
        cfg.k = k;
    }
    let margin = match f.margin {
        Some(m) => Some(m),
        None => match s.pick::<String>(None, "margin")?.as_deref() {
            None => None,
            Some("ratio") => Some(MarginArg::Ratio),
            Some("absolute") => Some(MarginArg::Absolute),
            Some(m) => return Err(usage(format!("unknown margin {m:?}"))),
        },
    };
    if let Some(m) = margin {
        cfg.margin = match m {
            MarginArg::Ratio => MarginKind::Ratio,
            MarginArg::Absolute => MarginKind::Absolute,
        };
    }
    let direction = match f.direction {
        Some(d) => Some(d),
        None => match s.pick::<String>(None, "direction")?.as_deref() {
            None => None,
            Some("forward") => Some(DirectionArg::Forward),
            Some("backward") => Some(DirectionArg::Backward),
            Some("union") => Some(DirectionArg::Union),
            Some(d) => return Err(usage(format!("unknown direction {d:?}"))),
        },
    };
    if let Some(d) = direction {
        cfg.direction = match d {
            DirectionArg::Forward => MiningDirection::Forward,
            DirectionArg::Backward => MiningDirection::Backward,
            DirectionArg::Union => MiningDirection::Union,
        };
    }
    if let Some(w) = s.pick(f.workers, "workers")? {
        if w == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        cfg.workers = w;
    }
    Ok(cfg)
}

fn load_model(path: &Path) -> Result<xlalign::AlignmentModel> {
    Ok(load_checkpoint(path)
        .with_context(|| format!("reading checkpoint {}", path.display()))?
        .model)
}

fn mine(a: MineArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let model = require(s.path(a.model, "model"), "model")?;
    let src = require(s.path(a.features_src, "features-src"), "features-src")?;
    let trg = require(s.path(a.features_trg, "features-trg"), "features-trg")?;
    let out = require(s.path(a.out, "out"), "out")?;
    let threshold = s.pick(a.threshold, "threshold")?;
    let layers = layer_list(&s, a.layers)?;
    let cfg = mining_config(&s, a.mining)?;
    s.finish()?;

    let model = load_model(&model)?;
    let embed = |p: &Path| -> Result<_> {
        let fs = load_features(p, layers.as_deref())?;
        Ok(build_index(&model.encode_set(&fs)?)?)
    };
    let pairs = mine_candidates(&embed(&src)?, &embed(&trg)?, &cfg)?;
    let pairs = match threshold {
        Some(t) => apply_threshold(&pairs, t),
        None => pairs,
    };
    write_pairs(&out, &pairs)?;
    eprintln!("wrote {} pairs to {}", pairs.len(), out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref())?;
    let task = match a.task {
        Some(t) => t,
        None => match s.pick::<String>(None, "task")?.as_deref() {
            None | Some("mining") => TaskArg::Mining,
            Some("retrieval") => TaskArg::Retrieval,
            Some("sts") => TaskArg::Sts,
            Some(t) => return Err(usage(format!("unknown task {t:?}"))),
        },
    };
    let mined = s.path(a.mined, "mined");
    let model = s.path(a.model, "model");
    let src = s.path(a.features_src, "features-src");
    let trg = s.path(a.features_trg, "features-trg");
    let gold_path = require(s.path(a.gold, "gold"), "gold")?;
    let threshold = s.pick(a.threshold, "threshold")?;
    let layers = layer_list(&s, a.layers)?;
    let mining = mining_config(&s, a.mining)?;
    let out = s.path(a.out, "out");
    s.finish()?;

    let report: EvalReport = if let Some(mined) = mined {
        if task != TaskArg::Mining {
            return Err(usage("--mined applies to the mining task only"));
        }
        let pairs =
            read_pairs(&mined).with_context(|| format!("reading pairs {}", mined.display()))?;
        let gold = read_gold(&gold_path)
            .with_context(|| format!("reading gold {}", gold_path.display()))?;
        match threshold {
            Some(t) => {
                let (p, r, f) = f1(&apply_threshold(&pairs, t), &gold);
                EvalReport::new("mine")
                    .with_metric("precision", p)
                    .with_metric("recall", r)
                    .with_metric("f1", f)
                    .with_metric("threshold", t)
            }
            None => mining_report("mine", &pairs, &gold)?,
        }
    } else {
        let model = load_model(&require(model, "model")?)?;
        let src = load_features(&require(src, "features-src")?, layers.as_deref())?;
        let trg = load_features(&require(trg, "features-trg")?, layers.as_deref())?;
        let gold_ctx = || format!("reading gold {}", gold_path.display());
        match task {
            TaskArg::Mining => {
                let gold = read_gold(&gold_path).with_context(gold_ctx)?;
                match threshold {
                    Some(t) => {
                        let pairs = mine_candidates(
                            &build_index(&model.encode_set(&src)?)?,
                            &build_index(&model.encode_set(&trg)?)?,
                            &mining,
                        )?;
                        let (p, r, f) = f1(&apply_threshold(&pairs, t), &gold);
                        EvalReport::new(format!("mine/{}-{}", src.language, trg.language))
                            .with_metric("precision", p)
                            .with_metric("recall", r)
                            .with_metric("f1", f)
                            .with_metric("threshold", t)
                    }
                    None => run_mining_eval(&model, &src, &trg, &gold, &mining)?,
                }
            }
            TaskArg::Retrieval => {
                let gold = read_gold(&gold_path).with_context(gold_ctx)?;
                run_retrieval_eval(&model, &src, &trg, &gold, mining.workers)?
            }
            TaskArg::Sts => {
                let scores = read_sts_gold(&gold_path).with_context(gold_ctx)?;
                run_sts_eval(&model, &src, &trg, &scores)?
            }
        }
    };
    let text = format_reports(std::slice::from_ref(&report));
    print!("{text}");
    if let Some(out) = out {
        write_text(&out, &text)?;
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<bool> {
    let s = Settings::load(Some(&a.config))?;
    let seed = require(s.pick(a.seed, "seed")?, "seed")?;
    let out = s.path(a.out, "out");
    let outcome = sweep::run(&s, seed)?;
    let mut text = String::from("# per seed\n");
    text.push_str(&format_reports(&outcome.per_seed));
    text.push_str("\n# medians\n");
    text.push_str(&format_reports(&outcome.medians));
    if !outcome.checks.is_empty() {
        text.push_str("\n# assertions\n");
        for c in &outcome.checks {
            text.push_str(c);
            text.push('\n');
        }
    }
    print!("{text}");
    if let Some(out) = out {
        write_text(&out, &text)?;
    }
    Ok(outcome.all_passed)
}

fn inspect(a: InspectArgs) -> Result<()> {
    let ck = load_checkpoint(&a.model)
        .with_context(|| format!("reading checkpoint {}", a.model.display()))?;
    let m = &ck.model;
    println!("format      ALNM v{}", xlalign::checkpoint::VERSION);
    println!(
        "mode        {}",
        match m.mode() {
            TrainingMode::Supervised => "supervised",
            TrainingMode::Unsupervised => "unsupervised",
        }
    );
    println!("layers      {}", m.n_layers());
    println!("d_in        {}", m.d_in());
    println!("d_out       {}", m.d_out());
    println!("critic      {}", m.disc.as_ref().map_or(0, |d| d.hidden()));
    println!("combination {}", m.flags.use_layer_combination);
    println!("linear_map  {}", m.flags.use_linear_map);
    match &ck.state {
        Some(st) => println!("step        {}", st.step),
        None => println!("step        -"),
    }
    for (i, w) in m.effective_weights().iter().enumerate() {
        println!("w[{i}]        {w:.6}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a).map(|_| true),
        Command::Train(a) => train(a).map(|_| true),
        Command::Mine(a) => mine(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Sweep(a) => sweep(a),
        Command::Inspect(a) => inspect(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_ASSERTION),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
