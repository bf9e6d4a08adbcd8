//! Training loops: alternating critic/encoder updates for unpaired corpora,
//! ranking-loss updates for one paired corpus, and round-robin multi-pair
//! training. Every run is a deterministic function of its seed.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backprop::{gradients_with_terms, BatchInput, LossKind};
use crate::error::{Error, Result};
use crate::feature_store::FeatureSet;
use crate::losses::LossConfig;
use crate::model::{AblationFlags, AlignmentModel, LayerStack, ParamGroup, TrainingMode};
use crate::optim::{AdamConfig, AdamState};

/// Critic weight-clipping bound tuned on the desk corpus.
pub const DESK_CLIP: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainingMode,
    pub loss: LossConfig,
    /// Critic updates per encoder update.
    pub kappa: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub seed: u64,
    /// Critic weight-clipping bound.
    pub clip: Option<f64>,
    pub flags: AblationFlags,
    /// Unsupervised ablations: drop the adversarial or the cycle term.
    pub use_adversarial: bool,
    pub use_cycle: bool,
    pub disc_hidden: Option<usize>,
    /// Output dimension; defaults to the feature dimension.
    pub d_out: Option<usize>,
}

impl TrainConfig {
    /// Unsupervised setting: `n = 1`, `alpha = 0.2`, `lambda = 5`,
    /// `kappa = 2`, unconstrained critic.
    pub fn unsupervised(seed: u64) -> Self {
        TrainConfig {
            mode: TrainingMode::Unsupervised,
            loss: LossConfig {
                alpha: 0.2,
                n_negatives: 1,
                cycle_weight: 5.0,
            },
            kappa: 2,
            lr: 1e-3,
            batch_size: 128,
            total_steps: 2000,
            seed,
            clip: None,
            flags: AblationFlags::default(),
            use_adversarial: true,
            use_cycle: true,
            disc_hidden: None,
            d_out: None,
        }
    }

    /// [`unsupervised`](Self::unsupervised) with the critic clipped at
    /// [`DESK_CLIP`]; the unconstrained critic collapses the encoder on the
    /// desk corpus.
    pub fn desk_unsupervised(seed: u64) -> Self {
        TrainConfig {
            clip: Some(DESK_CLIP),
            ..Self::unsupervised(seed)
        }
    }

    /// Supervised setting: `n = 1`, `alpha = 0`.
    pub fn supervised(seed: u64) -> Self {
        TrainConfig {
            mode: TrainingMode::Supervised,
            loss: LossConfig {
                alpha: 0.0,
                n_negatives: 1,
                cycle_weight: 0.0,
            },
            clip: None,
            ..Self::unsupervised(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch size must be at least 2");
        }
        if self.loss.n_negatives >= self.batch_size {
            return bad("batch size must exceed the number of negatives");
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad("clip bound must be positive");
            }
        }
        if self.mode == TrainingMode::Unsupervised {
            if !self.use_adversarial && !self.use_cycle {
                return bad("unsupervised training needs the adversarial or the cycle term");
            }
            if self.use_adversarial && self.kappa == 0 {
                return bad("kappa must be at least 1");
            }
        }
        Ok(())
    }

    fn encoder_kind(&self) -> LossKind {
        match (self.mode, self.use_adversarial, self.use_cycle) {
            (TrainingMode::Supervised, _, _) => LossKind::Supervised,
            (_, true, true) => LossKind::Unsupervised,
            (_, true, false) => LossKind::Adversarial,
            (_, false, _) => LossKind::Cycle,
        }
    }
}

/// Fresh model for a config, drawn from its own stream of the run seed.
pub fn init_model(cfg: &TrainConfig, n_layers: usize, d_in: usize) -> Result<AlignmentModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    AlignmentModel::init(
        n_layers,
        d_in,
        cfg.d_out.unwrap_or(d_in),
        cfg.mode,
        cfg.flags,
        cfg.disc_hidden,
        &mut rng,
    )
}

/// Two corpora; `paired` means index-aligned translations.
#[derive(Debug, Clone)]
pub struct PairCorpus {
    pub source: FeatureSet,
    pub target: FeatureSet,
    pub paired: bool,
}

impl PairCorpus {
    pub fn new(source: FeatureSet, target: FeatureSet, paired: bool) -> Result<Self> {
        if source.n_layers != target.n_layers || source.dim != target.dim {
            return Err(Error::dim(format!(
                "source is {}x{}, target {}x{}",
                source.n_layers, source.dim, target.n_layers, target.dim
            )));
        }
        if paired && source.len() != target.len() {
            return Err(Error::invariant(format!(
                "paired corpus has {} source and {} target sentences",
                source.len(),
                target.len()
            )));
        }
        Ok(PairCorpus {
            source,
            target,
            paired,
        })
    }
}

/// Epoch-wise sampling without replacement. Each epoch is a fresh shuffle;
/// the incomplete final batch of an epoch is dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochSampler {
    pub(crate) batch: usize,
    pub(crate) order: Vec<usize>,
    pub(crate) cursor: usize,
}

impl EpochSampler {
    pub fn new(n: usize, batch: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("corpus"));
        }
        if batch > n {
            return Err(Error::BatchTooSmall {
                size: n,
                needed: batch,
            });
        }
        Ok(EpochSampler {
            batch,
            order: (0..n).collect(),
            // Forces a shuffle on first use.
            cursor: n,
        })
    }

    pub fn next_batch(&mut self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if self.cursor + self.batch > self.order.len() {
            self.order.sort_unstable();
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let out = self.order[self.cursor..self.cursor + self.batch].to_vec();
        self.cursor += self.batch;
        out
    }
}

/// One line of the loss trace; terms outside the objective are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub disc: Option<f64>,
    pub adv: Option<f64>,
    pub cycle: Option<f64>,
    pub total: f64,
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("step,L_disc,L_adv,L_cycle,L_total\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.step,
            opt(r.disc),
            opt(r.adv),
            opt(r.cycle),
            r.total
        );
    }
    out
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    std::fs::write(path, trace_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Everything besides the model needed to continue a run bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub step: u64,
    pub encoder_adam: AdamState,
    pub disc_adam: AdamState,
    pub rng: ChaCha8Rng,
    pub samplers: Vec<EpochSampler>,
}

struct Stacks {
    source: LayerStack,
    target: LayerStack,
}

/// A resumable training run over one or more corpora.
pub struct Trainer {
    cfg: TrainConfig,
    corpora: Vec<Stacks>,
    pub model: AlignmentModel,
    pub state: TrainingState,
}

impl Trainer {
    pub fn new(model: AlignmentModel, cfg: &TrainConfig, corpora: &[PairCorpus]) -> Result<Self> {
        cfg.validate()?;
        if corpora.is_empty() {
            return Err(Error::Empty("corpus list"));
        }
        let (l, d) = (corpora[0].source.n_layers, corpora[0].source.dim);
        let mut samplers = Vec::new();
        for c in corpora {
            if c.source.n_layers != l
                || c.source.dim != d
                || c.target.n_layers != l
                || c.target.dim != d
            {
                return Err(Error::dim("corpora disagree on layer count or dimension"));
            }
            match cfg.mode {
                TrainingMode::Supervised => {
                    if !c.paired {
                        return Err(Error::invariant(
                            "supervised training needs a paired corpus",
                        ));
                    }
                    samplers.push(EpochSampler::new(c.source.len(), cfg.batch_size)?);
                }
                TrainingMode::Unsupervised => {
                    samplers.push(EpochSampler::new(c.source.len(), cfg.batch_size)?);
                    samplers.push(EpochSampler::new(c.target.len(), cfg.batch_size)?);
                }
            }
        }
        if model.n_layers() != l || model.d_in() != d {
            return Err(Error::dim(format!(
                "model expects {}x{}, corpus is {l}x{d}",
                model.n_layers(),
                model.d_in()
            )));
        }
        if model.mode() != cfg.mode {
            return Err(Error::invariant(format!(
                "model built for {:?} training, config asks for {:?}",
                model.mode(),
                cfg.mode
            )));
        }
        let state = TrainingState {
            step: 0,
            encoder_adam: AdamState::new(),
            disc_adam: AdamState::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            samplers,
        };
        Ok(Trainer {
            cfg: cfg.clone(),
            corpora: corpora
                .iter()
                .map(|c| Stacks {
                    source: LayerStack::from_set(&c.source),
                    target: LayerStack::from_set(&c.target),
                })
                .collect(),
            model,
            state,
        })
    }

    /// Continues from a saved state.
    pub fn resume(
        model: AlignmentModel,
        state: TrainingState,
        cfg: &TrainConfig,
        corpora: &[PairCorpus],
    ) -> Result<Self> {
        let mut t = Trainer::new(model, cfg, corpora)?;
        if state.samplers.len() != t.state.samplers.len() {
            return Err(Error::invariant(
                "saved sampler count does not match the corpora",
            ));
        }
        for (saved, fresh) in state.samplers.iter().zip(&t.state.samplers) {
            if saved.order.len() != fresh.order.len() || saved.batch != fresh.batch {
                return Err(Error::invariant("saved sampler does not match the corpora"));
            }
        }
        t.state = state;
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.cfg.lr,
            ..AdamConfig::default()
        }
    }

    fn non_finite(&self, what: &str) -> Error {
        Error::NonFinite {
            step: self.state.step,
            what: what.to_owned(),
        }
    }

    /// One encoder step (preceded by `kappa` critic steps when adversarial).
    pub fn step(&mut self) -> Result<TraceRow> {
        let pair = (self.state.step % self.corpora.len() as u64) as usize;
        let adam = self.adam();
        let cfg = self.cfg.clone();
        let mut disc_trace = None;

        let draw = |st: &mut TrainingState, slot: usize| {
            let TrainingState { samplers, rng, .. } = st;
            samplers[slot].next_batch(rng)
        };
        let (src_slot, trg_slot) = match cfg.mode {
            TrainingMode::Supervised => (pair, pair),
            TrainingMode::Unsupervised => (2 * pair, 2 * pair + 1),
        };

        if cfg.mode == TrainingMode::Unsupervised && cfg.use_adversarial {
            let mut sum = 0.0;
            for _ in 0..cfg.kappa {
                let is = draw(&mut self.state, src_slot);
                let it = draw(&mut self.state, trg_slot);
                let stacks = &self.corpora[pair];
                let xs = stacks.source.rows(&is);
                let xt = stacks.target.rows(&it);
                let (terms, grads) = gradients_with_terms(
                    &self.model,
                    LossKind::Discriminator,
                    &BatchInput {
                        source: &xs,
                        target: &xt,
                    },
                    &cfg.loss,
                    &mut self.state.rng,
                )?;
                if !terms.total.is_finite() {
                    return Err(self.non_finite("critic loss"));
                }
                self.state.disc_adam.step(
                    &adam,
                    self.model.params_mut(ParamGroup::Discriminator),
                    &grads.group(ParamGroup::Discriminator),
                )?;
                if let (Some(c), Some(d)) = (cfg.clip, self.model.disc.as_mut()) {
                    d.clip(c);
                }
                sum += terms.total;
            }
            disc_trace = Some(sum / cfg.kappa as f64);
        }

        let is = draw(&mut self.state, src_slot);
        let it = if cfg.mode == TrainingMode::Supervised {
            is.clone()
        } else {
            draw(&mut self.state, trg_slot)
        };
        let stacks = &self.corpora[pair];
        let xs = stacks.source.rows(&is);
        let xt = stacks.target.rows(&it);
        let kind = cfg.encoder_kind();
        let (terms, grads) = gradients_with_terms(
            &self.model,
            kind,
            &BatchInput {
                source: &xs,
                target: &xt,
            },
            &cfg.loss,
            &mut self.state.rng,
        )?;
        // Cycle-only runs still weight the cycle term by lambda.
        let (total, grads) = if kind == LossKind::Cycle {
            let w = cfg.loss.cycle_weight;
            let mut g = grads;
            for t in [&mut g.cycle_forward, &mut g.cycle_backward, &mut g.map] {
                if let Some(t) = t.as_mut() {
                    *t *= w;
                }
            }
            for t in [&mut g.layer_logits, &mut g.bias] {
                if let Some(t) = t.as_mut() {
                    *t *= w;
                }
            }
            (w * terms.total, g)
        } else {
            (terms.total, grads)
        };
        if !total.is_finite() {
            return Err(self.non_finite("encoder loss"));
        }
        self.state.encoder_adam.step(
            &adam,
            self.model.params_mut(ParamGroup::Encoder),
            &grads.group(ParamGroup::Encoder),
        )?;
        if !self.model.all_finite() {
            return Err(self.non_finite("parameters"));
        }
        self.state.step += 1;
        Ok(TraceRow {
            step: self.state.step,
            disc: disc_trace,
            adv: terms.adversarial,
            cycle: terms.cycle,
            total,
        })
    }

    /// Runs until `total_steps`, appending one trace row per step.
    pub fn run(&mut self, trace: &mut Vec<TraceRow>) -> Result<()> {
        self.run_until(self.cfg.total_steps, trace)
    }

    pub fn run_until(&mut self, step: u64, trace: &mut Vec<TraceRow>) -> Result<()> {
        while self.state.step < step {
            trace.push(self.step()?);
        }
        Ok(())
    }
}

fn run_mode(
    corpora: &[PairCorpus],
    model: AlignmentModel,
    cfg: &TrainConfig,
    mode: TrainingMode,
) -> Result<(AlignmentModel, Vec<TraceRow>)> {
    if cfg.mode != mode {
        return Err(Error::Config(format!(
            "config mode is {:?}, expected {mode:?}",
            cfg.mode
        )));
    }
    let mut trainer = Trainer::new(model, cfg, corpora)?;
    let mut trace = Vec::new();
    trainer.run(&mut trace)?;
    Ok((trainer.model, trace))
}

/// Alternating critic and encoder updates on an unpaired corpus.
pub fn train_unsupervised(
    corpus: &PairCorpus,
    model: AlignmentModel,
    cfg: &TrainConfig,
) -> Result<(AlignmentModel, Vec<TraceRow>)> {
    run_mode(
        std::slice::from_ref(corpus),
        model,
        cfg,
        TrainingMode::Unsupervised,
    )
}

/// Ranking-loss updates on index-aligned translations.
pub fn train_supervised(
    corpus: &PairCorpus,
    model: AlignmentModel,
    cfg: &TrainConfig,
) -> Result<(AlignmentModel, Vec<TraceRow>)> {
    run_mode(
        std::slice::from_ref(corpus),
        model,
        cfg,
        TrainingMode::Supervised,
    )
}

/// Strict round-robin over corpora; all parameters are shared.
pub fn train_multipair(
    corpora: &[PairCorpus],
    model: AlignmentModel,
    cfg: &TrainConfig,
) -> Result<(AlignmentModel, Vec<TraceRow>)> {
    run_mode(corpora, model, cfg, cfg.mode)
}
