//! Reverse-mode gradients of every training objective, written out by hand
//! for the fixed architecture in [`crate::model`].
//!
//! Subgradient convention: a hinge with argument exactly zero and a leaky
//! unit with pre-activation exactly zero both take the inactive branch.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::losses::{LossConfig, RankingPlan};
use crate::model::{AlignmentModel, Discriminator, LayerStack, ParamGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `h(y_s, y_t)` on aligned pairs.
    Supervised,
    /// `h(y_s, G F y_s) + h(F G y_t, y_t)`.
    Cycle,
    /// Critic objective; gradients for the critic only.
    Discriminator,
    /// Negated critic objective; gradients for the extraction module only.
    Adversarial,
    /// `L_adv + lambda L_cycle`; gradients for extraction and cycle maps.
    Unsupervised,
}

/// Gradient record. Each `Some` tensor has exactly the shape of the
/// parameter it belongs to; parameters outside the loss or switched off by
/// ablation flags are `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub layer_logits: Option<Array1<f64>>,
    pub map: Option<Array2<f64>>,
    pub bias: Option<Array1<f64>>,
    pub cycle_forward: Option<Array2<f64>>,
    pub cycle_backward: Option<Array2<f64>>,
    pub disc_w1: Option<Array2<f64>>,
    pub disc_b1: Option<Array1<f64>>,
    pub disc_w2: Option<Array1<f64>>,
    pub disc_b2: Option<f64>,
}

impl Gradients {
    /// Flattened tensors of one group, in the order of
    /// [`AlignmentModel::params_mut`].
    pub fn group(&self, group: ParamGroup) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = Vec::new();
        match group {
            ParamGroup::Encoder => {
                if let Some(g) = &self.layer_logits {
                    out.push(("layer_logits", g.as_slice().expect("standard layout")));
                }
                if let Some(g) = &self.map {
                    out.push(("map", g.as_slice().expect("standard layout")));
                }
                if let Some(g) = &self.bias {
                    out.push(("bias", g.as_slice().expect("standard layout")));
                }
                if let Some(g) = &self.cycle_forward {
                    out.push(("cycle_forward", g.as_slice().expect("standard layout")));
                }
                if let Some(g) = &self.cycle_backward {
                    out.push(("cycle_backward", g.as_slice().expect("standard layout")));
                }
            }
            ParamGroup::Discriminator => {
                if let Some(g) = &self.disc_w1 {
                    out.push(("disc_w1", g.as_slice().expect("standard layout")));
                }
                if let Some(g) = &self.disc_b1 {
                    out.push(("disc_b1", g.as_slice().expect("standard layout")));
                }
                if let Some(g) = &self.disc_w2 {
                    out.push(("disc_w2", g.as_slice().expect("standard layout")));
                }
                if let Some(g) = &self.disc_b2 {
                    out.push(("disc_b2", std::slice::from_ref(g)));
                }
            }
        }
        out
    }

    pub fn all_zero(&self) -> bool {
        [ParamGroup::Encoder, ParamGroup::Discriminator]
            .into_iter()
            .all(|g| {
                self.group(g)
                    .iter()
                    .all(|(_, s)| s.iter().all(|&v| v == 0.0))
            })
    }
}

/// Inputs of one gradient evaluation. For supervised losses the two sides
/// are index-aligned translations; otherwise they are independent samples.
#[derive(Debug, Clone)]
pub struct BatchInput<'a> {
    pub source: &'a LayerStack,
    pub target: &'a LayerStack,
}

/// Forward cache of one encoded side.
struct Encoded {
    weights: Array1<f64>,
    pooled: Array2<f64>,
    out: Array2<f64>,
}

fn encode(model: &AlignmentModel, x: &LayerStack) -> Result<Encoded> {
    let pooled = model.pool(x)?;
    let out = model.project(&pooled);
    Ok(Encoded {
        weights: model.effective_weights(),
        pooled,
        out,
    })
}

/// Accumulates extraction-module gradients for `dL/dY` on one encoded side.
fn backward_extraction(
    model: &AlignmentModel,
    x: &LayerStack,
    enc: &Encoded,
    d_out: &Array2<f64>,
    grads: &mut Gradients,
) {
    let flags = model.flags;
    let d_pooled = if flags.use_linear_map {
        let map = grads
            .map
            .get_or_insert_with(|| Array2::zeros(model.extraction.map.dim()));
        *map += &d_out.t().dot(&enc.pooled);
        let bias = grads
            .bias
            .get_or_insert_with(|| Array1::zeros(model.extraction.bias.len()));
        *bias += &d_out.sum_axis(Axis(0));
        d_out.dot(&model.extraction.map)
    } else {
        d_out.clone()
    };
    if flags.use_layer_combination {
        let dw: Array1<f64> = x.layers.iter().map(|xl| (xl * &d_pooled).sum()).collect();
        let w = &enc.weights;
        let inner = w.dot(&dw);
        let dtheta = w * &(dw - inner);
        let slot = grads
            .layer_logits
            .get_or_insert_with(|| Array1::zeros(w.len()));
        *slot += &dtheta;
    }
}

/// Gradient of `h(a, b)` with respect to both inputs.
fn ranking_backward(plan: &RankingPlan) -> (Array2<f64>, Array2<f64>) {
    let n = plan.sims.nrows();
    let inv = 1.0 / n as f64;
    let mut d_sims = Array2::<f64>::zeros((n, n));
    plan.for_each_term(|i, r, c, arg| {
        if arg > 0.0 {
            d_sims[[i, i]] -= inv;
            d_sims[[r, c]] += inv;
        }
    });
    // S = A_hat B_hat^T with A_hat = A / |A| row-wise.
    let pa = d_sims.dot(&plan.b_unit);
    let pb = d_sims.t().dot(&plan.a_unit);
    let ca = (&d_sims * &plan.sims).sum_axis(Axis(1));
    let cb = (&d_sims * &plan.sims).sum_axis(Axis(0));
    let da =
        (pa - &plan.a_unit * &ca.insert_axis(Axis(1))) / plan.a_norm.view().insert_axis(Axis(1));
    let db =
        (pb - &plan.b_unit * &cb.insert_axis(Axis(1))) / plan.b_norm.view().insert_axis(Axis(1));
    (da, db)
}

/// Critic forward/backward on a batch: returns `d mean(d(Y)) / dY` and
/// adds `coef * d mean(d(Y)) / d params` into `grads` when `want_params`.
fn critic_backward(
    disc: &Discriminator,
    ys: ArrayView2<f64>,
    coef: f64,
    want_params: bool,
    grads: &mut Gradients,
) -> Array2<f64> {
    let n = ys.nrows() as f64;
    let slope = disc.leaky_slope;
    let mut pre = ys.dot(&disc.w1.t());
    pre += &disc.b1;
    let act = pre.mapv(|h| if h > 0.0 { h } else { slope * h });
    let deriv = pre.mapv(|h| if h > 0.0 { 1.0 } else { slope });
    // d mean(score) / d pre = (1/n) w2 * leaky'(pre)
    let d_pre = &deriv * &disc.w2 * (1.0 / n);
    if want_params {
        let w2 = grads
            .disc_w2
            .get_or_insert_with(|| Array1::zeros(disc.hidden()));
        w2.scaled_add(coef, &act.mean_axis(Axis(0)).expect("nonempty"));
        let b1 = grads
            .disc_b1
            .get_or_insert_with(|| Array1::zeros(disc.hidden()));
        b1.scaled_add(coef, &d_pre.sum_axis(Axis(0)));
        let w1 = grads
            .disc_w1
            .get_or_insert_with(|| Array2::zeros(disc.w1.dim()));
        w1.scaled_add(coef, &d_pre.t().dot(&ys));
        // The mean of a constant bias is the bias itself.
        *grads.disc_b2.get_or_insert(0.0) += coef;
    }
    d_pre.dot(&disc.w1)
}

/// Loss components of one evaluation; terms outside the loss are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub adversarial: Option<f64>,
    pub cycle: Option<f64>,
    pub total: f64,
}

/// Loss value and exact gradients for one batch.
///
/// The rng is consumed exactly as by the forward functions in
/// [`crate::losses`], so a given seed yields the same negatives on both
/// paths.
pub fn gradients<R: Rng + ?Sized>(
    model: &AlignmentModel,
    kind: LossKind,
    batch: &BatchInput<'_>,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    let (terms, grads) = gradients_with_terms(model, kind, batch, cfg, rng)?;
    Ok((terms.total, grads))
}

/// [`gradients`] with the individual loss terms.
pub fn gradients_with_terms<R: Rng + ?Sized>(
    model: &AlignmentModel,
    kind: LossKind,
    batch: &BatchInput<'_>,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<(LossTerms, Gradients)> {
    if batch.source.batch() == 0 || batch.target.batch() == 0 {
        return Err(Error::Empty("batch"));
    }
    let src = encode(model, batch.source)?;
    let trg = encode(model, batch.target)?;
    let mut grads = Gradients::default();
    let mut d_src = Array2::<f64>::zeros(src.out.dim());
    let mut d_trg = Array2::<f64>::zeros(trg.out.dim());
    let only = |total| LossTerms {
        adversarial: None,
        cycle: None,
        total,
    };

    let terms = match kind {
        LossKind::Supervised => {
            let plan = RankingPlan::new(src.out.view(), trg.out.view(), cfg, rng)?;
            let (da, db) = ranking_backward(&plan);
            d_src += &da;
            d_trg += &db;
            only(plan.value())
        }
        LossKind::Cycle => {
            let c = cycle_backward(
                model, &src.out, &trg.out, 1.0, cfg, rng, &mut grads, &mut d_src, &mut d_trg,
            )?;
            LossTerms {
                cycle: Some(c),
                ..only(c)
            }
        }
        LossKind::Discriminator => {
            let disc = require_disc(model)?;
            let s = disc.score_rows(src.out.view())?.mean().expect("nonempty");
            let t = disc.score_rows(trg.out.view())?.mean().expect("nonempty");
            critic_backward(disc, src.out.view(), 1.0, true, &mut grads);
            critic_backward(disc, trg.out.view(), -1.0, true, &mut grads);
            // Both means carry the bias, so it cancels exactly.
            grads.disc_b2 = Some(0.0);
            return Ok((only(s - t), grads));
        }
        LossKind::Adversarial => {
            let a = adversarial_backward(model, &src.out, &trg.out, &mut d_src, &mut d_trg)?;
            LossTerms {
                adversarial: Some(a),
                ..only(a)
            }
        }
        LossKind::Unsupervised => {
            let adv = adversarial_backward(model, &src.out, &trg.out, &mut d_src, &mut d_trg)?;
            let cyc = cycle_backward(
                model,
                &src.out,
                &trg.out,
                cfg.cycle_weight,
                cfg,
                rng,
                &mut grads,
                &mut d_src,
                &mut d_trg,
            )?;
            LossTerms {
                adversarial: Some(adv),
                cycle: Some(cyc),
                total: adv + cfg.cycle_weight * cyc,
            }
        }
    };

    backward_extraction(model, batch.source, &src, &d_src, &mut grads);
    backward_extraction(model, batch.target, &trg, &d_trg, &mut grads);
    Ok((terms, grads))
}

fn require_disc(model: &AlignmentModel) -> Result<&Discriminator> {
    model
        .disc
        .as_ref()
        .ok_or_else(|| Error::invariant("loss needs a discriminator"))
}

fn adversarial_backward(
    model: &AlignmentModel,
    ys: &Array2<f64>,
    yt: &Array2<f64>,
    d_src: &mut Array2<f64>,
    d_trg: &mut Array2<f64>,
) -> Result<f64> {
    let disc = require_disc(model)?;
    let s = disc.score_rows(ys.view())?.mean().expect("nonempty");
    let t = disc.score_rows(yt.view())?.mean().expect("nonempty");
    let mut scratch = Gradients::default();
    // L_adv = mean d(y_t) - mean d(y_s)
    *d_src -= &critic_backward(disc, ys.view(), 0.0, false, &mut scratch);
    *d_trg += &critic_backward(disc, yt.view(), 0.0, false, &mut scratch);
    Ok(t - s)
}

#[allow(clippy::too_many_arguments)]
fn cycle_backward<R: Rng + ?Sized>(
    model: &AlignmentModel,
    ys: &Array2<f64>,
    yt: &Array2<f64>,
    weight: f64,
    cfg: &LossConfig,
    rng: &mut R,
    grads: &mut Gradients,
    d_src: &mut Array2<f64>,
    d_trg: &mut Array2<f64>,
) -> Result<f64> {
    let maps = model
        .cycle
        .as_ref()
        .ok_or_else(|| Error::invariant("loss needs cycle maps"))?;
    let (f, g) = (&maps.forward, &maps.backward);

    // Source round trip: h(Y_s, G F Y_s).
    let fy = ys.dot(&f.t());
    let gfy = fy.dot(&g.t());
    let plan_s = RankingPlan::new(ys.view(), gfy.view(), cfg, rng)?;
    // Target round trip: h(F G Y_t, Y_t).
    let gy = yt.dot(&g.t());
    let fgy = gy.dot(&f.t());
    let plan_t = RankingPlan::new(fgy.view(), yt.view(), cfg, rng)?;
    let value = plan_s.value() + plan_t.value();

    let (da_s, d_gfy) = ranking_backward(&plan_s);
    let (d_fgy, db_t) = ranking_backward(&plan_t);
    let (da_s, d_gfy, d_fgy, db_t) = (da_s * weight, d_gfy * weight, d_fgy * weight, db_t * weight);

    // Row convention: Z = X W^T gives dX = dZ W and dW = dZ^T X.
    let d_fy = d_gfy.dot(g);
    let mut dg = d_gfy.t().dot(&fy);
    let mut df = d_fy.t().dot(ys);
    *d_src += &da_s;
    *d_src += &d_fy.dot(f);

    let d_gy = d_fgy.dot(f);
    df += &d_fgy.t().dot(&gy);
    dg += &d_gy.t().dot(yt);
    *d_trg += &db_t;
    *d_trg += &d_gy.dot(g);

    *grads
        .cycle_forward
        .get_or_insert_with(|| Array2::zeros(f.dim())) += &df;
    *grads
        .cycle_backward
        .get_or_insert_with(|| Array2::zeros(g.dim())) += &dg;
    Ok(value)
}
