#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use xlalign::backprop::{gradients, BatchInput, LossKind};
use xlalign::losses::{self, LossConfig};
use xlalign::model::{AblationFlags, AlignmentModel, LayerStack, ParamGroup, TrainingMode};

pub const FD_STEP: f64 = 1e-4;
pub const FD_REL: f64 = 1e-4;
pub const FD_ABS: f64 = 1e-7;

pub const ALL_KINDS: [LossKind; 5] = [
    LossKind::Supervised,
    LossKind::Cycle,
    LossKind::Discriminator,
    LossKind::Adversarial,
    LossKind::Unsupervised,
];

fn gaussian(rng: &mut ChaCha8Rng, shape: (usize, usize), scale: f64) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| scale * rng.sample::<f64, _>(StandardNormal))
}

/// A random model, batch and loss configuration with `d <= 16`, `batch <= 8`.
pub struct GradCase {
    pub model: AlignmentModel,
    pub source: LayerStack,
    pub target: LayerStack,
    pub cfg: LossConfig,
    pub loss_seed: u64,
}

pub fn random_case(seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = rng.random_range(1..=4);
    let d_in = rng.random_range(2..=16);
    let use_linear_map = rng.random_bool(0.8);
    let d_out = if use_linear_map && rng.random_bool(0.5) {
        rng.random_range(2..=16)
    } else {
        d_in
    };
    let flags = AblationFlags {
        use_layer_combination: rng.random_bool(0.8),
        use_linear_map,
    };
    let batch = rng.random_range(2..=8);
    let hidden = rng.random_range(1..=12);
    let mut model = AlignmentModel::init(
        l,
        d_in,
        d_out,
        TrainingMode::Unsupervised,
        flags,
        Some(hidden),
        &mut rng,
    )
    .unwrap();
    let ex = &mut model.extraction;
    ex.layer_logits = Array1::from_shape_fn(l, |_| rng.sample::<f64, _>(StandardNormal));
    ex.map = &ex.map + &gaussian(&mut rng, (d_out, d_in), 0.3);
    ex.bias = Array1::from_shape_fn(d_out, |_| 0.3 * rng.sample::<f64, _>(StandardNormal));
    let cyc = model.cycle.as_mut().unwrap();
    cyc.forward = &cyc.forward + &gaussian(&mut rng, (d_out, d_out), 0.3);
    cyc.backward = &cyc.backward + &gaussian(&mut rng, (d_out, d_out), 0.3);
    let disc = model.disc.as_mut().unwrap();
    disc.b1 = Array1::from_shape_fn(hidden, |_| 0.3 * rng.sample::<f64, _>(StandardNormal));
    disc.b2 = rng.sample(StandardNormal);
    let stack = |rng: &mut ChaCha8Rng| LayerStack {
        layers: (0..l).map(|_| gaussian(rng, (batch, d_in), 1.0)).collect(),
    };
    let source = stack(&mut rng);
    let target = stack(&mut rng);
    let cfg = LossConfig {
        alpha: rng.random_range(0.0..0.5),
        n_negatives: rng.random_range(1..batch),
        cycle_weight: rng.random_range(0.0..10.0),
    };
    GradCase {
        model,
        source,
        target,
        cfg,
        loss_seed: rng.random(),
    }
}

/// Forward value of a loss kind, recomputed from the public loss functions.
pub fn forward(model: &AlignmentModel, kind: LossKind, case: &GradCase) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(case.loss_seed);
    let ys = model.encode_batch(&case.source).unwrap();
    let yt = model.encode_batch(&case.target).unwrap();
    let disc = model.disc.as_ref().unwrap();
    match kind {
        LossKind::Supervised => {
            losses::supervised_loss(ys.view(), yt.view(), &case.cfg, &mut rng).unwrap()
        }
        LossKind::Cycle => losses::cycle_loss(
            ys.view(),
            yt.view(),
            model.cycle.as_ref().unwrap(),
            &case.cfg,
            &mut rng,
        )
        .unwrap(),
        LossKind::Discriminator => losses::discriminator_loss(ys.view(), yt.view(), disc).unwrap(),
        LossKind::Adversarial => losses::adversarial_loss(ys.view(), yt.view(), disc).unwrap(),
        LossKind::Unsupervised => {
            losses::unsupervised_loss(ys.view(), yt.view(), model, &case.cfg, &mut rng)
                .unwrap()
                .total
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FdReport {
    pub checked: usize,
    pub failures: usize,
    pub worst_rel: f64,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= FD_ABS || (a - b).abs() <= FD_REL * a.abs().max(b.abs())
}

/// Compares every analytic gradient entry of `kind` with central differences.
pub fn check_case(kind: LossKind, case: &GradCase) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(case.loss_seed);
    let batch = BatchInput {
        source: &case.source,
        target: &case.target,
    };
    let (value, grads) = gradients(&case.model, kind, &batch, &case.cfg, &mut rng).unwrap();
    let reference = forward(&case.model, kind, case);
    let mut report = FdReport::default();
    if !close(value, reference) {
        report.failures += 1;
    }
    for group in [ParamGroup::Encoder, ParamGroup::Discriminator] {
        for (name, analytic) in grads.group(group) {
            for (idx, &a) in analytic.iter().enumerate() {
                let probe = |delta: f64| {
                    let mut m = case.model.clone();
                    let mut params = m.params_mut(group);
                    let slot = params.iter_mut().find(|(n, _)| *n == name).unwrap();
                    slot.1[idx] += delta;
                    drop(params);
                    forward(&m, kind, case)
                };
                let fd = (probe(FD_STEP) - probe(-FD_STEP)) / (2.0 * FD_STEP);
                report.checked += 1;
                let scale = a.abs().max(fd.abs());
                if scale > FD_ABS {
                    report.worst_rel = report.worst_rel.max((a - fd).abs() / scale);
                }
                if !close(a, fd) {
                    report.failures += 1;
                    eprintln!("{kind:?} {name}[{idx}]: analytic {a:.9e} fd {fd:.9e}");
                }
            }
        }
    }
    report
}
