//! Training objectives.
//!
//! Every loss is a batch mean. Ranking terms use cosine similarity and are
//! therefore invariant to per-vector positive rescaling; critic terms are
//! not.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{AlignmentModel, CycleMaps, Discriminator};

/// Hyperparameters of the ranking loss `h` and of the unsupervised sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Hinge margin.
    pub alpha: f64,
    /// Negatives per anchor and direction: the hardest plus `n - 1` random.
    pub n_negatives: usize,
    /// Weight of the cycle term in the unsupervised loss.
    pub cycle_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.0,
            n_negatives: 1,
            cycle_weight: 5.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "margin must be >= 0, got {}",
                self.alpha
            )));
        }
        if self.n_negatives == 0 {
            return Err(Error::Config("at least one negative is required".into()));
        }
        if !(self.cycle_weight >= 0.0 && self.cycle_weight.is_finite()) {
            return Err(Error::Config(format!(
                "cycle weight must be >= 0, got {}",
                self.cycle_weight
            )));
        }
        Ok(())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("{} vs {} entries", a.len(), b.len())));
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rows scaled to unit length, plus the original norms. Zero rows are an
/// error.
pub(crate) fn normalize_rows(m: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms: Array1<f64> = m.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    if norms.iter().any(|&n| n == 0.0 || !n.is_finite()) {
        return Err(Error::ZeroVector);
    }
    let unit = &m / &norms.view().insert_axis(Axis(1));
    Ok((unit, norms))
}

/// Picks `n` negatives for `anchor` from a row of candidate similarities:
/// first the most similar non-positive (lowest index on ties), then `n - 1`
/// uniform draws without replacement from the remaining non-positives.
pub fn select_negatives<R: Rng + ?Sized>(
    sims: ArrayView1<f64>,
    anchor: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let size = sims.len();
    if n == 0 {
        return Err(Error::Config("at least one negative is required".into()));
    }
    if size < n + 1 || anchor >= size {
        return Err(Error::BatchTooSmall {
            size,
            needed: n + 1,
        });
    }
    let mut hardest = usize::MAX;
    let mut best = f64::NEG_INFINITY;
    for (j, &s) in sims.iter().enumerate() {
        if j != anchor && (hardest == usize::MAX || s > best) {
            hardest = j;
            best = s;
        }
    }
    let mut out = Vec::with_capacity(n);
    out.push(hardest);
    if n > 1 {
        let rest: Vec<usize> = (0..size).filter(|&j| j != anchor && j != hardest).collect();
        out.extend(sample(rng, rest.len(), n - 1).into_iter().map(|k| rest[k]));
    }
    Ok(out)
}

/// Similarities and chosen negatives of one evaluation of `h(a, b)`.
/// Shared by the loss value and its gradient so both see the same draws.
#[derive(Debug, Clone)]
pub(crate) struct RankingPlan {
    pub a_unit: Array2<f64>,
    pub b_unit: Array2<f64>,
    pub a_norm: Array1<f64>,
    pub b_norm: Array1<f64>,
    /// `sims[[i, j]] = cos(a_i, b_j)`
    pub sims: Array2<f64>,
    /// Per anchor: negatives `a_n` scored against `b_i`.
    pub neg_a: Vec<Vec<usize>>,
    /// Per anchor: negatives `b_n` scored against `a_i`.
    pub neg_b: Vec<Vec<usize>>,
    pub alpha: f64,
}

impl RankingPlan {
    pub(crate) fn new<R: Rng + ?Sized>(
        a: ArrayView2<f64>,
        b: ArrayView2<f64>,
        cfg: &LossConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::dim(format!(
                "paired batches differ: {:?} vs {:?}",
                a.dim(),
                b.dim()
            )));
        }
        let size = a.nrows();
        if size < cfg.n_negatives + 1 {
            return Err(Error::BatchTooSmall {
                size,
                needed: cfg.n_negatives + 1,
            });
        }
        let (a_unit, a_norm) = normalize_rows(a)?;
        let (b_unit, b_norm) = normalize_rows(b)?;
        let sims = a_unit.dot(&b_unit.t());
        let mut neg_a = Vec::with_capacity(size);
        let mut neg_b = Vec::with_capacity(size);
        for i in 0..size {
            neg_a.push(select_negatives(sims.column(i), i, cfg.n_negatives, rng)?);
            neg_b.push(select_negatives(sims.row(i), i, cfg.n_negatives, rng)?);
        }
        Ok(RankingPlan {
            a_unit,
            b_unit,
            a_norm,
            b_norm,
            sims,
            neg_a,
            neg_b,
            alpha: cfg.alpha,
        })
    }

    /// Visits every hinge term as `(anchor, row, col, argument)`, where the
    /// negative similarity is `sims[[row, col]]`.
    pub(crate) fn for_each_term(&self, mut f: impl FnMut(usize, usize, usize, f64)) {
        for i in 0..self.sims.nrows() {
            let pos = self.sims[[i, i]];
            for &j in &self.neg_a[i] {
                f(i, j, i, self.alpha - pos + self.sims[[j, i]]);
            }
            for &j in &self.neg_b[i] {
                f(i, i, j, self.alpha - pos + self.sims[[i, j]]);
            }
        }
    }

    pub(crate) fn value(&self) -> f64 {
        let mut total = 0.0;
        self.for_each_term(|_, _, _, arg| total += arg.max(0.0));
        total / self.sims.nrows() as f64
    }
}

/// Triplet ranking loss `h(a, b)` with hard negatives, averaged over anchors.
/// Rows of `a` and `b` with equal index are the positive pairs.
pub fn ranking_loss_h<R: Rng + ?Sized>(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<f64> {
    Ok(RankingPlan::new(a, b, cfg, rng)?.value())
}

/// `h(y_s, G F y_s) + h(F G y_t, y_t)`.
pub fn cycle_loss<R: Rng + ?Sized>(
    ys: ArrayView2<f64>,
    yt: ArrayView2<f64>,
    maps: &CycleMaps,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<f64> {
    check_cols(ys, maps.dim())?;
    check_cols(yt, maps.dim())?;
    let gfs = ys.dot(&maps.forward.t()).dot(&maps.backward.t());
    let fgt = yt.dot(&maps.backward.t()).dot(&maps.forward.t());
    let src = ranking_loss_h(ys, gfs.view(), cfg, rng)?;
    let trg = ranking_loss_h(fgt.view(), yt, cfg, rng)?;
    Ok(src + trg)
}

fn check_cols(m: ArrayView2<f64>, dim: usize) -> Result<()> {
    if m.ncols() != dim {
        return Err(Error::dim(format!(
            "expected {dim} columns, got {}",
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::Empty("batch"));
    }
    Ok(())
}

/// Critic objective `mean d(y_s) - mean d(y_t)`, minimized by the critic.
pub fn discriminator_loss(
    ys: ArrayView2<f64>,
    yt: ArrayView2<f64>,
    disc: &Discriminator,
) -> Result<f64> {
    check_cols(ys, disc.dim())?;
    check_cols(yt, disc.dim())?;
    let s = disc.score_rows(ys)?.mean().expect("nonempty");
    let t = disc.score_rows(yt)?.mean().expect("nonempty");
    Ok(s - t)
}

/// Negated critic objective, minimized by the encoder.
pub fn adversarial_loss(
    ys: ArrayView2<f64>,
    yt: ArrayView2<f64>,
    disc: &Discriminator,
) -> Result<f64> {
    Ok(-discriminator_loss(ys, yt, disc)?)
}

/// Components of one unsupervised loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnsupervisedTerms {
    pub adversarial: f64,
    pub cycle: f64,
    pub total: f64,
}

/// `L_adv + lambda * L_cycle` for a model carrying cycle maps and a critic.
pub fn unsupervised_loss<R: Rng + ?Sized>(
    ys: ArrayView2<f64>,
    yt: ArrayView2<f64>,
    model: &AlignmentModel,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<UnsupervisedTerms> {
    let disc = model
        .disc
        .as_ref()
        .ok_or_else(|| Error::invariant("unsupervised loss needs a discriminator"))?;
    let maps = model
        .cycle
        .as_ref()
        .ok_or_else(|| Error::invariant("unsupervised loss needs cycle maps"))?;
    let adversarial = adversarial_loss(ys, yt, disc)?;
    let cycle = cycle_loss(ys, yt, maps, cfg, rng)?;
    Ok(UnsupervisedTerms {
        adversarial,
        cycle,
        total: adversarial + cfg.cycle_weight * cycle,
    })
}

/// `h(y_s, y_t)` over index-aligned translations.
pub fn supervised_loss<R: Rng + ?Sized>(
    ys: ArrayView2<f64>,
    yt: ArrayView2<f64>,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<f64> {
    ranking_loss_h(ys, yt, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn cfg(alpha: f64, n: usize) -> LossConfig {
        LossConfig {
            alpha,
            n_negatives: n,
            cycle_weight: 5.0,
        }
    }

    #[test]
    fn cosine_examples() {
        assert_abs_diff_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            cosine(&[2.0, 2.0], &[1.0, 1.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn single_negative_is_hardest() {
        let sims = array![0.9, 0.1, 0.7, 0.3];
        assert_eq!(
            select_negatives(sims.view(), 0, 1, &mut rng()).unwrap(),
            vec![2]
        );
    }

    #[test]
    fn exhausting_negatives_lists_all_hardest_first() {
        let sims = array![0.2, 0.9, 0.5, 0.95, 0.1];
        let mut got = select_negatives(sims.view(), 3, 4, &mut rng()).unwrap();
        assert_eq!(got[0], 1);
        got.sort();
        assert_eq!(got, vec![0, 1, 2, 4]);
    }

    #[test]
    fn hardest_ties_break_to_lowest_index() {
        // Enumerate every anchor and every placement of a tie on a 4-batch.
        for anchor in 0..4 {
            for tie_a in 0..4 {
                for tie_b in 0..4 {
                    if tie_a == tie_b || tie_a == anchor || tie_b == anchor {
                        continue;
                    }
                    let mut sims = array![0.1, 0.2, 0.3, 0.4];
                    sims[anchor] = 2.0;
                    sims[tie_a] = 0.8;
                    sims[tie_b] = 0.8;
                    let got = select_negatives(sims.view(), anchor, 1, &mut rng()).unwrap();
                    assert_eq!(got, vec![tie_a.min(tie_b)]);
                }
            }
        }
    }

    #[test]
    fn batch_too_small_for_negatives() {
        let sims = array![1.0, 0.5];
        assert!(matches!(
            select_negatives(sims.view(), 0, 2, &mut rng()),
            Err(Error::BatchTooSmall { .. })
        ));
    }

    #[test]
    fn random_negatives_follow_seed() {
        let sims = Array1::from_iter((0..20).map(|i| (i as f64 * 0.37).sin()));
        let a = select_negatives(sims.view(), 4, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = select_negatives(sims.view(), 4, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains(&4));
        let mut uniq = a.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 5);
    }

    #[test]
    fn orthonormal_positives_give_zero_loss() {
        let e = Array2::<f64>::eye(4);
        assert_eq!(
            ranking_loss_h(e.view(), e.view(), &cfg(0.0, 1), &mut rng()).unwrap(),
            0.0
        );
    }

    #[test]
    fn hand_evaluated_ranking_loss() {
        // Two anchors in 2-D built so that, for anchor 0, sim(a,b)=0.5, the
        // hardest a_n against b_0 has 0.6 and the hardest b_n against a_0
        // has 0.1.
        let ang = |t: f64| array![t.cos(), t.sin()];
        let a0 = ang(0.0);
        let b0 = ang(0.5f64.acos());
        let a1 = ang(0.5f64.acos() - 0.6f64.acos());
        let b1 = ang(0.1f64.acos());
        let a = ndarray::stack![Axis(0), a0, a1];
        let b = ndarray::stack![Axis(0), b0, b1];
        let plan = RankingPlan::new(a.view(), b.view(), &cfg(0.2, 1), &mut rng()).unwrap();
        assert_abs_diff_eq!(plan.sims[[0, 0]], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(plan.sims[[1, 0]], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(plan.sims[[0, 1]], 0.1, epsilon = 1e-12);
        let mut anchor0 = 0.0;
        plan.for_each_term(|i, _, _, arg| {
            if i == 0 {
                anchor0 += arg.max(0.0)
            }
        });
        assert_abs_diff_eq!(anchor0, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn identical_vectors_leave_only_the_margin() {
        for n in 1..4 {
            let a = Array2::from_elem((5, 3), 1.0);
            let loss = ranking_loss_h(a.view(), a.view(), &cfg(0.4, n), &mut rng()).unwrap();
            assert_abs_diff_eq!(loss, 0.8 * n as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_identical_pairs_are_degenerate() {
        let a = array![[1.0, 2.0], [1.0, 2.0]];
        let b = array![[3.0, -1.0], [3.0, -1.0]];
        let loss = supervised_loss(a.view(), b.view(), &cfg(0.3, 1), &mut rng()).unwrap();
        assert_abs_diff_eq!(loss, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn zero_rows_rejected() {
        let a = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(matches!(
            ranking_loss_h(a.view(), a.view(), &cfg(0.0, 1), &mut rng()),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn cycle_identity_and_inverse() {
        let e = Array2::<f64>::eye(3);
        let id = CycleMaps::identity(3);
        assert_eq!(
            cycle_loss(e.view(), e.view(), &id, &cfg(0.0, 1), &mut rng()).unwrap(),
            0.0
        );

        let f = array![[2.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 4.0]];
        let g = array![[1.0, -1.0, 0.0], [-1.0, 2.0, 0.0], [0.0, 0.0, 0.25]];
        let inv = CycleMaps {
            forward: f,
            backward: g,
        };
        let loss = cycle_loss(e.view(), e.view(), &inv, &cfg(0.0, 1), &mut rng()).unwrap();
        assert_abs_diff_eq!(loss, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cycle_rotation_matches_enumeration() {
        // F rotates by +90 degrees, G = I, batch {e1, e2} on both sides.
        let e = Array2::<f64>::eye(2);
        let maps = CycleMaps {
            forward: array![[0.0, -1.0], [1.0, 0.0]],
            backward: Array2::eye(2),
        };
        // Source term: a = {e1, e2}, b = G F a = {e2, -e1}.
        //   sims[i][j] = cos(a_i, b_j): [[0, -1], [1, 0]]; positives 0.
        //   anchor 0: a_n = a_1 vs b_0 -> 1 ; b_n = b_1 vs a_0 -> -1
        //   anchor 1: a_n = a_0 vs b_1 -> -1 ; b_n = b_0 vs a_1 -> 1
        //   hinge sum = 1 + 0 + 0 + 1 = 2, mean over 2 anchors = 1.
        // Target term: a = F G b = {e2, -e1}, b = {e1, e2}.
        //   sims = [[0, 1], [-1, 0]]
        //   anchor 0: a_n = a_1 vs b_0 -> -1 ; b_n = b_1 vs a_0 -> 1
        //   anchor 1: a_n = a_0 vs b_1 -> 1 ; b_n = b_0 vs a_1 -> -1
        //   hinge sum = 0 + 1 + 1 + 0 = 2, mean = 1.
        let loss = cycle_loss(e.view(), e.view(), &maps, &cfg(0.0, 1), &mut rng()).unwrap();
        assert_abs_diff_eq!(loss, 2.0, epsilon = 1e-12);
    }

    fn linear_critic() -> Discriminator {
        // Effective linear weight w = W2 W1 = [2, 3] with all hidden units
        // active for nonnegative inputs.
        Discriminator {
            w1: array![[2.0, 0.0], [0.0, 3.0]],
            b1: array![0.0, 0.0],
            w2: array![1.0, 1.0],
            b2: 0.7,
            leaky_slope: 0.1,
        }
    }

    #[test]
    fn discriminator_loss_examples() {
        let d = linear_critic();
        let ys = array![[1.0, 0.0]];
        let yt = array![[0.0, 1.0]];
        assert_abs_diff_eq!(discriminator_loss(ys.view(), yt.view(), &d).unwrap(), -1.0);
        assert_abs_diff_eq!(adversarial_loss(ys.view(), yt.view(), &d).unwrap(), 1.0);

        let same = array![[0.3, -2.0], [1.0, 4.0]];
        assert_eq!(
            discriminator_loss(same.view(), same.view(), &d).unwrap(),
            0.0
        );
        assert_eq!(adversarial_loss(same.view(), same.view(), &d).unwrap(), 0.0);

        let z = Discriminator::zeros(2, 3);
        assert_eq!(discriminator_loss(ys.view(), yt.view(), &z).unwrap(), 0.0);
    }

    #[test]
    fn adversarial_is_exact_negation() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let d = Discriminator::init(3, 6, &mut r);
        let ys = Array2::from_shape_fn((4, 3), |(i, j)| ((i * 3 + j) as f64).sin());
        let yt = Array2::from_shape_fn((5, 3), |(i, j)| ((i + 7 * j) as f64).cos());
        let disc = discriminator_loss(ys.view(), yt.view(), &d).unwrap();
        let adv = adversarial_loss(ys.view(), yt.view(), &d).unwrap();
        assert_eq!(adv, -disc);
    }

    fn unsup_model(disc: Discriminator, maps: CycleMaps) -> AlignmentModel {
        let mut m = AlignmentModel::identity(1, disc.dim());
        m.disc = Some(disc);
        m.cycle = Some(maps);
        m
    }

    #[test]
    fn unsupervised_composition() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let disc = Discriminator::init(3, 4, &mut r);
        let maps = CycleMaps {
            forward: array![[1.0, 0.2, 0.0], [0.0, 1.0, 0.0], [0.3, 0.0, 1.0]],
            backward: Array2::eye(3),
        };
        let model = unsup_model(disc.clone(), maps);
        let ys = Array2::from_shape_fn((4, 3), |(i, j)| ((i * 3 + j) as f64 + 0.5).sin());
        let yt = Array2::from_shape_fn((4, 3), |(i, j)| ((i + 5 * j) as f64 + 0.1).cos());

        let mut c = cfg(0.2, 1);
        c.cycle_weight = 0.0;
        let t = unsupervised_loss(ys.view(), yt.view(), &model, &c, &mut rng()).unwrap();
        assert_eq!(
            t.total,
            adversarial_loss(ys.view(), yt.view(), &disc).unwrap()
        );

        c.cycle_weight = 5.0;
        let t = unsupervised_loss(ys.view(), yt.view(), &model, &c, &mut rng()).unwrap();
        assert_abs_diff_eq!(t.total, t.adversarial + 5.0 * t.cycle, epsilon = 1e-12);
    }

    #[test]
    fn unsupervised_arithmetic() {
        let terms = UnsupervisedTerms {
            adversarial: 0.2,
            cycle: 0.3,
            total: 0.2 + 5.0 * 0.3,
        };
        assert_abs_diff_eq!(terms.total, 1.7, epsilon = 1e-12);
    }

    #[test]
    fn perfect_cycle_symmetric_batches_is_zero() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let model = unsup_model(Discriminator::init(3, 4, &mut r), CycleMaps::identity(3));
        let e = Array2::<f64>::eye(3);
        let t = unsupervised_loss(e.view(), e.view(), &model, &cfg(0.0, 1), &mut rng()).unwrap();
        assert_eq!(t.total, 0.0);
    }

    /// Straight transcription of the loss definition, sharing nothing with
    /// `RankingPlan` beyond `select_negatives` and the rng stream.
    fn brute_force_h(
        a: &Array2<f64>,
        b: &Array2<f64>,
        c: &LossConfig,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let n = a.nrows();
        let sim = |x: ArrayView1<f64>, y: ArrayView1<f64>| {
            cosine(x.as_slice().unwrap(), y.as_slice().unwrap()).unwrap()
        };
        let mut total = 0.0;
        for i in 0..n {
            let pos = sim(a.row(i), b.row(i));
            let col: Array1<f64> = (0..n).map(|j| sim(a.row(j), b.row(i))).collect();
            let row: Array1<f64> = (0..n).map(|j| sim(a.row(i), b.row(j))).collect();
            for j in select_negatives(col.view(), i, c.n_negatives, rng).unwrap() {
                total += (c.alpha - pos + sim(a.row(j), b.row(i))).max(0.0);
            }
            for j in select_negatives(row.view(), i, c.n_negatives, rng).unwrap() {
                total += (c.alpha - pos + sim(a.row(i), b.row(j))).max(0.0);
            }
        }
        total / n as f64
    }

    #[test]
    fn supervised_matches_brute_force_on_random_batch() {
        let mut data = ChaCha8Rng::seed_from_u64(77);
        let a = Array2::from_shape_simple_fn((4, 5), || data.random_range(-1.0..1.0));
        let b = Array2::from_shape_simple_fn((4, 5), || data.random_range(-1.0..1.0));
        for n in 1..=3 {
            let c = cfg(0.2, n);
            let got =
                supervised_loss(a.view(), b.view(), &c, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            let want = brute_force_h(&a, &b, &c, &mut ChaCha8Rng::seed_from_u64(4));
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        fn batch(seed: u64, rows: usize, cols: usize) -> Array2<f64> {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0))
        }

        fn random_orthogonal(seed: u64, d: usize) -> Array2<f64> {
            let m = batch(seed, d, d);
            let m = nalgebra::DMatrix::from_row_slice(d, d, m.as_slice().unwrap());
            let q = m.qr().q();
            Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)])
        }

        proptest! {
            #[test]
            fn h_nonnegative_and_invariant(seed in 0u64..500, rows in 2usize..8, alpha in 0.0f64..0.5, n in 1usize..3) {
                prop_assume!(rows > n);
                let a = batch(seed, rows, 4);
                let b = batch(seed + 1000, rows, 4);
                let c = cfg(alpha, n);
                let base = ranking_loss_h(a.view(), b.view(), &c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                prop_assert!(base >= 0.0);

                let q = random_orthogonal(seed + 7, 4);
                let rotated = ranking_loss_h(a.dot(&q).view(), b.dot(&q).view(), &c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                prop_assert!((rotated - base).abs() < 1e-9);

                let scales = batch(seed + 3, rows, 1).mapv(|v| v.abs() + 0.1);
                let sa = &a * &scales;
                let sb = &b * &scales.mapv(|v| 1.0 / v);
                let rescaled = ranking_loss_h(sa.view(), sb.view(), &c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                prop_assert!((rescaled - base).abs() < 1e-9);
            }

            #[test]
            fn cycle_loss_scale_invariant(seed in 0u64..300) {
                let ys = batch(seed, 5, 3);
                let yt = batch(seed + 1, 5, 3);
                let maps = CycleMaps { forward: batch(seed + 2, 3, 3) + Array2::<f64>::eye(3), backward: Array2::eye(3) };
                let c = cfg(0.2, 2);
                let base = cycle_loss(ys.view(), yt.view(), &maps, &c, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
                let scales = batch(seed + 3, 5, 1).mapv(|v| v.abs() + 0.2);
                let scaled = cycle_loss((&ys * &scales).view(), (&yt * &scales).view(), &maps, &c, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
                prop_assert!((scaled - base).abs() < 1e-9);
            }

            #[test]
            fn zero_margin_with_dominant_positives_is_zero(seed in 0u64..300, rows in 2usize..6) {
                // Positives identical, negatives strictly less similar.
                let a = batch(seed, rows, 6) + Array2::<f64>::eye(6).slice(ndarray::s![..rows, ..]).mapv(|v| v * 10.0);
                let c = cfg(0.0, 1);
                prop_assert_eq!(ranking_loss_h(a.view(), a.view(), &c, &mut rng()).unwrap(), 0.0);
            }
        }
    }
}
