//! The trainable head over frozen encoder features.
//!
//! Encoding is `y = M (sum_l softmax(theta)_l X_l) + b` where `X_l` is the
//! token-summed hidden state of layer `l`. Unsupervised training adds two
//! linear cycle maps and a one-hidden-layer critic.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::feature_store::{FeatureSet, SentenceFeatures};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.1;

/// Numerically stable softmax of the layer logits.
pub fn layer_weights(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|t| (t - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Default critic width for a `dim`-dimensional embedding: `8 * sqrt(dim)`,
/// rounded.
pub fn default_hidden_width(dim: usize) -> usize {
    ((8.0 * (dim as f64).sqrt()).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionModule {
    pub layer_logits: Array1<f64>,
    /// `d_out x d_in`
    pub map: Array2<f64>,
    pub bias: Array1<f64>,
}

/// `forward` maps source-language encodings toward the target space (F),
/// `backward` the reverse (G). Pure linear, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleMaps {
    pub forward: Array2<f64>,
    pub backward: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    SourceToTarget,
    TargetToSource,
}

/// Critic `d(y) = w2 . leaky_relu(W1 y + b1) + b2`, no output activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
    pub leaky_slope: f64,
}

/// Ablation switches. With `use_layer_combination` off the layer weights are
/// uniform; with `use_linear_map` off the map is the identity and the bias
/// zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationFlags {
    pub use_layer_combination: bool,
    pub use_linear_map: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            use_layer_combination: true,
            use_linear_map: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingMode {
    Unsupervised,
    Supervised,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentModel {
    pub extraction: ExtractionModule,
    pub cycle: Option<CycleMaps>,
    pub disc: Option<Discriminator>,
    pub flags: AblationFlags,
}

/// Which optimizer a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// Extraction module plus cycle maps.
    Encoder,
    Discriminator,
}

impl ExtractionModule {
    /// Uniform layer weights, identity map when square (Gaussian with
    /// deviation `1/sqrt(d_in)` otherwise), zero bias.
    pub fn init<R: Rng + ?Sized>(n_layers: usize, d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let map = if d_in == d_out {
            Array2::eye(d_in)
        } else {
            let scale = 1.0 / (d_in as f64).sqrt();
            Array2::from_shape_simple_fn((d_out, d_in), || {
                rng.sample::<f64, _>(StandardNormal) * scale
            })
        };
        ExtractionModule {
            layer_logits: Array1::zeros(n_layers),
            map,
            bias: Array1::zeros(d_out),
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layer_logits.len()
    }

    pub fn d_in(&self) -> usize {
        self.map.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.map.nrows()
    }
}

impl CycleMaps {
    pub fn identity(dim: usize) -> Self {
        CycleMaps {
            forward: Array2::eye(dim),
            backward: Array2::eye(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.forward.nrows()
    }

    /// `F y` or `G y`.
    pub fn apply(&self, y: &Array1<f64>, direction: Direction) -> Result<Array1<f64>> {
        if y.len() != self.dim() {
            return Err(Error::dim(format!(
                "cycle map is {0}x{0}, vector has {1} entries",
                self.dim(),
                y.len()
            )));
        }
        Ok(match direction {
            Direction::SourceToTarget => self.forward.dot(y),
            Direction::TargetToSource => self.backward.dot(y),
        })
    }
}

/// Free-function form of [`CycleMaps::apply`].
pub fn cycle_map(maps: &CycleMaps, y: &Array1<f64>, direction: Direction) -> Result<Array1<f64>> {
    maps.apply(y, direction)
}

impl Discriminator {
    pub fn init<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        let s1 = 1.0 / (dim as f64).sqrt();
        let s2 = 1.0 / (hidden as f64).sqrt();
        let w1 = Array2::from_shape_simple_fn((hidden, dim), || {
            rng.sample::<f64, _>(StandardNormal) * s1
        });
        let w2 = Array1::from_shape_simple_fn(hidden, || rng.sample::<f64, _>(StandardNormal) * s2);
        Discriminator {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: 0.0,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Discriminator {
            w1: Array2::zeros((hidden, dim)),
            b1: Array1::zeros(hidden),
            w2: Array1::zeros(hidden),
            b2: 0.0,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn score(&self, y: &Array1<f64>) -> Result<f64> {
        if y.len() != self.dim() {
            return Err(Error::dim(format!(
                "critic expects {} inputs, got {}",
                self.dim(),
                y.len()
            )));
        }
        let slope = self.leaky_slope;
        let pre = self.w1.dot(y) + &self.b1;
        Ok(pre
            .iter()
            .zip(&self.w2)
            .map(|(&h, &w)| w * leaky(h, slope))
            .sum::<f64>()
            + self.b2)
    }

    /// Scores for every row of `ys`.
    pub fn score_rows(&self, ys: ArrayView2<f64>) -> Result<Array1<f64>> {
        if ys.ncols() != self.dim() {
            return Err(Error::dim(format!(
                "critic expects {} inputs, got {}",
                self.dim(),
                ys.ncols()
            )));
        }
        let slope = self.leaky_slope;
        let mut pre = ys.dot(&self.w1.t());
        pre += &self.b1;
        pre.mapv_inplace(|h| leaky(h, slope));
        Ok(pre.dot(&self.w2) + self.b2)
    }

    /// Clamps every parameter into `[-c, c]`.
    pub fn clip(&mut self, c: f64) {
        self.w1.mapv_inplace(|v| v.clamp(-c, c));
        self.b1.mapv_inplace(|v| v.clamp(-c, c));
        self.w2.mapv_inplace(|v| v.clamp(-c, c));
        self.b2 = self.b2.clamp(-c, c);
    }
}

/// Free-function form of [`Discriminator::score`].
pub fn discriminator_score(disc: &Discriminator, y: &Array1<f64>) -> Result<f64> {
    disc.score(y)
}

#[inline]
pub(crate) fn leaky(h: f64, slope: f64) -> f64 {
    if h > 0.0 {
        h
    } else {
        slope * h
    }
}

/// Stacked layer features for a batch: one `batch x d_in` matrix per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub layers: Vec<Array2<f64>>,
}

impl LayerStack {
    pub fn from_sentences<'a>(
        sentences: impl IntoIterator<Item = &'a SentenceFeatures>,
        n_layers: usize,
        dim: usize,
    ) -> Self {
        let rows: Vec<&SentenceFeatures> = sentences.into_iter().collect();
        let layers = (0..n_layers)
            .map(|l| {
                Array2::from_shape_fn((rows.len(), dim), |(i, j)| rows[i].layers[[l, j]] as f64)
            })
            .collect();
        LayerStack { layers }
    }

    pub fn from_set(fs: &FeatureSet) -> Self {
        Self::from_sentences(&fs.sentences, fs.n_layers, fs.dim)
    }

    /// Gathers the given rows of every layer.
    pub fn rows(&self, idx: &[usize]) -> LayerStack {
        LayerStack {
            layers: self.layers.iter().map(|m| m.select(Axis(0), idx)).collect(),
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn batch(&self) -> usize {
        self.layers.first().map_or(0, |m| m.nrows())
    }

    pub fn dim(&self) -> usize {
        self.layers.first().map_or(0, |m| m.ncols())
    }
}

impl AlignmentModel {
    /// Fresh model. Unsupervised mode carries cycle maps and a critic of width
    /// `disc_hidden` (default `8 sqrt(d_out)`); supervised mode carries
    /// neither.
    pub fn init<R: Rng + ?Sized>(
        n_layers: usize,
        d_in: usize,
        d_out: usize,
        mode: TrainingMode,
        flags: AblationFlags,
        disc_hidden: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        if n_layers == 0 || d_in == 0 || d_out == 0 {
            return Err(Error::invariant("model dimensions must be positive"));
        }
        if !flags.use_linear_map && d_in != d_out {
            return Err(Error::invariant(
                "disabling the linear map requires d_in == d_out",
            ));
        }
        let extraction = ExtractionModule::init(n_layers, d_in, d_out, rng);
        let (cycle, disc) = match mode {
            TrainingMode::Supervised => (None, None),
            TrainingMode::Unsupervised => {
                let h = disc_hidden.unwrap_or_else(|| default_hidden_width(d_out));
                (
                    Some(CycleMaps::identity(d_out)),
                    Some(Discriminator::init(d_out, h, rng)),
                )
            }
        };
        Ok(AlignmentModel {
            extraction,
            cycle,
            disc,
            flags,
        })
    }

    /// Identity head: uniform layer weights, identity map, no bias.
    pub fn identity(n_layers: usize, dim: usize) -> Self {
        AlignmentModel {
            extraction: ExtractionModule {
                layer_logits: Array1::zeros(n_layers),
                map: Array2::eye(dim),
                bias: Array1::zeros(dim),
            },
            cycle: None,
            disc: None,
            flags: AblationFlags::default(),
        }
    }

    pub fn mode(&self) -> TrainingMode {
        if self.cycle.is_some() || self.disc.is_some() {
            TrainingMode::Unsupervised
        } else {
            TrainingMode::Supervised
        }
    }

    pub fn n_layers(&self) -> usize {
        self.extraction.n_layers()
    }

    pub fn d_in(&self) -> usize {
        self.extraction.d_in()
    }

    pub fn d_out(&self) -> usize {
        if self.flags.use_linear_map {
            self.extraction.d_out()
        } else {
            self.extraction.d_in()
        }
    }

    /// Layer weights actually used by `encode`.
    pub fn effective_weights(&self) -> Array1<f64> {
        let l = self.n_layers();
        if self.flags.use_layer_combination {
            layer_weights(&self.extraction.layer_logits)
        } else {
            Array1::from_elem(l, 1.0 / l as f64)
        }
    }

    fn check_stack(&self, x: &LayerStack) -> Result<()> {
        if x.n_layers() != self.n_layers() || x.dim() != self.d_in() {
            return Err(Error::dim(format!(
                "features are {} layers x {}, model expects {} x {}",
                x.n_layers(),
                x.dim(),
                self.n_layers(),
                self.d_in()
            )));
        }
        Ok(())
    }

    /// Pooled features `sum_l w_l X_l`, one row per batch item.
    pub fn pool(&self, x: &LayerStack) -> Result<Array2<f64>> {
        self.check_stack(x)?;
        let w = self.effective_weights();
        let mut u = Array2::zeros((x.batch(), x.dim()));
        for (layer, &wl) in x.layers.iter().zip(&w) {
            u.scaled_add(wl, layer);
        }
        Ok(u)
    }

    /// Maps pooled rows through `M` and `b` (or passes them through when the
    /// map is ablated).
    pub fn project(&self, u: &Array2<f64>) -> Array2<f64> {
        if self.flags.use_linear_map {
            let mut y = u.dot(&self.extraction.map.t());
            y += &self.extraction.bias;
            y
        } else {
            u.clone()
        }
    }

    /// Encodes a batch: one embedding per row.
    pub fn encode_batch(&self, x: &LayerStack) -> Result<Array2<f64>> {
        let u = self.pool(x)?;
        Ok(self.project(&u))
    }

    pub fn encode(&self, sf: &SentenceFeatures) -> Result<Array1<f64>> {
        if sf.layers.dim() != (self.n_layers(), self.d_in()) {
            return Err(Error::dim(format!(
                "sentence {} has shape {:?}, model expects ({}, {})",
                sf.sentence_id,
                sf.layers.dim(),
                self.n_layers(),
                self.d_in()
            )));
        }
        let stack = LayerStack::from_sentences([sf], self.n_layers(), self.d_in());
        Ok(self.encode_batch(&stack)?.row(0).to_owned())
    }

    /// Encodes a whole feature set, returning `(sentence_id, embedding)`.
    pub fn encode_set(&self, fs: &FeatureSet) -> Result<Vec<(u64, Vec<f64>)>> {
        let stack = LayerStack::from_set(fs);
        let ys = self.encode_batch(&stack)?;
        Ok(fs
            .sentences
            .iter()
            .zip(ys.rows())
            .map(|(s, row)| (s.sentence_id, row.to_vec()))
            .collect())
    }

    /// Trainable tensors of a group, flattened, in declaration order.
    /// Parameters switched off by ablation flags are omitted.
    pub fn params_mut(&mut self, group: ParamGroup) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = Vec::new();
        match group {
            ParamGroup::Encoder => {
                let flags = self.flags;
                let ex = &mut self.extraction;
                if flags.use_layer_combination {
                    out.push(("layer_logits", slice_mut(&mut ex.layer_logits)));
                }
                if flags.use_linear_map {
                    out.push(("map", ex.map.as_slice_mut().expect("standard layout")));
                    out.push(("bias", slice_mut(&mut ex.bias)));
                }
                if let Some(c) = self.cycle.as_mut() {
                    out.push((
                        "cycle_forward",
                        c.forward.as_slice_mut().expect("standard layout"),
                    ));
                    out.push((
                        "cycle_backward",
                        c.backward.as_slice_mut().expect("standard layout"),
                    ));
                }
            }
            ParamGroup::Discriminator => {
                if let Some(d) = self.disc.as_mut() {
                    out.push(("disc_w1", d.w1.as_slice_mut().expect("standard layout")));
                    out.push(("disc_b1", slice_mut(&mut d.b1)));
                    out.push(("disc_w2", slice_mut(&mut d.w2)));
                    out.push(("disc_b2", std::slice::from_mut(&mut d.b2)));
                }
            }
        }
        out
    }

    /// Read-only counterpart of [`params_mut`](Self::params_mut).
    pub fn params(&self, group: ParamGroup) -> Vec<(&'static str, Vec<f64>)> {
        let mut copy = self.clone();
        copy.params_mut(group)
            .into_iter()
            .map(|(n, s)| (n, s.to_vec()))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        let mut copy = self.clone();
        [ParamGroup::Encoder, ParamGroup::Discriminator]
            .into_iter()
            .all(|g| {
                copy.params_mut(g)
                    .iter()
                    .all(|(_, s)| s.iter().all(|v| v.is_finite()))
            })
    }
}

fn slice_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sf(rows: Array2<f32>) -> SentenceFeatures {
        SentenceFeatures {
            sentence_id: 0,
            token_count: 1,
            layers: rows,
        }
    }

    fn model_with(logits: Array1<f64>, map: Array2<f64>) -> AlignmentModel {
        let d = map.nrows();
        AlignmentModel {
            extraction: ExtractionModule {
                layer_logits: logits,
                map,
                bias: Array1::zeros(d),
            },
            cycle: None,
            disc: None,
            flags: AblationFlags::default(),
        }
    }

    #[test]
    fn layer_weight_examples() {
        let w = layer_weights(&array![0.0, 0.0, 0.0, 0.0]);
        for v in &w {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-12);
        }
        let w = layer_weights(&array![3f64.ln(), 0.0]);
        assert_abs_diff_eq!(w[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.25, epsilon = 1e-12);
        let w = layer_weights(&array![5.0, 5.0]);
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn layer_weights_survive_large_logits() {
        let w = layer_weights(&array![1000.0, 0.0, -1000.0]);
        assert!(w.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert_abs_diff_eq!(w.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn encode_examples() {
        let m = model_with(array![0.0, 0.0], Array2::eye(2));
        let y = m.encode(&sf(array![[2.0, 0.0], [0.0, 2.0]])).unwrap();
        assert_abs_diff_eq!(y, array![1.0, 1.0], epsilon = 1e-12);

        let m = model_with(array![3f64.ln(), 0.0], Array2::eye(2));
        let x = sf(array![[4.0, 0.0], [0.0, 4.0]]);
        assert_abs_diff_eq!(m.encode(&x).unwrap(), array![3.0, 1.0], epsilon = 1e-12);

        let m = model_with(array![3f64.ln(), 0.0], array![[0.0, 1.0], [1.0, 0.0]]);
        assert_abs_diff_eq!(m.encode(&x).unwrap(), array![1.0, 3.0], epsilon = 1e-12);
    }

    #[test]
    fn encode_rejects_wrong_shape() {
        let m = model_with(array![0.0, 0.0], Array2::eye(2));
        assert!(matches!(
            m.encode(&sf(array![[1.0, 2.0, 3.0]])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn ablated_combination_uses_uniform_mean() {
        let mut m = model_with(array![2.0, -1.0, 0.5], array![[1.0, 2.0], [0.0, -1.0]]);
        m.extraction.bias = array![0.3, -0.2];
        m.flags.use_layer_combination = false;
        let rows = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]];
        let full = m.encode(&sf(rows.clone())).unwrap();

        let fs = FeatureSet::new("x", 3, 2, vec![sf(rows)]).unwrap();
        let avg = fs.average_layers();
        let mut single = model_with(array![0.0], m.extraction.map.clone());
        single.extraction.bias = m.extraction.bias.clone();
        let reduced = single.encode(&avg.sentences[0]).unwrap();
        assert_abs_diff_eq!(full, reduced, epsilon = 1e-6);
    }

    #[test]
    fn ablated_map_is_identity() {
        let mut m = model_with(array![0.0], array![[5.0, 1.0], [1.0, 5.0]]);
        m.extraction.bias = array![9.0, 9.0];
        m.flags.use_linear_map = false;
        let y = m.encode(&sf(array![[1.5, -2.0]])).unwrap();
        assert_abs_diff_eq!(y, array![1.5, -2.0], epsilon = 1e-12);
    }

    #[test]
    fn discriminator_examples() {
        let d = Discriminator {
            w1: Array2::eye(2),
            b1: Array1::zeros(2),
            w2: array![1.0, 1.0],
            b2: 0.0,
            leaky_slope: 0.1,
        };
        assert_abs_diff_eq!(d.score(&array![1.0, -1.0]).unwrap(), 0.9, epsilon = 1e-12);

        let z = Discriminator::zeros(3, 4);
        assert_eq!(z.score(&array![1.0, -7.0, 2.0]).unwrap(), 0.0);

        let mut c = Discriminator::zeros(3, 4);
        c.b2 = 2.5;
        assert_eq!(c.score(&array![1.0, -7.0, 2.0]).unwrap(), 2.5);

        assert!(matches!(z.score(&array![1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn score_rows_matches_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Discriminator::init(5, 7, &mut rng);
        let ys = Array2::from_shape_fn((4, 5), |(i, j)| (i as f64 - 1.5) * (j as f64 + 0.3));
        let batch = d.score_rows(ys.view()).unwrap();
        for (i, row) in ys.rows().into_iter().enumerate() {
            assert_abs_diff_eq!(batch[i], d.score(&row.to_owned()).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn cycle_map_examples() {
        let maps = CycleMaps::identity(2);
        let y = array![1.0, 2.0];
        assert_eq!(maps.apply(&y, Direction::SourceToTarget).unwrap(), y);

        let scaled = CycleMaps {
            forward: Array2::eye(2) * 2.0,
            backward: Array2::eye(2) * 0.5,
        };
        assert_eq!(
            cycle_map(&scaled, &y, Direction::SourceToTarget).unwrap(),
            array![2.0, 4.0]
        );

        let f = array![[2.0, 1.0], [1.0, 1.0]];
        let g = array![[1.0, -1.0], [-1.0, 2.0]];
        let inv = CycleMaps {
            forward: f,
            backward: g,
        };
        let there = inv.apply(&y, Direction::SourceToTarget).unwrap();
        let back = inv.apply(&there, Direction::TargetToSource).unwrap();
        assert_abs_diff_eq!(back, y, epsilon = 1e-9);

        assert!(inv.apply(&array![1.0], Direction::TargetToSource).is_err());
    }

    #[test]
    fn init_follows_mode_and_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = AlignmentModel::init(
            4,
            32,
            32,
            TrainingMode::Unsupervised,
            AblationFlags::default(),
            None,
            &mut rng,
        )
        .unwrap();
        assert_eq!(m.extraction.map, Array2::<f64>::eye(32));
        assert_eq!(m.extraction.layer_logits, Array1::<f64>::zeros(4));
        assert_eq!(m.disc.as_ref().unwrap().hidden(), 45);
        assert_eq!(m.cycle.as_ref().unwrap().forward, Array2::<f64>::eye(32));

        let s = AlignmentModel::init(
            2,
            8,
            4,
            TrainingMode::Supervised,
            AblationFlags::default(),
            None,
            &mut rng,
        )
        .unwrap();
        assert!(s.cycle.is_none() && s.disc.is_none());
        assert_eq!(s.extraction.map.dim(), (4, 8));

        let bad = AlignmentModel::init(
            2,
            8,
            4,
            TrainingMode::Supervised,
            AblationFlags {
                use_layer_combination: true,
                use_linear_map: false,
            },
            None,
            &mut rng,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn params_respect_flags() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = AlignmentModel::init(
            2,
            3,
            3,
            TrainingMode::Unsupervised,
            AblationFlags {
                use_layer_combination: false,
                use_linear_map: true,
            },
            Some(4),
            &mut rng,
        )
        .unwrap();
        let names: Vec<_> = m
            .params_mut(ParamGroup::Encoder)
            .into_iter()
            .map(|p| p.0)
            .collect();
        assert_eq!(names, ["map", "bias", "cycle_forward", "cycle_backward"]);
        let names: Vec<_> = m
            .params_mut(ParamGroup::Discriminator)
            .into_iter()
            .map(|p| p.0)
            .collect();
        assert_eq!(names, ["disc_w1", "disc_b1", "disc_w2", "disc_b2"]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_shift_invariant(logits in proptest::collection::vec(-20.0f64..20.0, 1..6), c in -50.0f64..50.0) {
                let a = Array1::from(logits);
                let w1 = layer_weights(&a);
                let w2 = layer_weights(&(&a + c));
                prop_assert!((w1.sum() - 1.0).abs() < 1e-9);
                prop_assert!(w1.iter().all(|v| *v > 0.0));
                for (x, y) in w1.iter().zip(&w2) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }

            #[test]
            fn encode_is_affine(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut m = AlignmentModel::init(3, 4, 5, TrainingMode::Supervised, AblationFlags::default(), None, &mut rng).unwrap();
                m.extraction.layer_logits = array![0.3, -1.0, 2.0];
                m.extraction.bias = array![1.0, -2.0, 0.5, 0.0, 3.0];
                let x1 = LayerStack { layers: (0..3).map(|l| Array2::from_shape_fn((1, 4), |(_, j)| (l * 4 + j) as f64 * 0.1 - 0.4)).collect() };
                let x2 = LayerStack { layers: (0..3).map(|l| Array2::from_shape_fn((1, 4), |(_, j)| ((l + j) % 3) as f64 - 1.0)).collect() };
                let mix = LayerStack { layers: x1.layers.iter().zip(&x2.layers).map(|(p, q)| p * a + q * b).collect() };
                let bias = &m.extraction.bias;
                let lhs = m.encode_batch(&mix).unwrap().row(0).to_owned() - bias;
                let rhs = (m.encode_batch(&x1).unwrap().row(0).to_owned() - bias) * a
                    + (m.encode_batch(&x2).unwrap().row(0).to_owned() - bias) * b;
                for (p, q) in lhs.iter().zip(&rhs) {
                    prop_assert!((p - q).abs() < 1e-9);
                }
            }
        }
    }
}
