//! Synthetic multilingual features with known translations.
//!
//! Sentence `i` in language `g` is, before per-layer noise,
//!
//! ```text
//! v = R [ z_i ; beta A_g z_i + mu_g + nu P_g e_gi ]
//! ```
//!
//! with `z_i` shared latent content, `R` a fixed random rotation spreading
//! both blocks over all `d` coordinates, `A_g` a language transform of the
//! content, `mu_g` a language offset and `P_g e_gi` per-sentence nuisance in
//! a rank-`r` language subspace. Layer `l` adds `(sigma + profile[l])`
//! isotropic Gaussian noise. Sentence ids are positions, so gold pairs are
//! `(i, i)` between any two languages.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::eval::Gold;
use crate::feature_store::{FeatureSet, SentenceFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransformKind {
    #[default]
    Orthogonal,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubConfig {
    pub count: usize,
    /// Convex weight of the centroid: 0 leaves hubs untouched, 1 replaces
    /// them by the centroid.
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub latent_dim: usize,
    pub d: usize,
    pub n_layers: usize,
    pub languages: Vec<String>,
    pub n_sentences: usize,
    pub sigma: f64,
    pub transform_kind: TransformKind,
    pub layer_noise_profile: Vec<f64>,
    pub hub: Option<HubConfig>,
    pub seed: u64,
    /// `beta`: weight of the language transform of the content.
    pub transform_scale: f64,
    /// Standard deviation of each language offset coordinate.
    pub offset_scale: f64,
    /// Standard deviation of an offset component common to all languages.
    pub shared_offset_scale: f64,
    /// `nu`: standard deviation of the nuisance coordinates.
    pub nuisance_scale: f64,
    pub nuisance_rank: usize,
    /// Draw `A`, `mu` and `P` once and reuse them for every language.
    pub shared_transform: bool,
}

impl SynthConfig {
    /// Seconds-scale corpus: 2000 training plus 500 held-out sentences.
    pub fn desk(seed: u64) -> Self {
        SynthConfig {
            latent_dim: 16,
            d: 32,
            n_layers: 4,
            languages: vec!["s".into(), "t".into()],
            n_sentences: 2500,
            sigma: 0.01,
            transform_kind: TransformKind::Orthogonal,
            layer_noise_profile: vec![0.0; 4],
            hub: None,
            seed,
            transform_scale: 0.0,
            offset_scale: 0.0,
            shared_offset_scale: 0.0,
            nuisance_scale: 2.0,
            nuisance_rank: 8,
            shared_transform: false,
        }
    }

    pub const DESK_TRAIN: usize = 2000;

    /// Desk geometry at 200 sentences with 5 hubs pulled at 0.9 and a shared
    /// offset, so the common centroid sits away from the origin and pulled
    /// vectors become cosine hubs across languages.
    pub fn hubbed(seed: u64) -> Self {
        SynthConfig {
            n_sentences: 200,
            hub: Some(HubConfig {
                count: 5,
                strength: 0.9,
            }),
            shared_offset_scale: 1.0,
            ..Self::desk(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_dim == 0 || self.latent_dim > self.d {
            return bad(format!(
                "latent_dim must be in 1..={}, got {}",
                self.d, self.latent_dim
            ));
        }
        if self.n_layers == 0 {
            return bad("n_layers must be positive".into());
        }
        if self.layer_noise_profile.len() != self.n_layers {
            return bad(format!(
                "noise profile has {} entries for {} layers",
                self.layer_noise_profile.len(),
                self.n_layers
            ));
        }
        if self.languages.is_empty() {
            return bad("at least one language is required".into());
        }
        for (i, a) in self.languages.iter().enumerate() {
            if self.languages[..i].contains(a) {
                return bad(format!("language {a} listed twice"));
            }
        }
        if self.nuisance_rank > self.d - self.latent_dim {
            return bad(format!(
                "nuisance rank {} exceeds the {} free dimensions",
                self.nuisance_rank,
                self.d - self.latent_dim
            ));
        }
        let scales = [
            self.sigma,
            self.transform_scale,
            self.offset_scale,
            self.shared_offset_scale,
            self.nuisance_scale,
        ];
        if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0))
            || self
                .layer_noise_profile
                .iter()
                .any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return bad("noise and scale parameters must be finite and >= 0".into());
        }
        if let Some(h) = self.hub {
            if h.count >= self.n_sentences {
                return bad(format!(
                    "hub count {} must be below the sentence count {}",
                    h.count, self.n_sentences
                ));
            }
            if !(0.0..=1.0).contains(&h.strength) {
                return bad(format!("hub strength {} outside [0, 1]", h.strength));
            }
        }
        Ok(())
    }
}

/// One feature set per language plus the shared gold bijection.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub sets: Vec<FeatureSet>,
    /// Identity pairs `(i, i)` over all sentence ids.
    pub gold: Gold,
    /// Ids of sentences pulled toward the centroid.
    pub hubs: Vec<u64>,
}

impl SynthCorpus {
    pub fn language(&self, tag: &str) -> Option<&FeatureSet> {
        self.sets.iter().find(|s| s.language == tag)
    }

    /// Splits every language at position `at`; gold and hubs follow.
    pub fn split_at(&self, at: usize) -> (SynthCorpus, SynthCorpus) {
        let mut head = Vec::new();
        let mut tail = Vec::new();
        for s in &self.sets {
            let (a, b) = s.split_at(at);
            head.push(a);
            tail.push(b);
        }
        let part = |sets: Vec<FeatureSet>| {
            let ids: std::collections::BTreeSet<u64> = sets
                .first()
                .map(|s| s.ids().into_iter().collect())
                .unwrap_or_default();
            SynthCorpus {
                gold: self.gold.iter().filter(|(s, _)| ids.contains(s)).collect(),
                hubs: self
                    .hubs
                    .iter()
                    .copied()
                    .filter(|h| ids.contains(h))
                    .collect(),
                sets,
            }
        };
        (part(head), part(tail))
    }
}

/// 64-bit FNV-1a; selects a stable per-language stream.
fn stream_id(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

const TRANSFORM_STREAM: u64 = u64::MAX;
const HUB_STREAM: u64 = u64::MAX - 1;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

/// `rows x cols` matrix with orthonormal columns (or rows, when wide), from
/// the QR factorization of a Gaussian matrix with a sign-fixed diagonal.
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let g = gaussian(rng, rows, cols, 1.0);
    let tall = rows >= cols;
    let (r, c) = if tall { (rows, cols) } else { (cols, rows) };
    let m = DMatrix::from_fn(r, c, |i, j| if tall { g[[i, j]] } else { g[[j, i]] });
    let qr = m.qr();
    let (q, rr) = (qr.q(), qr.r());
    let mut out = Array2::zeros((r, c));
    for j in 0..c {
        let sign = if rr[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..r {
            out[[i, j]] = sign * q[(i, j)];
        }
    }
    if tall {
        out
    } else {
        out.reversed_axes().as_standard_layout().to_owned()
    }
}

struct LanguageTransform {
    a: Array2<f64>,
    mu: Array1<f64>,
    p: Array2<f64>,
}

fn draw_transform<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    rng: &mut R,
    shared_mu: &Array1<f64>,
) -> LanguageTransform {
    let k = cfg.latent_dim;
    let m = cfg.d - k;
    let a = match cfg.transform_kind {
        TransformKind::Orthogonal => random_orthonormal(rng, m, k),
        TransformKind::General => gaussian(rng, m, k, 1.0 / (k as f64).sqrt()),
    };
    let own = Array1::from_shape_simple_fn(m, || {
        cfg.offset_scale * rng.sample::<f64, _>(StandardNormal)
    });
    let p = random_orthonormal(rng, m, cfg.nuisance_rank);
    LanguageTransform {
        a,
        mu: own + shared_mu,
        p,
    }
}

/// Draws a corpus. Hub settings are ignored; see [`generate_hubbed`].
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let (k, d, n, l) = (cfg.latent_dim, cfg.d, cfg.n_sentences, cfg.n_layers);
    let m = d - k;
    let mut shared = rng_for(cfg.seed, 0);
    let rotation = random_orthonormal(&mut shared, d, d);
    let z = gaussian(&mut shared, n, k, 1.0);
    let token_counts: Vec<u32> = (0..n).map(|_| shared.random_range(5..=40)).collect();
    let shared_mu = Array1::from_shape_simple_fn(m, || {
        cfg.shared_offset_scale * shared.sample::<f64, _>(StandardNormal)
    });
    let common = cfg
        .shared_transform
        .then(|| draw_transform(cfg, &mut rng_for(cfg.seed, TRANSFORM_STREAM), &shared_mu));

    let mut sets = Vec::with_capacity(cfg.languages.len());
    for tag in &cfg.languages {
        let mut rng = rng_for(cfg.seed, stream_id(tag));
        let own;
        let tr = match &common {
            Some(t) => t,
            None => {
                own = draw_transform(cfg, &mut rng, &shared_mu);
                &own
            }
        };
        let e = gaussian(&mut rng, n, cfg.nuisance_rank, cfg.nuisance_scale);
        let mut block = Array2::zeros((n, d));
        block.slice_mut(ndarray::s![.., ..k]).assign(&z);
        let mut lang = z.dot(&tr.a.t()) * cfg.transform_scale + e.dot(&tr.p.t());
        lang += &tr.mu;
        block.slice_mut(ndarray::s![.., k..]).assign(&lang);
        let clean = block.dot(&rotation.t());

        let mut sentences = Vec::with_capacity(n);
        for i in 0..n {
            let mut layers = Array2::<f32>::zeros((l, d));
            for (li, extra) in cfg.layer_noise_profile.iter().enumerate() {
                let s = cfg.sigma + extra;
                for j in 0..d {
                    let noise: f64 = rng.sample(StandardNormal);
                    layers[[li, j]] = (clean[[i, j]] + s * noise) as f32;
                }
            }
            sentences.push(SentenceFeatures {
                sentence_id: i as u64,
                token_count: token_counts[i],
                layers,
            });
        }
        sets.push(FeatureSet::new(tag.clone(), l, d, sentences)?);
    }
    Ok(SynthCorpus {
        sets,
        gold: (0..n as u64).map(|i| (i, i)).collect(),
        hubs: Vec::new(),
    })
}

/// [`generate`], then pulls `hub.count` randomly chosen sentences of every
/// language toward that language's per-layer centroid.
pub fn generate_hubbed(cfg: &SynthConfig) -> Result<SynthCorpus> {
    let hub = cfg
        .hub
        .ok_or_else(|| Error::Config("hubbed generation needs a hub setting".into()))?;
    let mut corpus = generate(cfg)?;
    let mut rng = rng_for(cfg.seed, HUB_STREAM);
    let mut positions = sample(&mut rng, cfg.n_sentences, hub.count).into_vec();
    positions.sort_unstable();
    let p = hub.strength;
    for set in &mut corpus.sets {
        let n = set.len() as f64;
        let mut centroid = Array2::<f64>::zeros((set.n_layers, set.dim));
        for s in &set.sentences {
            centroid.zip_mut_with(&s.layers, |c, &x| *c += x as f64);
        }
        centroid /= n;
        for &pos in &positions {
            set.sentences[pos].layers.zip_mut_with(&centroid, |x, &c| {
                *x = ((1.0 - p) * (*x as f64) + p * c) as f32
            });
        }
    }
    corpus.hubs = positions.iter().map(|&p| p as u64).collect();
    Ok(corpus)
}
