//! Exact cosine retrieval and margin-based bitext mining.
//!
//! All similarity values are plain sequential dot products of unit rows, so
//! every ranking is reproducible bit for bit. Ties are broken by lower id.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{f1_from_counts, Gold};

/// Unit-normalized embeddings with their sentence ids, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    ids: Vec<u64>,
    vectors: Array2<f64>,
}

impl EmbeddingIndex {
    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    fn row(&self, pos: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(pos)
    }
}

/// Normalizes and stores `(id, vector)` rows.
pub fn build_index(embeddings: &[(u64, Vec<f64>)]) -> Result<EmbeddingIndex> {
    let dim = embeddings.first().map_or(0, |(_, v)| v.len());
    let mut seen = BTreeSet::new();
    let mut vectors = Array2::zeros((embeddings.len(), dim));
    let mut ids = Vec::with_capacity(embeddings.len());
    for (pos, (id, v)) in embeddings.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::dim(format!(
                "embedding {id} has {} entries, expected {dim}",
                v.len()
            )));
        }
        if !seen.insert(*id) {
            return Err(Error::DuplicateId(*id));
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroVector);
        }
        for (dst, x) in vectors.row_mut(pos).iter_mut().zip(v) {
            *dst = x / n;
        }
        ids.push(*id);
    }
    Ok(EmbeddingIndex { ids, vectors })
}

pub(crate) fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// One retrieved neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u64,
    pub sim: f64,
}

/// Descending similarity, then ascending id.
fn rank_order(a: &(f64, u64), b: &(f64, u64)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn check_k(k: usize, index: &EmbeddingIndex) -> Result<()> {
    if k == 0 || k >= index.len() {
        return Err(Error::BadK {
            k,
            limit: index.len(),
        });
    }
    Ok(())
}

fn check_dims(a: &EmbeddingIndex, b: &EmbeddingIndex) -> Result<()> {
    if !a.is_empty() && !b.is_empty() && a.dim() != b.dim() {
        return Err(Error::dim(format!(
            "indexes have dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Positions and similarities of the top `k` index rows for one query.
fn top_k(index: &EmbeddingIndex, q: ArrayView1<f64>, k: usize) -> Vec<(usize, f64)> {
    let mut scored: Vec<(f64, u64, usize)> = (0..index.len())
        .map(|p| (dot(index.row(p), q), index.ids[p], p))
        .collect();
    let cmp = |a: &(f64, u64, usize), b: &(f64, u64, usize)| rank_order(&(a.0, a.1), &(b.0, b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored.into_iter().map(|(s, _, p)| (p, s)).collect()
}

/// Runs `f` over `0..n` on `workers` threads, preserving order.
fn fan_out<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

fn knn_positions(
    index: &EmbeddingIndex,
    queries: &EmbeddingIndex,
    k: usize,
    workers: usize,
) -> Result<Vec<Vec<(usize, f64)>>> {
    check_k(k, index)?;
    check_dims(index, queries)?;
    Ok(fan_out(queries.len(), workers, |qi| {
        top_k(index, queries.row(qi), k)
    }))
}

/// Exact top-`k` neighbors in `index` of every row of `queries`.
pub fn knn(
    index: &EmbeddingIndex,
    queries: &EmbeddingIndex,
    k: usize,
) -> Result<Vec<Vec<Neighbor>>> {
    knn_with_workers(index, queries, k, 1)
}

/// [`knn`] spread over `workers` threads; output is identical for any count.
pub fn knn_with_workers(
    index: &EmbeddingIndex,
    queries: &EmbeddingIndex,
    k: usize,
    workers: usize,
) -> Result<Vec<Vec<Neighbor>>> {
    Ok(knn_positions(index, queries, k, workers)?
        .into_iter()
        .map(|list| {
            list.into_iter()
                .map(|(p, sim)| Neighbor {
                    id: index.ids[p],
                    sim,
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarginKind {
    #[default]
    Ratio,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MiningDirection {
    Forward,
    Backward,
    #[default]
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiningConfig {
    pub k: usize,
    pub margin: MarginKind,
    pub direction: MiningDirection,
    /// Threads for neighbor search.
    pub workers: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            k: 4,
            margin: MarginKind::Ratio,
            direction: MiningDirection::Union,
            workers: 1,
        }
    }
}

/// A candidate translation pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub src_id: u64,
    pub trg_id: u64,
    pub score: f64,
}

/// `sim / scale` with `scale` the mean neighbor similarity of both sides
/// (ratio), or `sim` itself (absolute).
pub fn margin_score(sim: f64, fwd: &[f64], bwd: &[f64], k: usize, kind: MarginKind) -> Result<f64> {
    if fwd.len() != k || bwd.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            actual: if fwd.len() != k { fwd.len() } else { bwd.len() },
        });
    }
    match kind {
        MarginKind::Absolute => Ok(sim),
        MarginKind::Ratio => {
            let two_k = 2.0 * k as f64;
            let scale = fwd.iter().sum::<f64>() / two_k + bwd.iter().sum::<f64>() / two_k;
            if scale <= 0.0 || !scale.is_finite() {
                return Err(Error::DegenerateScale(scale));
            }
            Ok(sim / scale)
        }
    }
}

/// Descending score, then ascending `(src_id, trg_id)`.
pub fn sort_pairs(pairs: &mut [ScoredPair]) {
    pairs.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.src_id.cmp(&b.src_id))
            .then(a.trg_id.cmp(&b.trg_id))
    });
}

/// Candidate pairs from `k`-neighborhoods, each scored once.
pub fn mine_candidates(
    src: &EmbeddingIndex,
    trg: &EmbeddingIndex,
    cfg: &MiningConfig,
) -> Result<Vec<ScoredPair>> {
    if src.is_empty() || trg.is_empty() {
        return Err(Error::Empty("index"));
    }
    let fwd = knn_positions(trg, src, cfg.k, cfg.workers)?;
    let bwd = knn_positions(src, trg, cfg.k, cfg.workers)?;
    let mut cands: BTreeSet<(usize, usize)> = BTreeSet::new();
    if cfg.direction != MiningDirection::Backward {
        for (s, list) in fwd.iter().enumerate() {
            cands.extend(list.iter().map(|&(t, _)| (s, t)));
        }
    }
    if cfg.direction != MiningDirection::Forward {
        for (t, list) in bwd.iter().enumerate() {
            cands.extend(list.iter().map(|&(s, _)| (s, t)));
        }
    }
    let fwd_sims: Vec<Vec<f64>> = fwd
        .iter()
        .map(|l| l.iter().map(|x| x.1).collect())
        .collect();
    let bwd_sims: Vec<Vec<f64>> = bwd
        .iter()
        .map(|l| l.iter().map(|x| x.1).collect())
        .collect();
    let mut out = cands
        .into_iter()
        .map(|(s, t)| {
            let sim = dot(src.row(s), trg.row(t));
            Ok(ScoredPair {
                src_id: src.ids[s],
                trg_id: trg.ids[t],
                score: margin_score(sim, &fwd_sims[s], &bwd_sims[t], cfg.k, cfg.margin)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    sort_pairs(&mut out);
    Ok(out)
}

/// Highest-cosine target for every source, in source order.
pub fn retrieve_top1(src: &EmbeddingIndex, trg: &EmbeddingIndex) -> Result<Vec<ScoredPair>> {
    retrieve_top1_with_workers(src, trg, 1)
}

pub fn retrieve_top1_with_workers(
    src: &EmbeddingIndex,
    trg: &EmbeddingIndex,
    workers: usize,
) -> Result<Vec<ScoredPair>> {
    if trg.is_empty() {
        return Err(Error::Empty("target index"));
    }
    check_dims(src, trg)?;
    Ok(fan_out(src.len(), workers, |s| {
        let (t, score) = top_k(trg, src.row(s), 1)[0];
        ScoredPair {
            src_id: src.ids[s],
            trg_id: trg.ids[t],
            score,
        }
    }))
}

/// Pairs with `score >= tau`, order preserved.
pub fn apply_threshold(pairs: &[ScoredPair], tau: f64) -> Vec<ScoredPair> {
    pairs.iter().filter(|p| p.score >= tau).copied().collect()
}

/// Every threshold the optimizer considers, in descending order: `+inf`,
/// midpoints between consecutive distinct scores, `-inf`.
pub fn threshold_candidates(pairs: &[ScoredPair]) -> Vec<f64> {
    let mut scores: Vec<f64> = pairs.iter().map(|p| p.score).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    scores.dedup();
    let mut taus = Vec::with_capacity(scores.len() + 1);
    taus.push(f64::INFINITY);
    taus.extend(scores.windows(2).map(|w| {
        // Adjacent floats have no midpoint strictly above the lower score.
        let mid = (w[0] + w[1]) / 2.0;
        if mid > w[1] {
            mid
        } else {
            w[0]
        }
    }));
    taus.push(f64::NEG_INFINITY);
    taus
}

/// Threshold maximizing F1 against `gold`; ties go to the larger threshold.
/// Repeated `(src, trg)` pairs count once.
pub fn optimize_threshold(pairs: &[ScoredPair], gold: &Gold) -> Result<(f64, f64)> {
    if gold.is_empty() {
        return Err(Error::Empty("gold alignment"));
    }
    let mut sorted = pairs.to_vec();
    sort_pairs(&mut sorted);
    let taus = threshold_candidates(&sorted);
    let mut seen = BTreeSet::new();
    let (mut tp, mut npred, mut next) = (0usize, 0usize, 0usize);
    let mut best = (f64::INFINITY, f1_from_counts(0, 0, gold.len()).2);
    for &tau in &taus {
        while next < sorted.len() && sorted[next].score >= tau {
            let p = sorted[next];
            if seen.insert((p.src_id, p.trg_id)) {
                npred += 1;
                if gold.contains(p.src_id, p.trg_id) {
                    tp += 1;
                }
            }
            next += 1;
        }
        let f = f1_from_counts(tp, npred, gold.len()).2;
        if f > best.1 {
            best = (tau, f);
        }
    }
    Ok(best)
}

/// Writes `src<TAB>trg<TAB>score` lines.
pub fn write_pairs(path: &Path, pairs: &[ScoredPair]) -> Result<()> {
    let mut text = String::new();
    for p in pairs {
        let _ = writeln!(text, "{}\t{}\t{}", p.src_id, p.trg_id, p.score);
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    field: Option<&str>,
    what: &str,
) -> Result<T> {
    let raw = field.ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("missing {what}"),
    })?;
    raw.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad {what} {raw:?}"),
    })
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn read_pairs(path: &Path) -> Result<Vec<ScoredPair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    data_lines(&text)
        .map(|(n, line)| {
            let mut f = line.split('\t');
            Ok(ScoredPair {
                src_id: parse_field(path, n, f.next(), "source id")?,
                trg_id: parse_field(path, n, f.next(), "target id")?,
                score: parse_field(path, n, f.next(), "score")?,
            })
        })
        .collect()
}

/// Reads `src<TAB>trg` lines; extra columns are ignored.
pub fn read_gold(path: &Path) -> Result<Gold> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut gold = Gold::default();
    for (n, line) in data_lines(&text) {
        let mut f = line.split('\t');
        let s = parse_field(path, n, f.next(), "source id")?;
        let t = parse_field(path, n, f.next(), "target id")?;
        gold.insert(s, t);
    }
    Ok(gold)
}

pub fn write_gold(path: &Path, gold: &Gold) -> Result<()> {
    let mut text = String::new();
    for (s, t) in gold.iter() {
        let _ = writeln!(text, "{s}\t{t}");
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
