use serde::{Deserialize, Serialize};

use super::models::ModelSet;
use super::session::{next_distribution, sample_step, AblationFlags};
use super::training::is_held_out;
use crate::distribution_grid::{max_diff_fraction, mean_entropy, DistributionGrid};
use crate::text_phrases::DatasetEntry;
use crate::voxel_shapes::{chamfer_distance, AttrKey, AttrValue, CorpusEntry, OccupancyGrid, PartLabel};
use crate::vq_codec::{decode, encode, Codebook};
use crate::{stable_hash, Error, Result};

/// Phrase-count buckets as half-open ranges [lo, hi).
pub const BUCKETS: [(usize, usize); 4] = [(1, 2), (2, 4), (4, 8), (8, usize::MAX)];
pub const DIFF_THRESHOLDS: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

pub fn bucket_of(t: usize) -> Option<usize> {
    BUCKETS.iter().position(|&(lo, hi)| t >= lo && t < hi)
}

pub fn bucket_label(b: usize) -> String {
    match BUCKETS[b] {
        (lo, hi) if hi == lo + 1 => format!("{lo}"),
        (lo, usize::MAX) => format!("[{lo},inf)"),
        (lo, hi) => format!("[{lo},{hi})"),
    }
}

/// Held-out entries, at most `per_bucket` per phrase-count bucket, chosen by text hash.
pub fn evaluation_entries(dataset: &[DatasetEntry], per_bucket: usize) -> Vec<&DatasetEntry> {
    let mut by_bucket: Vec<Vec<&DatasetEntry>> = vec![Vec::new(); BUCKETS.len()];
    for e in dataset.iter().filter(|e| is_held_out(&e.sequence_text)) {
        if let Some(b) = bucket_of(e.t()) {
            by_bucket[b].push(e);
        }
    }
    let mut out = Vec::new();
    for mut entries in by_bucket {
        entries.sort_by_key(|e| (stable_hash(format!("eval:{}", e.sequence_text).as_bytes()), e.sequence_text.clone()));
        entries.truncate(per_bucket);
        out.extend(entries);
    }
    out.sort_by(|a, b| a.phrases.cmp(&b.phrases));
    out
}

/// Runs the recursive chain for every entry and hands (entry, Z history) to `visit`.
/// Entries sharing phrase prefixes reuse the shared part of the chain.
pub fn for_each_chain<F>(models: &ModelSet, entries: &[&DatasetEntry], flags: AblationFlags, mut visit: F) -> Result<()>
where
    F: FnMut(&DatasetEntry, &[DistributionGrid]) -> Result<()>,
{
    let mut sorted: Vec<&DatasetEntry> = entries.to_vec();
    sorted.sort_by(|a, b| a.phrases.cmp(&b.phrases));
    let mut phrases: Vec<&str> = Vec::new();
    let mut history = vec![DistributionGrid::uniform(models.g(), models.k())];
    for entry in sorted {
        let shared = phrases
            .iter()
            .zip(&entry.phrases)
            .take_while(|(a, b)| **a == b.as_str())
            .count();
        phrases.truncate(shared);
        history.truncate(shared + 1);
        for p in &entry.phrases[shared..] {
            let z = next_distribution(models, history.last().expect("Z_0 present"), p, flags)?;
            history.push(z);
            phrases.push(p);
        }
        visit(entry, &history)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyCdRow {
    pub bucket: String,
    pub sequences: usize,
    pub mean_entropy: f64,
    pub mean_cd: f64,
}

/// Mean pairwise Chamfer distance; pairs involving an empty shape are skipped.
pub fn mean_pairwise_chamfer(shapes: &[OccupancyGrid]) -> Result<Option<f64>> {
    let mut total = 0.0;
    let mut n = 0usize;
    for i in 0..shapes.len() {
        for j in i + 1..shapes.len() {
            if shapes[i].is_empty() || shapes[j].is_empty() {
                continue;
            }
            total += chamfer_distance(&shapes[i], &shapes[j])?;
            n += 1;
        }
    }
    Ok((n > 0).then(|| total / n as f64))
}

/// Per bucket, mean entropy of the predicted Z_t and mean pairwise Chamfer of
/// `samples` shapes drawn from it.
pub fn evaluate_entropy_cd(
    entries: &[&DatasetEntry],
    models: &ModelSet,
    samples: usize,
    seed: u64,
    flags: AblationFlags,
) -> Result<Vec<EntropyCdRow>> {
    let mut acc = vec![(0usize, 0.0f64, 0usize, 0.0f64); BUCKETS.len()];
    for_each_chain(models, entries, flags, |entry, history| {
        let Some(b) = bucket_of(entry.t()) else {
            return Ok(());
        };
        let z_t = &history[entry.t()];
        let z_prev = &history[entry.t() - 1];
        let s = seed ^ stable_hash(entry.sequence_text.as_bytes());
        let drawn = sample_step(models, z_t, z_prev, s, samples, flags)?;
        let occ: Vec<OccupancyGrid> = drawn.shapes.iter().map(|x| x.occupancy()).collect();
        let a = &mut acc[b];
        a.0 += 1;
        a.1 += mean_entropy(z_t);
        if let Some(cd) = mean_pairwise_chamfer(&occ)? {
            a.2 += 1;
            a.3 += cd;
        }
        Ok(())
    })?;
    Ok(acc
        .iter()
        .enumerate()
        .map(|(b, &(n, h, m, cd))| EntropyCdRow {
            bucket: bucket_label(b),
            sequences: n,
            mean_entropy: if n > 0 { h / n as f64 } else { f64::NAN },
            mean_cd: if m > 0 { cd / m as f64 } else { f64::NAN },
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub tau: f64,
    pub steps: usize,
    /// Mean fraction of cells whose probabilities rose by less than tau.
    pub unchanged_fraction: f64,
}

/// Mean unchanged-cell fraction between consecutive predicted steps (t ≥ 2).
pub fn evaluate_diff_fractions(
    entries: &[&DatasetEntry],
    models: &ModelSet,
    thresholds: &[f64],
    flags: AblationFlags,
) -> Result<Vec<DiffRow>> {
    let mut sums = vec![0.0; thresholds.len()];
    let mut steps = 0usize;
    for_each_chain(models, entries, flags, |entry, history| {
        let t = entry.t();
        if t < 2 {
            return Ok(());
        }
        for (s, &tau) in sums.iter_mut().zip(thresholds) {
            *s += max_diff_fraction(&history[t], &history[t - 1], tau)?;
        }
        steps += 1;
        Ok(())
    })?;
    Ok(thresholds
        .iter()
        .zip(sums)
        .map(|(&tau, s)| DiffRow {
            tau,
            steps,
            unchanged_fraction: if steps > 0 { s / steps as f64 } else { f64::NAN },
        })
        .collect())
}

/// Line-delimited JSON, one record per row.
pub fn report_lines<T: Serialize>(kind: &str, rows: &[T]) -> Result<String> {
    #[derive(Serialize)]
    struct Line<'a, T> {
        table: &'a str,
        #[serde(flatten)]
        row: &'a T,
    }
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(&Line { table: kind, row })?);
        out.push('\n');
    }
    Ok(out)
}

/// Decides whether a voxel shape carries an attribute, using the voxels that
/// the attribute's parts occupy in the corpus and other shapes leave empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeOracle {
    pub key: AttrKey,
    pub value: AttrValue,
    pub region: Vec<usize>,
    pub threshold: f64,
    /// Balanced accuracy on the codec reconstructions of the corpus.
    pub accuracy: f64,
}

/// Positive rates tried in order until some voxel qualifies.
pub const REGION_POSITIVE_RATES: [f64; 4] = [0.3, 0.2, 0.1, 0.05];
pub const REGION_NEGATIVE_RATE: f64 = 0.1;

impl AttributeOracle {
    /// Fits on shapes whose attributes include `key`; `labels` are the parts
    /// that show the attribute.
    pub fn fit(
        corpus: &[CorpusEntry],
        codebook: &Codebook,
        key: AttrKey,
        value: AttrValue,
        labels: &[PartLabel],
    ) -> Result<Self> {
        let relevant: Vec<(&CorpusEntry, bool)> = corpus
            .iter()
            .filter_map(|e| e.spec.attributes().get(&key).map(|&v| (e, v == value)))
            .collect();
        let n_pos = relevant.iter().filter(|r| r.1).count();
        let n_neg = relevant.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return Err(Error::Degenerate(format!("{key:?}={value:?} needs positive and negative shapes")));
        }
        let voxels = corpus[0].tsdf.values().len();
        let mut pos = vec![0usize; voxels];
        let mut neg = vec![0usize; voxels];
        for (e, is_pos) in &relevant {
            if *is_pos {
                for (v, l) in e.parts.labels().iter().enumerate() {
                    pos[v] += labels.contains(l) as usize;
                }
            } else {
                for (v, &o) in e.tsdf.occupancy().bits().iter().enumerate() {
                    neg[v] += o as usize;
                }
            }
        }
        let region: Vec<usize> = REGION_POSITIVE_RATES
            .iter()
            .map(|&rate| {
                (0..voxels)
                    .filter(|&v| {
                        pos[v] as f64 >= rate * n_pos as f64
                            && neg[v] as f64 <= REGION_NEGATIVE_RATE * n_neg as f64
                    })
                    .collect::<Vec<_>>()
            })
            .find(|r| !r.is_empty())
            .unwrap_or_default();
        if region.is_empty() {
            return Err(Error::Degenerate(format!("{key:?}={value:?} has no distinguishing voxels")));
        }
        let mut scored: Vec<(f64, bool)> = Vec::with_capacity(relevant.len());
        for (e, is_pos) in &relevant {
            let rec = decode(&encode(&e.tsdf, codebook)?, codebook)?.occupancy();
            scored.push((region_fill(&region, &rec), *is_pos));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut best, mut threshold) = (-1.0, 0.5);
        for i in 0..=scored.len() {
            // Candidate threshold between scored[i-1] and scored[i].
            let cut = match (i.checked_sub(1).map(|j| scored[j].0), scored.get(i).map(|s| s.0)) {
                (Some(a), Some(b)) if a == b => continue,
                (Some(a), Some(b)) => (a + b) / 2.0,
                (None, Some(b)) => b / 2.0,
                (Some(a), None) => (a + 1.0) / 2.0,
                (None, None) => unreachable!(),
            };
            let tp = scored[i..].iter().filter(|s| s.1).count() as f64;
            let tn = scored[..i].iter().filter(|s| !s.1).count() as f64;
            let acc = 0.5 * (tp / n_pos as f64 + tn / n_neg as f64);
            if acc > best {
                best = acc;
                threshold = cut;
            }
        }
        Ok(Self {
            key,
            value,
            region,
            threshold,
            accuracy: best,
        })
    }

    pub fn has(&self, occ: &OccupancyGrid) -> bool {
        region_fill(&self.region, occ) > self.threshold
    }

    pub fn rate(&self, shapes: &[OccupancyGrid]) -> f64 {
        shapes.iter().filter(|s| self.has(s)).count() as f64 / shapes.len().max(1) as f64
    }
}

fn region_fill(region: &[usize], occ: &OccupancyGrid) -> f64 {
    let bits = occ.bits();
    region.iter().filter(|&&v| bits[v]).count() as f64 / region.len() as f64
}

/// One steering probe: a base phrase, then the attribute phrase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringRow {
    pub phrase: String,
    pub before: f64,
    pub after: f64,
    pub oracle_accuracy: f64,
}

pub fn steering_probe(
    models: &ModelSet,
    oracle: &AttributeOracle,
    base: &str,
    phrase: &str,
    samples: usize,
    seed: u64,
) -> Result<SteeringRow> {
    let state = super::SessionState::new(models, seed, AblationFlags::default());
    let (s1, before) = state.step(models, base, samples)?;
    let (_, after) = s1.step(models, phrase, samples)?;
    let occ = |x: &super::StepSamples| x.shapes.iter().map(|s| s.occupancy()).collect::<Vec<_>>();
    Ok(SteeringRow {
        phrase: phrase.to_string(),
        before: oracle.rate(&occ(&before)),
        after: oracle.rate(&occ(&after)),
        oracle_accuracy: oracle.accuracy,
    })
}
