use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::models::ModelSet;
use crate::ar_prior::{Combination, MarkovPrior, DEFAULT_ALPHA, DEFAULT_ORDER};
use crate::conditional_model::{train, ConditionalModel, ModelConfig, ChainSource, Optimizer, TrainChain, TrainConfig, TrainReport};
use crate::distribution_grid::{sample_cellwise, DistributionGrid};
use crate::text_phrases::{build_dataset, ChunkGrammar, DatasetEntry, Lexicon, DEFAULT_THRESHOLD};
use crate::voxel_shapes::{gen_corpus, CorpusConfig, CorpusEntry};
use crate::vq_codec::{decode, encode, train_codebook, Codebook, IndexGrid};
use crate::{stable_hash, Error, Result};

/// One in this many sequences is held out, chosen by text hash.
pub const HOLDOUT_MODULUS: u64 = 5;

pub fn is_held_out(sequence_text: &str) -> bool {
    stable_hash(sequence_text.as_bytes()) % HOLDOUT_MODULUS == 0
}

pub fn split_dataset(entries: &[DatasetEntry]) -> (Vec<&DatasetEntry>, Vec<&DatasetEntry>) {
    entries.iter().partition(|e| !is_held_out(&e.sequence_text))
}

/// Index grids of the corpus shapes, keyed by shape id.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeSets {
    pub k: usize,
    pub g: usize,
    pub grids: BTreeMap<u32, IndexGrid>,
}

impl ShapeSets {
    pub fn encode_corpus(corpus: &[CorpusEntry], codebook: &Codebook) -> Result<Self> {
        let grids = corpus
            .iter()
            .map(|e| Ok((e.id, encode(&e.tsdf, codebook)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            k: codebook.k(),
            g: codebook.g(),
            grids,
        })
    }

    /// Shape-set distribution: the weighted histogram of the paired shapes' indices.
    pub fn distribution(&self, entry: &DatasetEntry) -> Result<DistributionGrid> {
        if entry.shape_ids.is_empty() || entry.shape_ids.len() != entry.weights.len() {
            return Err(Error::Format(format!("entry {:?} has no usable shape set", entry.sequence_text)));
        }
        let cells = self.g.pow(3);
        let mut w = vec![0.0; cells * self.k];
        for (id, &weight) in entry.shape_ids.iter().zip(&entry.weights) {
            let q = self
                .grids
                .get(id)
                .ok_or_else(|| Error::NotFound(format!("shape {id} in entry {:?}", entry.sequence_text)))?;
            for (cell, &idx) in q.indices().iter().enumerate() {
                w[cell * self.k + idx as usize] += weight;
            }
        }
        DistributionGrid::from_weights(self.g, self.k, w)
    }
}

/// Training chains: one per caption, each step targeting the shape-set
/// distribution of the caption's prefix. Chains come from the entries a
/// caption ends at, repeated once per caption ending there.
pub struct DatasetChains<'a> {
    ends: Vec<&'a DatasetEntry>,
    by_text: HashMap<&'a str, &'a DatasetEntry>,
    sets: &'a ShapeSets,
}

impl<'a> DatasetChains<'a> {
    /// `train` selects the chain ends; `all` supplies the prefix lookups.
    pub fn new(train: &[&'a DatasetEntry], all: &'a [DatasetEntry], sets: &'a ShapeSets) -> Self {
        let by_text: HashMap<&str, &DatasetEntry> = all.iter().map(|e| (e.sequence_text.as_str(), e)).collect();
        let mut continued: HashMap<&str, u32> = HashMap::new();
        for e in all.iter().filter(|e| e.t() > 1) {
            if let Some(parent) = by_text.get(e.prefix_text().as_str()) {
                *continued.entry(parent.sequence_text.as_str()).or_default() += e.occurrences;
            }
        }
        let ends = train
            .iter()
            .flat_map(|&e| {
                let ending = e
                    .occurrences
                    .saturating_sub(continued.get(e.sequence_text.as_str()).copied().unwrap_or(0));
                std::iter::repeat(e).take(ending as usize)
            })
            .collect();
        Self { ends, by_text, sets }
    }
}

impl ChainSource for DatasetChains<'_> {
    fn len(&self) -> usize {
        self.ends.len()
    }

    fn chain(&self, index: usize) -> Result<TrainChain> {
        let end = self.ends[index];
        let mut steps = Vec::with_capacity(end.t());
        for t in 1..=end.t() {
            let text = end.phrases[..t].join(" ");
            let entry = self
                .by_text
                .get(text.as_str())
                .ok_or_else(|| Error::NotFound(format!("prefix sequence {text:?}")))?;
            steps.push((end.phrases[t - 1].clone(), self.sets.distribution(entry)?));
        }
        Ok(TrainChain {
            start: DistributionGrid::uniform(self.sets.g, self.sets.k),
            steps,
        })
    }
}

/// Fits the prior on single-shape grids plus grids sampled cell-wise from
/// shape-set distributions; `set_ratio` is the sampled share of all grids.
pub fn fit_prior_with_sets(
    sets: &ShapeSets,
    entries: &[&DatasetEntry],
    order: usize,
    alpha: f64,
    set_ratio: f64,
    seed: u64,
) -> Result<MarkovPrior> {
    if !(0.0..1.0).contains(&set_ratio) {
        return Err(Error::Config(format!("set ratio {set_ratio} must lie in [0, 1)")));
    }
    let mut prior = MarkovPrior::empty(order, alpha, sets.k)?;
    for q in sets.grids.values() {
        prior.observe(q.indices())?;
    }
    let extra = ((sets.grids.len() as f64) * set_ratio / (1.0 - set_ratio)).round() as usize;
    if extra > 0 && entries.is_empty() {
        return Err(Error::Config("shape-set sampling needs dataset entries".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        let entry = entries[rng.gen_range(0..entries.len())];
        let z = sets.distribution(entry)?;
        prior.observe(sample_cellwise(&z, rng.gen()).indices())?;
    }
    Ok(prior)
}

/// Every knob of a full training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub corpus: CorpusConfig,
    pub corpus_seed: u64,
    pub k: usize,
    pub codebook_iterations: usize,
    pub codebook_seed: u64,
    pub threshold: f64,
    pub prior_order: usize,
    pub prior_alpha: f64,
    pub set_ratio: f64,
    pub prior_seed: u64,
    pub combination: Combination,
    pub width: usize,
    pub depth: usize,
    pub embed_dim: usize,
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl Default for TrainingPlan {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            corpus_seed: 1,
            k: 64,
            codebook_iterations: 50,
            codebook_seed: 2,
            threshold: DEFAULT_THRESHOLD,
            prior_order: DEFAULT_ORDER,
            prior_alpha: DEFAULT_ALPHA,
            set_ratio: 0.5,
            prior_seed: 3,
            combination: Combination::Calibrated,
            width: 64,
            depth: 2,
            embed_dim: crate::conditional_model::DEFAULT_EMBED_DIM,
            init_seed: 4,
            train: TrainConfig {
                learning_rate: 3e-3,
                epochs: 2,
                batch_size: 1,
                optimizer: Optimizer::Adam,
                self_feed: 1.0,
                seed: 5,
                ..TrainConfig::default()
            },
        }
    }
}

/// Everything a full training run produces.
pub struct TrainedSystem {
    pub corpus: Vec<CorpusEntry>,
    pub dataset: Vec<DatasetEntry>,
    pub sets: ShapeSets,
    pub models: ModelSet,
    pub codebook_distortion: Vec<f64>,
    pub report: TrainReport,
}

pub fn train_cond_model(
    dataset: &[DatasetEntry],
    sets: &ShapeSets,
    config: ModelConfig,
    init_seed: u64,
    train_config: &TrainConfig,
) -> Result<(ConditionalModel, TrainReport)> {
    let (train_entries, _) = split_dataset(dataset);
    let chains = DatasetChains::new(&train_entries, dataset, sets);
    log::info!("{} training chains", chains.len());
    let mut model = ConditionalModel::init(config, 1.0, init_seed)?;
    let report = train(&mut model, &chains, train_config)?;
    Ok((model, report))
}

/// Corpus, dataset, codebook, prior and conditional model from one plan.
pub fn train_system(plan: &TrainingPlan) -> Result<TrainedSystem> {
    let corpus = gen_corpus(&plan.corpus, plan.corpus_seed)?;
    log::info!("corpus: {} shapes", corpus.len());
    let tsdfs: Vec<_> = corpus.iter().map(|e| e.tsdf.clone()).collect();
    let cb = train_codebook(&tsdfs, plan.k, plan.codebook_iterations, plan.codebook_seed)?;
    log::info!("codebook: K={} after {} iterations", cb.codebook.k(), cb.iterations);
    let dataset = build_dataset(&corpus, &Lexicon::default(), &ChunkGrammar::default(), plan.threshold)?;
    log::info!("dataset: {} sequences", dataset.len());
    let sets = ShapeSets::encode_corpus(&corpus, &cb.codebook)?;
    let (train_entries, _) = split_dataset(&dataset);
    let prior = fit_prior_with_sets(
        &sets,
        &train_entries,
        plan.prior_order,
        plan.prior_alpha,
        plan.set_ratio,
        plan.prior_seed,
    )?
    .with_combination(plan.combination);
    let config = ModelConfig {
        g: cb.codebook.g(),
        k: cb.codebook.k(),
        embed_dim: plan.embed_dim,
        width: plan.width,
        depth: plan.depth,
        hash_seed: crate::conditional_model::DEFAULT_HASH_SEED,
    };
    let (cond, report) = train_cond_model(&dataset, &sets, config, plan.init_seed, &plan.train)?;
    let models = ModelSet::new(cb.codebook, cond, prior)?;
    Ok(TrainedSystem {
        corpus,
        dataset,
        sets,
        models,
        codebook_distortion: cb.distortion,
        report,
    })
}

/// Mean occupancy IoU of decode(encode(X)) over the corpus.
pub fn codec_iou(corpus: &[CorpusEntry], codebook: &Codebook) -> Result<f64> {
    let mut total = 0.0;
    for e in corpus {
        let rec = decode(&encode(&e.tsdf, codebook)?, codebook)?;
        total += crate::voxel_shapes::iou(&e.tsdf.occupancy(), &rec.occupancy())?;
    }
    Ok(total / corpus.len().max(1) as f64)
}
