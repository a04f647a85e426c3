use std::path::Path;

use crate::ar_prior::MarkovPrior;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conditional_model::{ConditionalModel, ModelConfig};
use crate::vq_codec::{Codebook, IndexGrid};
use crate::{Error, Result};

pub const CODEBOOK_FILE: &str = "codebook.json";
pub const COND_MODEL_FILE: &str = "cond_model.json";
pub const PRIOR_FILE: &str = "prior.json";

/// The three trained artifacts generation needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSet {
    pub codebook: Codebook,
    pub cond: ConditionalModel,
    pub prior: MarkovPrior,
}

impl ModelSet {
    pub fn new(codebook: Codebook, cond: ConditionalModel, prior: MarkovPrior) -> Result<Self> {
        let k = codebook.k();
        if cond.config.k != k || prior.k() != k {
            return Err(Error::Config(format!(
                "codebook K={k}, conditional model K={}, prior K={} disagree",
                cond.config.k,
                prior.k()
            )));
        }
        if cond.config.g != codebook.g() {
            return Err(Error::Config(format!(
                "codebook g={} but conditional model g={}",
                codebook.g(),
                cond.config.g
            )));
        }
        Ok(Self { codebook, cond, prior })
    }

    pub fn g(&self) -> usize {
        self.codebook.g()
    }

    pub fn k(&self) -> usize {
        self.codebook.k()
    }

    /// A small random model set (g=2, K=4, 8³ voxels) for tests and demos.
    /// Codes 0 and 1 are the empty and the solid patch.
    pub fn toy(seed: u64) -> Result<Self> {
        let (g, k, side, trunc) = (2, 4, 4, 2.0f32);
        let dim = side * side * side;
        let mut codewords = vec![vec![trunc; dim], vec![-trunc; dim]];
        for split in [side / 2, side / 4] {
            codewords.push((0..dim).map(|i| if i / (side * side) < split { -trunc } else { trunc }).collect());
        }
        let codebook = Codebook::new(g, trunc, codewords)?;
        let config = ModelConfig {
            g,
            k,
            embed_dim: 16,
            width: 8,
            depth: 2,
            hash_seed: crate::conditional_model::DEFAULT_HASH_SEED,
        };
        let mut cond = ConditionalModel::init(config, 1.0, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70);
        for group in cond.groups_mut() {
            group.iter_mut().for_each(|w| *w += rng.gen_range(-0.5..0.5));
        }
        let grids: Vec<IndexGrid> = (0..16)
            .map(|_| IndexGrid::new(g, (0..g * g * g).map(|_| rng.gen_range(0..k as u16)).collect()))
            .collect::<Result<_>>()?;
        let prior = MarkovPrior::fit(&grids, 1, 0.5, k)?;
        Self::new(codebook, cond, prior)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.codebook.save(&dir.join(CODEBOOK_FILE))?;
        self.cond.save(&dir.join(COND_MODEL_FILE))?;
        self.prior.save(&dir.join(PRIOR_FILE))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        for name in [CODEBOOK_FILE, COND_MODEL_FILE, PRIOR_FILE] {
            if !dir.join(name).is_file() {
                return Err(Error::Config(format!("model set {} lacks {name}", dir.display())));
            }
        }
        Self::new(
            Codebook::load(&dir.join(CODEBOOK_FILE))?,
            ConditionalModel::load(&dir.join(COND_MODEL_FILE))?,
            MarkovPrior::load(&dir.join(PRIOR_FILE))?,
        )
    }
}
