//! The learned parts of the tracker: per-point offset heads, the attentive
//! instance network and the instance similarity head.

mod attention;
mod instance;
mod mlp;
mod offset;
mod similarity;
mod train;

pub use attention::{AttentionCache, BlockCache, Neighborhood, TransformerBlock};
pub use instance::{AttentiveInstanceNet, InstanceBatch, InstanceCache, DEFAULT_INPUT_SCALE};
pub use mlp::{Mlp, MlpCache};
pub use offset::{offset_input, OffsetCache, OffsetHead, OFFSET_INPUT_DIM};
pub use similarity::{similarity_cost, SimilarityCache, SimilarityHead};
pub use train::{
    offset_mae, offset_samples, similarity_pairs, train_offsets, train_similarity, OffsetSample, PairSample,
    SimilarityModel, TrainConfig, TrainReport,
};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::TrackerConfig;
use crate::nn::{Checkpoint, Module, Tensor};

/// All network parameters of the tracker.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackerNets {
    pub offset: OffsetHead,
    pub instance: AttentiveInstanceNet,
    pub similarity: SimilarityHead,
}

impl TrackerNets {
    /// Seeded initialization with the dimensions from `config`.
    pub fn new(config: &TrackerConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let offset = OffsetHead::new(config.offset_hidden, &mut rng);
        let instance =
            AttentiveInstanceNet::new(config.d_in, config.d1, config.d2, config.n_local, &mut rng);
        let similarity = SimilarityHead::new(config.d2, &mut rng);
        Self {
            offset,
            instance,
            similarity,
        }
    }

    pub fn checkpoint(&mut self) -> Checkpoint {
        Checkpoint::capture(self)
    }

    pub fn save(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.checkpoint().save(path)
    }

    /// Builds networks shaped by `config` and fills them from `path`.
    pub fn load(config: &TrackerConfig, path: impl AsRef<Path>) -> Result<Self> {
        let mut nets = Self::new(config);
        Checkpoint::load(path)?.restore(&mut nets)?;
        Ok(nets)
    }
}

impl Module for TrackerNets {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(Tensor<'_>)) {
        let p = |name: &str| {
            if prefix.is_empty() {
                name.to_string()
            } else {
                format!("{prefix}.{name}")
            }
        };
        self.offset.visit(&p("offset"), f);
        self.instance.visit(&p("instance"), f);
        self.similarity.visit(&p("similarity"), f);
    }
}
