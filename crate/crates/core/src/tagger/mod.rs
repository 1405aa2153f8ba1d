//! Model variants, tagging and training.

mod config;
mod features;
mod neural;
mod train;

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

pub use self::config::{TaggerConfig, Variant};
pub use self::features::{
    extract_baseline_features, sentence_features, FeatureCrf, FeatureExample, FeatureIndex, LexiconPosTagger, PosTagger,
};
pub use self::neural::{Attention, AttentionTrace, Encoded, NeuralTagger, TagPrediction};
pub use self::train::{cross_validate, train, train_feature_crf, CrossValidation, EpochLog, TrainOutcome};
use crate::corpus::{Sentence, Tag, TaggedCorpus};
use crate::error::{Error, Result};
use crate::numerics::{read_checkpoint, write_checkpoint, Checkpoint};

/// A trained tagger of any variant.
#[derive(Clone, Debug)]
pub enum Model {
    Neural(NeuralTagger),
    FeatureCrf(FeatureCrf),
}

impl Model {
    pub fn config(&self) -> &TaggerConfig {
        match self {
            Model::Neural(m) => &m.config,
            Model::FeatureCrf(m) => &m.config,
        }
    }

    pub fn variant(&self) -> Variant {
        self.config().variant
    }

    pub fn param_count(&self) -> usize {
        match self {
            Model::Neural(m) => m.param_count(),
            Model::FeatureCrf(m) => m.param_count(),
        }
    }

    pub fn tag_sentence(&self, sentence: &Sentence, context: &[&Sentence]) -> Result<TagPrediction> {
        match self {
            Model::Neural(m) => m.tag_sentence(sentence, context),
            Model::FeatureCrf(m) => m.tag_sentence(sentence),
        }
    }

    /// Predictions for every corpus sentence, each with its corpus context.
    pub fn tag_corpus(&self, corpus: &TaggedCorpus) -> Result<Vec<TagPrediction>> {
        let cap = self.config().context_cap;
        (0..corpus.len())
            .into_par_iter()
            .map(|i| self.tag_sentence(&corpus.sentences[i].sentence, &corpus.context(i, cap)))
            .collect()
    }

    pub(crate) fn tag_indices(&self, corpus: &TaggedCorpus, indices: &[usize]) -> Result<Vec<Vec<Tag>>> {
        let cap = self.config().context_cap;
        indices
            .par_iter()
            .map(|&i| Ok(self.tag_sentence(&corpus.sentences[i].sentence, &corpus.context(i, cap))?.tags))
            .collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            Model::Neural(m) => m.to_checkpoint(),
            Model::FeatureCrf(m) => m.to_checkpoint(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let meta: serde_json::Value = serde_json::from_str(&ck.metadata)?;
        match meta.get("kind").and_then(|k| k.as_str()) {
            Some(neural::NEURAL_KIND) => Ok(Model::Neural(NeuralTagger::from_checkpoint(ck)?)),
            Some(features::FEATURE_KIND) => Ok(Model::FeatureCrf(FeatureCrf::from_checkpoint(ck, Arc::new(LexiconPosTagger))?)),
            other => Err(Error::Checkpoint(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_checkpoint(path, &self.to_checkpoint())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(read_checkpoint(path)?)
    }
}
