use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{TaggerConfig, Variant};
use super::features::{FeatureCrf, FeatureExample, LexiconPosTagger};
use super::neural::{Encoded, NeuralTagger};
use super::Model;
use crate::corpus::{Tag, TaggedCorpus};
use crate::encoders::{Coverage, PretrainedVectors, Vocabulary};
use crate::error::{Error, Result};
use crate::evaluation::{micro_prf, Prf};
use crate::numerics::{AdamConfig, AdamState, Gradients, ParamStore, Tape, Var};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss per sentence.
    pub loss: f64,
    /// Scores on the held-out sentences (or the training sentences when none are held out).
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub selection: String,
    pub improved: bool,
}

impl EpochLog {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log line serializes")
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    /// Pretrained-vector coverage of the word vocabulary (neural variants).
    pub coverage: Option<Coverage>,
    /// Corpus indices held out for model selection.
    pub holdout: Vec<usize>,
}

impl TrainOutcome {
    pub fn log_jsonl(&self) -> String {
        self.log.iter().map(|l| l.to_json_line() + "\n").collect()
    }
}

trait Trainable: Sync {
    type Example: Send + Sync;

    fn store(&self) -> &ParamStore<f32>;
    fn store_mut(&mut self) -> &mut ParamStore<f32>;
    fn example_loss(&self, tape: &mut Tape<f32>, ex: &Self::Example) -> Result<Var>;
    fn regularizer(&self, _tape: &mut Tape<f32>) -> Option<Var> {
        None
    }
    fn predict_tags(&self, ex: &Self::Example) -> Result<Vec<Tag>>;
}

impl Trainable for NeuralTagger {
    type Example = Encoded;

    fn store(&self) -> &ParamStore<f32> {
        &self.params
    }
    fn store_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }
    fn example_loss(&self, tape: &mut Tape<f32>, ex: &Encoded) -> Result<Var> {
        self.loss_on_tape(tape, ex)
    }
    fn predict_tags(&self, ex: &Encoded) -> Result<Vec<Tag>> {
        Ok(self.predict(ex)?.tags)
    }
}

impl Trainable for FeatureCrf {
    type Example = FeatureExample;

    fn store(&self) -> &ParamStore<f32> {
        &self.params
    }
    fn store_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }
    fn example_loss(&self, tape: &mut Tape<f32>, ex: &FeatureExample) -> Result<Var> {
        self.loss_on_tape(tape, ex)
    }
    fn regularizer(&self, tape: &mut Tape<f32>) -> Option<Var> {
        self.regularizer_on_tape(tape)
    }
    fn predict_tags(&self, ex: &FeatureExample) -> Result<Vec<Tag>> {
        Ok(self.predict(ex)?.tags)
    }
}

/// Minibatch ADAM with gradient clipping and early stopping on micro-F1.
/// Example gradients are computed concurrently and summed in batch order.
fn fit<M: Trainable>(
    model: &mut M,
    train: &[M::Example],
    select: &[(&M::Example, &[Tag])],
    selection: &str,
    cfg: &TaggerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<EpochLog>, usize)> {
    let mut adam = AdamState::new(
        model.store(),
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..Default::default()
        },
    );
    let gold: Vec<Vec<Tag>> = select.iter().map(|(_, g)| g.to_vec()).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ParamStore<f32>)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f32, Gradients<f32>)>> = batch
                .par_iter()
                .map(|&i| {
                    let mut tape = Tape::new(model.store());
                    let loss = model.example_loss(&mut tape, &train[i])?;
                    let value = tape.value(loss).scalar_value();
                    Ok((value, tape.backward(loss)?))
                })
                .collect();
            let mut grads = Gradients::zeros_like(model.store());
            for r in results {
                let (value, g) = r?;
                if !value.is_finite() {
                    return Err(Error::NonFinite("training loss"));
                }
                total += value as f64;
                grads.accumulate(&g);
            }
            grads.scale(1.0 / batch.len() as f32);
            let mut tape = Tape::new(model.store());
            if let Some(reg) = model.regularizer(&mut tape) {
                grads.accumulate(&tape.backward(reg)?);
            }
            if let Some(c) = cfg.clip_norm {
                grads.clip_global_norm(c as f32);
            }
            adam.step(model.store_mut(), &grads)?;
        }
        let m: &M = model;
        let pred = select
            .par_iter()
            .map(|(ex, _)| m.predict_tags(ex))
            .collect::<Result<Vec<_>>>()?;
        let prf = if select.is_empty() { Prf::default() } else { micro_prf(&gold, &pred)? };
        let improved = best.as_ref().map_or(true, |(f, ..)| prf.f1 > *f);
        if improved {
            best = Some((prf.f1, epoch, model.store().clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        log.push(EpochLog {
            epoch,
            loss: total / train.len() as f64,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            selection: selection.to_string(),
            improved,
        });
        // nothing left to improve on
        if cfg.patience.is_some_and(|p| stale >= p || prf.f1 >= 1.0) {
            break;
        }
    }
    let best_epoch = match best {
        Some((_, epoch, params)) => {
            *model.store_mut() = params;
            epoch
        }
        None => 0,
    };
    Ok((log, best_epoch))
}

/// Shuffled split into (train, held-out) corpus indices.
pub(super) fn split(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let held = ((n as f64) * fraction).floor() as usize;
    let held = held.min(n.saturating_sub(1));
    let mut holdout = idx[..held].to_vec();
    let mut train = idx[held..].to_vec();
    holdout.sort_unstable();
    train.sort_unstable();
    (train, holdout)
}

/// Trains the configured variant on `corpus`. All randomness (split,
/// initialization, shuffling) derives from `config.seed`.
pub fn train(corpus: &TaggedCorpus, config: &TaggerConfig, pretrained: Option<&PretrainedVectors>) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if let Some(bad) = corpus.sentences.iter().position(|s| s.sentence.is_empty()) {
        return Err(Error::Invalid(format!("training sentence {bad} has no tokens")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train_idx, holdout) = split(corpus.len(), config.validation_fraction, &mut rng);
    let (select_idx, selection) = if holdout.is_empty() {
        (&train_idx, "training")
    } else {
        (&holdout, "validation")
    };
    let tags = |i: usize| corpus.sentences[i].tags.as_slice();

    if config.variant == Variant::FeatureCrf {
        let sentences: Vec<_> = train_idx.iter().map(|&i| &corpus.sentences[i].sentence).collect();
        let mut model = FeatureCrf::new(config.clone(), &sentences, Arc::new(LexiconPosTagger))?;
        let encode = |i: usize| model.encode(&corpus.sentences[i].sentence, Some(tags(i)));
        let train_ex: Vec<FeatureExample> = train_idx.iter().map(|&i| encode(i)).collect();
        let select_ex: Vec<FeatureExample> = select_idx.iter().map(|&i| encode(i)).collect();
        let select: Vec<(&FeatureExample, &[Tag])> = select_ex.iter().zip(select_idx.iter().map(|&i| tags(i))).collect();
        let (log, best_epoch) = fit(&mut model, &train_ex, &select, selection, config, &mut rng)?;
        return Ok(TrainOutcome {
            model: Model::FeatureCrf(model),
            log,
            best_epoch,
            coverage: None,
            holdout,
        });
    }

    let words = train_idx
        .iter()
        .flat_map(|&i| corpus.sentences[i].sentence.tokens.iter().map(|t| t.text.as_str()));
    let vocab = Vocabulary::build(words, config.min_word_count, config.lowercase, |w| {
        pretrained.is_some_and(|p| p.contains(w))
    });
    let (mut model, coverage) = NeuralTagger::new(config.clone(), vocab, pretrained, &mut rng)?;
    let encode = |i: usize| {
        let s = &corpus.sentences[i];
        model.encode(&s.sentence, &corpus.context(i, config.context_cap), Some(&s.tags))
    };
    let train_ex: Vec<Encoded> = train_idx.iter().map(|&i| encode(i)).collect();
    let select_ex: Vec<Encoded> = select_idx.iter().map(|&i| encode(i)).collect();
    let select: Vec<(&Encoded, &[Tag])> = select_ex.iter().zip(select_idx.iter().map(|&i| tags(i))).collect();
    let (log, best_epoch) = fit(&mut model, &train_ex, &select, selection, config, &mut rng)?;
    Ok(TrainOutcome {
        model: Model::Neural(model),
        log,
        best_epoch,
        coverage: pretrained.map(|_| coverage),
        holdout,
    })
}

/// Trains the feature-based CRF regardless of the variant named in `config`.
pub fn train_feature_crf(corpus: &TaggedCorpus, config: &TaggerConfig) -> Result<TrainOutcome> {
    let cfg = TaggerConfig {
        variant: Variant::FeatureCrf,
        ..config.clone()
    };
    train(corpus, &cfg, None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<Prf>,
    pub mean: Prf,
}

/// k-fold cross-validation: each fold trains on the others and reports
/// test micro-P/R/F1; `mean` averages them.
pub fn cross_validate(
    corpus: &TaggedCorpus,
    config: &TaggerConfig,
    pretrained: Option<&PretrainedVectors>,
    folds: usize,
) -> Result<CrossValidation> {
    if folds < 2 || folds > corpus.len() {
        return Err(Error::Invalid(format!(
            "fold count must lie in 2..={} for this corpus",
            corpus.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut rng);
    let mut out = Vec::with_capacity(folds);
    for k in 0..folds {
        let mut test: Vec<usize> = idx.iter().copied().skip(k).step_by(folds).collect();
        test.sort_unstable();
        let keep: Vec<bool> = (0..corpus.len()).map(|i| test.binary_search(&i).is_err()).collect();
        let train_corpus = TaggedCorpus::new(
            corpus
                .sentences
                .iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(s, _)| s.clone())
                .collect(),
        );
        let outcome = train(&train_corpus, config, pretrained)?;
        let preds = outcome.model.tag_indices(corpus, &test)?;
        let gold: Vec<Vec<Tag>> = test.iter().map(|&i| corpus.sentences[i].tags.clone()).collect();
        out.push(micro_prf(&gold, &preds)?);
    }
    let n = out.len() as f64;
    let mean = Prf {
        precision: out.iter().map(|p| p.precision).sum::<f64>() / n,
        recall: out.iter().map(|p| p.recall).sum::<f64>() / n,
        f1: out.iter().map(|p| p.f1).sum::<f64>() / n,
    };
    Ok(CrossValidation { folds: out, mean })
}

