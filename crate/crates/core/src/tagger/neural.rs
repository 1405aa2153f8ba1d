use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::TaggerConfig;
use crate::corpus::{Sentence, Tag};
use crate::crf::{self, EmissionScores, TransitionMatrix};
use crate::encoders::{
    char_ids, embedding_matrix, word_inputs, CharAlphabet, CharEncoder, ContextEncoder, Coverage, LstmCell,
    PretrainedVectors, Vocabulary,
};
use crate::error::{Error, Result};
use crate::numerics::{
    grad_check, xavier_uniform, Checkpoint, GradCheckConfig, GradCheckReport, ParamId, ParamStore, Real, Tape, Tensor,
    Var,
};

/// Attention parameters shared by both sentence-LSTM directions.
#[derive(Clone, Copy, Debug)]
pub struct Attention {
    pub w_a: ParamId,
    pub u_a: ParamId,
    pub v_a: ParamId,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub word_emb: ParamId,
    pub chars: Option<CharEncoder>,
    pub context: Option<ContextEncoder>,
    pub fwd: LstmCell,
    pub bwd: LstmCell,
    /// Attention-vector input weights of each direction (`H_c × 4H`).
    pub ctx_in: Option<(ParamId, ParamId)>,
    pub attention: Option<Attention>,
    pub w_o: ParamId,
    pub b_o: ParamId,
    pub transitions: Option<ParamId>,
}

impl Layout {
    /// Adds fresh parameters when `init` is given, otherwise resolves a loaded store.
    fn build<R: Real, G: Rng>(
        store: &mut ParamStore<R>,
        cfg: &TaggerConfig,
        vocab_len: usize,
        alphabet_len: usize,
        mut init: Option<(&mut G, Tensor<R>)>,
    ) -> Result<Self> {
        let v = cfg.variant;
        let k = Tag::COUNT;
        let h = cfg.hidden;
        let word_emb_init = init.as_ref().map(|(_, t)| t.clone());
        let mut rng = init.as_mut().map(|(r, _)| &mut **r);

        let mat = |store: &mut ParamStore<R>, rng: Option<&mut G>, name: &str, rows: usize, cols: usize, zero: bool| {
            match rng {
                Some(r) if !zero => Ok(store.add(name, xavier_uniform(rows, cols, r))),
                Some(_) => Ok(store.add(name, Tensor::zeros(&[rows, cols]))),
                None => crate::encoders::resolve(store, name, &[rows, cols]),
            }
        };

        let word_emb = match &word_emb_init {
            Some(t) => store.add("word.emb", t.clone()),
            None => crate::encoders::resolve(store, "word.emb", &[vocab_len, cfg.word_dim])?,
        };
        let chars = if v.use_char_encoder() {
            Some(CharEncoder::build(
                store,
                alphabet_len,
                cfg.char_dim,
                cfg.char_hidden,
                rng.as_deref_mut(),
            )?)
        } else {
            None
        };
        let context = if v.use_context_attention() {
            Some(ContextEncoder::build(
                store,
                word_emb_init.clone(),
                vocab_len,
                cfg.word_dim,
                cfg.context_hidden,
                rng.as_deref_mut(),
            )?)
        } else {
            None
        };
        let input = cfg.word_dim + chars.map_or(0, |c| c.output_dim());
        let fwd = LstmCell::build(store, "lstm.fwd", input, h, rng.as_deref_mut())?;
        let bwd = LstmCell::build(store, "lstm.bwd", input, h, rng.as_deref_mut())?;
        let (ctx_in, attention) = if v.use_context_attention() {
            let hc = cfg.context_hidden;
            let a = cfg.attention_dim;
            let f = mat(store, rng.as_deref_mut(), "lstm.fwd.w_ctx", hc, 4 * h, false)?;
            let b = mat(store, rng.as_deref_mut(), "lstm.bwd.w_ctx", hc, 4 * h, false)?;
            let att = Attention {
                w_a: mat(store, rng.as_deref_mut(), "attn.w_a", h, a, false)?,
                u_a: mat(store, rng.as_deref_mut(), "attn.u_a", hc, a, false)?,
                v_a: mat(store, rng.as_deref_mut(), "attn.v_a", 1, a, false)?,
            };
            (Some((f, b)), Some(att))
        } else {
            (None, None)
        };
        let w_o = mat(store, rng.as_deref_mut(), "out.w", 2 * h, k, false)?;
        let b_o = mat(store, rng.as_deref_mut(), "out.b", 1, k, true)?;
        let transitions = if v.use_crf() {
            Some(mat(store, rng.as_deref_mut(), "crf.transitions", k + 2, k + 2, true)?)
        } else {
            None
        };
        Ok(Layout {
            word_emb,
            chars,
            context,
            fwd,
            bwd,
            ctx_in,
            attention,
            w_o,
            b_o,
            transitions,
        })
    }
}

/// A sentence mapped to model ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub word_ids: Vec<usize>,
    pub char_ids: Vec<Vec<usize>>,
    pub context: Vec<Vec<usize>>,
    pub gold: Vec<usize>,
}

/// Per-token attention weights of each direction; row `t` is the
/// distribution used while reading token `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub forward: Vec<Vec<f64>>,
    pub backward: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagPrediction {
    pub tags: Vec<Tag>,
    pub score: f64,
    pub attention: Option<AttentionTrace>,
}

/// `α = softmax(v_aᵀ tanh(W_a h + U_a c_i))`, `a_c = Σ α_i c_i`. `ctx_proj`
/// holds the precomputed `c_i U_a` rows; `None` for `h` is the zero state.
pub(crate) fn attend_on_tape<R: Real>(
    tape: &mut Tape<R>,
    att: &Attention,
    h_prev: Option<Var>,
    ctx: Var,
    ctx_proj: Var,
) -> Result<(Var, Var)> {
    let pre = match h_prev {
        Some(h) => {
            let w = tape.param(att.w_a);
            let hw = tape.matmul(h, w)?;
            tape.add(ctx_proj, hw)?
        }
        None => ctx_proj,
    };
    let s = tape.tanh(pre);
    let st = tape.transpose(s);
    let v = tape.param(att.v_a);
    let e = tape.matmul(v, st)?;
    let alpha = tape.softmax(e);
    let a_c = tape.matmul(alpha, ctx)?;
    Ok((alpha, a_c))
}

pub(crate) struct Forward {
    /// Scores handed to the CRF (or the per-token distribution without one).
    pub emissions: Var,
    pub logits: Var,
    pub alphas: [Vec<Var>; 2],
}

pub(crate) fn forward<R: Real>(layout: &Layout, cfg: &TaggerConfig, tape: &mut Tape<R>, ex: &Encoded) -> Result<Forward> {
    let t_len = ex.word_ids.len();
    if t_len == 0 {
        return Err(Error::Empty("sentence"));
    }
    let x = word_inputs(tape, layout.word_emb, layout.chars.as_ref(), &ex.word_ids, &ex.char_ids)?;
    let ctx = match (&layout.context, &layout.attention) {
        (Some(enc), Some(att)) => match enc.encode(tape, &ex.context)? {
            Some(c) => {
                let u = tape.param(att.u_a);
                let cp = tape.matmul(c, u)?;
                Some((c, cp, *att))
            }
            None => None,
        },
        _ => None,
    };
    let mut directions = Vec::with_capacity(2);
    let mut alphas = [Vec::new(), Vec::new()];
    for (d, cell) in [layout.fwd, layout.bwd].iter().enumerate() {
        let xp = cell.project(tape, x)?;
        let mut state: Option<(Var, Var)> = None;
        let mut hs: Vec<Option<Var>> = vec![None; t_len];
        let mut dir_alphas = vec![None; t_len];
        for step in 0..t_len {
            let t = if d == 0 { step } else { t_len - 1 - step };
            let mut input = tape.row(xp, t)?;
            if let (Some((c, cp, att)), Some((wf, wb))) = (ctx, layout.ctx_in) {
                let (alpha, a_c) = attend_on_tape(tape, &att, state.map(|s| s.0), c, cp)?;
                let w = tape.param(if d == 0 { wf } else { wb });
                let contrib = tape.matmul(a_c, w)?;
                input = tape.add(input, contrib)?;
                dir_alphas[t] = Some(alpha);
            }
            let (h, c) = cell.step(tape, input, state)?;
            hs[t] = Some(h);
            state = Some((h, c));
        }
        let hs: Vec<Var> = hs.into_iter().map(|h| h.expect("every step visited")).collect();
        directions.push(tape.stack_rows(&hs)?);
        alphas[d] = dir_alphas.into_iter().flatten().collect();
    }
    let h = tape.concat_cols(&directions)?;
    let w = tape.param(layout.w_o);
    let b = tape.param(layout.b_o);
    let hw = tape.matmul(h, w)?;
    let logits = tape.add(hw, b)?;
    let emissions = if !cfg.variant.use_crf() || cfg.softmax_emissions {
        tape.softmax(logits)
    } else {
        logits
    };
    Ok(Forward {
        emissions,
        logits,
        alphas,
    })
}

pub(crate) fn transition_mask(cfg: &TaggerConfig) -> Option<Arc<Vec<bool>>> {
    cfg.bio_constraints.then(crf::bio_transition_mask)
}

pub(crate) fn loss_on_tape<R: Real>(layout: &Layout, cfg: &TaggerConfig, tape: &mut Tape<R>, ex: &Encoded) -> Result<Var> {
    let f = forward(layout, cfg, tape, ex)?;
    match layout.transitions {
        Some(a) => {
            let a = tape.param(a);
            tape.crf_nll(f.emissions, a, &ex.gold, transition_mask(cfg))
        }
        None => tape.softmax_cross_entropy(f.logits, &ex.gold),
    }
}

/// Viterbi path for CRF models, per-token argmax otherwise. The score is the
/// path score, or the summed log-probability of the argmax tags.
pub(crate) fn decode(cfg: &TaggerConfig, e: &EmissionScores, transitions: Option<&Tensor<f32>>) -> Result<(Vec<Tag>, f64)> {
    let (path, score) = match transitions {
        Some(a) => {
            let k = e.num_tags();
            let mut a = TransitionMatrix::from_values(k, a.data().iter().map(|&v| v as f64).collect())?;
            if let Some(mask) = transition_mask(cfg) {
                a = a.with_allowed(mask)?;
            }
            crf::viterbi_decode(e, &a)?
        }
        None => {
            let mut score = 0.0;
            let path = (0..e.len())
                .map(|t| {
                    let row = e.row(t);
                    let best = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
                    score += row[best].max(f64::MIN_POSITIVE).ln();
                    best
                })
                .collect();
            (path, score)
        }
    };
    let tags = path
        .into_iter()
        .map(|i| Tag::from_index(i).ok_or_else(|| Error::Invalid(format!("tag index {i} out of range"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((tags, score))
}

/// BiLSTM tagger with optional character encoder, context attention and CRF layer.
#[derive(Clone, Debug)]
pub struct NeuralTagger {
    pub config: TaggerConfig,
    pub vocab: Vocabulary,
    pub alphabet: CharAlphabet,
    pub params: ParamStore<f32>,
    pub(crate) layout: Layout,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    kind: String,
    config: TaggerConfig,
    vocab: Vocabulary,
}

pub(crate) const NEURAL_KIND: &str = "neural";

impl NeuralTagger {
    pub fn new(
        config: TaggerConfig,
        vocab: Vocabulary,
        pretrained: Option<&PretrainedVectors>,
        rng: &mut impl Rng,
    ) -> Result<(Self, Coverage)> {
        config.validate()?;
        if !config.variant.is_neural() {
            return Err(Error::Invalid(format!("variant '{}' is not a neural tagger", config.variant)));
        }
        let alphabet = CharAlphabet::ascii();
        let (emb, coverage) = embedding_matrix::<f32>(&vocab, pretrained, config.word_dim, rng)?;
        let mut params = ParamStore::new();
        let layout = Layout::build(&mut params, &config, vocab.len(), alphabet.len(), Some((rng, emb)))?;
        if config.freeze_embeddings {
            params.set_trainable(layout.word_emb, false);
            if let Some(c) = layout.context {
                params.set_trainable(c.emb, false);
            }
        }
        Ok((
            NeuralTagger {
                config,
                vocab,
                alphabet,
                params,
                layout,
            },
            coverage,
        ))
    }

    pub fn encode(&self, sentence: &Sentence, context: &[&Sentence], gold: Option<&[Tag]>) -> Encoded {
        let word_ids = sentence.tokens.iter().map(|t| self.vocab.id(&t.text)).collect();
        let char_ids = if self.layout.chars.is_some() {
            sentence.tokens.iter().map(|t| char_ids(&self.alphabet, &t.text)).collect()
        } else {
            Vec::new()
        };
        let context = if self.layout.attention.is_some() {
            let skip = context.len().saturating_sub(self.config.context_cap);
            context[skip..]
                .iter()
                .filter(|s| !s.is_empty())
                .map(|s| s.tokens.iter().map(|t| self.vocab.id(&t.text)).collect())
                .collect()
        } else {
            Vec::new()
        };
        let gold = gold.map(|g| g.iter().map(|t| t.index()).collect()).unwrap_or_default();
        Encoded {
            word_ids,
            char_ids,
            context,
            gold,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn loss_on_tape<R: Real>(&self, tape: &mut Tape<R>, ex: &Encoded) -> Result<Var> {
        loss_on_tape(&self.layout, &self.config, tape, ex)
    }

    pub fn loss(&self, ex: &Encoded) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let l = self.loss_on_tape(&mut tape, ex)?;
        Ok(tape.value(l).scalar_value() as f64)
    }

    fn run(&self, ex: &Encoded) -> Result<(EmissionScores, Option<AttentionTrace>)> {
        let mut tape = Tape::new(&self.params);
        let f = forward(&self.layout, &self.config, &mut tape, ex)?;
        let ev = tape.value(f.emissions);
        let e = EmissionScores::new(ev.rows(), ev.cols(), ev.data().iter().map(|&v| v as f64).collect())?;
        let attention = self.layout.attention.map(|_| {
            let rows = |vs: &[Var]| -> Vec<Vec<f64>> {
                vs.iter()
                    .map(|&v| tape.value(v).data().iter().map(|&x| x as f64).collect())
                    .collect()
            };
            AttentionTrace {
                forward: rows(&f.alphas[0]),
                backward: rows(&f.alphas[1]),
            }
        });
        Ok((e, attention))
    }

    pub fn emissions(&self, sentence: &Sentence, context: &[&Sentence]) -> Result<EmissionScores> {
        Ok(self.run(&self.encode(sentence, context, None))?.0)
    }

    pub fn predict(&self, ex: &Encoded) -> Result<TagPrediction> {
        let (e, attention) = self.run(ex)?;
        let (tags, score) = decode(&self.config, &e, self.layout.transitions.map(|a| self.params.get(a)))?;
        Ok(TagPrediction { tags, score, attention })
    }

    pub fn tag_sentence(&self, sentence: &Sentence, context: &[&Sentence]) -> Result<TagPrediction> {
        if sentence.is_empty() {
            return Err(Error::Empty("sentence"));
        }
        self.predict(&self.encode(sentence, context, None))
    }

    /// Attention of the model over already-encoded context vectors, from
    /// hidden state `h_prev` (the zero state when empty). No context gives
    /// empty weights and a zero vector.
    pub fn attend(&self, h_prev: &[f32], ctx: &[Vec<f32>]) -> Result<(Vec<f32>, Vec<f32>)> {
        let att = self
            .layout
            .attention
            .ok_or_else(|| Error::Invalid("variant has no context attention".into()))?;
        if ctx.is_empty() {
            return Ok((Vec::new(), vec![0.0; self.config.context_hidden]));
        }
        let mut tape = Tape::new(&self.params);
        let c = tape.constant(Tensor::matrix(ctx.len(), ctx[0].len(), ctx.concat())?);
        let u = tape.param(att.u_a);
        let cp = tape.matmul(c, u)?;
        let h = if h_prev.is_empty() {
            None
        } else {
            Some(tape.constant(Tensor::row(h_prev.to_vec())))
        };
        let (alpha, a_c) = attend_on_tape(&mut tape, &att, h, c, cp)?;
        Ok((tape.value(alpha).data().to_vec(), tape.value(a_c).data().to_vec()))
    }

    /// Finite-difference check of the training loss in double precision.
    pub fn grad_check(&self, ex: &Encoded, config: GradCheckConfig) -> Result<GradCheckReport> {
        let store: ParamStore<f64> = self.params.cast();
        grad_check(&store, |t| loss_on_tape(&self.layout, &self.config, t, ex), config)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = Metadata {
            kind: NEURAL_KIND.into(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
        };
        Checkpoint {
            metadata: serde_json::to_string(&meta).expect("metadata serializes"),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let meta: Metadata = serde_json::from_str(&ck.metadata)?;
        if meta.kind != NEURAL_KIND {
            return Err(Error::Checkpoint(format!("expected a neural model, found '{}'", meta.kind)));
        }
        meta.config.validate()?;
        let alphabet = CharAlphabet::ascii();
        let mut params = ck.params;
        let layout = Layout::build::<f32, rand_chacha::ChaCha8Rng>(
            &mut params,
            &meta.config,
            meta.vocab.len(),
            alphabet.len(),
            None,
        )?;
        if meta.config.freeze_embeddings {
            params.set_trainable(layout.word_emb, false);
            if let Some(c) = layout.context {
                params.set_trainable(c.emb, false);
            }
        }
        Ok(NeuralTagger {
            config: meta.config,
            vocab: meta.vocab,
            alphabet,
            params,
            layout,
        })
    }
}
