//! Word, character and context-sentence encoders.

mod pretrained;
mod rnn;
mod vocab;

use rand::Rng;

pub use self::pretrained::{embedding_matrix, load_pretrained_vectors, Coverage, PretrainedVectors};
pub use self::rnn::{gru_final_states, lstm_final_states, GruCell, LstmCell};
pub use self::vocab::{CharAlphabet, Vocabulary, PAD, UNK};
pub(crate) use self::rnn::lookup as resolve;
use self::rnn::{lookup, step_major};
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::numerics::{xavier_uniform, ParamId, ParamStore, Real, Tape, Var};

/// Longer words keep their first and last `MAX_WORD_CHARS / 2` characters.
pub const MAX_WORD_CHARS: usize = 32;

/// Character ids of `word`, truncated around the middle when very long.
pub fn char_ids(alphabet: &CharAlphabet, word: &str) -> Vec<usize> {
    let ids = alphabet.ids(word);
    if ids.len() <= MAX_WORD_CHARS {
        return ids;
    }
    let half = MAX_WORD_CHARS / 2;
    ids[..half].iter().chain(&ids[ids.len() - half..]).copied().collect()
}

/// Bidirectional character LSTM; a word is represented by both final states.
#[derive(Clone, Copy, Debug)]
pub struct CharEncoder {
    pub emb: ParamId,
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

impl CharEncoder {
    pub fn build<R: Real, G: Rng>(
        store: &mut ParamStore<R>,
        alphabet_len: usize,
        char_dim: usize,
        hidden: usize,
        mut rng: Option<&mut G>,
    ) -> Result<Self> {
        let emb = match rng.as_deref_mut() {
            Some(r) => store.add("char.emb", xavier_uniform(alphabet_len, char_dim, r)),
            None => lookup(store, "char.emb", &[alphabet_len, char_dim])?,
        };
        let fwd = LstmCell::build(store, "char.fwd", char_dim, hidden, rng.as_deref_mut())?;
        let bwd = LstmCell::build(store, "char.bwd", char_dim, hidden, rng)?;
        Ok(CharEncoder { emb, fwd, bwd })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    /// `[h^f ; h^b]` for each word, as a `T×2H` matrix.
    pub fn encode<R: Real>(&self, tape: &mut Tape<R>, words: &[Vec<usize>]) -> Result<Var> {
        if words.iter().any(Vec::is_empty) || words.is_empty() {
            return Err(Error::Empty("character sequence"));
        }
        let lengths: Vec<usize> = words.iter().map(Vec::len).collect();
        let reversed: Vec<Vec<usize>> = words.iter().map(|w| w.iter().rev().copied().collect()).collect();
        let emb = tape.param(self.emb);
        let mut finals = Vec::with_capacity(2);
        for (cell, seqs) in [(&self.fwd, words), (&self.bwd, &reversed[..])] {
            let (ids, _) = step_major(seqs, CharAlphabet::UNK_ID);
            let x = tape.gather_rows(emb, &ids)?;
            let xp = cell.project(tape, x)?;
            finals.push(lstm_final_states(tape, cell, xp, &lengths)?);
        }
        tape.concat_cols(&finals)
    }
}

/// Per-sentence GRU over its own word-embedding table, weights shared across
/// sentences. Each sentence is encoded from the zero state.
#[derive(Clone, Copy, Debug)]
pub struct ContextEncoder {
    pub emb: ParamId,
    pub gru: GruCell,
}

impl ContextEncoder {
    /// `emb` initializes the embedding table when building fresh parameters
    /// (`rng` set); it is ignored when resolving a loaded store.
    pub fn build<R: Real, G: Rng>(
        store: &mut ParamStore<R>,
        emb: Option<crate::numerics::Tensor<R>>,
        vocab_len: usize,
        word_dim: usize,
        hidden: usize,
        rng: Option<&mut G>,
    ) -> Result<Self> {
        let emb = match (&rng, emb) {
            (Some(_), Some(t)) => {
                if t.shape() != [vocab_len, word_dim] {
                    return Err(Error::Shape {
                        op: "context embedding",
                        left: t.shape().to_vec(),
                        right: vec![vocab_len, word_dim],
                    });
                }
                store.add("ctx.emb", t)
            }
            (Some(_), None) => return Err(Error::Invalid("context embedding initializer missing".into())),
            (None, _) => lookup(store, "ctx.emb", &[vocab_len, word_dim])?,
        };
        let gru = GruCell::build(store, "ctx.gru", word_dim, hidden, rng)?;
        Ok(ContextEncoder { emb, gru })
    }

    pub fn output_dim(&self) -> usize {
        self.gru.hidden
    }

    /// One final state per sentence (`m×H_c`), or `None` when `m = 0`.
    pub fn encode<R: Real>(&self, tape: &mut Tape<R>, sentences: &[Vec<usize>]) -> Result<Option<Var>> {
        if sentences.is_empty() {
            return Ok(None);
        }
        if sentences.iter().any(Vec::is_empty) {
            return Err(Error::Empty("context sentence"));
        }
        let lengths: Vec<usize> = sentences.iter().map(Vec::len).collect();
        let (ids, _) = step_major(sentences, Vocabulary::PAD_ID);
        let emb = tape.param(self.emb);
        let x = tape.gather_rows(emb, &ids)?;
        let xp = self.gru.project(tape, x)?;
        gru_final_states(tape, &self.gru, xp, &lengths).map(Some)
    }
}

/// Input rows `v_w = [E_w w ; h^f ; h^b]` (word part only without a character encoder).
pub fn word_inputs<R: Real>(
    tape: &mut Tape<R>,
    word_emb: ParamId,
    chars: Option<&CharEncoder>,
    word_ids: &[usize],
    char_ids: &[Vec<usize>],
) -> Result<Var> {
    let e = tape.param(word_emb);
    let words = tape.gather_rows(e, word_ids)?;
    match chars {
        Some(enc) => {
            let c = enc.encode(tape, char_ids)?;
            tape.concat_cols(&[words, c])
        }
        None => Ok(words),
    }
}

/// Character encoding of a single word, `2·H_ch` values.
pub fn encode_chars<R: Real>(
    store: &ParamStore<R>,
    enc: &CharEncoder,
    alphabet: &CharAlphabet,
    word: &str,
) -> Result<Vec<R>> {
    let mut tape = Tape::new(store);
    let v = enc.encode(&mut tape, &[char_ids(alphabet, word)])?;
    Ok(tape.value(v).data().to_vec())
}

/// Input vector of a single word; the padding token maps to zeros.
pub fn input_vector<R: Real>(
    store: &ParamStore<R>,
    word_emb: ParamId,
    chars: Option<(&CharEncoder, &CharAlphabet)>,
    vocab: &Vocabulary,
    word: &str,
) -> Result<Vec<R>> {
    let width = store.get(word_emb).cols() + chars.map_or(0, |(c, _)| c.output_dim());
    let id = vocab.id(word);
    if id == Vocabulary::PAD_ID {
        return Ok(vec![R::zero(); width]);
    }
    let mut tape = Tape::new(store);
    let ids = chars.map(|(_, a)| vec![char_ids(a, word)]).unwrap_or_default();
    let v = word_inputs(&mut tape, word_emb, chars.map(|(c, _)| c), &[id], &ids)?;
    Ok(tape.value(v).data().to_vec())
}

/// Context vectors for `context`, in order; empty for no context.
pub fn encode_context<R: Real>(
    store: &ParamStore<R>,
    enc: &ContextEncoder,
    vocab: &Vocabulary,
    context: &[&Sentence],
) -> Result<Vec<Vec<R>>> {
    let ids: Vec<Vec<usize>> = context
        .iter()
        .map(|s| s.tokens.iter().map(|t| vocab.id(&t.text)).collect())
        .collect();
    let mut tape = Tape::new(store);
    Ok(match enc.encode(&mut tape, &ids)? {
        Some(v) => {
            let t = tape.value(v);
            (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
        }
        None => Vec::new(),
    })
}
