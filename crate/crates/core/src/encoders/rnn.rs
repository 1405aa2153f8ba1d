use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{xavier_uniform, ParamId, ParamStore, Real, Tape, Tensor, Var};

pub(crate) fn lookup<R: Real>(store: &ParamStore<R>, name: &str, shape: &[usize]) -> Result<ParamId> {
    let id = store
        .find(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{name}'")))?;
    if store.get(id).shape() != shape {
        return Err(Error::Checkpoint(format!(
            "tensor '{name}' has shape {:?}, expected {shape:?}",
            store.get(id).shape()
        )));
    }
    Ok(id)
}

/// LSTM cell with gate order input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    /// With `rng` set, fresh parameters are added (forget-gate bias 1);
    /// otherwise existing tensors named `<prefix>.*` are resolved.
    pub fn build<R: Real, G: Rng>(
        store: &mut ParamStore<R>,
        prefix: &str,
        input: usize,
        hidden: usize,
        mut rng: Option<&mut G>,
    ) -> Result<Self> {
        let h4 = 4 * hidden;
        let w_x = match rng.as_deref_mut() {
            Some(r) => store.add(format!("{prefix}.w_x"), xavier_uniform(input, h4, r)),
            None => lookup(store, &format!("{prefix}.w_x"), &[input, h4])?,
        };
        let w_h = match rng.as_deref_mut() {
            Some(r) => store.add(format!("{prefix}.w_h"), xavier_uniform(hidden, h4, r)),
            None => lookup(store, &format!("{prefix}.w_h"), &[hidden, h4])?,
        };
        let b = match rng {
            Some(_) => {
                let mut b = Tensor::zeros(&[1, h4]);
                for v in &mut b.data_mut()[hidden..2 * hidden] {
                    *v = R::one();
                }
                store.add(format!("{prefix}.b"), b)
            }
            None => lookup(store, &format!("{prefix}.b"), &[1, h4])?,
        };
        Ok(LstmCell {
            w_x,
            w_h,
            b,
            input,
            hidden,
        })
    }

    /// `x·W_x + b` for every row of `x`.
    pub fn project<R: Real>(&self, tape: &mut Tape<R>, x: Var) -> Result<Var> {
        let w = tape.param(self.w_x);
        let b = tape.param(self.b);
        let xw = tape.matmul(x, w)?;
        tape.add(xw, b)
    }

    /// One step given the projected input `xp` (`B×4H`); `None` is the zero state.
    pub fn step<R: Real>(&self, tape: &mut Tape<R>, xp: Var, state: Option<(Var, Var)>) -> Result<(Var, Var)> {
        let h = self.hidden;
        let gates = match state {
            Some((hp, _)) => {
                let w = tape.param(self.w_h);
                let hw = tape.matmul(hp, w)?;
                tape.add(xp, hw)?
            }
            None => xp,
        };
        let i = tape.slice_cols(gates, 0, h)?;
        let i = tape.sigmoid(i);
        let g = tape.slice_cols(gates, 2 * h, 3 * h)?;
        let g = tape.tanh(g);
        let o = tape.slice_cols(gates, 3 * h, 4 * h)?;
        let o = tape.sigmoid(o);
        let ig = tape.mul(i, g)?;
        let c = match state {
            Some((_, cp)) => {
                let f = tape.slice_cols(gates, h, 2 * h)?;
                let f = tape.sigmoid(f);
                let fc = tape.mul(f, cp)?;
                tape.add(fc, ig)?
            }
            None => ig,
        };
        let tc = tape.tanh(c);
        let hn = tape.mul(o, tc)?;
        Ok((hn, c))
    }
}

/// GRU cell with gate order reset, update, candidate.
#[derive(Clone, Copy, Debug)]
pub struct GruCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b_x: ParamId,
    pub b_h: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn build<R: Real, G: Rng>(
        store: &mut ParamStore<R>,
        prefix: &str,
        input: usize,
        hidden: usize,
        mut rng: Option<&mut G>,
    ) -> Result<Self> {
        let h3 = 3 * hidden;
        let mut get = |suffix: &str, rows: usize, xavier: bool| -> Result<ParamId> {
            let name = format!("{prefix}.{suffix}");
            match rng.as_deref_mut() {
                Some(r) if xavier => Ok(store.add(name, xavier_uniform(rows, h3, r))),
                Some(_) => Ok(store.add(name, Tensor::zeros(&[rows, h3]))),
                None => lookup(store, &name, &[rows, h3]),
            }
        };
        Ok(GruCell {
            w_x: get("w_x", input, true)?,
            w_h: get("w_h", hidden, true)?,
            b_x: get("b_x", 1, false)?,
            b_h: get("b_h", 1, false)?,
            input,
            hidden,
        })
    }

    pub fn project<R: Real>(&self, tape: &mut Tape<R>, x: Var) -> Result<Var> {
        let w = tape.param(self.w_x);
        let b = tape.param(self.b_x);
        let xw = tape.matmul(x, w)?;
        tape.add(xw, b)
    }

    /// `h' = (1 − z)·n + z·h` with `n = tanh(x_n + r·(h·W_hn + b_hn))`.
    pub fn step<R: Real>(&self, tape: &mut Tape<R>, xp: Var, h: Var) -> Result<Var> {
        let hd = self.hidden;
        let w = tape.param(self.w_h);
        let b = tape.param(self.b_h);
        let hw = tape.matmul(h, w)?;
        let hp = tape.add(hw, b)?;
        let xrz = tape.slice_cols(xp, 0, 2 * hd)?;
        let hrz = tape.slice_cols(hp, 0, 2 * hd)?;
        let rz = tape.add(xrz, hrz)?;
        let rz = tape.sigmoid(rz);
        let r = tape.slice_cols(rz, 0, hd)?;
        let z = tape.slice_cols(rz, hd, 2 * hd)?;
        let xn = tape.slice_cols(xp, 2 * hd, 3 * hd)?;
        let hn = tape.slice_cols(hp, 2 * hd, 3 * hd)?;
        let rhn = tape.mul(r, hn)?;
        let n = tape.add(xn, rhn)?;
        let n = tape.tanh(n);
        let diff = tape.sub(h, n)?;
        let zd = tape.mul(z, diff)?;
        tape.add(n, zd)
    }
}

/// Step-major layout of a batch of id sequences: row `s·B + b` holds step `s`
/// of sequence `b`, with `pad` past each sequence's end.
pub(crate) fn step_major(seqs: &[Vec<usize>], pad: usize) -> (Vec<usize>, usize) {
    let steps = seqs.iter().map(Vec::len).max().unwrap_or(0);
    let mut ids = Vec::with_capacity(steps * seqs.len());
    for s in 0..steps {
        for seq in seqs {
            ids.push(seq.get(s).copied().unwrap_or(pad));
        }
    }
    (ids, steps)
}

/// Picks each sequence's state after its last real step from the stacked
/// per-step states. Padded steps run past the end but never reach the output.
fn final_rows<R: Real>(tape: &mut Tape<R>, states: &[Var], lengths: &[usize]) -> Result<Var> {
    let all = tape.stack_rows(states)?;
    let b = lengths.len();
    let rows: Vec<usize> = lengths.iter().enumerate().map(|(i, &len)| (len - 1) * b + i).collect();
    tape.gather_rows(all, &rows)
}

/// Final hidden states (`B×H`) of an LSTM run over the step-major projected inputs.
pub fn lstm_final_states<R: Real>(tape: &mut Tape<R>, cell: &LstmCell, xp: Var, lengths: &[usize]) -> Result<Var> {
    let b = lengths.len();
    let steps = lengths.iter().copied().max().unwrap_or(0);
    if b == 0 || lengths.contains(&0) {
        return Err(Error::Empty("recurrent input sequence"));
    }
    let mut state = None;
    let mut hs = Vec::with_capacity(steps);
    for s in 0..steps {
        let x = tape.slice_rows(xp, s * b, (s + 1) * b)?;
        let (h, c) = cell.step(tape, x, state)?;
        hs.push(h);
        state = Some((h, c));
    }
    final_rows(tape, &hs, lengths)
}

/// Final hidden states (`B×H`) of a GRU run from the zero state.
pub fn gru_final_states<R: Real>(tape: &mut Tape<R>, cell: &GruCell, xp: Var, lengths: &[usize]) -> Result<Var> {
    let b = lengths.len();
    let steps = lengths.iter().copied().max().unwrap_or(0);
    if b == 0 || lengths.contains(&0) {
        return Err(Error::Empty("recurrent input sequence"));
    }
    let mut h = tape.constant(Tensor::zeros(&[b, cell.hidden]));
    let mut hs = Vec::with_capacity(steps);
    for s in 0..steps {
        let x = tape.slice_rows(xp, s * b, (s + 1) * b)?;
        h = cell.step(tape, x, h)?;
        hs.push(h);
    }
    final_rows(tape, &hs, lengths)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numerics::{grad_check, GradCheckConfig};

    fn rows_of(t: &Tensor<f64>) -> Vec<Vec<f64>> {
        (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
    }

    #[test]
    fn forget_bias_is_one() {
        let mut store = ParamStore::<f32>::new();
        let cell = LstmCell::build(&mut store, "l", 3, 2, Some(&mut ChaCha8Rng::seed_from_u64(0))).unwrap();
        assert_eq!(store.get(cell.b).data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn batched_run_matches_individual_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::<f64>::new();
        let table = store.add("emb", xavier_uniform(6, 3, &mut rng));
        let lstm = LstmCell::build(&mut store, "l", 3, 4, Some(&mut rng)).unwrap();
        let gru = GruCell::build(&mut store, "g", 3, 4, Some(&mut rng)).unwrap();
        let seqs = vec![vec![1, 2, 3], vec![4], vec![5, 1]];
        let run = |seqs: &[Vec<usize>]| {
            let mut tape = Tape::new(&store);
            let (ids, _) = step_major(seqs, 0);
            let lens: Vec<usize> = seqs.iter().map(Vec::len).collect();
            let e = tape.param(table);
            let x = tape.gather_rows(e, &ids).unwrap();
            let xp = lstm.project(&mut tape, x).unwrap();
            let hl = lstm_final_states(&mut tape, &lstm, xp, &lens).unwrap();
            let xg = gru.project(&mut tape, x).unwrap();
            let hg = gru_final_states(&mut tape, &gru, xg, &lens).unwrap();
            (rows_of(tape.value(hl)), rows_of(tape.value(hg)))
        };
        let (bl, bg) = run(&seqs);
        for (i, s) in seqs.iter().enumerate() {
            let (l, g) = run(std::slice::from_ref(s));
            for (a, b) in bl[i].iter().zip(&l[0]) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in bg[i].iter().zip(&g[0]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cells_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::<f64>::new();
        let table = store.add("emb", xavier_uniform(6, 3, &mut rng));
        let lstm = LstmCell::build(&mut store, "l", 3, 2, Some(&mut rng)).unwrap();
        let gru = GruCell::build(&mut store, "g", 3, 2, Some(&mut rng)).unwrap();
        let seqs = vec![vec![1, 2, 3], vec![4, 5]];
        let report = grad_check(
            &store,
            |t| {
                let (ids, _) = step_major(&seqs, 0);
                let e = t.param(table);
                let x = t.gather_rows(e, &ids)?;
                let xp = lstm.project(t, x)?;
                let hl = lstm_final_states(t, &lstm, xp, &[3, 2])?;
                let xg = gru.project(t, x)?;
                let hg = gru_final_states(t, &gru, xg, &[3, 2])?;
                let both = t.mul(hl, hg)?;
                let s = t.sum(both);
                let q = t.sum_squares(hl);
                t.add(s, q)
            },
            GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }
}
