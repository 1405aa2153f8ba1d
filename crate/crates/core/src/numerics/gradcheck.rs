use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub h: f64,
    /// Check at most this many coordinates per parameter (all when `None`).
    pub sample_per_param: Option<usize>,
    pub seed: u64,
    /// Lower bound of the relative-error denominator, so that gradients that
    /// are zero up to roundoff do not dominate the report.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            sample_per_param: None,
            seed: 0,
            floor: 1e-5,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter name, coordinate, analytic and numeric value of the worst case.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compares tape gradients of `f` with central finite differences
/// `(f(θ+h) − f(θ−h)) / 2h`, in double precision.
pub fn grad_check<F>(store: &ParamStore<f64>, f: F, config: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>) -> Result<Var>,
{
    if !(config.h > 0.0) {
        return Err(Error::Invalid("finite-difference step must be positive".into()));
    }
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::new(s);
        let loss = f(&mut tape)?;
        let v = tape.value(loss).scalar_value();
        if !v.is_finite() {
            return Err(Error::NonFinite("objective"));
        }
        Ok(v)
    };
    let analytic = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        if !tape.value(loss).scalar_value().is_finite() {
            return Err(Error::NonFinite("objective"));
        }
        tape.backward(loss)?
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut work = store.clone();
    let mut report = GradCheckReport::default();
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let n = store.get(id).len();
        let coords: Vec<usize> = match config.sample_per_param {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for i in coords {
            let orig = work.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + config.h;
            let up = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig - config.h;
            let down = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig;

            let numeric = (up - down) / (2.0 * config.h);
            let a = analytic.get(id).data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(config.floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                if rel >= report.max_rel_error {
                    report.worst = Some((store.name(id).to_string(), i, a, numeric));
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn quadratic_is_exact() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::row(vec![0.3, -1.2, 2.0]));
        let report = grad_check(
            &store,
            |t| {
                let v = t.param(x);
                let sq = t.mul(v, v)?;
                Ok(t.sum(sq))
            },
            GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.checked, 3);
        assert!(report.max_rel_error < 1e-7, "{report:?}");
    }

    #[test]
    fn constant_objective() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::row(vec![0.3, -1.2]));
        let report = grad_check(
            &store,
            |t| {
                let _ = t.param(x);
                Ok(t.constant(Tensor::scalar(4.0)))
            },
            GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn non_finite_objective() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::row(vec![0.0]));
        let res = grad_check(
            &store,
            |t| {
                let _ = t.param(x);
                Ok(t.constant(Tensor::scalar(f64::NAN)))
            },
            GradCheckConfig::default(),
        );
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }

    /// Every tape kernel on random shapes up to 8×8 at h = 1e-3.
    #[test]
    fn every_kernel_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for round in 0..6 {
            let m = rng.gen_range(1..=8);
            let k = rng.gen_range(1..=8);
            let n = rng.gen_range(2..=8);
            let mut rand_t = |r: usize, c: usize| {
                Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
            };
            let mut store = ParamStore::new();
            let a = store.add("a", rand_t(m, k));
            let b = store.add("b", rand_t(k, n));
            let bias = store.add("bias", rand_t(1, n));
            let c = store.add("c", rand_t(m, n));
            let table = store.add("table", rand_t(5, n));
            let gold: Vec<usize> = (0..m).map(|i| (i * 7 + round) % n).collect();
            let cfg = GradCheckConfig {
                h: 1e-3,
                ..Default::default()
            };
            let report = grad_check(
                &store,
                |t| {
                    let (a, b, bias, c, table) = (t.param(a), t.param(b), t.param(bias), t.param(c), t.param(table));
                    let ab = t.matmul(a, b)?;
                    let x = t.add(ab, bias)?;
                    let th = t.tanh(x);
                    let sg = t.sigmoid(c);
                    let prod = t.mul(th, sg)?;
                    let diff = t.sub(prod, c)?;
                    let sm = t.softmax(diff);
                    let lse = t.log_sum_exp(prod);
                    let cat = t.concat_cols(&[sm, prod])?;
                    let sl = t.slice_cols(cat, 1, n + 1)?;
                    let r0 = t.row(sl, 0)?;
                    let top = t.slice_rows(table, 1, 3)?;
                    let s5 = t.sum_squares(top);
                    let g = t.gather_rows(table, &[0, 3, 3])?;
                    let gs = t.gather_sum_rows(table, vec![vec![1, 2], vec![], vec![4, 4]])?;
                    let st = t.stack_rows(&[r0, g, r0])?;
                    let dt = t.transpose(diff);
                    let outer = t.matmul(dt, c)?;
                    let s4 = t.sum(outer);
                    let xent = t.softmax_cross_entropy(diff, &gold)?;
                    let sq = t.sum_squares(st);
                    let mixed = t.mul(g, gs)?;
                    let s1 = t.sum(mixed);
                    let s2 = t.sum(lse);
                    let s3 = t.scale(sq, 0.5);
                    let total = t.add(s1, s2)?;
                    let total = t.add(total, s3)?;
                    let total = t.add(total, s4)?;
                    let total = t.add(total, s5)?;
                    t.add(total, xent)
                },
                cfg,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "round {round}: {report:?}");
        }
    }

    #[test]
    fn crf_nll_three_tokens() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut store = ParamStore::new();
        let k = 4;
        let e = store.add("e", Tensor::matrix(3, k, (0..3 * k).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap());
        let a = store.add(
            "a",
            Tensor::matrix(k + 2, k + 2, (0..(k + 2) * (k + 2)).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
        );
        let report = grad_check(
            &store,
            |t| {
                let (e, a) = (t.param(e), t.param(a));
                t.crf_nll(e, a, &[1, 3, 0], None)
            },
            GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
