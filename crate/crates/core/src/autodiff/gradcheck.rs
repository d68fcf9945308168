use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::{ParamId, ParamStore, Real, Tape, Var};

pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub coords_checked: usize,
}

/// Compares analytic parameter gradients of `loss` against central finite
/// differences on up to `coords_per_param` sampled coordinates per
/// parameter. Relative error per coordinate is
/// `|a - n| / max(|a| + |n|, GRAD_CHECK_FLOOR)`; below the floor central
/// differences in `f64` are dominated by roundoff, so tiny gradients are
/// compared on an absolute scale.
pub fn grad_check<F, L>(
    store: &mut ParamStore<F>,
    eps: f64,
    coords_per_param: usize,
    seed: u64,
    loss: L,
) -> Result<GradCheckReport>
where
    F: Real,
    L: for<'a> Fn(&mut Tape<'a, F>) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new(&*store);
        let l = loss(&mut tape)?;
        tape.backward(l)?.into_params()
    };
    let eval = |store: &ParamStore<F>| -> Result<f64> {
        let mut tape = Tape::new(store);
        let l = loss(&mut tape)?;
        Ok(tape.value(l).item().as_f64())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        coords_checked: 0,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let grad = analytic.dense(id);
        let n = store.get(id).len();
        let picks = sample(&mut rng, n, n.min(coords_per_param));
        for coord in picks.iter() {
            let orig = store.get(id).data()[coord];
            store.get_mut(id).data_mut()[coord] = orig + F::lit(eps);
            let up = eval(store)?;
            store.get_mut(id).data_mut()[coord] = orig - F::lit(eps);
            let down = eval(store)?;
            store.get_mut(id).data_mut()[coord] = orig;

            let numeric = (up - down) / (2.0 * eps);
            let a = grad.data()[coord].as_f64();
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(GRAD_CHECK_FLOOR);
            report.coords_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = format!("{}[{coord}]", store.name(id));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn quadratic_matches_closely() {
        let mut s = ParamStore::<f64>::new();
        let w = s.add("w", Tensor::row(vec![0.3, -1.2, 2.0, 0.7]));
        let r = grad_check(&mut s, 1e-5, 16, 1, |t| {
            let x = t.param(w);
            let sq = t.mul(x, x)?;
            let s3 = t.scale(sq, 3.0);
            let lin = t.scale(x, 0.5);
            let y = t.add(s3, lin)?;
            Ok(t.sum(y))
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        assert_eq!(r.coords_checked, 4);
    }

    #[test]
    fn relu_away_from_kink() {
        let mut s = ParamStore::<f64>::new();
        let w = s.add("w", Tensor::row(vec![0.8, -0.4, 1.5]));
        let r = grad_check(&mut s, 1e-5, 8, 2, |t| {
            let x = t.param(w);
            let y = t.relu(x);
            let e = t.exp(y);
            Ok(t.sum(e))
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn composite_ops_match_finite_differences() {
        let mut s = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = s.add_uniform("a", 3, 4, 0.8, &mut rng);
        let b = s.add_uniform("b", 4, 2, 0.8, &mut rng);
        let bias = s.add_uniform("bias", 1, 2, 0.8, &mut rng);
        let table = s.add_uniform("table", 5, 3, 0.8, &mut rng);
        let r = grad_check(&mut s, 1e-5, 12, 3, |t| {
            let e = t.embedding(table, &[4, 1, 1])?;
            let sw = t.sliding_window_concat(e, 1);
            let part = t.slice_cols(sw, 2, 4)?;
            let pa = t.param(a);
            let mixed = t.add(part, pa)?;
            let h = t.dense(mixed, b, bias)?;
            let th = t.tanh(h);
            let sg = t.sigmoid(th);
            let sn = t.sin(sg);
            let sm = t.softmax_rows(sn, Some(&[true, true]))?;
            let tr = t.transpose(sm);
            let row = t.slice_rows(tr, 0, 1)?;
            let rep = t.repeat_rows(row, 2)?;
            let cat = t.concat_rows(&[rep, tr])?;
            let c2 = t.concat_cols(&[cat, cat])?;
            let flat = t.slice_rows(c2, 3, 1)?;
            let nl = t.neg_log_softmax(flat, 2)?;
            let prod = t.mul(nl, nl)?;
            let one_m = t.one_minus(prod);
            let g = t.gather(c2, &[0, 3])?;
            let gs = t.sum(g);
            t.sub(one_m, gs)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }
}
