mod support;

use cavp_core::substrate::{grad_check, GradCheckConfig, Graph, LstmWeights, ParamStore, Tensor, Var};
use cavp_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{add_vector, read_vector, vector};

const TOL: f64 = 1e-4;

fn check_config() -> GradCheckConfig {
    GradCheckConfig {
        coords_per_param: 64,
        ..GradCheckConfig::default()
    }
}

/// Gradient-checks `op` applied to parameter vectors of the given lengths,
/// reduced to a scalar by a fixed random projection.
fn check_op(lens: &[usize], seed: u64, positive: bool, op: impl Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var, Error>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let ids: Vec<_> = lens
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut v = vector(&mut rng, n);
            if positive {
                v.iter_mut().for_each(|x| *x = 0.5 + x.abs());
            }
            add_vector(&mut store, &format!("x{i}"), v)
        })
        .collect();
    let report = grad_check(
        &mut store,
        |p| {
            let mut g = Graph::new(p);
            let xs: Vec<Var> = ids.iter().map(|&id| read_vector(&mut g, id)).collect();
            let out = op(&mut g, &xs)?;
            let mut prng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let c = g.input(vector(&mut prng, g.len_of(out)));
            let loss = g.dot(out, c)?;
            Ok((g.scalar(loss), g.backward(loss)?))
        },
        check_config(),
    )
    .unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
}

#[test]
fn elementwise_ops_pass_gradient_check() {
    for seed in 0..3 {
        check_op(&[7], seed, false, |g, x| Ok(g.tanh(x[0])));
        check_op(&[7], seed, false, |g, x| Ok(g.sigmoid(x[0])));
        check_op(&[7], seed, true, |g, x| Ok(g.log(x[0])?));
        check_op(&[7, 7], seed, false, |g, x| Ok(g.add(x[0], x[1])?));
        check_op(&[7, 7], seed, false, |g, x| Ok(g.mul(x[0], x[1])?));
        check_op(&[7, 7], seed, false, |g, x| Ok(g.dot(x[0], x[1])?));
        check_op(&[7], seed, false, |g, x| Ok(g.scale(x[0], -2.5)));
    }
}

#[test]
fn normalizing_ops_pass_gradient_check() {
    for seed in 0..3 {
        check_op(&[9], seed, false, |g, x| Ok(g.softmax(x[0])?));
        check_op(&[9], seed, false, |g, x| Ok(g.log_softmax(x[0])?));
    }
}

#[test]
fn structural_ops_pass_gradient_check() {
    for seed in 0..3 {
        check_op(&[4, 4, 4], seed, false, |g, x| Ok(g.sum(x)?));
        check_op(&[3, 5], seed, false, |g, x| Ok(g.concat(x)));
        check_op(&[8], seed, false, |g, x| Ok(g.slice(x[0], 2, 4)?));
        check_op(&[8], seed, false, |g, x| Ok(g.select(x[0], 5)?));
        // Weights come from a softmax so they stay a distribution.
        check_op(&[3, 5, 5, 5], seed, false, |g, x| {
            let w = g.softmax(x[0])?;
            Ok(g.weighted_sum(w, &x[1..])?)
        });
        // Same node used twice accumulates both contributions.
        check_op(&[6], seed, false, |g, x| {
            let t = g.tanh(x[0]);
            Ok(g.mul(t, x[0])?)
        });
    }
}

#[test]
fn affine_lstm_and_embedding_pass_gradient_check() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let w = store.add_uniform("W", 5, 7, &mut rng).unwrap();
        let b = store.add("b", Tensor::vector(vector(&mut rng, 5))).unwrap();
        let lstm = LstmWeights::register(&mut store, "lstm", 5, 4, &mut rng).unwrap();
        let emb = store.add_uniform("W_e", 6, 5, &mut rng).unwrap();
        let x = vector(&mut rng, 7);
        let h0 = add_vector(&mut store, "h0", vector(&mut rng, 4));
        let c0 = add_vector(&mut store, "c0", vector(&mut rng, 4));
        let proj = vector(&mut rng, 8);
        let report = grad_check(
            &mut store,
            |p| {
                let mut g = Graph::new(p);
                let xv = g.input(x.clone());
                let a = g.affine(w, xv, Some(b))?;
                let e = g.embedding(emb, 2)?;
                let inp = g.add(a, e)?;
                let (h, c) = (read_vector(&mut g, h0), read_vector(&mut g, c0));
                let (h1, c1) = g.lstm_cell(&lstm, inp, h, c)?;
                let (h2, c2) = g.lstm_cell(&lstm, inp, h1, c1)?;
                let out = g.concat(&[h2, c2]);
                let pv = g.input(proj.clone());
                let loss = g.dot(out, pv)?;
                Ok((g.scalar(loss), g.backward(loss)?))
            },
            check_config(),
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "{report:?}");
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Textbook LSTM step with gate blocks ordered input, forget, cell, output.
fn lstm_oracle(w_ih: &[f64], w_hh: &[f64], b: &[f64], x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hs = h.len();
    let z: Vec<f64> = (0..4 * hs)
        .map(|r| {
            b[r] + (0..x.len()).map(|j| w_ih[r * x.len() + j] * x[j]).sum::<f64>()
                + (0..hs).map(|j| w_hh[r * hs + j] * h[j]).sum::<f64>()
        })
        .collect();
    let mut h_new = vec![0.0; hs];
    let mut c_new = vec![0.0; hs];
    for j in 0..hs {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[hs + j]);
        let g = z[2 * hs + j].tanh();
        let o = sigmoid(z[3 * hs + j]);
        c_new[j] = f * c[j] + i * g;
        h_new[j] = o * c_new[j].tanh();
    }
    (h_new, c_new)
}

#[test]
fn lstm_cell_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (n_in, hs) = (rng.gen_range(1..9), rng.gen_range(1..7));
        let mut store = ParamStore::new();
        let lstm = LstmWeights::register(&mut store, "l", n_in, hs, &mut rng).unwrap();
        for id in lstm.ids() {
            store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        }
        let (x, h, c) = (vector(&mut rng, n_in), vector(&mut rng, hs), vector(&mut rng, hs));
        let mut g = Graph::new(&store);
        let (xv, hv, cv) = (g.input(x.clone()), g.input(h.clone()), g.input(c.clone()));
        let (h1, c1) = g.lstm_cell(&lstm, xv, hv, cv).unwrap();
        let (eh, ec) = lstm_oracle(
            store.value(lstm.w_ih).data(),
            store.value(lstm.w_hh).data(),
            store.value(lstm.bias).data(),
            &x,
            &h,
            &c,
        );
        for (a, b) in g.value(h1).iter().zip(&eh).chain(g.value(c1).iter().zip(&ec)) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn lstm_cell_of_zeros_is_exactly_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::<f64>::new();
    let lstm = LstmWeights::register(&mut store, "l", 5, 3, &mut rng).unwrap();
    for id in lstm.ids() {
        store.value_mut(id).fill(0.0);
    }
    let mut g = Graph::new(&store);
    let x = g.zeros(5);
    let h = g.zeros(3);
    let c = g.zeros(3);
    let (h1, c1) = g.lstm_cell(&lstm, x, h, c).unwrap();
    assert!(g.value(h1).iter().chain(g.value(c1)).all(|&v| v == 0.0));
}

#[test]
fn forward_and_backward_are_bitwise_repeatable() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::<f64>::new();
        let lstm = LstmWeights::register(&mut store, "l", 6, 4, &mut rng).unwrap();
        let x = vector(&mut rng, 6);
        let mut g = Graph::new(&store);
        let xv = g.input(x);
        let h = g.zeros(4);
        let c = g.zeros(4);
        let (h1, _) = g.lstm_cell(&lstm, xv, h, c).unwrap();
        let s = g.softmax(h1).unwrap();
        let l = g.log(s).unwrap();
        let idx = g.select(l, 1).unwrap();
        let value = g.scalar(idx).to_bits();
        let grads = g.backward(idx).unwrap();
        let gbits: Vec<u64> = lstm.ids().iter().flat_map(|&id| grads.get(id).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect();
        (value, gbits)
    };
    assert_eq!(run(), run());
}

#[test]
fn backward_without_reforward_is_an_error() {
    let mut store = ParamStore::<f64>::new();
    let id = add_vector(&mut store, "x", vec![1.0, 2.0]);
    let mut g = Graph::new(&store);
    let x = read_vector(&mut g, id);
    let s = g.dot(x, x).unwrap();
    assert!(g.backward(s).is_ok());
    assert!(g.backward(s).is_err());
}

proptest! {
    #[test]
    fn softmax_sums_to_one(xs in prop::collection::vec(-30.0f64..30.0, 1..40)) {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let x = g.input(xs);
        let s = g.softmax(x).unwrap();
        let total: f64 = g.value(s).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(g.value(s).iter().all(|p| p.is_finite() && *p >= 0.0));
    }

    #[test]
    fn softmax_is_permutation_equivariant(xs in prop::collection::vec(-10.0f64..10.0, 2..20), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..xs.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let a = g.input(xs.clone());
        let b = g.input(perm.iter().map(|&i| xs[i]).collect());
        let (sa, sb) = (g.softmax(a).unwrap(), g.softmax(b).unwrap());
        for (j, &i) in perm.iter().enumerate() {
            prop_assert!((g.value(sb)[j] - g.value(sa)[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn log_softmax_agrees_with_log_of_softmax(xs in prop::collection::vec(-20.0f64..20.0, 1..30)) {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let x = g.input(xs);
        let s = g.softmax(x).unwrap();
        let ls = g.log_softmax(x).unwrap();
        for (p, l) in g.value(s).iter().zip(g.value(ls)) {
            prop_assert!((p.ln() - l).abs() < 1e-9);
        }
    }
}
