use std::sync::Arc;

use glem::numerics::{entropy, grad_check_many, log_softmax_rows, ComputeGraph, CsrMatrix, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize, range: f64) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-range..range, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

fn distribution(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, c).prop_filter_map("nonzero mass", |raw| {
        let s: f64 = raw.iter().sum();
        (s > 1e-6).then(|| raw.iter().map(|v| v / s).collect())
    })
}

proptest! {
    #[test]
    fn log_softmax_rows_normalize_for_large_inputs(x in matrix(3, 5, 1e4)) {
        let lp = log_softmax_rows(&x).unwrap();
        for r in 0..3 {
            let s: f64 = lp.row(r).iter().map(|v| v.exp()).sum();
            prop_assert!((s - 1.0).abs() < 1e-9, "row {r} sums to {s}");
        }
    }

    #[test]
    fn cross_entropy_bounded_below_by_entropy(x in matrix(1, 4, 20.0), p in distribution(4)) {
        let mut g = ComputeGraph::new();
        let xv = g.constant(x);
        let lp = g.log_softmax_rows(xv).unwrap();
        let target = Tensor::matrix(1, 4, p.clone()).unwrap();
        let ce = g.soft_cross_entropy(lp, &target, &[0]).unwrap();
        prop_assert!(g.value(ce).item() >= entropy(&p) - 1e-9);
    }

    #[test]
    fn cross_entropy_equals_entropy_at_the_target(p in distribution(4)) {
        prop_assume!(p.iter().all(|&v| v > 1e-12));
        let logits: Vec<f64> = p.iter().map(|v| v.ln() + 3.0).collect();
        let mut g = ComputeGraph::new();
        let xv = g.constant(Tensor::matrix(1, 4, logits).unwrap());
        let lp = g.log_softmax_rows(xv).unwrap();
        let ce = g.soft_cross_entropy(lp, &Tensor::matrix(1, 4, p.clone()).unwrap(), &[0]).unwrap();
        prop_assert!((g.value(ce).item() - entropy(&p)).abs() < 1e-9);
    }

    #[test]
    fn same_inputs_same_bits(x in matrix(4, 3, 5.0), w in matrix(3, 2, 1.0)) {
        let run = || {
            let mut g = ComputeGraph::new();
            let xv = g.param(&x.clone().with_requires_grad(true));
            let wv = g.param(&w.clone().with_requires_grad(true));
            let z = g.matmul(xv, wv).unwrap();
            let t = g.tanh(z).unwrap();
            let s = g.sum(t).unwrap();
            let grads = g.backward(s).unwrap();
            (g.value(s).item().to_bits(), grads.get(wv).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        };
        prop_assert_eq!(run(), run());
    }
}

fn random_adjacency(n: usize, rng: &mut ChaCha8Rng) -> Arc<CsrMatrix> {
    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for _ in 0..n {
        for c in 0..n {
            if rng.gen_bool(0.5) {
                indices.push(c);
                values.push(rng.gen_range(0.1..1.0));
            }
        }
        indptr.push(indices.len());
    }
    Arc::new(CsrMatrix::new(n, n, indptr, indices, values).unwrap())
}

/// Two-layer message passing with a soft cross-entropy head, checked by
/// central differences on 25 random instances.
#[test]
fn composite_loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let n = rng.gen_range(2..6);
        let d = rng.gen_range(1..4);
        let c = rng.gen_range(2..4);
        let adj = random_adjacency(n, &mut rng);
        let x = Tensor::uniform(n, d, 1.0, &mut rng);
        let w1 = Tensor::uniform(d, 3, 1.0, &mut rng);
        let b1 = Tensor::uniform(1, 3, 0.5, &mut rng);
        let w2 = Tensor::uniform(3, c, 1.0, &mut rng);
        let target = {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.05..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    raw.into_iter().map(|v| v / s).collect()
                })
                .collect();
            Tensor::from_rows(&rows).unwrap()
        };
        let rows: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).chain([0]).collect();
        let groups = vec![(0..n).collect::<Vec<_>>(), vec![0]];
        let err = grad_check_many(
            |g, v| {
                let h = g.spmm(Arc::clone(&adj), v[0])?;
                let h = g.matmul(h, v[1])?;
                let h = g.add_row_bias(h, v[2])?;
                let h = g.relu(h)?;
                let pooled = g.segment_mean(h, groups.clone())?;
                let both = g.concat_rows(vec![h, pooled])?;
                let h = g.tanh(both)?;
                let z = g.matmul(h, v[3])?;
                let lp = g.log_softmax_rows(z)?;
                let mut t = target.data().to_vec();
                t.extend_from_slice(&target.data()[..2 * c]);
                let t = Tensor::matrix(n + 2, c, t)?;
                let mut r = rows.clone();
                r.push(n + 1);
                let ce = g.soft_cross_entropy(lp, &t, &r)?;
                g.scale(ce, 0.7)
            },
            &[x, w1, b1, w2],
            1e-6,
        )
        .unwrap();
        worst = worst.max(err);
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}
