use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::*;
use crate::error::Error;
use crate::rng::rng_for;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn softmax_examples() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![0.0, 0.0])).unwrap();
    let s = g.softmax(x, 1.0).unwrap();
    assert_eq!(g.value(s).data(), &[0.5, 0.5]);

    let x = g
        .constant(Tensor::vector(vec![libm::log(2.0), 0.0]))
        .unwrap();
    let s = g.softmax(x, 1.0).unwrap();
    assert!(close(g.value(s).data()[0], 2.0 / 3.0, 1e-15));
    assert!(close(g.value(s).data()[1], 1.0 / 3.0, 1e-15));
}

#[test]
fn cross_entropy_uniform_is_ln_k() {
    let mut g = Graph::new();
    let p = g.constant(Tensor::vector(vec![0.25; 4])).unwrap();
    let t = g
        .constant(Tensor::vector(vec![0.0, 0.0, 1.0, 0.0]))
        .unwrap();
    let ce = g.cross_entropy(p, t).unwrap();
    assert!(close(g.value(ce).item(), libm::log(4.0), 1e-15));
    assert!(close(g.value(ce).item(), 1.386294, 1e-6));
}

#[test]
fn shape_mismatch_names_operation_and_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::vector(vec![1.0, 2.0])).unwrap();
    let b = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
    match g.add(a, b) {
        Err(Error::ShapeMismatch { op, lhs, rhs }) => {
            assert_eq!(op, "add");
            assert_eq!(lhs, vec![2]);
            assert_eq!(rhs, vec![3]);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(g.matmul(a, b).is_err());
}

#[test]
fn non_finite_inputs_are_rejected() {
    let mut g = Graph::new();
    let err = g.param(Tensor::vector(vec![1.0, f64::NAN])).unwrap_err();
    assert!(matches!(err, Error::NonFinite { index: 1, .. }));
}

#[test]
fn backward_examples() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, -2.0, 0.5])).unwrap();
    let s = g.sum(x);
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);

    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0])).unwrap();
    let n = g.sq_norm(x);
    let grads = g.backward(n).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
}

#[test]
fn backward_rejects_non_scalar_and_handles_detached_roots() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0])).unwrap();
    assert!(matches!(g.backward(x), Err(Error::NonScalarRoot(_))));
    let d = g.detach(x);
    let s = g.sum(d);
    assert!(g.backward(s).unwrap().is_empty());
}

#[test]
fn detach_contributes_zero_gradient() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0])).unwrap();
    let d = g.detach(x);
    let a = g.sq_norm(d);
    let b = g.sum(x);
    let r = g.add(a, b).unwrap();
    let grads = g.backward(r).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0]);
}

#[test]
fn gradient_accumulates_over_reuse() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![3.0])).unwrap();
    let y = g.mul(x, x).unwrap();
    let z = g.add(y, x).unwrap();
    let s = g.sum(z);
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[7.0]);
}

#[test]
fn grad_reverse_examples() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![3.0, -1.5])).unwrap();
    let r = g.grad_reverse(x, 1.0).unwrap();
    assert_eq!(g.value(r).data(), &[3.0, -1.5]);
    let s = g.sum(r);
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[-1.0, -1.0]);
    assert!(g.grad_reverse(x, 0.0).is_err());
}

#[test]
fn grad_reverse_composite_matches_negated_finite_difference() {
    // f(θ) = θ ⊙ θ + θ, loss = ‖f‖²; reversed gradient = −μ · FD gradient of the plain graph.
    let theta = [Tensor::vector(vec![0.7, -1.3])];
    let mu = 1.7;
    let build = |g: &mut Graph, v: Var, reverse: bool| -> crate::Result<Var> {
        let sq = g.mul(v, v)?;
        let f = g.add(sq, v)?;
        let f = if reverse { g.grad_reverse(f, mu)? } else { f };
        Ok(g.sq_norm(f))
    };
    let mut g = Graph::new();
    let v = g.param(theta[0].clone()).unwrap();
    let root = build(&mut g, v, true).unwrap();
    let reversed = g.backward(root).unwrap().get(v).unwrap().clone();

    let neg_mu_numeric: Vec<f64> = (0..2)
        .map(|k| {
            let eval = |delta: f64| {
                let mut t = theta[0].clone();
                t.data_mut()[k] += delta;
                let mut g = Graph::new();
                let v = g.param(t).unwrap();
                let r = build(&mut g, v, false).unwrap();
                g.value(r).item()
            };
            -mu * (eval(1e-5) - eval(-1e-5)) / 2e-5
        })
        .collect();
    for k in 0..2 {
        assert!(relative_deviation(reversed.data()[k], neg_mu_numeric[k]) < 1e-6);
    }
}

#[test]
fn softmax_rows_are_stochastic_across_temperatures() {
    let mut r = rng_for(11, &[]);
    for trial in 0..200 {
        let tau = 0.01 + (10.0 - 0.01) * (trial as f64 / 199.0);
        let data: Vec<f64> = (0..12).map(|_| r.random_range(-5.0..5.0)).collect();
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![3, 4], data).unwrap()).unwrap();
        let s = g.softmax(x, tau).unwrap();
        for row in 0..3 {
            let p = g.value(s).row(row);
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn dropout_is_seeded_and_identity_when_off() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![1.0; 64])).unwrap();
    assert_eq!(g.dropout(x, 0.5, 3, false).unwrap(), x);
    let a = g.dropout(x, 0.5, 3, true).unwrap();
    let b = g.dropout(x, 0.5, 3, true).unwrap();
    let c = g.dropout(x, 0.5, 4, true).unwrap();
    assert_eq!(g.value(a), g.value(b));
    assert_ne!(g.value(a), g.value(c));
    assert!(g.value(a).data().iter().all(|&v| v == 0.0 || v == 2.0));
    assert!(g.dropout(x, 1.0, 0, true).is_err());
}

#[test]
fn log_floor_keeps_values_finite() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![0.0, 1e-30])).unwrap();
    let l = g.ln(x);
    assert!(g.value(l).data().iter().all(|v| v.is_finite()));
    let n = g.normalize_rows(x);
    assert!(g.value(n).data().iter().all(|v| v.is_finite()));
}

#[test]
fn masked_log_softmax_excludes_entries() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
    let l = g
        .log_softmax_masked(x, 1.0, vec![false, true, false])
        .unwrap();
    let v = g.value(l).data();
    let z = libm::exp(1.0) + libm::exp(3.0);
    assert!(close(v[0], 1.0 - libm::log(z), 1e-14));
    assert_eq!(v[1], 0.0);
    assert!(close(v[2], 3.0 - libm::log(z), 1e-14));
}

#[test]
fn replay_is_bitwise_identical() {
    let run = || {
        let mut r = rng_for(5, &[]);
        let data: Vec<f64> = (0..20).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut g = Graph::new();
        let x = g.param(Tensor::new(vec![4, 5], data).unwrap()).unwrap();
        let w = g
            .param(Tensor::new(vec![5, 3], vec![0.1; 15]).unwrap())
            .unwrap();
        let h = g.matmul(x, w).unwrap();
        let a = g.gelu(h);
        let s = g.log_softmax(a, 0.3).unwrap();
        let m = g.mean(s);
        let gr = g.backward(m).unwrap();
        (g.value(m).item().to_bits(), gr.get(x).unwrap().clone())
    };
    assert_eq!(run(), run());
}

// ---- finite-difference sweeps over the catalog ----

fn random_tensor(r: &mut crate::rng::Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| r.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

type Builder = fn(&mut Graph, &[Var]) -> crate::Result<Var>;

fn sweep(name: &str, shapes: &[&[usize]], lo: f64, hi: f64, build: Builder) {
    for seed in 0..100u64 {
        let mut r = rng_for(seed, &[name.len() as u64, name.as_bytes()[0] as u64]);
        let params: Vec<Tensor> = shapes
            .iter()
            .map(|s| random_tensor(&mut r, s, lo, hi))
            .collect();
        let rep = finite_diff_check(build, &params, 1e-5, 1e-4).unwrap();
        assert!(
            rep.passed(),
            "{name} seed {seed}: deviation {}",
            rep.max_deviation()
        );
    }
}

// A fixed, non-symmetric weighting so reductions do not hide sign errors.
fn weighted(g: &mut Graph, x: Var) -> crate::Result<Var> {
    let n = g.value(x).len();
    let w: Vec<f64> = (0..n)
        .map(|i| 0.3 + 0.17 * i as f64 - 0.01 * (i * i) as f64)
        .collect();
    let w = g.constant(Tensor::new(g.shape(x).to_vec(), w)?)?;
    let p = g.mul(x, w)?;
    Ok(g.sum(p))
}

#[test]
fn fd_elementwise_binary() {
    sweep("add", &[&[2, 3], &[2, 3]], -2.0, 2.0, |g, v| {
        let y = g.add(v[0], v[1])?;
        weighted(g, y)
    });
    sweep("subtract", &[&[2, 3], &[2, 3]], -2.0, 2.0, |g, v| {
        let y = g.sub(v[0], v[1])?;
        weighted(g, y)
    });
    sweep("multiply", &[&[2, 3], &[2, 3]], -2.0, 2.0, |g, v| {
        let y = g.mul(v[0], v[1])?;
        weighted(g, y)
    });
    sweep("divide", &[&[5], &[5]], 0.5, 2.0, |g, v| {
        let y = g.div(v[0], v[1])?;
        weighted(g, y)
    });
}

#[test]
fn fd_linear_maps() {
    sweep("scale", &[&[4]], -2.0, 2.0, |g, v| {
        let y = g.scale(v[0], -1.7);
        weighted(g, y)
    });
    sweep("matmul", &[&[3, 4], &[4, 2]], -1.0, 1.0, |g, v| {
        let y = g.matmul(v[0], v[1])?;
        weighted(g, y)
    });
    sweep("add_row", &[&[3, 4], &[4]], -1.0, 1.0, |g, v| {
        let y = g.add_row(v[0], v[1])?;
        weighted(g, y)
    });
    sweep("transpose", &[&[2, 3]], -1.0, 1.0, |g, v| {
        let y = g.transpose(v[0])?;
        weighted(g, y)
    });
    sweep("concat", &[&[2, 3], &[1, 3]], -1.0, 1.0, |g, v| {
        let y = g.concat_rows(&[v[0], v[1]])?;
        weighted(g, y)
    });
    sweep("gather_rows", &[&[4, 2]], -1.0, 1.0, |g, v| {
        let y = g.gather_rows(v[0], &[3, 0, 3])?;
        weighted(g, y)
    });
    sweep("gather", &[&[6]], -1.0, 1.0, |g, v| {
        let y = g.gather(v[0], &[5, 1, 1])?;
        weighted(g, y)
    });
}

#[test]
fn fd_reductions() {
    sweep("sum", &[&[2, 3]], -2.0, 2.0, |g, v| {
        let y = g.mul(v[0], v[0])?;
        Ok(g.sum(y))
    });
    sweep("mean", &[&[2, 3]], -2.0, 2.0, |g, v| {
        let y = g.mul(v[0], v[0])?;
        Ok(g.mean(y))
    });
    sweep("row_sum", &[&[3, 4]], -2.0, 2.0, |g, v| {
        let y = g.row_sum(v[0]);
        let y = g.mul(y, y)?;
        weighted(g, y)
    });
    sweep("sq_norm", &[&[5]], -2.0, 2.0, |g, v| Ok(g.sq_norm(v[0])));
}

#[test]
fn fd_nonlinearities() {
    sweep("exp", &[&[5]], -2.0, 2.0, |g, v| {
        let y = g.exp(v[0]);
        weighted(g, y)
    });
    sweep("ln", &[&[5]], 0.1, 3.0, |g, v| {
        let y = g.ln(v[0]);
        weighted(g, y)
    });
    sweep("gelu", &[&[6]], -3.0, 3.0, |g, v| {
        let y = g.gelu(v[0]);
        weighted(g, y)
    });
    // Kept away from the kink at 0.
    sweep("relu", &[&[6]], 0.01, 2.0, |g, v| {
        let n = g.neg(v[0]);
        let a = g.relu(v[0]);
        let b = g.relu(n);
        let y = g.add(a, b)?;
        weighted(g, y)
    });
    sweep("dropout", &[&[8]], -1.0, 1.0, |g, v| {
        let y = g.dropout(v[0], 0.3, 9, true)?;
        weighted(g, y)
    });
    sweep("grad_reverse_twice", &[&[4]], -1.0, 1.0, |g, v| {
        let y = g.grad_reverse(v[0], 2.0)?;
        let y = g.grad_reverse(y, 0.5)?;
        weighted(g, y)
    });
}

#[test]
fn fd_normalization_and_softmax_family() {
    sweep("normalize", &[&[3, 4]], -2.0, 2.0, |g, v| {
        let y = g.normalize_rows(v[0]);
        weighted(g, y)
    });
    sweep("cosine", &[&[3, 4], &[2, 4]], -2.0, 2.0, |g, v| {
        let y = g.cosine_similarity(v[0], v[1])?;
        weighted(g, y)
    });
    sweep("softmax", &[&[3, 4]], -2.0, 2.0, |g, v| {
        let y = g.softmax(v[0], 0.5)?;
        weighted(g, y)
    });
    sweep("log_softmax", &[&[3, 4]], -2.0, 2.0, |g, v| {
        let y = g.log_softmax(v[0], 0.7)?;
        weighted(g, y)
    });
    sweep("log_softmax_masked", &[&[3, 3]], -2.0, 2.0, |g, v| {
        let mask = (0..9).map(|i| i % 4 == 0).collect();
        let y = g.log_softmax_masked(v[0], 0.7, mask)?;
        weighted(g, y)
    });
    sweep("ce_soft", &[&[3, 4], &[3, 4]], -2.0, 2.0, |g, v| {
        let t = g.softmax(v[1], 1.0)?;
        let p = g.softmax(v[0], 0.4)?;
        let y = g.cross_entropy(p, t)?;
        weighted(g, y)
    });
    sweep("ce_logits_onehot", &[&[3, 4]], -2.0, 2.0, |g, v| {
        let t = g.constant(Tensor::from_rows(&[
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ])?)?;
        let y = g.cross_entropy_logits(v[0], t, 0.1)?;
        Ok(g.mean(y))
    });
}

#[test]
fn fd_softmax_cross_entropy_of_linear_map() {
    // root = CE(softmax(W x), y) for a batch; gradient with respect to W.
    sweep("ce_softmax_wx", &[&[4, 3], &[5, 4]], -1.0, 1.0, |g, v| {
        let logits = g.matmul(v[1], v[0])?;
        let p = g.softmax(logits, 1.0)?;
        let t = g.constant(Tensor::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ])?)?;
        let ce = g.cross_entropy(p, t)?;
        Ok(g.mean(ce))
    });
}
