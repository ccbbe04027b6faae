use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Worst relative error between tape gradients and central differences of
/// `Σ f(inputs) ⊙ R` for a fixed random `R`.
fn fd_check<F>(inputs: Vec<Tensor<f64>>, seed: u64, f: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    fd_check_at(inputs, seed, 1e-5, 1e-3, f)
}

fn fd_check_at<F>(inputs: Vec<Tensor<f64>>, seed: u64, h: f64, floor: f64, f: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let probe_shape = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).shape().to_vec()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = probe_shape.iter().product();
    let projection = Tensor::from_vec(
        &probe_shape,
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();

    let eval = |inputs: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let loss = tape.dot_const(out, &projection).unwrap();
        tape.value(loss).data()[0]
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let loss = tape.dot_const(out, &projection).unwrap();
    let mut grads = tape.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.or_zeros(*var, inputs[i].shape());
        for k in 0..inputs[i].len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[k] += h;
            let mut minus = inputs.clone();
            minus[i].data_mut()[k] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic.data()[k];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}

fn segments(rng: &mut ChaCha8Rng, rows: usize, count: usize) -> Index {
    let ids: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..count)).collect();
    Arc::from(ids)
}

const FD_TOL: f64 = 1e-6;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matmul_and_affine_gradients(seed in any::<u64>(), n in 1usize..5, k in 1usize..5, m in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![random_tensor(&mut rng, n, k), random_tensor(&mut rng, k, m), random_tensor(&mut rng, 1, m)];
        let err = fd_check(inputs, seed, |t, v| t.affine(v[0], v[1], v[2]).unwrap());
        prop_assert!(err < FD_TOL, "err {err}");
    }

    #[test]
    fn add_scale_concat_gather_gradients(seed in any::<u64>(), n in 1usize..5, c in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx: Vec<usize> = (0..n + 3).map(|_| rng.gen_range(0..2 * n)).collect();
        let idx: Index = Arc::from(idx);
        let inputs = vec![random_tensor(&mut rng, n, c), random_tensor(&mut rng, n, c)];
        let err = fd_check(inputs, seed, move |t, v| {
            let s = t.add(v[0], v[1]).unwrap();
            let s = t.scale(s, 0.7).unwrap();
            let cat = t.concat_rows(&[s, v[1]]).unwrap();
            t.gather_rows(cat, idx.clone()).unwrap()
        });
        prop_assert!(err < FD_TOL, "err {err}");
    }

    #[test]
    fn head_dot_gradients(seed in any::<u64>(), n in 1usize..5, heads in 1usize..4, width in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = heads * width;
        let inputs = vec![random_tensor(&mut rng, n, c), random_tensor(&mut rng, n, c)];
        let err = fd_check(inputs, seed, move |t, v| t.head_dot(v[0], v[1], heads, 0.5).unwrap());
        prop_assert!(err < FD_TOL, "err {err}");
    }

    #[test]
    fn segment_softmax_gradients(seed in any::<u64>(), n in 1usize..8, heads in 1usize..3, count in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seg = segments(&mut rng, n, count);
        let inputs = vec![random_tensor(&mut rng, n, heads)];
        let err = fd_check(inputs, seed, move |t, v| t.segment_softmax(v[0], seg.clone(), count).unwrap());
        prop_assert!(err < FD_TOL, "err {err}");
    }

    #[test]
    fn segment_weighted_sum_gradients(seed in any::<u64>(), n in 1usize..8, heads in 1usize..3, width in 1usize..3, count in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seg = segments(&mut rng, n, count);
        let inputs = vec![random_tensor(&mut rng, n, heads * width), random_tensor(&mut rng, n, heads)];
        let err = fd_check(inputs, seed, move |t, v| t.segment_weighted_sum(v[0], v[1], seg.clone(), count).unwrap());
        prop_assert!(err < FD_TOL, "err {err}");
    }

    #[test]
    fn elu_gradients(seed in any::<u64>(), n in 1usize..5, c in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // keep inputs away from the kink at zero
        let mut x = random_tensor(&mut rng, n, c);
        for v in x.data_mut() {
            if v.abs() < 1e-2 { *v += 0.1; }
        }
        let err = fd_check(vec![x], seed, |t, v| t.elu(v[0]).unwrap());
        prop_assert!(err < FD_TOL, "err {err}");
    }

    #[test]
    fn graph_norm_gradients(seed in any::<u64>(), n in 2usize..9, c in 1usize..4, count in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seg = segments(&mut rng, n, count);
        let inputs = vec![
            random_tensor(&mut rng, n, c),
            random_tensor(&mut rng, 1, c),
            random_tensor(&mut rng, 1, c),
            random_tensor(&mut rng, 1, c),
        ];
        let err = fd_check(inputs, seed, move |t, v| {
            t.graph_norm(v[0], seg.clone(), count, v[1], v[2], v[3], 1e-5).unwrap()
        });
        prop_assert!(err < 1e-5, "err {err}");
    }

    #[test]
    fn cross_entropy_gradients(seed in any::<u64>(), rows in 1usize..4, classes in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..classes)).collect();
        let inputs = vec![random_tensor(&mut rng, rows, classes)];
        let err = fd_check(inputs, seed, move |t, v| t.cross_entropy(v[0], &labels).unwrap());
        prop_assert!(err < FD_TOL, "err {err}");
    }

    #[test]
    fn dropout_gradients_follow_the_mask(seed in any::<u64>(), n in 1usize..5, c in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![random_tensor(&mut rng, n, c)];
        let err = fd_check(inputs, seed, move |t, v| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            t.dropout(v[0], 0.3, true, &mut mask_rng).unwrap()
        });
        prop_assert!(err < FD_TOL, "err {err}");
    }

    #[test]
    fn segment_softmax_normalizes_each_group(seed in any::<u64>(), n in 1usize..40, heads in 1usize..4, count in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seg = segments(&mut rng, n, count);
        let mut x = random_tensor(&mut rng, n, heads);
        for v in x.data_mut() { *v *= 30.0; }
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let y = tape.segment_softmax(xv, seg.clone(), count).unwrap();
        let y = tape.value(y);
        let mut sums = vec![0.0; count * heads];
        let mut seen = vec![false; count];
        for (i, &s) in seg.iter().enumerate() {
            seen[s] = true;
            for h in 0..heads {
                prop_assert!(y.get(i, h) >= 0.0);
                sums[s * heads + h] += y.get(i, h);
            }
        }
        for s in 0..count {
            for h in 0..heads {
                if seen[s] {
                    prop_assert!((sums[s * heads + h] - 1.0).abs() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn small_mlp_matches_central_differences_at_coarse_step() {
    for seed in 0..8 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![
            random_tensor(&mut rng, 3, 4),
            random_tensor(&mut rng, 4, 5),
            random_tensor(&mut rng, 1, 5),
            random_tensor(&mut rng, 5, 3),
        ];
        let labels = vec![0, 2, 1];
        let err = fd_check_at(inputs, seed, 1e-3, 1e-6, move |t, v| {
            let hidden = t.affine(v[0], v[1], v[2]).unwrap();
            let hidden = t.elu(hidden).unwrap();
            let logits = t.matmul(hidden, v[3]).unwrap();
            t.cross_entropy(logits, &labels).unwrap()
        });
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn segment_softmax_closed_forms() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::matrix(3, 1, vec![0.0, 0.0, 4.2]).unwrap());
    let y = tape
        .segment_softmax(x, Arc::from(vec![0, 0, 1]), 2)
        .unwrap();
    assert_eq!(tape.value(y).data(), &[0.5, 0.5, 1.0]);
}

#[test]
fn elu_closed_forms() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::matrix(1, 3, vec![0.0, 1.0, -1.0]).unwrap());
    let y = tape.elu(x).unwrap();
    let y = tape.value(y).data();
    assert_eq!(y[0], 0.0);
    assert_eq!(y[1], 1.0);
    assert!((y[2] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
    assert!((y[2] + 0.6321).abs() < 1e-4);
}

#[test]
fn dropout_is_identity_when_not_training_or_rate_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    assert_eq!(tape.dropout(x, 0.5, false, &mut rng).unwrap(), x);
    assert_eq!(tape.dropout(x, 0.0, true, &mut rng).unwrap(), x);
    assert_eq!(tape.dropout(x, 0.0, false, &mut rng).unwrap(), x);
    let d = tape.dropout(x, 0.5, true, &mut rng).unwrap();
    for (o, i) in tape.value(d).data().iter().zip([1.0, 2.0, 3.0, 4.0]) {
        assert!(*o == 0.0 || (*o - 2.0 * i).abs() < 1e-6);
    }
}

#[test]
fn graph_norm_constant_column_maps_to_shift() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::matrix(3, 2, vec![2.0, 1.0, 2.0, -1.0, 2.0, 0.0]).unwrap());
    let alpha = tape.constant(Tensor::full(&[2], 1.0));
    let gamma = tape.constant(Tensor::full(&[2], 1.0));
    let beta = tape.constant(Tensor::from_vec(&[2], vec![0.25, 0.0]).unwrap());
    let y = tape
        .graph_norm(x, Arc::from(vec![0, 0, 0]), 1, alpha, gamma, beta, 1e-5)
        .unwrap();
    let y = tape.value(y);
    for r in 0..3 {
        assert!((y.get(r, 0) - 0.25).abs() < 1e-12);
    }
}

#[test]
fn graph_norm_standardized_input_is_nearly_identity() {
    let col = [1.0, -1.0, 1.0, -1.0];
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::matrix(4, 1, col.to_vec()).unwrap());
    let alpha = tape.constant(Tensor::full(&[1], 1.0));
    let gamma = tape.constant(Tensor::full(&[1], 1.0));
    let beta = tape.constant(Tensor::full(&[1], 0.0));
    let y = tape
        .graph_norm(x, Arc::from(vec![0; 4]), 1, alpha, gamma, beta, 1e-5)
        .unwrap();
    for (o, i) in tape.value(y).data().iter().zip(col) {
        assert!((o - i).abs() < 1e-5);
    }
}

#[test]
fn graph_norm_statistics_are_per_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random_tensor(&mut rng, 3, 4);
    let b = random_tensor(&mut rng, 5, 4);
    let params: Vec<Tensor<f64>> = (0..3).map(|_| random_tensor(&mut rng, 1, 4)).collect();
    let run = |x: &Tensor<f64>, graphs: Vec<usize>, count: usize| {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let p: Vec<Var> = params.iter().map(|t| tape.constant(t.clone())).collect();
        let y = tape
            .graph_norm(xv, Arc::from(graphs), count, p[0], p[1], p[2], 1e-5)
            .unwrap();
        tape.value(y).clone()
    };
    let mut joined = a.data().to_vec();
    joined.extend_from_slice(b.data());
    let both = run(
        &Tensor::matrix(8, 4, joined).unwrap(),
        vec![0, 0, 0, 1, 1, 1, 1, 1],
        2,
    );
    let ya = run(&a, vec![0; 3], 1);
    let yb = run(&b, vec![0; 5], 1);
    let mut expect = ya.data().to_vec();
    expect.extend_from_slice(yb.data());
    for (x, y) in both.data().iter().zip(&expect) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn cross_entropy_closed_forms() {
    let mut tape = Tape::<f64>::new();
    let uniform = tape.constant(Tensor::matrix(1, 800, vec![0.3; 800]).unwrap());
    let loss = tape.cross_entropy(uniform, &[17]).unwrap();
    assert!((tape.value(loss).data()[0] - 800f64.ln()).abs() < 1e-12);
    assert!((tape.value(loss).data()[0] - 6.6846).abs() < 1e-4);

    let margin = tape.constant(Tensor::matrix(1, 3, vec![1e4, 0.0, -3.0]).unwrap());
    let loss = tape.cross_entropy(margin, &[0]).unwrap();
    assert!(tape.value(loss).data()[0].abs() < 1e-12);

    let two = tape.constant(Tensor::matrix(1, 2, vec![2f64.ln(), 0.0]).unwrap());
    let loss = tape.cross_entropy(two, &[0]).unwrap();
    assert!((tape.value(loss).data()[0] + (2.0f64 / 3.0).ln()).abs() < 1e-12);
    assert!((tape.value(loss).data()[0] - 0.4055).abs() < 1e-4);

    let bad = tape.cross_entropy(two, &[2]);
    assert!(matches!(
        bad,
        Err(Error::LabelOutOfRange {
            label: 2,
            classes: 2
        })
    ));
}

#[test]
fn linear_backward_is_outer_product_and_unused_param_is_zero() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap());
    let w = tape.param(Tensor::matrix(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap());
    let unused = tape.param(Tensor::matrix(2, 2, vec![1.0; 4]).unwrap());
    let y = tape.matmul(x, w).unwrap();
    let loss = tape.sum_all(y).unwrap();
    let mut grads = tape.backward(loss).unwrap();
    let gw = grads.or_zeros(w, &[3, 2]);
    assert_eq!(gw.data(), &[1.0, 1.0, -2.0, -2.0, 0.5, 0.5]);
    assert!(grads.get(unused).is_none());
    assert_eq!(grads.or_zeros(unused, &[2, 2]).data(), &[0.0; 4]);
}

#[test]
fn shared_parameter_gradients_accumulate() {
    let mut tape = Tape::<f64>::new();
    let w = tape.param(Tensor::matrix(1, 1, vec![3.0]).unwrap());
    let y = tape.add(w, w).unwrap();
    let z = tape.head_dot(y, w, 1, 1.0).unwrap(); // 2w·w
    let mut grads = tape.backward(z).unwrap();
    assert_eq!(grads.or_zeros(w, &[1, 1]).data(), &[12.0]);
}

#[test]
fn shape_and_index_errors() {
    let mut tape = Tape::<f32>::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    assert!(matches!(
        tape.matmul(a, b),
        Err(Error::ShapeMismatch { .. })
    ));
    assert!(matches!(
        tape.gather_rows(a, Arc::from(vec![5])),
        Err(Error::IdOutOfRange { id: 5, .. })
    ));
    assert!(matches!(
        tape.segment_softmax(a, Arc::from(vec![0, 4]), 2),
        Err(Error::IdOutOfRange { .. })
    ));
    assert!(matches!(tape.backward(a), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn finite_check_flags_overflow() {
    let mut tape = Tape::<f32>::new();
    tape.set_check_finite(true);
    let a = tape.constant(Tensor::full(&[1, 1], f32::MAX));
    assert!(matches!(
        tape.add(a, a),
        Err(Error::NonFiniteValue { op: "add" })
    ));
}

#[test]
fn injected_elu_fault_changes_gradient() {
    let run = |fault| {
        let mut tape = Tape::<f64>::new();
        tape.inject_fault(fault);
        let x = tape.param(Tensor::matrix(1, 1, vec![-1.0]).unwrap());
        let y = tape.elu(x).unwrap();
        let mut g = tape.backward(y).unwrap();
        g.or_zeros(x, &[1, 1]).data()[0]
    };
    assert!((run(None) - (-1.0f64).exp()).abs() < 1e-12);
    assert_eq!(run(Some(Fault::EluBackward)), 1.0);
}

#[test]
fn softmax_rows_and_argmax_ties() {
    let t = Tensor::matrix(2, 3, vec![1.0f32, 1.0, 1.0, 0.0, 5.0, 5.0]).unwrap();
    let p = softmax_rows(&t);
    for r in 0..2 {
        assert!((p.row(r).iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }
    assert_eq!(argmax(p.row(0)), 0);
    assert_eq!(argmax(p.row(1)), 1);
}
