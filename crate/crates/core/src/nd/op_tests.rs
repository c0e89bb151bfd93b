#![allow(clippy::excessive_precision)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::check::{check_param, relative_error};
use super::*;

type OpCase = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    // keep magnitudes away from zero so relu kinks are not sampled
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Builds `sum(op(params) * fixed_weights)` and compares every parameter's
/// tape gradient with central differences.
fn check_op<F>(shapes: &[&[usize]], seed: u64, build: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            store
                .add(format!("p{i}"), random_tensor(&mut rng, s), true)
                .unwrap()
        })
        .collect();
    let weight_seed = rng.gen::<u64>();
    let forward = |store: &ParamStore| -> (Tape, Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ids.iter().map(|&id| tape.param(store, id)).collect();
        let out = build(&mut tape, &vars);
        let shape = tape.value(out).shape().to_vec();
        let w = random_tensor(&mut ChaCha8Rng::seed_from_u64(weight_seed), &shape);
        let w = tape.input(w);
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum_all(prod);
        (tape, loss)
    };
    let (tape, loss) = forward(&store);
    tape.backward(loss, &mut store).unwrap();
    let mut worst: f64 = 0.0;
    for &id in &ids {
        let n = store.get(id).value.numel();
        let idx: Vec<usize> = (0..n).collect();
        let r = check_param(&mut store, id, &idx, 1e-5, |s| {
            let (t, l) = forward(s);
            t.value(l).item().unwrap()
        });
        worst = worst.max(r.max_rel_error);
    }
    worst
}

#[test]
fn matmul_identity_and_gradient() {
    let mut tape = Tape::new();
    let x = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let i = tape.input(Tensor::identity(2));
    let xv = tape.input(x.clone());
    let y = tape.matmul(i, xv).unwrap();
    assert_eq!(tape.value(y), &x);
    assert!(tape.matmul(xv, xv).is_err());

    // d sum(A B) / dA has rows equal to the row sums of B
    let mut store = ParamStore::new();
    let a = store
        .add("a", Tensor::matrix(2, 3, vec![0.3; 6]).unwrap(), true)
        .unwrap();
    let mut tape = Tape::new();
    let av = tape.param(&store, a);
    let bv = tape.input(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let ab = tape.matmul(av, bv).unwrap();
    let s = tape.sum_all(ab);
    tape.backward(s, &mut store).unwrap();
    assert_eq!(store.get(a).grad.data(), &[3.0, 7.0, 11.0, 3.0, 7.0, 11.0]);

    assert!(check_op(&[&[3, 4], &[4, 2]], 1, |t, v| t.matmul(v[0], v[1]).unwrap()) < 1e-6);
}

#[test]
fn means_of_constant_matrix() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::full(&[3, 4], 2.5));
    let r = tape.mean_rows(x).unwrap();
    let c = tape.mean_cols(x).unwrap();
    assert_eq!(tape.value(r), &Tensor::row(vec![2.5; 4]));
    assert_eq!(tape.value(c), &Tensor::column(vec![2.5; 3]));
}

#[test]
fn elementwise_and_structural_gradients() {
    let cases: Vec<(Vec<&[usize]>, OpCase)> = vec![
        (
            vec![&[3, 2], &[3, 2]],
            Box::new(|t, v| t.add(v[0], v[1]).unwrap()),
        ),
        (
            vec![&[3, 2], &[3, 2]],
            Box::new(|t, v| t.sub(v[0], v[1]).unwrap()),
        ),
        (
            vec![&[3, 2], &[3, 2]],
            Box::new(|t, v| t.mul(v[0], v[1]).unwrap()),
        ),
        (
            vec![&[4, 3], &[1, 3]],
            Box::new(|t, v| t.add_row(v[0], v[1]).unwrap()),
        ),
        (vec![&[2, 5]], Box::new(|t, v| t.transpose(v[0]).unwrap())),
        (vec![&[2, 3]], Box::new(|t, v| t.scale(v[0], -1.7))),
        (vec![&[2, 3]], Box::new(|t, v| t.add_scalar(v[0], 0.4))),
        (
            vec![&[2, 3], &[2, 1]],
            Box::new(|t, v| t.concat_cols(&[v[0], v[1]]).unwrap()),
        ),
        (
            vec![&[2, 3], &[1, 3]],
            Box::new(|t, v| t.concat_rows(&[v[0], v[1]]).unwrap()),
        ),
        (
            vec![&[5, 2]],
            Box::new(|t, v| t.slice_rows(v[0], 1, 3).unwrap()),
        ),
        (
            vec![&[4, 2]],
            Box::new(|t, v| t.gather_rows(v[0], &[3, 0, 3, 1]).unwrap()),
        ),
        (
            vec![&[4, 2]],
            Box::new(|t, v| t.scatter_add_rows(v[0], &[2, 0, 2, 1], 3).unwrap()),
        ),
        (vec![&[4, 3]], Box::new(|t, v| t.mean_rows(v[0]).unwrap())),
        (vec![&[4, 3]], Box::new(|t, v| t.mean_cols(v[0]).unwrap())),
        (
            vec![&[5, 2]],
            Box::new(|t, v| t.segment_mean_rows(v[0], &[2, 3]).unwrap()),
        ),
        (
            vec![&[2, 3]],
            Box::new(|t, v| t.segment_broadcast_rows(v[0], &[3, 1]).unwrap()),
        ),
        (vec![&[3, 3]], Box::new(|t, v| t.relu(v[0]))),
        (vec![&[3, 3]], Box::new(|t, v| t.sigmoid(v[0]))),
        (vec![&[5, 1]], Box::new(|t, v| t.softmax(v[0]).unwrap())),
        (vec![&[1, 4]], Box::new(|t, v| t.softmax(v[0]).unwrap())),
    ];
    for (i, (shapes, build)) in cases.iter().enumerate() {
        let err = check_op(shapes, 10 + i as u64, build);
        assert!(err < 1e-6, "case {i}: relative error {err}");
    }
}

#[test]
fn softmax_and_sigmoid_values() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::row(vec![1.0, 2.0, 3.0]));
    let y = tape.softmax(x).unwrap();
    let expect = [
        0.090030573170380457998,
        0.24472847105479765247,
        0.66524095577482188953,
    ];
    for (a, e) in tape.value(y).data().iter().zip(expect) {
        assert!((a - e).abs() < 1e-15);
    }
    let c = tape.input(Tensor::column(vec![-4.0; 7]));
    let u = tape.softmax(c).unwrap();
    assert!(tape
        .value(u)
        .data()
        .iter()
        .all(|&v| (v - 1.0 / 7.0).abs() < 1e-15));
    let z = tape.input(Tensor::scalar(0.0));
    let s = tape.sigmoid(z);
    assert_eq!(tape.value(s).data(), &[0.5]);
    let m = tape.input(Tensor::zeros(&[2, 2]));
    assert!(tape.softmax(m).is_err());
}

#[test]
fn relu_kink_has_zero_derivative() {
    let mut store = ParamStore::new();
    let x = store
        .add("x", Tensor::row(vec![0.0, 1.0, -1.0]), true)
        .unwrap();
    let mut tape = Tape::new();
    let xv = tape.param(&store, x);
    let r = tape.relu(xv);
    let s = tape.sum_all(r);
    tape.backward(s, &mut store).unwrap();
    assert_eq!(store.get(x).grad.data(), &[0.0, 1.0, 0.0]);
}

/// Direct summation: y[t][o] = b[o] + sum_j sum_i x[t + j - p][i] w[j][i][o].
fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, segments: &[usize]) -> Tensor {
    let (k, ci, co) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let p = (k - 1) as isize / 2;
    let mut out = Tensor::zeros(&[x.rows(), co]);
    let mut start = 0;
    for &len in segments {
        for t in 0..len {
            for o in 0..co {
                let mut acc = b.data()[o];
                for j in 0..k {
                    let src = t as isize + j as isize - p;
                    if src < 0 || src >= len as isize {
                        continue;
                    }
                    for i in 0..ci {
                        acc += x.get(start + src as usize, i) * w.data()[(j * ci + i) * co + o];
                    }
                }
                out.data_mut()[(start + t) * co + o] = acc;
            }
        }
        start += len;
    }
    out
}

#[test]
fn conv1d_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, &[6, 4]);
    let w = random_tensor(&mut rng, &[3, 4, 5]);
    let b = random_tensor(&mut rng, &[1, 5]);
    for segments in [vec![6], vec![2, 4], vec![1, 1, 4]] {
        let mut tape = Tape::new();
        let (xv, wv, bv) = (
            tape.input(x.clone()),
            tape.input(w.clone()),
            tape.input(b.clone()),
        );
        let y = tape.conv1d(xv, wv, bv, &segments).unwrap();
        assert!(
            tape.value(y)
                .max_abs_diff(&naive_conv(&x, &w, &b, &segments))
                < 1e-14
        );
    }
    let err = check_op(&[&[6, 4], &[3, 4, 5], &[1, 5]], 4, |t, v| {
        t.conv1d(v[0], v[1], v[2], &[6]).unwrap()
    });
    assert!(err < 1e-6, "{err}");
    let err = check_op(&[&[7, 2], &[5, 2, 3], &[1, 3]], 5, |t, v| {
        t.conv1d(v[0], v[1], v[2], &[3, 4]).unwrap()
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn conv1d_degenerate_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_tensor(&mut rng, &[5, 3]);
    let w1 = random_tensor(&mut rng, &[1, 3, 2]);
    let mut tape = Tape::new();
    let xv = tape.input(x.clone());
    let wv = tape.input(w1.clone());
    let zero = tape.input(Tensor::zeros(&[1, 2]));
    let y = tape.conv1d(xv, wv, zero, &[5]).unwrap();
    let linear = x
        .matmul(&Tensor::matrix(3, 2, w1.data().to_vec()).unwrap())
        .unwrap();
    assert!(tape.value(y).max_abs_diff(&linear) < 1e-15);

    // delta kernel: centre tap is the identity channel map
    let mut delta = Tensor::zeros(&[5, 3, 3]);
    for c in 0..3 {
        delta.data_mut()[(2 * 3 + c) * 3 + c] = 1.0;
    }
    let dv = tape.input(delta);
    let zero3 = tape.input(Tensor::zeros(&[1, 3]));
    let y = tape.conv1d(xv, dv, zero3, &[5]).unwrap();
    assert_eq!(tape.value(y), &x);

    let even = tape.input(Tensor::zeros(&[2, 3, 3]));
    assert!(tape.conv1d(xv, even, zero3, &[5]).is_err());
    assert!(tape.conv1d(xv, dv, zero3, &[4]).is_err());
}

#[test]
fn batch_norm_train_normalizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut x = random_tensor(&mut rng, &[7, 3]);
    for r in 0..7 {
        x.data_mut()[r * 3 + 2] = 4.2;
    }
    let mut tape = Tape::new();
    let xv = tape.input(x);
    let g = tape.input(Tensor::full(&[1, 3], 1.0));
    let b = tape.input(Tensor::zeros(&[1, 3]));
    let (y, stats) = tape.batch_norm_train(xv, g, b, 1e-5).unwrap();
    let y = tape.value(y);
    for c in 0..2 {
        let col: Vec<f64> = (0..7).map(|r| y.get(r, c)).collect();
        let mean = col.iter().sum::<f64>() / 7.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 7.0;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-4);
    }
    assert!((0..7).all(|r| y.get(r, 2) == 0.0));
    assert!((stats.mean[2] - 4.2).abs() < 1e-15);

    let one = tape.input(Tensor::zeros(&[1, 3]));
    assert!(matches!(
        tape.batch_norm_train(one, g, b, 1e-5),
        Err(TensorError::DegenerateBatch { rows: 1 })
    ));
}

#[test]
fn batch_norm_variance_within_tolerance() {
    // output variance is var / (var + eps); a wide spread makes the floor negligible
    let mut tape = Tape::new();
    let xv = tape.input(Tensor::column(vec![-300.0, 100.0, 500.0, 70.0]));
    let g = tape.input(Tensor::scalar(1.0));
    let b = tape.input(Tensor::scalar(0.0));
    let (y, _) = tape.batch_norm_train(xv, g, b, 1e-5).unwrap();
    let d = tape.value(y).data();
    let var = d.iter().map(|v| v * v).sum::<f64>() / 4.0;
    assert!((var - 1.0).abs() < 1e-8);
}

#[test]
fn batch_norm_eval_matches_scripted_values() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, -1.0]).unwrap());
    let g = tape.input(Tensor::row(vec![2.0, 1.0]));
    let b = tape.input(Tensor::row(vec![0.1, -0.2]));
    let y = tape
        .batch_norm_eval(x, g, b, &[0.5, -1.0], &[4.0, 0.25], 1e-5)
        .unwrap();
    let expect = [
        0.59999937500117187811,
        5.7998800035998799931,
        2.5999968750058593683,
        -0.2,
    ];
    for (a, e) in tape.value(y).data().iter().zip(expect) {
        assert!((a - e).abs() < 1e-14, "{a} vs {e}");
    }
}

#[test]
fn batch_norm_gradients() {
    let err = check_op(&[&[5, 3], &[1, 3], &[1, 3]], 21, |t, v| {
        t.batch_norm_train(v[0], v[1], v[2], 1e-5).unwrap().0
    });
    assert!(err < 1e-6, "{err}");
    let err = check_op(&[&[5, 3], &[1, 3], &[1, 3]], 22, |t, v| {
        t.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.3, 0.0], &[1.5, 0.2, 3.0], 1e-5)
            .unwrap()
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn running_statistics_update() {
    let stats = BatchStats {
        mean: vec![2.0],
        var: vec![3.0],
        rows: 4,
    };
    let (mut m, mut v) = (vec![0.0], vec![1.0]);
    stats.update_running(&mut m, &mut v, 0.1);
    assert!((m[0] - 0.2).abs() < 1e-15);
    assert!((v[0] - (0.9 + 0.1 * 4.0)).abs() < 1e-15);
}

#[test]
fn bce_values_and_gradient() {
    let mut tape = Tape::new();
    let p = tape.input(Tensor::column(vec![0.5, 0.5, 0.5, 0.5]));
    let l = tape.bce(p, &[1.0, 0.0, 1.0, 0.0], 1e-12).unwrap();
    assert!((tape.value(l).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

    let p = tape.input(Tensor::column(vec![0.9, 0.2]));
    let l = tape.bce(p, &[1.0, 0.0], 1e-12).unwrap();
    assert!((tape.value(l).item().unwrap() - 0.164252).abs() < 1e-6);

    let p = tape.input(Tensor::column(vec![1.0, 0.0]));
    let l = tape.bce(p, &[1.0, 0.0], 1e-12).unwrap();
    let v = tape.value(l).item().unwrap();
    assert!((0.0..1e-11).contains(&v));

    let err = check_op(&[&[3, 1]], 30, |t, v| {
        let s = t.sigmoid(v[0]);
        t.bce(s, &[1.0, 0.0, 1.0], 1e-12).unwrap()
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn embed_rows_accumulates_repeated_rows() {
    let mut store = ParamStore::new();
    let table = store
        .add(
            "emb",
            Tensor::matrix(4, 2, (0..8).map(f64::from).collect()).unwrap(),
            true,
        )
        .unwrap();
    let mut tape = Tape::new();
    let e = tape.embed_rows(&store, table, &[3, 1, 3]).unwrap();
    assert_eq!(tape.value(e).data(), &[6.0, 7.0, 2.0, 3.0, 6.0, 7.0]);
    let s = tape.sum_all(e);
    tape.backward(s, &mut store).unwrap();
    assert_eq!(
        store.get(table).grad.data(),
        &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 2.0, 2.0]
    );
    assert!(tape.embed_rows(&store, table, &[4]).is_err());
}

#[test]
fn backward_errors() {
    let mut store = ParamStore::new();
    let tape = Tape::new();
    let mut other = Tape::new();
    let v = other.input(Tensor::scalar(1.0));
    assert_eq!(tape.backward(v, &mut store), Err(TensorError::NoTape));
    let m = other.input(Tensor::zeros(&[2, 2]));
    assert!(matches!(
        other.backward(m, &mut store),
        Err(TensorError::NotScalar { .. })
    ));
}

#[test]
fn relative_error_floor() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert!(relative_error(1e-12, 0.0) < 1e-4);
    assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
}
