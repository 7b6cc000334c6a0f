use super::*;
use crate::rng::StreamRng;
use alloc::vec::Vec;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape.to_vec(), data).unwrap()
}

fn random(rng: &mut StreamRng, shape: &[usize]) -> Tensor<f64> {
    let n = numel(shape);
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.standard_normal()).collect()).unwrap()
}

/// Central-difference check of `f` at every coordinate of every input.
fn fd_check(inputs: &[Tensor<f64>], f: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x).unwrap()).collect();
    let loss = f(&mut tape, &vars).unwrap();
    let grads = tape.backward(loss).unwrap();
    let eval = |xs: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x).unwrap()).collect();
        let l = f(&mut tape, &vars).unwrap();
        tape.scalar_value(l).unwrap()
    };
    let h = 1e-3;
    for (k, x) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).unwrap();
        for i in 0..x.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1.0);
            assert!(err < 1e-4, "input {k} coord {i}: analytic {} numeric {numeric}", analytic[i]);
        }
    }
}

#[test]
fn matmul_identity() {
    let mut tape = Tape::new();
    let i = tape.constant(&t(&[2, 2], &[1.0, 0.0, 0.0, 1.0])).unwrap();
    let m = tape.constant(&t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
    let out = tape.matmul(i, m).unwrap();
    assert_eq!(tape.value(out), tape.value(m));
}

#[test]
fn activations_at_zero() {
    let mut tape = Tape::new();
    let z = tape.constant(&t(&[1], &[0.0])).unwrap();
    let s = tape.sigmoid(z).unwrap();
    let th = tape.tanh(z).unwrap();
    assert_eq!(tape.value(s), &[0.5]);
    assert_eq!(tape.value(th), &[0.0]);
}

#[test]
fn conv_of_ones_sums_sixteen_products() {
    let mut tape = Tape::new();
    let x = tape.constant(&Tensor::full([1, 1, 4, 4], 1.0f64)).unwrap();
    let k = tape.constant(&Tensor::full([1, 1, 4, 4], 1.0f64)).unwrap();
    let y = tape.conv2d(x, k, 1, 0).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 1, 1]);
    assert_eq!(tape.value(y), &[16.0]);
}

#[test]
fn shape_errors_name_both_shapes() {
    let mut tape = Tape::<f32>::new();
    let a = tape.constant(&Tensor::zeros([2, 3])).unwrap();
    let b = tape.constant(&Tensor::zeros([2, 3])).unwrap();
    let err = tape.matmul(a, b).unwrap_err();
    let msg = alloc::format!("{err}");
    assert!(msg.contains("[2, 3]"), "{msg}");
    assert!(matches!(err, Error::Dimension(_)));
}

#[test]
fn bce_rejects_inputs_outside_unit_interval() {
    let mut tape = Tape::<f64>::new();
    let p = tape.constant(&t(&[2], &[0.5, 1.0])).unwrap();
    let err = tape.bce_loss(p, &t(&[2], &[1.0, 0.0])).unwrap_err();
    assert!(matches!(err, Error::Domain(_)));
}

#[test]
fn linear_gradient() {
    let mut tape = Tape::new();
    let x = tape.constant(&t(&[3], &[1.0, 2.0, 3.0])).unwrap();
    let w = tape.leaf(&t(&[3], &[0.3, -0.2, 0.9])).unwrap();
    let p = tape.mul(w, x).unwrap();
    let loss = tape.sum(p).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(w).unwrap(), &[1.0, 2.0, 3.0]);
}

#[test]
fn unreachable_leaf_gets_zero() {
    let mut tape = Tape::new();
    let a = tape.leaf(&t(&[2], &[1.0, 2.0])).unwrap();
    let b = tape.leaf(&t(&[3], &[1.0, 2.0, 3.0])).unwrap();
    let loss = tape.sum(a).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(b).unwrap(), &[0.0, 0.0, 0.0]);
}

#[test]
fn backward_contract_and_state_errors() {
    let mut tape = Tape::new();
    let a = tape.leaf(&t(&[2], &[1.0, 2.0])).unwrap();
    assert!(matches!(tape.backward(a), Err(Error::Contract(_))));
    let s = tape.sum(a).unwrap();
    tape.backward(s).unwrap();
    assert!(matches!(tape.backward(s), Err(Error::State(_))));
    assert!(matches!(tape.relu(a), Err(Error::State(_))));
}

#[test]
fn non_finite_values_surface_as_errors() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(&t(&[1], &[1e300])).unwrap();
    let b = tape.mul(a, a);
    assert!(matches!(b, Err(Error::NonFinite("mul"))));
}

#[test]
fn fd_elementwise_ops() {
    let mut rng = StreamRng::new(11, "fd-elementwise");
    let a = random(&mut rng, &[3, 4]);
    let b = random(&mut rng, &[3, 4]);
    fd_check(&[a.clone(), b.clone()], |tp, v| {
        let s = tp.add(v[0], v[1])?;
        let d = tp.sub(s, v[1])?;
        let m = tp.mul(d, v[1])?;
        let sc = tp.scale(m, 0.7)?;
        tp.sum(sc)
    });
    fd_check(&[a.clone()], |tp, v| {
        let r = tp.tanh(v[0])?;
        let s = tp.sigmoid(v[0])?;
        let l = tp.leaky_relu(v[0], 0.2)?;
        let rr = tp.relu(v[0])?;
        let x = tp.mul(r, s)?;
        let y = tp.add(x, l)?;
        let z = tp.add(y, rr)?;
        tp.mean(z)
    });
}

#[test]
fn fd_matmul_bias() {
    let mut rng = StreamRng::new(12, "fd-matmul");
    let x = random(&mut rng, &[4, 3]);
    let w = random(&mut rng, &[3, 5]);
    let b = random(&mut rng, &[5]);
    fd_check(&[x, w, b], |tp, v| {
        let y = tp.matmul(v[0], v[1])?;
        let y = tp.bias_add(y, v[2])?;
        let y = tp.tanh(y)?;
        tp.sum(y)
    });
}

#[test]
fn fd_conv_and_transposed_conv() {
    let mut rng = StreamRng::new(13, "fd-conv");
    let x = random(&mut rng, &[2, 2, 5, 5]);
    let k = random(&mut rng, &[3, 2, 3, 3]);
    fd_check(&[x.clone(), k], |tp, v| {
        let y = tp.conv2d(v[0], v[1], 2, 1)?;
        let y = tp.tanh(y)?;
        tp.sum(y)
    });
    let kt = random(&mut rng, &[2, 3, 4, 4]);
    fd_check(&[x, kt], |tp, v| {
        let y = tp.conv_transpose2d(v[0], v[1], 2, 1)?;
        let y = tp.sigmoid(y)?;
        tp.mean(y)
    });
}

#[test]
fn fd_batchnorm_train_and_eval() {
    let mut rng = StreamRng::new(14, "fd-bn");
    let x = random(&mut rng, &[4, 3, 2, 2]);
    let gamma = random(&mut rng, &[3]);
    let beta = random(&mut rng, &[3]);
    let w = random(&mut rng, &[4, 3, 2, 2]);
    for mode in [BatchNormMode::TrainFrozenStats, BatchNormMode::Eval] {
        fd_check(&[x.clone(), gamma.clone(), beta.clone()], |tp, v| {
            let mut stats = RunningStats::new(3);
            stats.var = alloc::vec![0.5, 1.5, 2.0];
            let y = tp.batchnorm(v[0], v[1], v[2], &mut stats, mode)?;
            let wv = tp.constant(&w)?;
            let y = tp.mul(y, wv)?;
            let y = tp.tanh(y)?;
            tp.sum(y)
        });
    }
}

#[test]
fn batchnorm_train_updates_running_stats() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(&t(&[4, 1], &[1.0, 2.0, 3.0, 4.0])).unwrap();
    let g = tape.constant(&t(&[1], &[1.0])).unwrap();
    let b = tape.constant(&t(&[1], &[0.0])).unwrap();
    let mut stats = RunningStats::new(1);
    tape.batchnorm(x, g, b, &mut stats, BatchNormMode::Train).unwrap();
    assert!((stats.mean[0] - 0.25).abs() < 1e-12);
    // unbiased variance of 1..4 is 5/3
    assert!((stats.var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    let before = stats.clone();
    tape.batchnorm(x, g, b, &mut stats, BatchNormMode::Eval).unwrap();
    tape.batchnorm(x, g, b, &mut stats, BatchNormMode::TrainFrozenStats).unwrap();
    assert_eq!(before, stats);
}

#[test]
fn fd_losses() {
    let mut rng = StreamRng::new(15, "fd-loss");
    let logits = random(&mut rng, &[6, 1]);
    let targets = t(&[6, 1], &[1.0, 0.0, 1.0, 0.0, 0.3, 1.0]);
    fd_check(&[logits.clone()], |tp, v| tp.bce_with_logits(v[0], &targets));
    fd_check(&[logits], |tp, v| {
        let p = tp.sigmoid(v[0])?;
        tp.bce_loss(p, &targets)
    });
    let ce = random(&mut rng, &[5, 4]);
    fd_check(&[ce], |tp, v| tp.cross_entropy(v[0], &[0, 3, 2, 1, 3]));
}

#[test]
fn bce_with_logits_matches_bce_of_sigmoid() {
    let mut rng = StreamRng::new(16, "bce-eq");
    let logits = random(&mut rng, &[8]);
    let targets = t(&[8], &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.5]);
    let mut tape = Tape::new();
    let x = tape.constant(&logits).unwrap();
    let p = tape.sigmoid(x).unwrap();
    let a = tape.bce_loss(p, &targets).unwrap();
    let b = tape.bce_with_logits(x, &targets).unwrap();
    assert!((tape.scalar_value(a).unwrap() - tape.scalar_value(b).unwrap()).abs() < 1e-12);
}

#[test]
fn reshape_passes_gradient_through() {
    let mut rng = StreamRng::new(17, "reshape");
    let x = random(&mut rng, &[2, 6]);
    fd_check(&[x.clone().reshape([1, 3, 2, 2]).unwrap()], |tp, v| {
        let p = tp.avg_pool2d(v[0], 2)?;
        let p = tp.tanh(p)?;
        tp.sum(p)
    });
    fd_check(&[x], |tp, v| {
        let r = tp.reshape(v[0], &[3, 4])?;
        let w = tp.constant(&Tensor::full([4, 2], 0.5))?;
        let y = tp.matmul(r, w)?;
        let y = tp.tanh(y)?;
        tp.sum(y)
    });
}

#[test]
fn tape_replay_is_bit_identical() {
    let run = || {
        let mut rng = StreamRng::new(99, "replay");
        let x = random(&mut rng, &[3, 2, 4, 4]);
        let k = random(&mut rng, &[2, 2, 3, 3]);
        let mut tape = Tape::new();
        let xv = tape.leaf(&x).unwrap();
        let kv = tape.leaf(&k).unwrap();
        let y = tape.conv2d(xv, kv, 1, 1).unwrap();
        let y = tape.tanh(y).unwrap();
        let l = tape.sum(y).unwrap();
        let value = tape.scalar_value(l).unwrap();
        let g = tape.backward(l).unwrap();
        (value.to_bits(), g.get(kv).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

#[test]
fn transposed_conv_is_conv_input_gradient() {
    let mut rng = StreamRng::new(21, "convt-adjoint");
    // geometries where the strided windows tile the padded input exactly
    for (stride, padding, h) in [(1, 0, 5), (2, 1, 8), (2, 0, 8), (3, 1, 8), (1, 2, 4)] {
        let x = random(&mut rng, &[2, 3, h, h]);
        let k = random(&mut rng, &[4, 3, 4, 4]);
        let mut tape = Tape::new();
        let xv = tape.leaf(&x).unwrap();
        let kv = tape.constant(&k).unwrap();
        let y = tape.conv2d(xv, kv, stride, padding).unwrap();
        let upstream = random(&mut rng, tape.shape(y));
        let uv = tape.constant(&upstream).unwrap();
        let p = tape.mul(y, uv).unwrap();
        let l = tape.sum(p).unwrap();
        let g = tape.backward(l).unwrap();
        let grad_x = g.get(xv).unwrap().to_vec();

        let mut tape = Tape::new();
        let uv = tape.constant(&upstream).unwrap();
        let kv = tape.constant(&k).unwrap();
        let z = tape.conv_transpose2d(uv, kv, stride, padding).unwrap();
        assert_eq!(tape.shape(z), x.shape());
        for (want, got) in grad_x.iter().zip(tape.value(z)) {
            assert!((want - got).abs() < 1e-5, "stride {stride} pad {padding}");
        }
    }
}
