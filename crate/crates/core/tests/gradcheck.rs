#![allow(clippy::needless_range_loop)]

mod common;

use common::{central_diff, max_rel_err, unflatten};
use lasium_core::numkit::{forward, value_and_grad, Architecture, Layer, Loss, NetworkParams, Tensor};
use lasium_core::rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;
// Gradients that are exactly zero (e.g. a bias feeding batch norm) come back
// from central differences as ~1e-11 roundoff; below this magnitude the
// comparison is scaled absolutely.
const FLOOR: f64 = 1e-4;

fn with_flat(net: &NetworkParams, flat: &[f64]) -> NetworkParams {
    let lens: Vec<usize> = net.tensors.iter().map(Tensor::len).collect();
    let tensors = unflatten(flat, &lens)
        .into_iter()
        .zip(&net.tensors)
        .map(|(d, t)| Tensor::new(t.shape().to_vec(), d).unwrap())
        .collect();
    net.with_tensors(tensors).unwrap()
}

fn check(net: &NetworkParams, loss: &Loss, batch: &Tensor) -> f64 {
    assert!(net.param_count() <= 1000);
    let (_, g) = value_and_grad(net, loss, batch).unwrap();
    let mut f = |flat: &[f64]| {
        let out = forward(&with_flat(net, flat), batch).unwrap();
        let v = lasium_core::numkit::Var::constant(out);
        loss.apply(&v).unwrap().item()
    };
    let numeric = central_diff(&mut f, &net.flatten(), H);
    max_rel_err(&g.flatten(), &numeric, FLOOR)
}

#[test]
fn mlp_2_8_2_forward_matches_reference() {
    let arch = Architecture::mlp(2, &[8], Some(2), false);
    let net = arch.init(&mut rng::from_seed(11));
    let x = Tensor::randn(&[5, 2], 1.0, &mut rng::from_seed(12));
    let out = forward(&net, &x).unwrap();

    let (w1, b1, w2, b2) = (&net.tensors[0], &net.tensors[1], &net.tensors[2], &net.tensors[3]);
    for n in 0..5 {
        let xr = x.row(n);
        let hidden: Vec<f64> = (0..8)
            .map(|j| (b1.data()[j] + (0..2).map(|i| xr[i] * w1.data()[i * 8 + j]).sum::<f64>()).max(0.0))
            .collect();
        for k in 0..2 {
            let y = b2.data()[k] + (0..8).map(|j| hidden[j] * w2.data()[j * 2 + k]).sum::<f64>();
            assert!((y - out.data()[n * 2 + k]).abs() < 1e-12);
        }
    }
}

#[test]
fn quadratic_minimiser_has_zero_gradient() {
    // loss = mean((x w - y)^2) with y = x w exactly
    let arch = Architecture::new(vec![2], vec![Layer::Dense { inputs: 2, outputs: 1 }]).unwrap();
    let w = Tensor::new(vec![2, 1], vec![0.5, -1.5]).unwrap();
    let net = NetworkParams::new(arch, vec![w, Tensor::scalar(0.25)]).unwrap();
    let x = Tensor::new(vec![3, 2], vec![1.0, 2.0, -1.0, 0.5, 3.0, 1.0]).unwrap();
    let y = forward(&net, &x).unwrap();
    let (l, g) = value_and_grad(&net, &Loss::MeanSquaredError(y), &x).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.flatten().iter().all(|&v| v == 0.0));
}

#[test]
fn linear_regression_closed_form_gradient() {
    // loss = mean((X w - y)^2), gradient 2 X^T (X w - y) / n
    let arch = Architecture::new(vec![2], vec![Layer::Dense { inputs: 2, outputs: 1 }]).unwrap();
    let w = [0.3, -0.7];
    let net =
        NetworkParams::new(arch, vec![Tensor::new(vec![2, 1], w.to_vec()).unwrap(), Tensor::scalar(0.0)]).unwrap();
    let xs = [[1.0, 2.0], [0.5, -1.0], [-2.0, 0.25]];
    let ys = [1.0, 0.0, -0.5];
    let x = Tensor::new(vec![3, 2], xs.iter().flatten().copied().collect()).unwrap();
    let y = Tensor::new(vec![3, 1], ys.to_vec()).unwrap();
    let (_, g) = value_and_grad(&net, &Loss::MeanSquaredError(y), &x).unwrap();

    let resid: Vec<f64> = (0..3).map(|i| xs[i][0] * w[0] + xs[i][1] * w[1] - ys[i]).collect();
    for j in 0..2 {
        let expected = 2.0 * (0..3).map(|i| xs[i][j] * resid[i]).sum::<f64>() / 3.0;
        assert!((g.tensors[0].data()[j] - expected).abs() < 1e-14);
    }
    let expected_bias = 2.0 * resid.iter().sum::<f64>() / 3.0;
    assert!((g.tensors[1].item() - expected_bias).abs() < 1e-14);
}

#[test]
fn mlp_cross_entropy_matches_finite_differences() {
    let arch = Architecture::mlp(2, &[8], Some(2), false);
    for seed in 0..5 {
        let net = arch.init(&mut rng::from_seed(seed));
        let x = Tensor::randn(&[6, 2], 1.0, &mut rng::from_seed(100 + seed));
        let err = check(&net, &Loss::CrossEntropy(vec![0, 1, 1, 0, 1, 0]), &x);
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn batch_norm_mlp_matches_finite_differences() {
    let arch = Architecture::mlp(3, &[6, 5], Some(3), true);
    let net = arch.init(&mut rng::from_seed(4));
    let x = Tensor::randn(&[7, 3], 1.0, &mut rng::from_seed(5));
    let err = check(&net, &Loss::CrossEntropy(vec![0, 1, 2, 0, 1, 2, 2]), &x);
    assert!(err < TOL, "{err}");
}

#[test]
fn conv_block_matches_finite_differences() {
    let arch = Architecture::new(
        vec![6, 6, 1],
        vec![
            Layer::Conv3x3 { in_channels: 1, out_channels: 3 },
            Layer::BatchNorm { features: 3 },
            Layer::Relu,
            Layer::MaxPool2x2,
            Layer::Conv3x3 { in_channels: 3, out_channels: 4 },
            Layer::BatchNorm { features: 4 },
            Layer::Relu,
            Layer::MaxPool2x2,
            Layer::Flatten,
            Layer::Dense { inputs: 4, outputs: 2 },
        ],
    )
    .unwrap();
    let net = arch.init(&mut rng::from_seed(9));
    let x = Tensor::randn(&[4, 6, 6, 1], 1.0, &mut rng::from_seed(10));
    let err = check(&net, &Loss::CrossEntropy(vec![0, 1, 1, 0]), &x);
    assert!(err < TOL, "{err}");
}

#[test]
fn sigmoid_and_leaky_relu_match_finite_differences() {
    let arch = Architecture::new(
        vec![3],
        vec![
            Layer::Dense { inputs: 3, outputs: 5 },
            Layer::LeakyRelu { slope: 0.2 },
            Layer::Dense { inputs: 5, outputs: 3 },
            Layer::Sigmoid,
        ],
    )
    .unwrap();
    let net = arch.init(&mut rng::from_seed(21));
    let x = Tensor::randn(&[4, 3], 1.0, &mut rng::from_seed(22));
    let target = Tensor::randn(&[4, 3], 0.3, &mut rng::from_seed(23)).map(|v| v.clamp(0.0, 1.0));
    let err = check(&net, &Loss::MeanSquaredError(target), &x);
    assert!(err < TOL, "{err}");
}
