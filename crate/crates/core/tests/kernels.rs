mod common;

use common::checks::{kernel_oracle_sweep, layer_gradient_checks};
use common::*;
use ssdr_core::ops::*;
use ssdr_core::{Mode, Tensor};

fn t(shape: &[usize], v: &[f32]) -> Tensor {
    Tensor::new(shape, v.to_vec()).unwrap()
}

#[test]
fn loop_oracles_agree_on_random_instances() {
    for (kernel, err) in kernel_oracle_sweep(150, 7) {
        assert!(err <= 1e-5, "{kernel}: max abs error {err:e}");
    }
}

#[test]
fn backward_kernels_match_finite_differences() {
    for (kernel, err) in layer_gradient_checks(40, 11) {
        assert!(err < 1e-2, "{kernel}: max rel error {err:e}");
    }
}

#[test]
fn conv_scalar_and_identity_kernel() {
    let (x, w, b) = (t(&[1, 1, 1, 1], &[2.0]), t(&[1, 1, 1, 1], &[3.0]), t(&[1], &[1.0]));
    let p = ConvParams { weight: &w, bias: &b, stride: 1, padding: 0 };
    assert_eq!(conv2d_forward(&x, &p).unwrap().data(), &[7.0]);
    let g = conv2d_backward(&x, &p, &t(&[1, 1, 1, 1], &[1.0])).unwrap();
    assert_eq!(g.grad_weight.data(), &[2.0]);
    assert_eq!(g.grad_bias.data(), &[1.0]);
    assert_eq!(g.grad_x.data(), &[3.0]);

    let x = Tensor::from_fn(&[1, 1, 4, 4], |i| i as f32 * 0.5 - 3.0);
    let mut k = vec![0.0; 9];
    k[4] = 1.0;
    let (w, b) = (t(&[1, 1, 3, 3], &k), t(&[1], &[0.0]));
    let p = ConvParams { weight: &w, bias: &b, stride: 1, padding: 1 };
    assert_eq!(conv2d_forward(&x, &p).unwrap(), x);
}

#[test]
fn conv_zero_grad_and_shape_errors() {
    let mut r = rng(3);
    let x = Tensor::from_fn(&[2, 3, 5, 5], |_| rand::Rng::random_range(&mut r, -1.0..1.0));
    let w = Tensor::from_fn(&[4, 3, 3, 3], |i| (i % 7) as f32 * 0.1);
    let b = t(&[4], &[0.1, 0.2, 0.3, 0.4]);
    let p = ConvParams { weight: &w, bias: &b, stride: 1, padding: 1 };
    let y = conv2d_forward(&x, &p).unwrap();
    assert_eq!(y.shape(), &[2, 4, 5, 5]);
    let g = conv2d_backward(&x, &p, &Tensor::zeros(y.shape())).unwrap();
    assert!(g.grad_x.data().iter().chain(g.grad_weight.data()).chain(g.grad_bias.data()).all(|&v| v == 0.0));
    assert!(conv2d_forward(&Tensor::zeros(&[1, 2, 5, 5]), &p).is_err());
    assert!(conv2d_backward(&x, &p, &Tensor::zeros(&[2, 4, 4, 4])).is_err());

    // shape-preserving padding keeps H and W for K in {1, 3}
    let w1 = Tensor::from_fn(&[4, 3, 1, 1], |i| i as f32);
    let p1 = ConvParams { weight: &w1, bias: &b, stride: 1, padding: 0 };
    assert_eq!(conv2d_forward(&x, &p1).unwrap().shape(), &[2, 4, 5, 5]);
}

#[test]
fn maxpool_examples() {
    let x = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let (y, cache) = maxpool2d_forward(&x, 2, 2).unwrap();
    assert_eq!(y.data(), &[4.0]);
    assert_eq!(cache.argmax, vec![3]);
    let g = maxpool2d_backward(&t(&[1, 1, 1, 1], &[1.0]), &cache, x.shape()).unwrap();
    assert_eq!(g.data(), &[0.0, 0.0, 0.0, 1.0]);
    let g = maxpool2d_backward(&t(&[1, 1, 1, 1], &[0.0]), &cache, x.shape()).unwrap();
    assert!(g.data().iter().all(|&v| v == 0.0));

    let c = Tensor::full(&[2, 3, 6, 4], 2.5f32);
    let (y, cache) = maxpool2d_forward(&c, 2, 2).unwrap();
    assert_eq!(y, Tensor::full(&[2, 3, 3, 2], 2.5));
    // a constant window picks its first element
    assert_eq!(cache.argmax[0], 0);
    assert!(maxpool2d_forward(&Tensor::<f32>::zeros(&[1, 1, 3, 4]), 2, 2).is_err());
}

#[test]
fn maxpool_conserves_gradient_mass_and_stays_in_window() {
    let mut r = rng(5);
    let x = Tensor::from_fn(&[2, 3, 8, 6], |_| rand::Rng::random_range(&mut r, -1.0f32..1.0));
    let (y, cache) = maxpool2d_forward(&x, 2, 2).unwrap();
    for (o, &a) in cache.argmax.iter().enumerate() {
        let plane = o / 12;
        let (oy, ox) = ((o % 12) / 3, o % 3);
        let local = a - plane * 48;
        assert_eq!((local / 6) / 2, oy);
        assert_eq!((local % 6) / 2, ox);
    }
    let go = Tensor::from_fn(y.shape(), |i| (i % 5) as f32 - 2.0);
    let gx = maxpool2d_backward(&go, &cache, x.shape()).unwrap();
    assert!((gx.sum() - go.sum()).abs() < 1e-6);
}

#[test]
fn relu_examples() {
    let x = t(&[3], &[-1.0, 0.0, 2.0]);
    assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
    assert_eq!(relu_backward(&x, &t(&[3], &[5.0, 5.0, 5.0])).unwrap().data(), &[0.0, 0.0, 5.0]);
    let neg = Tensor::full(&[4], -0.5f32);
    assert!(relu_backward(&neg, &Tensor::full(&[4], 3.0)).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn batchnorm_examples() {
    let mut p = BatchNormParams::<f32>::new(2);
    let y = batchnorm_forward(&Tensor::full(&[3, 2, 2, 2], 4.0f32), &mut p, Mode::Train).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));

    let mut r = rng(9);
    let x = Tensor::from_fn(&[4, 3, 5, 5], |_| rand::Rng::random_range(&mut r, -3.0f32..7.0));
    let mut p = BatchNormParams::<f32>::new(3);
    let y = batchnorm_forward(&x, &mut p, Mode::Train).unwrap();
    let shape = [4, 3, 5, 5];
    let yd: Vec<f64> = y.data().iter().map(|&v| v as f64).collect();
    let (_, means, vars) = batchnorm_oracle(shape, &yd, &[1.0; 3], &[0.0; 3], 1e-5);
    for c in 0..3 {
        assert!(means[c].abs() < 1e-5, "channel {c} mean {}", means[c]);
        assert!((vars[c] - 1.0).abs() < 1e-3, "channel {c} var {}", vars[c]);
    }

    let go = Tensor::from_fn(x.shape(), |i| ((i * 13) % 7) as f32 - 3.0);
    let g = batchnorm_backward(&x, &p, &go).unwrap();
    for c in 0..3 {
        let want: f64 = (0..4).flat_map(|n| (0..25).map(move |i| (n * 3 + c) * 25 + i)).map(|k| go.data()[k] as f64).sum();
        assert!((g.grad_beta[c] as f64 - want).abs() < 1e-4);
    }
    let g = batchnorm_backward(&x, &p, &Tensor::zeros(x.shape())).unwrap();
    assert!(g.grad_x.data().iter().chain(&g.grad_gamma).chain(&g.grad_beta).all(|&v| v == 0.0));

    // eval mode leaves the running statistics alone
    let before = p.clone();
    let a = batchnorm_forward(&x, &mut p, Mode::Eval).unwrap();
    let b = batchnorm_forward(&x, &mut p, Mode::Eval).unwrap();
    assert_eq!(p, before);
    assert_eq!(a, b);
    assert!(batchnorm_forward(&Tensor::<f32>::zeros(&[1, 2, 2, 2]), &mut p, Mode::Train).is_err());
}

#[test]
fn batchnorm_eval_with_untouched_stats_is_finite() {
    let mut p = BatchNormParams::<f32>::new(1);
    p.running_var = vec![0.0];
    let y = batchnorm_forward(&Tensor::full(&[1, 1, 2, 2], 1.0f32), &mut p, Mode::Eval).unwrap();
    assert!(y.all_finite());
}

#[test]
fn dropout_examples() {
    let mut r = rng(1);
    let x = Tensor::from_fn(&[2, 3, 4, 4], |i| i as f32);
    assert_eq!(dropout_forward(&x, 1.0, Mode::Train, &mut r).unwrap().0, x);
    assert_eq!(dropout_forward(&x, 0.6, Mode::Eval, &mut r).unwrap().0, x);
    assert!(dropout_forward(&x, 0.0, Mode::Train, &mut r).is_err());
    assert!(dropout_forward(&x, 1.5, Mode::Train, &mut r).is_err());

    let ones = Tensor::full(&[1_000_000], 1.0f32);
    let (y, _) = dropout_forward(&ones, 0.6, Mode::Train, &mut r).unwrap();
    let mean = y.sum() / 1e6;
    assert!((0.99..=1.01).contains(&mean), "mean {mean}");

    let go = Tensor::from_fn(&[5], |i| i as f32 + 1.0);
    let keep = DropoutMask::all_keep(&[5]);
    assert_eq!(dropout_backward(&keep, 1.0, &go).unwrap(), go);
    let drop = DropoutMask { keep: vec![false; 5], shape: vec![5] };
    assert!(dropout_backward(&drop, 0.6, &go).unwrap().data().iter().all(|&v| v == 0.0));
    assert!(dropout_backward(&keep, 1.0, &Tensor::<f32>::zeros(&[4])).is_err());
}

#[test]
fn global_avg_pool_examples() {
    let c = Tensor::full(&[2, 3, 4, 5], 1.5f32);
    assert_eq!(global_avg_pool_forward(&c).unwrap(), Tensor::full(&[2, 3], 1.5));
    let x = Tensor::from_fn(&[2, 3, 1, 1], |i| i as f32);
    assert_eq!(global_avg_pool_forward(&x).unwrap().data(), x.data());

    let mut r = rng(4);
    let v = uniform_vec(&mut r, 2 * 6 * 28 * 28, -1.0, 1.0);
    let x = Tensor::new(&[2, 6, 28, 28], v.clone()).unwrap();
    let y = global_avg_pool_forward(&x).unwrap();
    assert!(max_abs_diff(y.data(), &gap_oracle([2, 6, 28, 28], &v)) < 1e-6);
    let g = global_avg_pool_backward(&Tensor::full(&[1, 1], 8.0f32), 2, 2).unwrap();
    assert_eq!(g.data(), &[2.0; 4]);
}

#[test]
fn softmax_examples() {
    let ce = softmax_cross_entropy(&Tensor::full(&[1, 6], 0.3f32), &[2]).unwrap();
    assert!((ce.loss - 6f64.ln()).abs() < 1e-6);
    assert!(ce.probs.data().iter().all(|&p| (p - 1.0 / 6.0).abs() < 1e-7));
    let mut logits = vec![0.0f32; 6];
    logits[4] = 100.0;
    assert!(softmax_cross_entropy(&t(&[1, 6], &logits), &[4]).unwrap().loss < 1e-6);
    assert!(softmax_cross_entropy(&t(&[1, 6], &logits), &[6]).is_err());

    let mut r = rng(8);
    let v: Vec<f32> = (0..24).map(|_| rand::Rng::random_range(&mut r, -20.0..20.0)).collect();
    let ce = softmax_cross_entropy(&t(&[4, 6], &v), &[0, 1, 2, 5]).unwrap();
    assert!(ce.loss >= 0.0);
    for row in ce.probs.data().chunks(6) {
        assert!((row.iter().map(|&p| p as f64).sum::<f64>() - 1.0).abs() < 1e-6);
    }
}
