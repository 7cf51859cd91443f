//! Measurements shared by the kernel tests and the acceptance target. Each
//! returns the worst observed error so callers decide how to report it.

use rand::Rng;
use ssdr_core::ops::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, dropout_backward, dropout_forward,
    global_avg_pool_backward, global_avg_pool_forward, maxpool2d_backward, maxpool2d_forward, relu_backward,
    relu_forward, softmax_cross_entropy, BatchNormParams, ConvParams, DropoutMask,
};
use ssdr_core::{Mode, Tensor};

use super::*;

pub const FD_EPS: f64 = 1e-3;

fn t32(shape: &[usize], v: &[f64]) -> Tensor<f32> {
    Tensor::new(shape, v.iter().map(|&x| x as f32).collect()).unwrap()
}

fn t64(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::new(shape, v.to_vec()).unwrap()
}

fn as64(t: &Tensor<f32>) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// f32-representable values so the f64 oracle sees exactly the kernel's input.
fn rand32(rng: &mut impl Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    uniform_vec(rng, len, lo, hi).into_iter().map(|v| v as f32 as f64).collect()
}

fn dims(rng: &mut impl Rng) -> [usize; 4] {
    [rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=6), rng.random_range(1..=6)]
}

/// Worst absolute deviation of each f32 kernel from its loop oracle over
/// `instances` random problems.
pub fn kernel_oracle_sweep(instances: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let (mut conv, mut pool, mut bn, mut gap, mut ce) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..instances {
        // convolution with every kernel size, padding and stride combination in range
        let k = [1usize, 3, 5][r.random_range(0..3)];
        let pad = r.random_range(0..=k / 2);
        let s = ConvShape {
            n: r.random_range(1..=2),
            cin: r.random_range(1..=4),
            h: r.random_range(k..=7),
            w: r.random_range(k..=7),
            cout: r.random_range(1..=4),
            k,
            pad,
            stride: r.random_range(1..=2),
        };
        let x = rand32(&mut r, s.n * s.cin * s.h * s.w, -1.0, 1.0);
        let wt = rand32(&mut r, s.cout * s.cin * k * k, -1.0, 1.0);
        let b = rand32(&mut r, s.cout, -1.0, 1.0);
        let wt32 = t32(&[s.cout, s.cin, k, k], &wt);
        let b32 = t32(&[s.cout], &b);
        let p = ConvParams { weight: &wt32, bias: &b32, stride: s.stride, padding: s.pad };
        let got = conv2d_forward(&t32(&[s.n, s.cin, s.h, s.w], &x), &p).unwrap();
        let (oh, ow) = s.out_hw();
        assert_eq!(got.shape(), &[s.n, s.cout, oh, ow]);
        conv = conv.max(max_abs_diff(&as64(&got), &conv_oracle(s, &x, &wt, &b)));

        // pooling needs even extents
        let [n, c, h, w] = dims(&mut r);
        let shape = [n, c, 2 * h.div_ceil(2), 2 * w.div_ceil(2)];
        let len: usize = shape.iter().product();
        // a coarse grid so ties actually occur and exercise the tie rule
        let x: Vec<f64> = (0..len).map(|_| r.random_range(-3..=3) as f64 * 0.5).collect();
        let (got, cache) = maxpool2d_forward(&t32(&shape, &x), 2, 2).unwrap();
        let (want, idx) = maxpool_oracle(shape, &x);
        pool = pool.max(max_abs_diff(&as64(&got), &want));
        if cache.argmax != idx {
            pool = f64::INFINITY;
        }

        let shape = dims(&mut r);
        let len: usize = shape.iter().product();
        let x = rand32(&mut r, len, -2.0, 3.0);
        let gamma = rand32(&mut r, shape[1], 0.5, 1.5);
        let beta = rand32(&mut r, shape[1], -0.5, 0.5);
        let mut p = BatchNormParams::<f32>::new(shape[1]);
        p.gamma = gamma.iter().map(|&v| v as f32).collect();
        p.beta = beta.iter().map(|&v| v as f32).collect();
        let got = batchnorm_forward(&t32(&shape, &x), &mut p, Mode::Train).unwrap();
        let (want, means, vars) = batchnorm_oracle(shape, &x, &gamma, &beta, p.eps);
        bn = bn.max(max_abs_diff(&as64(&got), &want));
        // running statistics after one update from (0, 1)
        for ch in 0..shape[1] {
            bn = bn.max((p.running_mean[ch] as f64 - 0.1 * means[ch]).abs());
            bn = bn.max((p.running_var[ch] as f64 - (0.9 + 0.1 * vars[ch])).abs());
        }

        let shape = dims(&mut r);
        let len: usize = shape.iter().product();
        let x = rand32(&mut r, len, -5.0, 5.0);
        let got = global_avg_pool_forward(&t32(&shape, &x)).unwrap();
        gap = gap.max(max_abs_diff(&as64(&got), &gap_oracle(shape, &x)));

        let n = r.random_range(1..=4);
        let k = 6;
        let logits = rand32(&mut r, n * k, -8.0, 8.0);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let got = softmax_cross_entropy(&t32(&[n, k], &logits), &labels).unwrap();
        let (loss, probs, grad) = softmax_ce_oracle(k, &logits, &labels);
        ce = ce
            .max((got.loss - loss).abs())
            .max(max_abs_diff(&as64(&got.probs), &probs))
            .max(max_abs_diff(&as64(&got.grad_logits), &grad));
    }
    vec![("conv2d", conv), ("maxpool", pool), ("batchnorm", bn), ("global_avg_pool", gap), ("softmax_ce", ce)]
}

/// `L = Σ r·y + ½ Σ y²`, whose output gradient is `r + y`.
fn objective(y: &[f64], r: &[f64]) -> f64 {
    y.iter().zip(r).map(|(a, b)| a * b + 0.5 * a * a).sum()
}

fn grad_of_objective(y: &[f64], r: &[f64]) -> Vec<f64> {
    y.iter().zip(r).map(|(a, b)| a + b).collect()
}

/// Values at least `gap` away from zero.
fn away_from_zero(rng: &mut impl Rng, len: usize, gap: f64) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let m = rng.random_range(gap..1.0);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect()
}

/// Distinct values whose 2×2 windows have a margin of at least `gap`
/// between the largest and second largest entry.
fn separated_windows(rng: &mut impl Rng, shape: [usize; 4], gap: f64) -> Vec<f64> {
    let len: usize = shape.iter().product();
    loop {
        let x = uniform_vec(rng, len, -1.0, 1.0);
        let [_, _, h, w] = shape;
        let ok = (0..len / (h * w)).all(|plane| {
            (0..h / 2).all(|y| {
                (0..w / 2).all(|xx| {
                    let mut v: Vec<f64> = (0..4)
                        .map(|q| x[plane * h * w + (2 * y + q / 2) * w + 2 * xx + q % 2])
                        .collect();
                    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    v[0] - v[1] > gap
                })
            })
        });
        if ok {
            return x;
        }
    }
}

/// Worst relative error between each f64 backward kernel and central
/// differences at `FD_EPS`, over `trials` random instances of extent ≤ 6.
pub fn layer_gradient_checks(trials: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let mut worst = [0.0f64; 7];
    for _ in 0..trials {
        // convolution: Σ y² / 2 as the scalar loss
        let k = [1usize, 3][r.random_range(0..2)];
        let s = ConvShape {
            n: r.random_range(1..=2),
            cin: r.random_range(1..=3),
            h: r.random_range(3..=6),
            w: r.random_range(3..=6),
            cout: r.random_range(1..=3),
            k,
            pad: k / 2,
            stride: 1,
        };
        let xs = [s.n, s.cin, s.h, s.w];
        let ws = [s.cout, s.cin, k, k];
        let x = uniform_vec(&mut r, xs.iter().product(), -1.0, 1.0);
        let wt = uniform_vec(&mut r, ws.iter().product(), -1.0, 1.0);
        let b = uniform_vec(&mut r, s.cout, -1.0, 1.0);
        let run = |x: &[f64], wt: &[f64], b: &[f64]| -> Tensor<f64> {
            let (w64, b64) = (t64(&ws, wt), t64(&[s.cout], b));
            let p = ConvParams { weight: &w64, bias: &b64, stride: 1, padding: s.pad };
            conv2d_forward(&t64(&xs, x), &p).unwrap()
        };
        let half_sq = |y: Tensor<f64>| y.data().iter().map(|v| v * v).sum::<f64>() / 2.0;
        let y = run(&x, &wt, &b);
        let (w64, b64) = (t64(&ws, &wt), t64(&[s.cout], &b));
        let p = ConvParams { weight: &w64, bias: &b64, stride: 1, padding: s.pad };
        let g = conv2d_backward(&t64(&xs, &x), &p, &y).unwrap();
        let nx = numeric_grad(&x, FD_EPS, |v| half_sq(run(v, &wt, &b)));
        let nw = numeric_grad(&wt, FD_EPS, |v| half_sq(run(&x, v, &b)));
        let nb = numeric_grad(&b, FD_EPS, |v| half_sq(run(&x, &wt, v)));
        worst[0] = worst[0]
            .max(max_rel_err(g.grad_x.data(), &nx))
            .max(max_rel_err(g.grad_weight.data(), &nw))
            .max(max_rel_err(g.grad_bias.data(), &nb));

        // relu, inputs bounded away from the kink
        let shape = dims(&mut r);
        let len: usize = shape.iter().product();
        let x = away_from_zero(&mut r, len, 1e-2);
        let rr = uniform_vec(&mut r, len, -1.0, 1.0);
        let y = relu_forward(&t64(&shape, &x));
        let g = relu_backward(&t64(&shape, &x), &t64(&shape, &grad_of_objective(y.data(), &rr))).unwrap();
        let n = numeric_grad(&x, FD_EPS, |v| objective(relu_forward(&t64(&shape, v)).data(), &rr));
        worst[1] = worst[1].max(max_rel_err(g.data(), &n));

        // max pooling away from ties
        let [n0, c0, h0, w0] = dims(&mut r);
        let shape = [n0, c0, 2 * h0.div_ceil(2).min(3), 2 * w0.div_ceil(2).min(3)];
        let len: usize = shape.iter().product();
        let x = separated_windows(&mut r, shape, 1e-2);
        let (y, cache) = maxpool2d_forward(&t64(&shape, &x), 2, 2).unwrap();
        let rr = uniform_vec(&mut r, y.len(), -1.0, 1.0);
        let go = t64(y.shape(), &grad_of_objective(y.data(), &rr));
        let g = maxpool2d_backward(&go, &cache, &shape).unwrap();
        let n = numeric_grad(&x, FD_EPS, |v| {
            objective(maxpool2d_forward(&t64(&shape, v), 2, 2).unwrap().0.data(), &rr)
        });
        worst[2] = worst[2].max(max_rel_err(g.data(), &n));
        assert_eq!(len, g.len());

        // batch normalization through the batch statistics
        let shape = [r.random_range(2..=3), r.random_range(1..=3), r.random_range(1..=4), r.random_range(1..=4)];
        let len: usize = shape.iter().product();
        let c = shape[1];
        let x = uniform_vec(&mut r, len, -2.0, 2.0);
        let gamma = uniform_vec(&mut r, c, 0.5, 1.5);
        let beta = uniform_vec(&mut r, c, -0.5, 0.5);
        let rr = uniform_vec(&mut r, len, -1.0, 1.0);
        let bn_out = |x: &[f64], gamma: &[f64], beta: &[f64]| -> Vec<f64> {
            let mut p = BatchNormParams::<f64>::new(c);
            p.gamma = gamma.to_vec();
            p.beta = beta.to_vec();
            batchnorm_forward(&t64(&shape, x), &mut p, Mode::Train).unwrap().into_data()
        };
        let y = bn_out(&x, &gamma, &beta);
        let mut p = BatchNormParams::<f64>::new(c);
        p.gamma = gamma.clone();
        p.beta = beta.clone();
        let g = batchnorm_backward(&t64(&shape, &x), &p, &t64(&shape, &grad_of_objective(&y, &rr))).unwrap();
        let nx = numeric_grad(&x, FD_EPS, |v| objective(&bn_out(v, &gamma, &beta), &rr));
        let ng = numeric_grad(&gamma, FD_EPS, |v| objective(&bn_out(&x, v, &beta), &rr));
        let nb = numeric_grad(&beta, FD_EPS, |v| objective(&bn_out(&x, &gamma, v), &rr));
        worst[3] = worst[3]
            .max(max_rel_err(g.grad_x.data(), &nx))
            .max(max_rel_err(&g.grad_gamma, &ng))
            .max(max_rel_err(&g.grad_beta, &nb));

        // dropout with its mask held fixed
        let shape = dims(&mut r);
        let len: usize = shape.iter().product();
        let keep_prob = [0.6, 0.8][r.random_range(0..2)];
        let x = uniform_vec(&mut r, len, -1.0, 1.0);
        let rr = uniform_vec(&mut r, len, -1.0, 1.0);
        let (y, mask) = dropout_forward(&t64(&shape, &x), keep_prob, Mode::Train, &mut r).unwrap();
        let g = dropout_backward(&mask, keep_prob, &t64(&shape, &grad_of_objective(y.data(), &rr))).unwrap();
        let apply = |v: &[f64], m: &DropoutMask| -> Vec<f64> {
            v.iter().zip(&m.keep).map(|(&a, &k)| if k { a / keep_prob } else { 0.0 }).collect()
        };
        let n = numeric_grad(&x, FD_EPS, |v| objective(&apply(v, &mask), &rr));
        worst[4] = worst[4].max(max_rel_err(g.data(), &n));

        let shape = dims(&mut r);
        let len: usize = shape.iter().product();
        let x = uniform_vec(&mut r, len, -1.0, 1.0);
        let y = global_avg_pool_forward(&t64(&shape, &x)).unwrap();
        let rr = uniform_vec(&mut r, y.len(), -1.0, 1.0);
        let g = global_avg_pool_backward(&t64(y.shape(), &grad_of_objective(y.data(), &rr)), shape[2], shape[3])
            .unwrap();
        let n = numeric_grad(&x, FD_EPS, |v| {
            objective(global_avg_pool_forward(&t64(&shape, v)).unwrap().data(), &rr)
        });
        worst[5] = worst[5].max(max_rel_err(g.data(), &n));

        let n = r.random_range(1..=4);
        let logits = uniform_vec(&mut r, n * 6, -3.0, 3.0);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..6)).collect();
        let g = softmax_cross_entropy(&t64(&[n, 6], &logits), &labels).unwrap();
        let num = numeric_grad(&logits, FD_EPS, |v| {
            softmax_cross_entropy(&t64(&[n, 6], v), &labels).unwrap().loss
        });
        worst[6] = worst[6].max(max_rel_err(g.grad_logits.data(), &num));
    }
    ["conv2d", "relu", "maxpool", "batchnorm", "dropout", "global_avg_pool", "softmax_ce"]
        .into_iter()
        .zip(worst)
        .collect()
}
