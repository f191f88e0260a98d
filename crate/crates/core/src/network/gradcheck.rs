//! Central finite-difference checks of the hand-written backward passes,
//! evaluated in `f64`.
//!
//! Layer checks use the objective `sum(r * layer(z))` for a fixed random
//! `r`, so the analytic gradient is the layer's backward pass applied to `r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::neumaier;
use super::layers::{conv_backward, conv_forward, gelu, gelu_grad, pixel_shuffle, pixel_unshuffle, ConvShape};
use super::{loss_and_grad, loss_value, LossKind, Network, NetworkConfig, ShiftSource, TensorMap};
use crate::align::{warp_features, warp_features_backward, ShiftEstimate};

pub const DEFAULT_EPS: f64 = 1e-4;
/// Floor of the relative-error denominator for near-zero gradients.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Largest relative error between `analytic` and central differences of
/// `f` at `x`, over the given coordinates.
pub fn compare(f: &dyn Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64], coords: &[usize], eps: f64) -> f64 {
    let mut z = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = z[i];
            z[i] = orig + eps;
            let up = f(&z);
            z[i] = orig - eps;
            let down = f(&z);
            z[i] = orig;
            relative_error(analytic[i], (up - down) / (2.0 * eps))
        })
        .fold(0.0, f64::max)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Compensated dot product; products of the perturbed coordinate stay
/// resolvable next to a large total.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    neumaier(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Projection weights bounded away from zero.
fn projection(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(0.5..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect()
}

/// Convolution gradient w.r.t. input, weight and bias.
pub fn check_conv(shape: ConvShape, h: usize, w: usize, seed: u64, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, nw, nb) = (shape.in_c * h * w, shape.weight_len(), shape.out_c);
    let z = rand_vec(&mut rng, nx + nw + nb, -1.0, 1.0);
    let r = rand_vec(&mut rng, shape.out_c * h * w, -1.0, 1.0);
    let f = |z: &[f64]| dot(&r, &conv_forward(shape, &z[..nx], h, w, &z[nx..nx + nw], &z[nx + nw..]));
    let mut gw = vec![0.0; nw];
    let mut gb = vec![0.0; nb];
    let gx = conv_backward(shape, &z[..nx], h, w, &z[nx..nx + nw], &r, &mut gw, &mut gb, true).expect("input grad");
    let analytic: Vec<f64> = gx.into_iter().chain(gw).chain(gb).collect();
    let coords: Vec<usize> = (0..z.len()).collect();
    compare(&f, &z, &analytic, &coords, eps)
}

pub fn check_gelu(n: usize, seed: u64, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rand_vec(&mut rng, n, -3.0, 3.0);
    let r = rand_vec(&mut rng, n, -1.0, 1.0);
    let f = |x: &[f64]| x.iter().zip(&r).map(|(v, ri)| ri * gelu(*v)).sum::<f64>();
    let analytic: Vec<f64> = x.iter().zip(&r).map(|(v, ri)| ri * gelu_grad(*v)).collect();
    compare(&f, &x, &analytic, &(0..n).collect::<Vec<_>>(), eps)
}

/// `channels` must be a multiple of 4.
pub fn check_pixel_shuffle(channels: usize, h: usize, w: usize, seed: u64, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = channels * h * w;
    let x = rand_vec(&mut rng, n, -1.0, 1.0);
    let r = projection(&mut rng, n);
    let r_map = TensorMap::new(channels / 4, 2 * h, 2 * w, r.clone()).expect("dims");
    let f = |x: &[f64]| {
        let t = TensorMap::new(channels, h, w, x.to_vec()).expect("dims");
        dot(&r, pixel_shuffle(&t, 2).data())
    };
    let analytic = pixel_unshuffle(&r_map, 2).into_data();
    compare(&f, &x, &analytic, &(0..n).collect::<Vec<_>>(), eps)
}

/// Feature warp gradient w.r.t. the features (the shift is a constant).
pub fn check_warp(channels: usize, h: usize, w: usize, dy: f64, seed: u64, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = channels * h * w;
    let x = rand_vec(&mut rng, n, -1.0, 1.0);
    let r = TensorMap::new(channels, h, w, rand_vec(&mut rng, n, -1.0, 1.0)).expect("dims");
    let shift = ShiftEstimate { dy, dx: 0.0, peak: 1.0 };
    let f = |x: &[f64]| {
        let t = TensorMap::new(channels, h, w, x.to_vec()).expect("dims");
        dot(r.data(), warp_features(&t, &shift).expect("warp").data())
    };
    let analytic = warp_features_backward(&r, &shift).into_data();
    compare(&f, &x, &analytic, &(0..n).collect::<Vec<_>>(), eps)
}

/// Whole-model check of the L1 loss against a target kept at least 0.2 away
/// from every initial output, with frozen non-zero alignment shifts.
/// `per_tensor` coordinates are sampled evenly from every parameter tensor.
pub fn check_model(cfg: &NetworkConfig, h: usize, w: usize, per_tensor: usize, eps: f64) -> f64 {
    let net = Network::<f64>::new(cfg.clone()).expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let frames: Vec<TensorMap<f64>> = (0..cfg.n_frames)
        .map(|_| TensorMap::new(3, h, w, rand_vec(&mut rng, 3 * h * w, 0.0, 1.0)).expect("dims"))
        .collect();
    let r = cfg.reference_index();
    let shifts: Vec<ShiftEstimate> = (0..cfg.n_frames)
        .map(|i| {
            let dy = if i == r { 0.0 } else { (i as f64 - r as f64) * 0.75 + 0.125 };
            ShiftEstimate { dy, dx: 0.0, peak: 1.0 }
        })
        .collect();
    let source = ShiftSource::Fixed(shifts);
    let trace = net.forward_trace(&frames, &source).expect("forward");
    let offsets: Vec<f64> = (0..trace.output.data().len())
        .map(|_| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * rng.random_range(0.2..0.6)
        })
        .collect();
    let (c, oh, ow) = trace.output.dims();
    let target = TensorMap::new(
        c,
        oh,
        ow,
        trace.output.data().iter().zip(&offsets).map(|(v, d)| v + d).collect(),
    )
    .expect("dims");
    let (_, g_out) = loss_and_grad(LossKind::L1, &trace.output, &target).expect("dims");
    let analytic = net.backward(&trace, &g_out);
    let f = |p: &[f64]| {
        let probe = Network::from_params(cfg.clone(), p.to_vec()).expect("params");
        let t = probe.forward_trace(&frames, &source).expect("forward");
        loss_value(LossKind::L1, &t.output, &target).expect("dims")
    };
    let coords: Vec<usize> = net
        .architecture()
        .entries
        .iter()
        .flat_map(|e| {
            let k = per_tensor.min(e.len);
            (0..k).map(move |j| e.offset + j * e.len / k)
        })
        .collect();
    compare(&f, net.params(), &analytic, &coords, eps)
}
