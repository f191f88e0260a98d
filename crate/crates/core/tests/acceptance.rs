//! Acceptance suite: one PASS/FAIL line per criterion with its wall time
//! against the budget. Run with
//! `cargo test --release -p rootsr-core --test acceptance [-- <ids>]`,
//! where `<ids>` optionally restricts the run (e.g. `1 3 9`).

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use rootsr_core::align::{estimate_vertical_subpixel_shift, warp_features, warp_features_backward, Plane, ShiftEstimate};
use rootsr_core::burst::{
    crop_truth, persist_dataset, random_odd_offsets, root_centred_window, synthesize_burst, BurstSample, DatasetEntry,
    Split, MANIFEST_FILE,
};
use rootsr_core::imageops::{ImageBuffer, ResizeMode};
use rootsr_core::metrics::{aggd_fit, ggd_fit, mse, psnr, ssim};
use rootsr_core::network::layers::{conv_backward, conv_forward, gelu, gelu_grad, pixel_shuffle, pixel_unshuffle, ConvShape};
use rootsr_core::network::{
    loss_and_grad, loss_value, train, LossKind, Network, NetworkConfig, ShiftSource, TensorMap, TrainHyper, TrainItem,
    Trainer,
};
use rootsr_core::synthgen::{generate_scene, SceneParams};
use rootsr_core::traits::{analyze, hair_length, label_instances, union_masks, DEFAULT_MIN_AREA};
use rootsr_core::Exec;

type Outcome = Result<String, String>;

struct Criterion {
    id: &'static str,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rgb(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ImageBuffer {
    ImageBuffer::new(h, w, 3, (0..h * w * 3).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn burst_from_scene(scene_seed: u64, offset_seed: u64, p: &SceneParams, window: usize, margin: usize) -> BurstSample {
    let s = generate_scene(&p.with_seed(scene_seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(offset_seed);
    let offs = random_odd_offsets(&mut rng, 3, &[1, 3, 5]).unwrap();
    let win = root_centred_window(&s, window, window, margin).unwrap();
    synthesize_burst(&s.image, win, &offs).unwrap()
}

// 1 ------------------------------------------------------------------------

fn subpixel_exactness() -> Outcome {
    let p = SceneParams {
        height: 96,
        width: 64,
        ..SceneParams::default()
    };
    let scene = generate_scene(&p.with_seed(1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut checked, mut bad) = (0, 0);
    for _ in 0..1000 {
        let n = [3, 5, 7][rng.random_range(0..3)];
        let offs = random_odd_offsets(&mut rng, n, &[1, 3, 5, 7, 9, 11, 13, 15]).unwrap();
        let win = root_centred_window(&scene, 32, 32, 15).unwrap();
        let b = synthesize_burst(&scene.image, win, &offs).unwrap();
        let shifts = b.known_shifts().unwrap();
        for (i, s) in shifts.iter().enumerate().filter(|(i, _)| *i != b.reference_index()) {
            checked += 1;
            if s.abs().fract() != 0.5 || *s != offs[i] as f64 / 2.0 {
                bad += 1;
            }
        }
    }
    ensure(bad == 0, format!("{checked} non-reference shifts, {bad} without fractional part 0.5"))
}

// 2 ------------------------------------------------------------------------

fn shift_recovery() -> Outcome {
    let p = SceneParams::default();
    let errors: Vec<f64> = (0..200u64)
        .flat_map(|i| {
            let b = burst_from_scene(10_000 + i, 20_000 + i, &p, 128, 6);
            let r = b.reference_index();
            let reference = Plane::from_image(b.reference());
            let truth = b.known_shifts().unwrap().to_vec();
            b.frames
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != r)
                .map(|(k, f)| {
                    let est = estimate_vertical_subpixel_shift(&reference, &Plane::from_image(f))
                        .map_or(f64::INFINITY, |e| e.dy);
                    (est - truth[k]).abs()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let n = errors.len();
    let within_q = errors.iter().filter(|e| **e <= 0.25).count();
    let within_h = errors.iter().filter(|e| **e <= 0.5).count();
    let max = errors.iter().cloned().fold(0.0, f64::max);
    ensure(
        within_q as f64 >= 0.95 * n as f64 && within_h == n,
        format!(
            "{n} frames: {:.1}% within 0.25, {:.1}% within 0.5, max error {max:.3}",
            100.0 * within_q as f64 / n as f64,
            100.0 * within_h as f64 / n as f64
        ),
    )
}

// 3 ------------------------------------------------------------------------

fn luma255(img: &ImageBuffer, y: usize, x: usize) -> f64 {
    let v = 0.299 * img.get(y, x, 0) + 0.587 * img.get(y, x, 1) + 0.114 * img.get(y, x, 2);
    255.0 * v.clamp(0.0, 1.0)
}

fn oracle_mse(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let (h, w, c) = a.dims();
    let mut s = 0.0;
    for y in 0..h {
        for x in 0..w {
            for k in 0..c {
                s += (255.0 * a.get(y, x, k) - 255.0 * b.get(y, x, k)).powi(2);
            }
        }
    }
    s / (h * w * c) as f64
}

/// Literal per-window SSIM with a non-separable 11x11 Gaussian (sigma 1.5).
#[allow(clippy::needless_range_loop)]
fn oracle_ssim(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let (h, w, _) = a.dims();
    let mut g = [[0.0; 11]; 11];
    let mut gs = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            gs += *v;
        }
    }
    let (c1, c2) = ((0.01 * 255.0f64).powi(2), (0.03 * 255.0f64).powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let wt = g[i][j] / gs;
                    mx += wt * luma255(a, y0 + i, x0 + j);
                    my += wt * luma255(b, y0 + i, x0 + j);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let wt = g[i][j] / gs;
                    let (dx, dy) = (luma255(a, y0 + i, x0 + j) - mx, luma255(b, y0 + i, x0 + j) - my);
                    vx += wt * dx * dx;
                    vy += wt * dy * dy;
                    cxy += wt * dx * dy;
                }
            }
            total += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut e_mse, mut e_ssim, mut e_psnr) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..50 {
        let a = rgb(&mut rng, 64, 64);
        // Half the pairs are independent, half are noisy copies.
        let b = if i % 2 == 0 {
            rgb(&mut rng, 64, 64)
        } else {
            let noise = Normal::new(0.0, 0.05).unwrap();
            let d: Vec<f64> = a.data().iter().map(|v| v + noise.sample(&mut rng)).collect();
            ImageBuffer::from_clamped(64, 64, 3, d).unwrap()
        };
        let om = oracle_mse(&a, &b);
        e_mse = e_mse.max((mse(&a, &b).unwrap() - om).abs());
        e_ssim = e_ssim.max((ssim(&a, &b).unwrap() - oracle_ssim(&a, &b)).abs());
        e_psnr = e_psnr.max((psnr(&a, &b).unwrap() - 10.0 * (255.0 * 255.0 / om).log10()).abs());
    }
    ensure(
        e_mse <= 1e-6 && e_ssim <= 1e-6 && e_psnr <= 1e-9,
        format!("max |dMSE| {e_mse:.2e}, |dSSIM| {e_ssim:.2e}, |dPSNR| {e_psnr:.2e} dB over 50 pairs"),
    )
}

// 4 ------------------------------------------------------------------------

/// `|x| = s * G^(1/alpha)` with `G ~ Gamma(1/alpha, 1)` has density
/// proportional to `exp(-(|x|/s)^alpha)`.
fn ggd_magnitude(rng: &mut ChaCha8Rng, alpha: f64, scale: f64) -> f64 {
    let g: f64 = Gamma::new(1.0 / alpha, 1.0).unwrap().sample(rng);
    scale * g.powf(1.0 / alpha)
}

fn ggd_estimators() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 100_000;
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for alpha in [1.0, 2.0, 4.0] {
        let sym: Vec<f64> = (0..n)
            .map(|_| {
                let m = ggd_magnitude(&mut rng, alpha, 1.0);
                if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            })
            .collect();
        // Each side carries mass proportional to its scale.
        let (sl, sr) = (0.6, 1.4);
        let asym: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < sl / (sl + sr) {
                    -ggd_magnitude(&mut rng, alpha, sl)
                } else {
                    ggd_magnitude(&mut rng, alpha, sr)
                }
            })
            .collect();
        let g = ggd_fit(&sym).unwrap().alpha;
        let a = aggd_fit(&asym).unwrap().alpha;
        worst = worst.max(((g - alpha) / alpha).abs()).max(((a - alpha) / alpha).abs());
        parts.push(format!("alpha {alpha}: ggd {g:.3} aggd {a:.3}"));
    }
    ensure(worst <= 0.10, format!("{}; worst relative error {:.1}%", parts.join(", "), 100.0 * worst))
}

// 5 ------------------------------------------------------------------------

const FD_EPS: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Max relative error between `analytic` and central differences of `f`
/// over every coordinate of `x`.
fn fd_check(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    let mut z = x.to_vec();
    (0..x.len())
        .map(|i| {
            let o = z[i];
            z[i] = o + FD_EPS;
            let up = f(&z);
            z[i] = o - FD_EPS;
            let down = f(&z);
            z[i] = o;
            rel_err(analytic[i], (up - down) / (2.0 * FD_EPS))
        })
        .fold(0.0, f64::max)
}

fn randv(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn conv_errors(rng: &mut ChaCha8Rng, shape: ConvShape, h: usize, w: usize) -> f64 {
    let x = randv(rng, shape.in_c * h * w);
    let wt = randv(rng, shape.weight_len());
    let b = randv(rng, shape.out_c);
    let r = randv(rng, shape.out_c * h * w);
    let (mut gw, mut gb) = (vec![0.0; wt.len()], vec![0.0; b.len()]);
    let gx = conv_backward(shape, &x, h, w, &wt, &r, &mut gw, &mut gb, true).unwrap();
    let ex = fd_check(|z| dot(&r, &conv_forward(shape, z, h, w, &wt, &b)), &x, &gx);
    let ew = fd_check(|z| dot(&r, &conv_forward(shape, &x, h, w, z, &b)), &wt, &gw);
    let eb = fd_check(|z| dot(&r, &conv_forward(shape, &x, h, w, &wt, z)), &b, &gb);
    ex.max(ew).max(eb)
}

fn tensor_objective<'a>(
    r: &'a [f64],
    (c, h, w): (usize, usize, usize),
    f: impl Fn(&TensorMap<f64>) -> TensorMap<f64> + 'a,
) -> impl Fn(&[f64]) -> f64 + 'a {
    move |z: &[f64]| dot(r, f(&TensorMap::new(c, h, w, z.to_vec()).unwrap()).data())
}

fn model_error(rng: &mut ChaCha8Rng, cfg: NetworkConfig) -> f64 {
    let (h, w) = (8, 8);
    let net = Network::<f64>::new(cfg.clone()).unwrap();
    let frames: Vec<TensorMap<f64>> = (0..cfg.n_frames)
        .map(|_| TensorMap::new(3, h, w, (0..3 * h * w).map(|_| rng.random::<f64>()).collect()).unwrap())
        .collect();
    let shifts = vec![
        ShiftEstimate { dy: -0.625, dx: 0.0, peak: 1.0 },
        ShiftEstimate::ZERO,
        ShiftEstimate { dy: 1.375, dx: 0.0, peak: 1.0 },
    ];
    let source = ShiftSource::Fixed(shifts);
    let trace = net.forward_trace(&frames, &source).unwrap();
    // Targets sit away from the outputs so L1 stays differentiable under the probe.
    let target_data: Vec<f64> = trace
        .output
        .data()
        .iter()
        .map(|v| v + if rng.random::<bool>() { 1.0 } else { -1.0 } * rng.random_range(0.2..0.6))
        .collect();
    let (c, oh, ow) = trace.output.dims();
    let target = TensorMap::new(c, oh, ow, target_data).unwrap();
    let (_, g_out) = loss_and_grad(LossKind::L1, &trace.output, &target).unwrap();
    let analytic = net.backward(&trace, &g_out);
    let f = |p: &[f64]| {
        let probe = Network::from_params(cfg.clone(), p.to_vec()).unwrap();
        loss_value(LossKind::L1, &probe.forward_trace(&frames, &source).unwrap().output, &target).unwrap()
    };
    fd_check(f, net.params(), &analytic)
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rows = Vec::new();
    rows.push(("conv3x3", conv_errors(&mut rng, ConvShape { in_c: 4, out_c: 4, kernel: 3 }, 8, 8)));
    rows.push(("conv1x1", conv_errors(&mut rng, ConvShape { in_c: 4, out_c: 3, kernel: 1 }, 8, 8)));

    let x = randv(&mut rng, 4 * 8 * 8).iter().map(|v| 3.0 * v).collect::<Vec<_>>();
    let r = randv(&mut rng, x.len());
    let g: Vec<f64> = x.iter().zip(&r).map(|(xv, rv)| rv * gelu_grad(*xv)).collect();
    rows.push(("gelu", fd_check(|z| z.iter().zip(&r).map(|(zv, rv)| rv * gelu(*zv)).sum(), &x, &g)));

    let x = randv(&mut rng, 4 * 4 * 4);
    let r = randv(&mut rng, 8 * 8);
    let g = pixel_unshuffle(&TensorMap::new(1, 8, 8, r.clone()).unwrap(), 2).into_data();
    rows.push(("pixel_shuffle", fd_check(tensor_objective(&r, (4, 4, 4), |t| pixel_shuffle(t, 2)), &x, &g)));

    for dy in [0.75, -1.5, 2.25] {
        let shift = ShiftEstimate { dy, dx: 0.0, peak: 1.0 };
        let x = randv(&mut rng, 4 * 8 * 8);
        let r = randv(&mut rng, x.len());
        let g = warp_features_backward(&TensorMap::new(4, 8, 8, r.clone()).unwrap(), &shift).into_data();
        let e = fd_check(tensor_objective(&r, (4, 8, 8), |t| warp_features(t, &shift).unwrap()), &x, &g);
        rows.push(("warp", e));
    }

    let small = NetworkConfig {
        embed_dim: 4,
        rdg_count: 1,
        blocks_per_group: 2,
        growth: 2,
        seed: 5,
        ..NetworkConfig::default()
    };
    rows.push(("model+L1", model_error(&mut rng, small.clone())));
    rows.push(("model+L1 (skip)", model_error(&mut rng, NetworkConfig { base_skip: true, ..small.clone() })));
    rows.push((
        "model+L1 (no align)",
        model_error(&mut rng, NetworkConfig { align_enabled: false, ..small }),
    ));

    let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let mut merged: Vec<(&str, f64)> = Vec::new();
    for (name, e) in rows {
        match merged.iter_mut().find(|m| m.0 == name) {
            Some(m) => m.1 = m.1.max(e),
            None => merged.push((name, e)),
        }
    }
    let detail = merged.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    ensure(worst <= 1e-3, format!("max relative error: {detail}"))
}

// 6 + 7 --------------------------------------------------------------------

const ABLATION_SEEDS: [u64; 3] = [0, 1, 2];
const ABLATION_TRAIN: usize = 500;
const ABLATION_VAL: usize = 100;

struct Ablation {
    /// (seed, aligned val MSE, unaligned val MSE, aligned val PSNR)
    runs: Vec<(u64, f64, f64, f64)>,
    bilinear_psnr: f64,
    bicubic_psnr: f64,
}

fn val_metrics(net: &Network<f32>, val: &[BurstSample]) -> (f64, f64) {
    let (mut m, mut p) = (0.0, 0.0);
    for s in val {
        let (img, _) = net.enhance(&s.frames).unwrap();
        let hr = s.hr_target.as_ref().unwrap();
        m += mse(&img, hr).unwrap();
        p += psnr(&img, hr).unwrap();
    }
    (m / val.len() as f64, p / val.len() as f64)
}

fn run_ablation() -> Ablation {
    let p = SceneParams {
        height: 128,
        width: 128,
        ..SceneParams::default()
    };
    let n = ABLATION_TRAIN + ABLATION_VAL;
    let samples: Vec<BurstSample> = (0..n as u64).map(|i| burst_from_scene(i, 1000 + i, &p, 64, 6)).collect();
    let items: Vec<TrainItem> = samples.iter().map(|s| TrainItem::from_sample(s).unwrap()).collect();
    let (tr, va) = items.split_at(ABLATION_TRAIN);
    let val = &samples[ABLATION_TRAIN..];
    let (mut bl, mut bc) = (0.0, 0.0);
    for s in val {
        let hr = s.hr_target.as_ref().unwrap();
        let (h, w, _) = hr.dims();
        bl += psnr(&s.reference().resize(h, w, ResizeMode::Bilinear).unwrap(), hr).unwrap();
        bc += psnr(&s.reference().resize(h, w, ResizeMode::Bicubic).unwrap(), hr).unwrap();
    }
    let hyper = TrainHyper::default();
    let runs = ABLATION_SEEDS
        .iter()
        .map(|&seed| {
            let mut res = [(0.0, 0.0); 2];
            for (slot, align) in [(0, true), (1, false)] {
                let cfg = NetworkConfig {
                    align_enabled: align,
                    seed,
                    ..NetworkConfig::default()
                };
                let out = train(tr, va, &cfg, &hyper, Exec::default()).unwrap();
                res[slot] = val_metrics(&out.checkpoint.network().unwrap(), val);
            }
            (seed, res[0].0, res[1].0, res[0].1)
        })
        .collect();
    Ablation {
        runs,
        bilinear_psnr: bl / val.len() as f64,
        bicubic_psnr: bc / val.len() as f64,
    }
}

thread_local! {
    static ABLATION: std::cell::OnceCell<Ablation> = const { std::cell::OnceCell::new() };
}

fn with_ablation<R>(f: impl FnOnce(&Ablation) -> R) -> R {
    ABLATION.with(|c| f(c.get_or_init(run_ablation)))
}

fn ablation_direction() -> Outcome {
    with_ablation(|a| {
        let wins = a.runs.iter().filter(|r| r.1 <= 0.97 * r.2).count();
        let detail = a
            .runs
            .iter()
            .map(|(s, al, no, _)| format!("seed {s}: {al:.6} vs {no:.6} ({:+.1}%)", 100.0 * (al - no) / no))
            .collect::<Vec<_>>()
            .join(", ");
        ensure(wins >= 2, format!("{wins}/3 seeds >= 3% lower MSE with alignment; {detail}"))
    })
}

fn baseline_ordering() -> Outcome {
    with_ablation(|a| {
        let worst_model = a.runs.iter().map(|r| r.3).fold(f64::INFINITY, f64::min);
        let models = a.runs.iter().map(|r| format!("{:.3}", r.3)).collect::<Vec<_>>().join("/");
        ensure(
            worst_model > a.bicubic_psnr && a.bicubic_psnr > a.bilinear_psnr,
            format!(
                "model {models} dB > bicubic {:.3} dB > bilinear {:.3} dB",
                a.bicubic_psnr, a.bilinear_psnr
            ),
        )
    })
}

// 8 ------------------------------------------------------------------------

fn trait_round_trip() -> Outcome {
    let p = SceneParams::default();
    let (mut count_bad, mut area_bad, mut len_bad, mut hairs) = (0, 0, 0, 0);
    let mut worst = (0.0f64, 0.0f64);
    for seed in 0..100 {
        let s = generate_scene(&p.with_seed(seed)).unwrap();
        let (h, w) = (p.height, p.width);
        let union = union_masks(&s.hair_masks, h, w).unwrap();
        let report = analyze(&s.root_mask, &union, 0.01, DEFAULT_MIN_AREA).unwrap();
        if report.hair_count != s.truth.hair_count {
            count_bad += 1;
        }
        // Pair each labelled component with the generator hair covering it.
        let free = ImageBuffer::from_fn(h, w, 1, |y, x, _| {
            if s.root_mask.get(y, x, 0) > 0.5 {
                0.0
            } else {
                union.get(y, x, 0)
            }
        })
        .unwrap();
        let comps = label_instances(&free, DEFAULT_MIN_AREA).unwrap();
        let mut matched = vec![false; s.truth.hair_count];
        for c in &comps {
            let owners: Vec<usize> = (0..s.hair_masks.len())
                .filter(|&k| c.pixels.iter().any(|&(y, x)| s.hair_masks[k].get(y, x, 0) > 0.5))
                .collect();
            let [k] = owners[..] else {
                area_bad += 1;
                continue;
            };
            hairs += 1;
            matched[k] = true;
            if c.area() as f64 != s.truth.hair_areas_px[k] {
                area_bad += 1;
            }
            let (truth, got) = (s.truth.hair_lengths_px[k], hair_length(c));
            let e = (got - truth).abs() / truth;
            if e > 0.10 {
                len_bad += 1;
            }
            if e > worst.0 {
                worst = (e, truth);
            }
        }
        area_bad += matched.iter().filter(|m| !**m).count();
    }
    ensure(
        count_bad == 0 && area_bad == 0 && len_bad == 0,
        format!(
            "{hairs} hairs: {count_bad} scenes with wrong count, {area_bad} area mismatches, {len_bad} lengths off by > 10% (worst {:.1}% on a {:.2} px hair)",
            100.0 * worst.0,
            worst.1
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn overfit_one() -> Outcome {
    let p = SceneParams {
        height: 128,
        width: 128,
        ..SceneParams::default()
    };
    let item = TrainItem::from_sample(&burst_from_scene(9, 9, &p, 64, 6)).unwrap();
    let mut trainer = Trainer::new(NetworkConfig::default(), TrainHyper::default(), Exec::default()).unwrap();
    let initial = trainer.evaluate(std::slice::from_ref(&item)).unwrap();
    let mut best = (f64::INFINITY, 0);
    for step in 1..=50 {
        trainer.step(&[&item], 1).unwrap();
        let l = trainer.evaluate(std::slice::from_ref(&item)).unwrap();
        if l < best.0 {
            best = (l, step);
        }
        if l < 0.25 * initial {
            break;
        }
    }
    ensure(
        best.0 < 0.25 * initial,
        format!(
            "L1 {initial:.4} -> {:.4} ({:.1}%) at step {}",
            best.0,
            100.0 * best.0 / initial,
            best.1
        ),
    )
}

// 10 -----------------------------------------------------------------------

fn build_dataset(dir: &Path, seed: u64) -> Vec<TrainItem> {
    let p = SceneParams {
        height: 96,
        width: 96,
        ..SceneParams::default()
    };
    let mut offs_rng = ChaCha8Rng::seed_from_u64(seed);
    let entries: Vec<DatasetEntry> = (0..12u64)
        .map(|i| {
            let s = generate_scene(&p.with_seed(seed * 1000 + i)).unwrap();
            let offs = random_odd_offsets(&mut offs_rng, 3, &[1, 3, 5]).unwrap();
            let win = root_centred_window(&s, 32, 32, 6).unwrap();
            DatasetEntry {
                sample_id: format!("s{i:03}"),
                split: if i < 10 { Split::Train } else { Split::Val },
                sample: synthesize_burst(&s.image, win, &offs).unwrap(),
                truth: Some(crop_truth(&s, win).unwrap()),
            }
        })
        .collect();
    persist_dataset(&entries, dir).unwrap();
    entries.iter().map(|e| TrainItem::from_sample(&e.sample).unwrap()).collect()
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn loss_trace(items: &[TrainItem], exec: Exec) -> Vec<u64> {
    let (tr, va) = items.split_at(10);
    let hyper = TrainHyper {
        epochs: 2,
        batch_size: 4,
        ..TrainHyper::default()
    };
    let cfg = NetworkConfig {
        seed: 10,
        ..NetworkConfig::default()
    };
    let out = train(tr, va, &cfg, &hyper, exec).unwrap();
    out.log
        .iter()
        .flat_map(|r| [r.train_loss.to_bits(), r.val_loss.map_or(u64::MAX, f64::to_bits)])
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let items_a = build_dataset(&a, 10);
    let items_b = build_dataset(&b, 10);
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    let manifest_same = fs::read(a.join(MANIFEST_FILE)).unwrap() == fs::read(b.join(MANIFEST_FILE)).unwrap();
    let tree_same = ta == tb;
    let trace_a = loss_trace(&items_a, Exec::default());
    let trace_b = loss_trace(&items_b, Exec::default());
    let trace_seq = loss_trace(&items_a, Exec::Sequential);
    ensure(
        manifest_same && tree_same && trace_a == trace_b && trace_a == trace_seq,
        format!(
            "manifest identical: {manifest_same}, {} dataset files identical: {tree_same}, {} loss records identical: {}, sequential == default: {}",
            ta.len(),
            trace_a.len() / 2,
            trace_a == trace_b,
            trace_a == trace_seq
        ),
    )
}

// --------------------------------------------------------------------------

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: "1", name: "sub-pixel construction exactness", budget: Duration::from_secs(5), run: subpixel_exactness },
        Criterion { id: "2", name: "shift recovery", budget: Duration::from_secs(60), run: shift_recovery },
        Criterion { id: "3", name: "metric oracle equivalence", budget: Duration::from_secs(30), run: metric_oracles },
        Criterion { id: "4", name: "GGD/AGGD alpha estimation", budget: Duration::from_secs(30), run: ggd_estimators },
        Criterion { id: "5", name: "finite-difference gradients", budget: Duration::from_secs(120), run: gradient_checks },
        Criterion { id: "6", name: "alignment ablation direction", budget: Duration::from_secs(1800), run: ablation_direction },
        Criterion { id: "7", name: "model > bicubic > bilinear", budget: Duration::from_secs(1800), run: baseline_ordering },
        Criterion { id: "8", name: "generator/analyzer round trip", budget: Duration::from_secs(60), run: trait_round_trip },
        Criterion { id: "9", name: "overfit one burst", budget: Duration::from_secs(60), run: overfit_one },
        Criterion { id: "10", name: "determinism", budget: Duration::from_secs(300), run: determinism },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ablation_time = Duration::ZERO;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.iter().any(|f| f == c.id)) {
        let t = Instant::now();
        let outcome = (c.run)();
        let mut elapsed = t.elapsed();
        // 7 is read from the run of 6; both are charged that run's time.
        if c.id == "6" {
            ablation_time = elapsed;
        } else if c.id == "7" {
            elapsed += ablation_time;
        }
        let in_budget = elapsed <= c.budget;
        let (tag, detail) = match (&outcome, in_budget) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over time budget")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!(
            "[{tag}] {:>2} {:<34} {:>8.1}s / {:>5}s  {detail}",
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
