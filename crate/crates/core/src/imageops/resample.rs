//! Plane-level kernels. These work on unclamped real planes so the alignment
//! code can reuse them on feature maps; [`super::ImageBuffer`] clamps afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMode {
    Bilinear,
    Bicubic,
    /// Block mean over an integer downscale factor.
    Area,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Replicate,
    Zero,
}

/// Catmull-Rom style cubic with a = -0.5.
fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Per output index: list of (source index, weight).
fn axis_taps(n_in: usize, n_out: usize, mode: ResizeMode) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    let last = n_in as isize - 1;
    (0..n_out)
        .map(|i| {
            let src = (i as f64 + 0.5) * scale - 0.5;
            match mode {
                ResizeMode::Bilinear => {
                    let s = src.clamp(0.0, last as f64);
                    let i0 = s.floor() as isize;
                    let f = s - i0 as f64;
                    let i1 = (i0 + 1).min(last);
                    vec![(i0 as usize, 1.0 - f), (i1 as usize, f)]
                }
                ResizeMode::Bicubic => {
                    let i0 = src.floor() as isize;
                    let f = src - i0 as f64;
                    (-1..=2)
                        .map(|k| {
                            let idx = (i0 + k).clamp(0, last) as usize;
                            (idx, cubic_weight(f - k as f64))
                        })
                        .collect()
                }
                ResizeMode::Area => unreachable!("area handled separately"),
            }
        })
        .collect()
}

fn area_downscale(plane: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Result<Vec<f64>> {
    if !h.is_multiple_of(out_h) || !w.is_multiple_of(out_w) || h / out_h != w / out_w {
        return Err(Error::Argument(format!(
            "area resize needs one integer factor: {h}x{w} -> {out_h}x{out_w}"
        )));
    }
    let k = h / out_h;
    let norm = (k * k) as f64;
    let mut out = vec![0.0; out_h * out_w];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let mut acc = 0.0;
            for y in oy * k..(oy + 1) * k {
                let row = &plane[y * w + ox * k..y * w + (ox + 1) * k];
                acc += row.iter().sum::<f64>();
            }
            out[oy * out_w + ox] = acc / norm;
        }
    }
    Ok(out)
}

/// Resamples a row-major plane without clamping the values.
pub fn resample_plane(
    plane: &[f64],
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
    mode: ResizeMode,
) -> Result<Vec<f64>> {
    debug_assert_eq!(plane.len(), h * w);
    if mode == ResizeMode::Area {
        return area_downscale(plane, h, w, out_h, out_w);
    }
    let col_taps = axis_taps(w, out_w, mode);
    let row_taps = axis_taps(h, out_h, mode);
    // horizontal pass
    let mut tmp = vec![0.0; h * out_w];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for (x, taps) in col_taps.iter().enumerate() {
            tmp[y * out_w + x] = taps.iter().map(|&(i, wt)| row[i] * wt).sum();
        }
    }
    let mut out = vec![0.0; out_h * out_w];
    for (y, taps) in row_taps.iter().enumerate() {
        let dst = &mut out[y * out_w..(y + 1) * out_w];
        for &(i, wt) in taps {
            let src = &tmp[i * out_w..(i + 1) * out_w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += wt * s;
            }
        }
    }
    Ok(out)
}

/// Bilinear translation of a plane: `out(y, x) = in(y - dy, x - dx)`.
pub fn translate_plane(plane: &[f64], h: usize, w: usize, dy: f64, dx: f64, boundary: Boundary) -> Vec<f64> {
    let fetch = |y: isize, x: isize| -> f64 {
        match boundary {
            Boundary::Replicate => {
                let yy = y.clamp(0, h as isize - 1) as usize;
                let xx = x.clamp(0, w as isize - 1) as usize;
                plane[yy * w + xx]
            }
            Boundary::Zero => {
                if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                    0.0
                } else {
                    plane[y as usize * w + x as usize]
                }
            }
        }
    };
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let sy = y as f64 - dy;
        let y0 = sy.floor();
        let fy = sy - y0;
        let y0 = y0 as isize;
        for x in 0..w {
            let sx = x as f64 - dx;
            let x0 = sx.floor();
            let fx = sx - x0;
            let x0 = x0 as isize;
            let mut v = (1.0 - fy) * (1.0 - fx) * fetch(y0, x0);
            if fx != 0.0 {
                v += (1.0 - fy) * fx * fetch(y0, x0 + 1);
            }
            if fy != 0.0 {
                v += fy * (1.0 - fx) * fetch(y0 + 1, x0);
                if fx != 0.0 {
                    v += fy * fx * fetch(y0 + 1, x0 + 1);
                }
            }
            out[y * w + x] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::ImageBuffer;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gray(h: usize, w: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::new(h, w, 1, (0..h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    /// Direct per-pixel bilinear evaluation, written independently of the
    /// separable tap tables.
    fn reference_bilinear(img: &ImageBuffer, out_h: usize, out_w: usize) -> Vec<f64> {
        let (h, w, _) = img.dims();
        let mut out = Vec::new();
        for oy in 0..out_h {
            for ox in 0..out_w {
                let sy = ((oy as f64 + 0.5) * h as f64 / out_h as f64 - 0.5).max(0.0).min((h - 1) as f64);
                let sx = ((ox as f64 + 0.5) * w as f64 / out_w as f64 - 0.5).max(0.0).min((w - 1) as f64);
                let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                let v = img.get(y0, x0, 0) * (1.0 - fy) * (1.0 - fx)
                    + img.get(y0, x1, 0) * (1.0 - fy) * fx
                    + img.get(y1, x0, 0) * fy * (1.0 - fx)
                    + img.get(y1, x1, 0) * fy * fx;
                out.push(v.clamp(0.0, 1.0));
            }
        }
        out
    }

    fn reference_area_half(data: &[f64], h: usize, w: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for y in 0..h / 2 {
            for x in 0..w / 2 {
                let s = data[2 * y * w + 2 * x]
                    + data[2 * y * w + 2 * x + 1]
                    + data[(2 * y + 1) * w + 2 * x]
                    + data[(2 * y + 1) * w + 2 * x + 1];
                out.push(s / 4.0);
            }
        }
        out
    }

    #[test]
    fn area_of_constant() {
        let img = ImageBuffer::filled(2, 2, 1, 0.42).unwrap();
        let out = img.resize(1, 1, ResizeMode::Area).unwrap();
        assert!((out.get(0, 0, 0) - 0.42).abs() < 1e-15);
    }

    #[test]
    fn area_of_two_rows() {
        let img = ImageBuffer::new(2, 2, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(img.resize(1, 1, ResizeMode::Area).unwrap().data(), &[0.5]);
    }

    #[test]
    fn area_rejects_non_integer_factor() {
        let img = random_gray(6, 6, 0);
        assert!(matches!(img.resize(4, 4, ResizeMode::Area), Err(Error::Argument(_))));
        assert!(matches!(img.resize(3, 2, ResizeMode::Area), Err(Error::Argument(_))));
    }

    #[test]
    fn area_preserves_mean() {
        for seed in 0..20 {
            let img = random_gray(48, 36, seed);
            let out = img.resize(16, 12, ResizeMode::Area).unwrap();
            assert!((img.mean() - out.mean()).abs() <= 1e-9);
        }
    }

    #[test]
    fn bilinear_up_then_area_down_matches_reference() {
        let img = random_gray(64, 64, 7);
        let up = img.resize(128, 128, ResizeMode::Bilinear).unwrap();
        let down = up.resize(64, 64, ResizeMode::Area).unwrap();
        let dev_impl = down
            .data()
            .iter()
            .zip(img.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);

        let ref_up = reference_bilinear(&img, 128, 128);
        let ref_down = reference_area_half(&ref_up, 128, 128);
        let dev_ref = ref_down
            .iter()
            .zip(img.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!((dev_impl - dev_ref).abs() <= 1e-6, "{dev_impl} vs {dev_ref}");
        for (a, b) in up.data().iter().zip(&ref_up) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn bicubic_kernel_is_partition_of_unity() {
        for i in 0..=10 {
            let f = i as f64 / 10.0;
            let s: f64 = (-1..=2).map(|k| cubic_weight(f - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(cubic_weight(0.0), 1.0);
        assert_eq!(cubic_weight(1.0), 0.0);
        assert_eq!(cubic_weight(2.0), 0.0);
    }

    #[test]
    fn bicubic_preserves_constants() {
        let img = ImageBuffer::filled(9, 7, 3, 0.3).unwrap();
        let out = img.resize(18, 14, ResizeMode::Bicubic).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn translate_identity() {
        let img = random_gray(9, 9, 3);
        assert_eq!(img.translate(0.0, 0.0, Boundary::Zero).unwrap(), img);
        assert_eq!(img.translate(0.0, 0.0, Boundary::Replicate).unwrap(), img);
    }

    #[test]
    fn translate_integer_row_shift_with_zero_boundary() {
        let img = ImageBuffer::from_fn(3, 3, 1, |y, x, _| (1 + y * 3 + x) as f64 / 10.0).unwrap();
        let out = img.translate(1.0, 0.0, Boundary::Zero).unwrap();
        for x in 0..3 {
            assert_eq!(out.get(0, x, 0), 0.0);
            assert_eq!(out.get(1, x, 0), img.get(0, x, 0));
            assert_eq!(out.get(2, x, 0), img.get(1, x, 0));
        }
    }

    #[test]
    fn translate_half_pixel_on_step_edge() {
        let img = ImageBuffer::from_fn(8, 4, 1, |y, _, _| if y >= 4 { 1.0 } else { 0.0 }).unwrap();
        let out = img.translate(0.5, 0.0, Boundary::Replicate).unwrap();
        for x in 0..4 {
            assert!((out.get(4, x, 0) - 0.5).abs() < 1e-15);
            assert_eq!(out.get(3, x, 0), 0.0);
            assert_eq!(out.get(5, x, 0), 1.0);
        }
    }

    #[test]
    fn translate_integer_inverse_away_from_border() {
        let img = random_gray(20, 20, 11);
        for (a, b) in [(2.0, 0.0), (-3.0, 1.0), (0.0, -4.0)] {
            let back = img
                .translate(a, b, Boundary::Zero)
                .unwrap()
                .translate(-a, -b, Boundary::Zero)
                .unwrap();
            let (ma, mb) = (f64::abs(a) as usize, f64::abs(b) as usize);
            for y in ma..20 - ma {
                for x in mb..20 - mb {
                    assert!((back.get(y, x, 0) - img.get(y, x, 0)).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn translate_fractional_inverse_on_smooth_image() {
        let img = ImageBuffer::from_fn(32, 32, 1, |y, x, _| {
            0.5 + 0.4 * ((y as f64 / 6.0).sin() * (x as f64 / 7.0).cos())
        })
        .unwrap();
        let back = img
            .translate(1.5, -0.7, Boundary::Replicate)
            .unwrap()
            .translate(-1.5, 0.7, Boundary::Replicate)
            .unwrap();
        for y in 3..29 {
            for x in 3..29 {
                assert!((back.get(y, x, 0) - img.get(y, x, 0)).abs() <= 0.1);
            }
        }
    }
}
