use super::geometry::{HairRecord, Point};

/// Sub-samples per axis used to estimate hair pixel coverage.
const SUPERSAMPLE: usize = 4;
/// Width of the Gaussian edge falloff on the root body.
pub(crate) const ROOT_EDGE_SIGMA: f64 = 0.6;

fn seg_distance(p: Point, a: Point, b: Point) -> f64 {
    let (vy, vx) = (b.y - a.y, b.x - a.x);
    let len2 = vy * vy + vx * vx;
    let t = if len2 > 0.0 {
        (((p.y - a.y) * vy + (p.x - a.x) * vx) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dy, dx) = (p.y - a.y - t * vy, p.x - a.x - t * vx);
    (dy * dy + dx * dx).sqrt()
}

/// Distance from every pixel centre to the centreline, computed only inside
/// a band of `reach` pixels around it (infinity elsewhere).
pub(crate) fn centerline_distance(centerline: &[Point], h: usize, w: usize, reach: f64) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; h * w];
    for seg in centerline.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let y0 = (a.y.min(b.y) - reach).floor().max(0.0) as usize;
        let y1 = ((a.y.max(b.y) + reach).ceil() as usize).min(h - 1);
        let x0 = (a.x.min(b.x) - reach).floor().max(0.0) as usize;
        let x1 = ((a.x.max(b.x) + reach).ceil() as usize).min(w - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = seg_distance(Point { y: y as f64, x: x as f64 }, a, b);
                let slot = &mut dist[y * w + x];
                if d < *slot {
                    *slot = d;
                }
            }
        }
    }
    dist
}

/// Root opacity: a Gaussian-integrated edge that crosses 0.5 exactly at the
/// nominal radius.
pub(crate) fn root_alpha(d: f64, radius: f64) -> f64 {
    0.5 * libm::erfc((d - radius) / (ROOT_EDGE_SIGMA * std::f64::consts::SQRT_2))
}

/// Flat-ended stroke coverage of each pixel in the hair's bounding box.
/// Returns `(row, col, coverage)` for pixels with non-zero coverage; `None`
/// if any part of the stroke leaves the image.
pub(crate) fn hair_coverage(hair: &HairRecord, h: usize, w: usize) -> Option<Vec<(usize, usize, f64)>> {
    let d = hair.direction();
    let half = hair.width_px / 2.0;
    let a = hair.anchor;
    let tip = hair.tip();
    let pad = half + 1.0;
    let (ymin, ymax) = (a.y.min(tip.y) - pad, a.y.max(tip.y) + pad);
    let (xmin, xmax) = (a.x.min(tip.x) - pad, a.x.max(tip.x) + pad);
    if ymin < 0.0 || xmin < 0.0 || ymax > (h - 1) as f64 || xmax > (w - 1) as f64 {
        return None;
    }
    let step = 1.0 / SUPERSAMPLE as f64;
    let mut out = Vec::new();
    for y in ymin.floor() as usize..=ymax.ceil() as usize {
        for x in xmin.floor() as usize..=xmax.ceil() as usize {
            let mut hits = 0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let py = y as f64 - 0.5 + (sy as f64 + 0.5) * step;
                    let px = x as f64 - 0.5 + (sx as f64 + 0.5) * step;
                    let (ry, rx) = (py - a.y, px - a.x);
                    let along = ry * d.y + rx * d.x;
                    let across = (rx * d.y - ry * d.x).abs();
                    if (0.0..=hair.length_px).contains(&along) && across <= half {
                        hits += 1;
                    }
                }
            }
            if hits > 0 {
                out.push((y, x, hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64));
            }
        }
    }
    Some(out)
}
