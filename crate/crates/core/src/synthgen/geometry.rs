use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::SceneParams;

pub const CONTROL_POINTS: usize = 8;
const ANGLE_JITTER_DEG: f64 = 25.0;
const MIN_HAIR_LEN: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub y: f64,
    pub x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HairRecord {
    /// Where the hair leaves the root surface.
    pub anchor: Point,
    /// Growth direction; the unit vector is `(sin a, cos a)` in `(y, x)`.
    pub angle_rad: f64,
    pub length_px: f64,
    pub width_px: f64,
    /// Arc-length position of the anchor along the centreline.
    pub arc_pos: f64,
}

impl HairRecord {
    pub fn direction(&self) -> Point {
        Point {
            y: self.angle_rad.sin(),
            x: self.angle_rad.cos(),
        }
    }

    pub fn tip(&self) -> Point {
        let d = self.direction();
        Point {
            y: self.anchor.y + self.length_px * d.y,
            x: self.anchor.x + self.length_px * d.x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootGeometry {
    /// One point per image row, top to bottom.
    pub centerline: Vec<Point>,
    pub hairs: Vec<HairRecord>,
}

pub fn polyline_length(pts: &[Point]) -> f64 {
    pts.windows(2)
        .map(|s| ((s[1].y - s[0].y).powi(2) + (s[1].x - s[0].x).powi(2)).sqrt())
        .sum()
}

impl RootGeometry {
    pub fn centerline_length(&self) -> f64 {
        polyline_length(&self.centerline)
    }
}

/// Natural cubic spline through `(t[k], v[k])`, evaluated at `at`.
fn natural_spline(t: &[f64], v: &[f64], at: &[f64]) -> Vec<f64> {
    let n = t.len();
    let h: Vec<f64> = (0..n - 1).map(|i| t[i + 1] - t[i]).collect();
    // Thomas algorithm for the interior second derivatives.
    let mut m = vec![0.0; n];
    if n > 2 {
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            rhs[i] = 6.0 * ((v[i + 2] - v[i + 1]) / h[i + 1] - (v[i + 1] - v[i]) / h[i]);
        }
        for i in 1..k {
            let f = h[i] / diag[i - 1];
            diag[i] -= f * h[i];
            rhs[i] -= f * rhs[i - 1];
        }
        m[k] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
        }
    }
    at.iter()
        .map(|&q| {
            let i = (0..n - 1).find(|&i| q <= t[i + 1]).unwrap_or(n - 2);
            let (a, b) = (t[i + 1] - q, q - t[i]);
            m[i] * a.powi(3) / (6.0 * h[i])
                + m[i + 1] * b.powi(3) / (6.0 * h[i])
                + (v[i] / h[i] - m[i] * h[i] / 6.0) * a
                + (v[i + 1] / h[i] - m[i + 1] * h[i] / 6.0) * b
        })
        .collect()
}

/// Centreline position and unit tangent at arc length `s`.
fn locate(centerline: &[Point], s: f64) -> (Point, Point) {
    let mut acc = 0.0;
    let last = centerline.len() - 2;
    for (i, seg) in centerline.windows(2).enumerate() {
        let (dy, dx) = (seg[1].y - seg[0].y, seg[1].x - seg[0].x);
        let len = (dy * dy + dx * dx).sqrt();
        if acc + len >= s || i == last {
            let f = ((s - acc) / len).clamp(0.0, 1.0);
            let p = Point {
                y: seg[0].y + f * dy,
                x: seg[0].x + f * dx,
            };
            return (p, Point { y: dy / len, x: dx / len });
        }
        acc += len;
    }
    unreachable!("centreline has at least two points")
}

pub(crate) fn truncated_length(rng: &mut ChaCha8Rng, p: &SceneParams) -> f64 {
    let hi = 3.0 * p.hair_len_mean_px;
    if p.hair_len_std_px == 0.0 {
        return p.hair_len_mean_px.clamp(MIN_HAIR_LEN, hi);
    }
    let dist = Normal::new(p.hair_len_mean_px, p.hair_len_std_px).expect("validated std");
    for _ in 0..1000 {
        let l = dist.sample(rng);
        if (MIN_HAIR_LEN..=hi).contains(&l) {
            return l;
        }
    }
    p.hair_len_mean_px.clamp(MIN_HAIR_LEN, hi)
}

/// Draws side, angle jitter and length (in that order) for a hair anchored at
/// arc position `s`.
pub(crate) fn sample_hair(rng: &mut ChaCha8Rng, p: &SceneParams, centerline: &[Point], s: f64) -> HairRecord {
    let (c, t) = locate(centerline, s);
    let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let normal = Point {
        y: -t.x * side,
        x: t.y * side,
    };
    let jitter = rng.random_range(-ANGLE_JITTER_DEG..=ANGLE_JITTER_DEG) * PI / 180.0;
    let length = truncated_length(rng, p);
    let r = p.root_width_px / 2.0;
    HairRecord {
        anchor: Point {
            y: c.y + normal.y * r,
            x: c.x + normal.x * r,
        },
        angle_rad: normal.y.atan2(normal.x) + jitter,
        length_px: length,
        width_px: p.hair_width_px,
        arc_pos: s,
    }
}

/// Centreline (spline through a bounded lateral random walk) and Poisson hair
/// records.
///
/// RNG consumption order on the geometry stream: start column, the seven
/// lateral steps, then for each hair an exponential gap followed by the
/// hair's side, angle jitter and length draws.
pub fn sample_root_geometry(p: &SceneParams, rng: &mut ChaCha8Rng) -> RootGeometry {
    let (h, w) = (p.height as f64, p.width as f64);
    let (lo, hi) = (0.25 * w, 0.75 * w);
    let step = Normal::new(0.0, w / 20.0).expect("positive width");
    let mut xs = Vec::with_capacity(CONTROL_POINTS);
    xs.push(rng.random_range(0.4 * w..=0.6 * w));
    for _ in 1..CONTROL_POINTS {
        let prev = *xs.last().unwrap();
        let mut next = prev + step.sample(rng);
        // reflect into the band
        if next < lo {
            next = 2.0 * lo - next;
        }
        if next > hi {
            next = 2.0 * hi - next;
        }
        xs.push(next.clamp(lo, hi));
    }
    let knots: Vec<f64> = (0..CONTROL_POINTS)
        .map(|k| k as f64 * (h - 1.0) / (CONTROL_POINTS - 1) as f64)
        .collect();
    let rows: Vec<f64> = (0..p.height).map(|y| y as f64).collect();
    let cx = natural_spline(&knots, &xs, &rows);
    let centerline: Vec<Point> = rows
        .iter()
        .zip(&cx)
        .map(|(&y, &x)| Point {
            y,
            x: x.clamp(0.0, w - 1.0),
        })
        .collect();

    let length = polyline_length(&centerline);
    let mut hairs = Vec::new();
    if p.hair_rate > 0.0 {
        let gap = Exp::new(p.hair_rate / 100.0).expect("positive rate");
        let mut s = 0.0;
        loop {
            s += gap.sample(rng);
            if s >= length {
                break;
            }
            hairs.push(sample_hair(rng, p, &centerline, s));
        }
    }
    RootGeometry { centerline, hairs }
}
