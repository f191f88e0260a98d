//! Zhang-Suen thinning (Lu-Wang variant) plus a staircase clean-up pass, and the weighted
//! edge-length measurement on the resulting skeleton.

use std::f64::consts::SQRT_2;

use super::label::Component;

/// Neighbour offsets P2..P9, clockwise from north.
const RING: [(isize, isize); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

/// Binary grid with a guaranteed one-pixel empty border.
#[derive(Debug, Clone)]
pub struct Grid {
    h: usize,
    w: usize,
    on: Vec<bool>,
}

impl Grid {
    /// Patch covering the component's bounding box plus a one-pixel margin.
    pub fn from_component(c: &Component) -> Grid {
        let (y0, x0, y1, x1) = c.bbox();
        let h = y1 - y0 + 3;
        let w = x1 - x0 + 3;
        let mut on = vec![false; h * w];
        for &(y, x) in &c.pixels {
            on[(y - y0 + 1) * w + (x - x0 + 1)] = true;
        }
        Grid { h, w, on }
    }

    #[inline]
    fn at(&self, y: usize, x: usize, d: (isize, isize)) -> bool {
        self.on[(y as isize + d.0) as usize * self.w + (x as isize + d.1) as usize]
    }

    fn ring(&self, y: usize, x: usize) -> [bool; 8] {
        RING.map(|d| self.at(y, x, d))
    }
}

fn transitions(p: &[bool; 8]) -> usize {
    (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count()
}

/// Two-subiteration Zhang-Suen thinning with the Lu-Wang neighbour bound
/// (3..=6 instead of 2..=6), which keeps two-pixel diagonal strokes from
/// collapsing.
pub fn zhang_suen(grid: &mut Grid) {
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut kill = Vec::new();
            for y in 1..grid.h - 1 {
                for x in 1..grid.w - 1 {
                    if !grid.on[y * grid.w + x] {
                        continue;
                    }
                    let p = grid.ring(y, x);
                    let b = p.iter().filter(|v| **v).count();
                    if !(3..=6).contains(&b) || transitions(&p) != 1 {
                        continue;
                    }
                    // p[0]=N p[2]=E p[4]=S p[6]=W
                    let ok = if pass == 0 {
                        !(p[0] && p[2] && p[4]) && !(p[2] && p[4] && p[6])
                    } else {
                        !(p[0] && p[2] && p[6]) && !(p[0] && p[4] && p[6])
                    };
                    if ok {
                        kill.push(y * grid.w + x);
                    }
                }
            }
            changed |= !kill.is_empty();
            for i in kill {
                grid.on[i] = false;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Removes corner pixels of 4-connected staircases whose neighbours stay
/// 8-connected without them.
pub fn remove_staircases(grid: &mut Grid) {
    for y in 1..grid.h - 1 {
        for x in 1..grid.w - 1 {
            if !grid.on[y * grid.w + x] {
                continue;
            }
            let p = grid.ring(y, x);
            let b = p.iter().filter(|v| **v).count();
            if b < 2 {
                continue;
            }
            let corner = (p[0] && p[2]) || (p[2] && p[4]) || (p[4] && p[6]) || (p[6] && p[0]);
            if corner && neighbour_clusters(&p) == 1 {
                grid.on[y * grid.w + x] = false;
            }
        }
    }
}

/// Number of 8-connected groups formed by the set ring positions.
fn neighbour_clusters(p: &[bool; 8]) -> usize {
    let mut label = [usize::MAX; 8];
    let mut n = 0;
    for s in 0..8 {
        if !p[s] || label[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        label[s] = n;
        while let Some(i) = stack.pop() {
            for j in 0..8 {
                if p[j] && label[j] == usize::MAX {
                    let (a, b) = (RING[i], RING[j]);
                    if (a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1 {
                        label[j] = n;
                        stack.push(j);
                    }
                }
            }
        }
        n += 1;
    }
    n
}

/// Sum of skeleton edge weights: 1 for 4-neighbours, sqrt(2) for diagonal
/// neighbours not already joined through a shared 4-neighbour.
pub fn edge_length(grid: &Grid) -> f64 {
    let mut len = 0.0;
    for y in 1..grid.h - 1 {
        for x in 1..grid.w - 1 {
            if !grid.on[y * grid.w + x] {
                continue;
            }
            if grid.at(y, x, (0, 1)) {
                len += 1.0;
            }
            if grid.at(y, x, (1, 0)) {
                len += 1.0;
            }
            if grid.at(y, x, (1, 1)) && !grid.at(y, x, (0, 1)) && !grid.at(y, x, (1, 0)) {
                len += SQRT_2;
            }
            if grid.at(y, x, (1, -1)) && !grid.at(y, x, (0, -1)) && !grid.at(y, x, (1, 0)) {
                len += SQRT_2;
            }
        }
    }
    len
}

/// Skeleton length of a component in pixels.
pub fn skeleton_length(component: &Component) -> f64 {
    let mut grid = Grid::from_component(component);
    zhang_suen(&mut grid);
    remove_staircases(&mut grid);
    edge_length(&grid)
}

/// Skeleton pixels with exactly one skeleton neighbour, each paired with the
/// unit direction pointing out of the skeleton (averaged over up to
/// `ENDPOINT_TRACE` pixels back along the branch).
fn endpoints(grid: &Grid) -> Vec<((usize, usize), (f64, f64))> {
    let neighbours = |y: usize, x: usize| -> Vec<(usize, usize)> {
        RING.iter()
            .filter(|d| grid.at(y, x, **d))
            .map(|d| ((y as isize + d.0) as usize, (x as isize + d.1) as usize))
            .collect()
    };
    let mut out = Vec::new();
    for y in 1..grid.h - 1 {
        for x in 1..grid.w - 1 {
            if !grid.on[y * grid.w + x] {
                continue;
            }
            let n = neighbours(y, x);
            if n.len() != 1 {
                continue;
            }
            let (mut prev, mut cur) = ((y, x), n[0]);
            for _ in 1..ENDPOINT_TRACE {
                let next: Vec<_> = neighbours(cur.0, cur.1).into_iter().filter(|p| *p != prev).collect();
                if next.len() != 1 {
                    break;
                }
                (prev, cur) = (cur, next[0]);
            }
            let (dy, dx) = (y as f64 - cur.0 as f64, x as f64 - cur.1 as f64);
            let norm = (dy * dy + dx * dx).sqrt();
            if norm > 0.0 {
                out.push(((y, x), (dy / norm, dx / norm)));
            }
        }
    }
    out
}

const ENDPOINT_TRACE: usize = 8;
/// Half-width of the corridor ahead of an endpoint searched for eroded pixels.
const END_CORRIDOR: f64 = 1.5;

/// Distance from a skeleton endpoint to the farthest component pixel centre
/// ahead of it along `dir`, within [`END_CORRIDOR`] of the branch axis: the
/// tail that thinning eroded.
fn end_extension(mask: &Grid, end: (usize, usize), dir: (f64, f64)) -> f64 {
    let mut best: f64 = 0.0;
    for y in 0..mask.h {
        for x in 0..mask.w {
            if !mask.on[y * mask.w + x] {
                continue;
            }
            let (ry, rx) = (y as f64 - end.0 as f64, x as f64 - end.1 as f64);
            let along = ry * dir.0 + rx * dir.1;
            let across = (ry * dir.1 - rx * dir.0).abs();
            if across <= END_CORRIDOR {
                best = best.max(along);
            }
        }
    }
    best
}

/// Length of a stroke-like component between its extreme pixel centres:
/// the skeleton length plus, at each skeleton endpoint, the tail eroded by
/// thinning. Equals [`skeleton_length`] on one-pixel-wide strokes.
pub fn hair_length(component: &Component) -> f64 {
    let mask = Grid::from_component(component);
    let mut grid = mask.clone();
    zhang_suen(&mut grid);
    remove_staircases(&mut grid);
    let ext: f64 = endpoints(&grid).iter().map(|&(e, d)| end_extension(&mask, e, d)).sum();
    edge_length(&grid) + ext
}
