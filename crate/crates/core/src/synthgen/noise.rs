use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub(crate) const OCTAVES: usize = 4;
const BASE_CELL: f64 = 32.0;

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// One octave of lattice value noise in `[-0.5, 0.5]`.
struct Lattice {
    rows: usize,
    cols: usize,
    cell: f64,
    values: Vec<f64>,
}

impl Lattice {
    fn new(rng: &mut ChaCha8Rng, h: usize, w: usize, cell: f64) -> Self {
        let rows = (h as f64 / cell).ceil() as usize + 2;
        let cols = (w as f64 / cell).ceil() as usize + 2;
        let values = (0..rows * cols).map(|_| rng.random::<f64>() - 0.5).collect();
        Lattice {
            rows,
            cols,
            cell,
            values,
        }
    }

    fn sample(&self, y: f64, x: f64) -> f64 {
        let gy = y / self.cell;
        let gx = x / self.cell;
        let (iy, ix) = (gy.floor() as usize, gx.floor() as usize);
        let (ty, tx) = (smooth(gy - iy as f64), smooth(gx - ix as f64));
        let iy1 = (iy + 1).min(self.rows - 1);
        let ix1 = (ix + 1).min(self.cols - 1);
        let v = |r: usize, c: usize| self.values[r * self.cols + c];
        let top = v(iy, ix) * (1.0 - tx) + v(iy, ix1) * tx;
        let bot = v(iy1, ix) * (1.0 - tx) + v(iy1, ix1) * tx;
        top * (1.0 - ty) + bot * ty
    }
}

/// Multi-octave value noise; octave `o` has cell size `32 / 2^o` px and weight
/// `persistence^o`. The sum is scaled by `persistence`, so zero persistence
/// yields a flat field. Lattices are drawn octave by octave in row-major order.
pub(crate) fn fractal_noise(rng: &mut ChaCha8Rng, h: usize, w: usize, persistence: f64) -> Vec<f64> {
    let lattices: Vec<Lattice> = (0..OCTAVES)
        .map(|o| Lattice::new(rng, h, w, BASE_CELL / (1 << o) as f64))
        .collect();
    if persistence == 0.0 {
        return vec![0.0; h * w];
    }
    let weights: Vec<f64> = (0..OCTAVES).map(|o| persistence.powi(o as i32)).collect();
    let norm: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let s: f64 = lattices
                .iter()
                .zip(&weights)
                .map(|(l, wt)| wt * l.sample(y as f64, x as f64))
                .sum();
            out.push(persistence * s / norm);
        }
    }
    out
}
