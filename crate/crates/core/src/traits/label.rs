use crate::error::{Error, Result};
use crate::imageops::ImageBuffer;

/// One connected region, pixels as `(row, col)` in raster order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub pixels: Vec<(usize, usize)>,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// First pixel in raster order; components are ordered by it.
    pub fn anchor(&self) -> (usize, usize) {
        self.pixels[0]
    }

    pub fn bbox(&self) -> (usize, usize, usize, usize) {
        let (mut y0, mut x0, mut y1, mut x1) = (usize::MAX, usize::MAX, 0, 0);
        for &(y, x) in &self.pixels {
            y0 = y0.min(y);
            x0 = x0.min(x);
            y1 = y1.max(y);
            x1 = x1.max(x);
        }
        (y0, x0, y1, x1)
    }
}

/// 8-connected components of a boolean grid, in raster order of their first pixel.
pub(crate) fn components8(mask: &[bool], h: usize, w: usize) -> Vec<Component> {
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (y, x) = (i / w, i % w);
            pixels.push((y, x));
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        pixels.sort_unstable();
        out.push(Component { pixels });
    }
    out
}

/// Converts a `{0, 1}` single-channel image to a boolean grid.
pub fn mask_bits(mask: &ImageBuffer) -> Result<Vec<bool>> {
    if mask.channels() != 1 {
        return Err(Error::Argument("mask must have one channel".into()));
    }
    mask.data()
        .iter()
        .map(|&v| {
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(Error::Argument(format!("mask value {v} is not binary")))
            }
        })
        .collect()
}

/// 8-connected instances with at least `min_area` pixels, ordered by their
/// top-left-most (first raster) pixel.
pub fn label_instances(mask: &ImageBuffer, min_area: usize) -> Result<Vec<Component>> {
    let bits = mask_bits(mask)?;
    Ok(components8(&bits, mask.height(), mask.width())
        .into_iter()
        .filter(|c| c.area() >= min_area)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(h: usize, w: usize, on: &[(usize, usize)]) -> ImageBuffer {
        let mut data = vec![0.0; h * w];
        for &(y, x) in on {
            data[y * w + x] = 1.0;
        }
        ImageBuffer::new(h, w, 1, data).unwrap()
    }

    #[test]
    fn empty_mask() {
        let m = mask_from(6, 6, &[]);
        assert!(label_instances(&m, 1).unwrap().is_empty());
    }

    #[test]
    fn two_squares() {
        let mut on = Vec::new();
        for y in 0..3 {
            for x in 0..3 {
                on.push((y + 1, x + 1));
                on.push((y + 5, x + 6));
            }
        }
        let comps = label_instances(&mask_from(10, 10, &on), 5).unwrap();
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| c.area() == 9));
        assert_eq!(comps[0].anchor(), (1, 1));
        assert_eq!(comps[1].anchor(), (5, 6));
    }

    #[test]
    fn diagonal_chain_is_one_component() {
        let on: Vec<_> = (0..8).map(|i| (i, i)).collect();
        let comps = label_instances(&mask_from(8, 8, &on), 1).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].area(), 8);
    }

    #[test]
    fn small_components_are_filtered() {
        let comps = label_instances(&mask_from(8, 8, &[(0, 0), (0, 1), (5, 5)]), 2).unwrap();
        assert_eq!(comps.len(), 1);
    }

    #[test]
    fn non_binary_rejected() {
        let m = ImageBuffer::new(1, 2, 1, vec![0.0, 0.5]).unwrap();
        assert!(matches!(label_instances(&m, 1), Err(Error::Argument(_))));
    }
}
