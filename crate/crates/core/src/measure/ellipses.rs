//! Synthetic two-ellipse images: `p1` controls elongation, `p2` relative size.

use super::{DiscreteMeasure, GridImage, GridSpec};
use crate::error::{Error, Result};

const SUPERSAMPLE: usize = 4;

/// Geometry of the two ellipses at a given resolution.
///
/// On a 64 pixel grid the centers are (16, 32) and (48, 32) and the base
/// radius is 7 px; everything scales linearly with the resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseLayout {
    /// `(center, semi_axis_x, semi_axis_y)` of ellipse A (left) and B (right).
    pub a: ([f64; 2], f64, f64),
    pub b: ([f64; 2], f64, f64),
}

impl EllipseLayout {
    pub fn new(p1: f64, p2: f64, resolution: usize) -> Result<Self> {
        if resolution < 16 {
            return Err(Error::InvalidArgument(format!(
                "resolution {resolution} is below the minimum of 16"
            )));
        }
        if !(-1.0..=1.0).contains(&p1) || !(-1.0..=1.0).contains(&p2) {
            return Err(Error::InvalidArgument(format!(
                "parameters ({p1}, {p2}) must lie in [-1, 1]"
            )));
        }
        let scale = resolution as f64 / 64.0;
        let base = 7.0 * scale;
        // radius 7 +- 0.25 px at p2 = +-1
        let r_a = base * (1.0 + 0.25 * p2 / 7.0);
        let r_b = base * (1.0 - 0.25 * p2 / 7.0);
        // area preserving: major axis * f, minor axis / f
        let f = 1.0 + 0.35 * p1.abs();
        let (long, short) = (f, 1.0 / f);
        let (ax, ay, bx, by) = if p1 >= 0.0 {
            (r_a * long, r_a * short, r_b * short, r_b * long)
        } else {
            (r_a * short, r_a * long, r_b * long, r_b * short)
        };
        Ok(Self {
            a: ([16.0 * scale, 32.0 * scale], ax, ay),
            b: ([48.0 * scale, 32.0 * scale], bx, by),
        })
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        let hit = |(c, sx, sy): ([f64; 2], f64, f64)| {
            let dx = (x - c[0]) / sx;
            let dy = (y - c[1]) / sy;
            dx * dx + dy * dy <= 1.0
        };
        hit(self.a) || hit(self.b)
    }
}

/// Renders the two-ellipse image on a `resolution x resolution` pixel grid
/// (pixel centers at integer coordinates). Each pixel averages a 4x4 grid of
/// sub-samples of the indicator function.
pub fn ellipses_image(p1: f64, p2: f64, resolution: usize) -> Result<GridImage> {
    let layout = EllipseLayout::new(p1, p2, resolution)?;
    let grid = GridSpec::pixels(resolution, resolution)?;
    let step = 1.0 / SUPERSAMPLE as f64;
    let offsets: Vec<f64> = (0..SUPERSAMPLE)
        .map(|k| -0.5 + (k as f64 + 0.5) * step)
        .collect();
    let norm = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    let mut values = vec![0.0; grid.len()];
    for r in 0..resolution {
        for c in 0..resolution {
            let hits = offsets
                .iter()
                .flat_map(|&oy| offsets.iter().map(move |&ox| (ox, oy)))
                .filter(|&(ox, oy)| layout.inside(c as f64 + ox, r as f64 + oy))
                .count();
            values[r * resolution + c] = hits as f64 / norm;
        }
    }
    GridImage::new(grid, values)
}

/// Two-ellipse image as a point cloud on its nonzero pixels.
pub fn gen_ellipses(p1: f64, p2: f64, resolution: usize) -> Result<DiscreteMeasure> {
    Ok(ellipses_image(p1, p2, resolution)?.to_measure())
}

/// Mass left and right of the vertical midline `x = split_x`.
pub fn ellipse_masses(mu: &DiscreteMeasure, split_x: f64) -> (f64, f64) {
    mu.points()
        .zip(mu.masses())
        .fold((0.0, 0.0), |(l, r), (p, &m)| {
            if p[0] < split_x {
                (l + m, r)
            } else {
                (l, r + m)
            }
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(img: &GridImage, r: usize, c: usize) -> f64 {
        img.values[r * img.grid.cols + c]
    }

    #[test]
    fn circles_are_translates_of_each_other() {
        let img = ellipses_image(0.0, 0.0, 64).unwrap();
        for r in 0..64 {
            for c in 0..32 {
                assert_eq!(at(&img, r, c), at(&img, r, c + 32), "pixel ({r}, {c})");
            }
        }
    }

    #[test]
    fn equal_sizes_give_equal_masses() {
        for &p1 in &[-1.0, -0.4, 0.0, 0.7, 1.0] {
            let mu = gen_ellipses(p1, 0.0, 64).unwrap();
            let (a, b) = ellipse_masses(&mu, 32.0);
            assert!((a - b).abs() <= 0.01 * a.max(b), "p1 = {p1}: {a} vs {b}");
        }
    }

    #[test]
    fn negating_p1_transposes_each_ellipse() {
        let p2 = 0.6;
        let pos = ellipses_image(0.8, p2, 64).unwrap();
        let neg = ellipses_image(-0.8, p2, 64).unwrap();
        for &(cx, cy) in &[(16i64, 32i64), (48, 32)] {
            for dy in -14i64..=14 {
                for dx in -14i64..=14 {
                    let (r, c) = ((cy + dy) as usize, (cx + dx) as usize);
                    let (rt, ct) = ((cy + dx) as usize, (cx + dy) as usize);
                    assert_eq!(at(&neg, r, c), at(&pos, rt, ct));
                }
            }
        }
    }

    #[test]
    fn size_parameter_moves_mass_between_ellipses() {
        let levels: Vec<f64> = (0..8).map(|k| -1.0 + 2.0 * k as f64 / 7.0).collect();
        let masses: Vec<(f64, f64)> = levels
            .iter()
            .map(|&p2| ellipse_masses(&gen_ellipses(0.3, p2, 64).unwrap(), 32.0))
            .collect();
        for w in masses.windows(2) {
            assert!(w[1].0 > w[0].0);
            assert!(w[1].1 < w[0].1);
        }
        let rel = (masses[7].0 - masses[0].0) / masses[0].0;
        assert!(rel > 0.05 && rel < 0.2, "relative mass change {rel}");
    }

    #[test]
    fn rejects_small_resolution() {
        assert!(gen_ellipses(0.0, 0.0, 15).is_err());
        assert!(gen_ellipses(1.5, 0.0, 64).is_err());
    }
}
