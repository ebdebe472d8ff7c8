//! Procedurally textured color images for fixtures and desk-scale datasets.
//!
//! Each image mixes a smooth two-tone background, value-noise texture at two
//! scales and a handful of hard-edged shapes, so seam carving has cheap and
//! expensive regions to choose from.

use rand::Rng;

use crate::imaging::ImageBuffer;
use crate::rng::substream;

struct ValueNoise {
    cells: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(cells: usize, rng: &mut impl Rng) -> Self {
        let lattice = (0..(cells + 1) * (cells + 1))
            .map(|_| rng.random::<f64>())
            .collect();
        Self { cells, lattice }
    }

    /// Bilinear interpolation with smoothstep weights; `u`, `v` in [0, 1].
    fn sample(&self, u: f64, v: f64) -> f64 {
        let n = self.cells as f64;
        let (fx, fy) = (u * n, v * n);
        let (x0, y0) = (
            (fx.floor() as usize).min(self.cells - 1),
            (fy.floor() as usize).min(self.cells - 1),
        );
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(fx - x0 as f64), smooth(fy - y0 as f64));
        let at = |x: usize, y: usize| self.lattice[y * (self.cells + 1) + x];
        let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
        let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

enum Shape {
    Disc { cx: f64, cy: f64, r: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
        }
    }
}

fn random_color(rng: &mut impl Rng) -> [f64; 3] {
    [
        rng.random_range(20.0..235.0),
        rng.random_range(20.0..235.0),
        rng.random_range(20.0..235.0),
    ]
}

/// A `width`×`height` RGB image fully determined by `seed`.
pub fn procedural_image(seed: u64, width: usize, height: usize) -> ImageBuffer {
    let mut rng = substream(seed, "synth", 0);
    let top = random_color(&mut rng);
    let bottom = random_color(&mut rng);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let texture = ValueNoise::new(rng.random_range(3..10), &mut rng);
    let amplitude: f64 = rng.random_range(15.0..60.0);
    let fine = ValueNoise::new(rng.random_range(12..24), &mut rng);
    let fine_amp: f64 = rng.random_range(4.0..18.0);

    let n_shapes = rng.random_range(2..6);
    let (w, h) = (width as f64, height as f64);
    let shapes: Vec<(Shape, [f64; 3])> = (0..n_shapes)
        .map(|_| {
            let shape = if rng.random_bool(0.5) {
                Shape::Disc {
                    cx: rng.random_range(0.0..w),
                    cy: rng.random_range(0.0..h),
                    r: rng.random_range(0.05..0.22) * w.min(h),
                }
            } else {
                let (x0, y0) = (rng.random_range(0.0..w), rng.random_range(0.0..h));
                Shape::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.random_range(0.08..0.35) * w,
                    y1: y0 + rng.random_range(0.08..0.35) * h,
                }
            };
            (shape, random_color(&mut rng))
        })
        .collect();

    let (ca, sa) = (angle.cos(), angle.sin());
    ImageBuffer::from_fn(width, height, 3, |x, y, c| {
        let (u, v) = ((x as f64 + 0.5) / w, (y as f64 + 0.5) / h);
        let along = (((u - 0.5) * ca + (v - 0.5) * sa) + 0.75) / 1.5;
        let mut value = top[c] * (1.0 - along) + bottom[c] * along;
        value += amplitude * (texture.sample(u, v) - 0.5);
        value += fine_amp * (fine.sample(u, v) - 0.5);
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        for (shape, color) in &shapes {
            if shape.contains(px, py) {
                value = color[c] + 0.5 * amplitude * (texture.sample(v, u) - 0.5);
            }
        }
        value.round().clamp(0.0, 255.0) as u8
    })
    .expect("dimensions are positive")
}
