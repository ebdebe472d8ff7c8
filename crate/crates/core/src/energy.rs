//! Gradient-magnitude energy and seam energy.

use crate::carver::{Axis, Seam};
use crate::error::{Error, Result};
use crate::imaging::{to_grayscale, ImageBuffer};

/// Per-pixel energy, row-major, same dimensions as the source image.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl EnergyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::Dimension(format!(
                "energy map {width}x{height} cannot hold {} values",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for x in 0..self.width {
            for y in 0..self.height {
                values.push(self.at(x, y));
            }
        }
        Self {
            width: self.height,
            height: self.width,
            values,
        }
    }

    /// Min-max scales the map into an 8-bit grayscale image for inspection.
    /// A constant map renders black.
    pub fn to_image(&self) -> ImageBuffer {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        let data = self
            .values
            .iter()
            .map(|&v| {
                if span > 0.0 {
                    ((v - lo) / span * 255.0 + 0.5).floor() as u8
                } else {
                    0
                }
            })
            .collect();
        ImageBuffer::new(self.width, self.height, 1, data).expect("map dimensions are valid")
    }
}

/// `|I(x+1,y) - I(x,y)| + |I(x,y+1) - I(x,y)|` with forward differences and
/// replicated borders, so the last column/row contributes 0 for that term.
pub fn gradient_energy(img: &ImageBuffer) -> Result<EnergyMap> {
    if img.channels() != 1 {
        return Err(Error::Channel(format!(
            "energy needs a single-channel image, got {} channels",
            img.channels()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let px = img.data();
    let mut values = vec![0.0; w * h];
    for y in 0..h {
        let row = &px[y * w..(y + 1) * w];
        let below = if y + 1 < h {
            &px[(y + 1) * w..(y + 2) * w]
        } else {
            row
        };
        let out = &mut values[y * w..(y + 1) * w];
        for x in 0..w {
            let here = i32::from(row[x]);
            let right = i32::from(row[(x + 1).min(w - 1)]);
            let down = i32::from(below[x]);
            out[x] = f64::from((right - here).abs() + (down - here).abs());
        }
    }
    Ok(EnergyMap {
        width: w,
        height: h,
        values,
    })
}

/// Energy of an arbitrary image: color input is reduced to luma first.
pub fn image_energy(img: &ImageBuffer) -> EnergyMap {
    gradient_energy(&to_grayscale(img)).expect("grayscale has one channel")
}

/// Sum of the map over the seam's pixels.
pub fn seam_energy(e: &EnergyMap, seam: &Seam) -> Result<f64> {
    seam.check(e.width(), e.height())?;
    Ok(match seam.axis {
        Axis::Vertical => seam
            .offsets
            .iter()
            .enumerate()
            .map(|(y, &x)| e.at(x, y))
            .sum(),
        Axis::Horizontal => seam
            .offsets
            .iter()
            .enumerate()
            .map(|(x, &y)| e.at(x, y))
            .sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(w: usize, h: usize, data: Vec<u8>) -> ImageBuffer {
        ImageBuffer::new(w, h, 1, data).unwrap()
    }

    /// Applies the definition pixel by pixel with explicit border checks.
    fn brute_force(img: &ImageBuffer) -> Vec<f64> {
        let (w, h) = (img.width() as i64, img.height() as i64);
        let at = |x: i64, y: i64| {
            let x = x.clamp(0, w - 1) as usize;
            let y = y.clamp(0, h - 1) as usize;
            f64::from(img.pixel(x, y)[0])
        };
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                out.push((at(x + 1, y) - at(x, y)).abs() + (at(x, y + 1) - at(x, y)).abs());
            }
        }
        out
    }

    #[test]
    fn constant_image_has_zero_energy() {
        let e = gradient_energy(&gray(5, 4, vec![77; 20])).unwrap();
        assert!(e.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_bright_pixel() {
        let img = gray(3, 3, vec![0, 0, 0, 0, 100, 0, 0, 0, 0]);
        let e = gradient_energy(&img).unwrap();
        assert_eq!(e.values(), brute_force(&img).as_slice());
        // Forward differences: the centre sees both of its drops, its left
        // and upper neighbours see one rise each.
        assert_eq!(
            e.values(),
            &[0.0, 100.0, 0.0, 100.0, 200.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn one_pixel_image() {
        let e = gradient_energy(&gray(1, 1, vec![9])).unwrap();
        assert_eq!(e.values(), &[0.0]);
    }

    #[test]
    fn color_input_is_rejected() {
        let img = ImageBuffer::filled(2, 2, &[1, 2, 3]).unwrap();
        assert!(matches!(gradient_energy(&img), Err(Error::Channel(_))));
    }

    #[test]
    fn seam_energy_sums_lookups() {
        let ones = EnergyMap::new(3, 5, vec![1.0; 15]).unwrap();
        let s = Seam::vertical(vec![0, 1, 2, 2, 1]);
        assert_eq!(seam_energy(&ones, &s).unwrap(), 5.0);
        let zeros = EnergyMap::new(3, 5, vec![0.0; 15]).unwrap();
        assert_eq!(seam_energy(&zeros, &s).unwrap(), 0.0);

        // 4 rows x 3 columns holding 1..=12; seam columns [0, 1, 1, 2]
        let map = EnergyMap::new(3, 4, (1..=12).map(f64::from).collect()).unwrap();
        let s = Seam::vertical(vec![0, 1, 1, 2]);
        let direct = map.at(0, 0) + map.at(1, 1) + map.at(1, 2) + map.at(2, 3);
        assert_eq!(direct, 1.0 + 5.0 + 8.0 + 12.0);
        assert_eq!(seam_energy(&map, &s).unwrap(), direct);

        let h = Seam::horizontal(vec![3, 2, 2]);
        assert_eq!(seam_energy(&map, &h).unwrap(), 10.0 + 8.0 + 9.0);
    }

    #[test]
    fn out_of_bounds_seam() {
        let map = EnergyMap::new(3, 2, vec![0.0; 6]).unwrap();
        assert!(matches!(
            seam_energy(&map, &Seam::vertical(vec![2, 3])),
            Err(Error::Seam(_))
        ));
        assert!(matches!(
            seam_energy(&map, &Seam::vertical(vec![0, 0, 0])),
            Err(Error::Seam(_))
        ));
    }

    #[test]
    fn debug_image_spans_full_range() {
        let map = EnergyMap::new(3, 1, vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(map.to_image().data(), &[0, 128, 255]);
    }

    fn arb_gray() -> impl Strategy<Value = ImageBuffer> {
        (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), w * h).prop_map(move |d| gray(w, h, d))
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(img in arb_gray()) {
            let e = gradient_energy(&img).unwrap();
            let expected = brute_force(&img);
            prop_assert_eq!(e.values(), expected.as_slice());
            prop_assert!(e.values().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn homogeneous_of_degree_one(img in arb_gray(), k in 0u8..4) {
            let scaled: Vec<u8> = img.data().iter().map(|&v| (v / 4) * k).collect();
            let base: Vec<u8> = img.data().iter().map(|&v| v / 4).collect();
            let e1 = gradient_energy(&gray(img.width(), img.height(), base)).unwrap();
            let ek = gradient_energy(&gray(img.width(), img.height(), scaled)).unwrap();
            for (a, b) in e1.values().iter().zip(ek.values()) {
                prop_assert_eq!(a * f64::from(k), *b);
            }
        }

        #[test]
        fn translation_shifts_the_interior(img in arb_gray(), dx in 0usize..3, dy in 0usize..3) {
            // Embed the image at offset (dx, dy) in a larger canvas.
            let (w, h) = (img.width(), img.height());
            let big = ImageBuffer::from_fn(w + dx, h + dy, 1, |x, y, _| {
                if x >= dx && y >= dy { img.pixel(x - dx, y - dy)[0] } else { 0 }
            }).unwrap();
            let e = gradient_energy(&img).unwrap();
            let eb = gradient_energy(&big).unwrap();
            for y in 0..h.saturating_sub(1) {
                for x in 0..w.saturating_sub(1) {
                    prop_assert_eq!(e.at(x, y), eb.at(x + dx, y + dy));
                }
            }
        }

        #[test]
        fn seam_energy_is_additive(rows in 2usize..8, split in 1usize..7, seed in any::<u64>()) {
            let split = split.min(rows - 1);
            let w = 4;
            let vals: Vec<f64> = (0..w * rows).map(|i| ((i as u64 * 31 + seed % 97) % 13) as f64).collect();
            let map = EnergyMap::new(w, rows, vals).unwrap();
            let mut offs = vec![1usize];
            for i in 1..rows { offs.push(((offs[i - 1] as i64 + ((seed >> i) % 3) as i64 - 1).clamp(0, 3)) as usize); }
            let whole = seam_energy(&map, &Seam::vertical(offs.clone())).unwrap();
            let top: f64 = (0..split).map(|y| map.at(offs[y], y)).sum();
            let bottom: f64 = (split..rows).map(|y| map.at(offs[y], y)).sum();
            prop_assert_eq!(whole, top + bottom);
        }
    }
}
