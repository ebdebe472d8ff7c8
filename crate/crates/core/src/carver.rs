//! Optimal seam search by dynamic programming, seam removal and insertion,
//! iterative resizing and mask-driven object removal.
//!
//! Ties are broken by a total order so every result is deterministic: the
//! terminal cell goes to the smallest offset (leftmost for vertical seams,
//! topmost for horizontal ones); a parent step prefers going straight, then
//! toward the smaller offset.

use serde::{Deserialize, Serialize};

use crate::energy::{image_energy, seam_energy, EnergyMap};
use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Top-to-bottom seams; removing one narrows the image.
    #[default]
    Vertical,
    /// Left-to-right seams; removing one shortens the image.
    Horizontal,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vertical" => Ok(Axis::Vertical),
            "horizontal" => Ok(Axis::Horizontal),
            _ => Err(Error::Param(format!("unknown axis `{s}`"))),
        }
    }
}

/// An 8-connected path crossing the image, one pixel per crossed line.
///
/// For a vertical seam `offsets[y]` is the column removed from row `y`; for
/// a horizontal seam `offsets[x]` is the row removed from column `x`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Seam {
    pub axis: Axis,
    pub offsets: Vec<usize>,
}

impl Seam {
    pub fn vertical(offsets: Vec<usize>) -> Self {
        Self {
            axis: Axis::Vertical,
            offsets,
        }
    }

    pub fn horizontal(offsets: Vec<usize>) -> Self {
        Self {
            axis: Axis::Horizontal,
            offsets,
        }
    }

    /// Validates length, bounds and 8-connectivity against a `width`×`height`
    /// grid.
    pub fn check(&self, width: usize, height: usize) -> Result<()> {
        let (lines, span) = match self.axis {
            Axis::Vertical => (height, width),
            Axis::Horizontal => (width, height),
        };
        if self.offsets.len() != lines {
            return Err(Error::Seam(format!(
                "{:?} seam has {} offsets, grid {width}x{height} needs {lines}",
                self.axis,
                self.offsets.len()
            )));
        }
        if let Some(&bad) = self.offsets.iter().find(|&&o| o >= span) {
            return Err(Error::Seam(format!("offset {bad} outside 0..{span}")));
        }
        if let Some(i) = self
            .offsets
            .windows(2)
            .position(|p| p[0].abs_diff(p[1]) > 1)
        {
            return Err(Error::Seam(format!(
                "seam jumps between lines {i} and {}",
                i + 1
            )));
        }
        Ok(())
    }
}

/// Minimal cumulative energy of any seam ending at each pixel, with the
/// step (-1, 0, +1) taken from the previous line.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeTable {
    pub axis: Axis,
    pub width: usize,
    pub height: usize,
    /// Row-major in image coordinates.
    pub values: Vec<f64>,
    pub parent: Vec<i8>,
}

impl CumulativeTable {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn parent_at(&self, x: usize, y: usize) -> i8 {
        self.parent[y * self.width + x]
    }

    fn lines_span(&self) -> (usize, usize) {
        match self.axis {
            Axis::Vertical => (self.height, self.width),
            Axis::Horizontal => (self.width, self.height),
        }
    }

    fn index(&self, line: usize, pos: usize) -> usize {
        match self.axis {
            Axis::Vertical => line * self.width + pos,
            Axis::Horizontal => pos * self.width + line,
        }
    }

    /// Backtracks from the leftmost minimal terminal cell.
    pub fn seam(&self) -> Seam {
        let (lines, span) = self.lines_span();
        let last = lines - 1;
        let mut best = 0;
        for pos in 1..span {
            if self.values[self.index(last, pos)] < self.values[self.index(last, best)] {
                best = pos;
            }
        }
        let mut offsets = vec![0; lines];
        offsets[last] = best;
        for line in (1..lines).rev() {
            let step = self.parent[self.index(line, offsets[line])];
            offsets[line - 1] = (offsets[line] as isize + step as isize) as usize;
        }
        Seam {
            axis: self.axis,
            offsets,
        }
    }
}

pub fn cumulative_energy(e: &EnergyMap, axis: Axis) -> CumulativeTable {
    let (w, h) = (e.width(), e.height());
    let mut table = CumulativeTable {
        axis,
        width: w,
        height: h,
        values: vec![0.0; w * h],
        parent: vec![0; w * h],
    };
    let (lines, span) = table.lines_span();
    for pos in 0..span {
        let i = table.index(0, pos);
        table.values[i] = e.values()[i];
    }
    for line in 1..lines {
        for pos in 0..span {
            let mut step = 0i8;
            let mut best = f64::INFINITY;
            for d in [0i8, -1, 1] {
                let p = pos as isize + d as isize;
                if p < 0 || p >= span as isize {
                    continue;
                }
                let v = table.values[table.index(line - 1, p as usize)];
                if v < best {
                    best = v;
                    step = d;
                }
            }
            let i = table.index(line, pos);
            table.values[i] = e.values()[i] + best;
            table.parent[i] = step;
        }
    }
    table
}

/// The seam minimizing total energy among all 8-connected seams.
pub fn optimal_seam(e: &EnergyMap, axis: Axis) -> Seam {
    cumulative_energy(e, axis).seam()
}

fn check_image_seam(img: &ImageBuffer, seam: &Seam) -> Result<()> {
    seam.check(img.width(), img.height())
}

pub fn remove_seam(img: &ImageBuffer, seam: &Seam) -> Result<ImageBuffer> {
    check_image_seam(img, seam)?;
    match seam.axis {
        Axis::Vertical => remove_vertical(img, &seam.offsets),
        Axis::Horizontal => Ok(remove_vertical(&img.transpose(), &seam.offsets)?.transpose()),
    }
}

fn remove_vertical(img: &ImageBuffer, cols: &[usize]) -> Result<ImageBuffer> {
    if img.width() < 2 {
        return Err(Error::Seam(
            "cannot remove a seam from a 1-pixel-wide image".into(),
        ));
    }
    let c = img.channels();
    let mut data = Vec::with_capacity((img.width() - 1) * img.height() * c);
    for (y, &x) in cols.iter().enumerate() {
        let row = img.row(y);
        data.extend_from_slice(&row[..x * c]);
        data.extend_from_slice(&row[(x + 1) * c..]);
    }
    ImageBuffer::new(img.width() - 1, img.height(), c, data)
}

/// How an inserted seam pixel is synthesized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InsertMode {
    /// Rounded mean of the seam pixel and its right (or lower) neighbour;
    /// the last column has no such neighbour and is duplicated.
    #[default]
    Average,
    /// Verbatim copy of the seam pixel.
    Duplicate,
}

impl std::str::FromStr for InsertMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(InsertMode::Average),
            "duplicate" => Ok(InsertMode::Duplicate),
            _ => Err(Error::Param(format!("unknown insert mode `{s}`"))),
        }
    }
}

/// Inserts one pixel per line right after (below) each seam pixel.
pub fn insert_seam(img: &ImageBuffer, seam: &Seam, mode: InsertMode) -> Result<ImageBuffer> {
    check_image_seam(img, seam)?;
    match seam.axis {
        Axis::Vertical => insert_vertical(img, &seam.offsets, mode),
        Axis::Horizontal => Ok(insert_vertical(&img.transpose(), &seam.offsets, mode)?.transpose()),
    }
}

fn insert_vertical(img: &ImageBuffer, cols: &[usize], mode: InsertMode) -> Result<ImageBuffer> {
    let (w, c) = (img.width(), img.channels());
    let mut data = Vec::with_capacity((w + 1) * img.height() * c);
    for (y, &x) in cols.iter().enumerate() {
        let row = img.row(y);
        data.extend_from_slice(&row[..(x + 1) * c]);
        let here = &row[x * c..(x + 1) * c];
        match mode {
            InsertMode::Average if x + 1 < w => {
                let right = &row[(x + 1) * c..(x + 2) * c];
                data.extend(
                    here.iter()
                        .zip(right)
                        .map(|(&a, &b)| ((u16::from(a) + u16::from(b) + 1) / 2) as u8),
                );
            }
            _ => data.extend_from_slice(here),
        }
        data.extend_from_slice(&row[(x + 1) * c..]);
    }
    ImageBuffer::new(w + 1, img.height(), c, data)
}

/// One seam removed or inserted during a resize.
#[derive(Clone, Debug, PartialEq)]
pub struct SeamStep {
    pub seam: Seam,
    pub energy: f64,
    pub inserted: bool,
}

#[derive(Clone, Debug)]
pub struct CarveOutcome {
    pub image: ImageBuffer,
    pub steps: Vec<SeamStep>,
}

impl CarveOutcome {
    pub fn removed(&self) -> usize {
        self.steps.iter().filter(|s| !s.inserted).count()
    }

    pub fn inserted(&self) -> usize {
        self.steps.iter().filter(|s| s.inserted).count()
    }

    pub fn total_energy(&self) -> f64 {
        self.steps.iter().map(|s| s.energy).sum()
    }
}

/// Finds and removes the current optimal seam along `axis`.
pub fn remove_optimal_seam(img: &ImageBuffer, axis: Axis) -> Result<(ImageBuffer, SeamStep)> {
    let e = image_energy(img);
    let seam = optimal_seam(&e, axis);
    let energy = seam_energy(&e, &seam)?;
    let image = remove_seam(img, &seam)?;
    Ok((
        image,
        SeamStep {
            seam,
            energy,
            inserted: false,
        },
    ))
}

fn insert_optimal_seam(
    img: &ImageBuffer,
    axis: Axis,
    mode: InsertMode,
) -> Result<(ImageBuffer, SeamStep)> {
    let e = image_energy(img);
    let seam = optimal_seam(&e, axis);
    let energy = seam_energy(&e, &seam)?;
    let image = insert_seam(img, &seam, mode)?;
    Ok((
        image,
        SeamStep {
            seam,
            energy,
            inserted: true,
        },
    ))
}

fn resize_axis(
    mut img: ImageBuffer,
    axis: Axis,
    target: usize,
    mode: InsertMode,
    steps: &mut Vec<SeamStep>,
) -> Result<ImageBuffer> {
    let current = |img: &ImageBuffer| match axis {
        Axis::Vertical => img.width(),
        Axis::Horizontal => img.height(),
    };
    while current(&img) != target {
        let (next, step) = if current(&img) > target {
            remove_optimal_seam(&img, axis)?
        } else {
            insert_optimal_seam(&img, axis, mode)?
        };
        img = next;
        steps.push(step);
    }
    Ok(img)
}

/// Resizes to exactly `target_w`×`target_h`, one seam at a time, all
/// width changes before height changes.
pub fn carve_to(
    img: &ImageBuffer,
    target_w: usize,
    target_h: usize,
    mode: InsertMode,
) -> Result<CarveOutcome> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::Param(format!(
            "target size must be at least 1x1, got {target_w}x{target_h}"
        )));
    }
    let mut steps = Vec::new();
    let img = resize_axis(img.clone(), Axis::Vertical, target_w, mode, &mut steps)?;
    let image = resize_axis(img, Axis::Horizontal, target_h, mode, &mut steps)?;
    Ok(CarveOutcome { image, steps })
}

/// Pixels flagged for removal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectMask {
    width: usize,
    height: usize,
    flags: Vec<bool>,
}

impl ObjectMask {
    pub fn new(width: usize, height: usize, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != width * height {
            return Err(Error::Dimension(format!(
                "mask {width}x{height} cannot hold {} flags",
                flags.len()
            )));
        }
        Ok(Self {
            width,
            height,
            flags,
        })
    }

    /// Any sample above 127 marks its pixel.
    pub fn from_image(img: &ImageBuffer) -> Self {
        let flags = img
            .data()
            .chunks_exact(img.channels())
            .map(|p| p.iter().any(|&s| s > 127))
            .collect();
        Self {
            width: img.width(),
            height: img.height(),
            flags,
        }
    }

    pub fn from_rect(
        width: usize,
        height: usize,
        x0: usize,
        y0: usize,
        w: usize,
        h: usize,
    ) -> Self {
        let flags = (0..width * height)
            .map(|i| {
                let (x, y) = (i % width, i / width);
                (x0..x0 + w).contains(&x) && (y0..y0 + h).contains(&y)
            })
            .collect();
        Self {
            width,
            height,
            flags,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.flags[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    fn remove_vertical(&self, cols: &[usize]) -> Self {
        let mut flags = Vec::with_capacity((self.width - 1) * self.height);
        for (y, &x) in cols.iter().enumerate() {
            let row = &self.flags[y * self.width..(y + 1) * self.width];
            flags.extend_from_slice(&row[..x]);
            flags.extend_from_slice(&row[x + 1..]);
        }
        Self {
            width: self.width - 1,
            height: self.height,
            flags,
        }
    }
}

/// Energy bias subtracted from masked pixels during object removal. Any
/// value above the largest possible unmasked seam energy works.
pub const OBJECT_BIAS: f64 = 1e6;

/// Removes vertical seams through the masked region until no masked pixel
/// is left. With `restore` the image is then re-enlarged to its original
/// width by seam insertion.
pub fn remove_object(
    img: &ImageBuffer,
    mask: &ObjectMask,
    restore: Option<InsertMode>,
) -> Result<CarveOutcome> {
    if mask.width() != img.width() || mask.height() != img.height() {
        return Err(Error::Dimension(format!(
            "mask is {}x{}, image is {}x{}",
            mask.width(),
            mask.height(),
            img.width(),
            img.height()
        )));
    }
    if mask.count() == 0 {
        return Err(Error::Param("object mask selects no pixels".into()));
    }
    let mut image = img.clone();
    let mut mask = mask.clone();
    let mut steps = Vec::new();
    while mask.count() > 0 {
        if image.width() < 2 {
            return Err(Error::Invariant(
                "object removal consumed the whole image".into(),
            ));
        }
        let mut e = image_energy(&image);
        for (v, &m) in e.values_mut().iter_mut().zip(&mask.flags) {
            if m {
                *v -= OBJECT_BIAS;
            }
        }
        let seam = optimal_seam(&e, Axis::Vertical);
        let energy = seam_energy(&e, &seam)?;
        image = remove_seam(&image, &seam)?;
        mask = mask.remove_vertical(&seam.offsets);
        steps.push(SeamStep {
            seam,
            energy,
            inserted: false,
        });
    }
    if let Some(mode) = restore {
        image = resize_axis(image, Axis::Vertical, img.width(), mode, &mut steps)?;
    }
    Ok(CarveOutcome { image, steps })
}

/// Color used by [`mark_seams`]; gray images get white.
pub const HIGHLIGHT: [u8; 3] = [255, 0, 0];

/// Paints the first `n` successively optimal vertical seams on a copy of
/// the image. Each seam is searched after virtually removing the previous
/// ones, then mapped back to original coordinates.
pub fn mark_seams(img: &ImageBuffer, n: usize) -> Result<ImageBuffer> {
    if n >= img.width() {
        return Err(Error::Param(format!(
            "cannot mark {n} seams on a {}-pixel-wide image",
            img.width()
        )));
    }
    let mut out = img.clone();
    let mut work = img.clone();
    // origin[y][x] = original column of the working image's pixel (x, y)
    let mut origin: Vec<Vec<usize>> = (0..img.height())
        .map(|_| (0..img.width()).collect())
        .collect();
    let color: &[u8] = if img.channels() == 3 {
        &HIGHLIGHT
    } else {
        &[255]
    };
    for _ in 0..n {
        let (next, step) = remove_optimal_seam(&work, Axis::Vertical)?;
        for (y, &x) in step.seam.offsets.iter().enumerate() {
            let ox = origin[y].remove(x);
            out.pixel_mut(ox, y).copy_from_slice(color);
        }
        work = next;
    }
    Ok(out)
}
