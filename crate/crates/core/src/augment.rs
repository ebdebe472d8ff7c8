//! Training-time augmentations on normalized images: horizontal flip,
//! vertical flip, clamped Gaussian noise and a random black column, each
//! drawn independently and applied in that order.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::NormalizedImage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub p_flip_h: f64,
    pub p_flip_v: f64,
    pub p_noise: f64,
    pub p_column: f64,
    /// In normalized units.
    pub noise_sigma: f64,
    pub column_width: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_flip_h: 0.5,
            p_flip_v: 0.5,
            p_noise: 0.5,
            p_column: 0.5,
            noise_sigma: 0.2,
            column_width: 10,
        }
    }
}

impl AugmentConfig {
    /// Every transform disabled.
    pub fn none() -> Self {
        Self {
            p_flip_h: 0.0,
            p_flip_v: 0.0,
            p_noise: 0.0,
            p_column: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_flip_h", self.p_flip_h),
            ("p_flip_v", self.p_flip_v),
            ("p_noise", self.p_noise),
            ("p_column", self.p_column),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Param(format!("{name} = {p} is not a probability")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Param(format!(
                "noise sigma {} is invalid",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Which transforms fire for one image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Decisions {
    pub flip_h: bool,
    pub flip_v: bool,
    pub noise: bool,
    pub column: bool,
}

impl Decisions {
    pub fn draw(cfg: &AugmentConfig, rng: &mut impl Rng) -> Self {
        Self {
            flip_h: rng.random_bool(cfg.p_flip_h),
            flip_v: rng.random_bool(cfg.p_flip_v),
            noise: rng.random_bool(cfg.p_noise),
            column: rng.random_bool(cfg.p_column),
        }
    }
}

/// Applies already-drawn decisions; `rng` feeds the noise samples and the
/// column position.
pub fn apply(
    img: &mut NormalizedImage,
    decisions: Decisions,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<()> {
    if img.width <= cfg.column_width {
        return Err(Error::Param(format!(
            "image width {} must exceed the {}-pixel black column",
            img.width, cfg.column_width
        )));
    }
    if decisions.flip_h {
        img.flip_horizontal();
    }
    if decisions.flip_v {
        img.flip_vertical();
    }
    if decisions.noise {
        let normal = Normal::new(0.0, cfg.noise_sigma)
            .map_err(|e| Error::Param(format!("noise sigma: {e}")))?;
        for s in &mut img.data {
            let noisy = f64::from(*s) + normal.sample(rng);
            *s = noisy.clamp(-1.0, 1.0) as f32;
        }
    }
    if decisions.column {
        let start = rng.random_range(0..=img.width - cfg.column_width);
        let c = img.channels;
        for y in 0..img.height {
            let row = (y * img.width + start) * c;
            img.data[row..row + cfg.column_width * c].fill(-1.0);
        }
    }
    Ok(())
}

/// Draws decisions and applies them, returning the augmented copy together
/// with what was applied.
pub fn augment(
    img: &NormalizedImage,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<(NormalizedImage, Decisions)> {
    cfg.validate()?;
    let decisions = Decisions::draw(cfg, rng);
    let mut out = img.clone();
    apply(&mut out, decisions, cfg, rng)?;
    Ok((out, decisions))
}
