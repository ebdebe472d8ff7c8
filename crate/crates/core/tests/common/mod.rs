#![allow(dead_code)]

use std::path::{Path, PathBuf};

use seamforge::imaging::write_png;
use seamforge::synth::procedural_image;

/// Writes `n` procedural `size`×`size` PNG sources under `dir`.
pub fn write_sources(dir: &Path, n: u64, size: usize, seed: u64) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    (0..n)
        .map(|i| {
            let p = dir.join(format!("src{i:02}.png"));
            write_png(&p, &procedural_image(seed * 100 + i, size, size)).unwrap();
            p
        })
        .collect()
}
