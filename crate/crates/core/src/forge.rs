//! Tamper dataset generation, fold assignment and balanced batching.
//!
//! A forged dataset lives in one directory: `<out>/0/<name>.jpg` holds the
//! untouched crops, `<out>/<rate>/<name>.jpg` the seam-carved variants and
//! `<out>/manifest.jsonl` one record per image.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::carver::{carve_to, remove_optimal_seam, Axis, InsertMode};
use crate::error::{Error, Result};
use crate::imaging::{center_crop, decode_image, encode_jpeg, read_image, ImageBuffer};
use crate::rng::{self, substream};

pub const DEFAULT_RATES: [u32; 10] = [3, 6, 9, 12, 15, 18, 21, 30, 40, 50];
pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// How tampered variants are produced from each source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TamperSpec {
    /// Percent of the crop dimension removed, strictly increasing.
    pub rates: Vec<u32>,
    pub crop: (usize, usize),
    pub jpeg_quality: u8,
    pub axis: Axis,
    /// Re-insert seams so variants come back to the crop size.
    pub restore_size: bool,
}

impl Default for TamperSpec {
    fn default() -> Self {
        Self {
            rates: DEFAULT_RATES.to_vec(),
            crop: (224, 224),
            jpeg_quality: 75,
            axis: Axis::Vertical,
            restore_size: false,
        }
    }
}

impl TamperSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(Error::Param("at least one tamper rate is required".into()));
        }
        if let Some(r) = self.rates.iter().find(|&&r| r == 0 || r >= 100) {
            return Err(Error::Param(format!("tamper rate {r}% outside (0, 100)")));
        }
        if self.rates.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Param(
                "tamper rates must be strictly increasing".into(),
            ));
        }
        if self.crop.0 == 0 || self.crop.1 == 0 {
            return Err(Error::Param("crop must be at least 1x1".into()));
        }
        if !(1..=100).contains(&self.jpeg_quality) {
            return Err(Error::Param(format!(
                "JPEG quality {} outside 1..=100",
                self.jpeg_quality
            )));
        }
        if self.seams_for(*self.rates.last().unwrap()) >= self.carved_extent() {
            return Err(Error::Param(
                "largest rate would remove the whole crop".into(),
            ));
        }
        Ok(())
    }

    fn carved_extent(&self) -> usize {
        match self.axis {
            Axis::Vertical => self.crop.0,
            Axis::Horizontal => self.crop.1,
        }
    }

    /// `round(rate / 100 * extent)`, halves rounded up.
    pub fn seams_for(&self, rate: u32) -> usize {
        (rate as usize * self.carved_extent() + 50) / 100
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Tampered,
    Untouched,
}

impl Label {
    /// Training target: 1 for seam-carved, 0 for untouched.
    pub fn target(self) -> f64 {
        match self {
            Label::Tampered => 1.0,
            Label::Untouched => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Tampered => "tampered",
            Label::Untouched => "untouched",
        }
    }
}

/// One manifest line. Field order is the serialized column order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub src: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub rate: u32,
    pub label: Label,
    pub fold: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    pub k: usize,
    pub seed: u64,
}

impl DatasetManifest {
    /// Checks the record-level invariants: labels agree with rates, every
    /// source sits in exactly one fold, paths are unique, no fold is empty.
    pub fn validate(&self) -> Result<()> {
        let mut folds: HashMap<&str, usize> = HashMap::new();
        let mut paths = HashSet::new();
        for r in &self.records {
            if (r.rate == 0) != (r.label == Label::Untouched) {
                return Err(Error::Data(format!(
                    "{}: label does not match rate {}",
                    r.path, r.rate
                )));
            }
            if r.fold >= self.k {
                return Err(Error::Data(format!(
                    "{}: fold {} >= k = {}",
                    r.path, r.fold, self.k
                )));
            }
            if *folds.entry(&r.src).or_insert(r.fold) != r.fold {
                return Err(Error::Data(format!("{} spans more than one fold", r.src)));
            }
            if !paths.insert(&r.path) {
                return Err(Error::Data(format!("duplicate record path {}", r.path)));
            }
        }
        let used: HashSet<usize> = folds.values().copied().collect();
        if used.len() != self.k {
            return Err(Error::Data(format!(
                "only {} of {} folds hold records",
                used.len(),
                self.k
            )));
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses JSON lines; `k` is recovered as one more than the largest fold.
    pub fn from_jsonl(text: &str, seed: u64) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<ManifestRecord>, _>>()?;
        let k = records.iter().map(|r| r.fold + 1).max().unwrap_or(0);
        Ok(Self { records, k, seed })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text, 0)
    }

    /// Distinct sources in first-appearance order.
    pub fn sources(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.src.as_str()))
            .map(|r| r.src.as_str())
            .collect()
    }

    /// Tamper rates present, ascending, without 0.
    pub fn rates(&self) -> Vec<u32> {
        let mut rates: Vec<u32> = self
            .records
            .iter()
            .map(|r| r.rate)
            .filter(|&r| r > 0)
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        rates.sort_unstable();
        rates
    }
}

/// Shuffles `n` items with the seeded forge stream and deals them into `k`
/// folds round-robin, so fold sizes differ by at most one.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, rng::FORGE, 0));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    folds
}

#[derive(Clone, Debug)]
pub struct ForgeOptions {
    pub k: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for ForgeOptions {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 0,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug)]
pub struct ForgeReport {
    pub manifest: DatasetManifest,
    pub failures: Vec<(PathBuf, Error)>,
}

fn unique_names(sources: &[PathBuf]) -> Vec<String> {
    let mut used: HashMap<String, usize> = HashMap::new();
    sources
        .iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("image")
                .to_string();
            let n = used.entry(stem.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                stem
            } else {
                format!("{stem}-{n}")
            }
        })
        .collect()
}

/// Produces the untouched crop and every tamper variant of one source.
/// Returns `(rate, relative path)` pairs, untouched first.
fn forge_one(spec: &TamperSpec, src: &Path, name: &str, out: &Path) -> Result<Vec<(u32, String)>> {
    let img = read_image(src)?;
    let crop = center_crop(&img, spec.crop.0, spec.crop.1)?;
    let untouched_bytes = encode_jpeg(&crop, spec.jpeg_quality)?;
    let mut written = Vec::with_capacity(spec.rates.len() + 1);
    let mut emit = |rate: u32, bytes: &[u8]| -> Result<()> {
        let rel = format!("{rate}/{name}.jpg");
        let path = out.join(&rel);
        std::fs::create_dir_all(path.parent().unwrap())
            .map_err(|e| Error::io(path.parent().unwrap(), e))?;
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push((rate, rel));
        Ok(())
    };
    emit(0, &untouched_bytes)?;

    // Variants are carved from the decoded untouched JPEG and recompressed.
    // The removal sequence for a larger rate extends the one for a smaller
    // rate, so one pass serves every rate.
    let mut work: ImageBuffer = decode_image(&untouched_bytes)?;
    let mut removed = 0;
    for &rate in &spec.rates {
        let target = spec.seams_for(rate);
        while removed < target {
            work = remove_optimal_seam(&work, spec.axis)?.0;
            removed += 1;
        }
        let variant = if spec.restore_size {
            carve_to(&work, spec.crop.0, spec.crop.1, InsertMode::Average)?.image
        } else {
            work.clone()
        };
        emit(rate, &encode_jpeg(&variant, spec.jpeg_quality)?)?;
    }
    Ok(written)
}

/// Builds a tamper dataset under `out` and writes its manifest.
///
/// Sources are processed in path order; a source that fails is reported in
/// [`ForgeReport::failures`] and skipped. Folds are assigned per source so
/// a source and all of its variants always share one fold.
pub fn forge(
    spec: &TamperSpec,
    sources: &[PathBuf],
    out: &Path,
    opts: &ForgeOptions,
) -> Result<ForgeReport> {
    spec.validate()?;
    if opts.k < 2 {
        return Err(Error::Param(format!(
            "fold count must be >= 2, got {}",
            opts.k
        )));
    }
    if sources.is_empty() {
        return Err(Error::Param("no source images given".into()));
    }
    let mut sources = sources.to_vec();
    sources.sort();
    let names = unique_names(&sources);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let results: Vec<Mutex<Option<Result<Vec<(u32, String)>>>>> =
        sources.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let jobs = opts.jobs.clamp(1, sources.len());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= sources.len() {
                    break;
                }
                let r = forge_one(spec, &sources[i], &names[i], out);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });

    let mut done = Vec::new();
    let mut failures = Vec::new();
    for (src, slot) in sources.iter().zip(results) {
        match slot
            .into_inner()
            .unwrap()
            .expect("every source is processed")
        {
            Ok(files) => done.push((src, files)),
            Err(e) => failures.push((src.clone(), e)),
        }
    }
    if done.is_empty() {
        return Err(Error::Forge(format!(
            "none of the {} sources could be processed",
            sources.len()
        )));
    }
    if done.len() < opts.k {
        return Err(Error::Forge(format!(
            "{} usable sources cannot fill {} folds",
            done.len(),
            opts.k
        )));
    }
    let folds = assign_folds(done.len(), opts.k, opts.seed);
    let mut records = Vec::new();
    for ((src, files), fold) in done.into_iter().zip(folds) {
        for (rate, path) in files {
            records.push(ManifestRecord {
                src: src.to_string_lossy().into_owned(),
                path,
                rate,
                label: if rate == 0 {
                    Label::Untouched
                } else {
                    Label::Tampered
                },
                fold,
            });
        }
    }
    let manifest = DatasetManifest {
        records,
        k: opts.k,
        seed: opts.seed,
    };
    manifest.validate()?;
    manifest.write(&out.join(MANIFEST_FILE))?;
    Ok(ForgeReport { manifest, failures })
}

/// Record indices of one cross-validation round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits the manifest into `k` train/test rounds over source images.
///
/// When `k` matches the manifest's own fold count the recorded folds are
/// used; otherwise sources are re-dealt with [`assign_folds`].
pub fn kfold_split(manifest: &DatasetManifest, k: usize) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Param(format!("fold count must be >= 2, got {k}")));
    }
    let sources = manifest.sources();
    if k > sources.len() {
        return Err(Error::Param(format!(
            "{k} folds requested but only {} source images",
            sources.len()
        )));
    }
    let fold_of: HashMap<&str, usize> = if k == manifest.k {
        manifest
            .records
            .iter()
            .map(|r| (r.src.as_str(), r.fold))
            .collect()
    } else {
        let mut sorted = sources.clone();
        sorted.sort_unstable();
        sorted
            .iter()
            .copied()
            .zip(assign_folds(sorted.len(), k, manifest.seed))
            .collect()
    };
    Ok((0..k)
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..manifest.records.len())
                .partition(|&i| fold_of[manifest.records[i].src.as_str()] == fold);
            FoldSplit { fold, train, test }
        })
        .collect())
}

/// Epoch-wise batches holding equal numbers of tampered and untouched
/// records.
///
/// Each epoch covers every record of the smaller class at least once
/// (topping up the last batches with repeats) and subsamples the larger
/// class to match. Batch order depends only on `(seed, epoch)`.
#[derive(Clone, Debug)]
pub struct BalancedBatches {
    tampered: Vec<usize>,
    untouched: Vec<usize>,
    batch_size: usize,
    seed: u64,
}

impl BalancedBatches {
    /// Uses every record not in `held_out` (all records if `None`).
    pub fn new(
        manifest: &DatasetManifest,
        held_out: Option<usize>,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if batch_size == 0 || batch_size % 2 != 0 {
            return Err(Error::Param(format!(
                "batch size must be a positive even number, got {batch_size}"
            )));
        }
        let (mut tampered, mut untouched) = (Vec::new(), Vec::new());
        for (i, r) in manifest.records.iter().enumerate() {
            if Some(r.fold) == held_out {
                continue;
            }
            match r.label {
                Label::Tampered => tampered.push(i),
                Label::Untouched => untouched.push(i),
            }
        }
        if tampered.is_empty() || untouched.is_empty() {
            return Err(Error::Data(
                "balanced batches need both tampered and untouched training records".into(),
            ));
        }
        Ok(Self {
            tampered,
            untouched,
            batch_size,
            seed,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        let half = self.batch_size / 2;
        self.tampered.len().min(self.untouched.len()).div_ceil(half)
    }

    pub fn epoch(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut rng = substream(self.seed, rng::SHUFFLE, epoch as u64);
        let half = self.batch_size / 2;
        let slots = self.batches_per_epoch() * half;
        let mut draw = |pool: &[usize]| {
            let mut out = Vec::with_capacity(slots);
            while out.len() < slots {
                let mut pass = pool.to_vec();
                pass.shuffle(&mut rng);
                out.extend(pass.into_iter().take(slots - out.len()));
            }
            out
        };
        let untouched = draw(&self.untouched);
        let tampered = draw(&self.tampered);
        untouched
            .chunks(half)
            .zip(tampered.chunks(half))
            .map(|(u, t)| u.iter().chain(t).copied().collect())
            .collect()
    }
}

/// Records grouped by source, for callers that need per-source views.
pub fn records_by_source(manifest: &DatasetManifest) -> BTreeMap<&str, Vec<usize>> {
    let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        map.entry(r.src.as_str()).or_default().push(i);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn synthetic_manifest(sources: usize, k: usize, seed: u64) -> DatasetManifest {
        let folds = assign_folds(sources, k, seed);
        let mut records = Vec::new();
        for (s, fold) in folds.into_iter().enumerate() {
            for rate in std::iter::once(0).chain(DEFAULT_RATES) {
                records.push(ManifestRecord {
                    src: format!("src/{s:04}.png"),
                    path: format!("{rate}/{s:04}.jpg"),
                    rate,
                    label: if rate == 0 {
                        Label::Untouched
                    } else {
                        Label::Tampered
                    },
                    fold,
                });
            }
        }
        DatasetManifest { records, k, seed }
    }

    #[test]
    fn seam_counts_round_half_up() {
        let spec = TamperSpec::default();
        assert_eq!(spec.seams_for(3), 7);
        assert_eq!(spec.seams_for(50), 112);
        let small = TamperSpec {
            crop: (64, 64),
            ..TamperSpec::default()
        };
        assert_eq!(small.seams_for(3), 2);
        assert_eq!(small.seams_for(50), 32);
        // 25% of 2 = 0.5 rounds up
        let tiny = TamperSpec {
            rates: vec![25],
            crop: (2, 2),
            ..TamperSpec::default()
        };
        assert_eq!(tiny.seams_for(25), 1);
    }

    #[test]
    fn spec_validation() {
        assert!(TamperSpec::default().validate().is_ok());
        let bad = |rates: Vec<u32>| {
            TamperSpec {
                rates,
                ..TamperSpec::default()
            }
            .validate()
        };
        assert!(bad(vec![]).is_err());
        assert!(bad(vec![0, 3]).is_err());
        assert!(bad(vec![6, 3]).is_err());
        assert!(bad(vec![3, 3]).is_err());
        assert!(bad(vec![100]).is_err());
        let q = TamperSpec {
            jpeg_quality: 0,
            ..TamperSpec::default()
        };
        assert!(q.validate().is_err());
    }

    #[test]
    fn fold_sizes_are_even() {
        let folds = assign_folds(5150, 5, 1);
        for f in 0..5 {
            assert_eq!(folds.iter().filter(|&&x| x == f).count(), 1030);
        }
        let folds = assign_folds(11, 3, 9);
        let sizes: Vec<usize> = (0..3)
            .map(|f| folds.iter().filter(|&&x| x == f).count())
            .collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn full_scale_manifest_counts() {
        let m = synthetic_manifest(5150, 5, 3);
        m.validate().unwrap();
        let untouched = m
            .records
            .iter()
            .filter(|r| r.label == Label::Untouched)
            .count();
        assert_eq!(untouched, 5150);
        assert_eq!(m.records.len() - untouched, 51_500);
        for split in kfold_split(&m, 5).unwrap() {
            let test_sources: HashSet<&str> = split
                .test
                .iter()
                .map(|&i| m.records[i].src.as_str())
                .collect();
            assert_eq!(test_sources.len(), 1030);
        }
    }

    #[test]
    fn kfold_partitions_sources() {
        let m = synthetic_manifest(10, 5, 4);
        let splits = kfold_split(&m, 5).unwrap();
        let mut seen = HashSet::new();
        for s in &splits {
            let srcs: HashSet<&str> = s.test.iter().map(|&i| m.records[i].src.as_str()).collect();
            assert_eq!(srcs.len(), 2);
            for src in &srcs {
                assert!(seen.insert(src.to_string()), "{src} in two test folds");
            }
            let train: HashSet<&str> = s.train.iter().map(|&i| m.records[i].src.as_str()).collect();
            assert!(train.is_disjoint(&srcs));
            assert_eq!(s.train.len() + s.test.len(), m.records.len());
        }
        assert_eq!(seen.len(), 10);

        // re-dealt with a different k
        let splits = kfold_split(&m, 2).unwrap();
        assert_eq!(splits.len(), 2);
        assert!(matches!(kfold_split(&m, 11), Err(Error::Param(_))));
        assert!(matches!(kfold_split(&m, 1), Err(Error::Param(_))));
    }

    #[test]
    fn batches_are_balanced_and_reproducible() {
        let m = synthetic_manifest(20, 5, 0);
        let b = BalancedBatches::new(&m, Some(0), 8, 42).unwrap();
        let e0 = b.epoch(0);
        assert_eq!(e0, b.epoch(0));
        assert_ne!(e0, b.epoch(1));
        let mut untouched_seen = HashSet::new();
        for batch in &e0 {
            assert_eq!(batch.len(), 8);
            let tampered = batch
                .iter()
                .filter(|&&i| m.records[i].label == Label::Tampered)
                .count();
            assert_eq!(tampered, 4);
            for &i in batch {
                assert_ne!(m.records[i].fold, 0);
                if m.records[i].label == Label::Untouched {
                    untouched_seen.insert(i);
                }
            }
        }
        assert_eq!(untouched_seen.len(), 16);
        assert!(matches!(
            BalancedBatches::new(&m, None, 7, 0),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn single_class_is_a_data_error() {
        let mut m = synthetic_manifest(5, 5, 0);
        m.records.retain(|r| r.rate == 0);
        assert!(matches!(
            BalancedBatches::new(&m, None, 4, 0),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn jsonl_field_order_and_round_trip() {
        let m = synthetic_manifest(5, 5, 7);
        let text = m.to_jsonl();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with(r#"{"src":"#));
        let keys: Vec<&str> = ["\"src\"", "\"path\"", "\"rate\"", "\"label\"", "\"fold\""].to_vec();
        let pos: Vec<usize> = keys.iter().map(|k| first.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|p| p[0] < p[1]));
        assert!(first.contains(r#""label":"untouched""#));
        let back = DatasetManifest::from_jsonl(&text, 7).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn leakage_is_detected() {
        let mut m = synthetic_manifest(5, 5, 0);
        m.records[3].fold = (m.records[3].fold + 1) % 5;
        assert!(matches!(m.validate(), Err(Error::Data(_))));
    }
}
