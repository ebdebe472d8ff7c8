//! SGDR training loop, per-rate evaluation and the metric log.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{augment, AugmentConfig};
use crate::error::{Error, Result};
use crate::forge::{BalancedBatches, DatasetManifest, Label};
use crate::imaging::{normalize, read_image, NormalizedImage};
use crate::nn::{read_checkpoint, write_checkpoint, Checkpoint, Network, Tensor};
use crate::rng::{self, substream};

/// Cosine learning rate with warm restarts; the peak shrinks by `decay`
/// after every cycle and never drops below `lr_min`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdrSchedule {
    pub lr_max0: f64,
    pub lr_min: f64,
    pub decay: f64,
    /// Epochs in the first cycle.
    pub period0: f64,
    pub period_mult: f64,
}

impl Default for SgdrSchedule {
    fn default() -> Self {
        Self {
            lr_max0: 1e-2,
            lr_min: 1e-5,
            decay: 0.3,
            period0: 10.0,
            period_mult: 1.0,
        }
    }
}

impl SgdrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min >= 0.0 && self.lr_min < self.lr_max0) {
            return Err(Error::Param(format!(
                "need 0 <= lr_min < lr_max, got {} and {}",
                self.lr_min, self.lr_max0
            )));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return Err(Error::Param(format!("decay {} outside [0, 1)", self.decay)));
        }
        if !(self.period0 >= 1.0) || !(self.period_mult >= 1.0) {
            return Err(Error::Param(format!(
                "period {} must be >= 1 and period multiplier {} >= 1",
                self.period0, self.period_mult
            )));
        }
        Ok(())
    }

    /// Length of cycle `c` in epochs.
    pub fn period(&self, cycle: usize) -> f64 {
        (0..cycle).fold(self.period0, |p, _| p * self.period_mult)
    }

    /// Peak of cycle `c`: `lr_max0` reduced by `decay` once per cycle.
    pub fn lr_max(&self, cycle: usize) -> f64 {
        let mut peak = self.lr_max0;
        for _ in 0..cycle {
            peak -= peak * self.decay;
        }
        peak.max(self.lr_min)
    }

    /// Learning rate `t` epochs into cycle `c`.
    pub fn lr_at(&self, cycle: usize, t: f64) -> f64 {
        let peak = self.lr_max(cycle);
        let phase = std::f64::consts::PI * t / self.period(cycle);
        // written from the peak down so that t = 0 returns the peak exactly
        peak - 0.5 * (peak - self.lr_min) * (1.0 - phase.cos())
    }

    /// Splits a global epoch position into `(cycle, t)`.
    pub fn locate(&self, epoch: f64) -> (usize, f64) {
        let (mut cycle, mut start) = (0, 0.0);
        loop {
            let p = self.period(cycle);
            if epoch < start + p {
                return (cycle, epoch - start);
            }
            start += p;
            cycle += 1;
        }
    }

    pub fn lr_at_epoch(&self, epoch: f64) -> f64 {
        let (c, t) = self.locate(epoch);
        self.lr_at(c, t)
    }
}

/// `v ← μv + g; w ← w − lr·v`.
pub fn sgd_step(w: &mut [f32], v: &mut [f32], g: &[f32], lr: f32, momentum: f32) -> Result<()> {
    if w.len() != v.len() || w.len() != g.len() {
        return Err(Error::Shape(format!(
            "sgd step on {} weights, {} velocities, {} gradients",
            w.len(),
            v.len(),
            g.len()
        )));
    }
    for ((w, v), &g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
        *v = momentum * *v + g;
        *w -= lr * *v;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub schedule: SgdrSchedule,
    pub seed: u64,
    /// Fold used for validation and excluded from training.
    pub held_out: Option<usize>,
    pub augment: AugmentConfig,
    /// Where `best.ckpt` and `last.ckpt` go; nothing is written if unset.
    pub checkpoint_dir: Option<PathBuf>,
    /// Worker threads for decoding and evaluation.
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            momentum: 0.9,
            schedule: SgdrSchedule::default(),
            seed: 0,
            held_out: Some(0),
            augment: AugmentConfig::default(),
            checkpoint_dir: None,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.augment.validate()?;
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return Err(Error::Param(format!(
                "batch size must be a positive even number, got {}",
                self.batch_size
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Param(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Learning rate at the first step of the epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

pub const LOG_HEADER: &str = "epoch,lr,train_loss,train_acc,val_acc";

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for e in log {
        let val = e.val_acc.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(
            out,
            "{},{:.9},{:.6},{:.6},{}",
            e.epoch, e.lr, e.train_loss, e.train_acc, val
        )
        .unwrap();
    }
    out
}

/// Manifest plus every record decoded and normalized, in record order.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub images: Vec<NormalizedImage>,
}

impl LoadedDataset {
    /// Decodes every record path relative to `root`.
    pub fn load(manifest: DatasetManifest, root: &Path, jobs: usize) -> Result<Self> {
        let paths: Vec<PathBuf> = manifest
            .records
            .iter()
            .map(|r| root.join(&r.path))
            .collect();
        let images = parallel_map(&paths, jobs, |p| Ok(normalize(&read_image(p)?)))?;
        Ok(Self { manifest, images })
    }

    pub fn indices_in(&self, fold: Option<usize>) -> Vec<usize> {
        (0..self.images.len())
            .filter(|&i| fold.is_none_or(|f| self.manifest.records[i].fold == f))
            .collect()
    }
}

/// Order-preserving map over `items` on up to `jobs` scoped threads.
pub(crate) fn parallel_map<I: Sync, O: Send>(
    items: &[I],
    jobs: usize,
    f: impl Fn(&I) -> Result<O> + Sync,
) -> Result<Vec<O>> {
    let jobs = jobs.clamp(1, items.len().max(1));
    let chunk = items.len().div_ceil(jobs).max(1);
    let results: Vec<Result<Vec<O>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(&f).collect::<Result<Vec<O>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn stack_images(images: &[&NormalizedImage]) -> Result<Tensor<f32>> {
    let (w, h, c) = (images[0].width, images[0].height, images[0].channels);
    let mut data = Vec::with_capacity(images.len() * w * h * c);
    for img in images {
        if (img.width, img.height, img.channels) != (w, h, c) {
            return Err(Error::Shape("images in one stack differ in size".into()));
        }
        data.extend_from_slice(&img.data);
    }
    Tensor::from_vec(&[images.len(), h, w, c], data)
}

/// Groups positions by image size, keeping first-appearance order.
fn shape_groups(images: &[&NormalizedImage]) -> Vec<Vec<usize>> {
    let mut order: Vec<(usize, usize, usize)> = Vec::new();
    let mut groups: BTreeMap<(usize, usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, img) in images.iter().enumerate() {
        let key = (img.height, img.width, img.channels);
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(i);
    }
    order
        .into_iter()
        .map(|k| groups.remove(&k).unwrap())
        .collect()
}

const INFER_CHUNK: usize = 32;

/// Tampering probabilities for `images`, batched by size and spread over
/// `jobs` threads. Results do not depend on `jobs`.
pub fn predict_images(
    net: &Network<f32>,
    images: &[&NormalizedImage],
    jobs: usize,
) -> Result<Vec<f64>> {
    let mut chunks = Vec::new();
    for group in shape_groups(images) {
        for c in group.chunks(INFER_CHUNK) {
            chunks.push(c.to_vec());
        }
    }
    let probs = parallel_map(&chunks, jobs, |idx| {
        let refs: Vec<&NormalizedImage> = idx.iter().map(|&i| images[i]).collect();
        net.infer(&stack_images(&refs)?)
    })?;
    let mut out = vec![0.0; images.len()];
    for (idx, p) in chunks.iter().zip(probs) {
        for (&i, v) in idx.iter().zip(p) {
            out[i] = f64::from(v);
        }
    }
    Ok(out)
}

/// Decision rule: `p >= 0.5` means tampered.
pub fn is_tampered(p: f64) -> bool {
    p >= 0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateAccuracy {
    pub rate: u32,
    pub correct: usize,
    pub total: usize,
}

impl RateAccuracy {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Per-rate accuracies: each rate's variants scored together with the
/// untouched images of the same records subset. `overall` is the mean of
/// the rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<RateAccuracy>,
    pub overall: f64,
}

impl EvalReport {
    pub fn rate(&self, rate: u32) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.rate == rate)
            .map(RateAccuracy::accuracy)
    }

    /// `rate,accuracy` in percent with two decimals, one row per rate and a
    /// closing `overall` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rate,accuracy\n");
        for r in &self.rows {
            writeln!(out, "{},{:.2}", r.rate, 100.0 * r.accuracy()).unwrap();
        }
        writeln!(out, "overall,{:.2}", 100.0 * self.overall).unwrap();
        out
    }
}

/// Scores `tampered[i]` (the decision for `subset[i]`) against the labels.
pub fn evaluate_predictions(
    manifest: &DatasetManifest,
    subset: &[usize],
    tampered: &[bool],
) -> Result<EvalReport> {
    if subset.len() != tampered.len() {
        return Err(Error::Shape(format!(
            "{} decisions for {} records",
            tampered.len(),
            subset.len()
        )));
    }
    let mut untouched = (0, 0);
    let mut per_rate: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (&i, &t) in subset.iter().zip(tampered) {
        let r = &manifest.records[i];
        let ok = t == (r.label == Label::Tampered);
        let slot = match r.label {
            Label::Untouched => &mut untouched,
            Label::Tampered => per_rate.entry(r.rate).or_default(),
        };
        slot.0 += usize::from(ok);
        slot.1 += 1;
    }
    if untouched.1 == 0 || per_rate.is_empty() {
        return Err(Error::Data(
            "evaluation needs untouched and tampered records".into(),
        ));
    }
    let rows: Vec<RateAccuracy> = per_rate
        .into_iter()
        .map(|(rate, (c, n))| RateAccuracy {
            rate,
            correct: c + untouched.0,
            total: n + untouched.1,
        })
        .collect();
    let overall = rows.iter().map(RateAccuracy::accuracy).sum::<f64>() / rows.len() as f64;
    Ok(EvalReport { rows, overall })
}

/// Evaluates `net` on the records of `fold` (every record if `None`).
pub fn evaluate(
    data: &LoadedDataset,
    net: &Network<f32>,
    fold: Option<usize>,
    jobs: usize,
) -> Result<EvalReport> {
    let subset = data.indices_in(fold);
    let images: Vec<&NormalizedImage> = subset.iter().map(|&i| &data.images[i]).collect();
    let probs = predict_images(net, &images, jobs)?;
    let decisions: Vec<bool> = probs.into_iter().map(is_tampered).collect();
    evaluate_predictions(&data.manifest, &subset, &decisions)
}

/// Progress carried across epochs and through checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub step: usize,
    pub cycle: usize,
    pub best_val: Option<f64>,
    pub log: Vec<EpochLog>,
}

pub struct TrainOutcome {
    pub net: Network<f32>,
    pub state: TrainState,
}

const MOMENTUM_PREFIX: &str = "momentum/";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

fn save(
    net: &mut Network<f32>,
    velocity: &[Tensor<f32>],
    state: &TrainState,
    cfg: &TrainConfig,
    path: &Path,
) -> Result<()> {
    let meta = serde_json::json!({ "train": state, "config": cfg });
    let mut ck = Checkpoint::from_network(net, meta);
    let names: Vec<String> = net.params_mut().into_iter().map(|(n, _)| n).collect();
    for (n, v) in names.into_iter().zip(velocity) {
        ck.tensors
            .push((format!("{MOMENTUM_PREFIX}{n}"), v.clone()));
    }
    write_checkpoint(path, &ck)
}

/// Restores weights, optimizer momentum and progress from a checkpoint
/// written by [`train`].
pub fn load_training_checkpoint(
    path: &Path,
) -> Result<(Network<f32>, Vec<Tensor<f32>>, TrainState)> {
    let ck: Checkpoint<f32> = read_checkpoint(path)?;
    let mut net = ck.to_network()?;
    let state: TrainState = serde_json::from_value(
        ck.meta
            .get("train")
            .cloned()
            .ok_or_else(|| Error::Checkpoint("no training state in checkpoint".into()))?,
    )
    .map_err(|e| Error::Checkpoint(format!("training state: {e}")))?;
    let mut velocity = Vec::new();
    for (n, _) in net.params_mut() {
        let v = ck
            .tensor(&format!("{MOMENTUM_PREFIX}{n}"))
            .ok_or_else(|| Error::Checkpoint(format!("no momentum for `{n}`")))?;
        velocity.push(v.clone());
    }
    Ok((net, velocity, state))
}

/// Runs one step on `batch` and returns the summed loss and the number of
/// correct decisions.
fn train_step(
    net: &mut Network<f32>,
    data: &LoadedDataset,
    batch: &[usize],
    cfg: &TrainConfig,
    aug_base: u64,
) -> Result<(f64, usize)> {
    let augmented = parallel_map(
        &batch.iter().enumerate().collect::<Vec<_>>(),
        cfg.jobs,
        |&(j, &i)| {
            let mut rng = substream(cfg.seed, rng::AUGMENT, aug_base + j as u64);
            Ok(augment(&data.images[i], &cfg.augment, &mut rng)?.0)
        },
    )?;
    let refs: Vec<&NormalizedImage> = augmented.iter().collect();
    let weight = 1.0 / batch.len() as f32;
    let (mut loss, mut correct) = (0.0, 0);
    for group in shape_groups(&refs) {
        let x = stack_images(&group.iter().map(|&j| refs[j]).collect::<Vec<_>>())?;
        let targets: Vec<f32> = group
            .iter()
            .map(|&j| {
                let r = &data.manifest.records[batch[j]];
                // 1 = seam-carved, 0 = untouched
                debug_assert_eq!(r.label == Label::Tampered, r.rate > 0);
                r.label.target() as f32
            })
            .collect();
        let (losses, probs) = net.accumulate_gradients(x, &targets, weight)?;
        loss += losses.iter().map(|&l| f64::from(l)).sum::<f64>();
        correct += probs
            .iter()
            .zip(&targets)
            .filter(|(&p, &y)| is_tampered(f64::from(p)) == (y == 1.0))
            .count();
    }
    Ok((loss, correct))
}

/// Trains `net` for `cfg.epochs` epochs in total, continuing from
/// `resume` (weights, momentum and progress from a previous run's
/// checkpoint) when given.
///
/// Everything random derives from `cfg.seed`, the epoch and the step, so
/// interrupting and resuming at an epoch boundary reproduces the
/// uninterrupted run exactly.
pub fn train(
    data: &LoadedDataset,
    net: Network<f32>,
    cfg: &TrainConfig,
    resume: Option<(Vec<Tensor<f32>>, TrainState)>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let batches = BalancedBatches::new(&data.manifest, cfg.held_out, cfg.batch_size, cfg.seed)?;
    let mut net = net;
    let (mut velocity, mut state) = match resume {
        Some(r) => r,
        None => {
            let v = net
                .params_mut()
                .into_iter()
                .map(|(_, p)| Tensor::zeros(p.value.shape()))
                .collect();
            (
                v,
                TrainState {
                    epoch: 0,
                    step: 0,
                    cycle: 0,
                    best_val: None,
                    log: Vec::new(),
                },
            )
        }
    };
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let per_epoch = batches.batches_per_epoch();
    let momentum = cfg.momentum as f32;
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let plan = batches.epoch(epoch);
        let mut lr_start = None;
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0, 0);
        for (s, batch) in plan.iter().enumerate() {
            let pos = epoch as f64 + s as f64 / per_epoch as f64;
            let (cycle, t) = cfg.schedule.locate(pos);
            let lr = cfg.schedule.lr_at(cycle, t);
            lr_start.get_or_insert(lr);
            state.cycle = cycle;

            net.zero_grad();
            let aug_base = ((epoch as u64) << 32) | (s * cfg.batch_size) as u64;
            let (l, c) = train_step(&mut net, data, batch, cfg, aug_base)?;
            loss_sum += l;
            correct += c;
            seen += batch.len();
            for ((_, p), v) in net.params_mut().into_iter().zip(velocity.iter_mut()) {
                let g = p.grad.data().to_vec();
                sgd_step(p.value.data_mut(), v.data_mut(), &g, lr as f32, momentum)?;
            }
            state.step += 1;
        }
        let val_acc = match cfg.held_out {
            Some(f) => Some(evaluate(data, &net, Some(f), cfg.jobs)?.overall),
            None => None,
        };
        state.epoch += 1;
        state.log.push(EpochLog {
            epoch: state.epoch,
            lr: lr_start.unwrap_or(0.0),
            train_loss: loss_sum / seen.max(1) as f64,
            train_acc: correct as f64 / seen.max(1) as f64,
            val_acc,
        });
        let improved = match (val_acc, state.best_val) {
            (Some(v), Some(b)) => v > b,
            (Some(_), None) => true,
            _ => false,
        };
        if improved {
            state.best_val = val_acc;
        }
        if let Some(dir) = &cfg.checkpoint_dir {
            if improved {
                save(&mut net, &velocity, &state, cfg, &dir.join(BEST_CHECKPOINT))?;
            }
            save(&mut net, &velocity, &state, cfg, &dir.join(LAST_CHECKPOINT))?;
        }
    }
    net.clear_caches();
    Ok(TrainOutcome { net, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::ManifestRecord;

    #[test]
    fn schedule_anchors() {
        let s = SgdrSchedule::default();
        assert_eq!(s.lr_at(0, 0.0), 1e-2);
        assert_eq!(s.lr_at(1, 0.0), 7e-3);
        assert_eq!(s.lr_max(2), 4.9e-3);
        assert!((s.lr_at(0, 5.0) - 5.005e-3).abs() < 1e-12);
        assert_eq!(s.locate(0.0), (0, 0.0));
        assert_eq!(s.locate(10.0), (1, 0.0));
        assert_eq!(s.locate(25.5), (2, 5.5));
    }

    #[test]
    fn schedule_shape() {
        let s = SgdrSchedule::default();
        for c in 0..4 {
            let mut prev = f64::INFINITY;
            for i in 0..100 {
                let lr = s.lr_at(c, i as f64 / 10.0);
                assert!(lr < prev && lr > s.lr_min);
                prev = lr;
            }
            assert!(prev < s.lr_at(c + 1, 0.0), "restart jumps up");
        }
        let floor = SgdrSchedule { decay: 0.99, ..s };
        assert_eq!(floor.lr_max(5), floor.lr_min);
    }

    #[test]
    fn period_multiplier() {
        let s = SgdrSchedule {
            period_mult: 2.0,
            ..SgdrSchedule::default()
        };
        assert_eq!(s.period(2), 40.0);
        assert_eq!(s.locate(29.0), (1, 19.0));
        assert_eq!(s.locate(30.0), (2, 0.0));
    }

    #[test]
    fn sgd_arithmetic() {
        let (mut w, mut v) = ([1.0f32], [0.0f32]);
        sgd_step(&mut w, &mut v, &[2.0], 0.1, 0.0).unwrap();
        assert!((w[0] - 0.8).abs() < 1e-7);

        let (mut w, mut v) = ([3.0f32, -1.0], [0.0f32; 2]);
        sgd_step(&mut w, &mut v, &[0.0, 0.0], 0.5, 0.9).unwrap();
        assert_eq!(w, [3.0, -1.0]);

        // v1 = 1, w1 = 1 - 0.1; v2 = 0.9 + 0.5, w2 = w1 - 0.1 * 1.4
        let (mut w, mut v) = ([1.0f32], [0.0f32]);
        sgd_step(&mut w, &mut v, &[1.0], 0.1, 0.9).unwrap();
        sgd_step(&mut w, &mut v, &[0.5], 0.1, 0.9).unwrap();
        assert!((v[0] - 1.4).abs() < 1e-6);
        assert!((w[0] - 0.76).abs() < 1e-6);

        assert!(sgd_step(&mut [0.0], &mut [0.0, 0.0], &[0.0], 0.1, 0.9).is_err());
    }

    fn toy_manifest() -> DatasetManifest {
        let mut records = Vec::new();
        for s in 0..4 {
            for rate in [0u32, 3, 50] {
                records.push(ManifestRecord {
                    src: format!("s{s}"),
                    path: format!("{rate}/s{s}.jpg"),
                    rate,
                    label: if rate == 0 {
                        Label::Untouched
                    } else {
                        Label::Tampered
                    },
                    fold: s % 2,
                });
            }
        }
        DatasetManifest {
            records,
            k: 2,
            seed: 0,
        }
    }

    #[test]
    fn perfect_and_constant_classifiers() {
        let m = toy_manifest();
        let subset: Vec<usize> = (0..m.records.len()).collect();
        let truth: Vec<bool> = m
            .records
            .iter()
            .map(|r| r.label == Label::Tampered)
            .collect();
        let perfect = evaluate_predictions(&m, &subset, &truth).unwrap();
        assert!(perfect.rows.iter().all(|r| r.accuracy() == 1.0));
        assert_eq!(perfect.overall, 1.0);
        let csv = perfect.to_csv();
        assert_eq!(csv, "rate,accuracy\n3,100.00\n50,100.00\noverall,100.00\n");

        // constant 0.5 is "tampered" under the tie rule
        let constant = vec![is_tampered(0.5); subset.len()];
        let r = evaluate_predictions(&m, &subset, &constant).unwrap();
        assert!(r.rows.iter().all(|r| r.accuracy() == 0.5));
    }

    #[test]
    fn evaluation_needs_both_classes() {
        let m = toy_manifest();
        let only_untouched: Vec<usize> = (0..m.records.len()).step_by(3).collect();
        let d = vec![false; only_untouched.len()];
        assert!(matches!(
            evaluate_predictions(&m, &only_untouched, &d),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn log_format() {
        let log = vec![EpochLog {
            epoch: 1,
            lr: 0.01,
            train_loss: 0.5,
            train_acc: 0.75,
            val_acc: None,
        }];
        assert_eq!(
            log_csv(&log),
            "epoch,lr,train_loss,train_acc,val_acc\n1,0.010000000,0.500000,0.750000,\n"
        );
    }
}
