//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are printed even when
//! everything passes. Exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use seamforge::augment::{apply, augment, AugmentConfig, Decisions};
use seamforge::carver::{cumulative_energy, optimal_seam};
use seamforge::energy::{gradient_energy, seam_energy};
use seamforge::forge::{
    assign_folds, forge, kfold_split, BalancedBatches, ForgeOptions, DEFAULT_RATES,
};
use seamforge::imaging::{read_image, write_png, NormalizedImage};
use seamforge::nn::{
    bce_loss, build_detector, separable_conv_forward, HeadKind, NormKind, Padding, Tensor,
};
use seamforge::rng::{self, substream};
use seamforge::shallow::{evaluate_svm, SvmConfig};
use seamforge::synth::procedural_image;
use seamforge::trainer::{
    evaluate, load_training_checkpoint, log_csv, train, LoadedDataset, SgdrSchedule, TrainOutcome,
    LAST_CHECKPOINT,
};
use seamforge::{
    Axis, DatasetManifest, DetectorConfig, EnergyMap, ImageBuffer, Label, ManifestRecord, Network,
    TamperSpec, TapPoint, TrainConfig,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

// ---------------------------------------------------------------- seams

fn random_map(rng: &mut impl Rng, w: usize, h: usize, integer: bool) -> EnergyMap {
    let values = (0..w * h)
        .map(|_| {
            if integer {
                f64::from(rng.random_range(0u32..=255))
            } else {
                rng.random_range(0.0..100.0)
            }
        })
        .collect();
    EnergyMap::new(w, h, values).unwrap()
}

/// Minimum over every 8-connected vertical seam, by enumeration.
fn brute_force_min(e: &EnergyMap) -> f64 {
    fn walk(e: &EnergyMap, y: usize, x: usize, acc: f64, best: &mut f64) {
        let acc = acc + e.at(x, y);
        if y + 1 == e.height() {
            *best = best.min(acc);
            return;
        }
        for nx in x.saturating_sub(1)..=(x + 1).min(e.width() - 1) {
            walk(e, y + 1, nx, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    for x in 0..e.width() {
        walk(e, 0, x, 0.0, &mut best);
    }
    best
}

fn criterion_1() -> Verdict {
    let mut rng = substream(1, "acceptance", 1);
    let mut failures = 0;
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let e = random_map(&mut rng, w, h, true);
        let axis = if rng.random_bool(0.5) {
            Axis::Vertical
        } else {
            Axis::Horizontal
        };
        let got = seam_energy(&e, &optimal_seam(&e, axis)).unwrap();
        let want = match axis {
            Axis::Vertical => brute_force_min(&e),
            Axis::Horizontal => brute_force_min(&e.transpose()),
        };
        failures += usize::from(got != want);
    }
    verdict(
        failures == 0,
        format!("1000 maps up to 8x8, {failures} failures"),
    )
}

fn criterion_2() -> Verdict {
    let mut rng = substream(1, "acceptance", 2);
    let mut mismatches = 0;
    for _ in 0..100 {
        let e = random_map(&mut rng, 6, 6, false);
        let table = cumulative_energy(&e, Axis::Vertical);
        let mut m = vec![0.0; 36];
        for y in 0..6usize {
            for x in 0..6usize {
                let prev = if y == 0 {
                    0.0
                } else {
                    (x.saturating_sub(1)..=(x + 1).min(5))
                        .map(|px| m[(y - 1) * 6 + px])
                        .fold(f64::INFINITY, f64::min)
                };
                m[y * 6 + x] = e.at(x, y) + prev;
            }
        }
        mismatches += usize::from(table.values != m);
    }
    verdict(
        mismatches == 0,
        format!("100 random 6x6 maps, {mismatches} mismatches"),
    )
}

fn criterion_3() -> Verdict {
    let mut rng = substream(1, "acceptance", 3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k: u8 = rng.random_range(1..=8);
        let (w, h) = (rng.random_range(1..=24), rng.random_range(1..=24));
        let base: Vec<u8> = (0..w * h).map(|_| rng.random_range(0..=255 / k)).collect();
        let scaled: Vec<u8> = base.iter().map(|&v| v * k).collect();
        let e1 = gradient_energy(&ImageBuffer::new(w, h, 1, base).unwrap()).unwrap();
        let ek = gradient_energy(&ImageBuffer::new(w, h, 1, scaled).unwrap()).unwrap();
        for (a, b) in e1.values().iter().zip(ek.values()) {
            let want = f64::from(k) * a;
            worst = worst.max((b - want).abs() / want.abs().max(f64::MIN_POSITIVE));
        }
    }
    verdict(
        worst <= 1e-9,
        format!("100 images, max relative deviation {worst:e}"),
    )
}

// -------------------------------------------------------------- network

fn mean_loss(net: &Network<f64>, x: &Tensor<f64>, y: &[f64]) -> f64 {
    let p = net.infer(x).unwrap();
    p.iter()
        .zip(y)
        .map(|(&p, &y)| bce_loss(p, y).0)
        .sum::<f64>()
        / y.len() as f64
}

fn criterion_4() -> Verdict {
    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (seed, head) in [(41u64, HeadKind::Sigmoid), (42, HeadKind::Softmax)] {
        let spec = build_detector(DetectorConfig::Desk, head, NormKind::Affine);
        let mut net = Network::<f64>::new(spec, seed).unwrap();
        let mut rng = substream(seed, "acceptance", 4);
        // residual branches start switched off; give them non-zero scales
        for (name, p) in net.params_mut() {
            if name.ends_with("gamma") {
                p.value
                    .data_mut()
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(0.5..1.5));
            }
        }
        let x = Tensor::from_fn(&[1, 16, 16, 3], |_| rng.random_range(-1.0..1.0));
        let y = [1.0];
        net.zero_grad();
        net.accumulate_gradients(x.clone(), &y, 1.0).unwrap();
        let mut params = net.params_mut();
        for _ in 0..120 {
            let which = rng.random_range(0..params.len());
            let k = rng.random_range(0..params[which].1.value.len());
            let analytic = params[which].1.grad.data()[k];
            let orig = params[which].1.value.data()[k];
            params[which].1.value.data_mut()[k] = orig + eps;
            drop(params);
            let up = mean_loss(&net, &x, &y);
            params = net.params_mut();
            params[which].1.value.data_mut()[k] = orig - eps;
            drop(params);
            let down = mean_loss(&net, &x, &y);
            params = net.params_mut();
            params[which].1.value.data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    verdict(
        worst < 1e-4,
        format!("{checked} parameters over both heads, max relative error {worst:.2e}"),
    )
}

/// Dense convolution with the combined kernel `W[ky][kx][ci][co] =
/// D[ky][kx][ci] · P[ci][co]`, zero "same" padding.
fn dense_oracle(
    x: &Tensor<f64>,
    d: &Tensor<f64>,
    p: &Tensor<f64>,
    stride: usize,
) -> (Vec<usize>, Vec<f64>) {
    let [n, h, w, cin] = x.shape().try_into().unwrap();
    let k = d.shape()[0];
    let cout = p.shape()[1];
    let (oh, ow) = (h.div_ceil(stride), w.div_ceil(stride));
    let pad = |inp: usize, out: usize| ((out - 1) * stride + k).saturating_sub(inp) / 2;
    let (py, px) = (pad(h, oh), pad(w, ow));
    let xs = x.data();
    let mut out = vec![0.0; n * oh * ow * cout];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = 0.0;
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - py as isize;
                            let ix = (ox * stride + kx) as isize - px as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                let wgt =
                                    d.data()[(ky * k + kx) * cin + ci] * p.data()[ci * cout + co];
                                acc +=
                                    wgt * xs[((b * h + iy as usize) * w + ix as usize) * cin + ci];
                            }
                        }
                    }
                    out[((b * oh + oy) * ow + ox) * cout + co] = acc;
                }
            }
        }
    }
    (vec![n, oh, ow, cout], out)
}

fn criterion_5() -> Verdict {
    let mut rng = substream(1, "acceptance", 5);
    let mut worst = 0.0f64;
    let cases = 200;
    for _ in 0..cases {
        let (h, w) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let (cin, cout) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let k = [1, 3, 5][rng.random_range(0..3)];
        let stride = rng.random_range(1..=2);
        let n = rng.random_range(1..=2);
        let x = Tensor::from_fn(&[n, h, w, cin], |_| rng.random_range(-1.0..1.0));
        let d = Tensor::from_fn(&[k, k, cin], |_| rng.random_range(-1.0..1.0));
        let p = Tensor::from_fn(&[cin, cout], |_| rng.random_range(-1.0..1.0));
        let got = separable_conv_forward(&x, &d, &p, stride, Padding::Same).unwrap();
        let (shape, want) = dense_oracle(&x, &d, &p, stride);
        if got.shape() != shape.as_slice() {
            return verdict(
                false,
                format!("shape {:?} vs oracle {shape:?}", got.shape()),
            );
        }
        for (a, b) in got.data().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        worst < 1e-10,
        format!("{cases} cases up to 8x8x4, max abs error {worst:.2e}"),
    )
}

// ------------------------------------------------------------- schedule

fn criterion_6() -> Verdict {
    let s = SgdrSchedule::default();
    let c0 = s.lr_at(0, 0.0);
    let c1 = s.lr_at(1, 0.0);
    let mut mid_err = 0.0f64;
    for c in 0..5 {
        let mid = s.lr_at(c, s.period(c) / 2.0);
        mid_err = mid_err.max((mid - (s.lr_max(c) + s.lr_min) / 2.0).abs());
    }
    let pass = c0 == 1e-2 && c1 == 7e-3 && mid_err <= 1e-12;
    verdict(
        pass,
        format!("lr(0,0)={c0:e}, lr(1,0)={c1:e}, midpoint error {mid_err:.1e} over 5 cycles"),
    )
}

// ---------------------------------------------------------- augmentation

fn criterion_7() -> Verdict {
    let cfg = AugmentConfig::default();
    let (w, h, c) = (24, 16, 3);
    let base = NormalizedImage {
        width: w,
        height: h,
        channels: c,
        data: vec![0.0; w * h * c],
    };
    let runs = 10_000;
    let mut counts = [0usize; 4];
    let (mut sum, mut sum_sq, mut samples) = (0.0f64, 0.0f64, 0usize);
    let mut column_ok = true;
    for i in 0..runs {
        let mut rng = substream(7, rng::AUGMENT, i as u64);
        let (out, d) = augment(&base, &cfg, &mut rng).unwrap();
        for (slot, fired) in counts
            .iter_mut()
            .zip([d.flip_h, d.flip_v, d.noise, d.column])
        {
            *slot += usize::from(fired);
        }
        if d.noise && !d.column {
            for &v in &out.data {
                sum += f64::from(v);
                sum_sq += f64::from(v) * f64::from(v);
                samples += 1;
            }
        }
        if d.column && !d.noise {
            let black = out.data.iter().filter(|&&v| v == -1.0).count();
            column_ok &= black == cfg.column_width * h * c;
        }
    }
    // a column on its own, applied directly
    let mut img = base.clone();
    let only_column = Decisions {
        column: true,
        ..Decisions::default()
    };
    apply(
        &mut img,
        only_column,
        &cfg,
        &mut substream(7, rng::AUGMENT, 0),
    )
    .unwrap();
    column_ok &= img.data.iter().filter(|&&v| v == -1.0).count() == cfg.column_width * h * c;

    let freqs: Vec<f64> = counts.iter().map(|&n| n as f64 / runs as f64).collect();
    let mean = sum / samples as f64;
    let std = (sum_sq / samples as f64 - mean * mean).sqrt();
    let pass = freqs.iter().all(|f| (0.45..=0.55).contains(f))
        && (0.19..=0.21).contains(&std)
        && column_ok;
    verdict(
        pass,
        format!(
            "frequencies h/v/noise/column {:.4}/{:.4}/{:.4}/{:.4}, noise std {std:.4}, column count {}",
            freqs[0],
            freqs[1],
            freqs[2],
            freqs[3],
            if column_ok { "exact" } else { "wrong" }
        ),
    )
}

// -------------------------------------------------------------- batching

fn synthetic_manifest(sources: usize, seed: u64) -> DatasetManifest {
    let folds = assign_folds(sources, 5, seed);
    let mut records = Vec::new();
    for (s, &fold) in folds.iter().enumerate() {
        let src = format!("src/img{s:03}.png");
        for rate in std::iter::once(0).chain(DEFAULT_RATES) {
            records.push(ManifestRecord {
                src: src.clone(),
                path: format!("{rate}/img{s:03}.jpg"),
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
    DatasetManifest {
        records,
        k: 5,
        seed,
    }
}

fn criterion_8() -> Verdict {
    let m = synthetic_manifest(100, 8);
    let mut problems = Vec::new();
    let mut batches_checked = 0;
    for held_out in [None, Some(0), Some(3)] {
        let bb = BalancedBatches::new(&m, held_out, 32, 8).unwrap();
        for epoch in 0..3 {
            let batches = bb.epoch(epoch);
            let mut seen = std::collections::HashSet::new();
            for b in &batches {
                batches_checked += 1;
                let tampered = b
                    .iter()
                    .filter(|&&i| m.records[i].label == Label::Tampered)
                    .count();
                if b.len() != 32 || tampered != 16 {
                    problems.push(format!("batch of {} with {tampered} tampered", b.len()));
                }
                if b.iter().any(|&i| Some(m.records[i].fold) == held_out) {
                    problems.push("held-out record in a training batch".into());
                }
                seen.extend(b.iter().copied());
            }
            let missed = m
                .records
                .iter()
                .enumerate()
                .filter(|(i, r)| {
                    r.label == Label::Untouched && Some(r.fold) != held_out && !seen.contains(i)
                })
                .count();
            if missed > 0 {
                problems.push(format!("{missed} untouched records skipped in an epoch"));
            }
        }
    }
    let mut leaks = 0;
    for k in [5, 4, 10] {
        for split in kfold_split(&m, k).unwrap() {
            let train: std::collections::HashSet<&str> = split
                .train
                .iter()
                .map(|&i| m.records[i].src.as_str())
                .collect();
            leaks += split
                .test
                .iter()
                .filter(|&&i| train.contains(m.records[i].src.as_str()))
                .count();
        }
    }
    if leaks > 0 {
        problems.push(format!("{leaks} leaked records"));
    }
    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{batches_checked} batches all 16/16, 0 leaked records for k = 5, 4, 10")
        } else {
            problems.join("; ")
        },
    )
}

// -------------------------------------------------------------- learning

fn desk_dataset(seed: u64, root: &Path) -> LoadedDataset {
    let src = root.join("src");
    std::fs::create_dir_all(&src).unwrap();
    let paths: Vec<PathBuf> = (0..200u64)
        .map(|i| {
            let p = src.join(format!("img{i:03}.png"));
            write_png(&p, &procedural_image(seed * 1000 + i, 64, 64)).unwrap();
            p
        })
        .collect();
    let spec = TamperSpec {
        crop: (64, 64),
        ..TamperSpec::default()
    };
    let out = root.join("data");
    let opts = ForgeOptions {
        seed,
        ..ForgeOptions::default()
    };
    let report = forge(&spec, &paths, &out, &opts).unwrap();
    assert!(report.failures.is_empty());
    LoadedDataset::load(report.manifest, &out, jobs()).unwrap()
}

fn desk_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        seed,
        held_out: Some(0),
        jobs: jobs(),
        ..TrainConfig::default()
    }
}

fn desk_net(seed: u64) -> Network<f32> {
    let spec = build_detector(DetectorConfig::Desk, HeadKind::Sigmoid, NormKind::Affine);
    Network::new(spec, seed).unwrap()
}

struct LearningRun {
    seed: u64,
    data: LoadedDataset,
    outcome: TrainOutcome,
    acc50: f64,
}

fn criterion_9(runs: &mut Vec<LearningRun>, tmp: &Path) -> Verdict {
    let mut lines = Vec::new();
    let mut passed = 0;
    for seed in 1..=3u64 {
        let data = desk_dataset(seed, &tmp.join(format!("desk{seed}")));
        let cfg = desk_config(seed, 30);
        let outcome = train(&data, desk_net(seed), &cfg, None).unwrap();
        let report = evaluate(&data, &outcome.net, Some(0), jobs()).unwrap();
        let (acc50, acc3) = (report.rate(50).unwrap(), report.rate(3).unwrap());
        let log = &outcome.state.log;
        let ratio = log.last().unwrap().train_loss / log[0].train_loss;
        let (a, b, c) = (acc50 >= 0.85, acc50 > acc3, ratio < 0.5);
        let ok = a && b && c;
        passed += usize::from(ok);
        lines.push(format!(
            "seed {seed} {}: rate50 {:.2}% rate3 {:.2}% loss ratio {ratio:.3} [a {} b {} c {}]",
            if ok { "pass" } else { "fail" },
            100.0 * acc50,
            100.0 * acc3,
            u8::from(a),
            u8::from(b),
            u8::from(c)
        ));
        runs.push(LearningRun {
            seed,
            data,
            outcome,
            acc50,
        });
        if passed == 2 {
            break;
        }
    }
    for l in &lines {
        println!("    {l}");
    }
    verdict(
        passed >= 2,
        format!("{passed} of {} seeds pass", lines.len()),
    )
}

fn criterion_10(runs: &[LearningRun]) -> Verdict {
    let Some(run) = runs.iter().rev().find(|r| r.acc50 >= 0.85).or(runs.last()) else {
        return verdict(false, "no trained network from criterion 9");
    };
    let cfg = SvmConfig {
        seed: run.seed,
        ..SvmConfig::default()
    };
    let (_, report) = evaluate_svm(
        &run.data,
        &run.outcome.net,
        TapPoint::Fc1Output,
        0,
        &cfg,
        jobs(),
    )
    .unwrap();
    let svm50 = report.rate(50).unwrap();
    let gap = 100.0 * (svm50 - run.acc50).abs();
    verdict(
        gap <= 10.0,
        format!(
            "seed {}: SVM on fc1 {:.2}% vs sigmoid head {:.2}% at rate 50 ({gap:.2} points)",
            run.seed,
            100.0 * svm50,
            100.0 * run.acc50
        ),
    )
}

fn weights(net: &mut Network<f32>) -> Vec<(String, Vec<f32>)> {
    net.state_mut()
        .into_iter()
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect()
}

fn criterion_11(runs: &[LearningRun], tmp: &Path) -> Verdict {
    let Some(run) = runs.first() else {
        return verdict(false, "no dataset from criterion 9");
    };
    let seed = 11;
    let total = 4;
    let a = train(&run.data, desk_net(seed), &desk_config(seed, total), None).unwrap();
    let b = train(&run.data, desk_net(seed), &desk_config(seed, total), None).unwrap();
    let same_csv = log_csv(&a.state.log) == log_csv(&b.state.log);

    let dir = tmp.join("resume");
    let first = TrainConfig {
        checkpoint_dir: Some(dir.clone()),
        ..desk_config(seed, total / 2)
    };
    train(&run.data, desk_net(seed), &first, None).unwrap();
    let (net, velocity, state) = load_training_checkpoint(&dir.join(LAST_CHECKPOINT)).unwrap();
    let resumed = train(
        &run.data,
        net,
        &desk_config(seed, total),
        Some((velocity, state)),
    )
    .unwrap();
    let (mut full, mut res) = (a.net, resumed.net);
    let same_weights = weights(&mut full) == weights(&mut res);
    let same_log = log_csv(&a.state.log) == log_csv(&resumed.state.log);
    verdict(
        same_csv && same_weights && same_log,
        format!(
            "repeat run CSV {}, resume at epoch {} weights {}, metrics {}",
            if same_csv { "identical" } else { "differs" },
            total / 2,
            if same_weights { "identical" } else { "differ" },
            if same_log { "identical" } else { "differ" }
        ),
    )
}

// ------------------------------------------------------------------- CLI

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn criterion_12(tmp: &Path) -> Verdict {
    let bin = env!("CARGO_BIN_EXE_seamforge");
    let data = tmp.join("cli_forge");
    let status = Command::new(bin)
        .arg("forge-dataset")
        .arg("--out")
        .arg(&data)
        .arg(fixtures())
        .output()
        .unwrap();
    if !status.status.success() {
        return verdict(false, format!("forge-dataset failed: {status:?}"));
    }
    let text = std::fs::read_to_string(data.join("manifest.jsonl")).unwrap();
    let records = text.lines().filter(|l| !l.trim().is_empty()).count();

    let out = tmp.join("cli_carve/carved.png");
    let input = fixtures().join("scene_0.png");
    let in_width = read_image(&input).unwrap().width();
    let status = Command::new(bin)
        .args(["carve", "--width", "-7"])
        .arg(&input)
        .arg(&out)
        .output()
        .unwrap()
        .status;
    let width = if status.success() {
        read_image(&out).unwrap().width()
    } else {
        0
    };
    verdict(
        records == 55 && in_width == 224 && width == 217,
        format!("{records} manifest records from 5 fixtures; carve --width -7: {in_width} -> {width} px"),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    let mut results: Vec<(usize, bool)> = Vec::new();
    let mut run = |id: usize, name: &str, target: Duration, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        let took = t.elapsed();
        println!(
            "criterion {id:>2} {} {name}: {} ({:.1} s, target < {} s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64(),
            target.as_secs()
        );
        results.push((id, v.pass));
    };
    let s = Duration::from_secs;
    run(1, "seam optimality", s(10), &mut criterion_1);
    run(2, "DP recurrence", s(1), &mut criterion_2);
    run(3, "energy homogeneity", s(1), &mut criterion_3);
    run(4, "gradient check", s(60), &mut criterion_4);
    run(5, "separable conv oracle", s(5), &mut criterion_5);
    run(6, "SGDR schedule", s(1), &mut criterion_6);
    run(7, "augmentation statistics", s(10), &mut criterion_7);
    run(8, "balanced batching", s(5), &mut criterion_8);
    run(9, "desk-scale learning", s(1800), &mut || {
        criterion_9(&mut runs, tmp.path())
    });
    run(10, "shallow variant", s(300), &mut || criterion_10(&runs));
    run(11, "determinism", s(3600), &mut || {
        criterion_11(&runs, tmp.path())
    });
    run(12, "end-to-end CLI", s(10), &mut || {
        criterion_12(tmp.path())
    });
    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria pass",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
