//! Linear max-margin classifiers on tapped network features, feature CSV
//! export and a 2-D PCA projection of the features.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forge::Label;
use crate::imaging::NormalizedImage;
use crate::nn::{Network, TapPoint};
use crate::rng::{self, substream};
use crate::trainer::{evaluate_predictions, parallel_map, EvalReport, LoadedDataset};

/// Row-major `n × d` samples with ±1 labels (+1 tampered).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub n: usize,
    pub d: usize,
    pub values: Vec<f64>,
    pub labels: Vec<i8>,
}

impl FeatureMatrix {
    pub fn new(d: usize, values: Vec<f64>, labels: Vec<i8>) -> Result<Self> {
        if d == 0 || values.len() != d * labels.len() {
            return Err(Error::Shape(format!(
                "{} values do not fill {} rows of {d} features",
                values.len(),
                labels.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("feature matrix holds NaN or infinity".into()));
        }
        if labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(Error::Data("labels must be +1 or -1".into()));
        }
        Ok(Self {
            n: labels.len(),
            d,
            values,
            labels,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    /// Rows `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n: idx.len(),
            d: self.d,
            values,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

pub fn label_sign(label: Label) -> i8 {
    match label {
        Label::Tampered => 1,
        Label::Untouched => -1,
    }
}

/// Per-feature zero mean and unit variance, fitted on training rows.
/// Constant features are centred but not scaled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &FeatureMatrix) -> Result<Self> {
        if x.n == 0 {
            return Err(Error::Data("cannot standardize an empty matrix".into()));
        }
        let n = x.n as f64;
        let mut mean = vec![0.0; x.d];
        for i in 0..x.n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; x.d];
        for i in 0..x.n {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.d != self.mean.len() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} features, got {}",
                self.mean.len(),
                x.d
            )));
        }
        let mut out = x.clone();
        for row in out.values.chunks_exact_mut(x.d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// `sign(w·x + b)` classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::Shape(format!(
                "model has {} weights, sample has {} features",
                self.w.len(),
                x.len()
            )));
        }
        Ok(dot(&self.w, x) + self.b)
    }

    /// A score of exactly zero counts as tampered.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(if self.decision(x)? >= 0.0 {
            Label::Tampered
        } else {
            Label::Untouched
        })
    }

    /// `½‖w‖² + Σ cᵢ max(0, 1 − yᵢ(w·xᵢ + b))` with `cᵢ = c` unless class
    /// weights are given.
    pub fn objective(&self, x: &FeatureMatrix, weights: Option<&[f64]>) -> f64 {
        let hinge: f64 = (0..x.n)
            .map(|i| {
                let ci = weights.map_or(self.c, |w| w[i]);
                let m = f64::from(x.labels[i]) * (dot(&self.w, x.row(i)) + self.b);
                ci * (1.0 - m).max(0.0)
            })
            .sum();
        0.5 * dot(&self.w, &self.w) + hinge
    }

    pub fn accuracy(&self, x: &FeatureMatrix) -> Result<f64> {
        let mut correct = 0;
        for i in 0..x.n {
            let t = self.predict(x.row(i))? == Label::Tampered;
            correct += usize::from(t == (x.labels[i] == 1));
        }
        Ok(correct as f64 / x.n as f64)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Scale each class's hinge terms by `n / (2 n_class)`.
    pub balance_classes: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 50,
            seed: 0,
            balance_classes: true,
        }
    }
}

/// Objectives recorded at the end of every epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SvmTrace {
    /// Objective of the average of the epoch's iterates.
    pub averaged: Vec<f64>,
    /// Objective of the model kept so far: the best epoch average with its
    /// bias re-fitted.
    pub best: Vec<f64>,
}

/// Exact minimizer over `b` of `Σ cᵢ max(0, 1 − yᵢ(sᵢ + b))` for fixed
/// scores `sᵢ = w·xᵢ`. The function is convex and piecewise linear, so the
/// optimum sits at a breakpoint `b = yᵢ − sᵢ`.
fn best_bias(scores: &[f64], labels: &[i8], weights: &[f64]) -> f64 {
    let mut breaks: Vec<(f64, usize)> = scores
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (s, &y))| (f64::from(y) - s, i))
        .collect();
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    // slope at b → -∞: positives with active hinge contribute -cᵢ each
    let mut slope: f64 = labels
        .iter()
        .zip(weights)
        .filter(|(&y, _)| y == 1)
        .map(|(_, c)| -c)
        .sum();
    for &(b, i) in &breaks {
        // crossing b = yᵢ − sᵢ: positives deactivate, negatives activate
        slope += weights[i];
        if slope >= 0.0 {
            return b;
        }
    }
    breaks.last().map_or(0.0, |b| b.0)
}

/// Pegasos-style primal subgradient descent on the soft-margin objective.
///
/// With `λ = 1/(c·n)` the step at iteration `t` is `1/(λt)`. During the
/// stochastic phase the bias is shrunk like a weight (an unshrunk bias
/// with these step sizes wanders far off); the objective itself leaves the
/// bias unregularized, and at the end of every epoch the bias of the
/// averaged iterate is re-fitted exactly for it. Each epoch visits every
/// sample once in a seeded shuffled order. The returned model is the best
/// such iterate.
pub fn train_linear_svm(x: &FeatureMatrix, cfg: &SvmConfig) -> Result<(LinearModel, SvmTrace)> {
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(Error::Param(format!("c must be positive, got {}", cfg.c)));
    }
    if cfg.epochs == 0 {
        return Err(Error::Param("at least one epoch is required".into()));
    }
    let pos = x.labels.iter().filter(|&&y| y == 1).count();
    let neg = x.n - pos;
    if x.n < 2 || pos == 0 || neg == 0 {
        return Err(Error::Data(
            "SVM training needs both tampered and untouched samples".into(),
        ));
    }
    let weights: Vec<f64> = x
        .labels
        .iter()
        .map(|&y| {
            if cfg.balance_classes {
                let n_class = if y == 1 { pos } else { neg };
                cfg.c * x.n as f64 / (2.0 * n_class as f64)
            } else {
                cfg.c
            }
        })
        .collect();
    let n = x.n as f64;
    let lambda = 1.0 / (cfg.c * n);
    let mut rng = substream(cfg.seed, rng::SHUFFLE, 0);
    let mut w = vec![0.0; x.d];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; x.d];
    let mut avg_b = 0.0;
    let mut t = 0usize;
    let mut order: Vec<usize> = (0..x.n).collect();
    let mut best: Option<LinearModel> = None;
    let mut best_obj = f64::INFINITY;
    let mut trace = SvmTrace::default();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        // averages restart every epoch so early, large steps wash out
        let mut seen = 0usize;
        for &i in &order {
            seen += 1;
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let y = f64::from(x.labels[i]);
            let xi = x.row(i);
            let margin = y * (dot(&w, xi) + b);
            let shrink = 1.0 - eta * lambda;
            for v in w.iter_mut() {
                *v *= shrink;
            }
            b *= shrink;
            if margin < 1.0 {
                // per-sample weight relative to c keeps the loss scale
                let g = eta * weights[i] / cfg.c;
                for (v, &f) in w.iter_mut().zip(xi) {
                    *v += g * y * f;
                }
                b += g * y;
            }
            let k = 1.0 / seen as f64;
            for (a, v) in avg_w.iter_mut().zip(&w) {
                *a += (v - *a) * k;
            }
            avg_b += (b - avg_b) * k;
        }
        let scores: Vec<f64> = (0..x.n).map(|i| dot(&avg_w, x.row(i))).collect();
        let mut cand = LinearModel {
            w: avg_w.clone(),
            b: avg_b,
            c: cfg.c,
        };
        let avg_obj = cand.objective(x, Some(&weights));
        trace.averaged.push(avg_obj);
        // exact in b for this w, so never worse than the averaged bias
        cand.b = best_bias(&scores, &x.labels, &weights);
        let obj = cand.objective(x, Some(&weights));
        if obj < best_obj {
            best_obj = obj;
            best = Some(cand);
        }
        trace.best.push(best_obj);
    }
    Ok((best.expect("at least one epoch"), trace))
}

/// Features of a set of records: `rows[i]` is the manifest index of row
/// `i` of `matrix`.
#[derive(Clone, Debug)]
pub struct FeatureTable {
    pub rows: Vec<usize>,
    pub matrix: FeatureMatrix,
}

/// Runs `net` up to `tap` on every record in `subset`.
pub fn extract_features(
    data: &LoadedDataset,
    net: &Network<f32>,
    tap: TapPoint,
    subset: &[usize],
    jobs: usize,
) -> Result<FeatureTable> {
    let d = net.feature_dim(tap);
    let feats = parallel_map(subset, jobs, |&i| {
        let img: &NormalizedImage = &data.images[i];
        let x = crate::nn::Tensor::from_vec(
            &[1, img.height, img.width, img.channels],
            img.data.clone(),
        )?;
        Ok(net.extract_features(&x, tap)?.into_data())
    })?;
    let mut values = Vec::with_capacity(subset.len() * d);
    for f in feats {
        values.extend(f.into_iter().map(f64::from));
    }
    let labels = subset
        .iter()
        .map(|&i| label_sign(data.manifest.records[i].label))
        .collect();
    Ok(FeatureTable {
        rows: subset.to_vec(),
        matrix: FeatureMatrix::new(d, values, labels)?,
    })
}

/// `path,label,rate,f_0,…,f_{d−1}`, one row per record.
pub fn features_csv(data: &LoadedDataset, table: &FeatureTable) -> String {
    let mut out = String::from("path,label,rate");
    for j in 0..table.matrix.d {
        write!(out, ",f_{j}").unwrap();
    }
    out.push('\n');
    for (row, &i) in table.rows.iter().enumerate() {
        let r = &data.manifest.records[i];
        write!(out, "{},{},{}", r.path, r.label.as_str(), r.rate).unwrap();
        for v in table.matrix.row(row) {
            // features come from f32 activations; print them at that width
            write!(out, ",{}", *v as f32).unwrap();
        }
        out.push('\n');
    }
    out
}

/// One row of a feature CSV without its values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureRowMeta {
    pub path: String,
    pub label: Label,
    pub rate: u32,
}

/// Parses a CSV written by [`features_csv`].
pub fn parse_features_csv(text: &str) -> Result<(Vec<FeatureRowMeta>, FeatureMatrix)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data("empty feature CSV".into()))?;
    let d = header.split(',').count().saturating_sub(3);
    if !header.starts_with("path,label,rate,f_0") {
        return Err(Error::Data(
            "feature CSV header must start with path,label,rate,f_0".into(),
        ));
    }
    let (mut meta, mut values, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let bad = |what: &str| Error::Data(format!("feature CSV row {}: {what}", n + 2));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != d + 3 {
            return Err(bad("wrong column count"));
        }
        let label = match cols[1] {
            "tampered" => Label::Tampered,
            "untouched" => Label::Untouched,
            _ => return Err(bad("unknown label")),
        };
        let rate = cols[2].parse().map_err(|_| bad("bad rate"))?;
        for c in &cols[3..] {
            values.push(c.parse::<f64>().map_err(|_| bad("bad feature value"))?);
        }
        labels.push(label_sign(label));
        meta.push(FeatureRowMeta {
            path: cols[0].to_string(),
            label,
            rate,
        });
    }
    Ok((meta, FeatureMatrix::new(d, values, labels)?))
}

/// The FC-SVM / XC-SVM variant: features tapped from `net`, standardized
/// with statistics of the training records, a linear SVM fitted on every
/// record outside `held_out` and scored on `held_out`.
pub fn evaluate_svm(
    data: &LoadedDataset,
    net: &Network<f32>,
    tap: TapPoint,
    held_out: usize,
    cfg: &SvmConfig,
    jobs: usize,
) -> Result<(LinearModel, EvalReport)> {
    let train_idx: Vec<usize> = (0..data.images.len())
        .filter(|&i| data.manifest.records[i].fold != held_out)
        .collect();
    let test_idx = data.indices_in(Some(held_out));
    let train = extract_features(data, net, tap, &train_idx, jobs)?.matrix;
    let test = extract_features(data, net, tap, &test_idx, jobs)?.matrix;
    let std = Standardizer::fit(&train)?;
    let (model, _) = train_linear_svm(&std.apply(&train)?, cfg)?;
    let test = std.apply(&test)?;
    let decisions = (0..test.n)
        .map(|i| Ok(model.predict(test.row(i))? == Label::Tampered))
        .collect::<Result<Vec<bool>>>()?;
    let report = evaluate_predictions(&data.manifest, &test_idx, &decisions)?;
    Ok((model, report))
}

/// PCA onto the top two principal components.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// Unit-norm principal directions, largest-magnitude loading positive.
    pub components: [Vec<f64>; 2],
    /// Covariance eigenvalues of the two components.
    pub variances: [f64; 2],
    pub mean: Vec<f64>,
}

/// Projects rows onto the two leading eigenvectors of the sample
/// covariance (normalized by `n − 1`).
pub fn project_2d(x: &FeatureMatrix) -> Result<Projection> {
    if x.n < 3 || x.d < 2 {
        return Err(Error::Param(format!(
            "projection needs at least 3 samples of 2 features, got {}x{}",
            x.n, x.d
        )));
    }
    let m = DMatrix::from_row_slice(x.n, x.d, &x.values);
    let mean: Vec<f64> = m.column_iter().map(|c| c.mean()).collect();
    let mut centred = m.clone();
    for (j, mut col) in centred.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let cov = centred.transpose() * &centred / (x.n as f64 - 1.0);
    let total: f64 = cov.diagonal().iter().sum();
    if total <= 1e-24 {
        return Err(Error::Degenerate("features have zero variance".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..x.d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let component = |k: usize| -> Vec<f64> {
        let v: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if lead < 0.0 {
            v.iter().map(|x| -x).collect()
        } else {
            v
        }
    };
    let components = [component(0), component(1)];
    let coords = (0..x.n)
        .map(|i| {
            let r = centred.row(i);
            [
                r.iter().zip(&components[0]).map(|(a, b)| a * b).sum(),
                r.iter().zip(&components[1]).map(|(a, b)| a * b).sum(),
            ]
        })
        .collect();
    Ok(Projection {
        coords,
        components,
        variances: [
            eig.eigenvalues[order[0]].max(0.0),
            eig.eigenvalues[order[1]].max(0.0),
        ],
        mean,
    })
}

/// `path,label,rate,x,y`.
pub fn projection_csv(meta: &[FeatureRowMeta], p: &Projection) -> String {
    let mut out = String::from("path,label,rate,x,y\n");
    for (m, c) in meta.iter().zip(&p.coords) {
        writeln!(
            out,
            "{},{},{},{},{}",
            m.path,
            m.label.as_str(),
            m.rate,
            c[0],
            c[1]
        )
        .unwrap();
    }
    out
}
