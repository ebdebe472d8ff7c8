//! Layer kernels and their backward passes.
//!
//! Every kernel walks channels innermost so the hot loops are contiguous
//! multiply-adds. Weight layouts: standard conv `[k, k, in, out]`,
//! depthwise `[k, k, c]`, pointwise and dense `[in, out]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding; output size is `ceil(in / stride)`.
    #[default]
    Same,
    /// No padding; output size is `floor((in - k) / stride) + 1`.
    Valid,
}

/// Output extent and leading pad along one spatial axis.
fn geometry(input: usize, k: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    if stride == 0 || k == 0 {
        return Err(Error::Shape("kernel and stride must be positive".into()));
    }
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(input);
            Ok((out, total / 2))
        }
        Padding::Valid => {
            if input < k {
                return Err(Error::Shape(format!(
                    "input extent {input} is smaller than kernel {k}"
                )));
            }
            Ok(((input - k) / stride + 1, 0))
        }
    }
}

#[inline]
fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Valid input coordinate for output `o` and tap `t`, if inside the image.
#[inline]
fn tap(o: usize, t: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
    (o * stride + t).checked_sub(pad).filter(|&i| i < extent)
}

fn he_normal<T: Real>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    scaled_normal(shape, 2.0 / fan_in as f64, rng)
}

fn scaled_normal<T: Real>(shape: &[usize], variance: f64, rng: &mut impl Rng) -> Tensor<T> {
    let normal = Normal::new(0.0, variance.sqrt()).expect("positive std");
    Tensor::from_fn(shape, |_| T::of(normal.sample(rng)))
}

/// Weight shaped `[k, k, in, out]`.
pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let (n, h, wd, cin) = x.dims4()?;
    let (k, cout) = match *w.shape() {
        [k, k2, wi, co] if k == k2 && wi == cin => (k, co),
        _ => {
            return Err(Error::Shape(format!(
                "conv weight {:?} does not fit {cin} input channels",
                w.shape()
            )))
        }
    };
    let (oh, pt) = geometry(h, k, stride, padding)?;
    let (ow, pl) = geometry(wd, k, stride, padding)?;
    let (xd, wdat) = (x.data(), w.data());
    let mut y = vec![T::zero(); n * oh * ow * cout];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let yo = &mut y[((b * oh + oy) * ow + ox) * cout..][..cout];
                for ky in 0..k {
                    let Some(iy) = tap(oy, ky, stride, pt, h) else {
                        continue;
                    };
                    for kx in 0..k {
                        let Some(ix) = tap(ox, kx, stride, pl, wd) else {
                            continue;
                        };
                        let xi = &xd[((b * h + iy) * wd + ix) * cin..][..cin];
                        let wb = &wdat[(ky * k + kx) * cin * cout..][..cin * cout];
                        for (ci, &xv) in xi.iter().enumerate() {
                            axpy(yo, xv, &wb[ci * cout..][..cout]);
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n, oh, ow, cout], y)
}

fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    padding: Padding,
    dw: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, h, wd, cin) = x.dims4()?;
    let (k, cout) = (w.shape()[0], w.shape()[3]);
    let (oh, pt) = geometry(h, k, stride, padding)?;
    let (ow, pl) = geometry(wd, k, stride, padding)?;
    if dy.shape() != [n, oh, ow, cout] {
        return Err(Error::Shape(format!(
            "conv upstream gradient {:?}",
            dy.shape()
        )));
    }
    // per-tap transposed weights [k, k, out, in]
    let mut wt = vec![T::zero(); w.len()];
    for t in 0..k * k {
        for ci in 0..cin {
            for co in 0..cout {
                wt[(t * cout + co) * cin + ci] = w.data()[(t * cin + ci) * cout + co];
            }
        }
    }
    let mut dx = vec![T::zero(); x.len()];
    let (xd, dyd) = (x.data(), dy.data());
    let dwd = dw.data_mut();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = &dyd[((b * oh + oy) * ow + ox) * cout..][..cout];
                for ky in 0..k {
                    let Some(iy) = tap(oy, ky, stride, pt, h) else {
                        continue;
                    };
                    for kx in 0..k {
                        let Some(ix) = tap(ox, kx, stride, pl, wd) else {
                            continue;
                        };
                        let t = ky * k + kx;
                        let base = ((b * h + iy) * wd + ix) * cin;
                        let xi = &xd[base..base + cin];
                        let dwb = &mut dwd[t * cin * cout..][..cin * cout];
                        for (ci, &xv) in xi.iter().enumerate() {
                            axpy(&mut dwb[ci * cout..][..cout], xv, g);
                        }
                        let dxi = &mut dx[base..base + cin];
                        let wtb = &wt[t * cout * cin..][..cout * cin];
                        for (co, &gv) in g.iter().enumerate() {
                            axpy(dxi, gv, &wtb[co * cin..][..cin]);
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(x.shape(), dx)
}

/// Per-channel spatial filtering; weight shaped `[k, k, c]`.
pub fn depthwise_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let (n, h, wd, c) = x.dims4()?;
    let k = match *w.shape() {
        [k, k2, wc] if k == k2 && wc == c => k,
        _ => {
            return Err(Error::Shape(format!(
                "depthwise weight {:?} does not fit {c} channels",
                w.shape()
            )))
        }
    };
    let (oh, pt) = geometry(h, k, stride, padding)?;
    let (ow, pl) = geometry(wd, k, stride, padding)?;
    let (xd, wdat) = (x.data(), w.data());
    let mut y = vec![T::zero(); n * oh * ow * c];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let yo = &mut y[((b * oh + oy) * ow + ox) * c..][..c];
                for ky in 0..k {
                    let Some(iy) = tap(oy, ky, stride, pt, h) else {
                        continue;
                    };
                    for kx in 0..k {
                        let Some(ix) = tap(ox, kx, stride, pl, wd) else {
                            continue;
                        };
                        let xi = &xd[((b * h + iy) * wd + ix) * c..][..c];
                        let wt = &wdat[(ky * k + kx) * c..][..c];
                        for ((yv, &xv), &wv) in yo.iter_mut().zip(xi).zip(wt) {
                            *yv += xv * wv;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n, oh, ow, c], y)
}

fn depthwise_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    padding: Padding,
    dw: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, h, wd, c) = x.dims4()?;
    let k = w.shape()[0];
    let (oh, pt) = geometry(h, k, stride, padding)?;
    let (ow, pl) = geometry(wd, k, stride, padding)?;
    if dy.shape() != [n, oh, ow, c] {
        return Err(Error::Shape(format!(
            "depthwise upstream gradient {:?}",
            dy.shape()
        )));
    }
    let mut dx = vec![T::zero(); x.len()];
    let (xd, dyd, wdat) = (x.data(), dy.data(), w.data());
    let dwd = dw.data_mut();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = &dyd[((b * oh + oy) * ow + ox) * c..][..c];
                for ky in 0..k {
                    let Some(iy) = tap(oy, ky, stride, pt, h) else {
                        continue;
                    };
                    for kx in 0..k {
                        let Some(ix) = tap(ox, kx, stride, pl, wd) else {
                            continue;
                        };
                        let t = ky * k + kx;
                        let base = ((b * h + iy) * wd + ix) * c;
                        let xi = &xd[base..base + c];
                        for ((dwv, &xv), &gv) in dwd[t * c..][..c].iter_mut().zip(xi).zip(g) {
                            *dwv += xv * gv;
                        }
                        let wt = &wdat[t * c..][..c];
                        for ((dxv, &wv), &gv) in dx[base..base + c].iter_mut().zip(wt).zip(g) {
                            *dxv += wv * gv;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(x.shape(), dx)
}

/// 1×1 channel mixing sampled every `stride` pixels; weight `[in, out]`.
pub fn pointwise_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let (n, h, wd, cin) = x.dims4()?;
    let cout = match *w.shape() {
        [wi, co] if wi == cin => co,
        _ => {
            return Err(Error::Shape(format!(
                "pointwise weight {:?} does not fit {cin} input channels",
                w.shape()
            )))
        }
    };
    let (oh, _) = geometry(h, 1, stride, Padding::Same)?;
    let (ow, _) = geometry(wd, 1, stride, Padding::Same)?;
    let (xd, wdat) = (x.data(), w.data());
    let mut y = vec![T::zero(); n * oh * ow * cout];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let yo = &mut y[((b * oh + oy) * ow + ox) * cout..][..cout];
                let xi = &xd[((b * h + oy * stride) * wd + ox * stride) * cin..][..cin];
                for (ci, &xv) in xi.iter().enumerate() {
                    axpy(yo, xv, &wdat[ci * cout..][..cout]);
                }
            }
        }
    }
    Tensor::from_vec(&[n, oh, ow, cout], y)
}

fn pointwise_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    dw: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, h, wd, cin) = x.dims4()?;
    let cout = w.shape()[1];
    let (oh, ow) = (h.div_ceil(stride), wd.div_ceil(stride));
    if dy.shape() != [n, oh, ow, cout] {
        return Err(Error::Shape(format!(
            "pointwise upstream gradient {:?}",
            dy.shape()
        )));
    }
    let mut wt = vec![T::zero(); w.len()];
    for ci in 0..cin {
        for co in 0..cout {
            wt[co * cin + ci] = w.data()[ci * cout + co];
        }
    }
    let mut dx = vec![T::zero(); x.len()];
    let (xd, dyd) = (x.data(), dy.data());
    let dwd = dw.data_mut();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = &dyd[((b * oh + oy) * ow + ox) * cout..][..cout];
                let base = ((b * h + oy * stride) * wd + ox * stride) * cin;
                let xi = &xd[base..base + cin];
                for (ci, &xv) in xi.iter().enumerate() {
                    axpy(&mut dwd[ci * cout..][..cout], xv, g);
                }
                let dxi = &mut dx[base..base + cin];
                for (co, &gv) in g.iter().enumerate() {
                    axpy(dxi, gv, &wt[co * cin..][..cin]);
                }
            }
        }
    }
    Tensor::from_vec(x.shape(), dx)
}

/// Depthwise `k`×`k` filtering (with the given stride and padding) followed
/// by 1×1 channel mixing.
pub fn separable_conv_forward<T: Real>(
    x: &Tensor<T>,
    depthwise: &Tensor<T>,
    pointwise: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let mid = depthwise_forward(x, depthwise, stride, padding)?;
    pointwise_forward(&mid, pointwise, 1)
}

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }
}

fn missing_cache(layer: &str) -> Error {
    Error::State(format!(
        "{layer} backward called without a cached forward pass"
    ))
}

#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
    pub weight: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(
        kernel: usize,
        stride: usize,
        padding: Padding,
        cin: usize,
        cout: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            kernel,
            stride,
            padding,
            weight: Param::new(he_normal(
                &[kernel, kernel, cin, cout],
                kernel * kernel * cin,
                rng,
            )),
            cache: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SeparableConv<T> {
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
    pub depthwise: Param<T>,
    pub pointwise: Param<T>,
    cache: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Real> SeparableConv<T> {
    pub fn new(
        kernel: usize,
        stride: usize,
        padding: Padding,
        cin: usize,
        cout: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            kernel,
            stride,
            padding,
            // no nonlinearity between the two factors, so the depthwise half
            // is variance-preserving and only the pointwise half carries the
            // ReLU gain of 2
            depthwise: Param::new(scaled_normal(
                &[kernel, kernel, cin],
                1.0 / (kernel * kernel) as f64,
                rng,
            )),
            pointwise: Param::new(he_normal(&[cin, cout], cin, rng)),
            cache: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PointwiseConv<T> {
    pub stride: usize,
    pub weight: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> PointwiseConv<T> {
    pub fn new(stride: usize, cin: usize, cout: usize, rng: &mut impl Rng) -> Self {
        Self {
            stride,
            weight: Param::new(he_normal(&[cin, cout], cin, rng)),
            cache: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// Learnable per-channel scale and shift, no batch statistics.
    #[default]
    Affine,
    /// Batch normalization: batch statistics while training, running
    /// averages at inference.
    Batch,
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(NormKind::Affine),
            "batch" => Ok(NormKind::Batch),
            _ => Err(Error::Param(format!("unknown norm kind `{s}`"))),
        }
    }
}

const BN_MOMENTUM: f64 = 0.99;
const BN_EPS: f64 = 1e-3;

#[derive(Clone, Debug)]
enum NormCache<T> {
    Affine(Tensor<T>),
    Batch { xhat: Tensor<T>, inv_std: Vec<T> },
}

#[derive(Clone, Debug)]
pub struct Norm<T> {
    pub kind: NormKind,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    cache: Option<NormCache<T>>,
}

impl<T: Real> Norm<T> {
    pub fn new(kind: NormKind, channels: usize) -> Self {
        let mut gamma = Tensor::zeros(&[channels]);
        gamma.fill(T::one());
        let mut running_var = Tensor::zeros(&[channels]);
        running_var.fill(T::one());
        Self {
            kind,
            gamma: Param::new(gamma),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var,
            cache: None,
        }
    }

    fn channels_of(&self, x: &Tensor<T>) -> Result<usize> {
        let c = *x.shape().last().unwrap();
        if c != self.gamma.value.len() {
            return Err(Error::Shape(format!(
                "norm over {} channels got input {:?}",
                self.gamma.value.len(),
                x.shape()
            )));
        }
        Ok(c)
    }

    /// Applies `y = scale * x + shift` per channel.
    fn scale_shift(x: &Tensor<T>, scale: &[T], shift: &[T]) -> Tensor<T> {
        let c = scale.len();
        let mut y = x.clone();
        for px in y.data_mut().chunks_exact_mut(c) {
            for ((v, &s), &b) in px.iter_mut().zip(scale).zip(shift) {
                *v = *v * s + b;
            }
        }
        y
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.channels_of(x)?;
        let (g, b) = (self.gamma.value.data(), self.beta.value.data());
        match self.kind {
            NormKind::Affine => Ok(Self::scale_shift(x, g, b)),
            NormKind::Batch => {
                let eps = T::of(BN_EPS);
                let scale: Vec<T> = g
                    .iter()
                    .zip(self.running_var.data())
                    .map(|(&g, &v)| g / (v + eps).sqrt())
                    .collect();
                let shift: Vec<T> = b
                    .iter()
                    .zip(self.running_mean.data())
                    .zip(&scale)
                    .map(|((&b, &m), &s)| b - m * s)
                    .collect();
                Ok(Self::scale_shift(x, &scale, &shift))
            }
        }
    }

    fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let c = self.channels_of(&x)?;
        match self.kind {
            NormKind::Affine => {
                let y = self.infer(&x)?;
                self.cache = Some(NormCache::Affine(x));
                Ok(y)
            }
            NormKind::Batch => {
                let m = T::of((x.len() / c) as f64);
                let mut mean = vec![T::zero(); c];
                for px in x.data().chunks_exact(c) {
                    for (a, &v) in mean.iter_mut().zip(px) {
                        *a += v;
                    }
                }
                mean.iter_mut().for_each(|a| *a = *a / m);
                let mut var = vec![T::zero(); c];
                for px in x.data().chunks_exact(c) {
                    for ((a, &v), &mu) in var.iter_mut().zip(px).zip(&mean) {
                        *a += (v - mu) * (v - mu);
                    }
                }
                var.iter_mut().for_each(|a| *a = *a / m);
                let eps = T::of(BN_EPS);
                let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                let mut xhat = x;
                for px in xhat.data_mut().chunks_exact_mut(c) {
                    for ((v, &mu), &is) in px.iter_mut().zip(&mean).zip(&inv_std) {
                        *v = (*v - mu) * is;
                    }
                }
                let y = Self::scale_shift(&xhat, self.gamma.value.data(), self.beta.value.data());
                let mom = T::of(BN_MOMENTUM);
                for (r, &mu) in self.running_mean.data_mut().iter_mut().zip(&mean) {
                    *r = mom * *r + (T::one() - mom) * mu;
                }
                for (r, &v) in self.running_var.data_mut().iter_mut().zip(&var) {
                    *r = mom * *r + (T::one() - mom) * v;
                }
                self.cache = Some(NormCache::Batch { xhat, inv_std });
                Ok(y)
            }
        }
    }

    fn backward(&mut self, dy: Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| missing_cache("norm"))?;
        let c = self.gamma.value.len();
        let gamma = self.gamma.value.data().to_vec();
        let (dg, db) = (self.gamma.grad.data_mut(), self.beta.grad.data_mut());
        match cache {
            NormCache::Affine(x) => {
                if x.shape() != dy.shape() {
                    return Err(Error::Shape("norm upstream gradient shape".into()));
                }
                let mut dx = dy;
                for (g, xv) in dx
                    .data_mut()
                    .chunks_exact_mut(c)
                    .zip(x.data().chunks_exact(c))
                {
                    for i in 0..c {
                        dg[i] += g[i] * xv[i];
                        db[i] += g[i];
                        g[i] *= gamma[i];
                    }
                }
                Ok(dx)
            }
            NormCache::Batch { xhat, inv_std } => {
                if xhat.shape() != dy.shape() {
                    return Err(Error::Shape("norm upstream gradient shape".into()));
                }
                let m = T::of((xhat.len() / c) as f64);
                let mut sum_g = vec![T::zero(); c];
                let mut sum_gx = vec![T::zero(); c];
                for (g, xh) in dy.data().chunks_exact(c).zip(xhat.data().chunks_exact(c)) {
                    for i in 0..c {
                        sum_g[i] += g[i];
                        sum_gx[i] += g[i] * xh[i];
                    }
                }
                for i in 0..c {
                    dg[i] += sum_gx[i];
                    db[i] += sum_g[i];
                }
                let mut dx = dy;
                for (g, xh) in dx
                    .data_mut()
                    .chunks_exact_mut(c)
                    .zip(xhat.data().chunks_exact(c))
                {
                    for i in 0..c {
                        g[i] =
                            gamma[i] * inv_std[i] / m * (m * g[i] - sum_g[i] - xh[i] * sum_gx[i]);
                    }
                }
                Ok(dx)
            }
        }
    }
}

/// Max pooling with "same" padding (padded cells never win).
#[derive(Clone, Debug)]
pub struct MaxPool<T> {
    pub kernel: usize,
    pub stride: usize,
    cache: Option<Tensor<T>>,
}

impl<T: Real> MaxPool<T> {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            cache: None,
        }
    }

    /// Output and, per output element, the flat input index of the first
    /// maximum in its window.
    fn pool(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let (n, h, wd, c) = x.dims4()?;
        let (k, s) = (self.kernel, self.stride);
        let (oh, pt) = geometry(h, k, s, Padding::Same)?;
        let (ow, pl) = geometry(wd, k, s, Padding::Same)?;
        let xd = x.data();
        let mut y = vec![T::neg_infinity(); n * oh * ow * c];
        let mut arg = vec![0usize; y.len()];
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let o = ((b * oh + oy) * ow + ox) * c;
                    for ky in 0..k {
                        let Some(iy) = tap(oy, ky, s, pt, h) else {
                            continue;
                        };
                        for kx in 0..k {
                            let Some(ix) = tap(ox, kx, s, pl, wd) else {
                                continue;
                            };
                            let base = ((b * h + iy) * wd + ix) * c;
                            for ch in 0..c {
                                let v = xd[base + ch];
                                if v > y[o + ch] {
                                    y[o + ch] = v;
                                    arg[o + ch] = base + ch;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((Tensor::from_vec(&[n, oh, ow, c], y)?, arg))
    }
}

#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Param::new(he_normal(&[inputs, outputs], inputs, rng)),
            bias: Param::new(Tensor::zeros(&[outputs])),
            cache: None,
        }
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, d) = x.dims2()?;
        let (wi, wo) = (self.weight.value.shape()[0], self.weight.value.shape()[1]);
        if d != wi {
            return Err(Error::Shape(format!(
                "dense layer expects {wi} inputs, got {d}"
            )));
        }
        let w = self.weight.value.data();
        let mut y = Vec::with_capacity(n * wo);
        for row in x.data().chunks_exact(d) {
            let mut out = self.bias.value.data().to_vec();
            for (i, &xv) in row.iter().enumerate() {
                axpy(&mut out, xv, &w[i * wo..][..wo]);
            }
            y.extend(out);
        }
        Tensor::from_vec(&[n, wo], y)
    }

    fn backward(&mut self, dy: Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.take().ok_or_else(|| missing_cache("dense"))?;
        let (n, d) = x.dims2()?;
        let wo = self.weight.value.shape()[1];
        if dy.shape() != [n, wo] {
            return Err(Error::Shape(format!(
                "dense upstream gradient {:?}",
                dy.shape()
            )));
        }
        let w = self.weight.value.data();
        let mut dx = Vec::with_capacity(n * d);
        for (xr, g) in x.data().chunks_exact(d).zip(dy.data().chunks_exact(wo)) {
            for (i, &xv) in xr.iter().enumerate() {
                axpy(&mut self.weight.grad.data_mut()[i * wo..][..wo], xv, g);
                dx.push(
                    w[i * wo..][..wo]
                        .iter()
                        .zip(g)
                        .map(|(&a, &b)| a * b)
                        .sum::<T>(),
                );
            }
            axpy(self.bias.grad.data_mut(), T::one(), g);
        }
        Tensor::from_vec(&[n, d], dx)
    }
}

/// One network layer. Residual junctions live at the network level.
#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    Separable(SeparableConv<T>),
    Pointwise(PointwiseConv<T>),
    Norm(Norm<T>),
    Relu(Option<Tensor<T>>),
    MaxPool(MaxPool<T>),
    GlobalAvgPool(Option<Vec<usize>>),
    Dense(Dense<T>),
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Separable(_) => "separable",
            Layer::Pointwise(_) => "pointwise",
            Layer::Norm(_) => "norm",
            Layer::Relu(_) => "relu",
            Layer::MaxPool(_) => "maxpool",
            Layer::GlobalAvgPool(_) => "gap",
            Layer::Dense(_) => "dense",
        }
    }

    /// Pure forward pass; touches no cache.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => conv2d_forward(x, &l.weight.value, l.stride, l.padding),
            Layer::Separable(l) => separable_conv_forward(
                x,
                &l.depthwise.value,
                &l.pointwise.value,
                l.stride,
                l.padding,
            ),
            Layer::Pointwise(l) => pointwise_forward(x, &l.weight.value, l.stride),
            Layer::Norm(l) => l.infer(x),
            Layer::Relu(_) => {
                let mut y = x.clone();
                y.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
                Ok(y)
            }
            Layer::MaxPool(l) => Ok(l.pool(x)?.0),
            Layer::GlobalAvgPool(_) => {
                let (n, h, w, c) = x.dims4()?;
                let scale = T::one() / T::of((h * w) as f64);
                let mut y = vec![T::zero(); n * c];
                for (b, sample) in x.data().chunks_exact(h * w * c).enumerate() {
                    let out = &mut y[b * c..(b + 1) * c];
                    for px in sample.chunks_exact(c) {
                        axpy(out, scale, px);
                    }
                }
                Tensor::from_vec(&[n, c], y)
            }
            Layer::Dense(l) => l.infer(x),
        }
    }

    /// Training forward pass; caches what [`Layer::backward`] needs.
    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Norm(l) => return l.forward(x),
            Layer::Separable(l) => {
                let mid = depthwise_forward(&x, &l.depthwise.value, l.stride, l.padding)?;
                let y = pointwise_forward(&mid, &l.pointwise.value, 1)?;
                l.cache = Some((x, mid));
                return Ok(y);
            }
            _ => {}
        }
        let y = self.infer(&x)?;
        match self {
            Layer::Conv(l) => l.cache = Some(x),
            Layer::Pointwise(l) => l.cache = Some(x),
            Layer::Relu(c) => *c = Some(x),
            Layer::MaxPool(l) => l.cache = Some(x),
            Layer::GlobalAvgPool(c) => *c = Some(x.shape().to_vec()),
            Layer::Dense(l) => l.cache = Some(x),
            Layer::Norm(_) | Layer::Separable(_) => unreachable!(),
        }
        Ok(y)
    }

    /// Propagates `dy` to the input and accumulates parameter gradients.
    pub fn backward(&mut self, dy: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => {
                let x = l.cache.take().ok_or_else(|| missing_cache("conv"))?;
                conv2d_backward(
                    &x,
                    &l.weight.value,
                    &dy,
                    l.stride,
                    l.padding,
                    &mut l.weight.grad,
                )
            }
            Layer::Separable(l) => {
                let (x, mid) = l.cache.take().ok_or_else(|| missing_cache("separable"))?;
                let dmid =
                    pointwise_backward(&mid, &l.pointwise.value, &dy, 1, &mut l.pointwise.grad)?;
                depthwise_backward(
                    &x,
                    &l.depthwise.value,
                    &dmid,
                    l.stride,
                    l.padding,
                    &mut l.depthwise.grad,
                )
            }
            Layer::Pointwise(l) => {
                let x = l.cache.take().ok_or_else(|| missing_cache("pointwise"))?;
                pointwise_backward(&x, &l.weight.value, &dy, l.stride, &mut l.weight.grad)
            }
            Layer::Norm(l) => l.backward(dy),
            Layer::Relu(c) => {
                let x = c.take().ok_or_else(|| missing_cache("relu"))?;
                if x.shape() != dy.shape() {
                    return Err(Error::Shape("relu upstream gradient shape".into()));
                }
                let mut dx = dy;
                for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
                    // subgradient 0 at the kink
                    if v <= T::zero() {
                        *g = T::zero();
                    }
                }
                Ok(dx)
            }
            Layer::MaxPool(l) => {
                let x = l.cache.take().ok_or_else(|| missing_cache("maxpool"))?;
                let (y, arg) = l.pool(&x)?;
                if y.shape() != dy.shape() {
                    return Err(Error::Shape("maxpool upstream gradient shape".into()));
                }
                let mut dx = Tensor::zeros(x.shape());
                for (&i, &g) in arg.iter().zip(dy.data()) {
                    dx.data_mut()[i] += g;
                }
                Ok(dx)
            }
            Layer::GlobalAvgPool(c) => {
                let shape = c
                    .take()
                    .ok_or_else(|| missing_cache("global average pool"))?;
                let (n, h, w, ch) = (shape[0], shape[1], shape[2], shape[3]);
                if dy.shape() != [n, ch] {
                    return Err(Error::Shape("pool upstream gradient shape".into()));
                }
                let scale = T::one() / T::of((h * w) as f64);
                let mut dx = Vec::with_capacity(n * h * w * ch);
                for g in dy.data().chunks_exact(ch) {
                    for _ in 0..h * w {
                        dx.extend(g.iter().map(|&v| v * scale));
                    }
                }
                Tensor::from_vec(&shape, dx)
            }
            Layer::Dense(l) => l.backward(dy),
        }
    }

    pub fn params(&self) -> Vec<(&'static str, &Param<T>)> {
        match self {
            Layer::Conv(l) => vec![("weight", &l.weight)],
            Layer::Separable(l) => vec![("depthwise", &l.depthwise), ("pointwise", &l.pointwise)],
            Layer::Pointwise(l) => vec![("weight", &l.weight)],
            Layer::Norm(l) => vec![("gamma", &l.gamma), ("beta", &l.beta)],
            Layer::Dense(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::Relu(_) | Layer::MaxPool(_) | Layer::GlobalAvgPool(_) => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Param<T>)> {
        match self {
            Layer::Conv(l) => vec![("weight", &mut l.weight)],
            Layer::Separable(l) => vec![
                ("depthwise", &mut l.depthwise),
                ("pointwise", &mut l.pointwise),
            ],
            Layer::Pointwise(l) => vec![("weight", &mut l.weight)],
            Layer::Norm(l) => vec![("gamma", &mut l.gamma), ("beta", &mut l.beta)],
            Layer::Dense(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::Relu(_) | Layer::MaxPool(_) | Layer::GlobalAvgPool(_) => vec![],
        }
    }

    /// Non-trainable state saved with checkpoints.
    pub fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::Norm(l) if l.kind == NormKind::Batch => vec![
                ("running_mean", &mut l.running_mean),
                ("running_var", &mut l.running_var),
            ],
            _ => vec![],
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv(l) => l.cache = None,
            Layer::Separable(l) => l.cache = None,
            Layer::Pointwise(l) => l.cache = None,
            Layer::Norm(l) => l.cache = None,
            Layer::Relu(c) => *c = None,
            Layer::MaxPool(l) => l.cache = None,
            Layer::GlobalAvgPool(c) => *c = None,
            Layer::Dense(l) => l.cache = None,
        }
    }
}
