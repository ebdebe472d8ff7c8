//! Network topology descriptions, the detector builders, and the runtime
//! network with forward/backward passes and feature taps.

use serde::{Deserialize, Serialize};

use super::layers::{
    Conv2d, Dense, Layer, MaxPool, Norm, NormKind, Padding, Param, PointwiseConv, SeparableConv,
};
use super::loss::{bce_loss, sigmoid};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::{self, substream};

/// Serializable layer descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        kernel: usize,
        stride: usize,
        in_ch: usize,
        out_ch: usize,
    },
    /// Depthwise (multiplier 1) then pointwise.
    Separable {
        kernel: usize,
        stride: usize,
        in_ch: usize,
        out_ch: usize,
    },
    Pointwise {
        stride: usize,
        in_ch: usize,
        out_ch: usize,
    },
    Norm {
        channels: usize,
    },
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    /// `branch(x) + shortcut(x)`; an empty shortcut is the identity.
    Residual {
        branch: Vec<LayerSpec>,
        shortcut: Vec<LayerSpec>,
    },
    GlobalAvgPool,
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Sigmoid,
    /// Two-way softmax; the probability is that of the second unit.
    Softmax,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// One logit through a sigmoid.
    #[default]
    Sigmoid,
    /// Two logits through a softmax.
    Softmax,
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(HeadKind::Sigmoid),
            "softmax" => Ok(HeadKind::Softmax),
            _ => Err(Error::Param(format!("unknown head `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorConfig {
    /// Canonical Xception backbone (2,048 features) with a 2048→512→1 head.
    Full,
    /// Reduced homologue with the same motifs and 128 backbone features.
    #[default]
    Desk,
}

impl std::str::FromStr for DetectorConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(DetectorConfig::Full),
            "desk" => Ok(DetectorConfig::Desk),
            _ => Err(Error::Param(format!("unknown detector config `{s}`"))),
        }
    }
}

/// Where to read features from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TapPoint {
    /// Global-average-pooled backbone output.
    BackboneOutput,
    /// Output of the first fully-connected layer (after its ReLU).
    Fc1Output,
}

impl std::str::FromStr for TapPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "backbone-output" | "backbone" => Ok(TapPoint::BackboneOutput),
            "fc1-output" | "fc1" => Ok(TapPoint::Fc1Output),
            _ => Err(Error::Param(format!("unknown feature tap `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub input_channels: usize,
    /// Smallest accepted height and width.
    pub min_input: usize,
    pub norm: NormKind,
    pub layers: Vec<LayerSpec>,
}

fn propagate(layers: &[LayerSpec], mut ch: usize, flat: &mut bool) -> Result<usize> {
    for l in layers {
        let expect = |want: usize| {
            if want == ch {
                Ok(())
            } else {
                Err(Error::Shape(format!(
                    "{l:?} expects {want} channels, gets {ch}"
                )))
            }
        };
        match l {
            LayerSpec::Conv { in_ch, out_ch, .. }
            | LayerSpec::Separable { in_ch, out_ch, .. }
            | LayerSpec::Pointwise { in_ch, out_ch, .. } => {
                expect(*in_ch)?;
                if *flat {
                    return Err(Error::Shape("convolution after pooling to a vector".into()));
                }
                ch = *out_ch;
            }
            LayerSpec::Norm { channels } => expect(*channels)?,
            LayerSpec::Dense { inputs, outputs } => {
                expect(*inputs)?;
                if !*flat {
                    return Err(Error::Shape("dense layer on a spatial map".into()));
                }
                ch = *outputs;
            }
            LayerSpec::GlobalAvgPool => *flat = true,
            LayerSpec::Residual { branch, shortcut } => {
                let b = propagate(branch, ch, flat)?;
                let s = propagate(shortcut, ch, flat)?;
                if b != s {
                    return Err(Error::Shape(format!(
                        "residual branch gives {b} channels, shortcut {s}"
                    )));
                }
                ch = b;
            }
            LayerSpec::Relu
            | LayerSpec::MaxPool { .. }
            | LayerSpec::Sigmoid
            | LayerSpec::Softmax => {}
        }
    }
    Ok(ch)
}

impl NetworkSpec {
    /// Checks channel compatibility and the head layout: global pooling,
    /// exactly two dense layers, one output activation at the very end.
    pub fn validate(&self) -> Result<()> {
        let mut flat = false;
        let out = propagate(&self.layers, self.input_channels, &mut flat)?;
        let activations = self
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Sigmoid | LayerSpec::Softmax))
            .count();
        let head = self.head()?;
        if activations != 1 {
            return Err(Error::Shape(format!(
                "expected exactly one output activation, found {activations}"
            )));
        }
        let want = match head {
            HeadKind::Sigmoid => 1,
            HeadKind::Softmax => 2,
        };
        if out != want {
            return Err(Error::Shape(format!(
                "{head:?} head needs {want} logits, got {out}"
            )));
        }
        let dense = self
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Dense { .. }))
            .count();
        if dense != 2 {
            return Err(Error::Shape(format!(
                "expected two dense layers, found {dense}"
            )));
        }
        let gap = self
            .layers
            .iter()
            .position(|l| *l == LayerSpec::GlobalAvgPool)
            .ok_or_else(|| Error::Shape("missing global average pool".into()))?;
        if self.layers[..gap]
            .iter()
            .any(|l| matches!(l, LayerSpec::Dense { .. }))
        {
            return Err(Error::Shape("dense layers must follow the backbone".into()));
        }
        Ok(())
    }

    pub fn head(&self) -> Result<HeadKind> {
        match self.layers.last() {
            Some(LayerSpec::Sigmoid) => Ok(HeadKind::Sigmoid),
            Some(LayerSpec::Softmax) => Ok(HeadKind::Softmax),
            _ => Err(Error::Shape(
                "network must end in sigmoid or softmax".into(),
            )),
        }
    }

    pub fn feature_dim(&self, tap: TapPoint) -> usize {
        let mut dense = self.layers.iter().filter_map(|l| match l {
            LayerSpec::Dense { inputs, outputs } => Some((*inputs, *outputs)),
            _ => None,
        });
        let (inputs, outputs) = dense.next().expect("validated spec has dense layers");
        match tap {
            TapPoint::BackboneOutput => inputs,
            TapPoint::Fc1Output => outputs,
        }
    }
}

fn sep(k: usize, cin: usize, cout: usize) -> LayerSpec {
    LayerSpec::Separable {
        kernel: k,
        stride: 1,
        in_ch: cin,
        out_ch: cout,
    }
}

fn norm(c: usize) -> LayerSpec {
    LayerSpec::Norm { channels: c }
}

/// Entry/exit-flow block: two separable convs and a strided max-pool, with
/// a strided 1×1 convolution on the shortcut.
fn downsampling_block(cin: usize, mid: usize, cout: usize, lead_relu: bool) -> LayerSpec {
    let mut branch = Vec::new();
    if lead_relu {
        branch.push(LayerSpec::Relu);
    }
    branch.extend([
        sep(3, cin, mid),
        norm(mid),
        LayerSpec::Relu,
        sep(3, mid, cout),
        norm(cout),
        LayerSpec::MaxPool {
            kernel: 3,
            stride: 2,
        },
    ]);
    LayerSpec::Residual {
        branch,
        shortcut: vec![
            LayerSpec::Pointwise {
                stride: 2,
                in_ch: cin,
                out_ch: cout,
            },
            norm(cout),
        ],
    }
}

/// Middle-flow block: three ReLU/separable/norm units and an identity
/// shortcut.
fn middle_block(c: usize) -> LayerSpec {
    let mut branch = Vec::new();
    for _ in 0..3 {
        branch.extend([LayerSpec::Relu, sep(3, c, c), norm(c)]);
    }
    LayerSpec::Residual {
        branch,
        shortcut: vec![],
    }
}

struct Widths {
    stem: [usize; 2],
    stem_stride: usize,
    entry: Vec<usize>,
    middle: usize,
    middle_blocks: usize,
    exit: [usize; 2],
    tail: [usize; 2],
    fc1: usize,
    min_input: usize,
}

/// The detector topology. `Full` follows Xception (entry flow with three
/// downsampling blocks, 8 middle-flow blocks, exit flow to 2,048 channels)
/// topped by FC 2048→512→1; `Desk` keeps every motif at 128 backbone
/// channels with FC 128→32→1.
pub fn build_detector(config: DetectorConfig, head: HeadKind, norm_kind: NormKind) -> NetworkSpec {
    let w = match config {
        DetectorConfig::Full => Widths {
            stem: [32, 64],
            stem_stride: 2,
            entry: vec![128, 256, 728],
            middle: 728,
            middle_blocks: 8,
            exit: [728, 1024],
            tail: [1536, 2048],
            fc1: 512,
            min_input: 32,
        },
        DetectorConfig::Desk => Widths {
            stem: [8, 16],
            stem_stride: 2,
            entry: vec![32, 64],
            middle: 64,
            middle_blocks: 2,
            exit: [64, 96],
            tail: [128, 128],
            fc1: 32,
            min_input: 16,
        },
    };
    let mut layers = vec![
        LayerSpec::Conv {
            kernel: 3,
            stride: w.stem_stride,
            in_ch: 3,
            out_ch: w.stem[0],
        },
        norm(w.stem[0]),
        LayerSpec::Relu,
        LayerSpec::Conv {
            kernel: 3,
            stride: 1,
            in_ch: w.stem[0],
            out_ch: w.stem[1],
        },
        norm(w.stem[1]),
        LayerSpec::Relu,
    ];
    let mut ch = w.stem[1];
    for (i, &c) in w.entry.iter().enumerate() {
        layers.push(downsampling_block(ch, c, c, i > 0));
        ch = c;
    }
    for _ in 0..w.middle_blocks {
        layers.push(middle_block(w.middle));
    }
    layers.push(downsampling_block(ch, w.exit[0], w.exit[1], true));
    layers.extend([
        sep(3, w.exit[1], w.tail[0]),
        norm(w.tail[0]),
        LayerSpec::Relu,
        sep(3, w.tail[0], w.tail[1]),
        norm(w.tail[1]),
        LayerSpec::Relu,
        LayerSpec::GlobalAvgPool,
        LayerSpec::Dense {
            inputs: w.tail[1],
            outputs: w.fc1,
        },
        LayerSpec::Relu,
    ]);
    match head {
        HeadKind::Sigmoid => layers.extend([
            LayerSpec::Dense {
                inputs: w.fc1,
                outputs: 1,
            },
            LayerSpec::Sigmoid,
        ]),
        HeadKind::Softmax => layers.extend([
            LayerSpec::Dense {
                inputs: w.fc1,
                outputs: 2,
            },
            LayerSpec::Softmax,
        ]),
    }
    let name = match config {
        DetectorConfig::Full => "xception-full",
        DetectorConfig::Desk => "xception-desk",
    };
    NetworkSpec {
        name: name.into(),
        input_channels: 3,
        min_input: w.min_input,
        norm: norm_kind,
        layers,
    }
}

#[derive(Clone, Debug)]
enum Node<T> {
    Layer(Layer<T>),
    Residual {
        branch: Vec<Layer<T>>,
        shortcut: Vec<Layer<T>>,
    },
}

fn instantiate<T: Real>(
    l: &LayerSpec,
    norm: NormKind,
    rng: &mut rng::StreamRng,
) -> Option<Layer<T>> {
    Some(match *l {
        LayerSpec::Conv {
            kernel,
            stride,
            in_ch,
            out_ch,
        } => Layer::Conv(Conv2d::new(
            kernel,
            stride,
            Padding::Same,
            in_ch,
            out_ch,
            rng,
        )),
        LayerSpec::Separable {
            kernel,
            stride,
            in_ch,
            out_ch,
        } => Layer::Separable(SeparableConv::new(
            kernel,
            stride,
            Padding::Same,
            in_ch,
            out_ch,
            rng,
        )),
        LayerSpec::Pointwise {
            stride,
            in_ch,
            out_ch,
        } => Layer::Pointwise(PointwiseConv::new(stride, in_ch, out_ch, rng)),
        LayerSpec::Norm { channels } => Layer::Norm(Norm::new(norm, channels)),
        LayerSpec::Relu => Layer::Relu(None),
        LayerSpec::MaxPool { kernel, stride } => Layer::MaxPool(MaxPool::new(kernel, stride)),
        LayerSpec::GlobalAvgPool => Layer::GlobalAvgPool(None),
        LayerSpec::Dense { inputs, outputs } => Layer::Dense(Dense::new(inputs, outputs, rng)),
        LayerSpec::Residual { .. } | LayerSpec::Sigmoid | LayerSpec::Softmax => return None,
    })
}

fn run_infer<T: Real>(layers: &[Layer<T>], mut x: Tensor<T>) -> Result<Tensor<T>> {
    for l in layers {
        x = l.infer(&x)?;
    }
    Ok(x)
}

fn run_forward<T: Real>(layers: &mut [Layer<T>], mut x: Tensor<T>) -> Result<Tensor<T>> {
    for l in layers {
        x = l.forward(x)?;
    }
    Ok(x)
}

fn run_backward<T: Real>(layers: &mut [Layer<T>], mut g: Tensor<T>) -> Result<Tensor<T>> {
    for l in layers.iter_mut().rev() {
        g = l.backward(g)?;
    }
    Ok(g)
}

fn join<T: Real>(mut a: Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "residual junction: branch {:?} vs shortcut {:?}",
            a.shape(),
            b.shape()
        )));
    }
    a.add_assign(b)?;
    Ok(a)
}

impl<T: Real> Node<T> {
    fn infer(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Node::Layer(l) => l.infer(&x),
            Node::Residual { branch, shortcut } => {
                let b = run_infer(branch, x.clone())?;
                let s = run_infer(shortcut, x)?;
                join(b, &s)
            }
        }
    }

    fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Node::Layer(l) => l.forward(x),
            Node::Residual { branch, shortcut } => {
                let b = run_forward(branch, x.clone())?;
                let s = run_forward(shortcut, x)?;
                join(b, &s)
            }
        }
    }

    fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Node::Layer(l) => l.backward(g),
            Node::Residual { branch, shortcut } => {
                let db = run_backward(branch, g.clone())?;
                let ds = run_backward(shortcut, g)?;
                join(db, &ds)
            }
        }
    }

    fn layers_mut(&mut self) -> Vec<(String, &mut Layer<T>)> {
        match self {
            Node::Layer(l) => vec![(String::new(), l)],
            Node::Residual { branch, shortcut } => branch
                .iter_mut()
                .enumerate()
                .map(|(i, l)| (format!(".branch{i}"), l))
                .chain(
                    shortcut
                        .iter_mut()
                        .enumerate()
                        .map(|(i, l)| (format!(".shortcut{i}"), l)),
                )
                .collect(),
        }
    }
}

/// Runtime network. The final activation is applied by the network itself,
/// so `nodes` end with the second dense layer.
#[derive(Clone, Debug)]
pub struct Network<T> {
    spec: NetworkSpec,
    head: HeadKind,
    nodes: Vec<Node<T>>,
    backbone_tap: usize,
    fc1_tap: usize,
    logits: Option<Tensor<T>>,
}

impl<T: Real> Network<T> {
    /// Instantiates `spec` with He-normal weights drawn from the `init`
    /// sub-stream of `seed`.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let head = spec.head()?;
        let mut rng = substream(seed, rng::INIT, 0);
        let mut nodes = Vec::new();
        for l in &spec.layers {
            match l {
                LayerSpec::Residual { branch, shortcut } => {
                    let mut make = |ls: &[LayerSpec]| {
                        ls.iter()
                            .map(|l| {
                                instantiate(l, spec.norm, &mut rng).ok_or_else(|| {
                                    Error::Shape("nested residuals are not supported".into())
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    };
                    let mut branch = make(branch)?;
                    // residual branches start switched off so every block
                    // begins as its shortcut
                    if let Some(Layer::Norm(n)) = branch
                        .iter_mut()
                        .rev()
                        .find(|l| matches!(l, Layer::Norm(_)))
                    {
                        n.gamma.value.fill(T::zero());
                    }
                    let shortcut = make(shortcut)?;
                    nodes.push(Node::Residual { branch, shortcut });
                }
                LayerSpec::Sigmoid | LayerSpec::Softmax => {}
                other => nodes.push(Node::Layer(
                    instantiate(other, spec.norm, &mut rng).expect("plain layer"),
                )),
            }
        }
        let backbone_tap = nodes
            .iter()
            .position(|n| matches!(n, Node::Layer(Layer::GlobalAvgPool(_))))
            .expect("validated");
        let first_dense = backbone_tap + 1;
        let fc1_tap = match nodes.get(first_dense + 1) {
            Some(Node::Layer(Layer::Relu(_))) => first_dense + 1,
            _ => first_dense,
        };
        Ok(Self {
            spec,
            head,
            nodes,
            backbone_tap,
            fc1_tap,
            logits: None,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn feature_dim(&self, tap: TapPoint) -> usize {
        self.spec.feature_dim(tap)
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, h, w, c) = x.dims4()?;
        if c != self.spec.input_channels {
            return Err(Error::Shape(format!(
                "network takes {} channels, got {c}",
                self.spec.input_channels
            )));
        }
        if h < self.spec.min_input || w < self.spec.min_input {
            return Err(Error::Shape(format!(
                "input {h}x{w} is below the {0}x{0} minimum",
                self.spec.min_input
            )));
        }
        Ok(())
    }

    fn probabilities(&self, logits: &Tensor<T>) -> Vec<T> {
        match self.head {
            HeadKind::Sigmoid => logits.data().iter().map(|&z| sigmoid(z)).collect(),
            HeadKind::Softmax => logits
                .data()
                .chunks_exact(2)
                .map(|z| sigmoid(z[1] - z[0]))
                .collect(),
        }
    }

    fn run_to(&self, x: &Tensor<T>, last: usize) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for node in &self.nodes[..=last] {
            h = node.infer(h)?;
        }
        Ok(h)
    }

    /// Pre-activation outputs of the last dense layer, `[n, 1]` or `[n, 2]`.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run_to(x, self.nodes.len() - 1)
    }

    /// Tampering probability per sample.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        Ok(self.probabilities(&self.logits(x)?))
    }

    /// Features at `tap`, shaped `[n, dim]`. The classification path runs
    /// through these same values.
    pub fn extract_features(&self, x: &Tensor<T>, tap: TapPoint) -> Result<Tensor<T>> {
        let last = match tap {
            TapPoint::BackboneOutput => self.backbone_tap,
            TapPoint::Fc1Output => self.fc1_tap,
        };
        self.run_to(x, last)
    }

    /// Both taps and the probabilities from a single pass.
    pub fn infer_with_taps(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
        self.check_input(x)?;
        let mut h = x.clone();
        let (mut backbone, mut fc1) = (None, None);
        for (i, node) in self.nodes.iter().enumerate() {
            h = node.infer(h)?;
            if i == self.backbone_tap {
                backbone = Some(h.clone());
            }
            if i == self.fc1_tap {
                fc1 = Some(h.clone());
            }
        }
        let probs = self.probabilities(&h);
        Ok((backbone.unwrap(), fc1.unwrap(), probs))
    }

    /// Training forward pass that caches activations for [`Self::backward`].
    pub fn forward_train(&mut self, x: Tensor<T>) -> Result<Vec<T>> {
        self.check_input(&x)?;
        let mut h = x;
        for node in &mut self.nodes {
            h = node.forward(h)?;
        }
        let probs = self.probabilities(&h);
        self.logits = Some(h);
        Ok(probs)
    }

    /// Back-propagates `dloss/dprobability` per sample, accumulating
    /// parameter gradients. Returns the gradient with respect to the input.
    pub fn backward(&mut self, dprob: &[T]) -> Result<Tensor<T>> {
        let logits = self
            .logits
            .take()
            .ok_or_else(|| Error::State("network backward without forward".into()))?;
        let probs = self.probabilities(&logits);
        if dprob.len() != probs.len() {
            return Err(Error::Shape(format!(
                "{} probability gradients for a batch of {}",
                dprob.len(),
                probs.len()
            )));
        }
        let dz: Vec<T> = match self.head {
            HeadKind::Sigmoid => probs
                .iter()
                .zip(dprob)
                .map(|(&p, &g)| g * p * (T::one() - p))
                .collect(),
            HeadKind::Softmax => probs
                .iter()
                .zip(dprob)
                .flat_map(|(&p, &g)| {
                    let d = g * p * (T::one() - p);
                    [-d, d]
                })
                .collect(),
        };
        let mut g = Tensor::from_vec(logits.shape(), dz)?;
        for node in self.nodes.iter_mut().rev() {
            g = node.backward(g)?;
        }
        Ok(g)
    }

    /// Forward, binary cross-entropy against `targets` (1 = seam-carved,
    /// 0 = untouched) and backward with each sample's loss gradient scaled
    /// by `weight`. Returns per-sample losses and probabilities.
    pub fn accumulate_gradients(
        &mut self,
        x: Tensor<T>,
        targets: &[T],
        weight: T,
    ) -> Result<(Vec<T>, Vec<T>)> {
        let probs = self.forward_train(x)?;
        if targets.len() != probs.len() {
            self.clear_caches();
            return Err(Error::Shape(format!(
                "{} targets for a batch of {}",
                targets.len(),
                probs.len()
            )));
        }
        let mut losses = Vec::with_capacity(probs.len());
        let mut dprob = Vec::with_capacity(probs.len());
        for (&p, &y) in probs.iter().zip(targets) {
            let (l, g) = bce_loss(p, y);
            losses.push(l);
            dprob.push(g * weight);
        }
        self.backward(&dprob)?;
        Ok((losses, probs))
    }

    pub fn clear_caches(&mut self) {
        self.logits = None;
        for node in &mut self.nodes {
            for (_, l) in node.layers_mut() {
                l.clear_cache();
            }
        }
    }

    /// Visits every layer with a stable dotted name prefix.
    fn layers_mut(&mut self) -> Vec<(String, &mut Layer<T>)> {
        let mut out = Vec::new();
        for (i, node) in self.nodes.iter_mut().enumerate() {
            for (suffix, l) in node.layers_mut() {
                let name = format!("n{i:02}{suffix}.{}", l.kind());
                out.push((name, l));
            }
        }
        out
    }

    /// Trainable parameters in a stable order with stable names.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        for (prefix, layer) in self.layers_mut() {
            for (pname, p) in layer.params_mut() {
                out.push((format!("{prefix}.{pname}"), p));
            }
        }
        out
    }

    /// Parameters plus non-trainable buffers, as saved in checkpoints.
    pub fn state_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (prefix, layer) in self.layers_mut() {
            let bufs: Vec<(&'static str, *mut Tensor<T>)> = layer
                .buffers_mut()
                .into_iter()
                .map(|(n, t)| (n, t as *mut _))
                .collect();
            for (pname, p) in layer.params_mut() {
                out.push((format!("{prefix}.{pname}"), &mut p.value));
            }
            for (bname, t) in bufs {
                // SAFETY: buffers and params are disjoint fields of `layer`,
                // and `layer` outlives the returned references.
                out.push((format!("{prefix}.{bname}"), unsafe { &mut *t }));
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }

    pub fn num_params(&mut self) -> usize {
        self.params_mut().iter().map(|(_, p)| p.value.len()).sum()
    }

    /// Sets both dense layers to zero, making every output exactly 0.5.
    pub fn zero_head(&mut self) {
        for (name, p) in self.params_mut() {
            if name.contains(".dense.") {
                p.value.fill(T::zero());
            }
        }
    }
}


#[cfg(test)]
mod gradient_tests {
    use super::*;
    use rand::Rng;

    fn loss(net: &Network<f64>, x: &Tensor<f64>, y: &[f64]) -> f64 {
        let p = net.infer(x).unwrap();
        p.iter()
            .zip(y)
            .map(|(&p, &y)| bce_loss(p, y).0)
            .sum::<f64>()
            / y.len() as f64
    }

    #[test]
    fn desk_network_matches_finite_differences() {
        for head in [HeadKind::Sigmoid, HeadKind::Softmax] {
            let spec = build_detector(DetectorConfig::Desk, head, NormKind::Affine);
            let mut net = Network::<f64>::new(spec, 5).unwrap();
            let mut rng = substream(5, "gradcheck", 0);
            // wake the residual branches up so their gradients are non-trivial
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
            let eps = 1e-5;
            let mut worst = 0.0f64;
            let mut params = net.params_mut();
            for _ in 0..40 {
                let which = rng.random_range(0..params.len());
                let k = rng.random_range(0..params[which].1.value.len());
                let analytic = params[which].1.grad.data()[k];
                let orig = params[which].1.value.data()[k];
                params[which].1.value.data_mut()[k] = orig + eps;
                drop(params);
                let up = loss(&net, &x, &y);
                params = net.params_mut();
                params[which].1.value.data_mut()[k] = orig - eps;
                drop(params);
                let down = loss(&net, &x, &y);
                params = net.params_mut();
                params[which].1.value.data_mut()[k] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
                worst = worst.max(rel);
            }
            assert!(worst < 1e-4, "{head:?}: max relative error {worst}");
        }
    }
}
