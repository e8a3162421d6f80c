//! Sequential models described by a serializable layer list.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use walshnet_core::factor::serde_factor;
use walshnet_core::{Dims4, Factor, LayerConfig, LayerKind, ParamCount, Precision, Tensor4, WhtTape};

use crate::error::{Result, TrainError};
use crate::ops::{
    gap_backward, gap_forward, relu_backward, relu_forward, subsample_backward, subsample_dims, subsample_forward,
    BatchNorm, BatchNormTape, Conv2d, ConvTape, Dense, DenseTape, SeTape, SqueezeExcite, WhtNode,
};
use crate::param::{join, ParamRole, ParamView};
use crate::real::Real;

/// Largest block size used by the WHT shortcut of revised residual blocks.
pub const DEFAULT_SHORTCUT_BLOCK: usize = 32;

fn one() -> Factor {
    Factor::from_integer(1)
}

fn stride_one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// Residual block layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockVariant {
    /// conv3x3-BN-ReLU-conv3x3-BN with a 1x1 conv shortcut on shape change.
    Original,
    /// First conv kept, second conv a 2D WHT layer, BWHT shortcut.
    PartiallyRevised,
    /// Both convs replaced by 2D WHT layers, BWHT shortcut.
    CompletelyRevised,
}

/// One entry of a model's layer list. WHT layers take their input channels
/// and spatial size from shape inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "stride_one")]
        stride: usize,
        #[serde(default)]
        bias: bool,
    },
    BatchNorm,
    Relu,
    Gap,
    Dense {
        units: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    SqueezeExcite {
        #[serde(with = "serde_factor")]
        ratio: Factor,
    },
    Wht {
        kind: LayerKind,
        #[serde(with = "serde_factor", default = "one")]
        expansion_factor: Factor,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        block_size: Option<usize>,
        #[serde(default)]
        residual: bool,
        #[serde(default)]
        weighted: bool,
    },
    Subsample {
        stride: usize,
    },
    Residual {
        variant: BlockVariant,
        out_channels: usize,
        #[serde(default = "stride_one")]
        stride: usize,
        #[serde(default)]
        conv_bias: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        block_size: Option<usize>,
        #[serde(default)]
        weighted: bool,
    },
}

impl LayerSpec {
    pub fn conv(out_channels: usize, kernel: usize, stride: usize, bias: bool) -> Self {
        LayerSpec::Conv {
            out_channels,
            kernel,
            stride,
            bias,
        }
    }

    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units, bias: true }
    }

    pub fn wht(kind: LayerKind, expansion_factor: Factor, block_size: Option<usize>) -> Self {
        LayerSpec::Wht {
            kind,
            expansion_factor,
            block_size,
            residual: false,
            weighted: false,
        }
    }

    pub fn fwht_2d(residual: bool, weighted: bool) -> Self {
        LayerSpec::Wht {
            kind: LayerKind::Fwht2d,
            expansion_factor: one(),
            block_size: None,
            residual,
            weighted,
        }
    }

    pub fn residual(variant: BlockVariant, out_channels: usize, stride: usize, conv_bias: bool, weighted: bool) -> Self {
        LayerSpec::Residual {
            variant,
            out_channels,
            stride,
            conv_bias,
            block_size: None,
            weighted,
        }
    }

    /// Short human-readable description.
    pub fn label(&self) -> String {
        match self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                ..
            } => format!("conv{kernel}x{kernel}/s{stride}->{out_channels}"),
            LayerSpec::BatchNorm => "batch-norm".into(),
            LayerSpec::Relu => "relu".into(),
            LayerSpec::Gap => "gap".into(),
            LayerSpec::Dense { units, .. } => format!("dense->{units}"),
            LayerSpec::SqueezeExcite { ratio } => format!("squeeze-excite({ratio})"),
            LayerSpec::Wht {
                kind,
                expansion_factor,
                block_size,
                residual,
                weighted,
            } => {
                let mut s = format!("{kind}");
                if *expansion_factor != one() {
                    s += &format!(" x{expansion_factor}");
                }
                if let Some(b) = block_size {
                    s += &format!(" s={b}");
                }
                if *residual {
                    s += " residual";
                }
                if *weighted {
                    s += " weighted";
                }
                s
            }
            LayerSpec::Subsample { stride } => format!("subsample/s{stride}"),
            LayerSpec::Residual {
                variant,
                out_channels,
                stride,
                ..
            } => format!("residual-{variant:?}/s{stride}->{out_channels}").to_lowercase(),
        }
    }
}

/// Spatial size and channels of one input item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputShape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl InputShape {
    pub fn dims(&self, n: usize) -> Dims4 {
        Dims4::new(n, self.width, self.height, self.channels)
    }
}

/// Complete model description: input shape, layers, initialization seed and
/// precision. The last layer must be the dense classifier head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input: InputShape,
    pub classes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(TrainError::Model("a classifier needs at least two classes".into()));
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { units, .. }) if *units == self.classes => {}
            _ => {
                return Err(TrainError::Model(format!(
                    "the last layer must be a dense head with {} units",
                    self.classes
                )))
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        build_sequence::<f64>(&self.layers, self.input.dims(1), &mut rng)?;
        Ok(())
    }
}

fn is_power_of_two(c: usize) -> bool {
    c.is_power_of_two()
}

fn wht_shortcut(in_channels: usize, out_channels: usize, block_size: Option<usize>) -> Result<LayerSpec> {
    let ratio = Factor::new(out_channels, in_channels);
    let (kind, block) = if out_channels > in_channels {
        (LayerKind::BwhtExpand, block_size.unwrap_or(in_channels.min(DEFAULT_SHORTCUT_BLOCK)))
    } else {
        (LayerKind::BwhtProject, block_size.unwrap_or(out_channels.min(DEFAULT_SHORTCUT_BLOCK)))
    };
    Ok(LayerSpec::wht(kind, ratio, Some(block)))
}

/// Main path and shortcut of a residual block, both as primitive layers.
pub fn block_layers(
    variant: BlockVariant,
    in_channels: usize,
    out_channels: usize,
    stride: usize,
    conv_bias: bool,
    block_size: Option<usize>,
    weighted: bool,
) -> Result<(Vec<LayerSpec>, Vec<LayerSpec>)> {
    if stride == 0 || out_channels == 0 {
        return Err(TrainError::Model("residual block needs positive stride and channels".into()));
    }
    let reshapes = stride != 1 || in_channels != out_channels;
    let wht_shortcut_layers = || -> Result<Vec<LayerSpec>> {
        let mut layers = Vec::new();
        if stride != 1 {
            layers.push(LayerSpec::Subsample { stride });
        }
        if in_channels != out_channels {
            layers.push(wht_shortcut(in_channels, out_channels, block_size)?);
        }
        Ok(layers)
    };
    if variant != BlockVariant::Original && !(is_power_of_two(in_channels) && is_power_of_two(out_channels)) {
        return Err(TrainError::Model(format!(
            "{variant:?} residual blocks need power-of-two channels, got {in_channels} -> {out_channels}"
        )));
    }
    Ok(match variant {
        BlockVariant::Original => {
            let main = vec![
                LayerSpec::conv(out_channels, 3, stride, conv_bias),
                LayerSpec::BatchNorm,
                LayerSpec::Relu,
                LayerSpec::conv(out_channels, 3, 1, conv_bias),
                LayerSpec::BatchNorm,
            ];
            let shortcut = if reshapes {
                vec![LayerSpec::conv(out_channels, 1, stride, conv_bias)]
            } else {
                Vec::new()
            };
            (main, shortcut)
        }
        BlockVariant::PartiallyRevised => {
            let main = vec![
                LayerSpec::conv(out_channels, 3, stride, conv_bias),
                LayerSpec::BatchNorm,
                LayerSpec::Relu,
                LayerSpec::fwht_2d(false, weighted),
                LayerSpec::BatchNorm,
            ];
            (main, wht_shortcut_layers()?)
        }
        BlockVariant::CompletelyRevised => {
            let mut main = wht_shortcut_layers()?;
            main.extend([
                LayerSpec::fwht_2d(false, weighted),
                LayerSpec::BatchNorm,
                LayerSpec::Relu,
                LayerSpec::fwht_2d(false, weighted),
                LayerSpec::BatchNorm,
            ]);
            (main, wht_shortcut_layers()?)
        }
    })
}

/// A residual block: `relu(main(x) + shortcut(x))`.
#[derive(Debug, Clone)]
pub struct ResidualNode<S> {
    pub variant: BlockVariant,
    pub main: Vec<Node<S>>,
    pub shortcut: Vec<Node<S>>,
}

#[derive(Debug, Clone)]
pub enum Node<S> {
    Conv(Conv2d<S>),
    BatchNorm(BatchNorm<S>),
    Relu,
    Gap,
    Dense(Dense<S>),
    SqueezeExcite(SqueezeExcite<S>),
    Wht(WhtNode<S>),
    Subsample(usize),
    Residual(Box<ResidualNode<S>>),
}

/// Saved intermediates of one node's training-mode forward pass.
#[derive(Debug, Clone)]
pub enum Tape<S> {
    Conv(ConvTape<S>),
    BatchNorm(BatchNormTape<S>),
    Relu(Tensor4<S>),
    Gap(Dims4),
    Dense(DenseTape<S>),
    SqueezeExcite(SeTape<S>),
    Wht(WhtTape<S>),
    Subsample(Dims4),
    Residual {
        main: Vec<Tape<S>>,
        shortcut: Vec<Tape<S>>,
        output: Tensor4<S>,
    },
}

fn build_node<S: Real>(spec: &LayerSpec, input: Dims4, rng: &mut ChaCha8Rng) -> Result<(Node<S>, Dims4)> {
    let c = input.c;
    Ok(match spec {
        LayerSpec::Conv {
            out_channels,
            kernel,
            stride,
            bias,
        } => {
            let conv = Conv2d::new(c, *out_channels, *kernel, *stride, *bias, rng);
            let out = conv.shape(input)?.output;
            (Node::Conv(conv), out)
        }
        LayerSpec::BatchNorm => (Node::BatchNorm(BatchNorm::new(c)), input),
        LayerSpec::Relu => (Node::Relu, input),
        LayerSpec::Gap => (Node::Gap, Dims4::new(input.n, 1, 1, c)),
        LayerSpec::Dense { units, bias } => {
            if *units == 0 {
                return Err(TrainError::Model("dense layer with zero units".into()));
            }
            (
                Node::Dense(Dense::new(input.item_len(), *units, *bias, rng)),
                Dims4::new(input.n, 1, 1, *units),
            )
        }
        LayerSpec::SqueezeExcite { ratio } => (Node::SqueezeExcite(SqueezeExcite::new(c, *ratio, rng)?), input),
        LayerSpec::Wht {
            kind,
            expansion_factor,
            block_size,
            residual,
            weighted,
        } => {
            let cfg = LayerConfig {
                kind: *kind,
                in_channels: c,
                expansion_factor: *expansion_factor,
                block_size: *block_size,
                residual: *residual,
                weighted: *weighted,
                spatial_dims: (*kind == LayerKind::Fwht2d).then_some((input.w, input.h)),
            };
            let out = cfg.output_dims(input)?;
            (Node::Wht(WhtNode::new(cfg, rng)?), out)
        }
        LayerSpec::Subsample { stride } => (Node::Subsample(*stride), subsample_dims(input, *stride)?),
        LayerSpec::Residual {
            variant,
            out_channels,
            stride,
            conv_bias,
            block_size,
            weighted,
        } => {
            let (main_specs, short_specs) =
                block_layers(*variant, c, *out_channels, *stride, *conv_bias, *block_size, *weighted)?;
            let (main, main_out) = build_sequence(&main_specs, input, rng)?;
            let (shortcut, short_out) = build_sequence(&short_specs, input, rng)?;
            if main_out != short_out {
                return Err(TrainError::Model(format!(
                    "residual paths disagree: main {main_out}, shortcut {short_out}"
                )));
            }
            let node = ResidualNode {
                variant: *variant,
                main,
                shortcut,
            };
            (Node::Residual(Box::new(node)), main_out)
        }
    })
}

fn build_sequence<S: Real>(specs: &[LayerSpec], input: Dims4, rng: &mut ChaCha8Rng) -> Result<(Vec<Node<S>>, Dims4)> {
    let mut dims = input;
    let mut nodes = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let (node, out) = build_node(spec, dims, rng)
            .map_err(|e| TrainError::Model(format!("layer {i} ({}): {e}", spec.label())))?;
        nodes.push(node);
        dims = out;
    }
    Ok((nodes, dims))
}

impl<S: Real> Node<S> {
    fn forward_train(&mut self, x: &Tensor4<S>) -> Result<(Tensor4<S>, Tape<S>)> {
        Ok(match self {
            Node::Conv(conv) => {
                let (y, t) = conv.forward(x)?;
                (y, Tape::Conv(t))
            }
            Node::BatchNorm(bn) => {
                let (y, t) = bn.forward_train(x)?;
                (y, Tape::BatchNorm(t))
            }
            Node::Relu => {
                let y = relu_forward(x);
                (y.clone(), Tape::Relu(y))
            }
            Node::Gap => (gap_forward(x), Tape::Gap(x.dims())),
            Node::Dense(dense) => {
                let (y, t) = dense.forward(x)?;
                (y, Tape::Dense(t))
            }
            Node::SqueezeExcite(se) => {
                let (y, t) = se.forward(x)?;
                (y, Tape::SqueezeExcite(t))
            }
            Node::Wht(wht) => {
                let (y, t) = wht.forward(x)?;
                (y, Tape::Wht(t))
            }
            Node::Subsample(stride) => (subsample_forward(x, *stride)?, Tape::Subsample(x.dims())),
            Node::Residual(block) => {
                let mut main = Vec::with_capacity(block.main.len());
                let mut shortcut = Vec::with_capacity(block.shortcut.len());
                let mut y = forward_train_seq(&mut block.main, x, &mut main)?;
                y.add_assign(&forward_train_seq(&mut block.shortcut, x, &mut shortcut)?);
                let out = relu_forward(&y);
                (
                    out.clone(),
                    Tape::Residual {
                        main,
                        shortcut,
                        output: out,
                    },
                )
            }
        })
    }

    fn predict(&self, x: &Tensor4<S>) -> Result<Tensor4<S>> {
        Ok(match self {
            Node::Conv(conv) => conv.forward(x)?.0,
            Node::BatchNorm(bn) => bn.forward_eval(x)?,
            Node::Relu => relu_forward(x),
            Node::Gap => gap_forward(x),
            Node::Dense(dense) => dense.forward(x)?.0,
            Node::SqueezeExcite(se) => se.forward(x)?.0,
            Node::Wht(wht) => wht.forward(x)?.0,
            Node::Subsample(stride) => subsample_forward(x, *stride)?,
            Node::Residual(block) => {
                let mut y = predict_seq(&block.main, x)?;
                y.add_assign(&predict_seq(&block.shortcut, x)?);
                relu_forward(&y)
            }
        })
    }

    fn backward(&mut self, tape: &Tape<S>, dy: &Tensor4<S>) -> Result<Tensor4<S>> {
        match (self, tape) {
            (Node::Conv(conv), Tape::Conv(t)) => conv.backward(t, dy),
            (Node::BatchNorm(bn), Tape::BatchNorm(t)) => bn.backward(t, dy),
            (Node::Relu, Tape::Relu(out)) => Ok(relu_backward(out, dy)),
            (Node::Gap, Tape::Gap(d)) => Ok(gap_backward(*d, dy)),
            (Node::Dense(dense), Tape::Dense(t)) => dense.backward(t, dy),
            (Node::SqueezeExcite(se), Tape::SqueezeExcite(t)) => se.backward(t, dy),
            (Node::Wht(wht), Tape::Wht(t)) => wht.backward(t, dy),
            (Node::Subsample(stride), Tape::Subsample(d)) => subsample_backward(*d, *stride, dy),
            (
                Node::Residual(block),
                Tape::Residual {
                    main,
                    shortcut,
                    output,
                },
            ) => {
                let g = relu_backward(output, dy);
                let mut dx = backward_seq(&mut block.main, main, &g)?;
                dx.add_assign(&backward_seq(&mut block.shortcut, shortcut, &g)?);
                Ok(dx)
            }
            _ => Err(TrainError::Model("tape does not belong to this node".into())),
        }
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_, S>)) {
        match self {
            Node::Conv(conv) => conv.visit_params(prefix, f),
            Node::BatchNorm(bn) => bn.visit_params(prefix, f),
            Node::Dense(dense) => dense.visit_params(prefix, f),
            Node::SqueezeExcite(se) => se.visit_params(prefix, f),
            Node::Wht(wht) => wht.visit_params(prefix, f),
            Node::Residual(block) => {
                for (i, node) in block.main.iter_mut().enumerate() {
                    node.visit_params(&join(prefix, &format!("main.{i}")), f);
                }
                for (i, node) in block.shortcut.iter_mut().enumerate() {
                    node.visit_params(&join(prefix, &format!("shortcut.{i}")), f);
                }
            }
            Node::Relu | Node::Gap | Node::Subsample(_) => {}
        }
    }

    fn wht_nodes<'a>(&'a self, out: &mut Vec<&'a WhtNode<S>>) {
        match self {
            Node::Wht(w) => out.push(w),
            Node::Residual(block) => {
                block.main.iter().chain(&block.shortcut).for_each(|n| n.wht_nodes(out));
            }
            _ => {}
        }
    }
}

fn forward_train_seq<S: Real>(nodes: &mut [Node<S>], x: &Tensor4<S>, tapes: &mut Vec<Tape<S>>) -> Result<Tensor4<S>> {
    let mut cur = x.clone();
    for node in nodes {
        let (y, tape) = node.forward_train(&cur)?;
        tapes.push(tape);
        cur = y;
    }
    Ok(cur)
}

fn predict_seq<S: Real>(nodes: &[Node<S>], x: &Tensor4<S>) -> Result<Tensor4<S>> {
    let mut cur = x.clone();
    for node in nodes {
        cur = node.predict(&cur)?;
    }
    Ok(cur)
}

fn backward_seq<S: Real>(nodes: &mut [Node<S>], tapes: &[Tape<S>], dy: &Tensor4<S>) -> Result<Tensor4<S>> {
    if nodes.len() != tapes.len() {
        return Err(TrainError::Model("tape length does not match the model".into()));
    }
    let mut grad = dy.clone();
    for (node, tape) in nodes.iter_mut().zip(tapes).rev() {
        grad = node.backward(tape, &grad)?;
    }
    Ok(grad)
}

fn wht_kink_margin<S: Real>(tape: &Tape<S>, node: &Node<S>, best: &mut Option<S>) {
    let mut update = |m: Option<S>| {
        if let Some(m) = m {
            *best = Some(best.map_or(m, |b: S| b.min(m)));
        }
    };
    match (node, tape) {
        (Node::Wht(w), Tape::Wht(t)) => update(w.layer.kink_margin(t)),
        (Node::Residual(block), Tape::Residual { main, shortcut, .. }) => {
            for (n, t) in block.main.iter().zip(main).chain(block.shortcut.iter().zip(shortcut)) {
                wht_kink_margin(t, n, best);
            }
        }
        _ => {}
    }
}

/// Trainable and non-trainable parameter totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamTotals {
    pub trainable: usize,
    pub non_trainable: usize,
}

impl ParamTotals {
    pub fn total(&self) -> usize {
        self.trainable + self.non_trainable
    }

    fn add_view<S>(&mut self, v: &ParamView<'_, S>) {
        match v.role {
            ParamRole::Statistic => self.non_trainable += v.value.len(),
            _ => self.trainable += v.trainable_len(),
        }
    }
}

/// Per-layer row of a parameter report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSummary {
    pub index: usize,
    pub label: String,
    pub output: (usize, usize, usize),
    pub trainable: usize,
    pub non_trainable: usize,
    /// Parameters of the convolution a WHT layer stands in for.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replaced_conv: Option<usize>,
}

/// All saved intermediates of a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ModelTape<S> {
    tapes: Vec<Tape<S>>,
}

/// A built model with its parameters.
#[derive(Debug, Clone)]
pub struct Model<S> {
    spec: ModelSpec,
    nodes: Vec<Node<S>>,
    output_dims: Vec<Dims4>,
}

impl<S: Real> Model<S> {
    /// Builds the layers in order, initializing from a generator seeded with
    /// `spec.seed`.
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut dims = spec.input.dims(1);
        let mut nodes = Vec::with_capacity(spec.layers.len());
        let mut output_dims = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let (node, out) = build_node(layer, dims, &mut rng)
                .map_err(|e| TrainError::Model(format!("layer {i} ({}): {e}", layer.label())))?;
            nodes.push(node);
            output_dims.push(out);
            dims = out;
        }
        Ok(Self {
            spec,
            nodes,
            output_dims,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn input_dims(&self, n: usize) -> Dims4 {
        self.spec.input.dims(n)
    }

    fn check_input(&self, x: &Tensor4<S>) -> Result<()> {
        let d = x.dims();
        if d != self.input_dims(d.n) {
            return Err(TrainError::Model(format!(
                "model expects items of {}x{}x{}, got {d}",
                self.spec.input.width, self.spec.input.height, self.spec.input.channels
            )));
        }
        Ok(())
    }

    /// Training-mode forward pass: batch statistics, running statistics
    /// updated, intermediates saved for [`Model::backward`].
    pub fn forward_train(&mut self, x: &Tensor4<S>) -> Result<(Tensor4<S>, ModelTape<S>)> {
        self.check_input(x)?;
        let mut tapes = Vec::with_capacity(self.nodes.len());
        let y = forward_train_seq(&mut self.nodes, x, &mut tapes)?;
        Ok((y, ModelTape { tapes }))
    }

    /// Evaluation-mode forward pass using running statistics.
    pub fn predict(&self, x: &Tensor4<S>) -> Result<Tensor4<S>> {
        self.check_input(x)?;
        predict_seq(&self.nodes, x)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, tape: &ModelTape<S>, dy: &Tensor4<S>) -> Result<Tensor4<S>> {
        backward_seq(&mut self.nodes, &tape.tapes, dy)
    }

    /// Smallest distance of any thresholded WHT coefficient to its kink.
    pub fn kink_margin(&self, tape: &ModelTape<S>) -> Option<S> {
        let mut best = None;
        for (node, t) in self.nodes.iter().zip(&tape.tapes) {
            wht_kink_margin(t, node, &mut best);
        }
        best
    }

    /// Visits every parameter tensor in a fixed order with a dotted name
    /// rooted at the layer index.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(ParamView<'_, S>)) {
        for (i, node) in self.nodes.iter_mut().enumerate() {
            node.visit_params(&i.to_string(), f);
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |v| v.grad.fill(S::zero()));
    }

    pub fn param_totals(&mut self) -> ParamTotals {
        let mut totals = ParamTotals::default();
        self.visit_params(&mut |v| totals.add_view(&v));
        totals
    }

    pub fn wht_nodes(&self) -> Vec<&WhtNode<S>> {
        let mut out = Vec::new();
        self.nodes.iter().for_each(|n| n.wht_nodes(&mut out));
        out
    }

    /// Counts of every WHT layer together with the convolution each replaces.
    pub fn wht_param_counts(&self) -> Vec<ParamCount> {
        self.wht_nodes().iter().map(|w| w.layer.param_count()).collect()
    }

    pub fn layer_summaries(&mut self) -> Vec<LayerSummary> {
        let labels: Vec<String> = self.spec.layers.iter().map(LayerSpec::label).collect();
        let dims = self.output_dims.clone();
        let mut rows = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter_mut().enumerate() {
            let mut totals = ParamTotals::default();
            node.visit_params("", &mut |v| totals.add_view(&v));
            let replaced_conv = match node {
                Node::Wht(w) => Some(w.layer.param_count().comparison_conv),
                _ => None,
            };
            rows.push(LayerSummary {
                index: i,
                label: labels[i].clone(),
                output: (dims[i].w, dims[i].h, dims[i].c),
                trainable: totals.trainable,
                non_trainable: totals.non_trainable,
                replaced_conv,
            });
        }
        rows
    }
}

/// Named model presets.
pub mod presets {
    use super::*;

    pub const NAMES: [&str; 7] = [
        "resnet20",
        "resnet20-partially-revised",
        "resnet20-completely-revised",
        "mnist-baseline",
        "mnist-bwht",
        "mnist-fwht2d-gap",
        "xor",
    ];

    pub fn by_name(name: &str) -> Result<ModelSpec> {
        Ok(match name {
            "resnet20" => resnet20(BlockVariant::Original, false),
            "resnet20-partially-revised" => resnet20(BlockVariant::PartiallyRevised, false),
            "resnet20-completely-revised" => resnet20(BlockVariant::CompletelyRevised, false),
            "mnist-baseline" => mnist_baseline(),
            "mnist-bwht" => mnist_bwht(),
            "mnist-fwht2d-gap" => mnist_fwht2d_gap(),
            "xor" => xor(),
            other => {
                return Err(TrainError::Config(format!(
                    "unknown preset `{other}` (known: {})",
                    NAMES.join(", ")
                )))
            }
        })
    }

    /// ResNet-20 for 32x32x3 inputs and 10 classes: a 16-channel stem, three
    /// stages of three residual blocks at 16, 32 and 64 channels, global
    /// average pooling and a dense head. Convolutions carry biases.
    pub fn resnet20(variant: BlockVariant, weighted: bool) -> ModelSpec {
        let mut layers = vec![LayerSpec::conv(16, 3, 1, true), LayerSpec::BatchNorm, LayerSpec::Relu];
        for (stage, channels) in [16usize, 32, 64].into_iter().enumerate() {
            for block in 0..3 {
                let stride = if stage > 0 && block == 0 { 2 } else { 1 };
                layers.push(LayerSpec::residual(variant, channels, stride, true, weighted));
            }
        }
        layers.push(LayerSpec::Gap);
        layers.push(LayerSpec::dense(10));
        ModelSpec {
            input: InputShape {
                width: 32,
                height: 32,
                channels: 3,
            },
            classes: 10,
            seed: 0,
            precision: Precision::F64,
            layers,
        }
    }

    fn conv_bn_relu(layers: &mut Vec<LayerSpec>, out: usize, kernel: usize, stride: usize) {
        layers.push(LayerSpec::conv(out, kernel, stride, false));
        layers.push(LayerSpec::BatchNorm);
        layers.push(LayerSpec::Relu);
    }

    fn mnist_layers(mixing: LayerSpec) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        conv_bn_relu(&mut layers, 8, 3, 2);
        conv_bn_relu(&mut layers, 16, 3, 1);
        conv_bn_relu(&mut layers, 32, 3, 2);
        layers.push(mixing);
        layers.push(LayerSpec::BatchNorm);
        layers.push(LayerSpec::Relu);
        conv_bn_relu(&mut layers, 32, 3, 2);
        layers.push(LayerSpec::Gap);
        layers.push(LayerSpec::dense(10));
        layers
    }

    fn mnist(layers: Vec<LayerSpec>) -> ModelSpec {
        ModelSpec {
            input: InputShape {
                width: 28,
                height: 28,
                channels: 1,
            },
            classes: 10,
            seed: 0,
            precision: Precision::F32,
            layers,
        }
    }

    /// Small conv net for 28x28 digits. Its widest channel-mixing layer is
    /// the 1x1 conv from 32 to 64 channels.
    pub fn mnist_baseline() -> ModelSpec {
        mnist(mnist_layers(LayerSpec::conv(64, 1, 1, false)))
    }

    /// [`mnist_baseline`] with the 1x1 conv replaced by a BWHT expansion.
    pub fn mnist_bwht() -> ModelSpec {
        mnist(mnist_layers(LayerSpec::wht(
            LayerKind::BwhtExpand,
            Factor::from_integer(2),
            Some(32),
        )))
    }

    /// [`mnist_baseline`] with a residual weighted 2D WHT layer before GAP.
    pub fn mnist_fwht2d_gap() -> ModelSpec {
        let mut layers = mnist_layers(LayerSpec::conv(64, 1, 1, false));
        let gap = layers.len() - 2;
        layers.insert(gap, LayerSpec::fwht_2d(true, true));
        mnist(layers)
    }

    /// Two-layer dense net on two input features.
    pub fn xor() -> ModelSpec {
        ModelSpec {
            input: InputShape {
                width: 1,
                height: 1,
                channels: 2,
            },
            classes: 2,
            seed: 0,
            precision: Precision::F64,
            layers: vec![LayerSpec::dense(8), LayerSpec::Relu, LayerSpec::dense(2)],
        }
    }
}
