//! Small feed-forward networks with a flat parameter space.
//!
//! A [`Network`] is a straight-line stack of layers ending in a linear
//! classification head. Every trainable scalar lives in one flat `Vec<f64>`
//! (the [`ParamSet`]), addressed by a stable flat index; each parameter also
//! carries a learning-rate scale in `[0, 1]`, so freezing a layer is just
//! setting its scales to zero — a frozen parameter is bit-identical after
//! any number of update steps. Regularizers that need per-parameter state
//! (importance vectors, anchors) share the same index space.
//!
//! Supported layers: dense, depthwise convolution (one spatial filter per
//! input channel), pointwise convolution (1x1 across channels), ReLU,
//! batch (re)normalization, and the output head. Convolutions are "valid"
//! (no padding), stride 1. Weight initialization is uniform scaled by
//! fan-in, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, from a seeded generator;
//! biases start at zero, normalization scales at one.

pub mod loss;
pub mod update;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::norm::{self, NormCache, NormKind, NormState};
use crate::tensor::Tensor;

/// Structural description of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    /// One `kernel x kernel` spatial filter per input channel.
    DepthwiseConv { channels: usize, kernel: usize },
    /// 1x1 convolution mixing channels at each spatial position.
    PointwiseConv {
        in_channels: usize,
        out_channels: usize,
    },
    Relu,
    Norm { channels: usize, kind: NormKind },
    /// Linear classification head; must be the final layer.
    Head { inputs: usize, classes: usize },
}

impl LayerSpec {
    /// Number of trainable scalars this layer owns.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs } => inputs * outputs + outputs,
            LayerSpec::DepthwiseConv { channels, kernel } => channels * kernel * kernel + channels,
            LayerSpec::PointwiseConv {
                in_channels,
                out_channels,
            } => in_channels * out_channels + out_channels,
            LayerSpec::Relu => 0,
            LayerSpec::Norm { channels, .. } => 2 * channels,
            LayerSpec::Head { inputs, classes } => inputs * classes + classes,
        }
    }

    /// Short human-readable name used in error messages.
    pub fn name(&self) -> String {
        match *self {
            LayerSpec::Dense { inputs, outputs } => format!("dense({inputs}->{outputs})"),
            LayerSpec::DepthwiseConv { channels, kernel } => {
                format!("dwconv(c{channels},k{kernel})")
            }
            LayerSpec::PointwiseConv {
                in_channels,
                out_channels,
            } => format!("pwconv({in_channels}->{out_channels})"),
            LayerSpec::Relu => "relu".into(),
            LayerSpec::Norm { channels, kind } => match kind {
                NormKind::Batch => format!("bn(c{channels})"),
                NormKind::BatchRenorm => format!("brn(c{channels})"),
            },
            LayerSpec::Head { inputs, classes } => format!("head({inputs}->{classes})"),
        }
    }

    /// Per-sample output shape for a given per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let flat: usize = input.iter().product();
        let mismatch = |expected: String| Error::ShapeMismatch {
            layer: self.name(),
            expected,
            got: format!("{input:?}"),
        };
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if flat != inputs {
                    return Err(mismatch(format!("{inputs} input values")));
                }
                Ok(vec![outputs])
            }
            LayerSpec::Head { inputs, classes } => {
                if flat != inputs {
                    return Err(mismatch(format!("{inputs} input values")));
                }
                Ok(vec![classes])
            }
            LayerSpec::DepthwiseConv { channels, kernel } => {
                if input.len() != 3 || input[0] != channels {
                    return Err(mismatch(format!("[{channels}, h, w] input")));
                }
                let (h, w) = (input[1], input[2]);
                if h < kernel || w < kernel {
                    return Err(mismatch(format!("spatial extent >= kernel {kernel}")));
                }
                Ok(vec![channels, h - kernel + 1, w - kernel + 1])
            }
            LayerSpec::PointwiseConv {
                in_channels,
                out_channels,
            } => {
                if input.len() != 3 || input[0] != in_channels {
                    return Err(mismatch(format!("[{in_channels}, h, w] input")));
                }
                Ok(vec![out_channels, input[1], input[2]])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Norm { channels, .. } => {
                if input.is_empty() || input[0] != channels {
                    return Err(mismatch(format!("leading channel axis of {channels}")));
                }
                Ok(input.to_vec())
            }
        }
    }
}

/// Contiguous slice of the flat parameter space owned by one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRange {
    pub offset: usize,
    pub len: usize,
}

impl ParamRange {
    pub fn end(&self) -> usize {
        self.offset + self.len
    }
    pub fn contains(&self, k: usize) -> bool {
        k >= self.offset && k < self.end()
    }
}

/// Flat parameter storage: values plus per-parameter learning-rate scales.
#[derive(Debug, Clone)]
pub struct ParamSet {
    values: Vec<f64>,
    lr_scale: Vec<f64>,
    ranges: Vec<ParamRange>,
}

impl ParamSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn lr_scale(&self) -> &[f64] {
        &self.lr_scale
    }
    /// Range of layer `i` in the flat space.
    pub fn range(&self, layer: usize) -> ParamRange {
        self.ranges[layer]
    }
    /// Layer index owning flat parameter `k`.
    pub fn layer_of(&self, k: usize) -> usize {
        self.ranges
            .iter()
            .position(|r| r.contains(k))
            .expect("parameter index within bounds")
    }
}

/// Training vs evaluation forward semantics (normalization statistics).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Cached activations from a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input batch; `activations[i + 1]` is the
    /// output of layer `i`.
    pub activations: Vec<Tensor>,
    norm_caches: Vec<Option<NormCache>>,
    mode: Mode,
    version: u64,
}

impl ForwardTrace {
    /// Output of the final (head) layer.
    pub fn logits(&self) -> &Tensor {
        self.activations.last().expect("non-empty network")
    }

    /// Input to the head layer (the feature representation).
    pub fn features(&self) -> &Tensor {
        &self.activations[self.activations.len() - 2]
    }

    /// Mini-batch normalization caches, indexed by layer.
    pub fn norm_cache(&self, layer: usize) -> Option<&NormCache> {
        self.norm_caches[layer].as_ref()
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Backprop {
    /// Mean cross-entropy over the mini-batch.
    pub loss: f64,
    /// Gradient of the loss w.r.t. every flat parameter.
    pub grads: Vec<f64>,
}

/// A feed-forward network: layer specs, flat parameters, and normalization
/// state.
#[derive(Debug, Clone)]
pub struct Network {
    specs: Vec<LayerSpec>,
    /// `shapes[i]` is the per-sample input shape of layer `i`;
    /// `shapes[len]` is the output shape.
    shapes: Vec<Vec<usize>>,
    params: ParamSet,
    norm_states: Vec<NormState>,
    /// Layer index -> ordinal into `norm_states`.
    norm_ordinal: Vec<Option<usize>>,
    version: u64,
}

impl Network {
    /// Build and initialize a network.
    ///
    /// Validates the shape chain and that the stack ends in exactly one
    /// [`LayerSpec::Head`]. Weights are seeded uniform scaled by fan-in.
    pub fn new(input_shape: &[usize], specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Config("network needs at least a head layer".into()));
        }
        for (i, s) in specs.iter().enumerate() {
            let is_head = matches!(s, LayerSpec::Head { .. });
            if is_head != (i == specs.len() - 1) {
                return Err(Error::Config(
                    "the head must be the final layer and appear exactly once".into(),
                ));
            }
        }

        let mut shapes = vec![input_shape.to_vec()];
        for s in &specs {
            let next = s.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }

        let mut ranges = Vec::with_capacity(specs.len());
        let mut offset = 0;
        for s in &specs {
            let len = s.param_count();
            ranges.push(ParamRange { offset, len });
            offset += len;
        }

        let mut values = vec![0.0; offset];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut norm_states = Vec::new();
        let mut norm_ordinal = vec![None; specs.len()];
        for (i, s) in specs.iter().enumerate() {
            let r = ranges[i];
            let slice = &mut values[r.offset..r.end()];
            match *s {
                LayerSpec::Dense { inputs, outputs } | LayerSpec::Head {
                    inputs,
                    classes: outputs,
                } => init_affine(slice, inputs, outputs, &mut rng),
                LayerSpec::PointwiseConv {
                    in_channels,
                    out_channels,
                } => init_affine(slice, in_channels, out_channels, &mut rng),
                LayerSpec::DepthwiseConv { channels, kernel } => {
                    let fan_in = (kernel * kernel) as f64;
                    let b = 1.0 / fan_in.sqrt();
                    for v in slice[..channels * kernel * kernel].iter_mut() {
                        *v = rng.random_range(-b..b);
                    }
                    // biases stay zero
                }
                LayerSpec::Relu => {}
                LayerSpec::Norm { channels, .. } => {
                    for v in slice[..channels].iter_mut() {
                        *v = 1.0; // gamma
                    }
                    // beta stays zero
                    norm_ordinal[i] = Some(norm_states.len());
                    norm_states.push(NormState::new(channels));
                }
            }
        }

        Ok(Network {
            specs,
            shapes,
            params: ParamSet {
                lr_scale: vec![1.0; values.len()],
                values,
                ranges,
            },
            norm_states,
            norm_ordinal,
            version: 0,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Per-sample input shape.
    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    /// Number of output classes.
    pub fn num_classes(&self) -> usize {
        match *self.specs.last().unwrap() {
            LayerSpec::Head { classes, .. } => classes,
            _ => unreachable!("validated at construction"),
        }
    }

    /// Head input width (feature dimension).
    pub fn feature_dim(&self) -> usize {
        match *self.specs.last().unwrap() {
            LayerSpec::Head { inputs, .. } => inputs,
            _ => unreachable!("validated at construction"),
        }
    }

    /// Flat range of the head layer's parameters.
    pub fn head_range(&self) -> ParamRange {
        self.params.range(self.specs.len() - 1)
    }

    /// Monotone counter bumped on every parameter mutation; traces carry the
    /// value they were produced under so stale traces are rejected.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Mutable parameter values (bumps the version).
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params.values
    }

    /// Mutable learning-rate scales. Scales are clamped by callers to
    /// `[0, 1]`; a scale of zero freezes the parameter exactly.
    pub fn lr_scale_mut(&mut self) -> &mut [f64] {
        &mut self.params.lr_scale
    }

    /// Set the learning-rate scale of every parameter of every layer
    /// matching `pred` to `scale`.
    pub fn scale_layers(&mut self, scale: f64, pred: impl Fn(&LayerSpec) -> bool) {
        for (i, s) in self.specs.iter().enumerate() {
            if pred(s) {
                let r = self.params.ranges[i];
                for v in &mut self.params.lr_scale[r.offset..r.end()] {
                    *v = scale;
                }
            }
        }
    }

    /// Reset every learning-rate scale to 1.
    pub fn unfreeze_all(&mut self) {
        for v in &mut self.params.lr_scale {
            *v = 1.0;
        }
    }

    /// Freeze (scale 0) all layers matching `pred`.
    pub fn freeze_layers(&mut self, pred: impl Fn(&LayerSpec) -> bool) {
        self.scale_layers(0.0, pred);
    }

    pub fn norm_states(&self) -> &[NormState] {
        &self.norm_states
    }

    pub fn norm_states_mut(&mut self) -> &mut [NormState] {
        &mut self.norm_states
    }

    /// Apply clip limits / retention to every normalization layer.
    pub fn set_norm_limits(&mut self, r_max: f64, d_max: f64, alpha_past: f64) -> Result<()> {
        for st in &mut self.norm_states {
            st.set_correction_limits(r_max, d_max, alpha_past)?;
        }
        Ok(())
    }

    /// Blend the mini-batch moments cached in `trace` into the moving
    /// moments of every normalization layer. Called once per training
    /// iteration, after the forward pass.
    pub fn update_moments(&mut self, trace: &ForwardTrace) {
        for (i, ord) in self.norm_ordinal.iter().enumerate() {
            if let (Some(ord), Some(cache)) = (ord, trace.norm_caches[i].as_ref()) {
                self.norm_states[*ord].update_moments(cache);
            }
        }
    }

    /// Pin the renorm corrections `(r, d)` observed in `trace` into every
    /// normalization layer, realizing their stop-gradient treatment for
    /// finite-difference validation: subsequent forwards reuse the pinned
    /// values regardless of parameter perturbations.
    pub fn pin_norm_corrections(&mut self, trace: &ForwardTrace) {
        for (i, ord) in self.norm_ordinal.iter().enumerate() {
            if let (Some(ord), Some(cache)) = (ord, trace.norm_caches[i].as_ref()) {
                self.norm_states[*ord].pin_rd(cache.r.clone(), cache.d.clone());
            }
        }
    }

    /// Remove any pinned corrections set by [`Network::pin_norm_corrections`].
    pub fn clear_norm_pins(&mut self) {
        for st in &mut self.norm_states {
            st.clear_pin();
        }
    }

    /// Run the full stack on a batch whose items hold
    /// `input_shape.iter().product()` values each.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<ForwardTrace> {
        let want: usize = self.shapes[0].iter().product();
        if x.item_len() != want || x.batch() == 0 {
            return Err(Error::ShapeMismatch {
                layer: "network input".into(),
                expected: format!("non-empty batch of {want}-value items"),
                got: format!("{:?}", x.shape()),
            });
        }
        let mut activations = Vec::with_capacity(self.specs.len() + 1);
        let mut norm_caches: Vec<Option<NormCache>> = vec![None; self.specs.len()];
        activations.push(x.clone());
        for (i, s) in self.specs.iter().enumerate() {
            let input = activations.last().unwrap();
            let out = match *s {
                LayerSpec::Dense { inputs, outputs }
                | LayerSpec::Head {
                    inputs,
                    classes: outputs,
                } => self.affine_forward(i, input, inputs, outputs),
                LayerSpec::PointwiseConv {
                    in_channels,
                    out_channels,
                } => self.pointwise_forward(i, input, in_channels, out_channels),
                LayerSpec::DepthwiseConv { channels, kernel } => {
                    self.depthwise_forward(i, input, channels, kernel)
                }
                LayerSpec::Relu => relu_forward(input),
                LayerSpec::Norm { channels, kind } => {
                    let r = self.params.ranges[i];
                    let gamma = &self.params.values[r.offset..r.offset + channels];
                    let beta = &self.params.values[r.offset + channels..r.end()];
                    let st = &self.norm_states[self.norm_ordinal[i].unwrap()];
                    match mode {
                        Mode::Train => {
                            let (y, cache) = norm::forward_train(input, kind, gamma, beta, st)?;
                            norm_caches[i] = Some(cache);
                            y
                        }
                        Mode::Eval => norm::forward_eval(input, gamma, beta, st)?,
                    }
                }
            };
            activations.push(out);
        }
        Ok(ForwardTrace {
            activations,
            norm_caches,
            mode,
            version: self.version,
        })
    }

    /// Feature representation (head input) for a batch, without the head.
    pub fn features(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let trace = self.forward(x, mode)?;
        Ok(trace.features().clone())
    }

    /// Backward pass: mean softmax cross-entropy against `labels`, gradients
    /// for every flat parameter. Requires a training-mode trace produced by
    /// this exact parameter state.
    pub fn backward(&self, trace: &ForwardTrace, labels: &[usize]) -> Result<Backprop> {
        if trace.version != self.version {
            return Err(Error::StaleTrace(format!(
                "trace from version {}, network at {}",
                trace.version, self.version
            )));
        }
        if trace.mode != Mode::Train {
            return Err(Error::StaleTrace(
                "backward needs a training-mode forward trace".into(),
            ));
        }
        let logits = trace.logits();
        if labels.len() != logits.batch() {
            return Err(Error::ShapeMismatch {
                layer: "labels".into(),
                expected: format!("{} labels", logits.batch()),
                got: format!("{}", labels.len()),
            });
        }
        let (loss_value, mut delta) = loss::softmax_cross_entropy(logits, labels)?;

        let mut grads = vec![0.0; self.params.len()];
        for i in (0..self.specs.len()).rev() {
            let input = &trace.activations[i];
            let r = self.params.ranges[i];
            delta = match self.specs[i] {
                LayerSpec::Dense { inputs, outputs }
                | LayerSpec::Head {
                    inputs,
                    classes: outputs,
                } => self.affine_backward(i, input, &delta, inputs, outputs, &mut grads),
                LayerSpec::PointwiseConv {
                    in_channels,
                    out_channels,
                } => self.pointwise_backward(i, input, &delta, in_channels, out_channels, &mut grads),
                LayerSpec::DepthwiseConv { channels, kernel } => {
                    self.depthwise_backward(i, input, &delta, channels, kernel, &mut grads)
                }
                LayerSpec::Relu => relu_backward(&trace.activations[i + 1], &delta),
                LayerSpec::Norm { channels, .. } => {
                    let cache = trace.norm_caches[i].as_ref().ok_or_else(|| {
                        Error::StaleTrace("missing normalization cache".into())
                    })?;
                    let gamma = &self.params.values[r.offset..r.offset + channels];
                    let (dx, dgamma, dbeta) = norm::backward(&delta, cache, gamma);
                    grads[r.offset..r.offset + channels].copy_from_slice(&dgamma);
                    grads[r.offset + channels..r.end()].copy_from_slice(&dbeta);
                    dx
                }
            };
        }
        Ok(Backprop {
            loss: loss_value,
            grads,
        })
    }

    /// Forward + loss only (no gradients); the workhorse of finite-difference
    /// validation.
    pub fn loss_on(&self, x: &Tensor, labels: &[usize], mode: Mode) -> Result<f64> {
        let trace = self.forward(x, mode)?;
        let (l, _) = loss::softmax_cross_entropy(trace.logits(), labels)?;
        Ok(l)
    }

    /// Predicted class per batch item (argmax, ties to the lowest index).
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let trace = self.forward(x, Mode::Eval)?;
        Ok(loss::argmax_rows(trace.logits()))
    }

    // -- layer kernels ------------------------------------------------------

    fn affine_forward(&self, layer: usize, x: &Tensor, inputs: usize, outputs: usize) -> Tensor {
        let r = self.params.ranges[layer];
        let w = &self.params.values[r.offset..r.offset + inputs * outputs];
        let b = &self.params.values[r.offset + inputs * outputs..r.end()];
        let n = x.batch();
        let mut y = Tensor::zeros(&[n, outputs]);
        for item in 0..n {
            let xi = x.item(item);
            let yi = y.item_mut(item);
            for o in 0..outputs {
                let row = &w[o * inputs..(o + 1) * inputs];
                let mut acc = b[o];
                for i in 0..inputs {
                    acc += row[i] * xi[i];
                }
                yi[o] = acc;
            }
        }
        y
    }

    fn affine_backward(
        &self,
        layer: usize,
        x: &Tensor,
        delta: &Tensor,
        inputs: usize,
        outputs: usize,
        grads: &mut [f64],
    ) -> Tensor {
        let r = self.params.ranges[layer];
        let w = &self.params.values[r.offset..r.offset + inputs * outputs];
        let (gw, gb) = grads[r.offset..r.end()].split_at_mut(inputs * outputs);
        let n = x.batch();
        let mut dx = Tensor::zeros(&[n, inputs]);
        for item in 0..n {
            let xi = x.item(item);
            let di = delta.item(item);
            let dxi = dx.item_mut(item);
            for o in 0..outputs {
                let d = di[o];
                gb[o] += d;
                let grow = &mut gw[o * inputs..(o + 1) * inputs];
                let wrow = &w[o * inputs..(o + 1) * inputs];
                for i in 0..inputs {
                    grow[i] += d * xi[i];
                    dxi[i] += d * wrow[i];
                }
            }
        }
        dx
    }

    fn pointwise_forward(&self, layer: usize, x: &Tensor, ci: usize, co: usize) -> Tensor {
        let r = self.params.ranges[layer];
        let w = &self.params.values[r.offset..r.offset + ci * co];
        let b = &self.params.values[r.offset + ci * co..r.end()];
        let n = x.batch();
        let spatial = x.item_len() / ci;
        let mut y = Tensor::zeros(&[n, co, spatial]);
        for item in 0..n {
            let xi = x.item(item);
            let yi = y.item_mut(item);
            for o in 0..co {
                let wrow = &w[o * ci..(o + 1) * ci];
                for s in 0..spatial {
                    let mut acc = b[o];
                    for c in 0..ci {
                        acc += wrow[c] * xi[c * spatial + s];
                    }
                    yi[o * spatial + s] = acc;
                }
            }
        }
        y
    }

    fn pointwise_backward(
        &self,
        layer: usize,
        x: &Tensor,
        delta: &Tensor,
        ci: usize,
        co: usize,
        grads: &mut [f64],
    ) -> Tensor {
        let r = self.params.ranges[layer];
        let w = &self.params.values[r.offset..r.offset + ci * co];
        let (gw, gb) = grads[r.offset..r.end()].split_at_mut(ci * co);
        let n = x.batch();
        let spatial = x.item_len() / ci;
        let mut dx = Tensor::zeros(&[n, ci, spatial]);
        for item in 0..n {
            let xi = x.item(item);
            let di = delta.item(item);
            let dxi = dx.item_mut(item);
            for o in 0..co {
                let wrow = &w[o * ci..(o + 1) * ci];
                let gwrow = &mut gw[o * ci..(o + 1) * ci];
                for s in 0..spatial {
                    let d = di[o * spatial + s];
                    gb[o] += d;
                    for c in 0..ci {
                        gwrow[c] += d * xi[c * spatial + s];
                        dxi[c * spatial + s] += d * wrow[c];
                    }
                }
            }
        }
        dx
    }

    fn depthwise_forward(&self, layer: usize, x: &Tensor, channels: usize, k: usize) -> Tensor {
        let r = self.params.ranges[layer];
        let w = &self.params.values[r.offset..r.offset + channels * k * k];
        let b = &self.params.values[r.offset + channels * k * k..r.end()];
        let n = x.batch();
        let shape = &self.shapes[layer]; // [c, h, w]
        let (h, wd) = (shape[1], shape[2]);
        let (oh, ow) = (h - k + 1, wd - k + 1);
        let mut y = Tensor::zeros(&[n, channels, oh, ow]);
        for item in 0..n {
            let xi = x.item(item);
            let yi = y.item_mut(item);
            for c in 0..channels {
                let filt = &w[c * k * k..(c + 1) * k * k];
                let xc = &xi[c * h * wd..(c + 1) * h * wd];
                let yc = &mut yi[c * oh * ow..(c + 1) * oh * ow];
                for p in 0..oh {
                    for q in 0..ow {
                        let mut acc = b[c];
                        for a in 0..k {
                            for bb in 0..k {
                                acc += filt[a * k + bb] * xc[(p + a) * wd + (q + bb)];
                            }
                        }
                        yc[p * ow + q] = acc;
                    }
                }
            }
        }
        y
    }

    fn depthwise_backward(
        &self,
        layer: usize,
        x: &Tensor,
        delta: &Tensor,
        channels: usize,
        k: usize,
        grads: &mut [f64],
    ) -> Tensor {
        let r = self.params.ranges[layer];
        let w = &self.params.values[r.offset..r.offset + channels * k * k];
        let (gw, gb) = grads[r.offset..r.end()].split_at_mut(channels * k * k);
        let n = x.batch();
        let shape = &self.shapes[layer];
        let (h, wd) = (shape[1], shape[2]);
        let (oh, ow) = (h - k + 1, wd - k + 1);
        let mut dx = Tensor::zeros(&[n, channels, h, wd]);
        for item in 0..n {
            let xi = x.item(item);
            let di = delta.item(item);
            let dxi = dx.item_mut(item);
            for c in 0..channels {
                let filt = &w[c * k * k..(c + 1) * k * k];
                let gfilt = &mut gw[c * k * k..(c + 1) * k * k];
                let xc = &xi[c * h * wd..(c + 1) * h * wd];
                let dc = &di[c * oh * ow..(c + 1) * oh * ow];
                let dxc = &mut dxi[c * h * wd..(c + 1) * h * wd];
                for p in 0..oh {
                    for q in 0..ow {
                        let d = dc[p * ow + q];
                        gb[c] += d;
                        for a in 0..k {
                            for bb in 0..k {
                                gfilt[a * k + bb] += d * xc[(p + a) * wd + (q + bb)];
                                dxc[(p + a) * wd + (q + bb)] += d * filt[a * k + bb];
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

fn init_affine(slice: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let b = 1.0 / (fan_in as f64).sqrt();
    for v in slice[..fan_in * fan_out].iter_mut() {
        *v = rng.random_range(-b..b);
    }
    // biases stay zero
}

fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    y
}

/// ReLU backward against the layer *output*: the subgradient at exactly 0 is
/// taken as 0, so the mask is `output > 0`.
fn relu_backward(output: &Tensor, delta: &Tensor) -> Tensor {
    let mut dx = delta.clone();
    let od = output.data();
    for (i, v) in dx.data_mut().iter_mut().enumerate() {
        if od[i] <= 0.0 {
            *v = 0.0;
        }
    }
    dx
}
