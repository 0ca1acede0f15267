//! Feed-forward function approximators: dense layers with hand-written
//! reverse-mode gradients, Adam, and Polyak-averaged target copies.
//!
//! All arithmetic is `f64`. Networks are plain owned values with no shared
//! state, so actors, critics, and their target copies are independent and
//! can be moved freely between threads.

use std::io::{Read, Write};

use rand::Rng;

use crate::{Error, Result};

/// Element-wise nonlinearity applied after a layer's affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative of the activation expressed through its output value.
    /// For the activations used here the output determines the slope.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    fn code(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Identity),
            c => Err(Error::Snapshot(format!("unknown activation code {c}"))),
        }
    }
}

/// One dense layer: `y = activation(W x + b)`.
///
/// Weights are row-major with shape `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    #[inline]
    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    #[inline]
    pub fn activation(&self) -> Activation {
        self.activation
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// Mutable access to the weight matrix (row-major). Used by tests that
    /// perturb individual parameters for finite-difference checks.
    #[inline]
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    #[inline]
    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }
}

/// A multilayer perceptron: the parameter set for one actor or critic.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer forward values kept around for the backward pass.
/// `values[0]` is the network input, `values[i + 1]` the output of layer `i`.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    values: Vec<Vec<f64>>,
}

impl Trace {
    /// Output of the traced forward pass.
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace always has the input")
    }
}

impl Mlp {
    /// Builds a network with the given layer widths and activations.
    ///
    /// `dims` lists `[input, hidden..., output]`; `activations` has one entry
    /// per layer. Weights and biases are drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidConfig(
                "network needs at least an input and an output dimension".into(),
            ));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::InvalidConfig(format!(
                "expected {} activations for {} layers, got {}",
                dims.len() - 1,
                dims.len() - 1,
                activations.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig("layer dimensions must be > 0".into()));
        }

        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (l, &activation) in activations.iter().enumerate() {
            let in_dim = dims[l];
            let out_dim = dims[l + 1];
            let bound = 1.0 / (in_dim as f64).sqrt();
            let mut weights = vec![0.0; in_dim * out_dim];
            for w in &mut weights {
                *w = rng.gen_range(-bound..=bound);
            }
            let mut biases = vec![0.0; out_dim];
            for b in &mut biases {
                *b = rng.gen_range(-bound..=bound);
            }
            layers.push(Layer {
                in_dim,
                out_dim,
                activation,
                weights,
                biases,
            });
        }
        Ok(Mlp { layers })
    }

    /// Policy network: ReLU hidden layers, Tanh output bounding actions to [-1, 1].
    pub fn actor<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        action_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(obs_dim);
        dims.extend_from_slice(hidden);
        dims.push(action_dim);
        let mut acts = vec![Activation::Relu; hidden.len()];
        acts.push(Activation::Tanh);
        Mlp::new(&dims, &acts, rng)
    }

    /// Value network over concatenated (observation, action): ReLU hidden
    /// layers, identity scalar output.
    pub fn critic<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(obs_dim + action_dim);
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut acts = vec![Activation::Relu; hidden.len()];
        acts.push(Activation::Identity);
        Mlp::new(&dims, &acts, rng)
    }

    /// Builds a network directly from explicit layer parameters. Used by
    /// tests and snapshot loading.
    pub fn from_layers(
        layer_params: Vec<(Vec<f64>, Vec<f64>, Activation)>,
        dims: &[(usize, usize)],
    ) -> Result<Self> {
        if layer_params.len() != dims.len() || dims.is_empty() {
            return Err(Error::InvalidConfig("empty or mismatched layer list".into()));
        }
        let mut layers: Vec<Layer> = Vec::with_capacity(dims.len());
        for (l, ((weights, biases, activation), &(in_dim, out_dim))) in
            layer_params.into_iter().zip(dims).enumerate()
        {
            if weights.len() != in_dim * out_dim || biases.len() != out_dim {
                return Err(Error::InvalidConfig(format!(
                    "layer {l}: parameter lengths do not match dims {in_dim}x{out_dim}"
                )));
            }
            if l > 0 && layers[l - 1].out_dim != in_dim {
                return Err(Error::InvalidConfig(format!(
                    "layer {l}: input width {in_dim} does not chain with previous output"
                )));
            }
            layers.push(Layer {
                in_dim,
                out_dim,
                activation,
                weights,
                biases,
            });
        }
        Ok(Mlp { layers })
    }

    #[inline]
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    #[inline]
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Largest absolute difference over all parameters of two congruent nets.
    pub fn max_abs_diff(&self, other: &Mlp) -> Result<f64> {
        self.check_congruent(other, "max_abs_diff")?;
        let mut max = 0.0f64;
        for (a, b) in self.layers.iter().zip(&other.layers) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                max = max.max((x - y).abs());
            }
            for (x, y) in a.biases.iter().zip(&b.biases) {
                max = max.max((x - y).abs());
            }
        }
        Ok(max)
    }

    fn check_congruent(&self, other: &Mlp, what: &'static str) -> Result<()> {
        let ok = self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.in_dim == b.in_dim && a.out_dim == b.out_dim && a.activation == b.activation
            });
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(what))
        }
    }

    /// Evaluates the network on one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_trace(input)?;
        Ok(trace.values.into_iter().last().expect("nonempty trace"))
    }

    /// Forward pass that records every layer's output so a backward pass can
    /// follow without recomputation.
    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        let mut trace = Trace { values: Vec::new() };
        self.forward_trace_into(input, &mut trace)?;
        Ok(trace)
    }

    /// [`Mlp::forward_trace`] into a reusable trace, avoiding fresh
    /// allocations on repeated calls.
    pub fn forward_trace_into(&self, input: &[f64], trace: &mut Trace) -> Result<()> {
        if input.len() != self.in_dim() {
            return Err(Error::LayerInput {
                layer: 0,
                expected: self.in_dim(),
                got: input.len(),
            });
        }
        let values = &mut trace.values;
        values.resize(self.layers.len() + 1, Vec::new());
        values[0].clear();
        values[0].extend_from_slice(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = values.split_at_mut(l + 1);
            let x = &before[l];
            let y = &mut after[0];
            y.clear();
            y.resize(layer.out_dim, 0.0);
            for (o, out) in y.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                let mut z = layer.biases[o];
                for (w, xi) in row.iter().zip(x) {
                    z += w * xi;
                }
                *out = layer.activation.apply(z);
            }
        }
        Ok(())
    }

    /// Reverse-mode gradients of `upstream . output` with respect to every
    /// parameter and to the input.
    ///
    /// Runs a fresh forward pass internally; use [`Mlp::forward_trace`] plus
    /// [`Mlp::backward_from_trace`] when the forward values are already at hand.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        let trace = self.forward_trace(input)?;
        self.backward_from_trace(&trace, upstream)
    }

    /// Backward pass over a recorded trace. Returns parameter gradients and
    /// the gradient with respect to the network input.
    pub fn backward_from_trace(
        &self,
        trace: &Trace,
        upstream: &[f64],
    ) -> Result<(MlpGrads, Vec<f64>)> {
        let mut grads = MlpGrads::zeros_like(self);
        let mut d_out = Vec::new();
        let mut d_in = Vec::new();
        self.backward_acc_impl(trace, upstream, &mut grads, &mut d_out, &mut d_in)?;
        Ok((grads, d_out))
    }

    /// Core reverse pass. Parameter gradients are *added* into `acc`; on
    /// return `d_out` holds the gradient with respect to the network input.
    fn backward_acc_impl(
        &self,
        trace: &Trace,
        upstream: &[f64],
        acc: &mut MlpGrads,
        d_out: &mut Vec<f64>,
        d_in: &mut Vec<f64>,
    ) -> Result<()> {
        if trace.values.len() != self.layers.len() + 1 {
            return Err(Error::ShapeMismatch("backward trace"));
        }
        if upstream.len() != self.out_dim() {
            return Err(Error::DimMismatch {
                what: "upstream gradient",
                expected: self.out_dim(),
                got: upstream.len(),
            });
        }
        if !acc.congruent_with(self) {
            return Err(Error::ShapeMismatch("gradient accumulator"));
        }

        d_out.clear();
        d_out.extend_from_slice(upstream);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.values[l];
            let y = &trace.values[l + 1];
            let lg = &mut acc.layers[l];
            d_in.clear();
            d_in.resize(layer.in_dim, 0.0);
            for o in 0..layer.out_dim {
                let dz = d_out[o] * layer.activation.grad_from_output(y[o]);
                lg.d_biases[o] += dz;
                let row = o * layer.in_dim;
                let w_row = &layer.weights[row..row + layer.in_dim];
                let g_row = &mut lg.d_weights[row..row + layer.in_dim];
                for (((g, w), xi), di) in
                    g_row.iter_mut().zip(w_row).zip(x).zip(d_in.iter_mut())
                {
                    *g += dz * xi;
                    *di += w * dz;
                }
            }
            std::mem::swap(d_out, d_in);
        }
        Ok(())
    }

    /// Gradient with respect to the input only, skipping parameter
    /// gradients. Used where gradients merely pass through a frozen net.
    fn backward_input_impl(
        &self,
        trace: &Trace,
        upstream: &[f64],
        d_out: &mut Vec<f64>,
        d_in: &mut Vec<f64>,
    ) -> Result<()> {
        if trace.values.len() != self.layers.len() + 1 {
            return Err(Error::ShapeMismatch("backward trace"));
        }
        if upstream.len() != self.out_dim() {
            return Err(Error::DimMismatch {
                what: "upstream gradient",
                expected: self.out_dim(),
                got: upstream.len(),
            });
        }
        d_out.clear();
        d_out.extend_from_slice(upstream);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let y = &trace.values[l + 1];
            d_in.clear();
            d_in.resize(layer.in_dim, 0.0);
            for o in 0..layer.out_dim {
                let dz = d_out[o] * layer.activation.grad_from_output(y[o]);
                let row = o * layer.in_dim;
                let w_row = &layer.weights[row..row + layer.in_dim];
                for (w, di) in w_row.iter().zip(d_in.iter_mut()) {
                    *di += w * dz;
                }
            }
            std::mem::swap(d_out, d_in);
        }
        Ok(())
    }

    /// Writes a parameter snapshot: a little-endian header of 32-bit integers
    /// (layer count, then per layer in-dim, out-dim, activation code)
    /// followed by each layer's row-major weights and biases as 64-bit floats.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            w.write_all(&(layer.in_dim as u32).to_le_bytes())?;
            w.write_all(&(layer.out_dim as u32).to_le_bytes())?;
            w.write_all(&layer.activation.code().to_le_bytes())?;
        }
        for layer in &self.layers {
            for v in layer.weights.iter().chain(&layer.biases) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a snapshot produced by [`Mlp::write_snapshot`].
    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Mlp> {
        fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
            let mut buf = [0u8; 4];
            r.read_exact(&mut buf)?;
            Ok(u32::from_le_bytes(buf))
        }
        fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            Ok(f64::from_le_bytes(buf))
        }

        let n_layers = read_u32(&mut r)? as usize;
        if n_layers == 0 || n_layers > 1024 {
            return Err(Error::Snapshot(format!("implausible layer count {n_layers}")));
        }
        let mut shapes = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let in_dim = read_u32(&mut r)? as usize;
            let out_dim = read_u32(&mut r)? as usize;
            let activation = Activation::from_code(read_u32(&mut r)?)?;
            if in_dim == 0 || out_dim == 0 || in_dim > 1 << 20 || out_dim > 1 << 20 {
                return Err(Error::Snapshot(format!("implausible dims in layer {l}")));
            }
            if l > 0 {
                let (_, prev_out, _) = shapes[l - 1];
                if prev_out != in_dim {
                    return Err(Error::Snapshot(format!(
                        "layer {l} input {in_dim} does not chain with previous output {prev_out}"
                    )));
                }
            }
            shapes.push((in_dim, out_dim, activation));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for &(in_dim, out_dim, activation) in &shapes {
            let mut weights = vec![0.0; in_dim * out_dim];
            for v in &mut weights {
                *v = read_f64(&mut r)?;
            }
            let mut biases = vec![0.0; out_dim];
            for v in &mut biases {
                *v = read_f64(&mut r)?;
            }
            layers.push(Layer {
                in_dim,
                out_dim,
                activation,
                weights,
                biases,
            });
        }
        Ok(Mlp { layers })
    }
}

/// Per-parameter gradients, shape-congruent with an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub d_weights: Vec<f64>,
    pub d_biases: Vec<f64>,
}

impl MlpGrads {
    pub fn zeros_like(params: &Mlp) -> Self {
        MlpGrads {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrads {
                    d_weights: vec![0.0; l.weights.len()],
                    d_biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    #[inline]
    pub fn layers(&self) -> &[LayerGrads] {
        &self.layers
    }

    pub fn add_assign(&mut self, other: &MlpGrads) -> Result<()> {
        if !self.congruent(other) {
            return Err(Error::ShapeMismatch("gradient accumulation"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.d_weights.iter_mut().zip(&b.d_weights) {
                *x += y;
            }
            for (x, y) in a.d_biases.iter_mut().zip(&b.d_biases) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            for v in &mut l.d_weights {
                *v *= c;
            }
            for v in &mut l.d_biases {
                *v *= c;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.d_weights.iter().chain(&l.d_biases).all(|v| v.is_finite()))
    }

    fn congruent(&self, other: &MlpGrads) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.d_weights.len() == b.d_weights.len() && a.d_biases.len() == b.d_biases.len()
            })
    }

    fn congruent_with(&self, params: &Mlp) -> bool {
        self.layers.len() == params.layers.len()
            && self.layers.iter().zip(&params.layers).all(|(g, l)| {
                g.d_weights.len() == l.weights.len() && g.d_biases.len() == l.biases.len()
            })
    }
}

/// Polyak update: every target entry becomes `tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "soft update rate must be in (0, 1], got {tau}"
        )));
    }
    target.check_congruent(online, "soft_update")?;
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        for (tv, ov) in t.weights.iter_mut().zip(&o.weights) {
            *tv = tau * ov + (1.0 - tau) * *tv;
        }
        for (tv, ov) in t.biases.iter_mut().zip(&o.biases) {
            *tv = tau * ov + (1.0 - tau) * *tv;
        }
    }
    Ok(())
}

/// Adam optimizer state for one network: first/second moment accumulators
/// shaped like the parameters plus the bias-correction step counter.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<LayerGrads>,
    v: Vec<LayerGrads>,
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(like: &Mlp) -> Self {
        let zeros = || {
            like.layers
                .iter()
                .map(|l| LayerGrads {
                    d_weights: vec![0.0; l.weights.len()],
                    d_biases: vec![0.0; l.biases.len()],
                })
                .collect::<Vec<_>>()
        };
        Adam {
            m: zeros(),
            v: zeros(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    #[inline]
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update with bias correction. The step counter increments by
    /// exactly one per call.
    pub fn step(&mut self, params: &mut Mlp, grads: &MlpGrads, lr: f64) -> Result<()> {
        if !lr.is_finite() || lr < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and >= 0, got {lr}"
            )));
        }
        if !grads.congruent_with(params) || self.m.len() != params.layers.len() {
            return Err(Error::ShapeMismatch("adam step"));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients"));
        }

        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((layer, g), (m, v)) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            update_slice(
                &mut layer.weights,
                &g.d_weights,
                &mut m.d_weights,
                &mut v.d_weights,
                lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
            update_slice(
                &mut layer.biases,
                &g.d_biases,
                &mut m.d_biases,
                &mut v.d_biases,
                lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
        }
        Ok(())
    }
}

/// Reusable forward/backward buffers for tight training loops. One
/// workspace serves one network at a time: each forward call records the
/// trace that the following backward call consumes.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    trace: Trace,
    d_out: Vec<f64>,
    d_in: Vec<f64>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Forward pass; the returned output slice borrows the workspace.
    pub fn forward<'a>(&'a mut self, net: &Mlp, input: &[f64]) -> Result<&'a [f64]> {
        net.forward_trace_into(input, &mut self.trace)?;
        Ok(self.trace.output())
    }

    /// Adds the gradients of `upstream . output` for the most recent forward
    /// on this workspace into `acc`.
    pub fn backward_acc(&mut self, net: &Mlp, upstream: &[f64], acc: &mut MlpGrads) -> Result<()> {
        net.backward_acc_impl(&self.trace, upstream, acc, &mut self.d_out, &mut self.d_in)
    }

    /// Gradient of `upstream . output` with respect to the input of the most
    /// recent forward, leaving parameter gradients untouched.
    pub fn backward_input<'a>(&'a mut self, net: &Mlp, upstream: &[f64]) -> Result<&'a [f64]> {
        net.backward_input_impl(&self.trace, upstream, &mut self.d_out, &mut self.d_in)?;
        Ok(&self.d_out)
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Naive dense forward pass written independently of `Mlp::forward`:
    /// explicit matrix-vector products over the exported parameters.
    fn naive_forward(net: &Mlp, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        for layer in net.layers() {
            let mut y = Vec::with_capacity(layer.out_dim());
            for o in 0..layer.out_dim() {
                let mut z = layer.biases()[o];
                for i in 0..layer.in_dim() {
                    z += layer.weights()[o * layer.in_dim() + i] * x[i];
                }
                y.push(match layer.activation() {
                    Activation::Relu => z.max(0.0),
                    Activation::Tanh => z.tanh(),
                    Activation::Identity => z,
                });
            }
            x = y;
        }
        x
    }

    fn identity_layer_net(dim: usize) -> Mlp {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        Mlp::from_layers(
            vec![(weights, vec![0.0; dim], Activation::Identity)],
            &[(dim, dim)],
        )
        .unwrap()
    }

    #[test]
    fn forward_identity_network_passes_input_through() {
        let net = identity_layer_net(2);
        let out = net.forward(&[0.3, -0.7]).unwrap();
        assert_eq!(out, vec![0.3, -0.7]);
    }

    #[test]
    fn forward_zero_tanh_layer_gives_zero() {
        let net = Mlp::from_layers(
            vec![(vec![0.0; 6], vec![0.0; 2], Activation::Tanh)],
            &[(3, 2)],
        )
        .unwrap();
        let out = net.forward(&[5.0, -2.0, 0.1]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_matches_naive_dense_oracle() {
        let mut r = rng(42);
        let net = Mlp::new(
            &[4, 8, 3],
            &[Activation::Relu, Activation::Tanh],
            &mut r,
        )
        .unwrap();
        let input = [0.25, -1.5, 0.75, 2.0];
        let got = net.forward(&input).unwrap();
        let want = naive_forward(&net, &input);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "got {g}, oracle {w}");
        }
    }

    #[test]
    fn forward_is_pure() {
        let mut r = rng(7);
        let net = Mlp::new(&[3, 5, 2], &[Activation::Relu, Activation::Tanh], &mut r).unwrap();
        let input = [0.1, 0.2, 0.3];
        let a = net.forward(&input).unwrap();
        let b = net.forward(&input).unwrap();
        assert_eq!(a, b, "identical inputs must give bitwise-identical outputs");
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = identity_layer_net(2);
        let err = net.forward(&[1.0]).unwrap_err();
        match err {
            Error::LayerInput { layer: 0, expected: 2, got: 1 } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn tanh_outputs_stay_bounded() {
        let mut r = rng(3);
        let net = Mlp::actor(2, &[8], 3, &mut r).unwrap();
        let out = net.forward(&[1e6, -1e6]).unwrap();
        for v in out {
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn backward_identity_layer_matches_linear_calculus() {
        // y = Wx + b with upstream e1: dW row 0 = x, db = e1, dx = W row 0.
        let net = Mlp::from_layers(
            vec![(
                vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
                vec![0.0, 0.0],
                Activation::Identity,
            )],
            &[(3, 2)],
        )
        .unwrap();
        let x = [0.5, -1.0, 2.0];
        let (grads, dx) = net.backward(&x, &[1.0, 0.0]).unwrap();
        assert_eq!(grads.layers()[0].d_weights[..3], x);
        assert_eq!(grads.layers()[0].d_weights[3..], [0.0, 0.0, 0.0]);
        assert_eq!(grads.layers()[0].d_biases, vec![1.0, 0.0]);
        assert_eq!(dx, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let mut r = rng(11);
        let net = Mlp::new(&[3, 4, 2], &[Activation::Relu, Activation::Identity], &mut r).unwrap();
        let (grads, dx) = net.backward(&[0.4, 0.5, 0.6], &[0.0, 0.0]).unwrap();
        for l in grads.layers() {
            assert!(l.d_weights.iter().all(|&v| v == 0.0));
            assert!(l.d_biases.iter().all(|&v| v == 0.0));
        }
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    /// Central finite differences of `upstream . forward(input)` with respect
    /// to one parameter, via the public mutable accessors.
    fn fd_param_grad(
        net: &mut Mlp,
        input: &[f64],
        upstream: &[f64],
        layer: usize,
        weight_index: Option<usize>,
        bias_index: Option<usize>,
        h: f64,
    ) -> f64 {
        let eval = |net: &Mlp| -> f64 {
            net.forward(input)
                .unwrap()
                .iter()
                .zip(upstream)
                .map(|(y, u)| y * u)
                .sum()
        };
        let bump = |net: &mut Mlp, delta: f64| {
            let l = &mut net.layers_mut()[layer];
            if let Some(i) = weight_index {
                l.weights_mut()[i] += delta;
            }
            if let Some(i) = bias_index {
                l.biases_mut()[i] += delta;
            }
        };
        bump(net, h);
        let plus = eval(net);
        bump(net, -2.0 * h);
        let minus = eval(net);
        bump(net, h);
        (plus - minus) / (2.0 * h)
    }

    fn max_rel_error_vs_fd(net: &mut Mlp, input: &[f64], upstream: &[f64]) -> f64 {
        let (grads, _) = net.backward(input, upstream).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for l in 0..net.layers().len() {
            for i in 0..net.layers()[l].weights().len() {
                let analytic = grads.layers()[l].d_weights[i];
                let numeric = fd_param_grad(net, input, upstream, l, Some(i), None, h);
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
            for i in 0..net.layers()[l].biases().len() {
                let analytic = grads.layers()[l].d_biases[i];
                let numeric = fd_param_grad(net, input, upstream, l, None, Some(i), h);
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
        worst
    }

    #[test]
    fn backward_matches_finite_differences_on_relu_net() {
        let mut r = rng(7);
        let mut net = Mlp::new(
            &[4, 6, 5, 2],
            &[Activation::Relu, Activation::Relu, Activation::Identity],
            &mut r,
        )
        .unwrap();
        let input = [0.3, -0.2, 0.9, -1.1];
        let upstream = [0.7, -0.4];
        let worst = max_rel_error_vs_fd(&mut net, &input, &upstream);
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn adam_first_step_matches_closed_form() {
        let mut p = Mlp::from_layers(
            vec![(vec![0.0], vec![0.0], Activation::Identity)],
            &[(1, 1)],
        )
        .unwrap();
        let mut grads = MlpGrads::zeros_like(&p);
        grads.layers[0].d_weights[0] = 1.0;
        let mut opt = Adam::new(&p);
        let lr = 3e-4;
        opt.step(&mut p, &grads, lr).unwrap();
        // Step 1 with bias correction: delta = -lr * g / (|g| + eps).
        let expected = -lr * 1.0 / (1.0 + 1e-8);
        let got = p.layers()[0].weights()[0];
        assert!((got - expected).abs() < 1e-18, "got {got}, want {expected}");
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_zero_grad_first_step_is_identity() {
        let mut r = rng(5);
        let mut p = Mlp::new(&[2, 3, 1], &[Activation::Relu, Activation::Identity], &mut r).unwrap();
        let before = p.clone();
        let grads = MlpGrads::zeros_like(&p);
        let mut opt = Adam::new(&p);
        opt.step(&mut p, &grads, 3e-4).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_two_steps_match_scalar_recurrence() {
        let mut p = Mlp::from_layers(
            vec![(vec![0.0], vec![0.0], Activation::Identity)],
            &[(1, 1)],
        )
        .unwrap();
        let mut grads = MlpGrads::zeros_like(&p);
        grads.layers[0].d_weights[0] = 1.0;
        let mut opt = Adam::new(&p);
        let lr = 3e-4;
        opt.step(&mut p, &grads, lr).unwrap();
        opt.step(&mut p, &grads, lr).unwrap();

        // Independent scalar unroll of the Adam recurrence.
        let (beta1, beta2, eps, g) = (0.9, 0.999, 1e-8, 1.0);
        let mut theta = 0.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=2u32 {
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            let m_hat = m / (1.0 - beta1.powi(t as i32));
            let v_hat = v / (1.0 - beta2.powi(t as i32));
            theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        let got = p.layers()[0].weights()[0];
        assert!((got - theta).abs() < 1e-12, "got {got}, oracle {theta}");
    }

    #[test]
    fn adam_with_zero_lr_is_identity_on_params() {
        let mut r = rng(9);
        let mut p = Mlp::new(&[2, 4, 1], &[Activation::Relu, Activation::Identity], &mut r).unwrap();
        let before = p.clone();
        let (grads, _) = p.backward(&[0.3, 0.4], &[1.0]).unwrap();
        let mut opt = Adam::new(&p);
        opt.step(&mut p, &grads, 0.0).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_rejects_non_finite_grads() {
        let mut p = identity_layer_net(1);
        let mut grads = MlpGrads::zeros_like(&p);
        grads.layers[0].d_weights[0] = f64::NAN;
        let mut opt = Adam::new(&p);
        assert!(matches!(
            opt.step(&mut p, &grads, 1e-3),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn soft_update_scalar_case() {
        let mut target = Mlp::from_layers(
            vec![(vec![0.0], vec![0.0], Activation::Identity)],
            &[(1, 1)],
        )
        .unwrap();
        let online = Mlp::from_layers(
            vec![(vec![1.0], vec![1.0], Activation::Identity)],
            &[(1, 1)],
        )
        .unwrap();
        soft_update(&mut target, &online, 0.005).unwrap();
        assert!((target.layers()[0].weights()[0] - 0.005).abs() < 1e-15);
    }

    #[test]
    fn soft_update_tau_one_copies_online_exactly() {
        let mut r = rng(21);
        let online = Mlp::new(&[3, 4, 2], &[Activation::Relu, Activation::Tanh], &mut r).unwrap();
        let mut target = Mlp::new(&[3, 4, 2], &[Activation::Relu, Activation::Tanh], &mut r).unwrap();
        soft_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target, online);
        let input = [0.5, -0.5, 0.25];
        assert_eq!(target.forward(&input).unwrap(), online.forward(&input).unwrap());
    }

    #[test]
    fn soft_update_follows_geometric_decay() {
        let mut r = rng(33);
        let online = Mlp::new(&[2, 3, 1], &[Activation::Relu, Activation::Identity], &mut r).unwrap();
        let mut target = Mlp::new(&[2, 3, 1], &[Activation::Relu, Activation::Identity], &mut r).unwrap();
        let tau = 0.005;
        let d0 = target.max_abs_diff(&online).unwrap();
        let n = 200;
        for _ in 0..n {
            soft_update(&mut target, &online, tau).unwrap();
        }
        let dn = target.max_abs_diff(&online).unwrap();
        let expected = (1.0 - tau).powi(n) * d0;
        assert!(
            (dn - expected).abs() < 1e-10,
            "got {dn}, geometric oracle {expected}"
        );
    }

    #[test]
    fn soft_update_rejects_shape_mismatch() {
        let mut r = rng(1);
        let online = Mlp::new(&[2, 3], &[Activation::Identity], &mut r).unwrap();
        let mut target = Mlp::new(&[2, 4], &[Activation::Identity], &mut r).unwrap();
        assert!(matches!(
            soft_update(&mut target, &online, 0.5),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn gradient_check_over_random_small_nets() {
        // 100 random nets with up to 3 layers and up to 16 units per layer.
        let mut worst = 0.0f64;
        for seed in 0..100u64 {
            let mut r = rng(1000 + seed);
            let n_hidden = (seed % 3) as usize;
            let mut dims = vec![1 + (seed % 5) as usize + 1];
            for h in 0..n_hidden {
                dims.push(2 + ((seed as usize + 3 * h) % 15));
            }
            dims.push(1 + (seed % 3) as usize);
            let mut acts = vec![Activation::Relu; dims.len() - 2];
            acts.push(if seed % 2 == 0 {
                Activation::Tanh
            } else {
                Activation::Identity
            });
            let mut net = Mlp::new(&dims, &acts, &mut r).unwrap();
            let input: Vec<f64> = (0..dims[0]).map(|_| r.gen_range(-1.0..1.0)).collect();
            let upstream: Vec<f64> = (0..*dims.last().unwrap())
                .map(|_| r.gen_range(-1.0..1.0))
                .collect();
            worst = worst.max(max_rel_error_vs_fd(&mut net, &input, &upstream));
        }
        assert!(worst < 1e-4, "max relative error over 100 nets: {worst}");
    }

    #[test]
    fn workspace_paths_match_plain_api_bitwise() {
        let mut r = rng(61);
        let net = Mlp::new(
            &[3, 7, 4, 2],
            &[Activation::Relu, Activation::Tanh, Activation::Identity],
            &mut r,
        )
        .unwrap();
        let input = [0.4, -0.2, 1.3];
        let upstream = [0.3, -0.8];

        let mut ws = Workspace::new();
        for _ in 0..3 {
            // Repeat to exercise buffer reuse.
            let out_ws = ws.forward(&net, &input).unwrap().to_vec();
            assert_eq!(out_ws, net.forward(&input).unwrap());

            let (plain_grads, plain_dx) = net.backward(&input, &upstream).unwrap();
            let mut acc = MlpGrads::zeros_like(&net);
            ws.forward(&net, &input).unwrap();
            ws.backward_acc(&net, &upstream, &mut acc).unwrap();
            for (a, b) in acc.layers().iter().zip(plain_grads.layers()) {
                assert_eq!(a.d_weights, b.d_weights);
                assert_eq!(a.d_biases, b.d_biases);
            }
            ws.forward(&net, &input).unwrap();
            let dx = ws.backward_input(&net, &upstream).unwrap();
            assert_eq!(dx, plain_dx.as_slice());
        }
    }

    #[test]
    fn snapshot_round_trips() {
        let mut r = rng(17);
        let net = Mlp::new(
            &[3, 8, 2],
            &[Activation::Relu, Activation::Tanh],
            &mut r,
        )
        .unwrap();
        let mut buf = Vec::new();
        net.write_snapshot(&mut buf).unwrap();
        // Header: 1 layer-count word + 3 words per layer, then the floats.
        let expected_len = 4 * (1 + 3 * 2) + 8 * net.num_params();
        assert_eq!(buf.len(), expected_len);
        assert_eq!(&buf[0..4], &2u32.to_le_bytes());
        let back = Mlp::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn snapshot_rejects_garbage_header() {
        let buf = 0u32.to_le_bytes().to_vec();
        assert!(matches!(
            Mlp::read_snapshot(buf.as_slice()),
            Err(Error::Snapshot(_))
        ));
    }
}
