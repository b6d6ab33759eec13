//! Minimal dense feed-forward networks over flat parameter vectors.
//!
//! Parameters live in a single `FlatParams` vector so that evolution-strategy
//! perturbations and gradient-descent updates operate on the same storage.
//! Layout per layer: row-major weight matrix (out x in), then biases; learned
//! PReLU slopes (one per hidden layer) are appended after the last layer.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Hidden-layer activation. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    ReLU,
    /// Fixed negative slope of 0.01.
    LeakyReLU,
    /// Learned negative slope, one per hidden layer, initialized to 0.25.
    PReLU,
}

impl Activation {
    pub fn from_name(name: &str) -> Option<Activation> {
        match name {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::ReLU),
            "lrelu" | "leaky_relu" => Some(Activation::LeakyReLU),
            "prelu" => Some(Activation::PReLU),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::ReLU => "relu",
            Activation::LeakyReLU => "lrelu",
            Activation::PReLU => "prelu",
        }
    }
}

const LEAKY_SLOPE: f64 = 0.01;
const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub enum MlpError {
    BadArchitecture(String),
    /// Input (or per-layer activation) length does not match the layer's fan-in.
    InputDim { layer: usize, expected: usize, got: usize },
    ParamCount { expected: usize, got: usize },
    LengthMismatch { expected: usize, got: usize },
    UpstreamDim { expected: usize, got: usize },
    /// Backward was handed a trace recorded under a different architecture.
    TraceMismatch,
}

impl fmt::Display for MlpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MlpError::BadArchitecture(msg) => write!(f, "bad architecture: {msg}"),
            MlpError::InputDim { layer, expected, got } => {
                write!(f, "layer {layer}: expected input of length {expected}, got {got}")
            }
            MlpError::ParamCount { expected, got } => {
                write!(f, "expected {expected} parameters, got {got}")
            }
            MlpError::LengthMismatch { expected, got } => {
                write!(f, "length mismatch: expected {expected}, got {got}")
            }
            MlpError::UpstreamDim { expected, got } => {
                write!(f, "upstream gradient has length {got}, output has length {expected}")
            }
            MlpError::TraceMismatch => write!(f, "forward trace does not match architecture"),
        }
    }
}

impl std::error::Error for MlpError {}

/// Shape of a dense network: sizes plus the hidden activation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
}

impl MlpArchitecture {
    pub fn new(
        input_dim: usize,
        hidden_sizes: Vec<usize>,
        output_dim: usize,
        activation: Activation,
    ) -> Result<MlpArchitecture, MlpError> {
        let arch = MlpArchitecture { input_dim, output_dim, hidden_sizes, activation };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(MlpError::BadArchitecture("dimensions must be >= 1".into()));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.len() > 3 {
            return Err(MlpError::BadArchitecture(format!(
                "hidden layer count must be in [1, 3], got {}",
                self.hidden_sizes.len()
            )));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(MlpError::BadArchitecture("hidden sizes must be >= 1".into()));
        }
        Ok(())
    }

    /// Layer sizes including input and output: `[in, h1, ..., hk, out]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_sizes.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_sizes);
        dims.push(self.output_dim);
        dims
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_sizes.len() + 1
    }

    /// Total parameter count: sum of (fan_in + 1) * fan_out per layer, plus
    /// one slope per hidden layer under PReLU.
    pub fn param_count(&self) -> usize {
        let dims = self.dims();
        let mut n = 0;
        for l in 0..self.num_layers() {
            n += (dims[l] + 1) * dims[l + 1];
        }
        if self.activation == Activation::PReLU {
            n += self.hidden_sizes.len();
        }
        n
    }

    /// (weight_offset, bias_offset, fan_in, fan_out) for layer `l`.
    fn layer_offsets(&self, l: usize) -> (usize, usize, usize, usize) {
        let dims = self.dims();
        let mut off = 0;
        for k in 0..l {
            off += (dims[k] + 1) * dims[k + 1];
        }
        let fan_in = dims[l];
        let fan_out = dims[l + 1];
        (off, off + fan_in * fan_out, fan_in, fan_out)
    }

    fn prelu_offset(&self) -> usize {
        let dims = self.dims();
        let mut off = 0;
        for l in 0..self.num_layers() {
            off += (dims[l] + 1) * dims[l + 1];
        }
        off
    }

    /// Fan-in-scaled uniform init U(-1/sqrt(fan_in), +1/sqrt(fan_in)) for
    /// weights and biases; PReLU slopes start at 0.25.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> FlatParams {
        let mut values = vec![0.0; self.param_count()];
        let dims = self.dims();
        for l in 0..self.num_layers() {
            let (w_off, b_off, _, fan_out) = self.layer_offsets(l);
            let bound = 1.0 / (dims[l] as f64).sqrt();
            for v in &mut values[w_off..b_off] {
                *v = rng.gen_range(-bound..bound);
            }
            for v in &mut values[b_off..b_off + fan_out] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        if self.activation == Activation::PReLU {
            let off = self.prelu_offset();
            for v in &mut values[off..] {
                *v = PRELU_INIT;
            }
        }
        FlatParams::new(values)
    }

    fn check_params(&self, params: &FlatParams) -> Result<(), MlpError> {
        if params.len() != self.param_count() {
            return Err(MlpError::ParamCount { expected: self.param_count(), got: params.len() });
        }
        Ok(())
    }

    fn slope(&self, params: &FlatParams, layer: usize) -> f64 {
        match self.activation {
            Activation::PReLU => params.values[self.prelu_offset() + layer],
            Activation::LeakyReLU => LEAKY_SLOPE,
            _ => 0.0,
        }
    }

    /// Dot product over sixteen independent accumulator lanes. Breaking the
    /// serial FP dependency chain keeps SIMD FMA units busy instead of
    /// stalling on add latency; the summation order is fixed, so results
    /// stay deterministic.
    #[inline]
    fn dot(w: &[f64], x: &[f64]) -> f64 {
        let n = w.len().min(x.len());
        let mut acc = [0.0f64; 16];
        for (cw, cx) in w[..n].chunks_exact(16).zip(x[..n].chunks_exact(16)) {
            for lane in 0..16 {
                acc[lane] += cw[lane] * cx[lane];
            }
        }
        let mut sum = 0.0;
        for quad in acc.chunks_exact(4) {
            sum += (quad[0] + quad[1]) + (quad[2] + quad[3]);
        }
        let tail = n - n % 16;
        for (wi, xi) in w[tail..n].iter().zip(&x[tail..n]) {
            sum += wi * xi;
        }
        sum
    }

    /// Single forward pass. Hidden layers apply `activation`; the output
    /// layer is linear.
    pub fn forward(&self, params: &FlatParams, input: &[f64]) -> Result<Vec<f64>, MlpError> {
        let trace = self.forward_traced(params, input)?;
        Ok(trace.into_output())
    }

    /// Forward pass that records per-layer pre- and post-activations for a
    /// subsequent `backward` call.
    pub fn forward_traced(
        &self,
        params: &FlatParams,
        input: &[f64],
    ) -> Result<ForwardTrace, MlpError> {
        self.check_params(params)?;
        if input.len() != self.input_dim {
            return Err(MlpError::InputDim { layer: 0, expected: self.input_dim, got: input.len() });
        }
        let n_layers = self.num_layers();
        let mut pre = Vec::with_capacity(n_layers);
        let mut post = Vec::with_capacity(n_layers);
        let mut cur: &[f64] = input;
        for l in 0..n_layers {
            let (w_off, b_off, fan_in, fan_out) = self.layer_offsets(l);
            let mut z = vec![0.0; fan_out];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &params.values[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                *zo = params.values[b_off + o] + Self::dot(row, cur);
            }
            let h = if l + 1 == n_layers {
                z.clone() // linear output layer
            } else {
                let mut h = z.clone();
                match self.activation {
                    Activation::Tanh => h.iter_mut().for_each(|v| *v = v.tanh()),
                    Activation::ReLU => h.iter_mut().for_each(|v| {
                        if *v < 0.0 {
                            *v = 0.0
                        }
                    }),
                    Activation::LeakyReLU | Activation::PReLU => {
                        let a = self.slope(params, l);
                        h.iter_mut().for_each(|v| {
                            if *v < 0.0 {
                                *v *= a
                            }
                        });
                    }
                }
                h
            };
            pre.push(z);
            post.push(h);
            cur = post.last().unwrap();
        }
        Ok(ForwardTrace { input: input.to_vec(), pre, post })
    }

    /// Backpropagate `upstream . output` through a recorded forward pass.
    ///
    /// Accumulates parameter gradients into `grads` (callers zero it between
    /// optimizer steps) and returns the gradient with respect to the input,
    /// which actor-critic updates chain through.
    pub fn backward(
        &self,
        params: &FlatParams,
        trace: &ForwardTrace,
        upstream: &[f64],
        grads: &mut GradientBuffer,
    ) -> Result<Vec<f64>, MlpError> {
        self.check_params(params)?;
        if grads.values.len() != self.param_count() {
            return Err(MlpError::ParamCount {
                expected: self.param_count(),
                got: grads.values.len(),
            });
        }
        let n_layers = self.num_layers();
        if trace.pre.len() != n_layers || trace.input.len() != self.input_dim {
            return Err(MlpError::TraceMismatch);
        }
        let dims = self.dims();
        for l in 0..n_layers {
            if trace.pre[l].len() != dims[l + 1] {
                return Err(MlpError::TraceMismatch);
            }
        }
        if upstream.len() != self.output_dim {
            return Err(MlpError::UpstreamDim { expected: self.output_dim, got: upstream.len() });
        }

        let mut dz = upstream.to_vec(); // output layer is linear
        for l in (0..n_layers).rev() {
            let (w_off, b_off, fan_in, fan_out) = self.layer_offsets(l);
            let below: &[f64] = if l == 0 { &trace.input } else { &trace.post[l - 1] };

            for o in 0..fan_out {
                let g = dz[o];
                grads.values[b_off + o] += g;
                let row = &mut grads.values[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                for (gw, x) in row.iter_mut().zip(below.iter()) {
                    *gw += g * x;
                }
            }

            let mut d_below = vec![0.0; fan_in];
            for o in 0..fan_out {
                let g = dz[o];
                let row = &params.values[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                for (db, w) in d_below.iter_mut().zip(row.iter()) {
                    *db += g * w;
                }
            }

            if l > 0 {
                // Chain through the hidden activation of layer l-1.
                let hl = l - 1;
                let z = &trace.pre[hl];
                match self.activation {
                    Activation::Tanh => {
                        let h = &trace.post[hl];
                        for (d, y) in d_below.iter_mut().zip(h.iter()) {
                            *d *= 1.0 - y * y;
                        }
                    }
                    Activation::ReLU => {
                        for (d, &zv) in d_below.iter_mut().zip(z.iter()) {
                            if zv <= 0.0 {
                                *d = 0.0;
                            }
                        }
                    }
                    Activation::LeakyReLU => {
                        for (d, &zv) in d_below.iter_mut().zip(z.iter()) {
                            if zv <= 0.0 {
                                *d *= LEAKY_SLOPE;
                            }
                        }
                    }
                    Activation::PReLU => {
                        let a = self.slope(params, hl);
                        let slope_idx = self.prelu_offset() + hl;
                        for (d, &zv) in d_below.iter_mut().zip(z.iter()) {
                            if zv <= 0.0 {
                                grads.values[slope_idx] += *d * zv;
                                *d *= a;
                            }
                        }
                    }
                }
            }
            dz = d_below;
        }
        Ok(dz)
    }
}

/// All weights, biases and PReLU slopes of one network as a single vector.
/// This is the genotype the evolution strategy perturbs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatParams {
    values: Vec<f64>,
}

impl FlatParams {
    pub fn new(values: Vec<f64>) -> FlatParams {
        FlatParams { values }
    }

    pub fn zeros(len: usize) -> FlatParams {
        FlatParams { values: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Structured read-only view of the per-layer contents.
    pub fn layers<'a>(&'a self, arch: &MlpArchitecture) -> Vec<LayerView<'a>> {
        let mut out = Vec::with_capacity(arch.num_layers());
        for l in 0..arch.num_layers() {
            let (w_off, b_off, fan_in, fan_out) = arch.layer_offsets(l);
            out.push(LayerView {
                weights: &self.values[w_off..w_off + fan_in * fan_out],
                biases: &self.values[b_off..b_off + fan_out],
                fan_in,
                fan_out,
            });
        }
        out
    }

    pub fn prelu_slopes<'a>(&'a self, arch: &MlpArchitecture) -> &'a [f64] {
        if arch.activation == Activation::PReLU {
            &self.values[arch.prelu_offset()..]
        } else {
            &[]
        }
    }

    /// Rebuild a flat vector from structured layer data. Inverse of
    /// `layers` + `prelu_slopes`.
    pub fn from_layers(
        arch: &MlpArchitecture,
        layers: &[(Vec<f64>, Vec<f64>)],
        prelu_slopes: &[f64],
    ) -> Result<FlatParams, MlpError> {
        if layers.len() != arch.num_layers() {
            return Err(MlpError::BadArchitecture(format!(
                "expected {} layers, got {}",
                arch.num_layers(),
                layers.len()
            )));
        }
        let mut values = Vec::with_capacity(arch.param_count());
        let dims = arch.dims();
        for (l, (w, b)) in layers.iter().enumerate() {
            if w.len() != dims[l] * dims[l + 1] || b.len() != dims[l + 1] {
                return Err(MlpError::InputDim {
                    layer: l,
                    expected: dims[l] * dims[l + 1],
                    got: w.len(),
                });
            }
            values.extend_from_slice(w);
            values.extend_from_slice(b);
        }
        if arch.activation == Activation::PReLU {
            if prelu_slopes.len() != arch.hidden_sizes.len() {
                return Err(MlpError::BadArchitecture("wrong number of PReLU slopes".into()));
            }
            values.extend_from_slice(prelu_slopes);
        }
        let params = FlatParams::new(values);
        arch.check_params(&params)?;
        Ok(params)
    }
}

/// Weight/bias slices of one layer.
#[derive(Debug)]
pub struct LayerView<'a> {
    pub weights: &'a [f64],
    pub biases: &'a [f64],
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Per-layer activations recorded by `forward_traced`, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("trace has at least one layer")
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.post.pop().expect("trace has at least one layer")
    }
}

/// Parameter-gradient accumulator with the same layout as `FlatParams`.
#[derive(Debug, Clone)]
pub struct GradientBuffer {
    values: Vec<f64>,
}

impl GradientBuffer {
    pub fn for_arch(arch: &MlpArchitecture) -> GradientBuffer {
        GradientBuffer { values: vec![0.0; arch.param_count()] }
    }

    pub fn zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// psi + sigma * eps, element-wise. Noise entries are standard-normal draws;
/// the sigma scaling happens here.
pub fn perturb(params: &FlatParams, noise: &FlatParams, sigma: f64) -> Result<FlatParams, MlpError> {
    if params.len() != noise.len() {
        return Err(MlpError::LengthMismatch { expected: params.len(), got: noise.len() });
    }
    let values = params
        .values
        .iter()
        .zip(noise.values.iter())
        .map(|(p, e)| p + sigma * e)
        .collect();
    Ok(FlatParams::new(values))
}


#[cfg(test)]
mod bench {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    #[ignore = "manual throughput probe"]
    fn forward_backward_throughput() {
        let arch = MlpArchitecture::new(4, vec![128, 128], 2, Activation::ReLU).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = arch.init_params(&mut rng);
        let input = [0.1, -0.2, 0.3, 0.4];
        let n = 100_000;

        let t0 = std::time::Instant::now();
        let mut sink = 0.0;
        for _ in 0..n {
            sink += arch.forward(&params, &input).unwrap()[0];
        }
        let fwd = t0.elapsed();

        let mut grads = GradientBuffer::for_arch(&arch);
        let t0 = std::time::Instant::now();
        for _ in 0..n {
            let trace = arch.forward_traced(&params, &input).unwrap();
            arch.backward(&params, &trace, &[1.0, 0.5], &mut grads).unwrap();
        }
        let bwd = t0.elapsed();
        let flops_fwd = 2.0 * 17_156.0 * n as f64;
        eprintln!(
            "forward: {:?} ({:.1} GFLOP/s)  fwd+bwd: {:?} ({:.1} GFLOP/s) sink={sink}",
            fwd / n,
            flops_fwd / fwd.as_secs_f64() / 1e9,
            bwd / n,
            3.0 * flops_fwd / bwd.as_secs_f64() / 1e9,
        );
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arb_activation() -> impl Strategy<Value = Activation> {
        prop_oneof![
            Just(Activation::Tanh),
            Just(Activation::ReLU),
            Just(Activation::LeakyReLU),
            Just(Activation::PReLU),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Rebuilding the flat vector from its structured view is the
        /// identity, so forward outputs are bit-identical.
        #[test]
        fn structured_roundtrip_is_identity(
            input_dim in 1usize..6,
            hidden in proptest::collection::vec(1usize..12, 1..=3),
            output_dim in 1usize..5,
            activation in arb_activation(),
            seed in 0u64..1000,
        ) {
            let arch = MlpArchitecture::new(input_dim, hidden, output_dim, activation).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = arch.init_params(&mut rng);
            let layers: Vec<(Vec<f64>, Vec<f64>)> = params
                .layers(&arch)
                .iter()
                .map(|v| (v.weights.to_vec(), v.biases.to_vec()))
                .collect();
            let rebuilt =
                FlatParams::from_layers(&arch, &layers, params.prelu_slopes(&arch)).unwrap();
            prop_assert_eq!(&params, &rebuilt);

            let input: Vec<f64> = (0..input_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a = arch.forward(&params, &input).unwrap();
            let b = arch.forward(&rebuilt, &input).unwrap();
            prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }

        /// Negating the noise negates the scaled offset exactly (IEEE
        /// multiplication is sign-symmetric), and the perturbed pair's
        /// midpoint sits at psi up to one rounding of each endpoint.
        #[test]
        fn mirrored_perturbation_midpoint(
            values in proptest::collection::vec(-10.0f64..10.0, 1..64),
            noise in proptest::collection::vec(-3.0f64..3.0, 1..64),
            sigma in 0.001f64..1.0,
        ) {
            let n = values.len().min(noise.len());
            let psi = FlatParams::new(values[..n].to_vec());
            let eps = FlatParams::new(noise[..n].to_vec());
            let neg = FlatParams::new(eps.as_slice().iter().map(|v| -v).collect());

            let zero = FlatParams::zeros(n);
            let offset_pos = perturb(&zero, &eps, sigma).unwrap();
            let offset_neg = perturb(&zero, &neg, sigma).unwrap();
            for i in 0..n {
                prop_assert_eq!(offset_pos.as_slice()[i], -offset_neg.as_slice()[i]);
            }

            let plus = perturb(&psi, &eps, sigma).unwrap();
            let minus = perturb(&psi, &neg, sigma).unwrap();
            for i in 0..n {
                let mid_err = (plus.as_slice()[i] + minus.as_slice()[i]
                    - 2.0 * psi.as_slice()[i])
                    .abs();
                let scale = psi.as_slice()[i].abs().max(offset_pos.as_slice()[i].abs()).max(1.0);
                prop_assert!(mid_err <= 4.0 * f64::EPSILON * scale);
            }
        }
    }
}
