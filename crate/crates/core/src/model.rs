//! Encoder → ASPP → decoder segmentation network.
//!
//! The encoder is a stack of 3×3 conv + ReLU stages. The first
//! `log2(output_stride)` stages have stride 2; the remaining stages keep the
//! resolution and use growing dilation instead. The output of the second
//! stage (stride 4) feeds the decoder skip connection.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{ModelCheckpoint, WeightBlob, FORMAT_VERSION};
use crate::class::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::mask::LabelMask;
use crate::ops::{
    bilinear_resize, bilinear_resize_backward, concat_channels, conv2d, conv2d_backward_select,
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, split_channels, ConvParams,
};
use crate::tensor::{Scalar, Shape, Tensor};

/// Stride of the low-level features handed to the decoder.
pub const LOW_LEVEL_STRIDE: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub num_classes: usize,
    /// Input resolution divided by the deepest feature resolution, per axis.
    pub output_stride: usize,
    /// Output width of each encoder stage.
    pub encoder_channels: Vec<usize>,
    pub aspp_rates: Vec<usize>,
    pub aspp_out_channels: usize,
    pub decoder_low_level_channels: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_channels: 3,
            num_classes: NUM_CLASSES,
            output_stride: 16,
            encoder_channels: alloc::vec![16, 24, 32, 32, 32],
            aspp_rates: alloc::vec![6, 12, 18],
            aspp_out_channels: 24,
            decoder_low_level_channels: 8,
            seed: 0,
        }
    }
}

const CONFIG_KEYS: [&str; 8] = [
    "input_channels",
    "num_classes",
    "output_stride",
    "encoder_channels",
    "aspp_rates",
    "aspp_out_channels",
    "decoder_low_level_channels",
    "seed",
];

fn parse_list(value: &str) -> Option<Vec<usize>> {
    value
        .split(',')
        .map(|v| v.trim().parse().ok())
        .collect()
}

fn join_list(values: &[usize]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v}");
    }
    s
}

impl ModelConfig {
    /// Number of stride-2 encoder stages.
    pub fn downsampling_stages(&self) -> usize {
        self.output_stride.trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.input_channels == 0 {
            return bad("input_channels must be positive".into());
        }
        if self.num_classes != NUM_CLASSES {
            return bad(format!(
                "num_classes must be {NUM_CLASSES} for the land-cover palette, got {}",
                self.num_classes
            ));
        }
        let os = self.output_stride;
        if !os.is_power_of_two() || !(LOW_LEVEL_STRIDE..=512).contains(&os) {
            return bad(format!(
                "output_stride must be a power of two in 4..=512, got {os}"
            ));
        }
        if self.encoder_channels.len() <= self.downsampling_stages() {
            return bad(format!(
                "output_stride {os} needs at least {} encoder stages, got {}",
                self.downsampling_stages() + 1,
                self.encoder_channels.len()
            ));
        }
        if self.encoder_channels.contains(&0) {
            return bad("encoder stage widths must be positive".into());
        }
        if self.aspp_rates.is_empty() || self.aspp_rates.contains(&0) {
            return bad("aspp_rates must be a non-empty list of positive rates".into());
        }
        for (i, r) in self.aspp_rates.iter().enumerate() {
            if self.aspp_rates[i + 1..].contains(r) {
                return bad(format!("aspp rate {r} listed twice"));
            }
        }
        if self.aspp_out_channels == 0 || self.decoder_low_level_channels == 0 {
            return bad("aspp and decoder widths must be positive".into());
        }
        Ok(())
    }

    /// Sets one field from its text form. Returns `Ok(false)` for keys that
    /// are not model settings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let value = value.trim();
        let bad = || Error::Parameter(format!("invalid value `{value}` for model key `{key}`"));
        let num = || value.parse::<usize>().map_err(|_| bad());
        match key.trim() {
            "input_channels" => self.input_channels = num()?,
            "num_classes" => self.num_classes = num()?,
            "output_stride" => self.output_stride = num()?,
            "encoder_channels" => self.encoder_channels = parse_list(value).ok_or_else(bad)?,
            "aspp_rates" => self.aspp_rates = parse_list(value).ok_or_else(bad)?,
            "aspp_out_channels" => self.aspp_out_channels = num()?,
            "decoder_low_level_channels" => self.decoder_low_level_channels = num()?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Canonical `key=value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "input_channels={}", self.input_channels);
        let _ = writeln!(s, "num_classes={}", self.num_classes);
        let _ = writeln!(s, "output_stride={}", self.output_stride);
        let _ = writeln!(s, "encoder_channels={}", join_list(&self.encoder_channels));
        let _ = writeln!(s, "aspp_rates={}", join_list(&self.aspp_rates));
        let _ = writeln!(s, "aspp_out_channels={}", self.aspp_out_channels);
        let _ = writeln!(
            s,
            "decoder_low_level_channels={}",
            self.decoder_low_level_channels
        );
        let _ = writeln!(s, "seed={}", self.seed);
        s
    }

    /// Parses the output of [`ModelConfig::to_text`]; every key is required.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = ModelConfig::default();
        let mut seen = [false; CONFIG_KEYS.len()];
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("config line `{line}` has no `=`")))?;
            if !config.set(key, value)? {
                return Err(Error::Parameter(format!("unknown model key `{}`", key.trim())));
            }
            if let Some(i) = CONFIG_KEYS.iter().position(|k| *k == key.trim()) {
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Parameter(format!(
                "model config is missing `{}`",
                CONFIG_KEYS[i]
            )));
        }
        config.validate()?;
        Ok(config)
    }

    /// Names and parameters of every convolution, in declaration order.
    pub fn layer_specs(&self) -> Vec<(String, ConvParams)> {
        let mut specs = Vec::new();
        let stride_stages = self.downsampling_stages();
        let mut prev = self.input_channels;
        for (i, &width) in self.encoder_channels.iter().enumerate() {
            let mut p = ConvParams::new(prev, width, 3);
            if i < stride_stages {
                p = p.with_stride(2);
            } else {
                p = p.with_dilation(1 << (i + 1 - stride_stages));
            }
            specs.push((format!("encoder.{i}"), p));
            prev = width;
        }
        let high = prev;
        let a = self.aspp_out_channels;
        specs.push(("aspp.conv1x1".into(), ConvParams::new(high, a, 1)));
        for &r in &self.aspp_rates {
            specs.push((
                format!("aspp.rate{r}"),
                ConvParams::new(high, a, 3).with_dilation(r),
            ));
        }
        specs.push(("aspp.pool".into(), ConvParams::new(high, a, 1)));
        let branches = self.aspp_rates.len() + 2;
        specs.push(("aspp.fuse".into(), ConvParams::new(a * branches, a, 1)));
        let low = self.encoder_channels[1];
        let l = self.decoder_low_level_channels;
        specs.push(("decoder.reduce".into(), ConvParams::new(low, l, 1)));
        specs.push(("decoder.refine1".into(), ConvParams::new(a + l, a, 3)));
        specs.push(("decoder.refine2".into(), ConvParams::new(a, a, 3)));
        specs.push((
            "decoder.classifier".into(),
            ConvParams::new(a, self.num_classes, 1),
        ));
        specs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub name: String,
    pub params: ConvParams,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

/// Weight and bias gradients, one entry per layer in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<(Tensor<T>, Vec<T>)>,
}

impl<T: Scalar> Gradients<T> {
    /// All gradient values flattened in parameter order (weights then bias,
    /// layer by layer).
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EncoderFeatures<T> {
    pub high_level: Tensor<T>,
    pub low_level: Tensor<T>,
}

#[derive(Debug, Clone)]
struct LayerTrace<T> {
    input: Tensor<T>,
    pre_activation: Tensor<T>,
}

/// Values saved by a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    layers: Vec<Option<LayerTrace<T>>>,
    high_shape: Shape,
    aspp_shape: Shape,
    classifier_shape: Shape,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    encoder: usize,
    rates: usize,
}

impl Layout {
    fn aspp_1x1(&self) -> usize {
        self.encoder
    }
    fn aspp_rate(&self, i: usize) -> usize {
        self.encoder + 1 + i
    }
    fn aspp_pool(&self) -> usize {
        self.encoder + 1 + self.rates
    }
    fn aspp_fuse(&self) -> usize {
        self.encoder + 2 + self.rates
    }
    fn reduce(&self) -> usize {
        self.encoder + 3 + self.rates
    }
    fn refine1(&self) -> usize {
        self.reduce() + 1
    }
    fn refine2(&self) -> usize {
        self.reduce() + 2
    }
    fn classifier(&self) -> usize {
        self.reduce() + 3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegNet<T> {
    config: ModelConfig,
    layers: Vec<ConvLayer<T>>,
}

impl<T: Scalar> SegNet<T> {
    /// Fresh network with fan-in scaled uniform weights
    /// (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`) and zero biases, seeded from
    /// `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .layer_specs()
            .into_iter()
            .map(|(name, params)| {
                let shape = params.weight_shape();
                let fan_in = params.in_channels * params.kernel_size * params.kernel_size;
                let bound = num_traits::Float::sqrt(6.0 / fan_in as f64);
                let data = (0..shape.len())
                    .map(|_| T::of_f64((rng.gen::<f64>() * 2.0 - 1.0) * bound))
                    .collect();
                ConvLayer {
                    name,
                    params,
                    weight: Tensor::from_vec(shape, data).expect("shape matches"),
                    bias: alloc::vec![T::zero(); params.out_channels],
                }
            })
            .collect();
        Ok(SegNet { config, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer<T>] {
        &mut self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&ConvLayer<T>> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut ConvLayer<T>> {
        self.layers.iter_mut().find(|l| l.name == name)
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// All parameters flattened in declaration order (weights then bias).
    pub fn parameters(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Mutable access to the parameter at a flat index of [`Self::parameters`].
    pub fn parameter_mut(&mut self, mut index: usize) -> Option<&mut T> {
        for l in &mut self.layers {
            let nw = l.weight.data().len();
            if index < nw {
                return Some(&mut l.weight.data_mut()[index]);
            }
            index -= nw;
            if index < l.bias.len() {
                return Some(&mut l.bias[index]);
            }
            index -= l.bias.len();
        }
        None
    }

    pub fn cast<U: Scalar>(&self) -> SegNet<U> {
        SegNet {
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    name: l.name.clone(),
                    params: l.params,
                    weight: l.weight.cast(),
                    bias: l.bias.iter().map(|b| U::of_f64(b.as_f64())).collect(),
                })
                .collect(),
        }
    }

    fn layout(&self) -> Layout {
        Layout {
            encoder: self.config.encoder_channels.len(),
            rates: self.config.aspp_rates.len(),
        }
    }

    fn apply(
        &self,
        index: usize,
        input: &Tensor<T>,
        activate: bool,
        trace: &mut Option<&mut ForwardTrace<T>>,
    ) -> Result<Tensor<T>> {
        let layer = &self.layers[index];
        let pre = conv2d(input, &layer.weight, &layer.bias, &layer.params)?;
        let out = if activate { relu(&pre) } else { pre.clone() };
        if let Some(t) = trace.as_deref_mut() {
            t.layers[index] = Some(LayerTrace {
                input: input.clone(),
                pre_activation: pre,
            });
        }
        Ok(out)
    }

    fn check_input(&self, image: &Tensor<T>) -> Result<()> {
        let s = image.shape();
        if s.c != self.config.input_channels {
            return Err(Error::dim(
                "encoder",
                format!(
                    "image has {} channels, model expects {}",
                    s.c, self.config.input_channels
                ),
            ));
        }
        let os = self.config.output_stride;
        if s.h == 0 || s.w == 0 || !s.h.is_multiple_of(os) || !s.w.is_multiple_of(os) {
            return Err(Error::dim(
                "encoder",
                format!(
                    "image {}x{} is not divisible by output stride {os}",
                    s.h, s.w
                ),
            ));
        }
        Ok(())
    }

    fn encoder(
        &self,
        image: &Tensor<T>,
        trace: &mut Option<&mut ForwardTrace<T>>,
    ) -> Result<EncoderFeatures<T>> {
        self.check_input(image)?;
        let mut x = image.clone();
        let mut low = None;
        for i in 0..self.layout().encoder {
            x = self.apply(i, &x, true, trace)?;
            if i == 1 {
                low = Some(x.clone());
            }
        }
        Ok(EncoderFeatures {
            high_level: x,
            low_level: low.expect("at least two encoder stages"),
        })
    }

    fn aspp(&self, high: &Tensor<T>, trace: &mut Option<&mut ForwardTrace<T>>) -> Result<Tensor<T>> {
        let lay = self.layout();
        let s = high.shape();
        let mut cat = self.apply(lay.aspp_1x1(), high, true, trace)?;
        for i in 0..lay.rates {
            let b = self.apply(lay.aspp_rate(i), high, true, trace)?;
            cat = concat_channels(&cat, &b)?;
        }
        let pooled = global_avg_pool(high)?;
        let image_level = self.apply(lay.aspp_pool(), &pooled, true, trace)?;
        let image_level = bilinear_resize(&image_level, s.h, s.w)?;
        cat = concat_channels(&cat, &image_level)?;
        self.apply(lay.aspp_fuse(), &cat, true, trace)
    }

    fn decoder(
        &self,
        aspp_out: &Tensor<T>,
        low: &Tensor<T>,
        trace: &mut Option<&mut ForwardTrace<T>>,
    ) -> Result<Tensor<T>> {
        let lay = self.layout();
        let (a, l) = (aspp_out.shape(), low.shape());
        let up = self.config.output_stride / LOW_LEVEL_STRIDE;
        if a.h * up != l.h || a.w * up != l.w || a.n != l.n {
            return Err(Error::dim(
                "decoder",
                format!(
                    "ASPP output {a} upsampled x{up} does not match low-level features {l}"
                ),
            ));
        }
        let upsampled = bilinear_resize(aspp_out, l.h, l.w)?;
        let reduced = self.apply(lay.reduce(), low, true, trace)?;
        let cat = concat_channels(&upsampled, &reduced)?;
        let x = self.apply(lay.refine1(), &cat, true, trace)?;
        let x = self.apply(lay.refine2(), &x, true, trace)?;
        let x = self.apply(lay.classifier(), &x, false, trace)?;
        let s = x.shape();
        bilinear_resize(&x, s.h * LOW_LEVEL_STRIDE, s.w * LOW_LEVEL_STRIDE)
    }

    /// High-level features at `output_stride` and low-level features at
    /// stride 4.
    pub fn encoder_forward(&self, image: &Tensor<T>) -> Result<EncoderFeatures<T>> {
        self.encoder(image, &mut None)
    }

    /// Parallel 1×1, dilated 3×3 and image-pooling branches, concatenated
    /// and fused by a 1×1 convolution. Spatial size is preserved.
    pub fn aspp_forward(&self, features: &Tensor<T>) -> Result<Tensor<T>> {
        self.aspp(features, &mut None)
    }

    /// Pre-fusion branch outputs, in concatenation order.
    pub fn aspp_branches(&self, features: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let lay = self.layout();
        let s = features.shape();
        let mut out = Vec::with_capacity(lay.rates + 2);
        out.push(self.apply(lay.aspp_1x1(), features, true, &mut None)?);
        for i in 0..lay.rates {
            out.push(self.apply(lay.aspp_rate(i), features, true, &mut None)?);
        }
        let pooled = global_avg_pool(features)?;
        let image_level = self.apply(lay.aspp_pool(), &pooled, true, &mut None)?;
        out.push(bilinear_resize(&image_level, s.h, s.w)?);
        Ok(out)
    }

    /// Logits at full input resolution from ASPP output and stride-4
    /// features.
    pub fn decoder_forward(&self, aspp_out: &Tensor<T>, low_level: &Tensor<T>) -> Result<Tensor<T>> {
        self.decoder(aspp_out, low_level, &mut None)
    }

    /// Logits of shape (N, num_classes, H, W).
    pub fn forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let f = self.encoder(image, &mut None)?;
        let a = self.aspp(&f.high_level, &mut None)?;
        self.decoder(&a, &f.low_level, &mut None)
    }

    /// Forward pass that also records what [`SegNet::backward`] needs.
    pub fn forward_traced(&self, image: &Tensor<T>) -> Result<(Tensor<T>, ForwardTrace<T>)> {
        let mut trace = ForwardTrace {
            layers: alloc::vec![None; self.layers.len()],
            high_shape: Shape::new(0, 0, 0, 0),
            aspp_shape: Shape::new(0, 0, 0, 0),
            classifier_shape: Shape::new(0, 0, 0, 0),
        };
        let mut slot = Some(&mut trace);
        let f = self.encoder(image, &mut slot)?;
        let a = self.aspp(&f.high_level, &mut slot)?;
        let logits = self.decoder(&a, &f.low_level, &mut slot)?;
        trace.high_shape = f.high_level.shape();
        trace.aspp_shape = a.shape();
        let ls = logits.shape();
        trace.classifier_shape = Shape::new(
            ls.n,
            ls.c,
            ls.h / LOW_LEVEL_STRIDE,
            ls.w / LOW_LEVEL_STRIDE,
        );
        Ok((logits, trace))
    }

    /// Backpropagates `logit_grad` through a traced forward pass.
    pub fn backward(&self, trace: &ForwardTrace<T>, logit_grad: &Tensor<T>) -> Result<Gradients<T>> {
        let lay = self.layout();
        let mut grads: Vec<Option<(Tensor<T>, Vec<T>)>> = alloc::vec![None; self.layers.len()];

        // Gradient w.r.t. a layer's output → gradient w.r.t. its input.
        let mut back = |index: usize, grad_out: &Tensor<T>, activated: bool, want_input: bool| -> Result<Option<Tensor<T>>> {
            let t = trace.layers[index]
                .as_ref()
                .ok_or_else(|| Error::Parameter(format!("layer {index} missing from trace")))?;
            let layer = &self.layers[index];
            let g_pre = if activated {
                relu_backward(grad_out, &t.pre_activation)?
            } else {
                grad_out.clone()
            };
            let (gi, gw, gb) =
                conv2d_backward_select(&g_pre, &t.input, &layer.weight, &layer.params, want_input)?;
            grads[index] = Some((gw, gb));
            Ok(gi)
        };

        // decoder
        let g_cls = bilinear_resize_backward(logit_grad, trace.classifier_shape)?;
        let g = back(lay.classifier(), &g_cls, false, true)?.expect("input grad");
        let g = back(lay.refine2(), &g, true, true)?.expect("input grad");
        let g_cat = back(lay.refine1(), &g, true, true)?.expect("input grad");
        let (g_up, g_reduced) = split_channels(&g_cat, self.config.aspp_out_channels)?;
        let g_low = back(lay.reduce(), &g_reduced, true, true)?.expect("input grad");
        let g_aspp = bilinear_resize_backward(&g_up, trace.aspp_shape)?;

        // ASPP
        let g_cat = back(lay.aspp_fuse(), &g_aspp, true, true)?.expect("input grad");
        let a = self.config.aspp_out_channels;
        let mut rest = g_cat;
        let mut g_high = Tensor::zeros(trace.high_shape);
        let (g_b, r) = split_channels(&rest, a)?;
        rest = r;
        g_high.add_assign(&back(lay.aspp_1x1(), &g_b, true, true)?.expect("input grad"))?;
        for i in 0..lay.rates {
            let (g_b, r) = split_channels(&rest, a)?;
            rest = r;
            g_high.add_assign(&back(lay.aspp_rate(i), &g_b, true, true)?.expect("input grad"))?;
        }
        let hs = trace.high_shape;
        let g_image_level = bilinear_resize_backward(&rest, Shape::new(hs.n, a, 1, 1))?;
        let g_pooled = back(lay.aspp_pool(), &g_image_level, true, true)?.expect("input grad");
        g_high.add_assign(&global_avg_pool_backward(&g_pooled, hs)?)?;

        // encoder
        let mut g = g_high;
        for i in (0..lay.encoder).rev() {
            if i == 1 {
                g.add_assign(&g_low)?;
            }
            match back(i, &g, true, i > 0)? {
                Some(next) => g = next,
                None => break,
            }
        }

        Ok(Gradients {
            layers: grads
                .into_iter()
                .map(|g| g.expect("every layer visited"))
                .collect(),
        })
    }

    pub fn to_checkpoint(&self, training_step: u64) -> ModelCheckpoint {
        ModelCheckpoint {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            blobs: self
                .layers
                .iter()
                .flat_map(|l| {
                    let ws = l.weight.shape();
                    [
                        WeightBlob {
                            name: format!("{}.weight", l.name),
                            shape: ws.dims().to_vec(),
                            data: l.weight.data().iter().map(|v| v.as_f64() as f32).collect(),
                        },
                        WeightBlob {
                            name: format!("{}.bias", l.name),
                            shape: alloc::vec![l.bias.len()],
                            data: l.bias.iter().map(|v| v.as_f64() as f32).collect(),
                        },
                    ]
                })
                .collect(),
            training_step,
        }
    }

    /// Rebuilds a network, checking that the stored blobs match the layout
    /// the checkpoint's config implies.
    pub fn from_checkpoint(checkpoint: &ModelCheckpoint) -> Result<Self> {
        checkpoint.config.validate()?;
        let specs = checkpoint.config.layer_specs();
        if checkpoint.blobs.len() != specs.len() * 2 {
            return Err(Error::ShapeMismatch {
                name: "<checkpoint>".into(),
                detail: format!(
                    "config implies {} weight blobs, checkpoint has {}",
                    specs.len() * 2,
                    checkpoint.blobs.len()
                ),
            });
        }
        let mut layers = Vec::with_capacity(specs.len());
        for ((name, params), pair) in specs.into_iter().zip(checkpoint.blobs.chunks_exact(2)) {
            let ws = params.weight_shape();
            let expect = |blob: &WeightBlob, suffix: &str, shape: &[usize]| -> Result<Vec<T>> {
                let want = format!("{name}.{suffix}");
                if blob.name != want || blob.shape != shape {
                    return Err(Error::ShapeMismatch {
                        name: want,
                        detail: format!(
                            "expected shape {:?}, found `{}` with shape {:?}",
                            shape, blob.name, blob.shape
                        ),
                    });
                }
                blob.check()?;
                Ok(blob.data.iter().map(|&v| T::of_f64(v as f64)).collect())
            };
            let weight = expect(&pair[0], "weight", &ws.dims())?;
            let bias = expect(&pair[1], "bias", &[params.out_channels])?;
            layers.push(ConvLayer {
                name,
                params,
                weight: Tensor::from_vec(ws, weight)?,
                bias,
            });
        }
        Ok(SegNet {
            config: checkpoint.config.clone(),
            layers,
        })
    }
}

/// Per-pixel argmax over the class channels, ties going to the lowest index.
pub fn argmax_masks<T: Scalar>(logits: &Tensor<T>) -> Result<Vec<LabelMask>> {
    let s = logits.shape();
    if s.c == 0 || s.c > NUM_CLASSES {
        return Err(Error::dim(
            "argmax",
            format!("logits {s} must have 1..={NUM_CLASSES} channels"),
        ));
    }
    let plane = s.plane();
    let mut masks = Vec::with_capacity(s.n);
    for n in 0..s.n {
        let mut classes = alloc::vec![0u8; plane];
        let mut best: Vec<T> = logits.plane(n, 0).to_vec();
        for c in 1..s.c {
            for ((b, k), &v) in best.iter_mut().zip(classes.iter_mut()).zip(logits.plane(n, c)) {
                if v > *b {
                    *b = v;
                    *k = c as u8;
                }
            }
        }
        masks.push(LabelMask::new(s.w, s.h, classes)?);
    }
    Ok(masks)
}

/// Full-network logits for `image` using the weights in `checkpoint`.
pub fn model_forward(image: &Tensor<f32>, checkpoint: &ModelCheckpoint) -> Result<Tensor<f32>> {
    SegNet::<f32>::from_checkpoint(checkpoint)?.forward(image)
}

/// Predicted label mask for each image in the batch.
pub fn predict_mask(image: &Tensor<f32>, checkpoint: &ModelCheckpoint) -> Result<Vec<LabelMask>> {
    argmax_masks(&model_forward(image, checkpoint)?)
}

impl<T: Scalar> SegNet<T> {
    pub fn predict(&self, image: &Tensor<T>) -> Result<Vec<LabelMask>> {
        argmax_masks(&self.forward(image)?)
    }
}

/// One line per convolution: kernel, channels, stride and dilation.
pub fn layer_summary(config: &ModelConfig) -> String {
    let mut s = String::new();
    for (name, p) in config.layer_specs() {
        let _ = writeln!(
            s,
            "{name}: {}x{} {}->{} stride {} dilation {}",
            p.kernel_size, p.kernel_size, p.in_channels, p.out_channels, p.stride, p.dilation
        );
    }
    s.trim_end().to_string()
}
