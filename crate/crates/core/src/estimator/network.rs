//! Reference convolutional regressors with a mean head and a softplus
//! variance head.
//!
//! Image model: three strided 3x3 convolutions, global average pooling, a
//! hidden dense layer, a scaled-sigmoid mean head and a softplus variance
//! head. Video model: a two-layer convolutional encoder shared across the
//! frames of a clip, average pooling over space and time, the same hidden
//! layer and a linear mean head.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{
    conv3x3_relu_backward, conv3x3_relu_forward, conv_out_len, dense_backward, dense_forward,
    Volume,
};
use super::loss::{nll_grad, nll_loss, sigmoid, softplus, VAR_FLOOR};
use super::transform::LabelTransform;
use crate::error::{Error, Result};
use crate::imaging::{Clip, Frame, TargetGeometry};
use crate::rng::{rng_from_seed, GaRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Image,
    Video,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modality::Image => "image",
            Modality::Video => "video",
        })
    }
}

/// Transformed-space prediction of one network evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOutput<T> {
    pub mu_t: T,
    pub var_t: T,
}

/// A single image or a fixed-length clip, already preprocessed to the
/// predictor's geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInput<T> {
    Image(Frame<T>),
    Clip(Clip<T>),
}

impl<T> ModelInput<T> {
    pub fn modality(&self) -> Modality {
        match self {
            ModelInput::Image(_) => Modality::Image,
            ModelInput::Clip(_) => Modality::Video,
        }
    }

    pub fn frames(&self) -> &[Frame<T>] {
        match self {
            ModelInput::Image(f) => std::slice::from_ref(f),
            ModelInput::Clip(c) => &c.frames,
        }
    }
}

/// Anything that maps preprocessed media to a transformed-space mean and
/// variance.
pub trait Predictor<T: Scalar>: Send + Sync {
    fn modality(&self) -> Modality;
    fn transform(&self) -> LabelTransform;
    /// Inference-mode evaluation (no dropout).
    fn predict(&self, input: &ModelInput<T>) -> Result<EstimatorOutput<T>>;
}

/// Predictors that expose parameters and gradients to the training loop.
pub trait Trainable<T: Scalar>: Predictor<T> {
    fn parameter_sizes(&self) -> Vec<usize>;
    fn parameters_mut(&mut self) -> Vec<&mut [T]>;
    /// NLL loss on one example and its gradient for every parameter tensor.
    fn loss_and_grad(
        &self,
        input: &ModelInput<T>,
        target_t: T,
        keep_prob: f64,
        rng: &mut GaRng,
    ) -> Result<(T, Vec<Vec<T>>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanHead {
    Linear,
    /// `t = scale · sigmoid(o)`
    ScaledSigmoid { scale: f64 },
}

/// Upper end of the image head: `3.15 = 0.01 · 315 days`.
pub const IMAGE_HEAD_SCALE: f64 = 3.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetArch {
    pub modality: Modality,
    pub input_width: usize,
    pub input_height: usize,
    pub frames: usize,
    pub conv: Vec<ConvSpec>,
    pub hidden: usize,
    pub mean_head: MeanHead,
    pub transform: LabelTransform,
}

impl NetArch {
    pub fn image(geometry: &TargetGeometry) -> Self {
        Self {
            modality: Modality::Image,
            input_width: geometry.width,
            input_height: geometry.height,
            frames: 1,
            conv: vec![
                ConvSpec { out_channels: 8, stride: 2 },
                ConvSpec { out_channels: 8, stride: 2 },
                ConvSpec { out_channels: 12, stride: 2 },
            ],
            hidden: 16,
            mean_head: MeanHead::ScaledSigmoid {
                scale: IMAGE_HEAD_SCALE,
            },
            transform: LabelTransform::IMAGE,
        }
    }

    pub fn video(geometry: &TargetGeometry, clip_len: usize) -> Self {
        Self {
            modality: Modality::Video,
            input_width: geometry.width,
            input_height: geometry.height,
            frames: clip_len,
            conv: vec![
                ConvSpec { out_channels: 8, stride: 2 },
                ConvSpec { out_channels: 12, stride: 2 },
            ],
            hidden: 16,
            mean_head: MeanHead::Linear,
            transform: LabelTransform::VIDEO,
        }
    }

    fn feature_channels(&self) -> usize {
        self.conv.last().map_or(1, |c| c.out_channels)
    }

    /// (name, shape) of every parameter tensor in storage order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut cin = 1;
        for (i, c) in self.conv.iter().enumerate() {
            out.push((format!("conv{i}.weight"), vec![c.out_channels, cin, 3, 3]));
            out.push((format!("conv{i}.bias"), vec![c.out_channels]));
            cin = c.out_channels;
        }
        let feat = self.feature_channels();
        out.push(("fc.weight".into(), vec![self.hidden, feat]));
        out.push(("fc.bias".into(), vec![self.hidden]));
        out.push(("mean.weight".into(), vec![1, self.hidden]));
        out.push(("mean.bias".into(), vec![1]));
        out.push(("var.weight".into(), vec![1, self.hidden]));
        out.push(("var.bias".into(), vec![1]));
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.transform.validate()?;
        if self.input_width == 0 || self.input_height == 0 || self.frames == 0 || self.hidden == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        if self.conv.iter().any(|c| c.out_channels == 0 || c.stride == 0) {
            return Err(Error::Config("convolution channels and strides must be positive".into()));
        }
        if self.modality == Modality::Image && self.frames != 1 {
            return Err(Error::Config("image networks take exactly one frame".into()));
        }
        Ok(())
    }
}

/// Named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvRegressor<T> {
    arch: NetArch,
    tensors: Vec<Tensor<T>>,
}

struct ForwardCache<T> {
    /// Per frame: input volume followed by every conv output.
    activations: Vec<Vec<Volume<T>>>,
    pooled: Vec<T>,
    hidden: Vec<T>,
    /// Dropout multipliers applied to `hidden` (0 or 1/keep).
    mask: Vec<T>,
    o_mean: T,
    o_var: T,
}

impl<T: Scalar> ConvRegressor<T> {
    /// He-initialised network whose mean head starts at `init_ga_days` and
    /// whose variance head starts at `init_var_t`.
    pub fn new(arch: NetArch, seed: u64, init_ga_days: f64, init_var_t: f64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng_from_seed(seed);
        let init_t = arch.transform.forward(init_ga_days)?;
        let mut tensors = Vec::new();
        for (name, shape) in arch.tensor_shapes() {
            let n: usize = shape.iter().product();
            let fan_in: usize = shape.iter().skip(1).product::<usize>().max(1);
            let data: Vec<T> = if name.ends_with(".bias") {
                let v = match name.as_str() {
                    "mean.bias" => match arch.mean_head {
                        MeanHead::Linear => init_t,
                        MeanHead::ScaledSigmoid { scale } => {
                            let p = (init_t / scale).clamp(1e-6, 1.0 - 1e-6);
                            (p / (1.0 - p)).ln()
                        }
                    },
                    // inverse softplus
                    "var.bias" => (init_var_t.exp_m1()).ln(),
                    _ => 0.0,
                };
                vec![T::lit(v); n]
            } else {
                let std = if name.starts_with("mean") || name.starts_with("var") {
                    0.01
                } else {
                    (2.0 / fan_in as f64).sqrt()
                };
                let normal = Normal::new(0.0, std).expect("finite std");
                (0..n).map(|_| T::lit(normal.sample(&mut rng))).collect()
            };
            tensors.push(Tensor { name, shape, data });
        }
        Ok(Self { arch, tensors })
    }

    /// Rebuilds a network from stored tensors, checking names and shapes.
    pub fn from_tensors(arch: NetArch, tensors: Vec<Tensor<T>>) -> Result<Self> {
        arch.validate()?;
        let expected = arch.tensor_shapes();
        if expected.len() != tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "architecture has {} tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(&tensors) {
            if name != &t.name || shape != &t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::ShapeMismatch(format!(
                    "expected {name} {shape:?}, got {} {:?}",
                    t.name, t.shape
                )));
            }
        }
        Ok(Self { arch, tensors })
    }

    pub fn arch(&self) -> &NetArch {
        &self.arch
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    fn check_input(&self, input: &ModelInput<T>) -> Result<()> {
        if input.modality() != self.arch.modality {
            return Err(Error::ModalityMismatch {
                expected: self.arch.modality.to_string(),
                got: input.modality().to_string(),
            });
        }
        let frames = input.frames();
        if frames.len() != self.arch.frames {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} frames, got {}",
                self.arch.frames,
                frames.len()
            )));
        }
        if let Some(f) = frames
            .iter()
            .find(|f| f.width() != self.arch.input_width || f.height() != self.arch.input_height)
        {
            return Err(Error::ShapeMismatch(format!(
                "network expects {}x{} frames, got {}x{}",
                self.arch.input_width,
                self.arch.input_height,
                f.width(),
                f.height()
            )));
        }
        Ok(())
    }

    fn mean_from_raw(&self, o: T) -> T {
        match self.arch.mean_head {
            MeanHead::Linear => o,
            MeanHead::ScaledSigmoid { scale } => T::lit(scale) * sigmoid(o),
        }
    }

    fn mean_derivative(&self, o: T) -> T {
        match self.arch.mean_head {
            MeanHead::Linear => T::one(),
            MeanHead::ScaledSigmoid { scale } => {
                let s = sigmoid(o);
                T::lit(scale) * s * (T::one() - s)
            }
        }
    }

    fn forward(&self, input: &ModelInput<T>, dropout: Option<(f64, &mut GaRng)>) -> ForwardCache<T> {
        let n_conv = self.arch.conv.len();
        let mut activations = Vec::with_capacity(input.frames().len());
        let feat = self.arch.feature_channels();
        let mut pooled = vec![T::zero(); feat];
        let mut positions = 0usize;
        for frame in input.frames() {
            let mut acts = Vec::with_capacity(n_conv + 1);
            acts.push(Volume {
                channels: 1,
                height: frame.height(),
                width: frame.width(),
                data: frame.pixels().to_vec(),
            });
            for (i, spec) in self.arch.conv.iter().enumerate() {
                let next = conv3x3_relu_forward(
                    &acts[i],
                    &self.tensors[2 * i].data,
                    &self.tensors[2 * i + 1].data,
                    spec.out_channels,
                    spec.stride,
                );
                acts.push(next);
            }
            let last = &acts[n_conv];
            let plane = last.height * last.width;
            for (c, p) in pooled.iter_mut().enumerate() {
                *p = *p + last.data[c * plane..(c + 1) * plane].iter().copied().sum::<T>();
            }
            positions += plane;
            activations.push(acts);
        }
        let inv = T::from_usize_lossy(positions).recip();
        for p in &mut pooled {
            *p = *p * inv;
        }

        let base = 2 * n_conv;
        let mut hidden = dense_forward(&pooled, &self.tensors[base].data, &self.tensors[base + 1].data);
        for h in &mut hidden {
            *h = h.max(T::zero());
        }
        let mask: Vec<T> = match dropout {
            Some((keep, rng)) if keep < 1.0 => {
                let scale = T::lit(1.0 / keep);
                (0..hidden.len())
                    .map(|_| if rng.random_bool(keep) { scale } else { T::zero() })
                    .collect()
            }
            _ => vec![T::one(); hidden.len()],
        };
        let dropped: Vec<T> = hidden.iter().zip(&mask).map(|(h, m)| *h * *m).collect();
        let o_mean = dense_forward(&dropped, &self.tensors[base + 2].data, &self.tensors[base + 3].data)[0];
        let o_var = dense_forward(&dropped, &self.tensors[base + 4].data, &self.tensors[base + 5].data)[0];
        ForwardCache {
            activations,
            pooled,
            hidden,
            mask,
            o_mean,
            o_var,
        }
    }

    fn output_of(&self, cache: &ForwardCache<T>) -> EstimatorOutput<T> {
        EstimatorOutput {
            mu_t: self.mean_from_raw(cache.o_mean),
            var_t: softplus(cache.o_var) + T::lit(VAR_FLOOR),
        }
    }

    fn backward(&self, cache: &ForwardCache<T>, d_mu: T, d_var: T) -> Vec<Vec<T>> {
        let n_conv = self.arch.conv.len();
        let base = 2 * n_conv;
        let mut grads: Vec<Vec<T>> = self.tensors.iter().map(|t| vec![T::zero(); t.data.len()]).collect();

        let d_o_mean = d_mu * self.mean_derivative(cache.o_mean);
        let d_o_var = d_var * sigmoid(cache.o_var);
        let dropped: Vec<T> = cache.hidden.iter().zip(&cache.mask).map(|(h, m)| *h * *m).collect();

        let (head_grads, rest) = grads.split_at_mut(base + 2);
        let (mean_w, rest) = rest.split_at_mut(1);
        let (mean_b, rest) = rest.split_at_mut(1);
        let (var_w, var_b) = rest.split_at_mut(1);
        let d_drop_mean = dense_backward(&dropped, &[d_o_mean], &self.tensors[base + 2].data, &mut mean_w[0], &mut mean_b[0]);
        let d_drop_var = dense_backward(&dropped, &[d_o_var], &self.tensors[base + 4].data, &mut var_w[0], &mut var_b[0]);

        let d_hidden: Vec<T> = (0..cache.hidden.len())
            .map(|i| {
                if cache.hidden[i] > T::zero() {
                    (d_drop_mean[i] + d_drop_var[i]) * cache.mask[i]
                } else {
                    T::zero()
                }
            })
            .collect();
        let (conv_grads, fc) = head_grads.split_at_mut(base);
        let (fc_w, fc_b) = fc.split_at_mut(1);
        let d_pooled = dense_backward(&cache.pooled, &d_hidden, &self.tensors[base].data, &mut fc_w[0], &mut fc_b[0]);

        let positions: usize = cache
            .activations
            .iter()
            .map(|a| a[n_conv].height * a[n_conv].width)
            .sum();
        let inv = T::from_usize_lossy(positions).recip();
        for acts in &cache.activations {
            let last = &acts[n_conv];
            let plane = last.height * last.width;
            let mut d_act: Vec<T> = (0..last.data.len()).map(|i| d_pooled[i / plane] * inv).collect();
            for i in (0..n_conv).rev() {
                let (w_grads, b_grads) = conv_grads[2 * i..2 * i + 2].split_at_mut(1);
                let d_in = conv3x3_relu_backward(
                    &acts[i],
                    &acts[i + 1],
                    &d_act,
                    &self.tensors[2 * i].data,
                    self.arch.conv[i].stride,
                    &mut w_grads[0],
                    &mut b_grads[0],
                    i > 0,
                );
                if let Some(d) = d_in {
                    d_act = d;
                }
            }
        }
        grads
    }

    /// Output spatial dims of the final conv layer (for diagnostics).
    pub fn feature_map_dims(&self) -> (usize, usize) {
        self.arch.conv.iter().fold((self.arch.input_height, self.arch.input_width), |(h, w), c| {
            (conv_out_len(h, c.stride), conv_out_len(w, c.stride))
        })
    }
}

impl<T: Scalar> Predictor<T> for ConvRegressor<T> {
    fn modality(&self) -> Modality {
        self.arch.modality
    }

    fn transform(&self) -> LabelTransform {
        self.arch.transform
    }

    fn predict(&self, input: &ModelInput<T>) -> Result<EstimatorOutput<T>> {
        self.check_input(input)?;
        let cache = self.forward(input, None);
        Ok(self.output_of(&cache))
    }
}

impl<T: Scalar> Trainable<T> for ConvRegressor<T> {
    fn parameter_sizes(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.data.len()).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut [T]> {
        self.tensors.iter_mut().map(|t| t.data.as_mut_slice()).collect()
    }

    fn loss_and_grad(
        &self,
        input: &ModelInput<T>,
        target_t: T,
        keep_prob: f64,
        rng: &mut GaRng,
    ) -> Result<(T, Vec<Vec<T>>)> {
        self.check_input(input)?;
        let cache = self.forward(input, Some((keep_prob, rng)));
        let out = self.output_of(&cache);
        let loss = nll_loss(out.mu_t, out.var_t, target_t)?;
        let (d_mu, d_var) = nll_grad(out.mu_t, out.var_t, target_t)?;
        Ok((loss, self.backward(&cache, d_mu, d_var)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch(modality: Modality) -> NetArch {
        let g = TargetGeometry::new(9, 7, 1.0);
        let mut a = match modality {
            Modality::Image => NetArch::image(&g),
            Modality::Video => NetArch::video(&g, 3),
        };
        a.hidden = 5;
        a
    }

    fn input_for(arch: &NetArch, seed: u64) -> ModelInput<f64> {
        let mut rng = rng_from_seed(seed);
        let mut frame = || {
            let px = (0..arch.input_width * arch.input_height)
                .map(|_| rng.random_range(0.0..1.0))
                .collect();
            Frame::new(arch.input_width, arch.input_height, 1.0, px).unwrap()
        };
        match arch.modality {
            Modality::Image => ModelInput::Image(frame()),
            Modality::Video => ModelInput::Clip(Clip {
                start: 0,
                frames: (0..arch.frames).map(|_| frame()).collect(),
            }),
        }
    }

    #[test]
    fn end_to_end_gradient_check() {
        for modality in [Modality::Image, Modality::Video] {
            let arch = tiny_arch(modality);
            let mut net = ConvRegressor::<f64>::new(arch.clone(), 5, 150.0, 0.5).unwrap();
            // larger head weights so every path carries signal
            let n = net.tensors.len();
            for t in &mut net.tensors[n - 4..] {
                for (i, v) in t.data.iter_mut().enumerate() {
                    *v += 0.3 * ((i % 3) as f64 - 1.0) + 0.2;
                }
            }
            let input = input_for(&arch, 9);
            let target = arch.transform.forward(180.0).unwrap();
            let mut rng = rng_from_seed(0);
            let (_, grads) = net.loss_and_grad(&input, target, 1.0, &mut rng).unwrap();
            let loss_at = |net: &ConvRegressor<f64>| {
                let out = net.predict(&input).unwrap();
                nll_loss(out.mu_t, out.var_t, target).unwrap()
            };
            let h = 1e-6;
            for ti in 0..net.tensors.len() {
                for j in (0..net.tensors[ti].data.len()).step_by(7) {
                    let mut plus = net.clone();
                    plus.tensors[ti].data[j] += h;
                    let mut minus = net.clone();
                    minus.tensors[ti].data[j] -= h;
                    let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                    let an = grads[ti][j];
                    assert!(
                        (fd - an).abs() <= 1e-5 * fd.abs().max(an.abs()).max(1e-3),
                        "{modality} {} [{j}]: analytic {an} vs fd {fd}",
                        net.tensors[ti].name
                    );
                }
            }
        }
    }

    #[test]
    fn initial_output_matches_requested_start() {
        let arch = NetArch::image(&TargetGeometry::new(16, 12, 1.0));
        let net = ConvRegressor::<f64>::new(arch.clone(), 1, 150.0, 0.25).unwrap();
        let out = net.predict(&input_for(&arch, 2)).unwrap();
        assert!((arch.transform.inverse(out.mu_t).unwrap() - 150.0).abs() < 5.0);
        assert!((out.var_t - 0.25).abs() < 0.05);
    }

    #[test]
    fn modality_and_shape_checks() {
        let arch = tiny_arch(Modality::Image);
        let net = ConvRegressor::<f64>::new(arch.clone(), 1, 150.0, 1.0).unwrap();
        let video = input_for(&tiny_arch(Modality::Video), 1);
        assert!(matches!(net.predict(&video), Err(Error::ModalityMismatch { .. })));
        let wrong = ModelInput::Image(Frame::filled(4, 4, 1.0, 0.5).unwrap());
        assert!(matches!(net.predict(&wrong), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn inference_is_deterministic() {
        let arch = tiny_arch(Modality::Video);
        let net = ConvRegressor::<f32>::new(arch.clone(), 3, 200.0, 1.0).unwrap();
        let input = match input_for(&arch, 4) {
            ModelInput::Clip(c) => ModelInput::Clip(Clip {
                start: 0,
                frames: c.frames.iter().map(|f| f.cast()).collect(),
            }),
            ModelInput::Image(_) => unreachable!(),
        };
        assert_eq!(net.predict(&input).unwrap(), net.predict(&input).unwrap());
        assert!(net.predict(&input).unwrap().var_t > 0.0);
    }
}
