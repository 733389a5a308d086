//! Stack of residual dilated causal convolution blocks, shared by the
//! reference forecaster and the contrastive encoder.

use crate::diffmath::{
    causal_conv1d_backward, causal_conv1d_forward, relu_backward, relu_forward, Parameter, Tensor,
};
use crate::error::{Error, Result};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Architecture of a [`TcnBackbone`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnConfig {
    pub input_channels: usize,
    pub channels: usize,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
}

impl TcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.channels == 0 {
            return Err(Error::invalid("channels", "must be >= 1"));
        }
        if self.kernel_size == 0 {
            return Err(Error::invalid("kernel_size", "must be >= 1"));
        }
        if self.dilations.is_empty() || self.dilations.iter().any(|d| *d == 0) {
            return Err(Error::invalid("dilations", "must be nonempty with entries >= 1"));
        }
        Ok(())
    }

    /// Number of past positions the last output position can see.
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel_size - 1) * self.dilations.iter().sum::<usize>()
    }
}

/// One residual block: `out = relu(conv(x) + bias) + project(x)`.
///
/// The projection is the identity when channel counts match, otherwise a
/// trainable 1x1 convolution.
#[derive(Debug, Clone)]
struct ConvBlock {
    kernel: Parameter,
    bias: Parameter,
    projection: Option<Parameter>,
    dilation: usize,
}

impl ConvBlock {
    fn init(
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        dilation: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let kernel = Parameter::new(
            format!("{name}.kernel"),
            he_normal(vec![c_out, c_in, k], c_in * k, rng),
        );
        let bias = Parameter::new(format!("{name}.bias"), Tensor::zeros(vec![c_out]));
        let projection = (c_in != c_out).then(|| {
            Parameter::new(
                format!("{name}.projection"),
                he_normal(vec![c_out, c_in, 1], c_in, rng),
            )
        });
        ConvBlock {
            kernel,
            bias,
            projection,
            dilation,
        }
    }
}

fn he_normal(shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("he init");
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| normal.sample(rng)).collect();
    Tensor::new(shape, data).expect("init shape")
}

/// Intermediate activations saved by a forward pass for the backward pass.
#[derive(Debug)]
pub struct TcnCache {
    block_inputs: Vec<Tensor>,
    block_preacts: Vec<Tensor>,
}

/// The convolutional feature extractor. Input is `[input_channels, L]`,
/// output `[channels, L]`, causal throughout.
#[derive(Debug, Clone)]
pub struct TcnBackbone {
    config: TcnConfig,
    blocks: Vec<ConvBlock>,
}

impl TcnBackbone {
    pub fn init(config: TcnConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(config.dilations.len());
        for (i, &dilation) in config.dilations.iter().enumerate() {
            let c_in = if i == 0 { config.input_channels } else { config.channels };
            blocks.push(ConvBlock::init(
                &format!("block{i}"),
                c_in,
                config.channels,
                config.kernel_size,
                dilation,
                rng,
            ));
        }
        Ok(TcnBackbone { config, blocks })
    }

    pub fn config(&self) -> &TcnConfig {
        &self.config
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, TcnCache)> {
        let mut cache = TcnCache {
            block_inputs: Vec::with_capacity(self.blocks.len()),
            block_preacts: Vec::with_capacity(self.blocks.len()),
        };
        let mut current = input.clone();
        for block in &self.blocks {
            let mut pre = causal_conv1d_forward(&current, &block.kernel.value, block.dilation)?;
            add_channel_bias(&mut pre, block.bias.value.data());
            let activated = relu_forward(&pre);
            let out = match &block.projection {
                Some(proj) => {
                    let projected =
                        causal_conv1d_forward(&current, &proj.value, 1)?;
                    add_tensors(&activated, &projected)?
                }
                None => add_tensors(&activated, &current)?,
            };
            cache.block_inputs.push(current);
            cache.block_preacts.push(pre);
            current = out;
        }
        Ok((current, cache))
    }

    /// Accumulate parameter gradients and return the gradient w.r.t. the input.
    pub fn backward(&mut self, cache: &TcnCache, upstream: &Tensor) -> Result<Tensor> {
        let mut grad = upstream.clone();
        for (block, (input, pre)) in self
            .blocks
            .iter_mut()
            .zip(cache.block_inputs.iter().zip(&cache.block_preacts))
            .rev()
        {
            // Residual path.
            let mut d_input = match &mut block.projection {
                Some(proj) => {
                    let (d_in, d_proj) =
                        causal_conv1d_backward(input, &proj.value, 1, &grad)?;
                    proj.accumulate_grad(&d_proj, 1.0)?;
                    d_in
                }
                None => grad.clone(),
            };
            // Conv path.
            let d_pre = relu_backward(pre, &grad)?;
            accumulate_channel_bias_grad(&mut block.bias, &d_pre)?;
            let (d_in_conv, d_kernel) =
                causal_conv1d_backward(input, &block.kernel.value, block.dilation, &d_pre)?;
            block.kernel.accumulate_grad(&d_kernel, 1.0)?;
            for (a, b) in d_input.data_mut().iter_mut().zip(d_in_conv.data()) {
                *a += b;
            }
            grad = d_input;
        }
        Ok(grad)
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        self.blocks
            .iter()
            .flat_map(|b| {
                [Some(&b.kernel), Some(&b.bias), b.projection.as_ref()]
                    .into_iter()
                    .flatten()
            })
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.blocks
            .iter_mut()
            .flat_map(|b| {
                [Some(&mut b.kernel), Some(&mut b.bias), b.projection.as_mut()]
                    .into_iter()
                    .flatten()
            })
            .collect()
    }
}

fn add_channel_bias(t: &mut Tensor, bias: &[f64]) {
    let len = t.shape()[1];
    for (c, b) in bias.iter().enumerate() {
        t.data_mut()[c * len..(c + 1) * len]
            .iter_mut()
            .for_each(|v| *v += b);
    }
}

fn accumulate_channel_bias_grad(bias: &mut Parameter, upstream: &Tensor) -> Result<()> {
    let len = upstream.shape()[1];
    let mut grad = vec![0.0; upstream.shape()[0]];
    for (c, g) in grad.iter_mut().enumerate() {
        *g = upstream.data()[c * len..(c + 1) * len].iter().sum();
    }
    bias.accumulate_grad(&Tensor::from_vec(grad), 1.0)
}

fn add_tensors(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if !a.same_shape(b) {
        return Err(Error::shape(
            "residual add",
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::new(a.shape().to_vec(), data)?)
}
