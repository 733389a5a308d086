//! The contrastive encoder: a causal convolution stack over the whole
//! sample (look-back and target concatenated), mean-pooled and projected to
//! a unit-norm embedding.

use crate::diffmath::{
    dense_backward, dense_forward, global_mean_pool_backward, global_mean_pool_forward,
    l2_normalize_backward, l2_normalize_forward, ParamBundle, Parameter, Tensor,
};
use crate::error::{Error, Result};
use crate::series::{Normalizer, WindowSample};
use crate::tcn::{TcnBackbone, TcnCache, TcnConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const ENCODER_FORMAT_VERSION: u32 = 1;

/// Encoder architecture and temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Expected sample length: look-back plus target.
    pub input_len: usize,
    /// Embedding dimension.
    pub embed_dim: usize,
    /// Similarity temperature used by the contrastive loss.
    pub temperature: f64,
    pub tcn: TcnConfig,
}

impl EncoderConfig {
    /// Defaults sized for one `(lookback, horizon)` window shape.
    pub fn for_window(lookback: usize, horizon: usize) -> Self {
        EncoderConfig {
            input_len: lookback + horizon,
            embed_dim: 64,
            temperature: 0.1,
            tcn: TcnConfig {
                input_channels: 1,
                channels: 32,
                kernel_size: 3,
                dilations: vec![1, 2, 4],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 {
            return Err(Error::invalid("input_len", "must be >= 1"));
        }
        if self.embed_dim == 0 {
            return Err(Error::invalid("embed_dim", "must be >= 1"));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::invalid("temperature", "must be finite and > 0"));
        }
        self.tcn.validate()
    }
}

pub(crate) struct EncodeCache {
    tcn: TcnCache,
    pooled: Tensor,
    projected: Tensor,
    features_shape: Vec<usize>,
}

/// The trained encoder. `encode` is deterministic and always returns a
/// unit-norm vector of `embed_dim` entries.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    backbone: TcnBackbone,
    proj_weights: Parameter,
    proj_bias: Parameter,
    pub(crate) normalizer: Normalizer,
}

impl Encoder {
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let backbone = TcnBackbone::init(config.tcn.clone(), &mut rng)?;
        let c = config.tcn.channels;
        let normal = Normal::new(0.0, (1.0 / c as f64).sqrt()).expect("proj init");
        let w: Vec<f64> = (0..config.embed_dim * c)
            .map(|_| normal.sample(&mut rng))
            .collect();
        Ok(Encoder {
            proj_weights: Parameter::new("projection.weights", Tensor::new(vec![config.embed_dim, c], w)?),
            proj_bias: Parameter::new("projection.bias", Tensor::zeros(vec![config.embed_dim])),
            backbone,
            normalizer: Normalizer::identity(),
            config,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn temperature(&self) -> f64 {
        self.config.temperature
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) {
        self.normalizer = normalizer;
    }

    /// Embed a sample (x followed by y) as a unit-norm vector.
    pub fn encode(&self, sample: &WindowSample) -> Result<Vec<f64>> {
        self.encode_cached(sample).map(|(e, _)| e)
    }

    pub(crate) fn encode_cached(&self, sample: &WindowSample) -> Result<(Vec<f64>, EncodeCache)> {
        let total = sample.x.len() + sample.y.len();
        if total != self.config.input_len {
            return Err(Error::shape(
                "encode",
                format!("sample length {}", self.config.input_len),
                format!("{total}"),
            ));
        }
        let mut values = Vec::with_capacity(total);
        values.extend(self.normalizer.apply_slice(&sample.x));
        values.extend(self.normalizer.apply_slice(&sample.y));
        let input = Tensor::new(vec![1, total], values)?;
        let (features, tcn_cache) = self.backbone.forward(&input)?;
        let pooled = global_mean_pool_forward(&features)?;
        let projected = dense_forward(&pooled, &self.proj_weights.value, &self.proj_bias.value)?;
        let embedding = l2_normalize_forward(&projected)?;
        embedding.check_finite("encoder embedding")?;
        Ok((
            embedding.into_data(),
            EncodeCache {
                tcn: tcn_cache,
                pooled,
                features_shape: features.shape().to_vec(),
                projected,
            },
        ))
    }

    /// Accumulate parameter gradients given the loss gradient w.r.t. the
    /// embedding produced by `encode_cached`.
    pub(crate) fn backward_from_embedding(
        &mut self,
        cache: &EncodeCache,
        d_embedding: &[f64],
    ) -> Result<()> {
        let d_projected =
            l2_normalize_backward(&cache.projected, &Tensor::from_vec(d_embedding.to_vec()))?;
        let (d_pooled, d_w, d_b) =
            dense_backward(&cache.pooled, &self.proj_weights.value, &d_projected)?;
        self.proj_weights.accumulate_grad(&d_w, 1.0)?;
        self.proj_bias.accumulate_grad(&d_b, 1.0)?;
        let d_features = global_mean_pool_backward(&cache.features_shape, &d_pooled)?;
        self.backbone.backward(&cache.tcn, &d_features)?;
        Ok(())
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut params = self.backbone.parameters();
        params.push(&self.proj_weights);
        params.push(&self.proj_bias);
        params
    }

    pub(crate) fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut params = self.backbone.parameters_mut();
        params.push(&mut self.proj_weights);
        params.push(&mut self.proj_bias);
        params
    }

    pub fn to_checkpoint(&self) -> EncoderCheckpoint {
        EncoderCheckpoint {
            format_version: ENCODER_FORMAT_VERSION,
            config: self.config.clone(),
            normalizer: self.normalizer,
            params: ParamBundle::from_parameters(self.parameters()),
        }
    }

    pub fn from_checkpoint(checkpoint: &EncoderCheckpoint) -> Result<Encoder> {
        if checkpoint.format_version != ENCODER_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported encoder format version {}",
                checkpoint.format_version
            )));
        }
        let mut encoder = Encoder::init(checkpoint.config.clone(), 0)?;
        checkpoint.params.load_into(encoder.parameters_mut())?;
        encoder.normalizer = checkpoint.normalizer;
        Ok(encoder)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Encoder> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile {
                path: path.to_path_buf(),
            });
        }
        let checkpoint: EncoderCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Encoder::from_checkpoint(&checkpoint)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderCheckpoint {
    pub format_version: u32,
    pub config: EncoderConfig,
    pub normalizer: Normalizer,
    pub params: ParamBundle,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::cosine_similarity;
    use crate::series::Origin;
    use rand::Rng;

    fn small_config() -> EncoderConfig {
        EncoderConfig {
            input_len: 20,
            embed_dim: 8,
            temperature: 0.1,
            tcn: TcnConfig {
                input_channels: 1,
                channels: 4,
                kernel_size: 3,
                dilations: vec![1, 2],
            },
        }
    }

    fn sample(seed: u64) -> WindowSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        WindowSample {
            series_id: format!("s{seed}"),
            t0: 0,
            x: (0..14).map(|_| rng.gen_range(0.0..10.0)).collect(),
            y: (0..6).map(|_| rng.gen_range(0.0..10.0)).collect(),
            origin: Origin::Real,
        }
    }

    #[test]
    fn embeddings_are_unit_norm() {
        let encoder = Encoder::init(small_config(), 3).unwrap();
        for seed in 0..10 {
            let e = encoder.encode(&sample(seed)).unwrap();
            let norm: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
            assert_eq!(e.len(), 8);
        }
    }

    #[test]
    fn identical_samples_identical_embeddings() {
        let encoder = Encoder::init(small_config(), 3).unwrap();
        let s = sample(7);
        let a = encoder.encode(&s).unwrap();
        let b = encoder.encode(&s).unwrap();
        assert_eq!(a, b);
        assert!((cosine_similarity(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distinct_random_samples_not_degenerate() {
        let encoder = Encoder::init(small_config(), 3).unwrap();
        let a = encoder.encode(&sample(1)).unwrap();
        let b = encoder.encode(&sample(2)).unwrap();
        assert!(cosine_similarity(&a, &b).unwrap() < 1.0);
    }

    #[test]
    fn length_mismatch_rejected() {
        let encoder = Encoder::init(small_config(), 3).unwrap();
        let mut s = sample(1);
        s.y.pop();
        assert!(encoder.encode(&s).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut encoder = Encoder::init(small_config(), 5).unwrap();
        encoder.set_normalizer(Normalizer { mean: 5.0, std: 2.5 });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("encoder.json");
        encoder.save(&path).unwrap();
        let loaded = Encoder::load(&path).unwrap();
        let s = sample(4);
        assert_eq!(encoder.encode(&s).unwrap(), loaded.encode(&s).unwrap());
    }

    #[test]
    fn encoder_gradients_pass_finite_difference() {
        // Scalar loss = dot(fixed upstream, embedding); checks the projection
        // weights through normalization.
        let encoder = Encoder::init(small_config(), 11).unwrap();
        let s = sample(9);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let upstream: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut trained = encoder.clone();
        let (_, cache) = trained.encode_cached(&s).unwrap();
        trained.parameters_mut().iter_mut().for_each(|p| p.zero_grad());
        trained.backward_from_embedding(&cache, &upstream).unwrap();

        for target in ["projection.weights", "block0.kernel"] {
            let analytic = trained
                .parameters()
                .iter()
                .find(|p| p.name == target)
                .unwrap()
                .grad
                .data()
                .to_vec();
            let point = encoder
                .parameters()
                .iter()
                .find(|p| p.name == target)
                .unwrap()
                .value
                .data()
                .to_vec();
            let report = crate::diffmath::grad_check(
                |vals| {
                    let mut probe = encoder.clone();
                    for p in probe.parameters_mut() {
                        if p.name == target {
                            let shape = p.value.shape().to_vec();
                            p.value = Tensor::new(shape, vals.to_vec()).unwrap();
                        }
                    }
                    let e = probe.encode(&s)?;
                    Ok(e.iter().zip(&upstream).map(|(a, b)| a * b).sum())
                },
                &point,
                &analytic,
                1e-5,
                1e-4,
            )
            .unwrap();
            assert!(report.pass, "{target}: max rel err {}", report.max_rel_err);
        }
    }
}
