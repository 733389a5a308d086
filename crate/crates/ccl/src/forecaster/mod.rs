//! The forecaster abstraction: a trainable reference model built on the TCN
//! backbone, a seasonal-naive fallback, fine-tuning, and the evaluation
//! protocols.

mod eval;
mod metrics;
mod train;

pub use eval::{
    evaluate, evaluate_few_shot, evaluate_zero_shot, EvalReport, FewShotOptions, Protocol,
    SampleScore, ASHRAE_CV_RMSE_THRESHOLD,
};
pub use metrics::cv_rmse;
pub use train::{finetune, FinetuneOptions};
pub(crate) use train::train_on_pool;

use crate::diffmath::{
    dense_backward, dense_forward, ParamBundle, Parameter, Tensor,
};
use crate::error::{Error, Result};
use crate::series::Normalizer;
use crate::tcn::{TcnBackbone, TcnCache, TcnConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FORECASTER_FORMAT_VERSION: u32 = 1;

/// Architecture of the reference forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnForecasterConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub tcn: TcnConfig,
}

impl Default for TcnForecasterConfig {
    fn default() -> Self {
        TcnForecasterConfig {
            lookback: 96,
            horizon: 24,
            tcn: TcnConfig {
                input_channels: 1,
                channels: 32,
                kernel_size: 3,
                dilations: vec![1, 4, 8],
            },
        }
    }
}

impl TcnForecasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 || self.horizon == 0 {
            return Err(Error::invalid("lookback/horizon", "must be >= 1"));
        }
        self.tcn.validate()
    }
}

/// The reference network: TCN features, pooled as
/// `[window mean of each channel, features at the last position]`, then a
/// linear head. The last-position half carries the phase of the series; a
/// pure window mean over whole seasonal periods is phase-invariant and
/// cannot anchor the forecast.
#[derive(Debug, Clone)]
pub(crate) struct TcnForecasterNet {
    config: TcnForecasterConfig,
    backbone: TcnBackbone,
    head_weights: Parameter,
    head_bias: Parameter,
    pub(crate) normalizer: Normalizer,
}

pub(crate) struct NetCache {
    tcn: TcnCache,
    pooled: Tensor,
    len: usize,
}

impl TcnForecasterNet {
    fn init(config: TcnForecasterConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let backbone = TcnBackbone::init(config.tcn.clone(), &mut rng)?;
        let feat = 2 * config.tcn.channels;
        // Zero-initialized head: an untrained model predicts its bias.
        let head_weights = Parameter::new("head.weights", Tensor::zeros(vec![config.horizon, feat]));
        let head_bias = Parameter::new("head.bias", Tensor::zeros(vec![config.horizon]));
        Ok(TcnForecasterNet {
            config,
            backbone,
            head_weights,
            head_bias,
            normalizer: Normalizer::identity(),
        })
    }

    /// Forward in normalized space. Input length must equal the lookback.
    pub(crate) fn forward(&self, x_norm: &[f64]) -> Result<(Vec<f64>, NetCache)> {
        let len = self.config.lookback;
        if x_norm.len() != len {
            return Err(Error::shape(
                "forecaster forward",
                format!("input length {}", len),
                format!("{}", x_norm.len()),
            ));
        }
        let input = Tensor::new(vec![1, len], x_norm.to_vec())?;
        let (features, tcn_cache) = self.backbone.forward(&input)?;
        let c = self.config.tcn.channels;
        let mut pooled = vec![0.0; 2 * c];
        for ch in 0..c {
            let row = &features.data()[ch * len..(ch + 1) * len];
            pooled[ch] = row.iter().sum::<f64>() / len as f64;
            pooled[c + ch] = row[len - 1];
        }
        let pooled = Tensor::from_vec(pooled);
        let out = dense_forward(&pooled, &self.head_weights.value, &self.head_bias.value)?;
        Ok((
            out.into_data(),
            NetCache {
                tcn: tcn_cache,
                pooled,
                len,
            },
        ))
    }

    /// Accumulate parameter gradients for one sample.
    pub(crate) fn backward(&mut self, cache: &NetCache, d_out: &[f64]) -> Result<()> {
        let upstream = Tensor::from_vec(d_out.to_vec());
        let (d_pooled, d_w, d_b) =
            dense_backward(&cache.pooled, &self.head_weights.value, &upstream)?;
        self.head_weights.accumulate_grad(&d_w, 1.0)?;
        self.head_bias.accumulate_grad(&d_b, 1.0)?;

        let c = self.config.tcn.channels;
        let len = cache.len;
        let mut d_features = Tensor::zeros(vec![c, len]);
        for ch in 0..c {
            let mean_part = d_pooled.data()[ch] / len as f64;
            let row = &mut d_features.data_mut()[ch * len..(ch + 1) * len];
            row.iter_mut().for_each(|v| *v += mean_part);
            row[len - 1] += d_pooled.data()[c + ch];
        }
        self.backbone.backward(&cache.tcn, &d_features)?;
        Ok(())
    }

    pub(crate) fn parameters(&self) -> Vec<&Parameter> {
        let mut params = self.backbone.parameters();
        params.push(&self.head_weights);
        params.push(&self.head_bias);
        params
    }

    pub(crate) fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut params = self.backbone.parameters_mut();
        params.push(&mut self.head_weights);
        params.push(&mut self.head_bias);
        params
    }
}

#[derive(Debug, Clone)]
enum ForecasterKind {
    Tcn(TcnForecasterNet),
    SeasonalNaive { period: usize },
}

/// A forecaster with a fixed input length and an effective output horizon.
///
/// A frozen forecaster refuses fine-tuning; difficulty measurement requires
/// a frozen snapshot so scores stay tied to one set of weights.
#[derive(Debug, Clone)]
pub struct Forecaster {
    kind: ForecasterKind,
    lookback: usize,
    horizon: usize,
    frozen: bool,
}

impl Forecaster {
    /// Trainable reference model with randomly initialized features and a
    /// zero head.
    pub fn tcn(config: TcnForecasterConfig, seed: u64) -> Result<Self> {
        let net = TcnForecasterNet::init(config, seed)?;
        Ok(Forecaster {
            lookback: net.config.lookback,
            horizon: net.config.horizon,
            kind: ForecasterKind::Tcn(net),
            frozen: false,
        })
    }

    /// Zero-parameter fallback: repeats the last observed period.
    pub fn seasonal_naive(lookback: usize, horizon: usize, period: usize) -> Result<Self> {
        if period == 0 || lookback < period {
            return Err(Error::invalid(
                "period",
                "must be >= 1 and <= lookback",
            ));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon", "must be >= 1"));
        }
        Ok(Forecaster {
            kind: ForecasterKind::SeasonalNaive { period },
            lookback,
            horizon,
            frozen: false,
        })
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Mark this model as a fixed snapshot.
    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    /// A trainable copy; the original snapshot is untouched.
    pub fn thaw_copy(&self) -> Self {
        let mut copy = self.clone();
        copy.frozen = false;
        copy
    }

    /// Attach normalization statistics (fit on the training corpus).
    pub fn set_normalizer(&mut self, normalizer: Normalizer) {
        if let ForecasterKind::Tcn(net) = &mut self.kind {
            net.normalizer = normalizer;
        }
    }

    pub fn normalizer(&self) -> Normalizer {
        match &self.kind {
            ForecasterKind::Tcn(net) => net.normalizer,
            ForecasterKind::SeasonalNaive { .. } => Normalizer::identity(),
        }
    }

    /// Predict the next `horizon()` values from exactly `lookback()` inputs.
    ///
    /// Horizons beyond the native output length are produced autoregressively,
    /// so the first native block of an extended forecast equals the native
    /// prediction and a shortened horizon is a prefix of it.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.lookback {
            return Err(Error::shape(
                "predict",
                format!("input length {}", self.lookback),
                format!("{}", x.len()),
            ));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "predict input".into(),
            });
        }
        let out = match &self.kind {
            ForecasterKind::SeasonalNaive { period } => (0..self.horizon)
                .map(|i| x[self.lookback - period + (i % period)])
                .collect::<Vec<f64>>(),
            ForecasterKind::Tcn(net) => {
                let mut hist = net.normalizer.apply_slice(x);
                let mut preds: Vec<f64> = Vec::with_capacity(self.horizon);
                while preds.len() < self.horizon {
                    let window = hist[hist.len() - self.lookback..].to_vec();
                    let (block, _) = net.forward(&window)?;
                    preds.extend_from_slice(&block);
                    hist.extend_from_slice(&block);
                }
                preds.truncate(self.horizon);
                net.normalizer.invert_slice(&preds)
            }
        };
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "predict output".into(),
            });
        }
        Ok(out)
    }

    /// Output length the underlying network trains at, regardless of the
    /// effective horizon.
    pub fn trainable_horizon(&self) -> usize {
        match &self.kind {
            ForecasterKind::Tcn(net) => net.config.horizon,
            ForecasterKind::SeasonalNaive { .. } => self.horizon,
        }
    }

    /// Same model with a different effective horizon.
    pub fn resize_horizon(&self, new_horizon: usize) -> Result<Forecaster> {
        if new_horizon == 0 {
            return Err(Error::invalid("new_horizon", "must be >= 1"));
        }
        let mut out = self.clone();
        out.horizon = new_horizon;
        Ok(out)
    }

    pub(crate) fn tcn_net_mut(&mut self) -> Result<&mut TcnForecasterNet> {
        match &mut self.kind {
            ForecasterKind::Tcn(net) => Ok(net),
            ForecasterKind::SeasonalNaive { .. } => Err(Error::invalid(
                "model",
                "seasonal-naive model has no trainable parameters",
            )),
        }
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        match &self.kind {
            ForecasterKind::Tcn(net) => net.parameters(),
            ForecasterKind::SeasonalNaive { .. } => Vec::new(),
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        match &mut self.kind {
            ForecasterKind::Tcn(net) => net.parameters_mut(),
            ForecasterKind::SeasonalNaive { .. } => Vec::new(),
        }
    }

    pub fn to_checkpoint(&self) -> ForecasterCheckpoint {
        match &self.kind {
            ForecasterKind::Tcn(net) => ForecasterCheckpoint {
                format_version: FORECASTER_FORMAT_VERSION,
                kind: "tcn".into(),
                lookback: self.lookback,
                horizon: self.horizon,
                frozen: self.frozen,
                tcn: Some(TcnCheckpointBody {
                    config: net.config.clone(),
                    normalizer: net.normalizer,
                    params: ParamBundle::from_parameters(net.parameters()),
                }),
                seasonal_period: None,
            },
            ForecasterKind::SeasonalNaive { period } => ForecasterCheckpoint {
                format_version: FORECASTER_FORMAT_VERSION,
                kind: "seasonal_naive".into(),
                lookback: self.lookback,
                horizon: self.horizon,
                frozen: self.frozen,
                tcn: None,
                seasonal_period: Some(*period),
            },
        }
    }

    pub fn from_checkpoint(checkpoint: &ForecasterCheckpoint) -> Result<Forecaster> {
        if checkpoint.format_version != FORECASTER_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported forecaster format version {}",
                checkpoint.format_version
            )));
        }
        let mut model = match checkpoint.kind.as_str() {
            "tcn" => {
                let body = checkpoint
                    .tcn
                    .as_ref()
                    .ok_or_else(|| Error::Checkpoint("missing tcn body".into()))?;
                let mut net = TcnForecasterNet::init(body.config.clone(), 0)?;
                body.params.load_into(net.parameters_mut())?;
                net.normalizer = body.normalizer;
                Forecaster {
                    lookback: net.config.lookback,
                    horizon: net.config.horizon,
                    kind: ForecasterKind::Tcn(net),
                    frozen: false,
                }
            }
            "seasonal_naive" => {
                let period = checkpoint
                    .seasonal_period
                    .ok_or_else(|| Error::Checkpoint("missing seasonal period".into()))?;
                Forecaster::seasonal_naive(checkpoint.lookback, checkpoint.horizon, period)?
            }
            other => {
                return Err(Error::Checkpoint(format!("unknown forecaster kind {other:?}")));
            }
        };
        model.lookback = checkpoint.lookback;
        model.horizon = checkpoint.horizon;
        model.frozen = checkpoint.frozen;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Forecaster> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile {
                path: path.to_path_buf(),
            });
        }
        let json = std::fs::read_to_string(path)?;
        let checkpoint: ForecasterCheckpoint = serde_json::from_str(&json)?;
        Forecaster::from_checkpoint(&checkpoint)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TcnCheckpointBody {
    pub config: TcnForecasterConfig,
    pub normalizer: Normalizer,
    pub params: ParamBundle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecasterCheckpoint {
    pub format_version: u32,
    pub kind: String,
    pub lookback: usize,
    pub horizon: usize,
    pub frozen: bool,
    pub tcn: Option<TcnCheckpointBody>,
    pub seasonal_period: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> TcnForecasterConfig {
        TcnForecasterConfig {
            lookback: 48,
            horizon: 12,
            tcn: TcnConfig {
                input_channels: 1,
                channels: 4,
                kernel_size: 3,
                dilations: vec![1, 2],
            },
        }
    }

    #[test]
    fn zero_head_predicts_bias() {
        let mut model = Forecaster::tcn(small_config(), 5).unwrap();
        let bias: Vec<f64> = (0..12).map(|i| 0.5 + i as f64).collect();
        for p in model.parameters_mut() {
            if p.name == "head.bias" {
                p.value = Tensor::from_vec(bias.clone());
            }
        }
        let x = vec![1.0; 48];
        let pred = model.predict(&x).unwrap();
        assert_eq!(pred, bias);
    }

    #[test]
    fn predict_is_deterministic() {
        let model = Forecaster::tcn(small_config(), 5).unwrap();
        let x: Vec<f64> = (0..48).map(|t| (t as f64 / 7.0).sin()).collect();
        assert_eq!(model.predict(&x).unwrap(), model.predict(&x).unwrap());
    }

    #[test]
    fn predict_validates_input() {
        let model = Forecaster::tcn(small_config(), 5).unwrap();
        assert!(model.predict(&vec![1.0; 47]).is_err());
        let mut x = vec![1.0; 48];
        x[3] = f64::NAN;
        assert!(model.predict(&x).is_err());
    }

    #[test]
    fn seasonal_naive_repeats_last_period() {
        // Two known days; forecast must replay the second day.
        let day1: Vec<f64> = (0..24).map(|t| 10.0 + t as f64).collect();
        let day2: Vec<f64> = (0..24).map(|t| 50.0 + 2.0 * t as f64).collect();
        let x: Vec<f64> = day1.iter().chain(day2.iter()).copied().collect();
        let model = Forecaster::seasonal_naive(48, 24, 24).unwrap();
        let pred = model.predict(&x).unwrap();
        assert_eq!(pred, day2);
        // Extended horizon repeats the same day again.
        let extended = model.resize_horizon(30).unwrap().predict(&x).unwrap();
        assert_eq!(&extended[..24], day2.as_slice());
        assert_eq!(&extended[24..], &day2[..6]);
    }

    #[test]
    fn resize_horizon_truncates_and_extends() {
        let model = Forecaster::tcn(small_config(), 9).unwrap();
        let x: Vec<f64> = (0..48).map(|t| (t as f64 / 5.0).cos()).collect();
        let native = model.predict(&x).unwrap();

        let same = model.resize_horizon(12).unwrap().predict(&x).unwrap();
        assert_eq!(same, native);

        let half = model.resize_horizon(6).unwrap().predict(&x).unwrap();
        assert_eq!(half.as_slice(), &native[..6]);

        let double = model.resize_horizon(24).unwrap().predict(&x).unwrap();
        assert_eq!(&double[..12], native.as_slice());
        assert_eq!(double.len(), 24);
    }

    #[test]
    fn checkpoint_round_trip_exact() {
        let mut model = Forecaster::tcn(small_config(), 13).unwrap();
        model.set_normalizer(Normalizer {
            mean: 3.25,
            std: 1.75,
        });
        let model = model.freeze();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = Forecaster::load(&path).unwrap();
        assert!(loaded.is_frozen());
        assert_eq!(loaded.normalizer(), model.normalizer());
        for (a, b) in model.parameters().iter().zip(loaded.parameters()) {
            assert_eq!(a.value, b.value, "parameter {}", a.name);
        }
        let x: Vec<f64> = (0..48).map(|t| 2.0 + (t as f64 / 3.0).sin()).collect();
        assert_eq!(model.predict(&x).unwrap(), loaded.predict(&x).unwrap());
    }
}
