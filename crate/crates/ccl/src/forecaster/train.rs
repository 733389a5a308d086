//! Gradient fine-tuning of the reference forecaster.

use crate::diffmath::{adam_step, AdamConfig};
use crate::error::{Error, Result};
use crate::forecaster::Forecaster;
use crate::series::WindowSample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Settings for one fine-tuning run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinetuneOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FinetuneOptions {
    fn default() -> Self {
        FinetuneOptions {
            steps: 1000,
            batch_size: 4,
            lr: 2e-3,
            seed: 0,
        }
    }
}

impl FinetuneOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::invalid("lr", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Run `steps` optimizer steps of MSE training on batches drawn uniformly
/// from `samples`, returning the updated copy. The input model is untouched.
pub fn finetune(
    model: &Forecaster,
    samples: &[WindowSample],
    opts: &FinetuneOptions,
) -> Result<Forecaster> {
    if model.is_frozen() {
        return Err(Error::FrozenModel);
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput {
            what: "fine-tuning samples".into(),
        });
    }
    opts.validate()?;
    let mut out = model.clone();
    let pool: Vec<&WindowSample> = samples.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let adam = AdamConfig::with_lr(opts.lr);
    let mut step_counter = 0u64;
    train_on_pool(
        &mut out,
        &pool,
        opts.steps,
        opts.batch_size,
        &adam,
        &mut rng,
        &mut step_counter,
    )?;
    Ok(out)
}

/// The shared inner training loop. Each step samples `batch_size` indices
/// uniformly (with replacement) from the pool, averages the squared forecast
/// error in normalized space, and takes one Adam step.
///
/// Both plain fine-tuning and the curriculum driver go through this function
/// with a caller-owned RNG, Adam config, and step counter, so a curriculum
/// whose every epoch uses the full pool is bit-identical to plain
/// fine-tuning under the same seed.
pub(crate) fn train_on_pool(
    model: &mut Forecaster,
    pool: &[&WindowSample],
    steps: usize,
    batch_size: usize,
    adam: &AdamConfig,
    rng: &mut ChaCha8Rng,
    step_counter: &mut u64,
) -> Result<Vec<f64>> {
    if pool.is_empty() {
        return Err(Error::EmptyInput {
            what: "training pool".into(),
        });
    }
    adam.validate()?;
    let lookback = model.lookback();
    let net = model.tcn_net_mut()?;
    // Training always happens at the native horizon.
    let horizon = net.config.horizon;
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        net.parameters_mut().iter_mut().for_each(|p| p.zero_grad());
        let mut batch_loss = 0.0;
        for _ in 0..batch_size {
            let sample = pool[rng.gen_range(0..pool.len())];
            if sample.x.len() != lookback || sample.y.len() != horizon {
                return Err(Error::shape(
                    "train_on_pool",
                    format!("window ({lookback}, {horizon})"),
                    format!("({}, {})", sample.x.len(), sample.y.len()),
                ));
            }
            let x_norm = net.normalizer.apply_slice(&sample.x);
            let y_norm = net.normalizer.apply_slice(&sample.y);
            let (pred, cache) = net.forward(&x_norm)?;
            let residual: Vec<f64> = pred.iter().zip(&y_norm).map(|(p, y)| p - y).collect();
            batch_loss +=
                residual.iter().map(|r| r * r).sum::<f64>() / horizon as f64;
            let scale = 2.0 / (horizon as f64 * batch_size as f64);
            let d_out: Vec<f64> = residual.iter().map(|r| r * scale).collect();
            net.backward(&cache, &d_out)?;
        }
        batch_loss /= batch_size as f64;
        if !batch_loss.is_finite() {
            return Err(Error::NonFinite {
                context: "training loss".into(),
            });
        }
        *step_counter += 1;
        adam_step(&mut net.parameters_mut(), adam, *step_counter)?;
        losses.push(batch_loss);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecaster::TcnForecasterConfig;
    use crate::series::Origin;
    use crate::tcn::TcnConfig;

    fn small_model(seed: u64) -> Forecaster {
        Forecaster::tcn(
            TcnForecasterConfig {
                lookback: 32,
                horizon: 8,
                tcn: TcnConfig {
                    input_channels: 1,
                    channels: 4,
                    kernel_size: 3,
                    dilations: vec![1, 2],
                },
            },
            seed,
        )
        .unwrap()
    }

    fn sine_sample(phase: f64) -> WindowSample {
        let series: Vec<f64> = (0..40)
            .map(|t| 5.0 + (t as f64 / 4.0 + phase).sin())
            .collect();
        WindowSample {
            series_id: "train".into(),
            t0: 0,
            x: series[..32].to_vec(),
            y: series[32..].to_vec(),
            origin: Origin::Real,
        }
    }

    #[test]
    fn zero_steps_is_noop() {
        let model = small_model(1);
        let out = finetune(
            &model,
            &[sine_sample(0.0)],
            &FinetuneOptions {
                steps: 0,
                ..FinetuneOptions::default()
            },
        )
        .unwrap();
        for (a, b) in model.parameters().iter().zip(out.parameters()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn overfits_single_sample() {
        let model = small_model(2);
        let sample = sine_sample(0.3);
        let opts = FinetuneOptions {
            steps: 500,
            batch_size: 2,
            lr: 5e-3,
            seed: 7,
        };
        let trained = finetune(&model, std::slice::from_ref(&sample), &opts).unwrap();
        let mse = |m: &Forecaster| {
            let pred = m.predict(&sample.x).unwrap();
            pred.iter()
                .zip(&sample.y)
                .map(|(p, y)| (p - y) * (p - y))
                .sum::<f64>()
                / sample.y.len() as f64
        };
        assert!(
            mse(&trained) < mse(&model),
            "training MSE did not decrease: {} -> {}",
            mse(&model),
            mse(&trained)
        );
    }

    #[test]
    fn same_seed_same_parameters() {
        let model = small_model(3);
        let samples: Vec<WindowSample> = (0..5).map(|i| sine_sample(i as f64)).collect();
        let opts = FinetuneOptions {
            steps: 50,
            batch_size: 3,
            lr: 1e-3,
            seed: 11,
        };
        let a = finetune(&model, &samples, &opts).unwrap();
        let b = finetune(&model, &samples, &opts).unwrap();
        for (pa, pb) in a.parameters().iter().zip(b.parameters()) {
            assert_eq!(pa.value, pb.value);
        }
    }

    #[test]
    fn zero_lr_leaves_parameters_bit_identical() {
        let model = small_model(4);
        let opts = FinetuneOptions {
            steps: 20,
            batch_size: 2,
            lr: 0.0,
            seed: 1,
        };
        let out = finetune(&model, &[sine_sample(0.5)], &opts).unwrap();
        for (a, b) in model.parameters().iter().zip(out.parameters()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn frozen_model_rejected() {
        let model = small_model(5).freeze();
        let err = finetune(&model, &[sine_sample(0.0)], &FinetuneOptions::default()).unwrap_err();
        assert!(matches!(err, Error::FrozenModel));
    }

    #[test]
    fn empty_samples_rejected() {
        let model = small_model(6);
        assert!(finetune(&model, &[], &FinetuneOptions::default()).is_err());
    }
}
