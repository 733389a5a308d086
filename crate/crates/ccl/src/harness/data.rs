//! Corpus construction: turning data specs into window pools, identically
//! for every cell of one experiment seed.

use crate::error::Result;
use crate::harness::config::{derive_seed, DataSpec, PoolSpec, SyntheticCorpusSpec, TargetSpec};
use crate::series::{
    generate_synthetic, load_csv, rolling_windows, GeneratorConfig, Origin, TimeSeries,
    WindowSample,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Materialize the series of a data spec. The experiment seed perturbs the
/// corpus seed so different runs draw different data.
pub fn build_series(
    spec: &DataSpec,
    role: Origin,
    id_prefix: &str,
    experiment_seed: u64,
) -> Result<Vec<TimeSeries>> {
    match spec {
        DataSpec::Synthetic(corpus) => synthetic_series(corpus, role, id_prefix, experiment_seed),
        DataSpec::Csv { paths, value_column } => {
            let mut out = Vec::with_capacity(paths.len());
            for (i, path) in paths.iter().enumerate() {
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().to_string())
                    .unwrap_or_else(|| format!("csv{i}"));
                let series =
                    load_csv(path, value_column, &format!("{id_prefix}-{stem}"))?.with_origin(role);
                out.push(series);
            }
            Ok(out)
        }
    }
}

fn synthetic_series(
    corpus: &SyntheticCorpusSpec,
    role: Origin,
    id_prefix: &str,
    experiment_seed: u64,
) -> Result<Vec<TimeSeries>> {
    let corpus_seed = derive_seed(experiment_seed, &format!("{id_prefix}:{}", corpus.seed));
    let mut scale_rng = ChaCha8Rng::seed_from_u64(derive_seed(corpus_seed, "scales"));
    let (sig_lo, sig_hi) = corpus.noise_sigma_range;
    let (scale_lo, scale_hi) = corpus.scale_range;
    let mut out = Vec::with_capacity(corpus.n_series);
    for i in 0..corpus.n_series {
        let frac = if corpus.n_series > 1 {
            i as f64 / (corpus.n_series - 1) as f64
        } else {
            0.0
        };
        let sigma = sig_lo + frac * (sig_hi - sig_lo);
        let scale = if scale_hi > scale_lo {
            scale_rng.gen_range(scale_lo..=scale_hi)
        } else {
            scale_lo
        };
        // Scaling every additive term by the calibration factor is the same
        // as scaling the finished series.
        let config = GeneratorConfig {
            n_days: corpus.n_days,
            daily_amplitude: corpus.daily_amplitude * scale,
            weekly_amplitude: corpus.weekly_amplitude * scale,
            base_load: corpus.base_load * scale,
            noise_sigma: sigma * scale,
            regime_shift_prob: corpus.regime_shift_prob,
            seed: derive_seed(corpus_seed, &format!("series{i}")),
        };
        let series = generate_synthetic(&config, &format!("{id_prefix}-{i}"))?.with_origin(role);
        out.push(series);
    }
    Ok(out)
}

/// Cut a pool of windows from a spec, evenly subsampled down to the cap.
pub fn build_pool(
    pool: &PoolSpec,
    role: Origin,
    id_prefix: &str,
    experiment_seed: u64,
    lookback: usize,
    horizon: usize,
) -> Result<Vec<WindowSample>> {
    let series = build_series(&pool.data, role, id_prefix, experiment_seed)?;
    let mut windows = Vec::new();
    for s in &series {
        windows.extend(rolling_windows(s, lookback, horizon, pool.stride)?);
    }
    if let Some(cap) = pool.max_windows {
        if windows.len() > cap {
            windows = (0..cap)
                .map(|i| windows[i * windows.len() / cap].clone())
                .collect();
        }
    }
    Ok(windows)
}

/// Evaluation windows for one target at one horizon (non-overlapping
/// forecasts: stride equals the horizon).
pub fn build_target_windows(
    target: &TargetSpec,
    experiment_seed: u64,
    lookback: usize,
    horizon: usize,
) -> Result<Vec<WindowSample>> {
    let series = build_series(&target.data, Origin::Real, &target.id, experiment_seed)?;
    let mut windows = Vec::new();
    for s in &series {
        windows.extend(rolling_windows(s, lookback, horizon, horizon)?);
    }
    Ok(windows)
}

/// Prefix of a seeded permutation: the subset at a smaller fraction is
/// contained in the subset at any larger fraction for the same seed.
pub fn nested_subset_indices(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let mut subset = order[..k].to_vec();
    subset.sort_unstable();
    subset
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;

    #[test]
    fn pools_are_deterministic_per_seed() {
        let config = ExperimentConfig::default();
        let a = build_pool(&config.real_pool, Origin::Real, "real", 1, 96, 24).unwrap();
        let b = build_pool(&config.real_pool, Origin::Real, "real", 1, 96, 24).unwrap();
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(x, y)| x.x == y.x && x.y == y.y));
        let c = build_pool(&config.real_pool, Origin::Real, "real", 2, 96, 24).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.x != y.x));
    }

    #[test]
    fn pool_cap_and_origin() {
        let config = ExperimentConfig::default();
        let reals = build_pool(&config.real_pool, Origin::Real, "real", 1, 96, 24).unwrap();
        assert_eq!(reals.len(), 200);
        assert!(reals.iter().all(|w| w.origin == Origin::Real));
        let sims =
            build_pool(&config.simulated_pool, Origin::Simulated, "sim", 1, 96, 24).unwrap();
        assert_eq!(sims.len(), 2000);
        assert!(sims.iter().all(|w| w.origin == Origin::Simulated));
    }

    #[test]
    fn nested_subsets_are_nested() {
        for seed in 0..5 {
            let small = nested_subset_indices(100, 0.25, seed);
            let mid = nested_subset_indices(100, 0.5, seed);
            let full = nested_subset_indices(100, 1.0, seed);
            assert_eq!(small.len(), 25);
            assert_eq!(mid.len(), 50);
            assert_eq!(full.len(), 100);
            let mid_set: std::collections::HashSet<_> = mid.iter().collect();
            assert!(small.iter().all(|i| mid_set.contains(i)));
        }
    }

    #[test]
    fn target_windows_do_not_overlap() {
        let config = ExperimentConfig::default();
        let windows = build_target_windows(&config.targets[0], 1, 96, 24).unwrap();
        assert!(!windows.is_empty());
        for pair in windows.windows(2) {
            assert_eq!(pair[1].t0 - pair[0].t0, 24);
        }
    }
}
