//! Time-series data model: CSV ingestion, rolling windows, z-score
//! normalization, and a seeded synthetic building-load generator.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Whether a sample comes from the measured or the simulated corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Real,
    Simulated,
}

impl std::fmt::Display for Origin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Origin::Real => write!(f, "real"),
            Origin::Simulated => write!(f, "simulated"),
        }
    }
}

/// A univariate series with metadata tags.
///
/// Values are guaranteed nonempty and finite after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSeries {
    pub id: String,
    values: Vec<f64>,
    /// Sampling period in minutes; metadata only.
    pub interval_minutes: u32,
    pub tags: BTreeMap<String, String>,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput {
                what: "time series values".into(),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "time series values".into(),
            });
        }
        Ok(TimeSeries {
            id: id.into(),
            values,
            interval_minutes: 60,
            tags: BTreeMap::new(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Tag the series origin; windows cut from it inherit the tag.
    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.tags.insert("origin".into(), origin.to_string());
        self
    }

    pub fn origin(&self) -> Origin {
        match self.tags.get("origin").map(String::as_str) {
            Some("simulated") => Origin::Simulated,
            _ => Origin::Real,
        }
    }
}

/// One rolling-window sample: a look-back `x` of length `L` followed by the
/// contiguous future `y` of length `T`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowSample {
    pub series_id: String,
    /// Start index of `x` in the source series.
    pub t0: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub origin: Origin,
}

impl WindowSample {
    /// Stable identifier used in difficulty tables and eval reports.
    pub fn sample_id(&self) -> String {
        format!("{}:{}", self.series_id, self.t0)
    }
}

/// How ingestion treats missing or unparseable values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MissingPolicy {
    /// Linear interpolation for interior gaps; leading/trailing gaps dropped.
    #[default]
    Interpolate,
    /// Drop rows with missing values outright.
    Drop,
}

/// Load a univariate series from a CSV file with a header row.
///
/// The timestamp column (if any) is ignored except for row order. Missing
/// values are handled by [`MissingPolicy::Interpolate`].
pub fn load_csv(path: impl AsRef<Path>, value_column: &str, id: &str) -> Result<TimeSeries> {
    load_csv_with_policy(path, value_column, id, MissingPolicy::Interpolate)
}

pub fn load_csv_with_policy(
    path: impl AsRef<Path>,
    value_column: &str,
    id: &str,
    policy: MissingPolicy,
) -> Result<TimeSeries> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == value_column)
        .ok_or_else(|| Error::MissingColumn {
            column: value_column.to_string(),
            path: path.to_path_buf(),
        })?;

    let mut raw: Vec<Option<f64>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let cell = record.get(col).map(str::trim).unwrap_or("");
        let parsed = cell.parse::<f64>().ok().filter(|v| v.is_finite());
        raw.push(parsed);
    }
    let values = match policy {
        MissingPolicy::Interpolate => interpolate_gaps(&raw),
        MissingPolicy::Drop => raw.into_iter().flatten().collect(),
    };
    if values.is_empty() {
        return Err(Error::NoParseableRows {
            path: path.to_path_buf(),
        });
    }
    TimeSeries::new(id, values)
}

/// Write a series to CSV with `timestamp,value` columns so that
/// `load_csv(write_csv(s))` round-trips the values exactly.
pub fn write_csv(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["timestamp", "value"])?;
    for (t, v) in series.values().iter().enumerate() {
        writer.write_record([t.to_string(), format!("{v}")])?;
    }
    writer.flush()?;
    Ok(())
}

fn interpolate_gaps(raw: &[Option<f64>]) -> Vec<f64> {
    let first = match raw.iter().position(Option::is_some) {
        Some(i) => i,
        None => return Vec::new(),
    };
    let last = raw.iter().rposition(Option::is_some).unwrap();
    let trimmed = &raw[first..=last];
    let mut out = Vec::with_capacity(trimmed.len());
    let mut i = 0;
    while i < trimmed.len() {
        match trimmed[i] {
            Some(v) => {
                out.push(v);
                i += 1;
            }
            None => {
                // Interior gap: the nearest known values bracket it.
                let prev = out[out.len() - 1];
                let mut j = i;
                while trimmed[j].is_none() {
                    j += 1;
                }
                let next = trimmed[j].unwrap();
                let gap = (j - i + 1) as f64;
                for step in 0..(j - i) {
                    let frac = (step + 1) as f64 / gap;
                    out.push(prev + frac * (next - prev));
                }
                i = j;
            }
        }
    }
    out
}

/// Cut rolling windows of shape `(L, T)` at the given stride.
///
/// Windows start at 0, stride, 2*stride, ... while `start + L + T <= N`.
/// A series shorter than `L + T` yields an empty vector.
pub fn rolling_windows(
    series: &TimeSeries,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<WindowSample>> {
    if lookback < 1 {
        return Err(Error::invalid("lookback", "must be >= 1"));
    }
    if horizon < 1 {
        return Err(Error::invalid("horizon", "must be >= 1"));
    }
    if stride < 1 {
        return Err(Error::invalid("stride", "must be >= 1"));
    }
    let n = series.len();
    let window = lookback + horizon;
    let mut out = Vec::new();
    if n < window {
        return Ok(out);
    }
    let origin = series.origin();
    let mut start = 0usize;
    while start + window <= n {
        out.push(WindowSample {
            series_id: series.id.clone(),
            t0: start,
            x: series.values()[start..start + lookback].to_vec(),
            y: series.values()[start + lookback..start + window].to_vec(),
            origin,
        });
        start += stride;
    }
    Ok(out)
}

/// Z-score normalizer fit on training look-back values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    /// The identity transform.
    pub fn identity() -> Self {
        Normalizer { mean: 0.0, std: 1.0 }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }

    pub fn apply_slice(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| self.apply(*v)).collect()
    }

    pub fn invert_slice(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| self.invert(*v)).collect()
    }
}

/// Fit z-score statistics from the x-values of training windows.
///
/// Uses the population standard deviation; a zero deviation falls back to 1
/// so the transform stays invertible.
pub fn fit_normalizer(train_windows: &[WindowSample]) -> Result<Normalizer> {
    let mut count = 0usize;
    let mut sum = 0.0;
    for w in train_windows {
        for v in &w.x {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyInput {
            what: "normalizer training windows".into(),
        });
    }
    let mean = sum / count as f64;
    let var = train_windows
        .iter()
        .flat_map(|w| w.x.iter())
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / count as f64;
    let std = var.sqrt();
    Ok(Normalizer {
        mean,
        std: if std == 0.0 { 1.0 } else { std },
    })
}

/// Parameters of the synthetic hourly building-load generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_days: usize,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    pub base_load: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise_sigma: f64,
    /// Per-day probability that the load level jumps to a new regime.
    pub regime_shift_prob: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_days: 28,
            daily_amplitude: 3.0,
            weekly_amplitude: 1.0,
            base_load: 10.0,
            noise_sigma: 0.2,
            regime_shift_prob: 0.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_days == 0 {
            return Err(Error::invalid("n_days", "must be >= 1"));
        }
        if !(self.base_load.is_finite() && self.base_load > 0.0) {
            return Err(Error::invalid("base_load", "must be finite and > 0"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.regime_shift_prob) {
            return Err(Error::invalid("regime_shift_prob", "must be in [0, 1]"));
        }
        for (name, v) in [
            ("daily_amplitude", self.daily_amplitude),
            ("weekly_amplitude", self.weekly_amplitude),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        Ok(())
    }
}

/// Generate an hourly load series of length `24 * n_days`.
///
/// `value(t) = base_load + daily*sin(2*pi*t/24) + weekly*sin(2*pi*t/168)
///  + regime_offset(t) + N(0, noise_sigma)`. The regime offset starts at 0
/// and, with `regime_shift_prob` per day, jumps to a fresh level drawn from
/// `N(0, base_load/4)`. Identical configs (including the seed) produce
/// bit-identical series.
pub fn generate_synthetic(config: &GeneratorConfig, id: &str) -> Result<TimeSeries> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let unit_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let regime_normal = Normal::new(0.0, config.base_load / 4.0).expect("regime normal");

    let n = 24 * config.n_days;
    let mut values = Vec::with_capacity(n);
    let mut regime_offset = 0.0;
    for t in 0..n {
        if t % 24 == 0 && rng.gen::<f64>() < config.regime_shift_prob {
            regime_offset = regime_normal.sample(&mut rng);
        }
        let tt = t as f64;
        let seasonal = config.daily_amplitude * (2.0 * std::f64::consts::PI * tt / 24.0).sin()
            + config.weekly_amplitude * (2.0 * std::f64::consts::PI * tt / 168.0).sin();
        // Noise is sigma times a unit draw so that paired seeds stay aligned
        // across different sigma settings.
        let noise = config.noise_sigma * unit_normal.sample(&mut rng);
        values.push(config.base_load + seasonal + regime_offset + noise);
    }

    let mut series = TimeSeries::new(id, values)?;
    series.tags.insert("n_days".into(), config.n_days.to_string());
    series.tags.insert("daily_amplitude".into(), config.daily_amplitude.to_string());
    series.tags.insert("weekly_amplitude".into(), config.weekly_amplitude.to_string());
    series.tags.insert("base_load".into(), config.base_load.to_string());
    series.tags.insert("noise_sigma".into(), config.noise_sigma.to_string());
    series.tags.insert("regime_shift_prob".into(), config.regime_shift_prob.to_string());
    series.tags.insert("seed".into(), config.seed.to_string());
    series.tags.insert("origin".into(), Origin::Simulated.to_string());
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn load_csv_pass_through() {
        let f = write_temp("timestamp,value\n0,1.0\n1,2.0\n2,3.0\n");
        let s = load_csv(f.path(), "value", "a").unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(s.id, "a");
    }

    #[test]
    fn load_csv_interpolates_interior_gap() {
        let f = write_temp("timestamp,value\n0,1.0\n1,\n2,3.0\n");
        let s = load_csv(f.path(), "value", "a").unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn load_csv_trims_edge_gaps() {
        let f = write_temp("timestamp,value\n0,\n1,5.0\n2,6.0\n3,\n");
        let s = load_csv(f.path(), "value", "a").unwrap();
        assert_eq!(s.values(), &[5.0, 6.0]);
    }

    #[test]
    fn load_csv_empty_file_errors() {
        let f = write_temp("timestamp,value\n");
        let err = load_csv(f.path(), "value", "a").unwrap_err();
        assert!(matches!(err, Error::NoParseableRows { .. }));
    }

    #[test]
    fn load_csv_missing_column_errors() {
        let f = write_temp("timestamp,load\n0,1.0\n");
        let err = load_csv(f.path(), "value", "a").unwrap_err();
        assert!(matches!(err, Error::MissingColumn { .. }));
    }

    #[test]
    fn load_csv_missing_file_errors() {
        let err = load_csv("/nonexistent/path.csv", "value", "a").unwrap_err();
        assert!(matches!(err, Error::MissingFile { .. }));
    }

    #[test]
    fn csv_round_trip_exact() {
        let config = GeneratorConfig {
            noise_sigma: 0.37,
            seed: 11,
            ..GeneratorConfig::default()
        };
        let s = generate_synthetic(&config, "rt").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        write_csv(&s, &path).unwrap();
        let back = load_csv(&path, "value", "rt").unwrap();
        assert_eq!(back.values(), s.values());
    }

    #[test]
    fn windows_count_and_bounds() {
        let s = TimeSeries::new("w", (0..10).map(|v| v as f64).collect()).unwrap();
        // N=10, L=3, T=2, stride=1 -> 6 windows starting at 0..5
        let ws = rolling_windows(&s, 3, 2, 1).unwrap();
        assert_eq!(ws.len(), 6);
        assert_eq!(ws.iter().map(|w| w.t0).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5]);
        // stride=5 -> starts 0 and 5
        let ws = rolling_windows(&s, 3, 2, 5).unwrap();
        assert_eq!(ws.iter().map(|w| w.t0).collect::<Vec<_>>(), vec![0, 5]);
        // window longer than series -> empty
        let short = TimeSeries::new("s", vec![1.0; 4]).unwrap();
        assert!(rolling_windows(&short, 3, 2, 1).unwrap().is_empty());
    }

    #[test]
    fn windows_are_contiguous_slices() {
        let s = TimeSeries::new("w", (0..20).map(|v| v as f64 * 0.5).collect()).unwrap();
        for w in rolling_windows(&s, 4, 3, 2).unwrap() {
            let joined: Vec<f64> = w.x.iter().chain(w.y.iter()).copied().collect();
            assert_eq!(joined, s.values()[w.t0..w.t0 + 7]);
        }
    }

    #[test]
    fn windows_invalid_args() {
        let s = TimeSeries::new("w", vec![1.0; 10]).unwrap();
        assert!(rolling_windows(&s, 0, 2, 1).is_err());
        assert!(rolling_windows(&s, 3, 0, 1).is_err());
        assert!(rolling_windows(&s, 3, 2, 0).is_err());
    }

    #[test]
    fn normalizer_hand_cases() {
        let w = |x: Vec<f64>| WindowSample {
            series_id: "n".into(),
            t0: 0,
            x,
            y: vec![0.0],
            origin: Origin::Real,
        };
        // constant values: sigma falls back to 1
        let n = fit_normalizer(&[w(vec![5.0, 5.0, 5.0])]).unwrap();
        assert_eq!(n.mean, 5.0);
        assert_eq!(n.std, 1.0);
        assert_eq!(n.apply(5.0), 0.0);
        // [0,2]: population std = 1
        let n = fit_normalizer(&[w(vec![0.0, 2.0])]).unwrap();
        assert_eq!(n.mean, 1.0);
        assert_eq!(n.std, 1.0);
        assert_eq!(n.apply(2.0), 1.0);
    }

    #[test]
    fn normalizer_round_trip() {
        let w = WindowSample {
            series_id: "n".into(),
            t0: 0,
            x: vec![3.0, 9.5, -2.0, 4.4],
            y: vec![],
            origin: Origin::Real,
        };
        let n = fit_normalizer(std::slice::from_ref(&w)).unwrap();
        for v in [-100.0, 0.0, 0.123456, 7e9] {
            assert!((n.invert(n.apply(v)) - v).abs() < 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn fit_normalizer_empty_errors() {
        assert!(fit_normalizer(&[]).is_err());
    }

    #[test]
    fn generator_constant_when_all_terms_off() {
        let config = GeneratorConfig {
            n_days: 2,
            daily_amplitude: 0.0,
            weekly_amplitude: 0.0,
            base_load: 10.0,
            noise_sigma: 0.0,
            regime_shift_prob: 0.0,
            seed: 1,
        };
        let s = generate_synthetic(&config, "c").unwrap();
        assert_eq!(s.len(), 48);
        assert!(s.values().iter().all(|v| *v == 10.0));
    }

    #[test]
    fn generator_daily_peak_at_t6() {
        let config = GeneratorConfig {
            n_days: 1,
            daily_amplitude: 1.0,
            weekly_amplitude: 0.0,
            base_load: 10.0,
            noise_sigma: 0.0,
            regime_shift_prob: 0.0,
            seed: 1,
        };
        let s = generate_synthetic(&config, "p").unwrap();
        // sin(2*pi*6/24) = 1
        assert!((s.values()[6] - 11.0).abs() < 1e-12);
    }

    #[test]
    fn generator_deterministic() {
        let config = GeneratorConfig {
            noise_sigma: 0.5,
            regime_shift_prob: 0.3,
            seed: 42,
            ..GeneratorConfig::default()
        };
        let a = generate_synthetic(&config, "d").unwrap();
        let b = generate_synthetic(&config, "d").unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.origin(), Origin::Simulated);
    }

    #[test]
    fn generator_rejects_bad_config() {
        let bad = GeneratorConfig {
            noise_sigma: -1.0,
            ..GeneratorConfig::default()
        };
        assert!(generate_synthetic(&bad, "x").is_err());
    }
}
