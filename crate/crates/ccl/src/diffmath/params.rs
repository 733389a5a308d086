//! Checkpoint format for network parameters.
//!
//! A bundle is a versioned JSON document holding `(name, shape, values)`
//! entries. Values are `f64` and round-trip exactly through JSON.

use crate::error::{Error, Result};
use crate::diffmath::{Parameter, Tensor};
use serde::{Deserialize, Serialize};

pub const PARAM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamBundle {
    pub format_version: u32,
    pub entries: Vec<ParamEntry>,
}

impl ParamBundle {
    pub fn from_parameters<'a>(params: impl IntoIterator<Item = &'a Parameter>) -> Self {
        let entries = params
            .into_iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                values: p.value.data().to_vec(),
            })
            .collect();
        ParamBundle {
            format_version: PARAM_FORMAT_VERSION,
            entries,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != PARAM_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {})",
                self.format_version, PARAM_FORMAT_VERSION
            )));
        }
        for e in &self.entries {
            let expected: usize = e.shape.iter().product();
            if expected != e.values.len() {
                return Err(Error::Checkpoint(format!(
                    "entry {:?}: shape {:?} does not match {} values",
                    e.name,
                    e.shape,
                    e.values.len()
                )));
            }
        }
        Ok(())
    }

    /// Copy values into an existing parameter set, matching by name and shape.
    pub fn load_into<'a>(&self, params: impl IntoIterator<Item = &'a mut Parameter>) -> Result<()> {
        self.validate()?;
        let mut loaded = 0usize;
        for p in params {
            let entry = self
                .entries
                .iter()
                .find(|e| e.name == p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {:?}", p.name)))?;
            if entry.shape != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {:?}: shape {:?} in bundle, {:?} in model",
                    p.name,
                    entry.shape,
                    p.value.shape()
                )));
            }
            p.value = Tensor::new(entry.shape.clone(), entry.values.clone())?;
            loaded += 1;
        }
        if loaded != self.entries.len() {
            return Err(Error::Checkpoint(format!(
                "bundle has {} entries but model consumed {}",
                self.entries.len(),
                loaded
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let bundle: ParamBundle = serde_json::from_str(s)?;
        bundle.validate()?;
        Ok(bundle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let values = vec![0.1, -2.5e-17, 3.0f64.sqrt(), 1.0 / 3.0];
        let p = Parameter::new("w", Tensor::new(vec![2, 2], values.clone()).unwrap());
        let bundle = ParamBundle::from_parameters([&p]);
        let json = bundle.to_json().unwrap();
        let back = ParamBundle::from_json(&json).unwrap();
        assert_eq!(back.entries[0].values, values);

        let mut q = Parameter::new("w", Tensor::zeros(vec![2, 2]));
        back.load_into([&mut q]).unwrap();
        assert_eq!(q.value.data(), values.as_slice());
    }

    #[test]
    fn version_mismatch_rejected() {
        let bundle = ParamBundle {
            format_version: 999,
            entries: vec![],
        };
        assert!(bundle.validate().is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = Parameter::new("w", Tensor::from_vec(vec![1.0, 2.0]));
        let bundle = ParamBundle::from_parameters([&p]);
        let mut q = Parameter::new("w", Tensor::from_vec(vec![0.0, 0.0, 0.0]));
        assert!(bundle.load_into([&mut q]).is_err());
    }
}
