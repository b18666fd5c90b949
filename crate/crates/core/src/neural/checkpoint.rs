//! JSON parameter checkpoints.
//!
//! A checkpoint holds a format version, free-form metadata and any number of
//! namespaces, each mapping a parameter name to its shape and row-major data.
//! Floats are written with shortest round-trip formatting, so loading a saved
//! file reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub namespaces: BTreeMap<String, BTreeMap<String, Tensor>>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self::new()
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self { version: CHECKPOINT_VERSION, metadata: BTreeMap::new(), namespaces: BTreeMap::new() }
    }

    pub fn insert_params<M: Parameters + ?Sized>(&mut self, namespace: &str, model: &M) {
        let mut map = BTreeMap::new();
        model.visit("", &mut |name, p| {
            map.insert(name.to_string(), Tensor { shape: p.shape(), data: p.values.clone() });
        });
        self.namespaces.insert(namespace.to_string(), map);
    }

    /// Copies a namespace into `model`. Every parameter of the model must be
    /// present with a matching shape and the namespace may not hold extras.
    pub fn load_params<M: Parameters + ?Sized>(&self, namespace: &str, model: &mut M) -> Result<()> {
        let map = self
            .namespaces
            .get(namespace)
            .ok_or_else(|| Error::Checkpoint(format!("missing namespace `{namespace}`")))?;
        let mut problem = None;
        let mut seen = 0;
        model.visit_mut("", &mut |name, p| {
            if problem.is_some() {
                return;
            }
            match map.get(name) {
                None => problem = Some(format!("`{namespace}` has no parameter `{name}`")),
                Some(t) if t.shape != p.shape() || t.data.len() != p.len() => {
                    problem = Some(format!(
                        "`{namespace}.{name}` has shape {:?} with {} values, model expects {:?}",
                        t.shape,
                        t.data.len(),
                        p.shape()
                    ))
                }
                Some(t) => {
                    p.values.copy_from_slice(&t.data);
                    p.zero_grad();
                    seen += 1;
                }
            }
        });
        if let Some(msg) = problem {
            return Err(Error::Checkpoint(msg));
        }
        if seen != map.len() {
            return Err(Error::Checkpoint(format!("`{namespace}` holds {} parameters, model has {seen}", map.len())));
        }
        Ok(())
    }

    pub fn set_metadata<T: Serialize>(&mut self, key: &str, value: &T) -> Result<()> {
        self.metadata.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn metadata<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        let v = self.metadata.get(key).ok_or_else(|| Error::Checkpoint(format!("missing metadata `{key}`")))?;
        Ok(T::deserialize(v)?)
    }

    pub fn to_json(&self) -> Result<String> {
        for (ns, map) in &self.namespaces {
            for (name, t) in map {
                if t.data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Checkpoint(format!("`{ns}.{name}` contains non-finite values")));
                }
            }
        }
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        for (ns, map) in &ckpt.namespaces {
            for (name, t) in map {
                if t.shape[0] * t.shape[1] != t.data.len() {
                    return Err(Error::Checkpoint(format!("`{ns}.{name}` data does not match its shape")));
                }
            }
        }
        Ok(ckpt)
    }

    /// Writes through a temporary sibling file and renames, so an existing
    /// checkpoint is never left half written.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}
