//! Named, trainable tensors with seeded initialization.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Result, TrendError};

/// How a fresh parameter is filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Normal { std: f64 },
    Uniform { bound: f64 },
}

/// Parameter store keyed by canonical dotted names.
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(dtype: DType, device: Device) -> Self {
        ParamStore {
            vars: BTreeMap::new(),
            dtype,
            device,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Creates `name` with values drawn from `rng`. Errors if it exists.
    pub fn init(
        &mut self,
        name: &str,
        shape: &[usize],
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(TrendError::Checkpoint(format!(
                "parameter {name} initialized twice"
            )));
        }
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Normal { std } => {
                let dist = Normal::new(0.0, std).map_err(|e| TrendError::Config(e.to_string()))?;
                (0..n).map(|_| dist.sample(rng)).collect()
            }
            Init::Uniform { bound } => (0..n).map(|_| rng.random_range(-bound..=bound)).collect(),
        };
        let tensor = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        self.insert(name, tensor)
    }

    /// Stores `tensor` (converted to the store dtype) under `name`.
    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<Tensor> {
        let var = Var::from_tensor(&tensor.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        let t = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(t)
    }

    pub fn get(&self, name: &str) -> Result<Tensor> {
        self.vars
            .get(name)
            .map(|v| v.as_tensor().clone())
            .ok_or_else(|| TrendError::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn var(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Var> {
        self.vars.remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Variables whose name satisfies `keep`, in name order.
    pub fn vars_where(&self, keep: impl Fn(&str) -> bool) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(name, _)| keep(name))
            .map(|(_, v)| v.clone())
            .collect()
    }

    /// Deep copy: the returned store shares no storage with `self`.
    pub fn deep_clone(&self) -> Result<Self> {
        let mut out = ParamStore::new(self.dtype, self.device.clone());
        for (name, var) in &self.vars {
            out.insert(name, var.as_tensor().copy()?)?;
        }
        Ok(out)
    }

    /// SHA-256 over the tensor's shape and little-endian f32 values.
    pub fn checksum(&self, name: &str) -> Result<String> {
        let t = self.get(name)?;
        tensor_checksum(&t)
    }

    /// Checksums of every parameter, by name.
    pub fn checksums(&self) -> Result<BTreeMap<String, String>> {
        self.vars
            .iter()
            .map(|(name, var)| Ok((name.clone(), tensor_checksum(var.as_tensor())?)))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> = self
            .vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&map, path)
            .map_err(|e| TrendError::Checkpoint(format!("writing {}: {e}", path.display())))
    }

    pub fn load(path: &Path, dtype: DType, device: &Device) -> Result<Self> {
        let tensors = candle_core::safetensors::load(path, device)
            .map_err(|e| TrendError::Checkpoint(format!("reading {}: {e}", path.display())))?;
        let mut store = ParamStore::new(dtype, device.clone());
        let mut names: Vec<_> = tensors.keys().cloned().collect();
        names.sort();
        for name in names {
            store.insert(&name, tensors[&name].clone())?;
        }
        Ok(store)
    }
}

pub fn tensor_checksum(t: &Tensor) -> Result<String> {
    let mut hasher = Sha256::new();
    for d in t.dims() {
        hasher.update((*d as u64).to_le_bytes());
    }
    match t.dtype() {
        DType::F64 => {
            for v in t.flatten_all()?.to_vec1::<f64>()? {
                hasher.update(v.to_le_bytes());
            }
        }
        _ => {
            for v in t.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()? {
                hasher.update(v.to_le_bytes());
            }
        }
    }
    Ok(hex::encode(hasher.finalize()))
}
