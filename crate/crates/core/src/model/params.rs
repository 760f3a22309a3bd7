use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Location of one named parameter inside the flat blob.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

/// Ordered named parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.values[i]
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn manifest(&self) -> Vec<ParamEntry> {
        let mut offset = 0;
        self.names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| {
                let e = ParamEntry {
                    name: n.clone(),
                    offset,
                    shape: v.shape().to_vec(),
                };
                offset += v.numel();
                e
            })
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.data().iter().copied()).collect()
    }

    /// Overwrites every parameter from a blob laid out by `manifest`, which
    /// must describe exactly this store.
    pub fn load_flat(&mut self, manifest: &[ParamEntry], blob: &[f64]) -> Result<()> {
        let mine = self.manifest();
        if manifest != mine.as_slice() {
            let diff = mine
                .iter()
                .zip(manifest)
                .find(|(a, b)| a != b)
                .map(|(a, b)| format!("expected {} {:?}, found {} {:?}", a.name, a.shape, b.name, b.shape))
                .unwrap_or_else(|| format!("expected {} parameters, found {}", mine.len(), manifest.len()));
            return Err(Error::Checkpoint(format!("parameter manifest mismatch: {diff}")));
        }
        if blob.len() != self.num_scalars() {
            return Err(Error::Checkpoint(format!(
                "blob holds {} values, model needs {}",
                blob.len(),
                self.num_scalars()
            )));
        }
        for (v, e) in self.values.iter_mut().zip(manifest) {
            let n = v.numel();
            v.data_mut().copy_from_slice(&blob[e.offset..e.offset + n]);
        }
        Ok(())
    }

    /// Registers every parameter on `tape`, in store order.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Vec<Var> {
        self.values.iter().map(|v| tape.leaf(v.clone(), requires_grad)).collect()
    }
}
