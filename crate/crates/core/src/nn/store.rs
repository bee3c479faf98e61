//! Named parameter storage and the checkpoint archive format.
//!
//! Checkpoint layout (little-endian): magic `NNCK`, version u32, count u32,
//! then per parameter `{name_len u16, name bytes, ndim u8, dims u32...,
//! float32 data}`. Reload is bit-exact for `f32` stores.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::tensor::Scalar;
use super::{NnError, Result};

const MAGIC: &[u8; 4] = b"NNCK";
const VERSION: u32 = 1;

/// Handle to one named parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

pub(crate) struct ParamEntry<T> {
    pub(crate) name: String,
    pub(crate) shape: Vec<usize>,
    pub(crate) values: Arc<Vec<T>>,
}

/// Owns every trainable value of a model. Shared read-only across worker
/// threads during a batch; the optimizer mutates it between batches.
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<T>) -> ParamId {
        let name = name.into();
        assert_eq!(
            values.len(),
            shape.iter().product::<usize>(),
            "param {name}: data does not match shape {shape:?}"
        );
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        self.entries.push(ParamEntry { name, shape, values: Arc::new(values) });
        ParamId(self.entries.len() - 1)
    }

    pub(crate) fn entry(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.entries[id.0].shape
    }

    pub fn values(&self, id: ParamId) -> &[T] {
        &self.entries[id.0].values
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut [T] {
        let v: &mut Vec<T> = Arc::make_mut(&mut self.entries[id.0].values);
        v.as_mut_slice()
    }

    pub fn set_values(&mut self, id: ParamId, values: Vec<T>) {
        assert_eq!(values.len(), self.entries[id.0].values.len());
        self.entries[id.0].values = Arc::new(values);
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            let name = e.name.as_bytes();
            out.write_all(&(name.len() as u16).to_le_bytes())?;
            out.write_all(name)?;
            out.write_all(&[e.shape.len() as u8])?;
            for &d in &e.shape {
                out.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in e.values.iter() {
                out.write_all(&(v.into_f64() as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Load values into an existing store; names and shapes must match the
    /// construction order exactly.
    pub fn load(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let mut u32b = [0u8; 4];
        r.read_exact(&mut u32b)?;
        let version = u32::from_le_bytes(u32b);
        if version != VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        r.read_exact(&mut u32b)?;
        let count = u32::from_le_bytes(u32b) as usize;
        if count != self.entries.len() {
            return Err(NnError::Checkpoint(format!(
                "{count} parameters in file, store has {}",
                self.entries.len()
            )));
        }
        for e in &mut self.entries {
            let mut u16b = [0u8; 2];
            r.read_exact(&mut u16b)?;
            let name_len = u16::from_le_bytes(u16b) as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| NnError::Checkpoint("non-utf8 parameter name".into()))?;
            if name != e.name {
                return Err(NnError::Checkpoint(format!(
                    "parameter order mismatch: file has {name}, store expects {}",
                    e.name
                )));
            }
            let mut ndim = [0u8; 1];
            r.read_exact(&mut ndim)?;
            let mut shape = Vec::with_capacity(ndim[0] as usize);
            for _ in 0..ndim[0] {
                r.read_exact(&mut u32b)?;
                shape.push(u32::from_le_bytes(u32b) as usize);
            }
            if shape != e.shape {
                return Err(NnError::Checkpoint(format!(
                    "shape mismatch for {name}: file {shape:?}, store {:?}",
                    e.shape
                )));
            }
            let mut values = Vec::with_capacity(e.values.len());
            for _ in 0..e.values.len() {
                r.read_exact(&mut u32b)?;
                values.push(T::from_f64(f32::from_le_bytes(u32b) as f64));
            }
            e.values = Arc::new(values);
        }
        Ok(())
    }
}
