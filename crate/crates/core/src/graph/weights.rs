//! Named parameter storage and the `.nwts` file format:
//! `NWTS`, u32 version 1, u32 entry count, then per entry u32 name length,
//! name bytes, u32 n,c,h,w and f32 data. Little-endian throughout; entries
//! are written in name order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GraphSpec, Network, Op};
use crate::blocks::{InitSource, ParamSource, Recorder};
use crate::error::{Error, Result};
use crate::tensor::io::{read_exact, read_f32s, read_u32};
use crate::tensor::{Shape, Tensor};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"NWTS";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<String, Tensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalars across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(|t| t.shape().len()).sum()
    }

    /// Checks that every parameter the graph needs is present with the
    /// right shape.
    pub fn validate(&self, graph: &GraphSpec) -> Result<()> {
        Network::build(graph, self).map(|_| ())
    }
}

impl ParamSource for &WeightStore {
    fn tensor(&mut self, name: &str, shape: Shape) -> Result<Tensor> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::MissingWeight(name.to_string()))?;
        if t.shape() != shape {
            return Err(Error::shape(format!("weight `{name}`"), shape, t.shape()));
        }
        Ok(t.clone())
    }
}

/// Deterministic default initialization for every parameterized layer.
pub fn init_weights(graph: &GraphSpec, seed: u64) -> WeightStore {
    let mut rec = Recorder::new(InitSource::new(seed));
    for (spec, r) in graph.layers().iter().zip(graph.resolved()) {
        if let Op::Block(cfg) = &r.op {
            cfg.build(&spec.name, &mut rec)
                .expect("a validated graph builds under the default initializer");
        }
    }
    WeightStore {
        tensors: rec.records.into_iter().collect(),
    }
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} exceeds u32")))
}

pub fn write_weights<W: Write>(mut w: W, store: &WeightStore) -> Result<()> {
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&u32_of(store.len(), "entry count")?.to_le_bytes())?;
    for (name, t) in &store.tensors {
        w.write_all(&u32_of(name.len(), "name length")?.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        for d in t.shape().dims() {
            w.write_all(&u32_of(d, "dimension")?.to_le_bytes())?;
        }
        w.write_all(&t.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_weights<R: Read>(mut r: R) -> Result<WeightStore> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != WEIGHTS_MAGIC {
        return Err(Error::Format(format!("bad weights magic {magic:?}")));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weights version {version}")));
    }
    let count = read_u32(&mut r, "entry count")?;
    let mut store = WeightStore::new();
    for i in 0..count {
        let len = read_u32(&mut r, "name length")? as usize;
        let mut name = vec![0u8; len];
        read_exact(&mut r, &mut name, "name")?;
        let name = String::from_utf8(name).map_err(|_| Error::Format(format!("entry {i} name is not UTF-8")))?;
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = read_u32(&mut r, "shape")? as usize;
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let data = read_f32s(&mut r, shape.len(), &format!("data of `{name}`"))?;
        let t = Tensor::new(shape, data)?;
        if store.insert(name.clone(), t).is_some() {
            return Err(Error::Format(format!("duplicate entry `{name}`")));
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last entry".into()));
    }
    Ok(store)
}

pub fn save_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_weights(&mut w, store)?;
    w.flush()?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    read_weights(BufReader::new(File::open(path)?))
}
