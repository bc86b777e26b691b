//! Binary checkpoint container.
//!
//! Layout (all integers little-endian; `str` is a `u32` byte length followed
//! by UTF-8 bytes):
//!
//! ```text
//! magic        8 bytes  "DOLORESK"
//! version      u32      1
//! precision    u8       0 = f32, 1 = f64
//! config       u32 count, then count x (str key, str value)
//! entities     u32 count, then count x str
//! relations    u32 count, then count x str
//! blocks       u32 count, then count x (str name, u64 rows, u64 cols,
//!                                       rows*cols scalars)
//! ```
//!
//! Blocks appear in `ModelParams::visit` order; a vector is stored with one
//! row. Scalars are raw IEEE-754 bits, so save/load is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::params::ModelParams;
use crate::scalar::{Precision, Scalar};

const MAGIC: &[u8; 8] = b"DOLORESK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub config: ModelConfig,
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub params: ModelParams<T>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("string is not UTF-8".into()))
    }

    fn strings(&mut self) -> Result<Vec<String>> {
        let n = self.u32()?;
        (0..n).map(|_| self.str()).collect()
    }
}

fn precision_tag(p: Precision) -> u8 {
    match p {
        Precision::F32 => 0,
        Precision::F64 => 1,
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<Precision> {
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    match r.take(1)?[0] {
        0 => Ok(Precision::F32),
        1 => Ok(Precision::F64),
        t => Err(Error::Checkpoint(format!("unknown precision tag {t}"))),
    }
}

/// Precision a checkpoint was written with.
pub fn peek_precision(bytes: &[u8]) -> Result<Precision> {
    read_header(&mut Reader { buf: bytes, pos: 0 })
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        out.push(precision_tag(T::PRECISION));
        let mut pairs = self.config.to_pairs();
        // the stored tensors decide the precision
        pairs.insert("precision", T::PRECISION.to_string());
        put_u32(&mut out, pairs.len() as u32);
        for (k, v) in &pairs {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        for vocab in [&self.entities, &self.relations] {
            put_u32(&mut out, vocab.len() as u32);
            for s in vocab.iter() {
                put_str(&mut out, s);
            }
        }
        let shapes = self.params.shapes();
        put_u32(&mut out, shapes.len() as u32);
        let mut blocks = Vec::new();
        self.params.visit(|_, s| blocks.push(s));
        for ((name, rows, cols), data) in shapes.iter().zip(blocks) {
            put_str(&mut out, name);
            out.extend_from_slice(&(*rows as u64).to_le_bytes());
            out.extend_from_slice(&(*cols as u64).to_le_bytes());
            for &v in data {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let precision = read_header(&mut r)?;
        if precision != T::PRECISION {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {precision} parameters, requested {}",
                T::PRECISION
            )));
        }
        let n = r.u32()?;
        let mut pairs = BTreeMap::new();
        for _ in 0..n {
            let k = r.str()?;
            let v = r.str()?;
            pairs.insert(k, v);
        }
        let config = ModelConfig::from_pairs(&pairs)?;
        let entities = r.strings()?;
        let relations = r.strings()?;
        let mut params = ModelParams::<T>::zeros(&config, entities.len(), relations.len());
        let expected = params.shapes();
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(Error::Checkpoint(format!(
                "{count} blocks, configuration implies {}",
                expected.len()
            )));
        }
        let mut decoded = Vec::with_capacity(count);
        for (name, rows, cols) in &expected {
            let got = r.str()?;
            let (gr, gc) = (r.u64()? as usize, r.u64()? as usize);
            if &got != name || gr != *rows || gc != *cols {
                return Err(Error::Checkpoint(format!(
                    "block `{got}` {gr}x{gc} where `{name}` {rows}x{cols} was expected"
                )));
            }
            let raw = r.take(rows * cols * T::BYTES)?;
            decoded.push(raw.chunks_exact(T::BYTES).map(T::read_le).collect::<Vec<T>>());
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let mut it = decoded.into_iter();
        params.visit_mut(|_, dst| dst.copy_from_slice(&it.next().expect("counted")));
        Ok(Checkpoint {
            config,
            entities,
            relations,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
