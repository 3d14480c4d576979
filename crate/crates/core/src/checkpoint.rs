//! Binary container of named parameter tensors.
//!
//! Layout (little endian): magic `CRWDCKPT`, `u32` format version, `u8`
//! bytes per scalar, `u32` section count, then per section its name, a JSON
//! description of the network shape and its tensors (name, rows, cols,
//! values). Strings are `u32` length prefixed UTF-8.

use std::path::Path;

use crate::adversary::{CriticConfig, DiscriminatorNet, PosteriorNet};
use crate::autodiff::ParamLayout;
use crate::error::{Error, Result};
use crate::policy::{PolicyConfig, PolicyNet};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"CRWDCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Networks of one training state; critics are absent for supervised runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub policy: PolicyNet<T>,
    pub discriminator: Option<DiscriminatorNet<T>>,
    pub posterior: Option<PosteriorNet<T>>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn section<T: Scalar>(&mut self, name: &str, shape: &str, layout: &ParamLayout, params: &[T]) {
        self.str(name);
        self.str(shape);
        self.u32(layout.entries().len() as u32);
        for e in layout.entries() {
            self.str(&e.name);
            self.u32(e.id.rows as u32);
            self.u32(e.id.cols as u32);
            for &v in &params[e.id.range()] {
                v.write_le(&mut self.0);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(what: &str) -> Error {
    Error::Checkpoint(format!("truncated or corrupt container ({what})"))
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("length"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("utf-8"))
    }

    /// Reads tensors into a vector laid out as `layout`.
    fn tensors<T: Scalar>(&mut self, layout: &ParamLayout) -> Result<Vec<T>> {
        let count = self.u32()? as usize;
        if count != layout.entries().len() {
            return Err(Error::Checkpoint(format!("{count} tensors, expected {}", layout.entries().len())));
        }
        let mut params = vec![T::zero(); layout.len()];
        let w = T::WIDTH as usize;
        for e in layout.entries() {
            let name = self.str()?;
            let (rows, cols) = (self.u32()? as usize, self.u32()? as usize);
            if name != e.name || rows != e.id.rows || cols != e.id.cols {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} [{rows}x{cols}] does not match {} [{}x{}]",
                    e.name, e.id.rows, e.id.cols
                )));
            }
            let bytes = self.take(rows * cols * w)?;
            for (slot, chunk) in params[e.id.range()].iter_mut().zip(bytes.chunks_exact(w)) {
                *slot = T::read_le(chunk);
            }
        }
        Ok(params)
    }
}

fn json<S: serde::Serialize>(v: &S) -> String {
    serde_json::to_string(v).expect("shape serializes")
}

fn parse<S: serde::de::DeserializeOwned>(s: &str) -> Result<S> {
    serde_json::from_str(s).map_err(|e| Error::Checkpoint(format!("bad shape description: {e}")))
}

#[derive(serde::Serialize, serde::Deserialize)]
struct PosteriorShape {
    hidden: usize,
    codes: usize,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.0.push(T::WIDTH);
        let sections = 1 + usize::from(self.discriminator.is_some()) + usize::from(self.posterior.is_some());
        w.u32(sections as u32);
        w.section("policy", &json(self.policy.config()), &self.policy.arch.layout, &self.policy.params);
        if let Some(d) = &self.discriminator {
            w.section("discriminator", &json(&d.config()), &d.arch.layout, &d.params);
        }
        if let Some(q) = &self.posterior {
            let shape = PosteriorShape { hidden: q.config().hidden, codes: q.codes() };
            w.section("posterior", &json(&shape), &q.arch.layout, &q.params);
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8).map_err(|_| Error::Checkpoint("not a checkpoint".into()))? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let width = r.take(1)?[0];
        if width != T::WIDTH {
            return Err(Error::Checkpoint(format!("stored scalars are {width} bytes, expected {}", T::WIDTH)));
        }
        let sections = r.u32()?;
        let (mut policy, mut discriminator, mut posterior) = (None, None, None);
        for _ in 0..sections {
            let name = r.str()?;
            let shape = r.str()?;
            match name.as_str() {
                "policy" => {
                    let mut net = PolicyNet::<T>::zeros(parse::<PolicyConfig>(&shape)?);
                    net.params = r.tensors(&net.arch.layout)?;
                    policy = Some(net);
                }
                "discriminator" => {
                    let mut net = DiscriminatorNet::<T>::zeros(parse::<CriticConfig>(&shape)?);
                    net.params = r.tensors(&net.arch.layout)?;
                    discriminator = Some(net);
                }
                "posterior" => {
                    let s: PosteriorShape = parse(&shape)?;
                    let mut net = PosteriorNet::<T>::zeros(CriticConfig { hidden: s.hidden }, s.codes)?;
                    net.params = r.tensors(&net.arch.layout)?;
                    posterior = Some(net);
                }
                other => return Err(Error::Checkpoint(format!("unknown section {other}"))),
            }
        }
        if r.pos != buf.len() {
            return Err(corrupt("trailing bytes"));
        }
        let policy = policy.ok_or_else(|| Error::Checkpoint("missing policy section".into()))?;
        Ok(Self { policy, discriminator, posterior })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Bytes per scalar of a stored checkpoint, to pick the load type.
pub fn stored_width(buf: &[u8]) -> Result<u8> {
    if buf.len() < 13 || &buf[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint".into()));
    }
    Ok(buf[12])
}
