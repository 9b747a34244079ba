//! Single-file binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic       8 bytes  "MEMN2NCK"
//! version     u32
//! meta_len    u64, then meta_len bytes of UTF-8 `key=value` lines
//! n_tensors   u32
//! per tensor: name_len u32, name bytes, rows u64, cols u64, rows*cols f64
//! ```
//!
//! Only distinct tensors are stored; tied roles are rebuilt as aliases
//! from the configuration on load.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Layout, ModelConfig, ModelParams, ParamSet};
use crate::tensor::Mat;
use crate::vocab::Vocabulary;

pub const MAGIC: &[u8; 8] = b"MEMN2NCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams,
    pub seed: u64,
    /// Free-form, single-line description of the training schedule.
    pub schedule: String,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    fn metadata(&self) -> String {
        let c = &self.config;
        let mut meta = String::new();
        let mut put = |k: &str, v: String| {
            meta.push_str(k);
            meta.push('=');
            meta.push_str(&v);
            meta.push('\n');
        };
        put("dim", c.dim.to_string());
        put("hops", c.hops.to_string());
        put("capacity", c.capacity.to_string());
        put("encoding", c.encoding.to_string());
        put("tying", c.tying.to_string());
        put("temporal", c.temporal.to_string());
        put("hop_nonlinearity", c.hop_nonlinearity.to_string());
        put("lm_mode", c.lm_mode.to_string());
        put("relu_half", c.relu_half.to_string());
        put("seed", self.seed.to_string());
        put("schedule", self.schedule.replace('\n', " "));
        put("vocab", self.vocab.words().join(" "));
        meta
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = self.metadata();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.params.tensors().len() as u32).to_le_bytes());
        for (name, m) in self.params.named() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
            for x in m.as_slice() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let meta_len = r.u64()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?).map_err(|_| bad("metadata is not UTF-8"))?;
        let meta = parse_meta(meta)?;
        let get = |k: &str| meta.get(k).ok_or_else(|| bad(format!("metadata lacks `{k}`")));
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| bad(format!("bad value for `{k}`: {v}")))
        }
        let config = ModelConfig {
            dim: parse("dim", get("dim")?)?,
            hops: parse("hops", get("hops")?)?,
            capacity: parse("capacity", get("capacity")?)?,
            encoding: parse("encoding", get("encoding")?)?,
            tying: parse("tying", get("tying")?)?,
            temporal: parse("temporal", get("temporal")?)?,
            hop_nonlinearity: parse("hop_nonlinearity", get("hop_nonlinearity")?)?,
            lm_mode: parse("lm_mode", get("lm_mode")?)?,
            relu_half: parse("relu_half", get("relu_half")?)?,
        };
        config.validate().map_err(|e| bad(e.to_string()))?;
        let words = get("vocab")?.split(' ').map(str::to_owned).collect();
        let vocab = Vocabulary::from_ordered(words)
            .ok_or_else(|| bad("vocabulary lacks reserved symbols or repeats a word"))?;
        let layout = Layout::tied(&config, vocab.len());
        let n = r.u32()? as usize;
        if n != layout.tensors().len() {
            return Err(bad(format!(
                "{n} tensors stored, configuration needs {}",
                layout.tensors().len()
            )));
        }
        let mut tensors = Vec::with_capacity(n);
        for spec in layout.tensors() {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| bad("tensor name is not UTF-8"))?;
            if name != spec.name {
                return Err(bad(format!("expected tensor `{}`, found `{name}`", spec.name)));
            }
            let (rows, cols) = (r.u64()? as usize, r.u64()? as usize);
            if (rows, cols) != (spec.rows, spec.cols) {
                return Err(bad(format!(
                    "tensor `{name}` is {rows}x{cols}, expected {}x{}",
                    spec.rows, spec.cols
                )));
            }
            let data = r
                .take(rows * cols * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Mat::from_vec(rows, cols, data)?);
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes after last tensor"));
        }
        let params = ParamSet::from_tensors(layout, tensors, vocab.null()).ok_or_else(|| bad("tensor shapes"))?;
        let mut pinned = params.clone();
        pinned.zero_null();
        if pinned != params {
            return Err(bad("null-symbol entries are not zero"));
        }
        Ok(Checkpoint {
            config,
            vocab,
            params,
            seed: parse("seed", get("seed")?)?,
            schedule: get("schedule")?.clone(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn parse_meta(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("metadata line without `=`: {line}")))?;
        out.insert(k.to_owned(), v.to_owned());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| bad("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
