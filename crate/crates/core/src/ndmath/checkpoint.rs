//! Binary parameter container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "DQSC" | version: u8 | entry count: u32 | entries... | crc32 of all preceding bytes: u32
//! entry   = kind: u8 | name length: u16 | name (utf-8) | payload
//! network = skip: u8 | dim count: u32 | dims: u32... | per layer: weight f64s (row-major), bias f64s
//! array   = rank: u32 | extents: u32... | f64s
//! scalar  = f64
//! text    = byte length: u32 | utf-8 bytes
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::array::DenseArray;
use super::mlp::{Linear, MlpNetwork};
use crate::error::{DqsError, Result};

const MAGIC: &[u8; 4] = b"DQSC";
pub const FORMAT_VERSION: u8 = 1;

const KIND_NETWORK: u8 = 0;
const KIND_ARRAY: u8 = 1;
const KIND_SCALAR: u8 = 2;
const KIND_TEXT: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Network(MlpNetwork),
    Array(DenseArray),
    Scalar(f64),
    Text(String),
}

/// Named collection of networks, arrays and metadata, ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamContainer {
    entries: BTreeMap<String, Entry>,
}

impl ParamContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, entry: Entry) {
        self.entries.insert(name.into(), entry);
    }

    pub fn put_network(&mut self, name: &str, net: &MlpNetwork) {
        self.insert(name, Entry::Network(net.clone()));
    }

    pub fn put_array(&mut self, name: &str, a: &DenseArray) {
        self.insert(name, Entry::Array(a.clone()));
    }

    pub fn put_scalar(&mut self, name: &str, v: f64) {
        self.insert(name, Entry::Scalar(v));
    }

    pub fn put_text(&mut self, name: &str, v: &str) {
        self.insert(name, Entry::Text(v.to_string()));
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.get(name)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &Entry)> {
        self.entries.iter()
    }

    fn missing(name: &str, what: &str) -> DqsError {
        DqsError::Config(format!("checkpoint entry `{name}` missing or not a {what}"))
    }

    pub fn network(&self, name: &str) -> Result<&MlpNetwork> {
        match self.entries.get(name) {
            Some(Entry::Network(n)) => Ok(n),
            _ => Err(Self::missing(name, "network")),
        }
    }

    pub fn array(&self, name: &str) -> Result<&DenseArray> {
        match self.entries.get(name) {
            Some(Entry::Array(a)) => Ok(a),
            _ => Err(Self::missing(name, "array")),
        }
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        match self.entries.get(name) {
            Some(Entry::Scalar(v)) => Ok(*v),
            _ => Err(Self::missing(name, "scalar")),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match self.entries.get(name) {
            Some(Entry::Text(v)) => Ok(v),
            _ => Err(Self::missing(name, "text")),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        put_u32(&mut out, self.entries.len() as u32);
        for (name, entry) in &self.entries {
            let kind = match entry {
                Entry::Network(_) => KIND_NETWORK,
                Entry::Array(_) => KIND_ARRAY,
                Entry::Scalar(_) => KIND_SCALAR,
                Entry::Text(_) => KIND_TEXT,
            };
            out.push(kind);
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match entry {
                Entry::Network(net) => {
                    out.push(net.skip_connections() as u8);
                    put_u32(&mut out, net.layer_dims().len() as u32);
                    for &d in net.layer_dims() {
                        put_u32(&mut out, d as u32);
                    }
                    for p in net.parameters() {
                        put_f64s(&mut out, p.data());
                    }
                }
                Entry::Array(a) => {
                    put_u32(&mut out, a.shape().len() as u32);
                    for &d in a.shape() {
                        put_u32(&mut out, d as u32);
                    }
                    put_f64s(&mut out, a.data());
                }
                Entry::Scalar(v) => out.extend_from_slice(&v.to_le_bytes()),
                Entry::Text(s) => {
                    put_u32(&mut out, s.len() as u32);
                    out.extend_from_slice(s.as_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&out);
        put_u32(&mut out, crc);
        out
    }

    /// Parses a container; any truncation, trailing bytes or checksum
    /// mismatch is reported as an error message.
    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < MAGIC.len() + 1 + 4 + 4 {
            return Err("file too short".into());
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err("checksum mismatch".into());
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let count = r.u32()? as usize;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let kind = r.u8()?;
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|e| e.to_string())?;
            let entry = match kind {
                KIND_NETWORK => {
                    let skip = r.u8()? != 0;
                    let n = r.u32()? as usize;
                    let dims = (0..n).map(|_| r.u32().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
                    if dims.len() < 2 {
                        return Err(format!("network `{name}` has fewer than two dims"));
                    }
                    let mut layers = Vec::new();
                    for w in dims.windows(2) {
                        let weight = DenseArray::from_vec(&[w[1], w[0]], r.f64s(w[0] * w[1])?).map_err(|e| e.to_string())?;
                        let bias = DenseArray::from_vec(&[w[1]], r.f64s(w[1])?).map_err(|e| e.to_string())?;
                        layers.push(Linear { weight, bias });
                    }
                    Entry::Network(MlpNetwork::from_layers(layers, skip).map_err(|e| e.to_string())?)
                }
                KIND_ARRAY => {
                    let rank = r.u32()? as usize;
                    let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
                    let len = shape.iter().product();
                    Entry::Array(DenseArray::from_vec(&shape, r.f64s(len)?).map_err(|e| e.to_string())?)
                }
                KIND_SCALAR => Entry::Scalar(r.f64s(1)?[0]),
                KIND_TEXT => {
                    let len = r.u32()? as usize;
                    Entry::Text(String::from_utf8(r.take(len)?.to_vec()).map_err(|e| e.to_string())?)
                }
                other => return Err(format!("unknown entry kind {other}")),
            };
            entries.insert(name, entry);
        }
        if r.pos != body.len() {
            return Err("trailing bytes after last entry".into());
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| DqsError::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| DqsError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| DqsError::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_bytes(&bytes).map_err(|reason| DqsError::Checkpoint {
            path: path.to_path_buf(),
            reason,
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.pos + n > self.buf.len() {
            return Err("unexpected end of data".into());
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("length overflow")?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> ParamContainer {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut c = ParamContainer::new();
        c.put_network("q1", &MlpNetwork::new(&[4, 8, 8, 1], false, &mut rng).unwrap());
        c.put_array("m", &DenseArray::from_vec(&[2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5]).unwrap());
        c.put_scalar("temperature", 0.05);
        c.put_text("env", "gmm");
        c
    }

    #[test]
    fn bit_exact_round_trip() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = ParamContainer::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.network("q1").unwrap(), c.network("q1").unwrap());
        assert_eq!(back.array("m").unwrap().data()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = sample().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert_eq!(ParamContainer::from_bytes(&bytes).unwrap_err(), "checksum mismatch");
        assert!(ParamContainer::from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn typed_getters_reject_wrong_kind() {
        let c = sample();
        assert!(c.scalar("q1").is_err());
        assert!(c.network("absent").is_err());
        assert_eq!(c.text("env").unwrap(), "gmm");
    }
}
