use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

const MAGIC: &[u8; 4] = b"MARI";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

/// Free-form `key=value` metadata stored next to a raw tensor file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metadata(pub BTreeMap<String, String>);

impl Metadata {
    pub fn new() -> Self {
        Metadata::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.insert(key.to_owned(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::format("metadata", format!("line {}: expected key=value", i + 1))
            })?;
            map.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        Ok(Metadata(map))
    }
}

/// Path of the metadata sidecar for a raw tensor file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Encodes a tensor. Single planes are written with rank 2, anything else
/// with rank 4.
pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let s = t.shape();
    let dims: Vec<usize> = if s.n == 1 && s.c == 1 {
        vec![s.h, s.w]
    } else {
        s.dims().to_vec()
    };
    let mut out = Vec::with_capacity(16 + dims.len() * 4 + t.numel() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in &dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    out.push(DTYPE_F32);
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::format("raw tensor", format!("truncated while reading {what}")));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn take_u32(bytes: &mut &[u8], what: &str) -> Result<u32> {
    let b = take(bytes, 4, what)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Decodes a tensor; ranks below 4 are right-aligned into `(n, c, h, w)`.
pub fn decode_tensor(mut bytes: &[u8]) -> Result<Tensor> {
    let cur = &mut bytes;
    if take(cur, 4, "magic")? != MAGIC {
        return Err(Error::format("raw tensor", "bad magic, expected MARI"));
    }
    let version = take_u32(cur, "version")?;
    if version != VERSION {
        return Err(Error::format("raw tensor", format!("unsupported version {version}")));
    }
    let rank = take_u32(cur, "rank")? as usize;
    if !(1..=4).contains(&rank) {
        return Err(Error::format("raw tensor", format!("rank {rank} is not in 1..=4")));
    }
    let mut dims = [1usize; 4];
    for i in 0..rank {
        dims[4 - rank + i] = take_u32(cur, "dims")? as usize;
    }
    let dtype = take(cur, 1, "dtype")?[0];
    if dtype != DTYPE_F32 {
        return Err(Error::format("raw tensor", format!("unknown dtype tag {dtype}")));
    }
    let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
    let payload = shape.numel() * 4;
    if cur.len() != payload {
        return Err(Error::format(
            "raw tensor",
            format!("payload is {} bytes, dims {shape} need {payload}", cur.len()),
        ));
    }
    let data = cur
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor::from_vec(shape, data)
}

/// Writes a tensor and, if `meta` is non-empty, its sidecar.
pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor, meta: &Metadata) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(t))?;
    if !meta.0.is_empty() {
        fs::write(sidecar_path(path), meta.to_text())?;
    }
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&fs::read(path)?)
}

/// Sidecar metadata, empty when no sidecar exists.
pub fn load_metadata(path: impl AsRef<Path>) -> Result<Metadata> {
    let side = sidecar_path(path.as_ref());
    if !side.exists() {
        return Ok(Metadata::new());
    }
    Metadata::parse(&fs::read_to_string(side)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::from_plane(2, 3, vec![1.0; 6]).unwrap();
        let b = encode_tensor(&t);
        assert_eq!(&b[..4], b"MARI");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(b[20], 0);
        assert_eq!(b.len(), 21 + 24);
    }

    #[test]
    fn rejects_bad_payload_length() {
        let t = Tensor::from_plane(2, 2, vec![0.5; 4]).unwrap();
        let mut b = encode_tensor(&t);
        b.pop();
        assert_eq!(decode_tensor(&b).unwrap_err().category(), "format");
    }

    #[test]
    fn metadata_round_trip() {
        let m = Metadata::new().with("units", "mm^-1").with("seed", 7);
        assert_eq!(Metadata::parse(&m.to_text()).unwrap(), m);
    }
}
