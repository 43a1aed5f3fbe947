//! Versioned little-endian array container with a CRC-32 trailer, shared
//! by feature files and checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     4 bytes   "HNWV"
//! version   u32       FORMAT_VERSION
//! kind      u32       1 = features, 2 = checkpoint
//! n_meta    u32
//!   key     u16 length + UTF-8 bytes
//!   value   u32 length + UTF-8 bytes
//! n_arrays  u32
//!   name    u16 length + UTF-8 bytes
//!   rank    u8
//!   dims    u64 x rank
//!   data    f64 x product(dims)
//! crc32     u32       over every preceding byte
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{io_at, CliError, Result};

pub const MAGIC: &[u8; 4] = b"HNWV";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Features = 1,
    Checkpoint = 2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: Kind,
    pub meta: BTreeMap<String, String>,
    /// Arrays in insertion order; names are unique.
    pub arrays: Vec<(String, Array)>,
}

impl Container {
    pub fn new(kind: Kind) -> Self {
        Self {
            kind,
            meta: BTreeMap::new(),
            arrays: Vec::new(),
        }
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CliError::user(format!("missing field `{key}`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.meta(key)?;
        v.parse()
            .map_err(|_| CliError::user(format!("field `{key}` has invalid value `{v}`")))
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(CliError::Internal(format!(
                "array `{name}`: shape {shape:?} vs {} values",
                data.len()
            )));
        }
        if self.arrays.iter().any(|(n, _)| *n == name) {
            return Err(CliError::Internal(format!("duplicate array `{name}`")));
        }
        self.arrays.push((
            name,
            Array {
                shape: shape.to_vec(),
                data,
            },
        ));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Array> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .ok_or_else(|| CliError::user(format!("missing array `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.kind as u32).to_le_bytes());
        b.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            b.extend_from_slice(&(k.len() as u16).to_le_bytes());
            b.extend_from_slice(k.as_bytes());
            b.extend_from_slice(&(v.len() as u32).to_le_bytes());
            b.extend_from_slice(v.as_bytes());
        }
        b.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, a) in &self.arrays {
            b.extend_from_slice(&(name.len() as u16).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
            b.push(a.shape.len() as u8);
            for &d in &a.shape {
                b.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in &a.data {
                b.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 4 + 4 + 4 {
            return Err(CliError::user("file too short for a container"));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4-byte trailer"));
        if crc32fast::hash(body) != stored {
            return Err(CliError::user("checksum mismatch: file is corrupt"));
        }
        let mut r = Reader { bytes: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CliError::user("not an hnwave container (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CliError::user(format!("unsupported container version {version}")));
        }
        let kind = match r.u32()? {
            1 => Kind::Features,
            2 => Kind::Checkpoint,
            k => return Err(CliError::user(format!("unknown container kind {k}"))),
        };
        let mut c = Container::new(kind);
        for _ in 0..r.u32()? {
            let k = r.string16()?;
            let n = r.u32()? as usize;
            let v = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| CliError::user("metadata is not UTF-8"))?;
            c.meta.insert(k, v);
        }
        for _ in 0..r.u32()? {
            let name = r.string16()?;
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(usize::try_from(r.u64()?).map_err(|_| CliError::user("array dimension overflows"))?);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| CliError::user(format!("array `{name}` exceeds the file")))?;
            let data = r
                .take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            c.push(name, &shape, data).map_err(|e| CliError::user(e.to_string()))?;
        }
        if r.remaining() != 0 {
            return Err(CliError::user("trailing bytes before checksum"));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // Write then rename so an interrupted save never leaves a torn file.
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(io_at(&tmp))?;
        std::fs::rename(&tmp, path).map_err(io_at(path))
    }

    pub fn load(path: &Path, kind: Kind) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(io_at(path))?;
        let c = Self::from_bytes(&bytes).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        if c.kind != kind {
            return Err(CliError::user(format!(
                "{}: expected a {kind:?} file, found {:?}",
                path.display(),
                c.kind
            )));
        }
        Ok(c)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(CliError::user("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string16(&mut self) -> Result<String> {
        let n = u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")) as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CliError::user("name is not UTF-8"))
    }
}
