//! On-disk formats owned by retrieval: the binary feature file and the
//! JSON-lines frame manifest.
//!
//! Feature file, little-endian: `AMCF`, u32 version, u32 d, u64 count, then
//! per entry a u16-length-prefixed UTF-8 id, a u16-length-prefixed UTF-8
//! source id, an f32 offset in seconds and `d` f32 vector components.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GalleryIndex;
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"AMCF";
pub const FEATURE_VERSION: u32 = 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("feature file truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Format("id is not UTF-8".into()))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::InvalidArgument(format!("id longer than 65535 bytes: {s:.32}...")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

impl GalleryIndex {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(20 + self.len() * (4 * self.d + 32));
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for i in 0..self.len() {
            put_str(&mut out, &self.ids[i])?;
            put_str(&mut out, &self.sources[i])?;
            out.extend_from_slice(&self.offsets[i].to_le_bytes());
            for v in self.vector(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(4).ok() != Some(&FEATURE_MAGIC[..]) {
            return Err(Error::Format("not a feature file".into()));
        }
        let version = c.u32()?;
        if version != FEATURE_VERSION {
            return Err(Error::Format(format!("feature file version {version}")));
        }
        let d = c.u32()? as usize;
        let count = c.u64()? as usize;
        if d == 0 || count == 0 {
            return Err(Error::EmptyIndex);
        }
        let mut index = GalleryIndex::with_dim(d, count.min(1 << 20));
        for _ in 0..count {
            let id = c.string()?;
            let source = c.string()?;
            let offset = c.f32()?;
            let vector = (0..d).map(|_| c.f32()).collect::<Result<Vec<f32>>>()?;
            index.push(id, source, offset, vector.into_iter())?;
        }
        if c.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after last entry".into()));
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// One frame of a segmented corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub path: String,
    pub source_id: String,
    pub offset_s: f64,
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("manifest row serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::FeatureVector;
    use crate::retrieval::{build_index, IndexEntry};

    #[test]
    fn feature_file_round_trip() {
        let idx = build_index(vec![
            IndexEntry {
                id: "a@0.000".into(),
                source_id: "a".into(),
                offset_s: 0.0,
                vector: FeatureVector::<f32>::normalize(vec![0.3, -0.4, 1.0]).unwrap(),
            },
            IndexEntry {
                id: "b@1.000".into(),
                source_id: "b".into(),
                offset_s: 1.0,
                vector: FeatureVector::<f32>::normalize(vec![1.0, 2.0, 3.0]).unwrap(),
            },
        ])
        .unwrap();
        let bytes = idx.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"AMCF");
        assert_eq!(GalleryIndex::from_bytes(&bytes).unwrap(), idx);
        assert!(GalleryIndex::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(GalleryIndex::from_bytes(&extra).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let rows = vec![ManifestRow {
            id: "x@0.000".into(),
            path: "frames/x_0000.wav".into(),
            source_id: "x".into(),
            offset_s: 0.0,
        }];
        write_manifest(&p, &rows).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), rows);
        std::fs::write(&p, "{not json}\n").unwrap();
        assert!(matches!(read_manifest(&p), Err(Error::Format(_))));
    }
}
