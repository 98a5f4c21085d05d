//! Binary index file.
//!
//! Little-endian throughout:
//!
//! ```text
//! header   "SOMT" | version u16 | metric tag u8 | minkowski p f64 | dim u32
//!          | record count u64 | node count u64 | root id u64 | generator id (u16 len + UTF-8)
//! record   id u64 | label (u16 len + UTF-8, or 0xFFFF when absent)
//!          | response f64 (NaN when absent) | weight u32
//!          | payload (u32 len + bytes, or 0xFFFFFFFF when absent) | dim x f64
//! node     id u64 | depth u16 | dim x f64 centroid | u32 count + child ids u64
//!          | u32 count + member ids u64
//! trailer  CRC32C of every preceding byte, u32
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::record::Record;

use super::{BuildConfig, SomTreeIndex, TreeNode};

pub const MAGIC: [u8; 4] = *b"SOMT";
pub const FORMAT_VERSION: u16 = 1;

const ABSENT_LABEL: u16 = 0xFFFF;
const ABSENT_PAYLOAD: u32 = 0xFFFF_FFFF;

pub fn save_index(index: &SomTreeIndex, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, index.to_bytes()?)?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<SomTreeIndex> {
    SomTreeIndex::from_bytes(&fs::read(path)?)
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|v| self.f64(*v));
    }
    fn str16(&mut self, s: &str) -> Result<()> {
        let len = u16::try_from(s.len())
            .ok()
            .filter(|l| *l != ABSENT_LABEL)
            .ok_or_else(|| Error::InvalidParameter(format!("string too long to store ({} bytes)", s.len())))?;
        self.u16(len);
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
    fn len32(&mut self, n: usize) -> Result<()> {
        let n = u32::try_from(n)
            .ok()
            .filter(|n| *n != ABSENT_PAYLOAD)
            .ok_or_else(|| Error::InvalidParameter("list too long to store".into()))?;
        self.u32(n);
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or(Error::TruncatedFile)?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn utf8(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::InvalidIndex(format!("invalid UTF-8: {e}")))
    }
    fn ids(&mut self) -> Result<Vec<u64>> {
        let n = self.u32()? as usize;
        if n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(Error::TruncatedFile);
        }
        (0..n).map(|_| self.u64()).collect()
    }
}

impl SomTreeIndex {
    /// Serializes the index. Equal indices produce identical bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&MAGIC);
        w.u16(FORMAT_VERSION);
        let (tag, p) = self.config.metric.tag();
        w.u8(tag);
        w.f64(p);
        w.u32(u32::try_from(self.dim).map_err(|_| Error::InvalidParameter("dimension too large".into()))?);
        w.u64(self.records.len() as u64);
        w.u64(self.nodes.len() as u64);
        w.u64(self.root);
        w.str16(&self.generator_id)?;
        for r in &self.records {
            w.u64(r.id);
            match &r.label {
                Some(label) => w.str16(label)?,
                None => w.u16(ABSENT_LABEL),
            }
            w.f64(r.response.unwrap_or(f64::NAN));
            w.u32(r.weight);
            match &r.payload {
                Some(p) => {
                    w.len32(p.len())?;
                    w.0.extend_from_slice(p);
                }
                None => w.u32(ABSENT_PAYLOAD),
            }
            w.f64s(&r.features);
        }
        for n in &self.nodes {
            w.u64(n.id);
            w.u16(u16::try_from(n.depth).map_err(|_| Error::InvalidIndex("node depth exceeds u16".into()))?);
            w.f64s(&n.centroid);
            w.len32(n.children.len())?;
            n.children.iter().for_each(|c| w.u64(*c));
            w.len32(n.members.len())?;
            n.members.iter().for_each(|m| w.u64(*m));
        }
        let crc = crc32c::crc32c(&w.0);
        w.u32(crc);
        Ok(w.0)
    }

    /// Parses bytes produced by [`SomTreeIndex::to_bytes`]. The version is
    /// checked before the checksum so that files from another format version
    /// are reported as such.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic: [u8; 4] = r.array().map_err(|_| Error::ChecksumMismatch)?;
        if magic != MAGIC {
            return Err(Error::BadMagic {
                expected: u32::from_be_bytes(MAGIC),
                found: u32::from_be_bytes(magic),
            });
        }
        let version = r.u16().map_err(|_| Error::ChecksumMismatch)?;
        if version != FORMAT_VERSION {
            return Err(Error::FormatVersionMismatch {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        if bytes.len() < r.pos + 4 {
            return Err(Error::ChecksumMismatch);
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        if crc32c::crc32c(body) != u32::from_le_bytes(trailer.try_into().expect("4 bytes")) {
            return Err(Error::ChecksumMismatch);
        }
        let mut r = Reader { buf: body, pos: r.pos };

        let metric = Metric::from_tag(r.u8()?, r.f64()?)?;
        let dim = r.u32()? as usize;
        let record_count = r.u64()? as usize;
        let node_count = r.u64()? as usize;
        let root = r.u64()?;
        let generator_len = r.u16()? as usize;
        let generator_id = r.utf8(generator_len)?;
        if dim == 0 {
            return Err(Error::InvalidIndex("zero dimension".into()));
        }
        let remaining = body.len() - r.pos;
        if record_count > remaining || node_count > remaining {
            return Err(Error::InvalidIndex("declared counts exceed file size".into()));
        }

        let mut records = Vec::with_capacity(record_count);
        for _ in 0..record_count {
            let id = r.u64()?;
            let label = match r.u16()? {
                ABSENT_LABEL => None,
                n => Some(r.utf8(n as usize)?),
            };
            let response = Some(r.f64()?).filter(|v| !v.is_nan());
            let weight = r.u32()?;
            let payload = match r.u32()? {
                ABSENT_PAYLOAD => None,
                n => Some(r.take(n as usize)?.to_vec()),
            };
            let features = r.f64s(dim)?;
            records.push(Record {
                id,
                features,
                label,
                response,
                payload,
                weight,
            });
        }

        let mut nodes: Vec<TreeNode> = Vec::with_capacity(node_count);
        for slot in 0..node_count {
            let id = r.u64()?;
            if id != slot as u64 {
                return Err(Error::InvalidIndex(format!("node {id} stored at slot {slot}")));
            }
            let depth = r.u16()? as usize;
            let centroid = r.f64s(dim)?;
            let children = r.ids()?;
            let members = r.ids()?;
            nodes.push(TreeNode {
                id,
                depth,
                centroid,
                children,
                members,
                member_count: 0,
                parent: None,
            });
        }
        if r.pos != body.len() {
            return Err(Error::InvalidIndex("trailing bytes after node table".into()));
        }
        for i in 0..nodes.len() {
            for c in nodes[i].children.clone() {
                match nodes.get_mut(c as usize) {
                    Some(child) if child.parent.is_none() && c != root => child.parent = Some(i as u64),
                    _ => return Err(Error::InvalidIndex(format!("bad child link {i} -> {c}"))),
                }
            }
        }

        let config = BuildConfig {
            metric,
            ..BuildConfig::default()
        };
        let mut index = SomTreeIndex::from_parts(config, dim, nodes, root, records, generator_id);
        index.recount();
        crate::record::validate_records(&index.records)?;
        index.validate()?;
        Ok(index)
    }
}
