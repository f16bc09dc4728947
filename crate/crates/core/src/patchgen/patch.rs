//! Patch records and their canonical binary serialization.
//!
//! A patch is an ordered list of section-scoped edit records plus the
//! version pair it transforms between. Serialization is canonical (records
//! sorted by section, then address, then operation) so identical diffs are
//! byte-identical. The wire form starts with magic `CIDP`; a compressed
//! wrapper prefixes magic `CIDZ` to the run-length-encoded stream.

use super::image::{Section, Symbol, SymbolKind};
use super::{rle, Error};

pub const PATCH_MAGIC: &[u8; 4] = b"CIDP";
pub const COMPRESSED_MAGIC: &[u8; 4] = b"CIDZ";

/// One edit. Equal-size content updates use `ReplaceContent`; size-changing
/// updates are expressed as `Remove` + `Append` so no other symbol moves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatchOp {
    ReplaceContent { name: String, new_bytes: Vec<u8> },
    Append { symbol: Symbol },
    Remove { name: String },
    SetVersion { version: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchRecord {
    /// Section the op targets; ignored for `SetVersion`.
    pub section: Section,
    pub op: PatchOp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub base_version: u32,
    pub target_version: u32,
    pub records: Vec<PatchRecord>,
}

impl Patch {
    /// Serialize to the canonical byte form. Round-trips bit-exactly
    /// through [`Patch::deserialize`].
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(PATCH_MAGIC);
        out.extend_from_slice(&self.base_version.to_le_bytes());
        out.extend_from_slice(&self.target_version.to_le_bytes());
        for rec in &self.records {
            encode_record(&mut out, rec);
        }
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Patch, Error> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != PATCH_MAGIC {
            return Err(Error::ParsePatch("bad magic".into()));
        }
        let base_version = r.u32()?;
        let target_version = r.u32()?;
        let mut records = Vec::new();
        while !r.done() {
            records.push(decode_record(&mut r)?);
        }
        Ok(Patch {
            base_version,
            target_version,
            records,
        })
    }

    /// Compressed wire form: `CIDZ` + RLE of the serialized patch.
    pub fn to_compressed(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(COMPRESSED_MAGIC);
        out.extend_from_slice(&rle::compress(&self.serialize()));
        out
    }

    pub fn from_compressed(bytes: &[u8]) -> Result<Patch, Error> {
        let body = bytes
            .strip_prefix(COMPRESSED_MAGIC.as_slice())
            .ok_or_else(|| Error::ParsePatch("bad compressed magic".into()))?;
        Patch::deserialize(&rle::decompress(body)?)
    }
}

const TAG_REPLACE: u8 = 1;
const TAG_APPEND: u8 = 2;
const TAG_REMOVE: u8 = 3;
const TAG_SET_VERSION: u8 = 4;

fn section_byte(s: Section) -> u8 {
    match s {
        Section::Code => 0,
        Section::Data => 1,
        Section::Bss => 2,
    }
}

fn section_from(b: u8) -> Result<Section, Error> {
    match b {
        0 => Ok(Section::Code),
        1 => Ok(Section::Data),
        2 => Ok(Section::Bss),
        _ => Err(Error::ParsePatch(format!("bad section byte {b}"))),
    }
}

fn kind_byte(k: SymbolKind) -> u8 {
    match k {
        SymbolKind::Function => 0,
        SymbolKind::InitGlobal => 1,
        SymbolKind::UninitGlobal => 2,
    }
}

fn kind_from(b: u8) -> Result<SymbolKind, Error> {
    match b {
        0 => Ok(SymbolKind::Function),
        1 => Ok(SymbolKind::InitGlobal),
        2 => Ok(SymbolKind::UninitGlobal),
        _ => Err(Error::ParsePatch(format!("bad kind byte {b}"))),
    }
}

fn encode_name(out: &mut Vec<u8>, name: &str) {
    debug_assert!(name.len() <= u16::MAX as usize);
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
}

fn encode_record(out: &mut Vec<u8>, rec: &PatchRecord) {
    match &rec.op {
        PatchOp::ReplaceContent { name, new_bytes } => {
            out.push(TAG_REPLACE);
            out.push(section_byte(rec.section));
            encode_name(out, name);
            out.extend_from_slice(&(new_bytes.len() as u32).to_le_bytes());
            out.extend_from_slice(new_bytes);
        }
        PatchOp::Append { symbol } => {
            out.push(TAG_APPEND);
            out.push(section_byte(rec.section));
            encode_name(out, &symbol.name);
            out.push(kind_byte(symbol.kind));
            out.extend_from_slice(&symbol.size.to_le_bytes());
            out.extend_from_slice(&symbol.address.to_le_bytes());
            if symbol.kind != SymbolKind::UninitGlobal {
                out.extend_from_slice(&symbol.content);
            }
        }
        PatchOp::Remove { name } => {
            out.push(TAG_REMOVE);
            out.push(section_byte(rec.section));
            encode_name(out, name);
        }
        PatchOp::SetVersion { version } => {
            out.push(TAG_SET_VERSION);
            out.extend_from_slice(&version.to_le_bytes());
        }
    }
}

fn decode_record(r: &mut Reader) -> Result<PatchRecord, Error> {
    let tag = r.u8()?;
    match tag {
        TAG_REPLACE => {
            let section = section_from(r.u8()?)?;
            let name = r.name()?;
            let len = r.u32()? as usize;
            let new_bytes = r.take(len)?.to_vec();
            Ok(PatchRecord {
                section,
                op: PatchOp::ReplaceContent { name, new_bytes },
            })
        }
        TAG_APPEND => {
            let section = section_from(r.u8()?)?;
            let name = r.name()?;
            let kind = kind_from(r.u8()?)?;
            let size = r.u32()?;
            let address = r.u32()?;
            let content = if kind != SymbolKind::UninitGlobal {
                r.take(size as usize)?.to_vec()
            } else {
                Vec::new()
            };
            Ok(PatchRecord {
                section,
                op: PatchOp::Append {
                    symbol: Symbol {
                        name,
                        kind,
                        size,
                        content,
                        address,
                    },
                },
            })
        }
        TAG_REMOVE => {
            let section = section_from(r.u8()?)?;
            let name = r.name()?;
            Ok(PatchRecord {
                section,
                op: PatchOp::Remove { name },
            })
        }
        TAG_SET_VERSION => {
            let version = r.u32()?;
            Ok(PatchRecord {
                section: Section::Code,
                op: PatchOp::SetVersion { version },
            })
        }
        other => Err(Error::ParsePatch(format!("bad record tag {other}"))),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Reader<'a> {
        Reader { bytes, pos: 0 }
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::ParsePatch("truncated patch".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, Error> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, Error> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, Error> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn name(&mut self) -> Result<String, Error> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::ParsePatch("bad name utf8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_patch() -> Patch {
        Patch {
            base_version: 1,
            target_version: 2,
            records: vec![
                PatchRecord {
                    section: Section::Code,
                    op: PatchOp::ReplaceContent {
                        name: "main".into(),
                        new_bytes: vec![1, 2, 3, 4],
                    },
                },
                PatchRecord {
                    section: Section::Data,
                    op: PatchOp::Append {
                        symbol: Symbol::init_global("b", &[9, 8], 4100),
                    },
                },
                PatchRecord {
                    section: Section::Bss,
                    op: PatchOp::Remove { name: "x".into() },
                },
                PatchRecord {
                    section: Section::Code,
                    op: PatchOp::SetVersion { version: 2 },
                },
            ],
        }
    }

    #[test]
    fn serialize_round_trip() {
        let p = sample_patch();
        let bytes = p.serialize();
        assert_eq!(&bytes[..4], PATCH_MAGIC);
        let back = Patch::deserialize(&bytes).unwrap();
        assert_eq!(p, back);
        assert_eq!(bytes, back.serialize());
    }

    #[test]
    fn compressed_round_trip() {
        let p = sample_patch();
        let wire = p.to_compressed();
        assert_eq!(&wire[..4], COMPRESSED_MAGIC);
        assert_eq!(Patch::from_compressed(&wire).unwrap(), p);
    }

    #[test]
    fn truncated_patch_rejected() {
        let bytes = sample_patch().serialize();
        assert!(Patch::deserialize(&bytes[..bytes.len() - 1]).is_err());
        assert!(Patch::deserialize(&bytes[..5]).is_err());
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = sample_patch().serialize();
        bytes[0] = b'X';
        assert!(Patch::deserialize(&bytes).is_err());
        assert!(Patch::from_compressed(&bytes).is_err());
    }
}
