//! Differential patch generation over move-free firmware layouts.
//!
//! [`reorganize`] rewrites a proposed image so every symbol surviving from
//! the old version keeps its address, with additions appended at section
//! ends. [`diff`] then yields a minimal record list between two
//! address-stable images, and [`apply`] replays it node-side. The codec in
//! [`rle`] and the [`store::VersionStore`] cover the compress and
//! store/lookup stages of the update pipeline.

pub mod image;
pub mod patch;
pub mod rle;
pub mod store;

pub use image::{FirmwareImage, LayoutParams, Section, Symbol, SymbolKind};
pub use patch::{Patch, PatchOp, PatchRecord};
pub use rle::{compress, decompress};
pub use store::VersionStore;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("free gap exhausted: data and bss growth fronts cross by {overrun} bytes")]
    FreeGapExhausted { overrun: u32 },
    #[error("duplicate symbol {name} in section {}", section.as_str())]
    DuplicateSymbol { section: Section, name: String },
    #[error("symbol {name} in section {} moved between images; reorganize first", section.as_str())]
    NotAddressStable { section: Section, name: String },
    #[error("patch base version {expected} does not match image version {actual}")]
    VersionMismatch { expected: u32, actual: u32 },
    #[error("target version {target} does not advance past base {base}")]
    VersionNotAdvanced { base: u32, target: u32 },
    #[error("unknown symbol {name} in section {}", section.as_str())]
    UnknownSymbol { section: Section, name: String },
    #[error("images share no layout: section bases differ")]
    LayoutMismatch,
    #[error("truncated compressed stream")]
    TruncatedStream,
    #[error("no stored patch for versions {base} -> {target}")]
    NotFound { base: u32, target: u32 },
    #[error("version pair {base} -> {target} already stored with different bytes")]
    DuplicateVersion { base: u32, target: u32 },
    #[error("malformed patch: {0}")]
    MalformedPatch(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("image parse error: {0}")]
    ParseImage(String),
    #[error("patch parse error: {0}")]
    ParsePatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rewrite `proposed` against `old` so that every symbol present in both
/// (matched by name and section, same size) keeps its old address.
///
/// New symbols are placed past the old section ends: functions after the
/// old code end, initialized globals after the old data end (growing
/// upward), uninitialized globals below the old bss floor (growing
/// downward). A size-changed symbol counts as removed plus new. Holes left
/// by removals are never compacted.
pub fn reorganize(old: &FirmwareImage, proposed: &FirmwareImage) -> Result<FirmwareImage, Error> {
    if old.layout != proposed.layout {
        return Err(Error::LayoutMismatch);
    }
    old.validate()?;
    // Proposed addresses are advisory; only the symbol set must be sound.
    proposed.validate_symbols()?;

    let mut result = FirmwareImage::empty(old.layout, proposed.version);
    let mut code_cursor = old.code_end();
    let mut data_cursor = old.data_end();
    let mut bss_cursor = old.bss_floor();

    for section in Section::ALL {
        for sym in proposed.section(section) {
            let placed = match old.find(section, &sym.name) {
                Some(old_sym) if old_sym.size == sym.size => Symbol {
                    address: old_sym.address,
                    ..sym.clone()
                },
                // New name or changed size: append past the old section end.
                _ => {
                    let address = match section {
                        Section::Code => {
                            let a = code_cursor;
                            code_cursor += sym.size;
                            a
                        }
                        Section::Data => {
                            let a = data_cursor;
                            data_cursor += sym.size;
                            a
                        }
                        Section::Bss => {
                            bss_cursor = bss_cursor.saturating_sub(sym.size);
                            bss_cursor
                        }
                    };
                    Symbol {
                        address,
                        ..sym.clone()
                    }
                }
            };
            result.insert(section, placed)?;
        }
    }

    if data_cursor > bss_cursor {
        return Err(Error::FreeGapExhausted {
            overrun: data_cursor - bss_cursor,
        });
    }
    result.validate()?;
    Ok(result)
}

/// Minimal patch between two address-stable images.
///
/// Unchanged symbols produce no record; equal-size content changes one
/// `ReplaceContent`; additions one `Append`; removals one `Remove`;
/// size changes a `Remove` plus an `Append`. Records are emitted in
/// canonical order (section, address, op, name) with the version record
/// last, so identical inputs serialize identically.
pub fn diff(old: &FirmwareImage, new: &FirmwareImage) -> Result<Patch, Error> {
    if old.layout != new.layout {
        return Err(Error::LayoutMismatch);
    }
    if new.version <= old.version {
        return Err(Error::VersionNotAdvanced {
            base: old.version,
            target: new.version,
        });
    }
    old.validate()?;
    new.validate()?;

    // (section rank, address, op rank, name) sort keys.
    let mut keyed: Vec<((u8, u32, u8, String), PatchRecord)> = Vec::new();
    for (rank, section) in (0u8..).zip(Section::ALL) {
        for sym in old.section(section) {
            let removed = match new.find(section, &sym.name) {
                None => true,
                Some(n) => n.size != sym.size,
            };
            if removed {
                keyed.push((
                    (rank, sym.address, 1, sym.name.clone()),
                    PatchRecord {
                        section,
                        op: PatchOp::Remove {
                            name: sym.name.clone(),
                        },
                    },
                ));
            }
        }
        for sym in new.section(section) {
            match old.find(section, &sym.name) {
                Some(old_sym) if old_sym.size == sym.size => {
                    if old_sym.address != sym.address {
                        return Err(Error::NotAddressStable {
                            section,
                            name: sym.name.clone(),
                        });
                    }
                    if old_sym.content != sym.content {
                        keyed.push((
                            (rank, sym.address, 0, sym.name.clone()),
                            PatchRecord {
                                section,
                                op: PatchOp::ReplaceContent {
                                    name: sym.name.clone(),
                                    new_bytes: sym.content.clone(),
                                },
                            },
                        ));
                    }
                }
                _ => {
                    keyed.push((
                        (rank, sym.address, 2, sym.name.clone()),
                        PatchRecord {
                            section,
                            op: PatchOp::Append {
                                symbol: sym.clone(),
                            },
                        },
                    ));
                }
            }
        }
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let mut records: Vec<PatchRecord> = keyed.into_iter().map(|(_, r)| r).collect();
    records.push(PatchRecord {
        section: Section::Code,
        op: PatchOp::SetVersion {
            version: new.version,
        },
    });
    Ok(Patch {
        base_version: old.version,
        target_version: new.version,
        records,
    })
}

/// Replay a patch on an image. Never relocates untouched symbols: the set
/// of modified byte addresses is contained in the union of record extents.
pub fn apply(old: &FirmwareImage, patch: &Patch) -> Result<FirmwareImage, Error> {
    if old.version != patch.base_version {
        return Err(Error::VersionMismatch {
            expected: patch.base_version,
            actual: old.version,
        });
    }
    if patch.target_version <= patch.base_version {
        return Err(Error::VersionNotAdvanced {
            base: patch.base_version,
            target: patch.target_version,
        });
    }
    let mut result = old.clone();
    let mut version_set = false;
    for rec in &patch.records {
        match &rec.op {
            PatchOp::ReplaceContent { name, new_bytes } => {
                let list = result.section_mut(rec.section);
                let sym = list
                    .iter_mut()
                    .find(|s| &s.name == name)
                    .ok_or_else(|| Error::UnknownSymbol {
                        section: rec.section,
                        name: name.clone(),
                    })?;
                if new_bytes.len() as u32 != sym.size {
                    return Err(Error::MalformedPatch(format!(
                        "replace_content of {} changes size {} -> {}",
                        name,
                        sym.size,
                        new_bytes.len()
                    )));
                }
                sym.content = new_bytes.clone();
            }
            PatchOp::Append { symbol } => {
                result.insert(rec.section, symbol.clone())?;
            }
            PatchOp::Remove { name } => {
                let list = result.section_mut(rec.section);
                let pos = list.iter().position(|s| &s.name == name).ok_or_else(|| {
                    Error::UnknownSymbol {
                        section: rec.section,
                        name: name.clone(),
                    }
                })?;
                list.remove(pos);
            }
            PatchOp::SetVersion { version } => {
                if *version < result.version {
                    return Err(Error::MalformedPatch(format!(
                        "set_version decreases version {} -> {}",
                        result.version, version
                    )));
                }
                result.version = *version;
                version_set = true;
            }
        }
    }
    if !version_set || result.version != patch.target_version {
        return Err(Error::MalformedPatch(format!(
            "patch does not establish target version {}",
            patch.target_version
        )));
    }
    result.validate()?;
    Ok(result)
}
