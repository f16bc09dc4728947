//! Symbol-level firmware image model with a move-free section layout.
//!
//! Images are organized so that incremental updates never relocate existing
//! symbols: new functions append at the end of the code section, new
//! initialized globals append at the end of the data section (growing
//! upward), and new uninitialized globals stack downward from the top of the
//! bss region. A free gap between the data end and the bss floor absorbs
//! growth from both sides.
//!
//! Addresses are absolute byte offsets in the node's memory map. The code
//! section starts at `code_base` and is open-ended; data and bss share the
//! region `[data_base, bss_top)` with data growing up from `data_base` and
//! bss growing down from `bss_top` (exclusive top).

use std::collections::BTreeSet;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::Error;

/// What a symbol is, which also pins the section it may live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    Function,
    InitGlobal,
    UninitGlobal,
}

impl SymbolKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SymbolKind::Function => "function",
            SymbolKind::InitGlobal => "init_global",
            SymbolKind::UninitGlobal => "uninit_global",
        }
    }

    fn parse(s: &str) -> Option<SymbolKind> {
        match s {
            "function" => Some(SymbolKind::Function),
            "init_global" => Some(SymbolKind::InitGlobal),
            "uninit_global" => Some(SymbolKind::UninitGlobal),
            _ => None,
        }
    }
}

/// Image section. Each section admits exactly one symbol kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Section {
    Code,
    Data,
    Bss,
}

impl Section {
    pub fn as_str(&self) -> &'static str {
        match self {
            Section::Code => "code",
            Section::Data => "data",
            Section::Bss => "bss",
        }
    }

    fn parse(s: &str) -> Option<Section> {
        match s {
            "code" => Some(Section::Code),
            "data" => Some(Section::Data),
            "bss" => Some(Section::Bss),
            _ => None,
        }
    }

    /// The symbol kind this section houses.
    pub fn kind(&self) -> SymbolKind {
        match self {
            Section::Code => SymbolKind::Function,
            Section::Data => SymbolKind::InitGlobal,
            Section::Bss => SymbolKind::UninitGlobal,
        }
    }

    pub const ALL: [Section; 3] = [Section::Code, Section::Data, Section::Bss];
}

/// A named, sized, placed object in one section.
///
/// `content` is empty exactly for uninitialized globals; otherwise its
/// length equals `size`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Symbol {
    pub name: String,
    pub kind: SymbolKind,
    pub size: u32,
    pub content: Vec<u8>,
    /// Absolute byte offset in the image address space.
    pub address: u32,
}

impl Symbol {
    pub fn function(name: &str, content: &[u8], address: u32) -> Symbol {
        Symbol {
            name: name.to_string(),
            kind: SymbolKind::Function,
            size: content.len() as u32,
            content: content.to_vec(),
            address,
        }
    }

    pub fn init_global(name: &str, content: &[u8], address: u32) -> Symbol {
        Symbol {
            name: name.to_string(),
            kind: SymbolKind::InitGlobal,
            size: content.len() as u32,
            content: content.to_vec(),
            address,
        }
    }

    pub fn uninit_global(name: &str, size: u32, address: u32) -> Symbol {
        Symbol {
            name: name.to_string(),
            kind: SymbolKind::UninitGlobal,
            size,
            content: Vec::new(),
            address,
        }
    }

    /// One past the last byte this symbol occupies.
    pub fn end(&self) -> u32 {
        self.address + self.size
    }

    fn check(&self) -> Result<(), Error> {
        if self.size == 0 {
            return Err(Error::InvalidImage(format!(
                "symbol {} has zero size",
                self.name
            )));
        }
        let expect_content = self.kind != SymbolKind::UninitGlobal;
        if expect_content && self.content.len() as u32 != self.size {
            return Err(Error::InvalidImage(format!(
                "symbol {}: content length {} != size {}",
                self.name,
                self.content.len(),
                self.size
            )));
        }
        if !expect_content && !self.content.is_empty() {
            return Err(Error::InvalidImage(format!(
                "uninitialized symbol {} carries content",
                self.name
            )));
        }
        Ok(())
    }
}

/// Fixed section bases shared by every version of a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutParams {
    pub code_base: u32,
    pub data_base: u32,
    /// Exclusive upper bound of the bss region; the first uninitialized
    /// global of size `s` occupies `[bss_top - s, bss_top)`.
    pub bss_top: u32,
}

impl LayoutParams {
    pub fn new(code_base: u32, data_base: u32, bss_top: u32) -> LayoutParams {
        LayoutParams {
            code_base,
            data_base,
            bss_top,
        }
    }
}

/// A versioned program image: three address-ordered symbol lists plus the
/// layout bases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmwareImage {
    pub version: u32,
    pub layout: LayoutParams,
    pub code: Vec<Symbol>,
    pub data: Vec<Symbol>,
    pub bss: Vec<Symbol>,
}

impl FirmwareImage {
    pub fn empty(layout: LayoutParams, version: u32) -> FirmwareImage {
        FirmwareImage {
            version,
            layout,
            code: Vec::new(),
            data: Vec::new(),
            bss: Vec::new(),
        }
    }

    pub fn section(&self, s: Section) -> &[Symbol] {
        match s {
            Section::Code => &self.code,
            Section::Data => &self.data,
            Section::Bss => &self.bss,
        }
    }

    pub fn section_mut(&mut self, s: Section) -> &mut Vec<Symbol> {
        match s {
            Section::Code => &mut self.code,
            Section::Data => &mut self.data,
            Section::Bss => &mut self.bss,
        }
    }

    pub fn find(&self, s: Section, name: &str) -> Option<&Symbol> {
        self.section(s).iter().find(|sym| sym.name == name)
    }

    /// One past the highest used code address, or `code_base` when empty.
    pub fn code_end(&self) -> u32 {
        self.code
            .iter()
            .map(Symbol::end)
            .max()
            .unwrap_or(self.layout.code_base)
    }

    /// One past the highest used data address, or `data_base` when empty.
    pub fn data_end(&self) -> u32 {
        self.data
            .iter()
            .map(Symbol::end)
            .max()
            .unwrap_or(self.layout.data_base)
    }

    /// Lowest used bss address, or `bss_top` when empty.
    pub fn bss_floor(&self) -> u32 {
        self.bss
            .iter()
            .map(|sym| sym.address)
            .min()
            .unwrap_or(self.layout.bss_top)
    }

    /// Unused bytes between the data end and the bss floor.
    pub fn free_gap(&self) -> u32 {
        self.bss_floor().saturating_sub(self.data_end())
    }

    /// Insert keeping the section address-ordered.
    pub fn insert(&mut self, section: Section, sym: Symbol) -> Result<(), Error> {
        sym.check()?;
        if sym.kind != section.kind() {
            return Err(Error::InvalidImage(format!(
                "symbol {} of kind {} cannot live in section {}",
                sym.name,
                sym.kind.as_str(),
                section.as_str()
            )));
        }
        if self.find(section, &sym.name).is_some() {
            return Err(Error::DuplicateSymbol {
                section,
                name: sym.name,
            });
        }
        let list = self.section_mut(section);
        let pos = list.partition_point(|s| s.address < sym.address);
        list.insert(pos, sym);
        Ok(())
    }

    /// Symbol-set validation only: per-symbol checks, section/kind
    /// agreement, and name uniqueness. Addresses are not inspected, so
    /// this is the right check for a proposed image whose placement is
    /// about to be recomputed.
    pub fn validate_symbols(&self) -> Result<(), Error> {
        for section in Section::ALL {
            let mut names = BTreeSet::new();
            for sym in self.section(section) {
                sym.check()?;
                if sym.kind != section.kind() {
                    return Err(Error::InvalidImage(format!(
                        "symbol {} of kind {} in section {}",
                        sym.name,
                        sym.kind.as_str(),
                        section.as_str()
                    )));
                }
                if !names.insert(sym.name.as_str()) {
                    return Err(Error::DuplicateSymbol {
                        section,
                        name: sym.name.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Full structural validation: everything in [`validate_symbols`]
    /// plus address ordering, bounds, overlap, and the data/bss gap.
    ///
    /// [`validate_symbols`]: FirmwareImage::validate_symbols
    pub fn validate(&self) -> Result<(), Error> {
        self.validate_symbols()?;
        for section in Section::ALL {
            let syms = self.section(section);
            for sym in syms {
                let base = match section {
                    Section::Code => self.layout.code_base,
                    Section::Data | Section::Bss => self.layout.data_base,
                };
                if sym.address < base {
                    return Err(Error::InvalidImage(format!(
                        "symbol {} at {:#x} below section base {:#x}",
                        sym.name, sym.address, base
                    )));
                }
                if section != Section::Code && sym.end() > self.layout.bss_top {
                    return Err(Error::InvalidImage(format!(
                        "symbol {} ends at {:#x} above bss top {:#x}",
                        sym.name,
                        sym.end(),
                        self.layout.bss_top
                    )));
                }
            }
            for pair in syms.windows(2) {
                if pair[1].address < pair[0].address {
                    return Err(Error::InvalidImage(format!(
                        "section {} not address-ordered at {}",
                        section.as_str(),
                        pair[1].name
                    )));
                }
                if pair[1].address < pair[0].end() {
                    return Err(Error::InvalidImage(format!(
                        "symbols {} and {} overlap",
                        pair[0].name, pair[1].name
                    )));
                }
            }
        }
        if self.data_end() > self.bss_floor() {
            return Err(Error::InvalidImage(format!(
                "data end {:#x} overlaps bss floor {:#x}",
                self.data_end(),
                self.bss_floor()
            )));
        }
        Ok(())
    }

    /// Canonical text form: one `layout` header line then one line per
    /// symbol, sections in code/data/bss order, each address-ascending.
    ///
    /// Line grammar: `<section> <name> <kind> <size> <hex-content|-> @<address>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "layout code_base={} data_base={} bss_top={} version={}",
            self.layout.code_base, self.layout.data_base, self.layout.bss_top, self.version
        )
        .unwrap();
        for section in Section::ALL {
            for sym in self.section(section) {
                let content = if sym.kind == SymbolKind::UninitGlobal {
                    "-".to_string()
                } else {
                    hex_encode(&sym.content)
                };
                writeln!(
                    out,
                    "{} {} {} {} {} @{}",
                    section.as_str(),
                    sym.name,
                    sym.kind.as_str(),
                    sym.size,
                    content,
                    sym.address
                )
                .unwrap();
            }
        }
        out
    }

    /// Parse the text form. Symbols without an explicit `@address` are
    /// packed in listed order: code and data upward from their bases, bss
    /// downward from the top.
    pub fn from_text(text: &str) -> Result<FirmwareImage, Error> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::ParseImage("empty image file".into()))?;
        let mut code_base = None;
        let mut data_base = None;
        let mut bss_top = None;
        let mut version = None;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("layout") {
            return Err(Error::ParseImage("first line must start with 'layout'".into()));
        }
        for field in fields {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::ParseImage(format!("bad layout field '{field}'")))?;
            let value: u32 = value
                .parse()
                .map_err(|_| Error::ParseImage(format!("bad layout value '{field}'")))?;
            match key {
                "code_base" => code_base = Some(value),
                "data_base" => data_base = Some(value),
                "bss_top" => bss_top = Some(value),
                "version" => version = Some(value),
                _ => return Err(Error::ParseImage(format!("unknown layout key '{key}'"))),
            }
        }
        let layout = LayoutParams {
            code_base: code_base.ok_or_else(|| Error::ParseImage("missing code_base".into()))?,
            data_base: data_base.ok_or_else(|| Error::ParseImage("missing data_base".into()))?,
            bss_top: bss_top.ok_or_else(|| Error::ParseImage("missing bss_top".into()))?,
        };
        let mut image = FirmwareImage::empty(
            layout,
            version.ok_or_else(|| Error::ParseImage("missing version".into()))?,
        );
        // Packing cursors for address-less lines.
        let mut code_cursor = layout.code_base;
        let mut data_cursor = layout.data_base;
        let mut bss_cursor = layout.bss_top;
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 5 && parts.len() != 6 {
                return Err(Error::ParseImage(format!("malformed symbol line '{line}'")));
            }
            let section = Section::parse(parts[0])
                .ok_or_else(|| Error::ParseImage(format!("unknown section '{}'", parts[0])))?;
            let name = parts[1].to_string();
            let kind = SymbolKind::parse(parts[2])
                .ok_or_else(|| Error::ParseImage(format!("unknown kind '{}'", parts[2])))?;
            let size: u32 = parts[3]
                .parse()
                .map_err(|_| Error::ParseImage(format!("bad size in '{line}'")))?;
            let content = if parts[4] == "-" {
                Vec::new()
            } else {
                hex_decode(parts[4])
                    .ok_or_else(|| Error::ParseImage(format!("bad hex in '{line}'")))?
            };
            let address = if parts.len() == 6 {
                let addr = parts[5]
                    .strip_prefix('@')
                    .ok_or_else(|| Error::ParseImage(format!("expected @address in '{line}'")))?;
                let addr: u32 = addr
                    .parse()
                    .map_err(|_| Error::ParseImage(format!("bad address in '{line}'")))?;
                match section {
                    Section::Code => code_cursor = code_cursor.max(addr + size),
                    Section::Data => data_cursor = data_cursor.max(addr + size),
                    Section::Bss => bss_cursor = bss_cursor.min(addr),
                }
                addr
            } else {
                match section {
                    Section::Code => {
                        let a = code_cursor;
                        code_cursor += size;
                        a
                    }
                    Section::Data => {
                        let a = data_cursor;
                        data_cursor += size;
                        a
                    }
                    Section::Bss => {
                        let a = bss_cursor.checked_sub(size).ok_or_else(|| {
                            Error::ParseImage(format!("bss overflow at '{line}'"))
                        })?;
                        bss_cursor = a;
                        a
                    }
                }
            };
            image.insert(
                section,
                Symbol {
                    name,
                    kind,
                    size,
                    content,
                    address,
                },
            )?;
        }
        image.validate()?;
        Ok(image)
    }

    /// SHA-256 over the canonical text form; identifies an image version
    /// in the version store.
    pub fn digest(&self) -> [u8; 32] {
        let hash = Sha256::digest(self.to_text().as_bytes());
        hash.into()
    }

    /// Sparse rendering: (address, byte) for every content byte of every
    /// placed symbol. Uninitialized globals contribute nothing.
    pub fn render(&self) -> std::collections::BTreeMap<u32, u8> {
        let mut map = std::collections::BTreeMap::new();
        for section in Section::ALL {
            for sym in self.section(section) {
                for (i, &b) in sym.content.iter().enumerate() {
                    map.insert(sym.address + i as u32, b);
                }
            }
        }
        map
    }
}

pub(crate) fn hex_encode(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

pub(crate) fn hex_decode(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 {
        return None;
    }
    (0..s.len() / 2)
        .map(|i| u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok())
        .collect()
}
