//! Character alphabets for grid levels and interval bins.
//!
//! Each level owns a contiguous block of the Unicode private-use area, so the
//! level of any character is known from its code point alone. Characters are
//! handed out in registration order (first occurrence in the corpus).

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use super::grid::{BoundingBox, GridCode, LevelKey, MAX_LEVEL};
use super::CodecError;

/// Separator between consecutive stops.
pub const SEPARATOR: char = '_';
/// Marks a stop followed by a temporary return home.
pub const TEMP_HOME: char = ',';
/// Marks the last stop of the day.
pub const FINAL_HOME: char = '.';
/// Ends the conditioning prefix.
pub const DELIMITER: char = '|';

pub const GRAMMAR_CHARS: [char; 4] = [SEPARATOR, TEMP_HOME, FINAL_HOME, DELIMITER];

const SIDECAR_MAGIC: &str = "#trajlang-alphabet";
const SIDECAR_VERSION: u32 = 1;

/// Which table a symbol belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymbolKind {
    Level(u8),
    Interval,
}

impl fmt::Display for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolKind::Level(l) => write!(f, "{l}"),
            SymbolKind::Interval => f.write_str("interval"),
        }
    }
}

/// Class of any character that can appear in a trajectory line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharClass {
    Symbol(SymbolKind),
    Grammar(char),
}

struct Block {
    kind: SymbolKind,
    start: u32,
    capacity: u32,
}

const BLOCKS: [Block; 6] = [
    Block { kind: SymbolKind::Level(1), start: 0xE000, capacity: 0x800 },
    Block { kind: SymbolKind::Level(2), start: 0xE800, capacity: 64 },
    Block { kind: SymbolKind::Level(3), start: 0xE840, capacity: 100 },
    Block { kind: SymbolKind::Level(4), start: 0xE8B0, capacity: 4 },
    Block { kind: SymbolKind::Level(5), start: 0xE8B8, capacity: 4 },
    Block { kind: SymbolKind::Interval, start: 0xE8C0, capacity: 64 },
];

fn block_index(kind: SymbolKind) -> usize {
    match kind {
        SymbolKind::Level(l) => l as usize - 1,
        SymbolKind::Interval => 5,
    }
}

/// Classifies a character by code point range.
pub fn classify(c: char) -> Option<CharClass> {
    if GRAMMAR_CHARS.contains(&c) {
        return Some(CharClass::Grammar(c));
    }
    let cp = c as u32;
    BLOCKS
        .iter()
        .find(|b| cp >= b.start && cp < b.start + b.capacity)
        .map(|b| CharClass::Symbol(b.kind))
}

/// Full code point range reserved for one table.
pub fn reserved_range(kind: SymbolKind) -> std::ops::Range<u32> {
    let b = &BLOCKS[block_index(kind)];
    b.start..b.start + b.capacity
}

#[derive(Debug, Clone, Default)]
struct Table {
    by_key: HashMap<LevelKey, char>,
    keys: Vec<LevelKey>,
}

/// Character encoding of one grid cell, one character per level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellString(String);

impl CellString {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn levels(&self) -> usize {
        self.0.chars().count()
    }

    /// Wraps a string after checking that its i-th character belongs to the
    /// level-i range. Does not check registration.
    pub fn from_chars(s: &str) -> Result<Self, CodecError> {
        let n = s.chars().count();
        if n == 0 || n > MAX_LEVEL as usize {
            return Err(CodecError::MalformedCellString(s.to_string()));
        }
        for (i, c) in s.chars().enumerate() {
            if classify(c) != Some(CharClass::Symbol(SymbolKind::Level(i as u8 + 1))) {
                return Err(CodecError::MalformedCellString(s.to_string()));
            }
        }
        Ok(Self(s.to_string()))
    }
}

impl fmt::Display for CellString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Per-level character tables plus the interval table.
#[derive(Debug, Clone)]
pub struct LevelAlphabet {
    tables: [Table; 6],
    bbox: BoundingBox,
    frozen: bool,
}

impl Default for LevelAlphabet {
    fn default() -> Self {
        Self::new(BoundingBox::JAPAN)
    }
}

impl LevelAlphabet {
    pub fn new(bbox: BoundingBox) -> Self {
        Self { tables: Default::default(), bbox, frozen: false }
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Number of registered symbols in one table.
    pub fn len(&self, kind: SymbolKind) -> usize {
        self.tables[block_index(kind)].keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.iter().all(|t| t.keys.is_empty())
    }

    /// Every registered character, in table then registration order.
    pub fn symbols(&self) -> Vec<char> {
        let mut out = Vec::new();
        for (b, t) in BLOCKS.iter().zip(&self.tables) {
            out.extend((0..t.keys.len() as u32).map(|i| char::from_u32(b.start + i).expect("private-use code point")));
        }
        out
    }

    fn register(&mut self, kind: SymbolKind, key: LevelKey) -> Result<char, CodecError> {
        let idx = block_index(kind);
        if let Some(&c) = self.tables[idx].by_key.get(&key) {
            return Ok(c);
        }
        if self.frozen {
            return Err(CodecError::Unregistered { kind, key });
        }
        let block = &BLOCKS[idx];
        let table = &mut self.tables[idx];
        let n = table.keys.len() as u32;
        if n >= block.capacity {
            return Err(CodecError::AlphabetFull(kind));
        }
        let c = char::from_u32(block.start + n).expect("private-use code point");
        table.by_key.insert(key, c);
        table.keys.push(key);
        Ok(c)
    }

    fn lookup(&self, kind: SymbolKind, key: LevelKey) -> Result<char, CodecError> {
        self.tables[block_index(kind)].by_key.get(&key).copied().ok_or(CodecError::Unregistered { kind, key })
    }

    fn key_of(&self, c: char, kind: SymbolKind) -> Result<LevelKey, CodecError> {
        let block = &BLOCKS[block_index(kind)];
        let offset = (c as u32).checked_sub(block.start).ok_or(CodecError::UnknownCharacter(c))?;
        self.tables[block_index(kind)].keys.get(offset as usize).copied().ok_or(CodecError::UnknownCharacter(c))
    }

    /// Encodes a cell, registering unseen level keys unless frozen.
    pub fn register_cell(&mut self, code: &GridCode) -> Result<CellString, CodecError> {
        let mut s = String::with_capacity(code.level() as usize * 3);
        for level in 1..=code.level() {
            let key = code.level_key(level).expect("level within code");
            s.push(self.register(SymbolKind::Level(level), key)?);
        }
        Ok(CellString(s))
    }

    /// Encodes a cell using only registered characters.
    pub fn cell_to_chars(&self, code: &GridCode) -> Result<CellString, CodecError> {
        let mut s = String::with_capacity(code.level() as usize * 3);
        for level in 1..=code.level() {
            let key = code.level_key(level).expect("level within code");
            s.push(self.lookup(SymbolKind::Level(level), key)?);
        }
        Ok(CellString(s))
    }

    /// Decodes a cell string; the i-th character must come from level i.
    pub fn chars_to_cell(&self, s: &str) -> Result<GridCode, CodecError> {
        let n = s.chars().count();
        if n == 0 || n > MAX_LEVEL as usize {
            return Err(CodecError::MalformedCellString(s.to_string()));
        }
        let mut keys = Vec::with_capacity(n);
        for (i, c) in s.chars().enumerate() {
            let want = SymbolKind::Level(i as u8 + 1);
            match classify(c) {
                Some(CharClass::Symbol(kind)) if kind == want => keys.push(self.key_of(c, kind)?),
                Some(_) => return Err(CodecError::MalformedCellString(s.to_string())),
                None => return Err(CodecError::UnknownCharacter(c)),
            }
        }
        GridCode::from_level_keys(&keys)
    }

    pub fn register_interval(&mut self, tau: u32) -> Result<char, CodecError> {
        self.register(SymbolKind::Interval, LevelKey(tau as i32, 0))
    }

    pub fn interval_char(&self, tau: u32) -> Result<char, CodecError> {
        self.lookup(SymbolKind::Interval, LevelKey(tau as i32, 0))
    }

    pub fn interval_of(&self, c: char) -> Result<u32, CodecError> {
        match classify(c) {
            Some(CharClass::Symbol(SymbolKind::Interval)) => Ok(self.key_of(c, SymbolKind::Interval)?.0 as u32),
            _ => Err(CodecError::UnknownCharacter(c)),
        }
    }

    /// Writes the vocabulary sidecar: a header line, then one
    /// `level<TAB>index-tuple<TAB>codepoint` line per symbol.
    pub fn write_sidecar<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let b = &self.bbox;
        writeln!(w, "{SIDECAR_MAGIC} v{SIDECAR_VERSION} bbox={},{},{},{}", b.lat_min, b.lat_max, b.lon_min, b.lon_max)?;
        for (block, table) in BLOCKS.iter().zip(&self.tables) {
            for (i, key) in table.keys.iter().enumerate() {
                let tuple = match block.kind {
                    SymbolKind::Level(1) | SymbolKind::Level(2) | SymbolKind::Level(3) => format!("{},{}", key.0, key.1),
                    _ => key.0.to_string(),
                };
                writeln!(w, "{}\t{}\t{:04X}", block.kind, tuple, block.start + i as u32)?;
            }
        }
        Ok(())
    }

    /// Reads a sidecar written by [`write_sidecar`](Self::write_sidecar). The
    /// result is frozen.
    pub fn read_sidecar<R: BufRead>(r: R) -> Result<Self, CodecError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| CodecError::Sidecar("empty file".into()))?.map_err(io_err)?;
        let bbox = parse_header(&header)?;
        let mut alphabet = Self::new(bbox);
        for (n, line) in lines.enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| CodecError::Sidecar(format!("line {}: {what}", n + 2));
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected three tab-separated fields"));
            }
            let kind = match fields[0] {
                "interval" => SymbolKind::Interval,
                l => match l.parse::<u8>() {
                    Ok(l @ 1..=5) => SymbolKind::Level(l),
                    _ => return Err(bad("unknown level")),
                },
            };
            let mut parts = fields[1].split(',').map(|x| x.parse::<i32>());
            let a = parts.next().and_then(Result::ok).ok_or_else(|| bad("bad index tuple"))?;
            let b = match parts.next() {
                Some(Ok(b)) => b,
                Some(Err(_)) => return Err(bad("bad index tuple")),
                None => 0,
            };
            let cp = u32::from_str_radix(fields[2], 16).map_err(|_| bad("bad code point"))?;
            let c = alphabet.register(kind, LevelKey(a, b))?;
            if c as u32 != cp {
                return Err(bad("code points out of registration order"));
            }
        }
        alphabet.freeze();
        Ok(alphabet)
    }
}

fn io_err(e: std::io::Error) -> CodecError {
    CodecError::Sidecar(e.to_string())
}

fn parse_header(header: &str) -> Result<BoundingBox, CodecError> {
    let bad = || CodecError::Sidecar(format!("bad header: {header}"));
    let mut it = header.split_whitespace();
    if it.next() != Some(SIDECAR_MAGIC) {
        return Err(bad());
    }
    let version = it.next().and_then(|v| v.strip_prefix('v')).and_then(|v| v.parse::<u32>().ok()).ok_or_else(bad)?;
    if version != SIDECAR_VERSION {
        return Err(CodecError::Sidecar(format!("unsupported version {version}")));
    }
    let vals: Vec<f64> = it
        .next()
        .and_then(|b| b.strip_prefix("bbox="))
        .ok_or_else(bad)?
        .split(',')
        .map(|x| x.parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    if vals.len() != 4 {
        return Err(bad());
    }
    Ok(BoundingBox { lat_min: vals[0], lat_max: vals[1], lon_min: vals[2], lon_max: vals[3] })
}
