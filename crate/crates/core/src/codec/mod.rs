//! Conversion between coordinates, time gaps and trajectory characters.

mod alphabet;
mod grid;
mod interval;

pub use alphabet::{
    classify, reserved_range, CellString, CharClass, LevelAlphabet, SymbolKind, DELIMITER, FINAL_HOME, GRAMMAR_CHARS,
    SEPARATOR, TEMP_HOME,
};
pub use grid::{decode_center, encode_cell, BoundingBox, GeoPoint, GridCode, LevelKey, MAX_LEVEL};
pub use interval::{
    discretize_interval, representative_is_unclamped, representative_minutes, DEFAULT_MIN_MINUTES, INTERVAL_BASE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("invalid coordinate ({lat}, {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("point {0} outside the bounding box")]
    OutOfBounds(GeoPoint),
    #[error("grid level {0} not in 1..=5")]
    InvalidLevel(u8),
    #[error("invalid grid code {0}")]
    InvalidGridCode(String),
    #[error("character U+{:04X} is not in the alphabet", *.0 as u32)]
    UnknownCharacter(char),
    #[error("malformed cell string {0:?}")]
    MalformedCellString(String),
    #[error("no character registered for level {kind} key {key:?}")]
    Unregistered { kind: SymbolKind, key: LevelKey },
    #[error("alphabet for level {0} is full")]
    AlphabetFull(SymbolKind),
    #[error("time interval {0} is below one minute")]
    NonPositiveInterval(f64),
    #[error("alphabet sidecar: {0}")]
    Sidecar(String),
}
