//! Ping ingestion, day segmentation, line serialization and splits.

mod build;
mod conditioning;
mod ingest;
mod line;
mod records;
mod split;

pub use build::{build_corpus, BuildOptions, BuildStats, BuiltCorpus};
pub use conditioning::{
    from_tokens, read_environment_csv, write_environment_csv, AgeBand, AttributeSet, CovidBand, DayType,
    EnvironmentRow, EnvironmentSet, Gender, SpecialCategory, SpecialToken, TempBand, Weather, ENVIRONMENT_HEADER,
};
pub use ingest::{
    infer_home, ingest, privacy_filter, segment_days, write_pings, DeviceStream, IngestSummary, Ping, PingRecord,
    StreamEvent, MAX_MALFORMED_FRACTION, PING_HEADER, PRIVACY_RADIUS_M, TIMESTAMP_FORMAT,
};
pub use line::{parse, serialize, DayTrajectory, HomeFlag, LineError, LineStop, Stop, TrajectoryLine};
pub use records::{read_day_records, strip_conditioning, write_day_records, DayRecord};
pub use split::{split, test_count, SplitManifest};

use thiserror::Error;

use crate::codec::CodecError;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid day: {0}")]
    InvalidDay(String),
    #[error("bad header: {0}")]
    Header(String),
    #[error("environment table: {0}")]
    Environment(String),
    #[error("{malformed} of {rows} rows malformed")]
    TooManyMalformed { malformed: usize, rows: usize },
    #[error("no night-time pings")]
    NoNightData,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
