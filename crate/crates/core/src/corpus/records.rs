//! Per-day records that keep minute-level truth next to each corpus line.

use std::io::{BufRead, Write};

use chrono::NaiveDate;

use crate::codec::{LevelAlphabet, DELIMITER};

use super::line::{parse, DayTrajectory, Stop, TrajectoryLine};
use super::CorpusError;

/// One serialized day with the device, date and exact arrival offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayRecord {
    pub device_id: String,
    pub date: NaiveDate,
    pub t0: u32,
    pub offsets: Vec<u32>,
    pub line: String,
}

impl DayRecord {
    pub fn parsed(&self, alphabet: &LevelAlphabet) -> Result<TrajectoryLine, CorpusError> {
        parse(&self.line, alphabet).map_err(|e| CorpusError::InvalidDay(e.to_string()))
    }

    /// Rebuilds the exact day from the line's cells and the stored offsets.
    pub fn day(&self, alphabet: &LevelAlphabet) -> Result<DayTrajectory, CorpusError> {
        let line = self.parsed(alphabet)?;
        if line.stops.len() != self.offsets.len() {
            return Err(CorpusError::InvalidDay(format!("{} stops but {} offsets", line.stops.len(), self.offsets.len())));
        }
        let stops = line
            .stops
            .into_iter()
            .zip(&self.offsets)
            .map(|(s, &offset)| Stop { cell: s.cell, offset, flag: s.flag })
            .collect();
        Ok(DayTrajectory { t0: self.t0, stops })
    }

    /// The line with any conditioning prefix removed.
    pub fn unconditioned_line(&self) -> &str {
        strip_conditioning(&self.line)
    }
}

/// Drops everything up to and including the `|` delimiter, if present.
pub fn strip_conditioning(line: &str) -> &str {
    match line.find(DELIMITER) {
        Some(i) => &line[i + DELIMITER.len_utf8()..],
        None => line,
    }
}

pub fn write_day_records<W: Write>(mut w: W, records: &[DayRecord]) -> std::io::Result<()> {
    for r in records {
        let offsets: Vec<String> = r.offsets.iter().map(u32::to_string).collect();
        writeln!(w, "{}\t{}\t{}\t{}\t{}", r.device_id, r.date, r.t0, offsets.join(","), r.line)?;
    }
    Ok(())
}

pub fn read_day_records<R: BufRead>(r: R) -> Result<Vec<DayRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = || CorpusError::InvalidDay(format!("day record {}", i + 1));
        let mut parts = line.splitn(5, '\t');
        let mut next = || parts.next().ok_or_else(bad);
        let device_id = next()?.to_string();
        let date = next()?.parse().map_err(|_| bad())?;
        let t0 = next()?.parse().map_err(|_| bad())?;
        let offsets = next()?.split(',').map(|s| s.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
        let text = next()?.to_string();
        out.push(DayRecord { device_id, date, t0, offsets, line: text });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_io() {
        let r = DayRecord {
            device_id: "d7".into(),
            date: NaiveDate::from_ymd_opt(2022, 8, 3).unwrap(),
            t0: 475,
            offsets: vec![0, 43, 600],
            line: "[Weekday]|abc".into(),
        };
        let mut buf = Vec::new();
        write_day_records(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert_eq!(read_day_records(&buf[..]).unwrap(), vec![r.clone()]);
        assert_eq!(r.unconditioned_line(), "abc");
        assert_eq!(strip_conditioning("abc"), "abc");
    }
}
