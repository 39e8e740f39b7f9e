//! Home inference, filtering, segmentation, serialization and splitting
//! wired together.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::codec::LevelAlphabet;

use super::conditioning::EnvironmentSet;
use super::ingest::{infer_home, privacy_filter, segment_days, DeviceStream, PRIVACY_RADIUS_M};
use super::line::serialize;
use super::records::DayRecord;
use super::split::{split, SplitManifest};
use super::CorpusError;

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub min_gap: u32,
    pub privacy_radius_m: f64,
    pub split_ratio: u32,
    pub seed: u64,
    /// Attach environment and attribute tokens to each line.
    pub conditioned: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { min_gap: 10, privacy_radius_m: PRIVACY_RADIUS_M, split_ratio: 4, seed: 0, conditioned: true }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub devices: usize,
    pub devices_without_night: usize,
    pub devices_without_days: usize,
    pub days: usize,
}

#[derive(Debug, Clone)]
pub struct BuiltCorpus {
    pub alphabet: LevelAlphabet,
    pub manifest: SplitManifest,
    pub train: Vec<DayRecord>,
    pub test: Vec<DayRecord>,
    pub stats: BuildStats,
}

/// Turns ingested device streams into frozen-alphabet train and test records.
/// Devices are processed in id order and days in date order, so the alphabet
/// and outputs are deterministic.
pub fn build_corpus(
    devices: &[DeviceStream],
    environment: &BTreeMap<NaiveDate, EnvironmentSet>,
    mut alphabet: LevelAlphabet,
    opts: &BuildOptions,
) -> Result<BuiltCorpus, CorpusError> {
    let mut stats = BuildStats { devices: devices.len(), ..Default::default() };
    let mut per_device: Vec<(&DeviceStream, Vec<(NaiveDate, super::line::DayTrajectory)>)> = Vec::new();
    let mut sorted: Vec<&DeviceStream> = devices.iter().collect();
    sorted.sort_by(|a, b| a.device_id.cmp(&b.device_id));
    for dev in sorted {
        let home = match infer_home(&dev.pings) {
            Ok(h) => h,
            Err(CorpusError::NoNightData) => {
                stats.devices_without_night += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let events = privacy_filter(&dev.pings, &home, opts.privacy_radius_m);
        let days = segment_days(&events, &mut alphabet, opts.min_gap)?;
        if days.is_empty() {
            stats.devices_without_days += 1;
            continue;
        }
        per_device.push((dev, days));
    }
    alphabet.freeze();
    let ids: Vec<String> = per_device.iter().map(|(d, _)| d.device_id.clone()).collect();
    let manifest = split(&ids, opts.split_ratio, opts.seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (dev, days) in per_device {
        for (date, day) in days {
            let (env, attrs) = if opts.conditioned {
                let env = environment
                    .get(&date)
                    .ok_or_else(|| CorpusError::Environment(format!("no environment row for {date}")))?;
                (Some(env), dev.attrs)
            } else {
                (None, Default::default())
            };
            let line = serialize(&day, env, &attrs, &alphabet)?;
            let rec = DayRecord {
                device_id: dev.device_id.clone(),
                date,
                t0: day.t0,
                offsets: day.stops.iter().map(|s| s.offset).collect(),
                line,
            };
            stats.days += 1;
            if manifest.is_test(&dev.device_id) {
                test.push(rec);
            } else {
                train.push(rec);
            }
        }
    }
    Ok(BuiltCorpus { alphabet, manifest, train, test, stats })
}
