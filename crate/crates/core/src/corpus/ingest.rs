//! Ping ingestion, home inference, privacy filtering and day segmentation.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime, Timelike};

use crate::codec::{decode_center, encode_cell, BoundingBox, GeoPoint, GridCode, LevelAlphabet};
use crate::eval::haversine_km;

use super::conditioning::{AgeBand, AttributeSet, Gender};
use super::line::{DayTrajectory, HomeFlag, Stop};
use super::CorpusError;

pub const PING_HEADER: [&str; 8] = ["device_id", "timestamp", "lat", "lon", "gender", "age", "home_area", "work_area"];
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

/// Fraction of malformed rows above which ingestion aborts.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

/// Radius around the inferred home inside which pings are dropped.
pub const PRIVACY_RADIUS_M: f64 = 100.0;

/// Night window used for home inference: `[00:00, 06:00)`.
const NIGHT_END_HOUR: u32 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct PingRecord {
    pub device_id: String,
    pub time: NaiveDateTime,
    pub point: GeoPoint,
    pub attrs: AttributeSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ping {
    pub time: NaiveDateTime,
    pub point: GeoPoint,
    pub cell: GridCode,
}

/// Time-ordered pings of one device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceStream {
    pub device_id: String,
    pub attrs: AttributeSet,
    pub pings: Vec<Ping>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub rows: usize,
    pub accepted: usize,
    pub malformed: usize,
    pub outside_bbox: usize,
    /// Pings collapsed because another ping of the device had the same minute.
    pub duplicates: usize,
}

fn parse_gender(s: &str) -> Result<Option<Gender>, ()> {
    match s.to_ascii_lowercase().as_str() {
        "" | "unknown" => Ok(None),
        "m" | "male" => Ok(Some(Gender::Male)),
        "f" | "female" => Ok(Some(Gender::Female)),
        _ => Err(()),
    }
}

fn parse_age(s: &str) -> Result<Option<AgeBand>, ()> {
    match s.to_ascii_lowercase().as_str() {
        "" | "unknown" => Ok(None),
        "under29" => Ok(Some(AgeBand::Under29)),
        "30to59" => Ok(Some(AgeBand::From30To59)),
        "over60" => Ok(Some(AgeBand::Over60)),
        other => other.parse::<u32>().map(|y| Some(AgeBand::from_years(y))).map_err(|_| ()),
    }
}

fn parse_area(s: &str) -> Result<Option<bool>, ()> {
    match s.to_ascii_lowercase().as_str() {
        "" | "unknown" => Ok(None),
        "in_city" | "in" | "yes" => Ok(Some(true)),
        "outside" | "out" | "no" => Ok(Some(false)),
        _ => Err(()),
    }
}

fn age_label(a: AgeBand) -> &'static str {
    match a {
        AgeBand::Under29 => "under29",
        AgeBand::From30To59 => "30to59",
        AgeBand::Over60 => "over60",
    }
}

fn parse_row(rec: &csv::StringRecord) -> Result<PingRecord, ()> {
    if rec.len() != PING_HEADER.len() {
        return Err(());
    }
    let device_id = rec[0].to_string();
    if device_id.is_empty() {
        return Err(());
    }
    let time = NaiveDateTime::parse_from_str(&rec[1], TIMESTAMP_FORMAT).map_err(|_| ())?;
    let lat: f64 = rec[2].parse().map_err(|_| ())?;
    let lon: f64 = rec[3].parse().map_err(|_| ())?;
    let point = GeoPoint::new(lat, lon).map_err(|_| ())?;
    let attrs = AttributeSet {
        gender: parse_gender(&rec[4])?,
        age: parse_age(&rec[5])?,
        home_in_city: parse_area(&rec[6])?,
        work_in_city: parse_area(&rec[7])?,
    };
    Ok(PingRecord { device_id, time, point, attrs })
}

/// Reads a ping CSV into per-device streams ordered by device id.
///
/// Rows are sorted by time; pings sharing a minute collapse to the first one
/// read. Malformed rows are skipped and counted; if more than 10% of rows are
/// malformed the whole read fails.
pub fn ingest<R: Read>(reader: R, bbox: &BoundingBox) -> Result<(Vec<DeviceStream>, IngestSummary), CorpusError> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rd.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != PING_HEADER {
        return Err(CorpusError::Header(format!("ping CSV header {headers:?}")));
    }
    let mut summary = IngestSummary::default();
    let mut by_device: BTreeMap<String, (AttributeSet, Vec<Ping>)> = BTreeMap::new();
    for rec in rd.records() {
        summary.rows += 1;
        let Ok(rec) = rec else {
            summary.malformed += 1;
            continue;
        };
        let Ok(row) = parse_row(&rec) else {
            summary.malformed += 1;
            continue;
        };
        let Ok(cell) = encode_cell(&row.point, 5, bbox) else {
            summary.outside_bbox += 1;
            continue;
        };
        let entry = by_device.entry(row.device_id).or_insert_with(|| (row.attrs, Vec::new()));
        entry.0.merge_missing(&row.attrs);
        entry.1.push(Ping { time: row.time, point: row.point, cell });
    }
    if summary.rows > 0 && summary.malformed as f64 > MAX_MALFORMED_FRACTION * summary.rows as f64 {
        return Err(CorpusError::TooManyMalformed { malformed: summary.malformed, rows: summary.rows });
    }
    let mut out = Vec::with_capacity(by_device.len());
    for (device_id, (attrs, mut pings)) in by_device {
        pings.sort_by_key(|p| p.time);
        let before = pings.len();
        pings.dedup_by(|later, earlier| later.time == earlier.time);
        summary.duplicates += before - pings.len();
        summary.accepted += pings.len();
        out.push(DeviceStream { device_id, attrs, pings });
    }
    Ok((out, summary))
}

/// Writes pings in the ingestion CSV format.
pub fn write_pings<W: Write>(w: W, rows: impl IntoIterator<Item = PingRecord>) -> Result<(), CorpusError> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wr.write_record(PING_HEADER)?;
    let area = |a: Option<bool>| match a {
        Some(true) => "in_city",
        Some(false) => "outside",
        None => "",
    };
    for r in rows {
        wr.write_record([
            r.device_id.as_str(),
            &r.time.format(TIMESTAMP_FORMAT).to_string(),
            &format!("{:.6}", r.point.lat()),
            &format!("{:.6}", r.point.lon()),
            match r.attrs.gender {
                Some(Gender::Male) => "male",
                Some(Gender::Female) => "female",
                None => "",
            },
            r.attrs.age.map_or("", age_label),
            area(r.attrs.home_in_city),
            area(r.attrs.work_in_city),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Center of the level-5 cell where the device is most often seen at night.
/// Ties go to the smallest cell index tuple.
pub fn infer_home(pings: &[Ping]) -> Result<GeoPoint, CorpusError> {
    let mut counts: HashMap<GridCode, usize> = HashMap::new();
    for p in pings.iter().filter(|p| p.time.hour() < NIGHT_END_HOUR) {
        *counts.entry(p.cell).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(cell, _)| decode_center(&cell))
        .ok_or(CorpusError::NoNightData)
}

/// A ping kept after privacy filtering, or a marker where one was removed.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    Away(Ping),
    HomeVisit(NaiveDateTime),
}

/// Replaces every ping within `radius_m` of `home` by a home-visit marker.
pub fn privacy_filter(pings: &[Ping], home: &GeoPoint, radius_m: f64) -> Vec<StreamEvent> {
    pings
        .iter()
        .map(|p| {
            if haversine_km(&p.point, home) * 1000.0 <= radius_m {
                StreamEvent::HomeVisit(p.time)
            } else {
                StreamEvent::Away(p.clone())
            }
        })
        .collect()
}

fn minutes_between(a: NaiveDateTime, b: NaiveDateTime) -> u32 {
    (b - a).num_minutes().max(0) as u32
}

/// Splits a filtered stream into civil days.
///
/// A home marker after a stop flags that stop as a temporary return; the last
/// stop of every day is flagged as the final return whether or not a marker
/// follows it. Stops closer than `min_gap` minutes to the previous stop are
/// dropped, as are days with fewer than two stops. Cells and interval bins are
/// registered in `alphabet`.
pub fn segment_days(
    events: &[StreamEvent],
    alphabet: &mut LevelAlphabet,
    min_gap: u32,
) -> Result<Vec<(NaiveDate, DayTrajectory)>, CorpusError> {
    let mut by_day: BTreeMap<NaiveDate, Vec<&StreamEvent>> = BTreeMap::new();
    for ev in events {
        let date = match ev {
            StreamEvent::Away(p) => p.time.date(),
            StreamEvent::HomeVisit(t) => t.date(),
        };
        by_day.entry(date).or_default().push(ev);
    }
    let mut out = Vec::new();
    for (date, day_events) in by_day {
        let mut stops: Vec<(&Ping, HomeFlag)> = Vec::new();
        let mut home_since_last = false;
        for ev in day_events {
            match ev {
                StreamEvent::HomeVisit(_) => home_since_last = !stops.is_empty(),
                StreamEvent::Away(p) => {
                    if let Some((last, _)) = stops.last() {
                        if minutes_between(last.time, p.time) < min_gap {
                            continue;
                        }
                    }
                    if home_since_last {
                        stops.last_mut().expect("marker follows a stop").1 = HomeFlag::TempHome;
                        home_since_last = false;
                    }
                    stops.push((p, HomeFlag::NotHome));
                }
            }
        }
        if stops.len() < 2 {
            continue;
        }
        stops.last_mut().expect("non-empty").1 = HomeFlag::FinalHome;
        let first = stops[0].0.time;
        let t0 = first.hour() * 60 + first.minute();
        let mut day = DayTrajectory { t0, stops: Vec::with_capacity(stops.len()) };
        for (p, flag) in stops {
            let cell = alphabet.register_cell(&p.cell)?;
            day.stops.push(Stop { cell, offset: minutes_between(first, p.time), flag });
        }
        for gap in day.gaps() {
            alphabet.register_interval(crate::codec::discretize_interval(gap as f64)?)?;
        }
        out.push((date, day));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT).unwrap()
    }

    fn ping(time: &str, lat: f64, lon: f64) -> Ping {
        let point = GeoPoint::new(lat, lon).unwrap();
        Ping { time: t(time), point, cell: encode_cell(&point, 5, &BoundingBox::JAPAN).unwrap() }
    }

    const HEADER: &str = "device_id,timestamp,lat,lon,gender,age,home_area,work_area\n";

    #[test]
    fn dedup_and_sort() {
        let csv = format!(
            "{HEADER}a,2022-08-01T09:00,35.65,139.90,male,,,\n\
             a,2022-08-01T08:00,35.66,139.91,,,,\n\
             a,2022-08-01T09:00,35.65,139.90,,,,\n\
             b,2022-08-01T10:00,35.60,139.80,,42,in_city,outside\n"
        );
        let (devs, summary) = ingest(csv.as_bytes(), &BoundingBox::JAPAN).unwrap();
        assert_eq!(devs.len(), 2);
        assert_eq!(devs[0].pings.len(), 2);
        assert!(devs[0].pings[0].time < devs[0].pings[1].time);
        assert_eq!(summary.duplicates, 1);
        assert_eq!(devs[0].attrs.gender, Some(Gender::Male));
        assert_eq!(devs[1].attrs.age, Some(AgeBand::From30To59));
        assert_eq!(devs[1].attrs.work_in_city, Some(false));
    }

    #[test]
    fn malformed_rows_counted_then_abort() {
        let mut csv = String::from(HEADER);
        for i in 0..19 {
            csv.push_str(&format!("a,2022-08-01T{:02}:00,35.65,139.90,,,,\n", i));
        }
        csv.push_str("a,2022-08-01T20:00,91.0,139.90,,,,\n");
        let (_, s) = ingest(csv.as_bytes(), &BoundingBox::JAPAN).unwrap();
        assert_eq!((s.rows, s.malformed, s.accepted), (20, 1, 19));
        csv.push_str("a,garbage,35.0,139.0,,,,\n");
        csv.push_str("a,2022-08-01T21:00,35.0,,,,,\n");
        assert!(matches!(ingest(csv.as_bytes(), &BoundingBox::JAPAN), Err(CorpusError::TooManyMalformed { .. })));
    }

    #[test]
    fn home_is_modal_night_cell() {
        let pings = vec![
            ping("2022-08-01T01:00", 35.650, 139.900),
            ping("2022-08-02T01:00", 35.650, 139.900),
            ping("2022-08-03T01:00", 35.650, 139.900),
            ping("2022-08-04T01:00", 35.700, 139.700),
            ping("2022-08-05T01:00", 35.700, 139.700),
            ping("2022-08-05T12:00", 35.700, 139.700),
            ping("2022-08-05T13:00", 35.700, 139.700),
        ];
        let home = infer_home(&pings).unwrap();
        assert_eq!(encode_cell(&home, 5, &BoundingBox::JAPAN).unwrap(), pings[0].cell);
    }

    #[test]
    fn home_tie_prefers_smaller_tuple() {
        let pings = vec![ping("2022-08-01T01:00", 35.700, 139.700), ping("2022-08-02T01:00", 35.650, 139.900)];
        let home = infer_home(&pings).unwrap();
        let expected = pings.iter().map(|p| p.cell).min().unwrap();
        assert_eq!(encode_cell(&home, 5, &BoundingBox::JAPAN).unwrap(), expected);
        assert!(matches!(infer_home(&[ping("2022-08-01T12:00", 35.7, 139.7)]), Err(CorpusError::NoNightData)));
    }

    #[test]
    fn privacy_radius() {
        let home = GeoPoint::new(35.65, 139.90).unwrap();
        // 0.00045 deg of latitude is about 50 m, 0.00135 about 150 m.
        let pings = vec![ping("2022-08-01T09:00", 35.65045, 139.90), ping("2022-08-01T10:00", 35.65135, 139.90)];
        let ev = privacy_filter(&pings, &home, PRIVACY_RADIUS_M);
        assert!(matches!(ev[0], StreamEvent::HomeVisit(_)));
        assert!(matches!(ev[1], StreamEvent::Away(_)));
        let all_home = privacy_filter(&pings[..1], &home, PRIVACY_RADIUS_M);
        let mut a = LevelAlphabet::default();
        assert!(segment_days(&all_home, &mut a, 10).unwrap().is_empty());
    }

    #[test]
    fn segmentation_flags() {
        let h = |s: &str| StreamEvent::HomeVisit(t(s));
        let away = |s: &str, lat: f64| StreamEvent::Away(ping(s, lat, 139.9));
        let mut a = LevelAlphabet::default();
        // home -> A -> B -> home
        let ev = vec![h("2022-08-01T07:00"), away("2022-08-01T08:00", 35.60), away("2022-08-01T12:00", 35.62), h("2022-08-01T18:00")];
        let days = segment_days(&ev, &mut a, 10).unwrap();
        assert_eq!(days.len(), 1);
        let d = &days[0].1;
        assert_eq!(d.t0, 480);
        assert_eq!(d.stops.iter().map(|s| s.flag).collect::<Vec<_>>(), vec![HomeFlag::NotHome, HomeFlag::FinalHome]);
        assert_eq!(d.stops[1].offset, 240);
        // home -> A -> home -> B -> home
        let ev = vec![away("2022-08-02T08:00", 35.60), h("2022-08-02T12:00"), away("2022-08-02T14:00", 35.62), h("2022-08-02T18:00")];
        let d = &segment_days(&ev, &mut a, 10).unwrap()[0].1;
        assert_eq!(d.stops.iter().map(|s| s.flag).collect::<Vec<_>>(), vec![HomeFlag::TempHome, HomeFlag::FinalHome]);
        // single stop day dropped
        let ev = vec![away("2022-08-03T08:00", 35.60), h("2022-08-03T18:00")];
        assert!(segment_days(&ev, &mut a, 10).unwrap().is_empty());
        // day without a final return still ends with the final flag
        let ev = vec![away("2022-08-04T08:00", 35.60), away("2022-08-04T09:00", 35.62)];
        let d = &segment_days(&ev, &mut a, 10).unwrap()[0].1;
        assert_eq!(d.stops[1].flag, HomeFlag::FinalHome);
        d.validate(10).unwrap();
    }

    #[test]
    fn close_stops_dropped() {
        let mut a = LevelAlphabet::default();
        let ev = vec![
            StreamEvent::Away(ping("2022-08-01T08:00", 35.60, 139.9)),
            StreamEvent::Away(ping("2022-08-01T08:05", 35.61, 139.9)),
            StreamEvent::Away(ping("2022-08-01T08:30", 35.62, 139.9)),
        ];
        let d = &segment_days(&ev, &mut a, 10).unwrap()[0].1;
        assert_eq!(d.stops.len(), 2);
        assert_eq!(d.stops[1].offset, 30);
    }

    #[test]
    fn write_then_ingest() {
        let attrs = AttributeSet { gender: Some(Gender::Female), age: Some(AgeBand::Over60), home_in_city: None, work_in_city: Some(true) };
        let rows = vec![PingRecord { device_id: "d1".into(), time: t("2022-08-01T08:15"), point: GeoPoint::new(35.65, 139.9).unwrap(), attrs }];
        let mut buf = Vec::new();
        write_pings(&mut buf, rows.clone()).unwrap();
        let (devs, _) = ingest(&buf[..], &BoundingBox::JAPAN).unwrap();
        assert_eq!(devs[0].attrs, attrs);
        assert_eq!(devs[0].pings[0].time, rows[0].time);
    }
}
