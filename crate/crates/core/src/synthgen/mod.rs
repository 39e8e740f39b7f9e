//! Synthetic mobility world with known structure.
//!
//! Agents live near a home station and usually commute through the next
//! station along and the station nearest their workplace, sometimes stopping
//! at the leisure spot by their home station instead. Movement is a
//! semi-Markov walk over anchor roles. Weekends multiply the odds of leisure
//! destinations, and age scales dwell times. Output goes through the same CSV
//! formats the ingestion path reads.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_center, encode_cell, BoundingBox, GeoPoint, LevelAlphabet};
use crate::corpus::{
    AgeBand, AttributeSet, DayTrajectory, DayType, EnvironmentRow, Gender, HomeFlag, PingRecord, Stop, Weather,
};
use crate::eval::haversine_km;

pub const N_ROLES: usize = 8;
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Home,
    Hub,
    Transfer,
    WorkStation,
    Work,
    Leisure1,
    Leisure2,
    Leisure3,
}

impl Role {
    pub const ALL: [Role; N_ROLES] =
        [Role::Home, Role::Hub, Role::Transfer, Role::WorkStation, Role::Work, Role::Leisure1, Role::Leisure2, Role::Leisure3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_leisure(self) -> bool {
        matches!(self, Role::Leisure1 | Role::Leisure2 | Role::Leisure3)
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("transition row {0:?} does not sum to 1")]
    TransitionRow(Role),
    #[error("invalid world configuration: {0}")]
    Config(String),
}

/// Lognormal dwell: median minutes and log-space spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dwell {
    pub median_minutes: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub version: u32,
    pub center_lat: f64,
    pub center_lon: f64,
    pub n_stations: usize,
    pub station_radius_km: f64,
    pub n_work_pois: usize,
    pub n_leisure_pois: usize,
    pub poi_radius_km: f64,
    pub home_station_min_m: f64,
    pub home_station_max_m: f64,
    /// Row-stochastic matrix over `Role::ALL`.
    pub transitions: Vec<Vec<f64>>,
    /// Multiplier applied to leisure columns on weekends before renormalizing.
    pub weekend_leisure_multiplier: f64,
    /// Dwell per role, indexed like `Role::ALL`.
    pub dwell: Vec<Dwell>,
    pub dwell_floor_minutes: u32,
    /// Dwell median multipliers for the three age bands.
    pub age_dwell_scale: [f64; 3],
    pub departure_mean_minutes: f64,
    pub departure_sd_minutes: f64,
    pub departure_min_minutes: u32,
    pub departure_max_minutes: u32,
    pub target_away_mean_minutes: f64,
    pub target_away_sd_minutes: f64,
    pub p_temp_home: f64,
    pub return_via_hub: bool,
    pub travel_speed_kmh: f64,
    pub travel_overhead_minutes: f64,
    pub gender_known: f64,
    pub age_known: f64,
    pub home_known: f64,
    pub work_known: f64,
    pub city_radius_km: f64,
    pub start_date: NaiveDate,
    pub night_ping_hours: Vec<u32>,
    pub home_jitter_m: f64,
    pub stop_jitter_m: f64,
}

fn default_transitions() -> Vec<Vec<f64>> {
    // Columns: Home, Hub, Transfer, WorkStation, Work, Leisure1..3.
    vec![
        vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.65, 0.0, 0.0, 0.35, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        vec![0.05, 0.0, 0.0, 0.55, 0.0, 0.3, 0.05, 0.05],
        vec![0.15, 0.0, 0.0, 0.0, 0.65, 0.0, 0.1, 0.1],
        vec![0.15, 0.0, 0.0, 0.0, 0.65, 0.1, 0.0, 0.1],
        vec![0.15, 0.0, 0.0, 0.0, 0.65, 0.1, 0.1, 0.0],
    ]
}

impl Default for WorldConfig {
    fn default() -> Self {
        let d = |m: f64, s: f64| Dwell { median_minutes: m, sigma: s };
        Self {
            version: CONFIG_VERSION,
            center_lat: 35.65,
            center_lon: 139.90,
            n_stations: 60,
            station_radius_km: 20.0,
            n_work_pois: 40,
            n_leisure_pois: 40,
            poi_radius_km: 25.0,
            home_station_min_m: 300.0,
            home_station_max_m: 1200.0,
            transitions: default_transitions(),
            weekend_leisure_multiplier: 5.0,
            dwell: vec![
                d(60.0, 0.5),
                d(15.0, 0.5),
                d(15.0, 0.5),
                d(15.0, 0.5),
                d(150.0, 0.5),
                d(60.0, 0.5),
                d(60.0, 0.5),
                d(60.0, 0.5),
            ],
            dwell_floor_minutes: 10,
            age_dwell_scale: [0.9, 1.0, 1.15],
            departure_mean_minutes: 480.0,
            departure_sd_minutes: 45.0,
            departure_min_minutes: 330,
            departure_max_minutes: 660,
            target_away_mean_minutes: 690.0,
            target_away_sd_minutes: 60.0,
            p_temp_home: 0.3,
            return_via_hub: true,
            travel_speed_kmh: 30.0,
            travel_overhead_minutes: 5.0,
            gender_known: 0.71,
            age_known: 0.64,
            home_known: 0.88,
            work_known: 0.87,
            city_radius_km: 10.0,
            start_date: NaiveDate::from_ymd_opt(2022, 8, 1).expect("valid date"),
            night_ping_hours: vec![1, 3, 5],
            home_jitter_m: 40.0,
            stop_jitter_m: 20.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.transitions.len() != N_ROLES || self.transitions.iter().any(|r| r.len() != N_ROLES) {
            return bad("transition matrix must be 8x8");
        }
        for (role, row) in Role::ALL.iter().zip(&self.transitions) {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(SynthError::TransitionRow(*role));
            }
        }
        if self.dwell.len() != N_ROLES || self.dwell.iter().any(|d| d.median_minutes <= 0.0 || d.sigma < 0.0) {
            return bad("dwell needs a positive median per role");
        }
        if self.dwell_floor_minutes < 10 {
            return bad("dwell floor must be at least 10 minutes");
        }
        if self.weekend_leisure_multiplier <= 0.0 {
            return bad("weekend multiplier must be positive");
        }
        if self.departure_min_minutes > self.departure_max_minutes || self.departure_max_minutes >= 1440 {
            return bad("departure window");
        }
        if self.n_stations < 3 || self.n_work_pois == 0 || self.n_leisure_pois < 3 {
            return bad("need at least 3 stations, 1 work place and 3 leisure places");
        }
        if self.night_ping_hours.iter().any(|&h| h >= 5) && self.departure_min_minutes < 5 * 60 + 30 {
            return bad("night pings must precede the earliest departure");
        }
        Ok(())
    }

    /// Transition matrix for a day type.
    pub fn matrix(&self, day: DayType) -> Vec<Vec<f64>> {
        let mut m = self.transitions.clone();
        if day == DayType::Weekend {
            for row in &mut m {
                for (j, p) in row.iter_mut().enumerate() {
                    if Role::ALL[j].is_leisure() {
                        *p *= self.weekend_leisure_multiplier;
                    }
                }
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.iter_mut().for_each(|p| *p /= s);
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub id: String,
    pub attrs: AttributeSet,
    pub age_band: AgeBand,
    /// Anchor point per role, indexed like `Role::ALL`.
    pub anchors: [GeoPoint; N_ROLES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub seed: u64,
    pub bbox: BoundingBox,
    pub stations: Vec<GeoPoint>,
    pub work_pois: Vec<GeoPoint>,
    pub leisure_pois: Vec<GeoPoint>,
    pub agents: Vec<AgentSpec>,
}

/// Point at `dist_km` and `bearing` (radians from north) from `from`, using
/// a local flat-earth approximation.
fn offset(from: &GeoPoint, dist_km: f64, bearing: f64) -> (f64, f64) {
    let dlat = dist_km * bearing.cos() / 111.195;
    let dlon = dist_km * bearing.sin() / (111.195 * from.lat().to_radians().cos());
    (from.lat() + dlat, from.lon() + dlon)
}

/// Center of the level-5 cell containing the point.
fn snap(lat: f64, lon: f64, bbox: &BoundingBox) -> Result<GeoPoint, SynthError> {
    let p = GeoPoint::new(lat, lon).map_err(|e| SynthError::Config(e.to_string()))?;
    let cell = encode_cell(&p, 5, bbox).map_err(|e| SynthError::Config(e.to_string()))?;
    Ok(decode_center(&cell))
}

fn uniform_in_disk<R: Rng>(rng: &mut R, center: &GeoPoint, radius_km: f64, bbox: &BoundingBox) -> Result<GeoPoint, SynthError> {
    let r = radius_km * rng.gen::<f64>().sqrt();
    let (lat, lon) = offset(center, r, rng.gen_range(0.0..std::f64::consts::TAU));
    snap(lat, lon, bbox)
}

fn nearest(points: &[GeoPoint], to: &GeoPoint, exclude: &[usize]) -> usize {
    (0..points.len())
        .filter(|i| !exclude.contains(i))
        .min_by(|&a, &b| haversine_km(&points[a], to).total_cmp(&haversine_km(&points[b], to)))
        .expect("non-empty candidate set")
}

fn world_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const WORLD_STREAM: u64 = 0;
const ENV_STREAM: u64 = 1;
const AGENT_STREAM_BASE: u64 = 1 << 32;
const HOME_PLACEMENT_TRIES: usize = 100;
const HOME_CLEARANCE_M: f64 = 250.0;

/// Places stations, workplaces, leisure places and agents.
pub fn build_world(config: &WorldConfig, n_agents: usize, seed: u64) -> Result<World, SynthError> {
    config.validate()?;
    let bbox = BoundingBox::JAPAN;
    let center = GeoPoint::new(config.center_lat, config.center_lon).map_err(|e| SynthError::Config(e.to_string()))?;
    let mut rng = world_rng(seed, WORLD_STREAM);
    let stations =
        (0..config.n_stations).map(|_| uniform_in_disk(&mut rng, &center, config.station_radius_km, &bbox)).collect::<Result<Vec<_>, _>>()?;
    let work_pois =
        (0..config.n_work_pois).map(|_| uniform_in_disk(&mut rng, &center, config.poi_radius_km, &bbox)).collect::<Result<Vec<_>, _>>()?;
    let leisure_pois = (0..config.n_leisure_pois)
        .map(|_| uniform_in_disk(&mut rng, &center, config.poi_radius_km, &bbox))
        .collect::<Result<Vec<_>, _>>()?;
    let mut agents = Vec::with_capacity(n_agents);
    for a in 0..n_agents {
        let hub_i = rng.gen_range(0..stations.len());
        let hub = stations[hub_i];
        let work = work_pois[rng.gen_range(0..work_pois.len())];
        let ws_i = nearest(&stations, &work, &[hub_i]);
        let transfer_i = nearest(&stations, &hub, &[hub_i, ws_i]);
        let l1 = nearest(&leisure_pois, &hub, &[]);
        let l2 = loop {
            let i = rng.gen_range(0..leisure_pois.len());
            if i != l1 {
                break i;
            }
        };
        let l3 = loop {
            let i = rng.gen_range(0..leisure_pois.len());
            if i != l1 && i != l2 {
                break i;
            }
        };
        let away = [hub, stations[transfer_i], stations[ws_i], work, leisure_pois[l1], leisure_pois[l2], leisure_pois[l3]];
        // Keep every other anchor well outside the home privacy radius.
        let mut home = hub;
        for _ in 0..HOME_PLACEMENT_TRIES {
            let d_km = rng.gen_range(config.home_station_min_m..=config.home_station_max_m) / 1000.0;
            let (hl, hn) = offset(&hub, d_km, rng.gen_range(0.0..std::f64::consts::TAU));
            home = snap(hl, hn, &bbox)?;
            if away.iter().all(|p| haversine_km(p, &home) * 1000.0 > HOME_CLEARANCE_M) {
                break;
            }
        }
        let age_years: u32 = rng.gen_range(18..=85);
        let age_band = AgeBand::from_years(age_years);
        let gender = if rng.gen_bool(0.5) { Gender::Male } else { Gender::Female };
        let home_in = haversine_km(&home, &center) <= config.city_radius_km;
        let work_in = haversine_km(&work, &center) <= config.city_radius_km;
        let attrs = AttributeSet {
            gender: rng.gen_bool(config.gender_known).then_some(gender),
            age: rng.gen_bool(config.age_known).then_some(age_band),
            home_in_city: rng.gen_bool(config.home_known).then_some(home_in),
            work_in_city: rng.gen_bool(config.work_known).then_some(work_in),
        };
        agents.push(AgentSpec {
            id: format!("agent{a:05}"),
            attrs,
            age_band,
            anchors: [home, away[0], away[1], away[2], away[3], away[4], away[5], away[6]],
        });
    }
    Ok(World { config: config.clone(), seed, bbox, stations, work_pois, leisure_pois, agents })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visit {
    pub role: Role,
    /// Arrival, minutes since midnight.
    pub minute: u32,
}

/// One simulated day: departure, visits including home returns, and every
/// transition drawn from the matrix (before time limits override it).
#[derive(Debug, Clone, PartialEq)]
pub struct SimDay {
    pub departure: u32,
    pub visits: Vec<Visit>,
    pub draws: Vec<(Role, Role)>,
}

impl SimDay {
    /// Away time from departure to the final home arrival.
    pub fn away_minutes(&self) -> u32 {
        self.visits.last().map_or(0, |v| v.minute - self.departure)
    }

    /// Day trajectory of the away stops as the corpus would record it.
    pub fn to_day_trajectory(&self, agent: &AgentSpec, alphabet: &mut LevelAlphabet) -> Option<DayTrajectory> {
        let away: Vec<(usize, &Visit)> = self.visits.iter().enumerate().filter(|(_, v)| v.role != Role::Home).collect();
        if away.is_empty() {
            return None;
        }
        let t0 = away[0].1.minute;
        let mut stops = Vec::with_capacity(away.len());
        for (k, &(i, v)) in away.iter().enumerate() {
            let code = encode_cell(&agent.anchors[v.role.index()], 5, alphabet.bbox()).ok()?;
            let flag = if k + 1 == away.len() {
                HomeFlag::FinalHome
            } else if self.visits.get(i + 1).is_some_and(|n| n.role == Role::Home) {
                HomeFlag::TempHome
            } else {
                HomeFlag::NotHome
            };
            stops.push(Stop { cell: alphabet.register_cell(&code).ok()?, offset: v.minute - t0, flag });
        }
        Some(DayTrajectory { t0, stops })
    }
}

fn sample_row<R: Rng>(row: &[f64], rng: &mut R) -> Role {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = j;
            if u < acc {
                return Role::ALL[j];
            }
        }
    }
    Role::ALL[last]
}

/// Latest minute a final home arrival may take.
const LAST_MINUTE: u32 = 1439;

/// Simulates one day of `agent`.
pub fn simulate_day<R: Rng>(world: &World, agent: &AgentSpec, day: DayType, rng: &mut R) -> SimDay {
    let cfg = &world.config;
    let m = cfg.matrix(day);
    let age_scale = cfg.age_dwell_scale[match agent.age_band {
        AgeBand::Under29 => 0,
        AgeBand::From30To59 => 1,
        AgeBand::Over60 => 2,
    }];
    let dwell = |role: Role, rng: &mut R| -> u32 {
        let d = cfg.dwell[role.index()];
        let median = d.median_minutes * if role == Role::Home { 1.0 } else { age_scale };
        let x = LogNormal::new(median.ln(), d.sigma).map_or(median, |ln| ln.sample(rng));
        (x.round() as u32).max(cfg.dwell_floor_minutes)
    };
    let travel = |a: Role, b: Role| -> u32 {
        let km = haversine_km(&agent.anchors[a.index()], &agent.anchors[b.index()]);
        (cfg.travel_overhead_minutes + km / cfg.travel_speed_kmh * 60.0).round() as u32
    };
    let departure = Normal::new(cfg.departure_mean_minutes, cfg.departure_sd_minutes)
        .map_or(cfg.departure_mean_minutes, |n| n.sample(rng))
        .round()
        .clamp(cfg.departure_min_minutes as f64, cfg.departure_max_minutes as f64) as u32;
    let target_away = Normal::new(cfg.target_away_mean_minutes, cfg.target_away_sd_minutes)
        .map_or(cfg.target_away_mean_minutes, |n| n.sample(rng))
        .max(60.0) as u32;
    // Leave room for the trip back before midnight.
    let target = (departure + target_away).min(LAST_MINUTE - 180);

    let mut visits: Vec<Visit> = Vec::new();
    let mut draws = Vec::new();
    let mut role = Role::Home;
    let mut t = departure;
    let mut away_stops = 0;
    loop {
        let next = sample_row(&m[role.index()], rng);
        draws.push((role, next));
        let arrival = t + travel(role, next).max(1);
        if next == Role::Home {
            if arrival < target && away_stops > 0 && rng.gen_bool(cfg.p_temp_home) {
                visits.push(Visit { role: Role::Home, minute: arrival });
                t = arrival + dwell(Role::Home, rng);
                role = Role::Home;
                continue;
            }
            visits.push(Visit { role: Role::Home, minute: arrival.min(LAST_MINUTE) });
            break;
        }
        if arrival >= target {
            let mut at = role;
            if cfg.return_via_hub && role != Role::Hub && role != Role::Home {
                let hub_arrival = t + travel(role, Role::Hub).max(1);
                let gap_ok = visits.last().map_or(true, |v| hub_arrival >= v.minute + cfg.dwell_floor_minutes);
                if gap_ok && hub_arrival < LAST_MINUTE - 30 {
                    visits.push(Visit { role: Role::Hub, minute: hub_arrival });
                    t = hub_arrival + dwell(Role::Hub, rng);
                    at = Role::Hub;
                }
            }
            let home_arrival = (t + travel(at, Role::Home).max(1)).min(LAST_MINUTE);
            visits.push(Visit { role: Role::Home, minute: home_arrival.max(visits.last().map_or(0, |v| v.minute + 1)) });
            break;
        }
        visits.push(Visit { role: next, minute: arrival });
        away_stops += 1;
        t = arrival + dwell(next, rng);
        role = next;
    }
    SimDay { departure, visits, draws }
}

pub fn day_type(date: NaiveDate) -> DayType {
    match date.weekday() {
        Weekday::Sat | Weekday::Sun => DayType::Weekend,
        _ => DayType::Weekday,
    }
}

/// Per-day environment with random temperature, weather and case counts.
pub fn environment(config: &WorldConfig, n_days: usize, seed: u64) -> Vec<EnvironmentRow> {
    let mut rng = world_rng(seed, ENV_STREAM);
    (0..n_days)
        .map(|d| {
            let date = config.start_date + Duration::days(d as i64);
            let temp: f64 = Normal::new(28.0, 3.0).expect("valid normal").sample(&mut rng);
            let u: f64 = rng.gen();
            let weather = if u < 0.5 {
                Weather::Sunny
            } else if u < 0.8 {
                Weather::Cloudy
            } else {
                Weather::Rainy
            };
            EnvironmentRow {
                date,
                day_type: day_type(date),
                temp_c: (temp * 10.0).round() / 10.0,
                weather,
                covid_count: rng.gen_range(10_000..40_000),
            }
        })
        .collect()
}

fn jitter<R: Rng>(p: &GeoPoint, max_m: f64, rng: &mut R) -> GeoPoint {
    let r = max_m / 1000.0 * rng.gen::<f64>().sqrt();
    let (lat, lon) = offset(p, r, rng.gen_range(0.0..std::f64::consts::TAU));
    GeoPoint::new(lat, lon).expect("small offset stays valid")
}

fn at_minute(date: NaiveDate, minute: u32) -> NaiveDateTime {
    date.and_hms_opt(minute / 60, minute % 60, 0).expect("minute within the day")
}

/// Random generator for one agent-day, independent of every other agent-day.
pub fn agent_day_rng(seed: u64, agent: usize, day: usize) -> ChaCha8Rng {
    world_rng(seed, AGENT_STREAM_BASE + (agent as u64) * 100_000 + day as u64)
}

/// Pings of one agent-day: night pings at home, one ping per away arrival,
/// and a home ping on every return.
pub fn day_pings<R: Rng>(world: &World, agent: &AgentSpec, date: NaiveDate, day: &SimDay, rng: &mut R) -> Vec<PingRecord> {
    let cfg = &world.config;
    let home = agent.anchors[Role::Home.index()];
    let mut out = Vec::new();
    let mut push = |minute: u32, point: GeoPoint| {
        out.push(PingRecord { device_id: agent.id.clone(), time: at_minute(date, minute), point, attrs: agent.attrs });
    };
    for &h in &cfg.night_ping_hours {
        let minute = h * 60 + rng.gen_range(0..20);
        push(minute, jitter(&home, cfg.home_jitter_m, rng));
    }
    for v in &day.visits {
        let (anchor, max_m) = match v.role {
            Role::Home => (home, cfg.home_jitter_m),
            r => (agent.anchors[r.index()], cfg.stop_jitter_m),
        };
        push(v.minute, jitter(&anchor, max_m, rng));
    }
    out
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub world: World,
    pub environment: Vec<EnvironmentRow>,
    pub pings: Vec<PingRecord>,
}

/// Simulates every agent for `n_days` days from the configured start date.
pub fn generate_corpus(config: &WorldConfig, n_agents: usize, n_days: usize, seed: u64) -> Result<SynthCorpus, SynthError> {
    let world = build_world(config, n_agents, seed)?;
    let env = environment(config, n_days, seed);
    let mut pings = Vec::new();
    for (a, agent) in world.agents.iter().enumerate() {
        for (d, row) in env.iter().enumerate() {
            let mut rng = agent_day_rng(seed, a, d);
            let day = simulate_day(&world, agent, row.day_type, &mut rng);
            pings.extend(day_pings(&world, agent, row.date, &day, &mut rng));
        }
    }
    Ok(SynthCorpus { world, environment: env, pings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_world(n: usize) -> World {
        build_world(&WorldConfig::default(), n, 17).unwrap()
    }

    #[test]
    fn seed_stable_and_in_bounds() {
        let a = small_world(20);
        assert_eq!(a, small_world(20));
        assert_ne!(a.agents, build_world(&WorldConfig::default(), 20, 18).unwrap().agents);
        for ag in &a.agents {
            for p in &ag.anchors {
                assert!(a.bbox.contains(p));
            }
            let d = haversine_km(&ag.anchors[0], &ag.anchors[1]) * 1000.0;
            assert!((250.0..1400.0).contains(&d), "{d}");
        }
        assert!(build_world(&WorldConfig::default(), 0, 1).unwrap().agents.is_empty());
    }

    #[test]
    fn rows_sum_to_one_for_both_day_types() {
        let c = WorldConfig::default();
        for dt in [DayType::Weekday, DayType::Weekend] {
            for row in c.matrix(dt) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let mut bad = c.clone();
        bad.transitions[2][3] = 0.5;
        assert!(matches!(bad.validate(), Err(SynthError::TransitionRow(Role::Transfer))));
    }

    #[test]
    fn days_satisfy_invariants() {
        let w = small_world(30);
        let mut alphabet = LevelAlphabet::default();
        for (a, agent) in w.agents.iter().enumerate() {
            for d in 0..14 {
                let dt = if d % 7 >= 5 { DayType::Weekend } else { DayType::Weekday };
                let day = simulate_day(&w, agent, dt, &mut agent_day_rng(5, a, d));
                assert!(day.visits.last().unwrap().minute <= LAST_MINUTE);
                assert_eq!(day.visits.last().unwrap().role, Role::Home);
                let traj = day.to_day_trajectory(agent, &mut alphabet).unwrap();
                traj.validate(10).unwrap();
            }
        }
    }

    #[test]
    fn forced_commute_gives_work_then_home() {
        let mut c = WorldConfig::default();
        let mut t = vec![vec![0.0; N_ROLES]; N_ROLES];
        for row in t.iter_mut() {
            row[Role::Home.index()] = 1.0;
        }
        t[Role::Home.index()] = vec![0.0; N_ROLES];
        t[Role::Home.index()][Role::Work.index()] = 1.0;
        c.transitions = t;
        c.p_temp_home = 0.0;
        c.return_via_hub = false;
        let w = build_world(&c, 10, 3).unwrap();
        for (a, agent) in w.agents.iter().enumerate() {
            let day = simulate_day(&w, agent, DayType::Weekday, &mut agent_day_rng(1, a, 0));
            let roles: Vec<Role> = day.visits.iter().map(|v| v.role).collect();
            assert_eq!(roles, vec![Role::Work, Role::Home]);
        }
    }

    #[test]
    fn huge_weekend_multiplier_always_visits_leisure() {
        let mut c = WorldConfig::default();
        c.weekend_leisure_multiplier = 1e9;
        c.dwell.iter_mut().for_each(|d| d.sigma = 0.0);
        let w = build_world(&c, 20, 4).unwrap();
        for (a, agent) in w.agents.iter().enumerate() {
            for d in 0..10 {
                let day = simulate_day(&w, agent, DayType::Weekend, &mut agent_day_rng(2, a, d));
                assert!(day.visits.iter().any(|v| v.role.is_leisure()), "{day:?}");
            }
        }
    }

    #[test]
    fn mean_away_time_near_thirteen_hours() {
        let w = small_world(200);
        let mut total = 0u64;
        let mut n = 0u64;
        for (a, agent) in w.agents.iter().enumerate() {
            for d in 0..35 {
                let dt = if d % 7 >= 5 { DayType::Weekend } else { DayType::Weekday };
                total += simulate_day(&w, agent, dt, &mut agent_day_rng(8, a, d)).away_minutes() as u64;
                n += 1;
            }
        }
        let mean_h = total as f64 / n as f64 / 60.0;
        assert!((mean_h - 13.0).abs() <= 1.0, "{mean_h}");
    }

    #[test]
    fn missingness_rates() {
        let w = small_world(4000);
        let frac = |f: &dyn Fn(&AttributeSet) -> bool| w.agents.iter().filter(|a| f(&a.attrs)).count() as f64 / 4000.0;
        assert!((frac(&|a| a.gender.is_some()) - 0.71).abs() < 0.03);
        assert!((frac(&|a| a.age.is_some()) - 0.64).abs() < 0.03);
        assert!((frac(&|a| a.home_in_city.is_some()) - 0.88).abs() < 0.03);
        assert!((frac(&|a| a.work_in_city.is_some()) - 0.87).abs() < 0.03);
    }

    #[test]
    fn environment_follows_calendar() {
        let env = environment(&WorldConfig::default(), 14, 1);
        assert_eq!(env[0].date.weekday(), Weekday::Mon);
        assert_eq!(env[5].day_type, DayType::Weekend);
        assert_eq!(env[6].day_type, DayType::Weekend);
        assert_eq!(env[7].day_type, DayType::Weekday);
    }
}
