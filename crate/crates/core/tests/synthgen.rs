use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use trajlang_core::codec::{encode_cell, GridCode, LevelAlphabet};
use trajlang_core::corpus::{
    build_corpus, ingest, read_environment_csv, write_environment_csv, write_pings, BuildOptions, DayTrajectory, DayType,
    HomeFlag,
};
use trajlang_core::synthgen::{
    agent_day_rng, build_world, generate_corpus, simulate_day, Role, SimDay, World, WorldConfig, N_ROLES,
};

fn draws_from(world: &World, role: Role, day: DayType, n_days: usize, seed: u64) -> [u64; N_ROLES] {
    let mut counts = [0u64; N_ROLES];
    for d in 0..n_days {
        let a = d % world.agents.len();
        let sim = simulate_day(world, &world.agents[a], day, &mut agent_day_rng(seed, a, d));
        for (from, to) in sim.draws {
            if from == role {
                counts[to.index()] += 1;
            }
        }
    }
    counts
}

#[test]
fn transition_frequencies_match_matrix() {
    let cfg = WorldConfig::default();
    let world = build_world(&cfg, 500, 11).unwrap();
    let mut counts = [0u64; N_ROLES];
    let mut days = 0;
    while counts.iter().sum::<u64>() < 100_000 {
        let c = draws_from(&world, Role::Work, DayType::Weekday, 5000, 1000 + days as u64);
        counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        days += 1;
    }
    let n = counts.iter().sum::<u64>() as f64;
    let row = &cfg.matrix(DayType::Weekday)[Role::Work.index()];
    let mut chi2 = 0.0;
    let mut df = -1.0;
    for (j, &p) in row.iter().enumerate() {
        if p == 0.0 {
            assert_eq!(counts[j], 0);
            continue;
        }
        let e = n * p;
        chi2 += (counts[j] as f64 - e).powi(2) / e;
        df += 1.0;
    }
    let p_value = 1.0 - ChiSquared::new(df).unwrap().cdf(chi2);
    assert!(p_value > 1e-3, "chi2={chi2} df={df} p={p_value}");
}

#[test]
fn weekend_leisure_odds_ratio_recovered() {
    let cfg = WorldConfig::default();
    let world = build_world(&cfg, 500, 12).unwrap();
    let leisure_odds = |c: [u64; N_ROLES]| {
        let l: u64 = Role::ALL.iter().filter(|r| r.is_leisure()).map(|r| c[r.index()]).sum();
        l as f64 / (c.iter().sum::<u64>() - l) as f64
    };
    let wd = leisure_odds(draws_from(&world, Role::Work, DayType::Weekday, 5000, 21));
    let we = leisure_odds(draws_from(&world, Role::Work, DayType::Weekend, 5000, 22));
    let ratio = we / wd;
    assert!((ratio / cfg.weekend_leisure_multiplier - 1.0).abs() < 0.10, "odds ratio {ratio}");
}

#[test]
fn corpus_is_deterministic_per_seed() {
    let cfg = WorldConfig::default();
    let csv = |seed| {
        let c = generate_corpus(&cfg, 12, 5, seed).unwrap();
        let mut pings = Vec::new();
        write_pings(&mut pings, c.pings).unwrap();
        let mut env = Vec::new();
        write_environment_csv(&mut env, &c.environment).unwrap();
        (pings, env)
    };
    assert_eq!(csv(3), csv(3));
    assert_ne!(csv(3).0, csv(4).0);
}

fn cells(day: &DayTrajectory, alphabet: &LevelAlphabet) -> Vec<(GridCode, u32, HomeFlag)> {
    day.stops.iter().map(|s| (alphabet.chars_to_cell(s.cell.as_str()).unwrap(), s.offset, s.flag)).collect()
}

/// Simulated days survive the ping CSV, ingestion, segmentation,
/// serialization and parsing unchanged.
#[test]
fn ingest_round_trip_is_lossless() {
    let cfg = WorldConfig::default();
    let (n_agents, n_days, seed) = (25, 9, 5);
    let corpus = generate_corpus(&cfg, n_agents, n_days, seed).unwrap();
    let mut ping_csv = Vec::new();
    write_pings(&mut ping_csv, corpus.pings.clone()).unwrap();
    let mut env_csv = Vec::new();
    write_environment_csv(&mut env_csv, &corpus.environment).unwrap();

    let (devices, summary) = ingest(&ping_csv[..], &corpus.world.bbox).unwrap();
    assert_eq!(summary.malformed, 0);
    assert_eq!(summary.accepted, corpus.pings.len());
    let env = read_environment_csv(&env_csv[..]).unwrap();
    let built = build_corpus(&devices, &env, LevelAlphabet::default(), &BuildOptions::default()).unwrap();
    assert_eq!(built.stats.days, n_agents * n_days);

    let mut expected: BTreeMap<(String, chrono::NaiveDate), Vec<(GridCode, u32, HomeFlag)>> = BTreeMap::new();
    let mut scratch = LevelAlphabet::default();
    for (a, agent) in corpus.world.agents.iter().enumerate() {
        for (d, row) in corpus.environment.iter().enumerate() {
            let sim: SimDay = simulate_day(&corpus.world, agent, row.day_type, &mut agent_day_rng(seed, a, d));
            let day = sim.to_day_trajectory(agent, &mut scratch).unwrap();
            expected.insert((agent.id.clone(), row.date), cells(&day, &scratch));
        }
    }
    for rec in built.train.iter().chain(&built.test) {
        let day = rec.day(&built.alphabet).unwrap();
        let want = &expected[&(rec.device_id.clone(), rec.date)];
        assert_eq!(&cells(&day, &built.alphabet), want, "{} {}", rec.device_id, rec.date);
        let line = rec.parsed(&built.alphabet).unwrap();
        assert_eq!(line.to_text(&built.alphabet).unwrap(), rec.line);
    }
    // Anchors are snapped to cell centres, so every away stop lands in its anchor's cell.
    let agent = &corpus.world.agents[0];
    let work = encode_cell(&agent.anchors[Role::Work.index()], 5, &corpus.world.bbox).unwrap();
    assert!(built.alphabet.cell_to_chars(&work).is_ok());
}
