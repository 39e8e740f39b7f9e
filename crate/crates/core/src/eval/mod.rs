//! Metrics comparing generated and observed trajectories.

mod geo;
mod metrics;
mod report;

pub use geo::{haversine_km, EARTH_RADIUS_KM};
pub use metrics::{
    empirical_cdf, hit_rate, hourly_distance_cdf, hourly_distances, interval_cdf, ks_statistic, log_grid_with_zero,
    make_prompt, male, position_at, roundtrip_minutes, Cdf, HitCell, HitRateRow, Horizon, MaleCell, Prompt, Timeline,
    HORIZONS, MALE_POSITIONS, PROMPT_STOPS, RADII_KM,
};
pub use report::MetricsReport;
