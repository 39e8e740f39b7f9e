//! Autoregressive model of log10 time intervals with a lower bound.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::BaselineError;

pub const AR_LOWER_BOUND_MINUTES: f64 = 10.0;
/// Generation stops once the generated intervals add up to more than this.
pub const AR_HORIZON_MINUTES: f64 = 780.0;
pub const MAX_ORDER: usize = 10;

const DUMP_HEADER: &str = "#trajlang-ar v1";
/// Singular values below this fraction of the largest are treated as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    /// Draw residuals uniformly from the fitted pool.
    #[default]
    Bootstrap,
    /// Draw from a normal with the pool's standard deviation.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    /// `phi[0]` is the intercept, `phi[i]` the weight of lag `i`.
    pub phi: Vec<f64>,
    pub residuals: Vec<f64>,
    pub lower_bound: f64,
    /// Set when the design matrix was rank deficient.
    pub degenerate: bool,
    pub noise: NoiseModel,
}

/// Regression rows `(lags, target)` from each series, skipping the first
/// `skip` targets of every series (`skip >= p`).
fn design(series: &[Vec<f64>], p: usize, skip: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rows: Vec<f64> = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for k in skip..s.len() {
            rows.push(1.0);
            for i in 1..=p {
                rows.push(s[k - i]);
            }
            ys.push(s[k]);
        }
    }
    let n = ys.len();
    (DMatrix::from_row_slice(n, p + 1, &rows), DVector::from_vec(ys))
}

fn to_log(series: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, BaselineError> {
    series
        .iter()
        .map(|s| {
            s.iter()
                .map(|&m| if m > 0.0 && m.is_finite() { Ok(m.log10()) } else { Err(BaselineError::NonPositiveInterval(m)) })
                .collect()
        })
        .collect()
}

struct Fit {
    phi: DVector<f64>,
    residuals: DVector<f64>,
    degenerate: bool,
}

fn least_squares(x: DMatrix<f64>, y: &DVector<f64>) -> Fit {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (smax * RANK_TOLERANCE).max(f64::MIN_POSITIVE);
    let degenerate = svd.singular_values.iter().any(|&s| s <= eps);
    let phi = svd.solve(y, eps).expect("u and v were computed");
    let residuals = y - &x * &phi;
    Fit { phi, residuals, degenerate }
}

impl ArModel {
    /// Least-squares fit of order `p` on interval series given in minutes.
    /// Lags never cross series boundaries.
    pub fn fit(series: &[Vec<f64>], p: usize) -> Result<Self, BaselineError> {
        if !(1..=MAX_ORDER).contains(&p) {
            return Err(BaselineError::InvalidOrder(p));
        }
        let logs = to_log(series)?;
        let (x, y) = design(&logs, p, p);
        if y.len() < p + 1 {
            return Err(BaselineError::InsufficientData { rows: y.len(), needed: p + 1 });
        }
        let fit = least_squares(x, &y);
        Ok(Self {
            phi: fit.phi.iter().copied().collect(),
            residuals: fit.residuals.iter().copied().collect(),
            lower_bound: AR_LOWER_BOUND_MINUTES,
            degenerate: fit.degenerate,
            noise: NoiseModel::Bootstrap,
        })
    }

    pub fn order(&self) -> usize {
        self.phi.len() - 1
    }

    fn draw_noise<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.noise {
            NoiseModel::Bootstrap => self.residuals[rng.gen_range(0..self.residuals.len())],
            NoiseModel::Gaussian => {
                let n = self.residuals.len() as f64;
                let mean = self.residuals.iter().sum::<f64>() / n;
                let var = self.residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
                Normal::new(0.0, var.sqrt()).map_or(0.0, |d| d.sample(rng))
            }
        }
    }

    /// Continues from the last `order()` intervals of `init` (minutes) until
    /// the generated intervals sum to more than `horizon` minutes.
    pub fn generate<R: Rng>(&self, init: &[f64], horizon: f64, rng: &mut R) -> Result<Vec<f64>, BaselineError> {
        let p = self.order();
        if init.len() < p {
            return Err(BaselineError::InitLength { expected: p, got: init.len() });
        }
        if self.residuals.is_empty() {
            return Err(BaselineError::InsufficientData { rows: 0, needed: 1 });
        }
        let mut lags: Vec<f64> = to_log(&[init.to_vec()])?.remove(0);
        let mut out = Vec::new();
        let mut total = 0.0;
        while total <= horizon {
            let n = lags.len();
            let mut alpha = self.phi[0] + self.draw_noise(rng);
            for i in 1..=p {
                alpha += self.phi[i] * lags[n - i];
            }
            let dt = if alpha >= self.lower_bound.log10() { 10f64.powf(alpha) } else { self.lower_bound };
            lags.push(dt.log10());
            out.push(dt);
            total += dt;
        }
        Ok(out)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{DUMP_HEADER} p={} lower_bound={:?} degenerate={} noise={}",
            self.order(),
            self.lower_bound,
            self.degenerate,
            match self.noise {
                NoiseModel::Bootstrap => "bootstrap",
                NoiseModel::Gaussian => "gaussian",
            }
        )?;
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        writeln!(w, "phi\t{}", fmt(&self.phi))?;
        writeln!(w, "residuals\t{}", fmt(&self.residuals))?;
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, BaselineError> {
        let bad = |m: &str| BaselineError::Format(m.to_string());
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let rest = header.strip_prefix(DUMP_HEADER).ok_or_else(|| bad("ar header"))?;
        let mut m = ArModel { phi: vec![], residuals: vec![], lower_bound: AR_LOWER_BOUND_MINUTES, degenerate: false, noise: NoiseModel::Bootstrap };
        let mut p = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("p", v)) => p = v.parse::<usize>().ok(),
                Some(("lower_bound", v)) => m.lower_bound = v.parse().map_err(|_| bad("lower_bound"))?,
                Some(("degenerate", v)) => m.degenerate = v == "true",
                Some(("noise", "bootstrap")) => m.noise = NoiseModel::Bootstrap,
                Some(("noise", "gaussian")) => m.noise = NoiseModel::Gaussian,
                _ => return Err(bad("ar header field")),
            }
        }
        let parse = |s: &str| s.split(' ').filter(|t| !t.is_empty()).map(|t| t.parse::<f64>().map_err(|_| bad("ar number"))).collect::<Result<Vec<_>, _>>();
        for line in lines {
            let line = line?;
            match line.split_once('\t') {
                Some(("phi", v)) => m.phi = parse(v)?,
                Some(("residuals", v)) => m.residuals = parse(v)?,
                _ => return Err(bad("ar row")),
            }
        }
        if p != Some(m.phi.len().wrapping_sub(1)) {
            return Err(bad("ar order does not match coefficients"));
        }
        Ok(m)
    }
}

/// AIC of each order `1..=p_max` on the common sample that drops the first
/// `p_max` targets of every series.
pub fn aic_table(series: &[Vec<f64>], p_max: usize) -> Result<Vec<(usize, f64)>, BaselineError> {
    if !(1..=MAX_ORDER).contains(&p_max) {
        return Err(BaselineError::InvalidOrder(p_max));
    }
    let logs = to_log(series)?;
    let mut out = Vec::with_capacity(p_max);
    for p in 1..=p_max {
        let (x, y) = design(&logs, p, p_max);
        let n = y.len();
        if n < p_max + 1 {
            return Err(BaselineError::InsufficientData { rows: n, needed: p_max + 1 });
        }
        let fit = least_squares(x, &y);
        let rss = fit.residuals.norm_squared();
        let aic = n as f64 * (rss / n as f64).ln() + 2.0 * (p + 1) as f64;
        out.push((p, aic));
    }
    Ok(out)
}

/// Order with the smallest AIC; ties go to the smaller order.
pub fn select_order_aic(series: &[Vec<f64>], p_max: usize) -> Result<usize, BaselineError> {
    let table = aic_table(series, p_max)?;
    let mut best = table[0];
    for &(p, aic) in &table[1..] {
        if aic < best.1 {
            best = (p, aic);
        }
    }
    Ok(best.0)
}

/// Simulates one unbounded series from the AR recursion on log10 minutes with
/// Gaussian noise, after `burn_in` discarded steps. Returns minutes.
pub fn simulate_series<R: Rng>(phi: &[f64], sigma: f64, n: usize, burn_in: usize, rng: &mut R) -> Vec<f64> {
    let p = phi.len() - 1;
    let coeff_sum: f64 = phi[1..].iter().sum();
    let mean = if (1.0 - coeff_sum).abs() > 1e-12 { phi[0] / (1.0 - coeff_sum) } else { 0.0 };
    let noise = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
    let mut a = vec![mean; p];
    for _ in 0..burn_in + n {
        let k = a.len();
        let mut next = phi[0] + noise.sample(rng);
        for i in 1..=p {
            next += phi[i] * a[k - i];
        }
        a.push(next);
    }
    a[p + burn_in..].iter().map(|x| 10f64.powf(*x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixed(phi: Vec<f64>, residuals: Vec<f64>) -> ArModel {
        ArModel { phi, residuals, lower_bound: 10.0, degenerate: false, noise: NoiseModel::Bootstrap }
    }

    #[test]
    fn fixed_point_at_ten() {
        let m = fixed(vec![1.0, 0.0, 0.0, 0.0], vec![0.0]);
        let out = m.generate(&[30.0, 40.0, 50.0], 780.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(out.iter().all(|&d| (d - 10.0).abs() < 1e-9));
        assert_eq!(out.len(), 79);
    }

    #[test]
    fn lower_bound_branch() {
        let m = fixed(vec![0.5, 0.0, 0.0, 0.0], vec![0.0]);
        let out = m.generate(&[30.0, 40.0, 50.0], 780.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(out.iter().all(|&d| d == 10.0));
    }

    #[test]
    fn stops_right_after_horizon() {
        let m = fixed(vec![0.2, 0.4, 0.3, 0.1], vec![-0.3, 0.0, 0.2, 0.4]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let out = m.generate(&[20.0, 60.0, 90.0], 780.0, &mut rng).unwrap();
            let mut total = 0.0;
            for (i, d) in out.iter().enumerate() {
                assert!(*d >= 10.0);
                total += d;
                assert_eq!(total > 780.0, i + 1 == out.len());
            }
        }
    }

    #[test]
    fn recovers_simple_coefficients() {
        let phi = [0.3, 0.5, 0.1, 0.05];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = simulate_series(&phi, 0.05, 200_000, 500, &mut rng);
        let m = ArModel::fit(&[s], 3).unwrap();
        for (a, b) in m.phi.iter().zip(phi) {
            assert!((a - b).abs() < 0.02, "{:?}", m.phi);
        }
        assert!(!m.degenerate);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let s = vec![vec![100.0; 50]];
        let m = ArModel::fit(&s, 3).unwrap();
        assert!(m.degenerate);
        let c = 2.0;
        let lagsum: f64 = m.phi[1..].iter().sum();
        assert!((m.phi[0] - c * (1.0 - lagsum)).abs() < 1e-9);
    }

    #[test]
    fn insufficient_data() {
        assert!(matches!(ArModel::fit(&[vec![10.0, 20.0, 30.0]], 3), Err(BaselineError::InsufficientData { .. })));
        assert!(matches!(ArModel::fit(&[vec![10.0; 20]], 11), Err(BaselineError::InvalidOrder(11))));
    }

    #[test]
    fn aic_on_white_noise_prefers_small_orders() {
        let mut ones = 0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = simulate_series(&[1.5], 0.3, 2000, 0, &mut rng);
            let s = vec![s];
            if select_order_aic(&s, 10).unwrap() == 1 {
                ones += 1;
            }
        }
        assert!(ones >= 5, "{ones}");
    }

    #[test]
    fn dump_roundtrip() {
        let m = fixed(vec![0.1, 0.2, 0.3, 0.4], vec![0.01, -0.02]);
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert_eq!(ArModel::read(&buf[..]).unwrap(), m);
    }
}
