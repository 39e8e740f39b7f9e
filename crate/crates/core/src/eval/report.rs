use std::fmt::Write as _;
use std::io::Write;

use super::metrics::{Cdf, HitRateRow, MaleCell, MALE_POSITIONS, RADII_KM};

/// All metric tables of one evaluation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub hit_rates: Vec<(String, HitRateRow)>,
    pub male: Vec<(String, [MaleCell; MALE_POSITIONS])>,
    pub distance_cdfs: Vec<(String, Cdf)>,
    pub interval_cdfs: Vec<(String, Cdf)>,
    pub interval_ks: Vec<(String, f64)>,
}

const MALE_LABELS: [&str; MALE_POSITIONS] = ["next", "second", "third", "fourth"];

fn num(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

impl MetricsReport {
    pub fn hit_row(&self, model: &str) -> Option<&HitRateRow> {
        self.hit_rates.iter().find(|(m, _)| m == model).map(|(_, r)| r)
    }

    pub fn male_row(&self, model: &str) -> Option<&[MaleCell; MALE_POSITIONS]> {
        self.male.iter().find(|(m, _)| m == model).map(|(_, r)| r)
    }

    pub fn ks(&self, model: &str) -> Option<f64> {
        self.interval_ks.iter().find(|(m, _)| m == model).map(|(_, v)| *v)
    }

    /// One row per model and metric cell: `model,metric,key,value,n`.
    pub fn write_metrics_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["model", "metric", "key", "value", "n"])?;
        for (model, row) in &self.hit_rates {
            for (h, c) in row.horizons.iter().zip(&row.cells) {
                for (k, r) in RADII_KM.iter().enumerate() {
                    wr.write_record([model, &format!("hit_rate_{r}km"), &h.to_string(), &num(c.rate(k)), &c.evaluated.to_string()])?;
                }
            }
        }
        for (model, cells) in &self.male {
            for (label, c) in MALE_LABELS.iter().zip(cells) {
                wr.write_record([model.as_str(), "male", label, &num(c.mean()), &c.n.to_string()])?;
            }
        }
        for (model, d) in &self.interval_ks {
            wr.write_record([model.as_str(), "interval_ks", "truth", &num(Some(*d)), ""])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Long-format CDF table `series,x,y` for one figure.
    pub fn write_cdf_csv<W: Write>(cdfs: &[(String, Cdf)], w: W) -> csv::Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["series", "x", "y"])?;
        for (name, c) in cdfs {
            for (x, y) in c.x.iter().zip(&c.y) {
                wr.write_record([name.as_str(), &format!("{x:.6}"), &format!("{y:.6}")])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Aligned text tables: hit rates as `3 km (10 km)` and MALE by position.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        if let Some((_, first)) = self.hit_rates.first() {
            let _ = write!(s, "{:<14}", "hit rate");
            for h in &first.horizons {
                let _ = write!(s, "{:>16}", h.to_string());
            }
            s.push('\n');
            for (model, row) in &self.hit_rates {
                let _ = write!(s, "{model:<14}");
                for c in &row.cells {
                    let cell = match (c.rate(0), c.rate(1)) {
                        (Some(a), Some(b)) => format!("{a:.2} ({b:.2})"),
                        _ => "NA".to_string(),
                    };
                    let _ = write!(s, "{cell:>16}");
                }
                s.push('\n');
            }
        }
        if !self.male.is_empty() {
            let _ = write!(s, "\n{:<14}", "MALE");
            for l in MALE_LABELS {
                let _ = write!(s, "{l:>10}");
            }
            s.push('\n');
            for (model, cells) in &self.male {
                let _ = write!(s, "{model:<14}");
                for c in cells {
                    let _ = write!(s, "{:>10}", c.mean().map_or("NA".to_string(), |v| format!("{v:.3}")));
                }
                s.push('\n');
            }
        }
        if !self.interval_ks.is_empty() {
            s.push_str("\ninterval KS vs truth\n");
            for (m, d) in &self.interval_ks {
                let _ = writeln!(s, "{m:<14}{d:>10.4}");
            }
        }
        s
    }
}
