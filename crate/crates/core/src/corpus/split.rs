//! Device-level train/test split.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::CorpusError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn is_test(&self, device: &str) -> bool {
        self.test.binary_search_by(|d| d.as_str().cmp(device)).is_ok()
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "#split v1 seed={}", self.seed)?;
        writeln!(w, "[train]")?;
        for d in &self.train {
            writeln!(w, "{d}")?;
        }
        writeln!(w, "[test]")?;
        for d in &self.test {
            writeln!(w, "{d}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, CorpusError> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let seed = header
            .strip_prefix("#split v1 seed=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CorpusError::Header(format!("split manifest header {header:?}")))?;
        let mut m = SplitManifest { seed, train: Vec::new(), test: Vec::new() };
        let mut section: Option<bool> = None;
        for line in lines {
            let line = line?;
            match line.as_str() {
                "" => {}
                "[train]" => section = Some(false),
                "[test]" => section = Some(true),
                id => match section {
                    Some(false) => m.train.push(id.to_string()),
                    Some(true) => m.test.push(id.to_string()),
                    None => return Err(CorpusError::Header("device id before section".into())),
                },
            }
        }
        m.train.sort();
        m.test.sort();
        Ok(m)
    }
}

/// Number of test devices for a `train:test` ratio of `ratio:1`.
pub fn test_count(n: usize, ratio: u32) -> usize {
    let denom = ratio as usize + 1;
    (n + denom / 2) / denom
}

/// Shuffles the (sorted, deduplicated) device ids with `seed` and assigns
/// the first `test_count` to the test side. Both lists come back sorted.
pub fn split(devices: &[String], ratio: u32, seed: u64) -> SplitManifest {
    let mut ids: Vec<String> = devices.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = test_count(ids.len(), ratio);
    let mut test = ids.split_off(ids.len() - n_test);
    let mut train = ids;
    train.sort();
    test.sort();
    SplitManifest { seed, train, test }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("dev{i:06}")).collect()
    }

    #[test]
    fn sizes() {
        assert_eq!(test_count(590_000, 4), 118_000);
        let m = split(&ids(10), 4, 1);
        assert_eq!((m.train.len(), m.test.len()), (8, 2));
    }

    #[test]
    fn deterministic_and_roundtrips() {
        let a = split(&ids(50), 4, 7);
        assert_eq!(a, split(&ids(50), 4, 7));
        assert_ne!(a, split(&ids(50), 4, 8));
        let mut buf = Vec::new();
        a.write(&mut buf).unwrap();
        assert_eq!(SplitManifest::read(&buf[..]).unwrap(), a);
        assert!(a.is_test(&a.test[0]) && !a.is_test(&a.train[0]));
    }

    proptest! {
        #[test]
        fn disjoint_exhaustive_ratio(n in 0usize..400, seed: u64) {
            let all = ids(n);
            let m = split(&all, 4, seed);
            let tr: BTreeSet<_> = m.train.iter().collect();
            let te: BTreeSet<_> = m.test.iter().collect();
            prop_assert!(tr.is_disjoint(&te));
            prop_assert_eq!(tr.len() + te.len(), n);
            let ideal = n as f64 / 5.0;
            prop_assert!((te.len() as f64 - ideal).abs() <= 1.0);
        }
    }
}
