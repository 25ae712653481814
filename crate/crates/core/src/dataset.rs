//! Snapshot datasets and their columnar CSV form.
//!
//! Columns are bus-major: `P_1..P_n, Q_1..Q_n, V_1..V_n, th_1..th_n, kind,
//! seed`, optionally followed by extra per-row columns (attack datasets add
//! `family, zone_id, objective, max_violation`). Floats are written in
//! shortest round-trip form so files reload bit-exactly.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::attack::AttackFamily;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SnapshotKind {
    Clean,
    Attacked(AttackFamily),
    Perturbed,
}

impl fmt::Display for SnapshotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnapshotKind::Clean => f.write_str("clean"),
            SnapshotKind::Attacked(fam) => write!(f, "attacked:{fam}"),
            SnapshotKind::Perturbed => f.write_str("perturbed"),
        }
    }
}

impl FromStr for SnapshotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(SnapshotKind::Clean),
            "perturbed" => Ok(SnapshotKind::Perturbed),
            _ => match s.strip_prefix("attacked:") {
                Some(fam) => Ok(SnapshotKind::Attacked(fam.parse()?)),
                None => Err(Error::Config(format!("unknown snapshot kind '{s}'"))),
            },
        }
    }
}

/// One operating point. `p`, `q` are the measured (possibly noisy or
/// attacked) injections; `v`, `theta` are the state labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub kind: SnapshotKind,
    pub seed: u64,
    /// Pre-noise injections, kept in memory only.
    pub clean: Option<(Vec<f64>, Vec<f64>)>,
}

impl Snapshot {
    pub fn n_bus(&self) -> usize {
        self.v.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub n_bus: usize,
    pub snapshots: Vec<Snapshot>,
}

/// Extra trailing CSV columns for one row.
pub type ExtraColumns = Vec<String>;

impl Dataset {
    pub fn new(n_bus: usize) -> Self {
        Dataset {
            n_bus,
            snapshots: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn subset(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            n_bus: self.n_bus,
            snapshots: self.snapshots[range.start.min(self.len())..range.end.min(self.len())].to_vec(),
        }
    }

    /// Seeded shuffle followed by a `train_fraction` / remainder split.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut crate::rng::stream(seed, 0x5b117));
        let n_train = ((self.len() as f64) * train_fraction).round() as usize;
        let pick = |idx: &[usize]| Dataset {
            n_bus: self.n_bus,
            snapshots: idx.iter().map(|&k| self.snapshots[k].clone()).collect(),
        };
        (pick(&order[..n_train]), pick(&order[n_train..]))
    }

    /// Model inputs `[P, Q]`, one row per snapshot.
    pub fn inputs(&self) -> Array2<f64> {
        let n = self.n_bus;
        let mut x = Array2::zeros((self.len(), 2 * n));
        for (r, s) in self.snapshots.iter().enumerate() {
            for i in 0..n {
                x[(r, i)] = s.p[i];
                x[(r, n + i)] = s.q[i];
            }
        }
        x
    }

    pub fn header(n_bus: usize) -> Vec<String> {
        let mut h = Vec::with_capacity(4 * n_bus + 2);
        for prefix in ["P", "Q", "V", "th"] {
            h.extend((1..=n_bus).map(|i| format!("{prefix}_{i}")));
        }
        h.push("kind".into());
        h.push("seed".into());
        h
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_with(path, &[], |_| Vec::new())
    }

    pub fn write_csv_with(
        &self,
        path: &Path,
        extra_header: &[&str],
        mut extra: impl FnMut(usize) -> ExtraColumns,
    ) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = Self::header(self.n_bus);
        header.extend(extra_header.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for (k, s) in self.snapshots.iter().enumerate() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            for block in [&s.p, &s.q, &s.v, &s.theta] {
                rec.extend(block.iter().map(|x| x.to_string()));
            }
            rec.push(s.kind.to_string());
            rec.push(s.seed.to_string());
            rec.extend(extra(k));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a dataset file; trailing columns after `seed` are returned per row.
    pub fn read_csv(path: &Path) -> Result<(Dataset, Vec<String>, Vec<ExtraColumns>)> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let n_bus = header.iter().filter(|h| h.starts_with("P_")).count();
        let base = 4 * n_bus + 2;
        if header.len() < base || header[base - 2] != "kind" || header[base - 1] != "seed" {
            return Err(Error::Config(format!("{}: not a snapshot dataset", path.display())));
        }
        let extra_header = header[base..].to_vec();
        let mut ds = Dataset::new(n_bus);
        let mut extras = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec[k].parse().map_err(|_| {
                    Error::Config(format!("{}: row {}: bad number '{}'", path.display(), row + 1, &rec[k]))
                })
            };
            let block = |b: usize| (0..n_bus).map(|i| num(b * n_bus + i)).collect::<Result<Vec<_>>>();
            ds.snapshots.push(Snapshot {
                p: block(0)?,
                q: block(1)?,
                v: block(2)?,
                theta: block(3)?,
                kind: rec[base - 2].parse()?,
                seed: rec[base - 1]
                    .parse()
                    .map_err(|_| Error::Config(format!("{}: row {}: bad seed", path.display(), row + 1)))?,
                clean: None,
            });
            extras.push(rec.iter().skip(base).map(str::to_string).collect());
        }
        Ok((ds, extra_header, extras))
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn snapshot(n: usize, base: f64, kind: SnapshotKind) -> Snapshot {
        Snapshot {
            p: (0..n).map(|i| base + i as f64 * 0.1).collect(),
            q: (0..n).map(|i| -base * i as f64).collect(),
            v: vec![1.0 + base / 10.0; n],
            theta: (0..n).map(|i| -0.01 * i as f64 * base).collect(),
            kind,
            seed: 42,
            clean: None,
        }
    }

    #[test]
    fn kind_round_trips_through_text() {
        for k in [
            SnapshotKind::Clean,
            SnapshotKind::Perturbed,
            SnapshotKind::Attacked(AttackFamily::LineOverload),
        ] {
            assert_eq!(k.to_string().parse::<SnapshotKind>().unwrap(), k);
        }
        assert!("bogus".parse::<SnapshotKind>().is_err());
    }

    #[test]
    fn split_is_seeded_and_complete() {
        let mut ds = Dataset::new(2);
        for k in 0..50 {
            ds.snapshots.push(snapshot(2, k as f64, SnapshotKind::Clean));
        }
        let (a, b) = ds.split(0.9, 3);
        assert_eq!((a.len(), b.len()), (45, 5));
        assert_eq!(ds.split(0.9, 3), (a, b));
    }

    #[test]
    fn header_layout() {
        let h = Dataset::header(2);
        assert_eq!(
            h,
            ["P_1", "P_2", "Q_1", "Q_2", "V_1", "V_2", "th_1", "th_2", "kind", "seed"]
        );
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(values in proptest::collection::vec(-10.0f64..10.0, 1..6)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("d.csv");
            let mut ds = Dataset::new(3);
            for (k, v) in values.iter().enumerate() {
                let mut s = snapshot(3, *v, SnapshotKind::Attacked(AttackFamily::Simple));
                s.seed = k as u64;
                ds.snapshots.push(s);
            }
            ds.write_csv_with(&path, &["family"], |k| vec![format!("row{k}")]).unwrap();
            let (back, extra_header, extras) = Dataset::read_csv(&path).unwrap();
            prop_assert_eq!(back, ds);
            prop_assert_eq!(extra_header, vec!["family".to_string()]);
            prop_assert_eq!(&extras[0][0], "row0");
        }
    }
}
