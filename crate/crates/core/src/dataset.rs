//! Interval-censored test records and the relational dataset built from them.
//!
//! Each [`TestRecord`] is one functionality test of one item: the item was
//! last inspected at `t_agelt`, tested again at `t_age`, and `y` says whether
//! a failure was found at the second inspection. Covariates are held constant
//! over the interval.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One interval observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub item_id: String,
    pub x: Vec<f64>,
    /// 1 when the test at `t_age` found a failure.
    pub y: u8,
    pub t_agelt: f64,
    pub t_age: f64,
}

impl TestRecord {
    pub fn new(
        item_id: impl Into<String>,
        x: Vec<f64>,
        y: u8,
        t_agelt: f64,
        t_age: f64,
    ) -> Result<Self> {
        let record = TestRecord {
            item_id: item_id.into(),
            x,
            y,
            t_agelt,
            t_age,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidRecord {
                item_id: self.item_id.clone(),
                reason,
            })
        };
        if !(self.t_agelt.is_finite() && self.t_age.is_finite()) {
            return fail(format!(
                "non-finite interval [{}, {}]",
                self.t_agelt, self.t_age
            ));
        }
        if self.t_agelt < 0.0 {
            return fail(format!("negative t_agelt {}", self.t_agelt));
        }
        if self.t_agelt >= self.t_age {
            return fail(format!(
                "t_agelt {} must be strictly less than t_age {}",
                self.t_agelt, self.t_age
            ));
        }
        if self.y > 1 {
            return fail(format!("label {} is not 0 or 1", self.y));
        }
        if let Some(v) = self.x.iter().find(|v| !v.is_finite()) {
            return fail(format!("non-finite covariate {v}"));
        }
        Ok(())
    }

    pub fn failed(&self) -> bool {
        self.y == 1
    }
}

/// Records grouped by item, in their original order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalDataset {
    records: Vec<TestRecord>,
    n_features: usize,
    /// item id -> record indices sorted by `t_agelt`.
    items: BTreeMap<String, Vec<usize>>,
    non_repairable: bool,
}

impl IntervalDataset {
    /// Builds a dataset and checks every record and per-item invariant.
    pub fn new(records: Vec<TestRecord>, n_features: usize) -> Result<Self> {
        Self::build(records, n_features, false)
    }

    /// As [`IntervalDataset::new`], additionally rejecting items with more
    /// than one failure record.
    pub fn new_non_repairable(records: Vec<TestRecord>, n_features: usize) -> Result<Self> {
        Self::build(records, n_features, true)
    }

    pub fn empty(n_features: usize) -> Self {
        IntervalDataset {
            records: Vec::new(),
            n_features,
            items: BTreeMap::new(),
            non_repairable: false,
        }
    }

    fn build(records: Vec<TestRecord>, n_features: usize, non_repairable: bool) -> Result<Self> {
        let mut items: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            r.validate()?;
            if r.x.len() != n_features {
                return Err(Error::InvalidRecord {
                    item_id: r.item_id.clone(),
                    reason: format!("expected {n_features} covariates, found {}", r.x.len()),
                });
            }
            items.entry(r.item_id.clone()).or_default().push(i);
        }
        for (id, idx) in items.iter_mut() {
            idx.sort_by(|&a, &b| records[a].t_agelt.total_cmp(&records[b].t_agelt));
            for w in idx.windows(2) {
                let (prev, next) = (&records[w[0]], &records[w[1]]);
                if next.t_agelt < prev.t_age {
                    return Err(Error::InvalidRecord {
                        item_id: id.clone(),
                        reason: format!(
                            "overlapping intervals [{}, {}] and [{}, {}]",
                            prev.t_agelt, prev.t_age, next.t_agelt, next.t_age
                        ),
                    });
                }
            }
            if non_repairable {
                let failures = idx.iter().filter(|&&i| records[i].failed()).count();
                if failures > 1 {
                    return Err(Error::InvalidRecord {
                        item_id: id.clone(),
                        reason: format!("{failures} failures recorded for a non-repairable item"),
                    });
                }
            }
        }
        Ok(IntervalDataset {
            records,
            n_features,
            items,
            non_repairable,
        })
    }

    pub fn records(&self) -> &[TestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn is_non_repairable(&self) -> bool {
        self.non_repairable
    }

    /// Item ids in sorted order with the indices of their records.
    pub fn items(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.items.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn item_records(&self, item_id: &str) -> Option<Vec<&TestRecord>> {
        self.items
            .get(item_id)
            .map(|idx| idx.iter().map(|&i| &self.records[i]).collect())
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.y).collect()
    }

    pub fn failure_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.failed()).count() as f64 / self.records.len() as f64
    }

    /// New dataset with every covariate row mapped through `f`.
    pub fn map_covariates(&self, n_features: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let records = self
            .records
            .iter()
            .map(|r| TestRecord {
                x: f(&r.x),
                ..r.clone()
            })
            .collect();
        Self::build(records, n_features, self.non_repairable)
    }

    fn subset(&self, keep: impl Fn(&str) -> bool) -> Self {
        let records: Vec<TestRecord> = self
            .records
            .iter()
            .filter(|r| keep(&r.item_id))
            .cloned()
            .collect();
        // Invariants hold for any union of whole items.
        Self::build(records, self.n_features, self.non_repairable)
            .expect("subset of a valid dataset is valid")
    }
}

/// Splits by item so that all tests of one item land in the same partition.
///
/// Item ids are sorted, shuffled with a seeded generator, and the first
/// `round(test_fraction * J)` (clamped to `1..J-1`) become the test set.
pub fn split_by_item(
    ds: &IntervalDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(IntervalDataset, IntervalDataset)> {
    let j = ds.n_items();
    if j < 2 {
        return Err(Error::CannotSplit(format!(
            "need at least 2 items, dataset has {j}"
        )));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test fraction {test_fraction} not in (0, 1)"
        )));
    }
    let mut ids: Vec<&str> = ds.items.keys().map(String::as_str).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_test = ((test_fraction * j as f64).round() as usize).clamp(1, j - 1);
    let test_ids: std::collections::BTreeSet<&str> = ids[..n_test].iter().copied().collect();
    let train = ds.subset(|id| !test_ids.contains(id));
    let test = ds.subset(|id| test_ids.contains(id));
    Ok((train, test))
}

/// Per-feature centering and scaling fitted on a training partition.
///
/// Uses the population standard deviation; zero-variance columns keep a scale
/// of 1 so they map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &IntervalDataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidDataset(
                "cannot fit a standardizer on an empty dataset".into(),
            ));
        }
        let f = train.n_features();
        let n = train.len() as f64;
        let mut mean = vec![0.0; f];
        for r in train.records() {
            for (m, v) in mean.iter_mut().zip(&r.x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; f];
        for r in train.records() {
            for ((s, v), m) in var.iter_mut().zip(&r.x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn identity(n_features: usize) -> Self {
        Standardizer {
            mean: vec![0.0; n_features],
            std: vec![1.0; n_features],
        }
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse_row(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn apply(&self, ds: &IntervalDataset) -> Result<IntervalDataset> {
        self.check(ds)?;
        ds.map_covariates(ds.n_features(), |x| self.transform_row(x))
    }

    pub fn inverse_apply(&self, ds: &IntervalDataset) -> Result<IntervalDataset> {
        self.check(ds)?;
        ds.map_covariates(ds.n_features(), |x| self.inverse_row(x))
    }

    fn check(&self, ds: &IntervalDataset) -> Result<()> {
        if ds.n_features() != self.n_features() {
            return Err(Error::InvalidDataset(format!(
                "standardizer expects {} features, dataset has {}",
                self.n_features(),
                ds.n_features()
            )));
        }
        Ok(())
    }
}

pub fn fit_standardizer(train: &IntervalDataset) -> Result<Standardizer> {
    Standardizer::fit(train)
}

pub fn apply_standardizer(sc: &Standardizer, ds: &IntervalDataset) -> Result<IntervalDataset> {
    sc.apply(ds)
}

const FIXED_COLUMNS: [&str; 4] = ["item_id", "t_agelt", "t_age", "y"];

/// Reads the `item_id,t_agelt,t_age,y,x1..xF` CSV format.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<IntervalDataset> {
    read_dataset_with(path, false)
}

/// Reads a dataset, rejecting items with multiple failures when
/// `non_repairable` is set.
pub fn read_dataset_with(path: impl AsRef<Path>, non_repairable: bool) -> Result<IntervalDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader.headers()?.clone();
    let parse_err = |line: u64, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    if header.len() < FIXED_COLUMNS.len()
        || header.iter().zip(FIXED_COLUMNS).any(|(h, want)| h != want)
    {
        return Err(parse_err(
            1,
            format!("header must start with {}", FIXED_COLUMNS.join(",")),
        ));
    }
    let n_features = header.len() - FIXED_COLUMNS.len();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), row.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("{}: cannot parse {:?}", &header[i], &row[i])))
        };
        let y = match &row[3] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(line, format!("y: expected 0 or 1, found {other:?}"))),
        };
        let x = (FIXED_COLUMNS.len()..row.len())
            .map(num)
            .collect::<Result<Vec<_>>>()?;
        records.push(TestRecord::new(&row[0], x, y, num(1)?, num(2)?)?);
    }
    IntervalDataset::build(records, n_features, non_repairable)
}

/// Writes the dataset in record order. Floats are written in shortest
/// round-trip form, so reading the file back reproduces every value exactly.
pub fn write_dataset(ds: &IntervalDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        write!(out, "{}", FIXED_COLUMNS.join(","))?;
        for f in 1..=ds.n_features() {
            write!(out, ",x{f}")?;
        }
        writeln!(out)?;
        for r in ds.records() {
            write!(out, "{},{:?},{:?},{}", r.item_id, r.t_agelt, r.t_age, r.y)?;
            for v in &r.x {
                write!(out, ",{v:?}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
