//! Synthetic interval-censored datasets and heart-failure ingestion.
//!
//! Failure times are drawn from a Weibull by inverse-CDF transform and then
//! observed only through a grid of disjoint inspection windows. The window
//! that contains the failure is the single `y = 1` record of the item.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{IntervalDataset, TestRecord};
use crate::error::{Error, Result};

/// Weibull rate and shape used for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullClassSpec {
    pub rate: f64,
    pub shape: f64,
}

impl WeibullClassSpec {
    pub fn new(rate: f64, shape: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite() && shape > 0.0 && shape.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "class spec needs positive rate and shape, got ({rate}, {shape})"
            )));
        }
        Ok(WeibullClassSpec { rate, shape })
    }
}

/// Class specs of the two-class failure-time generator with constant rates.
pub fn default_class_specs() -> [WeibullClassSpec; 2] {
    [
        WeibullClassSpec {
            rate: 0.1,
            shape: 2.5,
        },
        WeibullClassSpec {
            rate: 0.5,
            shape: 3.0,
        },
    ]
}

/// Shapes of the two-class generator with covariate-dependent rates.
pub const SYNTHETIC_2_SHAPES: [f64; 2] = [2.5, 3.0];

/// Inspection grid `[0,w], [w,2w], ...` truncated at `max_time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensorWindowSpec {
    pub window: f64,
    pub max_time: f64,
}

impl CensorWindowSpec {
    pub fn new(window: f64, max_time: f64) -> Result<Self> {
        if !(window > 0.0 && window.is_finite()) {
            return Err(Error::InvalidParameter(format!("window {window} must be positive")));
        }
        if !(max_time >= window && max_time.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "max_time {max_time} must be at least the window {window}"
            )));
        }
        Ok(CensorWindowSpec { window, max_time })
    }
}

impl Default for CensorWindowSpec {
    fn default() -> Self {
        CensorWindowSpec {
            window: 2.0,
            max_time: 100.0,
        }
    }
}

/// Points with binary class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoints {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl LabeledPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

/// Inverse Weibull CDF: `(-ln(1-u))^(1/k) / λ`.
pub fn weibull_inverse_cdf(u: f64, rate: f64, shape: f64) -> f64 {
    (-(-u).ln_1p()).powf(1.0 / shape) / rate
}

/// Draws one failure time per entry of `rates`, all sharing `shape`.
pub fn sample_weibull_times(rates: &[f64], shape: f64, seed: u64) -> Result<Vec<f64>> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::InvalidParameter(format!("shape {shape} must be positive")));
    }
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter(format!("rate {r} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rates
        .iter()
        .map(|&rate| weibull_inverse_cdf(rng.random::<f64>(), rate, shape))
        .collect())
}

/// Converts a failure time into the interval records an inspector would see.
///
/// A failure exactly on a window edge is assigned to the window ending there.
/// If the item survives past `max_time` every record is a pass and the last
/// window is truncated at `max_time`.
pub fn chunk_into_intervals(
    item_id: &str,
    x: &[f64],
    t_fail: f64,
    spec: &CensorWindowSpec,
) -> Result<Vec<TestRecord>> {
    if !(t_fail > 0.0) || t_fail.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "failure time {t_fail} must be positive"
        )));
    }
    let mut out = Vec::new();
    for i in 0.. {
        let start = i as f64 * spec.window;
        if start >= spec.max_time {
            break;
        }
        let end = ((i + 1) as f64 * spec.window).min(spec.max_time);
        let failed = t_fail <= end;
        out.push(TestRecord::new(item_id, x.to_vec(), failed as u8, start, end)?);
        if failed {
            break;
        }
    }
    Ok(out)
}

fn item_id(i: usize) -> String {
    format!("item{i:06}")
}

/// One generator stream per item so each item's draw is independent of the
/// generation order.
fn item_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn check_classes(base: &LabeledPoints) -> Result<()> {
    if base.points.len() != base.labels.len() {
        return Err(Error::InvalidParameter("points and labels differ in length".into()));
    }
    if let Some(l) = base.labels.iter().find(|l| **l > 1) {
        return Err(Error::InvalidParameter(format!("label {l} is not 0 or 1")));
    }
    for class in 0..2u8 {
        if !base.labels.contains(&class) {
            return Err(Error::InvalidParameter(format!("class {class} has no points")));
        }
    }
    Ok(())
}

/// Generic builder: `rate_of(class, x)` gives each point's Weibull rate.
pub fn generate_with_rates(
    base: &LabeledPoints,
    shapes: [f64; 2],
    rate_of: impl Fn(u8, &[f64]) -> f64,
    window: &CensorWindowSpec,
    seed: u64,
) -> Result<IntervalDataset> {
    check_classes(base)?;
    let mut records = Vec::new();
    for (i, (x, &label)) in base.points.iter().zip(&base.labels).enumerate() {
        let rate = rate_of(label, x);
        let shape = shapes[label as usize];
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("rate {rate} at point {i}")));
        }
        let u: f64 = item_rng(seed, i).random();
        let t_fail = weibull_inverse_cdf(u, rate, shape).max(f64::MIN_POSITIVE);
        records.extend(chunk_into_intervals(&item_id(i), x, t_fail, window)?);
    }
    IntervalDataset::new_non_repairable(records, base.dim())
}

/// Per-class constant rates and shapes.
pub fn generate_synthetic_1(
    base: &LabeledPoints,
    specs: [WeibullClassSpec; 2],
    window: &CensorWindowSpec,
    seed: u64,
) -> Result<IntervalDataset> {
    generate_with_rates(
        base,
        [specs[0].shape, specs[1].shape],
        |c, _| specs[c as usize].rate,
        window,
        seed,
    )
}

/// Rate of the covariate-dependent generator for a 2-D point.
pub fn synthetic_2_rate(class: u8, x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    if class == 0 {
        (-0.2 * x1 - 0.15 * x2 - 1.0).exp()
    } else {
        (-0.5 * x1 * x1 - 0.15 * x2 * x2).exp() + 0.8
    }
}

/// Per-class shapes with a rate that is a continuous function of the point.
pub fn generate_synthetic_2(
    base: &LabeledPoints,
    shapes: [f64; 2],
    window: &CensorWindowSpec,
    seed: u64,
) -> Result<IntervalDataset> {
    if base.dim() != 2 {
        return Err(Error::InvalidParameter(format!(
            "covariate-dependent generator needs 2-D points, got {}",
            base.dim()
        )));
    }
    generate_with_rates(base, shapes, synthetic_2_rate, window, seed)
}

fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Two interleaving half circles of radius 1; the second is offset by
/// `(1, -0.5)`. Class 0 gets `n / 2` points.
pub fn make_moons(n: usize, noise: f64, seed: u64) -> LabeledPoints {
    let n_outer = n / 2;
    let n_inner = n - n_outer;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for t in linspace(0.0, std::f64::consts::PI, n_outer) {
        points.push(vec![t.cos(), t.sin()]);
        labels.push(0);
    }
    for t in linspace(0.0, std::f64::consts::PI, n_inner) {
        points.push(vec![1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    add_noise(&mut points, noise, &mut rng);
    LabeledPoints { points, labels }
}

/// Radius of the banana arcs.
pub const BANANA_RADIUS: f64 = 2.0;

/// Two crescent-shaped arcs of radius [`BANANA_RADIUS`].
///
/// Class 0 lies on `r (sin a, cos a)` for `a ∈ [π/8, 11π/8]`; class 1 on the
/// same circle for `a ∈ [3π/8 - 5π/4, 3π/8]`, shifted by `(-0.75 r, -0.75 r)`.
/// Angles are drawn uniformly, then isotropic Gaussian noise is added.
pub fn make_banana(n: usize, noise: f64, seed: u64) -> LabeledPoints {
    use std::f64::consts::PI;
    let n0 = n / 2;
    let n1 = n - n0;
    let r = BANANA_RADIUS;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n0 {
        let a = PI / 8.0 + rng.random::<f64>() * 1.25 * PI;
        points.push(vec![r * a.sin(), r * a.cos()]);
        labels.push(0);
    }
    for _ in 0..n1 {
        let a = 3.0 * PI / 8.0 - rng.random::<f64>() * 1.25 * PI;
        points.push(vec![r * a.sin() - 0.75 * r, r * a.cos() - 0.75 * r]);
        labels.push(1);
    }
    add_noise(&mut points, noise, &mut rng);
    LabeledPoints { points, labels }
}

fn add_noise(points: &mut [Vec<f64>], noise: f64, rng: &mut ChaCha8Rng) {
    if noise <= 0.0 {
        return;
    }
    for p in points.iter_mut() {
        for v in p.iter_mut() {
            *v += noise * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// Clinical covariates of the heart-failure CSV, in column order.
pub const HEART_FAILURE_FEATURES: [&str; 11] = [
    "age",
    "anaemia",
    "creatinine_phosphokinase",
    "diabetes",
    "ejection_fraction",
    "high_blood_pressure",
    "platelets",
    "serum_creatinine",
    "serum_sodium",
    "sex",
    "smoking",
];
pub const HEART_FAILURE_TIME: &str = "time";
pub const HEART_FAILURE_EVENT: &str = "DEATH_EVENT";

/// Converts the heart-failure clinical records into monthly check-ins.
///
/// Each patient is one item. A death is discovered at the next check-in, so
/// its record is the whole window containing the death day. A censored
/// patient contributes passes up to the follow-up day, the last window
/// possibly partial.
pub fn ingest_heartfailure(path: impl AsRef<Path>, window_days: f64) -> Result<IntervalDataset> {
    let path = path.as_ref();
    if !(window_days > 0.0 && window_days.is_finite()) {
        return Err(Error::InvalidParameter(format!("window {window_days} must be positive")));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader.headers()?.clone();
    let column = |name: &str| header.iter().position(|h| h == name);
    let wanted: Vec<&str> = HEART_FAILURE_FEATURES
        .iter()
        .copied()
        .chain([HEART_FAILURE_TIME, HEART_FAILURE_EVENT])
        .collect();
    let missing: Vec<String> = wanted
        .iter()
        .filter(|c| column(c).is_none())
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns {
            path: path.to_path_buf(),
            columns: missing,
        });
    }
    let feature_cols: Vec<usize> = HEART_FAILURE_FEATURES
        .iter()
        .map(|c| column(c).unwrap())
        .collect();
    let time_col = column(HEART_FAILURE_TIME).unwrap();
    let event_col = column(HEART_FAILURE_EVENT).unwrap();

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let num = |c: usize| -> Result<f64> {
            row.get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("{}: cannot parse {:?}", &header[c], row.get(c)),
                })
        };
        let x = feature_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
        let time = num(time_col)?;
        let died = num(event_col)? != 0.0;
        if !(time > 0.0) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: format!("follow-up time {time} must be positive"),
            });
        }
        let id = format!("patient{:03}", i + 1);
        if died {
            let spec = CensorWindowSpec {
                window: window_days,
                max_time: f64::MAX,
            };
            records.extend(chunk_into_intervals(&id, &x, time, &spec)?);
        } else {
            let mut start = 0.0;
            let mut j = 1;
            while start < time {
                let end = (j as f64 * window_days).min(time);
                records.push(TestRecord::new(&id, x.clone(), 0, start, end)?);
                start = end;
                j += 1;
            }
        }
    }
    IntervalDataset::new_non_repairable(records, HEART_FAILURE_FEATURES.len())
}

/// Writes a synthetic stand-in for the public heart-failure clinical records
/// CSV (same columns, 299 patients by default).
///
/// Covariates follow the marginal ranges of the public data. Death times
/// come from a Weibull-Cox model whose log-hazard is linear in the
/// standardized covariates; follow-up is uniform on 4..285 days.
pub fn write_heartfailure_surrogate(path: impl AsRef<Path>, n: usize, seed: u64) -> Result<()> {
    let path = path.as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(
            out,
            "{},{},{}",
            HEART_FAILURE_FEATURES.join(","),
            HEART_FAILURE_TIME,
            HEART_FAILURE_EVENT
        )?;
        for _ in 0..n {
            let mut normal = |mean: f64, sd: f64| mean + sd * rng.sample::<f64, _>(StandardNormal);
            let age = normal(60.8, 11.9).clamp(40.0, 95.0).round();
            let cpk = normal(5.9, 1.0).exp().clamp(23.0, 7861.0).round();
            let ef = normal(38.1, 11.8).clamp(14.0, 80.0).round();
            let platelets = normal(263_358.0, 97_804.0).clamp(25_100.0, 850_000.0).round();
            let creat = normal(0.2, 0.4).exp().clamp(0.5, 9.4);
            let creat = (creat * 100.0).round() / 100.0;
            let sodium = normal(136.6, 4.4).clamp(113.0, 148.0).round();
            let mut flag = |p: f64| (rng.random::<f64>() < p) as u8;
            let anaemia = flag(0.43);
            let diabetes = flag(0.42);
            let hbp = flag(0.35);
            let sex = flag(0.65);
            let smoking = flag(0.32);
            // Linear log-hazard in standardized units, shape 1.3, scale ~ years.
            let eta = 0.45 * (age - 60.8) / 11.9 - 0.55 * (ef - 38.1) / 11.8
                + 0.50 * (creat.ln() - 0.2) / 0.4
                - 0.20 * (sodium - 136.6) / 4.4
                + 0.25 * anaemia as f64
                + 0.20 * hbp as f64;
            let rate = (1.0 / 550.0) * (eta / 1.3).exp();
            let death = weibull_inverse_cdf(rng.random::<f64>(), rate, 1.3);
            let follow_up = 4.0 + (rng.random::<f64>() * 281.0).floor();
            let (time, event) = if death < follow_up {
                (death.ceil().max(1.0), 1)
            } else {
                (follow_up, 0)
            };
            writeln!(
                out,
                "{age},{anaemia},{cpk},{diabetes},{ef},{hbp},{platelets},{creat},{sodium},{sex},{smoking},{time},{event}"
            )?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
