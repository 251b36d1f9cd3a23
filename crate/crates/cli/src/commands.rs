use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use intervalweib::datagen::{
    default_class_specs, generate_synthetic_1, generate_synthetic_2, ingest_heartfailure, make_banana, make_moons,
    write_heartfailure_surrogate, CensorWindowSpec, LabeledPoints, SYNTHETIC_2_SHAPES,
};
use intervalweib::dataset::{read_dataset, split_by_item, write_dataset, IntervalDataset, Standardizer};
use intervalweib::laplace::LaplacePosterior;
use intervalweib::metrics::{
    kaplan_meier, pr_auc, reliability_curves, roc_auc, score_records, time_grid, write_curve_csv, write_curve_svg,
    HazardModel, KaplanMeier, ReliabilityCurve,
};
use intervalweib::nn::{map_train, MlpSpec, TrainConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DataKind, ExperimentConfig, LaplaceConfig, ModelKind};
use crate::model::{fit_laplace, fit_mcmc, ModelFile};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_dataset(path: &Path) -> Result<IntervalDataset> {
    Ok(read_dataset(path)?)
}

pub struct DatagenArgs {
    pub kind: Option<DataKind>,
    pub n: Option<usize>,
    pub window: Option<f64>,
    pub source: Option<PathBuf>,
}

/// Writes `data.csv` and its item-level split `train.csv` / `test.csv`.
pub fn datagen(cfg: &mut ExperimentConfig, args: DatagenArgs) -> Result<()> {
    let d = &mut cfg.data;
    d.kind = args.kind.unwrap_or(d.kind);
    d.n = args.n.or(d.n);
    d.window = args.window.or(d.window);
    d.source = args.source.or(d.source.take());
    cfg.validate()?;
    let d = &cfg.data;
    create_dir(&cfg.out)?;
    let window = CensorWindowSpec::new(d.window(), d.max_time)?;
    let synthetic = |base: LabeledPoints, nonlinear: bool| {
        if nonlinear {
            generate_synthetic_2(&base, SYNTHETIC_2_SHAPES, &window, cfg.seed)
        } else {
            generate_synthetic_1(&base, default_class_specs(), &window, cfg.seed)
        }
    };
    let ds = match d.kind {
        DataKind::Moons1 => synthetic(make_moons(d.n(), d.noise, cfg.seed), false)?,
        DataKind::Banana1 => synthetic(make_banana(d.n(), d.noise, cfg.seed), false)?,
        DataKind::Moons2 => synthetic(make_moons(d.n(), d.noise, cfg.seed), true)?,
        DataKind::Banana2 => synthetic(make_banana(d.n(), d.noise, cfg.seed), true)?,
        DataKind::Heartfailure => {
            let src = d.source.as_ref().expect("validated");
            ingest_heartfailure(src, d.window()).with_context(|| format!("ingesting {}", src.display()))?
        }
        DataKind::HeartfailureSurrogate => {
            let src = cfg.out.join("heart_failure_surrogate.csv");
            write_heartfailure_surrogate(&src, d.n(), cfg.seed)?;
            ingest_heartfailure(&src, d.window())?
        }
    };
    let (train, test) = split_by_item(&ds, d.test_fraction, cfg.seed)?;
    write_dataset(&ds, cfg.out.join("data.csv"))?;
    write_dataset(&train, cfg.out.join("train.csv"))?;
    write_dataset(&test, cfg.out.join("test.csv"))?;
    println!(
        "{:?}: {} records over {} items, failure fraction {:.3}; train {} records, test {} records",
        d.kind,
        ds.len(),
        ds.n_items(),
        ds.failure_fraction(),
        train.len(),
        test.len()
    );
    Ok(())
}

/// Outcome of a fit that produced an artifact but failed its diagnostics.
#[derive(Debug)]
pub struct DiagnosticsFailed(pub Vec<String>);

impl std::fmt::Display for DiagnosticsFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "convergence diagnostics failed: {}", self.0.join("; "))
    }
}

impl std::error::Error for DiagnosticsFailed {}

pub fn fit(cfg: &ExperimentConfig, kind: ModelKind, data: Option<PathBuf>) -> Result<()> {
    cfg.validate()?;
    let path = data.unwrap_or_else(|| cfg.train_path());
    let ds = load_dataset(&path)?;
    if ds.is_empty() {
        bail!("training data {} has no records", path.display());
    }
    create_dir(&cfg.out)?;
    let (file, report) = match kind {
        ModelKind::LaplaceNn | ModelKind::Bnn => fit_laplace(cfg, kind, &ds)?,
        _ => fit_mcmc(cfg, kind, &ds)?,
    };
    file.save(&cfg.out.join("model.json"))?;
    intervalweib::write_json(&report, cfg.out.join("fit_report.json"))?;
    println!("fitted {kind:?} on {} records ({} items)", report.records, report.items);
    if let Some(ev) = report.log_marginal_likelihood {
        println!("log marginal likelihood: {ev:.6}");
        println!("prior precision: {}", report.precision.unwrap_or(f64::NAN));
    }
    if let crate::model::ModelBody::Mcmc(m) = &file.body {
        let s = &m.samples;
        println!(
            "{:<12} {:>10} {:>10} {:>8} {:>9} {:>9} {:>10}",
            "parameter", "mean", "sd", "rhat", "ess_bulk", "ess_tail", "mcse"
        );
        let opt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
        for d in &s.diagnostics {
            println!(
                "{:<12} {:>10.4} {:>10.4} {:>8} {:>9} {:>9} {:>10}",
                d.name,
                d.mean,
                d.sd,
                opt(d.rhat, 3),
                opt(d.ess_bulk, 0),
                opt(d.ess_tail, 0),
                opt(d.mcse, 5)
            );
        }
        println!("divergences: {} of {} draws", s.divergences, s.n_draws());
        if let Some(pip) = &m.pip {
            let list: Vec<String> = pip.iter().map(|p| format!("{p:.3}")).collect();
            println!("PIP: {}", list.join(" "));
        }
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.convergence_failures.is_empty() {
        return Err(DiagnosticsFailed(report.convergence_failures).into());
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GridPoint {
    hidden_width: usize,
    precision: f64,
    batch_size: usize,
    learning_rate: f64,
    epochs: usize,
    coordinate_descent: bool,
}

impl GridPoint {
    fn order(&self, other: &Self) -> std::cmp::Ordering {
        self.hidden_width
            .cmp(&other.hidden_width)
            .then(self.precision.total_cmp(&other.precision))
            .then(self.batch_size.cmp(&other.batch_size))
            .then(self.learning_rate.total_cmp(&other.learning_rate))
            .then(self.epochs.cmp(&other.epochs))
            .then(self.coordinate_descent.cmp(&other.coordinate_descent))
    }
}

#[derive(Debug, Clone)]
struct GridRow {
    rank: usize,
    point: GridPoint,
    log_marginal_likelihood: f64,
    map_objective: f64,
}

fn evaluate_point(ds: &IntervalDataset, p: GridPoint, seed: u64) -> Result<(f64, f64)> {
    let spec = MlpSpec::with_width(ds.n_features(), p.hidden_width);
    let train = TrainConfig {
        learning_rate: p.learning_rate,
        batch_size: p.batch_size,
        epochs: p.epochs,
        precision: p.precision,
        coordinate_descent: p.coordinate_descent,
        seed,
    };
    let report = map_train(&spec, ds, &train)?;
    let post = LaplacePosterior::fit(&spec, &report.params, ds, p.precision)?;
    Ok((post.log_marginal_likelihood, report.objective))
}

/// Trains every grid combination on the training data and ranks them by
/// Laplace evidence. Writes `gridsearch.csv` and `best.toml`.
pub fn gridsearch(cfg: &ExperimentConfig, data: Option<PathBuf>, parallel: bool) -> Result<()> {
    cfg.validate()?;
    let g = &cfg.grid;
    let mut points = Vec::new();
    for &hidden_width in &g.hidden_width {
        for &precision in &g.precision {
            for &batch_size in &g.batch_size {
                for &learning_rate in &g.learning_rate {
                    for &epochs in &g.epochs {
                        for &coordinate_descent in &g.coordinate_descent {
                            points.push(GridPoint {
                                hidden_width,
                                precision,
                                batch_size,
                                learning_rate,
                                epochs,
                                coordinate_descent,
                            });
                        }
                    }
                }
            }
        }
    }
    if points.is_empty() {
        return Err(crate::UsageError("hyperparameter grid is empty".into()).into());
    }
    for p in &points {
        let t = TrainConfig {
            learning_rate: p.learning_rate,
            batch_size: p.batch_size,
            epochs: p.epochs,
            precision: p.precision,
            coordinate_descent: p.coordinate_descent,
            seed: cfg.seed,
        };
        t.validate().map_err(|e| crate::UsageError(format!("grid point {p:?}: {e}")))?;
    }
    let path = data.unwrap_or_else(|| cfg.train_path());
    let raw = load_dataset(&path)?;
    let ds = Standardizer::fit(&raw)?.apply(&raw)?;
    let results: Vec<Result<(f64, f64)>> = if parallel || g.parallel {
        points.par_iter().map(|&p| evaluate_point(&ds, p, cfg.seed)).collect()
    } else {
        points.iter().map(|&p| evaluate_point(&ds, p, cfg.seed)).collect()
    };
    let mut rows = Vec::with_capacity(points.len());
    for (point, r) in points.into_iter().zip(results) {
        let (ev, obj) = r?;
        rows.push(GridRow {
            rank: 0,
            point,
            log_marginal_likelihood: ev,
            map_objective: obj,
        });
    }
    let key = |r: &GridRow| {
        if r.log_marginal_likelihood.is_nan() {
            f64::NEG_INFINITY
        } else {
            r.log_marginal_likelihood
        }
    };
    rows.sort_by(|a, b| key(b).total_cmp(&key(a)).then(a.point.order(&b.point)));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    create_dir(&cfg.out)?;
    let table = cfg.out.join("gridsearch.csv");
    let mut w = csv::Writer::from_path(&table).with_context(|| format!("writing {}", table.display()))?;
    w.write_record([
        "rank",
        "hidden_width",
        "precision",
        "batch_size",
        "learning_rate",
        "epochs",
        "coordinate_descent",
        "log_marginal_likelihood",
        "map_objective",
    ])?;
    for r in &rows {
        let p = r.point;
        w.write_record([
            r.rank.to_string(),
            p.hidden_width.to_string(),
            format!("{:?}", p.precision),
            p.batch_size.to_string(),
            format!("{:?}", p.learning_rate),
            p.epochs.to_string(),
            p.coordinate_descent.to_string(),
            format!("{:?}", r.log_marginal_likelihood),
            format!("{:?}", r.map_objective),
        ])?;
    }
    w.flush()?;
    let best = rows[0].point;
    let laplace = LaplaceConfig {
        hidden_width: best.hidden_width,
        train: TrainConfig {
            learning_rate: best.learning_rate,
            batch_size: best.batch_size,
            epochs: best.epochs,
            precision: best.precision,
            coordinate_descent: best.coordinate_descent,
            seed: cfg.seed,
        },
        ..cfg.laplace.clone()
    };
    #[derive(Serialize)]
    struct Best<'a> {
        laplace: &'a LaplaceConfig,
    }
    let text = toml::to_string(&Best { laplace: &laplace })?;
    fs::write(cfg.out.join("best.toml"), text)?;
    println!("{:>4} {:>6} {:>10} {:>6} {:>8} {:>6} {:>5} {:>14}", "rank", "hidden", "precision", "batch", "lr", "epochs", "cd", "evidence");
    for r in &rows {
        let p = r.point;
        println!(
            "{:>4} {:>6} {:>10} {:>6} {:>8} {:>6} {:>5} {:>14.4}",
            r.rank, p.hidden_width, p.precision, p.batch_size, p.learning_rate, p.epochs, p.coordinate_descent, r.log_marginal_likelihood
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub roc_auc: f64,
    pub pr_auc: f64,
}

fn score_model(file: &ModelFile, ds: &IntervalDataset) -> Result<Scores> {
    file.check_features(ds)?;
    let predictor = file.predictor()?;
    let scores = score_records(&predictor, ds);
    let labels = ds.labels();
    Ok(Scores {
        roc_auc: roc_auc(&scores, &labels)?,
        pr_auc: pr_auc(&scores, &labels)?,
    })
}

/// ROC-AUC and PR-AUC on held-out records, optionally relative to a
/// reference model. Writes `metrics.csv`.
pub fn evaluate(
    cfg: &ExperimentConfig,
    artifact: Option<PathBuf>,
    data: Option<PathBuf>,
    relative_to: Option<PathBuf>,
) -> Result<()> {
    let artifact = artifact.unwrap_or_else(|| cfg.out.join("model.json"));
    let file = ModelFile::load(&artifact)?;
    let ds = load_dataset(&data.unwrap_or_else(|| cfg.test_path()))?;
    let scores = score_model(&file, &ds)?;
    let reference = match &relative_to {
        Some(p) => Some(score_model(&ModelFile::load(p)?, &ds)?),
        None => None,
    };
    create_dir(&cfg.out)?;
    let path = cfg.out.join("metrics.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["metric", "value"];
    if reference.is_some() {
        header.extend(["reference", "relative_pct"]);
    }
    w.write_record(&header)?;
    println!("model {:?} on {} records", file.kind, ds.len());
    for (name, value, reference) in [
        ("roc_auc", scores.roc_auc, reference.map(|r| r.roc_auc)),
        ("pr_auc", scores.pr_auc, reference.map(|r| r.pr_auc)),
    ] {
        let mut row = vec![name.to_string(), format!("{value:?}")];
        match reference {
            Some(b) => {
                let rel = 100.0 * (value - b) / b;
                row.extend([format!("{b:?}"), format!("{rel:.2}")]);
                println!("{name}: {value:.4} (reference {b:.4}, {rel:+.2}%)");
            }
            None => println!("{name}: {value:.4}"),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn file_stem(item: &str) -> String {
    item.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn emit_curve(dir: &Path, stem: &str, title: &str, curve: &ReliabilityCurve, km: Option<&KaplanMeier>) -> Result<()> {
    write_curve_csv(curve, km, dir.join(format!("{stem}.csv")))?;
    write_curve_svg(curve, km, title, dir.join(format!("{stem}.svg")))?;
    Ok(())
}

/// Population and per-item reliability curves with credible bands, written
/// under `<out>/curves/`.
pub fn curves(
    cfg: &ExperimentConfig,
    artifact: Option<PathBuf>,
    data: Option<PathBuf>,
    km: bool,
    items: Vec<String>,
) -> Result<()> {
    cfg.validate()?;
    let artifact = artifact.unwrap_or_else(|| cfg.out.join("model.json"));
    let file = ModelFile::load(&artifact)?;
    let ds = load_dataset(&data.unwrap_or_else(|| cfg.test_path()))?;
    file.check_features(&ds)?;
    if ds.is_empty() {
        bail!("dataset has no records");
    }
    let predictor = file.predictor()?;
    let c = &cfg.curves;
    let t_max = c
        .t_max
        .unwrap_or_else(|| ds.records().iter().map(|r| r.t_age).fold(0.0, f64::max));
    let grid = time_grid(t_max, c.points);
    let ids: Vec<(String, Vec<f64>)> = ds
        .items()
        .map(|(id, idx)| (id.to_string(), ds.records()[idx[0]].x.clone()))
        .collect();
    let draws: Vec<_> = ids.iter().map(|(_, x)| predictor.hazard_draws(x)).collect();
    let (per_item, population) = reliability_curves(&draws, &grid, c.level)?;
    let km = if km { Some(kaplan_meier(&ds)?) } else { None };
    let dir = cfg.out.join("curves");
    create_dir(&dir)?;
    let label = format!("{:?}", file.kind);
    emit_curve(&dir, "population", &format!("{label}: population"), &population, km.as_ref())?;
    let wanted: Vec<String> = if !items.is_empty() {
        items
    } else if !c.items.is_empty() {
        c.items.clone()
    } else {
        ids.iter().take(3).map(|(id, _)| id.clone()).collect()
    };
    for item in &wanted {
        let Some(i) = ids.iter().position(|(id, _)| id == item) else {
            bail!("item {item} is not in the dataset");
        };
        emit_curve(&dir, &format!("item_{}", file_stem(item)), &format!("{label}: {item}"), &per_item[i], None)?;
    }
    println!(
        "wrote population curve and {} item curves ({} grid points to t = {t_max}) to {}",
        wanted.len(),
        grid.len(),
        dir.display()
    );
    Ok(())
}
