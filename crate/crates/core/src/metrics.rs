//! Ranking metrics over per-interval failure scores, the Kaplan-Meier
//! estimator, and posterior reliability curves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::IntervalDataset;
use crate::error::{Error, Result};
use crate::mcmc::diagnostics::quantile_sorted;
use crate::survival::HazardDraw;

fn check_scored(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter(format!("score {s} is not finite")));
    }
    if let Some(l) = labels.iter().find(|l| **l > 1) {
        return Err(Error::InvalidParameter(format!("label {l} is not 0 or 1")));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_scored(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidParameter("ROC-AUC needs both classes".into()));
    }
    let ranks = crate::mcmc::diagnostics::average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: precision summed over recall increments, with tied
/// scores forming a single threshold.
pub fn pr_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, _) = check_scored(scores, labels)?;
    if pos == 0 {
        return Err(Error::InvalidParameter("PR-AUC needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut group_pos = 0;
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                group_pos += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        tp += group_pos;
        if group_pos > 0 {
            ap += group_pos as f64 / pos as f64 * tp as f64 / (tp + fp) as f64;
        }
        i = j;
    }
    Ok(ap)
}

/// Right-continuous product-limit survival curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeier {
    /// Distinct event times, increasing.
    pub times: Vec<f64>,
    /// Survival just after each event time.
    pub survival: Vec<f64>,
}

impl KaplanMeier {
    pub fn at(&self, t: f64) -> f64 {
        match self.times.iter().rposition(|&e| e <= t) {
            Some(i) => self.survival[i],
            None => 1.0,
        }
    }
}

/// Kaplan-Meier over items: an item's event time is the right end of its
/// failing interval, otherwise it is censored at its last inspection.
/// Items censored at an event time are still at risk there.
pub fn kaplan_meier(ds: &IntervalDataset) -> Result<KaplanMeier> {
    if ds.is_empty() {
        return Err(Error::InvalidDataset("Kaplan-Meier of an empty dataset".into()));
    }
    let mut obs: Vec<(f64, bool)> = Vec::with_capacity(ds.n_items());
    for (id, idx) in ds.items() {
        let recs: Vec<_> = idx.iter().map(|&i| &ds.records()[i]).collect();
        let failures: Vec<_> = recs.iter().filter(|r| r.failed()).collect();
        match failures.as_slice() {
            [] => obs.push((recs.iter().map(|r| r.t_age).fold(f64::MIN, f64::max), false)),
            [f] => obs.push((f.t_age, true)),
            _ => {
                return Err(Error::InvalidDataset(format!(
                    "item {id} fails more than once; Kaplan-Meier needs non-repairable items"
                )))
            }
        }
    }
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut at_risk = obs.len();
    let mut s = 1.0;
    let (mut times, mut survival) = (Vec::new(), Vec::new());
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let mut j = i;
        let mut events = 0;
        while j < obs.len() && obs[j].0 == t {
            events += obs[j].1 as usize;
            j += 1;
        }
        if events > 0 {
            s *= 1.0 - events as f64 / at_risk as f64;
            times.push(t);
            survival.push(s);
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(KaplanMeier { times, survival })
}

/// Pointwise posterior mean and central credible band of `R(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityCurve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
}

/// `n` evenly spaced ages from 0 to `t_max` inclusive.
pub fn time_grid(t_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect(),
    }
}

fn check_grid(grid: &[f64], level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("credible level {level} not in (0, 1)")));
    }
    if grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("time grid must be increasing and non-negative".into()));
    }
    Ok(())
}

/// Summarises per-draw curves `values[s][t]` pointwise. The band is widened
/// when needed so that it always contains the mean.
fn summarize_curves(times: &[f64], values: &[Vec<f64>], level: f64) -> ReliabilityCurve {
    let n = values.len() as f64;
    let (lo_q, hi_q) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    let mut curve = ReliabilityCurve {
        times: times.to_vec(),
        mean: Vec::with_capacity(times.len()),
        lower: Vec::with_capacity(times.len()),
        upper: Vec::with_capacity(times.len()),
        level,
    };
    let mut column = Vec::with_capacity(values.len());
    for t in 0..times.len() {
        column.clear();
        column.extend(values.iter().map(|v| v[t]));
        let mean = column.iter().sum::<f64>() / n;
        let mean = if column.iter().all(|&v| v == column[0]) { column[0] } else { mean };
        column.sort_by(f64::total_cmp);
        curve.mean.push(mean);
        curve.lower.push(quantile_sorted(&column, lo_q).min(mean));
        curve.upper.push(quantile_sorted(&column, hi_q).max(mean));
    }
    curve
}

/// Reliability curve of one item from its posterior hazard draws.
pub fn reliability_curve(draws: &[HazardDraw], grid: &[f64], level: f64) -> Result<ReliabilityCurve> {
    check_grid(grid, level)?;
    if draws.is_empty() {
        return Err(Error::InvalidParameter("no posterior draws".into()));
    }
    let values: Vec<Vec<f64>> = draws
        .iter()
        .map(|d| grid.iter().map(|&t| d.reliability(t)).collect())
        .collect();
    Ok(summarize_curves(grid, &values, level))
}

/// Per-item curves and the population curve. `draws[i][s]` is draw `s` for
/// item `i`; the population curve averages items within each draw before
/// taking quantiles.
pub fn reliability_curves(
    draws: &[Vec<HazardDraw>],
    grid: &[f64],
    level: f64,
) -> Result<(Vec<ReliabilityCurve>, ReliabilityCurve)> {
    check_grid(grid, level)?;
    let s = draws.first().map_or(0, Vec::len);
    if s == 0 || draws.iter().any(|d| d.len() != s) {
        return Err(Error::InvalidParameter(
            "every item needs the same, non-zero number of draws".into(),
        ));
    }
    let items = draws
        .iter()
        .map(|d| reliability_curve(d, grid, level))
        .collect::<Result<Vec<_>>>()?;
    let m = draws.len() as f64;
    let population: Vec<Vec<f64>> = (0..s)
        .map(|k| {
            grid.iter()
                .map(|&t| draws.iter().map(|d| d[k].reliability(t)).sum::<f64>() / m)
                .collect()
        })
        .collect();
    Ok((items, summarize_curves(grid, &population, level)))
}

/// CSV with columns `t,mean,lo,hi` and, with a KM curve, `km`.
pub fn write_curve_csv(curve: &ReliabilityCurve, km: Option<&KaplanMeier>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t", "mean", "lo", "hi"];
    if km.is_some() {
        header.push("km");
    }
    w.write_record(&header)?;
    for i in 0..curve.times.len() {
        let mut row = vec![
            format!("{:?}", curve.times[i]),
            format!("{:?}", curve.mean[i]),
            format!("{:?}", curve.lower[i]),
            format!("{:?}", curve.upper[i]),
        ];
        if let Some(k) = km {
            row.push(format!("{:?}", k.at(curve.times[i])));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Line plot of the mean with a shaded band, plus an optional KM step curve.
pub fn curve_svg(curve: &ReliabilityCurve, km: Option<&KaplanMeier>, title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    let t_max = curve.times.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let x = |t: f64| PAD + (W - 2.0 * PAD) * t / t_max;
    let y = |r: f64| H - PAD - (H - 2.0 * PAD) * r.clamp(0.0, 1.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let mut band = String::new();
    for (t, u) in curve.times.iter().zip(&curve.upper) {
        let _ = write!(band, "{:.2},{:.2} ", x(*t), y(*u));
    }
    for (t, l) in curve.times.iter().zip(&curve.lower).rev() {
        let _ = write!(band, "{:.2},{:.2} ", x(*t), y(*l));
    }
    let _ = writeln!(
        s,
        r#"<polygon points="{}" fill="steelblue" fill-opacity="0.3" stroke="none"/>"#,
        band.trim_end()
    );
    let line: Vec<String> = curve
        .times
        .iter()
        .zip(&curve.mean)
        .map(|(t, m)| format!("{:.2},{:.2}", x(*t), y(*m)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        line.join(" ")
    );
    if let Some(k) = km {
        let mut pts = vec![format!("{:.2},{:.2}", x(0.0), y(1.0))];
        let mut last = 1.0;
        for (t, v) in k.times.iter().zip(&k.survival).take_while(|(t, _)| **t <= t_max) {
            pts.push(format!("{:.2},{:.2}", x(*t), y(last)));
            pts.push(format!("{:.2},{:.2}", x(*t), y(*v)));
            last = *v;
        }
        pts.push(format!("{:.2},{:.2}", x(t_max), y(last)));
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5" stroke-dasharray="4 3"/>"#,
            pts.join(" ")
        );
    }
    let (x0, x1, y0, y1) = (x(0.0), x(t_max), y(0.0), y(1.0));
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
    );
    for (v, label) in [(0.0, "0"), (0.5, "0.5"), (1.0, "1")] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{label}</text>"#,
            x0 - 6.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{x1:.2}" y="{:.2}" font-size="12" text-anchor="end">t = {t_max}</text>"#,
        y0 + 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" font-size="14" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_curve_svg(
    curve: &ReliabilityCurve,
    km: Option<&KaplanMeier>,
    title: &str,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, curve_svg(curve, km, title)).map_err(|e| Error::io(path, e))
}

/// A fitted model that yields posterior hazard draws at covariates `x`.
pub trait HazardModel {
    fn hazard_draws(&self, x: &[f64]) -> Vec<HazardDraw>;
}

/// Posterior-predictive mean failure probability of every record over its
/// own interval.
pub fn score_records(model: &dyn HazardModel, ds: &IntervalDataset) -> Vec<f64> {
    let mut out = Vec::with_capacity(ds.len());
    let mut cache: Option<(&[f64], Vec<HazardDraw>)> = None;
    for r in ds.records() {
        if cache.as_ref().is_none_or(|(x, _)| *x != r.x.as_slice()) {
            cache = Some((&r.x, model.hazard_draws(&r.x)));
        }
        let draws = &cache.as_ref().unwrap().1;
        let p: Vec<f64> = draws.iter().map(|d| d.failure_probability(r.t_agelt, r.t_age)).collect();
        out.push(crate::laplace::running_mean(&p));
    }
    out
}
