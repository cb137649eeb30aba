//! Deterministic SVG 1.1 figures from the pipeline's CSV tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pclab_core::model::Condition;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn colour(c: Condition) -> &'static str {
    match c {
        Condition::StdPcCe => "#c0392b",
        Condition::StdPcMse => "#2471a3",
        Condition::Bpc => "#1e8449",
    }
}

/// A CSV table addressed by column name.
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    name: String,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let rows = r.records().map(|rec| Ok(rec?.iter().map(str::to_string).collect())).collect::<Result<Vec<Vec<String>>>>()?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if rows.is_empty() {
            bail!("{name} has no rows");
        }
        Ok(Self { headers, rows, name })
    }

    fn col(&self, column: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == column)
            .with_context(|| format!("{} lacks column {column:?} (has {:?})", self.name, self.headers))
    }

    pub fn strings(&self, column: &str) -> Result<Vec<&str>> {
        let i = self.col(column)?;
        Ok(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn numbers(&self, column: &str) -> Result<Vec<f64>> {
        self.strings(column)?
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.parse::<f64>().with_context(|| format!("{} row {} column {column:?}: {s:?}", self.name, i + 1)))
            .collect()
    }
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn around(values: &[f64], include_zero: bool) -> Self {
        let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if include_zero {
            lo = lo.min(0.0);
            hi = hi.max(0.0);
        }
        let pad = if hi > lo { 0.08 * (hi - lo) } else { 0.5f64.max(hi.abs() * 0.1) };
        Self { lo: lo - pad, hi: hi + pad }
    }

    fn y(&self, v: f64) -> f64 {
        TOP + (H - TOP - BOTTOM) * (self.hi - v) / (self.hi - self.lo)
    }

    fn x(&self, v: f64) -> f64 {
        LEFT + (W - LEFT - RIGHT) * (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).collect()
    }
}

fn header(title: &str) -> String {
    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title)).unwrap();
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn y_axis(s: &mut String, axis: &Axis, label: &str) {
    writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#, H - BOTTOM).unwrap();
    for t in axis.ticks() {
        let y = axis.y(t);
        writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{t:.3}</text>"#, LEFT - 8.0, y + 4.0).unwrap();
    }
    writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0,
        escape(label)
    )
    .unwrap();
}

fn x_axis_line(s: &mut String) {
    writeln!(s, r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#, H - BOTTOM, W - RIGHT, H - BOTTOM).unwrap();
}

/// Per-seed values grouped by condition, in condition order.
fn by_condition(table: &Table, column: &str) -> Result<Vec<(Condition, Vec<(u64, f64)>)>> {
    let conds = table.strings("condition")?;
    let seeds = table.numbers("seed")?;
    let values = table.numbers(column)?;
    let mut out = Vec::new();
    for c in Condition::ALL {
        let mut pts: Vec<(u64, f64)> = conds
            .iter()
            .zip(seeds.iter().zip(&values))
            .filter(|(name, _)| **name == c.label())
            .map(|(_, (&s, &v))| (s as u64, v))
            .collect();
        pts.sort_by_key(|p| p.0);
        if !pts.is_empty() {
            out.push((c, pts));
        }
    }
    if out.is_empty() {
        bail!("{} has no rows for known conditions", table.name);
    }
    Ok(out)
}

fn condition_x(i: usize, n: usize) -> f64 {
    LEFT + (W - LEFT - RIGHT) * (i as f64 + 0.5) / n as f64
}

fn condition_labels(s: &mut String, groups: &[(Condition, Vec<(u64, f64)>)]) {
    for (i, (c, _)) in groups.iter().enumerate() {
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, condition_x(i, groups.len()), H - BOTTOM + 20.0, c.label()).unwrap();
    }
}

fn mean_bars(s: &mut String, groups: &[(Condition, Vec<(u64, f64)>)], axis: &Axis) {
    for (i, (c, pts)) in groups.iter().enumerate() {
        let m = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let x = condition_x(i, groups.len());
        writeln!(
            s,
            r#"<line class="mean" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="3"/>"#,
            x - 30.0,
            axis.y(m),
            x + 30.0,
            axis.y(m),
            colour(*c)
        )
        .unwrap();
    }
}

/// Δ per seed and condition with matched-seed links between adjacent conditions.
pub fn fig1(summary: &Table) -> Result<String> {
    let groups = by_condition(summary, "delta")?;
    let all: Vec<f64> = groups.iter().flat_map(|g| g.1.iter().map(|p| p.1)).collect();
    let axis = Axis::around(&all, true);
    let mut s = header("Probe minus softmax AUROC2 per seed");
    y_axis(&mut s, &axis, "delta AUROC2");
    x_axis_line(&mut s);
    writeln!(s, r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="grey" stroke-dasharray="2,3"/>"#, axis.y(0.0), W - RIGHT, axis.y(0.0)).unwrap();
    for i in 0..groups.len().saturating_sub(1) {
        let (a, b) = (&groups[i].1, &groups[i + 1].1);
        for &(seed, va) in a {
            if let Some(&(_, vb)) = b.iter().find(|p| p.0 == seed) {
                writeln!(
                    s,
                    r#"<line class="link" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="silver"/>"#,
                    condition_x(i, groups.len()),
                    axis.y(va),
                    condition_x(i + 1, groups.len()),
                    axis.y(vb)
                )
                .unwrap();
            }
        }
    }
    for (i, (c, pts)) in groups.iter().enumerate() {
        for &(seed, v) in pts {
            writeln!(
                s,
                r#"<circle class="seed" cx="{:.2}" cy="{:.2}" r="4" fill="{}"><title>seed {seed}: {v}</title></circle>"#,
                condition_x(i, groups.len()),
                axis.y(v),
                colour(*c)
            )
            .unwrap();
        }
    }
    mean_bars(&mut s, &groups, &axis);
    condition_labels(&mut s, &groups);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Mean output logit norm per seed and condition.
pub fn fig2(summary: &Table) -> Result<String> {
    let groups = by_condition(summary, "logit_norm")?;
    let all: Vec<f64> = groups.iter().flat_map(|g| g.1.iter().map(|p| p.1)).collect();
    let axis = Axis::around(&all, true);
    let mut s = header("Output logit norm (L2) per seed");
    y_axis(&mut s, &axis, "mean logit norm");
    x_axis_line(&mut s);
    for (i, (c, pts)) in groups.iter().enumerate() {
        for (j, &(seed, v)) in pts.iter().enumerate() {
            let jitter = (j as f64 - (pts.len() as f64 - 1.0) / 2.0) * 6.0;
            writeln!(
                s,
                r#"<circle class="seed" cx="{:.2}" cy="{:.2}" r="4" fill="{}"><title>seed {seed}: {v}</title></circle>"#,
                condition_x(i, groups.len()) + jitter,
                axis.y(v),
                colour(*c)
            )
            .unwrap();
        }
    }
    mean_bars(&mut s, &groups, &axis);
    condition_labels(&mut s, &groups);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Softmax AUROC₂ against temperature, the probe reference and the norm-matched T.
pub fn fig3(temperature: &Table, probe_auroc2: f64) -> Result<String> {
    let ts = temperature.numbers("T")?;
    let a = temperature.numbers("auroc2_mean")?;
    let matched = temperature.strings("norm_matched")?;
    let mut all = a.clone();
    all.push(probe_auroc2);
    let ya = Axis::around(&all, false);
    let xa = Axis::around(&ts, true);
    let mut s = header("Softmax AUROC2 under temperature scaling (stdpc-ce)");
    y_axis(&mut s, &ya, "softmax AUROC2");
    x_axis_line(&mut s);
    for t in xa.ticks() {
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t:.1}</text>"#, xa.x(t), H - BOTTOM + 18.0).unwrap();
    }
    writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">T</text>"#, (LEFT + W - RIGHT) / 2.0, H - 15.0).unwrap();
    let pts: Vec<String> = ts.iter().zip(&a).map(|(&t, &v)| format!("{:.2},{:.2}", xa.x(t), ya.y(v))).collect();
    writeln!(s, r#"<polyline class="softmax" points="{}" fill="none" stroke="{}" stroke-width="2"/>"#, pts.join(" "), colour(Condition::StdPcCe)).unwrap();
    for (&t, &v) in ts.iter().zip(&a) {
        writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"><title>T {t}: {v}</title></circle>"#, xa.x(t), ya.y(v), colour(Condition::StdPcCe)).unwrap();
    }
    writeln!(
        s,
        r#"<line class="probe" x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="2" stroke-dasharray="8,5"/>"#,
        ya.y(probe_auroc2),
        W - RIGHT,
        ya.y(probe_auroc2),
        colour(Condition::Bpc)
    )
    .unwrap();
    if let Some(i) = matched.iter().position(|m| *m == "true") {
        let x = xa.x(ts[i]);
        writeln!(s, r#"<line class="matched" x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-dasharray="2,3"/>"#, H - BOTTOM).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `figures/fig1.svg`, `fig2.svg` and `fig3.svg`; nothing is written if any figure fails.
pub fn emit_figures(dir: &Path) -> Result<()> {
    let summary = Table::read(&dir.join("summary.csv"))?;
    let temperature = Table::read(&dir.join("temperature.csv"))?;
    let conds = summary.strings("condition")?;
    let probe: Vec<f64> = summary
        .numbers("probe_auroc2")?
        .into_iter()
        .zip(&conds)
        .filter(|(_, c)| **c == Condition::StdPcCe.label())
        .map(|(v, _)| v)
        .collect();
    if probe.is_empty() {
        bail!("summary.csv has no stdpc-ce rows for the probe reference line");
    }
    let probe_mean = probe.iter().sum::<f64>() / probe.len() as f64;
    let figs = [("fig1.svg", fig1(&summary)?), ("fig2.svg", fig2(&summary)?), ("fig3.svg", fig3(&temperature, probe_mean)?)];
    let out = dir.join("figures");
    fs::create_dir_all(&out)?;
    for (name, svg) in figs {
        fs::write(out.join(name), svg)?;
    }
    Ok(())
}
