use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gesopt::trainer::{Curve, Metrics, RunReport};

use crate::CliError;

fn mu_field(mu: &[f64]) -> String {
    mu.iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_metrics(dir: &Path, metrics: &Metrics) -> Result<(), CliError> {
    fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(metrics)? + "\n",
    )?;
    let mut w = csv::Writer::from_path(dir.join("per_mu.csv"))?;
    w.write_record([
        "mu",
        "hausdorff",
        "optimality_error",
        "l2_error",
        "energy",
        "exact_energy",
    ])?;
    for m in &metrics.per_mu {
        w.write_record([
            mu_field(&m.mu),
            opt(m.hausdorff),
            opt(m.optimality_error),
            opt(m.l2_error),
            opt(m.energy),
            opt(m.exact_energy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_loss_history(dir: &Path, history: &[f64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(dir.join("loss_history.csv"))?;
    w.write_record(["epoch", "loss"])?;
    for (k, l) in history.iter().enumerate() {
        w.write_record([(k + 1).to_string(), num(*l)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_boundary(dir: &Path, curves: &[Curve]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(dir.join("boundary_points.csv"))?;
    w.write_record(["mu", "t", "x1", "x2"])?;
    for c in curves {
        let mu = mu_field(&c.mu);
        for (t, p) in c.t.iter().zip(&c.learned) {
            w.write_record([mu.clone(), num(*t), num(p[0]), num(p[1])])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_field(dir: &Path, report: &RunReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(dir.join("field.csv"))?;
    w.write_record(["mu", "x1", "x2", "u", "err"])?;
    for s in &report.field_samples {
        w.write_record([
            mu_field(&s.mu),
            num(s.y[0]),
            num(s.y[1]),
            num(s.u),
            opt(s.err),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn polygon(out: &mut String, pts: &[[f64; 2]], color: &str) {
    let coords: Vec<String> = pts
        .iter()
        .map(|p| format!("{:.6},{:.6}", p[0], -p[1]))
        .collect();
    let _ = writeln!(
        out,
        r#"  <polygon points="{}" fill="none" stroke="{color}" stroke-width="1.5" vector-effect="non-scaling-stroke"/>"#,
        coords.join(" ")
    );
}

/// Learned boundaries in green, reference shapes in red, obstacle in black.
pub fn shapes_svg(report: &RunReport) -> String {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut grow = |p: [f64; 2]| {
        for k in 0..2 {
            if p[k].is_finite() {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
    };
    for c in &report.curves {
        c.learned.iter().chain(&c.reference).for_each(|&p| grow(p));
    }
    if let Some(ob) = report.obstacle {
        grow([-ob.a, -ob.b]);
        grow([ob.a, ob.b]);
    }
    if !lo[0].is_finite() {
        lo = [-1.0, -1.0];
        hi = [1.0, 1.0];
    }
    let pad = 0.05 * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let (x0, y0) = (lo[0] - pad, -hi[1] - pad);
    let (w, h) = (hi[0] - lo[0] + 2.0 * pad, hi[1] - lo[1] + 2.0 * pad);
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="600" height="{:.0}" viewBox="{x0:.6} {y0:.6} {w:.6} {h:.6}">"#,
        600.0 * h / w
    );
    let _ = writeln!(
        out,
        "  <title>{}: learned (green), reference (red)</title>",
        report.metrics.case
    );
    for c in &report.curves {
        if !c.reference.is_empty() {
            polygon(&mut out, &c.reference, "red");
        }
    }
    for c in &report.curves {
        polygon(&mut out, &c.learned, "green");
    }
    if let Some(ob) = report.obstacle {
        let _ = writeln!(
            out,
            r#"  <ellipse cx="0" cy="0" rx="{:.6}" ry="{:.6}" fill="none" stroke="black" stroke-width="1.5" vector-effect="non-scaling-stroke"/>"#,
            ob.a, ob.b
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Everything except the loss history.
pub fn write_evaluation(dir: &Path, report: &RunReport) -> Result<(), CliError> {
    write_metrics(dir, &report.metrics)?;
    write_boundary(dir, &report.curves)?;
    write_field(dir, report)?;
    fs::write(dir.join("shapes.svg"), shapes_svg(report))?;
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3e}"))
}

const GROUPS: [&str; 5] = [
    "hausdorff",
    "optimality_error",
    "l2_error",
    "variational_residual",
    "energy",
];

/// Aligned table with one row per run and mean/max/min/std per metric.
pub fn report_table(runs: &[(String, Metrics)]) -> String {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut head = vec!["case".to_string(), "epochs".to_string(), "run".to_string()];
    for g in GROUPS {
        for s in ["mean", "max", "min", "std"] {
            head.push(format!("{g}.{s}"));
        }
    }
    rows.push(head);
    let mut sorted: Vec<&(String, Metrics)> = runs.iter().collect();
    sorted.sort_by(|a, b| a.1.case.cmp(&b.1.case));
    for (path, m) in sorted {
        let mut row = vec![m.case.clone(), m.epochs.to_string(), path.clone()];
        for s in [
            m.hausdorff,
            m.optimality_error,
            m.l2_error,
            m.variational_residual,
            m.energy,
        ] {
            row.push(cell(s.map(|s| s.mean)));
            row.push(cell(s.map(|s| s.max)));
            row.push(cell(s.map(|s| s.min)));
            row.push(cell(s.map(|s| s.std)));
        }
        rows.push(row);
    }
    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, &w))| {
                if c < 3 {
                    format!("{s:<w$}")
                } else {
                    format!("{s:>w$}")
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
