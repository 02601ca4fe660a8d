//! Plain-text and CSV renderings of an analysis report, and the on-disk
//! layout of its output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{AnalysisError, AnalysisReport, AveragedRow, IntervalBlock, WeightRow};
use crate::returns::{portfolio_hurst, portfolio_return, portfolio_variance, WeightVector};
use crate::simplex::SimplexGrid;

/// Which table to render.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Local,
    Global,
    Averaged,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTable {
    pub text: String,
    pub csv: String,
}

/// Weight entries to two decimals, e.g. `(0.40,0.48,0.12)`.
pub fn format_weight(w: &WeightVector) -> String {
    format!("{w:.2}")
}

/// Two significant figures in percent, e.g. `0.0012 → 0.12%`.
pub fn format_percent(x: f64) -> String {
    let v = x * 100.0;
    if v == 0.0 || !v.is_finite() {
        return format!("{v:.1}%");
    }
    let mut exp = v.abs().log10().floor() as i32 - 1;
    let mut rounded = (v / 10f64.powi(exp)).round() * 10f64.powi(exp);
    if rounded.abs() >= 10f64.powi(exp + 2) {
        exp += 1;
        rounded = (v / 10f64.powi(exp)).round() * 10f64.powi(exp);
    }
    let decimals = (-exp).max(0) as usize;
    format!("{rounded:.decimals$}%")
}

pub fn format_volatility(x: f64) -> String {
    format!("{x:.4}")
}

fn format_spread(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("({})", parts.join(","))
}

fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        String::new()
    }
}

/// Fixed-width text table; the first column holds row names.
fn text_grid(title: &str, header: &[String], rows: &[(String, Vec<String>)]) -> String {
    let cols = header.len();
    let mut widths = vec![0usize; cols + 1];
    for (name, cells) in rows {
        widths[0] = widths[0].max(name.chars().count());
        for (i, c) in cells.iter().enumerate() {
            widths[i + 1] = widths[i + 1].max(c.chars().count());
        }
    }
    for (i, h) in header.iter().enumerate() {
        widths[i + 1] = widths[i + 1].max(h.chars().count());
    }
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w - s.chars().count()));
    let mut out = format!("{title}\n");
    let mut line = pad("", widths[0]);
    for (i, h) in header.iter().enumerate() {
        line.push_str("  ");
        line.push_str(&pad(h, widths[i + 1]));
    }
    out.push_str(line.trim_end());
    out.push('\n');
    for (name, cells) in rows {
        let mut line = pad(name, widths[0]);
        for (i, c) in cells.iter().enumerate() {
            line.push_str("  ");
            line.push_str(&pad(c, widths[i + 1]));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn csv_line(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(fields).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("utf-8 input")
}

fn weight_header(assets: &[String]) -> Vec<String> {
    assets.iter().map(|a| format!("w_{a}")).collect()
}

fn row_header(label: &WeightRow) -> String {
    format!("{} [{}]", label.label, label.method)
}

fn block_rows(block: &IntervalBlock, kind: TableKind) -> Vec<&WeightRow> {
    match kind {
        TableKind::Local => block.local_rows.iter().collect(),
        _ => block.global_rows.iter().chain(block.pareto.row.as_ref()).collect(),
    }
}

fn weight_table_text(report: &AnalysisReport, kind: TableKind) -> String {
    let (title, names) = match kind {
        TableKind::Local => ("Local optimal weights", ["LOW", "DMR", "VR"]),
        _ => ("Optimal weights", ["OW", "ODMR", "VR"]),
    };
    let mut out = String::new();
    for block in &report.blocks {
        let rows = block_rows(block, kind);
        let header: Vec<String> = rows.iter().map(|r| row_header(r)).collect();
        let body = vec![
            (
                names[0].to_string(),
                rows.iter().map(|r| format_weight(&r.weight)).collect(),
            ),
            (
                names[1].to_string(),
                rows.iter().map(|r| format_percent(r.daily_mean_return)).collect(),
            ),
            (
                names[2].to_string(),
                rows.iter().map(|r| format_volatility(r.volatility)).collect(),
            ),
        ];
        let day = if block.interval_days == 1 { "day" } else { "days" };
        let _ = writeln!(
            out,
            "{}",
            text_grid(
                &format!("{title}, interval {} {day}", block.interval_days),
                &header,
                &body
            )
        );
        if kind != TableKind::Local && !block.pareto.notes.is_empty() {
            for n in &block.pareto.notes {
                let _ = writeln!(out, "note: {n}");
            }
            out.push('\n');
        }
    }
    out
}

fn weight_table_csv(report: &AnalysisReport, kind: TableKind) -> String {
    let mut header = vec!["interval_days".to_string(), "label".into(), "method".into()];
    header.extend(weight_header(&report.assets));
    header.extend(["daily_mean_return".into(), "volatility".into(), "mean_hurst".into()]);
    let mut out = csv_line(&header);
    for block in &report.blocks {
        for r in block_rows(block, kind) {
            let mut f = vec![block.interval_days.to_string(), r.label.clone(), r.method.to_string()];
            f.extend(r.weight.as_slice().iter().map(|x| fmt_f64(*x)));
            f.extend([
                fmt_f64(r.daily_mean_return),
                fmt_f64(r.volatility),
                fmt_f64(r.mean_hurst),
            ]);
            out.push_str(&csv_line(&f));
        }
    }
    out
}

fn averaged_section(title: &str, names: [&str; 2], rows: &[AveragedRow]) -> String {
    let header: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
    let body = vec![
        (
            names[0].to_string(),
            rows.iter().map(|r| format_weight(&r.weight)).collect(),
        ),
        (
            names[1].to_string(),
            rows.iter().map(|r| format_percent(r.daily_mean_return)).collect(),
        ),
        (
            "SD".to_string(),
            rows.iter().map(|r| format_spread(&r.weight_std_dev)).collect(),
        ),
        (
            "SE".to_string(),
            rows.iter().map(|r| format_spread(&r.weight_std_err)).collect(),
        ),
    ];
    text_grid(title, &header, &body)
}

fn averaged_text(report: &AnalysisReport) -> String {
    let Some(avg) = &report.averaged else {
        return "Averages need at least two intervals.\n".into();
    };
    let list: Vec<String> = avg.intervals.iter().map(|t| t.to_string()).collect();
    let mut out = format!(
        "Averages over intervals {} (SD: standard deviation across intervals, SE: SD/sqrt(n))\n\n",
        list.join(",")
    );
    out.push_str(&averaged_section(
        "Average local optimal weights",
        ["ALOW", "ADMR"],
        &avg.local_rows,
    ));
    out.push('\n');
    out.push_str(&averaged_section(
        "Average optimal weights",
        ["AOW", "AODMR"],
        &avg.global_rows,
    ));
    out
}

fn averaged_csv(report: &AnalysisReport) -> String {
    let mut header = vec!["group".to_string(), "label".into(), "intervals".into()];
    header.extend(weight_header(&report.assets));
    for a in &report.assets {
        header.push(format!("sd_{a}"));
    }
    for a in &report.assets {
        header.push(format!("se_{a}"));
    }
    header.extend([
        "daily_mean_return".into(),
        "daily_mean_return_sd".into(),
        "daily_mean_return_se".into(),
        "in_effective_subspace".into(),
    ]);
    let mut out = csv_line(&header);
    let Some(avg) = &report.averaged else {
        return out;
    };
    for (group, rows) in [("local", &avg.local_rows), ("global", &avg.global_rows)] {
        for r in rows {
            let list: Vec<String> = r.intervals.iter().map(|t| t.to_string()).collect();
            let mut f = vec![group.to_string(), r.label.clone(), list.join(" ")];
            f.extend(r.weight.as_slice().iter().map(|x| fmt_f64(*x)));
            f.extend(r.weight_std_dev.iter().map(|x| fmt_f64(*x)));
            f.extend(r.weight_std_err.iter().map(|x| fmt_f64(*x)));
            f.extend([
                fmt_f64(r.daily_mean_return),
                fmt_f64(r.daily_mean_return_std_dev),
                fmt_f64(r.daily_mean_return_std_err),
                r.in_effective_subspace.map(|b| b.to_string()).unwrap_or_default(),
            ]);
            out.push_str(&csv_line(&f));
        }
    }
    out
}

pub fn emit_table(report: &AnalysisReport, kind: TableKind) -> RenderedTable {
    match kind {
        TableKind::Averaged => RenderedTable {
            text: averaged_text(report),
            csv: averaged_csv(report),
        },
        _ => RenderedTable {
            text: weight_table_text(report, kind),
            csv: weight_table_csv(report, kind),
        },
    }
}

/// Contents of the three plot files for one interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotData {
    pub interval_days: usize,
    pub dfa: String,
    pub investing_space: String,
    pub subspace: String,
}

fn dfa_csv(block: &IntervalBlock) -> String {
    let mut out = csv_line(&[
        "asset".into(),
        "scale".into(),
        "log_scale".into(),
        "log_fluctuation".into(),
        "hurst".into(),
        "intercept".into(),
        "fit_r2".into(),
    ]);
    for d in &block.dfa {
        for p in &d.result.fluctuations {
            out.push_str(&csv_line(&[
                d.asset.clone(),
                fmt_f64(p.scale),
                fmt_f64(p.scale.ln()),
                fmt_f64(p.fluctuation.ln()),
                fmt_f64(d.result.hurst),
                fmt_f64(d.result.intercept),
                fmt_f64(d.result.fit_r2),
            ]));
        }
    }
    out
}

fn investing_space_csv(report: &AnalysisReport, block: &IntervalBlock, stride: usize) -> Result<String, AnalysisError> {
    let stats = block.bundle().map_err(|source| AnalysisError::Statistics {
        interval: block.interval_days,
        source,
    })?;
    let grid = SimplexGrid::with_ceiling(report.assets.len(), block.grid_resolution, u64::MAX).map_err(|source| {
        AnalysisError::Simplex {
            context: "plot data".into(),
            source,
        }
    })?;
    let mut header = weight_header(&report.assets);
    header.extend([
        "daily_mean_return".into(),
        "volatility".into(),
        "mean_hurst".into(),
        "local_optimum".into(),
    ]);
    let mut out = csv_line(&header);
    let tau = block.interval_days as f64;
    let optima = block.triangle.vertices();
    for (k, w) in grid.points().enumerate() {
        let flags: Vec<&str> = ["R", "sigma", "H"]
            .iter()
            .zip(optima)
            .filter(|(_, v)| **v == w)
            .map(|(name, _)| *name)
            .collect();
        if k % stride != 0 && flags.is_empty() {
            continue;
        }
        let mut f: Vec<String> = w.as_slice().iter().map(|x| fmt_f64(*x)).collect();
        f.extend([
            fmt_f64(portfolio_return(&w, &stats).expect("matching dimension") / tau),
            fmt_f64(portfolio_variance(&w, &stats).expect("matching dimension").sqrt()),
            fmt_f64(portfolio_hurst(&w, &stats).expect("matching dimension")),
            flags.join("+"),
        ]);
        out.push_str(&csv_line(&f));
    }
    Ok(out)
}

fn subspace_csv(report: &AnalysisReport, block: &IntervalBlock) -> String {
    let n = report.assets.len();
    let mut header = vec!["kind".to_string(), "label".into()];
    header.extend(weight_header(&report.assets));
    header.push("value".into());
    let mut out = csv_line(&header);
    let weight_line = |kind: &str, label: &str, w: Option<&WeightVector>| {
        let mut f = vec![kind.to_string(), label.to_string()];
        match w {
            Some(w) => f.extend(w.as_slice().iter().map(|x| fmt_f64(*x))),
            None => f.extend(std::iter::repeat_n(String::new(), n)),
        }
        f.push(String::new());
        csv_line(&f)
    };
    let t = &block.triangle;
    out.push_str(&weight_line("vertex", "w_R", Some(&t.w_r)));
    out.push_str(&weight_line("vertex", "w_sigma", Some(&t.w_sigma)));
    out.push_str(&weight_line("vertex", "w_H", Some(&t.w_h)));
    let g = &block.global;
    out.push_str(&weight_line("optimum", "centroid", Some(&g.centroid)));
    out.push_str(&weight_line("optimum", "incenter", g.incenter.as_ref()));
    out.push_str(&weight_line("optimum", "fermat", Some(&g.fermat)));
    let mut f = vec!["radius".to_string(), format!("incircle_{}", g.heron_mode)];
    f.extend(std::iter::repeat_n(String::new(), n));
    f.push(g.incircle_radius.map(fmt_f64).unwrap_or_default());
    out.push_str(&csv_line(&f));
    out
}

pub fn emit_plot_data(report: &AnalysisReport) -> Result<Vec<PlotData>, AnalysisError> {
    let stride = report.provenance.config.investing_space_stride.max(1);
    report
        .blocks
        .iter()
        .map(|b| {
            Ok(PlotData {
                interval_days: b.interval_days,
                dfa: dfa_csv(b),
                investing_space: investing_space_csv(report, b, stride)?,
                subspace: subspace_csv(report, b),
            })
        })
        .collect()
}

/// Every output file as `(relative path, contents)`, in a fixed order.
pub fn render_files(report: &AnalysisReport) -> Result<Vec<(PathBuf, String)>, AnalysisError> {
    let mut json = serde_json::to_string_pretty(report).map_err(|e| AnalysisError::Output {
        context: "report.json".into(),
        source: e.into(),
    })?;
    json.push('\n');
    let local = emit_table(report, TableKind::Local);
    let global = emit_table(report, TableKind::Global);
    let averaged = emit_table(report, TableKind::Averaged);
    let tables = format!("{}\n{}\n{}", local.text, global.text, averaged.text);

    let mut files = vec![
        (PathBuf::from("report.json"), json),
        (PathBuf::from("tables.txt"), tables),
        (PathBuf::from("table_local.csv"), local.csv),
        (PathBuf::from("table_global.csv"), global.csv),
        (PathBuf::from("table_averaged.csv"), averaged.csv),
    ];
    for p in emit_plot_data(report)? {
        let dir = PathBuf::from("plots");
        let tag = format!("tau{:02}", p.interval_days);
        files.push((dir.join(format!("dfa_{tag}.csv")), p.dfa));
        files.push((dir.join(format!("investing_space_{tag}.csv")), p.investing_space));
        files.push((dir.join(format!("subspace_{tag}.csv")), p.subspace));
    }
    Ok(files)
}

fn io_err(context: &Path) -> impl FnOnce(std::io::Error) -> AnalysisError + '_ {
    move |source| AnalysisError::Output {
        context: context.display().to_string(),
        source,
    }
}

/// Writes every file into a staging directory next to `dir`, then moves
/// them into place. Nothing is written to `dir` if rendering fails.
pub fn write_report(report: &AnalysisReport, dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    let files = render_files(report)?;
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(io_err(&parent))?;
    let staging = tempfile::Builder::new()
        .prefix(".triplet-staging-")
        .tempdir_in(&parent)
        .map_err(io_err(&parent))?;
    for (rel, contents) in &files {
        let path = staging.path().join(rel);
        if let Some(p) = path.parent() {
            fs::create_dir_all(p).map_err(io_err(p))?;
        }
        fs::write(&path, contents).map_err(io_err(&path))?;
    }
    let mut written = Vec::with_capacity(files.len());
    for (rel, _) in &files {
        let target = dir.join(rel);
        if let Some(p) = target.parent() {
            fs::create_dir_all(p).map_err(io_err(p))?;
        }
        fs::rename(staging.path().join(rel), &target).map_err(io_err(&target))?;
        written.push(target);
    }
    Ok(written)
}
