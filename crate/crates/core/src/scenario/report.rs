//! Machine-readable run reports: JSON records, CSV tables and small SVG
//! line plots. A report embeds the library version, the RNG algorithm, the
//! fully resolved configuration and every seed, so a run can be reproduced
//! from its report alone.

use crate::error::{Error, Result};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

/// Verdict for one checked criterion.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionRecord {
    pub id: String,
    pub description: String,
    pub passed: bool,
    /// the measured statistic(s)
    pub observed: serde_json::Value,
    /// the bound(s) it was held against
    pub threshold: serde_json::Value,
}

impl CriterionRecord {
    pub fn new(
        id: impl Into<String>,
        description: impl Into<String>,
        passed: bool,
        observed: serde_json::Value,
        threshold: serde_json::Value,
    ) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            passed,
            observed,
            threshold,
        }
    }
}

/// The full run record written to `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub library: String,
    pub library_version: String,
    pub rng_algorithm: String,
    pub scenario: String,
    pub seed: u64,
    pub threads: usize,
    /// fully resolved parameters (no hidden defaults)
    pub config: serde_json::Value,
    pub criteria: Vec<CriterionRecord>,
    pub passed: bool,
    pub artifacts: Vec<String>,
    /// seconds since the Unix epoch at assembly time; the one field two
    /// otherwise identical runs may differ in
    pub timestamp: u64,
}

impl Report {
    pub fn assemble(
        scenario: &str,
        seed: u64,
        threads: usize,
        config: serde_json::Value,
        criteria: Vec<CriterionRecord>,
        artifacts: Vec<String>,
    ) -> Self {
        let passed = criteria.iter().all(|c| c.passed);
        Self {
            schema_version: SCHEMA_VERSION,
            library: "flightlab".into(),
            library_version: crate::VERSION.into(),
            rng_algorithm: crate::RNG_ALGORITHM.into(),
            scenario: scenario.into(),
            seed,
            threads,
            config,
            criteria,
            passed,
            artifacts,
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One tabular artifact: a header plus float rows.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{}", self.header.join(","))?;
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Everything a scenario produced, before any file IO.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub criteria: Vec<CriterionRecord>,
    pub tables: Vec<Table>,
    /// (name, x-label, y-label, series) drawn as SVG when plots are on
    pub plots: Vec<PlotSpec>,
}

#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub log_log: bool,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

/// Write the report, CSV tables and optional SVG plots into `out_dir`.
/// Returns the final report (with the artifact list filled in).
pub fn emit_report(
    out_dir: &Path,
    scenario: &str,
    seed: u64,
    threads: usize,
    config: serde_json::Value,
    output: &RunOutput,
    plots: bool,
) -> Result<Report> {
    if output.criteria.is_empty() {
        return Err(Error::invalid("refusing to emit a report with no records"));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut artifacts = Vec::new();
    for table in &output.tables {
        let path = out_dir.join(format!("{}.csv", table.name));
        let mut file = std::fs::File::create(&path)?;
        table.write_csv(&mut file)?;
        artifacts.push(format!("{}.csv", table.name));
    }
    if plots {
        for plot in &output.plots {
            let path = out_dir.join(format!("{}.svg", plot.name));
            let mut file = std::fs::File::create(&path)?;
            write_svg(&mut file, plot)?;
            artifacts.push(format!("{}.svg", plot.name));
        }
    }
    artifacts.push("report.json".into());
    let report = Report::assemble(
        scenario,
        seed,
        threads,
        config,
        output.criteria.clone(),
        artifacts,
    );
    let json = report.to_json_pretty()?;
    std::fs::write(out_dir.join("report.json"), json)?;
    Ok(report)
}

pub fn default_out_dir(scenario: &str) -> PathBuf {
    PathBuf::from("out").join(scenario)
}

/// Minimal SVG line plot; decorative only, no criterion depends on it.
fn write_svg<W: Write>(out: &mut W, plot: &PlotSpec) -> Result<()> {
    let (w, h) = (640.0, 420.0);
    let margin = 60.0;
    let map = |v: f64, log: bool| if log { v.max(1e-300).log10() } else { v };
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for (_, pts) in &plot.series {
        for &(x, y) in pts {
            let (x, y) = (map(x, plot.log_log), map(y, plot.log_log));
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() || xmax <= xmin {
        xmax = xmin + 1.0;
    }
    if !ymin.is_finite() || ymax <= ymin {
        ymax = ymin + 1.0;
    }
    let px = |x: f64| margin + (x - xmin) / (xmax - xmin) * (w - 2.0 * margin);
    let py = |y: f64| h - margin - (y - ymin) / (ymax - ymin) * (h - 2.0 * margin);
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    )?;
    writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>")?;
    writeln!(
        out,
        "<text x=\"{}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        w / 2.0,
        plot.name
    )?;
    writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}{}</text>",
        w / 2.0,
        h - 15.0,
        plot.x_label,
        if plot.log_log { " (log10)" } else { "" }
    )?;
    writeln!(
        out,
        "<text x=\"15\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 {})\">{}{}</text>",
        h / 2.0,
        h / 2.0,
        plot.y_label,
        if plot.log_log { " (log10)" } else { "" }
    )?;
    writeln!(
        out,
        "<rect x=\"{margin}\" y=\"{margin}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>",
        w - 2.0 * margin,
        h - 2.0 * margin
    )?;
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    for (k, (label, pts)) in plot.series.iter().enumerate() {
        let color = colors[k % colors.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                format!(
                    "{:.2},{:.2}",
                    px(map(x, plot.log_log)),
                    py(map(y, plot.log_log))
                )
            })
            .collect();
        writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            path.join(" ")
        )?;
        for &(x, y) in pts {
            writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>",
                px(map(x, plot.log_log)),
                py(map(y, plot.log_log))
            )?;
        }
        writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{label}</text>",
            w - margin + 5.0,
            margin + 14.0 * (k as f64 + 1.0)
        )?;
    }
    writeln!(out, "</svg>")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_csv_schema_roundtrip() {
        let mut t = Table::new("ladder", &["n", "err"]);
        t.push(vec![16.0, 0.5]);
        t.push(vec![32.0, 0.25]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("n,err"));
        // reader roundtrip: parse back and check monotone n
        let mut prev = 0.0;
        for line in lines {
            let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert_eq!(cols.len(), 2);
            assert!(cols[0] > prev);
            prev = cols[0];
        }
    }

    #[test]
    fn empty_report_is_rejected() {
        let dir = std::env::temp_dir().join("flightlab-empty-report-test");
        let out = RunOutput {
            criteria: vec![],
            tables: vec![],
            plots: vec![],
        };
        assert!(emit_report(&dir, "x", 0, 1, serde_json::Value::Null, &out, false).is_err());
    }

    #[test]
    fn single_record_report_has_schema_version() {
        let rec = CriterionRecord::new(
            "c1",
            "demo",
            true,
            serde_json::json!(1.0),
            serde_json::json!(2.0),
        );
        let report = Report::assemble("demo", 7, 1, serde_json::Value::Null, vec![rec], vec![]);
        let json = report.to_json_pretty().unwrap();
        assert!(json.contains("\"schema_version\": 1"));
        assert!(report.passed);
    }
}
