//! CSV / JSON / SVG emission.
//!
//! CSV cells are rendered from the same JSON values as the JSON file, so
//! both formats carry identical numbers. Floats use the shortest
//! round-trip representation, which keeps repeated runs byte-identical.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Format;
use crate::error::Result;
use crate::reports::{DistributionReport, PeriodReport, SweepReport};
use crate::svg::{LinePlot, Series};

pub const SWEEP_HEADER: [&str; 8] = [
    "eps",
    "model",
    "energy_total",
    "energy_surface",
    "energy_well",
    "energy_bulk",
    "n_jumps",
    "slope_running",
];
pub const DISTRIBUTION_HEADER: [&str; 4] = ["x", "phi", "ratio", "flag_below_threshold"];
pub const PERIOD_HEADER: [&str; 5] = ["s", "h_emp", "h_pred", "ratio", "n_teeth"];

/// A report flattened for emission: rows as JSON objects holding at least
/// the CSV columns, plus a summary object.
#[derive(Debug, Clone)]
pub struct Table {
    pub stem: &'static str,
    pub header: &'static [&'static str],
    pub rows: Vec<Value>,
    pub summary: Value,
    pub plot: Option<LinePlot>,
}

fn to_rows<T: Serialize>(rows: &[T]) -> Vec<Value> {
    rows.iter()
        .map(|r| serde_json::to_value(r).expect("rows serialize"))
        .collect()
}

fn cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

impl Table {
    pub fn render_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header)?;
        for row in &self.rows {
            w.write_record(self.header.iter().map(|k| cell(row.get(*k))))?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn render_json(&self) -> String {
        let doc = json!({ "summary": self.summary, "rows": self.rows });
        let mut s = serde_json::to_string_pretty(&doc).expect("json");
        s.push('\n');
        s
    }

    /// Writes the requested formats into `dir` and returns the paths. CSV
    /// output is accompanied by `<stem>.params.json` holding the summary
    /// (parameters included), since the CSV columns are fixed.
    pub fn write(&self, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: String, body: String| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            written.push(path);
            Ok(())
        };
        let mut formats = formats.to_vec();
        formats.sort();
        formats.dedup();
        for f in formats {
            match f {
                Format::Csv => {
                    put(format!("{}.csv", self.stem), self.render_csv()?)?;
                    let mut meta = serde_json::to_string_pretty(&self.summary).expect("json");
                    meta.push('\n');
                    put(format!("{}.params.json", self.stem), meta)?;
                }
                Format::Json => put(format!("{}.json", self.stem), self.render_json())?,
                Format::Svg => {
                    if let Some(p) = &self.plot {
                        put(format!("{}.svg", self.stem), p.render())?;
                    }
                }
            }
        }
        Ok(written)
    }
}

pub fn sweep_table(rep: &SweepReport) -> Table {
    let mut series = Vec::new();
    for model in [crate::reports::Model::Sharp, crate::reports::Model::Diffuse] {
        let pts: Vec<(f64, f64)> = rep
            .rows
            .iter()
            .filter(|r| r.model == model)
            .map(|r| (r.eps, r.energy_total))
            .collect();
        if !pts.is_empty() {
            let label = match model {
                crate::reports::Model::Sharp => "sharp",
                crate::reports::Model::Diffuse => "diffuse",
            };
            series.push(Series::markers(label, pts));
        }
    }
    if let Some(first) = rep.fits.iter().find_map(|f| f.fit.as_ref()) {
        // ε^{2/3} guide through the first fitted model's geometric centre
        let n = first.xs.len() as f64;
        let (mx, my) = (first.xs.iter().sum::<f64>() / n, first.ys.iter().sum::<f64>() / n);
        let guide: Vec<(f64, f64)> = first
            .xs
            .iter()
            .map(|&x| (x.exp(), (my + 2.0 / 3.0 * (x - mx)).exp()))
            .collect();
        series.push(Series::dashed("slope 2/3", guide));
    }
    Table {
        stem: "sweep_scaling",
        header: &SWEEP_HEADER,
        rows: to_rows(&rep.rows),
        summary: json!({ "weights": rep.weights, "fits": rep.fits }),
        plot: Some(LinePlot {
            title: "minimal energy".into(),
            x_label: "eps".into(),
            y_label: "energy".into(),
            log_x: true,
            log_y: true,
            series,
        }),
    }
}

pub fn distribution_table(rep: &DistributionReport) -> Table {
    let valid: Vec<(f64, f64)> = rep
        .rows
        .iter()
        .filter(|r| !r.flag_below_threshold)
        .map(|r| (r.x, r.ratio))
        .collect();
    let below: Vec<(f64, f64)> = rep
        .rows
        .iter()
        .filter(|r| r.flag_below_threshold)
        .map(|r| (r.x, r.ratio))
        .collect();
    let mut summary = serde_json::to_value(rep).expect("json");
    summary.as_object_mut().expect("object").remove("rows");
    Table {
        stem: "energy_profile",
        header: &DISTRIBUTION_HEADER,
        rows: to_rows(&rep.rows),
        summary,
        plot: Some(LinePlot {
            title: "phi(x) / (x eps^(2/3))".into(),
            x_label: "x".into(),
            y_label: "ratio".into(),
            log_x: true,
            log_y: false,
            series: vec![Series::line("above threshold", valid), Series::markers("below threshold", below)],
        }),
    }
}

pub fn period_table(rep: &PeriodReport) -> Table {
    let measured: Vec<(f64, f64)> = rep
        .rows
        .iter()
        .filter_map(|r| r.h_emp.map(|h| (r.s, h)))
        .collect();
    let predicted: Vec<(f64, f64)> = rep.rows.iter().map(|r| (r.s, r.h_pred)).collect();
    let mut summary = serde_json::to_value(rep).expect("json");
    summary.as_object_mut().expect("object").remove("rows");
    Table {
        stem: "period_check",
        header: &PERIOD_HEADER,
        rows: to_rows(&rep.rows),
        summary,
        plot: Some(LinePlot {
            title: "local period".into(),
            x_label: "s".into(),
            y_label: "period".into(),
            log_x: true,
            log_y: true,
            series: vec![Series::markers("measured", measured), Series::dashed("predicted", predicted)],
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        Table {
            stem: "t",
            header: &["a", "b", "c"],
            rows: vec![
                json!({"a": 1e-5, "b": "sharp", "c": null, "extra": 1}),
                json!({"a": 0.1, "b": true, "c": 3}),
            ],
            summary: json!({"k": 1}),
            plot: None,
        }
    }

    #[test]
    fn csv_cells_match_json_values() {
        let csv = table().render_csv().unwrap();
        assert_eq!(csv, "a,b,c\n0.00001,sharp,\n0.1,true,3\n");
        let json: Value = serde_json::from_str(&table().render_json()).unwrap();
        assert_eq!(json["rows"][0]["a"].as_f64(), Some(1e-5));
    }

    #[test]
    fn write_creates_files() {
        let dir = tempfile::tempdir().unwrap();
        let paths = table().write(dir.path(), &[Format::Json, Format::Csv, Format::Svg]).unwrap();
        let names: Vec<String> = paths
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["t.csv", "t.params.json", "t.json"]);
    }
}
