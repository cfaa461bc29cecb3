use std::path::{Path, PathBuf};

use super::{curves_svg, forest_svg, FitReport, ParameterSummary, ReportError};

/// Output file names, in the order they are written.
pub const FILE_NAMES: [&str; 7] =
    ["summary.csv", "league.csv", "forest.csv", "curves.csv", "report.json", "forest.svg", "curves.svg"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
    Svg,
}

text_enum!(ExportFormat, "export format", {
    ExportFormat::Csv => "csv",
    ExportFormat::Json => "json",
    ExportFormat::Svg => "svg",
});

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v}"))
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn write(dir: &Path, name: &str, text: &str, out: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|source| ReportError::Io { path: path.display().to_string(), source })?;
    out.push(path);
    Ok(())
}

pub(crate) fn summary_csv(report: &FitReport) -> String {
    csv_text(
        &["parameter", "mean", "sd", "median", "lower", "upper", "rhat", "ess", "mcse"],
        report.parameters.iter().map(|p| {
            vec![
                p.parameter.clone(),
                format!("{}", p.mean),
                format!("{}", p.sd),
                format!("{}", p.median),
                format!("{}", p.lower),
                format!("{}", p.upper),
                opt(p.rhat),
                opt(p.ess),
                opt(p.mcse),
            ]
        }),
    )
}

fn league_csv(report: &FitReport) -> String {
    let t = &report.league;
    let mut rows = Vec::new();
    for (a, la) in t.labels.iter().enumerate() {
        for (b, lb) in t.labels.iter().enumerate() {
            let iv = t.entries[a][b];
            rows.push(vec![
                la.clone(),
                lb.clone(),
                t.scale.to_string(),
                format!("{}", iv.median),
                format!("{}", iv.lower),
                format!("{}", iv.upper),
            ]);
        }
    }
    csv_text(&["row", "column", "scale", "median", "lower", "upper"], rows)
}

fn forest_csv(report: &FitReport) -> String {
    csv_text(
        &["contrast", "treatment", "reference", "median", "lower", "upper"],
        report.forest.iter().map(|f| {
            vec![
                format!("{} vs {}", f.treatment, f.reference),
                f.treatment.clone(),
                f.reference.clone(),
                format!("{}", f.median),
                format!("{}", f.lower),
                format!("{}", f.upper),
            ]
        }),
    )
}

/// Wide layout: `x` then median/lower/upper per treatment.
fn curves_csv(report: &FitReport) -> String {
    let mut header = vec!["x".to_string()];
    for c in &report.curves {
        for s in ["median", "lower", "upper"] {
            header.push(format!("{}_{s}", c.treatment));
        }
    }
    let n = report.curves.first().map_or(0, |c| c.points.len());
    let rows = (0..n).map(|i| {
        let mut row = vec![format!("{}", report.curves[0].points[i].x)];
        for c in &report.curves {
            let p = c.points[i];
            row.extend([format!("{}", p.median), format!("{}", p.lower), format!("{}", p.upper)]);
        }
        row
    });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_text(&header, rows)
}

/// Write the report into `dir` (created if needed). Curve files are only
/// written for meta-regression fits.
pub fn export(report: &FitReport, dir: impl AsRef<Path>, formats: &[ExportFormat]) -> Result<Vec<PathBuf>, ReportError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.display().to_string(), source })?;
    let mut out = Vec::new();
    let curves = !report.curves.is_empty();
    if formats.contains(&ExportFormat::Csv) {
        write(dir, "summary.csv", &summary_csv(report), &mut out)?;
        write(dir, "league.csv", &league_csv(report), &mut out)?;
        write(dir, "forest.csv", &forest_csv(report), &mut out)?;
        if curves {
            write(dir, "curves.csv", &curves_csv(report), &mut out)?;
        }
    }
    if formats.contains(&ExportFormat::Json) {
        let json = serde_json::to_string_pretty(report).expect("report serializes");
        write(dir, "report.json", &json, &mut out)?;
    }
    if formats.contains(&ExportFormat::Svg) {
        write(dir, "forest.svg", &forest_svg(&report.forest), &mut out)?;
        if curves {
            write(dir, "curves.svg", &curves_svg(&report.curves), &mut out)?;
        }
    }
    Ok(out)
}

/// Read back a `summary.csv`.
pub fn read_summary_csv(path: impl AsRef<Path>) -> Result<Vec<ParameterSummary>, ReportError> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| ReportError::Parse(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| ReportError::Parse(e.to_string()))?;
        let bad = || ReportError::Parse(format!("row {}: malformed", i + 2));
        let num = |k: usize| -> Result<f64, ReportError> { row.get(k).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let opt = |k: usize| -> Result<Option<f64>, ReportError> {
            match row.get(k).ok_or_else(bad)? {
                "" => Ok(None),
                v => v.parse().map(Some).map_err(|_| bad()),
            }
        };
        out.push(ParameterSummary {
            parameter: row.get(0).ok_or_else(bad)?.to_string(),
            mean: num(1)?,
            sd: num(2)?,
            median: num(3)?,
            lower: num(4)?,
            upper: num(5)?,
            rhat: opt(6)?,
            ess: opt(7)?,
            mcse: opt(8)?,
        });
    }
    Ok(out)
}
