//! Two- and three-column data files for gnuplot from report CSVs.

use std::fs;
use std::path::Path;

use ddpmlab::io::fmt17;

use crate::error::RunError;

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn parse(text: &str) -> Self {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().map(|h| h.split(',').map(|s| s.trim().to_string()).collect()).unwrap_or_default();
        let rows = lines.map(|l| l.split(',').map(|s| s.trim().to_string()).collect()).collect();
        Self { header, rows }
    }

    fn col(&self, name: &str) -> Result<usize, RunError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| RunError::Config(format!("report lacks column `{name}`")))
    }

    fn has(&self, name: &str) -> bool {
        self.header.iter().any(|h| h == name)
    }
}

fn num(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn line(cols: &[f64]) -> String {
    let mut s = cols.iter().map(|&x| fmt17(x)).collect::<Vec<_>>().join(" ");
    s.push('\n');
    s
}

/// Converts a report into plot data and returns the number of data lines.
///
/// * residual reports: `log10(1/substeps) log10(rms)`, one block per sign;
/// * metric reports: rows named `tv` as `i_or_t value std_err`;
/// * bound reports: rows with an empirical side as `value empirical std_err`.
///
/// Non-finite points are dropped. An empty report gives an empty file.
pub fn convert(text: &str) -> Result<(String, usize), RunError> {
    let csv = Csv::parse(text);
    if csv.header.is_empty() || csv.rows.is_empty() {
        return Ok((String::new(), 0));
    }
    let mut out = String::new();
    let mut count = 0;
    if csv.has("sign") && csv.has("substeps") {
        let (sign, sub, rms) = (csv.col("sign")?, csv.col("substeps")?, csv.col("rms")?);
        let mut signs: Vec<String> = csv.rows.iter().filter_map(|r| r.get(sign).cloned()).collect();
        signs.sort();
        signs.dedup();
        for (b, sg) in signs.iter().enumerate() {
            if b > 0 {
                out.push_str("\n\n");
            }
            out.push_str(&format!("# sign {sg}: log10(1/substeps) log10(rms)\n"));
            for r in csv.rows.iter().filter(|r| r.get(sign) == Some(sg)) {
                let (Some(s), Some(y)) = (r.get(sub).and_then(|v| num(v)), r.get(rms).and_then(|v| num(v))) else {
                    continue;
                };
                let (x, y) = ((1.0 / s).log10(), y.log10());
                if x.is_finite() && y.is_finite() {
                    out.push_str(&line(&[x, y]));
                    count += 1;
                }
            }
        }
    } else if csv.has("name") && csv.has("i_or_t") {
        let (name, x, v, e) = (csv.col("name")?, csv.col("i_or_t")?, csv.col("value")?, csv.col("std_err")?);
        out.push_str("# i_or_t tv std_err\n");
        for r in csv.rows.iter().filter(|r| r.get(name).map(String::as_str) == Some("tv")) {
            if let (Some(x), Some(y), Some(e)) = (num(&r[x]), num(&r[v]), num(&r[e])) {
                out.push_str(&line(&[x, y, e]));
                count += 1;
            }
        }
    } else if csv.has("bound") && csv.has("empirical") {
        let (v, emp, e) = (csv.col("value")?, csv.col("empirical")?, csv.col("std_err")?);
        out.push_str("# bound empirical std_err\n");
        for r in &csv.rows {
            if let (Some(x), Some(y), Some(e)) = (num(&r[v]), num(&r[emp]), num(&r[e])) {
                out.push_str(&line(&[x, y, e]));
                count += 1;
            }
        }
    } else {
        return Err(RunError::Config(format!(
            "unrecognized report header `{}`: missing columns",
            csv.header.join(",")
        )));
    }
    Ok((out, count))
}

pub fn plotdata(report: &Path, out: &Path) -> Result<usize, RunError> {
    let text = fs::read_to_string(report).map_err(|e| RunError::Io(format!("{}: {e}", report.display())))?;
    let (data, count) = convert(&text)?;
    fs::write(out, data).map_err(|e| RunError::Io(format!("{}: {e}", out.display())))?;
    Ok(count)
}
