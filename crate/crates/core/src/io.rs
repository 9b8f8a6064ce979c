//! Float formatting and the small CSV writer shared by every report.

use std::fmt::Write as _;

/// Formats `x` in plain decimal with 17 significant digits.
///
/// Very large or very small magnitudes fall back to scientific notation with
/// the same precision. Non-finite values are rendered as `inf`/`-inf`/`NaN`;
/// report writers refuse NaN before reaching this point.
pub fn fmt17(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-8..=16).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.16e}")
    }
}

/// A CSV table with a fixed header. Cells are stored pre-formatted.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// One CSV cell.
pub enum Cell<'a> {
    Str(&'a str),
    Int(i64),
    Float(f64),
}

impl From<f64> for Cell<'_> {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}
impl From<usize> for Cell<'_> {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<i64> for Cell<'_> {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}
impl From<i32> for Cell<'_> {
    fn from(v: i32) -> Self {
        Cell::Int(v as i64)
    }
}
impl<'a> From<&'a str> for Cell<'a> {
    fn from(v: &'a str) -> Self {
        Cell::Str(v)
    }
}
impl<'a> From<&'a String> for Cell<'a> {
    fn from(v: &'a String) -> Self {
        Cell::Str(v.as_str())
    }
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    /// Appends a row. Panics if the arity does not match the header.
    pub fn push(&mut self, cells: Vec<Cell<'_>>) {
        assert_eq!(cells.len(), self.header.len(), "csv row arity");
        let row = cells
            .into_iter()
            .map(|c| match c {
                Cell::Str(s) => s.to_string(),
                Cell::Int(i) => i.to_string(),
                Cell::Float(f) => fmt17(f),
            })
            .collect();
        self.rows.push(row);
    }

    /// True when any float cell was written as `NaN`.
    pub fn has_nan(&self) -> bool {
        self.rows.iter().flatten().any(|c| c == "NaN")
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn extend(&mut self, other: &CsvTable) {
        assert_eq!(self.header, other.header, "csv header mismatch");
        self.rows.extend(other.rows.iter().cloned());
    }
}
