//! Plain-text file formats shared by the pipeline stages.
//!
//! | file       | format                                             |
//! |------------|----------------------------------------------------|
//! | window     | `RECT xmin ymin xmax ymax`, or CSV `x,y` vertices  |
//! | stations   | CSV `id,x,y`                                       |
//! | incidents  | CSV `x,y`                                          |
//! | risks      | CSV `station,risk`                                 |
//! | vehicles   | CSV `station,n`                                    |
//! | field      | CSV `px,py,value` plus a JSON sidecar (`.json`)    |
//! | scores     | CSV `h,score`                                      |
//!
//! `px`/`py` are pixel column and row indices, row 0 at the bottom.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Point, Station, Window};
use crate::intensity::{IntensityField, PointPattern};
use crate::risk::{Risk, RiskEntry, RiskTable};

pub const STATIONS_HEADER: &[&str] = &["id", "x", "y"];
pub const POINTS_HEADER: &[&str] = &["x", "y"];
pub const RISKS_HEADER: &[&str] = &["station", "risk"];
pub const VEHICLES_HEADER: &[&str] = &["station", "n"];
pub const FIELD_HEADER: &[&str] = &["px", "py", "value"];
pub const SCORES_HEADER: &[&str] = &["h", "score"];

/// A CSV row with the 1-based line it came from.
struct Row {
    line: u64,
    fields: Vec<String>,
}

/// Read a headed CSV, checking the header and the field count of every row.
fn read_csv(name: &str, input: impl Read, header: &[&str]) -> Result<Vec<Row>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let expected = header.join(",");
    let mut rows = Vec::new();
    let mut seen_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(name, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if !seen_header {
            let got: Vec<&str> = record.iter().collect();
            if got != header {
                return Err(Error::parse(
                    name,
                    line,
                    format!("expected header `{expected}`, found `{}`", got.join(",")),
                ));
            }
            seen_header = true;
            continue;
        }
        if record.len() != header.len() {
            return Err(Error::parse(
                name,
                line,
                format!(
                    "expected {} fields (`{expected}`), found {}",
                    header.len(),
                    record.len()
                ),
            ));
        }
        rows.push(Row {
            line,
            fields: record.iter().map(str::to_string).collect(),
        });
    }
    if !seen_header {
        return Err(Error::parse(name, 1, format!("missing header `{expected}`")));
    }
    Ok(rows)
}

fn parse_f64(name: &str, row: &Row, col: usize, what: &str) -> Result<f64> {
    let s = &row.fields[col];
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::parse(
            name,
            row.line,
            format!("{what} `{s}` is not a finite number"),
        )),
    }
}

fn parse_usize(name: &str, row: &Row, col: usize, what: &str) -> Result<usize> {
    let s = &row.fields[col];
    s.parse::<usize>()
        .map_err(|_| Error::parse(name, row.line, format!("{what} `{s}` is not a non-negative integer")))
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn points_from_rows(name: &str, rows: &[Row]) -> Result<Vec<Point>> {
    rows.iter()
        .map(|r| Point::new(parse_f64(name, r, 0, "x")?, parse_f64(name, r, 1, "y")?))
        .collect()
}

// ---------------------------------------------------------------------------
// Window
// ---------------------------------------------------------------------------

pub fn parse_window(name: &str, text: &str) -> Result<Window> {
    let first = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i as u64 + 1, l.trim()))
        .find(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let Some((line, first)) = first else {
        return Err(Error::parse(
            name,
            1,
            "empty window file; expected `RECT xmin ymin xmax ymax` or header `x,y`",
        ));
    };
    if let Some(rest) = first.strip_prefix("RECT") {
        let nums: Vec<&str> = rest.split_whitespace().collect();
        let vals: Vec<f64> = nums.iter().filter_map(|s| s.parse().ok()).collect();
        if nums.len() != 4 || vals.len() != 4 || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(name, line, "expected `RECT xmin ymin xmax ymax`"));
        }
        return Window::rect(vals[0], vals[1], vals[2], vals[3]);
    }
    let rows = read_csv(name, text.as_bytes(), POINTS_HEADER).map_err(|e| match e {
        Error::Parse { path, line, message } => Error::Parse {
            path,
            line,
            message: format!("{message} (or `RECT xmin ymin xmax ymax`)"),
        },
        other => other,
    })?;
    Window::polygon(points_from_rows(name, &rows)?)
}

pub fn read_window(path: &Path) -> Result<Window> {
    let text = fs::read_to_string(path).map_err(Error::from)?;
    parse_window(&display(path), &text)
}

pub fn write_window(w: &mut impl Write, window: &Window) -> Result<()> {
    if window.is_rect() {
        let b = window.bbox();
        writeln!(w, "RECT {} {} {} {}", b.xmin, b.ymin, b.xmax, b.ymax)?;
    } else {
        writeln!(w, "x,y")?;
        for p in window.vertices() {
            writeln!(w, "{},{}", p.x, p.y)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Stations and incidents
// ---------------------------------------------------------------------------

pub fn parse_stations(name: &str, input: impl Read) -> Result<Vec<Station>> {
    let rows = read_csv(name, input, STATIONS_HEADER)?;
    rows.iter()
        .map(|r| {
            if r.fields[0].is_empty() {
                return Err(Error::parse(name, r.line, "empty station id"));
            }
            Station::new(
                r.fields[0].clone(),
                parse_f64(name, r, 1, "x")?,
                parse_f64(name, r, 2, "y")?,
            )
        })
        .collect()
}

pub fn read_stations(path: &Path) -> Result<Vec<Station>> {
    parse_stations(&display(path), open(path)?)
}

pub fn write_stations(w: &mut impl Write, stations: &[Station]) -> Result<()> {
    writeln!(w, "id,x,y")?;
    for s in stations {
        writeln!(w, "{},{},{}", s.id, s.location.x, s.location.y)?;
    }
    Ok(())
}

/// Read incidents and check them against the window.
pub fn parse_incidents(name: &str, input: impl Read, window: &Window) -> Result<PointPattern> {
    let rows = read_csv(name, input, POINTS_HEADER)?;
    let points = points_from_rows(name, &rows)?;
    for (p, r) in points.iter().zip(&rows) {
        if !window.contains(p) {
            return Err(Error::parse(
                name,
                r.line,
                format!("incident ({}, {}) lies outside the window", p.x, p.y),
            ));
        }
    }
    PointPattern::new(points, window)
}

pub fn read_incidents(path: &Path, window: &Window) -> Result<PointPattern> {
    parse_incidents(&display(path), open(path)?, window)
}

pub fn write_points(w: &mut impl Write, points: &[Point]) -> Result<()> {
    writeln!(w, "x,y")?;
    for p in points {
        writeln!(w, "{},{}", p.x, p.y)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Risks and vehicle counts
// ---------------------------------------------------------------------------

pub fn parse_risks(name: &str, input: impl Read) -> Result<RiskTable> {
    let rows = read_csv(name, input, RISKS_HEADER)?;
    let mut entries = Vec::with_capacity(rows.len());
    let mut seen = BTreeMap::new();
    for r in &rows {
        let station = r.fields[0].clone();
        if station.is_empty() {
            return Err(Error::parse(name, r.line, "empty station id"));
        }
        if let Some(prev) = seen.insert(station.clone(), r.line) {
            return Err(Error::parse(
                name,
                r.line,
                format!("station `{station}` already listed on line {prev}"),
            ));
        }
        let risk = Risk::parse(&r.fields[1]).map_err(|e| Error::parse(name, r.line, e.to_string()))?;
        if !(risk.value().is_finite() && risk.value() >= 0.0) {
            return Err(Error::parse(
                name,
                r.line,
                format!("risk `{}` must be finite and non-negative", r.fields[1]),
            ));
        }
        entries.push(RiskEntry { station, risk });
    }
    RiskTable::new("", entries)
}

pub fn read_risks(path: &Path) -> Result<RiskTable> {
    parse_risks(&display(path), open(path)?)
}

pub fn write_risks(w: &mut impl Write, table: &RiskTable) -> Result<()> {
    writeln!(w, "station,risk")?;
    for e in table.entries() {
        writeln!(w, "{},{}", e.station, e.risk)?;
    }
    Ok(())
}

pub fn parse_vehicles(name: &str, input: impl Read) -> Result<BTreeMap<String, usize>> {
    let rows = read_csv(name, input, VEHICLES_HEADER)?;
    let mut out = BTreeMap::new();
    for r in &rows {
        let n = parse_usize(name, r, 1, "vehicle count")?;
        if out.insert(r.fields[0].clone(), n).is_some() {
            return Err(Error::parse(
                name,
                r.line,
                format!("station `{}` listed twice", r.fields[0]),
            ));
        }
    }
    Ok(out)
}

pub fn read_vehicles(path: &Path) -> Result<BTreeMap<String, usize>> {
    parse_vehicles(&display(path), open(path)?)
}

pub fn write_vehicles<'a>(w: &mut impl Write, counts: impl IntoIterator<Item = (&'a str, usize)>) -> Result<()> {
    writeln!(w, "station,n")?;
    for (s, n) in counts {
        writeln!(w, "{s},{n}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Intensity fields
// ---------------------------------------------------------------------------

/// JSON sidecar describing a field CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub grid: GridSpec,
    pub h: Option<f64>,
    pub total_mass: f64,
}

/// Sidecar path for a field CSV: `field.csv` -> `field.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_field_csv(w: &mut impl Write, field: &IntensityField) -> Result<()> {
    writeln!(w, "px,py,value")?;
    let g = field.grid();
    for j in 0..g.ny {
        for i in 0..g.nx {
            writeln!(w, "{i},{j},{}", field.values()[g.index(i, j)])?;
        }
    }
    Ok(())
}

pub fn parse_field_csv(name: &str, input: impl Read, grid: GridSpec) -> Result<IntensityField> {
    let rows = read_csv(name, input, FIELD_HEADER)?;
    let mut values = vec![f64::NAN; grid.len()];
    for r in &rows {
        let i = parse_usize(name, r, 0, "px")?;
        let j = parse_usize(name, r, 1, "py")?;
        if i >= grid.nx || j >= grid.ny {
            return Err(Error::parse(
                name,
                r.line,
                format!("pixel ({i}, {j}) outside the {}x{} grid", grid.nx, grid.ny),
            ));
        }
        let v = parse_f64(name, r, 2, "value")?;
        if v < 0.0 {
            return Err(Error::parse(name, r.line, format!("negative intensity {v}")));
        }
        let slot = &mut values[grid.index(i, j)];
        if !slot.is_nan() {
            return Err(Error::parse(name, r.line, format!("pixel ({i}, {j}) listed twice")));
        }
        *slot = v;
    }
    if let Some(missing) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::parse(
            name,
            rows.last().map_or(1, |r| r.line),
            format!("pixel ({}, {}) missing", missing % grid.nx, missing / grid.nx),
        ));
    }
    IntensityField::from_values(grid, values)
}

/// Write `field` to `path` and its sidecar next to it.
pub fn write_field(path: &Path, field: &IntensityField, h: Option<f64>) -> Result<()> {
    let mut buf = Vec::new();
    write_field_csv(&mut buf, field)?;
    fs::write(path, buf)?;
    let meta = FieldMeta {
        grid: *field.grid(),
        h,
        total_mass: field.total_mass(),
    };
    fs::write(sidecar_path(path), to_json_pretty(&meta)?)?;
    Ok(())
}

/// Read a field CSV and its sidecar.
pub fn read_field(path: &Path) -> Result<(IntensityField, FieldMeta)> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", side.display()))))?;
    let meta: FieldMeta =
        serde_json::from_str(&text).map_err(|e| Error::parse(display(&side), e.line() as u64, e.to_string()))?;
    let field = parse_field_csv(&display(path), open(path)?, meta.grid)?;
    Ok((field, meta))
}

// ---------------------------------------------------------------------------
// Bandwidth scores and misc
// ---------------------------------------------------------------------------

pub fn write_scores(w: &mut impl Write, h: &[f64], scores: &[f64]) -> Result<()> {
    writeln!(w, "h,score")?;
    for (h, s) in h.iter().zip(scores) {
        writeln!(w, "{h},{s}")?;
    }
    Ok(())
}

pub fn parse_scores(name: &str, input: impl Read) -> Result<Vec<(f64, f64)>> {
    let rows = read_csv(name, input, SCORES_HEADER)?;
    rows.iter()
        .map(|r| {
            let h = parse_f64(name, r, 0, "h")?;
            let s = &r.fields[1];
            let score = s
                .parse::<f64>()
                .map_err(|_| Error::parse(name, r.line, format!("score `{s}` is not a number")))?;
            Ok((h, score))
        })
        .collect()
}

/// Pretty JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
