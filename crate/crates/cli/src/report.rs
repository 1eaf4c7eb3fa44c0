//! Report assembly and the three output formats.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use clusterinf::diagnostics::SizeSummary;

use crate::error::CliError;

/// JSON tree with sorted object keys and `%.6g` number formatting.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Arr(Vec<Json>),
    Obj(BTreeMap<String, Json>),
}

impl Json {
    pub fn obj() -> Self {
        Json::Obj(BTreeMap::new())
    }

    /// Inserts `key` into an object and returns it, for chaining.
    pub fn with(mut self, key: &str, value: impl Into<Json>) -> Self {
        if let Json::Obj(m) = &mut self {
            m.insert(key.to_string(), value.into());
        }
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, 0);
        out.push('\n');
        out
    }

    fn write(&self, out: &mut String, depth: usize) {
        let pad = |out: &mut String, d: usize| out.extend(std::iter::repeat_n("  ", d));
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Json::Num(x) if x.is_finite() => out.push_str(&fmt_g(*x)),
            Json::Num(x) => out.push_str(&serde_json::to_string(&fmt_g(*x)).expect("string")),
            Json::Str(s) => out.push_str(&serde_json::to_string(s).expect("string")),
            Json::Arr(v) if v.is_empty() => out.push_str("[]"),
            Json::Arr(v) => {
                out.push_str("[\n");
                for (i, item) in v.iter().enumerate() {
                    pad(out, depth + 1);
                    item.write(out, depth + 1);
                    out.push_str(if i + 1 < v.len() { ",\n" } else { "\n" });
                }
                pad(out, depth);
                out.push(']');
            }
            Json::Obj(m) if m.is_empty() => out.push_str("{}"),
            Json::Obj(m) => {
                out.push_str("{\n");
                for (i, (k, item)) in m.iter().enumerate() {
                    pad(out, depth + 1);
                    out.push_str(&serde_json::to_string(k).expect("string"));
                    out.push_str(": ");
                    item.write(out, depth + 1);
                    out.push_str(if i + 1 < m.len() { ",\n" } else { "\n" });
                }
                pad(out, depth);
                out.push('}');
            }
        }
    }
}

impl From<f64> for Json {
    fn from(x: f64) -> Self {
        Json::Num(x)
    }
}

impl From<usize> for Json {
    fn from(x: usize) -> Self {
        Json::Int(x as i64)
    }
}

impl From<u64> for Json {
    fn from(x: u64) -> Self {
        Json::Str(x.to_string())
    }
}

impl From<bool> for Json {
    fn from(b: bool) -> Self {
        Json::Bool(b)
    }
}

impl From<&str> for Json {
    fn from(s: &str) -> Self {
        Json::Str(s.to_string())
    }
}

impl From<String> for Json {
    fn from(s: String) -> Self {
        Json::Str(s)
    }
}

impl<T: Into<Json>> From<Option<T>> for Json {
    fn from(o: Option<T>) -> Self {
        o.map_or(Json::Null, Into::into)
    }
}

impl<T: Into<Json>> From<Vec<T>> for Json {
    fn from(v: Vec<T>) -> Self {
        Json::Arr(v.into_iter().map(Into::into).collect())
    }
}

/// C's `%.6g`.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// An aligned text table that doubles as a CSV table.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: &str, header: &[&str]) -> Self {
        Self { title: title.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut width: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "{}", self.title);
        }
        let line = |out: &mut String, cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&width)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &self.header);
        let total = width.iter().sum::<usize>() + 2 * width.len().saturating_sub(1);
        let _ = writeln!(out, "{}", "-".repeat(total));
        for r in &self.rows {
            line(&mut out, r);
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut buf = Vec::new();
        let header: Vec<&str> = self.header.iter().map(String::as_str).collect();
        clusterinf::io::write_csv(&mut buf, &header, &self.rows)?;
        Ok(String::from_utf8(buf).expect("utf-8 csv"))
    }
}

/// Formats an optional number for tables.
pub fn cell(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), fmt_g)
}

pub fn num(x: f64) -> String {
    fmt_g(x)
}

/// The cluster count, observation count and size distribution of one
/// clustering, which every clustered report carries.
pub fn size_json(name: &str, s: &SizeSummary) -> Json {
    Json::obj()
        .with("name", name)
        .with("G", s.g)
        .with("N", s.n)
        .with(
            "sizes",
            Json::obj()
                .with("min", s.min)
                .with("q1", s.q1)
                .with("median", s.median)
                .with("q3", s.q3)
                .with("max", s.max)
                .with("mean", s.mean),
        )
}

pub fn size_line(name: &str, s: &SizeSummary) -> String {
    format!(
        "clustering {name}: G = {}, N = {}, cluster sizes min {} / q1 {} / median {} / q3 {} / max {} / mean {}",
        s.g,
        s.n,
        num(s.min),
        num(s.q1),
        num(s.median),
        num(s.q3),
        num(s.max),
        num(s.mean)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Text,
    Json,
    Csv,
}

/// Everything a command produces.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub json: Json,
    /// Lines printed above the tables in text mode.
    pub preamble: Vec<String>,
    pub tables: Vec<Table>,
    /// Per-cluster or per-replicate arrays written to the CSV directory.
    pub arrays: Vec<(String, Table)>,
    pub notices: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self { command: command.into(), json: Json::obj(), preamble: Vec::new(), tables: Vec::new(), arrays: Vec::new(), notices: Vec::new() }
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        Ok(match format {
            Format::Json => {
                let mut notices = self.notices.clone();
                notices.dedup();
                self.json.clone().with("command", self.command.as_str()).with("notices", notices).render()
            }
            Format::Csv => match self.tables.first() {
                Some(t) => t.to_csv()?,
                None => String::new(),
            },
            Format::Text => {
                let mut out = String::new();
                for p in &self.preamble {
                    let _ = writeln!(out, "{p}");
                }
                for t in &self.tables {
                    out.push('\n');
                    out.push_str(&t.render());
                }
                let mut seen: Vec<&String> = Vec::new();
                for n in &self.notices {
                    if !seen.contains(&n) {
                        let _ = writeln!(out, "note: {n}");
                        seen.push(n);
                    }
                }
                out
            }
        })
    }

    pub fn write_arrays(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Validation(format!("cannot create {}: {e}", dir.display())))?;
        for (name, t) in &self.arrays {
            let path = dir.join(format!("{name}.csv"));
            std::fs::write(&path, t.to_csv()?)
                .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}
