//! CSV formats for matches, labels and sampled fields.
//!
//! Match files start with a `dim,n,units` line followed by `n` rows of
//! `x1,..,xD,y1,..,yD[,gt]`. Floats are written with Rust's shortest
//! round-trip formatting, so a write followed by a read is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::field::FieldSample;
use crate::types::{Dim, LabelResult, MatchSet, Point};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("empty input")]
    Empty,
    #[error("line {line}: malformed header: {msg}")]
    Header { line: usize, msg: String },
    #[error("expected {expected}D data, file declares {found}D")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("line {line}: non-numeric field {field:?}")]
    NonNumeric { line: usize, field: String },
    #[error("line {line}: non-finite coordinate")]
    NonFinite { line: usize },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RowLength { line: usize, expected: usize, found: usize },
    #[error("truncated: header declares {expected} rows, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("header declares {expected} rows, found more")]
    ExtraRows { expected: usize },
}

/// Parsed match file.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchFile {
    pub matches: MatchSet,
    pub gt: Option<Vec<bool>>,
    pub units: String,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_f64(line: usize, field: &str) -> std::result::Result<f64, ParseError> {
    field.trim().parse().map_err(|_| ParseError::NonNumeric {
        line,
        field: field.trim().to_string(),
    })
}

fn parse_flag(line: usize, field: &str) -> std::result::Result<bool, ParseError> {
    match field.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(ParseError::NonNumeric {
            line,
            field: other.to_string(),
        }),
    }
}

/// Parse a match file from text. `expected` rejects files of the other
/// dimension.
pub fn parse_matches(text: &str, expected: Option<Dim>) -> std::result::Result<MatchFile, ParseError> {
    let mut lines = data_lines(text);
    let (hline, header) = lines.next().ok_or(ParseError::Empty)?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    if fields.len() < 2 || fields.len() > 3 {
        return Err(ParseError::Header {
            line: hline,
            msg: "expected dim,n,units".into(),
        });
    }
    let dim_raw: usize = fields[0].parse().map_err(|_| ParseError::Header {
        line: hline,
        msg: format!("bad dimension {:?}", fields[0]),
    })?;
    let dim = Dim::from_usize(dim_raw).ok_or_else(|| ParseError::Header {
        line: hline,
        msg: format!("dimension must be 2 or 3, got {dim_raw}"),
    })?;
    if let Some(e) = expected {
        if e != dim {
            return Err(ParseError::DimensionMismatch {
                expected: e.as_usize(),
                found: dim.as_usize(),
            });
        }
    }
    let n: usize = fields[1].parse().map_err(|_| ParseError::Header {
        line: hline,
        msg: format!("bad row count {:?}", fields[1]),
    })?;
    let units = fields.get(2).copied().unwrap_or("").to_string();

    let d = dim.as_usize();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut gt: Vec<bool> = Vec::new();
    let mut width = None;
    for (line, row) in lines {
        if x.len() == n {
            return Err(ParseError::ExtraRows { expected: n });
        }
        let cols: Vec<&str> = row.split(',').collect();
        let expected_width = *width.get_or_insert(cols.len());
        // Every row has the width of the first one, with or without gt.
        let well_formed = cols.len() == 2 * d || cols.len() == 2 * d + 1;
        if !well_formed || cols.len() != expected_width {
            return Err(ParseError::RowLength {
                line,
                expected: if well_formed { expected_width } else { 2 * d },
                found: cols.len(),
            });
        }
        let mut v = [0.0; 6];
        for (k, c) in cols[..2 * d].iter().enumerate() {
            v[k] = parse_f64(line, c)?;
            if !v[k].is_finite() {
                return Err(ParseError::NonFinite { line });
            }
        }
        let (px, py) = if d == 2 {
            (Point::new(v[0], v[1], 0.0), Point::new(v[2], v[3], 0.0))
        } else {
            (Point::new(v[0], v[1], v[2]), Point::new(v[3], v[4], v[5]))
        };
        x.push(px);
        y.push(py);
        if cols.len() == 2 * d + 1 {
            gt.push(parse_flag(line, cols[2 * d])?);
        }
    }
    if x.len() < n || n == 0 {
        return Err(ParseError::Truncated {
            expected: n,
            found: x.len(),
        });
    }
    let matches = MatchSet::new(dim, x, y).map_err(|e| ParseError::Header {
        line: hline,
        msg: e.to_string(),
    })?;
    Ok(MatchFile {
        matches,
        gt: (!gt.is_empty()).then_some(gt),
        units,
    })
}

pub fn load_matches(path: impl AsRef<Path>, expected: Option<Dim>) -> Result<MatchFile> {
    let text = fs::read_to_string(path)?;
    Ok(parse_matches(&text, expected)?)
}

pub fn format_matches(m: &MatchSet, gt: Option<&[bool]>, units: &str) -> String {
    let d = m.dim().as_usize();
    let mut s = format!("{},{},{}\n", d, m.len(), units);
    for i in 0..m.len() {
        let coords = (0..d).map(|k| m.x()[i][k]).chain((0..d).map(|k| m.y()[i][k]));
        for (k, c) in coords.enumerate() {
            if k > 0 {
                s.push(',');
            }
            write!(s, "{}", Real(c)).unwrap();
        }
        if let Some(g) = gt {
            s.push_str(if g[i] { ",1" } else { ",0" });
        }
        s.push('\n');
    }
    s
}

pub fn save_matches(path: impl AsRef<Path>, m: &MatchSet, gt: Option<&[bool]>, units: &str) -> Result<()> {
    fs::write(path, format_matches(m, gt, units))?;
    Ok(())
}

pub const LABELS_HEADER: &str = "index,inlier,posterior,residual";

/// Shortest round-trip text, switching to exponent form far from unity.
struct Real(f64);

impl std::fmt::Display for Real {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if a != 0.0 && !(1e-6..1e16).contains(&a) {
            write!(f, "{:e}", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

pub fn format_labels(labels: &LabelResult) -> String {
    let mut s = String::with_capacity(32 * labels.len() + LABELS_HEADER.len() + 1);
    s.push_str(LABELS_HEADER);
    s.push('\n');
    for i in 0..labels.len() {
        writeln!(
            s,
            "{},{},{},{}",
            i,
            u8::from(labels.inlier[i]),
            Real(labels.posterior[i]),
            Real(labels.residual[i])
        )
        .unwrap();
    }
    s
}

pub fn save_labels(path: impl AsRef<Path>, labels: &LabelResult) -> Result<()> {
    fs::write(path, format_labels(labels))?;
    Ok(())
}

pub fn parse_labels(text: &str) -> std::result::Result<LabelResult, ParseError> {
    let mut lines = data_lines(text);
    let (hline, header) = lines.next().ok_or(ParseError::Empty)?;
    if header != LABELS_HEADER {
        return Err(ParseError::Header {
            line: hline,
            msg: format!("expected {LABELS_HEADER}"),
        });
    }
    let mut out = LabelResult {
        inlier: Vec::new(),
        posterior: Vec::new(),
        residual: Vec::new(),
    };
    for (line, row) in lines {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 4 {
            return Err(ParseError::RowLength {
                line,
                expected: 4,
                found: cols.len(),
            });
        }
        let index: usize = cols[0].trim().parse().map_err(|_| ParseError::NonNumeric {
            line,
            field: cols[0].trim().to_string(),
        })?;
        if index != out.len() {
            return Err(ParseError::Header {
                line,
                msg: format!("expected index {}, found {index}", out.len()),
            });
        }
        out.inlier.push(parse_flag(line, cols[1])?);
        out.posterior.push(parse_f64(line, cols[2])?);
        out.residual.push(parse_f64(line, cols[3])?);
    }
    Ok(out)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelResult> {
    let text = fs::read_to_string(path)?;
    Ok(parse_labels(&text)?)
}

pub fn format_field(samples: &[FieldSample], dim: Dim) -> String {
    let d = dim.as_usize();
    let names = ["x", "y", "z"];
    let mut cols: Vec<String> = names[..d].iter().map(|n| format!("q{n}")).collect();
    cols.extend(names[..d].iter().map(|n| format!("d{n}")));
    cols.push("support".into());
    cols.push("valid".into());
    let mut s = cols.join(",");
    s.push('\n');
    for f in samples {
        let disp = f.displaced - f.query;
        for k in 0..d {
            write!(s, "{},", Real(f.query[k])).unwrap();
        }
        for k in 0..d {
            write!(s, "{},", Real(disp[k])).unwrap();
        }
        writeln!(s, "{},{}", Real(f.support), u8::from(f.valid)).unwrap();
    }
    s
}

pub fn save_field(path: impl AsRef<Path>, samples: &[FieldSample], dim: Dim) -> Result<()> {
    fs::write(path, format_field(samples, dim))?;
    Ok(())
}
