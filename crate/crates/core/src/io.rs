//! Matrix Market exchange files and trace CSV files.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::cg::CgTraceRecord;
use crate::error::{Error, Result};
use crate::linalg::{DenseVector, SpdMatrix};

pub const TRACE_COLUMNS: [&str; 8] = [
    "k", "alpha", "rnorm", "snorm", "gap", "enorm2", "enormA", "dr_ratio",
];

/// 17 significant digits, enough to round-trip any binary64 value.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_owned()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_owned()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MmLayout {
    Coordinate,
    Array,
}

struct MmHeader {
    layout: MmLayout,
}

fn parse_header(line: &str) -> Result<MmHeader> {
    let tokens: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.first().map(String::as_str) != Some("%%matrixmarket") || tokens.len() != 5 {
        return Err(Error::Parse {
            line: 1,
            message: "missing %%MatrixMarket header".into(),
        });
    }
    if tokens[1] != "matrix" {
        return Err(Error::UnsupportedFormat(format!("object {:?}", tokens[1])));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => MmLayout::Coordinate,
        "array" => MmLayout::Array,
        other => return Err(Error::UnsupportedFormat(format!("format {other:?}"))),
    };
    if tokens[3] != "real" {
        return Err(Error::UnsupportedFormat(format!(
            "field {:?} (only real is accepted)",
            tokens[3]
        )));
    }
    if tokens[4] != "symmetric" {
        return Err(Error::UnsupportedFormat(format!(
            "symmetry {:?} (only symmetric is accepted)",
            tokens[4]
        )));
    }
    Ok(MmHeader { layout })
}

/// Data lines with their 1-based line numbers, comments and blanks removed.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%'))
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse {
        line,
        message: format!("expected {what}"),
    })
}

/// Parses a real symmetric Matrix Market document (coordinate or array).
pub fn parse_matrix_market(text: &str) -> Result<SpdMatrix> {
    let header = parse_header(text.lines().next().unwrap_or(""))?;
    let mut lines = data_lines(text);
    let (size_line, size) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing size line".into(),
    })?;
    let mut tok = size.split_whitespace();
    let rows: usize = parse_num(tok.next(), size_line, "row count")?;
    let cols: usize = parse_num(tok.next(), size_line, "column count")?;
    if rows != cols {
        return Err(Error::UnsupportedFormat(format!(
            "symmetric matrix must be square, got {rows}x{cols}"
        )));
    }
    let n = rows;
    let mut entries = Vec::new();
    match header.layout {
        MmLayout::Coordinate => {
            let nnz: usize = parse_num(tok.next(), size_line, "entry count")?;
            for (line, l) in lines.by_ref() {
                let mut t = l.split_whitespace();
                let i: usize = parse_num(t.next(), line, "row index")?;
                let j: usize = parse_num(t.next(), line, "column index")?;
                let v: f64 = parse_num(t.next(), line, "real value")?;
                if t.next().is_some() {
                    return Err(Error::Parse {
                        line,
                        message: "trailing tokens".into(),
                    });
                }
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(Error::Parse {
                        line,
                        message: format!("index ({i}, {j}) outside 1..={n}"),
                    });
                }
                let (i, j) = if i >= j { (i - 1, j - 1) } else { (j - 1, i - 1) };
                entries.push((i, j, v));
            }
            if entries.len() != nnz {
                return Err(Error::Parse {
                    line: size_line,
                    message: format!("header declares {nnz} entries, found {}", entries.len()),
                });
            }
        }
        MmLayout::Array => {
            // column-major lower triangle
            let mut values = Vec::with_capacity(n * (n + 1) / 2);
            for (line, l) in lines.by_ref() {
                let v: f64 = parse_num(Some(l), line, "real value")?;
                values.push(v);
            }
            if values.len() != n * (n + 1) / 2 {
                return Err(Error::Parse {
                    line: size_line,
                    message: format!(
                        "expected {} lower-triangle values, found {}",
                        n * (n + 1) / 2,
                        values.len()
                    ),
                });
            }
            let mut it = values.into_iter();
            for j in 0..n {
                for i in j..n {
                    entries.push((i, j, it.next().expect("counted")));
                }
            }
        }
    }
    SpdMatrix::from_lower_triplets(n, &entries)
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SpdMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_market(&text)
}

/// Coordinate real symmetric, lower triangle, 17 significant digits.
pub fn format_matrix_market(a: &SpdMatrix) -> String {
    let entries = a.lower_triplets();
    let mut out = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
    out.push_str(&format!("{} {} {}\n", a.order(), a.order(), entries.len()));
    for (i, j, v) in entries {
        out.push_str(&format!("{} {} {}\n", i + 1, j + 1, fmt_f64(v)));
    }
    out
}

pub fn write_matrix_market(a: &SpdMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_matrix_market(a)).map_err(|e| Error::io(path, e))
}

/// Reads a dense vector stored as a Matrix Market `array real general`
/// column (`n x 1`).
pub fn read_vector_market(path: impl AsRef<Path>) -> Result<DenseVector> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vector_market(&text)
}

pub fn parse_vector_market(text: &str) -> Result<DenseVector> {
    let head: Vec<String> = text
        .lines()
        .next()
        .unwrap_or("")
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if head.len() != 5 || head[0] != "%%matrixmarket" || head[1] != "matrix" {
        return Err(Error::Parse {
            line: 1,
            message: "missing %%MatrixMarket header".into(),
        });
    }
    if head[2] != "array" || head[3] != "real" || head[4] != "general" {
        return Err(Error::UnsupportedFormat(format!(
            "vector files must be array real general, got {} {} {}",
            head[2], head[3], head[4]
        )));
    }
    let mut lines = data_lines(text);
    let (size_line, size) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing size line".into(),
    })?;
    let mut tok = size.split_whitespace();
    let rows: usize = parse_num(tok.next(), size_line, "row count")?;
    let cols: usize = parse_num(tok.next(), size_line, "column count")?;
    if cols != 1 {
        return Err(Error::UnsupportedFormat(format!("expected one column, got {cols}")));
    }
    let values = lines
        .map(|(line, l)| parse_num::<f64>(Some(l), line, "real value"))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != rows {
        return Err(Error::Parse {
            line: size_line,
            message: format!("expected {rows} values, found {}", values.len()),
        });
    }
    DenseVector::new(values)
}

pub fn write_vector_market(v: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("%%MatrixMarket matrix array real general\n{} 1\n", v.len());
    for x in v {
        out.push_str(&fmt_f64(*x));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn trace_row(t: &CgTraceRecord) -> [String; 8] {
    [
        t.k.to_string(),
        fmt_f64(t.alpha),
        fmt_f64(t.rnorm),
        fmt_f64(t.snorm),
        fmt_f64(t.gap),
        opt(t.enorm2),
        opt(t.enorm_a),
        opt(t.dr_ratio),
    ]
}

/// Serializes a trace as CSV text (header plus one row per record).
pub fn format_trace(trace: &[CgTraceRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Csv {
        path: "<memory>".into(),
        source: e,
    };
    w.write_record(TRACE_COLUMNS).map_err(wrap)?;
    for t in trace {
        w.write_record(trace_row(t)).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("ascii output"))
}

pub fn write_trace(trace: &[CgTraceRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = format_trace(trace)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn parse_trace(text: &str) -> Result<Vec<CgTraceRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let wrap = |e: csv::Error| Error::Csv {
        path: "<memory>".into(),
        source: e,
    };
    let headers = r.headers().map_err(wrap)?.clone();
    if headers.iter().ne(TRACE_COLUMNS) {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected trace header {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut out: Vec<CgTraceRecord> = Vec::new();
    for (idx, rec) in r.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(wrap)?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let req = |i: usize| -> Result<f64> {
            field(i).parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {} is not a number: {:?}", TRACE_COLUMNS[i], field(i)),
            })
        };
        let optional = |i: usize| -> Result<Option<f64>> {
            if field(i).is_empty() {
                Ok(None)
            } else {
                req(i).map(Some)
            }
        };
        let k: usize = field(0).parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid iteration index {:?}", field(0)),
        })?;
        if let Some(prev) = out.last() {
            if k <= prev.k {
                return Err(Error::Parse {
                    line,
                    message: format!("iteration {k} does not follow {}", prev.k),
                });
            }
        }
        out.push(CgTraceRecord {
            k,
            alpha: req(1)?,
            rnorm: req(2)?,
            snorm: req(3)?,
            gap: req(4)?,
            enorm2: optional(5)?,
            enorm_a: optional(6)?,
            dr_ratio: optional(7)?,
        });
    }
    Ok(out)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<CgTraceRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text)
}

/// Writes a subset of trace columns, for plotting.
pub fn write_plot_columns(trace: &[CgTraceRecord], columns: &[String], path: impl AsRef<Path>) -> Result<()> {
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            TRACE_COLUMNS
                .iter()
                .position(|t| t == c)
                .ok_or_else(|| Error::usage(format!("unknown trace column {c:?}")))
        })
        .collect::<Result<_>>()?;
    let path = path.as_ref();
    let mut out = columns.join(",");
    out.push('\n');
    for t in trace {
        let row = trace_row(t);
        let sel: Vec<&str> = idx.iter().map(|&i| row[i].as_str()).collect();
        out.push_str(&sel.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
