//! ASCII PCD v0.7 reader and writer.

use super::{input_to_lines, parse_coord, FormatError, ParsedCloud};
use crate::cloud::{Point3, PointCloud};
use std::fmt::Write as _;

#[derive(Default)]
struct Header {
    fields: Option<(usize, Vec<String>)>,
    counts: Option<(usize, Vec<usize>)>,
    width: Option<usize>,
    height: Option<usize>,
    points: Option<usize>,
    data_line: Option<usize>,
}

/// Parses an ASCII PCD v0.7 byte stream. FIELDS must contain at least
/// `x y z`; other fields are parsed and ignored.
pub fn read_pcd(bytes: &[u8]) -> Result<ParsedCloud, FormatError> {
    let lines = input_to_lines(bytes)?;
    let mut header = Header::default();
    let mut data_start = None;

    for (idx, raw) in lines.iter().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let key = tokens.next().unwrap_or("");
        let rest: Vec<&str> = tokens.collect();
        match key {
            "VERSION" => {
                let v = rest.first().copied().unwrap_or("");
                if v != "0.7" && v != ".7" {
                    return Err(FormatError::at(
                        line_no,
                        format!("unsupported PCD version `{v}` (expected 0.7)"),
                    ));
                }
            }
            "FIELDS" => {
                header.fields =
                    Some((line_no, rest.iter().map(|s| s.to_string()).collect()));
            }
            "COUNT" => {
                let mut counts = Vec::with_capacity(rest.len());
                for tok in &rest {
                    counts.push(tok.parse::<usize>().map_err(|_| {
                        FormatError::at(line_no, format!("bad COUNT value `{tok}`"))
                    })?);
                }
                header.counts = Some((line_no, counts));
            }
            "WIDTH" => header.width = Some(parse_usize(&rest, line_no, "WIDTH")?),
            "HEIGHT" => header.height = Some(parse_usize(&rest, line_no, "HEIGHT")?),
            "POINTS" => header.points = Some(parse_usize(&rest, line_no, "POINTS")?),
            "SIZE" | "TYPE" | "VIEWPOINT" => {}
            "DATA" => {
                let enc = rest.first().copied().unwrap_or("");
                if enc != "ascii" {
                    return Err(FormatError::UnsupportedEncoding(enc.to_string()));
                }
                header.data_line = Some(line_no);
                data_start = Some(idx + 1);
                break;
            }
            other => {
                return Err(FormatError::at(
                    line_no,
                    format!("unknown PCD header key `{other}`"),
                ));
            }
        }
    }

    let data_start =
        data_start.ok_or_else(|| FormatError::at(lines.len().max(1), "missing DATA line"))?;
    let data_line = header.data_line.unwrap_or(data_start);

    let (fields_line, fields) = header
        .fields
        .ok_or_else(|| FormatError::at(data_line, "missing FIELDS line"))?;
    let counts = match header.counts {
        Some((count_line, counts)) => {
            if counts.len() != fields.len() {
                return Err(FormatError::at(
                    count_line,
                    format!(
                        "COUNT has {} entries but FIELDS has {}",
                        counts.len(),
                        fields.len()
                    ),
                ));
            }
            counts
        }
        None => vec![1; fields.len()],
    };

    // Column offset of each field once multi-count fields are flattened.
    let mut offsets = Vec::with_capacity(fields.len());
    let mut total_cols = 0usize;
    for c in &counts {
        offsets.push(total_cols);
        total_cols += c;
    }
    let col_of = |name: &str| -> Option<usize> {
        fields.iter().position(|f| f == name).map(|i| offsets[i])
    };
    let (cx, cy, cz) = match (col_of("x"), col_of("y"), col_of("z")) {
        (Some(cx), Some(cy), Some(cz)) => (cx, cy, cz),
        _ => {
            return Err(FormatError::at(
                fields_line,
                "FIELDS must contain x, y and z",
            ))
        }
    };

    let expected = match (header.points, header.width, header.height) {
        (Some(p), _, _) => p,
        (None, Some(w), h) => w * h.unwrap_or(1),
        _ => return Err(FormatError::at(data_line, "missing POINTS (or WIDTH) line")),
    };

    let mut cloud = PointCloud::new();
    let mut dropped = 0usize;
    let mut rows = 0usize;
    for (idx, raw) in lines.iter().enumerate().skip(data_start) {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        rows += 1;
        if rows > expected {
            return Err(FormatError::at(
                line_no,
                format!("more data rows than the declared {expected} points"),
            ));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != total_cols {
            return Err(FormatError::at(
                line_no,
                format!(
                    "field count mismatch: expected {} columns, found {}",
                    total_cols,
                    tokens.len()
                ),
            ));
        }
        let p = Point3::new(
            parse_coord(tokens[cx], line_no, "x")?,
            parse_coord(tokens[cy], line_no, "y")?,
            parse_coord(tokens[cz], line_no, "z")?,
        );
        if p.is_finite() {
            cloud.push(p);
        } else {
            dropped += 1;
        }
    }
    if rows != expected {
        return Err(FormatError::at(
            lines.len(),
            format!("declared {expected} points but found {rows} data rows"),
        ));
    }

    Ok(ParsedCloud {
        cloud,
        dropped_nonfinite: dropped,
    })
}

fn parse_usize(rest: &[&str], line: usize, key: &str) -> Result<usize, FormatError> {
    let tok = rest
        .first()
        .ok_or_else(|| FormatError::at(line, format!("{key} needs a value")))?;
    tok.parse::<usize>()
        .map_err(|_| FormatError::at(line, format!("bad {key} value `{tok}`")))
}

/// Serializes the cloud as ASCII PCD v0.7 (xyz only, six decimal digits).
pub fn write_pcd(cloud: &PointCloud) -> String {
    let n = cloud.len();
    let mut out = String::with_capacity(200 + 40 * n);
    let _ = write!(
        out,
        "# .PCD v0.7 - Point Cloud Data file format\n\
         VERSION 0.7\n\
         FIELDS x y z\n\
         SIZE 4 4 4\n\
         TYPE F F F\n\
         COUNT 1 1 1\n\
         WIDTH {n}\n\
         HEIGHT 1\n\
         VIEWPOINT 0 0 0 1 0 0 0\n\
         POINTS {n}\n\
         DATA ascii\n"
    );
    for p in cloud.iter() {
        let _ = writeln!(out, "{:.6} {:.6} {:.6}", p.x, p.y, p.z);
    }
    out
}
