//! ASCII PLY 1.0 reader and writer.

use super::{input_to_lines, parse_coord, FormatError, ParsedCloud};
use crate::cloud::{Point3, PointCloud, Rgb};
use std::fmt::Write as _;

struct Element {
    name: String,
    count: usize,
    /// (name, is_list) per property; list properties take a variable number
    /// of columns and cannot be skipped column-wise.
    properties: Vec<(String, bool)>,
}

/// Parses an ASCII PLY 1.0 byte stream. The `vertex` element must declare
/// `x`, `y` and `z` scalar properties; other properties and elements are
/// parsed and ignored.
pub fn read_ply(bytes: &[u8]) -> Result<ParsedCloud, FormatError> {
    let lines = input_to_lines(bytes)?;
    let mut iter = lines.iter().enumerate();

    let (_, magic) = iter
        .next()
        .ok_or_else(|| FormatError::at(1, "empty input, expected `ply` magic"))?;
    if magic.trim() != "ply" {
        return Err(FormatError::at(1, "missing `ply` magic line"));
    }

    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    let mut data_start = None;
    for (idx, raw) in iter.by_ref() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with("comment") || line.starts_with("obj_info") {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let key = tokens.next().unwrap_or("");
        let rest: Vec<&str> = tokens.collect();
        match key {
            "format" => {
                let enc = rest.first().copied().unwrap_or("");
                if enc != "ascii" {
                    return Err(FormatError::UnsupportedEncoding(enc.to_string()));
                }
                saw_format = true;
            }
            "element" => {
                let name = rest
                    .first()
                    .ok_or_else(|| FormatError::at(line_no, "element needs a name"))?;
                let count = rest
                    .get(1)
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| {
                        FormatError::at(line_no, format!("bad element count for `{name}`"))
                    })?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements.last_mut().ok_or_else(|| {
                    FormatError::at(line_no, "property declared before any element")
                })?;
                let is_list = rest.first().copied() == Some("list");
                let name = rest
                    .last()
                    .ok_or_else(|| FormatError::at(line_no, "property needs a name"))?;
                element.properties.push((name.to_string(), is_list));
            }
            "end_header" => {
                data_start = Some(idx + 1);
                break;
            }
            other => {
                return Err(FormatError::at(
                    line_no,
                    format!("unknown PLY header key `{other}`"),
                ));
            }
        }
    }
    let data_start =
        data_start.ok_or_else(|| FormatError::at(lines.len().max(1), "missing end_header"))?;
    if !saw_format {
        return Err(FormatError::at(data_start, "missing format line"));
    }

    let mut cloud = PointCloud::new();
    let mut dropped = 0usize;
    let mut row_iter = lines
        .iter()
        .enumerate()
        .skip(data_start)
        .map(|(idx, raw)| (idx + 1, raw.trim()))
        .filter(|(_, line)| !line.is_empty());

    for element in &elements {
        if element.name == "vertex" {
            let col = |name: &str| -> Option<usize> {
                element.properties.iter().position(|(p, _)| p == name)
            };
            let (cx, cy, cz) = match (col("x"), col("y"), col("z")) {
                (Some(cx), Some(cy), Some(cz)) => (cx, cy, cz),
                _ => {
                    return Err(FormatError::at(
                        data_start,
                        "vertex element must declare x, y and z",
                    ))
                }
            };
            if element.properties.iter().any(|(_, is_list)| *is_list) {
                return Err(FormatError::at(
                    data_start,
                    "list properties on the vertex element are not supported",
                ));
            }
            let ncols = element.properties.len();
            for _ in 0..element.count {
                let (line_no, line) = row_iter.next().ok_or_else(|| {
                    FormatError::at(
                        lines.len(),
                        format!(
                            "vertex element declares {} rows but the data ended early",
                            element.count
                        ),
                    )
                })?;
                let tokens: Vec<&str> = line.split_whitespace().collect();
                if tokens.len() != ncols {
                    return Err(FormatError::at(
                        line_no,
                        format!(
                            "vertex row has {} values, header declares {} properties",
                            tokens.len(),
                            ncols
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
        } else {
            // Skip rows of elements we do not model (faces, edges, ...).
            for _ in 0..element.count {
                row_iter.next().ok_or_else(|| {
                    FormatError::at(
                        lines.len(),
                        format!("element `{}` has fewer rows than declared", element.name),
                    )
                })?;
            }
        }
    }
    if let Some((line_no, _)) = row_iter.next() {
        return Err(FormatError::at(
            line_no,
            "trailing data after the last declared element",
        ));
    }

    Ok(ParsedCloud {
        cloud,
        dropped_nonfinite: dropped,
    })
}

/// Serializes the cloud as ASCII PLY 1.0 with six decimal digits. When the
/// cloud carries per-point colors they are written as uchar red/green/blue.
pub fn write_ply(cloud: &PointCloud) -> String {
    let n = cloud.len();
    let colors: Option<&Vec<Rgb>> = cloud.colors.as_ref();
    let mut out = String::with_capacity(200 + 48 * n);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {n}");
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    if colors.is_some() {
        out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.iter().enumerate() {
        match colors {
            Some(cs) => {
                let [r, g, b] = cs[i];
                let _ = writeln!(out, "{:.6} {:.6} {:.6} {r} {g} {b}", p.x, p.y, p.z);
            }
            None => {
                let _ = writeln!(out, "{:.6} {:.6} {:.6}", p.x, p.y, p.z);
            }
        }
    }
    out
}
