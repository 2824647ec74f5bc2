//! Plain-text serialization: the COO tensor format and the factor output
//! format. Both are line oriented, 0-based, whitespace separated, with `#`
//! comments; the first header comment carries index names and
//! cardinalities.
//!
//! ```text
//! # indices: i=146 j=168 k=5
//! 0 0 0 1
//! 12 37 4 2.5
//! ```

use crate::factor::Factor;
use crate::tensor::SparseTensor;
use crate::{Error, Result};

/// Render a tensor in COO text form (entries in sorted coordinate order).
pub fn write_coo(t: &SparseTensor) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    write!(out, "# indices:").unwrap();
    for (name, card) in t.indices().iter().zip(t.shape()) {
        write!(out, " {name}={card}").unwrap();
    }
    out.push('\n');
    for (coord, value) in t.iter() {
        for c in coord {
            write!(out, "{c} ").unwrap();
        }
        writeln!(out, "{value}").unwrap();
    }
    out
}

/// Parse COO text. The `# indices:` header is required; other `#` lines
/// and blank lines are ignored.
pub fn read_coo(text: &str) -> Result<SparseTensor> {
    let mut indices: Option<(Vec<String>, Vec<usize>)> = None;
    let mut coords: Vec<u32> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if indices.is_none() {
                if let Some(spec) = rest.trim().strip_prefix("indices:") {
                    indices = Some(parse_header(spec, line)?);
                }
            }
            continue;
        }
        let Some((names, shape)) = &indices else {
            return Err(Error::SyntaxError {
                line,
                message: "data before the '# indices:' header".into(),
            });
        };
        let _ = names;
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != shape.len() + 1 {
            return Err(Error::SyntaxError {
                line,
                message: format!(
                    "expected {} coordinates and a value, found {} fields",
                    shape.len(),
                    tokens.len()
                ),
            });
        }
        for tok in &tokens[..shape.len()] {
            let c: u32 = tok.parse().map_err(|_| Error::SyntaxError {
                line,
                message: format!("bad coordinate '{tok}'"),
            })?;
            coords.push(c);
        }
        let value: f64 = tokens[shape.len()].parse().map_err(|_| Error::SyntaxError {
            line,
            message: format!("bad value '{}'", tokens[shape.len()]),
        })?;
        values.push(value);
    }
    let Some((names, shape)) = indices else {
        return Err(Error::SyntaxError {
            line: 0,
            message: "missing '# indices:' header".into(),
        });
    };
    SparseTensor::from_flat(names, shape, coords, values)
}

fn parse_header(spec: &str, line: usize) -> Result<(Vec<String>, Vec<usize>)> {
    let mut names = Vec::new();
    let mut shape = Vec::new();
    for part in spec.split_whitespace() {
        let Some((name, card)) = part.split_once('=') else {
            return Err(Error::SyntaxError {
                line,
                message: format!("bad index declaration '{part}'"),
            });
        };
        let card: usize = card.parse().map_err(|_| Error::SyntaxError {
            line,
            message: format!("bad cardinality in '{part}'"),
        })?;
        names.push(name.to_string());
        shape.push(card);
    }
    if names.is_empty() {
        return Err(Error::SyntaxError {
            line,
            message: "empty '# indices:' header".into(),
        });
    }
    Ok((names, shape))
}

/// Render a factor: coordinates then the value, plus the C D E L columns
/// when variational fields are present.
pub fn write_factor(f: &Factor) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    write!(out, "# factor {} indices:", f.name()).unwrap();
    for (name, card) in f.indices().iter().zip(f.shape()) {
        write!(out, " {name}={card}").unwrap();
    }
    out.push('\n');
    write!(out, "# columns: {} value", f.indices().join(" ")).unwrap();
    if f.vb().is_some() {
        out.push_str(" C D E L");
    }
    out.push('\n');
    let shape = f.shape().to_vec();
    let mut coord = vec![0u32; shape.len()];
    for (cell, &value) in f.values().iter().enumerate() {
        let mut rest = cell;
        for d in (0..shape.len()).rev() {
            coord[d] = (rest % shape[d]) as u32;
            rest /= shape[d];
        }
        for c in &coord {
            write!(out, "{c} ").unwrap();
        }
        write!(out, "{value}").unwrap();
        if let Some(vb) = f.vb() {
            write!(out, " {} {} {} {}", vb.c[cell], vb.d[cell], vb.e[cell], vb.l[cell]).unwrap();
        }
        out.push('\n');
    }
    out
}
