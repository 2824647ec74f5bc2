use std::fs;

use anyhow::{bail, Context, Result};
use gctf_core::tensor::SparseTensor;

use crate::ConvertArgs;

pub fn run(args: &ConvertArgs) -> Result<()> {
    if args.from_format != "coo-text" || args.to_format != "coo-text" {
        bail!(
            "unsupported conversion {} -> {}; only coo-text is implemented",
            args.from_format,
            args.to_format
        );
    }
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("cannot read '{}'", args.input.display()))?;
    let (mut header, entries) = parse_raw(&text, args.reindex)
        .with_context(|| format!("in '{}'", args.input.display()))?;

    if let Some(spec) = &args.indices {
        header = Some(parse_indices_flag(spec)?);
    }
    let ndim = entries
        .first()
        .map(|(c, _)| c.len())
        .or_else(|| header.as_ref().map(|(names, _)| names.len()))
        .context("input has neither entries nor an index header")?;

    let (names, shape) = match header {
        Some(h) => h,
        None => {
            // infer: generic names, cardinality = max coordinate + 1
            let mut shape = vec![0usize; ndim];
            for (coord, _) in &entries {
                for (d, &c) in coord.iter().enumerate() {
                    shape[d] = shape[d].max(c as usize + 1);
                }
            }
            ((0..ndim).map(|d| format!("i{d}")).collect(), shape)
        }
    };

    // sort and deduplicate; equal-value duplicates collapse, conflicting
    // duplicates are an error
    let mut sorted = entries;
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut coords: Vec<u32> = Vec::with_capacity(sorted.len() * ndim);
    let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
    for (coord, value) in sorted {
        if !values.is_empty() && coords[coords.len() - ndim..] == coord[..] {
            let prev = *values.last().unwrap();
            if prev != value {
                bail!(
                    "conflicting duplicate at {:?}: values {prev} and {value}",
                    coord
                );
            }
            continue;
        }
        coords.extend_from_slice(&coord);
        values.push(value);
    }

    let tensor = SparseTensor::from_flat(names, shape, coords, values)?;
    fs::write(&args.out, gctf_core::io::write_coo(&tensor))
        .with_context(|| format!("cannot write '{}'", args.out.display()))?;
    println!(
        "convert: {} entries over {:?}",
        tensor.nnz(),
        tensor.shape()
    );
    Ok(())
}

type Header = (Vec<String>, Vec<usize>);
type Entries = Vec<(Vec<u32>, f64)>;

/// Parse a coordinate file that may or may not carry the `# indices:`
/// header; coordinates may be 1-based when `reindex` is set.
fn parse_raw(text: &str, reindex: bool) -> Result<(Option<Header>, Entries)> {
    let mut header: Option<Header> = None;
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if header.is_none() {
                if let Some(spec) = rest.trim().strip_prefix("indices:") {
                    header = Some(parse_indices_flag(&spec.split_whitespace().collect::<Vec<_>>().join(","))?);
                }
            }
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() < 2 {
            bail!("line {line}: expected coordinates and a value");
        }
        let mut coord = Vec::with_capacity(tokens.len() - 1);
        for tok in &tokens[..tokens.len() - 1] {
            let c: i64 = tok
                .parse()
                .with_context(|| format!("line {line}: bad coordinate '{tok}'"))?;
            let c = if reindex { c - 1 } else { c };
            if c < 0 {
                bail!("line {line}: coordinate {tok} became negative after reindexing");
            }
            coord.push(u32::try_from(c).with_context(|| format!("line {line}: coordinate too large"))?);
        }
        let value: f64 = tokens[tokens.len() - 1]
            .parse()
            .with_context(|| format!("line {line}: bad value '{}'", tokens[tokens.len() - 1]))?;
        if let Some(first) = entries.first().map(|(c, _): &(Vec<u32>, f64)| c.len()) {
            if coord.len() != first {
                bail!("line {line}: {} coordinates, earlier lines had {first}", coord.len());
            }
        }
        entries.push((coord, value));
    }
    Ok((header, entries))
}

/// Parse "i=146,j=168,k=5" (or whitespace separated).
fn parse_indices_flag(spec: &str) -> Result<Header> {
    let mut names = Vec::new();
    let mut shape = Vec::new();
    for part in spec.split([',', ' ']).filter(|p| !p.is_empty()) {
        let (name, card) = part
            .split_once('=')
            .with_context(|| format!("bad index declaration '{part}'"))?;
        names.push(name.to_string());
        shape.push(card.parse().with_context(|| format!("bad cardinality in '{part}'"))?);
    }
    anyhow::ensure!(!names.is_empty(), "empty index list");
    Ok((names, shape))
}
