//! Line-oriented sparse multi-label format.
//!
//! ```text
//! # comment
//! K d N
//! 3,7 | 1:0.5 4:-1.2
//! | 0:1.0
//! ```
//!
//! The header gives the label count, feature count and instance count.
//! Each data line lists the 0-based indices of the positive labels, a `|`,
//! then `index:value` pairs for the non-zero features. `#` starts a comment.

use super::{Dataset, Instance, StreamError};
use std::fmt::Write as _;

pub fn parse_sparse(text: &str) -> Result<Dataset, StreamError> {
    let mut header: Option<(usize, usize, usize)> = None;
    let mut instances = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, d, _)) = header else {
            header = Some(parse_header(line, line_no)?);
            continue;
        };

        let (label_part, feature_part) = line
            .split_once('|')
            .ok_or_else(|| StreamError::parse(line_no, "missing '|' separator"))?;
        if feature_part.contains('|') {
            return Err(StreamError::parse(line_no, "more than one '|' separator"));
        }

        let mut labels = vec![-1i8; k];
        for tok in label_part
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
        {
            let li: usize = tok
                .parse()
                .map_err(|_| StreamError::parse(line_no, format!("bad label index '{tok}'")))?;
            if li >= k {
                return Err(StreamError::schema(
                    Some(line_no),
                    format!("label index {li} >= K = {k}"),
                ));
            }
            if labels[li] == 1 {
                return Err(StreamError::schema(
                    Some(line_no),
                    format!("duplicate label index {li}"),
                ));
            }
            labels[li] = 1;
        }

        let mut features = vec![0.0; d];
        let mut seen = vec![false; d];
        for tok in feature_part.split_whitespace() {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| StreamError::parse(line_no, format!("bad feature '{tok}'")))?;
            let fi: usize = i
                .parse()
                .map_err(|_| StreamError::parse(line_no, format!("bad feature index '{i}'")))?;
            let fv: f64 = v
                .parse()
                .map_err(|_| StreamError::parse(line_no, format!("bad feature value '{v}'")))?;
            if !fv.is_finite() {
                return Err(StreamError::parse(line_no, "non-finite feature value"));
            }
            if fi >= d {
                return Err(StreamError::schema(
                    Some(line_no),
                    format!("feature index {fi} >= d = {d}"),
                ));
            }
            if seen[fi] {
                return Err(StreamError::schema(
                    Some(line_no),
                    format!("duplicate feature index {fi}"),
                ));
            }
            seen[fi] = true;
            features[fi] = fv;
        }
        instances.push(Instance { features, labels });
    }

    let (k, d, n) = header.ok_or_else(|| StreamError::schema(None, "missing header line"))?;
    if instances.len() != n {
        return Err(StreamError::schema(
            None,
            format!("header declares {n} instances, found {}", instances.len()),
        ));
    }
    Ok(Dataset {
        num_features: d,
        num_labels: k,
        instances,
    })
}

fn parse_header(line: &str, line_no: usize) -> Result<(usize, usize, usize), StreamError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(StreamError::parse(line_no, "header must be 'K d N'"));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| StreamError::parse(line_no, format!("bad header field '{s}'")))
    };
    let (k, d, n) = (num(fields[0])?, num(fields[1])?, num(fields[2])?);
    if k == 0 {
        return Err(StreamError::schema(Some(line_no), "K must be positive"));
    }
    Ok((k, d, n))
}

/// Serializes a dataset; zero features are omitted. Float formatting uses
/// the shortest round-trip representation.
pub fn write_sparse(dataset: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {}",
        dataset.num_labels,
        dataset.num_features,
        dataset.instances.len()
    );
    for inst in &dataset.instances {
        let labels: Vec<String> = inst.positive_labels().map(|i| i.to_string()).collect();
        out.push_str(&labels.join(","));
        out.push_str(" |");
        for (i, v) in inst.features.iter().enumerate() {
            if *v != 0.0 {
                let _ = write!(out, " {i}:{v}");
            }
        }
        out.push('\n');
    }
    out
}
