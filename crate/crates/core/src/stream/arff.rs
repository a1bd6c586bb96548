//! ARFF subset in the Mulan convention: numeric feature attributes plus label
//! attributes named by a companion label list. Both dense and sparse
//! (`{index value, ...}`) data rows are accepted.

use super::{Dataset, Instance, StreamError};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Feature(usize),
    Label(usize),
}

/// One label name per line; blank lines and `#` comments are skipped.
pub fn parse_label_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| unquote(l).to_string())
        .collect()
}

pub fn parse_arff(text: &str, label_names: &[String]) -> Result<Dataset, StreamError> {
    let label_set: HashMap<&str, ()> = label_names.iter().map(|n| (n.as_str(), ())).collect();
    if label_set.len() != label_names.len() {
        return Err(StreamError::schema(None, "duplicate name in label list"));
    }

    let mut roles: Vec<Role> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut num_features = 0usize;
    let mut num_labels = 0usize;
    let mut in_data = false;
    let mut instances = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = line.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                continue;
            }
            if lower.starts_with("@data") {
                for name in label_names {
                    if !names.iter().any(|n| n == name) {
                        return Err(StreamError::schema(
                            Some(line_no),
                            format!("label '{name}' is not a declared attribute"),
                        ));
                    }
                }
                if num_labels == 0 {
                    return Err(StreamError::schema(Some(line_no), "no label attributes"));
                }
                in_data = true;
                continue;
            }
            if lower.starts_with("@attribute") {
                let rest = line["@attribute".len()..].trim();
                let (name, kind) = split_attribute(rest)
                    .ok_or_else(|| StreamError::parse(line_no, "malformed @attribute"))?;
                if names.iter().any(|n| n == name) {
                    return Err(StreamError::schema(
                        Some(line_no),
                        format!("duplicate attribute '{name}'"),
                    ));
                }
                let kind_lower = kind.to_ascii_lowercase();
                let numeric = matches!(kind_lower.as_str(), "numeric" | "real" | "integer");
                let binary_nominal = is_binary_nominal(kind);
                if label_set.contains_key(name) {
                    if !(numeric || binary_nominal) {
                        return Err(StreamError::schema(
                            Some(line_no),
                            format!("label attribute '{name}' must be {{0,1}} or numeric"),
                        ));
                    }
                    roles.push(Role::Label(num_labels));
                    num_labels += 1;
                } else {
                    if !numeric {
                        return Err(StreamError::schema(
                            Some(line_no),
                            format!("feature attribute '{name}' is not numeric"),
                        ));
                    }
                    roles.push(Role::Feature(num_features));
                    num_features += 1;
                }
                names.push(name.to_string());
                continue;
            }
            return Err(StreamError::parse(line_no, "unexpected line in header"));
        }

        let mut inst = Instance {
            features: vec![0.0; num_features],
            labels: vec![-1; num_labels],
        };
        if let Some(body) = line.strip_prefix('{') {
            let body = body
                .strip_suffix('}')
                .ok_or_else(|| StreamError::parse(line_no, "unterminated sparse row"))?;
            let mut seen = vec![false; roles.len()];
            for entry in body.split(',').map(str::trim).filter(|e| !e.is_empty()) {
                let (i, v) = entry
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| StreamError::parse(line_no, format!("bad entry '{entry}'")))?;
                let ai: usize = i
                    .parse()
                    .map_err(|_| StreamError::parse(line_no, format!("bad index '{i}'")))?;
                if ai >= roles.len() {
                    return Err(StreamError::schema(
                        Some(line_no),
                        format!("attribute index {ai} out of range"),
                    ));
                }
                if seen[ai] {
                    return Err(StreamError::schema(
                        Some(line_no),
                        format!("duplicate attribute index {ai}"),
                    ));
                }
                seen[ai] = true;
                assign(&mut inst, roles[ai], v.trim(), line_no)?;
            }
        } else {
            let values: Vec<&str> = line.split(',').map(str::trim).collect();
            if values.len() != roles.len() {
                return Err(StreamError::schema(
                    Some(line_no),
                    format!("expected {} values, found {}", roles.len(), values.len()),
                ));
            }
            for (role, v) in roles.iter().zip(values) {
                assign(&mut inst, *role, v, line_no)?;
            }
        }
        instances.push(inst);
    }

    if !in_data {
        return Err(StreamError::schema(None, "missing @data section"));
    }
    Ok(Dataset {
        num_features,
        num_labels,
        instances,
    })
}

fn assign(inst: &mut Instance, role: Role, raw: &str, line_no: usize) -> Result<(), StreamError> {
    let value = unquote(raw);
    match role {
        Role::Feature(j) => {
            let v: f64 = value
                .parse()
                .map_err(|_| StreamError::parse(line_no, format!("bad numeric value '{value}'")))?;
            if !v.is_finite() {
                return Err(StreamError::parse(line_no, "non-finite feature value"));
            }
            inst.features[j] = v;
        }
        Role::Label(k) => {
            inst.labels[k] = match value {
                "1" | "1.0" => 1,
                "0" | "0.0" => -1,
                other => {
                    return Err(StreamError::parse(
                        line_no,
                        format!("label value '{other}' is not 0 or 1"),
                    ))
                }
            };
        }
    }
    Ok(())
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    for q in ['\'', '"'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

fn split_attribute(rest: &str) -> Option<(&str, &str)> {
    let rest = rest.trim();
    for q in ['\'', '"'] {
        if let Some(stripped) = rest.strip_prefix(q) {
            let end = stripped.find(q)?;
            let kind = stripped[end + 1..].trim();
            return (!kind.is_empty()).then_some((&stripped[..end], kind));
        }
    }
    let (name, kind) = rest.split_once(char::is_whitespace)?;
    let kind = kind.trim();
    (!kind.is_empty()).then_some((name, kind))
}

fn is_binary_nominal(kind: &str) -> bool {
    let Some(inner) = kind.strip_prefix('{').and_then(|k| k.strip_suffix('}')) else {
        return false;
    };
    let mut values: Vec<&str> = inner.split(',').map(|v| unquote(v.trim())).collect();
    values.sort_unstable();
    values == ["0", "1"]
}
