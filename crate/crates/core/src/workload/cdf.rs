//! Empirical CDF files.
//!
//! Two whitespace-separated columns per line, `size_bytes cum_prob`, sizes
//! and probabilities strictly ascending, the last probability 1.0. Text after
//! `#` is a comment; blank lines are ignored.

use std::path::Path;

use super::dist::{EmpiricalCdf, MessageSizeDist};
use crate::error::{Result, SimError};

const BUILTIN: [(&str, &str); 5] = [
    ("w1", include_str!("../../data/cdf/w1.cdf")),
    ("w2", include_str!("../../data/cdf/w2.cdf")),
    ("w3", include_str!("../../data/cdf/w3.cdf")),
    ("w4", include_str!("../../data/cdf/w4.cdf")),
    ("w5", include_str!("../../data/cdf/w5.cdf")),
];

pub fn load_cdf(path: impl AsRef<Path>) -> Result<MessageSizeDist> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    parse_cdf(&text, &path.display().to_string())
}

/// The bundled approximations of workloads W1 to W5 (`"w1"` .. `"w5"`).
pub fn builtin_cdf(name: &str) -> Option<MessageSizeDist> {
    let lower = name.to_ascii_lowercase();
    let (_, text) = BUILTIN.iter().find(|(n, _)| *n == lower)?;
    Some(parse_cdf(text, name).expect("bundled CDF is well formed"))
}

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

pub fn parse_cdf(text: &str, origin: &str) -> Result<MessageSizeDist> {
    let err = |line: usize, message: String| SimError::Cdf {
        path: origin.to_string(),
        line,
        message,
    };
    let mut points: Vec<(u64, f64)> = Vec::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        last_line = line;
        let cols: Vec<&str> = body.split_whitespace().collect();
        if cols.len() != 2 {
            return Err(err(
                line,
                format!("expected 2 columns, found {}", cols.len()),
            ));
        }
        let size: f64 = cols[0]
            .parse()
            .map_err(|_| err(line, format!("bad size `{}`", cols[0])))?;
        let prob: f64 = cols[1]
            .parse()
            .map_err(|_| err(line, format!("bad probability `{}`", cols[1])))?;
        if !(size >= 1.0) || size.fract() != 0.0 {
            return Err(err(
                line,
                format!("size must be a positive integer, got {}", cols[0]),
            ));
        }
        if !(prob > 0.0 && prob <= 1.0) {
            return Err(err(line, format!("probability {prob} outside (0, 1]")));
        }
        let size = size as u64;
        if let Some(&(ps, pp)) = points.last() {
            if size <= ps {
                return Err(err(
                    line,
                    format!("sizes not ascending ({size} after {ps})"),
                ));
            }
            if prob <= pp {
                return Err(err(line, format!("CDF not increasing ({prob} after {pp})")));
            }
        }
        points.push((size, prob));
    }
    match points.last() {
        None => Err(err(1, "no data lines".into())),
        Some(&(_, p)) if (p - 1.0).abs() > 1e-9 => {
            Err(err(last_line, "CDF does not reach 1.0".into()))
        }
        Some(_) => {
            points.last_mut().unwrap().1 = 1.0;
            Ok(MessageSizeDist::Empirical(EmpiricalCdf::new(points)?))
        }
    }
}
