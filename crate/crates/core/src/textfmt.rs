//! Small helpers shared by the plain-text file formats.

use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Formats numbers with Rust's shortest round-trip representation so text
/// files reproduce `f64` values exactly.
pub fn join_numbers(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v}").expect("write to String");
    }
    out
}

pub fn parse_numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split_whitespace()
        .map(|tok| tok.parse::<f64>().map_err(|e| format!("bad number {tok:?}: {e}")))
        .collect()
}

/// Parses `key=value` lines, skipping blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
        let key = k.trim().to_string();
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key {key:?}", lineno + 1));
        }
    }
    Ok(map)
}

pub fn take<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str, String> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| format!("missing key {key:?}"))
}

pub fn take_f64(map: &BTreeMap<String, String>, key: &str) -> Result<f64, String> {
    let raw = take(map, key)?;
    raw.parse().map_err(|e| format!("key {key:?}: {e}"))
}

pub fn take_u32(map: &BTreeMap<String, String>, key: &str) -> Result<u32, String> {
    let raw = take(map, key)?;
    raw.parse().map_err(|e| format!("key {key:?}: {e}"))
}

const ZERO_FLOOR: f64 = 1e-9;

/// Three significant digits, the way result tables print values
/// (`21.4`, `8.77`, `0.904`). Zero, and anything below the numerical
/// floor of the pipeline (1e-9), prints as `0.00`.
pub fn sig3(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x.abs() < ZERO_FLOOR {
        return "0.00".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (2 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding may carry into a new digit (9.995 -> 10.00)
    let rounded: f64 = s.parse().unwrap_or(x);
    let magnitude2 = rounded.abs().log10().floor() as i32;
    if rounded != 0.0 && magnitude2 != magnitude {
        let decimals = (2 - magnitude2).max(0) as usize;
        return format!("{rounded:.decimals$}");
    }
    s
}

/// `(mean, std)` with three significant digits each.
pub fn tuple(mean: f64, std: f64) -> String {
    format!("({}, {})", sig3(mean), sig3(std))
}
