//! Unit handling for configuration documents.
//!
//! Internally every size is in MB (10^6 bytes) and every rate in MB/s. Config
//! documents may give either a bare number (already in MB or MB/s) or a string
//! with an explicit suffix such as `"5 GB"`, `"0.76 KB"` or `"111 GB/s"`.

use serde::{Deserialize, Deserializer};

use crate::error::{Error, Result};

fn size_factor(unit: &str) -> Option<f64> {
    let f = match unit.to_ascii_lowercase().as_str() {
        "b" => 1e-6,
        "kb" => 1e-3,
        "mb" | "" => 1.0,
        "gb" => 1e3,
        "tb" => 1e6,
        "kib" => 1024.0 * 1e-6,
        "mib" => 1024.0 * 1024.0 * 1e-6,
        "gib" => 1024.0 * 1024.0 * 1024.0 * 1e-6,
        "tib" => 1024.0 * 1024.0 * 1024.0 * 1024.0 * 1e-6,
        _ => return None,
    };
    Some(f)
}

fn split_number(text: &str) -> Result<(f64, &str)> {
    let text = text.trim();
    let end = text
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(text.len());
    // "1e3" is a number, but the "e" of a unit like "eb" is not supported anyway.
    let (num, rest) = text.split_at(end);
    let value: f64 = num
        .parse()
        .map_err(|_| Error::config(format!("cannot parse quantity '{text}'")))?;
    Ok((value, rest.trim()))
}

/// Parse a size such as `"5 GB"` into MB.
pub fn parse_size_mb(text: &str) -> Result<f64> {
    let (value, unit) = split_number(text)?;
    let factor =
        size_factor(unit).ok_or_else(|| Error::config(format!("unknown size unit in '{text}'")))?;
    Ok(value * factor)
}

/// Parse a rate such as `"111 GB/s"` into MB/s.
pub fn parse_rate_mbps(text: &str) -> Result<f64> {
    let (value, unit) = split_number(text)?;
    let unit = unit
        .strip_suffix("/s")
        .or_else(|| unit.strip_suffix("ps"))
        .unwrap_or(unit);
    let factor =
        size_factor(unit).ok_or_else(|| Error::config(format!("unknown rate unit in '{text}'")))?;
    Ok(value * factor)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrText {
    Number(f64),
    Text(String),
}

pub(crate) fn de_size_mb<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    match NumberOrText::deserialize(d)? {
        NumberOrText::Number(v) => Ok(v),
        NumberOrText::Text(t) => parse_size_mb(&t).map_err(serde::de::Error::custom),
    }
}

pub(crate) fn de_opt_size_mb<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Option<f64>, D::Error> {
    match Option::<NumberOrText>::deserialize(d)? {
        None => Ok(None),
        Some(NumberOrText::Number(v)) => Ok(Some(v)),
        Some(NumberOrText::Text(t)) => parse_size_mb(&t).map(Some).map_err(serde::de::Error::custom),
    }
}

pub(crate) fn de_rate_mbps<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    match NumberOrText::deserialize(d)? {
        NumberOrText::Number(v) => Ok(v),
        NumberOrText::Text(t) => parse_rate_mbps(&t).map_err(serde::de::Error::custom),
    }
}

pub(crate) fn de_size_list_mb<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Vec<f64>, D::Error> {
    Vec::<NumberOrText>::deserialize(d)?
        .into_iter()
        .map(|v| match v {
            NumberOrText::Number(v) => Ok(v),
            NumberOrText::Text(t) => parse_size_mb(&t).map_err(serde::de::Error::custom),
        })
        .collect()
}

/// A list of sizes (MB) accepting the same spellings as single sizes.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(transparent)]
pub struct SizeList(#[serde(deserialize_with = "de_size_list_mb")] pub Vec<f64>);
