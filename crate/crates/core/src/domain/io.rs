//! CSV and key-value file helpers for the domain tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{AgeBand, Edge, Household, MeshCell, MovingRateTable, ScenarioSpec};
use crate::{Error, Result};

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file)
}

pub fn read_csv_from<T: DeserializeOwned, R: Read>(reader: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    rdr.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(file, rows)
}

pub fn write_csv_to<T: Serialize, W: Write>(writer: W, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_cells(path: &Path) -> Result<Vec<MeshCell>> {
    read_csv(path)
}

pub fn write_cells(path: &Path, cells: &[MeshCell]) -> Result<()> {
    write_csv(path, cells)
}

pub fn read_households(path: &Path) -> Result<Vec<Household>> {
    read_csv(path)
}

pub fn write_households(path: &Path, households: &[Household]) -> Result<()> {
    write_csv(path, households)
}

pub fn read_edges(path: &Path) -> Result<Vec<Edge>> {
    read_csv(path)
}

pub fn write_edges(path: &Path, edges: &[Edge]) -> Result<()> {
    write_csv(path, edges)
}

pub fn read_moving_rates(path: &Path) -> Result<MovingRateTable> {
    MovingRateTable::new(read_csv::<AgeBand>(path)?)
}

pub fn write_moving_rates(path: &Path, table: &MovingRateTable) -> Result<()> {
    write_csv(path, table.bands())
}

/// Parses a scenario definition written as TOML.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    let spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

pub fn read_scenario(path: &Path) -> Result<ScenarioSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Data(format!(
                "line {}: expected `key = value`, got '{raw}'",
                lineno + 1
            ))
        })?;
        let key = key.trim();
        let value: f64 = value.trim().parse().map_err(|_| {
            Error::Data(format!(
                "line {}: '{}' is not a number",
                lineno + 1,
                value.trim()
            ))
        })?;
        if out.insert(key.to_string(), value).is_some() {
            return Err(Error::Data(format!(
                "line {}: duplicate key '{key}'",
                lineno + 1
            )));
        }
    }
    Ok(out)
}

pub fn format_key_values<'a>(
    header: &str,
    entries: impl IntoIterator<Item = (&'a str, f64)>,
) -> String {
    let mut out = String::new();
    for line in header.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    for (k, v) in entries {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
