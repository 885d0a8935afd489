//! Serialization of grid functions, series and reports.
//!
//! A grid-function file is one JSON object
//!
//! ```text
//! {"L": 8.0, "N": 1024, "kind": "complex", "encoding": "base64", "t": -0.5, "data": "..."}
//! ```
//!
//! `data` holds `N` pairs `(re, im)` of IEEE-754 binary64 values in node order, either as a
//! flat JSON array `[re0, im0, re1, im1, ...]` (`"encoding": "array"`) or as the base64 string
//! of their little-endian bytes (`"encoding": "base64"`, 16 bytes per node). `kind` is `"real"`
//! when every imaginary part is zero; the layout is the same.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpectralGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    #[default]
    Base64,
    Array,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Payload {
    Text(String),
    Numbers(Vec<f64>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GridFile {
    #[serde(rename = "L")]
    l: f64,
    #[serde(rename = "N")]
    n: usize,
    kind: String,
    encoding: Encoding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    data: Payload,
}

fn pairs(f: &GridFunction) -> impl Iterator<Item = f64> + '_ {
    f.values().iter().flat_map(|v| [v.re, v.im])
}

pub fn grid_function_to_json(f: &GridFunction, t: Option<f64>, encoding: Encoding) -> Result<String> {
    let g = f.grid();
    let data = match encoding {
        Encoding::Array => Payload::Numbers(pairs(f).collect()),
        Encoding::Base64 => {
            let bytes: Vec<u8> = pairs(f).flat_map(f64::to_le_bytes).collect();
            Payload::Text(STANDARD.encode(bytes))
        }
    };
    let kind = if f.values().iter().all(|v| v.im == 0.0) { "real" } else { "complex" };
    let file = GridFile { l: g.half_width(), n: g.size(), kind: kind.into(), encoding, t, data };
    Ok(serde_json::to_string(&file)?)
}

/// Returns the field and the optional time stamp.
pub fn grid_function_from_json(s: &str) -> Result<(GridFunction, Option<f64>)> {
    let file: GridFile = serde_json::from_str(s)?;
    let grid = SpectralGrid::new(file.l, file.n)?;
    let nums: Vec<f64> = match (file.encoding, file.data) {
        (Encoding::Array, Payload::Numbers(v)) => v,
        (Encoding::Base64, Payload::Text(s)) => {
            let bytes = STANDARD.decode(s.as_bytes()).map_err(|e| Error::Format(e.to_string()))?;
            if bytes.len() % 8 != 0 {
                return Err(Error::Format(format!("{} bytes is not a whole number of f64", bytes.len())));
            }
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect()
        }
        (e, _) => return Err(Error::Format(format!("payload does not match encoding {e:?}"))),
    };
    if nums.len() != 2 * file.n {
        return Err(Error::Format(format!("expected {} numbers, found {}", 2 * file.n, nums.len())));
    }
    let vals = nums.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    Ok((GridFunction::new(&grid, vals)?, file.t))
}

pub fn write_grid_function(path: &Path, f: &GridFunction, t: Option<f64>, encoding: Encoding) -> Result<()> {
    fs::write(path, grid_function_to_json(f, t, encoding)?)?;
    Ok(())
}

pub fn read_grid_function(path: &Path) -> Result<(GridFunction, Option<f64>)> {
    grid_function_from_json(&fs::read_to_string(path)?)
}

/// `x,re,im` rows.
pub fn grid_function_csv(f: &GridFunction) -> String {
    let g = f.grid();
    let mut s = String::from("x,re,im\n");
    for (j, v) in f.values().iter().enumerate() {
        s.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", g.x(j), v.re, v.im));
    }
    s
}

/// Parses `x,re,im` rows onto the grid implied by the node spacing.
pub fn grid_function_from_csv(s: &str) -> Result<GridFunction> {
    let mut xs = Vec::new();
    let mut vals = Vec::new();
    for (i, line) in s.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|e| Error::Format(format!("line {}: {e}", i + 1))))
            .collect::<Result<_>>()?;
        if cols.len() != 3 {
            return Err(Error::Format(format!("line {}: expected 3 columns", i + 1)));
        }
        xs.push(cols[0]);
        vals.push(Complex64::new(cols[1], cols[2]));
    }
    if xs.len() < 2 {
        return Err(Error::Format("need at least two rows".into()));
    }
    let n = xs.len();
    let l = -xs[0];
    let grid = SpectralGrid::new(l, n)?;
    if (grid.x(n - 1) - xs[n - 1]).abs() > 1e-9 * l {
        return Err(Error::Format("nodes are not x_j = -L + 2Lj/N".into()));
    }
    GridFunction::new(&grid, vals)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Code-version tag embedded in reports.
pub fn version_tag() -> String {
    format!("halfwave-core {}", env!("CARGO_PKG_VERSION"))
}
