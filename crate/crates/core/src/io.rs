//! Persistence: binary field files, JSON reports, CSV traces and baseline records.
//!
//! Field files are `"NWAV"`, then little-endian `u32` version (1), `u32` dim,
//! `u32` points per axis, `f64` half length, `u32` dtype (0 real64,
//! 1 complex128), then the row-major payload.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::EvolutionTrace;
use crate::grid::{Field, GridError, GridSpec};

pub const MAGIC: &[u8; 4] = b"NWAV";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 4;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic bytes {0:?}")]
    MagicMismatch([u8; 4]),
    #[error("unsupported format version {0}")]
    VersionMismatch(u32),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("dimension {0} outside {{1, 2, 3}}")]
    BadDimension(u32),
    #[error("unknown dtype tag {0}")]
    BadDtype(u32),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("no baseline record for {0}")]
    MissingRecord(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    Real64 = 0,
    Complex128 = 1,
}

pub fn encode_field(field: &Field, dtype: Dtype) -> Vec<u8> {
    let g = field.grid;
    let width = if dtype == Dtype::Real64 { 8 } else { 16 };
    let mut out = Vec::with_capacity(HEADER_LEN + g.len() * width);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.dim as u32).to_le_bytes());
    out.extend_from_slice(&(g.points as u32).to_le_bytes());
    out.extend_from_slice(&g.half_length.to_le_bytes());
    out.extend_from_slice(&(dtype as u32).to_le_bytes());
    for z in &field.values {
        out.extend_from_slice(&z.re.to_le_bytes());
        if dtype == Dtype::Complex128 {
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

/// Decodes a field file; real payloads widen to zero imaginary parts.
pub fn decode_field(bytes: &[u8]) -> Result<(Field, Dtype), IoError> {
    if bytes.len() < HEADER_LEN {
        return Err(IoError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(IoError::MagicMismatch(magic));
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(IoError::VersionMismatch(version));
    }
    let dim = u32_at(bytes, 8);
    if !(1..=3).contains(&dim) {
        return Err(IoError::BadDimension(dim));
    }
    let points = u32_at(bytes, 12);
    let half_length = f64_at(bytes, 16);
    let dtype = match u32_at(bytes, 24) {
        0 => Dtype::Real64,
        1 => Dtype::Complex128,
        t => return Err(IoError::BadDtype(t)),
    };
    let grid = GridSpec::new(dim as usize, points as usize, half_length)?;
    let width = if dtype == Dtype::Real64 { 8 } else { 16 };
    let expected = HEADER_LEN + grid.len() * width;
    if bytes.len() != expected {
        return Err(IoError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let payload = &bytes[HEADER_LEN..];
    let values = (0..grid.len())
        .map(|i| {
            let at = i * width;
            let re = f64_at(payload, at);
            let im = if dtype == Dtype::Complex128 { f64_at(payload, at + 8) } else { 0.0 };
            Complex64::new(re, im)
        })
        .collect();
    Ok((Field { grid, values }, dtype))
}

pub fn write_field_as(path: &Path, field: &Field, dtype: Dtype) -> Result<(), IoError> {
    fs::write(path, encode_field(field, dtype)).map_err(io_err(path))
}

pub fn write_field(path: &Path, field: &Field) -> Result<(), IoError> {
    write_field_as(path, field, Dtype::Complex128)
}

pub fn read_field(path: &Path) -> Result<Field, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(decode_field(&bytes)?.0)
}

/// JSON formatter that prints every float with 17 significant digits.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write!(writer, "{value:.8e}")
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("JSON output is UTF-8"))
}

pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<(), IoError> {
    let text = to_json_string(report).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_report<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Header of the trace CSV for dimension `dim`.
pub fn trace_header(dim: usize) -> String {
    let mut cols = vec!["t", "mass", "energy", "kinetic", "orbit_distance"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    cols.extend(["x", "y", "z"].iter().take(dim).map(|a| format!("momentum_{a}")));
    cols.join(",")
}

pub fn trace_to_csv(trace: &EvolutionTrace, dim: usize) -> String {
    let mut out = trace_header(dim);
    out.push('\n');
    for i in 0..trace.len() {
        let orbit = trace
            .orbit_distance
            .as_ref()
            .and_then(|d| d.get(i).copied())
            .unwrap_or(f64::NAN);
        let mut row = vec![trace.times[i], trace.mass[i], trace.energy[i], trace.kinetic[i], orbit];
        let p = &trace.momentum[i];
        row.extend((0..dim).map(|d| p.get(d).copied().unwrap_or(f64::NAN)));
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_trace(path: &Path, trace: &EvolutionTrace, dim: usize) -> Result<(), IoError> {
    fs::write(path, trace_to_csv(trace, dim)).map_err(io_err(path))
}

/// Result of a single-potential baseline solve, keyed by exponent, mass and grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub gamma: f64,
    pub mass: f64,
    pub grid: GridSpec,
    pub grid_fingerprint: String,
    pub m_infty: f64,
    #[serde(rename = "S_gamma")]
    pub s_gamma: f64,
    #[serde(rename = "S_gamma_formula")]
    pub s_gamma_formula: f64,
    pub omega_mass: f64,
    pub lambda: f64,
    pub grad_residual: f64,
    /// Field file of the ground state on the working grid, relative to the store.
    pub field_file: Option<String>,
}

impl BaselineRecord {
    pub fn key(gamma: f64, mass: f64, grid: &GridSpec) -> String {
        format!("baseline-g{gamma:e}-c{mass:e}-{}", grid.fingerprint())
    }

    pub fn own_key(&self) -> String {
        Self::key(self.gamma, self.mass, &self.grid)
    }
}

/// Directory of baseline records.
#[derive(Debug, Clone)]
pub struct BaselineStore {
    pub root: PathBuf,
}

impl BaselineStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self, IoError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.root.join(format!("{key}.json"))
    }

    pub fn store(&self, record: &BaselineRecord, field: Option<&Field>) -> Result<PathBuf, IoError> {
        let key = record.own_key();
        let mut rec = record.clone();
        if let Some(f) = field {
            let name = format!("{key}.nwav");
            write_field(&self.root.join(&name), f)?;
            rec.field_file = Some(name);
        }
        let path = self.path(&key);
        write_report(&path, &rec)?;
        Ok(path)
    }

    pub fn lookup(&self, gamma: f64, mass: f64, grid: &GridSpec) -> Result<BaselineRecord, IoError> {
        let key = BaselineRecord::key(gamma, mass, grid);
        let path = self.path(&key);
        if !path.exists() {
            return Err(IoError::MissingRecord(key));
        }
        read_report(&path)
    }

    pub fn load_field(&self, record: &BaselineRecord) -> Result<Field, IoError> {
        let name = record
            .field_file
            .as_ref()
            .ok_or_else(|| IoError::MissingRecord(format!("{} (field)", record.own_key())))?;
        read_field(&self.root.join(name))
    }
}
