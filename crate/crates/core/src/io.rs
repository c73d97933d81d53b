//! Dataset ingestion, sample serialization, JSON output and run manifests.
//!
//! Input CSV dialect: comma separated, lines starting with `#` are comments,
//! an optional header line, decimal numbers with optional exponent.
//!
//! * `vectors-csv`: one observation per row, k >= 2 coordinates.
//! * `decinc-csv`: declination D and inclination I in degrees per row (k = 3),
//!   mapped to (cos I cos D, cos I sin D, sin I).

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::angular::{Provenance, SampleSet};
use crate::error::{Error, Result};
use crate::geometry::{norm, UnitVector};

/// Rows further than this from unit norm are rejected.
pub const NORM_REJECT: f64 = 1e-3;
/// Rows further than this from unit norm are renormalized with a warning.
pub const NORM_WARN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    VectorsCsv,
    DecincCsv,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vectors" | "vectors-csv" => Ok(Self::VectorsCsv),
            "decinc" | "decinc-csv" => Ok(Self::DecincCsv),
            other => Err(Error::Config(format!("unknown dataset format '{other}'"))),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::VectorsCsv => "vectors-csv",
            Self::DecincCsv => "decinc-csv",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub format: DatasetFormat,
    /// Expected dimension; decinc implies 3.
    pub k: Option<usize>,
}

/// A parsed dataset together with non-fatal notes about renormalized rows.
#[derive(Debug, Clone)]
pub struct ParsedDataset {
    pub sample: SampleSet,
    pub warnings: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads and validates a dataset file.
pub fn parse_dataset(spec: &DatasetSpec) -> Result<SampleSet> {
    Ok(parse_dataset_verbose(spec)?.sample)
}

pub fn parse_dataset_verbose(spec: &DatasetSpec) -> Result<ParsedDataset> {
    let bytes = std::fs::read(&spec.path)?;
    let mut parsed = parse_dataset_bytes(&bytes, spec.format, spec.k)?;
    parsed.sample = parsed.sample.with_provenance(Provenance::File {
        path: spec.path.display().to_string(),
        sha256: sha256_hex(&bytes),
    });
    Ok(parsed)
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("'{field}' is not a number") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("'{field}' is not finite") });
    }
    Ok(v)
}

/// Parses dataset contents. Provenance is attached by [`parse_dataset`].
pub fn parse_dataset_bytes(bytes: &[u8], format: DatasetFormat, k: Option<usize>) -> Result<ParsedDataset> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
    let expected = match format {
        DatasetFormat::DecincCsv => {
            if let Some(k) = k.filter(|&k| k != 3) {
                return Err(Error::Config(format!("decinc data are three-dimensional, not k = {k}")));
            }
            Some(2)
        }
        DatasetFormat::VectorsCsv => k,
    };
    let mut width = expected;
    let mut vectors = Vec::new();
    let mut warnings = Vec::new();
    let mut first = true;
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let record = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(raw.as_bytes())
            .records()
            .next()
            .transpose()
            .map_err(|e| Error::Parse { line, msg: e.to_string() })?
            .unwrap_or_default();
        let is_header = first && record.iter().any(|f| f.parse::<f64>().is_err() && f.chars().any(char::is_alphabetic));
        first = false;
        if is_header {
            continue;
        }
        let values: Vec<f64> = record.iter().map(|f| parse_number(f, line)).collect::<Result<_>>()?;
        let w = *width.get_or_insert(values.len());
        if values.len() != w {
            return Err(Error::Parse { line, msg: format!("expected {w} fields, found {}", values.len()) });
        }
        let coords = match format {
            DatasetFormat::DecincCsv => {
                let (d, i) = (values[0].to_radians(), values[1].to_radians());
                vec![i.cos() * d.cos(), i.cos() * d.sin(), i.sin()]
            }
            DatasetFormat::VectorsCsv => {
                if w < 2 {
                    return Err(Error::Parse { line, msg: "need at least two coordinates".into() });
                }
                values
            }
        };
        let r = norm(&coords);
        if (r - 1.0).abs() > NORM_REJECT {
            return Err(Error::Norm { line, norm: r });
        }
        if (r - 1.0).abs() > NORM_WARN {
            warnings.push(format!("line {line}: norm {r} renormalized"));
        }
        vectors.push(UnitVector::from_raw(coords.iter().map(|c| c / r).collect()));
    }
    if vectors.is_empty() {
        return Err(Error::Parse { line: 0, msg: "no observations".into() });
    }
    Ok(ParsedDataset { sample: SampleSet::new(vectors)?, warnings })
}

/// Writes a sample as `vectors-csv` with a header, shortest round-trip digits.
pub fn write_sample_csv<W: Write>(sample: &SampleSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (1..=sample.k()).map(|i| format!("x{i}")).collect();
    w.write_record(&header).map_err(csv_io)?;
    for v in sample.iter() {
        w.write_record(v.as_slice().iter().map(f64::to_string)).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn write_sample_csv_file(sample: &SampleSet, path: &Path) -> Result<()> {
    write_sample_csv(sample, std::fs::File::create(path)?)
}

/// Pretty JSON with every float printed to 17 significant digits.
struct JsonFormatter {
    inner: PrettyFormatter<'static>,
}

fn write_float<W: ?Sized + Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    if v.is_finite() {
        write!(w, "{v:.16e}")
    } else {
        w.write_all(b"null")
    }
}

impl Formatter for JsonFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        write_float(w, v)
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> std::io::Result<()> {
        write_float(w, f64::from(v))
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, JsonFormatter { inner: PrettyFormatter::new() });
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json_file<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

/// An output file and its hash, for replay verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

impl OutputRecord {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self { path: path.display().to_string(), sha256: sha256_hex(&std::fs::read(path)?) })
    }
}

/// What was run, with which inputs, and what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argument vector, excluding the program name.
    pub args: Vec<String>,
    /// Directory the relative paths in `args` resolve against.
    pub working_dir: String,
    /// Resolved configuration of the command.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub library_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub inputs: Vec<OutputRecord>,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// `<out>.manifest.json` next to the primary output.
    pub fn path_for(output: &Path) -> PathBuf {
        let mut s = output.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }
}

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");
