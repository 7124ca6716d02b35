//! File formats: token fields, input schedules, trajectories.
//!
//! Field files are JSON:
//!
//! ```json
//! {"dimension": 2, "bandwidth": 1.0, "epsilon": 0.1,
//!  "tokens": [{"id": 0, "mean": [0.0, 0.0], "covariance": [0.01, 0.01], "weight": 1.0}]}
//! ```
//!
//! `covariance` is optional (zero matrix) and may be a diagonal list, a flat
//! row-major `D*D` list or a list of rows; `weight` defaults to 1.0.
//! Floats are written in shortest round-trip form, so parsing a written file
//! reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::geodesic::{Activation, GeodesicState, Trajectory};
use crate::manifold::{TokenEmbedding, TokenField};
use crate::mind::InputSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovarianceSpec {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub id: u64,
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldFile {
    pub dimension: usize,
    pub bandwidth: f64,
    pub epsilon: f64,
    pub tokens: Vec<TokenRecord>,
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str, source_name: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let line = e.line();
        let context = text
            .lines()
            .nth(line.saturating_sub(1))
            .map(|l| l.trim())
            .unwrap_or("");
        GeoError::Parse {
            source_name: source_name.to_string(),
            line,
            column: e.column(),
            message: format!("{e} (near `{context}`)"),
        }
    })
}

fn covariance_matrix(id: u64, dim: usize, spec: &Option<CovarianceSpec>) -> Result<DMatrix<f64>> {
    let bad = |reason: String| GeoError::Validation { id, reason };
    match spec {
        None => Ok(DMatrix::zeros(dim, dim)),
        Some(CovarianceSpec::Flat(v)) if v.len() == dim => {
            Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v)))
        }
        Some(CovarianceSpec::Flat(v)) if v.len() == dim * dim => {
            Ok(DMatrix::from_row_slice(dim, dim, v))
        }
        Some(CovarianceSpec::Flat(v)) => Err(bad(format!(
            "covariance list has {} entries, expected {dim} (diagonal) or {} (row-major)",
            v.len(),
            dim * dim
        ))),
        Some(CovarianceSpec::Rows(rows)) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(bad(format!("covariance must be {dim}x{dim}")));
            }
            Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
        }
    }
}

impl FieldFile {
    pub fn into_field(self) -> Result<TokenField> {
        let dim = self.dimension;
        let tokens = self
            .tokens
            .iter()
            .map(|r| {
                if r.mean.len() != dim {
                    return Err(GeoError::Validation {
                        id: r.id,
                        reason: format!("mean has dimension {}, field dimension is {dim}", r.mean.len()),
                    });
                }
                Ok(TokenEmbedding {
                    id: r.id,
                    mean: r.mean.clone(),
                    covariance: covariance_matrix(r.id, dim, &r.covariance)?,
                    weight: r.weight.unwrap_or(1.0),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        TokenField::new(dim, self.bandwidth, self.epsilon, tokens)
    }

    pub fn from_field(field: &TokenField) -> Self {
        let tokens = field
            .tokens()
            .iter()
            .map(|t| {
                let d = t.dimension();
                let covariance = if t.covariance.iter().all(|v| *v == 0.0) {
                    None
                } else if t.has_diagonal_covariance() {
                    Some(CovarianceSpec::Flat(t.covariance.diagonal().iter().copied().collect()))
                } else {
                    Some(CovarianceSpec::Rows(
                        (0..d).map(|i| (0..d).map(|j| t.covariance[(i, j)]).collect()).collect(),
                    ))
                };
                TokenRecord {
                    id: t.id,
                    mean: t.mean.clone(),
                    covariance,
                    weight: Some(t.weight),
                }
            })
            .collect();
        FieldFile {
            dimension: field.dimension(),
            bandwidth: field.bandwidth(),
            epsilon: field.epsilon(),
            tokens,
        }
    }
}

pub fn parse_field(text: &str, source_name: &str) -> Result<TokenField> {
    parse_json::<FieldFile>(text, source_name)?.into_field()
}

pub fn load_field(path: impl AsRef<Path>) -> Result<TokenField> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_field(&text, &path.display().to_string())
}

pub fn field_to_json(field: &TokenField) -> String {
    serde_json::to_string_pretty(&FieldFile::from_field(field)).expect("field serializes")
}

pub fn save_field(field: &TokenField, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, field_to_json(field) + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScheduleEntry {
    step: usize,
    vector: Vec<f64>,
}

/// Input schedule: a JSON list of `{"step": n, "vector": [...]}`.
pub fn parse_schedule(text: &str, source_name: &str, dimension: usize) -> Result<InputSchedule> {
    let entries: Vec<ScheduleEntry> = parse_json(text, source_name)?;
    let mut schedule = InputSchedule::default();
    for e in entries {
        if e.vector.len() != dimension {
            return Err(GeoError::Config(format!(
                "{source_name}: input at step {} has dimension {}, expected {dimension}",
                e.step,
                e.vector.len()
            )));
        }
        if schedule.0.insert(e.step, e.vector).is_some() {
            return Err(GeoError::Config(format!("{source_name}: duplicate step {}", e.step)));
        }
    }
    Ok(schedule)
}

pub fn load_schedule(path: impl AsRef<Path>, dimension: usize) -> Result<InputSchedule> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_schedule(&text, &path.display().to_string(), dimension)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(GeoError::Config(format!(
                "unknown output format `{other}` (expected json or csv)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SampleRecord {
    t: f64,
    position: Vec<f64>,
    velocity: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    token_id: Option<u64>,
}

fn sample_records(traj: &Trajectory) -> Vec<SampleRecord> {
    traj.samples
        .iter()
        .enumerate()
        .map(|(i, s)| SampleRecord {
            t: s.time,
            position: s.position.clone(),
            velocity: s.velocity.clone(),
            token_id: traj.token_at(i),
        })
        .collect()
}

fn from_records(records: Vec<SampleRecord>) -> Trajectory {
    let dt = match (records.first(), records.last()) {
        (Some(a), Some(b)) if records.len() > 1 => (b.t - a.t) / (records.len() - 1) as f64,
        _ => 0.0,
    };
    let mut traj = Trajectory::new(dt);
    for r in records {
        if let Some(id) = r.token_id {
            traj.activations.push(Activation {
                time: r.t,
                token_id: id,
            });
        }
        traj.samples.push(GeodesicState {
            position: r.position,
            velocity: r.velocity,
            time: r.t,
        });
    }
    traj
}

pub fn trajectory_to_json(traj: &Trajectory) -> String {
    serde_json::to_string_pretty(&sample_records(traj)).expect("trajectory serializes")
}

pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let d = traj.dimension();
    let mut out = String::from("t");
    for i in 0..d {
        let _ = write!(out, ",p{i}");
    }
    for i in 0..d {
        let _ = write!(out, ",v{i}");
    }
    out.push_str(",token_id\n");
    for r in sample_records(traj) {
        let _ = write!(out, "{}", r.t);
        for v in r.position.iter().chain(&r.velocity) {
            let _ = write!(out, ",{v}");
        }
        out.push(',');
        if let Some(id) = r.token_id {
            let _ = write!(out, "{id}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_trajectory_json(text: &str, source_name: &str) -> Result<Trajectory> {
    Ok(from_records(parse_json(text, source_name)?))
}

pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let cols = headers.len();
    if cols < 4 || (cols - 2) % 2 != 0 || &headers[0] != "t" || &headers[cols - 1] != "token_id" {
        return Err(GeoError::invalid("trajectory csv header must be t,p0..,v0..,token_id"));
    }
    let d = (cols - 2) / 2;
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| GeoError::invalid(format!("bad number `{s}`: {e}")))
    };
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let token = &row[cols - 1];
        records.push(SampleRecord {
            t: num(&row[0])?,
            position: (1..=d).map(|i| num(&row[i])).collect::<Result<_>>()?,
            velocity: (d + 1..=2 * d).map(|i| num(&row[i])).collect::<Result<_>>()?,
            token_id: if token.is_empty() {
                None
            } else {
                Some(token.parse().map_err(|e| GeoError::invalid(format!("bad token id: {e}")))?)
            },
        });
    }
    Ok(from_records(records))
}

pub fn export_trajectory(traj: &Trajectory, format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
    let body = match format {
        OutputFormat::Json => trajectory_to_json(traj) + "\n",
        OutputFormat::Csv => trajectory_to_csv(traj),
    };
    fs::write(path, body)?;
    Ok(())
}

pub fn import_trajectory(path: impl AsRef<Path>, format: OutputFormat) -> Result<Trajectory> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    match format {
        OutputFormat::Json => parse_trajectory_json(&text, &path.display().to_string()),
        OutputFormat::Csv => parse_trajectory_csv(&text),
    }
}
