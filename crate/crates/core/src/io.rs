//! CSV file formats shared by the CLI and the synthetic generator.
//!
//! All files are UTF-8 CSV with a header row. Lines starting with `#` are
//! comments; writers emit one provenance comment before the header.
//!
//! | file        | columns                                                        |
//! |-------------|----------------------------------------------------------------|
//! | model       | `label,x,y,z`                                                  |
//! | landmarks   | `image_id,label,u,v` (one row per landmark)                    |
//! | poses/truth | `image_id,pitch,yaw,roll` (degrees)                            |
//! | predictions | `image_id,pitch,yaw,roll,iterations,final_objective,converged` |

use std::collections::HashSet;
use std::fmt::Write as _;

use csv::{ReaderBuilder, StringRecord, Trim};
use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::EulerAngles;
use crate::landmarks::{FeaturePointSet2D, FeaturePointSet3D};
use crate::synthetic::{AngleStats, TimingStats};

pub const MODEL_HEADER: [&str; 4] = ["label", "x", "y", "z"];
pub const LANDMARKS_HEADER: [&str; 4] = ["image_id", "label", "u", "v"];
pub const POSES_HEADER: [&str; 4] = ["image_id", "pitch", "yaw", "roll"];
pub const PREDICTIONS_HEADER: [&str; 7] = [
    "image_id",
    "pitch",
    "yaw",
    "roll",
    "iterations",
    "final_objective",
    "converged",
];

/// Comment lines (with the leading `#`) preceding the first data line.
pub fn leading_comments(text: &str) -> Vec<String> {
    text.lines()
        .take_while(|l| l.trim_start().starts_with('#') || l.trim().is_empty())
        .filter(|l| l.trim_start().starts_with('#'))
        .map(|l| l.trim_end().to_string())
        .collect()
}

struct Table {
    rows: Vec<(u64, StringRecord)>,
    optional: Vec<Option<usize>>,
}

fn parse_table(text: &str, required: &[&str], optional: &[&str]) -> Result<Table> {
    let mut reader = ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_error(e, 1))?.clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(Error::Parse {
            line: 1,
            message: "no records".into(),
        });
    }
    let header_line = reader.position().line().saturating_sub(1).max(1);
    let names: Vec<&str> = header.iter().collect();
    if names.len() < required.len() || names[..required.len()] != *required {
        return Err(Error::Parse {
            line: header_line,
            message: format!(
                "expected header '{}', got '{}'",
                required.join(","),
                names.join(",")
            ),
        });
    }
    let optional = optional
        .iter()
        .map(|o| names.iter().position(|n| n == o))
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_error(e, header_line))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: header_line,
            message: "no records".into(),
        });
    }
    Ok(Table { rows, optional })
}

fn parse_error(e: csv::Error, fallback: u64) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn field<'a>(rec: &'a StringRecord, i: usize, line: u64, name: &str) -> Result<&'a str> {
    let v = rec.get(i).unwrap_or("");
    if v.is_empty() {
        return Err(Error::Parse {
            line,
            message: format!("empty {name}"),
        });
    }
    Ok(v)
}

fn number(rec: &StringRecord, i: usize, line: u64, name: &str) -> Result<f64> {
    let raw = field(rec, i, line, name)?;
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            message: format!("invalid {name} '{raw}'"),
        }),
    }
}

pub fn parse_model(text: &str) -> Result<FeaturePointSet3D> {
    let table = parse_table(text, &MODEL_HEADER, &[])?;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in &table.rows {
        let label = field(rec, 0, *line, "label")?;
        if !seen.insert(label.to_string()) {
            return Err(Error::Parse {
                line: *line,
                message: format!("duplicate label '{label}'"),
            });
        }
        let p = Vector3::new(
            number(rec, 1, *line, "x")?,
            number(rec, 2, *line, "y")?,
            number(rec, 3, *line, "z")?,
        );
        entries.push((label.to_string(), p));
    }
    FeaturePointSet3D::new(entries)
}

/// Landmarks of one image, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageLandmarks {
    pub image_id: String,
    pub points: Vec<(String, Vector2<f64>)>,
}

impl ImageLandmarks {
    pub fn to_set(&self) -> Result<FeaturePointSet2D> {
        FeaturePointSet2D::new(self.points.iter().cloned())
    }
}

/// Groups landmark rows by image, keeping first-appearance order.
pub fn parse_landmarks(text: &str) -> Result<Vec<ImageLandmarks>> {
    let table = parse_table(text, &LANDMARKS_HEADER, &[])?;
    let mut images: Vec<ImageLandmarks> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (line, rec) in &table.rows {
        let id = field(rec, 0, *line, "image_id")?;
        let label = field(rec, 1, *line, "label")?;
        let p = Vector2::new(number(rec, 2, *line, "u")?, number(rec, 3, *line, "v")?);
        let k = *index.entry(id.to_string()).or_insert_with(|| {
            images.push(ImageLandmarks {
                image_id: id.to_string(),
                points: Vec::new(),
            });
            images.len() - 1
        });
        let img = &mut images[k];
        if img.points.iter().any(|(l, _)| l == label) {
            return Err(Error::Parse {
                line: *line,
                message: format!("duplicate label '{label}' for image '{id}'"),
            });
        }
        img.points.push((label.to_string(), p));
    }
    Ok(images)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    pub image_id: String,
    /// `[pitch, yaw, roll]` in degrees, as written in the file.
    pub degrees: [f64; 3],
}

impl PoseRecord {
    pub fn angles(&self) -> EulerAngles {
        let [p, y, r] = self.degrees;
        EulerAngles::from_degrees(p, y, r)
    }
}

pub fn parse_poses(text: &str) -> Result<Vec<PoseRecord>> {
    let table = parse_table(text, &POSES_HEADER, &[])?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let id = field(rec, 0, *line, "image_id")?;
        if !seen.insert(id.to_string()) {
            return Err(Error::Parse {
                line: *line,
                message: format!("duplicate image_id '{id}'"),
            });
        }
        let degrees = [
            number(rec, 1, *line, "pitch")?,
            number(rec, 2, *line, "yaw")?,
            number(rec, 3, *line, "roll")?,
        ];
        out.push(PoseRecord {
            image_id: id.to_string(),
            degrees,
        });
    }
    Ok(out)
}

/// One predictions row. A failed image has no angles or objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub image_id: String,
    /// `[pitch, yaw, roll]` in degrees.
    pub angles: Option<[f64; 3]>,
    pub iterations: usize,
    pub objective: Option<f64>,
    pub converged: bool,
    /// Optional trailing `wall_ms` column.
    pub wall_ms: Option<f64>,
    /// Failure reason, written as a `# failed` comment before the row and
    /// not recovered by the parser.
    pub error: Option<String>,
}

pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>> {
    let table = parse_table(text, &PREDICTIONS_HEADER, &["wall_ms"])?;
    let wall_col = table.optional[0];
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let line = *line;
        let id = field(rec, 0, line, "image_id")?;
        if !seen.insert(id.to_string()) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate image_id '{id}'"),
            });
        }
        let failed = (1..4).all(|i| rec.get(i).unwrap_or("").is_empty());
        let angles = if failed {
            None
        } else {
            Some([
                number(rec, 1, line, "pitch")?,
                number(rec, 2, line, "yaw")?,
                number(rec, 3, line, "roll")?,
            ])
        };
        let iterations = field(rec, 4, line, "iterations")?
            .parse()
            .map_err(|_| Error::Parse {
                line,
                message: "invalid iterations".into(),
            })?;
        let objective = match rec.get(5).unwrap_or("") {
            "" => None,
            _ => Some(number(rec, 5, line, "final_objective")?),
        };
        let converged = match field(rec, 6, line, "converged")? {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("invalid converged flag '{other}'"),
                })
            }
        };
        let wall_ms = match wall_col {
            Some(c) if !rec.get(c).unwrap_or("").is_empty() => {
                Some(number(rec, c, line, "wall_ms")?)
            }
            _ => None,
        };
        out.push(Prediction {
            image_id: id.to_string(),
            angles,
            iterations,
            objective,
            converged,
            wall_ms,
            error: None,
        });
    }
    Ok(out)
}

/// Fixed six-decimal angle formatting without a negative zero.
pub fn format_angle(deg: f64) -> String {
    let s = format!("{deg:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn push_provenance(out: &mut String, provenance: &str) {
    if !provenance.is_empty() {
        let _ = writeln!(out, "# {}", provenance.trim_start_matches('#').trim());
    }
}

pub fn format_model(provenance: &str, model: &FeaturePointSet3D) -> String {
    let mut out = String::new();
    push_provenance(&mut out, provenance);
    out.push_str(&MODEL_HEADER.join(","));
    out.push('\n');
    for (label, p) in model.iter() {
        let _ = writeln!(out, "{label},{},{},{}", p.x, p.y, p.z);
    }
    out
}

pub fn format_landmarks(provenance: &str, images: &[(String, FeaturePointSet2D)]) -> String {
    let mut out = String::new();
    push_provenance(&mut out, provenance);
    out.push_str(&LANDMARKS_HEADER.join(","));
    out.push('\n');
    for (id, set) in images {
        for (label, p) in set.iter() {
            let _ = writeln!(out, "{id},{label},{},{}", p.x, p.y);
        }
    }
    out
}

pub fn format_poses(provenance: &str, poses: &[PoseRecord]) -> String {
    let mut out = String::new();
    push_provenance(&mut out, provenance);
    out.push_str(&POSES_HEADER.join(","));
    out.push('\n');
    for p in poses {
        let [a, b, c] = p.degrees;
        let _ = writeln!(out, "{},{a},{b},{c}", p.image_id);
    }
    out
}

/// Writes predictions; failed rows keep `image_id`, `iterations` and
/// `converged` and leave the numeric fields empty. A `wall_ms` column is
/// added when any row carries a timing.
pub fn format_predictions(provenance: &str, rows: &[Prediction]) -> String {
    let timed = rows.iter().any(|r| r.wall_ms.is_some());
    let mut out = String::new();
    push_provenance(&mut out, provenance);
    out.push_str(&PREDICTIONS_HEADER.join(","));
    out.push_str(if timed { ",wall_ms\n" } else { "\n" });
    for p in rows {
        if let Some(msg) = &p.error {
            let _ = writeln!(out, "# failed {}: {}", p.image_id, msg.replace('\n', " "));
        }
        let _ = match p.angles {
            Some([a, b, c]) => write!(
                out,
                "{},{},{},{},{},{},{}",
                p.image_id,
                format_angle(a),
                format_angle(b),
                format_angle(c),
                p.iterations,
                p.objective.map(|o| format!("{o:.9e}")).unwrap_or_default(),
                p.converged
            ),
            None => write!(out, "{},,,,{},,{}", p.image_id, p.iterations, p.converged),
        };
        if timed {
            let _ = write!(
                out,
                ",{}",
                p.wall_ms.map(|w| format!("{w:.3}")).unwrap_or_default()
            );
        }
        out.push('\n');
    }
    out
}

/// Aggregates written by the `eval` command.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub pitch: AngleStats,
    pub yaw: AngleStats,
    pub roll: AngleStats,
    pub instances: usize,
    pub failures: usize,
    pub timing: Option<TimingStats>,
}

/// Two-decimal evaluation report; `provenance` lines are copied verbatim.
pub fn format_eval_report(provenance: &[String], summary: &EvalSummary) -> String {
    let mut out = String::from("# headpose eval\n");
    for line in provenance {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("angle,mae,std\n");
    for (name, s) in [
        ("pitch", summary.pitch),
        ("yaw", summary.yaw),
        ("roll", summary.roll),
    ] {
        let _ = writeln!(out, "{name},{:.2},{:.2}", s.mae, s.std);
    }
    let _ = writeln!(out, "instances,{}", summary.instances);
    let _ = writeln!(out, "failures,{}", summary.failures);
    if let Some(t) = summary.timing {
        let _ = writeln!(out, "wall_ms_median,{:.3}", t.median_ms);
        let _ = writeln!(out, "wall_ms_mean,{:.3}", t.mean_ms);
        let _ = writeln!(out, "wall_ms_max,{:.3}", t.max_ms);
    }
    out
}
