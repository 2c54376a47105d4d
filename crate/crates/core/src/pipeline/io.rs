//! Newline-delimited JSON records for poses, features, landmarks and matches.
//!
//! Every line is one object carrying the schema version `"v": 1`. Blank lines
//! are skipped. Poses of all sessions share one file; each session's poses
//! must appear in increasing index order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::geometry::UnitQuaternion;
use crate::model::{Anchor, Feature, FeatureId, Landmark, LandmarkId, Match, Pose, Trajectory};
use crate::pipeline::PipelineError;
use crate::{MarkingClass, Point2, Se3, SegmentChain, Shape};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub v: u32,
    pub session: String,
    pub index: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub v: u32,
    pub id: u64,
    pub session: String,
    pub pose: u64,
    pub class: MarkingClass,
    /// One point for poles, the chain vertices otherwise.
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkRecord {
    pub v: u32,
    pub id: u64,
    pub class: MarkingClass,
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRecord {
    pub v: u32,
    pub feature: u64,
    pub landmark: u64,
    pub distance: f64,
}

/// Ground-truth association of a synthetic feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrespondenceRecord {
    pub v: u32,
    pub feature: u64,
    pub landmark: u64,
}

trait Versioned {
    fn version(&self) -> u32;
}

macro_rules! versioned {
    ($($t:ty),*) => {
        $(impl Versioned for $t {
            fn version(&self) -> u32 {
                self.v
            }
        })*
    };
}
versioned!(PoseRecord, FeatureRecord, LandmarkRecord, MatchRecord, CorrespondenceRecord);

fn io_error(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> PipelineError {
    PipelineError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Records of a file with their 1-based line numbers.
fn read_records<R: DeserializeOwned + Versioned>(path: &Path) -> Result<Vec<(usize, R)>, PipelineError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: R = serde_json::from_str(&line).map_err(|e| parse_error(path, k + 1, e.to_string()))?;
        if rec.version() != SCHEMA_VERSION {
            return Err(parse_error(
                path,
                k + 1,
                format!("unsupported schema version {}", rec.version()),
            ));
        }
        out.push((k + 1, rec));
    }
    Ok(out)
}

fn write_records<R: Serialize>(path: &Path, records: impl IntoIterator<Item = R>) -> Result<(), PipelineError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, &r).map_err(|e| io_error(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

fn points(shape: &Shape) -> Vec<[f64; 2]> {
    match shape {
        Shape::Pole(p) => vec![[p.x, p.y]],
        Shape::Segment(c) => c.vertices().iter().map(|p| [p.x, p.y]).collect(),
    }
}

fn shape(class: MarkingClass, pts: &[[f64; 2]]) -> Result<Shape, String> {
    if pts.iter().flatten().any(|v| !v.is_finite()) {
        return Err("coordinates must be finite".into());
    }
    let vs: Vec<Point2> = pts.iter().map(|p| Point2::new(p[0], p[1])).collect();
    if class == MarkingClass::Pole {
        match vs.as_slice() {
            [p] => Ok(Shape::Pole(*p)),
            _ => Err(format!("a pole has exactly one point, got {}", vs.len())),
        }
    } else {
        SegmentChain::new(vs, class)
            .map(Shape::Segment)
            .map_err(|e| e.to_string())
    }
}

/// Reads poses and groups them into trajectories in order of first appearance.
pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>, PipelineError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Pose>> = HashMap::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    for (line, r) in read_records::<PoseRecord>(path)? {
        let rotation = UnitQuaternion::from_wxyz(r.qw, r.qx, r.qy, r.qz)
            .ok_or_else(|| parse_error(path, line, "quaternion must be finite and nonzero"))?;
        let pose = Pose {
            session_id: r.session.clone(),
            index: r.index,
            timestamp: r.t,
            transform: Se3::new(rotation, [r.x, r.y, r.z]),
        };
        if !groups.contains_key(&r.session) {
            order.push(r.session.clone());
            first_line.insert(r.session.clone(), line);
        }
        groups.entry(r.session).or_default().push(pose);
    }
    order
        .into_iter()
        .map(|s| {
            let poses = groups.remove(&s).unwrap_or_default();
            Trajectory::new(s.clone(), poses).map_err(|e| PipelineError::Validation {
                path: Some(path.to_path_buf()),
                line: first_line.get(&s).copied(),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_trajectories(path: &Path, trajs: &[Trajectory]) -> Result<(), PipelineError> {
    let records = trajs.iter().flat_map(|t| t.poses()).map(|p| {
        let [qw, qx, qy, qz] = p.transform.rotation.wxyz();
        let [x, y, z] = p.transform.translation;
        PoseRecord {
            v: SCHEMA_VERSION,
            session: p.session_id.clone(),
            index: p.index,
            t: p.timestamp,
            x,
            y,
            z,
            qw,
            qx,
            qy,
            qz,
        }
    });
    write_records(path, records)
}

/// Features with the line each came from.
pub fn read_features(path: &Path) -> Result<Vec<(usize, Feature)>, PipelineError> {
    read_records::<FeatureRecord>(path)?
        .into_iter()
        .map(|(line, r)| {
            let local = shape(r.class, &r.points).map_err(|m| parse_error(path, line, format!("feature {}: {m}", r.id)))?;
            Ok((
                line,
                Feature {
                    id: FeatureId(r.id),
                    anchor: Anchor {
                        session_id: r.session,
                        pose_index: r.pose,
                    },
                    local,
                },
            ))
        })
        .collect()
}

pub fn write_features(path: &Path, features: &[Feature]) -> Result<(), PipelineError> {
    write_records(
        path,
        features.iter().map(|f| FeatureRecord {
            v: SCHEMA_VERSION,
            id: f.id.0,
            session: f.anchor.session_id.clone(),
            pose: f.anchor.pose_index,
            class: f.class(),
            points: points(&f.local),
        }),
    )
}

pub fn read_landmarks(path: &Path) -> Result<Vec<(usize, Landmark)>, PipelineError> {
    read_records::<LandmarkRecord>(path)?
        .into_iter()
        .map(|(line, r)| {
            let shape = shape(r.class, &r.points).map_err(|m| parse_error(path, line, format!("landmark {}: {m}", r.id)))?;
            Ok((
                line,
                Landmark {
                    id: LandmarkId(r.id),
                    shape,
                },
            ))
        })
        .collect()
}

pub fn write_landmarks(path: &Path, landmarks: &[Landmark]) -> Result<(), PipelineError> {
    write_records(
        path,
        landmarks.iter().map(|l| LandmarkRecord {
            v: SCHEMA_VERSION,
            id: l.id.0,
            class: l.class(),
            points: points(&l.shape),
        }),
    )
}

pub fn read_matches(path: &Path) -> Result<Vec<(usize, Match)>, PipelineError> {
    Ok(read_records::<MatchRecord>(path)?
        .into_iter()
        .map(|(line, r)| {
            (
                line,
                Match {
                    feature: FeatureId(r.feature),
                    landmark: LandmarkId(r.landmark),
                    distance: r.distance,
                },
            )
        })
        .collect())
}

pub fn write_matches(path: &Path, matches: &[Match]) -> Result<(), PipelineError> {
    write_records(
        path,
        matches.iter().map(|m| MatchRecord {
            v: SCHEMA_VERSION,
            feature: m.feature.0,
            landmark: m.landmark.0,
            distance: m.distance,
        }),
    )
}

pub fn read_correspondences(path: &Path) -> Result<Vec<(FeatureId, LandmarkId)>, PipelineError> {
    Ok(read_records::<CorrespondenceRecord>(path)?
        .into_iter()
        .map(|(_, r)| (FeatureId(r.feature), LandmarkId(r.landmark)))
        .collect())
}

pub fn write_correspondences(path: &Path, pairs: &[(FeatureId, LandmarkId)]) -> Result<(), PipelineError> {
    write_records(
        path,
        pairs.iter().map(|&(f, l)| CorrespondenceRecord {
            v: SCHEMA_VERSION,
            feature: f.0,
            landmark: l.0,
        }),
    )
}

/// Writes any serializable value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| io_error(path, e.into()))?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| io_error(path, e))
}

pub fn write_lines<T: Serialize>(path: &Path, values: impl IntoIterator<Item = T>) -> Result<(), PipelineError> {
    write_records(path, values)
}
