//! Configuration, file formats and the stage sequence behind the CLI.
//!
//! Stages exchange data only through files in the output directory:
//!
//! | stage      | reads                                    | writes |
//! |------------|------------------------------------------|--------|
//! | `generate` | `[synthetic]`                            | `trajectories`, `features`, `landmarks`, `ground_truth`, `correspondences` (`.ndjson`) |
//! | `match`    | inputs                                   | `matches.ndjson`, `windows.ndjson` |
//! | `align`    | inputs, matches                          | `aligned.ndjson`, `align_report.json`, `overlay.geojson` |
//! | `evaluate` | inputs, matches, aligned, ground truth   | `metrics.json`, `report.txt` |
//!
//! With `[input]` the inputs are the configured files; in synthetic mode they
//! are the files written by `generate`. `run` chains the stages in order.

mod config;
pub mod io;
mod overlay;
mod report;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

pub use config::{InputPaths, OutputOptions, PipelineConfig};
pub use overlay::{export_overlay, overlay_geojson};
pub use report::{match_table, MatchTableRow, MetricsReport};

use crate::alignment::{align, AlignError};
use crate::matching::{match_all, MatchError, WindowStatus};
use crate::model::{Dataset, Feature, FeatureId, Landmark, LandmarkId, Match, ModelError, Trajectory};
use crate::solver::SolverError;
use crate::synthbench::{build, evaluate_alignment};

pub const TRAJECTORIES: &str = "trajectories.ndjson";
pub const FEATURES: &str = "features.ndjson";
pub const LANDMARKS: &str = "landmarks.ndjson";
pub const GROUND_TRUTH: &str = "ground_truth.ndjson";
pub const CORRESPONDENCES: &str = "correspondences.ndjson";
pub const MATCHES: &str = "matches.ndjson";
pub const WINDOWS: &str = "windows.ndjson";
pub const ALIGNED: &str = "aligned.ndjson";
pub const ALIGN_REPORT: &str = "align_report.json";
pub const OVERLAY: &str = "overlay.geojson";
pub const METRICS: &str = "metrics.json";
pub const REPORT: &str = "report.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Match,
    Align,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Generate => "generate",
            Stage::Match => "match",
            Stage::Align => "align",
            Stage::Evaluate => "evaluate",
        })
    }
}

fn location(path: &Option<PathBuf>, line: &Option<usize>) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!("{}:{l}: ", p.display()),
        (Some(p), None) => format!("{}: ", p.display()),
        _ => String::new(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}{message}", location(path, line))]
    Validation {
        path: Option<PathBuf>,
        line: Option<usize>,
        message: String,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// Process exit status: 1 io, 2 config, 3 parse or validation, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io { .. } => 1,
            PipelineError::Config(_) => 2,
            PipelineError::Parse { .. } | PipelineError::Validation { .. } => 3,
            PipelineError::Numerical(_) => 4,
            PipelineError::Stage { source, .. } => source.exit_code(),
        }
    }

    fn in_stage(self, stage: Stage) -> Self {
        match self {
            PipelineError::Stage { .. } => self,
            e => PipelineError::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    fn validation(message: impl Into<String>) -> Self {
        PipelineError::Validation {
            path: None,
            line: None,
            message: message.into(),
        }
    }
}

impl From<SolverError> for PipelineError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidOptions(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Numerical(e.to_string()),
        }
    }
}

impl From<MatchError> for PipelineError {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::Params(p) => PipelineError::Config(p.to_string()),
            MatchError::Solver(s) => s.into(),
            e => PipelineError::validation(e.to_string()),
        }
    }
}

impl From<AlignError> for PipelineError {
    fn from(e: AlignError) -> Self {
        match e {
            AlignError::InvalidParams(_) => PipelineError::Config(e.to_string()),
            AlignError::Solver(s) => s.into(),
            e => PipelineError::validation(e.to_string()),
        }
    }
}

/// Paths of the data files a stage reads.
#[derive(Clone, Debug, PartialEq)]
pub struct DataPaths {
    pub trajectories: PathBuf,
    pub features: PathBuf,
    pub landmarks: PathBuf,
    pub matches: PathBuf,
    pub aligned: PathBuf,
    /// Reference trajectories and correspondences, when available.
    pub ground_truth: Option<(PathBuf, PathBuf)>,
}

impl PipelineConfig {
    pub fn out_dir(&self) -> &Path {
        &self.output.dir
    }

    pub fn data_paths(&self) -> DataPaths {
        let out = self.out_dir();
        match &self.input {
            Some(i) => DataPaths {
                trajectories: i.trajectories.clone(),
                features: i.features.clone(),
                landmarks: i.landmarks.clone(),
                matches: i.matches.clone().unwrap_or_else(|| out.join(MATCHES)),
                aligned: out.join(ALIGNED),
                ground_truth: i.ground_truth.clone().zip(i.correspondences.clone()),
            },
            None => DataPaths {
                trajectories: out.join(TRAJECTORIES),
                features: out.join(FEATURES),
                landmarks: out.join(LANDMARKS),
                matches: out.join(MATCHES),
                aligned: out.join(ALIGNED),
                ground_truth: Some((out.join(GROUND_TRUTH), out.join(CORRESPONDENCES))),
            },
        }
    }
}

fn model_error(e: ModelError, paths: &DataPaths, feature_lines: &HashMap<FeatureId, usize>, landmark_lines: &HashMap<LandmarkId, usize>) -> PipelineError {
    let (path, line) = match &e {
        ModelError::InvalidTrajectory { .. } => (Some(paths.trajectories.clone()), None),
        ModelError::InvalidFeature { id, .. } => (Some(paths.features.clone()), feature_lines.get(id).copied()),
        ModelError::InvalidLandmark { id, .. } => (Some(paths.landmarks.clone()), landmark_lines.get(id).copied()),
        ModelError::InvalidParams(_) => return PipelineError::Config(e.to_string()),
    };
    PipelineError::Validation {
        path,
        line,
        message: e.to_string(),
    }
}

/// Reads and validates trajectories, features and landmarks.
pub fn load_inputs(cfg: &PipelineConfig) -> Result<Dataset, PipelineError> {
    let paths = cfg.data_paths();
    load_dataset(&paths)
}

fn load_dataset(paths: &DataPaths) -> Result<Dataset, PipelineError> {
    let trajectories = io::read_trajectories(&paths.trajectories)?;
    let features = io::read_features(&paths.features)?;
    let landmarks = io::read_landmarks(&paths.landmarks)?;
    let feature_lines: HashMap<FeatureId, usize> = features.iter().map(|(l, f)| (f.id, *l)).collect();
    let landmark_lines: HashMap<LandmarkId, usize> = landmarks.iter().map(|(l, m)| (m.id, *l)).collect();
    let features: Vec<Feature> = features.into_iter().map(|(_, f)| f).collect();
    let landmarks: Vec<Landmark> = landmarks.into_iter().map(|(_, l)| l).collect();
    Dataset::new(trajectories, features, landmarks).map_err(|e| model_error(e, paths, &feature_lines, &landmark_lines))
}

/// Reads matches and checks them against the dataset.
fn load_matches(path: &Path, data: &Dataset) -> Result<Vec<Match>, PipelineError> {
    let mut out = Vec::new();
    for (line, m) in io::read_matches(path)? {
        let fail = |message: String| PipelineError::Validation {
            path: Some(path.to_path_buf()),
            line: Some(line),
            message,
        };
        let f = data
            .feature(m.feature)
            .ok_or_else(|| fail(format!("unknown feature {}", m.feature)))?;
        let l = data
            .landmark(m.landmark)
            .ok_or_else(|| fail(format!("unknown landmark {}", m.landmark)))?;
        if f.class() != l.class() {
            return Err(fail(format!(
                "feature {} ({}) cannot match landmark {} ({})",
                f.id,
                f.class(),
                l.id,
                l.class()
            )));
        }
        out.push(m);
    }
    Ok(out)
}

/// Reads trajectories that must cover exactly the sessions and pose indices of `like`.
fn load_matching_trajectories(path: &Path, like: &[Trajectory]) -> Result<Vec<Trajectory>, PipelineError> {
    let trajs = io::read_trajectories(path)?;
    let same = trajs.len() == like.len()
        && trajs.iter().zip(like).all(|(a, b)| {
            a.session_id() == b.session_id()
                && a.len() == b.len()
                && a.poses().iter().zip(b.poses()).all(|(p, q)| p.index == q.index)
        });
    if !same {
        return Err(PipelineError::Validation {
            path: Some(path.to_path_buf()),
            line: None,
            message: "sessions or pose indices differ from the input trajectories".into(),
        });
    }
    Ok(trajs)
}

fn create_out_dir(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    std::fs::create_dir_all(cfg.out_dir()).map_err(|e| PipelineError::Io {
        path: cfg.out_dir().to_path_buf(),
        source: e,
    })
}

/// Builds the synthetic scenario and writes it as input files.
pub fn generate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let inner = || {
        let spec = cfg
            .synthetic
            .as_ref()
            .ok_or_else(|| PipelineError::Config("generate needs a [synthetic] section".into()))?;
        let data = build(spec).map_err(|e| PipelineError::validation(e.to_string()))?;
        create_out_dir(cfg)?;
        let out = cfg.out_dir();
        let files: Vec<PathBuf> = [TRAJECTORIES, FEATURES, LANDMARKS, GROUND_TRUTH, CORRESPONDENCES]
            .iter()
            .map(|f| out.join(f))
            .collect();
        io::write_trajectories(&files[0], &data.dataset.trajectories)?;
        io::write_features(&files[1], &data.dataset.features)?;
        io::write_landmarks(&files[2], &data.dataset.landmarks)?;
        io::write_trajectories(&files[3], &data.ground_truth)?;
        io::write_correspondences(&files[4], &data.correspondences)?;
        info!(
            "generated {} poses, {} features, {} landmarks",
            data.dataset.trajectories.iter().map(Trajectory::len).sum::<usize>(),
            data.dataset.features.len(),
            data.dataset.landmarks.len()
        );
        Ok(files)
    };
    inner().map_err(|e: PipelineError| e.in_stage(Stage::Generate))
}

#[derive(Serialize)]
struct WindowRecord<'a> {
    v: u32,
    window: usize,
    session: &'a str,
    arc_position: f64,
    center: [f64; 2],
    heading: f64,
    features: usize,
    landmarks: usize,
    status: WindowStatus,
    hypotheses: usize,
    gate_rejections: usize,
    e_f: f64,
    delta: [f64; 3],
    inliers: usize,
}

/// Runs the windowed matching and writes matches and per-window results.
pub fn match_stage(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let inner = || {
        let data = load_inputs(cfg)?;
        let out = match_all(&data, &cfg.matching)?;
        create_out_dir(cfg)?;
        let matches_path = cfg.out_dir().join(MATCHES);
        let windows_path = cfg.out_dir().join(WINDOWS);
        io::write_matches(&matches_path, &out.matches)?;
        let records = out.windows.iter().map(|r| {
            let w = &out.layout.windows[r.window];
            WindowRecord {
                v: io::SCHEMA_VERSION,
                window: r.window,
                session: data.trajectories[w.trajectory].session_id(),
                arc_position: w.arc_position,
                center: [w.center.x, w.center.y],
                heading: w.heading,
                features: w.feature_ids.len(),
                landmarks: w.landmark_ids.len(),
                status: r.status,
                hypotheses: r.hypotheses,
                gate_rejections: r.gate_rejections,
                e_f: r.e_f,
                delta: [r.delta.x, r.delta.y, r.delta.theta],
                inliers: r.inliers.len(),
            }
        });
        io::write_lines(&windows_path, records)?;
        let converged = out.windows.iter().filter(|r| r.status == WindowStatus::Converged).count();
        info!(
            "{} matches from {converged} of {} windows",
            out.matches.len(),
            out.windows.len()
        );
        Ok(vec![matches_path, windows_path])
    };
    inner().map_err(|e: PipelineError| e.in_stage(Stage::Match))
}

/// Aligns all trajectories to the matched landmarks.
pub fn align_stage(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let inner = || {
        let paths = cfg.data_paths();
        let data = load_dataset(&paths)?;
        let matches = load_matches(&paths.matches, &data)?;
        let result = align(&data, &matches, &cfg.alignment)?;
        for w in &result.report.warnings {
            warn!("{w}");
        }
        create_out_dir(cfg)?;
        let out = cfg.out_dir();
        let mut files = vec![out.join(ALIGNED), out.join(ALIGN_REPORT)];
        io::write_trajectories(&files[0], &result.trajectories)?;
        io::write_json(&files[1], &result.report)?;
        if cfg.output.overlay {
            files.push(out.join(OVERLAY));
            export_overlay(&data, &result.trajectories, &matches, &files[2])?;
        }
        info!(
            "alignment cost {:.6} -> {:.6} in {} iterations",
            result.report.initial_feature_cost + result.report.initial_regularizer_cost,
            result.report.final_feature_cost + result.report.final_regularizer_cost,
            result.report.iterations
        );
        Ok(files)
    };
    inner().map_err(|e: PipelineError| e.in_stage(Stage::Align))
}

/// Scores matches and aligned trajectories; pose metrics need ground truth.
pub fn evaluate_stage(cfg: &PipelineConfig) -> Result<MetricsReport, PipelineError> {
    let inner = || {
        let paths = cfg.data_paths();
        let data = load_dataset(&paths)?;
        let matches = load_matches(&paths.matches, &data)?;
        let aligned = load_matching_trajectories(&paths.aligned, &data.trajectories)?;
        let alignment = match &paths.ground_truth {
            Some((gt_path, corr_path)) => {
                let gt = load_matching_trajectories(gt_path, &data.trajectories)?;
                let corr = io::read_correspondences(corr_path)?;
                let m = evaluate_alignment(&aligned, &gt, &data.features, &matches, &corr)
                    .map_err(|e| PipelineError::validation(e.to_string()))?;
                Some(m)
            }
            None => None,
        };
        let report = MetricsReport::new(&data.features, &matches, alignment);
        create_out_dir(cfg)?;
        let out = cfg.out_dir();
        io::write_json(&out.join(METRICS), &report)?;
        if cfg.output.text_report {
            let path = out.join(REPORT);
            std::fs::write(&path, report.to_text()).map_err(|e| PipelineError::Io { path, source: e })?;
        }
        Ok(report)
    };
    inner().map_err(|e: PipelineError| e.in_stage(Stage::Evaluate))
}

/// Runs every stage in order, generating inputs first in synthetic mode.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<MetricsReport, PipelineError> {
    if cfg.synthetic.is_some() {
        generate(cfg)?;
    }
    match_stage(cfg)?;
    align_stage(cfg)?;
    evaluate_stage(cfg)
}
