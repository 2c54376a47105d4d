use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::alignment::AlignParams;
use crate::model::MatchParams;
use crate::pipeline::PipelineError;
use crate::synthbench::SyntheticSpec;

/// Input files of a run on recorded data. Relative paths are taken from the
/// directory of the config file.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub trajectories: PathBuf,
    pub features: PathBuf,
    pub landmarks: PathBuf,
    /// Precomputed matches for `align`; defaults to the output of `match`.
    pub matches: Option<PathBuf>,
    /// Reference trajectories and correspondences enabling pose metrics.
    pub ground_truth: Option<PathBuf>,
    pub correspondences: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    pub dir: PathBuf,
    /// Write `overlay.geojson` after alignment.
    pub overlay: bool,
    /// Write the human-readable `report.txt` next to `metrics.json`.
    pub text_report: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            overlay: true,
            text_report: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds the synthetic generators and the RANSAC streams when set.
    pub seed: Option<u64>,
    pub input: Option<InputPaths>,
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub matching: MatchParams,
    #[serde(default)]
    pub alignment: AlignParams,
    #[serde(default)]
    pub output: OutputOptions,
}

impl PipelineConfig {
    /// Parses a TOML config; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(input) = &mut cfg.input {
            resolve(&mut input.trajectories);
            resolve(&mut input.features);
            resolve(&mut input.landmarks);
            for p in [&mut input.matches, &mut input.ground_truth, &mut input.correspondences]
                .into_iter()
                .flatten()
            {
                resolve(p);
            }
        }
        resolve(&mut cfg.output.dir);
        cfg.validate()?;
        if let Some(seed) = cfg.seed {
            cfg.apply_seed(seed);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, base)
    }

    /// Overrides every seed with `seed`.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        if let Some(s) = self.synthetic.take() {
            self.synthetic = Some(s.with_seed(seed));
        }
        self.matching.rng_seed = seed;
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |m: String| Err(PipelineError::Config(m));
        match (&self.input, &self.synthetic) {
            (Some(_), Some(_)) => return cfg("[input] and [synthetic] are mutually exclusive".into()),
            (None, None) => return cfg("one of [input] or [synthetic] is required".into()),
            _ => {}
        }
        if let Some(input) = &self.input {
            let required = [&input.trajectories, &input.features, &input.landmarks];
            let optional = [&input.matches, &input.ground_truth, &input.correspondences];
            for p in required.into_iter().chain(optional.into_iter().flatten()) {
                if !p.is_file() {
                    return cfg(format!("input file {} is not readable", p.display()));
                }
            }
            if input.ground_truth.is_some() != input.correspondences.is_some() {
                return cfg("ground_truth and correspondences must be given together".into());
            }
        }
        if let Some(s) = &self.synthetic {
            s.validate().map_err(|m| PipelineError::Config(format!("synthetic: {m}")))?;
        }
        self.matching
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.alignment
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }
}
