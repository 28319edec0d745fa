//! Experiment configuration: one TOML file per run.

use std::path::{Path, PathBuf};

use premonn::curves::CurveConfig;
use premonn::engine::EngineConfig;
use premonn::geom3d::MeshConfig;
use premonn::pose::PoseExperimentConfig;
use premonn::predictors::TrainConfig;
use premonn::repr::SegmentationConfig;
use premonn::scan2d::{ScanDomain, ScanOrder};
use premonn::synth::PoseCorpusConfig;
use serde::{Deserialize, Serialize};

use crate::fail::{CliError, CliResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Series,
    Curve,
    Texture,
    Surface,
    Pose,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Series => "series",
            Task::Curve => "curve",
            Task::Texture => "texture",
            Task::Surface => "surface",
            Task::Pose => "pose",
        }
    }
}

/// Training files of one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassData {
    pub name: String,
    pub train: Vec<PathBuf>,
}

/// An item to classify; `label` names its true class when known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestItem {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub sigma: f64,
    pub credit_floor: f64,
}

impl Default for EngineSection {
    fn default() -> Self {
        Self { sigma: EngineConfig::DEFAULT_SIGMA, credit_floor: EngineConfig::DEFAULT_FLOOR }
    }
}

impl EngineSection {
    pub fn engine(&self, n_sources: usize) -> EngineConfig {
        EngineConfig::new(n_sources).with_sigma(self.sigma).with_floor(self.credit_floor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesSection {
    pub order: usize,
    /// Zero selects linear predictors.
    pub hidden_units: usize,
}

impl Default for SeriesSection {
    fn default() -> Self {
        Self { order: 3, hidden_units: 12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    /// Canonical causal stencil `M x L`, unless `domain_file` is given.
    pub m: usize,
    pub l: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain_file: Option<PathBuf>,
    pub order: ScanOrder,
    pub hidden_units: usize,
    /// Train on every `stride`-th anchor.
    pub stride: usize,
    /// Scan length; zero scans every anchor.
    pub steps: usize,
    /// First anchor `[column, row]`; defaults to the first in scan order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<[i64; 2]>,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            m: 2,
            l: 2,
            domain_file: None,
            order: ScanOrder::Boustrophedon,
            hidden_units: 0,
            stride: 1,
            steps: 0,
            start: None,
        }
    }
}

impl ScanSection {
    pub fn domain(&self) -> CliResult<ScanDomain> {
        Ok(match &self.domain_file {
            Some(p) => ScanDomain::read(p)?,
            None => ScanDomain::canonical(self.m, self.l)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceSection {
    pub delta_s: f64,
    pub extent: [usize; 2],
    /// Zero picks a radius from the cloud's point spacing.
    pub fit_radius: f64,
    /// Mesh seed; defaults to the cloud point nearest the centroid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_point: Option<[f64; 3]>,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        Self { delta_s: 0.5, extent: [6, 6], fit_radius: 0.0, seed_point: None }
    }
}

impl SurfaceSection {
    pub fn mesh(&self, default_radius: f64) -> MeshConfig {
        MeshConfig {
            delta_s: self.delta_s,
            extent: (self.extent[0], self.extent[1]),
            fit_radius: if self.fit_radius > 0.0 { self.fit_radius } else { default_radius },
            max_seed_distance: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseSection {
    /// `object/pose/image` tree; the synthetic corpus is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    pub curve: CurveConfig,
    pub segmentation: SegmentationConfig,
    pub label_window: usize,
    pub different_start: bool,
    pub corpus: PoseCorpusConfig,
}

impl Default for PoseSection {
    fn default() -> Self {
        let e = PoseExperimentConfig::default();
        Self {
            data_dir: None,
            curve: e.curve,
            segmentation: e.segmentation,
            label_window: e.label_window,
            different_start: e.different_start,
            corpus: PoseCorpusConfig::default(),
        }
    }
}

impl PoseSection {
    /// The experiment settings with every seed replaced by `seed`.
    pub fn experiment(&self, seed: u64) -> PoseExperimentConfig {
        PoseExperimentConfig {
            curve: self.curve.clone(),
            segmentation: SegmentationConfig { seed, ..self.segmentation.clone() },
            label_window: self.label_window,
            different_start: self.different_start,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Overrides every nested seed.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Foreground threshold for silhouette images.
    pub mask_threshold: f64,
    pub classes: Vec<ClassData>,
    pub test: Vec<TestItem>,
    pub engine: EngineSection,
    pub series: SeriesSection,
    pub curve: CurveConfig,
    pub scan: ScanSection,
    pub surface: SurfaceSection,
    pub train: TrainConfig,
    pub pose: PoseSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Series,
            seed: 0,
            output_dir: PathBuf::from("out"),
            mask_threshold: 0.5,
            classes: Vec::new(),
            test: Vec::new(),
            engine: EngineSection::default(),
            series: SeriesSection::default(),
            curve: CurveConfig::default(),
            scan: ScanSection::default(),
            surface: SurfaceSection::default(),
            train: TrainConfig::default(),
            pose: PoseSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file; relative data paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for c in &mut cfg.classes {
            c.train.iter_mut().for_each(fix);
        }
        for t in &mut cfg.test {
            fix(&mut t.path);
        }
        if let Some(p) = cfg.scan.domain_file.as_mut() {
            fix(p);
        }
        if let Some(p) = cfg.pose.data_dir.as_mut() {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Every referenced input path must exist.
    pub fn check_paths(&self) -> CliResult<()> {
        let paths = self
            .classes
            .iter()
            .flat_map(|c| c.train.iter())
            .chain(self.test.iter().map(|t| &t.path))
            .chain(self.scan.domain_file.iter())
            .chain(self.pose.data_dir.iter());
        for p in paths {
            if !p.exists() {
                return Err(CliError::data(format!("missing file: {}", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let back: ExperimentConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: ExperimentConfig = toml::from_str("task = \"texture\"\n[scan]\nm = 3\n").unwrap();
        assert_eq!(cfg.task, Task::Texture);
        assert_eq!(cfg.scan.m, 3);
        assert_eq!(cfg.scan.l, 2);
        assert!(toml::from_str::<ExperimentConfig>("bogus = 1\n").is_err());
    }
}
