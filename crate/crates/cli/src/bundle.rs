//! Saved models: a directory with `manifest.toml`, one `.pred` file per class
//! and channel, and `domain.txt` for scanning tasks.

use std::path::Path;

use premonn::curves::CurveConfig;
use premonn::experiments::SeriesBank;
use premonn::predictors::{PredictorGroup, TrainedPredictor};
use premonn::scan2d::{ScanDomain, ScanModel};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SurfaceSection, Task};
use crate::fail::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub task: Task,
    pub seed: u64,
    pub classes: Vec<String>,
    pub channels: usize,
    /// Autoregressive order (series and curve tasks).
    pub order: usize,
    pub mask_threshold: f64,
    pub curve: CurveConfig,
    pub surface: SurfaceSection,
    pub files: Vec<String>,
}

#[derive(Clone, Debug)]
pub enum Models {
    Series(SeriesBank),
    Scan(Vec<ScanModel>),
}

#[derive(Clone, Debug)]
pub struct Bundle {
    pub manifest: Manifest,
    pub models: Models,
}

fn file_for(class: usize, channel: usize) -> String {
    format!("class{class:02}_ch{channel}.pred")
}

impl Bundle {
    pub fn new(cfg: &ExperimentConfig, models: Models) -> Self {
        let (channels, order) = match &models {
            Models::Series(b) => (1, b.order),
            Models::Scan(m) => (m.first().map_or(0, |m| m.group.n_channels()), 0),
        };
        let n = cfg.classes.len();
        Self {
            manifest: Manifest {
                task: cfg.task,
                seed: cfg.seed,
                classes: cfg.classes.iter().map(|c| c.name.clone()).collect(),
                channels,
                order,
                mask_threshold: cfg.mask_threshold,
                curve: cfg.curve.clone(),
                surface: cfg.surface.clone(),
                files: (0..n).flat_map(|c| (0..channels).map(move |p| file_for(c, p))).collect(),
            },
            models,
        }
    }

    pub fn domain(&self) -> Option<&ScanDomain> {
        match &self.models {
            Models::Scan(m) => m.first().map(|m| &m.domain),
            Models::Series(_) => None,
        }
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
        let write = |name: &str, text: &str| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| CliError::data(format!("{}: {e}", p.display())))
        };
        write("manifest.toml", &toml::to_string(&self.manifest).expect("manifest serialises"))?;
        match &self.models {
            Models::Series(b) => {
                for (c, p) in b.predictors.iter().enumerate() {
                    write(&file_for(c, 0), &p.to_text())?;
                }
            }
            Models::Scan(models) => {
                for (c, m) in models.iter().enumerate() {
                    for (p, pred) in m.group.channels.iter().enumerate() {
                        write(&file_for(c, p), &pred.to_text())?;
                    }
                }
                if let Some(d) = self.domain() {
                    write("domain.txt", &d.to_text())?;
                }
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))
        };
        let manifest: Manifest = toml::from_str(&read("manifest.toml")?)
            .map_err(|e| CliError::data(format!("{}: {e}", dir.join("manifest.toml").display())))?;
        let pred = |c: usize, p: usize| -> CliResult<TrainedPredictor> {
            Ok(TrainedPredictor::from_text(&read(&file_for(c, p))?)?)
        };
        let n = manifest.classes.len();
        let models = match manifest.task {
            Task::Series | Task::Curve => Models::Series(SeriesBank {
                order: manifest.order,
                predictors: (0..n).map(|c| pred(c, 0)).collect::<CliResult<_>>()?,
            }),
            Task::Texture | Task::Surface => {
                let domain = ScanDomain::from_text(&read("domain.txt")?)?;
                let models = (0..n)
                    .map(|c| {
                        let channels = (0..manifest.channels).map(|p| pred(c, p)).collect::<CliResult<Vec<_>>>()?;
                        Ok(ScanModel { domain: domain.clone(), group: PredictorGroup::new(channels)? })
                    })
                    .collect::<CliResult<_>>()?;
                Models::Scan(models)
            }
            Task::Pose => return Err(CliError::usage("pose experiments do not use model bundles")),
        };
        Ok(Self { manifest, models })
    }
}
