//! Glue shared by the command-line tool and the end-to-end checks: banks of
//! per-class predictors for each data kind and the online runs over them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_stream, EngineConfig, StepRecord};
use crate::error::{Error, Result};
use crate::geom3d::CurvatureMesh;
use crate::predictors::{make_training_pairs, train, PredictorGroup, PredictorSpec, TrainConfig, TrainedPredictor};
use crate::scan2d::{admissible_anchors, extract_pairs, RasterField, ScanDomain, ScanModel, ScanOrder, ScanPath};

/// One autoregressive predictor per class over scalar sequences (time series
/// or curvature along a contour).
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesBank {
    pub order: usize,
    pub predictors: Vec<TrainedPredictor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTraining {
    pub order: usize,
    /// Zero selects a linear predictor.
    pub hidden_units: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for SeriesTraining {
    fn default() -> Self {
        Self { order: 3, hidden_units: 12, seed: 0, train: TrainConfig::default() }
    }
}

impl SeriesTraining {
    fn spec(&self, class: usize) -> PredictorSpec {
        let seed = self.seed.wrapping_add(class as u64);
        if self.hidden_units == 0 {
            PredictorSpec { seed, ..PredictorSpec::linear(self.order, 1) }
        } else {
            PredictorSpec::mlp(self.order, 1, self.hidden_units, seed)
        }
    }
}

impl SeriesBank {
    /// Trains class `n`'s predictor on `classes[n]` with seed `seed + n`.
    pub fn train(classes: &[Vec<f64>], cfg: &SeriesTraining) -> Result<Self> {
        let multi: Vec<Vec<Vec<f64>>> = classes.iter().map(|c| vec![c.clone()]).collect();
        Self::train_multi(&multi, cfg)
    }

    /// As [`SeriesBank::train`] with several sequences per class; pairs never
    /// straddle two sequences.
    pub fn train_multi(classes: &[Vec<Vec<f64>>], cfg: &SeriesTraining) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("no classes to train".into()));
        }
        let predictors = classes
            .par_iter()
            .enumerate()
            .map(|(n, seqs)| {
                let mut pairs = Vec::new();
                for seq in seqs {
                    pairs.extend(make_training_pairs(seq, cfg.order)?);
                }
                train(&pairs, &cfg.spec(n), &cfg.train)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { order: cfg.order, predictors })
    }

    pub fn len(&self) -> usize {
        self.predictors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictors.is_empty()
    }

    /// Absolute one-step errors of every predictor at every target
    /// `order..len`.
    pub fn errors(&self, seq: &[f64]) -> Result<Vec<Vec<f64>>> {
        if seq.len() <= self.order {
            return Err(Error::TooShort { needed: self.order + 1, got: seq.len() });
        }
        let mut input = vec![0.0; self.order];
        let mut out = [0.0];
        (self.order..seq.len())
            .map(|t| {
                for (k, x) in input.iter_mut().enumerate() {
                    *x = seq[t - 1 - k];
                }
                self.predictors
                    .iter()
                    .map(|p| {
                        p.predict_into(&input, &mut out)?;
                        Ok((seq[t] - out[0]).abs())
                    })
                    .collect()
            })
            .collect()
    }

    pub fn classify(&self, seq: &[f64], engine: &EngineConfig) -> Result<Vec<StepRecord>> {
        run_stream(&self.errors(seq)?, engine)
    }
}

/// Winner after the last step, or `None` for an empty run.
pub fn final_winner<E: AsRef<[f64]>>(errors: &[E], engine: &EngineConfig) -> Result<Option<usize>> {
    Ok(run_stream(errors, engine)?.last().map(|r| r.winner))
}

/// A scan model for the 2-channel curvature fields of meshes, trained on
/// the anchors whose whole stencil lies on ok nodes.
pub fn train_surface_model(
    meshes: &[CurvatureMesh],
    domain: &ScanDomain,
    hidden_units: usize,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<ScanModel> {
    let mut per_channel: Vec<Vec<_>> = vec![Vec::new(); 2];
    for mesh in meshes {
        let anchors = mesh.ok_anchors(domain, ScanOrder::Raster, None)?;
        if anchors.is_empty() {
            continue;
        }
        let pairs = extract_pairs(&mesh.to_field(), domain, &ScanPath { anchors })?;
        for (acc, p) in per_channel.iter_mut().zip(pairs) {
            acc.extend(p);
        }
    }
    if per_channel[0].is_empty() {
        return Err(Error::Degenerate("no mesh anchor with a complete stencil".into()));
    }
    Ok(ScanModel {
        domain: domain.clone(),
        group: PredictorGroup::train(&per_channel, &scan_spec(domain, hidden_units, seed), cfg)?,
    })
}

fn scan_spec(domain: &ScanDomain, hidden_units: usize, seed: u64) -> PredictorSpec {
    if hidden_units == 0 {
        PredictorSpec { seed, ..PredictorSpec::linear(domain.n_in(), domain.n_out()) }
    } else {
        PredictorSpec::mlp(domain.n_in(), domain.n_out(), hidden_units, seed)
    }
}

/// One scan model per texture class, trained on every `stride`-th anchor
/// of all of the class's images; class `n` uses seed `seed + n`.
pub fn train_texture_models(
    classes: &[Vec<RasterField>],
    domain: &ScanDomain,
    hidden_units: usize,
    seed: u64,
    stride: usize,
    cfg: &TrainConfig,
) -> Result<Vec<ScanModel>> {
    classes
        .par_iter()
        .enumerate()
        .map(|(n, fields)| {
            let channels = fields
                .first()
                .map(|f| f.channels())
                .ok_or_else(|| Error::Config(format!("class {n} has no images")))?;
            let mut per_channel: Vec<Vec<_>> = vec![Vec::new(); channels];
            for f in fields {
                if f.channels() != channels {
                    return Err(Error::Dimension {
                        expected: channels,
                        got: f.channels(),
                        context: "image channels within a class",
                    });
                }
                let anchors = admissible_anchors(f.width(), f.height(), domain, ScanOrder::Raster)?
                    .into_iter()
                    .step_by(stride.max(1))
                    .collect();
                for (acc, p) in per_channel.iter_mut().zip(extract_pairs(f, domain, &ScanPath { anchors })?) {
                    acc.extend(p);
                }
            }
            Ok(ScanModel {
                domain: domain.clone(),
                group: PredictorGroup::train(
                    &per_channel,
                    &scan_spec(domain, hidden_units, seed.wrapping_add(n as u64)),
                    cfg,
                )?,
            })
        })
        .collect()
}
