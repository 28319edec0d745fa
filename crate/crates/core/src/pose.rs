//! Pose classification of closed contours by histograms and strings of
//! networks. A shared library is grown by segmenting every training
//! sequence; each sequence is then labelled window by window. A test picture
//! goes to the pose whose mean training histogram is closest (L1), or to the
//! pose owning the closest training string under rotation-minimised edit
//! distance.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::path::{Path, PathBuf};

use crate::curves::{curvature_sequence, BinaryMask, CurveConfig};
use crate::error::{Error, Result};
use crate::repr::{
    histogram_distance, label_sequence, segment_and_train, shift_min_levenshtein, NetworkHistogram, NetworkLibrary,
    SegmentationConfig,
};
use crate::scan2d::RasterField;
use crate::synth::{pose_corpus, rng, PoseCorpusConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseExperimentConfig {
    pub curve: CurveConfig,
    pub segmentation: SegmentationConfig,
    /// Labeling window; zero means `min_segment_len`.
    pub label_window: usize,
    /// Start test sequences at a random point instead of the traced start.
    pub different_start: bool,
    pub seed: u64,
}

impl Default for PoseExperimentConfig {
    fn default() -> Self {
        // contours are short and noisy: a wide fit window, short regions and
        // small nonlinear networks that do not extrapolate across levels
        Self {
            curve: CurveConfig { window_half_width: 12.0, filter_width: 9, ..CurveConfig::default() },
            segmentation: SegmentationConfig {
                error_threshold: 0.008,
                min_segment_len: 5,
                hidden_units: 4,
                ..SegmentationConfig::default()
            },
            label_window: 0,
            different_start: true,
            seed: 0,
        }
    }
}

/// One curvature sequence with its class (pose) label.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveItem {
    pub class: usize,
    pub name: String,
    pub kappa: Vec<f64>,
    pub train: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosePrediction {
    pub name: String,
    pub truth: usize,
    pub by_histogram: usize,
    pub by_string: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseReport {
    pub n_test: usize,
    pub histogram_correct: usize,
    pub string_correct: usize,
    pub library_size: usize,
    pub predictions: Vec<PosePrediction>,
}

impl PoseReport {
    pub fn histogram_rate(&self) -> f64 {
        self.histogram_correct as f64 / self.n_test.max(1) as f64
    }

    pub fn string_rate(&self) -> f64 {
        self.string_correct as f64 / self.n_test.max(1) as f64
    }
}

pub fn run_pose_experiment(items: &[CurveItem], cfg: &PoseExperimentConfig) -> Result<PoseReport> {
    let seg = &cfg.segmentation;
    let window = if cfg.label_window == 0 { seg.min_segment_len } else { cfg.label_window };
    let (train, test): (Vec<&CurveItem>, Vec<&CurveItem>) = items.iter().partition(|i| i.train);
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("pose experiment needs training and test items".into()));
    }
    let n_classes = items.iter().map(|i| i.class).max().unwrap() + 1;

    let mut lib = NetworkLibrary::new(seg.order)?;
    for item in &train {
        segment_and_train(&item.kappa, true, seg, &mut lib)?;
    }

    let label = |kappa: &[f64]| label_sequence(kappa, true, &lib, window, seg.error_threshold);
    let train_labels = train.par_iter().map(|i| label(&i.kappa)).collect::<Result<Vec<_>>>()?;

    let mut per_class: Vec<Vec<NetworkHistogram>> = vec![Vec::new(); n_classes];
    for (item, l) in train.iter().zip(&train_labels) {
        per_class[item.class].push(l.histogram());
    }
    let class_hists: Vec<Option<NetworkHistogram>> = per_class
        .iter()
        .map(|h| (!h.is_empty()).then(|| NetworkHistogram::mean(h)).transpose())
        .collect::<Result<_>>()?;

    let mut r = rng(cfg.seed ^ 0x7e57);
    let offsets: Vec<usize> =
        test.iter().map(|i| if cfg.different_start { r.random_range(0..i.kappa.len().max(1)) } else { 0 }).collect();

    let predictions = test
        .par_iter()
        .zip(offsets)
        .map(|(item, off)| {
            let mut kappa = item.kappa.clone();
            kappa.rotate_left(off);
            let l = label(&kappa)?;
            let h = l.histogram();
            let by_histogram = class_hists
                .iter()
                .enumerate()
                .filter_map(|(c, ch)| ch.as_ref().map(|ch| (c, histogram_distance(&h, ch))))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .map(|(c, _)| c)
                .unwrap();
            // closest training string; ties between classes go to the class
            // with the smaller mean distance
            let mut best_min = vec![usize::MAX; n_classes];
            let mut sums = vec![(0usize, 0usize); n_classes];
            for (t, tl) in train.iter().zip(&train_labels) {
                let d = shift_min_levenshtein(&l.string.symbols, &tl.string.symbols);
                best_min[t.class] = best_min[t.class].min(d);
                sums[t.class].0 += d;
                sums[t.class].1 += 1;
            }
            let by_string = (0..n_classes)
                .filter(|c| sums[*c].1 > 0)
                .min_by(|a, b| {
                    let ma = sums[*a].0 as f64 / sums[*a].1 as f64;
                    let mb = sums[*b].0 as f64 / sums[*b].1 as f64;
                    best_min[*a].cmp(&best_min[*b]).then(ma.total_cmp(&mb)).then(a.cmp(b))
                })
                .unwrap();
            Ok(PosePrediction { name: item.name.clone(), truth: item.class, by_histogram, by_string })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PoseReport {
        n_test: predictions.len(),
        histogram_correct: predictions.iter().filter(|p| p.by_histogram == p.truth).count(),
        string_correct: predictions.iter().filter(|p| p.by_string == p.truth).count(),
        library_size: lib.len(),
        predictions,
    })
}

/// Filtered curvature sequences of the synthetic corpus; the last picture of
/// each pose is held out for testing.
pub fn synthetic_pose_items(corpus: &PoseCorpusConfig, curve: &CurveConfig) -> Result<Vec<CurveItem>> {
    let pics = pose_corpus(corpus)?;
    pics.par_iter()
        .map(|p| {
            let seq = curvature_sequence(&p.mask, None, curve)?;
            Ok(CurveItem {
                class: p.shape * corpus.n_poses + p.pose,
                name: format!("shape{:02}/pose{}/pic{}", p.shape, p.pose, p.picture),
                kappa: seq.kappa_filtered,
                train: p.picture + 1 < corpus.pictures_per_pose,
            })
        })
        .collect()
}

/// Pictures laid out as `root/object/pose/image`. Objects, poses and images
/// are taken in name order; the last image of each pose is the test picture.
/// Returns the items and one `object/pose` name per class.
pub fn dataset_pose_items(root: &Path, curve: &CurveConfig, threshold: f64) -> Result<(Vec<CurveItem>, Vec<String>)> {
    let layout = |msg: String| Error::parse("pose dataset layout", msg);
    let mut pictures = Vec::new();
    let mut names = Vec::new();
    for object in sorted_entries(root, true)? {
        for pose in sorted_entries(&object, true)? {
            let images = sorted_entries(&pose, false)?;
            if images.len() < 2 {
                return Err(layout(format!("{} needs at least two images", pose.display())));
            }
            let class = names.len();
            names.push(format!("{}/{}", file_name(&object), file_name(&pose)));
            let last = images.len() - 1;
            pictures.extend(images.into_iter().enumerate().map(|(k, path)| (class, path, k < last)));
        }
    }
    if names.is_empty() {
        return Err(layout(format!("no object/pose directories under {}", root.display())));
    }
    let items = pictures
        .par_iter()
        .map(|(class, path, train)| {
            let mask = BinaryMask::from_field(&RasterField::read_pnm(path)?, threshold);
            Ok(CurveItem {
                class: *class,
                name: path.strip_prefix(root).unwrap_or(path).display().to_string(),
                kappa: curvature_sequence(&mask, None, curve)?.kappa_filtered,
                train: *train,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((items, names))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn sorted_entries(dir: &Path, dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = e.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() == dirs && !file_name(&path).starts_with('.') {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
