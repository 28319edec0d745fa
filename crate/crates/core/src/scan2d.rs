//! Scanning stencils over raster grids. A stencil (`ScanDomain`) is a set of
//! input offsets and output offsets relative to an anchor pixel; at every
//! anchor of a scan path each source predicts the output values from the
//! input values and the stacked prediction error feeds the credit engine.
//!
//! Offsets are `(di, dj)` with `i` the column and `j` the row.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictors::{PredictorGroup, PredictorSpec, Sample, TrainConfig};

pub type Offset = (i64, i64);
pub type Anchor = (i64, i64);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanDomain {
    in_offsets: Vec<Offset>,
    out_offsets: Vec<Offset>,
}

impl ScanDomain {
    /// Offsets are sorted lexicographically; that order fixes the layout of
    /// predictor inputs.
    pub fn new(mut in_offsets: Vec<Offset>, mut out_offsets: Vec<Offset>) -> Result<Self> {
        in_offsets.sort_unstable();
        in_offsets.dedup();
        out_offsets.sort_unstable();
        out_offsets.dedup();
        if in_offsets.is_empty() {
            return Err(Error::Domain("input offsets are empty".into()));
        }
        if out_offsets.is_empty() {
            return Err(Error::Domain("output offsets are empty".into()));
        }
        if let Some(o) = in_offsets.iter().find(|o| out_offsets.binary_search(o).is_ok()) {
            return Err(Error::Domain(format!("offset ({}, {}) is both input and output", o.0, o.1)));
        }
        Ok(Self { in_offsets, out_offsets })
    }

    /// Causal block `{(-m, -l) : 0 <= m <= M, 0 <= l <= L}` minus the anchor,
    /// predicting the anchor itself.
    pub fn canonical(m: usize, l: usize) -> Result<Self> {
        if m == 0 || l == 0 {
            return Err(Error::Domain("canonical stencil needs M, L >= 1".into()));
        }
        let mut ins = Vec::new();
        for a in 0..=m as i64 {
            for b in 0..=l as i64 {
                if (a, b) != (0, 0) {
                    ins.push((-a, -b));
                }
            }
        }
        Self::new(ins, vec![(0, 0)])
    }

    pub fn in_offsets(&self) -> &[Offset] {
        &self.in_offsets
    }

    pub fn out_offsets(&self) -> &[Offset] {
        &self.out_offsets
    }

    pub fn n_in(&self) -> usize {
        self.in_offsets.len()
    }

    pub fn n_out(&self) -> usize {
        self.out_offsets.len()
    }

    /// `(min_di, max_di, min_dj, max_dj)` over all offsets.
    fn extent(&self) -> (i64, i64, i64, i64) {
        let all = self.in_offsets.iter().chain(&self.out_offsets);
        all.fold((0, 0, 0, 0), |(a, b, c, d), &(i, j)| (a.min(i), b.max(i), c.min(j), d.max(j)))
    }

    /// One `di dj in|out` line per offset.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, j) in &self.in_offsets {
            s.push_str(&format!("{i} {j} in\n"));
        }
        for (i, j) in &self.out_offsets {
            s.push_str(&format!("{i} {j} out\n"));
        }
        s
    }

    /// Parses `di dj [in|out]` lines; the tag defaults to `in`, blank lines
    /// and `#` comments are skipped. With no `out` line the output is `(0, 0)`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut ins = Vec::new();
        let mut outs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::parse("scan domain", format!("line {}: expected `di dj [in|out]`", n + 1));
            if !(2..=3).contains(&fields.len()) {
                return Err(bad());
            }
            let di: i64 = fields[0].parse().map_err(|_| bad())?;
            let dj: i64 = fields[1].parse().map_err(|_| bad())?;
            match fields.get(2).copied().unwrap_or("in") {
                "in" => ins.push((di, dj)),
                "out" => outs.push((di, dj)),
                _ => return Err(bad()),
            }
        }
        if outs.is_empty() {
            outs.push((0, 0));
        }
        Self::new(ins, outs)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Multichannel raster, values in `[0, 1]` by convention.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterField {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
}

impl RasterField {
    /// `values` are interleaved: index `(j * width + i) * channels + p`.
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::Config("raster dimensions must be positive".into()));
        }
        if values.len() != width * height * channels {
            return Err(Error::Dimension {
                expected: width * height * channels,
                got: values.len(),
                context: "raster values",
            });
        }
        Ok(Self { width, height, channels, values })
    }

    pub fn from_fn(width: usize, height: usize, channels: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height * channels);
        for j in 0..height {
            for i in 0..width {
                for p in 0..channels {
                    values.push(f(i, j, p));
                }
            }
        }
        Self { width, height, channels, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize, p: usize) -> f64 {
        self.values[(j * self.width + i) * self.channels + p]
    }

    fn at(&self, (i, j): Anchor, p: usize) -> f64 {
        self.get(i as usize, j as usize, p)
    }

    /// Reads PGM/PPM (plain or raw); 8- and 16-bit samples map to `[0, 1]`.
    pub fn read_pnm(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image { path: path.to_path_buf(), msg: e.to_string() })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        if img.color().has_color() {
            let buf = img.into_rgb16();
            let values = buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
            Self::new(w, h, 3, values)
        } else {
            let buf = img.into_luma16();
            let values = buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
            Self::new(w, h, 1, values)
        }
    }

    /// Writes 8-bit PGM (1 channel) or PPM (3 channels), clamping to `[0, 1]`.
    pub fn write_pnm(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            c => return Err(Error::Config(format!("cannot write a {c}-channel raster as PNM"))),
        };
        image::save_buffer_with_format(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Pnm,
        )
        .map_err(|e| Error::Image { path: path.to_path_buf(), msg: e.to_string() })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanOrder {
    Raster,
    #[default]
    Boustrophedon,
}

impl std::str::FromStr for ScanOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raster" => Ok(Self::Raster),
            "boustrophedon" => Ok(Self::Boustrophedon),
            _ => Err(Error::parse("scan order", format!("unknown order `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanPath {
    pub anchors: Vec<Anchor>,
}

impl ScanPath {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Ranges of anchor columns and rows that keep the whole stencil inside a
/// `width x height` raster.
pub fn admissible_ranges(
    width: usize,
    height: usize,
    domain: &ScanDomain,
) -> Result<(std::ops::Range<i64>, std::ops::Range<i64>)> {
    let (i0, i1, j0, j1) = domain.extent();
    let cols = -i0..width as i64 - i1;
    let rows = -j0..height as i64 - j1;
    if cols.is_empty() || rows.is_empty() {
        return Err(Error::NoAdmissibleAnchor { width, height });
    }
    Ok((cols, rows))
}

/// Every admissible anchor in the given order, starting at the top-left.
pub fn admissible_anchors(width: usize, height: usize, domain: &ScanDomain, order: ScanOrder) -> Result<Vec<Anchor>> {
    let (cols, rows) = admissible_ranges(width, height, domain)?;
    let mut out = Vec::with_capacity(cols.clone().count() * rows.clone().count());
    for (r, j) in rows.enumerate() {
        let reverse = order == ScanOrder::Boustrophedon && r % 2 == 1;
        if reverse {
            out.extend(cols.clone().rev().map(|i| (i, j)));
        } else {
            out.extend(cols.clone().map(|i| (i, j)));
        }
    }
    Ok(out)
}

/// Full-coverage scan beginning at `start` and wrapping round to the anchors
/// that precede it in `order`.
pub fn make_scan_path(
    width: usize,
    height: usize,
    domain: &ScanDomain,
    start: Anchor,
    order: ScanOrder,
) -> Result<ScanPath> {
    let all = admissible_anchors(width, height, domain, order)?;
    let k = all.iter().position(|a| *a == start).ok_or(Error::InadmissibleAnchor(start.0, start.1))?;
    let mut anchors = all;
    anchors.rotate_left(k);
    Ok(ScanPath { anchors })
}

fn check_path(field: &RasterField, domain: &ScanDomain, path: &ScanPath) -> Result<()> {
    let (cols, rows) = admissible_ranges(field.width, field.height, domain)?;
    match path.anchors.iter().find(|(i, j)| !cols.contains(i) || !rows.contains(j)) {
        Some(&(i, j)) => Err(Error::InadmissibleAnchor(i, j)),
        None => Ok(()),
    }
}

fn gather(field: &RasterField, anchor: Anchor, offsets: &[Offset], p: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend(offsets.iter().map(|(di, dj)| field.at((anchor.0 + di, anchor.1 + dj), p)));
}

/// One `(inputs, targets)` pair per anchor for every channel. Inputs follow
/// the domain's sorted input offsets, targets its sorted output offsets.
pub fn extract_pairs(field: &RasterField, domain: &ScanDomain, path: &ScanPath) -> Result<Vec<Vec<Sample>>> {
    check_path(field, domain, path)?;
    let mut per_channel = vec![Vec::with_capacity(path.len()); field.channels];
    for &a in &path.anchors {
        for (p, samples) in per_channel.iter_mut().enumerate() {
            let mut input = Vec::new();
            let mut target = Vec::new();
            gather(field, a, &domain.in_offsets, p, &mut input);
            gather(field, a, &domain.out_offsets, p, &mut target);
            samples.push(Sample::new(input, target));
        }
    }
    Ok(per_channel)
}

/// A predictor group bound to the stencil it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanModel {
    pub domain: ScanDomain,
    pub group: PredictorGroup,
}

impl ScanModel {
    /// Trains one predictor per channel on the field's admissible anchors
    /// (raster order, every `stride`-th anchor).
    pub fn train(
        field: &RasterField,
        domain: &ScanDomain,
        hidden_units: usize,
        seed: u64,
        stride: usize,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        let all = admissible_anchors(field.width, field.height, domain, ScanOrder::Raster)?;
        let anchors = all.into_iter().step_by(stride.max(1)).collect();
        let pairs = extract_pairs(field, domain, &ScanPath { anchors })?;
        let mut spec = PredictorSpec::mlp(domain.n_in(), domain.n_out(), hidden_units, seed);
        if hidden_units == 0 {
            spec = PredictorSpec { seed, ..PredictorSpec::linear(domain.n_in(), domain.n_out()) };
        }
        let group = PredictorGroup::train(&pairs, &spec, cfg)?;
        Ok(Self { domain: domain.clone(), group })
    }
}

/// Per-step error vectors: entry `n` of step `l` is the Euclidean distance
/// between the observed output values (channels stacked in order) and model
/// `n`'s prediction at anchor `l`.
pub fn scan_errors(
    field: &RasterField,
    domain: &ScanDomain,
    path: &ScanPath,
    models: &[ScanModel],
) -> Result<Vec<Vec<f64>>> {
    check_path(field, domain, path)?;
    check_models(field, domain, models)?;
    let c = field.channels;
    let mut inputs = vec![Vec::new(); c];
    let mut target = Vec::new();
    let mut observed = Vec::with_capacity(c * domain.n_out());
    path.anchors
        .iter()
        .map(|&a| {
            observed.clear();
            for (p, input) in inputs.iter_mut().enumerate() {
                gather(field, a, &domain.in_offsets, p, input);
                gather(field, a, &domain.out_offsets, p, &mut target);
                observed.extend_from_slice(&target);
            }
            let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
            models
                .iter()
                .map(|m| {
                    let predicted = m.group.predict(&refs)?;
                    crate::predictors::prediction_error(&observed, &predicted)
                })
                .collect()
        })
        .collect()
}

fn check_models(field: &RasterField, domain: &ScanDomain, models: &[ScanModel]) -> Result<()> {
    if models.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    for m in models {
        if m.domain != *domain {
            return Err(Error::DomainMismatch);
        }
        if m.group.n_channels() != field.channels {
            return Err(Error::Dimension {
                expected: m.group.n_channels(),
                got: field.channels,
                context: "raster channels",
            });
        }
    }
    Ok(())
}

/// Errors at every admissible anchor, computed once so that scans from many
/// starting anchors can be replayed without re-running the predictors.
#[derive(Clone, Debug)]
pub struct ErrorTable {
    pub anchors: Vec<Anchor>,
    pub errors: Vec<Vec<f64>>,
}

impl ErrorTable {
    pub fn compute(field: &RasterField, domain: &ScanDomain, models: &[ScanModel], order: ScanOrder) -> Result<Self> {
        let anchors = admissible_anchors(field.width, field.height, domain, order)?;
        let path = ScanPath { anchors };
        let errors = scan_errors(field, domain, &path, models)?;
        Ok(Self { anchors: path.anchors, errors })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// The error stream of a scan starting at anchor number `start`, at most
    /// `steps` long.
    pub fn stream_from(&self, start: usize, steps: usize) -> Vec<&[f64]> {
        let n = self.errors.len();
        (0..steps.min(n)).map(|k| self.errors[(start + k) % n].as_slice()).collect()
    }
}
