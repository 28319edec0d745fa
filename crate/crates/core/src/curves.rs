//! Plane-curve features: boundary tracing on a binary raster, chain-code
//! arc length, local polynomial fits of `x(s)` and `y(s)`, and the
//! curvature magnitude `sqrt(x''^2 + y''^2)` sampled on a uniform arc-length
//! grid.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clockwise on screen (rows grow downwards), starting from west.
const RING: [(i64, i64); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pixel {
    pub x: i64,
    pub y: i64,
}

impl Pixel {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    fn offset(self, (dx, dy): (i64, i64)) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    fn is_neighbor(self, other: Pixel) -> bool {
        self != other && (self.x - other.x).abs() <= 1 && (self.y - other.y).abs() <= 1
    }
}

/// Row-major binary raster. Pixels outside the raster read as background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    /// Foreground where the mean over channels exceeds `threshold`.
    pub fn from_field(field: &crate::scan2d::RasterField, threshold: f64) -> Self {
        let c = field.channels();
        Self::from_fn(field.width(), field.height(), |x, y| {
            (0..c).map(|p| field.get(x, y, p)).sum::<f64>() / c as f64 > threshold
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, p: Pixel) -> bool {
        if p.x < 0 || p.y < 0 || p.x as usize >= self.width || p.y as usize >= self.height {
            return false;
        }
        self.data[p.y as usize * self.width + p.x as usize]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    /// Rotated by 90 degrees clockwise.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        Self::from_fn(h, w, |x, y| self.data[(h - 1 - x) * w + y])
    }

    /// Copy placed at `(dx, dy)` inside a larger canvas.
    pub fn translated(&self, dx: usize, dy: usize) -> Self {
        Self::from_fn(self.width + dx, self.height + dy, |x, y| {
            x >= dx && y >= dy && self.data[(y - dy) * self.width + (x - dx)]
        })
    }

    fn first_foreground(&self) -> Option<Pixel> {
        self.data.iter().position(|v| *v).map(|k| Pixel::new((k % self.width) as i64, (k / self.width) as i64))
    }
}

/// Ordered boundary pixels. Consecutive points are 8-neighbours.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelContour {
    pub points: Vec<Pixel>,
    pub closed: bool,
}

impl PixelContour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks neighbourhood and backtracking invariants.
    pub fn validate(&self) -> Result<()> {
        let pts = &self.points;
        let n = pts.len();
        let steps = if self.closed { n } else { n.saturating_sub(1) };
        for k in 0..steps {
            if !pts[k].is_neighbor(pts[(k + 1) % n]) {
                return Err(Error::Degenerate(format!("points {k} and {} are not adjacent", (k + 1) % n)));
            }
        }
        if n >= 3 {
            let range = if self.closed { 0..n } else { 1..n - 1 };
            for k in range {
                if pts[(k + n - 1) % n] == pts[(k + 1) % n] {
                    return Err(Error::Degenerate(format!("contour backtracks at point {k}")));
                }
            }
        }
        Ok(())
    }
}

/// Moore-neighbour boundary trace, clockwise, of the region containing
/// `start` (default: the topmost, then leftmost, foreground pixel).
///
/// Thin one-pixel arcs come back as open contours running between their two
/// end points; one-pixel spurs hanging off a closed boundary are pruned.
pub fn trace_contour(mask: &BinaryMask, start: Option<Pixel>) -> Result<PixelContour> {
    let start = match start {
        Some(p) => {
            if !mask.get(p) {
                return Err(Error::Degenerate(format!("start ({}, {}) is background", p.x, p.y)));
            }
            p
        }
        None => mask.first_foreground().ok_or(Error::EmptyMask)?,
    };
    let back0 = [(-1, 0), (0, -1), (1, 0), (0, 1)]
        .into_iter()
        .map(|d| start.offset(d))
        .find(|p| !mask.get(*p))
        .ok_or_else(|| Error::Degenerate("start is not a boundary pixel".into()))?;

    let limit = 4 * (mask.width() * mask.height()) + 16;
    let mut points = vec![start];
    let mut current = start;
    let mut back = back0;
    let mut first_move: Option<(Pixel, Pixel)> = None;
    loop {
        let bi = RING.iter().position(|d| current.offset(*d) == back).expect("backtrack pixel is always adjacent");
        let found = (1..=8).find_map(|k| {
            let idx = (bi + k) % 8;
            let p = current.offset(RING[idx]);
            mask.get(p).then(|| (p, current.offset(RING[(idx + 7) % 8])))
        });
        let Some((next, next_back)) = found else {
            return Err(Error::Degenerate("isolated single-pixel region".into()));
        };
        if next == start && next_back == back0 {
            break;
        }
        if current == start {
            match first_move {
                None => first_move = Some((next, next_back)),
                Some(m) if m == (next, next_back) => {
                    points.pop();
                    break;
                }
                Some(_) => {}
            }
        }
        points.push(next);
        if points.len() > limit {
            return Err(Error::Degenerate("boundary trace did not terminate".into()));
        }
        current = next;
        back = next_back;
    }
    Ok(finish_trace(points))
}

fn finish_trace(points: Vec<Pixel>) -> PixelContour {
    let n = points.len();
    if n == 1 {
        return PixelContour { points, closed: false };
    }
    // Thin arc: the trace runs out along the arc and back again.
    if n.is_multiple_of(2) {
        let turn = (0..n).find(|&e| points[(e + n - 1) % n] == points[(e + 1) % n]);
        if let Some(e) = turn {
            let rot: Vec<Pixel> = (0..n).map(|k| points[(e + k) % n]).collect();
            if (1..n / 2).all(|i| rot[i] == rot[n - i]) {
                return PixelContour { points: rot[..=n / 2].to_vec(), closed: false };
            }
        }
    }
    let mut pts = points;
    loop {
        let n = pts.len();
        if n < 3 {
            break;
        }
        let Some(k) = (0..n).find(|&k| pts[(k + n - 1) % n] == pts[(k + 1) % n]) else {
            break;
        };
        let (a, b) = (k, (k + 1) % n);
        let (hi, lo) = (a.max(b), a.min(b));
        pts.remove(hi);
        pts.remove(lo);
    }
    PixelContour { points: pts, closed: true }
}

/// Cumulative chain-code length of a traced contour.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcLengthSamples {
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Total length including the closing step, for closed contours.
    pub period: Option<f64>,
}

impl ArcLengthSamples {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.period.unwrap_or_else(|| self.s.last().copied().unwrap_or(0.0))
    }
}

fn step_length(a: Pixel, b: Pixel) -> f64 {
    if a.x != b.x && a.y != b.y {
        SQRT_2
    } else {
        1.0
    }
}

/// Axis moves count one unit, diagonal moves `sqrt(2)`.
pub fn arc_length(contour: &PixelContour) -> ArcLengthSamples {
    let pts = &contour.points;
    let mut s = Vec::with_capacity(pts.len());
    let mut acc = 0.0;
    for (k, p) in pts.iter().enumerate() {
        if k > 0 {
            acc += step_length(pts[k - 1], *p);
        }
        s.push(acc);
    }
    let period = (contour.closed && pts.len() > 1).then(|| acc + step_length(pts[pts.len() - 1], pts[0]));
    ArcLengthSamples {
        s,
        x: pts.iter().map(|p| p.x as f64).collect(),
        y: pts.iter().map(|p| p.y as f64).collect(),
        period,
    }
}

/// Polynomial fits of `x` and `y` about `s0`, as coefficients of powers of
/// `(s - s0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalFit {
    pub s0: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl LocalFit {
    pub fn first_derivatives(&self) -> (f64, f64) {
        let c = |v: &[f64]| v.get(1).copied().unwrap_or(0.0);
        (c(&self.x), c(&self.y))
    }

    pub fn second_derivatives(&self) -> (f64, f64) {
        let c = |v: &[f64]| v.get(2).copied().unwrap_or(0.0) * 2.0;
        (c(&self.x), c(&self.y))
    }
}

/// Grid points at which fits are evaluated. Open contours drop the ends
/// where the window would be truncated.
pub fn uniform_grid(samples: &ArcLengthSamples, delta_s: f64, half_width: f64) -> Result<Vec<f64>> {
    if !(delta_s > 0.0) {
        return Err(Error::Config("delta_s must be > 0".into()));
    }
    match samples.period {
        Some(p) => {
            let n = (p / delta_s).floor().max(1.0) as usize;
            Ok((0..n).map(|k| k as f64 * delta_s).collect())
        }
        None => {
            let total = samples.total_length();
            if total < 2.0 * half_width {
                return Err(Error::TooShort {
                    needed: (2.0 * half_width).ceil() as usize,
                    got: total.floor() as usize,
                });
            }
            let n = ((total - 2.0 * half_width) / delta_s).floor() as usize + 1;
            Ok((0..n).map(|k| half_width + k as f64 * delta_s).collect())
        }
    }
}

/// Least-squares fits over the samples within `half_width` of each grid
/// point (wrapping around for closed contours).
pub fn fit_local_polynomials(
    samples: &ArcLengthSamples,
    grid: &[f64],
    half_width: f64,
    degree: usize,
) -> Result<Vec<LocalFit>> {
    if degree < 2 {
        return Err(Error::Config("polynomial degree must be >= 2".into()));
    }
    if !(half_width > 0.0) {
        return Err(Error::Config("window half-width must be > 0".into()));
    }
    if samples.is_empty() {
        return Err(Error::TooShort { needed: degree + 1, got: 0 });
    }
    grid.iter().map(|&s0| fit_one(samples, s0, half_width, degree)).collect()
}

fn fit_one(samples: &ArcLengthSamples, s0: f64, h: f64, degree: usize) -> Result<LocalFit> {
    let n = samples.len();
    let anchor = nearest_index(samples, s0);
    let (ax, ay) = (samples.x[anchor], samples.y[anchor]);
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    let offset = |k: usize| -> f64 {
        let d = samples.s[k] - s0;
        match samples.period {
            Some(p) => d - p * (d / p).round(),
            None => d,
        }
    };
    rows.push((offset(anchor), samples.x[anchor] - ax, samples.y[anchor] - ay));
    for dir in [1isize, -1] {
        let mut k = anchor as isize;
        for _ in 1..n {
            k += dir;
            let idx = match samples.period {
                Some(_) => k.rem_euclid(n as isize) as usize,
                None if k < 0 || k >= n as isize => break,
                None => k as usize,
            };
            let d = offset(idx);
            if d.abs() > h {
                break;
            }
            if samples.period.is_some() && idx == anchor {
                break;
            }
            rows.push((d, samples.x[idx] - ax, samples.y[idx] - ay));
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    rows.dedup_by(|a, b| a.0 == b.0);
    if rows.len() < degree + 1 {
        return Err(Error::RankDeficient(format!(
            "window at s={s0:.3} holds {} samples, degree {degree} needs {}",
            rows.len(),
            degree + 1
        )));
    }
    let m = degree + 1;
    let mut a = DMatrix::<f64>::zeros(rows.len(), m);
    let mut bx = DVector::<f64>::zeros(rows.len());
    let mut by = DVector::<f64>::zeros(rows.len());
    for (r, (d, x, y)) in rows.iter().enumerate() {
        let t = d / h;
        let mut pw = 1.0;
        for c in 0..m {
            a[(r, c)] = pw;
            pw *= t;
        }
        bx[r] = *x;
        by[r] = *y;
    }
    let gram = a.transpose() * &a;
    let chol = gram.cholesky().ok_or_else(|| Error::RankDeficient(format!("singular window at s={s0:.3}")))?;
    let cx = chol.solve(&(a.transpose() * bx));
    let cy = chol.solve(&(a.transpose() * by));
    let unscale = |c: DVector<f64>, origin: f64| -> Vec<f64> {
        let mut out: Vec<f64> = c.iter().enumerate().map(|(k, v)| v / h.powi(k as i32)).collect();
        out[0] += origin;
        out
    };
    Ok(LocalFit { s0, x: unscale(cx, ax), y: unscale(cy, ay) })
}

fn nearest_index(samples: &ArcLengthSamples, s0: f64) -> usize {
    let s = &samples.s;
    let k = s.partition_point(|v| *v < s0);
    let mut best = k.min(s.len() - 1);
    if k > 0 && (s0 - s[k - 1]).abs() <= (s[best] - s0).abs() {
        best = k - 1;
    }
    if let Some(p) = samples.period {
        // the wrap-around neighbour of the last sample is the first one
        if (p - s0).abs() < (s[best] - s0).abs() {
            best = 0;
        }
    }
    best
}

/// Curvature magnitude at the fit centre.
///
/// Evaluated as `|x'y'' - y'x''| / |r'|^3`, which reduces to
/// `sqrt(x''^2 + y''^2)` for a unit-speed parameter. Chain-code length runs a
/// few percent longer than true arc length, so the fitted speed is not
/// exactly one and the plain form would underestimate curvature.
pub fn curvature(fit: &LocalFit) -> f64 {
    let (xx, yy) = fit.second_derivatives();
    let (x1, y1) = fit.first_derivatives();
    let speed2 = x1 * x1 + y1 * y1;
    if speed2 < 1e-24 {
        return (xx * xx + yy * yy).sqrt();
    }
    (x1 * yy - y1 * xx).abs() / (speed2 * speed2.sqrt())
}

/// The unit-speed form `sqrt(x''^2 + y''^2)`.
pub fn curvature_unit_speed(fit: &LocalFit) -> f64 {
    let (xx, yy) = fit.second_derivatives();
    (xx * xx + yy * yy).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub delta_s: f64,
    pub window_half_width: f64,
    pub degree: usize,
    pub filter_width: usize,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self { delta_s: 1.0, window_half_width: 8.0, degree: 2, filter_width: 5 }
    }
}

/// Curvature sampled along arc length.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureSequence {
    pub s_grid: Vec<f64>,
    pub kappa: Vec<f64>,
    pub kappa_filtered: Vec<f64>,
    pub closed: bool,
}

impl CurvatureSequence {
    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.kappa.iter().sum::<f64>() / self.kappa.len().max(1) as f64
    }

    /// CSV with header `s,kappa,kappa_filtered`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,kappa,kappa_filtered\n");
        for ((s, k), f) in self.s_grid.iter().zip(&self.kappa).zip(&self.kappa_filtered) {
            out.push_str(&format!("{s},{k:e},{f:e}\n"));
        }
        out
    }
}

/// Centred moving average over `width` points (`2 * (width / 2) + 1` when
/// `width` is even); wraps for closed sequences and shrinks at open ends.
pub fn moving_average(values: &[f64], width: usize, closed: bool) -> Vec<f64> {
    let n = values.len();
    let half = (width / 2) as isize;
    if n == 0 || half == 0 {
        return values.to_vec();
    }
    (0..n as isize)
        .map(|k| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for d in -half..=half {
                let j = k + d;
                let idx = if closed {
                    j.rem_euclid(n as isize) as usize
                } else if j < 0 || j >= n as isize {
                    continue;
                } else {
                    j as usize
                };
                sum += values[idx];
                count += 1;
            }
            sum / count as f64
        })
        .collect()
}

/// Traced contour to curvature sequence.
pub fn curvature_from_contour(contour: &PixelContour, cfg: &CurveConfig) -> Result<CurvatureSequence> {
    let samples = arc_length(contour);
    let grid = uniform_grid(&samples, cfg.delta_s, cfg.window_half_width)?;
    let fits = fit_local_polynomials(&samples, &grid, cfg.window_half_width, cfg.degree)?;
    let kappa: Vec<f64> = fits.iter().map(curvature).collect();
    if kappa.iter().any(|k| !k.is_finite()) {
        return Err(Error::NonFinite("curvature"));
    }
    let kappa_filtered = moving_average(&kappa, cfg.filter_width, contour.closed);
    Ok(CurvatureSequence { s_grid: grid, kappa, kappa_filtered, closed: contour.closed })
}

/// Trace, arc length, local fits and curvature in one pass.
pub fn curvature_sequence(mask: &BinaryMask, start: Option<Pixel>, cfg: &CurveConfig) -> Result<CurvatureSequence> {
    let contour = trace_contour(mask, start)?;
    curvature_from_contour(&contour, cfg)
}

/// Smallest RMS difference between `a` and any cyclic shift of `b`, with the
/// shift that attains it.
pub fn best_cyclic_rms(a: &[f64], b: &[f64]) -> (f64, usize) {
    let n = a.len().min(b.len());
    if n == 0 {
        return (0.0, 0);
    }
    (0..b.len())
        .map(|shift| {
            let ss: f64 = (0..n).map(|k| (a[k] - b[(k + shift) % b.len()]).powi(2)).sum();
            ((ss / n as f64).sqrt(), shift)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .unwrap()
}
