//! Seeded synthetic data: autoregressive sources, textures, silhouettes and
//! analytic surface clouds.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::curves::BinaryMask;
use crate::error::{Error, Result};
use crate::geom3d::PointCloud;
use crate::scan2d::RasterField;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(std: f64) -> Normal<f64> {
    Normal::new(0.0, std.max(0.0)).expect("finite std")
}

/// Nonlinear autoregressive sources of order at most two, bounded on
/// roughly `[-1.5, 1.5]`. Each map has a single attracting region whatever
/// state it starts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NarSource {
    Logistic,
    Sine,
    Henon,
    Tent,
    Cubic,
}

impl NarSource {
    pub const ALL: [NarSource; 5] = [Self::Logistic, Self::Sine, Self::Henon, Self::Tent, Self::Cubic];

    /// Next value from the previous two, `x1` the most recent.
    pub fn next(&self, x1: f64, x2: f64) -> f64 {
        match self {
            Self::Logistic => 3.9 * x1 * (1.0 - x1),
            Self::Sine => 0.97 * (TAU * x1).sin().abs(),
            Self::Henon => 1.0 - 1.4 * x1 * x1 + 0.3 * x2,
            Self::Tent => 1.9 * x1.min(1.0 - x1),
            Self::Cubic => 4.0 * x1 * x1 * x1 - 3.0 * x1,
        }
    }

    /// Keeps a noisy trajectory inside the map's attracting region.
    fn clamp(&self, x: f64) -> f64 {
        match self {
            Self::Logistic | Self::Tent | Self::Sine => x.clamp(0.0, 1.0),
            Self::Henon => x.clamp(-1.5, 1.5),
            Self::Cubic => x.clamp(-1.0, 1.0),
        }
    }

    fn start(&self, r: &mut impl Rng) -> (f64, f64) {
        let (a, b) = match self {
            Self::Logistic | Self::Tent | Self::Sine => (0.2, 0.8),
            Self::Henon => (-0.3, 0.3),
            Self::Cubic => (-0.9, 0.9),
        };
        (r.random_range(a..b), r.random_range(a..b))
    }
}

/// `len` values of `source` with additive Gaussian noise, after a 50-step
/// burn-in.
pub fn nar_series(source: NarSource, len: usize, noise: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let (mut x2, mut x1) = source.start(&mut r);
    let n = gaussian(noise);
    let mut out = Vec::with_capacity(len);
    for k in 0..len + 50 {
        let x = source.clamp(source.next(x1, x2) + n.sample(&mut r));
        x2 = x1;
        x1 = x;
        if k >= 50 {
            out.push(x);
        }
    }
    out
}

/// A series produced by `first` for `switch_at` steps and by `second`
/// afterwards, continuing from the same state.
pub fn switching_series(
    first: NarSource,
    second: NarSource,
    len: usize,
    switch_at: usize,
    noise: f64,
    seed: u64,
) -> Vec<f64> {
    let mut r = rng(seed);
    let (mut x2, mut x1) = first.start(&mut r);
    let n = gaussian(noise);
    let mut out = Vec::with_capacity(len);
    for k in 0..len + 50 {
        let src = if k >= 50 + switch_at { second } else { first };
        let x = src.clamp(src.next(x1, x2) + n.sample(&mut r));
        x2 = x1;
        x1 = x;
        if k >= 50 {
            out.push(x);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureKind {
    GratingHorizontal,
    GratingDiagonal,
    Checkerboard,
    BlueNoise,
}

impl TextureKind {
    pub const ALL: [TextureKind; 4] =
        [Self::GratingHorizontal, Self::GratingDiagonal, Self::Checkerboard, Self::BlueNoise];

    pub fn name(&self) -> &'static str {
        match self {
            Self::GratingHorizontal => "grating_horizontal",
            Self::GratingDiagonal => "grating_diagonal",
            Self::Checkerboard => "checkerboard",
            Self::BlueNoise => "blue_noise",
        }
    }
}

impl std::str::FromStr for TextureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::parse("texture kind", format!("unknown texture `{s}`")))
    }
}

/// A `size x size` texture with a random phase and mild white noise. Colour
/// textures shift the pattern per channel.
pub fn texture(kind: TextureKind, size: usize, channels: usize, seed: u64) -> RasterField {
    let mut r = rng(seed);
    let phase: f64 = r.random_range(0.0..TAU);
    let shift: (usize, usize) = (r.random_range(0..64), r.random_range(0..64));
    let noise = gaussian(0.02);
    let mut white = |n: usize| -> Vec<f64> { (0..n).map(|_| noise.sample(&mut r)).collect() };
    let jitter = white(size * size * channels);
    let base: Vec<f64> = match kind {
        TextureKind::BlueNoise => {
            // high-passed white noise: each sample minus its 3x3 mean
            let mut r2 = rng(seed ^ 0x5eed);
            let w: Vec<f64> = (0..(size + 2) * (size + 2) * channels).map(|_| r2.random_range(-1.0..1.0)).collect();
            let at = |i: usize, j: usize, p: usize| w[(j * (size + 2) + i) * channels + p];
            let mut v = Vec::with_capacity(size * size * channels);
            for j in 0..size {
                for i in 0..size {
                    for p in 0..channels {
                        let mut m = 0.0;
                        for dj in 0..3 {
                            for di in 0..3 {
                                m += at(i + di, j + dj, p);
                            }
                        }
                        v.push(0.5 + 0.35 * (at(i + 1, j + 1, p) - m / 9.0));
                    }
                }
            }
            v
        }
        _ => {
            let mut v = Vec::with_capacity(size * size * channels);
            for j in 0..size {
                for i in 0..size {
                    for p in 0..channels {
                        let (x, y) = (i as f64, j as f64);
                        let cp = p as f64 * TAU / 3.0;
                        let z = match kind {
                            TextureKind::GratingHorizontal => 0.5 + 0.4 * (TAU * y / 8.0 + phase + cp).sin(),
                            TextureKind::GratingDiagonal => {
                                0.5 + 0.4 * (TAU * (x + y) / (8.0 * 2f64.sqrt()) + phase + cp).sin()
                            }
                            TextureKind::Checkerboard => {
                                let cell = ((i + shift.0) / 4 + (j + shift.1) / 4) % 2;
                                let (lo, hi) = [(0.2, 0.8), (0.7, 0.3), (0.4, 0.9)][p % 3];
                                if cell == 0 {
                                    lo
                                } else {
                                    hi
                                }
                            }
                            TextureKind::BlueNoise => unreachable!(),
                        };
                        v.push(z);
                    }
                }
            }
            v
        }
    };
    let values = base.iter().zip(&jitter).map(|(a, b)| a + b).collect();
    RasterField::new(size, size, channels, values).expect("dimensions agree")
}

/// Closed plane shapes of roughly unit size, star-shaped about the origin.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// `r(theta) = base + sum a_k cos(k theta + phi_k)`.
    Radial {
        base: f64,
        harmonics: Vec<(usize, f64, f64)>,
    },
    Superellipse {
        a: f64,
        b: f64,
        n: f64,
    },
    Polygon(Vec<(f64, f64)>),
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Radial { base, harmonics } => {
                let t = y.atan2(x);
                let r = base + harmonics.iter().map(|(k, a, ph)| a * (*k as f64 * t + ph).cos()).sum::<f64>();
                x.hypot(y) <= r
            }
            Shape::Superellipse { a, b, n } => (x / a).abs().powf(*n) + (y / b).abs().powf(*n) <= 1.0,
            Shape::Polygon(v) => {
                let mut inside = false;
                let mut j = v.len() - 1;
                for i in 0..v.len() {
                    let (xi, yi) = v[i];
                    let (xj, yj) = v[j];
                    if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                        inside = !inside;
                    }
                    j = i;
                }
                inside
            }
        }
    }

    /// The ten shapes of the synthetic pose corpus.
    pub fn catalogue() -> Vec<Shape> {
        let regular = |n: usize, r: f64, rot: f64| -> Shape {
            Shape::Polygon(
                (0..n)
                    .map(|k| {
                        let t = rot + TAU * k as f64 / n as f64;
                        (r * t.cos(), r * t.sin())
                    })
                    .collect(),
            )
        };
        let star = Shape::Polygon(
            (0..10)
                .map(|k| {
                    let t = TAU * k as f64 / 10.0;
                    let r = if k % 2 == 0 { 1.0 } else { 0.55 };
                    (r * t.cos(), r * t.sin())
                })
                .collect(),
        );
        vec![
            Shape::Radial { base: 0.8, harmonics: vec![(2, 0.2, 0.0)] },
            Shape::Superellipse { a: 1.0, b: 0.8, n: 4.0 },
            regular(3, 1.0, 0.3),
            star,
            regular(6, 0.95, 0.0),
            Shape::Radial { base: 0.75, harmonics: vec![(1, 0.3, 0.0)] },
            Shape::Radial { base: 0.8, harmonics: vec![(3, 0.18, 0.4)] },
            Shape::Polygon(vec![(-0.8, -0.9), (0.9, -0.9), (0.9, -0.2), (-0.1, -0.2), (-0.1, 0.9), (-0.8, 0.9)]),
            Shape::Radial { base: 0.8, harmonics: vec![(2, 0.12, 0.5), (5, 0.08, 0.0)] },
            Shape::Superellipse { a: 1.0, b: 0.55, n: 1.3 },
        ]
    }
}

/// Affine "pose" of a shape: `[[sx, shear], [0, sy]]` followed by a rotation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub sx: f64,
    pub sy: f64,
    pub shear: f64,
    pub rotation: f64,
}

impl Pose {
    /// `n` poses on a grid over width `[0.55, 1]`, height `[0.7, 1]` and
    /// shear `[0, 0.5]`; the grid has the fewest levels per axis that give
    /// `n` points, so eight poses are its corners.
    pub fn family(n: usize) -> Vec<Pose> {
        let levels = (1..).find(|l: &usize| l.pow(3) >= n).unwrap().max(2);
        let at = |k: usize, lo: f64, hi: f64| hi - (hi - lo) * k as f64 / (levels - 1) as f64;
        (0..n)
            .map(|p| Pose {
                sx: at(p % levels, 0.55, 1.0),
                sy: at(p / levels % levels, 0.7, 1.0),
                shear: 0.5 - at(p / levels / levels, 0.0, 0.5),
                rotation: 0.0,
            })
            .collect()
    }

    fn matrix(&self) -> [[f64; 2]; 2] {
        let (c, s) = (self.rotation.cos(), self.rotation.sin());
        let a = [[self.sx, self.shear], [0.0, self.sy]];
        [[c * a[0][0] - s * a[1][0], c * a[0][1] - s * a[1][1]], [s * a[0][0] + c * a[1][0], s * a[0][1] + c * a[1][1]]]
    }
}

/// Rasterizes `shape` under `pose`, scaled by `scale` pixels and centred at
/// `centre` in a `size x size` mask.
pub fn silhouette(shape: &Shape, pose: &Pose, size: usize, scale: f64, centre: (f64, f64)) -> BinaryMask {
    let m = pose.matrix();
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
    BinaryMask::from_fn(size, size, |i, j| {
        // image rows grow downwards
        let u = (i as f64 + 0.5 - centre.0) / scale;
        let v = (centre.1 - j as f64 - 0.5) / scale;
        shape.contains(inv[0][0] * u + inv[0][1] * v, inv[1][0] * u + inv[1][1] * v)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseCorpusConfig {
    pub n_shapes: usize,
    pub n_poses: usize,
    pub pictures_per_pose: usize,
    pub image_size: usize,
    /// Shape radius in pixels.
    pub scale: f64,
    /// Per-picture jitter of the pose parameters (relative).
    pub jitter: f64,
    /// Per-picture in-plane rotation is drawn from `[-max_rotation, max_rotation]`.
    pub max_rotation: f64,
    pub seed: u64,
}

impl Default for PoseCorpusConfig {
    fn default() -> Self {
        Self {
            n_shapes: 10,
            n_poses: 8,
            pictures_per_pose: 5,
            image_size: 128,
            scale: 40.0,
            jitter: 0.02,
            max_rotation: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PosePicture {
    pub shape: usize,
    pub pose: usize,
    pub picture: usize,
    pub mask: BinaryMask,
}

/// Every picture of every pose of every shape. Pictures of one pose differ by
/// small pose jitter, a small in-plane rotation and a sub-pixel shift,
/// so their curvature sequences differ by digitization noise and start point.
pub fn pose_corpus(cfg: &PoseCorpusConfig) -> Result<Vec<PosePicture>> {
    let shapes = Shape::catalogue();
    if cfg.n_shapes == 0 || cfg.n_shapes > shapes.len() {
        return Err(Error::Config(format!("n_shapes must be in 1..={}", shapes.len())));
    }
    let poses = Pose::family(cfg.n_poses);
    let mut r = rng(cfg.seed);
    let mut out = Vec::new();
    for (s, shape) in shapes.iter().take(cfg.n_shapes).enumerate() {
        for (p, pose) in poses.iter().enumerate() {
            for k in 0..cfg.pictures_per_pose {
                let mut jit = |v: f64| v * (1.0 + r.random_range(-cfg.jitter..=cfg.jitter));
                let jittered = Pose {
                    sx: jit(pose.sx),
                    sy: jit(pose.sy),
                    shear: pose.shear + r.random_range(-cfg.jitter..=cfg.jitter),
                    rotation: r.random_range(-cfg.max_rotation..=cfg.max_rotation),
                };
                let c = cfg.image_size as f64 / 2.0;
                let centre = (c + r.random_range(-0.5..0.5), c + r.random_range(-0.5..0.5));
                out.push(PosePicture {
                    shape: s,
                    pose: p,
                    picture: k,
                    mask: silhouette(shape, &jittered, cfg.image_size, cfg.scale, centre),
                });
            }
        }
    }
    Ok(out)
}

/// Uniform samples on the lateral surface of a cylinder of radius `r` about
/// the z axis, `|z| <= half_height`.
pub fn cylinder_cloud(r: f64, half_height: f64, n: usize, seed: u64) -> PointCloud {
    let mut g = rng(seed);
    let pts = (0..n)
        .map(|_| {
            let t: f64 = g.random_range(0.0..TAU);
            Vector3::new(r * t.cos(), r * t.sin(), g.random_range(-half_height..half_height))
        })
        .collect();
    PointCloud::new(pts).expect("finite points")
}

/// Area-uniform samples on a torus about the z axis with centre-line radius
/// `big` and tube radius `small`.
pub fn torus_cloud(big: f64, small: f64, n: usize, seed: u64) -> PointCloud {
    let mut g = rng(seed);
    let mut pts = Vec::with_capacity(n);
    while pts.len() < n {
        let u: f64 = g.random_range(0.0..TAU);
        let v: f64 = g.random_range(0.0..TAU);
        // area element is proportional to big + small cos v
        if g.random_range(0.0..big + small) > big + small * v.cos() {
            continue;
        }
        let w = big + small * v.cos();
        pts.push(Vector3::new(w * u.cos(), w * u.sin(), small * v.sin()));
    }
    PointCloud::new(pts).expect("finite points")
}

/// Samples on the ellipsoid `(x/a)^2 + (y/b)^2 + (z/c)^2 = 1`, area-uniform
/// by rejection on the scaled-sphere map.
pub fn ellipsoid_cloud(a: f64, b: f64, c: f64, n: usize, seed: u64) -> PointCloud {
    let mut g = rng(seed);
    let normal = gaussian(1.0);
    let mut pts = Vec::with_capacity(n);
    let bound = (a * b).max(b * c).max(a * c);
    while pts.len() < n {
        let d = Vector3::new(normal.sample(&mut g), normal.sample(&mut g), normal.sample(&mut g));
        let Some(u) = d.try_normalize(1e-12) else { continue };
        // area scale of the map sphere -> ellipsoid at direction u
        let w = ((b * c * u.x).powi(2) + (a * c * u.y).powi(2) + (a * b * u.z).powi(2)).sqrt();
        if g.random_range(0.0..bound) > w {
            continue;
        }
        pts.push(Vector3::new(a * u.x, b * u.y, c * u.z));
    }
    PointCloud::new(pts).expect("finite points")
}

/// Samples of `z = x^2 - y^2` over `|x|, |y| <= half_width`.
pub fn saddle_cloud(half_width: f64, n: usize, seed: u64) -> PointCloud {
    let mut g = rng(seed);
    let pts = (0..n)
        .map(|_| {
            let x: f64 = g.random_range(-half_width..half_width);
            let y: f64 = g.random_range(-half_width..half_width);
            Vector3::new(x, y, x * x - y * y)
        })
        .collect();
    PointCloud::new(pts).expect("finite points")
}

/// Area-uniform samples on a sphere of radius `r` about the origin.
pub fn sphere_cloud(r: f64, n: usize, seed: u64) -> PointCloud {
    ellipsoid_cloud(r, r, r, n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{curvature_sequence, trace_contour, CurveConfig};

    #[test]
    fn series_are_bounded_and_seeded() {
        for s in NarSource::ALL {
            let a = nar_series(s, 300, 0.01, 3);
            assert_eq!(a, nar_series(s, 300, 0.01, 3));
            assert!(a.iter().all(|v| v.is_finite() && v.abs() <= 1.5));
            // not collapsed onto a fixed point
            let mean = a.iter().sum::<f64>() / a.len() as f64;
            let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / a.len() as f64;
            assert!(var > 1e-3, "{s:?} variance {var}");
        }
        let sw = switching_series(NarSource::Logistic, NarSource::Henon, 200, 100, 0.0, 1);
        assert!(sw[..100].iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn textures_have_expected_shape() {
        for k in TextureKind::ALL {
            for c in [1, 3] {
                let f = texture(k, 32, c, 5);
                assert_eq!((f.width(), f.height(), f.channels()), (32, 32, c));
                assert!(f.values().iter().all(|v| (-0.2..1.2).contains(v)));
            }
            assert_eq!(k.name().parse::<TextureKind>().unwrap(), k);
        }
        assert_ne!(texture(TextureKind::BlueNoise, 16, 1, 1), texture(TextureKind::BlueNoise, 16, 1, 2));
    }

    #[test]
    fn silhouettes_trace_to_single_closed_contours() {
        let poses = Pose::family(8);
        for shape in Shape::catalogue() {
            for pose in &poses {
                let m = silhouette(&shape, pose, 128, 40.0, (64.0, 64.0));
                let c = trace_contour(&m, None).unwrap();
                assert!(c.closed);
                c.validate().unwrap();
                assert!(m.count() > 500);
                assert!(curvature_sequence(&m, None, &CurveConfig::default()).is_ok());
            }
        }
    }

    #[test]
    fn corpus_layout() {
        let cfg = PoseCorpusConfig {
            n_shapes: 2,
            n_poses: 3,
            pictures_per_pose: 2,
            image_size: 64,
            scale: 20.0,
            ..Default::default()
        };
        let c = pose_corpus(&cfg).unwrap();
        assert_eq!(c.len(), 12);
        assert_eq!((c[5].shape, c[5].pose, c[5].picture), (0, 2, 1));
    }

    #[test]
    fn clouds_lie_on_their_surfaces() {
        let c = cylinder_cloud(4.0, 5.0, 500, 1);
        assert!(c.points().iter().all(|p| (p.xy().norm() - 4.0).abs() < 1e-12));
        let t = torus_cloud(10.0, 3.0, 500, 1);
        assert!(t.points().iter().all(|p| ((p.xy().norm() - 10.0).powi(2) + p.z * p.z - 9.0).abs() < 1e-9));
        let e = ellipsoid_cloud(3.0, 2.0, 1.5, 500, 1);
        assert!(e
            .points()
            .iter()
            .all(|p| ((p.x / 3.0).powi(2) + (p.y / 2.0).powi(2) + (p.z / 1.5).powi(2) - 1.0).abs() < 1e-12));
        let s = saddle_cloud(1.0, 100, 1);
        assert!(s.points().iter().all(|p| (p.z - (p.x * p.x - p.y * p.y)).abs() < 1e-15));
    }
}
