//! Surface features from point clouds: local quadric fits, the two
//! fundamental forms of the fitted Monge patch, principal curvatures and
//! directions, and a mesh marched along lines of curvature whose nodes carry
//! `(kappa1, kappa2)` for scanning.
//!
//! Sign convention: the fitted normal points away from the cloud centroid at
//! the seed (or along a supplied hint), so convex closed surfaces get negative
//! curvatures: a cylinder of radius `R` reads `(0, -1/R)`.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Isometry3, Matrix2, Matrix3, Point3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::scan2d::{admissible_anchors, Anchor, RasterField, ScanDomain, ScanModel, ScanOrder, ScanPath};

pub const MIN_FIT_POINTS: usize = 6;
pub const UMBILIC_TOL: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    tree: KdTree,
    centroid: Vector3<f64>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::TooFewNeighbors { needed: 1, found: 0 });
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("point cloud"));
        }
        let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
        let tree = KdTree::build(&points);
        Ok(Self { points, tree, centroid })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.centroid
    }

    pub fn within(&self, p: &Vector3<f64>, radius: f64) -> Vec<usize> {
        self.tree.within(&self.points, p, radius)
    }

    pub fn nearest(&self, p: &Vector3<f64>) -> (usize, f64) {
        self.tree.nearest(&self.points, p).expect("cloud is non-empty")
    }

    /// Mean nearest-neighbour distance over (at most 2000, evenly strided)
    /// points.
    pub fn mean_spacing(&self) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 0.0;
        }
        let stride = n.div_ceil(2000);
        let (sum, count) = (0..n).step_by(stride).fold((0.0, 0usize), |(s, c), k| {
            let (_, d) = self.tree.nearest_other(&self.points, &self.points[k], k).unwrap();
            (s + d, c + 1)
        });
        sum / count as f64
    }

    /// Three times the mean point spacing.
    pub fn default_fit_radius(&self) -> f64 {
        3.0 * self.mean_spacing()
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Result<Self> {
        Self::new(self.points.iter().map(|p| iso.transform_point(&Point3::from(*p)).coords).collect())
    }

    /// One `x y z` triple per line; blank and `#` lines skipped, extra
    /// columns ignored.
    pub fn parse_xyz(text: &str) -> Result<Self> {
        let mut pts = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            pts.push(
                parse_triple(line).ok_or_else(|| Error::parse("xyz", format!("line {}: expected `x y z`", n + 1)))?,
            );
        }
        Self::new(pts)
    }

    /// ASCII PLY; only the leading `x y z` of each vertex is used.
    pub fn parse_ply(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("ply") {
            return Err(Error::parse("ply", "missing `ply` magic"));
        }
        let mut n_vertices = None;
        let mut ascii = false;
        let mut in_vertex = false;
        let mut props = Vec::new();
        for line in lines.by_ref() {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                ["format", "ascii", ..] => ascii = true,
                ["format", other, ..] => return Err(Error::parse("ply", format!("unsupported format `{other}`"))),
                ["element", "vertex", n] => {
                    n_vertices = Some(n.parse::<usize>().map_err(|_| Error::parse("ply", "bad vertex count"))?);
                    in_vertex = true;
                }
                ["element", ..] => in_vertex = false,
                ["property", .., name] if in_vertex => props.push(name.to_string()),
                ["end_header"] => break,
                _ => {}
            }
        }
        if !ascii {
            return Err(Error::parse("ply", "missing `format ascii` line"));
        }
        let n = n_vertices.ok_or_else(|| Error::parse("ply", "no vertex element"))?;
        let col = |name: &str| {
            props
                .iter()
                .position(|p| p == name)
                .ok_or_else(|| Error::parse("ply", format!("vertex property `{name}` missing")))
        };
        let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);
        let mut pts = Vec::with_capacity(n);
        for (k, line) in lines.take(n).enumerate() {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse("ply", format!("vertex {k}: not a number")))?;
            let get = |c: usize| {
                vals.get(c).copied().ok_or_else(|| Error::parse("ply", format!("vertex {k}: too few values")))
            };
            pts.push(Vector3::new(get(cx)?, get(cy)?, get(cz)?));
        }
        if pts.len() != n {
            return Err(Error::parse("ply", format!("expected {n} vertices, found {}", pts.len())));
        }
        Self::new(pts)
    }

    /// Dispatches on the `.ply` extension; anything else is read as XYZ.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply")) {
            Self::parse_ply(&text)
        } else {
            Self::parse_xyz(&text)
        }
    }

    pub fn write_xyz<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for p in &self.points {
            writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
        }
        Ok(())
    }
}

fn parse_triple(line: &str) -> Option<Vector3<f64>> {
    let mut it = line.split_whitespace().map(|v| v.parse::<f64>());
    Some(Vector3::new(it.next()?.ok()?, it.next()?.ok()?, it.next()?.ok()?))
}

/// `z = c0 + cx x + cy y + cxx x^2 + cxy x y + cyy y^2` in a local frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalQuadric {
    pub origin: Vector3<f64>,
    /// Columns are the local x, y and z (normal) axes in world coordinates.
    pub frame: Matrix3<f64>,
    pub coeffs: [f64; 6],
    pub fit_rms: f64,
    pub n_points: usize,
}

impl LocalQuadric {
    pub fn normal_axis(&self) -> Vector3<f64> {
        self.frame.column(2).into()
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        let c = &self.coeffs;
        c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
    }

    /// `(gx, gy)` at local `(x, y)`.
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let c = &self.coeffs;
        (c[1] + 2.0 * c[3] * x + c[4] * y, c[2] + c[4] * x + 2.0 * c[5] * y)
    }

    /// `(gxx, gxy, gyy)`, constant for a quadric.
    pub fn hessian(&self) -> (f64, f64, f64) {
        (2.0 * self.coeffs[3], self.coeffs[4], 2.0 * self.coeffs[5])
    }

    pub fn to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.origin + self.frame * local
    }

    pub fn to_local(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.frame.transpose() * (world - self.origin)
    }

    /// Surface point above local `(x, y)`.
    pub fn surface_point(&self, x: f64, y: f64) -> Vector3<f64> {
        self.to_world(&Vector3::new(x, y, self.height(x, y)))
    }

    /// Unit surface normal at local `(x, y)`, on the frame's positive side.
    pub fn normal_at(&self, x: f64, y: f64) -> Vector3<f64> {
        let (gx, gy) = self.gradient(x, y);
        (self.frame * Vector3::new(-gx, -gy, 1.0)).normalize()
    }
}

/// Quadric fitted to the neighbours of `p`, normal pointing away from the
/// cloud centroid.
pub fn fit_local_quadric(cloud: &PointCloud, p: &Vector3<f64>, radius: f64) -> Result<LocalQuadric> {
    fit_local_quadric_oriented(cloud, p, radius, None)
}

/// As [`fit_local_quadric`], with the normal on the side of `hint` when
/// given.
pub fn fit_local_quadric_oriented(
    cloud: &PointCloud,
    p: &Vector3<f64>,
    radius: f64,
    hint: Option<&Vector3<f64>>,
) -> Result<LocalQuadric> {
    if !(radius > 0.0) {
        return Err(Error::Config("fit radius must be > 0".into()));
    }
    let idx = cloud.within(p, radius);
    if idx.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewNeighbors { needed: MIN_FIT_POINTS, found: idx.len() });
    }
    let pts = cloud.points();
    let mean = idx.iter().map(|k| pts[*k]).sum::<Vector3<f64>>() / idx.len() as f64;
    let mut cov = Matrix3::zeros();
    for k in &idx {
        let d = pts[*k] - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let ex: Vector3<f64> = eig.eigenvectors.column(order[0]).into();
    let mut ez: Vector3<f64> = eig.eigenvectors.column(order[2]).into();
    let outward = match hint {
        Some(h) => *h,
        None => p - cloud.centroid(),
    };
    let side = ez.dot(&outward);
    if side < 0.0 || (side == 0.0 && first_nonzero(&ez) < 0.0) {
        ez = -ez;
    }
    let ez = ez.normalize();
    let ex = (ex - ez * ez.dot(&ex)).normalize();
    let ey = ez.cross(&ex);
    let frame = Matrix3::from_columns(&[ex, ey, ez]);

    let n = idx.len();
    let mut a = DMatrix::<f64>::zeros(n, 6);
    let mut b = DVector::<f64>::zeros(n);
    for (r, k) in idx.iter().enumerate() {
        let l = frame.transpose() * (pts[*k] - p);
        let (u, v) = (l.x / radius, l.y / radius);
        let row = [1.0, u, v, u * u, u * v, v * v];
        for (c, val) in row.iter().enumerate() {
            a[(r, c)] = *val;
        }
        b[r] = l.z;
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-9 * smax) {
        return Err(Error::RankDeficient(format!(
            "quadric fit on {n} neighbours is singular (condition {:.3e})",
            smax / smin
        )));
    }
    let sol = svd.solve(&b, 0.0).map_err(|e| Error::RankDeficient(e.to_string()))?;
    let resid = &a * &sol - &b;
    let r2 = radius * radius;
    let coeffs = [sol[0], sol[1] / radius, sol[2] / radius, sol[3] / r2, sol[4] / r2, sol[5] / r2];
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("quadric coefficients"));
    }
    Ok(LocalQuadric { origin: *p, frame, coeffs, fit_rms: (resid.norm_squared() / n as f64).sqrt(), n_points: n })
}

fn first_nonzero(v: &Vector3<f64>) -> f64 {
    v.iter().copied().find(|c| *c != 0.0).unwrap_or(0.0)
}

/// First (`a`) and second (`b`) fundamental forms of a Monge patch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FundamentalForms {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub b11: f64,
    pub b12: f64,
    pub b22: f64,
}

impl FundamentalForms {
    pub fn a(&self) -> Matrix2<f64> {
        Matrix2::new(self.a11, self.a12, self.a12, self.a22)
    }

    pub fn b(&self) -> Matrix2<f64> {
        Matrix2::new(self.b11, self.b12, self.b12, self.b22)
    }

    pub fn det_a(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn det_b(&self) -> f64 {
        self.b11 * self.b22 - self.b12 * self.b12
    }

    /// `a11 b22 + a22 b11 - 2 a12 b12`, the middle coefficient of
    /// `det(b - kappa a) = 0`.
    pub fn mixed_trace(&self) -> f64 {
        self.a11 * self.b22 + self.a22 * self.b11 - 2.0 * self.a12 * self.b12
    }
}

/// Forms of the patch `z = g(x, y)` at local `(x, y)`.
pub fn fundamental_forms(q: &LocalQuadric, x: f64, y: f64) -> FundamentalForms {
    let (gx, gy) = q.gradient(x, y);
    let (gxx, gxy, gyy) = q.hessian();
    let w = (1.0 + gx * gx + gy * gy).sqrt();
    FundamentalForms { a11: 1.0 + gx * gx, a12: gx * gy, a22: 1.0 + gy * gy, b11: gxx / w, b12: gxy / w, b22: gyy / w }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrincipalCurvatures {
    pub kappa1: f64,
    pub kappa2: f64,
    /// Surface-coordinate directions, unit length in the `a` metric.
    pub lambda1: Vector2<f64>,
    pub lambda2: Vector2<f64>,
    pub umbilic: bool,
}

/// Roots of `det(b - kappa a) = 0` with `kappa1 >= kappa2` and their
/// directions. Solved as the symmetric eigenproblem of `L^-1 b L^-T` where
/// `a = L L^T`.
pub fn principal_curvatures(f: &FundamentalForms) -> Result<PrincipalCurvatures> {
    if !(f.a11 > 0.0 && f.det_a() > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let l11 = f.a11.sqrt();
    let l21 = f.a12 / l11;
    let l22 = (f.a22 - l21 * l21).sqrt();
    // m = L^-1 b L^-T, written out for the 2x2 case
    let inv = Matrix2::new(1.0 / l11, 0.0, -l21 / (l11 * l22), 1.0 / l22);
    let m = inv * f.b() * inv.transpose();
    let (m11, m12, m22) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let mid = 0.5 * (m11 + m22);
    let half = (0.25 * (m11 - m22).powi(2) + m12 * m12).sqrt();
    let (k1, k2) = (mid + half, mid - half);
    let v1 = if m12 == 0.0 {
        if m11 >= m22 {
            Vector2::new(1.0, 0.0)
        } else {
            Vector2::new(0.0, 1.0)
        }
    } else {
        let a = Vector2::new(m12, k1 - m11);
        let b = Vector2::new(k1 - m22, m12);
        if a.norm_squared() >= b.norm_squared() {
            a.normalize()
        } else {
            b.normalize()
        }
    };
    let v2 = Vector2::new(-v1.y, v1.x);
    let inv_t = inv.transpose();
    let umbilic = (k1 - k2).abs() <= UMBILIC_TOL * (1.0 + k1.abs() + k2.abs());
    Ok(PrincipalCurvatures { kappa1: k1, kappa2: k2, lambda1: inv_t * v1, lambda2: inv_t * v2, umbilic })
}

/// Surface-coordinate directions mapped to unit tangent vectors in world
/// coordinates: `[l1, l2, l1 gx + l2 gy]` in the local frame.
pub fn embed_directions(
    q: &LocalQuadric,
    x: f64,
    y: f64,
    lambda1: &Vector2<f64>,
    lambda2: &Vector2<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let (gx, gy) = q.gradient(x, y);
    let embed = |l: &Vector2<f64>| -> Result<Vector3<f64>> {
        if l.norm() == 0.0 {
            return Err(Error::Degenerate("zero principal direction".into()));
        }
        let v = Vector3::new(l.x, l.y, l.x * gx + l.y * gy);
        Ok((q.frame * v).normalize())
    };
    Ok((embed(lambda1)?, embed(lambda2)?))
}

/// Curvature data at the foot of a query point on the fitted surface.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfacePoint {
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub kappa1: f64,
    pub kappa2: f64,
    pub dir1: Vector3<f64>,
    pub dir2: Vector3<f64>,
    pub umbilic: bool,
    pub fit_rms: f64,
}

/// Fits around `p` and evaluates at the point of the fitted patch straight
/// below or above it along the local normal.
pub fn analyze_point(
    cloud: &PointCloud,
    p: &Vector3<f64>,
    radius: f64,
    hint: Option<&Vector3<f64>>,
) -> Result<SurfacePoint> {
    let q = fit_local_quadric_oriented(cloud, p, radius, hint)?;
    let forms = fundamental_forms(&q, 0.0, 0.0);
    let pc = principal_curvatures(&forms)?;
    let (dir1, dir2) = embed_directions(&q, 0.0, 0.0, &pc.lambda1, &pc.lambda2)?;
    Ok(SurfacePoint {
        position: q.surface_point(0.0, 0.0),
        normal: q.normal_at(0.0, 0.0),
        kappa1: pc.kappa1,
        kappa2: pc.kappa2,
        dir1,
        dir2,
        umbilic: pc.umbilic,
        fit_rms: q.fit_rms,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    #[default]
    Ok,
    /// Marched off the edge of the cloud.
    Boundary,
    Failed,
}

impl NodeStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Boundary => "boundary",
            Self::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshNode {
    pub u1: i64,
    pub u2: i64,
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub kappa1: f64,
    pub kappa2: f64,
    /// Tangent directions of the u1 and u2 families, oriented towards
    /// increasing u1 and u2.
    pub dirs: [Vector3<f64>; 2],
    pub status: NodeStatus,
}

impl MeshNode {
    fn missing(u1: i64, u2: i64, status: NodeStatus) -> Self {
        Self {
            u1,
            u2,
            position: Vector3::repeat(f64::NAN),
            normal: Vector3::repeat(f64::NAN),
            kappa1: f64::NAN,
            kappa2: f64::NAN,
            dirs: [Vector3::repeat(f64::NAN); 2],
            status,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == NodeStatus::Ok
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshConfig {
    pub delta_s: f64,
    /// Nodes run over `-extent.0..=extent.0` by `-extent.1..=extent.1`.
    pub extent: (usize, usize),
    pub fit_radius: f64,
    /// Largest allowed seed-to-cloud distance; defaults to the fit radius.
    pub max_seed_distance: Option<f64>,
}

impl MeshConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_s > 0.0) || !(self.fit_radius > 0.0) {
            return Err(Error::Config("mesh delta_s and fit_radius must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureMesh {
    pub extent: (usize, usize),
    pub delta_s: f64,
    /// Row-major: `u2` outer, `u1` inner.
    pub nodes: Vec<MeshNode>,
}

impl CurvatureMesh {
    pub fn width(&self) -> usize {
        2 * self.extent.0 + 1
    }

    pub fn height(&self) -> usize {
        2 * self.extent.1 + 1
    }

    fn index(&self, u1: i64, u2: i64) -> usize {
        let i = (u1 + self.extent.0 as i64) as usize;
        let j = (u2 + self.extent.1 as i64) as usize;
        j * self.width() + i
    }

    pub fn node(&self, u1: i64, u2: i64) -> &MeshNode {
        &self.nodes[self.index(u1, u2)]
    }

    pub fn ok_fraction(&self) -> f64 {
        self.nodes.iter().filter(|n| n.is_ok()).count() as f64 / self.nodes.len() as f64
    }

    /// Two-channel `(kappa1, kappa2)` raster; column `u1 + extent.0`, row
    /// `u2 + extent.1`. Nodes that are not ok hold NaN.
    pub fn to_field(&self) -> RasterField {
        RasterField::from_fn(self.width(), self.height(), 2, |i, j, p| {
            let n = &self.nodes[j * self.width() + i];
            match (n.is_ok(), p) {
                (false, _) => f64::NAN,
                (true, 0) => n.kappa1,
                (true, _) => n.kappa2,
            }
        })
    }

    fn stencil_ok(&self, domain: &ScanDomain, (i, j): Anchor) -> bool {
        domain
            .in_offsets()
            .iter()
            .chain(domain.out_offsets())
            .all(|(di, dj)| self.nodes[(j + dj) as usize * self.width() + (i + di) as usize].is_ok())
    }

    /// Admissible anchors (raster columns/rows) whose stencil sees only ok
    /// nodes, optionally restricted to a sub-rectangle of anchors.
    pub fn ok_anchors(
        &self,
        domain: &ScanDomain,
        order: ScanOrder,
        region: Option<(std::ops::Range<i64>, std::ops::Range<i64>)>,
    ) -> Result<Vec<Anchor>> {
        let all = admissible_anchors(self.width(), self.height(), domain, order)?;
        Ok(all
            .into_iter()
            .filter(|a| region.as_ref().is_none_or(|(ci, cj)| ci.contains(&a.0) && cj.contains(&a.1)))
            .filter(|a| self.stencil_ok(domain, *a))
            .collect())
    }

    /// `u1 u2 x y z k1 k2 status` per node.
    pub fn write_dump<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for n in &self.nodes {
            let p = n.position;
            writeln!(out, "{} {} {} {} {} {} {} {}", n.u1, n.u2, p.x, p.y, p.z, n.kappa1, n.kappa2, n.status.as_str())?;
        }
        Ok(())
    }
}

/// Pairs the fresh principal directions with the u1/u2 families of a
/// neighbouring node and orients them alike. At umbilics the previous
/// directions are carried over, projected onto the new tangent plane.
fn align(sp: &SurfacePoint, prev: &[Vector3<f64>; 2]) -> [Vector3<f64>; 2] {
    if sp.umbilic {
        let t = (prev[0] - sp.normal * sp.normal.dot(&prev[0])).normalize();
        let mut o = sp.normal.cross(&t);
        if o.dot(&prev[1]) < 0.0 {
            o = -o;
        }
        return [t, o];
    }
    let (mut d1, mut d2) = if sp.dir1.dot(&prev[0]).abs() >= sp.dir2.dot(&prev[0]).abs() {
        (sp.dir1, sp.dir2)
    } else {
        (sp.dir2, sp.dir1)
    };
    if d1.dot(&prev[0]) < 0.0 {
        d1 = -d1;
    }
    if d2.dot(&prev[1]) < 0.0 {
        d2 = -d2;
    }
    [d1, d2]
}

struct Marcher<'a> {
    cloud: &'a PointCloud,
    cfg: &'a MeshConfig,
}

#[derive(Clone)]
struct State {
    pos: Vector3<f64>,
    normal: Vector3<f64>,
    dirs: [Vector3<f64>; 2],
}

impl Marcher<'_> {
    fn analyze(&self, p: &Vector3<f64>, hint: &Vector3<f64>) -> Result<SurfacePoint> {
        analyze_point(self.cloud, p, self.cfg.fit_radius, Some(hint))
    }

    /// Heun step of arc length `h` along family `axis` (sign `sign`),
    /// re-projected onto the fitted surface.
    fn heun(&self, from: &State, axis: usize, sign: f64, h: f64) -> Result<State> {
        let d0 = from.dirs[axis] * sign;
        let sp = self.analyze(&(from.pos + d0 * h), &from.normal)?;
        let dirs = align(&sp, &from.dirs);
        let avg = (d0 + dirs[axis] * sign).normalize();
        let sp = self.analyze(&(from.pos + avg * h), &from.normal)?;
        Ok(State { pos: sp.position, normal: sp.normal, dirs: align(&sp, &from.dirs) })
    }

    fn advance(&self, from: &State, axis: usize, sign: f64, substeps: usize) -> Result<State> {
        let h = self.cfg.delta_s / substeps as f64;
        let mut s = from.clone();
        for _ in 0..substeps {
            s = self.heun(&s, axis, sign, h)?;
        }
        Ok(s)
    }

    fn spacing_ok(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
        let d = (a - b).norm();
        (d - self.cfg.delta_s).abs() <= 0.2 * self.cfg.delta_s
    }

    fn finish(&self, p: &Vector3<f64>, parent: &State, u1: i64, u2: i64) -> Result<MeshNode> {
        let sp = self.analyze(p, &parent.normal)?;
        Ok(MeshNode {
            u1,
            u2,
            position: sp.position,
            normal: sp.normal,
            kappa1: sp.kappa1,
            kappa2: sp.kappa2,
            dirs: align(&sp, &parent.dirs),
            status: NodeStatus::Ok,
        })
    }

    fn axis_node(&self, parent: &MeshNode, axis: usize, sign: f64) -> Result<MeshNode> {
        let (u1, u2) = match axis {
            0 => (parent.u1 + sign as i64, parent.u2),
            _ => (parent.u1, parent.u2 + sign as i64),
        };
        let from = state_of(parent);
        let mut last = None;
        for substeps in [1, 2, 4] {
            let s = self.advance(&from, axis, sign, substeps)?;
            if self.spacing_ok(&s.pos, &from.pos) {
                return self.finish(&s.pos, &s, u1, u2);
            }
            last = Some(s);
        }
        let d = last.map(|s| (s.pos - from.pos).norm()).unwrap_or(f64::NAN);
        Err(Error::Degenerate(format!("step to ({u1}, {u2}) has length {d:.4}")))
    }

    fn interior_node(&self, a: &MeshNode, b: &MeshNode, s1: f64, s2: f64) -> Result<MeshNode> {
        let (u1, u2) = (a.u1 + s1 as i64, b.u2 + s2 as i64);
        let (sa, sb) = (state_of(a), state_of(b));
        for substeps in [1, 2, 4] {
            let pa = self.advance(&sa, 0, s1, substeps)?;
            let pb = self.advance(&sb, 1, s2, substeps)?;
            let mid = (pa.pos + pb.pos) * 0.5;
            let node = self.finish(&mid, &pa, u1, u2)?;
            if self.spacing_ok(&node.position, &a.position) && self.spacing_ok(&node.position, &b.position) {
                return Ok(node);
            }
        }
        Err(Error::Degenerate(format!("no consistent intersection at ({u1}, {u2})")))
    }
}

fn state_of(n: &MeshNode) -> State {
    State { pos: n.position, normal: n.normal, dirs: n.dirs }
}

fn failure_status(e: &Error) -> NodeStatus {
    match e {
        Error::TooFewNeighbors { .. } => NodeStatus::Boundary,
        _ => NodeStatus::Failed,
    }
}

/// Marches a mesh of lines of curvature out from `seed`. Axis nodes step
/// `delta_s` along the local principal direction; an interior node is the
/// re-projected midpoint of the steps from its two inner neighbours. Nodes
/// whose fit fails, or whose parents are not ok, are marked and skipped.
pub fn build_curvature_mesh(cloud: &PointCloud, seed: &Vector3<f64>, cfg: &MeshConfig) -> Result<CurvatureMesh> {
    cfg.validate()?;
    let (_, dist) = cloud.nearest(seed);
    let limit = cfg.max_seed_distance.unwrap_or(cfg.fit_radius);
    if dist > limit {
        return Err(Error::SeedTooFar { distance: dist, limit });
    }
    let sp = analyze_point(cloud, seed, cfg.fit_radius, None)?;
    if sp.umbilic {
        return Err(Error::UmbilicSeed);
    }
    let (e1, e2) = (cfg.extent.0 as i64, cfg.extent.1 as i64);
    let mut mesh = CurvatureMesh {
        extent: cfg.extent,
        delta_s: cfg.delta_s,
        nodes: Vec::with_capacity(((2 * e1 + 1) * (2 * e2 + 1)) as usize),
    };
    for u2 in -e2..=e2 {
        for u1 in -e1..=e1 {
            mesh.nodes.push(MeshNode::missing(u1, u2, NodeStatus::Failed));
        }
    }
    let origin = MeshNode {
        u1: 0,
        u2: 0,
        position: sp.position,
        normal: sp.normal,
        kappa1: sp.kappa1,
        kappa2: sp.kappa2,
        dirs: [sp.dir1, sp.dir2],
        status: NodeStatus::Ok,
    };
    let k = mesh.index(0, 0);
    mesh.nodes[k] = origin;
    let m = Marcher { cloud, cfg };

    let place = |mesh: &mut CurvatureMesh, u1: i64, u2: i64, r: Result<MeshNode>| {
        let idx = mesh.index(u1, u2);
        mesh.nodes[idx] = r.unwrap_or_else(|e| MeshNode::missing(u1, u2, failure_status(&e)));
    };
    let inherit = |a: &MeshNode, b: Option<&MeshNode>| {
        [Some(a), b].into_iter().flatten().map(|n| n.status).find(|s| *s != NodeStatus::Ok)
    };

    for (axis, extent) in [(0usize, e1), (1, e2)] {
        for sign in [1.0, -1.0] {
            for step in 1..=extent {
                let prev = step - 1;
                let (pu1, pu2, u1, u2) = match axis {
                    0 => (prev * sign as i64, 0, step * sign as i64, 0),
                    _ => (0, prev * sign as i64, 0, step * sign as i64),
                };
                let parent = mesh.node(pu1, pu2).clone();
                let r = match inherit(&parent, None) {
                    Some(s) => Ok(MeshNode::missing(u1, u2, s)),
                    None => m.axis_node(&parent, axis, sign),
                };
                place(&mut mesh, u1, u2, r);
            }
        }
    }
    for s1 in [1i64, -1] {
        for s2 in [1i64, -1] {
            for a in 1..=e1 {
                for b in 1..=e2 {
                    let (u1, u2) = (a * s1, b * s2);
                    let pa = mesh.node(u1 - s1, u2).clone();
                    let pb = mesh.node(u1, u2 - s2).clone();
                    let r = match inherit(&pa, Some(&pb)) {
                        Some(s) => Ok(MeshNode::missing(u1, u2, s)),
                        None => m.interior_node(&pa, &pb, s1 as f64, s2 as f64),
                    };
                    place(&mut mesh, u1, u2, r);
                }
            }
        }
    }
    Ok(mesh)
}

/// Scan errors over a curvature mesh with channels `(kappa1, kappa2)`.
/// Every stencil on the path must see only ok nodes.
pub fn surface_scan_errors(
    mesh: &CurvatureMesh,
    domain: &ScanDomain,
    path: &ScanPath,
    models: &[ScanModel],
) -> Result<Vec<Vec<f64>>> {
    for a in &path.anchors {
        let (cols, rows) = crate::scan2d::admissible_ranges(mesh.width(), mesh.height(), domain)?;
        if !cols.contains(&a.0) || !rows.contains(&a.1) {
            return Err(Error::InadmissibleAnchor(a.0, a.1));
        }
        if !mesh.stencil_ok(domain, *a) {
            return Err(Error::FailedNode(a.0, a.1));
        }
    }
    crate::scan2d::scan_errors(&mesh.to_field(), domain, path, models)
}
