//! Static 3D k-d tree for radius and nearest-neighbour queries.

use nalgebra::Vector3;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Clone, Debug)]
pub struct KdTree {
    nodes: Vec<Node>,
    /// Point indices, permuted so each leaf owns a contiguous run.
    order: Vec<usize>,
}

impl KdTree {
    pub fn build(points: &[Vector3<f64>]) -> Self {
        let mut tree = Self { nodes: Vec::new(), order: (0..points.len()).collect() };
        if !points.is_empty() {
            tree.build_node(points, 0, points.len());
        }
        tree
    }

    fn build_node(&mut self, points: &[Vector3<f64>], start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &k in &self.order[start..end] {
            lo = lo.inf(&points[k]);
            hi = hi.sup(&points[k]);
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |a, b| points[*a][axis].total_cmp(&points[*b][axis]));
        let value = points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(points, start, mid);
        let right = self.build_node(points, mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Indices of points within `radius` of `q` (inclusive), unordered.
    pub fn within(&self, points: &[Vector3<f64>], q: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    out.extend(self.order[start..end].iter().filter(|&&k| (points[k] - q).norm_squared() <= r2));
                }
                Node::Split { axis, value, left, right } => {
                    let d = q[axis] - value;
                    if d <= radius {
                        stack.push(left);
                    }
                    if d >= -radius {
                        stack.push(right);
                    }
                }
            }
        }
        out
    }

    /// Index of and distance to the point nearest `q`.
    pub fn nearest(&self, points: &[Vector3<f64>], q: &Vector3<f64>) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_in(points, q, 0, &mut best, None);
        Some((best.0, best.1.sqrt()))
    }

    /// Like [`KdTree::nearest`] but ignoring point `skip`.
    pub fn nearest_other(&self, points: &[Vector3<f64>], q: &Vector3<f64>, skip: usize) -> Option<(usize, f64)> {
        let mut best = (usize::MAX, f64::INFINITY);
        if !self.nodes.is_empty() {
            self.nearest_in(points, q, 0, &mut best, Some(skip));
        }
        (best.0 != usize::MAX).then(|| (best.0, best.1.sqrt()))
    }

    fn nearest_in(
        &self,
        points: &[Vector3<f64>],
        q: &Vector3<f64>,
        id: usize,
        best: &mut (usize, f64),
        skip: Option<usize>,
    ) {
        match self.nodes[id] {
            Node::Leaf { start, end } => {
                for &k in &self.order[start..end] {
                    if Some(k) == skip {
                        continue;
                    }
                    let d2 = (points[k] - q).norm_squared();
                    if d2 < best.1 || (d2 == best.1 && k < best.0) {
                        *best = (k, d2);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let d = q[axis] - value;
                let (near, far) = if d <= 0.0 { (left, right) } else { (right, left) };
                self.nearest_in(points, q, near, best, skip);
                if d * d <= best.1 {
                    self.nearest_in(points, q, far, best, skip);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(seed: u64, n: usize) -> Vec<Vector3<f64>> {
        // small LCG so the test does not depend on the RNG crates
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 * 10.0 - 5.0
        };
        (0..n).map(|_| Vector3::new(next(), next(), next())).collect()
    }

    #[test]
    fn empty_tree() {
        let t = KdTree::build(&[]);
        assert!(t.nearest(&[], &Vector3::zeros()).is_none());
        assert!(t.within(&[], &Vector3::zeros(), 1.0).is_empty());
    }

    proptest! {
        #[test]
        fn matches_brute_force(seed in 0u64..10_000, n in 1usize..300, r in 0.1f64..4.0) {
            let pts = cloud(seed, n);
            let t = KdTree::build(&pts);
            let q = cloud(seed + 1, 1)[0];
            let mut got = t.within(&pts, &q, r);
            got.sort_unstable();
            let want: Vec<usize> = (0..n).filter(|k| (pts[*k] - q).norm() <= r).collect();
            prop_assert_eq!(got, want);
            let (k, d) = t.nearest(&pts, &q).unwrap();
            let dmin = pts.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(d, dmin);
            prop_assert_eq!((pts[k] - q).norm(), dmin);
            if n > 1 {
                let (k2, _) = t.nearest_other(&pts, &pts[0], 0).unwrap();
                prop_assert_ne!(k2, 0);
                let d2 = (1..n).map(|j| (pts[j] - pts[0]).norm()).fold(f64::INFINITY, f64::min);
                prop_assert_eq!((pts[k2] - pts[0]).norm(), d2);
            }
        }
    }
}
