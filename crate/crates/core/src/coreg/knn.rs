//! Exact 1-NN matching between Gaussian centers with a 3D KD-tree.

use crate::exec::Exec;
use crate::scene::GaussianField;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static KD-tree over a point set. Queries return the lowest index among
/// equidistant nearest points, matching a brute-force scan.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

impl KdTree {
    pub fn new(points: &[[f64; 3]]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // Split along the widest axis at the median.
        let slice = &self.order[start..end];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in slice {
            for k in 0..3 {
                lo[k] = lo[k].min(self.points[i][k]);
                hi[k] = hi[k].max(self.points[i][k]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Nearest point to `q` as `(index, squared distance)`.
    pub fn nearest(&self, q: &[f64; 3]) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &[f64; 3], best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist2(q, &self.points[i]);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // `<=` keeps equidistant candidates on the far side reachable
                // for the lowest-index tie-break.
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Per-source-primitive nearest match in the target field.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// Index into the target field; `usize::MAX` when the target is empty.
    pub indices: Vec<usize>,
    /// Euclidean distance in scene units; infinite when the target is empty.
    pub distances: Vec<f64>,
}

impl MatchResult {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Nearest target center for every source center.
pub fn knn_match_points(source: &[[f64; 3]], target: &[[f64; 3]], exec: Exec) -> MatchResult {
    if target.is_empty() {
        return MatchResult {
            indices: vec![usize::MAX; source.len()],
            distances: vec![f64::INFINITY; source.len()],
        };
    }
    let tree = KdTree::new(target);
    let found = exec.map(source.len(), |i| tree.nearest(&source[i]).unwrap());
    MatchResult {
        indices: found.iter().map(|f| f.0).collect(),
        distances: found.iter().map(|f| f.1.sqrt()).collect(),
    }
}

pub fn knn_match(source: &GaussianField, target: &GaussianField, exec: Exec) -> MatchResult {
    knn_match_points(&source.positions, &target.positions, exec)
}

/// `true` where the match distance strictly exceeds `tau`.
pub fn nonmatching_mask(m: &MatchResult, tau: f64) -> Vec<bool> {
    m.distances.iter().map(|&d| d > tau).collect()
}
