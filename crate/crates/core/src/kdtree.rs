//! Exact k-nearest-neighbour distances with a static kd-tree.
//!
//! Only distances are reported, never neighbour identities, so ties between
//! equidistant points cannot change an answer. Squared distances are
//! computed with [`sq_dist`], the same kernel the brute-force path uses,
//! which makes the two backends agree bit-for-bit.

const LEAF_SIZE: usize = 16;

/// Squared Euclidean distance, summed left to right.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| {
        let d = x - y;
        acc + d * d
    })
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

#[derive(Clone, Debug)]
pub struct KdTree {
    dim: usize,
    /// Points permuted into leaf order, row-major.
    points: Vec<f64>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[f64], dim: usize) -> Self {
        assert!(dim > 0 && points.len().is_multiple_of(dim));
        let n = points.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::new();
        if n > 0 {
            build_node(points, dim, &mut order, 0, &mut nodes);
        }
        let mut permuted = Vec::with_capacity(points.len());
        for &i in &order {
            permuted.extend_from_slice(&points[i * dim..(i + 1) * dim]);
        }
        Self {
            dim,
            points: permuted,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Squared distance to the `k`-th nearest point (with multiplicity).
    /// Returns `None` when the tree holds fewer than `k` points.
    pub fn kth_sq_dist(&self, query: &[f64], k: usize) -> Option<f64> {
        if k == 0 || k > self.len() {
            return None;
        }
        let mut best = Best::new(k);
        self.search(0, query, &mut best);
        Some(best.worst())
    }

    fn search(&self, node: usize, q: &[f64], best: &mut Best) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    best.offer(sq_dist(q, self.point(i)));
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // every point across the plane is at least |diff| away along `dim`
                if !best.is_full() || diff * diff <= best.worst() {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build_node(points: &[f64], dim: usize, order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    let n = order.len();
    nodes.push(Node::Leaf {
        start: offset,
        end: offset + n,
    });
    if n <= LEAF_SIZE {
        return id;
    }
    let coord = |i: usize, d: usize| points[i * dim + d];
    let (split_dim, spread) = (0..dim)
        .map(|d| {
            let (lo, hi) = order.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(coord(i, d)), hi.max(coord(i, d)))
            });
            (d, hi - lo)
        })
        .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if !(spread > 0.0) {
        // all points coincide
        return id;
    }
    let mid = n / 2;
    order.select_nth_unstable_by(mid, |&a, &b| coord(a, split_dim).total_cmp(&coord(b, split_dim)));
    // left holds coordinates <= value, right holds coordinates >= value
    let value = coord(order[mid], split_dim);
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(points, dim, lo, offset, nodes);
    let right = build_node(points, dim, hi, offset + mid, nodes);
    nodes[id] = Node::Split {
        dim: split_dim,
        value,
        left,
        right,
    };
    id
}

/// The `k` smallest values seen so far, kept sorted ascending.
struct Best {
    k: usize,
    vals: Vec<f64>,
}

impl Best {
    fn new(k: usize) -> Self {
        Self {
            k,
            vals: Vec::with_capacity(k + 1),
        }
    }

    fn is_full(&self) -> bool {
        self.vals.len() == self.k
    }

    fn worst(&self) -> f64 {
        *self.vals.last().expect("non-empty")
    }

    fn offer(&mut self, v: f64) {
        if self.is_full() && v >= self.worst() {
            return;
        }
        let pos = self.vals.partition_point(|&x| x <= v);
        self.vals.insert(pos, v);
        self.vals.truncate(self.k);
    }
}
