//! kd-tree over fixed-dimension `f64` points with exact and
//! epsilon-approximate nearest-neighbor search.
//!
//! Exact queries return the true L2 nearest neighbor; a tie on distance is
//! broken by the lowest point id, matching a linear scan with the same rule.

/// Search quality. `Approximate(eps)` may return a neighbor up to
/// `(1 + eps)` times farther than the true nearest one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchMode {
    Exact,
    Approximate(f64),
}

#[derive(Debug, Clone)]
enum Node {
    Split { dim: usize, value: f64, left: Box<Node>, right: Box<Node> },
    Leaf { ids: Vec<u32> },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    points: Vec<f64>, // len = n * dim
    root: Option<Node>,
}

const LEAF_SIZE: usize = 16;

impl KdTree {
    /// Builds over `n` points stored row-major in `points` (`n * dim` values).
    pub fn build(dim: usize, points: Vec<f64>) -> Self {
        assert!(dim > 0 && points.len() % dim == 0);
        let n = points.len() / dim;
        let mut ids: Vec<u32> = (0..n as u32).collect();
        let root = if n == 0 {
            None
        } else {
            Some(Self::build_node(dim, &points, &mut ids))
        };
        KdTree { dim, points, root }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, id: u32) -> &[f64] {
        let i = id as usize * self.dim;
        &self.points[i..i + self.dim]
    }

    fn build_node(dim: usize, points: &[f64], ids: &mut [u32]) -> Node {
        if ids.len() <= LEAF_SIZE {
            let mut v = ids.to_vec();
            v.sort_unstable();
            return Node::Leaf { ids: v };
        }
        // split along the dimension with the largest spread
        let mut best_dim = 0;
        let mut best_spread = -1.0;
        for d in 0..dim {
            let mut lo = f64::MAX;
            let mut hi = f64::MIN;
            for &id in ids.iter() {
                let v = points[id as usize * dim + d];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let spread = hi - lo;
            if spread > best_spread {
                best_spread = spread;
                best_dim = d;
            }
        }
        if best_spread <= 0.0 {
            // all points identical: no useful split
            let mut v = ids.to_vec();
            v.sort_unstable();
            return Node::Leaf { ids: v };
        }
        let mid = ids.len() / 2;
        ids.select_nth_unstable_by(mid, |a, b| {
            let va = points[*a as usize * dim + best_dim];
            let vb = points[*b as usize * dim + best_dim];
            va.partial_cmp(&vb).unwrap().then(a.cmp(b))
        });
        let split_value = points[ids[mid] as usize * dim + best_dim];
        let (left_ids, right_ids) = ids.split_at_mut(mid);
        Node::Split {
            dim: best_dim,
            value: split_value,
            left: Box::new(Self::build_node(dim, points, left_ids)),
            right: Box::new(Self::build_node(dim, points, right_ids)),
        }
    }

    /// Nearest neighbor of `query`; `None` when the tree is empty or every
    /// point is rejected by `filter`.
    pub fn nearest_filtered(
        &self,
        query: &[f64],
        mode: SearchMode,
        filter: impl Fn(u32) -> bool,
    ) -> Option<(u32, f64)> {
        assert_eq!(query.len(), self.dim);
        let root = self.root.as_ref()?;
        let mut best: Option<(f64, u32)> = None;
        let scale = match mode {
            SearchMode::Exact => 1.0,
            SearchMode::Approximate(eps) => {
                let f = 1.0 + eps.max(0.0);
                1.0 / (f * f)
            }
        };
        self.search(root, query, scale, &filter, &mut best);
        best.map(|(d2, id)| (id, d2.sqrt()))
    }

    pub fn nearest(&self, query: &[f64], mode: SearchMode) -> Option<(u32, f64)> {
        self.nearest_filtered(query, mode, |_| true)
    }

    fn search(
        &self,
        node: &Node,
        query: &[f64],
        prune_scale: f64,
        filter: &impl Fn(u32) -> bool,
        best: &mut Option<(f64, u32)>,
    ) {
        match node {
            Node::Leaf { ids } => {
                for &id in ids {
                    if !filter(id) {
                        continue;
                    }
                    let d2 = self.dist_sq_bounded(id, query, best.map_or(f64::MAX, |b| b.0));
                    let cand = (d2, id);
                    if best.is_none() || cand < best.unwrap() {
                        *best = Some(cand);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = query[*dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, prune_scale, filter, best);
                // visit the far side unless every point there is strictly
                // worse than the current best under the pruning scale
                let plane_d2 = diff * diff;
                let visit = match best {
                    None => true,
                    Some((best_d2, _)) => plane_d2 <= *best_d2 * prune_scale,
                };
                if visit {
                    self.search(far, query, prune_scale, filter, best);
                }
            }
        }
    }

    #[inline]
    fn dist_sq_bounded(&self, id: u32, query: &[f64], bound: f64) -> f64 {
        let p = self.point(id);
        let mut acc = 0.0;
        for (chunk_p, chunk_q) in p.chunks(16).zip(query.chunks(16)) {
            for (a, b) in chunk_p.iter().zip(chunk_q) {
                let d = a - b;
                acc += d * d;
            }
            if acc > bound {
                return acc;
            }
        }
        acc
    }

    fn dist_sq(&self, id: u32, query: &[f64]) -> f64 {
        self.dist_sq_bounded(id, query, f64::MAX)
    }

    /// Exact k nearest neighbors, ascending by `(distance, id)`.
    pub fn knn(&self, query: &[f64], k: usize) -> Vec<(u32, f64)> {
        assert_eq!(query.len(), self.dim);
        if k == 0 || self.root.is_none() {
            return Vec::new();
        }
        let mut heap: Vec<(f64, u32)> = Vec::with_capacity(k + 1); // kept sorted ascending
        self.knn_search(self.root.as_ref().unwrap(), query, k, &mut heap);
        heap.into_iter().map(|(d2, id)| (id, d2.sqrt())).collect()
    }

    fn knn_search(&self, node: &Node, query: &[f64], k: usize, heap: &mut Vec<(f64, u32)>) {
        match node {
            Node::Leaf { ids } => {
                for &id in ids {
                    let d2 = self.dist_sq(id, query);
                    let cand = (d2, id);
                    if heap.len() < k {
                        let pos = heap.partition_point(|e| *e < cand);
                        heap.insert(pos, cand);
                    } else if cand < *heap.last().unwrap() {
                        let pos = heap.partition_point(|e| *e < cand);
                        heap.insert(pos, cand);
                        heap.pop();
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = query[*dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_search(near, query, k, heap);
                let visit = heap.len() < k || diff * diff <= heap.last().unwrap().0;
                if visit {
                    self.knn_search(far, query, k, heap);
                }
            }
        }
    }
}

/// Linear-scan nearest neighbor with the same `(distance, id)` ordering as
/// the tree; the test oracle for exact mode.
pub fn linear_scan_nearest(dim: usize, points: &[f64], query: &[f64]) -> Option<(u32, f64)> {
    let n = points.len() / dim;
    let mut best: Option<(f64, u32)> = None;
    for id in 0..n {
        let p = &points[id * dim..(id + 1) * dim];
        let d2: f64 = p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        let cand = (d2, id as u32);
        if best.is_none() || cand < best.unwrap() {
            best = Some(cand);
        }
    }
    best.map(|(d2, id)| (id, d2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn exact_matches_linear_scan() {
        let dim = 16;
        let pts = random_points(300, dim, 1);
        let tree = KdTree::build(dim, pts.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = tree.nearest(&q, SearchMode::Exact).unwrap();
            let want = linear_scan_nearest(dim, &pts, &q).unwrap();
            assert_eq!(got.0, want.0);
            assert!((got.1 - want.1).abs() < 1e-12);
        }
    }

    #[test]
    fn stored_point_query_returns_it_at_zero_distance() {
        let dim = 8;
        let pts = random_points(50, dim, 3);
        let tree = KdTree::build(dim, pts.clone());
        for id in 0..50u32 {
            let q = tree.point(id).to_vec();
            let (got, d) = tree.nearest(&q, SearchMode::Exact).unwrap();
            assert_eq!(got, id);
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn duplicate_points_tie_break_by_lowest_id() {
        let dim = 4;
        let mut pts = random_points(10, dim, 4);
        // make points 3, 7 duplicates of point 1
        for d in 0..dim {
            pts[3 * dim + d] = pts[dim + d];
            pts[7 * dim + d] = pts[dim + d];
        }
        let tree = KdTree::build(dim, pts.clone());
        let q = pts[dim..2 * dim].to_vec();
        let (id, d) = tree.nearest(&q, SearchMode::Exact).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(id, 1);
        assert_eq!(linear_scan_nearest(dim, &pts, &q).unwrap().0, 1);
    }

    #[test]
    fn approximate_is_within_quality_bound() {
        let dim = 12;
        let pts = random_points(500, dim, 5);
        let tree = KdTree::build(dim, pts.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let eps = 0.5;
        for _ in 0..100 {
            let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let approx = tree.nearest(&q, SearchMode::Approximate(eps)).unwrap();
            let exact = linear_scan_nearest(dim, &pts, &q).unwrap();
            assert!(approx.1 <= exact.1 * (1.0 + eps) + 1e-12);
        }
    }

    #[test]
    fn filtered_query_skips_excluded_ids() {
        let dim = 4;
        let pts = random_points(40, dim, 7);
        let tree = KdTree::build(dim, pts.clone());
        let q = tree.point(5).to_vec();
        let (id, _) = tree
            .nearest_filtered(&q, SearchMode::Exact, |i| i != 5)
            .unwrap();
        assert_ne!(id, 5);
        // the filtered result is the best among the remaining points
        let mut best: Option<(f64, u32)> = None;
        for i in 0..40u32 {
            if i == 5 {
                continue;
            }
            let d2: f64 = tree.point(i).iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
            let cand = (d2, i);
            if best.map_or(true, |b| cand < b) {
                best = Some(cand);
            }
        }
        assert_eq!(id, best.unwrap().1);
    }

    #[test]
    fn knn_is_sorted_and_matches_brute_force() {
        let dim = 6;
        let pts = random_points(120, dim, 8);
        let tree = KdTree::build(dim, pts.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = tree.knn(&q, 7);
            let mut all: Vec<(f64, u32)> = (0..120u32)
                .map(|i| {
                    let d2: f64 =
                        tree.point(i).iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d2, i)
                })
                .collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (g, w) in got.iter().zip(all.iter().take(7)) {
                assert_eq!(g.0, w.1);
            }
            assert!(got.windows(2).all(|w| w[0].1 <= w[1].1));
        }
    }

    #[test]
    fn empty_tree_returns_none() {
        let tree = KdTree::build(3, Vec::new());
        assert!(tree.nearest(&[0.0, 0.0, 0.0], SearchMode::Exact).is_none());
    }
}
