//! Greedy graph-based over-segmentation on the 4-connected pixel grid,
//! following the merging predicate of Felzenszwalb and Huttenlocher: two
//! components join when the edge between them is no heavier than the
//! internal difference of either side plus a scale term `k / |C|`.

use crate::imaging::{GrayImage, RegionMask};

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    /// Heaviest edge merged inside each component so far.
    internal: Vec<f32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), size: vec![1; n], internal: vec![0.0; n] }
    }

    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            let up = self.parent[self.parent[i as usize] as usize];
            self.parent[i as usize] = up;
            i = up;
        }
        i
    }

    fn union(&mut self, a: u32, b: u32, w: f32) -> u32 {
        let (big, small) = if self.size[a as usize] >= self.size[b as usize] { (a, b) } else { (b, a) };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        self.internal[big as usize] = self.internal[big as usize].max(self.internal[small as usize]).max(w);
        big
    }
}

/// Segments at one scale `k`; returns one mask per component. Components
/// smaller than `min_size` are merged into a neighbor afterwards.
pub fn segment_at_scale(img: &GrayImage, k: f32, min_size: usize) -> Vec<RegionMask> {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    // horizontal then vertical edges, row-major; stable sort keeps this
    // construction order for equal weights, so the result is deterministic
    let mut edges: Vec<(f32, u32, u32)> = Vec::with_capacity(2 * n);
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as u32;
            let v = img.get(x, y);
            if x + 1 < w {
                edges.push(((v - img.get(x + 1, y)).abs(), i, i + 1));
            }
            if y + 1 < h {
                edges.push(((v - img.get(x, y + 1)).abs(), i, i + w as u32));
            }
        }
    }
    edges.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut uf = UnionFind::new(n);
    for &(wgt, a, b) in &edges {
        let ra = uf.find(a);
        let rb = uf.find(b);
        if ra == rb {
            continue;
        }
        let ta = uf.internal[ra as usize] + k / uf.size[ra as usize] as f32;
        let tb = uf.internal[rb as usize] + k / uf.size[rb as usize] as f32;
        if wgt <= ta.min(tb) {
            uf.union(ra, rb, wgt);
        }
    }
    // absorb undersized components along the same edge order
    for &(wgt, a, b) in &edges {
        let ra = uf.find(a);
        let rb = uf.find(b);
        if ra != rb
            && ((uf.size[ra as usize] as usize) < min_size
                || (uf.size[rb as usize] as usize) < min_size)
        {
            uf.union(ra, rb, wgt);
        }
    }

    let mut root_to_mask: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    let mut masks: Vec<RegionMask> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let root = uf.find((y * w + x) as u32);
            let idx = *root_to_mask.entry(root).or_insert_with(|| {
                masks.push(RegionMask::empty(w, h));
                masks.len() - 1
            });
            masks[idx].insert(x, y);
        }
    }
    masks
}
