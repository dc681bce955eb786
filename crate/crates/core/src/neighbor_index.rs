//! Exact k-nearest-neighbor radius queries. A balanced median-split kd-tree
//! answers queries; a brute-force scan with the identical distance loop and
//! tie order serves as the correctness oracle. Ties in distance are broken
//! by ascending sample index, the radius is the k-th order statistic of the
//! point-to-query distances (closed-ball convention), and squared distances
//! are compared internally with a single square root at the end.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

pub const DEFAULT_LEAF_SIZE: usize = 16;

/// n observation points in R^p with optional scalar responses.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    xs: Vec<f64>,
    ys: Option<Vec<f64>>,
    n: usize,
    p: usize,
}

impl SampleSet {
    /// Builds from a flat row-major coordinate buffer of length n*p.
    pub fn from_flat(xs: Vec<f64>, p: usize, ys: Option<Vec<f64>>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidData("dimension p must be at least 1".into()));
        }
        if xs.is_empty() || xs.len() % p != 0 {
            return Err(Error::InvalidData(format!(
                "coordinate buffer length {} is not a positive multiple of p = {p}",
                xs.len()
            )));
        }
        let n = xs.len() / p;
        if xs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("coordinates must be finite".into()));
        }
        if let Some(ys) = &ys {
            if ys.len() != n {
                return Err(Error::InvalidData(format!(
                    "response length {} does not match sample count {n}",
                    ys.len()
                )));
            }
            if ys.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData("responses must be finite".into()));
            }
        }
        Ok(SampleSet { xs, ys, n, p })
    }

    pub fn from_rows(rows: &[Vec<f64>], ys: Option<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidData("sample set must be nonempty".into()));
        }
        let p = rows[0].len();
        let mut xs = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidData(format!(
                    "row {i} has {} coordinates, expected {p}",
                    row.len()
                )));
            }
            xs.extend_from_slice(row);
        }
        Self::from_flat(xs, p, ys)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dimension(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.xs[i * self.p..(i + 1) * self.p]
    }

    pub fn responses(&self) -> Option<&[f64]> {
        self.ys.as_deref()
    }

    pub fn has_responses(&self) -> bool {
        self.ys.is_some()
    }

    /// Axis-aligned bounding box of the points, `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.row(0).to_vec();
        let mut hi = lo.clone();
        for i in 1..self.n {
            for (j, &v) in self.row(i).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        (lo, hi)
    }

    /// Diagonal length of the bounding box, used as the data-diameter scale.
    pub fn bounding_diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        lo.iter()
            .zip(&hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    /// Writes the CSV form: header `x1,...,xp[,y]`, one row per observation.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 1..=self.p {
            if j > 1 {
                out.push(',');
            }
            let _ = write!(out, "x{j}");
        }
        if self.ys.is_some() {
            out.push_str(",y");
        }
        out.push('\n');
        for i in 0..self.n {
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            if let Some(ys) = &self.ys {
                let _ = write!(out, ",{}", ys[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Parses the CSV form produced by [`SampleSet::to_csv`].
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidData("empty CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let has_y = cols.last() == Some(&"y");
        let p = if has_y { cols.len() - 1 } else { cols.len() };
        if p == 0 {
            return Err(Error::InvalidData("CSV header has no coordinate columns".into()));
        }
        for (j, col) in cols.iter().take(p).enumerate() {
            let expected = format!("x{}", j + 1);
            if *col != expected {
                return Err(Error::InvalidData(format!(
                    "CSV header column {} is '{col}', expected '{expected}'",
                    j + 1
                )));
            }
        }
        let mut xs = Vec::new();
        let mut ys = if has_y { Some(Vec::new()) } else { None };
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::InvalidData(format!(
                    "CSV row {} has {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    cols.len()
                )));
            }
            for field in fields.iter().take(p) {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidData(format!(
                        "CSV row {}: cannot parse '{field}' as a number",
                        lineno + 2
                    ))
                })?;
                xs.push(v);
            }
            if let Some(ys) = ys.as_mut() {
                let v: f64 = fields[p].trim().parse().map_err(|_| {
                    Error::InvalidData(format!(
                        "CSV row {}: cannot parse '{}' as a number",
                        lineno + 2,
                        fields[p]
                    ))
                })?;
                ys.push(v);
            }
        }
        Self::from_flat(xs, p, ys)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }
}

/// k-th nearest neighbor query result.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusResult {
    /// Distance to the k-th nearest sample point: at least k points lie
    /// within the closed ball of this radius and at most k-1 strictly inside.
    pub radius: f64,
    /// The first k sample indices in (distance, index) order.
    pub neighbor_ids: Vec<usize>,
}

#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..a.len() {
        let d = a[j] - b[j];
        s += d * d;
    }
    s
}

/// Max-heap entry ordered lexicographically by (squared distance, index), so
/// the heap top is the current worst candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    idx: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
struct Node {
    split_dim: u32,
    split_val: f64,
    /// Child node ids; `u32::MAX` marks a leaf.
    left: u32,
    right: u32,
    /// Permutation range covered by a leaf.
    start: u32,
    end: u32,
}

const NO_CHILD: u32 = u32::MAX;

/// Immutable exact-kNN index over a [`SampleSet`].
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    data: Arc<SampleSet>,
    nodes: Vec<Node>,
    perm: Vec<u32>,
    root: u32,
    leaf_size: usize,
    bbox_lo: Vec<f64>,
    bbox_hi: Vec<f64>,
}

/// Builds a balanced kd-tree. Median splits use the total order
/// (coordinate, index), so construction is deterministic for any input,
/// duplicates included.
pub fn build_index(data: Arc<SampleSet>, leaf_size: usize) -> Result<NeighborIndex> {
    if leaf_size == 0 {
        return Err(Error::InvalidConfig("leaf_size must be at least 1".into()));
    }
    let n = data.len();
    let (bbox_lo, bbox_hi) = data.bounding_box();
    let mut perm: Vec<u32> = (0..n as u32).collect();
    let mut nodes = Vec::new();
    let root = build_node(&data, &mut nodes, &mut perm, 0, n, leaf_size);
    Ok(NeighborIndex {
        data,
        nodes,
        perm,
        root,
        leaf_size,
        bbox_lo,
        bbox_hi,
    })
}

fn build_node(
    data: &SampleSet,
    nodes: &mut Vec<Node>,
    perm: &mut [u32],
    start: usize,
    end: usize,
    leaf_size: usize,
) -> u32 {
    let len = end - start;
    let make_leaf = |nodes: &mut Vec<Node>| -> u32 {
        nodes.push(Node {
            split_dim: 0,
            split_val: 0.0,
            left: NO_CHILD,
            right: NO_CHILD,
            start: start as u32,
            end: end as u32,
        });
        (nodes.len() - 1) as u32
    };
    if len <= leaf_size {
        return make_leaf(nodes);
    }
    // Split along the axis with the widest extent; ties take the lowest axis.
    let p = data.dimension();
    let mut best_dim = 0;
    let mut best_extent = -1.0;
    for j in 0..p {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in &perm[start..end] {
            let v = data.row(i as usize)[j];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let extent = hi - lo;
        if extent > best_extent {
            best_extent = extent;
            best_dim = j;
        }
    }
    if best_extent == 0.0 {
        // Every point in the range is identical; splitting cannot help.
        return make_leaf(nodes);
    }
    let mid = len / 2;
    perm[start..end].select_nth_unstable_by(mid, |&a, &b| {
        data.row(a as usize)[best_dim]
            .total_cmp(&data.row(b as usize)[best_dim])
            .then(a.cmp(&b))
    });
    let split_val = data.row(perm[start + mid] as usize)[best_dim];
    let id = {
        nodes.push(Node {
            split_dim: best_dim as u32,
            split_val,
            left: NO_CHILD,
            right: NO_CHILD,
            start: start as u32,
            end: end as u32,
        });
        (nodes.len() - 1) as u32
    };
    let left = build_node(data, nodes, perm, start, start + mid, leaf_size);
    let right = build_node(data, nodes, perm, start + mid, end, leaf_size);
    nodes[id as usize].left = left;
    nodes[id as usize].right = right;
    id
}

impl NeighborIndex {
    pub fn sample_set(&self) -> &Arc<SampleSet> {
        &self.data
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn bounding_box(&self) -> (&[f64], &[f64]) {
        (&self.bbox_lo, &self.bbox_hi)
    }

    pub fn bounding_diameter(&self) -> f64 {
        self.bbox_lo
            .iter()
            .zip(&self.bbox_hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    /// Distance to the k-th nearest sample point and the k neighbor ids in
    /// (distance, index) order. A zero radius surfaces as `DegenerateRadius`.
    pub fn knn_radius(&self, x: &[f64], k: usize) -> Result<RadiusResult> {
        validate_query(&self.data, x, k)?;
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(self.root, x, k, &mut heap);
        finish_heap(heap, k)
    }

    fn search(&self, node_id: u32, x: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        let node = &self.nodes[node_id as usize];
        if node.left == NO_CHILD {
            for &i in &self.perm[node.start as usize..node.end as usize] {
                let d2 = dist_sq(self.data.row(i as usize), x);
                push_candidate(heap, k, Candidate { d2, idx: i });
            }
            return;
        }
        let dim = node.split_dim as usize;
        let delta = x[dim] - node.split_val;
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.search(near, x, k, heap);
        // Visit the far side unless every point there is strictly worse than
        // the current k-th candidate. Equality descends: an equidistant point
        // with a smaller index still displaces the heap top.
        let plane_d2 = delta * delta;
        if heap.len() < k || plane_d2 <= heap.peek().map_or(f64::INFINITY, |c| c.d2) {
            self.search(far, x, k, heap);
        }
    }
}

#[inline]
fn push_candidate(heap: &mut BinaryHeap<Candidate>, k: usize, c: Candidate) {
    if heap.len() < k {
        heap.push(c);
    } else if let Some(&top) = heap.peek() {
        if c < top {
            heap.pop();
            heap.push(c);
        }
    }
}

fn validate_query(data: &SampleSet, x: &[f64], k: usize) -> Result<()> {
    if x.len() != data.dimension() {
        return Err(Error::DimensionMismatch {
            expected: data.dimension(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("query point must be finite".into()));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if k > data.len() {
        return Err(Error::NotEnoughPoints { k, n: data.len() });
    }
    Ok(())
}

fn finish_heap(heap: BinaryHeap<Candidate>, k: usize) -> Result<RadiusResult> {
    debug_assert_eq!(heap.len(), k);
    let mut items = heap.into_vec();
    items.sort_unstable();
    let radius_sq = items[k - 1].d2;
    if radius_sq == 0.0 {
        return Err(Error::DegenerateRadius { radius: 0.0 });
    }
    Ok(RadiusResult {
        radius: radius_sq.sqrt(),
        neighbor_ids: items.into_iter().map(|c| c.idx as usize).collect(),
    })
}

/// O(n) distance scan with the same distance loop, tie order, and degenerate
/// handling as [`NeighborIndex::knn_radius`]. This is the correctness oracle.
pub fn knn_radius_bruteforce(data: &SampleSet, x: &[f64], k: usize) -> Result<RadiusResult> {
    validate_query(data, x, k)?;
    let mut all: Vec<Candidate> = (0..data.len())
        .map(|i| Candidate {
            d2: dist_sq(data.row(i), x),
            idx: i as u32,
        })
        .collect();
    all.sort_unstable();
    let radius_sq = all[k - 1].d2;
    if radius_sq == 0.0 {
        return Err(Error::DegenerateRadius { radius: 0.0 });
    }
    Ok(RadiusResult {
        radius: radius_sq.sqrt(),
        neighbor_ids: all[..k].iter().map(|c| c.idx as usize).collect(),
    })
}
