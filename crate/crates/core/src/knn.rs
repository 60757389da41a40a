//! Exact k-nearest-neighbor search.
//!
//! Results are ordered by `(distance, point id)`, so equal distances resolve
//! to the lower id and every query is reproducible regardless of how the
//! index is laid out internally. Low-dimensional data is searched through a
//! KD-tree with per-node bounding boxes; above [`KD_TREE_MAX_DIM`] dimensions
//! the index falls back to a linear scan, where a tree stops paying off.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::ArrayView2;

use crate::error::{BiknnError, Result};
use crate::metric::PNorm;

pub const KD_TREE_MAX_DIM: usize = 16;
const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStrategy {
    /// Pick by dimensionality.
    Auto,
    KdTree,
    Linear,
}

#[derive(Debug, Clone)]
struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    /// Range into the permuted id array.
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct NeighborIndex {
    data: Vec<f64>,
    n: usize,
    d: usize,
    p: PNorm,
    /// Point ids in tree order; empty for a linear index.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl NeighborIndex {
    pub fn build(points: ArrayView2<'_, f64>, p: PNorm) -> Result<Self> {
        Self::build_with(points, p, SearchStrategy::Auto)
    }

    pub fn build_with(
        points: ArrayView2<'_, f64>,
        p: PNorm,
        strategy: SearchStrategy,
    ) -> Result<Self> {
        let (n, d) = points.dim();
        if n == 0 || d == 0 {
            return Err(BiknnError::Empty("cannot index an empty point set"));
        }
        let data: Vec<f64> = points.iter().copied().collect();
        let use_tree = match strategy {
            SearchStrategy::Auto => d <= KD_TREE_MAX_DIM && n > LEAF_SIZE,
            SearchStrategy::KdTree => true,
            SearchStrategy::Linear => false,
        };
        let mut index = Self {
            data,
            n,
            d,
            p,
            order: Vec::new(),
            nodes: Vec::new(),
        };
        if use_tree {
            index.order = (0..n).collect();
            let mut order = std::mem::take(&mut index.order);
            index.build_node(&mut order, 0);
            index.order = order;
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> PNorm {
        self.p
    }

    pub fn point(&self, id: usize) -> &[f64] {
        &self.data[id * self.d..(id + 1) * self.d]
    }

    pub fn points(&self) -> &[f64] {
        &self.data
    }

    fn build_node(&mut self, ids: &mut [usize], offset: usize) -> usize {
        let d = self.d;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &id in ids.iter() {
            for (j, &v) in self.point(id).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let slot = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            kind: NodeKind::Leaf {
                start: offset,
                end: offset + ids.len(),
            },
        });
        if ids.len() <= LEAF_SIZE {
            return slot;
        }
        let node = &self.nodes[slot];
        let (axis, spread) = (0..d).map(|j| (j, node.hi[j] - node.lo[j])).fold(
            (0, f64::NEG_INFINITY),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );
        if spread.is_nan() || spread <= 0.0 {
            // All points identical: nothing to split on.
            return slot;
        }
        let mid = ids.len() / 2;
        let data = &self.data;
        ids.select_nth_unstable_by(mid, |&a, &b| {
            data[a * d + axis]
                .total_cmp(&data[b * d + axis])
                .then(a.cmp(&b))
        });
        let (left_ids, right_ids) = ids.split_at_mut(mid);
        let left = self.build_node(left_ids, offset);
        let right = self.build_node(right_ids, offset + mid);
        self.nodes[slot].kind = NodeKind::Split { left, right };
        slot
    }

    fn check_query(&self, x: &[f64], k: usize, available: usize) -> Result<()> {
        if x.len() != self.d {
            return Err(BiknnError::DimensionMismatch {
                expected: self.d,
                actual: x.len(),
            });
        }
        if k == 0 || k > available {
            return Err(BiknnError::KOutOfRange { k, max: available });
        }
        Ok(())
    }

    /// The `k` nearest stored points to `x`, ascending by `(distance, id)`.
    ///
    /// With `exclude_self`, one zero-distance point (the lowest id among exact
    /// copies of `x`) is dropped from the result, and `k` may be at most `n - 1`.
    pub fn query(&self, x: &[f64], k: usize, exclude_self: bool) -> Result<Vec<Neighbor>> {
        if !exclude_self {
            self.check_query(x, k, self.n)?;
            return Ok(self.search(x, k, None));
        }
        self.check_query(x, k, self.n - 1)?;
        let mut out = self.search(x, k + 1, None);
        if out[0].distance == 0.0 {
            out.remove(0);
        } else {
            out.pop();
        }
        Ok(out)
    }

    /// The `k` nearest neighbors of stored point `id`, never returning `id` itself.
    pub fn query_excluding(&self, id: usize, k: usize) -> Result<Vec<Neighbor>> {
        if id >= self.n {
            return Err(BiknnError::InvalidParameter(format!(
                "point id {id} out of range for an index of {} points",
                self.n
            )));
        }
        let x = self.point(id);
        self.check_query(x, k, self.n - 1)?;
        Ok(self.search(x, k, Some(id)))
    }

    fn search(&self, x: &[f64], k: usize, skip: Option<usize>) -> Vec<Neighbor> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if self.nodes.is_empty() {
            for id in 0..self.n {
                if Some(id) != skip {
                    self.offer(&mut heap, k, id, x);
                }
            }
        } else {
            self.search_node(0, x, k, skip, &mut heap);
        }
        heap.into_sorted_vec()
    }

    #[inline]
    fn offer(&self, heap: &mut BinaryHeap<Neighbor>, k: usize, id: usize, x: &[f64]) {
        let cand = Neighbor {
            id,
            distance: self.p.distance(x, self.point(id)),
        };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("k >= 1") {
            heap.pop();
            heap.push(cand);
        }
    }

    fn search_node(
        &self,
        slot: usize,
        x: &[f64],
        k: usize,
        skip: Option<usize>,
        heap: &mut BinaryHeap<Neighbor>,
    ) {
        match self.nodes[slot].kind {
            NodeKind::Leaf { start, end } => {
                for &id in &self.order[start..end] {
                    if Some(id) != skip {
                        self.offer(heap, k, id, x);
                    }
                }
            }
            NodeKind::Split { left, right } => {
                let dl = self.box_distance(left, x);
                let dr = self.box_distance(right, x);
                let (first, second, d2) = if dl <= dr {
                    (left, right, dr)
                } else {
                    (right, left, dl)
                };
                self.search_node(first, x, k, skip, heap);
                // Equal bounds may still hide a lower-id tie, so only prune on strict excess.
                if heap.len() < k || d2 <= heap.peek().expect("non-empty").distance {
                    self.search_node(second, x, k, skip, heap);
                }
            }
        }
    }

    /// Lower bound on the distance from `x` to any point inside a node's box.
    fn box_distance(&self, slot: usize, x: &[f64]) -> f64 {
        let node = &self.nodes[slot];
        self.p.norm(
            x.iter()
                .zip(node.lo.iter().zip(&node.hi))
                .map(|(&v, (&lo, &hi))| {
                    if v < lo {
                        lo - v
                    } else if v > hi {
                        v - hi
                    } else {
                        0.0
                    }
                }),
        )
    }
}
