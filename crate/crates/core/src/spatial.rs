//! Static kd-tree for k-nearest-neighbour queries over match coordinates.
//!
//! Results are ordered by `(squared distance, index)`, which makes them
//! identical to a brute-force sort regardless of how the tree was split.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::types::Point;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point>,
    /// Caller-visible index of each slot in `order`.
    order: Vec<usize>,
    nodes: Vec<Node>,
    dims: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl KdTree {
    /// Build over `points`; only the first `dims` coordinates are used.
    pub fn new(points: Vec<Point>, dims: usize) -> Self {
        assert!((1..=3).contains(&dims));
        let mut tree = Self {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
            dims,
        };
        if !tree.points.is_empty() {
            let n = tree.points.len();
            tree.build(0, n);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &Point {
        &self.points[index]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = self.widest_axis(start, end);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for d in 0..self.dims {
                lo[d] = lo[d].min(self.points[i][d]);
                hi[d] = hi[d].max(self.points[i][d]);
            }
        }
        (0..self.dims)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            .unwrap_or(0)
    }

    fn dist2(&self, a: &Point, b: &Point) -> f64 {
        (0..self.dims).map(|d| (a[d] - b[d]).powi(2)).sum()
    }

    /// The `k` nearest points to `query`, closest first.
    pub fn nearest(&self, query: &Point, k: usize) -> Vec<Neighbor> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        heap.into_sorted_vec()
            .into_iter()
            .map(|Candidate(dist2, index)| Neighbor { index, dist2 })
            .collect()
    }

    fn search(&self, node: usize, query: &Point, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate(self.dist2(query, &self.points[i]), i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if heap.peek().is_some_and(|worst| c < *worst) {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, heap);
                let bound = heap.peek().map_or(f64::INFINITY, |w| w.0);
                // `<=` keeps equal-distance candidates with smaller indices reachable.
                if heap.len() < k || diff * diff <= bound {
                    self.search(far, query, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[Point], q: &Point, k: usize, dims: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((0..dims).map(|d| (p[d] - q[d]).powi(2)).sum(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn empty_and_small_trees() {
        let t = KdTree::new(Vec::new(), 2);
        assert!(t.nearest(&Point::zeros(), 3).is_empty());
        let t = KdTree::new(vec![Point::new(1.0, 0.0, 0.0), Point::new(0.0, 0.5, 0.0)], 2);
        let n = t.nearest(&Point::zeros(), 5);
        assert_eq!(n.iter().map(|n| n.index).collect::<Vec<_>>(), vec![1, 0]);
        assert_eq!(n[0].dist2, 0.25);
    }

    #[test]
    fn duplicates_break_ties_by_index() {
        let pts = vec![Point::new(1.0, 1.0, 0.0); 40];
        let t = KdTree::new(pts, 2);
        let n = t.nearest(&Point::new(1.0, 1.0, 0.0), 5);
        assert_eq!(n.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            raw in prop::collection::vec((0i32..50, 0i32..50, 0i32..50), 1..200),
            q in (0i32..50, 0i32..50, 0i32..50),
            k in 1usize..30,
            dims in 2usize..4,
        ) {
            // Integer grid coordinates produce plenty of exact ties.
            let pts: Vec<Point> = raw
                .iter()
                .map(|&(x, y, z)| Point::new(x as f64, y as f64, if dims == 3 { z as f64 } else { 0.0 }))
                .collect();
            let query = Point::new(q.0 as f64, q.1 as f64, if dims == 3 { q.2 as f64 } else { 0.0 });
            let tree = KdTree::new(pts.clone(), dims);
            let got: Vec<usize> = tree.nearest(&query, k).into_iter().map(|n| n.index).collect();
            prop_assert_eq!(got, brute(&pts, &query, k, dims));
        }
    }
}
