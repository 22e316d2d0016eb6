//! Binary-indexed priority tree for proportional sampling.
//!
//! A complete binary tree stored as an array: internal nodes hold the sum of
//! their children, leaves hold per-slot priority mass, and the root holds the
//! total. `find_prefix` descends in O(log n) to the leaf covering a prefix
//! sum. A parallel max-tree answers "largest current leaf" in O(1), which PER
//! uses to priority-boost fresh transitions.
//!
//! Incremental updates drift by at most a few ulps; the internal sums are
//! rebuilt exactly from the leaves every `REBUILD_INTERVAL` updates.

const REBUILD_INTERVAL: u64 = 4096;

#[derive(Debug, Clone)]
pub struct SumTree {
    capacity: usize,
    /// 2 * capacity - 1 nodes; leaves occupy the last `capacity` slots.
    nodes: Vec<f64>,
    max_nodes: Vec<f64>,
    sets_since_rebuild: u64,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        Self {
            capacity,
            nodes: vec![0.0; 2 * capacity - 1],
            max_nodes: vec![0.0; 2 * capacity - 1],
            sets_since_rebuild: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[0]
    }

    /// Largest leaf value currently stored.
    pub fn max_leaf(&self) -> f64 {
        self.max_nodes[0]
    }

    pub fn leaf(&self, idx: usize) -> f64 {
        self.nodes[self.capacity - 1 + idx]
    }

    pub fn leaves(&self) -> &[f64] {
        &self.nodes[self.capacity - 1..]
    }

    /// Set leaf `idx` to a non-negative mass and refresh the path to the root.
    pub fn set(&mut self, idx: usize, value: f64) {
        assert!(idx < self.capacity, "leaf index {idx} out of range");
        assert!(value >= 0.0 && value.is_finite(), "priority mass {value}");
        let mut node = self.capacity - 1 + idx;
        let delta = value - self.nodes[node];
        self.nodes[node] = value;
        self.max_nodes[node] = value;
        // Every internal node of the 2c-1 array has both children.
        while node > 0 {
            node = (node - 1) / 2;
            self.nodes[node] += delta;
            let left = 2 * node + 1;
            self.max_nodes[node] = self.max_nodes[left].max(self.max_nodes[left + 1]);
        }
        self.sets_since_rebuild += 1;
        if self.sets_since_rebuild >= REBUILD_INTERVAL {
            self.rebuild();
        }
    }

    /// Recompute every internal node exactly from the leaves.
    pub fn rebuild(&mut self) {
        for node in (0..self.capacity.saturating_sub(1)).rev() {
            let left = 2 * node + 1;
            self.nodes[node] = self.nodes[left] + self.nodes[left + 1];
            self.max_nodes[node] = self.max_nodes[left].max(self.max_nodes[left + 1]);
        }
        self.sets_since_rebuild = 0;
    }

    /// Leaf whose cumulative-mass interval covers `mass` (0 <= mass < total).
    pub fn find_prefix(&self, mass: f64) -> usize {
        let mut node = 0usize;
        let mut remaining = mass;
        loop {
            let left = 2 * node + 1;
            if left >= self.nodes.len() {
                return node - (self.capacity - 1);
            }
            let left_sum = self.nodes[left];
            // Zero right subtree: rounding can push `remaining` past the
            // populated mass; stay left rather than land on an empty leaf.
            if remaining < left_sum || self.nodes[left + 1] == 0.0 {
                node = left;
            } else {
                remaining -= left_sum;
                node = left + 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn root_tracks_sum_after_updates() {
        let mut tree = SumTree::new(2);
        tree.set(0, 1.0);
        tree.set(1, 1.0);
        assert_eq!(tree.total(), 2.0);
        tree.set(0, 4.0);
        assert_eq!(tree.total(), 5.0);
    }

    #[test]
    fn max_leaf_follows_updates_and_overwrites() {
        let mut tree = SumTree::new(4);
        tree.set(0, 1.0);
        tree.set(1, 5.0);
        assert_eq!(tree.max_leaf(), 5.0);
        tree.set(1, 0.5);
        assert_eq!(tree.max_leaf(), 1.0);
    }

    #[test]
    fn find_prefix_picks_the_covering_leaf() {
        // Power-of-two capacity puts every leaf at the same depth, so prefix
        // intervals line up with leaf-index order.
        let mut tree = SumTree::new(8);
        for (i, p) in [0.5, 0.2, 0.8, 0.3, 1.1].iter().enumerate() {
            tree.set(i, *p);
        }
        assert_eq!(tree.find_prefix(0.0), 0);
        assert_eq!(tree.find_prefix(0.49), 0);
        assert_eq!(tree.find_prefix(0.5), 1);
        assert_eq!(tree.find_prefix(0.69), 1);
        assert_eq!(tree.find_prefix(0.7), 2);
        assert_eq!(tree.find_prefix(1.5), 3);
        assert_eq!(tree.find_prefix(1.9), 4);
        assert_eq!(tree.find_prefix(2.89), 4);
    }

    #[test]
    fn find_prefix_mass_is_proportional_for_any_capacity() {
        // With a non-power-of-two capacity the leaf prefix intervals are
        // permuted, but each leaf still owns exactly its share of the mass.
        let values = [0.5, 0.2, 0.8, 0.3, 1.1];
        let mut tree = SumTree::new(5);
        for (i, p) in values.iter().enumerate() {
            tree.set(i, *p);
        }
        let total = tree.total();
        let mut rng = crate::rng::derive(11, crate::rng::Stream::Replay);
        let mut counts = [0u64; 5];
        let draws = 200_000;
        for _ in 0..draws {
            let mass: f64 = rng.random_range(0.0..total);
            counts[tree.find_prefix(mass)] += 1;
        }
        for (i, &v) in values.iter().enumerate() {
            let freq = counts[i] as f64 / draws as f64;
            let expect = v / total;
            assert!((freq - expect).abs() < 0.01, "leaf {i}: {freq} vs {expect}");
        }
    }

    #[test]
    fn find_prefix_skips_zero_mass_leaves() {
        let mut tree = SumTree::new(4);
        tree.set(1, 2.0);
        for i in 0..20 {
            let mass = i as f64 * 0.1;
            assert_eq!(tree.find_prefix(mass.min(1.999)), 1);
        }
    }

    #[test]
    fn root_stays_within_1e9_of_exact_sum_under_random_updates() {
        let mut tree = SumTree::new(37);
        let mut rng = crate::rng::derive(3, crate::rng::Stream::Replay);
        for _ in 0..1000 {
            let idx = rng.random_range(0..37usize);
            let p: f64 = rng.random_range(0.0..10.0);
            tree.set(idx, p);
            let exact: f64 = tree.leaves().iter().sum();
            assert!((tree.total() - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn rebuild_restores_exact_sums() {
        let mut tree = SumTree::new(9);
        let mut rng = crate::rng::derive(4, crate::rng::Stream::Replay);
        for _ in 0..500 {
            tree.set(rng.random_range(0..9usize), rng.random_range(0.0..1.0));
        }
        tree.rebuild();
        // Rebuild sums pairwise up the tree; a linear sum over the same
        // leaves can differ in the last ulps only.
        let exact: f64 = tree.leaves().iter().sum();
        assert!((tree.total() - exact).abs() < 1e-12);
    }
}
