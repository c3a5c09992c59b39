//! Network simplex for the balanced transportation problem.
//!
//! Nodes are the `m` sources followed by the `n` sinks; every source-sink
//! pair is an uncapacitated arc with id `i * n + j`. The basis is a spanning
//! tree of `m + n - 1` arcs, started from the northwest-corner rule.
//! Pricing is block search (most negative reduced cost within the first block
//! that has one); after a degenerate pivot it switches to Bland's rule
//! (lowest-id entering arc) until the next pivot that moves flow. Leaving-arc
//! ties always go to the lowest arc id.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    /// `(source, sink, flow)` for every basic arc with positive flow.
    pub flows: Vec<(usize, usize, f64)>,
}

struct Tree {
    parent: Vec<usize>,
    // basis slot of the arc joining a node to its parent
    parent_slot: Vec<usize>,
    depth: Vec<usize>,
    potential: Vec<f64>,
    adjacency: Vec<Vec<(usize, usize)>>,
    queue: VecDeque<usize>,
}

impl Tree {
    fn new(nodes: usize) -> Self {
        Self {
            parent: vec![usize::MAX; nodes],
            parent_slot: vec![usize::MAX; nodes],
            depth: vec![0; nodes],
            potential: vec![0.0; nodes],
            adjacency: vec![Vec::new(); nodes],
            queue: VecDeque::with_capacity(nodes),
        }
    }

    /// Re-root the basis at node 0 and recompute potentials so that every
    /// basic arc has zero reduced cost.
    fn rebuild(&mut self, m: usize, n: usize, basis: &[usize], cost: &[f64]) {
        for adj in &mut self.adjacency {
            adj.clear();
        }
        for (slot, &arc) in basis.iter().enumerate() {
            let (i, j) = (arc / n, m + arc % n);
            self.adjacency[i].push((j, slot));
            self.adjacency[j].push((i, slot));
        }
        self.parent.fill(usize::MAX);
        self.parent[0] = 0;
        self.depth[0] = 0;
        self.potential[0] = 0.0;
        self.queue.clear();
        self.queue.push_back(0);
        while let Some(node) = self.queue.pop_front() {
            for idx in 0..self.adjacency[node].len() {
                let (next, slot) = self.adjacency[node][idx];
                if self.parent[next] != usize::MAX {
                    continue;
                }
                self.parent[next] = node;
                self.parent_slot[next] = slot;
                self.depth[next] = self.depth[node] + 1;
                self.potential[next] = cost[basis[slot]] - self.potential[node];
                self.queue.push_back(next);
            }
        }
        debug_assert!(
            self.parent.iter().all(|&p| p != usize::MAX),
            "basis is not spanning"
        );
    }
}

/// Minimize `sum cost[i*n+j] * flow[i][j]` subject to row sums `supply` and
/// column sums `demand`. Both must be positive and carry (nearly) equal totals.
pub(crate) fn solve(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<Solution> {
    let (m, n) = (supply.len(), demand.len());
    assert!(m > 0 && n > 0 && cost.len() == m * n);

    let (mut basis, mut flow) = northwest_corner(supply, demand);
    let tolerance = 1e-12 * (1.0 + cost.iter().fold(0.0f64, |a, c| a.max(c.abs())));
    let arcs = m * n;
    let block = ((arcs as f64).sqrt().ceil() as usize).max(16).min(arcs);
    let max_pivots = 50 * arcs + 10_000;

    let mut tree = Tree::new(m + n);
    let mut cursor = 0;
    let mut bland = false;
    let mut pivots = 0;
    let mut up_path: Vec<usize> = Vec::new();
    let mut down_path: Vec<usize> = Vec::new();

    loop {
        tree.rebuild(m, n, &basis, cost);
        let reduced =
            |arc: usize| cost[arc] - tree.potential[arc / n] - tree.potential[m + arc % n];

        let entering = if bland {
            (0..arcs).find(|&a| reduced(a) < -tolerance)
        } else {
            let mut found = None;
            let mut scanned = 0;
            while scanned < arcs && found.is_none() {
                let mut best = -tolerance;
                for _ in 0..block.min(arcs - scanned) {
                    let r = reduced(cursor);
                    if r < best {
                        best = r;
                        found = Some(cursor);
                    }
                    cursor = (cursor + 1) % arcs;
                    scanned += 1;
                }
            }
            found
        };
        let Some(entering) = entering else {
            break;
        };

        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::NoConvergence(max_pivots));
        }

        // Tree path from the sink end of the entering arc back to its source
        // end; pushing flow around the cycle alternates -,+,-,... along it.
        let (mut a, mut b) = (m + entering % n, entering / n);
        up_path.clear();
        down_path.clear();
        while tree.depth[a] > tree.depth[b] {
            up_path.push(tree.parent_slot[a]);
            a = tree.parent[a];
        }
        while tree.depth[b] > tree.depth[a] {
            down_path.push(tree.parent_slot[b]);
            b = tree.parent[b];
        }
        while a != b {
            up_path.push(tree.parent_slot[a]);
            a = tree.parent[a];
            down_path.push(tree.parent_slot[b]);
            b = tree.parent[b];
        }
        up_path.extend(down_path.iter().rev());

        let mut leaving = usize::MAX;
        let mut theta = f64::INFINITY;
        for &slot in up_path.iter().step_by(2) {
            let f = flow[slot];
            if f < theta || (f == theta && basis[slot] < basis[leaving]) {
                theta = f;
                leaving = slot;
            }
        }
        for (pos, &slot) in up_path.iter().enumerate() {
            if pos % 2 == 0 {
                flow[slot] -= theta;
            } else {
                flow[slot] += theta;
            }
        }
        basis[leaving] = entering;
        flow[leaving] = theta;
        bland = theta == 0.0;
    }

    let flows = basis
        .iter()
        .zip(&flow)
        .filter(|(_, &f)| f > 0.0)
        .map(|(&arc, &f)| (arc / n, arc % n, f))
        .collect();
    Ok(Solution { flows })
}

/// Staircase basis of exactly `m + n - 1` arcs (degenerate zeros included).
fn northwest_corner(supply: &[f64], demand: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let (m, n) = (supply.len(), demand.len());
    let mut rest_s = supply.to_vec();
    let mut rest_d = demand.to_vec();
    let mut basis = Vec::with_capacity(m + n - 1);
    let mut flow = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let f = rest_s[i].min(rest_d[j]).max(0.0);
        basis.push(i * n + j);
        flow.push(f);
        rest_s[i] -= f;
        rest_d[j] -= f;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if j == n - 1 || (i < m - 1 && rest_s[i] <= rest_d[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }
    (basis, flow)
}
