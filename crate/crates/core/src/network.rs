//! Graph of machines and intermediate stages.
//!
//! Nodes are indexed `0..node_count`. Machines always occupy the first
//! `machine_count` indices and intermediate stages follow. Human-facing
//! output uses 1-based labels (`NodeId::label`), so machine `i` prints as
//! `i + 1`.
//!
//! All-pairs hop distances and canonical next hops are computed once at
//! construction. When several shortest paths exist, the canonical path
//! steps to the smallest-index neighbor that lies on some shortest path.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a node in a [`NetworkLayout`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }

    /// 1-based label used in tables and files.
    pub fn label(self) -> usize {
        self.0 + 1
    }

    pub fn from_label(label: usize) -> Option<NodeId> {
        label.checked_sub(1).map(NodeId)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Connected undirected graph with precomputed shortest-path structure.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkLayout {
    machine_count: usize,
    adjacency: Vec<Vec<NodeId>>,
    coords: Option<Vec<(u32, u32)>>,
    grid_side: Option<u32>,
    dist: Vec<u32>,
    next_hop: Vec<NodeId>,
}

impl NetworkLayout {
    /// Builds a layout from an explicit adjacency list.
    ///
    /// Neighbor lists are sorted and deduplicated. The graph must be
    /// undirected, loop-free and connected.
    pub fn from_adjacency(
        machine_count: usize,
        adjacency: Vec<Vec<NodeId>>,
        coords: Option<Vec<(u32, u32)>>,
        grid_side: Option<u32>,
    ) -> Result<Self> {
        let n = adjacency.len();
        if machine_count == 0 || machine_count > n {
            return Err(Error::Layout(format!(
                "machine count {machine_count} must be in 1..={n}"
            )));
        }
        if let Some(c) = &coords {
            if c.len() != n {
                return Err(Error::Layout(format!(
                    "{} coordinates given for {n} nodes",
                    c.len()
                )));
            }
        }
        let mut adjacency = adjacency;
        for (i, nbrs) in adjacency.iter_mut().enumerate() {
            nbrs.sort_unstable();
            nbrs.dedup();
            if let Some(bad) = nbrs.iter().find(|k| k.0 >= n || k.0 == i) {
                return Err(Error::Layout(format!(
                    "node {} has invalid neighbor {}",
                    NodeId(i),
                    bad.label()
                )));
            }
        }
        for (i, nbrs) in adjacency.iter().enumerate() {
            for k in nbrs {
                if adjacency[k.0].binary_search(&NodeId(i)).is_err() {
                    return Err(Error::Layout(format!(
                        "edge {}-{} is not symmetric",
                        NodeId(i),
                        k
                    )));
                }
            }
        }

        let dist = all_pairs_bfs(&adjacency);
        if dist.contains(&u32::MAX) {
            return Err(Error::Layout("graph is not connected".into()));
        }

        let mut next_hop = vec![NodeId(0); n * n];
        for i in 0..n {
            for j in 0..n {
                next_hop[i * n + j] = if i == j {
                    NodeId(i)
                } else {
                    let want = dist[i * n + j] - 1;
                    // adjacency is sorted, so the first match is the smallest id
                    *adjacency[i]
                        .iter()
                        .find(|k| dist[k.0 * n + j] == want)
                        .expect("connected graph has a shortest-path neighbor")
                };
            }
        }

        Ok(NetworkLayout {
            machine_count,
            adjacency,
            coords,
            grid_side,
            dist,
            next_hop,
        })
    }

    /// Full `grid_side × grid_side` lattice with the listed points as
    /// machines.
    ///
    /// Machines are numbered by `a` then `b`. Every other lattice point is
    /// kept as an intermediate stage, numbered in row-major order.
    pub fn lattice(grid_side: u32, machine_coords: &[(u32, u32)]) -> Result<Self> {
        if grid_side == 0 {
            return Err(Error::Layout("grid side must be at least 1".into()));
        }
        if machine_coords.is_empty() {
            return Err(Error::Layout("at least one machine is required".into()));
        }
        for &(a, b) in machine_coords {
            if !(1..=grid_side).contains(&a) || !(1..=grid_side).contains(&b) {
                return Err(Error::Layout(format!(
                    "coordinate ({a},{b}) outside 1..={grid_side}"
                )));
            }
        }
        let mut machines = machine_coords.to_vec();
        machines.sort_unstable();
        if machines.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Layout("duplicate machine coordinates".into()));
        }

        let mut coords = machines.clone();
        for a in 1..=grid_side {
            for b in 1..=grid_side {
                if machines.binary_search(&(a, b)).is_err() {
                    coords.push((a, b));
                }
            }
        }
        let side = grid_side as usize;
        let mut index_of = vec![0usize; side * side];
        for (idx, &(a, b)) in coords.iter().enumerate() {
            index_of[(a as usize - 1) * side + (b as usize - 1)] = idx;
        }
        let mut adjacency = vec![Vec::new(); coords.len()];
        for (idx, &(a, b)) in coords.iter().enumerate() {
            let (a, b) = (a as usize - 1, b as usize - 1);
            let mut push =
                |ra: usize, rb: usize| adjacency[idx].push(NodeId(index_of[ra * side + rb]));
            if a > 0 {
                push(a - 1, b);
            }
            if a + 1 < side {
                push(a + 1, b);
            }
            if b > 0 {
                push(a, b - 1);
            }
            if b + 1 < side {
                push(a, b + 1);
            }
        }
        Self::from_adjacency(machines.len(), adjacency, Some(coords), Some(grid_side))
    }

    /// Star network: `m` spokes of `radius` edges meeting at a central stage.
    ///
    /// Node layout: machines `0..m`, the center at index `m`, then the inner
    /// spoke nodes of spoke 0 (nearest the center first), spoke 1, and so on.
    pub fn star(m: usize, radius: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Layout("a star needs at least 2 machines".into()));
        }
        if radius < 1 {
            return Err(Error::Layout("star radius must be at least 1".into()));
        }
        let center = m;
        let n = m + 1 + m * (radius - 1);
        let mut adjacency = vec![Vec::new(); n];
        let mut link = |a: usize, b: usize| {
            adjacency[a].push(NodeId(b));
            adjacency[b].push(NodeId(a));
        };
        for spoke in 0..m {
            let mut prev = center;
            for depth in 1..radius {
                let node = m + 1 + spoke * (radius - 1) + (depth - 1);
                link(prev, node);
                prev = node;
            }
            link(prev, spoke);
        }
        Self::from_adjacency(m, adjacency, None, None)
    }

    /// Complete graph on `m` machines with no intermediate stages.
    pub fn complete(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Layout(
                "a complete layout needs at least 2 machines".into(),
            ));
        }
        let adjacency = (0..m)
            .map(|i| (0..m).filter(|&j| j != i).map(NodeId).collect())
            .collect();
        Self::from_adjacency(m, adjacency, None, None)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn machine_count(&self) -> usize {
        self.machine_count
    }

    pub fn is_machine(&self, node: NodeId) -> bool {
        node.0 < self.machine_count
    }

    pub fn machines(&self) -> impl Iterator<Item = NodeId> {
        (0..self.machine_count).map(NodeId)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count()).map(NodeId)
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node.0]
    }

    pub fn adjacency(&self) -> &[Vec<NodeId>] {
        &self.adjacency
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a.0].binary_search(&b).is_ok()
    }

    pub fn coords(&self) -> Option<&[(u32, u32)]> {
        self.coords.as_deref()
    }

    pub fn grid_side(&self) -> Option<u32> {
        self.grid_side
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Hop count of a shortest path.
    pub fn dist(&self, from: NodeId, to: NodeId) -> u32 {
        self.dist[from.0 * self.node_count() + to.0]
    }

    /// First node on the canonical shortest path from `from` to `to`.
    pub fn next_hop(&self, from: NodeId, to: NodeId) -> Result<NodeId> {
        if from == to {
            return Err(Error::Layout(format!("next hop from {from} to itself")));
        }
        Ok(self.next_hop[from.0 * self.node_count() + to.0])
    }

    /// Next hop toward `to`, or `from` itself when already there.
    pub fn step_toward(&self, from: NodeId, to: NodeId) -> NodeId {
        self.next_hop[from.0 * self.node_count() + to.0]
    }
}

fn all_pairs_bfs(adjacency: &[Vec<NodeId>]) -> Vec<u32> {
    let n = adjacency.len();
    let mut dist = vec![u32::MAX; n * n];
    let mut queue = VecDeque::with_capacity(n);
    for src in 0..n {
        let row = &mut dist[src * n..(src + 1) * n];
        row[src] = 0;
        queue.clear();
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = row[u];
            for v in &adjacency[u] {
                if row[v.0] == u32::MAX {
                    row[v.0] = du + 1;
                    queue.push_back(v.0);
                }
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn floyd_warshall(adjacency: &[Vec<NodeId>]) -> Vec<u64> {
        let n = adjacency.len();
        let inf = u64::MAX / 4;
        let mut d = vec![inf; n * n];
        for i in 0..n {
            d[i * n + i] = 0;
            for k in &adjacency[i] {
                d[i * n + k.0] = 1;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i * n + k] + d[k * n + j];
                    if via < d[i * n + j] {
                        d[i * n + j] = via;
                    }
                }
            }
        }
        d
    }

    /// Brute-force canonical first step: smallest-id neighbor on a
    /// shortest path, found by trying neighbors in increasing order.
    fn oracle_next_hop(adjacency: &[Vec<NodeId>], from: usize, to: usize) -> usize {
        let d = floyd_warshall(adjacency);
        let n = adjacency.len();
        let mut nbrs: Vec<usize> = adjacency[from].iter().map(|k| k.0).collect();
        nbrs.sort_unstable();
        nbrs.into_iter()
            .find(|&k| d[k * n + to] + 1 == d[from * n + to])
            .unwrap()
    }

    fn three_machine_lattice() -> NetworkLayout {
        NetworkLayout::lattice(5, &[(1, 3), (2, 5), (3, 1)]).unwrap()
    }

    #[test]
    fn lattice_machine_distances_are_manhattan() {
        let l = three_machine_lattice();
        assert_eq!(l.machine_count(), 3);
        assert_eq!(l.node_count(), 25);
        assert_eq!(l.dist(NodeId(0), NodeId(2)), 4);
        assert_eq!(l.dist(NodeId(0), NodeId(1)), 3);
        assert_eq!(l.dist(NodeId(1), NodeId(2)), 5);

        let two = NetworkLayout::lattice(5, &[(2, 5), (1, 3)]).unwrap();
        assert_eq!(two.dist(NodeId(0), NodeId(1)), 3);
        assert_eq!(two.coords().unwrap()[0], (1, 3));
    }

    #[test]
    fn lattice_degenerate_single_node() {
        let l = NetworkLayout::lattice(1, &[(1, 1)]).unwrap();
        assert_eq!(l.node_count(), 1);
        assert_eq!(l.dist(NodeId(0), NodeId(0)), 0);
    }

    #[test]
    fn lattice_rejects_bad_coordinates() {
        assert!(NetworkLayout::lattice(5, &[(1, 1), (1, 1)]).is_err());
        assert!(NetworkLayout::lattice(5, &[(0, 1)]).is_err());
        assert!(NetworkLayout::lattice(5, &[(6, 1)]).is_err());
    }

    #[test]
    fn lattice_next_hop_matches_oracle() {
        let l = three_machine_lattice();
        let hop = l.next_hop(NodeId(0), NodeId(1)).unwrap();
        assert_eq!(hop.0, oracle_next_hop(l.adjacency(), 0, 1));
        assert!(l.are_adjacent(NodeId(0), hop));
        assert_eq!(l.dist(hop, NodeId(1)), 2);
        // from (1,3) toward (2,5): candidates (1,4) and (2,3); both are stages
        let coords = l.coords().unwrap();
        assert!(coords[hop.0] == (1, 4) || coords[hop.0] == (2, 3));
        let id_14 = coords.iter().position(|&c| c == (1, 4)).unwrap();
        let id_23 = coords.iter().position(|&c| c == (2, 3)).unwrap();
        assert_eq!(hop.0, id_14.min(id_23));
    }

    #[test]
    fn star_distances() {
        let s = NetworkLayout::star(6, 3).unwrap();
        for i in s.machines() {
            for j in s.machines() {
                let want = if i == j { 0 } else { 6 };
                assert_eq!(s.dist(i, j), want);
            }
            assert_eq!(s.dist(i, NodeId(6)), 3);
        }
        let small = NetworkLayout::star(3, 1).unwrap();
        assert_eq!(small.node_count(), 4);
        assert_eq!(small.dist(NodeId(0), NodeId(2)), 2);
        let path = NetworkLayout::star(2, 1).unwrap();
        assert_eq!(path.node_count(), 3);
        assert_eq!(path.edge_count(), 2);
        assert!(NetworkLayout::star(1, 1).is_err());
        assert!(NetworkLayout::star(3, 0).is_err());
    }

    #[test]
    fn star_next_hop_heads_to_center() {
        let s = NetworkLayout::star(3, 2).unwrap();
        let hop = s.next_hop(NodeId(0), NodeId(1)).unwrap();
        assert!(!s.is_machine(hop));
        assert_eq!(s.dist(hop, NodeId(3)), 1);
    }

    #[test]
    fn complete_layout() {
        let c = NetworkLayout::complete(4).unwrap();
        assert_eq!(c.edge_count(), 6);
        for i in c.nodes() {
            for j in c.nodes() {
                assert_eq!(c.dist(i, j), u32::from(i != j));
            }
        }
        let two = NetworkLayout::complete(2).unwrap();
        assert_eq!(two.edge_count(), 1);
        assert_eq!(two.next_hop(NodeId(0), NodeId(1)).unwrap(), NodeId(1));
        assert_eq!(two.dist(NodeId(0), NodeId(0)), 0);
        assert!(NetworkLayout::complete(1).is_err());
    }

    #[test]
    fn next_hop_rejects_same_node() {
        let c = NetworkLayout::complete(2).unwrap();
        assert!(c.next_hop(NodeId(1), NodeId(1)).is_err());
    }

    #[test]
    fn disconnected_graph_rejected() {
        let adj = vec![vec![NodeId(1)], vec![NodeId(0)], vec![]];
        assert!(NetworkLayout::from_adjacency(2, adj, None, None).is_err());
        let asym = vec![vec![NodeId(1)], vec![]];
        assert!(NetworkLayout::from_adjacency(2, asym, None, None).is_err());
    }

    fn arb_lattice() -> impl Strategy<Value = NetworkLayout> {
        (1u32..=5)
            .prop_flat_map(|side| {
                let pts = proptest::collection::btree_set(
                    (1..=side, 1..=side),
                    1..=(side * side).min(8) as usize,
                );
                (Just(side), pts)
            })
            .prop_map(|(side, pts)| {
                let v: Vec<_> = pts.into_iter().collect();
                NetworkLayout::lattice(side, &v).unwrap()
            })
    }

    proptest! {
        #[test]
        fn bfs_matches_floyd_warshall(l in arb_lattice()) {
            let fw = floyd_warshall(l.adjacency());
            let n = l.node_count();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(u64::from(l.dist(NodeId(i), NodeId(j))), fw[i * n + j]);
                }
            }
        }

        #[test]
        fn next_hop_walk_reaches_target(l in arb_lattice()) {
            for i in l.nodes() {
                for j in l.nodes() {
                    let mut cur = i;
                    let mut steps = 0;
                    while cur != j {
                        let nxt = l.next_hop(cur, j).unwrap();
                        prop_assert!(l.are_adjacent(cur, nxt));
                        prop_assert_eq!(l.dist(nxt, j) + 1, l.dist(cur, j));
                        cur = nxt;
                        steps += 1;
                    }
                    prop_assert_eq!(steps, l.dist(i, j));
                }
            }
        }

        #[test]
        fn machine_distances_manhattan(l in arb_lattice()) {
            let c = l.coords().unwrap();
            for i in l.machines() {
                for j in l.machines() {
                    let (a1, b1) = c[i.0];
                    let (a2, b2) = c[j.0];
                    prop_assert_eq!(l.dist(i, j), a1.abs_diff(a2) + b1.abs_diff(b2));
                    prop_assert_eq!(l.dist(i, j), l.dist(j, i));
                }
            }
        }

        #[test]
        fn star_properties(m in 2usize..7, r in 1usize..4) {
            let s = NetworkLayout::star(m, r).unwrap();
            let fw = floyd_warshall(s.adjacency());
            let n = s.node_count();
            for i in 0..m {
                prop_assert_eq!(s.dist(NodeId(i), NodeId(m)) as usize, r);
                for j in 0..m {
                    if i != j {
                        prop_assert_eq!(s.dist(NodeId(i), NodeId(j)) as usize, 2 * r);
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(u64::from(s.dist(NodeId(i), NodeId(j))), fw[i * n + j]);
                    if i != j {
                        prop_assert_eq!(s.next_hop(NodeId(i), NodeId(j)).unwrap().0, oracle_next_hop(s.adjacency(), i, j));
                    }
                }
            }
        }
    }
}
