use std::collections::VecDeque;

use super::NetworkModel;

/// Undirected bus adjacency over in-service branches. Parallel branches
/// collapse to one edge; neighbour lists are sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridGraph {
    adj: Vec<Vec<usize>>,
}

impl GridGraph {
    pub fn from_model(model: &NetworkModel) -> Self {
        Self::from_edges(model.n_bus(), model.in_service_branches().map(|b| (b.from, b.to)))
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        GridGraph { adj }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for &j in &self.adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    /// Breadth-first hop distances from `start`, `None` beyond `max_hops`.
    pub fn hops_from(&self, start: usize, max_hops: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        dist[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let d = dist[i].unwrap();
            if d == max_hops {
                continue;
            }
            for &j in &self.adj[i] {
                if dist[j].is_none() {
                    dist[j] = Some(d + 1);
                    queue.push_back(j);
                }
            }
        }
        dist
    }

    /// Whether `nodes` induce a connected subgraph (empty sets are not).
    pub fn induces_connected(&self, nodes: &[usize]) -> bool {
        let Some(&first) = nodes.first() else {
            return false;
        };
        let mut member = vec![false; self.n()];
        for &k in nodes {
            member[k] = true;
        }
        let mut seen = vec![false; self.n()];
        seen[first] = true;
        let mut stack = vec![first];
        while let Some(i) = stack.pop() {
            for &j in &self.adj[i] {
                if member[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        nodes.iter().all(|&k| seen[k])
    }
}
