//! Edmonds–Karp maximum flow on real-valued capacities.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
struct Edge {
    to: usize,
    capacity: f64,
    flow: f64,
}

/// Directed network; every edge is stored with its residual twin at
/// `id ^ 1`.
#[derive(Debug, Clone, Default)]
pub struct FlowNetwork {
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            edges: Vec::new(),
            adjacency: vec![Vec::new(); nodes],
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Adds `from → to` and returns its id. Capacities may be infinite.
    pub fn add_edge(&mut self, from: usize, to: usize, capacity: f64) -> usize {
        assert!(capacity >= 0.0, "negative capacity");
        let id = self.edges.len();
        self.edges.push(Edge {
            to,
            capacity,
            flow: 0.0,
        });
        self.edges.push(Edge {
            to: from,
            capacity: 0.0,
            flow: 0.0,
        });
        self.adjacency[from].push(id);
        self.adjacency[to].push(id + 1);
        id
    }

    pub fn flow(&self, edge: usize) -> f64 {
        self.edges[edge].flow
    }

    fn residual(&self, e: usize) -> f64 {
        self.edges[e].capacity - self.edges[e].flow
    }

    /// Augments along shortest residual paths (BFS in edge insertion order)
    /// until none remains; returns the flow value.
    pub fn max_flow(&mut self, source: usize, sink: usize) -> f64 {
        let finite_max = self
            .edges
            .iter()
            .map(|e| e.capacity)
            .filter(|c| c.is_finite())
            .fold(0.0, f64::max);
        let eps = 1e-12 * finite_max.max(1e-300);
        let mut total = 0.0;
        let n = self.node_count();
        loop {
            let mut via = vec![usize::MAX; n];
            let mut seen = vec![false; n];
            seen[source] = true;
            let mut queue = VecDeque::from([source]);
            while let Some(u) = queue.pop_front() {
                if u == sink {
                    break;
                }
                for &e in &self.adjacency[u] {
                    let v = self.edges[e].to;
                    if !seen[v] && self.residual(e) > eps {
                        seen[v] = true;
                        via[v] = e;
                        queue.push_back(v);
                    }
                }
            }
            if !seen[sink] {
                break;
            }
            let mut bottleneck = f64::INFINITY;
            let mut v = sink;
            while v != source {
                let e = via[v];
                bottleneck = bottleneck.min(self.residual(e));
                v = self.edges[e ^ 1].to;
            }
            if !bottleneck.is_finite() {
                // An all-infinite path: the flow is unbounded.
                return f64::INFINITY;
            }
            let mut v = sink;
            while v != source {
                let e = via[v];
                self.edges[e].flow += bottleneck;
                self.edges[e ^ 1].flow -= bottleneck;
                v = self.edges[e ^ 1].to;
            }
            total += bottleneck;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_network() {
        // CLRS 26.1: max flow 23.
        let mut g = FlowNetwork::new(6);
        for &(u, v, c) in &[
            (0, 1, 16.0),
            (0, 2, 13.0),
            (1, 3, 12.0),
            (2, 1, 4.0),
            (2, 4, 14.0),
            (3, 2, 9.0),
            (3, 5, 20.0),
            (4, 3, 7.0),
            (4, 5, 4.0),
        ] {
            g.add_edge(u, v, c);
        }
        assert_eq!(g.max_flow(0, 5), 23.0);
    }

    #[test]
    fn infinite_middle_edges() {
        let mut g = FlowNetwork::new(4);
        let a = g.add_edge(0, 1, 5.0);
        g.add_edge(1, 2, f64::INFINITY);
        let b = g.add_edge(2, 3, 3.0);
        assert_eq!(g.max_flow(0, 3), 3.0);
        assert_eq!(g.flow(a), 3.0);
        assert_eq!(g.flow(b), 3.0);
    }
}
