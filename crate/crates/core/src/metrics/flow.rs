//! Minimum-cost maximum-flow via successive shortest paths with Johnson
//! potentials. Costs must be nonnegative when edges are added; with integral
//! costs every intermediate quantity stays integral in f64, so results are
//! exact.

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: i64,
    cost: f64,
}

#[derive(Debug)]
pub struct MinCostFlow {
    adj: Vec<Vec<usize>>,
    edges: Vec<Edge>,
}

impl MinCostFlow {
    pub fn new(n_nodes: usize) -> Self {
        MinCostFlow { adj: vec![Vec::new(); n_nodes], edges: Vec::new() }
    }

    /// Adds a directed edge and its residual twin. Returns the edge id, which
    /// stays valid for [`MinCostFlow::flow_on`].
    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        debug_assert!(cost >= 0.0);
        let id = self.edges.len();
        self.adj[from].push(id);
        self.edges.push(Edge { to, cap, cost });
        self.adj[to].push(id + 1);
        self.edges.push(Edge { to: from, cap: 0, cost: -cost });
        id
    }

    /// Units pushed through the forward edge `id`.
    pub fn flow_on(&self, id: usize) -> i64 {
        self.edges[id ^ 1].cap
    }

    /// Pushes up to `limit` units from `source` to `sink`, minimizing cost.
    /// Returns (flow, cost).
    pub fn run(&mut self, source: usize, sink: usize, limit: i64) -> (i64, f64) {
        let n = self.adj.len();
        let mut potential = vec![0.0f64; n];
        let mut total_flow = 0i64;
        let mut total_cost = 0.0f64;

        while total_flow < limit {
            // Dijkstra over reduced costs.
            let mut dist = vec![f64::INFINITY; n];
            let mut prev_edge = vec![usize::MAX; n];
            let mut done = vec![false; n];
            dist[source] = 0.0;
            let mut heap = std::collections::BinaryHeap::new();
            heap.push(HeapEntry { dist: 0.0, node: source });
            while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
                if done[u] {
                    continue;
                }
                done[u] = true;
                if d > dist[u] {
                    continue;
                }
                for &eid in &self.adj[u] {
                    let e = &self.edges[eid];
                    if e.cap <= 0 || done[e.to] {
                        continue;
                    }
                    let nd = dist[u] + e.cost + potential[u] - potential[e.to];
                    if nd < dist[e.to] {
                        dist[e.to] = nd;
                        prev_edge[e.to] = eid;
                        heap.push(HeapEntry { dist: nd, node: e.to });
                    }
                }
            }
            if !dist[sink].is_finite() {
                break;
            }
            for v in 0..n {
                if dist[v].is_finite() {
                    potential[v] += dist[v];
                }
            }
            // Bottleneck along the augmenting path.
            let mut push = limit - total_flow;
            let mut v = sink;
            while v != source {
                let eid = prev_edge[v];
                push = push.min(self.edges[eid].cap);
                v = self.edges[eid ^ 1].to;
            }
            let mut v = sink;
            while v != source {
                let eid = prev_edge[v];
                self.edges[eid].cap -= push;
                self.edges[eid ^ 1].cap += push;
                total_cost += self.edges[eid].cost * push as f64;
                v = self.edges[eid ^ 1].to;
            }
            total_flow += push;
        }
        (total_flow, total_cost)
    }
}

struct HeapEntry {
    dist: f64,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on distance; ties broken by node id for determinism.
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_cheaper_route() {
        // source -> a -> sink (cost 1+1) vs source -> b -> sink (cost 5).
        let mut g = MinCostFlow::new(4);
        g.add_edge(0, 1, 1, 1.0);
        g.add_edge(1, 3, 1, 1.0);
        g.add_edge(0, 2, 1, 2.0);
        g.add_edge(2, 3, 1, 3.0);
        let (flow, cost) = g.run(0, 3, 1);
        assert_eq!(flow, 1);
        assert_eq!(cost, 2.0);
    }

    #[test]
    fn saturates_up_to_limit() {
        let mut g = MinCostFlow::new(2);
        g.add_edge(0, 1, 3, 1.0);
        let (flow, cost) = g.run(0, 1, 10);
        assert_eq!(flow, 3);
        assert_eq!(cost, 3.0);
    }
}
