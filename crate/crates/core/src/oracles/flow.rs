//! Capacitated assignment as min-cost flow, by successive shortest paths with
//! Johnson potentials.
//!
//! Network: source → agent (capacity 1), agent → good per segment (capacity
//! `l`, cost `−w`), good → sink (capacity 1). Augmentation stops as soon as the
//! cheapest source–sink path has non-negative cost, so the flow maximizes
//! weight rather than volume.

use crate::instance::Coord;

/// Residual capacities at or below this are treated as exhausted.
const CAP_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct CapacitatedSolution {
    /// `x[i][j][k]`, with the same shape as the input.
    pub x: Vec<Vec<Vec<f64>>>,
    pub value: f64,
}

/// Maximize `Σ w·x` subject to `0 ≤ x_ijk ≤ l_ijk` and unit agent and good budgets.
pub fn max_weight_capacitated_assignment(w: &[Vec<Vec<f64>>], l: &[Vec<Vec<f64>>]) -> CapacitatedSolution {
    let n = w.len();
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for (k, (&wk, &lk)) in w[i][j].iter().zip(&l[i][j]).enumerate() {
                coords.push(Coord { agent: i, good: j, segment: k, cap: lk, agent_util: 0.0, partner_util: 0.0 });
                weights.push(wk);
            }
        }
    }
    let flat = assign_flat(n, &coords, &weights);
    let mut x: Vec<Vec<Vec<f64>>> = w.iter().map(|r| r.iter().map(|s| vec![0.0; s.len()]).collect()).collect();
    let mut value = 0.0;
    for ((c, &v), &wk) in coords.iter().zip(&flat).zip(&weights) {
        x[c.agent][c.good][c.segment] = v;
        value += wk * v;
    }
    CapacitatedSolution { x, value }
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
    rev: usize,
}

struct Network {
    adj: Vec<Vec<Edge>>,
}

impl Network {
    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> (usize, usize) {
        let a = self.adj[from].len();
        let b = self.adj[to].len();
        self.adj[from].push(Edge { to, cap, cost, rev: b });
        self.adj[to].push(Edge { to: from, cap: 0.0, cost: -cost, rev: a });
        (from, a)
    }
}

/// Optimal flow on each coordinate for weights `w` (one per coordinate).
pub(crate) fn assign_flat(n: usize, coords: &[Coord], w: &[f64]) -> Vec<f64> {
    let source = 0;
    let sink = 2 * n + 1;
    let nodes = 2 * n + 2;
    let mut net = Network { adj: (0..nodes).map(|_| Vec::new()).collect() };
    for i in 0..n {
        net.add(source, 1 + i, 1.0, 0.0);
    }
    let mut handles = vec![None; coords.len()];
    for (idx, (c, &wk)) in coords.iter().zip(w).enumerate() {
        if wk > 0.0 && c.cap > CAP_EPS {
            handles[idx] = Some(net.add(1 + c.agent, 1 + n + c.good, c.cap, -wk));
        }
    }
    for j in 0..n {
        net.add(1 + n + j, sink, 1.0, 0.0);
    }

    // Initial potentials: exact shortest distances in the acyclic initial network.
    let mut pot = vec![0.0f64; nodes];
    for i in 0..n {
        for e in &net.adj[1 + i] {
            if e.cap > 0.0 && e.to > n && e.to <= 2 * n {
                pot[e.to] = pot[e.to].min(e.cost);
            }
        }
    }
    pot[sink] = (0..n).map(|j| pot[1 + n + j]).fold(0.0, f64::min);

    let mut dist = vec![f64::INFINITY; nodes];
    let mut done = vec![false; nodes];
    let mut prev: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); nodes];
    let max_rounds = 4 * (coords.len() + n) + 16;
    for _ in 0..max_rounds {
        dist.fill(f64::INFINITY);
        done.fill(false);
        dist[source] = 0.0;
        // Dense Dijkstra: the network has O(n) nodes and O(n²) arcs.
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            for (ei, e) in net.adj[u].iter().enumerate() {
                if e.cap <= CAP_EPS || done[e.to] {
                    continue;
                }
                let rc = (e.cost + pot[u] - pot[e.to]).max(0.0);
                let nd = dist[u] + rc;
                if nd < dist[e.to] {
                    dist[e.to] = nd;
                    prev[e.to] = (u, ei);
                }
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        for v in 0..nodes {
            if dist[v].is_finite() {
                pot[v] += dist[v];
            }
        }
        // pot[source] stays 0, so pot[sink] is the true cost of the path found.
        if pot[sink] - pot[source] >= 0.0 {
            break;
        }
        let mut f = f64::INFINITY;
        let mut v = sink;
        while v != source {
            let (u, ei) = prev[v];
            f = f.min(net.adj[u][ei].cap);
            v = u;
        }
        let mut v = sink;
        while v != source {
            let (u, ei) = prev[v];
            let rev = net.adj[u][ei].rev;
            net.adj[u][ei].cap -= f;
            net.adj[v][rev].cap += f;
            v = u;
        }
    }

    coords
        .iter()
        .zip(&handles)
        .map(|(c, h)| match *h {
            None => 0.0,
            Some((u, ei)) => {
                let residual = net.adj[u][ei].cap;
                let flow = c.cap - residual;
                if flow <= CAP_EPS {
                    0.0
                } else if residual <= CAP_EPS {
                    c.cap
                } else {
                    flow
                }
            }
        })
        .collect()
}
