//! Slow reference implementations shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;

/// Union-find without path compression so unions can be undone.
struct Rollback {
    parent: Vec<usize>,
    size: Vec<usize>,
    log: Vec<Option<(usize, usize)>>,
}

impl Rollback {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
            log: Vec::new(),
        }
    }

    fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.log.push(Some((ra, rb)));
        true
    }

    fn undo(&mut self) {
        if let Some(Some((ra, rb))) = self.log.pop() {
            self.parent[rb] = rb;
            self.size[ra] -= self.size[rb];
        }
    }
}

/// Flow on a spanning tree of the bipartite graph, by peeling leaves.
fn tree_flow(m: usize, n: usize, tree: &[(usize, usize)], a: &[f64], b: &[f64]) -> Vec<f64> {
    let v = m + n;
    let mut excess: Vec<f64> = a.iter().copied().chain(b.iter().map(|x| -x)).collect();
    let mut degree = vec![0usize; v];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); v];
    for (e, &(i, j)) in tree.iter().enumerate() {
        degree[i] += 1;
        degree[m + j] += 1;
        incident[i].push(e);
        incident[m + j].push(e);
    }
    let mut flow = vec![0.0; tree.len()];
    let mut used = vec![false; tree.len()];
    let mut stack: Vec<usize> = (0..v).filter(|&x| degree[x] == 1).collect();
    while let Some(leaf) = stack.pop() {
        if degree[leaf] != 1 {
            continue;
        }
        let e = *incident[leaf].iter().find(|&&e| !used[e]).unwrap();
        used[e] = true;
        let (i, j) = tree[e];
        let other = if leaf == i { m + j } else { i };
        // a row leaf ships its excess, a column leaf receives its deficit
        let f = if leaf < m { excess[leaf] } else { -excess[leaf] };
        flow[e] = f;
        excess[i] -= f;
        excess[m + j] += f;
        degree[leaf] -= 1;
        degree[other] -= 1;
        if degree[other] == 1 {
            stack.push(other);
        }
    }
    flow
}

/// Minimum transport cost by enumerating every spanning tree of the complete
/// bipartite graph (every vertex of the transportation polytope is a tree
/// solution) and keeping the cheapest feasible one.
pub fn brute_force_transport(a: &[f64], b: &[f64], cost: &dyn Fn(usize, usize) -> f64) -> f64 {
    let (m, n) = (a.len(), b.len());
    let edges: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let c: Vec<f64> = edges.iter().map(|&(i, j)| cost(i, j)).collect();
    let need = m + n - 1;
    let mut best = f64::INFINITY;
    let mut chosen: Vec<usize> = Vec::with_capacity(need);
    let mut uf = Rollback::new(m + n);
    fn rec(
        start: usize,
        edges: &[(usize, usize)],
        c: &[f64],
        need: usize,
        chosen: &mut Vec<usize>,
        uf: &mut Rollback,
        best: &mut f64,
        m: usize,
        a: &[f64],
        b: &[f64],
    ) {
        if chosen.len() == need {
            let tree: Vec<(usize, usize)> = chosen.iter().map(|&e| edges[e]).collect();
            let flow = tree_flow(m, b.len(), &tree, a, b);
            if flow.iter().all(|f| *f >= -1e-12) {
                let cost: f64 = chosen.iter().zip(&flow).map(|(&e, f)| f * c[e]).sum();
                if cost < *best {
                    *best = cost;
                }
            }
            return;
        }
        for e in start..edges.len() {
            if edges.len() - e < need - chosen.len() {
                break;
            }
            let (i, j) = edges[e];
            if uf.union(i, m + j) {
                chosen.push(e);
                rec(e + 1, edges, c, need, chosen, uf, best, m, a, b);
                chosen.pop();
                uf.undo();
            }
        }
    }
    rec(0, &edges, &c, need, &mut chosen, &mut uf, &mut best, m, a, b);
    best
}

/// `sum_n exp(2 pi i <k, x_n>) / N` term by term.
pub fn naive_exponential_sum(points: &[Vec<f64>], k: &[i64]) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for x in points {
        let phase: f64 = k.iter().zip(x).map(|(k, x)| *k as f64 * x).sum();
        s += Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * phase);
    }
    s / points.len() as f64
}

/// `W2^2` between an equal-weight point set on the circle and the uniform
/// measure by a fine midpoint discretization of the optimal shifted
/// quantile coupling, searched over shifts.
pub fn circle_w2_by_shift_search(points: &[f64], shifts: usize, nodes: usize) -> f64 {
    let mut x = points.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let mut best = f64::INFINITY;
    for s in 0..shifts {
        let shift = s as f64 / shifts as f64;
        let mut acc = 0.0;
        for q in 0..nodes {
            let u = (q as f64 + 0.5) / nodes as f64;
            let atom = x[((u * n as f64) as usize).min(n - 1)];
            let y = (u + shift).fract();
            let d = (atom - y).abs();
            let d = d.min(1.0 - d);
            acc += d * d;
        }
        best = best.min(acc / nodes as f64);
    }
    best
}
