//! Primal network simplex for uncapacitated transportation problems.
//!
//! Rows are supply nodes, columns demand nodes, and an extra root node is
//! joined to every other node by an artificial arc. The spanning tree is kept
//! strongly feasible (zero-flow tree arcs point away from the root), which
//! rules out cycling under degenerate pivots. Arcs may be added between
//! solves; the current tree stays valid, so column generation restarts warm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summation::NeumaierSum;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexStatus {
    pub pivots: u64,
    /// Flow left on root-to-column arcs; positive means the arcs present
    /// cannot carry the demand.
    pub artificial_flow: i64,
}

#[derive(Clone, Debug)]
pub struct NetworkSimplex {
    rows: usize,
    cols: usize,
    supply: Vec<i64>,
    cost_bound: Option<f64>,
    // arcs; index v < root is the artificial arc of node v
    tail: Vec<u32>,
    head: Vec<u32>,
    cost: Vec<f64>,
    flow: Vec<i64>,
    in_tree: Vec<bool>,
    // spanning tree rooted at `root`
    parent: Vec<u32>,
    pred: Vec<u32>,
    up: Vec<bool>,
    depth: Vec<u32>,
    children: Vec<Vec<u32>>,
    child_pos: Vec<u32>,
    pi: Vec<f64>,
    initialized: bool,
    cursor: usize,
    pivots: u64,
}

const NONE: u32 = u32::MAX;

impl NetworkSimplex {
    /// Integer supplies of the rows and demands of the columns; the totals
    /// must agree.
    pub fn new(supply: Vec<i64>, demand: Vec<i64>) -> Result<Self> {
        if supply.iter().chain(&demand).any(|x| *x < 0) {
            return Err(Error::invalid("supplies and demands must be nonnegative"));
        }
        let (ts, td) = (supply.iter().sum::<i64>(), demand.iter().sum::<i64>());
        if ts != td {
            return Err(Error::invalid(format!("total supply {ts} differs from total demand {td}")));
        }
        let rows = supply.len();
        let cols = demand.len();
        if rows + cols + 1 >= NONE as usize {
            return Err(Error::ResourceGuard("too many nodes".into()));
        }
        let nodes = rows + cols + 1;
        let mut s = supply;
        s.extend(demand.iter().map(|d| -d));
        s.push(0);
        let root = nodes - 1;
        Ok(Self {
            rows,
            cols,
            supply: s,
            cost_bound: None,
            tail: vec![0; root],
            head: vec![0; root],
            cost: vec![0.0; root],
            flow: vec![0; root],
            in_tree: vec![true; root],
            parent: vec![NONE; nodes],
            pred: vec![NONE; nodes],
            up: vec![false; nodes],
            depth: vec![0; nodes],
            children: vec![Vec::new(); nodes],
            child_pos: vec![0; nodes],
            pi: vec![0.0; nodes],
            initialized: false,
            cursor: 0,
            pivots: 0,
        })
    }

    /// Upper bound on every arc cost that will ever be added; fixes the
    /// artificial cost when arcs arrive after the first solve.
    pub fn set_cost_bound(&mut self, bound: f64) {
        self.cost_bound = Some(bound);
    }

    fn root(&self) -> usize {
        self.rows + self.cols
    }

    fn real_start(&self) -> usize {
        self.root()
    }

    pub fn add_arc(&mut self, row: usize, col: usize, cost: f64) -> usize {
        assert!(row < self.rows && col < self.cols, "arc endpoint out of range");
        self.tail.push(row as u32);
        self.head.push((self.rows + col) as u32);
        self.cost.push(cost);
        self.flow.push(0);
        self.in_tree.push(false);
        self.tail.len() - 1
    }

    pub fn arc_count(&self) -> usize {
        self.tail.len() - self.real_start()
    }

    fn init(&mut self) {
        let root = self.root();
        let max_cost = self.cost[self.real_start()..]
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs()));
        let bound = self.cost_bound.unwrap_or(0.0).max(max_cost);
        let art = (bound + 1.0) * (root + 1) as f64;
        for v in 0..root {
            let s = self.supply[v];
            if s > 0 {
                self.tail[v] = v as u32;
                self.head[v] = root as u32;
                self.cost[v] = 0.0;
                self.flow[v] = s;
                self.up[v] = true;
            } else {
                self.tail[v] = root as u32;
                self.head[v] = v as u32;
                self.cost[v] = art;
                self.flow[v] = -s;
                self.up[v] = false;
            }
            self.parent[v] = root as u32;
            self.pred[v] = v as u32;
            self.depth[v] = 1;
            self.child_pos[v] = self.children[root].len() as u32;
            self.children[root].push(v as u32);
            self.pi[v] = if s > 0 { 0.0 } else { art };
        }
        self.initialized = true;
    }

    #[inline]
    fn reduced_cost_arc(&self, e: usize) -> f64 {
        self.cost[e] + self.pi[self.tail[e] as usize] - self.pi[self.head[e] as usize]
    }

    fn tolerance(&self) -> f64 {
        let bound = self.cost_bound.unwrap_or(0.0).max(1.0);
        1e-12 * bound * (self.root() as f64).sqrt().max(1.0)
    }

    /// Block pricing: the most negative reduced cost within the first block
    /// that contains a violation.
    fn find_entering(&mut self) -> Option<usize> {
        let total = self.tail.len();
        let block = ((total as f64).sqrt() as usize).max(16);
        let tol = self.tolerance();
        let mut best = None;
        let mut best_rc = -tol;
        let mut seen = 0;
        let mut e = self.cursor % total;
        while seen < total {
            let mut count = 0;
            while count < block && seen < total {
                if !self.in_tree[e] {
                    let rc = self.reduced_cost_arc(e);
                    if rc < best_rc {
                        best_rc = rc;
                        best = Some(e);
                    }
                }
                e += 1;
                if e == total {
                    e = 0;
                }
                count += 1;
                seen += 1;
            }
            if best.is_some() {
                self.cursor = e;
                return best;
            }
        }
        None
    }

    fn lca(&self, mut a: usize, mut b: usize) -> usize {
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a] as usize;
            } else {
                b = self.parent[b] as usize;
            }
        }
        a
    }

    fn remove_child(&mut self, p: usize, c: usize) {
        let pos = self.child_pos[c] as usize;
        let list = &mut self.children[p];
        list.swap_remove(pos);
        if pos < list.len() {
            let moved = list[pos] as usize;
            self.child_pos[moved] = pos as u32;
        }
    }

    fn add_child(&mut self, p: usize, c: usize) {
        self.child_pos[c] = self.children[p].len() as u32;
        self.children[p].push(c as u32);
    }

    fn pivot(&mut self, e: usize) -> Result<()> {
        let first = self.tail[e] as usize;
        let second = self.head[e] as usize;
        let join = self.lca(first, second);

        // leaving arc: on the source side only upward arcs lose flow, on the
        // target side only downward ones; ties go to the last candidate on the
        // target side, which keeps the tree strongly feasible
        let mut delta = i64::MAX;
        let mut u_out = NONE as usize;
        let mut side = 0;
        let mut w = first;
        while w != join {
            if self.up[w] {
                let d = self.flow[self.pred[w] as usize];
                if d < delta {
                    delta = d;
                    u_out = w;
                    side = 1;
                }
            }
            w = self.parent[w] as usize;
        }
        let mut w = second;
        while w != join {
            if !self.up[w] {
                let d = self.flow[self.pred[w] as usize];
                if d <= delta {
                    delta = d;
                    u_out = w;
                    side = 2;
                }
            }
            w = self.parent[w] as usize;
        }
        if side == 0 {
            return Err(Error::invalid("transportation problem is unbounded"));
        }

        if delta > 0 {
            let mut w = first;
            while w != join {
                let a = self.pred[w] as usize;
                if self.up[w] {
                    self.flow[a] -= delta;
                } else {
                    self.flow[a] += delta;
                }
                w = self.parent[w] as usize;
            }
            let mut w = second;
            while w != join {
                let a = self.pred[w] as usize;
                if self.up[w] {
                    self.flow[a] += delta;
                } else {
                    self.flow[a] -= delta;
                }
                w = self.parent[w] as usize;
            }
        }
        self.flow[e] = delta;

        let (u_in, v_in) = if side == 1 { (first, second) } else { (second, first) };
        let leaving = self.pred[u_out] as usize;
        self.in_tree[leaving] = false;
        self.in_tree[e] = true;

        let cut_parent = self.parent[u_out] as usize;
        self.remove_child(cut_parent, u_out);

        // reverse the tree path u_in -> u_out so that u_in becomes the
        // subtree root
        let mut path = vec![u_in];
        while *path.last().unwrap() != u_out {
            let p = self.parent[*path.last().unwrap()] as usize;
            path.push(p);
        }
        let old: Vec<(u32, bool)> = path.iter().map(|&v| (self.pred[v], self.up[v])).collect();
        // unlink first: child_pos is only valid while the old links stand
        for w in path.windows(2) {
            self.remove_child(w[1], w[0]);
        }
        for i in 0..path.len() - 1 {
            let (a, b) = (path[i], path[i + 1]);
            self.add_child(a, b);
            self.parent[b] = a as u32;
            self.pred[b] = old[i].0;
            self.up[b] = !old[i].1;
        }
        self.parent[u_in] = v_in as u32;
        self.add_child(v_in, u_in);
        self.pred[u_in] = e as u32;
        self.up[u_in] = self.tail[e] as usize == u_in;

        let target = if self.up[u_in] {
            self.pi[v_in] - self.cost[e]
        } else {
            self.pi[v_in] + self.cost[e]
        };
        let shift = target - self.pi[u_in];
        let mut stack = vec![u_in as u32];
        while let Some(v) = stack.pop() {
            let v = v as usize;
            self.pi[v] += shift;
            self.depth[v] = self.depth[self.parent[v] as usize] + 1;
            stack.extend_from_slice(&self.children[v]);
        }
        self.pivots += 1;
        Ok(())
    }

    /// Recomputes every potential from the root along tree arcs, clearing
    /// accumulated rounding.
    fn refresh_potentials(&mut self) {
        let root = self.root();
        self.pi[root] = 0.0;
        let mut stack: Vec<u32> = self.children[root].clone();
        while let Some(v) = stack.pop() {
            let v = v as usize;
            let e = self.pred[v] as usize;
            let p = self.parent[v] as usize;
            self.pi[v] = if self.up[v] {
                self.pi[p] - self.cost[e]
            } else {
                self.pi[p] + self.cost[e]
            };
            stack.extend_from_slice(&self.children[v]);
        }
    }

    pub fn solve(&mut self) -> Result<SimplexStatus> {
        if !self.initialized {
            self.init();
        }
        let limit = 1000 + 200 * (self.tail.len() as u64 + self.root() as u64);
        let refresh_every = (self.root() as u64).max(256);
        let mut since_refresh = 0;
        let mut steps = 0u64;
        loop {
            let e = match self.find_entering() {
                Some(e) => e,
                None => {
                    // confirm optimality with exact potentials
                    self.refresh_potentials();
                    match self.find_entering() {
                        Some(e) => e,
                        None => break,
                    }
                }
            };
            self.pivot(e)?;
            steps += 1;
            since_refresh += 1;
            if since_refresh >= refresh_every {
                self.refresh_potentials();
                since_refresh = 0;
            }
            if steps > limit {
                return Err(Error::ResourceGuard(format!("network simplex exceeded {limit} pivots")));
            }
        }
        Ok(SimplexStatus {
            pivots: self.pivots,
            artificial_flow: self.artificial_flow(),
        })
    }

    fn artificial_flow(&self) -> i64 {
        let root = self.root() as u32;
        (0..self.root())
            .filter(|&v| self.tail[v] == root)
            .map(|v| self.flow[v])
            .sum()
    }

    /// `(row, col, flow)` for every real arc carrying flow.
    pub fn support(&self) -> impl Iterator<Item = (usize, usize, i64)> + '_ {
        (self.real_start()..self.tail.len())
            .filter(|&e| self.flow[e] > 0)
            .map(|e| (self.tail[e] as usize, self.head[e] as usize - self.rows, self.flow[e]))
    }

    /// `sum flow * cost` over real arcs, in integer flow units.
    pub fn total_cost(&self) -> f64 {
        (self.real_start()..self.tail.len())
            .filter(|&e| self.flow[e] > 0)
            .map(|e| self.flow[e] as f64 * self.cost[e])
            .collect::<NeumaierSum>()
            .value()
    }

    /// Dual values `phi_i = -pi_row`, `psi_j = pi_col`: every arc satisfies
    /// `phi_i + psi_j <= cost` at optimality.
    pub fn duals(&self) -> (Vec<f64>, Vec<f64>) {
        let phi = self.pi[..self.rows].iter().map(|p| -p).collect();
        let psi = self.pi[self.rows..self.rows + self.cols].to_vec();
        (phi, psi)
    }

    pub fn reduced_cost(&self, row: usize, col: usize, cost: f64) -> f64 {
        cost + self.pi[row] - self.pi[self.rows + col]
    }

    pub fn pricing_tolerance(&self) -> f64 {
        self.tolerance()
    }
}
