//! Exact transportation LP (primal plan and dual potentials) and the
//! max-flow test used for relation liftings.

use std::collections::VecDeque;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::Dist;

/// Allowed mismatch between total supply and total demand.
pub const MARGINAL_TOL: f64 = 1e-9;
/// Reduced costs above `-PRICE_TOL` count as non-negative.
const PRICE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum TransportError {
    #[error("supplies sum to {supply} but demands sum to {demand}")]
    Marginals { supply: f64, demand: f64 },
    #[error("negative or non-finite mass {0}")]
    BadMass(f64),
    #[error("cost {0} outside [0, 1]")]
    BadCost(f64),
    #[error("cost matrix is {rows}x{cols}, expected {want_rows}x{want_cols}")]
    Shape {
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("simplex did not terminate after {0} pivots")]
    NoConvergence(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportInstance {
    pub supplies: Vec<f64>,
    pub demands: Vec<f64>,
    /// Row-major, `costs[i][j]` for supply `i` and demand `j`.
    pub costs: Vec<Vec<f64>>,
}

/// An optimal plan with dual potentials certifying optimality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub flow: Vec<Vec<f64>>,
    pub value: f64,
    pub row_potentials: Vec<f64>,
    pub col_potentials: Vec<f64>,
}

impl TransportPlan {
    pub fn dual_value(&self, inst: &TransportInstance) -> f64 {
        let a: f64 = inst.supplies.iter().zip(&self.row_potentials).map(|(p, u)| p * u).sum();
        let b: f64 = inst.demands.iter().zip(&self.col_potentials).map(|(q, v)| q * v).sum();
        a + b
    }

    /// Checks marginals, dual feasibility and complementary slackness.
    pub fn certify(&self, inst: &TransportInstance, tol: f64) -> Result<(), String> {
        for (i, p) in inst.supplies.iter().enumerate() {
            let s: f64 = self.flow[i].iter().sum();
            if (s - p).abs() > tol {
                return Err(format!("row {i} sums to {s}, supply {p}"));
            }
        }
        for (j, q) in inst.demands.iter().enumerate() {
            let s: f64 = self.flow.iter().map(|r| r[j]).sum();
            if (s - q).abs() > tol {
                return Err(format!("column {j} sums to {s}, demand {q}"));
            }
        }
        for (i, row) in inst.costs.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                let t = self.flow[i][j];
                let red = c - self.row_potentials[i] - self.col_potentials[j];
                if t < -tol {
                    return Err(format!("negative flow {t} at ({i},{j})"));
                }
                if red < -tol {
                    return Err(format!("dual infeasible at ({i},{j}): reduced cost {red}"));
                }
                if t > tol && red.abs() > tol {
                    return Err(format!("slackness fails at ({i},{j}): flow {t}, reduced cost {red}"));
                }
            }
        }
        Ok(())
    }
}

fn validate(inst: &TransportInstance) -> Result<(), TransportError> {
    let (m, n) = (inst.supplies.len(), inst.demands.len());
    let cols = inst.costs.first().map_or(0, Vec::len);
    if inst.costs.len() != m || inst.costs.iter().any(|r| r.len() != n) {
        return Err(TransportError::Shape {
            rows: inst.costs.len(),
            cols,
            want_rows: m,
            want_cols: n,
        });
    }
    for &x in inst.supplies.iter().chain(&inst.demands) {
        if !x.is_finite() || x < 0.0 {
            return Err(TransportError::BadMass(x));
        }
    }
    for &c in inst.costs.iter().flatten() {
        if !c.is_finite() || !(-PRICE_TOL..=1.0 + PRICE_TOL).contains(&c) {
            return Err(TransportError::BadCost(c));
        }
    }
    let supply: f64 = inst.supplies.iter().sum();
    let demand: f64 = inst.demands.iter().sum();
    if (supply - demand).abs() > MARGINAL_TOL {
        return Err(TransportError::Marginals { supply, demand });
    }
    Ok(())
}

/// Solves the transportation problem exactly with the transportation
/// simplex method. Zero supplies and demands are stripped first and get
/// potentials that keep the dual feasible.
pub fn solve(inst: &TransportInstance) -> Result<TransportPlan, TransportError> {
    validate(inst)?;
    let (m, n) = (inst.supplies.len(), inst.demands.len());
    let rows: Vec<usize> = (0..m).filter(|&i| inst.supplies[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| inst.demands[j] > 0.0).collect();
    let mut flow = vec![vec![0.0; n]; m];
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    if !rows.is_empty() && !cols.is_empty() {
        let a: Vec<f64> = rows.iter().map(|&i| inst.supplies[i]).collect();
        let b: Vec<f64> = cols.iter().map(|&j| inst.demands[j]).collect();
        let c: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| cols.iter().map(|&j| inst.costs[i][j]).collect())
            .collect();
        let sol = Simplex::new(a, b, c).run()?;
        for (ri, &i) in rows.iter().enumerate() {
            u[i] = sol.u[ri];
            for (cj, &j) in cols.iter().enumerate() {
                flow[i][j] = sol.flow[ri][cj];
            }
        }
        for (cj, &j) in cols.iter().enumerate() {
            v[j] = sol.v[cj];
        }
    }
    // Stripped rows first (against kept columns), then stripped columns
    // against all rows.
    for i in (0..m).filter(|i| !rows.contains(i)) {
        u[i] = cols
            .iter()
            .map(|&j| inst.costs[i][j] - v[j])
            .fold(f64::INFINITY, f64::min);
        if !u[i].is_finite() {
            u[i] = 0.0;
        }
    }
    for j in (0..n).filter(|j| !cols.contains(j)) {
        v[j] = (0..m)
            .map(|i| inst.costs[i][j] - u[i])
            .fold(f64::INFINITY, f64::min);
        if !v[j].is_finite() {
            v[j] = 0.0;
        }
    }
    let value = flow
        .iter()
        .zip(&inst.costs)
        .map(|(fr, cr)| fr.iter().zip(cr).map(|(t, c)| t * c).sum::<f64>())
        .sum();
    Ok(TransportPlan {
        flow,
        value,
        row_potentials: u,
        col_potentials: v,
    })
}

struct Simplex {
    m: usize,
    n: usize,
    c: Vec<Vec<f64>>,
    flow: Vec<Vec<f64>>,
    basic: Vec<Vec<bool>>,
    cells: Vec<(usize, usize)>,
    u: Vec<f64>,
    v: Vec<f64>,
}

struct SimplexSolution {
    flow: Vec<Vec<f64>>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Simplex {
    fn new(a: Vec<f64>, mut b: Vec<f64>, c: Vec<Vec<f64>>) -> Self {
        let (m, n) = (a.len(), b.len());
        // Rescale demands so both sides carry exactly the same mass.
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        if sb > 0.0 {
            b.iter_mut().for_each(|x| *x *= sa / sb);
        }
        let mut flow = vec![vec![0.0; n]; m];
        let mut basic = vec![vec![false; n]; m];
        let mut cells = Vec::with_capacity(m + n - 1);
        // Northwest corner rule, exactly m + n - 1 basic cells.
        let (mut s, mut d) = (a, b);
        let (mut i, mut j) = (0, 0);
        loop {
            let x = s[i].min(d[j]).max(0.0);
            flow[i][j] = x;
            basic[i][j] = true;
            cells.push((i, j));
            s[i] -= x;
            d[j] -= x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || s[i] < d[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        Simplex {
            m,
            n,
            c,
            flow,
            basic,
            cells,
            u: vec![0.0; m],
            v: vec![0.0; n],
        }
    }

    /// Tree adjacency: node `i < m` is row `i`, node `m + j` is column `j`.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            adj[i].push((self.m + j, k));
            adj[self.m + j].push((i, k));
        }
        adj
    }

    fn potentials(&mut self, adj: &[Vec<(usize, usize)>]) {
        let mut seen = vec![false; self.m + self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        self.u[0] = 0.0;
        while let Some(node) = queue.pop_front() {
            for &(next, k) in &adj[node] {
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let (i, j) = self.cells[k];
                if next >= self.m {
                    self.v[j] = self.c[i][j] - self.u[i];
                } else {
                    self.u[i] = self.c[i][j] - self.v[j];
                }
                queue.push_back(next);
            }
        }
    }

    /// Basic cells on the tree path from column `j` to row `i`.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let total = self.m + self.n;
        let start = self.m + j;
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; total];
        let mut seen = vec![false; total];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == i {
                break;
            }
            for &(next, k) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    prev[next] = Some((node, k));
                    queue.push_back(next);
                }
            }
        }
        let mut out = Vec::new();
        let mut node = i;
        while node != start {
            let (p, k) = prev[node].expect("basis is a spanning tree");
            out.push(k);
            node = p;
        }
        out.reverse();
        out
    }

    fn run(mut self) -> Result<SimplexSolution, TransportError> {
        let limit = 100 * (self.m * self.n + 10);
        let mut degenerate_streak = 0;
        for _ in 0..limit {
            let adj = self.adjacency();
            self.potentials(&adj);
            let bland = degenerate_streak > self.m + self.n;
            let mut entering: Option<(usize, usize)> = None;
            let mut best = -PRICE_TOL;
            'pricing: for i in 0..self.m {
                for j in 0..self.n {
                    if self.basic[i][j] {
                        continue;
                    }
                    let r = self.c[i][j] - self.u[i] - self.v[j];
                    if r < best {
                        entering = Some((i, j));
                        if bland {
                            break 'pricing;
                        }
                        best = r;
                    }
                }
            }
            let Some((ei, ej)) = entering else {
                return Ok(SimplexSolution {
                    flow: self.flow,
                    u: self.u,
                    v: self.v,
                });
            };
            // Cells on the path alternate: first one loses flow.
            let path = self.path(&adj, ei, ej);
            let mut leave: Option<usize> = None;
            let mut theta = f64::INFINITY;
            for &k in path.iter().step_by(2) {
                let (i, j) = self.cells[k];
                let t = self.flow[i][j];
                let better = match leave {
                    None => true,
                    Some(l) => t < theta || (t == theta && self.cells[k] < self.cells[l]),
                };
                if better {
                    theta = t;
                    leave = Some(k);
                }
            }
            let leave = leave.expect("cycle has a losing cell");
            for (pos, &k) in path.iter().enumerate() {
                let (i, j) = self.cells[k];
                if pos % 2 == 0 {
                    self.flow[i][j] = (self.flow[i][j] - theta).max(0.0);
                } else {
                    self.flow[i][j] += theta;
                }
            }
            let (li, lj) = self.cells[leave];
            self.flow[li][lj] = 0.0;
            self.basic[li][lj] = false;
            self.flow[ei][ej] = theta;
            self.basic[ei][ej] = true;
            self.cells[leave] = (ei, ej);
            if theta <= 0.0 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
        }
        Err(TransportError::NoConvergence(limit))
    }
}

/// Wasserstein distance between two distributions for an arbitrary cost.
pub fn distance<X, Y, E>(
    phi: &Dist<X>,
    psi: &Dist<Y>,
    mut cost: impl FnMut(&X, &Y) -> Result<f64, E>,
) -> Result<f64, E>
where
    X: Eq + Hash + Clone,
    Y: Eq + Hash + Clone,
    E: From<TransportError>,
{
    let xs: Vec<(&X, f64)> = phi.iter().collect();
    let ys: Vec<(&Y, f64)> = psi.iter().collect();
    // A single atom on either side forces the plan.
    if xs.len() == 1 || ys.len() == 1 {
        let mut total = 0.0;
        for (x, p) in &xs {
            for (y, q) in &ys {
                total += p * q * cost(x, y)?;
            }
        }
        return Ok(total.min(1.0));
    }
    let mut costs = Vec::with_capacity(xs.len());
    for (x, _) in &xs {
        let mut row = Vec::with_capacity(ys.len());
        for (y, _) in &ys {
            row.push(cost(x, y)?);
        }
        costs.push(row);
    }
    let inst = TransportInstance {
        supplies: xs.iter().map(|(_, p)| *p).collect(),
        demands: ys.iter().map(|(_, q)| *q).collect(),
        costs,
    };
    Ok(solve(&inst)?.value)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub flow_value: f64,
    /// A witnessing plan when feasible.
    pub plan: Option<Vec<Vec<f64>>>,
}

/// Decides whether supplies can be shipped to demands using only related
/// cells, by a maximum-flow computation.
pub fn feasible_along(supplies: &[f64], demands: &[f64], related: impl Fn(usize, usize) -> bool) -> Feasibility {
    const EPS: f64 = 1e-15;
    let (m, n) = (supplies.len(), demands.len());
    let rel: Vec<Vec<bool>> = (0..m).map(|i| (0..n).map(|j| related(i, j)).collect()).collect();
    let mut flow = vec![vec![0.0; n]; m];
    let mut out = vec![0.0; m];
    let mut inn = vec![0.0; n];
    loop {
        // BFS over rows and columns; parents encode the augmenting path.
        #[derive(Clone, Copy)]
        enum From {
            Source,
            Row(usize),
            Col(usize),
        }
        let mut row_from: Vec<Option<From>> = vec![None; m];
        let mut col_from: Vec<Option<From>> = vec![None; n];
        let mut queue: VecDeque<(bool, usize)> = VecDeque::new();
        for i in 0..m {
            if supplies[i] - out[i] > EPS {
                row_from[i] = Some(From::Source);
                queue.push_back((true, i));
            }
        }
        let mut sink_col = None;
        while let Some((is_row, k)) = queue.pop_front() {
            if is_row {
                for j in 0..n {
                    if rel[k][j] && col_from[j].is_none() {
                        col_from[j] = Some(From::Row(k));
                        if demands[j] - inn[j] > EPS {
                            sink_col = Some(j);
                            break;
                        }
                        queue.push_back((false, j));
                    }
                }
                if sink_col.is_some() {
                    break;
                }
            } else {
                for i in 0..m {
                    if flow[i][k] > EPS && row_from[i].is_none() {
                        row_from[i] = Some(From::Col(k));
                        queue.push_back((true, i));
                    }
                }
            }
        }
        let Some(end) = sink_col else { break };
        // Walk back to find the bottleneck, then push.
        let mut steps: Vec<(usize, usize, bool)> = Vec::new();
        let mut bottleneck = demands[end] - inn[end];
        let mut col = end;
        let start_row;
        loop {
            let Some(From::Row(i)) = col_from[col] else { unreachable!() };
            steps.push((i, col, true));
            match row_from[i].expect("row reached") {
                From::Source => {
                    bottleneck = bottleneck.min(supplies[i] - out[i]);
                    start_row = i;
                    break;
                }
                From::Col(c) => {
                    bottleneck = bottleneck.min(flow[i][c]);
                    steps.push((i, c, false));
                    col = c;
                }
                From::Row(_) => unreachable!(),
            }
        }
        for &(i, j, forward) in &steps {
            if forward {
                flow[i][j] += bottleneck;
            } else {
                flow[i][j] -= bottleneck;
            }
        }
        out[start_row] += bottleneck;
        inn[end] += bottleneck;
    }
    let flow_value: f64 = inn.iter().sum();
    let target: f64 = supplies.iter().sum::<f64>().max(demands.iter().sum::<f64>());
    let feasible = (flow_value - target).abs() <= MARGINAL_TOL
        && (supplies.iter().sum::<f64>() - demands.iter().sum::<f64>()).abs() <= MARGINAL_TOL;
    Feasibility {
        feasible,
        flow_value,
        plan: feasible.then_some(flow),
    }
}

/// [`feasible_along`] on two distributions with a predicate over atoms.
pub fn feasible_along_relation<X, Y>(phi: &Dist<X>, psi: &Dist<Y>, related: impl Fn(&X, &Y) -> bool) -> Feasibility
where
    X: Eq + Hash + Clone,
    Y: Eq + Hash + Clone,
{
    let xs: Vec<(&X, f64)> = phi.iter().collect();
    let ys: Vec<(&Y, f64)> = psi.iter().collect();
    let supplies: Vec<f64> = xs.iter().map(|(_, p)| *p).collect();
    let demands: Vec<f64> = ys.iter().map(|(_, q)| *q).collect();
    feasible_along(&supplies, &demands, |i, j| related(xs[i].0, ys[j].0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inst(s: &[f64], d: &[f64], c: &[&[f64]]) -> TransportInstance {
        TransportInstance {
            supplies: s.to_vec(),
            demands: d.to_vec(),
            costs: c.iter().map(|r| r.to_vec()).collect(),
        }
    }

    /// Optimum by enumerating every spanning-tree basis and keeping the
    /// feasible ones. Independent of the simplex code above.
    fn vertex_oracle(inst: &TransportInstance) -> f64 {
        let (m, n) = (inst.supplies.len(), inst.demands.len());
        let cells: Vec<(usize, usize)> = (0..m).cartesian_product(0..n).collect();
        let mut best = f64::INFINITY;
        for basis in cells.iter().copied().combinations(m + n - 1) {
            if let Some(x) = basic_solution(inst, &basis) {
                let v: f64 = basis.iter().zip(&x).map(|(&(i, j), t)| t * inst.costs[i][j]).sum();
                best = best.min(v);
            }
        }
        best
    }

    /// Solves for the flows on a candidate basis by peeling leaves; returns
    /// None when the cells do not form a tree or a flow is negative.
    fn basic_solution(inst: &TransportInstance, basis: &[(usize, usize)]) -> Option<Vec<f64>> {
        let (m, n) = (inst.supplies.len(), inst.demands.len());
        let mut rs = inst.supplies.clone();
        let mut cs = inst.demands.clone();
        let mut alive = vec![true; basis.len()];
        let mut x = vec![0.0; basis.len()];
        for _ in 0..basis.len() {
            let deg_r = |i: usize, alive: &[bool]| basis.iter().zip(alive).filter(|(c, a)| **a && c.0 == i).count();
            let deg_c = |j: usize, alive: &[bool]| basis.iter().zip(alive).filter(|(c, a)| **a && c.1 == j).count();
            let mut found = None;
            for (k, &(i, j)) in basis.iter().enumerate() {
                if !alive[k] {
                    continue;
                }
                if deg_r(i, &alive) == 1 {
                    found = Some((k, true));
                    break;
                }
                if deg_c(j, &alive) == 1 {
                    found = Some((k, false));
                    break;
                }
            }
            let (k, row_leaf) = found?;
            let (i, j) = basis[k];
            let t = if row_leaf { rs[i] } else { cs[j] };
            x[k] = t;
            rs[i] -= t;
            cs[j] -= t;
            alive[k] = false;
        }
        let ok = x.iter().all(|&t| t >= -1e-12)
            && rs.iter().all(|r| r.abs() < 1e-9)
            && cs.iter().all(|c| c.abs() < 1e-9)
            && m + n - 1 == basis.len();
        ok.then_some(x)
    }

    fn random_simplex_point(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }

    #[test]
    fn trivial_identity() {
        let p = solve(&inst(&[1.0], &[1.0], &[&[0.0]])).unwrap();
        assert_eq!(p.value, 0.0);
    }

    #[test]
    fn unique_plan_example() {
        // Only one plan: all of a's mass splits evenly.
        let i = inst(&[1.0], &[0.5, 0.5], &[&[0.0, 1.0]]);
        let p = solve(&i).unwrap();
        assert!((p.value - 0.5).abs() < 1e-15);
        p.certify(&i, 1e-9).unwrap();
    }

    #[test]
    fn bottom_lifted_example() {
        // Supplies: the identity function; demands: ⊥ ½, identity ½.
        // Column ⊥ costs 1, column identity costs 0.
        let i = inst(&[1.0], &[0.5, 0.5], &[&[1.0, 0.0]]);
        assert!((solve(&i).unwrap().value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_marginals() {
        let i = inst(&[1.0], &[0.5], &[&[0.0]]);
        assert!(matches!(solve(&i), Err(TransportError::Marginals { .. })));
        let i = inst(&[1.0], &[1.0], &[&[1.5]]);
        assert!(matches!(solve(&i), Err(TransportError::BadCost(_))));
        let i = inst(&[1.0], &[1.0], &[&[0.5, 0.5]]);
        assert!(matches!(solve(&i), Err(TransportError::Shape { .. })));
    }

    #[test]
    fn zero_masses_are_stripped() {
        let i = inst(&[0.0, 1.0], &[0.5, 0.0, 0.5], &[&[0.0, 0.0, 0.0], &[0.2, 0.9, 0.4]]);
        let p = solve(&i).unwrap();
        assert!((p.value - 0.3).abs() < 1e-12);
        p.certify(&i, 1e-9).unwrap();
        assert!((p.dual_value(&i) - p.value).abs() < 1e-12);
    }

    #[test]
    fn matches_vertex_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let m = rng.gen_range(1..=3);
            let n = rng.gen_range(1..=4);
            let i = TransportInstance {
                supplies: random_simplex_point(&mut rng, m),
                demands: random_simplex_point(&mut rng, n),
                costs: (0..m).map(|_| (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect()).collect(),
            };
            let p = solve(&i).unwrap();
            let o = vertex_oracle(&i);
            assert!((p.value - o).abs() < 1e-9, "{} vs {o} on {i:?}", p.value);
            p.certify(&i, 1e-9).unwrap();
        }
    }

    #[test]
    fn degenerate_instances() {
        // Equal dyadic masses create ties in the initial basis.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = rng.gen_range(2..=6);
            let n = rng.gen_range(2..=6);
            let i = TransportInstance {
                supplies: vec![1.0 / m as f64; m],
                demands: vec![1.0 / n as f64; n],
                costs: (0..m).map(|_| (0..n).map(|_| f64::from(rng.gen_range(0..3u8)) / 2.0).collect()).collect(),
            };
            let p = solve(&i).unwrap();
            p.certify(&i, 1e-9).unwrap();
            assert!((p.dual_value(&i) - p.value).abs() < 1e-9);
        }
    }

    #[test]
    fn feasibility_examples() {
        let half = [0.5, 0.5];
        assert!(feasible_along(&half, &half, |i, j| i == j).feasible);
        assert!(!feasible_along(&[1.0], &[1.0], |_, _| false).feasible);
        let f = feasible_along(&[0.5, 0.5], &[1.0], |_, _| true);
        assert!(f.feasible);
        assert_eq!(f.plan.unwrap(), vec![vec![0.5], vec![0.5]]);
    }

    #[test]
    fn feasibility_matches_zero_cost_oracle() {
        // Feasible iff the 0/1 cost optimum is zero, by vertex enumeration.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let m = rng.gen_range(1..=4);
            let n = rng.gen_range(1..=4);
            let rel: Vec<Vec<bool>> = (0..m).map(|_| (0..n).map(|_| rng.gen_bool(0.5)).collect()).collect();
            let dyadic = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> {
                let w: Vec<u32> = (0..k).map(|_| rng.gen_range(1..4)).collect();
                let s: u32 = w.iter().sum();
                w.into_iter().map(|x| f64::from(x) / f64::from(s)).collect()
            };
            let s = dyadic(&mut rng, m);
            let d = dyadic(&mut rng, n);
            let i = TransportInstance {
                supplies: s.clone(),
                demands: d.clone(),
                costs: rel.iter().map(|r| r.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect()).collect(),
            };
            let oracle = vertex_oracle(&i) < 1e-9;
            let got = feasible_along(&s, &d, |a, b| rel[a][b]);
            assert_eq!(got.feasible, oracle, "{rel:?} {s:?} {d:?}");
            if let Some(plan) = got.plan {
                for a in 0..m {
                    for b in 0..n {
                        assert!(rel[a][b] || plan[a][b] == 0.0);
                    }
                }
            }
        }
    }
}
