//! Exact solving of the aggregate-output maximization problem on finite
//! markets, a complete-enumeration oracle, unidimensional assortative
//! couplings, and a harness checking the optimality/sorting implications on
//! oracle-sized instances.
//!
//! The solver is a successive-shortest-path minimum-cost flow over the
//! support product with integer masses, so optimal plans come out with
//! integer cell masses. Ties are broken by a greedy second phase restricted
//! to the optimal face: support cells in lexicographic order each receive
//! the largest mass consistent with optimality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{
    close, Cell, ComplementarityPattern, DiscreteMeasure, MarketInstance,
    MatchingMeasure, OutputSpec, DEFAULT_TOL,
};
use crate::modularity::{check_pairwise, Grid};
use crate::sorting::{check_global_pn, check_weak_pn, check_within_group, exists_global_pn};

/// Unit cap for the enumeration oracle.
pub const ORACLE_UNIT_LIMIT: u64 = 12;

/// Node budget for the oracle's table enumeration.
const ORACLE_NODE_BUDGET: u64 = 20_000_000;

/// Default scaling for float-mass instances: masses are rounded to this
/// many decimal digits and solved exactly as integers.
pub const DEFAULT_FLOAT_DIGITS: u32 = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerSolution {
    pub matching: MatchingMeasure,
    pub value: f64,
    /// Number of optimal plans found by the oracle, when a caller attached
    /// oracle output. The solver itself leaves this empty.
    pub optimal_basis_count_hint: Option<usize>,
    /// Denominator used to convert float masses to integers, when the
    /// instance required rounding. Integer-mass instances solve exactly.
    pub scaling: Option<u64>,
}

fn positive_atoms(m: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    let mut c = m.clone();
    c.canonicalize();
    if let Some(bad) = c.atoms.iter().find(|a| !a.mass.is_finite() || a.mass < 0.0) {
        return Err(Error::InvalidInput(format!(
            "atom at {:?} has negative or non-finite mass {}",
            bad.attrs, bad.mass
        )));
    }
    c.atoms.retain(|a| a.mass > 0.0);
    Ok(c)
}

/// Exact min-cost transportation with integer supplies/demands and float
/// costs. Returns integral flows and the final node potentials.
struct Transport {
    flows: Vec<Vec<u64>>,
    firm_potential: Vec<f64>,
    worker_potential: Vec<f64>,
}

fn min_cost_transport(supply: &[u64], demand: &[u64], cost: &[Vec<f64>]) -> Transport {
    let nf = supply.len();
    let nw = demand.len();
    let mut flows = vec![vec![0u64; nw]; nf];
    let mut rem_s: Vec<u64> = supply.to_vec();
    let mut rem_d: Vec<u64> = demand.to_vec();
    let mut pf = vec![0.0f64; nf];
    // initial worker potentials: one-hop shortest distances
    let mut pw: Vec<f64> = (0..nw)
        .map(|w| (0..nf).map(|f| cost[f][w]).fold(f64::INFINITY, f64::min))
        .collect();

    loop {
        let remaining: u64 = rem_s.iter().sum();
        if remaining == 0 {
            break;
        }
        // Dijkstra on reduced costs from all firms with remaining supply.
        // Node ids: firms 0..nf, workers nf..nf+nw.
        let n = nf + nw;
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut done = vec![false; n];
        for (f, &s) in rem_s.iter().enumerate() {
            if s > 0 {
                dist[f] = 0.0;
                parent[f] = f;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < nf {
                let f = u;
                for w in 0..nw {
                    let rc = (cost[f][w] + pf[f] - pw[w]).max(0.0);
                    if dist[f] + rc < dist[nf + w] {
                        dist[nf + w] = dist[f] + rc;
                        parent[nf + w] = f;
                    }
                }
            } else {
                let w = u - nf;
                for f in 0..nf {
                    if flows[f][w] > 0 {
                        let rc = (-cost[f][w] - pf[f] + pw[w]).max(0.0);
                        if dist[nf + w] + rc < dist[f] {
                            dist[f] = dist[nf + w] + rc;
                            parent[f] = nf + w;
                        }
                    }
                }
            }
        }
        // nearest worker with unmet demand
        let mut target = usize::MAX;
        let mut best = f64::INFINITY;
        for (w, &d) in rem_d.iter().enumerate() {
            if d > 0 && dist[nf + w] < best {
                best = dist[nf + w];
                target = w;
            }
        }
        assert!(target != usize::MAX, "balanced instance must stay feasible");
        let dt = dist[nf + target];
        for f in 0..nf {
            pf[f] += dist[f].min(dt);
        }
        for w in 0..nw {
            pw[w] += dist[nf + w].min(dt);
        }
        // walk the path back to a source firm, collecting the bottleneck
        let mut path = Vec::new();
        let mut node = nf + target;
        while parent[node] != node {
            path.push((parent[node], node));
            node = parent[node];
        }
        let source = node;
        let mut bottleneck = rem_s[source].min(rem_d[target]);
        for &(u, v) in &path {
            if u >= nf {
                // backward arc worker u -> firm v carries flow[v][u-nf]
                bottleneck = bottleneck.min(flows[v][u - nf]);
            }
        }
        for &(u, v) in &path {
            if u < nf {
                flows[u][v - nf] += bottleneck;
            } else {
                flows[v][u - nf] -= bottleneck;
            }
        }
        rem_s[source] -= bottleneck;
        rem_d[target] -= bottleneck;
    }
    Transport { flows, firm_potential: pf, worker_potential: pw }
}

/// Largest extra flow that can be pushed onto arc (f0, w0) inside the
/// residual graph restricted to `open` arcs, then freezes nothing; the
/// caller updates `flows`. Augmenting paths run from w0 back to f0.
fn maximize_arc(
    flows: &mut [Vec<u64>],
    open: &[Vec<bool>],
    f0: usize,
    w0: usize,
) {
    let nf = flows.len();
    let nw = flows[0].len();
    loop {
        // BFS from worker w0 to firm f0; worker->firm steps use positive
        // flows (they will be decreased), firm->worker steps use open arcs
        // (increased). The arc (f0,w0) itself is excluded.
        let n = nf + nw;
        let mut parent = vec![usize::MAX; n];
        let start = nf + w0;
        parent[start] = start;
        let mut queue = std::collections::VecDeque::from([start]);
        'bfs: while let Some(u) = queue.pop_front() {
            if u < nf {
                let f = u;
                for w in 0..nw {
                    if parent[nf + w] == usize::MAX && open[f][w] && !(f == f0 && w == w0) {
                        parent[nf + w] = f;
                        queue.push_back(nf + w);
                    }
                }
            } else {
                let w = u - nf;
                for f in 0..nf {
                    if parent[f] == usize::MAX
                        && flows[f][w] > 0
                        && open[f][w]
                        && !(f == f0 && w == w0)
                    {
                        parent[f] = u;
                        if f == f0 {
                            break 'bfs;
                        }
                        queue.push_back(f);
                    }
                }
            }
        }
        if parent[f0] == usize::MAX {
            return;
        }
        // bottleneck over worker->firm steps
        let mut bottleneck = u64::MAX;
        let mut node = f0;
        while parent[node] != node {
            let p = parent[node];
            if node < nf {
                bottleneck = bottleneck.min(flows[node][p - nf]);
            }
            node = p;
        }
        let mut node = f0;
        while parent[node] != node {
            let p = parent[node];
            if node < nf {
                flows[node][p - nf] -= bottleneck;
            } else {
                flows[p][node - nf] += bottleneck;
            }
            node = p;
        }
        flows[f0][w0] += bottleneck;
    }
}

fn scale_to_integers(m: &DiscreteMeasure, scale: u64) -> Vec<u64> {
    m.atoms
        .iter()
        .map(|a| (a.mass * scale as f64).round() as u64)
        .collect()
}

/// Solves max over feasible plans of the aggregate output, exactly for
/// integer masses. Float masses are rounded at `DEFAULT_FLOAT_DIGITS`
/// decimal digits and the scaling is reported in the solution.
pub fn solve_planner(m: &MarketInstance, q: &OutputSpec) -> Result<PlannerSolution> {
    solve_planner_scaled(m, q, DEFAULT_FLOAT_DIGITS)
}

pub fn solve_planner_scaled(
    m: &MarketInstance,
    q: &OutputSpec,
    float_digits: u32,
) -> Result<PlannerSolution> {
    let firms = positive_atoms(&m.firms)?;
    let workers = positive_atoms(&m.workers)?;
    if firms.atoms.is_empty() || workers.atoms.is_empty() {
        return Err(Error::EmptyData("market has an empty side".into()));
    }
    let integral = firms.is_integer() && workers.is_integer();
    let scale: u64 = if integral { 1 } else { 10u64.pow(float_digits) };
    let supply = scale_to_integers(&firms, scale);
    let demand = scale_to_integers(&workers, scale);
    let (ts, td) = (supply.iter().sum::<u64>(), demand.iter().sum::<u64>());
    if ts != td {
        return Err(Error::UnbalancedMarket {
            firms: ts as f64 / scale as f64,
            workers: td as f64 / scale as f64,
        });
    }

    let nf = firms.atoms.len();
    let nw = workers.atoms.len();
    let mut value_table = vec![vec![0.0f64; nw]; nf];
    let mut cost = vec![vec![0.0f64; nw]; nf];
    let mut max_abs: f64 = 1.0;
    for f in 0..nf {
        for w in 0..nw {
            let v = q.eval(&firms.atoms[f].attrs, &workers.atoms[w].attrs)?;
            if !v.is_finite() {
                return Err(Error::QEval {
                    x: firms.atoms[f].attrs.clone(),
                    y: workers.atoms[w].attrs.clone(),
                    reason: "non-finite output value".into(),
                });
            }
            value_table[f][w] = v;
            cost[f][w] = -v;
            max_abs = max_abs.max(v.abs());
        }
    }

    let mut t = min_cost_transport(&supply, &demand, &cost);

    // optimal face: arcs whose reduced cost vanishes
    let rc_tol = 1e-9 * max_abs;
    let mut open = vec![vec![false; nw]; nf];
    for f in 0..nf {
        for w in 0..nw {
            let rc = cost[f][w] + t.firm_potential[f] - t.worker_potential[w];
            open[f][w] = rc.abs() <= rc_tol || t.flows[f][w] > 0;
        }
    }
    // greedy lexicographic tie-break on the optimal face
    for f in 0..nf {
        for w in 0..nw {
            if open[f][w] {
                maximize_arc(&mut t.flows, &open, f, w);
                open[f][w] = false;
            }
        }
    }

    let mut cells = Vec::new();
    let mut value = 0.0;
    for f in 0..nf {
        for w in 0..nw {
            if t.flows[f][w] > 0 {
                let mass = t.flows[f][w] as f64 / scale as f64;
                value += mass * value_table[f][w];
                cells.push(Cell {
                    x: firms.atoms[f].attrs.clone(),
                    y: workers.atoms[w].attrs.clone(),
                    mass,
                });
            }
        }
    }
    let mut matching = MatchingMeasure::new(firms.dim, workers.dim, cells);
    matching.canonicalize();
    Ok(PlannerSolution {
        matching,
        value,
        optimal_basis_count_hint: None,
        scaling: if integral { None } else { Some(scale) },
    })
}

struct OracleSearch<'a> {
    firms: &'a DiscreteMeasure,
    workers: &'a DiscreteMeasure,
    values: Vec<Vec<f64>>,
    row_mass: Vec<u64>,
    col_rem: Vec<u64>,
    row_best: Vec<f64>,
    table: Vec<Vec<u64>>,
    best: f64,
    optima: Vec<Vec<Vec<u64>>>,
    nodes: u64,
}

impl OracleSearch<'_> {
    fn tol(&self, v: f64) -> f64 {
        1e-9 * 1f64.max(v.abs()).max(self.best.abs())
    }

    fn leaf(&mut self, value: f64) {
        if self.optima.is_empty() {
            self.best = value;
            self.optima.push(self.table.clone());
            return;
        }
        let tol = self.tol(value);
        if value > self.best + tol {
            self.best = value;
            self.optima.clear();
            self.optima.push(self.table.clone());
        } else if value >= self.best - tol {
            self.optima.push(self.table.clone());
        }
    }

    /// Fills the table cell by cell in row-major order. `row_left` is the
    /// unassigned mass of the current row; `acc` the value so far.
    fn dfs(&mut self, f: usize, w: usize, row_left: u64, acc: f64) -> Result<()> {
        self.nodes += 1;
        if self.nodes > ORACLE_NODE_BUDGET {
            return Err(Error::BudgetExceeded { nodes: self.nodes });
        }
        let nf = self.firms.atoms.len();
        let nw = self.workers.atoms.len();
        if f == nf {
            self.leaf(acc);
            return Ok(());
        }
        // optimistic bound: every remaining unit earns its row maximum
        let mut bound = acc + row_left as f64 * self.row_best[f];
        for r in f + 1..nf {
            bound += self.row_mass[r] as f64 * self.row_best[r];
        }
        if bound < self.best - self.tol(bound) {
            return Ok(());
        }
        if w == nw - 1 {
            // last column takes the remainder
            if row_left > self.col_rem[w] {
                return Ok(());
            }
            self.table[f][w] = row_left;
            self.col_rem[w] -= row_left;
            let next_left = if f + 1 < nf { self.row_mass[f + 1] } else { 0 };
            self.dfs(f + 1, 0, next_left, acc + row_left as f64 * self.values[f][w])?;
            self.col_rem[w] += row_left;
            self.table[f][w] = 0;
            return Ok(());
        }
        let cap = row_left.min(self.col_rem[w]);
        for k in 0..=cap {
            self.table[f][w] = k;
            self.col_rem[w] -= k;
            self.dfs(f, w + 1, row_left - k, acc + k as f64 * self.values[f][w])?;
            self.col_rem[w] += k;
            self.table[f][w] = 0;
        }
        Ok(())
    }
}

/// Enumerates every feasible integral plan of a small integer-mass market
/// and returns the exact optimum together with all optimal plans. The unit
/// total is capped at `ORACLE_UNIT_LIMIT`.
pub fn brute_force_oracle(
    m: &MarketInstance,
    q: &OutputSpec,
) -> Result<(f64, Vec<MatchingMeasure>)> {
    let firms = positive_atoms(&m.firms)?;
    let workers = positive_atoms(&m.workers)?;
    if firms.atoms.is_empty() || workers.atoms.is_empty() {
        return Err(Error::EmptyData("market has an empty side".into()));
    }
    if !firms.is_integer() || !workers.is_integer() {
        return Err(Error::InvalidInput("the enumeration oracle needs integer masses".into()));
    }
    let total = firms.total_mass();
    if total != workers.total_mass() {
        return Err(Error::UnbalancedMarket {
            firms: total,
            workers: workers.total_mass(),
        });
    }
    if total as u64 > ORACLE_UNIT_LIMIT {
        return Err(Error::InstanceTooLarge { units: total as u64, limit: ORACLE_UNIT_LIMIT });
    }

    let nf = firms.atoms.len();
    let nw = workers.atoms.len();
    let mut values = vec![vec![0.0; nw]; nf];
    for f in 0..nf {
        for w in 0..nw {
            values[f][w] = q.eval(&firms.atoms[f].attrs, &workers.atoms[w].attrs)?;
        }
    }
    let row_best: Vec<f64> = values
        .iter()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let row_mass: Vec<u64> = firms.atoms.iter().map(|a| a.mass as u64).collect();
    let col_rem: Vec<u64> = workers.atoms.iter().map(|a| a.mass as u64).collect();

    let mut search = OracleSearch {
        firms: &firms,
        workers: &workers,
        values,
        row_best,
        table: vec![vec![0; nw]; nf],
        row_mass: row_mass.clone(),
        col_rem,
        best: f64::NEG_INFINITY,
        optima: Vec::new(),
        nodes: 0,
    };
    search.dfs(0, 0, row_mass[0], 0.0)?;

    let value = search.best;
    let optima = search
        .optima
        .into_iter()
        .map(|table| {
            let mut cells = Vec::new();
            for f in 0..nf {
                for w in 0..nw {
                    if table[f][w] > 0 {
                        cells.push(Cell {
                            x: firms.atoms[f].attrs.clone(),
                            y: workers.atoms[w].attrs.clone(),
                            mass: table[f][w] as f64,
                        });
                    }
                }
            }
            let mut mm = MatchingMeasure::new(firms.dim, workers.dim, cells);
            mm.canonicalize();
            mm
        })
        .collect();
    Ok((value, optima))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Positive,
    Negative,
}

/// Comonotone (positive) or antimonotone (negative) coupling of two
/// unidimensional measures with equal totals. The positive coupling's CDF
/// is min{F(x), G(y)}; the negative one's is max{F(x)+G(y)-total, 0}.
pub fn assortative_coupling(
    f: &DiscreteMeasure,
    g: &DiscreteMeasure,
    direction: Direction,
) -> Result<MatchingMeasure> {
    if f.dim != 1 || g.dim != 1 {
        return Err(Error::DimensionMismatch {
            context: format!("assortative coupling needs 1-d measures, got {} and {}", f.dim, g.dim),
        });
    }
    let fa = positive_atoms(f)?;
    let mut ga = positive_atoms(g)?;
    if fa.atoms.is_empty() || ga.atoms.is_empty() {
        return Err(Error::EmptyData("assortative coupling of an empty measure".into()));
    }
    let total = fa.total_mass();
    if !close(total, ga.total_mass(), DEFAULT_TOL) {
        return Err(Error::UnbalancedMarket { firms: total, workers: ga.total_mass() });
    }
    if direction == Direction::Negative {
        ga.atoms.reverse();
    }
    let eps = 1e-12 * 1f64.max(total);
    let mut cells = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    let mut ri = fa.atoms[0].mass;
    let mut rj = ga.atoms[0].mass;
    while i < fa.atoms.len() && j < ga.atoms.len() {
        let delta = ri.min(rj);
        if delta > 0.0 {
            cells.push(Cell {
                x: fa.atoms[i].attrs.clone(),
                y: ga.atoms[j].attrs.clone(),
                mass: delta,
            });
        }
        ri -= delta;
        rj -= delta;
        let i_done = ri <= eps;
        let j_done = rj <= eps;
        if i_done {
            i += 1;
            if i < fa.atoms.len() {
                ri = fa.atoms[i].mass;
            }
        }
        if j_done {
            j += 1;
            if j < ga.atoms.len() {
                rj = ga.atoms[j].mass;
            }
        }
        if !i_done && !j_done {
            break; // unreachable: min always exhausts one side
        }
    }
    let mut mm = MatchingMeasure::new(1, 1, cells);
    mm.canonicalize();
    Ok(mm)
}

/// Outcome of the finite-instance verification harness. Clauses that do
/// not apply to the given output function are left unset. All checks are
/// statements about this instance's finite supports only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub q_pn_modular: bool,
    pub q_strictly_pn_modular: bool,
    /// None when the existence search was inconclusive within budget.
    pub global_sorting_exists: Option<bool>,
    pub optimal_value: f64,
    pub optima_count: usize,
    /// Every optimal plan that is weakly sorted also passes within-group.
    pub clause_1a: Option<bool>,
    /// Strictly modular Q: every optimal plan is weakly sorted.
    pub clause_1b: Option<bool>,
    /// Modular Q: some optimal plan is weakly sorted.
    pub clause_1c: Option<bool>,
    /// Strictly modular Q and global sorting exists: every optimal plan is
    /// globally sorted.
    pub clause_2a: Option<bool>,
    /// Modular Q and global sorting exists: the globally sorted coupling
    /// attains the optimal value.
    pub clause_2b: Option<bool>,
    pub notes: Vec<String>,
}

impl Prop1Report {
    /// True when no applicable clause failed.
    pub fn all_hold(&self) -> bool {
        [self.clause_1a, self.clause_1b, self.clause_1c, self.clause_2a, self.clause_2b]
            .iter()
            .all(|c| *c != Some(false))
    }
}

/// Checks whether Q is (strictly) P,N modular for the given pattern over
/// the product grid of the market's per-coordinate values.
pub fn pattern_compatibility(
    q: &OutputSpec,
    pattern: &ComplementarityPattern,
    grid: &Grid,
    eps: f64,
) -> Result<(bool, bool)> {
    let (fd, wd) = (grid.firm_dim(), grid.worker_dim());
    pattern.validate(fd, wd)?;
    let mut modular = true;
    let mut strict = true;
    for i in 1..=fd {
        for j in 1..=wd {
            let v = check_pairwise(q, i, j, grid, eps)?;
            if pattern.p.contains(&(i, j)) {
                modular &= v.supermodular;
                strict &= v.strictly_supermodular;
            } else if pattern.n.contains(&(i, j)) {
                modular &= v.submodular;
                strict &= v.strictly_submodular;
            } else {
                modular &= v.modular();
                strict &= v.modular();
            }
        }
    }
    Ok((modular, modular && strict))
}

/// Runs the sorting-of-optima checks on one oracle-sized instance.
pub fn verify_prop1(
    m: &MarketInstance,
    q: &OutputSpec,
    pattern: &ComplementarityPattern,
) -> Result<Prop1Report> {
    let grid = Grid::product_from_market(m)?;
    let (modular, strictly) = pattern_compatibility(q, pattern, &grid, 0.0)?;
    let (value, optima) = brute_force_oracle(m, q)?;

    let mut weak_flags = Vec::with_capacity(optima.len());
    let mut within_flags = Vec::with_capacity(optima.len());
    let mut global_flags = Vec::with_capacity(optima.len());
    for plan in &optima {
        weak_flags.push(check_weak_pn(plan, pattern, 0.0, 0.0)?.holds);
        within_flags.push(check_within_group(plan, pattern, 0.0, 0.0)?.holds);
        global_flags.push(check_global_pn(plan, pattern, 0.0, 0.0)?.holds);
    }

    let mut notes =
        vec!["all statements refer to the finite supports of this instance only".to_string()];
    let global = match exists_global_pn(m, pattern, 0.0, 1_000_000) {
        Ok(out) => Some(out),
        Err(Error::BudgetExceeded { nodes }) => {
            notes.push(format!("global-sorting search inconclusive after {nodes} nodes"));
            None
        }
        Err(e) => return Err(e),
    };

    let clause_1a = Some(
        weak_flags
            .iter()
            .zip(within_flags.iter())
            .all(|(&weak, &within)| !weak || within),
    );
    let clause_1b = strictly.then(|| weak_flags.iter().all(|&b| b));
    let clause_1c = modular.then(|| weak_flags.iter().any(|&b| b));
    let exists = global.as_ref().map(|o| o.exists);
    let clause_2a = match (&global, strictly) {
        (Some(out), true) if out.exists => Some(global_flags.iter().all(|&b| b)),
        _ => None,
    };
    let clause_2b = match (&global, modular) {
        (Some(out), true) if out.exists => {
            let w = out.witness.as_ref().expect("witness accompanies existence");
            let wv = q.integrate(w)?;
            Some(close(wv, value, 1e-9))
        }
        _ => None,
    };

    Ok(Prop1Report {
        q_pn_modular: modular,
        q_strictly_pn_modular: strictly,
        global_sorting_exists: exists,
        optimal_value: value,
        optima_count: optima.len(),
        clause_1a,
        clause_1b,
        clause_1c,
        clause_2a,
        clause_2b,
        notes,
    })
}
