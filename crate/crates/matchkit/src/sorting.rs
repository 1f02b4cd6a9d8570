//! Concordance classification of couple pairs, the three sorting checks
//! (global, within-group, weak), concordance-improving transfers, and a
//! backtracking search for couplings with globally concordant support.
//!
//! Throughout, a pair of couples (x,y), (x',y') is tested through the
//! products (x_i - x'_i)(y_j - y'_j): nonnegative for (i,j) in P and
//! nonpositive for (i,j) in N gives weak concordance; a strict sign on some
//! pattern entry upgrades it to concordance. Swapping the roles of P and N
//! gives the reversed (N,P) flags.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{
    lex_cmp, Cell, ComplementarityPattern, DiscreteMeasure, MarketInstance, MatchingMeasure,
};

/// Concordance flags for one pair of couples under a fixed pattern.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairClass {
    pub pn_weak_concordant: bool,
    pub pn_concordant: bool,
    pub np_weak_concordant: bool,
    pub np_concordant: bool,
}

/// Classifies the pair of couples c1 = (x,y), c2 = (x',y'). Products within
/// `tol` of zero count as zero; `tol` must be nonnegative.
pub fn classify_pair(
    c1: (&[f64], &[f64]),
    c2: (&[f64], &[f64]),
    pattern: &ComplementarityPattern,
    tol: f64,
) -> Result<PairClass> {
    if c1.0.len() != c2.0.len() || c1.1.len() != c2.1.len() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "couples of dims ({},{}) and ({},{})",
                c1.0.len(),
                c1.1.len(),
                c2.0.len(),
                c2.1.len()
            ),
        });
    }
    pattern.validate(c1.0.len(), c1.1.len())?;

    let mut weak_pn = true;
    let mut strict_pn = false;
    let mut weak_np = true;
    let mut strict_np = false;
    let mut scan = |pairs: &[(usize, usize)], positive_side: bool| {
        for &(i, j) in pairs {
            let prod = (c1.0[i - 1] - c2.0[i - 1]) * (c1.1[j - 1] - c2.1[j - 1]);
            let (lo, hi) = (prod < -tol, prod > tol);
            if positive_side {
                // entry of P: pn wants >= 0, np wants <= 0
                if lo {
                    weak_pn = false;
                    strict_np = true;
                }
                if hi {
                    weak_np = false;
                    strict_pn = true;
                }
            } else {
                // entry of N: pn wants <= 0, np wants >= 0
                if hi {
                    weak_pn = false;
                    strict_np = true;
                }
                if lo {
                    weak_np = false;
                    strict_pn = true;
                }
            }
        }
    };
    scan(&pattern.p, true);
    scan(&pattern.n, false);

    Ok(PairClass {
        pn_weak_concordant: weak_pn,
        pn_concordant: weak_pn && strict_pn,
        np_weak_concordant: weak_np,
        np_concordant: weak_np && strict_np,
    })
}

/// A violating pair of support couples, reported in lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupleWitness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub y_prime: Vec<f64>,
}

/// Result of a sorting check over a matching's support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SortingVerdict {
    pub holds: bool,
    pub witness: Option<CoupleWitness>,
    /// Cells with mass strictly above this threshold counted as support.
    pub mass_threshold: f64,
}

fn support_cells(mm: &MatchingMeasure, mass_threshold: f64) -> Vec<&Cell> {
    let mut cells: Vec<&Cell> = mm.cells.iter().filter(|c| c.mass > mass_threshold).collect();
    cells.sort_by(|a, b| lex_cmp(&a.x, &b.x).then_with(|| lex_cmp(&a.y, &b.y)));
    cells
}

fn witness_from(a: &Cell, b: &Cell) -> CoupleWitness {
    CoupleWitness {
        x: a.x.clone(),
        y: a.y.clone(),
        x_prime: b.x.clone(),
        y_prime: b.y.clone(),
    }
}

/// Global check: every pair of support couples must be P,N weak concordant.
/// Returns the lexicographically smallest violating pair otherwise.
pub fn check_global_pn(
    mm: &MatchingMeasure,
    pattern: &ComplementarityPattern,
    tol: f64,
    mass_threshold: f64,
) -> Result<SortingVerdict> {
    let cells = support_cells(mm, mass_threshold);
    for (ai, a) in cells.iter().enumerate() {
        for b in cells.iter().skip(ai + 1) {
            let class = classify_pair((&a.x, &a.y), (&b.x, &b.y), pattern, tol)?;
            if !class.pn_weak_concordant {
                return Ok(SortingVerdict {
                    holds: false,
                    witness: Some(witness_from(a, b)),
                    mass_threshold,
                });
            }
        }
    }
    Ok(SortingVerdict { holds: true, witness: None, mass_threshold })
}

/// Weak check: no pair of support couples may be N,P concordant.
pub fn check_weak_pn(
    mm: &MatchingMeasure,
    pattern: &ComplementarityPattern,
    tol: f64,
    mass_threshold: f64,
) -> Result<SortingVerdict> {
    let cells = support_cells(mm, mass_threshold);
    for (ai, a) in cells.iter().enumerate() {
        for b in cells.iter().skip(ai + 1) {
            let class = classify_pair((&a.x, &a.y), (&b.x, &b.y), pattern, tol)?;
            if class.np_concordant {
                return Ok(SortingVerdict {
                    holds: false,
                    witness: Some(witness_from(a, b)),
                    mass_threshold,
                });
            }
        }
    }
    Ok(SortingVerdict { holds: true, witness: None, mass_threshold })
}

/// A within-group violation: the attribute pair and the couple pair whose
/// restricted comparison has the wrong sign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WithinGroupViolation {
    pub i: usize,
    pub j: usize,
    pub witness: CoupleWitness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WithinGroupVerdict {
    pub holds: bool,
    pub violation: Option<WithinGroupViolation>,
    pub mass_threshold: f64,
}

/// Within-group check: for each (i,j) in P (resp. N), support pairs that
/// agree exactly on every firm coordinate other than i and every worker
/// coordinate other than j must have (x_i - x'_i)(y_j - y'_j) >= 0
/// (resp. <= 0). Frozen coordinates are compared exactly.
pub fn check_within_group(
    mm: &MatchingMeasure,
    pattern: &ComplementarityPattern,
    tol: f64,
    mass_threshold: f64,
) -> Result<WithinGroupVerdict> {
    pattern.validate(mm.firm_dim, mm.worker_dim)?;
    let cells = support_cells(mm, mass_threshold);
    let frozen_equal = |a: &Cell, b: &Cell, i: usize, j: usize| {
        a.x.iter()
            .zip(b.x.iter())
            .enumerate()
            .all(|(k, (u, v))| k == i - 1 || u == v)
            && a.y
                .iter()
                .zip(b.y.iter())
                .enumerate()
                .all(|(l, (u, v))| l == j - 1 || u == v)
    };
    for (ai, a) in cells.iter().enumerate() {
        for b in cells.iter().skip(ai + 1) {
            for (&(i, j), positive_side) in pattern
                .p
                .iter()
                .map(|p| (p, true))
                .chain(pattern.n.iter().map(|n| (n, false)))
            {
                if !frozen_equal(a, b, i, j) {
                    continue;
                }
                let prod = (a.x[i - 1] - b.x[i - 1]) * (a.y[j - 1] - b.y[j - 1]);
                let bad = if positive_side { prod < -tol } else { prod > tol };
                if bad {
                    return Ok(WithinGroupVerdict {
                        holds: false,
                        violation: Some(WithinGroupViolation { i, j, witness: witness_from(a, b) }),
                        mass_threshold,
                    });
                }
            }
        }
    }
    Ok(WithinGroupVerdict { holds: true, violation: None, mass_threshold })
}

/// A uniform mass transfer: alpha is added at the corners (x,y) and
/// (x',y') and removed from (x,y') and (x',y), leaving both marginals
/// unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub y_prime: Vec<f64>,
    pub alpha: f64,
}

impl Transfer {
    /// Builds the transfer away from a losing pair of couples
    /// (x, y_wrong), (x', y_wrong'): the receiving corners rewire the same
    /// types into (x, y_wrong'), (x', y_wrong).
    pub fn from_losing_pair(c1: (&[f64], &[f64]), c2: (&[f64], &[f64]), alpha: f64) -> Self {
        Transfer {
            x: c1.0.to_vec(),
            y: c2.1.to_vec(),
            x_prime: c2.0.to_vec(),
            y_prime: c1.1.to_vec(),
            alpha,
        }
    }

    pub fn receiving(&self) -> [(&[f64], &[f64]); 2] {
        [(&self.x, &self.y), (&self.x_prime, &self.y_prime)]
    }

    pub fn losing(&self) -> [(&[f64], &[f64]); 2] {
        [(&self.x, &self.y_prime), (&self.x_prime, &self.y)]
    }

    /// True when the receiving pair is P,N weak concordant, equivalently
    /// when the losing pair is N,P weak concordant. Both conditions are
    /// evaluated; they negate the same products, so they must agree.
    pub fn is_concordance_improving(
        &self,
        pattern: &ComplementarityPattern,
        tol: f64,
    ) -> Result<bool> {
        let [r1, r2] = self.receiving();
        let [l1, l2] = self.losing();
        let recv = classify_pair(r1, r2, pattern, tol)?.pn_weak_concordant;
        let lose = classify_pair(l1, l2, pattern, tol)?.np_weak_concordant;
        assert_eq!(recv, lose, "receiving and losing concordance must mirror each other");
        Ok(recv)
    }
}

/// Applies a transfer. Each losing corner must carry at least alpha mass.
/// Marginals are preserved exactly.
pub fn apply_transfer(mm: &MatchingMeasure, t: &Transfer) -> Result<MatchingMeasure> {
    if t.alpha < 0.0 || !t.alpha.is_finite() {
        return Err(Error::InvalidInput(format!("transfer alpha must be >= 0, got {}", t.alpha)));
    }
    for (x, y) in t.losing() {
        let have = mm.mass_at(x, y);
        if have < t.alpha {
            return Err(Error::InsufficientMass {
                x: x.to_vec(),
                y: y.to_vec(),
                have,
                need: t.alpha,
            });
        }
    }
    let mut out = mm.clone();
    for (x, y) in t.receiving() {
        out.cells.push(Cell { x: x.to_vec(), y: y.to_vec(), mass: t.alpha });
    }
    for (x, y) in t.losing() {
        out.cells.push(Cell { x: x.to_vec(), y: y.to_vec(), mass: -t.alpha });
    }
    out.canonicalize();
    Ok(out)
}

/// Outcome of the global-sorting existence search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalSearchOutcome {
    pub exists: bool,
    pub witness: Option<MatchingMeasure>,
    pub nodes_visited: u64,
}

/// Max-flow feasibility of transporting firm masses to worker masses using
/// only the allowed (firm, worker) cells. Returns the cell flows when the
/// full mass can be routed, within a relative tolerance.
fn transport_on_cells(
    firm_mass: &[f64],
    worker_mass: &[f64],
    allowed: &[bool],
) -> Option<Vec<f64>> {
    let nf = firm_mass.len();
    let nw = worker_mass.len();
    let total: f64 = firm_mass.iter().sum();
    let n = nf + nw + 2;
    let source = 0;
    let sink = n - 1;
    // capacity[u][v], firms are 1..=nf, workers nf+1..=nf+nw
    let mut cap = vec![vec![0.0f64; n]; n];
    for (f, &m) in firm_mass.iter().enumerate() {
        cap[source][1 + f] = m;
    }
    for (w, &m) in worker_mass.iter().enumerate() {
        cap[1 + nf + w][sink] = m;
    }
    for f in 0..nf {
        for w in 0..nw {
            if allowed[f * nw + w] {
                cap[1 + f][1 + nf + w] = f64::INFINITY;
            }
        }
    }
    let mut flow = 0.0;
    loop {
        // BFS for an augmenting path in the residual graph
        let mut parent = vec![usize::MAX; n];
        parent[source] = source;
        let mut queue = std::collections::VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if parent[v] == usize::MAX && cap[u][v] > 1e-12 {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[sink] == usize::MAX {
            break;
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = sink;
        while v != source {
            let u = parent[v];
            bottleneck = bottleneck.min(cap[u][v]);
            v = u;
        }
        let mut v = sink;
        while v != source {
            let u = parent[v];
            cap[u][v] -= bottleneck;
            cap[v][u] += bottleneck;
            v = u;
        }
        flow += bottleneck;
    }
    if (total - flow).abs() > 1e-9 * 1f64.max(total) {
        return None;
    }
    let mut cell_flow = vec![0.0; nf * nw];
    for f in 0..nf {
        for w in 0..nw {
            if allowed[f * nw + w] {
                // residual on the reverse edge equals the flow pushed
                cell_flow[f * nw + w] = cap[1 + nf + w][1 + f];
            }
        }
    }
    Some(cell_flow)
}

struct GlobalSearch<'a> {
    firms: &'a DiscreteMeasure,
    workers: &'a DiscreteMeasure,
    cells: Vec<(usize, usize)>,
    concordant: Vec<Vec<bool>>,
    budget: u64,
    nodes: u64,
}

impl GlobalSearch<'_> {
    /// Include/exclude search over candidate cells in lexicographic order.
    /// `allowed` starts all-true; excluding a cell clears its slot. Returns
    /// the witness flows when a pairwise-concordant feasible support is
    /// found.
    fn dfs(&mut self, next: usize, included: &mut Vec<usize>, allowed: &mut Vec<bool>) -> Result<Option<Vec<f64>>> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded { nodes: self.nodes });
        }
        if next == self.cells.len() {
            let fm: Vec<f64> = self.firms.atoms.iter().map(|a| a.mass).collect();
            let wm: Vec<f64> = self.workers.atoms.iter().map(|a| a.mass).collect();
            return Ok(transport_on_cells(&fm, &wm, allowed));
        }
        // try including the cell when it stays pairwise concordant
        if included.iter().all(|&k| self.concordant[k][next]) {
            included.push(next);
            if let Some(w) = self.dfs(next + 1, included, allowed)? {
                return Ok(Some(w));
            }
            included.pop();
        }
        // exclude it; prune when the remaining cells cannot carry the mass
        let (fi, wi) = self.cells[next];
        let slot = fi * self.workers.atoms.len() + wi;
        allowed[slot] = false;
        let fm: Vec<f64> = self.firms.atoms.iter().map(|a| a.mass).collect();
        let wm: Vec<f64> = self.workers.atoms.iter().map(|a| a.mass).collect();
        let feasible = transport_on_cells(&fm, &wm, allowed).is_some();
        let result = if feasible { self.dfs(next + 1, included, allowed)? } else { None };
        allowed[slot] = true;
        Ok(result)
    }
}

/// Decides whether some feasible coupling of the market has pairwise P,N
/// weak concordant support, returning one such coupling when it exists.
/// The search is exponential in the worst case; `budget` bounds the number
/// of visited nodes and exhaustion is an error, never a verdict.
pub fn exists_global_pn(
    m: &MarketInstance,
    pattern: &ComplementarityPattern,
    tol: f64,
    budget: u64,
) -> Result<GlobalSearchOutcome> {
    pattern.validate(m.firms.dim, m.workers.dim)?;
    let mut firms = m.firms.clone();
    firms.canonicalize();
    let mut workers = m.workers.clone();
    workers.canonicalize();
    firms.atoms.retain(|a| a.mass > 0.0);
    workers.atoms.retain(|a| a.mass > 0.0);
    if firms.atoms.is_empty() || workers.atoms.is_empty() {
        return Err(Error::EmptyData("market has an empty side".into()));
    }

    let nf = firms.atoms.len();
    let nw = workers.atoms.len();
    let mut cells = Vec::with_capacity(nf * nw);
    for f in 0..nf {
        for w in 0..nw {
            cells.push((f, w));
        }
    }
    let mut concordant = vec![vec![false; cells.len()]; cells.len()];
    for (a, &(fa, wa)) in cells.iter().enumerate() {
        for (b, &(fb, wb)) in cells.iter().enumerate() {
            let class = classify_pair(
                (&firms.atoms[fa].attrs, &workers.atoms[wa].attrs),
                (&firms.atoms[fb].attrs, &workers.atoms[wb].attrs),
                pattern,
                tol,
            )?;
            concordant[a][b] = class.pn_weak_concordant;
        }
    }

    let mut search = GlobalSearch {
        firms: &firms,
        workers: &workers,
        cells,
        concordant,
        budget,
        nodes: 0,
    };
    let mut included = Vec::new();
    let mut allowed = vec![true; nf * nw];
    let found = search.dfs(0, &mut included, &mut allowed)?;
    let witness = found.map(|flows| {
        let mut out_cells = Vec::new();
        for f in 0..nf {
            for w in 0..nw {
                let mass = flows[f * nw + w];
                if mass > 0.0 {
                    out_cells.push(Cell {
                        x: firms.atoms[f].attrs.clone(),
                        y: workers.atoms[w].attrs.clone(),
                        mass,
                    });
                }
            }
        }
        let mut mm = MatchingMeasure::new(firms.dim, workers.dim, out_cells);
        mm.canonicalize();
        mm
    });
    Ok(GlobalSearchOutcome { exists: witness.is_some(), witness, nodes_visited: search.nodes })
}
