//! Dominance between matchings that share marginals, decided through the
//! cone of concordance-improving transfers.
//!
//! A transfer moves equal mass from the discordant corners of a cell
//! rectangle to its concordant corners. One matching dominates another
//! exactly when their difference is a nonnegative combination of such
//! transfer vectors; both membership and its refutation are decided by
//! linear programs over generators drawn from the joint support grid, and
//! every answer ships with a certificate that is re-verified before being
//! returned.

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{
    close, lex_cmp, ComplementarityPattern, MatchingMeasure, TabulatedQ, DEFAULT_TOL,
};
use crate::sorting::{classify_pair, Transfer};

/// Feasibility tolerance for the linear programs, relative to problem scale.
pub const LP_TOL: f64 = 1e-9;

/// Weights below this are treated as zero when extracting certificates.
const WEIGHT_FLOOR: f64 = 1e-12;

/// Relative tolerance used when replaying a certificate against the data.
const REPLAY_TOL: f64 = 1e-7;

/// A grid output function that weakly gains from every admissible transfer
/// yet strictly prefers the allegedly dominated measure, refuting dominance.
#[derive(Debug, Clone, Serialize)]
pub struct SeparatingDirection {
    pub q: TabulatedQ,
    /// Integral of `q` against (M - M'); negative by construction.
    pub gap: f64,
}

/// Evidence accompanying a dominance verdict: transfer weights reproducing
/// vec M - vec M' when dominance holds, a separating direction when it fails.
#[derive(Debug, Clone, Serialize)]
pub enum ConeCertificate {
    /// Each transfer carries its cone weight in `alpha`.
    Transfers(Vec<Transfer>),
    Separating(SeparatingDirection),
}

struct Grid {
    xs: Vec<Vec<f64>>,
    ys: Vec<Vec<f64>>,
}

impl Grid {
    fn from_measures(measures: &[&MatchingMeasure]) -> Grid {
        let mut xs: Vec<Vec<f64>> = Vec::new();
        let mut ys: Vec<Vec<f64>> = Vec::new();
        for m in measures {
            for c in m.positive_cells() {
                xs.push(c.x.clone());
                ys.push(c.y.clone());
            }
        }
        xs.sort_by(|a, b| lex_cmp(a, b));
        xs.dedup();
        ys.sort_by(|a, b| lex_cmp(a, b));
        ys.dedup();
        Grid { xs, ys }
    }

    fn cell(&self, a: usize, c: usize) -> usize {
        a * self.ys.len() + c
    }

    fn n_cells(&self) -> usize {
        self.xs.len() * self.ys.len()
    }
}

/// One generator of the transfer cone: mass flows into cells (a,c) and (b,d)
/// and out of (a,d) and (b,c), where a,b index grid firms and c,d workers.
struct Generator {
    a: usize,
    b: usize,
    c: usize,
    d: usize,
    /// Receiving pair strictly concordant, not merely weakly. A strict
    /// generator is never reversible: its mirror image fails even weak
    /// concordance.
    strict: bool,
}

impl Generator {
    /// The four (cell index, sign) entries of the transfer vector.
    fn entries(&self, grid: &Grid) -> [(usize, f64); 4] {
        [
            (grid.cell(self.a, self.c), 1.0),
            (grid.cell(self.b, self.d), 1.0),
            (grid.cell(self.a, self.d), -1.0),
            (grid.cell(self.b, self.c), -1.0),
        ]
    }

    fn to_transfer(&self, grid: &Grid, alpha: f64) -> Transfer {
        Transfer {
            x: grid.xs[self.a].clone(),
            y: grid.ys[self.c].clone(),
            x_prime: grid.xs[self.b].clone(),
            y_prime: grid.ys[self.d].clone(),
            alpha,
        }
    }
}

fn enumerate_generators(
    grid: &Grid,
    pattern: &ComplementarityPattern,
    tol: f64,
) -> Result<Vec<Generator>> {
    let mut gens = Vec::new();
    for a in 0..grid.xs.len() {
        for b in (a + 1)..grid.xs.len() {
            for c in 0..grid.ys.len() {
                for d in 0..grid.ys.len() {
                    if c == d {
                        continue;
                    }
                    let class = classify_pair(
                        (&grid.xs[a], &grid.ys[c]),
                        (&grid.xs[b], &grid.ys[d]),
                        pattern,
                        tol,
                    )?;
                    if class.pn_weak_concordant {
                        gens.push(Generator { a, b, c, d, strict: class.pn_concordant });
                    }
                }
            }
        }
    }
    Ok(gens)
}

fn dense_masses(m: &MatchingMeasure, grid: &Grid) -> Vec<f64> {
    let mut v = vec![0.0; grid.n_cells()];
    for (a, x) in grid.xs.iter().enumerate() {
        for (c, y) in grid.ys.iter().enumerate() {
            v[grid.cell(a, c)] = m.mass_at(x, y);
        }
    }
    v
}

fn check_measure(m: &MatchingMeasure) -> Result<MatchingMeasure> {
    let mut m = m.clone();
    m.canonicalize();
    for c in &m.cells {
        if !c.mass.is_finite() || c.mass < 0.0 {
            return Err(Error::InvalidInput(format!(
                "matching cell at ({:?},{:?}) has mass {}",
                c.x, c.y, c.mass
            )));
        }
    }
    Ok(m)
}

fn marginals_shared(m: &MatchingMeasure, mp: &MatchingMeasure, tol: f64) -> bool {
    let (fa, ga) = m.marginals();
    let (fb, gb) = mp.marginals();
    let atoms_close = |a: &crate::market::DiscreteMeasure, b: &crate::market::DiscreteMeasure| {
        let mut i = 0;
        let mut j = 0;
        while i < a.atoms.len() || j < b.atoms.len() {
            if i == a.atoms.len() {
                if !close(b.atoms[j].mass, 0.0, tol) {
                    return false;
                }
                j += 1;
            } else if j == b.atoms.len() {
                if !close(a.atoms[i].mass, 0.0, tol) {
                    return false;
                }
                i += 1;
            } else {
                match lex_cmp(&a.atoms[i].attrs, &b.atoms[j].attrs) {
                    std::cmp::Ordering::Less => {
                        if !close(a.atoms[i].mass, 0.0, tol) {
                            return false;
                        }
                        i += 1;
                    }
                    std::cmp::Ordering::Greater => {
                        if !close(b.atoms[j].mass, 0.0, tol) {
                            return false;
                        }
                        j += 1;
                    }
                    std::cmp::Ordering::Equal => {
                        if !close(a.atoms[i].mass, b.atoms[j].mass, tol) {
                            return false;
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
        true
    };
    atoms_close(&fa, &fb) && atoms_close(&ga, &gb)
}

/// Replays certificate transfers onto `base` as signed cell increments and
/// requires the result to match `target` cellwise. Also re-checks that every
/// transfer is concordance-improving for `pattern`.
fn verify_transfer_certificate(
    base: &MatchingMeasure,
    target: &MatchingMeasure,
    transfers: &[Transfer],
    grid: &Grid,
    pattern: &ComplementarityPattern,
    tol: f64,
) -> Result<()> {
    let mut acc = dense_masses(base, grid);
    let target_mass = dense_masses(target, grid);
    let find = |points: &[Vec<f64>], p: &[f64]| -> Result<usize> {
        points
            .binary_search_by(|probe| lex_cmp(probe, p))
            .map_err(|_| Error::LpFailure("certificate references a point off the grid".into()))
    };
    for t in transfers {
        if !(t.is_concordance_improving(pattern, tol)?) {
            return Err(Error::LpFailure(
                "certificate contains a transfer that is not concordance-improving".into(),
            ));
        }
        let a = find(&grid.xs, &t.x)?;
        let b = find(&grid.xs, &t.x_prime)?;
        let c = find(&grid.ys, &t.y)?;
        let d = find(&grid.ys, &t.y_prime)?;
        acc[grid.cell(a, c)] += t.alpha;
        acc[grid.cell(b, d)] += t.alpha;
        acc[grid.cell(a, d)] -= t.alpha;
        acc[grid.cell(b, c)] -= t.alpha;
    }
    let scale = target
        .total_mass()
        .abs()
        .max(base.total_mass().abs())
        .max(1.0);
    for (got, want) in acc.iter().zip(target_mass.iter()) {
        if (got - want).abs() > REPLAY_TOL * scale {
            return Err(Error::LpFailure(format!(
                "certificate replay mismatch: reproduced {} where target has {}",
                got, want
            )));
        }
    }
    Ok(())
}

fn lp_error(stage: &str, e: microlp::Error) -> Error {
    Error::LpFailure(format!("{stage}: {e}"))
}

/// Decides whether `m` dominates `mp` in the transfer order for `pattern`.
///
/// Both measures must share marginals. Returns the verdict together with a
/// certificate: nonnegative transfer weights whose replay maps `mp` to `m`,
/// or a separating output direction when no such weights exist.
pub fn dominates_pn(
    m: &MatchingMeasure,
    mp: &MatchingMeasure,
    pattern: &ComplementarityPattern,
) -> Result<(bool, ConeCertificate)> {
    let tol = DEFAULT_TOL;
    let m = check_measure(m)?;
    let mp = check_measure(mp)?;
    if m.firm_dim != mp.firm_dim || m.worker_dim != mp.worker_dim {
        return Err(Error::DimensionMismatch {
            context: format!(
                "dominance needs equal attribute dimensions, got ({},{}) vs ({},{})",
                m.firm_dim, m.worker_dim, mp.firm_dim, mp.worker_dim
            ),
        });
    }
    pattern.validate(m.firm_dim, m.worker_dim)?;
    if !marginals_shared(&m, &mp, tol) {
        return Err(Error::MarginalMismatch {
            context: "dominance is defined only between matchings with shared marginals".into(),
        });
    }

    let grid = Grid::from_measures(&[&m, &mp]);
    let mass_m = dense_masses(&m, &grid);
    let mass_mp = dense_masses(&mp, &grid);
    let diff: Vec<f64> = mass_m
        .iter()
        .zip(mass_mp.iter())
        .map(|(a, b)| a - b)
        .collect();
    let l1 = diff.iter().map(|d| d.abs()).sum::<f64>();
    let scale = m.total_mass().max(1.0);
    if l1 <= LP_TOL * scale {
        return Ok((true, ConeCertificate::Transfers(Vec::new())));
    }

    let gens = enumerate_generators(&grid, pattern, tol)?;

    // Phase 1: minimize total slack in  sum_t alpha_t t + s+ - s- = diff.
    let mut feas = Problem::new(OptimizationDirection::Minimize);
    let alphas: Vec<Variable> = gens
        .iter()
        .map(|_| feas.add_var(0.0, (0.0, f64::INFINITY)))
        .collect();
    let mut cell_terms: Vec<Vec<(Variable, f64)>> = vec![Vec::new(); grid.n_cells()];
    for (g, var) in gens.iter().zip(&alphas) {
        for (cell, sign) in g.entries(&grid) {
            cell_terms[cell].push((*var, sign));
        }
    }
    for (cell, mut terms) in cell_terms.into_iter().enumerate() {
        let splus = feas.add_var(1.0, (0.0, f64::INFINITY));
        let sminus = feas.add_var(1.0, (0.0, f64::INFINITY));
        terms.push((splus, 1.0));
        terms.push((sminus, -1.0));
        feas.add_constraint(terms, ComparisonOp::Eq, diff[cell]);
    }
    let sol = feas.solve().map_err(|e| lp_error("cone feasibility", e))?;

    if sol.objective() <= LP_TOL * l1.max(1.0) {
        let transfers: Vec<Transfer> = gens
            .iter()
            .zip(&alphas)
            .filter_map(|(g, var)| {
                let w = *sol.var_value(*var);
                (w > WEIGHT_FLOOR).then(|| g.to_transfer(&grid, w))
            })
            .collect();
        verify_transfer_certificate(&mp, &m, &transfers, &grid, pattern, tol)?;
        return Ok((true, ConeCertificate::Transfers(transfers)));
    }

    // Separation: find q with q.t >= 0 on every generator and q.diff <= -1,
    // minimizing the l1 norm of q to keep the direction bounded.
    let mut sep = Problem::new(OptimizationDirection::Minimize);
    let pos: Vec<Variable> = (0..grid.n_cells())
        .map(|_| sep.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    let neg: Vec<Variable> = (0..grid.n_cells())
        .map(|_| sep.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    for g in &gens {
        let mut terms = Vec::with_capacity(8);
        for (cell, sign) in g.entries(&grid) {
            terms.push((pos[cell], sign));
            terms.push((neg[cell], -sign));
        }
        sep.add_constraint(terms, ComparisonOp::Ge, 0.0);
    }
    let mut gap_terms = Vec::new();
    for (cell, d) in diff.iter().enumerate() {
        if d.abs() > 0.0 {
            gap_terms.push((pos[cell], *d));
            gap_terms.push((neg[cell], -*d));
        }
    }
    sep.add_constraint(gap_terms, ComparisonOp::Le, -1.0);
    let sep_sol = sep.solve().map_err(|e| lp_error("separating direction", e))?;

    let mut values = vec![vec![0.0; grid.ys.len()]; grid.xs.len()];
    for a in 0..grid.xs.len() {
        for c in 0..grid.ys.len() {
            let cell = grid.cell(a, c);
            values[a][c] = sep_sol.var_value(pos[cell]) - sep_sol.var_value(neg[cell]);
        }
    }
    let q_scale = values
        .iter()
        .flatten()
        .fold(1.0_f64, |acc, v| acc.max(v.abs()));
    for g in &gens {
        let dd: f64 = g
            .entries(&grid)
            .iter()
            .map(|(cell, sign)| sign * values[cell / grid.ys.len()][cell % grid.ys.len()])
            .sum();
        if dd < -LP_TOL * q_scale {
            return Err(Error::LpFailure(
                "separating direction fails a generator inequality".into(),
            ));
        }
    }
    let gap: f64 = diff
        .iter()
        .enumerate()
        .map(|(cell, d)| d * values[cell / grid.ys.len()][cell % grid.ys.len()])
        .sum();
    if gap > -0.5 {
        return Err(Error::LpFailure(
            "separating direction does not separate the difference".into(),
        ));
    }
    let q = TabulatedQ::new(grid.xs.clone(), grid.ys.clone(), values)?;
    Ok((false, ConeCertificate::Separating(SeparatingDirection { q, gap })))
}

/// Decides whether any matching with the same marginals strictly dominates
/// `m`. Solves a program maximizing total weight on strict generators among
/// transfer combinations keeping every cell of `m` nonnegative; `m` is
/// undominated exactly when that optimum is zero, and otherwise the optimal
/// weights are returned as an improving direction.
pub fn is_undominated(
    m: &MatchingMeasure,
    pattern: &ComplementarityPattern,
) -> Result<(bool, Option<ConeCertificate>)> {
    let tol = DEFAULT_TOL;
    let m = check_measure(m)?;
    pattern.validate(m.firm_dim, m.worker_dim)?;

    let grid = Grid::from_measures(&[&m]);
    let gens = enumerate_generators(&grid, pattern, tol)?;
    if !gens.iter().any(|g| g.strict) {
        return Ok((true, None));
    }

    let mass = dense_masses(&m, &grid);
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let alphas: Vec<Variable> = gens
        .iter()
        .map(|g| lp.add_var(if g.strict { 1.0 } else { 0.0 }, (0.0, f64::INFINITY)))
        .collect();
    let mut cell_terms: Vec<Vec<(Variable, f64)>> = vec![Vec::new(); grid.n_cells()];
    for (g, var) in gens.iter().zip(&alphas) {
        for (cell, sign) in g.entries(&grid) {
            cell_terms[cell].push((*var, sign));
        }
    }
    for (cell, terms) in cell_terms.into_iter().enumerate() {
        if terms.is_empty() {
            continue;
        }
        lp.add_constraint(terms, ComparisonOp::Ge, -mass[cell]);
    }
    let sol = lp.solve().map_err(|e| lp_error("undominance program", e))?;

    let scale = m.total_mass().max(1.0);
    if sol.objective() <= LP_TOL * scale {
        return Ok((true, None));
    }

    let transfers: Vec<Transfer> = gens
        .iter()
        .zip(&alphas)
        .filter_map(|(g, var)| {
            let w = *sol.var_value(*var);
            (w > WEIGHT_FLOOR).then(|| g.to_transfer(&grid, w))
        })
        .collect();
    // Replay onto m and require the improved measure to stay nonnegative.
    let mut improved = m.clone();
    for t in &transfers {
        if !(t.is_concordance_improving(pattern, tol)?) {
            return Err(Error::LpFailure(
                "improving direction contains a non-improving transfer".into(),
            ));
        }
        for (x, y) in t.receiving() {
            improved.cells.push(crate::market::Cell {
                x: x.to_vec(),
                y: y.to_vec(),
                mass: t.alpha,
            });
        }
        for (x, y) in t.losing() {
            improved.cells.push(crate::market::Cell {
                x: x.to_vec(),
                y: y.to_vec(),
                mass: -t.alpha,
            });
        }
    }
    improved.canonicalize();
    if improved
        .cells
        .iter()
        .any(|c| c.mass < -REPLAY_TOL * scale)
    {
        return Err(Error::LpFailure(
            "improving direction drives a cell negative on replay".into(),
        ));
    }
    Ok((false, Some(ConeCertificate::Transfers(transfers))))
}
