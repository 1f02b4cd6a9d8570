//! Matching equilibria with Gumbel-distributed idiosyncratic tastes.
//!
//! With extreme-value noise of total scale sigma+delta on both sides, the
//! equilibrium matching density is the unique fixed point of rescaling the
//! kernel exp{Q/(sigma+delta)} to the prescribed type marginals. Iterative
//! proportional fitting computes it; the row and column scalers are the
//! match-surplus potentials up to a shared normalizer.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{
    lex_cmp, BivariateTable, Cell, ComplementarityPattern, DiscreteMeasure, MatchingMeasure,
    OutputSpec, TabulatedQ, DEFAULT_TOL,
};
use crate::modularity::{check_pairwise, compare_modularity, Grid, PairViolation};
use crate::sorting::classify_pair;

/// Tolerance used when classifying signs of the log density.
pub const LOG_PN_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LogitConfig {
    /// Combined Gumbel scale sigma + delta; divides Q in the kernel.
    pub sigma_delta: f64,
    /// Convergence threshold on the worst absolute marginal deviation.
    pub ipf_tol: f64,
    pub max_iters: usize,
}

impl Default for LogitConfig {
    fn default() -> Self {
        LogitConfig { sigma_delta: 1.0, ipf_tol: 1e-12, max_iters: 100_000 }
    }
}

/// Converged equilibrium density together with its log-linear decomposition
/// log m(x,y) = W + (Q(x,y) + phi(x) + psi(y)) / (sigma + delta).
#[derive(Debug, Clone, Serialize)]
pub struct LogitSolution {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    /// Density on the support product, row-major over (xs, ys). Total 1.
    pub dens: Vec<Vec<f64>>,
    pub density: MatchingMeasure,
    /// phi per firm type, normalized so the first entry is 0.
    pub firm_potential: Vec<f64>,
    /// psi per worker type, normalized so the first entry is 0.
    pub worker_potential: Vec<f64>,
    /// The shared normalizer W.
    pub normalizer: f64,
    pub sigma_delta: f64,
    pub iterations: usize,
    pub max_marginal_error: f64,
    pub warnings: Vec<String>,
}

impl LogitSolution {
    fn x_index(&self, x: &[f64]) -> Result<usize> {
        self.xs
            .binary_search_by(|p| lex_cmp(p, x))
            .map_err(|_| Error::InvalidInput(format!("firm type {:?} not in solution support", x)))
    }

    fn y_index(&self, y: &[f64]) -> Result<usize> {
        self.ys
            .binary_search_by(|p| lex_cmp(p, y))
            .map_err(|_| {
                Error::InvalidInput(format!("worker type {:?} not in solution support", y))
            })
    }

    pub fn density_at(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.dens[self.x_index(x)?][self.y_index(y)?])
    }

    /// The log density as a tabulated output function on the support grid.
    pub fn log_density(&self) -> Result<TabulatedQ> {
        let values = self
            .dens
            .iter()
            .map(|row| row.iter().map(|m| m.ln()).collect())
            .collect();
        TabulatedQ::new(self.xs.clone(), self.ys.clone(), values)
    }
}

fn prepare_side(measure: &DiscreteMeasure, label: &str, warnings: &mut Vec<String>) -> Result<DiscreteMeasure> {
    let mut m = measure.clone();
    m.canonicalize();
    for a in &m.atoms {
        if !a.mass.is_finite() || a.mass < 0.0 {
            return Err(Error::InvalidInput(format!(
                "{label} distribution has mass {} at {:?}",
                a.mass, a.attrs
            )));
        }
    }
    m.atoms.retain(|a| a.mass > 0.0);
    if m.atoms.is_empty() {
        return Err(Error::EmptyData(format!("{label} distribution has no mass")));
    }
    let total = m.total_mass();
    if (total - 1.0).abs() > 1e-9 {
        warnings.push(format!("{label} distribution normalized from total {total}"));
        for a in &mut m.atoms {
            a.mass /= total;
        }
    }
    Ok(m)
}

/// Computes the logit matching equilibrium for output function `q` between
/// type distributions `pf` and `pg` by iterative proportional fitting.
///
/// The kernel is exp{Q/(sigma+delta)}, centered at its support maximum
/// before exponentiation; rows and columns are rescaled alternately until
/// both marginals are reproduced within `cfg.ipf_tol`.
pub fn ipf_equilibrium(
    q: &OutputSpec,
    pf: &DiscreteMeasure,
    pg: &DiscreteMeasure,
    cfg: &LogitConfig,
) -> Result<LogitSolution> {
    if !(cfg.sigma_delta.is_finite() && cfg.sigma_delta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "sigma_delta must be positive, got {}",
            cfg.sigma_delta
        )));
    }
    if !(cfg.ipf_tol.is_finite() && cfg.ipf_tol > 0.0) {
        return Err(Error::InvalidInput(format!("ipf_tol must be positive, got {}", cfg.ipf_tol)));
    }
    let mut warnings = Vec::new();
    let pf = prepare_side(pf, "firm", &mut warnings)?;
    let pg = prepare_side(pg, "worker", &mut warnings)?;
    let xs: Vec<Vec<f64>> = pf.atoms.iter().map(|a| a.attrs.clone()).collect();
    let ys: Vec<Vec<f64>> = pg.atoms.iter().map(|a| a.attrs.clone()).collect();
    let row_target: Vec<f64> = pf.atoms.iter().map(|a| a.mass).collect();
    let col_target: Vec<f64> = pg.atoms.iter().map(|a| a.mass).collect();
    let nx = xs.len();
    let ny = ys.len();

    let mut qvals = vec![vec![0.0; ny]; nx];
    let mut qmax = f64::NEG_INFINITY;
    for i in 0..nx {
        for j in 0..ny {
            let v = q.eval(&xs[i], &ys[j])?;
            qvals[i][j] = v;
            qmax = qmax.max(v);
        }
    }
    let sd = cfg.sigma_delta;
    let mut kernel = vec![vec![0.0; ny]; nx];
    for i in 0..nx {
        for j in 0..ny {
            let arg = (qvals[i][j] - qmax) / sd;
            let k = arg.exp();
            if k == 0.0 || !k.is_finite() {
                return Err(Error::KernelOverflow { arg, q: qvals[i][j] });
            }
            kernel[i][j] = k;
        }
    }

    let mut u = vec![1.0; nx];
    let mut v = vec![1.0; ny];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        for i in 0..nx {
            let s: f64 = (0..ny).map(|j| kernel[i][j] * v[j]).sum();
            u[i] = row_target[i] / s;
        }
        for j in 0..ny {
            let s: f64 = (0..nx).map(|i| kernel[i][j] * u[i]).sum();
            v[j] = col_target[j] / s;
        }
        residual = 0.0_f64;
        for i in 0..nx {
            let row: f64 = (0..ny).map(|j| u[i] * kernel[i][j] * v[j]).sum();
            residual = residual.max((row - row_target[i]).abs());
        }
        for j in 0..ny {
            let col: f64 = (0..nx).map(|i| u[i] * kernel[i][j] * v[j]).sum();
            residual = residual.max((col - col_target[j]).abs());
        }
        if residual < cfg.ipf_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iters: iterations, residual });
    }

    let mut dens = vec![vec![0.0; ny]; nx];
    let mut cells = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let m = u[i] * kernel[i][j] * v[j];
            if m <= 0.0 || !m.is_finite() {
                return Err(Error::ZeroDensity { x: xs[i].clone(), y: ys[j].clone() });
            }
            dens[i][j] = m;
            cells.push(Cell { x: xs[i].clone(), y: ys[j].clone(), mass: m });
        }
    }
    let mut density = MatchingMeasure {
        firm_dim: pf.dim,
        worker_dim: pg.dim,
        cells,
    };
    density.canonicalize();

    let firm_potential: Vec<f64> = u.iter().map(|ui| sd * (ui.ln() - u[0].ln())).collect();
    let worker_potential: Vec<f64> = v.iter().map(|vj| sd * (vj.ln() - v[0].ln())).collect();
    let normalizer = u[0].ln() + v[0].ln() - qmax / sd;

    Ok(LogitSolution {
        xs,
        ys,
        dens,
        density,
        firm_potential,
        worker_potential,
        normalizer,
        sigma_delta: sd,
        iterations,
        max_marginal_error: residual,
        warnings,
    })
}

/// Log odds of the density over the rectangle spanned by (x,y) and (x',y'):
/// log{m(x,y) m(x',y') / (m(x',y) m(x,y'))}. For a converged solution this
/// equals the Q double difference divided by sigma+delta.
pub fn double_difference(
    sol: &LogitSolution,
    x: &[f64],
    xp: &[f64],
    y: &[f64],
    yp: &[f64],
) -> Result<f64> {
    let i = sol.x_index(x)?;
    let ip = sol.x_index(xp)?;
    let j = sol.y_index(y)?;
    let jp = sol.y_index(yp)?;
    for (a, b) in [(i, j), (ip, jp), (ip, j), (i, jp)] {
        if sol.dens[a][b] <= 0.0 {
            return Err(Error::ZeroDensity { x: sol.xs[a].clone(), y: sol.ys[b].clone() });
        }
    }
    if i == ip || j == jp {
        return Ok(0.0);
    }
    Ok(sol.dens[i][j].ln() + sol.dens[ip][jp].ln() - sol.dens[ip][j].ln() - sol.dens[i][jp].ln())
}

/// Checks whether the log density is P,N modular for `pattern`, classifying
/// it as a tabulated output function on the support grid. Returns the first
/// incompatible attribute pair with witnessing quadruples when it is not.
pub fn check_log_pn(
    sol: &LogitSolution,
    pattern: &ComplementarityPattern,
) -> Result<(bool, Option<PairViolation>)> {
    let fd = sol.xs[0].len();
    let wd = sol.ys[0].len();
    pattern.validate(fd, wd)?;
    let logq = OutputSpec::Tabulated(sol.log_density()?);
    let grid = Grid::new(sol.xs.clone(), sol.ys.clone())?;
    for i in 1..=fd {
        for j in 1..=wd {
            let verdict = check_pairwise(&logq, i, j, &grid, LOG_PN_EPS)?;
            let in_p = pattern.p.contains(&(i, j));
            let in_n = pattern.n.contains(&(i, j));
            let ok = if in_p {
                verdict.supermodular
            } else if in_n {
                verdict.submodular
            } else {
                verdict.modular()
            };
            if !ok {
                return Ok((
                    false,
                    Some(PairViolation {
                        i,
                        j,
                        against_super: verdict.witness_against_super,
                        against_sub: verdict.witness_against_sub,
                    }),
                ));
            }
        }
    }
    Ok((true, None))
}

/// Log of the local odds ratio of a bivariate table at row i, column j:
/// log m(a_i,b_j) + log m(a_{i+1},b_{j+1}) - log m(a_{i+1},b_j) - log m(a_i,b_{j+1}).
pub fn local_log_odds(t: &BivariateTable, i: usize, j: usize) -> Result<f64> {
    let rows = t.row_values.len();
    let cols = t.col_values.len();
    if i + 1 >= rows || j + 1 >= cols {
        return Err(Error::IndexOutOfRange { i, j, k: i + 1, l: j + 1 });
    }
    for (r, c) in [(i, j), (i + 1, j + 1), (i + 1, j), (i, j + 1)] {
        if t.mass[r][c] <= 0.0 {
            return Err(Error::ZeroDensity {
                x: vec![t.row_values[r]],
                y: vec![t.col_values[c]],
            });
        }
    }
    Ok(t.mass[i][j].ln() + t.mass[i + 1][j + 1].ln()
        - t.mass[i + 1][j].ln()
        - t.mass[i][j + 1].ln())
}

/// Mass-weighted shares of strictly concordant couple pairs under a density,
/// over independent draws of two couples.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConcordanceShares {
    pub pn_share: f64,
    pub np_share: f64,
    /// pn_share / np_share; absent when no N,P concordant pair carries mass.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparativeStaticsReport {
    pub base: ConcordanceShares,
    pub increased: ConcordanceShares,
    /// Whether the P,N-to-N,P ratio under the increased output function is
    /// at least the base ratio (compared by cross-multiplication so a zero
    /// denominator is handled).
    pub ratio_weakly_higher: bool,
}

fn concordance_shares(
    sol: &LogitSolution,
    pattern: &ComplementarityPattern,
) -> Result<ConcordanceShares> {
    let cells = sol.density.positive_cells();
    let mut pn = 0.0;
    let mut np = 0.0;
    for a in &cells {
        for b in &cells {
            let class = classify_pair((&a.x, &a.y), (&b.x, &b.y), pattern, DEFAULT_TOL)?;
            let w = a.mass * b.mass;
            if class.pn_concordant {
                pn += w;
            }
            if class.np_concordant {
                np += w;
            }
        }
    }
    let ratio = if np > 0.0 { Some(pn / np) } else { None };
    Ok(ConcordanceShares { pn_share: pn, np_share: np, ratio })
}

/// Solves the equilibrium under `q` and under a P,N modular increase `qp`
/// of it and reports how the balance between strictly P,N concordant and
/// strictly N,P concordant couple pairs moves.
///
/// The quantity that provably never falls under such an increase is the
/// local odds of each concordant pair against its own swap (the double
/// difference of the log density). The aggregate share ratio reported here
/// usually rises with it but can fall when the increase reweights mass
/// toward quadruples with low local odds, so `ratio_weakly_higher` is a
/// measurement, not a guarantee.
pub fn comparative_statics(
    q: &OutputSpec,
    qp: &OutputSpec,
    pf: &DiscreteMeasure,
    pg: &DiscreteMeasure,
    pattern: &ComplementarityPattern,
    cfg: &LogitConfig,
) -> Result<ComparativeStaticsReport> {
    let xs = pf.support();
    let ys = pg.support();
    let grid = Grid::new(xs, ys)?;
    let cmp = compare_modularity(qp, q, pattern, &grid, DEFAULT_TOL)?;
    if !cmp.higher {
        return Err(Error::InvalidInput(
            "the increased output function must dominate the base in P,N modularity on the support grid"
                .into(),
        ));
    }
    let base_sol = ipf_equilibrium(q, pf, pg, cfg)?;
    let inc_sol = ipf_equilibrium(qp, pf, pg, cfg)?;
    let base = concordance_shares(&base_sol, pattern)?;
    let increased = concordance_shares(&inc_sol, pattern)?;
    let lhs = increased.pn_share * base.np_share;
    let rhs = base.pn_share * increased.np_share;
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    let ratio_weakly_higher = lhs >= rhs - 1e-12 * scale;
    Ok(ComparativeStaticsReport { base, increased, ratio_weakly_higher })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{aggregate_bivariate, Atom, QuadraticQ};

    fn binary_types() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]
    }

    fn measure(points: &[Vec<f64>], masses: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(
            points[0].len(),
            points
                .iter()
                .zip(masses)
                .map(|(p, m)| Atom { attrs: p.clone(), mass: *m })
                .collect(),
        )
    }

    fn example_inputs() -> (OutputSpec, DiscreteMeasure, DiscreteMeasure) {
        let q = OutputSpec::Quadratic(QuadraticQ {
            theta: vec![vec![5.0, 0.0], vec![0.0, 1.0]],
        });
        let pf = measure(&binary_types(), &[0.1, 0.4, 0.4, 0.1]);
        let pg = measure(&binary_types(), &[0.4, 0.1, 0.1, 0.4]);
        (q, pf, pg)
    }

    #[test]
    fn binary_market_density_matches_published_table() {
        let (q, pf, pg) = example_inputs();
        let sol = ipf_equilibrium(&q, &pf, &pg, &LogitConfig::default()).unwrap();
        let expected = [
            [0.0848, 0.0097, 0.0013, 0.0042],
            [0.2739, 0.0848, 0.0042, 0.0371],
            [0.0371, 0.0042, 0.0848, 0.2739],
            [0.0042, 0.0013, 0.0097, 0.0848],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (sol.dens[i][j] - expected[i][j]).abs() <= 5e-4,
                    "cell ({i},{j}): got {} want {}",
                    sol.dens[i][j],
                    expected[i][j]
                );
            }
        }
        let table = aggregate_bivariate(&sol.density, 2, 2).unwrap();
        let agg_expected = [[0.208, 0.292], [0.292, 0.208]];
        for r in 0..2 {
            for c in 0..2 {
                assert!(
                    (table.mass[r][c] - agg_expected[r][c]).abs() <= 1e-3,
                    "aggregate ({r},{c}): got {} want {}",
                    table.mass[r][c],
                    agg_expected[r][c]
                );
            }
        }
    }

    #[test]
    fn log_odds_identity_holds_on_every_quadruple() {
        let (q, pf, pg) = example_inputs();
        let sol = ipf_equilibrium(&q, &pf, &pg, &LogitConfig::default()).unwrap();
        let types = binary_types();
        for x in &types {
            for xp in &types {
                for y in &types {
                    for yp in &types {
                        let lhs = double_difference(&sol, x, xp, y, yp).unwrap();
                        let qdd = q.eval(x, y).unwrap() + q.eval(xp, yp).unwrap()
                            - q.eval(xp, y).unwrap()
                            - q.eval(x, yp).unwrap();
                        assert!(
                            (lhs - qdd / sol.sigma_delta).abs() < 1e-8,
                            "quadruple {x:?},{xp:?},{y:?},{yp:?}: {lhs} vs {qdd}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn zero_output_function_gives_product_density() {
        let types = binary_types();
        let pf = measure(&types, &[0.1, 0.4, 0.4, 0.1]);
        let pg = measure(&types, &[0.4, 0.1, 0.1, 0.4]);
        let q = OutputSpec::Quadratic(QuadraticQ { theta: vec![vec![0.0, 0.0], vec![0.0, 0.0]] });
        let sol = ipf_equilibrium(&q, &pf, &pg, &LogitConfig::default()).unwrap();
        for (i, fa) in pf.atoms.iter().enumerate() {
            for (j, ga) in pg.atoms.iter().enumerate() {
                assert!((sol.dens[i][j] - fa.mass * ga.mass).abs() < 1e-10);
            }
        }
        for x in &types {
            for xp in &types {
                for y in &types {
                    for yp in &types {
                        assert!(double_difference(&sol, x, xp, y, yp).unwrap().abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn marginals_are_reproduced_within_tolerance() {
        let (q, pf, pg) = example_inputs();
        let cfg = LogitConfig::default();
        let sol = ipf_equilibrium(&q, &pf, &pg, &cfg).unwrap();
        let (fm, wm) = sol.density.marginals();
        for a in &pf.atoms {
            assert!((fm.mass_at(&a.attrs) - a.mass).abs() < 10.0 * cfg.ipf_tol);
        }
        for a in &pg.atoms {
            assert!((wm.mass_at(&a.attrs) - a.mass).abs() < 10.0 * cfg.ipf_tol);
        }
        assert!(sol.max_marginal_error < cfg.ipf_tol);
    }

    #[test]
    fn log_density_decomposes_into_potentials_and_normalizer() {
        let (q, pf, pg) = example_inputs();
        let sol = ipf_equilibrium(&q, &pf, &pg, &LogitConfig::default()).unwrap();
        assert_eq!(sol.firm_potential[0], 0.0);
        assert_eq!(sol.worker_potential[0], 0.0);
        for (i, x) in sol.xs.iter().enumerate() {
            for (j, y) in sol.ys.iter().enumerate() {
                let predicted = sol.normalizer
                    + (q.eval(x, y).unwrap() + sol.firm_potential[i] + sol.worker_potential[j])
                        / sol.sigma_delta;
                assert!(
                    (sol.dens[i][j].ln() - predicted).abs() < 1e-9,
                    "cell ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn additive_type_effects_are_absorbed_by_potentials() {
        let (q, pf, pg) = example_inputs();
        let cfg = LogitConfig::default();
        let base = ipf_equilibrium(&q, &pf, &pg, &cfg).unwrap();
        let types = binary_types();
        let shift_x = [0.7, -1.3, 0.2, 2.0];
        let shift_y = [-0.4, 0.9, 1.5, -2.2];
        let values: Vec<Vec<f64>> = types
            .iter()
            .enumerate()
            .map(|(i, x)| {
                types
                    .iter()
                    .enumerate()
                    .map(|(j, y)| q.eval(x, y).unwrap() + shift_x[i] + shift_y[j])
                    .collect()
            })
            .collect();
        let shifted = OutputSpec::Tabulated(
            TabulatedQ::new(types.clone(), types.clone(), values).unwrap(),
        );
        let shifted_sol = ipf_equilibrium(&shifted, &pf, &pg, &cfg).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((base.dens[i][j] - shifted_sol.dens[i][j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn joint_scaling_of_output_and_noise_is_invariant() {
        let (q, pf, pg) = example_inputs();
        let base = ipf_equilibrium(&q, &pf, &pg, &LogitConfig::default()).unwrap();
        let doubled = OutputSpec::Quadratic(QuadraticQ {
            theta: vec![vec![10.0, 0.0], vec![0.0, 2.0]],
        });
        let cfg = LogitConfig { sigma_delta: 2.0, ..LogitConfig::default() };
        let scaled = ipf_equilibrium(&doubled, &pf, &pg, &cfg).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((base.dens[i][j] - scaled.dens[i][j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn degenerate_quadruples_have_zero_log_odds() {
        let (q, pf, pg) = example_inputs();
        let sol = ipf_equilibrium(&q, &pf, &pg, &LogitConfig::default()).unwrap();
        let x = vec![0.0, 1.0];
        let y = vec![1.0, 0.0];
        let yp = vec![1.0, 1.0];
        assert_eq!(double_difference(&sol, &x, &x, &y, &yp).unwrap(), 0.0);
    }

    #[test]
    fn published_quadruple_log_odds_is_six() {
        let (q, pf, pg) = example_inputs();
        let sol = ipf_equilibrium(&q, &pf, &pg, &LogitConfig::default()).unwrap();
        let dd = double_difference(
            &sol,
            &[0.0, 0.0],
            &[1.0, 1.0],
            &[0.0, 0.0],
            &[1.0, 1.0],
        )
        .unwrap();
        assert!((dd - 6.0).abs() < 1e-8);
    }

    #[test]
    fn log_density_modularity_follows_the_output_coefficients() {
        let (q, pf, pg) = example_inputs();
        let sol = ipf_equilibrium(&q, &pf, &pg, &LogitConfig::default()).unwrap();
        let pos = ComplementarityPattern { p: vec![(1, 1), (2, 2)], n: vec![] };
        let (holds, witness) = check_log_pn(&sol, &pos).unwrap();
        assert!(holds);
        assert!(witness.is_none());

        let neg_q = OutputSpec::Quadratic(QuadraticQ {
            theta: vec![vec![-5.0, 0.0], vec![0.0, 1.0]],
        });
        let neg_sol = ipf_equilibrium(&neg_q, &pf, &pg, &LogitConfig::default()).unwrap();
        let (still_pos, witness) = check_log_pn(&neg_sol, &pos).unwrap();
        assert!(!still_pos);
        let w = witness.unwrap();
        assert_eq!((w.i, w.j), (1, 1));
        assert!(w.against_super.is_some());
        let flipped = ComplementarityPattern { p: vec![(2, 2)], n: vec![(1, 1)] };
        let (holds_flipped, _) = check_log_pn(&neg_sol, &flipped).unwrap();
        assert!(holds_flipped);
    }

    #[test]
    fn local_log_odds_examples() {
        let biased = BivariateTable {
            row_values: vec![0.0, 1.0],
            col_values: vec![0.0, 1.0],
            mass: vec![vec![0.208, 0.292], vec![0.292, 0.208]],
        };
        let got = local_log_odds(&biased, 0, 0).unwrap();
        assert!((got - (-0.678)).abs() < 1e-3, "got {got}");

        let independent = BivariateTable {
            row_values: vec![0.0, 1.0, 2.0],
            col_values: vec![0.0, 1.0],
            mass: vec![
                vec![0.1 * 0.3, 0.1 * 0.7],
                vec![0.5 * 0.3, 0.5 * 0.7],
                vec![0.4 * 0.3, 0.4 * 0.7],
            ],
        };
        assert!(local_log_odds(&independent, 0, 0).unwrap().abs() < 1e-12);
        assert!(local_log_odds(&independent, 1, 0).unwrap().abs() < 1e-12);

        let diag = BivariateTable {
            row_values: vec![0.0, 1.0],
            col_values: vec![0.0, 1.0],
            mass: vec![vec![0.4, 0.1], vec![0.1, 0.4]],
        };
        assert!((local_log_odds(&diag, 0, 0).unwrap() - 16.0_f64.ln()).abs() < 1e-12);

        assert!(matches!(
            local_log_odds(&diag, 1, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
        let with_zero = BivariateTable {
            row_values: vec![0.0, 1.0],
            col_values: vec![0.0, 1.0],
            mass: vec![vec![0.4, 0.0], vec![0.1, 0.5]],
        };
        assert!(matches!(
            local_log_odds(&with_zero, 0, 0),
            Err(Error::ZeroDensity { .. })
        ));
    }

    #[test]
    fn published_aggregate_shows_sign_reversal_against_theta() {
        // theta_{2,2}=1>0 yet the aggregated second-attribute table carries
        // negative local dependence.
        let (q, pf, pg) = example_inputs();
        let sol = ipf_equilibrium(&q, &pf, &pg, &LogitConfig::default()).unwrap();
        let table = aggregate_bivariate(&sol.density, 2, 2).unwrap();
        assert!(local_log_odds(&table, 0, 0).unwrap() < 0.0);
    }

    #[test]
    fn raising_a_p_coefficient_raises_the_concordance_ratio() {
        let (q, pf, pg) = example_inputs();
        let qp = OutputSpec::Quadratic(QuadraticQ {
            theta: vec![vec![6.0, 0.0], vec![0.0, 1.0]],
        });
        let pat = ComplementarityPattern { p: vec![(1, 1), (2, 2)], n: vec![] };
        let report =
            comparative_statics(&q, &qp, &pf, &pg, &pat, &LogitConfig::default()).unwrap();
        assert!(report.ratio_weakly_higher);
        let (rb, ri) = (report.base.ratio.unwrap(), report.increased.ratio.unwrap());
        assert!(ri > rb, "expected strict rise, got {rb} -> {ri}");
    }

    #[test]
    fn identical_output_functions_leave_the_ratio_unchanged() {
        let (q, pf, pg) = example_inputs();
        let pat = ComplementarityPattern { p: vec![(1, 1), (2, 2)], n: vec![] };
        let report =
            comparative_statics(&q, &q, &pf, &pg, &pat, &LogitConfig::default()).unwrap();
        assert!(report.ratio_weakly_higher);
        let (rb, ri) = (report.base.ratio.unwrap(), report.increased.ratio.unwrap());
        assert!((rb - ri).abs() < 1e-12);
    }

    #[test]
    fn lowering_an_n_coefficient_raises_the_n_favoring_ratio() {
        let (q, pf, pg) = example_inputs();
        let qp = OutputSpec::Quadratic(QuadraticQ {
            theta: vec![vec![5.0, 0.0], vec![0.0, 0.0]],
        });
        let pat = ComplementarityPattern { p: vec![], n: vec![(2, 2)] };
        let report =
            comparative_statics(&q, &qp, &pf, &pg, &pat, &LogitConfig::default()).unwrap();
        assert!(report.ratio_weakly_higher);
    }

    #[test]
    fn incompatible_increase_is_rejected() {
        let (q, pf, pg) = example_inputs();
        let qp = OutputSpec::Quadratic(QuadraticQ {
            theta: vec![vec![4.0, 0.0], vec![0.0, 1.0]],
        });
        let pat = ComplementarityPattern { p: vec![(1, 1), (2, 2)], n: vec![] };
        match comparative_statics(&q, &qp, &pf, &pg, &pat, &LogitConfig::default()) {
            Err(Error::InvalidInput(_)) => {}
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let (q, pf, pg) = example_inputs();
        let cfg = LogitConfig { max_iters: 1, ..LogitConfig::default() };
        match ipf_equilibrium(&q, &pf, &pg, &cfg) {
            Err(Error::NonConvergence { iters, residual }) => {
                assert_eq!(iters, 1);
                assert!(residual > 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn kernel_underflow_is_reported_with_the_offending_value() {
        let types = binary_types();
        let pf = measure(&types, &[0.25, 0.25, 0.25, 0.25]);
        let q = OutputSpec::Quadratic(QuadraticQ {
            theta: vec![vec![2000.0, 0.0], vec![0.0, 0.0]],
        });
        match ipf_equilibrium(&q, &pf, &pf, &LogitConfig::default()) {
            Err(Error::KernelOverflow { arg, q }) => {
                assert!(arg <= -700.0);
                assert_eq!(q, 0.0);
            }
            other => panic!("expected kernel overflow, got {other:?}"),
        }
    }

    #[test]
    fn unnormalized_inputs_are_normalized_with_a_warning() {
        let types = binary_types();
        let pf = measure(&types, &[1.0, 4.0, 4.0, 1.0]);
        let pg = measure(&types, &[4.0, 1.0, 1.0, 4.0]);
        let q = OutputSpec::Quadratic(QuadraticQ {
            theta: vec![vec![5.0, 0.0], vec![0.0, 1.0]],
        });
        let sol = ipf_equilibrium(&q, &pf, &pg, &LogitConfig::default()).unwrap();
        assert_eq!(sol.warnings.len(), 2);
        assert!((sol.density.total_mass() - 1.0).abs() < 1e-9);
        assert!((sol.dens[0][0] - 0.0848).abs() <= 5e-4);
    }
}
