//! Pairwise supermodularity checks on finite grids, P/N classification of an
//! output function, and the "higher modularity" comparison between two
//! output functions.
//!
//! All checks are relative to a supplied grid of support points. The double
//! difference for attribute pair (i, j) is
//! {Q(x',y') - Q(x,y')} - {Q(x',y) - Q(x,y)}
//! evaluated over quadruples where x and x' differ only in coordinate i
//! (x'_i > x_i), y and y' differ only in coordinate j (y'_j > y_j), and the
//! frozen coordinates take combinations present in the grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{lex_cmp, ComplementarityPattern, MarketInstance, MatchingMeasure, OutputSpec};
use crate::sorting::classify_pair;

/// Finite evaluation grid: firm points and worker points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
}

impl Grid {
    /// Builds a grid from explicit point lists. Points are sorted and
    /// deduplicated; dimensions must be consistent within each side.
    pub fn new(mut xs: Vec<Vec<f64>>, mut ys: Vec<Vec<f64>>) -> Result<Self> {
        if xs.is_empty() || ys.is_empty() {
            return Err(Error::EmptyData("grid must have points on both sides".into()));
        }
        let fd = xs[0].len();
        let wd = ys[0].len();
        if xs.iter().any(|p| p.len() != fd) || ys.iter().any(|p| p.len() != wd) {
            return Err(Error::DimensionMismatch { context: "grid points of mixed dimension".into() });
        }
        xs.sort_by(|a, b| lex_cmp(a, b));
        xs.dedup();
        ys.sort_by(|a, b| lex_cmp(a, b));
        ys.dedup();
        Ok(Grid { xs, ys })
    }

    /// Grid of the exact support points of a market's two sides.
    pub fn from_market(m: &MarketInstance) -> Result<Self> {
        Grid::new(m.firms.support(), m.workers.support())
    }

    /// Grid of the couple support of a matching.
    pub fn from_matching(mm: &MatchingMeasure) -> Result<Self> {
        Grid::new(mm.support_x(), mm.support_y())
    }

    /// Full product grid over per-coordinate value sets observed in the
    /// market supports. Guarantees axis-aligned quadruples exist for every
    /// attribute pair whenever each coordinate has two or more values.
    pub fn product_from_market(m: &MarketInstance) -> Result<Self> {
        Grid::new(
            product_points(&m.firms.support(), m.firms.dim),
            product_points(&m.workers.support(), m.workers.dim),
        )
    }

    pub fn firm_dim(&self) -> usize {
        self.xs[0].len()
    }

    pub fn worker_dim(&self) -> usize {
        self.ys[0].len()
    }
}

fn product_points(support: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); dim];
    for p in support {
        for (k, v) in p.iter().enumerate() {
            values[k].push(*v);
        }
    }
    for v in &mut values {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &values {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for v in axis {
                let mut q = p.clone();
                q.push(*v);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

/// One tested quadruple with its double difference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadruple {
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub y: Vec<f64>,
    pub y_prime: Vec<f64>,
    pub dd: f64,
}

/// Sign classification of one attribute pair over a grid.
///
/// `degenerate_axis` is set when the grid offers no aligned point pair on
/// one of the two coordinates, in which case the quantification is vacuous,
/// both weak flags hold, and neither strict flag does.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseVerdict {
    pub supermodular: bool,
    pub strictly_supermodular: bool,
    pub submodular: bool,
    pub strictly_submodular: bool,
    pub witness_against_super: Option<Quadruple>,
    pub witness_against_sub: Option<Quadruple>,
    pub degenerate_axis: bool,
    pub quadruples_tested: usize,
}

impl PairwiseVerdict {
    pub fn modular(&self) -> bool {
        self.supermodular && self.submodular
    }
}

/// Ordered pairs (low, high) of grid points differing only in `coord`,
/// with low[coord] < high[coord], sorted lexicographically by (low, high).
fn aligned_pairs(points: &[Vec<f64>], coord: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (a, pa) in points.iter().enumerate() {
        for (b, pb) in points.iter().enumerate() {
            if pa[coord] < pb[coord]
                && pa
                    .iter()
                    .zip(pb.iter())
                    .enumerate()
                    .all(|(k, (u, v))| k == coord || u == v)
            {
                pairs.push((a, b));
            }
        }
    }
    // points are lex sorted, so index order is lex order already
    pairs.sort();
    pairs
}

/// Classifies the sign of the double difference of Q in the attribute pair
/// (i, j) over the grid. Indices are 1-based. `eps` is the strictness
/// margin: weak verdicts tolerate violations up to eps, strict verdicts
/// require every double difference beyond eps.
pub fn check_pairwise(
    q: &OutputSpec,
    i: usize,
    j: usize,
    grid: &Grid,
    eps: f64,
) -> Result<PairwiseVerdict> {
    let (fd, wd) = (grid.firm_dim(), grid.worker_dim());
    if i == 0 || i > fd || j == 0 || j > wd {
        return Err(Error::IndexOutOfRange { i, j, k: fd, l: wd });
    }
    let x_pairs = aligned_pairs(&grid.xs, i - 1);
    let y_pairs = aligned_pairs(&grid.ys, j - 1);
    let mut verdict = PairwiseVerdict {
        supermodular: true,
        strictly_supermodular: true,
        submodular: true,
        strictly_submodular: true,
        witness_against_super: None,
        witness_against_sub: None,
        degenerate_axis: x_pairs.is_empty() || y_pairs.is_empty(),
        quadruples_tested: 0,
    };
    for &(xa, xb) in &x_pairs {
        for &(ya, yb) in &y_pairs {
            let dd = q.eval(&grid.xs[xb], &grid.ys[yb])? - q.eval(&grid.xs[xa], &grid.ys[yb])?
                - q.eval(&grid.xs[xb], &grid.ys[ya])?
                + q.eval(&grid.xs[xa], &grid.ys[ya])?;
            verdict.quadruples_tested += 1;
            if dd < -eps {
                verdict.supermodular = false;
                if verdict.witness_against_super.is_none() {
                    verdict.witness_against_super = Some(Quadruple {
                        x: grid.xs[xa].clone(),
                        x_prime: grid.xs[xb].clone(),
                        y: grid.ys[ya].clone(),
                        y_prime: grid.ys[yb].clone(),
                        dd,
                    });
                }
            }
            if dd > eps {
                verdict.submodular = false;
                if verdict.witness_against_sub.is_none() {
                    verdict.witness_against_sub = Some(Quadruple {
                        x: grid.xs[xa].clone(),
                        x_prime: grid.xs[xb].clone(),
                        y: grid.ys[ya].clone(),
                        y_prime: grid.ys[yb].clone(),
                        dd,
                    });
                }
            }
            if dd <= eps {
                verdict.strictly_supermodular = false;
            }
            if dd >= -eps {
                verdict.strictly_submodular = false;
            }
        }
    }
    if verdict.quadruples_tested == 0 {
        verdict.strictly_supermodular = false;
        verdict.strictly_submodular = false;
    }
    Ok(verdict)
}

/// One attribute pair whose double difference changes sign on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairViolation {
    pub i: usize,
    pub j: usize,
    pub against_super: Option<Quadruple>,
    pub against_sub: Option<Quadruple>,
}

/// Full classification of an output function over a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PnClassification {
    /// P: supermodular but not modular; N: submodular but not modular.
    pub pattern: ComplementarityPattern,
    /// Pairs in the pattern whose sign is strict on every tested quadruple.
    pub strict: Vec<(usize, usize)>,
    /// Pairs whose double difference changes sign.
    pub violations: Vec<PairViolation>,
    /// Verdicts for every pair, indexed [i-1][j-1].
    pub verdicts: Vec<Vec<PairwiseVerdict>>,
}

impl PnClassification {
    pub fn is_pn_modular(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Classifies every attribute pair of Q over the grid and assembles the
/// complementarity pattern it exhibits there. The result is relative to the
/// supplied grid; a finer grid can only shrink P and N or add violations.
pub fn classify_pn(q: &OutputSpec, grid: &Grid, eps: f64) -> Result<PnClassification> {
    let (fd, wd) = (grid.firm_dim(), grid.worker_dim());
    let mut pattern = ComplementarityPattern::default();
    let mut strict = Vec::new();
    let mut violations = Vec::new();
    let mut verdicts = Vec::with_capacity(fd);
    for i in 1..=fd {
        let mut row = Vec::with_capacity(wd);
        for j in 1..=wd {
            let v = check_pairwise(q, i, j, grid, eps)?;
            match (v.supermodular, v.submodular) {
                (true, false) => {
                    pattern.p.push((i, j));
                    if v.strictly_supermodular {
                        strict.push((i, j));
                    }
                }
                (false, true) => {
                    pattern.n.push((i, j));
                    if v.strictly_submodular {
                        strict.push((i, j));
                    }
                }
                (false, false) => violations.push(PairViolation {
                    i,
                    j,
                    against_super: v.witness_against_super.clone(),
                    against_sub: v.witness_against_sub.clone(),
                }),
                (true, true) => {}
            }
            row.push(v);
        }
        verdicts.push(row);
    }
    Ok(PnClassification { pattern, strict, violations, verdicts })
}

/// Evidence that Q is not higher P,N modular than Q'.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CompareWitness {
    /// A concordant pair of couples where the double-difference inequality
    /// fails: lhs is Q's double difference, rhs is Q''s.
    CouplePair {
        x: Vec<f64>,
        x_prime: Vec<f64>,
        y: Vec<f64>,
        y_prime: Vec<f64>,
        lhs: f64,
        rhs: f64,
    },
    /// A coefficient condition failure between two quadratic forms.
    Coefficient { i: usize, j: usize, theta: f64, beta: f64 },
}

/// Outcome of comparing Q against Q' for higher P,N modularity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareOutcome {
    /// Verdict of the couple-pair enumeration over the grid.
    pub higher: bool,
    pub witness: Option<CompareWitness>,
    /// For two quadratic forms, the verdict of the coefficient test:
    /// theta >= beta on P, theta <= beta on N, theta = beta elsewhere.
    /// A true coefficient verdict forces `higher`; the converse can fail
    /// when the grid admits no concordant pair exercising a coefficient.
    pub coefficient_verdict: Option<bool>,
}

fn couple_dd(q: &OutputSpec, x: &[f64], y: &[f64], xp: &[f64], yp: &[f64]) -> Result<f64> {
    Ok(q.eval(x, y)? + q.eval(xp, yp)? - q.eval(x, yp)? - q.eval(xp, y)?)
}

/// Decides whether Q is higher P,N modular than Q' on the grid: for every
/// P,N concordant pair of grid couples, Q's double difference must be at
/// least Q''s (within tol). For two quadratic forms, also runs the
/// coefficient test and checks its verdict implies the enumeration's.
pub fn compare_modularity(
    q: &OutputSpec,
    qp: &OutputSpec,
    pattern: &ComplementarityPattern,
    grid: &Grid,
    tol: f64,
) -> Result<CompareOutcome> {
    let (fd, wd) = (grid.firm_dim(), grid.worker_dim());
    pattern.validate(fd, wd)?;

    let mut higher = true;
    let mut witness = None;
    'outer: for xa in &grid.xs {
        for ya in &grid.ys {
            for xb in &grid.xs {
                for yb in &grid.ys {
                    let class = classify_pair((xa, ya), (xb, yb), pattern, 0.0)?;
                    if !class.pn_concordant {
                        continue;
                    }
                    let lhs = couple_dd(q, xa, ya, xb, yb)?;
                    let rhs = couple_dd(qp, xa, ya, xb, yb)?;
                    if lhs < rhs - tol {
                        higher = false;
                        witness = Some(CompareWitness::CouplePair {
                            x: xa.clone(),
                            x_prime: xb.clone(),
                            y: ya.clone(),
                            y_prime: yb.clone(),
                            lhs,
                            rhs,
                        });
                        break 'outer;
                    }
                }
            }
        }
    }

    let coefficient_verdict = match (q, qp) {
        (OutputSpec::Quadratic(a), OutputSpec::Quadratic(b)) => {
            if a.theta.len() != fd
                || b.theta.len() != fd
                || a.theta.iter().any(|r| r.len() != wd)
                || b.theta.iter().any(|r| r.len() != wd)
            {
                return Err(Error::DimensionMismatch {
                    context: "theta matrices must match grid dimensions".into(),
                });
            }
            let mut ok = true;
            let mut coeff_witness = None;
            'coef: for i in 1..=fd {
                for j in 1..=wd {
                    let (t, be) = (a.theta[i - 1][j - 1], b.theta[i - 1][j - 1]);
                    let fine = if pattern.p.contains(&(i, j)) {
                        t >= be - tol
                    } else if pattern.n.contains(&(i, j)) {
                        t <= be + tol
                    } else {
                        (t - be).abs() <= tol
                    };
                    if !fine {
                        ok = false;
                        coeff_witness = Some(CompareWitness::Coefficient { i, j, theta: t, beta: be });
                        break 'coef;
                    }
                }
            }
            if ok {
                assert!(
                    higher,
                    "coefficient conditions hold but a concordant couple pair violates the \
                     double-difference inequality; this cannot happen"
                );
            }
            if !ok && higher && witness.is_none() {
                witness = coeff_witness;
            }
            Some(ok)
        }
        _ => None,
    };

    Ok(CompareOutcome { higher, witness, coefficient_verdict })
}
