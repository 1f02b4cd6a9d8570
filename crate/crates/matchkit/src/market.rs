//! Core data model: discrete type measures, market instances, matching
//! measures, complementarity patterns, and output functions.
//!
//! Masses are plain `f64`. Instances meant for the exact planner should use
//! integer-valued masses; validation compares integer totals exactly and
//! float totals within a relative tolerance. Attribute indices are 1-based
//! everywhere in the public API.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for float mass comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Lexicographic total order on attribute vectors.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (u, v) in a.iter().zip(b.iter()) {
        let c = u.total_cmp(v);
        if c != std::cmp::Ordering::Equal {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

/// Relative comparison with an absolute floor of 1, so small integer masses
/// compare exactly and large totals compare proportionally.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

fn is_integral(x: f64) -> bool {
    x.fract() == 0.0
}

/// One weighted support point of a discrete measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub attrs: Vec<f64>,
    pub mass: f64,
}

/// Finitely supported measure on attribute vectors of a fixed dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub dim: usize,
    pub atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, atoms: Vec<Atom>) -> Self {
        DiscreteMeasure { dim, atoms }
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// True when every atom mass is integer-valued.
    pub fn is_integer(&self) -> bool {
        self.atoms.iter().all(|a| is_integral(a.mass))
    }

    /// Sorts atoms lexicographically and merges exact-duplicate attribute
    /// vectors by summing mass. Returns whether any merging happened.
    pub fn canonicalize(&mut self) -> bool {
        self.atoms.sort_by(|a, b| lex_cmp(&a.attrs, &b.attrs));
        let before = self.atoms.len();
        let mut merged: Vec<Atom> = Vec::with_capacity(before);
        for atom in self.atoms.drain(..) {
            match merged.last_mut() {
                Some(last) if last.attrs == atom.attrs => last.mass += atom.mass,
                _ => merged.push(atom),
            }
        }
        self.atoms = merged;
        self.atoms.len() != before
    }

    /// Distinct attribute vectors in lexicographic order.
    pub fn support(&self) -> Vec<Vec<f64>> {
        let mut s: Vec<Vec<f64>> = self.atoms.iter().map(|a| a.attrs.clone()).collect();
        s.sort_by(|a, b| lex_cmp(a, b));
        s.dedup();
        s
    }

    pub fn mass_at(&self, attrs: &[f64]) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.attrs == attrs)
            .map(|a| a.mass)
            .sum()
    }
}

/// A market: firm-side and worker-side measures of equal total mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketInstance {
    pub firms: DiscreteMeasure,
    pub workers: DiscreteMeasure,
}

impl MarketInstance {
    pub fn firm_dim(&self) -> usize {
        self.firms.dim
    }

    pub fn worker_dim(&self) -> usize {
        self.workers.dim
    }
}

/// One cell of a matching measure: mass placed on the couple (x, y).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mass: f64,
}

/// Finitely supported measure on firm-worker couples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingMeasure {
    pub firm_dim: usize,
    pub worker_dim: usize,
    pub cells: Vec<Cell>,
}

impl MatchingMeasure {
    pub fn new(firm_dim: usize, worker_dim: usize, cells: Vec<Cell>) -> Self {
        MatchingMeasure { firm_dim, worker_dim, cells }
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.mass).sum()
    }

    /// Sorts cells lexicographically by (x, y), merges duplicates, and drops
    /// cells whose merged mass is exactly zero. Returns whether duplicates
    /// were merged.
    pub fn canonicalize(&mut self) -> bool {
        self.cells
            .sort_by(|a, b| lex_cmp(&a.x, &b.x).then_with(|| lex_cmp(&a.y, &b.y)));
        let before = self.cells.len();
        let mut merged: Vec<Cell> = Vec::with_capacity(before);
        for cell in self.cells.drain(..) {
            match merged.last_mut() {
                Some(last) if last.x == cell.x && last.y == cell.y => last.mass += cell.mass,
                _ => merged.push(cell),
            }
        }
        let had_duplicates = merged.len() != before;
        merged.retain(|c| c.mass != 0.0);
        self.cells = merged;
        had_duplicates
    }

    /// Cells with strictly positive mass, in canonical order.
    pub fn positive_cells(&self) -> Vec<&Cell> {
        let mut v: Vec<&Cell> = self.cells.iter().filter(|c| c.mass > 0.0).collect();
        v.sort_by(|a, b| lex_cmp(&a.x, &b.x).then_with(|| lex_cmp(&a.y, &b.y)));
        v
    }

    pub fn mass_at(&self, x: &[f64], y: &[f64]) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.x == x && c.y == y)
            .map(|c| c.mass)
            .sum()
    }

    /// Firm-side and worker-side marginal measures.
    pub fn marginals(&self) -> (DiscreteMeasure, DiscreteMeasure) {
        let mut fm = DiscreteMeasure::new(self.firm_dim, Vec::new());
        let mut wm = DiscreteMeasure::new(self.worker_dim, Vec::new());
        for c in &self.cells {
            fm.atoms.push(Atom { attrs: c.x.clone(), mass: c.mass });
            wm.atoms.push(Atom { attrs: c.y.clone(), mass: c.mass });
        }
        fm.canonicalize();
        wm.canonicalize();
        (fm, wm)
    }

    /// Distinct firm attribute vectors carrying any cell, sorted.
    pub fn support_x(&self) -> Vec<Vec<f64>> {
        let mut s: Vec<Vec<f64>> = self.cells.iter().map(|c| c.x.clone()).collect();
        s.sort_by(|a, b| lex_cmp(a, b));
        s.dedup();
        s
    }

    pub fn support_y(&self) -> Vec<Vec<f64>> {
        let mut s: Vec<Vec<f64>> = self.cells.iter().map(|c| c.y.clone()).collect();
        s.sort_by(|a, b| lex_cmp(a, b));
        s.dedup();
        s
    }

    /// Independent product coupling (F x G) / total. Always satisfies the
    /// no-single property for a balanced market.
    pub fn product_coupling(m: &MarketInstance) -> Self {
        let total = m.firms.total_mass();
        let mut cells = Vec::new();
        for f in &m.firms.atoms {
            for w in &m.workers.atoms {
                cells.push(Cell {
                    x: f.attrs.clone(),
                    y: w.attrs.clone(),
                    mass: f.mass * w.mass / total,
                });
            }
        }
        let mut mm = MatchingMeasure::new(m.firms.dim, m.workers.dim, cells);
        mm.canonicalize();
        mm
    }
}

/// Disjoint sets of attribute pairs designating complementarity (P) and
/// substitutability (N). Indices are 1-based.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplementarityPattern {
    #[serde(rename = "P")]
    pub p: Vec<(usize, usize)>,
    #[serde(rename = "N")]
    pub n: Vec<(usize, usize)>,
}

impl ComplementarityPattern {
    pub fn new(p: Vec<(usize, usize)>, n: Vec<(usize, usize)>) -> Self {
        ComplementarityPattern { p, n }
    }

    /// The pattern with the roles of P and N exchanged.
    pub fn swapped(&self) -> Self {
        ComplementarityPattern { p: self.n.clone(), n: self.p.clone() }
    }

    /// Checks index ranges against (K, L) and P/N disjointness.
    pub fn validate(&self, firm_dim: usize, worker_dim: usize) -> Result<()> {
        for &(i, j) in self.p.iter().chain(self.n.iter()) {
            if i == 0 || j == 0 || i > firm_dim || j > worker_dim {
                return Err(Error::IndexOutOfRange { i, j, k: firm_dim, l: worker_dim });
            }
        }
        for pair in &self.p {
            if self.n.contains(pair) {
                return Err(Error::InvalidInput(format!(
                    "pattern pair ({},{}) appears in both P and N",
                    pair.0, pair.1
                )));
            }
        }
        Ok(())
    }
}

/// Quadratic output function Q(x,y) = sum_k sum_l theta[k][l] x_k y_l.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticQ {
    pub theta: Vec<Vec<f64>>,
}

/// Output values tabulated on a product grid of support points.
/// `values[i][j]` is Q(xs[i], ys[j]). Rows of `xs`/`ys` are sorted
/// lexicographically by the constructor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedQ {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
}

impl TabulatedQ {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != xs.len() || values.iter().any(|r| r.len() != ys.len()) {
            return Err(Error::InvalidInput(
                "tabulated values must be an xs.len() by ys.len() grid".into(),
            ));
        }
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&a, &b| lex_cmp(&xs[a], &xs[b]));
        let xs_sorted: Vec<Vec<f64>> = idx.iter().map(|&i| xs[i].clone()).collect();
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| values[i].clone()).collect();
        let mut jdx: Vec<usize> = (0..ys.len()).collect();
        jdx.sort_by(|&a, &b| lex_cmp(&ys[a], &ys[b]));
        let ys_sorted: Vec<Vec<f64>> = jdx.iter().map(|&j| ys[j].clone()).collect();
        let values_sorted: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| jdx.iter().map(|&j| r[j]).collect())
            .collect();
        Ok(TabulatedQ { xs: xs_sorted, ys: ys_sorted, values: values_sorted })
    }

    fn find_x(&self, x: &[f64]) -> Option<usize> {
        self.xs.binary_search_by(|probe| lex_cmp(probe, x)).ok()
    }

    fn find_y(&self, y: &[f64]) -> Option<usize> {
        self.ys.binary_search_by(|probe| lex_cmp(probe, y)).ok()
    }
}

/// An output function, either in closed quadratic form or tabulated on a
/// grid. Tabulated specs can only be evaluated on their grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutputSpec {
    Quadratic(QuadraticQ),
    Tabulated(TabulatedQ),
}

impl OutputSpec {
    pub fn quadratic(theta: Vec<Vec<f64>>) -> Self {
        OutputSpec::Quadratic(QuadraticQ { theta })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            OutputSpec::Quadratic(q) => {
                if q.theta.len() != x.len() || q.theta.iter().any(|r| r.len() != y.len()) {
                    return Err(Error::QEval {
                        x: x.to_vec(),
                        y: y.to_vec(),
                        reason: format!(
                            "theta is {}x{} but arguments have dims {} and {}",
                            q.theta.len(),
                            q.theta.first().map_or(0, |r| r.len()),
                            x.len(),
                            y.len()
                        ),
                    });
                }
                let mut v = 0.0;
                for (k, xk) in x.iter().enumerate() {
                    for (l, yl) in y.iter().enumerate() {
                        v += q.theta[k][l] * xk * yl;
                    }
                }
                Ok(v)
            }
            OutputSpec::Tabulated(t) => {
                let i = t.find_x(x).ok_or_else(|| Error::QEval {
                    x: x.to_vec(),
                    y: y.to_vec(),
                    reason: "x is outside the tabulated domain".into(),
                })?;
                let j = t.find_y(y).ok_or_else(|| Error::QEval {
                    x: x.to_vec(),
                    y: y.to_vec(),
                    reason: "y is outside the tabulated domain".into(),
                })?;
                Ok(t.values[i][j])
            }
        }
    }

    /// Aggregate output of a plan: sum of mass times Q over all cells.
    pub fn integrate(&self, m: &MatchingMeasure) -> Result<f64> {
        let mut total = 0.0;
        for c in &m.cells {
            total += c.mass * self.eval(&c.x, &c.y)?;
        }
        Ok(total)
    }
}

/// Outcome of a validation pass. Violations break invariants; warnings are
/// advisory. An empty violations list means the object is valid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn validate_measure(m: &DiscreteMeasure, side: &str, report: &mut ValidationReport) {
    if m.dim == 0 {
        report.violations.push(format!("{side}: attribute dimension is zero"));
    }
    if m.atoms.is_empty() {
        report.violations.push(format!("{side}: no atoms"));
    }
    for (idx, a) in m.atoms.iter().enumerate() {
        if a.attrs.len() != m.dim {
            report.violations.push(format!(
                "{side}: atom {idx} has {} attributes, expected {}",
                a.attrs.len(),
                m.dim
            ));
        }
        if a.attrs.iter().any(|v| !v.is_finite()) {
            report.violations.push(format!("{side}: atom {idx} has a non-finite attribute"));
        }
        if !a.mass.is_finite() || a.mass < 0.0 {
            report.violations.push(format!("{side}: atom {idx} has negative or non-finite mass {}", a.mass));
        }
    }
    let mut seen = m.support();
    let distinct = seen.len();
    seen.clear();
    if distinct != m.atoms.len() {
        report.violations.push(format!("{side}: duplicate atoms present (merge before use)"));
    }
}

/// Checks a market instance: well-formed measures on both sides and equal
/// totals. Integer-mass markets must balance exactly; float-mass markets
/// balance within `tol` (relative).
pub fn validate_market(m: &MarketInstance, tol: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    validate_measure(&m.firms, "firms", &mut report);
    validate_measure(&m.workers, "workers", &mut report);
    let (ft, wt) = (m.firms.total_mass(), m.workers.total_mass());
    let balanced = if m.firms.is_integer() && m.workers.is_integer() {
        ft == wt
    } else {
        close(ft, wt, tol)
    };
    if !balanced {
        report
            .violations
            .push(format!("mass mismatch {}: firms total {ft}, workers total {wt}", (ft - wt).abs()));
    }
    report
}

/// Checks the no-single property: the matching's marginals must equal the
/// market's firm and worker measures within `tol`.
pub fn validate_matching(mm: &MatchingMeasure, m: &MarketInstance, tol: f64) -> Result<ValidationReport> {
    if mm.firm_dim != m.firms.dim || mm.worker_dim != m.workers.dim {
        return Err(Error::DimensionMismatch {
            context: format!(
                "matching dims ({},{}) vs market dims ({},{})",
                mm.firm_dim, mm.worker_dim, m.firms.dim, m.workers.dim
            ),
        });
    }
    let mut report = ValidationReport::default();
    for (idx, c) in mm.cells.iter().enumerate() {
        if c.mass < 0.0 || !c.mass.is_finite() {
            report
                .violations
                .push(format!("cell {idx}: negative or non-finite mass {}", c.mass));
        }
        if c.x.len() != mm.firm_dim || c.y.len() != mm.worker_dim {
            report.violations.push(format!("cell {idx}: attribute length mismatch"));
        }
    }
    let (fm, wm) = mm.marginals();
    compare_marginal(&fm, &m.firms, "firm", tol, &mut report);
    compare_marginal(&wm, &m.workers, "worker", tol, &mut report);
    Ok(report)
}

fn compare_marginal(
    got: &DiscreteMeasure,
    want: &DiscreteMeasure,
    side: &str,
    tol: f64,
    report: &mut ValidationReport,
) {
    let mut want_canon = want.clone();
    want_canon.canonicalize();
    for atom in &want_canon.atoms {
        let g = got.mass_at(&atom.attrs);
        if !close(g, atom.mass, tol) {
            report.violations.push(format!(
                "{side} marginal at {:?}: got {g}, want {}",
                atom.attrs, atom.mass
            ));
        }
    }
    for atom in &got.atoms {
        if atom.mass != 0.0 && want_canon.mass_at(&atom.attrs) == 0.0 {
            report.violations.push(format!(
                "{side} marginal has mass {} at {:?}, absent from the market",
                atom.mass, atom.attrs
            ));
        }
    }
}

/// Joint mass table between one firm attribute and one worker attribute.
/// Row and column values are strictly increasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BivariateTable {
    pub row_values: Vec<f64>,
    pub col_values: Vec<f64>,
    pub mass: Vec<Vec<f64>>,
}

impl BivariateTable {
    pub fn total(&self) -> f64 {
        self.mass.iter().flatten().sum()
    }
}

/// Collapses a matching measure onto (firm attribute k, worker attribute l).
/// Indices are 1-based. Total mass is preserved.
pub fn aggregate_bivariate(mm: &MatchingMeasure, k: usize, l: usize) -> Result<BivariateTable> {
    if k == 0 || k > mm.firm_dim || l == 0 || l > mm.worker_dim {
        return Err(Error::IndexOutOfRange { i: k, j: l, k: mm.firm_dim, l: mm.worker_dim });
    }
    let mut rows: Vec<f64> = mm.cells.iter().map(|c| c.x[k - 1]).collect();
    rows.sort_by(f64::total_cmp);
    rows.dedup();
    let mut cols: Vec<f64> = mm.cells.iter().map(|c| c.y[l - 1]).collect();
    cols.sort_by(f64::total_cmp);
    cols.dedup();
    let mut mass = vec![vec![0.0; cols.len()]; rows.len()];
    for c in &mm.cells {
        let ri = rows.binary_search_by(|p| p.total_cmp(&c.x[k - 1])).unwrap();
        let ci = cols.binary_search_by(|p| p.total_cmp(&c.y[l - 1])).unwrap();
        mass[ri][ci] += c.mass;
    }
    Ok(BivariateTable { row_values: rows, col_values: cols, mass })
}

// ---------------------------------------------------------------------------
// JSON ingestion. Duplicate atoms or cells are merged with a warning.
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct MarketJson {
    firms: Vec<Atom>,
    workers: Vec<Atom>,
}

fn measure_from_atoms(atoms: Vec<Atom>, side: &str, warnings: &mut Vec<String>) -> Result<DiscreteMeasure> {
    let dim = atoms
        .first()
        .map(|a| a.attrs.len())
        .ok_or_else(|| Error::EmptyData(format!("{side}: no atoms")))?;
    let mut m = DiscreteMeasure::new(dim, atoms);
    if m.canonicalize() {
        warnings.push(format!("{side}: duplicate atoms merged by summing mass"));
    }
    Ok(m)
}

/// Parses market JSON `{"firms":[{"attrs":[...],"mass":...}],"workers":[...]}`.
pub fn market_from_json(s: &str) -> Result<(MarketInstance, Vec<String>)> {
    let raw: MarketJson = serde_json::from_str(s).map_err(|e| Error::Json(e.to_string()))?;
    let mut warnings = Vec::new();
    let firms = measure_from_atoms(raw.firms, "firms", &mut warnings)?;
    let workers = measure_from_atoms(raw.workers, "workers", &mut warnings)?;
    Ok((MarketInstance { firms, workers }, warnings))
}

#[derive(Deserialize)]
struct MatchingJson {
    cells: Vec<Cell>,
}

/// Parses matching JSON `{"cells":[{"x":[...],"y":[...],"mass":...}]}`.
pub fn matching_from_json(s: &str) -> Result<(MatchingMeasure, Vec<String>)> {
    let raw: MatchingJson = serde_json::from_str(s).map_err(|e| Error::Json(e.to_string()))?;
    let first = raw
        .cells
        .first()
        .ok_or_else(|| Error::EmptyData("matching: no cells".into()))?;
    let (fd, wd) = (first.x.len(), first.y.len());
    let mut mm = MatchingMeasure::new(fd, wd, raw.cells);
    let mut warnings = Vec::new();
    if mm.canonicalize() {
        warnings.push("matching: duplicate cells merged by summing mass".into());
    }
    Ok((mm, warnings))
}

/// Parses pattern JSON `{"P":[[1,1],[2,2]],"N":[]}`.
pub fn pattern_from_json(s: &str) -> Result<ComplementarityPattern> {
    serde_json::from_str(s).map_err(|e| Error::Json(e.to_string()))
}

/// Parses an output function: `{"theta":[[...]]}` for quadratic form or
/// `{"xs":...,"ys":...,"values":...}` for a tabulated grid.
pub fn output_spec_from_json(s: &str) -> Result<OutputSpec> {
    let spec: OutputSpec = serde_json::from_str(s).map_err(|e| Error::Json(e.to_string()))?;
    if let OutputSpec::Tabulated(t) = spec {
        return Ok(OutputSpec::Tabulated(TabulatedQ::new(t.xs, t.ys, t.values)?));
    }
    Ok(spec)
}
