//! Batch front end for the matchkit library.
//!
//! Every subcommand reads its inputs from files, runs one library
//! operation, and emits a single report to stdout or `--output`. Verdicts
//! ("does not hold", "not dominated") are data inside the report, never a
//! nonzero exit. Exit codes: 0 success, 1 usage error, 2 data error,
//! 3 numerical failure. All randomness derives from `--seed`, so repeated
//! invocations with the same arguments produce identical bytes.

mod reports;
mod tabular;

use std::fs;
use std::path::{Path, PathBuf};
use std::process;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use matchkit::association::{kruskal_gamma, kruskal_gamma_table, Side};
use matchkit::estimation::{
    counts_from_couples, diagnostics, fit_mle, predicted_joint, simulate_couples, FitConfig,
    FitMethod, ParamVector,
};
use matchkit::logit::{ipf_equilibrium, LogitConfig};
use matchkit::market::{
    market_from_json, matching_from_json, output_spec_from_json, pattern_from_json,
    ComplementarityPattern, MarketInstance, MatchingMeasure, OutputSpec, DEFAULT_TOL,
};
use matchkit::order::{dominates_pn, is_undominated};
use matchkit::planner::solve_planner_scaled;
use matchkit::sorting::{check_global_pn, check_weak_pn, check_within_group, exists_global_pn};
use matchkit::ErrorKind;

use reports::*;

/// One failure, tagged with the exit code family it belongs to.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<matchkit::Error> for Failure {
    fn from(e: matchkit::Error) -> Self {
        match e.kind() {
            ErrorKind::Data => Failure::Data(e.to_string()),
            ErrorKind::Numerical => Failure::Numerical(e.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    AlignedText,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Annealing,
    Ascent,
}

#[derive(Parser)]
#[command(
    name = "matchkit",
    version,
    about = "Finite matching markets: exact planning, sorting checks, dominance, logit equilibria, association statistics, and conditional-logit estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Tolerance override. Binds to the comparison tolerance of support
    /// checks, the marginal tolerance of ipf, and the gradient tolerance
    /// of estimate; each has a documented default when omitted.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Seed for every stochastic subcommand.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Noise scale sigma+delta of the logit equilibrium.
    #[arg(long, global = true)]
    sigma_delta: Option<f64>,

    /// Iteration cap: ipf sweeps, or estimate polish steps.
    #[arg(long, global = true)]
    max_iters: Option<usize>,

    /// Node budget for the exhaustive global-sorting search.
    #[arg(long, global = true, default_value_t = 1_000_000)]
    budget: u64,

    /// Worker threads for parallel sections; 0 keeps the library default.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Write the report to this file instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the transportation problem exactly for a market and an output function.
    Solve {
        /// Market JSON: {"firms":[{"attrs":[...],"mass":...}],"workers":[...]}.
        #[arg(long)]
        market: PathBuf,
        /// Output function JSON: {"theta":[[...]]} or {"xs":..,"ys":..,"values":..}.
        #[arg(long)]
        q: PathBuf,
        /// Decimal digits kept when rounding non-integer masses.
        #[arg(long, default_value_t = 6)]
        digits: u32,
    },
    /// Check sorting of a matching's support, or search for a globally sorted coupling.
    SortCheck {
        /// Matching JSON ({"cells":[...]} or a report carrying one).
        #[arg(long)]
        matching: Option<PathBuf>,
        /// Pattern JSON: {"P":[[1,1]],"N":[[2,2]]}.
        #[arg(long)]
        pattern: PathBuf,
        /// Market JSON, for --exists-global.
        #[arg(long)]
        market: Option<PathBuf>,
        /// Search whether any feasible coupling is globally sorted.
        #[arg(long, default_value_t = false)]
        exists_global: bool,
        /// Cells with mass at or below this threshold are ignored.
        #[arg(long, default_value_t = 0.0)]
        mass_threshold: f64,
    },
    /// Decide transfer-order dominance against another matching, or undominatedness.
    Dominance {
        #[arg(long)]
        matching: PathBuf,
        /// Second matching; omitted means "is --matching undominated?".
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long)]
        pattern: PathBuf,
    },
    /// Compute the logit matching equilibrium by iterative proportional fitting.
    Ipf {
        #[arg(long)]
        market: PathBuf,
        #[arg(long)]
        q: PathBuf,
    },
    /// Goodman-Kruskal gamma from couples or a joint contingency table.
    Gamma {
        /// Couples CSV with header weight,x_1..x_K,y_1..y_L or labeled x_E,x_H,y_E,y_H.
        #[arg(long)]
        couples: Option<PathBuf>,
        /// Contingency table CSV; row and column headers are the category values.
        #[arg(long)]
        table: Option<PathBuf>,
        /// First attribute for couples input: a side letter and 1-based index, e.g. x1.
        #[arg(long, default_value = "x1")]
        first: String,
        /// Second attribute for couples input.
        #[arg(long, default_value = "y1")]
        second: String,
    },
    /// Fit the 28 conditional-logit parameters from a count matrix or couples.
    Estimate {
        /// 25x25 count CSV, bare or with header row/column.
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Couples CSV with integer 1-5 health and education levels on both sides.
        #[arg(long)]
        couples: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::Annealing)]
        method: Method,
        /// Annealing restarts.
        #[arg(long, default_value_t = 5)]
        restarts: usize,
    },
    /// Draw couples from parameters and woman-type fractions.
    Simulate {
        /// Parameter JSON: a bare parameter object or an estimate report.
        #[arg(long)]
        params: PathBuf,
        /// Woman-type fractions: a bare JSON array of 25 numbers, or an
        /// estimate report (its woman_fractions field is used).
        #[arg(long)]
        fractions: PathBuf,
        /// Number of couples to draw.
        #[arg(long)]
        n: usize,
        /// Also write the drawn couples as CSV here.
        #[arg(long)]
        couples_out: Option<PathBuf>,
        /// Also write the aggregated 25x25 count matrix as CSV here.
        #[arg(long)]
        counts_out: Option<PathBuf>,
    },
    /// Fit quality of a predicted joint type density against an empirical one.
    Diagnostics {
        /// Empirical 25x25 count or density CSV; normalized internally.
        #[arg(long)]
        empirical: PathBuf,
        /// Predicted 25x25 CSV; normalized internally.
        #[arg(long)]
        predicted: Option<PathBuf>,
        /// Compute the prediction from these parameters instead of --predicted.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Woman-type fractions for --params; defaults to the empirical row fractions.
        #[arg(long)]
        fractions: Option<PathBuf>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            match e.kind() {
                K::DisplayHelp | K::DisplayVersion => {
                    print!("{e}");
                    process::exit(0);
                }
                _ => {
                    eprint!("{e}");
                    process::exit(1);
                }
            }
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: cannot configure {} threads: {e}", cli.threads);
            process::exit(1);
        }
    }
    match run(&cli) {
        Ok(()) => {}
        Err(f) => {
            eprintln!("error: {}", f.message());
            process::exit(f.exit_code());
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let report = dispatch(cli)?;
    let rendered = match cli.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report)
                .map_err(|e| Failure::Data(format!("cannot serialize report: {e}")))?;
            s.push('\n');
            s
        }
        Format::AlignedText => reports::aligned_text(&report),
    };
    match &cli.output {
        Some(path) => fs::write(path, rendered)
            .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<Value, Failure> {
    match &cli.command {
        Command::Solve { market, q, digits } => cmd_solve(market, q, *digits),
        Command::SortCheck {
            matching,
            pattern,
            market,
            exists_global,
            mass_threshold,
        } => cmd_sort_check(
            cli,
            matching.as_deref(),
            pattern,
            market.as_deref(),
            *exists_global,
            *mass_threshold,
        ),
        Command::Dominance {
            matching,
            against,
            pattern,
        } => cmd_dominance(matching, against.as_deref(), pattern),
        Command::Ipf { market, q } => cmd_ipf(cli, market, q),
        Command::Gamma {
            couples,
            table,
            first,
            second,
        } => cmd_gamma(couples.as_deref(), table.as_deref(), first, second),
        Command::Estimate {
            counts,
            couples,
            method,
            restarts,
        } => cmd_estimate(cli, counts.as_deref(), couples.as_deref(), *method, *restarts),
        Command::Simulate {
            params,
            fractions,
            n,
            couples_out,
            counts_out,
        } => cmd_simulate(
            cli,
            params,
            fractions,
            *n,
            couples_out.as_deref(),
            counts_out.as_deref(),
        ),
        Command::Diagnostics {
            empirical,
            predicted,
            params,
            fractions,
        } => cmd_diagnostics(
            empirical,
            predicted.as_deref(),
            params.as_deref(),
            fractions.as_deref(),
        ),
    }
}

// ---------------------------------------------------------------------------
// Input loading
// ---------------------------------------------------------------------------

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))
}

fn load_market(path: &Path) -> Result<(MarketInstance, Vec<String>), Failure> {
    Ok(market_from_json(&read_input(path)?)?)
}

fn load_output_spec(path: &Path) -> Result<OutputSpec, Failure> {
    Ok(output_spec_from_json(&read_input(path)?)?)
}

fn load_pattern(path: &Path) -> Result<ComplementarityPattern, Failure> {
    Ok(pattern_from_json(&read_input(path)?)?)
}

/// Accepts a bare matching document or any report that embeds one under
/// "matching" (solve) or "density" (ipf), so reports re-ingest directly.
fn load_matching(path: &Path) -> Result<(MatchingMeasure, Vec<String>), Failure> {
    let text = read_input(path)?;
    match matching_from_json(&text) {
        Ok(out) => Ok(out),
        Err(first_err) => {
            if let Ok(v) = serde_json::from_str::<Value>(&text) {
                for key in ["matching", "density"] {
                    if let Some(inner) = v.get(key) {
                        let inner_text = serde_json::to_string(inner)
                            .map_err(|e| Failure::Data(e.to_string()))?;
                        return Ok(matching_from_json(&inner_text)?);
                    }
                }
            }
            Err(first_err.into())
        }
    }
}

/// Accepts a bare parameter object or an estimate report with a "params" field.
fn load_params(path: &Path) -> Result<ParamVector, Failure> {
    let text = read_input(path)?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let node = v.get("params").unwrap_or(&v);
    let p: ParamVector = serde_json::from_value(node.clone())
        .map_err(|e| Failure::Data(format!("{}: not a parameter vector: {e}", path.display())))?;
    p.validate()?;
    Ok(p)
}

/// Accepts a bare JSON array or a report with a "woman_fractions" or
/// "fractions" field.
fn load_fractions(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = read_input(path)?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let node = v
        .get("woman_fractions")
        .or_else(|| v.get("fractions"))
        .unwrap_or(&v);
    serde_json::from_value(node.clone())
        .map_err(|e| Failure::Data(format!("{}: not a fraction array: {e}", path.display())))
}

fn row_fractions(counts: &[Vec<f64>]) -> Result<Vec<f64>, Failure> {
    let total: f64 = counts.iter().flatten().sum();
    if total <= 0.0 {
        return Err(Failure::Data("count matrix has no mass".into()));
    }
    Ok(counts
        .iter()
        .map(|row| row.iter().sum::<f64>() / total)
        .collect())
}

fn normalize(counts: &[Vec<f64>], what: &str) -> Result<Vec<Vec<f64>>, Failure> {
    let total: f64 = counts.iter().flatten().sum();
    if !(total > 0.0) {
        return Err(Failure::Data(format!("{what} matrix has no mass")));
    }
    Ok(counts
        .iter()
        .map(|row| row.iter().map(|v| v / total).collect())
        .collect())
}

fn parse_attr(s: &str) -> Result<(Side, usize), Failure> {
    let err = || {
        Failure::Usage(format!(
            "attribute '{s}' must be a side letter and a 1-based index, e.g. x1 or y2"
        ))
    };
    let mut chars = s.chars();
    let side = match chars.next() {
        Some('x') | Some('X') => Side::X,
        Some('y') | Some('Y') => Side::Y,
        _ => return Err(err()),
    };
    let idx: usize = chars.as_str().parse().map_err(|_| err())?;
    if idx == 0 {
        return Err(err());
    }
    Ok((side, idx))
}

fn attr_name(side: Side, idx: usize) -> String {
    match side {
        Side::X => format!("x{idx}"),
        Side::Y => format!("y{idx}"),
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn to_report<T: serde::Serialize>(r: &T) -> Result<Value, Failure> {
    serde_json::to_value(r).map_err(|e| Failure::Data(format!("cannot build report: {e}")))
}

fn cmd_solve(market: &Path, q: &Path, digits: u32) -> Result<Value, Failure> {
    let (m, warnings) = load_market(market)?;
    let q = load_output_spec(q)?;
    let sol = solve_planner_scaled(&m, &q, digits)?;
    to_report(&SolveReport {
        spec_version: REPORT_VERSION,
        value: sol.value,
        scaling: sol.scaling,
        matching: sol.matching,
        warnings,
    })
}

fn cmd_sort_check(
    cli: &Cli,
    matching: Option<&Path>,
    pattern: &Path,
    market: Option<&Path>,
    exists_global: bool,
    mass_threshold: f64,
) -> Result<Value, Failure> {
    let pattern = load_pattern(pattern)?;
    let tol = cli.tol.unwrap_or(DEFAULT_TOL);
    match (matching, market, exists_global) {
        (Some(mm_path), None, false) => {
            let (mm, warnings) = load_matching(mm_path)?;
            let weak = check_weak_pn(&mm, &pattern, tol, mass_threshold)?;
            let within_group = check_within_group(&mm, &pattern, tol, mass_threshold)?;
            let global = check_global_pn(&mm, &pattern, tol, mass_threshold)?;
            to_report(&SortCheckReport {
                spec_version: REPORT_VERSION,
                weak,
                within_group,
                global,
                warnings,
            })
        }
        (None, Some(market_path), true) => {
            let (m, warnings) = load_market(market_path)?;
            let outcome = exists_global_pn(&m, &pattern, tol, cli.budget)?;
            to_report(&ExistsGlobalReport {
                spec_version: REPORT_VERSION,
                outcome,
                warnings,
            })
        }
        _ => Err(Failure::Usage(
            "pass --matching for support checks, or --market with --exists-global".into(),
        )),
    }
}

fn cmd_dominance(
    matching: &Path,
    against: Option<&Path>,
    pattern: &Path,
) -> Result<Value, Failure> {
    let pattern = load_pattern(pattern)?;
    let (a, mut warnings) = load_matching(matching)?;
    match against {
        Some(b_path) => {
            let (b, more) = load_matching(b_path)?;
            warnings.extend(more);
            let (dominates, certificate) = dominates_pn(&a, &b, &pattern)?;
            to_report(&DominanceReport {
                spec_version: REPORT_VERSION,
                dominates,
                certificate,
                warnings,
            })
        }
        None => {
            let (undominated, improving_direction) = is_undominated(&a, &pattern)?;
            to_report(&UndominatedReport {
                spec_version: REPORT_VERSION,
                undominated,
                improving_direction,
                warnings,
            })
        }
    }
}

fn cmd_ipf(cli: &Cli, market: &Path, q: &Path) -> Result<Value, Failure> {
    let (m, warnings) = load_market(market)?;
    let q = load_output_spec(q)?;
    let mut cfg = LogitConfig::default();
    if let Some(sd) = cli.sigma_delta {
        cfg.sigma_delta = sd;
    }
    if let Some(tol) = cli.tol {
        cfg.ipf_tol = tol;
    }
    if let Some(iters) = cli.max_iters {
        cfg.max_iters = iters;
    }
    let mut sol = ipf_equilibrium(&q, &m.firms, &m.workers, &cfg)?;
    let mut all = warnings;
    all.extend(sol.warnings);
    sol.warnings = all;
    to_report(&IpfReport {
        spec_version: REPORT_VERSION,
        solution: sol,
    })
}

fn cmd_gamma(
    couples: Option<&Path>,
    table: Option<&Path>,
    first: &str,
    second: &str,
) -> Result<Value, Failure> {
    match (couples, table) {
        (Some(path), None) => {
            let (data, warnings) = tabular::parse_couples(path)?;
            let a = parse_attr(first)?;
            let b = parse_attr(second)?;
            let result = kruskal_gamma(&data, a, b)?;
            to_report(&GammaReport {
                spec_version: REPORT_VERSION,
                input: "couples",
                first: Some(attr_name(a.0, a.1)),
                second: Some(attr_name(b.0, b.1)),
                result,
                warnings,
            })
        }
        (None, Some(path)) => {
            let t = tabular::read_joint_table(path)?;
            let result = kruskal_gamma_table(&t)?;
            to_report(&GammaReport {
                spec_version: REPORT_VERSION,
                input: "table",
                first: None,
                second: None,
                result,
                warnings: Vec::new(),
            })
        }
        _ => Err(Failure::Usage(
            "pass exactly one of --couples or --table".into(),
        )),
    }
}

fn load_counts(
    counts: Option<&Path>,
    couples: Option<&Path>,
) -> Result<(Vec<Vec<f64>>, Vec<String>), Failure> {
    match (counts, couples) {
        (Some(path), None) => Ok((tabular::read_counts_matrix(path)?, Vec::new())),
        (None, Some(path)) => {
            let (data, warnings) = tabular::parse_couples(path)?;
            Ok((counts_from_couples(&data)?, warnings))
        }
        _ => Err(Failure::Usage(
            "pass exactly one of --counts or --couples".into(),
        )),
    }
}

fn cmd_estimate(
    cli: &Cli,
    counts: Option<&Path>,
    couples: Option<&Path>,
    method: Method,
    restarts: usize,
) -> Result<Value, Failure> {
    let (counts, warnings) = load_counts(counts, couples)?;
    let f_m = row_fractions(&counts)?;
    let mut cfg = FitConfig::default();
    cfg.method = match method {
        Method::Annealing => FitMethod::Annealing,
        Method::Ascent => FitMethod::Ascent,
    };
    cfg.seed = cli.seed;
    cfg.restarts = restarts;
    if let Some(tol) = cli.tol {
        cfg.tol = tol;
    }
    if let Some(iters) = cli.max_iters {
        cfg.max_polish_iters = iters;
    }
    let (params, diag) = fit_mle(&counts, &f_m, &cfg)?;
    to_report(&EstimateReport {
        spec_version: REPORT_VERSION,
        params,
        woman_fractions: f_m,
        diagnostics: diag,
        warnings,
    })
}

fn cmd_simulate(
    cli: &Cli,
    params: &Path,
    fractions: &Path,
    n: usize,
    couples_out: Option<&Path>,
    counts_out: Option<&Path>,
) -> Result<Value, Failure> {
    let p = load_params(params)?;
    let f_m = load_fractions(fractions)?;
    let data = simulate_couples(&p, &f_m, n, cli.seed)?;
    let counts = counts_from_couples(&data)?;
    if let Some(path) = couples_out {
        tabular::write_couples_csv(path, &data)?;
    }
    if let Some(path) = counts_out {
        tabular::write_counts_csv(path, &counts)?;
    }
    to_report(&SimulateReport {
        spec_version: REPORT_VERSION,
        n,
        seed: cli.seed,
        counts,
        warnings: Vec::new(),
    })
}

fn cmd_diagnostics(
    empirical: &Path,
    predicted: Option<&Path>,
    params: Option<&Path>,
    fractions: Option<&Path>,
) -> Result<Value, Failure> {
    let emp_counts = tabular::read_counts_matrix(empirical)?;
    let emp = normalize(&emp_counts, "empirical")?;
    let pred = match (predicted, params) {
        (Some(path), None) => normalize(&tabular::read_counts_matrix(path)?, "predicted")?,
        (None, Some(path)) => {
            let p = load_params(path)?;
            let f_m = match fractions {
                Some(f) => load_fractions(f)?,
                None => row_fractions(&emp_counts)?,
            };
            predicted_joint(&p, &f_m)?
        }
        _ => {
            return Err(Failure::Usage(
                "pass exactly one of --predicted or --params".into(),
            ))
        }
    };
    let diag = diagnostics(&emp, &pred)?;
    to_report(&DiagnosticsReport {
        spec_version: REPORT_VERSION,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attr_parsing_accepts_both_sides() {
        assert_eq!(parse_attr("x1").unwrap(), (Side::X, 1));
        assert_eq!(parse_attr("Y3").unwrap(), (Side::Y, 3));
        assert!(parse_attr("z1").is_err());
        assert!(parse_attr("x0").is_err());
        assert!(parse_attr("x").is_err());
        assert!(parse_attr("1x").is_err());
    }

    #[test]
    fn failure_codes_follow_the_contract() {
        assert_eq!(Failure::Usage(String::new()).exit_code(), 1);
        assert_eq!(Failure::Data(String::new()).exit_code(), 2);
        assert_eq!(Failure::Numerical(String::new()).exit_code(), 3);
    }

    #[test]
    fn library_errors_map_by_kind() {
        let data = matchkit::Error::EmptyData("x".into());
        assert_eq!(Failure::from(data).exit_code(), 2);
        let numerical = matchkit::Error::NonConvergence {
            iters: 1,
            residual: 0.5,
        };
        assert_eq!(Failure::from(numerical).exit_code(), 3);
    }

    #[test]
    fn row_fractions_normalize() {
        let counts = vec![vec![1.0, 1.0], vec![2.0, 0.0]];
        let f = row_fractions(&counts).unwrap();
        assert_eq!(f, vec![0.5, 0.5]);
        assert!(row_fractions(&[vec![0.0]]).is_err());
    }
}
