//! Conditional-logit estimation of pairwise attraction parameters on a
//! 5x5 health-by-education type grid, with simulation and fit diagnostics.
//!
//! Agents on each side come in 25 types. Type `r` (1-based) carries the
//! attribute vector `(health, education)` with `health = (r-1)/5 + 1` and
//! `education = (r-1) % 5 + 1`, i.e. types walk the grid health-major:
//! types 1..5 are health 1 with education 1..5, types 6..10 are health 2,
//! and so on. [`TYPE_ATTRIBUTES`] tabulates the map.
//!
//! Conditional on a woman of type `r`, the probability that her partner is
//! a man of type `c` follows a multinomial logit whose score is the
//! quadratic interaction `sum_kl theta[k][l] * x_k * y_l` plus a per-man-type
//! offset `delta_c` normalized so `delta_1 = 0`. The offsets absorb any
//! additive term that depends on the man's type alone, so only interaction
//! parameters and offset differences are identified; that is exactly the
//! 4 + 24 = 28 free parameters handled here.

use crate::association::{kruskal_gamma, CoupleDataset, CoupleRecord, Side};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Number of types on each side of the market.
pub const TYPE_COUNT: usize = 25;

/// Number of levels per attribute (health and education both run 1..=5).
pub const LEVELS: usize = 5;

/// Free parameters: a 2x2 interaction matrix plus 24 offset differences.
pub const PARAM_DIM: usize = 28;

/// `(health, education)` attribute pairs for types 1..=25, in type order.
pub const TYPE_ATTRIBUTES: [(f64, f64); TYPE_COUNT] = {
    let mut t = [(0.0, 0.0); TYPE_COUNT];
    let mut r = 0;
    while r < TYPE_COUNT {
        t[r] = ((r / LEVELS + 1) as f64, (r % LEVELS + 1) as f64);
        r += 1;
    }
    t
};

/// Attribute vector `(health, education)` of a 1-based type index.
pub fn type_attributes(r: usize) -> Result<(f64, f64)> {
    if r == 0 || r > TYPE_COUNT {
        return Err(Error::InvalidInput(format!(
            "type index {r} is outside 1..={TYPE_COUNT}"
        )));
    }
    Ok(TYPE_ATTRIBUTES[r - 1])
}

/// 1-based type index of an integer `(health, education)` pair.
pub fn type_index(health: f64, education: f64) -> Result<usize> {
    let h = health.round();
    let e = education.round();
    if (health - h).abs() > 1e-9 || (education - e).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "attribute levels ({health}, {education}) are not integers"
        )));
    }
    if !(1.0..=LEVELS as f64).contains(&h) || !(1.0..=LEVELS as f64).contains(&e) {
        return Err(Error::InvalidInput(format!(
            "attribute levels ({health}, {education}) are outside 1..={LEVELS}"
        )));
    }
    Ok((h as usize - 1) * LEVELS + e as usize)
}

/// Interaction matrix plus man-type offsets.
///
/// `theta[k][l]` multiplies `x_k * y_l` where index 0 is health and index 1
/// is education on both sides. `deltas[c-1]` is the offset of man type `c`
/// relative to type 1, so `deltas[0]` is identically zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub theta: Vec<Vec<f64>>,
    pub deltas: Vec<f64>,
}

impl ParamVector {
    pub fn zeros() -> Self {
        ParamVector {
            theta: vec![vec![0.0; 2]; 2],
            deltas: vec![0.0; TYPE_COUNT],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != 2 || self.theta.iter().any(|row| row.len() != 2) {
            return Err(Error::DimensionMismatch {
                context: "theta must be a 2x2 matrix over (health, education)".into(),
            });
        }
        if self.deltas.len() != TYPE_COUNT {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "expected {TYPE_COUNT} offsets, got {}",
                    self.deltas.len()
                ),
            });
        }
        if self.deltas[0] != 0.0 {
            return Err(Error::InvalidInput(
                "base-category offset delta_1 must be exactly 0".into(),
            ));
        }
        let finite = self.theta.iter().flatten().all(|v| v.is_finite())
            && self.deltas.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput(
                "parameters must all be finite".into(),
            ));
        }
        Ok(())
    }

    /// Flattens to `[theta_HH, theta_HE, theta_EH, theta_EE, delta_2..delta_25]`.
    fn pack(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(PARAM_DIM);
        for row in &self.theta {
            v.extend_from_slice(row);
        }
        v.extend_from_slice(&self.deltas[1..]);
        v
    }

    fn unpack(v: &[f64]) -> Self {
        let mut deltas = vec![0.0; TYPE_COUNT];
        deltas[1..].copy_from_slice(&v[4..]);
        ParamVector {
            theta: vec![vec![v[0], v[1]], vec![v[2], v[3]]],
            deltas,
        }
    }
}

/// Quadratic interaction features `[x_H*y_H, x_H*y_E, x_E*y_H, x_E*y_E]`
/// for 0-based type indices.
fn quad_features(r0: usize, c0: usize) -> [f64; 4] {
    let (xh, xe) = TYPE_ATTRIBUTES[r0];
    let (yh, ye) = TYPE_ATTRIBUTES[c0];
    [xh * yh, xh * ye, xe * yh, xe * ye]
}

/// Logit scores of the 25 man types for a 0-based woman type, packed params.
fn scores_packed(v: &[f64], r0: usize) -> [f64; TYPE_COUNT] {
    let mut s = [0.0; TYPE_COUNT];
    for (c0, slot) in s.iter_mut().enumerate() {
        let z = quad_features(r0, c0);
        let mut acc = v[0] * z[0] + v[1] * z[1] + v[2] * z[2] + v[3] * z[3];
        if c0 > 0 {
            acc += v[4 + c0 - 1];
        }
        *slot = acc;
    }
    s
}

fn log_sum_exp(s: &[f64]) -> f64 {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn probs_from_scores(s: &[f64; TYPE_COUNT]) -> [f64; TYPE_COUNT] {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; TYPE_COUNT];
    let mut z = 0.0;
    for (pc, sc) in p.iter_mut().zip(s.iter()) {
        *pc = (sc - m).exp();
        z += *pc;
    }
    for pc in p.iter_mut() {
        *pc /= z;
    }
    p
}

/// Partner-type probabilities for a woman of 1-based type `r`.
///
/// Computed in log space with max subtraction, so the result is a strictly
/// positive vector summing to 1 for any finite parameters.
pub fn choice_probabilities(p: &ParamVector, r: usize) -> Result<Vec<f64>> {
    p.validate()?;
    if r == 0 || r > TYPE_COUNT {
        return Err(Error::InvalidInput(format!(
            "woman type {r} is outside 1..={TYPE_COUNT}"
        )));
    }
    let packed = p.pack();
    Ok(probs_from_scores(&scores_packed(&packed, r - 1)).to_vec())
}

/// Log-likelihood split into the part that varies with the parameters and
/// the woman-marginal part that does not.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LogLikelihood {
    /// `sum_rc n_rc * ln p(c | r)`, the term estimation maximizes.
    pub conditional: f64,
    /// `sum_r n_r * ln f_m[r]`, constant in the parameters.
    pub marginal_constant: f64,
}

impl LogLikelihood {
    pub fn total(&self) -> f64 {
        self.conditional + self.marginal_constant
    }
}

fn validate_counts(counts: &[Vec<f64>]) -> Result<f64> {
    if counts.len() != TYPE_COUNT || counts.iter().any(|row| row.len() != TYPE_COUNT) {
        return Err(Error::DimensionMismatch {
            context: format!("counts must be a {TYPE_COUNT}x{TYPE_COUNT} matrix"),
        });
    }
    let mut total = 0.0;
    for row in counts {
        for &n in row {
            if !n.is_finite() || n < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "counts must be finite and nonnegative, got {n}"
                )));
            }
            total += n;
        }
    }
    if total <= 0.0 {
        return Err(Error::EmptyData("all couple counts are zero".into()));
    }
    Ok(total)
}

fn validate_fractions(f_m: &[f64]) -> Result<()> {
    if f_m.len() != TYPE_COUNT {
        return Err(Error::DimensionMismatch {
            context: format!("woman-type fractions must have length {TYPE_COUNT}"),
        });
    }
    if f_m.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput(
            "woman-type fractions must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

/// Weighted log-likelihood of a 25x25 couple count matrix.
///
/// `counts[r-1][c-1]` is the (possibly survey-weighted) number of couples
/// pairing a type-`r` woman with a type-`c` man, and `f_m` holds the
/// woman-type fractions entering the marginal term.
pub fn log_likelihood(
    p: &ParamVector,
    counts: &[Vec<f64>],
    f_m: &[f64],
) -> Result<LogLikelihood> {
    p.validate()?;
    validate_counts(counts)?;
    validate_fractions(f_m)?;
    let packed = p.pack();
    let mut conditional = 0.0;
    let mut marginal = 0.0;
    for r0 in 0..TYPE_COUNT {
        let n_r: f64 = counts[r0].iter().sum();
        if n_r == 0.0 {
            continue;
        }
        if f_m[r0] <= 0.0 {
            return Err(Error::SupportViolation(format!(
                "woman type {} has {} couples but zero marginal fraction",
                r0 + 1,
                n_r
            )));
        }
        marginal += n_r * f_m[r0].ln();
        let s = scores_packed(&packed, r0);
        let lse = log_sum_exp(&s);
        for c0 in 0..TYPE_COUNT {
            let n = counts[r0][c0];
            if n > 0.0 {
                conditional += n * (s[c0] - lse);
            }
        }
    }
    Ok(LogLikelihood {
        conditional,
        marginal_constant: marginal,
    })
}

/// Mean conditional log-likelihood and its gradient and Hessian in the
/// packed 28-parameter coordinates. Dividing by the total count weight keeps
/// the annealing temperature scale independent of the sample size.
struct Objective<'a> {
    counts: &'a [Vec<f64>],
    row_sums: [f64; TYPE_COUNT],
    total: f64,
}

impl<'a> Objective<'a> {
    fn new(counts: &'a [Vec<f64>]) -> Result<Self> {
        let total = validate_counts(counts)?;
        let mut row_sums = [0.0; TYPE_COUNT];
        for (r0, row) in counts.iter().enumerate() {
            row_sums[r0] = row.iter().sum();
        }
        Ok(Objective {
            counts,
            row_sums,
            total,
        })
    }

    fn value(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for r0 in 0..TYPE_COUNT {
            if self.row_sums[r0] == 0.0 {
                continue;
            }
            let s = scores_packed(v, r0);
            let lse = log_sum_exp(&s);
            for c0 in 0..TYPE_COUNT {
                let n = self.counts[r0][c0];
                if n > 0.0 {
                    acc += n * (s[c0] - lse);
                }
            }
        }
        acc / self.total
    }

    /// Observed-minus-expected counts contracted with the features.
    fn gradient(&self, v: &[f64]) -> [f64; PARAM_DIM] {
        let mut g = [0.0; PARAM_DIM];
        for r0 in 0..TYPE_COUNT {
            let n_r = self.row_sums[r0];
            if n_r == 0.0 {
                continue;
            }
            let s = scores_packed(v, r0);
            let p = probs_from_scores(&s);
            for c0 in 0..TYPE_COUNT {
                let resid = self.counts[r0][c0] - n_r * p[c0];
                if resid == 0.0 {
                    continue;
                }
                let z = quad_features(r0, c0);
                for k in 0..4 {
                    g[k] += resid * z[k];
                }
                if c0 > 0 {
                    g[4 + c0 - 1] += resid;
                }
            }
        }
        for gk in g.iter_mut() {
            *gk /= self.total;
        }
        g
    }

    fn hessian(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let mut h = vec![vec![0.0; PARAM_DIM]; PARAM_DIM];
        for r0 in 0..TYPE_COUNT {
            let n_r = self.row_sums[r0];
            if n_r == 0.0 {
                continue;
            }
            let s = scores_packed(v, r0);
            let p = probs_from_scores(&s);
            let mut mean = [0.0; PARAM_DIM];
            for c0 in 0..TYPE_COUNT {
                let z = quad_features(r0, c0);
                let w = p[c0];
                for k in 0..4 {
                    mean[k] += w * z[k];
                }
                if c0 > 0 {
                    mean[4 + c0 - 1] += w;
                }
                // E[z z'] accumulated over the at most five nonzero entries.
                for a in 0..4 {
                    for b in a..4 {
                        h[a][b] -= n_r * w * z[a] * z[b];
                    }
                }
                if c0 > 0 {
                    let i = 4 + c0 - 1;
                    for a in 0..4 {
                        h[a][i] -= n_r * w * z[a];
                    }
                    h[i][i] -= n_r * w;
                }
            }
            for a in 0..PARAM_DIM {
                for b in a..PARAM_DIM {
                    h[a][b] += n_r * mean[a] * mean[b];
                }
            }
        }
        for a in 0..PARAM_DIM {
            for b in 0..a {
                h[a][b] = h[b][a];
            }
            for b in a..PARAM_DIM {
                h[a][b] /= self.total;
                if b > a {
                    h[b][a] = h[a][b];
                }
            }
        }
        h
    }
}

/// Solves `A x = b` for symmetric positive-definite `A`, consuming `A`.
fn cholesky_solve(mut a: Vec<Vec<f64>>, b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in (j + 1)..n {
            let mut v = a[i][j];
            for k in 0..j {
                v -= a[i][k] * a[j][k];
            }
            a[i][j] = v / d;
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i][k] * y[k];
        }
        y[i] = v / a[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v -= a[k][i] * x[k];
        }
        x[i] = v / a[i][i];
    }
    Some(x)
}

/// Gradient of the conditional log-likelihood with respect to the flat
/// parameter order `[theta_HH, theta_HE, theta_EH, theta_EE, delta_2..delta_25]`:
/// observed minus expected counts, contracted with the score features.
pub fn conditional_gradient(p: &ParamVector, counts: &[Vec<f64>]) -> Result<Vec<f64>> {
    p.validate()?;
    let obj = Objective::new(counts)?;
    let g = obj.gradient(&p.pack());
    Ok(g.iter().map(|v| v * obj.total).collect())
}

/// How `fit_mle` searches for the optimum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitMethod {
    /// Seeded simulated annealing restarts followed by the Newton polish.
    Annealing,
    /// Newton ascent from the zero vector only. The objective is concave,
    /// so this reaches the same optimum and is fully deterministic.
    Ascent,
}

/// Geometric cooling schedule for the annealing search.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub initial_temperature: f64,
    /// Multiplier applied to the temperature after every step.
    pub cooling: f64,
    pub steps: usize,
    /// Proposal standard deviation is `step_scale * sqrt(temperature)`.
    pub step_scale: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            initial_temperature: 1.0,
            cooling: 0.995,
            steps: 1500,
            step_scale: 0.25,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: FitMethod,
    pub seed: u64,
    pub schedule: AnnealSchedule,
    pub restarts: usize,
    /// Convergence threshold on the sup-norm of the mean-log-likelihood
    /// gradient at the polished optimum.
    pub tol: f64,
    pub max_polish_iters: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            method: FitMethod::Annealing,
            seed: 0,
            schedule: AnnealSchedule::default(),
            restarts: 5,
            tol: 1e-10,
            max_polish_iters: 100,
        }
    }
}

fn fill_gaussians(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut i = 0;
    while i < out.len() {
        let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.gen();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        out[i] = radius * angle.cos();
        if i + 1 < out.len() {
            out[i + 1] = radius * angle.sin();
        }
        i += 2;
    }
}

fn anneal_restart(
    obj: &Objective,
    schedule: &AnnealSchedule,
    seed: u64,
    stream: u64,
) -> Result<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut x = vec![0.0; PARAM_DIM];
    if stream > 1 {
        let mut jitter = vec![0.0; PARAM_DIM];
        fill_gaussians(&mut rng, &mut jitter);
        for (xi, j) in x.iter_mut().zip(jitter.iter()) {
            *xi = 0.5 * j;
        }
    }
    let mut fx = obj.value(&x);
    if !fx.is_finite() {
        return Err(Error::NonFiniteObjective { at: x });
    }
    let mut best = (x.clone(), fx);
    let mut temp = schedule.initial_temperature;
    let mut noise = vec![0.0; PARAM_DIM];
    for _ in 0..schedule.steps {
        fill_gaussians(&mut rng, &mut noise);
        let sigma = schedule.step_scale * temp.sqrt();
        let y: Vec<f64> = x
            .iter()
            .zip(noise.iter())
            .map(|(xi, n)| xi + sigma * n)
            .collect();
        let fy = obj.value(&y);
        if !fy.is_finite() {
            return Err(Error::NonFiniteObjective { at: y });
        }
        let accept = fy >= fx || rng.gen::<f64>() < ((fy - fx) / temp).exp();
        if accept {
            x = y;
            fx = fy;
            if fx > best.1 {
                best = (x.clone(), fx);
            }
        }
        temp *= schedule.cooling;
    }
    Ok(best)
}

/// Damped Newton ascent on the concave mean log-likelihood.
fn newton_polish(obj: &Objective, start: Vec<f64>, cfg: &FitConfig) -> Result<Vec<f64>> {
    let mut x = start;
    let mut fx = obj.value(&x);
    if !fx.is_finite() {
        return Err(Error::NonFiniteObjective { at: x });
    }
    for _ in 0..cfg.max_polish_iters {
        let g = obj.gradient(&x);
        let gnorm = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if gnorm <= cfg.tol {
            break;
        }
        let h = obj.hessian(&x);
        let scale = (0..PARAM_DIM)
            .map(|i| h[i][i].abs())
            .fold(1e-12, f64::max);
        let mut ridge = 0.0;
        let direction = loop {
            let mut a: Vec<Vec<f64>> = h.iter().map(|row| row.iter().map(|v| -v).collect()).collect();
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += ridge;
            }
            match cholesky_solve(a, &g) {
                Some(d) => break d,
                None => {
                    ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 100.0 };
                    if ridge > 1e8 * scale {
                        return Err(Error::NonFiniteObjective { at: x });
                    }
                }
            }
        };
        let slope: f64 = g.iter().zip(direction.iter()).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-14 {
            let y: Vec<f64> = x
                .iter()
                .zip(direction.iter())
                .map(|(xi, d)| xi + step * d)
                .collect();
            let fy = obj.value(&y);
            if !fy.is_finite() {
                return Err(Error::NonFiniteObjective { at: y });
            }
            if fy >= fx + 1e-4 * step * slope.max(0.0) && fy >= fx {
                x = y;
                fx = fy;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(x)
}

/// Goodman-Kruskal gammas between each woman attribute and each man
/// attribute of a joint type density, in Table order H then E.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GammaQuartet {
    pub health_health: f64,
    pub health_education: f64,
    pub education_health: f64,
    pub education_education: f64,
}

/// Fit quality summary.
#[derive(Clone, Debug, Serialize)]
pub struct FitDiagnostics {
    /// Natural-log likelihood. From `fit_mle` this is the sample total,
    /// conditional part plus the woman-marginal constant; from
    /// `diagnostics` it is the average log density of the empirical
    /// distribution under the predicted one (per unit mass).
    pub log_likelihood: f64,
    /// `sum_i pred_i * log2(pred_i / emp_i)` over cells with predicted
    /// mass. Infinite when predicted mass sits on an empty empirical cell.
    pub kl_divergence: f64,
    /// `-sum_i pred_i * log2(pred_i)`, in bits.
    pub shannon_entropy_predicted: f64,
    /// `100 * KL / (KL + entropy)`; 100 when the divergence is infinite.
    pub efficiency_loss_percent: f64,
    pub predicted_gammas: GammaQuartet,
    pub warnings: Vec<String>,
}

/// The share of description length lost to using the model's code instead
/// of the empirical one, in percent.
pub fn efficiency_loss_percent(kl: f64, entropy: f64) -> f64 {
    if kl.is_infinite() {
        return 100.0;
    }
    let denom = kl + entropy;
    if denom <= 0.0 {
        0.0
    } else {
        100.0 * kl / denom
    }
}

fn dataset_from_density(joint: &[Vec<f64>]) -> CoupleDataset {
    let mut records = Vec::new();
    for (r0, row) in joint.iter().enumerate() {
        let (xh, xe) = TYPE_ATTRIBUTES[r0];
        for (c0, &mass) in row.iter().enumerate() {
            if mass > 0.0 {
                let (yh, ye) = TYPE_ATTRIBUTES[c0];
                records.push(CoupleRecord {
                    weight: mass,
                    x: vec![xh, xe],
                    y: vec![yh, ye],
                });
            }
        }
    }
    CoupleDataset { records }
}

/// The four attribute-pair gammas of a 25x25 joint type density.
pub fn gamma_quartet(joint: &[Vec<f64>]) -> Result<GammaQuartet> {
    let data = dataset_from_density(joint);
    let g = |first, second| kruskal_gamma(&data, first, second).map(|r| r.gamma);
    Ok(GammaQuartet {
        health_health: g((Side::X, 1), (Side::Y, 1))?,
        health_education: g((Side::X, 1), (Side::Y, 2))?,
        education_health: g((Side::X, 2), (Side::Y, 1))?,
        education_education: g((Side::X, 2), (Side::Y, 2))?,
    })
}

/// Joint type density implied by the model: woman marginal times the
/// conditional partner distribution. `f_m` is normalized internally.
pub fn predicted_joint(p: &ParamVector, f_m: &[f64]) -> Result<Vec<Vec<f64>>> {
    p.validate()?;
    validate_fractions(f_m)?;
    let total: f64 = f_m.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyData("woman-type fractions are all zero".into()));
    }
    let packed = p.pack();
    let mut joint = vec![vec![0.0; TYPE_COUNT]; TYPE_COUNT];
    for r0 in 0..TYPE_COUNT {
        let share = f_m[r0] / total;
        if share == 0.0 {
            continue;
        }
        let probs = probs_from_scores(&scores_packed(&packed, r0));
        for (cell, pc) in joint[r0].iter_mut().zip(probs.iter()) {
            *cell = share * pc;
        }
    }
    Ok(joint)
}

fn validate_density(joint: &[Vec<f64>], name: &str) -> Result<()> {
    if joint.len() != TYPE_COUNT || joint.iter().any(|row| row.len() != TYPE_COUNT) {
        return Err(Error::DimensionMismatch {
            context: format!("{name} density must be a {TYPE_COUNT}x{TYPE_COUNT} matrix"),
        });
    }
    let mut total = 0.0;
    for row in joint {
        for &v in row {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} density has an invalid cell value {v}"
                )));
            }
            total += v;
        }
    }
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "{name} density must be normalized, total mass is {total}"
        )));
    }
    Ok(())
}

/// Distance between an empirical and a predicted joint type density.
///
/// The divergence is `sum pred * log2(pred / emp)` taken literally, so it is
/// `+inf` whenever the prediction puts mass on a cell the sample missed;
/// that case is reported through `warnings` rather than as an error.
/// Empirical mass on a cell with zero predicted density is an error.
pub fn diagnostics(empirical: &[Vec<f64>], predicted: &[Vec<f64>]) -> Result<FitDiagnostics> {
    validate_density(empirical, "empirical")?;
    validate_density(predicted, "predicted")?;
    let mut warnings = Vec::new();
    let mut kl = 0.0;
    let mut entropy = 0.0;
    let mut avg_log_density = 0.0;
    let mut missed_cells = 0usize;
    for r0 in 0..TYPE_COUNT {
        for c0 in 0..TYPE_COUNT {
            let emp = empirical[r0][c0];
            let pred = predicted[r0][c0];
            if emp > 0.0 && pred <= 0.0 {
                return Err(Error::SupportViolation(format!(
                    "empirical mass {emp} at types ({}, {}) where predicted density is zero",
                    r0 + 1,
                    c0 + 1
                )));
            }
            if emp > 0.0 {
                avg_log_density += emp * pred.ln();
            }
            if pred > 0.0 {
                entropy -= pred * pred.log2();
                if emp == 0.0 {
                    missed_cells += 1;
                } else {
                    kl += pred * (pred / emp).log2();
                }
            }
        }
    }
    if missed_cells > 0 {
        kl = f64::INFINITY;
        warnings.push(format!(
            "predicted density has mass on {missed_cells} cells with zero empirical mass; the divergence is infinite"
        ));
    }
    Ok(FitDiagnostics {
        log_likelihood: avg_log_density,
        kl_divergence: kl,
        shannon_entropy_predicted: entropy,
        efficiency_loss_percent: efficiency_loss_percent(kl, entropy),
        predicted_gammas: gamma_quartet(predicted)?,
        warnings,
    })
}

/// Maximum-likelihood fit of the 28 parameters from a 25x25 count matrix.
///
/// Annealing restarts run concurrently on independent RNG streams derived
/// from the seed; the best objective wins, with ties broken by restart
/// index, and the Newton polish then drives the mean-gradient sup-norm
/// below `cfg.tol`. Identical configurations produce bit-identical results.
pub fn fit_mle(
    counts: &[Vec<f64>],
    f_m: &[f64],
    cfg: &FitConfig,
) -> Result<(ParamVector, FitDiagnostics)> {
    validate_fractions(f_m)?;
    if cfg.restarts == 0 {
        return Err(Error::InvalidInput("restarts must be at least 1".into()));
    }
    if !(cfg.schedule.cooling > 0.0 && cfg.schedule.cooling <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "cooling factor {} is outside (0, 1]",
            cfg.schedule.cooling
        )));
    }
    let obj = Objective::new(counts)?;
    for r0 in 0..TYPE_COUNT {
        if obj.row_sums[r0] > 0.0 && f_m[r0] <= 0.0 {
            return Err(Error::SupportViolation(format!(
                "woman type {} has couples but zero marginal fraction",
                r0 + 1
            )));
        }
    }
    let start = match cfg.method {
        FitMethod::Ascent => vec![0.0; PARAM_DIM],
        FitMethod::Annealing => {
            let results: Vec<Result<(Vec<f64>, f64)>> = (0..cfg.restarts)
                .into_par_iter()
                .map(|k| anneal_restart(&obj, &cfg.schedule, cfg.seed, k as u64 + 1))
                .collect();
            let mut best: Option<(Vec<f64>, f64)> = None;
            for res in results {
                let (x, fx) = res?;
                let better = match &best {
                    None => true,
                    Some((_, fb)) => fx > *fb,
                };
                if better {
                    best = Some((x, fx));
                }
            }
            best.expect("at least one restart").0
        }
    };
    let packed = newton_polish(&obj, start, cfg)?;
    let estimate = ParamVector::unpack(&packed);
    let ll = log_likelihood(&estimate, counts, f_m)?;
    let empirical: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|n| n / obj.total).collect())
        .collect();
    let predicted = predicted_joint(&estimate, f_m)?;
    let mut diag = diagnostics(&empirical, &predicted)?;
    diag.log_likelihood = ll.total();
    Ok((estimate, diag))
}

/// Draws `n` couples: woman types from `f_m`, partner types from the model.
pub fn simulate_couples(
    p: &ParamVector,
    f_m: &[f64],
    n: usize,
    seed: u64,
) -> Result<CoupleDataset> {
    p.validate()?;
    validate_fractions(f_m)?;
    if n == 0 {
        return Err(Error::InvalidInput("cannot simulate zero couples".into()));
    }
    let total: f64 = f_m.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyData("woman-type fractions are all zero".into()));
    }
    let packed = p.pack();
    let mut cum_f = [0.0; TYPE_COUNT];
    let mut acc = 0.0;
    for (slot, &f) in cum_f.iter_mut().zip(f_m.iter()) {
        acc += f / total;
        *slot = acc;
    }
    let cond: Vec<[f64; TYPE_COUNT]> = (0..TYPE_COUNT)
        .map(|r0| {
            let p = probs_from_scores(&scores_packed(&packed, r0));
            let mut cum = [0.0; TYPE_COUNT];
            let mut acc = 0.0;
            for (slot, pc) in cum.iter_mut().zip(p.iter()) {
                acc += pc;
                *slot = acc;
            }
            cum
        })
        .collect();
    let draw = |cum: &[f64; TYPE_COUNT], u: f64| -> usize {
        let idx = cum.partition_point(|&c| c <= u);
        idx.min(TYPE_COUNT - 1)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let r0 = draw(&cum_f, rng.gen::<f64>());
        let c0 = draw(&cond[r0], rng.gen::<f64>());
        let (xh, xe) = TYPE_ATTRIBUTES[r0];
        let (yh, ye) = TYPE_ATTRIBUTES[c0];
        records.push(CoupleRecord {
            weight: 1.0,
            x: vec![xh, xe],
            y: vec![yh, ye],
        });
    }
    Ok(CoupleDataset { records })
}

/// Aggregates couple records into a weighted 25x25 count matrix. Attributes
/// must be integer (health, education) levels in 1..=5 on both sides.
pub fn counts_from_couples(data: &CoupleDataset) -> Result<Vec<Vec<f64>>> {
    data.validate()?;
    let mut counts = vec![vec![0.0; TYPE_COUNT]; TYPE_COUNT];
    for (i, rec) in data.records.iter().enumerate() {
        if rec.x.len() != 2 || rec.y.len() != 2 {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "record {i} must carry (health, education) on both sides, got {} and {} attributes",
                    rec.x.len(),
                    rec.y.len()
                ),
            });
        }
        let r = type_index(rec.x[0], rec.x[1])
            .map_err(|e| Error::InvalidInput(format!("record {i} woman side: {e}")))?;
        let c = type_index(rec.y[0], rec.y[1])
            .map_err(|e| Error::InvalidInput(format!("record {i} man side: {e}")))?;
        counts[r - 1][c - 1] += rec.weight;
    }
    Ok(counts)
}
