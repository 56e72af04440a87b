//! Sparse mean-shift recovery from out-of-control samples.
//!
//! After an alarm, the averaged deviation of the recent window from the
//! in-control mean is re-expressed in the PC domain, where the noise is
//! uncorrelated with unit variance. The shift vector is then recovered by an
//! adaptive lasso solved over a geometric regularization path; each path
//! point's support is backward-refined and scored by a BIC on its
//! least-squares refit, and the best-scoring support is reported with refit
//! coefficients. A benchmark variant applies the same machinery
//! coordinate-wise in the original variable domain.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pca::PCModel;

/// Relative weight floor: pilot entries below this fraction of the largest
/// absolute entry stop inflating the adaptive weights.
pub const DEFAULT_W_FLOOR_REL: f64 = 1e-6;

/// Absolute weight floor used when the pilot is identically zero.
pub const DEGENERATE_W_FLOOR: f64 = 1e-12;

/// RSS contributions below this value count as exact fits inside the BIC.
pub const BIC_RSS_FLOOR: f64 = 1e-12;

/// Default complexity-penalty multiplier (see [`bic_score`]). Doubling the
/// plain ln(p) cost guards the argmin against the best of p noise
/// coordinates while keeping moderate-signal recall; smaller values admit
/// noise tag-alongs, larger ones trade recall for fewer false selections.
pub const DEFAULT_BIC_PENALTY_FACTOR: f64 = 2.0;

/// Whitened observation model y* = A* mu + e with unit-variance noise.
///
/// Built from m averaged out-of-control samples: the deviation of the sample
/// mean from the model mean is projected to PC scores, each score is divided
/// by the square root of its (floored) eigenvalue, and everything is scaled
/// by sqrt(m) so the averaged noise keeps unit variance.
#[derive(Debug, Clone)]
pub struct SensingProblem {
    y_star: DVector<f64>,
    a_star: DMatrix<f64>,
    weights: DVector<f64>,
    m: usize,
    pilot: DVector<f64>,
    degenerate_pilot: bool,
    // solver caches
    gram: DMatrix<f64>,
    corr: DVector<f64>,
    yty: f64,
    lipschitz: f64,
}

impl SensingProblem {
    fn from_parts(
        y_star: DVector<f64>,
        a_star: DMatrix<f64>,
        weights: DVector<f64>,
        m: usize,
        pilot: DVector<f64>,
        degenerate_pilot: bool,
    ) -> Result<SensingProblem> {
        let p = pilot.len();
        if y_star.len() != p || a_star.nrows() != p || a_star.ncols() != p || weights.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: y_star.len() });
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::invalid("weights", "must be finite and positive"));
        }
        let gram = a_star.tr_mul(&a_star);
        let corr = a_star.tr_mul(&y_star);
        let yty = y_star.norm_squared();
        let lambda_max = gram.clone().symmetric_eigen().eigenvalues.max();
        if !(lambda_max > 0.0) || !lambda_max.is_finite() {
            return Err(Error::invalid("a_star", "gram matrix has no positive eigenvalue"));
        }
        let lipschitz = 2.0 * lambda_max;
        Ok(SensingProblem { y_star, a_star, weights, m, pilot, degenerate_pilot, gram, corr, yty, lipschitz })
    }

    pub fn dim(&self) -> usize {
        self.pilot.len()
    }

    pub fn y_star(&self) -> &DVector<f64> {
        &self.y_star
    }

    pub fn a_star(&self) -> &DMatrix<f64> {
        &self.a_star
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Number of out-of-control samples averaged into the problem.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Unpenalized estimate of the shift: sample mean minus model mean.
    pub fn pilot(&self) -> &DVector<f64> {
        &self.pilot
    }

    /// True when the pilot was identically zero and the weights all sit on
    /// the absolute floor; the problem is still solvable but carries no signal.
    pub fn degenerate_pilot(&self) -> bool {
        self.degenerate_pilot
    }

    /// Gradient Lipschitz constant of the smooth objective part.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// One adaptive-lasso solve at a fixed regularization strength.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    /// Estimated shift in original variable units.
    pub mu_hat: DVector<f64>,
    /// Sorted indices with mu_hat[j] != 0.
    pub support: Vec<usize>,
    /// Regularization strength this solve used.
    pub r: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final objective value (RSS plus weighted l1 penalty).
    pub objective: f64,
}

/// One point of the regularization path. `bic` scores the point's
/// backward-refined support; `support_size` counts the solver's support
/// before refinement (the monotone-growth diagnostic for the path itself).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub r: f64,
    pub bic: f64,
    pub support_size: usize,
}

/// Regularization-path sweep settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathConfig {
    /// Grid points, geometric from r_max downward.
    pub n_points: usize,
    /// Orders of magnitude the grid spans below r_max.
    pub decades: f64,
    /// Per-solve stopping tolerance on the stationarity violation, relative
    /// to the gradient magnitude at zero.
    pub tol: f64,
    pub max_iter: usize,
    /// Complexity-penalty multiplier: each selected variable costs
    /// `bic_penalty_factor * ln(p)`.
    #[serde(default = "default_bic_penalty_factor")]
    pub bic_penalty_factor: f64,
}

fn default_bic_penalty_factor() -> f64 {
    DEFAULT_BIC_PENALTY_FACTOR
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            n_points: 50,
            decades: 4.0,
            tol: 1e-6,
            max_iter: 10_000,
            bic_penalty_factor: DEFAULT_BIC_PENALTY_FACTOR,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::invalid("n_points", "must be at least 1"));
        }
        if !(self.decades > 0.0) || !self.decades.is_finite() {
            return Err(Error::invalid("decades", "must be positive and finite"));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::invalid("tol", "must be positive and finite"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be at least 1"));
        }
        if !(self.bic_penalty_factor > 0.0) || !self.bic_penalty_factor.is_finite() {
            return Err(Error::invalid("bic_penalty_factor", "must be positive and finite"));
        }
        Ok(())
    }
}

/// Outcome of a full path sweep: the BIC-minimizing selection plus the trace.
#[derive(Debug, Clone)]
pub struct DiagnosisResult {
    /// The winning point's backward-refined support with its coefficients
    /// refit by least squares (the lasso orders and proposes; the reported
    /// shifts are unshrunk).
    pub best: LassoSolution,
    /// BIC of `best`; ties on the trace resolve to the larger r (sparser fit).
    pub best_bic: f64,
    pub bic_trace: Vec<PathPoint>,
    pub pilot: DVector<f64>,
    pub degenerate_pilot: bool,
    /// Path points whose solver hit max_iter without meeting tol.
    pub n_unconverged: usize,
}

#[derive(Serialize, Deserialize)]
struct DiagnosisJson {
    support: Vec<usize>,
    mu_hat: Vec<f64>,
    r: f64,
    bic: f64,
    iterations: usize,
    converged: bool,
    objective: f64,
    bic_trace: Vec<PathPoint>,
    pilot: Vec<f64>,
    degenerate_pilot: bool,
    n_unconverged: usize,
}

impl DiagnosisResult {
    pub fn to_json(&self) -> String {
        let json = DiagnosisJson {
            support: self.best.support.clone(),
            mu_hat: self.best.mu_hat.iter().copied().collect(),
            r: self.best.r,
            bic: self.best_bic,
            iterations: self.best.iterations,
            converged: self.best.converged,
            objective: self.best.objective,
            bic_trace: self.bic_trace.clone(),
            pilot: self.pilot.iter().copied().collect(),
            degenerate_pilot: self.degenerate_pilot,
            n_unconverged: self.n_unconverged,
        };
        serde_json::to_string_pretty(&json).expect("diagnosis serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<DiagnosisResult> {
        let json: DiagnosisJson = serde_json::from_str(text)?;
        let p = json.mu_hat.len();
        if json.pilot.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: json.pilot.len() });
        }
        if json.support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("support", "must be strictly increasing"));
        }
        if json.support.iter().any(|&j| j >= p) {
            return Err(Error::invalid("support", "index out of range"));
        }
        Ok(DiagnosisResult {
            best: LassoSolution {
                mu_hat: DVector::from_vec(json.mu_hat),
                support: json.support,
                r: json.r,
                iterations: json.iterations,
                converged: json.converged,
                objective: json.objective,
            },
            best_bic: json.bic,
            bic_trace: json.bic_trace,
            pilot: DVector::from_vec(json.pilot),
            degenerate_pilot: json.degenerate_pilot,
            n_unconverged: json.n_unconverged,
        })
    }
}

fn pilot_of(model: &PCModel, ooc: &DMatrix<f64>) -> Result<DVector<f64>> {
    if ooc.nrows() == 0 {
        return Err(Error::TooFewSamples { min: 1, got: 0 });
    }
    if ooc.ncols() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: ooc.ncols() });
    }
    if ooc.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "out-of-control samples" });
    }
    Ok(ooc.row_mean().transpose() - model.mean())
}

/// Default absolute weight floor for a given pilot: a small fraction of its
/// largest entry, or the degenerate fallback when the pilot is all zero.
pub fn default_w_floor(pilot: &DVector<f64>) -> f64 {
    let peak = pilot.amax();
    if peak > 0.0 {
        DEFAULT_W_FLOOR_REL * peak
    } else {
        DEGENERATE_W_FLOOR
    }
}

/// Assemble the whitened PC-domain problem from m out-of-control samples.
///
/// Weights are w_j = 1 / max(|pilot_j|, w_floor); the pilot is the exact
/// unpenalized solution because the sensing matrix is square and invertible.
pub fn build_problem(model: &PCModel, ooc: &DMatrix<f64>, w_floor: f64) -> Result<SensingProblem> {
    if !(w_floor > 0.0) || !w_floor.is_finite() {
        return Err(Error::invalid("w_floor", "must be positive and finite"));
    }
    let pilot = pilot_of(model, ooc)?;
    let p = model.dim();
    let m = ooc.nrows();
    let sqrt_m = (m as f64).sqrt();
    let mut a_star = model.eigvecs().transpose();
    for j in 0..p {
        let scale = sqrt_m / model.floored_eigval(j).sqrt();
        a_star.row_mut(j).scale_mut(scale);
    }
    let y_star = &a_star * &pilot;
    let degenerate = pilot.amax() == 0.0;
    let weights = DVector::from_fn(p, |j, _| 1.0 / pilot[j].abs().max(w_floor));
    SensingProblem::from_parts(y_star, a_star, weights, m, pilot, degenerate)
}

/// Same observation model standardized coordinate-wise instead: each variable
/// is divided by its own marginal standard deviation (diagonal of the
/// reconstructed covariance), deliberately ignoring cross-correlations. This
/// is the benchmark the PC-domain recovery is compared against.
fn build_problem_marginal(model: &PCModel, ooc: &DMatrix<f64>, w_floor: f64) -> Result<SensingProblem> {
    if !(w_floor > 0.0) || !w_floor.is_finite() {
        return Err(Error::invalid("w_floor", "must be positive and finite"));
    }
    let pilot = pilot_of(model, ooc)?;
    let p = model.dim();
    let m = ooc.nrows();
    let sqrt_m = (m as f64).sqrt();
    let a = model.eigvecs();
    let mut a_diag = DMatrix::zeros(p, p);
    for j in 0..p {
        // marginal variance of coordinate j under the floored spectrum
        let var: f64 = (0..p).map(|k| model.floored_eigval(k) * a[(j, k)] * a[(j, k)]).sum();
        a_diag[(j, j)] = sqrt_m / var.sqrt();
    }
    let y_star = &a_diag * &pilot;
    let degenerate = pilot.amax() == 0.0;
    let weights = DVector::from_fn(p, |j, _| 1.0 / pilot[j].abs().max(w_floor));
    SensingProblem::from_parts(y_star, a_diag, weights, m, pilot, degenerate)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn penalty(mu: &DVector<f64>, weights: &DVector<f64>, r: f64) -> f64 {
    r * mu.iter().zip(weights.iter()).map(|(x, w)| w * x.abs()).sum::<f64>()
}

fn objective_with(prob: &SensingProblem, mu: &DVector<f64>, gmu: &DVector<f64>, r: f64) -> f64 {
    prob.yty - 2.0 * mu.dot(&prob.corr) + mu.dot(gmu) + penalty(mu, &prob.weights, r)
}

/// Proximal-gradient (ISTA) minimization of
/// ||y* - A* mu||^2 + r * sum_j w_j |mu_j|, initialized at `init`.
///
/// Step size 1/L with L = 2 lambda_max(A*' A*); each step soft-thresholds
/// coordinate j at r*w_j/L. Stops when the stationarity violation drops to
/// tol * max(1, |2 A*'y*|_inf) (the gradient magnitude at zero fixes the
/// scale), or at max_iter with converged = false. The objective is
/// nonincreasing by construction; an increase beyond roundoff is reported
/// as an error.
fn ista(prob: &SensingProblem, r: f64, init: DVector<f64>, tol: f64, max_iter: usize) -> Result<LassoSolution> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::invalid("r", "must be nonnegative and finite"));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::invalid("tol", "must be positive and finite"));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter", "must be at least 1"));
    }
    if init.len() != prob.dim() {
        return Err(Error::DimensionMismatch { expected: prob.dim(), got: init.len() });
    }
    let p = prob.dim();
    let l = prob.lipschitz;
    let stop = tol * prob.corr.iter().fold(1.0_f64, |acc, c| acc.max(2.0 * c.abs()));
    let mut mu = init;
    let mut gmu = &prob.gram * &mu;
    let mut obj = objective_with(prob, &mu, &gmu, r);
    let mut iterations = 0;
    let mut converged = stationarity_violation(prob, &mu, &gmu, r) <= stop;
    while !converged && iterations < max_iter {
        iterations += 1;
        for j in 0..p {
            let v = mu[j] - 2.0 * (gmu[j] - prob.corr[j]) / l;
            mu[j] = soft_threshold(v, r * prob.weights[j] / l);
        }
        gmu = &prob.gram * &mu;
        let new_obj = objective_with(prob, &mu, &gmu, r);
        if new_obj > obj + 1e-10 * obj.abs().max(1.0) {
            return Err(Error::invalid("solver", "objective increased beyond roundoff tolerance"));
        }
        obj = new_obj;
        converged = stationarity_violation(prob, &mu, &gmu, r) <= stop;
    }
    let support: Vec<usize> = (0..p).filter(|&j| mu[j] != 0.0).collect();
    Ok(LassoSolution { mu_hat: mu, support, r, iterations, converged, objective: obj })
}

/// Solve the adaptive lasso at one regularization strength from a zero start.
pub fn solve_adaptive_lasso(prob: &SensingProblem, r: f64, tol: f64, max_iter: usize) -> Result<LassoSolution> {
    ista(prob, r, DVector::zeros(prob.dim()), tol, max_iter)
}

/// Residual sum of squares of the unpenalized least-squares refit on a
/// support. A singular subset (measure zero for a positive definite gram)
/// falls back to the no-fit residual, which simply loses the comparison.
fn ols_refit_rss(prob: &SensingProblem, support: &[usize]) -> f64 {
    if support.is_empty() {
        return prob.yty;
    }
    let k = support.len();
    let mut gss = DMatrix::zeros(k, k);
    let mut cs = DVector::zeros(k);
    for (a, &ja) in support.iter().enumerate() {
        cs[a] = prob.corr[ja];
        for (b, &jb) in support.iter().enumerate() {
            gss[(a, b)] = prob.gram[(ja, jb)];
        }
    }
    let beta = match gss.clone().cholesky() {
        Some(ch) => ch.solve(&cs),
        None => match gss.lu().solve(&cs) {
            Some(b) => b,
            None => return prob.yty,
        },
    };
    // At the least-squares optimum, RSS = y'y - beta'corr.
    (prob.yty - cs.dot(&beta)).max(0.0)
}

/// BIC of a solution's support: refit RSS + penalty_factor * |support| *
/// ln(p), RSS floored at 1e-12.
///
/// The RSS is that of the least-squares refit on the selected support, not
/// the shrunk lasso residual: shrinkage inflates the residual of every
/// sparse fit, which would push the minimizer far down the path and drag
/// noise coordinates in. The lasso orders the candidates; the refit scores
/// them.
///
/// The whitened noise has unit variance by construction, so the Gaussian
/// likelihood term is the plain RSS. An estimated-variance form (p ln(RSS/p))
/// degenerates here: the sensing matrix is square and invertible, RSS reaches
/// zero at the full support in every problem, and the log would send the BIC
/// of the fully dense fit to -infinity regardless of the data.
///
/// `penalty_factor` scales the per-variable cost; values above 1 guard the
/// selection against the best of p noise coordinates (the extended-BIC
/// correction for searching over p candidates).
pub fn bic_score(prob: &SensingProblem, sol: &LassoSolution, penalty_factor: f64) -> f64 {
    let p = prob.dim() as f64;
    let rss = ols_refit_rss(prob, &sol.support);
    rss.max(BIC_RSS_FLOOR) + penalty_factor * sol.support.len() as f64 * p.ln()
}

/// Backward-eliminate a support under the BIC: repeatedly refit by least
/// squares and drop the member whose removal costs less residual than the
/// per-variable penalty, until every member earns its keep. Returns the
/// refined support and its refit RSS.
///
/// The lasso path orders candidates by pilot magnitude, so a noise
/// coordinate with an outlying pilot can enter before a true one and then
/// ride along in every later support; the path itself never offers the
/// support without it. Elimination searches those off-path neighbors. It is
/// plain greedy descent on the same BIC, so the selected support can only
/// improve.
fn refine_support(prob: &SensingProblem, support: &[usize], penalty_factor: f64) -> (Vec<usize>, f64) {
    let penalty = penalty_factor * (prob.dim() as f64).ln();
    let mut kept: Vec<usize> = support.to_vec();
    if kept.is_empty() {
        return (kept, prob.yty);
    }
    let k = kept.len();
    let mut gss = DMatrix::zeros(k, k);
    let mut cs = DVector::zeros(k);
    for (a, &ja) in kept.iter().enumerate() {
        cs[a] = prob.corr[ja];
        for (b, &jb) in kept.iter().enumerate() {
            gss[(a, b)] = prob.gram[(ja, jb)];
        }
    }
    let mut inv = match gss.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => match gss.try_inverse() {
            Some(m) => m,
            None => return (kept, ols_refit_rss(prob, support)),
        },
    };
    loop {
        let beta = &inv * &cs;
        // removal cost of member a: beta_a^2 / (G_SS^-1)_aa
        let mut weakest: Option<(usize, f64)> = None;
        for a in 0..kept.len() {
            let gain = beta[a] * beta[a] / inv[(a, a)];
            if weakest.is_none_or(|(_, g)| gain < g) {
                weakest = Some((a, gain));
            }
        }
        let Some((a, gain)) = weakest else { break };
        if gain >= penalty {
            break;
        }
        if kept.len() == 1 {
            kept.clear();
            return (kept, prob.yty);
        }
        // inverse of the reduced gram by the partitioned-inverse identity
        let n = kept.len();
        let mut reduced = DMatrix::zeros(n - 1, n - 1);
        let scale = inv[(a, a)];
        for (ri, i) in (0..n).filter(|&i| i != a).enumerate() {
            for (rj, j) in (0..n).filter(|&j| j != a).enumerate() {
                reduced[(ri, rj)] = inv[(i, j)] - inv[(i, a)] * inv[(j, a)] / scale;
            }
        }
        inv = reduced;
        kept.remove(a);
        let mut next_c = DVector::zeros(n - 1);
        for (ri, &j) in kept.iter().enumerate() {
            next_c[ri] = prob.corr[j];
        }
        cs = next_c;
    }
    // refactor from scratch so accumulated downdate round-off never leaks
    // into the reported score
    (kept.clone(), ols_refit_rss(prob, &kept))
}

/// Least-squares refit of a support, returned as a full-length solution with
/// the lasso objective evaluated at the refit coefficients.
fn refit_solution(
    prob: &SensingProblem,
    support: Vec<usize>,
    r: f64,
    iterations: usize,
    converged: bool,
) -> LassoSolution {
    let p = prob.dim();
    let mut mu_hat = DVector::zeros(p);
    if !support.is_empty() {
        let k = support.len();
        let mut gss = DMatrix::zeros(k, k);
        let mut cs = DVector::zeros(k);
        for (a, &ja) in support.iter().enumerate() {
            cs[a] = prob.corr[ja];
            for (b, &jb) in support.iter().enumerate() {
                gss[(a, b)] = prob.gram[(ja, jb)];
            }
        }
        let beta = match gss.clone().cholesky() {
            Some(ch) => ch.solve(&cs),
            None => gss.lu().solve(&cs).unwrap_or_else(|| DVector::zeros(k)),
        };
        for (a, &ja) in support.iter().enumerate() {
            mu_hat[ja] = beta[a];
        }
    }
    let support: Vec<usize> = (0..p).filter(|&j| mu_hat[j] != 0.0).collect();
    let gmu = &prob.gram * &mu_hat;
    let rss = (prob.yty - 2.0 * mu_hat.dot(&prob.corr) + mu_hat.dot(&gmu)).max(0.0);
    let penalty: f64 = support.iter().map(|&j| prob.weights[j] * mu_hat[j].abs()).sum();
    LassoSolution { objective: rss + r * penalty, mu_hat, support, r, iterations, converged }
}

/// Smallest regularization strength at which the zero vector is optimal.
pub fn r_max(prob: &SensingProblem) -> f64 {
    (0..prob.dim())
        .map(|j| 2.0 * prob.corr[j].abs() / prob.weights[j])
        .fold(0.0_f64, f64::max)
}

fn stationarity_violation(
    prob: &SensingProblem,
    mu: &DVector<f64>,
    gmu: &DVector<f64>,
    r: f64,
) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..prob.dim() {
        let grad = 2.0 * (gmu[j] - prob.corr[j]);
        let bound = r * prob.weights[j];
        let viol = if mu[j] != 0.0 {
            (grad + bound * mu[j].signum()).abs()
        } else {
            (grad.abs() - bound).max(0.0)
        };
        worst = worst.max(viol);
    }
    worst
}

/// Largest stationarity violation of a solution:
/// off support |grad_j| must not exceed r w_j, on support grad_j + r w_j sign
/// must vanish; grad = 2 A*'(A* mu - y*).
pub fn kkt_residual(prob: &SensingProblem, sol: &LassoSolution) -> f64 {
    let gmu = &prob.gram * &sol.mu_hat;
    stationarity_violation(prob, &sol.mu_hat, &gmu, sol.r)
}

fn run_path(prob: SensingProblem, cfg: &PathConfig) -> Result<DiagnosisResult> {
    cfg.validate()?;
    let rmax = r_max(&prob);
    if !(rmax > 0.0) {
        // No signal at all: the zero solution is the whole path.
        let sol = solve_adaptive_lasso(&prob, 0.0, cfg.tol, cfg.max_iter)?;
        let bic = bic_score(&prob, &sol, cfg.bic_penalty_factor);
        let unconverged = usize::from(!sol.converged);
        return Ok(DiagnosisResult {
            best_bic: bic,
            bic_trace: vec![PathPoint { r: 0.0, bic, support_size: sol.support.len() }],
            best: sol,
            pilot: prob.pilot.clone(),
            degenerate_pilot: prob.degenerate_pilot,
            n_unconverged: unconverged,
        });
    }
    let n = cfg.n_points;
    let p_ln = (prob.dim() as f64).ln();
    let mut trace = Vec::with_capacity(n);
    // winning candidate: (bic, r, refined support, iterations, converged)
    let mut best: Option<(f64, f64, Vec<usize>, usize, bool)> = None;
    let mut warm = DVector::zeros(prob.dim());
    let mut n_unconverged = 0;
    // consecutive path points usually share a support; refine each once
    let mut refined: BTreeMap<Vec<usize>, (Vec<usize>, f64)> = BTreeMap::new();
    for i in 0..n {
        let frac = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        let r = rmax * 10.0_f64.powf(-cfg.decades * frac);
        let sol = ista(&prob, r, warm.clone(), cfg.tol, cfg.max_iter)?;
        warm = sol.mu_hat.clone();
        if !sol.converged {
            n_unconverged += 1;
        }
        let (support, rss) = refined
            .entry(sol.support.clone())
            .or_insert_with(|| refine_support(&prob, &sol.support, cfg.bic_penalty_factor))
            .clone();
        let bic = rss.max(BIC_RSS_FLOOR) + cfg.bic_penalty_factor * support.len() as f64 * p_ln;
        trace.push(PathPoint { r, bic, support_size: sol.support.len() });
        // strict improvement: BIC ties resolve to the earlier (sparser) point
        if best.as_ref().is_none_or(|(b, ..)| bic < *b) {
            best = Some((bic, r, support, sol.iterations, sol.converged));
        }
    }
    let (best_bic, r, support, iterations, converged) = best.expect("path has at least one point");
    let best = refit_solution(&prob, support, r, iterations, converged);
    Ok(DiagnosisResult {
        best,
        best_bic,
        bic_trace: trace,
        pilot: prob.pilot,
        degenerate_pilot: prob.degenerate_pilot,
        n_unconverged,
    })
}

/// PC-domain sparse shift recovery: build the whitened problem with default
/// weight floor, sweep the path, return the BIC-best refined support with
/// least-squares coefficients.
pub fn diagnose(model: &PCModel, ooc: &DMatrix<f64>, cfg: &PathConfig) -> Result<DiagnosisResult> {
    let pilot = pilot_of(model, ooc)?;
    let prob = build_problem(model, ooc, default_w_floor(&pilot))?;
    run_path(prob, cfg)
}

/// Benchmark recovery in the original variable domain with per-coordinate
/// standardization only (correlations ignored); same weights, path, and BIC.
pub fn diagnose_leb(model: &PCModel, ooc: &DMatrix<f64>, cfg: &PathConfig) -> Result<DiagnosisResult> {
    let pilot = pilot_of(model, ooc)?;
    let prob = build_problem_marginal(model, ooc, default_w_floor(&pilot))?;
    run_path(prob, cfg)
}

/// Gram matrix of the per-observation whitened sensing operator:
/// C = A diag(1/lambda_fl) A', which reconstructs the inverse covariance when
/// no eigenvalue sits on the floor.
pub fn sensing_gram(model: &PCModel) -> DMatrix<f64> {
    let p = model.dim();
    let a = model.eigvecs();
    let mut scaled = a.clone_owned();
    for j in 0..p {
        scaled.column_mut(j).scale_mut(1.0 / model.floored_eigval(j));
    }
    scaled * a.transpose()
}

/// Smallest eigenvalue of the sensing Gram; positive for any valid model,
/// which is what makes the recovery problem well posed.
pub fn check_sensing_pd(model: &PCModel) -> f64 {
    sensing_gram(model).symmetric_eigen().eigenvalues.min()
}
