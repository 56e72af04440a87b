//! EWMA-smoothed, soft-thresholded monitoring over all PC scores.
//!
//! Each standardized score stream is smoothed with an EWMA, squared and
//! standardized to a d statistic, soft-thresholded at `nu`, and summed:
//!
//!   R_t = sum_j max(0, d_tj - nu)
//!
//! The threshold keeps the thousands of in-control streams from drowning the
//! few shifted ones. Under the in-control model d is approximately
//! chi-square(1), which gives closed-form moments for the thresholded summand
//! and an analytic control limit; a Monte-Carlo calibrator targeting a given
//! in-control average run length is provided for desk-scale dimensions.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::pca::PCModel;
use crate::rngutil::substream;

/// Variance used to standardize the EWMA statistic before squaring.
///
/// `Paper` keeps the published value gamma/(1-gamma); the steady-state EWMA
/// variance is actually gamma/(2-gamma) (`Asymptotic`), and
/// `ExactTimeVarying` applies the finite-t correction, under which d is
/// exactly chi-square(1) in control at every t.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EwmaVarianceMode {
    Paper,
    Asymptotic,
    ExactTimeVarying,
}

impl EwmaVarianceMode {
    /// sigma_z^2 at time t (t counts from 1).
    pub fn sigma_sq(self, gamma: f64, t: u64) -> f64 {
        match self {
            EwmaVarianceMode::Paper => gamma / (1.0 - gamma),
            EwmaVarianceMode::Asymptotic => gamma / (2.0 - gamma),
            EwmaVarianceMode::ExactTimeVarying => {
                gamma / (2.0 - gamma) * (1.0 - (1.0 - gamma).powi(2 * t as i32))
            }
        }
    }
}

/// Alarm-rate target: a per-step false-alarm probability or its equivalent
/// in-control average run length (alpha = 1 / ARL).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmTarget {
    Alpha(f64),
    TargetArl(f64),
}

/// How the control limit is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    Analytic,
    MonteCarlo,
    /// Analytic for p >= 5000 (where the CLT limit is accurate), Monte-Carlo
    /// below.
    Auto,
}

/// Dimension threshold used by [`CalibrationMode::Auto`].
pub const AUTO_ANALYTIC_MIN_P: usize = 5000;

/// Monitoring parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    /// EWMA weight, in (0, 1].
    pub gamma: f64,
    /// Soft threshold applied to each d statistic, >= 0.
    pub nu: f64,
    pub target: AlarmTarget,
    pub variance_mode: EwmaVarianceMode,
    pub calibration: CalibrationMode,
}

impl MonitorConfig {
    pub fn new(gamma: f64, nu: f64, target: AlarmTarget) -> Result<MonitorConfig> {
        let cfg = MonitorConfig {
            gamma,
            nu,
            target,
            variance_mode: EwmaVarianceMode::Paper,
            calibration: CalibrationMode::Auto,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_variance_mode(mut self, mode: EwmaVarianceMode) -> MonitorConfig {
        self.variance_mode = mode;
        self
    }

    pub fn with_calibration(mut self, mode: CalibrationMode) -> MonitorConfig {
        self.calibration = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma", format!("must be in (0, 1], got {}", self.gamma)));
        }
        if self.variance_mode == EwmaVarianceMode::Paper && self.gamma >= 1.0 {
            return Err(Error::invalid("gamma", "gamma = 1 is undefined in paper variance mode"));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid("nu", format!("must be >= 0, got {}", self.nu)));
        }
        match self.target {
            AlarmTarget::Alpha(a) if !(a > 0.0 && a < 1.0) => {
                Err(Error::invalid("alpha", format!("must be in (0, 1), got {a}")))
            }
            AlarmTarget::TargetArl(l) if !(l > 1.0 && l.is_finite()) => {
                Err(Error::invalid("target_arl", format!("must be > 1, got {l}")))
            }
            _ => Ok(()),
        }
    }

    /// Per-step false-alarm probability implied by the target.
    pub fn alpha(&self) -> f64 {
        match self.target {
            AlarmTarget::Alpha(a) => a,
            AlarmTarget::TargetArl(l) => 1.0 / l,
        }
    }

    /// In-control ARL implied by the target.
    pub fn target_arl(&self) -> f64 {
        match self.target {
            AlarmTarget::Alpha(a) => 1.0 / a,
            AlarmTarget::TargetArl(l) => l,
        }
    }
}

/// One observation of the monitored stream.
#[derive(Debug, Clone)]
pub struct Observation {
    pub values: DVector<f64>,
    /// Time index, counting from 1.
    pub t: u64,
}

/// Mutable monitoring state: the EWMA vector, the step counter, the control
/// limit, and the first alarm time if one has occurred.
#[derive(Debug, Clone)]
pub struct MonitorState {
    z: DVector<f64>,
    t: u64,
    r0: f64,
    first_alarm: Option<u64>,
}

impl MonitorState {
    pub fn new(p: usize, r0: f64) -> Result<MonitorState> {
        if !(r0.is_finite() && r0 >= 0.0) {
            return Err(Error::invalid("r0", format!("must be finite and >= 0, got {r0}")));
        }
        Ok(MonitorState { z: DVector::zeros(p), t: 0, r0, first_alarm: None })
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn tripped(&self) -> bool {
        self.first_alarm.is_some()
    }

    /// Time of the first alarm (the run length), if any.
    pub fn first_alarm(&self) -> Option<u64> {
        self.first_alarm
    }
}

/// One monitored time step, as written to chart output.
#[derive(Debug, Clone, Serialize)]
pub struct ChartPoint {
    pub t: u64,
    pub r: f64,
    pub r0: f64,
    pub alarm: bool,
    /// Per-PC thresholded contributions max(0, d_j - nu), if requested.
    pub contributions: Option<Vec<f64>>,
}

/// Moments of the soft-thresholded squared statistic max(0, X - nu) for
/// X ~ chi-square(1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdMoments {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
}

/// Closed-form moments of max(0, X - nu), X ~ chi-square(1), via the upper
/// incomplete gamma function Gamma(1/2, x) = sqrt(pi) * erfc(sqrt(x)):
///
///   E d~   = erfc(s) + e^(-nu/2) sqrt(2 nu) / sqrt(pi) - nu * P(X > nu)
///   E d~^2 = 3 erfc(s) + e^(-nu/2) sqrt(2 nu) (3 + nu) / sqrt(pi)
///            - 2 nu E d~ - nu^2 P(X > nu)
///
/// with s = sqrt(nu/2) and P(X > nu) = erfc(s). At nu = 0 these are exactly
/// (1, 3).
pub fn threshold_moments(nu: f64) -> Result<ThresholdMoments> {
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(Error::invalid("nu", format!("must be >= 0 and finite, got {nu}")));
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let sf = erfc((nu / 2.0).sqrt());
    let tail = (-nu / 2.0).exp() * (2.0 * nu).sqrt() / sqrt_pi;
    let mean = sf + tail - nu * sf;
    let second_moment = 3.0 * sf + tail * (3.0 + nu) - 2.0 * nu * mean - nu * nu * sf;
    // Roundoff guard: the true variance is positive for all finite nu.
    let variance = (second_moment - mean * mean).max(0.0);
    Ok(ThresholdMoments { mean, second_moment, variance })
}

/// Analytic control limit from the CLT over p independent thresholded
/// chi-square(1) summands:
///
///   R0 = p * mean + sqrt(p) * sd * Phi^-1(1 - alpha)
pub fn control_limit_analytic(p: usize, nu: f64, alpha: f64) -> Result<f64> {
    if p == 0 {
        return Err(Error::invalid("p", "must be positive"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", format!("must be in (0, 1), got {alpha}")));
    }
    let m = threshold_moments(nu)?;
    let z = Normal::standard().inverse_cdf(1.0 - alpha);
    Ok(p as f64 * m.mean + (p as f64).sqrt() * m.variance.sqrt() * z)
}

/// Soft threshold `nu` whose in-control pass probability is `significance`:
/// nu = Q_{chi1^2}(1 - significance), so P(d > nu) = significance.
pub fn nu_from_significance(significance: f64) -> Result<f64> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::invalid(
            "significance",
            format!("must be in (0, 1), got {significance}"),
        ));
    }
    let chi1 = ChiSquared::new(1.0).expect("chi-square(1) is valid");
    Ok(chi1.inverse_cdf(1.0 - significance))
}

/// One EWMA update z <- gamma * y + (1 - gamma) * z over standardized scores.
pub fn ewma_step(z: &mut DVector<f64>, standardized: &DVector<f64>, gamma: f64) -> Result<()> {
    if z.len() != standardized.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: standardized.len() });
    }
    if standardized.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "standardized scores" });
    }
    z.zip_apply(standardized, |zi, yi| *zi = gamma * yi + (1.0 - gamma) * *zi);
    Ok(())
}

/// Squared standardized EWMA statistics d_tj = (z_tj / sigma_z)^2.
pub fn d_statistic(z: &DVector<f64>, t: u64, cfg: &MonitorConfig) -> DVector<f64> {
    let sig_sq = cfg.variance_mode.sigma_sq(cfg.gamma, t);
    z.map(|v| v * v / sig_sq)
}

/// Soft-thresholded scan statistic R = sum_j max(0, d_j - nu).
pub fn r_statistic(d: &DVector<f64>, nu: f64) -> f64 {
    d.iter().map(|&v| (v - nu).max(0.0)).sum()
}

/// Advance the monitor by one observation. On error the state is unchanged.
pub fn monitor_step(
    state: &mut MonitorState,
    model: &PCModel,
    obs: &Observation,
    cfg: &MonitorConfig,
    with_contributions: bool,
) -> Result<ChartPoint> {
    if state.z.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: state.z.len() });
    }
    let scores = model.project(&obs.values)?;
    let t = state.t + 1;
    let mut z = state.z.clone();
    ewma_step(&mut z, &scores.standardized, cfg.gamma)?;
    let d = d_statistic(&z, t, cfg);
    let r = r_statistic(&d, cfg.nu);
    state.z = z;
    state.t = t;
    let alarm = r > state.r0;
    if alarm && state.first_alarm.is_none() {
        state.first_alarm = Some(t);
    }
    let contributions =
        with_contributions.then(|| d.iter().map(|&v| (v - cfg.nu).max(0.0)).collect());
    Ok(ChartPoint { t, r, r0: state.r0, alarm, contributions })
}

/// Result of a control-limit calibration, serialized next to chart output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub gamma: f64,
    pub nu: f64,
    pub alpha: f64,
    pub r0: f64,
    /// "analytic" or "monte_carlo".
    pub mode: CalibrationMode,
    pub variance_mode: EwmaVarianceMode,
    /// Monte-Carlo replications (0 for analytic).
    pub reps: usize,
    pub seed: u64,
    /// In-control ARL measured on fresh streams (None for analytic).
    pub empirical_arl: Option<f64>,
    pub target_arl: f64,
    pub converged: bool,
}

impl CalibrationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<CalibrationReport> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Simulate one in-control run in score space (standardized scores of an
/// in-control Gaussian stream are i.i.d. standard normal per PC) and return
/// the running maximum of R_t for t = 1..=cap.
fn prefix_max_r(p: usize, cfg: &MonitorConfig, cap: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    let gamma = cfg.gamma;
    let mut z = vec![0.0f64; p];
    let mut out = Vec::with_capacity(cap);
    let mut running = f64::NEG_INFINITY;
    for t in 1..=cap {
        let sig_sq = cfg.variance_mode.sigma_sq(gamma, t as u64);
        let mut r = 0.0;
        for zj in z.iter_mut() {
            let y: f64 = StandardNormal.sample(rng);
            *zj = gamma * y + (1.0 - gamma) * *zj;
            let d = *zj * *zj / sig_sq;
            if d > cfg.nu {
                r += d - cfg.nu;
            }
        }
        running = running.max(r);
        out.push(running);
    }
    out
}

/// Run length at threshold r0 for a prefix-max sequence; censored runs count
/// as the cap (prefix-max is nondecreasing, so binary search applies).
fn run_length(prefix_max: &[f64], r0: f64) -> usize {
    let idx = prefix_max.partition_point(|&m| m <= r0);
    (idx + 1).min(prefix_max.len())
}

fn mean_run_length(ensemble: &[Vec<f64>], r0: f64) -> f64 {
    ensemble.iter().map(|run| run_length(run, r0) as f64).sum::<f64>() / ensemble.len() as f64
}

const CALIBRATION_CAP_FACTOR: f64 = 8.0;
const CALIBRATION_TAG: u64 = 0x4341_4c49; // "CALI"
const VALIDATION_TAG: u64 = 0x5641_4c49; // "VALI"

/// Monte-Carlo control limit: bisect r0 until the in-control ARL, estimated
/// from `reps` simulated score-space runs, is within 5% of the target. The
/// reported `empirical_arl` is measured on a fresh set of runs. Deterministic
/// for a given seed.
pub fn control_limit_montecarlo(
    model: &PCModel,
    cfg: &MonitorConfig,
    target_arl: f64,
    reps: usize,
    seed: u64,
) -> Result<CalibrationReport> {
    let r0 = calibrate_r0_scores(model.dim(), cfg, target_arl, reps, seed)?;
    let empirical = empirical_arl_scores(model.dim(), cfg, r0, reps, seed);
    let converged = (empirical - target_arl).abs() <= 0.05 * target_arl;
    Ok(CalibrationReport {
        gamma: cfg.gamma,
        nu: cfg.nu,
        alpha: 1.0 / target_arl,
        r0,
        mode: CalibrationMode::MonteCarlo,
        variance_mode: cfg.variance_mode,
        reps,
        seed,
        empirical_arl: Some(empirical),
        target_arl,
        converged,
    })
}

/// Score-space Monte-Carlo calibration (shared by experiments, where only the
/// dimension matters). Returns the bisected r0.
pub(crate) fn calibrate_r0_scores(
    p: usize,
    cfg: &MonitorConfig,
    target_arl: f64,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    cfg.validate()?;
    if p == 0 {
        return Err(Error::invalid("p", "must be positive"));
    }
    if reps < 10 {
        return Err(Error::invalid("reps", format!("need at least 10, got {reps}")));
    }
    if !(target_arl > 1.0 && target_arl.is_finite()) {
        return Err(Error::invalid("target_arl", format!("must be > 1, got {target_arl}")));
    }
    let cap = (target_arl * CALIBRATION_CAP_FACTOR).ceil() as usize;
    let ensemble: Vec<Vec<f64>> = (0..reps)
        .map(|i| {
            let mut rng = substream(seed, CALIBRATION_TAG, i as u64);
            prefix_max_r(p, cfg, cap, &mut rng)
        })
        .collect();

    // ARL(r0) is nondecreasing in r0; bisect on the empirical ensemble.
    let mut lo = 0.0f64;
    let mut hi = ensemble.iter().map(|run| *run.last().unwrap()).fold(0.0f64, f64::max) * 1.01;
    let mut best = (f64::INFINITY, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let arl = mean_run_length(&ensemble, mid);
        let gap = (arl - target_arl).abs();
        if gap < best.0 {
            best = (gap, mid);
        }
        if arl < target_arl {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 * hi.max(1.0) {
            break;
        }
    }
    Ok(best.1)
}

/// In-control ARL of a fixed r0 on fresh score-space runs.
pub(crate) fn empirical_arl_scores(
    p: usize,
    cfg: &MonitorConfig,
    r0: f64,
    reps: usize,
    seed: u64,
) -> f64 {
    let cap = (cfg.target_arl() * CALIBRATION_CAP_FACTOR).ceil() as usize;
    let total: f64 = (0..reps)
        .map(|i| {
            let mut rng = substream(seed, VALIDATION_TAG, i as u64);
            run_length(&prefix_max_r(p, cfg, cap, &mut rng), r0) as f64
        })
        .sum();
    total / reps as f64
}

/// Pick the control limit per the configured calibration mode.
pub fn calibrate(
    model: &PCModel,
    cfg: &MonitorConfig,
    reps: usize,
    seed: u64,
) -> Result<CalibrationReport> {
    cfg.validate()?;
    let analytic = match cfg.calibration {
        CalibrationMode::Analytic => true,
        CalibrationMode::MonteCarlo => false,
        CalibrationMode::Auto => model.dim() >= AUTO_ANALYTIC_MIN_P,
    };
    if analytic {
        let r0 = control_limit_analytic(model.dim(), cfg.nu, cfg.alpha())?;
        Ok(CalibrationReport {
            gamma: cfg.gamma,
            nu: cfg.nu,
            alpha: cfg.alpha(),
            r0,
            mode: CalibrationMode::Analytic,
            variance_mode: cfg.variance_mode,
            reps: 0,
            seed,
            empirical_arl: None,
            target_arl: cfg.target_arl(),
            converged: true,
        })
    } else {
        control_limit_montecarlo(model, cfg, cfg.target_arl(), reps, seed)
    }
}

/// Write chart points as CSV: `t,R,R0,alarm[,c1..cp]`.
pub fn write_chart_csv<W: std::io::Write>(
    points: &[ChartPoint],
    mut out: W,
) -> std::io::Result<()> {
    let with_contrib = points.first().is_some_and(|pt| pt.contributions.is_some());
    if with_contrib {
        let p = points[0].contributions.as_ref().unwrap().len();
        let cols: Vec<String> = (1..=p).map(|j| format!("c{j}")).collect();
        writeln!(out, "t,R,R0,alarm,{}", cols.join(","))?;
    } else {
        writeln!(out, "t,R,R0,alarm")?;
    }
    for pt in points {
        write!(out, "{},{},{},{}", pt.t, pt.r, pt.r0, u8::from(pt.alarm))?;
        if let Some(c) = &pt.contributions {
            for v in c {
                write!(out, ",{v}")?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
