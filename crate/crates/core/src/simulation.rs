//! Scenario generators and experiment drivers: empirical type-I-error
//! validation of the analytic control limit, run-length comparisons between
//! the adaptive chart and the conventional T^2/Q baseline, and
//! diagnosis-metric sweeps.
//!
//! Every experiment derives all randomness from (spec, seed, rep index)
//! through tagged substreams, so results are reproducible bit for bit and
//! independent of evaluation order. Within a replication, competing methods
//! replay the same observation stream (common random numbers).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::benchmarks::{self, PcaChartConfig, T2QLimits};
use crate::error::{Error, Result};
use crate::monitoring::{self, AlarmTarget, EwmaVarianceMode, MonitorConfig};
use crate::pca::PCModel;
use crate::rngutil::substream;

const COVARIANCE_TAG: u64 = 0x434f_5641; // "COVA"
const SHIFT_TAG: u64 = 0x5348_4654; // "SHFT"
const STREAM_TAG: u64 = 0x5354_524d; // "STRM"
const T2Q_SEED_TAG: u64 = 0x5143_414c; // "QCAL"
const OOC_TAG: u64 = 0x4f4f_4344; // "OOCD"
const EXP1_TAG: u64 = 0x4558_5031; // "EXP1"
const EXP2_TAG: u64 = 0x4558_5032; // "EXP2"

/// Steps per replication in the type-I-error experiments.
const TYPE1_STEPS: usize = 1000;
/// EWMA weight fixed by the pipeline type-I experiment definition.
const EXP2_GAMMA: f64 = 0.4;

/// EWMA weight and soft threshold used by the run-length experiments.
const ARL_GAMMA: f64 = 0.4;
const ARL_NU: f64 = 0.05;
/// Replications used to calibrate each control limit.
const CALIBRATION_REPS: usize = 1000;
/// Monte-Carlo draws per replication for the T^2/Q limits.
const T2Q_CALIBRATION_DRAWS: usize = 65_536;
/// First shifted step; run length counts from here.
pub const CHANGE_TIME: u64 = 50;
/// Run lengths are censored at this multiple of the target ARL.
const ARL_CAP_FACTOR: f64 = 8.0;
/// A replication that keeps alarming before the change is redrawn at most
/// this many times before being recorded as exhausted.
const MAX_PRECHANGE_ATTEMPTS: u64 = 64;

/// Out-of-control samples drawn per diagnosis replication.
pub const DIAGNOSIS_SAMPLES: usize = 25;

/// Covariance family of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    RandomWishart,
    BlockDiagonal,
    Ar1,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::RandomWishart => "random_wishart",
            ScenarioKind::BlockDiagonal => "block_diagonal",
            ScenarioKind::Ar1 => "ar1",
        }
    }
}

fn default_blocks() -> usize {
    12
}

fn default_rho() -> f64 {
    0.5
}

/// One simulation cell: covariance family, dimension, and the sparse shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub p: usize,
    /// Block count (block_diagonal only).
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    /// Lag-one correlation (ar1 only).
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Fraction of variables shifted, in (0, 1].
    pub shift_fraction: f64,
    /// Shift magnitude in units of the (unit) marginal standard deviation.
    pub delta: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid("p", "must be positive"));
        }
        if self.kind == ScenarioKind::BlockDiagonal {
            if self.blocks == 0 {
                return Err(Error::invalid("blocks", "must be positive"));
            }
            if self.p < self.blocks {
                return Err(Error::invalid(
                    "blocks",
                    format!("need p >= blocks, got p = {} < {}", self.p, self.blocks),
                ));
            }
        }
        if self.kind == ScenarioKind::Ar1 && !(self.rho.abs() < 1.0) {
            return Err(Error::invalid("rho", format!("must satisfy |rho| < 1, got {}", self.rho)));
        }
        if !(self.shift_fraction > 0.0 && self.shift_fraction <= 1.0) {
            return Err(Error::invalid(
                "shift_fraction",
                format!("must be in (0, 1], got {}", self.shift_fraction),
            ));
        }
        if !self.delta.is_finite() {
            return Err(Error::invalid("delta", "must be finite"));
        }
        Ok(())
    }

    /// Number of shifted variables: ceil(shift_fraction * p).
    pub fn shift_count(&self) -> usize {
        ((self.shift_fraction * self.p as f64).ceil() as usize).clamp(1, self.p)
    }
}

/// Block sizes for the block-diagonal family: blocks of floor(p/k) with the
/// remainder folded into the last block.
fn block_sizes(p: usize, k: usize) -> Vec<usize> {
    let base = p / k;
    let mut sizes = vec![base; k];
    sizes[k - 1] = p - (k - 1) * base;
    sizes
}

/// Wishart draw with n + 2 degrees of freedom, rescaled to unit diagonal.
/// Almost surely positive definite.
fn wishart_correlation(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let df = n + 2;
    let g: DMatrix<f64> = DMatrix::from_fn(df, n, |_, _| StandardNormal.sample(rng));
    let mut w = g.tr_mul(&g);
    let scale: Vec<f64> = (0..n).map(|j| 1.0 / w[(j, j)].sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            w[(i, j)] *= scale[i] * scale[j];
        }
    }
    w
}

pub(crate) fn gen_covariance_with(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let p = spec.p;
    match spec.kind {
        ScenarioKind::RandomWishart => wishart_correlation(rng, p),
        ScenarioKind::BlockDiagonal => {
            let mut cov = DMatrix::zeros(p, p);
            let mut start = 0;
            for size in block_sizes(p, spec.blocks) {
                let block = wishart_correlation(rng, size);
                cov.view_mut((start, start), (size, size)).copy_from(&block);
                start += size;
            }
            cov
        }
        ScenarioKind::Ar1 => DMatrix::from_fn(p, p, |i, j| {
            spec.rho.powi((i as i32 - j as i32).abs())
        }),
    }
}

/// Generate the scenario covariance: unit-diagonal Wishart, block-diagonal
/// Wishart blocks, or the AR(1) correlation rho^|i-j|. Deterministic per
/// spec.seed.
pub fn gen_covariance(spec: &ScenarioSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    Ok(gen_covariance_with(spec, &mut substream(spec.seed, COVARIANCE_TAG, 0)))
}

/// First `count` entries of a partial Fisher-Yates shuffle of 0..n.
fn sample_indices(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = i + (rng.next_u64() as usize) % (n - i);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

pub(crate) fn gen_shift_with(
    spec: &ScenarioSpec,
    rng: &mut ChaCha8Rng,
) -> (DVector<f64>, Vec<usize>) {
    let count = spec.shift_count();
    let mut indices = match spec.kind {
        ScenarioKind::BlockDiagonal => {
            // Shift lives inside one randomly chosen block; the requested
            // count is capped at the block size.
            let sizes = block_sizes(spec.p, spec.blocks);
            let choice = (rng.next_u64() as usize) % sizes.len();
            let start: usize = sizes[..choice].iter().sum();
            let within = sample_indices(rng, sizes[choice], count.min(sizes[choice]));
            within.into_iter().map(|i| start + i).collect()
        }
        _ => sample_indices(rng, spec.p, count),
    };
    indices.sort_unstable();
    let mut mu = DVector::zeros(spec.p);
    for &j in &indices {
        mu[j] = spec.delta;
    }
    (mu, indices)
}

/// Generate the sparse mean shift: ceil(shift_fraction * p) coordinates set
/// to delta, drawn uniformly (within a single random block for the
/// block-diagonal family). Deterministic per spec.seed.
pub fn gen_shift(spec: &ScenarioSpec) -> Result<DVector<f64>> {
    spec.validate()?;
    Ok(gen_shift_with(spec, &mut substream(spec.seed, SHIFT_TAG, 0)).0)
}

/// Which empirical type-I-error experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Type1Kind {
    /// d_j drawn i.i.d. chi-square(1): the independence baseline.
    IidChisq,
    /// Full pipeline on in-control streams: per-stream score moments fitted
    /// from an in-control reference sample (phase I), then an EWMA chart on
    /// fresh scores standardized by the fitted moments (phase II).
    EwmaPipeline,
}

impl Type1Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Type1Kind::IidChisq => "iid_chisq",
            Type1Kind::EwmaPipeline => "ewma_pipeline",
        }
    }
}

/// Result of one type-I-error cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Type1Report {
    pub kind: Type1Kind,
    pub p: usize,
    pub nu: f64,
    pub alpha: f64,
    /// Analytic control limit the exceedances are counted against.
    pub r0: f64,
    pub reps: usize,
    pub seed: u64,
    /// Mean exceedance fraction over replications.
    pub alpha_hat: f64,
    /// Per-replication exceedance fractions.
    pub per_rep: Vec<f64>,
    pub runtime_secs: f64,
}

impl Type1Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Type1Report> {
        Ok(serde_json::from_str(text)?)
    }
}

fn chisq_exceedance_run(p: usize, nu: f64, r0: f64, rng: &mut ChaCha8Rng) -> f64 {
    let mut hits = 0usize;
    for _ in 0..TYPE1_STEPS {
        let mut r = 0.0;
        for _ in 0..p {
            let z: f64 = StandardNormal.sample(rng);
            let d = z * z;
            if d > nu {
                r += d - nu;
            }
        }
        hits += usize::from(r > r0);
    }
    hits as f64 / TYPE1_STEPS as f64
}

/// One pipeline replication, phase-I/phase-II structure. Phase I fits each
/// stream's score mean and variance from an in-control reference sample of
/// the window length (the model-fitting step of the pipeline). Phase II runs
/// the EWMA chart on fresh scores standardized by the fitted moments, with
/// d standardized by the exact finite-t EWMA variance, so the only
/// miscalibration is the phase-I estimation error. The EWMA carries each
/// stream's fitted-moment error persistently through the whole run instead
/// of letting it average out step by step, which inflates the exceedance
/// rate relative to the i.i.d. baseline.
fn ewma_exceedance_run(p: usize, nu: f64, r0: f64, rng: &mut ChaCha8Rng) -> f64 {
    let t_len = TYPE1_STEPS;
    let gamma = EXP2_GAMMA;
    let mut mean = vec![0.0f64; p];
    let mut m2 = vec![0.0f64; p];
    for t in 0..t_len {
        for j in 0..p {
            let y: f64 = StandardNormal.sample(rng);
            let before = y - mean[j];
            mean[j] += before / (t + 1) as f64;
            m2[j] += before * (y - mean[j]);
        }
    }
    let inv_sd: Vec<f64> = m2.iter().map(|m| ((t_len - 1) as f64 / m).sqrt()).collect();
    let mut z = vec![0.0f64; p];
    let mut hits = 0usize;
    for t in 1..=t_len as u64 {
        let sigma_sq = EwmaVarianceMode::ExactTimeVarying.sigma_sq(gamma, t);
        let mut r = 0.0;
        for j in 0..p {
            let y: f64 = StandardNormal.sample(rng);
            let s = (y - mean[j]) * inv_sd[j];
            z[j] = gamma * s + (1.0 - gamma) * z[j];
            let d = z[j] * z[j] / sigma_sq;
            if d > nu {
                r += d - nu;
            }
        }
        hits += usize::from(r > r0);
    }
    hits as f64 / t_len as f64
}

/// Empirical type-I error of the analytic control limit over `reps`
/// replications of 1000 steps each.
pub fn run_type1_experiment(
    kind: Type1Kind,
    p: usize,
    nu: f64,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<Type1Report> {
    if p == 0 {
        return Err(Error::invalid("p", "must be positive"));
    }
    if reps == 0 {
        return Err(Error::invalid("reps", "must be positive"));
    }
    let started = Instant::now();
    let r0 = monitoring::control_limit_analytic(p, nu, alpha)?;
    let tag = match kind {
        Type1Kind::IidChisq => EXP1_TAG,
        Type1Kind::EwmaPipeline => EXP2_TAG,
    };
    let per_rep: Vec<f64> = (0..reps)
        .map(|i| {
            let mut rng = substream(seed, tag, i as u64);
            match kind {
                Type1Kind::IidChisq => chisq_exceedance_run(p, nu, r0, &mut rng),
                Type1Kind::EwmaPipeline => ewma_exceedance_run(p, nu, r0, &mut rng),
            }
        })
        .collect();
    let alpha_hat = per_rep.iter().sum::<f64>() / reps as f64;
    Ok(Type1Report {
        kind,
        p,
        nu,
        alpha,
        r0,
        reps,
        seed,
        alpha_hat,
        per_rep,
        runtime_secs: started.elapsed().as_secs_f64(),
    })
}

/// Monitoring method under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorMethod {
    Apc,
    PcaT2q,
}

impl MonitorMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MonitorMethod::Apc => "apc",
            MonitorMethod::PcaT2q => "pca_t2q",
        }
    }
}

/// Run-length outcomes for one method on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArlCell {
    pub method: MonitorMethod,
    /// Mean run length (change step counts as 1).
    pub arl: f64,
    pub std_error: f64,
    /// Raw per-replication run lengths.
    pub run_lengths: Vec<u64>,
    /// Replications that never alarmed within the cap.
    pub censored: usize,
    /// Streams redrawn because they alarmed before the change.
    pub discarded_prechange: usize,
    /// Replications where every redraw alarmed before the change; their run
    /// length is recorded at the cap.
    pub exhausted: usize,
    /// In-control ARL measured at calibration (shared limit methods only).
    pub in_control_arl: Option<f64>,
    /// Some replication retained every component, so its Q chart was inert.
    pub degenerate_q: bool,
}

/// Run-length comparison on one scenario cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArlReport {
    pub spec: ScenarioSpec,
    pub target_arl: f64,
    pub reps: usize,
    pub seed: u64,
    /// First shifted step.
    pub change_time: u64,
    pub cells: Vec<ArlCell>,
    pub runtime_secs: f64,
}

impl ArlReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<ArlReport> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn cell(&self, method: MonitorMethod) -> Option<&ArlCell> {
        self.cells.iter().find(|c| c.method == method)
    }
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

/// Outcome of a single monitored stream: run length counted from the change
/// step, or None for an alarm before the change (caller redraws).
enum StreamOutcome {
    RunLength(u64),
    Censored,
    PrechangeAlarm,
}

/// Drive the adaptive chart over one stream of standardized scores
/// w_t + shift (shift active from CHANGE_TIME on); first exceedance wins.
fn apc_stream_outcome(
    p: usize,
    cfg: &MonitorConfig,
    r0: f64,
    shift: &DVector<f64>,
    cap: u64,
    rng: &mut ChaCha8Rng,
) -> StreamOutcome {
    let gamma = cfg.gamma;
    let mut z = vec![0.0f64; p];
    let last_t = CHANGE_TIME - 1 + cap;
    for t in 1..=last_t {
        let sig_sq = cfg.variance_mode.sigma_sq(gamma, t);
        let shifted = t >= CHANGE_TIME;
        let mut r = 0.0;
        for (j, zj) in z.iter_mut().enumerate() {
            let mut y: f64 = StandardNormal.sample(rng);
            if shifted {
                y += shift[j];
            }
            *zj = gamma * y + (1.0 - gamma) * *zj;
            let d = *zj * *zj / sig_sq;
            if d > cfg.nu {
                r += d - cfg.nu;
            }
        }
        if r > r0 {
            return if t < CHANGE_TIME {
                StreamOutcome::PrechangeAlarm
            } else {
                StreamOutcome::RunLength(t - CHANGE_TIME + 1)
            };
        }
    }
    StreamOutcome::Censored
}

/// Same stream protocol for the stateless T^2/Q chart pair.
fn t2q_stream_outcome(
    model: &PCModel,
    limits: &T2QLimits,
    shift: &DVector<f64>,
    cap: u64,
    rng: &mut ChaCha8Rng,
) -> StreamOutcome {
    let p = model.dim();
    let mut w = DVector::zeros(p);
    let last_t = CHANGE_TIME - 1 + cap;
    for t in 1..=last_t {
        let shifted = t >= CHANGE_TIME;
        for (j, wj) in w.iter_mut().enumerate() {
            let mut y: f64 = StandardNormal.sample(rng);
            if shifted {
                y += shift[j];
            }
            *wj = y;
        }
        let (t2, q) = benchmarks::t2q_from_standardized(model, &w, limits.k);
        if t2 > limits.t2 || q > limits.q {
            return if t < CHANGE_TIME {
                StreamOutcome::PrechangeAlarm
            } else {
                StreamOutcome::RunLength(t - CHANGE_TIME + 1)
            };
        }
    }
    StreamOutcome::Censored
}

struct MethodTally {
    run_lengths: Vec<u64>,
    censored: usize,
    discarded: usize,
    exhausted: usize,
    degenerate_q: bool,
}

impl MethodTally {
    fn new(reps: usize) -> MethodTally {
        MethodTally {
            run_lengths: Vec::with_capacity(reps),
            censored: 0,
            discarded: 0,
            exhausted: 0,
            degenerate_q: false,
        }
    }

    /// Run one replication with redraws on pre-change alarms. The outcome
    /// closure sees the stream RNG for the given attempt; competing methods
    /// receive the same substreams, so attempt 0 is common across methods.
    fn record(
        &mut self,
        seed: u64,
        rep: usize,
        cap: u64,
        mut outcome: impl FnMut(&mut ChaCha8Rng) -> StreamOutcome,
    ) {
        for attempt in 0..MAX_PRECHANGE_ATTEMPTS {
            let mut rng = substream(seed, STREAM_TAG, ((rep as u64) << 6) | attempt);
            match outcome(&mut rng) {
                StreamOutcome::RunLength(rl) => {
                    self.run_lengths.push(rl);
                    return;
                }
                StreamOutcome::Censored => {
                    self.run_lengths.push(cap);
                    self.censored += 1;
                    return;
                }
                StreamOutcome::PrechangeAlarm => self.discarded += 1,
            }
        }
        self.exhausted += 1;
        self.censored += 1;
        self.run_lengths.push(cap);
    }

    fn into_cell(self, method: MonitorMethod, in_control_arl: Option<f64>) -> ArlCell {
        let (arl, std_error) = mean_and_se(self.run_lengths.iter().map(|&v| v as f64));
        ArlCell {
            method,
            arl,
            std_error,
            run_lengths: self.run_lengths,
            censored: self.censored,
            discarded_prechange: self.discarded,
            exhausted: self.exhausted,
            in_control_arl,
            degenerate_q: self.degenerate_q,
        }
    }
}

/// Compare monitoring methods on one scenario: per replication, draw the
/// covariance and shift, then feed each method the same score stream with
/// the shift active from CHANGE_TIME on. Run lengths are censored at
/// 8 x target. The adaptive chart's limit is calibrated once (its score-space
/// in-control law depends only on p); the T^2/Q pair is recalibrated per
/// replication because its law depends on the drawn spectrum.
pub fn run_arl_experiment(
    spec: &ScenarioSpec,
    methods: &[MonitorMethod],
    target_arl: f64,
    reps: usize,
    seed: u64,
) -> Result<ArlReport> {
    spec.validate()?;
    if methods.is_empty() {
        return Err(Error::invalid("methods", "need at least one method"));
    }
    let mut methods = methods.to_vec();
    methods.dedup();
    if !(target_arl > 1.0 && target_arl.is_finite()) {
        return Err(Error::invalid("target_arl", format!("must be > 1, got {target_arl}")));
    }
    if reps < 2 {
        return Err(Error::invalid("reps", "need at least 2 for a standard error"));
    }
    let started = Instant::now();
    let cap = (target_arl * ARL_CAP_FACTOR).ceil() as u64;

    let apc = if methods.contains(&MonitorMethod::Apc) {
        let cfg = MonitorConfig::new(ARL_GAMMA, ARL_NU, AlarmTarget::TargetArl(target_arl))?;
        let r0 = monitoring::calibrate_r0_scores(spec.p, &cfg, target_arl, CALIBRATION_REPS, seed)?;
        let ic = monitoring::empirical_arl_scores(spec.p, &cfg, r0, CALIBRATION_REPS, seed);
        Some((cfg, r0, ic))
    } else {
        None
    };
    let t2q_cfg = PcaChartConfig { cpv: 0.90, alpha: 1.0 / target_arl };
    let wants_t2q = methods.contains(&MonitorMethod::PcaT2q);

    let mut apc_tally = MethodTally::new(reps);
    let mut t2q_tally = MethodTally::new(reps);
    for i in 0..reps {
        let cov = gen_covariance_with(spec, &mut substream(seed, COVARIANCE_TAG, i as u64));
        let model = PCModel::from_known_default_floor(DVector::zeros(spec.p), &cov)?;
        let (mu, _) = gen_shift_with(spec, &mut substream(seed, SHIFT_TAG, i as u64));
        let shift = model.shift_magnitude_profile(&mu)?;

        if let Some((cfg, r0, _)) = &apc {
            apc_tally.record(seed, i, cap, |rng| {
                apc_stream_outcome(spec.p, cfg, *r0, &shift, cap, rng)
            });
        }
        if wants_t2q {
            let cal_seed = substream(seed, T2Q_SEED_TAG, i as u64).next_u64();
            let limits =
                benchmarks::calibrate_t2q(&model, &t2q_cfg, T2Q_CALIBRATION_DRAWS, cal_seed)?;
            t2q_tally.degenerate_q |= limits.degenerate_q;
            t2q_tally.record(seed, i, cap, |rng| {
                t2q_stream_outcome(&model, &limits, &shift, cap, rng)
            });
        }
    }

    let mut cells = Vec::new();
    for method in methods {
        match method {
            MonitorMethod::Apc => {
                let ic = apc.as_ref().map(|(_, _, ic)| *ic);
                cells.push(std::mem::replace(&mut apc_tally, MethodTally::new(0))
                    .into_cell(MonitorMethod::Apc, ic));
            }
            MonitorMethod::PcaT2q => {
                cells.push(std::mem::replace(&mut t2q_tally, MethodTally::new(0))
                    .into_cell(MonitorMethod::PcaT2q, None));
            }
        }
    }
    Ok(ArlReport {
        spec: *spec,
        target_arl,
        reps,
        seed,
        change_time: CHANGE_TIME,
        cells,
        runtime_secs: started.elapsed().as_secs_f64(),
    })
}

/// Diagnosis method under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisMethod {
    Pcsr,
    Leb,
}

impl DiagnosisMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosisMethod::Pcsr => "pcsr",
            DiagnosisMethod::Leb => "leb",
        }
    }
}

/// Selection quality of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisRepMetrics {
    /// Missed shifted variables over all shifted variables, percent.
    pub fn_pct: f64,
    /// Falsely selected variables over all unshifted variables, percent.
    pub fp_pct: f64,
    /// Total mislabeled variables.
    pub pss: f64,
    pub f1: f64,
}

/// Aggregated selection quality for one method on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisCell {
    pub method: DiagnosisMethod,
    pub fn_pct: f64,
    pub fp_pct: f64,
    pub pss: f64,
    pub f1: f64,
    pub fn_se: f64,
    pub fp_se: f64,
    pub pss_se: f64,
    pub f1_se: f64,
    pub per_rep: Vec<DiagnosisRepMetrics>,
    /// Regularization-path points that hit the iteration cap, summed over
    /// replications.
    pub unconverged_points: usize,
}

/// Diagnosis comparison on one scenario cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub spec: ScenarioSpec,
    /// Out-of-control samples per replication.
    pub m: usize,
    pub reps: usize,
    pub seed: u64,
    /// delta = 0 leaves recall undefined; F1 is reported as 0 by convention.
    pub zero_delta: bool,
    pub cells: Vec<DiagnosisCell>,
    pub runtime_secs: f64,
}

impl DiagnosisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<DiagnosisReport> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn cell(&self, method: DiagnosisMethod) -> Option<&DiagnosisCell> {
        self.cells.iter().find(|c| c.method == method)
    }
}

/// Score one selection against the true shifted set.
fn selection_metrics(p: usize, truth: &[usize], selected: &[usize]) -> DiagnosisRepMetrics {
    let truth_set: std::collections::HashSet<usize> = truth.iter().copied().collect();
    let selected_set: std::collections::HashSet<usize> = selected.iter().copied().collect();
    let tp = selected.iter().filter(|j| truth_set.contains(j)).count();
    let fp = selected.len() - tp;
    let fnn = truth.len() - tp;
    let fn_pct = if truth.is_empty() { 0.0 } else { 100.0 * fnn as f64 / truth.len() as f64 };
    let non_faulty = p - truth.len();
    let fp_pct = if non_faulty == 0 { 0.0 } else { 100.0 * fp as f64 / non_faulty as f64 };
    let pss = (fnn + fp) as f64;
    let f1 = if tp == 0 {
        0.0
    } else {
        let precision = tp as f64 / selected_set.len() as f64;
        let recall = tp as f64 / truth_set.len() as f64;
        2.0 * precision * recall / (precision + recall)
    };
    DiagnosisRepMetrics { fn_pct, fp_pct, pss, f1 }
}

/// Compare diagnosis methods on one scenario: per replication, draw the
/// covariance and shift, draw DIAGNOSIS_SAMPLES out-of-control observations,
/// run each selector on the same sample, and score the selections.
pub fn run_diagnosis_experiment(
    spec: &ScenarioSpec,
    methods: &[DiagnosisMethod],
    reps: usize,
    seed: u64,
) -> Result<DiagnosisReport> {
    run_diagnosis_experiment_with(spec, methods, reps, seed, &crate::diagnosis::PathConfig::default())
}

/// [`run_diagnosis_experiment`] with explicit solver settings.
pub fn run_diagnosis_experiment_with(
    spec: &ScenarioSpec,
    methods: &[DiagnosisMethod],
    reps: usize,
    seed: u64,
    path_cfg: &crate::diagnosis::PathConfig,
) -> Result<DiagnosisReport> {
    spec.validate()?;
    path_cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::invalid("methods", "need at least one method"));
    }
    let mut methods = methods.to_vec();
    methods.dedup();
    if reps == 0 {
        return Err(Error::invalid("reps", "must be positive"));
    }
    let started = Instant::now();
    let m = DIAGNOSIS_SAMPLES;
    let zero_delta = spec.delta == 0.0;

    let mut per_method: Vec<(DiagnosisMethod, Vec<DiagnosisRepMetrics>, usize)> =
        methods.iter().map(|&mth| (mth, Vec::with_capacity(reps), 0)).collect();
    for i in 0..reps {
        let cov = gen_covariance_with(spec, &mut substream(seed, COVARIANCE_TAG, i as u64));
        let model = PCModel::from_known_default_floor(DVector::zeros(spec.p), &cov)?;
        let (mu, drawn) = gen_shift_with(spec, &mut substream(seed, SHIFT_TAG, i as u64));
        let truth: Vec<usize> = if zero_delta { Vec::new() } else { drawn };

        // x = mu + A sqrt(lambda) w reproduces N(mu, Sigma) from the model's
        // own spectral factor.
        let mut rng = substream(seed, OOC_TAG, i as u64);
        let p = spec.p;
        let mut ooc = DMatrix::zeros(m, p);
        let mut w = DVector::zeros(p);
        for row in 0..m {
            for wj in w.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *wj = g;
            }
            let mut x = mu.clone();
            for j in 0..p {
                let col = model.eigvecs().column(j);
                let scale = model.floored_eigval(j).sqrt() * w[j];
                x.axpy(scale, &col, 1.0);
            }
            ooc.row_mut(row).copy_from(&x.transpose());
        }

        for (mth, metrics, unconverged) in per_method.iter_mut() {
            let result = match mth {
                DiagnosisMethod::Pcsr => crate::diagnosis::diagnose(&model, &ooc, path_cfg)?,
                DiagnosisMethod::Leb => crate::diagnosis::diagnose_leb(&model, &ooc, path_cfg)?,
            };
            *unconverged += result.n_unconverged;
            metrics.push(selection_metrics(p, &truth, &result.best.support));
        }
    }

    let cells = per_method
        .into_iter()
        .map(|(method, per_rep, unconverged_points)| {
            let (fn_pct, fn_se) = mean_and_se(per_rep.iter().map(|r| r.fn_pct));
            let (fp_pct, fp_se) = mean_and_se(per_rep.iter().map(|r| r.fp_pct));
            let (pss, pss_se) = mean_and_se(per_rep.iter().map(|r| r.pss));
            let (f1, f1_se) = mean_and_se(per_rep.iter().map(|r| r.f1));
            DiagnosisCell {
                method,
                fn_pct,
                fp_pct,
                pss,
                f1,
                fn_se,
                fp_se,
                pss_se,
                f1_se,
                per_rep,
                unconverged_points,
            }
        })
        .collect();
    Ok(DiagnosisReport {
        spec: *spec,
        m,
        reps,
        seed,
        zero_delta,
        cells,
        runtime_secs: started.elapsed().as_secs_f64(),
    })
}

/// Write type-I cells as CSV: `kind,p,nu,alpha,r0,reps,seed,alpha_hat`.
pub fn write_type1_csv<W: std::io::Write>(
    reports: &[Type1Report],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "kind,p,nu,alpha,r0,reps,seed,alpha_hat")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.kind.as_str(),
            r.p,
            r.nu,
            r.alpha,
            r.r0,
            r.reps,
            r.seed,
            r.alpha_hat
        )?;
    }
    Ok(())
}

/// Write run-length cells as CSV, one row per (scenario, method):
/// `kind,p,blocks,rho,shift_fraction,delta,target_arl,reps,seed,method,arl,std_error,censored,discarded_prechange,exhausted,degenerate_q`.
pub fn write_arl_csv<W: std::io::Write>(reports: &[ArlReport], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "kind,p,blocks,rho,shift_fraction,delta,target_arl,reps,seed,method,arl,std_error,censored,discarded_prechange,exhausted,degenerate_q"
    )?;
    for r in reports {
        for c in &r.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.spec.kind.as_str(),
                r.spec.p,
                r.spec.blocks,
                r.spec.rho,
                r.spec.shift_fraction,
                r.spec.delta,
                r.target_arl,
                r.reps,
                r.seed,
                c.method.as_str(),
                c.arl,
                c.std_error,
                c.censored,
                c.discarded_prechange,
                c.exhausted,
                u8::from(c.degenerate_q)
            )?;
        }
    }
    Ok(())
}

/// Write diagnosis cells as CSV, one row per (scenario, method):
/// `kind,p,blocks,rho,shift_fraction,delta,m,reps,seed,method,fn_pct,fp_pct,pss,f1,fn_se,fp_se,pss_se,f1_se`.
pub fn write_diagnosis_csv<W: std::io::Write>(
    reports: &[DiagnosisReport],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(
        out,
        "kind,p,blocks,rho,shift_fraction,delta,m,reps,seed,method,fn_pct,fp_pct,pss,f1,fn_se,fp_se,pss_se,f1_se"
    )?;
    for r in reports {
        for c in &r.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.spec.kind.as_str(),
                r.spec.p,
                r.spec.blocks,
                r.spec.rho,
                r.spec.shift_fraction,
                r.spec.delta,
                r.m,
                r.reps,
                r.seed,
                c.method.as_str(),
                c.fn_pct,
                c.fp_pct,
                c.pss,
                c.f1,
                c.fn_se,
                c.fp_se,
                c.pss_se,
                c.f1_se
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wishart_spec(p: usize, ps: f64, delta: f64, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            kind: ScenarioKind::RandomWishart,
            p,
            blocks: default_blocks(),
            rho: default_rho(),
            shift_fraction: ps,
            delta,
            seed,
        }
    }

    #[test]
    fn ar1_covariance_matches_the_formula() {
        let spec = ScenarioSpec { kind: ScenarioKind::Ar1, ..wishart_spec(3, 0.5, 1.0, 1) };
        let cov = gen_covariance(&spec).unwrap();
        let expected = [1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(cov[(i, j)], expected[i * 3 + j]);
            }
        }
    }

    #[test]
    fn block_covariance_is_zero_off_blocks_and_unit_diagonal() {
        let spec = ScenarioSpec {
            kind: ScenarioKind::BlockDiagonal,
            blocks: 3,
            ..wishart_spec(10, 0.5, 1.0, 2)
        };
        let cov = gen_covariance(&spec).unwrap();
        let sizes = block_sizes(10, 3);
        assert_eq!(sizes, vec![3, 3, 4], "remainder folds into the last block");
        let block_of = |i: usize| -> usize {
            let mut start = 0;
            for (b, s) in sizes.iter().enumerate() {
                if i < start + s {
                    return b;
                }
                start += s;
            }
            unreachable!()
        };
        for i in 0..10 {
            assert!((cov[(i, i)] - 1.0).abs() <= 1e-12, "unit diagonal");
            for j in 0..10 {
                if block_of(i) != block_of(j) {
                    assert_eq!(cov[(i, j)], 0.0, "cross-block entries are exactly zero");
                }
                assert!((cov[(i, j)] - cov[(j, i)]).abs() <= 1e-15, "symmetric");
            }
        }
    }

    #[test]
    fn wishart_covariance_is_a_correlation_matrix() {
        let spec = wishart_spec(50, 0.2, 1.0, 3);
        let cov = gen_covariance(&spec).unwrap();
        for i in 0..50 {
            assert!((cov[(i, i)] - 1.0).abs() <= 1e-10, "unit diagonal");
        }
        let min_eig = cov
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(min_eig >= -1e-10, "positive semidefinite, got min eigenvalue {min_eig}");
        let again = gen_covariance(&spec).unwrap();
        assert_eq!(cov, again, "deterministic per seed");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = wishart_spec(10, 0.2, 1.0, 1);
        spec.kind = ScenarioKind::BlockDiagonal;
        spec.blocks = 11;
        assert!(spec.validate().is_err(), "p < blocks");
        let mut spec = wishart_spec(10, 0.0, 1.0, 1);
        assert!(spec.validate().is_err(), "zero shift fraction");
        spec.shift_fraction = 1.5;
        assert!(spec.validate().is_err(), "fraction above 1");
        let mut spec = wishart_spec(10, 0.2, 1.0, 1);
        spec.kind = ScenarioKind::Ar1;
        spec.rho = 1.0;
        assert!(spec.validate().is_err(), "|rho| must be < 1");
    }

    #[test]
    fn shift_has_the_requested_sparsity() {
        let spec = wishart_spec(100, 0.2, 1.5, 7);
        let mu = gen_shift(&spec).unwrap();
        let nonzero: Vec<usize> = (0..100).filter(|&j| mu[j] != 0.0).collect();
        assert_eq!(nonzero.len(), 20, "ceil(0.2 * 100) indices");
        assert!(nonzero.iter().all(|&j| mu[j] == 1.5));
        assert_eq!(gen_shift(&spec).unwrap(), mu, "deterministic per seed");

        let zero = ScenarioSpec { delta: 0.0, ..spec };
        assert_eq!(gen_shift(&zero).unwrap(), DVector::zeros(100));

        // ceil rounds up for fractional counts.
        let odd = wishart_spec(7, 0.3, 1.0, 9);
        let mu = gen_shift(&odd).unwrap();
        assert_eq!((0..7).filter(|&j| mu[j] != 0.0).count(), 3, "ceil(2.1)");
    }

    #[test]
    fn block_shift_stays_inside_one_block() {
        let spec = ScenarioSpec {
            kind: ScenarioKind::BlockDiagonal,
            blocks: 4,
            ..wishart_spec(20, 0.2, 2.0, 11)
        };
        for extra in 0..10u64 {
            let spec = ScenarioSpec { seed: spec.seed + extra, ..spec };
            let mu = gen_shift(&spec).unwrap();
            let nonzero: Vec<usize> = (0..20).filter(|&j| mu[j] != 0.0).collect();
            assert_eq!(nonzero.len(), 4);
            let block = nonzero[0] / 5;
            assert!(
                nonzero.iter().all(|&j| j / 5 == block),
                "indices {nonzero:?} cross blocks"
            );
        }
    }

    #[test]
    fn iid_type1_is_deterministic_and_near_nominal() {
        let report = run_type1_experiment(Type1Kind::IidChisq, 200, 0.05, 0.005, 40, 13).unwrap();
        assert_eq!(report.per_rep.len(), 40);
        // Finite-p bias keeps alpha_hat above nominal but well below 4x.
        assert!(
            report.alpha_hat > 0.001 && report.alpha_hat < 0.02,
            "alpha_hat = {}",
            report.alpha_hat
        );
        let again = run_type1_experiment(Type1Kind::IidChisq, 200, 0.05, 0.005, 40, 13).unwrap();
        assert_eq!(report.per_rep, again.per_rep, "bit-identical reruns");
        assert_eq!(report.alpha_hat, again.alpha_hat);
    }

    #[test]
    fn pipeline_type1_runs_and_reproduces() {
        let report =
            run_type1_experiment(Type1Kind::EwmaPipeline, 100, 0.05, 0.005, 20, 17).unwrap();
        assert!(report.alpha_hat >= 0.0 && report.alpha_hat < 0.05, "alpha_hat = {}", report.alpha_hat);
        let again =
            run_type1_experiment(Type1Kind::EwmaPipeline, 100, 0.05, 0.005, 20, 17).unwrap();
        assert_eq!(report.per_rep, again.per_rep);
    }

    #[test]
    fn arl_experiment_reports_both_methods_and_reproduces() {
        let spec = wishart_spec(8, 0.25, 2.0, 19);
        let methods = [MonitorMethod::Apc, MonitorMethod::PcaT2q];
        let report = run_arl_experiment(&spec, &methods, 50.0, 15, 23).unwrap();
        assert_eq!(report.cells.len(), 2);
        let cap = (50.0 * ARL_CAP_FACTOR).ceil() as u64;
        for cell in &report.cells {
            assert_eq!(cell.run_lengths.len(), 15);
            assert!(cell.run_lengths.iter().all(|&rl| (1..=cap).contains(&rl)));
            assert!(cell.arl >= 1.0);
            assert!(cell.censored <= 15);
        }
        let apc = report.cell(MonitorMethod::Apc).unwrap();
        let ic = apc.in_control_arl.unwrap();
        assert!((ic - 50.0).abs() <= 15.0, "calibrated in-control ARL {ic} near target 50");
        // A 2-sigma shift on a quarter of the variables is caught quickly.
        assert!(apc.arl <= 5.0, "APC ARL {} at delta = 2", apc.arl);

        let again = run_arl_experiment(&spec, &methods, 50.0, 15, 23).unwrap();
        assert_eq!(report.cells, again.cells, "bit-identical reruns");
    }

    #[test]
    fn zero_shift_run_length_matches_the_in_control_target() {
        let spec = wishart_spec(8, 0.25, 0.0, 29);
        let report = run_arl_experiment(&spec, &[MonitorMethod::Apc], 30.0, 40, 31).unwrap();
        let cell = report.cell(MonitorMethod::Apc).unwrap();
        // Run-length s.e. of an ARL-30 chart over 40 reps is about 5.
        assert!(
            (cell.arl - 30.0).abs() <= 15.0,
            "no-shift ARL {} should sit near the target 30",
            cell.arl
        );
    }

    #[test]
    fn arl_decreases_in_delta() {
        let small = wishart_spec(8, 0.25, 0.3, 37);
        let large = ScenarioSpec { delta: 3.0, ..small };
        let a = run_arl_experiment(&small, &[MonitorMethod::Apc], 50.0, 30, 41).unwrap();
        let b = run_arl_experiment(&large, &[MonitorMethod::Apc], 50.0, 30, 41).unwrap();
        let (a, b) = (a.cell(MonitorMethod::Apc).unwrap(), b.cell(MonitorMethod::Apc).unwrap());
        assert!(
            b.arl <= a.arl + 2.0 * (a.std_error + b.std_error),
            "ARL at delta 3 ({}) should not exceed ARL at delta 0.3 ({})",
            b.arl,
            a.arl
        );
    }

    #[test]
    fn diagnosis_experiment_scores_and_reproduces() {
        let spec = wishart_spec(15, 0.2, 2.0, 43);
        let methods = [DiagnosisMethod::Pcsr, DiagnosisMethod::Leb];
        let report = run_diagnosis_experiment(&spec, &methods, 10, 47).unwrap();
        assert_eq!(report.m, DIAGNOSIS_SAMPLES);
        assert!(!report.zero_delta);
        for cell in &report.cells {
            assert_eq!(cell.per_rep.len(), 10);
            assert!(cell.f1 >= 0.0 && cell.f1 <= 1.0);
            assert!(cell.fn_pct >= 0.0 && cell.fn_pct <= 100.0);
            assert!(cell.fp_pct >= 0.0 && cell.fp_pct <= 100.0);
        }
        let pcsr = report.cell(DiagnosisMethod::Pcsr).unwrap();
        assert!(pcsr.f1 >= 0.6, "2-sigma shifts are easy: F1 = {}", pcsr.f1);
        let again = run_diagnosis_experiment(&spec, &methods, 10, 47).unwrap();
        assert_eq!(report.cells, again.cells, "bit-identical reruns");
    }

    #[test]
    fn zero_delta_diagnosis_is_flagged_with_zero_f1() {
        let spec = wishart_spec(12, 0.25, 0.0, 53);
        let report = run_diagnosis_experiment(&spec, &[DiagnosisMethod::Pcsr], 5, 59).unwrap();
        assert!(report.zero_delta);
        let cell = report.cell(DiagnosisMethod::Pcsr).unwrap();
        assert_eq!(cell.f1, 0.0, "F1 convention at delta = 0");
        assert_eq!(cell.fn_pct, 0.0, "no shifted variables to miss");
    }

    #[test]
    fn f1_increases_in_delta() {
        let weak = wishart_spec(15, 0.2, 0.3, 61);
        let strong = ScenarioSpec { delta: 3.0, ..weak };
        let a = run_diagnosis_experiment(&weak, &[DiagnosisMethod::Pcsr], 12, 67).unwrap();
        let b = run_diagnosis_experiment(&strong, &[DiagnosisMethod::Pcsr], 12, 67).unwrap();
        let (a, b) =
            (a.cell(DiagnosisMethod::Pcsr).unwrap(), b.cell(DiagnosisMethod::Pcsr).unwrap());
        assert!(
            b.f1 >= a.f1 - 2.0 * (a.f1_se + b.f1_se),
            "F1 at delta 3 ({}) should not fall below F1 at delta 0.3 ({})",
            b.f1,
            a.f1
        );
    }

    #[test]
    fn selection_metrics_accounting() {
        let m = selection_metrics(10, &[1, 2, 3], &[2, 3, 7]);
        assert!((m.fn_pct - 100.0 / 3.0).abs() <= 1e-12, "one of three missed");
        assert!((m.fp_pct - 100.0 / 7.0).abs() <= 1e-12, "one of seven clean picked");
        assert_eq!(m.pss, 2.0);
        let f1 = 2.0 * (2.0 / 3.0) * (2.0 / 3.0) / (4.0 / 3.0);
        assert!((m.f1 - f1).abs() <= 1e-12);

        let perfect = selection_metrics(10, &[1, 2], &[1, 2]);
        assert_eq!((perfect.fn_pct, perfect.fp_pct, perfect.pss, perfect.f1), (0.0, 0.0, 0.0, 1.0));

        let empty = selection_metrics(10, &[1, 2], &[]);
        assert_eq!(empty.f1, 0.0, "no selections means zero F1");
        assert_eq!(empty.fn_pct, 100.0);
    }

    #[test]
    fn csv_writers_emit_fixed_headers() {
        let t1 = run_type1_experiment(Type1Kind::IidChisq, 20, 0.05, 0.005, 3, 71).unwrap();
        let mut buf = Vec::new();
        write_type1_csv(&[t1], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("kind,p,nu,alpha,r0,reps,seed,alpha_hat\niid_chisq,20,"));
        assert_eq!(text.lines().count(), 2);

        let spec = wishart_spec(8, 0.25, 1.0, 73);
        let arl = run_arl_experiment(&spec, &[MonitorMethod::Apc], 20.0, 5, 79).unwrap();
        let mut buf = Vec::new();
        write_arl_csv(&[arl.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "kind,p,blocks,rho,shift_fraction,delta,target_arl,reps,seed,method,arl,std_error,censored,discarded_prechange,exhausted,degenerate_q\n"
        ));
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains(",apc,"));

        let diag = run_diagnosis_experiment(&spec, &[DiagnosisMethod::Leb], 3, 83).unwrap();
        let mut buf = Vec::new();
        write_diagnosis_csv(&[diag.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(",leb,"));

        // Reports round-trip through JSON.
        assert_eq!(ArlReport::from_json(&arl.to_json()).unwrap(), arl);
        assert_eq!(DiagnosisReport::from_json(&diag.to_json()).unwrap(), diag);
    }
}
