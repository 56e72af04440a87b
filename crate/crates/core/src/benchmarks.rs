//! Conventional PCA control charts: Hotelling's T^2 on the components
//! retained by cumulative percentage of variance, plus the Q residual
//! statistic on the discarded subspace.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pca::PCModel;
use crate::rngutil::substream;

const T2Q_CALIBRATION_TAG: u64 = 0x5432_5143; // "T2QC"

/// Chart parameters: the variance fraction retained in T^2 and the overall
/// per-step false-alarm probability, split evenly between the two charts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcaChartConfig {
    /// Cumulative percentage of variance for retention, in (0, 1].
    pub cpv: f64,
    /// Overall per-step type-I error; each chart gets alpha/2.
    pub alpha: f64,
}

impl PcaChartConfig {
    pub fn new(cpv: f64, alpha: f64) -> Result<PcaChartConfig> {
        let cfg = PcaChartConfig { cpv, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cpv > 0.0 && self.cpv <= 1.0) {
            return Err(Error::invalid("cpv", format!("must be in (0, 1], got {}", self.cpv)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("must be in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

impl Default for PcaChartConfig {
    fn default() -> PcaChartConfig {
        PcaChartConfig { cpv: 0.90, alpha: 0.005 }
    }
}

/// Number of leading components to retain: the smallest k whose cumulative
/// eigenvalue share reaches `cpv`. Eigenvalues must be nonincreasing.
pub fn retained_components(eigvals: &DVector<f64>, cpv: f64) -> Result<usize> {
    if !(cpv > 0.0 && cpv <= 1.0) {
        return Err(Error::invalid("cpv", format!("must be in (0, 1], got {cpv}")));
    }
    let total: f64 = eigvals.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::invalid("eigvals", "total variance must be positive and finite"));
    }
    let mut cum = 0.0;
    for (j, lambda) in eigvals.iter().enumerate() {
        cum += lambda;
        // Tolerate roundoff at an exact boundary such as 9/(9+1) = 0.9.
        if cum >= cpv * total - 1e-12 * total {
            return Ok(j + 1);
        }
    }
    Ok(eigvals.len())
}

/// Calibrated control limits for the pair of charts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2QLimits {
    pub t2: f64,
    pub q: f64,
    /// Retained components the limits were calibrated for.
    pub k: usize,
    /// True when k = p: the residual subspace is empty, Q is identically 0,
    /// and the whole alpha budget goes to T^2.
    pub degenerate_q: bool,
}

/// T^2 and Q from standardized scores. With w_j = y_j / sqrt(lambda_j),
/// T^2 = sum_{j<k} w_j^2 and the residual norm is q = sum_{j>=k} lambda_j w_j^2.
pub(crate) fn t2q_from_standardized(model: &PCModel, w: &DVector<f64>, k: usize) -> (f64, f64) {
    let mut t2 = 0.0;
    for j in 0..k {
        t2 += w[j] * w[j];
    }
    let mut q = 0.0;
    for j in k..model.dim() {
        q += model.floored_eigval(j) * w[j] * w[j];
    }
    (t2, q)
}

/// Monte-Carlo control limits targeting exceedance alpha/2 per chart
/// (all of alpha on T^2 when the residual subspace is empty). In-control
/// standardized scores are i.i.d. standard normal, so only the model's
/// spectrum matters. Deterministic per seed.
pub fn calibrate_t2q(
    model: &PCModel,
    cfg: &PcaChartConfig,
    draws: usize,
    seed: u64,
) -> Result<T2QLimits> {
    cfg.validate()?;
    let p = model.dim();
    let k = retained_components(model.eigvals(), cfg.cpv)?;
    let degenerate_q = k == p;
    let tail = if degenerate_q { cfg.alpha } else { cfg.alpha / 2.0 };
    if (draws as f64) * tail < 10.0 {
        return Err(Error::invalid(
            "draws",
            format!("need at least {} draws to place a {tail:.2e} tail", (10.0 / tail).ceil()),
        ));
    }
    let mut rng = substream(seed, T2Q_CALIBRATION_TAG, 0);
    let mut t2s = Vec::with_capacity(draws);
    let mut qs = Vec::with_capacity(draws);
    let mut w = DVector::zeros(p);
    for _ in 0..draws {
        for wj in w.iter_mut() {
            *wj = StandardNormal.sample(&mut rng);
        }
        let (t2, q) = t2q_from_standardized(model, &w, k);
        t2s.push(t2);
        qs.push(q);
    }
    let t2_limit = upper_quantile(&mut t2s, tail);
    let q_limit = if degenerate_q { f64::INFINITY } else { upper_quantile(&mut qs, tail) };
    Ok(T2QLimits { t2: t2_limit, q: q_limit, k, degenerate_q })
}

/// Empirical upper quantile: the value exceeded by about `tail` of the
/// sample. Sorts in place.
fn upper_quantile(values: &mut [f64], tail: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("statistics are finite"));
    let n = values.len();
    let rank = ((1.0 - tail) * n as f64).ceil() as usize;
    values[rank.saturating_sub(1).min(n - 1)]
}

/// One monitoring step: project, compute both statistics, alarm if either
/// exceeds its limit. Stateless. The config must select the same number of
/// retained components the limits were calibrated for.
pub fn t2_q_step(
    model: &PCModel,
    x: &DVector<f64>,
    cfg: &PcaChartConfig,
    limits: &T2QLimits,
) -> Result<(f64, f64, bool)> {
    cfg.validate()?;
    let k = retained_components(model.eigvals(), cfg.cpv)?;
    if k != limits.k {
        return Err(Error::invalid(
            "limits",
            format!("calibrated for k = {}, config retains k = {k}", limits.k),
        ));
    }
    let scores = model.project(x)?;
    let (t2, q) = t2q_from_standardized(model, &scores.standardized, k);
    let alarm = t2 > limits.t2 || q > limits.q;
    Ok((t2, q, alarm))
}

/// One charted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2qPoint {
    pub t: u64,
    pub t2: f64,
    pub q: f64,
    pub alarm: bool,
}

/// Write chart points as CSV: `t,T2,Q,T2_0,Q_0,alarm`.
pub fn write_t2q_csv<W: std::io::Write>(
    points: &[T2qPoint],
    limits: &T2QLimits,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "t,T2,Q,T2_0,Q_0,alarm")?;
    for pt in points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            pt.t,
            pt.t2,
            pt.q,
            limits.t2,
            limits.q,
            u8::from(pt.alarm)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model_from_cov(cov: DMatrix<f64>) -> PCModel {
        let p = cov.nrows();
        PCModel::from_known_default_floor(DVector::zeros(p), &cov).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng, p: usize, df: usize) -> DMatrix<f64> {
        let g: DMatrix<f64> =
            DMatrix::from_fn(df, p, |_, _| StandardNormal.sample(rng));
        g.tr_mul(&g) / df as f64
    }

    #[test]
    fn retention_counts_cumulative_share() {
        let vals = DVector::from_vec(vec![9.0, 1.0]);
        assert_eq!(retained_components(&vals, 0.9).unwrap(), 1, "9/10 meets cpv 0.9 at k = 1");
        assert_eq!(retained_components(&vals, 0.91).unwrap(), 2);
        assert_eq!(retained_components(&vals, 1.0).unwrap(), 2);
        let flat = DVector::from_element(4, 1.0);
        assert_eq!(retained_components(&flat, 0.5).unwrap(), 2);
        assert!(retained_components(&DVector::zeros(3), 0.9).is_err(), "zero variance rejected");
    }

    #[test]
    fn statistics_vanish_at_the_mean() {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![9.0, 1.0]));
        let model = model_from_cov(cov);
        let cfg = PcaChartConfig::default();
        let limits = calibrate_t2q(&model, &cfg, 20_000, 7).unwrap();
        assert_eq!(limits.k, 1);
        assert!(!limits.degenerate_q);
        let (t2, q, alarm) = t2_q_step(&model, &DVector::zeros(2), &cfg, &limits).unwrap();
        assert_eq!(t2, 0.0);
        assert_eq!(q, 0.0);
        assert!(!alarm);
    }

    #[test]
    fn t2_is_invariant_under_orthogonal_reparameterization() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = 6;
        let cov = random_spd(&mut rng, p, 4 * p);
        // Orthogonal factor from a QR decomposition of a random matrix.
        let raw: DMatrix<f64> = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
        let qmat = raw.qr().q();
        let rotated = &qmat * &cov * qmat.transpose();

        let model_a = model_from_cov(cov);
        let model_b = model_from_cov(rotated);
        let cfg = PcaChartConfig::default();
        let k_a = retained_components(model_a.eigvals(), cfg.cpv).unwrap();
        let k_b = retained_components(model_b.eigvals(), cfg.cpv).unwrap();
        assert_eq!(k_a, k_b, "spectra agree, so retention agrees");

        for trial in 0..20 {
            let x: DVector<f64> = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
            let wa = model_a.project(&x).unwrap().standardized;
            let wb = model_b.project(&(&qmat * &x)).unwrap().standardized;
            let (t2_a, q_a) = t2q_from_standardized(&model_a, &wa, k_a);
            let (t2_b, q_b) = t2q_from_standardized(&model_b, &wb, k_b);
            assert!((t2_a - t2_b).abs() <= 1e-8 * t2_a.max(1.0), "trial {trial}: {t2_a} vs {t2_b}");
            assert!((q_a - q_b).abs() <= 1e-8 * q_a.max(1.0), "trial {trial}: {q_a} vs {q_b}");
        }
    }

    #[test]
    fn full_retention_reconstructs_mahalanobis_and_degenerates_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = 8;
        let cov = random_spd(&mut rng, p, 4 * p);
        let model = model_from_cov(cov.clone());
        let cfg = PcaChartConfig::new(1.0, 0.005).unwrap();
        let limits = calibrate_t2q(&model, &cfg, 5_000, 3).unwrap();
        assert_eq!(limits.k, p);
        assert!(limits.degenerate_q, "k = p leaves no residual subspace");
        assert_eq!(limits.q, f64::INFINITY);

        let inv = cov.clone().try_inverse().unwrap();
        for _ in 0..10 {
            let x: DVector<f64> = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
            let (t2, q, _) = t2_q_step(&model, &x, &cfg, &limits).unwrap();
            let maha = (x.transpose() * &inv * &x)[(0, 0)];
            assert!((t2 - maha).abs() <= 1e-8 * maha.max(1.0), "{t2} vs {maha}");
            assert_eq!(q, 0.0);
        }
    }

    #[test]
    fn calibration_is_deterministic_and_hits_the_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        // Spectrum with cumulative shares 0.6, 0.8, 0.9, ... so cpv 0.9
        // retains k = 3 of 5 and both charts are active.
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![6.0, 2.0, 1.0, 0.5, 0.5]));
        let p = cov.nrows();
        let model = model_from_cov(cov);
        let cfg = PcaChartConfig::new(0.9, 0.04).unwrap();
        let limits = calibrate_t2q(&model, &cfg, 40_000, 5).unwrap();
        assert_eq!(limits.k, 3);
        assert!(!limits.degenerate_q);
        let again = calibrate_t2q(&model, &cfg, 40_000, 5).unwrap();
        assert_eq!(limits, again, "same seed, same limits");

        // Fresh draws: each chart should exceed its limit about alpha/2 of
        // the time (3 sigma slack on 40k Bernoulli trials).
        let mut t2_hits = 0usize;
        let mut q_hits = 0usize;
        let n = 40_000;
        let mut w = DVector::zeros(p);
        for _ in 0..n {
            for wj in w.iter_mut() {
                *wj = StandardNormal.sample(&mut rng);
            }
            let (t2, q) = t2q_from_standardized(&model, &w, limits.k);
            t2_hits += usize::from(t2 > limits.t2);
            q_hits += usize::from(q > limits.q);
        }
        let tail = cfg.alpha / 2.0;
        let se = (tail * (1.0 - tail) / n as f64).sqrt();
        for (name, hits) in [("T2", t2_hits), ("Q", q_hits)] {
            let rate = hits as f64 / n as f64;
            assert!(
                (rate - tail).abs() <= 3.0 * se,
                "{name} exceedance {rate} vs target {tail}"
            );
        }
    }

    #[test]
    fn step_rejects_mismatched_inputs() {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![9.0, 1.0]));
        let model = model_from_cov(cov);
        let cfg = PcaChartConfig::default();
        let limits = calibrate_t2q(&model, &cfg, 20_000, 7).unwrap();
        assert!(t2_q_step(&model, &DVector::zeros(3), &cfg, &limits).is_err(), "wrong dim");
        let stale = PcaChartConfig::new(0.99, 0.005).unwrap();
        assert!(
            t2_q_step(&model, &DVector::zeros(2), &stale, &limits).is_err(),
            "limits calibrated for a different retention"
        );
        assert!(calibrate_t2q(&model, &cfg, 100, 7).is_err(), "too few draws for the tail");
    }

    #[test]
    fn chart_csv_has_fixed_columns() {
        let limits = T2QLimits { t2: 10.0, q: 2.5, k: 1, degenerate_q: false };
        let points = vec![
            T2qPoint { t: 1, t2: 0.5, q: 0.1, alarm: false },
            T2qPoint { t: 2, t2: 11.0, q: 0.2, alarm: true },
        ];
        let mut buf = Vec::new();
        write_t2q_csv(&points, &limits, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,T2,Q,T2_0,Q_0,alarm"));
        assert_eq!(lines.next(), Some("1,0.5,0.1,10,2.5,0"));
        assert_eq!(lines.next(), Some("2,11,0.2,10,2.5,1"));
    }
}
