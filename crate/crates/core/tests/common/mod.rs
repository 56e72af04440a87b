//! Test-side oracles, independent of the library implementation.
//!
//! Everything here is deliberately written from the defining integrals /
//! exhaustive enumerations rather than the closed forms used by the library,
//! so the two routes can be compared in tests.

#![allow(dead_code)]

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 60)
}

/// Density of the chi-square distribution with one degree of freedom.
pub fn chi1_pdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (-x / 2.0).exp() / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// k-th moment of the soft-thresholded chi-square(1) variable (X - nu)+,
/// computed directly from the defining integral `int_nu^inf (x-nu)^k f(x) dx`.
///
/// For nu = 0 the integrand has an integrable x^(-1/2) singularity at the
/// origin; substitute x = u^2 to remove it.
pub fn thresholded_chi1_moment_quadrature(nu: f64, k: u32) -> f64 {
    assert!(nu >= 0.0 && (k == 1 || k == 2));
    let tol = 1e-13;
    if nu == 0.0 {
        let g = move |u: f64| {
            2.0 * u.powi(2 * k as i32) * (-u * u / 2.0).exp()
                / (2.0 * std::f64::consts::PI).sqrt()
        };
        adaptive_simpson(&g, 0.0, 14.0, tol)
    } else {
        let f = move |x: f64| (x - nu).powi(k as i32) * chi1_pdf(x);
        adaptive_simpson(&f, nu, nu + 90.0, tol)
    }
}

/// Survival function P(chi1^2 > nu) from the defining integral.
pub fn chi1_sf_quadrature(nu: f64) -> f64 {
    if nu <= 0.0 {
        return 1.0;
    }
    // Integrate the complement over [0, nu] (x = u^2 removes the singularity).
    let g = |u: f64| 2.0 * (-u * u / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    1.0 - adaptive_simpson(&g, 0.0, nu.sqrt(), 1e-13)
}

/// Standard normal CDF via quadrature of the density.
pub fn normal_cdf_quadrature(z: f64) -> f64 {
    let pdf = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if z >= 0.0 {
        0.5 + adaptive_simpson(&pdf, 0.0, z, 1e-14)
    } else {
        0.5 - adaptive_simpson(&pdf, z, 0.0, 1e-14)
    }
}

/// Standard normal quantile by bisection on the quadrature CDF.
pub fn normal_quantile_quadrature(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf_quadrature(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

use nalgebra::{DMatrix, DVector};

/// Least-squares RSS of y against the selected columns of a.
pub fn ols_rss(y: &DVector<f64>, a: &DMatrix<f64>, support: &[usize]) -> f64 {
    if support.is_empty() {
        return y.norm_squared();
    }
    let cols = DMatrix::from_columns(
        &support.iter().map(|&j| a.column(j).into_owned()).collect::<Vec<_>>(),
    );
    let gram = cols.transpose() * &cols;
    let rhs = cols.transpose() * y;
    let beta = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| gram.lu().solve(&rhs).expect("singular subset"));
    (y - cols * beta).norm_squared()
}

/// Exhaustive best-subset BIC oracle: enumerate all 2^p supports, fit each by
/// unpenalized least squares on the selected columns, score with
/// BIC = max(RSS, rss_floor) + penalty_factor * |S| * ln(p) (unit-variance
/// Gaussian noise), return the argmin support (ties broken toward the
/// smaller, then lexicographically earlier, support; enumeration order
/// guarantees that).
pub fn best_subset_bic_oracle(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    rss_floor: f64,
    penalty_factor: f64,
) -> Vec<usize> {
    let p = a.ncols();
    assert!(p <= 20, "enumeration oracle is exponential in p");
    let mut best: (f64, Vec<usize>) = (f64::INFINITY, vec![]);
    // Order masks by popcount so ties prefer smaller supports.
    let mut masks: Vec<u32> = (0..(1u32 << p)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    for mask in masks {
        let support: Vec<usize> = (0..p).filter(|j| mask >> j & 1 == 1).collect();
        let rss = ols_rss(y, a, &support);
        let bic = rss.max(rss_floor) + penalty_factor * support.len() as f64 * (p as f64).ln();
        if bic < best.0 - 1e-12 {
            best = (bic, support);
        }
    }
    best.1
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Correlation-like random covariance: Wishart rescaled to unit diagonal.
pub fn wishart_unit_diag(rng: &mut impl Rng, p: usize, df: usize) -> DMatrix<f64> {
    let g: DMatrix<f64> = DMatrix::from_fn(df, p, |_, _| StandardNormal.sample(rng));
    let w = g.transpose() * &g;
    let d: Vec<f64> = (0..p).map(|i| w[(i, i)].sqrt()).collect();
    DMatrix::from_fn(p, p, |i, j| w[(i, j)] / (d[i] * d[j]))
}

pub struct OracleInstance {
    pub model: streamspc::PCModel,
    pub ooc: DMatrix<f64>,
    pub truth: Vec<usize>,
}

/// Seeded small diagnosis instance: unit-diagonal Wishart covariance,
/// k_true coordinates shifted by +-delta at random positions, m noisy
/// out-of-control samples.
pub fn oracle_instance(seed: u64, df: usize, k_true: usize, delta: f64, m: usize) -> OracleInstance {
    let p = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cov = wishart_unit_diag(&mut rng, p, df);
    let model = streamspc::PCModel::from_known_default_floor(DVector::zeros(p), &cov).unwrap();
    let mut idx: Vec<usize> = (0..p).collect();
    // Fisher-Yates using the instance stream
    for i in (1..p).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        idx.swap(i, j);
    }
    let mut truth: Vec<usize> = idx[..k_true].to_vec();
    truth.sort_unstable();
    let mut shift = DVector::zeros(p);
    for (rank, &j) in truth.iter().enumerate() {
        shift[j] = if rank % 2 == 0 { delta } else { -delta };
    }
    let chol = nalgebra::Cholesky::new(cov).unwrap();
    let l = chol.l();
    let mut ooc = DMatrix::zeros(m, p);
    for i in 0..m {
        let z: DVector<f64> = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        let x = &shift + &l * z;
        ooc.row_mut(i).copy_from(&x.transpose());
    }
    OracleInstance { model, ooc, truth }
}

/// Synthetic image-stream case: a 198-step sequence of square images whose
/// in-control structure is a smooth spatial field, with a contiguous pixel
/// block shifted from a fixed change row onward.
pub const CASE_GRID: usize = 20;
pub const CASE_ROWS: usize = 198;
/// First shifted row, 1-based to match chart time.
pub const CASE_CHANGE_ROW: usize = 127;
pub const CASE_SHIFT: f64 = 3.5;

pub struct CaseWorld {
    pub model: streamspc::PCModel,
    /// Cholesky factor of the pixel covariance, for drawing rows.
    pub chol_l: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// Per-pixel shift added from CASE_CHANGE_ROW on.
    pub shift: DVector<f64>,
    /// Sorted indices of truly shifted pixels.
    pub truth: Vec<usize>,
}

/// Fixed (seed-independent) world: unit-diagonal covariance
/// 0.25 I + 0.75 RBF(l = 3px) over the pixel grid, a smooth background
/// mean, and a 5x5 shifted block.
pub fn case_world() -> CaseWorld {
    let g = CASE_GRID;
    let p = g * g;
    let coord = |idx: usize| ((idx / g) as f64, (idx % g) as f64);
    let cov = DMatrix::from_fn(p, p, |i, j| {
        let (xi, yi) = coord(i);
        let (xj, yj) = coord(j);
        let d2 = (xi - xj).powi(2) + (yi - yj).powi(2);
        let rbf = (-d2 / 18.0).exp();
        if i == j { 1.0 } else { 0.75 * rbf }
    });
    let mean = DVector::from_fn(p, |idx, _| {
        let (x, y) = coord(idx);
        let s = (g - 1) as f64;
        10.0 + 2.0 * (std::f64::consts::PI * x / s).cos() * (std::f64::consts::PI * y / s).cos()
    });
    let model = streamspc::PCModel::from_known_default_floor(mean.clone(), &cov).unwrap();
    let chol_l = nalgebra::Cholesky::new(cov).unwrap().l().clone_owned();
    let mut truth = Vec::new();
    for r in 8..13 {
        for c in 8..13 {
            truth.push(r * g + c);
        }
    }
    let mut shift = DVector::zeros(p);
    for &px in &truth {
        shift[px] = CASE_SHIFT;
    }
    CaseWorld { model, chol_l, mean, shift, truth }
}

/// One seeded 198 x p case-study sequence; rows CASE_CHANGE_ROW.. carry the
/// shift.
pub fn case_rows(world: &CaseWorld, seed: u64) -> DMatrix<f64> {
    let p = world.mean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = DMatrix::zeros(CASE_ROWS, p);
    for t in 1..=CASE_ROWS {
        let z: DVector<f64> = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        let mut x = &world.mean + &world.chol_l * z;
        if t >= CASE_CHANGE_ROW {
            x += &world.shift;
        }
        rows.row_mut(t - 1).copy_from(&x.transpose());
    }
    rows
}
