//! Dichotomized Gaussian resampling of binary preference matrices.
//!
//! Each requirement is modelled as a latent standard normal `Z_i` that is
//! observed as 1 iff `Z_i > gamma_i`. Thresholds reproduce the column means
//! and the latent correlations reproduce the pairwise covariances, so new
//! preference matrices of any size can be drawn with the same first and
//! second moments.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use thiserror::Error;

use crate::identify::PreferenceMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("fitting needs at least two users, got {0}")]
    TooFewUsers(usize),
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("latent correlation matrix is not positive semidefinite (min eigenvalue {0})")]
    NotPositiveSemidefinite(f64),
    #[error("model is inconsistent: {0}")]
    Inconsistent(&'static str),
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal quantile, polished with one Newton step on the CDF.
pub fn normal_quantile(p: f64) -> f64 {
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    let density = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    x - (normal_cdf(x) - p) / density
}

/// Positive Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration
/// on the Legendre recurrence.
fn gauss_legendre_half(points: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(points / 2);
    for i in 0..points / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (points as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=points {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = points as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((2.0 / ((1.0 - x * x) * dp * dp), x));
    }
    out
}

fn quadrature(rho_abs: f64) -> &'static [(f64, f64)] {
    static RULES: OnceLock<[Vec<(f64, f64)>; 3]> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        [
            gauss_legendre_half(6),
            gauss_legendre_half(12),
            gauss_legendre_half(20),
        ]
    });
    if rho_abs < 0.3 {
        &rules[0]
    } else if rho_abs < 0.75 {
        &rules[1]
    } else {
        &rules[2]
    }
}

/// Upper orthant probability `P(Z1 > h, Z2 > k)` (Drezner-Wesolowsky with
/// Genz's refinements for high correlation).
fn upper_orthant(h: f64, k: f64, r: f64) -> f64 {
    let quad = quadrature(r.abs());
    let hk = h * k;
    if r.abs() < 0.925 {
        let mut bvn = 0.0;
        if r != 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = r.asin();
            for &(w, x) in quad {
                for sign in [-1.0, 1.0] {
                    let sn = (asr * (sign * x + 1.0) / 2.0).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / (4.0 * PI);
        }
        return bvn + normal_cdf(-h) * normal_cdf(-k);
    }

    let (k, hk) = if r < 0.0 { (-k, -hk) } else { (k, hk) };
    let mut bvn = 0.0;
    if r.abs() < 1.0 {
        let as_ = (1.0 - r) * (1.0 + r);
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        let asr = -(bs / as_ + hk) / 2.0;
        if asr > -100.0 {
            bvn = a
                * asr.exp()
                * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
        }
        if -hk < 100.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp()
                * (2.0 * PI).sqrt()
                * normal_cdf(-b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for &(w, x) in quad {
            for sign in [-1.0, 1.0] {
                let xs = (a * (sign * x + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -(bs / xs + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a
                        * w
                        * asr.exp()
                        * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / (2.0 * PI);
    }
    if r > 0.0 {
        bvn + normal_cdf(-h.max(k))
    } else {
        let mut out = -bvn;
        if k > h {
            out += normal_cdf(k) - normal_cdf(h);
        }
        out
    }
}

/// `P(Z1 <= h, Z2 <= k)` for a standard bivariate normal with correlation
/// `rho`. `|rho| >= 1` uses the degenerate limits.
pub fn bivariate_normal_cdf(h: f64, k: f64, rho: f64) -> f64 {
    if rho >= 1.0 {
        return normal_cdf(h.min(k));
    }
    if rho <= -1.0 {
        return (normal_cdf(h) - normal_cdf(-k)).max(0.0);
    }
    upper_orthant(-h, -k, rho).clamp(0.0, 1.0)
}

const LAMBDA_BRACKET: f64 = 1.0 - 1e-9;
const BISECTION_TOL: f64 = 1e-8;
const BISECTION_MAX_ITER: usize = 60;

/// Latent Gaussian model. Constant columns are reproduced verbatim and carry
/// no correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomizedGaussianModel {
    /// Observed value is 1 iff the latent normal exceeds `gamma[i]`.
    pub gamma: Vec<f64>,
    pub lambda: Vec<Vec<f64>>,
    #[serde(default)]
    pub constant_columns: BTreeMap<usize, u8>,
}

/// A pair whose sample covariance no latent correlation can reach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceResidual {
    pub i: usize,
    pub j: usize,
    pub target: f64,
    pub achieved: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub constant_columns: Vec<usize>,
    pub residuals: Vec<CovarianceResidual>,
    /// Frobenius distance between the raw and the repaired correlation matrix.
    pub repair_magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub model: DichotomizedGaussianModel,
    pub report: FitReport,
}

impl DichotomizedGaussianModel {
    pub fn n(&self) -> usize {
        self.gamma.len()
    }

    pub fn mean(&self, i: usize) -> f64 {
        match self.constant_columns.get(&i) {
            Some(&c) => c as f64,
            None => 1.0 - normal_cdf(self.gamma[i]),
        }
    }

    /// `P(X_i = 1, X_j = 1)` under the model.
    pub fn joint_probability(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.mean(i);
        }
        if self.constant_columns.contains_key(&i) || self.constant_columns.contains_key(&j) {
            return self.mean(i) * self.mean(j);
        }
        bivariate_normal_cdf(-self.gamma[i], -self.gamma[j], self.lambda[i][j])
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.joint_probability(i, j) - self.mean(i) * self.mean(j)
    }

    fn validate(&self) -> Result<(), ResampleError> {
        let n = self.n();
        if self.lambda.len() != n || self.lambda.iter().any(|r| r.len() != n) {
            return Err(ResampleError::Inconsistent("lambda must be n x n"));
        }
        if self.constant_columns.keys().any(|&i| i >= n)
            || self.constant_columns.values().any(|&v| v > 1)
        {
            return Err(ResampleError::Inconsistent("bad constant column entry"));
        }
        if self.gamma.iter().any(|g| !g.is_finite()) {
            return Err(ResampleError::Inconsistent("thresholds must be finite"));
        }
        Ok(())
    }
}

fn solve_latent_correlation(gi: f64, gj: f64, target: f64) -> (f64, f64) {
    let joint = |lambda: f64| bivariate_normal_cdf(-gi, -gj, lambda);
    let (mut lo, mut hi) = (-LAMBDA_BRACKET, LAMBDA_BRACKET);
    let (f_lo, f_hi) = (joint(lo), joint(hi));
    if target <= f_lo {
        return (lo, f_lo);
    }
    if target >= f_hi {
        return (hi, f_hi);
    }
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo < BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if joint(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    (lambda, joint(lambda))
}

/// Clips negative eigenvalues to zero and rescales to unit diagonal.
fn repair_psd(raw: &DMatrix<f64>) -> DMatrix<f64> {
    let n = raw.nrows();
    let eig = SymmetricEigen::new(raw.clone());
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return raw.clone();
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let mut m = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = m[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] *= scale[i] * scale[j];
        }
        m[(i, i)] = 1.0;
    }
    // Symmetrize away rounding noise.
    (&m + m.transpose()) * 0.5
}

/// Fits thresholds and latent correlations to a preference matrix.
///
/// Pairwise targets use the population covariance, so `mu_i mu_j + cov_ij`
/// equals the observed co-selection frequency.
pub fn fit(prefs: &PreferenceMatrix) -> Result<Fitted, ResampleError> {
    let u = prefs.users();
    if u < 2 {
        return Err(ResampleError::TooFewUsers(u));
    }
    let n = prefs.n();
    let means = prefs.means();

    let mut constant_columns = BTreeMap::new();
    for (i, &mu) in means.iter().enumerate() {
        if mu == 0.0 || mu == 1.0 {
            constant_columns.insert(i, mu as u8);
        }
    }
    let gamma: Vec<f64> = means
        .iter()
        .enumerate()
        .map(|(i, &mu)| {
            if constant_columns.contains_key(&i) {
                0.0
            } else {
                normal_quantile(1.0 - mu)
            }
        })
        .collect();

    let mut joint_counts = vec![0usize; n * n];
    for row in prefs.rows() {
        for a in (0..n).filter(|&a| row[a] == 1) {
            for b in (a + 1..n).filter(|&b| row[b] == 1) {
                joint_counts[a * n + b] += 1;
            }
        }
    }

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|(i, j)| !constant_columns.contains_key(i) && !constant_columns.contains_key(j))
        .collect();
    let solved: Vec<(usize, usize, f64, f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let target = joint_counts[i * n + j] as f64 / u as f64;
            let (lambda, achieved) = solve_latent_correlation(gamma[i], gamma[j], target);
            (i, j, lambda, target, achieved)
        })
        .collect();

    let mut raw = DMatrix::<f64>::identity(n, n);
    let mut residuals = Vec::new();
    for &(i, j, lambda, target, achieved) in &solved {
        raw[(i, j)] = lambda;
        raw[(j, i)] = lambda;
        if (target - achieved).abs() > 1e-6 {
            residuals.push(CovarianceResidual {
                i,
                j,
                target: target - means[i] * means[j],
                achieved: achieved - means[i] * means[j],
            });
        }
    }
    let repaired = repair_psd(&raw);
    let repair_magnitude = (&repaired - &raw).norm();

    let lambda = (0..n)
        .map(|i| (0..n).map(|j| repaired[(i, j)]).collect())
        .collect();
    Ok(Fitted {
        report: FitReport {
            constant_columns: constant_columns.keys().copied().collect(),
            residuals,
            repair_magnitude,
        },
        model: DichotomizedGaussianModel {
            gamma,
            lambda,
            constant_columns,
        },
    })
}

const BLOCK_ROWS: usize = 1024;

/// Draws `m` users from the model. Rows are generated in blocks with one
/// ChaCha stream per block, so the output depends only on `seed`.
pub fn sample(
    model: &DichotomizedGaussianModel,
    m: usize,
    seed: u64,
) -> Result<PreferenceMatrix, ResampleError> {
    if m == 0 {
        return Err(ResampleError::EmptySample);
    }
    model.validate()?;
    let n = model.n();
    if n == 0 {
        return Err(ResampleError::Inconsistent("model has no requirements"));
    }

    let lambda = DMatrix::from_fn(n, n, |i, j| model.lambda[i][j]);
    let eig = SymmetricEigen::new(lambda);
    let min_eig = eig.eigenvalues.min();
    if min_eig < -1e-8 {
        return Err(ResampleError::NotPositiveSemidefinite(min_eig));
    }
    let factor =
        &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));

    let blocks = m.div_ceil(BLOCK_ROWS);
    let cells: Vec<u8> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let rows = BLOCK_ROWS.min(m - b * BLOCK_ROWS);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut out = Vec::with_capacity(rows * n);
            let mut e = vec![0.0; n];
            for _ in 0..rows {
                for v in e.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                for i in 0..n {
                    let cell = match model.constant_columns.get(&i) {
                        Some(&c) => c,
                        None => {
                            let z: f64 = (0..n).map(|k| factor[(i, k)] * e[k]).sum();
                            u8::from(z > model.gamma[i])
                        }
                    };
                    out.push(cell);
                }
            }
            out
        })
        .collect();
    PreferenceMatrix::new(m, n, cells).map_err(|_| ResampleError::Inconsistent("sample shape"))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `Phi(h) Phi(k) + integral_0^rho phi2(h, k; r) dr` by composite Simpson.
    fn plackett_oracle(h: f64, k: f64, rho: f64) -> f64 {
        let density = |r: f64| {
            let s = 1.0 - r * r;
            (-(h * h - 2.0 * r * h * k + k * k) / (2.0 * s)).exp() / (2.0 * PI * s.sqrt())
        };
        let steps = 20_000;
        let dr = rho / steps as f64;
        let mut acc = density(0.0) + density(rho);
        for s in 1..steps {
            let w = if s % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * density(s as f64 * dr);
        }
        normal_cdf(h) * normal_cdf(k) + acc * dr / 3.0
    }

    #[test]
    fn bvn_closed_forms() {
        assert!((bivariate_normal_cdf(0.0, 0.0, 0.0) - 0.25).abs() < 1e-15);
        for rho in [-0.99f64, -0.9, -0.5, -0.1, 0.2, 0.6, 0.93, 0.999] {
            let expected = 0.25 + rho.asin() / (2.0 * PI);
            assert!(
                (bivariate_normal_cdf(0.0, 0.0, rho) - expected).abs() < 1e-12,
                "{rho}"
            );
        }
        assert_eq!(bivariate_normal_cdf(0.0, 0.0, 1.0), 0.5);
        assert_eq!(bivariate_normal_cdf(0.0, 0.0, -1.0), 0.0);
        let prod = normal_cdf(1.5) * normal_cdf(-0.3);
        assert!((bivariate_normal_cdf(1.5, -0.3, 0.0) - prod).abs() < 1e-15);
    }

    #[test]
    fn bvn_matches_plackett_integral() {
        let hs = [-2.5, -1.0, -0.3, 0.0, 0.7, 1.9];
        for &h in &hs {
            for &k in &hs {
                for rho in [-0.95, -0.8, -0.4, 0.1, 0.5, 0.85, 0.95] {
                    let got = bivariate_normal_cdf(h, k, rho);
                    let want = plackett_oracle(h, k, rho);
                    assert!(
                        (got - want).abs() < 1e-10,
                        "h={h} k={k} rho={rho}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn bvn_limits_and_symmetry() {
        assert!((bivariate_normal_cdf(0.4, -0.2, 1.0) - normal_cdf(-0.2)).abs() < 1e-15);
        let lim = normal_cdf(0.4) - normal_cdf(0.2);
        assert!((bivariate_normal_cdf(0.4, -0.2, -1.0) - lim).abs() < 1e-15);
        assert_eq!(bivariate_normal_cdf(-0.4, -0.2, -1.0), 0.0);
        for rho in [-0.97, -0.3, 0.4, 0.96] {
            let a = bivariate_normal_cdf(0.8, -1.1, rho);
            let b = bivariate_normal_cdf(-1.1, 0.8, rho);
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        assert_eq!(normal_quantile(0.5), 0.0);
        for p in [1e-6, 0.01, 0.3, 0.77, 0.999] {
            let err = (normal_cdf(normal_quantile(p)) - p).abs();
            assert!(err < 1e-13, "p={p} err={err}");
        }
    }

    #[test]
    fn fit_single_balanced_column() {
        let prefs = PreferenceMatrix::from_rows(&[vec![1], vec![0]]).unwrap();
        let fitted = fit(&prefs).unwrap();
        assert_eq!(fitted.model.gamma, vec![0.0]);
    }

    #[test]
    fn fit_independent_columns() {
        let prefs =
            PreferenceMatrix::from_rows(&[vec![1, 1], vec![1, 0], vec![0, 1], vec![0, 0]]).unwrap();
        let fitted = fit(&prefs).unwrap();
        assert!(fitted.model.lambda[0][1].abs() < 1e-8);
        assert!(fitted.report.residuals.is_empty());
        assert_eq!(fitted.report.repair_magnitude, 0.0);
    }

    #[test]
    fn fit_flags_constant_columns() {
        let prefs =
            PreferenceMatrix::from_rows(&[vec![1, 1, 0], vec![1, 0, 0], vec![1, 1, 0]]).unwrap();
        let fitted = fit(&prefs).unwrap();
        assert_eq!(fitted.report.constant_columns, vec![0, 2]);
        assert_eq!(fitted.model.constant_columns.get(&0), Some(&1));
        assert_eq!(fitted.model.constant_columns.get(&2), Some(&0));
        let s = sample(&fitted.model, 50, 3).unwrap();
        assert!(s.rows().all(|r| r[0] == 1 && r[2] == 0));
    }

    #[test]
    fn fit_rejects_single_user() {
        let prefs = PreferenceMatrix::from_rows(&[vec![1, 0]]).unwrap();
        assert_eq!(fit(&prefs), Err(ResampleError::TooFewUsers(1)));
    }

    #[test]
    fn unattainable_covariance_is_clamped() {
        // Perfectly anti-correlated columns with unequal means cannot be
        // reached by any latent correlation inside the bracket exactly.
        let prefs =
            PreferenceMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![0, 1], vec![0, 1]]).unwrap();
        let fitted = fit(&prefs).unwrap();
        let lambda = fitted.model.lambda[0][1];
        assert!(lambda < -0.99);
    }

    #[test]
    fn psd_repair_restores_unit_diagonal() {
        let raw = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let fixed = repair_psd(&raw);
        let eig = SymmetricEigen::new(fixed.clone());
        assert!(eig.eigenvalues.min() > -1e-12);
        for i in 0..3 {
            assert!((fixed[(i, i)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_is_deterministic_and_balanced() {
        let model = DichotomizedGaussianModel {
            gamma: vec![0.0],
            lambda: vec![vec![1.0]],
            constant_columns: BTreeMap::new(),
        };
        let a = sample(&model, 100_000, 7).unwrap();
        let b = sample(&model, 100_000, 7).unwrap();
        assert_eq!(a, b);
        assert!((a.means()[0] - 0.5).abs() < 0.01);
        assert_ne!(a, sample(&model, 100_000, 8).unwrap());
        assert_eq!(sample(&model, 0, 1), Err(ResampleError::EmptySample));
    }

    #[test]
    fn identity_lambda_gives_independent_columns() {
        let model = DichotomizedGaussianModel {
            gamma: vec![0.0, 0.5, -0.8],
            lambda: vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            constant_columns: BTreeMap::new(),
        };
        let s = sample(&model, 100_000, 11).unwrap();
        let mu = s.means();
        for i in 0..3 {
            for j in i + 1..3 {
                let both = s.rows().filter(|r| r[i] == 1 && r[j] == 1).count() as f64;
                let cov = both / s.users() as f64 - mu[i] * mu[j];
                assert!(cov.abs() < 0.01, "cov({i},{j}) = {cov}");
            }
        }
    }

    #[test]
    fn non_psd_model_is_rejected() {
        let model = DichotomizedGaussianModel {
            gamma: vec![0.0; 3],
            lambda: vec![
                vec![1.0, 0.9, -0.9],
                vec![0.9, 1.0, 0.9],
                vec![-0.9, 0.9, 1.0],
            ],
            constant_columns: BTreeMap::new(),
        };
        assert!(matches!(
            sample(&model, 10, 1),
            Err(ResampleError::NotPositiveSemidefinite(_))
        ));
    }
}
