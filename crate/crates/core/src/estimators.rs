//! OLS, 2SLS and fixed-`k` CSA2SLS.
//!
//! CSA2SLS replaces the 2SLS projector with `P^k`, the equal-weight average
//! of the projectors onto each subset's instruments. Everything the
//! estimator and the selection criterion need is collected once per `k` in
//! [`ProjectionStats`], by one of two routes:
//!
//! * [`ProjectionMode::Dense`] materializes `P^k` as an `N x N` matrix.
//! * [`ProjectionMode::Streaming`] never forms anything `N x N`. It takes an
//!   orthonormal basis `Q_W` of the full instrument span once, so every
//!   subset basis is `Q_W` times a small `q x p` orthonormal matrix and all
//!   averages live in `q x q` coordinates (`q = K + d2 + const`).
//!
//! The two routes agree to rounding; the test suites hold them to 1e-8.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::amse::AmseTable;
use crate::dataframe::ModelFrame;
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, spd_solve_vec, symmetrize, thin_qr, DEFAULT_RANK_TOL};
use crate::subsets::{build_subset_plan, SubsetPlan};

/// Two-sided 95% standard normal critical value.
pub const Z_CRIT_95: f64 = 1.959964;

/// Above this many observations the automatic mode avoids `N x N` storage.
pub const STREAMING_MIN_OBS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Ols,
    Tsls,
    Csa2sls,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Ols => "ols",
            EstimatorKind::Tsls => "tsls",
            EstimatorKind::Csa2sls => "csa2sls",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMode {
    Dense,
    Streaming,
}

impl ProjectionMode {
    /// Streaming for large samples or when explicitly requested.
    pub fn auto(n: usize, large: bool) -> Self {
        if large || n > STREAMING_MIN_OBS {
            ProjectionMode::Streaming
        } else {
            ProjectionMode::Dense
        }
    }
}

/// Averaged first-stage quantities for one subset size.
#[derive(Debug, Clone)]
pub struct ProjectionStats {
    pub k: usize,
    /// `P^k X`, the averaged first-stage prediction.
    pub xhat: DMatrix<f64>,
    /// `X' P^k X`
    pub xtpx: DMatrix<f64>,
    /// `Xhat' Xhat = X' (P^k)^2 X`
    pub xhat_t_xhat: DMatrix<f64>,
    /// `X' P^k y`
    pub xtpy: DVector<f64>,
    /// `tr((P^k)^2)`
    pub tr_p2: f64,
    pub m_used: usize,
    pub m_skipped: usize,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub estimator: EstimatorKind,
    /// Coefficient labels ordered endogenous, exogenous, `_cons`.
    pub names: Vec<String>,
    pub b: DVector<f64>,
    pub v: DMatrix<f64>,
    pub se: DVector<f64>,
    pub z: DVector<f64>,
    pub p: DVector<f64>,
    pub ci_low: DVector<f64>,
    pub ci_high: DVector<f64>,
    pub rmse: f64,
    pub n: usize,
    /// Number of excluded instruments (0 for OLS).
    pub k: usize,
    pub k_opt: Option<usize>,
    pub amse_table: Option<AmseTable>,
    pub m_skipped_total: usize,
}

/// Covariance and the statistics derived from it.
#[derive(Debug, Clone)]
pub struct Inference {
    pub v: DMatrix<f64>,
    pub se: DVector<f64>,
    pub z: DVector<f64>,
    pub p: DVector<f64>,
    pub ci_low: DVector<f64>,
    pub ci_high: DVector<f64>,
    pub rmse: f64,
}

impl Inference {
    fn from_covariance(b: &DVector<f64>, mut v: DMatrix<f64>, rmse: f64) -> Self {
        symmetrize(&mut v);
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let se = v.diagonal().map(|x| x.max(0.0).sqrt());
        let z = b.zip_map(&se, |b, s| b / s);
        let p = z.map(|z| 2.0 * normal.sf(z.abs()));
        let ci_low = b.zip_map(&se, |b, s| b - Z_CRIT_95 * s);
        let ci_high = b.zip_map(&se, |b, s| b + Z_CRIT_95 * s);
        Inference {
            v,
            se,
            z,
            p,
            ci_low,
            ci_high,
            rmse,
        }
    }
}

impl EstimationResult {
    fn assemble(
        estimator: EstimatorKind,
        names: Vec<String>,
        b: DVector<f64>,
        inf: Inference,
        n: usize,
        k: usize,
    ) -> Self {
        EstimationResult {
            estimator,
            names,
            b,
            v: inf.v,
            se: inf.se,
            z: inf.z,
            p: inf.p,
            ci_low: inf.ci_low,
            ci_high: inf.ci_high,
            rmse: inf.rmse,
            n,
            k,
            k_opt: None,
            amse_table: None,
            m_skipped_total: 0,
        }
    }
}

fn residual_variance(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let resid = y - x * b;
    resid.norm_squared() / y.len() as f64
}

/// The sample must cover the regressors and the full instrument set.
pub(crate) fn check_estimable(frame: &ModelFrame) -> Result<()> {
    let (n, d1, k) = (frame.n(), frame.d1(), frame.num_instruments());
    if k < d1 {
        return Err(Error::OrderCondition {
            instruments: k + frame.num_included(),
            regressors: frame.d(),
        });
    }
    let needed = frame.d().max(k + frame.num_included());
    if n < needed {
        return Err(Error::Dimension(format!(
            "{n} observations for {needed} instrument/regressor columns"
        )));
    }
    Ok(())
}

/// Least squares with `V = s^2 (X'X)^-1`, `s^2 = e'e / N`.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<EstimationResult> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension("X and y row counts differ".into()));
    }
    let qr = thin_qr(x, DEFAULT_RANK_TOL)?;
    if let Some(column) = qr.first_dependent_column() {
        return Err(Error::RankDeficient { column });
    }
    let rhs = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let b = qr.solve(&rhs)?.column(0).into_owned();
    let s2 = residual_variance(x, y, &b);
    let v = spd_inverse(&x.tr_mul(x))? * s2;
    let names = (1..=x.ncols()).map(|i| format!("x{i}")).collect();
    let inf = Inference::from_covariance(&b, v, s2.sqrt());
    Ok(EstimationResult::assemble(
        EstimatorKind::Ols,
        names,
        b,
        inf,
        y.len(),
        0,
    ))
}

/// OLS on a frame, labelled with its coefficient names.
pub fn ols_frame(frame: &ModelFrame) -> Result<EstimationResult> {
    let mut res = ols(&frame.x, &frame.y)?;
    res.names = frame.coef_names();
    Ok(res)
}

/// Two-stage least squares on all `K` excluded instruments.
pub fn tsls(frame: &ModelFrame) -> Result<EstimationResult> {
    check_estimable(frame)?;
    let w = frame.full_instruments();
    let qr = thin_qr(&w, DEFAULT_RANK_TOL)?;
    if let Some(column) = qr.first_dependent_column() {
        return Err(Error::RankDeficient { column });
    }
    let c = qr.q.tr_mul(&frame.x);
    let cy = qr.q.tr_mul(&frame.y);
    let g = c.tr_mul(&c);
    let b = spd_solve_vec(&g, &c.tr_mul(&cy))?;
    let s2 = residual_variance(&frame.x, &frame.y, &b);
    let v = spd_inverse(&g)? * s2;
    let inf = Inference::from_covariance(&b, v, s2.sqrt());
    Ok(EstimationResult::assemble(
        EstimatorKind::Tsls,
        frame.coef_names(),
        b,
        inf,
        frame.n(),
        frame.num_instruments(),
    ))
}

/// OLS first stage of `x` on one instrument block. `ok` is false, and the
/// coefficients zero, when the block is numerically rank deficient.
pub fn first_stage_fit(z_m: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let p = z_m.ncols();
    if z_m.nrows() < p {
        return Ok((DMatrix::zeros(p, x.ncols()), false));
    }
    let qr = thin_qr(z_m, DEFAULT_RANK_TOL)?;
    if !qr.is_full_rank() {
        return Ok((DMatrix::zeros(p, x.ncols()), false));
    }
    Ok((qr.solve(x)?, true))
}

pub fn accumulate_projection_stats(
    frame: &ModelFrame,
    plan: &SubsetPlan,
    mode: ProjectionMode,
) -> Result<ProjectionStats> {
    if plan.total != frame.num_instruments() {
        return Err(Error::Dimension(format!(
            "plan over {} instruments, frame has {}",
            plan.total,
            frame.num_instruments()
        )));
    }
    match mode {
        ProjectionMode::Dense => dense_stats(frame, plan),
        ProjectionMode::Streaming => streaming_stats(frame, plan),
    }
}

fn no_models(plan: &SubsetPlan) -> Error {
    Error::EstimationImpossible(format!(
        "all {} instrument subsets of size {} are rank deficient",
        plan.len(),
        plan.k
    ))
}

fn dense_stats(frame: &ModelFrame, plan: &SubsetPlan) -> Result<ProjectionStats> {
    let n = frame.n();
    let mut bases = Vec::with_capacity(plan.len());
    let mut skipped = 0;
    for subset in &plan.subsets {
        let z = frame.instrument_block(subset);
        if z.ncols() > n {
            skipped += 1;
            continue;
        }
        let qr = thin_qr(&z, DEFAULT_RANK_TOL)?;
        if qr.is_full_rank() {
            bases.push(qr.q);
        } else {
            skipped += 1;
        }
    }
    if bases.is_empty() {
        return Err(no_models(plan));
    }
    let used = bases.len();
    let width: usize = bases.iter().map(|q| q.ncols()).sum();
    let mut stacked = DMatrix::zeros(n, width);
    let mut at = 0;
    for q in &bases {
        stacked.columns_mut(at, q.ncols()).copy_from(q);
        at += q.ncols();
    }
    // sum_m Q_m Q_m' in one product
    let mut p = &stacked * stacked.transpose();
    p /= used as f64;

    let xhat = &p * &frame.x;
    let mut xtpx = frame.x.tr_mul(&xhat);
    symmetrize(&mut xtpx);
    let xhat_t_xhat = xhat.tr_mul(&xhat);
    let xtpy = xhat.tr_mul(&frame.y);
    Ok(ProjectionStats {
        k: plan.k,
        tr_p2: p.norm_squared(),
        xhat,
        xtpx,
        xhat_t_xhat,
        xtpy,
        m_used: used,
        m_skipped: skipped,
    })
}

fn streaming_stats(frame: &ModelFrame, plan: &SubsetPlan) -> Result<ProjectionStats> {
    let k_all = frame.num_instruments();
    let w = frame.full_instruments();
    if w.nrows() < w.ncols() {
        return Err(Error::Dimension(format!(
            "{} observations for {} instrument columns",
            w.nrows(),
            w.ncols()
        )));
    }
    let base = thin_qr(&w, DEFAULT_RANK_TOL)?;
    let qw = base.basis();
    let rw = qw.ncols();
    if rw == 0 {
        return Err(no_models(plan));
    }
    // Z_m = Q_W * coords[:, cols(m)] for every subset m
    let coords = qw.tr_mul(&w);
    let cx = qw.tr_mul(&frame.x);
    let cy = qw.tr_mul(&frame.y);
    let d = frame.d();

    let mut p_red = DMatrix::zeros(rw, rw);
    let mut xtpx = DMatrix::zeros(d, d);
    let mut used = 0;
    let mut skipped = 0;
    let mut cols = Vec::with_capacity(w.ncols());
    for subset in &plan.subsets {
        cols.clear();
        cols.extend_from_slice(subset);
        cols.extend(k_all..w.ncols());
        if cols.len() > rw {
            skipped += 1;
            continue;
        }
        let t = coords.select_columns(&cols);
        let qr = thin_qr(&t, DEFAULT_RANK_TOL)?;
        if !qr.is_full_rank() {
            skipped += 1;
            continue;
        }
        // (Z_m'X)'(Z_m'Z_m)^{-1}(Z_m'X) = (Q_m'X)'(Q_m'X)
        let proj = qr.q.tr_mul(&cx);
        xtpx.gemm_tr(1.0, &proj, &proj, 1.0);
        p_red.gemm(1.0, &qr.q, &qr.q.transpose(), 1.0);
        used += 1;
    }
    if used == 0 {
        return Err(no_models(plan));
    }
    let scale = 1.0 / used as f64;
    p_red *= scale;
    xtpx *= scale;
    symmetrize(&mut xtpx);

    let xhat_red = &p_red * &cx;
    let xhat = &qw * &xhat_red;
    let xhat_t_xhat = xhat_red.tr_mul(&xhat_red);
    let xtpy = xhat_red.tr_mul(&cy);
    Ok(ProjectionStats {
        k: plan.k,
        xhat,
        xtpx,
        xhat_t_xhat,
        xtpy,
        // sum_{m,l} ||Q_m'Q_l||_F^2 / M^2 = ||P_red||_F^2
        tr_p2: p_red.norm_squared(),
        m_used: used,
        m_skipped: skipped,
    })
}

/// Sandwich covariance `s^2 G^-1 (Xhat'Xhat) G^-1` with `G = X'P^k X` and
/// `s^2 = e'e / N`. Reduces to `s^2 G^-1` when `P^k` is idempotent.
pub fn inference_stats(
    frame: &ModelFrame,
    stats: &ProjectionStats,
    b: &DVector<f64>,
) -> Result<Inference> {
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let s2 = residual_variance(&frame.x, &frame.y, b);
    let g_inv = spd_inverse(&stats.xtpx)?;
    let v = &g_inv * &stats.xhat_t_xhat * &g_inv * s2;
    Ok(Inference::from_covariance(b, v, s2.sqrt()))
}

/// CSA2SLS coefficients and inference from precomputed statistics.
pub fn estimate_from_stats(
    frame: &ModelFrame,
    stats: &ProjectionStats,
) -> Result<EstimationResult> {
    let b = spd_solve_vec(&stats.xtpx, &stats.xtpy)?;
    let inf = inference_stats(frame, stats, &b)?;
    let mut res = EstimationResult::assemble(
        EstimatorKind::Csa2sls,
        frame.coef_names(),
        b,
        inf,
        frame.n(),
        frame.num_instruments(),
    );
    res.k_opt = Some(stats.k);
    res.m_skipped_total = stats.m_skipped;
    Ok(res)
}

pub fn csa2sls_fixed_k(
    frame: &ModelFrame,
    k: usize,
    r: usize,
    seed: u64,
    mode: ProjectionMode,
) -> Result<EstimationResult> {
    check_estimable(frame)?;
    let total = frame.num_instruments();
    if k < frame.d1() || k > total {
        return Err(Error::InvalidSubsetSize { k, total });
    }
    let plan = build_subset_plan(total, k, r, seed)?;
    let stats = accumulate_projection_stats(frame, &plan, mode)?;
    estimate_from_stats(frame, &stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
    }

    /// Endogenous regressor driven by the instruments plus a shared error.
    fn fixture(seed: u64, n: usize, k: usize, d2: usize) -> ModelFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = normal_matrix(&mut rng, n, k);
        let w = normal_matrix(&mut rng, n, d2);
        let e = normal_matrix(&mut rng, n, 2);
        let mut x = DMatrix::zeros(n, 1);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let signal: f64 = z
                .row(i)
                .iter()
                .enumerate()
                .map(|(j, v)| v * (0.3 + 0.1 * j as f64))
                .sum();
            let wsum: f64 = w.row(i).sum();
            x[(i, 0)] = signal + 0.5 * wsum + e[(i, 0)];
            y[i] = 1.0 + 0.5 * x[(i, 0)] - 0.2 * wsum + e[(i, 0)] * 0.8 + 0.6 * e[(i, 1)];
        }
        ModelFrame::from_parts(y, x, w, z, true).unwrap()
    }

    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn ols_exact_fit() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let res = ols(&x, &y).unwrap();
        assert!(res.b[0].abs() < 1e-14);
        assert!((res.b[1] - 1.0).abs() < 1e-14);
        assert!(res.rmse < 1e-14);
    }

    #[test]
    fn ols_zero_outcome() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let res = ols(&x, &DVector::zeros(3)).unwrap();
        assert_eq!(res.b.norm(), 0.0);
        assert_eq!(res.rmse, 0.0);
        assert_eq!(res.v.norm(), 0.0);
    }

    #[test]
    fn ols_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let x = normal_matrix(&mut rng, 100, 3);
        let y = normal_matrix(&mut rng, 100, 1).column(0).into_owned();
        let res = ols(&x, &y).unwrap();
        let oracle = spd_solve_vec(&x.tr_mul(&x), &x.tr_mul(&y)).unwrap();
        assert!((&res.b - &oracle).norm() / oracle.norm() < 1e-10);
    }

    #[test]
    fn ols_names_dependent_column() {
        let x = DMatrix::from_row_slice(4, 3, &[1., 2., 2., 1., 3., 3., 1., 5., 5., 1., 7., 7.]);
        let err = ols(&x, &DVector::zeros(4)).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { column } if column == 1 || column == 2));
    }

    #[test]
    fn just_identified_iv_ratio() {
        let zc = [1.0, 2.0, 4.0, 3.0, 5.0];
        let xc = [2.0, 1.0, 5.0, 4.0, 6.0];
        let yc = [1.0, 3.0, 2.0, 5.0, 4.0];
        let frame = ModelFrame::from_parts(
            DVector::from_column_slice(&yc),
            DMatrix::from_column_slice(5, 1, &xc),
            DMatrix::zeros(5, 0),
            DMatrix::from_column_slice(5, 1, &zc),
            true,
        )
        .unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let cov = |a: &[f64], b: &[f64]| {
            let (ma, mb) = (mean(a), mean(b));
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - ma) * (y - mb))
                .sum::<f64>()
        };
        let slope = cov(&zc, &yc) / cov(&zc, &xc);
        let res = tsls(&frame).unwrap();
        assert!((res.b[0] - slope).abs() < 1e-12);
    }

    #[test]
    fn tsls_with_regressor_as_instrument_is_ols() {
        let f = fixture(4, 40, 1, 0);
        let mut g = f.clone();
        g.z_excl = f.x.columns(0, 1).into_owned();
        let a = tsls(&g).unwrap();
        let b = ols_frame(&g).unwrap();
        assert!((&a.b - &b.b).norm() / b.b.norm() < 1e-12);
    }

    #[test]
    fn order_condition_enforced() {
        let mut f = fixture(5, 30, 2, 0);
        f.endo_names.push("x2".into());
        let extra = f.x.column(0).map(|v| v * v);
        f.x = f.x.clone().insert_column(1, 0.0);
        f.x.set_column(1, &extra);
        f.z_excl = f.z_excl.columns(0, 1).into_owned();
        f.iv_names.truncate(1);
        assert!(matches!(tsls(&f), Err(Error::OrderCondition { .. })));
    }

    #[test]
    fn first_stage_orthonormal_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = thin_qr(&normal_matrix(&mut rng, 30, 3), DEFAULT_RANK_TOL)
            .unwrap()
            .q;
        let x = normal_matrix(&mut rng, 30, 2);
        let (pi, ok) = first_stage_fit(&q, &x).unwrap();
        assert!(ok);
        assert!(rel(&pi, &q.tr_mul(&x)) < 1e-12);
    }

    #[test]
    fn first_stage_flags_duplicate_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut z = normal_matrix(&mut rng, 30, 3);
        let c0 = z.column(0).into_owned();
        z.set_column(2, &c0);
        let (_, ok) = first_stage_fit(&z, &normal_matrix(&mut rng, 30, 1)).unwrap();
        assert!(!ok);
    }

    #[test]
    fn first_stage_matches_dense_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z = normal_matrix(&mut rng, 100, 3);
        let x = normal_matrix(&mut rng, 100, 2);
        let (pi, ok) = first_stage_fit(&z, &x).unwrap();
        assert!(ok);
        let proj = &z * (z.tr_mul(&z)).try_inverse().unwrap() * z.transpose();
        assert!((&z * pi - proj * &x).norm() < 1e-8);
    }

    #[test]
    fn single_model_trace_is_rank() {
        let f = fixture(11, 40, 4, 2);
        let plan = build_subset_plan(4, 4, 100, 0).unwrap();
        for mode in [ProjectionMode::Dense, ProjectionMode::Streaming] {
            let s = accumulate_projection_stats(&f, &plan, mode).unwrap();
            assert_eq!(s.m_used, 1);
            assert!((s.tr_p2 - 7.0).abs() < 1e-10);
            // idempotent P: X'P^2X = X'PX
            assert!(rel(&s.xhat_t_xhat, &s.xtpx) < 1e-10);
        }
    }

    #[test]
    fn streaming_matches_dense() {
        let f = fixture(12, 40, 5, 1);
        let plan = build_subset_plan(5, 2, 100, 0).unwrap();
        let d = accumulate_projection_stats(&f, &plan, ProjectionMode::Dense).unwrap();
        let s = accumulate_projection_stats(&f, &plan, ProjectionMode::Streaming).unwrap();
        assert!(rel(&s.xtpx, &d.xtpx) < 1e-10);
        assert!(rel(&s.xhat_t_xhat, &d.xhat_t_xhat) < 1e-10);
        assert!(rel(&s.xhat, &d.xhat) < 1e-10);
        assert!((&s.xtpy - &d.xtpy).norm() / d.xtpy.norm() < 1e-10);
        assert!((s.tr_p2 - d.tr_p2).abs() / d.tr_p2 < 1e-10);
    }

    #[test]
    fn collinear_subset_is_skipped() {
        let mut f = fixture(13, 40, 4, 0);
        let c0 = f.z_excl.column(0).map(|v| 2.0 * v);
        f.z_excl.set_column(3, &c0);
        let plan = build_subset_plan(4, 2, 100, 0).unwrap();
        let kept = SubsetPlan {
            subsets: plan
                .subsets
                .iter()
                .filter(|s| **s != vec![0, 3])
                .cloned()
                .collect(),
            ..plan.clone()
        };
        for mode in [ProjectionMode::Dense, ProjectionMode::Streaming] {
            let s = accumulate_projection_stats(&f, &plan, mode).unwrap();
            assert_eq!((s.m_used, s.m_skipped), (5, 1));
            let r = accumulate_projection_stats(&f, &kept, ProjectionMode::Dense).unwrap();
            assert!(rel(&s.xtpx, &r.xtpx) < 1e-10);
            assert!((s.tr_p2 - r.tr_p2).abs() < 1e-10);
        }
    }

    #[test]
    fn all_skipped_is_an_error() {
        let mut f = fixture(14, 20, 2, 0);
        let c0 = f.z_excl.column(0).into_owned();
        f.z_excl.set_column(1, &c0);
        let plan = build_subset_plan(2, 2, 100, 0).unwrap();
        assert!(matches!(
            accumulate_projection_stats(&f, &plan, ProjectionMode::Dense),
            Err(Error::EstimationImpossible(_))
        ));
    }

    #[test]
    fn full_subset_equals_tsls() {
        let f = fixture(15, 60, 4, 1);
        let t = tsls(&f).unwrap();
        for mode in [ProjectionMode::Dense, ProjectionMode::Streaming] {
            let c = csa2sls_fixed_k(&f, 4, 100, 0, mode).unwrap();
            assert!((&c.b - &t.b).norm() / t.b.norm() < 1e-10);
            assert!(rel(&c.v, &t.v) < 1e-8);
            assert!((c.rmse - t.rmse).abs() < 1e-10);
        }
    }

    #[test]
    fn outcome_scaling_is_linear() {
        let f = fixture(16, 50, 5, 0);
        let mut g = f.clone();
        g.y *= 10.0;
        let a = csa2sls_fixed_k(&f, 2, 100, 0, ProjectionMode::Dense).unwrap();
        let b = csa2sls_fixed_k(&g, 2, 100, 0, ProjectionMode::Dense).unwrap();
        assert!((&a.b * 10.0 - &b.b).norm() / b.b.norm() < 1e-12);
    }

    #[test]
    fn inference_definitions() {
        let f = fixture(17, 50, 5, 1);
        let c = csa2sls_fixed_k(&f, 3, 100, 0, ProjectionMode::Streaming).unwrap();
        for j in 0..c.b.len() {
            assert!((c.se[j] * c.se[j] - c.v[(j, j)]).abs() < 1e-12 * c.v[(j, j)].max(1.0));
            assert!((c.ci_high[j] - c.ci_low[j] - 2.0 * Z_CRIT_95 * c.se[j]).abs() < 1e-12);
        }
        assert!(rel(&c.v, &c.v.transpose()) < 1e-15);
    }

    #[test]
    fn zero_residuals_give_zero_covariance() {
        let mut f = fixture(18, 30, 3, 0);
        let b = DVector::from_vec(vec![2.0, -1.0]);
        f.y = &f.x * &b;
        let res = csa2sls_fixed_k(&f, 2, 100, 0, ProjectionMode::Dense).unwrap();
        assert!((&res.b - &b).norm() < 1e-10);
        assert!(res.v.norm() < 1e-20);
        assert!(res.rmse < 1e-10);
    }

    #[test]
    fn averaged_projector_is_contractive() {
        let f = fixture(19, 25, 5, 0);
        let plan = build_subset_plan(5, 2, 100, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let mut p = DMatrix::zeros(25, 25);
        for s in &plan.subsets {
            let q = thin_qr(&f.instrument_block(s), DEFAULT_RANK_TOL).unwrap().q;
            p += &q * q.transpose();
        }
        p /= plan.len() as f64;
        for _ in 0..50 {
            let v = normal_matrix(&mut rng, 25, 1);
            let quad = (v.transpose() * &p * &v)[(0, 0)];
            assert!(quad >= -1e-10 && quad <= v.norm_squared() + 1e-8);
        }
    }

    #[test]
    fn fixed_k_range_checked() {
        let f = fixture(21, 30, 3, 0);
        assert!(matches!(
            csa2sls_fixed_k(&f, 0, 100, 0, ProjectionMode::Dense),
            Err(Error::InvalidSubsetSize { .. })
        ));
        assert!(matches!(
            csa2sls_fixed_k(&f, 4, 100, 0, ProjectionMode::Dense),
            Err(Error::InvalidSubsetSize { .. })
        ));
    }
}
