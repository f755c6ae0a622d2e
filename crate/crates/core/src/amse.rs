//! Subset-size selection by approximate mean squared error.
//!
//! A preliminary fit supplies the residual dispersion statistics; the
//! criterion `S(k)` is then evaluated from each `k`'s [`ProjectionStats`]
//! and the smallest minimizer wins.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::dataframe::ModelFrame;
use crate::error::{Error, Result};
use crate::estimators::{
    accumulate_projection_stats, check_estimable, estimate_from_stats, EstimationResult,
    ProjectionMode, ProjectionStats,
};
use crate::linalg::{spd_solve_vec, thin_qr, DEFAULT_RANK_TOL};
use crate::subsets::build_subset_plan;
use crate::{DEFAULT_MAX_SUBSETS, DEFAULT_SEED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrelimMode {
    /// Nested first-stage selection by Mallows' Cp, then 2SLS.
    #[default]
    Mallows,
    /// 2SLS on all instruments.
    OneStep,
}

impl PrelimMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PrelimMode::Mallows => "mallows",
            PrelimMode::OneStep => "onestep",
        }
    }
}

impl fmt::Display for PrelimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Csa2slsOptions {
    /// Maximum subsets averaged per `k`.
    pub r: usize,
    pub seed: u64,
    pub prelim: PrelimMode,
    /// `None` picks [`ProjectionMode::auto`].
    pub projection: Option<ProjectionMode>,
    /// Linear combination of interest; defaults to the endogenous block.
    pub lambda: Option<DVector<f64>>,
}

impl Default for Csa2slsOptions {
    fn default() -> Self {
        Csa2slsOptions {
            r: DEFAULT_MAX_SUBSETS,
            seed: DEFAULT_SEED,
            prelim: PrelimMode::Mallows,
            projection: None,
            lambda: None,
        }
    }
}

impl Csa2slsOptions {
    pub fn projection_for(&self, n: usize) -> ProjectionMode {
        self.projection
            .unwrap_or_else(|| ProjectionMode::auto(n, false))
    }
}

/// Pilot fit feeding the criterion.
#[derive(Debug, Clone)]
pub struct PreliminaryFit {
    pub beta_tilde: DVector<f64>,
    pub eps_tilde: DVector<f64>,
    /// First-stage fit of `X` on the preliminary instrument set.
    pub f_tilde: DMatrix<f64>,
    pub u_tilde: DMatrix<f64>,
    /// `f'f / N`
    pub h: DMatrix<f64>,
    pub sigma_eps2: f64,
    /// `u'eps / N`
    pub sigma_ueps: DVector<f64>,
    /// `u'u / N`; rows and columns of exogenous regressors vanish.
    pub sigma_u: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub mode: PrelimMode,
    /// Excluded instruments in the preliminary set.
    pub iv_count: usize,
}

impl PreliminaryFit {
    pub fn with_lambda(mut self, lambda: DVector<f64>) -> Result<Self> {
        if lambda.len() != self.beta_tilde.len() {
            return Err(Error::Dimension(format!(
                "lambda has {} entries for {} coefficients",
                lambda.len(),
                self.beta_tilde.len()
            )));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        self.lambda = lambda;
        Ok(self)
    }
}

/// Indicator of the endogenous coefficients.
pub fn default_lambda(frame: &ModelFrame) -> DVector<f64> {
    DVector::from_fn(frame.d(), |i, _| if i < frame.d1() { 1.0 } else { 0.0 })
}

/// Residual sum of squares of the endogenous block on `[z_0..z_{j-1} | x1 | const]`,
/// or `None` when that block is rank deficient.
fn nested_rss(frame: &ModelFrame, j: usize) -> Result<Option<f64>> {
    let subset: Vec<usize> = (0..j).collect();
    let z = frame.instrument_block(&subset);
    let qr = thin_qr(&z, DEFAULT_RANK_TOL)?;
    if !qr.is_full_rank() {
        return Ok(None);
    }
    let endo = frame.x.columns(0, frame.d1()).into_owned();
    let resid = &endo - &qr.q * qr.q.tr_mul(&endo);
    Ok(Some(resid.norm_squared()))
}

/// Nested Mallows choice of how many leading instruments the pilot uses.
pub fn mallows_instrument_count(frame: &ModelFrame) -> Result<usize> {
    let (n, d1, total, inc) = (
        frame.n(),
        frame.d1(),
        frame.num_instruments(),
        frame.num_included(),
    );
    let rss_full = nested_rss(frame, total)?.ok_or(Error::RankDeficient { column: total })?;
    let dof = n.saturating_sub(total + inc).max(1);
    // residual variance per endogenous column at the largest model
    let sigma2 = rss_full / (d1 * dof) as f64;
    let mut best: Option<(usize, f64)> = None;
    for j in d1..=total {
        let Some(rss) = nested_rss(frame, j)? else {
            continue;
        };
        let cp = rss + 2.0 * sigma2 * ((j + inc) * d1) as f64;
        if best.is_none_or(|(_, c)| cp < c) {
            best = Some((j, cp));
        }
    }
    Ok(best.map(|(j, _)| j).unwrap_or(total))
}

pub fn preliminary_estimate(frame: &ModelFrame, mode: PrelimMode) -> Result<PreliminaryFit> {
    check_estimable(frame)?;
    let n = frame.n() as f64;
    let iv_count = match mode {
        PrelimMode::OneStep => frame.num_instruments(),
        PrelimMode::Mallows => mallows_instrument_count(frame)?,
    };
    let subset: Vec<usize> = (0..iv_count).collect();
    let z = frame.instrument_block(&subset);
    let qr = thin_qr(&z, DEFAULT_RANK_TOL)?;
    if let Some(column) = qr.first_dependent_column() {
        return Err(Error::RankDeficient { column });
    }
    let cx = qr.q.tr_mul(&frame.x);
    let cy = qr.q.tr_mul(&frame.y);
    let beta = spd_solve_vec(&cx.tr_mul(&cx), &cx.tr_mul(&cy))?;
    let f_tilde = &qr.q * &cx;
    let u_tilde = &frame.x - &f_tilde;
    let eps = &frame.y - &frame.x * &beta;
    Ok(PreliminaryFit {
        h: f_tilde.tr_mul(&f_tilde) / n,
        sigma_eps2: eps.norm_squared() / n,
        sigma_ueps: u_tilde.tr_mul(&eps) / n,
        sigma_u: u_tilde.tr_mul(&u_tilde) / n,
        lambda: default_lambda(frame),
        beta_tilde: beta,
        eps_tilde: eps,
        f_tilde,
        u_tilde,
        mode,
        iv_count,
    })
}

/// Intermediate quantities of the criterion at one `k`.
#[derive(Debug, Clone)]
pub struct AmseComponents {
    /// `X'(I-P)^2X/N + Sigma_u (2k - tr(P^2))/N`
    pub e_f: DMatrix<f64>,
    /// `X'(I-P)^2X/N + Sigma_u k/N - Sigma_u`
    pub xi_f: DMatrix<f64>,
    /// `lambda' H^-1 sigma_ueps`
    pub sigma_lambda_eps: f64,
    pub score: f64,
}

pub fn amse_components(
    frame: &ModelFrame,
    prelim: &PreliminaryFit,
    stats: &ProjectionStats,
) -> Result<AmseComponents> {
    let n = frame.n() as f64;
    let k = stats.k as f64;
    // X'(I-P)^2X = X'X - 2 X'PX + X'P^2X, with X'P^2X = Xhat'Xhat
    let resid_form = (frame.x.tr_mul(&frame.x) - &stats.xtpx * 2.0 + &stats.xhat_t_xhat) / n;
    let e_f = &resid_form + &prelim.sigma_u * ((2.0 * k - stats.tr_p2) / n);
    let xi_f = &resid_form + &prelim.sigma_u * (k / n) - &prelim.sigma_u;

    let h_lambda = spd_solve_vec(&prelim.h, &prelim.lambda)?;
    let sigma_lambda_eps = h_lambda.dot(&prelim.sigma_ueps);
    let first = h_lambda.dot(&(&e_f * &h_lambda));
    let xi_h = &xi_f * &h_lambda;
    let second = xi_h.dot(&spd_solve_vec(&prelim.h, &xi_h)?);
    let score = sigma_lambda_eps.powi(2) * k * k / n + prelim.sigma_eps2 * (first - second);
    Ok(AmseComponents {
        e_f,
        xi_f,
        sigma_lambda_eps,
        score,
    })
}

pub fn amse_score(
    frame: &ModelFrame,
    prelim: &PreliminaryFit,
    stats: &ProjectionStats,
) -> Result<f64> {
    Ok(amse_components(frame, prelim, stats)?.score)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmseEntry {
    pub k: usize,
    /// `None` when every subset of this size was rank deficient.
    pub score: Option<f64>,
    pub m_used: usize,
    pub m_skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmseTable {
    /// One entry per `k` in `d1..=K`, ascending.
    pub entries: Vec<AmseEntry>,
    pub k_opt: usize,
}

impl AmseTable {
    pub fn score(&self, k: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.k == k).and_then(|e| e.score)
    }

    pub fn total_skipped(&self) -> usize {
        self.entries.iter().map(|e| e.m_skipped).sum()
    }
}

struct Selection {
    table: AmseTable,
    best: ProjectionStats,
}

fn select(frame: &ModelFrame, opts: &Csa2slsOptions) -> Result<Selection> {
    check_estimable(frame)?;
    let mut prelim = preliminary_estimate(frame, opts.prelim)?;
    if let Some(lambda) = &opts.lambda {
        prelim = prelim.with_lambda(lambda.clone())?;
    }
    let mode = opts.projection_for(frame.n());
    let total = frame.num_instruments();
    let mut entries = Vec::with_capacity(total + 1 - frame.d1());
    let mut best: Option<(f64, ProjectionStats)> = None;
    for k in frame.d1()..=total {
        let plan = build_subset_plan(total, k, opts.r, opts.seed)?;
        let stats = match accumulate_projection_stats(frame, &plan, mode) {
            Ok(s) => s,
            Err(Error::EstimationImpossible(_)) => {
                entries.push(AmseEntry {
                    k,
                    score: None,
                    m_used: 0,
                    m_skipped: plan.len(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let score = amse_score(frame, &prelim, &stats)?;
        let score = score.is_finite().then_some(score);
        entries.push(AmseEntry {
            k,
            score,
            m_used: stats.m_used,
            m_skipped: stats.m_skipped,
        });
        if let Some(s) = score {
            // strict: ties keep the smaller k
            if best.as_ref().is_none_or(|(b, _)| s < *b) {
                best = Some((s, stats));
            }
        }
    }
    let (_, best) = best.ok_or_else(|| {
        Error::EstimationImpossible("no subset size yields a usable criterion".into())
    })?;
    Ok(Selection {
        table: AmseTable {
            entries,
            k_opt: best.k,
        },
        best,
    })
}

/// Evaluates the criterion on `k = d1..=K` and returns the table with its
/// minimizer.
pub fn select_optimal_k(frame: &ModelFrame, opts: &Csa2slsOptions) -> Result<(AmseTable, usize)> {
    let sel = select(frame, opts)?;
    let k = sel.table.k_opt;
    Ok((sel.table, k))
}

/// Full estimator: choose `k`, then fit CSA2SLS at that size.
pub fn csa2sls(frame: &ModelFrame, opts: &Csa2slsOptions) -> Result<EstimationResult> {
    let sel = select(frame, opts)?;
    let mut res = estimate_from_stats(frame, &sel.best)?;
    res.m_skipped_total = sel.table.total_skipped();
    res.k_opt = Some(sel.table.k_opt);
    res.amse_table = Some(sel.table);
    Ok(res)
}
