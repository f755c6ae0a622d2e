//! Simulation comparing OLS, 2SLS and CSA2SLS under equicorrelated
//! instruments.
//!
//! Design: `y = b0 + b1 Y + e`, `Y = pi'z + u`, `z ~ N(0, S)` with unit
//! variances and common correlation `rho`, `(e, u)` standard bivariate
//! normal with covariance `cov_eps_u`. Every element of `pi` is set so the
//! population first-stage R-squared equals `r1sq`.
//!
//! Each replication draws from its own stream keyed by
//! `(seed, K, rho, rep)` and results are reduced in replication order, so
//! output does not depend on the number of worker threads.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::amse::{csa2sls, Csa2slsOptions, PrelimMode};
use crate::dataframe::ModelFrame;
use crate::error::{Error, Result};
use crate::estimators::{ols, tsls, ProjectionMode};
use crate::numfmt::format_g;
use crate::{rng, DEFAULT_MAX_SUBSETS, DEFAULT_SEED};

pub const TSV_HEADER: &str = "K\trho\testimator\tbias\tmse\tfailures\tmean_k_opt";

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub k_grid: Vec<usize>,
    pub rho_grid: Vec<f64>,
    pub n: usize,
    pub reps: usize,
    pub beta0: f64,
    pub beta1: f64,
    pub cov_eps_u: f64,
    pub r1sq: f64,
    pub seed: u64,
    pub r: usize,
    pub prelim: PrelimMode,
    pub projection: ProjectionMode,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            k_grid: vec![5, 10, 15, 20],
            rho_grid: vec![0.0, 0.5, 0.9],
            n: 100,
            reps: 1000,
            beta0: 0.0,
            beta1: 0.1,
            cov_eps_u: 0.9,
            r1sq: 0.1,
            seed: DEFAULT_SEED,
            r: DEFAULT_MAX_SUBSETS,
            prelim: PrelimMode::Mallows,
            projection: ProjectionMode::Streaming,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k_grid.is_empty() || self.rho_grid.is_empty() {
            return bad("empty K or rho grid".into());
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.r == 0 {
            return bad("r must be at least 1".into());
        }
        for &k in &self.k_grid {
            if k == 0 || self.n <= k + 2 {
                return bad(format!(
                    "need 1 <= K and n > K + 2, got K={k}, n={}",
                    self.n
                ));
            }
        }
        for &rho in &self.rho_grid {
            if !(0.0..1.0).contains(&rho) {
                return bad(format!("rho={rho} outside [0, 1)"));
            }
        }
        if self.cov_eps_u.is_nan() || self.cov_eps_u.abs() >= 1.0 {
            return bad(format!("cov_eps_u={} must lie in (-1, 1)", self.cov_eps_u));
        }
        if !(self.r1sq > 0.0 && self.r1sq < 1.0) {
            return bad(format!("r1sq={} must lie in (0, 1)", self.r1sq));
        }
        Ok(())
    }

    fn estimator_options(&self, seed: u64) -> Csa2slsOptions {
        Csa2slsOptions {
            r: self.r,
            seed,
            prelim: self.prelim,
            projection: Some(self.projection),
            lambda: None,
        }
    }
}

/// Common first-stage coefficient giving population R-squared `r1sq`:
/// `pi'S pi = pi^2 (K + K(K-1) rho) = r1sq / (1 - r1sq)`.
pub fn pi_coefficient(k: usize, rho: f64, r1sq: f64) -> f64 {
    let kf = k as f64;
    (r1sq / ((1.0 - r1sq) * (kf + kf * (kf - 1.0) * rho))).sqrt()
}

/// Population R-squared of `Y` on `z` for a common coefficient `pi`
/// (the first-stage error has unit variance).
pub fn first_stage_r2(k: usize, rho: f64, pi: f64) -> f64 {
    let kf = k as f64;
    let signal = pi * pi * (kf + kf * (kf - 1.0) * rho);
    signal / (signal + 1.0)
}

/// Draws `(e, u)` with unit variances and covariance `cov`.
pub fn draw_errors<R: Rng + ?Sized>(rng: &mut R, cov: f64) -> (f64, f64) {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    (a, cov * a + (1.0 - cov * cov).sqrt() * b)
}

/// One sample of size `cfg.n` with `k` instruments; `z` comes from the
/// one-factor form `sqrt(rho) g + sqrt(1 - rho) e`.
pub fn generate_sample<R: Rng + ?Sized>(
    cfg: &McConfig,
    k: usize,
    rho: f64,
    rng: &mut R,
) -> ModelFrame {
    let n = cfg.n;
    let pi = pi_coefficient(k, rho, cfg.r1sq);
    let (load, idio) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut z = DMatrix::zeros(n, k);
    let mut endo = DMatrix::zeros(n, 1);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let g: f64 = rng.sample(StandardNormal);
        let mut index = 0.0;
        for j in 0..k {
            let e: f64 = rng.sample(StandardNormal);
            let v = load * g + idio * e;
            z[(i, j)] = v;
            index += v;
        }
        let (eps, u) = draw_errors(rng, cfg.cov_eps_u);
        let yi = pi * index + u;
        endo[(i, 0)] = yi;
        y[i] = cfg.beta0 + cfg.beta1 * yi + eps;
    }
    ModelFrame::from_parts(y, endo, DMatrix::zeros(n, 0), z, true)
        .expect("simulated blocks are finite and conformable")
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatorSummary {
    pub mean_bias: f64,
    pub mse: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McCellResult {
    pub k: usize,
    pub rho: f64,
    pub ols: EstimatorSummary,
    pub tsls: EstimatorSummary,
    pub csa2sls: EstimatorSummary,
    pub mean_k_opt: f64,
}

impl McCellResult {
    pub fn summaries(&self) -> [(&'static str, &EstimatorSummary); 3] {
        [
            ("ols", &self.ols),
            ("tsls", &self.tsls),
            ("csa2sls", &self.csa2sls),
        ]
    }
}

#[derive(Debug, Default)]
struct Replication {
    ols: Option<f64>,
    tsls: Option<f64>,
    csa2sls: Option<(f64, usize)>,
}

fn replicate(cfg: &McConfig, k: usize, rho: f64, rep: usize) -> Replication {
    let seed = rng::stream_seed(cfg.seed, &[k as u64, rho.to_bits(), rep as u64]);
    let mut draws = rng::stream(seed, &[0]);
    let frame = generate_sample(cfg, k, rho, &mut draws);
    Replication {
        ols: ols(&frame.x, &frame.y).ok().map(|r| r.b[0]),
        tsls: tsls(&frame).ok().map(|r| r.b[0]),
        csa2sls: csa2sls(&frame, &cfg.estimator_options(seed))
            .ok()
            .map(|r| (r.b[0], r.k_opt.unwrap_or(0))),
    }
}

fn summarize(
    values: impl Iterator<Item = Option<f64>>,
    truth: f64,
    reps: usize,
) -> EstimatorSummary {
    let (mut sum, mut sq, mut ok) = (0.0, 0.0, 0usize);
    for v in values.flatten() {
        sum += v - truth;
        sq += (v - truth) * (v - truth);
        ok += 1;
    }
    EstimatorSummary {
        mean_bias: sum / ok as f64,
        mse: sq / ok as f64,
        failures: reps - ok,
    }
}

pub fn run_cell(cfg: &McConfig, k: usize, rho: f64) -> Result<McCellResult> {
    cfg.validate()?;
    let reps: Vec<Replication> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| replicate(cfg, k, rho, rep))
        .collect();
    let ks: Vec<usize> = reps.iter().filter_map(|r| r.csa2sls.map(|c| c.1)).collect();
    Ok(McCellResult {
        k,
        rho,
        ols: summarize(reps.iter().map(|r| r.ols), cfg.beta1, cfg.reps),
        tsls: summarize(reps.iter().map(|r| r.tsls), cfg.beta1, cfg.reps),
        csa2sls: summarize(
            reps.iter().map(|r| r.csa2sls.map(|c| c.0)),
            cfg.beta1,
            cfg.reps,
        ),
        mean_k_opt: ks.iter().sum::<usize>() as f64 / ks.len() as f64,
    })
}

/// Every `(K, rho)` cell, `K` outermost.
pub fn run_grid(cfg: &McConfig) -> Result<Vec<McCellResult>> {
    run_grid_with(cfg, |_| {})
}

/// [`run_grid`] with a callback after each finished cell.
pub fn run_grid_with(
    cfg: &McConfig,
    mut on_cell: impl FnMut(&McCellResult),
) -> Result<Vec<McCellResult>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.k_grid.len() * cfg.rho_grid.len());
    for &k in &cfg.k_grid {
        for &rho in &cfg.rho_grid {
            let cell = run_cell(cfg, k, rho)?;
            on_cell(&cell);
            out.push(cell);
        }
    }
    Ok(out)
}

fn tsv_float(x: f64) -> String {
    if x.is_finite() {
        format_g(x, 17)
    } else {
        "NA".into()
    }
}

/// Metadata comment, header, then one row per (cell, estimator).
pub fn write_tsv<W: Write>(
    cfg: &McConfig,
    cells: &[McCellResult],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(
        out,
        "# n={} reps={} seed={} r={} prelim={} beta0={} beta1={} cov_eps_u={} r1sq={}",
        cfg.n, cfg.reps, cfg.seed, cfg.r, cfg.prelim, cfg.beta0, cfg.beta1, cfg.cov_eps_u, cfg.r1sq
    )?;
    writeln!(out, "{TSV_HEADER}")?;
    for cell in cells {
        for (name, s) in cell.summaries() {
            let k_opt = if name == "csa2sls" {
                tsv_float(cell.mean_k_opt)
            } else {
                "NA".into()
            };
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                cell.k,
                tsv_float(cell.rho),
                name,
                tsv_float(s.mean_bias),
                tsv_float(s.mse),
                s.failures,
                k_opt
            )?;
        }
    }
    Ok(())
}

pub fn write_tsv_file(cfg: &McConfig, cells: &[McCellResult], path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut buf = Vec::new();
    write_tsv(cfg, cells, &mut buf).map_err(io_err)?;
    std::fs::write(path, buf).map_err(io_err)
}
