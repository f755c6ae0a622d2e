//! Brute-force reference implementation used by the integration tests.
//!
//! Everything here is computed the slow way: each subset's instrument matrix
//! is built column by column, its projector is formed as `Z (Z'Z)^-1 Z'`
//! with an explicit inverse, and `I - P^k` is materialized. Nothing is
//! shared with the library besides the `ModelFrame` container.

#![allow(dead_code)]

use csa2sls::ModelFrame;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// `[selected excluded instruments | included exogenous | constant]`.
pub fn instruments(frame: &ModelFrame, subset: &[usize]) -> DMatrix<f64> {
    let n = frame.n();
    let mut cols: Vec<DVector<f64>> = subset
        .iter()
        .map(|&j| frame.z_excl.column(j).into_owned())
        .collect();
    for j in frame.d1()..frame.d1() + frame.d2() {
        cols.push(frame.x.column(j).into_owned());
    }
    if frame.has_constant {
        cols.push(DVector::from_element(n, 1.0));
    }
    DMatrix::from_columns(&cols)
}

pub fn projector(z: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = (z.transpose() * z).try_inverse()?;
    Some(z * inv * z.transpose())
}

pub struct OracleStats {
    pub p: DMatrix<f64>,
    pub xhat: DMatrix<f64>,
    pub xtpx: DMatrix<f64>,
    pub xhat_t_xhat: DMatrix<f64>,
    pub tr_p2: f64,
    pub m_used: usize,
}

pub fn averaged(frame: &ModelFrame, k: usize) -> OracleStats {
    let n = frame.n();
    let mut p = DMatrix::zeros(n, n);
    let mut used = 0;
    for s in subsets(frame.num_instruments(), k) {
        if let Some(pm) = projector(&instruments(frame, &s)) {
            p += pm;
            used += 1;
        }
    }
    p /= used as f64;
    let x = &frame.x;
    let xhat = &p * x;
    OracleStats {
        xtpx: x.transpose() * &p * x,
        xhat_t_xhat: x.transpose() * &p * &p * x,
        tr_p2: (&p * &p).trace(),
        xhat,
        p,
        m_used: used,
    }
}

pub struct OracleFit {
    pub b: DVector<f64>,
    pub v: DMatrix<f64>,
    pub rmse: f64,
}

pub fn fit(frame: &ModelFrame, p: &DMatrix<f64>) -> OracleFit {
    let n = frame.n() as f64;
    let x = &frame.x;
    let g = x.transpose() * p * x;
    let g_inv = g.clone().try_inverse().unwrap();
    let b = &g_inv * (x.transpose() * p * &frame.y);
    let e = &frame.y - x * &b;
    let s2 = e.dot(&e) / n;
    let v = &g_inv * (x.transpose() * p * p * x) * &g_inv * s2;
    OracleFit {
        b,
        v,
        rmse: s2.sqrt(),
    }
}

pub struct OraclePrelim {
    pub iv_count: usize,
    pub h: DMatrix<f64>,
    pub sigma_eps2: f64,
    pub sigma_ueps: DVector<f64>,
    pub sigma_u: DMatrix<f64>,
}

pub fn mallows_count(frame: &ModelFrame) -> usize {
    let (n, d1, total) = (frame.n(), frame.d1(), frame.num_instruments());
    let inc = frame.d2() + usize::from(frame.has_constant);
    let endo = frame.x.columns(0, d1).into_owned();
    let rss = |j: usize| -> Option<f64> {
        let pj = projector(&instruments(frame, &(0..j).collect::<Vec<_>>()))?;
        let r = (DMatrix::identity(n, n) - pj) * &endo;
        Some(r.norm_squared())
    };
    let dof = n.saturating_sub(total + inc).max(1);
    let sigma2 = rss(total).unwrap() / (d1 * dof) as f64;
    let mut best = (total, f64::INFINITY);
    for j in d1..=total {
        if let Some(r) = rss(j) {
            let cp = r + 2.0 * sigma2 * ((j + inc) * d1) as f64;
            if cp < best.1 {
                best = (j, cp);
            }
        }
    }
    best.0
}

pub fn prelim(frame: &ModelFrame, onestep: bool) -> OraclePrelim {
    let n = frame.n() as f64;
    let iv_count = if onestep {
        frame.num_instruments()
    } else {
        mallows_count(frame)
    };
    let p = projector(&instruments(frame, &(0..iv_count).collect::<Vec<_>>())).unwrap();
    let beta = fit(frame, &p).b;
    let f = &p * &frame.x;
    let u = &frame.x - &f;
    let e = &frame.y - &frame.x * &beta;
    OraclePrelim {
        iv_count,
        h: f.transpose() * &f / n,
        sigma_eps2: e.dot(&e) / n,
        sigma_ueps: u.transpose() * &e / n,
        sigma_u: u.transpose() * &u / n,
    }
}

pub struct OracleCriterion {
    pub e_f: DMatrix<f64>,
    pub xi_f: DMatrix<f64>,
    pub score: f64,
}

pub fn criterion(frame: &ModelFrame, pre: &OraclePrelim, k: usize) -> OracleCriterion {
    let n = frame.n();
    let nf = n as f64;
    let kf = k as f64;
    let st = averaged(frame, k);
    let m = DMatrix::identity(n, n) - &st.p;
    let x = &frame.x;
    let a = x.transpose() * &m * &m * x / nf;
    let e_f = &a + &pre.sigma_u * ((2.0 * kf - (&st.p * &st.p).trace()) / nf);
    let xi_f = &a + &pre.sigma_u * (kf / nf) - &pre.sigma_u;
    let lambda = DVector::from_fn(frame.d(), |i, _| if i < frame.d1() { 1.0 } else { 0.0 });
    let h_inv = pre.h.clone().try_inverse().unwrap();
    let hl = &h_inv * &lambda;
    let s_le = hl.dot(&pre.sigma_ueps);
    let first = (hl.transpose() * &e_f * &hl)[(0, 0)];
    let second = (hl.transpose() * &xi_f * &h_inv * &xi_f * &hl)[(0, 0)];
    OracleCriterion {
        score: s_le * s_le * kf * kf / nf + pre.sigma_eps2 * (first - second),
        e_f,
        xi_f,
    }
}

pub fn k_opt(frame: &ModelFrame, pre: &OraclePrelim) -> usize {
    let mut best = (0, f64::INFINITY);
    for k in frame.d1()..=frame.num_instruments() {
        let s = criterion(frame, pre, k).score;
        if s < best.1 {
            best = (k, s);
        }
    }
    best.0
}

/// Random IV design: `n` rows, `kz` excluded instruments, `d1` endogenous
/// and `d2` exogenous regressors, constant on.
pub fn random_frame(seed: u64, n: usize, kz: usize, d1: usize, d2: usize) -> ModelFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = || -> f64 { rng.sample(StandardNormal) };
    let z = DMatrix::from_fn(n, kz, |_, _| g());
    let w = DMatrix::from_fn(n, d2, |_, _| g());
    let pi = DMatrix::from_fn(kz, d1, |_, _| 0.3 + 0.4 * g().abs());
    let gamma = DMatrix::from_fn(d2, d1, |_, _| 0.5 * g());
    let eps = DVector::from_fn(n, |_, _| g());
    let u = DMatrix::from_fn(n, d1, |i, _| 0.6 * eps[i] + 0.8 * g());
    let endo = &z * pi + &w * gamma + u;
    let beta_endo = DVector::from_fn(d1, |_, _| g());
    let beta_w = DVector::from_fn(d2, |_, _| g());
    let y = &endo * beta_endo + &w * beta_w + eps.add_scalar(1.0);
    ModelFrame::from_parts(y, endo, w, z, true).unwrap()
}

/// Max absolute difference scaled by the largest entry of `b`.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let scale = b.amax().max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = b.amax().max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}

pub fn rel_err_scalar(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
