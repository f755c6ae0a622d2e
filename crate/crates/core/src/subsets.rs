//! Complete subsets of the excluded instruments.
//!
//! A [`SubsetPlan`] lists the index sets averaged over for one subset size.
//! When `C(K, k)` fits under the cap `r` the plan is the full lexicographic
//! enumeration; otherwise it is `r` distinct subsets drawn uniformly at
//! random from a stream keyed by `(seed, k)`.

use std::collections::BTreeSet;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng;

/// Largest enumeration [`enumerate_k_subsets`] will materialize.
pub const ENUMERATION_LIMIT: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetPlan {
    pub k: usize,
    pub total: usize,
    /// Sorted index lists into `0..total`, in lexicographic order.
    pub subsets: Vec<Vec<usize>>,
    /// `C(total, k)` saturated at the plan's cap.
    pub exact_count_capped: usize,
    pub sampled: bool,
    pub seed: u64,
}

impl SubsetPlan {
    /// Effective number of models.
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }
}

/// `min(C(n, k), cap)` without overflow.
pub fn binomial_capped(n: usize, k: usize, cap: usize) -> Result<usize> {
    if k > n {
        return Err(Error::InvalidSubsetSize { k, total: n });
    }
    let k = k.min(n - k);
    let cap = cap as u128;
    let mut c: u128 = 1;
    // C(n, i+1) = C(n, i) (n - i) / (i + 1); increasing for i < n/2.
    for i in 0..k {
        c = match c.checked_mul((n - i) as u128) {
            Some(v) => v / (i + 1) as u128,
            None => return Ok(cap as usize),
        };
        if c > cap {
            return Ok(cap as usize);
        }
    }
    Ok(c.min(cap) as usize)
}

/// Every `k`-subset of `0..n` in lexicographic order.
pub fn enumerate_k_subsets(n: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::InvalidSubsetSize { k, total: n });
    }
    let count = binomial_capped(n, k, ENUMERATION_LIMIT + 1)?;
    if count > ENUMERATION_LIMIT {
        return Err(Error::TooManySubsets {
            total: n,
            k,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut out = Vec::with_capacity(count);
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // rightmost position that can still advance
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            break;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(out)
}

pub fn build_subset_plan(n: usize, k: usize, r: usize, seed: u64) -> Result<SubsetPlan> {
    if k == 0 || k > n {
        return Err(Error::InvalidSubsetSize { k, total: n });
    }
    if r == 0 {
        return Err(Error::Config("subset cap r must be positive".into()));
    }
    let count = binomial_capped(n, k, r.saturating_add(1))?;
    if count <= r {
        return Ok(SubsetPlan {
            k,
            total: n,
            subsets: enumerate_k_subsets(n, k)?,
            exact_count_capped: count,
            sampled: false,
            seed,
        });
    }

    let mut rng = rng::stream(seed, &[k as u64]);
    let mut drawn = BTreeSet::new();
    while drawn.len() < r {
        let mut s = index::sample(&mut rng, n, k).into_vec();
        s.sort_unstable();
        drawn.insert(s);
    }
    Ok(SubsetPlan {
        k,
        total: n,
        subsets: drawn.into_iter().collect(),
        exact_count_capped: count,
        sampled: true,
        seed,
    })
}
