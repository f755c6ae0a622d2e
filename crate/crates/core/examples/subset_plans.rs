//! Which instrument subsets get averaged: full enumeration when C(K, k) fits
//! under the cap r, otherwise a seeded uniform sample of r distinct subsets.

use csa2sls::subsets::{binomial_capped, build_subset_plan};

fn main() -> csa2sls::Result<()> {
    let full = build_subset_plan(5, 2, 100, 2022)?;
    println!("K=5 k=2: {} subsets, sampled={}", full.len(), full.sampled);
    for s in &full.subsets {
        println!("  {s:?}");
    }

    let big = build_subset_plan(20, 10, 100, 2022)?;
    println!(
        "K=20 k=10: C = {}, using {} sampled subsets (first {:?})",
        binomial_capped(20, 10, usize::MAX)?,
        big.len(),
        big.subsets[0]
    );
    let again = build_subset_plan(20, 10, 100, 2022)?;
    println!("same seed, same plan: {}", big == again);
    let other = build_subset_plan(20, 10, 100, 2023)?;
    println!("different seed, same plan: {}", big == other);

    println!(
        "C(60, 30) capped at 10^9: {}",
        binomial_capped(60, 30, 1_000_000_000)?
    );
    Ok(())
}
