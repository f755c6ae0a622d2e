//! The approximate-MSE criterion over every candidate k, for both pilot
//! estimators, on a many-weak-instruments design.

use csa2sls::amse::preliminary_estimate;
use csa2sls::montecarlo::{generate_sample, McConfig};
use csa2sls::{rng, select_optimal_k, Csa2slsOptions, PrelimMode};

fn main() -> csa2sls::Result<()> {
    let cfg = McConfig {
        n: 400,
        ..McConfig::default()
    };
    let mut draws = rng::stream(11, &[]);
    let frame = generate_sample(&cfg, 12, 0.5, &mut draws);

    for prelim in [PrelimMode::Mallows, PrelimMode::OneStep] {
        let pilot = preliminary_estimate(&frame, prelim)?;
        println!("{prelim}: pilot uses {} instruments", pilot.iv_count);
        let opts = Csa2slsOptions {
            prelim,
            ..Csa2slsOptions::default()
        };
        let (table, k_opt) = select_optimal_k(&frame, &opts)?;
        for e in &table.entries {
            let mark = if e.k == k_opt { "  <- k_opt" } else { "" };
            match e.score {
                Some(s) => println!("  k={:2}  S={s:>10.5}  models={}{mark}", e.k, e.m_used),
                None => println!("  k={:2}  (no full-rank subsets)", e.k),
            }
        }
    }
    Ok(())
}
