//! A reduced version of the simulation grid: bias and MSE of the slope for
//! OLS, 2SLS and CSA2SLS, written as TSV.
//!
//! ```text
//! cargo run --release --example monte_carlo -- 200   # replications per cell
//! ```

use csa2sls::cli::cell_summary;
use csa2sls::montecarlo::{run_grid_with, write_tsv, McConfig};

fn main() -> csa2sls::Result<()> {
    let reps = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    let cfg = McConfig {
        k_grid: vec![5, 20],
        rho_grid: vec![0.0, 0.9],
        reps,
        ..McConfig::default()
    };
    let cells = run_grid_with(&cfg, |c| eprintln!("{}", cell_summary(c)))?;
    write_tsv(&cfg, &cells, std::io::stdout().lock()).expect("stdout");
    Ok(())
}
