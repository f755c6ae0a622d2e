//! OLS, 2SLS on all instruments, and CSA2SLS side by side on one sample
//! with correlated instruments and a strongly endogenous regressor.

use csa2sls::estimators::ols_frame;
use csa2sls::montecarlo::{generate_sample, McConfig};
use csa2sls::{csa2sls_fixed_k, rng, tsls, Csa2slsOptions, ProjectionMode};

fn main() -> csa2sls::Result<()> {
    let cfg = McConfig {
        n: 500,
        ..McConfig::default()
    };
    let frame = generate_sample(&cfg, 20, 0.9, &mut rng::stream(5, &[]));
    println!("true slope {}", cfg.beta1);

    let rows = [
        ("ols", ols_frame(&frame)?),
        ("2sls", tsls(&frame)?),
        (
            "csa2sls",
            csa2sls::csa2sls(&frame, &Csa2slsOptions::default())?,
        ),
        (
            "csa2sls k=1",
            csa2sls_fixed_k(&frame, 1, 100, 2022, ProjectionMode::Streaming)?,
        ),
    ];
    println!(
        "{:<12} {:>10} {:>10} {:>6}",
        "estimator", "slope", "se", "k"
    );
    for (name, fit) in rows {
        let k = fit
            .k_opt
            .map(|k| k.to_string())
            .unwrap_or_else(|| "-".into());
        println!("{name:<12} {:>10.4} {:>10.4} {k:>6}", fit.b[0], fit.se[0]);
    }
    Ok(())
}
