//! The two ways of accumulating the averaged projection. Dense forms the
//! N x N matrix; streaming works in the span of all instruments and never
//! touches an N x N object. They agree to rounding.

use std::time::Instant;

use csa2sls::montecarlo::{generate_sample, McConfig};
use csa2sls::{accumulate_projection_stats, build_subset_plan, rng, ProjectionMode};

fn main() -> csa2sls::Result<()> {
    for n in [200, 1500] {
        let cfg = McConfig {
            n,
            ..McConfig::default()
        };
        let frame = generate_sample(&cfg, 10, 0.5, &mut rng::stream(3, &[n as u64]));
        let plan = build_subset_plan(10, 4, 100, 2022)?;

        let t = Instant::now();
        let dense = accumulate_projection_stats(&frame, &plan, ProjectionMode::Dense)?;
        let t_dense = t.elapsed();
        let t = Instant::now();
        let stream = accumulate_projection_stats(&frame, &plan, ProjectionMode::Streaming)?;
        let t_stream = t.elapsed();

        let diff = (&dense.xhat_t_xhat - &stream.xhat_t_xhat).amax() / dense.xhat_t_xhat.amax();
        println!(
            "n={n}: tr(P^2) dense {:.10} streaming {:.10}; rel diff X'P^2X {diff:.1e}; {:?} vs {:?}",
            dense.tr_p2, stream.tr_p2, t_dense, t_stream
        );
    }
    println!(
        "auto mode for n=500: {:?}",
        ProjectionMode::auto(500, false)
    );
    println!(
        "auto mode for n=5000: {:?}",
        ProjectionMode::auto(5000, false)
    );
    Ok(())
}
