//! End-to-end estimation from a CSV file, the same path the `estimate`
//! subcommand takes: load, expand varlists, build the model, pick k, print.
//!
//! ```text
//! cargo run --example estimate_csv            # synthetic data
//! cargo run --example estimate_csv -- my.csv  # y, x, z1.. columns
//! ```

use std::io::Write;

use csa2sls::cli::{render_report, StoredResults};
use csa2sls::dataframe::{build_model_frame, expand_varlist, load_csv};
use csa2sls::{csa2sls as estimate, rng, Csa2slsOptions};
use rand::Rng;
use rand_distr::StandardNormal;

fn synthetic_csv(path: &std::path::Path) -> std::io::Result<()> {
    let mut r = rng::stream(7, &[]);
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "y,x,w1,z1,z2,z3,z4,z5,z6")?;
    for _ in 0..300 {
        let z: Vec<f64> = (0..6).map(|_| r.sample(StandardNormal)).collect();
        let w: f64 = r.sample(StandardNormal);
        let e: f64 = r.sample(StandardNormal);
        let u = 0.8 * e + 0.6 * r.sample::<f64, _>(StandardNormal);
        let x = 0.3 * z.iter().sum::<f64>() + 0.5 * w + u;
        let y = 1.0 + 0.5 * x - w + e;
        let zs: Vec<String> = z.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(f, "{y:.6},{x:.6},{w:.6},{}", zs.join(","))?;
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let p = dir.path().join("synthetic.csv");
            synthetic_csv(&p)?;
            p
        }
    };

    let table = load_csv(&path)?;
    println!("{}", table.summary());
    let names = table.column_names();
    let exog = if names.iter().any(|n| n == "w1") {
        vec!["w1".to_string()]
    } else {
        vec![]
    };
    let iv = expand_varlist("z1-z6", names)?;
    let frame = build_model_frame(&table, "y", &exog, &["x".into()], &iv, true)?;

    let opts = Csa2slsOptions::default();
    let fit = estimate(&frame, &opts)?;
    print!("{}", render_report(&fit, &frame));

    let stored = StoredResults::new(&fit, &frame, opts.prelim, "estimate_csv example");
    println!("stored results:\n{}", stored.to_json());
    Ok(())
}
