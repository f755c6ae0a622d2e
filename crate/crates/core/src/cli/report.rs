use std::fmt::Write;

use crate::dataframe::ModelFrame;
use crate::estimators::EstimationResult;
use crate::numfmt::format_compact;

const TITLE: &str = "Complete Subset Model Averaging 2SLS Regression";

fn rule() -> String {
    "-".repeat(78)
}

fn split_rule() -> String {
    format!("{}+{}", "-".repeat(13), "-".repeat(64))
}

fn label(name: &str) -> String {
    if name.chars().count() > 12 {
        let tail: String = name
            .chars()
            .rev()
            .take(11)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        format!("~{tail}")
    } else {
        name.to_string()
    }
}

/// Fixed-width coefficient table with header statistics and footer.
pub fn render_report(result: &EstimationResult, frame: &ModelFrame) -> String {
    let num = |x: f64| format_compact(x, 7);
    let mut s = String::new();
    let pad = " ".repeat(TITLE.len() + 6);
    writeln!(s).unwrap();
    writeln!(s, "{TITLE:<53}Number of obs = {}", result.n).unwrap();
    writeln!(s, "{pad}Number of IVs = {}", frame.num_instruments()).unwrap();
    writeln!(s, "{pad}Root MSE      = {}", format_compact(result.rmse, 8)).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "{}", rule()).unwrap();
    writeln!(
        s,
        "{:>12} |      Coef.   Std. Err.      z    P>|z|     [95% Conf. Interval]",
        label(&frame.dep_name)
    )
    .unwrap();
    writeln!(s, "{}", split_rule()).unwrap();
    for (i, name) in result.names.iter().enumerate() {
        let (z, p) = (result.z[i], result.p[i]);
        writeln!(
            s,
            "{:>12} |{:>11}{:>11}{:>9}{:>8}{:>13}{:>12}",
            label(name),
            num(result.b[i]),
            num(result.se[i]),
            if z.is_finite() {
                format!("{z:.2}")
            } else {
                ".".into()
            },
            if p.is_finite() {
                format!("{p:.3}")
            } else {
                ".".into()
            },
            num(result.ci_low[i]),
            num(result.ci_high[i]),
        )
        .unwrap();
    }
    writeln!(s, "{}", rule()).unwrap();
    writeln!(s, "Instrumented : {}", frame.endo_names.join(" ")).unwrap();
    writeln!(s, "Instruments  : {}", frame.iv_names.join(" ")).unwrap();
    match result.k_opt {
        Some(k) => writeln!(s, "optimal k    : {k}").unwrap(),
        None => writeln!(s, "optimal k    : .").unwrap(),
    }
    writeln!(s, "{}", rule()).unwrap();
    s
}
