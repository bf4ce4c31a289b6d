use std::io::Write;

use super::{MetricsTable, Method, ScenarioInstance};
use crate::error::Result;

/// One row per (scenario, method, coefficient); coefficients are 1-based.
pub fn write_metrics_csv<W: Write>(w: W, tables: &[MetricsTable]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["scenario_id", "method", "coefficient", "bias", "mse", "coverage", "mc_se", "n_reps"])?;
    for t in tables {
        for r in &t.rows {
            wtr.write_record([
                r.scenario_id.clone(),
                r.method.name().to_string(),
                (r.coefficient + 1).to_string(),
                format!("{:.6}", r.bias),
                format!("{:.6}", r.mse),
                format!("{:.6}", r.coverage),
                format!("{:.6}", r.mc_se),
                r.n_reps.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.2}"),
        _ => "-".to_string(),
    }
}

/// Aligned text table: sample sizes as row blocks, a shared true-label column,
/// then naive and simex columns for each variant.
pub fn render_text_table(name: &str, results: &[(ScenarioInstance, MetricsTable)]) -> String {
    let mut variants: Vec<&str> = Vec::new();
    let mut ns: Vec<usize> = Vec::new();
    for (inst, _) in results {
        if !variants.contains(&inst.variant.as_str()) {
            variants.push(&inst.variant);
        }
        if !ns.contains(&inst.n) {
            ns.push(inst.n);
        }
    }
    let n_coef = results.first().map(|(i, _)| i.scenario.truth().len()).unwrap_or(0);

    let mut header = vec![String::new(), "True".to_string()];
    for v in &variants {
        header.push(format!("{v} Naive"));
        header.push(format!("{v} Simex"));
    }
    let mut body: Vec<Vec<String>> = Vec::new();
    for &n in &ns {
        let mut block = vec![format!("n = {n}")];
        block.resize(header.len(), String::new());
        body.push(block);
        let at = |variant: &str| {
            results
                .iter()
                .find(|(i, _)| i.n == n && i.variant == variant)
                .map(|(_, t)| t)
        };
        let first = results.iter().find(|(i, _)| i.n == n).map(|(_, t)| t);
        for metric in ["bias", "coverage"] {
            for j in 0..n_coef {
                let label = if n_coef == 1 {
                    format!("  {metric}")
                } else {
                    format!("  {metric} beta_{}", j + 1)
                };
                let pick = |t: Option<&MetricsTable>, m: Method| {
                    t.and_then(|t| t.get(m, j))
                        .map(|r| if metric == "bias" { r.bias } else { r.coverage })
                };
                let mut row = vec![label, cell(pick(first, Method::TrueLabels))];
                for v in &variants {
                    row.push(cell(pick(at(v), Method::Naive)));
                    row.push(cell(pick(at(v), Method::Simex)));
                }
                body.push(row);
            }
        }
    }

    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            std::iter::once(&header)
                .chain(body.iter())
                .map(|r| r[c].len())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let fmt_row = |r: &[String]| {
        r.iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    let mut out = format!("{name}\n{}\n{}\n{}\n", "=".repeat(total), fmt_row(&header), "-".repeat(total));
    for r in &body {
        out.push_str(&fmt_row(r));
        out.push('\n');
    }
    out
}
