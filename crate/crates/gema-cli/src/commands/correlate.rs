use std::collections::BTreeMap;
use std::fs::File;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use gema_score::corpus::{load_annotations, load_scores};
use gema_score::stats::{
    CorrelationResult, PairedSamples, StatsError, kendall_tau_b, pearson_r, spearman_rho,
};

use crate::io_util::atomic_write;

#[derive(Args)]
pub struct CorrelateArgs {
    /// Score file produced by `gema score`.
    #[arg(long)]
    pub scores: PathBuf,
    /// Per-rater error annotations (CSV).
    #[arg(long)]
    pub annotations: PathBuf,
    /// Destination for the JSON report; the text table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct MetricReport {
    kendall_b: Option<CorrelationResult>,
    spearman: Option<CorrelationResult>,
    pearson: Option<CorrelationResult>,
}

#[derive(Serialize)]
struct CorrelationReport {
    joined_studies: usize,
    target: &'static str,
    metrics: BTreeMap<String, MetricReport>,
}

/// `Ok(result)` kept, a constant input reported as absent, anything else a
/// hard error.
fn run_stat(
    stat: fn(&PairedSamples) -> Result<CorrelationResult, StatsError>,
    samples: &PairedSamples,
) -> anyhow::Result<Option<CorrelationResult>> {
    match stat(samples) {
        Ok(result) => Ok(Some(result)),
        Err(StatsError::DegenerateInput { .. }) => Ok(None),
        Err(err) => Err(err.into()),
    }
}

fn cell_text(result: &Option<CorrelationResult>) -> String {
    match result {
        Some(r) => match r.p_value {
            Some(p) => format!("{:+.4} (p={:.3e})", r.coefficient, p),
            None => format!("{:+.4} (p=n/a)", r.coefficient),
        },
        None => "undefined".to_string(),
    }
}

/// Correlates every pipeline metric against the mean count of significant
/// errors the human raters assigned to each study.
pub fn run(args: CorrelateArgs) -> anyhow::Result<()> {
    let scores = load_scores(File::open(&args.scores)?)?;
    let annotations = load_annotations(File::open(&args.annotations)?)?;

    let mut per_study_errors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for record in &annotations {
        per_study_errors
            .entry(record.study_id.clone())
            .or_default()
            .push(f64::from(record.significant_errors));
    }
    let mean_errors: BTreeMap<String, f64> = per_study_errors
        .into_iter()
        .map(|(study, counts)| {
            let mean = counts.iter().sum::<f64>() / counts.len() as f64;
            (study, mean)
        })
        .collect();

    let mut ordered = scores.clone();
    ordered.sort_by(|a, b| a.study_id.cmp(&b.study_id));
    let mut target = Vec::new();
    let mut columns: BTreeMap<&str, Vec<f64>> = ["gema", "s_obj", "s_sub", "bleu1", "rouge_l", "meteor"]
        .into_iter()
        .map(|name| (name, Vec::new()))
        .collect();
    for record in &ordered {
        let Some(&errors) = mean_errors.get(&record.study_id) else {
            continue;
        };
        target.push(errors);
        for (name, value) in [
            ("gema", record.gema),
            ("s_obj", record.s_obj),
            ("s_sub", record.s_sub),
            ("bleu1", record.bleu1),
            ("rouge_l", record.rouge_l),
            ("meteor", record.meteor),
        ] {
            columns.get_mut(name).expect("column exists").push(value);
        }
    }
    let joined = target.len();
    if joined < 3 {
        anyhow::bail!(
            "only {joined} studies appear in both files; need at least 3 to correlate"
        );
    }

    const METRIC_ORDER: [&str; 6] = ["gema", "s_obj", "s_sub", "bleu1", "rouge_l", "meteor"];
    let mut metrics = BTreeMap::new();
    let mut table_rows = Vec::new();
    for name in METRIC_ORDER {
        let samples = PairedSamples::from_slices(&columns[name], &target)?;
        let report = MetricReport {
            kendall_b: run_stat(kendall_tau_b, &samples)?,
            spearman: run_stat(spearman_rho, &samples)?,
            pearson: run_stat(pearson_r, &samples)?,
        };
        table_rows.push((
            name,
            cell_text(&report.kendall_b),
            cell_text(&report.spearman),
            cell_text(&report.pearson),
        ));
        metrics.insert(name.to_string(), report);
    }

    println!(
        "correlation vs mean significant errors across {joined} studies"
    );
    println!(
        "{:<10} {:<22} {:<22} {:<22}",
        "metric", "kendall_b", "spearman", "pearson"
    );
    for (name, kendall, spearman, pearson) in &table_rows {
        println!("{name:<10} {kendall:<22} {spearman:<22} {pearson:<22}");
    }

    if let Some(out) = &args.out {
        let report = CorrelationReport {
            joined_studies: joined,
            target: "mean_significant_errors",
            metrics,
        };
        let mut bytes = serde_json::to_vec_pretty(&report)?;
        bytes.push(b'\n');
        atomic_write(out, &bytes)?;
    }
    Ok(())
}
