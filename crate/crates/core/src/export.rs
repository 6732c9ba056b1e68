//! CSV exports of learned parameters and evaluation results.
//!
//! Every file starts with a `# config <hash>` comment line naming the run
//! configuration that produced it.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::harness::{AblationReport, EvalReport};
use crate::snn::NeuronKind;
use crate::topology::Network;

fn writer(path: &Path, config_hash: &str) -> Result<csv::Writer<File>> {
    let mut f = File::create(path)?;
    writeln!(f, "# config {config_hash}")?;
    Ok(csv::Writer::from_writer(f))
}

/// One weight grid and one delay grid per (map, polarity), named
/// `map{m}_p{p}_{weights|delays}.csv`.
pub fn write_kernels(net: &Network, dir: &Path, config_hash: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let conv = &net.conv;
    for m in 0..conv.n_maps {
        for p in 0..conv.in_shape.0 {
            for (delays, tag) in [(false, "weights"), (true, "delays")] {
                let mut w = writer(&dir.join(format!("map{m}_p{p}_{tag}.csv")), config_hash)?;
                for row in conv.kernel_grid(m, p, delays) {
                    w.write_record(row.iter().map(|v| v.to_string()))?;
                }
                w.flush()?;
            }
        }
    }
    Ok(())
}

/// Forward and lateral synapses of the decision layer, one row each.
pub fn write_decision_synapses(net: &Network, path: &Path, config_hash: &str) -> Result<()> {
    let mut w = writer(path, config_hash)?;
    w.write_record(["kind", "pre", "post", "pre_kind", "weight", "delay"])?;
    let dec = &net.decision;
    for u in 0..dec.n_inputs {
        for j in 0..dec.n_neurons() {
            let i = dec.forward_index(u, j);
            w.write_record([
                "forward".to_string(),
                u.to_string(),
                j.to_string(),
                "excitatory".to_string(),
                dec.forward_w[i].to_string(),
                dec.forward_d[i].to_string(),
            ])?;
        }
    }
    for l in &dec.lateral {
        let kind = match dec.kind(l.pre as usize) {
            NeuronKind::Excitatory => "excitatory",
            NeuronKind::Inhibitory => "inhibitory",
        };
        w.write_record([
            "lateral".to_string(),
            l.pre.to_string(),
            l.post.to_string(),
            kind.to_string(),
            l.w.to_string(),
            l.d.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Confusion matrix with an `abstain` column.
pub fn write_confusion(report: &EvalReport, path: &Path, config_hash: &str) -> Result<()> {
    let mut w = writer(path, config_hash)?;
    let c = report.confusion.len();
    let mut header = vec!["true".to_string()];
    header.extend((0..c).map(|k| k.to_string()));
    header.push("abstain".into());
    w.write_record(&header)?;
    for (k, row) in report.confusion.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-neuron spike totals with class and kind.
pub fn write_activity(net: &Network, report: &EvalReport, path: &Path, config_hash: &str) -> Result<()> {
    let mut w = writer(path, config_hash)?;
    w.write_record(["neuron", "class", "kind", "threshold", "spikes"])?;
    let dec = &net.decision;
    for (j, n) in dec.neurons.iter().enumerate() {
        let kind = match n.kind {
            NeuronKind::Excitatory => "excitatory",
            NeuronKind::Inhibitory => "inhibitory",
        };
        w.write_record([
            j.to_string(),
            dec.class_of(j).to_string(),
            kind.to_string(),
            n.theta.to_string(),
            report.neuron_spikes[j].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Accuracy against the number of presented frames.
pub fn write_frames_curve(points: &[(usize, f64)], path: &Path, config_hash: &str) -> Result<()> {
    let mut w = writer(path, config_hash)?;
    w.write_record(["frames", "accuracy"])?;
    for (x, acc) in points {
        w.write_record([x.to_string(), acc.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per variant and seed.
pub fn write_ablation_table(report: &AblationReport, path: &Path) -> Result<()> {
    let mut w = writer(path, &report.base_config_hash)?;
    w.write_record([
        "variant",
        "seed",
        "config_hash",
        "train_accuracy",
        "test_accuracy",
        "layer2_epochs",
        "converged",
        "mean_inhibitory_weight",
        "error",
    ])?;
    for row in &report.rows {
        if let Some(e) = &row.error {
            w.write_record([&row.name, "", &row.config_hash, "", "", "", "", "", e])?;
        }
        for r in &row.runs {
            w.write_record([
                row.name.clone(),
                r.seed.to_string(),
                row.config_hash.clone(),
                r.train.accuracy.to_string(),
                r.test.accuracy.to_string(),
                r.layer2_epochs.to_string(),
                r.converged.to_string(),
                r.mean_inhibitory_weight.map(|x| x.to_string()).unwrap_or_default(),
                String::new(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
