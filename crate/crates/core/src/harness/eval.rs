use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Mechanism, RunConfig};
use crate::error::{Error, Result};
use crate::events::FrameSequence;
use crate::snn::{Layer, SpikeRecord};
use crate::topology::{run_presentation, Network, Scratch, SimOptions};

use super::{class_activity, majority_vote, max_active_per_group};

pub(crate) fn decision_sim_options(cfg: &RunConfig, eval: bool, limit_frames: Option<usize>) -> SimOptions {
    let gate_on =
        cfg.enabled(Mechanism::Decentralize) && (!eval || cfg.regulation.decentralize_in_eval);
    SimOptions {
        decision: true,
        lateral: cfg.enabled(Mechanism::Lateral),
        gate: gate_on.then_some(cfg.regulation.dc_upper),
        limit_frames,
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalOptions {
    /// Present only the first frames of every sample.
    pub limit_frames: Option<usize>,
    /// Keep every spike record in the report.
    pub keep_records: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub correct: usize,
    pub abstained: usize,
    /// Abstentions count as errors.
    pub accuracy: f64,
    /// Rows are true classes; the last column counts abstentions.
    pub confusion: Vec<Vec<usize>>,
    /// How often each class was predicted.
    pub predicted_counts: Vec<usize>,
    pub verdicts: Vec<Option<usize>>,
    /// Total spikes per decision neuron over the whole set.
    pub neuron_spikes: Vec<u64>,
    /// Largest number of emitting neurons seen in one class group.
    pub max_active_per_group: usize,
    /// Gated threshold crossings.
    pub suppressed: u64,
    #[serde(skip)]
    pub records: Vec<SpikeRecord>,
}

impl EvalReport {
    /// Largest over smallest predicted-class frequency, with add-one
    /// smoothing so a never-predicted class gives a finite ratio.
    pub fn balance_ratio(&self) -> f64 {
        let max = self.predicted_counts.iter().copied().max().unwrap_or(0) as f64;
        let min = self.predicted_counts.iter().copied().min().unwrap_or(0) as f64;
        (max + 1.0) / (min + 1.0)
    }
}

/// Classifies every sample without touching the network. Samples are
/// simulated in parallel; results are merged in sample order.
pub fn evaluate(
    net: &Network,
    config: &RunConfig,
    samples: &[FrameSequence],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let sim = decision_sim_options(config, true, opts.limit_frames);
    let records: Vec<Result<SpikeRecord>> = samples
        .par_iter()
        .map_init(
            || Scratch::new(net),
            |scratch, x| run_presentation(net, x, &sim, scratch),
        )
        .collect();

    let dec = &net.decision;
    let c = dec.n_classes;
    let mut report = EvalReport {
        n_samples: samples.len(),
        correct: 0,
        abstained: 0,
        accuracy: 0.0,
        confusion: vec![vec![0; c + 1]; c],
        predicted_counts: vec![0; c],
        verdicts: Vec::with_capacity(samples.len()),
        neuron_spikes: vec![0; dec.n_neurons()],
        max_active_per_group: 0,
        suppressed: 0,
        records: Vec::new(),
    };
    for (x, rec) in samples.iter().zip(records) {
        let rec = rec?;
        let (counts, first) = class_activity(&rec.decision, dec);
        let v = majority_vote(&counts, &first);
        let label = x.label as usize;
        if label >= c {
            return Err(Error::InvalidArgument(format!("label {label} outside {c} classes")));
        }
        match v.predicted {
            Some(p) => {
                report.predicted_counts[p] += 1;
                report.confusion[label][p] += 1;
                if p == label {
                    report.correct += 1;
                }
            }
            None => {
                report.abstained += 1;
                report.confusion[label][c] += 1;
            }
        }
        for (total, n) in report
            .neuron_spikes
            .iter_mut()
            .zip(rec.counts(Layer::Decision, dec.n_neurons()))
        {
            *total += n as u64;
        }
        report.max_active_per_group = report.max_active_per_group.max(max_active_per_group(&rec.decision, dec));
        report.suppressed += rec.suppressed as u64;
        report.verdicts.push(v.predicted);
        if opts.keep_records {
            report.records.push(rec);
        }
    }
    report.accuracy = report.correct as f64 / report.n_samples as f64;
    Ok(report)
}
