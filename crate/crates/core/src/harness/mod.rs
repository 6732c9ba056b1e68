//! Layerwise training, readout, evaluation and ablation runs.

mod ablation;
mod data;
mod eval;
mod session;

pub use ablation::{run_ablation, AblationReport, AblationRow, Variant};
pub use data::{load_dataset, synthetic_dataset};
pub use eval::{evaluate, EvalOptions, EvalReport};
pub use session::{PhaseOutcome, PresentationLog, Session};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::plasticity::RewardSignal;
use crate::regulation::DecisionCounter;
use crate::snn::{SpikeEvent, SpikeRecord};
use crate::topology::DecisionLayer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Layer1,
    Layer2,
    Eval,
}

/// Moving average of applied |delta d| for one neuron (or one map).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FreezeTrace {
    pub ema: f64,
    pub updates: u32,
}

impl FreezeTrace {
    /// Folds in one presentation. Early updates are plain running means.
    pub fn observe(&mut self, abs_dd: f64, window: usize) {
        self.updates = self.updates.saturating_add(1);
        let a = (1.0 / window as f64).max(1.0 / self.updates as f64);
        self.ema += a * (abs_dd - self.ema);
    }
}

/// Frozen once a full window has been seen and the average change is
/// below `threshold`.
pub fn freeze_check(trace: &FreezeTrace, threshold: f64, window: usize) -> bool {
    trace.updates as usize >= window && trace.ema < threshold
}

/// Training progress that is not part of the network itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub phase: Phase,
    /// Completed epochs in the current phase.
    pub epoch: usize,
    pub layer1_epochs: usize,
    pub layer1_converged: bool,
    pub layer2_converged: bool,
    pub presentations: u64,
    pub rng: ChaCha8Rng,
    /// One trace per conv map.
    pub conv_freeze: Vec<FreezeTrace>,
    /// One trace per decision neuron.
    pub decision_freeze: Vec<FreezeTrace>,
    pub decisions: DecisionCounter,
    /// Presentations in which some class group exceeded the gate limit.
    pub gate_violations: u64,
}

impl TrainState {
    pub fn new(seed: u64, n_maps: usize, n_decision: usize, n_classes: usize, window: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(9);
        Self {
            phase: Phase::Layer1,
            epoch: 0,
            layer1_epochs: 0,
            layer1_converged: false,
            layer2_converged: false,
            presentations: 0,
            rng,
            conv_freeze: vec![FreezeTrace::default(); n_maps],
            decision_freeze: vec![FreezeTrace::default(); n_decision],
            decisions: DecisionCounter::new(n_classes, window),
            gate_violations: 0,
        }
    }
}

/// Readout of one presentation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// `None` when no decision neuron fired.
    pub predicted: Option<usize>,
    pub counts: Vec<u32>,
    /// Reward used for learning (training only).
    pub reward: Option<f64>,
}

/// Spike count and first spike per class group.
pub fn class_activity(spikes: &[SpikeEvent], layer: &DecisionLayer) -> (Vec<u32>, Vec<Option<u32>>) {
    let mut counts = vec![0; layer.n_classes];
    let mut first = vec![None; layer.n_classes];
    for s in spikes {
        let c = layer.class_of(s.neuron as usize);
        counts[c] += 1;
        if first[c].is_none_or(|f| s.t < f) {
            first[c] = Some(s.t);
        }
    }
    (counts, first)
}

/// Class with the most spikes; ties go to the earliest first spike, then
/// the lowest class index. All-zero counts abstain.
pub fn majority_vote(counts: &[u32], first_spike: &[Option<u32>]) -> Verdict {
    let best = counts.iter().copied().max().unwrap_or(0);
    let predicted = if best == 0 {
        None
    } else {
        (0..counts.len())
            .filter(|&c| counts[c] == best)
            .min_by_key(|&c| (first_spike[c].unwrap_or(u32::MAX), c))
    };
    Verdict {
        predicted,
        counts: counts.to_vec(),
        reward: None,
    }
}

/// Unclamped reward `kappa * (S_target - S_nontarget)`.
pub fn raw_reward(counts: &[u32], target: usize, kappa: f64) -> f64 {
    let s_target = counts[target] as f64;
    let s_other: f64 = counts
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != target)
        .map(|(_, &n)| n as f64)
        .sum();
    kappa * (s_target - s_other)
}

pub fn compute_reward(record: &SpikeRecord, layer: &DecisionLayer, target: usize, kappa: f64) -> RewardSignal {
    let (counts, _) = class_activity(&record.decision, layer);
    RewardSignal::new(raw_reward(&counts, target, kappa))
}

/// Largest number of distinct emitting neurons in any class group.
pub fn max_active_per_group(spikes: &[SpikeEvent], layer: &DecisionLayer) -> usize {
    let mut seen = vec![false; layer.n_neurons()];
    let mut active = vec![0usize; layer.n_classes];
    for s in spikes {
        let j = s.neuron as usize;
        if !seen[j] {
            seen[j] = true;
            active[layer.class_of(j)] += 1;
        }
    }
    active.into_iter().max().unwrap_or(0)
}
