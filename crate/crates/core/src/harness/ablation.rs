use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Mechanism, RunConfig};
use crate::error::Result;
use crate::events::Dataset;
use crate::topology::build_network;

use super::{evaluate, EvalOptions, EvalReport, Session};

/// Single-mechanism model variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Every mechanism on.
    Full,
    /// No interval homeostasis in the decision layer.
    NoHomeostasis,
    /// Inhibitory synapses learn with the excitatory rules.
    SharedRules,
    NoDecisionHomeostasis,
    NoLateral,
    /// All decision-layer delays fixed to one value.
    FixedDelays,
    /// Random initial delays, never learned.
    RandomFrozenDelays,
    NoDecentralization,
    NoThresholdAdaptation,
}

impl Variant {
    /// The default comparison set.
    pub const DEFAULT: [Variant; 8] = [
        Variant::Full,
        Variant::NoHomeostasis,
        Variant::SharedRules,
        Variant::NoDecisionHomeostasis,
        Variant::NoLateral,
        Variant::FixedDelays,
        Variant::RandomFrozenDelays,
        Variant::NoDecentralization,
    ];

    pub const ALL: [Variant; 9] = [
        Variant::Full,
        Variant::NoHomeostasis,
        Variant::SharedRules,
        Variant::NoDecisionHomeostasis,
        Variant::NoLateral,
        Variant::FixedDelays,
        Variant::RandomFrozenDelays,
        Variant::NoDecentralization,
        Variant::NoThresholdAdaptation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "M",
            Variant::NoHomeostasis => "M1",
            Variant::SharedRules => "M2",
            Variant::NoDecisionHomeostasis => "M3",
            Variant::NoLateral => "M4",
            Variant::FixedDelays => "M5",
            Variant::RandomFrozenDelays => "M6",
            Variant::NoDecentralization => "no-decentralization",
            Variant::NoThresholdAdaptation => "no-threshold",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Self::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }

    pub fn description(self) -> &'static str {
        match self {
            Variant::Full => "full model",
            Variant::NoHomeostasis => "no intervallic homeostasis",
            Variant::SharedRules => "shared excitatory/inhibitory rules",
            Variant::NoDecisionHomeostasis => "no decision homeostasis",
            Variant::NoLateral => "no lateral connections",
            Variant::FixedDelays => "fixed delays",
            Variant::RandomFrozenDelays => "random frozen delays",
            Variant::NoDecentralization => "no decentralization",
            Variant::NoThresholdAdaptation => "no threshold adaptation",
        }
    }

    /// Published (train, test) accuracy change in percentage points on the
    /// full gesture task, for side-by-side reporting.
    pub fn reference_delta(self) -> Option<(f64, f64)> {
        match self {
            Variant::Full => None,
            Variant::NoHomeostasis => Some((-0.5, -2.1)),
            Variant::SharedRules => Some((-1.98, -1.58)),
            Variant::NoDecisionHomeostasis => Some((-2.50, -3.68)),
            Variant::NoLateral => Some((-1.53, -1.58)),
            Variant::FixedDelays => Some((-1.85, -3.15)),
            Variant::RandomFrozenDelays => Some((-3.3, -3.68)),
            Variant::NoDecentralization => Some((-4.88, -7.39)),
            Variant::NoThresholdAdaptation => Some((-1.45, -3.16)),
        }
    }

    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let c = base.clone();
        match self {
            Variant::Full => c,
            Variant::NoHomeostasis => c.disable(Mechanism::Homeo),
            Variant::SharedRules => c.disable(Mechanism::InhibitoryRules),
            Variant::NoDecisionHomeostasis => c.disable(Mechanism::DecisionHomeo),
            Variant::NoLateral => c.disable(Mechanism::Lateral),
            Variant::FixedDelays => {
                let mut c = c.disable(Mechanism::DelayLearning);
                c.topology.fixed_decision_delay = Some(1.0);
                c
            }
            Variant::RandomFrozenDelays => c.disable(Mechanism::DelayLearning),
            Variant::NoDecentralization => c.disable(Mechanism::Decentralize),
            Variant::NoThresholdAdaptation => c.disable(Mechanism::Threshold),
        }
    }
}

/// Results of one variant on one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub train: EvalReport,
    pub test: EvalReport,
    pub layer2_epochs: usize,
    pub converged: bool,
    /// Mean |w| over inhibitory lateral synapses after training.
    pub mean_inhibitory_weight: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub name: String,
    pub description: String,
    pub config_hash: String,
    pub runs: Vec<SeedResult>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Percentage points relative to the full model (when it ran).
    pub delta_train: Option<f64>,
    pub delta_test: Option<f64>,
    pub reference_delta: Option<(f64, f64)>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub base_config_hash: String,
    pub seeds: Vec<u64>,
    pub layer1_epochs: Vec<usize>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }
}

fn mean_abs_inhibitory(net: &crate::topology::Network) -> Option<f64> {
    let w: Vec<f64> = net.decision.inhibitory_weights().map(f64::abs).collect();
    (!w.is_empty()).then(|| w.iter().sum::<f64>() / w.len() as f64)
}

fn run_variant(trained: &Session, variant: Variant, ds: &Dataset) -> Result<SeedResult> {
    let cfg = variant.apply(&trained.config);
    let mut net = build_network(&cfg, ds.shape)?;
    net.conv = trained.net.conv.clone();
    let mut s = Session::from_parts(cfg.clone(), net, Some(trained.state.clone()));
    s.begin_layer2();
    let out = s.train_layer2(&ds.train, cfg.training.layer2_max_epochs, &mut |_| {})?;
    let train = evaluate(&s.net, &cfg, &ds.train, &EvalOptions::default())?;
    let test = evaluate(&s.net, &cfg, &ds.test, &EvalOptions::default())?;
    Ok(SeedResult {
        seed: cfg.seed,
        train,
        test,
        layer2_epochs: out.epochs,
        converged: out.converged,
        mean_inhibitory_weight: mean_abs_inhibitory(&s.net),
    })
}

/// Trains layer 1 once per seed, then every variant's decision layer on
/// top of it. Variants run in parallel; a failing variant is reported in
/// its row and does not stop the others.
pub fn run_ablation(
    base: &RunConfig,
    ds: &Dataset,
    variants: &[Variant],
    seeds: &[u64],
) -> Result<AblationReport> {
    let trained: Vec<Session> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = RunConfig { seed, ..base.clone() };
            let mut s = Session::new(cfg.clone(), ds.shape)?;
            s.train_layer1(&ds.train, cfg.training.layer1_max_epochs, &mut |_| {})?;
            Ok(s)
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(Variant, usize)> = variants
        .iter()
        .flat_map(|&v| (0..seeds.len()).map(move |i| (v, i)))
        .collect();
    let results: Vec<Result<SeedResult>> = jobs
        .par_iter()
        .map(|&(v, i)| run_variant(&trained[i], v, ds))
        .collect();

    let mut rows = Vec::new();
    for &v in variants {
        let mut runs = Vec::new();
        let mut error = None;
        for ((jv, _), r) in jobs.iter().zip(&results) {
            if *jv != v {
                continue;
            }
            match r {
                Ok(r) => runs.push(r.clone()),
                Err(e) => error = Some(e.to_string()),
            }
        }
        let mean = |f: fn(&SeedResult) -> f64| {
            if runs.is_empty() {
                0.0
            } else {
                runs.iter().map(f).sum::<f64>() / runs.len() as f64
            }
        };
        rows.push(AblationRow {
            variant: v,
            name: v.name().to_string(),
            description: v.description().to_string(),
            config_hash: v.apply(base).hash(),
            train_accuracy: mean(|r| r.train.accuracy),
            test_accuracy: mean(|r| r.test.accuracy),
            runs,
            delta_train: None,
            delta_test: None,
            reference_delta: v.reference_delta(),
            error,
        });
    }
    if let Some(full) = rows.iter().find(|r| r.variant == Variant::Full && r.error.is_none()).cloned() {
        for r in rows.iter_mut().filter(|r| r.error.is_none()) {
            r.delta_train = Some(100.0 * (r.train_accuracy - full.train_accuracy));
            r.delta_test = Some(100.0 * (r.test_accuracy - full.test_accuracy));
        }
    }
    Ok(AblationReport {
        base_config_hash: base.hash(),
        seeds: seeds.to_vec(),
        layer1_epochs: trained.iter().map(|s| s.state.layer1_epochs).collect(),
        rows,
    })
}
