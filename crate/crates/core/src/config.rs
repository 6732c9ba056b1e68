//! Run configuration: one serialisable record holds every constant of a
//! run. Unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::events::SyntheticSpec;
use crate::plasticity::PlasticityParams;
use crate::regulation::{HomeostasisParams, RegulationParams};
use crate::snn::LifParams;

/// Mechanisms that can be switched off for ablations. All of them act on
/// the decision layer; layer-1 training is unaffected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    /// Intervallic homeostasis on neural activity.
    Homeo,
    /// Intervallic threshold adaptation.
    Threshold,
    /// Homeostasis on decision frequencies.
    DecisionHomeo,
    /// Per-group earliest-spike gate.
    Decentralize,
    /// Recurrent synapses inside the decision layer.
    Lateral,
    /// Delay plasticity (delays stay at their initial values).
    DelayLearning,
    /// Dedicated inhibitory rules; when disabled inhibitory synapses learn
    /// with the excitatory rules.
    InhibitoryRules,
}

impl Mechanism {
    pub const ALL: [Mechanism; 7] = [
        Mechanism::Homeo,
        Mechanism::Threshold,
        Mechanism::DecisionHomeo,
        Mechanism::Decentralize,
        Mechanism::Lateral,
        Mechanism::DelayLearning,
        Mechanism::InhibitoryRules,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Homeo => "homeo",
            Mechanism::Threshold => "threshold",
            Mechanism::DecisionHomeo => "decision-homeo",
            Mechanism::Decentralize => "decentralize",
            Mechanism::Lateral => "lateral",
            Mechanism::DelayLearning => "delay-learning",
            Mechanism::InhibitoryRules => "inhibitory-rules",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("disabled", format!("unknown mechanism `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    /// Decision classes (C).
    pub n_classes: usize,
    /// Decision neurons per class (N).
    pub per_class: usize,
    pub n_maps: usize,
    /// (kh, kw)
    pub kernel: (usize, usize),
    pub stride: usize,
    /// Pooling window (ph, pw); the stride equals the window.
    pub pool: (usize, usize),
    /// Largest synaptic delay in bins.
    pub d_max: usize,
    /// Fraction of decision neurons tagged inhibitory.
    pub inhibitory_fraction: f64,
    /// Probability of a directed lateral synapse between two decision neurons.
    pub p_lateral: f64,
    pub conv_w_init: (f64, f64),
    pub forward_w_init: (f64, f64),
    pub lateral_w_init: (f64, f64),
    /// Initial magnitudes of inhibitory weights (stored negated).
    pub inhibitory_w_init: (f64, f64),
    /// Smallest lateral delay; lateral spikes land in a later bin.
    pub lateral_d_min: usize,
    /// When set, every decision-layer delay starts at this value.
    #[serde(default)]
    pub fixed_decision_delay: Option<f64>,
    /// Initial decision-layer threshold; defaults to `lif.theta_init`.
    #[serde(default)]
    pub decision_theta_init: Option<f64>,
    /// Bins simulated after the last input frame so delayed spikes land.
    pub tail_bins: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            per_class: 8,
            n_maps: 16,
            kernel: (5, 5),
            stride: 1,
            pool: (4, 4),
            d_max: 20,
            inhibitory_fraction: 0.2,
            p_lateral: 0.1,
            conv_w_init: (0.1, 0.5),
            forward_w_init: (0.0, 0.3),
            lateral_w_init: (0.0, 0.3),
            inhibitory_w_init: (0.1, 0.5),
            lateral_d_min: 1,
            fixed_decision_delay: None,
            decision_theta_init: None,
            tail_bins: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub layer1_max_epochs: usize,
    pub layer2_max_epochs: usize,
    /// Reward increment per decision spike.
    pub kappa: f64,
    /// Presentations in the freeze detector's averaging window.
    pub freeze_window: usize,
    /// Freeze when the averaged |delta d| drops below this fraction of d_max.
    pub freeze_fraction: f64,
    /// Reshuffle the training set every epoch.
    pub shuffle: bool,
    /// Write a checkpoint every K epochs (phase boundaries always).
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    /// Present only the first `x` frames of every sample.
    #[serde(default)]
    pub limit_frames: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            layer1_max_epochs: 10,
            layer2_max_epochs: 30,
            kappa: 0.05,
            freeze_window: 50,
            freeze_fraction: 1e-3,
            shuffle: true,
            checkpoint_every: None,
            limit_frames: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    /// A dataset file written by `ingest`.
    File(String),
    /// Generated train/test splits.
    Synthetic {
        spec: SyntheticSpec,
        train_per_class: usize,
        test_per_class: usize,
        /// Per-class training counts overriding `train_per_class`.
        #[serde(default)]
        train_counts: Option<Vec<usize>>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub lif: LifParams,
    pub topology: TopologyConfig,
    /// Layer-1 rule parameters, and layer 2 unless overridden below.
    pub plasticity: PlasticityParams,
    /// Decision-layer rule parameters.
    #[serde(default)]
    pub decision_plasticity: Option<PlasticityParams>,
    pub regulation: RegulationParams,
    pub training: TrainingConfig,
    #[serde(default)]
    pub disabled: BTreeSet<Mechanism>,
    #[serde(default)]
    pub dataset: Option<DatasetSource>,
}

impl RunConfig {
    /// Desk-scale preset for the moving-bar task: 8x8 grid, 50 bins, three
    /// classes, sixteen 2x2 kernels pooled 2x2, strong lateral inhibition and
    /// a decision layer that only learns from causal pairs.
    pub fn synthetic() -> Self {
        let spec = SyntheticSpec::moving_bars(3, (8, 8), 50, 4, 0.01, 1);
        let plasticity = PlasticityParams {
            epsilon: 0.0,
            a_n: 0.08,
            ..PlasticityParams::default()
        };
        let reg = RegulationParams::default();
        RunConfig {
            lif: LifParams {
                theta_init: 2.0,
                ..LifParams::default()
            },
            topology: TopologyConfig {
                n_classes: 3,
                per_class: 8,
                n_maps: 16,
                kernel: (2, 2),
                pool: (2, 2),
                conv_w_init: (0.3, 0.7),
                decision_theta_init: Some(5.0),
                p_lateral: 0.5,
                inhibitory_fraction: 0.5,
                inhibitory_w_init: (0.5, 1.0),
                ..TopologyConfig::default()
            },
            decision_plasticity: Some(PlasticityParams {
                a_n: 0.0,
                tau_p: 10.0,
                ..plasticity.clone()
            }),
            plasticity,
            regulation: RegulationParams {
                homeostasis: HomeostasisParams {
                    r_min: 0.02,
                    r_max: 1.0,
                    ..reg.homeostasis.clone()
                },
                theta_ceil: 30.0,
                decision_lambda_w: 0.001,
                decision_lambda_d: 0.01,
                ..reg
            },
            training: TrainingConfig {
                kappa: 0.1,
                ..TrainingConfig::default()
            },
            dataset: Some(DatasetSource::Synthetic {
                spec,
                train_per_class: 50,
                test_per_class: 20,
                train_counts: None,
            }),
            ..RunConfig::default()
        }
    }

    pub fn layer2_plasticity(&self) -> &PlasticityParams {
        self.decision_plasticity.as_ref().unwrap_or(&self.plasticity)
    }

    pub fn enabled(&self, m: Mechanism) -> bool {
        !self.disabled.contains(&m)
    }

    pub fn disable(mut self, m: Mechanism) -> Self {
        self.disabled.insert(m);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        if t.n_classes < 2 {
            return Err(Error::config("topology.n_classes", "need at least 2 classes"));
        }
        if t.per_class == 0 {
            return Err(Error::config("topology.per_class", "must be >= 1"));
        }
        if t.n_maps == 0 {
            return Err(Error::config("topology.n_maps", "must be >= 1"));
        }
        if t.kernel.0 == 0 || t.kernel.1 == 0 {
            return Err(Error::config("topology.kernel", "must be positive"));
        }
        if t.stride == 0 {
            return Err(Error::config("topology.stride", "must be >= 1"));
        }
        if t.pool.0 == 0 || t.pool.1 == 0 {
            return Err(Error::config("topology.pool", "must be positive"));
        }
        if !(0.0..=1.0).contains(&t.inhibitory_fraction) {
            return Err(Error::config("topology.inhibitory_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&t.p_lateral) {
            return Err(Error::config("topology.p_lateral", "must lie in [0, 1]"));
        }
        if t.lateral_d_min == 0 || t.lateral_d_min > t.d_max {
            return Err(Error::config("topology.lateral_d_min", "must lie in [1, d_max]"));
        }
        for (name, (lo, hi)) in [
            ("topology.conv_w_init", t.conv_w_init),
            ("topology.forward_w_init", t.forward_w_init),
            ("topology.lateral_w_init", t.lateral_w_init),
            ("topology.inhibitory_w_init", t.inhibitory_w_init),
        ] {
            if !(0.0 <= lo && lo <= hi) {
                return Err(Error::config(name, "need 0 <= lo <= hi"));
            }
        }
        if let Some(d) = t.fixed_decision_delay {
            if !(0.0..=t.d_max as f64).contains(&d) {
                return Err(Error::config("topology.fixed_decision_delay", "outside [0, d_max]"));
            }
        }
        if !(self.lif.tau_m > 0.0) {
            return Err(Error::config("lif.tau_m", "must be > 0"));
        }
        if matches!(self.topology.decision_theta_init, Some(t) if !(t > 0.0)) {
            return Err(Error::config("topology.decision_theta_init", "must be > 0"));
        }
        if !(self.lif.theta_init > 0.0) {
            return Err(Error::config("lif.theta_init", "must be > 0"));
        }
        if self.training.freeze_window == 0 {
            return Err(Error::config("training.freeze_window", "must be >= 1"));
        }
        self.plasticity.validate()?;
        if let Some(p) = &self.decision_plasticity {
            p.validate()?;
        }
        self.regulation.validate()?;
        if let Some(DatasetSource::Synthetic { spec, .. }) = &self.dataset {
            spec.validate()?;
            if spec.n_classes != t.n_classes {
                return Err(Error::config(
                    "dataset.synthetic.spec.n_classes",
                    "differs from topology.n_classes",
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Applies `a.b.c=value` overrides. Values parse as JSON, falling back
    /// to a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut root = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::config(o, "expected key=value"))?;
            let value: Value =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut node = &mut root;
            let parts: Vec<&str> = key.split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let obj = node
                    .as_object_mut()
                    .ok_or_else(|| Error::config(key, "path runs through a non-object"))?;
                if i + 1 == parts.len() {
                    if !obj.contains_key(*part) {
                        return Err(Error::config(key, "unknown key"));
                    }
                    obj.insert(part.to_string(), value.clone());
                    break;
                }
                node = obj
                    .get_mut(*part)
                    .ok_or_else(|| Error::config(key, "unknown key"))?;
            }
        }
        let c: RunConfig = serde_json::from_value(root)?;
        c.validate()?;
        Ok(c)
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex_digest(json.as_bytes())
    }

    /// Hash over the fields that shape the network; runs that differ only in
    /// training schedule or ablation switches share it.
    pub fn architecture_hash(&self) -> String {
        let json = serde_json::to_string(&(&self.topology, &self.lif))
            .expect("config serialises");
        hex_digest(json.as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        RunConfig::synthetic().validate().unwrap();
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let c = RunConfig::synthetic().disable(Mechanism::Lateral);
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());

        let mut v: Value = serde_json::from_str(&c.to_json()).unwrap();
        v["plasticity"]["bogus"] = Value::from(1);
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = RunConfig::default()
            .with_overrides(&["plasticity.a_p=0.2", "seed=9", "disabled=[\"homeo\"]"])
            .unwrap();
        assert_eq!(c.plasticity.a_p, 0.2);
        assert_eq!(c.seed, 9);
        assert!(!c.enabled(Mechanism::Homeo));
        assert!(RunConfig::default().with_overrides(&["plasticity.nope=1"]).is_err());
        assert!(RunConfig::default().with_overrides(&["topology.n_classes=1"]).is_err());
    }

    #[test]
    fn invalid_fields_named() {
        let mut c = RunConfig::default();
        c.topology.per_class = 0;
        match c.validate().unwrap_err() {
            Error::InvalidConfig { field, .. } => assert_eq!(field, "topology.per_class"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn mechanism_names_parse() {
        for m in Mechanism::ALL {
            assert_eq!(Mechanism::parse(m.name()).unwrap(), m);
        }
        assert!(Mechanism::parse("nope").is_err());
    }
}
