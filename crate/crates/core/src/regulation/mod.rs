//! Activity regulation: interval homeostasis, threshold adaptation,
//! decision-frequency homeostasis and the per-group decentralization gate.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target activity band and step sizes for interval homeostasis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomeostasisParams {
    /// Spikes per presentation (moving average).
    pub r_min: f64,
    pub r_max: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub lambda_w: f64,
    pub lambda_d: f64,
}

impl HomeostasisParams {
    fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.r_min >= 0.0 && self.r_min <= self.r_max && self.r_max > 0.0) {
            return Err(Error::config(format!("{prefix}.r_min"), "need 0 <= r_min <= r_max, r_max > 0"));
        }
        for (name, v) in [
            ("k_min", self.k_min),
            ("k_max", self.k_max),
            ("lambda_w", self.lambda_w),
            ("lambda_d", self.lambda_d),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(format!("{prefix}.{name}"), "must be >= 0"));
            }
        }
        Ok(())
    }

    /// Feedback gain K: negative when over-active, positive when
    /// under-active, exactly zero inside the band.
    pub fn gain(&self, r_obs: f64) -> f64 {
        if r_obs > self.r_max {
            self.k_max * (self.r_max - r_obs) / self.r_max
        } else if r_obs < self.r_min {
            self.k_min * (self.r_min - r_obs) / self.r_min
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulationParams {
    /// Band for decision neurons.
    pub homeostasis: HomeostasisParams,
    /// Band for convolutional map neurons, applied per map.
    pub conv_homeostasis: HomeostasisParams,
    pub theta_inc: f64,
    pub theta_dec: f64,
    pub theta_floor: f64,
    pub theta_ceil: f64,
    /// Raise the threshold of under-active neurons (and lower it for
    /// over-active ones) instead of the stabilizing direction.
    pub threshold_inverted: bool,
    pub decision_lambda_w: f64,
    pub decision_lambda_d: f64,
    /// Most neurons per class group allowed to emit in one presentation.
    pub dc_upper: usize,
    /// Moving-average horizon (presentations) for homeostasis.
    pub activity_horizon: f64,
    /// Longer horizon for threshold adaptation.
    pub threshold_horizon: f64,
    /// Presentations in the decision-count window; `None` means 10 per class.
    #[serde(default)]
    pub decision_window: Option<usize>,
    /// Keep the decentralization gate during evaluation.
    pub decentralize_in_eval: bool,
}

impl Default for RegulationParams {
    fn default() -> Self {
        Self {
            homeostasis: HomeostasisParams {
                r_min: 0.5,
                r_max: 6.0,
                k_min: 1.0,
                k_max: 1.0,
                lambda_w: 0.005,
                lambda_d: 0.05,
            },
            conv_homeostasis: HomeostasisParams {
                r_min: 0.2,
                r_max: 4.0,
                k_min: 1.0,
                k_max: 1.0,
                lambda_w: 0.005,
                lambda_d: 0.05,
            },
            theta_inc: 0.01,
            theta_dec: 0.01,
            theta_floor: 0.2,
            theta_ceil: 5.0,
            threshold_inverted: false,
            decision_lambda_w: 0.005,
            decision_lambda_d: 0.05,
            dc_upper: 2,
            activity_horizon: 20.0,
            threshold_horizon: 100.0,
            decision_window: None,
            decentralize_in_eval: true,
        }
    }
}

impl RegulationParams {
    pub fn validate(&self) -> Result<()> {
        self.homeostasis.validate("regulation.homeostasis")?;
        self.conv_homeostasis.validate("regulation.conv_homeostasis")?;
        for (name, v) in [
            ("regulation.theta_inc", self.theta_inc),
            ("regulation.theta_dec", self.theta_dec),
            ("regulation.decision_lambda_w", self.decision_lambda_w),
            ("regulation.decision_lambda_d", self.decision_lambda_d),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(name, "must be >= 0"));
            }
        }
        if !(self.theta_floor > 0.0 && self.theta_floor <= self.theta_ceil) {
            return Err(Error::config("regulation.theta_floor", "need 0 < floor <= ceil"));
        }
        if self.dc_upper == 0 {
            return Err(Error::config("regulation.dc_upper", "must be >= 1"));
        }
        if !(self.activity_horizon >= 1.0 && self.threshold_horizon >= 1.0) {
            return Err(Error::config("regulation.activity_horizon", "horizons must be >= 1"));
        }
        if self.decision_window == Some(0) {
            return Err(Error::config("regulation.decision_window", "must be >= 1"));
        }
        Ok(())
    }

    pub fn window_len(&self, n_classes: usize) -> usize {
        self.decision_window.unwrap_or(10 * n_classes)
    }

    /// Threshold step for a long-horizon activity estimate. Zero inside
    /// the band.
    pub fn threshold_step(&self, r_long: f64) -> f64 {
        let band = &self.homeostasis;
        let under = r_long < band.r_min;
        let over = r_long > band.r_max;
        match (under, over, self.threshold_inverted) {
            (true, _, false) => -self.theta_dec,
            (_, true, false) => self.theta_inc,
            (true, _, true) => self.theta_inc,
            (_, true, true) => -self.theta_dec,
            _ => 0.0,
        }
    }

    /// New threshold after adaptation, clamped to the allowed range.
    pub fn adapt_threshold(&self, theta: f64, r_long: f64) -> f64 {
        let step = self.threshold_step(r_long);
        if step == 0.0 {
            return theta;
        }
        (theta + step).clamp(self.theta_floor, self.theta_ceil)
    }
}

/// Per-synapse (delta w, delta d) from interval homeostasis.
pub fn homeo_interval_update(r_obs: f64, p: &HomeostasisParams) -> (f64, f64) {
    let k = p.gain(r_obs);
    (p.lambda_w * k, -p.lambda_d * k)
}

/// Decision-frequency gain for one class.
pub fn decision_gain(p_target: f64, p_observed: f64) -> f64 {
    (p_target - p_observed) / p_target
}

/// Per-synapse (delta w, delta d) on afferents of a class's neurons.
pub fn decision_homeo_update(p_target: f64, p_observed: f64, lambda_w: f64, lambda_d: f64) -> (f64, f64) {
    let k = decision_gain(p_target, p_observed);
    (lambda_w * k, -lambda_d * k)
}

/// Sliding window over recent verdicts (`None` = abstain).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionCounter {
    n_classes: usize,
    capacity: usize,
    window: VecDeque<Option<u32>>,
    counts: Vec<usize>,
}

impl DecisionCounter {
    pub fn new(n_classes: usize, capacity: usize) -> Self {
        Self {
            n_classes,
            capacity: capacity.max(1),
            window: VecDeque::with_capacity(capacity),
            counts: vec![0; n_classes],
        }
    }

    pub fn push(&mut self, verdict: Option<usize>) {
        if self.window.len() == self.capacity {
            if let Some(Some(c)) = self.window.pop_front() {
                self.counts[c as usize] -= 1;
            }
        }
        if let Some(c) = verdict {
            self.counts[c] += 1;
        }
        self.window.push_back(verdict.map(|c| c as u32));
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn decisions(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Expected count per class for a uniform class mix over the current
    /// window.
    pub fn p_target(&self) -> f64 {
        self.window.len() as f64 / self.n_classes as f64
    }
}

/// Online per-group gate. Neurons are admitted in the order their first
/// threshold crossing is reported; callers report crossings by bin, then
/// by neuron index, so ties go to the lowest index.
#[derive(Clone, Debug)]
pub struct DecentralizeGate {
    per_class: usize,
    limit: usize,
    active: Vec<Vec<usize>>,
}

impl DecentralizeGate {
    pub fn new(n_classes: usize, per_class: usize, dc_upper: usize) -> Self {
        Self {
            per_class,
            limit: dc_upper,
            active: vec![Vec::with_capacity(dc_upper.min(per_class)); n_classes],
        }
    }

    pub fn reset(&mut self) {
        for a in &mut self.active {
            a.clear();
        }
    }

    /// Whether neuron `j`'s crossing may emit.
    pub fn admit(&mut self, j: usize) -> bool {
        let group = &mut self.active[j / self.per_class];
        if group.contains(&j) {
            return true;
        }
        if group.len() < self.limit {
            group.push(j);
            true
        } else {
            false
        }
    }

    pub fn active(&self, class: usize) -> &[usize] {
        &self.active[class]
    }
}

/// Offline form of the gate for one group: indices (within the group) of
/// the `dc_upper` earliest first crossings, ties to the lowest index.
pub fn decentralize_gate(first_crossings: &[Option<u32>], dc_upper: usize) -> Vec<usize> {
    let mut order: Vec<(u32, usize)> = first_crossings
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.map(|t| (t, i)))
        .collect();
    order.sort_unstable();
    order.into_iter().take(dc_upper).map(|(_, i)| i).collect()
}
