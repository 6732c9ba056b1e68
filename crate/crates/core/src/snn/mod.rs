//! Clock-driven LIF dynamics and delayed spike delivery.
//!
//! One simulation step is one frame bin (`dt = 1`). Synaptic delays are
//! whole bins in `[0, d_max]`, realised by a ring of per-bin input
//! accumulators.

mod delay_buffer;
mod record;

pub use delay_buffer::DelayBuffer;
pub use record::{Layer, SpikeEvent, SpikeRecord};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeuronKind {
    Excitatory,
    Inhibitory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifParams {
    /// Membrane time constant in bins.
    pub tau_m: f64,
    pub v_reset: f64,
    /// Bins after a spike during which input is ignored.
    pub t_ref: u32,
    pub theta_init: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            tau_m: 10.0,
            v_reset: 0.0,
            t_ref: 1,
            theta_init: 1.0,
        }
    }
}

impl LifParams {
    /// Per-bin membrane retention `exp(-1 / tau_m)`.
    pub fn decay(&self) -> f64 {
        (-1.0 / self.tau_m).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub v: f64,
    pub theta: f64,
    pub last_spike: Option<u32>,
    pub refractory_until: Option<u32>,
    pub kind: NeuronKind,
    /// Short-horizon moving average of spikes per presentation.
    pub activity_trace: f64,
    /// Long-horizon average used by threshold adaptation.
    pub activity_long: f64,
    /// Presentations folded into the activity averages.
    pub observed: u32,
    pub frozen: bool,
}

impl NeuronState {
    pub fn new(kind: NeuronKind, theta: f64) -> Self {
        Self {
            v: 0.0,
            theta,
            last_spike: None,
            refractory_until: None,
            kind,
            activity_trace: 0.0,
            activity_long: 0.0,
            observed: 0,
            frozen: false,
        }
    }

    /// Clears per-presentation dynamics; learned and regulated state stays.
    pub fn reset_dynamics(&mut self, v_reset: f64) {
        self.v = v_reset;
        self.last_spike = None;
        self.refractory_until = None;
    }

    pub fn is_refractory(&self, t: u32) -> bool {
        self.refractory_until.is_some_and(|r| t <= r)
    }

    /// Folds one presentation's spike count into both activity averages.
    /// The first observations are plain running means, so the averages do
    /// not start biased toward zero.
    pub fn observe_activity(&mut self, count: f64, short_horizon: f64, long_horizon: f64) {
        self.observed = self.observed.saturating_add(1);
        let n = self.observed as f64;
        let a_short = (1.0 / short_horizon).max(1.0 / n);
        let a_long = (1.0 / long_horizon).max(1.0 / n);
        self.activity_trace += a_short * (count - self.activity_trace);
        self.activity_long += a_long * (count - self.activity_long);
    }
}

/// Advances one neuron by one bin. Returns whether it crossed threshold; a
/// crossing always resets the membrane and starts the refractory window.
pub fn lif_step(state: &mut NeuronState, input: f64, t: u32, params: &LifParams) -> bool {
    lif_step_with_decay(state, input, t, params, params.decay())
}

#[inline]
pub(crate) fn lif_step_with_decay(
    state: &mut NeuronState,
    input: f64,
    t: u32,
    params: &LifParams,
    decay: f64,
) -> bool {
    if state.is_refractory(t) {
        return false;
    }
    state.v = state.v * decay + input;
    if state.v >= state.theta {
        state.v = params.v_reset;
        state.refractory_until = Some(t + params.t_ref);
        state.last_spike = Some(t);
        true
    } else {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn neuron() -> NeuronState {
        NeuronState::new(NeuronKind::Excitatory, 1.0)
    }

    #[test]
    fn rest_stays_at_rest() {
        let mut n = neuron();
        assert!(!lif_step(&mut n, 0.0, 0, &LifParams::default()));
        assert_eq!(n.v, 0.0);
    }

    #[test]
    fn threshold_input_spikes_and_resets() {
        let mut n = neuron();
        assert!(lif_step(&mut n, 1.0, 3, &LifParams::default()));
        assert_eq!(n.v, 0.0);
        assert_eq!(n.last_spike, Some(3));
        assert_eq!(n.refractory_until, Some(4));
    }

    #[test]
    fn leak_matches_closed_form() {
        let mut n = neuron();
        n.v = 1.0;
        n.theta = 2.0;
        lif_step(&mut n, 0.0, 0, &LifParams::default());
        assert_relative_eq!(n.v, 0.904_837_418_035_959_6, epsilon = 1e-15);
    }

    #[test]
    fn refractory_window_ignores_input() {
        let p = LifParams { t_ref: 2, ..Default::default() };
        let mut n = neuron();
        assert!(lif_step(&mut n, 5.0, 0, &p));
        assert!(!lif_step(&mut n, 5.0, 1, &p));
        assert!(!lif_step(&mut n, 5.0, 2, &p));
        assert!(lif_step(&mut n, 5.0, 3, &p));
    }

    #[test]
    fn activity_average_warms_up_then_tracks() {
        let mut n = neuron();
        n.observe_activity(4.0, 20.0, 100.0);
        assert_eq!(n.activity_trace, 4.0);
        assert_eq!(n.activity_long, 4.0);
        n.observe_activity(0.0, 20.0, 100.0);
        assert_eq!(n.activity_trace, 2.0);
        for _ in 0..500 {
            n.observe_activity(1.0, 20.0, 100.0);
        }
        assert_relative_eq!(n.activity_trace, 1.0, epsilon = 1e-9);
        assert!(n.activity_trace >= 0.0 && n.activity_long >= 0.0);
    }
}
