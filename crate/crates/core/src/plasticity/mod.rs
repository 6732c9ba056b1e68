//! Spike-timing update rules and their end-of-presentation application.
//!
//! Every rule is a pure function of one (pre, post) spike pair. Times are
//! in bins; `d` is the synapse's current (continuous) delay.

mod accumulator;

pub use accumulator::{pair_spikes, UpdateAccumulator};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snn::NeuronKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlasticityParams {
    pub a_p: f64,
    pub a_n: f64,
    pub tau_p: f64,
    pub tau_n: f64,
    pub b_p: f64,
    pub b_n: f64,
    pub sigma_p: f64,
    pub sigma_n: f64,
    /// Target lag between input arrival and the postsynaptic spike.
    pub epsilon: f64,
    /// Lower bound for excitatory weights.
    pub w_min_exc: f64,
    pub w_max: f64,
    /// Lower bound for inhibitory (negative) weights.
    pub w_inh_min: f64,
}

impl Default for PlasticityParams {
    fn default() -> Self {
        Self {
            a_p: 0.05,
            a_n: 0.05,
            tau_p: 5.0,
            tau_n: 5.0,
            b_p: 0.1,
            b_n: 0.1,
            sigma_p: 5.0,
            sigma_n: 5.0,
            epsilon: 1.0,
            w_min_exc: 0.0,
            w_max: 1.0,
            w_inh_min: -1.0,
        }
    }
}

impl PlasticityParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("plasticity.a_p", self.a_p),
            ("plasticity.a_n", self.a_n),
            ("plasticity.b_p", self.b_p),
            ("plasticity.b_n", self.b_n),
            ("plasticity.epsilon", self.epsilon),
            ("plasticity.w_min_exc", self.w_min_exc),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(name, "must be >= 0"));
            }
        }
        for (name, v) in [
            ("plasticity.tau_p", self.tau_p),
            ("plasticity.tau_n", self.tau_n),
            ("plasticity.sigma_p", self.sigma_p),
            ("plasticity.sigma_n", self.sigma_n),
        ] {
            if !(v > 0.0) {
                return Err(Error::config(name, "must be > 0"));
            }
        }
        if !(self.w_max >= self.w_min_exc) {
            return Err(Error::config("plasticity.w_max", "must be >= w_min_exc"));
        }
        if !(self.w_inh_min <= 0.0) {
            return Err(Error::config("plasticity.w_inh_min", "must be <= 0"));
        }
        Ok(())
    }

    /// Clamps a weight into the range allowed for its presynaptic kind.
    pub fn clamp_weight(&self, w: f64, kind: NeuronKind) -> f64 {
        match kind {
            NeuronKind::Excitatory => w.clamp(self.w_min_exc, self.w_max),
            NeuronKind::Inhibitory => w.clamp(self.w_inh_min, 0.0),
        }
    }
}

pub fn clamp_delay(d: f64, d_max: usize) -> f64 {
    d.clamp(0.0, d_max as f64)
}

/// Reward or punishment for one presentation, within [-1, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSignal(f64);

impl RewardSignal {
    pub const NONE: RewardSignal = RewardSignal(0.0);

    pub fn new(r: f64) -> Self {
        RewardSignal(if r.is_nan() { 0.0 } else { r.clamp(-1.0, 1.0) })
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Reward-modulated delay learning.
pub fn rdl_delta(t_pre: f64, t_post: f64, d: f64, r: f64, p: &PlasticityParams) -> f64 {
    let dt = t_post - t_pre - d - p.epsilon;
    if dt >= 0.0 {
        r * (-p.b_n * (-dt / p.sigma_n).exp())
    } else {
        r * (p.b_p * (dt / p.sigma_p).exp())
    }
}

/// Unsupervised delay learning: the reward-modulated rule at `r = 1`.
pub fn udl_delta(t_pre: f64, t_post: f64, d: f64, p: &PlasticityParams) -> f64 {
    rdl_delta(t_pre, t_post, d, 1.0, p)
}

pub fn stdp_delta(t_pre: f64, t_post: f64, d: f64, p: &PlasticityParams) -> f64 {
    let dt = t_post - t_pre - d;
    if dt >= 0.0 {
        p.a_p * (-dt / p.tau_p).exp()
    } else {
        -p.a_n * (dt / p.tau_n).exp()
    }
}

pub fn rstdp_exc_delta(t_pre: f64, t_post: f64, d: f64, r: f64, p: &PlasticityParams) -> f64 {
    r * stdp_delta(t_pre, t_post, d, p)
}

/// Applied to the signed (non-positive) weight: reward pushes it toward
/// zero, punishment deepens inhibition.
pub fn inh_rstdp_delta(t_pre: f64, t_post: f64, d: f64, r: f64, p: &PlasticityParams) -> f64 {
    let dt = t_post - t_pre - d;
    if dt >= 0.0 {
        r * p.a_p * (-dt / p.tau_p).exp()
    } else {
        r * (-p.a_n * (dt / p.tau_n).exp())
    }
}

/// Delay rule for inhibitory synapses. There is no target lag here.
pub fn inh_rdl_delta(t_pre: f64, t_post: f64, d: f64, r: f64, p: &PlasticityParams) -> f64 {
    let dt = t_post - t_pre - d;
    if dt >= 0.0 {
        r * p.b_n * (-dt / p.sigma_n).exp()
    } else {
        r * (-p.b_p * (dt / p.sigma_p).exp())
    }
}

/// Which pair of rules a synapse learns with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleSet {
    /// STDP plus UDL; reward is ignored.
    Unsupervised,
    /// R-STDP plus RDL.
    Reward,
    /// Inhibitory R-STDP plus inhibitory RDL.
    RewardInhibitory,
}

impl RuleSet {
    /// (delta w, delta d) for one pair.
    #[inline]
    pub fn deltas(self, t_pre: f64, t_post: f64, d: f64, r: f64, p: &PlasticityParams) -> (f64, f64) {
        match self {
            RuleSet::Unsupervised => (stdp_delta(t_pre, t_post, d, p), udl_delta(t_pre, t_post, d, p)),
            RuleSet::Reward => (
                rstdp_exc_delta(t_pre, t_post, d, r, p),
                rdl_delta(t_pre, t_post, d, r, p),
            ),
            RuleSet::RewardInhibitory => (
                inh_rstdp_delta(t_pre, t_post, d, r, p),
                inh_rdl_delta(t_pre, t_post, d, r, p),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p() -> PlasticityParams {
        PlasticityParams::default()
    }

    #[test]
    fn rdl_examples() {
        let p = PlasticityParams { b_n: 0.2, epsilon: 0.0, ..p() };
        assert_eq!(rdl_delta(0.0, 0.0, 0.0, 1.0, &p), -0.2);
        let p = PlasticityParams { b_p: 0.3, sigma_p: 5.0, epsilon: 0.0, ..p };
        assert_relative_eq!(rdl_delta(3.0, 0.0, 0.0, 1.0, &p), 0.164_643_490_828_207_93, max_relative = 1e-12);
    }

    #[test]
    fn stdp_examples() {
        let p = PlasticityParams { a_n: 0.1, tau_n: 4.0, ..p() };
        assert_eq!(stdp_delta(0.0, 0.0, 0.0, &p), p.a_p);
        assert_relative_eq!(stdp_delta(2.0, 0.0, 0.0, &p), -0.060_653_065_971_263_34, max_relative = 1e-12);
        assert!(stdp_delta(0.0, 1e6, 0.0, &p).abs() < 1e-300);
    }

    #[test]
    fn reward_stdp_signs() {
        let p = p();
        assert_eq!(rstdp_exc_delta(0.0, 3.0, 1.0, 0.0, &p), 0.0);
        assert!(rstdp_exc_delta(0.0, 3.0, 1.0, 1.0, &p) > 0.0);
        assert!(rstdp_exc_delta(0.0, 3.0, 1.0, -1.0, &p) < 0.0);
    }

    #[test]
    fn inhibitory_rules() {
        let p = p();
        assert_eq!(inh_rstdp_delta(0.0, 0.0, 0.0, 1.0, &p), p.a_p);
        assert_eq!(inh_rstdp_delta(0.0, 0.0, 0.0, -1.0, &p), -p.a_p);
        assert_eq!(p.clamp_weight(0.0 + p.a_p, NeuronKind::Inhibitory), 0.0);
        assert_eq!(inh_rdl_delta(0.0, 0.0, 0.0, 1.0, &p), p.b_n);
        assert_eq!(inh_rdl_delta(0.0, 0.0, 0.0, -1.0, &p), -p.b_n);
        let p0 = PlasticityParams { epsilon: 0.0, ..p };
        for dt in 0..10 {
            let t = dt as f64;
            assert_relative_eq!(
                inh_rdl_delta(0.0, t, 0.0, 0.7, &p0),
                -rdl_delta(0.0, t, 0.0, 0.7, &p0),
                max_relative = 1e-15
            );
        }
    }

    #[test]
    fn reward_signal_clamps() {
        assert_eq!(RewardSignal::new(3.0).value(), 1.0);
        assert_eq!(RewardSignal::new(-3.0).value(), -1.0);
        assert_eq!(RewardSignal::new(f64::NAN).value(), 0.0);
    }

    proptest! {
        #[test]
        fn rdl_odd_and_scaled(dt in -50.0f64..50.0, d in 0.0f64..20.0, r in -1.0f64..1.0) {
            let p = p();
            let pos = rdl_delta(0.0, dt, d, r, &p);
            prop_assert_eq!(rdl_delta(0.0, dt, d, -r, &p), -pos);
            prop_assert!((pos.abs() - r.abs() * udl_delta(0.0, dt, d, &p).abs()).abs() <= 1e-15);
        }

        #[test]
        fn deltas_bounded(dt in -100.0f64..100.0, d in 0.0f64..20.0, r in -1.0f64..1.0) {
            let p = PlasticityParams { a_p: 0.07, a_n: 0.03, b_p: 0.2, b_n: 0.05, ..p() };
            let wmax = p.a_p.max(p.a_n) + 1e-15;
            let dmax = p.b_p.max(p.b_n) + 1e-15;
            for set in [RuleSet::Unsupervised, RuleSet::Reward, RuleSet::RewardInhibitory] {
                let (dw, dd) = set.deltas(0.0, dt, d, r, &p);
                prop_assert!(dw.abs() <= wmax && dd.abs() <= dmax);
            }
        }

        #[test]
        fn branches_decay_in_distance(x in 0.0f64..40.0, gap in 0.01f64..10.0) {
            let p = p();
            let near = stdp_delta(0.0, x, 0.0, &p).abs();
            let far = stdp_delta(0.0, x + gap, 0.0, &p).abs();
            prop_assert!(far < near);
            let near = udl_delta(0.0, -x - 0.01, 0.0, &p).abs();
            let far = udl_delta(0.0, -x - 0.01 - gap, 0.0, &p).abs();
            prop_assert!(far < near);
        }
    }
}
