use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{Mechanism, RunConfig};
use crate::error::{Error, Result};
use crate::events::FrameSequence;
use crate::plasticity::{clamp_delay, pair_spikes, RuleSet, UpdateAccumulator};
use crate::regulation::{decision_homeo_update, homeo_interval_update};
use crate::snn::{Layer, NeuronKind};
use crate::topology::{build_network, run_presentation, Network, Scratch, SimOptions};

use super::{
    class_activity, freeze_check, majority_vote, max_active_per_group, raw_reward, Phase,
    TrainState, Verdict,
};
use crate::plasticity::RewardSignal;

/// How a training phase ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseOutcome {
    pub phase: Phase,
    /// Epochs completed in this phase so far.
    pub epochs: usize,
    /// Every neuron (or map) reached the frozen state.
    pub converged: bool,
}

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresentationLog {
    pub phase: Phase,
    pub epoch: usize,
    pub sample: usize,
    pub label: u32,
    pub predicted: Option<usize>,
    pub reward: f64,
    pub counts: Vec<u32>,
    pub frozen_fraction: f64,
}

/// A network together with its training state and configuration.
#[derive(Clone, Debug)]
pub struct Session {
    pub config: RunConfig,
    pub net: Network,
    pub state: TrainState,
    scratch: Option<Scratch>,
}

impl Session {
    pub fn new(config: RunConfig, input_shape: (usize, usize, usize)) -> Result<Self> {
        let net = build_network(&config, input_shape)?;
        Ok(Self::from_parts(config, net, None))
    }

    /// Reassembles a session; a missing state starts fresh.
    pub fn from_parts(config: RunConfig, net: Network, state: Option<TrainState>) -> Self {
        let state = state.unwrap_or_else(|| {
            TrainState::new(
                config.seed,
                net.conv.n_maps,
                net.decision.n_neurons(),
                net.decision.n_classes,
                config.regulation.window_len(net.decision.n_classes),
            )
        });
        Self {
            config,
            net,
            state,
            scratch: None,
        }
    }

    fn freeze_threshold(&self) -> f64 {
        self.config.training.freeze_fraction * self.net.d_max as f64
    }

    fn epoch_order(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        if self.config.training.shuffle {
            order.shuffle(&mut self.state.rng);
        }
        order
    }

    fn take_scratch(&mut self) -> Scratch {
        self.scratch.take().unwrap_or_else(|| Scratch::new(&self.net))
    }

    /// Unsupervised training of the conv layer until every map is frozen or
    /// `max_epochs` epochs have run in this phase.
    pub fn train_layer1(
        &mut self,
        data: &[FrameSequence],
        max_epochs: usize,
        log: &mut dyn FnMut(&PresentationLog),
    ) -> Result<PhaseOutcome> {
        if self.state.phase != Phase::Layer1 {
            return Err(Error::StateMismatch(format!(
                "layer-1 training requested in phase {:?}",
                self.state.phase
            )));
        }
        let mut scratch = self.take_scratch();
        while self.state.epoch < max_epochs && !self.state.layer1_converged {
            let order = self.epoch_order(data.len());
            let mut pairs = 0u64;
            for &i in &order {
                pairs += self.layer1_presentation(&data[i], &mut scratch)?;
                self.state.presentations += 1;
                let frozen = self.net.conv.map_frozen.iter().filter(|&&f| f).count();
                log(&PresentationLog {
                    phase: Phase::Layer1,
                    epoch: self.state.epoch,
                    sample: i,
                    label: data[i].label,
                    predicted: None,
                    reward: 0.0,
                    counts: Vec::new(),
                    frozen_fraction: frozen as f64 / self.net.conv.n_maps as f64,
                });
            }
            if pairs == 0 {
                self.net.conv.map_frozen.fill(true);
            }
            self.state.epoch += 1;
            self.state.layer1_epochs = self.state.epoch;
            self.state.layer1_converged = self.net.conv.map_frozen.iter().all(|&f| f);
        }
        self.scratch = Some(scratch);
        Ok(PhaseOutcome {
            phase: Phase::Layer1,
            epochs: self.state.epoch,
            converged: self.state.layer1_converged,
        })
    }

    /// Ends layer-1 training; later calls train the decision layer.
    pub fn begin_layer2(&mut self) {
        if self.state.phase == Phase::Layer1 {
            self.state.phase = Phase::Layer2;
            self.state.epoch = 0;
        }
    }

    fn layer1_presentation(&mut self, x: &FrameSequence, scratch: &mut Scratch) -> Result<u64> {
        let cfg = &self.config;
        let opts = SimOptions {
            decision: false,
            lateral: false,
            gate: None,
            limit_frames: cfg.training.limit_frames,
        };
        let rec = run_presentation(&self.net, x, &opts, scratch)?;
        let threshold = self.freeze_threshold();
        let window = cfg.training.freeze_window;
        let n_frames = cfg.training.limit_frames.map_or(x.len(), |l| l.min(x.len()));
        let conv = &mut self.net.conv;
        let p = &cfg.plasticity;
        let d_max = self.net.d_max;

        let mut in_trains = vec![Vec::new(); x.n_inputs()];
        let mut had_input = false;
        for (t, frame) in x.frames[..n_frames].iter().enumerate() {
            for &c in frame {
                in_trains[c as usize].push(t as u32);
                had_input = true;
            }
        }
        let n_conv = conv.n_neurons();
        let post = rec.trains(Layer::Conv, n_conv);
        let k_total = conv.weights.len();
        let k_len = conv.kernel_len();
        let dbins: Vec<u32> = conv.delays.iter().map(|d| d.round() as u32).collect();
        let mut sum_dw = vec![0.0; k_total];
        let mut sum_dd = vec![0.0; k_total];
        let mut npos = vec![0u32; k_total];
        let mut pairs = 0u64;
        let (pch, kh, kw) = (conv.in_shape.0, conv.kernel.0, conv.kernel.1);
        for (n, train) in post.iter().enumerate() {
            if train.is_empty() {
                continue;
            }
            let (m, oy, ox) = conv.neuron_coords(n);
            for pc in 0..pch {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let k = conv.kernel_index(m, pc, ky, kx);
                        let cell = conv.source_cell(pc, ky, kx, oy, ox);
                        let d = conv.delays[k];
                        let (mut dw, mut dd, mut np) = (0.0, 0.0, 0u32);
                        pair_spikes(&in_trains[cell], dbins[k], train, |a, b| {
                            let (w, dl) = RuleSet::Unsupervised.deltas(a as f64, b as f64, d, 1.0, p);
                            dw += w;
                            dd += dl;
                            np += 1;
                        });
                        if np > 0 {
                            sum_dw[k] += dw;
                            sum_dd[k] += dd;
                            npos[k] += 1;
                            pairs += np as u64;
                        }
                    }
                }
            }
        }

        let mut map_dd = vec![0.0; conv.n_maps];
        let mut map_learned = vec![false; conv.n_maps];
        for k in 0..k_total {
            if npos[k] == 0 {
                continue;
            }
            let m = k / k_len;
            map_learned[m] = true;
            let n = npos[k] as f64;
            conv.weights[k] = p.clamp_weight(conv.weights[k] + sum_dw[k] / n, NeuronKind::Excitatory);
            if !conv.map_frozen[m] {
                let d = clamp_delay(conv.delays[k] + sum_dd[k] / n, d_max);
                map_dd[m] += (d - conv.delays[k]).abs();
                conv.delays[k] = d;
            }
        }

        if had_input {
            let reg = &cfg.regulation;
            let counts = rec.counts(Layer::Conv, n_conv);
            for (neuron, &c) in conv.neurons.iter_mut().zip(&counts) {
                neuron.observe_activity(c as f64, reg.activity_horizon, reg.threshold_horizon);
            }
            let per_map = conv.positions();
            for m in 0..conv.n_maps {
                let r = conv.neurons[m * per_map..(m + 1) * per_map]
                    .iter()
                    .map(|n| n.activity_trace)
                    .sum::<f64>()
                    / per_map as f64;
                let (dw, dd) = homeo_interval_update(r, &reg.conv_homeostasis);
                if dw == 0.0 && dd == 0.0 {
                    continue;
                }
                for k in m * k_len..(m + 1) * k_len {
                    conv.weights[k] = p.clamp_weight(conv.weights[k] + dw, NeuronKind::Excitatory);
                    if !conv.map_frozen[m] {
                        conv.delays[k] = clamp_delay(conv.delays[k] + dd, d_max);
                    }
                }
            }
        }

        // only presentations that produced pairs count towards convergence
        for m in 0..conv.n_maps {
            if conv.map_frozen[m] || !map_learned[m] {
                continue;
            }
            self.state.conv_freeze[m].observe(map_dd[m], window);
            if freeze_check(&self.state.conv_freeze[m], threshold, window) {
                conv.map_frozen[m] = true;
            }
        }
        Ok(pairs)
    }

    /// Options for simulating the decision layer under this configuration.
    pub fn decision_options(&self, eval: bool) -> SimOptions {
        super::eval::decision_sim_options(&self.config, eval, self.config.training.limit_frames)
    }

    /// Reward-driven training of the decision layer until every decision
    /// neuron is frozen or `max_epochs` epochs have run in this phase.
    pub fn train_layer2(
        &mut self,
        data: &[FrameSequence],
        max_epochs: usize,
        log: &mut dyn FnMut(&PresentationLog),
    ) -> Result<PhaseOutcome> {
        self.begin_layer2();
        if self.state.phase != Phase::Layer2 {
            return Err(Error::StateMismatch(format!(
                "layer-2 training requested in phase {:?}",
                self.state.phase
            )));
        }
        let mut scratch = self.take_scratch();
        while self.state.epoch < max_epochs && !self.state.layer2_converged {
            let order = self.epoch_order(data.len());
            let mut pairs = 0u64;
            for &i in &order {
                let (verdict, np) = self.layer2_presentation(&data[i], &mut scratch)?;
                pairs += np;
                self.state.presentations += 1;
                let dec = &self.net.decision;
                let frozen = dec.neurons.iter().filter(|n| n.frozen).count();
                log(&PresentationLog {
                    phase: Phase::Layer2,
                    epoch: self.state.epoch,
                    sample: i,
                    label: data[i].label,
                    predicted: verdict.predicted,
                    reward: verdict.reward.unwrap_or(0.0),
                    counts: verdict.counts,
                    frozen_fraction: frozen as f64 / dec.n_neurons() as f64,
                });
            }
            if pairs == 0 {
                for n in &mut self.net.decision.neurons {
                    n.frozen = true;
                }
            }
            self.state.epoch += 1;
            self.state.layer2_converged = self.net.decision.neurons.iter().all(|n| n.frozen);
        }
        self.scratch = Some(scratch);
        Ok(PhaseOutcome {
            phase: Phase::Layer2,
            epochs: self.state.epoch,
            converged: self.state.layer2_converged,
        })
    }

    /// Simulates one labelled sample, then applies plasticity and
    /// regulation to the decision layer.
    pub fn layer2_presentation(&mut self, x: &FrameSequence, scratch: &mut Scratch) -> Result<(Verdict, u64)> {
        let opts = self.decision_options(false);
        let rec = run_presentation(&self.net, x, &opts, scratch)?;
        let cfg = &self.config;
        let p = cfg.layer2_plasticity();
        let reg = &cfg.regulation;
        let d_max = self.net.d_max;
        let lat_d_min = cfg.topology.lateral_d_min as f64;
        let learn_delays = cfg.enabled(Mechanism::DelayLearning);
        let inh_rules = cfg.enabled(Mechanism::InhibitoryRules);
        let dec = &mut self.net.decision;
        let n_dec = dec.n_neurons();
        let target = x.label as usize;

        let (counts, first) = class_activity(&rec.decision, dec);
        let mut verdict = majority_vote(&counts, &first);
        let r = RewardSignal::new(raw_reward(&counts, target, cfg.training.kappa)).value();
        verdict.reward = Some(r);
        self.state.decisions.push(verdict.predicted);
        if let Some(k) = opts.gate {
            if max_active_per_group(&rec.decision, dec) > k {
                self.state.gate_violations += 1;
            }
        }

        let post = rec.trains(Layer::Decision, n_dec);
        let spiking: Vec<usize> = (0..n_dec).filter(|&j| !post[j].is_empty()).collect();
        let mut abs_dd = vec![0.0; n_dec];
        let mut learned = vec![false; n_dec];
        let mut pairs = 0u64;

        if r != 0.0 && !spiking.is_empty() {
            let mut fwd = UpdateAccumulator::new(dec.forward_w.len());
            let mut lat = UpdateAccumulator::new(0);
            for s in &rec.pool {
                let u = s.neuron as usize;
                for &j in &spiking {
                    let idx = dec.forward_index(u, j);
                    let d = dec.forward_d[idx];
                    pair_spikes(&[s.t], d.round() as u32, &post[j], |a, b| {
                        let (dw, dd) = RuleSet::Reward.deltas(a as f64, b as f64, d, r, p);
                        fwd.add(idx, dw, dd);
                    });
                }
            }
            if opts.lateral {
                lat = UpdateAccumulator::new(dec.lateral.len());
                for (li, l) in dec.lateral.iter().enumerate() {
                    let (pre, post_j) = (l.pre as usize, l.post as usize);
                    if post[pre].is_empty() || post[post_j].is_empty() {
                        continue;
                    }
                    let rules = if dec.neurons[pre].kind == NeuronKind::Inhibitory && inh_rules {
                        RuleSet::RewardInhibitory
                    } else {
                        RuleSet::Reward
                    };
                    let dbins = (l.d.round() as u32).max(1);
                    pair_spikes(&post[pre], dbins, &post[post_j], |a, b| {
                        let (dw, dd) = rules.deltas(a as f64, b as f64, l.d, r, p);
                        lat.add(li, dw, dd);
                    });
                }
            }
            pairs = fwd.total_pairs() + lat.total_pairs();

            for idx in 0..fwd.len() {
                if fwd.pairs[idx] == 0 {
                    continue;
                }
                let j = idx % n_dec;
                learned[j] = true;
                dec.forward_w[idx] = p.clamp_weight(dec.forward_w[idx] + fwd.dw[idx], NeuronKind::Excitatory);
                if learn_delays && !dec.neurons[j].frozen {
                    let d = clamp_delay(dec.forward_d[idx] + fwd.dd[idx], d_max);
                    abs_dd[j] += (d - dec.forward_d[idx]).abs();
                    dec.forward_d[idx] = d;
                }
            }
            for li in 0..lat.len() {
                if lat.pairs[li] == 0 {
                    continue;
                }
                let (pre, j) = (dec.lateral[li].pre as usize, dec.lateral[li].post as usize);
                learned[j] = true;
                let kind = dec.neurons[pre].kind;
                let syn = &mut dec.lateral[li];
                syn.w = p.clamp_weight(syn.w + lat.dw[li], kind);
                if learn_delays && !dec.neurons[j].frozen {
                    let d = (syn.d + lat.dd[li]).clamp(lat_d_min, d_max as f64);
                    abs_dd[j] += (d - syn.d).abs();
                    syn.d = d;
                }
            }
        }

        // regulation acts on the forward (layer-1 -> decision) afferents
        let adjust = |dec: &mut crate::topology::DecisionLayer, j: usize, dw: f64, dd: f64| {
            if dw == 0.0 && dd == 0.0 {
                return;
            }
            let move_d = learn_delays && !dec.neurons[j].frozen;
            for u in 0..dec.n_inputs {
                let idx = dec.forward_index(u, j);
                dec.forward_w[idx] = p.clamp_weight(dec.forward_w[idx] + dw, NeuronKind::Excitatory);
                if move_d {
                    dec.forward_d[idx] = clamp_delay(dec.forward_d[idx] + dd, d_max);
                }
            }
        };

        if cfg.enabled(Mechanism::DecisionHomeo) && self.state.decisions.decisions() > 0 {
            let p_target = self.state.decisions.p_target();
            let observed = self.state.decisions.counts().to_vec();
            for (c, &obs) in observed.iter().enumerate() {
                let (dw, dd) = decision_homeo_update(
                    p_target,
                    obs as f64,
                    reg.decision_lambda_w,
                    reg.decision_lambda_d,
                );
                for j in dec.group(c) {
                    adjust(dec, j, dw, dd);
                }
            }
        }

        let had_input = !rec.pool.is_empty();
        if had_input {
            let spike_counts = rec.counts(Layer::Decision, n_dec);
            for (n, &c) in dec.neurons.iter_mut().zip(&spike_counts) {
                n.observe_activity(c as f64, reg.activity_horizon, reg.threshold_horizon);
            }
            if cfg.enabled(Mechanism::Homeo) {
                for j in 0..n_dec {
                    let (dw, dd) = homeo_interval_update(dec.neurons[j].activity_trace, &reg.homeostasis);
                    adjust(dec, j, dw, dd);
                }
            }
            if cfg.enabled(Mechanism::Threshold) {
                for n in &mut dec.neurons {
                    n.theta = reg.adapt_threshold(n.theta, n.activity_long);
                }
            }
        }

        if learn_delays {
            let threshold = cfg.training.freeze_fraction * d_max as f64;
            let window = cfg.training.freeze_window;
            for j in 0..n_dec {
                if dec.neurons[j].frozen || !learned[j] {
                    continue;
                }
                let trace = &mut self.state.decision_freeze[j];
                trace.observe(abs_dd[j], window);
                if freeze_check(trace, threshold, window) {
                    dec.neurons[j].frozen = true;
                }
            }
        }
        Ok((verdict, pairs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::load_dataset;

    fn small() -> (RunConfig, crate::events::Dataset) {
        let mut cfg = RunConfig::synthetic();
        if let Some(crate::config::DatasetSource::Synthetic {
            train_per_class,
            test_per_class,
            ..
        }) = &mut cfg.dataset
        {
            *train_per_class = 6;
            *test_per_class = 2;
        }
        let ds = load_dataset(&cfg, None).unwrap();
        (cfg, ds)
    }

    #[test]
    fn empty_frames_freeze_layer1_immediately() {
        let (cfg, _) = small();
        let data = vec![FrameSequence::empty(20, (2, 8, 8), 0); 4];
        let mut s = Session::new(cfg, (2, 8, 8)).unwrap();
        let before = s.net.clone();
        let out = s.train_layer1(&data, 5, &mut |_| {}).unwrap();
        assert!(out.converged);
        assert_eq!(out.epochs, 1);
        assert_eq!(s.net.conv.weights, before.conv.weights);
        assert_eq!(s.net.conv.delays, before.conv.delays);
    }

    #[test]
    fn split_training_matches_continuous() {
        let (cfg, ds) = small();
        let mut a = Session::new(cfg.clone(), ds.shape).unwrap();
        a.train_layer1(&ds.train, 2, &mut |_| {}).unwrap();
        let mut b = Session::new(cfg.clone(), ds.shape).unwrap();
        b.train_layer1(&ds.train, 1, &mut |_| {}).unwrap();
        let mut c = Session::from_parts(cfg, b.net.clone(), Some(b.state.clone()));
        c.train_layer1(&ds.train, 2, &mut |_| {}).unwrap();
        assert_eq!(a.net.state_hash(), c.net.state_hash());
        assert_eq!(a.state, c.state);
    }

    #[test]
    fn layer2_leaves_layer1_untouched() {
        let (cfg, ds) = small();
        let mut s = Session::new(cfg, ds.shape).unwrap();
        s.train_layer1(&ds.train, 1, &mut |_| {}).unwrap();
        let h = s.net.layer1_hash();
        s.train_layer2(&ds.train, 2, &mut |_| {}).unwrap();
        assert_eq!(h, s.net.layer1_hash());
        assert!(s.train_layer1(&ds.train, 3, &mut |_| {}).is_err());
    }

    #[test]
    fn zero_reward_leaves_only_regulation() {
        let (mut cfg, ds) = small();
        cfg.training.kappa = 0.0;
        cfg.disabled = Mechanism::ALL.into_iter().filter(|m| *m != Mechanism::Lateral).collect();
        let mut s = Session::new(cfg, ds.shape).unwrap();
        s.begin_layer2();
        let before = s.net.clone();
        s.train_layer2(&ds.train, 1, &mut |_| {}).unwrap();
        assert_eq!(before.decision.forward_w, s.net.decision.forward_w);
        assert_eq!(before.decision.forward_d, s.net.decision.forward_d);
        assert_eq!(before.decision.lateral, s.net.decision.lateral);
    }
}
