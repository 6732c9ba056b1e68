use crate::error::{Error, Result};
use crate::events::FrameSequence;
use crate::regulation::DecentralizeGate;
use crate::snn::{lif_step_with_decay, DelayBuffer, NeuronState, SpikeEvent, SpikeRecord};

use super::{conv_forward, Network};

#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    /// Run the decision layer (off while training layer 1).
    pub decision: bool,
    pub lateral: bool,
    /// Per-group emission limit; `None` disables the gate.
    pub gate: Option<usize>,
    /// Present only the first frames of the input.
    pub limit_frames: Option<usize>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            decision: true,
            lateral: true,
            gate: None,
            limit_frames: None,
        }
    }
}

/// Reusable buffers for [`run_presentation`]. Holding one per thread
/// avoids reallocating the delay rings for every sample.
#[derive(Clone, Debug)]
pub struct Scratch {
    conv_buf: DelayBuffer,
    dec_buf: DelayBuffer,
    conv_in: Vec<f64>,
    dec_in: Vec<f64>,
    conv_neurons: Vec<NeuronState>,
    dec_neurons: Vec<NeuronState>,
    pool_fired: Vec<bool>,
    conv_dbins: Vec<u32>,
    fwd_dbins: Vec<u32>,
    lat_dbins: Vec<u32>,
}

impl Scratch {
    pub fn new(net: &Network) -> Self {
        let n_conv = net.conv.n_neurons();
        let n_dec = net.decision.n_neurons();
        Self {
            conv_buf: DelayBuffer::new(n_conv, net.d_max),
            dec_buf: DelayBuffer::new(n_dec, net.d_max),
            conv_in: vec![0.0; n_conv],
            dec_in: vec![0.0; n_dec],
            conv_neurons: Vec::new(),
            dec_neurons: Vec::new(),
            pool_fired: vec![false; net.pool.n_units()],
            conv_dbins: Vec::new(),
            fwd_dbins: Vec::new(),
            lat_dbins: Vec::new(),
        }
    }

    fn fits(&self, net: &Network) -> bool {
        self.conv_in.len() == net.conv.n_neurons()
            && self.dec_in.len() == net.decision.n_neurons()
            && self.pool_fired.len() == net.pool.n_units()
            && self.conv_buf.d_max() == net.d_max
    }

    /// Total weight delivered to each layer during the last presentation.
    pub fn delivered(&self) -> (f64, f64) {
        (self.conv_buf.delivered_total(), self.dec_buf.delivered_total())
    }

    /// Total weight scheduled onto each layer during the last presentation.
    pub fn scheduled(&self) -> (f64, f64) {
        (self.conv_buf.scheduled_total(), self.dec_buf.scheduled_total())
    }

    /// Weight still in flight when the last presentation ended.
    pub fn pending(&self) -> (f64, f64) {
        (self.conv_buf.pending_total(), self.dec_buf.pending_total())
    }
}

fn round_delays(src: &[f64], dst: &mut Vec<u32>) {
    dst.clear();
    dst.extend(src.iter().map(|d| d.round() as u32));
}

/// Simulates one sample and returns every spike. The network is not
/// modified; membrane state lives in `scratch` and is discarded.
pub fn run_presentation(
    net: &Network,
    input: &FrameSequence,
    opts: &SimOptions,
    scratch: &mut Scratch,
) -> Result<SpikeRecord> {
    if input.shape != net.input_shape() {
        return Err(Error::InvalidArgument(format!(
            "input shape {:?} does not match network input {:?}",
            input.shape,
            net.input_shape()
        )));
    }
    if !scratch.fits(net) {
        *scratch = Scratch::new(net);
    }
    let s = scratch;
    s.conv_buf.clear();
    s.dec_buf.clear();
    s.pool_fired.fill(false);
    s.conv_neurons.clone_from(&net.conv.neurons);
    s.dec_neurons.clone_from(&net.decision.neurons);
    for n in s.conv_neurons.iter_mut().chain(s.dec_neurons.iter_mut()) {
        n.reset_dynamics(net.lif.v_reset);
    }
    round_delays(&net.conv.delays, &mut s.conv_dbins);
    round_delays(&net.decision.forward_d, &mut s.fwd_dbins);
    s.lat_dbins.clear();
    s.lat_dbins
        .extend(net.decision.lateral.iter().map(|l| (l.d.round() as u32).max(1)));

    let n_frames = opts.limit_frames.map_or(input.len(), |x| x.min(input.len()));
    let length = (n_frames + net.tail_bins) as u32;
    let decay = net.lif.decay();
    let dec = &net.decision;
    let n_dec = dec.n_neurons();
    let mut gate = opts
        .gate
        .map(|k| DecentralizeGate::new(dec.n_classes, dec.per_class, k));
    let mut rec = SpikeRecord {
        length,
        ..Default::default()
    };

    for t in 0..length {
        if (t as usize) < n_frames {
            conv_forward(&net.conv, &input.frames[t as usize], t, &s.conv_dbins, &mut s.conv_buf);
        }

        s.conv_buf.take(t, &mut s.conv_in);
        for (n, neuron) in s.conv_neurons.iter_mut().enumerate() {
            let i = s.conv_in[n];
            if i == 0.0 && neuron.v == 0.0 {
                continue;
            }
            if !lif_step_with_decay(neuron, i, t, &net.lif, decay) {
                continue;
            }
            rec.conv.push(SpikeEvent { neuron: n as u32, t });
            let u = net.pool.unit_of(n);
            if s.pool_fired[u] {
                continue;
            }
            s.pool_fired[u] = true;
            rec.pool.push(SpikeEvent { neuron: u as u32, t });
            if opts.decision {
                let base = u * n_dec;
                for j in 0..n_dec {
                    s.dec_buf.schedule_unchecked(
                        j,
                        dec.forward_w[base + j],
                        s.fwd_dbins[base + j] as usize,
                        t,
                    );
                }
            }
        }

        if !opts.decision {
            continue;
        }
        s.dec_buf.take(t, &mut s.dec_in);
        for j in 0..n_dec {
            let neuron = &mut s.dec_neurons[j];
            let i = s.dec_in[j];
            if i == 0.0 && neuron.v == 0.0 {
                continue;
            }
            if !lif_step_with_decay(neuron, i, t, &net.lif, decay) {
                continue;
            }
            if let Some(g) = gate.as_mut() {
                if !g.admit(j) {
                    rec.suppressed += 1;
                    continue;
                }
            }
            rec.decision.push(SpikeEvent { neuron: j as u32, t });
            if opts.lateral {
                for &li in &dec.lateral_out[j] {
                    let l = &dec.lateral[li as usize];
                    s.dec_buf.schedule_unchecked(
                        l.post as usize,
                        l.w,
                        s.lat_dbins[li as usize] as usize,
                        t,
                    );
                }
            }
        }
    }
    Ok(rec)
}
