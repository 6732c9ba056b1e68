//! Two-layer architecture: a convolutional sheet with shared weight and
//! delay kernels, earliest-spike pooling, and a class-grouped decision
//! layer with forward and lateral synapses.

mod sim;

pub use sim::{run_presentation, Scratch, SimOptions};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{hex_digest, RunConfig};
use crate::error::{Error, Result};
use crate::snn::{DelayBuffer, LifParams, NeuronKind, NeuronState, SpikeEvent};

const STREAM_CONV: u64 = 1;
const STREAM_TAGS: u64 = 2;
const STREAM_FORWARD: u64 = 3;
const STREAM_LATERAL: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvSheet {
    pub n_maps: usize,
    /// (P, H, W)
    pub in_shape: (usize, usize, usize),
    pub kernel: (usize, usize),
    pub stride: usize,
    /// (rows, cols) of each output map.
    pub out: (usize, usize),
    /// Shared kernels, indexed by [`ConvSheet::kernel_index`].
    pub weights: Vec<f64>,
    pub delays: Vec<f64>,
    pub neurons: Vec<NeuronState>,
    pub map_frozen: Vec<bool>,
}

impl ConvSheet {
    pub fn kernel_len(&self) -> usize {
        self.in_shape.0 * self.kernel.0 * self.kernel.1
    }

    pub fn kernel_index(&self, m: usize, p: usize, ky: usize, kx: usize) -> usize {
        ((m * self.in_shape.0 + p) * self.kernel.0 + ky) * self.kernel.1 + kx
    }

    pub fn neuron_index(&self, m: usize, oy: usize, ox: usize) -> usize {
        (m * self.out.0 + oy) * self.out.1 + ox
    }

    /// (m, oy, ox) of a map neuron.
    pub fn neuron_coords(&self, n: usize) -> (usize, usize, usize) {
        let per_map = self.out.0 * self.out.1;
        (n / per_map, (n % per_map) / self.out.1, n % self.out.1)
    }

    pub fn n_neurons(&self) -> usize {
        self.n_maps * self.out.0 * self.out.1
    }

    pub fn positions(&self) -> usize {
        self.out.0 * self.out.1
    }

    /// Calls `f(neuron, kernel_index)` for every map neuron whose receptive
    /// field contains input cell `flat` (`p*H*W + y*W + x`).
    #[inline]
    pub fn for_each_target(&self, flat: usize, mut f: impl FnMut(usize, usize)) {
        let (_, h, w) = self.in_shape;
        let p = flat / (h * w);
        let y = (flat % (h * w)) / w;
        let x = flat % w;
        let (kh, kw) = self.kernel;
        let s = self.stride;
        for ky in 0..kh.min(y + 1) {
            let dy = y - ky;
            if !dy.is_multiple_of(s) || dy / s >= self.out.0 {
                continue;
            }
            let oy = dy / s;
            for kx in 0..kw.min(x + 1) {
                let dx = x - kx;
                if !dx.is_multiple_of(s) || dx / s >= self.out.1 {
                    continue;
                }
                let ox = dx / s;
                for m in 0..self.n_maps {
                    f(self.neuron_index(m, oy, ox), self.kernel_index(m, p, ky, kx));
                }
            }
        }
    }

    /// Input cell feeding kernel entry (p, ky, kx) at output (oy, ox).
    pub fn source_cell(&self, p: usize, ky: usize, kx: usize, oy: usize, ox: usize) -> usize {
        let (_, h, w) = self.in_shape;
        let y = oy * self.stride + ky;
        let x = ox * self.stride + kx;
        p * h * w + y * w + x
    }

    /// Rows of a kernel grid, `which` selecting weights or delays.
    pub fn kernel_grid(&self, m: usize, p: usize, delays: bool) -> Vec<Vec<f64>> {
        let src = if delays { &self.delays } else { &self.weights };
        (0..self.kernel.0)
            .map(|ky| {
                (0..self.kernel.1)
                    .map(|kx| src[self.kernel_index(m, p, ky, kx)])
                    .collect()
            })
            .collect()
    }
}

/// Schedules the deliveries caused by input spikes `cells` at bin `t`.
/// `delay_bins[k]` is the rounded delay of kernel entry `k`.
pub fn conv_forward(
    sheet: &ConvSheet,
    cells: &[u32],
    t: u32,
    delay_bins: &[u32],
    buffer: &mut DelayBuffer,
) {
    for &c in cells {
        sheet.for_each_target(c as usize, |n, k| {
            buffer.schedule_unchecked(n, sheet.weights[k], delay_bins[k] as usize, t);
        });
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolSheet {
    /// (ph, pw); the stride equals the window.
    pub window: (usize, usize),
    pub n_maps: usize,
    /// Map size being pooled.
    pub in_size: (usize, usize),
    /// Pooled grid per map; partial windows at the edges are kept.
    pub out: (usize, usize),
}

impl PoolSheet {
    pub fn new(window: (usize, usize), n_maps: usize, in_size: (usize, usize)) -> Self {
        Self {
            window,
            n_maps,
            in_size,
            out: (in_size.0.div_ceil(window.0), in_size.1.div_ceil(window.1)),
        }
    }

    pub fn n_units(&self) -> usize {
        self.n_maps * self.out.0 * self.out.1
    }

    /// Pooled unit receiving map neuron `n`.
    #[inline]
    pub fn unit_of(&self, n: usize) -> usize {
        let per_map = self.in_size.0 * self.in_size.1;
        let m = n / per_map;
        let oy = (n % per_map) / self.in_size.1;
        let ox = n % self.in_size.1;
        (m * self.out.0 + oy / self.window.0) * self.out.1 + ox / self.window.1
    }
}

/// Earliest spike per window, once per presentation. `spikes` must be in
/// emission order.
pub fn pool_forward(sheet: &PoolSheet, spikes: &[SpikeEvent]) -> Vec<SpikeEvent> {
    let mut fired = vec![false; sheet.n_units()];
    let mut out = Vec::new();
    for s in spikes {
        let u = sheet.unit_of(s.neuron as usize);
        if !fired[u] {
            fired[u] = true;
            out.push(SpikeEvent { neuron: u as u32, t: s.t });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LateralSynapse {
    pub pre: u32,
    pub post: u32,
    pub w: f64,
    pub d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionLayer {
    pub n_classes: usize,
    pub per_class: usize,
    /// Pooled units feeding the layer.
    pub n_inputs: usize,
    pub neurons: Vec<NeuronState>,
    /// Forward weights, index `input * n_neurons + j`.
    pub forward_w: Vec<f64>,
    pub forward_d: Vec<f64>,
    pub lateral: Vec<LateralSynapse>,
    /// Lateral synapse indices grouped by presynaptic neuron.
    pub lateral_out: Vec<Vec<u32>>,
}

impl DecisionLayer {
    pub fn n_neurons(&self) -> usize {
        self.neurons.len()
    }

    pub fn class_of(&self, j: usize) -> usize {
        j / self.per_class
    }

    pub fn group(&self, class: usize) -> std::ops::Range<usize> {
        class * self.per_class..(class + 1) * self.per_class
    }

    #[inline]
    pub fn forward_index(&self, input: usize, j: usize) -> usize {
        input * self.neurons.len() + j
    }

    pub fn kind(&self, j: usize) -> NeuronKind {
        self.neurons[j].kind
    }

    pub fn inhibitory_weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.lateral
            .iter()
            .filter(|s| self.kind(s.pre as usize) == NeuronKind::Inhibitory)
            .map(|s| s.w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub lif: LifParams,
    pub d_max: usize,
    pub tail_bins: usize,
    pub conv: ConvSheet,
    pub pool: PoolSheet,
    pub decision: DecisionLayer,
}

impl Network {
    /// SHA-256 of every parameter and regulated quantity.
    pub fn state_hash(&self) -> String {
        hex_digest(&bincode::serialize(self).expect("network serialises"))
    }

    /// SHA-256 of the layer-1 parameters only.
    pub fn layer1_hash(&self) -> String {
        let thetas: Vec<f64> = self.conv.neurons.iter().map(|n| n.theta).collect();
        let bytes = bincode::serialize(&(&self.conv.weights, &self.conv.delays, thetas))
            .expect("kernels serialise");
        hex_digest(&bytes)
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.conv.in_shape
    }
}

/// Builds a network for inputs of shape (P, H, W). Construction is a pure
/// function of the configuration.
pub fn build_network(config: &RunConfig, input_shape: (usize, usize, usize)) -> Result<Network> {
    config.validate()?;
    let t = &config.topology;
    let (p, h, w) = input_shape;
    if p == 0 || h == 0 || w == 0 {
        return Err(Error::config("input_shape", "all dimensions must be positive"));
    }
    if t.kernel.0 > h || t.kernel.1 > w {
        return Err(Error::config("topology.kernel", "larger than the input"));
    }
    let out = ((h - t.kernel.0) / t.stride + 1, (w - t.kernel.1) / t.stride + 1);
    let theta = config.lif.theta_init;

    let mut rng = stream(config.seed, STREAM_CONV);
    let k_len = t.n_maps * p * t.kernel.0 * t.kernel.1;
    let weights: Vec<f64> = (0..k_len).map(|_| uniform(&mut rng, t.conv_w_init)).collect();
    let delays: Vec<f64> = (0..k_len)
        .map(|_| uniform(&mut rng, (0.0, t.d_max as f64)))
        .collect();
    let conv = ConvSheet {
        n_maps: t.n_maps,
        in_shape: input_shape,
        kernel: t.kernel,
        stride: t.stride,
        out,
        weights,
        delays,
        neurons: vec![NeuronState::new(NeuronKind::Excitatory, theta); t.n_maps * out.0 * out.1],
        map_frozen: vec![false; t.n_maps],
    };
    let pool = PoolSheet::new(t.pool, t.n_maps, out);

    let n_dec = t.n_classes * t.per_class;
    let n_inh = (t.inhibitory_fraction * n_dec as f64).round() as usize;
    let mut order: Vec<usize> = (0..n_dec).collect();
    order.shuffle(&mut stream(config.seed, STREAM_TAGS));
    let dec_theta = t.decision_theta_init.unwrap_or(theta);
    let mut neurons = vec![NeuronState::new(NeuronKind::Excitatory, dec_theta); n_dec];
    for &j in &order[..n_inh] {
        neurons[j].kind = NeuronKind::Inhibitory;
    }

    let n_inputs = pool.n_units();
    let mut rng = stream(config.seed, STREAM_FORWARD);
    let mut forward_w = Vec::with_capacity(n_inputs * n_dec);
    let mut forward_d = Vec::with_capacity(n_inputs * n_dec);
    for _ in 0..n_inputs * n_dec {
        forward_w.push(uniform(&mut rng, t.forward_w_init));
        let d = uniform(&mut rng, (0.0, t.d_max as f64));
        forward_d.push(t.fixed_decision_delay.unwrap_or(d));
    }

    let mut rng = stream(config.seed, STREAM_LATERAL);
    let mut lateral = Vec::new();
    let mut lateral_out = vec![Vec::new(); n_dec];
    for pre in 0..n_dec {
        for post in 0..n_dec {
            if pre == post {
                continue;
            }
            let u: f64 = rng.gen();
            let w_mag = uniform(
                &mut rng,
                match neurons[pre].kind {
                    NeuronKind::Excitatory => t.lateral_w_init,
                    NeuronKind::Inhibitory => t.inhibitory_w_init,
                },
            );
            let d = uniform(&mut rng, (t.lateral_d_min as f64, t.d_max as f64));
            if u >= t.p_lateral {
                continue;
            }
            let w = match neurons[pre].kind {
                NeuronKind::Excitatory => w_mag,
                NeuronKind::Inhibitory => -w_mag,
            };
            let d = t
                .fixed_decision_delay
                .map_or(d, |f| f.max(t.lateral_d_min as f64));
            lateral_out[pre].push(lateral.len() as u32);
            lateral.push(LateralSynapse {
                pre: pre as u32,
                post: post as u32,
                w,
                d,
            });
        }
    }

    Ok(Network {
        lif: config.lif.clone(),
        d_max: t.d_max,
        tail_bins: t.tail_bins,
        conv,
        pool,
        decision: DecisionLayer {
            n_classes: t.n_classes,
            per_class: t.per_class,
            n_inputs,
            neurons,
            forward_w,
            forward_d,
            lateral,
            lateral_out,
        },
    })
}
