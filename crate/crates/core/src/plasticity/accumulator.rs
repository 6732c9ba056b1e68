use crate::snn::NeuronKind;

use super::{clamp_delay, PlasticityParams};

/// Nearest-neighbour pairing on one synapse.
///
/// `pre` holds emission bins and `post` spike bins, both ascending. Each
/// post spike pairs with the latest arrival (`pre + delay_bins`) at or
/// before it; each arrival pairs with the latest post spike strictly before
/// it. `f` receives `(t_pre, t_post)`.
pub fn pair_spikes(pre: &[u32], delay_bins: u32, post: &[u32], mut f: impl FnMut(u32, u32)) {
    if pre.is_empty() || post.is_empty() {
        return;
    }
    let mut i = 0;
    for &tp in post {
        while i < pre.len() && pre[i] + delay_bins <= tp {
            i += 1;
        }
        if i > 0 {
            f(pre[i - 1], tp);
        }
    }
    let mut j = 0;
    for &ts in pre {
        let a = ts + delay_bins;
        while j < post.len() && post[j] < a {
            j += 1;
        }
        if j > 0 {
            f(ts, post[j - 1]);
        }
    }
}

/// Per-synapse sums of weight and delay changes for one presentation.
#[derive(Clone, Debug, Default)]
pub struct UpdateAccumulator {
    pub dw: Vec<f64>,
    pub dd: Vec<f64>,
    /// Pairs folded into each synapse.
    pub pairs: Vec<u32>,
}

impl UpdateAccumulator {
    pub fn new(n: usize) -> Self {
        Self {
            dw: vec![0.0; n],
            dd: vec![0.0; n],
            pairs: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.dw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dw.is_empty()
    }

    pub fn clear(&mut self) {
        self.dw.fill(0.0);
        self.dd.fill(0.0);
        self.pairs.fill(0);
    }

    #[inline]
    pub fn add(&mut self, i: usize, dw: f64, dd: f64) {
        self.dw[i] += dw;
        self.dd[i] += dd;
        self.pairs[i] += 1;
    }

    pub fn total_pairs(&self) -> u64 {
        self.pairs.iter().map(|&p| p as u64).sum()
    }

    /// Applies the sums once and clamps. `kind_of(i)` gives the presynaptic
    /// kind of synapse `i`; delays move only where `delay_open(i)` holds.
    pub fn apply(
        &self,
        weights: &mut [f64],
        delays: &mut [f64],
        kind_of: impl Fn(usize) -> NeuronKind,
        delay_open: impl Fn(usize) -> bool,
        p: &PlasticityParams,
        d_max: usize,
    ) {
        for i in 0..self.len() {
            if self.pairs[i] == 0 {
                continue;
            }
            weights[i] = p.clamp_weight(weights[i] + self.dw[i], kind_of(i));
            if delay_open(i) {
                delays[i] = clamp_delay(delays[i] + self.dd[i], d_max);
            }
        }
    }
}
