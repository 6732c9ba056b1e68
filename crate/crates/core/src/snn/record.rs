use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layer {
    Conv,
    Pool,
    Decision,
}

impl Layer {
    pub fn name(self) -> &'static str {
        match self {
            Layer::Conv => "conv",
            Layer::Pool => "pool",
            Layer::Decision => "decision",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub neuron: u32,
    pub t: u32,
}

/// All spikes of one presentation, per layer, in emission order (by bin,
/// then neuron index).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeRecord {
    pub conv: Vec<SpikeEvent>,
    pub pool: Vec<SpikeEvent>,
    pub decision: Vec<SpikeEvent>,
    /// Decision-layer threshold crossings withheld by the group gate.
    pub suppressed: usize,
    /// Bins simulated.
    pub length: u32,
}

impl SpikeRecord {
    pub fn layer(&self, layer: Layer) -> &[SpikeEvent] {
        match layer {
            Layer::Conv => &self.conv,
            Layer::Pool => &self.pool,
            Layer::Decision => &self.decision,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.conv.is_empty() && self.pool.is_empty() && self.decision.is_empty()
    }

    /// Spike times per neuron for a layer of `n` neurons.
    pub fn trains(&self, layer: Layer, n: usize) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); n];
        for s in self.layer(layer) {
            out[s.neuron as usize].push(s.t);
        }
        out
    }

    pub fn counts(&self, layer: Layer, n: usize) -> Vec<u32> {
        let mut out = vec![0; n];
        for s in self.layer(layer) {
            out[s.neuron as usize] += 1;
        }
        out
    }

    /// Writes `layer,neuron,t_bin` rows (with header).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["layer", "neuron", "t_bin"])?;
        for layer in [Layer::Conv, Layer::Pool, Layer::Decision] {
            for s in self.layer(layer) {
                wr.write_record([layer.name(), &s.neuron.to_string(), &s.t.to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}
