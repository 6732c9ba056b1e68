//! Labelled spatio-temporal patterns with known embedded delays, used to
//! verify learning at desk scale.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FrameSequence;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub p: usize,
    pub y: usize,
    pub x: usize,
}

/// A source cell spiking at `onset` followed by a target cell `delay` bins
/// later.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddedDelay {
    pub source: Cell,
    pub target: Cell,
    pub delay: usize,
    pub onset: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassPattern {
    pub pairs: Vec<EmbeddedDelay>,
}

impl ClassPattern {
    /// Noiseless spikes `(t, cell)` at the given onset shift.
    pub fn spikes(&self, shift: usize, length: usize) -> BTreeSet<(usize, Cell)> {
        let mut out = BTreeSet::new();
        for pair in &self.pairs {
            let ts = pair.onset + shift;
            if ts < length {
                out.insert((ts, pair.source));
            }
            if ts + pair.delay < length {
                out.insert((ts + pair.delay, pair.target));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarDirection {
    Right,
    Left,
    Down,
    Up,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    /// Bins per sample.
    pub pattern_length: usize,
    /// (H, W)
    pub grid: (usize, usize),
    pub classes: Vec<ClassPattern>,
    /// Spurious-spike probability per pixel per bin.
    pub noise_rate: f64,
    pub seed: u64,
    pub samples_per_class: usize,
    /// Per-class sample counts; overrides `samples_per_class` when set.
    #[serde(default)]
    pub class_counts: Option<Vec<usize>>,
    /// Each sample's pattern starts at a uniform shift in `0..=max_jitter`.
    #[serde(default)]
    pub max_jitter: usize,
}

impl SyntheticSpec {
    /// Bars sweeping across the grid one pixel every `step` bins. Class `k`
    /// moves in direction `k % 4`; classes beyond four use slower sweeps.
    /// A bar emits ON spikes on its leading edge and OFF spikes where it
    /// leaves.
    pub fn moving_bars(
        n_classes: usize,
        grid: (usize, usize),
        pattern_length: usize,
        step: usize,
        noise_rate: f64,
        seed: u64,
    ) -> Self {
        let dirs = [
            BarDirection::Right,
            BarDirection::Left,
            BarDirection::Down,
            BarDirection::Up,
        ];
        let classes = (0..n_classes)
            .map(|k| bar_pattern(dirs[k % 4], grid, step + k / 4))
            .collect();
        let sweep = grid.0.max(grid.1) * (step + (n_classes.max(1) - 1) / 4);
        SyntheticSpec {
            n_classes,
            pattern_length,
            grid,
            classes,
            noise_rate,
            seed,
            samples_per_class: 50,
            class_counts: None,
            max_jitter: pattern_length.saturating_sub(sweep + 1).min(8),
        }
    }

    pub fn with_samples(mut self, per_class: usize) -> Self {
        self.samples_per_class = per_class;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn counts(&self) -> Vec<usize> {
        self.class_counts
            .clone()
            .unwrap_or_else(|| vec![self.samples_per_class; self.n_classes])
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.classes.len() != self.n_classes {
            return Err(Error::config(
                "classes",
                format!("{} patterns for {} classes", self.classes.len(), self.n_classes),
            ));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::config("noise_rate", "must lie in [0, 1)"));
        }
        if self.pattern_length == 0 || self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(Error::config("grid", "dimensions must be positive"));
        }
        if let Some(c) = &self.class_counts {
            if c.len() != self.n_classes {
                return Err(Error::config("class_counts", "one count per class"));
            }
        }
        for pair in self.classes.iter().flat_map(|c| &c.pairs) {
            if pair.delay > self.pattern_length {
                return Err(Error::config("classes", "embedded delay exceeds pattern length"));
            }
            for cell in [pair.source, pair.target] {
                if cell.p > 1 || cell.y >= self.grid.0 || cell.x >= self.grid.1 {
                    return Err(Error::config("classes", format!("cell {cell:?} off grid")));
                }
            }
        }
        Ok(())
    }
}

fn bar_pattern(dir: BarDirection, (h, w): (usize, usize), step: usize) -> ClassPattern {
    let along = match dir {
        BarDirection::Right | BarDirection::Left => w,
        BarDirection::Down | BarDirection::Up => h,
    };
    let across = if along == w { h } else { w };
    // position index k at sweep stage s
    let cell = |p: usize, s: usize, k: usize| {
        let s = match dir {
            BarDirection::Right | BarDirection::Down => s,
            BarDirection::Left | BarDirection::Up => along - 1 - s,
        };
        match dir {
            BarDirection::Right | BarDirection::Left => Cell { p, y: k, x: s },
            BarDirection::Down | BarDirection::Up => Cell { p, y: s, x: k },
        }
    };
    let mut pairs = Vec::new();
    for s in 0..along.saturating_sub(1) {
        for k in 0..across {
            // leading edge
            pairs.push(EmbeddedDelay {
                source: cell(1, s, k),
                target: cell(1, s + 1, k),
                delay: step,
                onset: s * step,
            });
            // trailing edge
            pairs.push(EmbeddedDelay {
                source: cell(0, s, k),
                target: cell(0, s + 1, k),
                delay: step,
                onset: (s + 1) * step,
            });
        }
    }
    ClassPattern { pairs }
}

/// Generates the labelled samples, classes interleaved round-robin.
/// Deterministic in `spec.seed`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Vec<FrameSequence>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (h, w) = spec.grid;
    let counts = spec.counts();
    let rounds = counts.iter().copied().max().unwrap_or(0);
    let mut out = Vec::with_capacity(counts.iter().sum());
    for i in 0..rounds {
        for (label, pattern) in spec.classes.iter().enumerate() {
            if i >= counts[label] {
                continue;
            }
            let shift = rng.gen_range(0..=spec.max_jitter);
            let mut seq = FrameSequence::empty(spec.pattern_length, (2, h, w), label as u32);
            for (t, c) in pattern.spikes(shift, spec.pattern_length) {
                seq.set(t, c.p, c.y, c.x);
            }
            if spec.noise_rate > 0.0 {
                for t in 0..spec.pattern_length {
                    for y in 0..h {
                        for x in 0..w {
                            if rng.gen_bool(spec.noise_rate) {
                                let p = rng.gen_range(0..2);
                                seq.set(t, p, y, x);
                            }
                        }
                    }
                }
            }
            out.push(seq);
        }
    }
    Ok(out)
}

/// Accuracy of a nearest-template classifier that compares each sample with
/// every class's noiseless pattern at every admissible shift (symmetric
/// difference of spike sets).
pub fn template_accuracy(spec: &SyntheticSpec, samples: &[FrameSequence]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let templates: Vec<Vec<BTreeSet<u64>>> = spec
        .classes
        .iter()
        .map(|c| {
            (0..=spec.max_jitter)
                .map(|s| {
                    c.spikes(s, spec.pattern_length)
                        .into_iter()
                        .map(|(t, cell)| key(t, cell, spec.grid))
                        .collect()
                })
                .collect()
        })
        .collect();
    let correct = samples
        .iter()
        .filter(|seq| {
            let spikes: BTreeSet<u64> = seq
                .frames
                .iter()
                .enumerate()
                .flat_map(|(t, f)| {
                    f.iter().map(move |&idx| {
                        let (p, y, x) = seq.unflatten(idx);
                        key(t, Cell { p, y, x }, spec.grid)
                    })
                })
                .collect();
            let mut best = (usize::MAX, 0usize);
            for (label, shifts) in templates.iter().enumerate() {
                for tpl in shifts {
                    let d = tpl.symmetric_difference(&spikes).count();
                    if d < best.0 {
                        best = (d, label);
                    }
                }
            }
            best.1 == seq.label as usize
        })
        .count();
    correct as f64 / samples.len() as f64
}

fn key(t: usize, c: Cell, (h, w): (usize, usize)) -> u64 {
    (((t * 2 + c.p) * h + c.y) * w + c.x) as u64
}
