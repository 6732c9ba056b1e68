use crate::error::{Error, Result};

/// Ring of per-bin input accumulators, `d_max + 1` bins deep.
///
/// Slot `t % horizon` holds the summed current due at bin `t`. The current
/// bin is drained with [`DelayBuffer::take`] after all same-bin deliveries
/// have been scheduled.
#[derive(Clone, Debug)]
pub struct DelayBuffer {
    slots: Vec<f64>,
    n_targets: usize,
    horizon: usize,
    scheduled: f64,
    delivered: f64,
}

impl DelayBuffer {
    pub fn new(n_targets: usize, d_max: usize) -> Self {
        let horizon = d_max + 1;
        Self {
            slots: vec![0.0; horizon * n_targets],
            n_targets,
            horizon,
            scheduled: 0.0,
            delivered: 0.0,
        }
    }

    pub fn d_max(&self) -> usize {
        self.horizon - 1
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    /// Adds `weight` to `target`'s input at bin `t_now + delay`.
    pub fn schedule(&mut self, target: usize, weight: f64, delay: usize, t_now: u32) -> Result<()> {
        if delay >= self.horizon {
            return Err(Error::DelayOutOfRange {
                delay,
                d_max: self.d_max(),
            });
        }
        self.schedule_unchecked(target, weight, delay, t_now);
        Ok(())
    }

    #[inline]
    pub(crate) fn schedule_unchecked(&mut self, target: usize, weight: f64, delay: usize, t_now: u32) {
        debug_assert!(delay < self.horizon);
        let slot = (t_now as usize + delay) % self.horizon;
        self.slots[slot * self.n_targets + target] += weight;
        self.scheduled += weight;
    }

    /// Input pending for `target` at bin `t`, without consuming it.
    pub fn peek(&self, target: usize, t: u32) -> f64 {
        self.slots[(t as usize % self.horizon) * self.n_targets + target]
    }

    /// Consumes bin `t`: moves its accumulators into `out` and zeroes them.
    pub fn take(&mut self, t: u32, out: &mut [f64]) {
        let base = (t as usize % self.horizon) * self.n_targets;
        let slot = &mut self.slots[base..base + self.n_targets];
        for (o, s) in out.iter_mut().zip(slot.iter_mut()) {
            *o = *s;
            self.delivered += *s;
            *s = 0.0;
        }
    }

    /// Total weight scheduled since the last clear.
    pub fn scheduled_total(&self) -> f64 {
        self.scheduled
    }

    /// Total weight handed out by `take` since the last clear.
    pub fn delivered_total(&self) -> f64 {
        self.delivered
    }

    /// Weight still waiting in the ring.
    pub fn pending_total(&self) -> f64 {
        self.slots.iter().sum()
    }

    pub fn clear(&mut self) {
        self.slots.fill(0.0);
        self.scheduled = 0.0;
        self.delivered = 0.0;
    }
}
