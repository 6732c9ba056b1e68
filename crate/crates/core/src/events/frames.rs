use serde::{Deserialize, Serialize};

use super::{Event, EventStream, Polarity};
use crate::error::{Error, Result};

pub const DEFAULT_FPS: f64 = 33.0;
pub const DEFAULT_MAX_FRAMES: usize = 200;

/// Binary spike tensor `[T x P x H x W]`, stored sparsely: `frames[t]`
/// lists the flat indices `p*H*W + y*W + x` active in bin `t`, sorted and
/// without duplicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub frames: Vec<Vec<u32>>,
    /// (P, H, W)
    pub shape: (usize, usize, usize),
    pub bin_width_ms: f64,
    pub label: u32,
    pub subject_id: u32,
}

impl FrameSequence {
    pub fn empty(len: usize, shape: (usize, usize, usize), label: u32) -> Self {
        Self {
            frames: vec![Vec::new(); len],
            shape,
            bin_width_ms: 1.0,
            label,
            subject_id: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.shape.0 * self.shape.1 * self.shape.2
    }

    pub fn flat_index(&self, p: usize, y: usize, x: usize) -> u32 {
        ((p * self.shape.1 + y) * self.shape.2 + x) as u32
    }

    pub fn unflatten(&self, idx: u32) -> (usize, usize, usize) {
        let (_, h, w) = self.shape;
        let idx = idx as usize;
        (idx / (h * w), (idx / w) % h, idx % w)
    }

    pub fn get(&self, t: usize, p: usize, y: usize, x: usize) -> bool {
        self.frames
            .get(t)
            .is_some_and(|f| f.binary_search(&self.flat_index(p, y, x)).is_ok())
    }

    /// Sets a spike, keeping the frame sorted.
    pub fn set(&mut self, t: usize, p: usize, y: usize, x: usize) {
        let idx = self.flat_index(p, y, x);
        let f = &mut self.frames[t];
        if let Err(pos) = f.binary_search(&idx) {
            f.insert(pos, idx);
        }
    }

    pub fn spike_count(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    /// Keeps only the first `n` bins.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.frames.truncate(n);
        out
    }

    /// One event per active cell at the start of its bin; binning these at
    /// the same rate reproduces the tensor.
    pub fn implied_events(&self, fps: f64) -> EventStream {
        let (_, h, w) = self.shape;
        let mut events = Vec::new();
        for (t, frame) in self.frames.iter().enumerate() {
            let mut ts = (t as f64 * 1e6 / fps).ceil() as u64;
            while bin_of(ts, fps) < t {
                ts += 1;
            }
            for &idx in frame {
                let (p, y, x) = self.unflatten(idx);
                events.push(Event {
                    x: x as u16,
                    y: y as u16,
                    polarity: if p == 1 { Polarity::On } else { Polarity::Off },
                    t: ts,
                });
            }
        }
        EventStream {
            events,
            sensor_size: (w as u16, h as u16),
        }
    }
}

fn bin_of(t_us: u64, fps: f64) -> usize {
    (t_us as f64 * fps / 1e6).floor() as usize
}

/// Presence-based binning: bin `floor(t * fps / 1e6)` gets a 1 at
/// `(polarity, y, x)` for every event that falls in it. Events past
/// `max_frames` bins are dropped. The sequence always has `max_frames` bins.
pub fn bin_frames(stream: &EventStream, fps: f64, max_frames: usize) -> Result<FrameSequence> {
    if !(fps > 0.0) {
        return Err(Error::InvalidArgument(format!("fps must be > 0, got {fps}")));
    }
    if max_frames == 0 {
        return Err(Error::InvalidArgument("max_frames must be > 0".into()));
    }
    let (w, h) = stream.sensor_size;
    let shape = (2, h as usize, w as usize);
    let mut seq = FrameSequence {
        frames: vec![Vec::new(); max_frames],
        shape,
        bin_width_ms: 1000.0 / fps,
        label: 0,
        subject_id: 0,
    };
    for e in &stream.events {
        let bin = bin_of(e.t, fps);
        if bin >= max_frames {
            continue;
        }
        let idx = seq.flat_index(e.polarity.channel(), e.y as usize, e.x as usize);
        seq.frames[bin].push(idx);
    }
    for f in &mut seq.frames {
        f.sort_unstable();
        f.dedup();
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(x: u16, y: u16, p: Polarity, t: u64) -> Event {
        Event { x, y, polarity: p, t }
    }

    #[test]
    fn two_events_land_in_bins_zero_and_one() {
        let s = EventStream {
            events: vec![ev(3, 4, Polarity::On, 10_000), ev(5, 6, Polarity::Off, 40_000)],
            sensor_size: (128, 128),
        };
        let f = bin_frames(&s, 33.0, 200).unwrap();
        assert!(f.get(0, 1, 4, 3));
        assert!(f.get(1, 0, 6, 5));
        assert_eq!(f.spike_count(), 2);
        assert!((f.bin_width_ms - 30.303).abs() < 1e-3);
    }

    #[test]
    fn empty_stream_gives_zero_tensor() {
        let f = bin_frames(&EventStream::new((128, 128)), 33.0, 200).unwrap();
        assert_eq!(f.len(), 200);
        assert_eq!(f.spike_count(), 0);
    }

    #[test]
    fn event_past_six_seconds_dropped() {
        let s = EventStream {
            events: vec![ev(1, 1, Polarity::On, 6_500_000)],
            sensor_size: (128, 128),
        };
        assert_eq!(bin_frames(&s, 33.0, 200).unwrap().spike_count(), 0);
        // last kept bin ends at 200/33 s
        let s = EventStream {
            events: vec![ev(1, 1, Polarity::On, 6_000_000)],
            sensor_size: (128, 128),
        };
        assert!(bin_frames(&s, 33.0, 200).unwrap().get(198, 1, 1, 1));
    }

    #[test]
    fn duplicate_events_are_presence_only() {
        let s = EventStream {
            events: vec![ev(1, 1, Polarity::On, 5), ev(1, 1, Polarity::On, 6)],
            sensor_size: (4, 4),
        };
        assert_eq!(bin_frames(&s, 33.0, 10).unwrap().frames[0], vec![16 + 4 + 1]);
    }

    #[test]
    fn rejects_bad_preconditions() {
        let s = EventStream::new((4, 4));
        assert!(bin_frames(&s, 0.0, 10).is_err());
        assert!(bin_frames(&s, 33.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn rebinning_implied_events_is_idempotent(
            raw in prop::collection::vec((0u16..8, 0u16..8, any::<bool>(), 0u64..3_000_000), 0..60),
            fps in prop::sample::select(vec![10.0, 33.0, 100.0, 1000.0]),
        ) {
            let mut events: Vec<Event> = raw
                .into_iter()
                .map(|(x, y, on, t)| ev(x, y, if on { Polarity::On } else { Polarity::Off }, t))
                .collect();
            events.sort_by_key(|e| e.t);
            let s = EventStream { events, sensor_size: (8, 8) };
            let f = bin_frames(&s, fps, 50).unwrap();
            let again = bin_frames(&f.implied_events(fps), fps, 50).unwrap();
            prop_assert_eq!(f.frames, again.frames);
        }
    }
}
