//! Event ingestion: AEDAT decoding, frame binning, dataset splits and
//! synthetic spatio-temporal patterns.

mod aedat;
mod dataset;
mod frames;
mod gesture;
mod split;
mod synthetic;

pub use aedat::{decode_events, encode_events, AEDAT_MAGIC, POLARITY_EVENT};
pub use dataset::{read_dataset, write_dataset, Dataset, DATASET_MAGIC, DATASET_VERSION};
pub use gesture::{downsample, load_gesture_dir, load_recording, subject_of, GestureOptions};
pub use frames::{bin_frames, FrameSequence, DEFAULT_FPS, DEFAULT_MAX_FRAMES};
pub use split::{split_dataset, EXCLUDED_LABEL, LAST_TRAIN_SUBJECT, N_SUBJECTS};
pub use synthetic::{
    gen_synthetic, template_accuracy, BarDirection, Cell, ClassPattern, EmbeddedDelay,
    SyntheticSpec,
};

use serde::{Deserialize, Serialize};

/// Side length of the DVS128 sensor.
pub const DVS128_SIZE: u16 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Off = 0,
    On = 1,
}

impl Polarity {
    /// Channel index in a frame tensor.
    pub fn channel(self) -> usize {
        self as usize
    }
}

/// One sensor event. Timestamps are microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
    pub t: u64,
}

/// Raw sensor events ordered by timestamp.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventStream {
    pub events: Vec<Event>,
    /// (width, height)
    pub sensor_size: (u16, u16),
}

impl EventStream {
    pub fn new(sensor_size: (u16, u16)) -> Self {
        Self {
            events: Vec::new(),
            sensor_size,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks ordering and coordinate bounds.
    pub fn is_valid(&self) -> bool {
        let (w, h) = self.sensor_size;
        self.events.windows(2).all(|p| p[0].t <= p[1].t)
            && self.events.iter().all(|e| e.x < w && e.y < h)
    }

    /// Events with `start <= t < end`, re-based so that `start` becomes 0.
    pub fn slice(&self, start: u64, end: u64) -> EventStream {
        let lo = self.events.partition_point(|e| e.t < start);
        let hi = self.events.partition_point(|e| e.t < end);
        EventStream {
            events: self.events[lo..hi]
                .iter()
                .map(|e| Event { t: e.t - start, ..*e })
                .collect(),
            sensor_size: self.sensor_size,
        }
    }
}
