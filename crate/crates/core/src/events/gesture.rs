//! DVS128-Gesture directory layout.
//!
//! Every recording `userNN_<lighting>.aedat` has a sibling
//! `userNN_<lighting>_labels.csv` with a header line and rows of
//! `class,startTime_usec,endTime_usec`. Each row becomes one sample.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{bin_frames, decode_events, split_dataset, Dataset, Event, EventStream, FrameSequence};
use super::{DEFAULT_FPS, DEFAULT_MAX_FRAMES, EXCLUDED_LABEL};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GestureOptions {
    pub fps: f64,
    pub max_frames: usize,
    /// Integer factor by which both sensor axes are shrunk.
    pub downsample: u16,
}

impl Default for GestureOptions {
    fn default() -> Self {
        Self {
            fps: DEFAULT_FPS,
            max_frames: DEFAULT_MAX_FRAMES,
            downsample: 1,
        }
    }
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    class: u32,
    #[serde(rename = "startTime_usec")]
    start: u64,
    #[serde(rename = "endTime_usec")]
    end: u64,
}

/// `user07_led` -> 7.
pub fn subject_of(stem: &str) -> Option<u32> {
    let rest = stem.strip_prefix("user")?;
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

/// Merges each `factor x factor` block of pixels into one.
pub fn downsample(stream: &EventStream, factor: u16) -> EventStream {
    if factor <= 1 {
        return stream.clone();
    }
    let (w, h) = stream.sensor_size;
    EventStream {
        events: stream
            .events
            .iter()
            .map(|e| Event {
                x: e.x / factor,
                y: e.y / factor,
                ..*e
            })
            .collect(),
        sensor_size: (w.div_ceil(factor), h.div_ceil(factor)),
    }
}

fn recordings(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "aedat"))
        .collect();
    out.sort();
    Ok(out)
}

/// Samples of one recording, labelled with raw 1-based class ids.
pub fn load_recording(aedat: &Path, opts: &GestureOptions) -> Result<Vec<FrameSequence>> {
    let stem = aedat
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidArgument(format!("bad file name {}", aedat.display())))?;
    let subject = subject_of(stem)
        .ok_or_else(|| Error::InvalidArgument(format!("no subject id in {}", aedat.display())))?;
    let labels = aedat.with_file_name(format!("{stem}_labels.csv"));
    if !labels.is_file() {
        return Err(Error::MissingFile(labels));
    }
    let stream = downsample(&decode_events(&fs::read(aedat)?)?, opts.downsample);
    let mut rows = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&labels)?;
    let mut out = Vec::new();
    for row in rows.deserialize() {
        let row: LabelRow = row?;
        let mut seq = bin_frames(&stream.slice(row.start, row.end), opts.fps, opts.max_frames)?;
        seq.label = row.class;
        seq.subject_id = subject;
        out.push(seq);
    }
    Ok(out)
}

/// Loads every recording under `root` and splits by subject.
pub fn load_gesture_dir(root: &Path, opts: &GestureOptions) -> Result<Dataset> {
    let files = recordings(root)?;
    if files.is_empty() {
        return Err(Error::MissingFile(root.join("*.aedat")));
    }
    let mut samples = Vec::new();
    for f in &files {
        samples.extend(load_recording(f, opts)?);
    }
    let (train, test) = split_dataset(samples)?;
    Dataset::new(EXCLUDED_LABEL as usize - 1, train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{encode_events, Polarity};

    #[test]
    fn subject_ids() {
        assert_eq!(subject_of("user07_led"), Some(7));
        assert_eq!(subject_of("user29_natural"), Some(29));
        assert_eq!(subject_of("subject1"), None);
    }

    #[test]
    fn downsample_merges_blocks() {
        let mut s = EventStream::new((128, 128));
        s.events.push(Event { x: 127, y: 5, polarity: Polarity::On, t: 0 });
        let d = downsample(&s, 4);
        assert_eq!(d.sensor_size, (32, 32));
        assert_eq!((d.events[0].x, d.events[0].y), (31, 1));
        assert!(d.is_valid());
    }

    #[test]
    fn directory_split() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = EventStream::new((128, 128));
        for t in [0u64, 50_000, 1_000_000, 1_050_000] {
            s.events.push(Event { x: 3, y: 4, polarity: Polarity::Off, t });
        }
        for stem in ["user02_led", "user25_led"] {
            fs::write(dir.path().join(format!("{stem}.aedat")), encode_events(&s)).unwrap();
            fs::write(
                dir.path().join(format!("{stem}_labels.csv")),
                "class,startTime_usec,endTime_usec\n3,0,100000\n11,1000000,1100000\n",
            )
            .unwrap();
        }
        let opts = GestureOptions { max_frames: 10, downsample: 8, ..Default::default() };
        let ds = load_gesture_dir(dir.path(), &opts).unwrap();
        assert_eq!(ds.n_classes, 10);
        assert_eq!((ds.train.len(), ds.test.len()), (1, 1));
        assert_eq!(ds.train[0].label, 2);
        assert_eq!(ds.shape, (2, 16, 16));
        assert_eq!(ds.train[0].spike_count(), 2);
    }

    #[test]
    fn missing_labels_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("user01_led.aedat");
        fs::write(&path, encode_events(&EventStream::new((128, 128)))).unwrap();
        match load_gesture_dir(dir.path(), &GestureOptions::default()) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("user01_led_labels.csv")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
