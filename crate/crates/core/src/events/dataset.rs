//! Binned dataset file.
//!
//! All integers little-endian.
//!
//! ```text
//! magic        4 bytes  "RDLD"
//! version      u8       1
//! n_classes    u16
//! P, H, W      u16 x 3
//! bin_width_ms f64
//! n_train      u32
//! n_test       u32
//! samples      n_train + n_test records:
//!     label u32, subject_id u32, T u32,
//!     T frames of (count u32, count x u32 flat index p*H*W + y*W + x)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::FrameSequence;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"RDLD";
pub const DATASET_VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n_classes: usize,
    /// (P, H, W)
    pub shape: (usize, usize, usize),
    pub bin_width_ms: f64,
    pub train: Vec<FrameSequence>,
    pub test: Vec<FrameSequence>,
}

impl Dataset {
    pub fn new(
        n_classes: usize,
        train: Vec<FrameSequence>,
        test: Vec<FrameSequence>,
    ) -> Result<Self> {
        let first = train
            .first()
            .or(test.first())
            .ok_or_else(|| Error::InvalidArgument("dataset has no samples".into()))?;
        let shape = first.shape;
        let bin_width_ms = first.bin_width_ms;
        for s in train.iter().chain(&test) {
            if s.shape != shape {
                return Err(Error::InvalidArgument(format!(
                    "sample shape {:?} differs from {:?}",
                    s.shape, shape
                )));
            }
            if s.label as usize >= n_classes {
                return Err(Error::InvalidArgument(format!(
                    "label {} outside {} classes",
                    s.label, n_classes
                )));
            }
        }
        Ok(Self {
            n_classes,
            shape,
            bin_width_ms,
            train,
            test,
        })
    }

    pub fn class_counts(samples: &[FrameSequence], n_classes: usize) -> Vec<usize> {
        let mut c = vec![0; n_classes];
        for s in samples {
            c[s.label as usize] += 1;
        }
        c
    }
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(&mut w, ds)?;
    w.flush()?;
    Ok(())
}

fn write_to<W: Write>(w: &mut W, ds: &Dataset) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_u8(DATASET_VERSION)?;
    w.write_u16::<LittleEndian>(ds.n_classes as u16)?;
    for d in [ds.shape.0, ds.shape.1, ds.shape.2] {
        w.write_u16::<LittleEndian>(d as u16)?;
    }
    w.write_f64::<LittleEndian>(ds.bin_width_ms)?;
    w.write_u32::<LittleEndian>(ds.train.len() as u32)?;
    w.write_u32::<LittleEndian>(ds.test.len() as u32)?;
    for s in ds.train.iter().chain(&ds.test) {
        w.write_u32::<LittleEndian>(s.label)?;
        w.write_u32::<LittleEndian>(s.subject_id)?;
        w.write_u32::<LittleEndian>(s.frames.len() as u32)?;
        for f in &s.frames {
            w.write_u32::<LittleEndian>(f.len() as u32)?;
            for &i in f {
                w.write_u32::<LittleEndian>(i)?;
            }
        }
    }
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    read_from(&mut r)
}

fn read_from<R: Read>(r: &mut R) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let version = r.read_u8()?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let n_classes = r.read_u16::<LittleEndian>()? as usize;
    let p = r.read_u16::<LittleEndian>()? as usize;
    let h = r.read_u16::<LittleEndian>()? as usize;
    let w = r.read_u16::<LittleEndian>()? as usize;
    let bin_width_ms = r.read_f64::<LittleEndian>()?;
    let n_train = r.read_u32::<LittleEndian>()? as usize;
    let n_test = r.read_u32::<LittleEndian>()? as usize;
    let n_inputs = (p * h * w) as u32;
    let mut samples = Vec::with_capacity(n_train + n_test);
    for _ in 0..n_train + n_test {
        let label = r.read_u32::<LittleEndian>()?;
        let subject_id = r.read_u32::<LittleEndian>()?;
        let t = r.read_u32::<LittleEndian>()? as usize;
        let mut frames = Vec::with_capacity(t);
        for _ in 0..t {
            let n = r.read_u32::<LittleEndian>()? as usize;
            let mut f = Vec::with_capacity(n);
            for _ in 0..n {
                let i = r.read_u32::<LittleEndian>()?;
                if i >= n_inputs {
                    return Err(Error::Format(format!("spike index {i} outside tensor")));
                }
                f.push(i);
            }
            frames.push(f);
        }
        samples.push(FrameSequence {
            frames,
            shape: (p, h, w),
            bin_width_ms,
            label,
            subject_id,
        });
    }
    let test = samples.split_off(n_train);
    Ok(Dataset {
        n_classes,
        shape: (p, h, w),
        bin_width_ms,
        train: samples,
        test,
    })
}
