use std::path::Path;

use crate::config::{DatasetSource, RunConfig};
use crate::error::{Error, Result};
use crate::events::{gen_synthetic, read_dataset, Dataset, SyntheticSpec};

/// Train and test splits generated from one spec. The test split uses the
/// next seed so no sample is shared.
pub fn synthetic_dataset(
    spec: &SyntheticSpec,
    train_per_class: usize,
    test_per_class: usize,
    train_counts: Option<Vec<usize>>,
) -> Result<Dataset> {
    let mut train_spec = spec.clone().with_samples(train_per_class);
    train_spec.class_counts = train_counts;
    let test_spec = spec
        .clone()
        .with_samples(test_per_class)
        .with_seed(spec.seed.wrapping_add(1));
    let train = gen_synthetic(&train_spec)?;
    let mut test = gen_synthetic(&test_spec)?;
    for s in &mut test {
        s.subject_id = 1;
    }
    Dataset::new(spec.n_classes, train, test)
}

/// Resolves the dataset named by a configuration. Relative file paths are
/// taken relative to `base`.
pub fn load_dataset(config: &RunConfig, base: Option<&Path>) -> Result<Dataset> {
    match &config.dataset {
        None => Err(Error::InvalidArgument("configuration names no dataset".into())),
        Some(DatasetSource::File(path)) => {
            let p = Path::new(path);
            let full = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.to_path_buf(),
            };
            read_dataset(&full)
        }
        Some(DatasetSource::Synthetic {
            spec,
            train_per_class,
            test_per_class,
            train_counts,
        }) => synthetic_dataset(spec, *train_per_class, *test_per_class, train_counts.clone()),
    }
}
