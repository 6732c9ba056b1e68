use super::FrameSequence;
use crate::error::{Error, Result};

pub const N_SUBJECTS: u32 = 29;
/// Subjects `1..=23` train, the rest test.
pub const LAST_TRAIN_SUBJECT: u32 = 23;
/// The "other gestures" class, dropped from both splits.
pub const EXCLUDED_LABEL: u32 = 11;

/// Splits DVS128-Gesture samples by subject and removes the excluded class.
///
/// Input labels are the raw 1-based gesture ids (1..=11); output labels are
/// 0-based over the 10 retained classes.
pub fn split_dataset(
    samples: Vec<FrameSequence>,
) -> Result<(Vec<FrameSequence>, Vec<FrameSequence>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut s in samples {
        if !(1..=N_SUBJECTS).contains(&s.subject_id) {
            return Err(Error::UnknownSubject(s.subject_id));
        }
        if !(1..=EXCLUDED_LABEL).contains(&s.label) {
            return Err(Error::UnknownLabel(s.label));
        }
        if s.label == EXCLUDED_LABEL {
            continue;
        }
        s.label -= 1;
        if s.subject_id <= LAST_TRAIN_SUBJECT {
            train.push(s);
        } else {
            test.push(s);
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(subject: u32, label: u32) -> FrameSequence {
        let mut s = FrameSequence::empty(1, (2, 2, 2), label);
        s.subject_id = subject;
        s
    }

    #[test]
    fn subject_decides_split() {
        let (train, test) = split_dataset(vec![sample(5, 3), sample(27, 3)]).unwrap();
        assert_eq!(train.len(), 1);
        assert_eq!(test.len(), 1);
        assert_eq!(train[0].subject_id, 5);
        assert_eq!(train[0].label, 2);
        assert_eq!(test[0].subject_id, 27);
    }

    #[test]
    fn class_eleven_removed() {
        let (train, test) = split_dataset(vec![sample(5, 11), sample(28, 11)]).unwrap();
        assert!(train.is_empty() && test.is_empty());
    }

    #[test]
    fn boundaries() {
        let (train, test) = split_dataset(vec![sample(23, 1), sample(24, 10)]).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));
        assert_eq!(test[0].label, 9);
    }

    #[test]
    fn unknown_subject_rejected() {
        assert!(matches!(
            split_dataset(vec![sample(30, 1)]),
            Err(Error::UnknownSubject(30))
        ));
        assert!(matches!(
            split_dataset(vec![sample(0, 1)]),
            Err(Error::UnknownSubject(0))
        ));
    }

    #[test]
    fn partition_covers_retained_samples() {
        let all: Vec<_> = (1..=29)
            .flat_map(|s| (1..=11).map(move |l| sample(s, l)))
            .collect();
        let (train, test) = split_dataset(all).unwrap();
        assert_eq!(train.len() + test.len(), 29 * 10);
        assert_eq!(train.len(), 23 * 10);
        assert!(train.iter().all(|s| s.subject_id <= 23 && s.label < 10));
        assert!(test.iter().all(|s| s.subject_id >= 24 && s.label < 10));
    }
}
