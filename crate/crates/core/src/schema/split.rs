use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BinaryLabel, MemeRecord, Split};
use crate::error::{Error, Result};

/// Per-label stratified split. Each class contributes
/// `floor(n_c * train_ratio + 0.5)` records to train and the remainder to
/// test. Records keep their input order within each side and get their
/// `split` field set.
pub fn stratified_split(
    records: &[MemeRecord],
    train_ratio: f64,
    seed: u64,
) -> Result<(Vec<MemeRecord>, Vec<MemeRecord>)> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train ratio must lie in (0, 1), got {train_ratio}"
        )));
    }
    if records.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot split an empty dataset".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; records.len()];
    for class in [BinaryLabel::Nonharmful, BinaryLabel::Harmful] {
        let mut members: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == class)
            .map(|(i, _)| i)
            .collect();
        let n_train = train_count(members.len(), train_ratio);
        members.shuffle(&mut rng);
        for &i in &members[..n_train] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, &tr) in records.iter().zip(&in_train) {
        let mut r = r.clone();
        if tr {
            r.split = Split::Train;
            train.push(r);
        } else {
            r.split = Split::Test;
            test.push(r);
        }
    }
    Ok((train, test))
}

pub(crate) fn train_count(class_size: usize, ratio: f64) -> usize {
    ((class_size as f64 * ratio + 0.5).floor() as usize).min(class_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture(nonharmful: usize, harmful: usize) -> Vec<MemeRecord> {
        (0..nonharmful + harmful)
            .map(|i| MemeRecord {
                id: format!("r{i}"),
                image_tokens: vec![],
                text: String::new(),
                label: if i < nonharmful {
                    BinaryLabel::Nonharmful
                } else {
                    BinaryLabel::Harmful
                },
                subcategories: Default::default(),
                cot: None,
                split: Split::Unassigned,
            })
            .collect()
    }

    fn count(rs: &[MemeRecord], l: BinaryLabel) -> usize {
        rs.iter().filter(|r| r.label == l).count()
    }

    #[test]
    fn desk_fixture_counts() {
        let (train, test) = stratified_split(&fixture(60, 40), 0.7, 1).unwrap();
        assert_eq!(count(&train, BinaryLabel::Nonharmful), 42);
        assert_eq!(count(&train, BinaryLabel::Harmful), 28);
        assert_eq!(count(&test, BinaryLabel::Nonharmful), 18);
        assert_eq!(count(&test, BinaryLabel::Harmful), 12);
        assert!(train.iter().all(|r| r.split == Split::Train));
        assert!(test.iter().all(|r| r.split == Split::Test));
    }

    #[test]
    fn same_seed_same_partition() {
        let data = fixture(30, 21);
        assert_eq!(
            stratified_split(&data, 0.7, 9).unwrap(),
            stratified_split(&data, 0.7, 9).unwrap()
        );
        assert_ne!(
            stratified_split(&data, 0.7, 9).unwrap().0,
            stratified_split(&data, 0.7, 10).unwrap().0
        );
    }

    #[test]
    fn empty_class_is_allowed() {
        let (train, test) = stratified_split(&fixture(10, 0), 0.7, 0).unwrap();
        assert_eq!((train.len(), test.len()), (7, 3));
    }

    #[test]
    fn bad_arguments() {
        assert!(stratified_split(&fixture(3, 3), 1.0, 0).is_err());
        assert!(stratified_split(&fixture(3, 3), 0.0, 0).is_err());
        assert!(stratified_split(&[], 0.5, 0).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_stratified_partition(
            nonharmful in 0usize..200,
            harmful in 0usize..200,
            ratio in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            prop_assume!(nonharmful + harmful > 0);
            let data = fixture(nonharmful, harmful);
            let (train, test) = stratified_split(&data, ratio, seed).unwrap();
            let mut ids: Vec<String> = train.iter().chain(&test).map(|r| r.id.clone()).collect();
            ids.sort();
            let mut expect: Vec<String> = data.iter().map(|r| r.id.clone()).collect();
            expect.sort();
            prop_assert_eq!(ids, expect);
            for (class, n) in [(BinaryLabel::Nonharmful, nonharmful), (BinaryLabel::Harmful, harmful)] {
                prop_assert_eq!(count(&train, class), train_count(n, ratio));
                if !train.is_empty() {
                    let total = data.len() as f64;
                    let tr = train.len() as f64;
                    let drift = (count(&train, class) as f64 / tr - n as f64 / total).abs();
                    prop_assert!(drift <= 1.0 / tr + 1e-12, "drift {drift}");
                }
            }
        }
    }
}
