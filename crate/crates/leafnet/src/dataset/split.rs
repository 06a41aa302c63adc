//! Deterministic stratified splitting.
//!
//! Fractions are stored as basis points (1/10000) so per-class counts are
//! exact integer arithmetic: `n_train = n * train_bp / 10000` (floor),
//! `n_val = n * val_bp / 10000` (floor), and the remainder goes to test.
//! No record is ever dropped.

use super::{DataError, DataError::InvalidConfig, ManifestRecord, Split};
use crate::imaging::SEVERITY_CLASSES;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StratifyOn {
    Stress,
    Severity,
}

impl StratifyOn {
    pub fn as_str(&self) -> &'static str {
        match self {
            StratifyOn::Stress => "stress",
            StratifyOn::Severity => "severity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stress" => Some(StratifyOn::Stress),
            "severity" => Some(StratifyOn::Severity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    /// Basis points out of 10000; must sum to 10000. Default 7000/1500/1500.
    pub train_bp: u32,
    pub val_bp: u32,
    pub test_bp: u32,
    pub seed: u64,
    pub stratify_on: StratifyOn,
    /// Keep any split already present and assign only the rest.
    pub respect_existing: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_bp: 7000,
            val_bp: 1500,
            test_bp: 1500,
            seed: 0,
            stratify_on: StratifyOn::Stress,
            respect_existing: false,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.train_bp + self.val_bp + self.test_bp != 10_000 {
            return Err(InvalidConfig(format!(
                "split fractions must sum to 1: {}/{}/{} bp",
                self.train_bp, self.val_bp, self.test_bp
            )));
        }
        Ok(())
    }

    /// Exact per-class sizes under the floor rule.
    pub fn class_sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = n * self.train_bp as usize / 10_000;
        let val = n * self.val_bp as usize / 10_000;
        (train, val, n - train - val)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitSummary {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Stratification classes that had no records (skipped with a warning).
    pub empty_classes: Vec<String>,
}

/// Assigns splits in place. Per class, indices shuffle under a stream keyed
/// by (seed, class index) and the floor rule fixes the cut points.
pub fn stratified_split(records: &mut [ManifestRecord], spec: &SplitSpec) -> Result<SplitSummary, DataError> {
    spec.validate()?;
    if records.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    if !spec.respect_existing && records.iter().any(|r| r.split.is_some()) {
        return Err(DataError::AlreadySplit);
    }

    let class_count = match spec.stratify_on {
        StratifyOn::Stress => super::STRESS_CLASSES.len(),
        StratifyOn::Severity => SEVERITY_CLASSES.len(),
    };
    let class_of = |r: &ManifestRecord| -> usize {
        match spec.stratify_on {
            StratifyOn::Stress => r.stress.index(),
            StratifyOn::Severity => r.severity.map(|s| s.rank()).unwrap_or(0),
        }
    };
    let class_name = |c: usize| -> String {
        match spec.stratify_on {
            StratifyOn::Stress => super::STRESS_CLASSES[c].as_str().to_string(),
            StratifyOn::Severity => SEVERITY_CLASSES[c].as_str().to_string(),
        }
    };

    let mut summary = SplitSummary::default();
    for c in 0..class_count {
        let mut indices: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| class_of(r) == c && (!spec.respect_existing || r.split.is_none()))
            .map(|(i, _)| i)
            .collect();
        if indices.is_empty() {
            summary.empty_classes.push(class_name(c));
            continue;
        }
        let mut stream = RngStream::keyed(spec.seed, &[0x51e1, c as u64]);
        stream.shuffle(&mut indices);
        let (n_train, n_val, _) = spec.class_sizes(indices.len());
        for (pos, &idx) in indices.iter().enumerate() {
            let split = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            records[idx].split = Some(split);
        }
    }
    for r in records.iter() {
        match r.split {
            Some(Split::Train) => summary.train += 1,
            Some(Split::Val) => summary.val += 1,
            Some(Split::Test) => summary.test += 1,
            None => {}
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetKind, StressClass, STRESS_CLASSES};
    use crate::imaging::SeverityClass;
    use std::path::PathBuf;

    fn records_with_counts(counts: &[usize; 5]) -> Vec<ManifestRecord> {
        let mut out = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                out.push(ManifestRecord {
                    path: PathBuf::from(format!("img/{c}_{i}.ppm")),
                    kind: DatasetKind::Leaf,
                    stress: STRESS_CLASSES[c],
                    severity: Some(SeverityClass::VeryLow),
                    split: None,
                });
            }
        }
        out
    }

    fn per_class_counts(records: &[ManifestRecord]) -> [[usize; 3]; 5] {
        let mut out = [[0usize; 3]; 5];
        for r in records {
            let s = match r.split.unwrap() {
                Split::Train => 0,
                Split::Val => 1,
                Split::Test => 2,
            };
            out[r.stress.index()][s] += 1;
        }
        out
    }

    #[test]
    fn class_of_ten_splits_7_1_2() {
        let spec = SplitSpec::default();
        assert_eq!(spec.class_sizes(10), (7, 1, 2));
    }

    #[test]
    fn reference_class_counts_follow_floor_rule() {
        // 272/387/531/348/147 leaf-class counts.
        let mut records = records_with_counts(&[272, 387, 531, 348, 147]);
        let spec = SplitSpec::default();
        let summary = stratified_split(&mut records, &spec).unwrap();
        let per = per_class_counts(&records);
        assert_eq!(per[0], [190, 40, 42]);
        assert_eq!(per[1], [270, 58, 59]);
        assert_eq!(per[2], [371, 79, 81]);
        assert_eq!(per[3], [243, 52, 53]);
        assert_eq!(per[4], [102, 22, 23]);
        assert_eq!(summary.train, 1176);
        assert_eq!(summary.val, 251);
        assert_eq!(summary.test, 258);
        assert_eq!(summary.train + summary.val + summary.test, 1685);
    }

    #[test]
    fn same_seed_same_assignment() {
        let mut a = records_with_counts(&[20, 15, 10, 5, 30]);
        let mut b = records_with_counts(&[20, 15, 10, 5, 30]);
        let spec = SplitSpec {
            seed: 99,
            ..SplitSpec::default()
        };
        stratified_split(&mut a, &spec).unwrap();
        stratified_split(&mut b, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seed_differs() {
        let mut a = records_with_counts(&[40, 40, 40, 40, 40]);
        let mut b = records_with_counts(&[40, 40, 40, 40, 40]);
        stratified_split(&mut a, &SplitSpec { seed: 1, ..SplitSpec::default() }).unwrap();
        stratified_split(&mut b, &SplitSpec { seed: 2, ..SplitSpec::default() }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn partition_property() {
        let mut records = records_with_counts(&[13, 7, 29, 3, 17]);
        stratified_split(&mut records, &SplitSpec::default()).unwrap();
        assert!(records.iter().all(|r| r.split.is_some()));
    }

    #[test]
    fn empty_class_is_reported_not_fatal() {
        let mut records = records_with_counts(&[10, 0, 10, 0, 10]);
        let summary = stratified_split(&mut records, &SplitSpec::default()).unwrap();
        assert_eq!(summary.empty_classes, vec!["leaf_miner", "brown_leaf_spot"]);
        assert_eq!(summary.train + summary.val + summary.test, 30);
    }

    #[test]
    fn existing_assignment_rejected_without_flag() {
        let mut records = records_with_counts(&[4, 0, 0, 0, 0]);
        records[0].split = Some(Split::Test);
        assert!(matches!(
            stratified_split(&mut records, &SplitSpec::default()),
            Err(DataError::AlreadySplit)
        ));
        let spec = SplitSpec {
            respect_existing: true,
            ..SplitSpec::default()
        };
        stratified_split(&mut records, &spec).unwrap();
        assert_eq!(records[0].split, Some(Split::Test));
        assert!(records.iter().all(|r| r.split.is_some()));
    }

    #[test]
    fn bad_fractions_rejected() {
        let mut records = records_with_counts(&[4, 0, 0, 0, 0]);
        let spec = SplitSpec {
            train_bp: 8000,
            val_bp: 1500,
            test_bp: 1500,
            ..SplitSpec::default()
        };
        assert!(stratified_split(&mut records, &spec).is_err());
    }
}
