use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ClinicalReport, CorpusError};
use crate::rng::keyed_rng;

/// Guards `floor(ratio * n)` against representation error such as
/// `0.7 * 10 = 6.999...`.
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", from = "[f64; 3]")]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, dev: f64, test: f64) -> Result<Self, CorpusError> {
        let ratios = Self { train, dev, test };
        if [train, dev, test].iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(CorpusError::InvalidRatios(format!(
                "{train},{dev},{test}: ratios must be non-negative"
            )));
        }
        if (train + dev + test - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidRatios(format!(
                "{train},{dev},{test}: ratios must sum to 1"
            )));
        }
        Ok(ratios)
    }

    /// `(train, dev, test)` sizes for a group of `n` reports: floor for train
    /// and dev, remainder to test.
    pub fn allocate(&self, n: usize) -> (usize, usize, usize) {
        let take = |r: f64| ((r * n as f64 + FLOOR_SLACK).floor() as usize).min(n);
        let train = take(self.train);
        let dev = take(self.dev).min(n - train);
        (train, dev, n - train - dev)
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

impl From<SplitRatios> for [f64; 3] {
    fn from(r: SplitRatios) -> Self {
        [r.train, r.dev, r.test]
    }
}

impl From<[f64; 3]> for SplitRatios {
    fn from([train, dev, test]: [f64; 3]) -> Self {
        Self { train, dev, test }
    }
}

/// Split manifest: disjoint id lists covering the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

/// Splits each specialty separately, then concatenates the groups in
/// specialty order. Within a specialty, ids are sorted, shuffled with a
/// generator keyed by `(seed, specialty)` and sliced contiguously.
pub fn stratified_split(
    reports: &[ClinicalReport],
    ratios: SplitRatios,
    seed: u64,
) -> Result<CorpusSplit, CorpusError> {
    if reports.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let ratios = SplitRatios::new(ratios.train, ratios.dev, ratios.test)?;

    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for report in reports {
        groups
            .entry(report.specialty.trim())
            .or_default()
            .push(report.id.as_str());
    }

    let mut split = CorpusSplit {
        seed,
        ratios,
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
    };
    for (specialty, mut ids) in groups {
        ids.sort_unstable();
        ids.shuffle(&mut keyed_rng(seed, specialty));
        let (train, dev, _) = ratios.allocate(ids.len());
        let owned = |s: &[&str]| s.iter().map(|id| id.to_string()).collect::<Vec<_>>();
        split.train.extend(owned(&ids[..train]));
        split.dev.extend(owned(&ids[train..train + dev]));
        split.test.extend(owned(&ids[train + dev..]));
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn corpus(groups: &[(&str, usize)]) -> Vec<ClinicalReport> {
        groups
            .iter()
            .flat_map(|&(specialty, n)| {
                (0..n).map(move |i| ClinicalReport {
                    id: format!("{specialty}-{i}"),
                    specialty: specialty.into(),
                    body: "b".into(),
                    reference: "r".into(),
                })
            })
            .collect()
    }

    #[test]
    fn ten_reports_split_eight_one_one() {
        let s = stratified_split(&corpus(&[("Surgery", 10)]), SplitRatios::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn seven_reports_split_five_zero_two() {
        let s = stratified_split(&corpus(&[("Urology", 7)]), SplitRatios::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (5, 0, 2));
    }

    #[test]
    fn same_seed_same_split() {
        let reports = corpus(&[("A", 13), ("B", 29), ("C", 6)]);
        let a = stratified_split(&reports, SplitRatios::default(), 7).unwrap();
        let b = stratified_split(&reports, SplitRatios::default(), 7).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&reports, SplitRatios::default(), 8).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn input_order_does_not_matter() {
        let reports = corpus(&[("A", 13), ("B", 29)]);
        let mut reversed = reports.clone();
        reversed.reverse();
        assert_eq!(
            stratified_split(&reports, SplitRatios::default(), 3).unwrap(),
            stratified_split(&reversed, SplitRatios::default(), 3).unwrap()
        );
    }

    #[test]
    fn rejects_bad_ratios_and_empty_corpus() {
        assert!(SplitRatios::new(0.8, 0.1, 0.2).is_err());
        assert!(SplitRatios::new(1.1, -0.1, 0.0).is_err());
        assert!(matches!(
            stratified_split(&[], SplitRatios::default(), 0),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn manifest_json_shape() {
        let s = stratified_split(&corpus(&[("A", 2)]), SplitRatios::default(), 5).unwrap();
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["ratios"], serde_json::json!([0.8, 0.1, 0.1]));
        assert_eq!(json["seed"], 5);
    }

    proptest! {
        #[test]
        fn split_partitions_with_floor_rule(sizes in prop::collection::vec(1usize..60, 1..6), seed: u64) {
            let groups: Vec<(String, usize)> = sizes.iter().enumerate().map(|(i, &n)| (format!("s{i}"), n)).collect();
            let refs: Vec<(&str, usize)> = groups.iter().map(|(s, n)| (s.as_str(), *n)).collect();
            let reports = corpus(&refs);
            let split = stratified_split(&reports, SplitRatios::default(), seed).unwrap();

            let all: Vec<&String> = split.train.iter().chain(&split.dev).chain(&split.test).collect();
            let unique: HashSet<&String> = all.iter().copied().collect();
            prop_assert_eq!(all.len(), reports.len());
            prop_assert_eq!(unique.len(), reports.len());

            for (specialty, n) in &refs {
                let prefix = format!("{specialty}-");
                let count = |ids: &[String]| ids.iter().filter(|id| id.starts_with(&prefix)).count();
                let train = (*n * 8) / 10;
                let dev = *n / 10;
                prop_assert_eq!(count(&split.train), train);
                prop_assert_eq!(count(&split.dev), dev);
                prop_assert_eq!(count(&split.test), n - train - dev);
            }
        }
    }
}
