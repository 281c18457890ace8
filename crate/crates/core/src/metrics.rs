//! Raw fact counts, the metrics derived from them, and their aggregation
//! across tasks and evaluators.
//!
//! Per task: precision = R&G / G, recall = R&G / R, f-score is the harmonic
//! mean of the two, accuracy = C / G. Aggregation is macro: per-task
//! metrics first, then the mean over tasks for each (model, evaluator) cell,
//! then the unweighted mean of cells for the row average. Undefined values
//! (zero denominators) are excluded from means and counted, never coerced.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{mean, Scalar};

/// One evaluator's counts for one generated description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawCounts {
    /// Facts in the reference description (R).
    pub r_facts: u32,
    /// Facts in the generated description (G).
    pub g_facts: u32,
    /// Facts shared by both (R&G).
    pub common_facts: u32,
    /// Correct facts in the generated description (C).
    pub correct_facts: u32,
}

impl RawCounts {
    pub const fn new(r_facts: u32, g_facts: u32, common_facts: u32, correct_facts: u32) -> Self {
        Self {
            r_facts,
            g_facts,
            common_facts,
            correct_facts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    /// R&G > min(R, G).
    CommonExceedsMin,
    /// C > G.
    CorrectExceedsGenerated,
    /// R&G > C. Waivable.
    CommonExceedsCorrect,
}

impl Violation {
    pub fn name(self) -> &'static str {
        match self {
            Violation::CommonExceedsMin => "common_facts <= min(r_facts, g_facts)",
            Violation::CorrectExceedsGenerated => "correct_facts <= g_facts",
            Violation::CommonExceedsCorrect => "common_facts <= correct_facts",
        }
    }

    pub fn is_waivable(self) -> bool {
        matches!(self, Violation::CommonExceedsCorrect)
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "violates {}", self.name())
    }
}

/// Every invariant the counts break, in a fixed order. Empty means valid.
pub fn validate_counts(counts: &RawCounts) -> Vec<Violation> {
    let mut out = Vec::new();
    if counts.common_facts > counts.r_facts.min(counts.g_facts) {
        out.push(Violation::CommonExceedsMin);
    }
    if counts.correct_facts > counts.g_facts {
        out.push(Violation::CorrectExceedsGenerated);
    }
    if counts.common_facts > counts.correct_facts {
        out.push(Violation::CommonExceedsCorrect);
    }
    out
}

/// Like [`validate_counts`] but drops waivable violations when `waiver` is set.
pub fn validate_with_waiver(counts: &RawCounts, waiver: bool) -> Vec<Violation> {
    let mut out = validate_counts(counts);
    if waiver {
        out.retain(|v| !v.is_waivable());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid counts: {}", .0.iter().map(|v| v.name()).collect::<Vec<_>>().join("; "))]
pub struct InvalidCounts(pub Vec<Violation>);

/// Per-task metrics; `None` marks a zero denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedMetrics<T> {
    pub precision: Option<T>,
    pub recall: Option<T>,
    pub f_score: Option<T>,
    pub accuracy: Option<T>,
}

impl<T: Scalar> DerivedMetrics<T> {
    pub fn get(&self, metric: Metric) -> Option<&T> {
        match metric {
            Metric::Precision => self.precision.as_ref(),
            Metric::Recall => self.recall.as_ref(),
            Metric::FScore => self.f_score.as_ref(),
            Metric::Accuracy => self.accuracy.as_ref(),
        }
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f_score<T: Scalar>(precision: &T, recall: &T) -> T {
    let denom = precision.clone() + recall.clone();
    if denom.is_zero() {
        return T::zero();
    }
    let two = T::from_count(2);
    two * precision.clone() * recall.clone() / denom
}

fn ratio<T: Scalar>(numer: u32, denom: u32) -> Option<T> {
    (denom > 0).then(|| T::from_ratio(numer.into(), denom.into()))
}

/// Derives the four metrics after validating the counts. Set `waiver` to
/// accept records that break only the waivable invariant.
pub fn derive_metrics<T: Scalar>(counts: &RawCounts, waiver: bool) -> Result<DerivedMetrics<T>, InvalidCounts> {
    let violations = validate_with_waiver(counts, waiver);
    if !violations.is_empty() {
        return Err(InvalidCounts(violations));
    }
    let precision = ratio::<T>(counts.common_facts, counts.g_facts);
    let recall = ratio::<T>(counts.common_facts, counts.r_facts);
    let f = match (&precision, &recall) {
        (Some(p), Some(r)) => Some(f_score(p, r)),
        _ => None,
    };
    Ok(DerivedMetrics {
        precision,
        recall,
        f_score: f,
        accuracy: ratio(counts.correct_facts, counts.g_facts),
    })
}

/// Fluency judgment on a three-level scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceRating {
    Coherent,
    MinorErrors,
    MajorErrors,
}

impl CoherenceRating {
    pub const ALL: [CoherenceRating; 3] = [Self::Coherent, Self::MinorErrors, Self::MajorErrors];

    /// 1, 1/2 or 0.
    pub fn value<T: Scalar>(self) -> T {
        match self {
            Self::Coherent => T::one(),
            Self::MinorErrors => T::from_ratio(1, 2),
            Self::MajorErrors => T::zero(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Coherent => "coherent",
            Self::MinorErrors => "minor_errors",
            Self::MajorErrors => "major_errors",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Self::Coherent => "Coherent",
            Self::MinorErrors => "Minor Errors",
            Self::MajorErrors => "Major Errors",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown coherence label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for CoherenceRating {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
            "coherent" => Ok(Self::Coherent),
            "minor_errors" | "minorerrors" => Ok(Self::MinorErrors),
            "major_errors" | "majorerrors" => Ok(Self::MajorErrors),
            _ => Err(UnknownLabel(s.to_owned())),
        }
    }
}

/// Numeric value of a coherence label given as text.
pub fn coherence_value<T: Scalar>(label: &str) -> Result<T, UnknownLabel> {
    label.parse::<CoherenceRating>().map(CoherenceRating::value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Precision,
    Recall,
    FScore,
    Accuracy,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Precision, Metric::Recall, Metric::FScore, Metric::Accuracy];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Precision => "Precision",
            Metric::Recall => "Recall",
            Metric::FScore => "F-Score",
            Metric::Accuracy => "Accuracy",
        }
    }
}

/// Mean over the tasks where a metric is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStat<T> {
    pub mean: Option<T>,
    pub n_excluded: usize,
}

impl<T: Scalar> MeanStat<T> {
    fn over<'a>(values: impl Iterator<Item = Option<&'a T>>) -> Self {
        let mut defined = Vec::new();
        let mut n_excluded = 0;
        for v in values {
            match v {
                Some(v) => defined.push(v.clone()),
                None => n_excluded += 1,
            }
        }
        Self {
            mean: mean(&defined),
            n_excluded,
        }
    }
}

/// One (model, evaluator) cell aggregated across tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate<T> {
    pub model_id: String,
    pub evaluator_id: String,
    pub precision: MeanStat<T>,
    pub recall: MeanStat<T>,
    pub f_score: MeanStat<T>,
    pub accuracy: MeanStat<T>,
    pub coherence: T,
    pub n_tasks: usize,
}

impl<T: Scalar> CellAggregate<T> {
    pub fn metric(&self, metric: Metric) -> &MeanStat<T> {
        match metric {
            Metric::Precision => &self.precision,
            Metric::Recall => &self.recall,
            Metric::FScore => &self.f_score,
            Metric::Accuracy => &self.accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("no tasks to aggregate")]
    Empty,
    #[error("cells belong to different models: `{0}` and `{1}`")]
    MixedModels(String, String),
}

/// Means each metric over the tasks where it is defined; coherence over all.
pub fn aggregate_cell<T: Scalar>(
    model_id: &str,
    evaluator_id: &str,
    per_task: &[(DerivedMetrics<T>, CoherenceRating)],
) -> Result<CellAggregate<T>, AggregateError> {
    if per_task.is_empty() {
        return Err(AggregateError::Empty);
    }
    let stat = |m: Metric| MeanStat::over(per_task.iter().map(|(d, _)| d.get(m)));
    let coherence: Vec<T> = per_task.iter().map(|(_, c)| c.value()).collect();
    Ok(CellAggregate {
        model_id: model_id.to_owned(),
        evaluator_id: evaluator_id.to_owned(),
        precision: stat(Metric::Precision),
        recall: stat(Metric::Recall),
        f_score: stat(Metric::FScore),
        accuracy: stat(Metric::Accuracy),
        coherence: mean(&coherence).unwrap_or_else(T::zero),
        n_tasks: per_task.len(),
    })
}

/// Average across evaluators for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowAggregate<T> {
    pub model_id: String,
    pub precision: Option<T>,
    pub recall: Option<T>,
    pub f_score: Option<T>,
    pub accuracy: Option<T>,
    pub coherence: Option<T>,
}

impl<T: Scalar> RowAggregate<T> {
    pub fn metric(&self, metric: Metric) -> Option<&T> {
        match metric {
            Metric::Precision => self.precision.as_ref(),
            Metric::Recall => self.recall.as_ref(),
            Metric::FScore => self.f_score.as_ref(),
            Metric::Accuracy => self.accuracy.as_ref(),
        }
    }
}

/// Unweighted mean across evaluators of each defined cell mean.
pub fn aggregate_row<T: Scalar>(cells: &[CellAggregate<T>]) -> Result<RowAggregate<T>, AggregateError> {
    let first = cells.first().ok_or(AggregateError::Empty)?;
    if let Some(other) = cells.iter().find(|c| c.model_id != first.model_id) {
        return Err(AggregateError::MixedModels(
            first.model_id.clone(),
            other.model_id.clone(),
        ));
    }
    let avg = |m: Metric| {
        let defined: Vec<T> = cells.iter().filter_map(|c| c.metric(m).mean.clone()).collect();
        mean(&defined)
    };
    let coherence: Vec<T> = cells.iter().map(|c| c.coherence.clone()).collect();
    Ok(RowAggregate {
        model_id: first.model_id.clone(),
        precision: avg(Metric::Precision),
        recall: avg(Metric::Recall),
        f_score: avg(Metric::FScore),
        accuracy: avg(Metric::Accuracy),
        coherence: mean(&coherence),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Exact;
    use proptest::prelude::*;

    fn derive(r: u32, g: u32, rg: u32, c: u32) -> DerivedMetrics<f64> {
        derive_metrics(&RawCounts::new(r, g, rg, c), false).unwrap()
    }

    #[test]
    fn validate_examples() {
        assert!(validate_counts(&RawCounts::new(5, 4, 3, 4)).is_empty());
        assert_eq!(
            validate_counts(&RawCounts::new(5, 4, 5, 4)),
            vec![Violation::CommonExceedsMin, Violation::CommonExceedsCorrect]
        );
        assert_eq!(
            validate_counts(&RawCounts::new(5, 4, 3, 2)),
            vec![Violation::CommonExceedsCorrect]
        );
        assert_eq!(
            validate_counts(&RawCounts::new(5, 4, 3, 6)),
            vec![Violation::CorrectExceedsGenerated]
        );
    }

    #[test]
    fn waiver_only_lifts_common_vs_correct() {
        assert!(validate_with_waiver(&RawCounts::new(5, 4, 3, 2), true).is_empty());
        assert_eq!(
            validate_with_waiver(&RawCounts::new(5, 4, 5, 4), true),
            vec![Violation::CommonExceedsMin]
        );
    }

    #[test]
    fn derive_examples() {
        let m = derive(4, 5, 3, 5);
        assert_eq!(m.precision, Some(0.6));
        assert_eq!(m.recall, Some(0.75));
        assert!((m.f_score.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.accuracy, Some(1.0));

        let perfect = derive(5, 5, 5, 5);
        assert_eq!(
            perfect,
            DerivedMetrics {
                precision: Some(1.0),
                recall: Some(1.0),
                f_score: Some(1.0),
                accuracy: Some(1.0)
            }
        );

        let disjoint = derive(5, 3, 0, 3);
        assert_eq!(
            disjoint,
            DerivedMetrics {
                precision: Some(0.0),
                recall: Some(0.0),
                f_score: Some(0.0),
                accuracy: Some(1.0)
            }
        );
    }

    #[test]
    fn exact_f_score() {
        let m: DerivedMetrics<Exact> = derive_metrics(&RawCounts::new(4, 5, 3, 5), false).unwrap();
        assert_eq!(m.f_score, Some(Exact::from_ratio(2, 3)));
    }

    #[test]
    fn zero_denominators_are_undefined() {
        let m = derive(0, 0, 0, 0);
        assert_eq!(
            m,
            DerivedMetrics {
                precision: None,
                recall: None,
                f_score: None,
                accuracy: None
            }
        );
        let no_ref = derive(0, 3, 0, 2);
        assert_eq!(no_ref.precision, Some(0.0));
        assert_eq!(no_ref.recall, None);
        assert_eq!(no_ref.f_score, None);
    }

    #[test]
    fn derive_rejects_invalid() {
        let err = derive_metrics::<f64>(&RawCounts::new(5, 4, 5, 4), false).unwrap_err();
        assert!(err.to_string().contains("min(r_facts, g_facts)"));
    }

    #[test]
    fn coherence_mapping() {
        assert_eq!(coherence_value::<f64>("Coherent"), Ok(1.0));
        assert_eq!(coherence_value::<f64>("MinorErrors"), Ok(0.5));
        assert_eq!(coherence_value::<f64>("minor_errors"), Ok(0.5));
        assert_eq!(coherence_value::<f64>("Major Errors"), Ok(0.0));
        assert!(coherence_value::<f64>("Excellent").is_err());
        let json = serde_json::to_string(&CoherenceRating::MinorErrors).unwrap();
        assert_eq!(json, "\"minor_errors\"");
    }

    fn task(p: f64, c: CoherenceRating) -> (DerivedMetrics<f64>, CoherenceRating) {
        (
            DerivedMetrics {
                precision: Some(p),
                recall: Some(p),
                f_score: Some(p),
                accuracy: Some(1.0),
            },
            c,
        )
    }

    #[test]
    fn cell_mean_of_two() {
        let cell = aggregate_cell(
            "m",
            "e",
            &[
                task(0.5, CoherenceRating::Coherent),
                task(0.7, CoherenceRating::MinorErrors),
            ],
        )
        .unwrap();
        assert!((cell.precision.mean.unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(cell.coherence, 0.75);
        assert_eq!(cell.n_tasks, 2);
    }

    #[test]
    fn cell_excludes_undefined() {
        let tasks = vec![
            (derive(4, 2, 1, 2), CoherenceRating::Coherent),
            (derive(4, 0, 0, 0), CoherenceRating::Coherent),
            (derive(4, 4, 3, 4), CoherenceRating::Coherent),
        ];
        let cell = aggregate_cell("m", "e", &tasks).unwrap();
        assert_eq!(cell.precision.mean, Some(0.625));
        assert_eq!(cell.precision.n_excluded, 1);
        assert_eq!(cell.accuracy.n_excluded, 1);
        assert_eq!(cell.recall.n_excluded, 0);
        assert_eq!(cell.coherence, 1.0);
        assert!(matches!(
            aggregate_cell::<f64>("m", "e", &[]),
            Err(AggregateError::Empty)
        ));
    }

    #[test]
    fn cell_with_no_defined_value_reports_none() {
        let cell = aggregate_cell("m", "e", &[(derive(3, 0, 0, 0), CoherenceRating::MajorErrors)]).unwrap();
        assert_eq!(cell.precision.mean, None);
        assert_eq!(cell.coherence, 0.0);
    }

    #[test]
    fn f_mean_is_not_f_of_means() {
        // Ten tasks with full recall whose precision averages to exactly 0.65
        // while F averages to 0.7689, below F(0.65, 1.0) = 0.7879.
        let pairs = [
            (2, 1),
            (3, 1),
            (4, 2),
            (4, 2),
            (4, 4),
            (4, 4),
            (5, 4),
            (6, 4),
            (10, 6),
            (10, 6),
        ];
        let tasks: Vec<_> = pairs
            .iter()
            .map(|&(g, rg)| (derive(rg, g, rg, g), CoherenceRating::Coherent))
            .collect();
        let cell = aggregate_cell("bart-med", "e1", &tasks).unwrap();
        let p = cell.precision.mean.unwrap();
        let r = cell.recall.mean.unwrap();
        let f = cell.f_score.mean.unwrap();
        assert!((p - 0.65).abs() < 1e-12);
        assert!((f - 173.0 / 225.0).abs() < 1e-12);
        assert_eq!(r, 1.0);
        assert!(f < f_score(&p, &r));
    }

    #[test]
    fn row_average() {
        let cell = |e: &str, p: f64| CellAggregate {
            model_id: "lead-3".into(),
            evaluator_id: e.into(),
            precision: MeanStat {
                mean: Some(p),
                n_excluded: 0,
            },
            recall: MeanStat {
                mean: None,
                n_excluded: 1,
            },
            f_score: MeanStat {
                mean: None,
                n_excluded: 1,
            },
            accuracy: MeanStat {
                mean: Some(1.0),
                n_excluded: 0,
            },
            coherence: 1.0,
            n_tasks: 1,
        };
        let row = aggregate_row(&[cell("e1", 0.42), cell("e2", 0.43), cell("e3", 0.46)]).unwrap();
        assert!((row.precision.unwrap() - 0.4366666666666667).abs() < 1e-12);
        assert_eq!(row.recall, None);
        assert_eq!(row.accuracy, Some(1.0));

        let mut other = cell("e2", 0.5);
        other.model_id = "bert-ext".into();
        assert!(matches!(
            aggregate_row(&[cell("e1", 0.4), other]),
            Err(AggregateError::MixedModels(..))
        ));
    }

    fn valid_counts() -> impl Strategy<Value = RawCounts> {
        (0u32..30, 0u32..30)
            .prop_flat_map(|(r, g)| (Just(r), Just(g), 0..=r.min(g)))
            .prop_flat_map(|(r, g, rg)| (Just(r), Just(g), Just(rg), rg..=g))
            .prop_map(|(r, g, rg, c)| RawCounts::new(r, g, rg, c))
    }

    proptest! {
        #[test]
        fn metrics_are_bounded(counts in valid_counts()) {
            prop_assume!(counts.r_facts > 0 && counts.g_facts > 0);
            let m: DerivedMetrics<f64> = derive_metrics(&counts, false).unwrap();
            let (p, r, f, a) = (m.precision.unwrap(), m.recall.unwrap(), m.f_score.unwrap(), m.accuracy.unwrap());
            for v in [p, r, f, a] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(p.min(r) - 1e-15 <= f && f <= p.max(r) + 1e-15);
            prop_assert!(a >= p);
        }

        #[test]
        fn cell_is_permutation_invariant(counts in prop::collection::vec(valid_counts(), 1..12), seed: u64) {
            use rand::{seq::SliceRandom, SeedableRng};
            let tasks: Vec<(DerivedMetrics<Exact>, CoherenceRating)> = counts
                .iter()
                .enumerate()
                .map(|(i, c)| (derive_metrics(c, false).unwrap(), CoherenceRating::ALL[i % 3]))
                .collect();
            let mut shuffled = tasks.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(aggregate_cell("m", "e", &tasks).unwrap(), aggregate_cell("m", "e", &shuffled).unwrap());
        }

        #[test]
        fn all_coherent_means_one(n in 1usize..20) {
            let tasks: Vec<_> = (0..n).map(|_| (derive(1, 1, 1, 1), CoherenceRating::Coherent)).collect();
            prop_assert_eq!(aggregate_cell("m", "e", &tasks).unwrap().coherence, 1.0);
        }
    }
}
