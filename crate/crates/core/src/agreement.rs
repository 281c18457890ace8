//! Krippendorff's alpha over a raters × units matrix with missing values,
//! pairwise breakdowns, and coherence label diagnostics.
//!
//! Alpha is computed from the coincidence matrix: every unit with `m ≥ 2`
//! ratings contributes each ordered pair of values from distinct raters with
//! weight `1 / (m - 1)`. With margins `n_c` and `n = Σ n_c`,
//!
//! ```text
//! D_o = Σ o_ck δ²(c, k) / n
//! D_e = Σ n_c n_k δ²(c, k) / (n (n - 1))
//! α   = 1 - D_o / D_e
//! ```
//!
//! When every pairable value is identical `D_e` is zero; alpha is reported
//! as 1 with the `degenerate` flag set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{derive_metrics, CoherenceRating, DerivedMetrics, Metric};
use crate::scalar::Scalar;
use crate::tasks::Annotation;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgreementError {
    #[error("unknown rater `{0}`")]
    UnknownRater(String),
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("value for rater `{rater}` on unit `{unit}` is not comparable (NaN)")]
    UnorderedValue { rater: String, unit: String },
    #[error("no unit has ratings from two or more raters")]
    NoPairableUnits,
    #[error("unknown distance metric `{0}` (expected interval or nominal)")]
    UnknownMetric(String),
    #[error("at least two raters are required")]
    TooFewRaters,
    #[error("{quantity}: {source}")]
    Quantity {
        quantity: Quantity,
        #[source]
        source: Box<AgreementError>,
    },
}

/// Squared distance between two values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Interval,
    Nominal,
}

impl DistanceMetric {
    pub fn delta_squared<T: Scalar>(self, a: &T, b: &T) -> T {
        match self {
            DistanceMetric::Interval => {
                let d = a.clone() - b.clone();
                d.clone() * d
            }
            DistanceMetric::Nominal if a == b => T::zero(),
            DistanceMetric::Nominal => T::one(),
        }
    }
}

impl FromStr for DistanceMetric {
    type Err = AgreementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "interval" => Ok(Self::Interval),
            "nominal" => Ok(Self::Nominal),
            other => Err(AgreementError::UnknownMetric(other.to_owned())),
        }
    }
}

/// Raters × units matrix; any cell may be missing.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityData<V> {
    raters: Vec<String>,
    units: Vec<String>,
    /// `(unit index, rater index) -> value`.
    values: BTreeMap<(usize, usize), V>,
}

impl<V: Clone> ReliabilityData<V> {
    pub fn new(raters: Vec<String>, units: Vec<String>) -> Self {
        Self {
            raters,
            units,
            values: BTreeMap::new(),
        }
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    /// Stores a value, replacing any previous one for the same cell.
    pub fn set(&mut self, rater: &str, unit: &str, value: V) -> Result<(), AgreementError> {
        let r = self.rater_index(rater)?;
        let u = self
            .units
            .iter()
            .position(|x| x == unit)
            .ok_or_else(|| AgreementError::UnknownUnit(unit.to_owned()))?;
        self.values.insert((u, r), value);
        Ok(())
    }

    pub fn get(&self, rater: &str, unit: &str) -> Option<&V> {
        let r = self.raters.iter().position(|x| x == rater)?;
        let u = self.units.iter().position(|x| x == unit)?;
        self.values.get(&(u, r))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn rater_index(&self, rater: &str) -> Result<usize, AgreementError> {
        self.raters
            .iter()
            .position(|x| x == rater)
            .ok_or_else(|| AgreementError::UnknownRater(rater.to_owned()))
    }

    /// The same data with only `keep` raters (in the given order).
    pub fn restrict(&self, keep: &[&str]) -> Result<Self, AgreementError> {
        let indices = keep
            .iter()
            .map(|r| self.rater_index(r))
            .collect::<Result<Vec<_>, _>>()?;
        let values = self
            .values
            .iter()
            .filter_map(|(&(u, r), v)| {
                indices
                    .iter()
                    .position(|&i| i == r)
                    .map(|new_r| ((u, new_r), v.clone()))
            })
            .collect();
        Ok(Self {
            raters: keep.iter().map(|r| r.to_string()).collect(),
            units: self.units.clone(),
            values,
        })
    }

    /// Values grouped by unit, in rater order. Units without values are skipped.
    pub fn by_unit(&self) -> Vec<(usize, Vec<(usize, &V)>)> {
        let mut out: Vec<(usize, Vec<(usize, &V)>)> = Vec::new();
        for (&(u, r), v) in &self.values {
            match out.last_mut() {
                Some((last, vals)) if *last == u => vals.push((r, v)),
                _ => out.push((u, vec![(r, v)])),
            }
        }
        out
    }

    /// Applies `f` to every stored value.
    pub fn map<W: Clone>(&self, mut f: impl FnMut(&V) -> W) -> ReliabilityData<W> {
        ReliabilityData {
            raters: self.raters.clone(),
            units: self.units.clone(),
            values: self.values.iter().map(|(k, v)| (*k, f(v))).collect(),
        }
    }
}

/// Symmetric table of value co-occurrences within units.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceMatrix<T> {
    /// Distinct pairable values in ascending order.
    pub values: Vec<T>,
    /// `counts[c][k]` is `o_ck` for `values[c]`, `values[k]`.
    pub counts: Vec<Vec<T>>,
    /// Number of values in units with two or more ratings.
    pub n_pairable: usize,
}

impl<T: Scalar> CoincidenceMatrix<T> {
    pub fn build(data: &ReliabilityData<T>) -> Result<Self, AgreementError> {
        let pairable: Vec<Vec<&T>> = data
            .by_unit()
            .into_iter()
            .filter(|(_, vals)| vals.len() >= 2)
            .map(|(u, vals)| {
                vals.into_iter()
                    .map(|(r, v)| {
                        if v.is_unordered() {
                            Err(AgreementError::UnorderedValue {
                                rater: data.raters[r].clone(),
                                unit: data.units[u].clone(),
                            })
                        } else {
                            Ok(v)
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        if pairable.is_empty() {
            return Err(AgreementError::NoPairableUnits);
        }

        let mut values: Vec<T> = pairable.iter().flatten().map(|v| (*v).clone()).collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("ordered values"));
        values.dedup();
        let index_of = |v: &T| {
            values
                .binary_search_by(|probe| probe.partial_cmp(v).expect("ordered values"))
                .expect("value present")
        };

        let k = values.len();
        let mut counts = vec![vec![T::zero(); k]; k];
        let mut n_pairable = 0;
        for unit in &pairable {
            let m = unit.len();
            n_pairable += m;
            let weight = T::one() / T::from_count(m - 1);
            let idx: Vec<usize> = unit.iter().map(|v| index_of(v)).collect();
            for (i, &a) in idx.iter().enumerate() {
                for (j, &b) in idx.iter().enumerate() {
                    if i != j {
                        counts[a][b] = counts[a][b].clone() + weight.clone();
                    }
                }
            }
        }
        Ok(Self {
            values,
            counts,
            n_pairable,
        })
    }

    /// Row sums `n_c`.
    pub fn margins(&self) -> Vec<T> {
        self.counts
            .iter()
            .map(|row| row.iter().cloned().fold(T::zero(), |a, b| a + b))
            .collect()
    }

    pub fn total(&self) -> T {
        self.margins().into_iter().fold(T::zero(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult<T> {
    pub alpha: T,
    pub d_observed: T,
    pub d_expected: T,
    pub n_pairable: usize,
    pub degenerate: bool,
}

impl<T: Scalar> AlphaResult<T> {
    pub fn to_f64(&self) -> AlphaResult<f64> {
        AlphaResult {
            alpha: self.alpha.as_f64(),
            d_observed: self.d_observed.as_f64(),
            d_expected: self.d_expected.as_f64(),
            n_pairable: self.n_pairable,
            degenerate: self.degenerate,
        }
    }
}

pub fn krippendorff_alpha<T: Scalar>(
    data: &ReliabilityData<T>,
    metric: DistanceMetric,
) -> Result<AlphaResult<T>, AgreementError> {
    let matrix = CoincidenceMatrix::build(data)?;
    let margins = matrix.margins();
    let n = T::from_count(matrix.n_pairable);

    let mut observed = T::zero();
    let mut expected = T::zero();
    for (c, vc) in matrix.values.iter().enumerate() {
        for (k, vk) in matrix.values.iter().enumerate() {
            let delta = metric.delta_squared(vc, vk);
            if delta.is_zero() {
                continue;
            }
            observed = observed + matrix.counts[c][k].clone() * delta.clone();
            expected = expected + margins[c].clone() * margins[k].clone() * delta;
        }
    }
    let d_observed = observed / n.clone();
    let d_expected = expected / (n.clone() * (n - T::one()));

    if d_expected.is_zero() {
        return Ok(AlphaResult {
            alpha: T::one(),
            d_observed,
            d_expected,
            n_pairable: matrix.n_pairable,
            degenerate: true,
        });
    }
    Ok(AlphaResult {
        alpha: T::one() - d_observed.clone() / d_expected.clone(),
        d_observed,
        d_expected,
        n_pairable: matrix.n_pairable,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAlpha<T> {
    pub first: String,
    pub second: String,
    /// `None` when the pair shares no unit.
    pub result: Option<AlphaResult<T>>,
}

/// Alpha for every unordered rater pair, in rater order.
pub fn pairwise_alpha<T: Scalar>(
    data: &ReliabilityData<T>,
    metric: DistanceMetric,
) -> Result<Vec<PairwiseAlpha<T>>, AgreementError> {
    let raters = data.raters();
    if raters.len() < 2 {
        return Err(AgreementError::TooFewRaters);
    }
    let mut out = Vec::new();
    for (i, a) in raters.iter().enumerate() {
        for b in &raters[i + 1..] {
            let result = match krippendorff_alpha(&data.restrict(&[a, b])?, metric) {
                Ok(r) => Some(r),
                Err(AgreementError::NoPairableUnits) => None,
                Err(e) => return Err(e),
            };
            out.push(PairwiseAlpha {
                first: a.clone(),
                second: b.clone(),
                result,
            });
        }
    }
    Ok(out)
}

/// Quantities whose agreement is reported: four raw counts, coherence, and
/// the four derived metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    RFacts,
    GFacts,
    CommonFacts,
    CorrectFacts,
    Coherence,
    Precision,
    Recall,
    FScore,
    Accuracy,
}

impl Quantity {
    pub const ALL: [Quantity; 9] = [
        Quantity::RFacts,
        Quantity::GFacts,
        Quantity::CommonFacts,
        Quantity::CorrectFacts,
        Quantity::Coherence,
        Quantity::Precision,
        Quantity::Recall,
        Quantity::FScore,
        Quantity::Accuracy,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Quantity::RFacts => "R facts",
            Quantity::GFacts => "G facts",
            Quantity::CommonFacts => "G&R facts",
            Quantity::CorrectFacts => "G acc facts",
            Quantity::Coherence => "Coherence",
            Quantity::Precision => "Precision",
            Quantity::Recall => "Recall",
            Quantity::FScore => "F-Score",
            Quantity::Accuracy => "Accuracy",
        }
    }

    pub fn is_raw(self) -> bool {
        matches!(
            self,
            Quantity::RFacts | Quantity::GFacts | Quantity::CommonFacts | Quantity::CorrectFacts | Quantity::Coherence
        )
    }

    fn value<T: Scalar>(self, annotation: &Annotation, derived: &DerivedMetrics<T>) -> Option<T> {
        let c = &annotation.counts;
        let count = |n: u32| Some(T::from_ratio(n.into(), 1));
        match self {
            Quantity::RFacts => count(c.r_facts),
            Quantity::GFacts => count(c.g_facts),
            Quantity::CommonFacts => count(c.common_facts),
            Quantity::CorrectFacts => count(c.correct_facts),
            Quantity::Coherence => Some(annotation.coherence.value()),
            Quantity::Precision => derived.get(Metric::Precision).cloned(),
            Quantity::Recall => derived.get(Metric::Recall).cloned(),
            Quantity::FScore => derived.get(Metric::FScore).cloned(),
            Quantity::Accuracy => derived.get(Metric::Accuracy).cloned(),
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AgreementOptions {
    /// Distance used for the coherence row; every other row is interval.
    pub coherence_metric: DistanceMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow<T> {
    pub quantity: Quantity,
    pub overall: AlphaResult<T>,
    pub pairs: Vec<PairwiseAlpha<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport<T> {
    pub raters: Vec<String>,
    pub rows: Vec<AgreementRow<T>>,
}

impl<T: Scalar> AgreementReport<T> {
    pub fn to_f64(&self) -> AgreementReport<f64> {
        AgreementReport {
            raters: self.raters.clone(),
            rows: self
                .rows
                .iter()
                .map(|row| AgreementRow {
                    quantity: row.quantity,
                    overall: row.overall.to_f64(),
                    pairs: row
                        .pairs
                        .iter()
                        .map(|p| PairwiseAlpha {
                            first: p.first.clone(),
                            second: p.second.clone(),
                            result: p.result.as_ref().map(AlphaResult::to_f64),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Unit key for a (task, model) pair.
pub fn unit_key(task_id: &str, model_id: &str) -> String {
    format!("{task_id}/{model_id}")
}

/// Sorted rater ids and sorted `(task, model)` unit keys.
pub fn rater_and_unit_sets(annotations: &[Annotation]) -> (Vec<String>, Vec<String>) {
    let raters: BTreeSet<&str> = annotations.iter().map(|a| a.evaluator_id.as_str()).collect();
    let units: BTreeSet<String> = annotations.iter().map(|a| unit_key(&a.task_id, &a.model_id)).collect();
    (
        raters.into_iter().map(str::to_owned).collect(),
        units.into_iter().collect(),
    )
}

/// Reliability matrix of one quantity over `(task, model)` units. Undefined
/// derived metrics are left missing.
pub fn reliability_for<T: Scalar>(
    annotations: &[Annotation],
    quantity: Quantity,
) -> Result<ReliabilityData<T>, AgreementError> {
    let (raters, units) = rater_and_unit_sets(annotations);
    let mut data = ReliabilityData::new(raters, units);
    for a in annotations {
        // Records reaching this point were validated on import.
        let derived = derive_metrics::<T>(&a.counts, true).unwrap_or(DerivedMetrics {
            precision: None,
            recall: None,
            f_score: None,
            accuracy: None,
        });
        if let Some(v) = quantity.value(a, &derived) {
            data.set(&a.evaluator_id, &unit_key(&a.task_id, &a.model_id), v)?;
        }
    }
    Ok(data)
}

/// Alpha for each of the nine quantities, over all raters and per pair.
pub fn agreement_report<T: Scalar>(
    annotations: &[Annotation],
    options: AgreementOptions,
) -> Result<AgreementReport<T>, AgreementError> {
    let (raters, _) = rater_and_unit_sets(annotations);
    if raters.len() < 2 {
        return Err(AgreementError::NoPairableUnits);
    }
    let rows = Quantity::ALL
        .iter()
        .map(|&quantity| {
            let metric = match quantity {
                Quantity::Coherence => options.coherence_metric,
                _ => DistanceMetric::Interval,
            };
            let wrap = |source| AgreementError::Quantity {
                quantity,
                source: Box::new(source),
            };
            let data = reliability_for::<T>(annotations, quantity).map_err(wrap)?;
            Ok(AgreementRow {
                quantity,
                overall: krippendorff_alpha(&data, metric).map_err(wrap)?,
                pairs: pairwise_alpha(&data, metric).map_err(wrap)?,
            })
        })
        .collect::<Result<_, AgreementError>>()?;
    Ok(AgreementReport { raters, rows })
}

/// Coherence label shares and the all-raters-Coherent rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceDistribution {
    pub total: usize,
    pub coherent: usize,
    pub minor_errors: usize,
    pub major_errors: usize,
    /// Units with at least one judgment.
    pub units: usize,
    /// Units every declared rater judged Coherent.
    pub unanimous_coherent: usize,
}

impl CoherenceDistribution {
    pub fn count(&self, rating: CoherenceRating) -> usize {
        match rating {
            CoherenceRating::Coherent => self.coherent,
            CoherenceRating::MinorErrors => self.minor_errors,
            CoherenceRating::MajorErrors => self.major_errors,
        }
    }

    pub fn share(&self, rating: CoherenceRating) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.count(rating) as f64 / self.total as f64
    }

    pub fn unanimity_rate(&self) -> f64 {
        if self.units == 0 {
            return 0.0;
        }
        self.unanimous_coherent as f64 / self.units as f64
    }
}

pub fn coherence_distribution(data: &ReliabilityData<CoherenceRating>) -> CoherenceDistribution {
    let mut dist = CoherenceDistribution {
        total: 0,
        coherent: 0,
        minor_errors: 0,
        major_errors: 0,
        units: 0,
        unanimous_coherent: 0,
    };
    let n_raters = data.raters().len();
    for (_, ratings) in data.by_unit() {
        dist.units += 1;
        for (_, rating) in &ratings {
            dist.total += 1;
            match rating {
                CoherenceRating::Coherent => dist.coherent += 1,
                CoherenceRating::MinorErrors => dist.minor_errors += 1,
                CoherenceRating::MajorErrors => dist.major_errors += 1,
            }
        }
        if ratings.len() == n_raters && ratings.iter().all(|(_, r)| **r == CoherenceRating::Coherent) {
            dist.unanimous_coherent += 1;
        }
    }
    dist
}

/// Coherence labels of the annotations as a reliability matrix.
pub fn coherence_labels(annotations: &[Annotation]) -> ReliabilityData<CoherenceRating> {
    let (raters, units) = rater_and_unit_sets(annotations);
    let mut data = ReliabilityData::new(raters, units);
    for a in annotations {
        data.set(&a.evaluator_id, &unit_key(&a.task_id, &a.model_id), a.coherence)
            .expect("keys come from the same annotations");
    }
    data
}
