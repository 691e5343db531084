//! Counting accuracy and coordinate-grounding metrics.
//!
//! Grid predictions are matched one-to-one by exact cell: every ground-truth
//! cell absorbs at most one prediction, repeated predictions of a matched cell
//! are false positives, and pairs that do not name an in-bounds cell are
//! counted as out-of-bounds false positives with no cell attribution.
//! Continuous predictions (normalized real-image points) are matched with a
//! minimum-cost assignment under a distance threshold.
//!
//! Split-level precision, recall and F1 are micro-averaged from summed
//! tallies; a macro F1 (mean of per-sample F1) is reported alongside.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::parse::{CoordPair, ParsedResponse};
use crate::prompt::Approach;
use crate::scene::{GridCoord, GridDims};

/// Default match radius for normalized `[0, 100]` coordinates.
pub const DEFAULT_TAU: f64 = 5.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Tally {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2TP / (2TP + FP + FN)`; 1 when there is nothing to find and nothing predicted.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    fn add(&mut self, other: &Tally) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Outcome of matching one sample's predictions against its ground truth.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tally: Tally,
    /// Ground-truth cells that were matched.
    pub tp_cells: Vec<GridCoord>,
    /// In-bounds predictions left unmatched (duplicates included).
    pub fp_cells: Vec<GridCoord>,
    pub fn_cells: Vec<GridCoord>,
    pub oob_count: u64,
}

impl MatchResult {
    pub fn f1(&self) -> f64 {
        self.tally.f1()
    }
}

/// One-to-one exact-cell matching of grid predictions.
pub fn match_grid(pred: &[CoordPair], gt: &[GridCoord], dims: GridDims) -> MatchResult {
    let mut truth: Vec<GridCoord> = gt.to_vec();
    truth.sort_unstable();
    truth.dedup();
    let mut matched = vec![false; truth.len()];
    let mut out = MatchResult::default();
    for p in pred {
        match p.as_cell(dims) {
            None => {
                out.oob_count += 1;
                out.tally.fp += 1;
            }
            Some(cell) => match truth.binary_search(&cell) {
                Ok(i) if !matched[i] => {
                    matched[i] = true;
                    out.tally.tp += 1;
                    out.tp_cells.push(cell);
                }
                _ => {
                    out.tally.fp += 1;
                    out.fp_cells.push(cell);
                }
            },
        }
    }
    for (cell, hit) in truth.iter().zip(matched) {
        if !hit {
            out.tally.fn_ += 1;
            out.fn_cells.push(*cell);
        }
    }
    out
}

/// Whether the deduplicated predicted cell set equals `gt` exactly.
pub fn exact_match(pred: &[CoordPair], gt: &[GridCoord], dims: GridDims) -> bool {
    let mut cells = Vec::with_capacity(pred.len());
    for p in pred {
        match p.as_cell(dims) {
            Some(c) => cells.push(c),
            None => return false,
        }
    }
    cells.sort_unstable();
    cells.dedup();
    let mut truth = gt.to_vec();
    truth.sort_unstable();
    truth.dedup();
    cells == truth
}

/// Whether the number of emitted coordinates equals the stated count.
pub fn consistency(parsed: &ParsedResponse) -> bool {
    parsed.answer >= 0 && parsed.coord_count as i64 == parsed.answer
}

/// Result of thresholded minimum-cost matching of continuous points.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContinuousMatch {
    pub tally: Tally,
    /// `(prediction index, ground-truth index)` pairs within the threshold.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of distances over matched pairs.
    pub cost: f64,
}

fn distance(a: &CoordPair, b: &CoordPair) -> f64 {
    libm::hypot(a.a - b.a, a.b - b.b)
}

/// Minimum-cost assignment for a square cost matrix (row-major, `n`×`n`).
/// Returns `assignment[row] = column`.
fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    // Shortest augmenting path with potentials, 1-based internally.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Matches predictions to ground truth, maximizing the number of pairs within
/// `tau` and, among those, minimizing the total Euclidean distance.
pub fn match_continuous(pred: &[CoordPair], gt: &[CoordPair], tau: f64) -> ContinuousMatch {
    let n = pred.len().max(gt.len());
    if n == 0 {
        return ContinuousMatch::default();
    }
    // Any extra in-threshold pair must beat every possible distance saving.
    let big = (n as f64 + 1.0) * tau + 1.0;
    let mut cost = vec![big; n * n];
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let d = distance(p, g);
            if d <= tau {
                cost[i * n + j] = d;
            }
        }
    }
    let assignment = hungarian(&cost, n);
    let mut out = ContinuousMatch::default();
    for (i, &j) in assignment.iter().enumerate() {
        if i < pred.len() && j < gt.len() && cost[i * n + j] < big {
            out.pairs.push((i, j));
            out.cost += cost[i * n + j];
        }
    }
    let tp = out.pairs.len() as u64;
    out.tally = Tally { tp, fp: pred.len() as u64 - tp, fn_: gt.len() as u64 - tp };
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricsError {
    LengthMismatch { preds: usize, labels: usize },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::LengthMismatch { preds, labels } => {
                write!(f, "{preds} predictions but {labels} labels")
            }
        }
    }
}

impl core::error::Error for MetricsError {}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hits {
    pub correct: u64,
    pub total: u64,
}

impl Hits {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn record(&mut self, ok: bool) {
        self.total += 1;
        self.correct += u64::from(ok);
    }

    fn add(&mut self, other: &Hits) {
        self.correct += other.correct;
        self.total += other.total;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub overall: Hits,
    pub per_label: BTreeMap<i64, Hits>,
}

/// Exact-equality accuracy, overall and grouped by label.
pub fn accuracy(preds: &[i64], labels: &[i64]) -> Result<AccuracyReport, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch { preds: preds.len(), labels: labels.len() });
    }
    let mut report = AccuracyReport { overall: Hits::default(), per_label: BTreeMap::new() };
    for (p, l) in preds.iter().zip(labels) {
        report.overall.record(p == l);
        report.per_label.entry(*l).or_default().record(p == l);
    }
    Ok(report)
}

/// Per-cell F1 (percent) from aggregated cell tallies; `None` where a cell
/// had no ground truth and no prediction.
pub fn cell_f1_map(results: &[MatchResult], dims: GridDims) -> Vec<Option<f64>> {
    let mut cells = vec![Tally::default(); dims.cell_count()];
    for r in results {
        attribute_cells(&mut cells, r, dims);
    }
    cells.iter().map(cell_percent).collect()
}

fn attribute_cells(cells: &mut [Tally], r: &MatchResult, dims: GridDims) {
    for c in &r.tp_cells {
        cells[dims.index(*c)].tp += 1;
    }
    for c in &r.fp_cells {
        cells[dims.index(*c)].fp += 1;
    }
    for c in &r.fn_cells {
        cells[dims.index(*c)].fn_ += 1;
    }
}

fn cell_percent(t: &Tally) -> Option<f64> {
    if t.is_empty() {
        None
    } else {
        Some(100.0 * t.f1())
    }
}

/// Ground truth for one evaluation item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GroundTruth {
    Grid { dims: GridDims, cells: Vec<GridCoord> },
    Points(Vec<CoordPair>),
}

/// What the scorer needs to know about a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub label: i64,
    pub truth: GroundTruth,
    pub distractors: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub matched: MatchResult,
    pub exact: bool,
    pub predictions: u64,
}

/// Per-sample score, the unit of aggregation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub label: i64,
    pub prediction: i64,
    pub correct: bool,
    pub consistent: bool,
    pub distractors: u32,
    /// Present for pointing approaches.
    pub grounding: Option<Grounding>,
    /// Grid dims for cell attribution, when the truth is a grid.
    pub dims: Option<GridDims>,
}

/// Scores one parsed response.
pub fn score(item: &EvalItem, parsed: &ParsedResponse, approach: Approach, tau: f64) -> SampleScore {
    let prediction = parsed.prediction(approach);
    let (grounding, dims) = if approach.points() {
        match &item.truth {
            GroundTruth::Grid { dims, cells } => {
                let matched = match_grid(&parsed.coords, cells, *dims);
                let exact = exact_match(&parsed.coords, cells, *dims);
                (Some(Grounding { matched, exact, predictions: parsed.coords.len() as u64 }), Some(*dims))
            }
            GroundTruth::Points(points) => {
                let m = match_continuous(&parsed.coords, points, tau);
                let exact = m.tally.fp == 0 && m.tally.fn_ == 0;
                let oob = parsed
                    .coords
                    .iter()
                    .filter(|p| !(0.0..=100.0).contains(&p.a) || !(0.0..=100.0).contains(&p.b))
                    .count() as u64;
                let matched = MatchResult { tally: m.tally, oob_count: oob, ..MatchResult::default() };
                (Some(Grounding { matched, exact, predictions: parsed.coords.len() as u64 }), None)
            }
        }
    } else {
        (None, None)
    };
    SampleScore {
        label: item.label,
        prediction,
        correct: prediction == item.label,
        consistent: consistency(parsed),
        distractors: item.distractors,
        grounding,
        dims,
    }
}

/// Associative accumulator of sample scores.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTally {
    pub accuracy: Hits,
    pub per_label: BTreeMap<i64, Hits>,
    pub per_distractors: BTreeMap<u32, Hits>,
    pub grounding: Tally,
    pub grounded_samples: u64,
    pub exact: u64,
    pub consistent: u64,
    pub predictions: u64,
    pub oob: u64,
    pub macro_f1_sum: f64,
    pub dims: Option<GridDims>,
    pub cells: Vec<Tally>,
}

impl MetricTally {
    pub fn new() -> Self {
        MetricTally::default()
    }

    pub fn add(&mut self, s: &SampleScore) {
        self.accuracy.record(s.correct);
        self.per_label.entry(s.label).or_default().record(s.correct);
        self.per_distractors.entry(s.distractors).or_default().record(s.correct);
        if let Some(g) = &s.grounding {
            self.grounded_samples += 1;
            self.grounding.add(&g.matched.tally);
            self.exact += u64::from(g.exact);
            self.consistent += u64::from(s.consistent);
            self.predictions += g.predictions;
            self.oob += g.matched.oob_count;
            self.macro_f1_sum += g.matched.tally.f1();
            if let Some(dims) = s.dims {
                if self.cells.is_empty() {
                    self.cells = vec![Tally::default(); dims.cell_count()];
                    self.dims = Some(dims);
                }
                attribute_cells(&mut self.cells, &g.matched, dims);
            }
        }
    }

    pub fn merge(&mut self, other: &MetricTally) {
        self.accuracy.add(&other.accuracy);
        for (k, v) in &other.per_label {
            self.per_label.entry(*k).or_default().add(v);
        }
        for (k, v) in &other.per_distractors {
            self.per_distractors.entry(*k).or_default().add(v);
        }
        self.grounding.add(&other.grounding);
        self.grounded_samples += other.grounded_samples;
        self.exact += other.exact;
        self.consistent += other.consistent;
        self.predictions += other.predictions;
        self.oob += other.oob;
        self.macro_f1_sum += other.macro_f1_sum;
        if self.cells.is_empty() {
            self.cells = other.cells.clone();
            self.dims = other.dims;
        } else {
            for (a, b) in self.cells.iter_mut().zip(&other.cells) {
                a.add(b);
            }
        }
    }

    pub fn report(&self) -> MetricReport {
        let grounded = self.grounded_samples;
        let frac = |n: u64| if grounded == 0 { None } else { Some(n as f64 / grounded as f64) };
        MetricReport {
            samples: self.accuracy.total,
            accuracy: self.accuracy.rate(),
            per_count: self.per_label.iter().map(|(k, h)| CountRow { key: *k, n: h.total, accuracy: h.rate() }).collect(),
            per_distractors: self
                .per_distractors
                .iter()
                .map(|(k, h)| CountRow { key: i64::from(*k), n: h.total, accuracy: h.rate() })
                .collect(),
            grounded_samples: grounded,
            precision: (grounded > 0).then(|| self.grounding.precision()),
            recall: (grounded > 0).then(|| self.grounding.recall()),
            f1: (grounded > 0).then(|| self.grounding.f1()),
            macro_f1: (grounded > 0).then(|| self.macro_f1_sum / grounded as f64),
            exact_match: frac(self.exact),
            consistency: frac(self.consistent),
            oob_rate: (grounded > 0).then(|| {
                if self.predictions == 0 {
                    0.0
                } else {
                    self.oob as f64 / self.predictions as f64
                }
            }),
            tally: self.grounding,
            dims: self.dims,
            cell_f1: self.cells.iter().map(cell_percent).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub key: i64,
    pub n: u64,
    pub accuracy: f64,
}

/// Split-level summary. Rates are fractions in `[0, 1]`; `cell_f1` holds
/// row-major per-cell F1 percentages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub samples: u64,
    pub accuracy: f64,
    pub per_count: Vec<CountRow>,
    pub per_distractors: Vec<CountRow>,
    pub grounded_samples: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub macro_f1: Option<f64>,
    pub exact_match: Option<f64>,
    pub consistency: Option<f64>,
    pub oob_rate: Option<f64>,
    pub tally: Tally,
    pub dims: Option<GridDims>,
    pub cell_f1: Vec<Option<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use proptest::prelude::*;

    fn pairs(v: &[(f64, f64)]) -> Vec<CoordPair> {
        v.iter().map(|(a, b)| CoordPair::new(*a, *b)).collect()
    }

    fn cells(v: &[(u8, u8)]) -> Vec<GridCoord> {
        v.iter().map(|(r, c)| GridCoord::new(*r, *c)).collect()
    }

    const D: GridDims = GridDims::new(9, 9);

    #[test]
    fn grid_matching_hand_cases() {
        let m = match_grid(&pairs(&[(0.0, 0.0), (1.0, 1.0)]), &cells(&[(0, 0), (2, 2)]), D);
        assert_eq!(m.tally, Tally { tp: 1, fp: 1, fn_: 1 });
        assert_eq!((m.tally.precision(), m.tally.recall(), m.f1()), (0.5, 0.5, 0.5));

        let gt = cells(&[(3, 4), (5, 6)]);
        let m = match_grid(&pairs(&[(5.0, 6.0), (3.0, 4.0)]), &gt, D);
        assert_eq!(m.f1(), 1.0);
        assert!(exact_match(&pairs(&[(5.0, 6.0), (3.0, 4.0)]), &gt, D));

        let m = match_grid(&pairs(&[(0.0, 0.0), (0.0, 0.0)]), &cells(&[(0, 0)]), D);
        assert_eq!(m.tally, Tally { tp: 1, fp: 1, fn_: 0 });
        assert_eq!(m.fp_cells, cells(&[(0, 0)]));

        let m = match_grid(&pairs(&[(9.0, 0.0), (0.0, 0.0)]), &cells(&[(0, 0)]), D);
        assert_eq!(m.oob_count, 1);
        assert_eq!(m.tally.fp, 1);
        assert!(m.fp_cells.is_empty());
    }

    #[test]
    fn exact_match_cases() {
        let gt = cells(&[(1, 1), (2, 2)]);
        assert!(exact_match(&pairs(&[(2.0, 2.0), (1.0, 1.0)]), &gt, D));
        assert!(!exact_match(&pairs(&[(2.0, 2.0), (1.0, 1.0), (3.0, 3.0)]), &gt, D));
        assert!(!exact_match(&pairs(&[(2.0, 2.0), (1.0, 1.0), (30.0, 3.0)]), &gt, D));
    }

    #[test]
    fn consistency_cases() {
        let p = ParsedResponse::parse("Coordinates: (0, 0), (1, 1), (2, 2). Answer: 3", Approach::Ptc);
        assert!(consistency(&p));
        let p = ParsedResponse::parse("(0, 0) (1, 1). Answer: 3", Approach::Ptc);
        assert!(!consistency(&p));
        let p = ParsedResponse::parse("nothing", Approach::Ptc);
        assert_eq!(p.answer, -1);
        assert!(!consistency(&p));
    }

    #[test]
    fn consistency_and_grounding_are_independent() {
        let gt = cells(&[(0, 0), (1, 1)]);
        // Consistent but wrongly grounded.
        let p = ParsedResponse::parse("Coordinates: (5, 5), (6, 6). Answer: 2", Approach::Ptc);
        assert!(consistency(&p) && !exact_match(&p.coords, &gt, D));
        // Correctly grounded but inconsistent.
        let p = ParsedResponse::parse("Coordinates: (0, 0), (1, 1). Answer: 3", Approach::Ptc);
        assert!(!consistency(&p) && exact_match(&p.coords, &gt, D));
    }

    #[test]
    fn continuous_cases() {
        let pts = pairs(&[(10.0, 10.0), (50.0, 50.0)]);
        assert_eq!(match_continuous(&pts, &pts, 5.0).tally.f1(), 1.0);
        let m = match_continuous(&pairs(&[(16.0, 10.0)]), &pairs(&[(10.0, 10.0)]), 5.0);
        assert_eq!(m.tally, Tally { tp: 0, fp: 1, fn_: 1 });
        let gt = pairs(&[(10.0, 10.0), (30.0, 30.0), (60.0, 20.0)]);
        let pred = pairs(&[(10.5, 10.5), (60.0, 80.0), (29.4, 30.6), (60.7, 20.0)]);
        let m = match_continuous(&pred, &gt, 5.0);
        assert_eq!(m.tally, Tally { tp: 3, fp: 1, fn_: 0 });
        assert!(match_continuous(&[], &[], 5.0).tally.is_empty());
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap().overall.rate(), 1.0);
        assert_eq!(accuracy(&[-1, -1], &[1, 2]).unwrap().overall.rate(), 0.0);
        let r = accuracy(&[1, 2, 3, 4], &[1, 2, 0, 0]).unwrap();
        assert_eq!(r.overall.rate(), 0.5);
        assert_eq!(r.per_label[&0], Hits { correct: 0, total: 2 });
        assert_eq!(accuracy(&[1], &[1, 2]), Err(MetricsError::LengthMismatch { preds: 1, labels: 2 }));
    }

    #[test]
    fn cell_map_blanks_and_drop() {
        let gt = cells(&[(0, 8), (4, 4)]);
        let r = match_grid(&pairs(&[(4.0, 4.0)]), &gt, D);
        let map = cell_f1_map(&[r], D);
        assert_eq!(map[D.index(GridCoord::new(0, 8))], Some(0.0));
        assert_eq!(map[D.index(GridCoord::new(4, 4))], Some(100.0));
        assert_eq!(map[0], None);
    }

    fn score_grid(gt: &[GridCoord], text: &str) -> SampleScore {
        let item = EvalItem {
            label: gt.len() as i64,
            truth: GroundTruth::Grid { dims: D, cells: gt.to_vec() },
            distractors: 0,
        };
        score(&item, &ParsedResponse::parse(text, Approach::Ptc), Approach::Ptc, DEFAULT_TAU)
    }

    fn arb_case() -> impl Strategy<Value = (Vec<GridCoord>, String)> {
        let gt = proptest::collection::btree_set((0u8..9, 0u8..9), 0..6);
        let pred = proptest::collection::vec((0u8..11, 0u8..9), 0..8);
        (gt, pred, 0i64..8).prop_map(|(gt, pred, ans)| {
            let gt: Vec<GridCoord> = gt.into_iter().map(|(r, c)| GridCoord::new(r, c)).collect();
            let list: Vec<alloc::string::String> = pred.iter().map(|(r, c)| alloc::format!("({r}, {c})")).collect();
            (gt, alloc::format!("Coordinates: {}. Answer: {ans}", list.join(", ")))
        })
    }

    proptest! {
        #[test]
        fn micro_f1_matches_brute_force(cases in proptest::collection::vec(arb_case(), 1..20)) {
            let mut tally = MetricTally::new();
            let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
            let mut gt_points = 0u64;
            for (gt, text) in &cases {
                tally.add(&score_grid(gt, text));
                // Independent recount: greedy removal from a multiset copy.
                let mut remaining: Vec<GridCoord> = gt.clone();
                for p in crate::parse::extract_coords(text) {
                    let cell = p.as_cell(D);
                    match cell.and_then(|c| remaining.iter().position(|g| *g == c)) {
                        Some(i) => { remaining.remove(i); tp += 1; }
                        None => fp += 1,
                    }
                }
                fn_ += remaining.len() as u64;
                gt_points += gt.len() as u64;
            }
            let r = tally.report();
            prop_assert_eq!(r.tally, Tally { tp, fp, fn_ });
            let expect = if 2 * tp + fp + fn_ == 0 { 1.0 } else { (2 * tp) as f64 / (2 * tp + fp + fn_) as f64 };
            prop_assert_eq!(r.f1.unwrap(), expect);
            let cell_gt: u64 = tally.cells.iter().map(|c| c.tp + c.fn_).sum();
            prop_assert_eq!(cell_gt, gt_points);
        }

        #[test]
        fn aggregation_is_order_independent(cases in proptest::collection::vec(arb_case(), 1..20), split in 0usize..20) {
            let scores: Vec<SampleScore> = cases.iter().map(|(g, t)| score_grid(g, t)).collect();
            let mut forward = MetricTally::new();
            scores.iter().for_each(|s| forward.add(s));
            let k = split.min(scores.len());
            let (mut left, mut right) = (MetricTally::new(), MetricTally::new());
            scores[k..].iter().rev().for_each(|s| right.add(s));
            scores[..k].iter().rev().for_each(|s| left.add(s));
            right.merge(&left);
            let (a, b) = (forward.report(), right.report());
            prop_assert_eq!(a.tally, b.tally);
            prop_assert_eq!(&a.cell_f1, &b.cell_f1);
            prop_assert_eq!(a.accuracy, b.accuracy);
            prop_assert_eq!(a.exact_match, b.exact_match);
            prop_assert_eq!(a.consistency, b.consistency);
            prop_assert!((a.macro_f1.unwrap() - b.macro_f1.unwrap()).abs() < 1e-12);
        }

        #[test]
        fn perfect_f1_without_duplicates_is_exact_match((gt, text) in arb_case()) {
            let coords = crate::parse::extract_coords(&text);
            let m = match_grid(&coords, &gt, D);
            let mut cells: Vec<_> = coords.iter().filter_map(|p| p.as_cell(D)).collect();
            cells.sort_unstable();
            let unique = { let mut c = cells.clone(); c.dedup(); c.len() == coords.len() };
            if unique {
                prop_assert_eq!(m.f1() == 1.0, exact_match(&coords, &gt, D));
            }
            if exact_match(&coords, &gt, D) && unique {
                prop_assert_eq!(m.f1(), 1.0);
            }
        }
    }
}
