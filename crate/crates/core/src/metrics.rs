//! Evaluation of survival predictions: Harrell's concordance index, absolute
//! errors against known event times, and cumulative calibration curves.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{fmt_f64, SurvivalDataset};
use crate::error::{Error, Result};

pub const DEFAULT_HORIZONS: usize = 9;

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what}: lengths {a} and {b} differ")))
    }
}

/// Integer pair counts behind a concordance index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConcordanceCounts {
    pub concordant: u64,
    pub tied_prediction: u64,
    pub usable: u64,
}

impl ConcordanceCounts {
    pub fn index(&self) -> f64 {
        if self.usable == 0 {
            0.5
        } else {
            (2 * self.concordant + self.tied_prediction) as f64 / (2 * self.usable) as f64
        }
    }
}

/// Harrell's C: the fraction of usable pairs whose predicted times are
/// ordered like their observed times.
///
/// A pair is usable when the shorter observed time is an event, or when the
/// times are equal and exactly one of the two is an event (that row counts
/// as earlier). Tied predictions score one half.
pub fn concordance(times: &[f64], events: &[bool], predicted: &[f64]) -> Result<f64> {
    Ok(concordance_counts(times, events, predicted)?.index())
}

/// Fenwick tree over prediction ranks.
struct Fenwick(Vec<u64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }

    fn add(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< rank`.
    fn below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

pub fn concordance_counts(times: &[f64], events: &[bool], predicted: &[f64]) -> Result<ConcordanceCounts> {
    check_len(times.len(), events.len(), "concordance times/events")?;
    check_len(times.len(), predicted.len(), "concordance times/predictions")?;
    let n = times.len();

    // Dense ranks of the predictions.
    let mut uniq: Vec<f64> = predicted.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    let rank = |p: f64| uniq.partition_point(|&u| u < p);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));

    let mut later = Fenwick::new(uniq.len());
    let mut n_later: u64 = 0;
    let mut counts = ConcordanceCounts::default();
    let mut start = 0;
    while start < n {
        let t = times[order[start]];
        let mut end = start;
        while end < n && times[order[end]] == t {
            end += 1;
        }
        let group = &order[start..end];
        let mut censored_ranks: Vec<usize> = group
            .iter()
            .filter(|&&i| !events[i])
            .map(|&i| rank(predicted[i]))
            .collect();
        censored_ranks.sort_unstable();
        for &i in group.iter().filter(|&&i| events[i]) {
            let r = rank(predicted[i]);
            let below_later = later.below(r);
            let tied_later = later.below(r + 1) - below_later;
            let below_group = censored_ranks.partition_point(|&c| c < r) as u64;
            let upto_group = censored_ranks.partition_point(|&c| c <= r) as u64;
            let tied_group = upto_group - below_group;
            let m = censored_ranks.len() as u64;
            counts.usable += n_later + m;
            counts.tied_prediction += tied_later + tied_group;
            counts.concordant += (n_later - below_later - tied_later) + (m - upto_group);
        }
        for &i in group {
            later.add(rank(predicted[i]));
        }
        n_later += group.len() as u64;
        start = end;
    }
    Ok(counts)
}

/// Mean absolute error on the time scale.
pub fn mae(true_times: &[f64], predicted: &[f64]) -> Result<f64> {
    check_len(true_times.len(), predicted.len(), "mae")?;
    if true_times.is_empty() {
        return Err(Error::UndefinedMetric("mae of an empty sample".into()));
    }
    let total: f64 = true_times
        .iter()
        .zip(predicted)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(total / true_times.len() as f64)
}

/// Mean absolute error over uncensored rows only.
pub fn event_mae(observed: &[f64], events: &[bool], predicted: &[f64]) -> Result<f64> {
    check_len(observed.len(), events.len(), "event_mae")?;
    check_len(observed.len(), predicted.len(), "event_mae")?;
    let (sum, count) = observed
        .iter()
        .zip(events)
        .zip(predicted)
        .filter(|((_, &e), _)| e)
        .fold((0.0, 0usize), |(s, c), ((t, _), p)| (s + (t - p).abs(), c + 1));
    if count == 0 {
        return Err(Error::UndefinedMetric("event MAE needs at least one event".into()));
    }
    Ok(sum / count as f64)
}

/// Cumulative calibration: at each horizon, the fraction of predicted and of
/// reference times at or below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub horizons: Vec<f64>,
    pub predicted_proportion: Vec<f64>,
    pub observed_proportion: Vec<f64>,
    /// Set when all reference times coincide and only one horizon exists.
    #[serde(default)]
    pub degenerate: bool,
}

impl CalibrationCurve {
    /// Mean of `|predicted - observed|` over horizons.
    pub fn mean_abs_deviation(&self) -> f64 {
        let n = self.horizons.len().max(1) as f64;
        self.predicted_proportion
            .iter()
            .zip(&self.observed_proportion)
            .map(|(p, o)| (p - o).abs())
            .sum::<f64>()
            / n
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Data(format!("calibration CSV: {e}"));
        w.write_record(["horizon", "predicted_proportion", "observed_proportion"])
            .map_err(err)?;
        for i in 0..self.horizons.len() {
            w.write_record([
                fmt_f64(self.horizons[i]),
                fmt_f64(self.predicted_proportion[i]),
                fmt_f64(self.observed_proportion[i]),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Data(format!("calibration CSV: {e}")))
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut c = CalibrationCurve {
            horizons: vec![],
            predicted_proportion: vec![],
            observed_proportion: vec![],
            degenerate: false,
        };
        for (i, rec) in rdr.deserialize::<(f64, f64, f64)>().enumerate() {
            let (h, p, o) = rec.map_err(|e| Error::Data(format!("line {}: {e}", i + 2)))?;
            c.horizons.push(h);
            c.predicted_proportion.push(p);
            c.observed_proportion.push(o);
        }
        Ok(c)
    }
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn fraction_at_most(sorted: &[f64], h: f64) -> f64 {
    sorted.partition_point(|&x| x <= h) as f64 / sorted.len() as f64
}

/// Calibration curve with horizons at the reference quantiles
/// `i / (n_horizons + 1)`.
pub fn calibration(reference: &[f64], predicted: &[f64], n_horizons: usize) -> Result<CalibrationCurve> {
    check_len(reference.len(), predicted.len(), "calibration")?;
    if n_horizons < 2 {
        return Err(Error::Config("calibration needs at least 2 horizons".into()));
    }
    if reference.is_empty() {
        return Err(Error::UndefinedMetric("calibration of an empty sample".into()));
    }
    let mut r = reference.to_vec();
    r.sort_by(f64::total_cmp);
    let mut p = predicted.to_vec();
    p.sort_by(f64::total_cmp);

    let degenerate = r[0] == r[r.len() - 1];
    let horizons: Vec<f64> = if degenerate {
        vec![r[0]]
    } else {
        (1..=n_horizons)
            .map(|i| quantile_sorted(&r, i as f64 / (n_horizons + 1) as f64))
            .collect()
    };
    Ok(CalibrationCurve {
        predicted_proportion: horizons.iter().map(|&h| fraction_at_most(&p, h)).collect(),
        observed_proportion: horizons.iter().map(|&h| fraction_at_most(&r, h)).collect(),
        horizons,
        degenerate,
    })
}

/// Kendall's tau-b of two samples, O(n log n).
pub fn kendall_tau_sample(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x.len(), y.len(), "kendall tau")?;
    let n = x.len();
    if n < 2 {
        return Err(Error::UndefinedMetric("Kendall's tau needs two points".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let pairs = |k: u64| k * k.saturating_sub(1) / 2;
    let n0 = pairs(n as u64);
    let (mut tie_x, mut tie_xy) = (0u64, 0u64);
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                tie_xy += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            tie_x += pairs(run_x);
            tie_xy += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    tie_x += pairs(run_x);
    tie_xy += pairs(run_xy);

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);

    let mut tie_y = 0u64;
    let mut run = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            tie_y += pairs(run);
            run = 1;
        }
    }
    tie_y += pairs(run);

    let num = n0 as f64 - tie_x as f64 - tie_y as f64 + tie_xy as f64 - 2.0 * swaps as f64;
    let den = ((n0 - tie_x) as f64 * (n0 - tie_y) as f64).sqrt();
    if den == 0.0 {
        return Err(Error::UndefinedMetric("Kendall's tau of a constant sample".into()));
    }
    Ok(num / den)
}

/// Stable merge sort returning the number of inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Everything reported for one set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub c_index: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    pub event_mae: Option<f64>,
    pub calibration: CalibrationCurve,
    /// `"true_event_time"` or `"observed_time"`.
    pub calibration_reference: String,
    pub n_rows: usize,
    pub n_events: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Evaluate predicted event times against a dataset. MAE and the
/// calibration reference use the oracle event times when the dataset has
/// them.
pub fn evaluate(data: &SurvivalDataset, predicted_times: &[f64], n_horizons: usize) -> Result<MetricsReport> {
    check_len(data.len(), predicted_times.len(), "evaluate rows")?;
    let mut warnings = Vec::new();
    let c_index = concordance(&data.time, &data.event, predicted_times)?;
    let mae_value = match &data.true_event_time {
        Some(t) => Some(mae(t, predicted_times)?),
        None => {
            warnings.push("no true event times: mae omitted".to_string());
            None
        }
    };
    let event_mae_value = match event_mae(&data.time, &data.event, predicted_times) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(m)) => {
            warnings.push(m);
            None
        }
        Err(e) => return Err(e),
    };
    let (reference, label) = match &data.true_event_time {
        Some(t) => (t.as_slice(), "true_event_time"),
        None => {
            warnings.push(
                "calibration uses observed (possibly censored) times as the reference".to_string(),
            );
            (data.time.as_slice(), "observed_time")
        }
    };
    let calibration = calibration(reference, predicted_times, n_horizons)?;
    if calibration.degenerate {
        warnings.push("all reference times are equal: single-horizon calibration".to_string());
    }
    Ok(MetricsReport {
        c_index,
        mae: mae_value,
        event_mae: event_mae_value,
        calibration,
        calibration_reference: label.to_string(),
        n_rows: data.len(),
        n_events: data.n_events(),
        warnings,
    })
}

/// O(n^2) pair enumeration with the same usability and tie rules as
/// [`concordance`]; reference implementation for tests.
pub fn concordance_brute_force(times: &[f64], events: &[bool], predicted: &[f64]) -> ConcordanceCounts {
    let mut c = ConcordanceCounts::default();
    for i in 0..times.len() {
        for j in 0..times.len() {
            if i == j {
                continue;
            }
            // i is the earlier member of the pair.
            let usable = (times[i] < times[j] && events[i])
                || (times[i] == times[j] && events[i] && !events[j]);
            if !usable {
                continue;
            }
            c.usable += 1;
            if predicted[i] < predicted[j] {
                c.concordant += 1;
            } else if predicted[i] == predicted[j] {
                c.tied_prediction += 1;
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn concordance_examples() {
        let t = [1.0, 2.0, 3.0, 4.0];
        let e = [true; 4];
        assert_eq!(concordance(&t, &e, &[10.0, 20.0, 30.0, 40.0]).unwrap(), 1.0);
        assert_eq!(concordance(&t, &e, &[4.0, 3.0, 2.0, 1.0]).unwrap(), 0.0);
        let c = concordance(&[2.0, 4.0, 6.0], &[true, false, true], &[1.0, 5.0, 4.0]).unwrap();
        assert_eq!(c, 1.0);
        let counts = concordance_counts(&[2.0, 4.0, 6.0], &[true, false, true], &[1.0, 5.0, 4.0]).unwrap();
        assert_eq!(counts.usable, 2);
        assert_eq!(concordance(&[1.0, 2.0], &[false, false], &[1.0, 2.0]).unwrap(), 0.5);
        assert!(concordance(&[1.0], &[true, false], &[1.0]).is_err());
    }

    #[test]
    fn concordance_tie_rules() {
        // Equal times, one event: the event row is earlier.
        let c = concordance_counts(&[3.0, 3.0], &[true, false], &[1.0, 2.0]).unwrap();
        assert_eq!((c.usable, c.concordant), (1, 1));
        // Equal times, both events: not usable.
        let c = concordance_counts(&[3.0, 3.0], &[true, true], &[1.0, 2.0]).unwrap();
        assert_eq!(c.usable, 0);
        // Prediction ties count one half.
        assert_eq!(concordance(&[1.0, 2.0], &[true, true], &[5.0, 5.0]).unwrap(), 0.5);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<f64>)> {
        (2usize..120).prop_flat_map(|n| {
            (
                prop::collection::vec(1u32..30, n),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(0u32..15, n),
            )
                .prop_map(|(t, e, p)| {
                    (
                        t.into_iter().map(f64::from).collect(),
                        e,
                        p.into_iter().map(f64::from).collect(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn fast_concordance_equals_brute_force((t, e, p) in instance()) {
            prop_assert_eq!(
                concordance_counts(&t, &e, &p).unwrap(),
                concordance_brute_force(&t, &e, &p)
            );
        }

        #[test]
        fn concordance_invariant_to_monotone_transform((t, e, p) in instance()) {
            let q: Vec<f64> = p.iter().map(|x| (0.3 * x).exp() + 7.0).collect();
            prop_assert_eq!(concordance(&t, &e, &p).unwrap(), concordance(&t, &e, &q).unwrap());
        }
    }

    #[test]
    fn reversed_predictions_complement() {
        let t: Vec<f64> = (0..50).map(|i| ((i * 37) % 101) as f64).collect();
        let e: Vec<bool> = (0..50).map(|i| i % 3 != 0).collect();
        let p: Vec<f64> = (0..50).map(|i| ((i * 53) % 97) as f64).collect();
        let neg: Vec<f64> = p.iter().map(|x| -x).collect();
        let a = concordance(&t, &e, &p).unwrap();
        let b = concordance(&t, &e, &neg).unwrap();
        assert!((a + b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((mae(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let a = [1.5, 2.5, 9.0];
        let b: Vec<f64> = a.iter().map(|x| x + 0.75).collect();
        assert!((mae(&a, &b).unwrap() - 0.75).abs() < 1e-15);
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn event_mae_examples() {
        assert_eq!(event_mae(&[2.0, 9.0], &[true, false], &[3.0, 100.0]).unwrap(), 1.0);
        let t = [1.0, 4.0, 2.0];
        let p = [2.0, 1.0, 2.5];
        assert_eq!(
            event_mae(&t, &[true; 3], &p).unwrap(),
            mae(&t, &p).unwrap()
        );
        assert_eq!(
            event_mae(&[4.0, 1.0, 2.0], &[true; 3], &[1.0, 2.0, 2.5]).unwrap(),
            event_mae(&t, &[true; 3], &p).unwrap()
        );
        assert!(matches!(
            event_mae(&[1.0], &[false], &[1.0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn calibration_examples() {
        let r = [1.0, 2.0, 3.0, 4.0];
        let c = calibration(&r, &r, 2).unwrap();
        assert_eq!(c.horizons, vec![2.0, 3.0]);
        assert_eq!(c.observed_proportion, vec![0.5, 0.75]);
        assert_eq!(c.predicted_proportion, c.observed_proportion);

        let doubled: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
        let c = calibration(&r, &doubled, 2).unwrap();
        assert_eq!(c.predicted_proportion, vec![0.25, 0.25]);
        for (p, o) in c.predicted_proportion.iter().zip(&c.observed_proportion) {
            assert!(p <= o);
        }

        let c = calibration(&[2.0; 5], &[1.0; 5], 9).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.horizons.len(), 1);
        assert!(calibration(&r, &r, 1).is_err());
    }

    #[test]
    fn calibration_csv_round_trip() {
        let r: Vec<f64> = (1..50).map(|i| i as f64 * 0.37).collect();
        let p: Vec<f64> = r.iter().map(|x| x * 1.1).collect();
        let c = calibration(&r, &p, 9).unwrap();
        for w in c.predicted_proportion.windows(2).chain(c.observed_proportion.windows(2)) {
            assert!(w[0] <= w[1]);
        }
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(CalibrationCurve::read_csv(buf.as_slice()).unwrap(), c);
    }

    fn tau_brute(x: &[f64], y: &[f64]) -> f64 {
        let (mut s, mut tx, mut ty) = (0.0, 0.0, 0.0);
        let n = x.len();
        for i in 0..n {
            for j in i + 1..n {
                let a = (x[i] - x[j]).signum() * (x[i] != x[j]) as i32 as f64;
                let b = (y[i] - y[j]).signum() * (y[i] != y[j]) as i32 as f64;
                s += a * b;
                tx += a * a;
                ty += b * b;
            }
        }
        s / (tx * ty).sqrt()
    }

    proptest! {
        #[test]
        fn kendall_matches_brute_force(
            pts in prop::collection::vec((0u32..8, 0u32..8), 3..60)
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1 as f64).collect();
            let brute = tau_brute(&x, &y);
            match kendall_tau_sample(&x, &y) {
                Ok(v) => prop_assert!((v - brute).abs() < 1e-12, "{} vs {}", v, brute),
                Err(_) => prop_assert!(brute.is_nan()),
            }
        }
    }

    #[test]
    fn evaluate_with_and_without_oracle() {
        use crate::data::Matrix;
        let x = Matrix::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let mut ds = SurvivalDataset::new(vec![1.0, 2.0, 3.0, 4.0], vec![true; 4], x).unwrap();
        let r = evaluate(&ds, &[1.0, 2.0, 3.0, 4.0], 9).unwrap();
        assert_eq!(r.mae, None);
        assert_eq!(r.calibration_reference, "observed_time");
        assert!(!r.warnings.is_empty());
        ds.true_event_time = Some(vec![1.0, 2.0, 3.0, 4.0]);
        let r = evaluate(&ds, &[1.0, 2.0, 3.0, 4.0], 9).unwrap();
        assert_eq!(r.c_index, 1.0);
        assert_eq!(r.mae, Some(0.0));
        assert_eq!(r.event_mae, Some(0.0));
    }
}
