//! Predictor quality metrics and aggregation of repeated search runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(a: &[f64], b: &[f64], min_len: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < min_len {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_len} values, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("metric input"));
    }
    Ok(())
}

/// Mean squared error, in the squared units of the inputs.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 1)?;
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(s / pred.len() as f64)
}

/// Mean and sample (n−1) standard deviation; sd is 0 for fewer than two values.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2_score(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 2)?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("r2 of constant targets"));
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Counts pairs ordered differently by a merge sort of `v`; sorts `v` in place.
fn merge_count_swaps(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count_swaps(&mut v[..mid], buf) + merge_count_swaps(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Number of pairs tied within runs of equal values in a sorted sequence.
fn tied_pairs<T: PartialEq>(sorted: impl Iterator<Item = T>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for x in sorted {
        if prev.as_ref() == Some(&x) {
            run += 1;
        } else {
            total += run * (run.saturating_sub(1)) / 2;
            run = 1;
        }
        prev = Some(x);
    }
    total + run * (run.saturating_sub(1)) / 2
}

/// Kendall's tau-b, computed in O(n log n).
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2)?;
    let n = a.len() as u64;
    let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let n0 = n * (n - 1) / 2;
    let ties_a = tied_pairs(pairs.iter().map(|p| p.0));
    let ties_ab = tied_pairs(pairs.iter().copied());
    let mut bs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(bs.len());
    let swaps = merge_count_swaps(&mut bs, &mut buf);
    let ties_b = tied_pairs(bs.iter().copied());
    if ties_a == n0 || ties_b == n0 {
        return Err(Error::Undefined("kendall tau of constant input"));
    }
    // concordant − discordant over pairs untied in both
    let num = n0 as f64 - ties_a as f64 - ties_b as f64 + ties_ab as f64 - 2.0 * swaps as f64;
    let den = ((n0 - ties_a) as f64 * (n0 - ties_b) as f64).sqrt();
    Ok((num / den).clamp(-1.0, 1.0))
}

/// Error rates of a binary classifier. `None` marks a rate whose
/// denominator is empty (no positives for FNR, no negatives for FPR).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorRates {
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn fnr_fpr(pred: &[bool], truth: &[bool]) -> Result<ErrorRates> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(ErrorRates {
        fnr: rate(fn_, fn_ + tp),
        fpr: rate(fp, fp + tn),
        tp,
        fp,
        tn,
        fn_,
    })
}

/// Which budget a curve is indexed by.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetAxis {
    #[default]
    Models,
    Seconds,
}

/// State of one replica's selection after each trained model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub models: usize,
    pub seconds: f64,
    /// Search signal of the current selection (running max).
    pub val: f64,
    /// Reported test accuracy of the current selection.
    pub test: f64,
}

impl CurvePoint {
    fn at(&self, axis: BudgetAxis) -> f64 {
        match axis {
            BudgetAxis::Models => self.models as f64,
            BudgetAxis::Seconds => self.seconds,
        }
    }
}

pub type ReplicaCurve = Vec<CurvePoint>;

/// Mean/sd across replicas at each budget point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub axis: BudgetAxis,
    pub budgets: Vec<f64>,
    pub mean_test: Vec<f64>,
    pub sd_test: Vec<f64>,
    pub mean_val: Vec<f64>,
    pub sd_val: Vec<f64>,
    pub replicas: usize,
}

/// Last point of `curve` whose budget coordinate is ≤ `b`.
fn point_at(curve: &[CurvePoint], axis: BudgetAxis, b: f64) -> Option<&CurvePoint> {
    let idx = curve.partition_point(|p| p.at(axis) <= b);
    idx.checked_sub(1).map(|i| &curve[i])
}

/// Aggregates replica curves on `grid`. Grid points before some replica's
/// first trained model are dropped so every point averages all replicas.
pub fn aggregate_runs(curves: &[ReplicaCurve], axis: BudgetAxis, grid: &[f64]) -> Result<RunAggregate> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty budget grid".into()));
    }
    if curves.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "aggregation needs at least 2 replicas, got {}",
            curves.len()
        )));
    }
    let mut agg = RunAggregate {
        axis,
        budgets: Vec::new(),
        mean_test: Vec::new(),
        sd_test: Vec::new(),
        mean_val: Vec::new(),
        sd_val: Vec::new(),
        replicas: curves.len(),
    };
    let mut sorted_grid = grid.to_vec();
    sorted_grid.sort_by(f64::total_cmp);
    for &b in &sorted_grid {
        let points: Option<Vec<&CurvePoint>> = curves.iter().map(|c| point_at(c, axis, b)).collect();
        let Some(points) = points else { continue };
        let tests: Vec<f64> = points.iter().map(|p| p.test).collect();
        let vals: Vec<f64> = points.iter().map(|p| p.val).collect();
        let (mt, st) = mean_sd(&tests);
        let (mv, sv) = mean_sd(&vals);
        agg.budgets.push(b);
        agg.mean_test.push(mt);
        agg.sd_test.push(st);
        agg.mean_val.push(mv);
        agg.sd_val.push(sv);
    }
    if agg.budgets.is_empty() {
        return Err(Error::InvalidArgument(
            "no grid point is reached by every replica".into(),
        ));
    }
    Ok(agg)
}

/// Curve used by [`speedup_ratio`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CurveMetric {
    #[default]
    Test,
    Val,
}

/// First budget at which the mean curve reaches `target`, linearly interpolated.
pub fn budget_to_reach(agg: &RunAggregate, target: f64, metric: CurveMetric) -> Option<f64> {
    let mean = match metric {
        CurveMetric::Test => &agg.mean_test,
        CurveMetric::Val => &agg.mean_val,
    };
    let i = mean.iter().position(|&m| m >= target)?;
    if i == 0 {
        return Some(agg.budgets[0]);
    }
    let (b0, b1) = (agg.budgets[i - 1], agg.budgets[i]);
    let (m0, m1) = (mean[i - 1], mean[i]);
    Some(b0 + (target - m0) / (m1 - m0) * (b1 - b0))
}

/// How many times more budget `b` needs than `a` to reach `target` on the mean curve.
pub fn speedup_ratio(a: &RunAggregate, b: &RunAggregate, target: f64, metric: CurveMetric) -> Result<f64> {
    let ba = budget_to_reach(a, target, metric).ok_or(Error::Undefined("target unreached by first aggregate"))?;
    let bb = budget_to_reach(b, target, metric).ok_or(Error::Undefined("target unreached by second aggregate"))?;
    if ba <= 0.0 {
        return Err(Error::Undefined("first aggregate reaches target at zero budget"));
    }
    Ok(bb / ba)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tau_pairs(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let (mut c, mut d, mut ta, mut tb) = (0.0f64, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let x = (a[i] - a[j]).signum() * f64::from(a[i] != a[j]);
                let y = (b[i] - b[j]).signum() * f64::from(b[i] != b[j]);
                if x == 0.0 && y == 0.0 {
                } else if x == 0.0 {
                    ta += 1.0;
                } else if y == 0.0 {
                    tb += 1.0;
                } else if x == y {
                    c += 1.0;
                } else {
                    d += 1.0;
                }
            }
        }
        (c - d) / ((c + d + ta) * (c + d + tb)).sqrt()
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 2.5);
        assert_eq!(mse(&[3.0, 3.0], &[3.0, 3.0]).unwrap(), 0.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn r2_examples() {
        assert_eq!(r2_score(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap(), 1.0);
        let t = [1.0, 2.0, 4.0];
        let m = 7.0 / 3.0;
        assert!(r2_score(&[m, m, m], &t).unwrap().abs() < 1e-12);
        // SS_res = 1, SS_tot = 14/3
        let r = r2_score(&[1.0, 2.0, 3.0], &t).unwrap();
        assert!((r - (1.0 - 3.0 / 14.0)).abs() < 1e-12);
        assert!((r - 0.7857).abs() < 1e-4);
        assert!(r2_score(&[1.0, 2.0], &[3.0, 3.0]).is_err());
    }

    #[test]
    fn kendall_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        assert_eq!(kendall_tau(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(kendall_tau(&[1.0, 1.0, 1.0], &x[..3]).is_err());
        // scipy.stats.kendalltau([1,2,2,3],[1,3,2,2]) = 0.4
        let t = kendall_tau(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 2.0]).unwrap();
        assert!((t - 0.4).abs() < 1e-12, "{t}");
    }

    #[test]
    fn error_rates() {
        let r = fnr_fpr(&[true, false, true, false], &[true, false, true, false]).unwrap();
        assert_eq!((r.fnr, r.fpr), (Some(0.0), Some(0.0)));
        let r = fnr_fpr(&[false; 4], &[true, true, false, false]).unwrap();
        assert_eq!(r.fnr, Some(1.0));
        let r = fnr_fpr(&[false, true], &[false, false]).unwrap();
        assert_eq!((r.fnr, r.fpr), (None, Some(0.5)));
    }

    fn flat(models: usize, val: f64, test: f64) -> ReplicaCurve {
        vec![CurvePoint { models, seconds: models as f64, val, test }]
    }

    #[test]
    fn aggregate_two_replicas() {
        let agg = aggregate_runs(&[flat(1, 94.0, 94.0), flat(1, 94.2, 94.2)], BudgetAxis::Models, &[1.0]).unwrap();
        assert!((agg.mean_test[0] - 94.1).abs() < 1e-12);
        assert!((agg.sd_test[0] - 0.02f64.sqrt()).abs() < 1e-12);
        assert!((agg.sd_test[0] - 0.1414).abs() < 1e-4);
        let same = aggregate_runs(&[flat(1, 90.0, 91.0), flat(1, 90.0, 91.0)], BudgetAxis::Seconds, &[1.0, 5.0]).unwrap();
        assert_eq!(same.sd_test, vec![0.0, 0.0]);
        assert!(aggregate_runs(&[flat(1, 1.0, 1.0)], BudgetAxis::Models, &[1.0]).is_err());
        assert!(aggregate_runs(&[flat(1, 1.0, 1.0), flat(1, 1.0, 1.0)], BudgetAxis::Models, &[]).is_err());
    }

    #[test]
    fn aggregate_drops_unreached_points() {
        let a = flat(3, 90.0, 90.0);
        let b = flat(1, 91.0, 91.0);
        let agg = aggregate_runs(&[a, b], BudgetAxis::Models, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(agg.budgets, vec![3.0]);
    }

    fn agg_of(budgets: Vec<f64>, mean: Vec<f64>) -> RunAggregate {
        RunAggregate {
            axis: BudgetAxis::Models,
            sd_test: vec![0.0; mean.len()],
            sd_val: vec![0.0; mean.len()],
            mean_val: mean.clone(),
            mean_test: mean,
            budgets,
            replicas: 2,
        }
    }

    #[test]
    fn speedup_examples() {
        let a = agg_of(vec![100.0, 200.0], vec![94.0, 95.0]);
        assert_eq!(speedup_ratio(&a, &a, 94.5, CurveMetric::Test).unwrap(), 1.0);
        let b = agg_of(vec![100.0, 200.0], vec![93.0, 94.0]);
        assert_eq!(speedup_ratio(&a, &b, 94.0, CurveMetric::Test).unwrap(), 2.0);
        // midpoint between (100, 94) and (200, 95)
        assert_eq!(budget_to_reach(&a, 94.5, CurveMetric::Val), Some(150.0));
        assert!(speedup_ratio(&a, &b, 99.0, CurveMetric::Test).is_err());
    }

    proptest! {
        #[test]
        fn kendall_matches_pair_count(
            a in prop::collection::vec(0i32..6, 2..40),
            seed in any::<u64>(),
        ) {
            let n = a.len();
            let b: Vec<f64> = (0..n).map(|i| ((seed.wrapping_mul(i as u64 + 7) >> 7) % 5) as f64).collect();
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let fast = kendall_tau(&a, &b);
            let slow = tau_pairs(&a, &b);
            match fast {
                Ok(t) => {
                    prop_assert!((t - slow).abs() < 1e-12);
                    prop_assert!(t.abs() <= 1.0);
                }
                Err(_) => prop_assert!(slow.is_nan()),
            }
        }

        #[test]
        fn metric_ranges(
            pairs in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 2..30),
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!(mse(&p, &t).unwrap() >= 0.0);
            if let Ok(r) = r2_score(&p, &t) {
                prop_assert!(r <= 1.0);
            }
        }

        #[test]
        fn mse_is_order_invariant(
            pairs in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..30),
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let (pr, tr): (Vec<f64>, Vec<f64>) = pairs.into_iter().rev().unzip();
            prop_assert!((mse(&p, &t).unwrap() - mse(&pr, &tr).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn mean_val_curve_is_monotone(
            reps in prop::collection::vec(prop::collection::vec(50.0f64..100.0, 1..20), 2..6),
        ) {
            let curves: Vec<ReplicaCurve> = reps
                .iter()
                .map(|vals| {
                    let mut best = f64::MIN;
                    vals.iter()
                        .enumerate()
                        .map(|(i, &v)| {
                            best = best.max(v);
                            CurvePoint { models: i + 1, seconds: (i + 1) as f64, val: best, test: v }
                        })
                        .collect()
                })
                .collect();
            let grid: Vec<f64> = (1..=20).map(f64::from).collect();
            let agg = aggregate_runs(&curves, BudgetAxis::Models, &grid).unwrap();
            for w in agg.mean_val.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12);
            }
            prop_assert!(agg.sd_val.iter().all(|&s| s >= 0.0));
        }
    }
}
