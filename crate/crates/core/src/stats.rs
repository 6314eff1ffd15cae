//! Evaluation statistics over run logs.
//!
//! Online performance at a step is the undiscounted return of the episode that
//! contains the step. Curves are never smoothed. Quantiles of the Student-t,
//! chi-square and normal distributions come from `statrs`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::exper::{RunLog, StepRecord};

/// Significance level used for the reported confidence intervals.
pub const DEFAULT_ALPHA: f64 = 0.05;
/// Population fraction a tolerance interval must contain.
pub const DEFAULT_BETA: f64 = 0.9;
pub const DEFAULT_HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {needed} runs, got {got}")]
    TooFewRuns { needed: usize, got: usize },
    #[error("curves have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("invalid probability parameter {0}")]
    InvalidProbability(f64),
    #[error("bin count must be positive")]
    ZeroBins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceCurve(pub Vec<f64>);

impl PerformanceCurve {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Sum over steps divided by the number of steps.
    pub fn aggregate(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }
}

/// Each step gets the return of its episode; a trailing unfinished episode gets
/// the return accumulated up to the last logged step.
pub fn performance_curve_from_steps(steps: &[StepRecord]) -> PerformanceCurve {
    let mut curve = Vec::with_capacity(steps.len());
    let mut start = 0;
    while start < steps.len() {
        let episode = steps[start].episode;
        let end = steps[start..]
            .iter()
            .position(|s| s.episode != episode)
            .map_or(steps.len(), |off| start + off);
        let ret: f64 = steps[start..end].iter().map(|s| s.reward).sum();
        curve.extend(std::iter::repeat_n(ret, end - start));
        start = end;
    }
    PerformanceCurve(curve)
}

pub fn performance_curve(log: &RunLog) -> PerformanceCurve {
    performance_curve_from_steps(&log.steps)
}

fn check_curves(curves: &[PerformanceCurve], min_runs: usize) -> Result<usize, StatsError> {
    if curves.len() < min_runs {
        return Err(StatsError::TooFewRuns {
            needed: min_runs,
            got: curves.len(),
        });
    }
    let n = curves[0].len();
    if n == 0 {
        return Err(StatsError::Empty);
    }
    if let Some(c) = curves.iter().find(|c| c.len() != n) {
        return Err(StatsError::LengthMismatch(n, c.len()));
    }
    Ok(n)
}

fn check_probability(p: f64) -> Result<(), StatsError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(StatsError::InvalidProbability(p))
    }
}

/// Two-sided Student-t multiplier `t_{1 - alpha/2, runs - 1}`.
pub fn t_multiplier(runs: usize, alpha: f64) -> Result<f64, StatsError> {
    check_probability(alpha)?;
    if runs < 2 {
        return Err(StatsError::TooFewRuns { needed: 2, got: runs });
    }
    let t = StudentsT::new(0.0, 1.0, (runs - 1) as f64).expect("positive degrees of freedom");
    Ok(t.inverse_cdf(1.0 - alpha / 2.0))
}

/// Howe's two-sided normal tolerance factor for `runs` samples, content `beta`
/// and confidence `1 - alpha`.
pub fn howe_factor(runs: usize, alpha: f64, beta: f64) -> Result<f64, StatsError> {
    check_probability(alpha)?;
    check_probability(beta)?;
    if runs < 2 {
        return Err(StatsError::TooFewRuns { needed: 2, got: runs });
    }
    let n = runs as f64;
    let nu = n - 1.0;
    let z = Normal::standard().inverse_cdf((1.0 + beta) / 2.0);
    let chi2 = ChiSquared::new(nu).expect("positive degrees of freedom").inverse_cdf(alpha);
    Ok(z * (nu * (1.0 + 1.0 / n) / chi2).sqrt())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (denominator `n - 1`).
fn sample_sd(values: &[f64], mean: f64) -> f64 {
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() as f64 - 1.0)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    /// One value per run: summed performance divided by the number of steps.
    pub per_run: Vec<f64>,
    pub grand_mean: f64,
    /// Absent for a single run.
    pub ci_half_width: Option<f64>,
}

pub fn aggregate(curves: &[PerformanceCurve]) -> Result<AggregateResult, StatsError> {
    aggregate_at(curves, DEFAULT_ALPHA)
}

pub fn aggregate_at(curves: &[PerformanceCurve], alpha: f64) -> Result<AggregateResult, StatsError> {
    let n = check_curves(curves, 1)?;
    let sums: Vec<f64> = curves.iter().map(|c| c.0.iter().sum::<f64>()).collect();
    let per_run: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let grand_mean = sums.iter().sum::<f64>() / (n as f64 * curves.len() as f64);
    let ci_half_width = if curves.len() >= 2 {
        let t = t_multiplier(curves.len(), alpha)?;
        let sd = sample_sd(&per_run, mean(&per_run));
        Some(t * sd / (curves.len() as f64).sqrt())
    } else {
        None
    };
    Ok(AggregateResult {
        per_run,
        grand_mean,
        ci_half_width,
    })
}

/// Mean and confidence half-width from per-run aggregates alone. For runs of
/// equal length this matches [`aggregate_at`] up to rounding.
pub fn summarize_runs(per_run: &[f64], alpha: f64) -> Result<AggregateResult, StatsError> {
    if per_run.is_empty() {
        return Err(StatsError::Empty);
    }
    let grand_mean = mean(per_run);
    let ci_half_width = if per_run.len() >= 2 {
        let t = t_multiplier(per_run.len(), alpha)?;
        Some(t * sample_sd(per_run, grand_mean) / (per_run.len() as f64).sqrt())
    } else {
        None
    };
    Ok(AggregateResult {
        per_run: per_run.to_vec(),
        grand_mean,
        ci_half_width,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// Equal-width bins over `[min, max]`; the last bin is closed on the right.
pub fn performance_histogram(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>, StatsError> {
    if bins == 0 {
        return Err(StatsError::ZeroBins);
    }
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(vec![HistogramBin {
            left: lo,
            right: hi,
            count: values.len(),
        }]);
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            left: lo + i as f64 * width,
            right: if i + 1 == bins { hi } else { lo + (i + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for &v in values {
        let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
        out[idx].count += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    Confidence,
    Tolerance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterKind {
    Mean,
    MedianAgent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceMethod {
    /// Gaussian `mean +- k * sd` with Howe's factor.
    Parametric,
    /// Distribution-free interval between symmetric order statistics.
    OrderStatistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBand {
    pub center: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub kind: BandKind,
    pub alpha: f64,
    pub beta: Option<f64>,
    /// Multiplier applied to the per-step standard deviation, when parametric.
    pub multiplier: Option<f64>,
    /// Confidence actually attained by an order-statistic interval.
    pub achieved_confidence: Option<f64>,
}

impl IntervalBand {
    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l)
    }
}

/// Per-step mean and sample standard deviation across runs.
fn per_step_moments(curves: &[PerformanceCurve], n: usize) -> (Vec<f64>, Vec<f64>) {
    let r = curves.len() as f64;
    let mut means = vec![0.0; n];
    for c in curves {
        for (m, v) in means.iter_mut().zip(&c.0) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= r);
    let mut ss = vec![0.0; n];
    for c in curves {
        for ((s, v), m) in ss.iter_mut().zip(&c.0).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    let sds = ss.into_iter().map(|s| (s / (r - 1.0)).sqrt()).collect();
    (means, sds)
}

pub fn mean_curve(curves: &[PerformanceCurve]) -> Result<PerformanceCurve, StatsError> {
    let n = check_curves(curves, 1)?;
    let mut means = vec![0.0; n];
    for c in curves {
        for (m, v) in means.iter_mut().zip(&c.0) {
            *m += v;
        }
    }
    let r = curves.len() as f64;
    means.iter_mut().for_each(|m| *m /= r);
    Ok(PerformanceCurve(means))
}

/// Student-t confidence band around the per-step mean.
pub fn mean_ci_band(curves: &[PerformanceCurve], alpha: f64) -> Result<IntervalBand, StatsError> {
    let n = check_curves(curves, 2)?;
    let t = t_multiplier(curves.len(), alpha)?;
    let (means, sds) = per_step_moments(curves, n);
    let scale = t / (curves.len() as f64).sqrt();
    let lower = means.iter().zip(&sds).map(|(m, s)| m - scale * s).collect();
    let upper = means.iter().zip(&sds).map(|(m, s)| m + scale * s).collect();
    Ok(IntervalBand {
        center: means,
        lower,
        upper,
        kind: BandKind::Confidence,
        alpha,
        beta: None,
        multiplier: Some(t),
        achieved_confidence: None,
    })
}

/// Confidence that `[X_(r), X_(n+1-r)]` contains at least `beta` of the population.
pub fn order_statistic_confidence(n: usize, r: usize, beta: f64) -> f64 {
    if r == 0 || 2 * r > n {
        return 0.0;
    }
    // coverage of the interval is Beta(n - 2r + 1, 2r) distributed
    1.0 - beta_reg((n - 2 * r + 1) as f64, (2 * r) as f64, beta)
}

/// Innermost symmetric rank pair reaching confidence `1 - alpha`, falling back to the
/// sample extremes when no pair does. Returns the rank and its attained confidence.
pub fn order_statistic_rank(n: usize, alpha: f64, beta: f64) -> (usize, f64) {
    let mut best = (1, order_statistic_confidence(n, 1, beta));
    for r in 2..=n / 2 {
        let conf = order_statistic_confidence(n, r, beta);
        if conf >= 1.0 - alpha {
            best = (r, conf);
        } else {
            break;
        }
    }
    best
}

pub fn tolerance_band(
    curves: &[PerformanceCurve],
    alpha: f64,
    beta: f64,
    center: CenterKind,
    method: ToleranceMethod,
) -> Result<IntervalBand, StatsError> {
    let n = check_curves(curves, 2)?;
    check_probability(beta)?;
    let runs = curves.len();
    let (means, sds) = per_step_moments(curves, n);
    let (lower, upper, multiplier, achieved) = match method {
        ToleranceMethod::Parametric => {
            let k = howe_factor(runs, alpha, beta)?;
            let lower = means.iter().zip(&sds).map(|(m, s)| m - k * s).collect();
            let upper = means.iter().zip(&sds).map(|(m, s)| m + k * s).collect();
            (lower, upper, Some(k), None)
        }
        ToleranceMethod::OrderStatistic => {
            check_probability(alpha)?;
            let (r, conf) = order_statistic_rank(runs, alpha, beta);
            let mut lower = Vec::with_capacity(n);
            let mut upper = Vec::with_capacity(n);
            let mut column = vec![0.0; runs];
            for k in 0..n {
                for (slot, c) in column.iter_mut().zip(curves) {
                    *slot = c.0[k];
                }
                column.sort_by(f64::total_cmp);
                lower.push(column[r - 1]);
                upper.push(column[runs - r]);
            }
            (lower, upper, None, Some(conf))
        }
    };
    let center = match center {
        CenterKind::Mean => means,
        CenterKind::MedianAgent => median_agent_curve(curves)?.1 .0,
    };
    Ok(IntervalBand {
        center,
        lower,
        upper,
        kind: BandKind::Tolerance,
        alpha,
        beta: Some(beta),
        multiplier,
        achieved_confidence: achieved,
    })
}

/// The run whose aggregate is the median over an odd number of runs (the first
/// `R - 1` when `R` is even). Ties at the median go to the lowest run index.
pub fn median_agent_curve(curves: &[PerformanceCurve]) -> Result<(usize, PerformanceCurve), StatsError> {
    check_curves(curves, 1)?;
    let used = if curves.len() % 2 == 0 {
        curves.len() - 1
    } else {
        curves.len()
    };
    let aggregates: Vec<f64> = curves[..used].iter().map(PerformanceCurve::aggregate).collect();
    let mut order: Vec<usize> = (0..used).collect();
    order.sort_by(|&a, &b| aggregates[a].total_cmp(&aggregates[b]).then(a.cmp(&b)));
    let median_value = aggregates[order[used / 2]];
    let index = (0..used)
        .find(|&i| aggregates[i] == median_value)
        .expect("median value comes from the set");
    Ok((index, curves[index].clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    /// Raw axis value (tau itself for a replay-frequency curve).
    pub x: f64,
    /// Plot position on a base-2 log axis.
    pub log2_x: f64,
    pub tau: u32,
    pub mean: f64,
    pub ci_half_width: Option<f64>,
}

/// One row per tau, ascending.
pub fn replay_frequency_curve(results: &BTreeMap<u32, AggregateResult>) -> Vec<TableRow> {
    results
        .iter()
        .map(|(&tau, agg)| TableRow {
            x: tau as f64,
            log2_x: (tau as f64).log2(),
            tau,
            mean: agg.grand_mean,
            ci_half_width: agg.ci_half_width,
        })
        .collect()
}

/// Rows sorted by axis value, then tau.
pub fn sensitivity_table(results: &[(f64, u32, AggregateResult)]) -> Vec<TableRow> {
    let mut rows: Vec<TableRow> = results
        .iter()
        .map(|(x, tau, agg)| TableRow {
            x: *x,
            log2_x: x.log2(),
            tau: *tau,
            mean: agg.grand_mean,
            ci_half_width: agg.ci_half_width,
        })
        .collect();
    rows.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.tau.cmp(&b.tau)));
    rows
}

/// First step index whose value exceeds `threshold`, if any.
pub fn first_crossing(curve: &[f64], threshold: f64) -> Option<usize> {
    curve.iter().position(|&v| v > threshold)
}
