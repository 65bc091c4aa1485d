//! Learning-curve aggregation and setting comparison.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::pipeline::read_rows;

use super::run::RunSummary;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    /// First episode of the window.
    pub episode: u64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub label: String,
    pub rows: Vec<CurveRow>,
}

/// `t_{0.975, n-1}`.
fn t975(n: usize) -> f64 {
    StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("n >= 2")
        .inverse_cdf(0.975)
}

/// Mean and 95% Student-t half-width. Values are summed in sorted order so
/// the result does not depend on run order.
fn mean_ci(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    dev.sort_by(f64::total_cmp);
    let s = (dev.iter().sum::<f64>() / (n - 1) as f64).sqrt();
    (mean, t975(n) * s / (n as f64).sqrt())
}

/// Mean return across runs per window of `window` episodes, with 95%
/// confidence bounds. Needs at least two runs of equal length.
pub fn aggregate(label: &str, runs: &[RunSummary], window: usize) -> Result<CurveTable, HarnessError> {
    if runs.len() < 2 {
        return Err(HarnessError::Aggregate(format!("{label}: need at least 2 runs, got {}", runs.len())));
    }
    if window == 0 {
        return Err(HarnessError::Aggregate("window must be positive".into()));
    }
    let episodes = runs[0].returns.len();
    if let Some(r) = runs.iter().find(|r| r.returns.len() != episodes) {
        return Err(HarnessError::Aggregate(format!(
            "{label}: seed {} has {} episodes, expected {episodes}",
            r.seed,
            r.returns.len()
        )));
    }
    let rows = (0..episodes)
        .step_by(window)
        .map(|start| {
            let end = (start + window).min(episodes);
            let mut v: Vec<f64> = runs
                .iter()
                .map(|r| r.returns[start..end].iter().sum::<f64>() / (end - start) as f64)
                .collect();
            let (mean, half) = mean_ci(&mut v);
            CurveRow {
                episode: start as u64,
                mean,
                ci_low: mean - half,
                ci_high: mean + half,
                n: runs.len(),
            }
        })
        .collect();
    Ok(CurveTable {
        label: label.to_string(),
        rows,
    })
}

pub fn write_curve_csv<W: Write>(table: &CurveTable, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in &table.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve_csv<R: Read>(label: &str, input: R) -> Result<CurveTable, HarnessError> {
    Ok(CurveTable {
        label: label.to_string(),
        rows: read_rows(input)?,
    })
}

/// Mean return over the last 10% of episodes (at least one).
pub fn final_return(returns: &[f64]) -> f64 {
    if returns.is_empty() {
        return f64::NAN;
    }
    let k = returns.len().div_ceil(10);
    returns[returns.len() - k..].iter().sum::<f64>() / k as f64
}

/// Two-sided Welch t-test p-value; `None` when either sample has fewer than
/// two values or both have zero variance.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v / n)
    };
    let (_, ma, sa) = stats(a);
    let (_, mb, sb) = stats(b);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return None;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some(2.0 * (1.0 - dist.cdf(t.abs())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettingStats {
    pub label: String,
    pub runs: usize,
    pub failed: usize,
    pub mean_final_return: f64,
    pub mean_updates: f64,
    pub mean_samples: f64,
    pub mean_cycle_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Better,
    Worse,
    Indistinguishable,
}

/// How setting `a` relates to setting `b` on final return.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub a: String,
    pub b: String,
    pub order: Order,
    /// Seeds present in both, and how many of those `a` won strictly.
    pub paired: usize,
    pub a_wins: usize,
    pub b_wins: usize,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub settings: Vec<SettingStats>,
    pub relations: Vec<Relation>,
}

impl ComparisonReport {
    pub fn relation(&self, a: &str, b: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.a == a && r.b == b)
    }

    pub fn setting(&self, label: &str) -> Option<&SettingStats> {
        self.settings.iter().find(|s| s.label == label)
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Summarizes each setting and orders every pair. `a` is better than `b`
/// when it wins every paired seed (with at least two pairs), or when a
/// Welch test on final returns gives p < 0.05 in its favour. Failed runs
/// are excluded from the return statistics.
pub fn compare_settings(by_setting: &BTreeMap<String, Vec<RunSummary>>) -> ComparisonReport {
    let ok = |runs: &[RunSummary]| -> Vec<RunSummary> { runs.iter().filter(|r| r.failure.is_none()).cloned().collect() };
    let settings = by_setting
        .iter()
        .map(|(label, runs)| {
            let good = ok(runs);
            SettingStats {
                label: label.clone(),
                runs: runs.len(),
                failed: runs.len() - good.len(),
                mean_final_return: mean(good.iter().map(|r| final_return(&r.returns))),
                mean_updates: mean(runs.iter().map(|r| r.total_updates as f64)),
                mean_samples: mean(runs.iter().map(|r| r.total_steps as f64)),
                mean_cycle_ms: mean(runs.iter().map(|r| r.mean_cycle_ms)),
            }
        })
        .collect();
    let mut relations = Vec::new();
    for (la, ra) in by_setting {
        for (lb, rb) in by_setting {
            if la == lb {
                continue;
            }
            let (ga, gb) = (ok(ra), ok(rb));
            let fa: BTreeMap<u64, f64> = ga.iter().map(|r| (r.seed, final_return(&r.returns))).collect();
            let fb: BTreeMap<u64, f64> = gb.iter().map(|r| (r.seed, final_return(&r.returns))).collect();
            let pairs: Vec<(f64, f64)> = fa.iter().filter_map(|(s, &x)| fb.get(s).map(|&y| (x, y))).collect();
            let a_wins = pairs.iter().filter(|(x, y)| x > y).count();
            let b_wins = pairs.iter().filter(|(x, y)| y > x).count();
            let va: Vec<f64> = fa.values().copied().collect();
            let vb: Vec<f64> = fb.values().copied().collect();
            let p = welch_p_value(&va, &vb);
            let diff = mean(va.iter().copied()) - mean(vb.iter().copied());
            let significant = p.is_some_and(|p| p < 0.05);
            let order = if (pairs.len() >= 2 && a_wins == pairs.len()) || (significant && diff > 0.0) {
                Order::Better
            } else if (pairs.len() >= 2 && b_wins == pairs.len()) || (significant && diff < 0.0) {
                Order::Worse
            } else {
                Order::Indistinguishable
            };
            relations.push(Relation {
                a: la.clone(),
                b: lb.clone(),
                order,
                paired: pairs.len(),
                a_wins,
                b_wins,
                p_value: p,
            });
        }
    }
    ComparisonReport { settings, relations }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>5} {:>7} {:>13} {:>12} {:>12} {:>9}",
            "setting", "runs", "failed", "final_return", "updates", "samples", "cycle_ms"
        )?;
        for s in &self.settings {
            writeln!(
                f,
                "{:<16} {:>5} {:>7} {:>13.3} {:>12.1} {:>12.1} {:>9.2}",
                s.label, s.runs, s.failed, s.mean_final_return, s.mean_updates, s.mean_samples, s.mean_cycle_ms
            )?;
        }
        writeln!(f)?;
        for r in self.relations.iter().filter(|r| r.a < r.b) {
            let sym = match r.order {
                Order::Better => ">",
                Order::Worse => "<",
                Order::Indistinguishable => "~",
            };
            let p = r.p_value.map_or_else(|| "n/a".to_string(), |p| format!("{p:.4}"));
            writeln!(
                f,
                "{} {sym} {}  (paired seeds {}, wins {}:{}, welch p {p})",
                r.a, r.b, r.paired, r.a_wins, r.b_wins
            )?;
        }
        Ok(())
    }
}
