use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::pyfmt;

/// Bootstrap estimate of the best-of-`k` loss of random search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub mean: f64,
    /// Standard error of `mean`: `std / sqrt(B)`.
    pub stderr: f64,
    /// Spread of the best-of-`k` loss across resamples.
    pub std: f64,
}

/// Draws `b` resamples of `k` pool entries with replacement and summarizes
/// the minimum of each resample.
pub fn bootstrap_best(pool: &[f64], k: usize, b: usize, seed: u64) -> BootstrapEstimate {
    assert!(!pool.is_empty() && k >= 1 && b >= 1, "non-empty pool, k >= 1, B >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mins: Vec<f64> = (0..b)
        .map(|_| (0..k).map(|_| pool[rng.random_range(0..pool.len())]).fold(f64::INFINITY, f64::min))
        .collect();
    let (mean, std) = mean_std(&mins);
    BootstrapEstimate { mean, stderr: std / (b as f64).sqrt(), std }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Percent improvement of `e_method` over `e_random`; positive is better.
pub fn relative_change(e_random: f64, e_method: f64) -> Result<f64, BenchError> {
    if !(e_random > 0.0) {
        return Err(BenchError::ZeroBaseline(e_random));
    }
    Ok(100.0 * (e_random - e_method) / e_random)
}

/// Positional ranks (1-based, ascending); tied values share the average
/// of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Mean over tasks of each method's per-task rank. Every method needs one
/// finite error per task.
pub fn mean_rank(per_method: &[(String, Vec<Option<f64>>)]) -> Result<Vec<(String, f64)>, BenchError> {
    let n_tasks = per_method.first().map_or(0, |(_, e)| e.len());
    for (m, errors) in per_method {
        if errors.len() != n_tasks {
            return Err(BenchError::MissingEntry { task: format!("#{}", errors.len().min(n_tasks) + 1), method: m.clone() });
        }
        if let Some(t) = errors.iter().position(|e| !e.is_some_and(f64::is_finite)) {
            return Err(BenchError::MissingEntry { task: format!("#{}", t + 1), method: m.clone() });
        }
    }
    let mut sums = vec![0.0; per_method.len()];
    for t in 0..n_tasks {
        let column: Vec<f64> = per_method.iter().map(|(_, e)| e[t].expect("checked")).collect();
        for (s, r) in sums.iter_mut().zip(average_ranks(&column)) {
            *s += r;
        }
    }
    Ok(per_method
        .iter()
        .zip(sums)
        .map(|((m, _), s)| (m.clone(), if n_tasks == 0 { f64::NAN } else { s / n_tasks as f64 }))
        .collect())
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub const RANDOM_BASELINE: &str = "random_baseline";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// Tasks with an error for this method and a positive random estimate.
    pub tasks: usize,
    pub beats_random: f64,
    pub median_change: f64,
    pub mean_change: f64,
    pub mean_rank: f64,
}

/// Per-task best errors, comparisons against random search and ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tasks: Vec<String>,
    pub methods: Vec<String>,
    /// Task → bootstrap estimate of random search.
    pub random: BTreeMap<String, BootstrapEstimate>,
    /// Task → method → mean over seeds of the best loss.
    pub errors: BTreeMap<String, BTreeMap<String, f64>>,
    /// Task → method → rank (random baseline included).
    pub ranks: BTreeMap<String, BTreeMap<String, f64>>,
    /// Tasks left out of the ranking because a method has no result.
    pub unranked_tasks: Vec<String>,
    pub summaries: Vec<MethodSummary>,
}

impl MetricsReport {
    /// `errors[task][method]` are method errors; `random[task]` the random
    /// baseline. Task and method order follow the given slices.
    pub fn compute(
        tasks: &[String],
        methods: &[String],
        random: &BTreeMap<String, BootstrapEstimate>,
        errors: &BTreeMap<String, BTreeMap<String, f64>>,
    ) -> Self {
        let get = |t: &str, m: &str| errors.get(t).and_then(|row| row.get(m)).copied();

        let mut ranked_columns: Vec<(String, Vec<Option<f64>>)> =
            std::iter::once(RANDOM_BASELINE.to_string()).chain(methods.iter().cloned()).map(|m| (m, Vec::new())).collect();
        let mut ranked_tasks = Vec::new();
        let mut unranked_tasks = Vec::new();
        for t in tasks {
            let Some(r) = random.get(t) else {
                unranked_tasks.push(t.clone());
                continue;
            };
            let row: Option<Vec<f64>> = methods.iter().map(|m| get(t, m).filter(|e| e.is_finite())).collect();
            match row {
                Some(row) => {
                    ranked_columns[0].1.push(Some(r.mean));
                    for (col, e) in ranked_columns[1..].iter_mut().zip(row) {
                        col.1.push(Some(e));
                    }
                    ranked_tasks.push(t.clone());
                }
                None => unranked_tasks.push(t.clone()),
            }
        }
        let mean_ranks: BTreeMap<String, f64> =
            mean_rank(&ranked_columns).expect("columns are complete by construction").into_iter().collect();
        let mut ranks = BTreeMap::new();
        for (i, t) in ranked_tasks.iter().enumerate() {
            let column: Vec<f64> = ranked_columns.iter().map(|(_, e)| e[i].expect("complete")).collect();
            let row = ranked_columns.iter().map(|(m, _)| m.clone()).zip(average_ranks(&column)).collect();
            ranks.insert(t.clone(), row);
        }

        let summaries = methods
            .iter()
            .map(|m| {
                let mut changes = Vec::new();
                let mut wins = 0usize;
                for t in tasks {
                    let (Some(e), Some(r)) = (get(t, m), random.get(t)) else { continue };
                    if let Ok(c) = relative_change(r.mean, e) {
                        changes.push(c);
                        if e < r.mean {
                            wins += 1;
                        }
                    }
                }
                let n = changes.len();
                MethodSummary {
                    method: m.clone(),
                    tasks: n,
                    beats_random: if n == 0 { f64::NAN } else { wins as f64 / n as f64 },
                    mean_change: if n == 0 { f64::NAN } else { changes.iter().sum::<f64>() / n as f64 },
                    median_change: median(&mut changes),
                    mean_rank: mean_ranks.get(m).copied().unwrap_or(f64::NAN),
                }
            })
            .collect();

        Self {
            tasks: tasks.to_vec(),
            methods: methods.to_vec(),
            random: random.clone(),
            errors: errors.clone(),
            ranks,
            unranked_tasks,
            summaries,
        }
    }

    pub fn random_mean_rank(&self) -> f64 {
        let n = self.ranks.len();
        if n == 0 {
            return f64::NAN;
        }
        self.ranks.values().filter_map(|r| r.get(RANDOM_BASELINE)).sum::<f64>() / n as f64
    }

    /// One row per task: random mean and spread, then each method's error.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,random_mean,random_std");
        for m in &self.methods {
            out.push(',');
            out.push_str(&csv_field(m));
        }
        out.push('\n');
        for t in &self.tasks {
            out.push_str(&csv_field(t));
            match self.random.get(t) {
                Some(r) => {
                    let _ = write!(out, ",{},{}", num(r.mean), num(r.std));
                }
                None => out.push_str(",,"),
            }
            for m in &self.methods {
                out.push(',');
                if let Some(e) = self.errors.get(t).and_then(|row| row.get(m)) {
                    out.push_str(&num(*e));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Benchmark report\n\n## Summary\n\n");
        out.push_str("| method | tasks | beats random | median change (%) | mean change (%) | mean rank |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                s.method,
                s.tasks,
                pct(s.beats_random),
                fmt2(s.median_change),
                fmt2(s.mean_change),
                fmt2(s.mean_rank)
            );
        }
        let _ = writeln!(out, "| {RANDOM_BASELINE} | {} | - | - | - | {} |", self.ranks.len(), fmt2(self.random_mean_rank()));
        out.push_str("\n## Best loss per task\n\n| task | random (mean ± std) |");
        for m in &self.methods {
            let _ = write!(out, " {m} |");
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---|".repeat(self.methods.len()));
        out.push('\n');
        for t in &self.tasks {
            let random = self.random.get(t).map_or("-".to_string(), |r| format!("{} ± {}", fmt4(r.mean), fmt4(r.std)));
            let _ = write!(out, "| {t} | {random} |");
            for m in &self.methods {
                let e = self.errors.get(t).and_then(|row| row.get(m)).map_or("-".to_string(), |e| fmt4(*e));
                let _ = write!(out, " {e} |");
            }
            out.push('\n');
        }
        if !self.unranked_tasks.is_empty() {
            let _ = writeln!(out, "\nNot ranked (missing results): {}", self.unranked_tasks.join(", "));
        }
        out
    }
}

fn num(x: f64) -> String {
    pyfmt::float_repr(x)
}

fn fmt2(x: f64) -> String {
    if x.is_finite() {
        pyfmt::fixed(x, 2)
    } else {
        "-".into()
    }
}

fn fmt4(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4}")
    } else {
        "-".into()
    }
}

fn pct(x: f64) -> String {
    if x.is_finite() {
        format!("{:.1}%", 100.0 * x)
    } else {
        "-".into()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
