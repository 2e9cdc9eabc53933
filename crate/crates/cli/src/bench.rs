//! Parameter matrices over one or more instances.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use vrp2l::{solve, Instance, SolveParams};

use crate::{convergence_csv, pretty, write, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combo {
    pub name: String,
    pub params: SolveParams,
}

/// Tenure {default, 4, 8} × bundle threshold {none, 3} × cluster radius
/// scale {0.3, 0.5, 0.7, 1.0}.
pub fn grid24(base: &SolveParams) -> Vec<Combo> {
    let mut out = Vec::with_capacity(24);
    for tenure in [None, Some(4), Some(8)] {
        for threshold in [None, Some(3)] {
            for radius in [0.3, 0.5, 0.7, 1.0] {
                let mut p = *base;
                p.tabu.tenure = tenure;
                p.tabu.bundle_threshold = threshold;
                p.construct.radius_scale = radius;
                let t = tenure.map_or("auto".to_string(), |t| t.to_string());
                let b = threshold.map_or("none".to_string(), |b| b.to_string());
                out.push(Combo {
                    name: format!("tenure-{t}_bundle-{b}_radius-{radius}"),
                    params: p,
                });
            }
        }
    }
    out
}

/// The same settings with (`wb`) and without (`nb`) bundling.
pub fn wb_nb(base: &SolveParams) -> Vec<Combo> {
    [("wb", true), ("nb", false)]
        .into_iter()
        .map(|(name, bundling)| {
            let mut p = *base;
            p.tabu.bundling = bundling;
            Combo {
                name: name.into(),
                params: p,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub combo: String,
    pub seed: u64,
    pub initial: Option<f64>,
    pub tabu: Option<f64>,
    pub final_mileage: Option<f64>,
    pub final_trucks: Option<usize>,
    pub iterations: Option<usize>,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboRank {
    pub rank: usize,
    pub combo: String,
    pub runs: usize,
    pub failures: usize,
    pub median_final: Option<f64>,
    pub median_initial: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub runs: Vec<RunRecord>,
    /// Combinations by increasing median final mileage; failed ones last.
    pub ranking: Vec<ComboRank>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

impl BenchReport {
    /// Final mileages of the successful runs of `combo`.
    pub fn finals(&self, combo: &str) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.combo == combo)
            .filter_map(|r| r.final_mileage)
            .collect()
    }

    /// Largest minus smallest final mileage over all successful runs.
    pub fn spread(&self) -> Option<f64> {
        let finals: Vec<f64> = self.runs.iter().filter_map(|r| r.final_mileage).collect();
        let max = finals.iter().copied().reduce(f64::max)?;
        let min = finals.iter().copied().reduce(f64::min)?;
        Some(max - min)
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:>4}  {:<40} {:>12} {:>12} {:>5}\n", "rank", "combination", "median final", "median init", "fail");
        for r in &self.ranking {
            let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
            s.push_str(&format!(
                "{:>4}  {:<40} {:>12} {:>12} {:>5}\n",
                r.rank,
                r.combo,
                f(r.median_final),
                f(r.median_initial),
                r.failures
            ));
        }
        s
    }
}

fn run_one(instance: &Instance, seed: u64, combo: &Combo, out: Option<&Path>) -> RunRecord {
    let started = std::time::Instant::now();
    let result = catch_unwind(AssertUnwindSafe(|| solve(instance, &combo.params)));
    let mut record = RunRecord {
        combo: combo.name.clone(),
        seed,
        initial: None,
        tabu: None,
        final_mileage: None,
        final_trucks: None,
        iterations: None,
        seconds: 0.0,
        error: None,
    };
    match result {
        Ok(Ok(o)) => {
            record.initial = Some(o.initial.total_mileage);
            record.tabu = Some(o.after_tabu.total_mileage);
            record.final_mileage = Some(o.solution.total_mileage);
            record.final_trucks = Some(o.solution.used_trucks());
            record.iterations = Some(o.iterations);
            if !o.solution.is_feasible() {
                record.error = Some("final solution infeasible".into());
                record.final_mileage = None;
            }
            if let Some(dir) = out {
                let path = dir.join("runs").join(format!("{}__seed{seed}.csv", combo.name));
                if let Err(e) = write(&path, &convergence_csv(&o.convergence)) {
                    record.error = Some(e.to_string());
                }
            }
        }
        Ok(Err(e)) => record.error = Some(e.to_string()),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            record.error = Some(format!("crashed: {msg}"));
        }
    }
    record.seconds = started.elapsed().as_secs_f64();
    record
}

/// Runs every combination on every `(seed, instance)`. Failed runs are
/// recorded and the matrix carries on. With `out`, writes per-run
/// convergence logs, `runs.csv`, `ranking.csv` and `report.json`.
pub fn run_bench(
    instances: &[(u64, Instance)],
    combos: &[Combo],
    parallel: usize,
    out: Option<&Path>,
) -> CliResult<BenchReport> {
    let jobs: Vec<(&(u64, Instance), &Combo)> =
        combos.iter().flat_map(|c| instances.iter().map(move |i| (i, c))).collect();
    let runs: Vec<RunRecord> = if parallel <= 1 {
        jobs.iter().map(|((seed, inst), c)| run_one(inst, *seed, c, out)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| CliError::Input(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(|((seed, inst), c)| run_one(inst, *seed, c, out)).collect())
    };

    let mut ranking: Vec<ComboRank> = combos
        .iter()
        .map(|c| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.combo == c.name).collect();
            let finals: Vec<f64> = mine.iter().filter_map(|r| r.final_mileage).collect();
            let inits: Vec<f64> = mine.iter().filter_map(|r| r.initial).collect();
            ComboRank {
                rank: 0,
                combo: c.name.clone(),
                runs: mine.len(),
                failures: mine.iter().filter(|r| r.final_mileage.is_none()).count(),
                median_final: median(&finals),
                median_initial: median(&inits),
            }
        })
        .collect();
    ranking.sort_by(|a, b| match (a.median_final, b.median_final) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    for (k, r) in ranking.iter_mut().enumerate() {
        r.rank = k + 1;
    }
    let report = BenchReport { runs, ranking };

    if let Some(dir) = out {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &report.runs {
            w.serialize(r).map_err(|e| CliError::Input(e.to_string()))?;
        }
        write(&dir.join("runs.csv"), &String::from_utf8_lossy(&w.into_inner().unwrap_or_default()))?;
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &report.ranking {
            w.serialize(r).map_err(|e| CliError::Input(e.to_string()))?;
        }
        write(&dir.join("ranking.csv"), &String::from_utf8_lossy(&w.into_inner().unwrap_or_default()))?;
        write(&dir.join("report.json"), &pretty(&report))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_24_distinct_combinations() {
        let g = grid24(&SolveParams::default());
        assert_eq!(g.len(), 24);
        let names: std::collections::BTreeSet<_> = g.iter().map(|c| c.name.clone()).collect();
        assert_eq!(names.len(), 24);
    }

    #[test]
    fn median_of_even_and_odd_sets() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
