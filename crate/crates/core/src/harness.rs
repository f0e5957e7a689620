//! Seeded Monte-Carlo experiments: plan files, per-trial records, CSV output and summaries.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ap::verify_optimal;
use crate::instance::{self, random_order, CostDist, Family, Instance, InstanceConfig};
use crate::patching::{decompose, karp_patch, PatchPolicy, PatchStep};
use crate::ssp::{solve_ap_with, Audit, SolverOptions};

/// Column order of the results CSV.
pub const CSV_HEADER: [&str; 20] = [
    "n",
    "alpha",
    "eps",
    "family",
    "dist",
    "seed",
    "v_ap",
    "nu_c",
    "max_matched_cost",
    "gamma_n",
    "r0_ln_n",
    "policy",
    "tour_cost",
    "overhead",
    "ratio",
    "sum_chi",
    "failure",
    "ms_gen",
    "ms_ap",
    "ms_patch",
];

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "PATCHKIT_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

fn default_alpha() -> Vec<f64> {
    vec![0.5]
}

fn default_family() -> Vec<Family> {
    vec![Family::Complete]
}

fn default_dist() -> Vec<CostDist> {
    vec![CostDist::Exp1]
}

fn default_policies() -> Vec<PatchPolicy> {
    vec![PatchPolicy::GlobalMin]
}

/// A grid of cells and a trial count, read from a JSON plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub n: Vec<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    pub eps: Vec<f64>,
    #[serde(default = "default_family")]
    pub family: Vec<Family>,
    #[serde(default = "default_dist")]
    pub cost_dist: Vec<CostDist>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default = "default_policies")]
    pub policies: Vec<PatchPolicy>,
    /// Results CSV.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Per-cell summary CSV.
    #[serde(default)]
    pub summary_out: Option<PathBuf>,
    /// Long-format CSV, one metric per row.
    #[serde(default)]
    pub long_out: Option<PathBuf>,
    /// Record wall-clock times. Off by default so that reruns are byte-identical.
    #[serde(default)]
    pub timings: bool,
}

/// One point of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub config: InstanceConfig,
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<ExperimentPlan, HarnessError> {
        let plan: ExperimentPlan = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Plan(m));
        if self.n.is_empty()
            || self.alpha.is_empty()
            || self.eps.is_empty()
            || self.family.is_empty()
            || self.cost_dist.is_empty()
        {
            return bad("every grid axis needs at least one value".into());
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.policies.is_empty() {
            return bad("at least one policy is required".into());
        }
        for cell in self.cells() {
            let c = cell.config;
            if let Err(e) = c.thresholds() {
                return bad(e.to_string());
            }
            if let Err(e) = instance::generate_base(c.family, c.n, c.alpha, 0) {
                return bad(e.to_string());
            }
        }
        Ok(())
    }

    /// Cells in grid order: `n` outermost, then alpha, eps, family, cost distribution.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &alpha in &self.alpha {
                for &eps in &self.eps {
                    for &family in &self.family {
                        for &cost_dist in &self.cost_dist {
                            out.push(Cell {
                                index: out.len(),
                                config: InstanceConfig {
                                    n,
                                    alpha,
                                    eps,
                                    family,
                                    cost_dist,
                                },
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// First 8 bytes (little-endian) of SHA-256 over the master seed, the cell parameters and
/// the trial index. Depends on the cell's parameters, not its position in the grid.
pub fn trial_seed(master_seed: u64, config: &InstanceConfig, trial: usize) -> u64 {
    let key = format!(
        "patchkit-trial|{}|{}|{:?}|{:?}|{}|{}|{}",
        master_seed, config.n, config.alpha, config.eps, config.family, config.cost_dist, trial
    );
    let digest = Sha256::digest(key.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    /// The instance could not be generated.
    Instance,
    /// No perfect matching.
    Infeasible,
    /// The solver's output failed its optimality certificate.
    Certificate,
    /// Patching ran out of patching pairs.
    NoPatch,
}

/// Per-trial bookkeeping for patch accounting; not written to CSV.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Accounting {
    pub patches: usize,
    /// Sum of logged patch deltas.
    pub delta_sum: f64,
    /// Smallest `pairs - l * n / 2` over all patch steps (`l` = cycles before the step).
    pub min_pairs_slack: f64,
}

/// One row of the results CSV: a trial under one patching policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub alpha: f64,
    pub eps: f64,
    pub family: Family,
    pub dist: CostDist,
    pub seed: u64,
    pub v_ap: Option<f64>,
    pub nu_c: Option<usize>,
    pub max_matched_cost: Option<f64>,
    pub gamma_n: f64,
    pub r0_ln_n: f64,
    pub policy: PatchPolicy,
    pub tour_cost: Option<f64>,
    pub overhead: Option<f64>,
    pub ratio: Option<f64>,
    pub sum_chi: Option<usize>,
    pub failure: Option<Failure>,
    pub ms_gen: f64,
    pub ms_ap: f64,
    pub ms_patch: f64,
    #[serde(skip)]
    pub cell: usize,
    #[serde(skip)]
    pub trial: usize,
    #[serde(skip)]
    pub accounting: Option<Accounting>,
}

fn millis(t: Instant, on: bool) -> f64 {
    if on {
        t.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    }
}

/// Generate, solve, decompose and patch one trial under each policy.
pub fn run_trial(
    cell: &Cell,
    trial: usize,
    seed: u64,
    policies: &[PatchPolicy],
    timings: bool,
) -> Vec<TrialRecord> {
    let c = cell.config;
    let th = c.thresholds().expect("plan was validated");
    let blank = |policy| TrialRecord {
        n: c.n,
        alpha: c.alpha,
        eps: c.eps,
        family: c.family,
        dist: c.cost_dist,
        seed,
        v_ap: None,
        nu_c: None,
        max_matched_cost: None,
        gamma_n: th.gamma_n,
        r0_ln_n: th.r0_ln_n(c.n),
        policy,
        tour_cost: None,
        overhead: None,
        ratio: None,
        sum_chi: None,
        failure: None,
        ms_gen: 0.0,
        ms_ap: 0.0,
        ms_patch: 0.0,
        cell: cell.index,
        trial,
        accounting: None,
    };
    let failed = |f| {
        policies
            .iter()
            .map(|&p| TrialRecord {
                failure: Some(f),
                ..blank(p)
            })
            .collect()
    };

    let t = Instant::now();
    let Ok(inst) = Instance::generate(c, seed) else {
        return failed(Failure::Instance);
    };
    let ms_gen = millis(t, timings);

    let t = Instant::now();
    let opts = SolverOptions {
        order: Some((random_order(c.n, seed, 0), random_order(c.n, seed, 1))),
        pivot_columns: true,
        l1: th.l1_count,
        audit: Audit::Off,
        keep_events: false,
    };
    let solved = match solve_ap_with(inst.costs(), &opts) {
        Ok(s) => s,
        Err(_) => {
            let mut recs: Vec<TrialRecord> = failed(Failure::Infeasible);
            recs.iter_mut().for_each(|r| r.ms_gen = ms_gen);
            return recs;
        }
    };
    let certified = verify_optimal(inst.costs(), &solved.solution).is_ok();
    let ms_ap = millis(t, timings);
    let v_ap = solved.solution.value;
    let cover = decompose(&solved.solution.sigma);

    policies
        .iter()
        .map(|&policy| {
            let mut rec = TrialRecord {
                v_ap: Some(v_ap),
                nu_c: Some(cover.len()),
                max_matched_cost: Some(solved.diagnostics.max_matched_cost),
                sum_chi: Some(solved.diagnostics.short_cycle_total),
                ms_gen,
                ms_ap,
                ..blank(policy)
            };
            if !certified {
                rec.failure = Some(Failure::Certificate);
                return rec;
            }
            let t = Instant::now();
            let result = karp_patch(&inst, &cover, policy);
            rec.ms_patch = millis(t, timings);
            let n = c.n as f64;
            let slack = |log: &[PatchStep]| {
                log.iter()
                    .map(|s| s.pairs_before as f64 - s.cycles_before as f64 * n / 2.0)
                    .fold(f64::INFINITY, f64::min)
            };
            match result {
                Ok(p) => {
                    rec.tour_cost = Some(p.tour.cost);
                    rec.overhead = Some(p.tour.cost - v_ap);
                    rec.ratio = Some(p.tour.cost / v_ap);
                    rec.accounting = Some(Accounting {
                        patches: p.log.len(),
                        delta_sum: p.added_cost,
                        min_pairs_slack: slack(&p.log),
                    });
                }
                Err(f) => {
                    rec.failure = Some(Failure::NoPatch);
                    rec.accounting = Some(Accounting {
                        patches: f.log.len(),
                        delta_sum: f.added_cost,
                        min_pairs_slack: slack(&f.log),
                    });
                }
            }
            rec
        })
        .collect()
}

/// Worker count: `PATCHKIT_THREADS` when set and positive, otherwise rayon's default.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&k| k > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

fn run_jobs(plan: &ExperimentPlan, jobs: Vec<(Cell, usize)>) -> Result<Vec<TrialRecord>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let nested: Vec<Vec<TrialRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|(cell, trial)| {
                let seed = trial_seed(plan.master_seed, &cell.config, *trial);
                run_trial(cell, *trial, seed, &plan.policies, plan.timings)
            })
            .collect()
    });
    let mut records: Vec<TrialRecord> = nested.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.cell, r.trial));
    Ok(records)
}

/// All trials of one cell, in trial order.
pub fn run_cell(plan: &ExperimentPlan, cell: &Cell) -> Result<Vec<TrialRecord>, HarnessError> {
    run_jobs(plan, (0..plan.trials).map(|t| (*cell, t)).collect())
}

/// Every trial of every cell, sorted by `(cell, trial)`, policies in plan order.
pub fn run_plan(plan: &ExperimentPlan) -> Result<Vec<TrialRecord>, HarnessError> {
    plan.validate()?;
    let jobs = plan
        .cells()
        .into_iter()
        .flat_map(|c| (0..plan.trials).map(move |t| (c, t)))
        .collect();
    run_jobs(plan, jobs)
}

pub fn write_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<TrialRecord>, HarnessError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(HarnessError::Plan(format!(
            "unexpected CSV header: {}",
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Mean, median and 95% quantile (linear interpolation between order statistics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Stats {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: quantile(&v, 0.5),
            p95: quantile(&v, 0.95),
        })
    }
}

/// `q`-quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Aggregates for one `(cell, policy)` group. Fractions are over all trials of the group,
/// with failed trials counting against them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub n: usize,
    pub alpha: f64,
    pub eps: f64,
    pub family: Family,
    pub dist: CostDist,
    pub policy: PatchPolicy,
    pub trials: usize,
    pub v_ap: Option<Stats>,
    pub nu_c: Option<Stats>,
    pub overhead: Option<Stats>,
    pub ratio: Option<Stats>,
    pub frac_nu_c_le_r0_ln_n: f64,
    pub frac_max_cost_le_gamma_n: f64,
    pub failure_rate: f64,
}

/// Groups records by cell parameters and policy, in order of first appearance.
pub fn summarize(records: &[TrialRecord]) -> Vec<CellSummary> {
    type Key = (usize, u64, u64, Family, CostDist, PatchPolicy);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: HashMap<Key, Vec<&TrialRecord>> = HashMap::new();
    for r in records {
        let key = (
            r.n,
            r.alpha.to_bits(),
            r.eps.to_bits(),
            r.family,
            r.dist,
            r.policy,
        );
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let first = g[0];
            let collect = |f: &dyn Fn(&TrialRecord) -> Option<f64>| -> Vec<f64> {
                g.iter().filter_map(|r| f(r)).collect()
            };
            let total = g.len() as f64;
            let frac = |p: &dyn Fn(&TrialRecord) -> bool| g.iter().filter(|r| p(r)).count() as f64 / total;
            CellSummary {
                n: first.n,
                alpha: first.alpha,
                eps: first.eps,
                family: first.family,
                dist: first.dist,
                policy: first.policy,
                trials: g.len(),
                v_ap: Stats::of(&collect(&|r| r.v_ap)),
                nu_c: Stats::of(&collect(&|r| r.nu_c.map(|k| k as f64))),
                overhead: Stats::of(&collect(&|r| r.overhead)),
                ratio: Stats::of(&collect(&|r| r.ratio)),
                frac_nu_c_le_r0_ln_n: frac(&|r| r.nu_c.is_some_and(|k| k as f64 <= r.r0_ln_n)),
                frac_max_cost_le_gamma_n: frac(&|r| {
                    r.max_matched_cost.is_some_and(|m| m <= r.gamma_n)
                }),
                failure_rate: frac(&|r| r.failure.is_some()),
            }
        })
        .collect()
}

const SUMMARY_HEADER: [&str; 22] = [
    "n",
    "alpha",
    "eps",
    "family",
    "dist",
    "policy",
    "trials",
    "v_ap_mean",
    "v_ap_median",
    "v_ap_p95",
    "nu_c_mean",
    "nu_c_median",
    "nu_c_p95",
    "overhead_mean",
    "overhead_median",
    "overhead_p95",
    "ratio_mean",
    "ratio_median",
    "ratio_p95",
    "frac_nu_c_le_r0_ln_n",
    "frac_max_cost_le_gamma_n",
    "failure_rate",
];

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn summary_row(s: &CellSummary) -> Vec<String> {
    let mut row = vec![
        s.n.to_string(),
        s.alpha.to_string(),
        s.eps.to_string(),
        s.family.to_string(),
        s.dist.to_string(),
        s.policy.to_string(),
        s.trials.to_string(),
    ];
    for st in [s.v_ap, s.nu_c, s.overhead, s.ratio] {
        row.push(fmt_opt(st.map(|x| x.mean)));
        row.push(fmt_opt(st.map(|x| x.median)));
        row.push(fmt_opt(st.map(|x| x.p95)));
    }
    row.push(s.frac_nu_c_le_r0_ln_n.to_string());
    row.push(s.frac_max_cost_le_gamma_n.to_string());
    row.push(s.failure_rate.to_string());
    row
}

pub fn write_summary_csv<W: Write>(summary: &[CellSummary], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for s in summary {
        w.write_record(summary_row(s))?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: `n,alpha,eps,family,dist,policy,seed,metric,value`, one numeric metric
/// per row, missing values omitted.
pub fn write_long_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n", "alpha", "eps", "family", "dist", "policy", "seed", "metric", "value",
    ])?;
    for r in records {
        let metrics = [
            ("v_ap", r.v_ap),
            ("nu_c", r.nu_c.map(|k| k as f64)),
            ("max_matched_cost", r.max_matched_cost),
            ("gamma_n", Some(r.gamma_n)),
            ("r0_ln_n", Some(r.r0_ln_n)),
            ("tour_cost", r.tour_cost),
            ("overhead", r.overhead),
            ("ratio", r.ratio),
            ("sum_chi", r.sum_chi.map(|k| k as f64)),
            ("failed", Some(if r.failure.is_some() { 1.0 } else { 0.0 })),
        ];
        for (name, value) in metrics {
            if let Some(v) = value {
                w.write_record([
                    r.n.to_string(),
                    r.alpha.to_string(),
                    r.eps.to_string(),
                    r.family.to_string(),
                    r.dist.to_string(),
                    r.policy.to_string(),
                    r.seed.to_string(),
                    name.to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width text rendering of a summary for terminals.
pub fn render_summary(summary: &[CellSummary]) -> String {
    let header = [
        "n", "alpha", "eps", "family", "dist", "policy", "trials", "v_ap", "nu_c", "ovh_med",
        "ratio_med", "nu<=r0ln", "max<=gam", "fail",
    ];
    let f4 = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            vec![
                s.n.to_string(),
                s.alpha.to_string(),
                s.eps.to_string(),
                s.family.to_string(),
                s.dist.to_string(),
                s.policy.to_string(),
                s.trials.to_string(),
                f4(s.v_ap.map(|x| x.mean)),
                f4(s.nu_c.map(|x| x.mean)),
                f4(s.overhead.map(|x| x.median)),
                f4(s.ratio.map(|x| x.median)),
                format!("{:.3}", s.frac_nu_c_le_r0_ln_n),
                format!("{:.3}", s.frac_max_cost_le_gamma_n),
                format!("{:.3}", s.failure_rate),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<String>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.iter().map(|s| s.to_string()).collect());
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}
