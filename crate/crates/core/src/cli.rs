//! Command-line interface.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use crate::ap::{verify_optimal, TOL};
use crate::harness::{self, ExperimentPlan};
use crate::instance::{random_order, CostDist, Family, Instance, InstanceConfig};
use crate::oracles::{brute_ap, MAX_N_AP};
use crate::patching::{decompose, karp_patch, PatchPolicy};
use crate::ssp::{solve_ap_traced, solve_ap_with, Audit, SolveError, SolverOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "patchkit", version, about = "Assignment relaxation and cycle patching for ATSP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an instance file.
    Gen {
        #[arg(long)]
        family: Family,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value = "exp1")]
        dist: CostDist,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the assignment problem for an instance.
    Solve {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one augmentation event per line.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// off, sampled or full.
        #[arg(long, default_value = "sampled", value_parser = parse_audit)]
        audit: Audit,
        /// Fail instead of swapping in a reachable column.
        #[arg(long)]
        strict: bool,
        /// Insert rows and columns in a random order drawn from this seed.
        #[arg(long)]
        order_seed: Option<u64>,
    },
    /// Solve, then patch the cycle cover into a tour.
    Patch {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "global_min")]
        policy: PatchPolicy,
        /// Write one patch move per line.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check the solver against brute force on random instances.
    Verify {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an experiment plan.
    Experiment {
        #[arg(long)]
        plan: PathBuf,
        /// Results CSV; overrides the plan's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        long: Option<PathBuf>,
    },
    /// Summarise a results CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        long: Option<PathBuf>,
    },
}

fn parse_audit(s: &str) -> Result<Audit, String> {
    match s {
        "off" => Ok(Audit::Off),
        "sampled" => Ok(Audit::Sampled),
        "full" => Ok(Audit::Full),
        other => Err(format!("unknown audit level '{other}' (expected off, sampled or full)")),
    }
}

/// Parses `args` (including the program name) and runs the command, returning the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_USAGE
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(Instance::from_json(&text)?)
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Gen {
            family,
            n,
            alpha,
            eps,
            dist,
            seed,
            out: path,
        } => {
            let config = InstanceConfig {
                n,
                alpha,
                eps,
                family,
                cost_dist: dist,
            };
            let inst = Instance::generate(config, seed)?;
            emit(&inst.to_json(), path.as_deref(), out)?;
            Ok(EXIT_OK)
        }
        Command::Solve {
            input,
            out: path,
            trace,
            audit,
            strict,
            order_seed,
        } => {
            let inst = load_instance(&input)?;
            let n = inst.n();
            let l1 = inst.config().thresholds().map(|t| t.l1_count).unwrap_or(n);
            let opts = SolverOptions {
                order: order_seed.map(|s| (random_order(n, s, 0), random_order(n, s, 1))),
                pivot_columns: !strict,
                l1,
                audit,
                keep_events: false,
            };
            let mut trace_w = trace.as_deref().map(create).transpose()?;
            let mut io_err = None;
            let result = solve_ap_traced(inst.costs(), &opts, |ev| {
                if let Some(w) = trace_w.as_mut() {
                    let line = serde_json::to_string(ev).expect("event serializes");
                    if let Err(e) = writeln!(w, "{line}") {
                        io_err.get_or_insert(e);
                    }
                }
            });
            if let Some(e) = io_err {
                return Err(e.into());
            }
            if let Some(mut w) = trace_w {
                w.flush()?;
            }
            match result {
                Ok(s) => {
                    emit(&s.solution.to_json(), path.as_deref(), out)?;
                    Ok(EXIT_OK)
                }
                Err(e @ SolveError::Infeasible { .. }) => {
                    writeln!(err, "infeasible: {e}")?;
                    Ok(EXIT_FAILURE)
                }
                Err(e) => {
                    writeln!(err, "solver failure: {e}")?;
                    Ok(EXIT_FAILURE)
                }
            }
        }
        Command::Patch {
            input,
            policy,
            log,
            out: path,
        } => {
            let inst = load_instance(&input)?;
            let opts = SolverOptions {
                audit: Audit::Off,
                keep_events: false,
                ..SolverOptions::default()
            };
            let solved = match solve_ap_with(inst.costs(), &opts) {
                Ok(s) => s,
                Err(e) => {
                    writeln!(err, "infeasible: {e}")?;
                    return Ok(EXIT_FAILURE);
                }
            };
            let cover = decompose(&solved.solution.sigma);
            let result = karp_patch(&inst, &cover, policy);
            let steps = match &result {
                Ok(p) => &p.log,
                Err(f) => &f.log,
            };
            if let Some(p) = log.as_deref() {
                let mut w = create(p)?;
                for s in steps {
                    writeln!(w, "{}", serde_json::to_string(s)?)?;
                }
                w.flush()?;
            }
            match result {
                Ok(p) => {
                    let doc = serde_json::json!({
                        "order": p.tour.order,
                        "cost": p.tour.cost,
                        "v_ap": solved.solution.value,
                        "cycles": cover.len(),
                        "patches": p.log.len(),
                        "policy": policy,
                    });
                    emit(&format!("{doc}\n"), path.as_deref(), out)?;
                    Ok(EXIT_OK)
                }
                Err(f) => {
                    writeln!(err, "patching failed: {f}")?;
                    Ok(EXIT_FAILURE)
                }
            }
        }
        Command::Verify { n, trials, seed } => verify(n, trials, seed, out),
        Command::Experiment {
            plan,
            out: path,
            summary,
            long,
        } => {
            let text = fs::read_to_string(&plan)
                .with_context(|| format!("cannot read {}", plan.display()))?;
            let plan = ExperimentPlan::from_json(&text)?;
            let records = harness::run_plan(&plan)?;
            let results = path.or(plan.out.clone());
            let to_stdout = results.is_none();
            match results {
                Some(p) => {
                    let mut w = create(&p)?;
                    harness::write_csv(&records, &mut w)?;
                    w.flush()?;
                }
                None => harness::write_csv(&records, &mut *out)?,
            }
            let cells = harness::summarize(&records);
            if let Some(p) = summary.or(plan.summary_out.clone()) {
                harness::write_summary_csv(&cells, create(&p)?)?;
            }
            if let Some(p) = long.or(plan.long_out.clone()) {
                harness::write_long_csv(&records, create(&p)?)?;
            }
            // the table goes wherever the CSV does not
            let table: &mut dyn Write = if to_stdout { err } else { out };
            write!(table, "{}", harness::render_summary(&cells))?;
            table.flush()?;
            Ok(EXIT_OK)
        }
        Command::Report {
            input,
            summary,
            long,
        } => {
            let f = File::open(&input).with_context(|| format!("cannot read {}", input.display()))?;
            let records = harness::read_csv(f)?;
            if records.is_empty() {
                bail!("{} has no records", input.display());
            }
            let cells = harness::summarize(&records);
            if let Some(p) = summary {
                harness::write_summary_csv(&cells, create(&p)?)?;
            }
            if let Some(p) = long {
                harness::write_long_csv(&records, create(&p)?)?;
            }
            write!(out, "{}", harness::render_summary(&cells))?;
            Ok(EXIT_OK)
        }
    }
}

/// Random instances alternate between the complete and the perturbed regular-ish family.
fn verify(n: usize, trials: usize, seed: u64, out: &mut dyn Write) -> Result<i32> {
    if n > MAX_N_AP {
        bail!("verify supports n <= {MAX_N_AP} (brute force)");
    }
    let mut matches = 0;
    for t in 0..trials {
        let family = if t % 2 == 0 {
            Family::Complete
        } else {
            Family::RandomRegularish
        };
        let config = InstanceConfig {
            n,
            alpha: 0.5,
            eps: 0.2,
            family,
            cost_dist: CostDist::Exp1,
        };
        let inst = Instance::generate(config, harness::trial_seed(seed, &config, t))?;
        let (best, _) = brute_ap(inst.costs())?;
        let ok = match solve_ap_with(inst.costs(), &SolverOptions::default()) {
            Ok(s) => {
                (s.solution.value - best).abs() <= TOL
                    && verify_optimal(inst.costs(), &s.solution).is_ok()
            }
            Err(SolveError::Infeasible { .. }) => best.is_infinite(),
            Err(_) => false,
        };
        if ok {
            matches += 1;
        }
    }
    writeln!(out, "{matches}/{trials} oracle matches")?;
    Ok(if matches == trials { EXIT_OK } else { EXIT_MISMATCH })
}
