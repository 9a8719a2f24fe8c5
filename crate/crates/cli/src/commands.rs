//! Command implementations. Each resolves its settings, validates them up
//! front (usage errors exit with 1), and writes validated files only.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use phred_core::experiment::{fixed_samples, initial_samples};
use phred_core::io::{
    level_path, read_system, write_comparison_csv, write_report_csv, write_report_json, write_response_csv,
    write_samples_csv, write_system,
};
use phred_core::linalg::{log_space, C64};
use phred_core::resolvent::FastTransfer;
use phred_core::{
    greedy_init, msd_chain, reduce as run_reduce, run_comparison, theta_from_init, BfgsOptions, ErrorFunction,
    FomResponse, InitOptions, MsdConfig, PHSystem, Protocol, ReduceOptions, Reduction,
};

use crate::config::{at_least, parse_orders, positive, Settings};
use crate::{CliError, CompareArgs, EvalArgs, GenerateArgs, Outcome, ReduceArgs, TuneArgs};

/// Resolved values, written next to the outputs in settings-file syntax so a
/// run can be repeated with `--config`.
#[derive(Debug, Default)]
struct Record(String);

impl Record {
    fn add(&mut self, key: &str, value: impl std::fmt::Display) {
        writeln!(self.0, "{key} = {value}").expect("writing to a string");
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| phred_core::Error::io(dir, e))?;
        let path = dir.join("settings.txt");
        fs::write(&path, &self.0).map_err(|e| phred_core::Error::io(&path, e))?;
        Ok(())
    }
}

pub fn generate(a: &GenerateArgs, s: &Settings) -> Result<Outcome, CliError> {
    let cfg = MsdConfig {
        n_masses: at_least("masses", s.get(a.masses, "masses", 50)?, 1)?,
        m_inputs: at_least("inputs", s.get(a.inputs, "inputs", 2)?, 1)?,
        mass: positive("mass", s.get(a.mass, "mass", 4.0)?)?,
        stiffness: positive("stiffness", s.get(a.stiffness, "stiffness", 4.0)?)?,
        damping: positive("damping", s.get(a.damping, "damping", 1.0)?)?,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let out: std::path::PathBuf = s.require(a.out.clone(), "out")?;
    let sys = msd_chain(&cfg)?;
    write_system(&out, &sys)?;
    println!("wrote n={} m={} system to {}", sys.n(), sys.m(), out.display());
    Ok(Outcome::Done)
}

struct Tuning {
    init: InitOptions,
    reduce: ReduceOptions,
    response_points: usize,
    seed: u64,
}

fn tuning(t: &TuneArgs, s: &Settings, rec: &mut Record) -> Result<Tuning, CliError> {
    let lo = positive("lo", s.get(t.lo, "lo", 1e-8)?)?;
    let hi = positive("hi", s.get(t.hi, "hi", 1e5)?)?;
    if hi <= lo {
        return Err(CliError::Usage(format!("--hi ({hi}) must exceed --lo ({lo})")));
    }
    let n_grid = at_least("n-grid", s.get(t.n_grid, "n-grid", 2000)?, 2)?;
    let gamma_max = positive("gamma-max", s.get(t.gamma_max, "gamma-max", 0.5)?)?;
    let tau_b = positive("tau-b", s.get(t.tau_b, "tau-b", 0.1)?)?;
    let max_bisect = at_least("max-bisect", s.get(t.max_bisect, "max-bisect", 30)?, 1)?;
    let sample_cap = at_least("sample-cap", s.get(t.sample_cap, "sample-cap", 100_000)?, 2)?;
    let level_margin = s.get(t.level_margin, "level-margin", 1e-3)?;
    if !(0.0..1.0).contains(&level_margin) {
        return Err(CliError::Usage(format!("--level-margin must be in [0, 1), got {level_margin}")));
    }
    let max_iter = at_least("max-iter", s.get(t.max_iter, "max-iter", 2000)?, 1)?;
    let response_points = at_least("response-points", s.get(t.response_points, "response-points", 1000)?, 2)?;
    let seed = s.get(t.seed, "seed", 0u64)?;
    for (k, v) in [("lo", lo), ("hi", hi), ("gamma-max", gamma_max), ("tau-b", tau_b), ("level-margin", level_margin)] {
        rec.add(k, v);
    }
    for (k, v) in [
        ("n-grid", n_grid),
        ("max-bisect", max_bisect),
        ("sample-cap", sample_cap),
        ("max-iter", max_iter),
        ("response-points", response_points),
    ] {
        rec.add(k, v);
    }
    rec.add("seed", seed);
    Ok(Tuning {
        init: InitOptions { lo, hi, n_grid },
        reduce: ReduceOptions {
            gamma_max,
            tau_b,
            max_bisect,
            adaptive: true,
            sample_cap,
            level_margin,
            bfgs: BfgsOptions {
                max_iter,
                ..BfgsOptions::default()
            },
        },
        response_points,
        seed,
    })
}

fn load_system(s: &Settings, flag: Option<std::path::PathBuf>, rec: &mut Record) -> Result<PHSystem, CliError> {
    let dir: std::path::PathBuf = s.require(flag, "system")?;
    rec.add("system", dir.display());
    Ok(read_system(&dir)?)
}

fn check_order(r: usize, n: usize) -> Result<usize, CliError> {
    if r == 0 || r % 2 != 0 || r > n {
        return Err(CliError::Usage(format!("--r must be even with 2 <= r <= {n}, got {r}")));
    }
    Ok(r)
}

/// Writes the model, report, samples, response and error tables of one run,
/// plus per-level samples and errors under `levels/`.
fn write_run(dir: &Path, fom: &Arc<FomResponse>, red: &Reduction, grid: &[f64]) -> Result<(), CliError> {
    let rom = red.theta_opt.assemble();
    write_system(&dir.join("rom"), &rom)?;
    write_report_json(&dir.join("report.json"), &red.report)?;
    write_report_csv(&dir.join("report.csv"), &red.report)?;
    write_samples_csv(&dir.join("samples.csv"), &red.samples)?;
    write_response_csv(&dir.join("response.csv"), grid, &responses(&rom, grid)?, true)?;
    write_response_csv(&dir.join("error.csv"), grid, &errors(fom, &rom, grid)?, false)?;
    for (k, level) in red.levels.iter().enumerate() {
        write_samples_csv(&level_path(dir, k, "samples.csv"), &level.samples)?;
        let rom = level.theta.assemble();
        write_response_csv(&level_path(dir, k, "error.csv"), grid, &errors(fom, &rom, grid)?, false)?;
    }
    Ok(())
}

fn responses(sys: &PHSystem, grid: &[f64]) -> phred_core::Result<Vec<phred_core::linalg::CMatrix>> {
    let fast = FastTransfer::new(sys);
    grid.iter().map(|&w| fast.eval(C64::new(0.0, w))).collect()
}

fn errors(fom: &Arc<FomResponse>, rom: &PHSystem, grid: &[f64]) -> phred_core::Result<Vec<phred_core::linalg::CMatrix>> {
    let e = ErrorFunction::new(fom.clone(), Some(rom))?;
    grid.iter().map(|&w| e.error_matrix(w)).collect()
}

pub fn reduce(a: &ReduceArgs, s: &Settings) -> Result<Outcome, CliError> {
    let mut rec = Record::default();
    let sys = load_system(s, a.system.clone(), &mut rec)?;
    let r = check_order(s.require(a.r, "r")?, sys.n())?;
    rec.add("r", r);
    let fixed = s.opt(a.fixed_samples, "fixed-samples")?;
    if let Some(k) = fixed {
        at_least("fixed-samples", k, 2)?;
        rec.add("fixed-samples", k);
    }
    let tune = tuning(&a.tune, s, &mut rec)?;
    let out: std::path::PathBuf = s.require(a.out.clone(), "out")?;
    rec.add("out", out.display());

    let fom = Arc::new(FomResponse::new(sys));
    let init = greedy_init(&fom, r, &tune.init)?;
    let theta0 = theta_from_init(&init.rom)?;
    let (s0, opts) = match fixed {
        Some(k) => (
            fixed_samples(tune.init.lo, tune.init.hi, k)?,
            ReduceOptions {
                adaptive: false,
                ..tune.reduce
            },
        ),
        None => (initial_samples(tune.init.lo, tune.init.hi, init.points())?, tune.reduce),
    };
    let red = run_reduce(&fom, &theta0, &s0, &opts)?;

    rec.write(&out)?;
    let grid = log_space(tune.init.lo, tune.init.hi, tune.response_points);
    write_system(&out.join("init"), &init.rom)?;
    write_response_csv(&out.join("fom_response.csv"), &grid, &responses(fom.system(), &grid)?, true)?;
    write_run(&out, &fom, &red, &grid)?;

    let rep = &red.report;
    println!(
        "r={r}: {} levels, final level {:.6e}, {} samples, sampled error {:.6e} (seed {})",
        rep.iterations.len(),
        rep.final_gamma,
        rep.final_n_samples,
        rep.final_hinf_sampled,
        tune.seed
    );
    if let Some(why) = &rep.aborted {
        eprintln!("stopped early: {why}; partial results in {}", out.display());
        return Ok(Outcome::Aborted);
    }
    Ok(Outcome::Done)
}

pub fn compare(a: &CompareArgs, s: &Settings) -> Result<Outcome, CliError> {
    let mut rec = Record::default();
    let sys = load_system(s, a.system.clone(), &mut rec)?;
    let orders_text = s.get(a.r.clone(), "r", "4:20:2".to_string())?;
    let orders = parse_orders(&orders_text)?;
    for &r in &orders {
        check_order(r, sys.n())?;
    }
    rec.add("r", &orders_text);
    let fixed_points = at_least("fixed-samples", s.get(a.fixed_samples, "fixed-samples", 800)?, 2)?;
    let verify_points = at_least("verify-points", s.get(a.verify_points, "verify-points", 100_000)?, 2)?;
    let repeats = at_least("repeats", s.get(a.repeats, "repeats", 3)?, 1)?;
    rec.add("fixed-samples", fixed_points);
    rec.add("verify-points", verify_points);
    rec.add("repeats", repeats);
    let tune = tuning(&a.tune, s, &mut rec)?;
    let out: std::path::PathBuf = s.require(a.out.clone(), "out")?;
    rec.add("out", out.display());

    let protocol = Protocol {
        init: tune.init,
        reduce: tune.reduce,
        lo: tune.init.lo,
        hi: tune.init.hi,
        fixed_points,
        verify_points,
        repeats,
        ..Protocol::default()
    };
    println!("r,seconds_fixed,seconds_adaptive,ratio,n_samples_final,hinf_adaptive,hinf_fixed");
    let result = run_comparison(&sys, &orders, &protocol, |row| {
        println!(
            "{},{:.4},{:.4},{:.3},{},{:.6e},{:.6e}",
            row.r, row.seconds_fixed, row.seconds_adaptive, row.ratio, row.n_samples_final, row.hinf_adaptive, row.hinf_fixed
        );
    })?;

    rec.write(&out)?;
    write_comparison_csv(&out.join("comparison.csv"), &result.rows)?;
    let fom = Arc::new(FomResponse::new(sys));
    let grid = log_space(tune.init.lo, tune.init.hi, tune.response_points);
    let mut outcome = Outcome::Done;
    for run in &result.runs {
        let dir = out.join("runs").join(run.r.to_string());
        write_system(&dir.join("init"), &run.init.rom)?;
        write_run(&dir.join("adaptive"), &fom, &run.adaptive.reduction, &grid)?;
        write_run(&dir.join("fixed"), &fom, &run.fixed.reduction, &grid)?;
        for (name, red) in [("adaptive", &run.adaptive.reduction), ("fixed", &run.fixed.reduction)] {
            if let Some(why) = &red.report.aborted {
                eprintln!("r={} {name}: stopped early: {why}", run.r);
                outcome = Outcome::Aborted;
            }
        }
    }
    Ok(outcome)
}

pub fn eval(a: &EvalArgs, s: &Settings) -> Result<Outcome, CliError> {
    let mut rec = Record::default();
    let sys = load_system(s, a.system.clone(), &mut rec)?;
    let lo = positive("lo", s.get(a.lo, "lo", 1e-8)?)?;
    let hi = positive("hi", s.get(a.hi, "hi", 1e5)?)?;
    if hi <= lo {
        return Err(CliError::Usage(format!("--hi ({hi}) must exceed --lo ({lo})")));
    }
    let points = at_least("points", s.get(a.points, "points", 1000)?, 2)?;
    let out: std::path::PathBuf = s.require(a.out.clone(), "out")?;
    let grid = log_space(lo, hi, points);
    write_response_csv(&out, &grid, &responses(&sys, &grid)?, true)?;
    println!("wrote {points} frequencies to {}", out.display());
    Ok(Outcome::Done)
}
