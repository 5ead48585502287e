//! Experiment execution: signal preparation, sweep cells and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use numdiff::metrics::{delay_floor, mean, median, RmseReport, RmseSummary};
use numdiff::signals::{
    add_noise, generate_maneuver_trajectory, generate_two_tone, read_csv, write_csv, ManeuverProfile, NoiseSpec,
    SampledSignal,
};
use numdiff::{sparse_estimate_series, DerivativeOrder};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AieModeConfig, AlgorithmSpec, ExperimentConfig, Scenario};

/// Computes the estimate series (indexed by estimated step) for one cell;
/// `None` marks steps the algorithm never estimates.
pub type Runner = dyn Fn(&Cell, &SampledSignal) -> numdiff::Result<Vec<Option<f64>>> + Sync;

/// One (algorithm, SNR, seed) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub algorithm: AlgorithmSpec,
    pub order: DerivativeOrder,
    pub snr_db: f64,
    pub seed: u64,
    /// Variance of the added noise; NaN when unknown.
    pub v2_true: f64,
}

/// Runs the cell's algorithm over the noisy samples.
pub fn default_runner(cell: &Cell, noisy: &SampledSignal) -> numdiff::Result<Vec<Option<f64>>> {
    let mut d = cell.algorithm.build(cell.order, noisy.sample_time_s(), cell.v2_true)?;
    sparse_estimate_series(d.as_mut(), noisy.values())
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: Cell,
    pub result: Result<RmseReport, String>,
}

/// Clean signal for the scenario with `k_f + 1` samples (fewer if a CSV
/// input is shorter).
pub fn base_signal(cfg: &ExperimentConfig) -> anyhow::Result<SampledSignal> {
    let n = cfg.k_f + 1;
    let ts = cfg.sample_time_s;
    let s = &cfg.signal;
    Ok(match cfg.scenario {
        Scenario::TwoTone => {
            generate_two_tone(s.amplitudes[0], s.frequencies[0], s.amplitudes[1], s.frequencies[1], ts, n)?
        }
        Scenario::SingleTone => generate_two_tone(s.amplitudes[0], s.frequencies[0], 0.0, 0.0, ts, n)?,
        Scenario::Maneuver => {
            let profile = s.maneuver.map(ManeuverProfile::from).unwrap_or_default();
            generate_maneuver_trajectory(n as f64 * ts, ts, &profile)?
        }
        Scenario::CsvInput => {
            let path = s.path.as_ref().context("csv_input needs signal.path")?;
            let full = read_csv(path).with_context(|| format!("reading {}", path.display()))?;
            truncate(&full, n)?
        }
    })
}

fn truncate(s: &SampledSignal, n: usize) -> anyhow::Result<SampledSignal> {
    if s.len() <= n {
        return Ok(s.clone());
    }
    let mut out = SampledSignal::new(s.sample_time_s(), s.values()[..n].to_vec())?;
    for order in [DerivativeOrder::First, DerivativeOrder::Second] {
        if let Some(t) = s.truth(order) {
            out = out.with_truth(order, t[..n].to_vec())?;
        }
    }
    Ok(out)
}

/// SNR values to run; a clean run when none are listed.
fn snr_values(cfg: &ExperimentConfig) -> Vec<f64> {
    if cfg.snr_db_list.is_empty() {
        vec![f64::INFINITY]
    } else {
        cfg.snr_db_list.clone()
    }
}

fn noisy(clean: &SampledSignal, snr_db: f64, seed: u64) -> numdiff::Result<(SampledSignal, f64)> {
    let spec = NoiseSpec::new(snr_db, seed);
    let v2 = spec.variance_for(clean.rms())?;
    Ok((add_noise(clean, &spec)?, v2))
}

/// Runs every cell, in parallel, returning outcomes in cell order.
pub fn run_cells(
    cfg: &ExperimentConfig,
    clean: &SampledSignal,
    algorithms: &[AlgorithmSpec],
    runner: &Runner,
) -> Vec<CellOutcome> {
    let order = cfg.order().expect("validated config");
    let truth = clean.truth(order);
    let mut cells = Vec::new();
    for alg in algorithms {
        for &snr_db in &snr_values(cfg) {
            for &seed in &cfg.seeds {
                cells.push(Cell { algorithm: alg.clone(), order, snr_db, seed, v2_true: f64::NAN });
            }
        }
    }
    cells
        .into_par_iter()
        .map(|mut cell| {
            let result = (|| {
                let truth = truth.ok_or_else(|| format!("the signal has no truth for derivative order {order}"))?;
                let (signal, v2) = noisy(clean, cell.snr_db, cell.seed).map_err(|e| e.to_string())?;
                cell.v2_true = if cfg.scenario == Scenario::CsvInput { f64::NAN } else { v2 };
                let est = runner(&cell, &signal).map_err(|e| e.to_string())?;
                let mut report = RmseReport::from_sparse(
                    cell.algorithm.name(),
                    order,
                    truth,
                    &est,
                    cell.algorithm.delay_steps(),
                    cell.snr_db,
                )
                .map_err(|e| e.to_string())?;
                for (k, v) in cell.algorithm.params() {
                    report = report.with_param(k, v);
                }
                Ok(report.with_param("seed", cell.seed))
            })();
            CellOutcome { cell, result }
        })
        .collect()
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

fn num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug, Serialize)]
struct SummaryJson {
    reports: Vec<RmseSummary>,
    failures: Vec<FailureJson>,
}

#[derive(Debug, Serialize)]
struct FailureJson {
    algorithm: String,
    snr_db: f64,
    seed: u64,
    error: String,
}

/// Result of a sweep: number of failed cells and where files were written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub cells: usize,
    pub failures: usize,
    pub output_dir: PathBuf,
}

fn write_runs(dir: &Path, outcomes: &[CellOutcome]) -> anyhow::Result<()> {
    for o in outcomes {
        if let Ok(r) = &o.result {
            let d = dir.join("runs").join(file_safe(&r.algorithm_name));
            fs::create_dir_all(&d)?;
            let mut buf = Vec::new();
            r.write_csv(&mut buf)?;
            fs::write(d.join(format!("snr{}_seed{}.csv", o.cell.snr_db, o.cell.seed)), buf)?;
        }
    }
    Ok(())
}

fn write_json(path: &Path, outcomes: &[CellOutcome]) -> anyhow::Result<()> {
    let json = SummaryJson {
        reports: outcomes.iter().filter_map(|o| o.result.as_ref().ok().map(RmseReport::summary)).collect(),
        failures: outcomes
            .iter()
            .filter_map(|o| {
                o.result.as_ref().err().map(|e| FailureJson {
                    algorithm: o.cell.algorithm.name(),
                    snr_db: o.cell.snr_db,
                    seed: o.cell.seed,
                    error: e.clone(),
                })
            })
            .collect(),
    };
    // non-finite numbers such as an infinite SNR become null
    fs::write(path, serde_json::to_string_pretty(&json)? + "\n")?;
    Ok(())
}

/// Algorithm name and delay.
type GroupKey = (String, usize);

/// Runs every configured algorithm and writes per-run `k,rho` files, a
/// per-run summary, a per-SNR summary with delay floors, and a JSON summary
/// under `<output>/compare`.
pub fn compare(cfg: &ExperimentConfig, runner: &Runner) -> anyhow::Result<RunSummary> {
    let clean = base_signal(cfg)?;
    let outcomes = run_cells(cfg, &clean, &cfg.algorithms, runner);
    let dir = cfg.output_dir.join("compare");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_runs(&dir, &outcomes)?;

    let mut per_run = String::from("algorithm,snr_db,seed,delay_steps,final_rho,status\n");
    for o in &outcomes {
        let (rho, status) = match &o.result {
            Ok(r) => (num(r.final_rho), "ok".to_string()),
            Err(e) => (String::new(), format!("error: {}", e.replace([',', '\n'], ";"))),
        };
        let c = &o.cell;
        writeln!(
            per_run,
            "{},{},{},{},{rho},{status}",
            c.algorithm.name(),
            c.snr_db,
            c.seed,
            c.algorithm.delay_steps()
        )?;
    }
    fs::write(dir.join("summary.csv"), per_run)?;

    let mut by_snr = String::from("algorithm,snr_db,delay_steps,median_final_rho,mean_final_rho,runs\n");
    let mut groups: Vec<(GroupKey, BTreeMap<u64, Vec<f64>>)> = Vec::new();
    for o in &outcomes {
        let key = (o.cell.algorithm.name(), o.cell.algorithm.delay_steps());
        let idx = match groups.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                groups.push((key, BTreeMap::new()));
                groups.len() - 1
            }
        };
        let rho = o.result.as_ref().ok().and_then(|r| r.final_rho).unwrap_or(f64::NAN);
        groups[idx].1.entry(o.cell.snr_db.to_bits()).or_default().push(rho);
    }
    for ((name, delay), snrs) in &groups {
        for snr in snr_values(cfg) {
            let vals = snrs.get(&snr.to_bits()).cloned().unwrap_or_default();
            let ok = vals.iter().filter(|v| v.is_finite()).count();
            writeln!(by_snr, "{name},{snr},{delay},{},{},{ok}", num(median(&vals)), num(mean(&vals)))?;
        }
    }
    let order = cfg.order().expect("validated config");
    if let Some(truth) = clean.truth(order) {
        let mut delays: Vec<usize> = cfg.algorithms.iter().map(AlgorithmSpec::delay_steps).collect();
        delays.sort_unstable();
        delays.dedup();
        for d in delays {
            let floor = delay_floor(truth, d, truth.len() - 1).ok();
            for snr in snr_values(cfg) {
                writeln!(by_snr, "delay_floor_{d},{snr},{d},{},{},1", num(floor), num(floor))?;
            }
        }
    }
    fs::write(dir.join("summary_by_snr.csv"), by_snr)?;
    write_json(&dir.join("summary.json"), &outcomes)?;

    Ok(RunSummary {
        cells: outcomes.len(),
        failures: outcomes.iter().filter(|o| o.result.is_err()).count(),
        output_dir: dir,
    })
}

/// NSE over the `η` grid with `V₁ = ηI`, plus SSE with the true and twice
/// the true sensor-noise variance and ASE as reference lines. The first AIE
/// algorithm in the config supplies the remaining parameters.
pub fn eta_sweep(cfg: &ExperimentConfig, runner: &Runner) -> anyhow::Result<RunSummary> {
    let Some(sweep) = cfg.eta_sweep else { bail!("the config has no eta_sweep section") };
    let Some(base) = cfg.algorithms.iter().find(|a| a.is_aie()) else { bail!("eta-sweep needs an aie algorithm") };
    let AlgorithmSpec::Aie { eta_lower, eta_upper, .. } = base else { unreachable!() };
    if eta_lower.is_none() || eta_upper.is_none() {
        bail!("the aie algorithm used for eta-sweep needs eta_lower and eta_upper");
    }
    let grid = sweep.grid();
    let mut specs = Vec::new();
    for &eta in &grid {
        let mut s = base.as_nse(eta).expect("aie spec");
        if s.fixed_v2(1.0).is_none() {
            s = s.with_mode(AieModeConfig::Nse, Some(1.0), &s.name()).expect("aie spec");
        }
        specs.push(s);
    }
    let refs = [
        base.with_mode(AieModeConfig::Sse, Some(1.0), "sse_v2true").expect("aie spec"),
        base.with_mode(AieModeConfig::Sse, Some(2.0), "sse_2v2true").expect("aie spec"),
        base.with_mode(AieModeConfig::Ase, None, "ase").expect("aie spec"),
    ];
    specs.extend(refs.iter().cloned());

    let clean = base_signal(cfg)?;
    let outcomes = run_cells(cfg, &clean, &specs, runner);
    let dir = cfg.output_dir.join("eta_sweep");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let per_series = cfg.seeds.len() * snr_values(cfg).len();
    let mut rows = String::from("series,eta,snr_db,seed,final_rho,status\n");
    let mut summary = String::from("series,eta,snr_db,median_final_rho,mean_final_rho\n");
    for (i, chunk) in outcomes.chunks(per_series).enumerate() {
        let (series, eta) = if i < grid.len() {
            ("nse".to_string(), grid[i].to_string())
        } else {
            (chunk[0].cell.algorithm.name(), String::new())
        };
        for o in chunk {
            let (rho, status) = match &o.result {
                Ok(r) => (num(r.final_rho), "ok".to_string()),
                Err(e) => (String::new(), format!("error: {}", e.replace([',', '\n'], ";"))),
            };
            writeln!(rows, "{series},{eta},{},{},{rho},{status}", o.cell.snr_db, o.cell.seed)?;
        }
        for snr in snr_values(cfg) {
            let vals: Vec<f64> = chunk
                .iter()
                .filter(|o| o.cell.snr_db.to_bits() == snr.to_bits())
                .map(|o| o.result.as_ref().ok().and_then(|r| r.final_rho).unwrap_or(f64::NAN))
                .collect();
            writeln!(summary, "{series},{eta},{snr},{},{}", num(median(&vals)), num(mean(&vals)))?;
        }
    }
    fs::write(dir.join("sweep.csv"), rows)?;
    fs::write(dir.join("summary.csv"), summary)?;
    write_json(&dir.join("summary.json"), &outcomes)?;
    Ok(RunSummary {
        cells: outcomes.len(),
        failures: outcomes.iter().filter(|o| o.result.is_err()).count(),
        output_dir: dir,
    })
}

/// Writes the clean signal and one noisy file per (SNR, seed) under
/// `<output>/signals`. Returns the written paths.
pub fn generate(cfg: &ExperimentConfig) -> anyhow::Result<Vec<PathBuf>> {
    let clean = base_signal(cfg)?;
    let dir = cfg.output_dir.join("signals");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = vec![dir.join("clean.csv")];
    write_csv(&clean, &written[0])?;
    for &snr in &cfg.snr_db_list {
        for &seed in &cfg.seeds {
            let (signal, _) = noisy(&clean, snr, seed)?;
            let path = dir.join(format!("noisy_snr{snr}_seed{seed}.csv"));
            write_csv(&signal, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Streams `input` through one algorithm and writes `k,t,y,d_hat,z`, with
/// each estimate on the row where it becomes available (`k + δ`). `z` is
/// filled for AIE only.
pub fn differentiate(
    cfg: &ExperimentConfig,
    input: &Path,
    algorithm: Option<&str>,
    output: &Path,
) -> anyhow::Result<usize> {
    let signal = read_csv(input).with_context(|| format!("reading {}", input.display()))?;
    let spec = match algorithm {
        Some(name) => cfg
            .algorithms
            .iter()
            .find(|a| a.name() == name)
            .with_context(|| format!("no algorithm named {name:?} in the config"))?,
        None => cfg.algorithms.first().context("the config lists no algorithms")?,
    };
    let order = cfg.order().context("invalid derivative order")?;
    let ts = signal.sample_time_s();
    let n = signal.len();
    let delay = spec.delay_steps();
    let (estimates, residuals) = if spec.is_aie() {
        let mut e = spec.build_aie(order, ts, f64::NAN)?;
        let out = e.run(&signal)?;
        (out.iter().map(|o| Some(o.d_hat)).collect::<Vec<_>>(), Some(out.iter().map(|o| o.z).collect::<Vec<_>>()))
    } else {
        let mut d = spec.build(order, ts, f64::NAN)?;
        (sparse_estimate_series(d.as_mut(), signal.values())?, None)
    };
    let mut text = String::from("k,t,y,d_hat,z\n");
    for (k, t) in signal.times().enumerate() {
        let d = k.checked_sub(delay).and_then(|j| estimates[j]);
        let z = residuals.as_ref().map(|r| r[k]);
        writeln!(text, "{k},{t},{},{},{}", signal.values()[k], num(d), num(z))?;
    }
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(output, text).with_context(|| format!("writing {}", output.display()))?;
    Ok(n)
}
