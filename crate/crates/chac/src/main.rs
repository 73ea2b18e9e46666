#![allow(clippy::type_complexity)]

//! Command-line frontend: `simulate`, `converge`, `check`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver failure.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chac::config::{parse_config, RunConfig};
use chac::error::{ChacError, Result};
use chac::fespace::build_space;
use chac::mesh::build_periodic_mesh;
use chac::scheme::{self, RunSink, State, StepRecord, TimeGrid};
use chac::study::{self, initial_data, StudyConfig};
use chac::vtk;

#[derive(Parser)]
#[command(name = "chac", about = "Structure-preserving solver for a coupled Cahn-Hilliard/Allen-Cahn system", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Configuration file (flat `key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (falls back to $CHAC_OUT_DIR, then the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Repeated `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation; writes timeseries.csv and VTK snapshots.
    Simulate(CommonOpts),
    /// Run the mesh-ladder convergence study; writes convergence.csv.
    Converge {
        #[command(flatten)]
        common: CommonOpts,
        /// Coarsest ladder level (h = 2^-k).
        #[arg(long = "k-min", default_value_t = 1)]
        k_min: u32,
        /// Finest ladder level.
        #[arg(long = "k-max", default_value_t = 5)]
        k_max: u32,
        /// Maximum number of concurrent level jobs.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run 20 steps and verify the mass and energy-identity invariants.
    Check(CommonOpts),
}

fn load_config(common: &CommonOpts) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::default(),
    };
    for pair in &common.set {
        let (k, v) = pair.split_once('=').ok_or_else(|| {
            ChacError::Config(format!("--set expects key=value, got `{pair}`"))
        })?;
        config.set(k.trim(), v.trim())?;
    }
    config.validate()?;
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    } else if let Ok(env_out) = std::env::var("CHAC_OUT_DIR") {
        config.output_dir = PathBuf::from(env_out);
    }
    Ok(config)
}

fn fmt_f64(v: f64) -> String {
    // 17 significant digits: round-trip exact for f64
    format!("{v:.16e}")
}

struct CsvSink<'a> {
    writer: std::io::BufWriter<std::fs::File>,
    config: &'a RunConfig,
    space: &'a chac::fespace::FeSpace,
}

impl RunSink for CsvSink<'_> {
    fn on_initial(&mut self, state: &State) -> Result<()> {
        if self.config.snapshot_every > 0 {
            vtk::write_snapshot_file(&self.config.output_dir, 0, self.space, &state.rho, &state.eta)?;
        }
        Ok(())
    }

    fn on_step(&mut self, r: &StepRecord) -> Result<()> {
        let d = &r.diag;
        writeln!(
            self.writer,
            "{},{},{},{},{},{},{},{}",
            d.step,
            fmt_f64(d.t),
            fmt_f64(d.mass_rho),
            fmt_f64(d.energy),
            fmt_f64(d.dissipation_interval),
            fmt_f64(d.energy_identity_residual),
            d.newton_iters,
            fmt_f64(d.newton_residual),
        )?;
        if self.config.snapshot_every > 0 && r.step.is_multiple_of(self.config.snapshot_every) {
            vtk::write_snapshot_file(
                &self.config.output_dir,
                r.step,
                self.space,
                &r.state.rho,
                &r.state.eta,
            )?;
        }
        Ok(())
    }
}

fn cmd_simulate(config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&config.output_dir)?;
    let space = build_space(build_periodic_mesh(config.mesh_n())?, 8)?;
    let grid = TimeGrid::new(config.t_final, config.n_steps())?;
    let file = std::fs::File::create(config.output_dir.join("timeseries.csv"))?;
    let mut writer = std::io::BufWriter::new(file);
    writeln!(
        writer,
        "step,t,mass_rho,energy,dissipation_interval,energy_identity_residual,newton_iters,newton_residual"
    )?;
    let mut sink = CsvSink {
        writer,
        config,
        space: &space,
    };
    scheme::run(
        &space,
        &config.params,
        &grid,
        (
            &initial_data::rho,
            &initial_data::grad_rho,
            &initial_data::eta,
            &initial_data::grad_eta,
        ),
        config.newton,
        &mut sink,
    )?;
    sink.writer.flush()?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

fn cmd_converge(config: &RunConfig, k_min: u32, k_max: u32, jobs: usize) -> Result<()> {
    std::fs::create_dir_all(&config.output_dir)?;
    let study_config = StudyConfig {
        params: config.params,
        t_final: config.t_final,
        tau_factor: config.tau_factor,
        newton: config.newton,
        quad_degree: 8,
    };
    let table = study::run_ladder(&study_config, k_min, k_max, jobs)?;

    let file = std::fs::File::create(config.output_dir.join("convergence.csv"))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(
        w,
        "k,h,tau,err_rho,eoc_rho,err_eta,eoc_eta,err_mu_rho,eoc_mu_rho,err_mu_eta,eoc_mu_eta"
    )?;
    for r in &table.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            fmt_f64(r.h),
            fmt_f64(r.tau),
            fmt_f64(r.err_rho),
            fmt_opt(r.eoc_rho),
            fmt_f64(r.err_eta),
            fmt_opt(r.eoc_eta),
            fmt_f64(r.err_mu_rho),
            fmt_opt(r.eoc_mu_rho),
            fmt_f64(r.err_mu_eta),
            fmt_opt(r.eoc_mu_eta),
        )?;
    }
    w.flush()?;

    println!(
        "{:>3} {:>10} {:>12} {:>5} {:>12} {:>5} {:>12} {:>6} {:>12} {:>6}",
        "k", "h", "err_rho", "eoc", "err_eta", "eoc", "err_mu_rho", "eoc", "err_mu_eta", "eoc"
    );
    for r in &table.rows {
        println!(
            "{:>3} {:>10.3e} {:>12.3e} {:>5} {:>12.3e} {:>5} {:>12.3e} {:>6} {:>12.3e} {:>6}",
            r.k,
            r.h,
            r.err_rho,
            fmt_opt(r.eoc_rho),
            r.err_eta,
            fmt_opt(r.eoc_eta),
            r.err_mu_rho,
            fmt_opt(r.eoc_mu_rho),
            r.err_mu_eta,
            fmt_opt(r.eoc_mu_eta),
        );
    }
    Ok(())
}

#[derive(Default)]
struct CheckSink {
    initial_mass: f64,
    max_mass_drift: f64,
    max_identity_residual: f64,
    energy_nonincreasing: bool,
    prev_energy: f64,
    steps: usize,
}

impl RunSink for CheckSink {
    fn on_step(&mut self, r: &StepRecord) -> Result<()> {
        let d = &r.diag;
        let drift = ((d.mass_rho - self.initial_mass) / self.initial_mass).abs();
        self.max_mass_drift = self.max_mass_drift.max(drift);
        self.max_identity_residual = self
            .max_identity_residual
            .max(d.energy_identity_residual.abs());
        if d.energy > self.prev_energy + d.energy_identity_residual.abs() + 1e-10 {
            self.energy_nonincreasing = false;
        }
        self.prev_energy = d.energy;
        self.steps += 1;
        Ok(())
    }
}

fn cmd_check(config: &RunConfig) -> Result<bool> {
    let space = build_space(build_periodic_mesh(config.mesh_n())?, 8)?;
    let n_steps = 20;
    let grid = TimeGrid::new(config.tau() * n_steps as f64, n_steps)?;
    let rho0 = space.h1_project(initial_data::rho, initial_data::grad_rho)?;
    let m0 = chac::diagnostics::mass(&space, &rho0)?;
    let e0 = {
        let eta0 = space.h1_project(initial_data::eta, initial_data::grad_eta)?;
        chac::diagnostics::energy(&space, &config.params, &rho0, &eta0)?
    };
    let mut sink = CheckSink {
        initial_mass: m0,
        energy_nonincreasing: true,
        prev_energy: e0,
        ..CheckSink::default()
    };
    scheme::run(
        &space,
        &config.params,
        &grid,
        (
            &initial_data::rho,
            &initial_data::grad_rho,
            &initial_data::eta,
            &initial_data::grad_eta,
        ),
        config.newton,
        &mut sink,
    )?;

    let mass_ok = sink.max_mass_drift <= 1e-11;
    let identity_ok = sink.max_identity_residual <= 1e-10;
    let decay_ok = sink.energy_nonincreasing;
    println!(
        "mass conservation      ({} steps, max relative drift {:.3e}): {}",
        sink.steps,
        sink.max_mass_drift,
        if mass_ok { "PASS" } else { "FAIL" }
    );
    println!(
        "energy identity        (max |E^n - E^(n-1) + tau*D|  {:.3e}): {}",
        sink.max_identity_residual,
        if identity_ok { "PASS" } else { "FAIL" }
    );
    println!(
        "energy nonincreasing   (up to identity residual)           : {}",
        if decay_ok { "PASS" } else { "FAIL" }
    );
    Ok(mass_ok && identity_ok && decay_ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, action): (&CommonOpts, Box<dyn FnOnce(&RunConfig) -> Result<bool>>) =
        match &cli.command {
            Command::Simulate(c) => (c, Box::new(|cfg| cmd_simulate(cfg).map(|_| true))),
            Command::Converge {
                common,
                k_min,
                k_max,
                jobs,
            } => {
                let (k_min, k_max) = (*k_min, *k_max);
                let jobs = jobs.unwrap_or_else(|| {
                    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
                });
                (
                    common,
                    Box::new(move |cfg| cmd_converge(cfg, k_min, k_max, jobs).map(|_| true)),
                )
            }
            Command::Check(c) => (c, Box::new(cmd_check)),
        };

    let config = match load_config(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(1);
        }
    };
    match action(&config) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e @ ChacError::Config(_)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
