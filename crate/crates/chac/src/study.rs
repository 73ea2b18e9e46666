//! Mesh-ladder convergence study.
//!
//! Runs the simulation on a sequence of uniformly refined grids with
//! h = 2^{-k} and tau = c * h, then measures errors between consecutive
//! levels: the coarse solution is prolonged to the fine space and the
//! difference is evaluated in
//!
//! - L-infinity(H1) for the phase fields, taken over fine time NODES. This
//!   is exact: the difference of two piecewise-linear-in-time functions is
//!   piecewise linear, its H1 norm is convex along each interval, so the
//!   maximum sits at a node.
//! - L2-in-time norms for the potentials, computed interval by interval
//!   (both are piecewise constant on fine intervals, so the time integral
//!   is a finite sum).
//!
//! Nodal states and interval potentials of every level are streamed to a
//! temporary on-disk store; a full level-5 trajectory is ~200 MB and does
//! not fit comfortably in memory next to its neighbors.

use std::io::{BufWriter, Read, Seek, SeekFrom, Write};

use rayon::prelude::*;

use crate::error::{ChacError, Result};
use crate::fespace::{build_space, FeSpace, FieldVec, NormKind};
use crate::mesh::build_periodic_mesh;
use crate::model::ModelParams;
use crate::scheme::{self, NewtonOpts, RunSink, State, StepRecord, TimeGrid};

/// Parameters shared by every level of a ladder.
#[derive(Debug, Clone, Copy)]
pub struct StudyConfig {
    pub params: ModelParams,
    pub t_final: f64,
    /// c in tau = c * h.
    pub tau_factor: f64,
    pub newton: NewtonOpts,
    pub quad_degree: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            params: ModelParams::default(),
            t_final: 0.1,
            tau_factor: 1e-3,
            newton: NewtonOpts::default(),
            quad_degree: 8,
        }
    }
}

/// Cells per side at ladder level k (h = 2^{-k}).
pub fn level_n(k: u32) -> usize {
    1usize << k
}

/// One error row of the convergence table: errors of level `k` measured
/// against level `k + 1`.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub k: u32,
    pub h: f64,
    pub tau: f64,
    pub err_rho: f64,
    pub err_eta: f64,
    pub err_mu_rho: f64,
    pub err_mu_eta: f64,
    pub eoc_rho: Option<f64>,
    pub eoc_eta: Option<f64>,
    pub eoc_mu_rho: Option<f64>,
    pub eoc_mu_eta: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

/// Experimental order of convergence under h-halving.
pub fn eoc(err_coarse: f64, err_fine: f64) -> Result<f64> {
    if err_coarse <= 0.0 || err_fine <= 0.0 {
        return Err(ChacError::InvalidParameter(format!(
            "eoc requires positive errors, got ({err_coarse}, {err_fine})"
        )));
    }
    Ok((err_coarse / err_fine).log2())
}

/// Which inter-grid error norm to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    /// L-infinity(H1) of the first phase field.
    RhoLinfH1,
    /// L-infinity(H1) of the second phase field.
    EtaLinfH1,
    /// L2(H1) of the first chemical potential.
    MuRhoL2H1,
    /// L2(L2) of the second chemical potential.
    MuEtaL2L2,
}

/// On-disk trajectory of one run: nodal states at every time node plus the
/// piecewise-constant potentials of every interval, stored as little-endian
/// f64 in an unlinked temporary file.
pub struct Trajectory {
    file: std::fs::File,
    /// Cells per side of the originating mesh.
    pub n: usize,
    pub n_dofs: usize,
    pub n_steps: usize,
    pub tau: f64,
}

const F64: u64 = 8;

impl Trajectory {
    pub fn create(n: usize, n_dofs: usize, n_steps: usize, tau: f64) -> Result<Trajectory> {
        Ok(Trajectory {
            file: tempfile::tempfile()?,
            n,
            n_dofs,
            n_steps,
            tau,
        })
    }

    fn field_bytes(&self) -> u64 {
        self.n_dofs as u64 * F64
    }

    // layout: [rho_0, eta_0], then per step i >= 1:
    // [rho_i, eta_i, mu_rho_i, mu_eta_i]
    fn state_offset(&self, node: usize) -> u64 {
        let f = self.field_bytes();
        if node == 0 {
            0
        } else {
            2 * f + (node as u64 - 1) * 4 * f
        }
    }

    fn pots_offset(&self, interval: usize) -> u64 {
        let f = self.field_bytes();
        2 * f + interval as u64 * 4 * f + 2 * f
    }

    fn write_field(w: &mut impl Write, v: &[f64]) -> Result<()> {
        let mut buf = Vec::with_capacity(v.len() * 8);
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    fn read_field(&mut self, offset: u64) -> Result<Vec<f64>> {
        self.file.seek(SeekFrom::Start(offset))?;
        let mut buf = vec![0u8; self.n_dofs * 8];
        self.file.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Appends a record at the current end of file. Call in layout order:
    /// initial state once, then (state, potentials) per step.
    pub fn append_fields(&mut self, fields: &[&[f64]]) -> Result<()> {
        self.file.seek(SeekFrom::End(0))?;
        let mut w = BufWriter::new(&mut self.file);
        for f in fields {
            Self::write_field(&mut w, f)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Nodal (rho, eta) coefficients at time node `node` (0..=n_steps).
    pub fn state_at(&mut self, node: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if node > self.n_steps {
            return Err(ChacError::IndexOutOfRange {
                index: node,
                len: self.n_steps + 1,
            });
        }
        let off = self.state_offset(node);
        let f = self.field_bytes();
        Ok((self.read_field(off)?, self.read_field(off + f)?))
    }

    /// (mu_rho, mu_eta) coefficients of interval `interval` (0..n_steps).
    pub fn pots_at(&mut self, interval: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if interval >= self.n_steps {
            return Err(ChacError::IndexOutOfRange {
                index: interval,
                len: self.n_steps,
            });
        }
        let off = self.pots_offset(interval);
        let f = self.field_bytes();
        Ok((self.read_field(off)?, self.read_field(off + f)?))
    }
}

struct TrajectorySink<'a> {
    traj: &'a mut Trajectory,
}

impl RunSink for TrajectorySink<'_> {
    fn on_initial(&mut self, state: &State) -> Result<()> {
        self.traj
            .append_fields(&[&state.rho.coefficients, &state.eta.coefficients])
    }

    fn on_step(&mut self, r: &StepRecord) -> Result<()> {
        self.traj.append_fields(&[
            &r.state.rho.coefficients,
            &r.state.eta.coefficients,
            &r.pots.mu_rho.coefficients,
            &r.pots.mu_eta.coefficients,
        ])
    }
}

/// Initial data of the reference experiment:
/// rho = 1/2 + 1/2 sin(2 pi x) sin(2 pi y), eta = 1/2 + 1/2 sin(4 pi x) sin(2 pi y).
pub mod initial_data {
    use std::f64::consts::PI;

    pub fn rho(p: [f64; 2]) -> f64 {
        0.5 + 0.5 * (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin()
    }

    pub fn grad_rho(p: [f64; 2]) -> [f64; 2] {
        let (sx, cx) = (2.0 * PI * p[0]).sin_cos();
        let (sy, cy) = (2.0 * PI * p[1]).sin_cos();
        [PI * cx * sy, PI * sx * cy]
    }

    pub fn eta(p: [f64; 2]) -> f64 {
        0.5 + 0.5 * (4.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin()
    }

    pub fn grad_eta(p: [f64; 2]) -> [f64; 2] {
        let (sx, cx) = (4.0 * PI * p[0]).sin_cos();
        let (sy, cy) = (2.0 * PI * p[1]).sin_cos();
        [2.0 * PI * cx * sy, PI * sx * cy]
    }
}

/// Runs one ladder level with the reference initial data and stores its
/// trajectory on disk.
pub fn run_level(config: &StudyConfig, k: u32) -> Result<Trajectory> {
    let inner = || -> Result<Trajectory> {
        let n = level_n(k);
        let space = build_space(build_periodic_mesh(n)?, config.quad_degree)?;
        let h = 1.0 / n as f64;
        let tau = config.tau_factor * h;
        let n_steps = (config.t_final / tau).round() as usize;
        let grid = TimeGrid::new(config.t_final, n_steps)?;
        let mut traj = Trajectory::create(n, space.n_dofs(), n_steps, grid.tau())?;
        let mut sink = TrajectorySink { traj: &mut traj };
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
        Ok(traj)
    };
    inner().map_err(|e| ChacError::LevelFailed {
        level: k,
        source: Box::new(e),
    })
}

fn check_pair(fine: &Trajectory, coarse: &Trajectory) -> Result<usize> {
    // ratio 1 (self-comparison) and 2 (consecutive levels) are supported
    let ratio = if fine.n == coarse.n && fine.n_steps == coarse.n_steps {
        1
    } else if fine.n == 2 * coarse.n && fine.n_steps == 2 * coarse.n_steps {
        2
    } else {
        return Err(ChacError::LineageMismatch(format!(
            "trajectories are not consecutive levels: fine (n={}, steps={}), coarse (n={}, steps={})",
            fine.n, fine.n_steps, coarse.n, coarse.n_steps
        )));
    };
    Ok(ratio)
}

/// Prolongs coarse coefficients to the fine space (identity if same level).
fn lift(
    coarse_space: &FeSpace,
    fine_space: &FeSpace,
    coeffs: Vec<f64>,
    ratio: usize,
) -> Result<FieldVec> {
    let field = coarse_space.field_from(coeffs)?;
    if ratio == 1 {
        Ok(field)
    } else {
        coarse_space.prolong(fine_space, &field)
    }
}

/// Error between a fine trajectory and the prolonged coarse one in the
/// requested space-time norm.
pub fn inter_grid_error(
    fine: &mut Trajectory,
    coarse: &mut Trajectory,
    which: ErrorNorm,
) -> Result<f64> {
    let ratio = check_pair(fine, coarse)?;
    let coarse_space = build_space(build_periodic_mesh(coarse.n)?, 8)?;
    let fine_space = build_space(build_periodic_mesh(fine.n)?, 8)?;

    match which {
        ErrorNorm::RhoLinfH1 | ErrorNorm::EtaLinfH1 => {
            let pick = |state: (Vec<f64>, Vec<f64>)| match which {
                ErrorNorm::RhoLinfH1 => state.0,
                _ => state.1,
            };
            let mut max_err: f64 = 0.0;
            let mut err_at = |lifted: &FieldVec, fine_node: usize| -> Result<()> {
                let mut diff = lifted.clone();
                let fine_val = pick(fine.state_at(fine_node)?);
                for (a, b) in diff.coefficients.iter_mut().zip(&fine_val) {
                    *a -= b;
                }
                max_err = max_err.max(fine_space.norm(&diff, NormKind::H1)?);
                Ok(())
            };
            // stream over coarse intervals: each coarse node is lifted once
            let mut left = lift(&coarse_space, &fine_space, pick(coarse.state_at(0)?), ratio)?;
            err_at(&left, 0)?;
            for j in 0..coarse.n_steps {
                let right = lift(
                    &coarse_space,
                    &fine_space,
                    pick(coarse.state_at(j + 1)?),
                    ratio,
                )?;
                if ratio == 2 {
                    // odd fine node: the coarse trajectory is linear in time,
                    // so its value halfway is the average of the bracket nodes
                    let mut mid = left.clone();
                    for (a, b) in mid.coefficients.iter_mut().zip(&right.coefficients) {
                        *a = 0.5 * (*a + b);
                    }
                    err_at(&mid, 2 * j + 1)?;
                }
                err_at(&right, ratio * (j + 1))?;
                left = right;
            }
            Ok(max_err)
        }
        ErrorNorm::MuRhoL2H1 | ErrorNorm::MuEtaL2L2 => {
            let (pick, kind): (fn((Vec<f64>, Vec<f64>)) -> Vec<f64>, NormKind) = match which {
                ErrorNorm::MuRhoL2H1 => (|p| p.0, NormKind::H1),
                _ => (|p| p.1, NormKind::L2),
            };
            let tau_f = fine.tau;
            let mut acc = 0.0;
            let mut coarse_lifted: Option<FieldVec> = None;
            for m in 0..fine.n_steps {
                if m % ratio == 0 || coarse_lifted.is_none() {
                    coarse_lifted = Some(lift(
                        &coarse_space,
                        &fine_space,
                        pick(coarse.pots_at(m / ratio)?),
                        ratio,
                    )?);
                }
                let mut diff = coarse_lifted.as_ref().unwrap().clone();
                let fine_val = pick(fine.pots_at(m)?);
                for (a, b) in diff.coefficients.iter_mut().zip(&fine_val) {
                    *a -= b;
                }
                let nrm = fine_space.norm(&diff, kind)?;
                acc += tau_f * nrm * nrm;
            }
            Ok(acc.sqrt())
        }
    }
}

/// Runs levels `k_min..=k_max` (in parallel, bounded by `jobs` threads) and
/// assembles the convergence table: one error row per consecutive pair,
/// attributed to the coarse level.
pub fn run_ladder(
    config: &StudyConfig,
    k_min: u32,
    k_max: u32,
    jobs: usize,
) -> Result<ConvergenceTable> {
    if k_min < 1 || k_max <= k_min {
        return Err(ChacError::InvalidParameter(format!(
            "need 1 <= k_min < k_max, got ({k_min}, {k_max})"
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ChacError::InvalidParameter(format!("thread pool: {e}")))?;
    let mut trajectories: Vec<Trajectory> = pool.install(|| {
        (k_min..=k_max)
            .into_par_iter()
            .map(|k| run_level(config, k))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut table = ConvergenceTable::default();
    let mut prev_errs: Option<[f64; 4]> = None;
    for (idx, k) in (k_min..k_max).enumerate() {
        // split_at_mut to borrow coarse and fine trajectories independently
        let (lo, hi) = trajectories.split_at_mut(idx + 1);
        let coarse = &mut lo[idx];
        let fine = &mut hi[0];
        let errs = [
            inter_grid_error(fine, coarse, ErrorNorm::RhoLinfH1)?,
            inter_grid_error(fine, coarse, ErrorNorm::EtaLinfH1)?,
            inter_grid_error(fine, coarse, ErrorNorm::MuRhoL2H1)?,
            inter_grid_error(fine, coarse, ErrorNorm::MuEtaL2L2)?,
        ];
        let eocs: [Option<f64>; 4] = match prev_errs {
            Some(p) => [
                Some(eoc(p[0], errs[0])?),
                Some(eoc(p[1], errs[1])?),
                Some(eoc(p[2], errs[2])?),
                Some(eoc(p[3], errs[3])?),
            ],
            None => [None; 4],
        };
        table.rows.push(ConvergenceRow {
            k,
            h: coarse.tau / config.tau_factor,
            tau: coarse.tau,
            err_rho: errs[0],
            err_eta: errs[1],
            err_mu_rho: errs[2],
            err_mu_eta: errs[3],
            eoc_rho: eocs[0],
            eoc_eta: eocs[1],
            eoc_mu_rho: eocs[2],
            eoc_mu_eta: eocs[3],
        });
        prev_errs = Some(errs);
    }
    Ok(table)
}
