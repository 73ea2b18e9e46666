//! Fully discrete Petrov-Galerkin time stepper for the coupled
//! Cahn-Hilliard/Allen-Cahn system.
//!
//! Phase fields are continuous piecewise linear in time with P2 spatial
//! coefficients at the time nodes; chemical potentials are piecewise
//! constant per interval. Each interval yields one coupled nonlinear system
//! in (rho^n, eta^n, mu_rho, mu_eta) which is solved monolithically by
//! Newton's method. The mobility is evaluated at the interval average of the
//! phase fields (the piecewise-constant time projection of a linear-in-time
//! function is its midpoint value), and the potential terms are integrated
//! in time with 2-point Gauss, exact for the quartic potential of
//! linear-in-time arguments.
//!
//! This structure makes mass conservation and the discrete energy identity
//! hold to solver tolerance, step by step.

use crate::diagnostics::{self, DiagnosticsRow};
use crate::error::{ChacError, Result};
use crate::fespace::{FeSpace, FieldVec};
use crate::linalg::{CachedLu, SparseMat};
use crate::model::{mobility_eval, potential_eval, ModelParams};

/// Uniform time grid on (0, T).
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if t_final <= 0.0 {
            return Err(ChacError::InvalidParameter("t_final must be positive".into()));
        }
        Ok(TimeGrid { t_final, n_steps })
    }

    pub fn tau(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }
}

/// Nodal phase fields at one time node.
#[derive(Debug, Clone)]
pub struct State {
    pub rho: FieldVec,
    pub eta: FieldVec,
    pub time: f64,
}

/// Piecewise-constant chemical potentials of one interval.
#[derive(Debug, Clone)]
pub struct IntervalPotentials {
    pub mu_rho: FieldVec,
    pub mu_eta: FieldVec,
}

/// Newton solver options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOpts {
    /// Convergence tolerance, relative to the first-iterate residual
    /// (absolute floor 1e-13).
    pub tol_residual: f64,
    pub max_iter: usize,
    /// When set, each step verifies the assembled Jacobian against a
    /// directional finite difference before solving.
    pub fd_jacobian_check: bool,
}

impl Default for NewtonOpts {
    fn default() -> Self {
        NewtonOpts {
            tol_residual: 1e-11,
            max_iter: 25,
            fd_jacobian_check: false,
        }
    }
}

/// Per-step solver statistics.
#[derive(Debug, Clone)]
pub struct StepStats {
    pub iterations: usize,
    pub final_residual: f64,
}

/// 2-point Gauss rule on (0,1) as (node, weight) pairs: exact for the
/// cubic-in-time integrands produced by the quartic potential along
/// linear-in-time phase paths.
pub const TIME_GAUSS_2PT: [(f64, f64); 2] =
    [(0.2113248654051871, 0.5), (0.7886751345948129, 0.5)];

/// 3-point Gauss rule on (0,1); used only to verify that the 2-point rule
/// already integrates the scheme exactly.
pub const TIME_GAUSS_3PT: [(f64, f64); 3] = [
    (0.1127016653792583, 0.2777777777777778),
    (0.5, 0.4444444444444444),
    (0.8872983346207417, 0.2777777777777778),
];

fn midpoint_avg(a: &FieldVec, b: &FieldVec) -> FieldVec {
    let coefficients = a
        .coefficients
        .iter()
        .zip(&b.coefficients)
        .map(|(x, y)| 0.5 * (x + y))
        .collect();
    FieldVec {
        coefficients,
        space_n: a.space_n,
    }
}

/// Assembles the residual of the four coupled interval equations for the
/// unknown vector (rho^n, eta^n, mu_rho, mu_eta); length 4 * n_dofs.
pub fn assemble_step_residual(
    space: &FeSpace,
    params: &ModelParams,
    prev: &State,
    next: &State,
    pots: &IntervalPotentials,
    tau: f64,
) -> Result<Vec<f64>> {
    let (r, _) = assemble_step(space, params, prev, next, pots, tau, &TIME_GAUSS_2PT, false)?;
    Ok(r)
}

/// Same residual with an explicit time-quadrature rule (node, weight).
pub fn assemble_step_residual_with_time_rule(
    space: &FeSpace,
    params: &ModelParams,
    prev: &State,
    next: &State,
    pots: &IntervalPotentials,
    tau: f64,
    rule: &[(f64, f64)],
) -> Result<Vec<f64>> {
    let (r, _) = assemble_step(space, params, prev, next, pots, tau, rule, false)?;
    Ok(r)
}

/// Assembles the exact Jacobian of the step residual with respect to
/// (rho^n, eta^n, mu_rho, mu_eta), including the mobility-derivative chain
/// through the interval average.
pub fn assemble_step_jacobian(
    space: &FeSpace,
    params: &ModelParams,
    prev: &State,
    next: &State,
    pots: &IntervalPotentials,
    tau: f64,
) -> Result<SparseMat> {
    let (_, jac) = assemble_step(space, params, prev, next, pots, tau, &TIME_GAUSS_2PT, true)?;
    Ok(jac.expect("jacobian requested"))
}

/// Same Jacobian with an explicit time-quadrature rule (node, weight).
pub fn assemble_step_jacobian_with_time_rule(
    space: &FeSpace,
    params: &ModelParams,
    prev: &State,
    next: &State,
    pots: &IntervalPotentials,
    tau: f64,
    rule: &[(f64, f64)],
) -> Result<SparseMat> {
    let (_, jac) = assemble_step(space, params, prev, next, pots, tau, rule, true)?;
    Ok(jac.expect("jacobian requested"))
}

#[allow(clippy::needless_range_loop)]
fn assemble_step(
    space: &FeSpace,
    params: &ModelParams,
    prev: &State,
    next: &State,
    pots: &IntervalPotentials,
    tau: f64,
    rule: &[(f64, f64)],
    want_jacobian: bool,
) -> Result<(Vec<f64>, Option<SparseMat>)> {
    if tau <= 0.0 {
        return Err(ChacError::InvalidParameter("tau must be positive".into()));
    }
    let m = space.n_dofs();
    let mut residual = vec![0.0; 4 * m];
    let mut triplets: Vec<(usize, usize, f64)> = if want_jacobian {
        Vec::with_capacity(space.dof_map().len() * 12 * 36)
    } else {
        Vec::new()
    };
    let (g_rho, g_eta) = (params.gamma_rho, params.gamma_eta);

    for e in 0..space.dof_map().len() {
        let dofs = space.element_dofs(e);
        let grads = space.grad_at_quad(e);
        let shapes = space.shape_at_quad();

        // local coefficient copies
        let mut c_rp = [0.0; 6];
        let mut c_rn = [0.0; 6];
        let mut c_ep = [0.0; 6];
        let mut c_en = [0.0; 6];
        let mut c_mr = [0.0; 6];
        let mut c_me = [0.0; 6];
        for a in 0..6 {
            let d = dofs[a];
            c_rp[a] = prev.rho.coefficients[d];
            c_rn[a] = next.rho.coefficients[d];
            c_ep[a] = prev.eta.coefficients[d];
            c_en[a] = next.eta.coefficients[d];
            c_mr[a] = pots.mu_rho.coefficients[d];
            c_me[a] = pots.mu_eta.coefficients[d];
        }

        let mut local = [[0.0f64; 24]; 24]; // jacobian block, [4*6][4*6]
        let mut lres = [0.0f64; 24];

        for (q, &wd) in space.wdet().iter().enumerate() {
            let nq = &shapes[q];
            let gq = &grads[q];

            // field values at this quadrature point
            let mut rp = 0.0;
            let mut rn = 0.0;
            let mut ep = 0.0;
            let mut en = 0.0;
            let mut mr = 0.0;
            let mut me = 0.0;
            let mut g_rbar = [0.0; 2];
            let mut g_ebar = [0.0; 2];
            let mut g_mr = [0.0; 2];
            for a in 0..6 {
                rp += c_rp[a] * nq[a];
                rn += c_rn[a] * nq[a];
                ep += c_ep[a] * nq[a];
                en += c_en[a] * nq[a];
                mr += c_mr[a] * nq[a];
                me += c_me[a] * nq[a];
                let half = 0.5 * (c_rp[a] + c_rn[a]);
                g_rbar[0] += half * gq[a][0];
                g_rbar[1] += half * gq[a][1];
                let halfe = 0.5 * (c_ep[a] + c_en[a]);
                g_ebar[0] += halfe * gq[a][0];
                g_ebar[1] += halfe * gq[a][1];
                g_mr[0] += c_mr[a] * gq[a][0];
                g_mr[1] += c_mr[a] * gq[a][1];
            }
            let rbar = 0.5 * (rp + rn);
            let ebar = 0.5 * (ep + en);
            let omega = [rbar, ebar, g_rbar[0], g_rbar[1], g_ebar[0], g_ebar[1]];
            let (l, dl) = mobility_eval(&params.mobility, &omega);
            let xi = [g_mr[0], g_mr[1], me];
            // L xi rows
            let lxi = [
                l[0][0] * xi[0] + l[0][1] * xi[1] + l[0][2] * xi[2],
                l[1][0] * xi[0] + l[1][1] * xi[1] + l[1][2] * xi[2],
                l[2][0] * xi[0] + l[2][1] * xi[1] + l[2][2] * xi[2],
            ];

            // potential derivatives at the two time-quadrature states
            let mut frho_avg = 0.0;
            let mut feta_avg = 0.0;
            let mut frr_w = 0.0; // sum over gauss of 0.5 * theta * f_rr
            let mut fre_w = 0.0;
            let mut fee_w = 0.0;
            for &(theta, w) in rule {
                let rq = (1.0 - theta) * rp + theta * rn;
                let eq = (1.0 - theta) * ep + theta * en;
                let (_, fr, fe, frr, fre, fee) = potential_eval(&params.potential, rq, eq);
                frho_avg += w * fr;
                feta_avg += w * fe;
                frr_w += w * theta * frr;
                fre_w += w * theta * fre;
                fee_w += w * theta * fee;
            }

            // residual contributions
            for i in 0..6 {
                let ni = nq[i];
                let gi = gq[i];
                lres[i] += wd * (ni * (rn - rp) + tau * (lxi[0] * gi[0] + lxi[1] * gi[1]));
                lres[6 + i] += wd * (ni * (en - ep) + tau * ni * lxi[2]);
                lres[12 + i] += tau
                    * wd
                    * (mr * ni - g_rho * (g_rbar[0] * gi[0] + g_rbar[1] * gi[1]) - frho_avg * ni);
                lres[18 + i] += tau
                    * wd
                    * (me * ni - g_eta * (g_ebar[0] * gi[0] + g_ebar[1] * gi[1]) - feta_avg * ni);
            }

            if want_jacobian {
                // y_k = dL/domega_k * xi, k = 0..5
                let mut y = [[0.0; 3]; 6];
                for k in 0..6 {
                    for i in 0..3 {
                        y[k][i] = dl[k][i][0] * xi[0] + dl[k][i][1] * xi[1] + dl[k][i][2] * xi[2];
                    }
                }
                for j in 0..6 {
                    let njv = nq[j];
                    let gj = gq[j];
                    // mobility perturbations via the midpoint average (factor 1/2)
                    let dxi_rho = [
                        0.5 * (y[0][0] * njv + y[2][0] * gj[0] + y[3][0] * gj[1]),
                        0.5 * (y[0][1] * njv + y[2][1] * gj[0] + y[3][1] * gj[1]),
                        0.5 * (y[0][2] * njv + y[2][2] * gj[0] + y[3][2] * gj[1]),
                    ];
                    let dxi_eta = [
                        0.5 * (y[1][0] * njv + y[4][0] * gj[0] + y[5][0] * gj[1]),
                        0.5 * (y[1][1] * njv + y[4][1] * gj[0] + y[5][1] * gj[1]),
                        0.5 * (y[1][2] * njv + y[4][2] * gj[0] + y[5][2] * gj[1]),
                    ];
                    // L applied to trial directions of the potentials
                    let l_gj = [
                        l[0][0] * gj[0] + l[0][1] * gj[1],
                        l[1][0] * gj[0] + l[1][1] * gj[1],
                        l[2][0] * gj[0] + l[2][1] * gj[1],
                    ];
                    for i in 0..6 {
                        let ni = nq[i];
                        let gi = gq[i];
                        let gdot = gi[0] * gj[0] + gi[1] * gj[1];
                        // block r1 (rows 0..6)
                        local[i][j] += wd * (ni * njv + tau * (dxi_rho[0] * gi[0] + dxi_rho[1] * gi[1]));
                        local[i][6 + j] += wd * tau * (dxi_eta[0] * gi[0] + dxi_eta[1] * gi[1]);
                        local[i][12 + j] += wd * tau * (l_gj[0] * gi[0] + l_gj[1] * gi[1]);
                        local[i][18 + j] += wd * tau * njv * (l[0][2] * gi[0] + l[1][2] * gi[1]);
                        // block r2 (rows 6..12)
                        local[6 + i][j] += wd * tau * ni * dxi_rho[2];
                        local[6 + i][6 + j] += wd * (ni * njv + tau * ni * dxi_eta[2]);
                        local[6 + i][12 + j] += wd * tau * ni * l_gj[2];
                        local[6 + i][18 + j] += wd * tau * ni * l[2][2] * njv;
                        // block r3 (rows 12..18)
                        local[12 + i][j] +=
                            -tau * wd * (0.5 * g_rho * gdot + frr_w * njv * ni);
                        local[12 + i][6 + j] += -tau * wd * fre_w * njv * ni;
                        local[12 + i][12 + j] += tau * wd * ni * njv;
                        // block r4 (rows 18..24)
                        local[18 + i][j] += -tau * wd * fre_w * njv * ni;
                        local[18 + i][6 + j] +=
                            -tau * wd * (0.5 * g_eta * gdot + fee_w * njv * ni);
                        local[18 + i][18 + j] += tau * wd * ni * njv;
                    }
                }
            }
        }

        for i in 0..6 {
            residual[dofs[i]] += lres[i];
            residual[m + dofs[i]] += lres[6 + i];
            residual[2 * m + dofs[i]] += lres[12 + i];
            residual[3 * m + dofs[i]] += lres[18 + i];
        }
        if want_jacobian {
            let block_of = |k: usize| k / 6 * m;
            for li in 0..24 {
                let gi = block_of(li) + dofs[li % 6];
                for lj in 0..24 {
                    // structural zeros of the 4x4 block pattern are skipped
                    let (bi, bj) = (li / 6, lj / 6);
                    let present = matches!(
                        (bi, bj),
                        (0, _) | (1, _) | (2, 0) | (2, 1) | (2, 2) | (3, 0) | (3, 1) | (3, 3)
                    );
                    if present {
                        let gj = block_of(lj) + dofs[lj % 6];
                        triplets.push((gi, gj, local[li][lj]));
                    }
                }
            }
        }
    }

    let jac = if want_jacobian {
        Some(SparseMat::from_triplets(4 * m, 4 * m, &triplets)?)
    } else {
        None
    };
    Ok((residual, jac))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Reusable stepper: caches the assembled mass/stiffness operators and the
/// symbolic factorizations of the (pattern-constant) linear systems.
pub struct Stepper<'a> {
    space: &'a FeSpace,
    params: ModelParams,
    opts: NewtonOpts,
    mass: SparseMat,
    stiffness: SparseMat,
    mass_lu: CachedLu,
    newton_lu: CachedLu,
}

impl<'a> Stepper<'a> {
    pub fn new(space: &'a FeSpace, params: ModelParams, opts: NewtonOpts) -> Self {
        Stepper {
            space,
            params,
            opts,
            mass: space.assemble_mass(),
            stiffness: space.assemble_stiffness(),
            mass_lu: CachedLu::new(),
            newton_lu: CachedLu::new(),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Initial guess for the interval potentials: solve the (linear)
    /// potential equations at the frozen previous state.
    fn initial_potentials(&mut self, prev: &State) -> Result<IntervalPotentials> {
        let space = self.space;
        let m = space.n_dofs();
        let mut rhs_r = self.stiffness.matvec(&prev.rho.coefficients)?;
        let mut rhs_e = self.stiffness.matvec(&prev.eta.coefficients)?;
        for v in &mut rhs_r {
            *v *= self.params.gamma_rho;
        }
        for v in &mut rhs_e {
            *v *= self.params.gamma_eta;
        }
        // add <f_rho, phi_i> and <f_eta, phi_i> at the frozen state
        for e in 0..space.dof_map().len() {
            let dofs = space.element_dofs(e);
            for (q, &wd) in space.wdet().iter().enumerate() {
                let nq = &space.shape_at_quad()[q];
                let mut r = 0.0;
                let mut et = 0.0;
                for a in 0..6 {
                    r += prev.rho.coefficients[dofs[a]] * nq[a];
                    et += prev.eta.coefficients[dofs[a]] * nq[a];
                }
                let (_, fr, fe, ..) = potential_eval(&self.params.potential, r, et);
                for a in 0..6 {
                    rhs_r[dofs[a]] += wd * fr * nq[a];
                    rhs_e[dofs[a]] += wd * fe * nq[a];
                }
            }
        }
        let mu_rho = self.mass_lu.solve(&self.mass, &rhs_r)?;
        let mu_eta = self.mass_lu.solve(&self.mass, &rhs_e)?;
        let _ = m;
        Ok(IntervalPotentials {
            mu_rho: space.field_from(mu_rho)?,
            mu_eta: space.field_from(mu_eta)?,
        })
    }

    /// Advances one interval by Newton's method on the coupled system.
    pub fn step(&mut self, prev: &State, tau: f64) -> Result<(State, IntervalPotentials, StepStats)> {
        let space = self.space;
        let m = space.n_dofs();
        let mut next = State {
            rho: prev.rho.clone(),
            eta: prev.eta.clone(),
            time: prev.time + tau,
        };
        let mut pots = self.initial_potentials(prev)?;

        let mut history: Vec<f64> = Vec::new();
        let mut consecutive_increases = 0usize;
        let mut line_search = false;
        let mut res =
            assemble_step_residual(space, &self.params, prev, &next, &pots, tau)?;
        let mut norm = l2(&res);
        let tol = (self.opts.tol_residual * norm).max(1e-13);
        history.push(norm);

        let mut iterations = 0usize;
        while norm > tol {
            if iterations >= self.opts.max_iter {
                return Err(ChacError::NonConvergence {
                    iters: iterations,
                    residuals: history,
                });
            }
            let jac = assemble_step_jacobian(space, &self.params, prev, &next, &pots, tau)?;
            if self.opts.fd_jacobian_check {
                check_jacobian(space, &self.params, prev, &next, &pots, tau, &jac)?;
            }
            let neg_res: Vec<f64> = res.iter().map(|v| -v).collect();
            let dx = self.newton_lu.solve(&jac, &neg_res)?;

            let apply = |next: &mut State, pots: &mut IntervalPotentials, s: f64| {
                for i in 0..m {
                    next.rho.coefficients[i] += s * dx[i];
                    next.eta.coefficients[i] += s * dx[m + i];
                    pots.mu_rho.coefficients[i] += s * dx[2 * m + i];
                    pots.mu_eta.coefficients[i] += s * dx[3 * m + i];
                }
            };

            let mut s = 1.0;
            apply(&mut next, &mut pots, s);
            let mut new_res =
                assemble_step_residual(space, &self.params, prev, &next, &pots, tau)?;
            let mut new_norm = l2(&new_res);
            if line_search {
                let mut halvings = 0;
                while new_norm > norm && halvings < 8 {
                    // retract half of the remaining step
                    apply(&mut next, &mut pots, -s / 2.0);
                    s /= 2.0;
                    new_res =
                        assemble_step_residual(space, &self.params, prev, &next, &pots, tau)?;
                    new_norm = l2(&new_res);
                    halvings += 1;
                }
            }
            if new_norm > norm {
                consecutive_increases += 1;
                if consecutive_increases >= 2 {
                    line_search = true;
                }
            } else {
                consecutive_increases = 0;
            }
            res = new_res;
            norm = new_norm;
            history.push(norm);
            iterations += 1;
        }
        Ok((
            next,
            pots,
            StepStats {
                iterations,
                final_residual: norm,
            },
        ))
    }
}

/// Directional finite-difference verification of the assembled Jacobian.
fn check_jacobian(
    space: &FeSpace,
    params: &ModelParams,
    prev: &State,
    next: &State,
    pots: &IntervalPotentials,
    tau: f64,
    jac: &SparseMat,
) -> Result<()> {
    let m = space.n_dofs();
    let eps = 1e-6;
    // fixed pseudo-random direction
    let mut s = 0x1234_5678_9abc_def0u64;
    let dir: Vec<f64> = (0..4 * m)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    let perturb = |sign: f64| -> Result<Vec<f64>> {
        let mut n2 = next.clone();
        let mut p2 = pots.clone();
        for i in 0..m {
            n2.rho.coefficients[i] += sign * eps * dir[i];
            n2.eta.coefficients[i] += sign * eps * dir[m + i];
            p2.mu_rho.coefficients[i] += sign * eps * dir[2 * m + i];
            p2.mu_eta.coefficients[i] += sign * eps * dir[3 * m + i];
        }
        assemble_step_residual(space, params, prev, &n2, &p2, tau)
    };
    let rp = perturb(1.0)?;
    let rm = perturb(-1.0)?;
    let jv = jac.matvec(&dir)?;
    let mut diff = 0.0;
    let mut scale = 0.0;
    for i in 0..4 * m {
        let fd = (rp[i] - rm[i]) / (2.0 * eps);
        diff += (fd - jv[i]) * (fd - jv[i]);
        scale += jv[i] * jv[i];
    }
    let rel = diff.sqrt() / scale.sqrt().max(1e-300);
    if rel > 1e-5 {
        return Err(ChacError::InvalidParameter(format!(
            "jacobian check failed: relative directional error {rel:.3e}"
        )));
    }
    Ok(())
}

/// Per-step record delivered to a [`RunSink`].
pub struct StepRecord<'a> {
    pub step: usize,
    pub state: &'a State,
    pub pots: &'a IntervalPotentials,
    pub diag: DiagnosticsRow,
}

/// Consumer of the time-stepping output.
pub trait RunSink {
    fn on_initial(&mut self, _state: &State) -> Result<()> {
        Ok(())
    }
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }
}

/// No-op sink.
pub struct NullSink;
impl RunSink for NullSink {}

/// Runs the scheme from analytic initial data (projected with the
/// H1-orthogonal projection) over the whole time grid.
pub fn run(
    space: &FeSpace,
    params: &ModelParams,
    grid: &TimeGrid,
    initial: (
        &dyn Fn([f64; 2]) -> f64,
        &dyn Fn([f64; 2]) -> [f64; 2],
        &dyn Fn([f64; 2]) -> f64,
        &dyn Fn([f64; 2]) -> [f64; 2],
    ),
    opts: NewtonOpts,
    sink: &mut dyn RunSink,
) -> Result<State> {
    let (rho0, grad_rho0, eta0, grad_eta0) = initial;
    let rho = space.h1_project(rho0, grad_rho0)?;
    let eta = space.h1_project(eta0, grad_eta0)?;
    let mut state = State {
        rho,
        eta,
        time: 0.0,
    };
    sink.on_initial(&state)?;
    if grid.n_steps == 0 {
        return Ok(state);
    }
    let tau = grid.tau();
    let mut stepper = Stepper::new(space, *params, opts);
    let mut e_prev = diagnostics::energy(space, params, &state.rho, &state.eta)?;
    for step in 1..=grid.n_steps {
        let (next, pots, stats) = stepper.step(&state, tau).map_err(|e| ChacError::StepFailed {
            step,
            source: Box::new(e),
        })?;
        let e_next = diagnostics::energy(space, params, &next.rho, &next.eta)?;
        let rho_bar = midpoint_avg(&state.rho, &next.rho);
        let eta_bar = midpoint_avg(&state.eta, &next.eta);
        let d = diagnostics::dissipation(
            space,
            params,
            &rho_bar,
            &eta_bar,
            &pots.mu_rho,
            &pots.mu_eta,
        )?;
        let diag = DiagnosticsRow {
            step,
            t: next.time,
            mass_rho: diagnostics::mass(space, &next.rho)?,
            energy: e_next,
            dissipation_interval: tau * d,
            energy_identity_residual: diagnostics::energy_identity_residual(e_prev, e_next, tau, d),
            newton_iters: stats.iterations,
            newton_residual: stats.final_residual,
        };
        sink.on_step(&StepRecord {
            step,
            state: &next,
            pots: &pots,
            diag,
        })?;
        e_prev = e_next;
        state = next;
    }
    Ok(state)
}
