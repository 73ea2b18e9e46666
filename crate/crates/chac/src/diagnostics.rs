//! Computable functionals of discrete states: total mass, free energy,
//! dissipation, relative energy, and the per-step energy-identity residual.
//!
//! All functionals use the assembly quadrature rule of the space, so the
//! discrete conservation and dissipation identities hold to solver
//! tolerance rather than up to a quadrature error.

use crate::error::Result;
use crate::fespace::{FeSpace, FieldVec};
use crate::model::{mobility_eval, mobility_quadratic, potential_eval, ModelParams};

/// One row of the per-step time series.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub t: f64,
    pub mass_rho: f64,
    pub energy: f64,
    /// tau times the dissipation functional of the completed interval.
    pub dissipation_interval: f64,
    pub energy_identity_residual: f64,
    pub newton_iters: usize,
    pub newton_residual: f64,
}

/// Quadrature-exact integral of the represented P2 function.
pub fn mass(space: &FeSpace, rho: &FieldVec) -> Result<f64> {
    let mut total = 0.0;
    for e in 0..space.dof_map().len() {
        let dofs = space.element_dofs(e);
        for (q, wd) in space.wdet().iter().enumerate() {
            let nq = &space.shape_at_quad()[q];
            let mut v = 0.0;
            for a in 0..6 {
                v += rho.coefficients[dofs[a]] * nq[a];
            }
            total += wd * v;
        }
    }
    Ok(total)
}

/// Total free energy
/// E = int (gamma_rho/2)|grad rho|^2 + (gamma_eta/2)|grad eta|^2 + f(rho, eta).
pub fn energy(space: &FeSpace, params: &ModelParams, rho: &FieldVec, eta: &FieldVec) -> Result<f64> {
    let mut total = 0.0;
    for e in 0..space.dof_map().len() {
        let dofs = space.element_dofs(e);
        let grads = space.grad_at_quad(e);
        for (q, wd) in space.wdet().iter().enumerate() {
            let nq = &space.shape_at_quad()[q];
            let g = &grads[q];
            let mut r = 0.0;
            let mut et = 0.0;
            let mut gr = [0.0; 2];
            let mut ge = [0.0; 2];
            for a in 0..6 {
                let cr = rho.coefficients[dofs[a]];
                let ce = eta.coefficients[dofs[a]];
                r += cr * nq[a];
                et += ce * nq[a];
                gr[0] += cr * g[a][0];
                gr[1] += cr * g[a][1];
                ge[0] += ce * g[a][0];
                ge[1] += ce * g[a][1];
            }
            let (f, ..) = potential_eval(&params.potential, r, et);
            total += wd
                * (0.5 * params.gamma_rho * (gr[0] * gr[0] + gr[1] * gr[1])
                    + 0.5 * params.gamma_eta * (ge[0] * ge[0] + ge[1] * ge[1])
                    + f);
        }
    }
    Ok(total)
}

/// Dissipation functional
/// D = int (grad mu_rho, mu_eta)' L(omega) (grad mu_rho, mu_eta)
/// with the mobility evaluated at the supplied interval-averaged fields.
pub fn dissipation(
    space: &FeSpace,
    params: &ModelParams,
    rho_bar: &FieldVec,
    eta_bar: &FieldVec,
    mu_rho: &FieldVec,
    mu_eta: &FieldVec,
) -> Result<f64> {
    let mut total = 0.0;
    for e in 0..space.dof_map().len() {
        let dofs = space.element_dofs(e);
        let grads = space.grad_at_quad(e);
        for (q, wd) in space.wdet().iter().enumerate() {
            let nq = &space.shape_at_quad()[q];
            let g = &grads[q];
            let mut r = 0.0;
            let mut et = 0.0;
            let mut gr = [0.0; 2];
            let mut ge = [0.0; 2];
            let mut gmr = [0.0; 2];
            let mut me = 0.0;
            for a in 0..6 {
                let cr = rho_bar.coefficients[dofs[a]];
                let ce = eta_bar.coefficients[dofs[a]];
                let cm = mu_rho.coefficients[dofs[a]];
                r += cr * nq[a];
                et += ce * nq[a];
                gr[0] += cr * g[a][0];
                gr[1] += cr * g[a][1];
                ge[0] += ce * g[a][0];
                ge[1] += ce * g[a][1];
                gmr[0] += cm * g[a][0];
                gmr[1] += cm * g[a][1];
                me += mu_eta.coefficients[dofs[a]] * nq[a];
            }
            let omega = [r, et, gr[0], gr[1], ge[0], ge[1]];
            let (l, _) = mobility_eval(&params.mobility, &omega);
            total += wd * mobility_quadratic(&l, &[gmr[0], gmr[1], me]);
        }
    }
    Ok(total)
}

/// Residual of the discrete energy identity: E_next - E_prev + tau * D.
pub fn energy_identity_residual(e_prev: f64, e_next: f64, tau: f64, dissipation: f64) -> f64 {
    e_next - e_prev + tau * dissipation
}

/// Regularized relative energy E_alpha between (rho, eta) and a reference
/// pair: gradient terms, alpha-quadratic terms, and the Bregman distance of
/// the potential.
pub fn relative_energy(
    space: &FeSpace,
    params: &ModelParams,
    state: (&FieldVec, &FieldVec),
    reference: (&FieldVec, &FieldVec),
    alpha: f64,
) -> Result<f64> {
    let (rho, eta) = state;
    let (rho_hat, eta_hat) = reference;
    let mut total = 0.0;
    for e in 0..space.dof_map().len() {
        let dofs = space.element_dofs(e);
        let grads = space.grad_at_quad(e);
        for (q, wd) in space.wdet().iter().enumerate() {
            let nq = &space.shape_at_quad()[q];
            let g = &grads[q];
            let mut r = 0.0;
            let mut et = 0.0;
            let mut rh = 0.0;
            let mut eh = 0.0;
            let mut dgr = [0.0; 2];
            let mut dge = [0.0; 2];
            for a in 0..6 {
                let cr = rho.coefficients[dofs[a]];
                let ce = eta.coefficients[dofs[a]];
                let crh = rho_hat.coefficients[dofs[a]];
                let ceh = eta_hat.coefficients[dofs[a]];
                r += cr * nq[a];
                et += ce * nq[a];
                rh += crh * nq[a];
                eh += ceh * nq[a];
                dgr[0] += (cr - crh) * g[a][0];
                dgr[1] += (cr - crh) * g[a][1];
                dge[0] += (ce - ceh) * g[a][0];
                dge[1] += (ce - ceh) * g[a][1];
            }
            let (f, ..) = potential_eval(&params.potential, r, et);
            let (fh, fhr, fhe, ..) = potential_eval(&params.potential, rh, eh);
            let bregman = f - fh - fhr * (r - rh) - fhe * (et - eh);
            total += wd
                * (0.5 * params.gamma_rho * (dgr[0] * dgr[0] + dgr[1] * dgr[1])
                    + 0.5 * params.gamma_eta * (dge[0] * dge[0] + dge[1] * dge[1])
                    + 0.5 * alpha * ((r - rh) * (r - rh) + (et - eh) * (et - eh))
                    + bregman);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::build_space;
    use crate::mesh::build_periodic_mesh;
    use crate::model::PotentialSpec;
    use std::f64::consts::PI;

    fn setup(n: usize) -> FeSpace {
        build_space(build_periodic_mesh(n).unwrap(), 8).unwrap()
    }

    #[test]
    fn mass_of_constant_and_zero() {
        let sp = setup(4);
        let half = sp.field_from(vec![0.5; sp.n_dofs()]).unwrap();
        assert!((mass(&sp, &half).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(mass(&sp, &sp.zero_field()).unwrap(), 0.0);
    }

    #[test]
    fn mass_of_projected_initial_data() {
        // int (0.5 + 0.5 sin(2 pi x) sin(2 pi y)) = 0.5 exactly
        let sp = setup(8);
        let rho0 = sp
            .h1_project(
                |[x, y]| 0.5 + 0.5 * (2.0 * PI * x).sin() * (2.0 * PI * y).sin(),
                |[x, y]| {
                    [
                        PI * (2.0 * PI * x).cos() * (2.0 * PI * y).sin(),
                        PI * (2.0 * PI * x).sin() * (2.0 * PI * y).cos(),
                    ]
                },
            )
            .unwrap();
        assert!((mass(&sp, &rho0).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn energy_at_critical_constants() {
        let sp = setup(4);
        let params = ModelParams::default();
        let ones = sp.field_from(vec![1.0; sp.n_dofs()]).unwrap();
        let e = energy(&sp, &params, &ones, &ones).unwrap();
        assert!(e.abs() < 1e-14);
        let zeros = sp.zero_field();
        let e0 = energy(&sp, &params, &zeros, &zeros).unwrap();
        assert!((e0 - 0.062).abs() < 1e-14);
    }

    #[test]
    fn energy_nonnegative_for_sampled_states() {
        let sp = setup(4);
        let params = ModelParams::default();
        let mut s = 5u64;
        let mut rnd = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 0.5
        };
        for _ in 0..20 {
            let rho = sp
                .field_from((0..sp.n_dofs()).map(|_| rnd()).collect())
                .unwrap();
            let eta = sp
                .field_from((0..sp.n_dofs()).map(|_| rnd()).collect())
                .unwrap();
            assert!(energy(&sp, &params, &rho, &eta).unwrap() >= 0.0);
        }
    }

    #[test]
    fn dissipation_edge_cases() {
        let sp = setup(4);
        let params = ModelParams::default();
        let zero = sp.zero_field();
        let state = sp.field_from(vec![0.3; sp.n_dofs()]).unwrap();
        // zero potentials
        let d = dissipation(&sp, &params, &state, &state, &zero, &zero).unwrap();
        assert_eq!(d, 0.0);
        // constant mu_rho, zero mu_eta: gradient vanishes
        let cmu = sp.field_from(vec![7.0; sp.n_dofs()]).unwrap();
        let d = dissipation(&sp, &params, &state, &state, &cmu, &zero).unwrap();
        assert!(d.abs() < 1e-13);
    }

    #[test]
    fn dissipation_nonnegative() {
        let sp = setup(4);
        let params = ModelParams::default();
        let mut s = 77u64;
        let mut rnd = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..20 {
            let mk = |rnd: &mut dyn FnMut() -> f64| {
                (0..sp.n_dofs()).map(|_| rnd()).collect::<Vec<_>>()
            };
            let rb = sp.field_from(mk(&mut rnd)).unwrap();
            let eb = sp.field_from(mk(&mut rnd)).unwrap();
            let mr = sp.field_from(mk(&mut rnd)).unwrap();
            let me = sp.field_from(mk(&mut rnd)).unwrap();
            assert!(dissipation(&sp, &params, &rb, &eb, &mr, &me).unwrap() >= -1e-13);
        }
    }

    #[test]
    fn identity_residual_of_fabricated_triple() {
        assert_eq!(energy_identity_residual(2.0, 1.5, 0.25, 2.0), 0.0);
    }

    #[test]
    fn relative_energy_of_identical_states_is_zero() {
        let sp = setup(4);
        let params = ModelParams::default();
        let f = sp.interpolate(|[x, y]| 0.5 + 0.1 * (2.0 * PI * x).sin() + 0.05 * y);
        let g = sp.interpolate(|[x, _]| 0.4 + 0.2 * (2.0 * PI * x).cos());
        let v = relative_energy(&sp, &params, (&f, &g), (&f, &g), 2.0).unwrap();
        assert!(v.abs() < 1e-13);
    }

    #[test]
    fn relative_energy_positive_on_sampled_pairs() {
        let sp = setup(4);
        let params = ModelParams::default();
        let mut s = 99u64;
        let mut rnd = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 0.5
        };
        for _ in 0..20 {
            let mk = |rnd: &mut dyn FnMut() -> f64| {
                (0..sp.n_dofs()).map(|_| rnd()).collect::<Vec<_>>()
            };
            let a = sp.field_from(mk(&mut rnd)).unwrap();
            let b = sp.field_from(mk(&mut rnd)).unwrap();
            let c = sp.field_from(mk(&mut rnd)).unwrap();
            let d = sp.field_from(mk(&mut rnd)).unwrap();
            let v = relative_energy(&sp, &params, (&a, &b), (&c, &d), 2.0).unwrap();
            assert!(v >= 0.0, "relative energy {v} negative");
        }
    }

    #[test]
    fn relative_energy_quadratic_closed_form() {
        // with C = D = 0 the Bregman term vanishes and E_alpha is an
        // explicit quadratic form in the differences
        let sp = setup(4);
        let params = ModelParams {
            potential: PotentialSpec {
                c: 0.0,
                d: 0.0,
                alpha: 2.0,
            },
            ..ModelParams::default()
        };
        let f = sp.interpolate(|[x, _]| (2.0 * PI * x).sin());
        let zero_pair = sp.zero_field();
        let alpha = 2.0;
        let v = relative_energy(
            &sp,
            &params,
            (&f, &zero_pair),
            (&zero_pair, &zero_pair),
            alpha,
        )
        .unwrap();
        let l2 = sp.norm(&f, crate::fespace::NormKind::L2).unwrap();
        let h1s = sp.norm(&f, crate::fespace::NormKind::H1Semi).unwrap();
        let expect = 0.5 * params.gamma_rho * h1s * h1s + 0.5 * alpha * l2 * l2;
        assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
    }
}
