//! Physical model data: the two-field quartic free-energy density with all
//! partial derivatives through second order, and the gradient-dependent
//! non-diagonal mobility matrix with its derivatives.
//!
//! The mobility acts on the pairing (grad mu_rho, mu_eta) and is laid out as
//! a symmetric 3x3 matrix: slots 0,1 are the gradient components, slot 2 the
//! scalar one,
//!
//! ```text
//!   L = [ L11  L12 ]        L11 = I + (l12^2 / l22) n_c ⊗ n_c   (2x2)
//!       [ L12' L22 ]        L12 = l12 n_c                        (2-vector)
//! ```
//!
//! with the regularized isoline normal n_c = g / sqrt(c + |g|^2), g = grad rho.
//! By construction the Schur complement L11 - L12 L12' / L22 is the identity.

/// Quartic potential parameters. `alpha` is the convexity shift used only by
/// the relative-energy diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    pub c: f64,
    pub d: f64,
    pub alpha: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec {
            c: 1.0,
            d: 0.062,
            alpha: 2.0,
        }
    }
}

/// Mobility parameters: scalar kinetic coefficient `l22`, cross-coupling
/// scale `l12_scale` and normal regularization `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilitySpec {
    pub l22: f64,
    pub l12_scale: f64,
    pub c: f64,
}

impl Default for MobilitySpec {
    fn default() -> Self {
        MobilitySpec {
            l22: 1000.0,
            l12_scale: 1000.0_f64.sqrt(),
            c: 1.0,
        }
    }
}

/// Full model parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub gamma_rho: f64,
    pub gamma_eta: f64,
    pub potential: PotentialSpec,
    pub mobility: MobilitySpec,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            gamma_rho: 1e-3,
            gamma_eta: 1e-3,
            potential: PotentialSpec::default(),
            mobility: MobilitySpec::default(),
        }
    }
}

/// Value and partial derivatives of the potential:
/// (f, f_rho, f_eta, f_rho_rho, f_rho_eta, f_eta_eta).
pub type PotentialDerivs = (f64, f64, f64, f64, f64, f64);

/// Evaluates the quartic free-energy density and its partials through second
/// order in closed form.
pub fn potential_eval(p: &PotentialSpec, rho: f64, eta: f64) -> PotentialDerivs {
    let (c, d) = (p.c, p.d);
    // g(eta) = eta^2 + (1-eta)^2, p(eta) = eta^3 + (1-eta)^3
    let g = eta * eta + (1.0 - eta) * (1.0 - eta);
    let dg = 4.0 * eta - 2.0;
    let ddg = 4.0;
    let pe = eta.powi(3) + (1.0 - eta).powi(3);
    let dpe = 3.0 * eta * eta - 3.0 * (1.0 - eta) * (1.0 - eta);
    let ddpe = 6.0;

    let w = rho * rho * (1.0 - rho) * (1.0 - rho);
    let dw = 2.0 * rho * (1.0 - rho) * (1.0 - rho) - 2.0 * rho * rho * (1.0 - rho);
    let ddw = 2.0 * (1.0 - rho) * (1.0 - rho) - 8.0 * rho * (1.0 - rho) + 2.0 * rho * rho;

    let f = c * w + d * (rho * rho + 6.0 * (1.0 - rho) * g - 4.0 * (2.0 - rho) * pe + 3.0 * g * g);
    let f_rho = c * dw + d * (2.0 * rho - 6.0 * g + 4.0 * pe);
    let f_eta = d * (6.0 * (1.0 - rho) * dg - 4.0 * (2.0 - rho) * dpe + 6.0 * g * dg);
    let f_rho_rho = c * ddw + 2.0 * d;
    let f_rho_eta = d * (-6.0 * dg + 4.0 * dpe);
    let f_eta_eta =
        d * (6.0 * (1.0 - rho) * ddg - 4.0 * (2.0 - rho) * ddpe + 6.0 * (dg * dg + g * ddg));
    (f, f_rho, f_eta, f_rho_rho, f_rho_eta, f_eta_eta)
}

/// Regularized isoline normal n = g / sqrt(c + |g|^2) and its Jacobian
/// dn/dg = I/s - g g' / s^3 with s = sqrt(c + |g|^2).
pub fn regularized_normal(g: [f64; 2], c: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let s2 = c + g[0] * g[0] + g[1] * g[1];
    let s = s2.sqrt();
    let n = [g[0] / s, g[1] / s];
    let s3 = s2 * s;
    let jac = [
        [1.0 / s - g[0] * g[0] / s3, -g[0] * g[1] / s3],
        [-g[1] * g[0] / s3, 1.0 / s - g[1] * g[1] / s3],
    ];
    (n, jac)
}

/// State argument of the mobility: (rho, eta, grad rho, grad eta) flattened
/// to 6 scalars in the order (rho, eta, d_x rho, d_y rho, d_x eta, d_y eta).
pub type Omega = [f64; 6];

/// 3x3 mobility matrix.
pub type Mob = [[f64; 3]; 3];

/// Partial derivatives of every mobility entry with respect to the six
/// components of omega: `dl[k][i][j] = d L[i][j] / d omega_k`.
pub type MobDerivs = [Mob; 6];

/// Evaluates the mobility matrix and its derivatives at omega.
pub fn mobility_eval(m: &MobilitySpec, omega: &Omega) -> (Mob, MobDerivs) {
    let g = [omega[2], omega[3]];
    let (n, dn) = regularized_normal(g, m.c);
    let a = m.l12_scale * m.l12_scale / m.l22;
    let mut l = [[0.0; 3]; 3];
    l[0][0] = 1.0 + a * n[0] * n[0];
    l[0][1] = a * n[0] * n[1];
    l[1][0] = l[0][1];
    l[1][1] = 1.0 + a * n[1] * n[1];
    l[0][2] = m.l12_scale * n[0];
    l[2][0] = l[0][2];
    l[1][2] = m.l12_scale * n[1];
    l[2][1] = l[1][2];
    l[2][2] = m.l22;

    let mut dl = [[[0.0; 3]; 3]; 6];
    // only the grad-rho slots (omega components 2 and 3) enter
    for k in 0..2 {
        let dnk = [dn[0][k], dn[1][k]]; // d n / d g_k
        let d = &mut dl[2 + k];
        d[0][0] = a * 2.0 * n[0] * dnk[0];
        d[0][1] = a * (dnk[0] * n[1] + n[0] * dnk[1]);
        d[1][0] = d[0][1];
        d[1][1] = a * 2.0 * n[1] * dnk[1];
        d[0][2] = m.l12_scale * dnk[0];
        d[2][0] = d[0][2];
        d[1][2] = m.l12_scale * dnk[1];
        d[2][1] = d[1][2];
    }
    (l, dl)
}

/// xi' L xi for a 3-vector pairing (grad mu_rho, mu_eta).
pub fn mobility_quadratic(l: &Mob, xi: &[f64; 3]) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            acc += xi[i] * l[i][j] * xi[j];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_stream(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        }
    }

    #[test]
    fn potential_at_pure_phases() {
        let p = PotentialSpec::default();
        let (f, ..) = potential_eval(&p, 1.0, 1.0);
        assert!(f.abs() < 1e-15);
        let (f, ..) = potential_eval(&p, 0.0, 0.0);
        assert!((f - 0.062).abs() < 1e-15);
    }

    #[test]
    fn potential_derivatives_match_finite_differences() {
        let p = PotentialSpec::default();
        let h = 1e-5;
        let mut rnd = rand_stream(7);
        for _ in 0..100 {
            let (r, e) = (rnd(), rnd());
            let (_, fr, fe, frr, fre, fee) = potential_eval(&p, r, e);
            let f = |r: f64, e: f64| potential_eval(&p, r, e).0;
            let fr_fd = (f(r + h, e) - f(r - h, e)) / (2.0 * h);
            let fe_fd = (f(r, e + h) - f(r, e - h)) / (2.0 * h);
            let frr_fd = (f(r + h, e) - 2.0 * f(r, e) + f(r - h, e)) / (h * h);
            let fee_fd = (f(r, e + h) - 2.0 * f(r, e) + f(r, e - h)) / (h * h);
            let fre_fd = (f(r + h, e + h) - f(r + h, e - h) - f(r - h, e + h) + f(r - h, e - h))
                / (4.0 * h * h);
            let scale = |x: f64| x.abs().max(1.0);
            assert!((fr - fr_fd).abs() / scale(fr) < 1e-6, "f_rho at ({r},{e})");
            assert!((fe - fe_fd).abs() / scale(fe) < 1e-6, "f_eta at ({r},{e})");
            // second differences of f carry ~1e-4 rounding noise at this step
            assert!((frr - frr_fd).abs() / scale(frr) < 1e-4, "f_rr at ({r},{e})");
            assert!((fre - fre_fd).abs() / scale(fre) < 1e-4, "f_re at ({r},{e})");
            assert!((fee - fee_fd).abs() / scale(fee) < 1e-4, "f_ee at ({r},{e})");
            // tighter cross-check: central differences of the analytic
            // first derivatives
            let d1 = |r: f64, e: f64| {
                let (_, fr, fe, ..) = potential_eval(&p, r, e);
                (fr, fe)
            };
            let frr_fd1 = (d1(r + h, e).0 - d1(r - h, e).0) / (2.0 * h);
            let fre_fd1 = (d1(r, e + h).0 - d1(r, e - h).0) / (2.0 * h);
            let fee_fd1 = (d1(r, e + h).1 - d1(r, e - h).1) / (2.0 * h);
            assert!((frr - frr_fd1).abs() / scale(frr) < 1e-6);
            assert!((fre - fre_fd1).abs() / scale(fre) < 1e-6);
            assert!((fee - fee_fd1).abs() / scale(fee) < 1e-6);
        }
    }

    #[test]
    fn normal_at_zero_gradient() {
        let (n, dn) = regularized_normal([0.0, 0.0], 1.0);
        assert_eq!(n, [0.0, 0.0]);
        assert!((dn[0][0] - 1.0).abs() < 1e-15);
        assert!((dn[1][1] - 1.0).abs() < 1e-15);
        assert!(dn[0][1].abs() < 1e-15 && dn[1][0].abs() < 1e-15);
    }

    #[test]
    fn normal_of_three_four() {
        let (n, _) = regularized_normal([3.0, 4.0], 1.0);
        let s = 26.0_f64.sqrt();
        assert!((n[0] - 3.0 / s).abs() < 1e-15);
        assert!((n[1] - 4.0 / s).abs() < 1e-15);
    }

    #[test]
    fn normal_magnitude_below_one() {
        let mut rnd = rand_stream(11);
        for _ in 0..1000 {
            let g = [rnd() * 100.0, rnd() * 100.0];
            let (n, _) = regularized_normal(g, 1.0);
            assert!(n[0] * n[0] + n[1] * n[1] < 1.0);
        }
    }

    #[test]
    fn mobility_zero_gradient_is_block_diagonal() {
        let m = MobilitySpec::default();
        let (l, _) = mobility_eval(&m, &[0.3, 0.4, 0.0, 0.0, 1.0, 2.0]);
        let expect = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1000.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((l[i][j] - expect[i][j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn mobility_symmetric_and_schur_identity() {
        let m = MobilitySpec::default();
        let mut rnd = rand_stream(13);
        for _ in 0..500 {
            let omega = [rnd(), rnd(), rnd() * 50.0, rnd() * 50.0, rnd(), rnd()];
            let (l, _) = mobility_eval(&m, &omega);
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(l[i][j], l[j][i]);
                }
            }
            // L11 - L12 L12' / L22 = I
            for i in 0..2 {
                for j in 0..2 {
                    let s = l[i][j] - l[i][2] * l[j][2] / l[2][2];
                    let id = if i == j { 1.0 } else { 0.0 };
                    assert!((s - id).abs() < 1e-13);
                }
            }
        }
    }

    /// Cholesky success as the positive-definiteness check.
    fn cholesky_ok(l: &Mob) -> bool {
        let mut a = *l;
        for k in 0..3 {
            if a[k][k] <= 0.0 {
                return false;
            }
            a[k][k] = a[k][k].sqrt();
            for i in (k + 1)..3 {
                a[i][k] /= a[k][k];
            }
            for j in (k + 1)..3 {
                for i in j..3 {
                    a[i][j] -= a[i][k] * a[j][k];
                }
            }
        }
        true
    }

    #[test]
    fn mobility_spd_at_sampled_states() {
        let m = MobilitySpec::default();
        let mut rnd = rand_stream(17);
        for _ in 0..10_000 {
            let omega = [
                rnd(),
                rnd(),
                rnd() * 500.0,
                rnd() * 500.0,
                rnd() * 500.0,
                rnd() * 500.0,
            ];
            let (l, _) = mobility_eval(&m, &omega);
            assert!(cholesky_ok(&l), "not SPD at {omega:?}");
        }
    }

    #[test]
    fn mobility_smallest_eigenvalue_bounded_below() {
        // power iteration on the inverse is overkill; check via quadratic
        // form minimum over random unit vectors
        let m = MobilitySpec::default();
        let mut rnd = rand_stream(23);
        for _ in 0..200 {
            let gnorm = rnd().abs() * 500.0;
            let omega = [rnd(), rnd(), gnorm, 0.0, 0.0, 0.0];
            let (l, _) = mobility_eval(&m, &omega);
            for _ in 0..50 {
                let mut xi = [rnd(), rnd(), rnd()];
                let nrm = (xi.iter().map(|v| v * v).sum::<f64>()).sqrt();
                for v in &mut xi {
                    *v /= nrm;
                }
                assert!(mobility_quadratic(&l, &xi) >= 1e-3);
            }
        }
    }

    #[test]
    fn mobility_derivatives_match_finite_differences() {
        let m = MobilitySpec::default();
        let h = 1e-5;
        let mut rnd = rand_stream(29);
        for _ in 0..100 {
            let omega: Omega = [rnd(), rnd(), rnd() * 3.0, rnd() * 3.0, rnd(), rnd()];
            let (_, dl) = mobility_eval(&m, &omega);
            for k in 0..6 {
                let mut op = omega;
                let mut om = omega;
                op[k] += h;
                om[k] -= h;
                let (lp, _) = mobility_eval(&m, &op);
                let (lm, _) = mobility_eval(&m, &om);
                for i in 0..3 {
                    for j in 0..3 {
                        let fd = (lp[i][j] - lm[i][j]) / (2.0 * h);
                        let an = dl[k][i][j];
                        assert!(
                            (an - fd).abs() / an.abs().max(1.0) < 1e-6,
                            "dL[{i}][{j}]/domega[{k}]: {an} vs {fd}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn shifted_potential_hessian_positive_on_solution_range() {
        // f + (alpha/2)(rho^2 + eta^2) with alpha = 2 on [-0.5, 1.5]^2
        let p = PotentialSpec::default();
        let alpha = p.alpha;
        for i in 0..200 {
            for j in 0..200 {
                let r = -0.5 + 2.0 * i as f64 / 199.0;
                let e = -0.5 + 2.0 * j as f64 / 199.0;
                let (_, _, _, frr, fre, fee) = potential_eval(&p, r, e);
                let (a, b, c) = (frr + alpha, fre, fee + alpha);
                assert!(a > 0.0 && a * c - b * b > 0.0, "not convex at ({r},{e})");
            }
        }
    }
}
