//! Periodic P2 scalar finite-element space on the structured torus mesh.
//!
//! Provides the degree-of-freedom map, a shared quadrature rule, mass and
//! stiffness assembly, the L2- and H1-orthogonal projections, discrete norms,
//! pointwise evaluation and the exact coarse-to-fine prolongation.
//!
//! The P2 basis is nodal: coefficients are function values at the n^2 mesh
//! vertices and the 3 n^2 edge midpoints, all of which lie on a uniform
//! 2n x 2n lattice.

use crate::error::{ChacError, Result};
use crate::linalg::SparseMat;
use crate::mesh::PeriodicMesh;

/// Quadrature rule on the reference triangle {(0,0),(1,0),(0,1)}.
///
/// Built as a collapsed (Duffy) tensor Gauss-Legendre rule, so nodes and
/// weights are computed to machine precision for any requested algebraic
/// degree. Weights are positive and sum to the reference area 1/2.
#[derive(Debug, Clone)]
pub struct QuadRule {
    /// Reference coordinates (r, s) of the quadrature points.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Algebraic exactness degree.
    pub degree: usize,
}

/// Gauss-Legendre nodes/weights on [0, 1], computed by Newton iteration on
/// the Legendre recurrence.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess on [-1, 1]
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and derivative by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x); // map [-1,1] -> [0,1], descending cos order
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

impl QuadRule {
    /// Rule exact for polynomials of total degree <= `degree` on the
    /// reference triangle.
    pub fn for_degree(degree: usize) -> QuadRule {
        // Duffy map (xi, eta) in [0,1]^2 -> (r, s) = (xi, eta (1 - xi))
        // with Jacobian (1 - xi): the xi-integrand picks up one extra degree.
        let n_xi = (degree + 2).div_ceil(2);
        let n_eta = (degree + 1).div_ceil(2);
        let (xs, wxs) = gauss_legendre_unit(n_xi);
        let (ys, wys) = gauss_legendre_unit(n_eta);
        let mut points = Vec::with_capacity(n_xi * n_eta);
        let mut weights = Vec::with_capacity(n_xi * n_eta);
        for (xi, wx) in xs.iter().zip(&wxs) {
            for (eta, wy) in ys.iter().zip(&wys) {
                points.push([*xi, eta * (1.0 - xi)]);
                weights.push(wx * wy * (1.0 - xi));
            }
        }
        QuadRule {
            points,
            weights,
            degree,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Evaluates the six P2 shape functions at a reference point.
pub fn p2_shape(r: f64, s: f64) -> [f64; 6] {
    let l0 = 1.0 - r - s;
    let (l1, l2) = (r, s);
    [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l0 * l1,
        4.0 * l1 * l2,
        4.0 * l2 * l0,
    ]
}

/// Reference gradients of the six P2 shape functions.
pub fn p2_shape_grad(r: f64, s: f64) -> [[f64; 2]; 6] {
    let l0 = 1.0 - r - s;
    let (l1, l2) = (r, s);
    let d0 = [-1.0, -1.0];
    let d1 = [1.0, 0.0];
    let d2 = [0.0, 1.0];
    let v = |c: f64, d: [f64; 2]| [c * d[0], c * d[1]];
    let add = |a: [f64; 2], b: [f64; 2]| [a[0] + b[0], a[1] + b[1]];
    [
        v(4.0 * l0 - 1.0, d0),
        v(4.0 * l1 - 1.0, d1),
        v(4.0 * l2 - 1.0, d2),
        add(v(4.0 * l1, d0), v(4.0 * l0, d1)),
        add(v(4.0 * l2, d1), v(4.0 * l1, d2)),
        add(v(4.0 * l0, d2), v(4.0 * l2, d0)),
    ]
}

/// Coefficient vector of a P2 function.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVec {
    pub coefficients: Vec<f64>,
    /// n (cells per side) of the owning space, used for lineage checks.
    pub space_n: usize,
}

impl FieldVec {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn axpy(&mut self, alpha: f64, other: &FieldVec) {
        for (a, b) in self.coefficients.iter_mut().zip(&other.coefficients) {
            *a += alpha * b;
        }
    }
}

/// Norm kinds for [`FeSpace::norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    H1Semi,
    H1,
}

/// Periodic P2 finite-element space.
pub struct FeSpace {
    mesh: PeriodicMesh,
    /// Per-element global indices of the 6 local DOFs.
    dof_map: Vec<[usize; 6]>,
    n_dofs: usize,
    quad: QuadRule,
    /// Shape values at quadrature points: `[q][a]`.
    shape: Vec<[f64; 6]>,
    /// Physical shape gradients at quadrature points per element parity
    /// (0 = lower, 1 = upper triangle): `[parity][q][a]`.
    grad_phys: [Vec<[[f64; 2]; 6]>; 2],
    /// Quadrature weight times |det J| (identical for all elements).
    wdet: Vec<f64>,
}

impl FeSpace {
    pub fn mesh(&self) -> &PeriodicMesh {
        &self.mesh
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn quad(&self) -> &QuadRule {
        &self.quad
    }

    pub fn dof_map(&self) -> &[[usize; 6]] {
        &self.dof_map
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 6] {
        self.dof_map[e]
    }

    pub fn shape_at_quad(&self) -> &[[f64; 6]] {
        &self.shape
    }

    /// Physical shape gradients at the quadrature points of element `e`.
    pub fn grad_at_quad(&self, e: usize) -> &[[[f64; 2]; 6]] {
        &self.grad_phys[e % 2]
    }

    /// Quadrature weight times Jacobian determinant, shared by all elements.
    pub fn wdet(&self) -> &[f64] {
        &self.wdet
    }

    pub fn zero_field(&self) -> FieldVec {
        FieldVec {
            coefficients: vec![0.0; self.n_dofs],
            space_n: self.mesh.n(),
        }
    }

    pub fn field_from(&self, coefficients: Vec<f64>) -> Result<FieldVec> {
        if coefficients.len() != self.n_dofs {
            return Err(ChacError::DimensionMismatch(format!(
                "field length {} != n_dofs {}",
                coefficients.len(),
                self.n_dofs
            )));
        }
        Ok(FieldVec {
            coefficients,
            space_n: self.mesh.n(),
        })
    }

    fn check_field(&self, v: &FieldVec) -> Result<()> {
        if v.coefficients.len() != self.n_dofs || v.space_n != self.mesh.n() {
            return Err(ChacError::DimensionMismatch(
                "field does not belong to this space".into(),
            ));
        }
        Ok(())
    }

    /// Location of global DOF `g` in [0,1)^2 (vertices and edge midpoints lie
    /// on the uniform 2n x 2n lattice).
    pub fn dof_point(&self, g: usize) -> [f64; 2] {
        let n = self.mesh.n();
        let nn = n * n;
        let nf = n as f64;
        let (group, idx) = (g / nn, g % nn);
        let (i, j) = (idx % n, idx / n);
        match group {
            0 => [i as f64 / nf, j as f64 / nf],
            1 => [(i as f64 + 0.5) / nf, j as f64 / nf],
            2 => [i as f64 / nf, (j as f64 + 0.5) / nf],
            _ => [(i as f64 + 0.5) / nf, (j as f64 + 0.5) / nf],
        }
    }

    /// Nodal interpolant: coefficients are the function values at DOF points.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> FieldVec {
        let coefficients = (0..self.n_dofs).map(|g| f(self.dof_point(g))).collect();
        FieldVec {
            coefficients,
            space_n: self.mesh.n(),
        }
    }

    /// Assembles the mass matrix <phi_j, phi_i>.
    pub fn assemble_mass(&self) -> SparseMat {
        let mut triplets = Vec::with_capacity(self.dof_map.len() * 36);
        for e in 0..self.dof_map.len() {
            let dofs = self.dof_map[e];
            let mut local = [[0.0; 6]; 6];
            for (q, wd) in self.wdet.iter().enumerate() {
                let nq = &self.shape[q];
                for a in 0..6 {
                    for b in 0..6 {
                        local[a][b] += wd * nq[a] * nq[b];
                    }
                }
            }
            for a in 0..6 {
                for b in 0..6 {
                    triplets.push((dofs[a], dofs[b], local[a][b]));
                }
            }
        }
        SparseMat::from_triplets(self.n_dofs, self.n_dofs, &triplets).expect("indices in range")
    }

    /// Assembles the stiffness matrix <grad phi_j, grad phi_i>.
    pub fn assemble_stiffness(&self) -> SparseMat {
        let mut triplets = Vec::with_capacity(self.dof_map.len() * 36);
        for e in 0..self.dof_map.len() {
            let dofs = self.dof_map[e];
            let grads = self.grad_at_quad(e);
            let mut local = [[0.0; 6]; 6];
            for (q, wd) in self.wdet.iter().enumerate() {
                let g = &grads[q];
                for a in 0..6 {
                    for b in 0..6 {
                        local[a][b] += wd * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                    }
                }
            }
            for a in 0..6 {
                for b in 0..6 {
                    triplets.push((dofs[a], dofs[b], local[a][b]));
                }
            }
        }
        SparseMat::from_triplets(self.n_dofs, self.n_dofs, &triplets).expect("indices in range")
    }

    /// Physical coordinates of quadrature point `q` in element `e`
    /// (unwrapped, may lie outside the unit square for seam elements).
    pub fn quad_point_phys(&self, e: usize, q: usize) -> [f64; 2] {
        let (origin, jac) = self.mesh.element_affine_map(e).expect("element in range");
        let [r, s] = self.quad.points[q];
        [
            origin[0] + jac[0][0] * r + jac[0][1] * s,
            origin[1] + jac[1][0] * r + jac[1][1] * s,
        ]
    }

    /// L2-orthogonal projection of a pointwise function onto the space.
    pub fn l2_project(&self, f: impl Fn([f64; 2]) -> f64) -> Result<FieldVec> {
        let mass = self.assemble_mass();
        let mut rhs = vec![0.0; self.n_dofs];
        for e in 0..self.dof_map.len() {
            let dofs = self.dof_map[e];
            for (q, wd) in self.wdet.iter().enumerate() {
                let x = self.quad_point_phys(e, q);
                let fx = f(x);
                let nq = &self.shape[q];
                for a in 0..6 {
                    rhs[dofs[a]] += wd * fx * nq[a];
                }
            }
        }
        let x = mass.solve_direct(&rhs)?;
        self.field_from(x)
    }

    /// H1-orthogonal projection: solves (M + K) x = <f, phi> + <grad f, grad phi>.
    pub fn h1_project(
        &self,
        f: impl Fn([f64; 2]) -> f64,
        grad_f: impl Fn([f64; 2]) -> [f64; 2],
    ) -> Result<FieldVec> {
        let mass = self.assemble_mass();
        let stiff = self.assemble_stiffness();
        let mut rhs = vec![0.0; self.n_dofs];
        for e in 0..self.dof_map.len() {
            let dofs = self.dof_map[e];
            let grads = self.grad_at_quad(e);
            for (q, wd) in self.wdet.iter().enumerate() {
                let x = self.quad_point_phys(e, q);
                let fx = f(x);
                let gx = grad_f(x);
                let nq = &self.shape[q];
                let g = &grads[q];
                for a in 0..6 {
                    rhs[dofs[a]] += wd * (fx * nq[a] + gx[0] * g[a][0] + gx[1] * g[a][1]);
                }
            }
        }
        // system matrix M + K
        let mut triplets = Vec::new();
        for r in 0..self.n_dofs {
            let (cols, vals) = mass.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                triplets.push((r, c, v));
            }
            let (cols, vals) = stiff.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                triplets.push((r, c, v));
            }
        }
        let sys = SparseMat::from_triplets(self.n_dofs, self.n_dofs, &triplets)?;
        let x = sys.solve_direct(&rhs)?;
        self.field_from(x)
    }

    /// P2 value and physical gradient at a reference point of element `e`.
    pub fn evaluate(&self, vec: &FieldVec, e: usize, ref_point: [f64; 2]) -> Result<(f64, [f64; 2])> {
        self.check_field(vec)?;
        if e >= self.dof_map.len() {
            return Err(ChacError::IndexOutOfRange { index: e, len: self.dof_map.len() });
        }
        let [r, s] = ref_point;
        let shape = p2_shape(r, s);
        let gref = p2_shape_grad(r, s);
        let (_, jac) = self.mesh.element_affine_map(e)?;
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        // J^{-T} columns
        let jinv_t = [
            [jac[1][1] / det, -jac[1][0] / det],
            [-jac[0][1] / det, jac[0][0] / det],
        ];
        let dofs = self.dof_map[e];
        let mut val = 0.0;
        let mut grad = [0.0; 2];
        for a in 0..6 {
            let c = vec.coefficients[dofs[a]];
            val += c * shape[a];
            let gx = jinv_t[0][0] * gref[a][0] + jinv_t[0][1] * gref[a][1];
            let gy = jinv_t[1][0] * gref[a][0] + jinv_t[1][1] * gref[a][1];
            grad[0] += c * gx;
            grad[1] += c * gy;
        }
        Ok((val, grad))
    }

    /// Locates the element and reference coordinates of a point in [0,1)^2.
    pub fn locate(&self, p: [f64; 2]) -> (usize, [f64; 2]) {
        let n = self.mesh.n();
        let nf = n as f64;
        let wrap = |x: f64| x - x.floor();
        let (x, y) = (wrap(p[0]), wrap(p[1]));
        let mut ci = (x * nf).floor() as usize;
        let mut cj = (y * nf).floor() as usize;
        if ci >= n {
            ci = n - 1;
        }
        if cj >= n {
            cj = n - 1;
        }
        let xs = x * nf - ci as f64;
        let ys = y * nf - cj as f64;
        let cell = cj * n + ci;
        if ys <= xs {
            // lower triangle: x = r + s, y = s
            (2 * cell, [xs - ys, ys])
        } else {
            // upper triangle: x = r, y = r + s
            (2 * cell + 1, [xs, ys - xs])
        }
    }

    /// Evaluates the P2 function at an arbitrary point of the torus.
    pub fn evaluate_at(&self, vec: &FieldVec, p: [f64; 2]) -> Result<(f64, [f64; 2])> {
        let (e, r) = self.locate(p);
        self.evaluate(vec, e, r)
    }

    /// Quadrature-exact norm of the represented P2 function.
    pub fn norm(&self, vec: &FieldVec, kind: NormKind) -> Result<f64> {
        self.check_field(vec)?;
        let mut l2sq = 0.0;
        let mut h1sq = 0.0;
        for e in 0..self.dof_map.len() {
            let dofs = self.dof_map[e];
            let grads = self.grad_at_quad(e);
            for (q, wd) in self.wdet.iter().enumerate() {
                let nq = &self.shape[q];
                let g = &grads[q];
                let mut val = 0.0;
                let mut gx = 0.0;
                let mut gy = 0.0;
                for a in 0..6 {
                    let c = vec.coefficients[dofs[a]];
                    val += c * nq[a];
                    gx += c * g[a][0];
                    gy += c * g[a][1];
                }
                l2sq += wd * val * val;
                h1sq += wd * (gx * gx + gy * gy);
            }
        }
        Ok(match kind {
            NormKind::L2 => l2sq.sqrt(),
            NormKind::H1Semi => h1sq.sqrt(),
            NormKind::H1 => (l2sq + h1sq).sqrt(),
        })
    }

    /// Exact injection of a coarse field into the refined space.
    ///
    /// The fine space must be built on `refine_uniform` of the coarse mesh;
    /// nestedness makes the represented function identical.
    pub fn prolong(&self, fine: &FeSpace, vec: &FieldVec) -> Result<FieldVec> {
        self.check_field(vec)?;
        if fine.mesh.n() != 2 * self.mesh.n() {
            return Err(ChacError::LineageMismatch(format!(
                "fine space has n={}, expected {}",
                fine.mesh.n(),
                2 * self.mesh.n()
            )));
        }
        let mut coefficients = vec![0.0; fine.n_dofs];
        for (g, c) in coefficients.iter_mut().enumerate() {
            let p = fine.dof_point(g);
            let (v, _) = self.evaluate_at(vec, p)?;
            *c = v;
        }
        Ok(FieldVec {
            coefficients,
            space_n: fine.mesh.n(),
        })
    }
}

/// Builds the periodic P2 space with a shared quadrature rule of the given
/// algebraic degree (at least 8, so that the quartic energy density of P2
/// arguments is integrated exactly).
pub fn build_space(mesh: PeriodicMesh, quad_degree: usize) -> Result<FeSpace> {
    if quad_degree < 8 {
        return Err(ChacError::InvalidParameter(format!(
            "quad_degree must be >= 8 (quartic potential of P2 fields has degree 8), got {quad_degree}"
        )));
    }
    let n = mesh.n();
    let nn = n * n;
    let vid = |i: usize, j: usize| (j % n) * n + (i % n);
    let h_edge = |i: usize, j: usize| nn + (j % n) * n + (i % n);
    let v_edge = |i: usize, j: usize| 2 * nn + (j % n) * n + (i % n);
    let d_edge = |i: usize, j: usize| 3 * nn + (j % n) * n + (i % n);

    let mut dof_map = Vec::with_capacity(2 * nn);
    for j in 0..n {
        for i in 0..n {
            // local order: vertices 0,1,2 then midpoints of edges (0,1), (1,2), (2,0)
            dof_map.push([
                vid(i, j),
                vid(i + 1, j),
                vid(i + 1, j + 1),
                h_edge(i, j),
                v_edge(i + 1, j),
                d_edge(i, j),
            ]);
            dof_map.push([
                vid(i, j),
                vid(i + 1, j + 1),
                vid(i, j + 1),
                d_edge(i, j),
                h_edge(i, j + 1),
                v_edge(i, j),
            ]);
        }
    }

    let quad = QuadRule::for_degree(quad_degree);
    let shape: Vec<[f64; 6]> = quad.points.iter().map(|&[r, s]| p2_shape(r, s)).collect();
    // both element parities are congruent; physical gradients depend only on
    // the parity-specific Jacobian
    let det = 1.0 / (n as f64 * n as f64);
    let jacs = [
        [[1.0 / n as f64, 1.0 / n as f64], [0.0, 1.0 / n as f64]],
        [[1.0 / n as f64, 0.0], [1.0 / n as f64, 1.0 / n as f64]],
    ];
    let mut grad_phys: [Vec<[[f64; 2]; 6]>; 2] = [Vec::new(), Vec::new()];
    for parity in 0..2 {
        let jac = jacs[parity];
        let d = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let jinv_t = [
            [jac[1][1] / d, -jac[1][0] / d],
            [-jac[0][1] / d, jac[0][0] / d],
        ];
        for &[r, s] in &quad.points {
            let gref = p2_shape_grad(r, s);
            let mut row = [[0.0; 2]; 6];
            for a in 0..6 {
                row[a] = [
                    jinv_t[0][0] * gref[a][0] + jinv_t[0][1] * gref[a][1],
                    jinv_t[1][0] * gref[a][0] + jinv_t[1][1] * gref[a][1],
                ];
            }
            grad_phys[parity].push(row);
        }
    }
    let wdet = quad.weights.iter().map(|w| w * det).collect();

    Ok(FeSpace {
        mesh,
        dof_map,
        n_dofs: 4 * nn,
        quad,
        shape,
        grad_phys,
        wdet,
    })
}
