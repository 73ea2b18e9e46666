//! Structured periodic triangulations of the unit square torus.
//!
//! The unit square is split into `n x n` cells, each cell into two triangles
//! along the lower-left to upper-right diagonal. Opposite sides of the square
//! are identified, so the mesh has no boundary: every vertex appears once and
//! elements crossing the seam carry per-corner wrap shifts that give each
//! element a well-defined (unwrapped) affine geometry.
//!
//! Uniform refinement doubles `n` with the same diagonal orientation, which
//! makes every coarse triangle the union of four fine triangles and the
//! coarse vertex set a subset of the fine one (red refinement).

use crate::error::{ChacError, Result};

/// One triangle: three global vertex indices plus the integer wrap shift of
/// each corner (in units of the period, values in {-1, 0, 1}).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub shifts: [[i8; 2]; 3],
}

/// Structured periodic triangulation of the unit square 2-torus.
#[derive(Debug, Clone)]
pub struct PeriodicMesh {
    n: usize,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<Triangle>,
    level: u32,
}

impl PeriodicMesh {
    /// Cells per side.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Global mesh size h = sqrt(2)/n (diameter of the congruent elements).
    pub fn h(&self) -> f64 {
        std::f64::consts::SQRT_2 / self.n as f64
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex(&self, i: usize) -> [f64; 2] {
        self.vertices[i]
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangle(&self, e: usize) -> &Triangle {
        &self.triangles[e]
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    /// Global index of the vertex at lattice site (i, j), wrapped.
    pub fn vertex_index(&self, i: usize, j: usize) -> usize {
        (j % self.n) * self.n + (i % self.n)
    }

    /// Unwrapped physical coordinates of the three corners of element `e`.
    pub fn corner_coords(&self, e: usize) -> Result<[[f64; 2]; 3]> {
        let tri = self
            .triangles
            .get(e)
            .ok_or(ChacError::IndexOutOfRange { index: e, len: self.triangles.len() })?;
        let mut out = [[0.0; 2]; 3];
        for k in 0..3 {
            let v = self.vertices[tri.vertices[k]];
            out[k] = [
                v[0] + tri.shifts[k][0] as f64,
                v[1] + tri.shifts[k][1] as f64,
            ];
        }
        Ok(out)
    }

    /// Affine map of element `e` from the reference triangle
    /// {(0,0),(1,0),(0,1)}: returns the origin (image of (0,0)) and the
    /// Jacobian columns.
    pub fn element_affine_map(&self, e: usize) -> Result<([f64; 2], [[f64; 2]; 2])> {
        let c = self.corner_coords(e)?;
        let jac = [
            [c[1][0] - c[0][0], c[2][0] - c[0][0]],
            [c[1][1] - c[0][1], c[2][1] - c[0][1]],
        ];
        Ok((c[0], jac))
    }

    /// Signed area of element `e`.
    pub fn element_area(&self, e: usize) -> Result<f64> {
        let (_, j) = self.element_affine_map(e)?;
        Ok(0.5 * (j[0][0] * j[1][1] - j[0][1] * j[1][0]))
    }

    /// Uniform red refinement: doubles the cells per side, preserving the
    /// diagonal orientation. The coarse vertex set is a subset of the fine
    /// one and every coarse triangle is the union of four fine triangles.
    pub fn refine_uniform(&self) -> Result<PeriodicMesh> {
        let n2 = self
            .n
            .checked_mul(2)
            .ok_or_else(|| ChacError::InvalidParameter("mesh refinement overflows n".into()))?;
        let mut fine = build_periodic_mesh(n2)?;
        fine.level = self.level + 1;
        Ok(fine)
    }
}

/// Builds the structured periodic mesh with `n >= 2` cells per side.
pub fn build_periodic_mesh(n: usize) -> Result<PeriodicMesh> {
    if n < 2 {
        return Err(ChacError::InvalidParameter(format!(
            "n must be >= 2, got {n}"
        )));
    }
    let nf = n as f64;
    let mut vertices = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            vertices.push([i as f64 / nf, j as f64 / nf]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    let vid = |i: usize, j: usize| (j % n) * n + (i % n);
    let shift = |i: usize| if i >= n { 1i8 } else { 0i8 };
    for j in 0..n {
        for i in 0..n {
            // corners of cell (i, j)
            let (i1, j1) = (i + 1, j + 1);
            // lower triangle: (i,j) (i+1,j) (i+1,j+1)
            triangles.push(Triangle {
                vertices: [vid(i, j), vid(i1, j), vid(i1, j1)],
                shifts: [
                    [0, 0],
                    [shift(i1), 0],
                    [shift(i1), shift(j1)],
                ],
            });
            // upper triangle: (i,j) (i+1,j+1) (i,j+1)
            triangles.push(Triangle {
                vertices: [vid(i, j), vid(i1, j1), vid(i, j1)],
                shifts: [
                    [0, 0],
                    [shift(i1), shift(j1)],
                    [0, shift(j1)],
                ],
            });
        }
    }
    Ok(PeriodicMesh {
        n,
        vertices,
        triangles,
        level: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn counts_n2() {
        let m = build_periodic_mesh(2).unwrap();
        assert_eq!(m.n_triangles(), 8);
        assert_eq!(m.n_vertices(), 4);
        for e in 0..8 {
            assert!((m.element_area(e).unwrap() - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn counts_n4() {
        let m = build_periodic_mesh(4).unwrap();
        assert_eq!(m.n_triangles(), 32);
        assert_eq!(m.n_vertices(), 16);
    }

    #[test]
    fn n1_rejected() {
        let err = build_periodic_mesh(1).unwrap_err();
        assert!(err.to_string().contains(">= 2"));
    }

    #[test]
    fn areas_sum_to_domain_measure() {
        for n in [2, 3, 5, 8] {
            let m = build_periodic_mesh(n).unwrap();
            let total: f64 = (0..m.n_triangles())
                .map(|e| m.element_area(e).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-14, "n={n}: {total}");
        }
    }

    #[test]
    fn jacobian_determinants_congruent() {
        let m = build_periodic_mesh(2).unwrap();
        let (_, j) = m.element_affine_map(0).unwrap();
        let det0 = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        assert!((det0 - 0.25).abs() < 1e-15);
        for e in 0..m.n_triangles() {
            let (_, j) = m.element_affine_map(e).unwrap();
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            assert!((det - det0).abs() < 1e-15);
        }
    }

    #[test]
    fn seam_elements_unwrap_outside_unit_square() {
        let m = build_periodic_mesh(2).unwrap();
        let mut found = false;
        for e in 0..m.n_triangles() {
            let c = m.corner_coords(e).unwrap();
            if c.iter().any(|p| p[0] >= 1.0 || p[1] >= 1.0) {
                found = true;
                assert!(m.element_area(e).unwrap() > 0.0);
            }
        }
        assert!(found);
    }

    #[test]
    fn every_edge_shared_by_two_triangles() {
        let m = build_periodic_mesh(4).unwrap();
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in m.triangles() {
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                let mut e = [tri.vertices[a], tri.vertices[b]];
                e.sort();
                *counts.entry((e[0], e[1])).or_insert(0) += 1;
            }
        }
        assert!(counts.values().all(|&c| c == 2));
    }

    #[test]
    fn refinement_nests_vertices_exactly() {
        let coarse = build_periodic_mesh(2).unwrap();
        let fine = coarse.refine_uniform().unwrap();
        assert_eq!(fine.n(), 4);
        assert_eq!(fine.level(), coarse.level() + 1);
        // i/2 with power-of-two n is exact, so subset comparison is bitwise
        for v in coarse.vertices() {
            assert!(fine.vertices().iter().any(|w| w == v));
        }
    }

    #[test]
    fn double_refinement_equals_direct_build() {
        let m = build_periodic_mesh(2)
            .unwrap()
            .refine_uniform()
            .unwrap()
            .refine_uniform()
            .unwrap();
        let d = build_periodic_mesh(8).unwrap();
        let mut a: Vec<_> = m.vertices().to_vec();
        let mut b: Vec<_> = d.vertices().to_vec();
        let key = |p: &[f64; 2]| (p[0].to_bits(), p[1].to_bits());
        a.sort_by_key(key);
        b.sort_by_key(key);
        assert_eq!(a, b);
        let mut ta: Vec<_> = m.triangles().iter().map(|t| t.vertices).collect();
        let mut tb: Vec<_> = d.triangles().iter().map(|t| t.vertices).collect();
        ta.sort();
        tb.sort();
        assert_eq!(ta, tb);
    }

    #[test]
    fn coarse_triangle_covered_by_four_fine() {
        let coarse = build_periodic_mesh(2).unwrap();
        let fine = coarse.refine_uniform().unwrap();
        for e in 0..coarse.n_triangles() {
            let area = coarse.element_area(e).unwrap();
            let c = coarse.corner_coords(e).unwrap();
            // count fine triangles whose centroid lies inside the coarse one
            let mut covered = 0.0;
            for f in 0..fine.n_triangles() {
                let fc = fine.corner_coords(f).unwrap();
                let centroid = [
                    (fc[0][0] + fc[1][0] + fc[2][0]) / 3.0,
                    (fc[0][1] + fc[1][1] + fc[2][1]) / 3.0,
                ];
                // periodic representative: test all nearby shifts
                'outer: for sx in [-1.0, 0.0, 1.0] {
                    for sy in [-1.0, 0.0, 1.0] {
                        let p = [centroid[0] + sx, centroid[1] + sy];
                        if point_in_triangle(p, &c) {
                            covered += fine.element_area(f).unwrap();
                            break 'outer;
                        }
                    }
                }
            }
            assert!((covered - area).abs() < 1e-14);
        }
    }

    fn point_in_triangle(p: [f64; 2], c: &[[f64; 2]; 3]) -> bool {
        let sign = |a: [f64; 2], b: [f64; 2]| {
            (p[0] - b[0]) * (a[1] - b[1]) - (a[0] - b[0]) * (p[1] - b[1])
        };
        let d1 = sign(c[0], c[1]);
        let d2 = sign(c[1], c[2]);
        let d3 = sign(c[2], c[0]);
        let neg = d1 < -1e-14 || d2 < -1e-14 || d3 < -1e-14;
        let pos = d1 > 1e-14 || d2 > 1e-14 || d3 > 1e-14;
        !(neg && pos)
    }
}
