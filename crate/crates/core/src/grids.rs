//! Spatial cube grids, spherical quadrature grids, and the icosphere
//! orientation binning with exact Voronoi-cell areas.

use crate::quad::GaussLegendre;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Cube-cell grid centered on the origin: cells `c_{ijk}` of edge `ds` with
/// centers `(i ds, j ds, k ds)`, `|i| <= ni`, `|j| <= nj`, `|k| <= nk`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeGrid {
    pub ds: f64,
    pub ni: i32,
    pub nj: i32,
    pub nk: i32,
}

impl CubeGrid {
    pub fn new(ds: f64, ni: i32, nj: i32, nk: i32) -> Self {
        assert!(ds > 0.0 && ni >= 0 && nj >= 0 && nk >= 0);
        CubeGrid { ds, ni, nj, nk }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (
            (2 * self.ni + 1) as usize,
            (2 * self.nj + 1) as usize,
            (2 * self.nk + 1) as usize,
        )
    }

    pub fn len(&self) -> usize {
        let (a, b, c) = self.dims();
        a * b * c
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.ds.powi(3)
    }

    #[inline]
    pub fn flat_index(&self, i: i32, j: i32, k: i32) -> usize {
        let (_, dj, dk) = self.dims();
        (((i + self.ni) as usize) * dj + (j + self.nj) as usize) * dk + (k + self.nk) as usize
    }

    #[inline]
    pub fn center(&self, i: i32, j: i32, k: i32) -> Vector3<f64> {
        Vector3::new(
            i as f64 * self.ds,
            j as f64 * self.ds,
            k as f64 * self.ds,
        )
    }

    /// Cell index of a point, or None when outside the grid.
    pub fn locate(&self, x: &Vector3<f64>) -> Option<(i32, i32, i32)> {
        let i = (x.x / self.ds).round() as i32;
        let j = (x.y / self.ds).round() as i32;
        let k = (x.z / self.ds).round() as i32;
        if i.abs() <= self.ni && j.abs() <= self.nj && k.abs() <= self.nk {
            Some((i, j, k))
        } else {
            None
        }
    }

    pub fn iter_indices(&self) -> impl Iterator<Item = (i32, i32, i32)> + '_ {
        let (ni, nj, nk) = (self.ni, self.nj, self.nk);
        (-ni..=ni).flat_map(move |i| {
            (-nj..=nj).flat_map(move |j| (-nk..=nk).map(move |k| (i, j, k)))
        })
    }

    pub fn centers(&self) -> Vec<Vector3<f64>> {
        self.iter_indices()
            .map(|(i, j, k)| self.center(i, j, k))
            .collect()
    }

    /// Groups flat indices by squared radius (exact integer key).
    pub fn radius_classes(&self) -> Vec<(f64, Vec<usize>)> {
        let mut classes: HashMap<i64, Vec<usize>> = HashMap::new();
        for (i, j, k) in self.iter_indices() {
            let key = i as i64 * i as i64 + j as i64 * j as i64 + k as i64 * k as i64;
            classes
                .entry(key)
                .or_default()
                .push(self.flat_index(i, j, k));
        }
        let mut out: Vec<(f64, Vec<usize>)> = classes
            .into_iter()
            .map(|(key, idx)| (self.ds * (key as f64).sqrt(), idx))
            .collect();
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        out
    }
}

/// Quadrature grid on the unit sphere: points with weights summing to 4 pi.
#[derive(Clone, Debug)]
pub struct SphereGrid {
    pub points: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

impl SphereGrid {
    /// Gauss-Legendre x uniform product rule, exact for spherical polynomials
    /// of degree <= 2 l_max (and a little beyond in the azimuth).
    pub fn gauss_product(l_max: u32) -> Self {
        let n_beta = (l_max + 1) as usize;
        let n_gamma = (2 * l_max + 2) as usize;
        let rule = GaussLegendre::new(n_beta);
        let mut points = Vec::with_capacity(n_beta * n_gamma);
        let mut weights = Vec::with_capacity(n_beta * n_gamma);
        let wg = 2.0 * std::f64::consts::PI / n_gamma as f64;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let s = (1.0 - x * x).sqrt();
            for j in 0..n_gamma {
                let gamma = 2.0 * std::f64::consts::PI * j as f64 / n_gamma as f64;
                points.push(Vector3::new(s * gamma.cos(), s * gamma.sin(), *x));
                weights.push(w * wg);
            }
        }
        SphereGrid { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Geodesic icosphere: the vertex set of a subdivided icosahedron projected
/// to the sphere, with the spherical Voronoi cells of the vertices as bins.
#[derive(Clone, Debug)]
pub struct Icosphere {
    pub frequency: u32,
    pub centers: Vec<Vector3<f64>>,
    /// exact spherical areas of the Voronoi cells
    pub areas: Vec<f64>,
    faces: Vec<[usize; 3]>,
}

impl Icosphere {
    /// Builds the frequency-`f` geodesic polyhedron; the vertex count is
    /// `10 f^2 + 2`.
    pub fn new(frequency: u32) -> Self {
        assert!(frequency >= 1);
        let (base_vertices, base_faces) = icosahedron();
        let f = frequency as usize;
        let mut vertices: Vec<Vector3<f64>> = Vec::new();
        let mut lookup: HashMap<[i64; 3], usize> = HashMap::new();
        let mut faces: Vec<[usize; 3]> = Vec::new();
        let mut intern = |v: Vector3<f64>, vertices: &mut Vec<Vector3<f64>>| -> usize {
            let u = v.normalize();
            let key = [
                (u.x * 1e12).round() as i64,
                (u.y * 1e12).round() as i64,
                (u.z * 1e12).round() as i64,
            ];
            *lookup.entry(key).or_insert_with(|| {
                vertices.push(u);
                vertices.len() - 1
            })
        };
        for tri in &base_faces {
            let (a, b, c) = (
                base_vertices[tri[0]],
                base_vertices[tri[1]],
                base_vertices[tri[2]],
            );
            // barycentric lattice over the face
            let point = |u: usize, v: usize| -> Vector3<f64> {
                let w = f - u - v;
                (a * (w as f64) + b * (u as f64) + c * (v as f64)) / f as f64
            };
            for u in 0..f {
                for v in 0..(f - u) {
                    let p00 = intern(point(u, v), &mut vertices);
                    let p10 = intern(point(u + 1, v), &mut vertices);
                    let p01 = intern(point(u, v + 1), &mut vertices);
                    faces.push([p00, p10, p01]);
                    if u + v + 2 <= f {
                        let p11 = intern(point(u + 1, v + 1), &mut vertices);
                        faces.push([p10, p11, p01]);
                    }
                }
            }
        }
        let areas = voronoi_areas(&vertices, &faces);
        Icosphere {
            frequency,
            centers: vertices,
            areas,
            faces,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Nearest-center bin of a unit vector.
    pub fn nearest_bin(&self, n: &Vector3<f64>) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (idx, c) in self.centers.iter().enumerate() {
            let d = c.dot(n);
            if d > best_dot {
                best_dot = d;
                best = idx;
            }
        }
        best
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }
}

fn icosahedron() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let verts = vec![
        Vector3::new(-1.0, phi, 0.0),
        Vector3::new(1.0, phi, 0.0),
        Vector3::new(-1.0, -phi, 0.0),
        Vector3::new(1.0, -phi, 0.0),
        Vector3::new(0.0, -1.0, phi),
        Vector3::new(0.0, 1.0, phi),
        Vector3::new(0.0, -1.0, -phi),
        Vector3::new(0.0, 1.0, -phi),
        Vector3::new(phi, 0.0, -1.0),
        Vector3::new(phi, 0.0, 1.0),
        Vector3::new(-phi, 0.0, -1.0),
        Vector3::new(-phi, 0.0, 1.0),
    ]
    .into_iter()
    .map(|v| v.normalize())
    .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (verts, faces)
}

/// Signed spherical-triangle area (Girard excess via the van
/// Oosterom-Strackee tangent formula); positive for counter-clockwise
/// triangles seen from outside.
fn spherical_triangle_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let num = a.dot(&b.cross(c));
    let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * num.atan2(den)
}

/// Exact Voronoi-cell areas of the vertex set of a well-shaped spherical
/// triangulation: within each face the Voronoi boundary consists of arcs
/// meeting at the face's circumcenter and crossing the edges at their
/// midpoints, so each vertex collects a quadrilateral piece per incident
/// face.
fn voronoi_areas(vertices: &[Vector3<f64>], faces: &[[usize; 3]]) -> Vec<f64> {
    let mut areas = vec![0.0; vertices.len()];
    for tri in faces {
        let v = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
        // spherical circumcenter on the face side
        let mut cc = (v[1] - v[0]).cross(&(v[2] - v[0]));
        let centroid = v[0] + v[1] + v[2];
        if cc.dot(&centroid) < 0.0 {
            cc = -cc;
        }
        let cc = cc.normalize();
        for e in 0..3 {
            let p = v[e];
            let next = v[(e + 1) % 3];
            let prev = v[(e + 2) % 3];
            let m_next = (p + next).normalize();
            let m_prev = (p + prev).normalize();
            areas[tri[e]] += spherical_triangle_area(&p, &m_next, &cc)
                + spherical_triangle_area(&p, &cc, &m_prev);
        }
    }
    areas
}
