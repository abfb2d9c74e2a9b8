//! The Fourier transform on the homogeneous space of positions and
//! orientations: UIR matrix coefficients, forward transform, inversion,
//! Plancherel norm, and the spheroidal-basis coefficients.
//!
//! Matrix coefficients reduce, after rotating the spatial argument onto the
//! reference axis, to 1D oscillatory integrals
//! `JHat^s_{l,l',k}(z) = int_{-1}^{1} e^{-i z c} d^l_{ks} d^{l'}_{ks} dc`
//! evaluated by Gauss-Legendre quadrature whose order adapts to the band
//! `2 l_max + z`:
//!
//! `(sigma^{p,s}_{(x,R)})_{l',m',l,m} = 2 pi kappa_l kappa_{l'} sum_k
//!     D^l_{km}(R_x^{-1} R) conj(D^{l'}_{km'}(R_x^{-1})) JHat^s_{l,l',k}(p |x|)`.
//!
//! Normalization convention (fixed operationally by the round-trip, mass and
//! Plancherel tests): the forward transform integrates against
//! `dx dmu_{S^2}` with no prefactor, and the inversion constant is
//! `1/(8 pi^3)`. With this pair the transform of the evolution kernel is
//! exactly the diagonal exponential matrix and the convolution theorem holds
//! without stray factors.

use crate::grids::{CubeGrid, SphereGrid};
use crate::harmonics::{wigner_d_column, wigner_d_rotation, SphHarmTable};
use crate::quad::GaussLegendre;
use crate::se3::{rotation_onto, GroupElement, QuotientPoint, Rotation};
use crate::spectral::EigenSystem;
use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GhError {
    #[error("quadrature order insufficient: z = {z:.2} exceeds the resolvable band {z_max:.2}")]
    QuadratureBand { z: f64, z_max: f64 },
    #[error("index out of range: {0}")]
    Index(String),
}

/// Dual-grid layout of a G/H spectrum: radial Gauss-Legendre nodes on
/// `[0, p_max]`, integer `s` range, and the degree truncation.
#[derive(Clone, Debug)]
pub struct GhGrid {
    pub p_nodes: Vec<f64>,
    pub p_weights: Vec<f64>,
    pub p_max: f64,
    pub s_max: u32,
    pub l_max: u32,
}

impl GhGrid {
    pub fn new(p_max: f64, radial_nodes: usize, s_max: u32, l_max: u32) -> Self {
        assert!(s_max <= l_max);
        let rule = GaussLegendre::new(radial_nodes);
        let (p_nodes, p_weights) = rule.scaled(0.0, p_max);
        GhGrid {
            p_nodes,
            p_weights,
            p_max,
            s_max,
            l_max,
        }
    }

    pub fn n_l(&self) -> usize {
        (self.l_max + 1) as usize
    }

    pub fn n_s(&self) -> usize {
        (2 * self.s_max + 1) as usize
    }
}

/// Coefficient tensor `U^{p,s}_{l,0,l',0}` on a [`GhGrid`]; entries with
/// `l < |s|` or `l' < |s|` are structurally zero.
#[derive(Clone, Debug)]
pub struct GhSpectrum {
    pub grid: GhGrid,
    /// row-major over (s, p, l, l'), s from -s_max to s_max
    pub coeffs: Vec<Complex64>,
    /// fraction of input mass on the spatial boundary shell, when known
    pub boundary_fraction: Option<f64>,
}

impl GhSpectrum {
    pub fn zeros(grid: GhGrid) -> Self {
        let n = grid.n_s() * grid.p_nodes.len() * grid.n_l() * grid.n_l();
        GhSpectrum {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); n],
            boundary_fraction: None,
        }
    }

    #[inline]
    pub fn index(&self, s: i32, p_idx: usize, l: u32, lp: u32) -> usize {
        let n_l = self.grid.n_l();
        let si = (s + self.grid.s_max as i32) as usize;
        ((si * self.grid.p_nodes.len() + p_idx) * n_l + l as usize) * n_l + lp as usize
    }

    #[inline]
    pub fn get(&self, s: i32, p_idx: usize, l: u32, lp: u32) -> Complex64 {
        self.coeffs[self.index(s, p_idx, l, lp)]
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.coeffs {
            *c *= factor;
        }
    }

    /// Per-(p, s) operator composition, the right side of the convolution
    /// theorem: `(A o B)^{p,s}_{l,l'} = sum_q A_{l,q} B_{q,l'}`.
    pub fn compose(&self, other: &GhSpectrum) -> GhSpectrum {
        let g = &self.grid;
        let mut out = GhSpectrum::zeros(g.clone());
        for s in -(g.s_max as i32)..=(g.s_max as i32) {
            for p_idx in 0..g.p_nodes.len() {
                for l in s.unsigned_abs()..=g.l_max {
                    for lp in s.unsigned_abs()..=g.l_max {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for q in s.unsigned_abs()..=g.l_max {
                            acc += self.get(s, p_idx, l, q) * other.get(s, p_idx, q, lp);
                        }
                        let idx = out.index(s, p_idx, l, lp);
                        out.coeffs[idx] = acc;
                    }
                }
            }
        }
        out
    }
}

/// Tabulated Wigner-d columns at the Gauss nodes of the oscillatory rule,
/// shared by every matrix-coefficient evaluation.
pub struct JEngine {
    pub l_max: u32,
    pub s_max: u32,
    /// largest `z = p |x|` the rule resolves
    pub z_max: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// key (s, k); rows over l = l_min..=l_max, each of length n_g
    dtab: HashMap<(i32, i32), DTab>,
}

struct DTab {
    l_min: u32,
    rows: Vec<f64>,
}

fn quadrature_size(l_max: u32, z_max: f64) -> usize {
    let need = (2 * l_max) as f64 / 2.0 + 0.6 * z_max + 16.0;
    for n in [32usize, 48, 64, 96, 128, 192, 256] {
        if n as f64 >= need {
            return n;
        }
    }
    ((need / 64.0).ceil() as usize) * 64
}

impl JEngine {
    pub fn new(l_max: u32, s_max: u32, z_max: f64) -> Self {
        let n_g = quadrature_size(l_max, z_max);
        let rule = GaussLegendre::new(n_g);
        let mut dtab = HashMap::new();
        for s in -(s_max as i32)..=(s_max as i32) {
            for k in -(l_max as i32)..=(l_max as i32) {
                let l_min = s.unsigned_abs().max(k.unsigned_abs());
                if l_min > l_max {
                    continue;
                }
                let n_l = (l_max - l_min + 1) as usize;
                let mut rows = vec![0.0; n_l * n_g];
                for (g, &c) in rule.nodes.iter().enumerate() {
                    let beta = c.clamp(-1.0, 1.0).acos();
                    let col = wigner_d_column(l_max, k, s, beta);
                    for (li, &v) in col.iter().enumerate() {
                        rows[li * n_g + g] = v;
                    }
                }
                dtab.insert((s, k), DTab { l_min, rows });
            }
        }
        JEngine {
            l_max,
            s_max,
            z_max,
            nodes: rule.nodes,
            weights: rule.weights,
            dtab,
        }
    }

    pub fn n_g(&self) -> usize {
        self.nodes.len()
    }

    /// `e^{-i z c_g}` over the quadrature nodes.
    pub fn phases(&self, z: f64) -> Vec<Complex64> {
        self.nodes
            .iter()
            .map(|&c| Complex64::from_polar(1.0, -z * c))
            .collect()
    }

    fn drow(&self, s: i32, k: i32, l: u32) -> Option<&[f64]> {
        let tab = self.dtab.get(&(s, k))?;
        if l < tab.l_min || l > self.l_max {
            return None;
        }
        let n_g = self.n_g();
        let start = (l - tab.l_min) as usize * n_g;
        Some(&tab.rows[start..start + n_g])
    }

    /// `JHat^s_{l,l',k}(z)` with the phase table supplied by the caller.
    pub fn j_hat_with_phases(
        &self,
        s: i32,
        l: u32,
        lp: u32,
        k: i32,
        phases: &[Complex64],
    ) -> Complex64 {
        let (Some(da), Some(db)) = (self.drow(s, k, l), self.drow(s, k, lp)) else {
            return Complex64::new(0.0, 0.0);
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for g in 0..self.n_g() {
            acc += phases[g] * (self.weights[g] * da[g] * db[g]);
        }
        acc
    }

    pub fn j_hat(&self, s: i32, l: u32, lp: u32, k: i32, z: f64) -> Result<Complex64, GhError> {
        if z > 1.05 * self.z_max {
            return Err(GhError::QuadratureBand { z, z_max: self.z_max });
        }
        Ok(self.j_hat_with_phases(s, l, lp, k, &self.phases(z)))
    }
}

fn kappa(l: u32) -> f64 {
    ((2.0 * l as f64 + 1.0) / (4.0 * std::f64::consts::PI)).sqrt()
}

/// Full matrix coefficient `(sigma^{p,s}_g)_{l',m',l,m}`.
///
/// The `m = m' = 0` block is the one entering the quotient transform; other
/// columns exist for the axial-symmetry diagnostics.
pub fn uir_matrix_coefficient_general(
    engine: &JEngine,
    p: f64,
    s: i32,
    lp: u32,
    mp: i32,
    l: u32,
    m: i32,
    g: &GroupElement,
) -> Result<Complex64, GhError> {
    if s.unsigned_abs() > l.min(lp) || m.unsigned_abs() > l || mp.unsigned_abs() > lp {
        return Err(GhError::Index(format!(
            "require |s| <= min(l, l'), |m| <= l, |m'| <= l' (got s={s}, l={l}, l'={lp}, m={m}, m'={mp})"
        )));
    }
    let r = g.x.norm();
    let z = p * r;
    if z > 1.05 * engine.z_max {
        return Err(GhError::QuadratureBand { z, z_max: engine.z_max });
    }
    let rx = if r < 1e-300 {
        Rotation::identity()
    } else {
        rotation_onto(&(g.x / r))
    };
    let rxi = rx.transpose();
    let rot_a = rxi.compose(&g.rot);
    let phases = engine.phases(z);
    let mut acc = Complex64::new(0.0, 0.0);
    let k_cap = l.min(lp) as i32;
    for k in -k_cap..=k_cap {
        let j = engine.j_hat_with_phases(s, l, lp, k, &phases);
        if j.norm_sqr() == 0.0 {
            continue;
        }
        acc += wigner_d_rotation(l, k, m, &rot_a)
            * wigner_d_rotation(lp, k, mp, &rxi).conj()
            * j;
    }
    Ok(acc * (2.0 * std::f64::consts::PI * kappa(l) * kappa(lp)))
}

/// `(sigma^{p,s}_g)_{l',0,l,0}`, the coefficient of the quotient transform.
pub fn uir_matrix_coefficient(
    engine: &JEngine,
    p: f64,
    s: i32,
    lp: u32,
    l: u32,
    g: &GroupElement,
) -> Result<Complex64, GhError> {
    uir_matrix_coefficient_general(engine, p, s, lp, 0, l, 0, g)
}

/// A callable field on the quotient with declared bandlimits, used to build
/// sampled inputs for the transform.
pub struct SymFunction {
    pub support_radius: f64,
    pub l_max: u32,
    f: Box<dyn Fn(&Vector3<f64>, &Vector3<f64>) -> f64 + Sync + Send>,
}

impl SymFunction {
    pub fn new(
        support_radius: f64,
        l_max: u32,
        f: impl Fn(&Vector3<f64>, &Vector3<f64>) -> f64 + Sync + Send + 'static,
    ) -> Self {
        SymFunction {
            support_radius,
            l_max,
            f: Box::new(f),
        }
    }

    pub fn eval(&self, x: &Vector3<f64>, n: &Vector3<f64>) -> f64 {
        (self.f)(x, n)
    }

    /// Largest deviation `|U(x,n) - U(R x, R n)|` over random axis rotations.
    pub fn symmetry_defect(&self, samples: u32) -> f64 {
        let mut worst = 0.0f64;
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..samples {
            let x = Vector3::new(next() - 0.5, next() - 0.5, next() - 0.5) * self.support_radius;
            let n = Vector3::new(next() - 0.5, next() - 0.5, next() - 0.5).normalize();
            let alpha = next() * 2.0 * std::f64::consts::PI;
            let rot = Rotation::about_z(alpha);
            let d = (self.eval(&x, &n) - self.eval(&rot.apply(&x), &rot.apply(&n))).abs();
            worst = worst.max(d);
        }
        worst
    }

    pub fn sample(&self, grid: &CubeGrid, sphere: &SphereGrid) -> QuotientGridField {
        let mut values = vec![0.0; grid.len() * sphere.len()];
        let n_ang = sphere.len();
        for (i, j, k) in grid.iter_indices() {
            let x = grid.center(i, j, k);
            let base = grid.flat_index(i, j, k) * n_ang;
            for (q, n) in sphere.points.iter().enumerate() {
                values[base + q] = self.eval(&x, n);
            }
        }
        QuotientGridField {
            grid: *grid,
            sphere: sphere.clone(),
            values,
        }
    }
}

/// A real field sampled on cube-grid centers times a spherical quadrature grid.
#[derive(Clone, Debug)]
pub struct QuotientGridField {
    pub grid: CubeGrid,
    pub sphere: SphereGrid,
    pub values: Vec<f64>,
}

impl QuotientGridField {
    #[inline]
    pub fn value(&self, x_idx: usize, q: usize) -> f64 {
        self.values[x_idx * self.sphere.len() + q]
    }

    /// `int int |U|^2 dx dmu(n)` by the grid quadrature.
    pub fn norm_squared(&self) -> f64 {
        let dv = self.grid.cell_volume();
        let n_ang = self.sphere.len();
        let mut acc = 0.0;
        for xi in 0..self.grid.len() {
            for q in 0..n_ang {
                acc += self.value(xi, q) * self.value(xi, q) * self.sphere.weights[q];
            }
        }
        acc * dv
    }

    /// Fraction of absolute mass sitting on the outermost cell shell.
    pub fn boundary_fraction(&self) -> f64 {
        let n_ang = self.sphere.len();
        let mut total = 0.0;
        let mut boundary = 0.0;
        for (i, j, k) in self.grid.iter_indices() {
            let on_boundary =
                i.abs() == self.grid.ni || j.abs() == self.grid.nj || k.abs() == self.grid.nk;
            let xi = self.grid.flat_index(i, j, k);
            for q in 0..n_ang {
                let v = self.value(xi, q).abs() * self.sphere.weights[q];
                total += v;
                if on_boundary {
                    boundary += v;
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            boundary / total
        }
    }
}

/// Forward transform of a sampled field.
///
/// `U^{p,s}_{l,0,l',0} = int int U(x,n) conj((sigma^{p,s}_{(x,R_n)})_{l',0,l,0}) dmu(n) dx`.
pub fn gh_forward(field: &QuotientGridField, grid: &GhGrid, engine: &JEngine) -> GhSpectrum {
    let l_max = grid.l_max;
    let s_max = grid.s_max as i32;
    let n_l = grid.n_l();
    let n_p = grid.p_nodes.len();
    let dv = field.grid.cell_volume();
    let two_pi = 2.0 * std::f64::consts::PI;
    let boundary = field.boundary_fraction();
    if boundary > 1e-6 {
        log::warn!(
            "gh_forward: {boundary:.2e} of the input mass sits on the grid boundary; \
             coefficients are support-truncated"
        );
    }

    // angular moments T_{l,k}(x) = sum_n w_n U(x,n) Y^{l,k}(R_x^-1 n)
    let centers = field.grid.centers();
    let moments: Vec<Vec<Complex64>> = (0..field.grid.len())
        .into_par_iter()
        .map(|xi| {
            let x = centers[xi];
            let r = x.norm();
            let rx = if r < 1e-300 {
                Rotation::identity()
            } else {
                rotation_onto(&(x / r))
            };
            let mut tab_t =
                vec![Complex64::new(0.0, 0.0); (l_max as usize + 1) * (2 * l_max as usize + 1)];
            for (q, n) in field.sphere.points.iter().enumerate() {
                let w = field.sphere.weights[q] * field.value(xi, q);
                if w == 0.0 {
                    continue;
                }
                let nu = rx.apply_inverse(n);
                let table = SphHarmTable::build(l_max, &nu);
                for l in 0..=l_max {
                    for k in -(l as i32)..=(l as i32) {
                        tab_t[l as usize * (2 * l_max as usize + 1)
                            + (k + l_max as i32) as usize] += table.get(l, k) * w;
                    }
                }
            }
            tab_t
        })
        .collect();

    // radius classes share the oscillatory tables
    let classes = field.grid.radius_classes();
    let width = 2 * l_max as usize + 1;
    let partials: Vec<Vec<Complex64>> = classes
        .par_iter()
        .map(|(radius, xs)| {
            let mut part = vec![Complex64::new(0.0, 0.0); (2 * s_max + 1) as usize * n_p * n_l * n_l];
            // mu and Y(mu) tables per member of the class
            let mu_tabs: Vec<SphHarmTable> = xs
                .iter()
                .map(|&xi| {
                    let x = centers[xi];
                    let r = x.norm();
                    let rx = if r < 1e-300 {
                        Rotation::identity()
                    } else {
                        rotation_onto(&(x / r))
                    };
                    SphHarmTable::build(l_max, &rx.apply_inverse(&crate::se3::reference_axis()))
                })
                .collect();
            // conj phases per p node
            let conj_phases: Vec<Vec<Complex64>> = grid
                .p_nodes
                .iter()
                .map(|&p| {
                    engine
                        .phases(p * radius)
                        .into_iter()
                        .map(|c| c.conj())
                        .collect()
                })
                .collect();
            for s in -s_max..=s_max {
                let sa = s.unsigned_abs();
                for k in -(l_max as i32)..=(l_max as i32) {
                    let l_min = sa.max(k.unsigned_abs());
                    if l_min > l_max {
                        continue;
                    }
                    let nl_blk = (l_max - l_min + 1) as usize;
                    // class-accumulated products sum_x w_x T_{l,k}(x) conj(Y^{l',k}(mu_x))
                    let mut acc = vec![Complex64::new(0.0, 0.0); nl_blk * nl_blk];
                    for (xc, &xi) in xs.iter().enumerate() {
                        let mu_tab = &mu_tabs[xc];
                        for l in l_min..=l_max {
                            let t_lk =
                                moments[xi][l as usize * width + (k + l_max as i32) as usize];
                            if t_lk.norm_sqr() == 0.0 {
                                continue;
                            }
                            let ia = (l - l_min) as usize;
                            for lp in l_min..=l_max {
                                acc[ia * nl_blk + (lp - l_min) as usize] +=
                                    t_lk * mu_tab.get(lp, k).conj();
                            }
                        }
                    }
                    // contract with conj(JHat)(p_i radius) once per class
                    let base = ((s + s_max) as usize * n_p) * n_l * n_l;
                    for (i, ph) in conj_phases.iter().enumerate() {
                        for la in l_min..=l_max {
                            for lb in la..=l_max {
                                let v = engine.j_hat_with_phases(s, la, lb, k, ph);
                                let ia = (la - l_min) as usize;
                                let ib = (lb - l_min) as usize;
                                let w1 = acc[ia * nl_blk + ib];
                                part[base + (i * n_l + la as usize) * n_l + lb as usize] +=
                                    v * w1 * (two_pi * dv);
                                if la != lb {
                                    let w2 = acc[ib * nl_blk + ia];
                                    part[base + (i * n_l + lb as usize) * n_l + la as usize] +=
                                        v * w2 * (two_pi * dv);
                                }
                            }
                        }
                    }
                }
            }
            part
        })
        .collect();

    let mut out = GhSpectrum::zeros(grid.clone());
    for part in partials {
        for (dst, src) in out.coeffs.iter_mut().zip(part) {
            *dst += src;
        }
    }
    out.boundary_fraction = Some(boundary);
    out
}

/// Pointwise inversion: `U(x,n) = 1/(8 pi^3) sum_s sum_{l,l'} int U^{p,s}_{l,l'}
/// (sigma^{p,s}_{(x,R_n)})_{l',0,l,0} p^2 dp`.
pub fn gh_inverse_point(
    spec: &GhSpectrum,
    engine: &JEngine,
    x: &Vector3<f64>,
    n: &Vector3<f64>,
) -> Complex64 {
    let g = &spec.grid;
    let r = x.norm();
    let rx = if r < 1e-300 {
        Rotation::identity()
    } else {
        rotation_onto(&(x / r))
    };
    let nu_tab = SphHarmTable::build(g.l_max, &rx.apply_inverse(n));
    let mu_tab = SphHarmTable::build(g.l_max, &rx.apply_inverse(&crate::se3::reference_axis()));
    let s_max = g.s_max as i32;
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, (&p, &wp)) in g.p_nodes.iter().zip(&g.p_weights).enumerate() {
        let phases = engine.phases(p * r);
        for s in -s_max..=s_max {
            let sa = s.unsigned_abs();
            for k in -(g.l_max as i32)..=(g.l_max as i32) {
                let l_min = sa.max(k.unsigned_abs());
                if l_min > g.l_max {
                    continue;
                }
                for l in l_min..=g.l_max {
                    let yl = nu_tab.get(l, k).conj();
                    for lp in l_min..=g.l_max {
                        let u = spec.get(s, i, l, lp);
                        if u.norm_sqr() == 0.0 {
                            continue;
                        }
                        let j = engine.j_hat_with_phases(s, l, lp, k, &phases);
                        acc += u * yl * mu_tab.get(lp, k) * j * (wp * p * p);
                    }
                }
            }
        }
    }
    acc * (2.0 * std::f64::consts::PI / (8.0 * std::f64::consts::PI.powi(3)))
}

/// Field-level inversion on cube-grid centers times an orientation list.
/// Returns values in (x, orientation) order.
pub fn gh_inverse_field(
    spec: &GhSpectrum,
    engine: &JEngine,
    grid: &CubeGrid,
    orientations: &[Vector3<f64>],
) -> Vec<Complex64> {
    let g = &spec.grid;
    let s_max = g.s_max as i32;
    let l_max = g.l_max;
    let n_or = orientations.len();
    let centers = grid.centers();
    let classes = grid.radius_classes();
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len() * n_or];
    let chunks: Vec<(Vec<usize>, Vec<Complex64>)> = classes
        .par_iter()
        .map(|(radius, xs)| {
            // radial contraction I^{s,k}_{l,l'} = sum_i w_i p_i^2 U^{(i)} JHat(p_i radius)
            let phases: Vec<Vec<Complex64>> = g
                .p_nodes
                .iter()
                .map(|&p| engine.phases(p * radius))
                .collect();
            let mut itab: HashMap<(i32, i32), Vec<Complex64>> = HashMap::new();
            for s in -s_max..=s_max {
                let sa = s.unsigned_abs();
                for k in -(l_max as i32)..=(l_max as i32) {
                    let l_min = sa.max(k.unsigned_abs());
                    if l_min > l_max {
                        continue;
                    }
                    let nl_blk = (l_max - l_min + 1) as usize;
                    let mut tab = vec![Complex64::new(0.0, 0.0); nl_blk * nl_blk];
                    for (i, ph) in phases.iter().enumerate() {
                        let w = g.p_weights[i] * g.p_nodes[i] * g.p_nodes[i];
                        for la in l_min..=l_max {
                            for lb in l_min..=l_max {
                                let u = spec.get(s, i, la, lb);
                                if u.norm_sqr() == 0.0 {
                                    continue;
                                }
                                let j = engine.j_hat_with_phases(s, la, lb, k, ph);
                                tab[((la - l_min) as usize) * nl_blk + (lb - l_min) as usize] +=
                                    u * j * w;
                            }
                        }
                    }
                    itab.insert((s, k), tab);
                }
            }
            let scale = 2.0 * std::f64::consts::PI / (8.0 * std::f64::consts::PI.powi(3));
            let mut vals = vec![Complex64::new(0.0, 0.0); xs.len() * n_or];
            for (xc, &xi) in xs.iter().enumerate() {
                let x = centers_of(&centers, xi);
                let r = x.norm();
                let rx = if r < 1e-300 {
                    Rotation::identity()
                } else {
                    rotation_onto(&(x / r))
                };
                let mu_tab =
                    SphHarmTable::build(l_max, &rx.apply_inverse(&crate::se3::reference_axis()));
                // contract the l'-index with Y(mu) once per x
                let mut folded: Vec<((i32, i32), u32, Vec<Complex64>)> = Vec::new();
                for s in -s_max..=s_max {
                    let sa = s.unsigned_abs();
                    for k in -(l_max as i32)..=(l_max as i32) {
                        let l_min = sa.max(k.unsigned_abs());
                        if l_min > l_max {
                            continue;
                        }
                        let nl_blk = (l_max - l_min + 1) as usize;
                        let tab = &itab[&(s, k)];
                        let mut w = vec![Complex64::new(0.0, 0.0); nl_blk];
                        for la in l_min..=l_max {
                            let mut row = Complex64::new(0.0, 0.0);
                            for lb in l_min..=l_max {
                                let t = tab
                                    [((la - l_min) as usize) * nl_blk + (lb - l_min) as usize];
                                row += t * mu_tab.get(lb, k);
                            }
                            w[(la - l_min) as usize] = row;
                        }
                        folded.push(((s, k), l_min, w));
                    }
                }
                for (oq, nvec) in orientations.iter().enumerate() {
                    let nu_tab = SphHarmTable::build(l_max, &rx.apply_inverse(nvec));
                    let mut acc = Complex64::new(0.0, 0.0);
                    for ((_s, k), l_min, w) in &folded {
                        for (off, wv) in w.iter().enumerate() {
                            acc += nu_tab.get(l_min + off as u32, *k).conj() * wv;
                        }
                    }
                    vals[xc * n_or + oq] = acc * scale;
                }
            }
            (xs.clone(), vals)
        })
        .collect();
    for (xs, vals) in chunks {
        for (xc, &xi) in xs.iter().enumerate() {
            out[xi * n_or..(xi + 1) * n_or]
                .copy_from_slice(&vals[xc * n_or..(xc + 1) * n_or]);
        }
    }
    out
}

fn centers_of(centers: &[Vector3<f64>], idx: usize) -> Vector3<f64> {
    centers[idx]
}

/// `|F U|^2 = 1/(8 pi^3) sum_s int sum_{l,l'} |U^{p,s}_{l,l'}|^2 p^2 dp`;
/// equals the squared L2 norm of the field for the transform's conventions.
pub fn plancherel_norm(spec: &GhSpectrum) -> f64 {
    let g = &spec.grid;
    let s_max = g.s_max as i32;
    let mut acc = 0.0;
    for s in -s_max..=s_max {
        for (i, (&p, &wp)) in g.p_nodes.iter().zip(&g.p_weights).enumerate() {
            let mut block = 0.0;
            for l in s.unsigned_abs()..=g.l_max {
                for lp in s.unsigned_abs()..=g.l_max {
                    block += spec.get(s, i, l, lp).norm_sqr();
                }
            }
            acc += block * wp * p * p;
        }
    }
    acc / (8.0 * std::f64::consts::PI.powi(3))
}

/// Diagonal matrix coefficient in the spheroidal basis:
/// `<sigma^{p,s}_{(x,R_n)} Phi^{l,s}_{pa}, Phi^{l,s}_{pa}>`, obtained from the
/// Y-basis block by the eigenvector transform.
pub fn spheroidal_gh_coefficient(
    engine: &JEngine,
    p: f64,
    s: i32,
    l: u32,
    point: &QuotientPoint,
    sys: &EigenSystem,
) -> Result<Complex64, GhError> {
    let sa = s.unsigned_abs();
    if l < sa {
        return Err(GhError::Index(format!("need l >= |s| (got l={l}, s={s})")));
    }
    let coeffs = sys.coefficients(l);
    let g = GroupElement::new(point.x, rotation_onto(&point.n));
    let l_cap = engine.l_max;
    let mut acc = Complex64::new(0.0, 0.0);
    for (j1, &c1) in coeffs.iter().enumerate() {
        let l1 = sa + j1 as u32;
        if l1 > l_cap || c1 == 0.0 {
            continue;
        }
        for (j2, &c2) in coeffs.iter().enumerate() {
            let l2 = sa + j2 as u32;
            if l2 > l_cap || c2 == 0.0 {
                continue;
            }
            acc += uir_matrix_coefficient(engine, p, s, l1, l2, &g)? * (c1 * c2);
        }
    }
    Ok(acc)
}
