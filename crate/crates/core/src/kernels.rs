//! Exact evaluation of the alpha-stable kernels by both spectral routes, the
//! elliptic extension, evolution of initial data, and the shift-twist
//! convolution.
//!
//! The spatial route evaluates
//! `Kbar(w, n) = sum_{l,m} weight(lambda^{l,m}_r) conj(Phi^{l,m}_w(a)) Phi^{l,m}_w(n)`
//! on the discrete Fourier grid dual to the cube grid (zero-padded), then
//! applies the inverse FFT with the `1/(2 pi)^3` convention. The quotient
//! route synthesizes the same kernel from its exactly-diagonal transform via
//! the inversion formula. Elliptic parameters (`D11 > 0`) enter through the
//! substitution `D33 -> D33 - D11` in the generator plus the eigenvalue shift
//! `lambda -> lambda - D11 r^2`, the spectral form of the article's frequency
//! rescale.

use crate::ghft::{gh_inverse_field, gh_inverse_point, GhGrid, GhSpectrum, JEngine, QuotientGridField};
use crate::grids::{CubeGrid, Icosphere};
use crate::harmonics::{wigner_d_column, SphHarmTable};
use crate::se3::{rotation_onto, Rotation};
use crate::spectral::EigenTable;
use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
}

/// Parameters of the evolution generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionParams {
    pub alpha: f64,
    pub t: f64,
    pub d11: f64,
    pub d33: f64,
    pub d44: f64,
}

impl EvolutionParams {
    pub fn new(alpha: f64, t: f64, d11: f64, d33: f64, d44: f64) -> Result<Self, KernelError> {
        let p = EvolutionParams {
            alpha,
            t,
            d11,
            d33,
            d44,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(KernelError::Parameter(format!(
                "alpha must lie in (0, 1] (got {})",
                self.alpha
            )));
        }
        if self.t < 0.0 {
            return Err(KernelError::Parameter(format!(
                "t must be nonnegative (got {})",
                self.t
            )));
        }
        if !(self.d33 > self.d11 && self.d11 >= 0.0) {
            return Err(KernelError::Parameter(format!(
                "diffusivities must satisfy D33 > D11 >= 0 (got D33 = {}, D11 = {})",
                self.d33, self.d11
            )));
        }
        if self.d44 <= 0.0 {
            return Err(KernelError::Parameter(format!(
                "D44 must be positive (got {})",
                self.d44
            )));
        }
        Ok(())
    }
}

/// Spectral rewrite taking the hypo-elliptic machinery to `D11 > 0`:
/// frequencies rescale by `sqrt((D33 - D11)/D33)` and eigenvalues shift by
/// `-D11 r^2` before the fractional power.
#[derive(Clone, Copy, Debug)]
pub struct SpectralRewrite {
    pub r_scale: f64,
    pub d11: f64,
}

pub fn elliptic_from_hypoelliptic(params: &EvolutionParams) -> Result<SpectralRewrite, KernelError> {
    params.validate()?;
    Ok(SpectralRewrite {
        r_scale: ((params.d33 - params.d11) / params.d33).sqrt(),
        d11: params.d11,
    })
}

/// Time weight applied to a nonnegative generator eigenvalue.
pub enum TimeWeight<'a> {
    /// `exp(-lambda^alpha t)`
    Fractional { alpha: f64, t: f64 },
    /// arbitrary map `lambda -> weight`, e.g. a subordination quadrature
    Custom(&'a (dyn Fn(f64) -> f64 + Sync)),
}

impl TimeWeight<'_> {
    #[inline]
    pub fn eval(&self, lambda_abs: f64) -> f64 {
        match self {
            TimeWeight::Fractional { alpha, t } => {
                if *alpha == 1.0 {
                    (-lambda_abs * t).exp()
                } else {
                    (-lambda_abs.powf(*alpha) * t).exp()
                }
            }
            TimeWeight::Custom(f) => f(lambda_abs),
        }
    }
}

/// A kernel represented by its angular coefficients over ordinary harmonics:
/// `K(x_i, n) = Re sum_{L,M} gamma_{L,M}(x_i) Y^{L,M}(n)`.
#[derive(Clone, Debug)]
pub struct AngularKernelField {
    pub grid: CubeGrid,
    pub l_field: u32,
    /// (x, (L,M)) order, index `L(L+1)+M` in the angular slot
    pub coeffs: Vec<Complex64>,
    pub params: EvolutionParams,
    /// largest |imaginary part| left by the inverse FFT, relative to the max
    pub imag_residue: f64,
}

impl AngularKernelField {
    fn n_ang(&self) -> usize {
        ((self.l_field + 1) * (self.l_field + 1)) as usize
    }

    pub fn coeff_slice(&self, xi: usize) -> &[Complex64] {
        let n = self.n_ang();
        &self.coeffs[xi * n..(xi + 1) * n]
    }

    /// Kernel value at a grid center and arbitrary orientation.
    pub fn eval(&self, xi: usize, table: &SphHarmTable) -> f64 {
        debug_assert!(table.l_max >= self.l_field);
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, c) in self.coeff_slice(xi).iter().enumerate() {
            if c.norm_sqr() != 0.0 {
                let (l, m) = ang_unindex(idx);
                acc += c * table.get(l, m);
            }
        }
        acc.re
    }

    /// Samples the field on an orientation list.
    pub fn sample(&self, orientations: &[Vector3<f64>]) -> Vec<f64> {
        let tables: Vec<SphHarmTable> = orientations
            .iter()
            .map(|n| SphHarmTable::build(self.l_field, n))
            .collect();
        let n_or = orientations.len();
        let mut out = vec![0.0; self.grid.len() * n_or];
        out.par_chunks_mut(n_or).enumerate().for_each(|(xi, row)| {
            for (q, table) in tables.iter().enumerate() {
                row[q] = self.eval(xi, table);
            }
        });
        out
    }

    /// Bin-averaged sampling over icosphere Voronoi cells, second order by a
    /// centroid rule on the sub-triangles of each cell.
    pub fn sample_bin_averaged(&self, ico: &Icosphere) -> Vec<f64> {
        // collect (bin, weight, point) sub-samples from the Voronoi pieces
        let mut subs: Vec<(usize, f64, Vector3<f64>)> = Vec::new();
        for tri in ico.faces() {
            let v = [ico.centers[tri[0]], ico.centers[tri[1]], ico.centers[tri[2]]];
            let mut cc = (v[1] - v[0]).cross(&(v[2] - v[0]));
            if cc.dot(&(v[0] + v[1] + v[2])) < 0.0 {
                cc = -cc;
            }
            let cc = cc.normalize();
            for e in 0..3 {
                let p = v[e];
                let m_next = (p + v[(e + 1) % 3]).normalize();
                let m_prev = (p + v[(e + 2) % 3]).normalize();
                for (a, b) in [(m_next, cc), (cc, m_prev)] {
                    let area = spherical_area(&p, &a, &b);
                    let centroid = (p + a + b).normalize();
                    subs.push((tri[e], area, centroid));
                }
            }
        }
        let tables: Vec<SphHarmTable> = subs
            .par_iter()
            .map(|(_, _, c)| SphHarmTable::build(self.l_field, c))
            .collect();
        let n_or = ico.len();
        let mut out = vec![0.0; self.grid.len() * n_or];
        out.par_chunks_mut(n_or).enumerate().for_each(|(xi, row)| {
            for ((bin, area, _), table) in subs.iter().zip(&tables) {
                row[*bin] += area * self.eval(xi, table);
            }
        });
        for row in out.chunks_mut(n_or) {
            for (v, a) in row.iter_mut().zip(&ico.areas) {
                *v /= a;
            }
        }
        out
    }

    /// Angular coefficients trilinearly interpolated at an arbitrary point;
    /// zero outside the grid.
    pub fn coeffs_at(&self, y: &Vector3<f64>, out: &mut [Complex64]) {
        let n = self.n_ang();
        for v in out.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        let g = &self.grid;
        let fx = y.x / g.ds;
        let fy = y.y / g.ds;
        let fz = y.z / g.ds;
        let i0 = fx.floor() as i32;
        let j0 = fy.floor() as i32;
        let k0 = fz.floor() as i32;
        let (tx, ty, tz) = (fx - i0 as f64, fy - j0 as f64, fz - k0 as f64);
        for di in 0..2 {
            for dj in 0..2 {
                for dk in 0..2 {
                    let (i, j, k) = (i0 + di, j0 + dj, k0 + dk);
                    if i.abs() > g.ni || j.abs() > g.nj || k.abs() > g.nk {
                        continue;
                    }
                    let w = (if di == 0 { 1.0 - tx } else { tx })
                        * (if dj == 0 { 1.0 - ty } else { ty })
                        * (if dk == 0 { 1.0 - tz } else { tz });
                    if w == 0.0 {
                        continue;
                    }
                    let slice = self.coeff_slice(g.flat_index(i, j, k));
                    for (dst, src) in out.iter_mut().zip(slice) {
                        *dst += src * w;
                    }
                }
            }
        }
        let _ = n;
    }

    /// Total mass `int int K dx dmu(n)` from the isotropic coefficient.
    pub fn mass(&self) -> f64 {
        let n = self.n_ang();
        let mut acc = 0.0;
        for xi in 0..self.grid.len() {
            acc += self.coeffs[xi * n].re;
        }
        acc * self.grid.cell_volume() * (4.0 * std::f64::consts::PI).sqrt()
    }
}

#[inline]
fn ang_index(l: u32, m: i32) -> usize {
    ((l * (l + 1)) as i64 + m as i64) as usize
}

fn ang_unindex(idx: usize) -> (u32, i32) {
    let l = (idx as f64).sqrt() as u32;
    let m = idx as i64 - (l * (l + 1)) as i64;
    (l, m as i32)
}

fn spherical_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let num = a.dot(&b.cross(c));
    let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    (2.0 * num.atan2(den)).abs()
}

/// Frequency grid of the padded DFT dual to a cube grid.
pub struct FrequencyGrid {
    pub dims: [usize; 3],
    pub dw: [f64; 3],
}

impl FrequencyGrid {
    pub fn new(grid: &CubeGrid, pad: usize) -> Self {
        let (nx, ny, nz) = grid.dims();
        // odd transform lengths keep the frequency set exactly symmetric
        // under negation (no unpaired Nyquist row)
        let odd = |n: usize| if n % 2 == 0 { n + 1 } else { n };
        let dims = [odd(nx * pad), odd(ny * pad), odd(nz * pad)];
        let dw = [
            2.0 * std::f64::consts::PI / (dims[0] as f64 * grid.ds),
            2.0 * std::f64::consts::PI / (dims[1] as f64 * grid.ds),
            2.0 * std::f64::consts::PI / (dims[2] as f64 * grid.ds),
        ];
        FrequencyGrid { dims, dw }
    }

    #[inline]
    pub fn omega(&self, idx: [usize; 3]) -> Vector3<f64> {
        let f = |i: usize, d: usize| -> f64 {
            let n = self.dims[d] as i64;
            let k = i as i64;
            let k = if k <= n / 2 { k } else { k - n };
            k as f64 * self.dw[d]
        };
        Vector3::new(f(idx[0], 0), f(idx[1], 1), f(idx[2], 2))
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nyquist radius of the shortest axis.
    pub fn nyquist(&self, ds: f64) -> f64 {
        std::f64::consts::PI / ds
    }
}

/// Options of the spatial-Fourier kernel construction.
#[derive(Clone, Copy, Debug)]
pub struct SpatialOptions {
    pub l_max: u32,
    pub j_max: usize,
    /// zero-padding factor of the FFT grid
    pub pad: usize,
    /// multiply the spectrum by the cell box filter, yielding cell averages
    pub cell_average: bool,
}

impl SpatialOptions {
    pub fn new(l_max: u32) -> Self {
        SpatialOptions {
            l_max,
            j_max: 2 * l_max as usize,
            pad: 2,
            cell_average: false,
        }
    }
}

/// Exact kernel by the spatial-Fourier route; returns the angular coefficient
/// field on the (unpadded) grid.
pub fn kernel_spatial_fourier(
    params: &EvolutionParams,
    grid: &CubeGrid,
    opts: &SpatialOptions,
) -> Result<AngularKernelField, KernelError> {
    params.validate()?;
    let weight = TimeWeight::Fractional {
        alpha: params.alpha,
        t: params.t,
    };
    kernel_spatial_fourier_weighted(params, grid, opts, &weight)
}

/// Same construction with an arbitrary eigenvalue weight (the fractional
/// exponential, a subordination quadrature, ...). The weight receives
/// `|lambda| + D11 r^2` with `lambda` taken from the `D33 - D11` generator.
pub fn kernel_spatial_fourier_weighted(
    params: &EvolutionParams,
    grid: &CubeGrid,
    opts: &SpatialOptions,
    weight: &TimeWeight,
) -> Result<AngularKernelField, KernelError> {
    let d33_eff = params.d33 - params.d11;
    let fgrid = FrequencyGrid::new(grid, opts.pad);
    let l_max = opts.l_max;
    let l_field = l_max + opts.j_max as u32 - 1;
    let n_ang = ((l_field + 1) * (l_field + 1)) as usize;

    // aliasing check at the Nyquist radius, for the slowest mode
    let r_nyq = fgrid.nyquist(grid.ds);
    let boundary_sys = crate::spectral::eigensystem(0, r_nyq, d33_eff, params.d44, opts.j_max)?;
    let boundary_weight = weight.eval(boundary_sys.lambda(0).abs() + params.d11 * r_nyq * r_nyq);
    if boundary_weight > 1e-8 {
        log::warn!(
            "spatial kernel: spectrum at the Nyquist radius still carries weight {boundary_weight:.2e}; \
             the grid aliases (refine ds or shrink t)"
        );
    }

    // eigensystems over the distinct radii of the frequency grid
    let mut radii: Vec<u64> = Vec::with_capacity(fgrid.len());
    for ix in 0..fgrid.dims[0] {
        for iy in 0..fgrid.dims[1] {
            for iz in 0..fgrid.dims[2] {
                radii.push(fgrid.omega([ix, iy, iz]).norm().to_bits());
            }
        }
    }
    let mut unique = radii.clone();
    unique.sort_unstable();
    unique.dedup();
    let radii_f: Vec<f64> = unique.iter().map(|&b| f64::from_bits(b)).collect();
    let table = EigenTable::build(&radii_f, l_max, d33_eff, params.d44, opts.j_max)?;

    // per-frequency angular coefficients B_{L,M}(w)
    let n_w = fgrid.len();
    let spectra: Vec<Vec<Complex64>> = (0..n_w)
        .into_par_iter()
        .map(|widx| {
            let iz = widx % fgrid.dims[2];
            let iy = (widx / fgrid.dims[2]) % fgrid.dims[1];
            let ix = widx / (fgrid.dims[2] * fgrid.dims[1]);
            let omega = fgrid.omega([ix, iy, iz]);
            let r = omega.norm();
            let mut out = vec![Complex64::new(0.0, 0.0); n_ang];
            angular_spectrum_at(
                &omega,
                r,
                params,
                weight,
                &table,
                l_max,
                opts.j_max,
                l_field,
                &mut out,
            );
            if opts.cell_average {
                let s = |w: f64| {
                    let h = 0.5 * w * grid.ds;
                    if h.abs() < 1e-12 {
                        1.0
                    } else {
                        h.sin() / h
                    }
                };
                let f = s(omega.x) * s(omega.y) * s(omega.z);
                for v in &mut out {
                    *v *= f;
                }
            }
            out
        })
        .collect();

    // inverse FFT per angular mode
    let scale = 1.0 / (fgrid.dims[0] * fgrid.dims[1] * fgrid.dims[2]) as f64 / grid.ds.powi(3);
    let mut planner = FftPlanner::new();
    let ffts = [
        planner.plan_fft_inverse(fgrid.dims[0]),
        planner.plan_fft_inverse(fgrid.dims[1]),
        planner.plan_fft_inverse(fgrid.dims[2]),
    ];
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len() * n_ang];
    let mut imag_residue = 0.0f64;
    let mut max_abs = 0.0f64;
    // move the angular index outermost for the transforms
    let mut work: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n_w];
    for ang in 0..n_ang {
        let mut any = false;
        for (w, spec_row) in work.iter_mut().zip(&spectra) {
            *w = spec_row[ang];
            any |= w.norm_sqr() != 0.0;
        }
        if !any {
            continue;
        }
        ifft3(&mut work, &fgrid.dims, &ffts);
        for (i, j, k) in grid.iter_indices() {
            let wi = wrap(i, fgrid.dims[0]);
            let wj = wrap(j, fgrid.dims[1]);
            let wk = wrap(k, fgrid.dims[2]);
            let v = work[(wi * fgrid.dims[1] + wj) * fgrid.dims[2] + wk] * scale;
            coeffs[grid.flat_index(i, j, k) * n_ang + ang] = v;
        }
    }

    // a real kernel keeps gamma_{L,-M} = (-1)^M conj(gamma_{L,M}); measure the
    // defect through the synthesized imaginary part at the reference axis
    let a_table = SphHarmTable::build(l_field, &crate::se3::reference_axis());
    for xi in 0..grid.len() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, c) in coeffs[xi * n_ang..(xi + 1) * n_ang].iter().enumerate() {
            let (l, m) = ang_unindex(idx);
            acc += c * a_table.get(l, m);
        }
        imag_residue = imag_residue.max(acc.im.abs());
        max_abs = max_abs.max(acc.re.abs());
    }
    let imag_residue = if max_abs > 0.0 {
        imag_residue / max_abs
    } else {
        0.0
    };
    if imag_residue > 1e-8 {
        log::warn!("spatial kernel: imaginary residue {imag_residue:.2e} of the on-axis maximum");
    }
    Ok(AngularKernelField {
        grid: *grid,
        l_field,
        coeffs,
        params: *params,
        imag_residue,
    })
}

/// Angular spectrum of the evolution at one frequency, written over ordinary
/// harmonics in the fixed frame.
#[allow(clippy::too_many_arguments)]
fn angular_spectrum_at(
    omega: &Vector3<f64>,
    r: f64,
    params: &EvolutionParams,
    weight: &TimeWeight,
    table: &EigenTable,
    l_max: u32,
    j_max: usize,
    l_field: u32,
    out: &mut [Complex64],
) {
    let frame = crate::harmonics::rotation_to_frequency_frame(&crate::harmonics::FrequencyVector {
        omega: *omega,
        r,
    });
    let a_rot = frame.apply_inverse(&crate::se3::reference_axis());
    let a_tab = SphHarmTable::build(l_field, &a_rot);
    let d11r2 = params.d11 * r * r;
    // beta_{m,L} = sum_l weight conj(Phi^{l,m}(a)) c^{l,m}_{L-|m|}
    let width = (l_field + 1) as usize;
    let mut beta = vec![Complex64::new(0.0, 0.0); (2 * l_max as usize + 1) * width];
    for m in -(l_max as i32)..=(l_max as i32) {
        let sys = table.get(m, r);
        let m_abs = m.unsigned_abs();
        for l in m_abs..=l_max {
            let w = weight.eval(sys.lambda(l).abs() + d11r2);
            if w < 1e-300 {
                continue;
            }
            let c = sys.coefficients(l);
            // conj(Phi^{l,m}(a)) in the adapted frame
            let mut phi_a = Complex64::new(0.0, 0.0);
            for (j, &cj) in c.iter().enumerate() {
                let ll = m_abs + j as u32;
                if ll > l_field {
                    break;
                }
                phi_a += a_tab.get(ll, m) * cj;
            }
            let f = phi_a.conj() * w;
            let row = (m + l_max as i32) as usize * width;
            for (j, &cj) in c.iter().enumerate() {
                let ll = m_abs + j as u32;
                if ll > l_field {
                    break;
                }
                beta[row + ll as usize] += f * cj;
            }
        }
    }
    // rotate to the fixed frame: B_{L,M} = sum_m beta_{m,L} D^L_{Mm}(R_w)
    let (al, be, ga) = frame.euler_zyz();
    for m in -(l_max as i32)..=(l_max as i32) {
        let row = (m + l_max as i32) as usize * width;
        let e_m = Complex64::from_polar(1.0, -(m as f64) * ga);
        for cap_m in -(l_field as i32)..=(l_field as i32) {
            let l0 = cap_m.unsigned_abs().max(m.unsigned_abs());
            if l0 > l_field {
                continue;
            }
            let dcol = wigner_d_column(l_field, cap_m, m, be);
            let e_cm = Complex64::from_polar(1.0, -(cap_m as f64) * al) * e_m;
            for (off, d) in dcol.iter().enumerate() {
                let ll = l0 + off as u32;
                let b = beta[row + ll as usize];
                if b.norm_sqr() == 0.0 {
                    continue;
                }
                out[ang_index(ll, cap_m)] += b * e_cm * *d;
            }
        }
    }
    let _ = j_max;
}

fn wrap(i: i32, n: usize) -> usize {
    let n = n as i32;
    (((i % n) + n) % n) as usize
}

fn ifft3(data: &mut [Complex64], dims: &[usize; 3], ffts: &[std::sync::Arc<dyn rustfft::Fft<f64>>; 3]) {
    let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
    // axis 2 (contiguous)
    for row in data.chunks_mut(nz) {
        ffts[2].process(row);
    }
    // axis 1
    let mut buf = vec![Complex64::new(0.0, 0.0); ny];
    for ix in 0..nx {
        for iz in 0..nz {
            for iy in 0..ny {
                buf[iy] = data[(ix * ny + iy) * nz + iz];
            }
            ffts[1].process(&mut buf);
            for iy in 0..ny {
                data[(ix * ny + iy) * nz + iz] = buf[iy];
            }
        }
    }
    // axis 0
    let mut buf = vec![Complex64::new(0.0, 0.0); nx];
    for iy in 0..ny {
        for iz in 0..nz {
            for ix in 0..nx {
                buf[ix] = data[(ix * ny + iy) * nz + iz];
            }
            ffts[0].process(&mut buf);
            for ix in 0..nx {
                data[(ix * ny + iy) * nz + iz] = buf[ix];
            }
        }
    }
}

/// The evolution kernel's transform on the quotient: exactly diagonal in the
/// spheroidal basis, written here as dense `(l, l')` blocks over ordinary
/// harmonics through the eigenvector transform.
pub fn evolution_spectrum(
    params: &EvolutionParams,
    gh: &GhGrid,
    j_max: usize,
    weight: &TimeWeight,
) -> Result<GhSpectrum, KernelError> {
    params.validate()?;
    let d33_eff = params.d33 - params.d11;
    let table = EigenTable::build(&gh.p_nodes, gh.s_max, d33_eff, params.d44, j_max)?;
    let mut spec = GhSpectrum::zeros(gh.clone());
    for s in -(gh.s_max as i32)..=(gh.s_max as i32) {
        let sa = s.unsigned_abs();
        for (i, &p) in gh.p_nodes.iter().enumerate() {
            let sys = table.get(s, p);
            let d11p2 = params.d11 * p * p;
            let n_l = (gh.l_max - sa + 1) as usize;
            let mut block = vec![0.0f64; n_l * n_l];
            for (idx, lambda) in sys.eigenvalues.iter().enumerate() {
                let w = weight.eval(lambda.abs() + d11p2);
                if w < 1e-300 {
                    continue;
                }
                let c = &sys.eigenvectors[idx];
                for j1 in 0..n_l {
                    if c[j1] == 0.0 {
                        continue;
                    }
                    for j2 in 0..n_l {
                        block[j1 * n_l + j2] += w * c[j1] * c[j2];
                    }
                }
            }
            for j1 in 0..n_l {
                for j2 in 0..n_l {
                    let idx = spec.index(s, i, sa + j1 as u32, sa + j2 as u32);
                    spec.coeffs[idx] = Complex64::new(block[j1 * n_l + j2], 0.0);
                }
            }
        }
    }
    Ok(spec)
}

/// Exact kernel by the quotient-transform route, sampled on grid centers and
/// an orientation list.
pub fn kernel_gh_fourier(
    params: &EvolutionParams,
    grid: &CubeGrid,
    orientations: &[Vector3<f64>],
    l_max: u32,
    radial_nodes: usize,
) -> Result<Vec<f64>, KernelError> {
    let p_max = std::f64::consts::PI / grid.ds;
    let gh = GhGrid::new(p_max, radial_nodes, l_max, l_max);
    let weight = TimeWeight::Fractional {
        alpha: params.alpha,
        t: params.t,
    };
    let spec = evolution_spectrum(params, &gh, 2 * l_max as usize, &weight)?;
    let r_max = (grid.center(grid.ni, grid.nj, grid.nk)).norm();
    let engine = JEngine::new(l_max, l_max, p_max * r_max * 1.05);
    let vals = gh_inverse_field(&spec, &engine, grid, orientations);
    Ok(vals.into_iter().map(|c| c.re).collect())
}

/// Pointwise kernel value by the quotient route with explicit truncations.
pub fn kernel_gh_point(
    params: &EvolutionParams,
    x: &Vector3<f64>,
    n: &Vector3<f64>,
    l_max: u32,
    radial_nodes: usize,
    p_max: f64,
) -> Result<f64, KernelError> {
    let gh = GhGrid::new(p_max, radial_nodes, l_max, l_max);
    let weight = TimeWeight::Fractional {
        alpha: params.alpha,
        t: params.t,
    };
    let spec = evolution_spectrum(params, &gh, 2 * l_max as usize, &weight)?;
    let engine = JEngine::new(l_max, l_max, p_max * x.norm() * 1.05 + 1.0);
    Ok(gh_inverse_point(&spec, &engine, x, n).re)
}

/// Spectral evolution of a sampled field (the fast route for
/// `W = K_t * U`): per-frequency projection onto the spheroidal basis and
/// reweighting by the evolution eigenvalues.
pub fn apply_evolution(
    field: &QuotientGridField,
    params: &EvolutionParams,
    l_max: u32,
    j_max: usize,
    pad: usize,
) -> Result<QuotientGridField, KernelError> {
    params.validate()?;
    let weight = TimeWeight::Fractional {
        alpha: params.alpha,
        t: params.t,
    };
    let d33_eff = params.d33 - params.d11;
    let grid = &field.grid;
    let fgrid = FrequencyGrid::new(grid, pad);
    let n_q = field.sphere.len();
    let n_w = fgrid.len();

    // eigensystems over the distinct radii
    let mut unique: Vec<u64> = (0..n_w)
        .map(|widx| {
            let iz = widx % fgrid.dims[2];
            let iy = (widx / fgrid.dims[2]) % fgrid.dims[1];
            let ix = widx / (fgrid.dims[2] * fgrid.dims[1]);
            fgrid.omega([ix, iy, iz]).norm().to_bits()
        })
        .collect();
    unique.sort_unstable();
    unique.dedup();
    let radii: Vec<f64> = unique.iter().map(|&b| f64::from_bits(b)).collect();
    let table = EigenTable::build(&radii, l_max, d33_eff, params.d44, j_max)?;

    // forward FFT per orientation sample
    let mut planner = FftPlanner::new();
    let fwd = [
        planner.plan_fft_forward(fgrid.dims[0]),
        planner.plan_fft_forward(fgrid.dims[1]),
        planner.plan_fft_forward(fgrid.dims[2]),
    ];
    let inv = [
        planner.plan_fft_inverse(fgrid.dims[0]),
        planner.plan_fft_inverse(fgrid.dims[1]),
        planner.plan_fft_inverse(fgrid.dims[2]),
    ];
    let mut ubar: Vec<Vec<Complex64>> = (0..n_q)
        .map(|_| vec![Complex64::new(0.0, 0.0); n_w])
        .collect();
    for (q, dst) in ubar.iter_mut().enumerate() {
        for (i, j, k) in grid.iter_indices() {
            let wi = wrap(i, fgrid.dims[0]);
            let wj = wrap(j, fgrid.dims[1]);
            let wk = wrap(k, fgrid.dims[2]);
            dst[(wi * fgrid.dims[1] + wj) * fgrid.dims[2] + wk] =
                Complex64::new(field.value(grid.flat_index(i, j, k), q) * grid.cell_volume(), 0.0);
        }
        fft3(dst, &fgrid.dims, &fwd);
    }

    // per-frequency angular solve, carried out on the full Y-chain of each
    // order m with the evolution matrix E = sum_l w_l d^l (d^l)^T; the
    // eigenpair structure makes the semigroup identity exact
    let points = &field.sphere.points;
    let weights = &field.sphere.weights;
    let l_phi = l_max + j_max as u32 - 1;
    let new_modes: Vec<Vec<Complex64>> = (0..n_w)
        .into_par_iter()
        .map(|widx| {
            let iz = widx % fgrid.dims[2];
            let iy = (widx / fgrid.dims[2]) % fgrid.dims[1];
            let ix = widx / (fgrid.dims[2] * fgrid.dims[1]);
            let omega = fgrid.omega([ix, iy, iz]);
            let r = omega.norm();
            let frame = crate::harmonics::rotation_to_frequency_frame(
                &crate::harmonics::FrequencyVector { omega, r },
            );
            let d11r2 = params.d11 * r * r;
            let tabs: Vec<SphHarmTable> = points
                .iter()
                .map(|nq| SphHarmTable::build(l_phi, &frame.apply_inverse(nq)))
                .collect();
            let mut out = vec![Complex64::new(0.0, 0.0); n_q];
            let mut coeff = vec![Complex64::new(0.0, 0.0); j_max];
            let mut evolved = vec![Complex64::new(0.0, 0.0); j_max];
            for m in -(l_max as i32)..=(l_max as i32) {
                let sys = table.get(m, r);
                let m_abs = m.unsigned_abs();
                let n_j = (l_phi - m_abs + 1).min(j_max as u32) as usize;
                // analysis onto Y^{|m|+j, m}_w
                for (j, c) in coeff.iter_mut().take(n_j).enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for q in 0..n_q {
                        acc += ubar[q][widx] * tabs[q].get(m_abs + j as u32, m).conj() * weights[q];
                    }
                    *c = acc;
                }
                // evolved = sum_l w_l d^l <d^l, coeff>
                for e in evolved.iter_mut().take(n_j) {
                    *e = Complex64::new(0.0, 0.0);
                }
                for (idx, lambda) in sys.eigenvalues.iter().enumerate() {
                    let w = weight.eval(lambda.abs() + d11r2);
                    if w < 1e-300 {
                        continue;
                    }
                    let d = &sys.eigenvectors[idx];
                    let mut dot = Complex64::new(0.0, 0.0);
                    for j in 0..n_j {
                        dot += coeff[j] * d[j];
                    }
                    let f = dot * w;
                    for j in 0..n_j {
                        evolved[j] += f * d[j];
                    }
                }
                for q in 0..n_q {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..n_j {
                        acc += evolved[j] * tabs[q].get(m_abs + j as u32, m);
                    }
                    out[q] += acc;
                }
            }
            out
        })
        .collect();

    // inverse FFT per orientation and crop
    let scale = 1.0 / (n_w as f64) / grid.ds.powi(3);
    let mut values = vec![0.0; grid.len() * n_q];
    let mut work = vec![Complex64::new(0.0, 0.0); n_w];
    for q in 0..n_q {
        for (dst, row) in work.iter_mut().zip(&new_modes) {
            *dst = row[q];
        }
        ifft3(&mut work, &fgrid.dims, &inv);
        for (i, j, k) in grid.iter_indices() {
            let wi = wrap(i, fgrid.dims[0]);
            let wj = wrap(j, fgrid.dims[1]);
            let wk = wrap(k, fgrid.dims[2]);
            values[grid.flat_index(i, j, k) * n_q + q] =
                (work[(wi * fgrid.dims[1] + wj) * fgrid.dims[2] + wk] * scale).re;
        }
    }
    Ok(QuotientGridField {
        grid: *grid,
        sphere: field.sphere.clone(),
        values,
    })
}

fn fft3(data: &mut [Complex64], dims: &[usize; 3], ffts: &[std::sync::Arc<dyn rustfft::Fft<f64>>; 3]) {
    ifft3(data, dims, ffts)
}

/// Direct-space shift-twist convolution
/// `(K * U)(x, n) = sum_{x',n'} K(R_{n'}^T (x - x'), R_{n'}^T n) U(x', n') dV sigma_{n'}`,
/// the quadrature reference implementation. The kernel must be given on a
/// grid covering the difference vectors.
pub fn shift_twist_convolve(
    kernel: &AngularKernelField,
    u_grid: &CubeGrid,
    u_orientations: &[Vector3<f64>],
    u_weights: &[f64],
    u_values: &[f64],
    out_orientations: &[Vector3<f64>],
    section: Option<&(dyn Fn(&Vector3<f64>) -> Rotation + Sync)>,
) -> Vec<f64> {
    let n_in = u_orientations.len();
    let n_out = out_orientations.len();
    let dv = u_grid.cell_volume();
    let n_ang = ((kernel.l_field + 1) * (kernel.l_field + 1)) as usize;
    // difference-vector list once
    let offsets: Vec<(i32, i32, i32)> = {
        let mut v = Vec::new();
        for di in -2 * u_grid.ni..=2 * u_grid.ni {
            for dj in -2 * u_grid.nj..=2 * u_grid.nj {
                for dk in -2 * u_grid.nk..=2 * u_grid.nk {
                    v.push((di, dj, dk));
                }
            }
        }
        v
    };
    let (odi, odj, odk) = (
        (4 * u_grid.ni + 1) as usize,
        (4 * u_grid.nj + 1) as usize,
        (4 * u_grid.nk + 1) as usize,
    );
    let per_np: Vec<Vec<f64>> = (0..n_in)
        .into_par_iter()
        .map(|qp| {
            let np = u_orientations[qp];
            let r_np = match section {
                Some(f) => f(&np),
                None => rotation_onto(&np),
            };
            // rotated-coefficient gamma field at the rotated difference points
            let mut gamma_rot: Vec<Complex64> =
                vec![Complex64::new(0.0, 0.0); offsets.len() * n_ang];
            let mut buf = vec![Complex64::new(0.0, 0.0); n_ang];
            for (oi, &(di, dj, dk)) in offsets.iter().enumerate() {
                let d = Vector3::new(
                    di as f64 * u_grid.ds,
                    dj as f64 * u_grid.ds,
                    dk as f64 * u_grid.ds,
                );
                kernel.coeffs_at(&r_np.apply_inverse(&d), &mut buf);
                gamma_rot[oi * n_ang..(oi + 1) * n_ang].copy_from_slice(&buf);
            }
            // stencil values per output orientation
            let mut contrib = vec![0.0; u_grid.len() * n_out];
            let tabs: Vec<SphHarmTable> = out_orientations
                .iter()
                .map(|n| SphHarmTable::build(kernel.l_field, &r_np.apply_inverse(n)))
                .collect();
            for (qo, tab) in tabs.iter().enumerate() {
                // synthesize the kernel stencil
                let mut stencil = vec![0.0; offsets.len()];
                for (oi, st) in stencil.iter_mut().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (idx, c) in gamma_rot[oi * n_ang..(oi + 1) * n_ang].iter().enumerate() {
                        if c.norm_sqr() != 0.0 {
                            let (l, m) = ang_unindex(idx);
                            acc += c * tab.get(l, m);
                        }
                    }
                    *st = acc.re;
                }
                // correlation over space
                for (i, j, k) in u_grid.iter_indices() {
                    let mut acc = 0.0;
                    for (ip, jp, kp) in u_grid.iter_indices() {
                        let u = u_values[u_grid.flat_index(ip, jp, kp) * n_in + qp];
                        if u == 0.0 {
                            continue;
                        }
                        let off = ((i - ip + 2 * u_grid.ni) as usize * odj
                            + (j - jp + 2 * u_grid.nj) as usize)
                            * odk
                            + (k - kp + 2 * u_grid.nk) as usize;
                        acc += stencil[off] * u;
                    }
                    contrib[u_grid.flat_index(i, j, k) * n_out + qo] +=
                        acc * dv * u_weights[qp];
                }
            }
            let _ = odi;
            contrib
        })
        .collect();
    let mut out = vec![0.0; u_grid.len() * n_out];
    for part in per_np {
        for (dst, src) in out.iter_mut().zip(part) {
            *dst += src;
        }
    }
    out
}
