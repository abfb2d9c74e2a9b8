//! The coupled generator matrices in the spherical-harmonic basis, the
//! spheroidal-wave eigenproblem, and evaluation of the eigenbasis.
//!
//! Multiplication by cos^2(beta) couples degree l to l and l +- 2 within a
//! fixed order m, so the generator is a symmetric banded matrix with
//! bandwidth 2 whose first off-diagonal vanishes. It splits into two
//! tridiagonal parity chains which are solved by implicit-shift QL.

use crate::harmonics::{rotation_to_frequency_frame, FrequencyVector, SphHarmTable};
use nalgebra::Vector3;
use num_complex::Complex64;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("eigensolver failed to converge on a {n}x{n} block")]
    Convergence { n: usize },
}

/// Matrix of multiplication by cos^2(beta) on the order-m harmonic chain
/// `l = |m| + j`, `j = 0..j_max`.
#[derive(Clone, Debug)]
pub struct CoupledMatrix {
    pub m: i32,
    pub j_max: usize,
    /// diagonal entries, j = 0..j_max
    pub diag: Vec<f64>,
    /// entries coupling j and j+2, length j_max - 2
    pub off2: Vec<f64>,
}

/// Recurrence coefficient in `cos(beta) Y^{l,m} = a_l Y^{l+1,m} + a_{l-1} Y^{l-1,m}`.
fn cos_coupling(l: u32, m_abs: u32) -> f64 {
    let l = l as f64;
    let m = m_abs as f64;
    (((l + 1.0 - m) * (l + 1.0 + m)) / ((2.0 * l + 1.0) * (2.0 * l + 3.0))).sqrt()
}

/// Builds `M^m` by applying the cos(beta) three-term recurrence twice.
pub fn coupling_matrix(m: i32, j_max: usize) -> CoupledMatrix {
    assert!(j_max >= 1, "j_max must be at least 1");
    let m_abs = m.unsigned_abs();
    let a = |l: i64| -> f64 {
        if l < m_abs as i64 {
            0.0
        } else {
            cos_coupling(l as u32, m_abs)
        }
    };
    let mut diag = Vec::with_capacity(j_max);
    let mut off2 = Vec::with_capacity(j_max.saturating_sub(2));
    for j in 0..j_max {
        let l = m_abs as i64 + j as i64;
        diag.push(a(l) * a(l) + a(l - 1) * a(l - 1));
        if j + 2 < j_max {
            off2.push(a(l) * a(l + 1));
        }
    }
    CoupledMatrix {
        m,
        j_max,
        diag,
        off2,
    }
}

/// The symmetric negative-definite matrix `-(D33 r^2 M^m + D44 Lambda^m)`,
/// stored by its diagonal and second off-diagonal.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix {
    pub m: i32,
    pub r: f64,
    pub diag: Vec<f64>,
    pub off2: Vec<f64>,
}

pub fn build_generator_matrix(
    m: i32,
    r: f64,
    d33: f64,
    d44: f64,
    j_max: usize,
) -> Result<GeneratorMatrix, SpectralError> {
    if d33 < 0.0 || d44 <= 0.0 {
        return Err(SpectralError::Parameter(format!(
            "diffusivities must satisfy D33 >= 0, D44 > 0 (got D33 = {d33}, D44 = {d44})"
        )));
    }
    if r < 0.0 {
        return Err(SpectralError::Parameter(format!(
            "frequency radius must be nonnegative (got {r})"
        )));
    }
    let coupling = coupling_matrix(m, j_max);
    let m_abs = m.unsigned_abs() as f64;
    let diag = coupling
        .diag
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let l = m_abs + j as f64;
            -(d33 * r * r * c + d44 * l * (l + 1.0))
        })
        .collect();
    let off2 = coupling.off2.iter().map(|&c| -(d33 * r * r * c)).collect();
    Ok(GeneratorMatrix { m, r, diag, off2 })
}

/// Eigenpairs of the generator at one `(m, r)`.
///
/// Eigenvalues are ascending in magnitude and labeled `l = |m|, |m|+1, ...`
/// in that order; eigenvectors are unit norm with the largest-magnitude
/// component positive.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub m: i32,
    pub r: f64,
    /// `lambda^{l,m}_r <= 0`, index `l - |m|`
    pub eigenvalues: Vec<f64>,
    /// eigenvector coefficients over `j`, one row per eigenvalue
    pub eigenvectors: Vec<Vec<f64>>,
}

impl EigenSystem {
    pub fn lambda(&self, l: u32) -> f64 {
        self.eigenvalues[(l as i64 - self.m.unsigned_abs() as i64) as usize]
    }

    pub fn coefficients(&self, l: u32) -> &[f64] {
        &self.eigenvectors[(l as i64 - self.m.unsigned_abs() as i64) as usize]
    }
}

/// Implicit-shift QL on a symmetric tridiagonal matrix, accumulating
/// eigenvectors. `d` holds the diagonal, `e` the subdiagonal in `e[0..n-1]`.
fn tql2(d: &mut [f64], e: &mut [f64], z: &mut [Vec<f64>]) -> Result<(), SpectralError> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(SpectralError::Convergence { n });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if r == 0.0 && m > l {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// All eigenpairs of a generator matrix via the two parity chains.
pub fn eigendecompose(gen: &GeneratorMatrix) -> Result<EigenSystem, SpectralError> {
    let n = gen.diag.len();
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n);
    for parity in 0..2 {
        let idx: Vec<usize> = (parity..n).step_by(2).collect();
        if idx.is_empty() {
            continue;
        }
        let nb = idx.len();
        let mut d: Vec<f64> = idx.iter().map(|&j| gen.diag[j]).collect();
        let mut e = vec![0.0; nb];
        for (b, &j) in idx.iter().enumerate().skip(1) {
            e[b] = gen.off2[j - 2];
        }
        let mut z: Vec<Vec<f64>> = (0..nb)
            .map(|i| {
                let mut row = vec![0.0; nb];
                row[i] = 1.0;
                row
            })
            .collect();
        tql2(&mut d, &mut e, &mut z)?;
        for b in 0..nb {
            let mut vec_full = vec![0.0; n];
            for (bb, &j) in idx.iter().enumerate() {
                vec_full[j] = z[bb][b];
            }
            pairs.push((d[b], vec_full));
        }
    }
    // ascending magnitude = descending eigenvalue for a negative-definite matrix
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = Vec::with_capacity(n);
    for (lambda, mut v) in pairs {
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut max_idx = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[max_idx].abs() {
                max_idx = i;
            }
        }
        let sign = if v[max_idx] < 0.0 { -1.0 } else { 1.0 };
        for x in &mut v {
            *x *= sign / norm;
        }
        eigenvalues.push(lambda);
        eigenvectors.push(v);
    }
    Ok(EigenSystem {
        m: gen.m,
        r: gen.r,
        eigenvalues,
        eigenvectors,
    })
}

/// Convenience constructor: eigensystem of `-(D33 r^2 M^m + D44 Lambda^m)`.
pub fn eigensystem(
    m: i32,
    r: f64,
    d33: f64,
    d44: f64,
    j_max: usize,
) -> Result<EigenSystem, SpectralError> {
    eigendecompose(&build_generator_matrix(m, r, d33, d44, j_max)?)
}

/// Immutable cache of eigensystems over a fixed set of radii, one entry per
/// `(|m|, r)`. Construction is parallel; lookups are lock-free afterwards.
pub struct EigenTable {
    systems: HashMap<(u32, u64), EigenSystem>,
    pub d33: f64,
    pub d44: f64,
    pub j_max: usize,
}

impl EigenTable {
    pub fn build(
        radii: &[f64],
        m_max: u32,
        d33: f64,
        d44: f64,
        j_max: usize,
    ) -> Result<Self, SpectralError> {
        use rayon::prelude::*;
        let mut keys: Vec<(u32, u64)> = Vec::new();
        for &r in radii {
            for m in 0..=m_max {
                keys.push((m, r.to_bits()));
            }
        }
        keys.sort_unstable();
        keys.dedup();
        let systems = keys
            .par_iter()
            .map(|&(m, rb)| {
                let sys = eigensystem(m as i32, f64::from_bits(rb), d33, d44, j_max)?;
                Ok(((m, rb), sys))
            })
            .collect::<Result<HashMap<_, _>, SpectralError>>()?;
        Ok(EigenTable {
            systems,
            d33,
            d44,
            j_max,
        })
    }

    /// Lookup by order and radius; the radius must be one of the build set.
    pub fn get(&self, m: i32, r: f64) -> &EigenSystem {
        self.systems
            .get(&(m.unsigned_abs(), r.to_bits()))
            .expect("eigensystem requested outside the precomputed set")
    }
}

/// `Phi^{l,m}_w(n)`: the spheroidal basis function assembled from an
/// eigensystem at `(m, |w|)`.
pub fn spheroidal_eval(
    l: u32,
    m: i32,
    omega: &FrequencyVector,
    n: &Vector3<f64>,
    sys: &EigenSystem,
) -> Complex64 {
    debug_assert_eq!(sys.m.unsigned_abs(), m.unsigned_abs());
    let frame = rotation_to_frequency_frame(omega);
    let nu = frame.apply_inverse(n);
    let coeffs = sys.coefficients(l);
    let m_abs = m.unsigned_abs();
    let table = SphHarmTable::build(m_abs + coeffs.len() as u32 - 1, &nu);
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, &c) in coeffs.iter().enumerate() {
        if c != 0.0 {
            acc += table.get(m_abs + j as u32, m) * c;
        }
    }
    acc
}
