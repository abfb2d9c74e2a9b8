//! Spherical harmonics, normalized associated Legendre functions, Wigner
//! matrices, and the frequency-adapted generalized harmonics.
//!
//! Conventions: `Y^{l,m}(n(beta,gamma)) = eps_m / sqrt(2 pi) * P^m_l(cos beta) e^{i m gamma}`
//! with `eps_m = (-1)^{(m+|m|)/2}` and `P^m_l` normalized to unit L2 norm on
//! [-1, 1]. Wigner-D follows the ZYZ convention
//! `D^l_{m'm}(Rz(a) Ry(b) Rz(g)) = e^{-i m' a} d^l_{m'm}(b) e^{-i m g}`.
//! All evaluations use normalized recursions; no raw factorials appear.

use crate::se3::Rotation;
use nalgebra::Vector3;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarmonicsError {
    #[error("invalid index: |m| = {m} exceeds l = {l}")]
    IndexOutOfRange { l: u32, m: i32 },
}

/// Degree/order pair with `|m| <= l`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HarmonicIndex {
    pub l: u32,
    pub m: i32,
}

impl HarmonicIndex {
    pub fn new(l: u32, m: i32) -> Result<Self, HarmonicsError> {
        if m.unsigned_abs() > l {
            return Err(HarmonicsError::IndexOutOfRange { l, m });
        }
        Ok(HarmonicIndex { l, m })
    }
}

/// A spatial frequency vector with its cached radius.
#[derive(Clone, Copy, Debug)]
pub struct FrequencyVector {
    pub omega: Vector3<f64>,
    pub r: f64,
}

impl FrequencyVector {
    pub fn new(omega: Vector3<f64>) -> Self {
        let r = omega.norm();
        FrequencyVector { omega, r }
    }
}

/// L2-normalized associated Legendre function `P^m_l(x)` (no Condon-Shortley
/// phase; `int_{-1}^{1} P^m_l P^m_{l'} dx = delta_{l l'}`).
pub fn assoc_legendre_normalized(l: u32, m: i32, x: f64) -> Result<f64, HarmonicsError> {
    if m.unsigned_abs() > l {
        return Err(HarmonicsError::IndexOutOfRange { l, m });
    }
    let table = legendre_column(l, m.unsigned_abs(), x);
    Ok(table[(l - m.unsigned_abs()) as usize])
}

/// Values `P^{|m|}_l(x)` for `l = |m| .. l_max` by the stable three-term
/// recursion on the normalized functions.
pub fn legendre_column(l_max: u32, m_abs: u32, x: f64) -> Vec<f64> {
    debug_assert!(m_abs <= l_max);
    let n = (l_max - m_abs + 1) as usize;
    let mut out = Vec::with_capacity(n);
    let s2 = (1.0 - x * x).max(0.0);
    let s = s2.sqrt();
    // diagonal seed: P^m_m = (1/sqrt(2)) prod_k sqrt((2k+1)/(2k)) sin^m
    let mut seed = std::f64::consts::FRAC_1_SQRT_2;
    for k in 1..=m_abs {
        seed *= ((2.0 * k as f64 + 1.0) / (2.0 * k as f64)).sqrt() * s;
    }
    out.push(seed);
    if l_max == m_abs {
        return out;
    }
    let m = m_abs as f64;
    let a = |l: f64| (((l + 1.0 - m) * (l + 1.0 + m)) / ((2.0 * l + 1.0) * (2.0 * l + 3.0))).sqrt();
    let mut prev = 0.0;
    let mut cur = seed;
    for l in m_abs..l_max {
        let lf = l as f64;
        let a_l = a(lf);
        let a_lm1 = if l == m_abs { 0.0 } else { a(lf - 1.0) };
        let next = (x * cur - a_lm1 * prev) / a_l;
        out.push(next);
        prev = cur;
        cur = next;
    }
    out
}

fn eps_m(m: i32) -> f64 {
    if m > 0 && m % 2 != 0 {
        -1.0
    } else {
        1.0
    }
}

/// Spherical angles `(beta, gamma)` of a unit vector.
pub fn spherical_angles(n: &Vector3<f64>) -> (f64, f64) {
    let beta = (n.x * n.x + n.y * n.y).sqrt().atan2(n.z);
    let gamma = n.y.atan2(n.x);
    (beta, gamma)
}

/// `Y^{l,m}(n)` in the article convention (standard physics harmonics).
pub fn sph_harm(l: u32, m: i32, n: &Vector3<f64>) -> Complex64 {
    debug_assert!(m.unsigned_abs() <= l);
    let (beta, gamma) = spherical_angles(n);
    let p = legendre_column(l, m.unsigned_abs(), beta.cos());
    let amp = eps_m(m) * p[(l - m.unsigned_abs()) as usize] / (2.0 * std::f64::consts::PI).sqrt();
    Complex64::from_polar(1.0, m as f64 * gamma) * amp
}

/// Dense table of `Y^{l,m}(n)` for all `l <= l_max`, `|m| <= l`.
///
/// Storage index is `l (l + 1) + m`.
#[derive(Clone, Debug)]
pub struct SphHarmTable {
    pub l_max: u32,
    values: Vec<Complex64>,
}

impl SphHarmTable {
    pub fn build(l_max: u32, n: &Vector3<f64>) -> Self {
        let (beta, gamma) = spherical_angles(n);
        Self::from_angles(l_max, beta, gamma)
    }

    pub fn from_angles(l_max: u32, beta: f64, gamma: f64) -> Self {
        let x = beta.cos();
        let s = (1.0 - x * x).max(0.0).sqrt();
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let mut values = vec![Complex64::new(0.0, 0.0); ((l_max + 1) * (l_max + 1)) as usize];
        // all m chains in one sweep, no intermediate allocation
        let rot = Complex64::from_polar(1.0, gamma);
        let mut phase_pos = Complex64::new(1.0, 0.0);
        let mut seed = std::f64::consts::FRAC_1_SQRT_2;
        for m_abs in 0..=l_max {
            if m_abs > 0 {
                seed *= ((2.0 * m_abs as f64 + 1.0) / (2.0 * m_abs as f64)).sqrt() * s;
                phase_pos *= rot;
            }
            let sign = if m_abs % 2 == 0 { 1.0 } else { -1.0 };
            let m = m_abs as f64;
            let mut prev = 0.0f64;
            let mut cur = seed;
            let store = |l: u32, v: f64, values: &mut Vec<Complex64>| {
                let p = v * norm;
                let idx = (l * (l + 1)) as i64;
                // m = +m_abs carries the Condon-Shortley sign, m = -m_abs does not
                values[(idx + m_abs as i64) as usize] = phase_pos * (p * sign);
                values[(idx - m_abs as i64) as usize] = phase_pos.conj() * p;
            };
            store(m_abs, cur, &mut values);
            for l in m_abs..l_max {
                let lf = l as f64;
                let a_l = (((lf + 1.0 - m) * (lf + 1.0 + m))
                    / ((2.0 * lf + 1.0) * (2.0 * lf + 3.0)))
                    .sqrt();
                let a_lm1 = if l == m_abs {
                    0.0
                } else {
                    (((lf - m) * (lf + m)) / ((2.0 * lf - 1.0) * (2.0 * lf + 1.0))).sqrt()
                };
                let next = (x * cur - a_lm1 * prev) / a_l;
                store(l + 1, next, &mut values);
                prev = cur;
                cur = next;
            }
        }
        SphHarmTable { l_max, values }
    }

    #[inline]
    pub fn get(&self, l: u32, m: i32) -> Complex64 {
        self.values[((l * (l + 1)) as i64 + m as i64) as usize]
    }
}

/// Wigner small-d `d^l_{mp m}(beta)` for all `l` from `max(|mp|, |m|)` to `l_max`.
///
/// Seeded at the lowest degree (a single product, no cancellation) and grown
/// by the three-term recursion in `l`.
pub fn wigner_d_column(l_max: u32, mp: i32, m: i32, beta: f64) -> Vec<f64> {
    let l0 = mp.unsigned_abs().max(m.unsigned_abs());
    debug_assert!(l0 <= l_max);
    let n = (l_max - l0 + 1) as usize;
    let mut out = Vec::with_capacity(n);
    out.push(wigner_d_seed(mp, m, beta));
    if n == 1 {
        return out;
    }
    let x = beta.cos();
    let mpf = mp as f64;
    let mf = m as f64;
    let mut prev = 0.0;
    let mut cur = out[0];
    for l in l0..l_max {
        let next = if l == 0 {
            // degenerate first step of the recursion (only reached for mp = m = 0)
            x * cur
        } else {
            let lf = l as f64;
            let lp = lf + 1.0;
            let c0 = lf * ((lp * lp - mpf * mpf) * (lp * lp - mf * mf)).sqrt();
            let c1 = (2.0 * lf + 1.0) * (lp * lf * x - mpf * mf);
            let c2 = lp * ((lf * lf - mpf * mpf) * (lf * lf - mf * mf)).sqrt();
            (c1 * cur - c2 * prev) / c0
        };
        out.push(next);
        prev = cur;
        cur = next;
    }
    out
}

/// `d^{l0}_{mp m}(beta)` at `l0 = max(|mp|, |m|)`: the explicit sum collapses
/// to one term there.
fn wigner_d_seed(mp: i32, m: i32, beta: f64) -> f64 {
    let l0 = mp.unsigned_abs().max(m.unsigned_abs()) as i32;
    let ch = (0.5 * beta).cos();
    let sh = (0.5 * beta).sin();
    // k index of the surviving term
    let k = if mp >= 0 && l0 == mp {
        0
    } else if mp < 0 && l0 == -mp {
        l0 + m
    } else if m >= 0 && l0 == m {
        m - mp
    } else {
        0
    };
    let kf = k;
    // sqrt of the multinomial weight, accumulated in log space-free products
    let num = [l0 + mp, l0 - mp, l0 + m, l0 - m];
    let den = [l0 + m - kf, kf, mp - m + kf, l0 - mp - kf];
    let mut val = 1.0f64;
    // sqrt((prod num!)/ (prod den!)^2) built factor by factor to stay bounded
    let mut lognum = 0.0f64;
    for &x in &num {
        lognum += ln_factorial(x);
    }
    let mut logden = 0.0f64;
    for &x in &den {
        logden += ln_factorial(x);
    }
    val *= (0.5 * lognum - logden).exp();
    let sign = if (mp - m + kf) % 2 == 0 { 1.0 } else { -1.0 };
    let cpow = 2 * l0 + m - mp - 2 * kf;
    let spow = mp - m + 2 * kf;
    sign * val * ch.powi(cpow) * sh.powi(spow)
}

fn ln_factorial(n: i32) -> f64 {
    debug_assert!(n >= 0);
    let mut s = 0.0;
    for k in 2..=n {
        s += (k as f64).ln();
    }
    s
}

/// `d^l_{mp m}(beta)`.
pub fn wigner_d(l: u32, mp: i32, m: i32, beta: f64) -> Result<f64, HarmonicsError> {
    if mp.unsigned_abs() > l {
        return Err(HarmonicsError::IndexOutOfRange { l, m: mp });
    }
    if m.unsigned_abs() > l {
        return Err(HarmonicsError::IndexOutOfRange { l, m });
    }
    let l0 = mp.unsigned_abs().max(m.unsigned_abs());
    let col = wigner_d_column(l, mp, m, beta);
    Ok(col[(l - l0) as usize])
}

/// Wigner-D from ZYZ Euler angles.
pub fn wigner_d_euler(l: u32, mp: i32, m: i32, alpha: f64, beta: f64, gamma: f64) -> Complex64 {
    let d = wigner_d(l, mp, m, beta).expect("index checked by caller");
    Complex64::from_polar(1.0, -(mp as f64) * alpha - (m as f64) * gamma) * d
}

/// Wigner-D of a rotation matrix.
pub fn wigner_d_rotation(l: u32, mp: i32, m: i32, rot: &Rotation) -> Complex64 {
    let (alpha, beta, gamma) = rot.euler_zyz();
    wigner_d_euler(l, mp, m, alpha, beta, gamma)
}

/// The frame adapted to a frequency vector: columns
/// `((w x a) x w)/|.|, (w x a)/|.|, w/r`, with the conventions `R_a = I`,
/// `R_0 = I`, and a half turn about `e_x` for `w` along `-a`.
pub fn rotation_to_frequency_frame(omega: &FrequencyVector) -> Rotation {
    let a = crate::se3::reference_axis();
    if omega.r == 0.0 {
        return Rotation::identity();
    }
    let dir = omega.omega / omega.r;
    let cross = omega.omega.cross(&a);
    let cn = cross.norm();
    if cn < 1e-14 * omega.r {
        if dir.z > 0.0 {
            return Rotation::identity();
        }
        return Rotation::about_x(std::f64::consts::PI);
    }
    let col2 = cross / cn;
    let col1v = cross.cross(&omega.omega);
    let col1 = col1v / col1v.norm();
    let m = nalgebra::Matrix3::from_columns(&[col1, col2, dir]);
    Rotation::from_matrix_unchecked(m)
}

/// Generalized spherical harmonic `Y^{l,m}_w(n) = Y^{l,m}(R_w^T n)`.
pub fn generalized_sph_harm(l: u32, m: i32, omega: &FrequencyVector, n: &Vector3<f64>) -> Complex64 {
    let frame = rotation_to_frequency_frame(omega);
    sph_harm(l, m, &frame.apply_inverse(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::GaussLegendre;

    #[test]
    fn legendre_low_order_closed_forms() {
        // symbolic evaluation of the normalization: P^0_0 = 1/sqrt(2), P^0_1 = sqrt(3/2) x
        for &x in &[-0.9, -0.3, 0.0, 0.4, 1.0] {
            let p00 = assoc_legendre_normalized(0, 0, x).unwrap();
            assert!((p00 - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
            let p01 = assoc_legendre_normalized(1, 0, x).unwrap();
            assert!((p01 - (1.5f64).sqrt() * x).abs() < 1e-14);
        }
    }

    #[test]
    fn legendre_rejects_bad_index() {
        assert!(assoc_legendre_normalized(2, 3, 0.5).is_err());
    }

    #[test]
    fn legendre_orthonormal_by_quadrature() {
        let rule = GaussLegendre::new(64);
        for m in 0..=3i32 {
            for l in m.unsigned_abs()..=12 {
                for lp in m.unsigned_abs()..=12 {
                    let got = rule.integrate(|x| {
                        assoc_legendre_normalized(l, m, x).unwrap()
                            * assoc_legendre_normalized(lp, m, x).unwrap()
                    });
                    let want = if l == lp { 1.0 } else { 0.0 };
                    assert!(
                        (got - want).abs() < 1e-12,
                        "l={l} lp={lp} m={m}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn legendre_stable_to_l64() {
        for &x in &[-0.999, -0.5, 0.0, 0.7, 0.999] {
            let col = legendre_column(64, 32, x);
            for v in col {
                assert!(v.is_finite() && v.abs() < 1e3);
            }
        }
    }

    #[test]
    fn sph_harm_constants() {
        let n = Vector3::new(0.3, -0.8, 0.52).normalize();
        let y00 = sph_harm(0, 0, &n);
        assert!((y00.re - 0.5 / std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert!(y00.im.abs() < 1e-15);
        // at the reference axis only m = 0 survives
        let a = Vector3::z();
        for l in 0..=8u32 {
            for m in -(l as i32)..=(l as i32) {
                let y = sph_harm(l, m, &a);
                let want = if m == 0 {
                    ((2.0 * l as f64 + 1.0) / (4.0 * std::f64::consts::PI)).sqrt()
                } else {
                    0.0
                };
                assert!((y.re - want).abs() < 1e-13 && y.im.abs() < 1e-13);
            }
        }
    }

    fn sphere_rule(n_beta: usize) -> Vec<(Vector3<f64>, f64)> {
        let rule = GaussLegendre::new(n_beta);
        let n_gamma = 2 * n_beta + 1;
        let mut pts = Vec::new();
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let beta = x.acos();
            for j in 0..n_gamma {
                let gamma = 2.0 * std::f64::consts::PI * j as f64 / n_gamma as f64;
                let n = Vector3::new(
                    beta.sin() * gamma.cos(),
                    beta.sin() * gamma.sin(),
                    beta.cos(),
                );
                pts.push((n, w * 2.0 * std::f64::consts::PI / n_gamma as f64));
            }
        }
        pts
    }

    #[test]
    fn sph_harm_orthonormality() {
        let pts = sphere_rule(16);
        for (l, m, lp, mpp) in [(3u32, 2i32, 3u32, 2i32), (5, -4, 5, -4), (4, 1, 6, 1), (2, 2, 2, -2)] {
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, w) in &pts {
                acc += sph_harm(l, m, n) * sph_harm(lp, mpp, n).conj() * *w;
            }
            let want = if l == lp && m == mpp { 1.0 } else { 0.0 };
            assert!(
                (acc.re - want).abs() < 1e-10 && acc.im.abs() < 1e-10,
                "({l},{m}) vs ({lp},{mpp}): {acc}"
            );
        }
    }

    #[test]
    fn table_matches_pointwise() {
        let n = Vector3::new(-0.2, 0.5, 0.9).normalize();
        let table = SphHarmTable::build(12, &n);
        for l in 0..=12u32 {
            for m in -(l as i32)..=(l as i32) {
                let want = sph_harm(l, m, &n);
                let got = table.get(l, m);
                assert!((got - want).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn wigner_d_identity_and_unitarity() {
        for l in 0..=6u32 {
            for mp in -(l as i32)..=(l as i32) {
                for m in -(l as i32)..=(l as i32) {
                    let d = wigner_d_euler(l, mp, m, 0.0, 0.0, 0.0);
                    let want = if mp == m { 1.0 } else { 0.0 };
                    assert!((d.re - want).abs() < 1e-13 && d.im.abs() < 1e-14);
                }
            }
        }
        // unitarity at random angles
        let angles = [(0.3, 1.1, -0.7), (2.5, 0.4, 0.9), (-1.0, 2.9, 0.2)];
        for (a, b, g) in angles {
            for l in 1..=8u32 {
                for m in -(l as i32)..=(l as i32) {
                    let s: f64 = (-(l as i32)..=(l as i32))
                        .map(|mp| wigner_d_euler(l, mp, m, a, b, g).norm_sqr())
                        .sum();
                    assert!((s - 1.0).abs() < 1e-10, "l={l} m={m}: {s}");
                }
            }
        }
    }

    #[test]
    fn wigner_d_axis_rotation_is_phase() {
        // D^l(R_{a,angle}) = e^{-i m angle} delta_{m' m}
        let rot = Rotation::about_z(0.83);
        for l in 0..=5u32 {
            for mp in -(l as i32)..=(l as i32) {
                for m in -(l as i32)..=(l as i32) {
                    let d = wigner_d_rotation(l, mp, m, &rot);
                    let want = if mp == m {
                        Complex64::from_polar(1.0, -(m as f64) * 0.83)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    assert!((d - want).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn wigner_matches_rotation_of_harmonics() {
        // Y^{l,m}(R^{-1} n) = sum_{m'} D^l_{m'm}(R) Y^{l,m'}(n)
        let rot = Rotation::about_z(0.7)
            .compose(&Rotation::about_y(1.2))
            .compose(&Rotation::about_z(-0.4));
        let n = Vector3::new(0.36, -0.48, 0.8);
        for l in 0..=8u32 {
            for m in -(l as i32)..=(l as i32) {
                let lhs = sph_harm(l, m, &rot.apply_inverse(&n));
                let mut rhs = Complex64::new(0.0, 0.0);
                for mp in -(l as i32)..=(l as i32) {
                    rhs += wigner_d_rotation(l, mp, m, &rot) * sph_harm(l, mp, &n);
                }
                assert!((lhs - rhs).norm() < 1e-11, "l={l} m={m}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn wigner_d_column_identity() {
        // d^l_{m'0} is proportional to the normalized Legendre column
        let beta = 1.234;
        for mp in -6i32..=6 {
            let col = wigner_d_column(10, mp, 0, beta);
            for (idx, l) in (mp.unsigned_abs()..=10).enumerate() {
                let kappa = ((2.0 * l as f64 + 1.0) / (4.0 * std::f64::consts::PI)).sqrt();
                let y = sph_harm(l, mp, &Vector3::new(beta.sin(), 0.0, beta.cos()));
                let want = y.conj().re / kappa; // gamma = 0 so Y is real
                assert!((col[idx] - want).abs() < 1e-12, "l={l} mp={mp}");
            }
        }
    }

    #[test]
    fn frequency_frame_properties() {
        // R_a = I, R_0 = I
        let id = rotation_to_frequency_frame(&FrequencyVector::new(Vector3::new(0.0, 0.0, 2.0)));
        assert!((id.matrix() - nalgebra::Matrix3::identity()).norm() < 1e-14);
        let z = rotation_to_frequency_frame(&FrequencyVector::new(Vector3::zeros()));
        assert!((z.matrix() - nalgebra::Matrix3::identity()).norm() < 1e-14);
        // R a = omega / r, proper orthogonal
        for omega in [
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(-0.3, 2.0, 0.4),
            Vector3::new(0.0, 0.0, -1.5),
            Vector3::new(1e-8, 0.0, -3.0),
        ] {
            let f = FrequencyVector::new(omega);
            let rot = rotation_to_frequency_frame(&f);
            assert!(rot.orthonormality_defect() < 1e-12);
            assert!((rot.matrix().determinant() - 1.0).abs() < 1e-12);
            assert!((rot.apply(&Vector3::z()) - omega / f.r).norm() < 1e-9);
        }
    }

    #[test]
    fn generalized_harmonics_reduce_and_stay_orthonormal() {
        let omega0 = FrequencyVector::new(Vector3::zeros());
        let n = Vector3::new(0.6, 0.0, 0.8);
        for l in 0..=4u32 {
            for m in -(l as i32)..=(l as i32) {
                let a = generalized_sph_harm(l, m, &omega0, &n);
                let b = sph_harm(l, m, &n);
                assert!((a - b).norm() < 1e-14);
            }
        }
        let omega = FrequencyVector::new(Vector3::new(0.7, -1.1, 0.4));
        let pts = sphere_rule(16);
        for (l, m, lp, mpp) in [(2u32, 1i32, 2u32, 1i32), (3, -2, 3, -2), (1, 0, 3, 0)] {
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, w) in &pts {
                acc += generalized_sph_harm(l, m, &omega, n)
                    * generalized_sph_harm(lp, mpp, &omega, n).conj()
                    * *w;
            }
            let want = if l == lp && m == mpp { 1.0 } else { 0.0 };
            assert!((acc.re - want).abs() < 1e-10 && acc.im.abs() < 1e-10);
        }
    }

    #[test]
    fn generalized_harmonics_modulus_covariance() {
        let rot = Rotation::about_axis(Vector3::new(0.2, 0.5, 0.6), 1.1);
        let omega = FrequencyVector::new(Vector3::new(0.9, 0.3, -0.5));
        let omega_r = FrequencyVector::new(rot.apply(&omega.omega));
        let n = Vector3::new(-0.1, 0.7, 0.7).normalize();
        for l in 0..=5u32 {
            for m in -(l as i32)..=(l as i32) {
                let a = generalized_sph_harm(l, m, &omega_r, &rot.apply(&n));
                let b = generalized_sph_harm(l, m, &omega, &n);
                assert!((a.norm() - b.norm()).abs() < 1e-11, "l={l} m={m}");
            }
        }
    }
}
