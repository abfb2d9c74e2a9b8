//! Fast invariant suites behind the `selftest` subcommand: a release gate
//! that exercises each numerical layer in a few seconds.

use nalgebra::Vector3;
use num_complex::Complex64;
use orientkern_core::ghft::JEngine;
use orientkern_core::grids::{Icosphere, SphereGrid};
use orientkern_core::harmonics::{sph_harm, wigner_d_rotation};
use orientkern_core::quad::GaussLegendre;
use orientkern_core::se3::{exp_se3, GroupElement, LieAlgebraVector, Rotation};

pub struct SuiteResult {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

pub fn run_all(inject_coupling_fault: Option<f64>) -> Vec<SuiteResult> {
    vec![
        SuiteResult {
            name: "se3-group-laws",
            outcome: se3_group_laws(),
        },
        SuiteResult {
            name: "harmonics-orthonormality",
            outcome: harmonics_orthonormality(),
        },
        SuiteResult {
            name: "wigner-rotation-property",
            outcome: wigner_rotation_property(),
        },
        SuiteResult {
            name: "coupling-matrix-quadrature",
            outcome: coupling_matrix_quadrature(inject_coupling_fault),
        },
        SuiteResult {
            name: "eigensolver-residuals",
            outcome: eigensolver_residuals(),
        },
        SuiteResult {
            name: "uir-identity",
            outcome: uir_identity(),
        },
        SuiteResult {
            name: "icosphere-partition",
            outcome: icosphere_partition(),
        },
        SuiteResult {
            name: "subordinator",
            outcome: subordinator(),
        },
    ]
}

fn check(cond: bool, msg: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

fn se3_group_laws() -> Result<(), String> {
    let g1 = GroupElement::new(
        Vector3::new(0.3, -0.7, 1.1),
        Rotation::about_axis(Vector3::new(0.2, 0.9, -0.1), 1.3),
    );
    let gi = g1.product(&g1.inverse());
    check(
        gi.x.norm() < 1e-12 && gi.rot.orthonormality_defect() < 1e-12,
        "g g^-1 != e",
    )?;
    let psi = 0.9;
    let e6 = exp_se3(&LieAlgebraVector::new([0.0, 0.0, 0.0, 0.0, 0.0, psi]));
    check(
        (e6.rot.matrix() - Rotation::about_z(psi).matrix()).norm() < 1e-12,
        "exp(psi A6) is not the axis rotation",
    )
}

fn harmonics_orthonormality() -> Result<(), String> {
    let grid = SphereGrid::gauss_product(8);
    for (l, m, lp, mp) in [(3u32, 2i32, 3u32, 2i32), (5, -4, 5, -4), (4, 1, 6, 1)] {
        let mut acc = Complex64::new(0.0, 0.0);
        for (p, w) in grid.points.iter().zip(&grid.weights) {
            acc += sph_harm(l, m, p) * sph_harm(lp, mp, p).conj() * *w;
        }
        let want = if l == lp && m == mp { 1.0 } else { 0.0 };
        check(
            (acc.re - want).abs() < 1e-10 && acc.im.abs() < 1e-10,
            &format!("<Y{l}{m}, Y{lp}{mp}> = {acc}"),
        )?;
    }
    Ok(())
}

fn wigner_rotation_property() -> Result<(), String> {
    let rot = Rotation::about_z(0.4)
        .compose(&Rotation::about_y(1.1))
        .compose(&Rotation::about_z(-0.9));
    let n = Vector3::new(0.36, -0.48, 0.8);
    for l in 0..=6u32 {
        for m in -(l as i32)..=(l as i32) {
            let lhs = sph_harm(l, m, &rot.apply_inverse(&n));
            let mut rhs = Complex64::new(0.0, 0.0);
            for mp in -(l as i32)..=(l as i32) {
                rhs += wigner_d_rotation(l, mp, m, &rot) * sph_harm(l, mp, &n);
            }
            check(
                (lhs - rhs).norm() < 1e-10,
                &format!("rotation property fails at l={l} m={m}"),
            )?;
        }
    }
    Ok(())
}

/// Compares the recurrence-built coupling entries against spherical
/// quadrature of cos^2 Y Ybar. The optional fault perturbs the first
/// off-band entry, which this suite must catch.
fn coupling_matrix_quadrature(fault: Option<f64>) -> Result<(), String> {
    let grid = SphereGrid::gauss_product(16);
    for m in [0i32, 2] {
        let mat = orientkern_core::spectral::coupling_matrix(m, 10);
        let m_abs = m.unsigned_abs();
        for j in 0..6usize {
            for jp in 0..6usize {
                let l = m_abs + j as u32;
                let lp = m_abs + jp as u32;
                let mut acc = Complex64::new(0.0, 0.0);
                for (n, w) in grid.points.iter().zip(&grid.weights) {
                    acc += sph_harm(l, m, n) * sph_harm(lp, m, n).conj() * (n.z * n.z * w);
                }
                let mut want = if j == jp {
                    mat.diag[j]
                } else if j.abs_diff(jp) == 2 {
                    mat.off2[j.min(jp)]
                } else {
                    0.0
                };
                if let Some(eps) = fault {
                    if m == 0 && j == 0 && jp == 2 {
                        want = -want + eps;
                    }
                }
                check(
                    (acc.re - want).abs() < 1e-12,
                    &format!("coupling entry (m={m}, j={j}, j'={jp}) off by {}", (acc.re - want).abs()),
                )?;
            }
        }
    }
    Ok(())
}

fn eigensolver_residuals() -> Result<(), String> {
    for (m, r) in [(0i32, 1.7), (2, 5.0)] {
        let gen = orientkern_core::spectral::build_generator_matrix(m, r, 1.0, 0.2, 20)
            .map_err(|e| e.to_string())?;
        let sys = orientkern_core::spectral::eigendecompose(&gen).map_err(|e| e.to_string())?;
        let n = gen.diag.len();
        let norm_a = gen.diag.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for (idx, v) in sys.eigenvectors.iter().enumerate() {
            let lambda = sys.eigenvalues[idx];
            let mut res = 0.0f64;
            for i in 0..n {
                let mut av = gen.diag[i] * v[i];
                if i >= 2 {
                    av += gen.off2[i - 2] * v[i - 2];
                }
                if i + 2 < n {
                    av += gen.off2[i] * v[i + 2];
                }
                res += (av - lambda * v[i]).powi(2);
            }
            check(
                res.sqrt() < 1e-10 * norm_a,
                &format!("residual {} at (m={m}, r={r})", res.sqrt()),
            )?;
        }
    }
    Ok(())
}

fn uir_identity() -> Result<(), String> {
    let engine = JEngine::new(5, 2, 8.0);
    let g = GroupElement::identity();
    for s in -2i32..=2 {
        for l in s.unsigned_abs()..=5 {
            for lp in s.unsigned_abs()..=5 {
                let c = orientkern_core::ghft::uir_matrix_coefficient(&engine, 1.1, s, lp, l, &g)
                    .map_err(|e| e.to_string())?;
                let want = if l == lp { 1.0 } else { 0.0 };
                check(
                    (c.re - want).abs() < 1e-11 && c.im.abs() < 1e-11,
                    &format!("identity coefficient (s={s}, l={l}, l'={lp}) = {c}"),
                )?;
            }
        }
    }
    Ok(())
}

fn icosphere_partition() -> Result<(), String> {
    for f in [1u32, 4, 5] {
        let ico = Icosphere::new(f);
        let want = 10 * f * f + 2;
        check(
            ico.len() == want as usize,
            &format!("frequency {f}: {} centers, want {want}", ico.len()),
        )?;
        let total: f64 = ico.areas.iter().sum();
        check(
            (total - 4.0 * std::f64::consts::PI).abs() < 1e-10,
            &format!("area sum {total}"),
        )?;
    }
    Ok(())
}

fn subordinator() -> Result<(), String> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    check(
        orientkern_core::mc::sample_subordinator(2.0, 1.0, &mut rng) == 2.0,
        "alpha = 1 must be deterministic",
    )?;
    // quick Laplace check at one lambda
    let n = 50_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let tau = orientkern_core::mc::sample_subordinator(1.5, 0.5, &mut rng);
        acc += (-tau).exp();
    }
    let got = acc / n as f64;
    let want = (-1.5f64).exp();
    check(
        ((got - want) / want).abs() < 0.05,
        &format!("Laplace transform {got} vs {want}"),
    )?;
    // quadrature rule self-check used everywhere downstream
    let rule = GaussLegendre::new(24);
    let integral = rule.integrate(|x| x * x);
    check((integral - 2.0 / 3.0).abs() < 1e-14, "Gauss-Legendre rule")
}
