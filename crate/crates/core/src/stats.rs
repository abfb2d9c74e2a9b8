//! Field-comparison metrics and the statistical tests used by the
//! verification suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Masked relative L1 and Linf distances between two fields sharing a
/// layout; cells enter when the reference exceeds `floor_frac` of its max.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct FieldDistance {
    pub rel_l1: f64,
    pub rel_linf: f64,
    pub masked_cells: usize,
}

pub fn masked_distance(
    reference: &[f64],
    other: &[f64],
    cell_weights: &[f64],
    floor_frac: f64,
) -> FieldDistance {
    assert_eq!(reference.len(), other.len());
    assert_eq!(reference.len(), cell_weights.len());
    let max_ref = reference.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = floor_frac * max_ref;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut linf = 0.0f64;
    let mut cells = 0;
    for ((&a, &b), &w) in reference.iter().zip(other).zip(cell_weights) {
        if a > floor {
            num += (a - b).abs() * w;
            den += a.abs() * w;
            linf = linf.max((a - b).abs() / max_ref);
            cells += 1;
        }
    }
    FieldDistance {
        rel_l1: if den > 0.0 { num / den } else { 0.0 },
        rel_linf: linf,
        masked_cells: cells,
    }
}

/// Two-sample chi-squared homogeneity test on count histograms, pooling
/// cells until both expected counts reach 5. Returns (statistic, dof, p).
pub fn chi2_two_sample(a: &[u64], b: &[u64]) -> (f64, usize, f64) {
    assert_eq!(a.len(), b.len());
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    assert!(na > 0 && nb > 0);
    let ra = na as f64 / (na + nb) as f64;
    let rb = nb as f64 / (na + nb) as f64;
    let mut stat = 0.0;
    let mut dof = 0usize;
    let mut pa = 0u64;
    let mut pb = 0u64;
    for (&ca, &cb) in a.iter().zip(b) {
        pa += ca;
        pb += cb;
        let tot = (pa + pb) as f64;
        if tot * ra >= 5.0 && tot * rb >= 5.0 {
            let ea = tot * ra;
            let eb = tot * rb;
            stat += (pa as f64 - ea).powi(2) / ea + (pb as f64 - eb).powi(2) / eb;
            dof += 1;
            pa = 0;
            pb = 0;
        }
    }
    // leftover pooled tail
    if pa + pb > 0 && dof > 0 {
        let tot = (pa + pb) as f64;
        let ea = (tot * ra).max(1e-9);
        let eb = (tot * rb).max(1e-9);
        stat += (pa as f64 - ea).powi(2) / ea + (pb as f64 - eb).powi(2) / eb;
        dof += 1;
    }
    let dof = dof.saturating_sub(1).max(1);
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    let p = 1.0 - dist.cdf(stat);
    (stat, dof, p)
}

/// Least-squares slope of log10(y) against log10(x).
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let lx = x.log10();
        let ly = y.log10();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Poisson-bootstrap estimate of the masked relative L1 distance between two
/// independent realizations of a histogram with the given counts: the
/// statistical floor of a scheme comparison.
pub fn l1_noise_floor(
    counts: &[u64],
    cell_weights: &[f64],
    total_paths: u64,
    floor_frac: f64,
    replicates: u32,
    seed: u64,
) -> f64 {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let max_c = counts.iter().cloned().max().unwrap_or(0) as f64;
    let floor = floor_frac * max_c;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..replicates {
        let mut num = 0.0;
        let mut den = 0.0;
        for (&c, &w) in counts.iter().zip(cell_weights) {
            if (c as f64) > floor {
                // difference of two Poisson draws around c, gaussian at these counts
                let sigma = (2.0 * c as f64).sqrt();
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                let z = (-2.0 * u.max(1e-12).ln()).sqrt()
                    * (2.0 * std::f64::consts::PI * v).cos();
                num += (sigma * z).abs() * w;
                den += c as f64 * w;
            }
        }
        acc += num / den.max(1e-300);
    }
    let _ = total_paths;
    acc / replicates as f64
}
