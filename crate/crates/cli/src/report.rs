//! The exact-vs-Monte-Carlo comparison report.

use crate::config::ConfigFile;
use anyhow::{bail, Result};
use orientkern_core::io::read_orkf;
use orientkern_core::stats::masked_distance;
use orientkern_core::Icosphere;
use serde::Serialize;
use std::path::Path;
use std::time::Instant;

#[derive(Serialize)]
pub struct ComparisonReport {
    pub masked_rel_l1: f64,
    pub masked_rel_linf: f64,
    pub masked_cells: usize,
    pub floor_frac: f64,
    pub captured_mass_reference: f64,
    pub captured_mass_other: f64,
    /// tail mass of `other` over tail mass of `reference`, beyond twice the
    /// half-max radius of the reference
    pub tail_mass_ratio: f64,
    pub per_orientation_rel_l1: Vec<f64>,
    pub runtime_seconds: f64,
    pub reference: String,
    pub other: String,
    pub config_echo: ConfigEcho,
}

#[derive(Serialize)]
pub struct ConfigEcho {
    pub reference_sidecar: orientkern_core::io::FieldSidecar,
    pub other_sidecar: orientkern_core::io::FieldSidecar,
}

pub fn cmd_compare(
    cfg: &ConfigFile,
    reference: &Path,
    other: &Path,
    fail_above: Option<f64>,
    floor: Option<f64>,
    report_path: Option<&Path>,
) -> Result<i32> {
    let started = Instant::now();
    let a = read_orkf(reference)?;
    let b = read_orkf(other)?;
    if a.grid != b.grid || a.n_orientations != b.n_orientations {
        bail!("grid mismatch: {:?} x {} vs {:?} x {}", a.grid, a.n_orientations, b.grid, b.n_orientations);
    }
    let floor_frac = floor.or(cfg.floor).unwrap_or(0.01);
    let freq = a
        .sidecar
        .icosphere_frequency
        .ok_or_else(|| anyhow::anyhow!("reference sidecar lacks the orientation layout"))?;
    let ico = Icosphere::new(freq);
    if ico.len() != a.n_orientations {
        bail!("orientation count disagrees with the icosphere frequency");
    }
    let n_or = ico.len();
    let dv = a.grid.cell_volume();
    let weights: Vec<f64> = (0..a.values.len())
        .map(|idx| dv * ico.areas[idx % n_or])
        .collect();
    let dist = masked_distance(&a.values, &b.values, &weights, floor_frac);

    let mass = |v: &[f64]| -> f64 {
        v.iter()
            .zip(&weights)
            .map(|(val, w)| val * w)
            .sum()
    };
    let mass_a = mass(&a.values);
    let mass_b = mass(&b.values);

    // half-max radius of the orientation-maxed profile of the reference
    let mut profile_max = vec![0.0f64; a.grid.len()];
    for (xi, chunk) in a.values.chunks(n_or).enumerate() {
        profile_max[xi] = chunk.iter().cloned().fold(0.0, f64::max);
    }
    let peak = profile_max.iter().cloned().fold(0.0, f64::max);
    let mut r_half: f64 = 0.0;
    for (i, j, k) in a.grid.iter_indices() {
        if profile_max[a.grid.flat_index(i, j, k)] >= 0.5 * peak {
            r_half = r_half.max(a.grid.center(i, j, k).norm());
        }
    }
    let mut tail_a = 0.0;
    let mut tail_b = 0.0;
    for (i, j, k) in a.grid.iter_indices() {
        if a.grid.center(i, j, k).norm() > 2.0 * r_half {
            let xi = a.grid.flat_index(i, j, k);
            for q in 0..n_or {
                tail_a += a.values[xi * n_or + q] * weights[xi * n_or + q];
                tail_b += b.values[xi * n_or + q] * weights[xi * n_or + q];
            }
        }
    }
    let tail_mass_ratio = if tail_a > 0.0 { tail_b / tail_a } else { f64::NAN };

    let mut per_orientation = vec![0.0f64; n_or];
    {
        let max_ref = a.values.iter().cloned().fold(0.0f64, f64::max);
        for q in 0..n_or {
            let mut num = 0.0;
            let mut den = 0.0;
            for xi in 0..a.grid.len() {
                let va = a.values[xi * n_or + q];
                if va > floor_frac * max_ref {
                    num += (va - b.values[xi * n_or + q]).abs();
                    den += va;
                }
            }
            per_orientation[q] = if den > 0.0 { num / den } else { 0.0 };
        }
    }

    let report = ComparisonReport {
        masked_rel_l1: dist.rel_l1,
        masked_rel_linf: dist.rel_linf,
        masked_cells: dist.masked_cells,
        floor_frac,
        captured_mass_reference: mass_a,
        captured_mass_other: mass_b,
        tail_mass_ratio,
        per_orientation_rel_l1: per_orientation,
        runtime_seconds: started.elapsed().as_secs_f64(),
        reference: reference.display().to_string(),
        other: other.display().to_string(),
        config_echo: ConfigEcho {
            reference_sidecar: a.sidecar,
            other_sidecar: b.sidecar,
        },
    };

    println!("comparison ({} vs {})", report.reference, report.other);
    println!("  masked rel L1   = {:.6}", report.masked_rel_l1);
    println!("  masked rel Linf = {:.6}", report.masked_rel_linf);
    println!(
        "  masked cells    = {} (floor {:.3} of max)",
        report.masked_cells, report.floor_frac
    );
    println!(
        "  captured mass   = {:.6} (reference) / {:.6} (other)",
        report.captured_mass_reference, report.captured_mass_other
    );
    println!("  tail mass ratio = {:.4}", report.tail_mass_ratio);
    let worst_q = report
        .per_orientation_rel_l1
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(q, v)| format!("bin {q}: {v:.4}"))
        .unwrap_or_default();
    println!("  worst orientation slice: {worst_q}");
    if let Some(path) = report_path {
        std::fs::write(path, serde_json::to_vec_pretty(&report)?)?;
        println!("  report written to {}", path.display());
    }
    if let Some(limit) = fail_above.or(cfg.fail_above) {
        if report.masked_rel_l1 > limit {
            eprintln!(
                "comparison threshold exceeded: {:.6} > {limit}",
                report.masked_rel_l1
            );
            return Ok(crate::EXIT_THRESHOLD);
        }
    }
    Ok(0)
}
