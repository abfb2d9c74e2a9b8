//! `orientkern`: exact and Monte-Carlo kernels of orientation diffusion on
//! positions-and-orientations space, with a comparison harness.

mod config;
mod report;
mod selftest;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use config::ConfigFile;
use orientkern_core::io::{
    read_orkf, write_orkf, EmpiricalMeta, FieldSidecar, ORKF_FLAG_CLAMPED, ORKF_FLAG_EMPIRICAL,
};
use orientkern_core::kernels::{
    kernel_gh_fourier, kernel_spatial_fourier, SpatialOptions,
};
use orientkern_core::mc::{run_walks, BinGrid, WalkConfig};
use orientkern_core::{CubeGrid, Icosphere};
use std::path::PathBuf;
use std::time::Instant;

const EXIT_THRESHOLD: i32 = 1;
const EXIT_CONFIG: i32 = 2;
const EXIT_NUMERIC: i32 = 3;

#[derive(Parser)]
#[command(name = "orientkern", version, about)]
struct Cli {
    /// Worker threads (default: ORIENTKERN_THREADS or all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config file; explicit flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the exact kernel field and write an ORKF file
    Exact {
        #[arg(long)]
        out: PathBuf,
        /// spatial | gh
        #[arg(long)]
        route: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        d11: Option<f64>,
        #[arg(long)]
        d33: Option<f64>,
        #[arg(long)]
        d44: Option<f64>,
        #[arg(long)]
        lmax: Option<u32>,
        /// dx:ni:nj:nk
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        icosphere_n: Option<u32>,
        /// center | bin-mean
        #[arg(long)]
        sampling: Option<String>,
        #[arg(long)]
        pad: Option<usize>,
        #[arg(long)]
        radial_nodes: Option<usize>,
    },
    /// Simulate random walks and write the binned empirical kernel
    Mc {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        paths: Option<u64>,
        #[arg(long)]
        steps: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        /// quotient | group-exponential
        #[arg(long)]
        scheme: Option<String>,
        /// polar-g | uniform-pair | gaussian-pair
        #[arg(long)]
        law: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        d11: Option<f64>,
        #[arg(long)]
        d33: Option<f64>,
        #[arg(long)]
        d44: Option<f64>,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        icosphere_n: Option<u32>,
    },
    /// Compare two kernel fields on matching grids
    Compare {
        reference: PathBuf,
        other: PathBuf,
        /// nonzero exit when the masked relative L1 exceeds this
        #[arg(long)]
        fail_above: Option<f64>,
        /// mask floor as a fraction of the reference max
        #[arg(long)]
        floor: Option<f64>,
        /// write the JSON report here
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Dump generator eigenvalues as CSV (columns m,l,r,lambda)
    Spectrum {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        d33: Option<f64>,
        #[arg(long)]
        d44: Option<f64>,
        #[arg(long)]
        lmax: Option<u32>,
        /// start:stop:count
        #[arg(long)]
        r: Option<String>,
    },
    /// Run the fast invariant suites
    Selftest,
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("ORIENTKERN_THREADS")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("rayon pool");
    }
    let cfg = match &cli.config {
        Some(path) => match ConfigFile::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("config error: {e:#}");
                std::process::exit(EXIT_CONFIG);
            }
        },
        None => ConfigFile::default(),
    };
    let code = match dispatch(cli, cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let e_str = format!("{e:#}");
            if e_str.contains("invalid parameter")
                || e_str.contains("config")
                || e_str.contains("grid")
                || e_str.contains("unknown")
            {
                EXIT_CONFIG
            } else {
                EXIT_NUMERIC
            }
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli, cfg: ConfigFile) -> Result<i32> {
    match cli.command {
        Command::Exact {
            out,
            route,
            alpha,
            t,
            d11,
            d33,
            d44,
            lmax,
            grid,
            icosphere_n,
            sampling,
            pad,
            radial_nodes,
        } => cmd_exact(
            &cfg,
            out,
            route,
            alpha,
            t,
            d11,
            d33,
            d44,
            lmax,
            grid.as_deref(),
            icosphere_n,
            sampling,
            pad,
            radial_nodes,
        ),
        Command::Mc {
            out,
            paths,
            steps,
            seed,
            scheme,
            law,
            alpha,
            t,
            d11,
            d33,
            d44,
            grid,
            icosphere_n,
        } => cmd_mc(
            &cfg,
            out,
            paths,
            steps,
            seed,
            scheme,
            law,
            alpha,
            t,
            d11,
            d33,
            d44,
            grid.as_deref(),
            icosphere_n,
        ),
        Command::Compare {
            reference,
            other,
            fail_above,
            floor,
            report,
        } => report::cmd_compare(&cfg, &reference, &other, fail_above, floor, report.as_deref()),
        Command::Spectrum {
            out,
            d33,
            d44,
            lmax,
            r,
        } => cmd_spectrum(&cfg, out, d33, d44, lmax, r.as_deref()),
        Command::Selftest => cmd_selftest(),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_exact(
    cfg: &ConfigFile,
    out: PathBuf,
    route: Option<String>,
    alpha: Option<f64>,
    t: Option<f64>,
    d11: Option<f64>,
    d33: Option<f64>,
    d44: Option<f64>,
    lmax: Option<u32>,
    grid_flag: Option<&str>,
    icosphere_n: Option<u32>,
    sampling: Option<String>,
    pad: Option<usize>,
    radial_nodes: Option<usize>,
) -> Result<i32> {
    let started = Instant::now();
    let params = config::merge_params(cfg, alpha, t, d11, d33, d44)
        .context("invalid parameter set")?;
    let grid = config::merge_grid(cfg, grid_flag)?;
    let l_max = lmax.or(cfg.lmax).unwrap_or(12);
    let freq = icosphere_n.or(cfg.icosphere_n).unwrap_or(5);
    let route = route.or_else(|| cfg.route.clone()).unwrap_or_else(|| "spatial".into());
    let sampling = sampling
        .or_else(|| cfg.sampling.clone())
        .unwrap_or_else(|| "center".into());
    if sampling != "center" && sampling != "bin-mean" {
        bail!("invalid parameter: sampling must be center or bin-mean (got {sampling:?})");
    }
    let pad = pad.or(cfg.pad).unwrap_or(2);
    let nodes = radial_nodes.or(cfg.radial_nodes).unwrap_or(96);
    let ico = Icosphere::new(freq);

    let (mut values, route_name) = match route.as_str() {
        "spatial" => {
            let mut opts = SpatialOptions::new(l_max);
            opts.pad = pad;
            opts.cell_average = sampling == "bin-mean";
            let field = kernel_spatial_fourier(&params, &grid, &opts)
                .map_err(|e| anyhow!("numeric failure: {e}"))?;
            let values = if sampling == "bin-mean" {
                field.sample_bin_averaged(&ico)
            } else {
                field.sample(&ico.centers)
            };
            println!("mass = {:.6}", field.mass());
            (values, "spatial")
        }
        "gh" => {
            let values = kernel_gh_fourier(&params, &grid, &ico.centers, l_max, nodes)
                .map_err(|e| anyhow!("numeric failure: {e}"))?;
            (values, "gh")
        }
        other => bail!("invalid parameter: route must be spatial or gh (got {other:?})"),
    };
    let max_v = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // clamp truncation lobes only in the exported probability field
    let mut clamped = false;
    for v in &mut values {
        if *v < 0.0 {
            *v = 0.0;
            clamped = true;
        }
    }
    let sidecar = FieldSidecar {
        params,
        grid,
        icosphere_frequency: Some(freq),
        route: route_name.into(),
        l_max: Some(l_max),
        pad: Some(pad),
        radial_nodes: Some(nodes),
        sampling: Some(sampling),
        empirical: None,
        clamped,
    };
    let flags = if clamped { ORKF_FLAG_CLAMPED } else { 0 };
    write_orkf(&out, &grid, ico.len(), flags, &values, &sidecar)?;
    println!(
        "wrote {} ({} cells x {} orientations), max = {:.6e}, {:.2?}",
        out.display(),
        grid.len(),
        ico.len(),
        max_v,
        started.elapsed()
    );
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_mc(
    cfg: &ConfigFile,
    out: PathBuf,
    paths: Option<u64>,
    steps: Option<u32>,
    seed: Option<u64>,
    scheme: Option<String>,
    law: Option<String>,
    alpha: Option<f64>,
    t: Option<f64>,
    d11: Option<f64>,
    d33: Option<f64>,
    d44: Option<f64>,
    grid_flag: Option<&str>,
    icosphere_n: Option<u32>,
) -> Result<i32> {
    let started = Instant::now();
    let params = config::merge_params(cfg, alpha, t, d11, d33, d44)
        .context("invalid parameter set")?;
    let grid = config::merge_grid(cfg, grid_flag)?;
    let freq = icosphere_n.or(cfg.icosphere_n).unwrap_or(5);
    let scheme = config::parse_scheme(
        scheme
            .or_else(|| cfg.scheme.clone())
            .unwrap_or_else(|| "quotient".into())
            .as_str(),
    )?;
    let law = config::parse_law(
        law.or_else(|| cfg.law.clone())
            .unwrap_or_else(|| "polar-g".into())
            .as_str(),
    )?;
    let walk = WalkConfig {
        steps: steps.or(cfg.steps).unwrap_or(40),
        paths: paths.or(cfg.paths).unwrap_or(1_000_000),
        params,
        seed: seed.or(cfg.seed).unwrap_or(0),
        law,
        scheme,
    };
    walk.validate().map_err(|e| anyhow!("invalid parameter: {e}"))?;
    let bins = BinGrid::new(grid, Icosphere::new(freq));
    let emp = run_walks(&walk, &bins);
    let sidecar = FieldSidecar {
        params,
        grid,
        icosphere_frequency: Some(freq),
        route: "mc".into(),
        l_max: None,
        pad: None,
        radial_nodes: None,
        sampling: None,
        empirical: Some(EmpiricalMeta {
            paths: walk.paths,
            steps: walk.steps,
            seed: walk.seed,
            scheme: format!("{:?}", walk.scheme),
            captured_fraction: emp.captured_fraction(),
        }),
        clamped: false,
    };
    write_orkf(
        &out,
        &grid,
        bins.sphere.len(),
        ORKF_FLAG_EMPIRICAL,
        &emp.densities,
        &sidecar,
    )?;
    println!(
        "wrote {} (N = {}, M = {}, captured = {:.4}), {:.2?}",
        out.display(),
        walk.paths,
        walk.steps,
        emp.captured_fraction(),
        started.elapsed()
    );
    Ok(0)
}

fn cmd_spectrum(
    cfg: &ConfigFile,
    out: Option<PathBuf>,
    d33: Option<f64>,
    d44: Option<f64>,
    lmax: Option<u32>,
    r_spec: Option<&str>,
) -> Result<i32> {
    let d33 = d33.or(cfg.d33).unwrap_or(1.0);
    let d44 = d44.or(cfg.d44).unwrap_or(0.2);
    if d33 < 0.0 || d44 <= 0.0 {
        bail!("invalid parameter: need D33 >= 0 and D44 > 0");
    }
    let l_max = lmax.or(cfg.lmax).unwrap_or(12);
    let (r0, r1, nr) = match r_spec {
        Some(s) => {
            let p: Vec<&str> = s.split(':').collect();
            if p.len() != 3 {
                bail!("invalid parameter: r spec must be start:stop:count");
            }
            (
                p[0].parse::<f64>().context("r start")?,
                p[1].parse::<f64>().context("r stop")?,
                p[2].parse::<usize>().context("r count")?,
            )
        }
        None => (0.0, 10.0, 21),
    };
    if nr < 1 || r1 < r0 || r0 < 0.0 {
        bail!("invalid parameter: r range must be nonnegative and increasing");
    }
    let mut csv = String::from("m,l,r,lambda\n");
    for m in -(l_max as i32)..=(l_max as i32) {
        for ir in 0..nr {
            let r = if nr == 1 {
                r0
            } else {
                r0 + (r1 - r0) * ir as f64 / (nr - 1) as f64
            };
            let sys = orientkern_core::spectral::eigensystem(m, r, d33, d44, 2 * l_max as usize)
                .map_err(|e| anyhow!("numeric failure: {e}"))?;
            for l in m.unsigned_abs()..=l_max {
                csv.push_str(&format!("{m},{l},{r},{:.15e}\n", sys.lambda(l)));
            }
        }
    }
    match out {
        Some(path) => {
            std::fs::write(&path, csv)?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(0)
}

fn cmd_selftest() -> Result<i32> {
    let started = Instant::now();
    let results = selftest::run_all(None);
    let mut failed = 0;
    for r in &results {
        match &r.outcome {
            Ok(()) => println!("PASS {}", r.name),
            Err(msg) => {
                println!("FAIL {}: {msg}", r.name);
                failed += 1;
            }
        }
    }
    println!(
        "{}/{} suites passed in {:.2?}",
        results.len() - failed,
        results.len(),
        started.elapsed()
    );
    Ok(if failed == 0 { 0 } else { EXIT_NUMERIC })
}
