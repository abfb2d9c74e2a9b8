//! Run configuration: JSON documents merged with command-line overrides
//! (flags win), validated against module preconditions before any compute.

use anyhow::{bail, Context, Result};
use orientkern_core::kernels::EvolutionParams;
use orientkern_core::mc::{IncrementLaw, Scheme};
use orientkern_core::CubeGrid;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub alpha: Option<f64>,
    pub t: Option<f64>,
    pub d11: Option<f64>,
    pub d33: Option<f64>,
    pub d44: Option<f64>,
    pub lmax: Option<u32>,
    pub grid: Option<String>,
    pub icosphere_n: Option<u32>,
    pub route: Option<String>,
    pub sampling: Option<String>,
    pub pad: Option<usize>,
    pub radial_nodes: Option<usize>,
    pub paths: Option<u64>,
    pub steps: Option<u32>,
    pub seed: Option<u64>,
    pub scheme: Option<String>,
    pub law: Option<String>,
    pub threads: Option<usize>,
    pub floor: Option<f64>,
    pub fail_above: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ConfigFile = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }
}

/// `"dx:ni:nj:nk"`.
pub fn parse_grid(spec: &str) -> Result<CubeGrid> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 4 {
        bail!("grid spec must be dx:ni:nj:nk (got {spec:?})");
    }
    let ds: f64 = parts[0].parse().context("grid dx")?;
    let ni: i32 = parts[1].parse().context("grid ni")?;
    let nj: i32 = parts[2].parse().context("grid nj")?;
    let nk: i32 = parts[3].parse().context("grid nk")?;
    if ds <= 0.0 {
        bail!("grid dx must be positive (got {ds})");
    }
    if ni < 0 || nj < 0 || nk < 0 {
        bail!("grid half-extents must be nonnegative");
    }
    Ok(CubeGrid::new(ds, ni, nj, nk))
}

pub fn parse_scheme(s: &str) -> Result<Scheme> {
    match s {
        "quotient" => Ok(Scheme::Quotient),
        "group-exponential" => Ok(Scheme::GroupExponential),
        other => bail!("unknown scheme {other:?} (quotient | group-exponential)"),
    }
}

pub fn parse_law(s: &str) -> Result<IncrementLaw> {
    match s {
        "polar-g" => Ok(IncrementLaw::PolarG),
        "uniform-pair" => Ok(IncrementLaw::UniformPair),
        "gaussian-pair" => Ok(IncrementLaw::GaussianPair),
        other => bail!("unknown increment law {other:?} (polar-g | uniform-pair | gaussian-pair)"),
    }
}

/// Merged evolution parameters with defaults from the experiments section of
/// the comparison setup.
pub fn merge_params(
    cfg: &ConfigFile,
    alpha: Option<f64>,
    t: Option<f64>,
    d11: Option<f64>,
    d33: Option<f64>,
    d44: Option<f64>,
) -> Result<EvolutionParams> {
    let params = EvolutionParams::new(
        alpha.or(cfg.alpha).unwrap_or(1.0),
        t.or(cfg.t).unwrap_or(2.0),
        d11.or(cfg.d11).unwrap_or(0.0),
        d33.or(cfg.d33).unwrap_or(1.0),
        d44.or(cfg.d44).unwrap_or(0.2),
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(params)
}

pub fn merge_grid(cfg: &ConfigFile, flag: Option<&str>) -> Result<CubeGrid> {
    match flag.or(cfg.grid.as_deref()) {
        Some(spec) => parse_grid(spec),
        None => Ok(CubeGrid::new(0.5, 3, 3, 5)),
    }
}
