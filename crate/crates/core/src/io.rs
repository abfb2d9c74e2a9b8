//! Binary field formats with JSON sidecars.
//!
//! `ORKF`: header (magic, version u32, grid dims i32x3, ds f64, orientation
//! count u32, flags u32), then f64 values in (i, j, k, orientation) order,
//! little-endian. `GHSP`: header (magic, version u32, n_s, n_p, n_l u32),
//! then the complex64 tensor in (s, p, l, l') row-major order. Grids and
//! parameters travel in the sidecar written next to the binary.

use crate::ghft::{GhGrid, GhSpectrum};
use crate::grids::CubeGrid;
use crate::kernels::EvolutionParams;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad file format: {0}")]
    Format(String),
}

pub const ORKF_FLAG_EMPIRICAL: u32 = 1;
pub const ORKF_FLAG_CLAMPED: u32 = 2;

/// Everything needed to reproduce a field, carried by the sidecar.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub params: EvolutionParams,
    pub grid: CubeGrid,
    pub icosphere_frequency: Option<u32>,
    pub route: String,
    pub l_max: Option<u32>,
    pub pad: Option<usize>,
    pub radial_nodes: Option<usize>,
    pub sampling: Option<String>,
    pub empirical: Option<EmpiricalMeta>,
    pub clamped: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalMeta {
    pub paths: u64,
    pub steps: u32,
    pub seed: u64,
    pub scheme: String,
    pub captured_fraction: f64,
}

/// On-disk kernel field.
#[derive(Clone, Debug)]
pub struct OrkfFile {
    pub grid: CubeGrid,
    pub n_orientations: usize,
    pub flags: u32,
    pub values: Vec<f64>,
    pub sidecar: FieldSidecar,
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    std::path::PathBuf::from(s)
}

pub fn write_orkf(
    path: &Path,
    grid: &CubeGrid,
    n_orientations: usize,
    flags: u32,
    values: &[f64],
    sidecar: &FieldSidecar,
) -> Result<(), IoError> {
    if values.len() != grid.len() * n_orientations {
        return Err(IoError::Format(format!(
            "value count {} does not match grid x orientations {}",
            values.len(),
            grid.len() * n_orientations
        )));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(b"ORKF")?;
    f.write_all(&1u32.to_le_bytes())?;
    for d in [grid.ni, grid.nj, grid.nk] {
        f.write_all(&d.to_le_bytes())?;
    }
    f.write_all(&grid.ds.to_le_bytes())?;
    f.write_all(&(n_orientations as u32).to_le_bytes())?;
    f.write_all(&flags.to_le_bytes())?;
    for v in values {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    let json = serde_json::to_vec_pretty(sidecar)?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn read_orkf(path: &Path) -> Result<OrkfFile, IoError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != b"ORKF" {
        return Err(IoError::Format("missing ORKF magic".into()));
    }
    let version = read_u32(&mut f)?;
    if version != 1 {
        return Err(IoError::Format(format!("unsupported ORKF version {version}")));
    }
    let ni = read_i32(&mut f)?;
    let nj = read_i32(&mut f)?;
    let nk = read_i32(&mut f)?;
    let ds = read_f64(&mut f)?;
    let n_orientations = read_u32(&mut f)? as usize;
    let flags = read_u32(&mut f)?;
    let grid = CubeGrid::new(ds, ni, nj, nk);
    let n = grid.len() * n_orientations;
    let mut values = vec![0.0f64; n];
    for v in &mut values {
        *v = read_f64(&mut f)?;
    }
    let sidecar: FieldSidecar =
        serde_json::from_slice(&std::fs::read(sidecar_path(path))?)?;
    Ok(OrkfFile {
        grid,
        n_orientations,
        flags,
        values,
        sidecar,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GhspSidecar {
    pub p_max: f64,
    pub radial_nodes: usize,
    pub s_max: u32,
    pub l_max: u32,
    pub params: Option<EvolutionParams>,
}

pub fn write_ghsp(path: &Path, spec: &GhSpectrum, params: Option<EvolutionParams>) -> Result<(), IoError> {
    let g = &spec.grid;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(b"GHSP")?;
    f.write_all(&1u32.to_le_bytes())?;
    f.write_all(&(g.n_s() as u32).to_le_bytes())?;
    f.write_all(&(g.p_nodes.len() as u32).to_le_bytes())?;
    f.write_all(&(g.n_l() as u32).to_le_bytes())?;
    for c in &spec.coeffs {
        f.write_all(&c.re.to_le_bytes())?;
        f.write_all(&c.im.to_le_bytes())?;
    }
    f.flush()?;
    let sidecar = GhspSidecar {
        p_max: g.p_max,
        radial_nodes: g.p_nodes.len(),
        s_max: g.s_max,
        l_max: g.l_max,
        params,
    };
    std::fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_ghsp(path: &Path) -> Result<(GhSpectrum, GhspSidecar), IoError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != b"GHSP" {
        return Err(IoError::Format("missing GHSP magic".into()));
    }
    let version = read_u32(&mut f)?;
    if version != 1 {
        return Err(IoError::Format(format!("unsupported GHSP version {version}")));
    }
    let n_s = read_u32(&mut f)? as usize;
    let n_p = read_u32(&mut f)? as usize;
    let n_l = read_u32(&mut f)? as usize;
    let sidecar: GhspSidecar = serde_json::from_slice(&std::fs::read(sidecar_path(path))?)?;
    if n_s != 2 * sidecar.s_max as usize + 1
        || n_p != sidecar.radial_nodes
        || n_l != sidecar.l_max as usize + 1
    {
        return Err(IoError::Format("sidecar grid disagrees with header".into()));
    }
    let grid = GhGrid::new(sidecar.p_max, sidecar.radial_nodes, sidecar.s_max, sidecar.l_max);
    let mut spec = GhSpectrum::zeros(grid);
    for c in &mut spec.coeffs {
        let re = read_f64(&mut f)?;
        let im = read_f64(&mut f)?;
        *c = Complex64::new(re, im);
    }
    Ok((spec, sidecar))
}

fn read_u32(f: &mut impl Read) -> Result<u32, IoError> {
    let mut b = [0u8; 4];
    f.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_i32(f: &mut impl Read) -> Result<i32, IoError> {
    let mut b = [0u8; 4];
    f.read_exact(&mut b)?;
    Ok(i32::from_le_bytes(b))
}

fn read_f64(f: &mut impl Read) -> Result<f64, IoError> {
    let mut b = [0u8; 8];
    f.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
