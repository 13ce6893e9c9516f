//! CSV and binary artifact writers.
//!
//! CSV files are UTF-8 with a header row, '.' decimal separator and LF
//! line endings; floats print in Rust's shortest-roundtrip form, so a
//! fixed seed reproduces byte-identical files. The binary ensemble format
//! is a little-endian versioned container: magic `GWIB`, format version,
//! a hash of the canonical config JSON, the master seed, path count and
//! horizon, then the raw population (and optional immigration) counts.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::diffusion::DiffusionPath;
use crate::gw_engine::{GWConfig, GWPath};
use crate::moments::MomentTable;
use crate::step_process::StepFunction;

const MAGIC: &[u8; 4] = b"GWIB";
const BINARY_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not an ensemble file (bad magic)")]
    BadMagic,
    #[error("unsupported ensemble format version {0}")]
    BadVersion(u32),
    #[error("config hash mismatch: file {file:#018x}, expected {expected:#018x}")]
    ConfigHashMismatch { file: u64, expected: u64 },
    #[error("truncated ensemble file")]
    Truncated,
}

/// FNV-1a over the canonical config JSON; stable across runs and
/// platforms.
pub fn config_hash(config: &GWConfig) -> u64 {
    let json = serde_json::to_string(config).expect("config serialization");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in json.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Paths as rows `path_id,k,x_k[,eps_k],m_k`; `eps_k` and `m_k` are blank
/// at k = 0.
pub fn write_paths_csv<W: Write>(w: &mut W, paths: &[GWPath], m_eps: f64) -> io::Result<()> {
    let with_eps = paths.iter().all(|p| p.eps.is_some());
    if with_eps {
        writeln!(w, "path_id,k,x_k,eps_k,m_k")?;
    } else {
        writeln!(w, "path_id,k,x_k,m_k")?;
    }
    for path in paths {
        let m = path.martingale_differences(m_eps);
        for (k, &x) in path.x.iter().enumerate() {
            if k == 0 {
                if with_eps {
                    writeln!(w, "{},0,{},,", path.seed_id, x)?;
                } else {
                    writeln!(w, "{},0,{},", path.seed_id, x)?;
                }
            } else if with_eps {
                let eps = path.eps.as_ref().expect("checked")[k - 1];
                writeln!(w, "{},{},{},{},{}", path.seed_id, k, x, eps, m[k - 1])?;
            } else {
                writeln!(w, "{},{},{},{}", path.seed_id, k, x, m[k - 1])?;
            }
        }
    }
    Ok(())
}

/// Moment table rows `k,mean_x,var_x,mean_m2` (NaN prints as an empty
/// cell).
pub fn write_moment_table_csv<W: Write>(w: &mut W, table: &MomentTable) -> io::Result<()> {
    writeln!(w, "k,mean_x,var_x,mean_m2")?;
    let cell = |v: f64| {
        if v.is_nan() {
            String::new()
        } else {
            format!("{v}")
        }
    };
    for (i, &k) in table.k_values.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            k,
            cell(table.mean_x[i]),
            cell(table.var_x[i]),
            cell(table.mean_m2[i])
        )?;
    }
    Ok(())
}

/// Step function rows `k,t_left,value`.
pub fn write_step_csv<W: Write>(w: &mut W, f: &StepFunction) -> io::Result<()> {
    writeln!(w, "k,t_left,value")?;
    for (k, &v) in f.values().iter().enumerate() {
        writeln!(w, "{},{},{}", k, k as f64 / f.n() as f64, v)?;
    }
    Ok(())
}

/// Diffusion trajectory rows `t,value`.
pub fn write_diffusion_csv<W: Write>(w: &mut W, path: &DiffusionPath) -> io::Result<()> {
    writeln!(w, "t,value")?;
    for (t, v) in path.times.iter().zip(&path.values) {
        writeln!(w, "{t},{v}")?;
    }
    Ok(())
}

/// Endpoint ensemble as a single `value` column.
pub fn write_endpoints_csv<W: Write>(w: &mut W, endpoints: &[f64]) -> io::Result<()> {
    writeln!(w, "value")?;
    for v in endpoints {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

/// Compact binary ensemble: header then per-path `K+1` population counts
/// and, when recorded, `K` immigration counts (all u64 little-endian).
pub fn write_ensemble_binary<W: Write>(
    w: &mut W,
    config: &GWConfig,
    master_seed: u64,
    paths: &[GWPath],
) -> io::Result<()> {
    let with_eps = paths.iter().all(|p| p.eps.is_some());
    w.write_all(MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&config_hash(config).to_le_bytes())?;
    w.write_all(&master_seed.to_le_bytes())?;
    w.write_all(&(paths.len() as u64).to_le_bytes())?;
    w.write_all(&config.horizon.to_le_bytes())?;
    w.write_all(&[u8::from(with_eps)])?;
    for path in paths {
        for &x in &path.x {
            w.write_all(&x.to_le_bytes())?;
        }
        if with_eps {
            for &e in path.eps.as_ref().expect("checked") {
                w.write_all(&e.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Header of a binary ensemble file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnsembleHeader {
    pub config_hash: u64,
    pub master_seed: u64,
    pub n_paths: u64,
    pub horizon: u64,
    pub with_eps: bool,
}

/// Read a binary ensemble written by [`write_ensemble_binary`], verifying
/// magic, version and (when a config is supplied) the config hash.
pub fn read_ensemble_binary<R: Read>(
    r: &mut R,
    expected_config: Option<&GWConfig>,
) -> Result<(EnsembleHeader, Vec<GWPath>), ExportError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, len: usize| -> Result<&[u8], ExportError> {
        if *pos + len > buf.len() {
            return Err(ExportError::Truncated);
        }
        let s = &buf[*pos..*pos + len];
        *pos += len;
        Ok(s)
    };
    let u64_at = |pos: &mut usize| -> Result<u64, ExportError> {
        Ok(u64::from_le_bytes(take(pos, 8)?.try_into().expect("len 8")))
    };

    if take(&mut pos, 4)? != MAGIC {
        return Err(ExportError::BadMagic);
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().expect("len 4"));
    if version != BINARY_VERSION {
        return Err(ExportError::BadVersion(version));
    }
    let header = EnsembleHeader {
        config_hash: u64_at(&mut pos)?,
        master_seed: u64_at(&mut pos)?,
        n_paths: u64_at(&mut pos)?,
        horizon: u64_at(&mut pos)?,
        with_eps: take(&mut pos, 1)?[0] != 0,
    };
    if let Some(config) = expected_config {
        let expected = config_hash(config);
        if expected != header.config_hash {
            return Err(ExportError::ConfigHashMismatch {
                file: header.config_hash,
                expected,
            });
        }
    }
    let mut paths = Vec::with_capacity(header.n_paths as usize);
    for i in 0..header.n_paths {
        let mut x = Vec::with_capacity(header.horizon as usize + 1);
        for _ in 0..=header.horizon {
            x.push(u64_at(&mut pos)?);
        }
        let eps = if header.with_eps {
            let mut e = Vec::with_capacity(header.horizon as usize);
            for _ in 0..header.horizon {
                e.push(u64_at(&mut pos)?);
            }
            Some(e)
        } else {
            None
        };
        paths.push(GWPath { x, eps, seed_id: i });
    }
    Ok((header, paths))
}
