//! Binary feature cache.
//!
//! Layout (all integers little-endian):
//!
//! | field           | type     |
//! |-----------------|----------|
//! | magic `HWRF`    | 4 bytes  |
//! | version         | u16      |
//! | bins            | u16      |
//! | cells (h)       | u16      |
//! | window (w)      | u16      |
//! | stride          | u16      |
//! | weight mode     | u8       |
//! | standard height | u16      |
//! | source width    | u32      |
//! | frame count     | u32      |
//! | frames          | f32 × frame count × bins·h, row-major |

use std::io::{self, Read, Write};

use super::{FeatureConfig, FeatureSequence, WeightMode};

pub const CACHE_MAGIC: [u8; 4] = *b"HWRF";
pub const CACHE_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a feature cache file")]
    BadMagic,
    #[error("unsupported cache version {0}")]
    UnsupportedVersion(u16),
    #[error("corrupt cache header: {0}")]
    BadHeader(&'static str),
    #[error("cache does not match the requested feature configuration")]
    ConfigMismatch,
}

fn narrow(v: usize, what: &'static str) -> io::Result<u16> {
    u16::try_from(v).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, what))
}

pub fn write_sequence<W: Write>(
    mut out: W,
    cfg: &FeatureConfig,
    seq: &FeatureSequence,
) -> Result<(), CacheError> {
    if seq.dim() != cfg.frame_dim() {
        return Err(CacheError::ConfigMismatch);
    }
    let mut header = Vec::with_capacity(27);
    header.extend_from_slice(&CACHE_MAGIC);
    header.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    header.extend_from_slice(&narrow(cfg.bins, "bins")?.to_le_bytes());
    header.extend_from_slice(&narrow(cfg.cells, "cells")?.to_le_bytes());
    header.extend_from_slice(&narrow(cfg.window_width, "window")?.to_le_bytes());
    header.extend_from_slice(&narrow(cfg.stride, "stride")?.to_le_bytes());
    header.push(match cfg.weight_mode {
        WeightMode::Unit => 0,
        WeightMode::Magnitude => 1,
    });
    header.extend_from_slice(&narrow(cfg.standard_height, "height")?.to_le_bytes());
    header.extend_from_slice(&(seq.source_width as u32).to_le_bytes());
    header.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.write_all(&header)?;
    let mut body = Vec::with_capacity(seq.as_slice().len() * 4);
    for v in seq.as_slice() {
        body.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&body)?;
    Ok(())
}

/// Reads one sequence. When `expected` is given, the header must match it.
pub fn read_sequence<R: Read>(
    mut input: R,
    expected: Option<&FeatureConfig>,
) -> Result<(FeatureConfig, FeatureSequence), CacheError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if magic != CACHE_MAGIC {
        return Err(CacheError::BadMagic);
    }
    let mut u16buf = [0u8; 2];
    let mut read_u16 = |r: &mut R| -> io::Result<u16> {
        r.read_exact(&mut u16buf)?;
        Ok(u16::from_le_bytes(u16buf))
    };
    let version = read_u16(&mut input)?;
    if version != CACHE_VERSION {
        return Err(CacheError::UnsupportedVersion(version));
    }
    let bins = read_u16(&mut input)? as usize;
    let cells = read_u16(&mut input)? as usize;
    let window_width = read_u16(&mut input)? as usize;
    let stride = read_u16(&mut input)? as usize;
    let mut mode = [0u8; 1];
    input.read_exact(&mut mode)?;
    let weight_mode = match mode[0] {
        0 => WeightMode::Unit,
        1 => WeightMode::Magnitude,
        _ => return Err(CacheError::BadHeader("weight mode")),
    };
    let standard_height = read_u16(&mut input)? as usize;
    let mut u32buf = [0u8; 4];
    input.read_exact(&mut u32buf)?;
    let source_width = u32::from_le_bytes(u32buf) as usize;
    input.read_exact(&mut u32buf)?;
    let frames = u32::from_le_bytes(u32buf) as usize;

    let cfg = FeatureConfig {
        window_width,
        cells,
        bins,
        weight_mode,
        stride,
        standard_height,
    };
    cfg.validate()
        .map_err(|_| CacheError::BadHeader("feature parameters"))?;
    if expected.is_some_and(|e| *e != cfg) {
        return Err(CacheError::ConfigMismatch);
    }
    let dim = cfg.frame_dim();
    let mut body = vec![0u8; frames * dim * 4];
    input.read_exact(&mut body)?;
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((cfg, FeatureSequence::new(dim, data, source_width)))
}
