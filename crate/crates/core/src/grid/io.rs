//! `.hdf1` field files.
//!
//! Layout: 8-byte magic `HDFLD01\0`, a little-endian `u32` byte length, that
//! many bytes of UTF-8 JSON metadata
//! `{dim, extents, origin, spacing, components, bc}`, then the payload as
//! little-endian `f64`, row-major over nodes with components fastest.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Bc, Grid, GridField};
use crate::error::{Error, Result};

pub const FIELD_MAGIC: &[u8; 8] = b"HDFLD01\0";

/// Refuse metadata blobs larger than this; real headers are a few hundred bytes.
const MAX_META_LEN: usize = 1 << 16;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    dim: usize,
    extents: Vec<usize>,
    origin: Vec<f64>,
    spacing: Vec<f64>,
    components: usize,
    bc: Bc,
}

impl GridField {
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Meta {
            dim: self.grid.dim,
            extents: self.grid.extents.clone(),
            origin: self.grid.origin.clone(),
            spacing: self.grid.spacing.clone(),
            components: self.components,
            bc: self.grid.bc,
        };
        let json = serde_json::to_vec(&meta).expect("metadata serializes");
        let mut out = Vec::with_capacity(12 + json.len() + 8 * self.data.len());
        out.extend_from_slice(FIELD_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != FIELD_MAGIC {
            return Err(Error::format("magic", "missing HDFLD01 magic"));
        }
        let len_bytes: [u8; 4] = bytes
            .get(8..12)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| Error::format("header_length", "truncated header"))?;
        let meta_len = u32::from_le_bytes(len_bytes) as usize;
        if meta_len > MAX_META_LEN {
            return Err(Error::format("header_length", format!("metadata length {meta_len} too large")));
        }
        let meta_bytes = bytes
            .get(12..12 + meta_len)
            .ok_or_else(|| Error::format("header_length", "metadata extends past end of file"))?;
        let meta_str = std::str::from_utf8(meta_bytes)
            .map_err(|_| Error::format("metadata", "metadata is not UTF-8"))?;
        let meta: Meta = serde_json::from_str(meta_str)
            .map_err(|e| Error::format("metadata", e.to_string()))?;

        if !(1..=3).contains(&meta.dim) {
            return Err(Error::format("dim", format!("dimension {} not in 1..=3", meta.dim)));
        }
        for (name, len) in [
            ("extents", meta.extents.len()),
            ("origin", meta.origin.len()),
            ("spacing", meta.spacing.len()),
        ] {
            if len != meta.dim {
                return Err(Error::format(name, format!("length {len} does not match dim {}", meta.dim)));
            }
        }
        if let Some(n) = meta.extents.iter().find(|&&n| n < 3) {
            return Err(Error::format("extents", format!("extent {n} violates n >= 3")));
        }
        if meta.spacing.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::format("spacing", "spacing must be positive and finite"));
        }
        if meta.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::format("origin", "origin must be finite"));
        }
        let d = meta.dim;
        if ![1, d, d * d].contains(&meta.components) {
            return Err(Error::format("components", format!("{} components invalid for dim {d}", meta.components)));
        }
        let nodes = meta
            .extents
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::format("extents", "node count overflows"))?;
        let expected = nodes
            .checked_mul(meta.components)
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(|| Error::format("extents", "payload size overflows"))?;
        let payload = &bytes[12 + meta_len..];
        if payload.len() != expected {
            return Err(Error::format(
                "payload",
                format!("expected {expected} payload bytes, found {}", payload.len()),
            ));
        }
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("payload", "non-finite value"));
        }
        let grid = Grid::new(meta.extents, meta.origin, meta.spacing, meta.bc)
            .map_err(|e| Error::format("grid", e.to_string()))?;
        Ok(GridField {
            grid,
            components: meta.components,
            data,
        })
    }
}

pub fn save_field(field: &GridField, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&field.to_bytes()).map_err(io_err)?;
    f.sync_all().map_err(io_err)
}

pub fn load_field(path: &Path) -> Result<GridField> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    GridField::from_bytes(&bytes)
}
