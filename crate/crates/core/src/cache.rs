//! Content-addressed corrector cache.
//!
//! An entry is a directory named by the SHA-256 of the coefficient spec,
//! resolutions, truncation radius, defect method and solver tolerance. It
//! holds `w_per_<j>.hdf1` and, with a defect, `w_tilde_<j>.hdf1`. Entries are
//! written to a private temporary directory and renamed into place, so a
//! visible entry is always complete and never modified afterwards.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::coefficients::CoefficientSpec;
use crate::correctors::{defect_box_grid, CorrectorSet, DefectMethod};
use crate::error::{Error, Result};
use crate::grid::{load_field, save_field};
use crate::solver::SolverOptions;

pub const CACHE_ENV: &str = "HOMODEFECT_CACHE";

#[derive(Clone, Debug)]
pub struct CorrectorCache {
    dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Miss,
}

impl CorrectorCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(CorrectorCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(
        spec: &CoefficientSpec,
        cell_resolution: usize,
        box_resolution: usize,
        truncation_radius: f64,
        method: DefectMethod,
        options: &SolverOptions,
    ) -> String {
        let descriptor = serde_json::json!({
            "spec": spec.content_hash(),
            "cell_resolution": cell_resolution,
            "box_resolution": box_resolution,
            "truncation_radius": truncation_radius.to_bits(),
            "method": method,
            "tol": options.tol.to_bits(),
        });
        hex::encode(Sha256::digest(descriptor.to_string().as_bytes()))
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(key)
    }

    pub fn load_or_compute(
        &self,
        spec: &CoefficientSpec,
        cell_resolution: usize,
        box_resolution: usize,
        truncation_radius: f64,
        method: DefectMethod,
        options: &SolverOptions,
    ) -> Result<(CorrectorSet, CacheOutcome)> {
        let key = Self::key(spec, cell_resolution, box_resolution, truncation_radius, method, options);
        let entry = self.entry_path(&key);
        if entry.is_dir() {
            match self.load(&entry, spec, cell_resolution, box_resolution, truncation_radius, method) {
                Ok(set) => return Ok((set, CacheOutcome::Hit)),
                Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", entry.display()),
            }
        }
        let (set, _) = CorrectorSet::compute(spec, cell_resolution, box_resolution, truncation_radius, method, options)?;
        self.store(&entry, &set)?;
        Ok((set, CacheOutcome::Miss))
    }

    fn load(
        &self,
        entry: &Path,
        spec: &CoefficientSpec,
        cell_resolution: usize,
        box_resolution: usize,
        truncation_radius: f64,
        method: DefectMethod,
    ) -> Result<CorrectorSet> {
        let mut periodic = Vec::with_capacity(spec.dim);
        let mut defect = Vec::with_capacity(spec.dim);
        let mut radius = 0.0;
        for j in 0..spec.dim {
            let w = load_field(&entry.join(format!("w_per_{j}.hdf1")))?;
            if w.grid.dim != spec.dim || w.grid.extents[0] != cell_resolution {
                return Err(Error::format("w_per", "cached field does not match the request"));
            }
            periodic.push(w);
            if spec.has_defect() {
                let wt = load_field(&entry.join(format!("w_tilde_{j}.hdf1")))?;
                radius = wt.grid.bounds().hi[0];
                defect.push(Some(wt));
            } else {
                defect.push(None);
            }
        }
        if !spec.has_defect() {
            radius = defect_box_grid(spec.dim, truncation_radius, box_resolution)?.bounds().hi[0];
        }
        Ok(CorrectorSet::from_parts(
            spec.dim,
            cell_resolution,
            box_resolution,
            radius,
            method,
            periodic,
            defect,
        ))
    }

    fn store(&self, entry: &Path, set: &CorrectorSet) -> Result<()> {
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0);
        let tmp = self.dir.join(format!(".tmp-{}-{nanos}", std::process::id()));
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| Error::Io { path, source }
        };
        fs::create_dir_all(&tmp).map_err(io(&tmp))?;
        for (j, w) in set.periodic.iter().enumerate() {
            save_field(w, &tmp.join(format!("w_per_{j}.hdf1")))?;
        }
        for (j, w) in set.defect.iter().enumerate() {
            if let Some(w) = w {
                save_field(w, &tmp.join(format!("w_tilde_{j}.hdf1")))?;
            }
        }
        match fs::rename(&tmp, entry) {
            Ok(()) => Ok(()),
            // another writer froze the entry first; theirs is equivalent
            Err(_) if entry.is_dir() => {
                let _ = fs::remove_dir_all(&tmp);
                Ok(())
            }
            Err(source) => {
                let _ = fs::remove_dir_all(&tmp);
                Err(Error::Io {
                    path: entry.to_path_buf(),
                    source,
                })
            }
        }
    }
}

/// Cache directory precedence: explicit flag, then `HOMODEFECT_CACHE`, then config.
pub fn resolve_cache_dir(flag: Option<&Path>, config: Option<&Path>) -> Option<PathBuf> {
    if let Some(p) = flag {
        return Some(p.to_path_buf());
    }
    if let Some(v) = std::env::var_os(CACHE_ENV) {
        if !v.is_empty() {
            return Some(PathBuf::from(v));
        }
    }
    config.map(Path::to_path_buf)
}
