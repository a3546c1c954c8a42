//! Per-sample result cache under `output_dir/.cache`.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energy_torque::{hex, SampleResult, SweepOptions};
use crate::geometry::GripperGeometry;
use crate::magnetostatics::{RegionMaterials, SolveStats};
use crate::mesh::MeshParams;

/// Bumped whenever the numerics change so stale entries stop matching.
const CACHE_SALT: &str = concat!("magspring-sample-v1-", env!("CARGO_PKG_VERSION"));

/// Everything a single coenergy sample depends on.
#[derive(Serialize)]
struct KeyInput<'a> {
    salt: &'a str,
    geometry: &'a GripperGeometry,
    materials: &'a RegionMaterials,
    mesh: &'a MeshParams,
    theta_bits: u64,
    options: &'a SweepOptions,
}

/// Floats are stored as raw bits so a hit is bit-identical to the original.
#[derive(Serialize, Deserialize)]
struct Entry {
    theta_bits: u64,
    w_co_bits: u64,
    elements: usize,
    stats: Vec<StoredStats>,
}

#[derive(Serialize, Deserialize)]
struct StoredStats {
    method: String,
    iterations: usize,
    residual_bits: u64,
    dofs: usize,
    nnz: usize,
}

#[derive(Debug, Clone)]
pub struct ResultCache {
    dir: PathBuf,
}

impl ResultCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Cache rooted at `output_dir/.cache`.
    pub fn in_output_dir(output_dir: &Path) -> Self {
        Self::new(output_dir.join(".cache"))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(
        g: &GripperGeometry,
        materials: &RegionMaterials,
        mesh: &MeshParams,
        theta: f64,
        options: &SweepOptions,
    ) -> String {
        let input = KeyInput {
            salt: CACHE_SALT,
            geometry: g,
            materials,
            mesh,
            theta_bits: theta.to_bits(),
            options,
        };
        let bytes = serde_json::to_vec(&input).expect("cache key serializes");
        hex(&Sha256::digest(&bytes))
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Stored sample, or `None` when absent or unreadable.
    pub fn get(&self, key: &str) -> Option<SampleResult> {
        let text = std::fs::read(self.path(key)).ok()?;
        let e: Entry = match serde_json::from_slice(&text) {
            Ok(e) => e,
            Err(err) => {
                log::warn!("ignoring corrupt cache entry {key}: {err}");
                return None;
            }
        };
        Some(SampleResult {
            theta: f64::from_bits(e.theta_bits),
            w_co: f64::from_bits(e.w_co_bits),
            elements: e.elements,
            stats: e
                .stats
                .into_iter()
                .map(|s| SolveStats {
                    method: s.method,
                    iterations: s.iterations,
                    relative_residual: f64::from_bits(s.residual_bits),
                    dofs: s.dofs,
                    nnz: s.nnz,
                })
                .collect(),
        })
    }

    /// Write-temp-then-rename, so readers never see a partial entry.
    pub fn put(&self, key: &str, s: &SampleResult) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let e = Entry {
            theta_bits: s.theta.to_bits(),
            w_co_bits: s.w_co.to_bits(),
            elements: s.elements,
            stats: s
                .stats
                .iter()
                .map(|st| StoredStats {
                    method: st.method.clone(),
                    iterations: st.iterations,
                    residual_bits: st.relative_residual.to_bits(),
                    dofs: st.dofs,
                    nnz: st.nnz,
                })
                .collect(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer(&mut tmp, &e)?;
        tmp.flush()?;
        tmp.persist(self.path(key)).map_err(|e| e.error)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::MaterialLibrary;
    use crate::mesh::Region;

    fn sample() -> SampleResult {
        SampleResult {
            theta: 0.1f64.sqrt(),
            w_co: -1.0 / 3.0,
            elements: 1234,
            stats: vec![SolveStats {
                method: "cholesky".into(),
                iterations: 0,
                relative_residual: 1e-17 / 3.0,
                dofs: 600,
                nnz: 4000,
            }],
        }
    }

    fn materials() -> RegionMaterials {
        let lib = MaterialLibrary::builtin();
        RegionMaterials::from([
            (Region::Air, lib.get("air").unwrap().magnetic),
            (Region::Mre, lib.get("MRE_RTV").unwrap().magnetic),
            (Region::Pm, lib.get("NdFeB").unwrap().magnetic),
        ])
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResultCache::new(dir.path().join("c"));
        let s = sample();
        assert!(cache.get("k").is_none());
        cache.put("k", &s).unwrap();
        let back = cache.get("k").unwrap();
        assert_eq!(back.theta.to_bits(), s.theta.to_bits());
        assert_eq!(back.w_co.to_bits(), s.w_co.to_bits());
        assert_eq!(back, s);
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResultCache::new(dir.path());
        std::fs::write(dir.path().join("bad.json"), b"{not json").unwrap();
        assert!(cache.get("bad").is_none());
    }

    #[test]
    fn key_depends_on_every_input() {
        let g = GripperGeometry::default();
        let m = materials();
        let p = MeshParams::default();
        let o = SweepOptions::default();
        let base = ResultCache::key(&g, &m, &p, 0.5, &o);
        assert_eq!(base, ResultCache::key(&g, &m, &p, 0.5, &o));
        assert_eq!(base.len(), 64);
        let g2 = GripperGeometry { d_pm: 21e-3, ..g };
        let mut m2 = m.clone();
        m2.insert(Region::Mre, crate::materials::MaterialModel::permeable(4.0));
        let p2 = MeshParams { h_max: 0.4e-3, ..p };
        let o2 = SweepOptions { parallel_assembly: true, ..o };
        for k in [
            ResultCache::key(&g2, &m, &p, 0.5, &o),
            ResultCache::key(&g, &m2, &p, 0.5, &o),
            ResultCache::key(&g, &m, &p2, 0.5, &o),
            ResultCache::key(&g, &m, &p, 0.5f64.next_up(), &o),
            ResultCache::key(&g, &m, &p, 0.5, &o2),
        ] {
            assert_ne!(k, base);
        }
    }
}
