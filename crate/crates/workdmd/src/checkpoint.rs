//! JSON checkpoints of the online operator state and the feature-map sidecar.
//!
//! Floats are written with shortest round-trip formatting, so a restored state
//! is bit-identical to the saved one.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use workdmd_core::operator::{KdmdState, OperatorConfig, StateParts};
use workdmd_core::rff::RffMap;

use crate::config::FrequencyVariance;
use crate::error::{Error, Result};
use crate::report::{read_json, write_json};

const FORMAT_VERSION: u32 = 1;

/// Dense matrix as shape plus column-major data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixRecord {
    fn from(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.as_slice().to_vec(),
        }
    }
}

impl MatrixRecord {
    fn into_matrix(self, what: &str) -> Result<DMatrix<f64>> {
        if self.rows * self.cols != self.data.len() {
            return Err(Error::Config(format!(
                "checkpoint matrix {what}: {}×{} needs {} values, found {}",
                self.rows,
                self.cols,
                self.rows * self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_vec(self.rows, self.cols, self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateCheckpoint {
    pub version: u32,
    /// Seed of the feature map the windows were lifted with.
    pub seed: u64,
    pub p: MatrixRecord,
    pub a: MatrixRecord,
    pub lifted_window: MatrixRecord,
    pub physical_window: MatrixRecord,
    pub epsilon: f64,
    pub epsilon_scale: f64,
    pub refresh_period: usize,
    pub step_count: u64,
    pub slides_since_init: usize,
    pub reinit_count: u64,
    pub lift_count: u64,
}

impl StateCheckpoint {
    pub fn capture(state: &KdmdState, seed: u64) -> Self {
        let parts = state.to_parts();
        Self {
            version: FORMAT_VERSION,
            seed,
            p: (&parts.p).into(),
            a: (&parts.a).into(),
            lifted_window: (&parts.lifted_window).into(),
            physical_window: (&parts.physical_window).into(),
            epsilon: parts.epsilon,
            epsilon_scale: parts.config.epsilon_scale,
            refresh_period: parts.config.refresh_period,
            step_count: parts.step_count,
            slides_since_init: parts.slides_since_init,
            reinit_count: parts.reinit_count,
            lift_count: parts.lift_count,
        }
    }

    pub fn restore(self) -> Result<KdmdState> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} is not supported (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        let parts = StateParts {
            p: self.p.into_matrix("P")?,
            a: self.a.into_matrix("A")?,
            lifted_window: self.lifted_window.into_matrix("lifted window")?,
            physical_window: self.physical_window.into_matrix("physical window")?,
            epsilon: self.epsilon,
            step_count: self.step_count,
            slides_since_init: self.slides_since_init,
            reinit_count: self.reinit_count,
            lift_count: self.lift_count,
            config: OperatorConfig {
                epsilon_scale: self.epsilon_scale,
                refresh_period: self.refresh_period,
            },
        };
        Ok(KdmdState::from_parts(parts)?)
    }
}

pub fn save_state(path: &Path, state: &KdmdState, seed: u64) -> Result<()> {
    write_json(path, &StateCheckpoint::capture(state, seed))
}

/// Restored state and the map seed stored with it.
pub fn load_state(path: &Path) -> Result<(KdmdState, u64)> {
    let ckpt: StateCheckpoint = read_json(path)?;
    let seed = ckpt.seed;
    Ok((ckpt.restore()?, seed))
}

/// Enough to regenerate a feature map bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSidecar {
    pub seed: u64,
    pub input_dim: usize,
    pub s: usize,
    pub gamma: f64,
    pub frequency_variance: FrequencyVariance,
}

impl MapSidecar {
    pub fn describe(map: &RffMap) -> Self {
        Self {
            seed: map.seed(),
            input_dim: map.input_dim(),
            s: map.dim(),
            gamma: map.gamma(),
            frequency_variance: map.scale().into(),
        }
    }

    pub fn regenerate(&self) -> Result<RffMap> {
        Ok(RffMap::sample_with_scale(
            self.input_dim,
            self.s,
            self.gamma,
            self.seed,
            self.frequency_variance.into(),
        )?)
    }
}

pub fn save_map(path: &Path, map: &RffMap) -> Result<()> {
    write_json(path, &MapSidecar::describe(map))
}

pub fn load_map(path: &Path) -> Result<RffMap> {
    read_json::<MapSidecar>(path)?.regenerate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use workdmd_core::embed::{hankel_block, new_hankel_column, snapshot_pair, window_at};
    use workdmd_core::operator::init_from_snapshots;
    use workdmd_core::rff::FrequencyScale;
    use workdmd_core::series::{gen_synthetic, presets};

    fn bits(m: &DMatrix<f64>) -> Vec<u64> {
        m.iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn resumed_run_is_bit_identical() {
        let z = gen_synthetic(&presets::tones(&[7.0, 13.0], 200)).unwrap();
        let (w, d) = (24, 4);
        let pair = snapshot_pair(&hankel_block(&window_at(&z, 60, w).unwrap(), d).unwrap()).unwrap();
        let map = RffMap::sample_with_scale(d, 40, 0.05, 9, FrequencyScale::Gamma).unwrap();
        let mut state = init_from_snapshots(&pair, &map, OperatorConfig::default()).unwrap();
        for t in 60..80 {
            state.slide(&new_hankel_column(&z, t + 1, d).unwrap(), &map).unwrap();
        }

        let dir = tempfile::tempdir().unwrap();
        let (sp, mp) = (dir.path().join("state.json"), dir.path().join("map.json"));
        save_state(&sp, &state, map.seed()).unwrap();
        save_map(&mp, &map).unwrap();
        let (mut restored, seed) = load_state(&sp).unwrap();
        let map2 = load_map(&mp).unwrap();
        assert_eq!(seed, 9);
        assert_eq!(map2, map);
        assert_eq!(restored, state);

        for t in 80..110 {
            let col = new_hankel_column(&z, t + 1, d).unwrap();
            state.slide(&col, &map).unwrap();
            restored.slide(&col, &map2).unwrap();
        }
        assert_eq!(bits(state.p()), bits(restored.p()));
        assert_eq!(bits(state.a()), bits(restored.a()));
        assert_eq!(state.step_count(), restored.step_count());
    }

    #[test]
    fn malformed_checkpoints_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"version": 1, "extra": true}"#).unwrap();
        assert!(load_state(&path).is_err());

        let rec = MatrixRecord {
            rows: 2,
            cols: 2,
            data: vec![1.0; 3],
        };
        assert!(rec.into_matrix("P").unwrap_err().to_string().contains("needs 4"));
    }
}
