//! Restartable snapshots of the full particle-system state.
//!
//! A checkpoint is a directory holding `checkpoint.json` and one TSF file per
//! stored field: the reset data of each replica and the forward and inverse
//! displacements of each copy. Copy velocities, means and Gram matrices are
//! recomputed on load, so a resumed run continues bit-for-bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::ensemble::{EnsembleState, PrevRecord, ReplicaParts, ResetLog};
use crate::error::{Error, Result};
use crate::flow::{BrownianState, FlowMap, InverseMap};
use crate::torus::{read_snapshot, write_snapshot, Snapshot, VectorField};

pub const MANIFEST: &str = "checkpoint.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    step: u64,
    t: f64,
    m: usize,
    t_reset: f64,
    config_hash: String,
    config: SimConfig,
    log: ResetLog,
    replicas: Vec<ReplicaManifest>,
}

#[derive(Serialize, Deserialize)]
struct ReplicaManifest {
    id: usize,
    e_reset: f64,
    energy_at_reset: f64,
    prev_record: Option<PrevRecord>,
    noise: Vec<BrownianState>,
}

fn reset_file(r: usize) -> String {
    format!("r{r}_u_reset.tsf")
}

fn flow_file(r: usize, c: usize) -> String {
    format!("r{r}_c{c}_flow.tsf")
}

fn inverse_file(r: usize, c: usize) -> String {
    format!("r{r}_c{c}_inverse.tsf")
}

pub fn save_checkpoint(dir: &Path, state: &EnsembleState) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut replicas = Vec::with_capacity(state.replicas.len());
    for (r, rep) in state.replicas.iter().enumerate() {
        write_snapshot(
            dir.join(reset_file(r)),
            &Snapshot::Vector(rep.u_reset.clone()),
        )?;
        for (c, copy) in rep.copies.iter().enumerate() {
            write_snapshot(
                dir.join(flow_file(r, c)),
                &Snapshot::Vector(copy.flow.displacement().clone()),
            )?;
            write_snapshot(
                dir.join(inverse_file(r, c)),
                &Snapshot::Vector(copy.inverse.displacement().clone()),
            )?;
        }
        replicas.push(ReplicaManifest {
            id: rep.id,
            e_reset: rep.e_reset,
            energy_at_reset: rep.energy_at_reset,
            prev_record: rep.prev_record,
            noise: rep.copies.iter().map(|c| c.noise.clone()).collect(),
        });
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        step: state.step,
        t: state.t,
        m: state.m,
        t_reset: state.t_reset,
        config_hash: state.config.hash(),
        config: state.config.clone(),
        log: state.log.clone(),
        replicas,
    };
    // the manifest goes last so a partial write is never mistaken for a checkpoint
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn read_vector(path: PathBuf) -> Result<VectorField> {
    match read_snapshot(&path)? {
        Snapshot::Vector(v) => Ok(v),
        _ => Err(Error::Snapshot {
            path,
            reason: "expected a vector field".into(),
        }),
    }
}

/// Loads a checkpoint; the stored config must hash to the stored hash.
pub fn load_checkpoint(dir: &Path) -> Result<EnsembleState> {
    let text = fs::read(dir.join(MANIFEST))?;
    let man: Manifest = serde_json::from_slice(&text)?;
    if man.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            man.version
        )));
    }
    if man.config.hash() != man.config_hash {
        return Err(Error::Checkpoint("config hash mismatch".into()));
    }
    man.config.validate()?;
    if man.replicas.len() != man.config.replicas {
        return Err(Error::Checkpoint(
            "replica count does not match config".into(),
        ));
    }
    let mut parts = Vec::with_capacity(man.replicas.len());
    for (r, rm) in man.replicas.into_iter().enumerate() {
        if rm.noise.len() != man.config.copies {
            return Err(Error::Checkpoint(format!(
                "replica {r}: copy count does not match config"
            )));
        }
        let u_reset = read_vector(dir.join(reset_file(r)))?;
        let mut copies = Vec::with_capacity(rm.noise.len());
        for (c, noise) in rm.noise.into_iter().enumerate() {
            let flow = FlowMap::from_displacement(read_vector(dir.join(flow_file(r, c)))?)?;
            let inverse =
                InverseMap::from_displacement(read_vector(dir.join(inverse_file(r, c)))?)?;
            copies.push((flow, inverse, noise));
        }
        parts.push(ReplicaParts {
            id: rm.id,
            u_reset,
            e_reset: rm.e_reset,
            energy_at_reset: rm.energy_at_reset,
            prev_record: rm.prev_record,
            copies,
        });
    }
    let state = EnsembleState::restore(man.config, man.step, man.m, man.t_reset, man.log, parts)?;
    if state.t != man.t {
        return Err(Error::Checkpoint(
            "stored time does not match step count".into(),
        ));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::run_observed;

    fn cfg() -> SimConfig {
        SimConfig {
            n: 16,
            copies: 3,
            replicas: 2,
            nu: 0.1,
            epsilon: 0.9,
            dt: 0.05,
            t_final: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut st = EnsembleState::new(&cfg()).unwrap();
        st.record();
        for _ in 0..4 {
            st.step().unwrap();
        }
        save_checkpoint(dir.path(), &st).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back.step, st.step);
        for (a, b) in st.replicas.iter().zip(&back.replicas) {
            assert_eq!(a.u_mean, b.u_mean);
            assert_eq!(a.gram, b.gram);
        }
        let a = run_observed(st, |_| Ok(())).unwrap();
        let b = run_observed(back, |_| Ok(())).unwrap();
        assert_eq!(a.step, b.step);
        assert_eq!(a.log, b.log);
        for (x, y) in a.replicas.iter().zip(&b.replicas) {
            assert_eq!(x.u_mean, y.u_mean);
        }
    }

    #[test]
    fn rejects_tampered_config() {
        let dir = tempfile::tempdir().unwrap();
        let st = EnsembleState::new(&cfg()).unwrap();
        save_checkpoint(dir.path(), &st).unwrap();
        let p = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&p)
            .unwrap()
            .replace("\"copies\": 3", "\"copies\": 4");
        fs::write(&p, text).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn missing_manifest_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
    }
}
