//! Checkpoint directories:
//!
//! ```text
//! <dir>/VERSION            "tenscorr-mtcn-checkpoint 1"
//! <dir>/arch.toml          architecture
//! <dir>/<block>.w, .b      parameter tensors (plus .hdr sidecars)
//! ```

use std::fs;
use std::path::Path;

use tenscorr_core::io::{read_tensor, write_tensor};
use tenscorr_core::DenseTensor;

use crate::arch::ArchitectureSpec;
use crate::error::{Error, Result};
use crate::state::NetworkState;

pub const CHECKPOINT_VERSION: &str = "tenscorr-mtcn-checkpoint 1";

pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    arch: &ArchitectureSpec,
    state: &NetworkState,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("VERSION"), format!("{CHECKPOINT_VERSION}\n"))?;
    fs::write(dir.join("arch.toml"), arch.to_toml()?)?;
    for (name, p) in state.params() {
        write_tensor(
            dir.join(format!("{name}.w")),
            &DenseTensor::new(p.shape.clone(), p.w.clone())?,
        )?;
        write_tensor(
            dir.join(format!("{name}.b")),
            &DenseTensor::new(vec![p.b.len()], p.b.clone())?,
        )?;
    }
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(ArchitectureSpec, NetworkState)> {
    let dir = dir.as_ref();
    let bad = |reason: String| Error::Checkpoint {
        path: dir.display().to_string(),
        reason,
    };
    let version = fs::read_to_string(dir.join("VERSION"))
        .map_err(|e| bad(format!("missing VERSION: {e}")))?;
    if version.trim() != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version `{}`", version.trim())));
    }
    let arch = ArchitectureSpec::from_toml(&fs::read_to_string(dir.join("arch.toml"))?)?;
    let mut state = NetworkState::zeros(&arch)?;
    for (name, p) in state.params_mut() {
        let w = read_tensor::<f64>(dir.join(format!("{name}.w")))?;
        let b = read_tensor::<f64>(dir.join(format!("{name}.b")))?;
        if w.shape() != p.shape.as_slice() || b.shape() != [p.b.len()] {
            return Err(bad(format!(
                "{name}: stored shapes {:?}/{:?} do not match architecture {:?}",
                w.shape(),
                b.shape(),
                p.shape
            )));
        }
        p.w = w.into_data();
        p.b = b.into_data();
    }
    if !state.is_finite() {
        return Err(bad("non-finite parameter".into()));
    }
    Ok((arch, state))
}
