//! Schrödinger bridges between sampled distributions.
//!
//! One static entropic optimal transport problem is solved with a log-domain Sinkhorn
//! solver ([`sinkhorn`]). The resulting potential on the target atoms defines a
//! time-dependent drift ([`drift`]) whose SDE is simulated by Euler–Maruyama ([`sde`]).
//! Closed-form Gaussian bridges ([`gaussian`]) and sample metrics ([`metrics`]) serve
//! as ground truth.
//!
//! ```
//! use sinkhorn_bridge::{data, drift, sde, sinkhorn};
//!
//! let source = data::generate(&data::DatasetSpec::new(data::DatasetName::Gaussian, 64, 1)).unwrap();
//! let target = data::generate(&data::DatasetSpec::new(data::DatasetName::Moons, 64, 2)).unwrap();
//! let pair = sinkhorn::fit(&source, &target, &sinkhorn::SolverConfig::new(0.1)).unwrap();
//! assert!(pair.converged);
//!
//! let model = drift::from_potentials(&pair, &source, &target, drift::Direction::Forward).unwrap();
//! let batch = sde::simulate(&model, &source, &sde::SimConfig::new(0.9, 50, 0.1, 7)).unwrap();
//! assert_eq!(sde::endpoints(&batch).unwrap().len(), 64);
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub mod cli;
pub mod data;
pub mod drift;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod sde;
pub mod sinkhorn;

pub use data::{DatasetName, DatasetSpec, SampleSet};
pub use drift::{BridgeModel, Direction};
pub use error::{Error, Result};
pub use gaussian::{GaussianBridge, GaussianParams};
pub use sde::{SimConfig, TrajectoryBatch};
pub use sinkhorn::{PlanView, PotentialPair, SolverConfig};

pub(crate) fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}
