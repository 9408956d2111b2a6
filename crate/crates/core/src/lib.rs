//! Modal stability analysis of abstract thermoelastic Timoshenko systems.

pub mod config;
pub mod error;
pub mod dynamics;
pub mod fit;
pub mod linalg;
pub mod modal;
pub mod params;
pub mod report;
pub mod spectral;

pub use error::{Error, Result};
pub use modal::{ModalBlock, ModalState, Model};
pub use params::{stability_number, SpectrumSpec, SystemParams};
