//! Wake steering for wind farms: blade-element yaw response in sheared and
//! veered inflow, Gaussian wake model with secondary steering, ensemble
//! calibration, yaw set-point optimization, synthetic SCADA and energy-ratio
//! analysis of field campaigns.

pub mod error;
pub mod farm;
pub mod rotor;
pub mod wake;
pub mod calibration;
pub mod optimizer;
pub mod synthetic;
pub mod analysis;

pub use error::{Error, Result};
