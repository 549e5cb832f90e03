//! Concrete probes: a `D`-level thermometer coupled to a bosonic bath and a
//! driven, damped qubit.

pub mod rabi;
pub mod thermometry;

pub use rabi::{RabiBasis, RabiModel};
pub use thermometry::{thermal_fi, ThermoMeasurement, ThermoRates, ThermometryModel};
