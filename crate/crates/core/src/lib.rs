pub mod attacks;
pub mod battery;
pub mod bctrl;
pub mod bus;
pub mod fwpipe;
pub mod periph;
pub mod scalar;
pub mod scenario;
pub mod simkern;

pub use scalar::Scalar;

/// Double-precision pack used by the simulator.
pub type BatteryPack = battery::Pack<f64>;
pub type BatteryPackF32 = battery::Pack<f32>;
pub type CellGroup = battery::CellGroup<f64>;
