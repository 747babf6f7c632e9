//! Lumped electrochemical model of the 10s3p pack and the battery monitor
//! (BMON) register file behind its I2C slave endpoint.

mod bmon;
mod pack;

pub use bmon::{BmonRegisters, FaultFlags, I2cError, I2cMessage, I2cReply, Register, Rw, SHIP_BIT};
pub use pack::{
    ocv_mv, x_at_voltage, CellGroup, DegradationRates, Pack, PackSpec, Thresholds,
    BALANCE_DISSIPATION, BALANCE_TRANSFER_MAH, CAPACITY_FLOOR, DEEP_RESERVE, KNEE_MV, KNEE_X,
    MAX_DEGRADATION_FACTOR, R1_PER_HOUR, R2_PER_HOUR,
};
