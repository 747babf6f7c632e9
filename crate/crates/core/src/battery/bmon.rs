use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::pack::Pack;
use crate::scalar::Scalar;

pub const UV_TRIP_RANGE: (u16, u16) = (1580, 2750);
pub const OV_TRIP_RANGE: (u16, u16) = (4200, 4700);

/// SYS_CTRL bit that drops the monitor into ship mode.
pub const SHIP_BIT: u16 = 0x0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Register {
    UvTrip,
    OvTrip,
    /// Cell-group voltage mirror, 1..=10.
    Vc(u8),
    /// Balancing bitmask, 1..=3.
    CellBal(u8),
    SysCtrl,
    /// Fault flags: bit 0 under-trip, bit 1 over-trip.
    SysStat,
}

impl Register {
    fn read_only(self) -> bool {
        matches!(self, Register::Vc(_) | Register::SysStat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rw {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct I2cMessage {
    pub reg: Register,
    pub value: u16,
    pub rw: Rw,
}

impl I2cMessage {
    pub fn read(reg: Register) -> Self {
        Self {
            reg,
            value: 0,
            rw: Rw::Read,
        }
    }

    pub fn write(reg: Register, value: u16) -> Self {
        Self {
            reg,
            value,
            rw: Rw::Write,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum I2cReply {
    Value(u16),
    Ack,
    /// Write to a read-only register; nothing changed.
    Ignored,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum I2cError {
    #[error("BMON does not respond (ship mode)")]
    Timeout,
    #[error("no such register {0:?}")]
    NoSuchRegister(Register),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultFlags {
    pub under_trip: bool,
    pub over_trip: bool,
}

impl FaultFlags {
    fn bits(self) -> u16 {
        self.under_trip as u16 | (self.over_trip as u16) << 1
    }
}

/// BMON register file. VC registers are not stored: they are sampled from the
/// pack at read time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BmonRegisters {
    pub uv_trip: u16,
    pub ov_trip: u16,
    pub cellbal: [u16; 3],
    pub sys_ctrl: u16,
    pub faults: FaultFlags,
}

impl Default for BmonRegisters {
    fn default() -> Self {
        Self {
            uv_trip: UV_TRIP_RANGE.1,
            ov_trip: OV_TRIP_RANGE.0,
            cellbal: [0; 3],
            sys_ctrl: 0,
            faults: FaultFlags::default(),
        }
    }
}

impl BmonRegisters {
    pub fn ship_mode(&self) -> bool {
        self.sys_ctrl & SHIP_BIT != 0
    }

    pub fn balancing_enabled(&self) -> bool {
        self.cellbal.iter().any(|&b| b != 0)
    }

    /// External boot signal (charger plug-in or a fresh power-up) clears ship mode.
    pub fn boot_signal(&mut self) {
        self.sys_ctrl &= !SHIP_BIT;
    }

    pub fn access<S: Scalar>(
        &mut self,
        pack: &Pack<S>,
        msg: I2cMessage,
    ) -> Result<I2cReply, I2cError> {
        if self.ship_mode() {
            return Err(I2cError::Timeout);
        }
        match msg.rw {
            Rw::Read => {
                let v = match msg.reg {
                    Register::UvTrip => self.uv_trip,
                    Register::OvTrip => self.ov_trip,
                    Register::Vc(i) => {
                        let g = pack
                            .groups
                            .get((i as usize).wrapping_sub(1))
                            .ok_or(I2cError::NoSuchRegister(msg.reg))?;
                        g.voltage
                            .max(S::zero())
                            .round()
                            .to_u16()
                            .unwrap_or(u16::MAX)
                    }
                    Register::CellBal(i) => *self
                        .cellbal
                        .get((i as usize).wrapping_sub(1))
                        .ok_or(I2cError::NoSuchRegister(msg.reg))?,
                    Register::SysCtrl => self.sys_ctrl,
                    Register::SysStat => self.faults.bits(),
                };
                Ok(I2cReply::Value(v))
            }
            Rw::Write => {
                if msg.reg.read_only() {
                    return Ok(I2cReply::Ignored);
                }
                match msg.reg {
                    Register::UvTrip => {
                        self.uv_trip = msg.value.clamp(UV_TRIP_RANGE.0, UV_TRIP_RANGE.1)
                    }
                    Register::OvTrip => {
                        self.ov_trip = msg.value.clamp(OV_TRIP_RANGE.0, OV_TRIP_RANGE.1)
                    }
                    Register::CellBal(i) => {
                        *self
                            .cellbal
                            .get_mut((i as usize).wrapping_sub(1))
                            .ok_or(I2cError::NoSuchRegister(msg.reg))? = msg.value
                    }
                    Register::SysCtrl => self.sys_ctrl = msg.value,
                    Register::Vc(_) | Register::SysStat => unreachable!(),
                }
                Ok(I2cReply::Ack)
            }
        }
    }

    /// Compares every group against the trip registers and latches the flags
    /// for the next poll.
    pub fn protect_check<S: Scalar>(&mut self, pack: &Pack<S>) -> FaultFlags {
        let uv = S::lit(self.uv_trip as f64);
        let ov = S::lit(self.ov_trip as f64);
        self.faults = FaultFlags {
            under_trip: pack.groups.iter().any(|g| g.voltage < uv),
            over_trip: pack.groups.iter().any(|g| g.voltage > ov),
        };
        self.faults
    }
}
