//! UART frame layout and checksum.
//!
//! Wire format: `sender, receiver, type, command, len, payload[len], crc_lo, crc_hi`.
//! Bit 7 of the type byte marks a secure-channel wrapped frame.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simkern::Millis;

pub const MAX_PAYLOAD: usize = 64;
const HEADER_LEN: usize = 5;
const WRAPPED_BIT: u8 = 0x80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u8);

impl NodeId {
    pub const BTS: NodeId = NodeId(0x20);
    pub const BCTRL: NodeId = NodeId(0x22);
    pub const DRV: NodeId = NodeId(0x23);
    pub const CHARGER: NodeId = NodeId(0x24);
    pub const EXTERNAL: NodeId = NodeId(0x3D);
    /// Receiver code used by bus-flooding dummy traffic.
    pub const BROADCAST: NodeId = NodeId(0xFF);

    pub fn name(self) -> Option<&'static str> {
        Some(match self {
            NodeId::BTS => "BTS",
            NodeId::BCTRL => "BCTRL",
            NodeId::DRV => "DRV",
            NodeId::CHARGER => "CHARGER",
            NodeId::EXTERNAL => "EXT",
            NodeId::BROADCAST => "ALL",
            _ => return None,
        })
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(n) => f.write_str(n),
            None => write!(f, "0x{:02X}", self.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PacketType {
    Read,
    Write,
    UpdateCtl,
    Notify,
}

impl PacketType {
    pub fn code(self) -> u8 {
        match self {
            PacketType::Read => 0x01,
            PacketType::Write => 0x03,
            PacketType::UpdateCtl => 0x04,
            PacketType::Notify => 0x05,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0x01 => PacketType::Read,
            0x03 => PacketType::Write,
            0x04 => PacketType::UpdateCtl,
            0x05 => PacketType::Notify,
            _ => return None,
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            PacketType::Read => "read",
            PacketType::Write => "write",
            PacketType::UpdateCtl => "update",
            PacketType::Notify => "notify",
        }
    }
}

/// Command bytes understood by the simulated nodes.
pub mod cmd {
    pub const DRV_ID: u8 = 0x10;
    pub const PASSWORD_HASH: u8 = 0x17;
    pub const ERROR_NOTIFY: u8 = 0x1B;
    pub const MILEAGE: u8 = 0x29;
    pub const LAST_TRAVEL: u8 = 0x2F;
    pub const AVG_SPEED: u8 = 0x30;
    pub const BATT_LEVEL: u8 = 0x32;
    pub const POWER_OFF: u8 = 0x3E;
    pub const CELL_VOLTAGES: u8 = 0x40;
    pub const BLE_NAME: u8 = 0x50;
    pub const LOCK: u8 = 0x70;
    pub const UNLOCK: u8 = 0x71;
    pub const RESET: u8 = 0x72;
    pub const LIGHTS: u8 = 0x7D;
    pub const FW_BEGIN: u8 = 0x07;
    pub const FW_CHUNK: u8 = 0x08;
    pub const FW_END: u8 = 0x09;
    pub const FW_FINALIZE: u8 = 0x0A;
    pub const UNLOCK_CODE: u8 = 0xEE;
    pub const DUMMY: u8 = 0xFF;

    pub fn is_update(c: u8) -> bool {
        matches!(c, FW_BEGIN | FW_CHUNK | FW_END | FW_FINALIZE)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("crc mismatch: frame carries {found:#06x}, computed {expected:#06x}")]
    CrcMismatch { expected: u16, found: u16 },
    #[error("truncated frame")]
    Truncated,
    #[error("payload of {0} bytes exceeds the 64-byte limit")]
    OversizePayload(usize),
    #[error("unknown packet type {0:#04x}")]
    UnknownType(u8),
}

/// Complement-of-sum checksum.
pub fn compute_crc(bytes: &[u8]) -> u16 {
    let sum = bytes
        .iter()
        .fold(0u16, |acc, &b| acc.wrapping_add(b as u16));
    0xFFFF - sum
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UartFrame {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub ptype: PacketType,
    pub command: u8,
    pub payload: Vec<u8>,
    /// Set when the payload is a secure-channel envelope.
    pub wrapped: bool,
}

impl UartFrame {
    pub fn new(
        sender: NodeId,
        receiver: NodeId,
        ptype: PacketType,
        command: u8,
        payload: Vec<u8>,
    ) -> Self {
        Self {
            sender,
            receiver,
            ptype,
            command,
            payload,
            wrapped: false,
        }
    }

    fn type_byte(&self) -> u8 {
        self.ptype.code() | if self.wrapped { WRAPPED_BIT } else { 0 }
    }

    /// The four header bytes the secure channel authenticates.
    pub fn header(&self) -> [u8; 4] {
        [
            self.sender.0,
            self.receiver.0,
            self.type_byte(),
            self.command,
        ]
    }

    pub fn crc(&self) -> u16 {
        // Only valid frames have a CRC; oversize payloads are caught by encode.
        let mut bytes = self.header().to_vec();
        bytes.push(self.payload.len() as u8);
        bytes.extend_from_slice(&self.payload);
        compute_crc(&bytes)
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(FrameError::OversizePayload(self.payload.len()));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len() + 2);
        out.extend_from_slice(&self.header());
        out.push(self.payload.len() as u8);
        out.extend_from_slice(&self.payload);
        let crc = compute_crc(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < HEADER_LEN + 2 {
            return Err(FrameError::Truncated);
        }
        let len = bytes[4] as usize;
        if len > MAX_PAYLOAD {
            return Err(FrameError::OversizePayload(len));
        }
        if bytes.len() != HEADER_LEN + len + 2 {
            return Err(FrameError::Truncated);
        }
        let body = &bytes[..HEADER_LEN + len];
        let found = u16::from_le_bytes([bytes[HEADER_LEN + len], bytes[HEADER_LEN + len + 1]]);
        let expected = compute_crc(body);
        if found != expected {
            return Err(FrameError::CrcMismatch { expected, found });
        }
        let ptype = PacketType::from_code(bytes[2] & !WRAPPED_BIT)
            .ok_or(FrameError::UnknownType(bytes[2]))?;
        Ok(Self {
            sender: NodeId(bytes[0]),
            receiver: NodeId(bytes[1]),
            ptype,
            command: bytes[3],
            payload: bytes[HEADER_LEN..HEADER_LEN + len].to_vec(),
            wrapped: bytes[2] & WRAPPED_BIT != 0,
        })
    }

    /// One line of the frame dump used by golden-file tests.
    pub fn dump_line(&self, t: Millis) -> String {
        format!(
            "t={} {}→{} type={} cmd=0x{:02X} payload={} crc={:04x}{}",
            t,
            self.sender,
            self.receiver,
            self.ptype.label(),
            self.command,
            hex::encode(&self.payload),
            self.crc(),
            if self.wrapped { " [wrapped]" } else { "" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc_examples() {
        assert_eq!(compute_crc(&[]), 0xFFFF);
        assert_eq!(compute_crc(&[0x01]), 0xFFFE);
        // 0x22 + 0x20 + 0x01 + 0x10 = 0x53
        assert_eq!(compute_crc(&[0x22, 0x20, 0x01, 0x10]), 0xFFFF - 0x53);
        assert_eq!(compute_crc(&[0x22, 0x20, 0x01, 0x10]), 0xFFAC);
    }

    #[test]
    fn roundtrip_and_bitflip() {
        let f = UartFrame::new(
            NodeId::BCTRL,
            NodeId::DRV,
            PacketType::Read,
            cmd::MILEAGE,
            vec![1, 2, 3],
        );
        let mut bytes = f.encode().unwrap();
        assert_eq!(UartFrame::decode(&bytes).unwrap(), f);
        bytes[6] ^= 0x04;
        assert!(matches!(
            UartFrame::decode(&bytes),
            Err(FrameError::CrcMismatch { .. })
        ));
    }

    #[test]
    fn oversize_and_truncated() {
        let f = UartFrame::new(NodeId::BTS, NodeId::DRV, PacketType::Write, 0, vec![0; 65]);
        assert_eq!(f.encode(), Err(FrameError::OversizePayload(65)));
        let ok = UartFrame::new(NodeId::BTS, NodeId::DRV, PacketType::Write, 0, vec![0; 64]);
        let bytes = ok.encode().unwrap();
        assert_eq!(
            UartFrame::decode(&bytes[..bytes.len() - 1]),
            Err(FrameError::Truncated)
        );
        assert_eq!(UartFrame::decode(&[0x20]), Err(FrameError::Truncated));
    }

    #[test]
    fn dump_format() {
        let mut f = UartFrame::new(
            NodeId::BCTRL,
            NodeId::BTS,
            PacketType::Notify,
            cmd::BLE_NAME,
            vec![0xAB],
        );
        assert_eq!(
            f.dump_line(1200),
            "t=1200 BCTRL→BTS type=notify cmd=0x50 payload=ab crc=febc"
        );
        f.wrapped = true;
        assert!(f.dump_line(0).ends_with(" [wrapped]"));
    }
}
