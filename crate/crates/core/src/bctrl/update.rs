//! Chunked firmware transfer over UART.
//!
//! `0x07 begin [total u32 BE, chunks u16 BE]`, `0x08 chunk [seq u16 BE, data]`,
//! `0x09 end`, `0x0A finalize`.

use serde::Serialize;

use crate::bus::{cmd, NodeId, PacketType, UartFrame};

pub const CHUNK_LEN: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateState {
    Idle,
    Receiving,
    Validating,
    Installed,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UpdateStep {
    /// Frame consumed, nothing to report.
    Progress,
    /// Chunk out of sequence or malformed control frame; session cleared.
    Reset(&'static str),
    /// Finalize received with a complete buffer.
    ImageReady(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FwUpdateSession {
    pub expected_chunks: u16,
    pub expected_len: u32,
    pub received: u16,
    pub image_buffer: Vec<u8>,
    pub state: UpdateState,
}

impl Default for FwUpdateSession {
    fn default() -> Self {
        Self {
            expected_chunks: 0,
            expected_len: 0,
            received: 0,
            image_buffer: Vec::new(),
            state: UpdateState::Idle,
        }
    }
}

impl FwUpdateSession {
    fn reset(&mut self, why: &'static str) -> UpdateStep {
        *self = Self::default();
        UpdateStep::Reset(why)
    }

    pub fn handle(&mut self, command: u8, payload: &[u8]) -> UpdateStep {
        match command {
            cmd::FW_BEGIN => {
                if payload.len() != 6 {
                    return self.reset("malformed begin");
                }
                *self = Self {
                    expected_len: u32::from_be_bytes(payload[..4].try_into().unwrap()),
                    expected_chunks: u16::from_be_bytes([payload[4], payload[5]]),
                    state: UpdateState::Receiving,
                    ..Self::default()
                };
                UpdateStep::Progress
            }
            cmd::FW_CHUNK => {
                if self.state != UpdateState::Receiving || payload.len() < 2 {
                    return self.reset("chunk outside transfer");
                }
                let seq = u16::from_be_bytes([payload[0], payload[1]]);
                if seq != self.received || seq >= self.expected_chunks {
                    return self.reset("out-of-order chunk");
                }
                self.image_buffer.extend_from_slice(&payload[2..]);
                self.received += 1;
                UpdateStep::Progress
            }
            cmd::FW_END => {
                if self.state != UpdateState::Receiving
                    || self.received != self.expected_chunks
                    || self.image_buffer.len() != self.expected_len as usize
                {
                    return self.reset("incomplete transfer");
                }
                self.state = UpdateState::Validating;
                UpdateStep::Progress
            }
            cmd::FW_FINALIZE => {
                if self.state != UpdateState::Validating {
                    return self.reset("finalize before transfer complete");
                }
                UpdateStep::ImageReady(std::mem::take(&mut self.image_buffer))
            }
            _ => UpdateStep::Progress,
        }
    }

    pub fn conclude(&mut self, accepted: bool) {
        self.state = if accepted {
            UpdateState::Installed
        } else {
            UpdateState::Rejected
        };
    }
}

/// Frames that carry `image` from `from` to `to`.
pub fn chunk_image(from: NodeId, to: NodeId, image: &[u8]) -> Vec<UartFrame> {
    let chunks: Vec<&[u8]> = image.chunks(CHUNK_LEN).collect();
    let mut begin = (image.len() as u32).to_be_bytes().to_vec();
    begin.extend_from_slice(&(chunks.len() as u16).to_be_bytes());
    let mut out = vec![UartFrame::new(
        from,
        to,
        PacketType::UpdateCtl,
        cmd::FW_BEGIN,
        begin,
    )];
    for (i, c) in chunks.iter().enumerate() {
        let mut p = (i as u16).to_be_bytes().to_vec();
        p.extend_from_slice(c);
        out.push(UartFrame::new(
            from,
            to,
            PacketType::UpdateCtl,
            cmd::FW_CHUNK,
            p,
        ));
    }
    out.push(UartFrame::new(
        from,
        to,
        PacketType::UpdateCtl,
        cmd::FW_END,
        vec![],
    ));
    out.push(UartFrame::new(
        from,
        to,
        PacketType::UpdateCtl,
        cmd::FW_FINALIZE,
        vec![],
    ));
    out
}
