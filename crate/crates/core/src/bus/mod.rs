pub mod frame;
pub mod medium;
pub mod ratelimit;
pub mod secure;

pub use frame::{cmd, compute_crc, FrameError, NodeId, PacketType, UartFrame, MAX_PAYLOAD};
pub use medium::{Bus, BusConfig, BusStats, DropReason, SaturationState, Transmission};
pub use ratelimit::RateLimiter;
pub use secure::{establish, Psk, SecureError, SecureSession, MAX_PLAINTEXT};
