//! Attacker-side tooling: image crafting, exfiltration encodings, the PIN
//! cracker and the unlock authority that stands in for the ransom backend.

pub mod authority;
pub mod crack;
pub mod fragments;
pub mod images;
pub mod track;

pub use authority::{AuthorityError, UnlockAuthority};
pub use crack::{crack_pin, pattern_pins, random_pins, PinPattern, PinTable};
pub use fragments::{reassemble, split, ReassemblyError};
pub use images::{capabilities_for, malicious_bctrl_image, payload_for};
pub use track::TrackMessage;
