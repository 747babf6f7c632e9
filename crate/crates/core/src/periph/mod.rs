pub mod bts;
pub mod drv;
pub mod error;
pub mod sniffer;

pub use bts::{BtsState, BLE_NAME_MAX};
pub use drv::{generate_drv_id, password_hash, DrvReport, DrvState};
pub use error::{ErrorCode, ERROR_POWER_OFF_MS};
pub use sniffer::{Advert, Sniffer};
