//! Stand-in for the ransom backend: holds one unlock code per scooter and
//! releases it after payment.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthorityError {
    #[error("serial {0} not registered")]
    NotFound(String),
    #[error("payment for {0} not received")]
    Unpaid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Record {
    code: [u8; 16],
    paid: bool,
}

#[derive(Debug, Clone, Default)]
pub struct UnlockAuthority {
    records: BTreeMap<String, Record>,
}

impl UnlockAuthority {
    pub fn register(&mut self, serial: &str, code: [u8; 16]) {
        self.records
            .insert(serial.to_string(), Record { code, paid: false });
    }

    pub fn simulate_payment(&mut self, serial: &str) -> Result<(), AuthorityError> {
        let r = self
            .records
            .get_mut(serial)
            .ok_or_else(|| AuthorityError::NotFound(serial.into()))?;
        r.paid = true;
        Ok(())
    }

    pub fn unlock_firmware(&self, serial: &str) -> Result<[u8; 16], AuthorityError> {
        let r = self
            .records
            .get(serial)
            .ok_or_else(|| AuthorityError::NotFound(serial.into()))?;
        if !r.paid {
            return Err(AuthorityError::Unpaid(serial.into()));
        }
        Ok(r.code)
    }
}
