//! Firmware image container.
//!
//! Layout (little-endian integers):
//!
//! ```text
//! "BESI" | target u8 | verLen u8 | version | flags u8 | bodyLen u32 | bodyCrc u16 | sigLen u16 | body | signature
//! ```
//!
//! `bodyCrc` covers the plaintext body; `body` is stored encrypted when the
//! encrypted flag is set.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use p256::ecdsa::SigningKey;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::sign;
use super::tea::{self, TeaKey};
use crate::bus::compute_crc;

pub const MAGIC: &[u8; 4] = b"BESI";

const FLAG_ENCRYPTED: u8 = 0x01;
const FLAG_SIGNED: u8 = 0x02;
const FLAG_ALLOW_CHARGE_BELOW_CUVT: u8 = 0x04;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Target {
    Bts,
    Drv,
    Bctrl,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Bts, Target::Drv, Target::Bctrl];

    pub fn code(self) -> u8 {
        match self {
            Target::Bts => 0,
            Target::Drv => 1,
            Target::Bctrl => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Target::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Bts => "BTS",
            Target::Drv => "DRV",
            Target::Bctrl => "BCTRL",
        })
    }
}

impl FromStr for Target {
    type Err = ImageError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "BTS" => Ok(Target::Bts),
            "DRV" => Ok(Target::Drv),
            "BCTRL" => Ok(Target::Bctrl),
            _ => Err(ImageError::BadTarget(s.to_string())),
        }
    }
}

/// Dotted numeric version, compared component-wise; missing components are 0.
#[derive(Debug, Clone)]
pub struct Version(Vec<u32>);

impl PartialEq for Version {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Version {}

impl Version {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.strip_prefix('v').unwrap_or(s);
        s.split('.')
            .map(|p| p.parse().ok())
            .collect::<Option<Vec<u32>>>()
            .map(Version)
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        let n = self.0.len().max(other.0.len());
        (0..n)
            .map(|i| {
                self.0
                    .get(i)
                    .unwrap_or(&0)
                    .cmp(other.0.get(i).unwrap_or(&0))
            })
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("bad magic")]
    BadMagic,
    #[error("image truncated")]
    Truncated,
    #[error("unknown target {0}")]
    BadTarget(String),
    #[error("version string is not valid")]
    BadVersion,
    #[error("{0} trailing bytes after signature")]
    TrailingBytes(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmwareImage {
    pub target: Target,
    pub version: String,
    /// As stored: ciphertext when `encrypted`.
    pub body: Vec<u8>,
    /// Over the plaintext body.
    pub body_crc: u16,
    pub encrypted: bool,
    pub signature: Option<Vec<u8>>,
    pub allow_charge_below_cuvt: bool,
}

impl FirmwareImage {
    /// Packages a plaintext body: sign first, then encrypt.
    pub fn package(
        target: Target,
        version: &str,
        plaintext: &[u8],
        allow_charge_below_cuvt: bool,
        encrypt_with: Option<&TeaKey>,
        sign_with: Option<&SigningKey>,
    ) -> Self {
        let signature = sign_with.map(|k| sign::sign(k, target, version, plaintext));
        let body = match encrypt_with {
            Some(k) => tea::encrypt(k, plaintext),
            None => plaintext.to_vec(),
        };
        Self {
            target,
            version: version.to_string(),
            body,
            body_crc: compute_crc(plaintext),
            encrypted: encrypt_with.is_some(),
            signature,
            allow_charge_below_cuvt,
        }
    }

    pub fn parsed_version(&self) -> Option<Version> {
        Version::parse(&self.version)
    }

    fn flags(&self) -> u8 {
        let mut f = 0;
        if self.encrypted {
            f |= FLAG_ENCRYPTED;
        }
        if self.signature.is_some() {
            f |= FLAG_SIGNED;
        }
        if self.allow_charge_below_cuvt {
            f |= FLAG_ALLOW_CHARGE_BELOW_CUVT;
        }
        f
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let sig = self.signature.as_deref().unwrap_or(&[]);
        let mut out = MAGIC.to_vec();
        out.push(self.target.code());
        out.push(self.version.len() as u8);
        out.extend_from_slice(self.version.as_bytes());
        out.push(self.flags());
        out.extend_from_slice(&(self.body.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.body_crc.to_le_bytes());
        out.extend_from_slice(&(sig.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.body);
        out.extend_from_slice(sig);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, ImageError> {
        let mut r = Reader(b);
        if r.take(4)? != MAGIC {
            return Err(ImageError::BadMagic);
        }
        let tcode = r.u8()?;
        let target = Target::from_code(tcode).ok_or(ImageError::BadTarget(tcode.to_string()))?;
        let vlen = r.u8()? as usize;
        let version = std::str::from_utf8(r.take(vlen)?)
            .map_err(|_| ImageError::BadVersion)?
            .to_string();
        let flags = r.u8()?;
        let body_len = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
        let body_crc = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        let sig_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let body = r.take(body_len)?.to_vec();
        let sig = r.take(sig_len)?.to_vec();
        if !r.0.is_empty() {
            return Err(ImageError::TrailingBytes(r.0.len()));
        }
        Ok(Self {
            target,
            version,
            body,
            body_crc,
            encrypted: flags & FLAG_ENCRYPTED != 0,
            signature: (flags & FLAG_SIGNED != 0).then_some(sig),
            allow_charge_below_cuvt: flags & FLAG_ALLOW_CHARGE_BELOW_CUVT != 0,
        })
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ImageError> {
        if self.0.len() < n {
            return Err(ImageError::Truncated);
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, ImageError> {
        Ok(self.take(1)?[0])
    }
}
