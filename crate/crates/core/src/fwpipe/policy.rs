//! Per-model signing policy and the install decision.

use serde::Serialize;
use thiserror::Error;

use super::image::{FirmwareImage, Target, Version};
use super::sign::{self, KeyMaterial};
use super::tea;
use crate::bus::compute_crc;
use crate::simkern::{Countermeasure, Countermeasures, Profile};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TargetPolicy {
    pub require_signature: bool,
    pub require_encryption: bool,
    /// Requirements bind images at or above this version.
    pub since_version: String,
}

impl TargetPolicy {
    fn open() -> Self {
        Self::new(false, false, "0.0.0")
    }

    fn new(sig: bool, enc: bool, since: &str) -> Self {
        Self {
            require_signature: sig,
            require_encryption: enc,
            since_version: since.to_string(),
        }
    }

    fn binds(&self, image_version: &str) -> bool {
        match (
            Version::parse(image_version),
            Version::parse(&self.since_version),
        ) {
            (Some(v), Some(since)) => v >= since,
            // Unparseable versions get no grandfathering.
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SigningPolicy {
    pub profile: Profile,
    pub bts: TargetPolicy,
    pub drv: TargetPolicy,
    pub bctrl: TargetPolicy,
}

impl SigningPolicy {
    /// Shipping configuration of each model.
    pub fn vulnerable(profile: Profile) -> Self {
        match profile {
            Profile::M365 => Self {
                profile,
                bts: TargetPolicy::open(),
                drv: TargetPolicy::open(),
                bctrl: TargetPolicy::open(),
            },
            Profile::Es3 => Self {
                profile,
                bts: TargetPolicy::new(true, false, "1.5.2"),
                drv: TargetPolicy::new(true, true, "0.1.7"),
                bctrl: TargetPolicy::open(),
            },
        }
    }

    /// C1 adds encryption and C2 adds signing to BCTRL images of any version.
    pub fn with_countermeasures(mut self, cm: Countermeasures) -> Self {
        if cm.has(Countermeasure::C1) {
            self.bctrl.require_encryption = true;
            self.bctrl.since_version = "0.0.0".into();
        }
        if cm.has(Countermeasure::C2) {
            self.bctrl.require_signature = true;
            self.bctrl.since_version = "0.0.0".into();
        }
        self
    }

    pub fn for_target(&self, t: Target) -> &TargetPolicy {
        match t {
            Target::Bts => &self.bts,
            Target::Drv => &self.drv,
            Target::Bctrl => &self.bctrl,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InstallRejection {
    #[error("signature required but missing")]
    SignatureMissing,
    #[error("signature does not verify")]
    SignatureInvalid,
    #[error("encryption required but image is not decryptable")]
    DecryptFailed,
    #[error("body CRC mismatch")]
    CrcMismatch,
    #[error("a cell group is below the charge undervoltage threshold")]
    UndervoltLockout,
}

/// Pack facts the BCTRL bootloader consults before flashing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstallContext {
    /// Lowest voltage among live groups.
    pub min_live_cell_mv: f64,
    pub c_uvt_mv: f64,
}

impl InstallContext {
    pub fn healthy() -> Self {
        Self {
            min_live_cell_mv: 4000.0,
            c_uvt_mv: 1580.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Installed {
    pub target: Target,
    pub version: String,
    pub plaintext: Vec<u8>,
    pub allow_charge_below_cuvt: bool,
}

/// Decrypt, check CRC, verify signature, then apply the BCTRL undervoltage
/// lockout.
pub fn verify_and_install(
    image: &FirmwareImage,
    policy: &SigningPolicy,
    keys: &KeyMaterial,
    ctx: &InstallContext,
) -> Result<Installed, InstallRejection> {
    let tp = policy.for_target(image.target);
    let binding = tp.binds(&image.version);

    if binding && tp.require_encryption && !image.encrypted {
        return Err(InstallRejection::DecryptFailed);
    }
    let plaintext = if image.encrypted {
        match tea::decrypt(&keys.tea_key, &image.body) {
            Ok(p) => p,
            Err(tea::PaddingError::Misaligned) => return Err(InstallRejection::DecryptFailed),
            // A wrong key scrambles the trailer; surface it as a CRC failure.
            Err(tea::PaddingError::BadTrailer) => return Err(InstallRejection::CrcMismatch),
        }
    } else {
        image.body.clone()
    };
    if compute_crc(&plaintext) != image.body_crc {
        return Err(InstallRejection::CrcMismatch);
    }
    if binding && tp.require_signature {
        let sig = image
            .signature
            .as_deref()
            .ok_or(InstallRejection::SignatureMissing)?;
        if !sign::verify(
            &keys.verifying,
            image.target,
            &image.version,
            &plaintext,
            sig,
        ) {
            return Err(InstallRejection::SignatureInvalid);
        }
    }
    if image.target == Target::Bctrl
        && !image.allow_charge_below_cuvt
        && ctx.min_live_cell_mv < ctx.c_uvt_mv
    {
        return Err(InstallRejection::UndervoltLockout);
    }
    Ok(Installed {
        target: image.target,
        version: image.version.clone(),
        plaintext,
        allow_charge_below_cuvt: image.allow_charge_below_cuvt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dev() -> KeyMaterial {
        KeyMaterial::device()
    }

    fn rogue(target: Target, version: &str, enc: bool) -> FirmwareImage {
        let a = KeyMaterial::attacker();
        FirmwareImage::package(
            target,
            version,
            b"malicious",
            false,
            enc.then_some(&a.tea_key),
            a.signing.as_ref(),
        )
    }

    #[test]
    fn vulnerable_matrix() {
        let m = SigningPolicy::vulnerable(Profile::M365);
        for t in Target::ALL {
            let p = m.for_target(t);
            assert!(!p.require_signature && !p.require_encryption);
        }
        let e = SigningPolicy::vulnerable(Profile::Es3);
        assert_eq!(e.bts, TargetPolicy::new(true, false, "1.5.2"));
        assert_eq!(e.drv, TargetPolicy::new(true, true, "0.1.7"));
        assert_eq!(e.bctrl, TargetPolicy::open());
    }

    #[test]
    fn rogue_bctrl_accepted_unless_signed() {
        let ctx = InstallContext::healthy();
        for profile in [Profile::M365, Profile::Es3] {
            let p = SigningPolicy::vulnerable(profile);
            assert!(
                verify_and_install(&rogue(Target::Bctrl, "9.9.9", false), &p, &dev(), &ctx).is_ok()
            );
            let c1 = p
                .clone()
                .with_countermeasures(Countermeasures::of(&[Countermeasure::C1]));
            assert_eq!(
                verify_and_install(&rogue(Target::Bctrl, "9.9.9", false), &c1, &dev(), &ctx),
                Err(InstallRejection::DecryptFailed)
            );
            // The TEA key is leaked, so encryption alone does not stop the attacker.
            assert!(
                verify_and_install(&rogue(Target::Bctrl, "9.9.9", true), &c1, &dev(), &ctx).is_ok()
            );
            let c2 = p.with_countermeasures(Countermeasures::of(&[Countermeasure::C2]));
            assert_eq!(
                verify_and_install(&rogue(Target::Bctrl, "9.9.9", true), &c2, &dev(), &ctx),
                Err(InstallRejection::SignatureInvalid)
            );
        }
    }

    #[test]
    fn es3_bts_signed_from_152() {
        let p = SigningPolicy::vulnerable(Profile::Es3);
        let ctx = InstallContext::healthy();
        assert!(verify_and_install(&rogue(Target::Bts, "1.5.1", false), &p, &dev(), &ctx).is_ok());
        assert_eq!(
            verify_and_install(&rogue(Target::Bts, "1.5.2", false), &p, &dev(), &ctx),
            Err(InstallRejection::SignatureInvalid)
        );
        let unsigned = FirmwareImage::package(Target::Bts, "1.6.0", b"x", false, None, None);
        assert_eq!(
            verify_and_install(&unsigned, &p, &dev(), &ctx),
            Err(InstallRejection::SignatureMissing)
        );
    }

    #[test]
    fn wrong_key_is_a_crc_failure() {
        let img = FirmwareImage::package(
            Target::Bctrl,
            "1.0.0",
            &[0x42; 40],
            false,
            Some(b"not the real key"),
            None,
        );
        let r = verify_and_install(
            &img,
            &SigningPolicy::vulnerable(Profile::M365),
            &dev(),
            &InstallContext::healthy(),
        );
        assert_eq!(r, Err(InstallRejection::CrcMismatch));
    }

    #[test]
    fn undervolt_lockout_and_recovery() {
        let v = KeyMaterial::vendor();
        let p = SigningPolicy::vulnerable(Profile::M365);
        let ctx = InstallContext {
            min_live_cell_mv: 800.0,
            c_uvt_mv: 1580.0,
        };
        let stock = FirmwareImage::package(
            Target::Bctrl,
            "1.0.0",
            b"stock",
            false,
            None,
            v.signing.as_ref(),
        );
        assert_eq!(
            verify_and_install(&stock, &p, &dev(), &ctx),
            Err(InstallRejection::UndervoltLockout)
        );
        let recovery = FirmwareImage::package(
            Target::Bctrl,
            "1.0.0",
            b"recovery",
            true,
            None,
            v.signing.as_ref(),
        );
        assert!(verify_and_install(&recovery, &p, &dev(), &ctx).is_ok());
        // DRV and BTS images are not gated on the pack.
        let drv = FirmwareImage::package(Target::Drv, "0.1.0", b"d", false, None, None);
        assert!(verify_and_install(&drv, &p, &dev(), &ctx).is_ok());
    }
}
