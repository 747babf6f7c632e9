//! BCTRL images used by the scenarios: the attacker's patched builds and the
//! vendor's stock and recovery builds.

use rand::RngCore;

use crate::bctrl::{Capability, Manifest, PatchSet, Payload, ScvSpoof};
use crate::fwpipe::{FirmwareImage, KeyMaterial, Target};
use crate::simkern::{Attack, SimRng};

pub const STOCK_BCTRL_VERSION: &str = "1.2.6";
pub const MALICIOUS_BCTRL_VERSION: &str = "1.2.7";

/// Capabilities each attack's image carries.
pub fn capabilities_for(attack: Attack) -> Vec<Capability> {
    use Capability::*;
    match attack {
        Attack::None => vec![],
        Attack::Ubr => Capability::ALL.to_vec(),
        Attack::Uti => vec![Dfu, Mub, Mib, Cba],
        Attack::Plr => vec![Dfu, Mub, Cba],
        Attack::Des(5) => vec![Dfu, Mub, Mib, Dbc],
        Attack::Des(7) => vec![Dfu, Mub, Mib, Fbd],
        Attack::Des(_) => vec![Dfu, Mub, Mib],
    }
}

pub fn payload_for(attack: Attack) -> Payload {
    match attack {
        Attack::None => Payload::None,
        Attack::Ubr => Payload::Ubr,
        Attack::Uti => Payload::Uti,
        Attack::Plr => Payload::Plr,
        Attack::Des(n) => Payload::Des(n),
    }
}

pub fn fresh_unlock_code(rng: &mut SimRng) -> [u8; 16] {
    let mut c = [0u8; 16];
    rng.fill_bytes(&mut c);
    c
}

/// The attacker's BCTRL build. Encrypted with the leaked key when the target
/// is known to require it; always signed with the attacker's own key.
pub fn malicious_bctrl_image(
    attack: Attack,
    caps: &[Capability],
    unlock_code: [u8; 16],
    encrypt: bool,
    attacker: &KeyMaterial,
) -> FirmwareImage {
    let mut patches = PatchSet::of(caps);
    if patches.scv {
        patches.scv_spoof = Some(ScvSpoof {
            group: 2,
            voltage_mv: 3700,
        });
    }
    let m = Manifest {
        patches,
        payload: payload_for(attack),
        unlock_code: Some(hex::encode(unlock_code)),
    };
    FirmwareImage::package(
        Target::Bctrl,
        MALICIOUS_BCTRL_VERSION,
        &m.to_body(),
        false,
        encrypt.then_some(&attacker.tea_key),
        attacker.signing.as_ref(),
    )
}

fn vendor_bctrl(
    allow_charge_below_cuvt: bool,
    encrypt: bool,
    vendor: &KeyMaterial,
) -> FirmwareImage {
    FirmwareImage::package(
        Target::Bctrl,
        STOCK_BCTRL_VERSION,
        &Manifest::stock().to_body(),
        allow_charge_below_cuvt,
        encrypt.then_some(&vendor.tea_key),
        vendor.signing.as_ref(),
    )
}

pub fn stock_bctrl_image(encrypt: bool, vendor: &KeyMaterial) -> FirmwareImage {
    vendor_bctrl(false, encrypt, vendor)
}

/// Stock behaviour, but allowed to charge a pack below cUVT.
pub fn recovery_bctrl_image(encrypt: bool, vendor: &KeyMaterial) -> FirmwareImage {
    vendor_bctrl(true, encrypt, vendor)
}

/// Vendor BTS update used to show persistence across firmware updates.
pub fn vendor_bts_image(version: &str, vendor: &KeyMaterial) -> FirmwareImage {
    FirmwareImage::package(
        Target::Bts,
        version,
        b"bts firmware",
        false,
        None,
        vendor.signing.as_ref(),
    )
}
