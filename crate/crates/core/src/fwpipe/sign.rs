//! ECDSA over P-256 with SHA-256. A single trusted vendor key stands in for
//! the certificate chain.

use p256::ecdsa::signature::{Signer, Verifier};
use p256::ecdsa::{Signature, SigningKey, VerifyingKey};
use sha2::{Digest, Sha256};

use super::image::Target;
use super::tea::TeaKey;

pub const SIGNATURE_LEN: usize = 64;

/// Deterministic P-256 key from a seed label. Retries on the (negligible)
/// chance the digest is not a valid scalar.
pub fn derive_signing_key(label: &[u8]) -> SigningKey {
    let mut counter = 0u32;
    loop {
        let d: [u8; 32] = Sha256::new()
            .chain_update(label)
            .chain_update(counter.to_be_bytes())
            .finalize()
            .into();
        if let Ok(k) = SigningKey::from_bytes(&d.into()) {
            return k;
        }
        counter += 1;
    }
}

/// The bytes a signature covers.
pub fn signed_message(target: Target, version: &str, body: &[u8]) -> Vec<u8> {
    let mut m = vec![target.code()];
    m.push(version.len() as u8);
    m.extend_from_slice(version.as_bytes());
    m.extend_from_slice(body);
    m
}

pub fn sign(key: &SigningKey, target: Target, version: &str, body: &[u8]) -> Vec<u8> {
    let sig: Signature = key.sign(&signed_message(target, version, body));
    sig.to_bytes().to_vec()
}

/// False for any malformed signature.
pub fn verify(key: &VerifyingKey, target: Target, version: &str, body: &[u8], sig: &[u8]) -> bool {
    let Ok(sig) = Signature::from_slice(sig) else {
        return false;
    };
    key.verify(&signed_message(target, version, body), &sig)
        .is_ok()
}

/// Keys known to a party in the ecosystem. Only the vendor holds `signing`.
#[derive(Debug, Clone)]
pub struct KeyMaterial {
    pub tea_key: TeaKey,
    pub signing: Option<SigningKey>,
    pub verifying: VerifyingKey,
}

/// Symmetric key shared by every node (and, once leaked, by the attacker).
pub const ECOSYSTEM_TEA_KEY: TeaKey =
    *b"\x5a\x17\xc3\x0e\x91\x4b\x6d\x28\xf0\x33\xa8\x7c\x1d\xe4\x52\x96";

const VENDOR_LABEL: &[u8] = b"bessim vendor signing key";
const ROGUE_LABEL: &[u8] = b"bessim attacker signing key";

impl KeyMaterial {
    pub fn vendor() -> Self {
        let k = derive_signing_key(VENDOR_LABEL);
        Self {
            tea_key: ECOSYSTEM_TEA_KEY,
            verifying: *k.verifying_key(),
            signing: Some(k),
        }
    }

    /// What a node in the field holds: the shared TEA key and the vendor
    /// public key.
    pub fn device() -> Self {
        let mut k = Self::vendor();
        k.signing = None;
        k
    }

    /// Leaked TEA key plus a self-generated keypair.
    pub fn attacker() -> Self {
        let k = derive_signing_key(ROGUE_LABEL);
        Self {
            tea_key: ECOSYSTEM_TEA_KEY,
            verifying: *k.verifying_key(),
            signing: Some(k),
        }
    }
}
