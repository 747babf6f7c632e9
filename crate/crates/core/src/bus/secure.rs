//! Pairwise authenticated channel for the UART bus.
//!
//! Envelope: `counter (u32 BE) || AES-128-CTR ciphertext || HMAC-SHA256[..8]`.
//! The MAC covers the four header bytes, so a frame wrapped under one pair's
//! keys cannot be replayed with a different claimed sender.

use aes::cipher::{KeyIvInit, StreamCipher};
use hmac::{Hmac, Mac};
use sha2::Sha256;
use thiserror::Error;

use super::frame::{NodeId, UartFrame, MAX_PAYLOAD};

type HmacSha256 = Hmac<Sha256>;
type Aes128Ctr = ctr::Ctr128BE<aes::Aes128>;

pub const COUNTER_LEN: usize = 4;
pub const MAC_LEN: usize = 8;
pub const MAX_PLAINTEXT: usize = MAX_PAYLOAD - COUNTER_LEN - MAC_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Psk(pub [u8; 16]);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SecureError {
    #[error("pre-shared keys differ")]
    KeyMismatch,
    #[error("session not established")]
    NotEstablished,
    #[error("MAC verification failed")]
    MacFailure,
    #[error("counter {got} not above last accepted {last}")]
    ReplayDetected { got: u32, last: u32 },
    #[error("plaintext of {0} bytes does not fit an envelope")]
    PayloadTooLarge(usize),
    #[error("frame is not a wrapped envelope")]
    NotWrapped,
    #[error("session is not for {0}")]
    WrongPeer(NodeId),
    #[error("counter exhausted")]
    CounterExhausted,
}

fn prf(key: &[u8], label: &[u8], ctx: &[u8]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key length");
    mac.update(label);
    mac.update(ctx);
    mac.finalize().into_bytes().into()
}

fn first16(b: [u8; 32]) -> [u8; 16] {
    b[..16].try_into().unwrap()
}

/// One endpoint's view of a pairwise session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecureSession {
    pub local: NodeId,
    pub peer: NodeId,
    enc_key: [u8; 16],
    mac_key: [u8; 16],
    pub tx_counter: u32,
    /// Highest counter accepted from the peer; 0 means none yet.
    pub rx_counter: u32,
    pub established: bool,
}

struct DerivedKeys {
    enc: [u8; 16],
    mac: [u8; 16],
    cryptogram: [u8; 8],
}

fn derive(psk: &Psk, a: NodeId, b: NodeId, ca: &[u8; 8], cb: &[u8; 8]) -> DerivedKeys {
    let mut ctx = vec![a.0, b.0];
    ctx.extend_from_slice(ca);
    ctx.extend_from_slice(cb);
    let enc = first16(prf(&psk.0, b"S-ENC", &ctx));
    let mac = first16(prf(&psk.0, b"S-MAC", &ctx));
    let cryptogram = prf(&mac, b"CRYPTOGRAM", &ctx)[..8].try_into().unwrap();
    DerivedKeys {
        enc,
        mac,
        cryptogram,
    }
}

/// Mutual handshake between `a` (holding `psk_a`) and `b` (holding `psk_b`).
/// Each side derives keys from its own psk and both challenges; the exchanged
/// cryptograms only agree when the psks match.
pub fn establish(
    a: NodeId,
    b: NodeId,
    psk_a: &Psk,
    psk_b: &Psk,
    challenge_a: [u8; 8],
    challenge_b: [u8; 8],
) -> Result<(SecureSession, SecureSession), SecureError> {
    let ka = derive(psk_a, a, b, &challenge_a, &challenge_b);
    let kb = derive(psk_b, a, b, &challenge_a, &challenge_b);
    if ka.cryptogram != kb.cryptogram {
        return Err(SecureError::KeyMismatch);
    }
    let mk = |local, peer, k: &DerivedKeys| SecureSession {
        local,
        peer,
        enc_key: k.enc,
        mac_key: k.mac,
        tx_counter: 0,
        rx_counter: 0,
        established: true,
    };
    Ok((mk(a, b, &ka), mk(b, a, &kb)))
}

impl SecureSession {
    pub fn enc_key(&self) -> &[u8; 16] {
        &self.enc_key
    }

    pub fn mac_key(&self) -> &[u8; 16] {
        &self.mac_key
    }

    fn iv(counter: u32, sender: NodeId, receiver: NodeId) -> [u8; 16] {
        let mut iv = [0u8; 16];
        iv[..4].copy_from_slice(&counter.to_be_bytes());
        iv[4] = sender.0;
        iv[5] = receiver.0;
        iv
    }

    fn tag(&self, header: &[u8; 4], counter: u32, ct: &[u8]) -> HmacSha256 {
        let mut mac = HmacSha256::new_from_slice(&self.mac_key).unwrap();
        mac.update(header);
        mac.update(&counter.to_be_bytes());
        mac.update(ct);
        mac
    }

    /// Seals `frame` for the peer. The header stays in clear; the type byte
    /// gains the wrapped bit.
    pub fn wrap(&mut self, frame: &UartFrame) -> Result<UartFrame, SecureError> {
        if !self.established {
            return Err(SecureError::NotEstablished);
        }
        if frame.payload.len() > MAX_PLAINTEXT {
            return Err(SecureError::PayloadTooLarge(frame.payload.len()));
        }
        let counter = self
            .tx_counter
            .checked_add(1)
            .ok_or(SecureError::CounterExhausted)?;
        let mut out = frame.clone();
        out.wrapped = true;
        let mut ct = frame.payload.clone();
        Aes128Ctr::new(
            &self.enc_key.into(),
            &Self::iv(counter, frame.sender, frame.receiver).into(),
        )
        .apply_keystream(&mut ct);
        let tag = self
            .tag(&out.header(), counter, &ct)
            .finalize()
            .into_bytes();
        let mut payload = counter.to_be_bytes().to_vec();
        payload.extend_from_slice(&ct);
        payload.extend_from_slice(&tag[..MAC_LEN]);
        out.payload = payload;
        self.tx_counter = counter;
        Ok(out)
    }

    /// Opens an envelope from the peer: MAC first, then the counter, then
    /// decryption.
    pub fn unwrap(&mut self, frame: &UartFrame) -> Result<UartFrame, SecureError> {
        if !self.established {
            return Err(SecureError::NotEstablished);
        }
        if !frame.wrapped || frame.payload.len() < COUNTER_LEN + MAC_LEN {
            return Err(SecureError::NotWrapped);
        }
        let p = &frame.payload;
        let counter = u32::from_be_bytes(p[..COUNTER_LEN].try_into().unwrap());
        let ct = &p[COUNTER_LEN..p.len() - MAC_LEN];
        self.tag(&frame.header(), counter, ct)
            .verify_truncated_left(&p[p.len() - MAC_LEN..])
            .map_err(|_| SecureError::MacFailure)?;
        if counter <= self.rx_counter {
            return Err(SecureError::ReplayDetected {
                got: counter,
                last: self.rx_counter,
            });
        }
        let mut pt = ct.to_vec();
        Aes128Ctr::new(
            &self.enc_key.into(),
            &Self::iv(counter, frame.sender, frame.receiver).into(),
        )
        .apply_keystream(&mut pt);
        self.rx_counter = counter;
        let mut out = frame.clone();
        out.wrapped = false;
        out.payload = pt;
        Ok(out)
    }
}
