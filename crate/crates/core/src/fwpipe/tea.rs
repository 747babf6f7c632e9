//! TEA, 32 cycles, big-endian words, applied block by block.

use thiserror::Error;

pub type TeaKey = [u8; 16];

const DELTA: u32 = 0x9E37_79B9;
const ROUNDS: u32 = 32;
const TRAILER: usize = 4;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum PaddingError {
    #[error("ciphertext length is not a multiple of 8")]
    Misaligned,
    #[error("length trailer or pad bytes are invalid")]
    BadTrailer,
}

fn key_words(key: &TeaKey) -> [u32; 4] {
    std::array::from_fn(|i| u32::from_be_bytes(key[4 * i..4 * i + 4].try_into().unwrap()))
}

pub fn encrypt_block(key: &TeaKey, block: [u32; 2]) -> [u32; 2] {
    let k = key_words(key);
    let [mut v0, mut v1] = block;
    let mut sum = 0u32;
    for _ in 0..ROUNDS {
        sum = sum.wrapping_add(DELTA);
        v0 = v0.wrapping_add(
            (v1 << 4).wrapping_add(k[0]) ^ v1.wrapping_add(sum) ^ (v1 >> 5).wrapping_add(k[1]),
        );
        v1 = v1.wrapping_add(
            (v0 << 4).wrapping_add(k[2]) ^ v0.wrapping_add(sum) ^ (v0 >> 5).wrapping_add(k[3]),
        );
    }
    [v0, v1]
}

pub fn decrypt_block(key: &TeaKey, block: [u32; 2]) -> [u32; 2] {
    let k = key_words(key);
    let [mut v0, mut v1] = block;
    let mut sum = DELTA.wrapping_mul(ROUNDS);
    for _ in 0..ROUNDS {
        v1 = v1.wrapping_sub(
            (v0 << 4).wrapping_add(k[2]) ^ v0.wrapping_add(sum) ^ (v0 >> 5).wrapping_add(k[3]),
        );
        v0 = v0.wrapping_sub(
            (v1 << 4).wrapping_add(k[0]) ^ v1.wrapping_add(sum) ^ (v1 >> 5).wrapping_add(k[1]),
        );
        sum = sum.wrapping_sub(DELTA);
    }
    [v0, v1]
}

fn map_blocks(data: &mut [u8], f: impl Fn([u32; 2]) -> [u32; 2]) {
    for chunk in data.chunks_exact_mut(8) {
        let b = [
            u32::from_be_bytes(chunk[..4].try_into().unwrap()),
            u32::from_be_bytes(chunk[4..].try_into().unwrap()),
        ];
        let [a, c] = f(b);
        chunk[..4].copy_from_slice(&a.to_be_bytes());
        chunk[4..].copy_from_slice(&c.to_be_bytes());
    }
}

/// `m || 0x00.. || len(m) as u32 BE`, rounded up to whole blocks.
pub fn pad(m: &[u8]) -> Vec<u8> {
    let total = (m.len() + TRAILER).div_ceil(8) * 8;
    let mut out = m.to_vec();
    out.resize(total - TRAILER, 0);
    out.extend_from_slice(&(m.len() as u32).to_be_bytes());
    out
}

pub fn unpad(p: &[u8]) -> Result<Vec<u8>, PaddingError> {
    if !p.len().is_multiple_of(8) || p.len() < 8 {
        return Err(PaddingError::Misaligned);
    }
    let body = p.len() - TRAILER;
    let len = u32::from_be_bytes(p[body..].try_into().unwrap()) as usize;
    if len > body || body - len >= 8 || p[len..body].iter().any(|&b| b != 0) {
        return Err(PaddingError::BadTrailer);
    }
    Ok(p[..len].to_vec())
}

pub fn encrypt(key: &TeaKey, m: &[u8]) -> Vec<u8> {
    let mut out = pad(m);
    map_blocks(&mut out, |b| encrypt_block(key, b));
    out
}

pub fn decrypt(key: &TeaKey, c: &[u8]) -> Result<Vec<u8>, PaddingError> {
    if !c.len().is_multiple_of(8) {
        return Err(PaddingError::Misaligned);
    }
    let mut out = c.to_vec();
    map_blocks(&mut out, |b| decrypt_block(key, b));
    unpad(&out)
}
