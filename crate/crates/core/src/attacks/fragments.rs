//! Splitting a 32-byte hash over three BLE names and putting it back together.

use thiserror::Error;

pub const FRAGMENT_SPANS: [(usize, usize); 3] = [(0, 13), (13, 26), (26, 32)];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReassemblyError {
    #[error("fragment {0} never observed")]
    Missing(u8),
    #[error("fragment {index} has {got} bytes, expected {expected}")]
    BadLength {
        index: u8,
        got: usize,
        expected: usize,
    },
    #[error("fragments disagree for index {0}")]
    Conflict(u8),
}

/// Each fragment is `index (1..=3) || hash bytes`.
pub fn split(hash: &[u8; 32]) -> [Vec<u8>; 3] {
    std::array::from_fn(|i| {
        let (a, b) = FRAGMENT_SPANS[i];
        let mut f = vec![i as u8 + 1];
        f.extend_from_slice(&hash[a..b]);
        f
    })
}

/// Rebuilds the hash from observed names. Names whose first byte is not a
/// fragment index are ignored; a missing or malformed fragment is an error.
pub fn reassemble<'a>(
    names: impl IntoIterator<Item = &'a [u8]>,
) -> Result<[u8; 32], ReassemblyError> {
    let mut parts: [Option<&[u8]>; 3] = [None; 3];
    for n in names {
        let Some((&idx, body)) = n.split_first() else {
            continue;
        };
        if !(1..=3).contains(&idx) {
            continue;
        }
        let (a, b) = FRAGMENT_SPANS[idx as usize - 1];
        if body.len() != b - a {
            return Err(ReassemblyError::BadLength {
                index: idx,
                got: body.len(),
                expected: b - a,
            });
        }
        match parts[idx as usize - 1] {
            Some(prev) if prev != body => return Err(ReassemblyError::Conflict(idx)),
            _ => parts[idx as usize - 1] = Some(body),
        }
    }
    let mut out = [0u8; 32];
    for (i, p) in parts.iter().enumerate() {
        let p = p.ok_or(ReassemblyError::Missing(i as u8 + 1))?;
        let (a, b) = FRAGMENT_SPANS[i];
        out[a..b].copy_from_slice(p);
    }
    Ok(out)
}
