//! Proximity BLE sniffer: the attacker's only view of the scooter.

use serde::{Deserialize, Serialize};

use crate::simkern::Millis;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Advert {
    pub t: Millis,
    /// Hex of the advertised name bytes.
    #[serde(rename = "advName")]
    pub adv_name: String,
}

impl Advert {
    pub fn name_bytes(&self) -> Vec<u8> {
        hex::decode(&self.adv_name).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sniffer {
    adverts: Vec<Advert>,
}

impl Sniffer {
    pub fn record(&mut self, t: Millis, name: &[u8]) {
        self.adverts.push(Advert {
            t,
            adv_name: hex::encode(name),
        });
    }

    pub fn all(&self) -> &[Advert] {
        &self.adverts
    }

    /// Adverts with `from <= t < to`.
    pub fn observe(&self, from: Millis, to: Millis) -> Vec<Advert> {
        self.adverts
            .iter()
            .filter(|a| a.t >= from && a.t < to)
            .cloned()
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        self.adverts
            .iter()
            .map(|a| serde_json::to_string(a).expect("advert serializes") + "\n")
            .collect()
    }
}
