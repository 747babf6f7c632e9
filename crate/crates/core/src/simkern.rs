//! Discrete-event kernel: virtual clock, event scheduling, seeded randomness
//! and the append-only event log every other module writes into.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Virtual milliseconds since scenario start.
pub type Millis = u64;

/// Default BCTRL main-loop period.
pub const DEFAULT_TICK_MS: Millis = 100;

/// Seedable generator all simulator randomness flows from.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("cannot schedule at {at} ms, clock is already at {now} ms")]
    ScheduleInPast { at: Millis, now: Millis },
}

/// Monotone virtual clock. Only [`Scheduler::pop`] moves it forward.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimClock {
    now: Millis,
}

impl SimClock {
    pub fn now(&self) -> Millis {
        self.now
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

/// Priority queue of pending events ordered by `(time, insertion sequence)`.
#[derive(Debug)]
pub struct Scheduler<E> {
    clock: SimClock,
    queue: BinaryHeap<Reverse<(Millis, u64)>>,
    pending: BTreeMap<u64, E>,
    next_seq: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self {
            clock: SimClock::default(),
            queue: BinaryHeap::new(),
            pending: BTreeMap::new(),
            next_seq: 0,
        }
    }

    pub fn now(&self) -> Millis {
        self.clock.now
    }

    pub fn schedule(&mut self, event: E, at: Millis) -> Result<EventHandle, KernelError> {
        if at < self.clock.now {
            return Err(KernelError::ScheduleInPast {
                at,
                now: self.clock.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse((at, seq)));
        self.pending.insert(seq, event);
        Ok(EventHandle(seq))
    }

    /// Returns `true` if the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0).is_some()
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains_key(&handle.0)
    }

    /// Timestamp of the next live event, skipping cancelled entries.
    pub fn peek_time(&mut self) -> Option<Millis> {
        while let Some(Reverse((at, seq))) = self.queue.peek().copied() {
            if self.pending.contains_key(&seq) {
                return Some(at);
            }
            self.queue.pop();
        }
        None
    }

    /// Dispatches the next event and advances the clock to its timestamp.
    pub fn pop(&mut self) -> Option<(Millis, E)> {
        while let Some(Reverse((at, seq))) = self.queue.pop() {
            if let Some(ev) = self.pending.remove(&seq) {
                self.clock.now = at;
                return Some((at, ev));
            }
        }
        None
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}

/// Origin of an event record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LogNode {
    Kernel,
    Bctrl,
    Bmon,
    Bts,
    Drv,
    Charger,
    External,
    Bus,
    Sniffer,
    Authority,
    Attacker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    FrameSent,
    FrameDropped,
    ErrorRaised,
    Reboot,
    AdvertChanged,
    CellDead,
    ThresholdCrossed,
    AttackPhase,
    Unlock,
    InstallAccepted,
    InstallRejected,
    PowerOff,
    PowerOn,
    Beep,
    Warning,
    Sleep,
    Wake,
    ChargeBlocked,
    ChargeStarted,
    /// End-of-run figures; everything the outcome reports is echoed here.
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: Millis,
    pub node: LogNode,
    pub kind: EventKind,
    pub detail: Value,
}

/// Append-only log; records are ordered by timestamp, ties by append order.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, t: Millis, node: LogNode, kind: EventKind, detail: Value) {
        if let Some(last) = self.records.last() {
            assert!(t >= last.t, "event log must stay time-ordered");
        }
        self.records.push(EventRecord {
            t,
            node,
            kind,
            detail,
        });
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    /// JSON-lines rendering, one `{t, node, kind, detail}` object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 96);
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("event record serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Profile {
    M365,
    Es3,
}

impl Profile {
    pub const ALL: [Profile; 2] = [Profile::M365, Profile::Es3];

    pub fn name(self) -> &'static str {
        match self {
            Profile::M365 => "m365",
            Profile::Es3 => "es3",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "m365" => Ok(Profile::M365),
            "es3" => Ok(Profile::Es3),
            _ => Err(ConfigError::UnknownProfile(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Countermeasure {
    /// TEA-encrypted BCTRL firmware.
    C1,
    /// ECDSA-signed BCTRL firmware.
    C2,
    /// Authenticated, encrypted UART sessions.
    C3,
    /// Per-sender leaky-bucket rate limiting on the UART bus.
    C4,
}

impl Countermeasure {
    pub const ALL: [Countermeasure; 4] = [
        Countermeasure::C1,
        Countermeasure::C2,
        Countermeasure::C3,
        Countermeasure::C4,
    ];
}

/// Subset of {C1..C4}, stored as a 4-bit mask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Countermeasures(u8);

impl Countermeasures {
    pub const NONE: Countermeasures = Countermeasures(0);
    pub const ALL: Countermeasures = Countermeasures(0b1111);

    pub fn from_bits(bits: u8) -> Self {
        Countermeasures(bits & 0b1111)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn of(list: &[Countermeasure]) -> Self {
        list.iter().fold(Self::NONE, |acc, c| acc.with(*c))
    }

    pub fn with(self, c: Countermeasure) -> Self {
        Countermeasures(self.0 | (1 << c as u8))
    }

    pub fn has(self, c: Countermeasure) -> bool {
        self.0 & (1 << c as u8) != 0
    }

    pub fn contains_all(self, other: Countermeasures) -> bool {
        self.0 & other.0 == other.0
    }

    /// All 16 subsets in mask order.
    pub fn subsets() -> impl Iterator<Item = Countermeasures> {
        (0u8..16).map(Countermeasures)
    }

    pub fn iter(self) -> impl Iterator<Item = Countermeasure> {
        Countermeasure::ALL
            .into_iter()
            .filter(move |c| self.has(*c))
    }
}

impl fmt::Display for Countermeasures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self
            .iter()
            .map(|c| format!("{c:?}").to_lowercase())
            .collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for Countermeasures {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = Countermeasures::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let c = match part.to_ascii_lowercase().as_str() {
                "c1" => Countermeasure::C1,
                "c2" => Countermeasure::C2,
                "c3" => Countermeasure::C3,
                "c4" => Countermeasure::C4,
                "none" => continue,
                _ => return Err(ConfigError::UnknownCountermeasure(part.to_string())),
            };
            set = set.with(c);
        }
        Ok(set)
    }
}

impl Serialize for Countermeasures {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Countermeasures {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Attack {
    #[default]
    None,
    Ubr,
    Uti,
    /// Denial of service variant 1..=7.
    Des(u8),
    Plr,
}

impl Attack {
    /// The four attacks plus every DES variant, in matrix order.
    pub fn catalog() -> Vec<Attack> {
        let mut v = vec![Attack::Ubr, Attack::Uti];
        v.extend((1..=7).map(Attack::Des));
        v.push(Attack::Plr);
        v
    }

    pub fn name(self) -> String {
        match self {
            Attack::None => "none".into(),
            Attack::Ubr => "ubr".into(),
            Attack::Uti => "uti".into(),
            Attack::Des(n) => format!("des{n}"),
            Attack::Plr => "plr".into(),
        }
    }
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Attack {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "none" => Ok(Attack::None),
            "ubr" => Ok(Attack::Ubr),
            "uti" => Ok(Attack::Uti),
            "plr" => Ok(Attack::Plr),
            _ => match lower.strip_prefix("des").map(str::parse::<u8>) {
                Some(Ok(n)) if (1..=7).contains(&n) => Ok(Attack::Des(n)),
                _ => Err(ConfigError::UnknownAttack(s.to_string())),
            },
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("duration must be positive")]
    ZeroDuration,
    #[error("tick interval must be positive")]
    ZeroTick,
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
    #[error("unknown attack `{0}`")]
    UnknownAttack(String),
    #[error("unknown countermeasure `{0}`")]
    UnknownCountermeasure(String),
    #[error("password must be exactly six digits")]
    BadPin,
}

/// Experiment descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub profile: Profile,
    pub countermeasures: Countermeasures,
    pub attack: Attack,
    pub seed: u64,
    pub duration_ms: Millis,
    pub tick_ms: Millis,
    /// Six-digit scooter password stored (hashed) on the DRV.
    pub pin: String,
    /// When set, the UBR victim pays at this time and runs the recovery procedure.
    pub pay_at_ms: Option<Millis>,
}

impl ScenarioConfig {
    pub fn new(profile: Profile, attack: Attack, duration_ms: Millis) -> Self {
        Self {
            profile,
            countermeasures: Countermeasures::NONE,
            attack,
            seed: 0,
            duration_ms,
            tick_ms: DEFAULT_TICK_MS,
            pin: "123456".into(),
            pay_at_ms: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_countermeasures(mut self, cm: Countermeasures) -> Self {
        self.countermeasures = cm;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.duration_ms == 0 {
            return Err(ConfigError::ZeroDuration);
        }
        if self.tick_ms == 0 {
            return Err(ConfigError::ZeroTick);
        }
        if self.pin.len() != 6 || !self.pin.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ConfigError::BadPin);
        }
        Ok(())
    }
}
