//! Broadcast medium with a fixed per-window capacity.
//!
//! Frames submitted during a tick are resolved at the end of that tick. When
//! more frames are offered than the window can carry, an evenly spaced subset
//! survives, so a flooder that outnumbers legitimate senders crowds them out
//! in proportion to its share.

use std::collections::BTreeMap;

use serde_json::json;

use super::frame::{NodeId, UartFrame};
use super::ratelimit::RateLimiter;
use crate::simkern::{EventKind, EventLog, LogNode, Millis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusConfig {
    /// Frames per virtual second.
    pub capacity_fps: u32,
    pub limiter_capacity: u32,
    pub limiter_drain: u32,
    /// Per-transmitter leaky bucket (C4).
    pub rate_limit: bool,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            capacity_fps: 200,
            limiter_capacity: 10,
            limiter_drain: 50,
            rate_limit: false,
        }
    }
}

impl From<NodeId> for LogNode {
    fn from(n: NodeId) -> Self {
        match n {
            NodeId::BTS => LogNode::Bts,
            NodeId::BCTRL => LogNode::Bctrl,
            NodeId::DRV => LogNode::Drv,
            NodeId::CHARGER => LogNode::Charger,
            NodeId::EXTERNAL => LogNode::External,
            _ => LogNode::Bus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    pub id: u64,
    pub t: Millis,
    /// Node that physically drove the line; may differ from `frame.sender`.
    pub origin: NodeId,
    pub frame: UartFrame,
    /// False for flood filler.
    pub legit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    RateLimited,
    Saturated,
}

impl DropReason {
    fn label(self) -> &'static str {
        match self {
            DropReason::RateLimited => "rate-limited",
            DropReason::Saturated => "bus-saturated",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BusStats {
    pub sent: u64,
    pub delivered: u64,
    pub legit_dropped: u64,
    pub flood_dropped: u64,
    pub saturated_windows: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SaturationState {
    pub offered: usize,
    pub capacity: usize,
    pub saturated: bool,
}

#[derive(Debug, Default)]
pub struct Bus {
    pub cfg: BusConfig,
    pending: Vec<Transmission>,
    limiters: BTreeMap<NodeId, RateLimiter>,
    next_id: u64,
    pub stats: BusStats,
    dump: Option<Vec<String>>,
}

impl Bus {
    pub fn new(cfg: BusConfig) -> Self {
        Self {
            cfg,
            ..Self::default()
        }
    }

    /// Keeps a textual dump of every delivered frame.
    pub fn record_dump(&mut self) {
        self.dump.get_or_insert_with(Vec::new);
    }

    pub fn dump(&self) -> &[String] {
        self.dump.as_deref().unwrap_or(&[])
    }

    fn drop_frame(&mut self, tx: &Transmission, reason: DropReason, t: Millis, log: &mut EventLog) {
        if tx.legit {
            self.stats.legit_dropped += 1;
        } else {
            self.stats.flood_dropped += 1;
        }
        log.append(
            t,
            LogNode::Bus,
            EventKind::FrameDropped,
            json!({"id": tx.id, "from": tx.frame.sender.to_string(), "to": tx.frame.receiver.to_string(),
                   "cmd": tx.frame.command, "legit": tx.legit, "reason": reason.label()}),
        );
    }

    /// Places a frame on the line. The sender field is not checked against
    /// `origin`.
    pub fn submit(
        &mut self,
        t: Millis,
        origin: NodeId,
        frame: UartFrame,
        legit: bool,
        log: &mut EventLog,
    ) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.stats.sent += 1;
        log.append(
            t,
            origin.into(),
            EventKind::FrameSent,
            json!({"id": id, "origin": origin.to_string(), "from": frame.sender.to_string(),
                   "to": frame.receiver.to_string(), "type": frame.ptype.label(), "cmd": frame.command,
                   "len": frame.payload.len(), "wrapped": frame.wrapped, "legit": legit}),
        );
        let tx = Transmission {
            id,
            t,
            origin,
            frame,
            legit,
        };
        if self.cfg.rate_limit {
            let (cap, drain) = (self.cfg.limiter_capacity, self.cfg.limiter_drain);
            let bucket = self
                .limiters
                .entry(origin)
                .or_insert_with(|| RateLimiter::new(cap, drain));
            if !bucket.admit(t) {
                self.drop_frame(&tx, DropReason::RateLimited, t, log);
                return id;
            }
        }
        self.pending.push(tx);
        id
    }

    /// Emits `rate_fps * window_ms / 1000` dummy frames from `source`.
    pub fn flood(
        &mut self,
        t: Millis,
        source: NodeId,
        rate_fps: u32,
        window_ms: Millis,
        log: &mut EventLog,
    ) {
        let n = rate_fps as u64 * window_ms / 1000;
        for i in 0..n {
            let f = UartFrame::new(
                source,
                NodeId::BROADCAST,
                super::frame::PacketType::Notify,
                super::frame::cmd::DUMMY,
                vec![(i & 0xFF) as u8; 4],
            );
            self.submit(t, source, f, false, log);
        }
    }

    pub fn saturation(&self, window_ms: Millis) -> SaturationState {
        let capacity = self.window_capacity(window_ms);
        SaturationState {
            offered: self.pending.len(),
            capacity,
            saturated: self.pending.len() > capacity,
        }
    }

    fn window_capacity(&self, window_ms: Millis) -> usize {
        ((self.cfg.capacity_fps as u64 * window_ms / 1000) as usize).max(1)
    }

    /// Closes the current window and returns the frames that made it onto the
    /// wire, in submission order.
    pub fn resolve(
        &mut self,
        t: Millis,
        window_ms: Millis,
        log: &mut EventLog,
    ) -> Vec<Transmission> {
        let pending = std::mem::take(&mut self.pending);
        let cap = self.window_capacity(window_ms);
        let n = pending.len();
        let mut delivered = Vec::with_capacity(n.min(cap));
        if n > cap {
            self.stats.saturated_windows += 1;
        }
        for (k, tx) in pending.into_iter().enumerate() {
            let keep = n <= cap || ((k + 1) * cap / n) > (k * cap / n);
            if keep {
                delivered.push(tx);
            } else {
                self.drop_frame(&tx, DropReason::Saturated, t, log);
            }
        }
        self.stats.delivered += delivered.len() as u64;
        if let Some(d) = self.dump.as_mut() {
            d.extend(delivered.iter().map(|tx| tx.frame.dump_line(tx.t)));
        }
        delivered
    }

    /// Fans delivered frames out to every powered node except the transmitter.
    pub fn broadcast(
        delivered: &[Transmission],
        powered: &[NodeId],
    ) -> BTreeMap<NodeId, Vec<Transmission>> {
        let mut queues: BTreeMap<NodeId, Vec<Transmission>> =
            powered.iter().map(|&n| (n, Vec::new())).collect();
        for tx in delivered {
            for (&node, q) in queues.iter_mut() {
                if node != tx.origin {
                    q.push(tx.clone());
                }
            }
        }
        queues
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::frame::{cmd, PacketType};

    fn poll() -> UartFrame {
        UartFrame::new(
            NodeId::DRV,
            NodeId::BCTRL,
            PacketType::Read,
            cmd::BATT_LEVEL,
            vec![],
        )
    }

    #[test]
    fn underload_delivers_everything() {
        let mut bus = Bus::new(BusConfig::default());
        let mut log = EventLog::new();
        bus.submit(0, NodeId::DRV, poll(), true, &mut log);
        bus.flood(0, NodeId::BCTRL, 190, 100, &mut log);
        let out = bus.resolve(0, 100, &mut log);
        assert_eq!(out.len(), 20);
        assert_eq!(bus.stats.legit_dropped, 0);
        assert_eq!(log.count(EventKind::FrameSent), 20);
    }

    #[test]
    fn flood_crowds_out_legit_frames() {
        let mut bus = Bus::new(BusConfig::default());
        let mut log = EventLog::new();
        bus.submit(0, NodeId::DRV, poll(), true, &mut log);
        bus.flood(0, NodeId::BCTRL, 2000, 100, &mut log);
        assert!(bus.saturation(100).saturated);
        let out = bus.resolve(0, 100, &mut log);
        assert_eq!(out.len(), 20);
        assert!(out.iter().all(|tx| !tx.legit));
        assert_eq!(bus.stats.legit_dropped, 1);
        assert_eq!(log.count(EventKind::FrameDropped), 181);
    }

    #[test]
    fn rate_limit_throttles_flooder_only() {
        let cfg = BusConfig {
            rate_limit: true,
            ..BusConfig::default()
        };
        let mut bus = Bus::new(cfg);
        let mut log = EventLog::new();
        for w in 0..100u64 {
            let t = w * 100;
            bus.submit(t, NodeId::DRV, poll(), true, &mut log);
            bus.flood(t, NodeId::BCTRL, 2000, 100, &mut log);
            bus.resolve(t, 100, &mut log);
        }
        assert_eq!(bus.stats.legit_dropped, 0);
        assert_eq!(bus.stats.saturated_windows, 0);
    }

    #[test]
    fn everyone_but_origin_observes() {
        let tx = Transmission {
            id: 0,
            t: 0,
            origin: NodeId::BCTRL,
            frame: poll(),
            legit: true,
        };
        let q = Bus::broadcast(&[tx], &[NodeId::BTS, NodeId::BCTRL, NodeId::DRV]);
        assert_eq!(q[&NodeId::BTS].len(), 1);
        assert_eq!(q[&NodeId::DRV].len(), 1);
        assert!(q[&NodeId::BCTRL].is_empty());
    }
}
