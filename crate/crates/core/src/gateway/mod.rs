//! Simulated GSM modem and SMS centre.
//!
//! Inbound messages are queued in arrival order and fed to the session
//! engine. Replies sit in the store's message buffer until the modem drains
//! them, at most `drain_rate` per second, into per-recipient mailboxes that
//! handsets poll by sequence number.

pub mod http;

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, PoisonError, RwLock};

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, Timestamp};
use crate::session::{Engine, InboundSms};
use crate::tables::{Phone, Store};

pub const DEFAULT_DRAIN_RATE: f64 = 1.0;
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GatewayError {
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("invalid gateway config: {0}")]
    Config(String),
}

/// Inbound SMS as submitted on the wire. `ts` is epoch milliseconds and is
/// filled in by the gateway when absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WireInbound {
    #[serde(default)]
    pub from: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<i64>,
}

impl WireInbound {
    pub fn new(from: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            from: Some(from.into()),
            text: Some(text.into()),
            ts: None,
        }
    }

    /// Check required fields and build the engine-side message.
    pub fn validate(&self, now: Timestamp) -> Result<InboundSms, GatewayError> {
        let from = self
            .from
            .as_deref()
            .filter(|f| !f.trim().is_empty())
            .ok_or_else(|| GatewayError::Rejected("missing `from`".into()))?;
        let phone_no = Phone::parse(from)
            .ok_or_else(|| GatewayError::Rejected(format!("`from` has no digits: {from:?}")))?;
        let text = self
            .text
            .clone()
            .ok_or_else(|| GatewayError::Rejected("missing `text`".into()))?;
        Ok(InboundSms {
            phone_no,
            text,
            received_at: self.ts.map(Timestamp::from_millis).unwrap_or(now),
        })
    }
}

/// A delivered message. `seq` starts at 1 and has no gaps per recipient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireOutbound {
    pub to: String,
    pub text: String,
    pub seq: u64,
    pub ts: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub listen: std::net::SocketAddr,
    /// Messages per second the modem can send.
    pub drain_rate: f64,
    /// How often the service loop drains the buffer, in milliseconds.
    pub tick_millis: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            listen: std::net::SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)),
            drain_rate: DEFAULT_DRAIN_RATE,
            tick_millis: 100,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.drain_rate.is_finite() && self.drain_rate > 0.0) {
            return Err(GatewayError::Config(format!(
                "drain rate must be positive, got {}",
                self.drain_rate
            )));
        }
        if self.tick_millis == 0 {
            return Err(GatewayError::Config("tick must be positive".into()));
        }
        Ok(())
    }
}

/// Delivered messages per recipient.
#[derive(Debug, Default)]
pub struct Mailboxes {
    boxes: HashMap<Phone, Vec<WireOutbound>>,
}

pub type SharedMailboxes = Arc<RwLock<Mailboxes>>;

impl Mailboxes {
    pub fn deliver(&mut self, to: &Phone, text: String, ts: Timestamp) -> &WireOutbound {
        let inbox = self.boxes.entry(to.clone()).or_default();
        let seq = inbox.len() as u64 + 1;
        inbox.push(WireOutbound {
            to: to.to_string(),
            text,
            seq,
            ts: ts.millis(),
        });
        inbox.last().expect("just pushed")
    }

    /// Messages for `to` with `seq > after_seq`, ascending.
    pub fn poll(&self, to: &Phone, after_seq: u64) -> Vec<WireOutbound> {
        self.boxes
            .get(to)
            .map(|inbox| inbox.iter().skip(after_seq as usize).cloned().collect())
            .unwrap_or_default()
    }

    pub fn total(&self) -> usize {
        self.boxes.values().map(Vec::len).sum()
    }
}

/// Rate-limited drain from the message buffer to the mailboxes.
#[derive(Debug, Clone)]
pub struct Modem {
    drain_rate: f64,
    last_drain: Timestamp,
    credit: f64,
}

impl Modem {
    pub fn new(drain_rate: f64, start: Timestamp) -> Result<Self, GatewayError> {
        if !(drain_rate.is_finite() && drain_rate > 0.0) {
            return Err(GatewayError::Config(format!(
                "drain rate must be positive, got {drain_rate}"
            )));
        }
        Ok(Self {
            drain_rate,
            last_drain: start,
            credit: 0.0,
        })
    }

    pub fn drain_rate(&self) -> f64 {
        self.drain_rate
    }

    /// Move up to `elapsed × rate` messages (plus carried credit) from the
    /// buffer, oldest first. Unused credit while the buffer is empty is capped
    /// at one message.
    pub fn drain(&mut self, store: &mut Store, mailboxes: &mut Mailboxes, now: Timestamp) -> usize {
        let elapsed = now.secs_since(self.last_drain).max(0.0);
        self.last_drain = self.last_drain.max(now);
        self.credit += elapsed * self.drain_rate;
        // Tolerate float drift from many small ticks.
        let allowed = (self.credit + 1e-9).floor() as usize;
        let mut sent = 0;
        while sent < allowed {
            let Some(msg) = store.pop_message() else {
                break;
            };
            mailboxes.deliver(&msg.phone_no, msg.text, now);
            sent += 1;
        }
        self.credit = (self.credit - sent as f64).max(0.0);
        if store.outbox_len() == 0 {
            self.credit = self.credit.min(1.0);
        }
        sent
    }
}

/// Acknowledgement for an accepted inbound submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accepted {
    pub accepted: bool,
    pub ts: i64,
}

/// What one [`Gateway::tick`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TickReport {
    pub processed: usize,
    pub evicted: usize,
    pub delivered: usize,
}

impl TickReport {
    pub fn changed(&self) -> bool {
        self.processed + self.evicted + self.delivered > 0
    }
}

/// Engine, modem and mailboxes wired together on one serial loop.
pub struct Gateway {
    engine: Engine,
    modem: Modem,
    mailboxes: SharedMailboxes,
    inbound: VecDeque<InboundSms>,
    clock: Arc<dyn Clock>,
    last_sweep: Timestamp,
}

impl Gateway {
    pub fn new(
        engine: Engine,
        drain_rate: f64,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        let now = clock.now();
        Ok(Self {
            engine,
            modem: Modem::new(drain_rate, now)?,
            mailboxes: SharedMailboxes::default(),
            inbound: VecDeque::new(),
            clock,
            last_sweep: now,
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut Engine {
        &mut self.engine
    }

    pub fn into_engine(self) -> Engine {
        self.engine
    }

    pub fn mailboxes(&self) -> SharedMailboxes {
        Arc::clone(&self.mailboxes)
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// Queue an inbound message for the engine.
    pub fn submit_inbound(&mut self, msg: &WireInbound) -> Result<Accepted, GatewayError> {
        let sms = msg.validate(self.clock.now())?;
        let ts = sms.received_at.millis();
        self.inbound.push_back(sms);
        Ok(Accepted { accepted: true, ts })
    }

    /// Hand every queued inbound message to the engine, in arrival order.
    pub fn process_inbound(&mut self) -> usize {
        let mut n = 0;
        while let Some(sms) = self.inbound.pop_front() {
            self.engine.handle_message(sms);
            n += 1;
        }
        n
    }

    pub fn drain(&mut self, now: Timestamp) -> usize {
        let mut boxes = self
            .mailboxes
            .write()
            .unwrap_or_else(PoisonError::into_inner);
        self.modem.drain(self.engine.store_mut(), &mut boxes, now)
    }

    /// Deliver everything in the buffer regardless of rate.
    pub fn flush_all(&mut self, now: Timestamp) -> usize {
        let mut boxes = self
            .mailboxes
            .write()
            .unwrap_or_else(PoisonError::into_inner);
        let store = self.engine.store_mut();
        let mut n = 0;
        while let Some(msg) = store.pop_message() {
            boxes.deliver(&msg.phone_no, msg.text, now);
            n += 1;
        }
        n
    }

    pub fn timeout_sweep(&mut self, now: Timestamp) -> usize {
        self.last_sweep = now;
        self.engine.timeout_sweep(now)
    }

    /// One loop iteration: feed inbound, sweep if due, drain.
    pub fn tick(&mut self) -> TickReport {
        let now = self.clock.now();
        let processed = self.process_inbound();
        let interval = self.engine.config().sweep_interval_seconds as f64;
        let evicted = if now.secs_since(self.last_sweep) >= interval {
            self.timeout_sweep(now)
        } else {
            0
        };
        TickReport {
            processed,
            evicted,
            delivered: self.drain(now),
        }
    }

    pub fn poll_outbound(&self, to: &Phone, after_seq: u64) -> Vec<WireOutbound> {
        self.mailboxes
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .poll(to, after_seq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimClock;
    use crate::tables::BufferedMessage;
    use proptest::prelude::*;

    fn phone(s: &str) -> Phone {
        Phone::parse(s).unwrap()
    }

    fn buffered(n: usize) -> Store {
        let mut s = Store::default();
        for i in 0..n {
            s.push_message(BufferedMessage::new(phone("1"), format!("m{i}")));
        }
        s
    }

    #[test]
    fn validation() {
        let now = Timestamp::from_secs(5);
        let ok = WireInbound::new("07700900001", "START")
            .validate(now)
            .unwrap();
        assert_eq!(ok.phone_no.as_str(), "07700900001");
        assert_eq!(ok.received_at, now);
        let missing_from = WireInbound {
            text: Some("HI".into()),
            ..Default::default()
        };
        assert!(matches!(
            missing_from.validate(now),
            Err(GatewayError::Rejected(_))
        ));
        assert!(WireInbound::new("  ", "HI").validate(now).is_err());
        assert!(WireInbound::new("abc", "HI").validate(now).is_err());
        let no_text = WireInbound {
            from: Some("1".into()),
            ..Default::default()
        };
        assert!(no_text.validate(now).is_err());
        let stamped = WireInbound {
            ts: Some(42),
            ..WireInbound::new("1", "x")
        };
        assert_eq!(
            stamped.validate(now).unwrap().received_at,
            Timestamp::from_millis(42)
        );
    }

    #[test]
    fn drains_at_rate_oldest_first() {
        let mut store = buffered(5);
        let mut boxes = Mailboxes::default();
        let t0 = Timestamp::from_secs(0);
        let mut modem = Modem::new(1.0, t0).unwrap();
        assert_eq!(
            modem.drain(&mut store, &mut boxes, Timestamp::from_secs(3)),
            3
        );
        let got: Vec<String> = boxes
            .poll(&phone("1"), 0)
            .into_iter()
            .map(|m| m.text)
            .collect();
        assert_eq!(got, vec!["m0", "m1", "m2"]);
        assert_eq!(store.outbox_len(), 2);
    }

    #[test]
    fn empty_buffer_is_a_noop() {
        let mut store = Store::default();
        let mut boxes = Mailboxes::default();
        let mut modem = Modem::new(1.0, Timestamp::from_secs(0)).unwrap();
        assert_eq!(
            modem.drain(&mut store, &mut boxes, Timestamp::from_secs(100)),
            0
        );
        assert_eq!(boxes.total(), 0);
    }

    #[test]
    fn fast_rate_is_effectively_immediate() {
        let mut store = buffered(50);
        let mut boxes = Mailboxes::default();
        let mut modem = Modem::new(1000.0, Timestamp::from_secs(0)).unwrap();
        assert_eq!(
            modem.drain(&mut store, &mut boxes, Timestamp::from_millis(50)),
            50
        );
    }

    #[test]
    fn small_ticks_accumulate() {
        let mut store = buffered(3);
        let mut boxes = Mailboxes::default();
        let mut modem = Modem::new(1.0, Timestamp::from_secs(0)).unwrap();
        let mut delivered_at = Vec::new();
        for tick in 1..=40 {
            let now = Timestamp::from_millis(tick * 100);
            for _ in 0..modem.drain(&mut store, &mut boxes, now) {
                delivered_at.push(now.millis());
            }
        }
        assert_eq!(delivered_at, vec![1000, 2000, 3000]);
    }

    #[test]
    fn rejects_non_positive_rate() {
        assert!(Modem::new(0.0, Timestamp::default()).is_err());
        assert!(Modem::new(f64::NAN, Timestamp::default()).is_err());
        let cfg = GatewayConfig {
            drain_rate: -1.0,
            ..GatewayConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn poll_after_seq() {
        let mut boxes = Mailboxes::default();
        for t in ["a", "b", "c"] {
            boxes.deliver(&phone("9"), t.into(), Timestamp::default());
        }
        let after1: Vec<u64> = boxes.poll(&phone("9"), 1).iter().map(|m| m.seq).collect();
        assert_eq!(after1, vec![2, 3]);
        assert!(boxes.poll(&phone("9"), 3).is_empty());
        assert!(boxes.poll(&phone("8"), 0).is_empty());
    }

    #[test]
    fn gateway_feeds_engine_in_order() {
        use crate::fuzzy::FuzzySystem;
        use crate::session::SessionConfig;
        use crate::tables::QuestionBank;

        let bank = QuestionBank::parse("T | 0 | q | a;b | 1 | h\n").unwrap();
        let engine = Engine::new(
            Store::from_bank(bank),
            FuzzySystem::normative(),
            SessionConfig {
                rng_seed: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        let clock = SimClock::new(Timestamp::from_secs(1000));
        let mut gw = Gateway::new(engine, 1000.0, Arc::new(clock.clone())).unwrap();
        gw.submit_inbound(&WireInbound::new("07700900001", "START"))
            .unwrap();
        gw.submit_inbound(&WireInbound::new("07700900001", "NEW ALI"))
            .unwrap();
        assert!(gw.submit_inbound(&WireInbound::default()).is_err());
        clock.advance_secs(1.0);
        gw.tick();
        let texts: Vec<String> = gw
            .poll_outbound(&phone("07700900001"), 0)
            .into_iter()
            .map(|m| m.text)
            .collect();
        assert_eq!(texts.len(), 2);
        assert!(texts[0].starts_with("PLAYERS: NONE."));
        assert!(texts[1].starts_with("TOPICS: 1:T."));
    }

    proptest! {
        #[test]
        fn delivery_never_outpaces_rate(
            rate in 0.2f64..20.0,
            steps in prop::collection::vec((0i64..3000, 0usize..6), 1..60),
        ) {
            let mut store = Store::default();
            let mut boxes = Mailboxes::default();
            let mut modem = Modem::new(rate, Timestamp::from_millis(0)).unwrap();
            let mut now = 0i64;
            let mut log: Vec<(i64, usize)> = Vec::new();
            let mut pushed = 0usize;
            for (dt, n) in steps {
                for _ in 0..n {
                    store.push_message(BufferedMessage::new(phone("5"), format!("{pushed}")));
                    pushed += 1;
                }
                now += dt;
                log.push((now, modem.drain(&mut store, &mut boxes, Timestamp::from_millis(now))));
            }
            // Drains i..=j spend credit earned since drain i-1, plus at most
            // one message of carried credit.
            for i in 0..log.len() {
                let start = if i == 0 { 0 } else { log[i - 1].0 };
                let mut count = 0;
                for entry in &log[i..] {
                    count += entry.1;
                    let span = (entry.0 - start) as f64 / 1000.0;
                    prop_assert!(count as f64 <= rate * span + 1.0 + 1e-6);
                }
            }
            // FIFO with gap-free sequence numbers.
            let got = boxes.poll(&phone("5"), 0);
            for (i, m) in got.iter().enumerate() {
                prop_assert_eq!(m.seq, i as u64 + 1);
                prop_assert_eq!(&m.text, &i.to_string());
            }
            // No loss: draining long enough empties the buffer.
            let later = Timestamp::from_millis(now + ((pushed as f64 / rate + 2.0) * 1000.0) as i64);
            modem.drain(&mut store, &mut boxes, later);
            prop_assert_eq!(boxes.poll(&phone("5"), 0).len(), pushed);
        }
    }
}
