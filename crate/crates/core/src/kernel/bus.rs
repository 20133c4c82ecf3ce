//! Typed publish/subscribe bus with a total order inside each tick.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{FaultEvent, MetricEvent};
use crate::command::{ChannelCommand, Heartbeat};
use crate::safety::Verdict;
use crate::sensors::SensorFrame;
use crate::world::Scene;

/// Position inside a tick. Messages are ordered by phase, then publisher id,
/// then publication order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Actors,
    GroundTruth,
    Sensors,
    Channels,
    Arbitration,
    Ego,
    Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Scene,
    SensorFrame,
    ChannelCommand,
    Heartbeat,
    Verdict,
    FaultEvent,
    MetricEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum Payload {
    Scene(Scene),
    SensorFrame(SensorFrame),
    ChannelCommand(ChannelCommand),
    Heartbeat(Heartbeat),
    Verdict(Verdict),
    FaultEvent(FaultEvent),
    MetricEvent(MetricEvent),
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Scene(_) => PayloadKind::Scene,
            Payload::SensorFrame(_) => PayloadKind::SensorFrame,
            Payload::ChannelCommand(_) => PayloadKind::ChannelCommand,
            Payload::Heartbeat(_) => PayloadKind::Heartbeat,
            Payload::Verdict(_) => PayloadKind::Verdict,
            Payload::FaultEvent(_) => PayloadKind::FaultEvent,
            Payload::MetricEvent(_) => PayloadKind::MetricEvent,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusMessage {
    pub tick: u64,
    pub phase: Phase,
    pub publisher: String,
    pub topic: String,
    pub payload: Arc<Payload>,
    seq: u64,
}

impl BusMessage {
    fn key(&self) -> (u64, Phase, &str, u64) {
        (self.tick, self.phase, &self.publisher, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BusError {
    #[error("topic `{topic}` is not declared; declared topics: {}", declared.join(", "))]
    UndeclaredTopic { topic: String, declared: Vec<String> },
    #[error("topic `{topic}` carries {expected:?}, got {found:?}")]
    WrongPayload {
        topic: String,
        expected: PayloadKind,
        found: PayloadKind,
    },
    #[error("topic `{0}` declared twice")]
    DuplicateTopic(String),
}

#[derive(Debug, Default)]
pub struct Bus {
    topics: BTreeMap<String, PayloadKind>,
    subscriptions: BTreeMap<String, BTreeSet<String>>,
    inboxes: BTreeMap<String, Vec<BusMessage>>,
    log: Vec<BusMessage>,
    seq: u64,
}

impl Bus {
    pub fn new() -> Self {
        Bus::default()
    }

    pub fn declare(&mut self, topic: &str, kind: PayloadKind) -> Result<(), BusError> {
        if self.topics.insert(topic.to_string(), kind).is_some() {
            return Err(BusError::DuplicateTopic(topic.to_string()));
        }
        Ok(())
    }

    pub fn topics(&self) -> impl Iterator<Item = (&String, &PayloadKind)> {
        self.topics.iter()
    }

    fn undeclared(&self, topic: &str) -> BusError {
        BusError::UndeclaredTopic {
            topic: topic.to_string(),
            declared: self.topics.keys().cloned().collect(),
        }
    }

    pub fn subscribe(&mut self, subscriber: &str, topic: &str) -> Result<(), BusError> {
        if !self.topics.contains_key(topic) {
            return Err(self.undeclared(topic));
        }
        self.subscriptions
            .entry(subscriber.to_string())
            .or_default()
            .insert(topic.to_string());
        self.inboxes.entry(subscriber.to_string()).or_default();
        Ok(())
    }

    pub fn subscriptions(&self, subscriber: &str) -> impl Iterator<Item = &String> {
        self.subscriptions.get(subscriber).into_iter().flatten()
    }

    pub fn publish(
        &mut self,
        tick: u64,
        phase: Phase,
        publisher: &str,
        topic: &str,
        payload: Payload,
    ) -> Result<(), BusError> {
        let Some(&expected) = self.topics.get(topic) else {
            return Err(self.undeclared(topic));
        };
        if payload.kind() != expected {
            return Err(BusError::WrongPayload {
                topic: topic.to_string(),
                expected,
                found: payload.kind(),
            });
        }
        let msg = BusMessage {
            tick,
            phase,
            publisher: publisher.to_string(),
            topic: topic.to_string(),
            payload: Arc::new(payload),
            seq: self.seq,
        };
        self.seq += 1;
        for (sub, topics) in &self.subscriptions {
            if topics.contains(topic) {
                self.inboxes.get_mut(sub).expect("inbox exists").push(msg.clone());
            }
        }
        self.log.push(msg);
        Ok(())
    }

    /// Removes and returns every message for `subscriber` published before
    /// `tick`, or at `tick` in a phase up to `through`, in bus order.
    pub fn take(&mut self, subscriber: &str, tick: u64, through: Phase) -> Vec<BusMessage> {
        let Some(inbox) = self.inboxes.get_mut(subscriber) else {
            return Vec::new();
        };
        let (mut ready, rest): (Vec<_>, Vec<_>) = inbox
            .drain(..)
            .partition(|m| m.tick < tick || (m.tick == tick && m.phase <= through));
        *inbox = rest;
        ready.sort_by(|a, b| a.key().cmp(&b.key()));
        ready
    }

    /// Every message published since the last call, in bus order.
    pub fn drain_log(&mut self) -> Vec<BusMessage> {
        let mut out = std::mem::take(&mut self.log);
        out.sort_by(|a, b| a.key().cmp(&b.key()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::FramePayload;

    fn frame(id: &str) -> Payload {
        Payload::SensorFrame(SensorFrame {
            sensor_id: id.into(),
            tick: 0,
            payload: FramePayload::GpsFix { x: 0.0, y: 0.0 },
        })
    }

    fn bus_with(topics: &[&str]) -> Bus {
        let mut b = Bus::new();
        for t in topics {
            b.declare(t, PayloadKind::SensorFrame).unwrap();
        }
        b
    }

    #[test]
    fn undeclared_subscription_lists_topics() {
        let mut b = bus_with(&["sensor/a", "sensor/b"]);
        let e = b.subscribe("nominal", "sensor/c").unwrap_err();
        assert_eq!(
            e,
            BusError::UndeclaredTopic {
                topic: "sensor/c".into(),
                declared: vec!["sensor/a".into(), "sensor/b".into()]
            }
        );
        assert!(e.to_string().contains("sensor/a, sensor/b"));
    }

    #[test]
    fn wrong_payload_is_rejected() {
        let mut b = bus_with(&["sensor/a"]);
        let hb = Payload::Heartbeat(Heartbeat {
            channel_id: "x".into(),
            counter: 1,
        });
        assert!(matches!(
            b.publish(0, Phase::Sensors, "a", "sensor/a", hb),
            Err(BusError::WrongPayload { .. })
        ));
    }

    #[test]
    fn order_is_phase_then_publisher() {
        let orders = [["b", "a", "c"], ["c", "b", "a"], ["a", "c", "b"]];
        let mut seen = Vec::new();
        for order in orders {
            let mut b = bus_with(&["sensor/a", "sensor/b", "sensor/c"]);
            for t in ["sensor/a", "sensor/b", "sensor/c"] {
                b.subscribe("ch", t).unwrap();
            }
            for id in order {
                b.publish(3, Phase::Sensors, id, &format!("sensor/{id}"), frame(id)).unwrap();
            }
            let got: Vec<String> = b.take("ch", 3, Phase::Sensors).into_iter().map(|m| m.publisher).collect();
            seen.push(got);
        }
        assert!(seen.iter().all(|s| s == &["a", "b", "c"]));
    }

    #[test]
    fn later_phases_wait_for_the_next_tick() {
        let mut b = Bus::new();
        b.declare("heartbeat/n", PayloadKind::Heartbeat).unwrap();
        b.subscribe("s", "heartbeat/n").unwrap();
        let hb = Payload::Heartbeat(Heartbeat {
            channel_id: "n".into(),
            counter: 1,
        });
        b.publish(4, Phase::Channels, "n", "heartbeat/n", hb).unwrap();
        assert!(b.take("s", 4, Phase::Sensors).is_empty());
        assert_eq!(b.take("s", 5, Phase::Sensors).len(), 1);
        assert!(b.take("s", 6, Phase::Sensors).is_empty());
    }

    #[test]
    fn only_subscribers_receive() {
        let mut b = bus_with(&["sensor/a"]);
        b.subscribe("nominal", "sensor/a").unwrap();
        b.publish(0, Phase::Sensors, "a", "sensor/a", frame("a")).unwrap();
        assert!(b.take("safety", 0, Phase::Sensors).is_empty());
        let got = b.take("nominal", 0, Phase::Sensors);
        assert_eq!(got.len(), 1);
        assert_eq!(b.drain_log().len(), 1);
    }
}
