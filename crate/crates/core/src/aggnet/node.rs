//! Per-node buffering and in-network summation of same-path shares.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gfp::FieldElement;
use crate::share::{Contributors, NodeId, Scheme};

/// One share (or aggregated share) in flight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareMessage {
    pub scheme: Scheme,
    pub sequence: u64,
    /// Share index; 0 on the plaintext tree.
    pub path: usize,
    #[serde(with = "element_value")]
    pub payload: FieldElement,
    pub contributors: Contributors,
    pub hops: u32,
}

mod element_value {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::gfp::{FieldElement, PrimeField};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        value: u64,
        modulus: u64,
    }

    pub fn serialize<S: Serializer>(x: &FieldElement, s: S) -> Result<S::Ok, S::Error> {
        Repr {
            value: x.value(),
            modulus: x.field().modulus(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FieldElement, D::Error> {
        let r = Repr::deserialize(d)?;
        let f = PrimeField::new(r.modulus).map_err(serde::de::Error::custom)?;
        if r.value >= r.modulus {
            return Err(serde::de::Error::custom("value out of range"));
        }
        Ok(f.element(r.value))
    }
}

/// What the aggregator needs to know about its place in one route.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteSlot {
    /// Sources below this node on the route, itself included.
    pub expected: usize,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Buffer {
    scheme: Scheme,
    sum: FieldElement,
    contributors: Contributors,
    hops: u32,
    deadline: u64,
}

/// Result of feeding one share to an aggregator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AggStep {
    pub forwarded: Vec<ShareMessage>,
    /// Deadline of a freshly opened buffer.
    pub timer: Option<u64>,
    /// The share arrived after its buffer closed and was passed on as is.
    pub late: bool,
    pub anomaly: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregatorState {
    node: NodeId,
    timeout: u64,
    buffers: BTreeMap<(usize, u64), Buffer>,
    highest: BTreeMap<usize, u64>,
}

impl AggregatorState {
    pub fn new(node: NodeId, timeout: u64) -> Self {
        Self {
            node,
            timeout,
            buffers: BTreeMap::new(),
            highest: BTreeMap::new(),
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn open_buffers(&self) -> usize {
        self.buffers.len()
    }

    /// Buffers the share, flushing when every expected source is in, when a
    /// higher sequence shows up on the same path, or (via [`Self::on_timer`])
    /// when the buffer's deadline passes.
    pub fn on_share(&mut self, msg: ShareMessage, slot: RouteSlot, now: u64) -> AggStep {
        let mut step = AggStep::default();
        let key = (msg.path, msg.sequence);

        if let Some(buf) = self.buffers.get_mut(&key) {
            if buf.scheme != msg.scheme || buf.sum.field() != msg.payload.field() {
                step.anomaly = true;
                return step;
            }
            if !buf.contributors.is_disjoint(&msg.contributors) {
                // the same source twice would double count it
                step.anomaly = true;
                return step;
            }
            buf.sum += msg.payload;
            buf.contributors.extend(msg.contributors);
            buf.hops = buf.hops.max(msg.hops);
            if buf.contributors.len() >= slot.expected {
                step.forwarded.push(self.flush(key).expect("buffer present"));
            }
            return step;
        }

        if self.highest.get(&msg.path).is_some_and(|&h| msg.sequence <= h) {
            step.late = true;
            step.forwarded.push(msg);
            return step;
        }

        self.highest.insert(msg.path, msg.sequence);
        let stale: Vec<_> = self
            .buffers
            .range((msg.path, 0)..(msg.path, msg.sequence))
            .map(|(&k, _)| k)
            .collect();
        for k in stale {
            step.forwarded.push(self.flush(k).expect("buffer present"));
        }

        let deadline = now + self.timeout * (1 + slot.height);
        let complete = msg.contributors.len() >= slot.expected;
        self.buffers.insert(
            key,
            Buffer {
                scheme: msg.scheme,
                sum: msg.payload,
                contributors: msg.contributors,
                hops: msg.hops,
                deadline,
            },
        );
        if complete {
            step.forwarded.push(self.flush(key).expect("just inserted"));
        } else {
            step.timer = Some(deadline);
        }
        step
    }

    /// Flushes the buffer if it is still open and its deadline has passed.
    pub fn on_timer(&mut self, path: usize, sequence: u64, now: u64) -> Option<ShareMessage> {
        let key = (path, sequence);
        if self.buffers.get(&key).is_some_and(|b| b.deadline <= now) {
            self.flush(key)
        } else {
            None
        }
    }

    fn flush(&mut self, key: (usize, u64)) -> Option<ShareMessage> {
        let buf = self.buffers.remove(&key)?;
        Some(ShareMessage {
            scheme: buf.scheme,
            sequence: key.1,
            path: key.0,
            payload: buf.sum,
            contributors: buf.contributors,
            hops: buf.hops,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gfp::PrimeField;

    fn msg(seq: u64, path: usize, value: u64, from: &[NodeId]) -> ShareMessage {
        ShareMessage {
            scheme: Scheme::Sma,
            sequence: seq,
            path,
            payload: PrimeField::new(251).unwrap().element(value),
            contributors: from.iter().copied().collect(),
            hops: 0,
        }
    }

    const SLOT3: RouteSlot = RouteSlot { expected: 3, height: 1 };

    #[test]
    fn single_child_passes_through() {
        let mut a = AggregatorState::new(9, 4);
        let step = a.on_share(msg(0, 1, 42, &[3]), RouteSlot { expected: 1, height: 0 }, 0);
        assert_eq!(step.forwarded, vec![msg(0, 1, 42, &[3])]);
        assert_eq!(step.timer, None);
    }

    #[test]
    fn sums_until_complete() {
        let mut a = AggregatorState::new(9, 4);
        let s = a.on_share(msg(0, 1, 10, &[9]), SLOT3, 0);
        assert_eq!(s.timer, Some(8));
        assert!(s.forwarded.is_empty());
        assert!(a.on_share(msg(0, 1, 20, &[1]), SLOT3, 1).forwarded.is_empty());
        let s = a.on_share(msg(0, 1, 250, &[2]), SLOT3, 2);
        assert_eq!(s.forwarded, vec![msg(0, 1, 29, &[1, 2, 9])]);
        assert_eq!(a.open_buffers(), 0);
    }

    #[test]
    fn higher_sequence_flushes_in_order() {
        let mut a = AggregatorState::new(9, 4);
        a.on_share(msg(0, 1, 1, &[9]), SLOT3, 0);
        a.on_share(msg(1, 1, 2, &[9]), SLOT3, 10);
        let s = a.on_share(msg(3, 1, 3, &[9]), SLOT3, 30);
        assert_eq!(s.forwarded, vec![msg(1, 1, 2, &[9])]);
        // other paths are untouched
        a.on_share(msg(0, 2, 5, &[9]), SLOT3, 30);
        assert_eq!(a.open_buffers(), 2);
    }

    #[test]
    fn timer_flushes_partial_then_late_share_passes_through() {
        let mut a = AggregatorState::new(9, 4);
        a.on_share(msg(0, 1, 10, &[9]), SLOT3, 0);
        a.on_share(msg(0, 1, 20, &[1]), SLOT3, 1);
        assert_eq!(a.on_timer(1, 0, 7), None);
        assert_eq!(a.on_timer(1, 0, 8), Some(msg(0, 1, 30, &[1, 9])));
        let s = a.on_share(msg(0, 1, 5, &[2]), SLOT3, 9);
        assert!(s.late);
        assert_eq!(s.forwarded, vec![msg(0, 1, 5, &[2])]);
        assert_eq!(a.on_timer(1, 0, 20), None);
    }

    #[test]
    fn mismatched_scheme_is_an_anomaly() {
        let mut a = AggregatorState::new(9, 4);
        a.on_share(msg(0, 1, 10, &[9]), SLOT3, 0);
        let mut other = msg(0, 1, 1, &[1]);
        other.scheme = Scheme::Dma;
        let s = a.on_share(other, SLOT3, 1);
        assert!(s.anomaly && s.forwarded.is_empty());
        let s = a.on_share(msg(0, 1, 1, &[9]), SLOT3, 1);
        assert!(s.anomaly);
        let s = a.on_share(msg(0, 1, 1, &[1]), SLOT3, 1);
        assert!(!s.anomaly);
    }
}
