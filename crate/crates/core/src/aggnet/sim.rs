use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::node::{AggregatorState, RouteSlot, ShareMessage};
use super::sink::{SinkConfig, SinkState, SinkVerdict};
use super::topology::{RouteTree, Topology};
use super::{assign_shares_to_paths, Capture, RunMetrics, SenseLog, SimError, SimOutcome, SimParams};
use crate::adma::{encode, mix64, AuthKey, KeyTable};
use crate::adversary::{AttackKind, AttackPlan, ReplayMode, TamperPolicy};
use crate::dma::{disperse, DispersalMatrix, ReadingBlock};
use crate::gfp::{FieldElement, PrimeField};
use crate::share::{NodeId, Scheme};
use crate::sma::{split, SmaParams};

const STREAM_SENSE: u64 = 1;
const STREAM_NET: u64 = 2;
const STREAM_ATTACK: u64 = 3;

// Same-tick order: deliveries, then timers, then sink expiries, then sensing.
const KIND_DELIVER: u8 = 0;
const KIND_TIMER: u8 = 1;
const KIND_EXPIRY: u8 = 2;
const KIND_SENSE: u8 = 3;

type EventKey = (u64, u8, NodeId, usize, u64);

#[derive(Debug)]
enum Event {
    Sense { round: u64 },
    Deliver { to: NodeId, msg: ShareMessage },
    Timer { node: NodeId, path: usize, sequence: u64 },
    Expiry { sequence: u64, generation: u32 },
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Key of `node` under `key_seed` unless given explicitly.
pub(crate) fn source_keys(topology: &Topology, params: &SimParams) -> KeyTable {
    topology
        .sources()
        .map(|node| AuthKey {
            node,
            key: params
                .keys
                .get(&node)
                .copied()
                .unwrap_or_else(|| mix64(params.key_seed ^ mix64(node as u64 + 1))),
        })
        .collect()
}

struct Attack {
    plan: AttackPlan,
    nodes: BTreeSet<NodeId>,
    delta: FieldElement,
    recorded: BTreeMap<(NodeId, usize), (u64, FieldElement)>,
}

struct Sim<'a> {
    topo: &'a Topology,
    params: &'a SimParams,
    field: PrimeField,
    sma: Option<SmaParams>,
    matrix: Option<DispersalMatrix>,
    keys: KeyTable,
    trees: Vec<RouteTree>,
    tree_of_path: Vec<usize>,
    slots: Vec<BTreeMap<NodeId, RouteSlot>>,
    aggs: BTreeMap<NodeId, AggregatorState>,
    sink: SinkState,
    queue: BTreeMap<EventKey, Event>,
    inserted: u64,
    rng_sense: ChaCha8Rng,
    rng_net: ChaCha8Rng,
    rng_attack: ChaCha8Rng,
    pending: BTreeMap<NodeId, Vec<FieldElement>>,
    attack: Option<Attack>,
    metrics: RunMetrics,
    log: Vec<super::Reconstruction>,
    sense_log: SenseLog,
    captures: Vec<Capture>,
}

/// Runs one scenario to quiescence. Identical inputs give identical
/// outputs, down to [`RunMetrics::trace_digest`].
pub fn run_scenario(
    topology: &Topology,
    params: &SimParams,
    seed: u64,
    attack: Option<&AttackPlan>,
) -> Result<SimOutcome, SimError> {
    params.validate()?;
    topology.validate()?;
    let field = params.field;
    let (sma, matrix) = match params.scheme {
        Scheme::Tree => (None, None),
        Scheme::Sma => (
            Some(SmaParams::new(params.paths, params.threshold, field)?),
            Some(DispersalMatrix::vandermonde(params.threshold, params.paths, field)?),
        ),
        Scheme::Dma | Scheme::Adma => (
            None,
            Some(DispersalMatrix::vandermonde(params.threshold, params.paths, field)?),
        ),
    };

    let (trees, tree_of_path) = match params.scheme {
        Scheme::Tree => (vec![topology.tree_route()], vec![0]),
        _ => {
            let trees: Vec<RouteTree> = (0..topology.path_count()).map(|j| topology.path_route(j)).collect();
            let mut map = vec![0];
            map.extend(assign_shares_to_paths(params.paths, topology.path_count()));
            (trees, map)
        }
    };
    let slots = trees
        .iter()
        .map(|tree| {
            topology
                .sources()
                .map(|n| {
                    (
                        n,
                        RouteSlot {
                            expected: tree.subtree_size(n),
                            height: tree.height(n),
                        },
                    )
                })
                .collect()
        })
        .collect();

    let keys = source_keys(topology, params);
    let sink = SinkState::new(SinkConfig {
        scheme: params.scheme,
        matrix: matrix.clone(),
        keys: keys.clone(),
        budget: params.subset_budget,
        horizon: params.horizon(),
        sources: topology.sources().collect(),
    });

    let attack = match attack {
        Some(plan) => {
            let nodes = plan
                .resolve(topology, seed)
                .map_err(|e| SimError::Config(e.to_string()))?;
            Some(Attack {
                plan: plan.clone(),
                nodes,
                delta: field.element(plan.delta),
                recorded: BTreeMap::new(),
            })
        }
        None => None,
    };

    let mut sim = Sim {
        topo: topology,
        params,
        field,
        sma,
        matrix,
        keys,
        trees,
        tree_of_path,
        slots,
        aggs: topology
            .sources()
            .map(|n| (n, AggregatorState::new(n, params.timeout)))
            .collect(),
        sink,
        queue: BTreeMap::new(),
        inserted: 0,
        rng_sense: stream(seed, STREAM_SENSE),
        rng_net: stream(seed, STREAM_NET),
        rng_attack: stream(seed, STREAM_ATTACK),
        pending: BTreeMap::new(),
        attack,
        metrics: RunMetrics::default(),
        log: Vec::new(),
        sense_log: SenseLog::default(),
        captures: Vec::new(),
    };
    let rounds = params.duration.div_ceil(params.sense_interval);
    for round in 0..rounds {
        sim.push(round * params.sense_interval, KIND_SENSE, 0, 0, Event::Sense { round });
    }
    sim.run()?;

    let compromised = sim.attack.as_ref().map(|a| a.nodes.clone()).unwrap_or_default();
    Ok(SimOutcome {
        metrics: sim.metrics,
        log: sim.log,
        sense_log: sim.sense_log,
        captures: sim.captures,
        compromised,
    })
}

impl Sim<'_> {
    fn push(&mut self, tick: u64, kind: u8, node: NodeId, path: usize, ev: Event) {
        self.inserted += 1;
        self.queue.insert((tick, kind, node, path, self.inserted), ev);
    }

    fn run(&mut self) -> Result<(), SimError> {
        while let Some(((now, ..), ev)) = self.queue.pop_first() {
            self.metrics.final_tick = now;
            match ev {
                Event::Sense { round } => self.sense(round, now)?,
                Event::Deliver { to, msg } => {
                    if to == self.topo.sink() {
                        self.at_sink(msg, now);
                    } else {
                        self.capture(to, &msg, false, now);
                        self.at_node(to, msg, now);
                    }
                }
                Event::Timer { node, path, sequence } => {
                    let flushed = self.aggs.get_mut(&node).and_then(|a| a.on_timer(path, sequence, now));
                    if let Some(msg) = flushed {
                        self.metrics.timer_flushes += 1;
                        self.emit(node, msg, now);
                    }
                }
                Event::Expiry { sequence, generation } => {
                    if let Some(rec) = self.sink.on_deadline(sequence, generation, now) {
                        self.record(rec);
                    }
                }
            }
        }
        Ok(())
    }

    fn sense(&mut self, round: u64, now: u64) -> Result<(), SimError> {
        let sources: Vec<NodeId> = self.topo.sources().collect();
        let block_len = self.params.block_len();
        for node in sources {
            let reading = self.field.element(self.rng_sense.gen_range(0..self.params.max_reading));
            self.metrics.readings_sensed += 1;
            let pending = self.pending.entry(node).or_default();
            pending.push(reading);
            if pending.len() < block_len {
                continue;
            }
            let readings = std::mem::take(pending);
            let sequence = round / block_len as u64;
            let shares: Vec<FieldElement> = match self.params.scheme {
                Scheme::Tree => vec![reading],
                Scheme::Sma => split(reading, self.sma.as_ref().expect("sma params"), &mut self.rng_sense)?
                    .values()
                    .to_vec(),
                Scheme::Dma => disperse(&ReadingBlock::new(readings.clone()), self.matrix.as_ref().expect("matrix"))?
                    .values()
                    .to_vec(),
                Scheme::Adma => {
                    let key = self.keys.get(node).expect("every source has a key");
                    encode(&readings, &key, sequence, self.matrix.as_ref().expect("matrix"))?
                        .values()
                        .to_vec()
                }
            };
            self.sense_log
                .0
                .entry(sequence)
                .or_default()
                .insert(node, readings.iter().map(|r| r.value()).collect());
            self.metrics.source_shares += shares.len() as u64;
            let first_path = usize::from(self.params.scheme != Scheme::Tree);
            for (i, payload) in shares.into_iter().enumerate() {
                let msg = ShareMessage {
                    scheme: self.params.scheme,
                    sequence,
                    path: first_path + i,
                    payload,
                    contributors: [node].into_iter().collect(),
                    hops: 0,
                };
                self.at_node(node, msg, now);
            }
        }
        if round % block_len as u64 == block_len as u64 - 1 {
            self.metrics.sequences += 1;
        }
        Ok(())
    }

    fn at_node(&mut self, node: NodeId, msg: ShareMessage, now: u64) {
        let tree = self.tree_of_path[msg.path];
        let slot = self.slots[tree][&node];
        let (path, sequence) = (msg.path, msg.sequence);
        let step = self.aggs.get_mut(&node).expect("aggregator per source").on_share(msg, slot, now);
        if step.anomaly {
            self.metrics.anomalies += 1;
        }
        if step.late {
            self.metrics.missed_aggregation_count += 1;
        }
        if let Some(deadline) = step.timer {
            self.push(deadline, KIND_TIMER, node, path, Event::Timer { node, path, sequence });
        }
        for out in step.forwarded {
            self.emit(node, out, now);
        }
    }

    fn at_sink(&mut self, msg: ShareMessage, now: u64) {
        let step = self.sink.on_share(msg, now);
        if step.rejected_replay {
            self.metrics.replays_rejected += 1;
        }
        if step.anomaly {
            self.metrics.anomalies += 1;
        }
        if let Some((tick, sequence, generation)) = step.deadline {
            let sink = self.topo.sink();
            self.push(tick, KIND_EXPIRY, sink, 0, Event::Expiry { sequence, generation });
        }
        if let Some(rec) = step.decided {
            self.record(rec);
        }
    }

    fn record(&mut self, rec: super::Reconstruction) {
        let counts = &mut self.metrics.reconstructions;
        match rec.verdict {
            v if v.is_accepted() => counts.authentic += 1,
            SinkVerdict::Ambiguous => counts.ambiguous += 1,
            _ => counts.failed += 1,
        }
        self.log.push(rec);
    }

    fn capture(&mut self, node: NodeId, msg: &ShareMessage, outgoing: bool, now: u64) {
        if self.attack.as_ref().is_some_and(|a| a.nodes.contains(&node)) {
            self.captures.push(Capture {
                node,
                tick: now,
                outgoing,
                sequence: msg.sequence,
                path: msg.path,
                payload: msg.payload.value(),
                contributors: msg.contributors.clone(),
            });
        }
    }

    /// Sends an aggregator's output to its parent, letting a compromised
    /// relay interfere first.
    fn emit(&mut self, node: NodeId, mut msg: ShareMessage, now: u64) {
        let tree = self.tree_of_path[msg.path];
        let parent = self.trees[tree].parent(node).expect("sources have parents");
        self.capture(node, &msg, true, now);
        msg.hops += 1;

        let relays = self.trees[tree].relays().contains(&node);
        let mut resend = None;
        if let Some(att) = self.attack.as_mut().filter(|a| relays && a.nodes.contains(&node) && now >= a.plan.activation) {
            match att.plan.kind {
                AttackKind::Eavesdrop => {}
                AttackKind::Tamper => {
                    let shift = match att.plan.policy {
                        TamperPolicy::Shift => {
                            let a1q = match (&self.matrix, msg.scheme) {
                                (Some(m), Scheme::Dma | Scheme::Adma) => m.coefficient(1, msg.path),
                                _ => self.field.one(),
                            };
                            att.delta * a1q
                        }
                        TamperPolicy::Random => self.field.random(&mut self.rng_attack),
                    };
                    msg.payload += shift;
                }
                AttackKind::NoDataDos => {
                    self.metrics.adversarial_drops += 1;
                    return;
                }
                AttackKind::GarbageDos => msg.payload = self.field.random(&mut self.rng_attack),
                AttackKind::Replay => {
                    let slot = (node, msg.path);
                    match (att.plan.replay, att.recorded.get(&slot).copied()) {
                        (ReplayMode::Resend, None) => {
                            att.recorded.insert(slot, (msg.sequence, msg.payload));
                            let delay = att
                                .plan
                                .replay_delay
                                .unwrap_or(self.params.horizon() + self.params.sense_interval);
                            resend = Some((msg.clone(), now + delay));
                        }
                        (ReplayMode::Relabel, None) => {
                            att.recorded.insert(slot, (msg.sequence, msg.payload));
                        }
                        (ReplayMode::Relabel, Some((seq, old))) if msg.sequence > seq => msg.payload = old,
                        _ => {}
                    }
                }
            }
        }
        if let Some((copy, at)) = resend {
            self.send(node, parent, copy, at);
        }
        self.send(node, parent, msg, now);
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: ShareMessage, at: u64) {
        let jitter = if self.params.skew > 0 {
            self.rng_net.gen_range(0..=self.params.skew)
        } else {
            0
        };
        let arrive = at + self.params.link_delay + jitter;
        self.metrics.messages_sent += 1;
        *self.metrics.messages_per_node.entry(from).or_insert(0) += 1;
        let mut h = self.metrics.trace_digest;
        for word in [arrive, from as u64, to as u64, msg.sequence, msg.path as u64, msg.payload.value()] {
            h = mix64(h ^ word).wrapping_add(0x9E37_79B9_7F4A_7C15);
        }
        self.metrics.trace_digest = h;
        let path = msg.path;
        self.push(arrive, KIND_DELIVER, to, path, Event::Deliver { to, msg });
    }
}
