//! Sink-side grouping and reconstruction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::node::ShareMessage;
use crate::adma::{verify_reconstruct, ContributedShare, KeyTable, Verdict};
use crate::dma::{disperse, reconstruct_subset, DispersalMatrix};
use crate::gfp::FieldElement;
use crate::share::{Contributors, PathShare, Scheme, SchemeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SinkVerdict {
    /// More than `t` shares and all of them agree.
    Consistent,
    /// Exactly `t` shares, nothing to cross-check against.
    Unchecked,
    /// The shares disagree; the lowest `t` were used.
    Ambiguous,
    Authentic,
    Unverifiable,
    /// Fewer than `t` shares with one contributor set.
    Insufficient,
}

impl SinkVerdict {
    /// The sink has no reason to distrust the output.
    pub fn is_accepted(self) -> bool {
        matches!(self, SinkVerdict::Consistent | SinkVerdict::Unchecked | SinkVerdict::Authentic)
    }

    /// A value was produced at all, trusted or not.
    pub fn has_value(self) -> bool {
        !matches!(self, SinkVerdict::Unverifiable | SinkVerdict::Insufficient)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub sequence: u64,
    pub contributors: Contributors,
    /// Aggregated reading slots; empty when nothing was produced.
    pub values: Vec<u64>,
    pub verdict: SinkVerdict,
    /// Share indices that were available in the chosen group.
    pub paths: Vec<usize>,
    pub tick: u64,
    /// Decided after the same sequence had already been decided.
    pub repeat: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkConfig {
    pub scheme: Scheme,
    pub matrix: Option<DispersalMatrix>,
    pub keys: KeyTable,
    pub budget: usize,
    pub horizon: u64,
    pub sources: Contributors,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SinkStep {
    /// `(tick, sequence, generation)` of a newly opened group's expiry.
    pub deadline: Option<(u64, u64, u32)>,
    pub decided: Option<Reconstruction>,
    pub rejected_replay: bool,
    pub anomaly: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Group {
    per_path: BTreeMap<usize, (FieldElement, Contributors)>,
}

#[derive(Debug, Clone)]
pub struct SinkState {
    cfg: SinkConfig,
    routes: Vec<usize>,
    groups: BTreeMap<(u64, u32), Group>,
    decided: BTreeMap<u64, u32>,
}

impl SinkState {
    pub fn new(cfg: SinkConfig) -> Self {
        let routes = match &cfg.matrix {
            Some(m) if cfg.scheme != Scheme::Tree => (1..=m.paths()).collect(),
            _ => vec![0],
        };
        Self {
            cfg,
            routes,
            groups: BTreeMap::new(),
            decided: BTreeMap::new(),
        }
    }

    pub fn pending_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn on_share(&mut self, msg: ShareMessage, now: u64) -> SinkStep {
        let mut step = SinkStep::default();
        let done = self.decided.get(&msg.sequence).copied().unwrap_or(0);
        if done > 0 && self.cfg.scheme == Scheme::Adma {
            step.rejected_replay = true;
            return step;
        }
        if !self.routes.contains(&msg.path) {
            step.anomaly = true;
            return step;
        }
        let key = (msg.sequence, done);
        let group = self.groups.entry(key).or_insert_with(|| {
            step.deadline = Some((now + self.cfg.horizon, msg.sequence, done));
            Group {
                per_path: BTreeMap::new(),
            }
        });
        match group.per_path.get_mut(&msg.path) {
            None => {
                group.per_path.insert(msg.path, (msg.payload, msg.contributors));
            }
            Some((sum, who)) if who.is_disjoint(&msg.contributors) && sum.field() == msg.payload.field() => {
                *sum += msg.payload;
                who.extend(msg.contributors);
            }
            Some(_) => step.anomaly = true,
        }
        let complete = self.routes.iter().all(|q| {
            group
                .per_path
                .get(q)
                .is_some_and(|(_, who)| who.len() == self.cfg.sources.len())
        });
        if complete {
            step.decided = self.decide(key, now);
        }
        step
    }

    pub fn on_deadline(&mut self, sequence: u64, generation: u32, now: u64) -> Option<Reconstruction> {
        self.decide((sequence, generation), now)
    }

    fn decide(&mut self, key: (u64, u32), now: u64) -> Option<Reconstruction> {
        let group = self.groups.remove(&key)?;
        *self.decided.entry(key.0).or_insert(0) += 1;

        let mut by_set: BTreeMap<Contributors, Vec<PathShare>> = BTreeMap::new();
        for (&q, (value, who)) in &group.per_path {
            by_set.entry(who.clone()).or_default().push(PathShare::new(q, *value));
        }
        // most shares wins, then more contributors, then the smaller set
        let (contributors, shares) = by_set
            .into_iter()
            .max_by(|(a, sa), (b, sb)| {
                sa.len()
                    .cmp(&sb.len())
                    .then(a.len().cmp(&b.len()))
                    .then(b.cmp(a))
            })
            .expect("a group always holds at least one share");

        let mut rec = Reconstruction {
            sequence: key.0,
            contributors,
            values: Vec::new(),
            verdict: SinkVerdict::Insufficient,
            paths: shares.iter().map(|s| s.path).collect(),
            tick: now,
            repeat: key.1 > 0,
        };
        match self.reconstruct(&shares, &rec.contributors, key.0) {
            Ok((values, verdict)) => {
                rec.values = values.iter().map(|v| v.value()).collect();
                rec.verdict = verdict;
            }
            Err(SchemeError::InsufficientShares { .. }) => {}
            Err(_) => rec.verdict = SinkVerdict::Unverifiable,
        }
        Some(rec)
    }

    fn reconstruct(
        &self,
        shares: &[PathShare],
        contributors: &Contributors,
        sequence: u64,
    ) -> Result<(Vec<FieldElement>, SinkVerdict), SchemeError> {
        let Some(matrix) = self.cfg.matrix.as_ref().filter(|_| self.cfg.scheme != Scheme::Tree) else {
            return Ok((vec![shares[0].value], SinkVerdict::Consistent));
        };
        let t = matrix.threshold();
        if shares.len() < t {
            return Err(SchemeError::InsufficientShares {
                needed: t,
                have: shares.len(),
            });
        }
        if self.cfg.scheme == Scheme::Adma {
            let contributed: Vec<ContributedShare> = shares
                .iter()
                .map(|&share| ContributedShare {
                    share,
                    contributors: contributors.clone(),
                })
                .collect();
            let v = verify_reconstruct(&contributed, &self.cfg.keys, sequence, matrix, self.cfg.budget)?;
            let verdict = match v.verdict {
                Verdict::Authentic => SinkVerdict::Authentic,
                Verdict::Unverifiable => SinkVerdict::Unverifiable,
            };
            return Ok((v.sums, verdict));
        }

        // SMA shares are evaluations of the same Vandermonde system, so one
        // solve covers both schemes and re-dispersing cross-checks the rest.
        let block = reconstruct_subset(&shares[..t], matrix)?;
        let verdict = if shares.len() == t {
            SinkVerdict::Unchecked
        } else {
            let all = disperse(&block, matrix)?;
            if shares.iter().all(|s| all.get(s.path) == Some(s.value)) {
                SinkVerdict::Consistent
            } else {
                SinkVerdict::Ambiguous
            }
        };
        let values = match self.cfg.scheme {
            Scheme::Sma => vec![block.values()[0]],
            _ => block.into_values(),
        };
        Ok((values, verdict))
    }
}
