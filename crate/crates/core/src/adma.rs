//! Authenticated dispersed multipath aggregation.
//!
//! The last slot of each block carries `h(k_i, s)` instead of a reading,
//! where `k_i` is a key shared between source `i` and the sink and `s` is
//! the block's sequence number. After reconstructing an aggregated block
//! the sink compares its last slot with the sum of the expected tags of
//! the contributing sources; on mismatch it retries with another subset
//! of `t` shares.
//!
//! The tag does not depend on the readings. An adversary who can rebuild a
//! whole block can shift reading slots and leave the tag slot untouched,
//! so this is a filter against garbage and replays, not an integrity MAC.
//! The keyed hash here is a 64-bit mixing function chosen for speed and
//! reproducibility; a deployment would substitute a real MAC.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dma::{disperse, reconstruct_subset, DispersalMatrix, DmaShareSet, ReadingBlock};
use crate::gfp::{FieldElement, PrimeField};
use crate::share::{distinct_by_path, Combinations, Contributors, NodeId, PathShare, SchemeError};

pub const DEFAULT_SUBSET_BUDGET: usize = 200;

/// 64-bit avalanche finalizer (the SplitMix64 output function).
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthKey {
    pub node: NodeId,
    pub key: u64,
}

/// The sink's copy of every source key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyTable(BTreeMap<NodeId, u64>);

impl KeyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: AuthKey) {
        self.0.insert(key.node, key.key);
    }

    pub fn get(&self, node: NodeId) -> Option<AuthKey> {
        self.0.get(&node).map(|&key| AuthKey { node, key })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `sum h(k_i, s)` over the contributors.
    pub fn expected_tag_sum(
        &self,
        contributors: &Contributors,
        sequence: u64,
        field: PrimeField,
    ) -> Result<FieldElement, SchemeError> {
        let mut acc = field.zero();
        for &node in contributors {
            let key = self.get(node).ok_or(SchemeError::UnknownNode(node))?;
            acc += auth_tag(&key, sequence, field);
        }
        Ok(acc)
    }
}

impl FromIterator<AuthKey> for KeyTable {
    fn from_iter<I: IntoIterator<Item = AuthKey>>(iter: I) -> Self {
        let mut table = KeyTable::new();
        for k in iter {
            table.insert(k);
        }
        table
    }
}

/// `h(k_i, s) = mix64(mix64(k_i) ^ s) mod p_f`.
pub fn auth_tag(key: &AuthKey, sequence: u64, field: PrimeField) -> FieldElement {
    field.element(mix64(mix64(key.key) ^ sequence))
}

/// `t - 1` readings followed by the authentication tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthBlock {
    pub readings: Vec<FieldElement>,
    pub tag: FieldElement,
    pub sequence: u64,
}

impl AuthBlock {
    pub fn new(readings: Vec<FieldElement>, key: &AuthKey, sequence: u64, field: PrimeField) -> Self {
        Self {
            readings,
            tag: auth_tag(key, sequence, field),
            sequence,
        }
    }

    pub fn to_block(&self) -> ReadingBlock {
        let mut v = self.readings.clone();
        v.push(self.tag);
        ReadingBlock::new(v)
    }
}

/// Disperses `[r_1 .. r_{t-1}, h(k_i, s)]`.
pub fn encode(
    readings: &[FieldElement],
    key: &AuthKey,
    sequence: u64,
    matrix: &DispersalMatrix,
) -> Result<DmaShareSet, SchemeError> {
    let t = matrix.threshold();
    if t < 2 {
        return Err(SchemeError::InvalidParams("authenticated dispersal needs t >= 2".into()));
    }
    if readings.len() != t - 1 {
        return Err(SchemeError::WrongLength {
            expected: t - 1,
            actual: readings.len(),
        });
    }
    let block = AuthBlock::new(readings.to_vec(), key, sequence, matrix.field());
    disperse(&block.to_block(), matrix)
}

/// A share as seen by the sink: value plus the sources folded into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContributedShare {
    pub share: PathShare,
    pub contributors: Contributors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Authentic,
    Unverifiable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verification {
    pub verdict: Verdict,
    /// Aggregated reading slots; empty unless authentic.
    pub sums: Vec<FieldElement>,
    /// Share indices of the subset that verified.
    pub subset: Option<Vec<usize>>,
    pub subsets_tried: usize,
}

/// Tries `t`-subsets of the shares in lexicographic order of share index
/// until one reconstructs to a block whose tag slot matches the expected
/// tag sum, giving up after `budget` subsets.
pub fn verify_reconstruct(
    shares: &[ContributedShare],
    keys: &KeyTable,
    sequence: u64,
    matrix: &DispersalMatrix,
    budget: usize,
) -> Result<Verification, SchemeError> {
    let t = matrix.threshold();
    let Some(first) = shares.first() else {
        return Err(SchemeError::InsufficientShares { needed: t, have: 0 });
    };
    if shares.iter().any(|s| s.contributors != first.contributors) {
        return Err(SchemeError::MixedContributors);
    }
    let plain: Vec<PathShare> = shares.iter().map(|s| s.share).collect();
    let distinct = distinct_by_path(&plain, matrix.paths())?;
    if distinct.len() < t {
        return Err(SchemeError::InsufficientShares {
            needed: t,
            have: distinct.len(),
        });
    }
    let expected = keys.expected_tag_sum(&first.contributors, sequence, matrix.field())?;

    let mut tried = 0;
    for idx in Combinations::new(distinct.len(), t).take(budget) {
        tried += 1;
        let subset: Vec<PathShare> = idx.iter().map(|&i| distinct[i]).collect();
        let block = reconstruct_subset(&subset, matrix)?.into_values();
        if block[t - 1] == expected {
            return Ok(Verification {
                verdict: Verdict::Authentic,
                sums: block[..t - 1].to_vec(),
                subset: Some(subset.iter().map(|s| s.path).collect()),
                subsets_tried: tried,
            });
        }
    }
    Ok(Verification {
        verdict: Verdict::Unverifiable,
        sums: Vec::new(),
        subset: None,
        subsets_tried: tried,
    })
}
