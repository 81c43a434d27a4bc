//! Commit-adopt and the resolver agreement protocol (RAP), as coroutines over
//! the scheduler's snapshot objects.
//!
//! Commit-adopt runs two phases, each a write to the proposer's own cell
//! followed by a snapshot of the phase object:
//!
//! 1. write the proposal; it becomes a *candidate* if every proposal visible
//!    in the snapshot equals it;
//! 2. write `(candidate, value)`; commit if every visible entry is a
//!    candidate, else adopt the value of any visible candidate, else keep
//!    the own value.
//!
//! Phase-1 snapshots are ⊆-ordered, so all candidates carry the same value,
//! which gives agreement on commit.
//!
//! RAP wraps one commit-adopt instance. The resolver publishes its outcome in
//! a resolution register and never returns ⊥; any other proposer that merely
//! adopts returns whatever the resolution register holds, possibly ⊥.

use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProcessId;
use crate::sched::Shm;

/// The three snapshot objects of one agreement instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgreementObject<I> {
    Proposals(I),
    Graded(I),
    Resolution(I),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgreementCell {
    Proposal(bool),
    Graded { candidate: bool, value: bool },
    Resolution(bool),
}

/// Register values able to carry agreement cells.
pub trait AgreementValue: Clone {
    fn wrap(cell: AgreementCell) -> Self;
    fn agreement(&self) -> Option<AgreementCell>;
}

impl AgreementValue for AgreementCell {
    fn wrap(cell: AgreementCell) -> Self {
        cell
    }

    fn agreement(&self) -> Option<AgreementCell> {
        Some(*self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grade {
    Commit,
    Adopt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CaOutcome {
    pub grade: Grade,
    pub value: bool,
}

/// A RAP instance: an id plus its designated resolver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RapInstance<I> {
    pub id: I,
    pub resolver: ProcessId,
}

/// Per-process bookkeeping of which instances it has proposed to, and what
/// each returned. Enforces one proposal per instance.
#[derive(Clone, Debug, Default)]
pub struct Proposer<I: Ord> {
    ca: BTreeMap<I, CaOutcome>,
    rap: BTreeMap<I, (CaOutcome, Option<bool>)>,
}

impl<I: Ord + Clone + Debug> Proposer<I> {
    pub fn new() -> Self {
        Proposer { ca: BTreeMap::new(), rap: BTreeMap::new() }
    }

    pub fn has_proposed(&self, id: &I) -> bool {
        self.rap.contains_key(id) || self.ca.contains_key(id)
    }

    /// What this process's earlier proposal to `id` returned.
    pub fn rap_result(&self, id: &I) -> Option<Option<bool>> {
        self.rap.get(id).map(|(_, r)| *r)
    }

    /// The commit-adopt outcome underneath an earlier RAP proposal.
    pub fn rap_grade(&self, id: &I) -> Option<CaOutcome> {
        self.rap.get(id).map(|(ca, _)| *ca)
    }

    /// Commit-adopt on instance `id`.
    pub async fn ca_propose<K, V>(&mut self, shm: &Shm<K, V>, id: I, v: bool) -> Result<CaOutcome>
    where
        K: From<AgreementObject<I>>,
        V: AgreementValue,
    {
        if self.has_proposed(&id) {
            return Err(Error::ContractViolation(format!("{} proposed twice to {id:?}", shm.me())));
        }
        let out = commit_adopt(shm, id.clone(), v).await;
        self.ca.insert(id, out);
        Ok(out)
    }

    /// RAP on `instance`; `None` is ⊥.
    pub async fn rap_propose<K, V>(&mut self, shm: &Shm<K, V>, instance: RapInstance<I>, v: bool) -> Result<Option<bool>>
    where
        K: From<AgreementObject<I>>,
        V: AgreementValue,
    {
        if self.has_proposed(&instance.id) {
            return Err(Error::ContractViolation(format!("{} proposed twice to {:?}", shm.me(), instance.id)));
        }
        let out = commit_adopt(shm, instance.id.clone(), v).await;
        let result = if shm.me() == instance.resolver {
            shm.write(AgreementObject::Resolution(instance.id.clone()).into(), V::wrap(AgreementCell::Resolution(out.value)))
                .await;
            Some(out.value)
        } else {
            match out.grade {
                Grade::Commit => Some(out.value),
                Grade::Adopt => rap_read_resolution(shm, &instance).await,
            }
        };
        self.rap.insert(instance.id, (out, result));
        Ok(result)
    }
}

async fn commit_adopt<I, K, V>(shm: &Shm<K, V>, id: I, v: bool) -> CaOutcome
where
    I: Clone,
    K: From<AgreementObject<I>>,
    V: AgreementValue,
{
    shm.write(AgreementObject::Proposals(id.clone()).into(), V::wrap(AgreementCell::Proposal(v))).await;
    let proposals = shm.snapshot(AgreementObject::Proposals(id.clone()).into()).await;
    let candidate = proposals
        .iter()
        .flatten()
        .filter_map(|c| match c.agreement() {
            Some(AgreementCell::Proposal(w)) => Some(w),
            _ => None,
        })
        .all(|w| w == v);

    shm.write(AgreementObject::Graded(id.clone()).into(), V::wrap(AgreementCell::Graded { candidate, value: v })).await;
    let graded: Vec<(bool, bool)> = shm
        .snapshot(AgreementObject::Graded(id).into())
        .await
        .iter()
        .flatten()
        .filter_map(|c| match c.agreement() {
            Some(AgreementCell::Graded { candidate, value }) => Some((candidate, value)),
            _ => None,
        })
        .collect();
    if graded.iter().all(|(c, _)| *c) {
        CaOutcome { grade: Grade::Commit, value: v }
    } else if let Some((_, w)) = graded.iter().find(|(c, _)| *c) {
        CaOutcome { grade: Grade::Adopt, value: *w }
    } else {
        CaOutcome { grade: Grade::Adopt, value: v }
    }
}

/// Current content of the resolver's resolution register (one snapshot).
pub async fn rap_read_resolution<I, K, V>(shm: &Shm<K, V>, instance: &RapInstance<I>) -> Option<bool>
where
    I: Clone,
    K: From<AgreementObject<I>>,
    V: AgreementValue,
{
    let cells = shm.snapshot(AgreementObject::Resolution(instance.id.clone()).into()).await;
    cells[instance.resolver.index()].as_ref().and_then(|c| match c.agreement() {
        Some(AgreementCell::Resolution(w)) => Some(w),
        _ => None,
    })
}
