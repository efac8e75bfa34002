//! Name server and adaptive address books.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::{token_set, Address, IntroductionEnvelope, Segment};

/// Trust given to peers the first time they are introduced.
pub const INITIAL_TRUST: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AddressError {
    #[error("address {0} is not in the address book")]
    UnknownAddress(Address),
}

/// Issues unique agent addresses of the form `<label>#<n>`.
#[derive(Debug, Clone)]
pub struct NameServer {
    next_id: u64,
    registry: Vec<(String, Address)>,
}

impl Default for NameServer {
    fn default() -> Self {
        NameServer { next_id: 1, registry: Vec::new() }
    }
}

impl NameServer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every call registers a new agent, even for a repeated label.
    pub fn allocate_address(&mut self, name: &str) -> Address {
        let address = Address::new(format!("{name}#{}", self.next_id));
        self.next_id += 1;
        self.registry.push((name.to_string(), address.clone()));
        address
    }

    /// Most recently allocated address for `name`.
    pub fn lookup(&self, name: &str) -> Option<&Address> {
        self.registry.iter().rev().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn len(&self) -> usize {
        self.registry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registry.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AddressBookEntry {
    pub address: Address,
    pub capability_tokens: BTreeSet<String>,
    pub trust: f64,
}

impl AddressBookEntry {
    fn score(&self, tokens: &BTreeSet<String>) -> f64 {
        if self.capability_tokens.is_empty() {
            return 0.0;
        }
        let overlap = self.capability_tokens.intersection(tokens).count();
        self.trust * overlap as f64 / self.capability_tokens.len() as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AddressBook {
    entries: Vec<AddressBookEntry>,
    fallbacks: Vec<Address>,
}

impl AddressBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[AddressBookEntry] {
        &self.entries
    }

    pub fn fallbacks(&self) -> &[Address] {
        &self.fallbacks
    }

    pub fn entry(&self, address: &Address) -> Option<&AddressBookEntry> {
        self.entries.iter().find(|e| &e.address == address)
    }

    pub fn trust(&self, address: &Address) -> Option<f64> {
        self.entry(address).map(|e| e.trust)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn add_fallback(&mut self, address: Address) {
        if !self.fallbacks.contains(&address) {
            self.fallbacks.push(address);
        }
    }

    /// Inserts a new peer or merges capability tokens into a known one.
    /// Trust of an existing entry is left unchanged.
    pub fn apply_introduction(&mut self, intro: &IntroductionEnvelope) {
        match self.entries.iter_mut().find(|e| e.address == intro.address) {
            Some(entry) => entry.capability_tokens.extend(intro.capability_tokens.iter().cloned()),
            None => self.entries.push(AddressBookEntry {
                address: intro.address.clone(),
                capability_tokens: intro.capability_tokens.clone(),
                trust: INITIAL_TRUST,
            }),
        }
    }

    /// Peers ranked by `trust × overlap / |capabilities|`, best first, ties in
    /// insertion order. When nobody scores above zero the fallbacks are
    /// returned with score zero.
    pub fn candidates_for(&self, segments: &[Segment]) -> Vec<(Address, f64)> {
        let tokens = token_set(segments);
        let mut ranked: Vec<(Address, f64)> =
            self.entries.iter().map(|e| (e.address.clone(), e.score(&tokens))).filter(|(_, s)| *s > 0.0).collect();
        // stable sort keeps insertion order among equal scores
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        if ranked.is_empty() {
            ranked = self.fallbacks.iter().map(|a| (a.clone(), 0.0)).collect();
        }
        ranked
    }

    /// `trust ← clamp(trust + rate × delta, 0, 1)`; returns the new trust.
    pub fn reinforce(&mut self, address: &Address, delta: f64, rate: f64) -> Result<f64, AddressError> {
        let entry = self
            .entries
            .iter_mut()
            .find(|e| &e.address == address)
            .ok_or_else(|| AddressError::UnknownAddress(address.clone()))?;
        entry.trust = (entry.trust + rate * delta).clamp(0.0, 1.0);
        Ok(entry.trust)
    }

    /// Overwrites a known peer's trust (used when restoring snapshots).
    pub fn set_trust(&mut self, address: &Address, trust: f64) -> Result<(), AddressError> {
        let entry = self
            .entries
            .iter_mut()
            .find(|e| &e.address == address)
            .ok_or_else(|| AddressError::UnknownAddress(address.clone()))?;
        entry.trust = trust.clamp(0.0, 1.0);
        Ok(())
    }

    /// Keeps only the peers for which `keep` holds.
    pub fn retain(&mut self, mut keep: impl FnMut(&AddressBookEntry) -> bool) {
        self.entries.retain(|e| keep(e));
    }
}
