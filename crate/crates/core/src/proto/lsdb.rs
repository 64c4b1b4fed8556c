use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::message::{Lsa, RouterId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstallOutcome {
    Installed,
    Duplicate,
    StaleIgnored,
}

/// Link-state database: the newest LSA per origin.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lsdb {
    lsas: BTreeMap<RouterId, Lsa>,
}

impl Lsdb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, origin: RouterId) -> Option<&Lsa> {
        self.lsas.get(&origin)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Lsa> {
        self.lsas.values()
    }

    pub fn len(&self) -> usize {
        self.lsas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lsas.is_empty()
    }

    /// Installs `lsa` only if it is newer than the stored copy.
    pub fn install(&mut self, lsa: Lsa) -> InstallOutcome {
        match self.lsas.get(&lsa.origin) {
            Some(cur) if lsa.seq == cur.seq => InstallOutcome::Duplicate,
            Some(cur) if lsa.seq < cur.seq => InstallOutcome::StaleIgnored,
            _ => {
                self.lsas.insert(lsa.origin, lsa);
                InstallOutcome::Installed
            }
        }
    }

    /// Both endpoints list each other.
    pub fn is_bidirectional(&self, a: RouterId, b: RouterId) -> bool {
        match (self.get(a), self.get(b)) {
            (Some(la), Some(lb)) => la.lists_neighbor(b) && lb.lists_neighbor(a),
            _ => false,
        }
    }
}
