// Copyright 2026 The secagg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::ClientId;

/// Which clients are missing in which round.
///
/// `absent` clients never announce themselves; `mid_round` clients announce
/// and upload, then vanish before answering the challenge. A round with fewer
/// than two online clients is a legal schedule that is expected to abort.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropoutSchedule {
    #[serde(default)]
    pub absent: BTreeMap<u64, BTreeSet<ClientId>>,
    #[serde(default)]
    pub mid_round: BTreeMap<u64, BTreeSet<ClientId>>,
}

impl DropoutSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_absent(mut self, round: u64, clients: impl IntoIterator<Item = ClientId>) -> Self {
        self.absent.entry(round).or_default().extend(clients);
        self
    }

    pub fn with_mid_round(
        mut self,
        round: u64,
        clients: impl IntoIterator<Item = ClientId>,
    ) -> Self {
        self.mid_round.entry(round).or_default().extend(clients);
        self
    }

    pub fn absent_in(&self, round: u64) -> BTreeSet<ClientId> {
        self.absent.get(&round).cloned().unwrap_or_default()
    }

    pub fn mid_round_in(&self, round: u64) -> BTreeSet<ClientId> {
        self.mid_round.get(&round).cloned().unwrap_or_default()
    }

    /// Online set for `round` out of `n_clients` registered clients.
    pub fn online_in(&self, round: u64, n_clients: usize) -> BTreeSet<ClientId> {
        let absent = self.absent_in(round);
        (0..n_clients as ClientId)
            .filter(|c| !absent.contains(c))
            .collect()
    }

    /// Accepts either `{"absent": {...}, "mid_round": {...}}` or a bare
    /// `{round: [client ids]}` map of absentees.
    pub fn from_json(s: &str) -> Result<Self> {
        let err = |e: serde_json::Error| Error::Serialization(e.to_string());
        let value: serde_json::Value = serde_json::from_str(s).map_err(err)?;
        let full = value
            .as_object()
            .is_some_and(|m| m.keys().all(|k| k == "absent" || k == "mid_round"));
        if full {
            serde_json::from_value(value).map_err(err)
        } else {
            let absent = serde_json::from_value(value).map_err(err)?;
            Ok(DropoutSchedule {
                absent,
                mid_round: BTreeMap::new(),
            })
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_layouts() {
        let plain = DropoutSchedule::from_json(r#"{"2": [0, 3], "5": [1]}"#).unwrap();
        assert_eq!(plain.absent_in(2), BTreeSet::from([0, 3]));
        assert!(plain.mid_round_in(2).is_empty());
        let full = DropoutSchedule::from_json(r#"{"absent": {"1": [4]}, "mid_round": {"3": [2]}}"#)
            .unwrap();
        assert_eq!(full.absent_in(1), BTreeSet::from([4]));
        assert_eq!(full.mid_round_in(3), BTreeSet::from([2]));
        assert_eq!(DropoutSchedule::from_json(&full.to_json()).unwrap(), full);
        assert_eq!(full.online_in(1, 5), BTreeSet::from([0, 1, 2, 3]));
    }
}
