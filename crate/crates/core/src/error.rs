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

use thiserror::Error;

/// Errors raised anywhere in the aggregation stack.
///
/// Variants are grouped by cause so callers (the CLI in particular) can map
/// them to distinct exit codes.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("parameter error: {0}")]
    Params(String),

    #[error("arithmetic error: {0}")]
    Arithmetic(String),

    #[error("decryption failed: {0}")]
    Decryption(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("authentication failed: sealed model rejected")]
    Authentication,

    #[error("key derivation failed: {0}")]
    KeyDerivation(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("privacy guard: {0}")]
    PrivacyGuard(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("round aborted: {0}")]
    Aborted(AbortReason),

    #[error("baseline out of scope: {0}")]
    BaselineScope(String),

    #[error("wire format error: {0}")]
    Wire(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

/// Why a round was abandoned. The numeric code travels in `Abort` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum AbortReason {
    /// Fewer than two clients were online when the online set closed.
    DropoutBelowThreshold,
    /// A member of the online set went silent after the set was fixed.
    MidRoundDropout,
    /// Decryption or recovery produced an inconsistent aggregate.
    IntegrityFailure,
    /// A client could not open the sealed model it was sent.
    CorruptServerMessage,
    /// The aggregated key equalled the client's own key.
    SoloClient,
}

impl AbortReason {
    pub fn code(self) -> u8 {
        match self {
            AbortReason::DropoutBelowThreshold => 1,
            AbortReason::MidRoundDropout => 2,
            AbortReason::IntegrityFailure => 3,
            AbortReason::CorruptServerMessage => 4,
            AbortReason::SoloClient => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => AbortReason::DropoutBelowThreshold,
            2 => AbortReason::MidRoundDropout,
            3 => AbortReason::IntegrityFailure,
            4 => AbortReason::CorruptServerMessage,
            5 => AbortReason::SoloClient,
            _ => return None,
        })
    }
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AbortReason::DropoutBelowThreshold => "DropoutBelowThreshold",
            AbortReason::MidRoundDropout => "MidRoundDropout",
            AbortReason::IntegrityFailure => "IntegrityFailure",
            AbortReason::CorruptServerMessage => "CorruptServerMessage",
            AbortReason::SoloClient => "SoloClient",
        };
        f.write_str(s)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
