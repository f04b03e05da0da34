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

//! Per-round audit record and its offline verifier.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::pk_fingerprint;
use super::wire::{encode_frame, ClientId, Message, Upload};
use crate::crypto::{agg_pubkey, aggregate, decrypt, gen_challenge, AggregateBundle, Ciphertext};
use crate::error::{AbortReason, Error, Result};
use crate::group::{from_hex, to_hex, ServerSecret, SysParams};
use crate::packing::recover;

/// Big integer serialized as a lowercase hex string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HexInt(pub BigUint);

impl Serialize for HexInt {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&to_hex(&self.0))
    }
}

impl<'de> Deserialize<'de> for HexInt {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        from_hex(&s).map(HexInt).map_err(serde::de::Error::custom)
    }
}

fn hexes(v: &[BigUint]) -> Vec<HexInt> {
    v.iter().cloned().map(HexInt).collect()
}

fn ints(v: &[HexInt]) -> Vec<BigUint> {
    v.iter().map(|h| h.0.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundStatus {
    Completed,
    Aborted(AbortReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CiphertextRecord {
    pub client: ClientId,
    /// SHA-256 of the exact upload frame.
    pub digest: String,
    pub e1: Vec<HexInt>,
    pub e2_first: HexInt,
    pub e2_second: HexInt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub client: ClientId,
    pub t: HexInt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleRecord {
    pub e_agg: Vec<HexInt>,
    pub d: HexInt,
    pub t: HexInt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTranscript {
    pub round_id: u64,
    pub status: RoundStatus,
    pub online_set: Vec<ClientId>,
    /// Public keys of `online_set`, in the same order.
    pub public_keys: Vec<HexInt>,
    pub pk_s: Option<HexInt>,
    pub challenge: Option<HexInt>,
    pub ciphertexts: Vec<CiphertextRecord>,
    pub responses: Vec<ResponseRecord>,
    pub bundle: Option<BundleRecord>,
    pub decrypted_segments: Vec<HexInt>,
    pub recovered_sums: Vec<u64>,
    /// Bytes seen by the server per message type, both directions.
    pub bytes_by_type: BTreeMap<String, u64>,
    /// SHA-256 over the record with this field empty.
    pub digest: String,
}

impl RoundTranscript {
    pub fn empty(round_id: u64) -> Self {
        RoundTranscript {
            round_id,
            status: RoundStatus::Aborted(AbortReason::DropoutBelowThreshold),
            online_set: Vec::new(),
            public_keys: Vec::new(),
            pk_s: None,
            challenge: None,
            ciphertexts: Vec::new(),
            responses: Vec::new(),
            bundle: None,
            decrypted_segments: Vec::new(),
            recovered_sums: Vec::new(),
            bytes_by_type: BTreeMap::new(),
            digest: String::new(),
        }
    }

    pub fn is_completed(&self) -> bool {
        self.status == RoundStatus::Completed
    }

    pub fn compute_digest(&self) -> String {
        let mut unsealed = self.clone();
        unsealed.digest.clear();
        hex::encode(Sha256::digest(
            serde_json::to_vec(&unsealed).expect("transcript serialize"),
        ))
    }

    pub fn seal(&mut self) {
        self.digest = self.compute_digest();
    }

    pub(crate) fn record_ciphertext(
        &mut self,
        client: ClientId,
        digest: [u8; 32],
        ct: &Ciphertext,
    ) {
        self.ciphertexts.push(CiphertextRecord {
            client,
            digest: hex::encode(digest),
            e1: hexes(&ct.e1),
            e2_first: HexInt(ct.e2_first.clone()),
            e2_second: HexInt(ct.e2_second.clone()),
        });
    }

    pub(crate) fn record_bundle(&mut self, bundle: &AggregateBundle) {
        self.bundle = Some(BundleRecord {
            e_agg: hexes(&bundle.e_agg),
            d: HexInt(bundle.d.clone()),
            t: HexInt(bundle.t.clone()),
        });
    }

    pub(crate) fn record_decrypted(&mut self, segments: &[BigUint]) {
        self.decrypted_segments = hexes(segments);
    }

    /// Total message bytes counted in this round.
    pub fn total_bytes(&self) -> u64 {
        self.bytes_by_type.values().sum()
    }
}

impl CiphertextRecord {
    pub fn ciphertext(&self) -> Ciphertext {
        Ciphertext {
            e1: ints(&self.e1),
            e2_first: self.e2_first.0.clone(),
            e2_second: self.e2_second.0.clone(),
        }
    }
}

fn fail(msg: impl Into<String>) -> Error {
    Error::Integrity(msg.into())
}

/// Recompute everything a transcript claims.
///
/// Without the server secret this checks the digests, the aggregated key,
/// the challenge, the bundle products and the recovery of per-dimension sums
/// from the decrypted segments. With the secret it also re-decrypts.
pub fn verify_transcript(
    t: &RoundTranscript,
    params: &SysParams,
    secret: Option<&ServerSecret>,
) -> Result<()> {
    if t.digest != t.compute_digest() {
        return Err(fail("transcript digest mismatch"));
    }
    if !t.is_completed() {
        if !t.ciphertexts.is_empty() || t.bundle.is_some() || !t.decrypted_segments.is_empty() {
            return Err(fail("aborted round retains ciphertext material"));
        }
        return Ok(());
    }
    let n = t.online_set.len();
    if n < super::MIN_ONLINE {
        return Err(fail(format!("completed round with |S| = {n}")));
    }
    if t.public_keys.len() != n || t.ciphertexts.len() != n || t.responses.len() != n {
        return Err(fail("record counts do not match the online set"));
    }
    for (i, client) in t.online_set.iter().enumerate() {
        if t.ciphertexts[i].client != *client || t.responses[i].client != *client {
            return Err(fail(format!("record order differs at client {client}")));
        }
    }
    let pk_s = agg_pubkey(t.public_keys.iter().map(|h| &h.0), params)?;
    if t.pk_s.as_ref().map(|h| &h.0) != Some(&pk_s) {
        return Err(fail("pk_S is not the product of the online keys"));
    }
    let fp = pk_fingerprint(&pk_s, params);
    let width = params.element_len();
    let cts: Vec<Ciphertext> = t
        .ciphertexts
        .iter()
        .map(CiphertextRecord::ciphertext)
        .collect();
    for (rec, ct) in t.ciphertexts.iter().zip(&cts) {
        let frame = encode_frame(
            t.round_id,
            &Message::GradientCiphertext {
                client: rec.client,
                pk_s_fingerprint: fp,
                upload: Upload::Packed(ct.clone()),
            },
            width,
        );
        if hex::encode(Sha256::digest(&frame)) != rec.digest {
            return Err(fail(format!(
                "ciphertext digest mismatch for client {}",
                rec.client
            )));
        }
    }
    let challenge = gen_challenge(cts.iter().map(|c| &c.e2_first), params)?;
    if t.challenge.as_ref().map(|h| &h.0) != Some(&challenge) {
        return Err(fail(
            "challenge is not the product of the e2 first components",
        ));
    }
    let responses: Vec<BigUint> = t.responses.iter().map(|r| r.t.0.clone()).collect();
    let bundle = aggregate(&cts, &responses, params)?;
    let recorded = t
        .bundle
        .as_ref()
        .ok_or_else(|| fail("completed round without bundle"))?;
    if ints(&recorded.e_agg) != bundle.e_agg || recorded.d.0 != bundle.d || recorded.t.0 != bundle.t
    {
        return Err(fail(
            "aggregate bundle does not match the recorded ciphertexts",
        ));
    }
    let decrypted = ints(&t.decrypted_segments);
    if recover(&decrypted, &params.packing)? != t.recovered_sums {
        return Err(fail("recovered sums do not match the decrypted segments"));
    }
    if let Some(secret) = secret {
        if decrypt(&bundle, secret, params)? != decrypted {
            return Err(fail("decryption does not reproduce the recorded segments"));
        }
    }
    Ok(())
}

pub fn transcripts_to_json(ts: &[RoundTranscript]) -> String {
    serde_json::to_string_pretty(ts).expect("transcript serialize")
}

pub fn transcripts_from_json(s: &str) -> Result<Vec<RoundTranscript>> {
    serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))
}
