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

//! Length-prefixed binary frames.
//!
//! ```text
//! frame   := len:u32be  version:u8  msg_type:u8  round_id:u64be  body
//! integer := len:u32be  big-endian bytes
//! ```
//!
//! `len` counts every byte after itself. Group elements are always written
//! at the fixed width of `p²`, so an encoding is canonical and a digest of
//! the frame identifies the message exactly.

use std::io::{Read, Write};

use num_bigint::BigUint;

use crate::crypto::{Ciphertext, SealedModel, NONCE_LEN};
use crate::error::{AbortReason, Error, Result};
use crate::group::to_fixed_bytes;

pub const WIRE_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 1 + 8;
/// Frames above this size are refused before allocation.
pub const MAX_FRAME_LEN: usize = 1 << 30;

pub type ClientId = u32;
/// First 128 bits of SHA-256 over the fixed-width encoding of `pk_S`.
pub const FINGERPRINT_LEN: usize = 16;
pub type Fingerprint = [u8; FINGERPRINT_LEN];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgType {
    RegisterPk = 1,
    OnlineAnnounce = 2,
    ModelAndKey = 3,
    GradientCiphertext = 4,
    Challenge = 5,
    Response = 6,
    RoundResult = 7,
    Abort = 8,
}

impl MsgType {
    pub const ALL: [MsgType; 8] = [
        MsgType::RegisterPk,
        MsgType::OnlineAnnounce,
        MsgType::ModelAndKey,
        MsgType::GradientCiphertext,
        MsgType::Challenge,
        MsgType::Response,
        MsgType::RoundResult,
        MsgType::Abort,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        MsgType::ALL.get(v.checked_sub(1)? as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::RegisterPk => "RegisterPk",
            MsgType::OnlineAnnounce => "OnlineAnnounce",
            MsgType::ModelAndKey => "ModelAndKey",
            MsgType::GradientCiphertext => "GradientCiphertext",
            MsgType::Challenge => "Challenge",
            MsgType::Response => "Response",
            MsgType::RoundResult => "RoundResult",
            MsgType::Abort => "Abort",
        }
    }
}

/// A client's encrypted gradient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Upload {
    /// `u + 2` elements: the masked segments, then `g^{r2}` and `g^{r1}·pk_S^{r2}`.
    Packed(Ciphertext),
    /// `2u` elements: one ElGamal pair `(g^{r_j}, g^{m_j}·pk_S^{r_j})` per segment.
    PerSegment(Vec<(BigUint, BigUint)>),
}

impl Upload {
    pub fn element_count(&self) -> usize {
        match self {
            Upload::Packed(ct) => ct.e1.len() + 2,
            Upload::PerSegment(pairs) => 2 * pairs.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    RegisterPk {
        client: ClientId,
        pk: BigUint,
    },
    OnlineAnnounce {
        client: ClientId,
    },
    ModelAndKey {
        client: ClientId,
        pk_s: BigUint,
        pk_s_fingerprint: Fingerprint,
        sealed: SealedModel,
    },
    GradientCiphertext {
        client: ClientId,
        pk_s_fingerprint: Fingerprint,
        upload: Upload,
    },
    Challenge {
        pk_s_fingerprint: Fingerprint,
        challenge: BigUint,
    },
    Response {
        client: ClientId,
        pk_s_fingerprint: Fingerprint,
        response: BigUint,
    },
    RoundResult {
        participants: u32,
    },
    Abort {
        reason: AbortReason,
    },
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::RegisterPk { .. } => MsgType::RegisterPk,
            Message::OnlineAnnounce { .. } => MsgType::OnlineAnnounce,
            Message::ModelAndKey { .. } => MsgType::ModelAndKey,
            Message::GradientCiphertext { .. } => MsgType::GradientCiphertext,
            Message::Challenge { .. } => MsgType::Challenge,
            Message::Response { .. } => MsgType::Response,
            Message::RoundResult { .. } => MsgType::RoundResult,
            Message::Abort { .. } => MsgType::Abort,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub round_id: u64,
    pub message: Message,
}

const SCHEME_PACKED: u8 = 0;
const SCHEME_PER_SEGMENT: u8 = 1;

struct Writer {
    buf: Vec<u8>,
    width: usize,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.buf.extend_from_slice(b);
    }
    fn raw(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn element(&mut self, x: &BigUint) {
        let encoded = to_fixed_bytes(x, self.width);
        self.bytes(&encoded);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    width: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Wire(format!(
                "truncated: need {n}, have {}",
                self.buf.len()
            )));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("N bytes"))
    }
    fn element(&mut self) -> Result<BigUint> {
        let b = self.bytes()?;
        if b.len() != self.width {
            return Err(Error::Wire(format!(
                "group element is {} bytes, expected {}",
                b.len(),
                self.width
            )));
        }
        Ok(BigUint::from_bytes_be(b))
    }
    fn count(&mut self) -> Result<usize> {
        let n = self.u32()? as usize;
        // every element needs at least its 4-byte prefix
        if n > self.buf.len() / 4 {
            return Err(Error::Wire(format!("element count {n} exceeds frame")));
        }
        Ok(n)
    }
    fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::Wire(format!("{} trailing bytes", self.buf.len())))
        }
    }
}

/// Serialize a frame. `element_width` is the byte width of `p²`.
pub fn encode_frame(round_id: u64, message: &Message, element_width: usize) -> Vec<u8> {
    let mut w = Writer {
        buf: vec![0; 4],
        width: element_width,
    };
    w.u8(WIRE_VERSION);
    w.u8(message.msg_type() as u8);
    w.raw(&round_id.to_be_bytes());
    match message {
        Message::RegisterPk { client, pk } => {
            w.u32(*client);
            w.element(pk);
        }
        Message::OnlineAnnounce { client } => w.u32(*client),
        Message::ModelAndKey {
            client,
            pk_s,
            pk_s_fingerprint,
            sealed,
        } => {
            w.u32(*client);
            w.element(pk_s);
            w.raw(pk_s_fingerprint);
            w.raw(&sealed.nonce);
            w.bytes(&sealed.body);
        }
        Message::GradientCiphertext {
            client,
            pk_s_fingerprint,
            upload,
        } => {
            w.u32(*client);
            w.raw(pk_s_fingerprint);
            match upload {
                Upload::Packed(ct) => {
                    w.u8(SCHEME_PACKED);
                    w.u32((ct.e1.len() + 2) as u32);
                    for e in &ct.e1 {
                        w.element(e);
                    }
                    w.element(&ct.e2_first);
                    w.element(&ct.e2_second);
                }
                Upload::PerSegment(pairs) => {
                    w.u8(SCHEME_PER_SEGMENT);
                    w.u32((2 * pairs.len()) as u32);
                    for (a, b) in pairs {
                        w.element(a);
                        w.element(b);
                    }
                }
            }
        }
        Message::Challenge {
            pk_s_fingerprint,
            challenge,
        } => {
            w.raw(pk_s_fingerprint);
            w.element(challenge);
        }
        Message::Response {
            client,
            pk_s_fingerprint,
            response,
        } => {
            w.u32(*client);
            w.raw(pk_s_fingerprint);
            w.element(response);
        }
        Message::RoundResult { participants } => w.u32(*participants),
        Message::Abort { reason } => w.u8(reason.code()),
    }
    let len = (w.buf.len() - 4) as u32;
    w.buf[..4].copy_from_slice(&len.to_be_bytes());
    w.buf
}

/// Parse one complete frame (including its length prefix).
pub fn decode_frame(bytes: &[u8], element_width: usize) -> Result<Frame> {
    let mut r = Reader {
        buf: bytes,
        width: element_width,
    };
    let len = r.u32()? as usize;
    if len != r.buf.len() {
        return Err(Error::Wire(format!(
            "length prefix {len} but {} bytes follow",
            r.buf.len()
        )));
    }
    let version = r.u8()?;
    if version != WIRE_VERSION {
        return Err(Error::Wire(format!("unsupported wire version {version}")));
    }
    let ty = r.u8()?;
    let msg_type =
        MsgType::from_u8(ty).ok_or_else(|| Error::Wire(format!("unknown msg_type {ty}")))?;
    let round_id = r.u64()?;
    let message = match msg_type {
        MsgType::RegisterPk => Message::RegisterPk {
            client: r.u32()?,
            pk: r.element()?,
        },
        MsgType::OnlineAnnounce => Message::OnlineAnnounce { client: r.u32()? },
        MsgType::ModelAndKey => Message::ModelAndKey {
            client: r.u32()?,
            pk_s: r.element()?,
            pk_s_fingerprint: r.array()?,
            sealed: SealedModel {
                nonce: r.array::<NONCE_LEN>()?,
                body: r.bytes()?.to_vec(),
            },
        },
        MsgType::GradientCiphertext => {
            let client = r.u32()?;
            let pk_s_fingerprint = r.array()?;
            let scheme = r.u8()?;
            let count = r.count()?;
            let mut elems = (0..count)
                .map(|_| r.element())
                .collect::<Result<Vec<_>>>()?;
            let upload = match scheme {
                SCHEME_PACKED if count >= 3 => {
                    let e2_second = elems.pop().expect("count >= 3");
                    let e2_first = elems.pop().expect("count >= 3");
                    Upload::Packed(Ciphertext {
                        e1: elems,
                        e2_first,
                        e2_second,
                    })
                }
                SCHEME_PER_SEGMENT if count >= 2 && count % 2 == 0 => {
                    let mut it = elems.into_iter();
                    let mut pairs = Vec::with_capacity(count / 2);
                    while let (Some(a), Some(b)) = (it.next(), it.next()) {
                        pairs.push((a, b));
                    }
                    Upload::PerSegment(pairs)
                }
                _ => {
                    return Err(Error::Wire(format!(
                        "bad ciphertext layout: scheme {scheme}, {count} elements"
                    )))
                }
            };
            Message::GradientCiphertext {
                client,
                pk_s_fingerprint,
                upload,
            }
        }
        MsgType::Challenge => Message::Challenge {
            pk_s_fingerprint: r.array()?,
            challenge: r.element()?,
        },
        MsgType::Response => Message::Response {
            client: r.u32()?,
            pk_s_fingerprint: r.array()?,
            response: r.element()?,
        },
        MsgType::RoundResult => Message::RoundResult {
            participants: r.u32()?,
        },
        MsgType::Abort => {
            let code = r.u8()?;
            Message::Abort {
                reason: AbortReason::from_code(code)
                    .ok_or_else(|| Error::Wire(format!("unknown abort code {code}")))?,
            }
        }
    };
    r.finish()?;
    Ok(Frame { round_id, message })
}

/// Peek at the message type without decoding the body.
pub fn frame_type(bytes: &[u8]) -> Option<MsgType> {
    bytes.get(5).and_then(|&t| MsgType::from_u8(t))
}

/// Read one length-prefixed frame from a stream.
pub fn read_frame<R: Read>(reader: &mut R) -> std::io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    reader.read_exact(&mut len)?;
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME_LEN {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "frame too large",
        ));
    }
    let mut buf = vec![0u8; 4 + n];
    buf[..4].copy_from_slice(&len);
    reader.read_exact(&mut buf[4..])?;
    Ok(buf)
}

pub fn write_frame<W: Write>(writer: &mut W, frame: &[u8]) -> std::io::Result<()> {
    writer.write_all(frame)?;
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x: u64) -> BigUint {
        BigUint::from(x)
    }

    #[test]
    fn header_layout() {
        let f = encode_frame(
            0x0102030405060708,
            &Message::OnlineAnnounce { client: 9 },
            4,
        );
        assert_eq!(
            f,
            vec![0, 0, 0, 14, 1, 2, 1, 2, 3, 4, 5, 6, 7, 8, 0, 0, 0, 9]
        );
        assert_eq!(frame_type(&f), Some(MsgType::OnlineAnnounce));
    }

    #[test]
    fn elements_are_fixed_width() {
        let f = encode_frame(
            1,
            &Message::RegisterPk {
                client: 1,
                pk: b(5),
            },
            8,
        );
        assert_eq!(&f[HEADER_LEN + 4..], &[0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 0, 5]);
        let mut short = f.clone();
        // claim a 7-byte element
        short[HEADER_LEN + 7] = 7;
        short.pop();
        short[3] -= 1;
        assert!(matches!(decode_frame(&short, 8), Err(Error::Wire(_))));
    }

    #[test]
    fn rejects_malformed_frames() {
        let f = encode_frame(
            3,
            &Message::Abort {
                reason: AbortReason::MidRoundDropout,
            },
            8,
        );
        assert!(decode_frame(&f[..f.len() - 1], 8).is_err());
        let mut v = f.clone();
        v[4] = 2;
        assert!(decode_frame(&v, 8).is_err());
        let mut t = f.clone();
        t[5] = 99;
        assert!(decode_frame(&t, 8).is_err());
        let mut a = f;
        *a.last_mut().unwrap() = 77;
        assert!(decode_frame(&a, 8).is_err());
    }

    #[test]
    fn stream_framing() {
        let frames: Vec<Vec<u8>> = (0..3)
            .map(|i| {
                encode_frame(
                    i,
                    &Message::RoundResult {
                        participants: i as u32,
                    },
                    8,
                )
            })
            .collect();
        let mut stream = Vec::new();
        for f in &frames {
            write_frame(&mut stream, f).unwrap();
        }
        let mut cursor = std::io::Cursor::new(stream);
        for f in &frames {
            assert_eq!(&read_frame(&mut cursor).unwrap(), f);
        }
    }

    fn element() -> impl Strategy<Value = BigUint> {
        proptest::collection::vec(any::<u8>(), 0..=16).prop_map(|v| BigUint::from_bytes_be(&v))
    }

    fn message() -> impl Strategy<Value = Message> {
        prop_oneof![
            (any::<u32>(), element()).prop_map(|(client, pk)| Message::RegisterPk { client, pk }),
            any::<u32>().prop_map(|client| Message::OnlineAnnounce { client }),
            (
                any::<u32>(),
                element(),
                any::<[u8; 16]>(),
                any::<[u8; 12]>(),
                proptest::collection::vec(any::<u8>(), 0..64)
            )
                .prop_map(|(client, pk_s, fp, nonce, body)| Message::ModelAndKey {
                    client,
                    pk_s,
                    pk_s_fingerprint: fp,
                    sealed: SealedModel { nonce, body },
                }),
            (
                any::<u32>(),
                any::<[u8; 16]>(),
                proptest::collection::vec(element(), 1..6),
                element(),
                element()
            )
                .prop_map(|(client, fp, e1, e2_first, e2_second)| {
                    Message::GradientCiphertext {
                        client,
                        pk_s_fingerprint: fp,
                        upload: Upload::Packed(Ciphertext {
                            e1,
                            e2_first,
                            e2_second,
                        }),
                    }
                }),
            (
                any::<u32>(),
                any::<[u8; 16]>(),
                proptest::collection::vec((element(), element()), 1..6)
            )
                .prop_map(|(client, fp, pairs)| Message::GradientCiphertext {
                    client,
                    pk_s_fingerprint: fp,
                    upload: Upload::PerSegment(pairs),
                }),
            (any::<[u8; 16]>(), element()).prop_map(|(fp, challenge)| Message::Challenge {
                pk_s_fingerprint: fp,
                challenge
            }),
            (any::<u32>(), any::<[u8; 16]>(), element()).prop_map(|(client, fp, response)| {
                Message::Response {
                    client,
                    pk_s_fingerprint: fp,
                    response,
                }
            }),
            any::<u32>().prop_map(|participants| Message::RoundResult { participants }),
            (1u8..=5).prop_map(|c| Message::Abort {
                reason: AbortReason::from_code(c).unwrap()
            }),
        ]
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(round_id in any::<u64>(), msg in message()) {
            let bytes = encode_frame(round_id, &msg, 16);
            let frame = decode_frame(&bytes, 16).unwrap();
            prop_assert_eq!(frame.round_id, round_id);
            prop_assert_eq!(&frame.message, &msg);
            prop_assert_eq!(encode_frame(round_id, &frame.message, 16), bytes);
        }

        #[test]
        fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = decode_frame(&bytes, 16);
        }
    }
}
