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

//! Fixed-point quantization and super-increasing packing of gradients.
//!
//! A quantized gradient of dimension `n` is split into `u = ⌈n/k⌉` segments
//! of `k` entries each; segment `j` is the dot product of its entries with the
//! packing vector `a`. Because every prefix of `a`, weighted by the largest
//! possible per-dimension sum `N·∇_max`, stays below the next element, sums of
//! up to `N` packed vectors decode uniquely.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{from_hex, to_hex};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackingParams {
    /// Super-increasing packing vector, `a_vec[0] = 1`.
    pub a_vec: Vec<BigUint>,
    /// Entries per segment.
    pub k: usize,
    /// Segment count.
    pub u: usize,
    /// Gradient dimension.
    pub n: usize,
    pub n_clients: u64,
    pub grad_max: u64,
}

/// Fixed-point quantization: entries are scaled by `2^scale_bits`, clipped to
/// `[-clip, clip]` and shifted by `offset` into `[0, 2·offset]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale_bits: u32,
    pub clip: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PackedGradient {
    pub segments: Vec<BigUint>,
}

/// Greedy minimal packing vector for the given plaintext bound.
///
/// `a_i = N·∇_max·Σ_{j<i} a_j + 1`, extended while `Σ a_j·N·∇_max < p` and
/// never past `n` entries (a longer vector would not change `u`).
pub fn build_packing(
    p: &BigUint,
    n: usize,
    n_clients: u64,
    grad_max: u64,
) -> Result<PackingParams> {
    if grad_max == 0 {
        return Err(Error::Params("grad_max must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::Params(
            "gradient dimension must be at least 1".into(),
        ));
    }
    if n_clients < 2 {
        return Err(Error::Params("at least two clients are required".into()));
    }
    let bound = n_clients
        .checked_mul(grad_max)
        .ok_or_else(|| Error::Params("N * grad_max overflows 64 bits".into()))?;
    let bound_big = BigUint::from(bound);
    if bound_big >= *p {
        return Err(Error::Params(format!(
            "a single entry sum N*grad_max = {bound} does not fit below p; \
             use a larger kappa1 or a smaller grad_max"
        )));
    }

    let mut a_vec = vec![BigUint::from(1u32)];
    let mut prefix = BigUint::from(1u32);
    while a_vec.len() < n {
        let next = &prefix * &bound_big + 1u32;
        let total = (&prefix + &next) * &bound_big;
        if total >= *p {
            break;
        }
        prefix += &next;
        a_vec.push(next);
    }
    let k = a_vec.len();
    Ok(PackingParams {
        a_vec,
        k,
        u: n.div_ceil(k),
        n,
        n_clients,
        grad_max,
    })
}

impl PackingParams {
    fn entry_bound(&self) -> BigUint {
        BigUint::from(self.n_clients) * self.grad_max
    }

    pub fn validate(&self, p: &BigUint) -> Result<()> {
        if self.k == 0 || self.a_vec.len() != self.k {
            return Err(Error::Params(
                "packing vector length does not match k".into(),
            ));
        }
        if self.n == 0 || self.u != self.n.div_ceil(self.k) {
            return Err(Error::Params("u != ceil(n / k)".into()));
        }
        if self.a_vec[0] != BigUint::from(1u32) {
            return Err(Error::Params("a_1 must equal 1".into()));
        }
        let bound = self.entry_bound();
        let mut prefix = BigUint::zero();
        for (i, a) in self.a_vec.iter().enumerate() {
            if i > 0 && &prefix * &bound >= *a {
                return Err(Error::Params(format!(
                    "a_{} breaks super-increasing order",
                    i + 1
                )));
            }
            prefix += a;
        }
        if prefix * bound >= *p {
            return Err(Error::Params("packed sums may reach p".into()));
        }
        Ok(())
    }
}

impl QuantParams {
    pub fn new(scale_bits: u32, clip: f64) -> Result<Self> {
        if !(clip.is_finite() && clip > 0.0) {
            return Err(Error::Params(format!("clip must be positive, got {clip}")));
        }
        if scale_bits > 52 {
            return Err(Error::Params(
                "scale_bits above 52 loses f64 exactness".into(),
            ));
        }
        let qp = QuantParams { scale_bits, clip };
        if qp.offset() == 0 {
            return Err(Error::Params("clip * 2^scale_bits rounds to zero".into()));
        }
        Ok(qp)
    }

    pub fn scale(&self) -> f64 {
        (self.scale_bits as f64).exp2()
    }

    pub fn offset(&self) -> u64 {
        (self.clip * self.scale()).round() as u64
    }

    /// Largest quantized entry, `2·offset`.
    pub fn grad_max(&self) -> u64 {
        2 * self.offset()
    }
}

pub fn quantize(grad: &[f64], qp: &QuantParams) -> Vec<u64> {
    let offset = qp.offset() as i64;
    let scale = qp.scale();
    grad.iter()
        .map(|&x| {
            // f64::round rounds half away from zero; NaN saturates to 0.
            let v = (x * scale).round();
            let v = if v.is_nan() {
                0
            } else {
                v.clamp(-(offset as f64), offset as f64) as i64
            };
            (v + offset) as u64
        })
        .collect()
}

/// Undo the offset and scale on a per-dimension sum over `n_participants`
/// quantized vectors.
pub fn dequantize_sum(sums: &[u64], qp: &QuantParams, n_participants: usize) -> Result<Vec<f64>> {
    let offset = qp.offset();
    let shift = offset
        .checked_mul(n_participants as u64)
        .ok_or_else(|| Error::Range("participant offset overflows".into()))?;
    let scale = qp.scale();
    sums.iter()
        .enumerate()
        .map(|(j, &s)| {
            if s > 2 * shift {
                return Err(Error::Integrity(format!(
                    "dimension {j}: sum {s} exceeds {} for {n_participants} participants",
                    2 * shift
                )));
            }
            Ok((s as i64 - shift as i64) as f64 / scale)
        })
        .collect()
}

pub fn pack(qgrad: &[u64], pp: &PackingParams) -> Result<PackedGradient> {
    if qgrad.len() != pp.n {
        return Err(Error::Range(format!(
            "gradient has {} entries, packing expects {}",
            qgrad.len(),
            pp.n
        )));
    }
    if let Some((j, v)) = qgrad.iter().enumerate().find(|(_, &v)| v > pp.grad_max) {
        return Err(Error::Range(format!(
            "entry {j} = {v} exceeds grad_max {}",
            pp.grad_max
        )));
    }
    let segments = qgrad
        .chunks(pp.k)
        .map(|chunk| {
            chunk
                .iter()
                .zip(&pp.a_vec)
                .fold(BigUint::zero(), |acc, (&v, a)| acc + a * v)
        })
        .collect();
    Ok(PackedGradient { segments })
}

/// Decode per-dimension sums from aggregated segments by peeling off the
/// packing vector from the top.
pub fn recover(segment_sums: &[BigUint], pp: &PackingParams) -> Result<Vec<u64>> {
    if segment_sums.len() != pp.u {
        return Err(Error::Integrity(format!(
            "{} segment sums for {} segments",
            segment_sums.len(),
            pp.u
        )));
    }
    let limit = pp.n_clients * pp.grad_max;
    let mut out = Vec::with_capacity(pp.u * pp.k);
    let mut digits = vec![0u64; pp.k];
    for (j, total) in segment_sums.iter().enumerate() {
        let mut t = total.clone();
        for i in (1..pp.k).rev() {
            let (quot, rem) = t.div_rem(&pp.a_vec[i]);
            digits[i] = checked_digit(&quot, limit, j, i)?;
            t = rem;
        }
        digits[0] = checked_digit(&t, limit, j, 0)?;
        out.extend_from_slice(&digits);
    }
    if out[pp.n..].iter().any(|&v| v != 0) {
        return Err(Error::Integrity("non-zero value in tail padding".into()));
    }
    out.truncate(pp.n);
    Ok(out)
}

fn checked_digit(v: &BigUint, limit: u64, segment: usize, slot: usize) -> Result<u64> {
    match v.to_u64() {
        Some(d) if d <= limit => Ok(d),
        _ => Err(Error::Integrity(format!(
            "segment {segment} slot {slot}: recovered value exceeds N*grad_max = {limit}"
        ))),
    }
}

impl PackedGradient {
    /// Segment-wise sum; used by plaintext oracles.
    pub fn sum<'a>(items: impl IntoIterator<Item = &'a PackedGradient>) -> PackedGradient {
        let mut acc: Vec<BigUint> = Vec::new();
        for pg in items {
            if acc.is_empty() {
                acc = vec![BigUint::zero(); pg.segments.len()];
            }
            for (a, s) in acc.iter_mut().zip(&pg.segments) {
                *a += s;
            }
        }
        PackedGradient { segments: acc }
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct PackingParamsDoc {
    a_vec: Vec<String>,
    k: usize,
    u: usize,
    n: usize,
    n_clients: u64,
    grad_max: u64,
}

impl From<&PackingParams> for PackingParamsDoc {
    fn from(pp: &PackingParams) -> Self {
        PackingParamsDoc {
            a_vec: pp.a_vec.iter().map(to_hex).collect(),
            k: pp.k,
            u: pp.u,
            n: pp.n,
            n_clients: pp.n_clients,
            grad_max: pp.grad_max,
        }
    }
}

impl TryFrom<PackingParamsDoc> for PackingParams {
    type Error = Error;

    fn try_from(doc: PackingParamsDoc) -> Result<Self> {
        Ok(PackingParams {
            a_vec: doc
                .a_vec
                .iter()
                .map(|h| from_hex(h))
                .collect::<Result<_>>()?,
            k: doc.k,
            u: doc.u,
            n: doc.n,
            n_clients: doc.n_clients,
            grad_max: doc.grad_max,
        })
    }
}
