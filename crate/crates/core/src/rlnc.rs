//! Generation-based random linear network coding over GF(2^8).
//!
//! A [`Generation`] holds the source packets of one flow within one cohort.
//! Each source payload is framed as `[len: u32 LE][bytes][zero padding]` so
//! every block has the same length and the decoder can restore the exact
//! original length.

use rand::Rng;
use thiserror::Error;

use crate::gf;

pub type FlowId = u32;

/// Fixed part of the on-wire header: flow id, cohort label, generation size, priority.
pub const HEADER_FIXED_LEN: usize = 4 + 8 + 2 + 1;
const LEN_PREFIX: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Priority {
    High,
    Low,
}

impl Priority {
    pub fn as_str(self) -> &'static str {
        match self {
            Priority::High => "high",
            Priority::Low => "low",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodingError {
    #[error("generation must contain at least one packet")]
    EmptyGeneration,
    #[error("generation size {0} exceeds the 16-bit header field")]
    GenerationTooLarge(usize),
    #[error("coefficient vector has length {got}, generation size is {expected}")]
    CoefficientLength { expected: usize, got: usize },
    #[error("payload has length {got}, generation block length is {expected}")]
    PayloadLength { expected: usize, got: usize },
    #[error("packet belongs to flow {flow}/cohort {cohort}, decoder expects flow {want_flow}/cohort {want_cohort}")]
    WrongGeneration { flow: FlowId, cohort: u64, want_flow: FlowId, want_cohort: u64 },
    #[error("cannot recode an empty packet set")]
    NothingToRecode,
    #[error("truncated packet: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("invalid priority byte {0:#x}")]
    BadPriority(u8),
}

/// Source packets of one flow within one cohort interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub flow_id: FlowId,
    pub cohort_label: u64,
    blocks: Vec<Vec<u8>>,
}

impl Generation {
    pub fn new<P: AsRef<[u8]>>(
        flow_id: FlowId,
        cohort_label: u64,
        payloads: &[P],
    ) -> Result<Self, CodingError> {
        if payloads.is_empty() {
            return Err(CodingError::EmptyGeneration);
        }
        if payloads.len() > u16::MAX as usize {
            return Err(CodingError::GenerationTooLarge(payloads.len()));
        }
        let longest = payloads.iter().map(|p| p.as_ref().len()).max().unwrap_or(0);
        let block_len = LEN_PREFIX + longest;
        let blocks = payloads
            .iter()
            .map(|p| {
                let p = p.as_ref();
                let mut block = Vec::with_capacity(block_len);
                block.extend_from_slice(&(p.len() as u32).to_le_bytes());
                block.extend_from_slice(p);
                block.resize(block_len, 0);
                block
            })
            .collect();
        Ok(Self { flow_id, cohort_label, blocks })
    }

    pub fn size(&self) -> usize {
        self.blocks.len()
    }

    /// Padded, length-prefixed block length shared by every source packet.
    pub fn block_len(&self) -> usize {
        self.blocks[0].len()
    }

    pub fn block(&self, i: usize) -> &[u8] {
        &self.blocks[i]
    }
}

/// A network-coded packet: header metadata plus one coded block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedPacket {
    pub flow_id: FlowId,
    pub cohort_label: u64,
    pub priority: Priority,
    pub coefficients: Vec<u8>,
    pub payload: Vec<u8>,
}

impl CodedPacket {
    pub fn generation_size(&self) -> usize {
        self.coefficients.len()
    }

    pub fn payload_len(&self) -> usize {
        self.payload.len()
    }

    pub fn with_priority(mut self, priority: Priority) -> Self {
        self.priority = priority;
        self
    }

    pub fn wire_len(&self) -> usize {
        HEADER_FIXED_LEN + self.coefficients.len() + self.payload.len()
    }

    /// `flow_id (4) | k (8) | g (2) | priority (1) | g coefficient bytes | payload`,
    /// integers big-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&self.flow_id.to_be_bytes());
        out.extend_from_slice(&self.cohort_label.to_be_bytes());
        out.extend_from_slice(&(self.coefficients.len() as u16).to_be_bytes());
        out.push(match self.priority {
            Priority::High => 1,
            Priority::Low => 0,
        });
        out.extend_from_slice(&self.coefficients);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CodingError> {
        if buf.len() < HEADER_FIXED_LEN {
            return Err(CodingError::Truncated { need: HEADER_FIXED_LEN, have: buf.len() });
        }
        let flow_id = u32::from_be_bytes(buf[0..4].try_into().unwrap());
        let cohort_label = u64::from_be_bytes(buf[4..12].try_into().unwrap());
        let g = u16::from_be_bytes(buf[12..14].try_into().unwrap()) as usize;
        let priority = match buf[14] {
            1 => Priority::High,
            0 => Priority::Low,
            other => return Err(CodingError::BadPriority(other)),
        };
        let need = HEADER_FIXED_LEN + g;
        if buf.len() < need {
            return Err(CodingError::Truncated { need, have: buf.len() });
        }
        Ok(Self {
            flow_id,
            cohort_label,
            priority,
            coefficients: buf[HEADER_FIXED_LEN..need].to_vec(),
            payload: buf[need..].to_vec(),
        })
    }
}

/// Uniform coefficients over all 256 values; an all-zero draw is redrawn.
pub fn random_coefficients<R: Rng + ?Sized>(g: usize, rng: &mut R) -> Vec<u8> {
    let mut coeffs = vec![0u8; g];
    loop {
        rng.fill(coeffs.as_mut_slice());
        if coeffs.iter().any(|&c| c != 0) {
            return coeffs;
        }
    }
}

/// Combine the generation's source blocks with `coeffs`. The result is tagged High;
/// callers retag with [`CodedPacket::with_priority`].
pub fn encode(gen: &Generation, coeffs: &[u8]) -> Result<CodedPacket, CodingError> {
    if coeffs.len() != gen.size() {
        return Err(CodingError::CoefficientLength { expected: gen.size(), got: coeffs.len() });
    }
    let mut payload = vec![0u8; gen.block_len()];
    for (block, &c) in gen.blocks.iter().zip(coeffs) {
        gf::mul_add_slice(&mut payload, block, c);
    }
    Ok(CodedPacket {
        flow_id: gen.flow_id,
        cohort_label: gen.cohort_label,
        priority: Priority::High,
        coefficients: coeffs.to_vec(),
        payload,
    })
}

pub fn encode_random<R: Rng + ?Sized>(gen: &Generation, rng: &mut R) -> CodedPacket {
    let coeffs = random_coefficients(gen.size(), rng);
    encode(gen, &coeffs).expect("coefficient length matches by construction")
}

/// Linear combination of already-coded packets of one generation. The
/// coefficient vectors compose, so the output is still a combination of the
/// original source blocks. Flow, cohort and priority come from the first input.
pub fn recode(packets: &[&CodedPacket], weights: &[u8]) -> Result<CodedPacket, CodingError> {
    let first = packets.first().ok_or(CodingError::NothingToRecode)?;
    if weights.len() != packets.len() {
        return Err(CodingError::CoefficientLength { expected: packets.len(), got: weights.len() });
    }
    let g = first.generation_size();
    let len = first.payload_len();
    let mut coefficients = vec![0u8; g];
    let mut payload = vec![0u8; len];
    for (p, &w) in packets.iter().zip(weights) {
        if p.flow_id != first.flow_id || p.cohort_label != first.cohort_label {
            return Err(CodingError::WrongGeneration {
                flow: p.flow_id,
                cohort: p.cohort_label,
                want_flow: first.flow_id,
                want_cohort: first.cohort_label,
            });
        }
        if p.generation_size() != g {
            return Err(CodingError::CoefficientLength { expected: g, got: p.generation_size() });
        }
        if p.payload_len() != len {
            return Err(CodingError::PayloadLength { expected: len, got: p.payload_len() });
        }
        gf::mul_add_slice(&mut coefficients, &p.coefficients, w);
        gf::mul_add_slice(&mut payload, &p.payload, w);
    }
    Ok(CodedPacket {
        flow_id: first.flow_id,
        cohort_label: first.cohort_label,
        priority: first.priority,
        coefficients,
        payload,
    })
}

pub fn recode_random<R: Rng + ?Sized>(
    packets: &[&CodedPacket],
    rng: &mut R,
) -> Result<CodedPacket, CodingError> {
    let weights = random_coefficients(packets.len(), rng);
    recode(packets, &weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Innovative,
    Redundant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("rank {rank} below generation size {size}")]
pub struct DecodeFailure {
    pub rank: usize,
    pub size: usize,
}

/// Incremental Gauss-Jordan decoder for one generation.
///
/// `rows[c]` holds the row whose pivot is column `c`; the stored rows are
/// always in reduced row echelon form.
#[derive(Debug, Clone)]
pub struct Decoder {
    flow_id: FlowId,
    cohort_label: u64,
    size: usize,
    block_len: Option<usize>,
    rows: Vec<Option<(Vec<u8>, Vec<u8>)>>,
    rank: usize,
}

impl Decoder {
    pub fn new(flow_id: FlowId, cohort_label: u64, size: usize) -> Self {
        Self { flow_id, cohort_label, size, block_len: None, rows: vec![None; size], rank: 0 }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_complete(&self) -> bool {
        self.rank == self.size
    }

    pub fn insert(&mut self, pkt: &CodedPacket) -> Result<InsertOutcome, CodingError> {
        if pkt.flow_id != self.flow_id || pkt.cohort_label != self.cohort_label {
            return Err(CodingError::WrongGeneration {
                flow: pkt.flow_id,
                cohort: pkt.cohort_label,
                want_flow: self.flow_id,
                want_cohort: self.cohort_label,
            });
        }
        if pkt.generation_size() != self.size {
            return Err(CodingError::CoefficientLength {
                expected: self.size,
                got: pkt.generation_size(),
            });
        }
        match self.block_len {
            Some(len) if len != pkt.payload_len() => {
                return Err(CodingError::PayloadLength { expected: len, got: pkt.payload_len() })
            }
            _ => self.block_len = Some(pkt.payload_len()),
        }
        if self.is_complete() {
            return Ok(InsertOutcome::Redundant);
        }

        let mut coeffs = pkt.coefficients.clone();
        let mut payload = pkt.payload.clone();
        for col in 0..self.size {
            let c = coeffs[col];
            if c == 0 {
                continue;
            }
            if let Some((rc, rp)) = &self.rows[col] {
                gf::mul_add_slice(&mut coeffs, rc, c);
                gf::mul_add_slice(&mut payload, rp, c);
            }
        }
        let Some(pivot) = coeffs.iter().position(|&c| c != 0) else {
            return Ok(InsertOutcome::Redundant);
        };
        let scale = gf::inv(coeffs[pivot]).expect("pivot is nonzero");
        gf::scale_slice(&mut coeffs, scale);
        gf::scale_slice(&mut payload, scale);
        for row in self.rows.iter_mut().flatten() {
            let c = row.0[pivot];
            if c != 0 {
                gf::mul_add_slice(&mut row.0, &coeffs, c);
                gf::mul_add_slice(&mut row.1, &payload, c);
            }
        }
        self.rows[pivot] = Some((coeffs, payload));
        self.rank += 1;
        Ok(InsertOutcome::Innovative)
    }

    /// Original payloads in source order, with padding and length prefix removed.
    pub fn extract(&self) -> Result<Vec<Vec<u8>>, DecodeFailure> {
        if !self.is_complete() {
            return Err(DecodeFailure { rank: self.rank, size: self.size });
        }
        Ok(self
            .rows
            .iter()
            .map(|row| {
                let block = &row.as_ref().expect("complete decoder has every pivot").1;
                let len = u32::from_le_bytes(block[..LEN_PREFIX].try_into().unwrap()) as usize;
                let end = (LEN_PREFIX + len).min(block.len());
                block[LEN_PREFIX..end].to_vec()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn payloads(n: usize, len: usize, seed: u64) -> Vec<Vec<u8>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|i| (0..len + i).map(|_| rng.random()).collect()).collect()
    }

    /// Byte-wise double loop using the bitwise field multiply, independent of the slice helpers.
    fn naive_combination(blocks: &[&[u8]], coeffs: &[u8]) -> Vec<u8> {
        fn slow_mul(mut a: u8, mut b: u8) -> u8 {
            let mut acc = 0u8;
            while b != 0 {
                if b & 1 != 0 {
                    acc ^= a;
                }
                let hi = a & 0x80 != 0;
                a <<= 1;
                if hi {
                    a ^= 0x1D;
                }
                b >>= 1;
            }
            acc
        }
        let len = blocks[0].len();
        let mut out = vec![0u8; len];
        for (j, byte) in out.iter_mut().enumerate() {
            for (i, block) in blocks.iter().enumerate() {
                *byte ^= slow_mul(coeffs[i], block[j]);
            }
        }
        out
    }

    #[test]
    fn unit_vector_selects_source_block() {
        let gen = Generation::new(7, 3, &payloads(4, 16, 1)).unwrap();
        let pkt = encode(&gen, &[0, 1, 0, 0]).unwrap();
        assert_eq!(pkt.payload, gen.block(1));
        assert_eq!((pkt.flow_id, pkt.cohort_label, pkt.generation_size()), (7, 3, 4));
    }

    #[test]
    fn zero_vector_gives_zero_payload() {
        let gen = Generation::new(0, 0, &payloads(4, 16, 2)).unwrap();
        let pkt = encode(&gen, &[0; 4]).unwrap();
        assert!(pkt.payload.iter().all(|&b| b == 0));
    }

    #[test]
    fn seeded_encode_matches_naive_oracle() {
        let gen = Generation::new(1, 1, &payloads(4, 40, 3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let pkt = encode_random(&gen, &mut rng);
            let blocks: Vec<&[u8]> = (0..4).map(|i| gen.block(i)).collect();
            assert_eq!(pkt.payload, naive_combination(&blocks, &pkt.coefficients));
        }
    }

    #[test]
    fn coefficient_length_mismatch_is_rejected() {
        let gen = Generation::new(1, 1, &payloads(4, 8, 4)).unwrap();
        assert_eq!(
            encode(&gen, &[1, 2, 3]),
            Err(CodingError::CoefficientLength { expected: 4, got: 3 })
        );
        assert_eq!(Generation::new::<Vec<u8>>(1, 1, &[]), Err(CodingError::EmptyGeneration));
    }

    #[test]
    fn duplicate_insert_is_redundant() {
        let gen = Generation::new(1, 1, &payloads(4, 8, 5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pkt = encode_random(&gen, &mut rng);
        let mut dec = Decoder::new(1, 1, 4);
        assert_eq!(dec.insert(&pkt), Ok(InsertOutcome::Innovative));
        assert_eq!(dec.insert(&pkt), Ok(InsertOutcome::Redundant));
        assert_eq!(dec.rank(), 1);
    }

    #[test]
    fn unit_vectors_reach_full_rank_and_round_trip() {
        let src = payloads(5, 10, 6);
        let gen = Generation::new(2, 9, &src).unwrap();
        let mut dec = Decoder::new(2, 9, 5);
        for i in (0..5).rev() {
            let mut e = vec![0u8; 5];
            e[i] = 1;
            dec.insert(&encode(&gen, &e).unwrap()).unwrap();
        }
        assert_eq!(dec.rank(), 5);
        assert_eq!(dec.extract().unwrap(), src);
    }

    #[test]
    fn rank_deficient_extract_fails() {
        let gen = Generation::new(1, 1, &payloads(4, 8, 7)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut dec = Decoder::new(1, 1, 4);
        for _ in 0..3 {
            dec.insert(&encode_random(&gen, &mut rng)).unwrap();
        }
        assert_eq!(dec.extract(), Err(DecodeFailure { rank: 3, size: 4 }));
    }

    #[test]
    fn wrong_generation_is_rejected() {
        let gen = Generation::new(1, 1, &payloads(2, 8, 8)).unwrap();
        let pkt = encode(&gen, &[1, 1]).unwrap();
        let mut dec = Decoder::new(1, 2, 2);
        assert!(matches!(dec.insert(&pkt), Err(CodingError::WrongGeneration { .. })));
        let mut dec = Decoder::new(1, 1, 3);
        assert!(matches!(dec.insert(&pkt), Err(CodingError::CoefficientLength { .. })));
    }

    #[test]
    fn recoding_composes_coefficients() {
        // A'_1 from A_1, A_2, A_5, A_6: still a combination of a_1..a_4.
        let gen = Generation::new(0, 1, &payloads(4, 32, 10)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let coded: Vec<CodedPacket> = (0..4).map(|_| encode_random(&gen, &mut rng)).collect();
        let refs: Vec<&CodedPacket> = coded.iter().collect();
        let weights = [3u8, 0, 0x80, 1];
        let recoded = recode(&refs, &weights).unwrap();
        let mut composed = vec![0u8; 4];
        for (p, &w) in coded.iter().zip(&weights) {
            for j in 0..4 {
                composed[j] ^= gf::mul(w, p.coefficients[j]);
            }
        }
        assert_eq!(recoded.coefficients, composed);
        assert_eq!(recoded, encode(&gen, &composed).unwrap());
    }

    #[test]
    fn header_round_trip() {
        let gen = Generation::new(0xDEAD, 1 << 40, &payloads(3, 5, 11)).unwrap();
        let pkt = encode(&gen, &[9, 8, 7]).unwrap().with_priority(Priority::Low);
        let bytes = pkt.to_bytes();
        assert_eq!(bytes.len(), pkt.wire_len());
        assert_eq!(&bytes[..4], &0xDEADu32.to_be_bytes());
        assert_eq!(bytes[14], 0);
        assert_eq!(CodedPacket::from_bytes(&bytes).unwrap(), pkt);
        assert!(matches!(CodedPacket::from_bytes(&bytes[..16]), Err(CodingError::Truncated { .. })));
    }

    use proptest::{prop_assert, prop_assert_eq, proptest};

    proptest! {
        #[test]
        fn round_trip_any_invertible_order(
            seed: u64,
            g in 1usize..24,
            len in 0usize..64,
        ) {
            let src = payloads(g, len, seed);
            let gen = Generation::new(3, 4, &src).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
            let mut dec = Decoder::new(3, 4, g);
            let mut rank_trace = vec![];
            let mut guard = 0;
            while !dec.is_complete() && guard < 4 * g + 16 {
                dec.insert(&encode_random(&gen, &mut rng)).unwrap();
                rank_trace.push(dec.rank());
                guard += 1;
            }
            prop_assert!(rank_trace.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(dec.extract().unwrap(), src);
        }

        #[test]
        fn rank_is_order_invariant(seed: u64, g in 1usize..12, extra in 0usize..6) {
            let gen = Generation::new(0, 0, &payloads(g, 4, seed)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = g.saturating_sub(2) + extra;
            let mut pkts: Vec<CodedPacket> = (0..n).map(|_| encode_random(&gen, &mut rng)).collect();
            // make a dependent row when possible
            if pkts.len() >= 2 {
                let dep = recode(&[&pkts[0], &pkts[1]], &[1, 1]).unwrap();
                pkts.push(dep);
            }
            let rank_of = |ps: &[CodedPacket]| {
                let mut d = Decoder::new(0, 0, g);
                ps.iter().for_each(|p| { d.insert(p).unwrap(); });
                d.rank()
            };
            let forward = rank_of(&pkts);
            pkts.reverse();
            prop_assert_eq!(forward, rank_of(&pkts));
        }
    }
}
