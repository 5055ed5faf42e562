//! One compressed stream, many decoders with different side information.
//!
//! A single syndrome code must be sized for the weakest decoder; chaining
//! lets several codes share the stream at almost the rate of each decoder's
//! own code. A [`ScheduleNode`] is a binary tree: a leaf is one block code
//! serving the decoders whose side information it fits, and a chain node
//! stitches its two child codes across `t` consecutive words. The chained
//! payload carries the left code's syndrome of the first word, the field sum
//! of the two codes' (zero-padded) syndromes for each interior word, and the
//! right code's syndrome of the last word. Decoders served by the left child
//! sweep forward — decode a word, re-encode it under the right code, subtract
//! to expose the next left syndrome — and right-child decoders sweep
//! backward symmetrically. Rate: (t+1)/t times the larger child rate.
//!
//! [`SubsetUniversalCode`] additionally routes every payload symbol to a
//! decoder subset, so a carrier that can address subsets (for instance a
//! broadcast channel) can deliver each symbol exactly to the decoders whose
//! sweep reads it. [`optimize_schedule`] compares balanced and sequential
//! chaining shapes for a given rate-overhead budget.

use crate::galois::{FieldSpec, Symbol};
use crate::source::PairDistribution;
use crate::sw::{mask_digest, syndrome_from_symbols, BlockCodeSpec, SwError};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum UniversalError {
    #[error("decoder {decoder} is not served by this schedule")]
    UnknownDecoder { decoder: usize },
    #[error("decoder {decoder} appears in more than one leaf")]
    DuplicateDecoder { decoder: usize },
    #[error("decoder {decoder} has a pair but no leaf serves it")]
    UnservedDecoder { decoder: usize },
    #[error("a leaf names decoder {decoder} but only {count} pairs were given")]
    DecoderOutOfRange { decoder: usize, count: usize },
    #[error("chain children code different word lengths ({left} vs {right})")]
    ChildLengthMismatch { left: usize, right: usize },
    #[error("chain length must be at least 1")]
    BadChainLength,
    #[error("all leaves must share one field")]
    FieldMismatch,
    #[error("decoder {decoder}'s pair alphabet {pair} does not match field order {field}")]
    PairAlphabet {
        decoder: usize,
        pair: usize,
        field: u32,
    },
    #[error("input length {got}, expected {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("payload length {got}, expected {expected}")]
    PayloadLength { expected: usize, got: usize },
    #[error("subset features support at most 32 decoders, got {count}")]
    TooManyDecoders { count: usize },
    #[error("allocation does not cover decoder {decoder}: has {have}, needs more than {need}")]
    NotCovering { decoder: usize, have: f64, need: f64 },
    #[error("payload position {position} cannot be routed to any remaining subset")]
    Unroutable { position: usize },
    #[error("plan entry {position} does not contain every decoder that reads it")]
    PlanMismatch { position: usize },
    #[error("plan length {got}, expected {expected}")]
    PlanLength { expected: usize, got: usize },
    #[error("subset bucket {subset:#b} is missing")]
    MissingBucket { subset: u32 },
    #[error("subset bucket {subset:#b} has length {got}, expected {expected}")]
    BucketLength {
        subset: u32,
        expected: usize,
        got: usize,
    },
    #[error("chained wire data malformed: {0}")]
    Wire(&'static str),
    #[error("chained wire schedule digest mismatch")]
    WireDigest,
    #[error("block code: {0}")]
    Sw(#[from] SwError),
}

/// A chaining schedule: either one block code serving some decoders, or two
/// sub-schedules stitched across `t` words. Schedule trees hold a handful of
/// nodes, so the leaf payload is kept inline rather than boxed.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum ScheduleNode {
    Leaf {
        decoders: Vec<usize>,
        code: BlockCodeSpec,
    },
    Chain {
        left: Box<ScheduleNode>,
        right: Box<ScheduleNode>,
        t: usize,
    },
}

impl ScheduleNode {
    pub fn leaf(decoders: Vec<usize>, code: BlockCodeSpec) -> ScheduleNode {
        ScheduleNode::Leaf { decoders, code }
    }

    pub fn chain(left: ScheduleNode, right: ScheduleNode, t: usize) -> ScheduleNode {
        ScheduleNode::Chain {
            left: Box::new(left),
            right: Box::new(right),
            t,
        }
    }

    /// Source symbols coded by one pass of this schedule.
    pub fn total_len(&self) -> usize {
        match self {
            ScheduleNode::Leaf { code, .. } => code.total_len(),
            ScheduleNode::Chain { left, t, .. } => left.total_len() * t,
        }
    }

    /// Payload symbols produced by one pass of this schedule.
    pub fn payload_len(&self) -> usize {
        match self {
            ScheduleNode::Leaf { code, .. } => code.syndrome_len(),
            ScheduleNode::Chain { left, right, t } => {
                let pl = left.payload_len();
                let pr = right.payload_len();
                pl + (t - 1) * pl.max(pr) + pr
            }
        }
    }

    fn field(&self) -> &FieldSpec {
        match self {
            ScheduleNode::Leaf { code, .. } => code.field(),
            ScheduleNode::Chain { left, .. } => left.field(),
        }
    }

    fn decoder_mask(&self) -> u64 {
        match self {
            ScheduleNode::Leaf { decoders, .. } => {
                decoders.iter().fold(0u64, |m, &d| m | 1u64 << d)
            }
            ScheduleNode::Chain { left, right, .. } => left.decoder_mask() | right.decoder_mask(),
        }
    }

    fn serves(&self, decoder: usize) -> bool {
        self.decoder_mask() >> decoder & 1 == 1
    }
}

/// Role of one segment in a chained payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentRole {
    /// The whole payload of a leaf schedule.
    Whole,
    /// The left code's syndrome of the first word.
    Head,
    /// Sum of two padded syndromes of adjacent words.
    Mixed,
    /// The right code's syndrome of the last word.
    Tail,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadSegment {
    pub role: SegmentRole,
    pub symbols: Vec<Symbol>,
}

/// The encoder's output: the flat symbol stream plus its top-level segment
/// boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainedPayload {
    segments: Vec<PayloadSegment>,
}

impl ChainedPayload {
    pub fn segments(&self) -> &[PayloadSegment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.symbols.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self) -> Vec<Symbol> {
        let mut out = Vec::with_capacity(self.len());
        for seg in &self.segments {
            out.extend_from_slice(&seg.symbols);
        }
        out
    }
}

/// A chaining schedule bound to the per-decoder metrics.
#[derive(Debug, Clone)]
pub struct UniversalCode {
    root: ScheduleNode,
    pairs: Vec<PairDistribution>,
}

impl UniversalCode {
    pub fn new(
        root: ScheduleNode,
        pairs: Vec<PairDistribution>,
    ) -> Result<UniversalCode, UniversalError> {
        let field = root.field().clone();
        let mut seen = vec![false; pairs.len()];
        validate_node(&root, &field, pairs.len(), &mut seen)?;
        if let Some(decoder) = seen.iter().position(|&s| !s) {
            return Err(UniversalError::UnservedDecoder { decoder });
        }
        for (decoder, pair) in pairs.iter().enumerate() {
            if pair.x_size() != field.order() as usize {
                return Err(UniversalError::PairAlphabet {
                    decoder,
                    pair: pair.x_size(),
                    field: field.order(),
                });
            }
        }
        Ok(UniversalCode { root, pairs })
    }

    pub fn root(&self) -> &ScheduleNode {
        &self.root
    }

    pub fn decoder_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn total_len(&self) -> usize {
        self.root.total_len()
    }

    pub fn payload_len(&self) -> usize {
        self.root.payload_len()
    }

    /// Payload symbols per source symbol.
    pub fn rate(&self) -> f64 {
        self.payload_len() as f64 / self.total_len() as f64
    }

    pub fn encode(&self, x: &[Symbol]) -> Result<ChainedPayload, UniversalError> {
        if x.len() != self.total_len() {
            return Err(UniversalError::InputLength {
                expected: self.total_len(),
                got: x.len(),
            });
        }
        let flat = encode_node(&self.root, x)?;
        let segments = match &self.root {
            ScheduleNode::Leaf { .. } => vec![PayloadSegment {
                role: SegmentRole::Whole,
                symbols: flat,
            }],
            ScheduleNode::Chain { left, right, t } => {
                let pl = left.payload_len();
                let pr = right.payload_len();
                let mid = pl.max(pr);
                let mut segments = Vec::with_capacity(t + 1);
                segments.push(PayloadSegment {
                    role: SegmentRole::Head,
                    symbols: flat[..pl].to_vec(),
                });
                for j in 1..*t {
                    segments.push(PayloadSegment {
                        role: SegmentRole::Mixed,
                        symbols: flat[pl + (j - 1) * mid..pl + j * mid].to_vec(),
                    });
                }
                segments.push(PayloadSegment {
                    role: SegmentRole::Tail,
                    symbols: flat[pl + (t - 1) * mid..].to_vec(),
                });
                segments
            }
        };
        Ok(ChainedPayload { segments })
    }

    /// Recovers the source word as decoder `decoder`, using its own side
    /// sequence `y` (one letter per source symbol).
    pub fn decode(
        &self,
        decoder: usize,
        payload: &[Symbol],
        y: &[u32],
    ) -> Result<Vec<Symbol>, UniversalError> {
        if decoder >= self.pairs.len() || !self.root.serves(decoder) {
            return Err(UniversalError::UnknownDecoder { decoder });
        }
        if payload.len() != self.payload_len() {
            return Err(UniversalError::PayloadLength {
                expected: self.payload_len(),
                got: payload.len(),
            });
        }
        if y.len() != self.total_len() {
            return Err(UniversalError::InputLength {
                expected: self.total_len(),
                got: y.len(),
            });
        }
        decode_node(&self.root, decoder, &self.pairs[decoder], payload, y)
    }

    /// Which decoders read each flat payload position: a bitmask per symbol.
    /// Chain interiors mix both children, so every decoder of the node reads
    /// them; the outer segments inherit the child structure recursively.
    pub fn requirement_masks(&self) -> Result<Vec<u32>, UniversalError> {
        if self.pairs.len() > 32 {
            return Err(UniversalError::TooManyDecoders {
                count: self.pairs.len(),
            });
        }
        let mut out = Vec::with_capacity(self.payload_len());
        requirements(&self.root, &mut out);
        Ok(out)
    }

    /// Digest of the schedule shape, leaf masks included, for wire binding.
    pub fn structure_digest(&self) -> [u8; 8] {
        let mut bytes = Vec::new();
        push_structure(&self.root, &mut bytes);
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let full = hasher.finalize();
        let mut out = [0u8; 8];
        out.copy_from_slice(&full[..8]);
        out
    }

    pub fn field(&self) -> &FieldSpec {
        self.root.field()
    }
}

fn validate_node(
    node: &ScheduleNode,
    field: &FieldSpec,
    decoder_count: usize,
    seen: &mut [bool],
) -> Result<(), UniversalError> {
    match node {
        ScheduleNode::Leaf { decoders, code } => {
            if code.field() != field {
                return Err(UniversalError::FieldMismatch);
            }
            for &d in decoders {
                if d >= decoder_count {
                    return Err(UniversalError::DecoderOutOfRange {
                        decoder: d,
                        count: decoder_count,
                    });
                }
                if seen[d] {
                    return Err(UniversalError::DuplicateDecoder { decoder: d });
                }
                seen[d] = true;
            }
            Ok(())
        }
        ScheduleNode::Chain { left, right, t } => {
            if *t < 1 {
                return Err(UniversalError::BadChainLength);
            }
            if left.total_len() != right.total_len() {
                return Err(UniversalError::ChildLengthMismatch {
                    left: left.total_len(),
                    right: right.total_len(),
                });
            }
            validate_node(left, field, decoder_count, seen)?;
            validate_node(right, field, decoder_count, seen)
        }
    }
}

fn encode_node(node: &ScheduleNode, x: &[Symbol]) -> Result<Vec<Symbol>, UniversalError> {
    match node {
        ScheduleNode::Leaf { code, .. } => Ok(code.encode(x)?.symbols().to_vec()),
        ScheduleNode::Chain { left, right, t } => {
            let n = left.total_len();
            let field = node.field().clone();
            let pl = left.payload_len();
            let pr = right.payload_len();
            let mid = pl.max(pr);
            let mut out = Vec::with_capacity(pl + (t - 1) * mid + pr);

            let mut prev_right: Vec<Symbol> = Vec::new();
            for j in 0..*t {
                let word = &x[j * n..(j + 1) * n];
                let p_left = encode_node(left, word)?;
                if j == 0 {
                    out.extend_from_slice(&p_left);
                } else {
                    for i in 0..mid {
                        let a = p_left.get(i).copied().unwrap_or(Symbol::ZERO);
                        let b = prev_right.get(i).copied().unwrap_or(Symbol::ZERO);
                        out.push(field.add(a, b));
                    }
                }
                prev_right = encode_node(right, word)?;
            }
            out.extend_from_slice(&prev_right);
            Ok(out)
        }
    }
}

fn decode_node(
    node: &ScheduleNode,
    decoder: usize,
    pair: &PairDistribution,
    payload: &[Symbol],
    y: &[u32],
) -> Result<Vec<Symbol>, UniversalError> {
    match node {
        ScheduleNode::Leaf { code, .. } => {
            let syndrome = syndrome_from_symbols(payload.to_vec());
            Ok(code.decode_with(&syndrome, y, pair)?)
        }
        ScheduleNode::Chain { left, right, t } => {
            let n = left.total_len();
            let field = node.field().clone();
            let pl = left.payload_len();
            let pr = right.payload_len();
            let mid = pl.max(pr);
            let seg = |j: usize| -> &[Symbol] {
                // j = 0 is the head; j in 1..t are the interior segments.
                if j == 0 {
                    &payload[..pl]
                } else {
                    &payload[pl + (j - 1) * mid..pl + j * mid]
                }
            };
            let mut words: Vec<Vec<Symbol>> = vec![Vec::new(); *t];

            if left.serves(decoder) {
                let mut word = decode_node(left, decoder, pair, seg(0), &y[..n])?;
                for j in 1..*t {
                    let reenc = encode_node(right, &word)?;
                    words[j - 1] = word;
                    let mixed = seg(j);
                    let exposed: Vec<Symbol> = (0..pl)
                        .map(|i| {
                            let b = reenc.get(i).copied().unwrap_or(Symbol::ZERO);
                            field.sub(mixed[i], b)
                        })
                        .collect();
                    word = decode_node(left, decoder, pair, &exposed, &y[j * n..(j + 1) * n])?;
                }
                words[*t - 1] = word;
            } else {
                let tail = &payload[pl + (t - 1) * mid..];
                let mut word =
                    decode_node(right, decoder, pair, tail, &y[(t - 1) * n..t * n])?;
                for j in (1..*t).rev() {
                    let reenc = encode_node(left, &word)?;
                    words[j] = word;
                    let mixed = seg(j);
                    let exposed: Vec<Symbol> = (0..pr)
                        .map(|i| {
                            let a = reenc.get(i).copied().unwrap_or(Symbol::ZERO);
                            field.sub(mixed[i], a)
                        })
                        .collect();
                    word = decode_node(right, decoder, pair, &exposed, &y[(j - 1) * n..j * n])?;
                }
                words[0] = word;
            }

            let mut out = Vec::with_capacity(node.total_len());
            for word in words {
                out.extend(word);
            }
            Ok(out)
        }
    }
}

fn requirements(node: &ScheduleNode, out: &mut Vec<u32>) {
    match node {
        ScheduleNode::Leaf { code, .. } => {
            let mask = node.decoder_mask() as u32;
            out.extend(std::iter::repeat_n(mask, code.syndrome_len()));
        }
        ScheduleNode::Chain { left, right, t } => {
            requirements(left, out);
            let mask = node.decoder_mask() as u32;
            let mid = left.payload_len().max(right.payload_len());
            out.extend(std::iter::repeat_n(mask, (t - 1) * mid));
            requirements(right, out);
        }
    }
}

fn push_structure(node: &ScheduleNode, out: &mut Vec<u8>) {
    match node {
        ScheduleNode::Leaf { decoders, code } => {
            out.push(0);
            out.extend_from_slice(&(decoders.len() as u32).to_le_bytes());
            for &d in decoders {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&(code.spec().block_len() as u32).to_le_bytes());
            out.extend_from_slice(&(code.spec().blocks() as u32).to_le_bytes());
            out.extend_from_slice(&(code.field().order() as u16).to_le_bytes());
            out.extend_from_slice(&mask_digest(code.profile().mask()));
        }
        ScheduleNode::Chain { left, right, t } => {
            out.push(1);
            out.extend_from_slice(&(*t as u64).to_le_bytes());
            push_structure(left, out);
            push_structure(right, out);
        }
    }
}

// ---------------------------------------------------------------------------
// Subset-addressed payloads
// ---------------------------------------------------------------------------

/// A universal code whose payload positions are each routed to a decoder
/// subset (a bitmask). Position p may go to any subset containing every
/// decoder that reads p, so each decoder can run its sweep from the buckets
/// addressed to subsets it belongs to.
#[derive(Debug, Clone)]
pub struct SubsetUniversalCode {
    code: UniversalCode,
    plan: Vec<u32>,
}

impl SubsetUniversalCode {
    pub fn new(code: UniversalCode, plan: Vec<u32>) -> Result<SubsetUniversalCode, UniversalError> {
        let reqs = code.requirement_masks()?;
        if plan.len() != reqs.len() {
            return Err(UniversalError::PlanLength {
                expected: reqs.len(),
                got: plan.len(),
            });
        }
        for (position, (&assigned, &needed)) in plan.iter().zip(&reqs).enumerate() {
            if assigned & needed != needed {
                return Err(UniversalError::PlanMismatch { position });
            }
        }
        Ok(SubsetUniversalCode { code, plan })
    }

    /// Routes each position to the smallest-cardinality subset (ties toward
    /// the smaller bitmask) that contains its readers and still has capacity.
    pub fn with_capacities(
        code: UniversalCode,
        capacities: &BTreeMap<u32, usize>,
    ) -> Result<SubsetUniversalCode, UniversalError> {
        let reqs = code.requirement_masks()?;
        let mut order: Vec<u32> = capacities.keys().copied().collect();
        order.sort_by_key(|&s| (s.count_ones(), s));
        let mut remaining = capacities.clone();
        let mut plan = Vec::with_capacity(reqs.len());
        for (position, &needed) in reqs.iter().enumerate() {
            let chosen = order
                .iter()
                .copied()
                .find(|&s| s & needed == needed && remaining[&s] > 0)
                .ok_or(UniversalError::Unroutable { position })?;
            *remaining.get_mut(&chosen).unwrap() -= 1;
            plan.push(chosen);
        }
        Ok(SubsetUniversalCode { code, plan })
    }

    pub fn code(&self) -> &UniversalCode {
        &self.code
    }

    pub fn plan(&self) -> &[u32] {
        &self.plan
    }

    /// Number of payload symbols routed to each subset.
    pub fn bucket_sizes(&self) -> BTreeMap<u32, usize> {
        let mut sizes = BTreeMap::new();
        for &s in &self.plan {
            *sizes.entry(s).or_insert(0) += 1;
        }
        sizes
    }

    pub fn encode_subset(
        &self,
        x: &[Symbol],
    ) -> Result<BTreeMap<u32, Vec<Symbol>>, UniversalError> {
        let flat = self.code.encode(x)?.flat();
        let mut buckets: BTreeMap<u32, Vec<Symbol>> = BTreeMap::new();
        for (&subset, &symbol) in self.plan.iter().zip(&flat) {
            buckets.entry(subset).or_default().push(symbol);
        }
        Ok(buckets)
    }

    /// Decodes as decoder `decoder` from the buckets it can read. Buckets
    /// addressed to subsets not containing the decoder may be absent; the
    /// positions they carry are never read by this decoder's sweep.
    pub fn decode_subset(
        &self,
        decoder: usize,
        buckets: &BTreeMap<u32, Vec<Symbol>>,
        y: &[u32],
    ) -> Result<Vec<Symbol>, UniversalError> {
        let sizes = self.bucket_sizes();
        for (&subset, &size) in &sizes {
            if subset >> decoder & 1 == 1 {
                match buckets.get(&subset) {
                    None => return Err(UniversalError::MissingBucket { subset }),
                    Some(b) if b.len() != size => {
                        return Err(UniversalError::BucketLength {
                            subset,
                            expected: size,
                            got: b.len(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        let mut cursors: BTreeMap<u32, usize> = BTreeMap::new();
        let mut flat = Vec::with_capacity(self.plan.len());
        for &subset in &self.plan {
            let cursor = cursors.entry(subset).or_insert(0);
            let symbol = if subset >> decoder & 1 == 1 {
                buckets[&subset][*cursor]
            } else {
                Symbol::ZERO
            };
            *cursor += 1;
            flat.push(symbol);
        }
        self.code.decode(decoder, &flat, y)
    }
}

// ---------------------------------------------------------------------------
// Rate allocations over subsets
// ---------------------------------------------------------------------------

/// True when every decoder's reachable rate strictly exceeds its demand:
/// sum of alloc\[A\] over subsets A containing k is greater than demands\[k\].
pub fn covers(alloc: &BTreeMap<u32, f64>, demands: &[f64]) -> bool {
    demands.iter().enumerate().all(|(k, &need)| {
        let have: f64 = alloc
            .iter()
            .filter(|(&s, _)| s >> k & 1 == 1)
            .map(|(_, &r)| r)
            .sum();
        have > need
    })
}

/// Shrinks a strictly-covering allocation uniformly so slack remains on
/// every decoder: each entry drops by gamma = (min slack / 2) / 2^K, clamped
/// at zero. The result still covers, since a decoder sees at most 2^(K-1)
/// subsets and clamping only adds back rate.
pub fn shrink_allocation(
    alloc: &BTreeMap<u32, f64>,
    demands: &[f64],
) -> Result<(BTreeMap<u32, f64>, f64), UniversalError> {
    let k1 = demands.len();
    let mut min_slack = f64::INFINITY;
    for (k, &need) in demands.iter().enumerate() {
        let have: f64 = alloc
            .iter()
            .filter(|(&s, _)| s >> k & 1 == 1)
            .map(|(_, &r)| r)
            .sum();
        if have <= need {
            return Err(UniversalError::NotCovering {
                decoder: k,
                have,
                need,
            });
        }
        min_slack = min_slack.min(have - need);
    }
    let gamma = min_slack / 2.0 / (1u64 << k1) as f64;
    let shrunk = alloc
        .iter()
        .map(|(&s, &r)| (s, (r - gamma).max(0.0)))
        .collect();
    Ok((shrunk, gamma))
}

// ---------------------------------------------------------------------------
// Schedule shape selection
// ---------------------------------------------------------------------------

/// Comparison of balanced and sequential chaining for `decoders` decoders,
/// an entropy span `h` (rate each chain level multiplies), and a relative
/// rate-overhead budget `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulePlan {
    /// Tree depth of the balanced shape: ceil(log2 K).
    pub depth: usize,
    /// Chain length per balanced level.
    pub balanced_t: usize,
    /// Total words coded by one balanced pass: t^depth.
    pub balanced_words: u128,
    /// Chain length per sequential level (K - 1 levels).
    pub sequential_t: usize,
    /// Total words coded by one sequential pass: t^(K-1).
    pub sequential_words: u128,
    /// Whether the requested overhead forced the minimum chain length 2.
    pub clamped: bool,
    /// True when the balanced shape needs no more words than the sequential.
    pub use_balanced: bool,
}

pub fn optimize_schedule(decoders: usize, h: f64, delta: f64) -> SchedulePlan {
    assert!(decoders >= 1, "at least one decoder");
    assert!(h > 0.0 && delta > 0.0, "entropy span and overhead must be positive");
    if decoders == 1 {
        return SchedulePlan {
            depth: 0,
            balanced_t: 1,
            balanced_words: 1,
            sequential_t: 1,
            sequential_words: 1,
            clamped: false,
            use_balanced: true,
        };
    }
    let depth = (usize::BITS - (decoders - 1).leading_zeros()) as usize;
    let mut clamped = false;
    let mut chain_len = |levels: usize| -> usize {
        let raw = (levels as f64 * h / delta).ceil() as usize;
        if raw < 2 {
            clamped = true;
            2
        } else {
            raw
        }
    };
    let balanced_t = chain_len(depth);
    let sequential_t = chain_len(decoders - 1);
    let balanced_words = (balanced_t as u128).pow(depth as u32);
    let sequential_words = (sequential_t as u128).pow(decoders as u32 - 1);
    SchedulePlan {
        depth,
        balanced_t,
        balanced_words,
        sequential_t,
        sequential_words,
        clamped,
        use_balanced: balanced_words <= sequential_words,
    }
}

// ---------------------------------------------------------------------------
// Chained payload wire format
//
// Layout (integers little-endian):
//   magic    4 bytes  "PSWC"
//   version  u16      1
//   kind     u8       0 = segmented payload, 1 = subset buckets
//   digest   8 bytes  schedule structure digest
//   q        u16
//   count    u32      number of segments / buckets
//   then per segment:  role u8, len u64, packed symbols
//   or  per bucket:    subset u32, len u64, packed symbols
// ---------------------------------------------------------------------------

pub const CHAIN_MAGIC: &[u8; 4] = b"PSWC";
pub const CHAIN_VERSION: u16 = 1;

fn role_byte(role: SegmentRole) -> u8 {
    match role {
        SegmentRole::Whole => 0,
        SegmentRole::Head => 1,
        SegmentRole::Mixed => 2,
        SegmentRole::Tail => 3,
    }
}

fn role_from_byte(b: u8) -> Result<SegmentRole, UniversalError> {
    Ok(match b {
        0 => SegmentRole::Whole,
        1 => SegmentRole::Head,
        2 => SegmentRole::Mixed,
        3 => SegmentRole::Tail,
        _ => return Err(UniversalError::Wire("unknown segment role")),
    })
}

fn pack_symbols(out: &mut Vec<u8>, symbols: &[Symbol], bits: usize) {
    let mut packed = vec![0u8; (symbols.len() * bits).div_ceil(8)];
    for (i, s) in symbols.iter().enumerate() {
        let base = i * bits;
        for b in 0..bits {
            if s.0 >> b & 1 == 1 {
                packed[(base + b) / 8] |= 1 << ((base + b) % 8);
            }
        }
    }
    out.extend_from_slice(&packed);
}

fn unpack_symbols(
    bytes: &[u8],
    offset: &mut usize,
    count: usize,
    bits: usize,
    q: u16,
) -> Result<Vec<Symbol>, UniversalError> {
    let need = (count * bits).div_ceil(8);
    if bytes.len() < *offset + need {
        return Err(UniversalError::Wire("truncated symbols"));
    }
    let packed = &bytes[*offset..*offset + need];
    *offset += need;
    let mut symbols = Vec::with_capacity(count);
    for i in 0..count {
        let base = i * bits;
        let mut v = 0u8;
        for b in 0..bits {
            if packed[(base + b) / 8] >> ((base + b) % 8) & 1 == 1 {
                v |= 1 << b;
            }
        }
        if v as u16 >= q {
            return Err(UniversalError::Wire("symbol out of field range"));
        }
        symbols.push(Symbol(v));
    }
    Ok(symbols)
}

fn wire_header(code: &UniversalCode, kind: u8, count: u32) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHAIN_MAGIC);
    out.extend_from_slice(&CHAIN_VERSION.to_le_bytes());
    out.push(kind);
    out.extend_from_slice(&code.structure_digest());
    out.extend_from_slice(&(code.field().order() as u16).to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out
}

fn check_wire_header<'a>(
    code: &UniversalCode,
    bytes: &'a [u8],
    kind: u8,
) -> Result<(u32, u16, &'a [u8]), UniversalError> {
    if bytes.len() < 21 {
        return Err(UniversalError::Wire("truncated header"));
    }
    if &bytes[0..4] != CHAIN_MAGIC {
        return Err(UniversalError::Wire("bad magic"));
    }
    if u16::from_le_bytes([bytes[4], bytes[5]]) != CHAIN_VERSION {
        return Err(UniversalError::Wire("unsupported version"));
    }
    if bytes[6] != kind {
        return Err(UniversalError::Wire("wrong payload kind"));
    }
    if bytes[7..15] != code.structure_digest() {
        return Err(UniversalError::WireDigest);
    }
    let q = u16::from_le_bytes([bytes[15], bytes[16]]);
    if q as u32 != code.field().order() {
        return Err(UniversalError::Wire("field order mismatch"));
    }
    let count = u32::from_le_bytes(bytes[17..21].try_into().unwrap());
    Ok((count, q, &bytes[21..]))
}

pub fn serialize_chained(code: &UniversalCode, payload: &ChainedPayload) -> Vec<u8> {
    let q = code.field().order();
    let bits = crate::sw::bits_per_symbol(q) as usize;
    let mut out = wire_header(code, 0, payload.segments().len() as u32);
    for seg in payload.segments() {
        out.push(role_byte(seg.role));
        out.extend_from_slice(&(seg.symbols.len() as u64).to_le_bytes());
        pack_symbols(&mut out, &seg.symbols, bits);
    }
    out
}

pub fn parse_chained(code: &UniversalCode, bytes: &[u8]) -> Result<ChainedPayload, UniversalError> {
    let (count, q, _) = check_wire_header(code, bytes, 0)?;
    let bits = crate::sw::bits_per_symbol(q as u32) as usize;
    let mut offset = 21usize;
    let mut segments = Vec::with_capacity(count as usize);
    for _ in 0..count {
        if bytes.len() < offset + 9 {
            return Err(UniversalError::Wire("truncated segment header"));
        }
        let role = role_from_byte(bytes[offset])?;
        let len = u64::from_le_bytes(bytes[offset + 1..offset + 9].try_into().unwrap()) as usize;
        offset += 9;
        let symbols = unpack_symbols(bytes, &mut offset, len, bits, q)?;
        segments.push(PayloadSegment { role, symbols });
    }
    if offset != bytes.len() {
        return Err(UniversalError::Wire("trailing bytes"));
    }
    let payload = ChainedPayload { segments };
    if payload.len() != code.payload_len() {
        return Err(UniversalError::PayloadLength {
            expected: code.payload_len(),
            got: payload.len(),
        });
    }
    Ok(payload)
}

pub fn serialize_subset(
    subset_code: &SubsetUniversalCode,
    buckets: &BTreeMap<u32, Vec<Symbol>>,
) -> Vec<u8> {
    let code = subset_code.code();
    let q = code.field().order();
    let bits = crate::sw::bits_per_symbol(q) as usize;
    let mut out = wire_header(code, 1, buckets.len() as u32);
    for (&subset, symbols) in buckets {
        out.extend_from_slice(&subset.to_le_bytes());
        out.extend_from_slice(&(symbols.len() as u64).to_le_bytes());
        pack_symbols(&mut out, symbols, bits);
    }
    out
}

pub fn parse_subset(
    subset_code: &SubsetUniversalCode,
    bytes: &[u8],
) -> Result<BTreeMap<u32, Vec<Symbol>>, UniversalError> {
    let code = subset_code.code();
    let (count, q, _) = check_wire_header(code, bytes, 1)?;
    let bits = crate::sw::bits_per_symbol(q as u32) as usize;
    let mut offset = 21usize;
    let mut buckets = BTreeMap::new();
    for _ in 0..count {
        if bytes.len() < offset + 12 {
            return Err(UniversalError::Wire("truncated bucket header"));
        }
        let subset = u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        let len = u64::from_le_bytes(bytes[offset + 4..offset + 12].try_into().unwrap()) as usize;
        offset += 12;
        let symbols = unpack_symbols(bytes, &mut offset, len, bits, q)?;
        if buckets.insert(subset, symbols).is_some() {
            return Err(UniversalError::Wire("duplicate subset bucket"));
        }
    }
    if offset != bytes.len() {
        return Err(UniversalError::Wire("trailing bytes"));
    }
    Ok(buckets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{IndexSetProfile, SelectionRule};
    use crate::galois::FieldSpec;
    use crate::transform::{PolarKernel, TransformSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn binary_code(m: u32, blocks: usize, low: &[usize]) -> BlockCodeSpec {
        let f = FieldSpec::new(2, 1).unwrap();
        let spec = TransformSpec::new(PolarKernel::for_field(f), m, blocks).unwrap();
        let n = 1usize << m;
        let mut mask = vec![false; n];
        for &i in low {
            mask[i] = true;
        }
        let profile =
            IndexSetProfile::from_parts(mask, vec![0.0; n], SelectionRule::Threshold { theta: 0.0 });
        BlockCodeSpec::new(spec, profile, PairDistribution::perfect(2).unwrap()).unwrap()
    }

    fn perfect_pairs(k: usize) -> Vec<PairDistribution> {
        (0..k).map(|_| PairDistribution::perfect(2).unwrap()).collect()
    }

    fn random_word(len: usize, rng: &mut ChaCha12Rng) -> Vec<Symbol> {
        (0..len).map(|_| Symbol(rng.gen_range(0..2) as u8)).collect()
    }

    fn identity_side(x: &[Symbol]) -> Vec<u32> {
        x.iter().map(|s| s.index() as u32).collect()
    }

    #[test]
    fn interior_segments_are_padded_sums() {
        // Left payload length 3, right payload length 2.
        let left = binary_code(2, 1, &[3]);
        let right = binary_code(2, 1, &[2, 3]);
        let code = UniversalCode::new(
            ScheduleNode::chain(
                ScheduleNode::leaf(vec![0], left.clone()),
                ScheduleNode::leaf(vec![1], right.clone()),
                3,
            ),
            perfect_pairs(2),
        )
        .unwrap();
        assert_eq!(code.total_len(), 12);
        assert_eq!(code.payload_len(), 3 + 2 * 3 + 2);

        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let x = random_word(12, &mut rng);
        let payload = code.encode(&x).unwrap();
        let segs = payload.segments();
        assert_eq!(segs.len(), 4);
        assert_eq!(segs[0].role, SegmentRole::Head);
        assert_eq!(segs[1].role, SegmentRole::Mixed);
        assert_eq!(segs[2].role, SegmentRole::Mixed);
        assert_eq!(segs[3].role, SegmentRole::Tail);

        assert_eq!(segs[0].symbols, left.encode(&x[0..4]).unwrap().symbols());
        assert_eq!(segs[3].symbols, right.encode(&x[8..12]).unwrap().symbols());

        // Interior j mixes the left syndrome of word j with the right
        // syndrome of word j-1, the shorter one zero-padded.
        for j in 1..3 {
            let pl = left.encode(&x[4 * j..4 * (j + 1)]).unwrap();
            let pr = right.encode(&x[4 * (j - 1)..4 * j]).unwrap();
            let expected: Vec<Symbol> = (0..3)
                .map(|i| {
                    let a = pl.symbols().get(i).copied().unwrap_or(Symbol::ZERO);
                    let b = pr.symbols().get(i).copied().unwrap_or(Symbol::ZERO);
                    Symbol(a.0 ^ b.0)
                })
                .collect();
            assert_eq!(segs[j].symbols, expected);
        }
    }

    #[test]
    fn specific_padded_sum() {
        let f = FieldSpec::new(2, 1).unwrap();
        let a = [Symbol(1), Symbol(0), Symbol(1)];
        let b = [Symbol(1), Symbol(1)];
        let mixed: Vec<Symbol> = (0..3)
            .map(|i| {
                let bi = b.get(i).copied().unwrap_or(Symbol::ZERO);
                f.add(a[i], bi)
            })
            .collect();
        assert_eq!(mixed, vec![Symbol(0), Symbol(1), Symbol(1)]);
    }

    #[test]
    fn every_decoder_recovers_through_a_two_leaf_chain() {
        for t in [1usize, 2, 3, 5] {
            for (low_l, low_r) in [(vec![1usize, 3], vec![3usize]), (vec![3], vec![1, 3])] {
                let code = UniversalCode::new(
                    ScheduleNode::chain(
                        ScheduleNode::leaf(vec![0], binary_code(2, 1, &low_l)),
                        ScheduleNode::leaf(vec![1], binary_code(2, 1, &low_r)),
                        t,
                    ),
                    perfect_pairs(2),
                )
                .unwrap();
                let mut rng = ChaCha12Rng::seed_from_u64(t as u64);
                for _ in 0..10 {
                    let x = random_word(code.total_len(), &mut rng);
                    let payload = code.encode(&x).unwrap().flat();
                    let y = identity_side(&x);
                    assert_eq!(code.decode(0, &payload, &y).unwrap(), x, "forward t={t}");
                    assert_eq!(code.decode(1, &payload, &y).unwrap(), x, "backward t={t}");
                }
            }
        }
    }

    #[test]
    fn nested_chains_recover_for_every_decoder() {
        // Three decoders: chain(chain(leaf0, leaf1, 2), leaf2, 3). The inner
        // chain spans 8 symbols, so the outer right leaf uses two blocks.
        let inner = ScheduleNode::chain(
            ScheduleNode::leaf(vec![0], binary_code(2, 1, &[2, 3])),
            ScheduleNode::leaf(vec![1], binary_code(2, 1, &[3])),
            2,
        );
        let outer = ScheduleNode::chain(
            inner,
            ScheduleNode::leaf(vec![2], binary_code(2, 2, &[1, 3])),
            3,
        );
        let code = UniversalCode::new(outer, perfect_pairs(3)).unwrap();
        assert_eq!(code.total_len(), 24);

        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..10 {
            let x = random_word(24, &mut rng);
            let payload = code.encode(&x).unwrap().flat();
            let y = identity_side(&x);
            for k in 0..3 {
                assert_eq!(code.decode(k, &payload, &y).unwrap(), x, "decoder {k}");
            }
        }
    }

    #[test]
    fn four_decoder_balanced_tree() {
        let pair01 = ScheduleNode::chain(
            ScheduleNode::leaf(vec![0], binary_code(2, 1, &[2, 3])),
            ScheduleNode::leaf(vec![1], binary_code(2, 1, &[3])),
            2,
        );
        let pair23 = ScheduleNode::chain(
            ScheduleNode::leaf(vec![2], binary_code(2, 1, &[1, 2, 3])),
            ScheduleNode::leaf(vec![3], binary_code(2, 1, &[0, 2, 3])),
            2,
        );
        let code = UniversalCode::new(ScheduleNode::chain(pair01, pair23, 2), perfect_pairs(4))
            .unwrap();
        assert_eq!(code.total_len(), 16);

        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..10 {
            let x = random_word(16, &mut rng);
            let payload = code.encode(&x).unwrap().flat();
            let y = identity_side(&x);
            for k in 0..4 {
                assert_eq!(code.decode(k, &payload, &y).unwrap(), x, "decoder {k}");
            }
        }
    }

    #[test]
    fn rate_is_bounded_by_the_chain_overhead() {
        let left = binary_code(3, 1, &[5, 6, 7]);
        let right = binary_code(3, 1, &[3, 5, 6, 7]);
        let r_left = left.rate();
        let r_right = right.rate();
        for t in [2usize, 3, 7] {
            let code = UniversalCode::new(
                ScheduleNode::chain(
                    ScheduleNode::leaf(vec![0], left.clone()),
                    ScheduleNode::leaf(vec![1], right.clone()),
                    t,
                ),
                perfect_pairs(2),
            )
            .unwrap();
            let bound = (t as f64 + 1.0) / t as f64 * r_left.max(r_right);
            assert!(
                code.rate() <= bound + 1e-12,
                "t={t}: rate {} bound {bound}",
                code.rate()
            );
        }
    }

    #[test]
    fn corrupting_the_far_end_does_not_disturb_a_sweep() {
        let code = UniversalCode::new(
            ScheduleNode::chain(
                ScheduleNode::leaf(vec![0], binary_code(2, 1, &[3])),
                ScheduleNode::leaf(vec![1], binary_code(2, 1, &[2, 3])),
                3,
            ),
            perfect_pairs(2),
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let x = random_word(code.total_len(), &mut rng);
        let payload = code.encode(&x).unwrap().flat();
        let y = identity_side(&x);

        // The forward sweep never reads the tail.
        let mut tail_hit = payload.clone();
        let len = tail_hit.len();
        tail_hit[len - 1] = Symbol(1 - tail_hit[len - 1].0);
        assert_eq!(code.decode(0, &tail_hit, &y).unwrap(), x);

        // The backward sweep never reads the head.
        let mut head_hit = payload.clone();
        head_hit[0] = Symbol(1 - head_hit[0].0);
        assert_eq!(code.decode(1, &head_hit, &y).unwrap(), x);
    }

    #[test]
    fn schedule_validation() {
        let leaf = |d: Vec<usize>| ScheduleNode::leaf(d, binary_code(2, 1, &[3]));

        // A decoder in two leaves.
        let err = UniversalCode::new(
            ScheduleNode::chain(leaf(vec![0]), leaf(vec![0]), 2),
            perfect_pairs(1),
        )
        .unwrap_err();
        assert_eq!(err, UniversalError::DuplicateDecoder { decoder: 0 });

        // A pair with no serving leaf.
        let err = UniversalCode::new(leaf(vec![0]), perfect_pairs(2)).unwrap_err();
        assert_eq!(err, UniversalError::UnservedDecoder { decoder: 1 });

        // Mismatched child lengths.
        let err = UniversalCode::new(
            ScheduleNode::chain(
                ScheduleNode::leaf(vec![0], binary_code(2, 1, &[3])),
                ScheduleNode::leaf(vec![1], binary_code(3, 1, &[7])),
                2,
            ),
            perfect_pairs(2),
        )
        .unwrap_err();
        assert_eq!(err, UniversalError::ChildLengthMismatch { left: 4, right: 8 });

        // Decode argument checks.
        let code = UniversalCode::new(leaf(vec![0]), perfect_pairs(1)).unwrap();
        assert_eq!(
            code.decode(3, &[], &[0; 4]).unwrap_err(),
            UniversalError::UnknownDecoder { decoder: 3 }
        );
        assert!(matches!(
            code.decode(0, &[], &[0; 3]).unwrap_err(),
            UniversalError::PayloadLength { .. }
        ));
    }

    #[test]
    fn requirement_masks_follow_the_sweeps() {
        let code = UniversalCode::new(
            ScheduleNode::chain(
                ScheduleNode::leaf(vec![0], binary_code(2, 1, &[3])),
                ScheduleNode::leaf(vec![1], binary_code(2, 1, &[2, 3])),
                3,
            ),
            perfect_pairs(2),
        )
        .unwrap();
        let reqs = code.requirement_masks().unwrap();
        // Head: 3 positions read only by decoder 0. Two interiors of width
        // 3 read by both. Tail: 2 positions read only by decoder 1.
        let expected: Vec<u32> = [vec![0b01; 3], vec![0b11; 6], vec![0b10; 2]].concat();
        assert_eq!(reqs, expected);
    }

    #[test]
    fn subset_routing_round_trip() {
        let code = UniversalCode::new(
            ScheduleNode::chain(
                ScheduleNode::leaf(vec![0], binary_code(2, 1, &[3])),
                ScheduleNode::leaf(vec![1], binary_code(2, 1, &[2, 3])),
                3,
            ),
            perfect_pairs(2),
        )
        .unwrap();

        // Exact-fit capacities: each region goes to its tightest subset.
        let mut capacities = BTreeMap::new();
        capacities.insert(0b01u32, 3usize);
        capacities.insert(0b10u32, 2usize);
        capacities.insert(0b11u32, 6usize);
        let subset_code = SubsetUniversalCode::with_capacities(code.clone(), &capacities).unwrap();
        assert_eq!(
            subset_code.plan(),
            [vec![0b01; 3], vec![0b11; 6], vec![0b10; 2]].concat()
        );

        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let x = random_word(code.total_len(), &mut rng);
        let y = identity_side(&x);
        let buckets = subset_code.encode_subset(&x).unwrap();
        assert_eq!(buckets.len(), 3);

        // Each decoder reads only the buckets addressed to it.
        for k in 0..2 {
            let visible: BTreeMap<u32, Vec<Symbol>> = buckets
                .iter()
                .filter(|(&s, _)| s >> k & 1 == 1)
                .map(|(&s, v)| (s, v.clone()))
                .collect();
            assert_eq!(subset_code.decode_subset(k, &visible, &y).unwrap(), x);
        }

        // Dropping a bucket the decoder needs is an error.
        let mut missing = buckets.clone();
        missing.remove(&0b11);
        assert_eq!(
            subset_code.decode_subset(0, &missing, &y).unwrap_err(),
            UniversalError::MissingBucket { subset: 0b11 }
        );
    }

    #[test]
    fn subset_routing_falls_back_to_wider_subsets() {
        let code = UniversalCode::new(
            ScheduleNode::chain(
                ScheduleNode::leaf(vec![0], binary_code(2, 1, &[3])),
                ScheduleNode::leaf(vec![1], binary_code(2, 1, &[3])),
                2,
            ),
            perfect_pairs(2),
        )
        .unwrap();

        // Only the full-set bucket has room: everything routes there.
        let mut capacities = BTreeMap::new();
        capacities.insert(0b11u32, code.payload_len());
        let subset_code = SubsetUniversalCode::with_capacities(code.clone(), &capacities).unwrap();
        assert!(subset_code.plan().iter().all(|&s| s == 0b11));

        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = random_word(code.total_len(), &mut rng);
        let y = identity_side(&x);
        let buckets = subset_code.encode_subset(&x).unwrap();
        for k in 0..2 {
            assert_eq!(subset_code.decode_subset(k, &buckets, &y).unwrap(), x);
        }

        // Too little capacity is detected position by position.
        let mut tight = BTreeMap::new();
        tight.insert(0b11u32, code.payload_len() - 1);
        assert!(matches!(
            SubsetUniversalCode::with_capacities(code, &tight).unwrap_err(),
            UniversalError::Unroutable { .. }
        ));
    }

    #[test]
    fn plan_must_contain_the_readers() {
        let code = UniversalCode::new(
            ScheduleNode::chain(
                ScheduleNode::leaf(vec![0], binary_code(2, 1, &[3])),
                ScheduleNode::leaf(vec![1], binary_code(2, 1, &[3])),
                2,
            ),
            perfect_pairs(2),
        )
        .unwrap();
        let mut plan = vec![0b11u32; code.payload_len()];
        plan[4] = 0b01; // an interior position readable only by decoder 0
        assert_eq!(
            SubsetUniversalCode::new(code, plan).unwrap_err(),
            UniversalError::PlanMismatch { position: 4 }
        );
    }

    #[test]
    fn covering_allocations() {
        let mut alloc = BTreeMap::new();
        alloc.insert(0b01u32, 0.3);
        alloc.insert(0b10u32, 0.15);
        alloc.insert(0b11u32, 0.2);
        assert!(covers(&alloc, &[0.45, 0.3]));
        assert!(!covers(&alloc, &[0.5, 0.3]), "coverage must be strict");
        assert!(!covers(&alloc, &[0.45, 0.4]));
    }

    #[test]
    fn shrinking_preserves_coverage() {
        // One decoder, slack 0.1: gamma = (0.1 / 2) / 2 = 0.025.
        let mut alloc = BTreeMap::new();
        alloc.insert(0b1u32, 0.5);
        let (shrunk, gamma) = shrink_allocation(&alloc, &[0.4]).unwrap();
        assert!((gamma - 0.025).abs() < 1e-15);
        assert!((shrunk[&0b1] - 0.475).abs() < 1e-15);
        assert!(covers(&shrunk, &[0.4]));

        // Tiny entries clamp at zero instead of going negative.
        let mut alloc = BTreeMap::new();
        alloc.insert(0b01u32, 0.5);
        alloc.insert(0b11u32, 0.001);
        alloc.insert(0b10u32, 0.4);
        let demands = [0.2, 0.2];
        let (shrunk, gamma) = shrink_allocation(&alloc, &demands).unwrap();
        assert!(gamma > 0.001);
        assert_eq!(shrunk[&0b11], 0.0);
        assert!(covers(&shrunk, &demands));

        // A non-covering allocation is rejected.
        let mut alloc = BTreeMap::new();
        alloc.insert(0b1u32, 0.4);
        assert!(matches!(
            shrink_allocation(&alloc, &[0.4]),
            Err(UniversalError::NotCovering { decoder: 0, .. })
        ));
    }

    #[test]
    fn schedule_shapes() {
        // Two decoders, one level: t = ceil(0.5 / 0.1) = 5.
        let plan = optimize_schedule(2, 0.5, 0.1);
        assert_eq!(plan.depth, 1);
        assert_eq!(plan.balanced_t, 5);
        assert_eq!(plan.sequential_t, 5);
        assert!(!plan.clamped);
        assert!(plan.use_balanced);

        // Four decoders: balanced needs 2 levels of t = 4 (16 words),
        // sequential needs 3 levels of t = 6 (216 words).
        let plan = optimize_schedule(4, 0.5, 0.25);
        assert_eq!(plan.depth, 2);
        assert_eq!(plan.balanced_t, 4);
        assert_eq!(plan.balanced_words, 16);
        assert_eq!(plan.sequential_t, 6);
        assert_eq!(plan.sequential_words, 216);
        assert!(plan.use_balanced);

        // A generous overhead budget clamps to the minimum chain length.
        let plan = optimize_schedule(2, 0.5, 3.0);
        assert_eq!(plan.balanced_t, 2);
        assert!(plan.clamped);

        // One decoder needs no chaining at all.
        let plan = optimize_schedule(1, 0.5, 0.1);
        assert_eq!(plan.depth, 0);
        assert_eq!(plan.balanced_words, 1);
    }

    #[test]
    fn chained_wire_round_trip() {
        let code = UniversalCode::new(
            ScheduleNode::chain(
                ScheduleNode::leaf(vec![0], binary_code(2, 1, &[3])),
                ScheduleNode::leaf(vec![1], binary_code(2, 1, &[2, 3])),
                3,
            ),
            perfect_pairs(2),
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let x = random_word(code.total_len(), &mut rng);
        let payload = code.encode(&x).unwrap();
        let wire = serialize_chained(&code, &payload);
        assert_eq!(wire, serialize_chained(&code, &payload));
        assert_eq!(parse_chained(&code, &wire).unwrap(), payload);

        // A different schedule refuses the blob.
        let other = UniversalCode::new(
            ScheduleNode::chain(
                ScheduleNode::leaf(vec![0], binary_code(2, 1, &[3])),
                ScheduleNode::leaf(vec![1], binary_code(2, 1, &[2, 3])),
                4,
            ),
            perfect_pairs(2),
        )
        .unwrap();
        assert_eq!(parse_chained(&other, &wire).unwrap_err(), UniversalError::WireDigest);

        let mut truncated = wire.clone();
        truncated.pop();
        assert!(parse_chained(&code, &truncated).is_err());
    }

    #[test]
    fn subset_wire_round_trip() {
        let code = UniversalCode::new(
            ScheduleNode::chain(
                ScheduleNode::leaf(vec![0], binary_code(2, 1, &[3])),
                ScheduleNode::leaf(vec![1], binary_code(2, 1, &[2, 3])),
                2,
            ),
            perfect_pairs(2),
        )
        .unwrap();
        let mut capacities = BTreeMap::new();
        capacities.insert(0b01u32, 3usize);
        capacities.insert(0b10u32, 2usize);
        capacities.insert(0b11u32, 3usize);
        let subset_code = SubsetUniversalCode::with_capacities(code, &capacities).unwrap();

        let mut rng = ChaCha12Rng::seed_from_u64(19);
        let x = random_word(subset_code.code().total_len(), &mut rng);
        let buckets = subset_code.encode_subset(&x).unwrap();
        let wire = serialize_subset(&subset_code, &buckets);
        assert_eq!(parse_subset(&subset_code, &wire).unwrap(), buckets);

        let mut bad = wire.clone();
        bad[7] ^= 0x55;
        assert_eq!(
            parse_subset(&subset_code, &bad).unwrap_err(),
            UniversalError::WireDigest
        );
    }
}
