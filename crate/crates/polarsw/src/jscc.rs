//! Joint source-channel coding over a broadcast channel.
//!
//! One transmitter serves K receivers; receiver k sees the channel output
//! V_k and its own source side information Y_k. The source layer is a
//! subset-addressed universal code; this module supplies the channel layer
//! and glues the two together:
//!
//! - The channel input blocks are built through the same polarizing
//!   transform. Against the input prior and each user's channel, every
//!   transform coordinate is classified: I_k collects the coordinates user k
//!   can decode that also look uniform a priori (fresh-information carriers),
//!   L_U the coordinates already determined by the prior, and the rest carry
//!   shared filler. The partition cell I_A holds the coordinates decodable by
//!   exactly the users in A, so a payload symbol routed to subset A is placed
//!   in an I_A slot and read by every user in A.
//! - Payload symbols are linear functionals of the source word. A symbol
//!   linearly dependent on earlier ones would correlate channel inputs, so
//!   the rank ledger flags it at construction; its slot carries shared filler
//!   instead and every decoder rebuilds the symbol from the stored
//!   combination of earlier payload symbols.
//! - Unfilled slots draw from a seed shared with the receivers, and L_U
//!   slots take the prior's most likely value given the preceding
//!   coordinates; decoders replay both streams exactly.
//!
//! Decoding runs two evidence sets through one successive-cancellation pass
//! per block — the user's channel posterior and the prior-only posterior —
//! committing known values at filler slots, the prior argmax at L_U slots,
//! and the channel argmax at payload slots, then reassembles the subset
//! buckets and hands them to the source layer.

use crate::construction::{derive_seed, ChannelSetBundle};
use crate::galois::{FieldSpec, Symbol};
use crate::source::{BroadcastChannel, PairDistribution, SourceError, MASS_TOLERANCE};
use crate::sw::{argmax_symbol, pair_evidence, ScDecoder, SwError};
use crate::transform::PolarKernel;
use crate::universal::{ScheduleNode, SubsetUniversalCode, UniversalCode, UniversalError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum JsccError {
    #[error("source code and channel kernel use different fields")]
    FieldMismatch,
    #[error("channel serves {channel} users but the source code serves {code}")]
    UserCountMismatch { channel: usize, code: usize },
    #[error("prior has {got} entries, expected {expected}")]
    PriorLength { expected: usize, got: usize },
    #[error("prior is not a distribution (sum {sum})")]
    BadPrior { sum: f64 },
    #[error("index sets sized for block length {sets}, expected {expected}")]
    SetLength { expected: usize, sets: usize },
    #[error("bandwidth expansion must be positive, got {kappa}")]
    BadKappa { kappa: f64 },
    #[error(
        "requested {requested} channel symbols per source symbol but block \
         rounding realizes {realized}; lengthen the source code"
    )]
    KappaMismatch { requested: f64, realized: f64 },
    #[error("channel capacity cannot carry the payload: {report}")]
    CapacityShortfall { report: String },
    #[error("decoder {decoder} out of range for {count} users")]
    UnknownDecoder { decoder: usize, count: usize },
    #[error("input length {got}, expected {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("universal code: {0}")]
    Universal(#[from] UniversalError),
    #[error("block code: {0}")]
    Sw(#[from] SwError),
    #[error("source model: {0}")]
    Source(#[from] SourceError),
}

// ---------------------------------------------------------------------------
// Payload functionals and the rank ledger
// ---------------------------------------------------------------------------

/// Sparse linear functional of the source word, in transform coordinates:
/// map from global coordinate index to a nonzero coefficient.
pub type Functional = BTreeMap<usize, Symbol>;

/// The payload symbols as linear functionals of the source word. Leaf
/// syndromes are single coordinates; chain interiors are sums of two child
/// functionals, so weights stay small.
pub fn payload_functionals(node: &ScheduleNode) -> Vec<Functional> {
    match node {
        ScheduleNode::Leaf { code, .. } => {
            let n = code.spec().block_len();
            let mask = code.profile().mask();
            let mut rows = Vec::with_capacity(code.syndrome_len());
            for b in 0..code.spec().blocks() {
                for (i, &low) in mask.iter().enumerate() {
                    if !low {
                        rows.push(BTreeMap::from([(b * n + i, Symbol::ONE)]));
                    }
                }
            }
            rows
        }
        ScheduleNode::Chain { left, right, t } => {
            let n = left.total_len();
            let left_rows = payload_functionals(left);
            let right_rows = payload_functionals(right);
            let pl = left_rows.len();
            let pr = right_rows.len();
            let mid = pl.max(pr);
            let shift = |row: &Functional, by: usize| -> Functional {
                row.iter().map(|(&c, &v)| (c + by, v)).collect()
            };
            let mut rows = Vec::with_capacity(pl + (t - 1) * mid + pr);
            rows.extend(left_rows.iter().map(|r| shift(r, 0)));
            for j in 1..*t {
                for i in 0..mid {
                    let mut row = Functional::new();
                    if i < pl {
                        row = shift(&left_rows[i], j * n);
                    }
                    if i < pr {
                        for (&c, &v) in shift(&right_rows[i], (j - 1) * n).iter() {
                            row.insert(c, v);
                        }
                    }
                    rows.push(row);
                }
            }
            rows.extend(right_rows.iter().map(|r| shift(r, (t - 1) * n)));
            rows
        }
    }
}

/// Linear-independence record of the payload positions. A dependent position
/// stores the combination of earlier independent positions that reproduces
/// its symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct RankLedger {
    rank: usize,
    combos: BTreeMap<usize, Vec<(usize, Symbol)>>,
}

impl RankLedger {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dependent_count(&self) -> usize {
        self.combos.len()
    }

    pub fn is_dependent(&self, position: usize) -> bool {
        self.combos.contains_key(&position)
    }

    pub fn combo(&self, position: usize) -> Option<&[(usize, Symbol)]> {
        self.combos.get(&position).map(Vec::as_slice)
    }

    pub fn dependent_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.combos.keys().copied()
    }

    /// Rewrites every dependent entry of a flat payload vector from its
    /// stored combination. Combinations only reference earlier positions,
    /// so one forward pass suffices.
    pub fn reconstruct(&self, field: &FieldSpec, payload: &mut [Symbol]) {
        for (&pos, combo) in &self.combos {
            let mut acc = Symbol::ZERO;
            for &(k, coeff) in combo {
                acc = field.add(acc, field.mul(coeff, payload[k]));
            }
            payload[pos] = acc;
        }
    }
}

fn sub_scaled(field: &FieldSpec, target: &mut Functional, src: &Functional, factor: Symbol) {
    for (&k, &c) in src {
        let cur = target.get(&k).copied().unwrap_or(Symbol::ZERO);
        let next = field.sub(cur, field.mul(factor, c));
        if next == Symbol::ZERO {
            target.remove(&k);
        } else {
            target.insert(k, next);
        }
    }
}

fn scaled(field: &FieldSpec, row: &Functional, factor: Symbol) -> Functional {
    row.iter().map(|(&k, &c)| (k, field.mul(factor, c))).collect()
}

/// Gaussian elimination over the sparse functionals, in payload order, with
/// a pivot map keyed by leading coordinate.
pub fn rank_ledger(field: &FieldSpec, rows: &[Functional]) -> RankLedger {
    let mut pivots: BTreeMap<usize, (Functional, Functional)> = BTreeMap::new();
    let mut combos = BTreeMap::new();
    let mut rank = 0usize;
    for (j, original) in rows.iter().enumerate() {
        let mut row: Functional = original
            .iter()
            .filter(|(_, &c)| c != Symbol::ZERO)
            .map(|(&k, &c)| (k, c))
            .collect();
        let mut aug = Functional::from([(j, Symbol::ONE)]);
        loop {
            let Some((&lead, &coeff)) = row.iter().next() else {
                // 0 = sum(aug_k * row_k) with aug_j = 1, so the j-th payload
                // symbol equals -sum over the earlier terms.
                let combo: Vec<(usize, Symbol)> = aug
                    .iter()
                    .filter(|(&k, _)| k != j)
                    .map(|(&k, &c)| (k, field.neg(c)))
                    .collect();
                combos.insert(j, combo);
                break;
            };
            if let Some((prow, paug)) = pivots.get(&lead) {
                let (prow, paug) = (prow.clone(), paug.clone());
                sub_scaled(field, &mut row, &prow, coeff);
                sub_scaled(field, &mut aug, &paug, coeff);
            } else {
                let inv = field.inv(coeff).expect("leading coefficient is nonzero");
                pivots.insert(lead, (scaled(field, &row, inv), scaled(field, &aug, inv)));
                rank += 1;
                break;
            }
        }
    }
    RankLedger { rank, combos }
}

// ---------------------------------------------------------------------------
// The transmission system
// ---------------------------------------------------------------------------

/// What one channel-coordinate slot carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    /// The payload symbol at this flat position (or shared filler, when the
    /// rank ledger flagged the position dependent).
    Payload { position: usize },
    /// A symbol from the shared seed stream.
    SharedFill,
    /// The prior's most likely value given all preceding coordinates.
    Deterministic,
}

/// Everything the encoder emits for one source word.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionRecord {
    /// Channel input symbols, `channel_blocks * N` of them.
    pub channel_input: Vec<Symbol>,
    /// The committed transform coordinates, same length.
    pub coordinates: Vec<Symbol>,
    /// Provenance of each coordinate slot.
    pub provenance: Vec<SlotKind>,
    /// Channel symbols per source symbol actually realized.
    pub realized_kappa: f64,
}

impl TransmissionRecord {
    /// Compact, versioned description for logs and bug reports.
    pub fn debug_dump(&self) -> String {
        let mut payload = 0usize;
        let mut fill = 0usize;
        let mut det = 0usize;
        for slot in &self.provenance {
            match slot {
                SlotKind::Payload { .. } => payload += 1,
                SlotKind::SharedFill => fill += 1,
                SlotKind::Deterministic => det += 1,
            }
        }
        format!(
            "jscc-record v1\nchannel_symbols={}\nrealized_kappa={}\n\
             payload_slots={payload}\nshared_fill_slots={fill}\ndeterministic_slots={det}",
            self.channel_input.len(),
            self.realized_kappa,
        )
    }
}

/// Per-user accounting of payload demand against reachable channel slots.
#[derive(Debug, Clone, PartialEq)]
pub struct UserMargin {
    pub decoder: usize,
    /// Payload symbols routed to subsets containing this user.
    pub payload_symbols: usize,
    /// Channel slots in partition cells containing this user.
    pub channel_slots: usize,
    pub slack: i64,
    pub mutual_information_bits: f64,
}

/// A complete joint source-channel transmission system.
#[derive(Debug, Clone)]
pub struct JsccSystem {
    subset_code: SubsetUniversalCode,
    channel: BroadcastChannel,
    prior: Vec<f64>,
    kernel: PolarKernel,
    m: u32,
    chan_blocks: usize,
    partition: Vec<u32>,
    low_prior: Vec<bool>,
    info_sets: Vec<Vec<bool>>,
    capacities: BTreeMap<u32, usize>,
    slots: Vec<SlotKind>,
    ledger: RankLedger,
    decode_pairs: Vec<PairDistribution>,
    prior_evidence: Vec<f64>,
    shared_seed: u64,
    realized_kappa: f64,
}

const FILL_STREAM_TAG: u64 = 0x6a66_696c;

impl JsccSystem {
    /// Assembles a system from a universal source code, the broadcast
    /// channel, the channel-input prior with its index sets, and the target
    /// bandwidth expansion `kappa` (channel symbols per source symbol).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        code: UniversalCode,
        channel: BroadcastChannel,
        prior: Vec<f64>,
        kernel: PolarKernel,
        m: u32,
        sets: &ChannelSetBundle,
        kappa: f64,
        shared_seed: u64,
    ) -> Result<JsccSystem, JsccError> {
        let q = kernel.field().order() as usize;
        let n = 1usize << m;
        if code.field() != kernel.field() || channel.input_size() != q {
            return Err(JsccError::FieldMismatch);
        }
        if channel.user_count() != code.decoder_count() {
            return Err(JsccError::UserCountMismatch {
                channel: channel.user_count(),
                code: code.decoder_count(),
            });
        }
        if prior.len() != q {
            return Err(JsccError::PriorLength {
                expected: q,
                got: prior.len(),
            });
        }
        let sum: f64 = prior.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE || prior.iter().any(|&p| p < 0.0) {
            return Err(JsccError::BadPrior { sum });
        }
        if sets.per_user.len() != channel.user_count()
            || sets.high_entropy.len() != n
            || sets.low_prior.len() != n
            || sets.per_user.iter().any(|p| p.block_len() != n)
        {
            return Err(JsccError::SetLength {
                expected: n,
                sets: sets.high_entropy.len(),
            });
        }
        if !kappa.is_finite() || kappa <= 0.0 {
            return Err(JsccError::BadKappa { kappa });
        }

        let info_sets: Vec<Vec<bool>> = sets
            .per_user
            .iter()
            .map(|p| {
                p.mask()
                    .iter()
                    .zip(&sets.high_entropy)
                    .map(|(&low, &high)| low && high)
                    .collect()
            })
            .collect();
        let partition: Vec<u32> = (0..n)
            .map(|i| {
                info_sets
                    .iter()
                    .enumerate()
                    .fold(0u32, |mask, (k, set)| mask | (set[i] as u32) << k)
            })
            .collect();

        let n_src = code.total_len();
        let chan_blocks = ((kappa * n_src as f64 / n as f64).ceil() as usize).max(1);
        let realized_kappa = (chan_blocks * n) as f64 / n_src as f64;
        if realized_kappa > kappa * 1.01 {
            return Err(JsccError::KappaMismatch {
                requested: kappa,
                realized: realized_kappa,
            });
        }

        let mut cell_counts: BTreeMap<u32, usize> = BTreeMap::new();
        for &cell in &partition {
            if cell != 0 {
                *cell_counts.entry(cell).or_insert(0) += 1;
            }
        }
        let capacities: BTreeMap<u32, usize> = cell_counts
            .iter()
            .map(|(&cell, &count)| (cell, count * chan_blocks))
            .collect();

        let reqs = code.requirement_masks()?;
        let subset_code = match SubsetUniversalCode::with_capacities(code, &capacities) {
            Ok(sc) => sc,
            Err(UniversalError::Unroutable { .. }) => {
                return Err(JsccError::CapacityShortfall {
                    report: capacity_report(&reqs, &capacities),
                });
            }
            Err(e) => return Err(e.into()),
        };

        let rows = payload_functionals(subset_code.code().root());
        let ledger = rank_ledger(kernel.field(), &rows);

        // Route each subset bucket into its partition cells, block-major.
        let bucket_sizes = subset_code.bucket_sizes();
        let mut assigned_per_cell: BTreeMap<u32, usize> = BTreeMap::new();
        let mut bucket_offsets: BTreeMap<u32, usize> = BTreeMap::new();
        // Flat payload positions of each bucket, in plan order.
        let mut bucket_positions: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (pos, &subset) in subset_code.plan().iter().enumerate() {
            bucket_positions.entry(subset).or_default().push(pos);
        }
        let mut slots = Vec::with_capacity(chan_blocks * n);
        for _block in 0..chan_blocks {
            for (&cell, &prior_determined) in partition.iter().zip(&sets.low_prior) {
                if cell != 0 {
                    let used = assigned_per_cell.entry(cell).or_insert(0);
                    let offset = bucket_offsets.entry(cell).or_insert(0);
                    let positions = bucket_positions.get(&cell);
                    let size = bucket_sizes.get(&cell).copied().unwrap_or(0);
                    if *offset < size {
                        let pos = positions.expect("bucket exists")[*offset];
                        slots.push(SlotKind::Payload { position: pos });
                        *offset += 1;
                    } else {
                        slots.push(SlotKind::SharedFill);
                    }
                    *used += 1;
                } else if prior_determined {
                    slots.push(SlotKind::Deterministic);
                } else {
                    slots.push(SlotKind::SharedFill);
                }
            }
        }
        debug_assert!(bucket_offsets
            .iter()
            .all(|(cell, &o)| o == bucket_sizes.get(cell).copied().unwrap_or(0)));

        let decode_pairs = (0..channel.user_count())
            .map(|k| channel.marginal(k)?.pair_with_prior(&prior))
            .collect::<Result<Vec<_>, _>>()?;
        let mut prior_evidence = Vec::with_capacity(n * q);
        for _ in 0..n {
            prior_evidence.extend_from_slice(&prior);
        }

        Ok(JsccSystem {
            subset_code,
            channel,
            prior,
            kernel,
            m,
            chan_blocks,
            partition,
            low_prior: sets.low_prior.clone(),
            info_sets,
            capacities,
            slots,
            ledger,
            decode_pairs,
            prior_evidence,
            shared_seed,
            realized_kappa,
        })
    }

    pub fn block_len(&self) -> usize {
        1usize << self.m
    }

    pub fn channel_blocks(&self) -> usize {
        self.chan_blocks
    }

    pub fn channel_symbols(&self) -> usize {
        self.chan_blocks * self.block_len()
    }

    pub fn source_len(&self) -> usize {
        self.subset_code.code().total_len()
    }

    pub fn realized_kappa(&self) -> f64 {
        self.realized_kappa
    }

    pub fn subset_code(&self) -> &SubsetUniversalCode {
        &self.subset_code
    }

    pub fn ledger(&self) -> &RankLedger {
        &self.ledger
    }

    pub fn info_sets(&self) -> &[Vec<bool>] {
        &self.info_sets
    }

    /// Coordinates whose value the input prior already determines.
    pub fn low_prior(&self) -> &[bool] {
        &self.low_prior
    }

    pub fn partition(&self) -> &[u32] {
        &self.partition
    }

    pub fn user_count(&self) -> usize {
        self.decode_pairs.len()
    }

    /// Payload demand against reachable slots, per user.
    pub fn margins(&self) -> Vec<UserMargin> {
        let bucket_sizes = self.subset_code.bucket_sizes();
        (0..self.user_count())
            .map(|k| {
                let payload_symbols: usize = bucket_sizes
                    .iter()
                    .filter(|(&s, _)| s >> k & 1 == 1)
                    .map(|(_, &c)| c)
                    .sum();
                let channel_slots: usize = self
                    .capacities
                    .iter()
                    .filter(|(&s, _)| s >> k & 1 == 1)
                    .map(|(_, &c)| c)
                    .sum();
                UserMargin {
                    decoder: k,
                    payload_symbols,
                    channel_slots,
                    slack: channel_slots as i64 - payload_symbols as i64,
                    mutual_information_bits: self
                        .channel
                        .mutual_information_bits(&self.prior, k)
                        .expect("user index in range"),
                }
            })
            .collect()
    }

    fn filler_rng(&self) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(derive_seed(self.shared_seed, FILL_STREAM_TAG))
    }

    /// Maps a source word to channel inputs.
    pub fn encode(&self, x: &[Symbol]) -> Result<TransmissionRecord, JsccError> {
        if x.len() != self.source_len() {
            return Err(JsccError::InputLength {
                expected: self.source_len(),
                got: x.len(),
            });
        }
        let q = self.kernel.field().order() as usize;
        let n = self.block_len();
        let payload = self.subset_code.code().encode(x)?.flat();
        let mut fill = self.filler_rng();
        let mut engine = ScDecoder::new(&self.kernel, self.m);

        let mut channel_input = Vec::with_capacity(self.channel_symbols());
        let mut coordinates = Vec::with_capacity(self.channel_symbols());
        for block in 0..self.chan_blocks {
            let mut assigned = vec![Symbol::ZERO; n];
            let mut deterministic = vec![false; n];
            for i in 0..n {
                match self.slots[block * n + i] {
                    SlotKind::Payload { position } => {
                        assigned[i] = if self.ledger.is_dependent(position) {
                            Symbol(fill.gen_range(0..q) as u8)
                        } else {
                            payload[position]
                        };
                    }
                    SlotKind::SharedFill => {
                        assigned[i] = Symbol(fill.gen_range(0..q) as u8);
                    }
                    SlotKind::Deterministic => deterministic[i] = true,
                }
            }
            let word = engine.run(&self.prior_evidence, |i, posterior| {
                let d = if deterministic[i] {
                    argmax_symbol(posterior)
                } else {
                    assigned[i]
                };
                coordinates.push(d);
                d
            });
            channel_input.extend(word);
        }
        Ok(TransmissionRecord {
            channel_input,
            coordinates,
            provenance: self.slots.clone(),
            realized_kappa: self.realized_kappa,
        })
    }

    /// Sends a record through the broadcast channel: one output sequence per
    /// user.
    pub fn transmit<R: Rng>(&self, record: &TransmissionRecord, rng: &mut R) -> Vec<Vec<u32>> {
        self.channel.transmit(&record.channel_input, rng)
    }

    /// Recovers the source word as user `decoder` from its channel output
    /// `v` and source side information `y`.
    pub fn decode(&self, decoder: usize, v: &[u32], y: &[u32]) -> Result<Vec<Symbol>, JsccError> {
        if decoder >= self.user_count() {
            return Err(JsccError::UnknownDecoder {
                decoder,
                count: self.user_count(),
            });
        }
        if v.len() != self.channel_symbols() {
            return Err(JsccError::InputLength {
                expected: self.channel_symbols(),
                got: v.len(),
            });
        }
        if y.len() != self.source_len() {
            return Err(JsccError::InputLength {
                expected: self.source_len(),
                got: y.len(),
            });
        }
        let q = self.kernel.field().order() as usize;
        let n = self.block_len();
        let field = self.kernel.field().clone();
        let pair = &self.decode_pairs[decoder];
        let mut fill = self.filler_rng();
        let mut engine = ScDecoder::new(&self.kernel, self.m);

        let mut decided = Vec::with_capacity(self.channel_symbols());
        for block in 0..self.chan_blocks {
            let evidence = pair_evidence(pair, &v[block * n..(block + 1) * n])?;
            engine.run_dual(&evidence, &self.prior_evidence, |i, chan_post, prior_post| {
                let d = match self.slots[block * n + i] {
                    SlotKind::Payload { position } => {
                        if self.ledger.is_dependent(position) {
                            Symbol(fill.gen_range(0..q) as u8)
                        } else {
                            argmax_symbol(chan_post)
                        }
                    }
                    SlotKind::SharedFill => Symbol(fill.gen_range(0..q) as u8),
                    SlotKind::Deterministic => argmax_symbol(prior_post),
                };
                decided.push(d);
                d
            });
        }

        // Pull the payload back out of the coordinate decisions, rebuild
        // dependent positions, and regroup into subset buckets.
        let mut payload = vec![Symbol::ZERO; self.subset_code.plan().len()];
        for (slot_index, slot) in self.slots.iter().enumerate() {
            if let SlotKind::Payload { position } = slot {
                payload[*position] = decided[slot_index];
            }
        }
        self.ledger.reconstruct(&field, &mut payload);
        let mut buckets: BTreeMap<u32, Vec<Symbol>> = BTreeMap::new();
        for (pos, &subset) in self.subset_code.plan().iter().enumerate() {
            buckets.entry(subset).or_default().push(payload[pos]);
        }
        Ok(self.subset_code.decode_subset(decoder, &buckets, y)?)
    }
}

fn capacity_report(reqs: &[u32], capacities: &BTreeMap<u32, usize>) -> String {
    let mut demand: BTreeMap<u32, usize> = BTreeMap::new();
    for &r in reqs {
        *demand.entry(r).or_insert(0) += 1;
    }
    let lines: Vec<String> = demand
        .iter()
        .map(|(&readers, &need)| {
            let reachable: usize = capacities
                .iter()
                .filter(|(&cell, _)| cell & readers == readers)
                .map(|(_, &c)| c)
                .sum();
            format!("readers {readers:#b}: need {need}, reachable slots {reachable}")
        })
        .collect();
    let total_need = reqs.len();
    let total_have: usize = capacities.values().sum();
    format!("{}; total need {total_need}, total slots {total_have}", lines.join("; "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{channel_sets, IndexSetProfile, SelectionRule, DEFAULT_STATE_BUDGET};
    use crate::source::DiscreteChannel;
    use crate::sw::BlockCodeSpec;
    use crate::transform::TransformSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn binary_kernel() -> PolarKernel {
        PolarKernel::for_field(FieldSpec::new(2, 1).unwrap())
    }

    fn leaf_code(m: u32, blocks: usize, low: &[usize]) -> BlockCodeSpec {
        let spec = TransformSpec::new(binary_kernel(), m, blocks).unwrap();
        let n = 1usize << m;
        let mut mask = vec![false; n];
        for &i in low {
            mask[i] = true;
        }
        let profile =
            IndexSetProfile::from_parts(mask, vec![0.0; n], SelectionRule::Threshold { theta: 0.0 });
        BlockCodeSpec::new(spec, profile, PairDistribution::perfect(2).unwrap()).unwrap()
    }

    fn two_user_chain(low_l: &[usize], low_r: &[usize], t: usize) -> UniversalCode {
        UniversalCode::new(
            ScheduleNode::chain(
                ScheduleNode::leaf(vec![0], leaf_code(3, 1, low_l)),
                ScheduleNode::leaf(vec![1], leaf_code(3, 1, low_r)),
                t,
            ),
            vec![
                PairDistribution::perfect(2).unwrap(),
                PairDistribution::perfect(2).unwrap(),
            ],
        )
        .unwrap()
    }

    fn identity_broadcast(users: usize) -> BroadcastChannel {
        BroadcastChannel::product(
            (0..users).map(|_| DiscreteChannel::identity(2).unwrap()).collect(),
        )
        .unwrap()
    }

    fn noiseless_system(code: UniversalCode, m: u32, kappa: f64) -> JsccSystem {
        let users = code.decoder_count();
        let channel = identity_broadcast(users);
        let sets = channel_sets(
            &[0.5, 0.5],
            &channel,
            &binary_kernel(),
            m,
            1e-9,
            1e-9,
            DEFAULT_STATE_BUDGET,
        )
        .unwrap();
        JsccSystem::new(
            code,
            channel,
            vec![0.5, 0.5],
            binary_kernel(),
            m,
            &sets,
            kappa,
            424242,
        )
        .unwrap()
    }

    fn random_word(len: usize, rng: &mut ChaCha12Rng) -> Vec<Symbol> {
        (0..len).map(|_| Symbol(rng.gen_range(0..2) as u8)).collect()
    }

    fn identity_side(x: &[Symbol]) -> Vec<u32> {
        x.iter().map(|s| s.index() as u32).collect()
    }

    #[test]
    fn noiseless_round_trip_for_every_user() {
        // Distinct masks, t = 2: source length 16, payload 5 + 5 + 4 = 14.
        let code = two_user_chain(&[5, 6, 7], &[3, 5, 6, 7], 2);
        assert_eq!(code.total_len(), 16);
        assert_eq!(code.payload_len(), 14);
        let system = noiseless_system(code, 3, 1.0);
        assert_eq!(system.channel_blocks(), 2);
        assert!((system.realized_kappa() - 1.0).abs() < 1e-12);

        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..10 {
            let x = random_word(16, &mut rng);
            let record = system.encode(&x).unwrap();
            let outputs = system.transmit(&record, &mut rng);
            let y = identity_side(&x);
            for (k, out) in outputs.iter().enumerate() {
                assert_eq!(system.decode(k, out, &y).unwrap(), x, "user {k}");
            }
        }
    }

    #[test]
    fn disjoint_payload_coordinates_give_a_full_rank_payload() {
        // The children's payload coordinates are {0..5} and {5..8} per
        // block, so no chained symbol is implied by the others.
        let code = two_user_chain(&[5, 6, 7], &[0, 1, 2, 3, 4], 2);
        let rows = payload_functionals(code.root());
        assert_eq!(rows.len(), 13);
        let ledger = rank_ledger(&FieldSpec::new(2, 1).unwrap(), &rows);
        assert_eq!(ledger.rank(), 13);
        assert_eq!(ledger.dependent_count(), 0);
    }

    #[test]
    fn nested_payload_coordinates_leave_the_tail_dependent() {
        // The right child's payload coordinates {0,1,2,4} sit inside the
        // left child's {0..5}, so the mixed segment already determines
        // every tail symbol.
        let code = two_user_chain(&[5, 6, 7], &[3, 5, 6, 7], 2);
        let rows = payload_functionals(code.root());
        assert_eq!(rows.len(), 14);
        let ledger = rank_ledger(&FieldSpec::new(2, 1).unwrap(), &rows);
        assert_eq!(ledger.rank(), 10);
        assert_eq!(ledger.dependent_count(), 4);
        assert!(ledger.dependent_positions().all(|p| p >= 10));
    }

    #[test]
    fn equal_masks_make_the_tail_dependent() {
        // With identical child codes and t = 2, every tail symbol is the
        // matching mixed symbol minus the matching head symbol.
        let code = two_user_chain(&[5, 6, 7], &[5, 6, 7], 2);
        let rows = payload_functionals(code.root());
        assert_eq!(rows.len(), 15);
        let field = FieldSpec::new(2, 1).unwrap();
        let ledger = rank_ledger(&field, &rows);
        assert_eq!(ledger.rank(), 10);
        assert_eq!(ledger.dependent_count(), 5);
        for pos in ledger.dependent_positions() {
            assert!((10..15).contains(&pos), "tail positions are 10..15, got {pos}");
            let combo = ledger.combo(pos).unwrap();
            let expected = vec![(pos - 10, Symbol::ONE), (pos - 5, Symbol::ONE)];
            assert_eq!(combo, expected);
        }

        // The replaced slots ride shared filler yet both users still decode.
        let system = noiseless_system(code, 3, 1.0);
        assert_eq!(system.ledger().dependent_count(), 5);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..10 {
            let x = random_word(16, &mut rng);
            let record = system.encode(&x).unwrap();
            let outputs = system.transmit(&record, &mut rng);
            let y = identity_side(&x);
            for (k, out) in outputs.iter().enumerate() {
                assert_eq!(system.decode(k, out, &y).unwrap(), x, "user {k}");
            }
        }
    }

    #[test]
    fn ledger_rank_matches_dense_elimination() {
        for (low_l, low_r, t) in [
            (vec![5usize, 6, 7], vec![5usize, 6, 7], 2usize),
            (vec![5, 6, 7], vec![3, 5, 6, 7], 3),
            (vec![6, 7], vec![5, 6, 7], 2),
        ] {
            let code = two_user_chain(&low_l, &low_r, t);
            let n_src = code.total_len();
            let p_len = code.payload_len();

            // Dense GF(2) matrix by encoding the standard basis.
            let mut columns: Vec<Vec<u8>> = Vec::with_capacity(n_src);
            for i in 0..n_src {
                let mut e = vec![Symbol::ZERO; n_src];
                e[i] = Symbol::ONE;
                columns.push(code.encode(&e).unwrap().flat().iter().map(|s| s.0).collect());
            }
            let mut dense: Vec<Vec<u8>> = (0..p_len)
                .map(|j| (0..n_src).map(|i| columns[i][j]).collect())
                .collect();
            let mut dense_rank = 0usize;
            let mut pivot_row = 0usize;
            for col in 0..n_src {
                if let Some(r) = (pivot_row..p_len).find(|&r| dense[r][col] == 1) {
                    dense.swap(pivot_row, r);
                    for rr in 0..p_len {
                        if rr != pivot_row && dense[rr][col] == 1 {
                            let (a, b) = if rr < pivot_row {
                                let (lo, hi) = dense.split_at_mut(pivot_row);
                                (&mut lo[rr], &hi[0])
                            } else {
                                let (lo, hi) = dense.split_at_mut(rr);
                                (&mut hi[0], &lo[pivot_row])
                            };
                            for c in 0..n_src {
                                a[c] ^= b[c];
                            }
                        }
                    }
                    dense_rank += 1;
                    pivot_row += 1;
                }
            }

            let rows = payload_functionals(code.root());
            let ledger = rank_ledger(&FieldSpec::new(2, 1).unwrap(), &rows);
            assert_eq!(ledger.rank(), dense_rank, "l={low_l:?} r={low_r:?} t={t}");
        }
    }

    #[test]
    fn ledger_reconstruction_is_exact() {
        let code = two_user_chain(&[5, 6, 7], &[5, 6, 7], 2);
        let field = FieldSpec::new(2, 1).unwrap();
        let rows = payload_functionals(code.root());
        let ledger = rank_ledger(&field, &rows);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = random_word(code.total_len(), &mut rng);
            let truth = code.encode(&x).unwrap().flat();
            let mut scrambled = truth.clone();
            for pos in ledger.dependent_positions() {
                scrambled[pos] = Symbol(rng.gen_range(0..2) as u8);
            }
            ledger.reconstruct(&field, &mut scrambled);
            assert_eq!(scrambled, truth);
        }
    }

    #[test]
    fn margins_account_for_every_user() {
        let code = two_user_chain(&[5, 6, 7], &[3, 5, 6, 7], 2);
        let system = noiseless_system(code, 3, 1.0);
        let margins = system.margins();
        assert_eq!(margins.len(), 2);
        for margin in &margins {
            // Identity channels make every coordinate a shared information
            // slot, so each user sees all 14 payload symbols and 16 slots.
            assert_eq!(margin.payload_symbols, 14);
            assert_eq!(margin.channel_slots, 16);
            assert_eq!(margin.slack, 2);
            assert!((margin.mutual_information_bits - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn provenance_counts_and_dump() {
        let code = two_user_chain(&[5, 6, 7], &[3, 5, 6, 7], 2);
        let system = noiseless_system(code, 3, 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let x = random_word(16, &mut rng);
        let record = system.encode(&x).unwrap();
        let payload_slots = record
            .provenance
            .iter()
            .filter(|s| matches!(s, SlotKind::Payload { .. }))
            .count();
        assert_eq!(payload_slots, 14);
        assert_eq!(record.provenance.len(), 16);
        let dump = record.debug_dump();
        assert!(dump.starts_with("jscc-record v1"));
        assert!(dump.contains("payload_slots=14"));
        assert!(dump.contains("shared_fill_slots=2"));

        // Encoding is deterministic: the same word gives the same record.
        assert_eq!(system.encode(&x).unwrap(), record);
    }

    #[test]
    fn erasure_channel_carries_the_payload() {
        // One user behind an erasure channel with mutual information 0.7
        // bits. The reliable high-entropy coordinates at block length 64
        // comfortably exceed the 24-symbol payload.
        let channel =
            BroadcastChannel::product(vec![DiscreteChannel::bec(0.3).unwrap()]).unwrap();
        assert!((channel.mutual_information_bits(&[0.5, 0.5], 0).unwrap() - 0.7).abs() < 1e-12);
        let m = 6;
        let sets = channel_sets(
            &[0.5, 0.5],
            &channel,
            &binary_kernel(),
            m,
            0.005,
            0.05,
            DEFAULT_STATE_BUDGET,
        )
        .unwrap();

        let low: Vec<usize> = (0..64).filter(|i| i % 8 != 0).collect(); // 56 low, payload 8
        let code = UniversalCode::new(
            ScheduleNode::leaf(vec![0], leaf_code(6, 1, &low)),
            vec![PairDistribution::perfect(2).unwrap()],
        )
        .unwrap();
        assert_eq!(code.payload_len(), 8);

        let system = JsccSystem::new(
            code,
            channel,
            vec![0.5, 0.5],
            binary_kernel(),
            m,
            &sets,
            1.0,
            99,
        )
        .unwrap();
        assert_eq!(system.channel_blocks(), 1);
        let info_count = system.info_sets()[0].iter().filter(|&&b| b).count();
        assert!(info_count >= 8, "need at least 8 reliable slots, got {info_count}");

        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let trials = 40;
        let mut exact = 0;
        for _ in 0..trials {
            let x = random_word(64, &mut rng);
            let record = system.encode(&x).unwrap();
            let outputs = system.transmit(&record, &mut rng);
            let y = identity_side(&x);
            if system.decode(0, &outputs[0], &y).unwrap() == x {
                exact += 1;
            }
        }
        assert!(
            exact >= trials * 9 / 10,
            "erasure channel recovery too weak: {exact}/{trials}"
        );
    }

    #[test]
    fn biased_prior_uses_deterministic_and_filler_slots() {
        // A strongly biased input over a clean channel: some coordinates are
        // prior-determined, some are neither informative nor determined.
        let channel = identity_broadcast(1);
        let prior = vec![0.9, 0.1];
        let m = 3;
        let sets = channel_sets(
            &prior,
            &channel,
            &binary_kernel(),
            m,
            0.12,
            0.2,
            DEFAULT_STATE_BUDGET,
        )
        .unwrap();
        let high_count = sets.high_entropy.iter().filter(|&&b| b).count();
        let det_count = sets.low_prior.iter().filter(|&&b| b).count();
        assert!(high_count > 0, "no high-entropy coordinates at this size");
        assert!(det_count > 0, "no prior-determined coordinates at this size");

        // Payload must fit the restricted information set: on an identity
        // channel the usable slots are exactly the high-entropy coordinates.
        let payload_len = high_count.min(4);
        let low: Vec<usize> = (0..8 - payload_len).collect();
        let code = UniversalCode::new(
            ScheduleNode::leaf(vec![0], leaf_code(3, 1, &low)),
            vec![PairDistribution::perfect(2).unwrap()],
        )
        .unwrap();

        let system = JsccSystem::new(
            code,
            channel,
            prior,
            binary_kernel(),
            m,
            &sets,
            1.0,
            5150,
        )
        .unwrap();

        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let x = random_word(8, &mut rng);
        let record = system.encode(&x).unwrap();
        assert!(record
            .provenance
            .iter()
            .any(|s| matches!(s, SlotKind::Deterministic)));
        let y = identity_side(&x);
        let decoded = system.decode(0, &record.channel_input.iter().map(|s| s.index() as u32).collect::<Vec<_>>(), &y).unwrap();
        assert_eq!(decoded, x);
    }

    #[test]
    fn kappa_rounding_is_policed() {
        let code = two_user_chain(&[5, 6, 7], &[3, 5, 6, 7], 2); // 16 source symbols
        let channel = identity_broadcast(2);
        let sets = channel_sets(
            &[0.5, 0.5],
            &channel,
            &binary_kernel(),
            3,
            1e-9,
            1e-9,
            DEFAULT_STATE_BUDGET,
        )
        .unwrap();
        // kappa 1.03 forces 3 blocks = 24 symbols, realized 1.5: too coarse.
        let err = JsccSystem::new(
            code,
            channel,
            vec![0.5, 0.5],
            binary_kernel(),
            3,
            &sets,
            1.03,
            7,
        )
        .unwrap_err();
        assert!(matches!(err, JsccError::KappaMismatch { .. }));
    }

    #[test]
    fn capacity_shortfall_reports_margins() {
        // Half duty cycle: a channel that erases everything for user 2
        // leaves no cell for tail symbols readable only by that user.
        let code = two_user_chain(&[5, 6, 7], &[3, 5, 6, 7], 2);
        let channel = BroadcastChannel::product(vec![
            DiscreteChannel::identity(2).unwrap(),
            DiscreteChannel::bec(1.0).unwrap(),
        ])
        .unwrap();
        let sets = channel_sets(
            &[0.5, 0.5],
            &channel,
            &binary_kernel(),
            3,
            1e-9,
            1e-9,
            DEFAULT_STATE_BUDGET,
        )
        .unwrap();
        let err = JsccSystem::new(
            code,
            channel,
            vec![0.5, 0.5],
            binary_kernel(),
            3,
            &sets,
            1.0,
            7,
        )
        .unwrap_err();
        match err {
            JsccError::CapacityShortfall { report } => {
                assert!(report.contains("need"), "report: {report}");
                assert!(report.contains("reachable"), "report: {report}");
            }
            other => panic!("expected capacity shortfall, got {other:?}"),
        }
    }

    #[test]
    fn argument_validation() {
        let code = two_user_chain(&[5, 6, 7], &[3, 5, 6, 7], 2);
        let system = noiseless_system(code, 3, 1.0);
        let x = vec![Symbol::ZERO; 16];
        let record = system.encode(&x).unwrap();
        let v: Vec<u32> = record.channel_input.iter().map(|s| s.index() as u32).collect();
        let y = vec![0u32; 16];

        assert!(matches!(
            system.encode(&x[..3]).unwrap_err(),
            JsccError::InputLength { expected: 16, got: 3 }
        ));
        assert!(matches!(
            system.decode(5, &v, &y).unwrap_err(),
            JsccError::UnknownDecoder { decoder: 5, count: 2 }
        ));
        assert!(matches!(
            system.decode(0, &v[..4], &y).unwrap_err(),
            JsccError::InputLength { .. }
        ));
        assert!(matches!(
            system.decode(0, &v, &y[..4]).unwrap_err(),
            JsccError::InputLength { .. }
        ));
    }
}
