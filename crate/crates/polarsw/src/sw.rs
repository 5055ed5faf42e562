//! Syndrome source coding with side information at the decoder.
//!
//! The encoder transforms the source word and transmits only the transform
//! coordinates **outside** the selected low-entropy set L; the decoder plants
//! those syndrome symbols, recovers the L-coordinates by successive
//! cancellation against its side information, and reassembles the source word.
//!
//! [`ScDecoder`] is the shared successive-cancellation engine: one pass over a
//! length-N block visits the transform coordinates in natural order, hands the
//! caller the exact posterior of each coordinate given the side information
//! and all previous decisions, and lets the caller choose the decision. The
//! decoder, the posterior probe, and the genie-aided Monte-Carlo construction
//! all drive the same pass with different decision callbacks.
//!
//! Messages are q-ary probability vectors kept in the linear domain. A minus
//! step convolves the two child vectors under the kernel twist, a plus step
//! conditions on the already-decided minus coordinate, and every produced
//! vector is renormalized to sum 1 to keep long blocks away from underflow.

use crate::construction::IndexSetProfile;
use crate::galois::{FieldSpec, Symbol};
use crate::source::PairDistribution;
use crate::transform::{PolarKernel, TransformSpec};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SwError {
    #[error("profile block length {profile} does not match transform block length {transform}")]
    ProfileMismatch { profile: usize, transform: usize },
    #[error("pair alphabet {pair} does not match field order {field}")]
    PairMismatch { pair: usize, field: u32 },
    #[error("input length {got}, expected {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("side-information letter {value} outside alphabet of size {size}")]
    SideLetterRange { value: u32, size: usize },
    #[error("syndrome length {got}, expected {expected}")]
    SyndromeLength { expected: usize, got: usize },
    #[error("prefix length {got} does not match target index {index}")]
    PrefixLength { index: usize, got: usize },
    #[error("coordinate index {index} out of range for block length {n}")]
    IndexRange { index: usize, n: usize },
    #[error("syndrome wire data malformed: {0}")]
    Wire(&'static str),
    #[error("syndrome wire mask digest mismatch")]
    WireDigest,
}

/// Reusable successive-cancellation workspace for one transform shape.
///
/// `run` performs one pass over a single block. Evidence is position-major:
/// `evidence[pos * q + a]` is any positive multiple of P(X_pos = a, Y_pos =
/// observed y_pos). The decision callback receives each coordinate index and
/// its posterior (normalized, length q) and returns the value to commit.
pub struct ScDecoder {
    field: FieldSpec,
    twist: Symbol,
    n: usize,
    // One scratch vector per recursion depth: evidence of the active segment,
    // committed hard decisions, and the saved minus-half decisions. The `_b`
    // buffers carry a second evidence set through the same decisions for the
    // dual pass.
    evid: Vec<Vec<f64>>,
    evid_b: Vec<Vec<f64>>,
    hard: Vec<Vec<Symbol>>,
    saved: Vec<Vec<Symbol>>,
    posterior: Vec<f64>,
    posterior_b: Vec<f64>,
}

impl ScDecoder {
    pub fn new(kernel: &PolarKernel, m: u32) -> ScDecoder {
        let n = 1usize << m;
        let q = kernel.field().order() as usize;
        let levels = m as usize + 1;
        ScDecoder {
            field: kernel.field().clone(),
            twist: kernel.twist(),
            n,
            evid: (0..levels).map(|d| vec![0.0; (n >> d) * q]).collect(),
            evid_b: (0..levels).map(|d| vec![0.0; (n >> d) * q]).collect(),
            hard: (0..levels).map(|d| vec![Symbol::ZERO; n >> d]).collect(),
            saved: (0..levels).map(|d| vec![Symbol::ZERO; (n >> d) / 2 + 1]).collect(),
            posterior: vec![0.0; q],
            posterior_b: vec![0.0; q],
        }
    }

    pub fn block_len(&self) -> usize {
        self.n
    }

    /// Runs one block pass and returns the reconstructed source segment x
    /// (the inverse transform of the committed coordinate decisions).
    pub fn run<F>(&mut self, evidence: &[f64], mut decide: F) -> Vec<Symbol>
    where
        F: FnMut(usize, &[f64]) -> Symbol,
    {
        let q = self.field.order() as usize;
        assert_eq!(evidence.len(), self.n * q, "evidence must be N*q values");
        self.evid[0].copy_from_slice(evidence);
        let mut next_index = 0usize;
        self.node(0, self.n, &mut next_index, &mut decide);
        self.hard[0].clone()
    }

    /// Runs one block pass with two evidence sets sharing every decision:
    /// the callback sees both posteriors at each coordinate. Returns the
    /// source segment reconstructed from the committed decisions.
    pub fn run_dual<F>(
        &mut self,
        evidence_a: &[f64],
        evidence_b: &[f64],
        mut decide: F,
    ) -> Vec<Symbol>
    where
        F: FnMut(usize, &[f64], &[f64]) -> Symbol,
    {
        let q = self.field.order() as usize;
        assert_eq!(evidence_a.len(), self.n * q, "evidence must be N*q values");
        assert_eq!(evidence_b.len(), self.n * q, "evidence must be N*q values");
        self.evid[0].copy_from_slice(evidence_a);
        self.evid_b[0].copy_from_slice(evidence_b);
        let mut next_index = 0usize;
        self.node_dual(0, self.n, &mut next_index, &mut decide);
        self.hard[0].clone()
    }

    fn node_dual<F>(&mut self, depth: usize, len: usize, next_index: &mut usize, decide: &mut F)
    where
        F: FnMut(usize, &[f64], &[f64]) -> Symbol,
    {
        let q = self.field.order() as usize;
        if len == 1 {
            for (which, post) in [
                (&self.evid[depth][..q], &mut self.posterior),
                (&self.evid_b[depth][..q], &mut self.posterior_b),
            ] {
                let sum: f64 = which.iter().sum();
                if sum > 0.0 && sum.is_finite() {
                    for (p, &e) in post.iter_mut().zip(which) {
                        *p = e / sum;
                    }
                } else {
                    post.fill(1.0 / q as f64);
                }
            }
            let d = decide(*next_index, &self.posterior, &self.posterior_b);
            *next_index += 1;
            self.hard[depth][0] = d;
            return;
        }

        let half = len / 2;
        let g = self.twist;
        let f = self.field.clone();

        for set in 0..2 {
            let evid = if set == 0 { &mut self.evid } else { &mut self.evid_b };
            for j in 0..half {
                for w in 0..q {
                    let wsym = Symbol(w as u8);
                    let mut acc = 0.0;
                    for v in 0..q {
                        let vsym = Symbol(v as u8);
                        let a = f.sub(wsym, f.mul(g, vsym));
                        acc += evid[depth][j * q + a.index()] * evid[depth][(j + half) * q + v];
                    }
                    evid[depth + 1][j * q + w] = acc;
                }
                normalize(&mut evid[depth + 1][j * q..(j + 1) * q]);
            }
        }
        self.node_dual(depth + 1, half, next_index, decide);
        for j in 0..half {
            self.saved[depth][j] = self.hard[depth + 1][j];
        }

        for set in 0..2 {
            for j in 0..half {
                let w = self.saved[depth][j];
                let evid = if set == 0 { &mut self.evid } else { &mut self.evid_b };
                for v in 0..q {
                    let vsym = Symbol(v as u8);
                    let a = f.sub(w, f.mul(g, vsym));
                    evid[depth + 1][j * q + v] =
                        evid[depth][j * q + a.index()] * evid[depth][(j + half) * q + v];
                }
                normalize(&mut evid[depth + 1][j * q..(j + 1) * q]);
            }
        }
        self.node_dual(depth + 1, half, next_index, decide);

        for j in 0..half {
            let w = self.saved[depth][j];
            let v = self.hard[depth + 1][j];
            self.hard[depth][j] = self.field.sub(w, self.field.mul(g, v));
            self.hard[depth][j + half] = v;
        }
    }

    fn node<F>(&mut self, depth: usize, len: usize, next_index: &mut usize, decide: &mut F)
    where
        F: FnMut(usize, &[f64]) -> Symbol,
    {
        let q = self.field.order() as usize;
        if len == 1 {
            let (sum, slice) = {
                let e = &self.evid[depth][..q];
                (e.iter().sum::<f64>(), e)
            };
            if sum > 0.0 && sum.is_finite() {
                for (p, &e) in self.posterior.iter_mut().zip(slice) {
                    *p = e / sum;
                }
            } else {
                self.posterior.fill(1.0 / q as f64);
            }
            let d = decide(*next_index, &self.posterior);
            *next_index += 1;
            self.hard[depth][0] = d;
            return;
        }

        let half = len / 2;
        let g = self.twist;

        // Minus step: distribution of w_j = x_j + g x_{j+half}.
        for j in 0..half {
            for w in 0..q {
                let wsym = Symbol(w as u8);
                let mut acc = 0.0;
                for v in 0..q {
                    let vsym = Symbol(v as u8);
                    let a = self.field.sub(wsym, self.field.mul(g, vsym));
                    acc += self.evid[depth][j * q + a.index()] * self.evid[depth][(j + half) * q + v];
                }
                self.evid[depth + 1][j * q + w] = acc;
            }
            normalize(&mut self.evid[depth + 1][j * q..(j + 1) * q]);
        }
        self.node(depth + 1, half, next_index, decide);
        for j in 0..half {
            self.saved[depth][j] = self.hard[depth + 1][j];
        }

        // Plus step: distribution of v_j = x_{j+half} given the committed w_j.
        for j in 0..half {
            let w = self.saved[depth][j];
            for v in 0..q {
                let vsym = Symbol(v as u8);
                let a = self.field.sub(w, self.field.mul(g, vsym));
                self.evid[depth + 1][j * q + v] =
                    self.evid[depth][j * q + a.index()] * self.evid[depth][(j + half) * q + v];
            }
            normalize(&mut self.evid[depth + 1][j * q..(j + 1) * q]);
        }
        self.node(depth + 1, half, next_index, decide);

        for j in 0..half {
            let w = self.saved[depth][j];
            let v = self.hard[depth + 1][j];
            self.hard[depth][j] = self.field.sub(w, self.field.mul(g, v));
            self.hard[depth][j + half] = v;
        }
    }
}

fn normalize(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        for x in v.iter_mut() {
            *x /= sum;
        }
    } else {
        let u = 1.0 / v.len() as f64;
        v.fill(u);
    }
}

/// Picks the most likely symbol, breaking ties toward the smallest value.
pub fn argmax_symbol(posterior: &[f64]) -> Symbol {
    let mut best = 0usize;
    for (i, &p) in posterior.iter().enumerate().skip(1) {
        if p > posterior[best] {
            best = i;
        }
    }
    Symbol(best as u8)
}

/// Builds position-major evidence for one block from the decode metric and
/// the observed side letters.
pub fn pair_evidence(pair: &PairDistribution, y: &[u32]) -> Result<Vec<f64>, SwError> {
    let q = pair.x_size();
    let mut evidence = vec![0.0; y.len() * q];
    for (pos, &letter) in y.iter().enumerate() {
        if letter as usize >= pair.y_size() {
            return Err(SwError::SideLetterRange {
                value: letter,
                size: pair.y_size(),
            });
        }
        for a in 0..q {
            evidence[pos * q + a] = pair.prob(a, letter as usize);
        }
    }
    Ok(evidence)
}

/// The syndrome projection of a transformed word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Syndrome {
    symbols: Vec<Symbol>,
}

impl Syndrome {
    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// A complete compression code: transform shape, per-block low-entropy set,
/// and the pair distribution the decoder uses as its metric.
#[derive(Debug, Clone)]
pub struct BlockCodeSpec {
    spec: TransformSpec,
    profile: IndexSetProfile,
    pair: PairDistribution,
}

impl BlockCodeSpec {
    pub fn new(
        spec: TransformSpec,
        profile: IndexSetProfile,
        pair: PairDistribution,
    ) -> Result<BlockCodeSpec, SwError> {
        if profile.block_len() != spec.block_len() {
            return Err(SwError::ProfileMismatch {
                profile: profile.block_len(),
                transform: spec.block_len(),
            });
        }
        if pair.x_size() != spec.field().order() as usize {
            return Err(SwError::PairMismatch {
                pair: pair.x_size(),
                field: spec.field().order(),
            });
        }
        Ok(BlockCodeSpec { spec, profile, pair })
    }

    pub fn spec(&self) -> &TransformSpec {
        &self.spec
    }

    pub fn profile(&self) -> &IndexSetProfile {
        &self.profile
    }

    pub fn pair(&self) -> &PairDistribution {
        &self.pair
    }

    pub fn field(&self) -> &FieldSpec {
        self.spec.field()
    }

    /// Source word length t * N.
    pub fn total_len(&self) -> usize {
        self.spec.total_len()
    }

    /// Syndrome symbols per block: N - |L|.
    pub fn block_syndrome_len(&self) -> usize {
        self.spec.block_len() - self.profile.low_set_size()
    }

    /// Syndrome symbols for the whole word.
    pub fn syndrome_len(&self) -> usize {
        self.block_syndrome_len() * self.spec.blocks()
    }

    /// Compression rate in symbols per source symbol.
    pub fn rate(&self) -> f64 {
        self.syndrome_len() as f64 / self.total_len() as f64
    }

    /// A copy of this code spanning a different number of blocks.
    pub fn with_blocks(&self, blocks: usize) -> BlockCodeSpec {
        BlockCodeSpec {
            spec: self.spec.with_blocks(blocks).expect("block count validated by caller"),
            profile: self.profile.clone(),
            pair: self.pair.clone(),
        }
    }

    /// Projects the transformed word onto the complement of the low-entropy
    /// set, block by block, in increasing coordinate order.
    pub fn encode(&self, x: &[Symbol]) -> Result<Syndrome, SwError> {
        if x.len() != self.total_len() {
            return Err(SwError::InputLength {
                expected: self.total_len(),
                got: x.len(),
            });
        }
        let u = self.spec.forward(x).expect("length checked above");
        let n = self.spec.block_len();
        let mask = self.profile.mask();
        let mut symbols = Vec::with_capacity(self.syndrome_len());
        for block in 0..self.spec.blocks() {
            for i in 0..n {
                if !mask[i] {
                    symbols.push(u[block * n + i]);
                }
            }
        }
        Ok(Syndrome { symbols })
    }

    /// Reconstructs the source word from a syndrome and the decoder's side
    /// information. Each block is decoded independently.
    pub fn decode(&self, syndrome: &Syndrome, y: &[u32]) -> Result<Vec<Symbol>, SwError> {
        self.decode_with(syndrome, y, &self.pair)
    }

    /// Like [`BlockCodeSpec::decode`] but with a caller-supplied metric, for
    /// decoders whose side information differs from the stored pair.
    pub fn decode_with(
        &self,
        syndrome: &Syndrome,
        y: &[u32],
        pair: &PairDistribution,
    ) -> Result<Vec<Symbol>, SwError> {
        if pair.x_size() != self.field().order() as usize {
            return Err(SwError::PairMismatch {
                pair: pair.x_size(),
                field: self.field().order(),
            });
        }
        if y.len() != self.total_len() {
            return Err(SwError::InputLength {
                expected: self.total_len(),
                got: y.len(),
            });
        }
        if syndrome.len() != self.syndrome_len() {
            return Err(SwError::SyndromeLength {
                expected: self.syndrome_len(),
                got: syndrome.len(),
            });
        }
        let n = self.spec.block_len();
        let mask = self.profile.mask();
        let mut engine = ScDecoder::new(self.spec.kernel(), self.spec.depth());
        let mut x_hat = Vec::with_capacity(self.total_len());
        let mut cursor = 0usize;
        for block in 0..self.spec.blocks() {
            let evidence = pair_evidence(pair, &y[block * n..(block + 1) * n])?;
            let segment = engine.run(&evidence, |i, posterior| {
                if mask[i] {
                    argmax_symbol(posterior)
                } else {
                    let s = syndrome.symbols[cursor];
                    cursor += 1;
                    s
                }
            });
            x_hat.extend_from_slice(&segment);
        }
        Ok(x_hat)
    }

    /// Exact posterior of coordinate `index` (within one block) given the
    /// side letters of that block and the true values of all previous
    /// coordinates.
    pub fn sc_posterior(
        &self,
        prefix: &[Symbol],
        y_block: &[u32],
        index: usize,
    ) -> Result<Vec<f64>, SwError> {
        let n = self.spec.block_len();
        if index >= n {
            return Err(SwError::IndexRange { index, n });
        }
        if prefix.len() != index {
            return Err(SwError::PrefixLength {
                index,
                got: prefix.len(),
            });
        }
        if y_block.len() != n {
            return Err(SwError::InputLength {
                expected: n,
                got: y_block.len(),
            });
        }
        let evidence = pair_evidence(&self.pair, y_block)?;
        let mut engine = ScDecoder::new(self.spec.kernel(), self.spec.depth());
        let mut captured = vec![0.0; self.field().order() as usize];
        engine.run(&evidence, |i, posterior| {
            if i < index {
                prefix[i]
            } else {
                if i == index {
                    captured.copy_from_slice(posterior);
                }
                argmax_symbol(posterior)
            }
        });
        Ok(captured)
    }

    /// Digest binding a syndrome wire to the producing code's mask.
    pub fn mask_digest(&self) -> [u8; 8] {
        mask_digest(self.profile.mask())
    }
}

pub fn mask_digest(mask: &[bool]) -> [u8; 8] {
    let mut hasher = Sha256::new();
    let bytes: Vec<u8> = mask.iter().map(|&b| b as u8).collect();
    hasher.update((mask.len() as u64).to_le_bytes());
    hasher.update(&bytes);
    let full = hasher.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&full[..8]);
    out
}

// ---------------------------------------------------------------------------
// Syndrome wire format
//
// Layout (all integers little-endian):
//   magic   4 bytes  "PSWS"
//   version u16      1
//   q       u16
//   N       u32      block length
//   t       u32      block count
//   digest  8 bytes  mask digest of the producing code
//   count   u64      number of syndrome symbols
//   packed  ceil(count * ceil(log2 q) / 8) bytes, little-endian bit order
// ---------------------------------------------------------------------------

pub const SYNDROME_MAGIC: &[u8; 4] = b"PSWS";
pub const SYNDROME_VERSION: u16 = 1;

/// Bits needed per symbol: ceil(log2 q).
pub fn bits_per_symbol(q: u32) -> u32 {
    32 - (q - 1).leading_zeros()
}

/// Parsed header and payload of a syndrome wire blob.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyndromeWire {
    pub q: u16,
    pub block_len: u32,
    pub blocks: u32,
    pub mask_digest: [u8; 8],
    pub symbols: Vec<Symbol>,
}

pub fn serialize_syndrome(code: &BlockCodeSpec, syndrome: &Syndrome) -> Vec<u8> {
    let q = code.field().order();
    let bits = bits_per_symbol(q) as usize;
    let count = syndrome.len();
    let mut out = Vec::with_capacity(32 + (count * bits).div_ceil(8));
    out.extend_from_slice(SYNDROME_MAGIC);
    out.extend_from_slice(&SYNDROME_VERSION.to_le_bytes());
    out.extend_from_slice(&(q as u16).to_le_bytes());
    out.extend_from_slice(&(code.spec().block_len() as u32).to_le_bytes());
    out.extend_from_slice(&(code.spec().blocks() as u32).to_le_bytes());
    out.extend_from_slice(&code.mask_digest());
    out.extend_from_slice(&(count as u64).to_le_bytes());

    let mut packed = vec![0u8; (count * bits).div_ceil(8)];
    for (i, s) in syndrome.symbols().iter().enumerate() {
        let base = i * bits;
        for b in 0..bits {
            if s.0 >> b & 1 == 1 {
                packed[(base + b) / 8] |= 1 << ((base + b) % 8);
            }
        }
    }
    out.extend_from_slice(&packed);
    out
}

pub fn parse_syndrome(bytes: &[u8]) -> Result<SyndromeWire, SwError> {
    if bytes.len() < 32 {
        return Err(SwError::Wire("truncated header"));
    }
    if &bytes[0..4] != SYNDROME_MAGIC {
        return Err(SwError::Wire("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SYNDROME_VERSION {
        return Err(SwError::Wire("unsupported version"));
    }
    let q = u16::from_le_bytes([bytes[6], bytes[7]]);
    if q < 2 {
        return Err(SwError::Wire("bad field order"));
    }
    let block_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let blocks = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let mut mask_digest = [0u8; 8];
    mask_digest.copy_from_slice(&bytes[16..24]);
    let count = u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize;

    let bits = bits_per_symbol(q as u32) as usize;
    let need = 32 + (count * bits).div_ceil(8);
    if bytes.len() != need {
        return Err(SwError::Wire("payload length mismatch"));
    }
    let packed = &bytes[32..];
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
            return Err(SwError::Wire("symbol out of field range"));
        }
        symbols.push(Symbol(v));
    }
    Ok(SyndromeWire {
        q,
        block_len,
        blocks,
        mask_digest,
        symbols,
    })
}

/// Parses a wire blob and checks it against the expected code before handing
/// back a decodable syndrome.
pub fn syndrome_from_wire(code: &BlockCodeSpec, bytes: &[u8]) -> Result<Syndrome, SwError> {
    let wire = parse_syndrome(bytes)?;
    if wire.q as u32 != code.field().order()
        || wire.block_len as usize != code.spec().block_len()
        || wire.blocks as usize != code.spec().blocks()
    {
        return Err(SwError::Wire("code shape mismatch"));
    }
    if wire.mask_digest != code.mask_digest() {
        return Err(SwError::WireDigest);
    }
    if wire.symbols.len() != code.syndrome_len() {
        return Err(SwError::SyndromeLength {
            expected: code.syndrome_len(),
            got: wire.symbols.len(),
        });
    }
    Ok(Syndrome {
        symbols: wire.symbols,
    })
}

/// Assembles a syndrome from raw symbols (used by the chained decoders,
/// which reconstruct per-block syndromes from payload segments).
pub fn syndrome_from_symbols(symbols: Vec<Symbol>) -> Syndrome {
    Syndrome { symbols }
}
