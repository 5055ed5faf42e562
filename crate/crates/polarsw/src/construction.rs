//! Code construction: per-coordinate reliability of the transformed source.
//!
//! Applying the transform to i.i.d. pairs (X, Y) turns the N coordinates into
//! N synthetic pairs (U_i; (U^{1:i-1}, Y^{1:N})). This module computes, for
//! every coordinate, the maximum-a-posteriori error probability, the
//! conditional entropy, and (for binary fields) the Bhattacharyya parameter,
//! then selects the low-entropy set L that the syndrome encoder may skip.
//!
//! Two construction paths are provided. [`evolve_exact`] tracks the exact
//! joint distribution of each synthetic pair, merging observation columns
//! that induce bit-identical posteriors so the state stays small whenever the
//! pair has symmetry to exploit; it refuses to exceed a caller-supplied state
//! budget. [`evolve_monte_carlo`] estimates the same quantities by genie-aided
//! decoding of sampled blocks and is the fallback when the exact state grows
//! past the budget.

use crate::galois::{FieldSpec, Symbol};
use crate::source::{BroadcastChannel, PairDistribution, SourceError};
use crate::sw::{argmax_symbol, pair_evidence, ScDecoder};
use crate::transform::{PolarKernel, TransformSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

/// Default cap on the number of tracked observation columns per synthetic
/// pair during exact construction.
pub const DEFAULT_STATE_BUDGET: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum ConstructionError {
    #[error(
        "exact construction needs {states} observation columns (budget {budget}); \
         use the Monte-Carlo construction instead"
    )]
    StateBudget { states: usize, budget: usize },
    #[error("target set size {size} exceeds block length {n}")]
    TargetTooLarge { size: usize, n: usize },
    #[error("pair alphabet {pair} does not match field order {field}")]
    AlphabetMismatch { pair: usize, field: u32 },
    #[error("at least one trial is required")]
    ZeroTrials,
    #[error("profile wire data malformed: {0}")]
    Wire(&'static str),
    #[error("source model: {0}")]
    Source(#[from] SourceError),
}

/// Reliability functionals of one synthetic pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStats {
    /// MAP error probability of the coordinate given past coordinates and
    /// all side information.
    pub error_prob: f64,
    /// Conditional entropy in field symbols (log base q).
    pub entropy: f64,
    /// Bhattacharyya parameter; binary fields only.
    pub bhattacharyya: Option<f64>,
}

/// How the low-entropy set was chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionRule {
    /// Keep every coordinate whose error probability is at most theta.
    Threshold { theta: f64 },
    /// Keep exactly `size` coordinates with the smallest error probability,
    /// breaking ties toward the lower index.
    TargetSize { size: usize },
}

/// A chosen low-entropy set together with the statistics that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSetProfile {
    mask: Vec<bool>,
    error_probs: Vec<f64>,
    rule: SelectionRule,
}

impl IndexSetProfile {
    pub fn from_parts(mask: Vec<bool>, error_probs: Vec<f64>, rule: SelectionRule) -> Self {
        assert_eq!(mask.len(), error_probs.len(), "mask and stats must align");
        assert!(!mask.is_empty(), "profile cannot be empty");
        IndexSetProfile {
            mask,
            error_probs,
            rule,
        }
    }

    pub fn block_len(&self) -> usize {
        self.mask.len()
    }

    /// Membership mask of the low-entropy set L; true = coordinate in L.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn error_probs(&self) -> &[f64] {
        &self.error_probs
    }

    pub fn rule(&self) -> &SelectionRule {
        &self.rule
    }

    pub fn low_set_size(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn low_indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    /// Union bound on the block decoding error: sum of per-coordinate error
    /// probabilities over the skipped set.
    pub fn error_bound(&self) -> f64 {
        self.mask
            .iter()
            .zip(&self.error_probs)
            .filter(|(&b, _)| b)
            .map(|(_, &p)| p)
            .sum()
    }

    /// Repeats the per-block mask across `blocks` consecutive blocks.
    pub fn lift(&self, blocks: usize) -> Vec<bool> {
        assert!(blocks >= 1);
        let mut out = Vec::with_capacity(self.mask.len() * blocks);
        for _ in 0..blocks {
            out.extend_from_slice(&self.mask);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Exact evolution
// ---------------------------------------------------------------------------

/// Distribution of one synthetic pair, stored as observation columns. Each
/// column is (posterior over the q input values, total mass), with columns of
/// identical posterior merged. The bit patterns of the posteriors key the
/// merge, so products feeding a posterior are summed in a canonical order to
/// make symmetric observation pairs collide exactly.
#[derive(Clone)]
struct EvolvedPair {
    q: usize,
    columns: Vec<(Vec<f64>, f64)>,
}

fn posterior_key(posterior: &[f64]) -> Vec<u64> {
    posterior.iter().map(|p| p.to_bits()).collect()
}

fn sorted_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by_key(|t| t.to_bits());
    terms.iter().sum()
}

fn merged(q: usize, raw: impl Iterator<Item = (Vec<f64>, f64)>) -> EvolvedPair {
    let mut map: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    for (posterior, mass) in raw {
        if mass <= 0.0 {
            continue;
        }
        *map.entry(posterior_key(&posterior)).or_insert(0.0) += mass;
    }
    let columns = map
        .into_iter()
        .map(|(key, mass)| (key.into_iter().map(f64::from_bits).collect(), mass))
        .collect();
    EvolvedPair { q, columns }
}

impl EvolvedPair {
    fn from_pair(pair: &PairDistribution) -> EvolvedPair {
        let q = pair.x_size();
        merged(
            q,
            (0..pair.y_size()).map(|y| {
                let col = pair.column(y);
                let mass: f64 = col.iter().sum();
                if mass > 0.0 {
                    (col.iter().map(|&c| c / mass).collect(), mass)
                } else {
                    (vec![0.0; q], 0.0)
                }
            }),
        )
    }

    fn check_budget(&self, candidates: usize, budget: usize) -> Result<(), ConstructionError> {
        if candidates > budget {
            Err(ConstructionError::StateBudget {
                states: candidates,
                budget,
            })
        } else {
            Ok(())
        }
    }

    /// Synthetic pair of w = x + g x': observe both columns jointly.
    fn minus(
        &self,
        field: &FieldSpec,
        g: Symbol,
        budget: usize,
    ) -> Result<EvolvedPair, ConstructionError> {
        let q = self.q;
        self.check_budget(self.columns.len() * self.columns.len(), budget)?;
        let mut raw = Vec::with_capacity(self.columns.len() * self.columns.len());
        let mut terms = vec![0.0; q];
        for (p1, m1) in &self.columns {
            for (p2, m2) in &self.columns {
                let mut posterior = vec![0.0; q];
                for (w, slot) in posterior.iter_mut().enumerate() {
                    for v in 0..q {
                        let a = field.sub(Symbol(w as u8), field.mul(g, Symbol(v as u8)));
                        terms[v] = p1[a.index()] * p2[v];
                    }
                    *slot = sorted_sum(&mut terms);
                }
                let total: f64 = posterior.iter().sum();
                if total > 0.0 {
                    for p in posterior.iter_mut() {
                        *p /= total;
                    }
                }
                raw.push((posterior, m1 * m2));
            }
        }
        Ok(merged(q, raw.into_iter()))
    }

    /// Synthetic pair of v = x' given the already-decided w: one output per
    /// (w, column, column) combination.
    fn plus(
        &self,
        field: &FieldSpec,
        g: Symbol,
        budget: usize,
    ) -> Result<EvolvedPair, ConstructionError> {
        let q = self.q;
        self.check_budget(self.columns.len() * self.columns.len() * q, budget)?;
        let mut raw = Vec::with_capacity(self.columns.len() * self.columns.len() * q);
        for (p1, m1) in &self.columns {
            for (p2, m2) in &self.columns {
                for w in 0..q {
                    let mut posterior = vec![0.0; q];
                    for (v, slot) in posterior.iter_mut().enumerate() {
                        let a = field.sub(Symbol(w as u8), field.mul(g, Symbol(v as u8)));
                        *slot = p1[a.index()] * p2[v];
                    }
                    let total: f64 = {
                        let mut copy = posterior.clone();
                        sorted_sum(&mut copy)
                    };
                    if total <= 0.0 {
                        continue;
                    }
                    for p in posterior.iter_mut() {
                        *p /= total;
                    }
                    raw.push((posterior, m1 * m2 * total));
                }
            }
        }
        Ok(merged(q, raw.into_iter()))
    }

    fn stats(&self) -> PairStats {
        let q = self.q;
        let ln_q = (q as f64).ln();
        let mut pe = 0.0;
        let mut entropy = 0.0;
        let mut z = 0.0;
        for (posterior, mass) in &self.columns {
            let max = posterior.iter().cloned().fold(0.0, f64::max);
            pe += mass * (1.0 - max);
            let h: f64 = posterior
                .iter()
                .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
                .sum();
            entropy += mass * h / ln_q;
            if q == 2 {
                z += mass * 2.0 * (posterior[0] * posterior[1]).sqrt();
            }
        }
        PairStats {
            error_prob: pe,
            entropy,
            bhattacharyya: if q == 2 { Some(z) } else { None },
        }
    }
}

/// Exact per-coordinate reliability of the m-level transform of `pair`.
/// Coordinates are reported in natural order.
pub fn evolve_exact(
    pair: &PairDistribution,
    kernel: &PolarKernel,
    m: u32,
    budget: usize,
) -> Result<Vec<PairStats>, ConstructionError> {
    if pair.x_size() != kernel.field().order() as usize {
        return Err(ConstructionError::AlphabetMismatch {
            pair: pair.x_size(),
            field: kernel.field().order(),
        });
    }
    let state = EvolvedPair::from_pair(pair);
    let mut out = Vec::with_capacity(1 << m);
    descend(&state, kernel.field(), kernel.twist(), m, budget, &mut out)?;
    Ok(out)
}

fn descend(
    state: &EvolvedPair,
    field: &FieldSpec,
    g: Symbol,
    depth: u32,
    budget: usize,
    out: &mut Vec<PairStats>,
) -> Result<(), ConstructionError> {
    if depth == 0 {
        out.push(state.stats());
        return Ok(());
    }
    let minus = state.minus(field, g, budget)?;
    descend(&minus, field, g, depth - 1, budget, out)?;
    drop(minus);
    let plus = state.plus(field, g, budget)?;
    descend(&plus, field, g, depth - 1, budget, out)
}

// ---------------------------------------------------------------------------
// Monte-Carlo construction
// ---------------------------------------------------------------------------

/// Derives an independent stream seed from a master seed. Used for
/// per-trial generators so trials are reproducible and order-independent.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const MC_CHUNK: usize = 128;

struct McAccumulator {
    errors: Vec<u64>,
    entropy: Vec<f64>,
    z: Vec<f64>,
}

/// Estimates per-coordinate reliability by genie-aided decoding of sampled
/// blocks: each trial draws a block, decodes with the true coordinates fed
/// back as decisions, and records whether the MAP guess at each coordinate
/// was correct, the posterior entropy, and the binary Bhattacharyya term.
///
/// Results are bit-identical for a fixed (trials, seed) regardless of
/// `workers`: trials are chunked deterministically and merged in order.
pub fn evolve_monte_carlo(
    pair: &PairDistribution,
    kernel: &PolarKernel,
    m: u32,
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<PairStats>, ConstructionError> {
    if pair.x_size() != kernel.field().order() as usize {
        return Err(ConstructionError::AlphabetMismatch {
            pair: pair.x_size(),
            field: kernel.field().order(),
        });
    }
    if trials == 0 {
        return Err(ConstructionError::ZeroTrials);
    }
    let run = || monte_carlo_chunks(pair, kernel, m, trials, seed);
    let acc = if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool")
            .install(run)
    } else {
        run()
    };
    let n = 1usize << m;
    let q = pair.x_size();
    let t = trials as f64;
    Ok((0..n)
        .map(|i| PairStats {
            error_prob: acc.errors[i] as f64 / t,
            entropy: acc.entropy[i] / t,
            bhattacharyya: if q == 2 { Some(acc.z[i] / t) } else { None },
        })
        .collect())
}

fn monte_carlo_chunks(
    pair: &PairDistribution,
    kernel: &PolarKernel,
    m: u32,
    trials: usize,
    seed: u64,
) -> McAccumulator {
    let n = 1usize << m;
    let q = pair.x_size();
    let ln_q = (q as f64).ln();
    let spec = TransformSpec::new(kernel.clone(), m, 1).expect("valid shape");
    let chunk_count = trials.div_ceil(MC_CHUNK);

    let partials: Vec<McAccumulator> = (0..chunk_count)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = McAccumulator {
                errors: vec![0; n],
                entropy: vec![0.0; n],
                z: vec![0.0; n],
            };
            let mut engine = ScDecoder::new(kernel, m);
            let lo = chunk * MC_CHUNK;
            let hi = ((chunk + 1) * MC_CHUNK).min(trials);
            for trial in lo..hi {
                let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, trial as u64));
                let (xs, ys) = pair.sample_block(n, &mut rng);
                let x: Vec<Symbol> = xs.iter().map(|&v| Symbol(v as u8)).collect();
                let u = spec.forward(&x).expect("sampled block has length N");
                let evidence = pair_evidence(pair, &ys).expect("sampled letters in range");
                engine.run(&evidence, |i, posterior| {
                    if argmax_symbol(posterior) != u[i] {
                        acc.errors[i] += 1;
                    }
                    let h: f64 = posterior
                        .iter()
                        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
                        .sum();
                    acc.entropy[i] += h / ln_q;
                    if q == 2 {
                        acc.z[i] += 2.0 * (posterior[0] * posterior[1]).sqrt();
                    }
                    u[i]
                });
            }
            acc
        })
        .collect();

    let mut total = McAccumulator {
        errors: vec![0; n],
        entropy: vec![0.0; n],
        z: vec![0.0; n],
    };
    for part in partials {
        for i in 0..n {
            total.errors[i] += part.errors[i];
            total.entropy[i] += part.entropy[i];
            total.z[i] += part.z[i];
        }
    }
    total
}

// ---------------------------------------------------------------------------
// Set selection
// ---------------------------------------------------------------------------

/// Chooses the low-entropy set from per-coordinate statistics.
pub fn select_low_set(
    stats: &[PairStats],
    rule: &SelectionRule,
) -> Result<IndexSetProfile, ConstructionError> {
    let n = stats.len();
    assert!(n > 0, "stats must be non-empty");
    let pe: Vec<f64> = stats.iter().map(|s| s.error_prob).collect();
    let mask = match rule {
        SelectionRule::Threshold { theta } => pe.iter().map(|&p| p <= *theta).collect(),
        SelectionRule::TargetSize { size } => {
            if *size > n {
                return Err(ConstructionError::TargetTooLarge { size: *size, n });
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| pe[a].total_cmp(&pe[b]).then(a.cmp(&b)));
            let mut mask = vec![false; n];
            for &i in order.iter().take(*size) {
                mask[i] = true;
            }
            mask
        }
    };
    Ok(IndexSetProfile::from_parts(mask, pe, rule.clone()))
}

// ---------------------------------------------------------------------------
// Channel-facing sets
// ---------------------------------------------------------------------------

/// Index sets for coding over a broadcast channel with input prior `prior`:
/// per-user low sets of the pair (U; V_k), the high-entropy set of the prior
/// alone, and the low set of the prior alone.
#[derive(Debug, Clone)]
pub struct ChannelSetBundle {
    /// One profile per user, on the synthetic pairs of (U; V_k).
    pub per_user: Vec<IndexSetProfile>,
    /// Coordinates whose prior-only error probability is within
    /// `theta_high` of the maximum 1 - 1/q.
    pub high_entropy: Vec<bool>,
    /// Coordinates decodable from the prior alone (error at most theta).
    pub low_prior: Vec<bool>,
}

pub fn channel_sets(
    prior: &[f64],
    channel: &BroadcastChannel,
    kernel: &PolarKernel,
    m: u32,
    theta: f64,
    theta_high: f64,
    budget: usize,
) -> Result<ChannelSetBundle, ConstructionError> {
    let q = kernel.field().order() as usize;
    if prior.len() != q || channel.input_size() != q {
        return Err(ConstructionError::AlphabetMismatch {
            pair: prior.len().max(channel.input_size()),
            field: kernel.field().order(),
        });
    }
    let rule = SelectionRule::Threshold { theta };
    let mut per_user = Vec::with_capacity(channel.user_count());
    for k in 0..channel.user_count() {
        let pair = channel.marginal(k)?.pair_with_prior(prior)?;
        let stats = evolve_exact(&pair, kernel, m, budget)?;
        per_user.push(select_low_set(&stats, &rule)?);
    }

    let rows = vec![vec![1.0]; q];
    let prior_pair = PairDistribution::from_conditional(prior, &rows)?;
    let prior_stats = evolve_exact(&prior_pair, kernel, m, budget)?;
    let ceiling = 1.0 - 1.0 / q as f64;
    let high_entropy = prior_stats
        .iter()
        .map(|s| s.error_prob >= ceiling - theta_high)
        .collect();
    let low_prior = prior_stats.iter().map(|s| s.error_prob <= theta).collect();

    Ok(ChannelSetBundle {
        per_user,
        high_entropy,
        low_prior,
    })
}

// ---------------------------------------------------------------------------
// Profile wire format
//
// Layout (integers little-endian):
//   magic    4 bytes  "PSWP"
//   version  u16      1
//   n        u32      block length
//   rule     u8       0 = threshold, 1 = target size
//   param    8 bytes  theta as f64 bits, or size as u64
//   mask     ceil(n/8) bytes, little-endian bit order
//   pe       n * 8 bytes, f64 bits
// ---------------------------------------------------------------------------

pub const PROFILE_MAGIC: &[u8; 4] = b"PSWP";
pub const PROFILE_VERSION: u16 = 1;

pub fn serialize_profile(profile: &IndexSetProfile) -> Vec<u8> {
    let n = profile.block_len();
    let mut out = Vec::with_capacity(19 + n.div_ceil(8) + 8 * n);
    out.extend_from_slice(PROFILE_MAGIC);
    out.extend_from_slice(&PROFILE_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    match profile.rule() {
        SelectionRule::Threshold { theta } => {
            out.push(0);
            out.extend_from_slice(&theta.to_bits().to_le_bytes());
        }
        SelectionRule::TargetSize { size } => {
            out.push(1);
            out.extend_from_slice(&(*size as u64).to_le_bytes());
        }
    }
    let mut mask_bytes = vec![0u8; n.div_ceil(8)];
    for (i, &b) in profile.mask().iter().enumerate() {
        if b {
            mask_bytes[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&mask_bytes);
    for &p in profile.error_probs() {
        out.extend_from_slice(&p.to_bits().to_le_bytes());
    }
    out
}

pub fn parse_profile(bytes: &[u8]) -> Result<IndexSetProfile, ConstructionError> {
    if bytes.len() < 19 {
        return Err(ConstructionError::Wire("truncated header"));
    }
    if &bytes[0..4] != PROFILE_MAGIC {
        return Err(ConstructionError::Wire("bad magic"));
    }
    if u16::from_le_bytes([bytes[4], bytes[5]]) != PROFILE_VERSION {
        return Err(ConstructionError::Wire("unsupported version"));
    }
    let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    if n == 0 {
        return Err(ConstructionError::Wire("empty profile"));
    }
    let param = u64::from_le_bytes(bytes[11..19].try_into().unwrap());
    let rule = match bytes[10] {
        0 => SelectionRule::Threshold {
            theta: f64::from_bits(param),
        },
        1 => SelectionRule::TargetSize {
            size: param as usize,
        },
        _ => return Err(ConstructionError::Wire("unknown selection rule")),
    };
    let mask_len = n.div_ceil(8);
    let need = 19 + mask_len + 8 * n;
    if bytes.len() != need {
        return Err(ConstructionError::Wire("payload length mismatch"));
    }
    let mask: Vec<bool> = (0..n)
        .map(|i| bytes[19 + i / 8] >> (i % 8) & 1 == 1)
        .collect();
    let pe_base = 19 + mask_len;
    let error_probs: Vec<f64> = (0..n)
        .map(|i| {
            f64::from_bits(u64::from_le_bytes(
                bytes[pe_base + 8 * i..pe_base + 8 * (i + 1)].try_into().unwrap(),
            ))
        })
        .collect();
    Ok(IndexSetProfile::from_parts(mask, error_probs, rule))
}
