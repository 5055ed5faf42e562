//! Source coding with side information on polarizing transforms.
//!
//! The crate is organized as a pipeline:
//!
//! - [`galois`]: finite-field arithmetic GF(q), q = p^r <= 256.
//! - [`source`]: joint source/side-information models and their scalar
//!   functionals (error probability, conditional entropy, Bhattacharyya).
//! - [`transform`]: the N = 2^m polarizing transform and its inverse,
//!   including block-diagonal application across multiple blocks.
//! - [`construction`]: per-index reliability profiles (exact density
//!   evolution or genie-aided Monte Carlo) and index-set selection.
//! - [`sw`]: syndrome encoder and successive-cancellation decoder for
//!   compression with side information at the decoder.
//! - [`universal`]: chained multi-block codes serving several decoders with
//!   different side information, plus subset-addressed payload variants and
//!   chain-length optimization.
//! - [`jscc`]: joint source-channel coding over a broadcast channel, carrying
//!   the subset payloads inside channel-code information sets.

pub mod galois;
pub mod source;
pub mod construction;
pub mod sw;
pub mod transform;
pub mod universal;
pub mod jscc;
