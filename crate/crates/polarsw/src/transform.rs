//! The polarizing transform u = x G_N and its inverse.
//!
//! The kernel is the 2x2 lower-triangular matrix
//!
//! ```text
//!   G = | 1  0 |
//!       | g  1 |
//! ```
//!
//! with twist g = 1 over prime fields and g = alpha (the canonical primitive
//! element) over extension fields. G_N is the m-fold Kronecker power of G
//! acting on row vectors of length N = 2^m, with **no** bit-reversal
//! permutation: splitting x into halves (a, b),
//!
//! ```text
//!   x G_N = ((a + g b) G_{N/2}, b G_{N/2})
//! ```
//!
//! which unrolls into an in-place butterfly whose stage strides run from N/2
//! down to 1. The inverse runs the strides in the opposite order with the
//! twist negated. A [`TransformSpec`] fixes the kernel, depth, and a block
//! count t; length-tN inputs are transformed blockwise (the block-diagonal
//! operator diag(G_N, ..., G_N)).

use crate::galois::{FieldSpec, Symbol};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error("transform depth must be at least 1")]
    BadDepth,
    #[error("block count must be at least 1")]
    BadBlockCount,
    #[error("input length {got} does not match {blocks} blocks of {block_len}")]
    LengthMismatch {
        got: usize,
        blocks: usize,
        block_len: usize,
    },
}

/// The 2x2 polarizing kernel over a fixed field.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarKernel {
    field: FieldSpec,
    twist: Symbol,
}

impl PolarKernel {
    /// The canonical kernel for the field: twist 1 over prime fields, twist
    /// alpha over proper extensions.
    pub fn for_field(field: FieldSpec) -> PolarKernel {
        let twist = if field.degree() == 1 {
            Symbol::ONE
        } else {
            field.primitive_element()
        };
        PolarKernel { field, twist }
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn twist(&self) -> Symbol {
        self.twist
    }

    /// The kernel as a row-major matrix `[[1, 0], [g, 1]]`.
    pub fn matrix(&self) -> [[Symbol; 2]; 2] {
        [[Symbol::ONE, Symbol::ZERO], [self.twist, Symbol::ONE]]
    }
}

/// Depth-m transform applied independently to `blocks` consecutive blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    kernel: PolarKernel,
    m: u32,
    blocks: usize,
}

impl TransformSpec {
    pub fn new(kernel: PolarKernel, m: u32, blocks: usize) -> Result<TransformSpec, TransformError> {
        if m == 0 {
            return Err(TransformError::BadDepth);
        }
        if blocks == 0 {
            return Err(TransformError::BadBlockCount);
        }
        Ok(TransformSpec { kernel, m, blocks })
    }

    pub fn kernel(&self) -> &PolarKernel {
        &self.kernel
    }

    pub fn field(&self) -> &FieldSpec {
        self.kernel.field()
    }

    pub fn depth(&self) -> u32 {
        self.m
    }

    /// N = 2^m.
    pub fn block_len(&self) -> usize {
        1usize << self.m
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Total input length t * N.
    pub fn total_len(&self) -> usize {
        self.blocks * self.block_len()
    }

    /// A copy of this spec with a different block count.
    pub fn with_blocks(&self, blocks: usize) -> Result<TransformSpec, TransformError> {
        TransformSpec::new(self.kernel.clone(), self.m, blocks)
    }

    fn check_len(&self, got: usize) -> Result<(), TransformError> {
        if got != self.total_len() {
            return Err(TransformError::LengthMismatch {
                got,
                blocks: self.blocks,
                block_len: self.block_len(),
            });
        }
        Ok(())
    }

    /// u = x G_N per block.
    pub fn forward(&self, x: &[Symbol]) -> Result<Vec<Symbol>, TransformError> {
        self.check_len(x.len())?;
        let mut out = x.to_vec();
        self.forward_in_place(&mut out)?;
        Ok(out)
    }

    /// x = u G_N^{-1} per block.
    pub fn inverse(&self, u: &[Symbol]) -> Result<Vec<Symbol>, TransformError> {
        self.check_len(u.len())?;
        let mut out = u.to_vec();
        self.inverse_in_place(&mut out)?;
        Ok(out)
    }

    pub fn forward_in_place(&self, buf: &mut [Symbol]) -> Result<(), TransformError> {
        self.check_len(buf.len())?;
        let n = self.block_len();
        let f = self.kernel.field();
        let g = self.kernel.twist();
        for block in buf.chunks_mut(n) {
            let mut h = n / 2;
            while h >= 1 {
                let mut start = 0;
                while start < n {
                    for j in start..start + h {
                        block[j] = f.add(block[j], f.mul(g, block[j + h]));
                    }
                    start += 2 * h;
                }
                h /= 2;
            }
        }
        Ok(())
    }

    pub fn inverse_in_place(&self, buf: &mut [Symbol]) -> Result<(), TransformError> {
        self.check_len(buf.len())?;
        let n = self.block_len();
        let f = self.kernel.field();
        let g = self.kernel.twist();
        for block in buf.chunks_mut(n) {
            let mut h = 1;
            while h <= n / 2 {
                let mut start = 0;
                while start < n {
                    for j in start..start + h {
                        block[j] = f.sub(block[j], f.mul(g, block[j + h]));
                    }
                    start += 2 * h;
                }
                h *= 2;
            }
        }
        Ok(())
    }
}
