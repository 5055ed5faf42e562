//! Joint source and side-information models.
//!
//! Everything downstream consumes one of two shapes:
//!
//! - [`PairDistribution`]: a joint pmf over one source letter X and one
//!   side-information letter Y. This is the unit the density-evolution
//!   recursion and the successive-cancellation decoder work over; the same
//!   shape also models a channel input/output pair by taking X as the channel
//!   input.
//! - [`JointSource`]: a joint pmf over X and K side-information letters, one
//!   per decoder. Per-decoder pairs are extracted by marginalizing the rest.
//!
//! Scalar functionals ([`PairDistribution::error_prob`],
//! [`PairDistribution::conditional_entropy`],
//! [`PairDistribution::bhattacharyya`]) quantify how informative the side
//! information is about the source letter.

use crate::galois::{FieldSpec, Symbol};
use rand::Rng;
use thiserror::Error;

/// Probability masses are validated to sum to one within this tolerance.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SourceError {
    #[error("probability mass sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("negative probability mass at flat index {index}")]
    NegativeMass { index: usize },
    #[error("expected {expected} mass entries, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("alphabet sizes must be nonzero")]
    EmptyAlphabet,
    #[error("operation requires a binary source alphabet, got size {0}")]
    BinaryOnly(usize),
    #[error("parameter {name} = {value} outside [0, 1]")]
    ParameterRange { name: &'static str, value: f64 },
    #[error("decoder index {index} out of range, source has {count} side alphabets")]
    NoSuchDecoder { index: usize, count: usize },
}

fn check_mass(mass: &[f64]) -> Result<(), SourceError> {
    for (index, &m) in mass.iter().enumerate() {
        if m < 0.0 || !m.is_finite() {
            return Err(SourceError::NegativeMass { index });
        }
    }
    let sum: f64 = mass.iter().sum();
    if (sum - 1.0).abs() > MASS_TOLERANCE {
        return Err(SourceError::NotNormalized { sum });
    }
    Ok(())
}

fn check_probability(name: &'static str, value: f64) -> Result<(), SourceError> {
    if !(0.0..=1.0).contains(&value) || !value.is_finite() {
        return Err(SourceError::ParameterRange { name, value });
    }
    Ok(())
}

/// Draws an index from `mass` (assumed normalized) by inverting the cdf.
fn sample_index<R: Rng>(mass: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &m) in mass.iter().enumerate() {
        acc += m;
        if u < acc {
            return i;
        }
    }
    // Rounding may leave a sliver of cdf below 1; attribute it to the last
    // positive-mass outcome.
    mass.iter().rposition(|&m| m > 0.0).unwrap_or(mass.len() - 1)
}

/// Joint pmf over a source letter `x` in `[0, x_size)` and a side letter `y`
/// in `[0, y_size)`, stored x-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistribution {
    x_size: usize,
    y_size: usize,
    mass: Vec<f64>,
}

impl PairDistribution {
    pub fn new(x_size: usize, y_size: usize, mass: Vec<f64>) -> Result<Self, SourceError> {
        if x_size == 0 || y_size == 0 {
            return Err(SourceError::EmptyAlphabet);
        }
        if mass.len() != x_size * y_size {
            return Err(SourceError::SizeMismatch {
                expected: x_size * y_size,
                got: mass.len(),
            });
        }
        check_mass(&mass)?;
        Ok(PairDistribution { x_size, y_size, mass })
    }

    /// Uniform binary X observed through a binary symmetric channel with
    /// crossover probability `p`.
    pub fn bsc(p: f64) -> Result<Self, SourceError> {
        check_probability("p", p)?;
        PairDistribution::new(2, 2, vec![0.5 * (1.0 - p), 0.5 * p, 0.5 * p, 0.5 * (1.0 - p)])
    }

    /// Uniform binary X observed through an erasure channel with erasure
    /// probability `e`. Side letter 2 is the erasure.
    pub fn bec(e: f64) -> Result<Self, SourceError> {
        check_probability("e", e)?;
        PairDistribution::new(
            2,
            3,
            vec![0.5 * (1.0 - e), 0.0, 0.5 * e, 0.0, 0.5 * (1.0 - e), 0.5 * e],
        )
    }

    /// Uniform X over `q` values with the side information equal to X.
    pub fn perfect(q: usize) -> Result<Self, SourceError> {
        if q == 0 {
            return Err(SourceError::EmptyAlphabet);
        }
        let mut mass = vec![0.0; q * q];
        for x in 0..q {
            mass[x * q + x] = 1.0 / q as f64;
        }
        PairDistribution::new(q, q, mass)
    }

    /// Uniform X over `q` values with a constant (uninformative) side letter.
    pub fn uninformative(q: usize) -> Result<Self, SourceError> {
        if q == 0 {
            return Err(SourceError::EmptyAlphabet);
        }
        PairDistribution::new(q, 1, vec![1.0 / q as f64; q])
    }

    /// Joint pmf assembled from a prior on X and a conditional `rows[x][y]`.
    pub fn from_conditional(prior: &[f64], rows: &[Vec<f64>]) -> Result<Self, SourceError> {
        let x_size = prior.len();
        if x_size == 0 || rows.len() != x_size {
            return Err(SourceError::SizeMismatch {
                expected: x_size,
                got: rows.len(),
            });
        }
        let y_size = rows[0].len();
        let mut mass = Vec::with_capacity(x_size * y_size);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != y_size {
                return Err(SourceError::SizeMismatch {
                    expected: y_size,
                    got: row.len(),
                });
            }
            for &w in row {
                mass.push(prior[x] * w);
            }
        }
        PairDistribution::new(x_size, y_size, mass)
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    #[inline]
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.mass[x * self.y_size + y]
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// P(Y = y).
    pub fn marginal_y(&self, y: usize) -> f64 {
        (0..self.x_size).map(|x| self.prob(x, y)).sum()
    }

    /// P(X = x).
    pub fn marginal_x(&self, x: usize) -> f64 {
        self.mass[x * self.y_size..(x + 1) * self.y_size].iter().sum()
    }

    /// Column of joint masses P(X = ., Y = y).
    pub fn column(&self, y: usize) -> Vec<f64> {
        (0..self.x_size).map(|x| self.prob(x, y)).collect()
    }

    /// Error probability of the maximum-a-posteriori estimate of X from Y:
    /// `1 - sum_y max_x P(x, y)`.
    pub fn error_prob(&self) -> f64 {
        let mut correct = 0.0;
        for y in 0..self.y_size {
            let mut best: f64 = 0.0;
            for x in 0..self.x_size {
                best = best.max(self.prob(x, y));
            }
            correct += best;
        }
        (1.0 - correct).max(0.0)
    }

    /// Conditional entropy H(X | Y) in units of log base `x_size`.
    pub fn conditional_entropy(&self) -> f64 {
        self.conditional_entropy_base(self.x_size as f64)
    }

    /// Conditional entropy H(X | Y) in bits.
    pub fn conditional_entropy_bits(&self) -> f64 {
        self.conditional_entropy_base(2.0)
    }

    fn conditional_entropy_base(&self, base: f64) -> f64 {
        let ln_base = base.ln();
        let mut h = 0.0;
        for y in 0..self.y_size {
            let py = self.marginal_y(y);
            if py <= 0.0 {
                continue;
            }
            for x in 0..self.x_size {
                let pxy = self.prob(x, y);
                if pxy > 0.0 {
                    h -= pxy * (pxy / py).ln() / ln_base;
                }
            }
        }
        h.max(0.0)
    }

    /// Mutual information I(X; Y) in bits.
    pub fn mutual_information_bits(&self) -> f64 {
        let mut hx = 0.0;
        for x in 0..self.x_size {
            let px = self.marginal_x(x);
            if px > 0.0 {
                hx -= px * px.log2();
            }
        }
        (hx - self.conditional_entropy_bits()).max(0.0)
    }

    /// Bhattacharyya parameter `Z(X | Y) = 2 sum_y sqrt(P(0, y) P(1, y))`.
    /// Defined for binary source alphabets only.
    pub fn bhattacharyya(&self) -> Result<f64, SourceError> {
        if self.x_size != 2 {
            return Err(SourceError::BinaryOnly(self.x_size));
        }
        let mut z = 0.0;
        for y in 0..self.y_size {
            z += (self.prob(0, y) * self.prob(1, y)).sqrt();
        }
        Ok(2.0 * z)
    }

    /// Draws one `(x, y)` pair.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (usize, usize) {
        let idx = sample_index(&self.mass, rng);
        (idx / self.y_size, idx % self.y_size)
    }

    /// Draws `n` i.i.d. pairs, returning the x-block and y-block separately.
    pub fn sample_block<R: Rng>(&self, n: usize, rng: &mut R) -> (Vec<u32>, Vec<u32>) {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let (x, y) = self.sample(rng);
            xs.push(x as u32);
            ys.push(y as u32);
        }
        (xs, ys)
    }
}

/// One i.i.d. sample block from a [`JointSource`]: the source word and one
/// side-information word per decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBlock {
    pub x: Vec<Symbol>,
    pub sides: Vec<Vec<u32>>,
}

/// Joint pmf over a field-valued source letter and K side-information
/// letters, stored with x as the most significant coordinate followed by the
/// side letters in decoder order.
#[derive(Debug, Clone)]
pub struct JointSource {
    field: FieldSpec,
    side_sizes: Vec<usize>,
    mass: Vec<f64>,
}

impl JointSource {
    pub fn new(field: FieldSpec, side_sizes: Vec<usize>, mass: Vec<f64>) -> Result<Self, SourceError> {
        if side_sizes.contains(&0) || side_sizes.is_empty() {
            return Err(SourceError::EmptyAlphabet);
        }
        let expected = field.order() as usize * side_sizes.iter().product::<usize>();
        if mass.len() != expected {
            return Err(SourceError::SizeMismatch {
                expected,
                got: mass.len(),
            });
        }
        check_mass(&mass)?;
        Ok(JointSource {
            field,
            side_sizes,
            mass,
        })
    }

    /// Builds a K-decoder source from per-decoder conditionals that are
    /// independent given X: `P(x, y_1..y_K) = P(x) prod_k W_k(y_k | x)`.
    pub fn from_independent_sides(
        field: FieldSpec,
        prior: &[f64],
        conditionals: &[Vec<Vec<f64>>],
    ) -> Result<Self, SourceError> {
        let q = field.order() as usize;
        if prior.len() != q {
            return Err(SourceError::SizeMismatch {
                expected: q,
                got: prior.len(),
            });
        }
        let side_sizes: Vec<usize> = conditionals.iter().map(|c| c[0].len()).collect();
        let total: usize = side_sizes.iter().product();
        let mut mass = Vec::with_capacity(q * total);
        for x in 0..q {
            for flat in 0..total {
                let mut rest = flat;
                let mut m = prior[x];
                // Decode the flat side index most-significant-first.
                for (k, &sz) in side_sizes.iter().enumerate().rev() {
                    let y = rest % sz;
                    rest /= sz;
                    m *= conditionals[k][x][y];
                }
                mass.push(m);
            }
        }
        JointSource::new(field, side_sizes, mass)
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn decoder_count(&self) -> usize {
        self.side_sizes.len()
    }

    pub fn side_sizes(&self) -> &[usize] {
        &self.side_sizes
    }

    /// Marginal pair (X, Y_k) for decoder `k`.
    pub fn pair(&self, k: usize) -> Result<PairDistribution, SourceError> {
        if k >= self.side_sizes.len() {
            return Err(SourceError::NoSuchDecoder {
                index: k,
                count: self.side_sizes.len(),
            });
        }
        let q = self.field.order() as usize;
        let yk = self.side_sizes[k];
        let mut mass = vec![0.0; q * yk];
        let total: usize = self.side_sizes.iter().product();
        for x in 0..q {
            for flat in 0..total {
                let y = side_coordinate(flat, &self.side_sizes, k);
                mass[x * yk + y] += self.mass[x * total + flat];
            }
        }
        PairDistribution::new(q, yk, mass)
    }

    /// Draws `n` i.i.d. joint letters; deterministic for a fixed rng state.
    pub fn sample_block<R: Rng>(&self, n: usize, rng: &mut R) -> SampleBlock {
        let total: usize = self.side_sizes.iter().product();
        let mut x = Vec::with_capacity(n);
        let mut sides: Vec<Vec<u32>> = self.side_sizes.iter().map(|_| Vec::with_capacity(n)).collect();
        for _ in 0..n {
            let idx = sample_index(&self.mass, rng);
            let xv = idx / total;
            let flat = idx % total;
            x.push(Symbol(xv as u8));
            for (k, side) in sides.iter_mut().enumerate() {
                side.push(side_coordinate(flat, &self.side_sizes, k) as u32);
            }
        }
        SampleBlock { x, sides }
    }
}

fn side_coordinate(flat: usize, sizes: &[usize], k: usize) -> usize {
    let mut rest = flat;
    let mut coord = 0;
    for (i, &sz) in sizes.iter().enumerate().rev() {
        coord = rest % sz;
        rest /= sz;
        if i == k {
            return coord;
        }
    }
    coord
}

/// A discrete memoryless channel as a row-stochastic matrix `rows[x][y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChannel {
    input_size: usize,
    output_size: usize,
    rows: Vec<f64>,
}

impl DiscreteChannel {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self, SourceError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(SourceError::EmptyAlphabet);
        }
        let output_size = rows[0].len();
        let mut flat = Vec::with_capacity(rows.len() * output_size);
        for row in rows {
            if row.len() != output_size {
                return Err(SourceError::SizeMismatch {
                    expected: output_size,
                    got: row.len(),
                });
            }
            for (i, &w) in row.iter().enumerate() {
                if w < 0.0 || !w.is_finite() {
                    return Err(SourceError::NegativeMass { index: i });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > MASS_TOLERANCE {
                return Err(SourceError::NotNormalized { sum });
            }
            flat.extend_from_slice(row);
        }
        Ok(DiscreteChannel {
            input_size: rows.len(),
            output_size,
            rows: flat,
        })
    }

    pub fn bsc(p: f64) -> Result<Self, SourceError> {
        check_probability("p", p)?;
        DiscreteChannel::new(&[vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    /// Binary erasure channel; output 2 is the erasure flag.
    pub fn bec(e: f64) -> Result<Self, SourceError> {
        check_probability("e", e)?;
        DiscreteChannel::new(&[vec![1.0 - e, 0.0, e], vec![0.0, 1.0 - e, e]])
    }

    pub fn identity(n: usize) -> Result<Self, SourceError> {
        if n == 0 {
            return Err(SourceError::EmptyAlphabet);
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        DiscreteChannel::new(&rows)
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn output_size(&self) -> usize {
        self.output_size
    }

    #[inline]
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.rows[x * self.output_size + y]
    }

    /// Joint input/output pair under the given input prior.
    pub fn pair_with_prior(&self, prior: &[f64]) -> Result<PairDistribution, SourceError> {
        let rows: Vec<Vec<f64>> = (0..self.input_size)
            .map(|x| (0..self.output_size).map(|y| self.prob(x, y)).collect())
            .collect();
        PairDistribution::from_conditional(prior, &rows)
    }

    pub fn transmit_one<R: Rng>(&self, x: usize, rng: &mut R) -> usize {
        sample_index(&self.rows[x * self.output_size..(x + 1) * self.output_size], rng)
    }
}

/// A broadcast channel with one input and K outputs, product-form across
/// users: `W(v_1..v_K | u) = prod_k W_k(v_k | u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastChannel {
    users: Vec<DiscreteChannel>,
}

impl BroadcastChannel {
    pub fn product(users: Vec<DiscreteChannel>) -> Result<Self, SourceError> {
        if users.is_empty() {
            return Err(SourceError::EmptyAlphabet);
        }
        let input = users[0].input_size();
        for u in &users {
            if u.input_size() != input {
                return Err(SourceError::SizeMismatch {
                    expected: input,
                    got: u.input_size(),
                });
            }
        }
        Ok(BroadcastChannel { users })
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn input_size(&self) -> usize {
        self.users[0].input_size()
    }

    /// Marginal channel seen by user `k`.
    pub fn marginal(&self, k: usize) -> Result<&DiscreteChannel, SourceError> {
        self.users.get(k).ok_or(SourceError::NoSuchDecoder {
            index: k,
            count: self.users.len(),
        })
    }

    /// Mutual information I(U; V_k) in bits under the given input prior.
    pub fn mutual_information_bits(&self, prior: &[f64], k: usize) -> Result<f64, SourceError> {
        Ok(self.marginal(k)?.pair_with_prior(prior)?.mutual_information_bits())
    }

    /// Sends the word `u` through all user channels independently; the k-th
    /// entry of the result is user k's received word.
    pub fn transmit<R: Rng>(&self, u: &[Symbol], rng: &mut R) -> Vec<Vec<u32>> {
        self.users
            .iter()
            .map(|ch| u.iter().map(|&s| ch.transmit_one(s.index(), rng) as u32).collect())
            .collect()
    }
}
