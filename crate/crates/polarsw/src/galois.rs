//! Finite-field arithmetic for prime and prime-power alphabets up to 256.
//!
//! A [`FieldSpec`] fixes the field GF(q) with q = p^r: the reduction modulus,
//! the primitive element, and dense multiplication/inverse tables so that the
//! hot transform and decoder loops are pure lookups. Elements are integers in
//! `[0, q)`; for extension fields the integer's base-p digits are the
//! coefficients of the residue polynomial, least significant digit first.
//!
//! The modulus is not configurable by default: for each `(p, r)` the field
//! uses the monic irreducible polynomial of degree r whose non-leading
//! coefficient vector, read as a base-p integer, is smallest. This makes two
//! independently constructed `FieldSpec`s for the same `(p, r)` byte-identical
//! and keeps serialized artifacts portable. An explicit modulus can still be
//! supplied when reconstructing a field from a config file.

use thiserror::Error;

/// Largest supported field order.
pub const MAX_ORDER: u32 = 256;

/// A field element: an integer in `[0, q)` under the encoding above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Symbol(pub u8);

impl Symbol {
    /// The zero element.
    pub const ZERO: Symbol = Symbol(0);
    /// The multiplicative identity.
    pub const ONE: Symbol = Symbol(1);

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for Symbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GaloisError {
    #[error("characteristic {0} is not prime")]
    NotPrime(u32),
    #[error("extension degree must be at least 1")]
    BadDegree,
    #[error("field order {0} exceeds the supported maximum {MAX_ORDER}")]
    FieldTooLarge(u32),
    #[error("symbol {value} out of range for field of order {q}")]
    SymbolOutOfRange { value: u32, q: u32 },
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("modulus must be monic of degree {expected}, got degree {got}")]
    ModulusDegree { expected: u32, got: u32 },
    #[error("modulus coefficient {0} is not reduced modulo the characteristic")]
    ModulusCoefficient(u32),
    #[error("modulus polynomial is reducible")]
    ModulusReducible,
}

/// A fully materialized finite field GF(p^r), q = p^r <= 256.
#[derive(Debug, Clone)]
pub struct FieldSpec {
    p: u32,
    r: u32,
    q: u32,
    /// Monic reduction modulus, coefficients `c_0..=c_r` with `c_r = 1`.
    /// For r = 1 this is the polynomial `x`, i.e. `[0, 1]`.
    modulus: Vec<u32>,
    alpha: Symbol,
    add_table: Vec<u8>,
    mul_table: Vec<u8>,
    neg_table: Vec<u8>,
    inv_table: Vec<u8>,
}

impl PartialEq for FieldSpec {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.r == other.r && self.modulus == other.modulus
    }
}

impl Eq for FieldSpec {}

impl FieldSpec {
    /// Builds GF(p^r) with the canonical (lexicographically smallest) modulus.
    pub fn new(p: u32, r: u32) -> Result<FieldSpec, GaloisError> {
        let modulus = canonical_modulus(p, r)?;
        Self::with_modulus(p, r, &modulus)
    }

    /// Builds GF(p^r) over an explicit monic irreducible modulus.
    ///
    /// `modulus` lists the r+1 coefficients `c_0..=c_r`, least degree first.
    pub fn with_modulus(p: u32, r: u32, modulus: &[u32]) -> Result<FieldSpec, GaloisError> {
        if !is_prime(p) {
            return Err(GaloisError::NotPrime(p));
        }
        if r == 0 {
            return Err(GaloisError::BadDegree);
        }
        let q = checked_order(p, r)?;
        let got = modulus.len().saturating_sub(1) as u32;
        if got != r || *modulus.last().unwrap_or(&0) != 1 {
            return Err(GaloisError::ModulusDegree { expected: r, got });
        }
        if let Some(&c) = modulus.iter().find(|&&c| c >= p) {
            return Err(GaloisError::ModulusCoefficient(c));
        }
        if r > 1 && !is_irreducible(modulus, p) {
            return Err(GaloisError::ModulusReducible);
        }

        let mut field = FieldSpec {
            p,
            r,
            q,
            modulus: modulus.to_vec(),
            alpha: Symbol::ZERO,
            add_table: Vec::new(),
            mul_table: Vec::new(),
            neg_table: Vec::new(),
            inv_table: Vec::new(),
        };
        field.build_tables();
        field.alpha = field.find_primitive().expect("every finite field has a primitive element");
        Ok(field)
    }

    pub fn characteristic(&self) -> u32 {
        self.p
    }

    pub fn degree(&self) -> u32 {
        self.r
    }

    /// Field order q = p^r.
    pub fn order(&self) -> u32 {
        self.q
    }

    pub fn modulus(&self) -> &[u32] {
        &self.modulus
    }

    /// The canonical primitive element: smallest value with multiplicative
    /// order q - 1.
    pub fn primitive_element(&self) -> Symbol {
        self.alpha
    }

    /// Validates an integer as a field element.
    pub fn symbol(&self, value: u32) -> Result<Symbol, GaloisError> {
        if value < self.q {
            Ok(Symbol(value as u8))
        } else {
            Err(GaloisError::SymbolOutOfRange { value, q: self.q })
        }
    }

    /// All field elements in value order.
    pub fn elements(&self) -> impl Iterator<Item = Symbol> {
        (0..self.q).map(|v| Symbol(v as u8))
    }

    #[inline]
    fn check(&self, s: Symbol) {
        assert!(
            (s.0 as u32) < self.q,
            "symbol {} out of range for GF({})",
            s.0,
            self.q
        );
    }

    #[inline]
    pub fn add(&self, a: Symbol, b: Symbol) -> Symbol {
        self.check(a);
        self.check(b);
        Symbol(self.add_table[a.index() * self.q as usize + b.index()])
    }

    #[inline]
    pub fn neg(&self, a: Symbol) -> Symbol {
        self.check(a);
        Symbol(self.neg_table[a.index()])
    }

    #[inline]
    pub fn sub(&self, a: Symbol, b: Symbol) -> Symbol {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn mul(&self, a: Symbol, b: Symbol) -> Symbol {
        self.check(a);
        self.check(b);
        Symbol(self.mul_table[a.index() * self.q as usize + b.index()])
    }

    /// Multiplicative inverse of a nonzero element.
    pub fn inv(&self, a: Symbol) -> Result<Symbol, GaloisError> {
        self.check(a);
        if a == Symbol::ZERO {
            return Err(GaloisError::ZeroInverse);
        }
        Ok(Symbol(self.inv_table[a.index()]))
    }

    /// `a` raised to the `k`-th power by repeated squaring; `pow(a, 0) = 1`
    /// for every `a`, including zero.
    pub fn pow(&self, a: Symbol, k: u64) -> Symbol {
        self.check(a);
        let mut base = a;
        let mut exp = k;
        let mut acc = Symbol::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    fn build_tables(&mut self) {
        let q = self.q as usize;
        self.add_table = vec![0; q * q];
        self.mul_table = vec![0; q * q];
        self.neg_table = vec![0; q];
        self.inv_table = vec![0; q];

        for a in 0..q as u32 {
            for b in 0..q as u32 {
                let sum = poly_to_value(
                    &poly_add(&value_to_poly(a, self.p, self.r), &value_to_poly(b, self.p, self.r), self.p),
                    self.p,
                );
                let prod = poly_to_value(
                    &poly_mul_mod(
                        &value_to_poly(a, self.p, self.r),
                        &value_to_poly(b, self.p, self.r),
                        &self.modulus,
                        self.p,
                    ),
                    self.p,
                );
                self.add_table[a as usize * q + b as usize] = sum as u8;
                self.mul_table[a as usize * q + b as usize] = prod as u8;
            }
        }
        for a in 0..q {
            for b in 0..q {
                if self.add_table[a * q + b] == 0 {
                    self.neg_table[a] = b as u8;
                }
                if a != 0 && self.mul_table[a * q + b] == 1 {
                    self.inv_table[a] = b as u8;
                }
            }
        }
    }

    fn find_primitive(&self) -> Option<Symbol> {
        let target = self.q - 1;
        for v in 1..self.q {
            let s = Symbol(v as u8);
            let mut acc = s;
            let mut order = 1u32;
            while acc != Symbol::ONE {
                acc = self.mul(acc, s);
                order += 1;
            }
            if order == target {
                return Some(s);
            }
        }
        None
    }
}

fn checked_order(p: u32, r: u32) -> Result<u32, GaloisError> {
    let mut q: u32 = 1;
    for _ in 0..r {
        q = q.checked_mul(p).ok_or(GaloisError::FieldTooLarge(u32::MAX))?;
        if q > MAX_ORDER {
            return Err(GaloisError::FieldTooLarge(q));
        }
    }
    Ok(q)
}

fn is_prime(p: u32) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// The canonical modulus: smallest monic irreducible polynomial of degree r,
/// ordering candidates by their non-leading coefficients read as a base-p
/// integer.
fn canonical_modulus(p: u32, r: u32) -> Result<Vec<u32>, GaloisError> {
    if !is_prime(p) {
        return Err(GaloisError::NotPrime(p));
    }
    if r == 0 {
        return Err(GaloisError::BadDegree);
    }
    checked_order(p, r)?;
    let candidates = p.pow(r);
    for c in 0..candidates {
        let mut poly = value_to_poly(c, p, r);
        poly.push(1); // monic leading coefficient
        if r == 1 || is_irreducible(&poly, p) {
            return Ok(poly);
        }
    }
    unreachable!("irreducible polynomials exist for every prime p and degree r")
}

/// Digits of `value` base p, least significant first, padded to length r.
fn value_to_poly(value: u32, p: u32, r: u32) -> Vec<u32> {
    let mut digits = vec![0; r as usize];
    let mut v = value;
    for d in digits.iter_mut() {
        *d = v % p;
        v /= p;
    }
    digits
}

fn poly_to_value(poly: &[u32], p: u32) -> u32 {
    poly.iter().rev().fold(0, |acc, &c| acc * p + c)
}

fn poly_add(a: &[u32], b: &[u32], p: u32) -> Vec<u32> {
    let len = a.len().max(b.len());
    (0..len)
        .map(|i| (a.get(i).unwrap_or(&0) + b.get(i).unwrap_or(&0)) % p)
        .collect()
}

fn poly_mul_mod(a: &[u32], b: &[u32], modulus: &[u32], p: u32) -> Vec<u32> {
    let mut prod = vec![0u32; a.len() + b.len()];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            prod[i + j] = (prod[i + j] + ai * bj) % p;
        }
    }
    poly_rem(&mut prod, modulus, p);
    prod.truncate(modulus.len() - 1);
    while prod.len() < modulus.len() - 1 {
        prod.push(0);
    }
    prod
}

/// Reduces `poly` in place modulo the monic `modulus`.
fn poly_rem(poly: &mut Vec<u32>, modulus: &[u32], p: u32) {
    let deg_m = modulus.len() - 1;
    while poly_degree(poly) >= deg_m as i64 && poly_degree(poly) >= 0 {
        let d = poly_degree(poly) as usize;
        if d < deg_m {
            break;
        }
        let lead = poly[d];
        let shift = d - deg_m;
        for (k, &mc) in modulus.iter().enumerate() {
            let idx = k + shift;
            let sub = (lead * mc) % p;
            poly[idx] = (poly[idx] + p - sub) % p;
        }
    }
    while poly.last() == Some(&0) {
        poly.pop();
    }
}

fn poly_degree(poly: &[u32]) -> i64 {
    match poly.iter().rposition(|&c| c != 0) {
        Some(d) => d as i64,
        None => -1,
    }
}

/// Tests irreducibility of a monic polynomial by trial division with every
/// monic polynomial of degree between 1 and deg/2. Field orders are capped at
/// 256, so the candidate space is tiny.
fn is_irreducible(poly: &[u32], p: u32) -> bool {
    let deg = poly_degree(poly);
    if deg <= 0 {
        return false;
    }
    if deg == 1 {
        return true;
    }
    for d in 1..=(deg as u32 / 2) {
        for c in 0..p.pow(d) {
            let mut divisor = value_to_poly(c, p, d);
            divisor.push(1);
            let mut rem = poly.to_vec();
            poly_rem(&mut rem, &divisor, p);
            if poly_degree(&rem) < 0 {
                return false;
            }
        }
    }
    true
}
