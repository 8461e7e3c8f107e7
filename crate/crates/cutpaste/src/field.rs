//! Arithmetic in F_{q^k} for prime q >= 5, in polynomial-basis representation.
//!
//! The modulus for a given `(p, k)` is always the same polynomial: the first
//! monic irreducible of degree `k` when candidates are ordered by ascending
//! index `sum c_i * p^i` of their non-leading coefficient vector. Elements
//! enumerate in the same index order, so `0` comes first and `1` second.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on the size of a constructible field. Enumeration-based
/// verification is pointless beyond this, and the modulus sieve stays cheap.
pub const FIELD_SIZE_CAP: u64 = 1 << 20;

/// Largest field for which full multiplication/addition tables are built.
pub const TABLE_SIZE_CAP: u64 = 1 << 11;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("characteristic {0} < 5 is not supported")]
    SmallCharacteristic(u64),
    #[error("field size {p}^{k} exceeds the enumeration cap {cap}")]
    SizeCap { p: u64, k: usize, cap: u64 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("element does not belong to this field")]
    WrongField,
    #[error("field of size {0} is too large for lookup tables")]
    TableCap(u64),
}

/// The field F_{p^k}, p prime >= 5, with a deterministic irreducible modulus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    p: u64,
    k: usize,
    /// Monic modulus, coefficient list `c0..=ck` (ck = 1). For k = 1 this is
    /// `[0, 1]`, i.e. the polynomial x, which induces the identity on F_p.
    modulus: Vec<u64>,
}

/// Element of a `Field`, as the length-k list of residues mod p
/// (`coeffs[i]` multiplies the i-th power of the adjoined root).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElem {
    coeffs: Vec<u64>,
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

// --- dense univariate arithmetic over F_p (helper layer for the modulus) ---

fn trim(mut v: Vec<u64>) -> Vec<u64> {
    while v.last() == Some(&0) {
        v.pop();
    }
    v
}

fn poly_mul(p: u64, a: &[u64], b: &[u64]) -> Vec<u64> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + ai * bj) % p;
        }
    }
    trim(out)
}

/// Remainder of `a` mod the monic polynomial `m`.
fn poly_rem(p: u64, a: &[u64], m: &[u64]) -> Vec<u64> {
    let deg_m = m.len() - 1;
    let mut r = a.to_vec();
    while r.len() > deg_m {
        let lead = r[r.len() - 1];
        if lead != 0 {
            let shift = r.len() - 1 - deg_m;
            for i in 0..deg_m {
                let t = (lead * m[i]) % p;
                let idx = shift + i;
                r[idx] = (r[idx] + p - t) % p;
            }
        }
        r.pop();
    }
    trim(r)
}

/// Extended Euclid over F_p[x]: returns (g, s) with s*a = g mod m, g monic.
fn poly_egcd(p: u64, a: &[u64], m: &[u64]) -> (Vec<u64>, Vec<u64>) {
    let mut r0 = m.to_vec();
    let mut r1 = trim(a.to_vec());
    let mut s0: Vec<u64> = vec![];
    let mut s1: Vec<u64> = vec![1];
    while !r1.is_empty() {
        // divide r0 by r1
        let inv_lead = mod_inv(p, r1[r1.len() - 1]);
        let mut q = vec![0u64; r0.len().saturating_sub(r1.len()) + 1];
        let mut rem = r0.clone();
        while rem.len() >= r1.len() && !rem.is_empty() {
            let c = (rem[rem.len() - 1] * inv_lead) % p;
            let shift = rem.len() - r1.len();
            if c != 0 {
                q[shift] = c;
                for i in 0..r1.len() {
                    let t = (c * r1[i]) % p;
                    rem[shift + i] = (rem[shift + i] + p - t) % p;
                }
            }
            rem.pop();
            rem = trim(rem);
            if rem.len() < r1.len() {
                break;
            }
        }
        let new_r = rem;
        let qs1 = poly_mul(p, &q, &s1);
        let mut new_s = s0.clone();
        new_s.resize(new_s.len().max(qs1.len()), 0);
        for (i, &c) in qs1.iter().enumerate() {
            new_s[i] = (new_s[i] + p - c) % p;
        }
        let new_s = trim(new_s);
        r0 = r1;
        s0 = s1;
        r1 = new_r;
        s1 = new_s;
    }
    // normalize g monic
    if r0.is_empty() {
        return (r0, s0);
    }
    let inv_lead = mod_inv(p, r0[r0.len() - 1]);
    let g = r0.iter().map(|&c| c * inv_lead % p).collect();
    let s = s0.iter().map(|&c| c * inv_lead % p).collect();
    (g, s)
}

fn mod_inv(p: u64, a: u64) -> u64 {
    // Fermat; p is prime and a != 0.
    mod_pow(p, a, p - 2)
}

fn mod_pow(p: u64, mut base: u64, mut e: u64) -> u64 {
    let mut acc = 1u64;
    base %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % p;
        }
        base = base * base % p;
        e >>= 1;
    }
    acc
}

/// x^(p^j) mod f, by iterating the p-th power map.
fn frobenius_power(p: u64, f: &[u64], j: usize) -> Vec<u64> {
    let mut h = vec![0, 1]; // x
    h = poly_rem(p, &h, f);
    for _ in 0..j {
        h = poly_pow_mod(p, &h, p, f);
    }
    h
}

fn poly_pow_mod(p: u64, base: &[u64], mut e: u64, f: &[u64]) -> Vec<u64> {
    let mut acc = vec![1u64];
    let mut b = base.to_vec();
    while e > 0 {
        if e & 1 == 1 {
            acc = poly_rem(p, &poly_mul(p, &acc, &b), f);
        }
        b = poly_rem(p, &poly_mul(p, &b, &b), f);
        e >>= 1;
    }
    acc
}

/// Rabin irreducibility test for a monic degree-k polynomial over F_p.
fn is_irreducible(p: u64, f: &[u64]) -> bool {
    let k = f.len() - 1;
    // x^(p^k) == x mod f
    let mut xqk = frobenius_power(p, f, k);
    // subtract x
    xqk.resize(xqk.len().max(2), 0);
    xqk[1] = (xqk[1] + p - 1) % p;
    if !trim(xqk).is_empty() {
        return false;
    }
    // for each prime divisor l of k: gcd(x^(p^(k/l)) - x, f) == 1
    let mut rem_k = k;
    let mut l = 2;
    let mut prime_divs = vec![];
    while l * l <= rem_k {
        if rem_k % l == 0 {
            prime_divs.push(l);
            while rem_k % l == 0 {
                rem_k /= l;
            }
        }
        l += 1;
    }
    if rem_k > 1 {
        prime_divs.push(rem_k);
    }
    for l in prime_divs {
        let mut h = frobenius_power(p, f, k / l);
        h.resize(h.len().max(2), 0);
        h[1] = (h[1] + p - 1) % p;
        let h = trim(h);
        let (g, _) = poly_egcd(p, &h, f);
        if g.len() != 1 {
            return false;
        }
    }
    true
}

impl Field {
    /// Construct F_{p^k} with the deterministic smallest irreducible modulus.
    pub fn new(p: u64, k: usize) -> Result<Field, FieldError> {
        if !is_prime(p) {
            return Err(FieldError::NotPrime(p));
        }
        if p < 5 {
            return Err(FieldError::SmallCharacteristic(p));
        }
        assert!(k >= 1, "extension degree must be positive");
        let mut size = 1u64;
        for _ in 0..k {
            size = size.checked_mul(p).unwrap_or(u64::MAX);
            if size > FIELD_SIZE_CAP {
                return Err(FieldError::SizeCap { p, k, cap: FIELD_SIZE_CAP });
            }
        }
        if k == 1 {
            return Ok(Field { p, k, modulus: vec![0, 1] });
        }
        // sieve monic degree-k candidates in ascending index order
        for idx in 0..size {
            let mut f = Vec::with_capacity(k + 1);
            let mut rest = idx;
            for _ in 0..k {
                f.push(rest % p);
                rest /= p;
            }
            f.push(1);
            if is_irreducible(p, &f) {
                return Ok(Field { p, k, modulus: f });
            }
        }
        unreachable!("an irreducible polynomial of every degree exists over F_p")
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn modulus(&self) -> &[u64] {
        &self.modulus
    }

    /// Number of elements, p^k.
    pub fn size(&self) -> u64 {
        self.p.pow(self.k as u32)
    }

    pub fn zero(&self) -> FieldElem {
        FieldElem { coeffs: vec![0; self.k] }
    }

    pub fn one(&self) -> FieldElem {
        self.from_int(1)
    }

    /// The constant element with residue `n mod p`.
    pub fn from_int(&self, n: u64) -> FieldElem {
        let mut coeffs = vec![0; self.k];
        coeffs[0] = n % self.p;
        FieldElem { coeffs }
    }

    fn check(&self, a: &FieldElem) -> Result<(), FieldError> {
        if a.coeffs.len() != self.k || a.coeffs.iter().any(|&c| c >= self.p) {
            return Err(FieldError::WrongField);
        }
        Ok(())
    }

    pub fn add(&self, a: &FieldElem, b: &FieldElem) -> FieldElem {
        let coeffs = a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(&x, &y)| (x + y) % self.p)
            .collect();
        FieldElem { coeffs }
    }

    pub fn sub(&self, a: &FieldElem, b: &FieldElem) -> FieldElem {
        let coeffs = a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(&x, &y)| (x + self.p - y) % self.p)
            .collect();
        FieldElem { coeffs }
    }

    pub fn neg(&self, a: &FieldElem) -> FieldElem {
        let coeffs = a.coeffs.iter().map(|&x| (self.p - x) % self.p).collect();
        FieldElem { coeffs }
    }

    pub fn mul(&self, a: &FieldElem, b: &FieldElem) -> FieldElem {
        let prod = poly_mul(self.p, &a.coeffs, &b.coeffs);
        let mut r = poly_rem(self.p, &prod, &self.modulus);
        r.resize(self.k, 0);
        FieldElem { coeffs: r }
    }

    pub fn inv(&self, a: &FieldElem) -> Result<FieldElem, FieldError> {
        if a.is_zero() {
            return Err(FieldError::DivisionByZero);
        }
        let (g, s) = poly_egcd(self.p, &a.coeffs, &self.modulus);
        debug_assert_eq!(g, vec![1], "modulus is irreducible, gcd must be 1");
        let mut s = poly_rem(self.p, &s, &self.modulus);
        s.resize(self.k, 0);
        Ok(FieldElem { coeffs: s })
    }

    pub fn div(&self, a: &FieldElem, b: &FieldElem) -> Result<FieldElem, FieldError> {
        Ok(self.mul(a, &self.inv(b)?))
    }

    pub fn pow(&self, a: &FieldElem, mut e: u64) -> FieldElem {
        let mut acc = self.one();
        let mut base = a.clone();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        acc
    }

    /// Checked arithmetic entry point matching the serialized op names.
    pub fn arith(&self, a: &FieldElem, b: &FieldElem, op: ArithOp) -> Result<FieldElem, FieldError> {
        self.check(a)?;
        self.check(b)?;
        match op {
            ArithOp::Add => Ok(self.add(a, b)),
            ArithOp::Sub => Ok(self.sub(a, b)),
            ArithOp::Mul => Ok(self.mul(a, b)),
            ArithOp::Div => self.div(a, b),
        }
    }

    /// Element with enumeration index `idx = sum coeffs[i] * p^i`.
    pub fn elem_from_index(&self, mut idx: u64) -> FieldElem {
        debug_assert!(idx < self.size());
        let mut coeffs = Vec::with_capacity(self.k);
        for _ in 0..self.k {
            coeffs.push(idx % self.p);
            idx /= self.p;
        }
        FieldElem { coeffs }
    }

    pub fn index_of(&self, a: &FieldElem) -> u64 {
        let mut idx = 0u64;
        for &c in a.coeffs.iter().rev() {
            idx = idx * self.p + c;
        }
        idx
    }

    /// All elements in the documented order (index ascending: 0 first, 1 second).
    pub fn enumerate(&self) -> impl Iterator<Item = FieldElem> + '_ {
        (0..self.size()).map(move |i| self.elem_from_index(i))
    }

    /// Embed a base-field residue as a constant of this field.
    pub fn embed_scalar(&self, residue: u64) -> FieldElem {
        self.from_int(residue)
    }

    /// Build full lookup tables for kernel-speed arithmetic.
    pub fn tables(&self) -> Result<FieldTables, FieldError> {
        let n = self.size();
        if n > TABLE_SIZE_CAP {
            return Err(FieldError::TableCap(n));
        }
        let n = n as usize;
        let elems: Vec<FieldElem> = self.enumerate().collect();
        let mut add = vec![0u32; n * n];
        let mut mul = vec![0u32; n * n];
        let mut neg = vec![0u32; n];
        let mut inv = vec![0u32; n];
        for i in 0..n {
            neg[i] = self.index_of(&self.neg(&elems[i])) as u32;
            if i > 0 {
                inv[i] = self.index_of(&self.inv(&elems[i]).unwrap()) as u32;
            }
            for j in 0..n {
                add[i * n + j] = self.index_of(&self.add(&elems[i], &elems[j])) as u32;
                mul[i * n + j] = self.index_of(&self.mul(&elems[i], &elems[j])) as u32;
            }
        }
        Ok(FieldTables { n, add, mul, neg, inv })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl FieldElem {
    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn from_coeffs(coeffs: Vec<u64>) -> FieldElem {
        FieldElem { coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }
}

/// Dense add/mul/neg/inv tables over element enumeration indices.
/// `inv[0]` is a sentinel 0 and must never be consulted.
pub struct FieldTables {
    pub n: usize,
    add: Vec<u32>,
    mul: Vec<u32>,
    neg: Vec<u32>,
    inv: Vec<u32>,
}

impl FieldTables {
    #[inline(always)]
    pub fn add(&self, a: u32, b: u32) -> u32 {
        self.add[a as usize * self.n + b as usize]
    }

    #[inline(always)]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        self.mul[a as usize * self.n + b as usize]
    }

    #[inline(always)]
    pub fn neg(&self, a: u32) -> u32 {
        self.neg[a as usize]
    }

    #[inline(always)]
    pub fn inv(&self, a: u32) -> u32 {
        debug_assert!(a != 0);
        self.inv[a as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prime_field_of_seven() {
        let f = Field::new(7, 1).unwrap();
        assert_eq!(f.size(), 7);
        let elems: Vec<u64> = f.enumerate().map(|e| f.index_of(&e)).collect();
        assert_eq!(elems, vec![0, 1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn four_is_not_prime() {
        assert_eq!(Field::new(4, 1), Err(FieldError::NotPrime(4)));
    }

    #[test]
    fn small_characteristic_rejected() {
        assert_eq!(Field::new(3, 1), Err(FieldError::SmallCharacteristic(3)));
        assert_eq!(Field::new(2, 2), Err(FieldError::SmallCharacteristic(2)));
    }

    #[test]
    fn f25_modulus_matches_root_search_sieve() {
        // Independent oracle: the first monic quadratic over F_5 (by index
        // order on [c0, c1]) with no root in F_5.
        let mut expected = None;
        'outer: for idx in 0..25u64 {
            let (c0, c1) = (idx % 5, idx / 5);
            for x in 0..5u64 {
                if (x * x + c1 * x + c0) % 5 == 0 {
                    continue 'outer;
                }
            }
            expected = Some(vec![c0, c1, 1]);
            break;
        }
        let f = Field::new(5, 2).unwrap();
        assert_eq!(f.size(), 25);
        assert_eq!(f.modulus(), expected.unwrap().as_slice());
        assert_eq!(f.enumerate().count(), 25);
    }

    #[test]
    fn inverse_of_three_in_f7() {
        let f = Field::new(7, 1).unwrap();
        let three = f.from_int(3);
        assert_eq!(f.index_of(&f.inv(&three).unwrap()), 5);
    }

    #[test]
    fn division_by_zero_errors() {
        let f = Field::new(7, 1).unwrap();
        assert_eq!(f.inv(&f.zero()), Err(FieldError::DivisionByZero));
        assert_eq!(
            f.arith(&f.one(), &f.zero(), ArithOp::Div),
            Err(FieldError::DivisionByZero)
        );
    }

    #[test]
    fn mixed_field_detected() {
        let f7 = Field::new(7, 1).unwrap();
        let f25 = Field::new(5, 2).unwrap();
        let a = f25.from_int(2);
        assert_eq!(f7.arith(&a, &f7.one(), ArithOp::Add), Err(FieldError::WrongField));
    }

    #[test]
    fn frobenius_fixes_every_element() {
        for (p, k) in [(7, 1), (5, 2), (7, 2)] {
            let f = Field::new(p, k).unwrap();
            for a in f.enumerate() {
                assert_eq!(f.pow(&a, f.size()), a);
            }
        }
    }

    #[test]
    fn sum_of_all_elements_is_zero() {
        for (p, k) in [(5, 1), (7, 1), (5, 2)] {
            let f = Field::new(p, k).unwrap();
            let total = f.enumerate().fold(f.zero(), |acc, e| f.add(&acc, &e));
            assert!(total.is_zero());
        }
    }

    #[test]
    fn enumeration_order_starts_zero_one() {
        let f = Field::new(5, 3).unwrap();
        let mut it = f.enumerate();
        assert_eq!(it.next().unwrap(), f.zero());
        assert_eq!(it.next().unwrap(), f.one());
        assert_eq!(f.enumerate().count() as u64, 125);
    }

    #[test]
    fn reconstruction_is_bit_identical() {
        for (p, k) in [(5, 2), (7, 3), (11, 2), (13, 1)] {
            let a = Field::new(p, k).unwrap();
            let b = Field::new(p, k).unwrap();
            assert_eq!(a.modulus(), b.modulus());
            assert!(a.enumerate().eq(b.enumerate()));
        }
    }

    #[test]
    fn size_cap_enforced() {
        assert!(matches!(Field::new(5, 10), Err(FieldError::SizeCap { .. })));
    }

    #[test]
    fn tables_agree_with_polynomial_arithmetic() {
        let f = Field::new(5, 2).unwrap();
        let t = f.tables().unwrap();
        for i in 0..f.size() {
            for j in 0..f.size() {
                let a = f.elem_from_index(i);
                let b = f.elem_from_index(j);
                assert_eq!(t.add(i as u32, j as u32) as u64, f.index_of(&f.add(&a, &b)));
                assert_eq!(t.mul(i as u32, j as u32) as u64, f.index_of(&f.mul(&a, &b)));
            }
            if i > 0 {
                let a = f.elem_from_index(i);
                assert_eq!(t.inv(i as u32) as u64, f.index_of(&f.inv(&a).unwrap()));
            }
        }
    }
}
