//! Symbolic Grothendieck-ring classes and the cancellation-proof engine.
//!
//! A class is an integer polynomial in the Lefschetz symbol `L` plus a formal
//! sum of opaque atoms, each multiplied by an `L`-polynomial. Projective-space
//! symbols are expanded on sight, so structural equality of canonical forms
//! decides class equality. Atoms are never multiplied by each other; the
//! underlying argument never needs such products.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KvarError {
    #[error("atom product unsupported")]
    AtomProduct,
    #[error("unbound atom \"{0}\" in realization")]
    UnboundAtom(String),
    #[error("hyperplane-complement index k={k} out of range for m={m}")]
    IndexRange { m: u32, k: u32 },
    #[error("parse error: {0}")]
    Parse(String),
}

/// Integer-coefficient polynomial in L; `coeffs[i]` multiplies `L^i`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LPoly(pub Vec<i64>);

impl LPoly {
    pub fn zero() -> LPoly {
        LPoly(vec![])
    }

    pub fn constant(c: i64) -> LPoly {
        if c == 0 { LPoly(vec![]) } else { LPoly(vec![c]) }
    }

    pub fn lefschetz() -> LPoly {
        LPoly(vec![0, 1])
    }

    fn trim(mut self) -> LPoly {
        while self.0.last() == Some(&0) {
            self.0.pop();
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn add(&self, other: &LPoly) -> LPoly {
        let n = self.0.len().max(other.0.len());
        let mut out = vec![0i64; n];
        for (i, &c) in self.0.iter().enumerate() {
            out[i] += c;
        }
        for (i, &c) in other.0.iter().enumerate() {
            out[i] += c;
        }
        LPoly(out).trim()
    }

    pub fn neg(&self) -> LPoly {
        LPoly(self.0.iter().map(|&c| -c).collect())
    }

    pub fn sub(&self, other: &LPoly) -> LPoly {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: i64) -> LPoly {
        if c == 0 {
            return LPoly::zero();
        }
        LPoly(self.0.iter().map(|&x| x * c).collect())
    }

    pub fn mul(&self, other: &LPoly) -> LPoly {
        if self.is_zero() || other.is_zero() {
            return LPoly::zero();
        }
        let mut out = vec![0i64; self.0.len() + other.0.len() - 1];
        for (i, &a) in self.0.iter().enumerate() {
            for (j, &b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        LPoly(out).trim()
    }

    pub fn pow(&self, e: u32) -> LPoly {
        let mut acc = LPoly::constant(1);
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn eval(&self, x: i128) -> i128 {
        let mut acc = 0i128;
        for &c in self.0.iter().rev() {
            acc = acc * x + c as i128;
        }
        acc
    }
}

/// Canonical Grothendieck-ring class.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KClass {
    pub lpoly: LPoly,
    pub atoms: BTreeMap<String, LPoly>,
}

/// Realization homomorphisms out of the ring: point counting sends L to q,
/// Euler characteristic sends L to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Count { q: i128 },
    Euler,
}

impl KClass {
    pub fn zero() -> KClass {
        KClass::default()
    }

    pub fn from_lpoly(lpoly: LPoly) -> KClass {
        KClass { lpoly: lpoly.trim(), atoms: BTreeMap::new() }
    }

    pub fn integer(c: i64) -> KClass {
        KClass::from_lpoly(LPoly::constant(c))
    }

    pub fn lefschetz() -> KClass {
        KClass::from_lpoly(LPoly::lefschetz())
    }

    /// `[P^n] = L^n + ... + L + 1`, expanded immediately.
    pub fn projective(n: u32) -> KClass {
        KClass::from_lpoly(LPoly(vec![1; n as usize + 1]))
    }

    pub fn atom(name: &str) -> KClass {
        let mut atoms = BTreeMap::new();
        atoms.insert(name.to_string(), LPoly::constant(1));
        KClass { lpoly: LPoly::zero(), atoms }
    }

    fn prune(mut self) -> KClass {
        self.atoms.retain(|_, v| !v.is_zero());
        self
    }

    pub fn is_atom_free(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn add(&self, other: &KClass) -> KClass {
        let mut atoms = self.atoms.clone();
        for (k, v) in &other.atoms {
            let entry = atoms.entry(k.clone()).or_default();
            *entry = entry.add(v);
        }
        KClass { lpoly: self.lpoly.add(&other.lpoly), atoms }.prune()
    }

    pub fn neg(&self) -> KClass {
        KClass {
            lpoly: self.lpoly.neg(),
            atoms: self.atoms.iter().map(|(k, v)| (k.clone(), v.neg())).collect(),
        }
    }

    pub fn sub(&self, other: &KClass) -> KClass {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: i64) -> KClass {
        KClass {
            lpoly: self.lpoly.scale(c),
            atoms: self.atoms.iter().map(|(k, v)| (k.clone(), v.scale(c))).collect(),
        }
        .prune()
    }

    pub fn mul_lpoly(&self, l: &LPoly) -> KClass {
        KClass {
            lpoly: self.lpoly.mul(l),
            atoms: self.atoms.iter().map(|(k, v)| (k.clone(), v.mul(l))).collect(),
        }
        .prune()
    }

    /// Ring product. Errors if both factors carry atoms.
    pub fn mul(&self, other: &KClass) -> Result<KClass, KvarError> {
        if !self.atoms.is_empty() && !other.atoms.is_empty() {
            return Err(KvarError::AtomProduct);
        }
        if other.atoms.is_empty() {
            Ok(self.mul_lpoly(&other.lpoly))
        } else {
            Ok(other.mul_lpoly(&self.lpoly))
        }
    }

    pub fn pow(&self, e: u32) -> Result<KClass, KvarError> {
        let mut acc = KClass::integer(1);
        for _ in 0..e {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }

    /// Evaluate under a measure, with caller-supplied integer values for atoms.
    pub fn realize(&self, measure: Measure, bindings: &BTreeMap<String, i128>) -> Result<i128, KvarError> {
        let x = match measure {
            Measure::Count { q } => q,
            Measure::Euler => 1,
        };
        let mut total = self.lpoly.eval(x);
        for (name, l) in &self.atoms {
            let v = bindings
                .get(name)
                .ok_or_else(|| KvarError::UnboundAtom(name.clone()))?;
            total += l.eval(x) * v;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub lhs: KClass,
    pub rhs: KClass,
    pub label: String,
}

impl Relation {
    pub fn new(lhs: KClass, rhs: KClass, label: impl Into<String>) -> Relation {
        Relation { lhs, rhs, label: label.into() }
    }

    pub fn holds_trivially(&self) -> bool {
        self.lhs == self.rhs
    }

    fn sub_scaled(&self, other: &Relation, c: i64, label: impl Into<String>) -> Relation {
        Relation {
            lhs: self.lhs.sub(&other.lhs.scale(c)),
            rhs: self.rhs.sub(&other.rhs.scale(c)),
            label: label.into(),
        }
    }

    fn scaled(&self, c: i64, label: impl Into<String>) -> Relation {
        Relation { lhs: self.lhs.scale(c), rhs: self.rhs.scale(c), label: label.into() }
    }
}

/// One replayable proof step: which operation was applied and the relation
/// it produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub op: StepOp,
    pub description: String,
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepOp {
    /// Take hypothesis `index` as the current relation.
    Start { index: usize },
    /// current := current - coeff * hypotheses[index]
    SubtractScaled { index: usize, coeff: i64 },
    /// current := coeff * current
    Scale { coeff: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub m: u32,
    pub hypotheses: Vec<Relation>,
    pub steps: Vec<Step>,
    pub conclusion: Relation,
}

pub const ATOM_X: &str = "X";
pub const ATOM_XTILDE: &str = "Xtilde";
pub const ATOM_X0: &str = "X0";
pub const ATOM_Z: &str = "Z";
pub const ATOM_FIBER_INF: &str = "S∞";

/// The three-term decomposition of the total space: the affine-chart open
/// part, the fiber at infinity, and the excluded curve times a line.
pub fn fiber_decomposition(m: u32) -> Relation {
    assert!(m >= 1);
    let rhs = KClass::atom(ATOM_X0)
        .add(&KClass::atom(ATOM_FIBER_INF))
        .add(&KClass::atom(ATOM_Z).mul_lpoly(&LPoly::lefschetz()));
    Relation::new(KClass::atom(ATOM_X), rhs, format!("fiber decomposition (m={m})"))
}

/// Class of `A^k x (A^1 \ 0)^(m-k)`, expanded.
pub fn hyperplane_complement(m: u32, k: u32) -> Result<KClass, KvarError> {
    if k >= m {
        return Err(KvarError::IndexRange { m, k });
    }
    let l = LPoly::lefschetz();
    let l_minus_1 = l.sub(&LPoly::constant(1));
    Ok(KClass::from_lpoly(l.pow(k).mul(&l_minus_1.pow(m - k))))
}

/// The hypothesis set: `A L^k = B L^k` for 1 <= k <= m+1 and
/// `A L^k (L-1)^(m-k) = B L^k (L-1)^(m-k)` for 0 <= k < m.
pub fn generate_relations(m: u32) -> Vec<Relation> {
    assert!(m >= 1);
    let a = KClass::atom(ATOM_X);
    let b = KClass::atom(ATOM_XTILDE);
    let l = LPoly::lefschetz();
    let l_minus_1 = l.sub(&LPoly::constant(1));
    let mut out = Vec::new();
    for k in 1..=m + 1 {
        let factor = l.pow(k);
        out.push(Relation::new(
            a.mul_lpoly(&factor),
            b.mul_lpoly(&factor),
            format!("[X]·L^{k} = [X̃]·L^{k}"),
        ));
    }
    for k in 0..m {
        let factor = l.pow(k).mul(&l_minus_1.pow(m - k));
        out.push(Relation::new(
            a.mul_lpoly(&factor),
            b.mul_lpoly(&factor),
            format!("[X]·L^{k}·(L−1)^{} = [X̃]·L^{k}·(L−1)^{}", m - k, m - k),
        ));
    }
    out
}

fn binomial(n: u32, k: u32) -> i64 {
    let mut acc: i64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i64 / (i + 1) as i64;
    }
    acc
}

/// Build the transcript cancelling the binomial expansion of
/// `A (L-1)^m = B (L-1)^m` against the `A L^j = B L^j` relations, concluding
/// `A = B`.
pub fn cancellation_derive(m: u32) -> Derivation {
    assert!(m >= 1);
    let hypotheses = generate_relations(m);
    // hypothesis layout: 0..m+1 are the L^k relations (k = index+1),
    // m+1..2m+1 are the L^k (L-1)^(m-k) relations (k = index-(m+1)).
    let start_idx = (m + 1) as usize; // k = 0: A (L-1)^m = B (L-1)^m
    let mut steps = Vec::new();
    let mut current = hypotheses[start_idx].clone();
    steps.push(Step {
        op: StepOp::Start { index: start_idx },
        description: format!("start from the k=0 relation, (L−1)^{m} expanded binomially"),
        relation: current.clone(),
    });
    for j in (1..=m).rev() {
        let coeff = binomial(m, j) * if (m - j) % 2 == 0 { 1 } else { -1 };
        let idx = (j - 1) as usize;
        current = current.sub_scaled(
            &hypotheses[idx],
            coeff,
            format!("after cancelling the L^{j} term"),
        );
        steps.push(Step {
            op: StepOp::SubtractScaled { index: idx, coeff },
            description: format!("subtract {coeff} × ([X]·L^{j} = [X̃]·L^{j})"),
            relation: current.clone(),
        });
    }
    let sign = if m % 2 == 0 { 1 } else { -1 };
    current = current.scaled(sign, "[X] = [X̃]");
    steps.push(Step {
        op: StepOp::Scale { coeff: sign },
        description: format!("multiply both sides by (−1)^{m}"),
        relation: current.clone(),
    });
    Derivation { m, hypotheses, steps, conclusion: current }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("hypothesis set does not match the Prop./Cor. relation set for m={0}")]
    WrongHypotheses(u32),
    #[error("step {0} does not follow from the previous state")]
    StepMismatch(usize),
    #[error("step {0} starts from an unknown hypothesis")]
    BadIndex(usize),
    #[error("conclusion is not [X] = [X̃]")]
    WrongConclusion,
    #[error("derivation has no steps")]
    Empty,
}

/// Independent replay of a derivation. Every relation is re-expanded from
/// scratch: `L^k` and `(L-1)^(m-k)` factors are rebuilt by repeated
/// multiplication (no binomial shortcut), each step is recomputed with fresh
/// ring arithmetic, and the recorded intermediate must match structurally.
pub fn replay(d: &Derivation) -> Result<(), ReplayError> {
    let m = d.m;
    // re-derive the expected hypothesis set by iterated multiplication
    let a = KClass::atom(ATOM_X);
    let b = KClass::atom(ATOM_XTILDE);
    let l = LPoly::lefschetz();
    let lm1 = l.sub(&LPoly::constant(1));
    let mut expected = Vec::new();
    for k in 1..=m + 1 {
        let mut fa = a.clone();
        let mut fb = b.clone();
        for _ in 0..k {
            fa = fa.mul_lpoly(&l);
            fb = fb.mul_lpoly(&l);
        }
        expected.push((fa, fb));
    }
    for k in 0..m {
        let mut fa = a.clone();
        let mut fb = b.clone();
        for _ in 0..k {
            fa = fa.mul_lpoly(&l);
            fb = fb.mul_lpoly(&l);
        }
        for _ in 0..m - k {
            fa = fa.mul_lpoly(&lm1);
            fb = fb.mul_lpoly(&lm1);
        }
        expected.push((fa, fb));
    }
    if d.hypotheses.len() != expected.len() {
        return Err(ReplayError::WrongHypotheses(m));
    }
    for (h, (ea, eb)) in d.hypotheses.iter().zip(&expected) {
        if &h.lhs != ea || &h.rhs != eb {
            return Err(ReplayError::WrongHypotheses(m));
        }
    }
    // replay steps
    let mut current: Option<(KClass, KClass)> = None;
    for (i, step) in d.steps.iter().enumerate() {
        let next = match step.op {
            StepOp::Start { index } => {
                let h = d.hypotheses.get(index).ok_or(ReplayError::BadIndex(i))?;
                (h.lhs.clone(), h.rhs.clone())
            }
            StepOp::SubtractScaled { index, coeff } => {
                let (cl, cr) = current.ok_or(ReplayError::StepMismatch(i))?;
                let h = d.hypotheses.get(index).ok_or(ReplayError::BadIndex(i))?;
                (cl.sub(&h.lhs.scale(coeff)), cr.sub(&h.rhs.scale(coeff)))
            }
            StepOp::Scale { coeff } => {
                let (cl, cr) = current.ok_or(ReplayError::StepMismatch(i))?;
                (cl.scale(coeff), cr.scale(coeff))
            }
        };
        if next.0 != step.relation.lhs || next.1 != step.relation.rhs {
            return Err(ReplayError::StepMismatch(i));
        }
        current = Some(next);
    }
    let (cl, cr) = current.ok_or(ReplayError::Empty)?;
    if cl != d.conclusion.lhs || cr != d.conclusion.rhs {
        return Err(ReplayError::WrongConclusion);
    }
    if d.conclusion.lhs != KClass::atom(ATOM_X) || d.conclusion.rhs != KClass::atom(ATOM_XTILDE) {
        return Err(ReplayError::WrongConclusion);
    }
    Ok(())
}

// --- class expression parser -------------------------------------------------

/// Parse the CLI/config class-expression syntax: `P(n)`, `L`, integer
/// literals, atoms in square brackets, `+`, `-`, `*`, `^`, parentheses.
pub fn parse_class(input: &str) -> Result<KClass, KvarError> {
    let mut p = Parser { input: input.as_bytes(), pos: 0 };
    let c = p.expr()?;
    p.skip_ws();
    if p.pos != p.input.len() {
        return Err(KvarError::Parse(format!("trailing input at byte {}", p.pos)));
    }
    Ok(c)
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.input.len() && self.input[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.input.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<KClass, KvarError> {
        let mut acc = if self.peek() == Some(b'-') {
            self.pos += 1;
            self.term()?.neg()
        } else {
            self.term()?
        };
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<KClass, KvarError> {
        let mut acc = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            acc = acc.mul(&self.factor()?)?;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<KClass, KvarError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let e = self.integer()? as u32;
            return base.pow(e);
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i64, KvarError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.input.len() && self.input[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(KvarError::Parse(format!("expected integer at byte {start}")));
        }
        std::str::from_utf8(&self.input[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|e| KvarError::Parse(format!("{e}")))
    }

    fn primary(&mut self) -> Result<KClass, KvarError> {
        match self.peek() {
            Some(b'L') => {
                self.pos += 1;
                Ok(KClass::lefschetz())
            }
            Some(b'P') => {
                self.pos += 1;
                if self.peek() != Some(b'(') {
                    return Err(KvarError::Parse("expected '(' after P".into()));
                }
                self.pos += 1;
                let n = self.integer()?;
                if self.peek() != Some(b')') {
                    return Err(KvarError::Parse("expected ')' closing P(n)".into()));
                }
                self.pos += 1;
                Ok(KClass::projective(n as u32))
            }
            Some(b'[') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.input.len() && self.input[self.pos] != b']' {
                    self.pos += 1;
                }
                if self.pos == self.input.len() {
                    return Err(KvarError::Parse("unterminated atom bracket".into()));
                }
                let name = std::str::from_utf8(&self.input[start..self.pos])
                    .map_err(|_| KvarError::Parse("atom name is not UTF-8".into()))?
                    .to_string();
                self.pos += 1;
                Ok(KClass::atom(&name))
            }
            Some(b'(') => {
                self.pos += 1;
                let c = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(KvarError::Parse("expected ')'".into()));
                }
                self.pos += 1;
                Ok(c)
            }
            Some(d) if d.is_ascii_digit() => Ok(KClass::integer(self.integer()?)),
            other => Err(KvarError::Parse(format!("unexpected token {other:?}"))),
        }
    }
}
