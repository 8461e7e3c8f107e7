//! Sparse multivariate polynomials over a `Field`.
//!
//! Terms are kept in canonical graded-lex order (total degree descending,
//! then exponent vector descending), with no zero coefficients and no
//! duplicate exponent vectors. Variables are globally ordered per space:
//! `(x0..x3, t0, t1)` for pencil space and `(x0..x3, y0..ym, lambda)` for
//! universal-family space.

use crate::field::{Field, FieldElem};
use crate::seed::SeededRng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolyError {
    #[error("point has {got} coordinates, polynomial has {want} variables")]
    DimensionMismatch { want: usize, got: usize },
    #[error("substitution list has {got} entries, polynomial has {want} variables")]
    SubstitutionArity { want: usize, got: usize },
    #[error("term does not match the declared grading")]
    GradingViolation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub exps: Vec<u32>,
    pub coeff: FieldElem,
}

/// Per-variable-block degree metadata, e.g. bidegree (3, m) split between
/// the x-block and the t-block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub vars: Range<usize>,
    pub degree: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MPoly {
    nvars: usize,
    terms: Vec<Term>,
    grading: Option<Vec<Block>>,
}

fn term_cmp(a: &[u32], b: &[u32]) -> Ordering {
    let da: u32 = a.iter().sum();
    let db: u32 = b.iter().sum();
    db.cmp(&da).then_with(|| b.cmp(a))
}

impl MPoly {
    pub fn new(field: &Field, nvars: usize, terms: Vec<Term>) -> MPoly {
        let mut p = MPoly { nvars, terms, grading: None };
        p.normalize(field);
        p
    }

    pub fn zero(nvars: usize) -> MPoly {
        MPoly { nvars, terms: vec![], grading: None }
    }

    pub fn constant(field: &Field, nvars: usize, c: FieldElem) -> MPoly {
        MPoly::new(field, nvars, vec![Term { exps: vec![0; nvars], coeff: c }])
    }

    /// The single variable `var` as a polynomial.
    pub fn variable(field: &Field, nvars: usize, var: usize) -> MPoly {
        let mut exps = vec![0; nvars];
        exps[var] = 1;
        MPoly::new(field, nvars, vec![Term { exps, coeff: field.one() }])
    }

    fn normalize(&mut self, field: &Field) {
        for t in &self.terms {
            assert_eq!(t.exps.len(), self.nvars);
        }
        self.terms.sort_by(|a, b| term_cmp(&a.exps, &b.exps));
        let mut out: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match out.last_mut() {
                Some(last) if last.exps == t.exps => {
                    last.coeff = field.add(&last.coeff, &t.coeff);
                }
                _ => out.push(t),
            }
        }
        out.retain(|t| !t.coeff.is_zero());
        self.terms = out;
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn grading(&self) -> Option<&[Block]> {
        self.grading.as_deref()
    }

    /// Attach grading metadata, verifying every term against it.
    pub fn with_grading(mut self, blocks: Vec<Block>) -> Result<MPoly, PolyError> {
        let ok = self.terms.iter().all(|t| {
            blocks
                .iter()
                .all(|b| t.exps[b.vars.clone()].iter().sum::<u32>() == b.degree)
        });
        if !ok {
            return Err(PolyError::GradingViolation);
        }
        self.grading = Some(blocks);
        Ok(self)
    }

    pub fn add(&self, field: &Field, other: &MPoly) -> MPoly {
        assert_eq!(self.nvars, other.nvars);
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        let grading = if self.grading == other.grading { self.grading.clone() } else { None };
        let mut p = MPoly { nvars: self.nvars, terms, grading };
        p.normalize(field);
        p
    }

    pub fn sub(&self, field: &Field, other: &MPoly) -> MPoly {
        self.add(field, &other.scale(field, &field.neg(&field.one())))
    }

    pub fn scale(&self, field: &Field, c: &FieldElem) -> MPoly {
        let terms = self
            .terms
            .iter()
            .map(|t| Term { exps: t.exps.clone(), coeff: field.mul(&t.coeff, c) })
            .collect();
        let mut p = MPoly { nvars: self.nvars, terms, grading: self.grading.clone() };
        p.normalize(field);
        p
    }

    pub fn mul(&self, field: &Field, other: &MPoly) -> MPoly {
        assert_eq!(self.nvars, other.nvars);
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let exps = a.exps.iter().zip(&b.exps).map(|(&x, &y)| x + y).collect();
                terms.push(Term { exps, coeff: field.mul(&a.coeff, &b.coeff) });
            }
        }
        let grading = match (&self.grading, &other.grading) {
            (Some(ga), Some(gb)) if ga.len() == gb.len() => {
                let aligned = ga.iter().zip(gb).all(|(a, b)| a.vars == b.vars);
                if aligned {
                    Some(
                        ga.iter()
                            .zip(gb)
                            .map(|(a, b)| Block { vars: a.vars.clone(), degree: a.degree + b.degree })
                            .collect(),
                    )
                } else {
                    None
                }
            }
            _ => None,
        };
        let mut p = MPoly { nvars: self.nvars, terms, grading };
        p.normalize(field);
        p
    }

    pub fn pow(&self, field: &Field, e: u32) -> MPoly {
        let mut acc = MPoly::constant(field, self.nvars, field.one());
        for _ in 0..e {
            acc = acc.mul(field, self);
        }
        acc
    }

    pub fn eval(&self, field: &Field, point: &[FieldElem]) -> Result<FieldElem, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { want: self.nvars, got: point.len() });
        }
        let mut acc = field.zero();
        for t in &self.terms {
            let mut v = t.coeff.clone();
            for (var, &e) in t.exps.iter().enumerate() {
                if e > 0 {
                    v = field.mul(&v, &field.pow(&point[var], e as u64));
                }
            }
            acc = field.add(&acc, &v);
        }
        Ok(acc)
    }

    /// Formal partial derivative w.r.t. `var`; block degree metadata for the
    /// block containing `var` is decremented.
    pub fn partial(&self, field: &Field, var: usize) -> MPoly {
        assert!(var < self.nvars);
        let mut terms = Vec::new();
        for t in &self.terms {
            let e = t.exps[var];
            if e == 0 {
                continue;
            }
            let mut exps = t.exps.clone();
            exps[var] = e - 1;
            let coeff = field.mul(&t.coeff, &field.from_int(e as u64));
            terms.push(Term { exps, coeff });
        }
        let grading = self.grading.as_ref().map(|blocks| {
            blocks
                .iter()
                .map(|b| {
                    let degree = if b.vars.contains(&var) { b.degree.saturating_sub(1) } else { b.degree };
                    Block { vars: b.vars.clone(), degree }
                })
                .collect()
        });
        let mut p = MPoly { nvars: self.nvars, terms, grading };
        p.normalize(field);
        p
    }

    /// True iff every term matches the declared block degrees.
    pub fn is_homogeneous(&self, blocks: &[Block]) -> bool {
        self.terms.iter().all(|t| {
            blocks
                .iter()
                .all(|b| t.exps[b.vars.clone()].iter().sum::<u32>() == b.degree)
        })
    }

    /// Replace each variable `i` by `subs[i]`; all `subs` share a variable
    /// count, which becomes the result's.
    pub fn substitute(&self, field: &Field, subs: &[MPoly]) -> Result<MPoly, PolyError> {
        if subs.len() != self.nvars {
            return Err(PolyError::SubstitutionArity { want: self.nvars, got: subs.len() });
        }
        let out_nvars = subs.first().map(|s| s.nvars).unwrap_or(0);
        let mut acc = MPoly::zero(out_nvars);
        for t in &self.terms {
            let mut term_poly = MPoly::constant(field, out_nvars, t.coeff.clone());
            for (var, &e) in t.exps.iter().enumerate() {
                if e > 0 {
                    term_poly = term_poly.mul(field, &subs[var].pow(field, e));
                }
            }
            acc = acc.add(field, &term_poly);
        }
        Ok(acc)
    }

    /// Reinterpret in a larger variable space, shifting variable indices by
    /// `offset`. Grading metadata is dropped.
    pub fn extend_vars(&self, nvars: usize, offset: usize) -> MPoly {
        assert!(self.nvars + offset <= nvars);
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut exps = vec![0; nvars];
                exps[offset..offset + self.nvars].copy_from_slice(&t.exps);
                Term { exps, coeff: t.coeff.clone() }
            })
            .collect();
        MPoly { nvars, terms, grading: None }
    }

    /// Lift a polynomial over a prime field into an extension of the same
    /// characteristic (coefficients become constants).
    pub fn lift(&self, src: &Field, dst: &Field) -> MPoly {
        assert_eq!(src.k(), 1, "only prime-field coefficients lift");
        assert_eq!(src.p(), dst.p());
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                exps: t.exps.clone(),
                coeff: dst.embed_scalar(t.coeff.coeffs()[0]),
            })
            .collect();
        MPoly { nvars: self.nvars, terms, grading: self.grading.clone() }
    }

    /// Seeded random homogeneous degree-`d` form supported on the variable
    /// block `block`. Identically-zero draws are redrawn.
    pub fn random_form(
        field: &Field,
        nvars: usize,
        block: Range<usize>,
        degree: u32,
        rng: &mut SeededRng,
    ) -> MPoly {
        let monos = monomials_of_degree(nvars, &block, degree);
        loop {
            let mut terms = Vec::new();
            for exps in &monos {
                let idx = rng.below(field.size());
                let c = field.elem_from_index(idx);
                if !c.is_zero() {
                    terms.push(Term { exps: exps.clone(), coeff: c });
                }
            }
            if !terms.is_empty() {
                return MPoly::new(field, nvars, terms);
            }
        }
    }
}

/// All exponent vectors of total degree `degree` supported on `block`,
/// in a fixed deterministic order.
pub fn monomials_of_degree(nvars: usize, block: &Range<usize>, degree: u32) -> Vec<Vec<u32>> {
    let vars: Vec<usize> = block.clone().collect();
    let mut out = Vec::new();
    let mut current = vec![0u32; nvars];
    fn rec(vars: &[usize], pos: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == vars.len() {
            current[vars[pos]] = remaining;
            out.push(current.clone());
            current[vars[pos]] = 0;
            return;
        }
        for e in 0..=remaining {
            current[vars[pos]] = e;
            rec(vars, pos + 1, remaining - e, current, out);
        }
        current[vars[pos]] = 0;
    }
    assert!(!vars.is_empty());
    rec(&vars, 0, degree, &mut current, &mut out);
    out
}
