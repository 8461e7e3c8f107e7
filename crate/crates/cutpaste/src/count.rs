//! Exact point counting over F_{q^k} by disjoint cell enumeration.
//!
//! Projective spaces are enumerated without duplicates via leading-coordinate
//! normalization: P^n splits into affine cells where the first nonzero
//! coordinate is 1. The pencil counters exploit the fiber structure: the
//! joint value histogram of (G, F) over P^3 is computed once, after which
//! every fiber count is a histogram sweep.
//!
//! All kernels work over element-index tables (`FieldTables`), account their
//! work against an explicit evaluation budget, and can be chunked over
//! disjoint index ranges with a deterministic merge.

use crate::field::{Field, FieldError, FieldTables};
use crate::pencil::Pencil;
use crate::poly::{MPoly, PolyError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Instant;
use thiserror::Error;

/// Default hard cap on point-evaluations per run.
pub const DEFAULT_BUDGET: u64 = 5_000_000_000;

#[derive(Debug, Error)]
pub enum CountError {
    #[error("enumeration budget exceeded: {used} evaluations used, limit {limit}")]
    Budget { used: u64, limit: u64 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("unsupported ambient space for {0} variables")]
    UnsupportedSpace(usize),
    #[error("hypotheses unmet: {0}")]
    NotApplicable(String),
}

/// Shared evaluation meter. Exceeding the limit is an error, never a silent
/// truncation.
pub struct Budget {
    limit: u64,
    used: AtomicU64,
}

impl Budget {
    pub fn new(limit: u64) -> Budget {
        Budget { limit, used: AtomicU64::new(0) }
    }

    pub fn charge(&self, n: u64) -> Result<(), CountError> {
        let prev = self.used.fetch_add(n, Ordering::Relaxed);
        if prev + n > self.limit {
            return Err(CountError::Budget { used: prev + n, limit: self.limit });
        }
        Ok(())
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget::new(DEFAULT_BUDGET)
    }
}

/// Structured result of one counting run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct CountResult {
    pub label: String,
    pub q: u64,
    pub k: usize,
    pub count: u64,
    pub elapsed_ms: u128,
    pub evals: u64,
}

/// Base field plus the extension it is being counted over.
pub struct ScanCtx {
    pub base: Field,
    pub ext: Field,
    pub tables: FieldTables,
}

impl ScanCtx {
    pub fn new(base: &Field, k: usize) -> Result<ScanCtx, CountError> {
        assert_eq!(base.k(), 1, "pencils live over prime fields");
        let ext = if k == 1 { base.clone() } else { Field::new(base.p(), k)? };
        let tables = ext.tables()?;
        Ok(ScanCtx { base: base.clone(), ext, tables })
    }

    pub fn n(&self) -> usize {
        self.tables.n
    }
}

// --- compiled polynomials ---------------------------------------------------

/// Polynomial compiled to element indices for table-based evaluation.
pub struct CPoly {
    terms: Vec<CTerm>,
}

struct CTerm {
    coeff: u32,
    factors: Vec<(u8, u8)>, // (variable, exponent), exponent >= 1
}

impl CPoly {
    /// Compile a polynomial whose coefficients live in the prime base field,
    /// lifting them into the extension.
    pub fn compile(poly: &MPoly, ctx: &ScanCtx) -> CPoly {
        let lifted = if ctx.ext.k() == 1 { poly.clone() } else { poly.lift(&ctx.base, &ctx.ext) };
        let terms = lifted
            .terms()
            .iter()
            .map(|t| CTerm {
                coeff: ctx.ext.index_of(&t.coeff) as u32,
                factors: t
                    .exps
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(v, &e)| (v as u8, e as u8))
                    .collect(),
            })
            .collect();
        CPoly { terms }
    }

    /// Compile a polynomial whose coefficients already live in `field`.
    pub fn compile_same_field(poly: &MPoly, field: &Field) -> CPoly {
        let terms = poly
            .terms()
            .iter()
            .map(|t| CTerm {
                coeff: field.index_of(&t.coeff) as u32,
                factors: t
                    .exps
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(v, &e)| (v as u8, e as u8))
                    .collect(),
            })
            .collect();
        CPoly { terms }
    }

    /// Evaluate against a per-point power table (`pows[var * stride + exp]`).
    #[inline]
    pub fn eval(&self, t: &FieldTables, pows: &[u32], stride: usize) -> u32 {
        let mut acc = 0u32;
        for term in &self.terms {
            let mut v = term.coeff;
            for &(var, exp) in &term.factors {
                v = t.mul(v, pows[var as usize * stride + exp as usize]);
            }
            acc = t.add(acc, v);
        }
        acc
    }
}

/// Fill the power table for a point: `pows[v * stride + e] = coords[v]^e`.
#[inline]
fn fill_pows(t: &FieldTables, coords: &[u32], maxdeg: usize, pows: &mut [u32]) {
    let stride = maxdeg + 1;
    for (v, &x) in coords.iter().enumerate() {
        let row = &mut pows[v * stride..(v + 1) * stride];
        row[0] = 1;
        let mut acc = 1u32;
        for e in 1..=maxdeg {
            acc = t.mul(acc, x);
            row[e] = acc;
        }
    }
}

// --- projective enumeration -------------------------------------------------

/// Number of points of P^3 over a field of n elements.
pub fn p3_size(n: u64) -> u64 {
    n * n * n + n * n + n + 1
}

/// The idx-th point of P^3 in cell order: first-nonzero coordinate normalized
/// to 1, free coordinates enumerated in field order.
#[inline]
pub fn p3_point(n: u64, idx: u64) -> [u32; 4] {
    let n3 = n * n * n;
    let n2 = n * n;
    if idx < n3 {
        let a = idx / n2;
        let b = (idx / n) % n;
        let c = idx % n;
        [1, a as u32, b as u32, c as u32]
    } else if idx < n3 + n2 {
        let r = idx - n3;
        [0, 1, (r / n) as u32, (r % n) as u32]
    } else if idx < n3 + n2 + n {
        [0, 0, 1, (idx - n3 - n2) as u32]
    } else {
        [0, 0, 0, 1]
    }
}

/// Points of P^1: (1, t) for every t, then (0, 1). The index of the point at
/// infinity is n.
#[inline]
pub fn p1_point(n: u64, idx: u64) -> [u32; 2] {
    if idx < n {
        [1, idx as u32]
    } else {
        [0, 1]
    }
}

// --- deterministic chunked execution ----------------------------------------

/// Split `0..total` into ranges and map `f` over them, optionally on several
/// worker threads. Results come back in chunk order, so any fold over them is
/// bit-identical regardless of the worker count.
pub fn run_chunks<T, F>(total: u64, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<u64>) -> T + Sync,
{
    let workers = workers.max(1);
    let nchunks = if workers == 1 { 1 } else { (workers * 8).min(total.max(1) as usize) };
    let chunk_len = total.div_ceil(nchunks as u64).max(1);
    let ranges: Vec<std::ops::Range<u64>> = (0..nchunks as u64)
        .map(|i| (i * chunk_len)..((i + 1) * chunk_len).min(total))
        .filter(|r| r.start < r.end)
        .collect();
    if workers == 1 || ranges.len() <= 1 {
        return ranges.into_iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<T>>> =
        ranges.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(ranges.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= ranges.len() {
                    break;
                }
                let out = f(ranges[i].clone());
                *results[i].lock().unwrap() = Some(out);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("chunk completed"))
        .collect()
}

// --- histogram-based fiberwise counting -------------------------------------

/// Per-pencil counting state over one extension: the (G, F) value histogram
/// over P^3 plus the alpha/beta value tables over P^1.
pub struct FiberCounter {
    pub ctx: ScanCtx,
    hist: Vec<u64>, // index g * n + f
    alpha_vals: Vec<u32>,
    beta_vals: Vec<u32>,
    evals: u64,
}

impl FiberCounter {
    pub fn new(pencil: &Pencil, k: usize, budget: &Budget, workers: usize) -> Result<FiberCounter, CountError> {
        let ctx = ScanCtx::new(pencil.field(), k)?;
        let n = ctx.n() as u64;
        let total = p3_size(n);
        budget.charge(total * 2)?;
        let cg = CPoly::compile(pencil.g(), &ctx);
        let cf = CPoly::compile(pencil.f(), &ctx);
        let t = &ctx.tables;
        let nn = ctx.n();
        let partials = run_chunks(total, workers, |range| {
            let mut hist = vec![0u64; nn * nn];
            let mut pows = [0u32; 16];
            for idx in range {
                let pt = p3_point(n, idx);
                fill_pows(t, &pt, 3, &mut pows);
                let g = cg.eval(t, &pows, 4) as usize;
                let f = cf.eval(t, &pows, 4) as usize;
                hist[g * nn + f] += 1;
            }
            hist
        });
        let mut hist = vec![0u64; nn * nn];
        for part in partials {
            for (h, p) in hist.iter_mut().zip(part) {
                *h += p;
            }
        }
        let (alpha_vals, beta_vals) = binary_form_tables(pencil, &ctx);
        Ok(FiberCounter { ctx, hist, alpha_vals, beta_vals, evals: total * 2 })
    }

    pub fn evals(&self) -> u64 {
        self.evals
    }

    fn n(&self) -> usize {
        self.ctx.n()
    }

    /// Points of the cubic-surface fiber over the P^1 point with index
    /// `t_idx` (index n is [0:1]).
    pub fn fiber_count(&self, t_idx: usize) -> u64 {
        let n = self.n();
        let t = &self.ctx.tables;
        let c1 = self.alpha_vals[t_idx];
        let c2 = self.beta_vals[t_idx];
        let mut total = 0u64;
        for g in 0..n as u32 {
            let c1g = t.mul(c1, g);
            for f in 0..n as u32 {
                if t.add(c1g, t.mul(c2, f)) == 0 {
                    total += self.hist[g as usize * n + f as usize];
                }
            }
        }
        total
    }

    /// #X(F_{q^k}): sum of all fiber counts.
    pub fn total(&self) -> u64 {
        (0..=self.n()).map(|i| self.fiber_count(i)).sum()
    }

    /// #Z = #(G = F = 0) in P^3.
    pub fn z(&self) -> u64 {
        self.hist[0]
    }

    /// #X0: the t0 = 1 chart with the (G = F = 0) locus removed.
    pub fn x0(&self) -> u64 {
        let n = self.n() as u64;
        let affine: u64 = (0..self.n()).map(|i| self.fiber_count(i)).sum();
        affine - n * self.z()
    }

    /// Fiber over [0:1].
    pub fn fiber_inf(&self) -> u64 {
        self.fiber_count(self.n())
    }

    pub fn p3_total(&self) -> u64 {
        p3_size(self.n() as u64)
    }
}

/// Evaluate alpha and beta at every normalized point of P^1.
fn binary_form_tables(pencil: &Pencil, ctx: &ScanCtx) -> (Vec<u32>, Vec<u32>) {
    let n = ctx.n() as u64;
    let ca = CPoly::compile(pencil.alpha(), ctx);
    let cb = CPoly::compile(pencil.beta(), ctx);
    let m = pencil.m() as usize;
    let stride = m + 1;
    let mut pows = vec![0u32; 2 * stride];
    let mut av = Vec::with_capacity(n as usize + 1);
    let mut bv = Vec::with_capacity(n as usize + 1);
    for idx in 0..=n {
        let pt = p1_point(n, idx);
        fill_pows(&ctx.tables, &pt, m, &mut pows);
        av.push(ca.eval(&ctx.tables, &pows, stride));
        bv.push(cb.eval(&ctx.tables, &pows, stride));
    }
    (av, bv)
}

// --- direct biprojective enumeration (cross-check oracle) --------------------

/// Count X in P^3 x P^1 by evaluating the bihomogeneous equation at every
/// normalized point pair. Exists as an independent oracle for the fiberwise
/// strategy; only sensible at small sizes.
pub fn count_pencil_direct(pencil: &Pencil, k: usize, budget: &Budget) -> Result<CountResult, CountError> {
    let start = Instant::now();
    let ctx = ScanCtx::new(pencil.field(), k)?;
    let n = ctx.n() as u64;
    let maxdeg = 3usize.max(pencil.m() as usize);
    let stride = maxdeg + 1;
    let ce = CPoly::compile(pencil.equation(), &ctx);
    let total_pts = p3_size(n) * (n + 1);
    budget.charge(total_pts)?;
    let mut count = 0u64;
    let mut pows = vec![0u32; 6 * stride];
    for xi in 0..p3_size(n) {
        let xp = p3_point(n, xi);
        for ti in 0..=n {
            let tp = p1_point(n, ti);
            let coords = [xp[0], xp[1], xp[2], xp[3], tp[0], tp[1]];
            fill_pows(&ctx.tables, &coords, maxdeg, &mut pows);
            if ce.eval(&ctx.tables, &pows, stride) == 0 {
                count += 1;
            }
        }
    }
    Ok(CountResult {
        label: "X (direct biprojective)".into(),
        q: pencil.field().p(),
        k,
        count,
        elapsed_ms: start.elapsed().as_millis(),
        evals: total_pts,
    })
}

// --- public counting operations ----------------------------------------------

/// Common zeros of `polys` in the projective space determined by the variable
/// count: P^1 (2 vars), P^3 (4 vars) or P^3 x P^1 (6 vars). Coefficients must
/// live in `field` itself.
pub fn count_projective(polys: &[MPoly], field: &Field, budget: &Budget) -> Result<CountResult, CountError> {
    let start = Instant::now();
    let tables = field.tables()?;
    let n = tables.n as u64;
    let nvars = polys.first().map(|p| p.nvars()).unwrap_or(4);
    let maxdeg = polys
        .iter()
        .flat_map(|p| p.terms().iter().map(|t| t.exps.iter().map(|&e| e as usize).max().unwrap_or(0)))
        .max()
        .unwrap_or(1)
        .max(1);
    let stride = maxdeg + 1;
    let compiled: Vec<CPoly> = polys
        .iter()
        .map(|p| {
            let terms = p
                .terms()
                .iter()
                .map(|t| CTerm {
                    coeff: field.index_of(&t.coeff) as u32,
                    factors: t
                        .exps
                        .iter()
                        .enumerate()
                        .filter(|(_, &e)| e > 0)
                        .map(|(v, &e)| (v as u8, e as u8))
                        .collect(),
                })
                .collect();
            CPoly { terms }
        })
        .collect();
    let points: Vec<Vec<u32>> = match nvars {
        2 => (0..=n).map(|i| p1_point(n, i).to_vec()).collect(),
        4 => (0..p3_size(n)).map(|i| p3_point(n, i).to_vec()).collect(),
        6 => {
            let mut v = Vec::new();
            for xi in 0..p3_size(n) {
                let xp = p3_point(n, xi);
                for ti in 0..=n {
                    let tp = p1_point(n, ti);
                    v.push(vec![xp[0], xp[1], xp[2], xp[3], tp[0], tp[1]]);
                }
            }
            v
        }
        other => return Err(CountError::UnsupportedSpace(other)),
    };
    budget.charge(points.len() as u64 * polys.len().max(1) as u64)?;
    let mut pows = vec![0u32; nvars * stride];
    let mut count = 0u64;
    for pt in &points {
        fill_pows(&tables, pt, maxdeg, &mut pows);
        if compiled.iter().all(|c| c.eval(&tables, &pows, stride) == 0) {
            count += 1;
        }
    }
    Ok(CountResult {
        label: format!("common zeros ({} polys, {} vars)", polys.len(), nvars),
        q: field.p(),
        k: field.k(),
        count,
        elapsed_ms: start.elapsed().as_millis(),
        evals: points.len() as u64 * polys.len().max(1) as u64,
    })
}

/// #X(F_{q^k}), fiberwise (the canonical strategy).
pub fn count_pencil(pencil: &Pencil, k: usize, budget: &Budget, workers: usize) -> Result<CountResult, CountError> {
    let start = Instant::now();
    let fc = FiberCounter::new(pencil, k, budget, workers)?;
    Ok(CountResult {
        label: "X".into(),
        q: pencil.field().p(),
        k,
        count: fc.total(),
        elapsed_ms: start.elapsed().as_millis(),
        evals: fc.evals(),
    })
}

/// Named constructible subsets of a pencil.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Locus {
    X0,
    Z,
    /// Fiber over the P^1 point with the given base-field coordinates.
    Fiber { t0: u64, t1: u64 },
    FiberInf,
    ZTimesA1,
    XMinusSingularFibers,
}

pub fn count_locus(
    pencil: &Pencil,
    locus: &Locus,
    k: usize,
    budget: &Budget,
    workers: usize,
) -> Result<CountResult, CountError> {
    let start = Instant::now();
    let fc = FiberCounter::new(pencil, k, budget, workers)?;
    let n = fc.n() as u64;
    let mut evals = fc.evals();
    let (label, count) = match locus {
        Locus::X0 => ("X0".to_string(), fc.x0()),
        Locus::Z => ("Z".to_string(), fc.z()),
        Locus::FiberInf => ("fiber([0:1])".to_string(), fc.fiber_inf()),
        Locus::Fiber { t0, t1 } => {
            // normalize (t0 : t1) over the base field, then embed
            let t_idx = if *t0 % pencil.field().p() != 0 {
                let f = &fc.ctx.ext;
                let inv = f.inv(&f.embed_scalar(*t0)).unwrap();
                f.index_of(&f.mul(&inv, &f.embed_scalar(*t1))) as usize
            } else {
                n as usize
            };
            (format!("fiber([{t0}:{t1}])"), fc.fiber_count(t_idx))
        }
        Locus::ZTimesA1 => ("Z x A1".to_string(), fc.z() * n),
        Locus::XMinusSingularFibers => {
            let sf = scan_singular_fibers(pencil, k, budget, workers)?;
            evals += sf.evals;
            let removed: u64 = sf.per_fiber.keys().map(|&t| fc.fiber_count(t as usize)).sum();
            ("X \\ {singular fibers}".to_string(), fc.total() - removed)
        }
    };
    Ok(CountResult {
        label,
        q: pencil.field().p(),
        k,
        count,
        elapsed_ms: start.elapsed().as_millis(),
        evals,
    })
}

// --- singularity scans --------------------------------------------------------

/// A singular point witness on the total space, as extension-element indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingularWitness {
    pub x: [u64; 4],
    pub t: [u64; 2],
}

struct PencilDerivatives {
    cg: CPoly,
    cf: CPoly,
    dg: Vec<CPoly>,
    df: Vec<CPoly>,
    alpha_vals: Vec<u32>,
    beta_vals: Vec<u32>,
    /// d(alpha)/dt0 etc., evaluated over P^1
    dalpha: [Vec<u32>; 2],
    dbeta: [Vec<u32>; 2],
    /// t indices where alpha and beta vanish simultaneously
    common_roots: Vec<usize>,
}

fn prepare_derivatives(pencil: &Pencil, ctx: &ScanCtx) -> PencilDerivatives {
    let base = pencil.field();
    let cg = CPoly::compile(pencil.g(), ctx);
    let cf = CPoly::compile(pencil.f(), ctx);
    let dg = (0..4).map(|v| CPoly::compile(&pencil.g().partial(base, v), ctx)).collect();
    let df = (0..4).map(|v| CPoly::compile(&pencil.f().partial(base, v), ctx)).collect();
    let (alpha_vals, beta_vals) = binary_form_tables(pencil, ctx);
    let n = ctx.n() as u64;
    let m = pencil.m() as usize;
    let stride = m + 1;
    let mut pows = vec![0u32; 2 * stride];
    let da = [
        CPoly::compile(&pencil.alpha().partial(base, 0), ctx),
        CPoly::compile(&pencil.alpha().partial(base, 1), ctx),
    ];
    let db = [
        CPoly::compile(&pencil.beta().partial(base, 0), ctx),
        CPoly::compile(&pencil.beta().partial(base, 1), ctx),
    ];
    let mut dalpha = [Vec::new(), Vec::new()];
    let mut dbeta = [Vec::new(), Vec::new()];
    for idx in 0..=n {
        let pt = p1_point(n, idx);
        fill_pows(&ctx.tables, &pt, m, &mut pows);
        for j in 0..2 {
            dalpha[j].push(da[j].eval(&ctx.tables, &pows, stride));
            dbeta[j].push(db[j].eval(&ctx.tables, &pows, stride));
        }
    }
    let common_roots = (0..=n as usize)
        .filter(|&i| alpha_vals[i] == 0 && beta_vals[i] == 0)
        .collect();
    PencilDerivatives { cg, cf, dg, df, alpha_vals, beta_vals, dalpha, dbeta, common_roots }
}

/// For one x, the t indices at which all four x-partials of the fiber
/// equation vanish. `gv`/`fv` are the gradient values of G and F at x.
fn fiber_singular_ts(
    d: &PencilDerivatives,
    t: &FieldTables,
    gv: &[u32; 4],
    fv: &[u32; 4],
    out: &mut Vec<usize>,
) {
    out.clear();
    let n = t.n;
    'outer: for ti in 0..=n {
        let a = d.alpha_vals[ti];
        let b = d.beta_vals[ti];
        if a == 0 && b == 0 {
            out.push(ti); // degenerate member: the whole fiber equation is 0
            continue;
        }
        for i in 0..4 {
            if t.add(t.mul(a, gv[i]), t.mul(b, fv[i])) != 0 {
                continue 'outer;
            }
        }
        out.push(ti);
    }
}

/// Scan state for one x: gradient values and whether the (grad G, grad F)
/// pair can possibly be annihilated by some (alpha(t), beta(t)) != (0, 0),
/// i.e. whether the two gradient vectors are linearly dependent.
#[inline]
fn gradients_if_dependent(
    d: &PencilDerivatives,
    t: &FieldTables,
    pows: &[u32],
) -> Option<([u32; 4], [u32; 4])> {
    let g0 = d.dg[0].eval(t, pows, 4);
    let f0 = d.df[0].eval(t, pows, 4);
    let g1 = d.dg[1].eval(t, pows, 4);
    let f1 = d.df[1].eval(t, pows, 4);
    // fast reject: a nonzero 2x2 minor means only a common root of
    // (alpha, beta) could kill the x-partials
    if t.add(t.mul(g0, f1), t.neg(t.mul(g1, f0))) != 0 {
        return None;
    }
    let g2 = d.dg[2].eval(t, pows, 4);
    let f2 = d.df[2].eval(t, pows, 4);
    let g3 = d.dg[3].eval(t, pows, 4);
    let f3 = d.df[3].eval(t, pows, 4);
    let gv = [g0, g1, g2, g3];
    let fv = [f0, f1, f2, f3];
    for i in 0..4 {
        for j in (i + 1)..4 {
            if t.add(t.mul(gv[i], fv[j]), t.neg(t.mul(gv[j], fv[i]))) != 0 {
                return None;
            }
        }
    }
    Some((gv, fv))
}

/// Exhaustive scan of P^3 x P^1 over F_{q^k} for singular points of the total
/// space (all six partials vanishing). Returns the first witness in scan
/// order, or None.
pub fn pencil_smooth_witness(
    pencil: &Pencil,
    k: usize,
    budget: &Budget,
) -> Result<Option<SingularWitness>, CountError> {
    let ctx = ScanCtx::new(pencil.field(), k)?;
    let d = prepare_derivatives(pencil, &ctx);
    let t = &ctx.tables;
    let n = ctx.n() as u64;
    let total = p3_size(n);
    budget.charge(total * 5)?;
    let mut pows = [0u32; 16];
    let mut ts = Vec::new();
    for idx in 0..total {
        let pt = p3_point(n, idx);
        fill_pows(t, &pt, 3, &mut pows);
        let dep = gradients_if_dependent(&d, t, &pows);
        // candidate fiber parameters where the x-partials vanish at this x
        let candidates: Vec<usize> = match dep {
            Some((gv, fv)) => {
                fiber_singular_ts(&d, t, &gv, &fv, &mut ts);
                ts.clone()
            }
            None => d.common_roots.clone(),
        };
        if candidates.is_empty() {
            continue;
        }
        let gx = d.cg.eval(t, &pows, 4);
        let fx = d.cf.eval(t, &pows, 4);
        for ti in candidates {
            let t0_ok = t.add(t.mul(d.dalpha[0][ti], gx), t.mul(d.dbeta[0][ti], fx)) == 0;
            let t1_ok = t.add(t.mul(d.dalpha[1][ti], gx), t.mul(d.dbeta[1][ti], fx)) == 0;
            if t0_ok && t1_ok {
                let tp = p1_point(n, ti as u64);
                return Ok(Some(SingularWitness {
                    x: [pt[0] as u64, pt[1] as u64, pt[2] as u64, pt[3] as u64],
                    t: [tp[0] as u64, tp[1] as u64],
                }));
            }
        }
    }
    Ok(None)
}

/// Check that the curve (G = F = 0) in P^3 is smooth at every
/// F_{q^k}-rational point: the Jacobian [grad G; grad F] must have rank 2
/// there (some 2x2 minor nonzero).
pub fn z_smooth(g: &MPoly, f: &MPoly, base: &Field, k: usize, budget: &Budget) -> Result<bool, CountError> {
    let ctx = ScanCtx::new(base, k)?;
    let cg = CPoly::compile(g, &ctx);
    let cf = CPoly::compile(f, &ctx);
    let dg: Vec<CPoly> = (0..4).map(|v| CPoly::compile(&g.partial(base, v), &ctx)).collect();
    let df: Vec<CPoly> = (0..4).map(|v| CPoly::compile(&f.partial(base, v), &ctx)).collect();
    let n = ctx.n() as u64;
    let total = p3_size(n);
    budget.charge(total * 2)?;
    let t = &ctx.tables;
    let mut pows = [0u32; 16];
    for idx in 0..total {
        let pt = p3_point(n, idx);
        fill_pows(t, &pt, 3, &mut pows);
        if cg.eval(t, &pows, 4) != 0 || cf.eval(t, &pows, 4) != 0 {
            continue;
        }
        let gv: Vec<u32> = dg.iter().map(|c| c.eval(t, &pows, 4)).collect();
        let fv: Vec<u32> = df.iter().map(|c| c.eval(t, &pows, 4)).collect();
        let mut rank2 = false;
        'minors: for i in 0..4 {
            for j in (i + 1)..4 {
                if t.add(t.mul(gv[i], fv[j]), t.neg(t.mul(gv[j], fv[i]))) != 0 {
                    rank2 = true;
                    break 'minors;
                }
            }
        }
        if !rank2 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Singular points of a surface (F = 0) in P^3 over F_{q^k}: points where
/// all four partials vanish. Stops after `limit` findings.
pub fn surface_singular_points(
    form: &MPoly,
    base: &Field,
    k: usize,
    limit: usize,
    budget: &Budget,
) -> Result<Vec<[u64; 4]>, CountError> {
    assert_eq!(form.nvars(), 4);
    let ctx = ScanCtx::new(base, k)?;
    let d: Vec<CPoly> = (0..4).map(|v| CPoly::compile(&form.partial(base, v), &ctx)).collect();
    let n = ctx.n() as u64;
    let total = p3_size(n);
    budget.charge(total * 2)?;
    let t = &ctx.tables;
    let mut out = Vec::new();
    let mut pows = [0u32; 16];
    for idx in 0..total {
        let pt = p3_point(n, idx);
        fill_pows(t, &pt, 3, &mut pows);
        if d.iter().all(|c| c.eval(t, &pows, 4) == 0) {
            out.push([pt[0] as u64, pt[1] as u64, pt[2] as u64, pt[3] as u64]);
            if out.len() >= limit {
                break;
            }
        }
    }
    Ok(out)
}

/// Generic smoothness check for a bihomogeneous (P^3 x P^1) equation: scan
/// every fiber for a point where all six partials vanish. Slower than the
/// structured pencil scan but makes no assumption about the equation's shape;
/// serves as its independent cross-check.
pub fn biproj_singular_witness(
    equation: &MPoly,
    base: &Field,
    k: usize,
    budget: &Budget,
) -> Result<Option<SingularWitness>, CountError> {
    assert_eq!(equation.nvars(), 6);
    let ctx = ScanCtx::new(base, k)?;
    let n = ctx.n() as u64;
    budget.charge(p3_size(n) * (n + 1))?;
    let t = &ctx.tables;
    let partials: Vec<MPoly> = (0..6).map(|v| equation.partial(base, v)).collect();
    let mut best: Option<(u64, u64, SingularWitness)> = None;
    for ti in 0..=n {
        let tp = p1_point(n, ti);
        // freeze t, leaving six polynomials in x alone
        let t_elems = [ctx.ext.elem_from_index(tp[0] as u64), ctx.ext.elem_from_index(tp[1] as u64)];
        let frozen: Vec<CPoly> = partials
            .iter()
            .map(|p| {
                let lifted = p.lift(base, &ctx.ext);
                let subs: Vec<MPoly> = (0..6)
                    .map(|v| {
                        if v < 4 {
                            MPoly::variable(&ctx.ext, 4, v)
                        } else {
                            MPoly::constant(&ctx.ext, 4, t_elems[v - 4].clone())
                        }
                    })
                    .collect();
                let four_var = lifted.substitute(&ctx.ext, &subs).unwrap();
                CPoly::compile_same_field(&four_var, &ctx.ext)
            })
            .collect();
        let mut pows = [0u32; 16];
        for xi in 0..p3_size(n) {
            let pt = p3_point(n, xi);
            fill_pows(t, &pt, 3, &mut pows);
            if frozen.iter().all(|c| c.eval(t, &pows, 4) == 0) {
                let w = SingularWitness {
                    x: [pt[0] as u64, pt[1] as u64, pt[2] as u64, pt[3] as u64],
                    t: [tp[0] as u64, tp[1] as u64],
                };
                // report the (x, t)-lexicographically first witness so the
                // result is independent of the loop nesting order
                if best.as_ref().map(|(bx, bt, _)| (xi, ti) < (*bx, *bt)).unwrap_or(true) {
                    best = Some((xi, ti, w));
                }
                break;
            }
        }
    }
    Ok(best.map(|(_, _, w)| w))
}

/// Result of a singular-fiber scan: for each singular fiber parameter
/// (as a P^1 index), the number of F_{q^k}-rational singular points found on
/// that fiber.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularFibers {
    pub k: usize,
    pub per_fiber: BTreeMap<u64, u64>,
    pub evals: u64,
}

impl SingularFibers {
    pub fn a_k(&self) -> u64 {
        self.per_fiber.len() as u64
    }

    /// True iff some fiber carries more than one rational singular point.
    pub fn has_multiple_singularities(&self) -> bool {
        self.per_fiber.values().any(|&c| c > 1)
    }
}

/// Find every t in P^1(F_{q^k}) whose fiber is singular, by scanning x and
/// solving for the annihilating fiber parameters.
pub fn scan_singular_fibers(
    pencil: &Pencil,
    k: usize,
    budget: &Budget,
    workers: usize,
) -> Result<SingularFibers, CountError> {
    let ctx = ScanCtx::new(pencil.field(), k)?;
    let d = prepare_derivatives(pencil, &ctx);
    let n = ctx.n() as u64;
    let total = p3_size(n);
    budget.charge(total * 4)?;
    let t = &ctx.tables;
    let partials = run_chunks(total, workers, |range| {
        let mut found: BTreeMap<u64, u64> = BTreeMap::new();
        let mut pows = [0u32; 16];
        let mut ts = Vec::new();
        for idx in range {
            let pt = p3_point(n, idx);
            fill_pows(t, &pt, 3, &mut pows);
            let candidates: &[usize] = match gradients_if_dependent(&d, t, &pows) {
                Some((gv, fv)) => {
                    fiber_singular_ts(&d, t, &gv, &fv, &mut ts);
                    &ts
                }
                None => &d.common_roots,
            };
            for &ti in candidates {
                *found.entry(ti as u64).or_insert(0) += 1;
            }
        }
        found
    });
    let mut per_fiber = BTreeMap::new();
    for part in partials {
        for (ti, c) in part {
            *per_fiber.entry(ti).or_insert(0) += c;
        }
    }
    Ok(SingularFibers { k, per_fiber, evals: total * 4 })
}

pub fn count_singular_fibers(
    pencil: &Pencil,
    k: usize,
    budget: &Budget,
    workers: usize,
) -> Result<(CountResult, SingularFibers), CountError> {
    let start = Instant::now();
    let sf = scan_singular_fibers(pencil, k, budget, workers)?;
    let res = CountResult {
        label: "singular fibers".into(),
        q: pencil.field().p(),
        k,
        count: sf.a_k(),
        elapsed_ms: start.elapsed().as_millis(),
        evals: sf.evals,
    };
    Ok((res, sf))
}

/// Check that closed-point counts a_k decompose as a_k = sum_{d | k} d * b_d
/// with nonnegative integer b_d.
pub fn moebius_consistent(a: &[(usize, u64)]) -> bool {
    let mut b: BTreeMap<usize, u64> = BTreeMap::new();
    let mut sorted = a.to_vec();
    sorted.sort();
    for (k, ak) in sorted {
        let lower: u64 = b
            .iter()
            .filter(|(d, _)| k % **d == 0 && **d < k)
            .map(|(d, bd)| *d as u64 * bd)
            .sum();
        if ak < lower || (ak - lower) % k as u64 != 0 {
            return false;
        }
        b.insert(k, (ak - lower) / k as u64);
    }
    true
}

// --- universal-family chart counting ------------------------------------------

/// Count the y0 = 1 chart of the universal family over F_{q^k}: points
/// (x, y1..ym, lambda) with L_alpha(y) G(x) + (L_beta(y) + lambda) F(x) = 0
/// and (G, F)(x) != (0, 0).
pub fn count_universal_chart(pencil: &Pencil, k: usize, budget: &Budget) -> Result<CountResult, CountError> {
    let start = Instant::now();
    let ctx = ScanCtx::new(pencil.field(), k)?;
    let n = ctx.n() as u64;
    let m = pencil.m();
    let total = p3_size(n);
    budget.charge(total * 2 + n.pow(m))?;
    let cg = CPoly::compile(pencil.g(), &ctx);
    let cf = CPoly::compile(pencil.f(), &ctx);
    let t = &ctx.tables;
    let mut pows = [0u32; 16];
    let mut f_nonzero = 0u64;
    let mut f_zero_g_nonzero = 0u64;
    for idx in 0..total {
        let pt = p3_point(n, idx);
        fill_pows(t, &pt, 3, &mut pows);
        let fx = cf.eval(t, &pows, 4);
        if fx != 0 {
            f_nonzero += 1;
        } else if cg.eval(t, &pows, 4) != 0 {
            f_zero_g_nonzero += 1;
        }
    }
    // for F(x) != 0 every y gives exactly one lambda; for F(x) = 0, G != 0 the
    // equation forces L_alpha(y) = 0 and lambda is free
    let alpha = pencil.alpha_coeffs();
    let mut l_alpha_zeros = 0u64;
    let mut y = vec![0u32; m as usize];
    loop {
        let mut acc = ctx.ext.index_of(&ctx.ext.embed_scalar(alpha[0])) as u32;
        for (i, &yi) in y.iter().enumerate() {
            let ai = ctx.ext.index_of(&ctx.ext.embed_scalar(alpha[i + 1])) as u32;
            acc = t.add(acc, t.mul(ai, yi));
        }
        if acc == 0 {
            l_alpha_zeros += 1;
        }
        // odometer over F^m
        let mut pos = 0;
        loop {
            if pos == y.len() {
                break;
            }
            y[pos] += 1;
            if (y[pos] as u64) < n {
                break;
            }
            y[pos] = 0;
            pos += 1;
        }
        if pos == y.len() {
            break;
        }
    }
    let count = f_nonzero * n.pow(m) + f_zero_g_nonzero * l_alpha_zeros * n;
    Ok(CountResult {
        label: "universal family chart (y0 = 1)".into(),
        q: pencil.field().p(),
        k,
        count,
        elapsed_ms: start.elapsed().as_millis(),
        evals: total * 2 + n.pow(m),
    })
}

// --- verdicts and formulas -----------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Warn,
    NotApplicable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EqualityRow {
    pub k: usize,
    pub count_a: u64,
    pub count_b: u64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EqualityReport {
    pub applicable: bool,
    pub reason: Option<String>,
    pub rows: Vec<EqualityRow>,
    /// X' = X minus all singular fibers, the conjectural probe. Reported
    /// separately; never folded into the main verdict.
    pub xprime_rows: Vec<EqualityRow>,
}

impl EqualityReport {
    pub fn all_pass(&self) -> bool {
        self.applicable && self.rows.iter().all(|r| r.verdict == Verdict::Pass)
    }
}

/// Compare #X and #X-tilde over the requested extensions. Pencils must share
/// (G, F) and both be certified; otherwise the report is NOT-APPLICABLE.
pub fn verdict_equality(
    a: &Pencil,
    b: &Pencil,
    ks: &[usize],
    budget: &Budget,
    workers: usize,
) -> Result<EqualityReport, CountError> {
    if !a.shares_gf(b) {
        return Ok(EqualityReport {
            applicable: false,
            reason: Some("pencils do not share (G, F)".into()),
            rows: vec![],
            xprime_rows: vec![],
        });
    }
    if !a.is_certified() || !b.is_certified() {
        return Ok(EqualityReport {
            applicable: false,
            reason: Some("certification failed on at least one pencil".into()),
            rows: vec![],
            xprime_rows: vec![],
        });
    }
    let mut rows = Vec::new();
    let mut xprime_rows = Vec::new();
    for &k in ks {
        let fa = FiberCounter::new(a, k, budget, workers)?;
        let fb = FiberCounter::new(b, k, budget, workers)?;
        let (ca, cb) = (fa.total(), fb.total());
        rows.push(EqualityRow {
            k,
            count_a: ca,
            count_b: cb,
            verdict: if ca == cb { Verdict::Pass } else { Verdict::Fail },
        });
        let sa = scan_singular_fibers(a, k, budget, workers)?;
        let sb = scan_singular_fibers(b, k, budget, workers)?;
        let xa = ca - sa.per_fiber.keys().map(|&t| fa.fiber_count(t as usize)).sum::<u64>();
        let xb = cb - sb.per_fiber.keys().map(|&t| fb.fiber_count(t as usize)).sum::<u64>();
        xprime_rows.push(EqualityRow {
            k,
            count_a: xa,
            count_b: xb,
            verdict: if xa == xb { Verdict::Pass } else { Verdict::Warn },
        });
    }
    Ok(EqualityReport { applicable: true, reason: None, rows, xprime_rows })
}

/// Euler characteristic and singular-fiber arithmetic for degree-m pencils.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EulerRecord {
    pub m: i64,
    pub chi_x: i64,
    pub s: i64,
    pub chi_blowup: i64,
    /// The three-expression chain evaluates consistently term by term.
    pub chain_consistent: bool,
    /// 18 - s equals chi_x.
    pub identity_holds: bool,
}

pub fn euler_formulas(m: u32) -> EulerRecord {
    assert!(m >= 1);
    let m = m as i64;
    let e1 = m * (-14 - 9 * (2 * m - 2)) + 9 * (2 * m - 2) * (m - 1);
    let e2 = -14 * m - 9 * (2 * m - 2);
    let e3 = -32 * m + 18;
    let s = 32 * m;
    EulerRecord {
        m,
        chi_x: e3,
        s,
        chi_blowup: -14,
        chain_consistent: e1 == e2 && e2 == e3,
        identity_holds: 18 - s == e3,
    }
}
