//! Pencils of cubic surfaces and the maps between their associated loci.
//!
//! A pencil is the locus `X: alpha(t0,t1) G(x) + beta(t0,t1) F(x) = 0` in
//! P^3 x P^1, where G is a smooth cubic surface, F is a cubic with a single
//! ordinary node at [0:0:0:1], and alpha, beta are degree-m binary forms.
//! Construction is seeded and retried until a battery of computational
//! genericity certificates passes; a pencil that fails certification is never
//! returned.
//!
//! The module also implements the chart-level maps used by the cancellation
//! argument: the spreading map `phi: X0 x A^{m+1} -> curly-X0 x A^1` and the
//! linear isomorphism between the universal-family charts of two pencils
//! sharing (G, F).

use crate::count::{
    pencil_smooth_witness, scan_singular_fibers, surface_singular_points, z_smooth, Budget,
    CountError,
};
use crate::field::{Field, FieldElem, FieldError};
use crate::poly::{Block, MPoly, PolyError, Term};
use crate::seed::{child, SeededRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Retry cap for each stage of seeded generation.
pub const MAX_ATTEMPTS: u32 = 32;

/// Extension degrees over which certification scans run.
pub const K_CERT: usize = 2;

#[derive(Debug, Error)]
pub enum PencilError {
    #[error("characteristic {p} divides the pencil degree m = {m}")]
    BadDegree { p: u64, m: u32 },
    #[error("certification failed after {attempts} attempts; last failure: {last}")]
    CertificationFailed { attempts: u32, last: String },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Count(#[from] Box<CountError>),
    #[error("point violates the locus constraints: {0}")]
    DomainViolation(String),
    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
}

impl From<CountError> for PencilError {
    fn from(e: CountError) -> Self {
        PencilError::Count(Box::new(e))
    }
}

// --- small univariate helpers over F_p (residue vectors) ---------------------

fn umod_pow(p: u64, mut b: u64, mut e: u64) -> u64 {
    let mut acc = 1;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    acc
}

fn utrim(mut v: Vec<u64>) -> Vec<u64> {
    while v.last() == Some(&0) {
        v.pop();
    }
    v
}

/// Euclidean gcd of dense univariate polynomials over F_p. Returns the
/// (unnormalized) gcd's coefficient vector; empty means both inputs were zero.
fn ugcd(p: u64, a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    let mut a = utrim(a);
    let mut b = utrim(b);
    while !b.is_empty() {
        // a := a mod b
        let inv = umod_pow(p, b[b.len() - 1], p - 2);
        while a.len() >= b.len() {
            let c = a[a.len() - 1] * inv % p;
            let shift = a.len() - b.len();
            for i in 0..b.len() {
                a[shift + i] = (a[shift + i] + p - c * b[i] % p) % p;
            }
            a = utrim(a);
            if a.is_empty() {
                break;
            }
        }
        std::mem::swap(&mut a, &mut b);
    }
    a
}

// --- nodal cubic --------------------------------------------------------------

/// A cubic surface `F = x3 Q(x0,x1,x2) + C(x0,x1,x2)` with an ordinary node
/// at [0:0:0:1] (Q a nondegenerate quadratic form) and no other singular
/// point over the certified extensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodalCubic {
    pub q_form: MPoly,
    pub c_form: MPoly,
    pub form: MPoly,
}

fn quadratic_nondegenerate(field: &Field, q: &MPoly) -> bool {
    let p = field.p();
    let mut m = [[0u64; 3]; 3];
    let inv2 = (p + 1) / 2;
    for t in q.terms() {
        let c = t.coeff.coeffs()[0];
        let support: Vec<usize> = (0..3).filter(|&v| t.exps[v] > 0).collect();
        match support.as_slice() {
            [i] => m[*i][*i] = c,
            [i, j] => {
                let half = c * inv2 % p;
                m[*i][*j] = half;
                m[*j][*i] = half;
            }
            _ => unreachable!("quadratic form in x0..x2"),
        }
    }
    let det = (m[0][0] * ((m[1][1] * m[2][2] + p * p - m[1][2] * m[2][1]) % p)
        + (p - m[0][1]) * ((m[1][0] * m[2][2] + p * p - m[1][2] * m[2][0]) % p)
        + m[0][2] * ((m[1][0] * m[2][1] + p * p - m[1][1] * m[2][0]) % p))
        % p;
    det != 0
}

/// Draw a nodal cubic from the given seed: Q until nondegenerate, then C.
/// The node location and ordinariness are structural; uniqueness of the
/// singular point is certified by the caller's scans.
pub fn make_nodal_cubic(field: &Field, seed: u64) -> NodalCubic {
    let mut rng_q = SeededRng::new(child(seed, "Q"));
    let q_form = loop {
        let q = MPoly::random_form(field, 4, 0..3, 2, &mut rng_q);
        if quadratic_nondegenerate(field, &q) {
            break q;
        }
    };
    let mut rng_c = SeededRng::new(child(seed, "C"));
    let c_form = MPoly::random_form(field, 4, 0..3, 3, &mut rng_c);
    let x3 = MPoly::variable(field, 4, 3);
    let form = x3.mul(field, &q_form).add(field, &c_form);
    NodalCubic { q_form, c_form, form }
}

// --- pencil -------------------------------------------------------------------

/// The certificates established during generation. Every flag must hold for
/// the pencil to be usable in class-equality experiments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificates {
    pub k_cert: usize,
    pub char_ok: bool,
    pub g_smooth: bool,
    pub f_unique_node: bool,
    pub z_smooth: bool,
    pub coprime_forms: bool,
    pub fiber_inf_smooth: bool,
    pub total_space_smooth: bool,
    pub singular_fibers_simple: bool,
    pub surface_attempts: u32,
    pub form_attempts: u32,
}

impl Certificates {
    pub fn all_hold(&self) -> bool {
        self.char_ok
            && self.g_smooth
            && self.f_unique_node
            && self.z_smooth
            && self.coprime_forms
            && self.fiber_inf_smooth
            && self.total_space_smooth
            && self.singular_fibers_simple
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pencil {
    field: Field,
    m: u32,
    seed: u64,
    g: MPoly,
    nodal: NodalCubic,
    alpha: MPoly,
    beta: MPoly,
    equation: MPoly,
    certificates: Certificates,
}

impl Pencil {
    /// Seeded generation with certification. When `shared` is given, (G, F)
    /// are taken from that pencil and only (alpha, beta) are redrawn, so the
    /// result is a second pencil on the same base surfaces.
    pub fn generate(
        field: &Field,
        m: u32,
        seed: u64,
        shared: Option<&Pencil>,
        budget: &Budget,
    ) -> Result<Pencil, PencilError> {
        assert!(m >= 1, "pencil degree must be positive");
        assert_eq!(field.k(), 1, "pencils are defined over prime fields");
        if m as u64 % field.p() == 0 {
            return Err(PencilError::BadDegree { p: field.p(), m });
        }

        let (g, nodal, surface_attempts) = match shared {
            Some(other) => {
                assert_eq!(other.field, *field);
                assert_eq!(other.m, m);
                (other.g.clone(), other.nodal.clone(), 0)
            }
            None => generate_surfaces(field, seed, budget)?,
        };

        let forms_seed = child(seed, "forms");
        let mut last = String::from("no attempt made");
        for attempt in 0..MAX_ATTEMPTS {
            let aseed = child(forms_seed, &attempt.to_string());
            let mut rng_a = SeededRng::new(child(aseed, "alpha"));
            let mut rng_b = SeededRng::new(child(aseed, "beta"));
            let alpha = MPoly::random_form(field, 2, 0..2, m, &mut rng_a);
            let beta = MPoly::random_form(field, 2, 0..2, m, &mut rng_b);

            let mut pencil = Pencil {
                field: field.clone(),
                m,
                seed,
                g: g.clone(),
                nodal: nodal.clone(),
                equation: build_equation(field, &g, &nodal.form, &alpha, &beta, m),
                alpha,
                beta,
                certificates: Certificates {
                    k_cert: K_CERT,
                    char_ok: true,
                    g_smooth: true,
                    f_unique_node: true,
                    z_smooth: true,
                    coprime_forms: false,
                    fiber_inf_smooth: false,
                    total_space_smooth: false,
                    singular_fibers_simple: false,
                    surface_attempts,
                    form_attempts: attempt + 1,
                },
            };

            match certify_forms(&mut pencil, budget)? {
                Ok(()) => return Ok(pencil),
                Err(reason) => last = reason,
            }
        }
        Err(PencilError::CertificationFailed { attempts: MAX_ATTEMPTS, last })
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn g(&self) -> &MPoly {
        &self.g
    }

    /// The nodal cubic F.
    pub fn f(&self) -> &MPoly {
        &self.nodal.form
    }

    pub fn nodal(&self) -> &NodalCubic {
        &self.nodal
    }

    pub fn alpha(&self) -> &MPoly {
        &self.alpha
    }

    pub fn beta(&self) -> &MPoly {
        &self.beta
    }

    /// The bihomogeneous equation of X in variables (x0..x3, t0, t1).
    pub fn equation(&self) -> &MPoly {
        &self.equation
    }

    pub fn certificates(&self) -> &Certificates {
        &self.certificates
    }

    pub fn is_certified(&self) -> bool {
        self.certificates.all_hold()
    }

    pub fn shares_gf(&self, other: &Pencil) -> bool {
        self.field == other.field && self.m == other.m && self.g == other.g && self.nodal.form == other.nodal.form
    }

    /// Coefficients of alpha as residues: entry i multiplies t0^(m-i) t1^i,
    /// matching the universal-family variable y_i.
    pub fn alpha_coeffs(&self) -> Vec<u64> {
        binary_form_coeffs(&self.alpha, self.m)
    }

    pub fn beta_coeffs(&self) -> Vec<u64> {
        binary_form_coeffs(&self.beta, self.m)
    }
}

fn binary_form_coeffs(form: &MPoly, m: u32) -> Vec<u64> {
    let mut out = vec![0u64; m as usize + 1];
    for t in form.terms() {
        out[t.exps[1] as usize] = t.coeff.coeffs()[0];
    }
    out
}

fn build_equation(field: &Field, g: &MPoly, f: &MPoly, alpha: &MPoly, beta: &MPoly, m: u32) -> MPoly {
    let g6 = g.extend_vars(6, 0);
    let f6 = f.extend_vars(6, 0);
    let a6 = alpha.extend_vars(6, 4);
    let b6 = beta.extend_vars(6, 4);
    let eq = a6.mul(field, &g6).add(field, &b6.mul(field, &f6));
    eq.with_grading(vec![Block { vars: 0..4, degree: 3 }, Block { vars: 4..6, degree: m }])
        .expect("equation is bihomogeneous by construction")
}

fn generate_surfaces(field: &Field, seed: u64, budget: &Budget) -> Result<(MPoly, NodalCubic, u32), PencilError> {
    let surf_seed = child(seed, "surfaces");
    let mut last = String::from("no attempt made");
    for attempt in 0..MAX_ATTEMPTS {
        let aseed = child(surf_seed, &attempt.to_string());
        let mut rng_g = SeededRng::new(child(aseed, "G"));
        let g = MPoly::random_form(field, 4, 0..4, 3, &mut rng_g);
        let nodal = make_nodal_cubic(field, child(aseed, "F"));

        let mut ok = true;
        for k in 1..=K_CERT {
            if !surface_singular_points(&g, field, k, 1, budget)?.is_empty() {
                last = format!("G singular over extension degree {k}");
                ok = false;
                break;
            }
            let f_sing = surface_singular_points(&nodal.form, field, k, 2, budget)?;
            if f_sing != vec![[0, 0, 0, 1]] {
                last = format!("F has singular points besides the node over extension degree {k}");
                ok = false;
                break;
            }
            if !z_smooth(&g, &nodal.form, field, k, budget)? {
                last = format!("the curve (G = F = 0) is singular over extension degree {k}");
                ok = false;
                break;
            }
        }
        if ok {
            return Ok((g, nodal, attempt + 1));
        }
    }
    Err(PencilError::CertificationFailed { attempts: MAX_ATTEMPTS, last })
}

/// Run the (alpha, beta)-level certificates; Ok(Err(reason)) means the draw
/// is rejected and should be retried.
fn certify_forms(pencil: &mut Pencil, budget: &Budget) -> Result<Result<(), String>, PencilError> {
    let field = pencil.field.clone();
    let p = field.p();
    let m = pencil.m;
    let ac = pencil.alpha_coeffs();
    let bc = pencil.beta_coeffs();

    // coprimality over the closure: no common dehomogenized root and no
    // common root at [0:1]
    let gcd = ugcd(p, ac.clone(), bc.clone());
    let coprime = gcd.len() == 1 && !(ac[m as usize] == 0 && bc[m as usize] == 0);
    pencil.certificates.coprime_forms = coprime;
    if !coprime {
        return Ok(Err("alpha and beta share a root over the closure".into()));
    }

    // fiber over [0:1] is alpha_m G + beta_m F; require it smooth
    let am = field.from_int(ac[m as usize]);
    let bm = field.from_int(bc[m as usize]);
    let fiber_inf = pencil.g.scale(&field, &am).add(&field, &pencil.nodal.form.scale(&field, &bm));
    for k in 1..=K_CERT {
        if !surface_singular_points(&fiber_inf, &field, k, 1, budget)?.is_empty() {
            pencil.certificates.fiber_inf_smooth = false;
            return Ok(Err(format!("fiber over [0:1] singular over extension degree {k}")));
        }
    }
    pencil.certificates.fiber_inf_smooth = true;

    for k in 1..=K_CERT {
        if let Some(w) = pencil_smooth_witness(pencil, k, budget)? {
            pencil.certificates.total_space_smooth = false;
            return Ok(Err(format!(
                "total space singular over extension degree {k} at x = {:?}, t = {:?}",
                w.x, w.t
            )));
        }
    }
    pencil.certificates.total_space_smooth = true;

    for k in 1..=K_CERT {
        let sf = scan_singular_fibers(pencil, k, budget, 1)?;
        if sf.has_multiple_singularities() {
            pencil.certificates.singular_fibers_simple = false;
            return Ok(Err(format!(
                "a fiber carries more than one singular point over extension degree {k}"
            )));
        }
    }
    pencil.certificates.singular_fibers_simple = true;
    Ok(Ok(()))
}

// --- the spreading map phi ----------------------------------------------------

/// A point of X0 x A^{m+1}: x in P^3 with (G, F)(x) != (0, 0), an affine
/// fiber parameter t with alpha(1,t) G(x) + beta(1,t) F(x) = 0, free chart
/// coordinates y1..ym and lambda.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainPoint {
    pub x: [FieldElem; 4],
    pub t: FieldElem,
    pub y: Vec<FieldElem>,
    pub lambda: FieldElem,
}

/// A point of curly-X0 x A^1 (with the extra coordinate z identified with
/// y1 of the domain side).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePoint {
    pub x: [FieldElem; 4],
    pub yp: Vec<FieldElem>,
    pub lambda_p: FieldElem,
    pub t: FieldElem,
    pub z: FieldElem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipReason {
    /// The defining formula divides by F(x).
    FVanishesAtX,
    /// The lambda coefficient -beta_1 - alpha_1 G(x)/F(x) vanishes, so the
    /// affine triangular system for the inverse degenerates at this x.
    DegenerateLambdaCoefficient,
}

#[derive(Debug)]
pub enum PhiOutcome<T> {
    Ok(T),
    Skipped(SkipReason),
}

fn lifted(poly: &MPoly, base: &Field, ext: &Field) -> MPoly {
    if ext.k() == 1 {
        poly.clone()
    } else {
        poly.lift(base, ext)
    }
}

fn embedded_coeffs(ext: &Field, residues: &[u64]) -> Vec<FieldElem> {
    residues.iter().map(|&r| ext.embed_scalar(r)).collect()
}

/// alpha(1, t) as a field element, from the coefficient list.
fn eval_dehom(ext: &Field, coeffs: &[FieldElem], t: &FieldElem) -> FieldElem {
    let mut acc = ext.zero();
    for c in coeffs.iter().rev() {
        acc = ext.add(&ext.mul(&acc, t), c);
    }
    acc
}

/// L_alpha(y) at y0 = 1: alpha_0 + sum alpha_i y_i.
fn linear_form(ext: &Field, coeffs: &[FieldElem], y: &[FieldElem]) -> FieldElem {
    let mut acc = coeffs[0].clone();
    for (c, yi) in coeffs[1..].iter().zip(y) {
        acc = ext.add(&acc, &ext.mul(c, yi));
    }
    acc
}

pub fn phi_forward(
    pencil: &Pencil,
    ext: &Field,
    pt: &DomainPoint,
) -> Result<PhiOutcome<ImagePoint>, PencilError> {
    let base = pencil.field();
    let g = lifted(pencil.g(), base, ext);
    let f = lifted(pencil.f(), base, ext);
    let ac = embedded_coeffs(ext, &pencil.alpha_coeffs());
    let bc = embedded_coeffs(ext, &pencil.beta_coeffs());

    let gx = g.eval(ext, &pt.x)?;
    let fx = f.eval(ext, &pt.x)?;
    if gx.is_zero() && fx.is_zero() {
        return Err(PencilError::DomainViolation("x lies on (G = F = 0)".into()));
    }
    let at = eval_dehom(ext, &ac, &pt.t);
    let bt = eval_dehom(ext, &bc, &pt.t);
    let fiber = ext.add(&ext.mul(&at, &gx), &ext.mul(&bt, &fx));
    if !fiber.is_zero() {
        return Err(PencilError::DomainViolation("(x, t) does not lie on X".into()));
    }
    if fx.is_zero() {
        return Ok(PhiOutcome::Skipped(SkipReason::FVanishesAtX));
    }
    let r = ext.div(&gx, &fx)?;

    let m = pencil.m() as usize;
    let mut yp = Vec::with_capacity(m);
    yp.push(ext.add(&ext.add(&pt.y[0], &pt.t), &pt.lambda));
    let mut tpow = pt.t.clone();
    for yi in pt.y.iter().take(m).skip(1) {
        tpow = ext.mul(&tpow, &pt.t);
        yp.push(ext.add(yi, &tpow));
    }

    // lambda' = (-beta_1 - alpha_1 G/F) lambda - (L_beta(y) - beta_0)
    //           - (G/F)(L_alpha(y) - alpha_0)
    let c = ext.neg(&ext.add(&bc[1], &ext.mul(&ac[1], &r)));
    let lb = ext.sub(&linear_form(ext, &bc, &pt.y), &bc[0]);
    let la = ext.sub(&linear_form(ext, &ac, &pt.y), &ac[0]);
    let lambda_p = ext.sub(&ext.sub(&ext.mul(&c, &pt.lambda), &lb), &ext.mul(&r, &la));

    // internal check: the image satisfies the universal-family equation
    let lhs = ext.add(
        &ext.mul(&linear_form(ext, &ac, &yp), &gx),
        &ext.mul(&ext.add(&linear_form(ext, &bc, &yp), &lambda_p), &fx),
    );
    if !lhs.is_zero() {
        return Err(PencilError::Inconsistent(
            "phi image violates the universal-family equation".into(),
        ));
    }

    Ok(PhiOutcome::Ok(ImagePoint {
        x: pt.x.clone(),
        yp,
        lambda_p,
        t: pt.t.clone(),
        z: pt.y[0].clone(),
    }))
}

pub fn phi_inverse(
    pencil: &Pencil,
    ext: &Field,
    img: &ImagePoint,
) -> Result<PhiOutcome<DomainPoint>, PencilError> {
    let base = pencil.field();
    let g = lifted(pencil.g(), base, ext);
    let f = lifted(pencil.f(), base, ext);
    let gx = g.eval(ext, &img.x)?;
    let fx = f.eval(ext, &img.x)?;
    if gx.is_zero() && fx.is_zero() {
        return Err(PencilError::DomainViolation("x lies on (G = F = 0)".into()));
    }
    if fx.is_zero() {
        return Ok(PhiOutcome::Skipped(SkipReason::FVanishesAtX));
    }
    let ac = embedded_coeffs(ext, &pencil.alpha_coeffs());
    let bc = embedded_coeffs(ext, &pencil.beta_coeffs());

    // membership: the (x, y', lambda') part satisfies the universal equation
    let lhs = ext.add(
        &ext.mul(&linear_form(ext, &ac, &img.yp), &gx),
        &ext.mul(&ext.add(&linear_form(ext, &bc, &img.yp), &img.lambda_p), &fx),
    );
    if !lhs.is_zero() {
        return Err(PencilError::DomainViolation(
            "point does not satisfy the universal-family equation".into(),
        ));
    }
    // and (x, t) projects to X0
    let at = eval_dehom(ext, &ac, &img.t);
    let bt = eval_dehom(ext, &bc, &img.t);
    if !ext.add(&ext.mul(&at, &gx), &ext.mul(&bt, &fx)).is_zero() {
        return Err(PencilError::DomainViolation(
            "image point does not project to X0".into(),
        ));
    }

    // the triangular system: the lambda row has coefficient
    // c = -beta_1 - alpha_1 G/F and degenerates when c = 0
    let r = ext.div(&gx, &fx)?;
    let c = ext.neg(&ext.add(&bc[1], &ext.mul(&ac[1], &r)));
    if c.is_zero() {
        return Ok(PhiOutcome::Skipped(SkipReason::DegenerateLambdaCoefficient));
    }

    let m = pencil.m() as usize;
    let mut y = Vec::with_capacity(m);
    y.push(img.z.clone());
    let mut tpow = img.t.clone();
    for ypi in img.yp.iter().take(m).skip(1) {
        tpow = ext.mul(&tpow, &img.t);
        y.push(ext.sub(ypi, &tpow));
    }
    // lambda' = c lambda - (L_beta(y) - beta_0) - r (L_alpha(y) - alpha_0)
    let lb = ext.sub(&linear_form(ext, &bc, &y), &bc[0]);
    let la = ext.sub(&linear_form(ext, &ac, &y), &ac[0]);
    let rhs = ext.add(&ext.add(&img.lambda_p, &lb), &ext.mul(&r, &la));
    let lambda = ext.div(&rhs, &c)?;

    // image characterization: the first row y'_1 = y_1 + t + lambda must be
    // consistent with the recovered lambda
    let y1_row = ext.add(&ext.add(&y[0], &img.t), &lambda);
    if y1_row != img.yp[0] {
        return Err(PencilError::DomainViolation(
            "point is not in the image of the spreading map".into(),
        ));
    }

    Ok(PhiOutcome::Ok(DomainPoint { x: img.x.clone(), t: img.t.clone(), y, lambda }))
}

/// Outcome tallies of a round-trip experiment. One "sample" is one uniform
/// draw from the ambient product (x-tuple, t, y, lambda); draws that miss
/// X0 x A^{m+1} are rejected, domain points where the map's formulas
/// degenerate are skipped, and the rest must round-trip exactly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PhiStats {
    pub samples: u64,
    pub rejected: u64,
    pub completed: u64,
    pub skipped_f_zero: u64,
    pub skipped_degenerate_lambda: u64,
    pub mismatches: u64,
}

impl PhiStats {
    pub fn skipped(&self) -> u64 {
        self.skipped_f_zero + self.skipped_degenerate_lambda
    }

    /// Fraction of all samples that hit the exceptional loci.
    pub fn skip_rate(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.skipped() as f64 / self.samples as f64
        }
    }
}

/// Draw one tuple uniformly from the ambient product P^3-representatives x
/// A^1 x A^m x A^1 and test it for membership in X0 x A^{m+1}. Every
/// rational point of the domain is hit with equal probability (each
/// projective x has the same number of nonzero coordinate representatives).
fn sample_ambient(
    pencil: &Pencil,
    ext: &Field,
    g: &MPoly,
    f: &MPoly,
    ac: &[FieldElem],
    bc: &[FieldElem],
    rng: &mut SeededRng,
) -> Result<Option<DomainPoint>, PencilError> {
    let n = ext.size();
    let x: [FieldElem; 4] = std::array::from_fn(|_| ext.elem_from_index(rng.below(n)));
    let t = ext.elem_from_index(rng.below(n));
    let m = pencil.m() as usize;
    let y: Vec<FieldElem> = (0..m).map(|_| ext.elem_from_index(rng.below(n))).collect();
    let lambda = ext.elem_from_index(rng.below(n));
    if x.iter().all(|c| c.is_zero()) {
        return Ok(None);
    }
    let gx = g.eval(ext, &x)?;
    let fx = f.eval(ext, &x)?;
    if gx.is_zero() && fx.is_zero() {
        return Ok(None);
    }
    let fiber = ext.add(
        &ext.mul(&eval_dehom(ext, ac, &t), &gx),
        &ext.mul(&eval_dehom(ext, bc, &t), &fx),
    );
    if !fiber.is_zero() {
        return Ok(None);
    }
    Ok(Some(DomainPoint { x, t, y, lambda }))
}

/// Sample the ambient product until `valid_target` domain points have
/// round-tripped through phi, tallying rejections, skips and mismatches.
/// A mismatch (a valid point that fails to reproduce itself) indicates a
/// real defect and is never silently dropped.
pub fn phi_roundtrip(pencil: &Pencil, k: usize, valid_target: u64, seed: u64) -> Result<PhiStats, PencilError> {
    let ext = if k == 1 { pencil.field().clone() } else { Field::new(pencil.field().p(), k)? };
    let base = pencil.field();
    let g = lifted(pencil.g(), base, &ext);
    let f = lifted(pencil.f(), base, &ext);
    let ac = embedded_coeffs(&ext, &pencil.alpha_coeffs());
    let bc = embedded_coeffs(&ext, &pencil.beta_coeffs());
    let mut rng = SeededRng::new(child(seed, "phi-roundtrip"));
    let mut stats = PhiStats {
        samples: 0,
        rejected: 0,
        completed: 0,
        skipped_f_zero: 0,
        skipped_degenerate_lambda: 0,
        mismatches: 0,
    };
    let sample_cap = valid_target
        .saturating_mul(ext.size())
        .saturating_mul(64)
        .max(1_000_000);
    while stats.completed < valid_target {
        if stats.samples >= sample_cap {
            return Err(PencilError::Inconsistent(format!(
                "sampling stalled: {} valid points after {} samples",
                stats.completed, stats.samples
            )));
        }
        stats.samples += 1;
        let Some(pt) = sample_ambient(pencil, &ext, &g, &f, &ac, &bc, &mut rng)? else {
            stats.rejected += 1;
            continue;
        };
        match phi_forward(pencil, &ext, &pt)? {
            PhiOutcome::Skipped(SkipReason::FVanishesAtX) => stats.skipped_f_zero += 1,
            PhiOutcome::Skipped(SkipReason::DegenerateLambdaCoefficient) => {
                stats.skipped_degenerate_lambda += 1
            }
            PhiOutcome::Ok(img) => match phi_inverse(pencil, &ext, &img)? {
                PhiOutcome::Skipped(SkipReason::FVanishesAtX) => stats.skipped_f_zero += 1,
                PhiOutcome::Skipped(SkipReason::DegenerateLambdaCoefficient) => {
                    stats.skipped_degenerate_lambda += 1
                }
                PhiOutcome::Ok(back) => {
                    if back == pt {
                        stats.completed += 1;
                    } else {
                        stats.mismatches += 1;
                    }
                }
            },
        }
    }
    Ok(stats)
}

// --- universal-family chart and the linear isomorphism ------------------------

/// Variables of the universal chart: x0..x3, then y1..ym, then lambda.
pub fn chart_nvars(m: u32) -> usize {
    5 + m as usize
}

/// The chart equation L_alpha(1, y) G + (L_beta(1, y) + lambda) F in the
/// variables (x0..x3, y1..ym, lambda).
pub fn universal_chart_poly(pencil: &Pencil) -> MPoly {
    let field = pencil.field();
    let m = pencil.m();
    let nv = chart_nvars(m);
    let g = pencil.g().extend_vars(nv, 0);
    let f = pencil.f().extend_vars(nv, 0);
    let la = chart_linear_form(field, &pencil.alpha_coeffs(), m);
    let lb = chart_linear_form(field, &pencil.beta_coeffs(), m);
    let lambda = MPoly::variable(field, nv, nv - 1);
    la.mul(field, &g).add(field, &lb.add(field, &lambda).mul(field, &f))
}

fn chart_linear_form(field: &Field, coeffs: &[u64], m: u32) -> MPoly {
    let nv = chart_nvars(m);
    let mut terms = vec![Term { exps: vec![0; nv], coeff: field.from_int(coeffs[0]) }];
    for (i, &c) in coeffs.iter().enumerate().skip(1) {
        let mut exps = vec![0; nv];
        exps[3 + i] = 1;
        terms.push(Term { exps, coeff: field.from_int(c) });
    }
    MPoly::new(field, nv, terms)
}

/// An invertible affine change of (y, lambda) carrying one pencil's
/// universal chart to another's: L_alpha -> L_alpha-tilde and
/// L_beta + lambda -> L_beta-tilde + lambda.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniversalIso {
    /// Substitutions expressing the target chart's variables in the source's.
    pub subs: Vec<MPoly>,
    /// The inverse substitutions.
    pub inv_subs: Vec<MPoly>,
    /// The pivot index: both alpha_j and alpha-tilde_j are nonzero.
    pub j: usize,
}

fn iso_substitutions(field: &Field, m: u32, src: (&[u64], &[u64]), dst: (&[u64], &[u64]), j: usize) -> Vec<MPoly> {
    let nv = chart_nvars(m);
    let (sa, sb) = src;
    let (da, db) = dst;
    let mut subs: Vec<MPoly> = (0..nv).map(|v| MPoly::variable(field, nv, v)).collect();
    // y_j -> (L_alpha(y) - L_alpha-tilde(y) + alpha-tilde_j y_j) / alpha-tilde_j
    let la = chart_linear_form(field, sa, m);
    let mut da_without_j = da.to_vec();
    da_without_j[j] = 0;
    let la_tilde_rest = chart_linear_form(field, &da_without_j, m);
    let inv_daj = field.inv(&field.from_int(da[j])).expect("pivot is nonzero");
    let ty_j = la.sub(field, &la_tilde_rest).scale(field, &inv_daj);
    subs[3 + j] = ty_j.clone();
    // lambda -> lambda + L_beta(y) - L_beta-tilde(T(y))
    let lb = chart_linear_form(field, sb, m);
    let mut db_without_j = db.to_vec();
    db_without_j[j] = 0;
    let lb_tilde_of_ty = chart_linear_form(field, &db_without_j, m)
        .add(field, &ty_j.scale(field, &field.from_int(db[j])));
    subs[nv - 1] = MPoly::variable(field, nv, nv - 1)
        .add(field, &lb)
        .sub(field, &lb_tilde_of_ty);
    subs
}

/// Construct and verify the linear chart isomorphism between two certified
/// pencils sharing (G, F). Returns None when no pivot index exists (both
/// alpha's must have a common nonzero coefficient besides alpha_0).
pub fn universal_linear_iso(a: &Pencil, b: &Pencil) -> Result<Option<UniversalIso>, PencilError> {
    assert!(a.shares_gf(b), "pencils must share (G, F)");
    let field = a.field();
    let m = a.m();
    let (aa, ab) = (a.alpha_coeffs(), a.beta_coeffs());
    let (ba, bb) = (b.alpha_coeffs(), b.beta_coeffs());
    let Some(j) = (1..=m as usize).find(|&j| aa[j] != 0 && ba[j] != 0) else {
        return Ok(None);
    };
    let subs = iso_substitutions(field, m, (&aa, &ab), (&ba, &bb), j);
    let inv_subs = iso_substitutions(field, m, (&ba, &bb), (&aa, &ab), j);

    // the identity U-tilde(psi(point)) = U(point) must hold exactly
    let u = universal_chart_poly(a);
    let u_tilde = universal_chart_poly(b);
    if u_tilde.substitute(field, &subs)? != u {
        return Err(PencilError::Inconsistent(
            "chart substitution does not carry one equation to the other".into(),
        ));
    }
    // and the two substitutions must compose to the identity
    let nv = chart_nvars(m);
    for v in 0..nv {
        let roundtrip = inv_subs[v].substitute(field, &subs)?;
        if roundtrip != MPoly::variable(field, nv, v) {
            return Err(PencilError::Inconsistent(
                "chart substitutions do not compose to the identity".into(),
            ));
        }
    }
    Ok(Some(UniversalIso { subs, inv_subs, j }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget() -> Budget {
        Budget::default()
    }

    #[test]
    fn ugcd_basics() {
        // (x + 1)(x + 2) and (x + 1)(x + 3) over F_7 share exactly (x + 1)
        let a = vec![2, 3, 1];
        let b = vec![3, 4, 1];
        let g = ugcd(7, a, b);
        assert_eq!(g.len(), 2);
        // evaluate gcd at x = -1: must vanish
        let v = (g[0] + g[1] * 6) % 7;
        assert_eq!(v, 0);
        assert_eq!(ugcd(7, vec![1, 1], vec![2, 1]).len(), 1);
    }

    #[test]
    fn nodal_cubic_structure() {
        let f7 = Field::new(7, 1).unwrap();
        let nc = make_nodal_cubic(&f7, 99);
        // the node: all four partials vanish at [0:0:0:1]
        let node = [f7.zero(), f7.zero(), f7.zero(), f7.one()];
        for v in 0..4 {
            assert!(nc.form.partial(&f7, v).eval(&f7, &node).unwrap().is_zero());
        }
        assert!(nc.form.eval(&f7, &node).unwrap().is_zero());
        assert!(quadratic_nondegenerate(&f7, &nc.q_form));
    }

    #[test]
    fn generation_is_deterministic() {
        let f7 = Field::new(7, 1).unwrap();
        let a = Pencil::generate(&f7, 3, 1234, None, &budget()).unwrap();
        let b = Pencil::generate(&f7, 3, 1234, None, &budget()).unwrap();
        assert_eq!(a, b);
        assert!(a.is_certified());
        let json = serde_json::to_string(&a).unwrap();
        let back: Pencil = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn char_dividing_m_is_rejected() {
        let f5 = Field::new(5, 1).unwrap();
        assert!(matches!(
            Pencil::generate(&f5, 5, 1, None, &budget()),
            Err(PencilError::BadDegree { p: 5, m: 5 })
        ));
    }

    #[test]
    fn shared_mode_reuses_surfaces() {
        let f7 = Field::new(7, 1).unwrap();
        let a = Pencil::generate(&f7, 3, 10, None, &budget()).unwrap();
        let b = Pencil::generate(&f7, 3, 11, Some(&a), &budget()).unwrap();
        assert!(a.shares_gf(&b));
        assert_ne!(a.alpha(), b.alpha());
        assert!(b.is_certified());
    }

    #[test]
    fn equation_is_bihomogeneous() {
        let f7 = Field::new(7, 1).unwrap();
        let p = Pencil::generate(&f7, 3, 5, None, &budget()).unwrap();
        assert!(p.equation().is_homogeneous(&[
            Block { vars: 0..4, degree: 3 },
            Block { vars: 4..6, degree: 3 },
        ]));
        // coefficient extraction round-trips through the equation builder
        let rebuilt = build_equation(&f7, p.g(), p.f(), p.alpha(), p.beta(), 3);
        assert_eq!(&rebuilt, p.equation());
    }

    #[test]
    fn phi_roundtrips_without_mismatches() {
        let f7 = Field::new(7, 1).unwrap();
        let p = Pencil::generate(&f7, 3, 77, None, &budget()).unwrap();
        let stats = phi_roundtrip(&p, 1, 500, 77).unwrap();
        assert_eq!(stats.completed, 500);
        assert_eq!(stats.mismatches, 0);
        assert_eq!(
            stats.samples,
            stats.rejected + stats.completed + stats.skipped(),
        );
        // and over a quadratic extension
        let stats2 = phi_roundtrip(&p, 2, 200, 78).unwrap();
        assert_eq!(stats2.mismatches, 0);
    }

    #[test]
    fn phi_rejects_off_locus_points() {
        let f7 = Field::new(7, 1).unwrap();
        let p = Pencil::generate(&f7, 3, 42, None, &budget()).unwrap();
        let bogus = DomainPoint {
            x: [f7.one(), f7.zero(), f7.zero(), f7.zero()],
            t: f7.zero(),
            y: vec![f7.zero(), f7.zero(), f7.zero()],
            lambda: f7.zero(),
        };
        // either x in on (G=F=0) (impossible for [1:0:0:0] generically) or
        // t = 0 fails the fiber equation; both are domain violations unless
        // the fiber equation happens to hold, in which case forward succeeds
        match phi_forward(&p, &f7, &bogus) {
            Ok(_) | Err(PencilError::DomainViolation(_)) => {}
            Err(e) => panic!("unexpected error: {e}"),
        }
    }

    #[test]
    fn universal_iso_exists_and_verifies() {
        let f7 = Field::new(7, 1).unwrap();
        let a = Pencil::generate(&f7, 3, 21, None, &budget()).unwrap();
        let b = Pencil::generate(&f7, 3, 22, Some(&a), &budget()).unwrap();
        let iso = universal_linear_iso(&a, &b).unwrap();
        assert!(iso.is_some(), "generic pencils admit a pivot index");
        // self-iso must also work and be the identity on the equation
        let self_iso = universal_linear_iso(&a, &a).unwrap().unwrap();
        let u = universal_chart_poly(&a);
        assert_eq!(u.substitute(&f7, &self_iso.subs).unwrap(), u);
    }
}
