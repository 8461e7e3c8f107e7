//! Property-based checks of the algebraic foundations: field axioms,
//! derivative rules, ring laws and the realization homomorphisms.

use std::collections::BTreeMap;

use cutpaste::kvar::{KClass, LPoly, Measure};
use cutpaste::seed::SeededRng;
use cutpaste::{Field, MPoly};
use proptest::prelude::*;

fn fields() -> Vec<Field> {
    vec![
        Field::new(7, 1).unwrap(),
        Field::new(5, 2).unwrap(),
        Field::new(7, 2).unwrap(),
    ]
}

proptest! {
    #[test]
    fn field_axioms(ai in 0u64..1000, bi in 0u64..1000, ci in 0u64..1000) {
        for f in fields() {
            let n = f.size();
            let a = f.elem_from_index(ai % n);
            let b = f.elem_from_index(bi % n);
            let c = f.elem_from_index(ci % n);
            // additive and multiplicative commutativity/associativity
            prop_assert_eq!(f.add(&a, &b), f.add(&b, &a));
            prop_assert_eq!(f.mul(&a, &b), f.mul(&b, &a));
            prop_assert_eq!(f.add(&f.add(&a, &b), &c), f.add(&a, &f.add(&b, &c)));
            prop_assert_eq!(f.mul(&f.mul(&a, &b), &c), f.mul(&a, &f.mul(&b, &c)));
            // identities and inverses
            prop_assert_eq!(f.add(&a, &f.zero()), a.clone());
            prop_assert_eq!(f.mul(&a, &f.one()), a.clone());
            prop_assert!(f.add(&a, &f.neg(&a)).is_zero());
            if !a.is_zero() {
                prop_assert_eq!(f.mul(&a, &f.inv(&a).unwrap()), f.one());
            }
            // distributivity
            prop_assert_eq!(
                f.mul(&a, &f.add(&b, &c)),
                f.add(&f.mul(&a, &b), &f.mul(&a, &c))
            );
            // subtraction is addition of the negation
            prop_assert_eq!(f.sub(&a, &b), f.add(&a, &f.neg(&b)));
        }
    }

    #[test]
    fn frobenius_and_index_roundtrip(ai in 0u64..1000) {
        for f in fields() {
            let n = f.size();
            let a = f.elem_from_index(ai % n);
            // x -> x^p is additive in characteristic p
            let b = f.elem_from_index((ai * 7 + 3) % n);
            let p = f.p();
            let lhs = f.pow(&f.add(&a, &b), p);
            let rhs = f.add(&f.pow(&a, p), &f.pow(&b, p));
            prop_assert_eq!(lhs, rhs);
            prop_assert_eq!(f.elem_from_index(f.index_of(&a)), a);
        }
    }

    #[test]
    fn derivative_linearity_and_leibniz(seed in 0u64..5000, da in 1u32..4, db in 1u32..4) {
        let field = Field::new(7, 1).unwrap();
        let mut rng = SeededRng::new(seed);
        let a = MPoly::random_form(&field, 3, 0..3, da, &mut rng);
        let b = MPoly::random_form(&field, 3, 0..3, db, &mut rng);
        for v in 0..3 {
            // d(a + b) = da + db (same degree so the sum stays homogeneous)
            if da == db {
                prop_assert_eq!(
                    a.add(&field, &b).partial(&field, v),
                    a.partial(&field, v).add(&field, &b.partial(&field, v))
                );
            }
            // Leibniz: d(ab) = da b + a db
            prop_assert_eq!(
                a.mul(&field, &b).partial(&field, v),
                a.partial(&field, v)
                    .mul(&field, &b)
                    .add(&field, &a.mul(&field, &b.partial(&field, v)))
            );
        }
        // Euler's identity for a homogeneous form: sum x_i dF/dx_i = deg * F
        let mut euler = MPoly::zero(3);
        for v in 0..3 {
            euler = euler.add(
                &field,
                &MPoly::variable(&field, 3, v).mul(&field, &a.partial(&field, v)),
            );
        }
        prop_assert_eq!(euler, a.scale(&field, &field.from_int(da as u64)));
    }

    #[test]
    fn mpoly_ring_laws(seed in 0u64..5000) {
        let field = Field::new(5, 1).unwrap();
        let mut rng = SeededRng::new(seed);
        let a = MPoly::random_form(&field, 3, 0..3, 2, &mut rng);
        let b = MPoly::random_form(&field, 3, 0..3, 2, &mut rng);
        let c = MPoly::random_form(&field, 3, 0..3, 1, &mut rng);
        prop_assert_eq!(a.add(&field, &b), b.add(&field, &a));
        prop_assert_eq!(a.mul(&field, &b), b.mul(&field, &a));
        prop_assert_eq!(
            a.mul(&field, &b).mul(&field, &c),
            a.mul(&field, &b.mul(&field, &c))
        );
        prop_assert_eq!(
            a.add(&field, &b).mul(&field, &c),
            a.mul(&field, &c).add(&field, &b.mul(&field, &c))
        );
        prop_assert_eq!(a.sub(&field, &a), MPoly::zero(3));
    }

    #[test]
    fn evaluation_is_a_homomorphism(seed in 0u64..5000, xi in 0u64..7, yi in 0u64..7, zi in 0u64..7) {
        let field = Field::new(7, 1).unwrap();
        let mut rng = SeededRng::new(seed);
        let a = MPoly::random_form(&field, 3, 0..3, 2, &mut rng);
        let b = MPoly::random_form(&field, 3, 0..3, 3, &mut rng);
        let pt = [
            field.elem_from_index(xi),
            field.elem_from_index(yi),
            field.elem_from_index(zi),
        ];
        let ev = |p: &MPoly| p.eval(&field, &pt).unwrap();
        prop_assert_eq!(ev(&a.mul(&field, &b)), field.mul(&ev(&a), &ev(&b)));
        // homogeneity: F(c x) = c^deg F(x)
        let c = field.elem_from_index((seed % 6) + 1);
        let scaled: Vec<_> = pt.iter().map(|x| field.mul(&c, x)).collect();
        prop_assert_eq!(
            a.eval(&field, &scaled).unwrap(),
            field.mul(&field.pow(&c, 2), &ev(&a))
        );
    }

    #[test]
    fn lpoly_ring_and_realization(a in prop::collection::vec(-50i64..50, 0..6),
                                  b in prop::collection::vec(-50i64..50, 0..6),
                                  q in 2i128..100) {
        let pa = LPoly(a);
        let pb = LPoly(b);
        prop_assert_eq!(pa.add(&pb), pb.add(&pa));
        prop_assert_eq!(pa.mul(&pb), pb.mul(&pa));
        prop_assert!(pa.sub(&pa).is_zero());
        // evaluation at q is a ring homomorphism
        prop_assert_eq!(pa.add(&pb).eval(q), pa.eval(q) + pb.eval(q));
        prop_assert_eq!(pa.mul(&pb).eval(q), pa.eval(q) * pb.eval(q));
    }

    #[test]
    fn kclass_laws_and_realization(a in prop::collection::vec(-20i64..20, 0..5),
                                   b in prop::collection::vec(-20i64..20, 0..5),
                                   av in -100i128..100,
                                   q in 2i128..50) {
        let ca = KClass::from_lpoly(LPoly(a)).add(&KClass::atom("A"));
        let cb = KClass::from_lpoly(LPoly(b));
        let mut bind = BTreeMap::new();
        bind.insert("A".to_string(), av);
        for measure in [Measure::Count { q }, Measure::Euler] {
            let r = |c: &KClass| c.realize(measure, &bind).unwrap();
            prop_assert_eq!(r(&ca.add(&cb)), r(&ca) + r(&cb));
            prop_assert_eq!(r(&ca.sub(&cb)), r(&ca) - r(&cb));
            // products with an atom-free factor realize multiplicatively
            prop_assert_eq!(r(&ca.mul(&cb).unwrap()), r(&ca) * r(&cb));
        }
        // additive commutativity and associativity
        prop_assert_eq!(ca.add(&cb), cb.add(&ca));
        prop_assert!(ca.sub(&ca).is_atom_free());
    }
}
