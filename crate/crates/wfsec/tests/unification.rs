//! Soundness and completeness of unification against brute-force
//! enumeration over a tiny universe. Completeness is checked when one
//! side is free of variables, where associative matching is finitary.

use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::sample::select;
use wfsec::{candidate_sources, unify_all, Atom, KeyMode, Message, Substitution, UnifyOptions, VerificationContext};

fn ctx() -> VerificationContext {
    let mut c = VerificationContext::new("I");
    c.add_principal("A");
    c.add_principal("B");
    c.add_symmetric_key("k");
    c
}

fn leaf(variables: bool) -> BoxedStrategy<Atom> {
    let fixed = prop_oneof![
        select(&["A", "B"][..]).prop_map(Atom::constant),
        Just(Atom::parameter("A", 1)),
    ];
    if variables {
        prop_oneof![2 => fixed, 1 => select(&["X", "Y"][..]).prop_map(Atom::variable)].boxed()
    } else {
        fixed.boxed()
    }
}

fn term_with(variables: bool) -> impl Strategy<Value = Message> {
    let item = prop_oneof![
        3 => leaf(variables).prop_map(Message::Atom),
        1 => prop::collection::vec(leaf(variables).prop_map(Message::Atom), 1..3)
            .prop_map(|v| Message::enc(Message::concat(v), Atom::constant("k"), KeyMode::Symmetric)),
    ];
    prop::collection::vec(item, 1..4).prop_map(Message::concat)
}

fn term() -> impl Strategy<Value = Message> {
    term_with(true)
}

/// Terms whose only unknowns are parameters.
fn closed_term() -> impl Strategy<Value = Message> {
    term_with(false)
}

fn ground_values() -> Vec<Message> {
    let atoms = [Message::Atom(Atom::constant("A")), Message::Atom(Atom::constant("B"))];
    let mut out: Vec<Message> = atoms.to_vec();
    for a in &atoms {
        for b in &atoms {
            out.push(Message::concat([a.clone(), b.clone()]));
        }
    }
    out
}

fn unknowns(ms: &[&Message]) -> Vec<Atom> {
    let set: BTreeSet<Atom> = ms
        .iter()
        .flat_map(|m| m.atoms())
        .filter(|a| a.is_variable() || a.is_parameter())
        .collect();
    set.into_iter().collect()
}

fn domain(a: &Atom) -> Vec<Message> {
    if a.is_parameter() {
        vec![Message::Atom(Atom::constant("A")), Message::Atom(Atom::constant("B"))]
    } else {
        ground_values()
    }
}

/// Every assignment of the unknowns over their small domains.
fn assignments(vars: &[Atom]) -> Vec<Substitution> {
    let mut out = vec![Substitution::new()];
    for v in vars {
        let mut next = Vec::new();
        for s in &out {
            for value in domain(v) {
                let mut t = s.clone();
                t.insert(v.clone(), value);
                next.push(t);
            }
        }
        out = next;
    }
    out
}

/// True when some instance of `sigma` equals `theta` on `vars`.
fn generalizes(sigma: &Substitution, theta: &Substitution, vars: &[Atom]) -> bool {
    let images: Vec<Message> = vars
        .iter()
        .map(|v| sigma.apply_fully(&Message::Atom(v.clone())).unwrap())
        .collect();
    let rest = unknowns(&images.iter().collect::<Vec<_>>());
    assignments(&rest).iter().any(|rho| {
        vars.iter().zip(&images).all(|(v, img)| {
            rho.apply_fully(img).ok().as_ref() == theta.get(v)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn unifiers_are_sound(a in term(), b in term()) {
        let opts = UnifyOptions { ctx: None, ..UnifyOptions::default() };
        for s in unify_all(&a, &b, &opts) {
            prop_assert_eq!(s.apply_fully(&a).unwrap(), s.apply_fully(&b).unwrap(), "{}", s);
        }
    }

    #[test]
    fn every_small_ground_unifier_is_covered(a in term(), b in closed_term()) {
        let c = ctx();
        let opts = UnifyOptions { ctx: Some(&c), ..UnifyOptions::default() };
        let found = unify_all(&a, &b, &opts);
        let vars = unknowns(&[&a, &b]);
        for theta in assignments(&vars) {
            let (ga, gb) = (theta.apply_fully(&a).unwrap(), theta.apply_fully(&b).unwrap());
            if ga == gb {
                prop_assert!(
                    found.iter().any(|s| generalizes(s, &theta, &vars)),
                    "{} not covered for {} = {}", theta, a, b
                );
            }
        }
    }

    #[test]
    fn unification_is_deterministic(a in term(), b in term()) {
        let opts = UnifyOptions::default();
        prop_assert_eq!(unify_all(&a, &b, &opts), unify_all(&a, &b, &opts));
    }

    #[test]
    fn candidates_unify_with_the_target(pool in prop::collection::vec(term(), 1..4), target in term()) {
        let c = ctx();
        for cand in candidate_sources(&target, &pool, &c, &BTreeSet::new()) {
            prop_assert_eq!(
                cand.subst.apply_fully(&cand.source).unwrap(),
                cand.subst.apply_fully(&target).unwrap()
            );
            prop_assert_eq!(&pool[cand.index], &cand.source);
        }
    }
}

#[test]
fn brute_force_sees_every_segmentation() {
    let atom = |s: &str| Message::Atom(Atom::constant(s));
    let a = Message::concat([Message::Atom(Atom::variable("X")), Message::Atom(Atom::variable("Y"))]);
    let b = Message::concat([atom("A"), atom("B"), atom("A")]);
    let vars = unknowns(&[&a, &b]);
    let solutions: Vec<Substitution> = assignments(&vars)
        .into_iter()
        .filter(|t| t.apply_fully(&a).unwrap() == t.apply_fully(&b).unwrap())
        .collect();
    assert_eq!(solutions.len(), 2);
    let found = unify_all(&a, &b, &UnifyOptions::default());
    assert_eq!(found.len(), 2);
    for theta in &solutions {
        assert!(found.iter().any(|s| generalizes(s, theta, &vars)));
    }
}
