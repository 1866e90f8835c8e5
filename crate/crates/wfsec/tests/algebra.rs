//! Property tests for terms, levels, rewriting, selection and derivation.

use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::sample::select;
use wfsec::rewrite::{normalize_with, Strategy as Rewriting};
use wfsec::{
    access, check_well_protected, clear_atoms, derive, f_derivative, normalize, parse_message, substitute, Atom,
    KeyMode, Message, SecurityLevel, SelectionInstance, SelectionResult, Substitution, SymbolTable,
    VerificationContext,
};

const PRINCIPALS: [&str; 3] = ["A", "B", "C"];
const DATA: [&str; 3] = ["Na", "Nb", "d"];
const VARS: [&str; 2] = ["X", "Y"];
const KEYS: [(&str, KeyMode); 5] = [
    ("ka", KeyMode::Asymmetric),
    ("ka-1", KeyMode::Asymmetric),
    ("kb", KeyMode::Asymmetric),
    ("kb-1", KeyMode::Asymmetric),
    ("kab", KeyMode::Symmetric),
];

fn ctx() -> VerificationContext {
    let mut c = VerificationContext::new("I");
    for p in PRINCIPALS {
        c.add_principal(p);
    }
    for d in DATA {
        c.add_constant(d);
    }
    c.add_key_pair("ka", "ka-1");
    c.add_key_pair("kb", "kb-1");
    c.add_symmetric_key("kab");
    c.set_level("ka-1", SecurityLevel::names(["A"]));
    c.set_level("kb-1", SecurityLevel::names(["B"]));
    c.set_level("kab", SecurityLevel::names(["A", "B"]));
    c.set_level("Na", SecurityLevel::names(["A", "B"]));
    c.set_level("Nb", SecurityLevel::names(["B", "C"]));
    c
}

fn symbols() -> SymbolTable {
    let mut t = ctx().symbols();
    for v in VARS {
        t.declare_variable(v);
    }
    t
}

fn ground_atom() -> impl Strategy<Value = Atom> {
    prop_oneof![
        select(&PRINCIPALS[..]).prop_map(Atom::constant),
        select(&DATA[..]).prop_map(Atom::constant),
        select(&KEYS[..]).prop_map(|(k, _)| Atom::constant(k)),
    ]
}

fn any_atom() -> impl Strategy<Value = Atom> {
    prop_oneof![
        3 => ground_atom(),
        1 => select(&VARS[..]).prop_map(Atom::variable),
        1 => (select(&PRINCIPALS[..]), 1u32..4).prop_map(|(p, i)| Atom::parameter(p, i)),
    ]
}

fn message_from(leaf: impl Strategy<Value = Atom> + 'static) -> impl Strategy<Value = Message> {
    leaf.prop_map(Message::Atom).prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Message::concat),
            (inner, select(&KEYS[..])).prop_map(|(b, (k, mode))| Message::enc(b, Atom::constant(k), mode)),
        ]
    })
}

fn ground_message() -> impl Strategy<Value = Message> {
    message_from(ground_atom())
}

fn open_message() -> impl Strategy<Value = Message> {
    message_from(any_atom())
}

fn level() -> impl Strategy<Value = SecurityLevel> {
    prop_oneof![
        1 => Just(SecurityLevel::Bottom),
        4 => prop::collection::btree_set(select(&["A", "B", "C", "I"][..]), 0..4)
            .prop_map(|s| SecurityLevel::names(s.into_iter())),
    ]
}

/// Independent oracle: atoms of a message by direct traversal.
fn atoms_oracle(m: &Message, out: &mut BTreeSet<Atom>) {
    match m {
        Message::Empty => {}
        Message::Atom(a) => {
            out.insert(a.clone());
        }
        Message::Concat(v) => v.iter().for_each(|x| atoms_oracle(x, out)),
        Message::Enc { body, key, .. } => {
            out.insert(key.clone());
            atoms_oracle(body, out);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printing_then_parsing_round_trips(m in open_message()) {
        let back = parse_message(&m.to_string(), &symbols()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn concatenation_is_flat(a in open_message(), b in open_message(), c in open_message()) {
        let left = Message::concat([Message::concat([a.clone(), b.clone()]), c.clone()]);
        let right = Message::concat([a, Message::concat([b, c])]);
        prop_assert_eq!(left, right);
    }

    #[test]
    fn substitution_is_a_homomorphism(a in open_message(), b in open_message(), x in ground_message(), y in ground_message()) {
        let s = Substitution::from_pairs([(Atom::variable("X"), x), (Atom::variable("Y"), y)]);
        let whole = substitute(&Message::concat([a.clone(), b.clone()]), &s).unwrap();
        let parts = Message::concat([substitute(&a, &s).unwrap(), substitute(&b, &s).unwrap()]);
        prop_assert_eq!(whole, parts);
        let enc = substitute(&Message::enc(a.clone(), Atom::constant("kab"), KeyMode::Symmetric), &s).unwrap();
        prop_assert_eq!(enc, Message::enc(substitute(&a, &s).unwrap(), Atom::constant("kab"), KeyMode::Symmetric));
    }

    #[test]
    fn atoms_after_substitution(m in open_message(), x in ground_message()) {
        let xv = Atom::variable("X");
        let s = Substitution::from_pairs([(xv.clone(), x.clone())]);
        let got = substitute(&m, &s).unwrap().atoms();
        let mut want = BTreeSet::new();
        atoms_oracle(&m, &mut want);
        if want.remove(&xv) {
            atoms_oracle(&x, &mut want);
        }
        prop_assert_eq!(got, want);
    }

    #[test]
    fn lattice_laws(a in level(), b in level(), c in level()) {
        prop_assert!(a.geq(&a));
        if a.geq(&b) && b.geq(&a) {
            prop_assert_eq!(&a, &b);
        }
        if a.geq(&b) && b.geq(&c) {
            prop_assert!(a.geq(&c));
        }
        let m = a.meet(&b);
        prop_assert!(a.geq(&m) && b.geq(&m));
        if a.geq(&c) && b.geq(&c) {
            prop_assert!(m.geq(&c));
        }
        prop_assert!(a.geq(&SecurityLevel::Bottom));
        prop_assert!(SecurityLevel::top().geq(&a));
        prop_assert_eq!(a.meet(&SecurityLevel::top()), a.clone());
        prop_assert_eq!(a.meet(&SecurityLevel::Bottom), SecurityLevel::Bottom);
    }

    #[test]
    fn normalization_is_idempotent_and_confluent(m in ground_message()) {
        let c = ctx();
        let inner = normalize_with(&m, &c, Rewriting::LeftmostInnermost).unwrap();
        let outer = normalize_with(&m, &c, Rewriting::LeftmostOutermost).unwrap();
        prop_assert_eq!(&inner, &outer);
        prop_assert_eq!(normalize(&inner, &c).unwrap(), inner);
    }

    #[test]
    fn access_ignores_redexes(m in ground_message(), a in ground_atom()) {
        let c = ctx();
        let n = normalize(&m, &c).unwrap();
        prop_assert_eq!(access(&a, &m, &c).unwrap(), access(&a, &n, &c).unwrap());
    }

    #[test]
    fn clear_atoms_of_well_protected_messages_are_public(m in ground_message()) {
        let c = ctx();
        if check_well_protected(std::slice::from_ref(&m), &c).unwrap().is_well_protected() {
            for a in clear_atoms(&m, &c).unwrap() {
                prop_assert!(c.level_of(&a).is_bottom(), "{} in clear", a);
            }
        }
    }

    #[test]
    fn selection_stays_in_the_protected_body(m in ground_message(), a in ground_atom()) {
        let c = ctx();
        for inst in [SelectionInstance::Max, SelectionInstance::Ek, SelectionInstance::N] {
            let direct = wfsec::select(&inst, &a, &m, &c).unwrap();
            let n = normalize(&m, &c).unwrap();
            prop_assert_eq!(&direct, &wfsec::select(&inst, &a, &n, &c).unwrap());
            if let SelectionResult::Finite(s) = direct {
                prop_assert!(!s.contains(&a));
                let mut allowed = BTreeSet::new();
                atoms_oracle(&n, &mut allowed);
                for k in n.atoms().iter().filter(|k| c.is_key(k)) {
                    allowed.insert(c.inverse_key(k).unwrap());
                }
                prop_assert!(s.is_subset(&allowed));
            }
        }
    }

    #[test]
    fn derivation_laws(m in open_message()) {
        prop_assert_eq!(derive(&m, &BTreeSet::new()), m.clone());
        let x: BTreeSet<Atom> = [Atom::variable("X")].into();
        let once = derive(&m, &x);
        prop_assert_eq!(derive(&once, &x), once.clone());
        prop_assert!(!once.contains_atom(&Atom::variable("X")));
    }

    #[test]
    fn static_occurrences_ignore_variable_bindings(
        body in prop::collection::vec(open_message(), 1..3),
        x in ground_message(),
    ) {
        let c = ctx();
        let alpha = Atom::constant("Na");
        let mut parts = body;
        parts.push(Message::Atom(alpha.clone()));
        let source = Message::enc(Message::concat(parts), Atom::constant("kab"), KeyMode::Symmetric);
        prop_assume!(!x.contains_atom(&alpha));
        let bound = Substitution::from_pairs([(Atom::variable("X"), x)]);
        let fresh = Substitution::from_pairs([(Atom::variable("X"), Message::Atom(Atom::constant("d")))]);
        let inst = SelectionInstance::Max;
        let a = f_derivative(&inst, &alpha, &source, &bound, &c);
        let b = f_derivative(&inst, &alpha, &source, &fresh, &c);
        prop_assert_eq!(a.ok(), b.ok());
    }
}
