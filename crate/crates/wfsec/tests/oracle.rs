//! Properties of the bounded intruder closure and of witness bounds under
//! several substitutions.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wfsec::oracle::{deduce_closure_with, random_context, random_well_protected_set, OracleConfig};
use wfsec::{normalize, substitute, upper_bound, witness_value, Atom, Message, SelectionInstance};

use common::{bounds_case, bounds_levels, geq_modulo_params, random_ground_substitution};

fn config(depth: usize) -> OracleConfig {
    OracleConfig {
        depth,
        max_atoms: 10,
        max_terms: 600,
        secret_bearing_only: false,
    }
}

fn atoms_of(ms: impl IntoIterator<Item = Message>) -> BTreeSet<Atom> {
    ms.into_iter().flat_map(|m| m.atoms()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closure_grows_with_depth(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ctx = random_context(&mut rng);
        let msgs = random_well_protected_set(&mut rng, &ctx, 2);
        let mut previous: Option<BTreeSet<Message>> = None;
        for depth in 0..3 {
            let c = deduce_closure_with(&msgs, &ctx, &config(depth)).unwrap();
            if c.truncated {
                break;
            }
            if let Some(p) = &previous {
                prop_assert!(p.is_subset(&c.terms));
            }
            previous = Some(c.terms);
        }
    }

    #[test]
    fn closure_grows_with_the_message_set(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ctx = random_context(&mut rng);
        let small = random_well_protected_set(&mut rng, &ctx, 2);
        let mut large = small.clone();
        large.extend(random_well_protected_set(&mut rng, &ctx, 2));
        let a = deduce_closure_with(&small, &ctx, &config(1)).unwrap();
        let b = deduce_closure_with(&large, &ctx, &config(1)).unwrap();
        prop_assume!(!a.truncated && !b.truncated);
        prop_assert!(a.terms.is_subset(&b.terms));
    }

    #[test]
    fn closure_holds_its_inputs_and_invents_no_atoms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ctx = random_context(&mut rng);
        let msgs = random_well_protected_set(&mut rng, &ctx, 3);
        let c = deduce_closure_with(&msgs, &ctx, &config(1)).unwrap();
        for m in &msgs {
            prop_assert!(c.contains(&normalize(m, &ctx).unwrap()));
        }
        let mut known = atoms_of(msgs.iter().cloned());
        known.extend(ctx.intruder_knowledge());
        for k in known.clone() {
            if let Ok(inv) = ctx.inverse_key(&k) {
                known.insert(inv);
            }
        }
        prop_assert!(atoms_of(c.terms.iter().cloned()).is_subset(&known));
    }

    #[test]
    fn bounds_hold_for_every_substitution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Some(mut case) = bounds_case(&mut rng) else { return Ok(()) };
        for inst in [SelectionInstance::Max, SelectionInstance::Ek, SelectionInstance::N] {
            let (upper, _, lower) = bounds_levels(&inst, &case).unwrap();
            prop_assert_eq!(
                &upper,
                &upper_bound(&inst, &case.alpha, std::slice::from_ref(&case.pattern), &case.ctx).unwrap()
            );
            for _ in 0..4 {
                case.sigma = random_ground_substitution(&mut rng, &case.ctx, &case.pattern, Some(&case.alpha));
                let closed = substitute(&case.pattern, &case.sigma).unwrap();
                let w = witness_value(&inst, &case.alpha, &closed, &case.pool, &case.ctx).unwrap();
                prop_assert!(geq_modulo_params(&case.ctx, &upper, &w), "{} above {}", w, upper);
                prop_assert!(geq_modulo_params(&case.ctx, &w, &lower), "{} below {}", w, lower);
            }
        }
    }
}
