//! Generators and independent checks shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use wfsec::oracle::{random_context, random_message};
use wfsec::{
    check_well_protected, lower_bound, substitute, upper_bound, witness_value, Atom, KeyMode, Message,
    SecurityLevel, SelectionInstance, Substitution, VerificationContext,
};

pub const PRINCIPALS: [&str; 3] = ["A", "B", "C"];
pub const SECRETS: [&str; 3] = ["s1", "s2", "s3"];
pub const VARIABLES: [&str; 3] = ["X", "Y", "Z"];

pub fn key_names(ctx: &VerificationContext) -> Vec<String> {
    ctx.key_names().cloned().collect()
}

fn key_mode(ctx: &VerificationContext, k: &str) -> KeyMode {
    ctx.key_info(k).map(|i| i.mode).unwrap_or(KeyMode::Symmetric)
}

fn pattern_leaf(rng: &mut impl Rng) -> Message {
    let index = rng.gen_range(1..=4);
    let a = match rng.gen_range(0..10) {
        0..=2 => Atom::parameter(*PRINCIPALS.choose(rng).unwrap(), index),
        3..=5 => Atom::parameter(*SECRETS.choose(rng).unwrap(), index),
        6 => Atom::constant("d"),
        _ => Atom::variable(*VARIABLES.choose(rng).unwrap()).with_index(index),
    };
    Message::Atom(a)
}

fn pattern_enc(rng: &mut impl Rng, ctx: &VerificationContext, depth: usize, budget: &mut usize) -> Message {
    let keys = key_names(ctx);
    let k = keys.choose(rng).unwrap().clone();
    let n = rng.gen_range(1..=3);
    let mut parts = Vec::new();
    for _ in 0..n {
        if *budget == 0 {
            break;
        }
        if depth > 0 && *budget > 2 && rng.gen_bool(0.25) {
            parts.push(pattern_enc(rng, ctx, depth - 1, budget));
        } else {
            *budget -= 1;
            parts.push(pattern_leaf(rng));
        }
    }
    if parts.is_empty() {
        parts.push(pattern_leaf(rng));
    }
    let mode = key_mode(ctx, &k);
    Message::enc(Message::concat(parts), Atom::parameter(k, rng.gen_range(1..=4)), mode)
}

/// A random encryption pattern with parameters and variables and at most
/// eight payload atoms.
pub fn random_pattern(rng: &mut impl Rng, ctx: &VerificationContext) -> Message {
    let mut budget = 8;
    pattern_enc(rng, ctx, 2, &mut budget)
}

/// A well-protected pool of one to six random patterns.
pub fn random_pool(rng: &mut impl Rng, ctx: &VerificationContext) -> Vec<Message> {
    let n = rng.gen_range(1..=6);
    let mut pool: Vec<Message> = Vec::new();
    let mut attempts = 0;
    while pool.len() < n && attempts < 500 {
        attempts += 1;
        let p = random_pattern(rng, ctx);
        if p.payload_atoms().is_empty() || pool.contains(&p) {
            continue;
        }
        if check_well_protected(std::slice::from_ref(&p), ctx)
            .map(|r| r.is_well_protected())
            .unwrap_or(false)
        {
            pool.push(p);
        }
    }
    pool
}

/// Replaces every parameter by its base constant and drops variable
/// indices, so the result shares no variable with the pool.
pub fn role_form(m: &Message) -> Message {
    m.map_atoms(&mut |a| {
        if a.is_parameter() {
            a.base()
        } else if a.is_variable() {
            Atom::variable(a.name.clone())
        } else {
            a.clone()
        }
    })
}

/// A random ground, well-protected message without `avoid`.
pub fn random_ground(rng: &mut impl Rng, ctx: &VerificationContext, avoid: Option<&Atom>) -> Message {
    for _ in 0..100 {
        let m = random_message(rng, ctx, 2, 4);
        if avoid.is_some_and(|a| m.contains_atom(a)) {
            continue;
        }
        if check_well_protected(std::slice::from_ref(&m), ctx)
            .map(|r| r.is_well_protected())
            .unwrap_or(false)
        {
            return m;
        }
    }
    Message::Atom(Atom::constant("d"))
}

/// A random ground substitution for every variable of `m` whose values
/// do not mention `avoid`.
pub fn random_ground_substitution(
    rng: &mut impl Rng,
    ctx: &VerificationContext,
    m: &Message,
    avoid: Option<&Atom>,
) -> Substitution {
    Substitution::from_pairs(
        m.variables()
            .into_iter()
            .map(|v| (v, random_ground(rng, ctx, avoid))),
    )
}

/// `high ⊒ low` where a parameter of `low` may stand for any atom of the
/// same kind in `high`.
pub fn geq_modulo_params(ctx: &VerificationContext, high: &SecurityLevel, low: &SecurityLevel) -> bool {
    match (high, low) {
        (_, SecurityLevel::Bottom) => true,
        (SecurityLevel::Bottom, _) => false,
        (SecurityLevel::Finite(h), SecurityLevel::Finite(l)) => h.iter().all(|x| {
            l.contains(x) || l.iter().any(|p| p.is_parameter() && ctx.kind_of(p) == ctx.kind_of(x))
        }),
    }
}

/// One draw for the bounds lemma.
pub struct BoundsCase {
    pub ctx: VerificationContext,
    pub pool: Vec<Message>,
    pub pattern: Message,
    pub sigma: Substitution,
    pub alpha: Atom,
}

/// Draws a pool, a role-form instance of one of its patterns, a ground
/// substitution and a leveled static atom of the pattern. The values of
/// the substitution never mention that atom, so every occurrence in the
/// closed message comes from the pattern.
pub fn bounds_case(rng: &mut impl Rng) -> Option<BoundsCase> {
    let ctx = random_context(rng);
    let pool = random_pool(rng, &ctx);
    let source = pool.choose(rng)?;
    let pattern = role_form(source);
    let leveled: Vec<Atom> = pattern
        .payload_atoms()
        .into_iter()
        .filter(|a| !a.is_variable() && !ctx.level_of(a).is_bottom())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let alpha = leveled.choose(rng)?.clone();
    let sigma = random_ground_substitution(rng, &ctx, &pattern, Some(&alpha));
    Some(BoundsCase {
        ctx,
        pool,
        pattern,
        sigma,
        alpha,
    })
}

/// The three levels of a bounds case: upper, witness, lower.
pub fn bounds_levels(
    inst: &SelectionInstance,
    case: &BoundsCase,
) -> wfsec::Result<(SecurityLevel, SecurityLevel, SecurityLevel)> {
    let closed = substitute(&case.pattern, &case.sigma)?;
    let upper = upper_bound(inst, &case.alpha, std::slice::from_ref(&case.pattern), &case.ctx)?;
    let witness = witness_value(inst, &case.alpha, &closed, &case.pool, &case.ctx)?;
    let lower = lower_bound(inst, &case.alpha, &case.pattern, &case.pool, &case.ctx)?;
    Ok((upper, witness, lower))
}

/// Holds when `upper ⊒ witness ⊒ lower`, parameters of the right side
/// standing for any atom of their kind.
pub fn bounds_hold(case: &BoundsCase, levels: &(SecurityLevel, SecurityLevel, SecurityLevel)) -> bool {
    let (u, w, l) = levels;
    geq_modulo_params(&case.ctx, u, w) && geq_modulo_params(&case.ctx, w, l)
}

/// Protocol script text for a bundled protocol.
pub fn protocol_text(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../protocols")
        .join(format!("{name}.proto"));
    std::fs::read_to_string(path).expect("bundled protocol")
}

/// Independent oracle for the set of principal names in a level.
pub fn names(level: &SecurityLevel) -> Option<BTreeSet<String>> {
    level.members().map(|s| s.iter().map(|a| a.to_string()).collect())
}

pub fn name_set(names: &[&str]) -> Option<BTreeSet<String>> {
    Some(names.iter().map(|s| s.to_string()).collect())
}
