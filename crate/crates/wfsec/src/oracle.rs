//! Bounded Dolev-Yao deduction and randomized checks of the reliability
//! properties of interpretation functions.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::{SecurityLevel, VerificationContext};
use crate::error::Result;
use crate::rewrite::{check_well_protected, normalize};
use crate::selection::{interpret_set_with, SelectionInstance};
use crate::term::{Atom, Message};

/// Limits of the bounded closure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleConfig {
    /// Number of synthesis rounds (`concat`, `enc`).
    pub depth: usize,
    /// Largest synthesized term, in atom occurrences.
    pub max_atoms: usize,
    /// Largest closure; reaching it marks the closure as truncated.
    pub max_terms: usize,
    /// Only synthesize terms that carry an atom the intruder may not know.
    /// Other terms can never contradict the checked properties.
    pub secret_bearing_only: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            depth: 5,
            max_atoms: 24,
            max_terms: 2_000,
            secret_bearing_only: false,
        }
    }
}

/// A bounded intruder closure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Closure {
    pub terms: BTreeSet<Message>,
    /// True when the term cap stopped synthesis early.
    pub truncated: bool,
}

impl Closure {
    pub fn contains(&self, m: &Message) -> bool {
        self.terms.contains(m)
    }

    /// Atoms available in clear.
    pub fn atoms(&self) -> BTreeSet<Atom> {
        self.terms
            .iter()
            .filter_map(|m| match m {
                Message::Atom(a) => Some(a.clone()),
                _ => None,
            })
            .collect()
    }
}

/// Closure of `msgs` and the intruder's initial knowledge under `int`,
/// `deconcat`, `dec`, `concat` and `enc`, with `depth` synthesis rounds.
pub fn deduce_closure(msgs: &[Message], ctx: &VerificationContext, depth: usize) -> Result<Closure> {
    deduce_closure_with(
        msgs,
        ctx,
        &OracleConfig {
            depth,
            ..OracleConfig::default()
        },
    )
}

/// [`deduce_closure`] with explicit limits.
pub fn deduce_closure_with(msgs: &[Message], ctx: &VerificationContext, cfg: &OracleConfig) -> Result<Closure> {
    let mut terms: BTreeSet<Message> = ctx.intruder_knowledge().into_iter().map(Message::Atom).collect();
    for m in msgs {
        terms.insert(normalize(m, ctx)?);
    }
    let mut truncated = false;
    analyze_saturate(&mut terms, ctx)?;
    let keys: Vec<Atom> = ctx
        .key_names()
        .map(|k| Atom::constant(k.clone()))
        .collect();
    for _ in 0..cfg.depth {
        let snapshot: Vec<Message> = terms.iter().cloned().collect();
        let known_keys: Vec<&Atom> = keys
            .iter()
            .filter(|k| terms.contains(&Message::Atom((*k).clone())))
            .collect();
        let relevant = |m: &Message| !cfg.secret_bearing_only || m.payload_atoms().iter().any(|a| !ctx.intruder_allowed(a));
        let mut fresh = Vec::new();
        'synth: for a in &snapshot {
            for k in &known_keys {
                let e = normalize(&Message::enc(a.clone(), (*k).clone(), key_mode(ctx, k)), ctx)?;
                if e.size() <= cfg.max_atoms && relevant(&e) && !terms.contains(&e) {
                    fresh.push(e);
                }
            }
            for b in &snapshot {
                let c = Message::concat([a.clone(), b.clone()]);
                if c.size() <= cfg.max_atoms && relevant(&c) && !terms.contains(&c) {
                    fresh.push(c);
                }
                if terms.len() + fresh.len() >= cfg.max_terms {
                    truncated = true;
                    break 'synth;
                }
            }
        }
        if fresh.is_empty() {
            break;
        }
        terms.extend(fresh);
        analyze_saturate(&mut terms, ctx)?;
        if truncated {
            break;
        }
    }
    Ok(Closure { terms, truncated })
}

fn key_mode(ctx: &VerificationContext, k: &Atom) -> crate::term::KeyMode {
    ctx.key_info(&k.name).map(|i| i.mode).unwrap_or(crate::term::KeyMode::Symmetric)
}

/// Applies `deconcat` and `dec` until nothing new appears.
fn analyze_saturate(terms: &mut BTreeSet<Message>, ctx: &VerificationContext) -> Result<()> {
    let mut work: Vec<Message> = terms.iter().cloned().collect();
    while let Some(m) = work.pop() {
        let mut out = Vec::new();
        match &m {
            Message::Concat(v) => out.extend(v.iter().cloned()),
            Message::Enc { body, key, .. }
                if ctx.is_key(key) && terms.contains(&Message::Atom(ctx.inverse_key(key)?)) =>
            {
                out.push(normalize(body, ctx)?);
            }
            _ => {}
        }
        if let Message::Atom(k) = &m {
            if ctx.is_key(k) {
                let inv = ctx.inverse_key(k)?;
                let openable: Vec<Message> = terms
                    .iter()
                    .filter(|t| matches!(t, Message::Enc { key, .. } if key == &inv))
                    .cloned()
                    .collect();
                for t in openable {
                    if let Message::Enc { body, .. } = t {
                        out.push(normalize(&body, ctx)?);
                    }
                }
            }
        }
        for n in out {
            if !n.is_empty() && terms.insert(n.clone()) {
                work.push(n);
            }
        }
    }
    Ok(())
}

/// A failure of full invariance: an intruder-derivable message on which
/// `F` is lower than on the set it was derived from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub set: Vec<Message>,
    pub derived: Message,
    pub atom: Atom,
    pub on_derived: SecurityLevel,
    pub on_set: SecurityLevel,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let set: Vec<String> = self.set.iter().map(|m| m.to_string()).collect();
        write!(
            f,
            "M = {{{}}} derives {} with F({a}, m) = {} not above F({a}, M) = {}",
            set.join(", "),
            self.derived,
            self.on_derived,
            self.on_set,
            a = self.atom
        )
    }
}

/// Outcome of a randomized property run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub trials: usize,
    /// Number of (message, atom) or atom checks performed.
    pub checks: usize,
    /// Closures cut short by the term cap.
    pub truncated: usize,
    /// Sets skipped because they are not well-protected.
    pub rejected: usize,
    pub counterexamples: Vec<Counterexample>,
    /// Secret atoms found in a closure.
    pub disclosed: Vec<(Vec<Message>, Atom)>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty() && self.disclosed.is_empty()
    }

    fn merge(&mut self, other: PropertyReport) {
        self.trials += other.trials;
        self.checks += other.checks;
        self.truncated += other.truncated;
        self.rejected += other.rejected;
        self.counterexamples.extend(other.counterexamples);
        self.disclosed.extend(other.disclosed);
    }
}

/// An interpretation function over sets of messages.
pub type Interpretation<'f> = dyn Fn(&Atom, &[Message], &VerificationContext) -> Result<SecurityLevel> + 'f;

/// `F(α, M)` for a selection instance, as an [`Interpretation`].
pub fn interpretation(inst: SelectionInstance) -> impl Fn(&Atom, &[Message], &VerificationContext) -> Result<SecurityLevel> {
    move |a, msgs, ctx| interpret_set_with(&inst, a, msgs, ctx)
}

/// Checks full invariance of `f` on one set: for every derivable `m` and
/// every atom `α` of `m` the intruder may not know, `F(α, m) ⊒ F(α, M)`.
pub fn check_full_invariance_on(
    f: &Interpretation<'_>,
    msgs: &[Message],
    ctx: &VerificationContext,
    cfg: &OracleConfig,
) -> Result<PropertyReport> {
    let mut report = PropertyReport {
        trials: 1,
        ..PropertyReport::default()
    };
    if !check_well_protected(msgs, ctx)?.is_well_protected() {
        report.rejected = 1;
        return Ok(report);
    }
    let cfg = OracleConfig {
        secret_bearing_only: true,
        ..*cfg
    };
    let closure = deduce_closure_with(msgs, ctx, &cfg)?;
    report.truncated = usize::from(closure.truncated);
    let mut on_set = std::collections::BTreeMap::new();
    for m in &closure.terms {
        for a in m.payload_atoms() {
            if ctx.intruder_allowed(&a) {
                continue;
            }
            report.checks += 1;
            let fm = f(&a, std::slice::from_ref(m), ctx)?;
            let fs = match on_set.get(&a) {
                Some(l) => Clone::clone(l),
                None => {
                    let l = f(&a, msgs, ctx)?;
                    on_set.insert(a.clone(), l.clone());
                    l
                }
            };
            if !fm.geq(&fs) {
                report.counterexamples.push(Counterexample {
                    set: msgs.to_vec(),
                    derived: m.clone(),
                    atom: a,
                    on_derived: fm,
                    on_set: fs,
                });
            }
        }
    }
    Ok(report)
}

/// Full-invariance run over `trials` random well-protected sets of at
/// most `max_set` messages in random contexts.
pub fn check_full_invariance(
    f: &Interpretation<'_>,
    trials: usize,
    max_set: usize,
    seed: u64,
    cfg: &OracleConfig,
) -> Result<PropertyReport> {
    check_full_invariance_in(f, trials, max_set, seed, cfg, KeyShape::Mixed)
}

/// [`check_full_invariance`] over contexts of the given key shape.
pub fn check_full_invariance_in(
    f: &Interpretation<'_>,
    trials: usize,
    max_set: usize,
    seed: u64,
    cfg: &OracleConfig,
    shape: KeyShape,
) -> Result<PropertyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::default();
    for _ in 0..trials {
        let ctx = random_context_with(&mut rng, shape);
        let msgs = random_well_protected_set(&mut rng, &ctx, max_set);
        report.merge(check_full_invariance_on(f, &msgs, &ctx, cfg)?);
    }
    Ok(report)
}

/// Checks that no atom outside the intruder's allowance appears in the
/// bounded closure of a well-protected set.
pub fn check_non_disclosure(msgs: &[Message], ctx: &VerificationContext, depth: usize) -> Result<PropertyReport> {
    let mut report = PropertyReport {
        trials: 1,
        ..PropertyReport::default()
    };
    if !check_well_protected(msgs, ctx)?.is_well_protected() {
        report.rejected = 1;
        return Ok(report);
    }
    let closure = deduce_closure_with(
        msgs,
        ctx,
        &OracleConfig {
            depth,
            secret_bearing_only: true,
            ..OracleConfig::default()
        },
    )?;
    report.truncated = usize::from(closure.truncated);
    for a in closure.atoms() {
        report.checks += 1;
        if !ctx.intruder_allowed(&a) {
            report.disclosed.push((msgs.to_vec(), a));
        }
    }
    Ok(report)
}

/// Non-disclosure over `trials` random well-protected sets.
pub fn check_non_disclosure_random(
    trials: usize,
    max_set: usize,
    depth: usize,
    seed: u64,
    shape: KeyShape,
) -> Result<PropertyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::default();
    for _ in 0..trials {
        let ctx = random_context_with(&mut rng, shape);
        let msgs = random_well_protected_set(&mut rng, &ctx, max_set);
        report.merge(check_non_disclosure(&msgs, &ctx, depth)?);
    }
    Ok(report)
}

const SECRETS: [&str; 3] = ["s1", "s2", "s3"];
const HONEST: [&str; 3] = ["A", "B", "C"];

/// Keys available in generated contexts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeyShape {
    /// One key pair per principal and a shared key.
    #[default]
    Mixed,
    /// Shared keys only: `kab`, `kac`, `kbc` and `kbi` shared with the
    /// intruder.
    SymmetricOnly,
}

/// A small random context: principals `A`, `B`, `C` and intruder `I`, one
/// key pair per principal, a shared key, a public constant and three
/// secrets with random levels.
pub fn random_context(rng: &mut impl Rng) -> VerificationContext {
    random_context_with(rng, KeyShape::Mixed)
}

/// [`random_context`] with the given key shape.
pub fn random_context_with(rng: &mut impl Rng, shape: KeyShape) -> VerificationContext {
    let mut ctx = VerificationContext::new("I");
    for p in HONEST {
        ctx.add_principal(p);
    }
    match shape {
        KeyShape::Mixed => {
            for p in HONEST.iter().chain(["I"].iter()) {
                let public = format!("k{}", p.to_lowercase());
                let private = format!("{public}-1");
                ctx.add_key_pair(&public, &private);
                ctx.set_level(&private, SecurityLevel::names([*p]));
            }
            ctx.add_symmetric_key("kab");
            ctx.set_level("kab", SecurityLevel::names(["A", "B"]));
        }
        KeyShape::SymmetricOnly => {
            for (k, a, b) in [("kab", "A", "B"), ("kac", "A", "C"), ("kbc", "B", "C"), ("kbi", "B", "I")] {
                ctx.add_symmetric_key(k);
                ctx.set_level(k, SecurityLevel::names([a, b]));
            }
        }
    }
    ctx.add_constant("d");
    for s in SECRETS {
        ctx.add_constant(s);
        let mut members: Vec<&str> = HONEST.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        if members.is_empty() {
            members.push(HONEST[rng.gen_range(0..HONEST.len())]);
        }
        ctx.set_level(s, SecurityLevel::names(members));
    }
    ctx
}

/// A random message over the constants and keys of `ctx` with at most
/// `max_atoms` atom occurrences in its payload.
pub fn random_message(rng: &mut impl Rng, ctx: &VerificationContext, depth: usize, max_atoms: usize) -> Message {
    let leaves: Vec<Atom> = ctx
        .constant_names()
        .filter(|n| ctx.key_info(n).is_none())
        .map(|n| Atom::constant(n.clone()))
        .collect();
    let keys: Vec<Atom> = ctx.key_names().map(|n| Atom::constant(n.clone())).collect();
    let mut budget = max_atoms.max(1);
    random_tree(rng, &leaves, &keys, ctx, depth, &mut budget)
}

fn random_tree(
    rng: &mut impl Rng,
    leaves: &[Atom],
    keys: &[Atom],
    ctx: &VerificationContext,
    depth: usize,
    budget: &mut usize,
) -> Message {
    if depth == 0 || *budget <= 1 || rng.gen_bool(0.3) {
        *budget = budget.saturating_sub(1);
        return Message::Atom(leaves.choose(rng).expect("leaves").clone());
    }
    if rng.gen_bool(0.5) {
        let k = keys.choose(rng).expect("keys").clone();
        let body = random_tree(rng, leaves, keys, ctx, depth - 1, budget);
        let mode = key_mode(ctx, &k);
        Message::enc(body, k, mode)
    } else {
        let n = rng.gen_range(2..=3);
        let mut parts = Vec::new();
        for _ in 0..n {
            if *budget == 0 {
                break;
            }
            parts.push(random_tree(rng, leaves, keys, ctx, depth - 1, budget));
        }
        Message::concat(parts)
    }
}

/// A random well-protected set of one to `max_set` messages.
pub fn random_well_protected_set(rng: &mut impl Rng, ctx: &VerificationContext, max_set: usize) -> Vec<Message> {
    let n = rng.gen_range(1..=max_set.max(1));
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < n && attempts < 200 {
        attempts += 1;
        let m = random_message(rng, ctx, 3, 8);
        if check_well_protected(std::slice::from_ref(&m), ctx)
            .map(|r| r.is_well_protected())
            .unwrap_or(false)
        {
            out.push(m);
        }
    }
    out
}
