//! Normal forms under the encryption/decryption cancellation theory, the
//! `Keys`, `Access` and `Clear` applications and the well-protection check.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::context::VerificationContext;
use crate::error::{Error, Result};
use crate::selection::{select_raw, SelectionInstance, SelectionResult};
use crate::term::{substitute, Atom, KeyMode, Message, Substitution};
use crate::unify::{unify_all, UnifyOptions};

/// Maximum number of rule applications performed by [`normalize`].
pub const STEP_BUDGET: usize = 10_000;

/// Maximum nesting of pending normalizations; deeper chains only arise
/// from rules that keep recreating the redex they rewrote.
const MAX_DEPTH: usize = 256;

/// A family of key sets: one inner set per occurrence of an atom.
pub type KeySetFamily = BTreeSet<BTreeSet<Atom>>;

/// A rewrite rule of the equational theory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RewriteRule {
    /// `{{M}_k}_{k⁻¹} → M` for every registered key `k`.
    Cancellation,
    /// A user rule. Variables of `lhs` match any message, parameters of
    /// `lhs` match atoms.
    Pattern { lhs: Message, rhs: Message },
}

impl RewriteRule {
    /// Symbolic left- and right-hand sides. The cancellation rule is shown
    /// with metavariables `M`, `K` and `K-1`.
    pub fn sides(&self) -> (Message, Message) {
        match self {
            RewriteRule::Cancellation => {
                let m = Message::Atom(Atom::variable("M"));
                let inner = Message::enc(m.clone(), Atom::parameter("K", 0), KeyMode::Asymmetric);
                let lhs = Message::enc(inner, Atom::parameter("K-1", 0), KeyMode::Asymmetric);
                (lhs, m)
            }
            RewriteRule::Pattern { lhs, rhs } => (lhs.clone(), rhs.clone()),
        }
    }

    /// Rewrites `m` at its root if the rule applies.
    pub fn apply_root(&self, m: &Message, ctx: &VerificationContext) -> Result<Option<Message>> {
        match self {
            RewriteRule::Cancellation => {
                if let Message::Enc { body, key: outer, .. } = m {
                    if let Message::Enc { body: inner, key, .. } = body.as_ref() {
                        if ctx.is_key(key) && &ctx.inverse_key(key)? == outer {
                            return Ok(Some(inner.as_ref().clone()));
                        }
                    }
                }
                Ok(None)
            }
            RewriteRule::Pattern { lhs, rhs } => {
                let opts = UnifyOptions {
                    rigid: m.atoms(),
                    ctx: None,
                    limit: 1,
                };
                match unify_all(lhs, m, &opts).into_iter().next() {
                    Some(s) => Ok(Some(fix_modes(&substitute(rhs, &s)?, ctx))),
                    None => Ok(None),
                }
            }
        }
    }
}

impl fmt::Display for RewriteRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (l, r) = self.sides();
        write!(f, "{l} -> {r}")
    }
}

/// Resets encryption modes from the key registrations of `ctx`, so that
/// a metavariable key instantiated with a registered key gets its mode.
pub(crate) fn fix_modes(m: &Message, ctx: &VerificationContext) -> Message {
    match m {
        Message::Concat(v) => Message::concat(v.iter().map(|x| fix_modes(x, ctx))),
        Message::Enc { body, key, mode } => {
            let mode = ctx.key_info(&key.name).map_or(*mode, |i| i.mode);
            Message::enc(fix_modes(body, ctx), key.clone(), mode)
        }
        other => other.clone(),
    }
}

/// Rewriting order used by [`normalize_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    LeftmostInnermost,
    LeftmostOutermost,
}

/// Normal form under the context's rules, leftmost-innermost.
pub fn normalize(m: &Message, ctx: &VerificationContext) -> Result<Message> {
    normalize_with(m, ctx, Strategy::LeftmostInnermost)
}

/// Normal form under an explicit strategy.
pub fn normalize_with(m: &Message, ctx: &VerificationContext, strategy: Strategy) -> Result<Message> {
    let mut budget = STEP_BUDGET;
    match strategy {
        Strategy::LeftmostInnermost => innermost(m, ctx, &mut budget, 0),
        Strategy::LeftmostOutermost => {
            let mut cur = m.clone();
            while let Some(next) = outermost_step(&cur, ctx)? {
                if budget == 0 {
                    return Err(Error::NonTermination { steps: STEP_BUDGET });
                }
                budget -= 1;
                cur = next;
            }
            Ok(cur)
        }
    }
}

fn innermost(m: &Message, ctx: &VerificationContext, budget: &mut usize, depth: usize) -> Result<Message> {
    if depth > MAX_DEPTH {
        return Err(Error::NonTermination {
            steps: STEP_BUDGET - *budget,
        });
    }
    let mut cur = m.clone();
    'outer: loop {
        cur = match &cur {
            Message::Concat(v) => {
                let mut parts = Vec::with_capacity(v.len());
                for x in v {
                    parts.push(innermost(x, ctx, budget, depth + 1)?);
                }
                Message::concat(parts)
            }
            Message::Enc { body, key, mode } => Message::enc(innermost(body, ctx, budget, depth + 1)?, key.clone(), *mode),
            other => other.clone(),
        };
        for rule in ctx.rules() {
            if let Some(r) = rule.apply_root(&cur, ctx)? {
                if *budget == 0 {
                    return Err(Error::NonTermination { steps: STEP_BUDGET });
                }
                *budget -= 1;
                cur = r;
                continue 'outer;
            }
        }
        return Ok(cur);
    }
}

fn outermost_step(m: &Message, ctx: &VerificationContext) -> Result<Option<Message>> {
    for rule in ctx.rules() {
        if let Some(r) = rule.apply_root(m, ctx)? {
            return Ok(Some(r));
        }
    }
    match m {
        Message::Concat(v) => {
            for (i, x) in v.iter().enumerate() {
                if let Some(r) = outermost_step(x, ctx)? {
                    let mut parts = v.clone();
                    parts[i] = r;
                    return Ok(Some(Message::concat(parts)));
                }
            }
            Ok(None)
        }
        Message::Enc { body, key, mode } => Ok(outermost_step(body, ctx)?
            .map(|b| Message::enc(b, key.clone(), *mode))),
        _ => Ok(None),
    }
}

fn prepend(k: &Atom, family: KeySetFamily) -> KeySetFamily {
    family
        .into_iter()
        .map(|mut s| {
            s.insert(k.clone());
            s
        })
        .collect()
}

/// The keys guarding each occurrence of `alpha` in `m` (no normalization).
pub fn keys_of(alpha: &Atom, m: &Message) -> KeySetFamily {
    match m {
        Message::Empty => KeySetFamily::new(),
        Message::Atom(b) if b == alpha => KeySetFamily::from([BTreeSet::new()]),
        Message::Atom(_) => KeySetFamily::new(),
        Message::Concat(v) => v.iter().flat_map(|x| keys_of(alpha, x)).collect(),
        Message::Enc { body, key, .. } => prepend(key, keys_of(alpha, body)),
    }
}

fn access_normal(alpha: &Atom, m: &Message, ctx: &VerificationContext) -> Result<KeySetFamily> {
    Ok(match m {
        Message::Empty => KeySetFamily::new(),
        Message::Atom(b) if b == alpha => KeySetFamily::from([BTreeSet::new()]),
        Message::Atom(_) => KeySetFamily::new(),
        Message::Concat(v) => {
            let mut out = KeySetFamily::new();
            for x in v {
                out.extend(access_normal(alpha, x, ctx)?);
            }
            out
        }
        Message::Enc { body, key, .. } => prepend(&ctx.inverse_key(key)?, access_normal(alpha, body, ctx)?),
    })
}

/// The inverse keys needed to reach each occurrence of `alpha` in the
/// normal form of `m`.
pub fn access(alpha: &Atom, m: &Message, ctx: &VerificationContext) -> Result<KeySetFamily> {
    access_normal(alpha, &normalize(m, ctx)?, ctx)
}

/// [`access`] extended to sets by union.
pub fn access_set(alpha: &Atom, msgs: &[Message], ctx: &VerificationContext) -> Result<KeySetFamily> {
    let mut out = KeySetFamily::new();
    for m in msgs {
        out.extend(access(alpha, m, ctx)?);
    }
    Ok(out)
}

/// Atoms with at least one unencrypted occurrence.
pub fn clear_atoms(m: &Message, ctx: &VerificationContext) -> Result<BTreeSet<Atom>> {
    let n = normalize(m, ctx)?;
    let mut out = BTreeSet::new();
    for a in n.payload_atoms() {
        if access_normal(&a, &n, ctx)?.contains(&BTreeSet::new()) {
            out.insert(a);
        }
    }
    Ok(out)
}

/// One insufficiently protected occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectionViolation {
    pub atom: Atom,
    pub message_index: usize,
    /// Child indices from the root of the normal form to the occurrence.
    pub path: Vec<usize>,
    /// Inverse keys guarding the occurrence.
    pub guards: BTreeSet<Atom>,
}

impl fmt::Display for ProtectionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let guards: Vec<String> = self.guards.iter().map(|a| a.to_string()).collect();
        write!(
            f,
            "`{}` in message #{} at path {:?} guarded only by {{{}}}",
            self.atom,
            self.message_index,
            self.path,
            guards.join(", ")
        )
    }
}

/// Result of [`check_well_protected`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WellProtectedReport {
    pub violations: Vec<ProtectionViolation>,
}

impl WellProtectedReport {
    pub fn is_well_protected(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every occurrence of every non-public atom is guarded by a
/// key whose level dominates the atom's level. Variables are skipped.
pub fn check_well_protected(msgs: &[Message], ctx: &VerificationContext) -> Result<WellProtectedReport> {
    let mut report = WellProtectedReport::default();
    for (i, m) in msgs.iter().enumerate() {
        let n = normalize(m, ctx)?;
        let mut path = Vec::new();
        let mut guards = Vec::new();
        walk_protection(&n, i, ctx, &mut path, &mut guards, &mut report)?;
    }
    Ok(report)
}

fn walk_protection(
    m: &Message,
    index: usize,
    ctx: &VerificationContext,
    path: &mut Vec<usize>,
    guards: &mut Vec<Atom>,
    report: &mut WellProtectedReport,
) -> Result<()> {
    match m {
        Message::Empty => {}
        Message::Atom(a) => {
            if !a.is_variable() {
                let level = ctx.level_of(a);
                if !level.is_bottom() && !guards.iter().any(|k| ctx.level_of(k).geq(&level)) {
                    report.violations.push(ProtectionViolation {
                        atom: a.clone(),
                        message_index: index,
                        path: path.clone(),
                        guards: guards.iter().cloned().collect(),
                    });
                }
            }
        }
        Message::Concat(v) => {
            for (i, x) in v.iter().enumerate() {
                path.push(i);
                walk_protection(x, index, ctx, path, guards, report)?;
                path.pop();
            }
        }
        Message::Enc { body, key, .. } => {
            guards.push(ctx.inverse_key(key)?);
            path.push(0);
            walk_protection(body, index, ctx, path, guards, report)?;
            path.pop();
            guards.pop();
        }
    }
    Ok(())
}

/// Per-rule findings of [`validate_rewrite_system`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleReport {
    pub rule: String,
    /// Atoms or metavariables whose key families grow.
    pub keys_violations: Vec<Atom>,
    /// Metavariables of the right side absent from the left side.
    pub unbound_variables: Vec<Atom>,
    /// True when the rule builds ciphertexts absent from its left side,
    /// which can move neighbors across protective keys.
    pub needs_selection_review: bool,
    /// Atoms whose selection grows on the sample instantiation.
    pub selection_violations: Vec<Atom>,
}

impl RuleReport {
    pub fn is_valid(&self) -> bool {
        self.keys_violations.is_empty() && self.unbound_variables.is_empty() && self.selection_violations.is_empty()
    }
}

/// Result of [`validate_rewrite_system`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub rules: Vec<RuleReport>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.rules.iter().all(RuleReport::is_valid)
    }
}

/// True when every key set of `smaller` is contained in some key set of
/// `larger`: the rewrite removes keys and never adds them.
pub fn family_subsumed(smaller: &KeySetFamily, larger: &KeySetFamily) -> bool {
    smaller.iter().all(|r| larger.iter().any(|l| r.is_subset(l)))
}

/// Checks each rule for keys-monotonicity and variable safety. When
/// `selection` is given, the rule is also instantiated with `samples` and
/// selections on both sides are compared.
pub fn validate_rewrite_system(
    rules: &[RewriteRule],
    ctx: &VerificationContext,
    selection: Option<&SelectionInstance>,
    samples: &[Atom],
) -> Result<ValidationReport> {
    let mut out = Vec::new();
    for rule in rules {
        let (lhs, rhs) = rule.sides();
        let lhs_meta: BTreeSet<Atom> = lhs.atoms().into_iter().filter(|a| !a.is_constant()).collect();
        let unbound_variables: Vec<Atom> = rhs
            .atoms()
            .into_iter()
            .filter(|a| !a.is_constant() && !lhs_meta.contains(a))
            .collect();
        let keys_violations: Vec<Atom> = rhs
            .payload_atoms()
            .into_iter()
            .filter(|a| !family_subsumed(&keys_of(a, &rhs), &keys_of(a, &lhs)))
            .collect();
        let lhs_encs: BTreeSet<Message> = lhs.encryptions().into_iter().collect();
        let needs_selection_review = rhs.encryptions().iter().any(|e| !lhs_encs.contains(e));
        let mut selection_violations = Vec::new();
        if let (Some(inst), RewriteRule::Pattern { .. }) = (selection, rule) {
            if let Some(sigma) = sample_instantiation(&lhs, ctx, samples) {
                let l = substitute(&lhs, &sigma)?;
                let r = substitute(&rhs, &sigma)?;
                for a in r.payload_atoms() {
                    let sr = select_raw(inst, &a, &r, ctx)?;
                    let sl = select_raw(inst, &a, &l, ctx)?;
                    if !selection_subset(&sr, &sl) {
                        selection_violations.push(a);
                    }
                }
            }
        }
        out.push(RuleReport {
            rule: rule.to_string(),
            keys_violations,
            unbound_variables,
            needs_selection_review,
            selection_violations,
        });
    }
    Ok(ValidationReport { rules: out })
}

fn selection_subset(a: &SelectionResult, b: &SelectionResult) -> bool {
    match (a, b) {
        (_, SelectionResult::AllAtoms) => true,
        (SelectionResult::AllAtoms, _) => false,
        (SelectionResult::Finite(x), SelectionResult::Finite(y)) => x.is_subset(y),
    }
}

fn sample_instantiation(lhs: &Message, ctx: &VerificationContext, samples: &[Atom]) -> Option<Substitution> {
    let keys: Vec<&Atom> = samples.iter().filter(|a| ctx.is_key(a)).collect();
    let plain: Vec<&Atom> = samples.iter().filter(|a| !ctx.is_key(a)).collect();
    let mut sigma = Substitution::new();
    let (mut ki, mut pi) = (0usize, 0usize);
    for a in lhs.atoms_in_order() {
        if a.is_constant() {
            continue;
        }
        let in_key_position = lhs
            .encryptions()
            .iter()
            .any(|e| matches!(e, Message::Enc { key, .. } if key == &a));
        let pick = if in_key_position {
            let k = keys.get(ki % keys.len().max(1)).copied()?;
            ki += 1;
            k
        } else {
            let p = plain.get(pi % plain.len().max(1)).copied()?;
            pi += 1;
            p
        };
        sigma.insert(a, Message::Atom(pick.clone()));
    }
    Some(sigma)
}
