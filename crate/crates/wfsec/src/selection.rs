//! Selection functions inside the protection of an external key, the
//! homomorphism `ψ` into the security lattice and the interpretation
//! functions `F = ψ ∘ S`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::context::{SecurityLevel, VerificationContext};
use crate::error::{Error, Result};
use crate::rewrite::normalize;
use crate::term::{Atom, Message};

/// User-supplied neighbor filter: receives the neighbors of the analysed
/// atom under its protective key and the inverse of that key.
pub type CandidateFilter =
    Arc<dyn Fn(&BTreeSet<Atom>, &Atom, &VerificationContext) -> BTreeSet<Atom> + Send + Sync>;

/// A member of the selection class.
#[derive(Clone)]
pub enum SelectionInstance {
    /// Principal neighbors plus the inverse key.
    Max,
    /// The inverse key alone.
    Ek,
    /// Principal neighbors alone.
    N,
    /// Any filter; its output is clamped to the neighbors and the key.
    Custom { name: String, filter: CandidateFilter },
}

impl fmt::Debug for SelectionInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionInstance::Max => write!(f, "Max"),
            SelectionInstance::Ek => write!(f, "Ek"),
            SelectionInstance::N => write!(f, "N"),
            SelectionInstance::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl SelectionInstance {
    pub fn custom(
        name: impl Into<String>,
        filter: impl Fn(&BTreeSet<Atom>, &Atom, &VerificationContext) -> BTreeSet<Atom> + Send + Sync + 'static,
    ) -> Self {
        SelectionInstance::Custom {
            name: name.into(),
            filter: Arc::new(filter),
        }
    }

    /// Applies the instance's filter. `neighbors` excludes the analysed
    /// atom and all variables.
    pub fn filter(&self, neighbors: &BTreeSet<Atom>, inverse: &Atom, ctx: &VerificationContext) -> BTreeSet<Atom> {
        let principals = || -> BTreeSet<Atom> {
            neighbors.iter().filter(|a| ctx.is_principal(a)).cloned().collect()
        };
        match self {
            SelectionInstance::Max => {
                let mut s = principals();
                s.insert(inverse.clone());
                s
            }
            SelectionInstance::Ek => BTreeSet::from([inverse.clone()]),
            SelectionInstance::N => principals(),
            SelectionInstance::Custom { filter, .. } => filter(neighbors, inverse, ctx)
                .into_iter()
                .filter(|a| a == inverse || neighbors.contains(a))
                .collect(),
        }
    }
}

/// Outcome of a selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionResult {
    /// Every atom: the result for the bare atom itself.
    AllAtoms,
    Finite(BTreeSet<Atom>),
}

impl SelectionResult {
    pub fn empty() -> Self {
        SelectionResult::Finite(BTreeSet::new())
    }

    pub fn union(self, other: SelectionResult) -> SelectionResult {
        match (self, other) {
            (SelectionResult::AllAtoms, _) | (_, SelectionResult::AllAtoms) => SelectionResult::AllAtoms,
            (SelectionResult::Finite(mut a), SelectionResult::Finite(b)) => {
                a.extend(b);
                SelectionResult::Finite(a)
            }
        }
    }
}

/// The declared level of an inverse key used as a protection.
fn key_level(inverse: &Atom, ctx: &VerificationContext) -> Result<SecurityLevel> {
    if let Some(info) = ctx.key_info(&inverse.name) {
        if info.private && ctx.declared_level(&inverse.name).is_none() {
            return Err(Error::UnleveledKey {
                key: inverse.name.clone(),
            });
        }
    }
    Ok(ctx.level_of(inverse))
}

/// Selection on the normal form of `m`.
pub fn select(inst: &SelectionInstance, alpha: &Atom, m: &Message, ctx: &VerificationContext) -> Result<SelectionResult> {
    select_raw(inst, alpha, &normalize(m, ctx)?, ctx)
}

/// Selection over a set of messages: union of the member selections.
pub fn select_set(
    inst: &SelectionInstance,
    alpha: &Atom,
    msgs: &[Message],
    ctx: &VerificationContext,
) -> Result<SelectionResult> {
    let mut out = SelectionResult::empty();
    for m in msgs {
        out = out.union(select(inst, alpha, m, ctx)?);
    }
    Ok(out)
}

/// Selection on `m` as written, without normalizing it first.
pub fn select_raw(
    inst: &SelectionInstance,
    alpha: &Atom,
    m: &Message,
    ctx: &VerificationContext,
) -> Result<SelectionResult> {
    match m {
        Message::Empty => Ok(SelectionResult::empty()),
        Message::Atom(b) if b == alpha => Ok(SelectionResult::AllAtoms),
        Message::Atom(_) => Ok(SelectionResult::empty()),
        Message::Concat(v) => {
            let mut out = SelectionResult::empty();
            for x in v {
                out = out.union(select_raw(inst, alpha, x, ctx)?);
            }
            Ok(out)
        }
        Message::Enc { body, key, .. } => {
            if !body.has_payload_atom(alpha) {
                return Ok(SelectionResult::empty());
            }
            let inverse = ctx.inverse_key(key)?;
            if key_level(&inverse, ctx)?.geq(&ctx.level_of(alpha)) {
                let neighbors: BTreeSet<Atom> = body
                    .atoms()
                    .into_iter()
                    .filter(|a| a != alpha && !a.is_variable())
                    .collect();
                let mut selected = inst.filter(&neighbors, &inverse, ctx);
                selected.remove(alpha);
                Ok(SelectionResult::Finite(selected))
            } else {
                select_raw(inst, alpha, body, ctx)
            }
        }
    }
}

/// Maps a selection into the lattice: principals stand for themselves,
/// other atoms for their level.
pub fn psi(ctx: &VerificationContext, r: &SelectionResult) -> Result<SecurityLevel> {
    match r {
        SelectionResult::AllAtoms => Ok(SecurityLevel::Bottom),
        SelectionResult::Finite(set) => {
            let mut out = SecurityLevel::top();
            for a in set {
                let l = if ctx.is_principal(a) {
                    SecurityLevel::of([a.clone()])
                } else if ctx.is_key(a) {
                    key_level(a, ctx)?
                } else {
                    ctx.level_of(a)
                };
                out = out.meet(&l);
            }
            Ok(out)
        }
    }
}

/// The three named interpretation functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum FunctionName {
    #[default]
    FMax,
    FEk,
    FN,
}

impl FunctionName {
    pub fn instance(self) -> SelectionInstance {
        match self {
            FunctionName::FMax => SelectionInstance::Max,
            FunctionName::FEk => SelectionInstance::Ek,
            FunctionName::FN => SelectionInstance::N,
        }
    }
}

impl fmt::Display for FunctionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FunctionName::FMax => "fmax",
            FunctionName::FEk => "fek",
            FunctionName::FN => "fn",
        })
    }
}

impl FromStr for FunctionName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fmax" | "max" => Ok(FunctionName::FMax),
            "fek" | "ek" => Ok(FunctionName::FEk),
            "fn" | "n" => Ok(FunctionName::FN),
            other => Err(format!("unknown function `{other}` (expected fmax, fek or fn)")),
        }
    }
}

/// `F(α, m) = ψ(S(α, m))`.
pub fn interpret_with(
    inst: &SelectionInstance,
    alpha: &Atom,
    m: &Message,
    ctx: &VerificationContext,
) -> Result<SecurityLevel> {
    psi(ctx, &select(inst, alpha, m, ctx)?)
}

/// `F(α, M)` for a set: the meet over members, `⊤` when empty.
pub fn interpret_set_with(
    inst: &SelectionInstance,
    alpha: &Atom,
    msgs: &[Message],
    ctx: &VerificationContext,
) -> Result<SecurityLevel> {
    psi(ctx, &select_set(inst, alpha, msgs, ctx)?)
}

/// [`interpret_with`] for a named function.
pub fn interpret(f: FunctionName, alpha: &Atom, m: &Message, ctx: &VerificationContext) -> Result<SecurityLevel> {
    interpret_with(&f.instance(), alpha, m, ctx)
}

/// [`interpret_set_with`] for a named function.
pub fn interpret_set(
    f: FunctionName,
    alpha: &Atom,
    msgs: &[Message],
    ctx: &VerificationContext,
) -> Result<SecurityLevel> {
    interpret_set_with(&f.instance(), alpha, msgs, ctx)
}
