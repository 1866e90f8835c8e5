//! Derivative messages and the value of an interpretation function on the
//! derivative of a source pattern.

use std::collections::BTreeSet;

use crate::context::{SecurityLevel, VerificationContext};
use crate::error::{Error, Result};
use crate::selection::{interpret_with, SelectionInstance};
use crate::term::{substitute, Atom, Message, Substitution};

/// Replaces every listed variable of `m` by the empty message.
pub fn derive(m: &Message, remove: &BTreeSet<Atom>) -> Message {
    match m {
        Message::Empty => Message::Empty,
        Message::Atom(a) if a.is_variable() && remove.contains(a) => Message::Empty,
        Message::Atom(_) => m.clone(),
        Message::Concat(v) => Message::concat(v.iter().map(|x| derive(x, remove))),
        Message::Enc { body, key, mode } => Message::enc(derive(body, remove), key.clone(), *mode),
    }
}

/// Removes every variable.
pub fn derive_all_vars(m: &Message) -> Message {
    derive(m, &m.variables())
}

/// Removes every variable except `keep`.
pub fn derive_except(m: &Message, keep: &Atom) -> Message {
    let mut vars = m.variables();
    vars.remove(keep);
    derive(m, &vars)
}

/// The value of `F` on the derivative of `source` for the occurrence of
/// `alpha` in the unified message.
///
/// Parameter bindings of `sigma` are applied to `source`; variable
/// bindings are only used to find which variables carry `alpha`. A static
/// occurrence is valued on the fully derived source; an occurrence that
/// arrives through a variable `X` is valued as `F(X, ∂[X̄] source)`. When
/// both apply the results are met.
pub fn f_derivative(
    inst: &SelectionInstance,
    alpha: &Atom,
    source: &Message,
    sigma: &Substitution,
    ctx: &VerificationContext,
) -> Result<SecurityLevel> {
    let resolved = sigma.resolved()?;
    let source_p = substitute(source, &resolved.parameters_only())?;
    let mut parts = Vec::new();
    let fixed = derive_all_vars(&source_p);
    if fixed.has_payload_atom(alpha) {
        parts.push(interpret_with(inst, alpha, &fixed, ctx)?);
    }
    for x in source_p.variables() {
        if x == *alpha {
            continue;
        }
        let value = resolved.apply_fully(&Message::Atom(x.clone()))?;
        if value.has_payload_atom(alpha) {
            parts.push(interpret_with(inst, &x, &derive_except(&source_p, &x), ctx)?);
        }
    }
    if parts.is_empty() {
        return Err(Error::OccurrenceNotFound {
            atom: alpha.to_string(),
            source_msg: source.to_string(),
        });
    }
    Ok(SecurityLevel::meet_all(parts))
}
