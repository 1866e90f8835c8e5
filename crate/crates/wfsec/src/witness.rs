//! Witness-function bounds and the growth criterion over generalized roles.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::context::{SecurityLevel, VerificationContext};
use crate::derive::{derive, f_derivative};
use crate::error::{Error, Result};
use crate::rewrite::check_well_protected;
use crate::roles::{generalized_message_space, GeneralizedRole, Protocol, RoleMode};
use crate::selection::{interpret_set_with, SelectionInstance};
use crate::term::{substitute, Atom, Message, Substitution};
use crate::unify::{candidate_sources, Candidate};

/// The level of the analysed atom: declared, or unknown for variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtomLevel {
    Known(SecurityLevel),
    SymbolicUnknown,
}

impl fmt::Display for AtomLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomLevel::Known(l) => write!(f, "{l}"),
            AtomLevel::SymbolicUnknown => write!(f, "unknown"),
        }
    }
}

/// Outcome of one criterion check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Fulfilled,
    NotFulfilled,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Fulfilled => "Fulfilled",
            Verdict::NotFulfilled => "Not Fulfilled",
        })
    }
}

/// One row of the conformity table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub role: String,
    pub agent: Atom,
    pub atom: Atom,
    /// `R⁻`: messages received in the role.
    pub received: Vec<Message>,
    /// `r⁺`: the final sent message.
    pub sent: Message,
    /// `W′`: lower bound of the witness function on `r⁺`.
    pub lower_bound: SecurityLevel,
    pub atom_level: AtomLevel,
    /// `F(α, ∂[ᾱ]R⁻)`.
    pub reception_estimate: SecurityLevel,
    pub verdict: Verdict,
    /// Members of `W′` that the right-hand side does not allow.
    pub blame: BTreeSet<Atom>,
    pub notes: Vec<String>,
}

impl CriterionRow {
    /// The right-hand side of the criterion: `⌈α⌉ ⊓ F(α, ∂[ᾱ]R⁻)`, or
    /// the estimate alone for variables.
    pub fn required(&self) -> SecurityLevel {
        match &self.atom_level {
            AtomLevel::Known(l) => l.meet(&self.reception_estimate),
            AtomLevel::SymbolicUnknown => self.reception_estimate.clone(),
        }
    }
}

/// The full conformity report of a protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub protocol: String,
    pub function: String,
    pub rows: Vec<CriterionRow>,
}

impl AnalysisReport {
    pub fn verdict(&self) -> Verdict {
        if self.rows.iter().all(|r| r.verdict == Verdict::Fulfilled) {
            Verdict::Fulfilled
        } else {
            Verdict::NotFulfilled
        }
    }

    /// Aligned text table.
    pub fn render_table(&self) -> String {
        let header = ["α", "Role", "R⁻", "r⁺", "W′", "⌈α⌉", "F(α,∂[ᾱ]R⁻)", "Verdict", "Blame"].map(String::from);
        let mut lines: Vec<[String; 9]> = vec![header];
        for r in &self.rows {
            let atom = if r.atom.is_variable() {
                format!("∀{}", r.atom)
            } else {
                r.atom.to_string()
            };
            let received = if r.received.is_empty() {
                "∅".to_string()
            } else {
                r.received.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(", ")
            };
            let level = match &r.atom_level {
                AtomLevel::Known(l) => l.to_string(),
                AtomLevel::SymbolicUnknown => format!("⌈{}⌉", r.atom),
            };
            lines.push([
                atom,
                r.role.clone(),
                received,
                r.sent.to_string(),
                r.lower_bound.to_string(),
                level,
                r.reception_estimate.to_string(),
                r.verdict.to_string(),
                if r.blame.is_empty() {
                    String::new()
                } else {
                    let names: Vec<String> = r.blame.iter().map(|a| a.to_string()).collect();
                    format!("{{{}}}", names.join(", "))
                },
            ]);
        }
        let widths: Vec<usize> = (0..9)
            .map(|i| lines.iter().map(|l| l[i].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (n, l) in lines.iter().enumerate() {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            out.push_str(cells.join(" | ").trim_end());
            out.push('\n');
            if n == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                out.push_str(&rule.join("-+-"));
                out.push('\n');
            }
        }
        out
    }

    /// One JSON object per row.
    pub fn render_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r).expect("rows serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses the output of [`AnalysisReport::render_json_lines`].
    pub fn rows_from_json_lines(text: &str) -> std::result::Result<Vec<CriterionRow>, serde_json::Error> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect()
    }
}

/// One candidate source and its value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contribution {
    pub candidate: Candidate,
    pub value: SecurityLevel,
}

/// Atoms treated as fixed during candidate search: the analysed variable.
fn rigid_for(alpha: &Atom) -> BTreeSet<Atom> {
    if alpha.is_variable() {
        BTreeSet::from([alpha.clone()])
    } else {
        BTreeSet::new()
    }
}

/// Values of every candidate source of one encryption component.
pub fn component_contributions(
    inst: &SelectionInstance,
    alpha: &Atom,
    component: &Message,
    pool: &[Message],
    rigid: &BTreeSet<Atom>,
    ctx: &VerificationContext,
) -> Result<Vec<Contribution>> {
    let mut candidates = candidate_sources(component, pool, ctx, rigid);
    if candidates.is_empty() {
        candidates.push(Candidate {
            index: usize::MAX,
            source: component.clone(),
            subst: Substitution::new(),
        });
    }
    let mut out = Vec::new();
    for c in candidates {
        match f_derivative(inst, alpha, &c.source, &c.subst, ctx) {
            Ok(value) => out.push(Contribution { candidate: c, value }),
            Err(Error::OccurrenceNotFound { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn components_with<'m>(alpha: &Atom, m: &'m Message) -> Vec<&'m Message> {
    m.items_ref().iter().filter(|c| c.has_payload_atom(alpha)).collect()
}

/// `W′(α, r⁺)`: the meet of `F` over the derivatives of all candidate
/// sources of each encryption of `r⁺` that carries `α`.
pub fn lower_bound(
    inst: &SelectionInstance,
    alpha: &Atom,
    r_plus: &Message,
    pool: &[Message],
    ctx: &VerificationContext,
) -> Result<SecurityLevel> {
    lower_bound_with(inst, alpha, r_plus, pool, &rigid_for(alpha), ctx)
}

/// [`lower_bound`] with an explicit set of atoms that may not be bound.
pub fn lower_bound_with(
    inst: &SelectionInstance,
    alpha: &Atom,
    r_plus: &Message,
    pool: &[Message],
    rigid: &BTreeSet<Atom>,
    ctx: &VerificationContext,
) -> Result<SecurityLevel> {
    let mut parts = Vec::new();
    for c in components_with(alpha, r_plus) {
        if matches!(c, Message::Atom(_)) {
            return Err(Error::NoProtectivePattern { atom: alpha.to_string() });
        }
        for contribution in component_contributions(inst, alpha, c, pool, rigid, ctx)? {
            parts.push(contribution.value);
        }
    }
    Ok(SecurityLevel::meet_all(parts))
}

/// `F(α, ∂[ᾱ]M)`: the value of `F` on the received messages with every
/// variable other than `α` removed; `⊤` for an empty set.
pub fn upper_bound(
    inst: &SelectionInstance,
    alpha: &Atom,
    msgs: &[Message],
    ctx: &VerificationContext,
) -> Result<SecurityLevel> {
    let derived: Vec<Message> = msgs
        .iter()
        .map(|m| {
            let mut vars = m.variables();
            vars.remove(alpha);
            derive(m, &vars)
        })
        .collect();
    interpret_set_with(inst, alpha, &derived, ctx)
}

/// `W(α, m)` for a closed message: the meet of `F` over the derivatives
/// of every pool pattern that unifies with the message.
pub fn witness_value(
    inst: &SelectionInstance,
    alpha: &Atom,
    closed: &Message,
    pool: &[Message],
    ctx: &VerificationContext,
) -> Result<SecurityLevel> {
    let mut parts = Vec::new();
    for c in components_with(alpha, closed) {
        if matches!(c, Message::Atom(_)) {
            parts.push(SecurityLevel::Bottom);
            continue;
        }
        for contribution in component_contributions(inst, alpha, c, pool, &BTreeSet::new(), ctx)? {
            parts.push(contribution.value);
        }
    }
    Ok(SecurityLevel::meet_all(parts))
}

/// [`witness_value`] on `substitute(source, sigma)`.
pub fn witness_value_of(
    inst: &SelectionInstance,
    alpha: &Atom,
    source: &Message,
    sigma: &Substitution,
    pool: &[Message],
    ctx: &VerificationContext,
) -> Result<SecurityLevel> {
    witness_value(inst, alpha, &substitute(source, sigma)?, pool, ctx)
}

fn blame(lower: &SecurityLevel, required: &SecurityLevel, ctx: &VerificationContext) -> BTreeSet<Atom> {
    let allowed = |a: &Atom| required.contains(a);
    match lower {
        SecurityLevel::Finite(s) => s.iter().filter(|a| !allowed(a)).cloned().collect(),
        SecurityLevel::Bottom => {
            let mut everyone = ctx.principals();
            everyone.insert(ctx.intruder());
            let out: BTreeSet<Atom> = everyone.into_iter().filter(|a| !allowed(a)).collect();
            if out.is_empty() {
                BTreeSet::from([ctx.intruder()])
            } else {
                out
            }
        }
    }
}

/// Checks one role against the criterion and returns its rows.
pub fn analyze_role(
    inst: &SelectionInstance,
    role: &GeneralizedRole,
    pool: &[Message],
    ctx: &VerificationContext,
) -> Result<Vec<CriterionRow>> {
    let Some(sent) = role.final_send() else {
        return Ok(Vec::new());
    };
    let received = role.received();
    let mut rows = Vec::new();
    for alpha in sent.payload_atoms() {
        let atom_level = if alpha.is_variable() {
            AtomLevel::SymbolicUnknown
        } else {
            let l = ctx.level_of(&alpha);
            if l.is_bottom() {
                continue;
            }
            AtomLevel::Known(l)
        };
        let mut notes = Vec::new();
        let lower = match lower_bound(inst, &alpha, sent, pool, ctx) {
            Ok(l) => l,
            Err(e @ Error::NoProtectivePattern { .. }) => {
                notes.push(e.to_string());
                SecurityLevel::Bottom
            }
            Err(e) => return Err(e),
        };
        let estimate = upper_bound(inst, &alpha, &received, ctx)?;
        let mut row = CriterionRow {
            role: role.id.clone(),
            agent: role.agent.clone(),
            atom: alpha,
            received: received.clone(),
            sent: sent.clone(),
            lower_bound: lower,
            atom_level,
            reception_estimate: estimate,
            verdict: Verdict::Fulfilled,
            blame: BTreeSet::new(),
            notes,
        };
        let required = row.required();
        if !row.lower_bound.geq(&required) {
            row.verdict = Verdict::NotFulfilled;
            row.blame = blame(&row.lower_bound, &required, ctx);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Runs the growth criterion over every generalized role of `p`.
///
/// The generalized message space must be well-protected. A `NotFulfilled`
/// report means no conclusion can be drawn, not that an attack exists.
pub fn analyze(p: &Protocol, inst: &SelectionInstance, mode: RoleMode) -> Result<AnalysisReport> {
    let ctx = &p.context;
    ctx.validate()?;
    let roles = p.roles(mode)?;
    let pool = generalized_message_space(p, &roles);
    let wp = check_well_protected(&pool, ctx)?;
    if !wp.is_well_protected() {
        let details: Vec<String> = wp
            .violations
            .iter()
            .map(|v| format!("{v} in `{}`", pool[v.message_index]))
            .collect();
        return Err(Error::WellProtectionViolation {
            details: details.join("; "),
        });
    }
    let mut rows = Vec::new();
    for role in &roles {
        rows.extend(analyze_role(inst, role, &pool, ctx)?);
    }
    Ok(AnalysisReport {
        protocol: p.name.clone(),
        function: format!("{inst:?}"),
        rows,
    })
}
