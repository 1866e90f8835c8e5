//! Protocol scripts, generalized roles and the generalized message space.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::context::{SecurityLevel, VerificationContext};
use crate::error::{Error, Result};
use crate::lexer::{tokenize, Cursor, Tok};
use crate::rewrite::RewriteRule;
use crate::term::{encryption_patterns, parse_msg, Atom, KeyMode, Message, Sort, SymbolTable};

/// Session tag given to fresh values inside generalized roles.
pub const SESSION_TAG: &str = "i";

/// One line of a protocol table: `⟨id, sender → receiver : message⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub id: u64,
    pub sender: Atom,
    pub receiver: Atom,
    pub message: Message,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨{}, {} → {} : {}⟩", self.id, self.sender, self.receiver, self.message)
    }
}

/// Direction of a role step, seen from the role's agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Send,
    Recv,
}

/// One step of a generalized role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleStep {
    /// Session-qualified label such as `i.2`.
    pub label: String,
    pub action: Action,
    /// The counterpart as seen by the agent, e.g. `I(B)`.
    pub peer: String,
    pub message: Message,
}

/// An agent-centric view of a protocol prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralizedRole {
    pub id: String,
    pub agent: Atom,
    pub steps: Vec<RoleStep>,
}

impl GeneralizedRole {
    /// Messages received anywhere in the role (`R⁻`).
    pub fn received(&self) -> Vec<Message> {
        self.steps
            .iter()
            .filter(|s| s.action == Action::Recv)
            .map(|s| s.message.clone())
            .collect()
    }

    /// Messages received before the last send.
    pub fn received_before_last_send(&self) -> Vec<Message> {
        let end = self.last_send_index().unwrap_or(0);
        self.steps[..end]
            .iter()
            .filter(|s| s.action == Action::Recv)
            .map(|s| s.message.clone())
            .collect()
    }

    fn last_send_index(&self) -> Option<usize> {
        self.steps.iter().rposition(|s| s.action == Action::Send)
    }

    /// The message of the final step when that step is a send (`r⁺`).
    pub fn final_send(&self) -> Option<&Message> {
        match self.steps.last() {
            Some(s) if s.action == Action::Send => Some(&s.message),
            _ => None,
        }
    }

    pub fn ends_with_send(&self) -> bool {
        self.final_send().is_some()
    }

    /// All messages of the role in step order.
    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.steps.iter().map(|s| &s.message)
    }
}

impl fmt::Display for GeneralizedRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} ({}):", self.id, self.agent)?;
        for s in &self.steps {
            let (from, to) = match s.action {
                Action::Send => (self.agent.to_string(), s.peer.clone()),
                Action::Recv => (s.peer.clone(), self.agent.to_string()),
            };
            writeln!(f, "  ⟨{}, {} → {} : {}⟩", s.label, from, to, s.message)?;
        }
        Ok(())
    }
}

/// A parsed protocol script.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Protocol {
    pub name: String,
    pub context: VerificationContext,
    pub symbols: SymbolTable,
    pub steps: Vec<Step>,
    /// Fresh value name to the principal that generates it.
    pub fresh: BTreeMap<String, String>,
    /// Roles written out in the script, if any.
    pub explicit_roles: Option<Vec<GeneralizedRole>>,
}

/// Which roles to analyse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoleMode {
    /// Written roles when present, extracted roles otherwise.
    #[default]
    Default,
    /// Always extract from the steps.
    Auto,
    /// Require written roles.
    Manual,
}

impl Protocol {
    /// An empty protocol over `context`.
    pub fn new(name: &str, context: VerificationContext) -> Self {
        let symbols = context.symbols();
        Protocol {
            name: name.to_string(),
            context,
            symbols,
            steps: Vec::new(),
            fresh: BTreeMap::new(),
            explicit_roles: None,
        }
    }

    /// The roles selected by `mode`.
    pub fn roles(&self, mode: RoleMode) -> Result<Vec<GeneralizedRole>> {
        match (mode, &self.explicit_roles) {
            (RoleMode::Default | RoleMode::Manual, Some(r)) => Ok(r.clone()),
            (RoleMode::Manual, None) => Err(Error::Context(format!(
                "protocol `{}` has no written roles",
                self.name
            ))),
            _ => Ok(extract_generalized_roles(self)),
        }
    }

    pub fn is_fresh(&self, a: &Atom) -> bool {
        !a.is_variable() && self.fresh.contains_key(&a.name)
    }

    /// The principal, key or value whose counter indexes `a` when the
    /// message space is freshened.
    pub fn owner_of(&self, a: &Atom) -> String {
        let ctx = &self.context;
        if ctx.is_principal(a) {
            return a.name.clone();
        }
        if let Some(owner) = self.fresh.get(&a.name) {
            return owner.clone();
        }
        if let Some(info) = ctx.key_info(&a.name) {
            let private = if info.private { a.name.clone() } else { info.inverse.clone() };
            if let Some(SecurityLevel::Finite(s)) = ctx.declared_level(&private) {
                if s.len() == 1 {
                    return s.iter().next().expect("one owner").name.clone();
                }
            }
        }
        a.name.clone()
    }
}

/// Parses a protocol script. Statements end with `;`; `#` and `//` start
/// comments.
///
/// ```text
/// protocol NS;
/// principals A, B;
/// intruder I;
/// key ka inv ka-1;
/// fresh Na by A;
/// level Na = {A, B};
/// step 1: A -> B : {A.Na}_kb;
/// role A_G1 by A: send {A.Na^i}_kb;
/// ```
pub fn parse_protocol(text: &str) -> Result<Protocol> {
    let mut cur = Cursor::new(tokenize(text)?);
    let mut p = Protocol::new("unnamed", VerificationContext::new("I"));
    let mut rules = Vec::new();
    let mut roles: Vec<GeneralizedRole> = Vec::new();
    let mut pending_levels: Vec<(String, SecurityLevel, usize, usize)> = Vec::new();
    while !cur.at(&Tok::Eof) {
        let (kw, line, col) = cur.ident()?;
        match kw.as_str() {
            "protocol" => p.name = cur.ident()?.0,
            "principal" | "principals" => {
                for name in ident_list(&mut cur)? {
                    declare_fresh_name(&p.symbols, &name)?;
                    p.context.add_principal(&name.0);
                    p.symbols.declare_constant(&name.0);
                }
            }
            "intruder" => {
                let name = cur.ident()?;
                p.context.set_intruder(&name.0);
                p.symbols.declare_constant(&name.0);
            }
            "key" => {
                let name = cur.ident()?;
                declare_fresh_name(&p.symbols, &name)?;
                if cur.keyword("inv") {
                    let inv = cur.ident()?;
                    declare_fresh_name(&p.symbols, &inv)?;
                    cur.keyword("asym");
                    p.context.add_key_pair(&name.0, &inv.0);
                    p.symbols.declare_key(&name.0, KeyMode::Asymmetric);
                    p.symbols.declare_key(&inv.0, KeyMode::Asymmetric);
                } else {
                    cur.keyword("sym");
                    p.context.add_symmetric_key(&name.0);
                    p.symbols.declare_key(&name.0, KeyMode::Symmetric);
                }
            }
            "fresh" => {
                let names = ident_list(&mut cur)?;
                if !cur.keyword("by") {
                    return Err(cur.error("`by`"));
                }
                let (owner, oline, ocol) = cur.ident()?;
                if !p.context.is_principal(&Atom::constant(owner.clone())) {
                    return Err(Error::UndeclaredIdentifier {
                        name: owner,
                        line: oline,
                        col: ocol,
                    });
                }
                for name in names {
                    declare_fresh_name(&p.symbols, &name)?;
                    p.context.add_constant(&name.0);
                    p.symbols.declare_constant(&name.0);
                    p.fresh.insert(name.0, owner.clone());
                }
            }
            "const" | "constant" | "constants" => {
                for name in ident_list(&mut cur)? {
                    declare_fresh_name(&p.symbols, &name)?;
                    p.context.add_constant(&name.0);
                    p.symbols.declare_constant(&name.0);
                }
            }
            "var" | "vars" => {
                for name in ident_list(&mut cur)? {
                    declare_fresh_name(&p.symbols, &name)?;
                    p.symbols.declare_variable(&name.0);
                }
            }
            "meta" => {
                let key = cur.keyword("key");
                for name in ident_list(&mut cur)? {
                    declare_fresh_name(&p.symbols, &name)?;
                    if key {
                        p.symbols.declare(Atom {
                            name: name.0,
                            sort: Sort::Parameter,
                            session: None,
                            index: None,
                        });
                    } else {
                        p.symbols.declare_variable(&name.0);
                    }
                }
            }
            "level" => {
                let (name, nline, ncol) = cur.ident()?;
                cur.expect(&Tok::Eq)?;
                let level = parse_level(&mut cur, &p.context)?;
                pending_levels.push((name, level, nline, ncol));
            }
            "rule" => {
                let lhs = parse_msg(&mut cur, &p.symbols)?;
                cur.expect(&Tok::Arrow)?;
                let rhs = parse_msg(&mut cur, &p.symbols)?;
                rules.push(RewriteRule::Pattern { lhs, rhs });
            }
            "step" => {
                let t = cur.peek().clone();
                let id = match t.tok {
                    Tok::Num(n) => {
                        cur.next();
                        n
                    }
                    _ => return Err(cur.error("a step number")),
                };
                if p.steps.last().is_some_and(|s| s.id >= id) {
                    return Err(Error::DuplicateStep { id });
                }
                cur.expect(&Tok::Colon)?;
                let sender = principal(&mut cur, &p.context)?;
                cur.expect(&Tok::Arrow)?;
                let receiver = principal(&mut cur, &p.context)?;
                cur.expect(&Tok::Colon)?;
                let message = parse_msg(&mut cur, &p.symbols)?;
                p.steps.push(Step {
                    id,
                    sender,
                    receiver,
                    message,
                });
            }
            "role" => {
                let (id, _, _) = cur.ident()?;
                if !cur.keyword("by") {
                    return Err(cur.error("`by`"));
                }
                let agent = principal(&mut cur, &p.context)?;
                cur.expect(&Tok::Colon)?;
                let mut steps = Vec::new();
                loop {
                    let action = if cur.keyword("send") {
                        Action::Send
                    } else if cur.keyword("recv") {
                        Action::Recv
                    } else {
                        return Err(cur.error("`send` or `recv`"));
                    };
                    let message = parse_msg(&mut cur, &p.symbols)?;
                    steps.push(RoleStep {
                        label: format!("{SESSION_TAG}.{}", steps.len() + 1),
                        action,
                        peer: p.context.intruder().name,
                        message,
                    });
                    if !cur.eat(&Tok::Comma) {
                        break;
                    }
                }
                roles.push(GeneralizedRole { id, agent, steps });
            }
            other => {
                return Err(Error::Syntax {
                    line,
                    col,
                    expected: "a statement keyword".into(),
                    found: format!("identifier `{other}`"),
                })
            }
        }
        cur.expect(&Tok::Semi)?;
    }
    for (name, level, line, col) in pending_levels {
        if !p.symbols.is_declared(&name) {
            return Err(Error::UndeclaredIdentifier { name, line, col });
        }
        p.context.set_level(&name, level);
    }
    if !rules.is_empty() {
        let mut all = vec![RewriteRule::Cancellation];
        all.extend(rules);
        p.context.set_rules(all);
    }
    if !roles.is_empty() {
        p.explicit_roles = Some(roles);
    }
    p.context.validate()?;
    Ok(p)
}

fn ident_list(cur: &mut Cursor) -> Result<Vec<(String, usize, usize)>> {
    let mut out = vec![cur.ident()?];
    while cur.eat(&Tok::Comma) {
        out.push(cur.ident()?);
    }
    Ok(out)
}

fn declare_fresh_name(symbols: &SymbolTable, name: &(String, usize, usize)) -> Result<()> {
    if symbols.is_declared(&name.0) {
        return Err(Error::Context(format!(
            "`{}` declared twice at {}:{}",
            name.0, name.1, name.2
        )));
    }
    Ok(())
}

fn principal(cur: &mut Cursor, ctx: &VerificationContext) -> Result<Atom> {
    let (name, line, col) = cur.ident()?;
    let a = Atom::constant(name.clone());
    if !ctx.is_principal(&a) {
        return Err(Error::UndeclaredIdentifier { name, line, col });
    }
    Ok(a)
}

fn parse_level(cur: &mut Cursor, ctx: &VerificationContext) -> Result<SecurityLevel> {
    if cur.eat(&Tok::Bot) || cur.keyword("bot") {
        return Ok(SecurityLevel::Bottom);
    }
    if cur.eat(&Tok::Top) || cur.keyword("top") {
        return Ok(SecurityLevel::top());
    }
    cur.expect(&Tok::LBrace)?;
    let mut members = BTreeSet::new();
    if !cur.at(&Tok::RBrace) {
        for (name, line, col) in ident_list(cur)? {
            let a = Atom::constant(name.clone());
            if !ctx.is_principal(&a) {
                return Err(Error::UndeclaredIdentifier { name, line, col });
            }
            members.insert(a);
        }
    }
    cur.expect(&Tok::RBrace)?;
    Ok(SecurityLevel::Finite(members))
}

const VARIABLE_NAMES: [&str; 6] = ["X", "Y", "Z", "U", "V", "W"];

struct Extraction<'p> {
    protocol: &'p Protocol,
    known: BTreeSet<Atom>,
    sent: BTreeSet<Message>,
    learned: BTreeMap<Message, Atom>,
    next_var: usize,
    var_base: String,
}

impl Extraction<'_> {
    /// Initial knowledge: identities, own fresh values, keys that are
    /// public or held by the agent, and other readable constants.
    fn new<'p>(protocol: &'p Protocol, agent: &Atom, var_base: &str) -> Extraction<'p> {
        let ctx = &protocol.context;
        let mut known = BTreeSet::new();
        for name in ctx.constant_names() {
            let a = Atom::constant(name.clone());
            if let Some(owner) = protocol.fresh.get(name) {
                if owner == &agent.name {
                    known.insert(a);
                }
                continue;
            }
            let level = ctx.level_of(&a);
            if ctx.is_principal(&a) || level.is_bottom() || level.contains(agent) {
                known.insert(a);
            }
        }
        Extraction {
            protocol,
            known,
            sent: BTreeSet::new(),
            learned: BTreeMap::new(),
            next_var: 0,
            var_base: var_base.to_string(),
        }
    }

    fn tag(&self, a: &Atom) -> Atom {
        if self.protocol.is_fresh(a) && a.session.is_none() {
            a.clone().with_session(SESSION_TAG)
        } else {
            a.clone()
        }
    }

    fn variable_for(&mut self, m: &Message) -> Message {
        if let Some(v) = self.learned.get(m) {
            return Message::Atom(v.clone());
        }
        self.next_var += 1;
        let name = if self.next_var == 1 {
            self.var_base.clone()
        } else {
            format!("{}{}", self.var_base, self.next_var)
        };
        let v = Atom::variable(name);
        self.learned.insert(m.clone(), v.clone());
        Message::Atom(v)
    }

    /// The agent's view of a message it sends.
    fn outgoing(&self, m: &Message) -> Message {
        if let Some(v) = self.learned.get(m) {
            return Message::Atom(v.clone());
        }
        match m {
            Message::Empty => Message::Empty,
            Message::Atom(a) => Message::Atom(self.tag(a)),
            Message::Concat(v) => Message::concat(v.iter().map(|x| self.outgoing(x))),
            Message::Enc { body, key, mode } => Message::enc(self.outgoing(body), key.clone(), *mode),
        }
    }

    /// The agent's view of a message it receives: parts it cannot check
    /// become variables.
    fn incoming(&mut self, m: &Message) -> Result<Message> {
        let mut parts = Vec::new();
        for item in m.items() {
            parts.push(self.incoming_item(&item)?);
        }
        Ok(Message::concat(parts))
    }

    fn incoming_item(&mut self, m: &Message) -> Result<Message> {
        if let Some(v) = self.learned.get(m) {
            return Ok(Message::Atom(v.clone()));
        }
        match m {
            Message::Atom(a) if self.known.contains(&a.base()) || a.is_variable() => Ok(Message::Atom(self.tag(a))),
            Message::Atom(_) => Ok(self.variable_for(m)),
            Message::Enc { body, key, mode } => {
                let inverse = self.protocol.context.inverse_key(key)?;
                if self.known.contains(&inverse.base()) {
                    Ok(Message::enc(self.incoming(body)?, key.clone(), *mode))
                } else if self.sent.contains(&self.outgoing(m)) {
                    Ok(self.outgoing(m))
                } else {
                    Ok(self.variable_for(m))
                }
            }
            other => self.incoming(other),
        }
    }
}

/// Builds the generalized roles of every agent: each agent's projection of
/// the steps, with unverifiable received parts replaced by variables and
/// fresh values tagged with the session. One role is emitted per prefix
/// ending in a send, plus the complete role when it ends with a receive.
pub fn extract_generalized_roles(p: &Protocol) -> Vec<GeneralizedRole> {
    let mut agents: Vec<Atom> = Vec::new();
    for s in &p.steps {
        for a in [&s.sender, &s.receiver] {
            if !agents.contains(a) {
                agents.push(a.clone());
            }
        }
    }
    let mut out = Vec::new();
    for (i, agent) in agents.iter().enumerate() {
        let base = VARIABLE_NAMES
            .get(i)
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("X{i}"));
        let mut ex = Extraction::new(p, agent, &base);
        let mut steps = Vec::new();
        for s in &p.steps {
            let label = format!("{SESSION_TAG}.{}", s.id);
            if &s.sender == agent {
                let message = ex.outgoing(&s.message);
                ex.sent.insert(message.clone());
                steps.push(RoleStep {
                    label,
                    action: Action::Send,
                    peer: format!("{}({})", p.context.intruder(), s.receiver),
                    message,
                });
            } else if &s.receiver == agent {
                let Ok(message) = ex.incoming(&s.message) else {
                    continue;
                };
                steps.push(RoleStep {
                    label,
                    action: Action::Recv,
                    peer: format!("{}({})", p.context.intruder(), s.sender),
                    message,
                });
            }
        }
        let mut n = 0;
        for j in 0..steps.len() {
            if steps[j].action == Action::Send {
                n += 1;
                out.push(GeneralizedRole {
                    id: format!("{}_G{n}", agent),
                    agent: agent.clone(),
                    steps: steps[..=j].to_vec(),
                });
            }
        }
        if n > 0 && steps.last().is_some_and(|s| s.action == Action::Recv) {
            out.push(GeneralizedRole {
                id: format!("{}_G{}", agent, n + 1),
                agent: agent.clone(),
                steps,
            });
        }
    }
    out
}

/// Renames parameters and variables by order of first occurrence, so that
/// two patterns equal up to renaming get the same key.
fn canonical(m: &Message) -> Message {
    let mut map: BTreeMap<Atom, Atom> = BTreeMap::new();
    m.map_atoms(&mut |a| {
        if a.is_constant() {
            return a.clone();
        }
        let n = map.len() as u32;
        map.entry(a.clone())
            .or_insert_with(|| Atom {
                name: if a.is_variable() { "_v".into() } else { a.name.clone() },
                sort: a.sort,
                session: None,
                index: Some(n),
            })
            .clone()
    })
}

/// The generalized message space `M_p^G`: the encryption patterns of all
/// role messages, each freshened with its own indices and deduplicated up
/// to renaming. Principals, fresh values and keys become parameters
/// indexed by a per-owner counter; variables get a per-name counter.
pub fn generalized_message_space(p: &Protocol, roles: &[GeneralizedRole]) -> Vec<Message> {
    let mut messages: Vec<Message> = Vec::new();
    for r in roles {
        for m in r.messages() {
            if !messages.contains(m) {
                messages.push(m.clone());
            }
        }
    }
    let patterns = encryption_patterns(messages.iter());
    let mut owner_counts: BTreeMap<String, u32> = BTreeMap::new();
    let mut var_counts: BTreeMap<String, u32> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for pat in patterns {
        let mut owner_index: BTreeMap<String, u32> = BTreeMap::new();
        for a in pat.atoms_in_order() {
            if a.is_variable() || !freshened_kind(p, &a) {
                continue;
            }
            let owner = p.owner_of(&a);
            if let std::collections::btree_map::Entry::Vacant(slot) = owner_index.entry(owner.clone()) {
                let c = owner_counts.entry(owner).or_insert(0);
                *c += 1;
                slot.insert(*c);
            }
        }
        let mut var_index: BTreeMap<Atom, u32> = BTreeMap::new();
        for v in pat.atoms_in_order().into_iter().filter(|a| a.is_variable()) {
            let c = var_counts.entry(v.name.clone()).or_insert(0);
            *c += 1;
            var_index.insert(v, *c);
        }
        let fresh = pat.map_atoms(&mut |a| {
            if a.is_variable() {
                a.clone().with_index(var_index[a])
            } else if freshened_kind(p, a) {
                Atom::parameter(a.name.clone(), owner_index[&p.owner_of(a)])
            } else {
                a.clone()
            }
        });
        if seen.insert(canonical(&fresh)) {
            out.push(fresh);
        }
    }
    out
}

fn freshened_kind(p: &Protocol, a: &Atom) -> bool {
    !a.is_variable() && (p.context.is_principal(a) || p.context.is_key(a) || p.is_fresh(a))
}
