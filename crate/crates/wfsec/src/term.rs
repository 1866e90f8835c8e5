//! Message algebra: atoms, flattened concatenation, keyed encryption,
//! substitution, parsing and printing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::context::VerificationContext;
use crate::error::{Error, Result};
use crate::lexer::{tokenize, Cursor, Tok};

/// The three sorts of atomic names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sort {
    /// A rigid name such as a principal identity, a nonce or a key.
    Constant,
    /// An indexed static name that unification may instantiate but
    /// derivation leaves in place.
    Parameter,
    /// An unknown received value; removed by derivation.
    Variable,
}

/// Whether an encryption key is its own inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KeyMode {
    Symmetric,
    Asymmetric,
}

/// An atomic message.
///
/// Context queries (level, principal membership, key inverse) look at
/// `name` only, so a parameter `A_3` inherits everything declared for `A`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub name: String,
    pub sort: Sort,
    pub session: Option<String>,
    pub index: Option<u32>,
}

impl Atom {
    pub fn constant(name: impl Into<String>) -> Atom {
        Atom {
            name: name.into(),
            sort: Sort::Constant,
            session: None,
            index: None,
        }
    }

    pub fn variable(name: impl Into<String>) -> Atom {
        Atom {
            name: name.into(),
            sort: Sort::Variable,
            session: None,
            index: None,
        }
    }

    pub fn parameter(name: impl Into<String>, index: u32) -> Atom {
        Atom {
            name: name.into(),
            sort: Sort::Parameter,
            session: None,
            index: Some(index),
        }
    }

    /// Returns a copy carrying the session tag `tag`.
    pub fn with_session(mut self, tag: impl Into<String>) -> Atom {
        self.session = Some(tag.into());
        self
    }

    /// Returns a copy with the freshening index `index`.
    pub fn with_index(mut self, index: u32) -> Atom {
        self.index = Some(index);
        self
    }

    pub fn is_variable(&self) -> bool {
        self.sort == Sort::Variable
    }

    pub fn is_parameter(&self) -> bool {
        self.sort == Sort::Parameter
    }

    pub fn is_constant(&self) -> bool {
        self.sort == Sort::Constant
    }

    /// The declared constant this atom stands for (name only).
    pub fn base(&self) -> Atom {
        Atom::constant(self.name.clone())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if let Some(s) = &self.session {
            write!(f, "^{s}")?;
        }
        if let Some(i) = self.index {
            write!(f, "_{i}")?;
        }
        Ok(())
    }
}

/// A message term. Concatenations are kept flat: a `Concat` always has at
/// least two elements and none of them is `Empty` or another `Concat`.
/// Build values through [`Message::concat`] to keep that invariant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Message {
    Empty,
    Atom(Atom),
    Concat(Vec<Message>),
    Enc {
        body: Box<Message>,
        key: Atom,
        mode: KeyMode,
    },
}

impl From<Atom> for Message {
    fn from(a: Atom) -> Self {
        Message::Atom(a)
    }
}

impl Message {
    pub fn atom(a: Atom) -> Message {
        Message::Atom(a)
    }

    /// Flattening concatenation; drops `Empty` parts.
    pub fn concat(parts: impl IntoIterator<Item = Message>) -> Message {
        let mut items = Vec::new();
        for p in parts {
            match p {
                Message::Empty => {}
                Message::Concat(inner) => items.extend(inner),
                other => items.push(other),
            }
        }
        match items.len() {
            0 => Message::Empty,
            1 => items.pop().expect("one item"),
            _ => Message::Concat(items),
        }
    }

    pub fn enc(body: Message, key: Atom, mode: KeyMode) -> Message {
        Message::Enc {
            body: Box::new(body),
            key,
            mode,
        }
    }

    /// The flattened element list (empty for `Empty`).
    pub fn items(&self) -> Vec<Message> {
        match self {
            Message::Empty => Vec::new(),
            Message::Concat(v) => v.clone(),
            other => vec![other.clone()],
        }
    }

    pub fn items_ref(&self) -> &[Message] {
        match self {
            Message::Empty => &[],
            Message::Concat(v) => v,
            other => std::slice::from_ref(other),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Message::Empty)
    }

    /// All atoms, including encryption keys.
    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.visit_atoms(&mut |a, _| {
            out.insert(a.clone());
        });
        out
    }

    /// All atoms in order of first occurrence (bodies before keys).
    pub fn atoms_in_order(&self) -> Vec<Atom> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.visit_atoms(&mut |a, _| {
            if seen.insert(a.clone()) {
                out.push(a.clone());
            }
        });
        out
    }

    /// Atoms occurring outside key positions, in order of first occurrence.
    pub fn payload_atoms(&self) -> Vec<Atom> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.visit_atoms(&mut |a, is_key| {
            if !is_key && seen.insert(a.clone()) {
                out.push(a.clone());
            }
        });
        out
    }

    /// True when `a` occurs outside key positions.
    pub fn has_payload_atom(&self, a: &Atom) -> bool {
        match self {
            Message::Empty => false,
            Message::Atom(b) => a == b,
            Message::Concat(v) => v.iter().any(|m| m.has_payload_atom(a)),
            Message::Enc { body, .. } => body.has_payload_atom(a),
        }
    }

    pub fn contains_atom(&self, a: &Atom) -> bool {
        match self {
            Message::Empty => false,
            Message::Atom(b) => a == b,
            Message::Concat(v) => v.iter().any(|m| m.contains_atom(a)),
            Message::Enc { body, key, .. } => key == a || body.contains_atom(a),
        }
    }

    fn visit_atoms(&self, f: &mut impl FnMut(&Atom, bool)) {
        match self {
            Message::Empty => {}
            Message::Atom(a) => f(a, false),
            Message::Concat(v) => v.iter().for_each(|m| m.visit_atoms(f)),
            Message::Enc { body, key, .. } => {
                body.visit_atoms(f);
                f(key, true);
            }
        }
    }

    /// Atoms of sort `Variable`.
    pub fn variables(&self) -> BTreeSet<Atom> {
        self.atoms().into_iter().filter(|a| a.is_variable()).collect()
    }

    /// Atoms of sort `Parameter`.
    pub fn parameters(&self) -> BTreeSet<Atom> {
        self.atoms().into_iter().filter(|a| a.is_parameter()).collect()
    }

    pub fn is_ground(&self) -> bool {
        self.atoms().iter().all(|a| a.is_constant())
    }

    /// Number of atom occurrences, keys included.
    pub fn size(&self) -> usize {
        match self {
            Message::Empty => 0,
            Message::Atom(_) => 1,
            Message::Concat(v) => v.iter().map(Message::size).sum(),
            Message::Enc { body, .. } => body.size() + 1,
        }
    }

    /// Every subterm whose root is an encryption, outermost first.
    pub fn encryptions(&self) -> Vec<Message> {
        let mut out = Vec::new();
        self.collect_encryptions(&mut out);
        out
    }

    fn collect_encryptions(&self, out: &mut Vec<Message>) {
        match self {
            Message::Empty | Message::Atom(_) => {}
            Message::Concat(v) => v.iter().for_each(|m| m.collect_encryptions(out)),
            Message::Enc { body, .. } => {
                out.push(self.clone());
                body.collect_encryptions(out);
            }
        }
    }

    /// Renames atoms with `f`; keys are renamed too.
    pub fn map_atoms(&self, f: &mut impl FnMut(&Atom) -> Atom) -> Message {
        match self {
            Message::Empty => Message::Empty,
            Message::Atom(a) => Message::Atom(f(a)),
            Message::Concat(v) => Message::concat(v.iter().map(|m| m.map_atoms(f))),
            Message::Enc { body, key, mode } => Message::enc(body.map_atoms(f), f(key), *mode),
        }
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Empty => Ok(()),
            Message::Atom(a) => write!(f, "{a}"),
            Message::Concat(v) => {
                for (i, m) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ".")?;
                    }
                    write!(f, "{m}")?;
                }
                Ok(())
            }
            Message::Enc { body, key, .. } => write!(f, "{{{body}}}_{key}"),
        }
    }
}

/// Returns the atoms of a message.
pub fn atoms(m: &Message) -> BTreeSet<Atom> {
    m.atoms()
}

/// Returns the variables of a message.
pub fn variables_of(m: &Message) -> BTreeSet<Atom> {
    m.variables()
}

/// All encryption subterms of the given messages, deduplicated, in order
/// of first occurrence.
pub fn encryption_patterns<'a>(msgs: impl IntoIterator<Item = &'a Message>) -> Vec<Message> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for m in msgs {
        for e in m.encryptions() {
            if seen.insert(e.clone()) {
                out.push(e);
            }
        }
    }
    out
}

/// Inverse of a registered key; see [`VerificationContext::inverse_key`].
pub fn inverse_key(k: &Atom, ctx: &VerificationContext) -> Result<Atom> {
    ctx.inverse_key(k)
}

/// A finite mapping from variables and parameters to messages.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Substitution {
    map: BTreeMap<Atom, Message>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a substitution from pairs. Constants may not be bound.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Atom, Message)>) -> Self {
        let mut s = Substitution::new();
        for (a, m) in pairs {
            s.insert(a, m);
        }
        s
    }

    /// Adds a binding. Panics if `a` is a constant.
    pub fn insert(&mut self, a: Atom, m: Message) {
        assert!(!a.is_constant(), "constants cannot be bound");
        self.map.insert(a, m);
    }

    pub fn get(&self, a: &Atom) -> Option<&Message> {
        self.map.get(a)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Atom, &Message)> {
        self.map.iter()
    }

    pub fn domain(&self) -> impl Iterator<Item = &Atom> {
        self.map.keys()
    }

    /// Binds `a` to `m` and applies the new binding to existing values,
    /// keeping the substitution idempotent when `m` is already resolved.
    pub(crate) fn extend(&self, a: Atom, m: Message) -> Result<Substitution> {
        let single = Substitution::from_pairs([(a.clone(), m.clone())]);
        let mut map = BTreeMap::new();
        for (k, v) in &self.map {
            map.insert(k.clone(), substitute(v, &single)?);
        }
        map.insert(a, m);
        Ok(Substitution { map })
    }

    /// The restriction to parameter bindings.
    pub fn parameters_only(&self) -> Substitution {
        Substitution {
            map: self
                .map
                .iter()
                .filter(|(k, _)| k.is_parameter())
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Applies the substitution until a fixpoint is reached.
    pub fn apply_fully(&self, m: &Message) -> Result<Message> {
        let mut cur = m.clone();
        for _ in 0..=self.map.len() {
            let next = substitute(&cur, self)?;
            if next == cur {
                return Ok(cur);
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Returns an idempotent equivalent of a triangular substitution.
    pub fn resolved(&self) -> Result<Substitution> {
        let mut map = BTreeMap::new();
        for (k, v) in &self.map {
            map.insert(k.clone(), self.apply_fully(v)?);
        }
        Ok(Substitution { map })
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (k, v)) in self.map.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k} ↦ {v}")?;
        }
        write!(f, "}}")
    }
}

/// Simultaneous replacement of bound atoms.
pub fn substitute(m: &Message, s: &Substitution) -> Result<Message> {
    Ok(match m {
        Message::Empty => Message::Empty,
        Message::Atom(a) => s.get(a).cloned().unwrap_or_else(|| m.clone()),
        Message::Concat(v) => {
            let mut parts = Vec::with_capacity(v.len());
            for x in v {
                parts.push(substitute(x, s)?);
            }
            Message::concat(parts)
        }
        Message::Enc { body, key, mode } => {
            let key = match s.get(key) {
                None => key.clone(),
                Some(Message::Atom(k)) if !k.is_variable() => k.clone(),
                Some(other) => {
                    return Err(Error::SubstitutedIntoKeyPosition {
                        key: key.to_string(),
                        value: other.to_string(),
                    })
                }
            };
            Message::enc(substitute(body, s)?, key, *mode)
        }
    })
}

/// Declared identifiers available to the message parser.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    atoms: BTreeMap<String, Atom>,
    key_modes: BTreeMap<String, KeyMode>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, atom: Atom) {
        self.atoms.insert(atom.to_string(), atom);
    }

    pub fn declare_constant(&mut self, name: &str) -> Atom {
        let a = Atom::constant(name);
        self.declare(a.clone());
        a
    }

    pub fn declare_variable(&mut self, name: &str) -> Atom {
        let a = Atom::variable(name);
        self.declare(a.clone());
        a
    }

    pub fn declare_key(&mut self, name: &str, mode: KeyMode) -> Atom {
        self.key_modes.insert(name.to_string(), mode);
        self.declare_constant(name)
    }

    pub fn key_mode(&self, name: &str) -> Option<KeyMode> {
        self.key_modes.get(name).copied()
    }

    pub fn is_declared(&self, ident: &str) -> bool {
        self.atoms.contains_key(ident)
    }

    /// Resolves an identifier, accepting `base^tag` for session-tagged
    /// constants and `base_N` for indexed parameters or variables.
    pub fn resolve(&self, ident: &str) -> Option<Atom> {
        if let Some(a) = self.atoms.get(ident) {
            return Some(a.clone());
        }
        if let Some((base, idx)) = ident.rsplit_once('_') {
            if !idx.is_empty() && idx.chars().all(|c| c.is_ascii_digit()) {
                if let (Some(b), Ok(n)) = (self.resolve(base), idx.parse::<u32>()) {
                    let mut a = b;
                    a.index = Some(n);
                    if !a.is_variable() {
                        a.sort = Sort::Parameter;
                        a.session = None;
                    }
                    return Some(a);
                }
            }
        }
        if let Some((base, tag)) = ident.split_once('^') {
            if !tag.is_empty() {
                if let Some(b) = self.atoms.get(base) {
                    if b.is_constant() {
                        return Some(b.clone().with_session(tag));
                    }
                }
            }
        }
        None
    }
}

/// Parses a message written in the `{m}_k` / `a.b` grammar.
pub fn parse_message(text: &str, symbols: &SymbolTable) -> Result<Message> {
    let mut cur = Cursor::new(tokenize(text)?);
    let m = parse_msg(&mut cur, symbols)?;
    if !cur.at(&Tok::Eof) {
        return Err(cur.error("`.` or end of input"));
    }
    Ok(m)
}

pub(crate) fn parse_msg(cur: &mut Cursor, symbols: &SymbolTable) -> Result<Message> {
    if matches!(cur.peek().tok, Tok::RBrace | Tok::Eof) {
        return Ok(Message::Empty);
    }
    let mut parts = vec![parse_part(cur, symbols)?];
    while cur.eat(&Tok::Dot) {
        parts.push(parse_part(cur, symbols)?);
    }
    Ok(Message::concat(parts))
}

fn parse_part(cur: &mut Cursor, symbols: &SymbolTable) -> Result<Message> {
    match cur.peek().tok.clone() {
        Tok::Ident(_) => {
            let (name, line, col) = cur.ident()?;
            let a = symbols
                .resolve(&name)
                .ok_or(Error::UndeclaredIdentifier { name, line, col })?;
            Ok(Message::Atom(a))
        }
        Tok::LBrace => {
            cur.next();
            let body = parse_msg(cur, symbols)?;
            cur.expect(&Tok::RBrace)?;
            cur.expect(&Tok::Underscore)?;
            let braced = cur.eat(&Tok::LBrace);
            let (name, line, col) = cur.ident()?;
            if braced {
                cur.expect(&Tok::RBrace)?;
            }
            let key = symbols.resolve(&name).ok_or(Error::UndeclaredIdentifier {
                name: name.clone(),
                line,
                col,
            })?;
            if key.is_variable() {
                return Err(Error::VariableInKeyPosition { name, line, col });
            }
            let mode = symbols.key_mode(&key.name).unwrap_or(KeyMode::Symmetric);
            Ok(Message::enc(body, key, mode))
        }
        _ => Err(cur.error("an identifier or `{`")),
    }
}
