//! Security lattice over sets of principals and the verification context.
//!
//! Levels are ordered by reverse inclusion: a level with fewer principals
//! is more secret. `⊥` is the whole principal universe and `⊤` is the empty
//! set. The universe is open because indexed parameters such as `A_3`
//! stand for arbitrary principals, so `⊥` is kept as a distinct variant
//! instead of a finite enumeration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rewrite::RewriteRule;
use crate::term::{Atom, KeyMode, SymbolTable};

/// An element of the powerset lattice of principals.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SecurityLevel {
    /// Every principal may know the value (public).
    Bottom,
    /// Exactly these principals may know the value; the empty set is `⊤`.
    Finite(BTreeSet<Atom>),
}

impl SecurityLevel {
    pub fn top() -> SecurityLevel {
        SecurityLevel::Finite(BTreeSet::new())
    }

    pub fn bottom() -> SecurityLevel {
        SecurityLevel::Bottom
    }

    pub fn of(atoms: impl IntoIterator<Item = Atom>) -> SecurityLevel {
        SecurityLevel::Finite(atoms.into_iter().collect())
    }

    /// Convenience constructor from principal names.
    pub fn names<'a>(names: impl IntoIterator<Item = &'a str>) -> SecurityLevel {
        SecurityLevel::of(names.into_iter().map(Atom::constant))
    }

    pub fn is_top(&self) -> bool {
        matches!(self, SecurityLevel::Finite(s) if s.is_empty())
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, SecurityLevel::Bottom)
    }

    /// `self ⊒ other`, i.e. `set(self) ⊆ set(other)`.
    pub fn geq(&self, other: &SecurityLevel) -> bool {
        match (self, other) {
            (_, SecurityLevel::Bottom) => true,
            (SecurityLevel::Bottom, SecurityLevel::Finite(_)) => false,
            (SecurityLevel::Finite(a), SecurityLevel::Finite(b)) => a.is_subset(b),
        }
    }

    /// Greatest lower bound: set union.
    pub fn meet(&self, other: &SecurityLevel) -> SecurityLevel {
        match (self, other) {
            (SecurityLevel::Bottom, _) | (_, SecurityLevel::Bottom) => SecurityLevel::Bottom,
            (SecurityLevel::Finite(a), SecurityLevel::Finite(b)) => {
                SecurityLevel::Finite(a.union(b).cloned().collect())
            }
        }
    }

    /// Least upper bound: set intersection.
    pub fn join(&self, other: &SecurityLevel) -> SecurityLevel {
        match (self, other) {
            (SecurityLevel::Bottom, x) | (x, SecurityLevel::Bottom) => x.clone(),
            (SecurityLevel::Finite(a), SecurityLevel::Finite(b)) => {
                SecurityLevel::Finite(a.intersection(b).cloned().collect())
            }
        }
    }

    /// Meet over an iterator; `⊤` for an empty iterator.
    pub fn meet_all(levels: impl IntoIterator<Item = SecurityLevel>) -> SecurityLevel {
        levels
            .into_iter()
            .fold(SecurityLevel::top(), |acc, l| acc.meet(&l))
    }

    /// Members of a finite level; `None` for `⊥`.
    pub fn members(&self) -> Option<&BTreeSet<Atom>> {
        match self {
            SecurityLevel::Bottom => None,
            SecurityLevel::Finite(s) => Some(s),
        }
    }

    pub fn contains(&self, a: &Atom) -> bool {
        match self {
            SecurityLevel::Bottom => true,
            SecurityLevel::Finite(s) => s.contains(a),
        }
    }
}

impl fmt::Display for SecurityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SecurityLevel::Bottom => write!(f, "⊥"),
            SecurityLevel::Finite(s) if s.is_empty() => write!(f, "⊤"),
            SecurityLevel::Finite(s) => {
                write!(f, "{{")?;
                for (i, a) in s.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// Free-function form of [`SecurityLevel::geq`].
pub fn geq(a: &SecurityLevel, b: &SecurityLevel) -> bool {
    a.geq(b)
}

/// Free-function form of [`SecurityLevel::meet`].
pub fn meet(a: &SecurityLevel, b: &SecurityLevel) -> SecurityLevel {
    a.meet(b)
}

/// Free-function form of [`SecurityLevel::join`].
pub fn join(a: &SecurityLevel, b: &SecurityLevel) -> SecurityLevel {
    a.join(b)
}

/// Coarse classification of declared names, used to keep parameters from
/// being instantiated with values of a different nature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AtomKind {
    Principal,
    Key,
    Data,
}

/// Registration of one key: its inverse and whether it is symmetric.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyInfo {
    pub inverse: String,
    pub mode: KeyMode,
    /// True for the half that must carry a declared level.
    pub private: bool,
}

/// Principals, intruder, level assignment, key inverses and rewrite rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationContext {
    principals: BTreeSet<String>,
    intruder: String,
    levels: BTreeMap<String, SecurityLevel>,
    keys: BTreeMap<String, KeyInfo>,
    constants: BTreeSet<String>,
    rules: Vec<RewriteRule>,
}

impl VerificationContext {
    /// A context with the given intruder (also registered as principal)
    /// and the default cancellation rule.
    pub fn new(intruder: &str) -> Self {
        let mut ctx = VerificationContext {
            principals: BTreeSet::new(),
            intruder: intruder.to_string(),
            levels: BTreeMap::new(),
            keys: BTreeMap::new(),
            constants: BTreeSet::new(),
            rules: vec![RewriteRule::Cancellation],
        };
        ctx.add_principal(intruder);
        ctx
    }

    /// Replaces the intruder; the previous intruder stops being a principal.
    pub fn set_intruder(&mut self, name: &str) {
        let old = std::mem::replace(&mut self.intruder, name.to_string());
        self.principals.remove(&old);
        self.constants.remove(&old);
        self.add_principal(name);
    }

    pub fn add_principal(&mut self, name: &str) -> Atom {
        self.principals.insert(name.to_string());
        self.constants.insert(name.to_string());
        Atom::constant(name)
    }

    /// Registers a plain (non-key) constant such as a nonce.
    pub fn add_constant(&mut self, name: &str) -> Atom {
        self.constants.insert(name.to_string());
        Atom::constant(name)
    }

    /// Registers an asymmetric pair `public`/`private`.
    pub fn add_key_pair(&mut self, public: &str, private: &str) -> (Atom, Atom) {
        self.keys.insert(
            public.to_string(),
            KeyInfo {
                inverse: private.to_string(),
                mode: KeyMode::Asymmetric,
                private: false,
            },
        );
        self.keys.insert(
            private.to_string(),
            KeyInfo {
                inverse: public.to_string(),
                mode: KeyMode::Asymmetric,
                private: true,
            },
        );
        self.constants.insert(public.to_string());
        self.constants.insert(private.to_string());
        (Atom::constant(public), Atom::constant(private))
    }

    /// Registers a self-inverse key.
    pub fn add_symmetric_key(&mut self, name: &str) -> Atom {
        self.keys.insert(
            name.to_string(),
            KeyInfo {
                inverse: name.to_string(),
                mode: KeyMode::Symmetric,
                private: true,
            },
        );
        self.constants.insert(name.to_string());
        Atom::constant(name)
    }

    /// Declares `⌈name⌉ = level`.
    pub fn set_level(&mut self, name: &str, level: SecurityLevel) {
        self.levels.insert(name.to_string(), level);
    }

    pub fn set_rules(&mut self, rules: Vec<RewriteRule>) {
        self.rules = rules;
    }

    pub fn rules(&self) -> &[RewriteRule] {
        &self.rules
    }

    pub fn intruder(&self) -> Atom {
        Atom::constant(self.intruder.clone())
    }

    pub fn principals(&self) -> BTreeSet<Atom> {
        self.principals.iter().map(Atom::constant).collect()
    }

    /// True for principal identities, including indexed parameters such
    /// as `A_3`. Variables are never principals.
    pub fn is_principal(&self, a: &Atom) -> bool {
        !a.is_variable() && self.principals.contains(&a.name)
    }

    pub fn is_key(&self, a: &Atom) -> bool {
        !a.is_variable() && self.keys.contains_key(&a.name)
    }

    pub fn key_info(&self, name: &str) -> Option<&KeyInfo> {
        self.keys.get(name)
    }

    pub fn key_names(&self) -> impl Iterator<Item = &String> {
        self.keys.keys()
    }

    pub fn constant_names(&self) -> impl Iterator<Item = &String> {
        self.constants.iter()
    }

    pub fn kind_of(&self, a: &Atom) -> AtomKind {
        if self.is_principal(a) {
            AtomKind::Principal
        } else if self.is_key(a) {
            AtomKind::Key
        } else {
            AtomKind::Data
        }
    }

    /// The declared level, or the public default. Variables have no
    /// declared level and are reported as `⊥` here; the criterion treats
    /// them symbolically.
    pub fn level_of(&self, a: &Atom) -> SecurityLevel {
        if a.is_variable() {
            return SecurityLevel::Bottom;
        }
        self.levels
            .get(&a.name)
            .cloned()
            .unwrap_or(SecurityLevel::Bottom)
    }

    pub fn declared_level(&self, name: &str) -> Option<&SecurityLevel> {
        self.levels.get(name)
    }

    /// True iff the intruder belongs to `⌈a⌉`.
    pub fn intruder_allowed(&self, a: &Atom) -> bool {
        self.level_of(a).contains(&self.intruder())
    }

    /// The inverse key, preserving sort, session tag and index.
    pub fn inverse_key(&self, k: &Atom) -> Result<Atom> {
        let info = self
            .keys
            .get(&k.name)
            .filter(|_| !k.is_variable())
            .ok_or_else(|| Error::NotAKey { atom: k.to_string() })?;
        let mut inv = k.clone();
        inv.name = info.inverse.clone();
        Ok(inv)
    }

    /// Atomic initial knowledge of the intruder: every declared constant
    /// whose level admits the intruder.
    pub fn intruder_knowledge(&self) -> BTreeSet<Atom> {
        self.constants
            .iter()
            .map(Atom::constant)
            .filter(|a| self.intruder_allowed(a))
            .collect()
    }

    /// Symbol table with every declared constant and key.
    pub fn symbols(&self) -> SymbolTable {
        let mut t = SymbolTable::new();
        for c in &self.constants {
            match self.keys.get(c) {
                Some(info) => {
                    t.declare_key(c, info.mode);
                }
                None => {
                    t.declare_constant(c);
                }
            }
        }
        t
    }

    /// Checks the structural invariants: the intruder is a principal and
    /// every key whose inverse is secret has a declared level.
    pub fn validate(&self) -> Result<()> {
        if !self.principals.contains(&self.intruder) {
            return Err(Error::Context(format!(
                "intruder `{}` is not a principal",
                self.intruder
            )));
        }
        for (name, info) in &self.keys {
            if self.keys.get(&info.inverse).map(|i| &i.inverse) != Some(name) {
                return Err(Error::Context(format!(
                    "key inverse of `{name}` is not an involution"
                )));
            }
            if info.private && !self.levels.contains_key(name) {
                return Err(Error::UnleveledKey { key: name.clone() });
            }
        }
        Ok(())
    }
}
