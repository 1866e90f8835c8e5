//! Syntactic unification over flattened concatenations and the search for
//! candidate sources in a pool of encryption patterns.

use std::collections::BTreeSet;

use crate::context::VerificationContext;
use crate::term::{substitute, Atom, Message, Substitution};

/// Upper bound on the number of unifiers returned by [`unify_all`].
pub const DEFAULT_LIMIT: usize = 10_000;

const NODE_BUDGET: usize = 1_000_000;

/// Knobs for [`unify_all`].
#[derive(Debug, Clone)]
pub struct UnifyOptions<'a> {
    /// Atoms that behave like constants even if they are variables or
    /// parameters.
    pub rigid: BTreeSet<Atom>,
    /// When present, a parameter only binds to atoms of the same kind.
    pub ctx: Option<&'a VerificationContext>,
    /// Maximum number of unifiers to return.
    pub limit: usize,
}

impl Default for UnifyOptions<'_> {
    fn default() -> Self {
        UnifyOptions {
            rigid: BTreeSet::new(),
            ctx: None,
            limit: DEFAULT_LIMIT,
        }
    }
}

struct Search<'o, 'c> {
    opts: &'o UnifyOptions<'c>,
    seen: BTreeSet<Substitution>,
    out: Vec<Substitution>,
    nodes: usize,
}

impl Search<'_, '_> {
    fn done(&self) -> bool {
        self.out.len() >= self.opts.limit || self.nodes >= NODE_BUDGET
    }

    fn free_variable(&self, a: &Atom) -> bool {
        a.is_variable() && !self.opts.rigid.contains(a)
    }

    fn free_parameter(&self, a: &Atom) -> bool {
        a.is_parameter() && !self.opts.rigid.contains(a)
    }

    fn same_kind(&self, a: &Atom, b: &Atom) -> bool {
        self.opts.ctx.is_none_or(|c| c.kind_of(a) == c.kind_of(b))
    }

    /// Binds `a ↦ m` after applying `sigma` to `m`, with an occurs check.
    fn bind(&self, sigma: &Substitution, a: &Atom, m: Message) -> Option<Substitution> {
        let m = substitute(&m, sigma).ok()?;
        if m == Message::Atom(a.clone()) {
            return Some(sigma.clone());
        }
        if m.contains_atom(a) {
            return None;
        }
        sigma.extend(a.clone(), m).ok()
    }

    /// Unifies two atoms standing in key position or as single elements
    /// where no segment absorption is possible.
    fn unify_atoms(&self, sigma: &Substitution, a: &Atom, b: &Atom) -> Option<Substitution> {
        if a == b {
            return Some(sigma.clone());
        }
        if self.free_parameter(a) && !b.is_variable() && self.same_kind(a, b) {
            return self.bind(sigma, a, Message::Atom(b.clone()));
        }
        if self.free_parameter(b) && !a.is_variable() && self.same_kind(a, b) {
            return self.bind(sigma, b, Message::Atom(a.clone()));
        }
        None
    }

    fn solve(&mut self, sigma: Substitution, mut eqs: Vec<(Vec<Message>, Vec<Message>)>) {
        if self.done() {
            return;
        }
        self.nodes += 1;
        let Some((l, r)) = eqs.pop() else {
            if self.seen.insert(sigma.clone()) {
                self.out.push(sigma);
            }
            return;
        };
        let apply = |v: &[Message]| -> Option<Vec<Message>> {
            Some(substitute(&Message::concat(v.iter().cloned()), &sigma).ok()?.items())
        };
        let (Some(l), Some(r)) = (apply(&l), apply(&r)) else {
            return;
        };
        match (l.first(), r.first()) {
            (None, None) => self.solve(sigma, eqs),
            (None, Some(_)) | (Some(_), None) => {}
            (Some(h1), Some(h2)) => {
                if h1 == h2 {
                    eqs.push((l[1..].to_vec(), r[1..].to_vec()));
                    return self.solve(sigma, eqs);
                }
                let v1 = matches!(h1, Message::Atom(a) if self.free_variable(a));
                let v2 = matches!(h2, Message::Atom(a) if self.free_variable(a));
                if v1 || v2 {
                    if v1 {
                        let Message::Atom(x) = h1 else { unreachable!() };
                        self.absorb(&sigma, &eqs, x, &l[1..], &r, 1);
                    }
                    if v2 {
                        let Message::Atom(y) = h2 else { unreachable!() };
                        self.absorb(&sigma, &eqs, y, &r[1..], &l, if v1 { 2 } else { 1 });
                    }
                    return;
                }
                match (h1, h2) {
                    (Message::Atom(a), Message::Atom(b)) => {
                        if let Some(s) = self.unify_atoms(&sigma, a, b) {
                            eqs.push((l[1..].to_vec(), r[1..].to_vec()));
                            self.solve(s, eqs);
                        }
                    }
                    (Message::Enc { body: b1, key: k1, .. }, Message::Enc { body: b2, key: k2, .. }) => {
                        if let Some(s) = self.unify_atoms(&sigma, k1, k2) {
                            eqs.push((l[1..].to_vec(), r[1..].to_vec()));
                            eqs.push((b1.items(), b2.items()));
                            self.solve(s, eqs);
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    /// Lets variable `x` absorb `other[..k]` for every `k ≥ min`.
    fn absorb(
        &mut self,
        sigma: &Substitution,
        eqs: &[(Vec<Message>, Vec<Message>)],
        x: &Atom,
        rest: &[Message],
        other: &[Message],
        min: usize,
    ) {
        for k in min..=other.len() {
            if self.done() {
                return;
            }
            let seg = Message::concat(other[..k].iter().cloned());
            if let Some(s) = self.bind(sigma, x, seg) {
                let mut next = eqs.to_vec();
                next.push((rest.to_vec(), other[k..].to_vec()));
                self.solve(s, next);
            }
        }
    }
}

/// Every unifier of `a` and `b` up to `opts.limit`, in search order.
///
/// Variables absorb one or more consecutive elements of a flattened
/// concatenation; parameters bind to a single non-variable atom; constants
/// and atoms listed in `opts.rigid` never bind. Returned substitutions are
/// idempotent.
pub fn unify_all(a: &Message, b: &Message, opts: &UnifyOptions<'_>) -> Vec<Substitution> {
    let mut search = Search {
        opts,
        seen: BTreeSet::new(),
        out: Vec::new(),
        nodes: 0,
    };
    search.solve(Substitution::new(), vec![(a.items(), b.items())]);
    search.out
}

/// The first unifier found, if any.
pub fn unify(a: &Message, b: &Message) -> Option<Substitution> {
    let opts = UnifyOptions {
        limit: 1,
        ..UnifyOptions::default()
    };
    unify_all(a, b, &opts).into_iter().next()
}

/// A pool pattern that can produce the target, with the unifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    /// Position of the pattern in the pool.
    pub index: usize,
    pub source: Message,
    pub subst: Substitution,
}

/// Every `(pattern, unifier)` pair of the pool that unifies with `target`,
/// in pool order. Parameters are typed by `ctx`; atoms in `rigid` are
/// never bound.
pub fn candidate_sources(
    target: &Message,
    pool: &[Message],
    ctx: &VerificationContext,
    rigid: &BTreeSet<Atom>,
) -> Vec<Candidate> {
    let opts = UnifyOptions {
        rigid: rigid.clone(),
        ctx: Some(ctx),
        limit: DEFAULT_LIMIT,
    };
    let mut out = Vec::new();
    for (index, p) in pool.iter().enumerate() {
        for subst in unify_all(p, target, &opts) {
            out.push(Candidate {
                index,
                source: p.clone(),
                subst,
            });
        }
    }
    out
}
