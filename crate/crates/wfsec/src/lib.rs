//! Static secrecy analysis of cryptographic protocols with witness
//! functions.

pub mod cli;
pub mod context;
pub mod derive;
pub mod error;
mod lexer;
pub mod oracle;
pub mod rewrite;
pub mod roles;
pub mod selection;
pub mod term;
pub mod unify;
pub mod witness;

pub use context::{geq, join, meet, AtomKind, KeyInfo, SecurityLevel, VerificationContext};
pub use derive::{derive, derive_all_vars, derive_except, f_derivative};
pub use error::{Error, Result};
pub use rewrite::{
    access, check_well_protected, clear_atoms, keys_of, normalize, validate_rewrite_system, KeySetFamily,
    RewriteRule, WellProtectedReport,
};
pub use selection::{interpret, interpret_set, psi, select, FunctionName, SelectionInstance, SelectionResult};
pub use term::{
    atoms, encryption_patterns, inverse_key, parse_message, substitute, variables_of, Atom, KeyMode, Message, Sort,
    Substitution, SymbolTable,
};
pub use unify::{candidate_sources, unify, unify_all, Candidate, UnifyOptions};
pub use roles::{
    extract_generalized_roles, generalized_message_space, parse_protocol, Action, GeneralizedRole, Protocol, RoleMode,
    RoleStep, Step,
};
pub use witness::{
    analyze, lower_bound, upper_bound, witness_value, AnalysisReport, AtomLevel, CriterionRow, Verdict,
};
pub use oracle::{
    check_full_invariance, check_full_invariance_on, check_non_disclosure, deduce_closure, Closure, OracleConfig,
    PropertyReport,
};
