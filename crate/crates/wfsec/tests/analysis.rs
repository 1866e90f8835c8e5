//! Properties of role extraction and the conformity analysis on randomly
//! generated protocol scripts.

use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::sample::select;
use wfsec::{
    analyze, candidate_sources, generalized_message_space, parse_protocol, Action, Atom, Message, Protocol,
    RoleMode, SecurityLevel, SelectionInstance, Verdict,
};

const HEADER: &str = "protocol R;
principals A, B;
intruder I;
key ka inv ka-1;
key kb inv kb-1;
key kab;
fresh Na by A;
fresh Nb by B;
level Na = {A, B};
level Nb = {A, B};
level ka-1 = {A};
level kb-1 = {B};
level kab = {A, B};
";

fn payload() -> impl Strategy<Value = Vec<&'static str>> {
    prop::collection::vec(select(&["A", "B", "Na", "Nb"][..]), 1..4)
}

fn item() -> impl Strategy<Value = String> {
    prop_oneof![
        2 => select(&["A", "B"][..]).prop_map(str::to_string),
        3 => (payload(), select(&["ka", "kb", "kab"][..]))
            .prop_map(|(p, k)| format!("{{{}}}_{k}", p.join("."))),
    ]
}

fn step_message() -> impl Strategy<Value = String> {
    prop::collection::vec(item(), 1..3).prop_map(|v| v.join("."))
}

/// A protocol script with one to four steps between `A` and `B`.
fn script() -> impl Strategy<Value = String> {
    prop::collection::vec((any::<bool>(), step_message()), 1..5).prop_map(|steps| {
        let mut text = HEADER.to_string();
        for (i, (forward, m)) in steps.into_iter().enumerate() {
            let (s, r) = if forward { ("A", "B") } else { ("B", "A") };
            text.push_str(&format!("step {}: {s} -> {r} : {m};\n", i + 1));
        }
        text
    })
}

fn protocol() -> impl Strategy<Value = Protocol> {
    script().prop_filter_map("unparsable script", |t| parse_protocol(&t).ok())
}

fn variables(m: &Message) -> BTreeSet<Atom> {
    m.atoms().into_iter().filter(|a| a.is_variable()).collect()
}

fn enc_subterms(m: &Message, out: &mut Vec<Message>) {
    match m {
        Message::Concat(v) => v.iter().for_each(|x| enc_subterms(x, out)),
        Message::Enc { body, .. } => {
            out.push(m.clone());
            enc_subterms(body, out);
        }
        _ => {}
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn one_role_per_send_plus_a_closing_receive(p in protocol()) {
        let roles = p.roles(RoleMode::Auto).unwrap();
        let sends = roles.iter().filter(|r| r.ends_with_send()).count();
        prop_assert_eq!(sends, p.steps.len());
        for agent in ["A", "B"] {
            let mine: Vec<_> = roles.iter().filter(|r| r.agent.name == agent).collect();
            let closing = mine.iter().filter(|r| !r.ends_with_send()).count();
            prop_assert!(closing <= 1);
            if let Some(longest) = mine.iter().max_by_key(|r| r.steps.len()) {
                for r in &mine {
                    prop_assert_eq!(&longest.steps[..r.steps.len()], &r.steps[..]);
                }
                let last_is_recv = longest.steps.last().map(|s| s.action) == Some(Action::Recv);
                prop_assert_eq!(closing == 1, last_is_recv);
            }
        }
    }

    #[test]
    fn agents_share_no_variables(p in protocol()) {
        let roles = p.roles(RoleMode::Auto).unwrap();
        let vars_of = |agent: &str| -> BTreeSet<Atom> {
            roles
                .iter()
                .filter(|r| r.agent.name == agent)
                .flat_map(|r| r.messages().flat_map(variables).collect::<Vec<_>>())
                .collect()
        };
        prop_assert!(vars_of("A").is_disjoint(&vars_of("B")));
    }

    #[test]
    fn extraction_is_deterministic(t in script()) {
        if let (Ok(p), Ok(q)) = (parse_protocol(&t), parse_protocol(&t)) {
            prop_assert_eq!(p.roles(RoleMode::Auto).unwrap(), q.roles(RoleMode::Auto).unwrap());
            let a = analyze(&p, &SelectionInstance::Max, RoleMode::Auto);
            let b = analyze(&q, &SelectionInstance::Max, RoleMode::Auto);
            prop_assert_eq!(a.ok(), b.ok());
        }
    }

    #[test]
    fn every_encryption_has_a_source_pattern(p in protocol()) {
        let roles = p.roles(RoleMode::Auto).unwrap();
        let pool = generalized_message_space(&p, &roles);
        let all_enc = pool.iter().all(|m| matches!(m, Message::Enc { .. }));
        prop_assert!(all_enc);
        for r in &roles {
            for m in r.messages() {
                let mut encs = Vec::new();
                enc_subterms(m, &mut encs);
                for e in encs {
                    prop_assert!(
                        !candidate_sources(&e, &pool, &p.context, &BTreeSet::new()).is_empty(),
                        "no source for {}", e
                    );
                }
            }
        }
    }

    #[test]
    fn verdicts_follow_the_inequality(p in protocol()) {
        for inst in [SelectionInstance::Max, SelectionInstance::Ek, SelectionInstance::N] {
            let Ok(report) = analyze(&p, &inst, RoleMode::Auto) else { continue };
            for row in &report.rows {
                let required = row.required();
                let holds = row.lower_bound.geq(&required);
                prop_assert_eq!(holds, row.verdict == Verdict::Fulfilled);
                prop_assert_eq!(holds, row.blame.is_empty());
                let wider = row.lower_bound.meet(&SecurityLevel::names(["A", "B", "I"]));
                if !holds {
                    prop_assert!(!wider.geq(&required));
                }
            }
            let all = report.rows.iter().all(|r| r.verdict == Verdict::Fulfilled);
            prop_assert_eq!(all, report.verdict() == Verdict::Fulfilled);
        }
    }
}
