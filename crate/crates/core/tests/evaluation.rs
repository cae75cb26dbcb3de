mod common;

use common::*;
use ownership_norms::dsl::{Atom, Rule, TRASH};
use ownership_norms::eval::{eval_rule, eval_rule_set, eval_rules};
use ownership_norms::infer::{bayes_update, bayes_update_all, MIN_EVIDENCE};
use ownership_norms::logic::RuleSet;
use ownership_norms::world::{Permission, PermissionDb};
use proptest::prelude::*;

const TOL: f64 = 1e-12;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn rule_set_matches_enumeration((rules, facts) in scenario(3)) {
        let refs: Vec<&Rule> = rules.iter().collect();
        let expected = fire_probability(&refs, &facts);
        let set = RuleSet::from_rules(rules.iter().cloned());
        let got = eval_rules(&set, TRASH, &facts).unwrap();
        prop_assert!((got - expected).abs() <= TOL, "got {got}, expected {expected}");
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn single_rule_matches_enumeration((rules, facts) in scenario(1)) {
        for r in &rules {
            let expected = fire_probability(&[r], &facts);
            prop_assert!((eval_rule(r, &facts).unwrap() - expected).abs() <= TOL);
        }
    }

    #[test]
    fn posterior_matches_joint_enumeration((rules, facts) in scenario(3), forbid in any::<bool>()) {
        let refs: Vec<&Rule> = rules.iter().collect();
        let table = joint(&refs, &facts);
        let set = RuleSet::from_rules(rules.iter().cloned());
        for (i, (agent, prior)) in facts.ownership.iter().enumerate() {
            let consistent: Vec<_> = table.iter().filter(|(_, _, f)| *f == forbid).collect();
            let den: f64 = consistent.iter().map(|(_, w, _)| w).sum();
            let num: f64 = consistent.iter().filter(|(o, _, _)| o & (1 << i) != 0).map(|(_, w, _)| w).sum();
            let up = bayes_update(&set, TRASH, &facts, agent, forbid).unwrap();
            if den <= MIN_EVIDENCE {
                prop_assert!(up.inconsistent);
                prop_assert_eq!(up.posterior, *prior);
            } else {
                prop_assert!(!up.inconsistent);
                prop_assert!((up.posterior - num / den).abs() <= TOL, "{} vs {}", up.posterior, num / den);
            }
        }
    }

    #[test]
    fn unmentioned_agents_keep_their_prior(
        (rules, facts) in (2..=3usize).prop_flat_map(|n| (
            prop::collection::vec(
                prop::collection::vec(atom_strategy(n), 0..=3)
                    .prop_map(|atoms| atoms.into_iter().filter(|a| a.agent().is_some_and(|x| x != "a") || !a.is_ownership()).collect::<Vec<_>>())
                    .prop_filter_map("contradictory", |atoms| Rule::forbid(TRASH, atoms).ok()),
                0..=3),
            facts_strategy(n),
        )),
        forbid in any::<bool>(),
    ) {
        let set = RuleSet::from_rules(rules);
        let up = bayes_update(&set, TRASH, &facts, &"a".into(), forbid).unwrap();
        if !up.inconsistent {
            prop_assert!((up.posterior - up.prior).abs() <= TOL);
        }
    }

    #[test]
    fn joint_update_uses_pre_update_marginals((rules, facts) in scenario(3), forbid in any::<bool>()) {
        let set = RuleSet::from_rules(rules);
        let (out, _) = bayes_update_all(&set, TRASH, &facts, forbid).unwrap();
        for ((agent, _), (_, post)) in facts.ownership.iter().zip(&out.ownership) {
            let single = bayes_update(&set, TRASH, &facts, agent, forbid).unwrap();
            prop_assert_eq!(single.posterior, *post);
            prop_assert!((0.0..=1.0).contains(post));
        }
    }

    #[test]
    fn certain_permissions_override_rules((rules, facts) in scenario(2), forbid in any::<bool>()) {
        let set = RuleSet::from_rules(rules);
        let mut db = PermissionDb::default();
        let p = if forbid { Permission::forbid(TRASH, "o") } else { Permission::allow(TRASH, "o") };
        db.upsert(p, None);
        let got = eval_rule_set(&set, TRASH, &facts, Some(&db)).unwrap();
        prop_assert_eq!(got, if forbid { 1.0 } else { 0.0 });
    }
}

#[test]
fn empty_rules_allow_everything_and_flag_forbid_observations() {
    let f = facts(&AGENTS, &[0.3, 0.6, 0.9], Some("red"));
    let set = RuleSet::new();
    assert_eq!(eval_rules(&set, TRASH, &f).unwrap(), 0.0);
    let allow = bayes_update(&set, TRASH, &f, &"b".into(), false).unwrap();
    assert_eq!(allow.posterior, 0.6);
    assert!(!allow.inconsistent);
    assert!(bayes_update(&set, TRASH, &f, &"b".into(), true).unwrap().inconsistent);
}

#[test]
fn forbid_owned_by_any_with_uniform_priors() {
    let f = facts(&AGENTS[..2], &[0.5, 0.5], None);
    let set = RuleSet::from_rules([Rule::forbid(TRASH, [Atom::owned_by_any()]).unwrap()]);
    let up = bayes_update(&set, TRASH, &f, &"a".into(), true).unwrap();
    assert!((up.posterior - 2.0 / 3.0).abs() < TOL);
    let up = bayes_update(&set, TRASH, &f, &"a".into(), false).unwrap();
    assert_eq!(up.posterior, 0.0);
}
