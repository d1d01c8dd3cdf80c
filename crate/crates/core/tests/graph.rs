mod common;

use proptest::prelude::*;
use rand::Rng;

use common::{membership_discrepancies, random_goal, random_system_actions};
use todsim_core::decoder::{build_graph, Position};
use todsim_core::generator::{PolicyParameters, RuleGenerator, StochasticGenerator, TemplateTable};
use todsim_core::goal::update_on_system;
use todsim_core::{dialogue_rng, Continuation, Generator, InputContext, Ontology};

fn ontology(which: bool) -> Ontology {
    if which {
        common::sgd()
    } else {
        common::multiwoz()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn validation_matches_enumeration(sgd in any::<bool>(), seed in any::<u64>()) {
        let o = ontology(sgd);
        let mut rng = dialogue_rng(seed, 0);
        let g = random_goal(&o, &mut rng);
        let sys = random_system_actions(&o, &g, &mut rng);
        prop_assert_eq!(membership_discrepancies(&o, &g, &sys, 300, &mut rng), 0);
    }

    #[test]
    fn continuation_walks_end_in_legal_lists(sgd in any::<bool>(), seed in any::<u64>()) {
        let o = ontology(sgd);
        let mut rng = dialogue_rng(seed, 1);
        let g = random_goal(&o, &mut rng);
        let sys = random_system_actions(&o, &g, &mut rng);
        let cg = build_graph(&o, &g, &sys);
        let mut done = Vec::new();
        loop {
            let opts = cg.legal_continuations(&done, Position::Boundary).unwrap();
            if !opts.contains(&Continuation::Continue) || rng.random_bool(0.3) {
                break;
            }
            let mut fields: Vec<String> = Vec::new();
            for _ in 0..4 {
                let position = match fields.as_slice() {
                    [] => Position::Intent,
                    [i] => Position::Domain { intent: i },
                    [i, d] => Position::Slot { intent: i, domain: d },
                    [i, d, s, ..] => Position::Value { intent: i, domain: d, slot: s },
                };
                let opts = cg.legal_continuations(&done, position).unwrap();
                prop_assert!(!opts.is_empty());
                let Continuation::Field(f) = &opts[rng.random_range(0..opts.len())] else {
                    panic!("field position offered a non-field option");
                };
                fields.push(f.clone());
            }
            let [i, d, s, v]: [String; 4] = fields.try_into().unwrap();
            done.push(todsim_core::SemanticAction::new(i, d, s, v));
            prop_assert!(cg.is_legal(&done), "{:?}", done);
        }
        prop_assert!(common::mask_admits(&cg, &done));
    }

    #[test]
    fn mask_rejects_actions_outside_the_graph(seed in any::<u64>()) {
        let o = common::multiwoz();
        let mut rng = dialogue_rng(seed, 2);
        let g = random_goal(&o, &mut rng);
        let cg = build_graph(&o, &g, &[]);
        let mut a = cg.paths()[0].clone();
        a.value = "not-a-value".into();
        prop_assert!(!common::mask_admits(&cg, &[a]));
    }

    #[test]
    fn internal_generators_stay_in_the_graph(sgd in any::<bool>(), seed in any::<u64>()) {
        let o = ontology(sgd);
        let mut rng = dialogue_rng(seed, 3);
        let g = random_goal(&o, &mut rng);
        let sys = random_system_actions(&o, &g, &mut rng);
        let (g, _) = update_on_system(&g, &sys, &o, &mut rng);
        let cg = build_graph(&o, &g, &sys);
        let ctx = InputContext::new(sys, vec![], g, 1);
        let mut gens: Vec<Box<dyn Generator>> = vec![
            Box::new(RuleGenerator::default()),
            Box::new(StochasticGenerator::new(PolicyParameters::rule_like(), TemplateTable::builtin())),
            Box::new(StochasticGenerator::new(PolicyParameters::zeros(), TemplateTable::builtin())),
        ];
        for gen in &mut gens {
            let out = gen.generate(&ctx, &cg, &o, &mut rng).unwrap();
            prop_assert!(cg.is_legal(&out.record.action), "{}: {:?}", gen.name(), cg.validate_action_list(&out.record.action));
        }
    }

    #[test]
    fn random_alternative_differs_and_is_legal(sgd in any::<bool>(), seed in any::<u64>()) {
        let o = ontology(sgd);
        let mut rng = dialogue_rng(seed, 4);
        for (d, schema) in o.domains() {
            for (s, slot) in &schema.slots {
                let pool = slot.sampling_pool();
                if pool.len() < 2 {
                    continue;
                }
                let exclude = &pool[rng.random_range(0..pool.len())];
                let alt = o.random_alternative(d, s, exclude, &mut rng).unwrap();
                prop_assert_ne!(&alt, exclude);
                prop_assert!(pool.contains(&alt));
            }
        }
    }
}

#[test]
fn enumeration_counts_ordered_lists() {
    let o = common::multiwoz();
    let mut rng = dialogue_rng(9, 0);
    let g = random_goal(&o, &mut rng);
    let cg = build_graph(&o, &g, &[]);
    let n = cg.path_count() as u64;
    assert_eq!(cg.count_legal(2), 1 + n + n * (n - 1));
    assert_eq!(cg.enumerate_legal(2).unwrap().len() as u64, cg.count_legal(2));
}
