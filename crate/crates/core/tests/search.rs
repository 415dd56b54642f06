//! Search invariants over small stochastic environments.

use toolamp::amplifier::{library_to_jsonl, run, AmplificationResult, SearchConfig, ValidationEvaluator};
use toolamp::composition::Stage;
use toolamp::metrics::MetricId;
use toolamp::simenv::{gen_simenv, LeafSetEvaluator, SimEnvSpec, SimPolicy, SimTool};

fn tool(name: &str, p: f64) -> SimTool {
    SimTool { name: name.into(), p_correct: p, perturber: "substitute".into() }
}

fn search(seed: u64, parallel: bool) -> (AmplificationResult, SearchConfig, usize) {
    let spec = SimEnvSpec::new(
        80,
        vec![tool("A", 0.55), tool("B", 0.5), tool("C", 0.45)],
        SimPolicy { judge_accuracy: 0.8, modify_success: 0.25, reserve_prob: 0.05, modify_decay: 0.6 },
        seed,
    );
    let env = gen_simenv(&spec).unwrap();
    let config = SearchConfig { fitness_metric: MetricId::Exact, seed, parallel, ..Default::default() };
    let mut evaluator =
        ValidationEvaluator::new(env.registry().unwrap(), env.dataset.clone(), env.policy_factory(), &config);
    (run(&config, &env.tool_ids(), &mut evaluator).unwrap(), config, spec.tools.len())
}

#[test]
fn library_invariants_hold_across_seeds() {
    for seed in 0..4 {
        let (result, config, tools) = search(seed, false);
        let max = result.library.iter().map(|e| e.score).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(result.best.score, max);
        assert!(result.best.score >= result.best_atomic_score().unwrap());
        assert_eq!(result.library.iter().filter(|e| e.stage == Stage::Atomic).count(), tools);
        assert!(result.library.windows(2).all(|w| w[0].created_step < w[1].created_step));
        assert_eq!(result.per_candidate_reports.len(), result.library.len());

        let bound = tools * config.max_layers as usize + config.max_stage2_rounds as usize * config.top_k;
        assert!(result.composites_validated() <= bound, "{} > {bound}", result.composites_validated());

        for base in ["A", "B", "C"] {
            let mut chain: Vec<(u32, f64)> = result
                .library
                .iter()
                .filter(|e| matches!(e.stage, Stage::Atomic | Stage::Stage1))
                .filter(|e| e.tree.leaves()[0].leaf_id().is_some_and(|id| id.starts_with(&format!("{base}_"))))
                .map(|e| (e.tree.layers(), e.score))
                .collect();
            chain.sort_by_key(|c| c.0);
            let retained = &chain[..chain.len() - 1];
            assert!(retained.windows(2).all(|w| w[1].1 >= w[0].1 + config.delta), "{base}: {chain:?}");
        }

        let total: u64 = result.library.iter().map(|e| e.ledger.total_tokens()).sum();
        assert_eq!(result.total_ledger.total_tokens(), total);
    }
}

#[test]
fn serial_and_parallel_searches_agree() {
    let (serial, _, _) = search(7, false);
    let (parallel, _, _) = search(7, true);
    assert_eq!(library_to_jsonl(&serial.library), library_to_jsonl(&parallel.library));
    assert_eq!(serial.per_candidate_reports, parallel.per_candidate_reports);
}

#[test]
fn monotone_environment_needs_wide_pairing() {
    let scores = [("a_0", 0.5), ("a_1", 0.5), ("b_0", 0.4), ("b_1", 0.45), ("c_0", 0.3), ("c_1", 0.4)];
    let ids: Vec<String> = ["a_0", "b_0", "c_0"].map(String::from).to_vec();
    let wide =
        run(&SearchConfig { top_k: 5, ..Default::default() }, &ids, &mut LeafSetEvaluator::new(scores, 0.1)).unwrap();
    assert!((wide.best.score - 0.7).abs() < 1e-12);
    let narrow = run(&SearchConfig::default(), &ids, &mut LeafSetEvaluator::new(scores, 0.1)).unwrap();
    assert!(narrow.best.score >= narrow.best_atomic_score().unwrap());
}
