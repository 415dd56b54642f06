//! Seeded synthetic environments: random-string tasks answered by noisy oracle tools,
//! and a deterministic leaf-set environment for exact search checks.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::PlannerPolicy;
use crate::amplifier::{AmpError, CandidateEvaluator};
use crate::composition::{CompositionTree, PolicyFactory};
use crate::dataset::{gold_map, ValidationInstance};
use crate::hashing::derive_seed;
use crate::metrics::{MetricId, ScoreReport, TaskKind};
use crate::toolkit::{BackendKind, CostLedger, ToolDescriptor, ToolError, ToolRegistry};

#[derive(Debug, Error)]
pub enum SimEnvError {
    #[error("invalid environment spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTool {
    pub name: String,
    pub p_correct: f64,
    #[serde(default = "default_perturber")]
    pub perturber: String,
}

fn default_perturber() -> String {
    "substitute".into()
}

/// Planner behavior of every agent the environment's composites instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimPolicy {
    pub judge_accuracy: f64,
    pub modify_success: f64,
    pub reserve_prob: f64,
    /// Agents at stacking level `i` repair with `modify_success * modify_decay^(i-1)`.
    pub modify_decay: f64,
}

impl Default for SimPolicy {
    fn default() -> Self {
        SimPolicy { judge_accuracy: 1.0, modify_success: 0.0, reserve_prob: 0.0, modify_decay: 1.0 }
    }
}

impl SimPolicy {
    pub fn at_layer(&self, layers: u32) -> PlannerPolicy {
        let m = self.modify_success * self.modify_decay.powi(layers.saturating_sub(1) as i32);
        PlannerPolicy::simulated(self.judge_accuracy, m, self.reserve_prob)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEnvSpec {
    #[serde(default = "default_task")]
    pub task_kind: TaskKind,
    pub n_instances: usize,
    #[serde(default = "default_alphabet")]
    pub alphabet: String,
    #[serde(default = "default_answer_length")]
    pub answer_length: usize,
    pub tools: Vec<SimTool>,
    #[serde(default)]
    pub policy: SimPolicy,
    #[serde(default)]
    pub seed: u64,
}

fn default_task() -> TaskKind {
    TaskKind::MoleculeDesign
}

fn default_alphabet() -> String {
    "CNOS".into()
}

fn default_answer_length() -> usize {
    8
}

impl SimEnvSpec {
    pub fn new(n_instances: usize, tools: Vec<SimTool>, policy: SimPolicy, seed: u64) -> Self {
        SimEnvSpec {
            task_kind: default_task(),
            n_instances,
            alphabet: default_alphabet(),
            answer_length: default_answer_length(),
            tools,
            policy,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimEnvError> {
        let bad = |m: String| Err(SimEnvError::Invalid(m));
        if self.n_instances == 0 {
            return bad("n_instances must be at least 1".into());
        }
        if self.answer_length == 0 {
            return bad("answer_length must be at least 1".into());
        }
        if self.alphabet.chars().collect::<HashSet<_>>().len() < 2 {
            return bad("alphabet needs at least two distinct symbols".into());
        }
        let p = &self.policy;
        for (name, v) in [
            ("judge_accuracy", p.judge_accuracy),
            ("modify_success", p.modify_success),
            ("reserve_prob", p.reserve_prob),
            ("modify_decay", p.modify_decay),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        let mut names = HashSet::new();
        for t in &self.tools {
            if !(0.0..=1.0).contains(&t.p_correct) {
                return bad(format!("tool {}: p_correct must lie in [0, 1]", t.name));
            }
            if t.name.is_empty() || t.name.contains(['\'', '"', '[', ']', ',']) {
                return bad(format!("tool name `{}` is not usable in composition names", t.name));
            }
            if !names.insert(&t.name) {
                return bad(format!("duplicate tool `{}`", t.name));
            }
        }
        Ok(())
    }
}

/// A generated environment: dataset, atomic tools and the policy to build agents with.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEnv {
    pub spec: SimEnvSpec,
    pub dataset: Vec<ValidationInstance>,
    pub descriptors: Vec<ToolDescriptor>,
}

impl SimEnv {
    pub fn tool_ids(&self) -> Vec<String> {
        self.descriptors.iter().map(|d| d.tool_id.clone()).collect()
    }

    /// Registry with the atomic tools registered and the answer key installed.
    pub fn registry(&self) -> Result<ToolRegistry, SimEnvError> {
        let mut registry = ToolRegistry::new(self.spec.task_kind.as_str());
        registry.set_gold(gold_map(&self.dataset));
        for d in &self.descriptors {
            registry.register_tool(d.clone())?;
        }
        Ok(registry)
    }

    pub fn policy_factory(&self) -> Box<dyn PolicyFactory> {
        let policy = self.spec.policy;
        Box::new(move |_: &CompositionTree, layers: u32| policy.at_layer(layers))
    }
}

/// Generates gold answers as random strings over the alphabet and one noisy-oracle
/// tool `name_0` per tool entry. Fully determined by the spec.
pub fn gen_simenv(spec: &SimEnvSpec) -> Result<SimEnv, SimEnvError> {
    spec.validate()?;
    let alphabet: Vec<char> = spec.alphabet.chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &["simenv-gold"]));
    let dataset = (0..spec.n_instances)
        .map(|i| {
            let gold: String = (0..spec.answer_length).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
            ValidationInstance {
                id: format!("sim-{i:05}"),
                input: format!("query-{i:05}"),
                gold,
                task_kind: spec.task_kind,
                metadata: BTreeMap::new(),
            }
        })
        .collect();
    let descriptors = spec
        .tools
        .iter()
        .map(|t| {
            ToolDescriptor::new(format!("{}_0", t.name), BackendKind::NoisyOracle)
                .with_param("p", t.p_correct.to_string())
                .with_param("perturber", t.perturber.clone())
                .with_param("alphabet", spec.alphabet.clone())
                .with_description(format!("Answers {} questions.", spec.task_kind))
        })
        .collect();
    Ok(SimEnv { spec: spec.clone(), dataset, descriptors })
}

/// Deterministic environment where a tree's score depends only on its leaves: the best
/// leaf score plus `bonus` for every additional distinct base tool, capped at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafSetEvaluator {
    /// Score per leaf id `base_k`. Undefined layers inherit the nearest defined one below.
    pub leaf_scores: BTreeMap<String, f64>,
    pub bonus: f64,
    pub metric: MetricId,
}

impl LeafSetEvaluator {
    pub fn new(leaf_scores: impl IntoIterator<Item = (&'static str, f64)>, bonus: f64) -> Self {
        LeafSetEvaluator {
            leaf_scores: leaf_scores.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            bonus,
            metric: MetricId::Accuracy,
        }
    }

    fn leaf_score(&self, base: &str, suffix: u32) -> Option<f64> {
        (0..=suffix).rev().find_map(|k| self.leaf_scores.get(&format!("{base}_{k}")).copied())
    }

    pub fn value(&self, tree: &CompositionTree) -> Result<f64, AmpError> {
        let mut best = f64::NEG_INFINITY;
        let mut bases = BTreeSet::new();
        for leaf in tree.leaves() {
            let CompositionTree::Leaf { base_name, depth_suffix } = leaf else { unreachable!() };
            let s = self
                .leaf_score(base_name, *depth_suffix)
                .ok_or_else(|| AmpError::Config(format!("no score for leaf {}", leaf.leaf_id().unwrap_or_default())))?;
            best = best.max(s);
            bases.insert(base_name.as_str());
        }
        Ok((best + self.bonus * (bases.len() as f64 - 1.0)).min(1.0))
    }
}

impl CandidateEvaluator for LeafSetEvaluator {
    fn score(&self, tree: &CompositionTree) -> Result<(ScoreReport, CostLedger), AmpError> {
        let v = self.value(tree)?;
        let report = ScoreReport {
            means: BTreeMap::from([(self.metric, v)]),
            count: 1,
            fitness_metric: self.metric,
            fitness: v,
            failures: 0,
            reserved: 0,
        };
        Ok((report, CostLedger::default()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplifier::score_candidate;
    use crate::dataset::dataset_to_jsonl;

    fn tool(name: &str, p: f64) -> SimTool {
        SimTool { name: name.into(), p_correct: p, perturber: default_perturber() }
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SimEnvSpec::new(50, vec![tool("A", 0.7)], SimPolicy::default(), 4);
        let a = gen_simenv(&spec).unwrap();
        let b = gen_simenv(&spec).unwrap();
        assert_eq!(dataset_to_jsonl(&a.dataset), dataset_to_jsonl(&b.dataset));
        let c = gen_simenv(&SimEnvSpec { seed: 5, ..spec }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn perfect_tool_scores_one() {
        let env = gen_simenv(&SimEnvSpec::new(40, vec![tool("P", 1.0)], SimPolicy::default(), 1)).unwrap();
        let reg = env.registry().unwrap();
        let (report, _) = score_candidate(&reg, "P_0", &env.dataset, MetricId::Exact, 0, false).unwrap();
        assert_eq!(report.fitness, 1.0);
    }

    #[test]
    fn invalid_specs_rejected() {
        let ok = SimEnvSpec::new(1, vec![tool("A", 0.5)], SimPolicy::default(), 0);
        assert!(gen_simenv(&SimEnvSpec { n_instances: 0, ..ok.clone() }).is_err());
        assert!(gen_simenv(&SimEnvSpec { alphabet: "CC".into(), ..ok.clone() }).is_err());
        assert!(gen_simenv(&SimEnvSpec { tools: vec![tool("A", 1.5)], ..ok.clone() }).is_err());
        assert!(gen_simenv(&SimEnvSpec { tools: vec![tool("A", 0.1), tool("A", 0.2)], ..ok.clone() }).is_err());
        assert!(gen_simenv(&SimEnvSpec { tools: vec![tool("A'", 0.1)], ..ok }).is_err());
    }

    #[test]
    fn layer_policies_decay() {
        let p = SimPolicy { modify_success: 0.3, modify_decay: 0.5, ..SimPolicy::default() };
        assert_eq!(p.at_layer(1).modify_success, 0.3);
        assert_eq!(p.at_layer(3).modify_success, 0.075);
    }

    #[test]
    fn leaf_set_values() {
        let ev = LeafSetEvaluator::new([("a_0", 0.5), ("b_0", 0.4), ("b_1", 0.45)], 0.1);
        let t = |s: &str| crate::composition::parse_name(s).unwrap();
        assert_eq!(ev.value(&t("['a_0']")).unwrap(), 0.5);
        assert_eq!(ev.value(&t("['b_3']")).unwrap(), 0.45);
        assert!((ev.value(&t("[['a_0', 'b_0'], 'a_1']")).unwrap() - 0.6).abs() < 1e-12);
        assert!(ev.value(&t("['z_0']")).is_err());
    }
}
