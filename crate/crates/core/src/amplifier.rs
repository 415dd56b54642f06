//! Two-stage tool amplification.
//!
//! Stage 1 wraps each atomic tool in successive agent layers while each layer improves
//! the validation score by at least `delta`. Stage 2 repeatedly takes the best library
//! entry, composes it with each of the next `top_k` entries, and keeps going while the
//! best new composite beats the global best.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::RESERVE_ANSWER;
use crate::composition::{
    encapsulate, instantiate_with, serialize_name, CompositionError, CompositionTree, LibraryEntry, PolicyFactory,
    Stage, Stage1Arity,
};
use crate::dataset::ValidationInstance;
use crate::hashing::derive_seed;
use crate::metrics::{aggregate, failure_scores, score_instance, MetricId, MetricsError, ScoreReport};
use crate::toolkit::{CostLedger, ToolError, ToolRegistry};

#[derive(Debug, Error)]
pub enum AmpError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Minimum stage-1 gain required to add another layer.
    pub delta: f64,
    pub top_k: usize,
    pub max_layers: u32,
    pub max_stage2_rounds: u32,
    pub fitness_metric: MetricId,
    pub seed: u64,
    pub stage1_arity: Stage1Arity,
    /// Score instances and stage-2 candidates on the rayon pool.
    pub parallel: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            delta: 0.01,
            top_k: 3,
            max_layers: 8,
            max_stage2_rounds: 5,
            fitness_metric: MetricId::Bleu2,
            seed: 0,
            stage1_arity: Stage1Arity::WithBase,
            parallel: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), AmpError> {
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(AmpError::Config(format!("delta must be finite and >= 0, got {}", self.delta)));
        }
        if self.top_k == 0 || self.max_layers == 0 || self.max_stage2_rounds == 0 {
            return Err(AmpError::Config("top_k, max_layers and max_stage2_rounds must be >= 1".into()));
        }
        if !self.fitness_metric.higher_is_better() {
            return Err(AmpError::Config(format!(
                "{} is a distance and cannot be the fitness metric",
                self.fitness_metric
            )));
        }
        Ok(())
    }
}

/// Validation outcome of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub name: String,
    pub stage: Stage,
    pub report: ScoreReport,
    pub ledger: CostLedger,
}

/// Scores candidate trees. `prepare` may mutate (e.g. register tools); `score` is
/// called concurrently.
pub trait CandidateEvaluator: Sync {
    fn prepare(&mut self, _tree: &CompositionTree) -> Result<(), AmpError> {
        Ok(())
    }

    fn score(&self, tree: &CompositionTree) -> Result<(ScoreReport, CostLedger), AmpError>;
}

/// Runs `tool_id` on every validation instance and aggregates the metrics.
///
/// Each instance gets the seed `derive(seed, instance.id)`, so the report does not
/// depend on evaluation order. Tool failures and reserved answers count as total misses.
pub fn score_candidate(
    registry: &ToolRegistry,
    tool_id: &str,
    validation: &[ValidationInstance],
    fitness: MetricId,
    seed: u64,
    parallel: bool,
) -> Result<(ScoreReport, CostLedger), AmpError> {
    if validation.is_empty() {
        return Err(AmpError::Config("empty validation set".into()));
    }
    if !registry.contains(tool_id) {
        return Err(ToolError::UnknownTool(tool_id.to_string()).into());
    }
    let run_one = |inst: &ValidationInstance| {
        let mut ledger = CostLedger::default();
        let instance_seed = derive_seed(seed, &["instance", &inst.id]);
        let (scores, failed, reserved) = match registry.invoke(tool_id, &inst.input, &mut ledger, instance_seed) {
            Ok(answer) if answer == RESERVE_ANSWER => (failure_scores(inst.task_kind, &inst.gold), false, true),
            Ok(answer) => (score_instance(inst.task_kind, &answer, &inst.gold), false, false),
            Err(_) => (failure_scores(inst.task_kind, &inst.gold), true, false),
        };
        (scores, ledger, failed, reserved)
    };
    let results: Vec<_> =
        if parallel { validation.par_iter().map(run_one).collect() } else { validation.iter().map(run_one).collect() };
    let scores: Vec<_> = results.iter().map(|r| r.0.clone()).collect();
    let mut report = aggregate(&scores, fitness)?;
    report.failures = results.iter().filter(|r| r.2).count();
    report.reserved = results.iter().filter(|r| r.3).count();
    let ledger = results.iter().map(|r| r.1).sum();
    Ok((report, ledger))
}

/// Evaluates trees by instantiating them in a registry and scoring on a validation set.
pub struct ValidationEvaluator {
    pub registry: ToolRegistry,
    pub validation: Vec<ValidationInstance>,
    pub fitness: MetricId,
    pub seed: u64,
    pub policies: Box<dyn PolicyFactory>,
    pub arity: Stage1Arity,
    pub parallel: bool,
}

impl ValidationEvaluator {
    pub fn new(
        registry: ToolRegistry,
        validation: Vec<ValidationInstance>,
        policies: Box<dyn PolicyFactory>,
        config: &SearchConfig,
    ) -> Self {
        ValidationEvaluator {
            registry,
            validation,
            fitness: config.fitness_metric,
            seed: config.seed,
            policies,
            arity: config.stage1_arity,
            parallel: config.parallel,
        }
    }

    pub fn tool_id(&self, tree: &CompositionTree) -> String {
        tree.leaf_id().unwrap_or_else(|| serialize_name(tree))
    }
}

impl CandidateEvaluator for ValidationEvaluator {
    fn prepare(&mut self, tree: &CompositionTree) -> Result<(), AmpError> {
        instantiate_with(tree, &mut self.registry, self.policies.as_ref(), self.arity)?;
        Ok(())
    }

    fn score(&self, tree: &CompositionTree) -> Result<(ScoreReport, CostLedger), AmpError> {
        score_candidate(&self.registry, &self.tool_id(tree), &self.validation, self.fitness, self.seed, self.parallel)
    }
}

/// Library order: higher score first, then fewer stacking layers, then smaller name.
pub fn entry_order(a: &LibraryEntry, b: &LibraryEntry) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.tree.layers().cmp(&b.tree.layers()))
        .then_with(|| a.name().cmp(&b.name()))
}

pub fn best_entry(library: &[LibraryEntry]) -> Option<&LibraryEntry> {
    library.iter().min_by(|a, b| entry_order(a, b))
}

/// Mutable search state shared by both stages.
pub struct Search<'e, E: CandidateEvaluator> {
    pub config: SearchConfig,
    evaluator: &'e mut E,
    pub library: Vec<LibraryEntry>,
    pub reports: Vec<CandidateReport>,
    pub total_ledger: CostLedger,
    next_step: u64,
}

impl<'e, E: CandidateEvaluator> Search<'e, E> {
    pub fn new(config: SearchConfig, evaluator: &'e mut E) -> Result<Self, AmpError> {
        config.validate()?;
        Ok(Search {
            config,
            evaluator,
            library: Vec::new(),
            reports: Vec::new(),
            total_ledger: CostLedger::default(),
            next_step: 0,
        })
    }

    fn score_all(&mut self, trees: &[CompositionTree]) -> Result<Vec<(ScoreReport, CostLedger)>, AmpError> {
        for tree in trees {
            self.evaluator.prepare(tree)?;
        }
        let evaluator = &*self.evaluator;
        let results: Vec<Result<_, AmpError>> = if self.config.parallel {
            trees.par_iter().map(|t| evaluator.score(t)).collect()
        } else {
            trees.iter().map(|t| evaluator.score(t)).collect()
        };
        results.into_iter().collect()
    }

    fn record(&mut self, tree: CompositionTree, stage: Stage, report: ScoreReport, ledger: CostLedger) -> LibraryEntry {
        let entry = LibraryEntry {
            score: report.fitness,
            metric: report.fitness_metric,
            tree,
            stage,
            ledger,
            created_step: self.next_step,
        };
        self.next_step += 1;
        self.total_ledger.merge(&ledger);
        self.reports.push(CandidateReport { name: entry.name(), stage, report, ledger });
        self.library.push(entry.clone());
        entry
    }

    /// Scores an atomic tool and adds it to the library.
    pub fn add_atomic(&mut self, tool: &CompositionTree) -> Result<LibraryEntry, AmpError> {
        let mut scored = self.score_all(std::slice::from_ref(tool))?;
        let (report, ledger) = scored.pop().expect("one result");
        Ok(self.record(tool.clone(), Stage::Atomic, report, ledger))
    }

    /// Builds `X_1, X_2, ...` over an atomic leaf `X_0` until a layer gains less than
    /// `delta` or `max_layers` is reached. Every built layer is kept.
    pub fn stage1(&mut self, atomic: &LibraryEntry) -> Result<Vec<LibraryEntry>, AmpError> {
        let CompositionTree::Leaf { base_name, depth_suffix: 0 } = &atomic.tree else {
            return Err(AmpError::Config(format!("stage 1 starts from an atomic `_0` leaf, got {}", atomic.name())));
        };
        let base_name = base_name.clone();
        let mut built = Vec::new();
        let mut previous = atomic.score;
        for layer in 1..=self.config.max_layers {
            let tree = CompositionTree::leaf(&base_name, layer);
            let (report, ledger) = self.score_all(std::slice::from_ref(&tree))?.pop().expect("one result");
            let entry = self.record(tree, Stage::Stage1, report, ledger);
            let gain = entry.score - previous;
            previous = entry.score;
            built.push(entry);
            if gain < self.config.delta {
                break;
            }
        }
        Ok(built)
    }

    /// Cross-composite synergy over the current library; returns the global best.
    pub fn stage2(&mut self) -> Result<LibraryEntry, AmpError> {
        if self.library.len() < 2 {
            return Err(AmpError::Config("stage 2 needs at least two library entries".into()));
        }
        for _ in 0..self.config.max_stage2_rounds {
            let mut sorted = self.library.clone();
            sorted.sort_by(entry_order);
            let top = sorted[0].clone();
            let global_best = top.score;
            let known: HashSet<String> = self.library.iter().map(LibraryEntry::name).collect();
            let top_name = top.name();
            let mut candidates: Vec<CompositionTree> = Vec::new();
            for partner in sorted[1..].iter().filter(|e| e.name() != top_name).take(self.config.top_k) {
                let tree = encapsulate(vec![top.tree.clone(), partner.tree.clone()])?;
                let name = serialize_name(&tree);
                if !known.contains(&name) && !candidates.iter().any(|c| serialize_name(c) == name) {
                    candidates.push(tree);
                }
            }
            if candidates.is_empty() {
                break;
            }
            let scored = self.score_all(&candidates)?;
            let mut round = Vec::with_capacity(candidates.len());
            for (tree, (report, ledger)) in candidates.into_iter().zip(scored) {
                round.push(self.record(tree, Stage::Stage2, report, ledger));
            }
            let round_best = best_entry(&round).expect("nonempty round");
            if round_best.score <= global_best {
                break;
            }
        }
        Ok(best_entry(&self.library).expect("nonempty library").clone())
    }

    pub fn finish(self, best: LibraryEntry) -> AmplificationResult {
        AmplificationResult {
            best,
            library: self.library,
            per_candidate_reports: self.reports,
            total_ledger: self.total_ledger,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplificationResult {
    pub best: LibraryEntry,
    pub library: Vec<LibraryEntry>,
    pub per_candidate_reports: Vec<CandidateReport>,
    pub total_ledger: CostLedger,
}

impl AmplificationResult {
    pub fn best_atomic_score(&self) -> Option<f64> {
        self.library.iter().filter(|e| e.stage == Stage::Atomic).map(|e| e.score).max_by(f64::total_cmp)
    }

    /// Number of composite candidates that were validated.
    pub fn composites_validated(&self) -> usize {
        self.library.iter().filter(|e| e.stage != Stage::Atomic).count()
    }
}

/// Runs both stages over atomic tools given as `name_0` ids.
pub fn run<E: CandidateEvaluator>(
    config: &SearchConfig,
    tool_ids: &[String],
    evaluator: &mut E,
) -> Result<AmplificationResult, AmpError> {
    if tool_ids.is_empty() {
        return Err(AmpError::Config("no atomic tools given".into()));
    }
    let mut search = Search::new(config.clone(), evaluator)?;
    for id in tool_ids {
        let leaf = CompositionTree::leaf_from_id(id)?;
        if !matches!(leaf, CompositionTree::Leaf { depth_suffix: 0, .. }) {
            return Err(AmpError::Config(format!("atomic tool ids must end in `_0`, got `{id}`")));
        }
        let atomic = search.add_atomic(&leaf)?;
        search.stage1(&atomic)?;
    }
    let best = search.stage2()?;
    Ok(search.finish(best))
}

/// One line of the persisted library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryRecord {
    pub name: String,
    pub score: f64,
    pub metric: MetricId,
    pub stage: Stage,
    /// Stacking level of the entry.
    pub depth: u32,
    pub tokens: u64,
    pub created_step: u64,
}

impl From<&LibraryEntry> for LibraryRecord {
    fn from(e: &LibraryEntry) -> Self {
        LibraryRecord {
            name: e.name(),
            score: e.score,
            metric: e.metric,
            stage: e.stage,
            depth: e.tree.layers(),
            tokens: e.ledger.total_tokens(),
            created_step: e.created_step,
        }
    }
}

pub fn library_to_jsonl(library: &[LibraryEntry]) -> String {
    library.iter().map(|e| serde_json::to_string(&LibraryRecord::from(e)).expect("records serialize") + "\n").collect()
}

pub fn write_library(path: impl AsRef<Path>, library: &[LibraryEntry]) -> Result<(), AmpError> {
    let path = path.as_ref();
    std::fs::write(path, library_to_jsonl(library))
        .map_err(|e| AmpError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn read_library(path: impl AsRef<Path>) -> Result<Vec<LibraryRecord>, AmpError> {
    let path = path.as_ref();
    let io = |message: String| AmpError::Io { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| io(format!("line {}: {e}", i + 1))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::PlannerPolicy;
    use crate::metrics::TaskKind;
    use crate::toolkit::{Backend, BackendKind, ToolDescriptor};
    use std::collections::HashMap;

    fn perfect_setup(n: usize) -> (ToolRegistry, Vec<ValidationInstance>) {
        let validation: Vec<ValidationInstance> = (0..n)
            .map(|i| ValidationInstance {
                id: format!("v{i}"),
                input: format!("q{i}"),
                gold: "CCO".into(),
                task_kind: TaskKind::MoleculeDesign,
                metadata: Default::default(),
            })
            .collect();
        let table: HashMap<String, String> = validation.iter().map(|v| (v.input.clone(), v.gold.clone())).collect();
        let mut reg = ToolRegistry::new("molecule_design");
        reg.set_gold(table.clone());
        reg.register_with_backend(ToolDescriptor::new("perfect_0", BackendKind::Table), Backend::table(table)).unwrap();
        (reg, validation)
    }

    #[test]
    fn perfect_table_tool_scores_one() {
        let (reg, val) = perfect_setup(10);
        let (report, ledger) = score_candidate(&reg, "perfect_0", &val, MetricId::Bleu2, 0, false).unwrap();
        assert!((report.fitness - 1.0).abs() < 1e-12);
        assert_eq!(report.means[&MetricId::Exact], 1.0);
        assert_eq!(ledger.calls, 10);
        assert!(score_candidate(&reg, "perfect_0", &[], MetricId::Bleu2, 0, false).is_err());
    }

    #[test]
    fn one_perfect_tool_wins_as_atomic() {
        let (reg, val) = perfect_setup(5);
        let config = SearchConfig::default();
        let mut eval = ValidationEvaluator::new(reg, val, Box::new(PlannerPolicy::simulated(1.0, 0.0, 0.0)), &config);
        let result = run(&config, &["perfect_0".to_string()], &mut eval).unwrap();
        assert_eq!(result.best.name(), "['perfect_0']");
        assert_eq!(result.best.stage, Stage::Atomic);
        // stage 1 plateaus immediately; stage 2 tries one pair and stops
        let stages: Vec<Stage> = result.library.iter().map(|e| e.stage).collect();
        assert_eq!(stages, [Stage::Atomic, Stage::Stage1, Stage::Stage2]);
        assert_eq!(result.per_candidate_reports.len(), result.library.len());
    }

    #[test]
    fn max_layers_one_builds_single_layer() {
        let (reg, val) = perfect_setup(3);
        let config = SearchConfig { max_layers: 1, delta: 0.0, ..SearchConfig::default() };
        let mut eval = ValidationEvaluator::new(reg, val, Box::new(PlannerPolicy::pass_through()), &config);
        let mut search = Search::new(config, &mut eval).unwrap();
        let atomic = search.add_atomic(&CompositionTree::leaf("perfect", 0)).unwrap();
        let built = search.stage1(&atomic).unwrap();
        assert_eq!(built.len(), 1);
        assert_eq!(built[0].name(), "['perfect_1']");
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig { delta: f64::NAN, ..Default::default() }.validate().is_err());
        assert!(SearchConfig { top_k: 0, ..Default::default() }.validate().is_err());
        assert!(SearchConfig { fitness_metric: MetricId::Levenshtein, ..Default::default() }.validate().is_err());
        let (reg, val) = perfect_setup(1);
        let config = SearchConfig::default();
        let mut eval = ValidationEvaluator::new(reg, val, Box::new(PlannerPolicy::pass_through()), &config);
        assert!(matches!(run(&config, &[], &mut eval), Err(AmpError::Config(_))));
        assert!(matches!(run(&config, &["perfect_2".into()], &mut eval), Err(AmpError::Config(_))));
        assert!(matches!(run(&config, &["missing_0".into()], &mut eval), Err(AmpError::Composition(_))));
    }

    #[test]
    fn entry_order_prefers_shallow_then_name() {
        let mk = |name: &str, score: f64| LibraryEntry {
            tree: crate::composition::parse_name(name).unwrap(),
            score,
            metric: MetricId::Accuracy,
            stage: Stage::Stage1,
            ledger: CostLedger::default(),
            created_step: 0,
        };
        let mut v = [mk("['b_1']", 0.5), mk("['a_1']", 0.5), mk("['a_0']", 0.5), mk("['z_0']", 0.9)];
        v.sort_by(entry_order);
        let names: Vec<String> = v.iter().map(LibraryEntry::name).collect();
        assert_eq!(names, ["['z_0']", "['a_0']", "['a_1']", "['b_1']"]);
    }
}
