//! Baseline multi-agent networks with a FinalRefer aggregator, and their cost accounting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{render_prompt, render_trace, run_react_with_context, AgentError, PlannerPolicy, TemplateError};
use crate::dataset::ValidationInstance;
use crate::hashing::derive_seed;
use crate::metrics::{score_instance, MetricId, MetricsError};
use crate::toolkit::{estimate_tokens, CostLedger, Perturber, ToolRegistry, DEFAULT_FALLBACK};

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("unknown topology kind `{0}`")]
    UnknownKind(String),
    #[error("rounds must be at least 1")]
    ZeroRounds,
    #[error("final aggregation needs at least one answer")]
    NoAnswers,
    #[error("empty evaluation set")]
    EmptyDataset,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Chain,
    Random,
    FullConnected,
    Layered,
    Star,
    Debate,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 6] = [
        TopologyKind::Chain,
        TopologyKind::Random,
        TopologyKind::FullConnected,
        TopologyKind::Layered,
        TopologyKind::Star,
        TopologyKind::Debate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Chain => "chain",
            TopologyKind::Random => "random",
            TopologyKind::FullConnected => "full_connected",
            TopologyKind::Layered => "layered",
            TopologyKind::Star => "star",
            TopologyKind::Debate => "debate",
        }
    }

    pub fn default_rounds(self) -> u32 {
        match self {
            TopologyKind::Random | TopologyKind::Star | TopologyKind::Debate => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopologyKind {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        TopologyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| TopologyError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeId {
    User,
    /// 1-based agent index.
    Agent(usize),
    Final,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::User => f.write_str("user"),
            NodeId::Agent(i) => write!(f, "a{i}"),
            NodeId::Final => f.write_str("final"),
        }
    }
}

/// One agent run, reading the latest outputs of `inputs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    pub agent: usize,
    pub inputs: Vec<NodeId>,
}

/// Activations that run together against the same snapshot of outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wave {
    /// 0 is the initial answering wave of kinds that have one.
    pub round: u32,
    pub activations: Vec<Activation>,
}

/// A message delivered to the final agent once `round` is complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalInput {
    pub round: u32,
    pub from: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub num_agents: usize,
    pub rounds: u32,
    pub seed: u64,
    pub waves: Vec<Wave>,
    pub final_inputs: Vec<FinalInput>,
}

impl TopologySpec {
    /// Every directed message, in execution order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        let mut finals = self.final_inputs.iter().peekable();
        for round in 0..=self.rounds {
            for wave in self.waves.iter().filter(|w| w.round == round) {
                for act in &wave.activations {
                    out.extend(act.inputs.iter().map(|&from| (from, NodeId::Agent(act.agent))));
                }
            }
            while let Some(fi) = finals.next_if(|fi| fi.round == round) {
                out.push((fi.from, NodeId::Final));
            }
        }
        out
    }

    pub fn message_count(&self) -> usize {
        self.edges().len()
    }

    /// Distinct agent-to-agent and agent-to-final links; the user node is left out.
    pub fn interaction_graph(&self) -> BTreeSet<(NodeId, NodeId)> {
        self.edges().into_iter().filter(|(from, _)| *from != NodeId::User).collect()
    }
}

fn agents(range: std::ops::RangeInclusive<usize>) -> Vec<NodeId> {
    range.map(NodeId::Agent).collect()
}

fn solo_wave(round: u32, agent: usize, inputs: Vec<NodeId>) -> Wave {
    Wave { round, activations: vec![Activation { agent, inputs }] }
}

fn fan_in(round: u32, from: impl IntoIterator<Item = NodeId>) -> Vec<FinalInput> {
    from.into_iter().map(|from| FinalInput { round, from }).collect()
}

/// Builds the communication schedule of a baseline network.
///
/// Multi-round chain, full-connected and layered networks feed the last agents back
/// into the first ones; with one round each reduces to its single-pass construction.
pub fn build_topology(kind: TopologyKind, num: usize, rounds: u32, seed: u64) -> Result<TopologySpec, TopologyError> {
    if rounds == 0 {
        return Err(TopologyError::ZeroRounds);
    }
    let mut waves = Vec::new();
    let mut final_inputs = Vec::new();
    let n = num;
    if n == 0 {
        if kind == TopologyKind::Chain {
            final_inputs.push(FinalInput { round: 0, from: NodeId::User });
        }
        return Ok(TopologySpec { kind, num_agents: 0, rounds, seed, waves, final_inputs });
    }
    let initial =
        Wave { round: 0, activations: (1..=n).map(|agent| Activation { agent, inputs: Vec::new() }).collect() };
    match kind {
        TopologyKind::Chain => {
            for r in 1..=rounds {
                let head = if r == 1 { NodeId::User } else { NodeId::Agent(n) };
                waves.push(solo_wave(r, 1, vec![head]));
                for i in 2..=n {
                    waves.push(solo_wave(r, i, vec![NodeId::Agent(i - 1)]));
                }
            }
            final_inputs.push(FinalInput { round: rounds, from: NodeId::Agent(n) });
        }
        TopologyKind::FullConnected => {
            for r in 1..=rounds {
                for i in 1..=n {
                    if r > 1 && i == 1 {
                        continue;
                    }
                    waves.push(solo_wave(r, i, agents(1..=i - 1)));
                }
            }
            final_inputs = fan_in(rounds, agents(1..=n));
        }
        TopologyKind::Layered => {
            let split = n.div_ceil(2);
            let first = agents(1..=split);
            let second = agents(split + 1..=n);
            let layer = |round: u32, members: std::ops::RangeInclusive<usize>, inputs: &[NodeId]| Wave {
                round,
                activations: members.map(|agent| Activation { agent, inputs: inputs.to_vec() }).collect(),
            };
            for r in 1..=rounds {
                let first_inputs = if r == 1 { Vec::new() } else { second.clone() };
                if r == 1 || !first_inputs.is_empty() {
                    waves.push(layer(r, 1..=split, &first_inputs));
                }
                if !second.is_empty() {
                    waves.push(layer(r, split + 1..=n, &first));
                }
            }
            let last = if second.is_empty() { first } else { second };
            final_inputs = fan_in(rounds, last);
        }
        TopologyKind::Star => {
            waves.push(initial);
            for r in 1..=rounds {
                final_inputs.extend(fan_in(r, agents(1..=n)));
            }
        }
        TopologyKind::Debate => {
            waves.push(initial);
            if n > 1 {
                for r in 1..=rounds {
                    waves.push(Wave {
                        round: r,
                        activations: (1..=n)
                            .map(|agent| Activation {
                                agent,
                                inputs: (1..=n).filter(|&j| j != agent).map(NodeId::Agent).collect(),
                            })
                            .collect(),
                    });
                }
            }
            final_inputs = fan_in(rounds, agents(1..=n));
        }
        TopologyKind::Random => {
            waves.push(initial);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["random-topology", &n.to_string()]));
            for r in 1..=rounds {
                let mut inbox: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
                for i in 1..=n {
                    if n == 1 {
                        final_inputs.push(FinalInput { round: r, from: NodeId::Agent(1) });
                        continue;
                    }
                    let mut j = rng.random_range(1..n);
                    if j >= i {
                        j += 1;
                    }
                    inbox.entry(j).or_default().push(NodeId::Agent(i));
                }
                if !inbox.is_empty() {
                    waves.push(Wave {
                        round: r,
                        activations: inbox.into_iter().map(|(agent, inputs)| Activation { agent, inputs }).collect(),
                    });
                }
            }
            final_inputs.extend(fan_in(rounds, agents(1..=n)));
        }
    }
    Ok(TopologySpec { kind, num_agents: n, rounds, seed, waves, final_inputs })
}

/// Message totals of each construction.
pub fn closed_form_count(kind: TopologyKind, num: usize, rounds: u32) -> usize {
    let (n, r) = (num, rounds as usize);
    match kind {
        TopologyKind::Chain => r * n + 1,
        TopologyKind::FullConnected => r * n * n.saturating_sub(1) / 2 + n,
        TopologyKind::Star => n * r,
        TopologyKind::Debate => n * n.saturating_sub(1) * r + n,
        TopologyKind::Layered => (2 * r - 1) * n.div_ceil(2) * (n / 2) + n / 2,
        TopologyKind::Random => n * r + n,
    }
}

/// Graph isomorphism over agent relabelings, with user and final fixed.
pub fn is_isomorphic(a: &TopologySpec, b: &TopologySpec) -> bool {
    if a.num_agents != b.num_agents {
        return false;
    }
    let ga = a.interaction_graph();
    let gb = b.interaction_graph();
    if ga.len() != gb.len() {
        return false;
    }
    let mut perm: Vec<usize> = (1..=a.num_agents).collect();
    let relabel = |node: NodeId, perm: &[usize]| match node {
        NodeId::Agent(i) => NodeId::Agent(perm[i - 1]),
        other => other,
    };
    let mut found = false;
    permute(&mut perm, 0, &mut |p| {
        if !found && ga.iter().all(|&(x, y)| gb.contains(&(relabel(x, p), relabel(y, p)))) {
            found = true;
        }
    });
    found
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// What an agent produced: its answer and the text it sends to others.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOutput {
    pub answer: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutcome {
    pub answer: String,
    pub ledger: CostLedger,
    /// Final output of each agent, index 0 being agent 1.
    pub agent_outputs: Vec<AgentOutput>,
}

fn guess(gold: Option<&str>, q: f64, rng: &mut impl Rng) -> String {
    let u: f64 = rng.random();
    match gold {
        Some(g) if u < q => g.to_string(),
        Some(g) => Perturber::parse("substitute", None).expect("default alphabet").perturb(g, rng),
        None => DEFAULT_FALLBACK.to_string(),
    }
}

/// Most frequent of the trimmed answers with its tied rivals, in first-seen order.
fn plurality(answers: &[String]) -> Vec<String> {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for a in answers {
        let a = a.trim();
        match counts.iter_mut().find(|(s, _)| s == a) {
            Some((_, c)) => *c += 1,
            None => counts.push((a.to_string(), 1)),
        }
    }
    let top = counts.iter().map(|(_, c)| *c).max().unwrap_or(0);
    counts.into_iter().filter(|(_, c)| *c == top).map(|(s, _)| s).collect()
}

/// Majority vote; ties go to the gold answer with probability `judge_accuracy`.
pub fn final_refer(
    answers: &[String],
    policy: &PlannerPolicy,
    gold: Option<&str>,
    seed: u64,
) -> Result<String, TopologyError> {
    if answers.is_empty() {
        return Err(TopologyError::NoAnswers);
    }
    let tied = plurality(answers);
    if tied.len() == 1 {
        return Ok(tied[0].clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["final-refer"]));
    let u_judge: f64 = rng.random();
    let u_pick: f64 = rng.random();
    let options: Vec<&String> = match gold {
        Some(g) if tied.iter().any(|a| a == g) => {
            if u_judge < policy.judge_accuracy {
                return Ok(g.to_string());
            }
            tied.iter().filter(|a| *a != g).collect()
        }
        _ => tied.iter().collect(),
    };
    let i = ((u_pick * options.len() as f64) as usize).min(options.len() - 1);
    Ok(options[i].clone())
}

/// Sender, message text and the sender's answer (absent for the user's query).
type Delivery = (NodeId, String, Option<String>);

struct Network<'a> {
    spec: &'a TopologySpec,
    query: &'a str,
    policy: &'a PlannerPolicy,
    registry: &'a ToolRegistry,
    toolset: Option<&'a [String]>,
    seed: u64,
}

impl Network<'_> {
    fn message_block(inbox: &[(NodeId, String)]) -> String {
        inbox.iter().map(|(from, text)| format!("[{from}]\n{text}")).collect::<Vec<_>>().join("\n")
    }

    fn run_agent(
        &self,
        agent: usize,
        round: u32,
        previous: Option<&AgentOutput>,
        inbox: &[(NodeId, String, Option<String>)],
    ) -> (AgentOutput, CostLedger) {
        let messages: Vec<(NodeId, String)> = inbox.iter().map(|(f, t, _)| (*f, t.clone())).collect();
        let mut context = Self::message_block(&messages);
        if let Some(prev) = previous {
            context = format!("Your previous answer: {}\n{context}", prev.answer);
        }
        match self.toolset {
            Some(toolset) => {
                let agent_seed = derive_seed(self.seed, &["agent", &agent.to_string(), &round.to_string()]);
                let context = if context.is_empty() { String::new() } else { format!("Messages:\n{context}") };
                match run_react_with_context(self.policy, toolset, self.query, &context, self.registry, agent_seed) {
                    Ok(outcome) => (
                        AgentOutput { answer: outcome.answer.clone(), message: render_trace(&outcome.trace) },
                        outcome.ledger,
                    ),
                    Err(e) => {
                        let text = format!("Error: {e}");
                        (AgentOutput { answer: text.clone(), message: text }, CostLedger::default())
                    }
                }
            }
            None => {
                let mut ledger = CostLedger::default();
                let vars = BTreeMap::from([
                    ("agent", agent.to_string()),
                    ("question", self.query.to_string()),
                    ("messages", context),
                ]);
                let prompt = match render_prompt("mas_agent", &vars) {
                    Ok(p) => p,
                    Err(e) => {
                        let text = format!("Error: {e}");
                        return (AgentOutput { answer: text.clone(), message: text }, ledger);
                    }
                };
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    self.seed,
                    &["mas-agent", &agent.to_string(), &round.to_string(), self.query],
                ));
                let own = guess(self.registry.gold(self.query), self.policy.judge_accuracy, &mut rng);
                let mut pool = vec![own.clone()];
                pool.extend(inbox.iter().filter_map(|(_, _, a)| a.clone()));
                let tied = plurality(&pool);
                let answer = if tied.contains(&own) { own } else { tied[0].clone() };
                let message = format!("Final Answer: {answer}");
                self.registry.cost_model().charge_model(
                    &mut ledger,
                    estimate_tokens(&prompt),
                    estimate_tokens(&message),
                );
                (AgentOutput { answer, message }, ledger)
            }
        }
    }

    fn run(&self, parallel: bool) -> Result<NetworkOutcome, TopologyError> {
        self.policy.validate()?;
        let cost = self.registry.cost_model();
        let mut ledger = CostLedger::default();
        let mut outputs: Vec<Option<AgentOutput>> = vec![None; self.spec.num_agents];
        let mut final_inbox: Vec<(NodeId, String, Option<String>)> = Vec::new();
        let deliver = |from: NodeId, outputs: &[Option<AgentOutput>]| -> Delivery {
            match from {
                NodeId::Agent(i) => {
                    let out = outputs[i - 1].as_ref().expect("sender ran before its message is read");
                    (from, out.message.clone(), Some(out.answer.clone()))
                }
                _ => (from, self.query.to_string(), None),
            }
        };
        for round in 0..=self.spec.rounds {
            for wave in self.spec.waves.iter().filter(|w| w.round == round) {
                let jobs: Vec<(usize, Vec<Delivery>)> = wave
                    .activations
                    .iter()
                    .map(|act| (act.agent, act.inputs.iter().map(|&f| deliver(f, &outputs)).collect()))
                    .collect();
                for (_, inbox) in &jobs {
                    for (_, text, _) in inbox {
                        cost.charge_message(&mut ledger, estimate_tokens(text));
                    }
                }
                let run = |(agent, inbox): &(usize, Vec<_>)| {
                    self.run_agent(*agent, round, outputs[*agent - 1].as_ref(), inbox)
                };
                let results: Vec<_> =
                    if parallel { jobs.par_iter().map(run).collect() } else { jobs.iter().map(run).collect() };
                for ((agent, _), (output, agent_ledger)) in jobs.iter().zip(results) {
                    ledger.merge(&agent_ledger);
                    outputs[agent - 1] = Some(output);
                }
            }
            for fi in self.spec.final_inputs.iter().filter(|fi| fi.round == round) {
                let item = deliver(fi.from, &outputs);
                cost.charge_message(&mut ledger, estimate_tokens(&item.1));
                final_inbox.push(item);
            }
        }
        let gold = self.registry.gold(self.query);
        let votes: Vec<String> = final_inbox.iter().filter_map(|(_, _, a)| a.clone()).collect();
        let answer = if votes.is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &["final-direct", self.query]));
            guess(gold, self.policy.judge_accuracy, &mut rng)
        } else {
            final_refer(&votes, self.policy, gold, derive_seed(self.seed, &[self.query]))?
        };
        let shown: Vec<(NodeId, String)> = final_inbox.iter().map(|(f, t, _)| (*f, t.clone())).collect();
        let vars = BTreeMap::from([("question", self.query.to_string()), ("answers", Self::message_block(&shown))]);
        let prompt = render_prompt("final_refer", &vars)?;
        let completion = format!("The final answer is '{answer}'");
        cost.charge_model(&mut ledger, estimate_tokens(&prompt), estimate_tokens(&completion));
        let agent_outputs = outputs.into_iter().flatten().collect();
        Ok(NetworkOutcome { answer, ledger, agent_outputs })
    }
}

/// Runs one query through the network. With a toolset every agent runs the ReAct
/// loop over it; without one each agent answers from the policy and its messages.
pub fn run_network(
    spec: &TopologySpec,
    query: &str,
    policy: &PlannerPolicy,
    registry: &ToolRegistry,
    toolset: Option<&[String]>,
    seed: u64,
) -> Result<NetworkOutcome, TopologyError> {
    run_network_with(spec, query, policy, registry, toolset, seed, false)
}

/// [`run_network`] with agents of the same wave optionally run on the rayon pool.
pub fn run_network_with(
    spec: &TopologySpec,
    query: &str,
    policy: &PlannerPolicy,
    registry: &ToolRegistry,
    toolset: Option<&[String]>,
    seed: u64,
    parallel: bool,
) -> Result<NetworkOutcome, TopologyError> {
    Network { spec, query, policy, registry, toolset, seed }.run(parallel)
}

/// One row of a network comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasRow {
    pub kind: TopologyKind,
    #[serde(rename = "NUM")]
    pub num: usize,
    pub rounds: u32,
    pub score: f64,
    pub all_tokens: u64,
    pub sim_time_ms: u64,
}

/// Scores a network on a dataset; instance `i` runs with seed `derive(seed, id)`.
pub fn evaluate_network(
    spec: &TopologySpec,
    data: &[ValidationInstance],
    policy: &PlannerPolicy,
    registry: &ToolRegistry,
    toolset: Option<&[String]>,
    metric: MetricId,
    seed: u64,
) -> Result<MasRow, TopologyError> {
    if data.is_empty() {
        return Err(TopologyError::EmptyDataset);
    }
    let mut total = CostLedger::default();
    let mut score = 0.0;
    for inst in data {
        let out =
            run_network(spec, &inst.input, policy, registry, toolset, derive_seed(seed, &["instance", &inst.id]))?;
        total.merge(&out.ledger);
        let scores = score_instance(inst.task_kind, &out.answer, &inst.gold);
        score += scores.get(&metric).copied().ok_or(MetricsError::MissingFitness(metric))?;
    }
    Ok(MasRow {
        kind: spec.kind,
        num: spec.num_agents,
        rounds: spec.rounds,
        score: score / data.len() as f64,
        all_tokens: total.total_tokens(),
        sim_time_ms: total.sim_time_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn build(kind: TopologyKind, n: usize, r: u32) -> TopologySpec {
        build_topology(kind, n, r, 7).unwrap()
    }

    #[test]
    fn documented_counts() {
        assert_eq!(build(TopologyKind::Chain, 4, 1).message_count(), 5);
        assert_eq!(build(TopologyKind::FullConnected, 4, 1).message_count(), 10);
        assert_eq!(build(TopologyKind::Debate, 4, 2).message_count(), 28);
        assert_eq!(build(TopologyKind::Star, 4, 2).message_count(), 8);
        assert_eq!(build(TopologyKind::Layered, 4, 1).message_count(), 6);
        assert_eq!(build(TopologyKind::Random, 4, 2).message_count(), 12);
    }

    #[test]
    fn multi_round_counts_follow_generalized_forms() {
        for kind in TopologyKind::ALL {
            for n in [2, 3, 5] {
                for r in 1..=3 {
                    assert_eq!(build(kind, n, r).message_count(), closed_form_count(kind, n, r), "{kind} {n} {r}");
                }
            }
        }
    }

    #[test]
    fn chain_starts_at_user_and_zero_rounds_rejected() {
        let spec = build(TopologyKind::Chain, 3, 1);
        assert_eq!(spec.edges()[0], (NodeId::User, NodeId::Agent(1)));
        assert_eq!(*spec.edges().last().unwrap(), (NodeId::Agent(3), NodeId::Final));
        assert!(matches!(build_topology(TopologyKind::Star, 2, 0, 0), Err(TopologyError::ZeroRounds)));
    }

    #[test]
    fn random_never_self_sends_and_is_seeded() {
        let a = build_topology(TopologyKind::Random, 6, 3, 11).unwrap();
        assert_eq!(a, build_topology(TopologyKind::Random, 6, 3, 11).unwrap());
        for (from, to) in a.edges() {
            assert_ne!(from, to);
        }
    }

    #[test]
    fn isomorphism_detects_relabeling() {
        let chain = build(TopologyKind::Chain, 3, 1);
        let mut relabeled = chain.clone();
        for wave in &mut relabeled.waves {
            for act in &mut wave.activations {
                act.agent = 4 - act.agent;
                for i in &mut act.inputs {
                    if let NodeId::Agent(k) = i {
                        *k = 4 - *k;
                    }
                }
            }
        }
        for fi in &mut relabeled.final_inputs {
            if let NodeId::Agent(k) = &mut fi.from {
                *k = 4 - *k;
            }
        }
        assert!(is_isomorphic(&chain, &relabeled));
        assert!(!is_isomorphic(&chain, &build(TopologyKind::Star, 3, 1)));
    }

    #[test]
    fn final_refer_votes() {
        let p = PlannerPolicy::simulated(1.0, 0.0, 0.0);
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(final_refer(&s(&["x", "x", "y"]), &p, None, 0).unwrap(), "x");
        assert_eq!(final_refer(&s(&["x"]), &p, None, 0).unwrap(), "x");
        assert_eq!(final_refer(&s(&["x", "y"]), &p, Some("y"), 0).unwrap(), "y");
        assert_eq!(final_refer(&s(&["x", "y"]), &p, Some("x"), 0).unwrap(), "x");
        assert!(matches!(final_refer(&[], &p, None, 0), Err(TopologyError::NoAnswers)));
    }

    fn registry() -> ToolRegistry {
        let mut reg = ToolRegistry::new("molecule_design");
        reg.set_gold(HashMap::from([("q".to_string(), "CCO".to_string())]));
        reg
    }

    #[test]
    fn zero_agents_charge_one_model_call() {
        let reg = registry();
        let policy = PlannerPolicy::simulated(1.0, 0.0, 0.0);
        for kind in TopologyKind::ALL {
            let spec = build(kind, 0, kind.default_rounds());
            let out = run_network(&spec, "q", &policy, &reg, None, 3).unwrap();
            assert_eq!(out.answer, "CCO");
            assert_eq!(out.ledger.calls, 1, "{kind}");
        }
    }

    #[test]
    fn serial_and_parallel_agree() {
        let reg = registry();
        let policy = PlannerPolicy::simulated(0.6, 0.0, 0.0);
        for kind in TopologyKind::ALL {
            let spec = build(kind, 5, 2);
            let a = run_network_with(&spec, "q", &policy, &reg, None, 9, false).unwrap();
            let b = run_network_with(&spec, "q", &policy, &reg, None, 9, true).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("full-connected".parse::<TopologyKind>().unwrap(), TopologyKind::FullConnected);
        assert!("ring".parse::<TopologyKind>().is_err());
        assert_eq!(serde_json::to_string(&TopologyKind::Layered).unwrap(), "\"layered\"");
    }
}
