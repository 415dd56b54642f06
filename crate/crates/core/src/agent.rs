//! ReAct-style thought/action/observation loop with scripted, simulated and remote planners.
//!
//! The simulated planner realizes four behaviors over the answers its tools return:
//! emit a consensus (correct), repair a wrong consensus (modify), arbitrate a
//! disagreement (judge), or decline to answer (reserve). Its judge and repair branches
//! consult the environment's gold answer; this is a simulation device parameterized
//! by the policy probabilities, not a model of how a real planner decides.

use std::collections::BTreeMap;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::derive_seed;
use crate::toolkit::{estimate_tokens, CostLedger, ToolRegistry};

/// The literal answer emitted when the planner reserves its opinion.
pub const RESERVE_ANSWER: &str = "UNABLE_TO_ANSWER";
const DEFAULT_MAX_STEPS: u32 = 10;
const REMOTE_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid planner policy: {0}")]
    Policy(String),
    #[error("simulated planner needs a nonempty toolset")]
    EmptyToolset,
    #[error("planner protocol error: {0}")]
    Protocol(String),
    #[error("planner transport error: {0}")]
    Transport(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Thought,
    Action,
    Observation,
    Final,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReActStep {
    pub kind: StepKind,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_input: Option<String>,
}

impl ReActStep {
    pub fn thought(text: impl Into<String>) -> Self {
        ReActStep { kind: StepKind::Thought, text: text.into(), tool_id: None, tool_input: None }
    }

    pub fn action(tool_id: impl Into<String>, tool_input: impl Into<String>) -> Self {
        let tool_id = tool_id.into();
        ReActStep {
            kind: StepKind::Action,
            text: format!("Call {tool_id}"),
            tool_id: Some(tool_id),
            tool_input: Some(tool_input.into()),
        }
    }

    pub fn observation(text: impl Into<String>) -> Self {
        ReActStep { kind: StepKind::Observation, text: text.into(), tool_id: None, tool_input: None }
    }

    pub fn final_answer(text: impl Into<String>) -> Self {
        ReActStep { kind: StepKind::Final, text: text.into(), tool_id: None, tool_input: None }
    }

    fn render(&self) -> String {
        match self.kind {
            StepKind::Thought => format!("Thought: {}", self.text),
            StepKind::Action => {
                format!("Action: {}\nAction Input: {}", self.text, self.tool_input.as_deref().unwrap_or(""))
            }
            StepKind::Observation => format!("Observation: {}", self.text),
            StepKind::Final => format!("Final Answer: {}", self.text),
        }
    }
}

/// Renders a trace as the plain-text transcript a planner would see.
pub fn render_trace(trace: &[ReActStep]) -> String {
    trace.iter().map(ReActStep::render).collect::<Vec<_>>().join("\n")
}

/// Checks the trace shape: every action is followed by its observation, observations
/// only follow actions, and exactly one final step closes the trace.
pub fn validate_trace(trace: &[ReActStep]) -> Result<(), String> {
    let Some((last, body)) = trace.split_last() else {
        return Err("empty trace".into());
    };
    if last.kind != StepKind::Final {
        return Err("trace does not end with a final step".into());
    }
    let mut pending_action = false;
    for (i, step) in body.iter().enumerate() {
        match step.kind {
            StepKind::Final => return Err(format!("final step at position {i} is not last")),
            StepKind::Action => {
                if pending_action {
                    return Err(format!("action at {i} follows an unanswered action"));
                }
                if step.tool_id.is_none() || step.tool_input.is_none() {
                    return Err(format!("action at {i} lacks tool_id or tool_input"));
                }
                pending_action = true;
            }
            StepKind::Observation => {
                if !pending_action {
                    return Err(format!("observation at {i} without a preceding action"));
                }
                pending_action = false;
            }
            StepKind::Thought => {
                if pending_action {
                    return Err(format!("thought at {i} interrupts an action/observation pair"));
                }
            }
        }
    }
    if pending_action {
        return Err("last action has no observation".into());
    }
    Ok(())
}

pub fn trace_to_jsonl(trace: &[ReActStep]) -> String {
    trace.iter().map(|s| serde_json::to_string(s).expect("steps serialize") + "\n").collect()
}

pub fn trace_from_jsonl(text: &str) -> Result<Vec<ReActStep>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Scripted,
    Simulated,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CallOrder {
    /// The literal string "all": every tool in toolset order.
    All(AllTools),
    Ids(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllTools {
    All,
}

impl Default for CallOrder {
    fn default() -> Self {
        CallOrder::All(AllTools::All)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ScriptStep {
    /// Call a tool; `None` takes the next tool in call order.
    Call {
        tool_id: Option<String>,
    },
    Finalize {
        answer: FinalAnswer,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalAnswer {
    LastObservation,
    Literal(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerPolicy {
    pub kind: PlannerKind,
    #[serde(default)]
    pub call_order: CallOrder,
    /// Probability of picking the correct answer when tools disagree.
    #[serde(default = "one")]
    pub judge_accuracy: f64,
    /// Probability of repairing a wrong consensus.
    #[serde(default)]
    pub modify_success: f64,
    /// Probability of declining to answer after a disagreement.
    #[serde(default)]
    pub reserve_prob: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
    /// Scripted planners only; empty means "call every tool, then return the last observation".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<ScriptStep>,
    /// Remote planners only: base URL of the planning endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

fn one() -> f64 {
    1.0
}

fn default_max_steps() -> u32 {
    DEFAULT_MAX_STEPS
}

impl PlannerPolicy {
    pub fn simulated(judge_accuracy: f64, modify_success: f64, reserve_prob: f64) -> Self {
        PlannerPolicy {
            kind: PlannerKind::Simulated,
            call_order: CallOrder::default(),
            judge_accuracy,
            modify_success,
            reserve_prob,
            max_steps: DEFAULT_MAX_STEPS,
            script: Vec::new(),
            endpoint: None,
        }
    }

    /// Calls every tool in order and returns the last observation.
    pub fn pass_through() -> Self {
        PlannerPolicy { kind: PlannerKind::Scripted, ..PlannerPolicy::simulated(1.0, 0.0, 0.0) }
    }

    pub fn scripted(script: Vec<ScriptStep>) -> Self {
        PlannerPolicy { script, ..PlannerPolicy::pass_through() }
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        PlannerPolicy {
            kind: PlannerKind::Remote,
            endpoint: Some(endpoint.into()),
            ..PlannerPolicy::simulated(1.0, 0.0, 0.0)
        }
    }

    pub fn with_max_steps(mut self, max_steps: u32) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        for (name, p) in [
            ("judge_accuracy", self.judge_accuracy),
            ("modify_success", self.modify_success),
            ("reserve_prob", self.reserve_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(AgentError::Policy(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.max_steps == 0 {
            return Err(AgentError::Policy("max_steps must be at least 1".into()));
        }
        if self.kind == PlannerKind::Remote && self.endpoint.is_none() {
            return Err(AgentError::Policy("remote planner without endpoint".into()));
        }
        Ok(())
    }

    fn order<'a>(&'a self, toolset: &'a [String]) -> Vec<&'a str> {
        match &self.call_order {
            CallOrder::All(_) => toolset.iter().map(String::as_str).collect(),
            CallOrder::Ids(ids) => ids.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorPattern {
    Correct,
    Modify,
    Judge,
    Reserve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub answer: String,
    pub trace: Vec<ReActStep>,
    pub ledger: CostLedger,
    pub reserved: bool,
    pub budget_exhausted: bool,
    /// No tool produced an answer.
    pub failed: bool,
    pub pattern: Option<BehaviorPattern>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("template `{template}` has unbound placeholder `{{{name}}}`")]
    Unbound { template: String, name: String },
}

pub const TEMPLATE_IDS: [&str; 6] =
    ["molecule_design", "captioning", "reaction_prediction", "final_refer", "react", "mas_agent"];

pub fn template_text(template_id: &str) -> Option<&'static str> {
    Some(match template_id {
        "molecule_design" => include_str!("../assets/templates/molecule_design.txt"),
        "captioning" => include_str!("../assets/templates/captioning.txt"),
        "reaction_prediction" => include_str!("../assets/templates/reaction_prediction.txt"),
        "final_refer" => include_str!("../assets/templates/final_refer.txt"),
        "react" => include_str!("../assets/templates/react.txt"),
        "mas_agent" => include_str!("../assets/templates/mas_agent.txt"),
        _ => return None,
    })
}

/// Substitutes `{name}` placeholders. Braces not enclosing an identifier are literal.
pub fn render_prompt(template_id: &str, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    let text = template_text(template_id).ok_or_else(|| TemplateError::Unknown(template_id.to_string()))?;
    render_text(template_id, text, vars)
}

fn render_text(template_id: &str, text: &str, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let ident_len = after
            .char_indices()
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
            .map(|(i, _)| i)
            .unwrap_or(after.len());
        if ident_len > 0 && after[ident_len..].starts_with('}') {
            let name = &after[..ident_len];
            let value = vars
                .get(name)
                .ok_or_else(|| TemplateError::Unbound { template: template_id.to_string(), name: name.to_string() })?;
            out.push_str(value);
            rest = &after[ident_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn task_instruction(task_name: &str, query: &str) -> String {
    let vars = BTreeMap::from([("input", query.to_string())]);
    match render_prompt(task_name, &vars) {
        Ok(text) => text.trim_end().to_string(),
        Err(_) => format!("Answer the following {task_name} question."),
    }
}

struct Planner<'a> {
    registry: &'a ToolRegistry,
    toolset: &'a [String],
    query: &'a str,
    context: &'a str,
    trace: Vec<ReActStep>,
    ledger: CostLedger,
    turns: u32,
}

impl<'a> Planner<'a> {
    fn tool_list(&self) -> String {
        self.toolset
            .iter()
            .map(|id| match self.registry.get(id) {
                Some(t) => format!("- {}: {}", t.descriptor.public_name, t.descriptor.description),
                None => format!("- {id}"),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn prompt(&self) -> Result<String, TemplateError> {
        let vars = BTreeMap::from([
            ("task", task_instruction(self.registry.task_name(), self.query)),
            ("tools", self.tool_list()),
            ("context", self.context.to_string()),
            ("query", self.query.to_string()),
            ("trace", render_trace(&self.trace)),
        ]);
        render_prompt("react", &vars)
    }

    /// Charges one planner turn: the rendered prompt in, `emitted` out.
    fn charge_turn(&mut self, emitted: &[&ReActStep]) -> Result<(), TemplateError> {
        let prompt = self.prompt()?;
        let completion: String = emitted.iter().map(|s| s.render()).collect::<Vec<_>>().join("\n");
        self.registry.cost_model().charge_model(
            &mut self.ledger,
            estimate_tokens(&prompt),
            estimate_tokens(&completion),
        );
        self.turns += 1;
        Ok(())
    }

    fn public_name(&self, tool_id: &str) -> String {
        self.registry.get(tool_id).map(|t| t.descriptor.public_name.clone()).unwrap_or_else(|| tool_id.to_string())
    }

    /// One thought/action/observation round. Returns the answer on success.
    fn call_tool(&mut self, tool_id: &str, seed: u64) -> Result<Option<String>, TemplateError> {
        let thought = ReActStep::thought(format!("I should ask {} about the question.", self.public_name(tool_id)));
        let action = ReActStep::action(tool_id, self.query);
        self.charge_turn(&[&thought, &action])?;
        let result = self.registry.invoke(tool_id, self.query, &mut self.ledger, seed);
        let (observation, answer) = match result {
            Ok(answer) => (ReActStep::observation(answer.clone()), Some(answer)),
            Err(e) => (ReActStep::observation(format!("Error: {e}")), None),
        };
        self.trace.extend([thought, action, observation]);
        Ok(answer)
    }

    fn last_observation(&self) -> String {
        self.trace.iter().rev().find(|s| s.kind == StepKind::Observation).map(|s| s.text.clone()).unwrap_or_default()
    }

    fn finish(mut self, answer: String, thought: Option<String>, flags: Flags) -> Result<AgentOutcome, TemplateError> {
        let final_step = ReActStep::final_answer(answer.clone());
        if let Some(thought) = thought {
            let thought = ReActStep::thought(thought);
            self.charge_turn(&[&thought, &final_step])?;
            self.trace.push(thought);
        }
        self.trace.push(final_step);
        Ok(AgentOutcome {
            answer,
            trace: self.trace,
            ledger: self.ledger,
            reserved: flags.pattern == Some(BehaviorPattern::Reserve),
            budget_exhausted: flags.exhausted,
            failed: flags.failed,
            pattern: flags.pattern,
        })
    }

    fn exhausted(self, failed: bool) -> Result<AgentOutcome, TemplateError> {
        let answer = self.last_observation();
        self.finish(answer, None, Flags { exhausted: true, failed, pattern: None })
    }
}

#[derive(Default)]
struct Flags {
    exhausted: bool,
    failed: bool,
    pattern: Option<BehaviorPattern>,
}

pub fn run_react(
    policy: &PlannerPolicy,
    toolset: &[String],
    query: &str,
    registry: &ToolRegistry,
    seed: u64,
) -> Result<AgentOutcome, AgentError> {
    run_react_with_context(policy, toolset, query, "", registry, seed)
}

/// Like [`run_react`], with extra text (e.g. messages from other agents) included in
/// every planner prompt.
pub fn run_react_with_context(
    policy: &PlannerPolicy,
    toolset: &[String],
    query: &str,
    context: &str,
    registry: &ToolRegistry,
    seed: u64,
) -> Result<AgentOutcome, AgentError> {
    policy.validate()?;
    let planner =
        Planner { registry, toolset, query, context, trace: Vec::new(), ledger: CostLedger::default(), turns: 0 };
    match policy.kind {
        PlannerKind::Simulated => run_simulated(policy, planner, seed),
        PlannerKind::Scripted => run_scripted(policy, planner, seed),
        PlannerKind::Remote => run_remote(policy, planner, seed),
    }
}

fn run_simulated(policy: &PlannerPolicy, mut planner: Planner<'_>, seed: u64) -> Result<AgentOutcome, AgentError> {
    if planner.toolset.is_empty() {
        return Err(AgentError::EmptyToolset);
    }
    let order = policy.order(planner.toolset);
    let mut answers = Vec::new();
    for tool_id in &order {
        if planner.turns >= policy.max_steps {
            return Ok(planner.exhausted(answers.is_empty())?);
        }
        if let Some(answer) = planner.call_tool(tool_id, seed)? {
            answers.push(answer);
        }
    }
    if planner.turns >= policy.max_steps {
        return Ok(planner.exhausted(answers.is_empty())?);
    }
    if answers.is_empty() {
        let answer = planner.last_observation();
        let thought = "Every tool failed; reporting the last error.".to_string();
        return Ok(planner.finish(answer, Some(thought), Flags { failed: true, ..Flags::default() })?);
    }
    let joined = planner.toolset.join("\u{1f}");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["planner", &joined, planner.query]));
    let gold = planner.registry.gold(planner.query);
    let (answer, pattern) = decide(&answers, gold, policy, &mut rng);
    let thought = match pattern {
        BehaviorPattern::Correct => "The tools agree; I accept their answer.",
        BehaviorPattern::Modify => "The tools agree but the answer looks wrong; I correct it.",
        BehaviorPattern::Judge => "The tools disagree; I judge which answer is right.",
        BehaviorPattern::Reserve => "The tools disagree and I cannot decide; I reserve my opinion.",
    };
    Ok(planner.finish(answer, Some(thought.to_string()), Flags { pattern: Some(pattern), ..Flags::default() })?)
}

/// The simulated planner's decision over the tools' answers.
fn decide(
    answers: &[String],
    gold: Option<&str>,
    policy: &PlannerPolicy,
    rng: &mut impl Rng,
) -> (String, BehaviorPattern) {
    // Fixed draw order keeps outcomes comparable across policies.
    let u_reserve: f64 = rng.random();
    let u_judge: f64 = rng.random();
    let u_modify: f64 = rng.random();
    let u_pick: f64 = rng.random();

    let mut distinct: Vec<&str> = Vec::new();
    for a in answers {
        if !distinct.contains(&a.as_str()) {
            distinct.push(a);
        }
    }
    let pick = |options: &[&str]| -> String {
        let i = ((u_pick * options.len() as f64) as usize).min(options.len() - 1);
        options[i].to_string()
    };
    if distinct.len() == 1 {
        let consensus = distinct[0];
        return match gold {
            Some(g) if consensus != g && u_modify < policy.modify_success => (g.to_string(), BehaviorPattern::Modify),
            _ => (consensus.to_string(), BehaviorPattern::Correct),
        };
    }
    if u_reserve < policy.reserve_prob {
        return (RESERVE_ANSWER.to_string(), BehaviorPattern::Reserve);
    }
    let answer = match gold {
        Some(g) if distinct.contains(&g) => {
            if u_judge < policy.judge_accuracy {
                g.to_string()
            } else {
                let wrong: Vec<&str> = distinct.iter().copied().filter(|a| *a != g).collect();
                pick(&wrong)
            }
        }
        _ => pick(&distinct),
    };
    (answer, BehaviorPattern::Judge)
}

fn run_scripted(policy: &PlannerPolicy, mut planner: Planner<'_>, seed: u64) -> Result<AgentOutcome, AgentError> {
    let order: Vec<String> = policy.order(planner.toolset).into_iter().map(str::to_string).collect();
    let script: Vec<ScriptStep> = if policy.script.is_empty() {
        order
            .iter()
            .map(|_| ScriptStep::Call { tool_id: None })
            .chain([ScriptStep::Finalize { answer: FinalAnswer::LastObservation }])
            .collect()
    } else {
        policy.script.clone()
    };
    let mut next = order.iter();
    let mut any_answer = false;
    for step in &script {
        if planner.turns >= policy.max_steps {
            return Ok(planner.exhausted(!any_answer)?);
        }
        match step {
            ScriptStep::Call { tool_id } => {
                let id = match tool_id {
                    Some(id) => id.clone(),
                    None => match next.next() {
                        Some(id) => id.clone(),
                        None => {
                            return Err(AgentError::Policy("script calls more tools than the call order lists".into()))
                        }
                    },
                };
                any_answer |= planner.call_tool(&id, seed)?.is_some();
            }
            ScriptStep::Finalize { answer } => {
                let failed = !any_answer && matches!(answer, FinalAnswer::LastObservation);
                let answer = match answer {
                    FinalAnswer::LastObservation => planner.last_observation(),
                    FinalAnswer::Literal(s) => s.clone(),
                };
                let thought = "I have what I need.".to_string();
                return Ok(planner.finish(answer, Some(thought), Flags { failed, ..Flags::default() })?);
            }
        }
    }
    Ok(planner.exhausted(!any_answer)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolSummary {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Serialize)]
struct PlanRequest<'a> {
    trace: &'a [ReActStep],
    tools: &'a [ToolSummary],
    query: &'a str,
}

/// Parses one planner response object into a step.
pub fn parse_step(body: &str) -> Result<ReActStep, AgentError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| AgentError::Protocol(format!("invalid JSON: {e}")))?;
    let obj = value.as_object().ok_or_else(|| AgentError::Protocol("response is not an object".into()))?;
    let field = |name: &str| obj.get(name).and_then(|v| v.as_str()).map(str::to_string);
    let kind = field("kind").ok_or_else(|| AgentError::Protocol("missing `kind`".into()))?;
    match kind.as_str() {
        "final" => {
            let text = field("text").ok_or_else(|| AgentError::Protocol("final step without `text`".into()))?;
            Ok(ReActStep::final_answer(text))
        }
        "thought" => Ok(ReActStep::thought(field("text").unwrap_or_default())),
        "action" => {
            let tool_id = field("tool_id").ok_or_else(|| AgentError::Protocol("action without `tool_id`".into()))?;
            let input =
                field("tool_input").ok_or_else(|| AgentError::Protocol("action without `tool_input`".into()))?;
            let mut step = ReActStep::action(tool_id, input);
            if let Some(text) = field("text") {
                step.text = text;
            }
            Ok(step)
        }
        other => Err(AgentError::Protocol(format!("unexpected step kind `{other}`"))),
    }
}

/// POST `{endpoint}/plan` and parse the single step it returns.
pub fn remote_plan(
    endpoint: &str,
    trace: &[ReActStep],
    tools: &[ToolSummary],
    query: &str,
    timeout: Duration,
) -> Result<(ReActStep, u64, u64), AgentError> {
    let agent: ureq::Agent =
        ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
    let request = PlanRequest { trace, tools, query };
    let body = serde_json::to_string(&request).expect("plan request serializes");
    let url = format!("{}/plan", endpoint.trim_end_matches('/'));
    let mut response = agent
        .post(&url)
        .header("Content-Type", "application/json")
        .send(body.as_str())
        .map_err(|e| AgentError::Transport(e.to_string()))?;
    let status = response.status().as_u16();
    let text = response.body_mut().read_to_string().map_err(|e| AgentError::Transport(e.to_string()))?;
    if status != 200 {
        return Err(AgentError::Transport(format!("HTTP {status}: {}", text.trim())));
    }
    Ok((parse_step(&text)?, estimate_tokens(&body), estimate_tokens(&text)))
}

fn run_remote(policy: &PlannerPolicy, mut planner: Planner<'_>, seed: u64) -> Result<AgentOutcome, AgentError> {
    let endpoint = policy.endpoint.as_deref().expect("validated");
    let tools: Vec<ToolSummary> = planner
        .toolset
        .iter()
        .filter_map(|id| planner.registry.get(id))
        .map(|t| ToolSummary { name: t.descriptor.tool_id.clone(), description: t.descriptor.description.clone() })
        .collect();
    let mut any_answer = false;
    loop {
        if planner.turns >= policy.max_steps {
            return Ok(planner.exhausted(!any_answer)?);
        }
        let (step, prompt_tokens, completion_tokens) =
            remote_plan(endpoint, &planner.trace, &tools, planner.query, REMOTE_TIMEOUT)?;
        planner.registry.cost_model().charge_model(&mut planner.ledger, prompt_tokens, completion_tokens);
        planner.turns += 1;
        match step.kind {
            StepKind::Final => {
                planner.trace.push(step.clone());
                return Ok(AgentOutcome {
                    answer: step.text,
                    trace: planner.trace,
                    ledger: planner.ledger,
                    reserved: false,
                    budget_exhausted: false,
                    failed: false,
                    pattern: None,
                });
            }
            StepKind::Thought => planner.trace.push(step),
            StepKind::Action => {
                let tool_id = step.tool_id.clone().unwrap_or_default();
                let input = step.tool_input.clone().unwrap_or_default();
                let observation = if planner.toolset.contains(&tool_id) {
                    match planner.registry.invoke(&tool_id, &input, &mut planner.ledger, seed) {
                        Ok(a) => {
                            any_answer = true;
                            a
                        }
                        Err(e) => format!("Error: {e}"),
                    }
                } else {
                    format!("Error: tool `{tool_id}` is not available")
                };
                planner.trace.push(step);
                planner.trace.push(ReActStep::observation(observation));
            }
            StepKind::Observation => {
                return Err(AgentError::Protocol("planner may not emit observations".into()));
            }
        }
    }
}
