//! Atomic tools, the registry every tool (atomic or composite) is invoked through,
//! and token/latency cost accounting.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{run_react, AgentError, PlannerPolicy};
use crate::hashing::derive_seed;

/// Answer returned by table tools on a miss unless configured otherwise.
pub const DEFAULT_FALLBACK: &str = "UNKNOWN";
const DEFAULT_TIMEOUT_MS: u64 = 10_000;
const DEFAULT_PERTURB_ALPHABET: &str = "CNOSPFcno()=#123";

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("tool `{0}` is already registered")]
    Duplicate(String),
    #[error("invalid descriptor for `{tool_id}`: {message}")]
    InvalidDescriptor { tool_id: String, message: String },
    #[error("tool `{tool_id}` failed: {message}")]
    Failure { tool_id: String, message: String },
    #[error("tool `{tool_id}` timed out after {timeout_ms} ms")]
    Timeout { tool_id: String, timeout_ms: u64 },
    #[error("tool `{tool_id}` has no gold answer for query `{query}`")]
    NoGold { tool_id: String, query: String },
    #[error("composite tool `{tool_id}`: {source}")]
    Agent {
        tool_id: String,
        #[source]
        source: Box<AgentError>,
    },
    #[error("i/o error loading tool `{tool_id}`: {message}")]
    Io { tool_id: String, message: String },
}

impl ToolError {
    /// True for failures of an external process or endpoint.
    pub fn is_external(&self) -> bool {
        matches!(self, ToolError::Failure { .. } | ToolError::Timeout { .. })
    }
}

/// Token, call and simulated wall-time totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CostLedger {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub tool_tokens: u64,
    pub calls: u64,
    pub sim_time_ms: u64,
}

impl CostLedger {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens + self.tool_tokens
    }

    pub fn merge(&mut self, other: &CostLedger) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
        self.tool_tokens += other.tool_tokens;
        self.calls += other.calls;
        self.sim_time_ms += other.sim_time_ms;
    }

    pub fn merged(mut self, other: &CostLedger) -> CostLedger {
        self.merge(other);
        self
    }
}

impl std::ops::AddAssign<&CostLedger> for CostLedger {
    fn add_assign(&mut self, rhs: &CostLedger) {
        self.merge(rhs);
    }
}

impl std::iter::Sum for CostLedger {
    fn sum<I: Iterator<Item = CostLedger>>(iter: I) -> Self {
        iter.fold(CostLedger::default(), |acc, l| acc.merged(&l))
    }
}

/// Declared latency model: a constant per call plus a per-token increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub call_latency_ms: u64,
    pub ms_per_token: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { call_latency_ms: 200, ms_per_token: 2 }
    }
}

impl CostModel {
    pub fn charge_tool(&self, ledger: &mut CostLedger, tokens: u64) {
        ledger.tool_tokens += tokens;
        ledger.calls += 1;
        ledger.sim_time_ms += self.call_latency_ms + self.ms_per_token * tokens;
    }

    pub fn charge_model(&self, ledger: &mut CostLedger, prompt: u64, completion: u64) {
        ledger.prompt_tokens += prompt;
        ledger.completion_tokens += completion;
        ledger.calls += 1;
        ledger.sim_time_ms += self.call_latency_ms + self.ms_per_token * (prompt + completion);
    }

    /// Inter-agent message: its tokens are read by the receiver, with no extra call.
    pub fn charge_message(&self, ledger: &mut CostLedger, tokens: u64) {
        ledger.prompt_tokens += tokens;
        ledger.sim_time_ms += self.ms_per_token * tokens;
    }
}

/// ceil(chars / 4); 0 for empty text.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Table,
    NoisyOracle,
    ExternalCommand,
    Http,
    /// An agent over other registered tools.
    Composite,
    /// An in-process function; not loadable from a tools file.
    Native,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub tool_id: String,
    /// Anonymized name shown to planners, `{task}_{num}`. Assigned at registration when empty.
    #[serde(default)]
    pub public_name: String,
    #[serde(default)]
    pub description: String,
    pub backend: BackendKind,
    #[serde(default)]
    pub backend_params: BTreeMap<String, String>,
    #[serde(default)]
    pub depth: u32,
}

impl ToolDescriptor {
    pub fn new(tool_id: impl Into<String>, backend: BackendKind) -> Self {
        ToolDescriptor {
            tool_id: tool_id.into(),
            public_name: String::new(),
            description: String::new(),
            backend,
            backend_params: BTreeMap::new(),
            depth: 0,
        }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<String>) -> Self {
        self.backend_params.insert(key.to_string(), value.into());
        self
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }
}

/// `name_suffix` where suffix is a non-negative integer and name is nonempty.
pub fn is_suffixed_name(name: &str) -> bool {
    match name.rsplit_once('_') {
        Some((base, num)) => !base.is_empty() && !num.is_empty() && num.bytes().all(|b| b.is_ascii_digit()),
        None => false,
    }
}

/// How a noisy oracle corrupts the gold answer on its failure branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Perturber {
    /// Replace one character with a different one; never returns the input.
    Substitute { alphabet: Vec<char> },
    /// Always answer this string.
    Constant(String),
}

impl Perturber {
    pub fn parse(spec: &str, alphabet: Option<&str>) -> Result<Self, String> {
        let alphabet: Vec<char> = alphabet.unwrap_or(DEFAULT_PERTURB_ALPHABET).chars().collect();
        match spec {
            "" | "substitute" => {
                if alphabet.len() < 2 {
                    return Err("substitute perturber needs an alphabet of at least 2 symbols".into());
                }
                Ok(Perturber::Substitute { alphabet })
            }
            s => match s.strip_prefix("constant:") {
                Some(text) => Ok(Perturber::Constant(text.to_string())),
                None => Err(format!("unknown perturber `{s}`")),
            },
        }
    }

    pub fn perturb(&self, gold: &str, rng: &mut impl Rng) -> String {
        match self {
            Perturber::Constant(text) => text.clone(),
            Perturber::Substitute { alphabet } => {
                let mut chars: Vec<char> = gold.chars().collect();
                if chars.is_empty() {
                    return alphabet[rng.random_range(0..alphabet.len())].to_string();
                }
                let pos = rng.random_range(0..chars.len());
                let current = chars[pos];
                let choices: Vec<char> = alphabet.iter().copied().filter(|&c| c != current).collect();
                chars[pos] = choices[rng.random_range(0..choices.len())];
                chars.into_iter().collect()
            }
        }
    }
}

pub type NativeFn = Arc<dyn Fn(&str, u64) -> Result<String, String> + Send + Sync>;

#[derive(Clone)]
pub enum Backend {
    Table { entries: Arc<HashMap<String, String>>, fallback: String },
    NoisyOracle { p_correct: f64, perturber: Perturber },
    ExternalCommand { program: String, args: Vec<String>, timeout: Duration },
    Http { url: String, timeout: Duration },
    Composite { children: Vec<String>, policy: PlannerPolicy },
    Native(NativeFn),
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Backend::Table { entries, fallback } => {
                f.debug_struct("Table").field("entries", &entries.len()).field("fallback", fallback).finish()
            }
            Backend::NoisyOracle { p_correct, perturber } => {
                f.debug_struct("NoisyOracle").field("p_correct", p_correct).field("perturber", perturber).finish()
            }
            Backend::ExternalCommand { program, args, timeout } => f
                .debug_struct("ExternalCommand")
                .field("program", program)
                .field("args", args)
                .field("timeout", timeout)
                .finish(),
            Backend::Http { url, timeout } => {
                f.debug_struct("Http").field("url", url).field("timeout", timeout).finish()
            }
            Backend::Composite { children, .. } => f.debug_struct("Composite").field("children", children).finish(),
            Backend::Native(_) => f.write_str("Native"),
        }
    }
}

impl Backend {
    pub fn kind(&self) -> BackendKind {
        match self {
            Backend::Table { .. } => BackendKind::Table,
            Backend::NoisyOracle { .. } => BackendKind::NoisyOracle,
            Backend::ExternalCommand { .. } => BackendKind::ExternalCommand,
            Backend::Http { .. } => BackendKind::Http,
            Backend::Composite { .. } => BackendKind::Composite,
            Backend::Native(_) => BackendKind::Native,
        }
    }

    pub fn table(entries: HashMap<String, String>) -> Self {
        Backend::Table { entries: Arc::new(entries), fallback: DEFAULT_FALLBACK.to_string() }
    }

    pub fn native<F>(f: F) -> Self
    where
        F: Fn(&str, u64) -> Result<String, String> + Send + Sync + 'static,
    {
        Backend::Native(Arc::new(f))
    }

    /// Builds a runtime backend from a file-level descriptor.
    pub fn from_descriptor(desc: &ToolDescriptor) -> Result<Self, ToolError> {
        let invalid = |message: String| ToolError::InvalidDescriptor { tool_id: desc.tool_id.clone(), message };
        let params = &desc.backend_params;
        let timeout = || -> Result<Duration, ToolError> {
            match params.get("timeout_ms") {
                Some(v) => v.parse::<u64>().map(Duration::from_millis).map_err(|e| invalid(format!("timeout_ms: {e}"))),
                None => Ok(Duration::from_millis(DEFAULT_TIMEOUT_MS)),
            }
        };
        match desc.backend {
            BackendKind::Table => {
                let path = params.get("path").ok_or_else(|| invalid("table backend needs `path`".into()))?;
                let dataset = crate::dataset::load_dataset(path)
                    .map_err(|e| ToolError::Io { tool_id: desc.tool_id.clone(), message: e.to_string() })?;
                let entries = dataset.into_iter().map(|inst| (inst.input, inst.gold)).collect();
                Ok(Backend::Table {
                    entries: Arc::new(entries),
                    fallback: params.get("fallback").cloned().unwrap_or_else(|| DEFAULT_FALLBACK.into()),
                })
            }
            BackendKind::NoisyOracle => {
                let p_correct = match params.get("p") {
                    Some(p) => p.parse::<f64>().map_err(|e| invalid(format!("p: {e}")))?,
                    None => 1.0,
                };
                if !(0.0..=1.0).contains(&p_correct) {
                    return Err(invalid(format!("p must lie in [0, 1], got {p_correct}")));
                }
                let perturber = Perturber::parse(
                    params.get("perturber").map(String::as_str).unwrap_or("substitute"),
                    params.get("alphabet").map(String::as_str),
                )
                .map_err(invalid)?;
                Ok(Backend::NoisyOracle { p_correct, perturber })
            }
            BackendKind::ExternalCommand => {
                let command = params.get("command").ok_or_else(|| invalid("needs `command`".into()))?;
                let mut parts = command.split_whitespace().map(str::to_string);
                let program = parts.next().ok_or_else(|| invalid("empty `command`".into()))?;
                Ok(Backend::ExternalCommand { program, args: parts.collect(), timeout: timeout()? })
            }
            BackendKind::Http => {
                let url = params.get("url").ok_or_else(|| invalid("http backend needs `url`".into()))?;
                Ok(Backend::Http { url: url.clone(), timeout: timeout()? })
            }
            BackendKind::Composite | BackendKind::Native => {
                Err(invalid(format!("{:?} tools are created in-process, not from descriptors", desc.backend)))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegisteredTool {
    pub descriptor: ToolDescriptor,
    pub backend: Backend,
}

/// The tool set every agent draws from.
///
/// Registration is append-only and takes `&mut self`; once built, the registry is
/// shared immutably and invoked concurrently.
#[derive(Debug, Clone)]
pub struct ToolRegistry {
    tools: IndexMap<String, RegisteredTool>,
    gold: Arc<HashMap<String, String>>,
    cost_model: CostModel,
    task_name: String,
    next_public: usize,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        ToolRegistry::new("tool")
    }
}

impl ToolRegistry {
    /// `task_name` prefixes the anonymized public names.
    pub fn new(task_name: impl Into<String>) -> Self {
        ToolRegistry {
            tools: IndexMap::new(),
            gold: Arc::new(HashMap::new()),
            cost_model: CostModel::default(),
            task_name: task_name.into(),
            next_public: 0,
        }
    }

    pub fn with_cost_model(mut self, cost_model: CostModel) -> Self {
        self.cost_model = cost_model;
        self
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.cost_model
    }

    pub fn task_name(&self) -> &str {
        &self.task_name
    }

    /// Installs the environment's gold answers (query → answer), consulted by noisy
    /// oracles and by the simulated judge.
    pub fn set_gold(&mut self, gold: HashMap<String, String>) {
        self.gold = Arc::new(gold);
    }

    pub fn gold(&self, query: &str) -> Option<&str> {
        self.gold.get(query).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn contains(&self, tool_id: &str) -> bool {
        self.tools.contains_key(tool_id)
    }

    pub fn get(&self, tool_id: &str) -> Option<&RegisteredTool> {
        self.tools.get(tool_id)
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &ToolDescriptor> {
        self.tools.values().map(|t| &t.descriptor)
    }

    /// Registers a tool from a file-level descriptor.
    pub fn register_tool(&mut self, descriptor: ToolDescriptor) -> Result<String, ToolError> {
        let backend = Backend::from_descriptor(&descriptor)?;
        self.register_with_backend(descriptor, backend)
    }

    pub fn register_with_backend(
        &mut self,
        mut descriptor: ToolDescriptor,
        backend: Backend,
    ) -> Result<String, ToolError> {
        let id = descriptor.tool_id.clone();
        if self.tools.contains_key(&id) {
            return Err(ToolError::Duplicate(id));
        }
        let invalid = |message: String| ToolError::InvalidDescriptor { tool_id: id.clone(), message };
        if id.is_empty() {
            return Err(invalid("empty tool id".into()));
        }
        descriptor.backend = backend.kind();
        let composite = descriptor.backend == BackendKind::Composite;
        if composite != (descriptor.depth > 0) {
            return Err(invalid(format!(
                "depth {} inconsistent with backend {:?}",
                descriptor.depth, descriptor.backend
            )));
        }
        if let Backend::Composite { children, .. } = &backend {
            if children.is_empty() {
                return Err(invalid("composite tool without children".into()));
            }
            if let Some(missing) = children.iter().find(|c| !self.tools.contains_key(*c)) {
                return Err(ToolError::UnknownTool(missing.clone()));
            }
        }
        if descriptor.public_name.is_empty() {
            descriptor.public_name = format!("{}_{}", self.task_name, self.next_public);
        } else if !is_suffixed_name(&descriptor.public_name) {
            return Err(invalid(format!("public name `{}` must look like name_<integer>", descriptor.public_name)));
        }
        self.next_public += 1;
        if descriptor.description.is_empty() {
            descriptor.description = match &backend {
                Backend::Composite { children, .. } => {
                    format!("Agent tool that consults {} sub-tools and returns one answer.", children.len())
                }
                _ => "Answers the task query directly.".to_string(),
            };
        }
        self.tools.insert(id.clone(), RegisteredTool { descriptor, backend });
        Ok(id)
    }

    /// Invokes a tool. Randomness is derived from `(seed, tool_id, query)`, so the
    /// answer and ledger delta are independent of call order.
    pub fn invoke(&self, tool_id: &str, query: &str, ledger: &mut CostLedger, seed: u64) -> Result<String, ToolError> {
        let tool = self.tools.get(tool_id).ok_or_else(|| ToolError::UnknownTool(tool_id.to_string()))?;
        let result = self.dispatch(tool_id, &tool.backend, query, ledger, seed);
        let answer_tokens = result.as_ref().map(|a| estimate_tokens(a)).unwrap_or(0);
        self.cost_model.charge_tool(ledger, estimate_tokens(query) + answer_tokens);
        result
    }

    fn dispatch(
        &self,
        tool_id: &str,
        backend: &Backend,
        query: &str,
        ledger: &mut CostLedger,
        seed: u64,
    ) -> Result<String, ToolError> {
        match backend {
            Backend::Table { entries, fallback } => Ok(entries.get(query).cloned().unwrap_or_else(|| fallback.clone())),
            Backend::NoisyOracle { p_correct, perturber } => {
                let gold = self
                    .gold(query)
                    .ok_or_else(|| ToolError::NoGold { tool_id: tool_id.to_string(), query: query.to_string() })?;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[tool_id, query]));
                if rng.random::<f64>() < *p_correct {
                    Ok(gold.to_string())
                } else {
                    Ok(perturber.perturb(gold, &mut rng))
                }
            }
            Backend::ExternalCommand { program, args, timeout } => {
                run_external(tool_id, program, args, query, *timeout)
            }
            Backend::Http { url, timeout } => http_invoke(tool_id, url, query, *timeout),
            Backend::Composite { children, policy } => {
                let outcome = run_react(policy, children, query, self, seed)
                    .map_err(|e| ToolError::Agent { tool_id: tool_id.to_string(), source: Box::new(e) })?;
                ledger.merge(&outcome.ledger);
                Ok(outcome.answer)
            }
            Backend::Native(f) => f(query, derive_seed(seed, &[tool_id, query]))
                .map_err(|message| ToolError::Failure { tool_id: tool_id.to_string(), message }),
        }
    }
}

fn run_external(
    tool_id: &str,
    program: &str,
    args: &[String],
    query: &str,
    timeout: Duration,
) -> Result<String, ToolError> {
    let fail = |message: String| ToolError::Failure { tool_id: tool_id.to_string(), message };
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| fail(format!("spawn `{program}`: {e}")))?;
    if let Some(mut stdin) = child.stdin.take() {
        let line = query.replace(['\n', '\r'], " ");
        // A child that exits without reading stdin is reported through its status below.
        let _ = writeln!(stdin, "{line}");
    }
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut buf = String::new();
        stdout.read_to_string(&mut buf).map(|_| buf)
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr.read_to_string(&mut buf);
        buf
    });
    let deadline = Instant::now() + timeout;
    let status = loop {
        match child.try_wait().map_err(|e| fail(e.to_string()))? {
            Some(status) => break status,
            None if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(ToolError::Timeout {
                    tool_id: tool_id.to_string(),
                    timeout_ms: timeout.as_millis() as u64,
                });
            }
            None => std::thread::sleep(Duration::from_millis(2)),
        }
    };
    let stdout = out_reader.join().map_err(|_| fail("stdout reader panicked".into()))?;
    let stderr = err_reader.join().unwrap_or_default();
    if !status.success() {
        return Err(fail(format!("exit status {status}; stderr: {}", stderr.trim())));
    }
    let stdout = stdout.map_err(|e| fail(format!("reading stdout: {e}")))?;
    Ok(stdout.lines().next().unwrap_or("").to_string())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InvokeRequest {
    pub query: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InvokeResponse {
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<u64>,
}

/// POST `{url}/invoke` with `{"query": ...}`; any status other than 200 is a failure.
fn http_invoke(tool_id: &str, url: &str, query: &str, timeout: Duration) -> Result<String, ToolError> {
    let fail = |message: String| ToolError::Failure { tool_id: tool_id.to_string(), message };
    let agent: ureq::Agent =
        ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
    let endpoint = format!("{}/invoke", url.trim_end_matches('/'));
    let mut response = agent
        .post(&endpoint)
        .header("Content-Type", "application/json")
        .send_json(&InvokeRequest { query: query.to_string() })
        .map_err(|e| match e {
            ureq::Error::Timeout(_) => {
                ToolError::Timeout { tool_id: tool_id.to_string(), timeout_ms: timeout.as_millis() as u64 }
            }
            other => fail(other.to_string()),
        })?;
    let status = response.status().as_u16();
    if status != 200 {
        let body = response.body_mut().read_to_string().unwrap_or_default();
        return Err(fail(format!("HTTP {status}: {}", body.trim())));
    }
    let parsed: InvokeResponse =
        response.body_mut().read_json().map_err(|e| fail(format!("malformed response: {e}")))?;
    Ok(parsed.answer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_registry() -> ToolRegistry {
        let mut reg = ToolRegistry::new("molecule_design");
        let entries = HashMap::from([("Cyclopropane".to_string(), "C1CC1".to_string())]);
        reg.register_with_backend(ToolDescriptor::new("Name2SMILES_0", BackendKind::Table), Backend::table(entries))
            .unwrap();
        reg
    }

    #[test]
    fn estimate_tokens_examples() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
        assert_eq!(estimate_tokens("a"), 1);
    }

    #[test]
    fn register_and_invoke_table_tool() {
        let reg = table_registry();
        assert!(reg.contains("Name2SMILES_0"));
        assert_eq!(reg.len(), 1);
        assert_eq!(reg.get("Name2SMILES_0").unwrap().descriptor.public_name, "molecule_design_0");
        let mut ledger = CostLedger::default();
        assert_eq!(reg.invoke("Name2SMILES_0", "Cyclopropane", &mut ledger, 0).unwrap(), "C1CC1");
        assert_eq!(ledger.calls, 1);
        assert_eq!(ledger.tool_tokens, estimate_tokens("Cyclopropane") + estimate_tokens("C1CC1"));
        assert_eq!(reg.invoke("Name2SMILES_0", "Benzene", &mut ledger, 0).unwrap(), DEFAULT_FALLBACK);
    }

    #[test]
    fn duplicate_registration_fails() {
        let mut reg = table_registry();
        let err = reg
            .register_with_backend(
                ToolDescriptor::new("Name2SMILES_0", BackendKind::Table),
                Backend::table(HashMap::new()),
            )
            .unwrap_err();
        assert!(matches!(err, ToolError::Duplicate(id) if id == "Name2SMILES_0"));
    }

    #[test]
    fn unknown_tool_is_a_lookup_error() {
        let reg = table_registry();
        let err = reg.invoke("nope_0", "q", &mut CostLedger::default(), 0).unwrap_err();
        assert!(matches!(err, ToolError::UnknownTool(_)));
    }

    #[test]
    fn bad_public_name_rejected() {
        let mut reg = ToolRegistry::new("t");
        let mut desc = ToolDescriptor::new("x_0", BackendKind::Table);
        desc.public_name = "no-suffix".into();
        assert!(reg.register_with_backend(desc, Backend::table(HashMap::new())).is_err());
    }

    #[test]
    fn noisy_oracle_is_deterministic_and_never_returns_gold_on_failure() {
        let mut reg = ToolRegistry::new("t");
        let gold: HashMap<String, String> = (0..200).map(|i| (format!("q{i}"), "CCOCC".to_string())).collect();
        reg.set_gold(gold);
        let desc = ToolDescriptor::new("noisy_0", BackendKind::NoisyOracle).with_param("p", "0");
        reg.register_tool(desc).unwrap();
        for i in 0..200 {
            let q = format!("q{i}");
            let mut l1 = CostLedger::default();
            let mut l2 = CostLedger::default();
            let a = reg.invoke("noisy_0", &q, &mut l1, 42).unwrap();
            let b = reg.invoke("noisy_0", &q, &mut l2, 42).unwrap();
            assert_eq!(a, b);
            assert_eq!(l1, l2);
            assert_ne!(a, "CCOCC");
            assert_eq!(a.chars().count(), 5);
        }
    }

    #[test]
    fn noisy_oracle_p_one_is_gold() {
        let mut reg = ToolRegistry::new("t");
        reg.set_gold(HashMap::from([("q".to_string(), "gold".to_string())]));
        reg.register_tool(ToolDescriptor::new("perfect_0", BackendKind::NoisyOracle).with_param("p", "1.0")).unwrap();
        for seed in 0..50 {
            assert_eq!(reg.invoke("perfect_0", "q", &mut CostLedger::default(), seed).unwrap(), "gold");
        }
        let err = reg.invoke("perfect_0", "unknown", &mut CostLedger::default(), 0).unwrap_err();
        assert!(matches!(err, ToolError::NoGold { .. }));
    }

    #[test]
    fn descriptor_validation() {
        let bad_p = ToolDescriptor::new("x_0", BackendKind::NoisyOracle).with_param("p", "1.5");
        assert!(Backend::from_descriptor(&bad_p).is_err());
        let no_url = ToolDescriptor::new("x_0", BackendKind::Http);
        assert!(Backend::from_descriptor(&no_url).is_err());
        let composite = ToolDescriptor::new("x_0", BackendKind::Composite);
        assert!(Backend::from_descriptor(&composite).is_err());
        assert!(Perturber::parse("shuffle", None).is_err());
        assert_eq!(Perturber::parse("constant:No", None).unwrap(), Perturber::Constant("No".into()));
    }

    #[test]
    fn ledger_merge_is_fieldwise() {
        let a = CostLedger { prompt_tokens: 1, completion_tokens: 2, tool_tokens: 3, calls: 4, sim_time_ms: 5 };
        let b = CostLedger { prompt_tokens: 10, completion_tokens: 20, tool_tokens: 30, calls: 40, sim_time_ms: 50 };
        let m = a.merged(&b);
        assert_eq!(
            m,
            CostLedger { prompt_tokens: 11, completion_tokens: 22, tool_tokens: 33, calls: 44, sim_time_ms: 55 }
        );
        assert_eq!(m.total_tokens(), 66);
        assert_eq!(b.merged(&a), m);
    }

    #[test]
    fn suffixed_names() {
        assert!(is_suffixed_name("Name2SMILES_0"));
        assert!(is_suffixed_name("my_tool_12"));
        assert!(!is_suffixed_name("X_a"));
        assert!(!is_suffixed_name("_3"));
        assert!(!is_suffixed_name("plain"));
    }
}
