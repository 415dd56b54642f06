//! Agent composite tools: nested composition trees, their bracketed name strings, and
//! instantiation of a tree as an invocable tool.
//!
//! A leaf `X_k` names tool `X` as captured at layer `k` of atomic-to-composite
//! amplification: `X_0` is the atomic tool itself, `X_1` wraps it in one agent, and
//! `X_{k+1}` wraps the atomic tool together with `X_k`. Nodes are agents over their
//! children, written as lists: `[['A_0', 'B_1'], 'C_0']`. At the top level a
//! one-leaf list such as `['X_2']` denotes the leaf itself.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::PlannerPolicy;
use crate::toolkit::{Backend, BackendKind, CostLedger, ToolDescriptor, ToolError, ToolRegistry};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompositionError {
    #[error("a composite tool needs at least one child")]
    EmptyChildren,
    #[error("name parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unresolved tools: {}", .missing.join(", "))]
    Unresolved { missing: Vec<String> },
    #[error("registration failed: {0}")]
    Registration(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CompositionTree {
    Leaf { base_name: String, depth_suffix: u32 },
    Node { children: Vec<CompositionTree> },
}

impl CompositionTree {
    pub fn leaf(base_name: impl Into<String>, depth_suffix: u32) -> Self {
        CompositionTree::Leaf { base_name: base_name.into(), depth_suffix }
    }

    /// Leaf from a `name_k` tool id.
    pub fn leaf_from_id(tool_id: &str) -> Result<Self, CompositionError> {
        parse_leaf(tool_id).map_err(|message| CompositionError::Parse { position: 0, message })
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, CompositionTree::Leaf { .. })
    }

    /// Structural depth: 0 for a leaf, 1 + deepest child for a node.
    pub fn depth(&self) -> usize {
        match self {
            CompositionTree::Leaf { .. } => 0,
            CompositionTree::Node { children } => 1 + children.iter().map(Self::depth).max().unwrap_or(0),
        }
    }

    /// Stacking level: agent layers between the query and the deepest atomic tool,
    /// counting the layers a leaf's suffix already stands for.
    pub fn layers(&self) -> u32 {
        match self {
            CompositionTree::Leaf { depth_suffix, .. } => *depth_suffix,
            CompositionTree::Node { children } => 1 + children.iter().map(Self::layers).max().unwrap_or(0),
        }
    }

    /// Leaves in depth-first order.
    pub fn leaves(&self) -> Vec<&CompositionTree> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a CompositionTree>) {
        match self {
            CompositionTree::Leaf { .. } => out.push(self),
            CompositionTree::Node { children } => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            CompositionTree::Leaf { .. } => 1,
            CompositionTree::Node { children } => 1 + children.iter().map(Self::node_count).sum::<usize>(),
        }
    }

    pub fn internal_node_count(&self) -> usize {
        match self {
            CompositionTree::Leaf { .. } => 0,
            CompositionTree::Node { children } => 1 + children.iter().map(Self::internal_node_count).sum::<usize>(),
        }
    }

    /// The registry id a leaf resolves to (`base_k`).
    pub fn leaf_id(&self) -> Option<String> {
        match self {
            CompositionTree::Leaf { base_name, depth_suffix } => Some(format!("{base_name}_{depth_suffix}")),
            CompositionTree::Node { .. } => None,
        }
    }

    pub fn name(&self) -> String {
        serialize_name(self)
    }
}

impl fmt::Display for CompositionTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_name(self))
    }
}

impl Serialize for CompositionTree {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&serialize_name(self))
    }
}

impl<'de> Deserialize<'de> for CompositionTree {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_name(&text).map_err(serde::de::Error::custom)
    }
}

pub fn encapsulate(children: Vec<CompositionTree>) -> Result<CompositionTree, CompositionError> {
    if children.is_empty() {
        return Err(CompositionError::EmptyChildren);
    }
    Ok(CompositionTree::Node { children })
}

/// Canonical name string: single quotes, square brackets, `", "` separators.
pub fn serialize_name(tree: &CompositionTree) -> String {
    match tree {
        CompositionTree::Leaf { .. } => format!("[{}]", item(tree)),
        CompositionTree::Node { .. } => item(tree),
    }
}

fn item(tree: &CompositionTree) -> String {
    match tree {
        CompositionTree::Leaf { base_name, depth_suffix } => format!("'{base_name}_{depth_suffix}'"),
        CompositionTree::Node { children } => {
            format!("[{}]", children.iter().map(item).collect::<Vec<_>>().join(", "))
        }
    }
}

fn parse_leaf(text: &str) -> Result<CompositionTree, String> {
    let (base, num) = text.rsplit_once('_').ok_or_else(|| format!("leaf `{text}` lacks an _<integer> suffix"))?;
    if base.is_empty() {
        return Err(format!("leaf `{text}` has an empty base name"));
    }
    if num.is_empty() || !num.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("leaf `{text}` suffix `{num}` is not a non-negative integer"));
    }
    let depth_suffix = num.parse::<u32>().map_err(|e| format!("leaf `{text}` suffix: {e}"))?;
    Ok(CompositionTree::Leaf { base_name: base.to_string(), depth_suffix })
}

struct NameParser<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    text: &'a str,
}

impl NameParser<'_> {
    fn error(&self, message: impl Into<String>) -> CompositionError {
        let position = self.chars.get(self.pos).map(|(i, _)| *i).unwrap_or(self.text.len());
        CompositionError::Parse { position, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|(_, c)| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|(_, c)| *c)
    }

    fn list(&mut self) -> Result<CompositionTree, CompositionError> {
        self.skip_ws();
        if self.peek() != Some('[') {
            return Err(self.error("expected `[`"));
        }
        self.pos += 1;
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(']') if children.is_empty() => return Err(self.error("empty list")),
                Some('[') => children.push(self.list()?),
                Some('\'' | '"') => children.push(self.quoted()?),
                Some(c) => return Err(self.error(format!("unexpected `{c}`"))),
                None => return Err(self.error("unbalanced `[`")),
            }
            self.skip_ws();
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(']') => {
                    self.pos += 1;
                    return Ok(CompositionTree::Node { children });
                }
                Some(c) => return Err(self.error(format!("expected `,` or `]`, found `{c}`"))),
                None => return Err(self.error("unbalanced `[`")),
            }
        }
    }

    fn quoted(&mut self) -> Result<CompositionTree, CompositionError> {
        let start = self.pos;
        let quote = self.peek().expect("caller checked");
        self.pos += 1;
        let mut text = String::new();
        loop {
            match self.peek() {
                Some(c) if c == quote => break,
                // Names wrapped across lines in exported tables.
                Some('\n' | '\r') => {}
                Some(c) => text.push(c),
                None => {
                    self.pos = start;
                    return Err(self.error("unterminated quoted name"));
                }
            }
            self.pos += 1;
        }
        self.pos += 1;
        parse_leaf(text.trim()).map_err(|message| {
            let position = self.chars.get(start).map(|(i, _)| *i).unwrap_or(0);
            CompositionError::Parse { position, message }
        })
    }
}

/// Parses a bracketed name string. Accepts single or double quotes and any spacing.
pub fn parse_name(text: &str) -> Result<CompositionTree, CompositionError> {
    let mut parser = NameParser { chars: text.char_indices().collect(), pos: 0, text };
    let tree = parser.list()?;
    parser.skip_ws();
    if parser.pos != parser.chars.len() {
        return Err(parser.error("trailing input after the closing `]`"));
    }
    Ok(match tree {
        CompositionTree::Node { mut children } if children.len() == 1 && children[0].is_leaf() => {
            children.pop().expect("one child")
        }
        other => other,
    })
}

/// How stage-1 layers above the first wrap their predecessor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Arity {
    /// `X_{k+1}` = agent over (`X_0`, `X_k`).
    #[default]
    WithBase,
    /// `X_{k+1}` = agent over (`X_k`) alone.
    Single,
}

/// Stage-1 expansion of leaf `X_k` (k ≥ 1) into the node it stands for.
pub fn expand_stage1(base_name: &str, layer: u32, arity: Stage1Arity) -> CompositionTree {
    assert!(layer >= 1, "layer 0 is the atomic tool");
    let base = CompositionTree::leaf(base_name, 0);
    let children = if layer == 1 {
        vec![base]
    } else {
        let previous = CompositionTree::leaf(base_name, layer - 1);
        match arity {
            Stage1Arity::WithBase => vec![base, previous],
            Stage1Arity::Single => vec![previous],
        }
    };
    CompositionTree::Node { children }
}

/// Chooses the planner policy for each agent a tree instantiates.
pub trait PolicyFactory: Send + Sync {
    /// `layers` is the node's stacking level (1 for an agent directly over atomic tools).
    fn policy_for(&self, node: &CompositionTree, layers: u32) -> PlannerPolicy;
}

impl PolicyFactory for PlannerPolicy {
    fn policy_for(&self, _node: &CompositionTree, _layers: u32) -> PlannerPolicy {
        self.clone()
    }
}

impl<F> PolicyFactory for F
where
    F: Fn(&CompositionTree, u32) -> PlannerPolicy + Send + Sync,
{
    fn policy_for(&self, node: &CompositionTree, layers: u32) -> PlannerPolicy {
        self(node, layers)
    }
}

/// Registers every agent in `tree` (children first) and returns the root's tool id.
///
/// Leaves resolve to registered ids `base_k`; a missing `base_k` with k ≥ 1 is
/// built from `base_0` by stage-1 expansion. Node ids are their canonical names, so
/// instantiating the same subtree twice reuses the earlier registration.
pub fn instantiate(
    tree: &CompositionTree,
    registry: &mut ToolRegistry,
    policies: &dyn PolicyFactory,
) -> Result<String, CompositionError> {
    instantiate_with(tree, registry, policies, Stage1Arity::default())
}

pub fn instantiate_with(
    tree: &CompositionTree,
    registry: &mut ToolRegistry,
    policies: &dyn PolicyFactory,
    arity: Stage1Arity,
) -> Result<String, CompositionError> {
    let mut missing = Vec::new();
    for leaf in tree.leaves() {
        let CompositionTree::Leaf { base_name, .. } = leaf else { unreachable!() };
        let id = leaf.leaf_id().expect("leaf");
        let base_id = format!("{base_name}_0");
        if !registry.contains(&id) && !registry.contains(&base_id) && !missing.contains(&base_id) {
            missing.push(base_id);
        }
    }
    if !missing.is_empty() {
        return Err(CompositionError::Unresolved { missing });
    }
    build(tree, registry, policies, arity)
}

fn build(
    tree: &CompositionTree,
    registry: &mut ToolRegistry,
    policies: &dyn PolicyFactory,
    arity: Stage1Arity,
) -> Result<String, CompositionError> {
    match tree {
        CompositionTree::Leaf { base_name, depth_suffix } => {
            let id = format!("{base_name}_{depth_suffix}");
            if registry.contains(&id) {
                return Ok(id);
            }
            let node = expand_stage1(base_name, *depth_suffix, arity);
            register_node(&node, id, registry, policies, arity)
        }
        CompositionTree::Node { .. } => {
            let id = serialize_name(tree);
            if registry.contains(&id) {
                return Ok(id);
            }
            register_node(tree, id, registry, policies, arity)
        }
    }
}

fn register_node(
    node: &CompositionTree,
    id: String,
    registry: &mut ToolRegistry,
    policies: &dyn PolicyFactory,
    arity: Stage1Arity,
) -> Result<String, CompositionError> {
    let CompositionTree::Node { children } = node else { unreachable!("register_node on a leaf") };
    let child_ids = children.iter().map(|c| build(c, registry, policies, arity)).collect::<Result<Vec<_>, _>>()?;
    let layers = node.layers();
    let policy = policies.policy_for(node, layers);
    let mut descriptor = ToolDescriptor::new(id, BackendKind::Composite);
    descriptor.depth = layers;
    registry
        .register_with_backend(descriptor, Backend::Composite { children: child_ids, policy })
        .map_err(|e: ToolError| CompositionError::Registration(e.to_string()))
}

/// Stage of the amplification procedure that produced a library entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Atomic,
    Stage1,
    Stage2,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Atomic => "atomic",
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
        })
    }
}

/// A scored composition in the tool library.
#[derive(Debug, Clone, PartialEq)]
pub struct LibraryEntry {
    pub tree: CompositionTree,
    pub score: f64,
    pub metric: crate::metrics::MetricId,
    pub stage: Stage,
    /// Cost of validating this entry.
    pub ledger: CostLedger,
    pub created_step: u64,
}

impl LibraryEntry {
    pub fn name(&self) -> String {
        serialize_name(&self.tree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(name: &str, k: u32) -> CompositionTree {
        CompositionTree::leaf(name, k)
    }

    #[test]
    fn encapsulate_examples() {
        let a1 = encapsulate(vec![leaf("t", 0)]).unwrap();
        assert_eq!(a1.depth(), 1);
        let a2 = encapsulate(vec![leaf("t", 0), a1.clone()]).unwrap();
        assert_eq!(a2, CompositionTree::Node { children: vec![leaf("t", 0), a1] });
        assert_eq!(encapsulate(vec![]), Err(CompositionError::EmptyChildren));
    }

    #[test]
    fn serialize_examples() {
        assert_eq!(serialize_name(&leaf("Name2SMILES", 0)), "['Name2SMILES_0']");
        let nested = CompositionTree::Node {
            children: vec![
                CompositionTree::Node { children: vec![leaf("ChemDFM", 0), leaf("Name2SMILES", 1)] },
                leaf("ChemDFM", 1),
            ],
        };
        assert_eq!(serialize_name(&nested), "[['ChemDFM_0', 'Name2SMILES_1'], 'ChemDFM_1']");
        let flat = CompositionTree::Node { children: vec![leaf("Name2SMILES", 1), leaf("ChemDFM", 2)] };
        assert_eq!(serialize_name(&flat), "['Name2SMILES_1', 'ChemDFM_2']");
    }

    #[test]
    fn parse_examples() {
        let t = parse_name("[['SMILES2Property_1', 'UniMol_0'], 'SMILES2Property_1']").unwrap();
        assert_eq!(t.leaves().len(), 3);
        assert_eq!(t.depth(), 2);
        assert_eq!(
            t,
            CompositionTree::Node {
                children: vec![
                    CompositionTree::Node { children: vec![leaf("SMILES2Property", 1), leaf("UniMol", 0)] },
                    leaf("SMILES2Property", 1),
                ]
            }
        );
        assert!(matches!(parse_name("['X_a']"), Err(CompositionError::Parse { .. })));
        assert_eq!(parse_name("['ChemDFM_2']").unwrap(), leaf("ChemDFM", 2));
    }

    #[test]
    fn parse_accepts_double_quotes_and_loose_spacing() {
        let t = parse_name(r#"[["Name2SMILES_0",'ChemDFM_1'] ,  "Name2SMILES_1"]"#).unwrap();
        assert_eq!(serialize_name(&t), "[['Name2SMILES_0', 'ChemDFM_1'], 'Name2SMILES_1']");
        let wrapped = parse_name("[['Name2SMILES_0','ChemDFM_1'],'Nam\n    e2SMILES_1','ChemDFM_0']").unwrap();
        assert_eq!(wrapped.leaves().len(), 4);
    }

    #[test]
    fn parse_errors_carry_position() {
        for bad in ["", "[", "[]", "['A_0'", "['A_0']]", "['A_0' 'B_0']", "[A_0]", "['_0']", "['A_0', ]"] {
            match parse_name(bad) {
                Err(CompositionError::Parse { position, .. }) => assert!(position <= bad.len(), "{bad}"),
                other => panic!("{bad:?} parsed to {other:?}"),
            }
        }
        let Err(CompositionError::Parse { position, .. }) = parse_name("['A_0', 'B_x']") else { panic!() };
        assert_eq!(position, 8);
    }

    #[test]
    fn depth_and_leaves() {
        assert_eq!(leaf("a", 0).depth(), 0);
        let pair = CompositionTree::Node { children: vec![leaf("a", 0), leaf("b", 0)] };
        assert_eq!(pair.depth(), 1);
        let nested = CompositionTree::Node { children: vec![pair.clone(), leaf("c", 0)] };
        assert_eq!(nested.depth(), 2);
        let names: Vec<String> = nested.leaves().iter().map(|l| l.leaf_id().unwrap()).collect();
        assert_eq!(names, ["a_0", "b_0", "c_0"]);
        assert_eq!(nested.internal_node_count(), 2);
        assert_eq!(nested.layers(), 2);
        assert_eq!(CompositionTree::Node { children: vec![leaf("a", 3)] }.layers(), 4);
    }

    #[test]
    fn stage1_expansion() {
        assert_eq!(
            expand_stage1("t", 1, Stage1Arity::WithBase),
            CompositionTree::Node { children: vec![leaf("t", 0)] }
        );
        assert_eq!(
            expand_stage1("t", 3, Stage1Arity::WithBase),
            CompositionTree::Node { children: vec![leaf("t", 0), leaf("t", 2)] }
        );
        assert_eq!(expand_stage1("t", 3, Stage1Arity::Single), CompositionTree::Node { children: vec![leaf("t", 2)] });
    }

    #[test]
    fn tree_serde_uses_name_strings() {
        let t = parse_name("[['A_0', 'B_1'], 'C_2']").unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#""[['A_0', 'B_1'], 'C_2']""#);
        assert_eq!(serde_json::from_str::<CompositionTree>(&json).unwrap(), t);
    }
}
