//! Line-oriented scenario files.
//!
//! One command per line, `#` starts a comment. A leading `try` makes a
//! failing command non-fatal. The whole file is checked, including node
//! names and descriptor files, before anything runs.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::repo::{parse_uri, ComponentDescriptor, RepositoryIndex};
use crate::store::Role;

pub const DEFAULT_PAYLOAD_SIZE: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: Option<u64>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub line: usize,
    pub text: String,
    /// Prefixed with `try`: a runtime failure is recorded, not fatal.
    pub tolerant: bool,
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifecycleAction {
    Start,
    Stop,
    Uninstall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PublishSpec {
    pub version: String,
    pub imports: Vec<String>,
    pub exports: Vec<String>,
    pub start: Option<String>,
    pub size: u64,
}

impl Default for PublishSpec {
    fn default() -> Self {
        Self {
            version: "1.0.0".into(),
            imports: Vec::new(),
            exports: Vec::new(),
            start: None,
            size: DEFAULT_PAYLOAD_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub nodes: usize,
    pub bundles: usize,
    pub requests: usize,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Create {
        count: usize,
        random: bool,
    },
    Join {
        name: String,
        via: Option<String>,
    },
    Leave {
        name: String,
        fail: bool,
    },
    Publish {
        node: String,
        bundle: String,
        spec: PublishSpec,
    },
    Install {
        node: String,
        uri: String,
    },
    Lookup {
        node: String,
        bundle: String,
    },
    Remove {
        node: String,
        bundle: String,
    },
    Lifecycle {
        node: String,
        bundle: String,
        action: LifecycleAction,
    },
    Advance(u64),
    Stabilize,
    Workload(Workload),
    Dump,
    Assert(Predicate),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn holds<T: PartialOrd>(self, a: T, b: T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// Something a predicate can observe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Quantity {
    /// Live nodes holding a payload for the bundle.
    Replicas(String),
    /// Hops of the most recent operation of that kind.
    Hops(String),
    MeanHops(String),
    MaxHops(String),
    Live,
    Clock,
    Timeouts,
    Entries(String),
    Bytes(String),
    /// Lifecycle state on a gateway, or `none`.
    State(String, String),
    /// Store role on a node, or `none`.
    Role(String, String),
    /// Name of the node holding the ROOT entry, or `none`.
    Root(String),
    /// `ok`, `not_found`, `unavailable` or `failed` for the latest lookup.
    Outcome,
}

impl Quantity {
    fn is_numeric(&self) -> bool {
        !matches!(
            self,
            Quantity::State(..) | Quantity::Role(..) | Quantity::Root(_) | Quantity::Outcome
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Number(f64),
    Word(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Not(Box<Predicate>),
    Installed {
        node: String,
        bundle: String,
    },
    Active {
        node: String,
        bundle: String,
    },
    Holds {
        node: String,
        bundle: String,
    },
    Compare {
        lhs: Quantity,
        op: CmpOp,
        rhs: Operand,
    },
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Number(n) => write!(f, "{n}"),
            Operand::Word(w) => f.write_str(w),
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const HOP_KINDS: [&str; 4] = ["route", "publish", "lookup", "install"];

impl Scenario {
    /// Parses and validates `text`. Descriptor files named by `publish`
    /// are read relative to `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let mut parser = Parser {
            base_dir,
            live: BTreeSet::new(),
            ever: BTreeSet::new(),
            next_index: 0,
        };
        let mut seed = None;
        let mut steps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| ScenarioError { line, message };
            let mut words: Vec<&str> = content.split_whitespace().collect();
            if words[0] == "seed" {
                if seed.is_some() || !steps.is_empty() {
                    return Err(err("`seed` must appear once, before any command".into()));
                }
                let [_, value] = words[..] else {
                    return Err(err("usage: seed <u64>".into()));
                };
                seed = Some(parse_num(value).map_err(err)?);
                continue;
            }
            let tolerant = words[0] == "try";
            if tolerant {
                words.remove(0);
                if words.is_empty() {
                    return Err(err("`try` needs a command".into()));
                }
            }
            let command = parser.command(&words, content).map_err(err)?;
            if tolerant && matches!(command, Command::Assert(_)) {
                return Err(err("`try` cannot wrap an assertion".into()));
            }
            steps.push(Step {
                line,
                text: content.to_string(),
                tolerant,
                command,
            });
        }
        Ok(Scenario { seed, steps })
    }
}

struct Parser<'a> {
    base_dir: Option<&'a Path>,
    live: BTreeSet<String>,
    ever: BTreeSet<String>,
    next_index: usize,
}

fn parse_num<T: std::str::FromStr>(word: &str) -> Result<T, String> {
    word.parse()
        .map_err(|_| format!("`{word}` is not a valid number"))
}

fn check_name(name: &str) -> Result<(), String> {
    if name.is_empty() || name.contains(['(', ')', ',', '"']) {
        Err(format!("invalid name `{name}`"))
    } else {
        Ok(())
    }
}

impl Parser<'_> {
    fn live_node(&self, name: &str) -> Result<String, String> {
        if self.live.contains(name) {
            Ok(name.to_string())
        } else if self.ever.contains(name) {
            Err(format!("node `{name}` has already left"))
        } else {
            Err(format!("unknown node `{name}`"))
        }
    }

    fn known_node(&self, name: &str) -> Result<String, String> {
        if self.ever.contains(name) {
            Ok(name.to_string())
        } else {
            Err(format!("unknown node `{name}`"))
        }
    }

    fn add_generated(&mut self, count: usize) -> Result<(), String> {
        for _ in 0..count {
            let name = format!("n{}", self.next_index);
            self.next_index += 1;
            if !self.ever.insert(name.clone()) {
                return Err(format!("generated node name `{name}` is already taken"));
            }
            self.live.insert(name);
        }
        Ok(())
    }

    fn command(&mut self, words: &[&str], content: &str) -> Result<Command, String> {
        let usage = |u: &str| Err(format!("usage: {u}"));
        match words {
            ["create", n] | ["create", n, "random"] => {
                let count: usize = parse_num(n)?;
                self.add_generated(count)?;
                Ok(Command::Create {
                    count,
                    random: words.len() == 3,
                })
            }
            ["create", ..] => usage("create <count> [random]"),
            ["join", name] | ["join", name, "via", _] => {
                check_name(name)?;
                if self.ever.contains(*name) {
                    return Err(format!("node name `{name}` already used"));
                }
                let via = match words.get(3) {
                    Some(b) => Some(self.live_node(b)?),
                    None => None,
                };
                if via.is_none() && self.live.is_empty() && !self.ever.is_empty() {
                    return Err("every node has left; nothing to join through".into());
                }
                self.ever.insert(name.to_string());
                self.live.insert(name.to_string());
                Ok(Command::Join {
                    name: name.to_string(),
                    via,
                })
            }
            ["join", ..] => usage("join <name> [via <bootstrap>]"),
            ["leave", name] | ["leave", name, "--fail"] => {
                let name = self.live_node(name)?;
                self.live.remove(&name);
                Ok(Command::Leave {
                    name,
                    fail: words.len() == 3,
                })
            }
            ["leave", ..] => usage("leave <name> [--fail]"),
            ["publish", node, bundle, rest @ ..] => {
                let node = self.live_node(node)?;
                let spec = self.publish_spec(bundle, rest)?;
                Ok(Command::Publish {
                    node,
                    bundle: bundle.to_string(),
                    spec,
                })
            }
            ["publish", ..] => usage("publish <node> <bundle> [descriptor-file] [key=value ...]"),
            ["install", node, uri] => {
                parse_uri(uri).map_err(|e| e.to_string())?;
                Ok(Command::Install {
                    node: self.live_node(node)?,
                    uri: uri.to_string(),
                })
            }
            ["install", ..] => usage("install <node> <uri>"),
            ["lookup", node, bundle] => Ok(Command::Lookup {
                node: self.live_node(node)?,
                bundle: bundle.to_string(),
            }),
            ["lookup", ..] => usage("lookup <node> <bundle>"),
            ["remove", node, bundle] => Ok(Command::Remove {
                node: self.live_node(node)?,
                bundle: bundle.to_string(),
            }),
            ["remove", ..] => usage("remove <node> <bundle>"),
            [verb @ ("start" | "stop" | "uninstall"), node, bundle] => Ok(Command::Lifecycle {
                node: self.known_node(node)?,
                bundle: bundle.to_string(),
                action: match *verb {
                    "start" => LifecycleAction::Start,
                    "stop" => LifecycleAction::Stop,
                    _ => LifecycleAction::Uninstall,
                },
            }),
            [verb @ ("start" | "stop" | "uninstall"), ..] => {
                usage(&format!("{verb} <node> <bundle>"))
            }
            ["advance", ticks] => Ok(Command::Advance(parse_num(ticks)?)),
            ["advance", ..] => usage("advance <ticks>"),
            ["stabilize"] => Ok(Command::Stabilize),
            ["dump"] => Ok(Command::Dump),
            ["workload", "zipf", nodes, bundles, requests, exponent] => {
                let w = Workload {
                    nodes: parse_num(nodes)?,
                    bundles: parse_num(bundles)?,
                    requests: parse_num(requests)?,
                    exponent: parse_num(exponent)?,
                };
                if w.nodes == 0 || w.bundles == 0 {
                    return Err("workload needs at least one node and one bundle".into());
                }
                if !(w.exponent.is_finite() && w.exponent >= 0.0) {
                    return Err(format!("invalid Zipf exponent `{exponent}`"));
                }
                if self.live.is_empty() && !self.ever.is_empty() {
                    return Err(
                        "every node has left; the workload has nothing to join through".into(),
                    );
                }
                self.add_generated(w.nodes.saturating_sub(self.live.len()))?;
                Ok(Command::Workload(w))
            }
            ["workload", ..] => usage("workload zipf <nodes> <bundles> <requests> <exponent>"),
            ["assert", ..] => {
                let text = content.trim_start_matches("try").trim_start()["assert".len()..].trim();
                Ok(Command::Assert(self.predicate(text)?))
            }
            [other, ..] => Err(format!("unknown command `{other}`")),
            [] => unreachable!("blank lines are skipped"),
        }
    }

    fn publish_spec(&self, bundle: &str, rest: &[&str]) -> Result<PublishSpec, String> {
        if bundle.contains('/') || bundle.is_empty() {
            return Err(format!("invalid bundle name `{bundle}`"));
        }
        let mut spec = PublishSpec::default();
        let mut options = rest;
        if let Some(first) = rest.first().filter(|w| !w.contains('=')) {
            let template = self.descriptor_from_file(first, bundle)?;
            spec.version = template.version.to_string();
            spec.imports = template.imports;
            spec.exports = template.exports;
            spec.start = template.start_entry;
            spec.size = template.size;
            options = &rest[1..];
        }
        let list = |v: &str| -> Vec<String> {
            v.split(',')
                .filter(|p| !p.is_empty())
                .map(str::to_string)
                .collect()
        };
        for opt in options {
            let Some((key, value)) = opt.split_once('=') else {
                return Err(format!("expected key=value, found `{opt}`"));
            };
            match key {
                "version" => spec.version = value.to_string(),
                "imports" => spec.imports = list(value),
                "exports" => spec.exports = list(value),
                "start" => spec.start = (!value.is_empty()).then(|| value.to_string()),
                "size" => spec.size = parse_num(value)?,
                _ => return Err(format!("unknown publish option `{key}`")),
            }
        }
        // fails early on a bad version or package name
        let mut probe = ComponentDescriptor::new(bundle, &spec.version, 0, spec.size)
            .map_err(|e| e.to_string())?
            .with_imports(spec.imports.clone())
            .with_exports(spec.exports.clone());
        probe.start_entry = spec.start.clone();
        probe.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }

    fn descriptor_from_file(
        &self,
        file: &str,
        bundle: &str,
    ) -> Result<ComponentDescriptor, String> {
        let path = match self.base_dir {
            Some(dir) => dir.join(file),
            None => file.into(),
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| format!("cannot read descriptor file `{}`: {e}", path.display()))?;
        let index = RepositoryIndex::parse(&text)
            .map_err(|e| format!("descriptor file `{}`: {e}", path.display()))?;
        index.get(bundle).cloned().ok_or_else(|| {
            format!(
                "descriptor file `{}` has no entry for `{bundle}`",
                path.display()
            )
        })
    }

    fn predicate(&self, text: &str) -> Result<Predicate, String> {
        let text = text.trim();
        if let Some(rest) = text.strip_prefix('!') {
            return Ok(Predicate::Not(Box::new(self.predicate(rest)?)));
        }
        let open = text
            .find('(')
            .ok_or_else(|| format!("cannot parse predicate `{text}`"))?;
        let close = text
            .find(')')
            .filter(|&c| c > open)
            .ok_or_else(|| format!("unbalanced parentheses in `{text}`"))?;
        let func = text[..open].trim();
        let args: Vec<&str> = text[open + 1..close]
            .split(',')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .collect();
        let tail = text[close + 1..].trim();

        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(format!("`{func}` takes {n} argument(s)"))
            }
        };
        let hop_kind = |k: &str| {
            if HOP_KINDS.contains(&k) {
                Ok(k.to_string())
            } else {
                Err(format!(
                    "unknown hop kind `{k}`; expected one of {HOP_KINDS:?}"
                ))
            }
        };
        let boolean = |p: Predicate| {
            if tail.is_empty() {
                Ok(p)
            } else {
                Err(format!("`{func}` is a condition, not a value"))
            }
        };
        let lhs = match func {
            "installed" | "active" | "holds" => {
                arity(2)?;
                let node = self.known_node(args[0])?;
                let bundle = args[1].to_string();
                return boolean(match func {
                    "installed" => Predicate::Installed { node, bundle },
                    "active" => Predicate::Active { node, bundle },
                    _ => Predicate::Holds { node, bundle },
                });
            }
            "replicas" => arity(1).map(|_| Quantity::Replicas(args[0].to_string()))?,
            "hops" => arity(1)
                .and_then(|_| hop_kind(args[0]))
                .map(Quantity::Hops)?,
            "mean_hops" => arity(1)
                .and_then(|_| hop_kind(args[0]))
                .map(Quantity::MeanHops)?,
            "max_hops" => arity(1)
                .and_then(|_| hop_kind(args[0]))
                .map(Quantity::MaxHops)?,
            "live" => arity(0).map(|_| Quantity::Live)?,
            "clock" => arity(0).map(|_| Quantity::Clock)?,
            "timeouts" => arity(0).map(|_| Quantity::Timeouts)?,
            "outcome" => arity(0).map(|_| Quantity::Outcome)?,
            "entries" => arity(1)
                .and_then(|_| self.known_node(args[0]))
                .map(Quantity::Entries)?,
            "bytes" => arity(1)
                .and_then(|_| self.known_node(args[0]))
                .map(Quantity::Bytes)?,
            "state" => {
                arity(2)?;
                Quantity::State(self.known_node(args[0])?, args[1].to_string())
            }
            "role" => {
                arity(2)?;
                Quantity::Role(self.known_node(args[0])?, args[1].to_string())
            }
            "root" => arity(1).map(|_| Quantity::Root(args[0].to_string()))?,
            _ => return Err(format!("unknown predicate function `{func}`")),
        };
        let mut parts = tail.split_whitespace();
        let (Some(op), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("expected `{func}(...) <op> <value>`"));
        };
        let op = match op {
            "==" => CmpOp::Eq,
            "!=" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            _ => return Err(format!("unknown comparison `{op}`")),
        };
        let rhs = if lhs.is_numeric() {
            Operand::Number(parse_num::<f64>(value)?)
        } else {
            if !matches!(op, CmpOp::Eq | CmpOp::Ne) {
                return Err(format!("`{func}` can only be compared with == or !="));
            }
            if let Quantity::Role(..) = lhs {
                let known = [
                    Role::Source,
                    Role::Root,
                    Role::Trail,
                    Role::Cache,
                    Role::Retained,
                ];
                if value != "none" && !known.iter().any(|r| r.as_str() == value) {
                    return Err(format!("unknown role `{value}`"));
                }
            }
            Operand::Word(value.to_string())
        };
        Ok(Predicate::Compare { lhs, op, rhs })
    }
}
