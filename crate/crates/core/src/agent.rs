//! Episode orchestration: the tool-call loop, retry management, scripted
//! policies and an HTTP tool-calling backend.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{AspConfig, Mode, RemoteConfig};
use crate::error::{Error, Result};
use crate::remote::JsonClient;
use crate::sim::{generate_scene, judge, Goal, NoiseConfig, SceneSpec, SimWorld, TaskSpec};
use crate::tools::{manifest, sanitize_query, Session, State, ToolOutput, ToolSpec, ToolValue};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: String,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
}

impl ToolCall {
    pub fn new(tool: &str, args: &[(&str, &str)]) -> Self {
        Self { tool: tool.into(), args: args.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentStep {
    Call(ToolCall),
    Finish { answer: String },
}

/// One line of an episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub tool: String,
    pub args: BTreeMap<String, String>,
    pub success: bool,
    pub feedback: String,
    pub output: ToolValue,
    pub state_after: State,
    pub world_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill: Option<crate::skills::SkillResult>,
}

/// Tool name recorded for replies that could not be dispatched at all.
pub const PROTOCOL_ERROR: &str = "protocol_error";

pub trait AgentBackend: Send {
    fn next_step(&mut self, query: &str, manifest: &[ToolSpec], history: &[StepRecord]) -> Result<AgentStep>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub query: String,
    pub template: String,
    pub seed: u64,
    #[serde(default)]
    pub task: Option<String>,
    pub no_aff: bool,
    pub records: Vec<StepRecord>,
    pub final_state: State,
    /// Answer given with `Finish`; none when the budget ran out or the
    /// episode aborted.
    pub answer: Option<String>,
    pub aborted: Option<String>,
    pub score: f64,
    /// Failed executions per `skill:key`.
    pub retries: BTreeMap<String, usize>,
}

impl EpisodeLog {
    /// One JSON object per tool call.
    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("records serialize") + "\n").collect()
    }

    pub fn calls(&self) -> Vec<ToolCall> {
        self.records
            .iter()
            .filter(|r| r.tool != PROTOCOL_ERROR)
            .map(|r| ToolCall { tool: r.tool.clone(), args: r.args.clone() })
            .collect()
    }
}

/// Checks a call against the manifest: known tool, exactly its parameters,
/// non-empty values.
pub fn validate_call(call: &ToolCall, manifest: &[ToolSpec]) -> std::result::Result<(), String> {
    let Some(spec) = manifest.iter().find(|t| t.name == call.tool) else {
        let names: Vec<&str> = manifest.iter().map(|t| t.name.as_str()).collect();
        return Err(format!("unknown tool '{}'; available tools: {}", call.tool, names.join(", ")));
    };
    let expected: Vec<&str> = spec.parameters.iter().map(|p| p.name.as_str()).collect();
    for name in &expected {
        match call.args.get(*name) {
            None => return Err(format!("{} is missing argument '{name}'; expected: {}", spec.name, expected.join(", "))),
            Some(v) if v.trim().is_empty() => return Err(format!("argument '{name}' of {} is empty", spec.name)),
            Some(_) => {}
        }
    }
    if let Some(extra) = call.args.keys().find(|k| !expected.contains(&k.as_str())) {
        return Err(format!("{} has no argument '{extra}'; expected: {}", spec.name, expected.join(", ")));
    }
    Ok(())
}

/// Dispatches a validated call, enforcing the per-`skill:key` retry cap.
fn dispatch(session: &mut Session, call: &ToolCall, retries: &mut BTreeMap<String, usize>, cap: usize) -> ToolOutput {
    let arg = |k: &str| call.args.get(k).map(String::as_str).unwrap_or_default();
    match call.tool.as_str() {
        "object_retrieval" => session.object_retrieval(arg("query")),
        "distance_between" => session.distance_between(arg("a"), arg("b")),
        "distance_to" => session.distance_to(arg("a")),
        "left_of" => session.left_of(arg("a"), arg("b")),
        "right_of" => session.right_of(arg("a"), arg("b")),
        "size_of" => session.size_of(arg("a")),
        "go_to" => session.go_to(arg("obj"), arg("action")),
        "interact" => match session.prepare_interact(arg("obj"), arg("action")) {
            Err(out) => out,
            Ok(p) => {
                let slot = format!("{}:{}", p.skill, p.key);
                let failed = retries.get(&slot).copied().unwrap_or(0);
                if failed >= cap {
                    return ToolOutput {
                        success: false,
                        feedback: format!("retry limit reached: {} on '{}' already failed {failed} times", p.skill, p.key),
                        output: ToolValue::State(session.state().clone()),
                        skill: None,
                    };
                }
                let out = session.execute_interact(p);
                if !out.success {
                    *retries.entry(slot).or_insert(0) += 1;
                }
                out
            }
        },
        other => unreachable!("validated tool '{other}'"),
    }
}

/// Runs the tool-call loop until `Finish`, the step budget, or a second
/// consecutive protocol error.
pub fn run_episode(session: &mut Session, query: &str, task: Option<&TaskSpec>, backend: &mut dyn AgentBackend) -> EpisodeLog {
    let cfg = session.config().clone();
    let tools = manifest(session.world().mode());
    let mut records: Vec<StepRecord> = Vec::new();
    let mut retries = BTreeMap::new();
    let mut protocol_errors = 0;
    let mut answer = None;
    let mut aborted = None;
    for step in 0..cfg.agent.step_budget {
        let record = |tool: &str, args: BTreeMap<String, String>, out: ToolOutput, s: &Session| StepRecord {
            step,
            tool: tool.into(),
            args,
            success: out.success,
            feedback: out.feedback,
            output: out.output,
            state_after: s.state().clone(),
            world_digest: s.world().digest(),
            skill: out.skill,
        };
        let violation = match backend.next_step(query, &tools, &records) {
            Ok(AgentStep::Finish { answer: a }) => {
                answer = Some(a);
                break;
            }
            Ok(AgentStep::Call(call)) => match validate_call(&call, &tools) {
                Ok(()) => {
                    protocol_errors = 0;
                    let out = dispatch(session, &call, &mut retries, cfg.agent.retry_cap);
                    records.push(record(&call.tool, call.args, out, session));
                    if let Err(e) = session.state().check_invariants() {
                        aborted = Some(format!("state invariant violated: {e}"));
                        break;
                    }
                    continue;
                }
                Err(msg) => record(&call.tool, call.args, fail_output(msg, session), session),
            },
            Err(e) => record(PROTOCOL_ERROR, BTreeMap::new(), fail_output(format!("malformed agent reply: {e}"), session), session),
        };
        records.push(violation);
        protocol_errors += 1;
        if protocol_errors >= 2 {
            aborted = Some("two consecutive protocol errors".to_string());
            break;
        }
    }
    let score = task.map_or(0.0, |t| judge(session.world(), t));
    let spec = session.world().spec();
    EpisodeLog {
        query: query.into(),
        template: spec.template.clone(),
        seed: spec.seed,
        task: task.map(|t| t.name.clone()),
        no_aff: cfg.no_aff,
        records,
        final_state: session.state().clone(),
        answer,
        aborted,
        score,
        retries,
    }
}

fn fail_output(feedback: String, session: &Session) -> ToolOutput {
    ToolOutput { success: false, feedback, output: ToolValue::State(session.state().clone()), skill: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Larger,
    Smaller,
    Left,
    Right,
}

/// A scripted plan step. Argument values `$v` and `$v.N` refer to the first
/// and N-th key bound to variable `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PlanStep {
    /// `object_retrieval(query)`, binding the query's keys to `var`.
    Retrieve { query: String, var: String },
    Call(ToolCall),
    /// Picks one key of `from` with spatial tools and binds it to `var`.
    SelectBy { from: String, criterion: Criterion, var: String },
    Finish { answer: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// Re-issue a failed call up to `max` times.
    RetryOnFailure { max: usize },
    /// Before re-issuing, re-run the retrievals of keys that left the inventory.
    RegroundAfterRemap,
    /// Keep going after failures (log replay).
    IgnoreFailures,
}

#[derive(Debug, Clone)]
enum Pending {
    Reground { var: String, query: String },
}

#[derive(Debug, Clone)]
enum Selection {
    Size { cands: Vec<String>, sizes: Vec<f64>, larger: bool, var: String },
    Lateral { cands: Vec<String>, best: usize, next: usize, left: bool, var: String },
}

impl Selection {
    fn call(&self) -> ToolCall {
        match self {
            Selection::Size { cands, sizes, .. } => ToolCall::new("size_of", &[("a", &cands[sizes.len()])]),
            Selection::Lateral { cands, best, next, left, .. } => {
                let tool = if *left { "left_of" } else { "right_of" };
                ToolCall::new(tool, &[("a", &cands[*next]), ("b", &cands[*best])])
            }
        }
    }

    /// Feeds a tool result; returns the chosen key once done.
    fn feed(&mut self, value: &ToolValue) -> std::result::Result<Option<(String, String)>, String> {
        match (self, value) {
            (Selection::Size { cands, sizes, larger, var }, ToolValue::Real(v)) => {
                sizes.push(*v);
                if sizes.len() < cands.len() {
                    return Ok(None);
                }
                let mut best = 0;
                for i in 1..sizes.len() {
                    if (*larger && sizes[i] > sizes[best]) || (!*larger && sizes[i] < sizes[best]) {
                        best = i;
                    }
                }
                Ok(Some((var.clone(), cands[best].clone())))
            }
            (Selection::Lateral { cands, best, next, var, .. }, ToolValue::Flag(f)) => {
                if *f {
                    *best = *next;
                }
                *next += 1;
                if *next < cands.len() {
                    Ok(None)
                } else {
                    Ok(Some((var.clone(), cands[*best].clone())))
                }
            }
            (_, other) => Err(format!("unexpected comparison result {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
enum Awaiting {
    Retrieve { var: String, query: String },
    Reground { var: String, query: String },
    Plan { keys: Vec<String> },
    Select,
}

/// Deterministic agent replaying a plan, with reactive rules on failure.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    plan: Vec<PlanStep>,
    rules: Vec<Rule>,
    pc: usize,
    vars: BTreeMap<String, Vec<String>>,
    var_queries: BTreeMap<String, String>,
    pending: VecDeque<Pending>,
    selection: Option<Selection>,
    awaiting: Option<Awaiting>,
    retries_used: usize,
}

/// Keys a retrieval of `query` produced, in inventory order.
fn keys_for(query: &str, state: &State) -> Vec<String> {
    let prefix = sanitize_query(query);
    state
        .inventory
        .iter()
        .filter(|k| {
            k.rsplit_once('_').is_some_and(|(p, n)| p == prefix && !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
        })
        .cloned()
        .collect()
}

impl ScriptedPolicy {
    pub fn new(plan: Vec<PlanStep>, rules: Vec<Rule>) -> Result<Self> {
        if plan.is_empty() {
            return Err(Error::InvalidParameter("plan is empty".into()));
        }
        Ok(Self {
            plan,
            rules,
            pc: 0,
            vars: BTreeMap::new(),
            var_queries: BTreeMap::new(),
            pending: VecDeque::new(),
            selection: None,
            awaiting: None,
            retries_used: 0,
        })
    }

    /// Re-issues the calls of a log in order, ignoring failures.
    pub fn replay(log: &EpisodeLog) -> Result<Self> {
        let mut plan: Vec<PlanStep> = log.calls().into_iter().map(PlanStep::Call).collect();
        plan.push(PlanStep::Finish { answer: log.answer.clone().unwrap_or_default() });
        Self::new(plan, vec![Rule::IgnoreFailures])
    }

    /// Hand-written plan for one of the shipped tasks.
    pub fn for_task(scene: &SceneSpec, task: &TaskSpec) -> Result<Self> {
        let rules = vec![Rule::RetryOnFailure { max: 2 }, Rule::RegroundAfterRemap];
        Self::new(plan_for_task(scene, task)?, rules)
    }

    fn retry_max(&self) -> usize {
        self.rules
            .iter()
            .filter_map(|r| match r {
                Rule::RetryOnFailure { max } => Some(*max),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    fn has(&self, rule: Rule) -> bool {
        self.rules.contains(&rule)
    }

    fn resolve(&self, value: &str) -> std::result::Result<String, String> {
        let Some(name) = value.strip_prefix('$') else {
            return Ok(value.to_string());
        };
        let (var, idx) = match name.split_once('.') {
            Some((v, i)) => (v, i.parse::<usize>().map_err(|_| format!("bad variable index in '{value}'"))?),
            None => (name, 0),
        };
        self.vars
            .get(var)
            .and_then(|keys| keys.get(idx))
            .cloned()
            .ok_or_else(|| format!("no object bound to '{value}'"))
    }

    fn finish(answer: impl Into<String>) -> AgentStep {
        AgentStep::Finish { answer: answer.into() }
    }

    /// Handles the outcome of the previous call. `Some` ends the episode.
    fn absorb(&mut self, last: Option<&StepRecord>) -> Option<AgentStep> {
        let awaiting = self.awaiting.take()?;
        let Some(rec) = last else {
            return Some(Self::finish("no result for the previous call"));
        };
        match awaiting {
            Awaiting::Retrieve { var, query } => {
                self.vars.insert(var.clone(), keys_for(&query, &rec.state_after));
                self.var_queries.insert(var, query);
                self.pc += 1;
            }
            Awaiting::Reground { var, query } => {
                self.vars.insert(var, keys_for(&query, &rec.state_after));
            }
            Awaiting::Select => {
                let mut sel = self.selection.take().expect("selection in progress");
                if !rec.success {
                    return Some(Self::finish(format!("could not compare objects: {}", rec.feedback)));
                }
                match sel.feed(&rec.output) {
                    Ok(Some((var, key))) => {
                        self.vars.insert(var, vec![key]);
                        self.pc += 1;
                    }
                    Ok(None) => self.selection = Some(sel),
                    Err(e) => return Some(Self::finish(e)),
                }
            }
            Awaiting::Plan { keys } => {
                if rec.success || self.has(Rule::IgnoreFailures) {
                    self.pc += 1;
                    self.retries_used = 0;
                    return None;
                }
                if self.retries_used >= self.retry_max() {
                    return Some(Self::finish(format!("unable to complete the task: {}", rec.feedback)));
                }
                self.retries_used += 1;
                if self.has(Rule::RegroundAfterRemap) {
                    let st = &rec.state_after;
                    let lost = keys.iter().any(|k| !st.inventory.contains(k) && st.held_object.as_ref() != Some(k));
                    if lost {
                        let vars = self.step_vars();
                        for var in vars {
                            if let Some(query) = self.var_queries.get(&var) {
                                self.pending.push_back(Pending::Reground { var, query: query.clone() });
                            }
                        }
                    }
                }
            }
        }
        None
    }

    /// Variables referenced by the current plan step.
    fn step_vars(&self) -> Vec<String> {
        let Some(PlanStep::Call(call)) = self.plan.get(self.pc) else {
            return Vec::new();
        };
        let mut vars: Vec<String> = call
            .args
            .values()
            .filter_map(|v| v.strip_prefix('$'))
            .map(|v| v.split_once('.').map_or(v, |(name, _)| name).to_string())
            .collect();
        vars.dedup();
        vars
    }
}

impl AgentBackend for ScriptedPolicy {
    fn next_step(&mut self, _query: &str, _manifest: &[ToolSpec], history: &[StepRecord]) -> Result<AgentStep> {
        if let Some(done) = self.absorb(history.last()) {
            return Ok(done);
        }
        if let Some(Pending::Reground { var, query }) = self.pending.pop_front() {
            self.awaiting = Some(Awaiting::Reground { var, query: query.clone() });
            return Ok(AgentStep::Call(ToolCall::new("object_retrieval", &[("query", &query)])));
        }
        if let Some(sel) = &self.selection {
            self.awaiting = Some(Awaiting::Select);
            return Ok(AgentStep::Call(sel.call()));
        }
        loop {
            let Some(step) = self.plan.get(self.pc).cloned() else {
                return Ok(Self::finish("plan exhausted"));
            };
            match step {
                PlanStep::Retrieve { query, var } => {
                    self.awaiting = Some(Awaiting::Retrieve { var, query: query.clone() });
                    return Ok(AgentStep::Call(ToolCall::new("object_retrieval", &[("query", &query)])));
                }
                PlanStep::Call(call) => {
                    let mut args = BTreeMap::new();
                    for (k, v) in &call.args {
                        match self.resolve(v) {
                            Ok(r) => args.insert(k.clone(), r),
                            Err(e) => return Ok(Self::finish(format!("unable to complete the task: {e}"))),
                        };
                    }
                    let keys = call.args.iter().filter(|(_, v)| v.starts_with('$')).map(|(k, _)| args[k].clone()).collect();
                    self.awaiting = Some(Awaiting::Plan { keys });
                    return Ok(AgentStep::Call(ToolCall { tool: call.tool, args }));
                }
                PlanStep::SelectBy { from, criterion, var } => {
                    let cands = self.vars.get(&from).cloned().unwrap_or_default();
                    match cands.len() {
                        0 => return Ok(Self::finish(format!("no candidates bound to '{from}'"))),
                        1 => {
                            self.vars.insert(var, cands);
                            self.pc += 1;
                        }
                        _ => {
                            let sel = match criterion {
                                Criterion::Larger | Criterion::Smaller => {
                                    Selection::Size { cands, sizes: Vec::new(), larger: criterion == Criterion::Larger, var }
                                }
                                Criterion::Left | Criterion::Right => {
                                    Selection::Lateral { cands, best: 0, next: 1, left: criterion == Criterion::Left, var }
                                }
                            };
                            self.awaiting = Some(Awaiting::Select);
                            let call = sel.call();
                            self.selection = Some(sel);
                            return Ok(AgentStep::Call(call));
                        }
                    }
                }
                PlanStep::Finish { answer } => return Ok(Self::finish(answer)),
            }
        }
    }
}

fn label_of(scene: &SceneSpec, id: &str) -> Result<String> {
    scene
        .object_index(id)
        .map(|i| scene.objects[i].label.clone())
        .ok_or_else(|| Error::InvalidParameter(format!("task references unknown object '{id}'")))
}

fn criterion_in(query: &str) -> Option<Criterion> {
    let q = query.to_lowercase();
    let has = |w: &str| q.split(|c: char| !c.is_alphanumeric()).any(|t| t == w);
    if has("larger") || has("bigger") || has("largest") || has("biggest") {
        Some(Criterion::Larger)
    } else if has("smaller") || has("smallest") {
        Some(Criterion::Smaller)
    } else if has("left") {
        Some(Criterion::Left)
    } else if has("right") {
        Some(Criterion::Right)
    } else {
        None
    }
}

/// Plan for a shipped task, built from scene labels and the query wording.
pub fn plan_for_task(scene: &SceneSpec, task: &TaskSpec) -> Result<Vec<PlanStep>> {
    let mobile = scene.mode == Mode::Mobile;
    let call = |tool: &str, args: &[(&str, &str)]| PlanStep::Call(ToolCall::new(tool, args));
    let retrieve = |query: &str, var: &str| PlanStep::Retrieve { query: query.into(), var: var.into() };
    let mut plan = Vec::new();
    // Grounds `id` into `var`, disambiguating by the query's criterion when
    // the label is shared.
    let ground = |plan: &mut Vec<PlanStep>, id: &str, var: &str| -> Result<()> {
        let label = label_of(scene, id)?;
        let shared = scene.objects.iter().filter(|o| o.label == label).count() > 1;
        match criterion_in(&task.query).filter(|_| shared) {
            Some(criterion) => {
                plan.push(retrieve(&label, "cands"));
                plan.push(PlanStep::SelectBy { from: "cands".into(), criterion, var: var.into() });
            }
            None => plan.push(retrieve(&label, var)),
        }
        Ok(())
    };
    let act = |plan: &mut Vec<PlanStep>, var: &str, action: &str| {
        let key = format!("${var}");
        if mobile {
            plan.push(call("go_to", &[("obj", &key), ("action", action)]));
        }
        plan.push(call("interact", &[("obj", &key), ("action", action)]));
    };
    match &task.goal {
        Goal::Contained { objects, container } => {
            let release = if mobile { "drop into" } else { "place in" };
            for (i, obj) in objects.iter().enumerate() {
                let var = format!("item{i}");
                ground(&mut plan, obj, &var)?;
                act(&mut plan, &var, "pick up");
                plan.push(retrieve(&label_of(scene, container)?, "target"));
                act(&mut plan, "target", release);
            }
        }
        Goal::PlacedOn { object, target } => {
            ground(&mut plan, object, "item")?;
            act(&mut plan, "item", "pick up");
            plan.push(retrieve(&label_of(scene, target)?, "target"));
            act(&mut plan, "target", "place on");
        }
        Goal::Held { object } => {
            ground(&mut plan, object, "item")?;
            act(&mut plan, "item", &task.query);
        }
        Goal::Pressed { object, .. } | Goal::OpenFraction { object, .. } | Goal::Detached { object } => {
            ground(&mut plan, object, "item")?;
            act(&mut plan, "item", &task.query);
        }
    }
    plan.push(PlanStep::Finish { answer: "done".into() });
    Ok(plan)
}

/// Remote agent: POSTs `{query, manifest, history}` and expects an
/// [`AgentStep`] back.
pub struct ExternalBackend {
    client: JsonClient,
}

impl ExternalBackend {
    pub fn new(cfg: &RemoteConfig) -> Result<Self> {
        Ok(Self { client: JsonClient::new(cfg)? })
    }
}

impl AgentBackend for ExternalBackend {
    fn next_step(&mut self, query: &str, manifest: &[ToolSpec], history: &[StepRecord]) -> Result<AgentStep> {
        self.client.post(&json!({"query": query, "manifest": manifest, "history": history}))
    }
}

/// Everything needed to reproduce one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub template: String,
    pub seed: u64,
    pub task: String,
    #[serde(default)]
    pub no_aff: bool,
    #[serde(default)]
    pub noise: NoiseConfig,
}

impl EpisodeSpec {
    pub fn new(template: &str, seed: u64, task: &str) -> Self {
        Self { template: template.into(), seed, task: task.into(), no_aff: false, noise: NoiseConfig::default() }
    }

    pub fn with_no_aff(mut self, no_aff: bool) -> Self {
        self.no_aff = no_aff;
        self
    }

    /// Scene, task and a session with mock perception backends.
    pub fn setup(&self, base: &AspConfig) -> Result<(Session, TaskSpec)> {
        let scene = generate_scene(&self.template, self.seed)?;
        let task = scene
            .task(&self.task)
            .cloned()
            .ok_or_else(|| Error::InvalidParameter(format!("template '{}' has no task '{}'", self.template, self.task)))?;
        let mut cfg = base.clone();
        cfg.mode = scene.mode;
        cfg.no_aff = self.no_aff;
        let world = SimWorld::new(Arc::new(scene), self.noise.clone());
        Ok((Session::with_mocks(world, cfg)?, task))
    }

    /// Runs the task with its scripted plan.
    pub fn run_scripted(&self, base: &AspConfig) -> Result<EpisodeLog> {
        let (mut session, task) = self.setup(base)?;
        let mut policy = ScriptedPolicy::for_task(session.world().spec(), &task)?;
        Ok(run_episode(&mut session, &task.query.clone(), Some(&task), &mut policy))
    }

    pub fn run_with(&self, base: &AspConfig, backend: &mut dyn AgentBackend) -> Result<EpisodeLog> {
        let (mut session, task) = self.setup(base)?;
        Ok(run_episode(&mut session, &task.query.clone(), Some(&task), backend))
    }
}
