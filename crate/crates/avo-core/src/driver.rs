//! The continuous evolution loop: seed, vary, score, commit, supervise,
//! persist.
//!
//! The driver is a single orchestrating control flow. It evaluates and
//! commits the seed as version 0, then loops variation steps until a
//! termination condition: the configured number of committed versions, the
//! attempt cap, the optional wall-clock budget, or — with scripted
//! components — the rewrite fixed point (a committed version identical to
//! its parent). The supervisor is consulted after every attempt; events it
//! raises are recorded in the run log and delivered to exactly one
//! subsequent variation step. When a repository is configured, every
//! accepted version is persisted immediately, so a crash between attempts
//! loses at most the in-flight attempt.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::knowledge::{KnowledgeBase, KnowledgeError};
use crate::lineage::{
    accept_candidate, now_millis, Aggregation, Candidate, Decision, Lineage, LineageError,
    Solution,
};
use crate::minivm::task::{TaskError, TaskSpec};
use crate::minivm::ParseError;
use crate::scoring::{Scorer, ScorerSettings, ScoringError};
use crate::store::{StoreError, VersionStore};
use crate::supervisor::{
    detect_cycle, detect_stall, intervene, AttemptOutcome, Direction, DirectionRegistry,
    FailureKind, FailureSignature, RegistryError, SupervisorConfig, SupervisorEvent, Trigger,
};
use crate::variation::agentic::{
    vary_agentic, AgentPolicy, StepBudget, StepInputs,
};
use crate::variation::classical::{vary_classical, Generator, SampleSpec};
use crate::variation::model::{ModelBackedPolicy, ModelClient, ModelError};
use crate::variation::scripted::ScriptedAgentPolicy;
use crate::variation::VariationOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    #[default]
    Agentic,
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    #[default]
    Scripted,
    Model,
}

/// Where the seed program comes from; absent means the task reference.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedSolution {
    pub path: Option<PathBuf>,
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub timeout_seconds: f64,
    pub noise_sigma: f64,
    pub repeats: u32,
    pub scale: f64,
    pub noise_seed: u64,
    pub warmup_rounds: u32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let s = ScorerSettings::default();
        EvalConfig {
            timeout_seconds: s.timeout.as_secs_f64(),
            noise_sigma: s.noise_sigma,
            repeats: s.repeats,
            scale: s.scale,
            noise_seed: s.noise_seed,
            warmup_rounds: s.warmup_rounds,
        }
    }
}

impl EvalConfig {
    fn scorer_settings(&self) -> ScorerSettings {
        ScorerSettings {
            scale: self.scale,
            noise_sigma: self.noise_sigma,
            repeats: self.repeats,
            noise_seed: self.noise_seed,
            timeout: Duration::from_secs_f64(self.timeout_seconds),
            warmup_rounds: self.warmup_rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassicalConfig {
    pub tau: f64,
    pub k: usize,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        ClassicalConfig { tau: 1.0, k: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub max_tool_calls: u32,
    pub max_evals: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        let b = StepBudget::default();
        AgentConfig {
            max_tool_calls: b.max_tool_calls,
            max_evals: b.max_evals,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupervisorKeys {
    pub stall_window: u32,
    pub cycle_threshold: u32,
    pub summary_versions: u32,
    pub directions_per_event: u32,
    pub stall_seconds: Option<f64>,
    pub directions_path: Option<PathBuf>,
}

impl Default for SupervisorKeys {
    fn default() -> Self {
        let c = SupervisorConfig::default();
        SupervisorKeys {
            stall_window: c.stall_window,
            cycle_threshold: c.cycle_threshold,
            summary_versions: c.summary_versions,
            directions_per_event: c.directions_per_event,
            stall_seconds: None,
            directions_path: None,
        }
    }
}

impl SupervisorKeys {
    fn supervisor_config(&self) -> SupervisorConfig {
        SupervisorConfig {
            stall_window: self.stall_window,
            cycle_threshold: self.cycle_threshold,
            summary_versions: self.summary_versions,
            directions_per_event: self.directions_per_event,
            stall_seconds: self.stall_seconds,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnowledgeKeys {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunLimits {
    pub max_seconds: Option<f64>,
}

/// The complete run configuration; mirrors the structured config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: PathBuf,
    #[serde(default)]
    pub operator: OperatorKind,
    #[serde(default)]
    pub policy: PolicyKind,
    /// Root rng seed for the whole run.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub repository: Option<PathBuf>,
    #[serde(default = "RunConfig::default_max_versions")]
    pub max_versions: u32,
    #[serde(default = "RunConfig::default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub seed_solution: SeedSolution,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub classical: ClassicalConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub supervisor: SupervisorKeys,
    #[serde(default)]
    pub knowledge: KnowledgeKeys,
    #[serde(default)]
    pub run: RunLimits,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: PathBuf::new(),
            operator: OperatorKind::default(),
            policy: PolicyKind::default(),
            seed: 0,
            repository: None,
            max_versions: Self::default_max_versions(),
            max_attempts: Self::default_max_attempts(),
            aggregation: Aggregation::default(),
            seed_solution: SeedSolution::default(),
            eval: EvalConfig::default(),
            classical: ClassicalConfig::default(),
            agent: AgentConfig::default(),
            supervisor: SupervisorKeys::default(),
            knowledge: KnowledgeKeys::default(),
            run: RunLimits::default(),
        }
    }
}

impl RunConfig {
    fn default_max_versions() -> u32 {
        40
    }

    fn default_max_attempts() -> u32 {
        500
    }

    pub fn from_toml_str(text: &str) -> Result<RunConfig, DriverError> {
        toml::from_str(text).map_err(|e| DriverError::Config(e.to_string()))
    }

    /// Load a config file, resolving relative paths against its directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<RunConfig, DriverError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut config = RunConfig::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.task);
        if let Some(repo) = &mut self.repository {
            resolve(repo);
        }
        if let Some(p) = &mut self.seed_solution.path {
            resolve(p);
        }
        if let Some(p) = &mut self.supervisor.directions_path {
            resolve(p);
        }
        if let Some(p) = &mut self.knowledge.path {
            resolve(p);
        }
    }

    fn step_budget(&self) -> StepBudget {
        StepBudget {
            max_tool_calls: self.agent.max_tool_calls,
            max_evals: self.agent.max_evals,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DriverError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Lineage(#[from] LineageError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("seed program: {0}")]
    SeedParse(#[from] ParseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Why the loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxVersions,
    MaxAttempts,
    MaxSeconds,
    FixedPoint,
    TransportFailure,
}

/// One driver-level variation attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub index: u32,
    pub outcome: AttemptOutcome,
    pub evaluations: u32,
    pub tool_calls: u32,
    pub started_at_ms: i64,
    pub finished_at_ms: i64,
}

/// The durable record of a run: every attempt (committed or not),
/// supervisor events, and the stop reason. Attempt count is always at
/// least the committed-version count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub attempts: Vec<AttemptRecord>,
    pub events: Vec<SupervisorEvent>,
    pub stop: StopReason,
}

impl RunLog {
    pub fn commits(&self) -> u32 {
        self.attempts
            .iter()
            .filter(|a| a.outcome.is_accepted())
            .count() as u32
    }

    /// Copy with timestamps zeroed, for determinism comparisons.
    pub fn normalized(&self) -> RunLog {
        let mut log = self.clone();
        for attempt in &mut log.attempts {
            attempt.started_at_ms = 0;
            attempt.finished_at_ms = 0;
        }
        log
    }
}

/// Everything a run needs in memory; loaded from a [`RunConfig`] or built
/// directly by tests.
pub struct RunResources {
    pub task: TaskSpec,
    pub kb: KnowledgeBase,
    pub registry: DirectionRegistry,
    pub seed_source: String,
}

impl RunResources {
    pub fn load(config: &RunConfig) -> Result<RunResources, DriverError> {
        let task = TaskSpec::from_path(&config.task)?;
        let kb = match &config.knowledge.path {
            Some(path) => KnowledgeBase::load_dir(path)?,
            None => KnowledgeBase::builtin(),
        };
        let registry = match &config.supervisor.directions_path {
            Some(path) => DirectionRegistry::from_path(path)?,
            None => default_directions(),
        };
        let seed_source = match (&config.seed_solution.path, &config.seed_solution.source) {
            (Some(_), Some(_)) => {
                return Err(DriverError::Config(
                    "seed_solution: give either path or source, not both".to_string(),
                ))
            }
            (Some(path), None) => std::fs::read_to_string(path)?,
            (None, Some(source)) => source.clone(),
            (None, None) => task.reference.to_string(),
        };
        crate::minivm::parse_program(&seed_source)?;
        Ok(RunResources {
            task,
            kb,
            registry,
            seed_source,
        })
    }
}

/// Built-in direction registry: one entry per sound rewrite rule plus two
/// broader hints.
pub fn default_directions() -> DirectionRegistry {
    let hint = |id: &str, hint: &str| Direction {
        id: id.to_string(),
        hint: hint.to_string(),
        tried: false,
        last_tried_at: None,
    };
    DirectionRegistry::new(vec![
        hint("dead-code-elim", "Look for writes no later instruction reads."),
        hint("strength-reduce", "Rewrite constant multiplies into shift/add form."),
        hint("const-fold", "Precompute arithmetic over known constants."),
        hint("mov-collapse", "Bypass register copies by renaming readers."),
        hint("nop-remove", "Delete nops; every instruction costs cycles."),
        hint("shorten-program", "Fewer instructions always cost less; hunt for any removable instruction."),
        hint("consult-knowledge", "Search the knowledge base for the failing pattern before editing."),
    ])
    .expect("builtin ids are unique")
}

/// Run the evolution loop described by the config file.
pub fn run_evolution(config: &RunConfig) -> Result<(Lineage, RunLog), DriverError> {
    let resources = RunResources::load(config)?;
    let mut factory = make_policy_factory(config)?;
    run_evolution_with(config, resources, &mut *factory)
}

type PolicyFactory = dyn FnMut() -> Box<dyn AgentPolicy>;

fn make_policy_factory(config: &RunConfig) -> Result<Box<PolicyFactory>, DriverError> {
    Ok(match config.policy {
        PolicyKind::Scripted => Box::new(|| Box::new(ScriptedAgentPolicy::new())),
        PolicyKind::Model => {
            let client = ModelClient::from_env()?;
            Box::new(move || Box::new(ModelBackedPolicy::new(client.clone())))
        }
    })
}

fn classical_generator(config: &RunConfig) -> Result<Generator, DriverError> {
    Ok(match config.policy {
        PolicyKind::Scripted => Generator::Scripted,
        PolicyKind::Model => Generator::Model(ModelClient::from_env()?),
    })
}

/// Per-attempt rng stream derived from the run seed.
fn attempt_seed(run_seed: u64, attempt: u32) -> u64 {
    run_seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// The evolution loop with explicit resources and an agentic policy
/// factory (one fresh policy per variation step). Tests use this to inject
/// custom policies.
pub fn run_evolution_with(
    config: &RunConfig,
    resources: RunResources,
    policy_factory: &mut PolicyFactory,
) -> Result<(Lineage, RunLog), DriverError> {
    let started = Instant::now();
    let scorer = Scorer::new(resources.task.clone(), config.eval.scorer_settings())?;
    let supervisor_config = config.supervisor.supervisor_config();
    let mut registry = resources.registry;
    let generator = match config.operator {
        OperatorKind::Classical => Some(classical_generator(config)?),
        OperatorKind::Agentic => None,
    };

    // Seed: evaluated and stored as version 0, exempt from acceptance.
    let seed_eval = scorer.evaluate(&resources.seed_source);
    let seed = Solution {
        version: 0,
        parent: None,
        source: resources.seed_source.clone(),
        created_at: now_millis(),
        note: "seed".to_string(),
    };
    let mut lineage = Lineage::new(seed, seed_eval.scores.clone())?;

    let store = match &config.repository {
        Some(path) => {
            let store = VersionStore::init(path)?;
            let entry = lineage.seed();
            store.persist_version(&entry.solution, &entry.scores)?;
            Some(store)
        }
        None => None,
    };

    let mut log = RunLog {
        attempts: Vec::new(),
        events: Vec::new(),
        stop: StopReason::MaxAttempts,
    };
    let mut outcomes: Vec<AttemptOutcome> = Vec::new();
    let mut pending_events: Vec<SupervisorEvent> = Vec::new();
    let mut stall_cut = 0usize;
    let mut cycle_cut = 0usize;
    let mut last_progress = Instant::now();
    let scripted = config.policy == PolicyKind::Scripted;

    let stop = loop {
        if lineage.len() as u32 - 1 >= config.max_versions {
            break StopReason::MaxVersions;
        }
        if log.attempts.len() as u32 >= config.max_attempts {
            break StopReason::MaxAttempts;
        }
        if let Some(max_seconds) = config.run.max_seconds {
            if started.elapsed().as_secs_f64() > max_seconds {
                break StopReason::MaxSeconds;
            }
        }

        let attempt_index = log.attempts.len() as u32 + 1;
        let started_at_ms = now_millis();
        let inputs = StepInputs {
            supervisor_events: std::mem::take(&mut pending_events),
            attempts_before: attempt_index - 1,
        };

        let mut transport_failure = false;
        let mut fixed_point = false;
        let (outcome, evaluations, tool_calls) = match config.operator {
            OperatorKind::Agentic => {
                let mut policy = policy_factory();
                let step = vary_agentic(
                    &mut lineage,
                    &resources.kb,
                    &scorer,
                    &mut *policy,
                    config.step_budget(),
                    config.aggregation,
                    &inputs,
                );
                match step {
                    VariationOutcome::Committed {
                        version,
                        solution,
                        scores,
                        log: step_log,
                    } => {
                        if let Some(store) = &store {
                            store.persist_version(&solution, &scores)?;
                        }
                        let parent_source = solution
                            .parent
                            .and_then(|p| lineage.get(p))
                            .map(|e| e.solution.source.clone());
                        if scripted && parent_source.as_deref() == Some(solution.source.as_str()) {
                            fixed_point = true;
                        }
                        (
                            AttemptOutcome::Accepted { version },
                            step_log.evaluations_used,
                            step_log.tool_calls(),
                        )
                    }
                    VariationOutcome::Exhausted { log: step_log } => {
                        transport_failure = step_log.error.is_some();
                        let signature = step_log.last_failure.clone().unwrap_or_else(|| {
                            FailureSignature::simple(FailureKind::BudgetExhausted, "no-commit")
                        });
                        (
                            AttemptOutcome::Failed { signature },
                            step_log.evaluations_used,
                            step_log.tool_calls(),
                        )
                    }
                }
            }
            OperatorKind::Classical => {
                let spec = SampleSpec {
                    tau: config.classical.tau,
                    k: config.classical.k,
                    rng_seed: attempt_seed(config.seed, attempt_index),
                };
                let generator = generator.as_ref().expect("classical generator configured");
                match vary_classical(&lineage, &spec, generator) {
                    Err(e) => {
                        transport_failure = true;
                        (
                            AttemptOutcome::Failed {
                                signature: FailureSignature::simple(
                                    FailureKind::Transport,
                                    &e.to_string(),
                                ),
                            },
                            0,
                            0,
                        )
                    }
                    Ok(candidate) if candidate.no_op && scripted => {
                        fixed_point = true;
                        (
                            AttemptOutcome::Failed {
                                signature: FailureSignature::simple(
                                    FailureKind::NoImprovement,
                                    "no-op",
                                ),
                            },
                            0,
                            0,
                        )
                    }
                    Ok(candidate) => {
                        let eval = scorer.evaluate(&candidate.source);
                        let decision = accept_candidate(
                            &mut lineage,
                            Candidate {
                                source: candidate.source,
                                parent: Some(candidate.parent_version),
                                note: candidate.note,
                            },
                            &eval,
                            config.aggregation,
                        );
                        let outcome = match decision {
                            Decision::Accepted(version) => {
                                if let Some(store) = &store {
                                    let entry = lineage.get(version).expect("just appended");
                                    store.persist_version(&entry.solution, &entry.scores)?;
                                }
                                AttemptOutcome::Accepted { version }
                            }
                            Decision::Rejected(reason) => AttemptOutcome::Failed {
                                signature: FailureSignature::from_rejection(reason, &eval),
                            },
                        };
                        (outcome, 1, 0)
                    }
                }
            }
        };

        if outcome.is_accepted() {
            last_progress = Instant::now();
        }
        outcomes.push(outcome.clone());
        log.attempts.push(AttemptRecord {
            index: attempt_index,
            outcome,
            evaluations,
            tool_calls,
            started_at_ms,
            finished_at_ms: now_millis(),
        });

        // Supervisor consult: stall first, then cycles; each detector is
        // debounced by slicing history at its previous intervention.
        let wall_clock_stalled = supervisor_config
            .stall_seconds
            .is_some_and(|s| last_progress.elapsed().as_secs_f64() > s);
        if detect_stall(&outcomes[stall_cut..], supervisor_config.stall_window)
            || wall_clock_stalled
        {
            let event = intervene(
                &lineage,
                &outcomes,
                &mut registry,
                &supervisor_config,
                Trigger::Stall,
                attempt_index,
            );
            log.events.push(event.clone());
            pending_events.push(event);
            stall_cut = outcomes.len();
            last_progress = Instant::now();
        } else if detect_cycle(&outcomes[cycle_cut..], supervisor_config.cycle_threshold) {
            let event = intervene(
                &lineage,
                &outcomes,
                &mut registry,
                &supervisor_config,
                Trigger::Cycle,
                attempt_index,
            );
            log.events.push(event.clone());
            pending_events.push(event);
            cycle_cut = outcomes.len();
        }

        if let Some(store) = &store {
            write_runlog(store.root(), &log)?;
        }

        if transport_failure {
            break StopReason::TransportFailure;
        }
        if fixed_point {
            break StopReason::FixedPoint;
        }
    };

    log.stop = stop;
    if let Some(store) = &store {
        write_runlog(store.root(), &log)?;
    }
    Ok((lineage, log))
}

fn write_runlog(root: &Path, log: &RunLog) -> Result<(), DriverError> {
    let text = serde_json::to_string_pretty(log).expect("run logs serialize");
    std::fs::write(root.join("runlog.json"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minivm::task::fixtures;

    fn resources_for(task: TaskSpec) -> RunResources {
        RunResources {
            seed_source: task.reference.to_string(),
            task,
            kb: KnowledgeBase::builtin(),
            registry: default_directions(),
        }
    }

    fn scripted_factory() -> Box<PolicyFactory> {
        Box::new(|| Box::new(ScriptedAgentPolicy::new()))
    }

    #[test]
    fn zero_attempts_leaves_seed_only() {
        let config = RunConfig {
            max_attempts: 0,
            ..RunConfig::default()
        };
        let (lineage, log) =
            run_evolution_with(&config, resources_for(fixtures::times3()), &mut *scripted_factory())
                .unwrap();
        assert_eq!(lineage.len(), 1);
        assert!(log.attempts.is_empty());
        assert_eq!(log.stop, StopReason::MaxAttempts);
    }

    #[test]
    fn agentic_run_reaches_times3_optimum_and_fixed_points() {
        let config = RunConfig {
            max_versions: 10,
            max_attempts: 50,
            ..RunConfig::default()
        };
        let (lineage, log) =
            run_evolution_with(&config, resources_for(fixtures::times3()), &mut *scripted_factory())
                .unwrap();
        assert_eq!(log.stop, StopReason::FixedPoint);
        let best = lineage.best_aggregate(Aggregation::Geomean);
        assert_eq!(best, 500.0);
        assert!(log.attempts.len() as u32 >= log.commits());
    }

    #[test]
    fn classical_run_takes_two_versions_on_deadcode() {
        let config = RunConfig {
            operator: OperatorKind::Classical,
            classical: ClassicalConfig { tau: 1e-9, k: 2 },
            max_versions: 10,
            max_attempts: 50,
            seed: 7,
            ..RunConfig::default()
        };
        let (lineage, log) = run_evolution_with(
            &config,
            resources_for(fixtures::deadcode_times3()),
            &mut *scripted_factory(),
        )
        .unwrap();
        assert_eq!(log.stop, StopReason::FixedPoint);
        // dead-code-elim then strength-reduce, one edit per version.
        assert_eq!(lineage.len(), 3);
        assert_eq!(lineage.get(1).unwrap().solution.note, "dead-code-elim");
        assert_eq!(lineage.get(2).unwrap().solution.note, "strength-reduce");
        assert_eq!(lineage.best_aggregate(Aggregation::Geomean), 500.0);
    }

    #[test]
    fn run_is_deterministic_modulo_timestamps() {
        let config = RunConfig {
            operator: OperatorKind::Classical,
            classical: ClassicalConfig { tau: 0.5, k: 1 },
            seed: 42,
            max_versions: 10,
            max_attempts: 20,
            ..RunConfig::default()
        };
        let run = || {
            run_evolution_with(
                &config,
                resources_for(fixtures::deadcode_times3()),
                &mut *scripted_factory(),
            )
            .unwrap()
        };
        let (lineage_a, log_a) = run();
        let (lineage_b, log_b) = run();
        assert_eq!(log_a.normalized(), log_b.normalized());
        let strip = |l: &Lineage| -> Vec<(String, String)> {
            l.entries()
                .iter()
                .map(|e| (e.solution.source.clone(), format!("{:?}", e.scores)))
                .collect()
        };
        assert_eq!(strip(&lineage_a), strip(&lineage_b));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let text = r#"
task = "tasks/times3.toml"
operator = "classical"
policy = "scripted"
seed = 9
max_versions = 12

[classical]
tau = 0.25
k = 3

[supervisor]
stall_window = 10

[eval]
noise_sigma = 0.05
"#;
        let config = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(config.operator, OperatorKind::Classical);
        assert_eq!(config.classical.tau, 0.25);
        assert_eq!(config.supervisor.stall_window, 10);
        assert_eq!(config.supervisor.cycle_threshold, 5);
        assert_eq!(config.eval.noise_sigma, 0.05);
        assert_eq!(config.max_versions, 12);
        assert_eq!(config.max_attempts, 500);
    }
}
