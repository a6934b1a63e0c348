use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use super::scenario::Scenario;
use super::world::{Command, Origin, Policy, World};
use super::SimError;
use crate::geoloc::CasualtyId;
use crate::orchestrator::{Scorecard, BUILTIN_PLUGINS};

/// One scripted operator command, issued at a time or a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub at: Option<f64>,
    pub step: Option<u64>,
    pub command: Command,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub policy: Policy,
    pub commands: Vec<ScriptEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScript {
    policy: Policy,
    #[serde(default)]
    commands: Vec<RawEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    at: Option<f64>,
    step: Option<u64>,
    kind: String,
    robot: Option<String>,
    casualty: Option<CasualtyId>,
    plugin: Option<String>,
    enabled: Option<bool>,
}

impl RawEntry {
    fn command(self, i: usize) -> Result<Command, SimError> {
        let need = |field: &str| SimError::Script {
            path: format!("commands[{i}].{field}"),
            message: format!("`{}` needs `{field}`", self.kind),
        };
        let extra = |field: &str| SimError::Script {
            path: format!("commands[{i}].{field}"),
            message: format!("`{}` does not take `{field}`", self.kind),
        };
        let cmd = match self.kind.as_str() {
            "dispatch" => Command::Dispatch {
                robot: self.robot.clone().ok_or_else(|| need("robot"))?,
                casualty: self.casualty.ok_or_else(|| need("casualty"))?,
            },
            "trigger" => Command::Trigger { robot: self.robot.clone().ok_or_else(|| need("robot"))? },
            "toggle_plugin" => Command::TogglePlugin {
                plugin: self.plugin.clone().ok_or_else(|| need("plugin"))?,
                enabled: self.enabled.ok_or_else(|| need("enabled"))?,
            },
            other => {
                return Err(SimError::Script {
                    path: format!("commands[{i}].kind"),
                    message: format!("unknown command kind {other:?}"),
                })
            }
        };
        let uses: &[&str] = match cmd {
            Command::Dispatch { .. } => &["robot", "casualty"],
            Command::Trigger { .. } => &["robot"],
            Command::TogglePlugin { .. } => &["plugin", "enabled"],
        };
        for (name, present) in [
            ("robot", self.robot.is_some()),
            ("casualty", self.casualty.is_some()),
            ("plugin", self.plugin.is_some()),
            ("enabled", self.enabled.is_some()),
        ] {
            if present && !uses.contains(&name) {
                return Err(extra(name));
            }
        }
        Ok(cmd)
    }
}

impl Default for Script {
    fn default() -> Self {
        Script::auto()
    }
}

impl Script {
    pub fn auto() -> Script {
        Script { policy: Policy::Auto, commands: Vec::new() }
    }

    pub fn manual(commands: Vec<ScriptEntry>) -> Script {
        Script { policy: Policy::Manual, commands }
    }

    pub fn parse(text: &str) -> Result<Script, SimError> {
        let de = toml::Deserializer::parse(text).map_err(|e| SimError::Script {
            path: String::new(),
            message: e.to_string(),
        })?;
        let raw: RawScript = serde_path_to_error::deserialize(de).map_err(|e| SimError::Script {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        let mut commands = Vec::new();
        for (i, r) in raw.commands.into_iter().enumerate() {
            let (at, step) = (r.at, r.step);
            commands.push(ScriptEntry { at, step, command: r.command(i)?, origin: Origin::Script });
        }
        let script = Script { policy: raw.policy, commands };
        for (i, c) in script.commands.iter().enumerate() {
            if c.at.is_some() == c.step.is_some() {
                return Err(SimError::Script {
                    path: format!("commands[{i}]"),
                    message: "exactly one of `at` and `step` is required".into(),
                });
            }
            if let Some(t) = c.at {
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(SimError::Script {
                        path: format!("commands[{i}].at"),
                        message: format!("time must be non-negative, got {t}"),
                    });
                }
            }
        }
        Ok(script)
    }

    /// Rejects references to robots or plugins the scenario does not have.
    /// Casualty ids only exist at run time and are checked then.
    pub fn check(&self, scenario: &Scenario) -> Result<(), SimError> {
        for c in &self.commands {
            match &c.command {
                Command::Dispatch { robot, .. } | Command::Trigger { robot } => {
                    if !scenario.robots.iter().any(|r| &r.id == robot) {
                        return Err(SimError::ScriptReferencesUnknownEntity { kind: "robot", name: robot.clone() });
                    }
                }
                Command::TogglePlugin { plugin, .. } => {
                    if !BUILTIN_PLUGINS.contains(&plugin.as_str()) && plugin != "description" {
                        return Err(SimError::ScriptReferencesUnknownEntity { kind: "plugin", name: plugin.clone() });
                    }
                }
            }
        }
        Ok(())
    }

    fn step_of(&self, entry: &ScriptEntry, dt: f64) -> u64 {
        entry.step.unwrap_or_else(|| (entry.at.unwrap_or(0.0) / dt - 1e-9).ceil().max(0.0) as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub scorecards: BTreeMap<CasualtyId, Scorecard>,
    pub metrics: Metrics,
    pub events: Vec<String>,
}

impl RunOutput {
    /// Scorecards as one canonical JSON array, ordered by casualty id.
    pub fn scorecards_json(&self) -> String {
        let items: Vec<String> = self.scorecards.values().map(|s| s.to_canonical_json()).collect();
        format!("[{}]", items.join(","))
    }

    pub fn events_text(&self) -> String {
        let mut s = self.events.join("\n");
        s.push('\n');
        s
    }
}

/// Runs a scenario to completion without a UI. Scripted commands enter the
/// queue just before their step and are checked when applied.
pub fn run_headless(scenario: Scenario, script: &Script) -> Result<RunOutput, SimError> {
    script.check(&scenario)?;
    let dt = scenario.sim.dt;
    let mut queue: Vec<(u64, usize)> =
        script.commands.iter().enumerate().map(|(i, c)| (script.step_of(c, dt), i)).collect();
    queue.sort();
    let mut world = World::new(scenario, script.policy)?;
    let mut next = 0;
    while !world.is_finished() {
        while next < queue.len() && queue[next].0 <= world.step_index() {
            let e = &script.commands[queue[next].1];
            world.enqueue(e.command.clone(), e.origin);
            next += 1;
        }
        world.step();
    }
    Ok(RunOutput {
        scorecards: world.basestation_scorecards(),
        metrics: Metrics::compute(&world),
        events: world.events().to_vec(),
    })
}

/// Rebuilds the script behind an event log: the policy from the start
/// record and every non-automatic command at the step it entered the
/// simulation. Running it reproduces the log.
pub fn replay_script(events: &[String]) -> Result<Script, SimError> {
    let bad = |line: usize, message: String| SimError::Script { path: format!("events[{line}]"), message };
    let mut policy = None;
    let mut commands = Vec::new();
    for (i, line) in events.iter().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(i, e.to_string()))?;
        match v["kind"].as_str() {
            Some("start") => {
                policy = Some(serde_json::from_value(v["policy"].clone()).map_err(|e| bad(i, e.to_string()))?);
            }
            Some("command") | Some("command_rejected") => {
                let origin: Origin =
                    serde_json::from_value(v["origin"].clone()).map_err(|e| bad(i, e.to_string()))?;
                if origin == Origin::Auto {
                    continue;
                }
                let command: Command =
                    serde_json::from_value(v["command"].clone()).map_err(|e| bad(i, e.to_string()))?;
                let step = v["step"].as_u64().ok_or_else(|| bad(i, "missing step".into()))?;
                commands.push(ScriptEntry { at: None, step: Some(step), command, origin });
            }
            _ => {}
        }
    }
    Ok(Script { policy: policy.ok_or_else(|| bad(0, "no start record".into()))?, commands })
}
