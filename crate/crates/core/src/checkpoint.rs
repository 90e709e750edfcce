//! Plain-text model checkpoints.
//!
//! ```text
//! graphfolio-checkpoint 1
//! meta assets 5
//! meta window 30
//! ...
//! scaling center <11 values>
//! scaling scale <11 values>
//! param rsae enc1.w 11 8
//! <88 values>
//! param actor gcn.theta 3 9
//! <27 values>
//! ...
//! end
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! save/load cycle is exact. `meta` lines record the network structure and
//! are checked against the configuration on load. Hyperparameters that do not
//! change shapes (κ, γ, learning rates) come from the configuration, and
//! optimizer moments are not stored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::agent::{Agent, AgentConfig};
use crate::backtest::Models;
use crate::features::{InputScaling, Rsae};
use crate::tensor::{ParamStore, Tensor};

pub const MAGIC: &str = "graphfolio-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported checkpoint version {0} (this build reads {VERSION})")]
    Version(String),
    #[error("missing `{0}` in checkpoint")]
    Missing(String),
    #[error("`{field}` is {checkpoint} in the checkpoint but {config} in the config")]
    Mismatch {
        field: &'static str,
        checkpoint: String,
        config: String,
    },
    #[error("invalid model: {0}")]
    Model(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, CheckpointError>;

fn structure(c: &AgentConfig) -> Vec<(&'static str, String)> {
    vec![
        ("assets", c.assets.to_string()),
        ("window", c.window.to_string()),
        ("gcn_order", c.gcn_order.to_string()),
        ("actor_conv1", c.actor_conv1.to_string()),
        ("actor_conv2", c.actor_conv2.to_string()),
        ("critic_conv1", c.critic_conv1.to_string()),
        ("critic_conv2", c.critic_conv2.to_string()),
        ("critic_conv3", c.critic_conv3.to_string()),
        ("critic_uses_weights", c.critic_uses_weights.to_string()),
    ]
}

fn push_values(out: &mut String, values: &[f64]) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

fn push_store(out: &mut String, group: &str, store: &ParamStore) {
    for (_, name, value) in store.iter() {
        let _ = write!(out, "param {group} {name}");
        for d in value.shape() {
            let _ = write!(out, " {d}");
        }
        out.push('\n');
        push_values(out, value.data());
    }
}

/// Serializes both models.
pub fn to_text(models: &Models) -> String {
    let mut out = format!("{MAGIC} {VERSION}\n");
    for (key, value) in structure(models.agent.config()) {
        let _ = writeln!(out, "meta {key} {value}");
    }
    let scaling = models.rsae.scaling();
    out.push_str("scaling center ");
    push_values(&mut out, &scaling.center);
    out.push_str("scaling scale ");
    push_values(&mut out, &scaling.scale);
    push_store(&mut out, "rsae", models.rsae.params());
    push_store(&mut out, "actor", models.agent.actor_params());
    push_store(&mut out, "critic", models.agent.critic_params());
    out.push_str("end\n");
    out
}

pub fn save(models: &Models, path: &Path) -> Result<()> {
    fs::write(path, to_text(models)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_values(line: usize, text: &str) -> Result<Vec<f64>> {
    text.split_ascii_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|_| CheckpointError::Parse {
                line,
                msg: format!("`{t}` is not a number"),
            })
        })
        .collect()
}

/// Parses a checkpoint and rebuilds the models under `config`. The
/// checkpoint's structure must match `config` field by field.
pub fn from_text(text: &str, config: &AgentConfig) -> Result<Models> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let parse_err = |line, msg: &str| CheckpointError::Parse {
        line,
        msg: msg.to_string(),
    };

    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty checkpoint"))?;
    match header.split_once(' ') {
        Some((MAGIC, v)) if v == VERSION.to_string() => {}
        Some((MAGIC, v)) => return Err(CheckpointError::Version(v.to_string())),
        _ => return Err(parse_err(1, "not a graphfolio checkpoint")),
    }

    let mut meta: Vec<(String, String)> = Vec::new();
    let mut center = None;
    let mut scale = None;
    let mut stores = [ParamStore::new(), ParamStore::new(), ParamStore::new()];
    let mut ended = false;
    while let Some((no, line)) = lines.next() {
        let mut words = line.split_ascii_whitespace();
        match words.next() {
            Some("meta") => {
                let (Some(k), Some(v), None) = (words.next(), words.next(), words.next()) else {
                    return Err(parse_err(no, "expected `meta <key> <value>`"));
                };
                meta.push((k.to_string(), v.to_string()));
            }
            Some("scaling") => {
                let (kind, rest) = line["scaling".len()..]
                    .trim_start()
                    .split_once(' ')
                    .ok_or_else(|| parse_err(no, "expected `scaling <center|scale> <values>`"))?;
                let values = parse_values(no, rest)?;
                match kind {
                    "center" => center = Some(values),
                    "scale" => scale = Some(values),
                    other => return Err(parse_err(no, &format!("unknown scaling row `{other}`"))),
                }
            }
            Some("param") => {
                let group = words.next().ok_or_else(|| parse_err(no, "missing group"))?;
                let name = words.next().ok_or_else(|| parse_err(no, "missing name"))?;
                let shape = words
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| parse_err(no, "bad shape"))?;
                let slot = match group {
                    "rsae" => 0,
                    "actor" => 1,
                    "critic" => 2,
                    other => return Err(parse_err(no, &format!("unknown group `{other}`"))),
                };
                let (vno, vline) = lines
                    .next()
                    .ok_or_else(|| parse_err(no, &format!("`{name}` has no values")))?;
                let values = parse_values(vno, vline)?;
                let tensor = Tensor::new(&shape, values)
                    .map_err(|e| parse_err(vno, &format!("`{name}`: {e}")))?;
                if stores[slot].by_name(name).is_some() {
                    return Err(parse_err(no, &format!("duplicate parameter `{name}`")));
                }
                stores[slot].add(name, tensor);
            }
            Some("end") => {
                ended = true;
                break;
            }
            None => {}
            Some(other) => return Err(parse_err(no, &format!("unknown record `{other}`"))),
        }
    }
    if !ended {
        return Err(CheckpointError::Missing("end".into()));
    }

    for (key, want) in structure(config) {
        let found = meta
            .iter()
            .find(|(k, _)| k == key)
            .ok_or_else(|| CheckpointError::Missing(format!("meta {key}")))?;
        if found.1 != want {
            return Err(CheckpointError::Mismatch {
                field: key,
                checkpoint: found.1.clone(),
                config: want,
            });
        }
    }

    let scaling = InputScaling {
        center: center.ok_or_else(|| CheckpointError::Missing("scaling center".into()))?,
        scale: scale.ok_or_else(|| CheckpointError::Missing("scaling scale".into()))?,
    };
    let [rsae, actor, critic] = stores;
    let rsae = Rsae::from_store(rsae)
        .and_then(|r| r.with_scaling(scaling))
        .map_err(CheckpointError::Model)?;
    let agent = Agent::from_stores(*config, actor, critic)
        .map_err(|e| CheckpointError::Model(e.to_string()))?;
    Ok(Models { rsae, agent })
}

pub fn load(path: &Path, config: &AgentConfig) -> Result<Models> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_text(&text, config)
}
