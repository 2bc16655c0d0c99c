//! Script JSON files. Next states are recomputed on load rather than
//! stored, so a file can never describe an inconsistent chain.

use std::sync::Arc;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use storyplan::world::{resolve, AgentAction, Cell, Script, ScriptError, Transition, WorldLayout, WorldState};

/// A schema violation, located by JSON pointer.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{pointer}: {message}")]
pub struct ScriptFileError {
    pub pointer: String,
    pub message: String,
}

fn err(pointer: impl Into<String>, message: impl Into<String>) -> ScriptFileError {
    ScriptFileError {
        pointer: pointer.into(),
        message: message.into(),
    }
}

#[derive(Serialize)]
struct StateJson {
    robot: [u16; 2],
    cheese: [u16; 2],
    table: Option<[u16; 2]>,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum TransitionJson {
    Joint {
        robot: String,
        cheese: String,
        success: bool,
    },
    Deus {
        cell: [u16; 2],
    },
}

#[derive(Serialize)]
struct ScriptJson {
    layout_hash: String,
    initial: StateJson,
    transitions: Vec<TransitionJson>,
}

fn pair(c: Cell) -> [u16; 2] {
    [c.col, c.row]
}

/// Pretty-printed JSON with a trailing newline.
pub fn script_to_json(script: &Script) -> String {
    let s = script.initial();
    let doc = ScriptJson {
        layout_hash: script.layout().hash(),
        initial: StateJson {
            robot: pair(s.robot),
            cheese: pair(s.cheese),
            table: s.table.map(pair),
        },
        transitions: script
            .transitions()
            .iter()
            .map(|t| match *t {
                Transition::Joint {
                    robot,
                    cheese,
                    cheese_success,
                    ..
                } => TransitionJson::Joint {
                    robot: robot.code().to_string(),
                    cheese: cheese.code().to_string(),
                    success: cheese_success,
                },
                Transition::Deus { drop, .. } => TransitionJson::Deus { cell: pair(drop) },
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("script documents serialize");
    text.push('\n');
    text
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, at: &str, key: &str) -> Result<&'a Value, ScriptFileError> {
    obj.get(key).ok_or_else(|| err(at, format!("missing field '{key}'")))
}

fn object<'a>(v: &'a Value, at: &str) -> Result<&'a serde_json::Map<String, Value>, ScriptFileError> {
    v.as_object().ok_or_else(|| err(at, "expected an object"))
}

fn cell(v: &Value, at: &str, layout: &WorldLayout) -> Result<Cell, ScriptFileError> {
    let items = v.as_array().ok_or_else(|| err(at, "expected [column, row]"))?;
    if items.len() != 2 {
        return Err(err(at, "expected [column, row]"));
    }
    let mut coords = [0u16; 2];
    for (i, x) in items.iter().enumerate() {
        coords[i] = x
            .as_u64()
            .and_then(|x| u16::try_from(x).ok())
            .ok_or_else(|| err(format!("{at}/{i}"), "expected a non-negative integer"))?;
    }
    let c = Cell::new(coords[0], coords[1]);
    if !layout.is_floor(c) {
        return Err(err(at, format!("({}, {}) is not a floor cell", c.col, c.row)));
    }
    Ok(c)
}

fn action(v: &Value, at: &str) -> Result<AgentAction, ScriptFileError> {
    v.as_str()
        .and_then(AgentAction::from_code)
        .ok_or_else(|| err(at, "expected one of \"N\", \"S\", \"E\", \"W\", \"X\""))
}

/// Parses and validates a script file against `layout`.
pub fn script_from_json(text: &str, layout: &Arc<WorldLayout>) -> Result<Script, ScriptFileError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| err("", format!("invalid JSON: {e}")))?;
    let root = object(&doc, "")?;
    for key in root.keys() {
        if !["layout_hash", "initial", "transitions"].contains(&key.as_str()) {
            return Err(err(format!("/{key}"), "unknown field"));
        }
    }

    let hash = field(root, "", "layout_hash")?
        .as_str()
        .ok_or_else(|| err("/layout_hash", "expected a string"))?;
    if hash != layout.hash() {
        return Err(err("/layout_hash", "script was written for a different layout"));
    }

    let initial = object(field(root, "", "initial")?, "/initial")?;
    let robot = cell(field(initial, "/initial", "robot")?, "/initial/robot", layout)?;
    let cheese = cell(field(initial, "/initial", "cheese")?, "/initial/cheese", layout)?;
    let table = match field(initial, "/initial", "table")? {
        Value::Null => None,
        v => Some(cell(v, "/initial/table", layout)?),
    };
    let state = WorldState { robot, cheese, table };
    let mut script = Script::start(Arc::clone(layout), state)
        .map_err(|_| err("/initial", "robot, cheese and table must occupy distinct cells"))?;

    let list = field(root, "", "transitions")?
        .as_array()
        .ok_or_else(|| err("/transitions", "expected an array"))?;
    for (i, item) in list.iter().enumerate() {
        let at = format!("/transitions/{i}");
        let t = object(item, &at)?;
        let prev = script.final_state();
        let kind = field(t, &at, "type")?
            .as_str()
            .ok_or_else(|| err(format!("{at}/type"), "expected a string"))?;
        let transition = match kind {
            "joint" => {
                let robot = action(field(t, &at, "robot")?, &format!("{at}/robot"))?;
                let cheese = action(field(t, &at, "cheese")?, &format!("{at}/cheese"))?;
                let success = field(t, &at, "success")?
                    .as_bool()
                    .ok_or_else(|| err(format!("{at}/success"), "expected a boolean"))?;
                let outcome = resolve(layout, &prev, robot, cheese, success);
                if success && !outcome.cheese_move_feasible {
                    return Err(err(
                        format!("{at}/success"),
                        "the cheese had no free cell to move into, so its move cannot succeed",
                    ));
                }
                Transition::Joint {
                    robot,
                    cheese,
                    cheese_success: success,
                    next: outcome.next,
                }
            }
            "deus" => {
                let drop = cell(field(t, &at, "cell")?, &format!("{at}/cell"), layout)?;
                Transition::Deus {
                    drop,
                    next: WorldState {
                        table: Some(drop),
                        ..prev
                    },
                }
            }
            other => return Err(err(format!("{at}/type"), format!("unknown transition type '{other}'"))),
        };
        script.push(transition).map_err(|e| match e {
            ScriptError::SecondDeus { .. } => err(&at, "only one deus transition is allowed"),
            ScriptError::IllegalDeus { .. } => err(&at, "deus drop needs an absent table and an unoccupied cell"),
            other => err(&at, other.to_string()),
        })?;
    }
    Ok(script)
}
