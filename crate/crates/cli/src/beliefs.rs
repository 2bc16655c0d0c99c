//! Belief trace CSV: one row per timestep, `t = 0` being the prior.

use storyplan::inference::{query_mask, BeliefTrace, Hypothesis, HypothesisSpace};
use storyplan::world::{Cell, Script, Tile, Transition};

/// Column names, in file order.
pub const COLUMNS: [&str; 20] = [
    "t",
    "transition",
    "robot",
    "cheese",
    "table",
    "p_rational",
    "p_robot_rational",
    "p_cheese_rational",
    "p_rho_pos",
    "p_rho_zero",
    "p_rho_neg",
    "p_rho_pos_given_rational",
    "p_rho_zero_given_rational",
    "p_rho_neg_given_rational",
    "p_cheese_green_given_rational",
    "p_robot_pink_given_rational",
    "p_robot_green_given_rational",
    "p_robot_none_given_rational",
    "ev_robot",
    "kl_step",
];

fn cell(c: Cell) -> String {
    format!("{}:{}", c.col, c.row)
}

/// Compact label: `EX1` is robot East, cheese Stay, move succeeded;
/// `deus@3:4` is a table drop.
pub fn transition_label(t: &Transition) -> String {
    match *t {
        Transition::Joint {
            robot,
            cheese,
            cheese_success,
            ..
        } => format!("{}{}{}", robot.code(), cheese.code(), u8::from(cheese_success)),
        Transition::Deus { drop, .. } => format!("deus@{}", cell(drop)),
    }
}

struct Masks {
    rational: Vec<bool>,
    raw: Vec<Vec<bool>>,
    conditioned: Vec<Vec<bool>>,
}

fn masks(space: &HypothesisSpace) -> Masks {
    type Pred = fn(&Hypothesis) -> bool;
    let raw: [Pred; 5] = [
        |h| h.r_robot,
        |h| h.r_cheese,
        |h| h.rho > 0,
        |h| h.rho == 0,
        |h| h.rho < 0,
    ];
    let conditioned: [Pred; 7] = [
        |h| h.rho > 0,
        |h| h.rho == 0,
        |h| h.rho < 0,
        |h| h.g_cheese == Tile::Green,
        |h| h.g_robot == Some(Tile::Pink),
        |h| h.g_robot == Some(Tile::Green),
        |h| h.g_robot.is_none(),
    ];
    Masks {
        rational: space.mask(Hypothesis::is_rational_pair),
        raw: raw.iter().map(|p| space.mask(p)).collect(),
        conditioned: conditioned.iter().map(|p| space.mask(p)).collect(),
    }
}

/// Renders the trace of `script` as CSV text.
pub fn beliefs_csv(script: &Script, trace: &BeliefTrace, space: &HypothesisSpace) -> Result<String, csv::Error> {
    let m = masks(space);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for (t, (step, state)) in trace.steps().iter().zip(script.states()).enumerate() {
        let mut row = vec![
            t.to_string(),
            if t == 0 {
                String::new()
            } else {
                transition_label(&script.transitions()[t - 1])
            },
            cell(state.robot),
            cell(state.cheese),
            state.table.map(cell).unwrap_or_default(),
            step.belief.mass(&m.rational).to_string(),
        ];
        for mask in &m.raw {
            row.push(step.belief.mass(mask).to_string());
        }
        for mask in &m.conditioned {
            let p = query_mask(&step.belief, mask, Some(&m.rational)).map_or(String::new(), |p| p.to_string());
            row.push(p);
        }
        row.push(step.ev_robot.map(|v| v.to_string()).unwrap_or_default());
        row.push(step.kl.to_string());
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV of ASCII fields is UTF-8"))
}
