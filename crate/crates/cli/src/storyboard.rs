//! SVG storyboards: one panel per timestep, left to right, with the actions
//! taken from each state drawn as arrows and a belief strip underneath.

use std::fmt::Write;

use storyplan::inference::{query_mask, BeliefTrace, Hypothesis, HypothesisSpace};
use storyplan::world::{AgentAction, Cell, Script, Transition};

const CELL: usize = 20;
const GAP: usize = 14;
const MARGIN: usize = 10;
const HEADER: usize = 18;
const STRIP: usize = 44;

const HELP_COLOR: &str = "#2e9e5b";
const NEUTRAL_COLOR: &str = "#9e9e9e";
const HINDER_COLOR: &str = "#c0392b";

fn centre(origin: (usize, usize), c: Cell) -> (usize, usize) {
    (
        origin.0 + c.col as usize * CELL + CELL / 2,
        origin.1 + c.row as usize * CELL + CELL / 2,
    )
}

fn arrow(svg: &mut String, from: (usize, usize), action: AgentAction, who: &str, color: &str, dashed: bool) {
    if !action.is_move() {
        return;
    }
    let (dx, dy) = action.delta();
    let reach = (CELL * 3 / 4) as i64;
    let x2 = from.0 as i64 + dx as i64 * reach;
    let y2 = from.1 as i64 + dy as i64 * reach;
    let dash = if dashed { r#" stroke-dasharray="3 2""# } else { "" };
    let _ = writeln!(
        svg,
        r#"<line x1="{}" y1="{}" x2="{x2}" y2="{y2}" stroke="{color}" stroke-width="2"{dash} marker-end="url(#head-{who})"/>"#,
        from.0, from.1
    );
}

/// Renders `script` with its belief `trace` as a standalone SVG document.
pub fn render_storyboard(script: &Script, trace: &BeliefTrace, space: &HypothesisSpace) -> String {
    let layout = script.layout();
    let width = layout.width() as usize * CELL;
    let height = layout.height() as usize * CELL;
    let panels = script.len() + 1;
    let total_w = 2 * MARGIN + panels * width + (panels - 1) * GAP;
    let total_h = 2 * MARGIN + HEADER + height + STRIP;

    let rational = space.mask(Hypothesis::is_rational_pair);
    let classes = [
        (space.mask(|h| h.rho > 0), HELP_COLOR),
        (space.mask(|h| h.rho == 0), NEUTRAL_COLOR),
        (space.mask(|h| h.rho < 0), HINDER_COLOR),
    ];

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" viewBox="0 0 {total_w} {total_h}" font-family="monospace" font-size="11">"#
    );
    svg.push_str(
        r##"<defs>
<marker id="head-robot" markerUnits="userSpaceOnUse" markerWidth="7" markerHeight="7" refX="6" refY="3.5" orient="auto"><path d="M0,0 L7,3.5 L0,7 z" fill="#1a1a1a"/></marker>
<marker id="head-cheese" markerUnits="userSpaceOnUse" markerWidth="7" markerHeight="7" refX="6" refY="3.5" orient="auto"><path d="M0,0 L7,3.5 L0,7 z" fill="#d35400"/></marker>
</defs>
"##,
    );
    let _ = writeln!(svg, r#"<rect width="{total_w}" height="{total_h}" fill="white"/>"#);

    for (t, state) in script.states().enumerate() {
        let x0 = MARGIN + t * (width + GAP);
        let y0 = MARGIN + HEADER;
        let arrived_by_deus = t > 0 && script.transitions()[t - 1].is_deus();
        let _ = writeln!(svg, r#"<g id="panel-{t}">"#);
        let label = if arrived_by_deus {
            format!("t={t} deus")
        } else {
            format!("t={t}")
        };
        let _ = writeln!(svg, r#"<text x="{x0}" y="{}">{label}</text>"#, y0 - 5);

        for row in 0..layout.height() {
            for col in 0..layout.width() {
                let c = Cell::new(col, row);
                let fill = if layout.is_wall(c) {
                    "#444444"
                } else if c == layout.pink() {
                    "#f7b6d2"
                } else if c == layout.green() {
                    "#a8dca8"
                } else {
                    "#fafafa"
                };
                let _ = writeln!(
                    svg,
                    r##"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#dddddd"/>"##,
                    x0 + col as usize * CELL,
                    y0 + row as usize * CELL
                );
            }
        }
        if let Some(table) = state.table {
            let _ = writeln!(
                svg,
                r##"<rect class="table" x="{}" y="{}" width="{}" height="{}" fill="#8b5a2b"/>"##,
                x0 + table.col as usize * CELL + 2,
                y0 + table.row as usize * CELL + 2,
                CELL - 4,
                CELL - 4
            );
        }
        let (cx, cy) = centre((x0, y0), state.cheese);
        let r = CELL / 2 - 3;
        let _ = writeln!(
            svg,
            r##"<path class="cheese" d="M{},{} L{},{} L{},{} z" fill="#f2c94c" stroke="#b7950b"/>"##,
            cx - r,
            cy + r,
            cx + r,
            cy + r,
            cx,
            cy - r
        );
        let (rx, ry) = centre((x0, y0), state.robot);
        let _ = writeln!(
            svg,
            r##"<circle class="robot" cx="{rx}" cy="{ry}" r="{r}" fill="#3b6fd6"/>"##
        );

        if let Some(Transition::Joint {
            robot,
            cheese,
            cheese_success,
            ..
        }) = script.transitions().get(t)
        {
            arrow(&mut svg, (rx, ry), *robot, "robot", "#1a1a1a", false);
            arrow(&mut svg, (cx, cy), *cheese, "cheese", "#d35400", !cheese_success);
        }

        if arrived_by_deus {
            let _ = writeln!(
                svg,
                r##"<rect class="deus" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#8e44ad" stroke-width="3"/>"##,
                x0 - 3,
                y0 - 3,
                width + 6,
                height + 6
            );
        }

        // Belief strip: P(rho > 0), P(rho = 0), P(rho < 0), all given rationality.
        let strip_top = y0 + height + 8;
        let bar_h = STRIP - 14;
        let bar_w = width / 3;
        let belief = &trace.step(t).belief;
        for (i, (mask, color)) in classes.iter().enumerate() {
            let p = query_mask(belief, mask, Some(&rational)).unwrap_or(0.0);
            let h = p * bar_h as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{:.2}" width="{}" height="{:.2}" fill="{color}"/>"#,
                x0 + i * bar_w + 1,
                (strip_top + bar_h) as f64 - h,
                bar_w - 2,
                h
            );
        }
        let _ = writeln!(
            svg,
            r##"<line x1="{x0}" y1="{}" x2="{}" y2="{}" stroke="#999999"/>"##,
            strip_top + bar_h,
            x0 + width,
            strip_top + bar_h
        );
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}
