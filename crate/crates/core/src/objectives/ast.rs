use std::fmt;

use crate::inference::Hypothesis;
use crate::world::{AgentAction, Tile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cmp {
    Gt,
    Lt,
    Eq,
}

/// A predicate over hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub enum Pred {
    Rho(Cmp, f64),
    GCheese(Tile),
    GRobot(Option<Tile>),
    And(Box<Pred>, Box<Pred>),
}

impl Pred {
    pub fn holds(&self, h: &Hypothesis) -> bool {
        match self {
            Pred::Rho(cmp, x) => {
                let rho = f64::from(h.rho);
                match cmp {
                    Cmp::Gt => rho > *x,
                    Cmp::Lt => rho < *x,
                    Cmp::Eq => rho == *x,
                }
            }
            Pred::GCheese(t) => h.g_cheese == *t,
            Pred::GRobot(t) => h.g_robot == *t,
            Pred::And(a, b) => a.holds(h) && b.holds(h),
        }
    }
}

/// Arithmetic over `T` and constants, used in time windows.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeExpr {
    Num(f64),
    Horizon,
    Add(Box<TimeExpr>, Box<TimeExpr>),
    Sub(Box<TimeExpr>, Box<TimeExpr>),
    Mul(Box<TimeExpr>, Box<TimeExpr>),
    Div(Box<TimeExpr>, Box<TimeExpr>),
}

impl TimeExpr {
    pub fn eval(&self, horizon: f64) -> f64 {
        match self {
            TimeExpr::Num(x) => *x,
            TimeExpr::Horizon => horizon,
            TimeExpr::Add(a, b) => a.eval(horizon) + b.eval(horizon),
            TimeExpr::Sub(a, b) => a.eval(horizon) - b.eval(horizon),
            TimeExpr::Mul(a, b) => a.eval(horizon) * b.eval(horizon),
            TimeExpr::Div(a, b) => a.eval(horizon) / b.eval(horizon),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeCmp {
    Le,
    Gt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeCond {
    pub cmp: TimeCmp,
    pub rhs: TimeExpr,
}

impl TimeCond {
    pub fn holds(&self, t: usize, horizon: usize) -> bool {
        let rhs = self.rhs.eval(horizon as f64);
        match self.cmp {
            TimeCmp::Le => (t as f64) <= rhs,
            TimeCmp::Gt => (t as f64) > rhs,
        }
    }
}

/// A per-timestep scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// `P(pred | cond)`, implicitly also conditioned on both characters being rational.
    Prob {
        pred: Pred,
        cond: Option<Pred>,
    },
    EvRobot,
    KlStep,
    /// `sin(freq * t/T * pi)`.
    Sin(f64),
    /// 1 when the final transition had the robot push the cheese.
    Pushed,
    If {
        cond: TimeCond,
        then: Box<Expr>,
        other: Box<Expr>,
    },
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn any(&self, f: &impl Fn(&Expr) -> bool) -> bool {
        if f(self) {
            return true;
        }
        match self {
            Expr::If { then, other, .. } => then.any(f) || other.any(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.any(f) || b.any(f),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    /// `sum t: expr`, summed over every observed timestep.
    Sum(Expr),
    /// `weight expr`, evaluated once at the final timestep.
    Terminal { weight: f64, expr: Expr },
}

/// A parsed objective.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Objective {
    /// Transition appended before scoring, as `(robot, cheese)`.
    pub continuation: Option<(AgentAction, AgentAction)>,
    pub items: Vec<Item>,
}

impl Objective {
    /// Whether every term is a per-step sum with no continuation, so the
    /// score of a prefix grows by exactly one step term per transition.
    pub fn is_prefix_additive(&self) -> bool {
        self.continuation.is_none() && self.items.iter().all(|i| matches!(i, Item::Sum(_)))
    }
}

fn num(f: &mut fmt::Formatter<'_>, x: f64) -> fmt::Result {
    if x < 0.0 {
        write!(f, "({x})")
    } else {
        write!(f, "{x}")
    }
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pred::Rho(cmp, x) => {
                let op = match cmp {
                    Cmp::Gt => ">",
                    Cmp::Lt => "<",
                    Cmp::Eq => "=",
                };
                write!(f, "rho {op} {x}")
            }
            Pred::GCheese(t) => write!(f, "G_cheese = {t}"),
            Pred::GRobot(t) => write!(f, "G_robot = {}", t.map_or("none", Tile::name)),
            Pred::And(a, b) => write!(f, "{a} & {b}"),
        }
    }
}

impl fmt::Display for TimeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeExpr::Num(x) => num(f, *x),
            TimeExpr::Horizon => f.write_str("T"),
            TimeExpr::Add(a, b) => write!(f, "({a} + {b})"),
            TimeExpr::Sub(a, b) => write!(f, "({a} - {b})"),
            TimeExpr::Mul(a, b) => write!(f, "({a} * {b})"),
            TimeExpr::Div(a, b) => write!(f, "({a} / {b})"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => num(f, *x),
            Expr::Prob { pred, cond: None } => write!(f, "P({pred})"),
            Expr::Prob { pred, cond: Some(c) } => write!(f, "P({pred} | {c})"),
            Expr::EvRobot => f.write_str("EV_robot"),
            Expr::KlStep => f.write_str("KL_step"),
            Expr::Sin(x) => write!(f, "sin({x}*t/T*pi)"),
            Expr::Pushed => f.write_str("pushed"),
            Expr::If { cond, then, other } => {
                let op = match cond.cmp {
                    TimeCmp::Le => "<=",
                    TimeCmp::Gt => ">",
                };
                write!(f, "if t {op} {} {{ {then} }} else {{ {other} }}", cond.rhs)
            }
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "{a} * {b}"),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some((r, c)) = self.continuation {
            writeln!(f, "continue {} {}", r.code(), c.code())?;
        }
        for item in &self.items {
            match item {
                Item::Sum(e) => writeln!(f, "sum t: {e}")?,
                Item::Terminal { weight, expr } => {
                    num(f, *weight)?;
                    writeln!(f, " {expr}")?;
                }
            }
        }
        Ok(())
    }
}
