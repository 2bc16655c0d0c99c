use super::ast::{Cmp, Expr, Item, Objective, Pred, TimeCmp, TimeCond, TimeExpr};
use super::ObjectiveError;
use crate::world::{AgentAction, Tile};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(x) => format!("number {x}"),
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Sym(s) => format!("'{s}'"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

const SYMBOLS: [&str; 15] = [
    "<=", "(", ")", "{", "}", "|", "&", "+", "-", "*", "/", ":", "<", ">", "=",
];

fn lex(text: &str) -> Result<Vec<Token>, ObjectiveError> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let x = s.parse::<f64>().map_err(|_| ObjectiveError::Syntax {
                    line: li + 1,
                    column,
                    message: format!("malformed number '{s}'"),
                })?;
                out.push(Token {
                    tok: Tok::Num(x),
                    line: li + 1,
                    column,
                });
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    line: li + 1,
                    column,
                });
                continue;
            }
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                Some(s) => {
                    out.push(Token {
                        tok: Tok::Sym(s),
                        line: li + 1,
                        column,
                    });
                    i += s.len();
                }
                None => {
                    return Err(ObjectiveError::Syntax {
                        line: li + 1,
                        column,
                        message: format!("unexpected character '{c}'"),
                    })
                }
            }
        }
    }
    let (line, column) = match text.lines().enumerate().last() {
        Some((i, l)) => (i + 1, l.chars().count() + 1),
        None => (1, 1),
    };
    out.push(Token {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ObjectiveError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.pos + ahead).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: String) -> ObjectiveError {
        let t = &self.tokens[self.pos];
        let at = match &t.tok {
            Tok::Eof => "at end of input".to_string(),
            other => format!("at {}", other.describe()),
        };
        ObjectiveError::Syntax {
            line: t.line,
            column: t.column,
            message: format!("{message} {at}"),
        }
    }

    fn type_error_here(&self, message: String) -> ObjectiveError {
        let t = &self.tokens[self.pos];
        ObjectiveError::Type {
            line: t.line,
            column: t.column,
            message,
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_ident(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            Err(self.error_here(format!("expected '{s}'")))
        }
    }

    fn expect_ident(&mut self, s: &str) -> PResult<()> {
        if self.is_ident(s) {
            self.bump();
            Ok(())
        } else {
            Err(self.error_here(format!("expected '{s}'")))
        }
    }

    fn number(&mut self) -> PResult<f64> {
        let negative = if self.is_sym("-") {
            self.bump();
            true
        } else {
            false
        };
        match *self.peek() {
            Tok::Num(x) => {
                self.bump();
                Ok(if negative { -x } else { x })
            }
            _ => Err(self.error_here("expected a number".into())),
        }
    }

    fn objective(&mut self) -> PResult<Objective> {
        let mut obj = Objective::default();
        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(s) if s == "sum" => {
                    self.bump();
                    self.expect_ident("t")?;
                    self.expect_sym(":")?;
                    let expr = self.expr(Ctx::Summed)?;
                    obj.items.push(Item::Sum(expr));
                }
                Tok::Ident(s) if s == "continue" => {
                    if obj.continuation.is_some() {
                        return Err(self.type_error_here("only one continuation is allowed".into()));
                    }
                    self.bump();
                    let robot = self.action()?;
                    let cheese = self.action()?;
                    obj.continuation = Some((robot, cheese));
                }
                Tok::Num(_) | Tok::Sym("-") | Tok::Sym("(") => {
                    let weight = self.weight()?;
                    let expr = self.expr(Ctx::Terminal)?;
                    obj.items.push(Item::Terminal { weight, expr });
                }
                _ => return Err(self.error_here("expected 'sum t:', a weighted term or 'continue'".into())),
            }
        }
        let uses_pushed = obj.items.iter().any(|i| match i {
            Item::Terminal { expr, .. } => expr.any(&|e| matches!(e, Expr::Pushed)),
            Item::Sum(_) => false,
        });
        if uses_pushed && obj.continuation.is_none() {
            return Err(ObjectiveError::Type {
                line: 1,
                column: 1,
                message: "'pushed' needs a 'continue' directive".into(),
            });
        }
        Ok(obj)
    }

    fn weight(&mut self) -> PResult<f64> {
        if self.is_sym("(") {
            self.bump();
            let w = self.number()?;
            self.expect_sym(")")?;
            Ok(w)
        } else {
            self.number()
        }
    }

    fn action(&mut self) -> PResult<AgentAction> {
        if let Tok::Ident(s) = self.peek() {
            if let Some(a) = AgentAction::from_code(s) {
                self.bump();
                return Ok(a);
            }
        }
        Err(self.error_here("expected an action code (N, S, E, W or X)".into()))
    }

    fn expr(&mut self, ctx: Ctx) -> PResult<Expr> {
        let mut lhs = self.term(ctx)?;
        loop {
            if self.is_sym("+") {
                self.bump();
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term(ctx)?));
            } else if self.is_sym("-") {
                self.bump();
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term(ctx)?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self, ctx: Ctx) -> PResult<Expr> {
        let mut lhs = self.factor(ctx)?;
        while self.is_sym("*") {
            self.bump();
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor(ctx)?));
        }
        Ok(lhs)
    }

    fn factor(&mut self, ctx: Ctx) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(Expr::Num(x))
            }
            Tok::Sym("(") => {
                self.bump();
                let negative = self.is_sym("-")
                    && matches!(self.peek_at(1), Tok::Num(_))
                    && matches!(self.peek_at(2), Tok::Sym(")"));
                if negative {
                    let x = self.number()?;
                    self.expect_sym(")")?;
                    return Ok(Expr::Num(x));
                }
                let e = self.expr(ctx)?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "P" => {
                    self.bump();
                    self.expect_sym("(")?;
                    let pred = self.pred()?;
                    let cond = if self.is_sym("|") {
                        self.bump();
                        Some(self.pred()?)
                    } else {
                        None
                    };
                    self.expect_sym(")")?;
                    Ok(Expr::Prob { pred, cond })
                }
                "EV_robot" => {
                    self.bump();
                    Ok(Expr::EvRobot)
                }
                "KL_step" => {
                    if ctx == Ctx::Terminal {
                        return Err(self.type_error_here("KL_step is only defined inside a 'sum t:' term".into()));
                    }
                    self.bump();
                    Ok(Expr::KlStep)
                }
                "pushed" => {
                    if ctx == Ctx::Summed {
                        return Err(self.type_error_here("'pushed' is only defined in a weighted terminal term".into()));
                    }
                    self.bump();
                    Ok(Expr::Pushed)
                }
                "sin" => {
                    self.bump();
                    self.expect_sym("(")?;
                    let freq = self.number()?;
                    self.expect_sym("*")?;
                    self.expect_ident("t")?;
                    self.expect_sym("/")?;
                    self.expect_ident("T")?;
                    self.expect_sym("*")?;
                    self.expect_ident("pi")?;
                    self.expect_sym(")")?;
                    Ok(Expr::Sin(freq))
                }
                "if" => {
                    self.bump();
                    self.expect_ident("t")?;
                    let cmp = if self.is_sym("<=") {
                        TimeCmp::Le
                    } else if self.is_sym(">") {
                        TimeCmp::Gt
                    } else {
                        return Err(self.error_here("expected '<=' or '>'".into()));
                    };
                    self.bump();
                    let rhs = self.time_expr()?;
                    self.expect_sym("{")?;
                    let then = self.expr(ctx)?;
                    self.expect_sym("}")?;
                    self.expect_ident("else")?;
                    self.expect_sym("{")?;
                    let other = self.expr(ctx)?;
                    self.expect_sym("}")?;
                    Ok(Expr::If {
                        cond: TimeCond { cmp, rhs },
                        then: Box::new(then),
                        other: Box::new(other),
                    })
                }
                "t" | "T" => Err(self.type_error_here(format!("'{name}' may only appear in a time window or sin()"))),
                _ => Err(self.type_error_here(format!("unknown name '{name}'"))),
            },
            _ => Err(self.error_here("expected an expression".into())),
        }
    }

    fn pred(&mut self) -> PResult<Pred> {
        let mut lhs = self.atom_pred()?;
        while self.is_sym("&") {
            self.bump();
            lhs = Pred::And(Box::new(lhs), Box::new(self.atom_pred()?));
        }
        Ok(lhs)
    }

    fn atom_pred(&mut self) -> PResult<Pred> {
        let name = match self.peek().clone() {
            Tok::Ident(n) => n,
            _ => return Err(self.error_here("expected a predicate".into())),
        };
        match name.as_str() {
            "rho" => {
                self.bump();
                let cmp = match self.peek() {
                    Tok::Sym(">") => Cmp::Gt,
                    Tok::Sym("<") => Cmp::Lt,
                    Tok::Sym("=") => Cmp::Eq,
                    _ => return Err(self.error_here("expected '>', '<' or '='".into())),
                };
                self.bump();
                Ok(Pred::Rho(cmp, self.number()?))
            }
            "G_cheese" => {
                self.bump();
                self.expect_sym("=")?;
                Ok(Pred::GCheese(self.tile()?))
            }
            "G_robot" => {
                self.bump();
                self.expect_sym("=")?;
                if self.is_ident("none") {
                    self.bump();
                    Ok(Pred::GRobot(None))
                } else {
                    Ok(Pred::GRobot(Some(self.tile()?)))
                }
            }
            _ => Err(self.type_error_here(format!("unknown predicate '{name}'"))),
        }
    }

    fn tile(&mut self) -> PResult<Tile> {
        let t = match self.peek() {
            Tok::Ident(s) if s == "pink" => Tile::Pink,
            Tok::Ident(s) if s == "green" => Tile::Green,
            _ => return Err(self.error_here("expected 'pink' or 'green'".into())),
        };
        self.bump();
        Ok(t)
    }

    fn time_expr(&mut self) -> PResult<TimeExpr> {
        let mut lhs = self.time_term()?;
        loop {
            if self.is_sym("+") {
                self.bump();
                lhs = TimeExpr::Add(Box::new(lhs), Box::new(self.time_term()?));
            } else if self.is_sym("-") {
                self.bump();
                lhs = TimeExpr::Sub(Box::new(lhs), Box::new(self.time_term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn time_term(&mut self) -> PResult<TimeExpr> {
        let mut lhs = self.time_factor()?;
        loop {
            if self.is_sym("*") {
                self.bump();
                lhs = TimeExpr::Mul(Box::new(lhs), Box::new(self.time_factor()?));
            } else if self.is_sym("/") {
                self.bump();
                lhs = TimeExpr::Div(Box::new(lhs), Box::new(self.time_factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn time_factor(&mut self) -> PResult<TimeExpr> {
        if self.is_ident("T") {
            self.bump();
            return Ok(TimeExpr::Horizon);
        }
        if self.is_sym("(") {
            self.bump();
            if self.is_sym("-") && matches!(self.peek_at(1), Tok::Num(_)) && matches!(self.peek_at(2), Tok::Sym(")")) {
                let x = self.number()?;
                self.expect_sym(")")?;
                return Ok(TimeExpr::Num(x));
            }
            let e = self.time_expr()?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        match *self.peek() {
            Tok::Num(x) => {
                self.bump();
                Ok(TimeExpr::Num(x))
            }
            _ => Err(self.error_here("expected a number, 'T' or '('".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ctx {
    Summed,
    Terminal,
}

/// Parses objective source text.
pub fn parse_objective(text: &str) -> Result<Objective, ObjectiveError> {
    let mut p = Parser {
        tokens: lex(text)?,
        pos: 0,
    };
    p.objective()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn syntax_location(text: &str) -> (usize, usize) {
        match parse_objective(text) {
            Err(ObjectiveError::Syntax { line, column, .. }) => (line, column),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn help_shape() {
        let obj = parse_objective("sum t: P(rho > 0)").unwrap();
        assert_eq!(
            obj.items,
            vec![Item::Sum(Expr::Prob {
                pred: Pred::Rho(Cmp::Gt, 0.0),
                cond: None
            })]
        );
        assert!(obj.is_prefix_additive());
    }

    #[test]
    fn twist_shape() {
        let obj = parse_objective("sum t: if t <= T/2 { P(rho > 0) } else { P(rho < 0) }").unwrap();
        let Item::Sum(Expr::If { cond, .. }) = &obj.items[0] else {
            panic!("wrong shape: {obj:?}");
        };
        assert_eq!(cond.cmp, TimeCmp::Le);
        assert_eq!(cond.rhs.eval(15.0), 7.5);
        assert!(cond.holds(7, 15));
        assert!(!cond.holds(8, 15));
    }

    #[test]
    fn unterminated_query_fails_at_eof() {
        let text = "sum t: P(G_cheese = green";
        match parse_objective(text) {
            Err(ObjectiveError::Syntax { line, column, message }) => {
                assert_eq!((line, column), (1, text.len() + 1));
                assert!(message.contains("end of input"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn located_errors() {
        assert_eq!(syntax_location("sum t: P(rho >> 0)"), (1, 15));
        assert_eq!(syntax_location("sum t: P(rho > 0)\nsum t: 1 +"), (2, 11));
        assert_eq!(syntax_location("sum t: 1 $ 2"), (1, 10));
    }

    #[test]
    fn type_errors() {
        for text in [
            "1 KL_step",
            "sum t: pushed",
            "continue E X\n1 P(rho > 0) * KL_step",
            "1 pushed",
            "sum t: P(alignment > 0)",
            "sum t: foo",
            "sum t: t",
            "continue E X\ncontinue E X",
        ] {
            assert!(
                matches!(parse_objective(text), Err(ObjectiveError::Type { .. })),
                "{text}: {:?}",
                parse_objective(text)
            );
        }
    }

    #[test]
    fn comments_and_whitespace() {
        let a = parse_objective("# comment\n  sum t:   P(rho>0) # trailing\n").unwrap();
        let b = parse_objective("sum t: P(rho > 0)").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn precedence() {
        let obj = parse_objective("sum t: 1 + 2 * 3 - 4").unwrap();
        let Item::Sum(e) = &obj.items[0] else { unreachable!() };
        assert_eq!(e.to_string(), "((1 + 2 * 3) - 4)");
    }

    #[test]
    fn negative_literals() {
        let obj = parse_objective("-2 EV_robot\nsum t: P(rho = -1) * (-0.5)").unwrap();
        assert_eq!(
            obj.items[0],
            Item::Terminal {
                weight: -2.0,
                expr: Expr::EvRobot
            }
        );
        assert_eq!(parse_objective(&obj.to_string()).unwrap(), obj);
    }

    #[test]
    fn conjunctions_and_conditions() {
        let obj = parse_objective("sum t: P(rho < 0 & G_robot = none | G_cheese = pink)").unwrap();
        assert_eq!(
            obj.items[0],
            Item::Sum(Expr::Prob {
                pred: Pred::And(Box::new(Pred::Rho(Cmp::Lt, 0.0)), Box::new(Pred::GRobot(None))),
                cond: Some(Pred::GCheese(Tile::Pink)),
            })
        );
    }

    #[test]
    fn empty_objective() {
        assert_eq!(parse_objective("").unwrap(), Objective::default());
        assert_eq!(parse_objective("# nothing\n").unwrap(), Objective::default());
    }
}
