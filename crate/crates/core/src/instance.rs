//! Line-oriented problem files and the reduction functions generated from
//! them.
//!
//! ```text
//! kind fd
//! var x set {1,2,3}
//! var y set {1,2,3}
//! con c1 rel x < y prio 2
//! con t table x y {(1,2),(2,3)}
//! ```
//!
//! Interval problems use `var x interval [lo,hi]`, `con e expr <expr> = <expr>`
//! (also `<=`, `>=`) and `con l linear 2*x + 1*y = 3; [0.9,1.1]*x + 4*y = [1,2]`.
//! `#` starts a comment.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::functions::{
    ArithConstraint, BinaryConstraint, CmpRel, Constraint, ConstraintForm, Expr, FunctionError,
    FunctionSet, LinearSystem, ReductionFunction, RelOp,
};
use crate::lattice::{Domain, Interval, LatticeError, VarDomain};
use crate::scalar::{format_significant, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    Fd,
    Interval,
}

impl fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InstanceKind::Fd => "fd",
            InstanceKind::Interval => "interval",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintBody<S = f64> {
    Rel {
        x: usize,
        op: RelOp,
        y: usize,
    },
    Table {
        x: usize,
        y: usize,
        allowed: BTreeSet<(i64, i64)>,
    },
    Expr(ArithConstraint<S>),
    Linear(LinearSystem<S>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintDecl<S = f64> {
    pub id: String,
    pub body: ConstraintBody<S>,
    pub prio: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance<S = f64> {
    pub kind: InstanceKind,
    pub vars: Vec<(String, VarDomain<S>)>,
    pub constraints: Vec<ConstraintDecl<S>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {column}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub msg: String,
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Options for [`Instance::functions`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenOptions {
    /// Precision of box narrowing.
    pub box_eps: f64,
    /// Skip box narrowing for variables that occur once in their
    /// constraint; HC4 already computes the same projection.
    pub prune_single_occurrence: bool,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            box_eps: 1e-9,
            prune_single_occurrence: true,
        }
    }
}

impl<S: Scalar> Instance<S> {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        Parser::default().run(text)
    }

    pub fn names(&self) -> Vec<String> {
        self.vars.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn domain(&self) -> Domain<S> {
        Domain::new(
            self.names(),
            self.vars.iter().map(|(_, d)| d.clone()).collect(),
        )
        .expect("parser guarantees unique names")
    }

    /// The reduction functions of every constraint, in declaration order.
    pub fn functions(&self, opts: GenOptions) -> Result<FunctionSet<S>, InstanceError> {
        let names = self.names();
        let mut set = FunctionSet::new();
        for c in &self.constraints {
            let prio = |default: i64| c.prio.unwrap_or(default);
            match &c.body {
                ConstraintBody::Rel { x, op, y } => {
                    let bc = BinaryConstraint::Relation {
                        x: *x,
                        op: *op,
                        y: *y,
                    };
                    let shared =
                        Arc::new(Constraint::new(c.id.clone(), ConstraintForm::Binary(bc)));
                    for v in [*x, *y] {
                        let f = ReductionFunction::revise(
                            format!("{}.{}", c.id, names[v]),
                            shared.clone(),
                            v,
                        )?;
                        set.add(f.with_priority(prio(1)));
                    }
                }
                ConstraintBody::Table { x, y, allowed } => {
                    let bc = BinaryConstraint::Table {
                        x: *x,
                        y: *y,
                        allowed: allowed.clone(),
                    };
                    let shared =
                        Arc::new(Constraint::new(c.id.clone(), ConstraintForm::Binary(bc)));
                    for v in [*x, *y] {
                        let f = ReductionFunction::revise(
                            format!("{}.{}", c.id, names[v]),
                            shared.clone(),
                            v,
                        )?;
                        set.add(f.with_priority(prio(1)));
                    }
                }
                ConstraintBody::Expr(a) => {
                    let shared = Arc::new(Constraint::new(
                        c.id.clone(),
                        ConstraintForm::Arith(a.clone()),
                    ));
                    let f = ReductionFunction::hc4(format!("{}.hc4", c.id), shared.clone())?;
                    set.add(f.with_priority(prio(1)));
                    for &v in a.vars() {
                        if opts.prune_single_occurrence && a.occurrences(v) <= 1 {
                            continue;
                        }
                        let eps = S::from_f64(opts.box_eps);
                        let f = ReductionFunction::box_narrow(
                            format!("{}.box.{}", c.id, names[v]),
                            shared.clone(),
                            v,
                            eps,
                        )?;
                        set.add(f.with_priority(prio(2)));
                    }
                }
                ConstraintBody::Linear(l) => {
                    let shared = Arc::new(Constraint::new(
                        c.id.clone(),
                        ConstraintForm::Linear(l.clone()),
                    ));
                    let f = ReductionFunction::gauss_seidel(format!("{}.gs", c.id), shared)?;
                    set.add(f.with_priority(prio(3)));
                }
            }
        }
        Ok(set)
    }
}

fn render_interval<S: Scalar>(iv: &Interval<S>) -> String {
    if iv.lo() == iv.hi() {
        format_significant(iv.lo())
    } else {
        format!(
            "[{},{}]",
            format_significant(iv.lo()),
            format_significant(iv.hi())
        )
    }
}

impl<S: Scalar> fmt::Display for Instance<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.names();
        writeln!(f, "kind {}", self.kind)?;
        for (name, dom) in &self.vars {
            match dom {
                VarDomain::Set(_) => writeln!(f, "var {name} set {dom}")?,
                VarDomain::Interval(_) => writeln!(f, "var {name} interval {dom}")?,
                VarDomain::Empty => writeln!(f, "var {name} set {{}}")?,
            }
        }
        for c in &self.constraints {
            write!(f, "con {} ", c.id)?;
            match &c.body {
                ConstraintBody::Rel { x, op, y } => {
                    write!(f, "rel {} {op} {}", names[*x], names[*y])?
                }
                ConstraintBody::Table { x, y, allowed } => {
                    let pairs: Vec<String> =
                        allowed.iter().map(|(a, b)| format!("({a},{b})")).collect();
                    write!(
                        f,
                        "table {} {} {{{}}}",
                        names[*x],
                        names[*y],
                        pairs.join(",")
                    )?;
                }
                ConstraintBody::Expr(a) => write!(f, "expr {}", a.render(&names))?,
                ConstraintBody::Linear(l) => {
                    let rows: Vec<String> = l
                        .matrix()
                        .iter()
                        .zip(l.rhs())
                        .map(|(row, b)| {
                            let terms: Vec<String> = row
                                .iter()
                                .zip(l.vars())
                                .map(|(a, &v)| format!("{}*{}", render_interval(a), names[v]))
                                .collect();
                            format!("{} = {}", terms.join(" + "), render_interval(b))
                        })
                        .collect();
                    write!(f, "linear {}", rows.join("; "))?;
                }
            }
            if let Some(p) = c.prio {
                write!(f, " prio {p}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Cursor over one line.
struct Line<'a> {
    no: usize,
    text: &'a str,
    pos: usize,
}

impl<'a> Line<'a> {
    fn error(&self, msg: impl Into<String>) -> ParseError {
        ParseError {
            line: self.no,
            column: self.text[..self.pos].chars().count() + 1,
            msg: msg.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let r = self.rest();
        self.pos += r.len() - r.trim_start().len();
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.text.len()
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<(), ParseError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{tok}`")))
        }
    }

    fn peek_ident(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let r = self.rest();
        let mut chars = r.char_indices();
        match chars.next() {
            Some((_, c)) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return None,
        }
        let end = chars
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
            .map_or(r.len(), |(i, _)| i);
        Some(&r[..end])
    }

    fn ident(&mut self) -> Result<&'a str, ParseError> {
        match self.peek_ident() {
            Some(id) => {
                self.pos += id.len();
                Ok(id)
            }
            None => Err(self.error("expected a name")),
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if self.peek_ident() == Some(kw) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    /// Unsigned decimal literal, or `inf`.
    fn unsigned_text(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let r = self.rest();
        for word in ["infinity", "inf"] {
            if r.starts_with(word)
                && !r[word.len()..].starts_with(|c: char| c.is_ascii_alphanumeric())
            {
                self.pos += word.len();
                return Some(&r[..word.len()]);
            }
        }
        let b = r.as_bytes();
        let mut i = 0;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i < b.len() && b[i] == b'.' {
            i += 1;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i == 0 || (i == 1 && b[0] == b'.') {
            return None;
        }
        if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
            let mut j = i + 1;
            if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                j += 1;
            }
            if j < b.len() && b[j].is_ascii_digit() {
                while j < b.len() && b[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        self.pos += i;
        Some(&r[..i])
    }

    fn number<S: Scalar>(&mut self) -> Result<S, ParseError> {
        let neg = self.eat("-");
        if !neg {
            self.eat("+");
        }
        let start = self.pos;
        let text = self
            .unsigned_text()
            .ok_or_else(|| self.error("expected a number"))?;
        let v = S::from_str(text).map_err(|_| {
            let mut at = Line {
                no: self.no,
                text: self.text,
                pos: start,
            };
            at.skip_ws();
            at.error(format!("invalid number `{text}`"))
        })?;
        Ok(if neg { -v } else { v })
    }

    fn integer(&mut self) -> Result<i64, ParseError> {
        self.skip_ws();
        let r = self.rest();
        let b = r.as_bytes();
        let mut i = usize::from(b.first().is_some_and(|c| *c == b'-' || *c == b'+'));
        let digits = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == digits {
            return Err(self.error("expected an integer"));
        }
        let v = r[..i]
            .parse()
            .map_err(|_| self.error("integer out of range"))?;
        self.pos += i;
        Ok(v)
    }

    /// A number or `[lo,hi]`.
    fn interval<S: Scalar>(&mut self) -> Result<Interval<S>, ParseError> {
        if self.eat("[") {
            let lo = self.number()?;
            self.expect(",")?;
            let hi = self.number()?;
            self.expect("]")?;
            Interval::new(lo, hi).map_err(|e| self.error(e.to_string()))
        } else {
            let v = self.number()?;
            Interval::new(v, v).map_err(|e| self.error(e.to_string()))
        }
    }
}

#[derive(Default)]
struct Parser<S> {
    kind: Option<InstanceKind>,
    vars: Vec<(String, VarDomain<S>)>,
    index: HashMap<String, usize>,
    constraints: Vec<ConstraintDecl<S>>,
}

impl<S: Scalar> Parser<S> {
    fn run(mut self, text: &str) -> Result<Instance<S>, ParseError> {
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("");
            let mut line = Line {
                no: i + 1,
                text: content,
                pos: 0,
            };
            if line.at_end() {
                continue;
            }
            let word = line.ident()?;
            match word {
                "kind" => self.kind_line(&mut line)?,
                "var" => self.var_line(&mut line)?,
                "con" => self.con_line(&mut line)?,
                other => {
                    line.pos = 0;
                    line.skip_ws();
                    return Err(line.error(format!("unknown declaration `{other}`")));
                }
            }
            if !line.at_end() {
                return Err(line.error("unexpected trailing input"));
            }
        }
        let kind = self.kind.ok_or(ParseError {
            line: 1,
            column: 1,
            msg: "missing `kind` declaration".into(),
        })?;
        Ok(Instance {
            kind,
            vars: self.vars,
            constraints: self.constraints,
        })
    }

    fn kind_line(&mut self, line: &mut Line<'_>) -> Result<(), ParseError> {
        if self.kind.is_some() {
            return Err(line.error("duplicate `kind` declaration"));
        }
        self.kind = Some(match line.ident()? {
            "fd" => InstanceKind::Fd,
            "interval" => InstanceKind::Interval,
            _ => return Err(line.error("kind must be `fd` or `interval`")),
        });
        Ok(())
    }

    fn require_kind(
        &self,
        line: &Line<'_>,
        want: InstanceKind,
        what: &str,
    ) -> Result<(), ParseError> {
        match self.kind {
            None => Err(line.error("`kind` must be declared first")),
            Some(k) if k != want => {
                Err(line.error(format!("{what} is not allowed in a `{k}` instance")))
            }
            Some(_) => Ok(()),
        }
    }

    fn var_line(&mut self, line: &mut Line<'_>) -> Result<(), ParseError> {
        let at = line.pos;
        let name = line.ident()?.to_string();
        if self.index.contains_key(&name) {
            line.pos = at;
            line.skip_ws();
            return Err(line.error(format!("duplicate variable `{name}`")));
        }
        let dom = if line.keyword("set") {
            self.require_kind(line, InstanceKind::Fd, "a set domain")?;
            line.expect("{")?;
            let mut values = Vec::new();
            if !line.eat("}") {
                loop {
                    values.push(line.integer()?);
                    if line.eat("}") {
                        break;
                    }
                    line.expect(",")?;
                }
            }
            VarDomain::set(values)
        } else if line.keyword("interval") {
            self.require_kind(line, InstanceKind::Interval, "an interval domain")?;
            line.skip_ws();
            if !line.rest().starts_with('[') {
                return Err(line.error("expected `[`"));
            }
            VarDomain::Interval(line.interval()?)
        } else {
            return Err(line.error("expected `set` or `interval`"));
        };
        self.index.insert(name.clone(), self.vars.len());
        self.vars.push((name, dom));
        Ok(())
    }

    fn var_ref(&self, line: &mut Line<'_>) -> Result<usize, ParseError> {
        let at = line.pos;
        let name = line.ident()?;
        self.index.get(name).copied().ok_or_else(|| {
            line.pos = at;
            line.skip_ws();
            line.error(format!("undeclared variable `{name}`"))
        })
    }

    fn con_line(&mut self, line: &mut Line<'_>) -> Result<(), ParseError> {
        let at = line.pos;
        let id = line.ident()?.to_string();
        if self.constraints.iter().any(|c| c.id == id) {
            line.pos = at;
            line.skip_ws();
            return Err(line.error(format!("duplicate constraint `{id}`")));
        }
        let body = match line.ident()? {
            "rel" => {
                self.require_kind(line, InstanceKind::Fd, "`rel`")?;
                let x = self.var_ref(line)?;
                let op = rel_op(line)?;
                let y = self.var_ref(line)?;
                ConstraintBody::Rel { x, op, y }
            }
            "table" => {
                self.require_kind(line, InstanceKind::Fd, "`table`")?;
                let x = self.var_ref(line)?;
                let y = self.var_ref(line)?;
                line.expect("{")?;
                let mut allowed = BTreeSet::new();
                if !line.eat("}") {
                    loop {
                        line.expect("(")?;
                        let a = line.integer()?;
                        line.expect(",")?;
                        let b = line.integer()?;
                        line.expect(")")?;
                        allowed.insert((a, b));
                        if line.eat("}") {
                            break;
                        }
                        line.expect(",")?;
                    }
                }
                ConstraintBody::Table { x, y, allowed }
            }
            "expr" => {
                self.require_kind(line, InstanceKind::Interval, "`expr`")?;
                let lhs = self.expr(line)?;
                let rel = if line.eat("<=") || line.eat("≤") {
                    CmpRel::Le
                } else if line.eat(">=") || line.eat("≥") {
                    CmpRel::Ge
                } else if line.eat("=") {
                    CmpRel::Eq
                } else {
                    return Err(line.error("expected `=`, `<=` or `>=`"));
                };
                let rhs = self.expr(line)?;
                ConstraintBody::Expr(ArithConstraint::new(lhs, rel, rhs))
            }
            "linear" => {
                self.require_kind(line, InstanceKind::Interval, "`linear`")?;
                ConstraintBody::Linear(self.linear(line)?)
            }
            other => return Err(line.error(format!("unknown constraint form `{other}`"))),
        };
        let prio = if line.keyword("prio") {
            Some(line.integer()?)
        } else {
            None
        };
        self.constraints.push(ConstraintDecl { id, body, prio });
        Ok(())
    }

    fn expr(&self, line: &mut Line<'_>) -> Result<Expr<S>, ParseError> {
        let mut e = self.term(line)?;
        loop {
            if line.eat("+") {
                e = e.add(self.term(line)?);
            } else if line.peek() == Some('-') {
                line.eat("-");
                e = e.sub(self.term(line)?);
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&self, line: &mut Line<'_>) -> Result<Expr<S>, ParseError> {
        let mut e = self.power(line)?;
        while line.eat("*") {
            e = e.mul(self.power(line)?);
        }
        Ok(e)
    }

    fn power(&self, line: &mut Line<'_>) -> Result<Expr<S>, ParseError> {
        let mut e = self.unary(line)?;
        while line.eat("^") {
            line.expect("2")
                .map_err(|_| line.error("only `^2` is supported"))?;
            e = e.sqr();
        }
        Ok(e)
    }

    fn unary(&self, line: &mut Line<'_>) -> Result<Expr<S>, ParseError> {
        if line.eat("-") {
            // a sign directly before a literal is part of the constant
            if let Some(text) = line.unsigned_text() {
                let v = S::from_str(text).map_err(|_| line.error("invalid number"))?;
                return Ok(Expr::Const(-v));
            }
            return Ok(self.unary(line)?.neg());
        }
        self.primary(line)
    }

    fn primary(&self, line: &mut Line<'_>) -> Result<Expr<S>, ParseError> {
        if line.eat("(") {
            let e = self.expr(line)?;
            line.expect(")")?;
            return Ok(e);
        }
        if let Some(text) = line.unsigned_text() {
            return S::from_str(text)
                .map(Expr::Const)
                .map_err(|_| line.error("invalid number"));
        }
        if line.peek_ident() == Some("sqr") {
            let save = line.pos;
            line.keyword("sqr");
            if line.eat("(") {
                let e = self.expr(line)?;
                line.expect(")")?;
                return Ok(e.sqr());
            }
            line.pos = save;
        }
        if line.peek_ident().is_some() {
            return Ok(Expr::Var(self.var_ref(line)?));
        }
        Err(line.error("expected an expression"))
    }

    fn linear(&self, line: &mut Line<'_>) -> Result<LinearSystem<S>, ParseError> {
        let mut order: Vec<usize> = Vec::new();
        #[allow(clippy::type_complexity)]
        let mut rows: Vec<(Vec<(usize, Interval<S>)>, Interval<S>)> = Vec::new();
        loop {
            let mut terms: Vec<(usize, Interval<S>)> = Vec::new();
            let mut negate = line.eat("-");
            loop {
                let coef = if line.peek_ident().is_some() {
                    Interval::point(S::one())
                } else {
                    let c = line.interval()?;
                    line.expect("*")?;
                    c
                };
                let coef = if negate {
                    crate::functions::arith::neg(&coef)
                } else {
                    coef
                };
                let at = line.pos;
                let v = self.var_ref(line)?;
                if terms.iter().any(|(u, _)| *u == v) {
                    line.pos = at;
                    line.skip_ws();
                    return Err(line.error("variable repeated in a row"));
                }
                if !order.contains(&v) {
                    order.push(v);
                }
                terms.push((v, coef));
                if line.eat("+") {
                    negate = false;
                } else if line.peek() == Some('-') {
                    line.eat("-");
                    negate = true;
                } else {
                    break;
                }
            }
            line.expect("=")?;
            let rhs = line.interval()?;
            rows.push((terms, rhs));
            if !line.eat(";") {
                break;
            }
        }
        let zero = Interval::point(S::zero());
        let a: Vec<Vec<Interval<S>>> = rows
            .iter()
            .map(|(terms, _)| {
                order
                    .iter()
                    .map(|v| terms.iter().find(|(u, _)| u == v).map_or(zero, |(_, c)| *c))
                    .collect()
            })
            .collect();
        let b = rows.iter().map(|(_, r)| *r).collect();
        LinearSystem::new(order, a, b).map_err(|e| line.error(e.to_string()))
    }
}

fn rel_op(line: &mut Line<'_>) -> Result<RelOp, ParseError> {
    let table = [
        ("<=", RelOp::Le),
        ("≤", RelOp::Le),
        (">=", RelOp::Ge),
        ("≥", RelOp::Ge),
        ("!=", RelOp::Ne),
        ("≠", RelOp::Ne),
        ("<", RelOp::Lt),
        (">", RelOp::Gt),
        ("=", RelOp::Eq),
    ];
    for (tok, op) in table {
        if line.eat(tok) {
            return Ok(op);
        }
    }
    Err(line.error("expected a relation (<, <=, =, !=, >=, >)"))
}

impl<S: Scalar> FromStr for Instance<S> {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Instance::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::FunctionKind;

    const ABC: &str = "kind fd\nvar x set {1,2,3}\nvar y set {1,2,3}\nvar z set {1,2,3}\ncon c1 rel x < y\ncon c2 rel y < z\n";

    #[test]
    fn fd_relation_gives_one_revise_per_direction() {
        let inst: Instance = "kind fd\nvar x set {1,2}\nvar y set {1,2}\ncon c rel x < y\n"
            .parse()
            .unwrap();
        let f = inst.functions(GenOptions::default()).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(
            f.iter().map(|f| f.name().to_string()).collect::<Vec<_>>(),
            ["c.x", "c.y"]
        );
        assert!(f
            .iter()
            .all(|f| matches!(f.kind(), FunctionKind::Revise { .. })));
    }

    #[test]
    fn single_occurrences_get_no_box_function() {
        let inst: Instance =
            "kind interval\nvar x interval [0,10]\nvar y interval [0,10]\ncon s expr x + y = 5\n"
                .parse()
                .unwrap();
        let f = inst.functions(GenOptions::default()).unwrap();
        assert_eq!(f.len(), 1);
        assert!(matches!(
            f.get(crate::functions::FunctionId(0)).unwrap().kind(),
            FunctionKind::Hc4Revise { .. }
        ));
        let all = inst
            .functions(GenOptions {
                prune_single_occurrence: false,
                ..GenOptions::default()
            })
            .unwrap();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn repeated_variable_gets_box_function() {
        let inst: Instance =
            "kind interval\nvar x interval [-2,2]\nvar y interval [-2,2]\ncon q expr x*x + y = 2\n"
                .parse()
                .unwrap();
        let f = inst.functions(GenOptions::default()).unwrap();
        let names: Vec<_> = f.iter().map(|f| f.name().to_string()).collect();
        assert_eq!(names, ["q.hc4", "q.box.x"]);
        assert_eq!(f.iter().map(|f| f.priority()).collect::<Vec<_>>(), [1, 2]);
    }

    #[test]
    fn linear_system_and_priorities() {
        let text = "kind interval\nvar x interval [-10,10]\nvar y interval [-10,10]\n\
                    con l linear 4*x + [0.5,1]*y = [1,2]; -1*x + 2*y = 0 prio 0\n";
        let inst: Instance = text.parse().unwrap();
        let f = inst.functions(GenOptions::default()).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(
            f.get(crate::functions::FunctionId(0)).unwrap().priority(),
            0
        );
        let ConstraintBody::Linear(l) = &inst.constraints[0].body else {
            panic!()
        };
        assert_eq!(l.matrix()[1][0], Interval::point(-1.0));
        assert_eq!(l.rhs()[0], Interval::new(1.0, 2.0).unwrap());
    }

    #[test]
    fn round_trip() {
        let texts = [
            ABC.to_string(),
            "kind fd\nvar a set {1,2,3}\nvar b set {}\ncon t table a b {(1,2),(3,1)} prio 4\ncon n rel a != b\ncon m rel a ≥ b\n"
                .to_string(),
            "kind interval\nvar x interval [-1e300,inf]\nvar y interval [0.1,0.2]\n\
             con e expr -x * (y - -0.5) + sqr(x + 1) - -(y) <= x^2 prio -3\n\
             con l linear 1*x + -0.5*y = [0,0]; [0.25,0.5]*x + 3*y = 1\n"
                .to_string(),
        ];
        for t in texts {
            let a: Instance = t.parse().unwrap();
            let rendered = a.to_string();
            let b: Instance = rendered
                .parse()
                .unwrap_or_else(|e| panic!("{e}\n{rendered}"));
            assert_eq!(a, b, "{rendered}");
            assert_eq!(b.to_string(), rendered);
        }
    }

    #[test]
    fn unary_minus_folds_into_literals_only() {
        let inst: Instance = "kind interval\nvar x interval [0,1]\ncon e expr -2 * x - -(3) = -x\n"
            .parse()
            .unwrap();
        let ConstraintBody::Expr(a) = &inst.constraints[0].body else {
            panic!()
        };
        assert_eq!(
            a.lhs(),
            &Expr::Const(-2.0)
                .mul(Expr::Var(0))
                .sub(Expr::Const(3.0).neg())
        );
        assert_eq!(a.rhs(), &Expr::Var(0).neg());
    }

    fn err(text: &str) -> ParseError {
        Instance::<f64>::parse(text).unwrap_err()
    }

    #[test]
    fn errors_carry_positions() {
        let e = err("kind fd\nvar x set {1,2}\ncon c rel x < w\n");
        assert_eq!((e.line, e.column), (3, 15));
        assert!(e.msg.contains("undeclared"));
        let e = err("kind fd\nvar x set {1}\nvar x set {2}\n");
        assert_eq!((e.line, e.column), (3, 5));
        let e = err("kind fd\nvar x interval [0,1]\n");
        assert!(e.msg.contains("not allowed"), "{}", e.msg);
        let e = err("var x set {1}\n");
        assert!(e.msg.contains("kind"));
        let e = err("kind interval\nvar x interval [2,1]\n");
        assert_eq!(e.line, 2);
        let e = err("kind interval\nvar x interval [0,1]\ncon e expr x ^ 3 = 1\n");
        assert!(e.msg.contains("^2"));
        let e = err("kind interval\nvar x interval [0,1]\nvar y interval [0,1]\ncon l linear 0*x + 1*y = 1; 1*x + 1*y = 2\n");
        assert!(e.msg.contains("diagonal"));
        let e = err("kind fd\nvar x set {1}\ncon c rel x < x extra\n");
        assert!(e.msg.contains("trailing"));
        assert!(Instance::<f64>::parse("").is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let inst: Instance = "# header\n\nkind fd # trailing\nvar x set {1, 2} # note\n"
            .parse()
            .unwrap();
        assert_eq!(inst.vars.len(), 1);
        assert_eq!(inst.domain().to_string(), "x={1,2}");
    }
}
