//! Arithmetic constraints over interval variables: expression trees, forward
//! interval evaluation, and forward/backward projection (HC4 revise).

use std::fmt;

use super::arith;
use crate::lattice::{Domain, Interval, VarDomain};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr<S = f64> {
    Const(S),
    /// Index into the domain's variable list.
    Var(usize),
    Add(Box<Expr<S>>, Box<Expr<S>>),
    Sub(Box<Expr<S>>, Box<Expr<S>>),
    Mul(Box<Expr<S>>, Box<Expr<S>>),
    Neg(Box<Expr<S>>),
    Sqr(Box<Expr<S>>),
}

impl<S: Scalar> Expr<S> {
    pub fn var(i: usize) -> Self {
        Expr::Var(i)
    }

    pub fn constant(c: S) -> Self {
        Expr::Const(c)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, rhs: Expr<S>) -> Self {
        Expr::Add(Box::new(self), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, rhs: Expr<S>) -> Self {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, rhs: Expr<S>) -> Self {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(self) -> Self {
        Expr::Neg(Box::new(self))
    }

    pub fn sqr(self) -> Self {
        Expr::Sqr(Box::new(self))
    }

    /// Adds the number of occurrences of each variable to `counts`.
    pub fn count_occurrences(&self, counts: &mut [usize]) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => counts[*v] += 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.count_occurrences(counts);
                b.count_occurrences(counts);
            }
            Expr::Neg(a) | Expr::Sqr(a) => a.count_occurrences(counts),
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(v) => Some(*v),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.max_var().max(b.max_var()),
            Expr::Neg(a) | Expr::Sqr(a) => a.max_var(),
        }
    }

    /// Renders with every compound operand parenthesized, so the text
    /// parses back to the same tree.
    pub fn render(&self, names: &[String]) -> String {
        fn operand<S: Scalar>(e: &Expr<S>, names: &[String]) -> String {
            match e {
                Expr::Const(_) | Expr::Var(_) | Expr::Sqr(_) => e.render(names),
                _ => format!("({})", e.render(names)),
            }
        }
        match self {
            Expr::Const(c) => crate::scalar::format_significant(*c),
            Expr::Var(v) => names[*v].clone(),
            Expr::Add(a, b) => format!("{} + {}", operand(a, names), operand(b, names)),
            Expr::Sub(a, b) => format!("{} - {}", operand(a, names), operand(b, names)),
            Expr::Mul(a, b) => format!("{} * {}", operand(a, names), operand(b, names)),
            Expr::Neg(a) => format!("-({})", a.render(names)),
            Expr::Sqr(a) => format!("sqr({})", a.render(names)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpRel {
    Eq,
    Le,
    Ge,
}

impl CmpRel {
    /// The set `lhs - rhs` must lie in.
    fn target<S: Scalar>(self) -> Interval<S> {
        let z = S::zero();
        match self {
            CmpRel::Eq => Interval::point(z),
            CmpRel::Le => Interval::checked(S::neg_infinity(), z).expect("ordered"),
            CmpRel::Ge => Interval::checked(z, S::infinity()).expect("ordered"),
        }
    }
}

impl fmt::Display for CmpRel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpRel::Eq => "=",
            CmpRel::Le => "<=",
            CmpRel::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node<S> {
    Const(S),
    Var(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Sqr(usize),
}

/// `lhs rel rhs`, compiled into a post-order tape of `lhs - rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArithConstraint<S = f64> {
    lhs: Expr<S>,
    rel: CmpRel,
    rhs: Expr<S>,
    tape: Vec<Node<S>>,
    vars: Vec<usize>,
}

impl<S: Scalar> ArithConstraint<S> {
    pub fn new(lhs: Expr<S>, rel: CmpRel, rhs: Expr<S>) -> Self {
        let mut tape = Vec::new();
        let l = compile(&lhs, &mut tape);
        let r = compile(&rhs, &mut tape);
        tape.push(Node::Sub(l, r));
        let n = lhs.max_var().max(rhs.max_var()).map_or(0, |m| m + 1);
        let mut counts = vec![0; n];
        lhs.count_occurrences(&mut counts);
        rhs.count_occurrences(&mut counts);
        let vars = (0..n).filter(|&v| counts[v] > 0).collect();
        ArithConstraint {
            lhs,
            rel,
            rhs,
            tape,
            vars,
        }
    }

    pub fn lhs(&self) -> &Expr<S> {
        &self.lhs
    }

    pub fn rhs(&self) -> &Expr<S> {
        &self.rhs
    }

    pub fn rel(&self) -> CmpRel {
        self.rel
    }

    /// Variables occurring in the constraint, ascending.
    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn occurrences(&self, var: usize) -> usize {
        self.tape
            .iter()
            .filter(|n| matches!(n, Node::Var(v) if *v == var))
            .count()
    }

    fn interval_of(d: &Domain<S>, v: usize) -> Interval<S> {
        match d.get(v) {
            VarDomain::Interval(i) => *i,
            // finite sets enter interval evaluation through their hull
            VarDomain::Set(s) => {
                Interval::checked(S::from_f64(s.min() as f64), S::from_f64(s.max() as f64))
                    .unwrap_or_else(Interval::entire)
            }
            VarDomain::Empty => Interval::entire(),
        }
    }

    fn forward(&self, d: &Domain<S>, slice: Option<(usize, Interval<S>)>) -> Vec<Interval<S>> {
        let mut vals: Vec<Interval<S>> = Vec::with_capacity(self.tape.len());
        for node in &self.tape {
            let v = match *node {
                Node::Const(c) => Interval::point(c),
                Node::Var(v) => match slice {
                    Some((t, iv)) if t == v => iv,
                    _ => Self::interval_of(d, v),
                },
                Node::Add(a, b) => arith::add(&vals[a], &vals[b]),
                Node::Sub(a, b) => arith::sub(&vals[a], &vals[b]),
                Node::Mul(a, b) => arith::mul(&vals[a], &vals[b]),
                Node::Neg(a) => arith::neg(&vals[a]),
                Node::Sqr(a) => arith::sqr(&vals[a]),
            };
            vals.push(v);
        }
        vals
    }

    /// Natural interval extension of `lhs - rhs` over `d`, with `slice`
    /// optionally replacing one variable's domain.
    pub fn evaluate(&self, d: &Domain<S>, slice: Option<(usize, Interval<S>)>) -> Interval<S> {
        *self.forward(d, slice).last().expect("non-empty tape")
    }

    /// True when interval evaluation proves there is no solution in `d`
    /// (with `slice` substituted for one variable).
    pub fn refutes(&self, d: &Domain<S>, slice: Option<(usize, Interval<S>)>) -> bool {
        self.evaluate(d, slice)
            .intersect(&self.rel.target())
            .is_none()
    }

    /// One forward evaluation pass followed by one backward projection pass.
    /// Narrows every variable of the constraint.
    pub fn hc4_revise(&self, d: &Domain<S>) -> Domain<S> {
        if d.is_empty() {
            return d.clone();
        }
        let mut vals = self.forward(d, None);
        let root = vals.len() - 1;
        let mut out = d.clone();
        let Some(r) = vals[root].intersect(&self.rel.target()) else {
            return Domain::bottom(d.vars().clone());
        };
        vals[root] = r;
        // children always precede their parent on the tape
        for i in (0..self.tape.len()).rev() {
            let n = vals[i];
            let ok = match self.tape[i] {
                Node::Const(_) => true,
                Node::Var(v) => {
                    if matches!(out.get(v), VarDomain::Interval(_)) {
                        out.narrow(v, &VarDomain::Interval(n));
                    }
                    !out.is_empty()
                }
                Node::Add(a, b) => {
                    let na = arith::sub(&n, &vals[b]);
                    narrow_slot(&mut vals, a, na) && {
                        let nb = arith::sub(&n, &vals[a]);
                        narrow_slot(&mut vals, b, nb)
                    }
                }
                Node::Sub(a, b) => {
                    let na = arith::add(&n, &vals[b]);
                    narrow_slot(&mut vals, a, na) && {
                        let nb = arith::sub(&vals[a], &n);
                        narrow_slot(&mut vals, b, nb)
                    }
                }
                Node::Mul(a, b) => match arith::div_within(&n, &vals[b], &vals[a]) {
                    None => false,
                    Some(na) => {
                        vals[a] = na;
                        match arith::div_within(&n, &vals[a], &vals[b]) {
                            None => false,
                            Some(nb) => {
                                vals[b] = nb;
                                true
                            }
                        }
                    }
                },
                Node::Neg(a) => narrow_slot(&mut vals, a, arith::neg(&n)),
                Node::Sqr(a) => match arith::sqrt(&n) {
                    None => false,
                    Some(root) => {
                        let pos = vals[a].intersect(&root);
                        let negs = vals[a].intersect(&arith::neg(&root));
                        match (pos, negs) {
                            (Some(p), Some(q)) => {
                                vals[a] = p.hull(&q);
                                true
                            }
                            (Some(p), None) | (None, Some(p)) => {
                                vals[a] = p;
                                true
                            }
                            (None, None) => false,
                        }
                    }
                },
            };
            if !ok {
                return Domain::bottom(d.vars().clone());
            }
        }
        out
    }

    pub fn render(&self, names: &[String]) -> String {
        format!(
            "{} {} {}",
            self.lhs.render(names),
            self.rel,
            self.rhs.render(names)
        )
    }
}

fn narrow_slot<S: Scalar>(vals: &mut [Interval<S>], i: usize, by: Interval<S>) -> bool {
    match vals[i].intersect(&by) {
        Some(v) => {
            vals[i] = v;
            true
        }
        None => false,
    }
}

fn compile<S: Scalar>(e: &Expr<S>, tape: &mut Vec<Node<S>>) -> usize {
    let node = match e {
        Expr::Const(c) => Node::Const(*c),
        Expr::Var(v) => Node::Var(*v),
        Expr::Add(a, b) => {
            let (a, b) = (compile(a, tape), compile(b, tape));
            Node::Add(a, b)
        }
        Expr::Sub(a, b) => {
            let (a, b) = (compile(a, tape), compile(b, tape));
            Node::Sub(a, b)
        }
        Expr::Mul(a, b) => {
            let (a, b) = (compile(a, tape), compile(b, tape));
            Node::Mul(a, b)
        }
        Expr::Neg(a) => Node::Neg(compile(a, tape)),
        Expr::Sqr(a) => Node::Sqr(compile(a, tape)),
    };
    tape.push(node);
    tape.len() - 1
}
