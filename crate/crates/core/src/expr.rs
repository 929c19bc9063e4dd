//! A small arithmetic expression language for fields and symbols.
//!
//! Grammar: `+ - * / ^`, parentheses, numbers, the constants `pi` and `e`,
//! the functions `sin cos tan exp ln sqrt abs tanh`, and caller-declared
//! variable names.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression bound to an ordered list of variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
    nvars: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part, e.g. 1e-3
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| Error::Expr {
                pos: start,
                msg: format!("bad number '{text}'"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else {
            // accept the unicode minus sign
            if src[i..].starts_with('\u{2212}') {
                out.push((i, Tok::Op('-')));
                i += '\u{2212}'.len_utf8();
            } else {
                return Err(Error::Expr { pos: i, msg: format!("unexpected character '{}'", &src[i..].chars().next().unwrap()) });
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    vars: &'a [&'a str],
    len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.len)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Expr { pos: self.here(), msg: msg.into() })
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    // right associative, binds tighter than unary minus on its left: -x^2 = -(x^2)
    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected ')'");
                }
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Node::Var(i));
                }
                let func = match name.as_str() {
                    "pi" => return Ok(Node::Num(std::f64::consts::PI)),
                    "e" => return Ok(Node::Num(std::f64::consts::E)),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "tan" => Func::Tan,
                    "exp" => Func::Exp,
                    "ln" | "log" => Func::Ln,
                    "sqrt" => Func::Sqrt,
                    "abs" => Func::Abs,
                    "tanh" => Func::Tanh,
                    _ => {
                        self.pos -= 1;
                        return self.err(format!("unknown identifier '{name}'"));
                    }
                };
                if !self.eat('(') {
                    return self.err(format!("expected '(' after {name}"));
                }
                let arg = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected ')'");
                }
                Ok(Node::Call(func, Box::new(arg)))
            }
            Some(Tok::Op(c)) => self.err(format!("unexpected '{c}'")),
            None => self.err("unexpected end of input"),
        }
    }
}

fn eval_node(n: &Node, vars: &[f64]) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(i) => vars[*i],
        Node::Neg(a) => -eval_node(a, vars),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval_node(a, vars), eval_node(b, vars));
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => {
                    if b == b.round() && b.abs() <= 64.0 {
                        a.powi(b as i32)
                    } else {
                        a.powf(b)
                    }
                }
            }
        }
        Node::Call(f, a) => {
            let a = eval_node(a, vars);
            match f {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Tan => a.tan(),
                Func::Exp => a.exp(),
                Func::Ln => a.ln(),
                Func::Sqrt => a.sqrt(),
                Func::Abs => a.abs(),
                Func::Tanh => a.tanh(),
            }
        }
    }
}

impl Expr {
    /// Parses `src`; identifiers in `vars` become positional arguments to [`Expr::eval`].
    pub fn parse(src: &str, vars: &[&str]) -> Result<Expr> {
        let toks = lex(src)?;
        let mut p = Parser { toks, pos: 0, vars, len: src.len() };
        let root = p.expr()?;
        if p.pos != p.toks.len() {
            return p.err("trailing input");
        }
        Ok(Expr { root, source: src.to_string(), nvars: vars.len() })
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        debug_assert!(vars.len() >= self.nvars);
        eval_node(&self.root, vars)
    }

    /// Like `eval` but rejects non-finite results.
    pub fn eval_checked(&self, vars: &[f64]) -> Result<f64> {
        let v = self.eval(vars);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Expr { pos: 0, msg: format!("'{}' is not finite at {vars:?}", self.source) })
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn is_constant(&self) -> bool {
        fn has_var(n: &Node) -> bool {
            match n {
                Node::Num(_) => false,
                Node::Var(_) => true,
                Node::Neg(a) | Node::Call(_, a) => has_var(a),
                Node::Bin(_, a, b) => has_var(a) || has_var(b),
            }
        }
        !has_var(&self.root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, vars: &[&str], vals: &[f64]) -> f64 {
        Expr::parse(s, vars).unwrap().eval(vals)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1+2*3", &[], &[]), 7.0);
        assert_eq!(ev("(1+2)*3", &[], &[]), 9.0);
        assert_eq!(ev("-2^2", &[], &[]), -4.0);
        assert_eq!(ev("2^3^2", &[], &[]), 512.0);
        assert_eq!(ev("8/2/2", &[], &[]), 2.0);
        assert_eq!(ev("2^-1", &[], &[]), 0.5);
    }

    #[test]
    fn functions_and_vars() {
        let v = ev("exp(-(x^2+xi^2)/2)", &["x", "xi"], &[1.0, 0.0]);
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((ev("1 + 0.5*sin(x1)*cos(x2)", &["x1", "x2"], &[0.3, 0.2]) - (1.0 + 0.5 * 0.3f64.sin() * 0.2f64.cos())).abs() < 1e-15);
        assert!((ev("sqrt(1+xi^2)", &["xi"], &[1.0]) - 2f64.sqrt()).abs() < 1e-15);
        assert!((ev("pi", &[], &[]) - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(ev("1e-3*1000", &[], &[]), 1.0);
        assert_eq!(ev("3 \u{2212} 1", &[], &[]), 2.0);
    }

    #[test]
    fn errors() {
        assert!(Expr::parse("1+", &[]).is_err());
        assert!(Expr::parse("foo(1)", &[]).is_err());
        assert!(Expr::parse("(1", &[]).is_err());
        assert!(Expr::parse("1 2", &[]).is_err());
        assert!(Expr::parse("x$", &["x"]).is_err());
    }
}
