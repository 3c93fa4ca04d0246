//! Tiny arithmetic expression grammar for cost specifications.
//!
//! Expressions are functions of the state level `x` and the action value
//! `a`, with `+ - * / ^`, parentheses, unary minus, and the functions
//! `min(u, v)`, `max(u, v)`, `abs(u)`, and `step(u)` (1 when `u ≥ 0`, else
//! 0 — so `step(x - 4)` is the indicator of `x ≥ 4`).

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("unexpected character '{ch}' at byte {at}")]
    UnexpectedChar { ch: char, at: usize },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unknown identifier '{name}' at byte {at}")]
    UnknownIdent { name: String, at: usize },
    #[error("function '{name}' takes {expected} argument(s), found {found}")]
    BadArity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("expected '{expected}' at byte {at}")]
    Expected { expected: char, at: usize },
    #[error("trailing input at byte {at}")]
    Trailing { at: usize },
    #[error("bad numeric literal at byte {at}")]
    BadNumber { at: usize },
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    State,
    Action,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Min(Box<Node>, Box<Node>),
    Max(Box<Node>, Box<Node>),
    Abs(Box<Node>),
    Step(Box<Node>),
}

/// A compiled cost expression.
#[derive(Clone, Debug, PartialEq)]
pub struct CostExpr {
    root: Node,
    source: String,
}

impl CostExpr {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        let mut p = Parser {
            bytes: source.as_bytes(),
            pos: 0,
        };
        let root = p.expression()?;
        p.skip_ws();
        if p.pos < p.bytes.len() {
            return Err(ParseError::Trailing { at: p.pos });
        }
        Ok(Self {
            root,
            source: source.to_string(),
        })
    }

    pub fn eval(&self, x: f64, a: f64) -> f64 {
        eval(&self.root, x, a)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

fn eval(node: &Node, x: f64, a: f64) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::State => x,
        Node::Action => a,
        Node::Neg(u) => -eval(u, x, a),
        Node::Add(u, v) => eval(u, x, a) + eval(v, x, a),
        Node::Sub(u, v) => eval(u, x, a) - eval(v, x, a),
        Node::Mul(u, v) => eval(u, x, a) * eval(v, x, a),
        Node::Div(u, v) => eval(u, x, a) / eval(v, x, a),
        Node::Pow(u, v) => eval(u, x, a).powf(eval(v, x, a)),
        Node::Min(u, v) => eval(u, x, a).min(eval(v, x, a)),
        Node::Max(u, v) => eval(u, x, a).max(eval(v, x, a)),
        Node::Abs(u) => eval(u, x, a).abs(),
        Node::Step(u) => {
            if eval(u, x, a) >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, ch: u8) -> Result<(), ParseError> {
        if self.peek() == Some(ch) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ParseError::Expected {
                expected: ch as char,
                at: self.pos,
            })
        }
    }

    fn expression(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // Unary minus binds looser than '^': -x^2 is -(x^2).
    fn factor(&mut self) -> Result<Node, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            // Right-associative.
            let exp = self.factor()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            None => Err(ParseError::UnexpectedEnd),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expression()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => Err(ParseError::UnexpectedChar {
                ch: c as char,
                at: self.pos,
            }),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            let exponent_sign = (c == b'+' || c == b'-')
                && self.pos > start
                && matches!(self.bytes[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exponent_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<f64>().ok())
            .map(Node::Num)
            .ok_or(ParseError::BadNumber { at: start })
    }

    fn ident(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("identifier bytes are ascii")
            .to_string();
        match name.as_str() {
            "x" => Ok(Node::State),
            "a" => Ok(Node::Action),
            "min" | "max" => {
                let args = self.args(&name)?;
                if args.len() != 2 {
                    return Err(ParseError::BadArity {
                        name,
                        expected: 2,
                        found: args.len(),
                    });
                }
                let mut it = args.into_iter();
                let (u, v) = (Box::new(it.next().unwrap()), Box::new(it.next().unwrap()));
                Ok(if name == "min" {
                    Node::Min(u, v)
                } else {
                    Node::Max(u, v)
                })
            }
            "abs" | "step" => {
                let args = self.args(&name)?;
                if args.len() != 1 {
                    return Err(ParseError::BadArity {
                        name,
                        expected: 1,
                        found: args.len(),
                    });
                }
                let u = Box::new(args.into_iter().next().unwrap());
                Ok(if name == "abs" {
                    Node::Abs(u)
                } else {
                    Node::Step(u)
                })
            }
            _ => Err(ParseError::UnknownIdent { name, at: start }),
        }
    }

    fn args(&mut self, _name: &str) -> Result<Vec<Node>, ParseError> {
        self.expect(b'(')?;
        let mut out = vec![self.expression()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            out.push(self.expression()?);
        }
        self.expect(b')')?;
        Ok(out)
    }
}
