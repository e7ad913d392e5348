//! Model-file grammar.
//!
//! ```text
//! # comment
//! species A, B;
//! modes D, DP1, DP2 in {(1,0,0),(0,1,0),(0,0,1)};
//! param rho = 0.7;
//! 0 -> A @ mass_action(rho);
//! A + 2*B -> 0 @ rate(rho * A * B^2);
//! P -> 0 @ rate(saturating(k3, M, P, k7));
//! lyapunov g = A^2 + B^2;
//! ```

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::{custom_law, CustomArg, ModeGroup, ModelError, RateLaw, Reaction, ReactionNetwork, Species};
use crate::polynomial::Polynomial;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(BigRational, bool),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ModelError {
    ModelError::Syntax { line, column, message: message.into() }
}

fn parse_decimal(text: &str) -> Option<BigRational> {
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
        None => (mantissa, ""),
    };
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = digits.parse().ok()?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    Some(if scale >= 0 {
        BigRational::from_integer(numer * ten.pow(scale as u32))
    } else {
        BigRational::new(numer, ten.pow((-scale) as u32))
    })
}

fn lex(text: &str) -> Result<Vec<Token>, ModelError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start_col = col;
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Token { tok: Tok::Ident(word), line, column: start_col });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let literal: String = chars[start..i].iter().collect();
            col += i - start;
            let value = parse_decimal(&literal)
                .ok_or_else(|| syntax(line, start_col, format!("malformed number `{literal}`")))?;
            let is_integer = !literal.contains(['.', 'e', 'E']);
            out.push(Token { tok: Tok::Number(value, is_integer), line, column: start_col });
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let sym = if two == "->" {
            "->"
        } else {
            match c {
                ';' => ";",
                ',' => ",",
                '(' => "(",
                ')' => ")",
                '{' => "{",
                '}' => "}",
                '@' => "@",
                '+' => "+",
                '-' => "-",
                '*' => "*",
                '/' => "/",
                '^' => "^",
                '=' => "=",
                _ => return Err(syntax(line, col, format!("unexpected character `{c}`"))),
            }
        };
        i += sym.len();
        col += sym.len();
        out.push(Token { tok: Tok::Sym(sym), line, column: start_col });
    }
    out.push(Token { tok: Tok::Eof, line, column: col });
    Ok(out)
}

#[derive(Debug, Clone)]
enum Expr {
    Num(BigRational),
    Name(String, usize, usize),
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Call(String, Vec<Expr>, usize, usize),
}

struct Complex {
    terms: Vec<(u32, String, usize, usize)>,
}

enum RateSpec {
    MassAction(Expr),
    Rate(Expr),
}

enum Statement {
    Species(Vec<(String, usize, usize)>),
    Modes(Vec<(String, usize, usize)>, Vec<Vec<i64>>, usize, usize),
    Param(String, Expr),
    Lyapunov(Expr),
    Reaction(Complex, Complex, RateSpec, usize),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> ModelError {
        let t = self.peek();
        syntax(t.line, t.column, message)
    }

    fn expect(&mut self, sym: &'static str) -> Result<(), ModelError> {
        if self.peek().tok == Tok::Sym(sym) {
            self.next();
            Ok(())
        } else {
            Err(self.error_here(format!("expected `{sym}`")))
        }
    }

    fn eat(&mut self, sym: &'static str) -> bool {
        if self.peek().tok == Tok::Sym(sym) {
            self.next();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<(String, usize, usize), ModelError> {
        let t = self.next();
        match t.tok {
            Tok::Ident(name) => Ok((name, t.line, t.column)),
            _ => Err(syntax(t.line, t.column, "expected identifier")),
        }
    }

    fn integer(&mut self) -> Result<i64, ModelError> {
        let negative = self.eat("-");
        let t = self.next();
        match t.tok {
            Tok::Number(v, true) => {
                let v: i64 = v.to_integer().try_into().map_err(|_| syntax(t.line, t.column, "integer too large"))?;
                Ok(if negative { -v } else { v })
            }
            _ => Err(syntax(t.line, t.column, "expected integer")),
        }
    }

    fn statements(&mut self) -> Result<Vec<Statement>, ModelError> {
        let mut out = Vec::new();
        while self.peek().tok != Tok::Eof {
            out.push(self.statement()?);
        }
        Ok(out)
    }

    fn name_list(&mut self) -> Result<Vec<(String, usize, usize)>, ModelError> {
        let mut names = vec![self.ident()?];
        while self.eat(",") {
            names.push(self.ident()?);
        }
        Ok(names)
    }

    fn statement(&mut self) -> Result<Statement, ModelError> {
        let head = self.peek().clone();
        let stmt = match &head.tok {
            Tok::Ident(k) if k == "species" => {
                self.next();
                Statement::Species(self.name_list()?)
            }
            Tok::Ident(k) if k == "modes" => {
                self.next();
                let names = self.name_list()?;
                match self.next().tok {
                    Tok::Ident(w) if w == "in" => {}
                    _ => return Err(syntax(head.line, head.column, "expected `in` after mode species")),
                }
                self.expect("{")?;
                let mut tuples = Vec::new();
                loop {
                    self.expect("(")?;
                    let mut tuple = vec![self.integer()?];
                    while self.eat(",") {
                        tuple.push(self.integer()?);
                    }
                    self.expect(")")?;
                    tuples.push(tuple);
                    if !self.eat(",") {
                        break;
                    }
                }
                self.expect("}")?;
                Statement::Modes(names, tuples, head.line, head.column)
            }
            Tok::Ident(k) if k == "param" => {
                self.next();
                let (name, ..) = self.ident()?;
                self.expect("=")?;
                Statement::Param(name, self.expr()?)
            }
            Tok::Ident(k) if k == "lyapunov" => {
                self.next();
                self.ident()?;
                self.expect("=")?;
                Statement::Lyapunov(self.expr()?)
            }
            _ => {
                let lhs = self.complex()?;
                self.expect("->")?;
                let rhs = self.complex()?;
                self.expect("@")?;
                let (law, ..) = self.ident()?;
                self.expect("(")?;
                let arg = self.expr()?;
                self.expect(")")?;
                let rate = match law.as_str() {
                    "mass_action" => RateSpec::MassAction(arg),
                    "rate" => RateSpec::Rate(arg),
                    other => return Err(syntax(head.line, head.column, format!("unknown rate kind `{other}`"))),
                };
                Statement::Reaction(lhs, rhs, rate, head.line)
            }
        };
        self.expect(";")?;
        Ok(stmt)
    }

    fn complex(&mut self) -> Result<Complex, ModelError> {
        if let Tok::Number(v, true) = &self.peek().tok {
            if v.is_zero() {
                self.next();
                return Ok(Complex { terms: Vec::new() });
            }
        }
        let mut terms = Vec::new();
        loop {
            let mut k = 1u32;
            if let Tok::Number(v, true) = &self.peek().tok {
                k = v.to_integer().try_into().map_err(|_| self.error_here("stoichiometry too large"))?;
                self.next();
                self.expect("*")?;
            }
            let (name, line, column) = self.ident()?;
            terms.push((k, name, line, column));
            if !self.eat("+") {
                break;
            }
        }
        Ok(Complex { terms })
    }

    fn expr(&mut self) -> Result<Expr, ModelError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat("+") {
                lhs = Expr::Bin('+', Box::new(lhs), Box::new(self.term()?));
            } else if self.eat("-") {
                lhs = Expr::Bin('-', Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ModelError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat("*") {
                lhs = Expr::Bin('*', Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat("/") {
                lhs = Expr::Bin('/', Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ModelError> {
        if self.eat("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat("^") {
            let t = self.next();
            match t.tok {
                Tok::Number(v, true) => {
                    let e: u32 =
                        v.to_integer().try_into().map_err(|_| syntax(t.line, t.column, "exponent too large"))?;
                    return Ok(Expr::Pow(Box::new(base), e));
                }
                _ => return Err(syntax(t.line, t.column, "exponent must be a nonnegative integer")),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ModelError> {
        let t = self.next();
        match t.tok {
            Tok::Number(v, _) => Ok(Expr::Num(v)),
            Tok::Ident(name) => {
                if self.eat("(") {
                    let mut args = vec![self.expr()?];
                    while self.eat(",") {
                        args.push(self.expr()?);
                    }
                    self.expect(")")?;
                    Ok(Expr::Call(name, args, t.line, t.column))
                } else {
                    Ok(Expr::Name(name, t.line, t.column))
                }
            }
            Tok::Sym("(") => {
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => Err(syntax(t.line, t.column, "expected expression")),
        }
    }
}

struct Scope<'a> {
    species: &'a [Species],
    params: &'a [(String, BigRational)],
}

impl Scope<'_> {
    fn param(&self, name: &str) -> Option<&BigRational> {
        self.params.iter().rev().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    fn species(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    fn constant(&self, e: &Expr) -> Result<BigRational, ModelError> {
        let p = self.polynomial(e, false)?;
        Ok(p.as_constant().expect("constant expressions have no variables"))
    }

    fn polynomial(&self, e: &Expr, allow_species: bool) -> Result<Polynomial, ModelError> {
        let n = self.species.len();
        Ok(match e {
            Expr::Num(v) => Polynomial::constant(n, v.clone()),
            Expr::Name(name, line, column) => {
                if let Some(v) = self.param(name) {
                    Polynomial::constant(n, v.clone())
                } else if let (true, Some(i)) = (allow_species, self.species(name)) {
                    Polynomial::variable(n, i)
                } else {
                    let kind =
                        if self.species(name).is_some() { "parameter (species not allowed here)" } else { "parameter" };
                    return Err(ModelError::Undefined { kind, name: name.clone(), line: *line, column: *column });
                }
            }
            Expr::Neg(a) => -&self.polynomial(a, allow_species)?,
            Expr::Bin(op, a, b) => {
                let a = self.polynomial(a, allow_species)?;
                let b = self.polynomial(b, allow_species)?;
                match op {
                    '+' => &a + &b,
                    '-' => &a - &b,
                    '*' => &a * &b,
                    _ => {
                        let d = b
                            .as_constant()
                            .ok_or_else(|| ModelError::Invalid("division by a non-constant expression".into()))?;
                        if d.is_zero() {
                            return Err(ModelError::Invalid("division by zero".into()));
                        }
                        a.scale(&(BigRational::one() / d))
                    }
                }
            }
            Expr::Pow(a, k) => self.polynomial(a, allow_species)?.pow(*k),
            Expr::Call(name, _, line, column) => {
                return Err(syntax(*line, *column, format!("`{name}(...)` is only allowed as a whole rate expression")))
            }
        })
    }

    fn custom_args(&self, args: &[Expr]) -> Result<Vec<CustomArg>, ModelError> {
        args.iter()
            .map(|a| match a {
                Expr::Name(name, ..) if self.param(name).is_none() && self.species(name).is_some() => {
                    Ok(CustomArg::Species(self.species(name).unwrap()))
                }
                other => Ok(CustomArg::Number(self.constant(other)?)),
            })
            .collect()
    }
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> Result<ReactionNetwork, ModelError> {
    let toks = lex(text)?;
    let eof = toks.last().map(|t| (t.line, t.column)).unwrap_or((1, 1));
    let statements = Parser { toks, pos: 0 }.statements()?;

    let mut species: Vec<Species> = Vec::new();
    let mut modes: Vec<ModeGroup> = Vec::new();
    for st in &statements {
        match st {
            Statement::Species(names) => {
                for (name, line, column) in names {
                    if species.iter().any(|s| &s.name == name) {
                        return Err(syntax(*line, *column, format!("species `{name}` declared twice")));
                    }
                    species.push(Species { name: name.clone(), mode_flag: false });
                }
            }
            Statement::Modes(names, tuples, line, column) => {
                let mut group = Vec::new();
                for (name, l, c) in names {
                    if species.iter().any(|s| &s.name == name) {
                        return Err(syntax(*l, *c, format!("species `{name}` declared twice")));
                    }
                    group.push(species.len());
                    species.push(Species { name: name.clone(), mode_flag: true });
                }
                if tuples.iter().any(|t| t.len() != group.len()) {
                    return Err(syntax(*line, *column, "mode tuple length does not match mode species"));
                }
                modes.push(ModeGroup { species: group, values: tuples.clone() });
            }
            _ => {}
        }
    }
    if species.is_empty() {
        return Err(syntax(eof.0, eof.1, "model declares no species"));
    }

    let mut params: Vec<(String, BigRational)> = Vec::new();
    let mut reactions = Vec::new();
    let mut lyapunov = None;
    let n = species.len();
    for st in &statements {
        let scope = Scope { species: &species, params: &params };
        match st {
            Statement::Param(name, e) => {
                let v = scope.constant(e)?;
                params.push((name.clone(), v));
            }
            Statement::Lyapunov(e) => lyapunov = Some(scope.polynomial(e, true)?),
            Statement::Reaction(lhs, rhs, rate, line) => {
                let mut vecs = [vec![0u32; n], vec![0u32; n]];
                for (side, complex) in [lhs, rhs].into_iter().enumerate() {
                    for (k, name, l, c) in &complex.terms {
                        let i = scope.species(name).ok_or_else(|| ModelError::Undefined {
                            kind: "species",
                            name: name.clone(),
                            line: *l,
                            column: *c,
                        })?;
                        vecs[side][i] += k;
                    }
                }
                let law = match rate {
                    RateSpec::MassAction(e) => {
                        let c = scope.constant(e)?;
                        if c.is_negative() {
                            return Err(ModelError::NegativeRate {
                                reaction: reactions.len(),
                                detail: format!("mass-action constant {c} on line {line} is negative"),
                            });
                        }
                        RateLaw::MassAction(c)
                    }
                    RateSpec::Rate(Expr::Call(name, args, l, c)) => {
                        let args = scope.custom_args(args)?;
                        RateLaw::Custom(custom_law(name, n, &args).map_err(|m| syntax(*l, *c, m))?)
                    }
                    RateSpec::Rate(e) => RateLaw::Polynomial(scope.polynomial(e, true)?),
                };
                let [consume, produce] = vecs;
                let reaction = Reaction::new(consume, produce, law).map_err(|e| match e {
                    ModelError::NegativeRate { detail, .. } => {
                        ModelError::NegativeRate { reaction: reactions.len(), detail }
                    }
                    other => other,
                })?;
                reactions.push(reaction);
            }
            _ => {}
        }
    }
    if reactions.is_empty() {
        return Err(syntax(eof.0, eof.1, "model declares no reactions"));
    }
    ReactionNetwork::new(species, reactions, params, modes, lyapunov)
}
