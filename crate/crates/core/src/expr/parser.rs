//! Recursive-descent parser for `lambda p1, p2, ...: <expr>`.
//!
//! ```text
//! lambda  := "lambda" [ ident { "," ident } ] ":" expr
//! expr    := term { ("+" | "-") term }
//! term    := unary { ("*" | "/") unary }
//! unary   := ("-" | "+") unary | power
//! power   := atom [ ("**" | "^") unary ]
//! atom    := number | ident | ident "(" expr { "," expr } ")" | "(" expr ")"
//! ```

use thiserror::Error;

use super::ast::{BinOp, Expr, Lambda};
use super::builtins::Builtin;
use super::lexer::{tokenize, Pos, Tok, Token};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {reason}")]
    Syntax { pos: Pos, reason: String },
    #[error("unknown function `{name}` at {pos}")]
    UnknownFunction { name: String, pos: Pos },
    #[error("undeclared parameter `{name}` at {pos}")]
    UndeclaredParameter { name: String, pos: Pos },
    #[error("`{name}` at {pos} takes {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: String,
        got: usize,
        pos: Pos,
    },
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::UnknownFunction { pos, .. }
            | ParseError::UndeclaredParameter { pos, .. }
            | ParseError::Arity { pos, .. } => *pos,
        }
    }
}

/// Parses a full lambda source.
pub fn parse(source: &str) -> Result<Lambda, ParseError> {
    let tokens = tokenize(source).map_err(|e| ParseError::Syntax {
        pos: e.pos,
        reason: e.reason,
    })?;
    let mut p = Parser {
        tokens,
        at: 0,
        params: Vec::new(),
    };
    p.lambda()
}

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    at: usize,
    params: Vec<String>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token<'a> {
        &self.tokens[self.at]
    }

    fn bump(&mut self) -> Token<'a> {
        let t = self.tokens[self.at].clone();
        if t.tok != Tok::Eof {
            self.at += 1;
        }
        t
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, ParseError> {
        let t = self.peek();
        Err(ParseError::Syntax {
            pos: t.pos,
            reason: format!("expected {wanted}, found {}", t.tok),
        })
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> Result<Token<'a>, ParseError> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            self.unexpected(wanted)
        }
    }

    fn lambda(&mut self) -> Result<Lambda, ParseError> {
        self.expect(Tok::Lambda, "`lambda`")?;
        if let Tok::Ident(_) = self.peek().tok {
            loop {
                let t = self.bump();
                let Tok::Ident(name) = t.tok else {
                    return Err(ParseError::Syntax {
                        pos: t.pos,
                        reason: format!("expected parameter name, found {}", t.tok),
                    });
                };
                if self.params.contains(&name) {
                    return Err(ParseError::Syntax {
                        pos: t.pos,
                        reason: format!("duplicate parameter `{name}`"),
                    });
                }
                self.params.push(name);
                if self.peek().tok == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::Colon, "`:` after parameter list")?;
        let body = self.expr()?;
        if self.peek().tok != Tok::Eof {
            return self.unexpected("operator or end of input");
        }
        Ok(Lambda {
            params: std::mem::take(&mut self.params),
            body,
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().tok {
            Tok::Minus => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Pow {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if self.peek().tok == Tok::LParen {
                    self.call(name, t.pos)
                } else {
                    match self.params.iter().position(|p| *p == name) {
                        Some(i) => Ok(Expr::Param(i)),
                        None => Err(ParseError::UndeclaredParameter { name, pos: t.pos }),
                    }
                }
            }
            _ => self.unexpected("expression"),
        }
    }

    fn call(&mut self, name: String, pos: Pos) -> Result<Expr, ParseError> {
        let Some(f) = Builtin::lookup(&name) else {
            return Err(ParseError::UnknownFunction { name, pos });
        };
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                args.push(self.expr()?);
                if self.peek().tok == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)` or `,`")?;
        if !f.accepts(args.len()) {
            return Err(ParseError::Arity {
                name,
                expected: f.arity_text(),
                got: args.len(),
                pos,
            });
        }
        Ok(Expr::Call(f, args))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_lambda() {
        let l = parse("lambda zerolm_core: zerolm_core").unwrap();
        assert_eq!(l.params, vec!["zerolm_core"]);
        assert_eq!(l.body, Expr::Param(0));
    }

    #[test]
    fn stability_gate_parses() {
        let l = parse("lambda spectral_cv_abs: 1.0 / (1.0 + abs(spectral_cv_abs))").unwrap();
        assert_eq!(l.params, vec!["spectral_cv_abs"]);
        assert!(l.unused_params().is_empty());
    }

    #[test]
    fn undeclared_parameter() {
        let err = parse("lambda x: y + 1").unwrap_err();
        assert_eq!(
            err,
            ParseError::UndeclaredParameter {
                name: "y".into(),
                pos: Pos { line: 1, column: 11 }
            }
        );
    }

    #[test]
    fn unknown_function_and_arity() {
        assert!(matches!(
            parse("lambda x: sin(x)"),
            Err(ParseError::UnknownFunction { .. })
        ));
        assert!(matches!(
            parse("lambda x: tanh(x, x)"),
            Err(ParseError::Arity { got: 2, .. })
        ));
    }

    #[test]
    fn precedence() {
        // power binds tighter than unary minus, which binds tighter than * and +
        let l = parse("lambda x: -x ** 2 * 3 + 1").unwrap();
        let x2 = Expr::binary(BinOp::Pow, Expr::Param(0), Expr::Num(2.0));
        let expect = Expr::binary(
            BinOp::Add,
            Expr::binary(BinOp::Mul, Expr::Neg(Box::new(x2)), Expr::Num(3.0)),
            Expr::Num(1.0),
        );
        assert_eq!(l.body, expect);
    }

    #[test]
    fn power_is_right_associative() {
        let l = parse("lambda x: x ^ 2 ** 3").unwrap();
        let inner = Expr::binary(BinOp::Pow, Expr::Num(2.0), Expr::Num(3.0));
        assert_eq!(l.body, Expr::binary(BinOp::Pow, Expr::Param(0), inner));
    }

    #[test]
    fn multiline_source_reports_line() {
        let err = parse("lambda a, b:\n    a +\n    ) b").unwrap_err();
        assert_eq!(err.pos(), Pos { line: 3, column: 5 });
    }

    #[test]
    fn unused_parameter_is_not_an_error() {
        let l = parse("lambda a, b: a").unwrap();
        assert_eq!(l.unused_params(), vec!["b"]);
    }

    #[test]
    fn display_reparses_to_same_tree() {
        for src in [
            "lambda a, b: (a - b) - (a - b)",
            "lambda a: -(a ** 2) ** -a",
            "lambda a: (-a) ** 2",
            "lambda a, b: a / (b * a) / 2.5e-7",
            "lambda: stack(1.0, 2.0, 3.0)",
            "lambda v: topk(softmax(v), 3)",
        ] {
            let l = parse(src).unwrap();
            let again = parse(&l.to_string()).unwrap();
            assert_eq!(l, again, "{src} -> {l}");
        }
    }
}
