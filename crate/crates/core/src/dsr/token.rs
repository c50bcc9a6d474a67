//! Token vocabulary for expression sampling: operators, dataset variables,
//! and an optional constant placeholder.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Operators available to the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Sin,
    Cos,
}

impl Op {
    pub const ALL: [Op; 6] = [Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Sin, Op::Cos];

    pub fn arity(&self) -> usize {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div => 2,
            Op::Sin | Op::Cos => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Sin => "sin",
            Op::Cos => "cos",
        }
    }
}

/// One vocabulary entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Op(Op),
    /// Index into the variable columns.
    Var(usize),
    Const,
}

impl Token {
    pub fn arity(&self) -> usize {
        match self {
            Token::Op(op) => op.arity(),
            _ => 0,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.arity() == 0
    }
}

/// Dense, stable token-id assignment: operators first, then variables, then
/// the constant placeholder.
#[derive(Debug, Clone)]
pub struct TokenSet {
    pub ops: Vec<Op>,
    pub var_names: Vec<String>,
    pub use_const: bool,
}

impl TokenSet {
    pub fn new(ops: Vec<Op>, var_names: Vec<String>, use_const: bool) -> Result<Self> {
        if var_names.is_empty() {
            return Err(Error::Config("token set needs at least one variable".into()));
        }
        if ops.is_empty() {
            return Err(Error::Config("token set needs at least one operator".into()));
        }
        Ok(Self {
            ops,
            var_names,
            use_const,
        })
    }

    /// All six operators over the given variables plus a constant.
    pub fn standard(var_names: Vec<String>) -> Self {
        Self {
            ops: Op::ALL.to_vec(),
            var_names,
            use_const: true,
        }
    }

    pub fn vocab(&self) -> usize {
        self.ops.len() + self.var_names.len() + usize::from(self.use_const)
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn token(&self, id: usize) -> Token {
        let n_ops = self.ops.len();
        if id < n_ops {
            Token::Op(self.ops[id])
        } else if id < n_ops + self.var_names.len() {
            Token::Var(id - n_ops)
        } else {
            Token::Const
        }
    }

    pub fn id(&self, token: Token) -> Option<usize> {
        match token {
            Token::Op(op) => self.ops.iter().position(|o| *o == op),
            Token::Var(i) => (i < self.var_names.len()).then_some(self.ops.len() + i),
            Token::Const => self.use_const.then_some(self.vocab() - 1),
        }
    }

    pub fn arity_of(&self, id: usize) -> usize {
        self.token(id).arity()
    }

    pub fn name_of(&self, id: usize) -> String {
        match self.token(id) {
            Token::Op(op) => op.name().to_string(),
            Token::Var(i) => self.var_names[i].clone(),
            Token::Const => "const".to_string(),
        }
    }

    /// Inverse of [`name_of`]; used when reading stored expressions.
    pub fn token_by_name(&self, name: &str) -> Option<Token> {
        if name == "const" {
            return self.use_const.then_some(Token::Const);
        }
        if let Some(op) = self.ops.iter().find(|o| o.name() == name) {
            return Some(Token::Op(*op));
        }
        self.var_names
            .iter()
            .position(|v| v == name)
            .map(Token::Var)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_layout_is_dense_and_stable() {
        let ts = TokenSet::standard(vec!["a".into(), "b".into()]);
        assert_eq!(ts.vocab(), 9);
        for id in 0..ts.vocab() {
            assert_eq!(ts.id(ts.token(id)), Some(id));
        }
        assert_eq!(ts.token(0), Token::Op(Op::Add));
        assert_eq!(ts.token(6), Token::Var(0));
        assert_eq!(ts.token(8), Token::Const);
    }

    #[test]
    fn arities_match_operator_kinds() {
        assert_eq!(Op::Add.arity(), 2);
        assert_eq!(Op::Div.arity(), 2);
        assert_eq!(Op::Sin.arity(), 1);
        assert_eq!(Token::Const.arity(), 0);
    }
}
