//! Pre-order token expressions: validity, vectorized evaluation, and infix
//! rendering.

use super::token::{Op, Token, TokenSet};
use nalgebra::DMatrix;

/// An expression as a complete pre-order token sequence plus the fitted
/// values of its constant placeholders (in pre-order).
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    pub tokens: Vec<Token>,
    pub constants: Vec<f64>,
}

impl Expression {
    pub fn new(tokens: Vec<Token>) -> Self {
        let n_consts = tokens.iter().filter(|t| **t == Token::Const).count();
        Self {
            tokens,
            constants: vec![1.0; n_consts],
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_consts(&self) -> usize {
        self.constants.len()
    }

    /// Pre-order completeness: arity bookkeeping reaches exactly zero at the
    /// last token and never earlier.
    pub fn is_valid(&self) -> bool {
        if self.tokens.is_empty() {
            return false;
        }
        let mut open = 1usize;
        for (i, t) in self.tokens.iter().enumerate() {
            if open == 0 {
                return false; // tokens after completion
            }
            open = open - 1 + t.arity();
            if open == 0 && i + 1 != self.tokens.len() {
                return false;
            }
        }
        open == 0
            && self.constants.len() == self.tokens.iter().filter(|t| **t == Token::Const).count()
    }

    /// Evaluate over every row of `vars` (samples × variables). Returns
    /// `None` if any intermediate is non-finite (division blow-up, overflow).
    pub fn eval(&self, vars: &DMatrix<f64>) -> Option<Vec<f64>> {
        let n = vars.nrows();
        let mut stack: Vec<Vec<f64>> = Vec::new();
        let mut const_idx = self.constants.len();
        // Reverse pre-order: operands are on the stack when their operator
        // arrives; the first pop is the left operand.
        for t in self.tokens.iter().rev() {
            match t {
                Token::Var(j) => {
                    stack.push(vars.column(*j).iter().copied().collect());
                }
                Token::Const => {
                    const_idx -= 1;
                    stack.push(vec![self.constants[const_idx]; n]);
                }
                Token::Op(op) => {
                    let mut finite = true;
                    match op.arity() {
                        1 => {
                            let mut a = stack.pop()?;
                            for v in a.iter_mut() {
                                *v = match op {
                                    Op::Sin => v.sin(),
                                    Op::Cos => v.cos(),
                                    _ => unreachable!(),
                                };
                                finite &= v.is_finite();
                            }
                            if !finite {
                                return None;
                            }
                            stack.push(a);
                        }
                        2 => {
                            let mut a = stack.pop()?;
                            let b = stack.pop()?;
                            for (x, y) in a.iter_mut().zip(b.iter()) {
                                *x = match op {
                                    Op::Add => *x + y,
                                    Op::Sub => *x - y,
                                    Op::Mul => *x * y,
                                    Op::Div => *x / y,
                                    _ => unreachable!(),
                                };
                                finite &= x.is_finite();
                            }
                            if !finite {
                                return None;
                            }
                            stack.push(a);
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }
        if stack.len() == 1 {
            stack.pop()
        } else {
            None
        }
    }

    /// Scalar evaluation on one variable row; `None` on a non-finite
    /// intermediate.
    pub fn eval_row(&self, row: &[f64]) -> Option<f64> {
        let mut stack: Vec<f64> = Vec::with_capacity(self.tokens.len());
        let mut const_idx = self.constants.len();
        for t in self.tokens.iter().rev() {
            let v = match t {
                Token::Var(j) => row[*j],
                Token::Const => {
                    const_idx -= 1;
                    self.constants[const_idx]
                }
                Token::Op(op) => match op {
                    Op::Sin => stack.pop()?.sin(),
                    Op::Cos => stack.pop()?.cos(),
                    Op::Add => stack.pop()? + stack.pop()?,
                    Op::Sub => stack.pop()? - stack.pop()?,
                    Op::Mul => stack.pop()? * stack.pop()?,
                    Op::Div => stack.pop()? / stack.pop()?,
                },
            };
            if !v.is_finite() {
                return None;
            }
            stack.push(v);
        }
        stack.pop()
    }

    /// Per-row evaluation that tolerates invalid rows: those predictions
    /// come back as 0 and the count of such rows is returned alongside.
    pub fn eval_lenient(&self, vars: &DMatrix<f64>) -> (Vec<f64>, usize) {
        let n = vars.nrows();
        let mut out = vec![0.0; n];
        let mut bad = 0usize;
        let mut row = vec![0.0; vars.ncols()];
        for k in 0..n {
            for j in 0..vars.ncols() {
                row[j] = vars[(k, j)];
            }
            match self.eval_row(&row) {
                Some(v) => out[k] = v,
                None => bad += 1,
            }
        }
        (out, bad)
    }

    /// Parenthesized infix rendering with fitted constant values.
    pub fn infix(&self, ts: &TokenSet) -> String {
        fn rec(
            tokens: &[Token],
            pos: &mut usize,
            const_idx: &mut usize,
            constants: &[f64],
            ts: &TokenSet,
        ) -> String {
            let t = tokens[*pos];
            *pos += 1;
            match t {
                Token::Var(j) => ts.var_names[j].clone(),
                Token::Const => {
                    let v = constants[*const_idx];
                    *const_idx += 1;
                    format!("{v:.6}")
                }
                Token::Op(op) => match op.arity() {
                    1 => {
                        let inner = rec(tokens, pos, const_idx, constants, ts);
                        format!("{}({inner})", op.name())
                    }
                    _ => {
                        let left = rec(tokens, pos, const_idx, constants, ts);
                        let right = rec(tokens, pos, const_idx, constants, ts);
                        format!("({left} {} {right})", op.name())
                    }
                },
            }
        }
        let mut pos = 0;
        let mut cidx = 0;
        rec(&self.tokens, &mut pos, &mut cidx, &self.constants, ts)
    }

    /// Token names in sequence order (for serialization).
    pub fn token_names(&self, ts: &TokenSet) -> Vec<String> {
        self.tokens
            .iter()
            .map(|t| match t {
                Token::Op(op) => op.name().to_string(),
                Token::Var(j) => ts.var_names[*j].clone(),
                Token::Const => "const".to_string(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts2() -> TokenSet {
        TokenSet::standard(vec!["x1".into(), "x2".into()])
    }

    fn data2() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 2, &[0.3, 0.7, 1.0, -1.0, 0.0, 2.0])
    }

    #[test]
    fn addition_of_two_variables() {
        let e = Expression::new(vec![Token::Op(Op::Add), Token::Var(0), Token::Var(1)]);
        assert!(e.is_valid());
        let out = e.eval(&data2()).unwrap();
        assert_eq!(out, vec![1.0, 0.0, 2.0]);
    }

    #[test]
    fn division_by_zero_is_invalid() {
        let mut e = Expression::new(vec![Token::Op(Op::Div), Token::Const, Token::Var(0)]);
        e.constants = vec![1.0];
        assert!(e.eval(&data2()).is_none());
    }

    #[test]
    fn constant_scaling() {
        let mut e = Expression::new(vec![Token::Op(Op::Mul), Token::Const, Token::Var(1)]);
        e.constants = vec![2.5];
        let out = e.eval(&data2()).unwrap();
        assert_eq!(out, vec![2.5 * 0.7, -2.5, 5.0]);
    }

    #[test]
    fn subtraction_operand_order() {
        // [−, x1, x2] must be x1 − x2.
        let e = Expression::new(vec![Token::Op(Op::Sub), Token::Var(0), Token::Var(1)]);
        let out = e.eval(&data2()).unwrap();
        assert_eq!(out[0], 0.3 - 0.7);
    }

    #[test]
    fn completeness_detects_bad_sequences() {
        assert!(!Expression::new(vec![Token::Op(Op::Add), Token::Var(0)]).is_valid());
        assert!(!Expression::new(vec![Token::Var(0), Token::Var(1)]).is_valid());
        assert!(Expression::new(vec![Token::Op(Op::Sin), Token::Var(0)]).is_valid());
    }

    #[test]
    fn infix_rendering() {
        let mut e = Expression::new(vec![
            Token::Op(Op::Add),
            Token::Op(Op::Mul),
            Token::Const,
            Token::Var(0),
            Token::Op(Op::Sin),
            Token::Var(1),
        ]);
        e.constants = vec![3.0];
        assert_eq!(e.infix(&ts2()), "((3.000000 * x1) + sin(x2))");
    }
}
