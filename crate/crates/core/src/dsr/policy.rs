//! Autoregressive recurrent policy over expression tokens.
//!
//! Each sampling step conditions a tanh recurrent cell on one-hot encodings
//! of the parent and sibling of the tree slot being filled; masked softmax
//! logits give the token distribution. Syntactic masks guarantee that every
//! sampled sequence is a complete pre-order traversal within the length
//! budget. Gradients are exact backpropagation through the unrolled cell,
//! checked against finite differences in the tests.

use super::expr::Expression;
use super::token::TokenSet;
use rand::Rng;

/// Sampling limits shared by the sampler and the replay passes.
#[derive(Debug, Clone, Copy)]
pub struct SampleLimits {
    pub max_length: usize,
    pub max_consts: usize,
}

/// Pending tree slot: the parent token id, where the left-sibling token (if
/// any) sits in the sequence, and the number of consecutive unary ancestors.
#[derive(Debug, Clone, Copy)]
struct Slot {
    parent: Option<usize>,
    sibling_pos: Option<usize>,
    unary_depth: u8,
}

/// Incremental pre-order builder: one source of truth for conditioning
/// inputs and masks during sampling and during gradient replay.
pub struct SeqBuilder<'a> {
    ts: &'a TokenSet,
    limits: SampleLimits,
    stack: Vec<Slot>,
    tokens: Vec<usize>,
    n_consts: usize,
}

impl<'a> SeqBuilder<'a> {
    pub fn new(ts: &'a TokenSet, limits: SampleLimits) -> Self {
        Self {
            ts,
            limits,
            stack: vec![Slot {
                parent: None,
                sibling_pos: None,
                unary_depth: 0,
            }],
            tokens: Vec::new(),
            n_consts: 0,
        }
    }

    pub fn done(&self) -> bool {
        self.stack.is_empty()
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    /// (parent, sibling) token ids of the slot being filled; `None` encodes
    /// the empty context.
    pub fn conditioning(&self) -> (Option<usize>, Option<usize>) {
        let slot = self.stack.last().expect("conditioning on finished builder");
        let sibling = slot.sibling_pos.map(|p| self.tokens[p]);
        (slot.parent, sibling)
    }

    /// Token mask for the current slot. Operators are disallowed when the
    /// remaining length budget could not complete the expression; unary
    /// operators are disallowed beyond two consecutive unary ancestors; the
    /// constant placeholder is capped and kept out of positions where it
    /// would form a constant-only subtree (an argument of a unary operator,
    /// or the sibling of a constant), since such subtrees collapse to a
    /// single constant anyway.
    pub fn mask(&self) -> Vec<bool> {
        let slot = self.stack.last().expect("mask on finished builder");
        let open = self.stack.len();
        let remaining = self.limits.max_length - self.tokens.len();
        let arity_budget = remaining.saturating_sub(open);
        let (parent, sibling) = self.conditioning();
        let const_blocked = self.n_consts >= self.limits.max_consts
            || parent.map(|p| self.ts.arity_of(p) == 1).unwrap_or(false)
            || sibling
                .map(|s| self.ts.token(s) == super::token::Token::Const)
                .unwrap_or(false);
        (0..self.ts.vocab())
            .map(|id| {
                let arity = self.ts.arity_of(id);
                if arity > arity_budget {
                    return false;
                }
                if arity == 1 && slot.unary_depth >= 2 {
                    return false;
                }
                if self.ts.token(id) == super::token::Token::Const && const_blocked {
                    return false;
                }
                true
            })
            .collect()
    }

    pub fn push(&mut self, id: usize) {
        let slot = self.stack.pop().expect("push on finished builder");
        let pos = self.tokens.len();
        self.tokens.push(id);
        if self.ts.token(id) == super::token::Token::Const {
            self.n_consts += 1;
        }
        match self.ts.arity_of(id) {
            0 => {}
            1 => self.stack.push(Slot {
                parent: Some(id),
                sibling_pos: None,
                unary_depth: slot.unary_depth + 1,
            }),
            2 => {
                // Pre-order: the left child is generated next (top of the
                // LIFO stack); the right child's sibling is the left
                // subtree's root, which will sit at `pos + 1`.
                self.stack.push(Slot {
                    parent: Some(id),
                    sibling_pos: Some(pos + 1),
                    unary_depth: 0,
                });
                self.stack.push(Slot {
                    parent: Some(id),
                    sibling_pos: None,
                    unary_depth: 0,
                });
            }
            _ => unreachable!(),
        }
    }
}

/// Single-layer tanh recurrent policy with flat parameter storage
/// `[W_xh | W_hh | b_h | W_out | b_out]` (row-major blocks).
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub hidden: usize,
    pub vocab: usize,
    pub params: Vec<f64>,
}

impl PolicyNet {
    pub fn input_dim(vocab: usize) -> usize {
        2 * (vocab + 1)
    }

    pub fn n_params(hidden: usize, vocab: usize) -> usize {
        let d = Self::input_dim(vocab);
        hidden * d + hidden * hidden + hidden + vocab * hidden + vocab
    }

    pub fn new<R: Rng + ?Sized>(hidden: usize, vocab: usize, rng: &mut R) -> Self {
        let n = Self::n_params(hidden, vocab);
        let d = Self::input_dim(vocab);
        let mut params = vec![0.0; n];
        // Biases start at zero; weights small uniform.
        let w_end = hidden * d + hidden * hidden;
        for p in params.iter_mut().take(w_end) {
            *p = rng.random_range(-0.08..0.08);
        }
        let out_start = w_end + hidden;
        for p in params
            .iter_mut()
            .skip(out_start)
            .take(vocab * hidden)
        {
            *p = rng.random_range(-0.08..0.08);
        }
        Self {
            hidden,
            vocab,
            params,
        }
    }

    pub fn zeroed(hidden: usize, vocab: usize) -> Self {
        Self {
            hidden,
            vocab,
            params: vec![0.0; Self::n_params(hidden, vocab)],
        }
    }

    fn off_w_hh(&self) -> usize {
        self.hidden * Self::input_dim(self.vocab)
    }

    fn off_b_h(&self) -> usize {
        self.off_w_hh() + self.hidden * self.hidden
    }

    fn off_w_out(&self) -> usize {
        self.off_b_h() + self.hidden
    }

    fn off_b_out(&self) -> usize {
        self.off_w_out() + self.vocab * self.hidden
    }

    /// Index into W_xh for (row, input slot).
    pub fn w_xh_index(&self, row: usize, col: usize) -> usize {
        row * Self::input_dim(self.vocab) + col
    }

    /// Index into W_out for (token id, hidden unit).
    pub fn w_out_index(&self, token: usize, unit: usize) -> usize {
        self.off_w_out() + token * self.hidden + unit
    }

    /// Input slot of the parent one-hot (`None` = empty context).
    pub fn parent_slot(&self, parent: Option<usize>) -> usize {
        parent.unwrap_or(self.vocab)
    }

    /// Input slot of the sibling one-hot.
    pub fn sibling_slot(&self, sibling: Option<usize>) -> usize {
        (self.vocab + 1) + sibling.unwrap_or(self.vocab)
    }

    /// One recurrent step: h ← tanh(W_xh x + W_hh h + b_h); logits ← W_out h + b_out.
    /// `x` is the two-hot (parent, sibling) encoding given by slot indices.
    fn step(&self, h: &mut Vec<f64>, p_slot: usize, s_slot: usize, logits: &mut [f64]) {
        let hidden = self.hidden;
        let d = Self::input_dim(self.vocab);
        let mut pre = vec![0.0; hidden];
        for i in 0..hidden {
            let mut acc = self.params[i * d + p_slot] + self.params[i * d + s_slot];
            let w_hh = self.off_w_hh() + i * hidden;
            for (j, hj) in h.iter().enumerate() {
                acc += self.params[w_hh + j] * hj;
            }
            acc += self.params[self.off_b_h() + i];
            pre[i] = acc.tanh();
        }
        *h = pre;
        let w_out = self.off_w_out();
        for (k, l) in logits.iter_mut().enumerate() {
            let row = w_out + k * hidden;
            let mut acc = self.params[self.off_b_out() + k];
            for (j, hj) in h.iter().enumerate() {
                acc += self.params[row + j] * hj;
            }
            *l = acc;
        }
    }
}

/// Softmax over the unmasked logits; masked entries get probability zero.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    for (l, m) in logits.iter().zip(mask) {
        if *m && *l > max {
            max = *l;
        }
    }
    let mut probs = vec![0.0; logits.len()];
    let mut sum = 0.0;
    for (k, (l, m)) in logits.iter().zip(mask).enumerate() {
        if *m {
            let e = (l - max).exp();
            probs[k] = e;
            sum += e;
        }
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    probs
}

/// Sample one complete expression from the policy.
pub fn sample_expression<R: Rng + ?Sized>(
    policy: &PolicyNet,
    ts: &TokenSet,
    limits: SampleLimits,
    rng: &mut R,
) -> Expression {
    let mut builder = SeqBuilder::new(ts, limits);
    let mut h = vec![0.0; policy.hidden];
    let mut logits = vec![0.0; policy.vocab];
    while !builder.done() {
        let (parent, sibling) = builder.conditioning();
        policy.step(
            &mut h,
            policy.parent_slot(parent),
            policy.sibling_slot(sibling),
            &mut logits,
        );
        let mask = builder.mask();
        let probs = masked_softmax(&logits, &mask);
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut chosen = None;
        for (k, p) in probs.iter().enumerate() {
            if mask[k] {
                cum += p;
                if u < cum {
                    chosen = Some(k);
                    break;
                }
            }
        }
        // Rounding can leave cum slightly below 1; fall back to the last
        // allowed token.
        let id = chosen.unwrap_or_else(|| {
            (0..probs.len())
                .rev()
                .find(|k| mask[*k])
                .expect("mask always allows terminals")
        });
        builder.push(id);
    }
    Expression::new(
        builder
            .tokens()
            .iter()
            .map(|&id| ts.token(id))
            .collect(),
    )
}

/// Log-probability and summed step entropy of a token sequence under the
/// policy (teacher-forced replay).
pub fn sequence_stats(
    policy: &PolicyNet,
    ts: &TokenSet,
    limits: SampleLimits,
    token_ids: &[usize],
) -> (f64, f64) {
    let mut builder = SeqBuilder::new(ts, limits);
    let mut h = vec![0.0; policy.hidden];
    let mut logits = vec![0.0; policy.vocab];
    let mut logp = 0.0;
    let mut entropy = 0.0;
    for &a in token_ids {
        assert!(!builder.done(), "sequence longer than its tree");
        let (parent, sibling) = builder.conditioning();
        policy.step(
            &mut h,
            policy.parent_slot(parent),
            policy.sibling_slot(sibling),
            &mut logits,
        );
        let mask = builder.mask();
        let probs = masked_softmax(&logits, &mask);
        logp += probs[a].ln();
        for (k, p) in probs.iter().enumerate() {
            if mask[k] && *p > 0.0 {
                entropy -= p * p.ln();
            }
        }
        builder.push(a);
    }
    (logp, entropy)
}

/// Gradient of Σ_i coef_i·log p(τ_i) + entropy_coef·Σ_i H(τ_i) with respect
/// to the policy parameters, via truncated-nowhere BPTT.
pub fn batch_gradient(
    policy: &PolicyNet,
    ts: &TokenSet,
    limits: SampleLimits,
    sequences: &[(Vec<usize>, f64)],
    entropy_coef: f64,
) -> Vec<f64> {
    let hidden = policy.hidden;
    let vocab = policy.vocab;
    let d = PolicyNet::input_dim(vocab);
    let mut grad = vec![0.0; policy.params.len()];

    for (token_ids, coef) in sequences {
        // Forward replay, recording per-step state.
        let mut builder = SeqBuilder::new(ts, limits);
        let mut h = vec![0.0; hidden];
        let mut logits = vec![0.0; vocab];
        let mut hs: Vec<Vec<f64>> = Vec::with_capacity(token_ids.len());
        let mut slots: Vec<(usize, usize)> = Vec::with_capacity(token_ids.len());
        let mut probs_steps: Vec<Vec<f64>> = Vec::with_capacity(token_ids.len());
        let mut masks: Vec<Vec<bool>> = Vec::with_capacity(token_ids.len());
        for &a in token_ids {
            let (parent, sibling) = builder.conditioning();
            let p_slot = policy.parent_slot(parent);
            let s_slot = policy.sibling_slot(sibling);
            policy.step(&mut h, p_slot, s_slot, &mut logits);
            let mask = builder.mask();
            let probs = masked_softmax(&logits, &mask);
            hs.push(h.clone());
            slots.push((p_slot, s_slot));
            probs_steps.push(probs);
            masks.push(mask);
            builder.push(a);
        }

        // Backward pass.
        let mut carry = vec![0.0; hidden]; // W_hh^T · dpre from step t+1
        for t in (0..token_ids.len()).rev() {
            let probs = &probs_steps[t];
            let mask = &masks[t];
            let a = token_ids[t];
            let mut step_entropy = 0.0;
            for (k, p) in probs.iter().enumerate() {
                if mask[k] && *p > 0.0 {
                    step_entropy -= p * p.ln();
                }
            }
            let mut dlogits = vec![0.0; vocab];
            for k in 0..vocab {
                if !mask[k] {
                    continue;
                }
                let p = probs[k];
                let mut g = coef * (f64::from(u8::from(k == a)) - p);
                if entropy_coef != 0.0 && p > 0.0 {
                    g += entropy_coef * (-p * (p.ln() + step_entropy));
                }
                dlogits[k] = g;
            }

            let h_t = &hs[t];
            let h_prev: &[f64] = if t == 0 { &[] } else { &hs[t - 1] };
            // dW_out, db_out and dh from the output layer.
            let mut dh = carry.clone();
            for k in 0..vocab {
                let g = dlogits[k];
                if g == 0.0 {
                    continue;
                }
                let row = policy.off_w_out() + k * hidden;
                for j in 0..hidden {
                    grad[row + j] += g * h_t[j];
                    dh[j] += g * policy.params[row + j];
                }
                grad[policy.off_b_out() + k] += g;
            }
            // Through the tanh.
            let mut dpre = vec![0.0; hidden];
            for j in 0..hidden {
                dpre[j] = dh[j] * (1.0 - h_t[j] * h_t[j]);
            }
            let (p_slot, s_slot) = slots[t];
            for i in 0..hidden {
                let g = dpre[i];
                if g == 0.0 {
                    continue;
                }
                grad[i * d + p_slot] += g;
                grad[i * d + s_slot] += g;
                let w_hh = policy.off_w_hh() + i * hidden;
                if t > 0 {
                    for j in 0..hidden {
                        grad[w_hh + j] += g * h_prev[j];
                    }
                }
                grad[policy.off_b_h() + i] += g;
            }
            // Carry to step t−1.
            if t > 0 {
                for j in 0..hidden {
                    let mut acc = 0.0;
                    for i in 0..hidden {
                        acc += policy.params[policy.off_w_hh() + i * hidden + j] * dpre[i];
                    }
                    carry[j] = acc;
                }
            }
        }
    }
    grad
}

/// Adam state for ascent steps on the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn ascent_step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] += lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsr::token::{Op, Token};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ts2() -> TokenSet {
        TokenSet::standard(vec!["x1".into(), "x2".into()])
    }

    fn limits() -> SampleLimits {
        SampleLimits {
            max_length: 16,
            max_consts: 5,
        }
    }

    #[test]
    fn forced_policy_produces_x1_plus_x2() {
        let ts = ts2();
        // Hidden = input_dim so W_xh can pass features straight through.
        let vocab = ts.vocab();
        let d = PolicyNet::input_dim(vocab);
        let mut policy = PolicyNet::zeroed(d, vocab);
        for i in 0..d {
            let idx = policy.w_xh_index(i, i);
            policy.params[idx] = 5.0;
        }
        let add = ts.id(Token::Op(Op::Add)).unwrap();
        let x1 = ts.id(Token::Var(0)).unwrap();
        let x2 = ts.id(Token::Var(1)).unwrap();
        let p_none = policy.parent_slot(None);
        let s_none = policy.sibling_slot(None);
        let p_add = policy.parent_slot(Some(add));
        let s_x1 = policy.sibling_slot(Some(x1));
        // Rules: empty context → '+'; parent '+' with no sibling → x1;
        // parent '+' with sibling x1 → x2. Weight scale 60 makes the
        // distribution effectively deterministic.
        let i = policy.w_out_index(add, p_none);
        policy.params[i] = 60.0;
        let i = policy.w_out_index(x1, s_none);
        policy.params[i] = 30.0;
        let i = policy.w_out_index(x1, p_add);
        policy.params[i] = 30.0;
        let i = policy.w_out_index(x2, s_x1);
        policy.params[i] = 90.0;

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let e = sample_expression(&policy, &ts, limits(), &mut rng);
            assert_eq!(
                e.tokens,
                vec![Token::Op(Op::Add), Token::Var(0), Token::Var(1)]
            );
        }
    }

    #[test]
    fn sampled_sequences_are_complete_preorders() {
        let ts = ts2();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let policy = PolicyNet::new(8, ts.vocab(), &mut rng);
        for _ in 0..10_000 {
            let e = sample_expression(&policy, &ts, limits(), &mut rng);
            assert!(e.is_valid());
            assert!(e.len() <= limits().max_length);
            assert!(e.n_consts() <= limits().max_consts);
        }
    }

    #[test]
    fn fixed_seed_reproduces_samples() {
        let ts = ts2();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let policy = PolicyNet::new(8, ts.vocab(), &mut rng);
        let mut r1 = ChaCha8Rng::seed_from_u64(99);
        let mut r2 = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let a = sample_expression(&policy, &ts, limits(), &mut r1);
            let b = sample_expression(&policy, &ts, limits(), &mut r2);
            assert_eq!(a.tokens, b.tokens);
        }
    }

    #[test]
    fn unary_nesting_is_capped_at_two() {
        let ts = ts2();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = PolicyNet::new(8, ts.vocab(), &mut rng);
        for _ in 0..2000 {
            let e = sample_expression(&policy, &ts, limits(), &mut rng);
            let mut run = 0usize;
            let mut worst = 0usize;
            // Walk the preorder with a stack of unary-chain depths.
            let mut depth_stack = vec![0usize];
            for t in &e.tokens {
                let depth = depth_stack.pop().unwrap();
                worst = worst.max(depth);
                match t.arity() {
                    0 => {}
                    1 => depth_stack.push(depth + 1),
                    _ => {
                        depth_stack.push(0);
                        depth_stack.push(0);
                    }
                }
                run = run.max(depth);
            }
            assert!(worst <= 2, "unary chain depth {worst} in {:?}", e.tokens);
        }
    }

    #[test]
    fn masked_distribution_sums_to_one() {
        let logits = vec![0.3, -2.0, 5.0, 1.0];
        let mask = vec![true, false, true, true];
        let p = masked_softmax(&logits, &mask);
        assert_eq!(p[1], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let ts = ts2();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut policy = PolicyNet::new(4, ts.vocab(), &mut rng);
        let e = sample_expression(&policy, &ts, limits(), &mut rng);
        let ids: Vec<usize> = e.tokens.iter().map(|t| ts.id(*t).unwrap()).collect();

        let grad = batch_gradient(&policy, &ts, limits(), &[(ids.clone(), 1.0)], 0.0);
        let h = 1e-5;
        let mut diff_sq = 0.0;
        let mut norm_sq = 0.0;
        for i in 0..policy.params.len() {
            let orig = policy.params[i];
            policy.params[i] = orig + h;
            let (lp_plus, _) = sequence_stats(&policy, &ts, limits(), &ids);
            policy.params[i] = orig - h;
            let (lp_minus, _) = sequence_stats(&policy, &ts, limits(), &ids);
            policy.params[i] = orig;
            let fd = (lp_plus - lp_minus) / (2.0 * h);
            diff_sq += (fd - grad[i]) * (fd - grad[i]);
            norm_sq += fd * fd;
        }
        let rel = (diff_sq / norm_sq).sqrt();
        assert!(rel < 1e-5, "relative gradient error {rel:.2e}");
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let ts = ts2();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut policy = PolicyNet::new(4, ts.vocab(), &mut rng);
        let e = sample_expression(&policy, &ts, limits(), &mut rng);
        let ids: Vec<usize> = e.tokens.iter().map(|t| ts.id(*t).unwrap()).collect();

        let grad = batch_gradient(&policy, &ts, limits(), &[(ids.clone(), 0.0)], 1.0);
        let h = 1e-5;
        let mut diff_sq = 0.0;
        let mut norm_sq = 0.0;
        for i in 0..policy.params.len() {
            let orig = policy.params[i];
            policy.params[i] = orig + h;
            let (_, e_plus) = sequence_stats(&policy, &ts, limits(), &ids);
            policy.params[i] = orig - h;
            let (_, e_minus) = sequence_stats(&policy, &ts, limits(), &ids);
            policy.params[i] = orig;
            let fd = (e_plus - e_minus) / (2.0 * h);
            diff_sq += (fd - grad[i]) * (fd - grad[i]);
            norm_sq += fd * fd;
        }
        let rel = (diff_sq / norm_sq).sqrt();
        assert!(rel < 1e-5, "relative entropy gradient error {rel:.2e}");
    }

    #[test]
    fn ascent_increases_log_probability() {
        let ts = ts2();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut policy = PolicyNet::new(8, ts.vocab(), &mut rng);
        let e = sample_expression(&policy, &ts, limits(), &mut rng);
        let ids: Vec<usize> = e.tokens.iter().map(|t| ts.id(*t).unwrap()).collect();
        let (lp0, _) = sequence_stats(&policy, &ts, limits(), &ids);
        let grad = batch_gradient(&policy, &ts, limits(), &[(ids.clone(), 1.0)], 0.0);
        let mut adam = Adam::new(policy.params.len());
        adam.ascent_step(&mut policy.params, &grad, 1e-3);
        let (lp1, _) = sequence_stats(&policy, &ts, limits(), &ids);
        assert!(lp1 > lp0, "{lp1} vs {lp0}");
    }
}
