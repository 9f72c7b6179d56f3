//! Attacks that only see the argmax token.

use serde::{Deserialize, Serialize};

use super::graph::IncrementalBounds;
use super::IntervalBounds;
use crate::api::{query_argmax, ApiMode, CompletionApi, CostLedger, LogitBias};
use crate::error::{Error, RejectCode, Result};
use crate::victim::TokenId;

fn check_mode<A: CompletionApi + ?Sized>(api: &A, bound: f64) -> Result<()> {
    let d = api.descriptor();
    if matches!(d.mode, ApiMode::AllLogits | ApiMode::Top1BinaryBias) {
        return Err(Error::rejected(
            RejectCode::Capability,
            format!("argmax attacks need a real-valued logit bias, API offers {:?}", d.mode),
        ));
    }
    if !(bound > 0.0 && bound <= d.restrictions.bias_bound) {
        return Err(Error::InvalidInput(format!(
            "bias range {bound} must lie in (0, {}]",
            d.restrictions.bias_bound
        )));
    }
    Ok(())
}

/// Bisect each gap `z_i - z_ref` inside `[-B, 0]` until the interval is no
/// wider than `epsilon`: `ceil(log2(B / epsilon))` queries per token plus
/// one query to find the reference (unbiased argmax).
///
/// A token that never wins gets one extra query at bias `B`; if it still
/// loses it is marked unreachable.
pub fn recover_binary_search<A: CompletionApi + ?Sized>(
    api: &A,
    prompt: &[TokenId],
    epsilon: f64,
    bound: f64,
) -> Result<IntervalBounds> {
    check_mode(api, bound)?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    let l = api.descriptor().vocab_size;
    let start = api.ledger();
    let reference = query_argmax(api, prompt, &LogitBias::new())?;
    let mut bounds = IntervalBounds::prior(l, reference, bound);
    let steps = (bound / epsilon).log2().ceil().max(0.0) as usize;
    for i in (0..l as TokenId).filter(|&t| t != reference) {
        let (mut alpha, mut beta) = (-bound, 0.0);
        let mut won = false;
        for _ in 0..steps {
            let mid = 0.5 * (alpha + beta);
            if query_argmax(api, prompt, &LogitBias::new().with(i, -mid))? == i {
                alpha = mid;
                won = true;
            } else {
                beta = mid;
            }
        }
        if !won && query_argmax(api, prompt, &LogitBias::new().with(i, bound))? != i {
            bounds.unreachable[i as usize] = true;
        }
        bounds.alpha[i as usize] = alpha;
        bounds.beta[i as usize] = beta;
    }
    bounds.cost = api.ledger().since(&start);
    Ok(bounds)
}

/// How the per-round biases are placed inside each token's interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Bias every token to the middle of its interval.
    Midpoint,
    /// Bias so that, under a uniform prior over the box, each of the `N + 1`
    /// candidates wins with probability `1 / (N + 1)`.
    OneOfN,
}

impl Centering {
    /// Position inside `[alpha, beta]` (0 = alpha, 1 = beta) a token's
    /// negated bias is placed at, for a batch of `n` biased tokens.
    pub fn fraction(self, n: usize) -> f64 {
        match self {
            Centering::Midpoint => 0.5,
            Centering::OneOfN => (-((n + 1) as f64).ln() / n as f64).exp(),
        }
    }
}

const RESOLUTION: f64 = 1e-12;

struct Batch {
    tokens: Vec<TokenId>,
    state: IncrementalBounds,
    rounds: usize,
}

/// Multi-token argmax attack. Tokens other than the reference are split into
/// balanced batches of at most `N` (the API's bias entry cap); every round
/// biases one whole batch and turns the winner into difference constraints.
pub struct HyperrectangleAttack<'a, A: ?Sized> {
    api: &'a A,
    prompt: Vec<TokenId>,
    centering: Centering,
    bound: f64,
    reference: TokenId,
    vocab_size: usize,
    batches: Vec<Batch>,
    node_of: Vec<usize>,
    start: CostLedger,
}

impl<'a, A: CompletionApi + ?Sized> HyperrectangleAttack<'a, A> {
    /// Finds the reference token with one unbiased query.
    pub fn new(api: &'a A, prompt: &[TokenId], centering: Centering, bound: f64) -> Result<Self> {
        check_mode(api, bound)?;
        let d = api.descriptor();
        let l = d.vocab_size;
        let cap = d.restrictions.max_entries.min(l - 1).max(1);
        let start = api.ledger();
        let reference = query_argmax(api, prompt, &LogitBias::new())?;
        let others: Vec<TokenId> = (0..l as TokenId).filter(|&t| t != reference).collect();
        let count = others.len().div_ceil(cap).max(1);
        let mut batches = Vec::with_capacity(count);
        let mut node_of = vec![0usize; l];
        let mut offset = 0;
        for b in 0..count {
            let size = others.len() / count + usize::from(b < others.len() % count);
            let tokens = others[offset..offset + size].to_vec();
            offset += size;
            for (i, &t) in tokens.iter().enumerate() {
                node_of[t as usize] = i + 1;
            }
            batches.push(Batch { state: IncrementalBounds::new(tokens.len() + 1, bound), tokens, rounds: 0 });
        }
        Ok(HyperrectangleAttack {
            api,
            prompt: prompt.to_vec(),
            centering,
            bound,
            reference,
            vocab_size: l,
            batches,
            node_of,
            start,
        })
    }

    pub fn reference(&self) -> TokenId {
        self.reference
    }

    pub fn batch_count(&self) -> usize {
        self.batches.len()
    }

    pub fn batch_tokens(&self, batch: usize) -> &[TokenId] {
        &self.batches[batch].tokens
    }

    pub fn batch_rounds(&self, batch: usize) -> usize {
        self.batches[batch].rounds
    }

    /// Mean interval width over one batch.
    pub fn batch_mean_width(&self, batch: usize) -> f64 {
        let b = &self.batches[batch];
        let n = b.tokens.len();
        (1..=n).map(|i| b.state.beta(i) - b.state.alpha(i)).sum::<f64>() / n as f64
    }

    /// One query against one batch.
    pub fn step(&mut self, batch: usize) -> Result<()> {
        let b = &mut self.batches[batch];
        let n = b.tokens.len();
        let c = self.centering.fraction(n);
        let mut node_bias = vec![0.0; n + 1];
        let mut bias = LogitBias::new();
        for (i, &t) in b.tokens.iter().enumerate() {
            let (alpha, beta) = (b.state.alpha(i + 1), b.state.beta(i + 1));
            let value = (-(1.0 - c) * alpha - c * beta).clamp(0.0, self.bound);
            node_bias[i + 1] = value;
            bias.insert(t, value);
        }
        let winner = query_argmax(self.api, &self.prompt, &bias)?;
        let node = match self.node_of[winner as usize] {
            k if k > 0 && b.tokens.get(k - 1) == Some(&winner) => k,
            _ => 0,
        };
        b.rounds += 1;
        match b.state.observe_argmax(node, &node_bias) {
            Err(Error::NegativeCycle { .. }) if self.batch_resolved(batch) => Ok(()),
            r => r,
        }
    }

    /// Whether a batch's intervals are down to the resolution of `f64`
    /// logits, where argmax outcomes are decided by roundoff. Contradicting
    /// observations are dropped once a batch is resolved.
    pub fn batch_resolved(&self, batch: usize) -> bool {
        self.batch_mean_width(batch) <= self.bound * RESOLUTION
    }

    pub fn resolved(&self) -> bool {
        (0..self.batches.len()).all(|b| self.batch_resolved(b))
    }

    /// `rounds` more queries on every batch.
    pub fn run_rounds(&mut self, rounds: usize) -> Result<()> {
        for batch in 0..self.batches.len() {
            for _ in 0..rounds {
                self.step(batch)?;
            }
        }
        Ok(())
    }

    /// Query each batch until its mean width is at most `width`, or it has
    /// used `max_rounds`.
    pub fn run_until_width(&mut self, width: f64, max_rounds: usize) -> Result<()> {
        for batch in 0..self.batches.len() {
            while self.batch_mean_width(batch) > width
                && self.batches[batch].rounds < max_rounds
                && !self.batch_resolved(batch)
            {
                self.step(batch)?;
            }
        }
        Ok(())
    }

    /// Current enclosures for the whole vocabulary.
    pub fn bounds(&self) -> IntervalBounds {
        let mut out = IntervalBounds::prior(self.vocab_size, self.reference, self.bound);
        for b in &self.batches {
            for (i, &t) in b.tokens.iter().enumerate() {
                out.alpha[t as usize] = b.state.alpha(i + 1);
                out.beta[t as usize] = b.state.beta(i + 1);
            }
        }
        out.cost = self.api.ledger().since(&self.start);
        out
    }
}

/// Run `rounds` argmax queries on every batch and return the bounds.
pub fn recover_hyperrectangle<A: CompletionApi + ?Sized>(
    api: &A,
    prompt: &[TokenId],
    rounds: usize,
    centering: Centering,
    bound: f64,
) -> Result<IntervalBounds> {
    let mut attack = HyperrectangleAttack::new(api, prompt, centering, bound)?;
    attack.run_rounds(rounds)?;
    Ok(attack.bounds())
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::recover::testing::{session, victim};

    #[test]
    fn binary_search_cost_and_containment() {
        let v = victim(200, 16, 1);
        let s = session(&v, ApiMode::ArgmaxOnlyWithBias);
        let p = [3, 1, 4];
        let eps = 100.0 / 1024.0;
        let b = recover_binary_search(&s, &p, eps, 100.0).unwrap();
        assert_eq!(b.cost.queries, 1 + 199 * 10);
        let truth = v.logits(&p).unwrap();
        assert!(b.contains(&truth, 0.0), "{:?}", b.violations(&truth, 0.0));
        assert_eq!(b.alpha[b.reference as usize], 0.0);
        assert_eq!(b.beta[b.reference as usize], 0.0);
        assert!((0..200).all(|i| b.width(i) <= eps));
    }

    #[test]
    fn zero_rounds_gives_prior() {
        let v = victim(50, 4, 2);
        let s = session(&v, ApiMode::ArgmaxOnlyWithBias);
        let b = recover_hyperrectangle(&s, &[1], 0, Centering::OneOfN, 100.0).unwrap();
        assert_eq!(b, IntervalBounds { cost: b.cost, ..IntervalBounds::prior(50, b.reference, 100.0) });
    }

    #[test]
    fn containment_every_round_and_monotone_widths() {
        let v = victim(120, 8, 3);
        let s = session(&v, ApiMode::ArgmaxOnlyWithBias);
        let p = [9, 9];
        let truth = v.logits(&p).unwrap();
        for centering in [Centering::Midpoint, Centering::OneOfN] {
            let mut attack = HyperrectangleAttack::new(&s, &p, centering, 100.0).unwrap();
            let mut last = attack.bounds();
            for _ in 0..300 {
                attack.step(0).unwrap();
                let now = attack.bounds();
                assert!(now.contains(&truth, 1e-9));
                assert!((0..120).all(|i| now.width(i) <= last.width(i) + 1e-12));
                last = now;
            }
            assert!(last.mean_width() < 100.0);
            if centering == Centering::OneOfN {
                assert!(last.mean_width() < 0.1, "{}", last.mean_width());
            }
        }
    }

    #[test]
    fn one_of_n_reference_wins_with_probability_one_over_n_plus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [3usize, 7] {
            let c = Centering::OneOfN.fraction(n);
            let alpha: Vec<f64> = (0..n).map(|_| -rng.random_range(1.0..10.0)).collect();
            let beta: Vec<f64> = alpha.iter().map(|a| a + rng.random_range(0.5..(-a))).collect();
            let bias: Vec<f64> = alpha.iter().zip(&beta).map(|(a, b)| -(1.0 - c) * a - c * b).collect();
            let trials = 200_000;
            let mut wins = 0;
            for _ in 0..trials {
                if (0..n).all(|i| rng.random_range(alpha[i]..beta[i]) + bias[i] < 0.0) {
                    wins += 1;
                }
            }
            let p = wins as f64 / trials as f64;
            let target = 1.0 / (n + 1) as f64;
            assert!((p - target).abs() < 4.0 * (target / trials as f64).sqrt() + 1e-3, "n={n}: {p} vs {target}");
        }
    }

    #[test]
    fn batches_respect_entry_cap() {
        let v = victim(700, 8, 4);
        let s = session(&v, ApiMode::ArgmaxOnlyWithBias);
        let attack = HyperrectangleAttack::new(&s, &[1], Centering::OneOfN, 100.0).unwrap();
        assert_eq!(attack.batch_count(), 3);
        let sizes: Vec<usize> = (0..3).map(|b| attack.batch_tokens(b).len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 699);
        assert!(sizes.iter().all(|&n| n <= 300 && n >= 233));
    }
}
