use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

/// What a single request was billed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub queries: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub overhead: u64,
}

/// Running totals for one session. Only ever grows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub queries: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub overhead: u64,
    /// Queries that were charged but rejected.
    pub rejected: u64,
}

impl CostLedger {
    pub fn total_tokens(&self) -> u64 {
        self.tokens_in + self.tokens_out + self.overhead
    }

    pub fn charge(&mut self, usage: Usage) {
        self.queries += usage.queries;
        self.tokens_in += usage.tokens_in;
        self.tokens_out += usage.tokens_out;
        self.overhead += usage.overhead;
    }

    pub fn charge_rejected(&mut self, usage: Usage) {
        self.charge(usage);
        self.rejected += usage.queries;
    }

    /// Totals accumulated since `earlier`.
    pub fn since(&self, earlier: &CostLedger) -> CostLedger {
        CostLedger {
            queries: self.queries - earlier.queries,
            tokens_in: self.tokens_in - earlier.tokens_in,
            tokens_out: self.tokens_out - earlier.tokens_out,
            overhead: self.overhead - earlier.overhead,
            rejected: self.rejected - earlier.rejected,
        }
    }
}

impl AddAssign for CostLedger {
    fn add_assign(&mut self, other: CostLedger) {
        self.queries += other.queries;
        self.tokens_in += other.tokens_in;
        self.tokens_out += other.tokens_out;
        self.overhead += other.overhead;
        self.rejected += other.rejected;
    }
}
