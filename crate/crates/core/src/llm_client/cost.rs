use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::LlmError;

/// USD per 1K tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Price {
    pub input: f64,
    pub output: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub calls: u64,
    pub usd: f64,
}

/// Thread-safe running totals of tokens and dollars, overall and per model.
#[derive(Debug)]
pub struct CostLedger {
    prices: BTreeMap<String, Price>,
    state: Mutex<(CostSummary, BTreeMap<String, CostSummary>)>,
}

impl Default for CostLedger {
    fn default() -> Self {
        let mut prices = BTreeMap::new();
        prices.insert("gpt-4-0613".to_string(), Price { input: 0.03, output: 0.06 });
        prices.insert("gpt-4".to_string(), Price { input: 0.03, output: 0.06 });
        prices.insert("gpt-3.5-turbo-0613".to_string(), Price { input: 0.0015, output: 0.002 });
        prices.insert("gpt-3.5-turbo".to_string(), Price { input: 0.0015, output: 0.002 });
        prices.insert("gpt-4-1106-preview".to_string(), Price { input: 0.01, output: 0.03 });
        Self::with_prices(prices)
    }
}

impl CostLedger {
    pub fn with_prices(prices: BTreeMap<String, Price>) -> Self {
        Self { prices, state: Mutex::new(Default::default()) }
    }

    pub fn set_price(&mut self, model: impl Into<String>, price: Price) {
        self.prices.insert(model.into(), price);
    }

    pub fn price(&self, model: &str) -> Option<Price> {
        self.prices.get(model).copied()
    }

    /// Adds one call's usage and returns its cost in USD.
    pub fn record(&self, model: &str, tokens_in: u64, tokens_out: u64) -> Result<f64, LlmError> {
        let price = self.price(model).ok_or_else(|| LlmError::UnknownModel(model.to_string()))?;
        let usd = tokens_in as f64 / 1000.0 * price.input + tokens_out as f64 / 1000.0 * price.output;
        let mut guard = self.state.lock().expect("cost ledger poisoned");
        let (total, per_model) = &mut *guard;
        for s in [total, per_model.entry(model.to_string()).or_default()] {
            s.tokens_in += tokens_in;
            s.tokens_out += tokens_out;
            s.calls += 1;
            s.usd += usd;
        }
        Ok(usd)
    }

    pub fn total(&self) -> CostSummary {
        self.state.lock().expect("cost ledger poisoned").0.clone()
    }

    pub fn per_model(&self) -> BTreeMap<String, CostSummary> {
        self.state.lock().expect("cost ledger poisoned").1.clone()
    }
}
