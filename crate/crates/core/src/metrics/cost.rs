//! Bill-of-materials ledger in fixed-point decimal.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetricsError;

const SCALE: i64 = 10_000;

/// Non-negative amount in ten-thousandths of a dollar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Price(i64);

impl Price {
    pub fn from_cents(cents: i64) -> Self {
        Price(cents * 100)
    }

    /// Rounded half-up to whole cents.
    pub fn cents(self) -> i64 {
        (self.0 + 50).div_euclid(100)
    }

    pub fn raw(self) -> i64 {
        self.0
    }

    pub fn times(self, qty: u32) -> Price {
        Price(self.0 * i64::from(qty))
    }

    /// Full-precision decimal that parses back to the same value.
    pub fn exact(self) -> String {
        let frac = format!("{:04}", self.0 % SCALE);
        let frac = frac.trim_end_matches('0');
        let frac = if frac.len() < 2 { format!("{frac:0<2}") } else { frac.to_string() };
        format!("{}.{}", self.0 / SCALE, frac)
    }
}

impl FromStr for Price {
    type Err = MetricsError;

    /// Plain decimal with at most four fractional digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MetricsError::BadPrice(s.to_string());
        let t = s.trim().trim_start_matches('$');
        let (int, frac) = t.split_once('.').unwrap_or((t, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.chars().all(|c| c.is_ascii_digit())
            || !frac.chars().all(|c| c.is_ascii_digit())
            || frac.len() > 4
        {
            return Err(bad());
        }
        let whole: i64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let mut frac_units: i64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        for _ in frac.len()..4 {
            frac_units *= 10;
        }
        whole
            .checked_mul(SCALE)
            .and_then(|w| w.checked_add(frac_units))
            .map(Price)
            .ok_or_else(bad)
    }
}

impl fmt::Display for Price {
    /// Dollars with two decimals, rounded half-up.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.cents();
        write!(f, "{}.{:02}", c / 100, c % 100)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineItem {
    pub name: String,
    pub unit_price: Price,
    pub quantity: u32,
}

impl LineItem {
    pub fn total(&self) -> Price {
        self.unit_price.times(self.quantity)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostLedger {
    pub items: Vec<LineItem>,
    /// Total printed alongside the source table, if any; kept for
    /// cross-checking against the computed sum.
    pub declared_total: Option<Price>,
}

impl CostLedger {
    pub fn push(&mut self, name: &str, unit_price: &str, quantity: u32) -> Result<(), MetricsError> {
        let unit_price: Price = unit_price.parse()?;
        self.items.push(LineItem {
            name: name.to_string(),
            unit_price,
            quantity,
        });
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Exact sum of unit × quantity over all lines.
    pub fn total(&self) -> Price {
        Price(self.items.iter().map(|i| i.total().0).sum())
    }

    /// Computed total minus the declared total.
    pub fn discrepancy(&self) -> Option<Price> {
        self.declared_total.map(|d| Price(self.total().0 - d.0))
    }
}

/// Sum of the ledger rounded to cents.
pub fn cost_total(ledger: &CostLedger) -> Price {
    ledger.total()
}
