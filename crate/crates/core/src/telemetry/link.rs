//! Seeded lossy datagram channel for exercising the protocol in-process.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// Probability a datagram is dropped.
    pub loss: f64,
    /// Probability a surviving datagram is held back.
    pub reorder: f64,
    /// Upper bound on the hold-back, in ticks.
    pub max_delay_ticks: u64,
}

impl LinkConfig {
    pub const PERFECT: LinkConfig = LinkConfig {
        loss: 0.0,
        reorder: 0.0,
        max_delay_ticks: 0,
    };

    pub fn lossy(loss: f64) -> Self {
        Self {
            loss,
            reorder: loss,
            max_delay_ticks: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub sent: u64,
    pub dropped: u64,
    pub delayed: u64,
    pub delivered: u64,
}

#[derive(Debug, Clone)]
pub struct SimulatedLink {
    config: LinkConfig,
    rng: ChaCha8Rng,
    in_flight: Vec<(u64, u64, Vec<u8>)>,
    counter: u64,
    pub stats: LinkStats,
}

impl SimulatedLink {
    pub fn new(config: LinkConfig, rng: ChaCha8Rng) -> Self {
        Self {
            config,
            rng,
            in_flight: Vec::new(),
            counter: 0,
            stats: LinkStats::default(),
        }
    }

    pub fn send(&mut self, now_tick: u64, datagram: Vec<u8>) {
        self.stats.sent += 1;
        if self.rng.random::<f64>() < self.config.loss {
            self.stats.dropped += 1;
            return;
        }
        let mut due = now_tick;
        if self.config.max_delay_ticks > 0 && self.rng.random::<f64>() < self.config.reorder {
            due += self.rng.random_range(1..=self.config.max_delay_ticks);
            self.stats.delayed += 1;
        }
        self.in_flight.push((due, self.counter, datagram));
        self.counter += 1;
    }

    /// Datagrams due at or before `now_tick`, in arrival order.
    pub fn deliver(&mut self, now_tick: u64) -> Vec<Vec<u8>> {
        let mut due: Vec<(u64, u64, Vec<u8>)> = Vec::new();
        let mut kept = Vec::with_capacity(self.in_flight.len());
        for item in self.in_flight.drain(..) {
            if item.0 <= now_tick {
                due.push(item);
            } else {
                kept.push(item);
            }
        }
        self.in_flight = kept;
        due.sort_by_key(|(t, n, _)| (*t, *n));
        self.stats.delivered += due.len() as u64;
        due.into_iter().map(|(_, _, d)| d).collect()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn perfect_link_is_transparent() {
        let mut l = SimulatedLink::new(LinkConfig::PERFECT, ChaCha8Rng::seed_from_u64(1));
        for i in 0..10u8 {
            l.send(0, vec![i]);
        }
        let got = l.deliver(0);
        assert_eq!(got, (0..10u8).map(|i| vec![i]).collect::<Vec<_>>());
    }

    #[test]
    fn lossy_link_drops_about_the_configured_fraction() {
        let mut l = SimulatedLink::new(LinkConfig::lossy(0.2), ChaCha8Rng::seed_from_u64(7));
        for t in 0..10_000 {
            l.send(t, vec![0]);
        }
        let total: usize = (0..10_020).map(|t| l.deliver(t).len()).sum();
        assert_eq!(total as u64 + l.stats.dropped, 10_000);
        let rate = l.stats.dropped as f64 / 10_000.0;
        assert!((rate - 0.2).abs() < 0.02, "{rate}");
        assert!(l.stats.delayed > 0);
    }
}
