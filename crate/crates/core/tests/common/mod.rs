//! Shared fixtures and brute-force Markov chain oracles.
#![allow(dead_code)]

use ehcr::outage::OutageProfile;
use ehcr::SensingQuality;

/// Outage profile of the published parameter set.
pub fn caption_profile() -> OutageProfile {
    OutageProfile::from_ratios(0.7, 0.14, 0.6065, 0.1820, 0.9782, 0.8).unwrap()
}

pub fn caption_sensing() -> SensingQuality {
    SensingQuality::new(0.1, 0.08).unwrap()
}

/// Sparse row-stochastic matrix as `(from, to, prob)` triples.
pub struct Chain {
    pub states: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl Chain {
    fn new(states: usize) -> Self {
        Chain {
            states,
            edges: Vec::new(),
        }
    }

    fn add(&mut self, from: usize, to: usize, p: f64) {
        if p > 0.0 {
            self.edges.push((from, to, p));
        }
    }

    /// Fills each row up to one with a self-loop.
    fn close(&mut self) {
        let mut out = vec![0.0; self.states];
        for &(f, _, p) in &self.edges {
            out[f] += p;
        }
        for (s, o) in out.into_iter().enumerate() {
            assert!(o <= 1.0 + 1e-12, "row {s} sums to {o}");
            self.add(s, s, 1.0 - o);
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.states];
        for &(f, _, p) in &self.edges {
            out[f] += p;
        }
        out
    }

    /// Stationary vector by power iteration from the uniform vector.
    ///
    /// Stops once an iteration changes the vector by less than `tol` in L1,
    /// or after `max_iter` iterations.
    pub fn stationary(&self, tol: f64, max_iter: usize) -> Vec<f64> {
        let mut x = vec![1.0 / self.states as f64; self.states];
        let mut y = vec![0.0; self.states];
        for _ in 0..max_iter {
            y.iter_mut().for_each(|v| *v = 0.0);
            for &(f, t, p) in &self.edges {
                y[t] += x[f] * p;
            }
            let s: f64 = y.iter().sum();
            let mut diff = 0.0;
            for (a, b) in x.iter_mut().zip(&y) {
                let b = b / s;
                diff += (*a - b).abs();
                *a = b;
            }
            if diff < tol {
                break;
            }
        }
        x
    }
}

/// Queue-length chain of the primary when feedback is ignored, truncated at
/// `k_max` (arrivals at a full buffer are lost). Arrivals join after the
/// slot's service, so a packet arriving to an empty queue moves it to 1.
pub fn chain_nofb(lambda: f64, mu: f64, k_max: usize) -> Chain {
    let mut c = Chain::new(k_max + 1);
    c.add(0, 1, lambda);
    for k in 1..=k_max {
        if k < k_max {
            c.add(k, k + 1, lambda * (1.0 - mu));
        }
        c.add(k, k - 1, (1.0 - lambda) * mu);
    }
    c.close();
    c
}

/// Index of `(k, phase)` in [`chain_fb`]: state 0 is the empty queue, then
/// first-transmission states `1..=k_max`, then retransmission states.
pub fn fb_index(k: usize, retx: bool, k_max: usize) -> usize {
    match (k, retx) {
        (0, _) => 0,
        (k, false) => k,
        (k, true) => k_max + k,
    }
}

/// Two-phase chain of the feedback scheme: a head-of-line packet is sent with
/// success probability `alpha` on its first attempt and `gamma` on every
/// retransmission. Truncated at `k_max`.
pub fn chain_fb(alpha: f64, gamma: f64, lambda: f64, k_max: usize) -> Chain {
    let mut c = Chain::new(2 * k_max + 1);
    let idx = |k, r| fb_index(k, r, k_max);
    c.add(0, idx(1, false), lambda);
    for k in 1..=k_max {
        for (retx, succ) in [(false, alpha), (true, gamma)] {
            let from = idx(k, retx);
            // success: next head starts fresh
            c.add(from, idx(k, false), succ * lambda);
            c.add(from, idx(k - 1, false), succ * (1.0 - lambda));
            // failure: the head is retransmitted
            let up = if k < k_max { k + 1 } else { k };
            c.add(from, idx(up, true), (1.0 - succ) * lambda);
            c.add(from, idx(k, true), (1.0 - succ) * (1.0 - lambda));
        }
    }
    c.close();
    c
}
