//! Constrained maximization of the secondary service rate over the sensing
//! and access probabilities.
//!
//! The objective is smooth but the feasible set (primary stability and the
//! delay bound) has a curved boundary and the problem is nonconvex, so the
//! solver runs a derivative-free pattern search from many quasi-random
//! starts. Candidates are ranked with an infinite-penalty rule: any feasible
//! point beats any infeasible one, infeasible points are ranked by constraint
//! violation, feasible points by `mu_s`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{fb, nofb, secondary_gains};
use crate::error::{Error, Result};
use crate::model::{PolicyFb, Scheme, SensingQuality, TrafficParams, STABILITY_MARGIN};
use crate::outage::OutageProfile;

/// Number of decision variables, in the order `(sense, free, busy, direct, retx)`.
const DIM: usize = 5;
const SENSE: usize = 0;
const FREE: usize = 1;
const BUSY: usize = 2;
const DIRECT: usize = 3;
const RETX: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptProblem {
    pub scheme: Scheme,
    pub profile: OutageProfile,
    pub sensing: SensingQuality,
    pub traffic: TrafficParams,
}

impl OptProblem {
    pub fn new(
        scheme: Scheme,
        profile: OutageProfile,
        sensing: SensingQuality,
        traffic: TrafficParams,
    ) -> Result<Self> {
        Ok(OptProblem {
            scheme,
            profile,
            sensing: sensing.validate()?,
            traffic: traffic.validate()?,
        })
    }

    /// Which policy components are decision variables for this scheme.
    fn free_mask(&self) -> [bool; DIM] {
        match self.scheme {
            Scheme::NoFeedback => [true, true, true, true, false],
            Scheme::Feedback => [true; DIM],
            Scheme::RandomAccess => [false, false, false, true, false],
        }
    }
}

/// Settings of the multi-start pattern search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Quasi-random starting points (at least 32).
    pub n_starts: usize,
    /// Poll iterations allowed per start.
    pub max_iters: usize,
    pub initial_step: f64,
    /// Step multiplier after an unsuccessful poll.
    pub shrink: f64,
    /// Search stops once the step falls below this.
    pub min_step: f64,
    /// Seed of the random shift applied to the start sequence.
    pub seed: u64,
    /// Resolution of the internal audit grid the result must dominate.
    pub audit_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_starts: 32,
            max_iters: 4000,
            initial_step: 0.25,
            shrink: 0.5,
            min_step: 1e-10,
            seed: 0x5eed,
            audit_step: 0.1,
        }
    }
}

impl SolverConfig {
    pub fn validate(self) -> Result<Self> {
        if self.n_starts < 32 {
            return Err(Error::InvalidParameter {
                name: "n_starts",
                value: self.n_starts as f64,
                reason: "at least 32 starts are required",
            });
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidParameter {
                name: "shrink",
                value: self.shrink,
                reason: "must lie in (0, 1)",
            });
        }
        if !(self.initial_step > self.min_step && self.min_step > 0.0) {
            return Err(Error::InvalidParameter {
                name: "initial_step",
                value: self.initial_step,
                reason: "must exceed min_step > 0",
            });
        }
        check_grid_step(self.audit_step)?;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SolverMeta {
    pub starts: usize,
    /// Poll iterations (solver) or grid evaluations (oracle).
    pub iterations: u64,
    /// Start that produced the result; `None` when a grid point won.
    pub best_start: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptResult {
    pub scheme: Scheme,
    /// Optimal policy; `access_retx` is zero for schemes without feedback.
    pub policy: PolicyFb,
    pub mu_s: f64,
    /// Primary service rate at the optimum (`eta` for the feedback scheme).
    pub mu_p: f64,
    pub delay: f64,
    pub feasible: bool,
    pub meta: SolverMeta,
}

/// Objective and constraint state of one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Eval {
    mu_s: f64,
    mu_p: f64,
    delay: f64,
    /// Zero exactly when both constraints hold.
    violation: f64,
}

impl Eval {
    fn feasible(&self) -> bool {
        self.violation == 0.0
    }

    /// Strict improvement under the infinite-penalty ranking.
    fn beats(&self, other: &Eval) -> bool {
        match (self.feasible(), other.feasible()) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.mu_s > other.mu_s,
            (false, false) => self.violation < other.violation,
        }
    }
}

fn evaluate(problem: &OptProblem, x: &[f64; DIM]) -> Eval {
    let policy = PolicyFb::from_array(*x);
    let t = &problem.traffic;
    match problem.scheme {
        Scheme::Feedback => {
            let (alpha, gamma) =
                fb::alpha_gamma(&problem.profile, &policy, &problem.sensing, t.lambda_e);
            let (idle_gain, busy_gain) =
                secondary_gains(&problem.profile, &policy.base, &problem.sensing);
            eval_fb(problem, alpha, gamma, idle_gain, busy_gain, x[RETX])
        }
        Scheme::NoFeedback | Scheme::RandomAccess => {
            let mu_p = nofb::mu_p(&problem.profile, &policy.base, &problem.sensing, t.lambda_e);
            let (idle_gain, busy_gain) =
                secondary_gains(&problem.profile, &policy.base, &problem.sensing);
            eval_nofb(problem, mu_p, idle_gain, busy_gain)
        }
    }
}

fn eval_nofb(problem: &OptProblem, mu_p: f64, idle_gain: f64, busy_gain: f64) -> Eval {
    let t = &problem.traffic;
    let required = t.required_service_rate().max(t.lambda_p + STABILITY_MARGIN);
    let violation = (required - mu_p).max(0.0);
    let stable = t.lambda_p < mu_p;
    // same arithmetic as the analytic module so reported values agree exactly
    let idle = if stable { 1.0 - t.lambda_p / mu_p } else { 0.0 };
    Eval {
        mu_s: t.lambda_e * (idle * idle_gain + (1.0 - idle) * busy_gain),
        mu_p,
        delay: if stable {
            (1.0 - t.lambda_p) / (mu_p - t.lambda_p)
        } else {
            f64::INFINITY
        },
        violation,
    }
}

fn eval_fb(
    problem: &OptProblem,
    alpha: f64,
    gamma: f64,
    idle_gain: f64,
    busy_gain: f64,
    access_retx: f64,
) -> Eval {
    let t = &problem.traffic;
    let l = t.lambda_p;
    let eta = fb::eta(alpha, gamma, l);
    let stats = match fb::chain_stats(alpha, gamma, l) {
        Ok(st) if l <= eta - STABILITY_MARGIN => st,
        _ => {
            return Eval {
                mu_s: 0.0,
                mu_p: eta,
                delay: f64::INFINITY,
                violation: 1.0 + (l + STABILITY_MARGIN - eta),
            }
        }
    };
    let retx_gain = access_retx * problem.profile.sec_full_conc;
    let mu_s = fb::mu_s_from_gains(&stats, idle_gain, busy_gain, retx_gain, t.lambda_e);
    let delay = fb::delay_fb(alpha, gamma, l).unwrap_or(f64::INFINITY);
    let violation = if t.delay_bound.is_finite() && delay > t.delay_bound {
        (delay - t.delay_bound) / t.delay_bound
    } else {
        0.0
    };
    Eval {
        mu_s,
        mu_p: eta,
        delay,
        violation,
    }
}

fn project(problem: &OptProblem, x: &mut [f64; DIM]) {
    let mask = problem.free_mask();
    for (v, free) in x.iter_mut().zip(mask) {
        *v = if free { v.clamp(0.0, 1.0) } else { 0.0 };
    }
}

/// Poll directions over the free coordinates: `±e_i` first, then `±e_i ± e_j`
/// so the search can slide along curved constraint boundaries.
fn directions(mask: [bool; DIM]) -> Vec<[f64; DIM]> {
    let free: Vec<usize> = (0..DIM).filter(|&i| mask[i]).collect();
    let mut dirs = Vec::new();
    for &i in &free {
        for s in [1.0, -1.0] {
            let mut d = [0.0; DIM];
            d[i] = s;
            dirs.push(d);
        }
    }
    for (a, &i) in free.iter().enumerate() {
        for &j in &free[a + 1..] {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut d = [0.0; DIM];
                d[i] = si;
                d[j] = sj;
                dirs.push(d);
            }
        }
    }
    dirs
}

fn pattern_search(
    problem: &OptProblem,
    cfg: &SolverConfig,
    dirs: &[[f64; DIM]],
    start: [f64; DIM],
) -> ([f64; DIM], Eval, u64) {
    let mut x = start;
    project(problem, &mut x);
    let mut best = evaluate(problem, &x);
    let mut step = cfg.initial_step;
    let mut iters = 0u64;
    while step >= cfg.min_step && (iters as usize) < cfg.max_iters {
        iters += 1;
        let mut moved = false;
        for d in dirs {
            let mut y = x;
            for i in 0..DIM {
                y[i] += step * d[i];
            }
            project(problem, &mut y);
            if y == x {
                continue;
            }
            let e = evaluate(problem, &y);
            if e.beats(&best) {
                x = y;
                best = e;
                moved = true;
                break;
            }
        }
        if !moved {
            step *= cfg.shrink;
        }
    }
    (x, best, iters)
}

/// Points per side of the local refinement grid.
const ZOOM_HALF: i32 = 3;

/// Refines `x` on shrinking local grids over every free coordinate at once.
/// Unlike single polls these moves can follow a curved constraint boundary,
/// where improving requires changing several components in a fixed ratio.
fn zoom(
    problem: &OptProblem,
    cfg: &SolverConfig,
    x: [f64; DIM],
    e: Eval,
) -> ([f64; DIM], Eval, u64) {
    let free: Vec<usize> = (0..DIM).filter(|&i| problem.free_mask()[i]).collect();
    let side = (2 * ZOOM_HALF + 1) as usize;
    let cells = side.pow(free.len() as u32);
    let (mut x, mut best) = (x, e);
    let mut width = cfg.audit_step;
    let mut iters = 0u64;
    while width >= cfg.min_step && (iters as usize) < cfg.max_iters {
        iters += 1;
        let mut found: Option<([f64; DIM], Eval)> = None;
        for cell in 0..cells {
            let mut y = x;
            let mut c = cell;
            for &i in &free {
                let k = (c % side) as i32 - ZOOM_HALF;
                c /= side;
                y[i] = (x[i] + width * k as f64 / ZOOM_HALF as f64).clamp(0.0, 1.0);
            }
            let ey = evaluate(problem, &y);
            if ey.beats(found.as_ref().map_or(&best, |f| &f.1)) {
                found = Some((y, ey));
            }
        }
        match found {
            Some((y, ey)) => {
                x = y;
                best = ey;
            }
            None => width *= cfg.shrink,
        }
    }
    (x, best, iters)
}

/// Radical inverse of `index` in the given base (Halton coordinate).
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// Halton points with a seeded Cranley-Patterson rotation.
fn start_points(n: usize, seed: u64) -> Vec<[f64; DIM]> {
    const BASES: [u64; DIM] = [2, 3, 5, 7, 11];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; DIM] = std::array::from_fn(|_| rng.gen::<f64>());
    (1..=n as u64)
        .map(|i| std::array::from_fn(|d| (radical_inverse(i, BASES[d]) + shift[d]).fract()))
        .collect()
}

fn lex_less(a: &[f64; DIM], b: &[f64; DIM]) -> bool {
    a.iter()
        .zip(b)
        .find(|(x, y)| x != y)
        .is_some_and(|(x, y)| x < y)
}

/// Zeroes components, in order, whenever that keeps the point feasible without
/// lowering `mu_s`, so equal optima resolve to the lexicographically smallest
/// policy.
fn canonicalize(problem: &OptProblem, mut x: [f64; DIM], mut e: Eval) -> ([f64; DIM], Eval) {
    if !e.feasible() {
        return (x, e);
    }
    for i in 0..DIM {
        if x[i] == 0.0 {
            continue;
        }
        let mut y = x;
        y[i] = 0.0;
        let ey = evaluate(problem, &y);
        if ey.feasible() && ey.mu_s >= e.mu_s {
            x = y;
            e = ey;
        }
    }
    (x, e)
}

fn finish(problem: &OptProblem, x: [f64; DIM], e: Eval, meta: SolverMeta) -> OptResult {
    if !e.feasible() {
        let silent = [0.0; DIM];
        let es = evaluate(problem, &silent);
        return OptResult {
            scheme: problem.scheme,
            policy: PolicyFb::silent(),
            mu_s: es.mu_s,
            mu_p: es.mu_p,
            delay: es.delay,
            feasible: false,
            meta,
        };
    }
    OptResult {
        scheme: problem.scheme,
        policy: PolicyFb::from_array(x),
        mu_s: e.mu_s,
        mu_p: e.mu_p,
        delay: e.delay,
        feasible: true,
        meta,
    }
}

/// Local optima passed on to [`zoom`].
const ZOOM_CANDIDATES: usize = 3;

/// Best first; equal candidates keep their order.
fn rank(a: &Eval, b: &Eval) -> std::cmp::Ordering {
    if a.beats(b) {
        std::cmp::Ordering::Less
    } else if b.beats(a) {
        std::cmp::Ordering::Greater
    } else {
        std::cmp::Ordering::Equal
    }
}

/// Maximizes the secondary service rate subject to primary stability and the
/// delay bound. Deterministic for a given configuration.
pub fn solve(problem: &OptProblem, config: &SolverConfig) -> Result<OptResult> {
    let cfg = config.validate()?;
    let mask = problem.free_mask();
    let dirs = directions(mask);

    let audit = grid_search(problem, cfg.audit_step)?;
    let mut starts = start_points(cfg.n_starts, cfg.seed);
    starts.push(audit.0);

    let runs: Vec<([f64; DIM], Eval, u64)> = starts
        .par_iter()
        .map(|s| pattern_search(problem, &cfg, &dirs, *s))
        .collect();

    // polish the few best local optima
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|&a, &b| rank(&runs[a].1, &runs[b].1));
    let polished: Vec<(usize, [f64; DIM], Eval, u64)> = order[..ZOOM_CANDIDATES.min(order.len())]
        .par_iter()
        .map(|&i| {
            let (x, e, it) = zoom(problem, &cfg, runs[i].0, runs[i].1);
            (i, x, e, it)
        })
        .collect();
    let mut runs = runs;
    for (i, x, e, it) in polished {
        runs[i] = (x, e, runs[i].2 + it);
    }

    let mut best = (audit.0, audit.1, None);
    let mut iterations = 0;
    for (i, (x, e, it)) in runs.into_iter().enumerate() {
        iterations += it;
        let (x, e) = canonicalize(problem, x, e);
        let better = e.beats(&best.1) || (!best.1.beats(&e) && lex_less(&x, &best.0));
        if better {
            best = (x, e, Some(i));
        }
    }
    let meta = SolverMeta {
        starts: starts.len(),
        iterations,
        best_start: best.2,
    };
    Ok(finish(problem, best.0, best.1, meta))
}

fn check_grid_step(step: f64) -> Result<()> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::InvalidParameter {
            name: "step",
            value: step,
            reason: "grid step must lie in (0, 0.5]",
        });
    }
    Ok(())
}

fn grid_values(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round();
    if ((n * step) - 1.0).abs() < 1e-9 {
        (0..=n as usize).map(|i| i as f64 / n).collect()
    } else {
        let mut v: Vec<f64> = (0..)
            .map(|i| i as f64 * step)
            .take_while(|&x| x < 1.0)
            .collect();
        v.push(1.0);
        v
    }
}

/// Best point of the grid; ties go to the first point in lexicographic order.
fn grid_search(problem: &OptProblem, step: f64) -> Result<([f64; DIM], Eval, u64)> {
    check_grid_step(step)?;
    let values = grid_values(step);
    let mask = problem.free_mask();
    let axis = |i: usize| -> &[f64] {
        if mask[i] {
            &values
        } else {
            &values[..1]
        }
    };
    let retx_axis = axis(RETX);

    let per_sense: Vec<([f64; DIM], Eval, u64)> = axis(SENSE)
        .par_iter()
        .map(|&ps| {
            // sense = 0 makes free/busy irrelevant and sense = 1 makes direct
            // irrelevant; only their zero value is visited
            let free = if ps == 0.0 { &values[..1] } else { axis(FREE) };
            let busy = if ps == 0.0 { &values[..1] } else { axis(BUSY) };
            let direct = if ps == 1.0 {
                &values[..1]
            } else {
                axis(DIRECT)
            };
            let mut best: Option<([f64; DIM], Eval)> = None;
            let mut count = 0u64;
            for &pf in free {
                for &pb in busy {
                    for &pt in direct {
                        let base = [ps, pf, pb, pt, 0.0];
                        let policy = PolicyFb::from_array(base);
                        let (idle_gain, busy_gain) =
                            secondary_gains(&problem.profile, &policy.base, &problem.sensing);
                        let alpha = nofb::mu_p(
                            &problem.profile,
                            &policy.base,
                            &problem.sensing,
                            problem.traffic.lambda_e,
                        );
                        for &pr in retx_axis {
                            count += 1;
                            let e = if problem.scheme == Scheme::Feedback {
                                let (_, gamma) = fb::alpha_gamma(
                                    &problem.profile,
                                    &PolicyFb {
                                        access_retx: pr,
                                        ..policy
                                    },
                                    &problem.sensing,
                                    problem.traffic.lambda_e,
                                );
                                eval_fb(problem, alpha, gamma, idle_gain, busy_gain, pr)
                            } else {
                                eval_nofb(problem, alpha, idle_gain, busy_gain)
                            };
                            if best.as_ref().is_none_or(|(_, b)| e.beats(b)) {
                                best = Some(([ps, pf, pb, pt, pr], e));
                            }
                        }
                    }
                }
            }
            let (x, e) = best.expect("grid is never empty");
            (x, e, count)
        })
        .collect();

    let mut iter = per_sense.into_iter();
    let mut best = iter.next().expect("grid is never empty");
    for cand in iter {
        best.2 += cand.2;
        if cand.1.beats(&best.1) {
            best = (cand.0, cand.1, best.2);
        }
    }
    Ok(best)
}

/// Exhaustive search over the Cartesian grid of the scheme's decision
/// variables with spacing `step`.
pub fn grid_oracle(problem: &OptProblem, step: f64) -> Result<OptResult> {
    let (x, e, evals) = grid_search(problem, step)?;
    let meta = SolverMeta {
        starts: 0,
        iterations: evals,
        best_start: None,
    };
    Ok(finish(problem, x, e, meta))
}
