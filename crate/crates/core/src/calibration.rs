//! Prior-knowledge-free learners for average-reward MDPs under a generative
//! model.
//!
//! * [`fixed_n_calibrate`]: with `n` samples per pair, solve the empirical
//!   DMDP over a dyadic grid of effective horizons and keep the horizon whose
//!   observable gain lower bound is largest.
//! * [`fixed_eps_calibrate`]: double `n` until some horizon yields a
//!   confidence interval on the optimal gain of width at most `eps`.
//! * [`span_penalized_calibrate`]: run span-constrained planning over a
//!   dyadic grid of span bounds and keep the bound with the largest
//!   span-penalized lower bound.
//!
//! All grid selections break ties toward the smaller horizon (or the smaller
//! span index).

use rayon::prelude::*;

use crate::dmdp::solve_dmdp;
use crate::error::{MdpError, Result};
use crate::generative::{derive_seed, sample_kernel, EmpiricalKernel};
use crate::mdp::{DiscountFactor, MdpInstance, Policy};
use crate::span_plan::span_constrained_plan;

/// Slack used when comparing an interval width against `eps`.
pub const INTERVAL_SLACK: f64 = 1e-12;

/// Failure probability `delta` and a multiplier on the confidence width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams {
    delta: f64,
    alpha_scale: f64,
}

impl ConfidenceParams {
    /// Exact confidence function (`alpha_scale = 1`).
    pub fn new(delta: f64) -> Result<Self> {
        Self::scaled(delta, 1.0)
    }

    /// `alpha_scale = 0` is accepted and zeroes every confidence term.
    pub fn scaled(delta: f64, alpha_scale: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(MdpError::Domain(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !(alpha_scale >= 0.0) || !alpha_scale.is_finite() {
            return Err(MdpError::Domain(format!(
                "alpha_scale must be finite and non-negative, got {alpha_scale}"
            )));
        }
        Ok(Self { delta, alpha_scale })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn alpha_scale(&self) -> f64 {
        self.alpha_scale
    }
}

/// `alpha(delta, n) = scale * 96 sqrt(ln(24 S A n^5 / delta)) log2(log2(n + 4))`.
pub fn alpha(params: &ConfidenceParams, n: u64, n_states: usize, n_actions: usize) -> f64 {
    let nf = n as f64;
    let log_term = (24.0 * n_states as f64 * n_actions as f64).ln() + 5.0 * nf.ln() - params.delta.ln();
    params.alpha_scale * 96.0 * log_term.sqrt() * (nf + 4.0).log2().log2()
}

/// Dyadic effective horizons `2^k` with `sqrt(n) <= 2^k <= n`.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonGrid {
    entries: Vec<(u64, DiscountFactor)>,
}

impl HorizonGrid {
    pub fn horizons(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|(h, _)| *h)
    }

    pub fn discounts(&self) -> impl Iterator<Item = DiscountFactor> + '_ {
        self.entries.iter().map(|(_, d)| *d)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Powers of two in `[sqrt(n), n]`, decided in integer arithmetic
/// (`4^k >= n` and `2^k <= n`).
pub fn horizon_grid(n: u64) -> Result<HorizonGrid> {
    if n < 2 {
        return Err(MdpError::Domain(format!("horizon grid needs n >= 2, got {n}")));
    }
    let k_max = 63 - n.leading_zeros();
    let k_min = (0..=k_max).find(|&k| 1u128 << (2 * k) >= n as u128).unwrap_or(k_max);
    let entries = (k_min..=k_max)
        .map(|k| {
            let h = 1u64 << k;
            DiscountFactor::from_horizon(h as f64).map(|d| (h, d))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HorizonGrid { entries })
}

/// `ceil(log2(n))` for `n >= 1`.
pub fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// Observable lower bound on the gain of the greedy policy:
/// `(1-g) min V - 2(1-g)/n - alpha sqrt((sp(V) + 3/n + 1)/n)`.
pub fn gain_lower_bound(value_min: f64, value_span: f64, gamma: DiscountFactor, n: u64, alpha: f64) -> f64 {
    let nf = n as f64;
    let one_minus = gamma.one_minus();
    one_minus * value_min - 2.0 * one_minus / nf - alpha * ((value_span + 3.0 / nf + 1.0) / nf).sqrt()
}

/// Observable upper bound on the optimal gain:
/// `(1-g) max V + 5(1-g)/n + 2 alpha^2/((1-g) n) + 4 alpha sqrt((sp(V) + 1 + 3/n)/n)`.
pub fn gain_upper_bound(value_max: f64, value_span: f64, gamma: DiscountFactor, n: u64, alpha: f64) -> f64 {
    let nf = n as f64;
    let one_minus = gamma.one_minus();
    one_minus * value_max
        + 5.0 * one_minus / nf
        + 2.0 * alpha * alpha / (one_minus * nf)
        + 4.0 * alpha * ((value_span + 1.0 + 3.0 / nf) / nf).sqrt()
}

/// Span-penalized objective `(1-g) min V - alpha sqrt((M + 1)/n)`.
pub fn span_objective(value_min: f64, span_bound: f64, gamma: DiscountFactor, n: u64, alpha: f64) -> f64 {
    gamma.one_minus() * value_min - alpha * ((span_bound + 1.0) / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    FixedN,
    FixedEps,
    SpanPenalized,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::FixedN => "fixed_n",
            Algorithm::FixedEps => "fixed_eps",
            Algorithm::SpanPenalized => "span_penalized",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = MdpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_n" => Ok(Algorithm::FixedN),
            "fixed_eps" => Ok(Algorithm::FixedEps),
            "span_penalized" => Ok(Algorithm::SpanPenalized),
            other => Err(MdpError::Domain(format!(
                "unknown algorithm {other:?} (expected fixed_n, fixed_eps or span_penalized)"
            ))),
        }
    }
}

/// One grid point of a learner run.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub gamma: DiscountFactor,
    /// Span index `i` and bound `M_i = 2^i` (span penalization only).
    pub span_index: Option<u32>,
    pub span_bound: Option<f64>,
    /// `L̂(gamma)`, or the span-penalized objective.
    pub lower: f64,
    /// `Û(gamma)` (confidence-interval learner only).
    pub upper: Option<f64>,
    pub value_min: f64,
    pub value_span: f64,
    pub iterations: u64,
    pub policy: Policy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    BudgetExhausted,
}

/// One outer iteration of the confidence-interval learner.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterIteration {
    pub index: u32,
    pub n: u64,
    pub seed: u64,
    /// Index into `table` of the narrowest interval.
    pub selected: usize,
    pub table: Vec<GridRow>,
}

impl OuterIteration {
    pub fn upper(&self) -> f64 {
        self.table[self.selected].upper.expect("interval row")
    }

    pub fn lower(&self) -> f64 {
        self.table[self.selected].lower
    }

    pub fn width(&self) -> f64 {
        self.upper() - self.lower()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalReport {
    pub upper: f64,
    pub lower: f64,
    pub outer_iterations: u32,
    pub termination: Termination,
    pub history: Vec<OuterIteration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub algorithm: Algorithm,
    pub policy: Policy,
    /// Gain lower bound, clamped at zero.
    pub rho_hat: f64,
    pub gamma_hat: DiscountFactor,
    /// Index into `table` of the selected grid point.
    pub selected: usize,
    pub table: Vec<GridRow>,
    pub samples_per_pair: u64,
    pub interval: Option<IntervalReport>,
}

impl CalibrationResult {
    pub fn selected_row(&self) -> &GridRow {
        &self.table[self.selected]
    }
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn horizon_rows(kernel: &EmpiricalKernel, params: &ConfidenceParams, with_upper: bool) -> Result<Vec<GridRow>> {
    let model = kernel.model();
    let n = kernel.n_per_pair() as u64;
    let a = alpha(params, n, model.n_states(), model.n_actions());
    let grid = horizon_grid(n)?;
    let target = 1.0 / n as f64;
    grid.discounts()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|gamma| {
            let sol = solve_dmdp(model, gamma, target)?;
            let (vmin, vmax, vspan) = (sol.value.min(), sol.value.max(), sol.value.span());
            Ok(GridRow {
                gamma,
                span_index: None,
                span_bound: None,
                lower: gain_lower_bound(vmin, vspan, gamma, n, a),
                upper: with_upper.then(|| gain_upper_bound(vmax, vspan, gamma, n, a)),
                value_min: vmin,
                value_span: vspan,
                iterations: sol.iterations,
                policy: sol.policy,
            })
        })
        .collect()
}

/// Horizon calibration on a given empirical kernel.
pub fn fixed_n_from_kernel(kernel: &EmpiricalKernel, params: &ConfidenceParams) -> Result<CalibrationResult> {
    let table = horizon_rows(kernel, params, false)?;
    let selected = argmax_first(table.iter().map(|r| r.lower));
    let row = &table[selected];
    Ok(CalibrationResult {
        algorithm: Algorithm::FixedN,
        policy: row.policy.clone(),
        rho_hat: row.lower.max(0.0),
        gamma_hat: row.gamma,
        selected,
        samples_per_pair: kernel.n_per_pair() as u64,
        table,
        interval: None,
    })
}

/// Fixed-`n` horizon calibration: draws `n` samples per pair with `seed`.
pub fn fixed_n_calibrate(mdp: &MdpInstance, n: u64, params: &ConfidenceParams, seed: u64) -> Result<CalibrationResult> {
    if n < 2 {
        return Err(MdpError::Domain(format!("fixed-n calibration needs n >= 2, got {n}")));
    }
    let kernel = sample_kernel(mdp, n as usize, seed)?;
    fixed_n_from_kernel(&kernel, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedEpsOptions {
    pub max_outer: u32,
    /// Terminate on `min Û - max L̂` over the whole history instead of the
    /// per-iteration interval; the returned policy is the one with the best
    /// lower bound.
    pub history_termination: bool,
}

impl FixedEpsOptions {
    pub fn new(max_outer: u32) -> Self {
        Self {
            max_outer,
            history_termination: false,
        }
    }
}

/// Confidence-interval minimization with doubling sample sizes
/// `n_i = 2^i`. Each outer iteration draws a fresh sample set with seed
/// `derive_seed(seed, i)`.
pub fn fixed_eps_calibrate(
    mdp: &MdpInstance,
    eps: f64,
    params: &ConfidenceParams,
    options: FixedEpsOptions,
    seed: u64,
) -> Result<CalibrationResult> {
    if !(eps > 0.0) {
        return Err(MdpError::Domain(format!("eps must be positive, got {eps}")));
    }
    if options.max_outer == 0 || options.max_outer > 62 {
        return Err(MdpError::Domain(format!(
            "max_outer must lie in 1..=62, got {}",
            options.max_outer
        )));
    }

    let mut history: Vec<OuterIteration> = Vec::new();
    let mut samples = 0u64;
    // (iteration, row) of the best upper and lower bounds seen so far.
    let mut best_upper: Option<(usize, usize)> = None;
    let mut best_lower: Option<(usize, usize)> = None;
    let mut termination = Termination::BudgetExhausted;

    for i in 1..=options.max_outer {
        let n = 1u64 << i;
        let batch_seed = derive_seed(seed, i as u64);
        let kernel = sample_kernel(mdp, n as usize, batch_seed)?;
        let table = horizon_rows(&kernel, params, true)?;
        samples += n;
        let width = |r: &GridRow| r.upper.expect("interval row") - r.lower;
        let mut selected = 0;
        for (j, row) in table.iter().enumerate() {
            if width(row) < width(&table[selected]) {
                selected = j;
            }
        }
        history.push(OuterIteration {
            index: i,
            n,
            seed: batch_seed,
            selected,
            table,
        });
        let it = history.len() - 1;
        for (j, row) in history[it].table.iter().enumerate() {
            let up = row.upper.expect("interval row");
            if best_upper.is_none_or(|(bi, bj)| up < history[bi].table[bj].upper.expect("interval row")) {
                best_upper = Some((it, j));
            }
            if best_lower.is_none_or(|(bi, bj)| row.lower > history[bi].table[bj].lower) {
                best_lower = Some((it, j));
            }
        }

        let done = if options.history_termination {
            let (ui, uj) = best_upper.expect("non-empty grid");
            let (li, lj) = best_lower.expect("non-empty grid");
            history[ui].table[uj].upper.expect("interval row") - history[li].table[lj].lower <= eps + INTERVAL_SLACK
        } else {
            history[it].width() <= eps + INTERVAL_SLACK
        };
        if done {
            termination = Termination::Converged;
            break;
        }
    }

    // Pick the reported iteration / rows.
    let (iter_idx, row_idx, upper, lower) = if options.history_termination {
        let (ui, uj) = best_upper.expect("non-empty grid");
        let (li, lj) = best_lower.expect("non-empty grid");
        let upper = history[ui].table[uj].upper.expect("interval row");
        (li, lj, upper, history[li].table[lj].lower)
    } else if termination == Termination::Converged {
        let last = history.len() - 1;
        let h = &history[last];
        (last, h.selected, h.upper(), h.lower())
    } else {
        let best = (0..history.len()).fold(0, |b, k| if history[k].width() < history[b].width() { k } else { b });
        let h = &history[best];
        (best, h.selected, h.upper(), h.lower())
    };

    let reported = &history[iter_idx];
    let row = &reported.table[row_idx];
    Ok(CalibrationResult {
        algorithm: Algorithm::FixedEps,
        policy: row.policy.clone(),
        rho_hat: lower.max(0.0),
        gamma_hat: row.gamma,
        selected: row_idx,
        table: reported.table.clone(),
        samples_per_pair: samples,
        interval: Some(IntervalReport {
            upper,
            lower,
            outer_iterations: history.len() as u32,
            termination,
            history,
        }),
    })
}

/// Empirical span penalization on a given empirical kernel.
pub fn span_penalized_from_kernel(kernel: &EmpiricalKernel, params: &ConfidenceParams) -> Result<CalibrationResult> {
    let model = kernel.model();
    let n = kernel.n_per_pair() as u64;
    if n < 4 {
        return Err(MdpError::Domain(format!("span penalization needs n >= 4, got {n}")));
    }
    let a = alpha(params, n, model.n_states(), model.n_actions());
    if !(a > 0.0) {
        return Err(MdpError::Domain(
            "span penalization sets horizons from alpha and needs alpha > 0".into(),
        ));
    }
    let target = 1.0 / n as f64;
    let indices: Vec<u32> = (2..=ceil_log2(n)).collect();
    let table = indices
        .into_par_iter()
        .map(|i| {
            let bound = (1u64 << i) as f64;
            let horizon = ((n as f64 * bound).sqrt() / (a * 2.0 * std::f64::consts::SQRT_2)).max(1.0);
            let gamma = DiscountFactor::from_horizon(horizon)?;
            let plan = span_constrained_plan(model, gamma, bound, target)?;
            let (vmin, vspan) = (plan.value.min(), plan.value.span());
            Ok(GridRow {
                gamma,
                span_index: Some(i),
                span_bound: Some(bound),
                lower: span_objective(vmin, bound, gamma, n, a),
                upper: None,
                value_min: vmin,
                value_span: vspan,
                iterations: plan.iterations,
                policy: plan.policy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let selected = argmax_first(table.iter().map(|r| r.lower));
    let row = &table[selected];
    Ok(CalibrationResult {
        algorithm: Algorithm::SpanPenalized,
        policy: row.policy.clone(),
        rho_hat: row.lower.max(0.0),
        gamma_hat: row.gamma,
        selected,
        samples_per_pair: n,
        table,
        interval: None,
    })
}

/// Empirical span penalization: draws `n` samples per pair with `seed`.
pub fn span_penalized_calibrate(
    mdp: &MdpInstance,
    n: u64,
    params: &ConfidenceParams,
    seed: u64,
) -> Result<CalibrationResult> {
    if n < 4 {
        return Err(MdpError::Domain(format!("span penalization needs n >= 4, got {n}")));
    }
    let kernel = sample_kernel(mdp, n as usize, seed)?;
    span_penalized_from_kernel(&kernel, params)
}
