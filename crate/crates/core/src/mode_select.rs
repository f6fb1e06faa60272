//! Choosing which user groups exchange content over D2D.
//!
//! [`exhaustive_select`] evaluates the exact delivery time of every subset
//! of `(τ+1)`-groups. [`heuristic_select`] grows the schedule greedily using
//! closed-form approximations of both phase durations: the best remaining
//! group is accepted while its D2D time per delivered subfile does not
//! exceed the approximate downlink time per pending subfile.

use num_complex::Complex64;

use crate::beamforming::{self, BeamformerSolution, MessagePlan, SolverOptions};
use crate::channel::{norm_sqr, ChannelRealization, ScenarioConfig};
use crate::combinatorics::{binomial, subsets_of_size, Placement, UserSet};
use crate::d2d::{self, remaining_message_plan, D2DSchedule};
use crate::par::Execution;
use crate::{Error, Result};

/// Largest number of `(τ+1)`-groups the exhaustive search accepts.
pub const EXHAUSTIVE_MAX_GROUPS: u64 = 20;

/// The pool member with the smallest D2D time per delivered subfile, given
/// what `schedule` already delivered. Groups that would deliver nothing, or
/// contain a zero-rate link, are skipped; ties keep the earlier candidate.
pub fn approx_t_d2d(
    pool: &[UserSet],
    schedule: &D2DSchedule,
    chans: &ChannelRealization,
    config: &ScenarioConfig,
) -> Result<Option<(UserSet, f64)>> {
    let mut best: Option<(UserSet, f64)> = None;
    for &group in pool {
        let delivered = schedule.ledger().group_yield(group);
        if delivered == 0 {
            continue;
        }
        let mut ledger = schedule.ledger().clone();
        let transmissions = ledger.d2d_coded_messages(group, schedule.unit_bits())?;
        let time = match d2d::group_time(&transmissions, chans, config) {
            Ok(t) => t,
            Err(Error::ZeroRate(_)) => continue,
            Err(e) => return Err(e),
        };
        let per_subfile = time / delivered as f64;
        if best.is_none_or(|(_, t)| per_subfile < t) {
            best = Some((group, per_subfile));
        }
    }
    Ok(best)
}

/// Per-message powers that equalize the weakest recipient's channel norm
/// times power across messages, summing to `p_t`.
pub fn approx_power(plan: &MessagePlan, channels: &[Vec<Complex64>], p_t: f64) -> Result<Vec<f64>> {
    if plan.is_empty() {
        return Err(Error::Parameter("no messages to allocate power to".into()));
    }
    let weakest: Vec<f64> = plan
        .messages()
        .iter()
        .map(|m| m.recipients.iter().map(|k| norm_sqr(&channels[k])).fold(f64::INFINITY, f64::min))
        .collect();
    if let Some(j) = weakest.iter().position(|&g| !(g > 0.0)) {
        return Err(Error::ZeroChannel(format!("every recipient of message {}", plan.messages()[j].members)));
    }
    // P_D ∝ 1/g_D is the product formula with the common factor Π g cancelled.
    let total: f64 = weakest.iter().map(|g| 1.0 / g).sum();
    Ok(weakest.iter().map(|g| p_t / (g * total)).collect())
}

/// Downlink time assuming interference-free MRT at every receiver.
pub fn approx_t_dl(plan: &MessagePlan, channels: &[Vec<Complex64>], powers: &[f64], unit_bits: f64, n0: f64) -> f64 {
    if plan.is_empty() {
        return 0.0;
    }
    let rate = plan
        .active_users()
        .into_iter()
        .map(|k| {
            let needed = plan.needed(k);
            let power: f64 = needed.iter().map(|&j| powers[j]).sum();
            (norm_sqr(&channels[k]) / n0 * power).ln_1p() / std::f64::consts::LN_2 / needed.len() as f64
        })
        .fold(f64::INFINITY, f64::min);
    if rate > 0.0 {
        unit_bits / rate
    } else {
        f64::INFINITY
    }
}

/// Result of the heuristic selection.
#[derive(Debug, Clone)]
pub struct HeuristicSelection {
    pub schedule: D2DSchedule,
    /// Candidates examined, accepted or not.
    pub iterations: usize,
}

/// Greedy D2D group selection. With `allow_general_groups`, once the
/// `(τ+1)`-groups stop paying off (or run out) the search continues with
/// groups of size `τ`, then `τ−1`, down to pairs.
pub fn heuristic_select(
    demands: &[usize],
    placement: &Placement,
    chans: &ChannelRealization,
    config: &ScenarioConfig,
    allow_general_groups: bool,
) -> Result<HeuristicSelection> {
    let tau = placement.tau();
    if tau == 0 {
        return Err(Error::Unsupported("D2D delivery needs τ ≥ 1".into()));
    }
    let mut schedule = D2DSchedule::new(placement, demands, config.unit_bits()?)?;
    let p_t = config.p_t();
    let smallest = if allow_general_groups { 2 } else { tau + 1 };
    let mut iterations = 0;
    for size in (smallest..=tau + 1).rev() {
        let mut pool = subsets_of_size(placement.users(), size);
        while let Some((group, d2d_time)) = approx_t_d2d(&pool, &schedule, chans, config)? {
            iterations += 1;
            let plan = remaining_message_plan(&schedule)?;
            let pending = schedule.ledger().pending_count();
            if plan.is_empty() || pending == 0 {
                break;
            }
            let powers = approx_power(&plan, &chans.dl_channels, p_t)?;
            let dl_time = approx_t_dl(&plan, &chans.dl_channels, &powers, schedule.unit_bits(), config.n0);
            if dl_time / pending as f64 >= d2d_time {
                schedule.add_group(group)?;
                pool.retain(|&g| g != group);
            } else {
                break;
            }
        }
    }
    Ok(HeuristicSelection { schedule, iterations })
}

/// Result of the exhaustive search.
#[derive(Debug, Clone)]
pub struct ExhaustiveSelection {
    pub schedule: D2DSchedule,
    pub total_time: f64,
    pub t_d2d: f64,
    pub t_dl: f64,
    pub solution: Option<BeamformerSolution>,
    /// Number of group subsets evaluated (`2^{M_T}`).
    pub evaluations: usize,
    /// Subsets whose evaluation failed and were skipped.
    pub failures: usize,
}

/// A schedule with its D2D time, DL time and beamformers.
type Evaluated = (D2DSchedule, f64, f64, Option<BeamformerSolution>);

/// Evaluates `t_d2d + t_dl` with the full beamformer solver for every
/// subset of the `(τ+1)`-groups. Ties go to fewer groups, then to the
/// lexicographically smaller group list.
pub fn exhaustive_select(
    demands: &[usize],
    placement: &Placement,
    chans: &ChannelRealization,
    config: &ScenarioConfig,
    opts: &SolverOptions,
    exec: Execution,
) -> Result<ExhaustiveSelection> {
    let (k, tau) = (placement.users(), placement.tau());
    let groups_total = binomial(k as u64, tau as u64 + 1);
    if groups_total > EXHAUSTIVE_MAX_GROUPS {
        return Err(Error::TooLarge(format!(
            "{groups_total} candidate groups means 2^{groups_total} evaluations; use the heuristic instead"
        )));
    }
    let candidates = subsets_of_size(k, tau + 1);
    let base = D2DSchedule::new(placement, demands, config.unit_bits()?)?;
    let masks = 1usize << candidates.len();

    let evaluate = |mask: usize| -> Result<Evaluated> {
        let selected = candidates.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &g)| g);
        let schedule = base.clone().with_groups(selected)?;
        let t_d2d = d2d::t_d2d(&schedule, chans, config)?;
        let plan = remaining_message_plan(&schedule)?;
        let solution = if plan.is_empty() {
            None
        } else {
            Some(beamforming::solve_max_min(&plan, &chans.dl_channels, config.p_t(), config.n0, opts)?)
        };
        let t_dl = beamforming::t_dl(&plan, solution.as_ref(), schedule.unit_bits());
        Ok((schedule, t_d2d, t_dl, solution))
    };
    let results = exec.map_indexed(masks, evaluate);

    let mut failures = 0;
    let mut best: Option<(usize, Evaluated)> = None;
    let mut last_error = None;
    for (mask, result) in results.into_iter().enumerate() {
        let candidate = match result {
            Ok(c) if (c.1 + c.2).is_finite() => c,
            Ok(_) => {
                failures += 1;
                continue;
            }
            Err(e) => {
                failures += 1;
                last_error = Some(e);
                continue;
            }
        };
        let better = match &best {
            None => true,
            Some((best_mask, b)) => {
                let (t_new, t_old) = (candidate.1 + candidate.2, b.1 + b.2);
                t_new < t_old
                    || (t_new == t_old
                        && (mask.count_ones(), candidate.0.group_sets()) < (best_mask.count_ones(), b.0.group_sets()))
            }
        };
        if better {
            best = Some((mask, candidate));
        }
    }
    let Some((_, (schedule, t_d2d, t_dl, solution))) = best else {
        return Err(last_error.unwrap_or_else(|| Error::Solver("every D2D selection has infinite time".into())));
    };
    Ok(ExhaustiveSelection { schedule, total_time: t_d2d + t_dl, t_d2d, t_dl, solution, evaluations: masks, failures })
}
