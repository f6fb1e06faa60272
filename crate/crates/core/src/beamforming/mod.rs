//! Downlink multicast beamforming for the max-min common rate.
//!
//! Every receiver decodes its needed messages jointly, treating the
//! messages it cannot cancel as noise. Its achievable common rate is the
//! minimum over the multiple-access (MAC) region constraints, one per
//! nonempty subset of needed messages. [`solve_max_min`] maximizes the
//! smallest such rate over all receivers under a sum-power budget.

mod barrier;
mod sca;

use num_complex::Complex64;

use crate::channel::{hdot, norm_sqr};
use crate::combinatorics::{subsets_of_size, CodedMessage, UserSet};
use crate::{Error, Result};

pub use sca::solve_max_min;

/// One downlink message.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanMessage {
    /// The `(τ+1)`-subset indexing the message; members can cancel it.
    pub members: UserSet,
    /// Members that still need their part of it.
    pub recipients: UserSet,
    pub content: Option<CodedMessage>,
}

/// The downlink messages `Ω^S` and who needs or suffers from each.
///
/// User `k` needs the messages listing it as a recipient (`Ω_k`). It
/// suffers interference from messages it is not a member of (`I_k`). A
/// message that lists `k` as a member but not as a recipient is XOR of
/// subfiles `k` caches, so it is cancelled rather than treated as noise.
#[derive(Debug, Clone, PartialEq)]
pub struct MessagePlan {
    users: usize,
    messages: Vec<PlanMessage>,
}

impl MessagePlan {
    /// Builds a plan, dropping messages nobody needs.
    pub fn new(users: usize, messages: Vec<PlanMessage>) -> Result<Self> {
        for m in &messages {
            if !m.recipients.is_subset_of(m.members) {
                return Err(Error::Parameter(format!(
                    "recipients {} of message {} are not members",
                    m.recipients, m.members
                )));
            }
            if m.members.max().is_some_and(|u| u >= users) {
                return Err(Error::Parameter(format!("message {} outside {users} users", m.members)));
            }
        }
        let messages = messages.into_iter().filter(|m| !m.recipients.is_empty()).collect();
        Ok(MessagePlan { users, messages })
    }

    /// A plan from `(members, recipients)` pairs without message content.
    pub fn from_sets(users: usize, sets: &[(UserSet, UserSet)]) -> Result<Self> {
        Self::new(
            users,
            sets.iter().map(|&(members, recipients)| PlanMessage { members, recipients, content: None }).collect(),
        )
    }

    /// Every `(τ+1)`-subset of `users`, each needed by all of its members.
    pub fn without_d2d(users: usize, tau: usize) -> Self {
        let messages = subsets_of_size(users, tau + 1)
            .into_iter()
            .map(|d| PlanMessage { members: d, recipients: d, content: None })
            .collect();
        MessagePlan { users, messages }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn messages(&self) -> &[PlanMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Indices of the messages user `k` needs.
    pub fn needed(&self, k: usize) -> Vec<usize> {
        (0..self.messages.len()).filter(|&j| self.messages[j].recipients.contains(k)).collect()
    }

    /// Indices of the messages user `k` treats as interference.
    pub fn interference(&self, k: usize) -> Vec<usize> {
        (0..self.messages.len()).filter(|&j| !self.messages[j].members.contains(k)).collect()
    }

    /// Users that need at least one message, ascending.
    pub fn active_users(&self) -> Vec<usize> {
        (0..self.users).filter(|&k| self.messages.iter().any(|m| m.recipients.contains(k))).collect()
    }

    /// The same plan with message `index` removed.
    pub fn without_message(&self, index: usize) -> Self {
        let mut messages = self.messages.clone();
        messages.remove(index);
        MessagePlan { users: self.users, messages }
    }
}

/// Solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once an iteration improves the rate by less than this fraction.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Fresh initializations tried after a degenerate start.
    pub max_restarts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { rel_tol: 1e-4, max_iter: 50, max_restarts: 3 }
    }
}

/// Beamformers and the common rate they achieve.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSolution {
    /// `w_D` for every plan message, in plan order.
    pub beamformers: Vec<Vec<Complex64>>,
    /// Common rate: the smallest MAC constraint over all receivers.
    pub rate: f64,
    pub iterations: usize,
    /// Rate after initialization and after every accepted iteration.
    pub trace: Vec<f64>,
    /// False when `max_iter` ran out before the stopping rule fired.
    pub converged: bool,
    pub restarts: usize,
    /// For single-receiver plans, the MRT rate of the concatenated stream.
    pub unicast_rate: Option<f64>,
}

/// Every MAC constraint as `(user, subset of needed message indices)`.
pub fn enumerate_mac_constraints(plan: &MessagePlan) -> Vec<(usize, Vec<usize>)> {
    let mut out = Vec::new();
    for k in 0..plan.users() {
        let needed = plan.needed(k);
        let n = needed.len();
        for mask in 1u64..(1u64 << n) {
            let subset = (0..n).filter(|b| mask >> b & 1 == 1).map(|b| needed[b]).collect();
            out.push((k, subset));
        }
    }
    out
}

/// Number of MAC constraints without enumerating them.
pub fn mac_constraint_count(plan: &MessagePlan) -> u128 {
    (0..plan.users()).map(|k| (1u128 << plan.needed(k).len()) - 1).sum()
}

/// `R_MAC^k` for every active user, recomputed from the raw channels and
/// beamformers: the minimum over nonempty `B ⊆ Ω_k` of
/// `log₂(1 + Σ_B |hᴴw|² / (N0 + Σ_{I_k} |hᴴw|²)) / |B|`.
pub fn mac_rates(
    plan: &MessagePlan,
    channels: &[Vec<Complex64>],
    beamformers: &[Vec<Complex64>],
    n0: f64,
) -> Vec<(usize, f64)> {
    plan.active_users()
        .into_iter()
        .map(|k| {
            let h = &channels[k];
            let noise = n0 + plan.interference(k).iter().map(|&j| hdot(h, &beamformers[j]).norm_sqr()).sum::<f64>();
            let gains: Vec<f64> = plan.needed(k).iter().map(|&j| hdot(h, &beamformers[j]).norm_sqr()).collect();
            let n = gains.len();
            let mut worst = f64::INFINITY;
            for mask in 1u64..(1u64 << n) {
                let sum: f64 = (0..n).filter(|b| mask >> b & 1 == 1).map(|b| gains[b]).sum();
                let rate = (sum / noise).ln_1p() / std::f64::consts::LN_2 / mask.count_ones() as f64;
                worst = worst.min(rate);
            }
            (k, worst)
        })
        .collect()
}

/// Smallest MAC rate over all active users.
pub fn common_rate(plan: &MessagePlan, channels: &[Vec<Complex64>], beamformers: &[Vec<Complex64>], n0: f64) -> f64 {
    mac_rates(plan, channels, beamformers, n0).into_iter().map(|(_, r)| r).fold(f64::INFINITY, f64::min)
}

/// Full-power maximum ratio transmission towards `h`.
pub fn mrt_unicast(h: &[Complex64], p_t: f64) -> Result<Vec<Complex64>> {
    let norm = norm_sqr(h).sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::ZeroChannel("MRT towards a zero channel".into()));
    }
    let scale = p_t.sqrt() / norm;
    Ok(h.iter().map(|z| z * scale).collect())
}

/// Downlink time `C(K,τ,L) / r`; zero for an empty plan and infinite when
/// the rate is zero.
pub fn t_dl(plan: &MessagePlan, solution: Option<&BeamformerSolution>, unit_bits: f64) -> f64 {
    if plan.is_empty() {
        return 0.0;
    }
    match solution {
        Some(s) if s.rate > 0.0 => unit_bits / s.rate,
        _ => f64::INFINITY,
    }
}
