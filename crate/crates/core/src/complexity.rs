//! Closed-form bounds on downlink beamformer design complexity.
//!
//! The design problem has one MAC constraint per nonempty subset of a
//! user's needed messages and, per needed message, one quadratic term for
//! the message itself plus one per interfering message. D2D groups shrink
//! both counts; how much depends on whether the groups spread evenly over
//! the users (fewest MAC constraints, most quadratic terms) or concentrate
//! on a few (the opposite). The bounds below cover both extremes. All
//! counts are exact integers.

use std::io::Write;

use serde::Serialize;

use crate::beamforming::MessagePlan;
use crate::combinatorics::{binomial, subsets_of_size, UserSet};
use crate::{Error, Result};

/// Parameters of one bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexityInput {
    pub tau: usize,
    pub l: usize,
    /// Number of D2D groups of size `τ+1`.
    pub i: usize,
    /// Subfiles delivered by smaller D2D groups.
    pub m: usize,
    /// Restricted spatial DoF `(α, β, P)`: `τ+L → τ+α`,
    /// `M_T → P·C(τ+β, τ+1)`, `W → C(τ+β−1, τ)`.
    pub restricted: Option<(usize, usize, usize)>,
}

impl ComplexityInput {
    pub fn new(tau: usize, l: usize, i: usize, m: usize) -> Self {
        ComplexityInput { tau, l, i, m, restricted: None }
    }

    /// Users served in one transmission phase.
    pub fn users(&self) -> usize {
        match self.restricted {
            Some((alpha, _, _)) => self.tau + alpha,
            None => self.tau + self.l,
        }
    }

    /// `M_T`, the number of downlink messages without D2D.
    pub fn total_messages(&self) -> Result<u64> {
        let t = self.tau as u64;
        match self.restricted {
            Some((_, beta, p)) => (p as u64)
                .checked_mul(binomial(t + beta as u64, t + 1))
                .ok_or_else(|| Error::Parameter("M_T overflows".into())),
            None => Ok(binomial(t + self.l as u64, t + 1)),
        }
    }

    /// `W`, the number of messages each user needs without D2D.
    pub fn needed_per_user(&self) -> u64 {
        let t = self.tau as u64;
        match self.restricted {
            Some((_, beta, _)) => binomial(t + beta as u64 - 1, t),
            None => binomial(t + self.l as u64 - 1, t),
        }
    }
}

/// Bounds together with every intermediate quantity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComplexityBounds {
    pub mac_min: u128,
    pub mac_max: u128,
    pub q_min: u128,
    pub q_max: u128,
    pub n: i128,
    pub m_t: i128,
    pub w: i128,
    /// Subfiles left for the downlink.
    pub remaining: i128,
    pub a: i128,
    pub b: i128,
    /// `U`, `X` and `W − C(U−2, τ)`; absent when `i = 0`.
    pub u: Option<i128>,
    pub x: Option<i128>,
    pub w_hat: Option<i128>,
    pub phi: i128,
    pub l_m: i128,
    pub u_m: i128,
}

fn pow2_minus_one(e: i128) -> Result<i128> {
    if !(0..=126).contains(&e) {
        return Err(Error::Parameter(format!("2^{e} is out of range")));
    }
    Ok((1i128 << e) - 1)
}

fn checked(v: Option<i128>) -> Result<i128> {
    v.ok_or_else(|| Error::Parameter("complexity count overflows".into()))
}

/// Quadratic terms of one user needing `w` of `total` messages,
/// `w(total − w + 1)`, with `w` clamped to `[0, total]`.
fn user_quadratic(w: i128, total: i128) -> i128 {
    let w = w.clamp(0, total.max(0));
    w * (total - w + 1)
}

fn to_count(v: i128) -> Result<u128> {
    u128::try_from(v).map_err(|_| Error::Parameter(format!("negative count {v}")))
}

/// Evaluates both MAC bounds and both quadratic-term bounds.
pub fn bounds(input: &ComplexityInput) -> Result<ComplexityBounds> {
    if input.tau == 0 || input.l == 0 {
        return Err(Error::Parameter("τ and L must be positive".into()));
    }
    if let Some((alpha, beta, p)) = input.restricted {
        if alpha == 0 || alpha > input.l || beta == 0 || p == 0 || input.tau + alpha != p * (input.tau + beta) {
            return Err(Error::Parameter(format!(
                "restricted DoF (α={alpha}, β={beta}, P={p}) needs α ≤ L and τ+α = P(τ+β)"
            )));
        }
    }
    let tau = input.tau as i128;
    let n = input.users() as i128;
    let m_t = input.total_messages()? as i128;
    let w = input.needed_per_user() as i128;
    let (i, m) = (input.i as i128, input.m as i128);
    if i > m_t {
        return Err(Error::Parameter(format!("i = {i} exceeds M_T = {m_t}")));
    }
    let remaining = (tau + 1) * (m_t - i) - m;
    if remaining < 0 {
        return Err(Error::Parameter(format!("m = {m} exceeds the {} subfiles left", remaining + m)));
    }

    let a = remaining / n;
    let b = remaining - a * n;
    let mac_min = checked(
        (n - b)
            .checked_mul(pow2_minus_one(a)?)
            .and_then(|x| x.checked_add(b.checked_mul(pow2_minus_one(a + 1).ok()?)?)),
    )?;

    let u_m = m_t - i;
    let l_m = (remaining + tau) / (tau + 1);
    let q_max = b * user_quadratic(a + 1, u_m) + (n - b) * user_quadratic(a, u_m);

    let (mac_max, q_min, u, x, w_hat, phi) = if i == 0 {
        let phi = if w > 0 { m / w } else { 0 };
        let served = (n - phi).max(0);
        (served * pow2_minus_one(w)?, served * user_quadratic(w, l_m), None, None, None, phi)
    } else {
        let u = (tau + 1..=n).find(|&c| binomial(c as u64, tau as u64 + 1) as i128 >= i).expect("i ≤ M_T");
        let x = i - binomial(u as u64 - 1, tau as u64 + 1) as i128;
        let w_hat = w - binomial((u - 2) as u64, tau as u64) as i128;
        let phi = if w_hat > 0 { m / w_hat } else { 0 };
        let saturated = (u - (phi + 1)).max(0);
        let mac_max = checked(
            (n - u)
                .checked_mul(pow2_minus_one(w)?)
                .and_then(|v| v.checked_add(saturated.checked_mul(pow2_minus_one(w_hat).ok()?)?))
                .and_then(|v| v.checked_add(pow2_minus_one(w - x).ok()?)),
        )?;
        let q_min =
            (n - u) * user_quadratic(w, l_m) + saturated * user_quadratic(w_hat, l_m) + user_quadratic(w - x, l_m);
        (mac_max, q_min, Some(u), Some(x), Some(w_hat), phi)
    };

    Ok(ComplexityBounds {
        mac_min: to_count(mac_min)?,
        mac_max: to_count(mac_max)?,
        q_min: to_count(q_min)?,
        q_max: to_count(q_max)?,
        n,
        m_t,
        w,
        remaining,
        a,
        b,
        u,
        x,
        w_hat,
        phi,
        l_m,
        u_m,
    })
}

/// `(MAC_min, MAC_max)`.
pub fn mac_bounds(input: &ComplexityInput) -> Result<(u128, u128)> {
    bounds(input).map(|b| (b.mac_min, b.mac_max))
}

/// `(Q_min, Q_max)`.
pub fn quad_bounds(input: &ComplexityInput) -> Result<(u128, u128)> {
    bounds(input).map(|b| (b.q_min, b.q_max))
}

/// Exact `(MAC constraints, quadratic terms)` of a downlink plan, by
/// enumeration: `2^{|Ω_k|} − 1` and `|Ω_k|·(1 + |I_k|)` per user.
pub fn count_actual(plan: &MessagePlan) -> (u128, u128) {
    let mut mac = 0u128;
    let mut quad = 0u128;
    for k in 0..plan.users() {
        let needed = plan.needed(k).len() as u128;
        let interference = plan.interference(k).len() as u128;
        mac += (1u128 << needed) - 1;
        quad += needed * (1 + interference);
    }
    (mac, quad)
}

/// `i` groups of size `τ+1` among `n` users whose per-user counts differ by
/// at most one, found by depth-first search in lexicographic order.
pub fn uniform_selection(n: usize, tau: usize, i: usize) -> Option<Vec<UserSet>> {
    let candidates = subsets_of_size(n, tau + 1);
    if i > candidates.len() {
        return None;
    }
    let total = (tau + 1) * i;
    let (lo, hi) = (total / n, total.div_ceil(n));
    let high_slots = total - lo * n;
    // remaining_with[c][u]: candidates at index ≥ c that contain u.
    let mut remaining_with = vec![vec![0usize; n]; candidates.len() + 1];
    for c in (0..candidates.len()).rev() {
        remaining_with[c] = remaining_with[c + 1].clone();
        for u in candidates[c].iter() {
            remaining_with[c][u] += 1;
        }
    }

    struct Search<'a> {
        candidates: &'a [UserSet],
        remaining_with: &'a [Vec<usize>],
        lo: usize,
        hi: usize,
        high_slots: usize,
        degree: Vec<usize>,
        chosen: Vec<UserSet>,
    }

    impl Search<'_> {
        fn run(&mut self, start: usize, left: usize) -> bool {
            if left == 0 {
                return self.degree.iter().all(|&d| d >= self.lo);
            }
            if self.candidates.len() - start < left {
                return false;
            }
            for (u, &d) in self.degree.iter().enumerate() {
                if d + self.remaining_with[start][u] < self.lo {
                    return false;
                }
            }
            for c in start..self.candidates.len() {
                if self.candidates.len() - c < left {
                    break;
                }
                let g = self.candidates[c];
                if g.iter().any(|u| self.degree[u] >= self.hi) {
                    continue;
                }
                for u in g.iter() {
                    self.degree[u] += 1;
                }
                let at_high = if self.hi > self.lo { self.degree.iter().filter(|&&d| d == self.hi).count() } else { 0 };
                if at_high <= self.high_slots {
                    self.chosen.push(g);
                    if self.run(c + 1, left - 1) {
                        return true;
                    }
                    self.chosen.pop();
                }
                for u in g.iter() {
                    self.degree[u] -= 1;
                }
            }
            false
        }
    }

    let mut search = Search {
        candidates: &candidates,
        remaining_with: &remaining_with,
        lo,
        hi,
        high_slots,
        degree: vec![0; n],
        chosen: Vec::new(),
    };
    search.run(0, i).then_some(search.chosen)
}

/// The concentrated selection: every `(τ+1)`-subset of the first `U−1`
/// users, plus `X` groups pairing user `U−1` with the lexicographically
/// first `τ`-subsets of them.
pub fn limited_selection(n: usize, tau: usize, i: usize) -> Option<Vec<UserSet>> {
    if i == 0 {
        return Some(Vec::new());
    }
    let u = (tau + 1..=n).find(|&c| binomial(c as u64, tau as u64 + 1) >= i as u64)?;
    let core = subsets_of_size(u - 1, tau + 1);
    let extra = i - core.len();
    let mut groups = core;
    groups.extend(subsets_of_size(u - 1, tau).into_iter().take(extra).map(|t| t.with(u - 1)));
    Some(groups)
}

/// One row of a bound sweep over `i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub i: usize,
    pub m: usize,
    pub mac_min: u128,
    pub mac_max: u128,
    pub q_min: u128,
    pub q_max: u128,
    pub mac_min_norm: f64,
    pub mac_max_norm: f64,
    pub q_min_norm: f64,
    pub q_max_norm: f64,
}

/// Bounds for every feasible `i` in `0..=M_T` at fixed `m`, normalized by
/// the no-D2D values.
pub fn sweep(tau: usize, l: usize, m: usize, restricted: Option<(usize, usize, usize)>) -> Result<Vec<SweepRow>> {
    let base_input = ComplexityInput { tau, l, i: 0, m: 0, restricted };
    let base = bounds(&base_input)?;
    let m_t = base_input.total_messages()? as usize;
    bounds(&ComplexityInput { m, ..base_input })?;
    let norm = |v: u128, d: u128| if d == 0 { 0.0 } else { v as f64 / d as f64 };
    let mut rows = Vec::new();
    for i in 0..=m_t {
        let input = ComplexityInput { i, m, ..base_input };
        let b = match bounds(&input) {
            Ok(b) => b,
            Err(_) if (tau + 1) * (m_t - i) < m => break,
            Err(e) => return Err(e),
        };
        rows.push(SweepRow {
            i,
            m,
            mac_min: b.mac_min,
            mac_max: b.mac_max,
            q_min: b.q_min,
            q_max: b.q_max,
            mac_min_norm: norm(b.mac_min, base.mac_min),
            mac_max_norm: norm(b.mac_max, base.mac_max),
            q_min_norm: norm(b.q_min, base.q_min),
            q_max_norm: norm(b.q_max, base.q_max),
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
