//! Successive convex approximation of the max-min MAC rate problem.
//!
//! Working in units where the noise power is one and the power budget is
//! one (channels scaled by `√(P_T/N0)`), each iteration solves
//!
//! ```text
//! max r  s.t.  Σ_D ‖w_D‖² ≤ 1,
//!              β_k ≥ 1 + Σ_{D∈I_k} |h_kᴴw_D|²,
//!              (β̄/2γ̄) γ_{k,D}² + (γ̄/2β̄) β_k² ≤ 2 Re(z̄ᴴ h_kᴴw_D) − |z̄|²,
//!              |B| r ≤ log₂(1 + Σ_{D∈B} γ_{k,D})   for every B ⊆ Ω_k,
//! ```
//!
//! where bars denote the previous iterate and `z̄ = h_kᴴw̄_D`. The left side
//! of the third row upper-bounds `γβ` and its right side lower-bounds
//! `|h_kᴴw_D|²`, so every feasible point satisfies `γ_{k,D} ≤ SINR_{k,D}`.
//! The previous iterate stays feasible, which makes the rate nondecreasing.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::barrier::{self, BarrierOptions, BarrierProblem};
use super::{common_rate, BeamformerSolution, MessagePlan, SolverOptions};
use crate::channel::norm_sqr;
use crate::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

/// Maximizes the common rate of `plan` over beamformers with total power
/// `p_t`. Single-receiver plans are solved in closed form by MRT.
pub fn solve_max_min(
    plan: &MessagePlan,
    channels: &[Vec<Complex64>],
    p_t: f64,
    n0: f64,
    opts: &SolverOptions,
) -> Result<BeamformerSolution> {
    if plan.is_empty() {
        return Err(Error::Parameter("no downlink messages to beamform".into()));
    }
    if !(p_t > 0.0 && p_t.is_finite() && n0 > 0.0 && n0.is_finite()) {
        return Err(Error::Parameter(format!("P_T = {p_t} and N0 = {n0} must be positive")));
    }
    if channels.len() < plan.users() {
        return Err(Error::Parameter(format!("{} channels for {} users", channels.len(), plan.users())));
    }
    let l = channels[0].len();
    if l == 0 || channels.iter().any(|h| h.len() != l || h.iter().any(|z| !z.is_finite())) {
        return Err(Error::Parameter("channels must be finite vectors of equal length".into()));
    }
    let active = plan.active_users();
    for &k in &active {
        if norm_sqr(&channels[k]) == 0.0 {
            return Err(Error::ZeroChannel(format!("user {}", k + 1)));
        }
    }
    if let [k] = active[..] {
        return Ok(single_receiver(plan, &channels[k], p_t, n0));
    }

    let scale = (p_t / n0).sqrt();
    let gains: Vec<Vec<Complex64>> = channels.iter().map(|h| h.iter().map(|z| z * scale).collect()).collect();
    let structure = Structure::new(plan, &gains, &active);
    let to_beams = |x: &DVector<f64>| structure.beamformers(x, p_t.sqrt());
    let evaluate = |x: &DVector<f64>| common_rate(plan, channels, &to_beams(x), n0);

    for restart in 0..=opts.max_restarts {
        let Some(mut x) = structure.initial_point(restart) else { continue };
        let mut rate = evaluate(&x);
        let Some(mut sub) = structure.linearize(&x) else { continue };
        let mut trace = vec![rate];
        let mut iterations = 0;
        let mut converged = false;
        while iterations < opts.max_iter {
            iterations += 1;
            let Ok(z) = barrier::solve(&sub, sub.start.clone(), &sub.barrier_options(rate)) else {
                break;
            };
            let mut next = z.rows(0, structure.xdim).into_owned();
            let norm = next.norm();
            if !(norm > 0.0) {
                break;
            }
            next /= norm;
            let next_rate = evaluate(&next);
            if !(next_rate >= rate) {
                converged = true;
                break;
            }
            let improvement = next_rate - rate;
            x = next;
            rate = next_rate;
            trace.push(rate);
            if improvement <= opts.rel_tol * rate.abs() {
                converged = true;
                break;
            }
            match structure.linearize(&x) {
                Some(s) => sub = s,
                None => break,
            }
        }
        return Ok(BeamformerSolution {
            beamformers: to_beams(&x),
            rate,
            iterations,
            trace,
            converged,
            restarts: restart,
            unicast_rate: None,
        });
    }
    Err(Error::Solver(format!("no usable initialization after {} restarts", opts.max_restarts)))
}

fn single_receiver(plan: &MessagePlan, h: &[Complex64], p_t: f64, n0: f64) -> BeamformerSolution {
    let n = plan.len() as f64;
    let norm = norm_sqr(h).sqrt();
    let w: Vec<Complex64> = h.iter().map(|z| z * ((p_t / n).sqrt() / norm)).collect();
    let unicast = (norm * norm * p_t / n0).ln_1p() / LN2;
    let rate = unicast / n;
    BeamformerSolution {
        beamformers: vec![w; plan.len()],
        rate,
        iterations: 0,
        trace: vec![rate],
        converged: true,
        restarts: 0,
        unicast_rate: Some(unicast),
    }
}

/// Index bookkeeping shared by all SCA iterations.
struct Structure {
    l: usize,
    messages: usize,
    xdim: usize,
    /// Real-form rows of `hᴴ`: `Re(hᴴw) = p·x`, `Im(hᴴw) = q·x`.
    p: Vec<DVector<f64>>,
    q: Vec<DVector<f64>>,
    /// Per active user, the interfering message indices.
    interference: Vec<Vec<usize>>,
    /// `(active user index, message)` for every needed message.
    pairs: Vec<(usize, usize)>,
    /// `(active user index, pair indices of B)` for every MAC constraint.
    mac: Vec<(usize, Vec<usize>)>,
    /// Per message, the normalized recipient channels used to initialize.
    recipients: Vec<Vec<usize>>,
}

impl Structure {
    fn new(plan: &MessagePlan, gains: &[Vec<Complex64>], active: &[usize]) -> Self {
        let l = gains[0].len();
        let messages = plan.len();
        let real_rows = |h: &[Complex64]| {
            let mut p = DVector::zeros(2 * l);
            let mut q = DVector::zeros(2 * l);
            for (i, z) in h.iter().enumerate() {
                p[i] = z.re;
                p[l + i] = z.im;
                q[i] = -z.im;
                q[l + i] = z.re;
            }
            (p, q)
        };
        let (p, q) = active.iter().map(|&k| real_rows(&gains[k])).unzip();
        let interference = active.iter().map(|&k| plan.interference(k)).collect();
        let mut pairs = Vec::new();
        let mut mac = Vec::new();
        for (u, &k) in active.iter().enumerate() {
            let first = pairs.len();
            let needed = plan.needed(k);
            pairs.extend(needed.iter().map(|&j| (u, j)));
            let n = needed.len();
            for mask in 1u64..(1u64 << n) {
                mac.push((u, (0..n).filter(|b| mask >> b & 1 == 1).map(|b| first + b).collect()));
            }
        }
        let recipients = plan
            .messages()
            .iter()
            .map(|m| active.iter().enumerate().filter(|(_, &k)| m.recipients.contains(k)).map(|(u, _)| u).collect())
            .collect();
        Structure { l, messages, xdim: 2 * l * messages, p, q, interference, pairs, mac, recipients }
    }

    fn users(&self) -> usize {
        self.p.len()
    }

    fn beamformers(&self, x: &DVector<f64>, amplitude: f64) -> Vec<Vec<Complex64>> {
        let l = self.l;
        (0..self.messages)
            .map(|j| (0..l).map(|i| Complex64::new(x[2 * l * j + i], x[2 * l * j + l + i]) * amplitude).collect())
            .collect()
    }

    fn block<'a>(&self, x: &'a DVector<f64>, j: usize) -> nalgebra::DVectorView<'a, f64> {
        x.rows(2 * self.l * j, 2 * self.l)
    }

    /// `(Re, Im)` of `hᴴw_j` for active user `u`.
    fn response(&self, x: &DVector<f64>, u: usize, j: usize) -> (f64, f64) {
        let b = self.block(x, j);
        (self.p[u].dot(&b), self.q[u].dot(&b))
    }

    /// Unit-power starting beamformers. The first attempt points every
    /// message at its weakest recipient; restarts blend all recipients with
    /// deterministic phases.
    fn initial_point(&self, restart: usize) -> Option<DVector<f64>> {
        let mut x = DVector::zeros(self.xdim);
        let per_message = (1.0 / self.messages as f64).sqrt();
        for j in 0..self.messages {
            let mut v = DVector::<f64>::zeros(2 * self.l);
            if restart == 0 {
                let &u = self.recipients[j]
                    .iter()
                    .min_by(|&&a, &&b| self.p[a].norm_squared().total_cmp(&self.p[b].norm_squared()))?;
                v.copy_from(&self.p[u]);
            } else {
                for &u in &self.recipients[j] {
                    let theta = std::f64::consts::TAU * ((u + 1) * restart + j) as f64 / 7.0;
                    let unit = 1.0 / self.p[u].norm();
                    // e^{iθ}·h in real form is cos θ·p_h − sin θ·q_h with
                    // p_h = [Re h, Im h] and q_h = [−Im h, Re h].
                    v += (&self.p[u] * theta.cos() - &self.q[u] * theta.sin()) * unit;
                }
            }
            let norm = v.norm();
            if !(norm > 0.0) {
                return None;
            }
            x.rows_mut(2 * self.l * j, 2 * self.l).copy_from(&(v * (per_message / norm)));
        }
        Some(x)
    }

    /// Convex subproblem around the unit-power iterate `x`, or `None` when
    /// some needed message has no signal at its recipient.
    fn linearize(&self, x: &DVector<f64>) -> Option<Subproblem<'_>> {
        let users = self.users();
        let beta: Vec<f64> = (0..users)
            .map(|u| {
                1.0 + self.interference[u]
                    .iter()
                    .map(|&j| {
                        let (a, b) = self.response(x, u, j);
                        a * a + b * b
                    })
                    .sum::<f64>()
            })
            .collect();
        let mut anchor = Vec::with_capacity(self.pairs.len());
        let peak = self
            .pairs
            .iter()
            .map(|&(u, j)| {
                let (a, b) = self.response(x, u, j);
                a * a + b * b
            })
            .fold(0.0, f64::max);
        for &(u, j) in &self.pairs {
            let (re, im) = self.response(x, u, j);
            let power = re * re + im * im;
            if !(power > 1e-14 * peak && power > 0.0) {
                return None;
            }
            let gamma = power / beta[u];
            anchor.push(Anchor { re, im, power, a: beta[u] / (2.0 * gamma), b: gamma / (2.0 * beta[u]), gamma });
        }

        // Strictly feasible start: shrink the beamformers, loosen β, and
        // back off γ and r.
        let (shrink, loosen, backoff) = (1.0 - 1e-3, 1.0 + 1e-3, 0.99);
        let dim = self.xdim + self.pairs.len() + users + 1;
        let mut start = DVector::zeros(dim);
        start.rows_mut(0, self.xdim).copy_from(&(x * shrink));
        for (i, a) in anchor.iter().enumerate() {
            start[self.xdim + i] = backoff * a.gamma;
        }
        for u in 0..users {
            start[self.xdim + self.pairs.len() + u] = beta[u] * loosen;
        }
        let r0 = self
            .mac
            .iter()
            .map(|(_, set)| {
                let sum: f64 = set.iter().map(|&i| backoff * anchor[i].gamma).sum();
                sum.ln_1p() / LN2 / set.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        start[dim - 1] = r0 - (1e-3 * r0.abs() + 1e-12);
        let mut objective = DVector::zeros(dim);
        objective[dim - 1] = -1.0;
        Some(Subproblem { s: self, anchor, start, objective })
    }
}

struct Anchor {
    re: f64,
    im: f64,
    power: f64,
    a: f64,
    b: f64,
    gamma: f64,
}

struct Subproblem<'a> {
    s: &'a Structure,
    anchor: Vec<Anchor>,
    start: DVector<f64>,
    objective: DVector<f64>,
}

impl Subproblem<'_> {
    fn gamma_index(&self, pair: usize) -> usize {
        self.s.xdim + pair
    }

    fn beta_index(&self, u: usize) -> usize {
        self.s.xdim + self.s.pairs.len() + u
    }

    fn rate_index(&self) -> usize {
        self.objective.len() - 1
    }

    fn barrier_options(&self, rate: f64) -> BarrierOptions {
        let m = (1 + self.s.users() + self.s.pairs.len() + self.s.mac.len()) as f64;
        BarrierOptions { t0: m / (0.1 * rate.abs().max(1e-3)), ..BarrierOptions::default() }
    }
}

/// `grad -= g/f`, `hess += g gᵀ/f²` for a sparse gradient `g`.
fn add_first_order(g: &[(usize, f64)], f: f64, grad: &mut DVector<f64>, hess: &mut DMatrix<f64>) {
    let inv = 1.0 / f;
    for &(i, gi) in g {
        grad[i] -= gi * inv;
        for &(j, gj) in g {
            hess[(i, j)] += gi * gj * inv * inv;
        }
    }
}

impl BarrierProblem for Subproblem<'_> {
    fn dim(&self) -> usize {
        self.objective.len()
    }

    fn objective(&self) -> &DVector<f64> {
        &self.objective
    }

    fn constraints(&self, z: &DVector<f64>, values: &mut Vec<f64>) -> bool {
        let s = self.s;
        values.clear();
        let x = z.rows(0, s.xdim).into_owned();
        values.push(x.norm_squared() - 1.0);
        for u in 0..s.users() {
            let interference: f64 = s.interference[u]
                .iter()
                .map(|&j| {
                    let (a, b) = s.response(&x, u, j);
                    a * a + b * b
                })
                .sum();
            values.push(1.0 + interference - z[self.beta_index(u)]);
        }
        for (i, &(u, j)) in s.pairs.iter().enumerate() {
            let an = &self.anchor[i];
            let (re, im) = s.response(&x, u, j);
            let gamma = z[self.gamma_index(i)];
            let beta = z[self.beta_index(u)];
            let lower = 2.0 * (an.re * re + an.im * im) - an.power;
            values.push(an.a * gamma * gamma + an.b * beta * beta - lower);
        }
        let r = z[self.rate_index()];
        for (_, set) in &s.mac {
            let sum: f64 = set.iter().map(|&i| z[self.gamma_index(i)]).sum();
            if !(1.0 + sum > 0.0) {
                return false;
            }
            values.push(set.len() as f64 * r - sum.ln_1p() / LN2);
        }
        true
    }

    fn accumulate(&self, z: &DVector<f64>, values: &[f64], grad: &mut DVector<f64>, hess: &mut DMatrix<f64>) {
        let s = self.s;
        let l2 = 2 * s.l;
        let x = z.rows(0, s.xdim).into_owned();
        let mut v = values.iter().copied();
        let mut g: Vec<(usize, f64)> = Vec::new();

        // Power budget.
        let f = v.next().expect("power constraint");
        g.clear();
        g.extend((0..s.xdim).map(|i| (i, 2.0 * x[i])));
        add_first_order(&g, f, grad, hess);
        for i in 0..s.xdim {
            hess[(i, i)] += 2.0 / -f;
        }

        // Interference bounds.
        for u in 0..s.users() {
            let f = v.next().expect("interference constraint");
            g.clear();
            for &j in &s.interference[u] {
                let (re, im) = s.response(&x, u, j);
                let off = l2 * j;
                g.extend((0..l2).map(|i| (off + i, 2.0 * (re * s.p[u][i] + im * s.q[u][i]))));
            }
            g.push((self.beta_index(u), -1.0));
            add_first_order(&g, f, grad, hess);
            let w = 2.0 / -f;
            for &j in &s.interference[u] {
                let off = l2 * j;
                for a in 0..l2 {
                    for b in 0..l2 {
                        hess[(off + a, off + b)] += w * (s.p[u][a] * s.p[u][b] + s.q[u][a] * s.q[u][b]);
                    }
                }
            }
        }

        // Convexified SINR constraints.
        for (i, &(u, j)) in s.pairs.iter().enumerate() {
            let f = v.next().expect("SINR constraint");
            let an = &self.anchor[i];
            let (gi, bi) = (self.gamma_index(i), self.beta_index(u));
            g.clear();
            let off = l2 * j;
            g.extend((0..l2).map(|c| (off + c, -2.0 * (an.re * s.p[u][c] + an.im * s.q[u][c]))));
            g.push((gi, 2.0 * an.a * z[gi]));
            g.push((bi, 2.0 * an.b * z[bi]));
            add_first_order(&g, f, grad, hess);
            hess[(gi, gi)] += 2.0 * an.a / -f;
            hess[(bi, bi)] += 2.0 * an.b / -f;
        }

        // MAC region.
        let ri = self.rate_index();
        for (_, set) in &s.mac {
            let f = v.next().expect("MAC constraint");
            let total = 1.0 + set.iter().map(|&i| z[self.gamma_index(i)]).sum::<f64>();
            let dg = -1.0 / (total * LN2);
            g.clear();
            g.push((ri, set.len() as f64));
            g.extend(set.iter().map(|&i| (self.gamma_index(i), dg)));
            add_first_order(&g, f, grad, hess);
            let curvature = 1.0 / (total * total * LN2) / -f;
            for &a in set {
                for &b in set {
                    hess[(self.gamma_index(a), self.gamma_index(b))] += curvature;
                }
            }
        }
    }
}
