//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use d2dcc::beamforming::{solve_max_min, t_dl, MessagePlan};
use d2dcc::channel::{self, Geometry};
use d2dcc::combinatorics::{binomial, place, UserSet};
use d2dcc::complexity::{self, count_actual, limited_selection, uniform_selection, ComplexityInput};
use d2dcc::d2d::{remaining_message_plan, D2DSchedule};
use d2dcc::simrunner::{self, mean_stderr, Experiment, Scheme, Sweep, TrialOptions};
use d2dcc::{Execution, ScenarioConfig, SolverOptions};
use num_complex::Complex64;

type Outcome = Result<String, String>;

/// Name, runtime limit and check.
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_d2dcc")
}

fn hdot(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    h.iter().zip(w).map(|(a, b)| a.conj() * b).sum()
}

/// Smallest MAC-region rate bound over all users and all nonempty subsets of
/// their needed messages, computed from the received powers directly.
fn audited_rate(plan: &MessagePlan, h: &[Vec<Complex64>], w: &[Vec<Complex64>], n0: f64) -> f64 {
    let mut worst = f64::INFINITY;
    for k in 0..plan.users() {
        let mut useful = Vec::new();
        let mut noise = n0;
        for (j, m) in plan.messages().iter().enumerate() {
            let p = hdot(&h[k], &w[j]).norm_sqr();
            if m.recipients.contains(k) {
                useful.push(p);
            } else if !m.members.contains(k) {
                noise += p;
            }
        }
        for mask in 1u32..(1 << useful.len()) {
            let s: f64 = (0..useful.len()).filter(|b| mask >> b & 1 == 1).map(|b| useful[b]).sum();
            worst = worst.min((1.0 + s / noise).log2() / mask.count_ones() as f64);
        }
    }
    worst
}

fn c1_golden() -> Outcome {
    let out = Command::new(bin()).arg("selftest").output().map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    if !out.status.success() {
        return Err(format!("selftest exited with {}:\n{text}", out.status));
    }
    for expected in [
        "A_3 ⊕ C_1",
        "A_{2,4} ⊕ B_{1,4} ⊕ D_{1,2}",
        "user 1 sends B^1_{1,3} ⊕ C^1_{1,2}",
        "user 2 sends A^1_{2,3} ⊕ C^2_{1,2}",
        "user 3 sends A^2_{2,3} ⊕ B^2_{1,3}",
        "[3, 3, 3, 7] = 16",
    ] {
        if !text.contains(expected) {
            return Err(format!("selftest output lacks `{expected}`"));
        }
    }
    if text.lines().any(|l| !l.starts_with("PASS")) {
        return Err(format!("selftest reported a failure:\n{text}"));
    }
    Ok(format!("{} golden checks", text.lines().count()))
}

fn c2_halving() -> Outcome {
    let at = |i| complexity::bounds(&ComplexityInput::new(1, 9, i, 0)).map_err(|e| e.to_string());
    let (b0, b5) = (at(0)?, at(5)?);
    let mac = b5.mac_min as f64 / b0.mac_min as f64;
    let quad = b5.q_max as f64 / b0.q_max as f64;
    let detail = format!(
        "MAC {} -> {} (ratio {mac:.4}), quadratic {} -> {} (ratio {quad:.4})",
        b0.mac_min, b5.mac_min, b0.q_max, b5.q_max
    );
    if (0.49..=0.51).contains(&mac) && (0.78..=0.82).contains(&quad) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn plan_for(n: usize, tau: usize, groups: &[UserSet]) -> Result<MessagePlan, String> {
    let p = place(n, n, tau as f64, tau).map_err(|e| e.to_string())?;
    let demands: Vec<usize> = (0..n).collect();
    let s = D2DSchedule::new(&p, &demands, 1.0)
        .and_then(|s| s.with_groups(groups.iter().copied()))
        .map_err(|e| e.to_string())?;
    remaining_message_plan(&s).map_err(|e| e.to_string())
}

/// Per-user needs of the concentrated construction when users of the core
/// set only count groups inside the core. The core is every user below the
/// highest one that appears.
fn limited_needs(n: usize, tau: usize, groups: &[UserSet]) -> Vec<u64> {
    let w = binomial(n as u64 - 1, tau as u64);
    let core = groups.iter().filter_map(|&g| UserSet::max(g)).max().map_or(UserSet::EMPTY, UserSet::full);
    (0..n)
        .map(|k| {
            let counted =
                groups.iter().filter(|g| g.contains(k) && (!core.contains(k) || g.is_subset_of(core))).count() as u64;
            w - counted
        })
        .collect()
}

fn c3_oracles() -> Outcome {
    let mut cases = 0;
    for tau in 1..=2usize {
        for l in 2..=5usize {
            let n = tau + l;
            let m_t = binomial(n as u64, tau as u64 + 1) as usize;
            for i in 0..=m_t {
                let b = complexity::bounds(&ComplexityInput::new(tau, l, i, 0)).map_err(|e| e.to_string())?;
                let uniform =
                    uniform_selection(n, tau, i).ok_or(format!("no uniform selection for τ={tau} L={l} i={i}"))?;
                let (mac, quad) = count_actual(&plan_for(n, tau, &uniform)?);
                if mac != b.mac_min || quad != b.q_max {
                    return Err(format!(
                        "τ={tau} L={l} i={i}: uniform gives ({mac}, {quad}), bounds ({}, {})",
                        b.mac_min, b.q_max
                    ));
                }
                let limited = limited_selection(n, tau, i).ok_or(format!("no limited selection for i={i}"))?;
                let enumerated: u128 = limited_needs(n, tau, &limited).iter().map(|&w| (1u128 << w) - 1).sum();
                if enumerated != b.mac_max {
                    return Err(format!(
                        "τ={tau} L={l} i={i}: limited construction counts {enumerated}, bound {}",
                        b.mac_max
                    ));
                }
                let (actual, _) = count_actual(&plan_for(n, tau, &limited)?);
                if !(b.mac_min <= actual && actual <= b.mac_max) {
                    return Err(format!(
                        "τ={tau} L={l} i={i}: delivered plan has {actual} constraints outside the bounds"
                    ));
                }
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} (τ, L, i) cases"))
}

fn c4_solver() -> Outcome {
    let opts = SolverOptions::default();
    let mut audited = 0;
    for (k, n, m, tau, groups) in [(3, 3, 1.0, 1, vec![]), (4, 4, 2.0, 2, vec![UserSet::from_labels(&[1, 2, 3])])] {
        let cfg = ScenarioConfig::new(k, n, m, 2);
        let plan = plan_for(k, tau, &groups)?;
        for seed in 0..50 {
            let ch = channel::sample(&cfg, seed).map_err(|e| e.to_string())?;
            let sol = solve_max_min(&plan, &ch.dl_channels, cfg.p_t(), cfg.n0, &opts)
                .map_err(|e| format!("K={k} seed {seed}: {e}"))?;
            let r = sol.rate;
            let audit = audited_rate(&plan, &ch.dl_channels, &sol.beamformers, cfg.n0);
            if audit < r - 1e-6 * r.max(1.0) {
                return Err(format!("K={k} seed {seed}: claimed rate {r}, audited {audit}"));
            }
            let power: f64 = sol.beamformers.iter().flatten().map(|x| x.norm_sqr()).sum();
            if (power - cfg.p_t()).abs() > 1e-8 * cfg.p_t() {
                return Err(format!("K={k} seed {seed}: power {power} vs budget {}", cfg.p_t()));
            }
            if sol.trace.windows(2).any(|w| w[1] < w[0]) {
                return Err(format!("K={k} seed {seed}: objective trace decreases: {:?}", sol.trace));
            }
            audited += 1;
        }
    }
    Ok(format!("{audited} instances audited"))
}

fn c5_single_user() -> Outcome {
    let cfg = ScenarioConfig::new(4, 4, 2.0, 2);
    let pairs: Vec<UserSet> = [[1, 2], [1, 3], [2, 3]].iter().map(|p| UserSet::from_labels(p)).collect();
    let plan = plan_for(4, 2, &pairs)?;
    if plan.active_users() != vec![3] {
        return Err(format!("expected only user 4 to remain, got {:?}", plan.active_users()));
    }
    let single = MessagePlan::from_sets(3, &[(UserSet::from_labels(&[1, 2]), UserSet::from_labels(&[2]))])
        .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let ch = channel::sample(&cfg, seed).map_err(|e| e.to_string())?;
        for (plan, user, h) in [(&plan, 3, &ch.dl_channels), (&single, 1, &ch.dl_channels)] {
            let h = &h[..plan.users()];
            let sol =
                solve_max_min(plan, h, cfg.p_t(), cfg.n0, &SolverOptions::default()).map_err(|e| e.to_string())?;
            let norm: f64 = h[user].iter().map(|x| x.norm_sqr()).sum();
            let mrt = (1.0 + norm * cfg.p_t() / cfg.n0).log2();
            let count = plan.len() as f64;
            let unicast = sol.unicast_rate.ok_or("no closed-form rate reported")?;
            let audit = audited_rate(plan, h, &sol.beamformers, cfg.n0) * count;
            let time = t_dl(plan, Some(&sol), 1.0);
            for got in [unicast, sol.rate * count, audit, count / time] {
                worst = worst.max((got - mrt).abs() / mrt);
            }
        }
    }
    if worst <= 1e-9 {
        Ok(format!("max relative deviation {worst:.2e}"))
    } else {
        Err(format!("max relative deviation {worst:.2e}"))
    }
}

fn opts() -> TrialOptions {
    TrialOptions { solver: SolverOptions::default(), exec: Execution::Parallel }
}

fn run(cfg: &ScenarioConfig, sweep: Option<&Sweep>, schemes: &[Scheme], trials: usize) -> Result<Experiment, String> {
    simrunner::run_experiment(cfg, sweep, schemes, trials, 1, &opts()).map_err(|e| e.to_string())
}

fn total_or_inf(r: &simrunner::DeliveryReport) -> f64 {
    if r.ok() {
        r.total_time()
    } else {
        f64::INFINITY
    }
}

fn c6_dominance() -> Outcome {
    let cfg = ScenarioConfig::default();
    let schemes = [Scheme::HybridExhaustive, Scheme::MulticastOnly, Scheme::D2dOnly];
    let e = run(&cfg, None, &schemes, 100)?;
    let h = e.reports(0, Scheme::HybridExhaustive);
    let mc = e.reports(0, Scheme::MulticastOnly);
    let d = e.reports(0, Scheme::D2dOnly);
    let mut failed = 0;
    for t in 0..h.len() {
        if !h[t].ok() {
            failed += 1;
        }
        let ht = total_or_inf(h[t]);
        if !(ht <= total_or_inf(mc[t]) && ht <= total_or_inf(d[t])) {
            return Err(format!(
                "trial {t}: hybrid {ht} vs multicast {} and d2d {}",
                total_or_inf(mc[t]),
                total_or_inf(d[t])
            ));
        }
    }
    if failed > 0 {
        return Err(format!("{failed} hybrid trials failed"));
    }
    Ok(format!("{} paired trials", h.len()))
}

fn c7_heuristic() -> Outcome {
    let cfg = ScenarioConfig::new(4, 4, 2.0, 2);
    let sweep = Sweep { name: "inner_radius_m".into(), values: vec![2.0, 10.0, 50.0] };
    let e = run(&cfg, Some(&sweep), &[Scheme::HybridExhaustive, Scheme::HybridHeuristic], 100)?;
    let mut parts = Vec::new();
    let mut pass = true;
    for &r in &sweep.values {
        let ex = e.summary_for(Some(r), Scheme::HybridExhaustive).unwrap();
        let he = e.summary_for(Some(r), Scheme::HybridHeuristic).unwrap();
        let ratio = he.mean_rate / ex.mean_rate;
        pass &= ratio >= 0.95 && ex.n_failed == 0 && he.n_failed == 0;
        parts.push(format!("r={r}: {ratio:.4} ({}/{} failed)", ex.n_failed, he.n_failed));
    }
    let detail = format!("heuristic/exhaustive mean rate {}", parts.join(", "));
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Mean and standard error of the per-trial difference `a − b`.
fn paired(a: &[&simrunner::DeliveryReport], b: &[&simrunner::DeliveryReport]) -> (f64, f64, usize) {
    let diffs: Vec<f64> =
        a.iter().zip(b).filter(|(x, y)| x.ok() && y.ok()).map(|(x, y)| x.per_user_rate - y.per_user_rate).collect();
    let (m, s) = mean_stderr(&diffs);
    (m, s, diffs.len())
}

fn c8_radius_sweep() -> Outcome {
    let cfg = ScenarioConfig::default();
    let grid = vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0];
    let sweep = Sweep { name: "inner_radius_m".into(), values: grid.clone() };
    let schemes = [Scheme::MulticastOnly, Scheme::D2dOnly, Scheme::HybridExhaustive];
    let e = run(&cfg, Some(&sweep), &schemes, 200)?;
    let mean = |r: f64, s| e.summary_for(Some(r), s).unwrap().mean_rate;
    let mut problems = Vec::new();
    let mut notes = Vec::new();
    for &r in grid.iter().filter(|&&r| r <= 2.0) {
        let gain = mean(r, Scheme::HybridExhaustive) / mean(r, Scheme::MulticastOnly);
        notes.push(format!("gain at r={r}: {gain:.3}"));
        if gain < 1.10 {
            problems.push(format!("hybrid gain {gain:.3} < 1.10 at r={r}"));
        }
    }
    let far = mean(50.0, Scheme::HybridExhaustive) / mean(50.0, Scheme::MulticastOnly);
    notes.push(format!("ratio at r=50: {far:.4}"));
    if (far - 1.0).abs() > 0.02 {
        problems.push(format!("hybrid/multicast {far:.4} at r=50"));
    }
    for j in 0..grid.len() - 1 {
        let (d, se, _) = paired(&e.reports(j, Scheme::D2dOnly), &e.reports(j + 1, Scheme::D2dOnly));
        if !(d > 3.0 * se) {
            problems.push(format!(
                "d2d-only drop {d:.4e} from r={} to r={} is within 3σ ({se:.2e})",
                grid[j],
                grid[j + 1]
            ));
        }
    }
    let failed: usize = e.summary.iter().map(|r| r.n_failed).sum();
    notes.push(format!("{failed} failed trials"));
    if problems.is_empty() {
        Ok(notes.join(", "))
    } else {
        Err(problems.join("; "))
    }
}

fn c9_general_groups() -> Outcome {
    let cfg = ScenarioConfig {
        geometry: Geometry::Fixed,
        dl_ref_snr_db: 0.0,
        attenuated_pairs: vec![[1, 3], [2, 4]],
        attenuation_db: 10.0,
        ..ScenarioConfig::new(4, 4, 2.0, 2)
    };
    let grid: Vec<f64> = (-2..=6).map(|x| x as f64 * 5.0).collect();
    let sweep = Sweep { name: "d2d_ref_snr_db".into(), values: grid.clone() };
    let e = run(&cfg, Some(&sweep), &[Scheme::HybridHeuristicGeneral, Scheme::HybridHeuristic], 200)?;
    let mut problems = Vec::new();
    let mut best_gain = f64::NEG_INFINITY;
    for (j, snr) in grid.iter().enumerate() {
        let (d, se, n) = paired(&e.reports(j, Scheme::HybridHeuristicGeneral), &e.reports(j, Scheme::HybridHeuristic));
        best_gain = best_gain.max(d);
        if n == 0 || d < -3.0 * se {
            problems.push(format!("{snr} dB: general − (τ+1)-only = {d:.4e} ± {se:.2e} over {n} trials"));
        }
    }
    if problems.is_empty() {
        Ok(format!("{} SNR points, largest mean gain {best_gain:.4e}", grid.len()))
    } else {
        Err(problems.join("; "))
    }
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run_twice = |name: &str, args: &[&str]| -> Result<(), String> {
        let mut outputs = Vec::new();
        for pass in 0..2 {
            let path = dir.path().join(format!("{name}-{pass}.csv"));
            let status = Command::new(bin()).args(args).arg("--out").arg(&path).status().map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("`{}` exited with {status}", args.join(" ")));
            }
            outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            return Err(format!("`{}` output differs between runs", args.join(" ")));
        }
        Ok(())
    };
    let config = write_config(dir.path())?;
    run_twice(
        "run",
        &[
            "run",
            "--config",
            &config,
            "--trials",
            "4",
            "--seed",
            "11",
            "--sweep",
            "inner_radius_m",
            "--values",
            "1,10,50",
        ],
    )?;
    run_twice("run-seq", &["run", "--config", &config, "--trials", "1", "--seed", "11", "--sequential"])?;
    run_twice("complexity", &["complexity", "--tau", "1", "--L", "9"])?;
    let trial = |_: ()| {
        Command::new(bin())
            .args(["trial", "--config", &config, "--seed", "5"])
            .output()
            .map(|o| o.stdout)
            .map_err(|e| e.to_string())
    };
    if trial(())? != trial(())? {
        return Err("`trial` output differs between runs".into());
    }
    Ok("run, complexity and trial outputs byte-identical".into())
}

fn write_config(dir: &Path) -> Result<String, String> {
    let path = dir.join("k4.toml");
    let cfg = ScenarioConfig::new(4, 4, 2.0, 2);
    std::fs::write(&path, cfg.to_toml_string()).map_err(|e| e.to_string())?;
    Ok(path.to_string_lossy().into_owned())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("golden combinatorics", Duration::from_secs(1), c1_golden),
        ("complexity halving", Duration::from_secs(1), c2_halving),
        ("formula/oracle equivalence", Duration::from_secs(10), c3_oracles),
        ("solver soundness", Duration::from_secs(300), c4_solver),
        ("closed-form corner", Duration::from_secs(1), c5_single_user),
        ("exhaustive dominance", Duration::from_secs(1800), c6_dominance),
        ("heuristic quality", Duration::from_secs(3600), c7_heuristic),
        ("radius sweep shape", Duration::from_secs(7200), c8_radius_sweep),
        ("general-group benefit", Duration::from_secs(3600), c9_general_groups),
        ("determinism", Duration::from_secs(600), c10_determinism),
    ];
    let mut failures = 0;
    for (n, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if elapsed <= limit => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {elapsed:.2?}, limit {limit:?}")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!("criterion {:>2} {status} [{elapsed:.2?}] {name}: {detail}", n + 1);
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
