//! Monte Carlo driver: one delivery pipeline per trial and scheme, paired
//! across schemes by seed, aggregated into per-scheme means.

mod selftest;

use std::fmt;
use std::io::Write;

use clap::ValueEnum;
use serde::Serialize;

use crate::beamforming::{self, BeamformerSolution, SolverOptions};
use crate::channel::{self, ChannelRealization, ScenarioConfig};
use crate::combinatorics::{subsets_of_size, UserSet};
use crate::d2d::{self, remaining_message_plan, D2DSchedule};
use crate::mode_select::{exhaustive_select, heuristic_select};
use crate::{Error, Execution, Result};

pub use selftest::{selftest, SelfTestCheck};

/// Delivery schemes compared by the runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Downlink multicast only.
    MulticastOnly,
    /// Every `(τ+1)`-group exchanges its subfiles over D2D, no downlink.
    D2dOnly,
    /// Best subset of `(τ+1)`-groups by exhaustive search.
    HybridExhaustive,
    /// Greedy selection over `(τ+1)`-groups.
    HybridHeuristic,
    /// Greedy selection that also tries smaller groups.
    HybridHeuristicGeneral,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::MulticastOnly,
        Scheme::D2dOnly,
        Scheme::HybridExhaustive,
        Scheme::HybridHeuristic,
        Scheme::HybridHeuristicGeneral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::MulticastOnly => "multicast-only",
            Scheme::D2dOnly => "d2d-only",
            Scheme::HybridExhaustive => "hybrid-exhaustive",
            Scheme::HybridHeuristic => "hybrid-heuristic",
            Scheme::HybridHeuristicGeneral => "hybrid-heuristic-general",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| Error::Parameter(format!("unknown scheme `{s}`")))
    }
}

/// Options shared by every trial.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrialOptions {
    pub solver: SolverOptions,
    /// Used for the exhaustive search and for the trials of an experiment.
    pub exec: Execution,
}

/// Beamformer solver diagnostics of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    pub rate: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
    pub closed_form: bool,
}

impl From<&BeamformerSolution> for SolverDiagnostics {
    fn from(s: &BeamformerSolution) -> Self {
        SolverDiagnostics {
            rate: s.rate,
            iterations: s.iterations,
            converged: s.converged,
            restarts: s.restarts,
            closed_form: s.unicast_rate.is_some(),
        }
    }
}

/// Outcome of one scheme on one channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryReport {
    pub scheme: Scheme,
    pub seed: u64,
    pub t_d2d: f64,
    pub t_dl: f64,
    /// `F / (t_d2d + t_dl)`; zero for failed trials.
    pub per_user_rate: f64,
    /// D2D groups used.
    pub groups: Vec<UserSet>,
    /// Downlink messages left after D2D.
    pub dl_messages: usize,
    pub solver: Option<SolverDiagnostics>,
    /// Selection effort: masks evaluated (exhaustive) or candidates
    /// examined (heuristic).
    pub selection_steps: usize,
    /// Why the trial failed, if it did.
    pub error: Option<String>,
}

impl DeliveryReport {
    fn new(scheme: Scheme, seed: u64) -> Self {
        DeliveryReport {
            scheme,
            seed,
            t_d2d: 0.0,
            t_dl: 0.0,
            per_user_rate: 0.0,
            groups: Vec::new(),
            dl_messages: 0,
            solver: None,
            selection_steps: 0,
            error: None,
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn total_time(&self) -> f64 {
        self.t_d2d + self.t_dl
    }

    fn finish(mut self, f: f64) -> Self {
        let total = self.total_time();
        if self.error.is_none() && !(total.is_finite() && total > 0.0) {
            self.error = Some(format!("delivery time {total} is not positive and finite"));
        }
        self.per_user_rate = if self.error.is_none() { f / total } else { 0.0 };
        self
    }
}

impl fmt::Display for DeliveryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scheme         {}", self.scheme)?;
        writeln!(f, "seed           {}", self.seed)?;
        let groups: Vec<String> = self.groups.iter().map(ToString::to_string).collect();
        writeln!(f, "d2d groups     [{}]", groups.join(" "))?;
        writeln!(f, "dl messages    {}", self.dl_messages)?;
        writeln!(f, "t_d2d          {:.6e}", self.t_d2d)?;
        writeln!(f, "t_dl           {:.6e}", self.t_dl)?;
        writeln!(f, "per-user rate  {:.6e}", self.per_user_rate)?;
        if let Some(s) = &self.solver {
            writeln!(
                f,
                "solver         rate {:.6e}, {} iterations, converged {}, {} restarts{}",
                s.rate,
                s.iterations,
                s.converged,
                s.restarts,
                if s.closed_form { ", closed form" } else { "" }
            )?;
        }
        if self.selection_steps > 0 {
            writeln!(f, "selection      {} steps", self.selection_steps)?;
        }
        if let Some(e) = &self.error {
            writeln!(f, "error          {e}")?;
        }
        Ok(())
    }
}

/// Errors that mark one trial as failed instead of aborting the run.
fn is_trial_failure(e: &Error) -> bool {
    matches!(e, Error::Solver(_) | Error::ZeroRate(_) | Error::ZeroChannel(_))
}

fn flag(mut report: DeliveryReport, e: Error) -> Result<DeliveryReport> {
    if is_trial_failure(&e) {
        report.error = Some(e.to_string());
        Ok(report)
    } else {
        Err(e)
    }
}

/// Downlink phase for whatever the schedule leaves pending.
fn downlink(
    report: &mut DeliveryReport,
    schedule: &D2DSchedule,
    chans: &ChannelRealization,
    config: &ScenarioConfig,
    opts: &SolverOptions,
) -> Result<()> {
    let plan = remaining_message_plan(schedule)?;
    report.dl_messages = plan.len();
    if plan.is_empty() {
        report.t_dl = 0.0;
        return Ok(());
    }
    let solution = beamforming::solve_max_min(&plan, &chans.dl_channels, config.p_t(), config.n0, opts)?;
    report.t_dl = beamforming::t_dl(&plan, Some(&solution), schedule.unit_bits());
    report.solver = Some((&solution).into());
    Ok(())
}

/// Runs one scheme on an already sampled channel.
pub fn run_trial_on(
    config: &ScenarioConfig,
    chans: &ChannelRealization,
    seed: u64,
    scheme: Scheme,
    opts: &TrialOptions,
) -> Result<DeliveryReport> {
    config.check_regime()?;
    let placement = config.placement()?;
    let demands = config.default_demands();
    let mut report = DeliveryReport::new(scheme, seed);

    let outcome: Result<()> = (|| {
        match scheme {
            Scheme::MulticastOnly => {
                let schedule = D2DSchedule::for_config(config, &demands)?;
                downlink(&mut report, &schedule, chans, config, &opts.solver)?;
            }
            Scheme::D2dOnly => {
                report.groups = subsets_of_size(config.k, placement.tau() + 1);
                report.t_d2d = d2d::d2d_only_baseline(&demands, &placement, chans, config)?;
            }
            Scheme::HybridExhaustive => {
                let best = exhaustive_select(&demands, &placement, chans, config, &opts.solver, opts.exec)?;
                report.groups = best.schedule.group_sets();
                report.t_d2d = best.t_d2d;
                report.t_dl = best.t_dl;
                report.dl_messages = remaining_message_plan(&best.schedule)?.len();
                report.solver = best.solution.as_ref().map(Into::into);
                report.selection_steps = best.evaluations;
            }
            Scheme::HybridHeuristic | Scheme::HybridHeuristicGeneral => {
                let general = scheme == Scheme::HybridHeuristicGeneral;
                let sel = heuristic_select(&demands, &placement, chans, config, general)?;
                report.groups = sel.schedule.group_sets();
                report.selection_steps = sel.iterations;
                report.t_d2d = d2d::t_d2d(&sel.schedule, chans, config)?;
                downlink(&mut report, &sel.schedule, chans, config, &opts.solver)?;
            }
        }
        Ok(())
    })();
    match outcome {
        Ok(()) => Ok(report.finish(config.f)),
        Err(e) => flag(report, e),
    }
}

/// Samples the channel for `seed` and runs one scheme end to end.
pub fn run_trial(config: &ScenarioConfig, seed: u64, scheme: Scheme, opts: &TrialOptions) -> Result<DeliveryReport> {
    config.check_regime()?;
    let chans = channel::sample(config, seed)?;
    run_trial_on(config, &chans, seed, scheme, opts)
}

/// A parameter sweep: config key and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub name: String,
    pub values: Vec<f64>,
}

/// One per-trial result of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub sweep_value: Option<f64>,
    pub trial: usize,
    pub report: DeliveryReport,
}

/// Aggregate of one scheme at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub sweep_value: Option<f64>,
    pub scheme: Scheme,
    pub mean_rate: f64,
    pub stderr_rate: f64,
    pub mean_t_d2d: f64,
    pub mean_t_dl: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    /// Ordered by sweep value, then trial, then scheme.
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

impl Experiment {
    /// Per-trial reports of `scheme` at the `index`-th sweep value, in
    /// trial order.
    pub fn reports(&self, value_index: usize, scheme: Scheme) -> Vec<&DeliveryReport> {
        let values = self.sweep_values();
        let value = values.get(value_index).copied().flatten();
        self.records
            .iter()
            .filter(|r| r.report.scheme == scheme && same_value(r.sweep_value, value))
            .map(|r| &r.report)
            .collect()
    }

    fn sweep_values(&self) -> Vec<Option<f64>> {
        let mut values: Vec<Option<f64>> = Vec::new();
        for r in &self.records {
            if !values.iter().any(|&v| same_value(v, r.sweep_value)) {
                values.push(r.sweep_value);
            }
        }
        values
    }

    pub fn summary_for(&self, sweep_value: Option<f64>, scheme: Scheme) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.scheme == scheme && same_value(r.sweep_value, sweep_value))
    }
}

fn same_value(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x.to_bits() == y.to_bits(),
        (None, None) => true,
        _ => false,
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn summarize(sweep_value: Option<f64>, scheme: Scheme, reports: &[&DeliveryReport]) -> SummaryRow {
    let ok: Vec<&&DeliveryReport> = reports.iter().filter(|r| r.ok()).collect();
    let rates: Vec<f64> = ok.iter().map(|r| r.per_user_rate).collect();
    let (mean_rate, stderr_rate) = mean_stderr(&rates);
    let mean_of = |f: fn(&DeliveryReport) -> f64| mean_stderr(&ok.iter().map(|r| f(r)).collect::<Vec<_>>()).0;
    SummaryRow {
        sweep_value,
        scheme,
        mean_rate,
        stderr_rate,
        mean_t_d2d: mean_of(|r| r.t_d2d),
        mean_t_dl: mean_of(|r| r.t_dl),
        n_ok: ok.len(),
        n_failed: reports.len() - ok.len(),
    }
}

/// Runs `trials` paired trials of every scheme at every sweep value. Trial
/// `t` uses seed `seed + t` at every sweep value and for every scheme.
pub fn run_experiment(
    config: &ScenarioConfig,
    sweep: Option<&Sweep>,
    schemes: &[Scheme],
    trials: usize,
    seed: u64,
    opts: &TrialOptions,
) -> Result<Experiment> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be at least 1".into()));
    }
    if schemes.is_empty() {
        return Err(Error::Parameter("no schemes to run".into()));
    }
    let points: Vec<(Option<f64>, ScenarioConfig)> = match sweep {
        None => vec![(None, config.clone())],
        Some(s) => {
            if s.values.is_empty() {
                return Err(Error::Parameter(format!("sweep of `{}` has no values", s.name)));
            }
            s.values
                .iter()
                .map(|&v| {
                    let mut c = config.clone();
                    c.set_param(&s.name, v).map(|()| (Some(v), c))
                })
                .collect::<Result<_>>()?
        }
    };
    for (_, c) in &points {
        c.check_regime()?;
    }

    // Trials run in parallel; the exhaustive search inside each stays
    // sequential so the work split is at one level only.
    let inner = TrialOptions { exec: Execution::Sequential, ..*opts };
    let items = points.len() * trials;
    let results = opts.exec.map_indexed(items, |idx| -> Result<Vec<TrialRecord>> {
        let (p, trial) = (idx / trials, idx % trials);
        let (value, cfg) = &points[p];
        let s = seed.wrapping_add(trial as u64);
        let chans = channel::sample(cfg, s)?;
        schemes
            .iter()
            .map(|&scheme| {
                run_trial_on(cfg, &chans, s, scheme, &inner).map(|report| TrialRecord {
                    sweep_value: *value,
                    trial,
                    report,
                })
            })
            .collect()
    });
    let mut records = Vec::with_capacity(items * schemes.len());
    for r in results {
        records.extend(r?);
    }

    let mut summary = Vec::new();
    for (p, (value, _)) in points.iter().enumerate() {
        let slice = &records[p * trials * schemes.len()..(p + 1) * trials * schemes.len()];
        for &scheme in schemes {
            let reports: Vec<&DeliveryReport> =
                slice.iter().filter(|r| r.report.scheme == scheme).map(|r| &r.report).collect();
            summary.push(summarize(*value, scheme, &reports));
        }
    }
    Ok(Experiment { records, summary })
}

/// Writes the summary table with columns `sweep_value, scheme, mean_rate,
/// stderr_rate, mean_t_d2d, mean_t_dl, n_ok, n_failed`.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig6() -> ScenarioConfig {
        ScenarioConfig { d2d_ref_snr_db: 10.0, dl_ref_snr_db: 10.0, ..ScenarioConfig::new(3, 3, 1.0, 2) }
    }

    fn opts() -> TrialOptions {
        TrialOptions { solver: SolverOptions::default(), exec: Execution::Sequential }
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            assert_eq!(<Scheme as ValueEnum>::from_str(s.name(), false).unwrap(), s);
        }
        assert!("hybrid".parse::<Scheme>().is_err());
    }

    #[test]
    fn multicast_only_sends_every_pair_message() {
        let r = run_trial(&fig6(), 3, Scheme::MulticastOnly, &opts()).unwrap();
        assert!(r.ok());
        assert_eq!(r.t_d2d, 0.0);
        assert_eq!(r.dl_messages, 3);
        assert!(r.groups.is_empty());
        assert!((r.per_user_rate - 1.0 / r.t_dl).abs() < 1e-12 * r.per_user_rate);
    }

    #[test]
    fn d2d_only_has_no_downlink() {
        let cfg = fig6();
        let r = run_trial(&cfg, 3, Scheme::D2dOnly, &opts()).unwrap();
        assert!(r.ok());
        assert_eq!(r.t_dl, 0.0);
        assert_eq!(r.groups.len(), 3);
        let chans = channel::sample(&cfg, 3).unwrap();
        let expected = d2d::d2d_only_baseline(&[0, 1, 2], &cfg.placement().unwrap(), &chans, &cfg).unwrap();
        assert_eq!(r.t_d2d, expected);
    }

    #[test]
    fn exhaustive_dominates_corners() {
        let cfg = fig6();
        for seed in 0..5 {
            let chans = channel::sample(&cfg, seed).unwrap();
            let t = |s| run_trial_on(&cfg, &chans, seed, s, &opts()).unwrap();
            let (h, mc, d) = (t(Scheme::HybridExhaustive), t(Scheme::MulticastOnly), t(Scheme::D2dOnly));
            assert!(h.total_time() <= mc.total_time());
            assert!(h.total_time() <= d.total_time());
        }
    }

    #[test]
    fn zero_d2d_rate_is_flagged_not_fatal() {
        let cfg = fig6();
        let mut chans = channel::sample(&cfg, 1).unwrap();
        chans.d2d_gains[0][1] = num_complex::Complex64::new(0.0, 0.0);
        let r = run_trial_on(&cfg, &chans, 1, Scheme::D2dOnly, &opts()).unwrap();
        assert!(!r.ok());
        assert_eq!(r.per_user_rate, 0.0);
    }

    #[test]
    fn regime_violation_is_an_error() {
        let cfg = ScenarioConfig::new(4, 4, 1.0, 2);
        assert!(run_trial(&cfg, 0, Scheme::MulticastOnly, &opts()).is_err());
    }

    #[test]
    fn experiment_is_paired_and_deterministic() {
        let cfg = fig6();
        let sweep = Sweep { name: "inner_radius_m".into(), values: vec![1.0, 20.0] };
        let schemes = [Scheme::MulticastOnly, Scheme::HybridHeuristic];
        let run = |exec| {
            let e = run_experiment(&cfg, Some(&sweep), &schemes, 3, 7, &TrialOptions { exec, ..opts() }).unwrap();
            let mut buf = Vec::new();
            write_summary_csv(&e.summary, &mut buf).unwrap();
            (e, buf)
        };
        let (e, a) = run(Execution::Sequential);
        let (_, b) = run(Execution::Parallel);
        assert_eq!(a, b);
        assert_eq!(e.summary.len(), 4);
        assert_eq!(e.records.len(), 12);
        let seeds: Vec<u64> = e.reports(1, Scheme::MulticastOnly).iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![7, 8, 9]);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(
            "sweep_value,scheme,mean_rate,stderr_rate,mean_t_d2d,mean_t_dl,n_ok,n_failed\n1.0,multicast-only,"
        ));
    }

    #[test]
    fn summary_statistics() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[2.0]), (2.0, 0.0));
        assert!(mean_stderr(&[]).0.is_nan());
    }

    #[test]
    fn bad_sweeps_are_rejected() {
        let cfg = fig6();
        let bad = Sweep { name: "K".into(), values: vec![1.0] };
        assert!(run_experiment(&cfg, Some(&bad), &[Scheme::MulticastOnly], 1, 0, &opts()).is_err());
        assert!(run_experiment(&cfg, None, &[Scheme::MulticastOnly], 0, 0, &opts()).is_err());
    }
}
