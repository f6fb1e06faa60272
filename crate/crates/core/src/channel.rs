//! Scenario parameters, geometry, fading and point-to-point rate formulas.
//!
//! All rates are in bits per channel use (log base 2), all sizes in bits and
//! all times in channel uses.

use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{self, Placement, UserSet};
use crate::{Error, Result};

/// How user positions and path losses are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    /// Users uniform in an inner disc of radius `r` whose center is uniform
    /// in the cell, so every user stays inside the cell of radius `R`.
    #[default]
    Disc,
    /// Every user at the downlink reference distance and every D2D link at
    /// the D2D reference distance, so only fading differs between users.
    Fixed,
}

/// Every scalar parameter of a scenario. Loadable from a `key = value` file
/// whose keys are the serialized field names below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "F")]
    pub f: f64,
    pub cell_radius_m: f64,
    pub inner_radius_m: f64,
    pub n_dl: f64,
    pub n_d2d: f64,
    /// BS transmit power; calibrated from `dl_ref_snr_db` when absent.
    #[serde(rename = "P_T")]
    pub p_t: Option<f64>,
    /// User transmit power; calibrated from `d2d_ref_snr_db` when absent.
    #[serde(rename = "P_d")]
    pub p_d: Option<f64>,
    #[serde(rename = "N0")]
    pub n0: f64,
    pub dl_ref_snr_db: f64,
    pub d2d_ref_snr_db: f64,
    /// `(α, β, P)`, consumed only by the complexity bounds.
    pub restricted_dof: Option<[usize; 3]>,
    pub geometry: Geometry,
    pub dl_ref_distance_m: f64,
    pub d2d_ref_distance_m: f64,
    /// Floor applied to every distance.
    pub min_distance_m: f64,
    /// 1-based user pairs whose D2D links (both directions) are attenuated.
    pub attenuated_pairs: Vec<[usize; 2]>,
    pub attenuation_db: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            k: 3,
            n: 3,
            m: 1.0,
            l: 2,
            f: 1.0,
            cell_radius_m: 100.0,
            inner_radius_m: 10.0,
            n_dl: 3.0,
            n_d2d: 2.0,
            p_t: None,
            p_d: None,
            n0: 1.0,
            dl_ref_snr_db: 0.0,
            d2d_ref_snr_db: 0.0,
            restricted_dof: None,
            geometry: Geometry::Disc,
            dl_ref_distance_m: 100.0,
            d2d_ref_distance_m: 10.0,
            min_distance_m: 1.0,
            attenuated_pairs: Vec::new(),
            attenuation_db: 0.0,
        }
    }
}

/// Numeric parameters that can be swept by the experiment runner.
pub const SWEEPABLE: &[&str] = &[
    "inner_radius_m",
    "cell_radius_m",
    "dl_ref_snr_db",
    "d2d_ref_snr_db",
    "attenuation_db",
    "n_dl",
    "n_d2d",
    "P_T",
    "P_d",
    "F",
];

impl ScenarioConfig {
    /// `K` users, `N` files, cache `M` files, `L` antennas.
    pub fn new(k: usize, n: usize, m: f64, l: usize) -> Self {
        ScenarioConfig { k, n, m, l, ..Default::default() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn tau(&self) -> Result<usize> {
        if self.n == 0 {
            return Err(Error::Parameter("N must be positive".into()));
        }
        let t = self.k as f64 * self.m / self.n as f64;
        if !(t.is_finite() && t >= 0.0) || (t - t.round()).abs() > 1e-9 {
            return Err(Error::Parameter(format!("τ = K·M/N = {t} is not an integer")));
        }
        Ok(t.round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.l == 0 {
            return Err(Error::Parameter("K and L must be positive".into()));
        }
        if self.k > combinatorics::MAX_USERS {
            return Err(Error::Parameter(format!("K = {} is too large", self.k)));
        }
        let tau = self.tau()?;
        if tau > self.k {
            return Err(Error::Parameter(format!("τ = {tau} exceeds K = {}", self.k)));
        }
        let positive = [
            ("F", self.f),
            ("cell_radius_m", self.cell_radius_m),
            ("N0", self.n0),
            ("dl_ref_distance_m", self.dl_ref_distance_m),
            ("d2d_ref_distance_m", self.d2d_ref_distance_m),
            ("min_distance_m", self.min_distance_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.inner_radius_m >= 0.0 && self.inner_radius_m <= self.cell_radius_m) {
            return Err(Error::Parameter(format!(
                "inner radius {} must lie in [0, {}]",
                self.inner_radius_m, self.cell_radius_m
            )));
        }
        for (name, p) in [("P_T", self.p_t), ("P_d", self.p_d)] {
            if let Some(p) = p {
                if !(p.is_finite() && p > 0.0) {
                    return Err(Error::Parameter(format!("{name} = {p} must be positive")));
                }
            }
        }
        for [a, b] in &self.attenuated_pairs {
            if *a == 0 || *b == 0 || *a > self.k || *b > self.k || a == b {
                return Err(Error::Parameter(format!("bad attenuated pair ({a},{b})")));
            }
        }
        if let Some([alpha, beta, groups]) = self.restricted_dof {
            if alpha == 0 || alpha > self.l || beta == 0 || groups == 0 || tau + alpha != groups * (tau + beta) {
                return Err(Error::Parameter(format!(
                    "restricted DoF (α={alpha}, β={beta}, P={groups}) needs α ≤ L and τ+α = P(τ+β)"
                )));
            }
        }
        Ok(())
    }

    /// Delivery schedules are defined for one transmission phase serving all
    /// users, i.e. `K = τ + L`.
    pub fn check_regime(&self) -> Result<usize> {
        let tau = self.tau()?;
        if self.k != tau + self.l {
            return Err(Error::Unsupported(format!(
                "delivery requires K = τ + L (K = {}, τ = {tau}, L = {})",
                self.k, self.l
            )));
        }
        Ok(tau)
    }

    /// BS power giving `dl_ref_snr_db` average per-antenna SNR at the
    /// reference distance, unless set explicitly.
    pub fn p_t(&self) -> f64 {
        self.p_t.unwrap_or_else(|| self.n0 * db_to_linear(self.dl_ref_snr_db) * self.dl_ref_distance_m.powf(self.n_dl))
    }

    /// User power giving `d2d_ref_snr_db` average SNR at the D2D reference
    /// distance, unless set explicitly.
    pub fn p_d(&self) -> f64 {
        self.p_d
            .unwrap_or_else(|| self.n0 * db_to_linear(self.d2d_ref_snr_db) * self.d2d_ref_distance_m.powf(self.n_d2d))
    }

    /// `C(K, τ, L)`, the size of one transmitted subfile.
    pub fn unit_bits(&self) -> Result<f64> {
        combinatorics::subfile_size(self.k, self.tau()?, self.l, self.f)
    }

    pub fn placement(&self) -> Result<Placement> {
        combinatorics::place(self.k, self.n, self.m, self.tau()?)
    }

    /// Worst-case demands: user `k` requests file `k` (modulo `N`).
    pub fn default_demands(&self) -> Vec<usize> {
        (0..self.k).map(|k| k % self.n).collect()
    }

    fn is_attenuated(&self, i: usize, k: usize) -> bool {
        self.attenuated_pairs.iter().any(|&[a, b]| (a - 1 == i && b - 1 == k) || (a - 1 == k && b - 1 == i))
    }

    /// Sets one numeric parameter by its config key.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "inner_radius_m" => self.inner_radius_m = value,
            "cell_radius_m" => self.cell_radius_m = value,
            "dl_ref_snr_db" => self.dl_ref_snr_db = value,
            "d2d_ref_snr_db" => self.d2d_ref_snr_db = value,
            "attenuation_db" => self.attenuation_db = value,
            "n_dl" => self.n_dl = value,
            "n_d2d" => self.n_d2d = value,
            "P_T" => self.p_t = Some(value),
            "P_d" => self.p_d = Some(value),
            "F" => self.f = value,
            other => {
                return Err(Error::Parameter(format!(
                    "cannot sweep `{other}`; expected one of {}",
                    SWEEPABLE.join(", ")
                )))
            }
        }
        self.validate()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One Monte Carlo draw of all channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Positions relative to the BS; empty for [`Geometry::Fixed`].
    pub user_positions: Vec<[f64; 2]>,
    /// Downlink channel `h_k ∈ C^L` of every user.
    pub dl_channels: Vec<Vec<Complex64>>,
    /// `d2d_gains[i][k]` is the scalar channel from user `i` to user `k`.
    pub d2d_gains: Vec<Vec<Complex64>>,
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn uniform_in_disc(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 2] {
    let rho = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    [rho * theta.cos(), rho * theta.sin()]
}

/// Draws geometry and fading for one trial; deterministic in `seed`.
pub fn sample(config: &ScenarioConfig, seed: u64) -> Result<ChannelRealization> {
    config.validate()?;
    let k = config.k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let floor = config.min_distance_m;

    let (positions, dl_dist, d2d_dist) = match config.geometry {
        Geometry::Disc => {
            let center = uniform_in_disc(&mut rng, config.cell_radius_m - config.inner_radius_m);
            let positions: Vec<[f64; 2]> = (0..k)
                .map(|_| {
                    let p = uniform_in_disc(&mut rng, config.inner_radius_m);
                    [center[0] + p[0], center[1] + p[1]]
                })
                .collect();
            let dl: Vec<f64> = positions.iter().map(|p| p[0].hypot(p[1]).max(floor)).collect();
            let d2d: Vec<Vec<f64>> = positions
                .iter()
                .map(|a| positions.iter().map(|b| (a[0] - b[0]).hypot(a[1] - b[1]).max(floor)).collect())
                .collect();
            (positions, dl, d2d)
        }
        Geometry::Fixed => (
            Vec::new(),
            vec![config.dl_ref_distance_m.max(floor); k],
            vec![vec![config.d2d_ref_distance_m.max(floor); k]; k],
        ),
    };

    let dl_channels = dl_dist
        .iter()
        .map(|d| {
            let scale = d.powf(-config.n_dl / 2.0);
            (0..config.l).map(|_| complex_gaussian(&mut rng) * scale).collect()
        })
        .collect();

    let attenuation = db_to_linear(-config.attenuation_db).sqrt();
    let mut d2d_gains = vec![vec![Complex64::new(0.0, 0.0); k]; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let mut g = complex_gaussian(&mut rng) * d2d_dist[i][j].powf(-config.n_d2d / 2.0);
            if config.is_attenuated(i, j) {
                g *= attenuation;
            }
            d2d_gains[i][j] = g;
        }
    }

    Ok(ChannelRealization { user_positions: positions, dl_channels, d2d_gains })
}

/// `hᴴw`.
pub fn hdot(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    h.iter().zip(w).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Multicast rate from user `sender` to `receivers`, limited by the weakest
/// receiver.
pub fn d2d_rate(sender: usize, receivers: UserSet, chans: &ChannelRealization, config: &ScenarioConfig) -> Result<f64> {
    if receivers.is_empty() || receivers.contains(sender) {
        return Err(Error::Parameter(format!(
            "receivers {receivers} must be nonempty and exclude sender {}",
            sender + 1
        )));
    }
    let snr_scale = config.p_d() / config.n0;
    Ok(receivers
        .iter()
        .map(|k| (snr_scale * chans.d2d_gains[sender][k].norm_sqr()).ln_1p() / std::f64::consts::LN_2)
        .fold(f64::INFINITY, f64::min))
}

/// `log₂(1 + |hᴴw|² / (N0 + Σ|hᴴw'|²))`.
pub fn dl_point_rate<'a, I>(h: &[Complex64], w: &[Complex64], interferers: I, n0: f64) -> f64
where
    I: IntoIterator<Item = &'a [Complex64]>,
{
    let interference: f64 = interferers.into_iter().map(|v| hdot(h, v).norm_sqr()).sum();
    (hdot(h, w).norm_sqr() / (n0 + interference)).ln_1p() / std::f64::consts::LN_2
}
