//! State-matrix estimation from sampled state statistics and modal analysis.
//!
//! For a linear SDE `dx = A x dt + B dW` in stationarity the lagged
//! correlation satisfies `G(tau) = exp(A tau) C`, so
//! `A = log(G(tau) C^-1) / tau`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, LogOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Lag in seconds; must be a whole number of sample periods.
    pub tau: f64,
    pub band: [f64; 2],
    /// Covariance shrinkage: `C + floor * (tr C / d) I`.
    pub regularization: f64,
    /// Covariance condition numbers above this are rejected.
    pub condition_cap: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { tau: 0.5, band: [0.1, 1.0], regularization: 0.0, condition_cap: 1e12 }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("lag must be > 0, got {}", self.tau)));
        }
        if !(self.band[0] < self.band[1]) {
            return Err(Error::Config(format!("band needs f_lo < f_hi, got {:?}", self.band)));
        }
        if !(self.regularization >= 0.0) || !(self.condition_cap > 1.0) {
            return Err(Error::Config("regularization must be >= 0 and condition cap > 1".into()));
        }
        Ok(())
    }

    /// Lag in whole samples at `sample_rate`.
    pub fn lag_samples(&self, sample_rate: f64) -> Result<usize> {
        lag_samples(self.tau, sample_rate)
    }
}

pub fn lag_samples(tau: f64, sample_rate: f64) -> Result<usize> {
    if !(tau >= 0.0) || !(sample_rate > 0.0) {
        return Err(Error::Config(format!("invalid lag {tau} s at {sample_rate} Hz")));
    }
    let l = tau * sample_rate;
    let r = l.round();
    if (l - r).abs() > 1e-9 * l.max(1.0) {
        return Err(Error::Config(format!(
            "lag {tau} s is not a whole number of sample periods at {sample_rate} Hz"
        )));
    }
    Ok(r as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateStatistics {
    pub mean: nalgebra::DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub lag_correlation: DMatrix<f64>,
    pub samples: usize,
    pub lag: usize,
    pub sample_rate: f64,
}

impl StateStatistics {
    pub fn tau(&self) -> f64 {
        self.lag as f64 / self.sample_rate
    }
}

/// Sample mean, covariance (divisor N) and lag-`tau` correlation (divisor
/// N - L) of `states`, one sample per row.
pub fn compute_statistics(states: &DMatrix<f64>, sample_rate: f64, tau: f64) -> Result<StateStatistics> {
    let lag = lag_samples(tau, sample_rate)?;
    let n = states.nrows();
    if n <= lag || n == 0 {
        return Err(Error::InsufficientData(format!("{n} samples is not more than the lag of {lag} samples")));
    }
    let d = states.ncols();
    let mean = states.row_mean().transpose();
    let mut x = states.clone();
    for mut row in x.row_iter_mut() {
        row -= mean.transpose();
    }
    let c = x.tr_mul(&x) / n as f64;
    let covariance = (&c + c.transpose()) * 0.5;
    let lag_correlation = if lag == 0 {
        covariance.clone()
    } else {
        let late = x.rows(lag, n - lag);
        let early = x.rows(0, n - lag);
        late.tr_mul(&early) / (n - lag) as f64
    };
    debug_assert_eq!(lag_correlation.shape(), (d, d));
    Ok(StateStatistics { mean, covariance, lag_correlation, samples: n, lag, sample_rate })
}

/// `log(G C^-1) / tau`.
pub fn estimate_state_matrix(stats: &StateStatistics, cfg: &EstimatorConfig) -> Result<DMatrix<f64>> {
    let tau = stats.tau();
    if !(tau > 0.0) {
        return Err(Error::Config("estimation needs a positive lag".into()));
    }
    estimate_from_moments(&stats.covariance, &stats.lag_correlation, tau, cfg)
}

pub fn estimate_from_moments(
    covariance: &DMatrix<f64>,
    lag_correlation: &DMatrix<f64>,
    tau: f64,
    cfg: &EstimatorConfig,
) -> Result<DMatrix<f64>> {
    let d = covariance.nrows();
    let mut c = covariance.clone();
    if cfg.regularization > 0.0 {
        let shift = cfg.regularization * c.trace() / d as f64;
        for i in 0..d {
            c[(i, i)] += shift;
        }
    }
    let condition = linalg::condition_number(&c);
    if !(condition <= cfg.condition_cap) {
        return Err(Error::Conditioning { condition });
    }
    // G C^-1 = (C^-T G^T)^T = (C^-1 G^T)^T for symmetric C.
    let chol = c.clone().cholesky();
    let m = match chol {
        Some(ch) => ch.solve(&lag_correlation.transpose()).transpose(),
        None => c
            .lu()
            .solve(&lag_correlation.transpose())
            .ok_or(Error::Conditioning { condition })?
            .transpose(),
    };
    Ok(linalg::matrix_log_with(&m, &LogOptions::default())?.0 / tau)
}

/// Stationary covariance of `dx = A x dt + B dW`.
pub fn stationary_covariance_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::solve_lyapunov(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeOrigin {
    True,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    /// Real part r of the eigenvalue.
    pub real: f64,
    /// Imaginary part h > 0.
    pub imag: f64,
    pub frequency_hz: f64,
    /// Damping ratio as a fraction (multiply by 100 for percent).
    pub damping_ratio: f64,
    pub origin: ModeOrigin,
}

impl Mode {
    pub fn from_eigenvalue(lambda: Complex64, origin: ModeOrigin) -> Self {
        let h = lambda.im.abs();
        Self {
            real: lambda.re,
            imag: h,
            frequency_hz: h / (2.0 * std::f64::consts::PI),
            damping_ratio: -lambda.re / lambda.re.hypot(h),
            origin,
        }
    }

    pub fn eigenvalue(&self) -> Complex64 {
        Complex64::new(self.real, self.imag)
    }

    pub fn damping_percent(&self) -> f64 {
        100.0 * self.damping_ratio
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub modes: Vec<Mode>,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

/// One mode per complex-conjugate pair, sorted by frequency.
pub fn modal_analysis(a: &DMatrix<f64>, origin: ModeOrigin) -> Result<ModeSet> {
    let ev = linalg::eigenvalues(a)?;
    let scale = a.norm().max(1.0);
    let mut modes: Vec<Mode> = ev
        .into_iter()
        .filter(|l| l.im > 1e-10 * scale)
        .map(|l| Mode::from_eigenvalue(l, origin))
        .collect();
    modes.sort_by(|x, y| x.frequency_hz.total_cmp(&y.frequency_hz));
    Ok(ModeSet { modes })
}

pub fn filter_interarea(ms: &ModeSet, band: [f64; 2]) -> ModeSet {
    let mut modes: Vec<Mode> =
        ms.modes.iter().copied().filter(|m| m.frequency_hz >= band[0] && m.frequency_hz <= band[1]).collect();
    modes.sort_by(|x, y| x.frequency_hz.total_cmp(&y.frequency_hz));
    ModeSet { modes }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModeMatching {
    /// Pairs of (true, estimated), ordered by true frequency.
    pub pairs: Vec<(Mode, Mode)>,
    pub unmatched_true: Vec<Mode>,
    pub unmatched_estimated: Vec<Mode>,
}

/// Greedy nearest-frequency pairing: repeatedly takes the closest unused pair.
pub fn match_modes(truth: &ModeSet, est: &ModeSet) -> ModeMatching {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, t) in truth.modes.iter().enumerate() {
        for (j, e) in est.modes.iter().enumerate() {
            cand.push(((t.frequency_hz - e.frequency_hz).abs(), i, j));
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_t = vec![false; truth.len()];
    let mut used_e = vec![false; est.len()];
    let mut idx = Vec::new();
    for (_, i, j) in cand {
        if !used_t[i] && !used_e[j] {
            used_t[i] = true;
            used_e[j] = true;
            idx.push((i, j));
        }
    }
    idx.sort();
    ModeMatching {
        pairs: idx.iter().map(|&(i, j)| (truth.modes[i], est.modes[j])).collect(),
        unmatched_true: (0..truth.len()).filter(|&i| !used_t[i]).map(|i| truth.modes[i]).collect(),
        unmatched_estimated: (0..est.len()).filter(|&j| !used_e[j]).map(|j| est.modes[j]).collect(),
    }
}
