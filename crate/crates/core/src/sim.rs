//! Euler-Maruyama integration of the stochastic swing equations with wind
//! injections smoothed by storage, sampled like a PMU.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ess::{wind_power, EssUnit, WindFarm};
use crate::grid::{solve_equilibrium, GridModel};
use crate::stochastic::{stream_rng, LoadNoise, StreamLabel, WindParams, WindSpeedProcess};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// Integration step, s.
    pub dt_int: f64,
    /// Wind update and storage dispatch interval, s. Dispatch happens at the
    /// integration step nearest each multiple of this interval.
    pub ess_interval: f64,
    /// Sampling rate of recorded states, Hz.
    pub pmu_rate: f64,
    /// Simulated time, s.
    pub duration: f64,
    pub seed: u64,
    /// Monte Carlo run index; selects the random streams together with `seed`.
    pub run_index: u64,
    pub ess_enabled: bool,
    /// Initial rotor-angle offset from equilibrium, rad. Empty means none.
    pub initial_delta_offset: Vec<f64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt_int: 1e-3,
            ess_interval: 1.0 / 3.0,
            pmu_rate: 60.0,
            duration: 200.0,
            seed: 0,
            run_index: 0,
            ess_enabled: true,
            initial_delta_offset: Vec::new(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let pmu_period = 1.0 / self.pmu_rate;
        let all_pos = [self.dt_int, self.ess_interval, self.pmu_rate, self.duration];
        if all_pos.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("simulation times and rates must be positive: {self:?}")));
        }
        if !(self.dt_int <= pmu_period && pmu_period <= self.ess_interval && self.ess_interval <= self.duration) {
            return Err(Error::Config(format!(
                "need dt_int <= 1/pmu_rate <= ess_interval <= duration, got {} / {} / {} / {}",
                self.dt_int, pmu_period, self.ess_interval, self.duration
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt_int).round() as usize
    }

    /// Number of recorded samples, `floor(duration * pmu_rate)`.
    pub fn samples(&self) -> usize {
        (self.duration * self.pmu_rate + 1e-9).floor() as usize
    }
}

/// A wind farm together with its wind-speed process parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarmSpec {
    pub farm: WindFarm,
    pub wind: WindParams,
}

/// How farm power deviations are shared among generators.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionRule {
    /// Weights `M_i / sum M`.
    #[default]
    Inertia,
    /// Weights proportional to `M_i |Y_i,bus|`.
    Coupled,
    /// One row per generator, one column per farm.
    Explicit(Vec<Vec<f64>>),
}

/// `n x m` matrix mapping farm power deviations onto generator electrical
/// power offsets; every column sums to one.
pub fn wind_injection_map(model: &GridModel, buses: &[usize], rule: &InjectionRule) -> Result<DMatrix<f64>> {
    let n = model.n();
    let m = buses.len();
    if let Some(&b) = buses.iter().find(|&&b| b >= n) {
        return Err(Error::Config(format!("wind farm attached to unknown bus {}", b + 1)));
    }
    let inertia = model.inertia();
    let map = match rule {
        InjectionRule::Inertia => {
            let total = inertia.sum();
            DMatrix::from_fn(n, m, |i, _| inertia[i] / total)
        }
        InjectionRule::Coupled => {
            let mut w = DMatrix::from_fn(n, m, |i, j| inertia[i] * model.admittance.magnitude(i, buses[j]));
            for mut col in w.column_iter_mut() {
                let s = col.sum();
                col /= s;
            }
            w
        }
        InjectionRule::Explicit(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != m) {
                return Err(Error::Config(format!("explicit injection map must be {n} x {m}")));
            }
            let w = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
            for (j, col) in w.column_iter().enumerate() {
                if (col.sum() - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!("injection map column {} sums to {}, not 1", j + 1, col.sum())));
                }
            }
            w
        }
    };
    Ok(map)
}

/// One dispatch interval of one farm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FarmSample {
    pub wind_power: f64,
    pub imbalance: f64,
    pub charge: f64,
    pub discharge: f64,
    pub residual: f64,
    pub stored: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One row per sample: `(delta - delta0, omega)`.
    pub states: DMatrix<f64>,
    pub pmu_rate: f64,
    /// Per farm, the farm quantities held at each recorded sample.
    pub farm_series: Vec<Vec<FarmSample>>,
    /// Per farm, one entry per dispatch interval.
    pub dispatch_log: Vec<Vec<FarmSample>>,
}

impl Trajectory {
    pub fn generators(&self) -> usize {
        self.states.ncols() / 2
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Allocation-free electrical power evaluation for the inner loop.
struct PowerKernel {
    n: usize,
    /// `E_i E_j |Y_ij|`, row-major.
    k: Vec<f64>,
    phi: Vec<f64>,
    /// `E_i V |Y_i,inf|` and its angle.
    k_inf: Vec<f64>,
    phi_inf: Vec<f64>,
}

impl PowerKernel {
    fn new(model: &GridModel) -> Self {
        let n = model.n();
        let e: Vec<f64> = model.generators.iter().map(|g| g.emf).collect();
        let y = &model.admittance;
        let mut k = vec![0.0; n * n];
        let mut phi = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = e[i] * e[j] * y.magnitude(i, j);
                phi[i * n + j] = y.angle(i, j);
            }
        }
        let (k_inf, phi_inf) = match &model.infinite_bus {
            Some(ib) => (
                (0..n).map(|i| e[i] * ib.voltage * ib.ties[i].norm()).collect(),
                ib.ties.iter().map(|t| t.arg()).collect(),
            ),
            None => (vec![0.0; n], vec![0.0; n]),
        };
        Self { n, k, phi, k_inf, phi_inf }
    }

    fn eval(&self, delta: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut p = self.k_inf[i] * (delta[i] - self.phi_inf[i]).cos();
            for j in 0..n {
                p += self.k[i * n + j] * (delta[i] - delta[j] - self.phi[i * n + j]).cos();
            }
            out[i] = p;
        }
    }
}

/// Integrates one scenario. `esses` must hold one unit per farm when
/// dispatch is enabled; disabled units pass the imbalance through.
pub fn simulate(
    model: &GridModel,
    farms: &[FarmSpec],
    esses: &[EssUnit],
    injection: &InjectionRule,
    cfg: &SimulationConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = model.n();
    let m = farms.len();
    for f in farms {
        f.farm.validate()?;
        f.wind.validate()?;
    }
    if cfg.ess_enabled && esses.len() != m {
        return Err(Error::Config(format!("{} storage units given for {m} wind farms", esses.len())));
    }
    if !cfg.initial_delta_offset.is_empty() && cfg.initial_delta_offset.len() != n {
        return Err(Error::Config(format!("initial_delta_offset needs {n} entries")));
    }
    let buses: Vec<usize> = farms.iter().map(|f| f.farm.bus).collect();
    let wmap = wind_injection_map(model, &buses, injection)?;
    let delta0 = solve_equilibrium(model)?;
    let kernel = PowerKernel::new(model);

    let mut units: Vec<EssUnit> =
        if cfg.ess_enabled { esses.to_vec() } else { vec![EssUnit::disabled(); m] };
    let mut winds = farms
        .iter()
        .enumerate()
        .map(|(j, f)| WindSpeedProcess::new(f.wind, stream_rng(cfg.seed, cfg.run_index, StreamLabel::Wind(j))))
        .collect::<Result<Vec<_>>>()?;
    let mut load = LoadNoise::new(model.load_sigma.clone(), stream_rng(cfg.seed, cfg.run_index, StreamLabel::Load));

    let inv_m: Vec<f64> = model.generators.iter().map(|g| 1.0 / g.inertia).collect();
    let damping: Vec<f64> = model.generators.iter().map(|g| g.damping).collect();
    let pm: Vec<f64> = model.generators.iter().map(|g| g.mech_power).collect();
    let gain = model.load_gain();
    let noise_scale: Vec<f64> = (0..n).map(|i| gain[i] * model.load_sigma[i] / cfg.dt_int.sqrt()).collect();

    let dt = cfg.dt_int;
    let steps = cfg.steps();
    let samples = cfg.samples();
    let dispatch_step = |d: usize| ((d as f64 * cfg.ess_interval) / dt).round() as usize;
    let mut next_dispatch = 0usize;

    let mut delta: Vec<f64> = delta0.iter().copied().collect();
    for (d, off) in delta.iter_mut().zip(&cfg.initial_delta_offset) {
        *d += off;
    }
    let mut omega = vec![0.0; n];
    let mut pe = vec![0.0; n];
    let mut inj = vec![0.0; n];
    let mut current = vec![FarmSample::default(); m];

    let mut times = Vec::with_capacity(samples);
    let mut states = DMatrix::zeros(samples, 2 * n);
    let mut farm_series: Vec<Vec<FarmSample>> = vec![Vec::with_capacity(samples); m];
    let mut dispatch_log: Vec<Vec<FarmSample>> = vec![Vec::with_capacity((cfg.duration / cfg.ess_interval) as usize + 1); m];

    let mut next_sample = 0usize;
    let sample_step = |s: usize| ((s as f64 / cfg.pmu_rate) / dt).round() as usize;
    for k in 0..=steps {
        if k < steps && dispatch_step(next_dispatch) == k {
            next_dispatch += 1;
            for j in 0..m {
                let v = winds[j].step(cfg.ess_interval);
                let p_w = wind_power(&farms[j].farm, v)?;
                let p_im = p_w - farms[j].farm.p_ref;
                let d = units[j].dispatch(p_im)?;
                current[j] = FarmSample {
                    wind_power: p_w,
                    imbalance: p_im,
                    charge: d.charge,
                    discharge: d.discharge,
                    residual: d.residual,
                    stored: units[j].stored,
                };
                dispatch_log[j].push(current[j]);
            }
            for (i, x) in inj.iter_mut().enumerate() {
                *x = (0..m).map(|j| wmap[(i, j)] * current[j].residual).sum();
            }
        }
        while next_sample < samples && sample_step(next_sample) == k {
            times.push(next_sample as f64 / cfg.pmu_rate);
            for i in 0..n {
                states[(next_sample, i)] = delta[i] - delta0[i];
                states[(next_sample, n + i)] = omega[i];
            }
            for j in 0..m {
                farm_series[j].push(current[j]);
            }
            next_sample += 1;
        }
        if k == steps {
            break;
        }
        kernel.eval(&delta, &mut pe);
        let xi = load.sample_xi();
        for i in 0..n {
            let accel = pm[i] - pe[i] + inj[i] - damping[i] * omega[i] - noise_scale[i] * xi[i];
            delta[i] += dt * omega[i];
            omega[i] += dt * inv_m[i] * accel;
            if (delta[i] - delta0[i]).abs() > std::f64::consts::PI || !omega[i].is_finite() {
                return Err(Error::Instability { time: (k + 1) as f64 * dt });
            }
        }
    }
    debug_assert_eq!(times.len(), samples);
    Ok(Trajectory { times, states, pmu_rate: cfg.pmu_rate, farm_series, dispatch_log })
}

const FARM_COLUMNS: [&str; 6] = ["Pw", "Pim", "C", "D", "Pres", "S"];

pub fn write_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let n = traj.generators();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string()];
    header.extend((1..=n).map(|i| format!("delta_{i}")));
    header.extend((1..=n).map(|i| format!("omega_{i}")));
    for j in 1..=traj.farm_series.len() {
        header.extend(FARM_COLUMNS.iter().map(|c| format!("{c}_{j}")));
    }
    w.write_record(&header)?;
    let fmt = |v: f64| format!("{v:.8e}");
    for (r, t) in traj.times.iter().enumerate() {
        let mut rec = vec![fmt(*t)];
        rec.extend(traj.states.row(r).iter().map(|v| fmt(*v)));
        for series in &traj.farm_series {
            let s = series[r];
            rec.extend([s.wind_power, s.imbalance, s.charge, s.discharge, s.residual, s.stored].map(fmt));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory written by [`write_csv`]. The sample rate is taken
/// from the time column, which must be uniform. The dispatch log is left empty.
pub fn read_csv<R: Read>(input: R) -> Result<Trajectory> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.first().map(String::as_str) != Some("time") {
        return Err(Error::Parse("first column must be 'time'".into()));
    }
    let n = header.iter().filter(|h| h.starts_with("delta_")).count();
    for i in 1..=n {
        let (d, o) = (format!("delta_{i}"), format!("omega_{i}"));
        if header.get(i) != Some(&d) || header.get(n + i) != Some(&o) {
            return Err(Error::Parse(format!("expected columns {d} and {o} in order")));
        }
    }
    if n == 0 {
        return Err(Error::Parse("no delta_ columns".into()));
    }
    let extra = header.len() - 1 - 2 * n;
    if !extra.is_multiple_of(FARM_COLUMNS.len()) {
        return Err(Error::Parse(format!("{extra} farm columns is not a multiple of {}", FARM_COLUMNS.len())));
    }
    let m = extra / FARM_COLUMNS.len();
    let mut times = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    let mut farm_series = vec![Vec::new(); m];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))?;
        if vals.len() != header.len() {
            return Err(Error::Parse(format!("row {} has {} fields, expected {}", line + 2, vals.len(), header.len())));
        }
        times.push(vals[0]);
        rows.extend_from_slice(&vals[1..=2 * n]);
        for (j, series) in farm_series.iter_mut().enumerate() {
            let b = 1 + 2 * n + j * FARM_COLUMNS.len();
            series.push(FarmSample {
                wind_power: vals[b],
                imbalance: vals[b + 1],
                charge: vals[b + 2],
                discharge: vals[b + 3],
                residual: vals[b + 4],
                stored: vals[b + 5],
            });
        }
    }
    if times.len() < 2 {
        return Err(Error::InsufficientData(format!("trajectory has {} samples", times.len())));
    }
    let period = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(period > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - period).abs() > 1e-6 * period.max(1.0)) {
        return Err(Error::Parse("time column is not uniformly sampled".into()));
    }
    // Snap to the nearest whole rate; the time column carries nine digits.
    let raw_rate = 1.0 / period;
    let pmu_rate = if (raw_rate - raw_rate.round()).abs() < 1e-6 * raw_rate { raw_rate.round() } else { raw_rate };
    let states = DMatrix::from_row_slice(times.len(), 2 * n, &rows);
    Ok(Trajectory { times, states, pmu_rate, farm_series, dispatch_log: vec![Vec::new(); m] })
}

/// Per-farm imbalance and residual series at the dispatch rate.
pub fn dispatch_series(traj: &Trajectory, farm: usize) -> (DVector<f64>, DVector<f64>) {
    let log = &traj.dispatch_log[farm];
    (
        DVector::from_iterator(log.len(), log.iter().map(|s| s.imbalance)),
        DVector::from_iterator(log.len(), log.iter().map(|s| s.residual)),
    )
}
