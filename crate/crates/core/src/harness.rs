//! Seeded Monte Carlo campaigns: storage sizing, paired OFF/ON simulation,
//! mode estimation and the aggregate tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ess::{imbalance_std, size_ess, wind_power, EssUnit, SizingPolicy, WindFarm};
use crate::grid::{linearize, solve_equilibrium, GridModel};
use crate::modes::{
    compute_statistics, estimate_state_matrix, filter_interarea, match_modes, modal_analysis, EstimatorConfig,
    ModeOrigin, ModeSet,
};
use crate::sim::{simulate, FarmSpec, InjectionRule, SimulationConfig, Trajectory};
use crate::stochastic::{stream_rng, StreamLabel, WindParams, WindSpeedProcess, SEED_SCHEME};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EssMode {
    On,
    Off,
    Both,
}

impl EssMode {
    pub fn arms(self) -> &'static [Arm] {
        match self {
            EssMode::On => &[Arm::On],
            EssMode::Off => &[Arm::Off],
            EssMode::Both => &[Arm::Off, Arm::On],
        }
    }
}

impl std::str::FromStr for EssMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(EssMode::On),
            "off" => Ok(EssMode::Off),
            "both" => Ok(EssMode::Both),
            _ => Err(Error::Config(format!("ess mode must be on, off or both, got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Off,
    On,
}

/// Farm definition as written in a campaign file. Physical fields default to
/// a 500 MW farm; `p_ref` defaults to the output at the mean wind speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarmEntry {
    /// Generator bus, 1-based.
    pub bus: usize,
    #[serde(default)]
    pub turbines: Option<u32>,
    #[serde(default)]
    pub air_density: Option<f64>,
    #[serde(default)]
    pub power_coefficient: Option<f64>,
    #[serde(default)]
    pub rotor_area: Option<f64>,
    #[serde(default)]
    pub speed_base: Option<f64>,
    #[serde(default)]
    pub power_base: Option<f64>,
    #[serde(default)]
    pub p_ref: Option<f64>,
    #[serde(default)]
    pub wind: WindParams,
}

impl FarmEntry {
    pub fn at_bus(bus: usize) -> Self {
        Self {
            bus,
            turbines: None,
            air_density: None,
            power_coefficient: None,
            rotor_area: None,
            speed_base: None,
            power_base: None,
            p_ref: None,
            wind: WindParams::default(),
        }
    }

    pub fn to_spec(&self) -> Result<FarmSpec> {
        if self.bus == 0 {
            return Err(Error::Config("farm bus numbers are 1-based".into()));
        }
        let mut farm = WindFarm::rated_500mw(self.bus - 1);
        if let Some(v) = self.turbines {
            farm.turbines = v;
        }
        if let Some(v) = self.air_density {
            farm.air_density = v;
        }
        if let Some(v) = self.power_coefficient {
            farm.power_coefficient = v;
        }
        if let Some(v) = self.rotor_area {
            farm.rotor_area = v;
        }
        if let Some(v) = self.speed_base {
            farm.speed_base = v;
        }
        if let Some(v) = self.power_base {
            farm.power_base = v;
        }
        self.wind.validate()?;
        farm.p_ref = match self.p_ref {
            Some(p) => p,
            None => wind_power(&farm, self.wind.mean_speed.max(0.0))?,
        };
        farm.validate()?;
        Ok(FarmSpec { farm, wind: self.wind })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Efficiency {
    pub charge: f64,
    pub discharge: f64,
}

impl Default for Efficiency {
    fn default() -> Self {
        // Round-trip efficiency 70%.
        Self { charge: 0.7f64.sqrt(), discharge: 0.7f64.sqrt() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Grid file; the built-in four-machine fixture when absent.
    pub path: Option<PathBuf>,
    /// Overrides every bus's load-noise level.
    pub load_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignSection {
    pub runs: usize,
    pub seed: u64,
    pub ess_mode: EssMode,
    /// Worker threads; all available cores when absent.
    pub workers: Option<usize>,
    /// Length of the independent wind realisation used for sizing, s.
    pub sizing_window: f64,
}

impl Default for CampaignSection {
    fn default() -> Self {
        Self { runs: 100, seed: 2024, ess_mode: EssMode::Both, workers: None, sizing_window: 200.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub campaign: CampaignSection,
    pub grid: GridSection,
    #[serde(rename = "farm")]
    pub farms: Vec<FarmEntry>,
    pub injection: InjectionRule,
    pub sizing: SizingPolicy,
    pub efficiency: Efficiency,
    pub simulation: SimulationConfig,
    pub estimator: EstimatorConfig,
}

impl Default for CampaignConfig {
    /// The wind scenario on the built-in fixture: two 500 MW farms at
    /// generator buses 2 and 3.
    fn default() -> Self {
        Self {
            campaign: CampaignSection::default(),
            grid: GridSection { path: None, load_sigma: Some(0.08) },
            farms: vec![FarmEntry::at_bus(2), FarmEntry::at_bus(3)],
            injection: InjectionRule::Inertia,
            sizing: SizingPolicy::default(),
            efficiency: Efficiency::default(),
            simulation: SimulationConfig::default(),
            estimator: EstimatorConfig::default(),
        }
    }
}

impl CampaignConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        Ok(cfg)
    }

    /// Relative grid paths resolve against the config file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        if let (Some(p), Some(dir)) = (&cfg.grid.path, path.parent()) {
            if p.is_relative() {
                cfg.grid.path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.campaign.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.campaign.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if !(self.campaign.sizing_window >= 2.0 * self.simulation.ess_interval) {
            return Err(Error::Config("sizing window must cover at least two dispatch intervals".into()));
        }
        self.sizing.validate()?;
        for e in [self.efficiency.charge, self.efficiency.discharge] {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Config(format!("efficiency {e} outside (0, 1]")));
            }
        }
        self.simulation.validate()?;
        self.estimator.validate()?;
        self.estimator.lag_samples(self.simulation.pmu_rate)?;
        Ok(())
    }

    pub fn load_grid(&self) -> Result<GridModel> {
        let model = match &self.grid.path {
            Some(p) => GridModel::from_file(p)?,
            None => GridModel::four_machine(),
        };
        Ok(match self.grid.load_sigma {
            Some(s) if !(s >= 0.0) => return Err(Error::Config("load_sigma must be >= 0".into())),
            Some(s) => model.with_load_sigma(s),
            None => model,
        })
    }

    pub fn farm_specs(&self) -> Result<Vec<FarmSpec>> {
        self.farms.iter().map(FarmEntry::to_spec).collect()
    }
}

/// `mean(|x|)`.
pub fn mean_abs_imbalance(series: &[f64]) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::InsufficientData("mean of an empty series".into()));
    }
    Ok(series.iter().map(|v| v.abs()).sum::<f64>() / series.len() as f64)
}

/// `100 * mean(|est - true| / |true|)`.
pub fn mape(truth: &[f64], est: &[f64]) -> Result<f64> {
    if truth.len() != est.len() || truth.is_empty() {
        return Err(Error::Domain(format!("mape needs equal non-empty lengths, got {} and {}", truth.len(), est.len())));
    }
    let mut s = 0.0;
    for (t, e) in truth.iter().zip(est) {
        if *t == 0.0 {
            return Err(Error::Domain("mape with a zero true value".into()));
        }
        s += ((e - t) / t).abs();
    }
    Ok(100.0 * s / truth.len() as f64)
}

pub fn percent_decrease(mu_im: f64, mu_res: f64) -> f64 {
    100.0 * (mu_im - mu_res) / mu_im
}

/// Imbalance series of an independent wind realisation, used for sizing.
pub fn sizing_series(spec: &FarmSpec, farm_index: usize, seed: u64, run: u64, interval: f64, window: f64) -> Result<Vec<f64>> {
    let mut wind = WindSpeedProcess::new(spec.wind, stream_rng(seed, run, StreamLabel::Warmup(farm_index)))?;
    let count = (window / interval).round().max(2.0) as usize;
    (0..count).map(|_| Ok(wind_power(&spec.farm, wind.step(interval))? - spec.farm.p_ref)).collect()
}

/// Sizes one storage unit per farm from the sizing realisation.
pub fn size_units(
    farms: &[FarmSpec],
    cfg: &CampaignConfig,
    run: u64,
) -> Result<(Vec<EssUnit>, Vec<f64>)> {
    let mut units = Vec::with_capacity(farms.len());
    let mut stds = Vec::with_capacity(farms.len());
    for (j, f) in farms.iter().enumerate() {
        let s = sizing_series(f, j, cfg.campaign.seed, run, cfg.simulation.ess_interval, cfg.campaign.sizing_window)?;
        let sd = imbalance_std(&s)?;
        units.push(size_ess(sd, &cfg.sizing, cfg.efficiency.charge, cfg.efficiency.discharge));
        stds.push(sd);
    }
    Ok((units, stds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmRunStats {
    pub sizing_std: f64,
    pub ess_on: bool,
    pub mu_imbalance: f64,
    pub mu_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeEstimate {
    pub frequency_hz: f64,
    pub damping_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: u64,
    pub arm: Arm,
    /// Set when the run failed; the run is then left out of the aggregates.
    pub error: Option<String>,
    pub farms: Vec<FarmRunStats>,
    /// One entry per true inter-area mode; `None` when no estimate matched.
    pub modes: Vec<Option<ModeEstimate>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmSummary {
    pub bus: usize,
    pub mu_imbalance: f64,
    pub mu_residual: f64,
    pub decrease_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub true_frequency_hz: f64,
    pub true_damping_percent: f64,
    pub mean_est_frequency_hz: f64,
    pub mean_est_damping_percent: f64,
    pub frequency_error_percent: f64,
    pub damping_error_percent: f64,
    /// Runs contributing an estimate for this mode.
    pub estimates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub runs: usize,
    pub excluded: usize,
    pub farms: Vec<FarmSummary>,
    pub modes: Vec<ModeSummary>,
    /// MAPE of the run-averaged estimates against the true values.
    pub mape_frequency: f64,
    pub mape_damping: f64,
    /// MAPE averaged over individual runs (diagnostic).
    pub per_run_mape_frequency: f64,
    pub per_run_mape_damping: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub seed_scheme: String,
    pub seed: u64,
    pub runs: usize,
    pub ess_mode: EssMode,
    pub tau: f64,
    pub band: [f64; 2],
    pub duration: f64,
    pub pmu_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub header: ReportHeader,
    pub true_modes: ModeSet,
    pub arms: Vec<ArmSummary>,
    pub records: Vec<RunRecord>,
}

/// Wall-clock figures, kept apart from the deterministic report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CampaignTiming {
    pub total_seconds: f64,
    pub mean_estimation_seconds: f64,
}

pub fn true_interarea_modes(model: &GridModel, band: [f64; 2]) -> Result<ModeSet> {
    let delta0 = solve_equilibrium(model)?;
    let lin = linearize(model, &delta0);
    Ok(filter_interarea(&modal_analysis(&lin.state_matrix, ModeOrigin::True)?, band))
}

/// Estimated inter-area modes of a trajectory.
pub fn estimate_modes(traj: &Trajectory, cfg: &EstimatorConfig) -> Result<ModeSet> {
    let stats = compute_statistics(&traj.states, traj.pmu_rate, cfg.tau)?;
    let a_hat = estimate_state_matrix(&stats, cfg)?;
    Ok(filter_interarea(&modal_analysis(&a_hat, ModeOrigin::Estimated)?, cfg.band))
}

struct RunContext<'a> {
    cfg: &'a CampaignConfig,
    model: &'a GridModel,
    farms: &'a [FarmSpec],
    truth: &'a ModeSet,
}

fn run_arm(ctx: &RunContext, run: u64, arm: Arm, units: &[EssUnit], stds: &[f64]) -> (RunRecord, f64) {
    let mut rec = RunRecord { run, arm, error: None, farms: Vec::new(), modes: Vec::new() };
    let sim_cfg = SimulationConfig {
        seed: ctx.cfg.campaign.seed,
        run_index: run,
        ess_enabled: arm == Arm::On,
        ..ctx.cfg.simulation.clone()
    };
    let traj = match simulate(ctx.model, ctx.farms, units, &ctx.cfg.injection, &sim_cfg) {
        Ok(t) => t,
        Err(e) => {
            rec.error = Some(e.to_string());
            return (rec, 0.0);
        }
    };
    for (j, log) in traj.dispatch_log.iter().enumerate() {
        let im: Vec<f64> = log.iter().map(|s| s.imbalance).collect();
        let res: Vec<f64> = log.iter().map(|s| s.residual).collect();
        rec.farms.push(FarmRunStats {
            sizing_std: stds[j],
            ess_on: arm == Arm::On && units[j].enabled,
            mu_imbalance: mean_abs_imbalance(&im).unwrap_or(0.0),
            mu_residual: mean_abs_imbalance(&res).unwrap_or(0.0),
        });
    }
    let start = Instant::now();
    let est = estimate_modes(&traj, &ctx.cfg.estimator);
    let elapsed = start.elapsed().as_secs_f64();
    match est {
        Ok(est) => {
            let m = match_modes(ctx.truth, &est);
            rec.modes = ctx
                .truth
                .modes
                .iter()
                .map(|t| {
                    m.pairs.iter().find(|(tp, _)| tp == t).map(|(_, e)| ModeEstimate {
                        frequency_hz: e.frequency_hz,
                        damping_ratio: e.damping_ratio,
                    })
                })
                .collect();
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    (rec, elapsed)
}

fn run_one(ctx: &RunContext, run: u64) -> Vec<(RunRecord, f64)> {
    let sized = size_units(ctx.farms, ctx.cfg, run);
    ctx.cfg
        .campaign
        .ess_mode
        .arms()
        .iter()
        .map(|&arm| match &sized {
            Ok((units, stds)) => run_arm(ctx, run, arm, units, stds),
            Err(e) => (
                RunRecord { run, arm, error: Some(e.to_string()), farms: Vec::new(), modes: Vec::new() },
                0.0,
            ),
        })
        .collect()
}

/// Recomputes every aggregate from per-run records.
pub fn summarize(arm: Arm, records: &[RunRecord], truth: &ModeSet, buses: &[usize]) -> Result<ArmSummary> {
    let mine: Vec<&RunRecord> = records.iter().filter(|r| r.arm == arm).collect();
    let ok: Vec<&RunRecord> = mine.iter().copied().filter(|r| r.error.is_none()).collect();
    let farms = buses
        .iter()
        .enumerate()
        .map(|(j, &bus)| {
            let im: Vec<f64> = ok.iter().map(|r| r.farms[j].mu_imbalance).collect();
            let res: Vec<f64> = ok.iter().map(|r| r.farms[j].mu_residual).collect();
            let mu_im = mean(&im);
            let mu_res = mean(&res);
            FarmSummary { bus: bus + 1, mu_imbalance: mu_im, mu_residual: mu_res, decrease_percent: percent_decrease(mu_im, mu_res) }
        })
        .collect();
    let mut modes = Vec::new();
    let (mut run_f, mut run_z) = (Vec::new(), Vec::new());
    for (k, t) in truth.modes.iter().enumerate() {
        let est: Vec<ModeEstimate> = ok.iter().filter_map(|r| r.modes[k]).collect();
        let f = mean(&est.iter().map(|e| e.frequency_hz).collect::<Vec<_>>());
        let z = mean(&est.iter().map(|e| e.damping_ratio).collect::<Vec<_>>());
        for e in &est {
            run_f.push(((e.frequency_hz - t.frequency_hz) / t.frequency_hz).abs());
            run_z.push(((e.damping_ratio - t.damping_ratio) / t.damping_ratio).abs());
        }
        modes.push(ModeSummary {
            true_frequency_hz: t.frequency_hz,
            true_damping_percent: t.damping_percent(),
            mean_est_frequency_hz: f,
            mean_est_damping_percent: 100.0 * z,
            frequency_error_percent: 100.0 * (f - t.frequency_hz) / t.frequency_hz,
            damping_error_percent: 100.0 * (z - t.damping_ratio) / t.damping_ratio,
            estimates: est.len(),
        });
    }
    let tf: Vec<f64> = truth.modes.iter().map(|m| m.frequency_hz).collect();
    let tz: Vec<f64> = truth.modes.iter().map(|m| m.damping_ratio).collect();
    let ef: Vec<f64> = modes.iter().map(|m| m.mean_est_frequency_hz).collect();
    let ez: Vec<f64> = modes.iter().map(|m| m.mean_est_damping_percent / 100.0).collect();
    let (mape_frequency, mape_damping) =
        if truth.is_empty() { (f64::NAN, f64::NAN) } else { (mape(&tf, &ef)?, mape(&tz, &ez)?) };
    Ok(ArmSummary {
        arm,
        runs: mine.len(),
        excluded: mine.len() - ok.len(),
        farms,
        modes,
        mape_frequency,
        mape_damping,
        per_run_mape_frequency: 100.0 * mean(&run_f),
        per_run_mape_damping: 100.0 * mean(&run_z),
    })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 }
}

/// Runs a campaign. The report depends only on the configuration, not on
/// the number of workers.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<(CampaignReport, CampaignTiming)> {
    let start = Instant::now();
    cfg.validate()?;
    let model = cfg.load_grid()?;
    let farms = cfg.farm_specs()?;
    let truth = true_interarea_modes(&model, cfg.estimator.band)?;
    let ctx = RunContext { cfg, model: &model, farms: &farms, truth: &truth };
    let runs = cfg.campaign.runs as u64;
    let work = || (0..runs).into_par_iter().map(|r| run_one(&ctx, r)).collect::<Vec<_>>();
    let results = match cfg.campaign.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let (records, times): (Vec<RunRecord>, Vec<f64>) = results.into_iter().flatten().unzip();
    let buses: Vec<usize> = farms.iter().map(|f| f.farm.bus).collect();
    let arms = cfg
        .campaign
        .ess_mode
        .arms()
        .iter()
        .map(|&a| summarize(a, &records, &truth, &buses))
        .collect::<Result<Vec<_>>>()?;
    for a in &arms {
        if a.excluded * 5 > a.runs {
            return Err(Error::CampaignFailed { excluded: a.excluded, total: a.runs });
        }
    }
    let report = CampaignReport {
        header: ReportHeader {
            seed_scheme: SEED_SCHEME.to_string(),
            seed: cfg.campaign.seed,
            runs: cfg.campaign.runs,
            ess_mode: cfg.campaign.ess_mode,
            tau: cfg.estimator.tau,
            band: cfg.estimator.band,
            duration: cfg.simulation.duration,
            pmu_rate: cfg.simulation.pmu_rate,
        },
        true_modes: truth,
        arms,
        records,
    };
    let timing = CampaignTiming { total_seconds: start.elapsed().as_secs_f64(), mean_estimation_seconds: mean(&times) };
    Ok((report, timing))
}

/// Plain-text tables: imbalance reduction, mode properties and MAPE.
pub fn render_tables(report: &CampaignReport) -> String {
    let mut s = String::new();
    let h = &report.header;
    let _ = writeln!(s, "seed {} | runs {} | tau {} s | {} s @ {} Hz", h.seed, h.runs, h.tau, h.duration, h.pmu_rate);
    let _ = writeln!(s, "seed scheme: {}", h.seed_scheme);
    for arm in &report.arms {
        let _ = writeln!(s, "\n== ESS {:?} ({} runs, {} excluded) ==", arm.arm, arm.runs, arm.excluded);
        let _ = writeln!(s, "{:>6} {:>12} {:>12} {:>11}", "bus", "mu_P_im", "mu_P_res", "decrease%");
        for f in &arm.farms {
            let _ = writeln!(s, "{:>6} {:>12.4} {:>12.4} {:>11.3}", f.bus, f.mu_imbalance, f.mu_residual, f.decrease_percent);
        }
        let _ = writeln!(
            s,
            "{:>6} {:>9} {:>9} {:>8} {:>9} {:>9} {:>8} {:>5}",
            "mode", "f_true", "f_est", "err%", "zeta_t%", "zeta_e%", "err%", "n"
        );
        for (k, m) in arm.modes.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:>6} {:>9.4} {:>9.4} {:>8.3} {:>9.3} {:>9.3} {:>8.3} {:>5}",
                k + 1,
                m.true_frequency_hz,
                m.mean_est_frequency_hz,
                m.frequency_error_percent,
                m.true_damping_percent,
                m.mean_est_damping_percent,
                m.damping_error_percent,
                m.estimates
            );
        }
        let _ = writeln!(
            s,
            "MAPE_f {:.3}%  MAPE_zeta {:.3}%  (per-run: {:.3}% / {:.3}%)",
            arm.mape_frequency, arm.mape_damping, arm.per_run_mape_frequency, arm.per_run_mape_damping
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_abs_examples() {
        assert_eq!(mean_abs_imbalance(&[0.0; 4]).unwrap(), 0.0);
        assert_eq!(mean_abs_imbalance(&[-0.1, 0.1]).unwrap(), 0.1);
        assert_eq!(mean_abs_imbalance(&[0.142; 7]).unwrap(), 0.142);
        assert!(matches!(mean_abs_imbalance(&[]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((mape(&[1.0, 3.0], &[1.1, 3.3]).unwrap() - 10.0).abs() < 1e-12);
        assert!((mape(&[2.0, 4.0], &[1.0, 5.0]).unwrap() - 37.5).abs() < 1e-12);
        assert!(matches!(mape(&[0.0], &[1.0]), Err(Error::Domain(_))));
        assert!(mape(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn decrease_arithmetic() {
        assert!((percent_decrease(0.142, 0.044) - 69.014).abs() < 1e-3);
    }

    #[test]
    fn ess_mode_parsing() {
        assert_eq!("both".parse::<EssMode>().unwrap(), EssMode::Both);
        assert!("sometimes".parse::<EssMode>().is_err());
        assert_eq!(EssMode::Both.arms(), &[Arm::Off, Arm::On]);
    }

    #[test]
    fn config_parses_sections() {
        let text = r#"
            [campaign]
            runs = 3
            seed = 9
            ess_mode = "off"

            [grid]
            load_sigma = 0.02

            [[farm]]
            bus = 2
            wind = { shape = 2.0, scale = 0.05, mean_speed = 0.9, correlation_time = 1.0 }

            [simulation]
            duration = 20.0

            [estimator]
            tau = 0.25
        "#;
        let cfg = CampaignConfig::from_toml_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.campaign.runs, 3);
        assert_eq!(cfg.farms.len(), 1);
        let spec = cfg.farm_specs().unwrap();
        assert_eq!(spec[0].farm.bus, 1);
        assert!((spec[0].farm.p_ref - 5.0 * 0.9f64.powi(3)).abs() < 1e-12);
        assert!(CampaignConfig::from_toml_str("[campaign]\nbogus = 1\n").is_err());
    }

    #[test]
    fn degenerate_single_run() {
        let mut cfg = CampaignConfig::default();
        cfg.campaign.runs = 1;
        cfg.campaign.ess_mode = EssMode::Off;
        cfg.simulation.duration = 60.0;
        cfg.campaign.sizing_window = 60.0;
        for f in &mut cfg.farms {
            f.wind.scale = 0.0;
        }
        let (rep, _) = run_campaign(&cfg).unwrap();
        assert_eq!(rep.arms.len(), 1);
        assert_eq!(rep.arms[0].farms[0].mu_imbalance, 0.0);
        assert!(rep.arms[0].mape_frequency.is_finite());
    }
}
