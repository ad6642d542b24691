//! Exogenous randomness: Weibull wind-speed processes, Gaussian load noise
//! and the seed derivation that keeps every stream reproducible.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::{erf::erfc, gamma::gamma};

use crate::error::{Error, Result};

/// Named random streams of one Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamLabel {
    Load,
    /// Wind process of farm `j` during the simulated window.
    Wind(usize),
    /// Independent warm-up realisation used for ESS sizing of farm `j`.
    Warmup(usize),
}

impl StreamLabel {
    fn code(self) -> u64 {
        match self {
            StreamLabel::Load => 1,
            StreamLabel::Wind(j) => 0x1000 + j as u64,
            StreamLabel::Warmup(j) => 0x2000 + j as u64,
        }
    }
}

/// Seed derivation scheme: every stream is ChaCha8 keyed by the base seed,
/// with stream id `run_index * 2^16 + label_code`. Streams never overlap, so
/// advancing one cannot perturb another, and any single run can be replayed
/// from `(base_seed, run_index)` alone.
pub const SEED_SCHEME: &str = "chacha8(base_seed), stream = run_index * 65536 + label (load=1, wind_j=0x1000+j, warmup_j=0x2000+j)";

pub fn stream_rng(base_seed: u64, run_index: u64, label: StreamLabel) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream((run_index << 16) | label.code());
    rng
}

/// Standard normal CDF through the complementary error function.
pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Inverse Weibull CDF, `lambda * (-ln(1-u))^(1/k)`.
pub fn weibull_quantile(u: f64, shape: f64, scale: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::Domain(format!("quantile probability must lie in [0, 1), got {u}")));
    }
    Ok(scale * (-(-u).ln_1p()).powf(1.0 / shape))
}

pub fn weibull_mean(shape: f64, scale: f64) -> f64 {
    scale * gamma(1.0 + 1.0 / shape)
}

pub fn weibull_cdf(v: f64, shape: f64, scale: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        1.0 - (-(v / scale).powf(shape)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindParams {
    /// Weibull shape k.
    pub shape: f64,
    /// Weibull scale lambda, in per-unit speed. Zero gives a constant speed.
    pub scale: f64,
    /// Mean wind speed, per-unit of the farm's speed base.
    pub mean_speed: f64,
    /// Correlation time of the latent Gaussian process, seconds.
    pub correlation_time: f64,
}

impl Default for WindParams {
    fn default() -> Self {
        Self { shape: 1.0, scale: 0.02, mean_speed: 1.0, correlation_time: 0.5 }
    }
}

impl WindParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.shape > 0.0) || !(self.scale >= 0.0) || !(self.correlation_time > 0.0) {
            return Err(Error::Config(format!(
                "wind process needs shape > 0, scale >= 0, correlation_time > 0; got {self:?}"
            )));
        }
        if !self.mean_speed.is_finite() {
            return Err(Error::Config("wind mean speed must be finite".into()));
        }
        Ok(())
    }
}

/// Weibull-marginal wind speed built from a unit Ornstein-Uhlenbeck latent
/// state: `z -> Phi(z) -> Weibull quantile`, re-centred on the mean speed.
#[derive(Debug, Clone)]
pub struct WindSpeedProcess {
    params: WindParams,
    offset: f64,
    z: f64,
    rng: ChaCha8Rng,
}

impl WindSpeedProcess {
    /// Starts from a stationary latent draw.
    pub fn new(params: WindParams, mut rng: ChaCha8Rng) -> Result<Self> {
        params.validate()?;
        let z = StandardNormal.sample(&mut rng);
        let offset = if params.scale > 0.0 { weibull_mean(params.shape, params.scale) } else { 0.0 };
        Ok(Self { params, offset, z, rng })
    }

    pub fn params(&self) -> &WindParams {
        &self.params
    }

    pub fn latent(&self) -> f64 {
        self.z
    }

    /// Advances the latent state by `dt` seconds (exact OU discretisation)
    /// and returns the emitted wind speed.
    pub fn step(&mut self, dt: f64) -> f64 {
        debug_assert!(dt > 0.0);
        let a = (-dt / self.params.correlation_time).exp();
        let eta: f64 = StandardNormal.sample(&mut self.rng);
        self.z = a * self.z + (1.0 - a * a).sqrt() * eta;
        self.params.mean_speed + self.fluctuation() - self.offset
    }

    /// Weibull-distributed fluctuation for the current latent state.
    ///
    /// Uses the upper tail `1 - Phi(z) = Phi(-z)` directly so that large `z`
    /// never rounds the probability up to 1.
    fn fluctuation(&self) -> f64 {
        let WindParams { shape, scale, .. } = self.params;
        if scale == 0.0 {
            return 0.0;
        }
        let survival = standard_normal_cdf(-self.z);
        scale * (-survival.ln()).powf(1.0 / shape)
    }
}

/// Independent per-bus Gaussian load fluctuations.
#[derive(Debug, Clone)]
pub struct LoadNoise {
    pub sigma: Vec<f64>,
    rng: ChaCha8Rng,
}

impl LoadNoise {
    pub fn new(sigma: Vec<f64>, rng: ChaCha8Rng) -> Self {
        Self { sigma, rng }
    }

    /// Draws one vector of i.i.d. standard normals.
    pub fn sample_xi(&mut self) -> DVector<f64> {
        let n = self.sigma.len();
        DVector::from_fn(n, |_, _| StandardNormal.sample(&mut self.rng))
    }

    /// `Pe_i + E_i^2 G_ii sigma_i xi_i`.
    pub fn perturb(&self, pe: &DVector<f64>, load_gain: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(pe.len(), |i, _| pe[i] + load_gain[i] * self.sigma[i] * xi[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_examples() {
        assert_eq!(weibull_quantile(0.0, 1.7, 3.0).unwrap(), 0.0);
        let u = 1.0 - (-1.0f64).exp();
        for k in [0.5, 1.0, 2.0, 3.5] {
            assert!((weibull_quantile(u, k, 0.7).unwrap() - 0.7).abs() < 1e-12);
        }
        assert!((weibull_quantile(0.5, 1.0, 2.0).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn quantile_domain() {
        assert!(matches!(weibull_quantile(1.0, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(weibull_quantile(-0.1, 1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn quantile_increasing() {
        let mut prev = -1.0;
        for i in 0..1000 {
            let q = weibull_quantile(i as f64 / 1000.0, 2.0, 1.0).unwrap();
            assert!(q > prev);
            prev = q;
        }
    }

    #[test]
    fn normal_cdf_accuracy() {
        // Reference values of Phi.
        let table = [
            (0.0, 0.5),
            (1.0, 0.841_344_746_068_542_9),
            (-1.96, 0.024_997_895_148_220_435),
            (3.0, 0.998_650_101_968_369_9),
            (-5.0, 2.866_515_718_791_939e-7),
        ];
        for (z, p) in table {
            assert!((standard_normal_cdf(z) - p).abs() < 1e-7, "Phi({z})");
        }
    }

    #[test]
    fn degenerate_scale_is_constant() {
        let p = WindParams { shape: 1.0, scale: 0.0, mean_speed: 1.3, correlation_time: 1.0 };
        let mut w = WindSpeedProcess::new(p, stream_rng(1, 0, StreamLabel::Wind(0))).unwrap();
        for _ in 0..100 {
            assert_eq!(w.step(0.3), 1.3);
        }
    }

    #[test]
    fn latent_autocorrelation_matches_ou() {
        for (dt, tc) in [(0.3, 1.0), (5.0, 1.0)] {
            let p = WindParams { correlation_time: tc, ..WindParams::default() };
            let mut w = WindSpeedProcess::new(p, stream_rng(7, 3, StreamLabel::Wind(1))).unwrap();
            let n = 100_000;
            let mut prev = w.latent();
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for _ in 0..n {
                w.step(dt);
                let z = w.latent();
                sxy += prev * z;
                sxx += prev * prev;
                prev = z;
            }
            let rho = sxy / sxx;
            let theory = (-dt / tc).exp();
            assert!((rho - theory).abs() < 0.02, "dt={dt}: {rho} vs {theory}");
        }
    }

    #[test]
    fn marginal_passes_ks_against_weibull() {
        for (k, lambda) in [(1.0, 0.02), (2.0, 1.5)] {
            let p = WindParams { shape: k, scale: lambda, mean_speed: 1.0, correlation_time: 0.1 };
            let mut w = WindSpeedProcess::new(p, stream_rng(11, 0, StreamLabel::Wind(0))).unwrap();
            let mean = weibull_mean(k, lambda);
            // dt >> correlation time gives effectively independent samples.
            let mut xs: Vec<f64> = (0..100_000).map(|_| w.step(2.0) - 1.0 + mean).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = xs.len() as f64;
            let d = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let f = weibull_cdf(x, k, lambda);
                    (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
                })
                .fold(0.0, f64::max);
            // Asymptotic 1% critical value.
            let crit = 1.6276 / n.sqrt();
            assert!(d < crit, "k={k}: D={d} crit={crit}");
        }
    }

    #[test]
    fn load_noise_zero_sigma_leaves_power() {
        let ln = LoadNoise::new(vec![0.0; 3], stream_rng(1, 0, StreamLabel::Load));
        let pe = DVector::from_vec(vec![1.0, -0.5, 2.0]);
        let gain = DVector::from_vec(vec![0.8, 0.9, 1.1]);
        let xi = DVector::from_vec(vec![1.3, -2.0, 0.4]);
        assert_eq!(ln.perturb(&pe, &gain, &xi), pe);
    }

    #[test]
    fn load_noise_replays() {
        let mut a = LoadNoise::new(vec![0.1; 4], stream_rng(9, 2, StreamLabel::Load));
        let mut b = LoadNoise::new(vec![0.1; 4], stream_rng(9, 2, StreamLabel::Load));
        for _ in 0..10 {
            assert_eq!(a.sample_xi(), b.sample_xi());
        }
    }

    #[test]
    fn load_noise_moments() {
        let mut ln = LoadNoise::new(vec![1.0; 3], stream_rng(21, 0, StreamLabel::Load));
        let n = 1_000_000;
        let mut s1 = DVector::zeros(3);
        let mut s2 = DVector::zeros(3);
        for _ in 0..n {
            let x = ln.sample_xi();
            s1 += &x;
            s2 += x.component_mul(&x);
        }
        for i in 0..3 {
            let m = s1[i] / n as f64;
            let v = s2[i] / n as f64 - m * m;
            assert!(m.abs() < 0.004, "mean {m}");
            assert!((v - 1.0).abs() < 0.01, "var {v}");
        }
    }

    #[test]
    fn streams_are_independent() {
        use rand::RngCore;
        let mut a = stream_rng(3, 0, StreamLabel::Load);
        let mut b = stream_rng(3, 0, StreamLabel::Wind(0));
        let first_b = b.clone().next_u64();
        for _ in 0..1000 {
            a.next_u64();
        }
        assert_eq!(b.next_u64(), first_b);
        assert_ne!(stream_rng(3, 0, StreamLabel::Load).next_u64(), stream_rng(3, 1, StreamLabel::Load).next_u64());
    }
}
