//! Classical multi-machine network model.
//!
//! Generators are represented by constant emf behind the Kron-reduced
//! network. The swing equations are
//!
//! ```text
//! d(delta_i)/dt = omega_i
//! M_i d(omega_i)/dt = Pm_i - Pe_i - D_i omega_i
//! Pe_i = E_i * sum_j E_j |Y_ij| cos(delta_i - delta_j - phi_ij)
//! ```
//!
//! Optionally one node of the reduced network is an infinite bus (an
//! external-grid equivalent at fixed voltage and zero angle). Without it the
//! electrical power depends only on angle differences and the linearisation
//! carries a zero eigenvalue; with it the state matrix can be Hurwitz.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};

const FOUR_MACHINE: &str = include_str!("../data/four_machine.toml");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorParams {
    /// Inertia coefficient M_i.
    pub inertia: f64,
    /// Damping coefficient D_i.
    pub damping: f64,
    /// Transient emf magnitude E_i.
    pub emf: f64,
    /// Mechanical power input P_m_i.
    pub mech_power: f64,
}

impl GeneratorParams {
    pub fn new(inertia: f64, damping: f64, emf: f64, mech_power: f64) -> Result<Self> {
        let g = Self { inertia, damping, emf, mech_power };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if !(self.inertia > 0.0) {
            return Err(Error::Config(format!("inertia must be > 0, got {}", self.inertia)));
        }
        if !(self.emf > 0.0) {
            return Err(Error::Config(format!("emf must be > 0, got {}", self.emf)));
        }
        if !(self.damping >= 0.0) {
            return Err(Error::Config(format!("damping must be >= 0, got {}", self.damping)));
        }
        if !self.mech_power.is_finite() {
            return Err(Error::Config("mechanical power must be finite".into()));
        }
        Ok(())
    }
}

/// Square complex nodal admittance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Admittance {
    y: DMatrix<Complex64>,
}

impl Admittance {
    pub fn new(y: DMatrix<Complex64>) -> Result<Self> {
        if !y.is_square() {
            return Err(Error::Config(format!(
                "admittance matrix must be square, got {}x{}",
                y.nrows(),
                y.ncols()
            )));
        }
        if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Config("admittance matrix has non-finite entries".into()));
        }
        Ok(Self { y })
    }

    /// Builds a symmetric matrix from `(i, j, |Y|, angle_radians)` entries (0-based).
    pub fn from_polar(size: usize, entries: &[(usize, usize, f64, f64)]) -> Result<Self> {
        let mut y = DMatrix::<Complex64>::zeros(size, size);
        for &(i, j, mag, ang) in entries {
            if i >= size || j >= size {
                return Err(Error::Config(format!(
                    "admittance entry ({}, {}) outside a {size}-node network",
                    i + 1,
                    j + 1
                )));
            }
            let v = Complex64::from_polar(mag, ang);
            y[(i, j)] = v;
            y[(j, i)] = v;
        }
        Self::new(y)
    }

    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.y
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.y[(i, j)]
    }

    pub fn magnitude(&self, i: usize, j: usize) -> f64 {
        self.y[(i, j)].norm()
    }

    /// Angle phi_ij in radians.
    pub fn angle(&self, i: usize, j: usize) -> f64 {
        self.y[(i, j)].arg()
    }

    pub fn conductance(&self, i: usize, j: usize) -> f64 {
        self.y[(i, j)].re
    }

    pub fn susceptance(&self, i: usize, j: usize) -> f64 {
        self.y[(i, j)].im
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.dim();
        let scale = self.y.iter().map(|v| v.norm()).fold(1.0, f64::max);
        (0..n).all(|i| (0..i).all(|j| (self.y[(i, j)] - self.y[(j, i)]).norm() <= tol * scale))
    }
}

/// Eliminates every bus not listed in `retained` by Schur complement,
/// `Y_rr - Y_re * Y_ee^-1 * Y_er`. The output is ordered as `retained`.
pub fn kron_reduce(full: &DMatrix<Complex64>, retained: &[usize]) -> Result<Admittance> {
    if !full.is_square() {
        return Err(Error::Config("full admittance matrix must be square".into()));
    }
    let n = full.nrows();
    let mut seen = vec![false; n];
    for &r in retained {
        if r >= n || seen[r] {
            return Err(Error::Config(format!("retained bus index {r} is invalid or repeated")));
        }
        seen[r] = true;
    }
    let eliminated: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| full[(rows[i], cols[j])])
    };
    let y_rr = pick(retained, retained);
    if eliminated.is_empty() {
        return Admittance::new(y_rr);
    }
    let y_re = pick(retained, &eliminated);
    let y_er = pick(&eliminated, retained);
    let y_ee = pick(&eliminated, &eliminated);

    let fail = || Error::ReductionFailure { buses: eliminated.clone() };
    let lu = y_ee.clone().full_piv_lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].norm()).collect();
    let max_pivot = pivots.iter().cloned().fold(0.0, f64::max);
    let min_pivot = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max_pivot > 0.0) || min_pivot <= 1e-12 * max_pivot {
        return Err(fail());
    }
    let x = lu.solve(&y_er).ok_or_else(fail)?;
    Admittance::new(y_rr - y_re * x)
}

/// Fixed-voltage external-grid node that survives reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct InfiniteBus {
    pub voltage: f64,
    /// Transfer admittance between each generator node and the infinite bus.
    pub ties: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct GridModel {
    pub generators: Vec<GeneratorParams>,
    pub admittance: Admittance,
    pub infinite_bus: Option<InfiniteBus>,
    /// Generator indices (0-based) hosting wind farms.
    pub wind_buses: Vec<usize>,
    /// Per-bus relative standard deviation of load fluctuations.
    pub load_sigma: Vec<f64>,
}

impl GridModel {
    pub fn new(
        generators: Vec<GeneratorParams>,
        admittance: Admittance,
        infinite_bus: Option<InfiniteBus>,
        wind_buses: Vec<usize>,
        load_sigma: Vec<f64>,
    ) -> Result<Self> {
        let n = generators.len();
        if n == 0 {
            return Err(Error::Config("grid needs at least one generator".into()));
        }
        for g in &generators {
            g.validate()?;
        }
        if admittance.dim() != n {
            return Err(Error::Config(format!(
                "admittance dimension {} does not match generator count {n}",
                admittance.dim()
            )));
        }
        if !admittance.is_symmetric(1e-9) {
            return Err(Error::Config("reduced admittance matrix is not symmetric".into()));
        }
        if let Some(ib) = &infinite_bus {
            if ib.ties.len() != n || !(ib.voltage > 0.0) {
                return Err(Error::Config("infinite bus needs one tie per generator and voltage > 0".into()));
            }
        }
        if let Some(&b) = wind_buses.iter().find(|&&b| b >= n) {
            return Err(Error::Config(format!("wind bus {} is not a generator bus", b + 1)));
        }
        if load_sigma.len() != n || load_sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config(format!(
                "load_sigma needs {n} non-negative entries, got {:?}",
                load_sigma
            )));
        }
        Ok(Self { generators, admittance, infinite_bus, wind_buses, load_sigma })
    }

    /// The built-in four-machine two-area fixture.
    pub fn four_machine() -> Self {
        Self::from_toml_str(FOUR_MACHINE).expect("built-in fixture parses")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: GridFile = toml::from_str(text)?;
        file.into_model()
    }

    pub fn n(&self) -> usize {
        self.generators.len()
    }

    pub fn with_load_sigma(mut self, sigma: f64) -> Self {
        self.load_sigma = vec![sigma; self.n()];
        self
    }

    pub fn inertia(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.generators.iter().map(|g| g.inertia))
    }

    pub fn mech_power(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.generators.iter().map(|g| g.mech_power))
    }

    /// E_i^2 G_ii: the load-noise gain of each machine.
    pub fn load_gain(&self) -> DVector<f64> {
        DVector::from_fn(self.n(), |i, _| {
            let e = self.generators[i].emf;
            e * e * self.admittance.conductance(i, i)
        })
    }
}

/// Electrical power output of every generator at rotor angles `delta`.
pub fn electrical_power(delta: &[f64], model: &GridModel) -> DVector<f64> {
    let n = model.n();
    assert_eq!(delta.len(), n, "angle vector length must match generator count");
    let y = &model.admittance;
    DVector::from_fn(n, |i, _| {
        let ei = model.generators[i].emf;
        let mut p = 0.0;
        for j in 0..n {
            let ej = model.generators[j].emf;
            p += ej * y.magnitude(i, j) * (delta[i] - delta[j] - y.angle(i, j)).cos();
        }
        if let Some(ib) = &model.infinite_bus {
            let t = ib.ties[i];
            p += ib.voltage * t.norm() * (delta[i] - t.arg()).cos();
        }
        ei * p
    })
}

/// Analytic Jacobian dPe/d(delta).
pub fn power_jacobian(delta: &[f64], model: &GridModel) -> DMatrix<f64> {
    let n = model.n();
    let y = &model.admittance;
    let mut j_mat = DMatrix::zeros(n, n);
    for i in 0..n {
        let ei = model.generators[i].emf;
        let mut diag = 0.0;
        for k in 0..n {
            if k == i {
                continue;
            }
            let ek = model.generators[k].emf;
            let v = ei * ek * y.magnitude(i, k) * (delta[i] - delta[k] - y.angle(i, k)).sin();
            j_mat[(i, k)] = v;
            diag -= v;
        }
        if let Some(ib) = &model.infinite_bus {
            let t = ib.ties[i];
            diag -= ei * ib.voltage * t.norm() * (delta[i] - t.arg()).sin();
        }
        j_mat[(i, i)] = diag;
    }
    j_mat
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-8 }
    }
}

pub fn solve_equilibrium(model: &GridModel) -> Result<DVector<f64>> {
    solve_equilibrium_with(model, NewtonOptions::default())
}

/// Damped Newton solve of `Pm = Pe(delta)` with zero speed deviation.
///
/// The angle reference is the infinite bus when present; otherwise machine 1
/// is pinned at zero and its balance is checked after convergence.
pub fn solve_equilibrium_with(model: &GridModel, opts: NewtonOptions) -> Result<DVector<f64>> {
    let n = model.n();
    let pm = model.mech_power();
    let free: Vec<usize> = if model.infinite_bus.is_some() { (0..n).collect() } else { (1..n).collect() };
    let residual = |d: &DVector<f64>| &pm - electrical_power(d.as_slice(), model);
    let free_norm = |r: &DVector<f64>| free.iter().map(|&i| r[i].abs()).fold(0.0, f64::max);

    let mut delta = DVector::zeros(n);
    let mut r = residual(&delta);
    let mut iterations = 0;
    while free_norm(&r) >= opts.tol {
        if iterations == opts.max_iter {
            return Err(Error::Infeasible { iterations, residual: r.amax() });
        }
        iterations += 1;
        let jac = power_jacobian(delta.as_slice(), model);
        let m = free.len();
        let j_sub = DMatrix::from_fn(m, m, |a, b| jac[(free[a], free[b])]);
        let r_sub = DVector::from_fn(m, |a, _| r[free[a]]);
        // Pe(delta + step) ~ Pe + J step = Pm
        let step = j_sub
            .lu()
            .solve(&r_sub)
            .ok_or(Error::Infeasible { iterations, residual: r.amax() })?;
        let current = free_norm(&r);
        let mut scale = 1.0;
        loop {
            let mut trial = delta.clone();
            for (a, &i) in free.iter().enumerate() {
                trial[i] += scale * step[a];
            }
            let rt = residual(&trial);
            if free_norm(&rt) < current || scale < 1e-6 {
                delta = trial;
                r = rt;
                break;
            }
            scale *= 0.5;
        }
    }
    if r.amax() >= opts.tol {
        return Err(Error::Infeasible { iterations, residual: r.amax() });
    }
    Ok(delta)
}

/// Linearised stochastic model around an equilibrium.
#[derive(Debug, Clone)]
pub struct LinearModel {
    /// State matrix A (2n x 2n), state ordered as (delta deviations, omega deviations).
    pub state_matrix: DMatrix<f64>,
    /// Load-noise input matrix B_xi (2n x n).
    pub noise_input: DMatrix<f64>,
    pub delta0: DVector<f64>,
    pub omega0: DVector<f64>,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.state_matrix.nrows()
    }
}

pub fn linearize(model: &GridModel, delta0: &DVector<f64>) -> LinearModel {
    let n = model.n();
    let jac = power_jacobian(delta0.as_slice(), model);
    let gain = model.load_gain();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let mut b = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        let g = &model.generators[i];
        a[(i, n + i)] = 1.0;
        for k in 0..n {
            a[(n + i, k)] = -jac[(i, k)] / g.inertia;
        }
        a[(n + i, n + i)] = -g.damping / g.inertia;
        b[(n + i, i)] = -gain[i] * model.load_sigma[i] / g.inertia;
    }
    LinearModel { state_matrix: a, noise_input: b, delta0: delta0.clone(), omega0: DVector::zeros(n) }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    generator: Vec<GeneratorEntry>,
    admittance: AdmittanceSection,
    infinite_bus: Option<InfiniteBusSection>,
    #[serde(default)]
    wind_buses: Vec<usize>,
    load_sigma: LoadSigma,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorEntry {
    inertia: f64,
    damping: f64,
    emf: f64,
    mech_power: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdmittanceSection {
    size: usize,
    /// `[i, j, magnitude, angle_degrees]`, 1-based.
    entries: Vec<(usize, usize, f64, f64)>,
    retain: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InfiniteBusSection {
    node: usize,
    voltage: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum LoadSigma {
    Uniform(f64),
    PerBus(Vec<f64>),
}

fn one_based(i: usize, what: &str) -> Result<usize> {
    i.checked_sub(1).ok_or_else(|| Error::Config(format!("{what} indices are 1-based, got 0")))
}

impl GridFile {
    fn into_model(self) -> Result<GridModel> {
        let size = self.admittance.size;
        let entries = self
            .admittance
            .entries
            .iter()
            .map(|&(i, j, m, deg)| Ok((one_based(i, "admittance")?, one_based(j, "admittance")?, m, deg.to_radians())))
            .collect::<Result<Vec<_>>>()?;
        let full = Admittance::from_polar(size, &entries)?;
        let retained = match &self.admittance.retain {
            Some(r) => r.iter().map(|&i| one_based(i, "retain")).collect::<Result<Vec<_>>>()?,
            None => (0..size).collect(),
        };
        let reduced = kron_reduce(full.matrix(), &retained)?;

        let (admittance, infinite_bus) = match &self.infinite_bus {
            None => (reduced, None),
            Some(ib) => {
                let node = one_based(ib.node, "infinite bus")?;
                let pos = retained
                    .iter()
                    .position(|&r| r == node)
                    .ok_or_else(|| Error::Config("infinite bus node must be retained".into()))?;
                let keep: Vec<usize> = (0..retained.len()).filter(|&k| k != pos).collect();
                let y = reduced.matrix();
                let gen_y = DMatrix::from_fn(keep.len(), keep.len(), |a, b| y[(keep[a], keep[b])]);
                let ties = keep.iter().map(|&k| y[(k, pos)]).collect();
                (Admittance::new(gen_y)?, Some(InfiniteBus { voltage: ib.voltage, ties }))
            }
        };

        let generators = self
            .generator
            .iter()
            .map(|g| GeneratorParams::new(g.inertia, g.damping, g.emf, g.mech_power))
            .collect::<Result<Vec<_>>>()?;
        let n = generators.len();
        let wind_buses = self.wind_buses.iter().map(|&b| one_based(b, "wind bus")).collect::<Result<Vec<_>>>()?;
        let load_sigma = match self.load_sigma {
            LoadSigma::Uniform(s) => vec![s; n],
            LoadSigma::PerBus(v) => v,
        };
        GridModel::new(generators, admittance, infinite_bus, wind_buses, load_sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_machine(delta_sep: f64) -> GridModel {
        // Two identical machines through a lossy line with shunt loads.
        let y12 = Complex64::new(-0.3, 4.0);
        let y11 = Complex64::new(0.9, -3.8);
        let y = DMatrix::from_row_slice(2, 2, &[y11, y12, y12, y11]);
        let gens = vec![
            GeneratorParams::new(0.5, 0.2, 1.05, 0.0).unwrap(),
            GeneratorParams::new(0.5, 0.2, 1.05, 0.0).unwrap(),
        ];
        let mut model = GridModel::new(gens, Admittance::new(y).unwrap(), None, vec![], vec![0.01; 2]).unwrap();
        let pe = electrical_power(&[delta_sep / 2.0, -delta_sep / 2.0], &model);
        for i in 0..2 {
            model.generators[i].mech_power = pe[i];
        }
        model
    }

    #[test]
    fn kron_identity_when_nothing_eliminated() {
        let g = GridModel::four_machine();
        let y = g.admittance.matrix().clone();
        let r = kron_reduce(&y, &[0, 1, 2, 3]).unwrap();
        assert_eq!(r.matrix(), &y);
    }

    #[test]
    fn kron_star_network() {
        // Three outer buses tied to a centre bus with identical admittance y.
        let y = Complex64::new(1.0, -10.0);
        let mut full = DMatrix::<Complex64>::zeros(4, 4);
        for i in 0..3 {
            full[(i, i)] = y;
            full[(i, 3)] = -y;
            full[(3, i)] = -y;
        }
        full[(3, 3)] = y * 3.0;
        let r = kron_reduce(&full, &[0, 1, 2]).unwrap();
        // Hand Schur complement: y - y*y/(3y) = 2y/3 on the diagonal, -y/3 off it.
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { y * (2.0 / 3.0) } else { -y / 3.0 };
                assert!((r.entry(i, j) - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn kron_preserves_symmetry() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut full = DMatrix::<Complex64>::zeros(5, 5);
        for i in 0..5 {
            for j in i..5 {
                let v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-5.0..5.0));
                full[(i, j)] = v;
                full[(j, i)] = v;
            }
            full[(i, i)] += Complex64::new(3.0, -12.0);
        }
        let r = kron_reduce(&full, &[0, 2, 4]).unwrap();
        assert!(r.is_symmetric(1e-12));
        // Explicit Schur complement.
        let rr = [0, 2, 4];
        let ee = [1, 3];
        let pick = |a: &[usize], b: &[usize]| DMatrix::from_fn(a.len(), b.len(), |i, j| full[(a[i], b[j])]);
        let explicit = pick(&rr, &rr) - pick(&rr, &ee) * pick(&ee, &ee).try_inverse().unwrap() * pick(&ee, &rr);
        assert!((r.matrix() - explicit).norm() < 1e-12);
    }

    #[test]
    fn kron_singular_block_names_buses() {
        let mut full = DMatrix::<Complex64>::zeros(3, 3);
        full[(0, 0)] = Complex64::new(1.0, -5.0);
        full[(1, 1)] = Complex64::new(1.0, -5.0);
        match kron_reduce(&full, &[0, 1]) {
            Err(Error::ReductionFailure { buses }) => assert_eq!(buses, vec![2]),
            other => panic!("expected reduction failure, got {other:?}"),
        }
    }

    #[test]
    fn single_machine_self_term() {
        let y = DMatrix::from_element(1, 1, Complex64::new(0.7, -4.0));
        let g = GeneratorParams::new(1.0, 0.5, 1.0, 0.7).unwrap();
        let model = GridModel::new(vec![g], Admittance::new(y).unwrap(), None, vec![], vec![0.0]).unwrap();
        for d in [0.0, 0.4, -2.0] {
            assert!((electrical_power(&[d], &model)[0] - 0.7).abs() < 1e-14);
        }
        let d0 = solve_equilibrium(&model).unwrap();
        assert_eq!(d0[0], 0.0);
        let lin = linearize(&model, &d0);
        assert_eq!(lin.state_matrix, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -0.5]));
    }

    #[test]
    fn identical_machines_share_power() {
        let m = two_machine(0.0);
        let pe = electrical_power(&[0.3, 0.3], &m);
        assert_eq!(pe[0], pe[1]);
    }

    #[test]
    fn double_sum_matches_scalar_loop() {
        let m = two_machine(0.2);
        let d = [0.1, -0.1];
        let pe = electrical_power(&d, &m);
        // Independent evaluation from real and imaginary parts.
        let mut expect = [0.0; 2];
        for i in 0..2 {
            for j in 0..2 {
                let yij = m.admittance.entry(i, j);
                let (g, b) = (yij.re, yij.im);
                let th = d[i] - d[j];
                expect[i] += 1.05 * 1.05 * (g * th.cos() + b * th.sin());
            }
        }
        for i in 0..2 {
            assert!((pe[i] - expect[i]).abs() < 1e-13, "{} vs {}", pe[i], expect[i]);
        }
    }

    #[test]
    fn equilibrium_zero_residual_start() {
        let m = two_machine(0.0);
        let d0 = solve_equilibrium(&m).unwrap();
        assert_eq!(d0.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn equilibrium_two_machine_residual() {
        let m = two_machine(0.3);
        let d0 = solve_equilibrium(&m).unwrap();
        assert_eq!(d0[0], 0.0);
        let r = m.mech_power() - electrical_power(d0.as_slice(), &m);
        assert!(r.amax() < 1e-8);
        assert!((d0[1] + 0.3).abs() < 1e-6);
    }

    #[test]
    fn equilibrium_infeasible_transfer() {
        let mut m = two_machine(0.0);
        // Far beyond the transfer limit of the line.
        m.generators[1].mech_power = 50.0;
        m.generators[0].mech_power = -50.0;
        assert!(matches!(solve_equilibrium(&m), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn fixture_equilibrium_and_structure() {
        let m = GridModel::four_machine();
        let d0 = solve_equilibrium(&m).unwrap();
        let r = m.mech_power() - electrical_power(d0.as_slice(), &m);
        assert!(r.amax() < 1e-8);
        let expect = [0.15, 0.10, -0.05, -0.12];
        for i in 0..4 {
            assert!((d0[i] - expect[i]).abs() < 1e-6, "{:?}", d0);
        }
        let lin = linearize(&m, &d0);
        let n = 4;
        for i in 0..n {
            for j in 0..n {
                assert_eq!(lin.state_matrix[(i, j)], 0.0);
                assert_eq!(lin.state_matrix[(i, n + j)], if i == j { 1.0 } else { 0.0 });
                assert_eq!(lin.noise_input[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for m in [two_machine(0.3), GridModel::four_machine()] {
            let d0 = solve_equilibrium(&m).unwrap();
            let jac = power_jacobian(d0.as_slice(), &m);
            let h = 1e-6;
            for k in 0..m.n() {
                let mut up = d0.clone();
                let mut dn = d0.clone();
                up[k] += h;
                dn[k] -= h;
                let col = (electrical_power(up.as_slice(), &m) - electrical_power(dn.as_slice(), &m)) / (2.0 * h);
                for i in 0..m.n() {
                    let scale = jac[(i, k)].abs().max(1.0);
                    assert!((col[i] - jac[(i, k)]).abs() < 1e-6 * scale);
                }
            }
        }
    }

    #[test]
    fn jacobian_rows_sum_to_zero_without_infinite_bus() {
        let m = two_machine(0.4);
        let j = power_jacobian(&[0.3, -0.5], &m);
        for i in 0..2 {
            assert!(j.row(i).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn grid_file_errors() {
        let bad = FOUR_MACHINE.replace("wind_buses = [2, 3]", "wind_buses = [9]");
        assert!(matches!(GridModel::from_toml_str(&bad), Err(Error::Config(_))));
        let bad = FOUR_MACHINE.replace("inertia = 1.7", "inertia = -1.7");
        assert!(matches!(GridModel::from_toml_str(&bad), Err(Error::Config(_))));
        let bad = FOUR_MACHINE.replace("node = 5", "node = 0");
        assert!(GridModel::from_toml_str(&bad).is_err());
    }

    #[test]
    fn grid_file_kron_reduction_on_load() {
        // A 3-node star with generator nodes 1-2, eliminating node 3.
        let text = r#"
            wind_buses = [1]
            load_sigma = 0.02
            [[generator]]
            inertia = 1.0
            damping = 0.5
            emf = 1.0
            mech_power = 0.0
            [[generator]]
            inertia = 1.0
            damping = 0.5
            emf = 1.0
            mech_power = 0.0
            [admittance]
            size = 3
            retain = [1, 2]
            entries = [[1, 1, 10.0, -90.0], [2, 2, 10.0, -90.0], [3, 3, 20.0, -80.0],
                       [1, 3, 10.0, 90.0], [2, 3, 10.0, 90.0]]
        "#;
        let m = GridModel::from_toml_str(text).unwrap();
        assert_eq!(m.n(), 2);
        assert_eq!(m.load_sigma, vec![0.02, 0.02]);
        assert!(m.admittance.conductance(0, 0) > 0.0);
    }
}
