//! Exact single-mode Jaynes-Cummings + two-level solver in a truncated Fock
//! space with Lindblad cavity decay and pure dephasing.
//!
//! Ground truth for dressed energies, weak-excitation dynamics, and photon
//! statistics. Rate conventions: a "half width gamma" maps to Lindblad rate
//! 2 gamma on the corresponding channel, so amplitude decay goes as
//! exp(-gamma t) in both this solver and the correlation dynamics.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::numerics::{hermitian_eigenvalues, hermiticity_defect};

/// Dot levels of the effective two-level system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DotLevel {
    Down,
    Up,
}

/// Truncated single-mode model parameters (angular GHz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Fock cutoff; the photon basis is |0..n_max>.
    pub n_max: usize,
    pub g: f64,
    pub delta: f64,
    pub gamma_p: f64,
    pub gamma_cav: f64,
}

impl OracleConfig {
    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    fn validate(&self) -> Result<()> {
        if self.n_max < 1 {
            return Err(Error::Contract(format!(
                "oracle: n_max must be >= 1, got {}",
                self.n_max
            )));
        }
        if !(self.g > 0.0) || self.gamma_p < 0.0 || self.gamma_cav < 0.0 {
            return Err(Error::Config(
                "oracle: require g > 0 and nonnegative widths".into(),
            ));
        }
        Ok(())
    }
}

/// Basis index for dot level `d` and photon number `n`.
fn idx(n_max: usize, d: DotLevel, n: usize) -> usize {
    let block = match d {
        DotLevel::Down => 0,
        DotLevel::Up => 1,
    };
    block * (n_max + 1) + n
}

/// Photon annihilation operator on the dot x Fock product space.
pub fn annihilation(n_max: usize) -> Array2<C64> {
    let dim = 2 * (n_max + 1);
    let mut b = Array2::from_elem((dim, dim), C64::new(0.0, 0.0));
    for d in [DotLevel::Down, DotLevel::Up] {
        for n in 1..=n_max {
            b[[idx(n_max, d, n - 1), idx(n_max, d, n)]] = C64::new((n as f64).sqrt(), 0.0);
        }
    }
    b
}

/// Dot lowering operator |down><up| on the product space.
pub fn sigma_minus(n_max: usize) -> Array2<C64> {
    let dim = 2 * (n_max + 1);
    let mut sm = Array2::from_elem((dim, dim), C64::new(0.0, 0.0));
    for n in 0..=n_max {
        sm[[idx(n_max, DotLevel::Down, n), idx(n_max, DotLevel::Up, n)]] = C64::new(1.0, 0.0);
    }
    sm
}

/// Projector onto the excited dot level.
pub fn up_projector(n_max: usize) -> Array2<C64> {
    let dim = 2 * (n_max + 1);
    let mut pu = Array2::from_elem((dim, dim), C64::new(0.0, 0.0));
    for n in 0..=n_max {
        let i = idx(n_max, DotLevel::Up, n);
        pu[[i, i]] = C64::new(1.0, 0.0);
    }
    pu
}

/// Rotating-frame Jaynes-Cummings Hamiltonian: delta on the excited dot, the
/// cavity mode at zero offset, coupling g between |n, up> and |n+1, down>.
pub fn jc_hamiltonian(cfg: &OracleConfig) -> Array2<C64> {
    let n_max = cfg.n_max;
    let dim = cfg.dim();
    let mut h = Array2::from_elem((dim, dim), C64::new(0.0, 0.0));
    for n in 0..=n_max {
        let up = idx(n_max, DotLevel::Up, n);
        h[[up, up]] = C64::new(cfg.delta, 0.0);
    }
    for n in 0..n_max {
        // <n+1, down| H |n, up> = g sqrt(n+1)
        let a = idx(n_max, DotLevel::Down, n + 1);
        let b = idx(n_max, DotLevel::Up, n);
        let g = C64::new(cfg.g * ((n + 1) as f64).sqrt(), 0.0);
        h[[a, b]] = g;
        h[[b, a]] = g;
    }
    h
}

/// Density matrix over the dot x Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleState {
    pub rho: Array2<C64>,
    pub n_max: usize,
}

impl OracleState {
    /// Pure product state |level> x |n>.
    pub fn fock(n_max: usize, level: DotLevel, n: usize) -> Result<Self> {
        if n > n_max {
            return Err(Error::Contract(format!(
                "oracle state: photon number {n} exceeds cutoff {n_max}"
            )));
        }
        let dim = 2 * (n_max + 1);
        let mut rho = Array2::from_elem((dim, dim), C64::new(0.0, 0.0));
        let i = idx(n_max, level, n);
        rho[[i, i]] = C64::new(1.0, 0.0);
        Ok(OracleState { rho, n_max })
    }

    /// Coherent state of amplitude `alpha` in the mode, dot unexcited,
    /// renormalized on the truncated basis.
    pub fn coherent(n_max: usize, alpha: C64) -> Self {
        let dim = 2 * (n_max + 1);
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
        for n in 0..=n_max {
            if n > 0 {
                c = c * alpha / C64::new((n as f64).sqrt(), 0.0);
            }
            amps[idx(n_max, DotLevel::Down, n)] = c;
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in amps.iter_mut() {
            *a /= norm;
        }
        let mut rho = Array2::from_elem((dim, dim), C64::new(0.0, 0.0));
        for i in 0..dim {
            for j in 0..dim {
                rho[[i, j]] = amps[i] * amps[j].conj();
            }
        }
        OracleState { rho, n_max }
    }

    /// Pure state from explicit amplitudes over the product basis.
    pub fn from_amplitudes(n_max: usize, amps: &[C64]) -> Result<Self> {
        let dim = 2 * (n_max + 1);
        if amps.len() != dim {
            return Err(Error::Contract(format!(
                "oracle state: need {dim} amplitudes, got {}",
                amps.len()
            )));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Contract("oracle state: zero state vector".into()));
        }
        let mut rho = Array2::from_elem((dim, dim), C64::new(0.0, 0.0));
        for i in 0..dim {
            for j in 0..dim {
                rho[[i, j]] = amps[i] * amps[j].conj() / (norm * norm);
            }
        }
        Ok(OracleState { rho, n_max })
    }

    pub fn trace(&self) -> f64 {
        (0..self.rho.nrows()).map(|i| self.rho[[i, i]].re).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.rho)
    }

    /// Smallest eigenvalue of rho; slightly negative values signal numerical
    /// error, anything below -1e-9 is treated as a failure in tests.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let evals = hermitian_eigenvalues(&self.rho)?;
        Ok(evals.first().copied().unwrap_or(0.0))
    }

    /// Population of the basis state |level> x |n>.
    pub fn population(&self, level: DotLevel, n: usize) -> f64 {
        let i = idx(self.n_max, level, n);
        self.rho[[i, i]].re
    }
}

/// Eigenvalues of the closed-system Jaynes-Cummings Hamiltonian, ascending.
/// At zero detuning the k-excitation manifold contributes the pair
/// center -+ g sqrt(k).
pub fn dressed_spectrum(cfg: &OracleConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    hermitian_eigenvalues(&jc_hamiltonian(cfg))
}

/// Splitting of manifold `k` extracted from a dressed spectrum by nearest
/// matching against the expected pair positions.
pub fn manifold_splitting(evals: &[f64], k: u32, g: f64, delta: f64) -> f64 {
    let center = delta / 2.0;
    let half = (delta * delta / 4.0 + k as f64 * g * g).sqrt();
    let nearest = |target: f64| {
        evals
            .iter()
            .copied()
            .min_by(|a, b| {
                (a - target)
                    .abs()
                    .partial_cmp(&(b - target).abs())
                    .unwrap()
            })
            .expect("nonempty spectrum")
    };
    nearest(center + half) - nearest(center - half)
}

/// Classical drive pulse on the cavity mode: E(t) B^dag + conj(E(t)) B with a
/// Gaussian envelope. `sigma` is the spectral standard deviation of the pulse
/// intensity profile, matching the multimode pump convention; the peak
/// amplitude is alpha sigma / sqrt(pi), which loads |<B>| = alpha into a bare
/// resonant mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSpec {
    pub alpha: f64,
    pub sigma: f64,
    /// Carrier offset from the cavity resonance (GHz).
    pub carrier: f64,
    pub t_peak: f64,
}

impl DriveSpec {
    pub fn amplitude(&self, t: f64) -> C64 {
        let tau = t - self.t_peak;
        let envelope = self.alpha * self.sigma / std::f64::consts::PI.sqrt()
            * (-self.sigma * self.sigma * tau * tau).exp();
        C64::from_polar(envelope, -self.carrier * tau)
    }
}

/// Expectation value tr(rho M).
pub fn expectation(rho: &Array2<C64>, m: &Array2<C64>) -> C64 {
    let dim = rho.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..dim {
        for j in 0..dim {
            acc += rho[[i, j]] * m[[j, i]];
        }
    }
    acc
}

/// Exact operator moments of one oracle state, including the correlated
/// (singlet-subtracted) parts matching the cluster model's conventions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// <B>.
    pub mean_b: C64,
    /// <Bdag B>.
    pub photon_number: f64,
    /// <BB>.
    pub bb: C64,
    /// Correlated occupation <Bdag B> - |<B>|^2.
    pub n_corr: f64,
    /// Correlated squeezing <BB> - <B>^2.
    pub s_corr: C64,
    /// <Bdag Bdag B B>.
    pub four_photon: f64,
    /// g2 = <Bdag Bdag B B>/<Bdag B>^2; None when <Bdag B> = 0.
    pub g2: Option<f64>,
    /// Excited-dot population.
    pub f_up: f64,
    /// <sigma_minus>.
    pub p: C64,
}

impl Moments {
    /// Singlet-doublet (Gaussian) factorization of the four-photon quantity:
    /// |b|^4 + 4 |b|^2 n + 2 Re(conj(b)^2 s) + 2 n^2 + |s|^2.
    pub fn factorized_four_photon(&self) -> f64 {
        let b2 = self.mean_b.norm_sqr();
        b2 * b2
            + 4.0 * b2 * self.n_corr
            + 2.0 * (self.mean_b.conj() * self.mean_b.conj() * self.s_corr).re
            + 2.0 * self.n_corr * self.n_corr
            + self.s_corr.norm_sqr()
    }
}

/// Operator cache for moment evaluation.
pub struct MomentOps {
    b: Array2<C64>,
    bb: Array2<C64>,
    number: Array2<C64>,
    four: Array2<C64>,
    sm: Array2<C64>,
    pu: Array2<C64>,
}

impl MomentOps {
    pub fn new(n_max: usize) -> Self {
        let b = annihilation(n_max);
        let bb = b.dot(&b);
        let bdag = b.t().mapv(|z| z.conj());
        let number = bdag.dot(&b);
        // Bdag Bdag B B = n(n-1), diagonal in the Fock basis.
        let dim = 2 * (n_max + 1);
        let mut four = Array2::from_elem((dim, dim), C64::new(0.0, 0.0));
        for d in [DotLevel::Down, DotLevel::Up] {
            for n in 0..=n_max {
                let i = idx(n_max, d, n);
                four[[i, i]] = C64::new((n * (n - n.min(1))) as f64, 0.0);
            }
        }
        MomentOps {
            b,
            bb,
            number,
            four,
            sm: sigma_minus(n_max),
            pu: up_projector(n_max),
        }
    }
}

/// Compute exact moments; g2 is signaled as undefined when the photon number
/// vanishes rather than returning NaN.
pub fn moments(state: &OracleState, ops: &MomentOps) -> Moments {
    let rho = &state.rho;
    let mean_b = expectation(rho, &ops.b);
    let photon_number = expectation(rho, &ops.number).re;
    let bb = expectation(rho, &ops.bb);
    let four_photon = expectation(rho, &ops.four).re;
    let n_corr = photon_number - mean_b.norm_sqr();
    let s_corr = bb - mean_b * mean_b;
    let g2 = if photon_number > 0.0 {
        Some(four_photon / (photon_number * photon_number))
    } else {
        None
    };
    Moments {
        mean_b,
        photon_number,
        bb,
        n_corr,
        s_corr,
        four_photon,
        g2,
        f_up: expectation(rho, &ops.pu).re,
        p: expectation(rho, &ops.sm),
    }
}

/// Snapshot of an oracle trajectory.
#[derive(Debug, Clone)]
pub struct OracleSnapshot {
    pub t: f64,
    pub state: OracleState,
    pub moments: Moments,
}

/// Lindblad RK4 evolution. Records every `record_every` steps plus the
/// endpoints; errors out if the trace drifts beyond 1e-6.
pub fn evolve(
    cfg: &OracleConfig,
    initial: &OracleState,
    t_end: f64,
    dt: f64,
    drive: Option<&DriveSpec>,
    record_every: usize,
) -> Result<Vec<OracleSnapshot>> {
    cfg.validate()?;
    if initial.n_max != cfg.n_max {
        return Err(Error::Contract(format!(
            "oracle evolve: state cutoff {} does not match config {}",
            initial.n_max, cfg.n_max
        )));
    }
    let scale = cfg
        .g
        .max(cfg.gamma_p)
        .max(cfg.gamma_cav)
        .max(cfg.delta.abs())
        .max(drive.map(|d| d.carrier.abs().max(d.sigma)).unwrap_or(0.0));
    if dt > 0.02 / scale * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "oracle evolve: dt = {dt} violates the bound 0.02/max scale = {}",
            0.02 / scale
        )));
    }
    if record_every == 0 {
        return Err(Error::Config("oracle evolve: record_every must be >= 1".into()));
    }

    let h0 = jc_hamiltonian(cfg);
    let b = annihilation(cfg.n_max);
    let bdag = b.t().mapv(|z| z.conj());
    let number = bdag.dot(&b);
    let pu = up_projector(cfg.n_max);
    let ops = MomentOps::new(cfg.n_max);
    let kappa = 2.0 * cfg.gamma_cav;
    let kphi = 2.0 * cfg.gamma_p;

    let rhs = |t: f64, rho: &Array2<C64>| -> Array2<C64> {
        let mut h = h0.clone();
        if let Some(d) = drive {
            let e = d.amplitude(t);
            // E(t) Bdag + conj(E) B
            h = h + &bdag.mapv(|z| z * e) + &b.mapv(|z| z * e.conj());
        }
        let mut out = (h.dot(rho) - rho.dot(&h)).mapv(|z| mul_neg_i(z));
        if kappa > 0.0 {
            let jump = b.dot(rho).dot(&bdag);
            let anti = number.dot(rho) + rho.dot(&number);
            out = out + jump.mapv(|z| kappa * z) - anti.mapv(|z| 0.5 * kappa * z);
        }
        if kphi > 0.0 {
            // Pu is a projector, so Pu^dag Pu = Pu.
            let jump = pu.dot(rho).dot(&pu);
            let anti = pu.dot(rho) + rho.dot(&pu);
            out = out + jump.mapv(|z| kphi * z) - anti.mapv(|z| 0.5 * kphi * z);
        }
        out
    };

    let n_steps = (t_end / dt).round() as usize;
    let mut rho = initial.rho.clone();
    let mut t = 0.0;
    let mut snapshots = Vec::with_capacity(n_steps / record_every + 2);
    let record = |snaps: &mut Vec<OracleSnapshot>, t: f64, rho: &Array2<C64>| -> Result<()> {
        let state = OracleState {
            rho: rho.clone(),
            n_max: cfg.n_max,
        };
        let drift = (state.trace() - 1.0).abs();
        if drift > 1e-6 {
            return Err(Error::Numerics(format!(
                "oracle evolve: trace drift {drift:e} at t = {t}"
            )));
        }
        let m = moments(&state, &ops);
        snaps.push(OracleSnapshot {
            t,
            state,
            moments: m,
        });
        Ok(())
    };
    record(&mut snapshots, t, &rho)?;
    for step in 1..=n_steps {
        let k1 = rhs(t, &rho);
        let k2 = rhs(t + 0.5 * dt, &(&rho + &k1.mapv(|z| 0.5 * dt * z)));
        let k3 = rhs(t + 0.5 * dt, &(&rho + &k2.mapv(|z| 0.5 * dt * z)));
        let k4 = rhs(t + dt, &(&rho + &k3.mapv(|z| dt * z)));
        rho = &rho
            + &k1.mapv(|z| dt / 6.0 * z)
            + &k2.mapv(|z| dt / 3.0 * z)
            + &k3.mapv(|z| dt / 3.0 * z)
            + &k4.mapv(|z| dt / 6.0 * z);
        t = step as f64 * dt;
        if step % record_every == 0 || step == n_steps {
            record(&mut snapshots, t, &rho)?;
        }
    }
    Ok(snapshots)
}

#[inline(always)]
fn mul_neg_i(z: C64) -> C64 {
    C64::new(z.im, -z.re)
}

/// Weak-drive scenario for the factorization audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorizationScenario {
    pub drive: DriveSpec,
    pub t_end: f64,
    pub dt: f64,
    pub record_every: usize,
}

/// Relative deviation between the exact four-photon moment and its
/// singlet-doublet factorization along a driven trajectory.
#[derive(Debug, Clone)]
pub struct FactorizationReport {
    pub times: Vec<f64>,
    pub exact: Vec<f64>,
    pub factorized: Vec<f64>,
    /// Pointwise |exact - factorized| / |exact|, defined as 0 where the exact
    /// value is negligible relative to its trajectory maximum.
    pub rel_dev: Vec<f64>,
    pub max_rel_dev: f64,
}

/// Run the drive scenario and measure how well the singlet-doublet
/// factorization reproduces the exact four-photon expectation value.
pub fn factorization_error(
    cfg: &OracleConfig,
    scenario: &FactorizationScenario,
) -> Result<FactorizationReport> {
    if scenario.drive.alpha * scenario.drive.alpha > 0.5 {
        return Err(Error::Config(
            "factorization audit: restrict to weak drive |alpha|^2 <= 0.5".into(),
        ));
    }
    let initial = OracleState::fock(cfg.n_max, DotLevel::Down, 0)?;
    let snaps = evolve(
        cfg,
        &initial,
        scenario.t_end,
        scenario.dt,
        Some(&scenario.drive),
        scenario.record_every,
    )?;
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    let exact: Vec<f64> = snaps.iter().map(|s| s.moments.four_photon).collect();
    let factorized: Vec<f64> = snaps
        .iter()
        .map(|s| s.moments.factorized_four_photon())
        .collect();
    let sup = exact.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let floor = 1e-12 * sup;
    let rel_dev: Vec<f64> = exact
        .iter()
        .zip(&factorized)
        .map(|(e, f)| {
            if e.abs() <= floor {
                0.0
            } else {
                (e - f).abs() / e.abs()
            }
        })
        .collect();
    let max_rel_dev = rel_dev.iter().fold(0.0_f64, |m, x| m.max(*x));
    Ok(FactorizationReport {
        times,
        exact,
        factorized,
        rel_dev,
        max_rel_dev,
    })
}
