//! Small self-contained numerical routines: a cyclic Jacobi eigensolver for
//! Hermitian matrices and a windowed spectral-line frequency estimator.
//!
//! Both are deliberately dependency-free so the exact-diagonalization oracle
//! does not share any code path with the analytic ladder formulas it checks.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi rotations, ascending.
///
/// Intended for the small dense matrices that appear here (dimension of order
/// tens); convergence is quadratic and the routine is fully deterministic.
pub fn hermitian_eigenvalues(a: &Array2<C64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Contract(format!(
            "hermitian_eigenvalues: matrix must be square, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let fro: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let defect = hermiticity_defect(a);
    if defect > 1e-9 * fro.max(1.0) {
        return Err(Error::Contract(format!(
            "hermitian_eigenvalues: matrix is not Hermitian (defect {defect:e})"
        )));
    }

    let mut m = a.clone();
    // Enforce exact Hermiticity so rotations stay stable.
    for p in 0..n {
        m[[p, p]] = C64::new(m[[p, p]].re, 0.0);
        for q in (p + 1)..n {
            let avg = 0.5 * (m[[p, q]] + m[[q, p]].conj());
            m[[p, q]] = avg;
            m[[q, p]] = avg.conj();
        }
    }

    let tol = 1e-30_f64.max(1e-16 * fro);
    for _sweep in 0..100 {
        let off: f64 = {
            let mut acc = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    acc += m[[p, q]].norm_sqr();
                }
            }
            acc.sqrt()
        };
        if off <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let app = m[[p, p]].re;
                let aqq = m[[q, q]].re;
                // Phase factor that makes the (p,q) element real, then a real
                // rotation in the Numerical-Recipes convention.
                let phase = apq / mag;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Unitary: col p' = c*col_p - s*conj(phase)*col_q,
                //          col q' = s*phase*col_p + c*col_q  (phase on index q).
                let u_pp = C64::new(c, 0.0);
                let u_pq = C64::new(s, 0.0);
                let u_qp = -s * phase.conj();
                let u_qq = c * phase.conj();
                // M <- M U
                for r in 0..n {
                    let vp = m[[r, p]];
                    let vq = m[[r, q]];
                    m[[r, p]] = vp * u_pp + vq * u_qp;
                    m[[r, q]] = vp * u_pq + vq * u_qq;
                }
                // M <- U^dagger M
                for r in 0..n {
                    let vp = m[[p, r]];
                    let vq = m[[q, r]];
                    m[[p, r]] = u_pp.conj() * vp + u_qp.conj() * vq;
                    m[[q, r]] = u_pq.conj() * vp + u_qq.conj() * vq;
                }
                m[[p, q]] = C64::new(0.0, 0.0);
                m[[q, p]] = C64::new(0.0, 0.0);
                m[[p, p]] = C64::new(m[[p, p]].re, 0.0);
                m[[q, q]] = C64::new(m[[q, q]].re, 0.0);
            }
        }
    }

    let mut evals: Vec<f64> = (0..n).map(|p| m[[p, p]].re).collect();
    evals.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    Ok(evals)
}

/// Largest deviation from Hermiticity, max |a[p,q] - conj(a[q,p])|.
pub fn hermiticity_defect(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for p in 0..n {
        for q in 0..n {
            worst = worst.max((a[[p, q]] - a[[q, p]].conj()).norm());
        }
    }
    worst
}

/// Angular frequency of the dominant spectral line of `samples` within
/// `[omega_lo, omega_hi]` (rad per time unit of `dt`).
///
/// Mean removal plus a Hann window, then a dense scan of the windowed
/// discrete-time Fourier transform with parabolic refinement of the power
/// maximum. Resolves a clean line to far better than the 2*pi/T bin width.
pub fn dominant_frequency(samples: &[f64], dt: f64, omega_lo: f64, omega_hi: f64) -> Result<f64> {
    let m = samples.len();
    if m < 16 {
        return Err(Error::Contract(
            "dominant_frequency: need at least 16 samples".into(),
        ));
    }
    if !(dt > 0.0) || !(omega_hi > omega_lo) {
        return Err(Error::Contract(
            "dominant_frequency: require dt > 0 and omega_hi > omega_lo".into(),
        ));
    }
    let mean = samples.iter().sum::<f64>() / m as f64;
    let windowed: Vec<f64> = samples
        .iter()
        .enumerate()
        .map(|(k, y)| {
            let w = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / (m - 1) as f64).cos());
            (y - mean) * w
        })
        .collect();

    let n_scan = 2001;
    let d_omega = (omega_hi - omega_lo) / (n_scan - 1) as f64;
    let power_at = |omega: f64| -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for (k, y) in windowed.iter().enumerate() {
            let ph = -omega * dt * k as f64;
            acc += C64::from_polar(*y, ph);
        }
        acc.norm_sqr()
    };
    let mut best = (0usize, f64::MIN);
    let powers: Vec<f64> = (0..n_scan)
        .map(|i| power_at(omega_lo + i as f64 * d_omega))
        .collect();
    for (i, p) in powers.iter().enumerate() {
        if *p > best.1 {
            best = (i, *p);
        }
    }
    let i = best.0;
    let mut omega = omega_lo + i as f64 * d_omega;
    if i > 0 && i + 1 < n_scan {
        let (ym, y0, yp) = (powers[i - 1], powers[i], powers[i + 1]);
        let denom = ym - 2.0 * y0 + yp;
        if denom.abs() > 0.0 {
            omega += 0.5 * (ym - yp) / denom * d_omega;
        }
    }
    Ok(omega)
}
