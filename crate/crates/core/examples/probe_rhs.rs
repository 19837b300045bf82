//! Per-equation validation of the cluster RHS against the exact single-mode
//! model: extract every connected quantity from the oracle density matrix,
//! evaluate the analytic cluster derivative on it, and compare with a
//! finite-difference derivative of the exact connected quantities.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rfspec::dynamics::{ClusterModel, CorrelationState};
use rfspec::modes::{CouplingSet, ModeGrid};
use rfspec::oracle::{
    annihilation, evolve, sigma_minus, up_projector, OracleConfig, OracleState,
};
use rfspec::params::{load_scenario, Scenario};

struct Extract {
    beta: C64,
    p: C64,
    f: f64,
    s: C64,
    n: C64,
    pi: C64,
    theta: C64,
    phi: C64,
    w: C64,
    v: C64,
    r: C64,
    u: C64,
    x: C64,
}

fn tr(rho: &Array2<C64>, m: &Array2<C64>) -> C64 {
    let d = rho.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            acc += rho[[i, j]] * m[[j, i]];
        }
    }
    acc
}

fn extract(rho: &Array2<C64>, n_max: usize) -> Extract {
    let b = annihilation(n_max);
    let bd = b.t().mapv(|z| z.conj());
    let sm = sigma_minus(n_max);
    let md = up_projector(n_max);
    let bb = b.dot(&b);
    let bdb = bd.dot(&b);
    let beta = tr(rho, &b);
    let p = tr(rho, &sm);
    let f = tr(rho, &md).re;
    let s = tr(rho, &bb) - beta * beta;
    let n = tr(rho, &bdb) - beta.conj() * beta;
    let pi = tr(rho, &b.dot(&sm)) - beta * p;
    let theta = tr(rho, &bd.dot(&sm)) - beta.conj() * p;
    let phi = 2.0 * (tr(rho, &b.dot(&md)) - beta * f);
    let feh = 2.0 * f;
    let w = 2.0 * tr(rho, &bb.dot(&md)) - beta * beta * feh - 2.0 * beta * phi - s * feh;
    let v = 2.0 * tr(rho, &bdb.dot(&md))
        - beta.conj() * beta * feh
        - beta.conj() * phi
        - beta * phi.conj()
        - n * feh;
    let sp = sm.t().mapv(|z| z.conj());
    let r = tr(rho, &bb.dot(&sp)) - beta * beta * p.conj() - 2.0 * beta * theta.conj()
        - s * p.conj();
    let u = tr(rho, &bdb.dot(&sm)) - beta.conj() * beta * p - beta.conj() * pi - beta * theta
        - n * p;
    let x = tr(rho, &bb.dot(&sm)) - beta * beta * p - 2.0 * beta * pi - s * p;
    Extract {
        beta,
        p,
        f,
        s,
        n,
        pi,
        theta,
        phi,
        w,
        v,
        r,
        u,
        x,
    }
}

fn to_state(e: &Extract) -> CorrelationState {
    let mut st = CorrelationState::zeros_with_triplets(1);
    st.beta[0] = e.beta;
    st.p = e.p;
    st.f_e = e.f;
    st.f_h = e.f;
    st.s[[0, 0]] = e.s;
    st.n[[0, 0]] = e.n;
    st.pi[0] = e.pi;
    st.theta[0] = e.theta;
    st.phi[0] = e.phi;
    {
        let t = st.triplets.as_deref_mut().unwrap();
        t.w[[0, 0]] = e.w;
        t.v[[0, 0]] = e.v;
        t.r[[0, 0]] = e.r;
        t.u[[0, 0]] = e.u;
        t.x[[0, 0]] = e.x;
    }
    st
}

fn main() {
    let g = 11.0;
    let n_max = 14;
    let ocfg = OracleConfig {
        n_max,
        g,
        delta: 0.0,
        gamma_p: 0.0,
        gamma_cav: 0.0,
    };
    let mut params = load_scenario(Scenario::Disk);
    params.g = g;
    params.gamma_p = 0.0;
    params.delta = 0.0;
    let grid = ModeGrid::single_mode(0.0);
    let couplings = CouplingSet {
        f: Array1::from_elem(1, g),
    };
    let model = ClusterModel::new(&params, &grid, &couplings).unwrap();

    for alpha_sq in [0.05_f64, 0.0125, 0.003125] {
        let alpha = alpha_sq.sqrt();
        println!("== alpha^2 = {alpha_sq}");
        // Evolve to a representative time inside the first Rabi period,
        // where every channel is populated.
        let t_probe = 0.22;
        let dt = 1e-5;
        let initial = OracleState::coherent(n_max, C64::new(alpha, 0.0));
        let snaps = evolve(&ocfg, &initial, t_probe + dt, dt, None, 1).unwrap();
        let k = (t_probe / dt).round() as usize;
        let em = extract(&snaps[k - 1].state.rho, n_max);
        let e0 = extract(&snaps[k].state.rho, n_max);
        let ep = extract(&snaps[k + 1].state.rho, n_max);

        let st = to_state(&e0);
        let mut d = CorrelationState::zeros_with_triplets(1);
        model.derivative(&st, &mut d);

        let fd = |a: C64, b: C64| (b - a) / (2.0 * dt);
        let rows: Vec<(&str, C64, C64, f64)> = vec![
            ("beta", d.beta[0], fd(em.beta, ep.beta), e0.beta.norm()),
            ("P", d.p, fd(em.p, ep.p), e0.p.norm()),
            (
                "f",
                C64::new(d.f_e, 0.0),
                C64::new((ep.f - em.f) / (2.0 * dt), 0.0),
                e0.f.abs(),
            ),
            ("s", d.s[[0, 0]], fd(em.s, ep.s), e0.s.norm()),
            ("n", d.n[[0, 0]], fd(em.n, ep.n), e0.n.norm()),
            ("Pi", d.pi[0], fd(em.pi, ep.pi), e0.pi.norm()),
            ("Theta", d.theta[0], fd(em.theta, ep.theta), e0.theta.norm()),
            ("Phi", d.phi[0], fd(em.phi, ep.phi), e0.phi.norm()),
            (
                "W",
                d.triplets.as_deref().unwrap().w[[0, 0]],
                fd(em.w, ep.w),
                e0.w.norm(),
            ),
            (
                "V",
                d.triplets.as_deref().unwrap().v[[0, 0]],
                fd(em.v, ep.v),
                e0.v.norm(),
            ),
            (
                "R",
                d.triplets.as_deref().unwrap().r[[0, 0]],
                fd(em.r, ep.r),
                e0.r.norm(),
            ),
            (
                "U",
                d.triplets.as_deref().unwrap().u[[0, 0]],
                fd(em.u, ep.u),
                e0.u.norm(),
            ),
            (
                "X",
                d.triplets.as_deref().unwrap().x[[0, 0]],
                fd(em.x, ep.x),
                e0.x.norm(),
            ),
        ];
        for (name, cl, ex, scale) in rows {
            let resid = (cl - ex).norm();
            let denom = ex.norm().max(1e-300);
            println!(
                "{name:>6}: |rhs_cluster - rhs_exact| = {resid:.3e}  (|rhs_exact| = {:.3e}, rel = {:.3e}, |value| = {scale:.3e})",
                ex.norm(),
                resid / denom
            );
        }

        // Hypothesis check: the residuals of W/R/U/X equal the dropped
        // pure-photon triplet contributions.
        let b = annihilation(n_max);
        let bd = b.t().mapv(|z| z.conj());
        let bbb = b.dot(&b).dot(&b);
        let bdbb = bd.dot(&b).dot(&b);
        let rho = &snaps[k].state.rho;
        let y3 = tr(rho, &bbb) - e0.beta.powu(3) - 3.0 * e0.beta * e0.s;
        let z3 = tr(rho, &bdbb)
            - e0.beta.conj() * e0.beta * e0.beta
            - e0.beta.conj() * e0.s
            - 2.0 * e0.beta * e0.n;
        let psf = 1.0 - 2.0 * e0.f;
        let mni = |z: C64| C64::new(z.im, -z.re);
        let dtr = d.triplets.as_deref().unwrap();
        let x_fixed = dtr.x[[0, 0]] + mni(psf * g * y3);
        let r_fixed = dtr.r[[0, 0]] + mni(-psf * g * z3);
        let u_fixed = dtr.u[[0, 0]] + mni(psf * g * z3);
        let w_fixed =
            dtr.w[[0, 0]] + mni(2.0 * g * (e0.p.conj() * y3 - e0.p * z3));
        println!("  |Y3| = {:.3e}, |Z3| = {:.3e}", y3.norm(), z3.norm());
        println!(
            "  with photon-triplet terms added: X resid {:.3e}, R resid {:.3e}, U resid {:.3e}, W resid {:.3e}",
            (x_fixed - fd(em.x, ep.x)).norm(),
            (r_fixed - fd(em.r, ep.r)).norm(),
            (u_fixed - fd(em.u, ep.u)).norm(),
            (w_fixed - fd(em.w, ep.w)).norm()
        );
    }
}
