use rfspec::crosscheck::cluster_oracle_equivalence;

fn main() {
    let g = 11.0;
    let t_end = 3.0 * std::f64::consts::PI / g;
    for alpha_sq in [0.05, 0.0125, 0.005, 0.00125] {
        let r =
            cluster_oracle_equivalence(g, (alpha_sq as f64).sqrt(), 0.0, t_end, 2e-4, 10, 14)
                .unwrap();
        println!(
            "alpha^2 = {:.5}: beta_rel = {:.4e}  f_rel = {:.4e}  n_rel = {:.4e}",
            alpha_sq, r.beta_rel, r.f_rel, r.n_rel
        );
    }
}
