#[path = "common/lattice.rs"]
mod lattice;

use lattice::{compare_step, setup, N};

#[test]
fn eight_cell_step_matches_lattice_search() {
    for (tau, c) in [(0.1, 0.8), (0.5, -0.3)] {
        let (t_ours, theta, t_star) = compare_step(tau, c);
        assert!((t_ours - theta).abs() < 1e-9, "Θ bookkeeping {t_ours} vs {theta}");
        assert!((t_ours - t_star).abs() <= 1e-4, "τ={tau}: {t_ours} vs lattice {t_star}");
    }
}

#[test]
fn oracle_w2_vanishes_at_mu() {
    let (o, ..) = setup(0.1, 0.0);
    assert!(o.w2_sq(&o.mu) < 1e-24);
    let mut shifted = [0.0; N];
    shifted[1..].copy_from_slice(&o.mu[..N - 1]);
    shifted[N - 1] += o.mu[N - 1];
    assert!(o.w2_sq(&shifted) > 0.0);
}
