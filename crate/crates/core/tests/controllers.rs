use mgshield::attacks::{Attack, AttackTarget, LinkInjection};
use mgshield::cases::{paper_scenario, PaperCase};
use mgshield::controllers::{
    bound_epsilon_omega, bound_epsilon_p, build_freq_system, build_power_reduction, freq_derivative,
    freq_eigen_products, power_derivative, power_eigen_products, ControlParams,
};
use mgshield::graph::Topology;
use mgshield::linalg::{kron, mat_exp_apply, Matrix};
use mgshield::sim::{run, Channel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pinned_topology() -> impl Strategy<Value = Topology> {
    (any::<u64>(), 2usize..=8, 0.0f64..0.7).prop_map(|(seed, n, p)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Topology::random_pinned(n, p, &mut rng)
    })
}

fn params(n: usize, beta: f64) -> ControlParams {
    ControlParams {
        beta,
        omega_ref: 314.0,
        droop: vec![2e-3; n],
    }
}

proptest! {
    #[test]
    fn reference_is_fixed_point(t in pinned_topology(), beta in 0.1f64..10.0) {
        let n = t.n();
        let sys = build_freq_system(&t, &params(n, beta)).unwrap();
        let (w, z) = freq_derivative(&vec![314.0; n], &vec![0.0; n], &vec![0.0; n], &sys, &params(n, beta)).unwrap();
        for v in w.iter().chain(&z) {
            prop_assert!(v.abs() <= 1e-12 * 314.0 * (1.0 + beta));
        }
    }

    #[test]
    fn closed_loops_are_hurwitz(t in pinned_topology(), beta in 0.01f64..20.0) {
        let n = t.n();
        let sys = build_freq_system(&t, &params(n, beta)).unwrap();
        prop_assert!(freq_eigen_products(&sys).unwrap().iter().all(|c| c.re < 0.0));
        let ps = build_power_reduction(&t.laplacian(), beta).unwrap();
        prop_assert!(power_eigen_products(&ps).iter().all(|c| c.re < 0.0));
    }

    #[test]
    fn power_loop_conserves_sums(
        t in pinned_topology(),
        seed in any::<u64>(),
        beta in 0.1f64..5.0,
    ) {
        use rand::Rng;
        let n = t.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = || (0..n).map(|_| rng.random_range(-20.0..20.0)).collect::<Vec<f64>>();
        let (x, z, d) = (v(), v(), v());
        let (dx, dz) = power_derivative(&x, &z, &d, &t.laplacian(), &params(n, beta)).unwrap();
        prop_assert!(dx.iter().sum::<f64>().abs() < 1e-9);
        prop_assert!(dz.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn bounds_monotone(t in pinned_topology(), b1 in 0.1f64..5.0, db in 0.01f64..5.0, d in 0.1f64..10.0) {
        let b2 = b1 + db;
        prop_assert!(bound_epsilon_omega(&t, b2, d).unwrap() < bound_epsilon_omega(&t, b1, d).unwrap());
        prop_assert!(bound_epsilon_p(&t, b2, d).unwrap() < bound_epsilon_p(&t, b1, d).unwrap());
        prop_assert!(bound_epsilon_omega(&t, b1, 2.0 * d).unwrap() > bound_epsilon_omega(&t, b1, d).unwrap());
        prop_assert!(bound_epsilon_p(&t, b1, 2.0 * d).unwrap() > bound_epsilon_p(&t, b1, d).unwrap());
    }
}

/// Power loop simulated in the Laplacian eigenbasis with the consensus
/// direction dropped, then mapped back, against the full simulation.
#[test]
fn reduced_power_dynamics_match_direct_simulation() {
    let mut s = paper_scenario(PaperCase::NoAttack);
    s.integration.horizon = 8.0;
    // constant node-level power attack d = [1.5, 0, -0.5, 0] via links into nodes 1 and 3
    for (receiver, sender, value) in [(0, 1, 1.5), (2, 3, -0.5)] {
        s.attacks.push(Attack::Link(LinkInjection {
            receiver,
            sender,
            target: AttackTarget::Power,
            value,
            start: 0.0,
            end: None,
        }));
    }
    let trace = run(&s).unwrap();

    let ps = build_power_reduction(&s.topology.laplacian(), s.control.beta).unwrap();
    let m = ps.r.len();
    let x0 = trace.state(0);
    let (x_bar, x_tilde) = ps.reduce(&x0.mp_p);
    let (_, z_tilde) = ps.reduce(&x0.z_p);
    let (_, d_tilde) = ps.reduce(&[1.5, 0.0, -0.5, 0.0]);

    // augmented reduced system [x~; z~; 1]
    let mut aug = Matrix::zeros(2 * m + 1, 2 * m + 1);
    aug.set_block(0, 0, &kron(&ps.phi_tilde, &Matrix::from_diag(&ps.r)));
    for i in 0..m {
        aug[(i, 2 * m)] = ps.r[i] * d_tilde[i];
    }
    let mut xi0: Vec<f64> = x_tilde.into_iter().chain(z_tilde).collect();
    xi0.push(1.0);

    let mp = trace.channel(Channel::MpP);
    let mut worst = 0.0f64;
    for k in (0..trace.len()).step_by(400) {
        let xi = mat_exp_apply(&aug, trace.time(k), &xi0).unwrap();
        let back = ps.expand(x_bar, &xi[..m]);
        for (a, b) in back.iter().zip(mp.row(k)) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-7, "reduced vs direct gap {worst:e}");
}
