//! Randomized invariants over states, Hamiltonians and ensembles.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use proptest::prelude::*;
use spinbath::bath_order::order_histogram;
use spinbath::hamiltonian::{bath_operator, dense_joint_matrix, joint_operator, DEFAULT_DENSE_CAP};
use spinbath::observables::{
    concurrence, concurrence_pure, concurrence_spectrum, ensemble_reduced_density, kron2, pauli_matrix,
    polarization, spin_flip, sub_reduce, two_spin_expectation, ReducedDensityMatrix,
};
use spinbath::propagator::{DenseEvolver, LaguerreConfig, LaguerrePropagator};
use spinbath::thermal::{boltzmann_weights, boltzmann_weights_from_energies, count_above, diagonalize_bath};
use spinbath::{ModelSpec, OperatorPart, PauliAxis, SiteIndex, StateVector, C64};

fn state_strategy(n: usize) -> impl Strategy<Value = StateVector> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1usize << n).prop_filter_map("zero vector", move |v| {
        let amps: Vec<C64> = v.into_iter().map(|(re, im)| C64::new(re, im)).collect();
        StateVector::new(n, amps).ok()?.normalized().ok()
    })
}

fn sized_state() -> impl Strategy<Value = StateVector> {
    (1usize..=6).prop_flat_map(state_strategy)
}

fn spec_strategy(max_bath: usize) -> impl Strategy<Value = ModelSpec> {
    (
        0..=max_bath,
        0.0f64..2.0,
        0.0f64..2.0,
        0.0f64..0.5,
        0.0f64..3.0,
        0.0f64..10.0,
        0.0f64..3.0,
        0.05f64..1.0,
    )
        .prop_map(|(n_bath, omega_s, omega_b, beta, lambda_ss, lambda_bb, lambda_sb, temperature)| ModelSpec {
            n_bath,
            omega_s,
            omega_b,
            beta,
            lambda_ss,
            lambda_bb,
            lambda_sb,
            temperature,
        })
}

fn spec_and_state(max_bath: usize) -> impl Strategy<Value = (ModelSpec, StateVector)> {
    spec_strategy(max_bath).prop_flat_map(|s| {
        let n = s.n_spins();
        (Just(s), state_strategy(n))
    })
}

fn close(a: &StateVector, b: &StateVector, tol: f64) -> bool {
    a.distance(b).unwrap() <= tol
}

fn site(i: usize) -> SiteIndex {
    SiteIndex::new(i).unwrap()
}

/// Random single-qubit unitary from Euler angles.
fn su2(a: f64, b: f64, c: f64) -> Matrix2<C64> {
    let (ca, sa) = ((a / 2.0).cos(), (a / 2.0).sin());
    let e = |phi: f64| C64::from_polar(1.0, phi);
    Matrix2::new(
        e(-(b + c) / 2.0) * ca,
        -e(-(b - c) / 2.0) * sa,
        e((b - c) / 2.0) * sa,
        e((b + c) / 2.0) * ca,
    )
}

fn rho_from_pure(amps: [C64; 4]) -> ReducedDensityMatrix {
    ReducedDensityMatrix::from_pure(amps).unwrap()
}

fn pure_two_qubit() -> impl Strategy<Value = [C64; 4]> {
    state_strategy(2).prop_map(|s| {
        let a = s.amplitudes();
        [a[0], a[1], a[2], a[3]]
    })
}

/// Concurrence from the eigenvalues of the non-Hermitian product ρρ̃.
fn concurrence_non_hermitian(rho: &ReducedDensityMatrix) -> f64 {
    let r = rho.entries() * spin_flip(rho);
    let eig = r.schur().eigenvalues().expect("complex Schur form is triangular");
    let mut l: Vec<f64> = eig.iter().map(|z| z.re.max(0.0).sqrt()).collect();
    l.sort_by(|a, b| b.total_cmp(a));
    (l[0] - l[1] - l[2] - l[3]).max(0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pauli_is_unitary_and_involutive(s in sized_state(), pick in 0usize..64, axis in 0usize..3) {
        let k = site(pick % s.n_spins() + 1);
        let axis = PauliAxis::ALL[axis];
        let once = s.apply_pauli(k, axis).unwrap();
        prop_assert!((once.norm() - 1.0).abs() < 1e-12);
        prop_assert!(close(&once.apply_pauli(k, axis).unwrap(), &s, 1e-12));
    }

    #[test]
    fn paulis_anticommute_on_site_and_commute_across(s in (2usize..=5).prop_flat_map(state_strategy), p in 0usize..64, q in 1usize..64) {
        let n = s.n_spins();
        let a = site(p % n + 1);
        let b = site((p + q % (n - 1) + 1) % n + 1);
        for (x, y) in [(PauliAxis::X, PauliAxis::Z), (PauliAxis::Y, PauliAxis::Z), (PauliAxis::X, PauliAxis::Y)] {
            let xy = s.apply_pauli(a, y).unwrap().apply_pauli(a, x).unwrap();
            let yx = s.apply_pauli(a, x).unwrap().apply_pauli(a, y).unwrap();
            prop_assert!(close(&xy, &yx.scaled(C64::new(-1.0, 0.0)), 1e-12));
            let across1 = s.apply_pauli(b, y).unwrap().apply_pauli(a, x).unwrap();
            let across2 = s.apply_pauli(a, x).unwrap().apply_pauli(b, y).unwrap();
            prop_assert!(close(&across1, &across2, 1e-12));
        }
        // σ_x σ_y = i σ_z
        let xy = s.apply_pauli(a, PauliAxis::Y).unwrap().apply_pauli(a, PauliAxis::X).unwrap();
        let z = s.apply_pauli(a, PauliAxis::Z).unwrap().scaled(C64::new(0.0, 1.0));
        prop_assert!(close(&xy, &z, 1e-12));
    }

    #[test]
    fn x_transform_conjugates_sigma_x_to_sigma_z(s in sized_state(), pick in 0usize..64) {
        let k = site(pick % s.n_spins() + 1);
        let u = s.to_x_basis(&[k]).unwrap();
        prop_assert!((u.norm() - 1.0).abs() < 1e-12);
        prop_assert!(close(&u.to_x_basis(&[k]).unwrap(), &s, 1e-12));
        // U σ_x U = −σ_z, since σ_z = +1 on bit 1 while U sends σ_x = +1 to bit 0
        let lhs = s.to_x_basis(&[k]).unwrap().apply_pauli(k, PauliAxis::X).unwrap().to_x_basis(&[k]).unwrap();
        let rhs = s.apply_pauli(k, PauliAxis::Z).unwrap().scaled(C64::new(-1.0, 0.0));
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn hamiltonian_is_hermitian_and_linear((spec, a) in spec_and_state(3), seed in any::<u64>()) {
        let n = spec.n_spins();
        let op = joint_operator(&spec, OperatorPart::Full).unwrap();
        let b = {
            let amps: Vec<C64> = (0..1usize << n).map(|i| {
                let x = (seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15)) as f64 / u64::MAX as f64;
                C64::new(x - 0.5, (x * 7.0).fract() - 0.5)
            }).collect();
            StateVector::new(n, amps).unwrap()
        };
        let ha = op.apply(&a).unwrap();
        let hb = op.apply(&b).unwrap();
        let lhs = b.inner(&ha).unwrap();
        let rhs = a.inner(&hb).unwrap().conj();
        prop_assert!((lhs - rhs).norm() < 1e-9 * (1.0 + lhs.norm()));
        let c = C64::new(0.3, -1.1);
        let combo = a.add_scaled(c, &b).unwrap();
        let expected = ha.add_scaled(c, &hb).unwrap();
        prop_assert!(close(&op.apply(&combo).unwrap(), &expected, 1e-9 * (1.0 + expected.norm())));
    }

    #[test]
    fn dense_matrix_agrees_with_matrix_free((spec, s) in spec_and_state(3)) {
        let dense = dense_joint_matrix(&spec, OperatorPart::Full, DEFAULT_DENSE_CAP).unwrap();
        let op = joint_operator(&spec, OperatorPart::Full).unwrap();
        let hs = op.apply(&s).unwrap();
        for (i, out) in hs.amplitudes().iter().enumerate() {
            let expected: C64 = (0..s.dim()).map(|j| s.amplitudes()[j] * dense[(i, j)]).sum();
            prop_assert!((expected - out).norm() < 1e-10);
        }
        prop_assert!((dense.clone() - dense.transpose()).amax() < 1e-14);
    }

    #[test]
    fn bath_relabeling_commutes_with_h((spec, s) in spec_and_state(4).prop_filter("needs two bath spins", |(sp, _)| sp.n_bath >= 2), p in 0usize..16, q in 1usize..16) {
        let m = spec.n_bath;
        let a = site(3 + p % m);
        let b = site(3 + (p + q % (m - 1) + 1) % m);
        let op = joint_operator(&spec, OperatorPart::Full).unwrap();
        let lhs = op.apply(&s.swap_sites(a, b).unwrap()).unwrap();
        let rhs = op.apply(&s).unwrap().swap_sites(a, b).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-10));
        // subsystem exchange symmetry
        let lhs = op.apply(&s.swap_sites(site(1), site(2)).unwrap()).unwrap();
        let rhs = op.apply(&s).unwrap().swap_sites(site(1), site(2)).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-10));
    }

    #[test]
    fn spectral_bounds_contain_spectrum(spec in spec_strategy(4)) {
        let op = joint_operator(&spec, OperatorPart::Full).unwrap();
        let (lo, hi) = op.spectral_bounds();
        let dense = op.to_dense(DEFAULT_DENSE_CAP).unwrap();
        let eig = dense.symmetric_eigenvalues();
        prop_assert!(eig.min() >= lo - 1e-9);
        prop_assert!(eig.max() <= hi + 1e-9);
    }

    #[test]
    fn energy_shift_leaves_weights_unchanged(energies in prop::collection::vec(-20.0f64..20.0, 1..40), shift in -1e3f64..1e3, t in 0.01f64..5.0) {
        let w = boltzmann_weights_from_energies(&energies, t).unwrap();
        let shifted: Vec<f64> = energies.iter().map(|e| e + shift).collect();
        let w2 = boltzmann_weights_from_energies(&shifted, t).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in w.iter().zip(&w2) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn retained_count_is_monotone_in_threshold(spec in spec_strategy(5), th in prop::collection::vec(1e-8f64..0.9, 2..6)) {
        let pairs = diagonalize_bath(&spec, DEFAULT_DENSE_CAP).unwrap();
        let w = boltzmann_weights(&pairs, spec.temperature).unwrap();
        let mut th = th;
        th.sort_by(f64::total_cmp);
        let counts: Vec<usize> = th.iter().map(|&t| count_above(&w, t)).collect();
        prop_assert!(counts.windows(2).all(|c| c[0] >= c[1]));
    }

    #[test]
    fn concurrence_routes_agree_and_are_local_invariant(amps in pure_two_qubit(), angles in prop::array::uniform6(0.0f64..6.3)) {
        let rho = rho_from_pure(amps);
        let c_herm = concurrence(&rho).unwrap();
        let c_pure = concurrence_pure(amps[0], amps[1], amps[2], amps[3]).unwrap();
        prop_assert!((c_herm - c_pure).abs() < 1e-6, "{} vs {}", c_herm, c_pure);
        let c_nh = concurrence_non_hermitian(&rho);
        prop_assert!((c_herm - c_nh).abs() < 1e-6);
        let u = kron2(&su2(angles[0], angles[1], angles[2]), &su2(angles[3], angles[4], angles[5]));
        let rotated = ReducedDensityMatrix::new(u * rho.entries() * u.adjoint()).unwrap();
        prop_assert!((concurrence(&rotated).unwrap() - c_herm).abs() < 1e-6);
    }

    #[test]
    fn mixed_state_concurrence_routes_agree(mix in prop::collection::vec((pure_two_qubit(), 0.01f64..1.0), 1..4)) {
        let total: f64 = mix.iter().map(|(_, w)| w).sum();
        let mut m = Matrix4::zeros();
        for (amps, w) in &mix {
            m += rho_from_pure(*amps).entries() * C64::new(w / total, 0.0);
        }
        let rho = ReducedDensityMatrix::new(m).unwrap();
        let c = concurrence(&rho).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!((c - concurrence_non_hermitian(&rho)).abs() < 1e-6);
        prop_assert!(concurrence_spectrum(&rho)[3] > -1e-8);
    }

    #[test]
    fn fluctuation_identity(amps in pure_two_qubit(), w in 0.0f64..1.0, amps2 in pure_two_qubit()) {
        let m = rho_from_pure(amps).entries() * C64::new(w, 0.0) + rho_from_pure(amps2).entries() * C64::new(1.0 - w, 0.0);
        let rho = ReducedDensityMatrix::new(m).unwrap();
        let id = Matrix2::<C64>::identity();
        for axis in PauliAxis::ALL {
            let p = pauli_matrix(axis);
            let total = kron2(&p, &id) + kron2(&id, &p);
            let lhs = rho.expectation(&(total * total)).re;
            let rhs = 2.0 + 2.0 * two_spin_expectation(&rho, axis).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn reduced_state_is_physical(s in (2usize..=7).prop_flat_map(state_strategy), s2 in (2usize..=7).prop_flat_map(state_strategy), w in 0.01f64..1.0) {
        prop_assume!(s.n_spins() == s2.n_spins());
        let rho = ensemble_reduced_density(&[(w, &s), (1.0 - w * 0.5, &s2)]).unwrap();
        rho.validate().unwrap();
        for keep in [1, 2] {
            let p = polarization(&sub_reduce(&rho, keep).unwrap()).unwrap();
            prop_assert!(p.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn single_spin_marginal_matches_direct_trace(s in (2usize..=7).prop_flat_map(state_strategy)) {
        let n = s.n_spins();
        let rho = ensemble_reduced_density(&[(0.3, &s)]).unwrap();
        for keep in [1usize, 2] {
            let shift = n - keep;
            let mut direct = Matrix2::<C64>::zeros();
            for (i, ai) in s.amplitudes().iter().enumerate() {
                for (j, aj) in s.amplitudes().iter().enumerate() {
                    if i & !(1 << shift) != j & !(1 << shift) {
                        continue;
                    }
                    let r = 1 - ((i >> shift) & 1);
                    let c = 1 - ((j >> shift) & 1);
                    direct[(r, c)] += ai * aj.conj();
                }
            }
            let reduced = sub_reduce(&rho, keep).unwrap();
            prop_assert!((reduced.entries() - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn histogram_is_normalized(s in (2usize..=8).prop_flat_map(state_strategy)) {
        let m = s.n_spins() - 2;
        let h = order_histogram(&[(0.7, &s)], m, 0.0, 0.0).unwrap();
        prop_assert!((h.total() - 1.0).abs() < 1e-12);
        h.validate().unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn thermal_weights_rebuild_gibbs_state(spec in spec_strategy(4)) {
        let pairs = diagonalize_bath(&spec, DEFAULT_DENSE_CAP).unwrap();
        let w = boltzmann_weights(&pairs, spec.temperature).unwrap();
        let dim = pairs.len();
        let mut rebuilt = DMatrix::<f64>::zeros(dim, dim);
        for (p, wn) in pairs.iter().zip(&w) {
            let v = DMatrix::from_iterator(dim, 1, p.state.amplitudes().iter().map(|a| a.re));
            rebuilt += &v * v.transpose() * *wn;
        }
        // independent route: exp(−(H_B − E_0)/T) by scaling and squaring
        let hb = bath_operator(&spec).unwrap().to_dense(DEFAULT_DENSE_CAP).unwrap();
        let e0 = hb.clone().symmetric_eigenvalues().min();
        let shifted = (hb - DMatrix::identity(dim, dim) * e0) * (-1.0 / spec.temperature);
        let gibbs = shifted.exp();
        let z = gibbs.trace();
        prop_assert!((rebuilt - gibbs / z).amax() < 1e-8);
    }

    #[test]
    fn laguerre_matches_oracle_and_conserves((spec, s) in spec_and_state(3), t_end in 0.5f64..5.0, alpha in prop::sample::select(vec![0.0, 1.0])) {
        let cfg = LaguerreConfig { alpha, ..LaguerreConfig::default() };
        let prop = LaguerrePropagator::new(&spec, &cfg).unwrap();
        let grid: Vec<f64> = (0..=10).map(|k| t_end * k as f64 / 10.0).collect();
        let traj = prop.evolve(&s, &grid).unwrap();
        let oracle = DenseEvolver::new(&spec, DEFAULT_DENSE_CAP).unwrap().evolve(&s, &grid).unwrap();
        prop_assert!(traj.max_deviation(&oracle).unwrap() < 1e-8);
        prop_assert!(traj.relative_energy_drift() < 1e-8);
        prop_assert!(traj.norms.iter().all(|n| (n - 1.0).abs() < 1e-9));
        prop_assert!(traj.stats.max_step_norm_deviation <= cfg.unitarity_tol);
    }

    #[test]
    fn forward_then_backward_is_identity((spec, s) in spec_and_state(3), t in 0.1f64..3.0) {
        let prop = LaguerrePropagator::new(&spec, &LaguerreConfig::default()).unwrap();
        let there = prop.propagate(&s, t).unwrap();
        let back = prop.propagate(&there, -t).unwrap();
        prop_assert!(close(&back, &s, 1e-8));
    }

    #[test]
    fn evolution_composes((spec, s) in spec_and_state(3), t in 0.1f64..3.0) {
        let prop = LaguerrePropagator::new(&spec, &LaguerreConfig::default()).unwrap();
        let twice = prop.propagate(&prop.propagate(&s, t).unwrap(), t).unwrap();
        let direct = prop.propagate(&s, 2.0 * t).unwrap();
        prop_assert!(close(&twice, &direct, 1e-8));
    }

    #[test]
    fn histogram_matches_dense_projector((spec, s) in spec_and_state(3)) {
        // P(n) = Σ_configs with n ups ⟨c|U ρ U|c⟩ built with explicit Kronecker products
        let m = spec.n_bath;
        let n = spec.n_spins();
        let h = order_histogram(&[(1.0, &s)], m, 0.0, 0.0).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let had = DMatrix::from_row_slice(2, 2, &[r, r, r, -r]);
        let mut u = DMatrix::<f64>::identity(4, 4);
        for _ in 0..m {
            u = u.kronecker(&had);
        }
        let psi_re = DMatrix::from_iterator(1 << n, 1, s.amplitudes().iter().map(|a| a.re));
        let psi_im = DMatrix::from_iterator(1 << n, 1, s.amplitudes().iter().map(|a| a.im));
        let (xr, xi) = (&u * psi_re, &u * psi_im);
        let mut bins = vec![0.0; m + 1];
        for idx in 0..1usize << n {
            let bath = idx & ((1 << m) - 1);
            let ups = (0..m).filter(|b| bath >> b & 1 == 0).count();
            bins[ups] += xr[idx].powi(2) + xi[idx].powi(2);
        }
        for (a, b) in bins.iter().zip(&h.probabilities) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}
