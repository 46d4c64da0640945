use proptest::prelude::*;
use systemic_core::contagion::{apply_initial_shock, propagate, settle_network, simulate};
use systemic_core::network::{validate_network, Bank, ExposureMatrix, FinancialNetwork};
use systemic_core::{PropagationModel, ShockSpec, ShockTargets, Stage};
use systemic_oracles as oracle;

/// Integer exposures and buffers keep every sum exact, so default decisions cannot depend on
/// summation order.
fn small_network() -> impl Strategy<Value = FinancialNetwork<f64>> {
    (2usize..=10).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec((0u32..4, 1u32..40), n), n),
            prop::collection::vec(0u32..60, n),
        )
            .prop_map(move |(cells, buffers)| {
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| {
                                let (keep, amount) = cells[i][j];
                                if i != j && keep == 0 {
                                    f64::from(amount)
                                } else {
                                    0.0
                                }
                            })
                            .collect()
                    })
                    .collect();
                let banks = (0..n)
                    .map(|i| {
                        Bank::new(
                            format!("b{i}"),
                            100.0,
                            f64::from(buffers[i]),
                            1.0 / n as f64,
                        )
                    })
                    .collect();
                FinancialNetwork::new(
                    banks,
                    ExposureMatrix::from_rows(rows).unwrap(),
                    Stage::Original,
                )
                .unwrap()
            })
    })
}

fn target_spec(model: PropagationModel, n: usize, mask: u32, phi: f64) -> ShockSpec {
    let ids = (0..n)
        .filter(|i| mask >> i & 1 == 1)
        .map(|i| format!("b{i}"))
        .collect();
    ShockSpec::new(model, ShockTargets::Banks(ids), phi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn threshold_cascade_is_least_fixed_point(
        net in small_network(),
        mask in any::<u32>(),
        phi in prop::sample::select(vec![0.25, 0.5, 1.0]),
        lgd in prop::sample::select(vec![0.5, 1.0]),
    ) {
        let n = net.len();
        let mut spec = target_spec(PropagationModel::Threshold, n, mask, phi);
        spec.lgd = lgd;
        let state = apply_initial_shock(&net, &spec).unwrap();
        let result = propagate(&net, &state, &spec).unwrap();
        let seeds: Vec<bool> = state.stress.iter().map(|&h| h >= 1.0).collect();
        let (defaulted, losses) = oracle::threshold_fixed_point(
            &net.exposures.to_rows(),
            &net.buffers(),
            &state.shock_loss,
            &seeds,
            lgd,
        );
        prop_assert!(result.converged);
        prop_assert_eq!(&result.defaulted, &defaulted);
        prop_assert_eq!(&result.losses, &losses);
    }

    #[test]
    fn stress_is_monotone_and_bounded(
        net in small_network(),
        mask in 1u32..,
        phi in 0.01f64..=1.0,
        model in prop::sample::select(vec![
            PropagationModel::Threshold,
            PropagationModel::Linear,
            PropagationModel::Hybrid,
        ]),
    ) {
        let spec = target_spec(model, net.len(), mask, phi);
        let r = simulate(&net, &spec).unwrap();
        for window in r.stress_trajectory.windows(2) {
            for (a, b) in window[0].iter().zip(&window[1]) {
                prop_assert!(b >= a);
            }
        }
        for h in r.stress_trajectory.iter().flatten() {
            prop_assert!((0.0..=1.0).contains(h));
        }
        prop_assert_eq!(r.final_stress.len(), net.len());
        prop_assert!(r.losses.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn larger_shocks_stress_more(
        net in small_network(),
        mask in 1u32..,
        lo in 0.01f64..=1.0,
        extra in 0.0f64..=1.0,
        model in prop::sample::select(vec![
            PropagationModel::Threshold,
            PropagationModel::Linear,
            PropagationModel::Hybrid,
        ]),
    ) {
        let hi = (lo + extra).min(1.0);
        let n = net.len();
        let weak_spec = target_spec(model, n, mask, lo);
        let weak = simulate(&net, &weak_spec).unwrap();
        let strong = simulate(&net, &target_spec(model, n, mask, hi)).unwrap();
        // both runs stop within the convergence tolerance of the same fixed point
        let slack = 100.0 * weak_spec.epsilon;
        for (a, b) in weak.final_stress.iter().zip(&strong.final_stress) {
            prop_assert!(b + slack >= *a, "{} < {}", b, a);
        }
        for i in 0..n {
            let borderline = strong.final_stress[i] + slack >= 1.0;
            prop_assert!(!weak.defaulted[i] || strong.defaulted[i] || borderline);
        }
    }

    #[test]
    fn hybrid_dominates_linear(net in small_network(), mask in 1u32.., phi in 0.01f64..=1.0) {
        let n = net.len();
        let spec = target_spec(PropagationModel::Linear, n, mask, phi);
        let lin = simulate(&net, &spec).unwrap();
        let hyb = simulate(&net, &target_spec(PropagationModel::Hybrid, n, mask, phi)).unwrap();
        let slack = 100.0 * spec.epsilon;
        for (a, b) in lin.final_stress.iter().zip(&hyb.final_stress) {
            prop_assert!(b + slack >= *a, "hybrid {} < linear {}", b, a);
        }
    }

    #[test]
    fn settled_network_keeps_structure(net in small_network(), mask in 1u32.., phi in 0.01f64..=1.0) {
        let spec = target_spec(PropagationModel::Hybrid, net.len(), mask, phi);
        let r = simulate(&net, &spec).unwrap();
        let settled = settle_network(&net, &r).unwrap();
        prop_assert_eq!(settled.stage, Stage::Shocked);
        let report = validate_network(&settled);
        prop_assert!(report.is_valid(), "{:?}", report.messages());
        for i in 0..net.len() {
            for j in 0..net.len() {
                prop_assert!(settled.exposures.get(i, j) <= net.exposures.get(i, j));
            }
        }
    }
}

#[test]
fn linear_two_bank_closed_form() {
    // b1 holds 50 on b0, both buffers 100: h* = (1, 0.5)
    let rows = vec![vec![0.0, 0.0], vec![50.0, 0.0]];
    let banks = vec![
        Bank::new("b0", 100.0, 100.0, 0.5),
        Bank::new("b1", 100.0, 100.0, 0.5),
    ];
    let net: FinancialNetwork<f64> = FinancialNetwork::new(
        banks,
        ExposureMatrix::from_rows(rows).unwrap(),
        Stage::Original,
    )
    .unwrap();
    let r = simulate(&net, &target_spec(PropagationModel::Linear, 2, 1, 1.0)).unwrap();
    assert!((r.final_stress[0] - 1.0).abs() < 1e-12);
    assert!((r.final_stress[1] - 0.5).abs() < 1e-12);
}

#[test]
fn linear_chain_closed_form_for_any_phi() {
    // b0 <- b1 <- b2 with leverage 0.6 and 0.5: h* = (φ, 0.6φ, 0.3φ)
    let rows = vec![
        vec![0.0, 0.0, 0.0],
        vec![60.0, 0.0, 0.0],
        vec![0.0, 50.0, 0.0],
    ];
    let banks = (0..3)
        .map(|i| Bank::new(format!("b{i}"), 100.0, 100.0, 1.0 / 3.0))
        .collect();
    let net: FinancialNetwork<f64> = FinancialNetwork::new(
        banks,
        ExposureMatrix::from_rows(rows).unwrap(),
        Stage::Original,
    )
    .unwrap();
    for phi in [0.1, 0.37, 0.5, 1.0] {
        let r = simulate(&net, &target_spec(PropagationModel::Linear, 3, 1, phi)).unwrap();
        let want = [phi, 0.6 * phi, 0.3 * phi];
        for (h, w) in r.final_stress.iter().zip(want) {
            assert!((h - w).abs() < 1e-12, "phi {phi}: {h} vs {w}");
        }
    }
}
