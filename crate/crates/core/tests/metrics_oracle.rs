use nalgebra::DMatrix;
use proptest::prelude::*;
use systemic_core::metrics::{
    impact_diffusion, impact_matrix, impact_susceptibility, ImpactConfig,
};
use systemic_core::network::{Bank, ExposureMatrix, FinancialNetwork};
use systemic_core::Stage;

/// Networks whose stress matrix has row sums below one half, so `Σ S^k` converges fast.
fn low_leverage() -> impl Strategy<Value = FinancialNetwork<f64>> {
    (2usize..=8).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec((0u8..3, 0.0f64..1.0), n), n).prop_map(
            move |cells| {
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| {
                                if i != j && cells[i][j].0 == 0 {
                                    1.0 + 9.0 * cells[i][j].1
                                } else {
                                    0.0
                                }
                            })
                            .collect()
                    })
                    .collect();
                let banks = (0..n)
                    .map(|i| {
                        let exposure: f64 = rows[i].iter().sum();
                        Bank::new(
                            format!("b{i}"),
                            100.0,
                            2.5 * exposure.max(1.0),
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
            },
        )
    })
}

fn neumann(net: &FinancialNetwork<f64>) -> DMatrix<f64> {
    let n = net.len();
    let s = DMatrix::from_fn(n, n, |i, j| {
        (net.exposures.get(i, j) / net.banks[i].capital_buffer).min(1.0)
    });
    let id = DMatrix::<f64>::identity(n, n);
    (&id - s).try_inverse().unwrap() - id
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn impact_matrix_is_the_neumann_series(net in low_leverage()) {
        let n = net.len();
        let m = impact_matrix(&net, &ImpactConfig::default());
        let oracle = neumann(&net);
        for i in 0..n {
            for j in 0..n {
                prop_assert!((m[i * n + j] - oracle[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn susceptibility_counts_material_non_neighbours(net in low_leverage()) {
        let n = net.len();
        let oracle = neumann(&net);
        let got = impact_susceptibility(&net, &ImpactConfig::default());
        for i in 0..n {
            let count = (0..n)
                .filter(|&j| j != i)
                .filter(|&j| net.exposures.get(i, j) == 0.0 && net.exposures.get(j, i) == 0.0)
                .filter(|&j| oracle[(i, j)] > 1e-6)
                .count();
            // skip the knife edge where the oracle sits on the materiality cut
            let ambiguous = (0..n).any(|j| (oracle[(i, j)] - 1e-6).abs() < 1e-9);
            if !ambiguous {
                prop_assert_eq!(got[i], count as f64 / (n - 1) as f64);
            }
        }
    }

    #[test]
    fn diffusion_is_removal_impact(net in low_leverage()) {
        let n = net.len();
        let base = neumann(&net);
        let raw: Vec<f64> = (0..n)
            .map(|i| {
                let mut cut = net.clone();
                for k in 0..n {
                    cut.exposures.set(i, k, 0.0);
                    cut.exposures.set(k, i, 0.0);
                }
                let without = neumann(&cut);
                let mut total = 0.0;
                for k in (0..n).filter(|&k| k != i) {
                    for l in (0..n).filter(|&l| l != i && l != k) {
                        total += (base[(k, l)] - without[(k, l)]).max(0.0);
                    }
                }
                total
            })
            .collect();
        let top = raw.iter().copied().fold(0.0, f64::max);
        let got = impact_diffusion(&net, &ImpactConfig::default());
        for i in 0..n {
            let want = if top > 0.0 { raw[i] / top } else { 0.0 };
            prop_assert!((got[i] - want).abs() < 1e-8, "bank {}: {} vs {}", i, got[i], want);
        }
    }
}
