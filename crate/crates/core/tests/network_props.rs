use proptest::prelude::*;
use systemic_core::generator::{
    build_network, estimate, marginal_residual, BalanceSheetConfig, Marginals,
};
use systemic_core::intervention::{apply_plan, remove_node, InterventionPlan};
use systemic_core::network::{validate_network, FinancialNetwork};
use systemic_core::{EstimationMethod, GeneratorConfig};

fn marginals() -> impl Strategy<Value = Marginals<f64>> {
    (3usize..=12).prop_flat_map(|n| {
        (
            prop::collection::vec(0.1f64..10.0, n),
            prop::collection::vec(0.1f64..10.0, n),
        )
            .prop_filter_map("infeasible", |(a, l)| {
                let (sa, sl): (f64, f64) = (a.iter().sum(), l.iter().sum());
                let l: Vec<f64> = l.iter().map(|x| x * sa / sl).collect();
                let feasible = (0..a.len()).all(|i| a[i] < sa - l[i] && l[i] < sa - a[i]);
                feasible.then(|| Marginals::new(a, l).unwrap())
            })
    })
}

fn network_from(m: &Marginals<f64>, method: EstimationMethod) -> FinancialNetwork<f64> {
    let cfg = GeneratorConfig {
        method,
        ..GeneratorConfig::default()
    };
    build_network(estimate(m, &cfg).unwrap(), &BalanceSheetConfig::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn both_estimators_hit_the_marginals(m in marginals()) {
        let scale = m.total_assets();
        for method in [EstimationMethod::MaxEntropy, EstimationMethod::MinDensity] {
            let cfg = GeneratorConfig { method, ..GeneratorConfig::default() };
            let x = estimate(&m, &cfg).unwrap();
            prop_assert!(marginal_residual(&x, &m) <= 1e-6 * scale);
            for i in 0..m.len() {
                prop_assert_eq!(x.get(i, i), 0.0);
            }
        }
    }

    #[test]
    fn min_density_is_sparser(m in marginals()) {
        let sparse = network_from(&m, EstimationMethod::MinDensity);
        let dense = network_from(&m, EstimationMethod::MaxEntropy);
        prop_assert!(sparse.edge_count() <= dense.edge_count());
    }

    #[test]
    fn documents_round_trip(m in marginals()) {
        let net = network_from(&m, EstimationMethod::MinDensity);
        let json = net.to_json().unwrap();
        let back = FinancialNetwork::<f64>::from_json(&json).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn every_removal_leaves_a_valid_network(m in marginals()) {
        let net = network_from(&m, EstimationMethod::MinDensity);
        prop_assert!(validate_network(&net).is_valid());
        for id in net.ids() {
            let (out, cost) = remove_node(&net, &id).unwrap();
            let report = validate_network(&out);
            prop_assert!(report.is_valid(), "{:?}", report.messages());
            prop_assert_eq!(out.len(), net.len() - 1);
            prop_assert!(cost >= 0.0);
        }
    }

    #[test]
    fn removal_costs_add_up(m in marginals(), picks in prop::collection::vec(0usize..12, 1..4)) {
        let net = network_from(&m, EstimationMethod::MinDensity);
        let mut ids: Vec<String> = Vec::new();
        for k in picks.into_iter().filter(|&k| k < net.len()) {
            let id = format!("b{k}");
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        prop_assume!(!ids.is_empty());
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let (_, joint) = apply_plan(&net, &InterventionPlan::removing("joint", &refs)).unwrap();
        let single: Vec<f64> = ids.iter().map(|id| remove_node(&net, id).unwrap().1).collect();
        let at = |a: &str, b: &str| net.exposures.get(net.index_of(a).unwrap(), net.index_of(b).unwrap());
        // a bank removed earlier no longer holds claims on the banks removed after it
        let shared: f64 = (0..ids.len())
            .flat_map(|p| (p + 1..ids.len()).map(move |q| (p, q)))
            .map(|(p, q)| at(&ids[p], &ids[q]))
            .sum();
        let total: f64 = single.iter().sum();
        prop_assert!((joint - (total - shared)).abs() <= 1e-9 * total.max(1.0));
        if shared == 0.0 && (0..ids.len()).all(|p| (0..ids.len()).all(|q| at(&ids[p], &ids[q]) == 0.0)) {
            prop_assert_eq!(joint, total);
        }
    }
}
