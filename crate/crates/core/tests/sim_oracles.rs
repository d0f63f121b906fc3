use rerank_core::laws::GeneratorSpec;
use rerank_core::predict::evaluate_law;
use rerank_core::rank::RerankerSpec;
use rerank_core::sim::{simulate_curve, SimConfig};

fn rerankers() -> Vec<RerankerSpec> {
    vec![
        RerankerSpec::Perfect,
        RerankerSpec::Random,
        RerankerSpec::mallows_from_e_neg_lambda(0.5).unwrap(),
        RerankerSpec::zipf_from_e_neg_lambda(0.5, 0.5).unwrap(),
        RerankerSpec::Polynomial { r: 2 },
    ]
}

#[test]
fn analytic_laws_fall_inside_simulated_intervals() {
    let generators = [GeneratorSpec::Independent { epsilon: 0.3 }, GeneratorSpec::BetaCoupled { alpha: 1.0, beta: 1.0 }];
    let grid = vec![1, 2, 5, 10, 20];
    let (mut inside, mut total) = (0, 0);
    for (gi, g) in generators.iter().enumerate() {
        for (ri, r) in rerankers().into_iter().enumerate() {
            let exact = evaluate_law(g, &r, &grid).unwrap();
            let cfg = SimConfig::new(*g, r, grid.clone(), 1_000_000, 300 + 10 * gi as u64 + ri as u64);
            let sim = simulate_curve(&cfg).unwrap();
            for (e, s) in exact.points().iter().zip(sim.points()) {
                let (lo, hi) = s.ci.unwrap();
                total += 1;
                inside += (lo <= e.failure_rate && e.failure_rate <= hi) as usize;
            }
        }
    }
    assert!(inside as f64 >= 0.95 * total as f64, "{inside}/{total}");
}

#[test]
fn beta_coupled_curves_do_not_increase() {
    let grid: Vec<u64> = (1..=20).collect();
    let g = GeneratorSpec::BetaCoupled { alpha: 0.5, beta: 0.5 };
    for r in [
        RerankerSpec::Perfect,
        RerankerSpec::mallows_from_e_neg_lambda(0.5).unwrap(),
        RerankerSpec::zipf_from_e_neg_lambda(0.2, 0.5).unwrap(),
    ] {
        let exact = evaluate_law(&g, &r, &grid).unwrap();
        assert!(exact.points().windows(2).all(|w| w[1].failure_rate <= w[0].failure_rate));
        let sim = simulate_curve(&SimConfig::new(g, r, grid.clone(), 200_000, 5)).unwrap();
        for w in sim.points().windows(2) {
            // Allow overlap of the two intervals as CI noise.
            assert!(w[1].ci.unwrap().0 <= w[0].ci.unwrap().1, "n={}", w[1].n);
        }
    }
}

#[test]
fn seed_fully_determines_the_curve() {
    let cfg = SimConfig::new(
        GeneratorSpec::Independent { epsilon: 0.3 },
        RerankerSpec::zipf_from_e_neg_lambda(0.5, 0.3).unwrap(),
        vec![1, 3, 7],
        100_000,
        42,
    );
    let a = simulate_curve(&cfg).unwrap().to_csv_string();
    assert_eq!(a, simulate_curve(&cfg).unwrap().to_csv_string());
    let other = SimConfig { seed: 43, ..cfg };
    assert_ne!(a, simulate_curve(&other).unwrap().to_csv_string());
}
