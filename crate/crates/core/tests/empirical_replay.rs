use rerank_core::empirical::{
    empirical_failure_curve, read_dataset, sample_dataset, EmpiricalDataset, EmpiricalOptions, HypothesisRecord,
    Strategy, Subsampling, UtilityMatrix, UtilityMode,
};
use rerank_core::laws::GeneratorSpec;

fn oracle_curve(ds: &EmpiricalDataset, grid: &[u64]) -> Vec<f64> {
    empirical_failure_curve(ds, Strategy::Oracle, grid, Subsampling::Prefix, &EmpiricalOptions::default())
        .unwrap()
        .curve
        .points()
        .iter()
        .map(|p| p.failure_rate)
        .collect()
}

#[test]
fn synthetic_independent_perfect_dataset_matches_eps_to_the_n() {
    let ds = sample_dataset(&GeneratorSpec::Independent { epsilon: 0.3 }, 100_000, 10, 11).unwrap();
    let c = empirical_failure_curve(&ds, Strategy::Oracle, &[5], Subsampling::Prefix, &EmpiricalOptions::default()).unwrap();
    let (lo, hi) = c.curve.points()[0].ci.unwrap();
    assert!(lo <= 0.00243 && 0.00243 <= hi, "[{lo}, {hi}]");
}

/// Queries with oracle scores consistent with flags, execution results and
/// a utility matrix, so every strategy can run.
fn rich_dataset() -> EmpiricalDataset {
    let base = sample_dataset(&GeneratorSpec::BetaCoupled { alpha: 0.7, beta: 0.7 }, 400, 8, 2).unwrap();
    let mut records = Vec::new();
    let mut utilities = Vec::new();
    for (q, recs) in base.queries.values().enumerate() {
        let n = recs.len();
        for r in recs {
            let ok = r.acceptable.unwrap();
            let noise = r.rerank_score.unwrap();
            records.push(HypothesisRecord {
                oracle_score: Some(if ok { 0.85 + 0.1 * noise } else { 0.8 * noise }),
                exec_result: if (r.hyp_index + q as u64).is_multiple_of(5) { None } else { Some(format!("{}", (noise * 3.0) as u32)) },
                acceptable: None,
                ..r.clone()
            });
        }
        let values = (0..n)
            .map(|i| (0..n).map(|j| ((i * 7 + j * 3 + q) % 11) as f64 / 10.0).collect())
            .collect();
        utilities.push(UtilityMatrix { query_id: recs[0].query_id.clone(), mode: UtilityMode::Utility, values });
    }
    EmpiricalDataset::from_parts(records, Some(utilities), Some(0.85)).unwrap()
}

#[test]
fn oracle_dominates_every_strategy_and_never_increases() {
    let ds = rich_dataset();
    let grid: Vec<u64> = (1..=8).collect();
    let oracle = oracle_curve(&ds, &grid);
    assert!(oracle.windows(2).all(|w| w[1] <= w[0]));
    for strategy in [Strategy::Majority, Strategy::Mbr, Strategy::Score] {
        for include_self in [false, true] {
            let opts = EmpiricalOptions { mbr_include_self: include_self, ..Default::default() };
            let c = empirical_failure_curve(&ds, strategy, &grid, Subsampling::Prefix, &opts).unwrap();
            for (o, p) in oracle.iter().zip(c.curve.points()) {
                assert!(*o <= p.failure_rate, "{strategy:?} n={}", p.n);
            }
        }
    }
}

#[test]
fn reloaded_dataset_reproduces_curves() {
    let ds = rich_dataset();
    let (mut recs, mut utils) = (Vec::new(), Vec::new());
    ds.write_records(&mut recs).unwrap();
    ds.write_utilities(&mut utils).unwrap();
    let back = read_dataset(recs.as_slice(), Some(utils.as_slice()), Some(0.85)).unwrap();
    let grid = [1, 2, 4, 8];
    for strategy in [Strategy::Oracle, Strategy::Majority, Strategy::Mbr, Strategy::Score] {
        for sub in [Subsampling::Prefix, Subsampling::Bootstrap { samples: 5, seed: 3 }] {
            let a = empirical_failure_curve(&ds, strategy, &grid, sub, &EmpiricalOptions::default()).unwrap();
            let b = empirical_failure_curve(&back, strategy, &grid, sub, &EmpiricalOptions::default()).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let ds = rich_dataset();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            empirical_failure_curve(&ds, Strategy::Mbr, &[2, 5], Subsampling::Bootstrap { samples: 7, seed: 1 }, &EmpiricalOptions::default())
                .unwrap()
        })
    };
    assert_eq!(run(1), run(3));
}
