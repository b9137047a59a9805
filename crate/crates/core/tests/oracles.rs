//! Graph-cut and dynamic-programming solvers against exhaustive search on
//! seeded random instances.

use pathsup_core::linkage::{brute_force_linkage, solve_linkage, ClusterGraph};
use pathsup_core::model::PathId;
use pathsup_core::prelabel::{brute_force_prelabel, labeling_energy, solve_prelabel};
use pathsup_core::testkit::{random_linkage_instance, random_prelabel_instance};
use pathsup_core::EngineConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn prelabel_matches_exhaustive_search() {
    let config = EngineConfig::default();
    let mut worst: f64 = 0.0;
    let mut mismatches = Vec::new();
    for seed in 0..400u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_dets = rng.random_range(1..=14);
        let n_paths = rng.random_range(1..=3);
        let inst = random_prelabel_instance(&mut rng, n_dets, n_paths, &config);
        let fast = solve_prelabel(&inst.detections, &inst.paths, &inst.graph, &config);
        let exact = brute_force_prelabel(&inst.detections, &inst.paths, &inst.graph, &config).unwrap();
        let recomputed = labeling_energy(&inst.detections, &inst.paths, &inst.graph, &fast.labels, &config);
        assert!((recomputed - fast.energy).abs() < 1e-9);
        for w in fast.energy_trace.windows(2) {
            assert!(w[1] < w[0]);
        }
        let diff = fast.energy - exact.energy;
        worst = worst.max(diff);
        if diff.abs() > 1e-9 {
            mismatches.push((seed, n_dets, n_paths, diff));
        }
    }
    assert!(mismatches.is_empty(), "worst gap {worst}, mismatches {mismatches:?}");
}

#[test]
fn linkage_matches_exhaustive_search() {
    for seed in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.random_range(1..=12);
        let inst = random_linkage_instance(&mut rng, n);
        let members: Vec<_> = inst.detections.iter().collect();
        let cluster = ClusterGraph::build(PathId(0), &members, &inst.graph, &inst.config).unwrap();
        let (fast, exact) = (solve_linkage(&cluster), brute_force_linkage(&cluster));
        match (fast, exact) {
            (Ok(f), Ok(e)) => {
                assert!((f.total_cost - e.total_cost).abs() < 1e-9, "seed {seed}");
                let frames: Vec<u32> = f
                    .chosen
                    .iter()
                    .map(|id| inst.detections.iter().find(|d| d.id == *id).unwrap().frame)
                    .collect();
                assert!(frames.windows(2).all(|w| w[0] < w[1]), "seed {seed}");
            }
            (Err(_), Err(_)) => {}
            (f, e) => panic!("seed {seed}: solvers disagree on feasibility: {f:?} vs {e:?}"),
        }
    }
}
