use precis_ipp::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_sensor(radius: f64) -> SensorModel {
    SensorModel {
        altitudes: vec![1.0, 2.0, 3.0],
        footprint_radius: vec![radius, radius + 1.0, radius + 2.0],
        variance: vec![0.1, 0.2, 0.3],
        false_positive_rate: 0.05,
        false_negative_rate: 0.05,
    }
}

fn random_map(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GridMap {
    let mut map = GridMap::new(w, h, 1.0, 0.5, 1.0).unwrap();
    for v in map.variance.iter_mut() {
        *v = rng.random_range(0.05..2.0);
    }
    for m in map.mean.iter_mut() {
        *m = rng.random::<f64>();
    }
    map
}

fn random_pose(rng: &mut ChaCha8Rng, w: usize, h: usize, levels: usize) -> Waypoint {
    Waypoint::new(
        rng.random_range(0..w) as f64 + 0.5,
        rng.random_range(0..h) as f64 + 0.5,
        rng.random_range(0..levels),
    )
}

#[test]
fn fusion_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let map = random_map(&mut rng, 4, 3);
        let cell = rng.random_range(0..12);
        let d = if rng.random::<bool>() { 1.0 } else { 0.0 };
        let r = rng.random_range(0.01..3.0);
        let out = fuse_measurement(&map, &[Measurement { cell, d, r }]).unwrap();
        let (m0, v0) = (map.mean[cell], map.variance[cell]);
        let k = v0 / (v0 + r);
        assert_eq!(out.mean[cell], (m0 + k * (d - m0)).clamp(0.0, 1.0));
        assert_eq!(out.variance[cell], (1.0 - k) * v0);
        for c in (0..12).filter(|&c| c != cell) {
            assert_eq!(out.mean[c].to_bits(), map.mean[c].to_bits());
            assert_eq!(out.variance[c].to_bits(), map.variance[c].to_bits());
        }
    }
}

/// Exhaustive horizon-1 choice: best gain per meter, then shorter leg, then lower index.
fn brute_force(map: &GridMap, pose: &Waypoint, sensor: &SensorModel, budget: f64, max_leg: f64, lattice: &Lattice) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, wp) in lattice.points.iter().enumerate() {
        let cost = travel_cost(pose, wp, sensor);
        if cost <= 1e-12 || cost > max_leg || cost > budget {
            continue;
        }
        let score = expected_precision_gain(map, std::slice::from_ref(wp), sensor) / cost;
        best = match best {
            Some((j, s, c)) if s > score || (s == score && c <= cost) => Some((j, s, c)),
            _ => Some((i, score, cost)),
        };
    }
    best.map(|b| b.0)
}

#[test]
fn horizon_one_planner_equals_brute_force() {
    let sensor = unit_sensor(0.0);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = random_map(&mut rng, 5, 5);
        let points: Vec<Waypoint> = (0..rng.random_range(3..12)).map(|_| random_pose(&mut rng, 5, 5, 3)).collect();
        let lattice = Lattice::new(map.grid(), &sensor, points).unwrap();
        let pose = random_pose(&mut rng, 5, 5, 3);
        let budget = rng.random_range(1.0..8.0);
        let cfg = PlannerConfig { horizon: 1, max_leg: 6.0 };
        let out = plan_path(&map, &pose, &sensor, budget, &cfg, &lattice).unwrap();
        let expect = brute_force(&map, &pose, &sensor, budget, cfg.max_leg, &lattice);
        assert_eq!(out.indices.first().copied(), expect, "seed {seed}");
        assert_eq!(out.status == PlanStatus::Exhausted, expect.is_none());
    }
}

#[test]
fn two_step_greedy_is_near_exhaustive() {
    let sensor = unit_sensor(0.0);
    let cfg = PlannerConfig { horizon: 2, max_leg: 10.0 };
    let mut worst = f64::INFINITY;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let map = random_map(&mut rng, 5, 5);
        let points: Vec<Waypoint> = (0..6).map(|_| random_pose(&mut rng, 5, 5, 3)).collect();
        let lattice = Lattice::new(map.grid(), &sensor, points.clone()).unwrap();
        let pose = random_pose(&mut rng, 5, 5, 3);
        let out = plan_path(&map, &pose, &sensor, 100.0, &cfg, &lattice).unwrap();
        // exhaustive optimum of the map gain among two-step paths no longer than the greedy one
        let length = |path: &[Waypoint]| travel_cost(&pose, &path[0], &sensor) + travel_cost(&path[0], &path[1], &sensor);
        let mut best = 0.0f64;
        for a in &points {
            for b in &points {
                let legs = [travel_cost(&pose, a, &sensor), travel_cost(a, b, &sensor)];
                if legs.iter().all(|l| *l > 1e-12) && length(&[*a, *b]) <= out.path.cost + 1e-12 {
                    best = best.max(expected_precision_gain(&map, &[*a, *b], &sensor));
                }
            }
        }
        if best > 0.0 {
            assert_eq!(out.path.waypoints.len(), 2);
            worst = worst.min(expected_precision_gain(&map, &out.path.waypoints, &sensor) / best);
        }
    }
    assert!(worst >= 0.8, "worst greedy/optimal ratio {worst}");
}

#[test]
fn footprint_geometry() {
    let sensor = unit_sensor(1.0);
    let grid = Grid { width: 5, height: 5, cell_size: 1.0 };
    let cells = sensor.footprint(grid, &Waypoint::new(2.5, 2.5, 0));
    assert_eq!(cells, vec![grid.index(2, 1), grid.index(1, 2), grid.index(2, 2), grid.index(3, 2), grid.index(2, 3)]);
    // clipped at the border
    assert_eq!(sensor.footprint(grid, &Waypoint::new(0.5, 0.5, 0)).len(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let truth = Scenario { width: 5, height: 5, targets: 0, no_fly: None, ..Scenario::default() }.generate(0).unwrap();
    assert!(observe(&truth, &Waypoint::new(5.5, 0.5, 0), &sensor, &mut rng).is_err());
    assert!(observe(&truth, &Waypoint::new(0.5, 0.5, 3), &sensor, &mut rng).is_err());
}

#[test]
fn perfect_sensor_reports_truth() {
    let sensor = SensorModel { false_positive_rate: 0.0, false_negative_rate: 0.0, ..unit_sensor(2.0) };
    let truth = Scenario { width: 6, height: 6, targets: 3, target_spacing: 2, no_fly: None, ..Scenario::default() }.generate(5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in observe(&truth, &Waypoint::new(3.0, 3.0, 2), &sensor, &mut rng).unwrap() {
        assert_eq!(m.d, if truth.occupied[m.cell] { 1.0 } else { 0.0 });
        assert_eq!(m.r, 0.3);
    }
}

#[test]
fn false_positive_rate_is_the_detection_mean() {
    let sensor = SensorModel { false_positive_rate: 0.1, ..unit_sensor(0.0) };
    let truth = Scenario { width: 1, height: 1, targets: 0, no_fly: None, ..Scenario::default() }.generate(0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pose = Waypoint::new(0.5, 0.5, 0);
    let n = 10_000;
    let hits: f64 = (0..n).map(|_| observe(&truth, &pose, &sensor, &mut rng).unwrap()[0].d).sum();
    assert!((hits / n as f64 - 0.1).abs() < 0.01);
    // the same draws fused into one cell settle near the detection rate
    let mut map = GridMap::new(1, 1, 1.0, 0.5, 1.0).unwrap();
    for _ in 0..2000 {
        map.fuse(&observe(&truth, &pose, &sensor, &mut rng).unwrap()).unwrap();
    }
    assert!((map.mean[0] - 0.1).abs() < 0.05, "{}", map.mean[0]);
    assert!(!map.classify(0.5)[0]);
}

#[test]
fn repeated_fusion_classifies_correctly() {
    let sensor = SensorModel::default();
    let mut correct = 0;
    for trial in 0..1000u64 {
        let scenario = Scenario { width: 1, height: 1, targets: (trial % 2) as usize, no_fly: None, ..Scenario::default() };
        let truth = scenario.generate(trial).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let mut map = GridMap::new(1, 1, 1.0, 0.5, 1.0).unwrap();
        for _ in 0..50 {
            map.fuse(&observe(&truth, &Waypoint::new(0.5, 0.5, 0), &sensor, &mut rng).unwrap()).unwrap();
        }
        correct += (map.classify(0.5)[0] == truth.occupied[0]) as usize;
    }
    assert!(correct >= 990, "{correct}/1000");
}

fn disjoint_paths() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    proptest::sample::subsequence((0..25).collect::<Vec<_>>(), 0..=25).prop_flat_map(|cells| {
        let n = cells.len();
        (Just(cells), 0..=n).prop_map(|(cells, k)| (cells[..k].to_vec(), cells[k..].to_vec()))
    })
}

proptest! {
    #[test]
    fn fusion_never_raises_variance(seed in 0u64..1000, cells in proptest::collection::vec(0usize..20, 0..30)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = random_map(&mut rng, 5, 4);
        let ms: Vec<Measurement> = cells.iter().map(|&cell| Measurement { cell, d: rng.random_range(0.0..=1.0), r: rng.random_range(0.01..5.0) }).collect();
        let out = fuse_measurement(&map, &ms).unwrap();
        for c in 0..20 {
            prop_assert!(out.variance[c] <= map.variance[c]);
            prop_assert!(out.variance[c] > 0.0);
            prop_assert!((0.0..=1.0).contains(&out.mean[c]));
            if !cells.contains(&c) {
                prop_assert_eq!(out.variance[c].to_bits(), map.variance[c].to_bits());
                prop_assert_eq!(out.mean[c].to_bits(), map.mean[c].to_bits());
            }
        }
    }

    #[test]
    fn gain_is_additive_over_disjoint_paths(seed in 0u64..1000, (a, b) in disjoint_paths()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = random_map(&mut rng, 5, 5);
        let sensor = unit_sensor(0.0);
        let grid = map.grid();
        let to_path = |cells: &[usize]| -> Vec<Waypoint> {
            cells.iter().map(|&c| { let (x, y) = grid.center(c); Waypoint::new(x, y, 0) }).collect()
        };
        let (pa, pb) = (to_path(&a), to_path(&b));
        let joint: Vec<Waypoint> = pa.iter().chain(&pb).copied().collect();
        let sum = expected_precision_gain(&map, &pa, &sensor) + expected_precision_gain(&map, &pb, &sensor);
        let whole = expected_precision_gain(&map, &joint, &sensor);
        prop_assert!((whole - sum).abs() <= 1e-12 * (1.0 + sum.abs()));
    }

    #[test]
    fn plans_respect_leg_and_budget(seed in 0u64..1000, budget in 0.0f64..30.0, horizon in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = random_map(&mut rng, 8, 8);
        let sensor = unit_sensor(1.0);
        let lattice = Lattice::regular(map.grid(), &sensor, 2, &[]).unwrap();
        let pose = random_pose(&mut rng, 8, 8, 3);
        let cfg = PlannerConfig { horizon, max_leg: 4.0 };
        let out = plan_path(&map, &pose, &sensor, budget, &cfg, &lattice).unwrap();
        prop_assert!(out.path.cost <= budget);
        prop_assert!(out.path.waypoints.len() <= horizon);
        let mut at = pose;
        let mut total = 0.0;
        for w in &out.path.waypoints {
            let leg = travel_cost(&at, w, &sensor);
            prop_assert!(leg > 0.0 && leg <= cfg.max_leg);
            total += leg;
            at = *w;
        }
        prop_assert!((total - out.path.cost).abs() < 1e-9);
    }
}
