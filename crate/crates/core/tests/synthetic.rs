use fleet_core::dataset::{load_csv, presets, simulate_fleet, CsvSchema, SyntheticScenario, TaskId, WindGroup, WindScenario, WindTask};

#[test]
fn noiseless_data_sits_on_the_mean() {
    for mut sc in [presets::truck(1), presets::wind(1)] {
        match &mut sc {
            SyntheticScenario::TruckHazard(s) => s.noise = 0.0,
            SyntheticScenario::WindPower(s) => s.noise = 0.0,
        }
        let data = simulate_fleet(&sc).unwrap();
        for o in data.observations() {
            let m = sc.true_mean(o.task(), o.x).unwrap();
            assert!((o.y - m).abs() < 1e-12);
        }
    }
}

#[test]
fn same_seed_same_data() {
    let a = simulate_fleet(&presets::wind(5)).unwrap();
    let b = simulate_fleet(&presets::wind(5)).unwrap();
    assert_eq!(a, b);
    let c = simulate_fleet(&presets::wind(6)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn residuals_are_centred() {
    let mut sc = presets::tiny(3);
    if let SyntheticScenario::TruckHazard(s) = &mut sc {
        s.groups[0].tasks[0].n = 10_000;
        s.groups[0].tasks.truncate(1);
    }
    let data = simulate_fleet(&sc).unwrap();
    let n = data.len() as f64;
    let r: f64 = data.observations().iter().map(|o| o.y - sc.true_mean(o.task(), o.x).unwrap()).sum::<f64>() / n;
    let noise = 0.3;
    assert!(r.abs() < 3.0 * noise / n.sqrt(), "mean residual {r}");
}

#[test]
fn truck_fleet_sizes_survive_a_csv_round_trip() {
    let data = simulate_fleet(&presets::truck(0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("truck.csv");
    data.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let back = load_csv(&path, &CsvSchema::default()).unwrap();
    assert_eq!(back.len(), 437);
    let counts: Vec<usize> = (1..=8).map(|k| back.task_counts()[&TaskId::new(k, 1)]).collect();
    assert_eq!(counts, presets::TRUCK_SIZES);
}

#[test]
fn unordered_change_points_are_rejected() {
    let sc = SyntheticScenario::WindPower(WindScenario {
        seed: 0,
        x_range: (0.0, 1.0),
        noise: 0.05,
        p: 0.2,
        groups: vec![WindGroup {
            l: 1,
            pm: 1.0,
            tasks: vec![WindTask { k: 1, n: 10, q: 0.7, r: 0.6, m1: 2.0 }],
        }],
    });
    assert!(simulate_fleet(&sc).is_err());
}

#[test]
fn truth_uses_canonical_names() {
    let names: Vec<String> = presets::wind(0).truth().into_iter().map(|(n, _)| n).collect();
    assert!(names.contains(&"Pm[2]".to_string()));
    assert!(names.contains(&"q[3,2]".to_string()));
    let names: Vec<String> = presets::truck(0).truth().into_iter().map(|(n, _)| n).collect();
    assert!(names.contains(&"alpha2[8,1]".to_string()));
    assert!(names.contains(&"beta[5,1]".to_string()));
}
