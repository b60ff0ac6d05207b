use thp_core::attack::*;
use thp_core::detector::DetectorParams;
use thp_core::protocol::*;

fn reference_grid() -> AttackGrid {
    let r = AttackCombination::reference();
    AttackGrid {
        n_block: Axis::Values(vec![r.n_block]),
        t_ll: Axis::Values(vec![r.t_ll]),
        n_thp_slots: Axis::Values(vec![r.n_thp_slots]),
        n_bursts: Axis::Values(vec![r.n_bursts]),
        burst_len: Axis::Values(vec![r.burst_len]),
        thp_photons: Axis::Values(vec![r.thp_photons]),
        readout_theta: r.readout_theta,
        readout_mu: r.readout_mu,
        layout: r.layout,
    }
}

#[test]
fn knowledge_grows_with_thp_coverage() {
    let cfg = FrameConfig::default();
    let d = DetectorParams::default().without_afterpulsing();
    let mut actions = vec![SlotAction::LowLoss { t_ll: 0.5 }; cfg.n_slots];
    let mut last = -1.0;
    for step in 0..6 {
        // each plan contains the previous one's THP slots
        for a in actions.iter_mut().skip(step * 3).step_by(17).take(20) {
            *a = SlotAction::LowLossWithThp { t_ll: 0.5, thp_photons: 1e6 };
        }
        let plan = FramePlan { actions: actions.clone(), readout_error: 0.1 };
        let r = run_simulation(&cfg, &plan, &d, &d, &SimOptions::new(500, 19)).unwrap();
        let i = r.eve_info.unwrap().value;
        assert!(i >= last, "step {step}: {i} < {last}");
        last = i;
    }
    assert!(last > 0.0);
}

#[test]
fn no_thp_means_no_knowledge() {
    let cfg = FrameConfig::default();
    let d = DetectorParams::default();
    let combo = AttackCombination { n_thp_slots: 0, ..AttackCombination::reference() };
    let r = evaluate(&combo, &cfg, &d, &d, &SimOptions::new(200, 1), DEFAULT_I_EST).unwrap();
    assert_eq!(r.eve_info(), Some(0.0));
    assert!(!r.breach);
}

#[test]
fn breach_flag_matches_rule_on_every_report() {
    let cfg = FrameConfig::default();
    let d = DetectorParams::default().with_scale(0.0103);
    let mut grid = reference_grid();
    grid.n_thp_slots = Axis::Values(vec![100, 200, 334]);
    grid.t_ll = Axis::Values(vec![0.4, 0.5]);
    let reports = evaluate_grid(&grid, &cfg, &d, &d, &SimOptions::new(300, 2), &SearchOptions::default()).unwrap();
    assert_eq!(reports.len(), 6);
    for r in &reports {
        assert_eq!(r.breach, is_breach(r.qber(), r.eve_info(), cfg.q_abort, r.i_est));
        let q = r.qber().unwrap();
        assert_eq!(r.breach, q < cfg.q_abort && r.eve_info().unwrap() > r.i_est);
    }
}

#[test]
fn degenerate_grid_returns_reference_iff_breach() {
    let cfg = FrameConfig::default();
    let sim = SimOptions::new(1_000, 9);
    let search = SearchOptions { rate_tolerance: f64::INFINITY, ..SearchOptions::default() };
    for scale in [0.0103, 1.0] {
        let d = DetectorParams::default().with_scale(scale);
        let all = evaluate_grid(&reference_grid(), &cfg, &d, &d, &sim, &search).unwrap();
        let best = optimize(&reference_grid(), &cfg, &d, &d, &sim, &search).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(best.len(), usize::from(all[0].breach));
        if let Some(b) = best.first() {
            assert_eq!(b.combination, AttackCombination::reference());
        }
    }
}

#[test]
fn signal_wavelength_grid_has_no_breach() {
    let cfg = FrameConfig::default();
    let d = DetectorParams::default();
    let mut grid = reference_grid();
    grid.n_thp_slots = Axis::Values(vec![56, 168, 334]);
    grid.thp_photons = Axis::Values(vec![5e5, 2e6]);
    let search = SearchOptions { rate_tolerance: f64::INFINITY, ..SearchOptions::default() };
    let best = optimize(&grid, &cfg, &d, &d, &SimOptions::new(500, 4), &search).unwrap();
    assert!(best.is_empty());
}

#[test]
fn budget_truncates_in_lexicographic_order() {
    let cfg = FrameConfig::default();
    let d = DetectorParams::default().with_scale(0.0103);
    let mut grid = reference_grid();
    grid.n_block = Axis::Values(vec![500, 433, 300]);
    let all = grid.combinations(cfg.n_slots);
    let search = SearchOptions { budget: Some(2), ..SearchOptions::default() };
    let reports = evaluate_grid(&grid, &cfg, &d, &d, &SimOptions::new(50, 1), &search).unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0].combination, all[0]);
    assert_eq!(reports[1].combination, all[1]);
    assert_eq!(all[0].n_block, 300);
}

#[test]
fn optimize_ignores_axis_order() {
    let cfg = FrameConfig::default();
    let d = DetectorParams::default().with_scale(0.0103);
    let sim = SimOptions::new(200, 6);
    let search = SearchOptions { rate_tolerance: f64::INFINITY, ..SearchOptions::default() };
    let mut a = reference_grid();
    a.n_thp_slots = Axis::Values(vec![168, 334, 250]);
    a.t_ll = Axis::Values(vec![0.5, 0.45]);
    let mut b = a.clone();
    b.n_thp_slots = Axis::Values(vec![250, 168, 334, 168]);
    b.t_ll = Axis::Values(vec![0.45, 0.5]);
    let ra = optimize(&a, &cfg, &d, &d, &sim, &search).unwrap();
    let rb = optimize(&b, &cfg, &d, &d, &sim, &search).unwrap();
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
    let ea = evaluate_grid(&a, &cfg, &d, &d, &sim, &search).unwrap();
    let eb = evaluate_grid(&b, &cfg, &d, &d, &sim, &search).unwrap();
    assert_eq!(ea.len(), 6);
    assert_eq!(serde_json::to_string(&ea).unwrap(), serde_json::to_string(&eb).unwrap());
}
