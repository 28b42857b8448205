use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use tuc_core::compare::{compare_pair, run_all};
use tuc_core::control::{expand_schedule, project, ControlBounds, SignalColor};
use tuc_core::dynamics::{
    classical_b_matrix, dependent_controls, extended_b_matrix, predict_state, ControlMode, JunctionControls,
};
use tuc_core::lqr::{solve_discounted_dare, LqWeights};
use tuc_core::net::{build_grid, Stage};
use tuc_core::scenario::baseline_config;

fn feasible(cycle: f64) -> impl Strategy<Value = JunctionControls> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(move |(a, b, c)| {
        let g = a * cycle;
        JunctionControls {
            green: g,
            yellow_first: b * (cycle - g),
            yellow_second: c * g,
        }
    })
}

fn system() -> impl Strategy<Value = (DMatrix<f64>, LqWeights)> {
    (1usize..=8, 1usize..=5).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-1.0..1.0f64, n * m),
            prop::collection::vec(0.1..2.0f64, n),
            prop::collection::vec(0.1..2.0f64, m),
            0.05..0.5f64,
        )
            .prop_map(move |(b, q, r, lambda)| {
                (
                    DMatrix::from_vec(n, m, b),
                    LqWeights {
                        state: DVector::from_vec(q),
                        control: DVector::from_vec(r),
                        discount: lambda,
                    },
                )
            })
    })
}

proptest! {
    #[test]
    fn zero_yellows_reduce_to_classical(
        greens in prop::collection::vec(4.0..=56.0f64, 16),
        gamma in 0.0..=1.0f64,
        x in prop::collection::vec(0.0..40.0f64, 40),
    ) {
        let net = build_grid(4, 4, 300.0, 0.5).unwrap().with_friction(gamma);
        let ext: Vec<_> = greens.iter().map(|&g| JunctionControls::classical(g)).collect();
        let d = vec![0.0; net.links.len()];
        let p = predict_state(&net, &x, &ext, &d, 60.0).unwrap();
        // The classical model is linear in g around g = 0 with B_classical.
        let base: Vec<_> = greens.iter().map(|_| JunctionControls::classical(0.0)).collect();
        let p0 = predict_state(&net, &x, &base, &d, 60.0).unwrap();
        let b = classical_b_matrix(&net);
        let dx = &b.entries * DVector::from_vec(greens.clone());
        for (r, l) in b.rows.iter().enumerate() {
            prop_assert!((p.raw[l.index()] - p0.raw[l.index()] - dx[r]).abs() <= 1e-12);
        }
        let ext_green = extended_b_matrix(&net).select_kinds(&[tuc_core::dynamics::ControlKind::Green]);
        prop_assert_eq!(ext_green.entries, b.entries);
    }

    #[test]
    fn prediction_is_affine_in_controls(
        u in prop::collection::vec(feasible(60.0), 16),
        v in prop::collection::vec(feasible(60.0), 16),
        gamma in 0.0..=1.0f64,
    ) {
        let net = build_grid(4, 4, 300.0, 0.5).unwrap().with_friction(gamma);
        let b = extended_b_matrix(&net);
        let x = vec![5.0; net.links.len()];
        let d = vec![0.0; net.links.len()];
        let pu = predict_state(&net, &x, &u, &d, 60.0).unwrap();
        let pv = predict_state(&net, &x, &v, &d, 60.0).unwrap();
        let du = DVector::from_iterator(
            b.columns.len(),
            b.columns.iter().map(|id| v[id.junction.index()].get(id.kind) - u[id.junction.index()].get(id.kind)),
        );
        let predicted = &b.entries * du;
        for (r, l) in b.rows.iter().enumerate() {
            prop_assert!((pv.raw[l.index()] - pu.raw[l.index()] - predicted[r]).abs() <= 1e-10);
        }
    }

    #[test]
    fn projection_is_feasible_and_idempotent(
        g in -100.0..200.0f64,
        y1 in -100.0..200.0f64,
        y2 in -100.0..200.0f64,
        g_min in 0.0..20.0f64,
        cycle in 40.0..90.0f64,
    ) {
        let bounds = ControlBounds::new(g_min, cycle).unwrap();
        let raw = JunctionControls { green: g, yellow_first: y1, yellow_second: y2 };
        let p = project(&raw, &bounds);
        prop_assert!(p.green >= g_min && p.green <= cycle - g_min);
        // c - g + g can round one ulp past c.
        prop_assert!(p.yellow_first >= 0.0 && p.green + p.yellow_first <= cycle + 1e-12);
        prop_assert!(p.yellow_second >= 0.0 && p.yellow_second <= p.green);
        prop_assert!(dependent_controls(&p, cycle).is_ok());
        prop_assert_eq!(project(&p, &bounds), p);
    }

    #[test]
    fn schedules_tile_the_cycle_and_never_show_two_greens(c in feasible(60.0), t in 0.0..60.0f64) {
        let s = expand_schedule(&c, 60.0).unwrap();
        for stage in [Stage::First, Stage::Second] {
            let d = s.durations(stage);
            prop_assert!((d.green + d.yellow + d.red - 60.0).abs() < 1e-9);
            let mut end = 0.0;
            for iv in &s.stages[stage.index()] {
                prop_assert!((iv.start - end).abs() < 1e-9);
                prop_assert!(iv.end > iv.start);
                end = iv.end;
            }
            prop_assert!((end - 60.0).abs() < 1e-9);
        }
        let (a, b) = (s.color_at(Stage::First, t), s.color_at(Stage::Second, t));
        prop_assert!(!(a == SignalColor::Green && b == SignalColor::Green));
        // A yellow only ever faces green or red, never the other yellow.
        prop_assert!(!(a == SignalColor::Yellow && b == SignalColor::Yellow));
    }

    #[test]
    fn riccati_solution_is_symmetric_psd((b, w) in system()) {
        let syn = solve_discounted_dare(&b, &w).unwrap();
        let p = &syn.riccati;
        prop_assert!((p - p.transpose()).abs().max() <= 1e-10);
        let min_eig = p.clone().symmetric_eigen().eigenvalues.min();
        prop_assert!(min_eig >= -1e-10);
    }

    #[test]
    fn gain_depends_only_on_weight_ratio((b, w) in system(), k in 0.01..100.0f64) {
        let scaled = LqWeights { state: &w.state * k, control: &w.control * k, discount: w.discount };
        let l1 = solve_discounted_dare(&b, &w).unwrap().gain;
        let l2 = solve_discounted_dare(&b, &scaled).unwrap().gain;
        prop_assert!((l1 - l2).abs().max() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn comparison_deltas_are_antisymmetric(seed in 0u64..1000, gamma in 0.1..0.9f64) {
        let mut a = baseline_config();
        a.duration_s = 600.0;
        a.seed = seed;
        a.control.mode = ControlMode::Classical;
        let mut b = a.clone();
        b.control.mode = ControlMode::Semi;
        b.control.gamma = gamma;
        let runs = run_all(&[a, b]).unwrap();
        let ab = compare_pair(&runs[0], &runs[1]).unwrap();
        let ba = compare_pair(&runs[1], &runs[0]).unwrap();
        for (x, y) in ab.deltas.iter().zip(&ba.deltas) {
            prop_assert_eq!(x.delta.map(|d| -d), y.delta);
            prop_assert_eq!(&x.better, &y.better);
        }
    }

    #[test]
    fn runs_tile_every_cycle_and_conserve_vehicles(
        seed in 0u64..1000,
        cycles in 1usize..20,
        semi in any::<bool>(),
    ) {
        let mut c = baseline_config();
        c.seed = seed;
        c.duration_s = cycles as f64 * c.control.cycle_s;
        if !semi {
            c.control.mode = ControlMode::Classical;
        }
        let s = c.resolve().unwrap();
        let run = tuc_core::run::run_scenario(&s).unwrap();
        prop_assert_eq!(run.records.len(), cycles);
        let cycle = c.control.cycle_s;
        for r in &run.records {
            prop_assert_eq!(r.spawned, r.running + r.ended_cum + r.queued);
            for t in &r.junctions {
                prop_assert!((t.g + t.y1 + t.r1 - cycle).abs() < 1e-9);
                prop_assert!(((cycle - t.g) + t.y2 + t.r2 - cycle).abs() < 1e-9);
            }
        }
        prop_assert_eq!(run.summary.safety.overlaps, 0);
        prop_assert_eq!(run.summary.safety.box_conflicts, 0);
    }
}
