use std::fs;

use porepinn::collocation::{boundary_points, lhs_interior, stratum_counts, Facet};
use porepinn::config::{preset, CaseConfig, Mode, Scale};
use porepinn::experiment::{reference, train_case, Architecture, RunDir};
use porepinn::loss::LossCaches;
use porepinn::model::ArchSpec;
use porepinn::optim::{adam_step, lbfgs_step, AdamConfig, AdamState, LbfgsConfig, LbfgsState, StepOutcome};
use porepinn::trainer::{build_problem, loss_and_grad, train_forward_flow, train_forward_heat, Status};
use proptest::prelude::*;

/// Preset `name` shrunk to a few seconds of training.
fn tiny(name: &str, adam: u64, lbfgs: u64) -> CaseConfig {
    let mut c = preset(name, Scale::Desk).unwrap();
    c.grid = vec![11, 13];
    c.points.interior = 48;
    c.points.inlet = 12;
    c.points.outlet = 12;
    c.points.wall = 12;
    let outputs = c.arch.outputs();
    let branches: Vec<(&str, usize, usize, bool)> = outputs.iter().map(|o| (o.as_str(), 1, 6, false)).collect();
    c.arch = ArchSpec::standard(2, (2, 10), &branches);
    c.schedule.adam_epochs = adam;
    c.schedule.lbfgs_max_iters = lbfgs;
    c
}

#[test]
fn collocation_is_seeded_and_stratified() {
    let bounds = [(0.0, 0.1), (0.0, 0.02)];
    let a = lhs_interior(40, &bounds, 5).unwrap();
    assert_eq!(a, lhs_interior(40, &bounds, 5).unwrap());
    assert_ne!(a.coords, lhs_interior(40, &bounds, 6).unwrap().coords);
    for (d, &(lo, hi)) in bounds.iter().enumerate() {
        assert!(stratum_counts(&a.axis(d), lo, hi, 40).iter().all(|&k| k == 1));
        assert!(a.axis(d).iter().all(|&x| x > lo && x < hi));
    }
    let inlet = boundary_points(Facet::Inlet, 20, &bounds, 5).unwrap();
    let outlet = boundary_points(Facet::Outlet, 20, &bounds, 5).unwrap();
    assert!(inlet.axis(1).iter().all(|&y| y == 0.0));
    assert!(outlet.axis(1).iter().all(|&y| y == 0.02));
    assert!(stratum_counts(&inlet.axis(0), 0.0, 0.1, 20).iter().all(|&k| k == 1));
}

#[test]
fn scaling_every_weight_scales_loss_and_gradient() {
    let case = tiny("B", 0, 0);
    let net = porepinn::model::TBNet::init(&case.arch, 1).unwrap();
    let w = case.weights_for(&case.flow_terms());
    let p1 = build_problem(&case, w.clone(), 1, None).unwrap();
    let p7 = build_problem(&case, w.scaled(7.0), 1, None).unwrap();
    let (b1, g1) = loss_and_grad(&net, &p1, &mut LossCaches::default()).unwrap();
    let (b7, g7) = loss_and_grad(&net, &p7, &mut LossCaches::default()).unwrap();
    assert!((b7.total - 7.0 * b1.total).abs() <= 1e-12 * b7.total);
    assert_eq!(b1.terms, b7.terms);
    for (a, b) in g1.iter().zip(&g7) {
        assert!((b - 7.0 * a).abs() <= 1e-11 * (1.0 + b.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adam_is_invariant_to_gradient_scale(
        g in proptest::collection::vec(-5.0f64..5.0, 1..20),
        c in 1e-3f64..1e3,
        steps in 1usize..20,
    ) {
        let mut cfg = AdamConfig::with_lr(1e-2);
        cfg.eps = 0.0;
        let (mut x1, mut x2) = (vec![0.5; g.len()], vec![0.5; g.len()]);
        let (mut s1, mut s2) = (AdamState::new(cfg, g.len()), AdamState::new(cfg, g.len()));
        let gs: Vec<f64> = g.iter().map(|v| v * c).collect();
        for _ in 0..steps {
            adam_step(&mut s1, &mut x1, &g).unwrap();
            adam_step(&mut s2, &mut x2, &gs).unwrap();
        }
        for (a, b) in x1.iter().zip(&x2) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn lbfgs_never_increases_a_convex_quadratic(
        diag in proptest::collection::vec(0.1f64..100.0, 2..12),
        seed in 0u64..1000,
    ) {
        let n = diag.len();
        let x0: Vec<f64> = (0..n).map(|i| ((seed + i as u64) % 7) as f64 - 3.0).collect();
        let mut eval = |x: &[f64]| -> Result<(f64, Vec<f64>), ()> {
            let f = x.iter().zip(&diag).map(|(v, d)| 0.5 * d * v * v).sum();
            Ok((f, x.iter().zip(&diag).map(|(v, d)| d * v).collect()))
        };
        let mut st = LbfgsState::new(LbfgsConfig::default(), x0, &mut eval);
        let mut f = st.f;
        for _ in 0..60 {
            match lbfgs_step(&mut st, &mut eval) {
                StepOutcome::Accepted => {
                    prop_assert!(st.f <= f);
                    f = st.f;
                }
                StepOutcome::Diverged => prop_assert!(false, "diverged on a quadratic"),
                _ => break,
            }
        }
        prop_assert!(f <= 1e-12 || st.g.iter().all(|g| g.abs() < 1e-8));
    }
}

#[test]
fn stepwise_heat_never_touches_frozen_flow_parameters() {
    let flow_case = tiny("B", 30, 5);
    let flow = train_forward_flow(&flow_case, 3, None).unwrap();
    let ckpt = flow.checkpoint(&flow_case, 3);
    let heat_case = tiny("D", 30, 5);
    let heat = train_forward_heat(&heat_case, &ckpt, 3, None).unwrap();
    assert_ne!(heat.trace.status(), Status::Diverged);
    for name in ["trunk", "u", "v", "p"] {
        let a = flow.net.components.iter().find(|c| c.name == name).unwrap();
        let b = heat.net.components.iter().find(|c| c.name == name).unwrap();
        assert!(b.frozen, "{name} should be frozen");
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(la.weight.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), lb.weight.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            assert_eq!(la.bias.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), lb.bias.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
    }
    let hk = heat.net.components.iter().find(|c| c.name == "hk").unwrap();
    assert!(!hk.frozen);
}

#[test]
fn same_seed_gives_identical_trace_and_artifacts() {
    let case = tiny("B", 40, 5);
    let ds = reference(&case).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for k in 0..2 {
        let root = dir.path().join(format!("run{k}"));
        let rd = RunDir::create(&root, &case, 11, Architecture::TrunkBranch, None, None).unwrap();
        assert!(root.join(RunDir::CONFIG).exists());
        let out = train_case(&case, Architecture::TrunkBranch, None, &ds, 11, None).unwrap();
        let summary = rd.write_outcome(&case, 11, Architecture::TrunkBranch, &ds, &out).unwrap();
        assert_eq!(RunDir::read_summary(&root).unwrap(), summary);
        for f in [RunDir::CHECKPOINT, RunDir::TRACE, RunDir::REPORT_CSV, RunDir::TIMING, "re_histogram_p.csv"] {
            assert!(root.join(f).exists(), "{f}");
        }
        traces.push(fs::read(root.join(RunDir::TRACE)).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    let other = train_case(&case, Architecture::TrunkBranch, None, &ds, 12, None).unwrap();
    let mut buf = Vec::new();
    other.trace.write_csv(&mut buf).unwrap();
    assert_ne!(buf, traces[0]);
}

#[test]
fn fnn_baseline_trains_flow_only() {
    let case = tiny("fnn-0.1", 10, 2);
    let ds = reference(&case).unwrap();
    let out = train_case(&case, Architecture::Fnn, None, &ds, 1, None).unwrap();
    assert!(out.report.get("p", porepinn::metrics::Slice::Full).is_some());
    let mut heat = tiny("D", 10, 2);
    heat.schedule.mode = Mode::Joint;
    let ds = reference(&heat).unwrap();
    assert!(train_case(&heat, Architecture::Fnn, None, &ds, 1, None).is_err());
}
