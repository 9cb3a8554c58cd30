//! Acceptance criteria, one pass/fail line each. Trained networks and
//! reference solves are shared between criteria that use the same run.
//!
//! `POREPINN_ACCEPT=2,3,13` restricts the run to the listed criteria.
//! Failed criteria are reported, not fatal; a panic means the harness itself
//! broke.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::statistics::Statistics;

use porepinn::autodiff::{fd_check, Activation};
use porepinn::config::{preset, CaseConfig, Scale};
use porepinn::experiment::{reference, train_case, Architecture, RunOutcome, Timing, DEFAULT_SEED};
use porepinn::metrics::{
    error_metrics, kde_density, re_histogram, regression_metrics, sample_eval_points, Slice,
};
use porepinn::model::{ArchSpec, Checkpoint, FnnBaseline, FnnSpec, LayerSpec, TBNet};
use porepinn::oracle::{energy_audit, interphase_totals, ReferenceDataset};
use porepinn::trainer::{Status, TraceRow};

/// Reduced schedule of the inverse and noise sweeps.
const SWEEP_ADAM: u64 = 8_000;
const SWEEP_LBFGS: u64 = 1_000;
/// Finite-difference step of the derivative audit.
const FD_STEP: f64 = 1e-5;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Lazily computed runs shared between criteria.
#[derive(Default)]
struct Shared {
    references: BTreeMap<String, ReferenceDataset>,
    runs: BTreeMap<String, RunOutcome>,
}

impl Shared {
    fn reference(&mut self, case: &CaseConfig) -> &ReferenceDataset {
        if !self.references.contains_key(&case.id) {
            let ds = reference(case).expect("reference solve");
            self.references.insert(case.id.clone(), ds);
        }
        &self.references[&case.id]
    }

    /// Trains `case` once under `key`.
    fn run(
        &mut self,
        key: &str,
        case: &CaseConfig,
        architecture: Architecture,
        source: Option<&Checkpoint>,
    ) -> &RunOutcome {
        if !self.runs.contains_key(key) {
            let ds = self.reference(case).clone();
            let start = Instant::now();
            eprintln!("  training {key} ({:?}, {} + {})", case.schedule.mode, case.schedule.adam_epochs, case.schedule.lbfgs_max_iters);
            let mut progress = |r: &TraceRow| {
                if r.epoch % 5000 == 0 && r.epoch > 0 {
                    eprintln!("    {key} epoch {} loss {:.3e} ({:.0}s)", r.epoch, r.loss.total, start.elapsed().as_secs_f64());
                }
            };
            let out = train_case(case, architecture, source, &ds, DEFAULT_SEED, Some(&mut progress)).expect("training run");
            eprintln!(
                "  done {key}: {:?}, final loss {:.3e}, {:.0}s",
                out.trace.status(),
                out.trace.last().map(|b| b.total).unwrap_or(f64::NAN),
                start.elapsed().as_secs_f64()
            );
            self.runs.insert(key.to_string(), out);
        }
        &self.runs[key]
    }

    fn flow_b(&mut self) -> Checkpoint {
        let case = preset("B", Scale::Desk).unwrap();
        let out = self.run("B", &case, Architecture::TrunkBranch, None);
        out.net.checkpoint("B", 0, DEFAULT_SEED)
    }
}

fn rel(out: &RunOutcome, var: &str, slice: Slice) -> f64 {
    out.report.get(var, slice).map(|m| m.error.relative_l2).unwrap_or(f64::NAN)
}

fn c1_autodiff(_: &mut Shared) -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut d1, mut d2, mut dp) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..20 {
        let dim = if k % 2 == 0 { 2 } else { 3 };
        let points: Vec<f64> = (0..20 * dim).map(|_| rng.gen_range(0.0..1.0)).collect();
        let report = if k % 4 == 3 {
            let hidden = (0..rng.gen_range(1..=3))
                .map(|i| LayerSpec::new(rng.gen_range(3..=8), if i == 0 { Activation::Sine } else { Activation::Tanh }))
                .collect();
            let spec = FnnSpec {
                input_dim: dim,
                hidden,
                outputs: vec!["u".into(), "v".into(), "p".into()],
            };
            fd_check(&FnnBaseline::init(&spec, rng.gen()).unwrap(), &points, FD_STEP)
        } else {
            let trunk = (rng.gen_range(1..=3), rng.gen_range(3..=8));
            let names = ["u", "v", "p", "hk", "ts"];
            let nb = rng.gen_range(1..=names.len());
            let branches: Vec<(&str, usize, usize, bool)> = names[..nb]
                .iter()
                .map(|n| (*n, rng.gen_range(1..=2), rng.gen_range(2..=6), rng.gen_bool(0.5)))
                .collect();
            let arch = ArchSpec::standard(dim, trunk, &branches);
            fd_check(&TBNet::init(&arch, rng.gen()).unwrap(), &points, FD_STEP)
        };
        d1 = d1.max(report.max_d1);
        d2 = d2.max(report.max_d2);
        dp = dp.max(report.max_param);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        d1 <= 1e-6 && d2 <= 1e-4 && dp <= 1e-5 && secs < 10.0,
        format!("max deviation d1 {d1:.1e} (≤1e-6), d2 {d2:.1e} (≤1e-4), params {dp:.1e} (≤1e-5); {secs:.1}s (<10s)"),
    )
}

fn c2_oracle_flow(shared: &mut Shared) -> Verdict {
    let case = preset("B", Scale::Desk).unwrap();
    let start = Instant::now();
    let ds = shared.reference(&case).clone();
    let secs = start.elapsed().as_secs_f64();
    let g = &ds.grid;
    let nx = g.n[0];
    let inlet: Vec<f64> = (0..g.len()).filter(|&n| g.is_inlet(n)).map(|n| ds.p[n]).collect();
    let drop = inlet.iter().sum::<f64>() / inlet.len() as f64 - case.physics.boundary.outlet_pressure;
    let analytic = case.physics.darcy_drop();
    let drop_err = (drop / analytic - 1.0).abs();
    let vel = case.physics.velocity();
    let v_dev = (0..g.len())
        .filter(|&n| {
            let i = g.multi(n)[0];
            i > 0 && i < nx - 1
        })
        .map(|n| (ds.v[n] / vel - 1.0).abs())
        .fold(0.0, f64::max);
    verdict(
        drop_err <= 0.01 && v_dev <= 1e-3 && secs < 120.0,
        format!(
            "ΔP {drop:.2} Pa vs Darcy {analytic:.2} Pa, deviation {drop_err:.1e} (≤1e-2); max |v/V−1| off walls {v_dev:.1e} (≤1e-3); {secs:.1}s (<120s)"
        ),
    )
}

fn c3_oracle_energy(shared: &mut Shared) -> Verdict {
    let case = preset("D", Scale::Desk).unwrap();
    let start = Instant::now();
    let ds = shared.reference(&case).clone();
    let secs = start.elapsed().as_secs_f64();
    let audit = energy_audit(&case.physics, &ds).unwrap();
    let (source, sink) = interphase_totals(&case.physics, &ds).unwrap();
    let anti = (source + sink).abs() / source.abs().max(sink.abs());
    let gap = audit.relative_gap();
    verdict(
        gap <= 0.01 && anti <= 1e-8 && secs < 180.0,
        format!(
            "audit gap {gap:.1e} (≤1e-2; outlet-only balance {:.1e}); interphase antisymmetry {anti:.1e} (≤1e-8); {secs:.1}s (<180s)",
            audit.outlet_only_gap()
        ),
    )
}

fn c4_forward_flow(shared: &mut Shared) -> Verdict {
    let start = Instant::now();
    shared.flow_b();
    let out = &shared.runs["B"];
    let secs = start.elapsed().as_secs_f64();
    let p = rel(out, "p", Slice::Full);
    let v = rel(out, "v", Slice::Full);
    verdict(
        p <= 1e-3 && v <= 1e-3 && secs <= 1800.0,
        format!("case B p rel L2 {p:.3e} (≤1e-3), v rel L2 {v:.3e} (≤1e-3); {secs:.0}s (≤1800s)"),
    )
}

fn c5_forward_heat(shared: &mut Shared) -> Verdict {
    let src = shared.flow_b();
    let case = preset("D", Scale::Desk).unwrap();
    let start = Instant::now();
    let out = shared.run("D", &case, Architecture::TrunkBranch, Some(&src));
    let secs = start.elapsed().as_secs_f64();
    let ts = rel(out, "Ts", Slice::Full);
    let tf = rel(out, "Tf", Slice::Full);
    verdict(
        ts <= 3e-2 && tf <= 3e-2 && secs <= 2700.0,
        format!("case D step-wise Ts rel L2 {ts:.3e}, Tf rel L2 {tf:.3e} (≤3e-2); {secs:.0}s (≤2700s)"),
    )
}

fn c6_joint(shared: &mut Shared) -> Verdict {
    let src = shared.flow_b();
    let d = preset("D", Scale::Desk).unwrap();
    let step = shared.run("D", &d, Architecture::TrunkBranch, Some(&src));
    let step_status = step.trace.status();
    let step_loss = step.trace.last().map(|b| b.total).unwrap_or(f64::NAN);
    let mut ok = step_status != Status::Diverged;
    let mut parts = vec![format!("step-wise {step_status:?} loss {step_loss:.2e}")];
    for name in ["joint-1", "joint-2", "joint-3"] {
        let case = preset(name, Scale::Desk).unwrap();
        let out = shared.run(name, &case, Architecture::TrunkBranch, None);
        let loss = out.trace.last().map(|b| b.total).unwrap_or(f64::NAN);
        let diverged = out.trace.status() == Status::Diverged;
        let this = diverged || loss >= 10.0 * step_loss;
        ok &= this;
        parts.push(if diverged {
            format!("{name} diverged at epoch {}", out.trace.divergence.as_ref().map(|d| d.epoch).unwrap_or(0))
        } else {
            format!("{name} loss {loss:.2e} ({:.0}×)", loss / step_loss)
        });
    }
    verdict(ok, format!("{} (joint ≥10× or diverged)", parts.join("; ")))
}

fn inverse_case(n_points: usize, noise: f64) -> CaseConfig {
    let mut c = preset("inverse-D", Scale::Desk).unwrap();
    c.labels = Some(porepinn::config::LabelSpec { n_points, noise });
    c.schedule.adam_epochs = SWEEP_ADAM;
    c.schedule.lbfgs_max_iters = SWEEP_LBFGS;
    c
}

fn inverse_error(shared: &mut Shared, n_points: usize, noise: f64) -> f64 {
    let src = shared.flow_b();
    let case = inverse_case(n_points, noise);
    let key = format!("inverse-{n_points}-{noise}");
    // All inverse runs share the case-D reference.
    let d = preset("D", Scale::Desk).unwrap();
    let ds = shared.reference(&d).clone();
    shared.references.entry(case.id.clone()).or_insert(ds);
    rel(shared.run(&key, &case, Architecture::TrunkBranch, Some(&src)), "Ts", Slice::Full)
}

fn c7_inverse(shared: &mut Shared) -> Verdict {
    let counts = [0usize, 5, 20, 50];
    let errs: Vec<f64> = counts.iter().map(|&n| inverse_error(shared, n, 0.0)).collect();
    let ratio = errs[2] / errs[0];
    let monotone = errs.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    verdict(
        ratio <= 0.2 && monotone,
        format!(
            "Ts rel L2 at {{0,5,20,50}} points: {} ; 20/0 ratio {ratio:.3} (≤0.2); non-increasing within 10%: {monotone}",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn c8_noise(shared: &mut Shared) -> Verdict {
    let levels = [0.0, 0.001, 0.002, 0.005, 0.01];
    let errs: Vec<f64> = levels.iter().map(|&x| inverse_error(shared, 50, x)).collect();
    let ordered = errs.windows(2).all(|w| w[1] >= 0.9 * w[0]);
    verdict(
        ordered,
        format!(
            "Ts rel L2 at noise {{0, 0.1, 0.2, 0.5, 1.0}}%: {} ; non-decreasing within 10%",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn c9_transfer(shared: &mut Shared) -> Verdict {
    let src = shared.flow_b();
    let case = preset("eps-0.4", Scale::Desk).unwrap();
    let scratch_case = porepinn::experiment::scratch_counterpart(&case);
    shared.reference(&case);
    let ds = shared.references[&case.id].clone();
    shared.references.insert(scratch_case.id.clone(), ds);
    let t = shared.run("eps-0.4", &case, Architecture::TrunkBranch, Some(&src)).clone();
    let s = shared.run("eps-0.4-scratch", &scratch_case, Architecture::TrunkBranch, None).clone();
    let first = |o: &RunOutcome| o.trace.first().map(|b| b.total).unwrap_or(f64::NAN);
    let (tf, sf) = (first(&t), first(&s));
    let (tp, sp) = (rel(&t, "p", Slice::Full), rel(&s, "p", Slice::Full));
    let (tt, st) = (Timing::of(&t.trace).seconds_per_epoch, Timing::of(&s.trace).seconds_per_epoch);
    verdict(
        tf < sf && tp <= 2.0 * sp && tt <= st,
        format!(
            "first loss {tf:.3e} vs scratch {sf:.3e}; p rel L2 {tp:.3e} vs 2×{sp:.3e}; {:.2} ms vs {:.2} ms per epoch",
            tt * 1e3,
            st * 1e3
        ),
    )
}

fn c10_architecture(shared: &mut Shared) -> Verdict {
    let case = preset("fnn-0.1", Scale::Desk).unwrap();
    let tb = rel(shared.run("fnn-0.1-tb", &case, Architecture::TrunkBranch, None), "p", Slice::Full);
    let fnn = rel(shared.run("fnn-0.1-fnn", &case, Architecture::Fnn, None), "p", Slice::Full);
    verdict(tb < fnn, format!("ṁ = 0.1: TB-net p rel L2 {tb:.3e} vs FNN {fnn:.3e}"))
}

fn c11_weights(shared: &mut Shared) -> Verdict {
    shared.flow_b();
    let mut rows = Vec::new();
    for scale in [1.0, 10.0, 100.0, 1000.0] {
        let out = if scale == 100.0 {
            &shared.runs["B"]
        } else {
            let mut case = preset("B", Scale::Desk).unwrap();
            case.weights.set(6, scale);
            case.id = format!("B-lambda6-{scale}");
            let b = preset("B", Scale::Desk).unwrap();
            let ds = shared.reference(&b).clone();
            shared.references.insert(case.id.clone(), ds);
            shared.run(&case.id.clone(), &case, Architecture::TrunkBranch, None)
        };
        let e6 = out.trace.last().map(|b| b.term(6)).unwrap_or(f64::NAN);
        rows.push((scale, e6, rel(out, "p", Slice::Full)));
    }
    let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
    let best = rows.iter().min_by(|a, b| a.2.total_cmp(&b.2)).map(|r| r.0).unwrap();
    verdict(
        decreasing && best == 100.0,
        format!(
            "{} ; e6 decreasing: {decreasing}; p minimum at λ6 = {best}",
            rows.iter()
                .map(|(s, e, p)| format!("λ6={s}: e6 {e:.2e}, p {p:.2e}"))
                .collect::<Vec<_>>()
                .join("; ")
        ),
    )
}

fn c12_three_d(shared: &mut Shared) -> Verdict {
    let case = preset("3d", Scale::Desk).unwrap();
    let start = Instant::now();
    let out = shared.run("3d", &case, Architecture::TrunkBranch, None);
    let secs = start.elapsed().as_secs_f64();
    let a = rel(out, "p", Slice::Plane { axis: 0, value: 0.3 });
    let b = rel(out, "p", Slice::Plane { axis: 0, value: 0.7 });
    verdict(
        a <= 1e-3 && b <= 1e-3 && secs <= 3600.0,
        format!("p rel L2 on x̃ = 0.3: {a:.3e}, x̃ = 0.7: {b:.3e} (≤1e-3); {secs:.0}s (≤3600s)"),
    )
}

fn c13_metrics(_: &mut Shared) -> Verdict {
    let start = Instant::now();
    let mut fails = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            fails.push(what.to_string());
        }
    };
    let exact: Vec<f64> = (0..50).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
    let m = error_metrics(&exact, &exact).unwrap();
    check(m.relative_l2 == 0.0 && m.max_relative == 0.0 && m.rmse == 0.0 && m.mape == 0.0, "pred = exact");
    let scaled: Vec<f64> = exact.iter().map(|x| 1.01 * x).collect();
    let m = error_metrics(&scaled, &exact).unwrap();
    check((m.relative_l2 - 0.01).abs() < 1e-12 && (m.mape - 0.01).abs() < 1e-12, "pred = 1.01 exact");
    let r = regression_metrics(&exact, &exact).unwrap();
    check(r.r == 1.0 && r.r2 == 1.0 && r.adj_r2 == 1.0, "regression identity");
    let centred: Vec<f64> = (0..40).map(|i| (i as f64 - 19.5) * 0.25).collect();
    let neg: Vec<f64> = centred.iter().map(|x| -x).collect();
    check(regression_metrics(&neg, &centred).unwrap().r == -1.0, "anti-correlation");

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cluster: Vec<(f64, f64)> = (0..200)
        .map(|_| (2.0 + 0.01 * rng.sample::<f64, _>(StandardNormal), -1.0 + 0.01 * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let kde = kde_density(&cluster, 200).unwrap();
    let (hx, hy) = kde.bandwidth;
    let mut near = 0.0;
    let (dx, dy) = (kde.xs[1] - kde.xs[0], kde.ys[1] - kde.ys[0]);
    for (i, x) in kde.xs.iter().enumerate() {
        for (j, y) in kde.ys.iter().enumerate() {
            if (x - 2.0).abs() <= 3.0 * hx + 0.05 && (y + 1.0).abs() <= 3.0 * hy + 0.05 {
                near += kde.at(i, j) * dx * dy;
            }
        }
    }
    check(near > 0.95, "tight cluster mass");
    let two: Vec<(f64, f64)> = (0..100)
        .map(|k| {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            let a = 0.3 * rng.sample::<f64, _>(StandardNormal);
            let b = 0.3 * rng.sample::<f64, _>(StandardNormal);
            (s + a, s + b)
        })
        .collect();
    let swapped: Vec<(f64, f64)> = two.iter().map(|&(a, b)| (b, a)).collect();
    let (k1, k2) = (kde_density(&two, 60).unwrap(), kde_density(&swapped, 60).unwrap());
    let n = k1.ys.len();
    let symmetric = (0..k1.xs.len()).all(|i| (0..n).all(|j| (k1.at(i, j) - k2.at(j, i)).abs() <= 1e-12 * k1.at(i, j).abs().max(1e-300) + 1e-15));
    check(symmetric, "two-cluster swap symmetry");
    let normal: Vec<(f64, f64)> = (0..1000)
        .map(|_| (rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    check((kde_density(&normal, 200).unwrap().integral() - 1.0).abs() <= 1e-3, "KDE normalization");

    let edges = [0.0, 1e-3, 1e-2, 1e-1, 1.0];
    let h = re_histogram(&exact, &exact, &edges).unwrap();
    check(h[0] == exact.len() && h[1..].iter().all(|&c| c == 0), "histogram of exact values");
    let noisy: Vec<f64> = exact.iter().map(|x| x * (1.0 + rng.gen_range(-0.5..0.5))).collect();
    check(re_histogram(&noisy, &exact, &edges).unwrap().iter().sum::<usize>() == exact.len(), "histogram counts");
    check(sample_eval_points(0, 100, 1).unwrap().is_empty(), "empty sample");
    let s1 = sample_eval_points(1000, 200 * 250, 5).unwrap();
    check(s1 == sample_eval_points(1000, 200 * 250, 5).unwrap(), "sample reproducible");
    let mut sorted = s1.clone();
    sorted.sort_unstable();
    sorted.dedup();
    check(sorted.len() == 1000, "sample distinct");

    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let exact: Vec<f64> = (0..500).map(|i| 300.0 + 20.0 * (i as f64 * 0.01).sin() + rng.gen_range(0.0..5.0)).collect();
        let sd = exact.clone().std_dev();
        let pred: Vec<f64> = exact.iter().map(|x| x + 0.1 * sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let ours = regression_metrics(&pred, &exact).unwrap();
        let r = pred.clone().covariance(exact.clone()) / (pred.clone().std_dev() * sd);
        let ss_tot = exact.clone().variance() * (exact.len() - 1) as f64;
        let ss_res: f64 = pred.iter().zip(&exact).map(|(p, e)| (p - e).powi(2)).sum();
        let r2 = 1.0 - ss_res / ss_tot;
        let n = exact.len() as f64;
        let adj = 1.0 - (1.0 - r2) * (n - 1.0) / (n - 2.0);
        worst = worst.max((ours.r - r).abs()).max((ours.r2 - r2).abs()).max((ours.adj_r2 - adj).abs());
    }
    check(worst <= 1e-10, "statistics oracle");
    let secs = start.elapsed().as_secs_f64();
    let ok = fails.is_empty() && secs < 10.0;
    verdict(
        ok,
        format!(
            "trivial examples {}; regression vs statistics package max deviation {worst:.1e} (≤1e-10); {secs:.1}s (<10s)",
            if fails.is_empty() { "all pass".to_string() } else { format!("failing: {}", fails.join(", ")) }
        ),
    )
}

fn c14_determinism(shared: &mut Shared) -> Verdict {
    let mut case = preset("B", Scale::Desk).unwrap();
    case.schedule.adam_epochs = 300;
    case.schedule.lbfgs_max_iters = 30;
    let ds = shared.reference(&preset("B", Scale::Desk).unwrap()).clone();
    let trace_bytes = || {
        let out = train_case(&case, Architecture::TrunkBranch, None, &ds, DEFAULT_SEED, None).unwrap();
        let mut buf = Vec::new();
        out.trace.write_csv(&mut buf).unwrap();
        (buf, out.trace.rows.len())
    };
    let (a, rows) = trace_bytes();
    let (b, _) = trace_bytes();
    verdict(a == b, format!("two seeded desk runs ({rows} trace rows): trace CSVs {}", if a == b { "bit-identical" } else { "differ" }))
}

type Criterion = (u32, &'static str, fn(&mut Shared) -> Verdict);

fn main() {
    let criteria: [Criterion; 14] = [
        (1, "autodiff correctness", c1_autodiff),
        (2, "oracle flow fidelity", c2_oracle_flow),
        (3, "oracle energy fidelity", c3_oracle_energy),
        (4, "forward flow", c4_forward_flow),
        (5, "forward heat", c5_forward_heat),
        (6, "step-wise vs joint", c6_joint),
        (7, "inverse trend", c7_inverse),
        (8, "noise ordering", c8_noise),
        (9, "transfer learning", c9_transfer),
        (10, "architecture comparison", c10_architecture),
        (11, "weight sweep", c11_weights),
        (12, "3-D flow", c12_three_d),
        (13, "metrics unit suite", c13_metrics),
        (14, "determinism", c14_determinism),
    ];
    let only: Option<Vec<u32>> = std::env::var("POREPINN_ACCEPT")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut shared = Shared::default();
    let mut passed = 0;
    let mut total = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        eprintln!("criterion {id}: {name}");
        let start = Instant::now();
        let v = run(&mut shared);
        total += 1;
        if v.pass {
            passed += 1;
        }
        println!(
            "{} {id:>2} {name}: {} [{:.0}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed}/{total} criteria pass");
}
