use approx::assert_relative_eq;
use porepinn::autodiff::{fd_check, Jet2, Layout, Tape};
use porepinn::model::{ArchSpec, FnnBaseline, FnnSpec, Network, TBNet};
use proptest::prelude::*;

fn small_arch(dim: usize) -> ArchSpec {
    let mut branches = vec![("u", 2, 6, false), ("v", 2, 6, true), ("p", 1, 5, false)];
    if dim == 3 {
        branches.push(("w", 1, 4, false));
    }
    ArchSpec::standard(dim, (2, 8), &branches)
}

fn grad_of<N: Network>(net: &N, points: &[f64], scale: f64) -> Vec<f64> {
    let tape = Tape::default();
    let names: Vec<&str> = net.output_names().iter().map(|s| s.as_str()).collect();
    let layout = Layout::new(net.input_dim(), 2);
    let outs = net.record(&tape, points, layout, &names, None).unwrap();
    let mut acc = None;
    for jet in outs.into_iter().flatten() {
        let mut t = jet.value.square();
        for c in jet.d1.iter().chain(&jet.d2) {
            t = t + c.square();
        }
        let t = t.mean();
        acc = Some(match acc {
            None => t,
            Some(a) => a + t,
        });
    }
    let loss = acc.unwrap() * scale;
    tape.finalize(loss).unwrap();
    tape.param_gradient().unwrap().flatten()
}

// f(x, y) = sin(x·y)·tanh(x) + 1/y, differentiated by hand.
fn symbolic(x: f64, y: f64) -> (f64, [f64; 2], [f64; 3]) {
    let (s, c) = (x * y).sin_cos();
    let t = x.tanh();
    let sech2 = 1.0 - t * t;
    let f = s * t + 1.0 / y;
    let fx = y * c * t + s * sech2;
    let fy = x * c * t - 1.0 / (y * y);
    let fxx = -y * y * s * t + 2.0 * y * c * sech2 - 2.0 * s * t * sech2;
    let fxy = (c - x * y * s) * t + x * c * sech2;
    let fyy = -x * x * s * t + 2.0 / (y * y * y);
    (f, [fx, fy], [fxx, fxy, fyy])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jet_primitives_match_hand_derivatives(x in -2.0f64..2.0, y in 0.3f64..3.0) {
        let jx = Jet2::variable(x, 0, 2);
        let jy = Jet2::variable(y, 1, 2);
        let f = (jx.clone() * jy.clone()).sin() * jx.tanh() + jy.recip();
        let (v, d1, d2) = symbolic(x, y);
        prop_assert!((f.value - v).abs() <= 1e-12 * (1.0 + v.abs()));
        for i in 0..2 {
            prop_assert!((f.d(i) - d1[i]).abs() <= 1e-11 * (1.0 + d1[i].abs()));
        }
        let got = [f.dd(0, 0), f.dd(0, 1), f.dd(1, 1)];
        for k in 0..3 {
            prop_assert!((got[k] - d2[k]).abs() <= 1e-10 * (1.0 + d2[k].abs()));
        }
        prop_assert_eq!(f.dd(0, 1), f.dd(1, 0));
    }

    #[test]
    fn parameter_gradient_is_linear_in_the_loss(seed in 0u64..1000, c in 0.1f64..50.0) {
        let net = TBNet::init(&small_arch(2), seed).unwrap();
        let pts = [0.1, 0.2, 0.7, 0.4, 0.35, 0.9];
        let g1 = grad_of(&net, &pts, 1.0);
        let gc = grad_of(&net, &pts, c);
        prop_assert_eq!(g1.len(), gc.len());
        for (a, b) in g1.iter().zip(&gc) {
            prop_assert!((c * a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn tape_derivatives_agree_with_finite_differences(
        seed in 0u64..10_000,
        dim in 2usize..=3,
        raw in proptest::collection::vec(0.05f64..0.95, 12),
    ) {
        let pts = &raw[..(12 / dim) * dim];
        let tb = TBNet::init(&small_arch(dim), seed).unwrap();
        let r = fd_check(&tb, pts, 1e-5);
        prop_assert!(!r.flagged, "tb-net {:?}", r);
        let fnn = FnnBaseline::init(&FnnSpec::matching(&small_arch(dim)), seed).unwrap();
        let r = fd_check(&fnn, pts, 1e-5);
        prop_assert!(!r.flagged, "fnn {:?}", r);
    }
}

#[test]
fn frozen_components_receive_zero_gradient() {
    let mut net = TBNet::init(&small_arch(2), 3).unwrap();
    net.freeze(&["trunk"]).unwrap();
    let g = grad_of(&net, &[0.2, 0.3, 0.6, 0.8], 1.0);
    let trunk_len: usize = net.trunk().layers.iter().map(|l| l.weight.len() + l.bias.len()).sum();
    assert!(g[..trunk_len].iter().all(|&x| x == 0.0));
    assert!(g[trunk_len..].iter().any(|&x| x != 0.0));
}

#[test]
fn straight_line_and_tape_values_agree() {
    let net = TBNet::init(&small_arch(2), 11).unwrap();
    let x = [0.42, 0.17];
    let direct = net.forward_eval(&x).unwrap();
    let jets = net.input_derivatives(&x).unwrap();
    for (a, j) in direct.iter().zip(&jets) {
        assert_relative_eq!(*a, j.value, max_relative = 1e-14);
    }
}
