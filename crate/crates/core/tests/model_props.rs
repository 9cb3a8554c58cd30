use porepinn::config::{preset, Scale};
use porepinn::model::{load_checkpoint, save_checkpoint, ArchSpec, Checkpoint, FnnBaseline, FnnSpec, Network, TBNet};
use proptest::prelude::*;

const PRESETS: [&str; 6] = ["A", "B", "D", "E", "3d", "fnn-0.1"];

fn small_arch() -> ArchSpec {
    ArchSpec::standard(2, (2, 8), &[("u", 2, 6, false), ("v", 2, 6, true), ("p", 1, 5, false), ("hk", 2, 4, true)])
}

#[test]
fn fully_connected_baseline_has_more_parameters() {
    for name in PRESETS {
        for scale in [Scale::Desk, Scale::Full] {
            let case = preset(name, scale).unwrap();
            let tb = TBNet::init(&case.arch, 0).unwrap();
            let fnn = FnnBaseline::init(&FnnSpec::matching(&case.arch), 0).unwrap();
            assert!(
                fnn.param_count() > tb.param_count(),
                "{name}: fnn {} vs tb {}",
                fnn.param_count(),
                tb.param_count()
            );
            assert_eq!(fnn.output_names(), tb.output_names());
        }
    }
}

#[test]
fn checkpoint_file_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut net = TBNet::init(&small_arch(), 5).unwrap();
    net.freeze(&["trunk", "u"]).unwrap();
    let ckpt = Checkpoint::from_tbnet(&net, "small", 42, 5);
    let path = dir.path().join("net.ppck");
    save_checkpoint(&ckpt, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ckpt);
    let net2 = back.to_tbnet().unwrap();
    assert_eq!(net2.freeze_mask(), net.freeze_mask());
    let x = [0.3, 0.6];
    assert_eq!(net.forward_eval(&x).unwrap(), net2.forward_eval(&x).unwrap());

    let fnn = FnnBaseline::init(&FnnSpec::matching(&small_arch()), 9).unwrap();
    let ck = Checkpoint::from_fnn(&fnn, "small-fnn", 0, 9);
    assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap().to_fnn().unwrap(), fnn);
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let net = TBNet::init(&small_arch(), 1).unwrap();
    let mut bytes = Checkpoint::from_tbnet(&net, "x", 0, 1).to_bytes();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() / 2]).is_err());
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    // A flipped payload byte either fails the integrity check or the parse.
    assert!(Checkpoint::from_bytes(&bytes).map(|c| c.to_tbnet().unwrap() != net).unwrap_or(true));
}

#[test]
fn adopting_a_flow_net_keeps_flow_outputs() {
    let flow = TBNet::init(
        &ArchSpec::standard(2, (2, 8), &[("u", 2, 6, false), ("v", 2, 6, true), ("p", 1, 5, false)]),
        3,
    )
    .unwrap();
    let mut heat = TBNet::init(&small_arch(), 4).unwrap();
    let taken = heat.adopt(&flow).unwrap();
    assert_eq!(taken, ["trunk", "u", "v", "p"]);
    let x = [0.25, 0.75];
    let a = flow.forward_eval(&x).unwrap();
    let b = heat.forward_eval(&x).unwrap();
    for name in ["u", "v", "p"] {
        let i = flow.output_index(name).unwrap();
        let j = heat.output_index(name).unwrap();
        assert_eq!(a[i], b[j]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn branch_order_does_not_change_named_outputs(
        seed in 0u64..1000,
        x in 0.0f64..1.0,
        y in 0.0f64..1.0,
        rot in 1usize..4,
    ) {
        let net = TBNet::init(&small_arch(), seed).unwrap();
        let mut arch = net.arch.clone();
        arch.branches.rotate_left(rot);
        let mut comps = net.components.clone();
        comps[1..].rotate_left(rot);
        let order = arch.outputs();
        let permuted = TBNet::from_components(arch, comps, order).unwrap();
        let a = net.forward_eval(&[x, y]).unwrap();
        let b = permuted.forward_eval(&[x, y]).unwrap();
        for name in ["u", "v", "p", "hk"] {
            prop_assert_eq!(a[net.output_index(name).unwrap()], b[permuted.output_index(name).unwrap()]);
        }
    }

    #[test]
    fn trainable_flat_round_trip(seed in 0u64..1000, frozen in proptest::sample::subsequence(vec!["trunk", "u", "v", "p", "hk"], 0..5)) {
        let mut net = TBNet::init(&small_arch(), seed).unwrap();
        net.freeze(&frozen).unwrap();
        let flat = net.trainable_flat();
        let frozen_len: usize = net
            .components
            .iter()
            .filter(|c| c.frozen)
            .flat_map(|c| c.layers.iter())
            .map(|l| l.weight.len() + l.bias.len())
            .sum();
        prop_assert_eq!(flat.len() + frozen_len, net.param_count());
        let before = net.clone();
        let shifted: Vec<f64> = flat.iter().map(|v| v + 1.0).collect();
        net.set_trainable_flat(&shifted);
        for (a, b) in net.components.iter().zip(&before.components) {
            if a.frozen {
                prop_assert_eq!(a, b);
            } else {
                prop_assert_ne!(a, b);
            }
        }
    }
}

#[test]
fn unknown_component_freeze_leaves_net_untouched() {
    let mut net = TBNet::init(&small_arch(), 2).unwrap();
    let before = net.freeze_mask();
    assert!(net.freeze(&["trunk", "nope"]).is_err());
    assert_eq!(net.freeze_mask(), before);
}
