mod common;

use circuit_augmentor::boost::{GbrtConfig, GbrtDelayProvider};
use circuit_augmentor::oracle::{
    critical_path_delay, generate_dataset, GateKind, Netlist, OracleConstants, OracleKind, SamplingRanges,
};
use circuit_augmentor::rng;

#[test]
fn critical_path_matches_enumeration_on_builtins() {
    let c = OracleConstants::default();
    let ranges = SamplingRanges::default();
    let mut r = rng::stream(11, "points");
    for net in [Netlist::c17(), Netlist::ripple_carry_adder4()] {
        for _ in 0..25 {
            let p = ranges.sample_point(&mut r);
            let fast = critical_path_delay(&net, &p, &c).unwrap();
            let slow = common::brute_force_critical_path(&net, &p, &c);
            assert_eq!(fast, slow, "{} at {p:?}", net.name());
        }
    }
}

#[test]
fn critical_path_matches_enumeration_with_learned_delays() {
    let c = OracleConstants::default();
    let data = generate_dataset(OracleKind::Gate(GateKind::NAND2), &SamplingRanges::default(), 120, 3, &c).unwrap();
    let provider = GbrtDelayProvider::fit(&data, GateKind::NAND2, &GbrtConfig { n_trees: 20, ..Default::default() }).unwrap();
    let net = Netlist::c17();
    let mut r = rng::stream(12, "points");
    for _ in 0..10 {
        let p = SamplingRanges::default().sample_point(&mut r);
        assert_eq!(
            critical_path_delay(&net, &p, &provider).unwrap(),
            common::brute_force_critical_path(&net, &p, &provider)
        );
    }
}

#[test]
fn gate_delays_are_monotone_on_the_lattice() {
    let checks = common::monotonicity_lattice(&OracleConstants::default()).unwrap();
    assert!(checks > 10_000);
}

#[test]
fn builtin_structure() {
    let c17 = Netlist::c17();
    assert_eq!(c17.gates().len(), 6);
    assert!(c17.gates().iter().all(|g| g.kind == GateKind::NAND2));

    let rca = Netlist::ripple_carry_adder4();
    assert_eq!(rca.gates().len(), 4);
    assert!(rca.gates().iter().all(|g| g.kind == GateKind::FA));
    // each carry-out feeds the next block's carry-in
    for pair in rca.gates().windows(2) {
        let co = pair[0].outputs[1].as_ref().expect("carry out is connected");
        assert!(pair[1].inputs.contains(co), "{} does not chain into {}", pair[0].name, pair[1].name);
    }
}

#[test]
fn netlist_file_round_trip() {
    let text = r#"
name = "chain"
primary_inputs = ["a"]
primary_outputs = ["y"]

[[gate]]
name = "g1"
kind = "NOT"

[[gate]]
name = "g2"
kind = "NOT"

[[net]]
name = "a"
sinks = ["g1.a"]

[[net]]
name = "m"
driver = "g1.y"
sinks = ["g2.a"]

[[net]]
name = "y"
driver = "g2.y"
"#;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.toml");
    std::fs::write(&path, text).unwrap();
    let net = Netlist::load(&path).unwrap();
    let c = OracleConstants::default();
    let p = circuit_augmentor::oracle::ProcessPoint::nominal();
    let one = c.gate_delay(GateKind::NOT, &p).unwrap().worst();
    assert_eq!(critical_path_delay(&net, &p, &c).unwrap(), one + one);
}
