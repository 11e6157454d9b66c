use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::oracle::{DelayProvider, GateKind, ProcessPoint};

const C17_TOML: &str = include_str!("../../data/netlists/c17.toml");
const RCA4_TOML: &str = include_str!("../../data/netlists/rca4.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetlist {
    name: String,
    primary_inputs: Vec<String>,
    primary_outputs: Vec<String>,
    #[serde(default)]
    gate: Vec<RawGate>,
    #[serde(default)]
    net: Vec<RawNet>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGate {
    name: String,
    kind: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNet {
    name: String,
    driver: Option<String>,
    #[serde(default)]
    sinks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateInstance {
    pub name: String,
    pub kind: GateKind,
    /// Net driving each input pin, in pin order.
    pub inputs: Vec<String>,
    /// Net driven by each output pin; `None` when the pin is left open.
    pub outputs: Vec<Option<String>>,
}

/// Validated combinational gate netlist (acyclic, every gate input driven
/// exactly once).
#[derive(Debug, Clone, PartialEq)]
pub struct Netlist {
    name: String,
    primary_inputs: Vec<String>,
    primary_outputs: Vec<String>,
    gates: Vec<GateInstance>,
    /// net -> (gate index, output pin index)
    drivers: HashMap<String, (usize, usize)>,
    topo: Vec<usize>,
}

fn split_pin(s: &str) -> Result<(&str, &str)> {
    s.split_once('.')
        .ok_or_else(|| Error::validation(format!("pin reference `{s}` must look like `gate.pin`")))
}

impl Netlist {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawNetlist = toml::from_str(text).map_err(|e| Error::Parse {
            path: "netlist".into(),
            detail: e.to_string(),
        })?;
        Self::build(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { detail, .. } => Error::Parse {
                path: path.to_path_buf(),
                detail,
            },
            other => other,
        })
    }

    /// ISCAS-85 C17.
    pub fn c17() -> Self {
        Self::from_toml(C17_TOML).expect("built-in C17 netlist is valid")
    }

    /// Four-bit ripple-carry adder built from full-adder blocks.
    pub fn ripple_carry_adder4() -> Self {
        Self::from_toml(RCA4_TOML).expect("built-in adder netlist is valid")
    }

    /// Built-in netlist by name (`c17`, `rca4`).
    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "c17" => Some(Self::c17()),
            "rca4" | "ripple_carry_adder4" => Some(Self::ripple_carry_adder4()),
            _ => None,
        }
    }

    fn build(raw: RawNetlist) -> Result<Self> {
        let mut gate_index = HashMap::new();
        let mut gates = Vec::with_capacity(raw.gate.len());
        for g in &raw.gate {
            let kind: GateKind = g.kind.parse()?;
            if gate_index.insert(g.name.clone(), gates.len()).is_some() {
                return Err(Error::validation(format!("duplicate gate `{}`", g.name)));
            }
            gates.push(GateInstance {
                name: g.name.clone(),
                kind,
                inputs: vec![String::new(); kind.input_count()],
                outputs: vec![None; kind.output_pins().len()],
            });
        }

        let primary: HashSet<&str> = raw.primary_inputs.iter().map(String::as_str).collect();
        if primary.len() != raw.primary_inputs.len() {
            return Err(Error::validation("duplicate primary input"));
        }
        let mut drivers = HashMap::new();
        let mut seen_nets = HashSet::new();
        for net in &raw.net {
            if !seen_nets.insert(net.name.as_str()) {
                return Err(Error::validation(format!("duplicate net `{}`", net.name)));
            }
            match &net.driver {
                Some(d) => {
                    if primary.contains(net.name.as_str()) {
                        return Err(Error::validation(format!(
                            "primary input `{}` cannot also have a driver",
                            net.name
                        )));
                    }
                    let (g, pin) = split_pin(d)?;
                    let gi = *gate_index
                        .get(g)
                        .ok_or_else(|| Error::validation(format!("net `{}` driven by unknown gate `{g}`", net.name)))?;
                    let kind = gates[gi].kind;
                    let pi = kind
                        .output_pins()
                        .iter()
                        .position(|p| p == pin)
                        .ok_or_else(|| Error::validation(format!("{kind} has no output pin `{pin}`")))?;
                    if gates[gi].outputs[pi].is_some() {
                        return Err(Error::validation(format!("output pin `{d}` drives two nets")));
                    }
                    gates[gi].outputs[pi] = Some(net.name.clone());
                    drivers.insert(net.name.clone(), (gi, pi));
                }
                None => {
                    if !primary.contains(net.name.as_str()) {
                        return Err(Error::validation(format!(
                            "net `{}` has no driver and is not a primary input",
                            net.name
                        )));
                    }
                }
            }
            for sink in &net.sinks {
                let (g, pin) = split_pin(sink)?;
                let gi = *gate_index
                    .get(g)
                    .ok_or_else(|| Error::validation(format!("net `{}` feeds unknown gate `{g}`", net.name)))?;
                let kind = gates[gi].kind;
                let pi = kind
                    .input_pins()
                    .iter()
                    .position(|p| p == pin)
                    .ok_or_else(|| Error::validation(format!("{kind} has no input pin `{pin}`")))?;
                if !gates[gi].inputs[pi].is_empty() {
                    return Err(Error::validation(format!("input pin `{sink}` is driven more than once")));
                }
                gates[gi].inputs[pi] = net.name.clone();
            }
        }
        for g in &gates {
            for (pin, net) in g.kind.input_pins().iter().zip(&g.inputs) {
                if net.is_empty() {
                    return Err(Error::validation(format!("input pin `{}.{pin}` is not driven", g.name)));
                }
            }
        }
        for out in &raw.primary_outputs {
            if !drivers.contains_key(out) && !primary.contains(out.as_str()) {
                return Err(Error::validation(format!("primary output `{out}` is not driven")));
            }
        }

        let topo = topological_order(&gates, &drivers)?;
        Ok(Self {
            name: raw.name,
            primary_inputs: raw.primary_inputs,
            primary_outputs: raw.primary_outputs,
            gates,
            drivers,
            topo,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn gates(&self) -> &[GateInstance] {
        &self.gates
    }

    pub fn primary_inputs(&self) -> &[String] {
        &self.primary_inputs
    }

    pub fn primary_outputs(&self) -> &[String] {
        &self.primary_outputs
    }

    /// Gate index driving `net`, if any.
    pub fn driver_of(&self, net: &str) -> Option<usize> {
        self.drivers.get(net).map(|&(g, _)| g)
    }

    /// Gate indices in a topological order.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// Count of gates per kind.
    pub fn kind_counts(&self) -> BTreeMap<GateKind, usize> {
        let mut m = BTreeMap::new();
        for g in &self.gates {
            *m.entry(g.kind).or_insert(0) += 1;
        }
        m
    }
}

fn topological_order(gates: &[GateInstance], drivers: &HashMap<String, (usize, usize)>) -> Result<Vec<usize>> {
    let mut indegree = vec![0usize; gates.len()];
    let mut fanout: Vec<Vec<usize>> = vec![Vec::new(); gates.len()];
    for (gi, g) in gates.iter().enumerate() {
        for net in &g.inputs {
            if let Some(&(src, _)) = drivers.get(net) {
                indegree[gi] += 1;
                fanout[src].push(gi);
            }
        }
    }
    let mut ready: Vec<usize> = (0..gates.len()).filter(|&g| indegree[g] == 0).rev().collect();
    let mut order = Vec::with_capacity(gates.len());
    while let Some(g) = ready.pop() {
        order.push(g);
        for &next in &fanout[g] {
            indegree[next] -= 1;
            if indegree[next] == 0 {
                ready.push(next);
            }
        }
    }
    if order.len() != gates.len() {
        return Err(Error::validation("netlist contains a combinational cycle"));
    }
    Ok(order)
}

/// Longest input-to-output delay in picoseconds, charging each gate its
/// worst pin/edge delay from `provider` at the shared `point`.
pub fn critical_path_delay(net: &Netlist, point: &ProcessPoint, provider: &dyn DelayProvider) -> Result<f64> {
    let mut worst_by_kind: HashMap<GateKind, f64> = HashMap::new();
    let mut arrival: HashMap<&str, f64> = net.primary_inputs.iter().map(|n| (n.as_str(), 0.0)).collect();
    for &gi in &net.topo {
        let g = &net.gates[gi];
        let d = match worst_by_kind.get(&g.kind) {
            Some(&d) => d,
            None => {
                let d = provider.delays(g.kind, point)?.worst();
                worst_by_kind.insert(g.kind, d);
                d
            }
        };
        let t_in = g
            .inputs
            .iter()
            .map(|n| arrival.get(n.as_str()).copied().unwrap_or(0.0))
            .fold(0.0, f64::max);
        for out in g.outputs.iter().flatten() {
            arrival.insert(out.as_str(), t_in + d);
        }
    }
    Ok(net
        .primary_outputs
        .iter()
        .map(|o| arrival.get(o.as_str()).copied().unwrap_or(0.0))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{DelayResult, OracleConstants, PinDelay};

    struct Fixed(f64);

    impl DelayProvider for Fixed {
        fn delays(&self, kind: GateKind, _: &ProcessPoint) -> Result<DelayResult> {
            Ok(DelayResult {
                pins: kind
                    .input_pins()
                    .into_iter()
                    .map(|pin| PinDelay { pin, lh: self.0, hl: self.0 / 2.0 })
                    .collect(),
            })
        }
    }

    #[test]
    fn c17_structure() {
        let n = Netlist::c17();
        assert_eq!(n.gates().len(), 6);
        assert_eq!(n.kind_counts()[&GateKind::NAND2], 6);
        // three NAND levels on the longest path
        assert_eq!(critical_path_delay(&n, &ProcessPoint::nominal(), &Fixed(1.0)).unwrap(), 3.0);
    }

    #[test]
    fn adder_structure() {
        let n = Netlist::ripple_carry_adder4();
        assert_eq!(n.kind_counts()[&GateKind::FA], 4);
        assert_eq!(n.gates().len(), 4);
        for i in 1..4 {
            let carry_in = &n.gates()[i].inputs[2];
            assert_eq!(n.driver_of(carry_in), Some(i - 1));
        }
        assert_eq!(critical_path_delay(&n, &ProcessPoint::nominal(), &Fixed(2.5)).unwrap(), 10.0);
    }

    #[test]
    fn single_gate_and_inverter_chain() {
        let single = Netlist::from_toml(
            r#"
            name = "one"
            primary_inputs = ["a", "b"]
            primary_outputs = ["y"]
            [[gate]]
            name = "g"
            kind = "NAND2"
            [[net]]
            name = "a"
            sinks = ["g.a"]
            [[net]]
            name = "b"
            sinks = ["g.b"]
            [[net]]
            name = "y"
            driver = "g.y"
            "#,
        )
        .unwrap();
        let c = OracleConstants::default();
        let p = ProcessPoint::nominal();
        let expected = c.gate_delay(GateKind::NAND2, &p).unwrap().worst();
        assert_eq!(critical_path_delay(&single, &p, &c).unwrap(), expected);

        let chain = Netlist::from_toml(
            r#"
            name = "chain"
            primary_inputs = ["a"]
            primary_outputs = ["z"]
            [[gate]]
            name = "i1"
            kind = "NOT"
            [[gate]]
            name = "i2"
            kind = "NOT"
            [[net]]
            name = "a"
            sinks = ["i1.a"]
            [[net]]
            name = "m"
            driver = "i1.y"
            sinks = ["i2.a"]
            [[net]]
            name = "z"
            driver = "i2.y"
            "#,
        )
        .unwrap();
        let inv = c.gate_delay(GateKind::NOT, &p).unwrap().worst();
        assert_eq!(critical_path_delay(&chain, &p, &c).unwrap(), inv + inv);
    }

    #[test]
    fn cycles_and_bad_wiring_rejected() {
        let cyclic = r#"
            name = "loop"
            primary_inputs = []
            primary_outputs = ["x"]
            [[gate]]
            name = "i1"
            kind = "NOT"
            [[gate]]
            name = "i2"
            kind = "NOT"
            [[net]]
            name = "x"
            driver = "i1.y"
            sinks = ["i2.a"]
            [[net]]
            name = "w"
            driver = "i2.y"
            sinks = ["i1.a"]
        "#;
        let err = Netlist::from_toml(cyclic).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");

        let double = r#"
            name = "double"
            primary_inputs = ["a", "b"]
            primary_outputs = ["y"]
            [[gate]]
            name = "g"
            kind = "NOT"
            [[net]]
            name = "a"
            sinks = ["g.a"]
            [[net]]
            name = "b"
            sinks = ["g.a"]
            [[net]]
            name = "y"
            driver = "g.y"
        "#;
        assert!(Netlist::from_toml(double).is_err());

        let floating = r#"
            name = "floating"
            primary_inputs = []
            primary_outputs = ["y"]
            [[gate]]
            name = "g"
            kind = "NOT"
            [[net]]
            name = "y"
            driver = "g.y"
        "#;
        assert!(Netlist::from_toml(floating).is_err());
    }
}
