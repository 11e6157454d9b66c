use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Corner, Dataset, Feature, FeatureSchema};
use crate::error::{Error, Result};
use crate::eval::Simulator;
use crate::linalg::Matrix;
use crate::oracle::{DeviceParams, GateKind, OracleConstants, ProcessPoint};
use crate::rng;

/// Closed sampling interval `[lo, hi]`; `lo == hi` pins the value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Span {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Span { lo, hi }
    }
}

impl From<Span> for [f64; 2] {
    fn from(s: Span) -> Self {
        [s.lo, s.hi]
    }
}

impl Span {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // always consume one draw so pinned spans do not shift later features
        let u: f64 = rng.gen();
        self.lo + u * (self.hi - self.lo)
    }

    fn validate(&self, name: &str, allowed: (f64, f64)) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi {
            return Err(Error::validation(format!("range `{name}` must satisfy lo <= hi")));
        }
        if self.lo < allowed.0 || self.hi > allowed.1 {
            return Err(Error::validation(format!(
                "range `{name}` [{}, {}] leaves the allowed interval [{}, {}]",
                self.lo, self.hi, allowed.0, allowed.1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRanges {
    pub w: Span,
    pub l: Span,
    pub tox: Span,
    pub dvth: Span,
    pub mu_scale: Span,
}

/// Per-feature uniform sampling intervals for oracle datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingRanges {
    pub vdd: Span,
    pub temp: Span,
    pub c_load: Span,
    pub slew_in: Span,
    pub nmos: DeviceRanges,
    pub pmos: DeviceRanges,
    /// Bias resistor of the current reference, ohms.
    pub r: Span,
    pub corners: Vec<Corner>,
}

impl Default for SamplingRanges {
    fn default() -> Self {
        Self {
            vdd: Span::new(1.62, 1.98),
            temp: Span::new(0.0, 100.0),
            c_load: Span::new(1.5e-15, 3.0e-15),
            slew_in: Span::new(10.0, 50.0),
            nmos: DeviceRanges {
                w: Span::new(0.33e-6, 0.39e-6),
                l: Span::new(0.18e-6, 0.20e-6),
                tox: Span::new(3.8e-9, 4.2e-9),
                dvth: Span::new(-0.02, 0.02),
                mu_scale: Span::new(0.95, 1.05),
            },
            pmos: DeviceRanges {
                w: Span::new(0.66e-6, 0.78e-6),
                l: Span::new(0.18e-6, 0.20e-6),
                tox: Span::new(3.8e-9, 4.2e-9),
                dvth: Span::new(-0.02, 0.02),
                mu_scale: Span::new(0.95, 1.05),
            },
            r: Span::new(50.0e3, 200.0e3),
            corners: Corner::ALL.to_vec(),
        }
    }
}

impl SamplingRanges {
    /// Every span pinned to the value of `p` (and resistor `r`).
    pub fn at_point(p: &ProcessPoint, r: f64) -> Self {
        let dev = |d: &DeviceParams| DeviceRanges {
            w: Span::point(d.w),
            l: Span::point(d.l),
            tox: Span::point(d.tox),
            dvth: Span::point(d.dvth),
            mu_scale: Span::point(d.mu_scale),
        };
        Self {
            vdd: Span::point(p.vdd),
            temp: Span::point(p.temp),
            c_load: Span::point(p.c_load),
            slew_in: Span::point(p.slew_in),
            nmos: dev(&p.nmos),
            pmos: dev(&p.pmos),
            r: Span::point(r),
            corners: vec![p.corner],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = (f64::MIN_POSITIVE, f64::MAX);
        self.vdd.validate("vdd", (0.5, 2.5))?;
        self.temp.validate("temp", (-40.0, 150.0))?;
        self.c_load.validate("c_load", pos)?;
        self.slew_in.validate("slew_in", (0.0, f64::MAX))?;
        self.r.validate("r", pos)?;
        for (name, d) in [("nmos", &self.nmos), ("pmos", &self.pmos)] {
            d.w.validate(&format!("{name}.w"), pos)?;
            d.l.validate(&format!("{name}.l"), pos)?;
            d.tox.validate(&format!("{name}.tox"), pos)?;
            d.dvth.validate(&format!("{name}.dvth"), (-1.0, 1.0))?;
            d.mu_scale.validate(&format!("{name}.mu_scale"), pos)?;
        }
        if self.corners.is_empty() {
            return Err(Error::validation("at least one process corner must be sampled"));
        }
        Ok(())
    }

    /// One uniformly sampled process point (corner uniform over `corners`).
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> ProcessPoint {
        let vdd = self.vdd.sample(rng);
        let temp = self.temp.sample(rng);
        let corner = self.corners[rng.gen_range(0..self.corners.len())];
        let c_load = self.c_load.sample(rng);
        let slew_in = self.slew_in.sample(rng);
        let mut dev = |d: &DeviceRanges| DeviceParams {
            w: d.w.sample(rng),
            l: d.l.sample(rng),
            tox: d.tox.sample(rng),
            dvth: d.dvth.sample(rng),
            mu_scale: d.mu_scale.sample(rng),
        };
        let nmos = dev(&self.nmos);
        let pmos = dev(&self.pmos);
        ProcessPoint {
            vdd,
            temp,
            corner,
            c_load,
            slew_in,
            nmos,
            pmos,
        }
    }
}

const GATE_INPUTS: [(&str, &str); 15] = [
    ("vdd", "V"),
    ("temp", "degC"),
    ("corner", ""),
    ("c_load", "F"),
    ("slew_in", "ps"),
    ("w_n", "m"),
    ("l_n", "m"),
    ("tox_n", "m"),
    ("dvth_n", "V"),
    ("mu_n", ""),
    ("w_p", "m"),
    ("l_p", "m"),
    ("tox_p", "m"),
    ("dvth_p", "V"),
    ("mu_p", ""),
];

/// Names of the 15 gate-dataset input features, in column order.
pub fn gate_input_names() -> Vec<&'static str> {
    GATE_INPUTS.iter().map(|&(n, _)| n).collect()
}

/// Schema of a gate-delay dataset: 15 process/operating inputs followed by
/// the gate's delay columns.
pub fn gate_schema(kind: GateKind) -> FeatureSchema {
    let mut features: Vec<Feature> = GATE_INPUTS
        .iter()
        .map(|&(n, u)| if n == "corner" { Feature::corner(n) } else { Feature::input(n, u) })
        .collect();
    features.extend(kind.delay_columns().iter().map(|c| Feature::output(c, "ps")));
    FeatureSchema::new(features).expect("gate schema is valid")
}

fn current_reference_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        Feature::input("vdd", "V"),
        Feature::input("temp", "degC"),
        Feature::corner("corner"),
        Feature::input("r", "ohm"),
        Feature::output("i_ref", "A"),
    ])
    .expect("current reference schema is valid")
}

impl ProcessPoint {
    /// Values in the order of the gate-schema input features.
    pub fn to_gate_features(&self) -> Vec<f64> {
        vec![
            self.vdd,
            self.temp,
            self.corner.code(),
            self.c_load,
            self.slew_in,
            self.nmos.w,
            self.nmos.l,
            self.nmos.tox,
            self.nmos.dvth,
            self.nmos.mu_scale,
            self.pmos.w,
            self.pmos.l,
            self.pmos.tox,
            self.pmos.dvth,
            self.pmos.mu_scale,
        ]
    }

    pub fn from_gate_features(v: &[f64]) -> Result<Self> {
        if v.len() != GATE_INPUTS.len() {
            return Err(Error::Dimension {
                context: "gate input features",
                expected: GATE_INPUTS.len(),
                got: v.len(),
            });
        }
        let dev = |o: usize| DeviceParams {
            w: v[o],
            l: v[o + 1],
            tox: v[o + 2],
            dvth: v[o + 3],
            mu_scale: v[o + 4],
        };
        Ok(Self {
            vdd: v[0],
            temp: v[1],
            corner: Corner::from_code(v[2]),
            c_load: v[3],
            slew_in: v[4],
            nmos: dev(5),
            pmos: dev(10),
        })
    }
}

/// What an oracle dataset describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OracleKind {
    Gate(GateKind),
    CurrentReference,
}

impl OracleKind {
    pub fn schema(self) -> FeatureSchema {
        match self {
            OracleKind::Gate(k) => gate_schema(k),
            OracleKind::CurrentReference => current_reference_schema(),
        }
    }

    pub fn name(self) -> String {
        match self {
            OracleKind::Gate(k) => k.name().to_string(),
            OracleKind::CurrentReference => "current_reference".into(),
        }
    }
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "current_reference" | "current-reference" | "iref" => Ok(OracleKind::CurrentReference),
            _ => s.parse::<GateKind>().map(OracleKind::Gate),
        }
    }
}

/// Evaluates one oracle row: simulator inputs in schema order in, outputs
/// out. `None` means the point lies outside the operating region.
fn simulate_row(kind: OracleKind, constants: &OracleConstants, inputs: &[f64]) -> Result<Vec<f64>> {
    match kind {
        OracleKind::Gate(g) => {
            let p = ProcessPoint::from_gate_features(inputs)?;
            Ok(constants.gate_delay(g, &p)?.to_columns())
        }
        OracleKind::CurrentReference => {
            if inputs.len() != 4 {
                return Err(Error::Dimension {
                    context: "current reference inputs",
                    expected: 4,
                    got: inputs.len(),
                });
            }
            let p = ProcessPoint {
                vdd: inputs[0],
                temp: inputs[1],
                corner: Corner::from_code(inputs[2]),
                ..ProcessPoint::nominal()
            };
            Ok(vec![constants.current_reference(&p, inputs[3])?])
        }
    }
}

/// Samples `n` rows uniformly from `ranges` and labels them with the oracle.
pub fn generate_dataset(
    kind: OracleKind,
    ranges: &SamplingRanges,
    n: usize,
    seed: u64,
    constants: &OracleConstants,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::validation("dataset size must be >= 1"));
    }
    ranges.validate()?;
    let schema = kind.schema();
    let mut rng = rng::stream(seed, "data");
    let mut data = Vec::with_capacity(n * schema.len());
    for _ in 0..n {
        let p = ranges.sample_point(&mut rng);
        let r = ranges.r.sample(&mut rng);
        let inputs = match kind {
            OracleKind::Gate(_) => p.to_gate_features(),
            OracleKind::CurrentReference => vec![p.vdd, p.temp, p.corner.code(), r],
        };
        let outputs = simulate_row(kind, constants, &inputs).map_err(|e| match e {
            Error::OperatingRegion(msg) => {
                Error::validation(format!("sampling ranges reach outside the operating region: {msg}"))
            }
            other => other,
        })?;
        data.extend(inputs);
        data.extend(outputs);
    }
    Dataset::new(schema.clone(), Matrix::new(n, schema.len(), data)?)
}

/// The analytic oracle behind the [`Simulator`] interface used by the
/// evaluation battery.
#[derive(Debug, Clone)]
pub struct OracleSimulator {
    pub kind: OracleKind,
    pub constants: OracleConstants,
    schema: FeatureSchema,
}

impl OracleSimulator {
    pub fn new(kind: OracleKind, constants: OracleConstants) -> Self {
        Self {
            kind,
            constants,
            schema: kind.schema(),
        }
    }
}

impl Simulator for OracleSimulator {
    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn simulate(&self, inputs: &[f64]) -> Result<Option<Vec<f64>>> {
        match simulate_row(self.kind, &self.constants, inputs) {
            Ok(v) => Ok(Some(v)),
            Err(Error::OperatingRegion(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_feature_counts() {
        // 17 for the inverter, 19 / 21 / 23 for two-, three-, four-input blocks
        let expected = [
            (GateKind::NOT, 17),
            (GateKind::NAND2, 19),
            (GateKind::AND2, 19),
            (GateKind::NOR2, 19),
            (GateKind::OR2, 19),
            (GateKind::XOR2, 19),
            (GateKind::AO12, 21),
            (GateKind::FA, 21),
            (GateKind::MUX2, 21),
            (GateKind::NAND3, 21),
            (GateKind::AND3, 21),
            (GateKind::NOR3, 21),
            (GateKind::AO22, 23),
            (GateKind::AO31, 23),
        ];
        for (kind, n) in expected {
            assert_eq!(gate_schema(kind).len(), n, "{kind}");
        }
    }

    #[test]
    fn nand2_dataset_shape_and_determinism() {
        let c = OracleConstants::default();
        let r = SamplingRanges::default();
        let a = generate_dataset(OracleKind::Gate(GateKind::NAND2), &r, 1000, 3, &c).unwrap();
        assert_eq!(a.rows().shape(), (1000, 19));
        let b = generate_dataset(OracleKind::Gate(GateKind::NAND2), &r, 1000, 3, &c).unwrap();
        assert_eq!(a, b);
        let other = generate_dataset(OracleKind::Gate(GateKind::NAND2), &r, 1000, 4, &c).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn pinned_ranges_reproduce_single_oracle_row() {
        let c = OracleConstants::default();
        let p = ProcessPoint::nominal();
        let ranges = SamplingRanges::at_point(&p, 1e5);
        let ds = generate_dataset(OracleKind::Gate(GateKind::NAND2), &ranges, 1, 9, &c).unwrap();
        let mut expected = p.to_gate_features();
        expected.extend(c.gate_delay(GateKind::NAND2, &p).unwrap().to_columns());
        assert_eq!(ds.rows().row(0), expected.as_slice());

        let ds = generate_dataset(OracleKind::CurrentReference, &ranges, 1, 9, &c).unwrap();
        let i = c.current_reference(&p, 1e5).unwrap();
        assert_eq!(ds.rows().row(0), &[1.8, 27.0, 0.0, 1e5, i]);
    }

    #[test]
    fn invalid_ranges_rejected() {
        let c = OracleConstants::default();
        let mut r = SamplingRanges::default();
        r.vdd = Span::new(2.0, 1.0);
        assert!(generate_dataset(OracleKind::CurrentReference, &r, 5, 1, &c).is_err());
        let mut r = SamplingRanges::default();
        r.vdd = Span::new(0.5, 0.6);
        assert!(generate_dataset(OracleKind::Gate(GateKind::NOT), &r, 50, 1, &c).is_err());
        assert!(generate_dataset(OracleKind::CurrentReference, &SamplingRanges::default(), 0, 1, &c).is_err());
    }

    #[test]
    fn simulator_rejects_out_of_region_rows() {
        let sim = OracleSimulator::new(OracleKind::Gate(GateKind::NOT), OracleConstants::default());
        let mut f = ProcessPoint::nominal().to_gate_features();
        assert!(sim.simulate(&f).unwrap().is_some());
        f[0] = 0.3;
        assert!(sim.simulate(&f).unwrap().is_none());
    }
}
