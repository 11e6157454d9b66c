//! Analytic circuit oracles: an alpha-power-law gate-delay surrogate for
//! the fourteen digital blocks, a toy current reference, seeded dataset
//! generation and critical-path composition over gate netlists.

mod dataset;
mod netlist;

pub use dataset::{
    gate_input_names, gate_schema, generate_dataset, DeviceRanges, OracleKind, OracleSimulator, SamplingRanges, Span,
};
pub use netlist::{critical_path_delay, GateInstance, Netlist};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::Corner;
use crate::error::{Error, Result};

pub const DEFAULT_CONSTANTS_TOML: &str = include_str!("../../data/oracle_constants.toml");

/// The digital blocks with delay datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    NOT,
    NAND2,
    AND2,
    NOR2,
    OR2,
    XOR2,
    AO12,
    FA,
    MUX2,
    NAND3,
    AND3,
    NOR3,
    AO22,
    AO31,
}

impl GateKind {
    pub const ALL: [GateKind; 14] = [
        GateKind::NOT,
        GateKind::NAND2,
        GateKind::AND2,
        GateKind::NOR2,
        GateKind::OR2,
        GateKind::XOR2,
        GateKind::AO12,
        GateKind::FA,
        GateKind::MUX2,
        GateKind::NAND3,
        GateKind::AND3,
        GateKind::NOR3,
        GateKind::AO22,
        GateKind::AO31,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::NOT => "NOT",
            GateKind::NAND2 => "NAND2",
            GateKind::AND2 => "AND2",
            GateKind::NOR2 => "NOR2",
            GateKind::OR2 => "OR2",
            GateKind::XOR2 => "XOR2",
            GateKind::AO12 => "AO12",
            GateKind::FA => "FA",
            GateKind::MUX2 => "MUX2",
            GateKind::NAND3 => "NAND3",
            GateKind::AND3 => "AND3",
            GateKind::NOR3 => "NOR3",
            GateKind::AO22 => "AO22",
            GateKind::AO31 => "AO31",
        }
    }

    pub fn input_count(self) -> usize {
        match self {
            GateKind::NOT => 1,
            GateKind::NAND2 | GateKind::AND2 | GateKind::NOR2 | GateKind::OR2 | GateKind::XOR2 => 2,
            GateKind::AO12
            | GateKind::FA
            | GateKind::MUX2
            | GateKind::NAND3
            | GateKind::AND3
            | GateKind::NOR3 => 3,
            GateKind::AO22 | GateKind::AO31 => 4,
        }
    }

    /// Input pin names: `a`, `b`, `c`, `d`.
    pub fn input_pins(self) -> Vec<String> {
        (0..self.input_count()).map(|i| ((b'a' + i as u8) as char).to_string()).collect()
    }

    /// Output pin names. The full adder drives a sum and a carry.
    pub fn output_pins(self) -> Vec<String> {
        match self {
            GateKind::FA => vec!["s".into(), "co".into()],
            _ => vec!["y".into()],
        }
    }

    /// Delay output column names, `delay_lh_<pin>` then `delay_hl_<pin>`
    /// per input pin.
    pub fn delay_columns(self) -> Vec<String> {
        self.input_pins()
            .iter()
            .flat_map(|p| [format!("delay_lh_{p}"), format!("delay_hl_{p}")])
            .collect()
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let alias = match upper.as_str() {
            "INV" => "NOT",
            "FULL_ADDER" | "FULLADDER" => "FA",
            "MUX" | "MUX21" => "MUX2",
            other => other,
        };
        GateKind::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| Error::validation(format!("unknown gate kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Width in meters.
    pub w: f64,
    /// Length in meters.
    pub l: f64,
    /// Oxide thickness in meters.
    pub tox: f64,
    /// Threshold-voltage shift in volts.
    pub dvth: f64,
    /// Mobility multiplier.
    pub mu_scale: f64,
}

/// One set of operating and process conditions shared by every gate of an
/// evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessPoint {
    /// Supply in volts.
    pub vdd: f64,
    /// Temperature in °C.
    pub temp: f64,
    pub corner: Corner,
    /// Load capacitance in farads.
    pub c_load: f64,
    /// Input transition time in picoseconds.
    pub slew_in: f64,
    pub nmos: DeviceParams,
    pub pmos: DeviceParams,
}

impl ProcessPoint {
    /// 1.8 V, 27 °C, TT, 2 fF, 30 ps input slew, 0.36/0.18 µm NMOS and
    /// 0.72/0.18 µm PMOS at the reference oxide thickness.
    pub fn nominal() -> Self {
        Self {
            vdd: 1.8,
            temp: 27.0,
            corner: Corner::TT,
            c_load: 2.0e-15,
            slew_in: 30.0,
            nmos: DeviceParams {
                w: 0.36e-6,
                l: 0.18e-6,
                tox: 4.0e-9,
                dvth: 0.0,
                mu_scale: 1.0,
            },
            pmos: DeviceParams {
                w: 0.72e-6,
                l: 0.18e-6,
                tox: 4.0e-9,
                dvth: 0.0,
                mu_scale: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Device {
    Nmos,
    Pmos,
}

/// Per-pin propagation delays in picoseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinDelay {
    pub pin: String,
    pub lh: f64,
    pub hl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayResult {
    pub pins: Vec<PinDelay>,
}

impl DelayResult {
    /// Worst delay over every pin and edge.
    pub fn worst(&self) -> f64 {
        self.pins.iter().flat_map(|p| [p.lh, p.hl]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Values in [`GateKind::delay_columns`] order.
    pub fn to_columns(&self) -> Vec<f64> {
        self.pins.iter().flat_map(|p| [p.lh, p.hl]).collect()
    }

    pub fn from_columns(kind: GateKind, values: &[f64]) -> Result<Self> {
        if values.len() != 2 * kind.input_count() {
            return Err(Error::Dimension {
                context: "delay columns",
                expected: 2 * kind.input_count(),
                got: values.len(),
            });
        }
        Ok(Self {
            pins: kind
                .input_pins()
                .into_iter()
                .zip(values.chunks(2))
                .map(|(pin, v)| PinDelay { pin, lh: v[0], hl: v[1] })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateCoefficients {
    pub drive_ps: f64,
    pub rise: Vec<f64>,
    pub fall: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceTable<T> {
    pub nmos: T,
    pub pmos: T,
}

/// Versioned constants table for every analytic oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConstants {
    pub version: u32,
    pub alpha: f64,
    pub t_ref_k: f64,
    pub mobility_exponent: f64,
    /// Threshold temperature coefficient, V/°C.
    pub kt: f64,
    pub t_nom: f64,
    pub tox_ref: f64,
    pub c_ref: f64,
    pub slew_coeff: f64,
    pub vdd_nom: f64,
    pub lambda: f64,
    pub mu0: DeviceTable<f64>,
    pub vth0: DeviceTable<BTreeMap<Corner, f64>>,
    pub gates: BTreeMap<GateKind, GateCoefficients>,
}

impl Default for OracleConstants {
    fn default() -> Self {
        Self::from_toml(DEFAULT_CONSTANTS_TOML).expect("shipped constants table is valid")
    }
}

impl OracleConstants {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: OracleConstants = toml::from_str(text).map_err(|e| Error::Parse {
            path: "oracle constants".into(),
            detail: e.to_string(),
        })?;
        c.validate()?;
        Ok(c)
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

    fn validate(&self) -> Result<()> {
        for kind in GateKind::ALL {
            let g = self
                .gates
                .get(&kind)
                .ok_or_else(|| Error::validation(format!("constants table lacks gate {kind}")))?;
            if g.rise.len() != kind.input_count() || g.fall.len() != kind.input_count() {
                return Err(Error::validation(format!("gate {kind} needs one rise/fall factor per input")));
            }
            if g.drive_ps <= 0.0 || g.rise.iter().chain(&g.fall).any(|&k| k <= 0.0) {
                return Err(Error::validation(format!("gate {kind} coefficients must be positive")));
            }
        }
        for c in Corner::ALL {
            if !self.vth0.nmos.contains_key(&c) || !self.vth0.pmos.contains_key(&c) {
                return Err(Error::validation(format!("constants table lacks vth0 for corner {c}")));
            }
        }
        if self.alpha <= 0.0 || self.tox_ref <= 0.0 || self.c_ref <= 0.0 || self.t_ref_k <= 0.0 {
            return Err(Error::validation("constants table has non-positive scale constants"));
        }
        Ok(())
    }

    /// Carrier mobility at `temp` °C (relative units).
    pub fn mobility(&self, device: Device, temp: f64) -> f64 {
        let mu0 = match device {
            Device::Nmos => self.mu0.nmos,
            Device::Pmos => self.mu0.pmos,
        };
        mu0 * ((temp + 273.15) / self.t_ref_k).powf(self.mobility_exponent)
    }

    /// Corner- and temperature-dependent threshold, before any per-device shift.
    pub fn vth(&self, device: Device, corner: Corner, temp: f64) -> f64 {
        let table = match device {
            Device::Nmos => &self.vth0.nmos,
            Device::Pmos => &self.vth0.pmos,
        };
        table[&corner] - self.kt * (temp - self.t_nom)
    }

    fn effective_vth(&self, device: Device, p: &ProcessPoint) -> f64 {
        let dev = match device {
            Device::Nmos => &p.nmos,
            Device::Pmos => &p.pmos,
        };
        self.vth(device, p.corner, p.temp) + dev.dvth
    }

    /// Checks the ranges every oracle formula relies on.
    pub fn check_region(&self, p: &ProcessPoint) -> Result<()> {
        let fail = |msg: String| Err(Error::OperatingRegion(msg));
        if !(0.5..=2.5).contains(&p.vdd) {
            return fail(format!("vdd {} V outside [0.5, 2.5]", p.vdd));
        }
        if !(-40.0..=150.0).contains(&p.temp) {
            return fail(format!("temperature {} °C outside [-40, 150]", p.temp));
        }
        if !(p.c_load > 0.0) || !(p.slew_in >= 0.0) {
            return fail("c_load must be > 0 and slew_in >= 0".into());
        }
        for (name, d) in [("nmos", &p.nmos), ("pmos", &p.pmos)] {
            if !(d.w > 0.0 && d.l > 0.0 && d.tox > 0.0 && d.mu_scale > 0.0) || !d.dvth.is_finite() {
                return fail(format!("{name} geometry must be positive"));
            }
        }
        for device in [Device::Nmos, Device::Pmos] {
            let vth = self.effective_vth(device, p);
            if p.vdd <= vth {
                return fail(format!("vdd {} V does not exceed {:?} threshold {vth:.4} V", p.vdd, device));
            }
        }
        Ok(())
    }

    /// Drive-strength denominator of the alpha-power delay law for one
    /// device network.
    fn drive(&self, device: Device, p: &ProcessPoint) -> f64 {
        let dev = match device {
            Device::Nmos => &p.nmos,
            Device::Pmos => &p.pmos,
        };
        let overdrive = p.vdd - self.effective_vth(device, p);
        self.mobility(device, p.temp)
            * dev.mu_scale
            * (dev.w / dev.l)
            * (self.tox_ref / dev.tox)
            * overdrive.powf(self.alpha)
    }

    pub fn gate_delay(&self, kind: GateKind, p: &ProcessPoint) -> Result<DelayResult> {
        self.check_region(p)?;
        let coeff = &self.gates[&kind];
        let common = coeff.drive_ps * (p.c_load / self.c_ref) * p.vdd * (1.0 + self.slew_coeff * p.slew_in);
        let rise = common / self.drive(Device::Pmos, p);
        let fall = common / self.drive(Device::Nmos, p);
        let pins = kind
            .input_pins()
            .into_iter()
            .enumerate()
            .map(|(i, pin)| PinDelay {
                pin,
                lh: rise * coeff.rise[i],
                hl: fall * coeff.fall[i],
            })
            .collect();
        Ok(DelayResult { pins })
    }

    /// Output current in amperes of the toy current reference with bias
    /// resistor `r` ohms.
    pub fn current_reference(&self, p: &ProcessPoint, r: f64) -> Result<f64> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::validation(format!("resistance must be > 0, got {r}")));
        }
        self.check_region(p)?;
        let vth = self.vth(Device::Nmos, p.corner, p.temp);
        Ok((p.vdd - vth) / r * (1.0 + self.lambda * (p.vdd - self.vdd_nom)))
    }
}

/// Anything that can produce per-gate delays at a process point: the
/// analytic oracle, or a learned model standing in for it.
pub trait DelayProvider {
    fn delays(&self, kind: GateKind, point: &ProcessPoint) -> Result<DelayResult>;
}

impl DelayProvider for OracleConstants {
    fn delays(&self, kind: GateKind, point: &ProcessPoint) -> Result<DelayResult> {
        self.gate_delay(kind, point)
    }
}

/// Free-function form of [`OracleConstants::gate_delay`] with the shipped table.
pub fn gate_delay(kind: GateKind, p: &ProcessPoint) -> Result<DelayResult> {
    OracleConstants::default().gate_delay(kind, p)
}
