//! Stack description files (TOML): media, layers, exteriors and the sweep.
//!
//! Physical quantities are strings carrying a unit suffix, for example
//! `"2.5 nm"` or `"120 meV"`. The suffix `u` denotes the natural units of
//! the solver (`ħ²/2m₀ = 1` with the length unit of the `[units]` table).
//! Physical suffixes (`nm`, `A`, `eV`, `meV`, `1/nm`, `1/A`) require a
//! `[units]` table fixing that length unit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AtmError, Result};
use crate::linalg::{CMat, C64};
use crate::models::ModelPreset;
use crate::sl_system::{CoefficientSet, Coefficients};
use crate::stack::{Layer, LayerStack};

/// `ħ²/(2m₀)` in eV·nm².
pub const HBAR2_OVER_2M0_EV_NM2: f64 = 0.0380998212;

/// Environment variable overriding the default eta (natural units).
pub const DEFAULT_ETA_ENV: &str = "ATM_DEFAULT_ETA";

/// Eta used when a sweep does not specify one.
pub fn default_eta() -> Result<f64> {
    match std::env::var(DEFAULT_ETA_ENV) {
        Ok(v) => {
            let eta: f64 = v
                .trim()
                .parse()
                .map_err(|_| AtmError::invalid(DEFAULT_ETA_ENV, format!("not a number: {v:?}")))?;
            if !(eta >= 0.0) || !eta.is_finite() {
                return Err(AtmError::invalid(DEFAULT_ETA_ENV, format!("must be non-negative, got {eta}")));
            }
            Ok(eta)
        }
        Err(_) => Ok(1e-6),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Energy,
    Wavevector,
}

/// Conversion from physical units to the natural units of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Units {
    /// Natural length unit in nm, when physical units are in use.
    pub length_nm: Option<f64>,
}

impl Units {
    /// Natural energy unit `ħ²/(2m₀L²)` in eV.
    pub fn energy_ev(&self) -> Option<f64> {
        self.length_nm.map(|l| HBAR2_OVER_2M0_EV_NM2 / (l * l))
    }

    /// Parse `"<number> <unit>"` into natural units.
    pub fn quantity(&self, text: &str, dim: Dimension, field: &str) -> Result<f64> {
        let t = text.trim();
        let split = t
            .char_indices()
            .find(|&(i, ch)| {
                !(ch.is_ascii_digit()
                    || ch == '.'
                    || ((ch == '-' || ch == '+') && (i == 0 || matches!(t.as_bytes()[i - 1], b'e' | b'E')))
                    || ((ch == 'e' || ch == 'E') && i > 0 && t[i + 1..].starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+')))
            })
            .map(|(i, _)| i)
            .unwrap_or(t.len());
        let (num, unit) = t.split_at(split);
        let value: f64 = num
            .parse()
            .map_err(|_| AtmError::invalid(field, format!("expected `<number> <unit>`, got {text:?}")))?;
        let unit = unit.trim();
        if unit.is_empty() {
            return Err(AtmError::invalid(field, format!("missing unit in {text:?}")));
        }
        let physical = |scale_nm: f64| -> Result<f64> {
            let l = self.length_nm.ok_or_else(|| {
                AtmError::invalid(field, format!("unit `{unit}` needs a [units] table with a length unit"))
            })?;
            Ok(scale_nm / l)
        };
        let factor = match (dim, unit) {
            (_, "u") | (Dimension::Wavevector, "1/u") => 1.0,
            (Dimension::Length, "nm") => physical(1.0)?,
            (Dimension::Length, "A") => physical(0.1)?,
            (Dimension::Wavevector, "1/nm") => 1.0 / physical(1.0)?,
            (Dimension::Wavevector, "1/A") => 1.0 / physical(0.1)?,
            (Dimension::Energy, "eV") | (Dimension::Energy, "meV") => {
                physical(1.0)?;
                let scale = if unit == "eV" { 1.0 } else { 1e-3 };
                scale / self.energy_ev().expect("length unit present")
            }
            _ => return Err(AtmError::invalid(field, format!("unit `{unit}` is not a {dim:?} unit"))),
        };
        let v = value * factor;
        if !v.is_finite() {
            return Err(AtmError::invalid(field, "value is not finite"));
        }
        Ok(v)
    }
}

/// Complex matrix written as rows of `[re, im]` pairs.
pub type RawMatrix = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawUnits {
    /// Natural length unit, e.g. `"1 nm"`.
    pub length: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RawMedium {
    FreeParticle {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mass_scale: Option<f64>,
    },
    BendanielDuke {
        /// Effective mass in units of the free-electron mass.
        mass: f64,
        potential: String,
    },
    TwoBand {
        gap: String,
        coupling: String,
    },
    /// Explicit constant matrices in natural units,
    /// `W = w0 + Ω·w_omega + |κ|²·w_kappa2`.
    Matrix {
        b: RawMatrix,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<RawMatrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y: Option<RawMatrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        w0: Option<RawMatrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        w_omega: Option<RawMatrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        w_kappa2: Option<RawMatrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hermitean: Option<bool>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawExterior {
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawLayer {
    pub medium: String,
    pub thickness: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Output {
    Transfer,
    GreenDiagonal,
    Dos,
    BoundStates,
    Transmission,
    IdentityReport,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    pub omega_min: String,
    pub omega_max: String,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<[String; 2]>>,
    pub outputs: Vec<Output>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_bracket: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_tol: Option<String>,
}

/// Literal content of a stack file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawStackFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<RawUnits>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
    pub media: BTreeMap<String, RawMedium>,
    pub exterior: RawExterior,
    #[serde(default)]
    pub layers: Vec<RawLayer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<RawSweep>,
}

/// Literal content of a single-layer file (input of the Fibonacci builder).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawLayerFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<RawUnits>,
    pub layer: RawLayerSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawLayerSpec {
    pub thickness: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub medium: RawMedium,
}

/// Which quantities a sweep writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutputSet {
    pub transfer: bool,
    pub green_diagonal: bool,
    pub dos: bool,
    pub bound_states: bool,
    pub transmission: bool,
    pub identity_report: bool,
}

impl OutputSet {
    pub fn from_list(list: &[Output]) -> Self {
        let mut s = OutputSet::default();
        for o in list {
            match o {
                Output::Transfer => s.transfer = true,
                Output::GreenDiagonal => s.green_diagonal = true,
                Output::Dos => s.dos = true,
                Output::BoundStates => s.bound_states = true,
                Output::Transmission => s.transmission = true,
                Output::IdentityReport => s.identity_report = true,
            }
        }
        s
    }

    pub fn needs_green(&self) -> bool {
        self.green_diagonal || self.dos
    }
}

/// Validated sweep request, all values in natural units.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub omegas: Vec<f64>,
    pub eta: f64,
    pub kappas: Vec<[f64; 2]>,
    pub outputs: OutputSet,
    /// Positions at which Green-function diagonals and DOS are reported.
    pub z: Vec<f64>,
    /// Anchor of the Green-function assembly; defaults to the stack centre.
    pub anchor: Option<f64>,
    pub bound_bracket: Option<(f64, f64)>,
    pub bound_tol: f64,
}

/// Parsed stack file.
#[derive(Debug, Clone)]
pub struct StackDescription {
    pub stack: LayerStack,
    pub sweep: Option<SweepSpec>,
    pub units: Units,
    pub raw: RawStackFile,
}

fn parse_units(raw: &Option<RawUnits>) -> Result<Units> {
    let Some(u) = raw else { return Ok(Units::default()) };
    let bad = || AtmError::invalid("units.length", format!("expected a positive length such as \"1 nm\" or \"5 A\", got {:?}", u.length));
    let t = u.length.trim();
    let (num, scale) = if let Some(n) = t.strip_suffix("nm") {
        (n, 1.0)
    } else if let Some(n) = t.strip_suffix('A') {
        (n, 0.1)
    } else {
        return Err(bad());
    };
    let value: f64 = num.trim().parse().map_err(|_| bad())?;
    if !(value > 0.0) || !value.is_finite() {
        return Err(bad());
    }
    Ok(Units { length_nm: Some(value * scale) })
}

fn matrix(raw: &RawMatrix, n: usize, field: &str) -> Result<CMat> {
    if raw.len() != n || raw.iter().any(|r| r.len() != n) {
        return Err(AtmError::invalid(field, format!("must be a {n}x{n} matrix of [re, im] pairs")));
    }
    Ok(CMat::from_fn(n, n, |i, j| C64::new(raw[i][j][0], raw[i][j][1])))
}

/// Build a medium from its description.
pub fn build_medium(raw: &RawMedium, units: &Units, field: &str) -> Result<CoefficientSet> {
    let preset = match raw {
        RawMedium::FreeParticle { mass_scale } => ModelPreset::FreeParticle { mass_scale: mass_scale.unwrap_or(1.0) },
        RawMedium::BendanielDuke { mass, potential } => ModelPreset::BenDanielDuke {
            mass: *mass,
            potential: units.quantity(potential, Dimension::Energy, &format!("{field}.potential"))?,
        },
        RawMedium::TwoBand { gap, coupling } => ModelPreset::TwoBandToy {
            gap: units.quantity(gap, Dimension::Energy, &format!("{field}.gap"))?,
            coupling: units.quantity(coupling, Dimension::Wavevector, &format!("{field}.coupling"))?,
        },
        RawMedium::Matrix { b, p, y, w0, w_omega, w_kappa2, hermitean } => {
            let n = b.len();
            if n == 0 {
                return Err(AtmError::invalid(&format!("{field}.b"), "must not be empty"));
            }
            let b = matrix(b, n, &format!("{field}.b"))?;
            let opt = |m: &Option<RawMatrix>, name: &str, default: CMat| match m {
                Some(m) => matrix(m, n, &format!("{field}.{name}")),
                None => Ok(default),
            };
            let p = opt(p, "p", CMat::zeros(n, n))?;
            let y = opt(y, "y", CMat::zeros(n, n))?;
            let w0 = opt(w0, "w0", CMat::zeros(n, n))?;
            let w_omega = opt(w_omega, "w_omega", CMat::identity(n, n))?;
            let w_kappa2 = opt(w_kappa2, "w_kappa2", -b.clone())?;
            let set = CoefficientSet::new(n, true, move |_, sp| Coefficients {
                b: b.clone(),
                p: p.clone(),
                y: y.clone(),
                w: &w0 + &w_omega * sp.regularized() + &w_kappa2 * C64::from(sp.kappa_sq()),
            })?;
            return match hermitean {
                Some(true) => set.declare_hermitean((0.0, 1.0)).map_err(|e| AtmError::invalid(&format!("{field}.hermitean"), e.to_string())),
                Some(false) => Ok(set),
                None => Ok(set.clone().declare_hermitean((0.0, 1.0)).unwrap_or(set)),
            };
        }
    };
    preset.build().map_err(|e| match e {
        AtmError::InvalidParameter { name, reason } => AtmError::invalid(&format!("{field}.{name}"), reason),
        other => other,
    })
}

fn linspace(min: f64, max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![min];
    }
    (0..count).map(|i| min + (max - min) * i as f64 / (count - 1) as f64).collect()
}

fn parse_sweep(raw: &RawSweep, units: &Units, stack: &LayerStack) -> Result<SweepSpec> {
    let e = |s: &str, f: &str| units.quantity(s, Dimension::Energy, f);
    let omin = e(&raw.omega_min, "sweep.omega_min")?;
    let omax = e(&raw.omega_max, "sweep.omega_max")?;
    if raw.count == 0 {
        return Err(AtmError::invalid("sweep.count", "must be at least 1"));
    }
    if raw.count > 1 && !(omax > omin) {
        return Err(AtmError::invalid("sweep.omega_max", "must exceed omega_min when count > 1"));
    }
    let eta = match &raw.eta {
        Some(s) => e(s, "sweep.eta")?,
        None => default_eta()?,
    };
    if eta < 0.0 {
        return Err(AtmError::invalid("sweep.eta", "must be non-negative"));
    }
    let outputs = OutputSet::from_list(&raw.outputs);
    if outputs.needs_green() && eta == 0.0 {
        return Err(AtmError::invalid("sweep.eta", "must be positive when green-diagonal or dos output is requested"));
    }
    let kappas = match &raw.kappa {
        None => vec![[0.0, 0.0]],
        Some(list) if list.is_empty() => return Err(AtmError::invalid("sweep.kappa", "must not be empty")),
        Some(list) => list
            .iter()
            .enumerate()
            .map(|(i, [kx, ky])| {
                Ok([
                    units.quantity(kx, Dimension::Wavevector, &format!("sweep.kappa[{i}][0]"))?,
                    units.quantity(ky, Dimension::Wavevector, &format!("sweep.kappa[{i}][1]"))?,
                ])
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let z = match &raw.z {
        None => vec![0.5 * (stack.left_edge() + stack.right_edge())],
        Some(list) => list
            .iter()
            .enumerate()
            .map(|(i, s)| units.quantity(s, Dimension::Length, &format!("sweep.z[{i}]")))
            .collect::<Result<Vec<_>>>()?,
    };
    let anchor = raw.anchor.as_ref().map(|s| units.quantity(s, Dimension::Length, "sweep.anchor")).transpose()?;
    let bound_bracket = match &raw.bound_bracket {
        None => None,
        Some([lo, hi]) => {
            let (lo, hi) = (e(lo, "sweep.bound_bracket[0]")?, e(hi, "sweep.bound_bracket[1]")?);
            if !(hi > lo) {
                return Err(AtmError::invalid("sweep.bound_bracket", "upper end must exceed the lower end"));
            }
            Some((lo, hi))
        }
    };
    if outputs.bound_states && bound_bracket.is_none() {
        return Err(AtmError::invalid("sweep.bound_bracket", "required when bound-states output is requested"));
    }
    let bound_tol = match &raw.bound_tol {
        Some(s) => e(s, "sweep.bound_tol")?,
        None => 1e-10,
    };
    if !(bound_tol > 0.0) {
        return Err(AtmError::invalid("sweep.bound_tol", "must be positive"));
    }
    Ok(SweepSpec { omegas: linspace(omin, omax, raw.count), eta, kappas, outputs, z, anchor, bound_bracket, bound_tol })
}

fn toml_error(e: toml::de::Error, source: &str) -> AtmError {
    let location = e.span().map(|span| {
        let before = &source[..span.start.min(source.len())];
        let line = before.matches('\n').count() + 1;
        let col = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
        format!("line {line}, column {col}: ")
    });
    AtmError::Parse(format!("{}{}", location.unwrap_or_default(), e.message()))
}

/// Parse a stack description held in memory.
pub fn parse_stack_str(text: &str) -> Result<StackDescription> {
    let raw: RawStackFile = toml::from_str(text).map_err(|e| toml_error(e, text))?;
    build_stack(raw)
}

/// Read and validate a stack file.
pub fn parse_stack_file(path: impl AsRef<Path>) -> Result<StackDescription> {
    let text = read(path.as_ref())?;
    parse_stack_str(&text)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| AtmError::Io { path: path.display().to_string(), reason: e.to_string() })
}

/// Build the stack and sweep from the literal file content.
pub fn build_stack(raw: RawStackFile) -> Result<StackDescription> {
    let units = parse_units(&raw.units)?;
    let media: BTreeMap<&str, CoefficientSet> = raw
        .media
        .iter()
        .map(|(name, m)| Ok((name.as_str(), build_medium(m, &units, &format!("media.{name}"))?)))
        .collect::<Result<_>>()?;
    let lookup = |name: &str, field: &str| {
        media
            .get(name)
            .cloned()
            .ok_or_else(|| AtmError::invalid(field, format!("unknown medium `{name}`")))
    };
    let left = lookup(&raw.exterior.left, "exterior.left")?;
    let right = lookup(&raw.exterior.right, "exterior.right")?;
    let layers = raw
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let medium = lookup(&l.medium, &format!("layers[{i}].medium"))?;
            let field = format!("layers[{i}].thickness");
            let thickness = units.quantity(&l.thickness, Dimension::Length, &field)?;
            if !(thickness > 0.0) {
                return Err(AtmError::invalid(&field, format!("must be positive, got {}", l.thickness)));
            }
            Ok(Layer::new(medium, thickness, l.label.clone().unwrap_or_else(|| l.medium.clone())))
        })
        .collect::<Result<Vec<_>>>()?;
    let origin = raw.origin.as_ref().map(|o| units.quantity(o, Dimension::Length, "origin")).transpose()?.unwrap_or(0.0);
    let stack = LayerStack::new(left, right, layers, origin).map_err(|e| match e {
        AtmError::DimensionMismatch { expected, found } => {
            AtmError::invalid("media", format!("all media must share one dimension ({expected} vs {found})"))
        }
        other => other,
    })?;
    let sweep = raw.sweep.as_ref().map(|s| parse_sweep(s, &units, &stack)).transpose()?;
    Ok(StackDescription { stack, sweep, units, raw })
}

/// Read a single-layer file.
pub fn parse_layer_file(path: impl AsRef<Path>) -> Result<RawLayerFile> {
    let text = read(path.as_ref())?;
    toml::from_str(&text).map_err(|e| toml_error(e, &text))
}

/// Stack file for the Fibonacci chain of two layers, with the medium of the
/// first layer filling both exteriors.
pub fn fibonacci_stack_file(generation: usize, a: &RawLayerFile, b: &RawLayerFile) -> Result<RawStackFile> {
    if a.units != b.units {
        return Err(AtmError::invalid("units", "both layer files must use the same [units] table"));
    }
    let word = crate::stack::fibonacci_word(generation)?;
    let mut media = BTreeMap::new();
    media.insert("A".to_string(), a.layer.medium.clone());
    media.insert("B".to_string(), b.layer.medium.clone());
    let layer = |spec: &RawLayerSpec, name: &str| RawLayer {
        medium: name.to_string(),
        thickness: spec.thickness.clone(),
        label: Some(spec.label.clone().unwrap_or_else(|| name.to_string())),
    };
    let layers = word.iter().map(|&is_a| if is_a { layer(&a.layer, "A") } else { layer(&b.layer, "B") }).collect();
    Ok(RawStackFile {
        units: a.units.clone(),
        origin: None,
        media,
        exterior: RawExterior { left: "A".into(), right: "A".into() },
        layers,
        sweep: None,
    })
}

/// Serialize a stack file back to TOML.
pub fn to_toml(raw: &RawStackFile) -> Result<String> {
    toml::to_string(raw).map_err(|e| AtmError::Parse(e.to_string()))
}
