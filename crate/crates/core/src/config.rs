//! Flat `key = value` run configuration and sweep grids.
//!
//! A file starts from the preset selected by `mode` (inverter when absent)
//! and overrides it line by line. `#` starts a comment. The list keys
//! `port`, `void_box` and `solid_box` may repeat; their first occurrence
//! discards the preset list, and the value `none` leaves it empty.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::PlaneModel;
use crate::mesh::{validate_ports, BoundaryTag, BoxRegion, Port, Side};
use crate::objective::PortMeasure;
use crate::optimizer::{Mode, ObjectiveKind, ProblemSpec};
use crate::sensitivity::AdjointCoefficients;
use crate::stress::VmConvention;

const MODES: &[(&str, Mode)] = &[
    ("inverter", Mode::Inverter),
    ("magnifier", Mode::Magnifier),
    ("lbeam", Mode::LBeam),
];
const OBJECTIVES: &[(&str, ObjectiveKind)] = &[
    ("effective_energy", ObjectiveKind::EffectiveEnergy),
    ("pnorm", ObjectiveKind::PNorm),
    ("compliance", ObjectiveKind::Compliance),
];
const PLANES: &[(&str, PlaneModel)] = &[
    ("stress", PlaneModel::Stress),
    ("strain", PlaneModel::Strain),
];
const VM_CONVENTIONS: &[(&str, VmConvention)] = &[
    ("conventional", VmConvention::Conventional),
    ("tensor", VmConvention::Tensor),
];
const COEFFICIENTS: &[(&str, AdjointCoefficients)] = &[
    ("chain_rule", AdjointCoefficients::ChainRule),
    ("ratio", AdjointCoefficients::Ratio),
];
const MEASURES: &[(&str, PortMeasure)] = &[
    ("integral", PortMeasure::Integral),
    ("mean", PortMeasure::Mean),
];
const SIDES: &[(&str, Side)] = &[
    ("left", Side::Left),
    ("right", Side::Right),
    ("bottom", Side::Bottom),
    ("top", Side::Top),
];
const TAGS: &[(&str, BoundaryTag)] = &[
    ("fixed", BoundaryTag::Fixed),
    ("input", BoundaryTag::Input),
    ("output", BoundaryTag::Output),
    ("symmetry", BoundaryTag::Symmetry),
    ("free", BoundaryTag::Free),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Domain,
    Ports,
    Material,
    Loads,
    Objective,
    Stress,
    Heaviside,
    Rde,
    Run,
}

const GROUPS: [Group; 9] = [
    Group::Domain,
    Group::Ports,
    Group::Material,
    Group::Loads,
    Group::Objective,
    Group::Stress,
    Group::Heaviside,
    Group::Rde,
    Group::Run,
];

/// Every accepted key except `mode`, with the group it belongs to.
const KEYS: &[(&str, Group)] = &[
    ("objective", Group::Objective),
    ("length", Group::Domain),
    ("width", Group::Domain),
    ("height", Group::Domain),
    ("divisions", Group::Domain),
    ("divisions_x", Group::Domain),
    ("divisions_y", Group::Domain),
    ("void_box", Group::Domain),
    ("solid_box", Group::Domain),
    ("port", Group::Ports),
    ("youngs_modulus", Group::Material),
    ("poisson_ratio", Group::Material),
    ("plane", Group::Material),
    ("traction", Group::Loads),
    ("output_direction", Group::Loads),
    ("alpha", Group::Objective),
    ("beta", Group::Objective),
    ("port_measure", Group::Objective),
    ("adjoint_coefficients", Group::Objective),
    ("p", Group::Stress),
    ("sigma_max", Group::Stress),
    ("vm_convention", Group::Stress),
    ("heaviside_width", Group::Heaviside),
    ("void_stiffness", Group::Heaviside),
    ("rde_k", Group::Rde),
    ("rde_c", Group::Rde),
    ("tau", Group::Rde),
    ("dt", Group::Rde),
    ("substeps", Group::Rde),
    ("volume_max", Group::Run),
    ("volume_step", Group::Run),
    ("mu", Group::Run),
    ("w_p", Group::Run),
    ("max_iters", Group::Run),
    ("convergence_window", Group::Run),
    ("convergence_tol", Group::Run),
    ("degenerate_factor", Group::Run),
    ("checkpoint_every", Group::Run),
];

const LIST_KEYS: [&str; 3] = ["port", "void_box", "solid_box"];

fn group_of(key: &str) -> Option<Group> {
    KEYS.iter().find(|(k, _)| *k == key).map(|&(_, g)| g)
}

fn parse_enum<E: Copy>(value: &str, table: &[(&str, E)]) -> Result<E, String> {
    let v = value.to_ascii_lowercase();
    table
        .iter()
        .find(|(name, _)| *name == v)
        .map(|&(_, e)| e)
        .ok_or_else(|| {
            let names: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
            format!(
                "unknown value '{value}', expected one of {}",
                names.join(", ")
            )
        })
}

fn name_of<E: Copy + PartialEq>(value: E, table: &[(&'static str, E)]) -> &'static str {
    table
        .iter()
        .find(|(_, e)| *e == value)
        .map_or("?", |&(n, _)| n)
}

fn parse_f64(value: &str) -> Result<f64, String> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| format!("expected a number, got '{}'", value.trim()))
}

fn parse_usize(value: &str) -> Result<usize, String> {
    value
        .trim()
        .parse::<usize>()
        .map_err(|_| format!("expected a non-negative integer, got '{}'", value.trim()))
}

fn parse_list(value: &str, n: usize) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != n {
        return Err(format!(
            "expected {n} comma-separated numbers, got '{value}'"
        ));
    }
    parts.into_iter().map(parse_f64).collect()
}

fn parse_vec2(value: &str) -> Result<[f64; 2], String> {
    let v = parse_list(value, 2)?;
    Ok([v[0], v[1]])
}

fn parse_box(value: &str) -> Result<BoxRegion, String> {
    let v = parse_list(value, 4)?;
    Ok(BoxRegion::new(v[0], v[1], v[2], v[3]))
}

fn parse_port(value: &str) -> Result<Port, String> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("expected side,start,end,tag, got '{value}'"));
    }
    Ok(Port::new(
        parse_enum(parts[0], SIDES)?,
        parse_f64(parts[1])?,
        parse_f64(parts[2])?,
        parse_enum(parts[3], TAGS)?,
    ))
}

/// Sets `divisions_x` to `n` and `divisions_y` to match the aspect ratio.
fn set_divisions(spec: &mut ProblemSpec, n: usize) {
    let d = &mut spec.domain;
    d.divisions_x = n;
    d.divisions_y = ((n as f64 * d.height / d.width).round() as usize).max(1);
}

/// Applies one scalar key to `spec`. List keys and `mode` are rejected.
pub fn set_key(spec: &mut ProblemSpec, key: &str, value: &str) -> Result<(), String> {
    let value = value.trim();
    match key {
        "objective" => spec.objective = parse_enum(value, OBJECTIVES)?,
        "length" => spec.domain.length = parse_f64(value)?,
        "width" => spec.domain.width = parse_f64(value)?,
        "height" => spec.domain.height = parse_f64(value)?,
        "divisions" => set_divisions(spec, parse_usize(value)?),
        "divisions_x" => spec.domain.divisions_x = parse_usize(value)?,
        "divisions_y" => spec.domain.divisions_y = parse_usize(value)?,
        "youngs_modulus" => spec.material.youngs_modulus = parse_f64(value)?,
        "poisson_ratio" => spec.material.poisson_ratio = parse_f64(value)?,
        "plane" => spec.material.plane = parse_enum(value, PLANES)?,
        "traction" => spec.loads.traction = parse_vec2(value)?,
        "output_direction" => spec.loads.output_direction = parse_vec2(value)?,
        "alpha" => spec.params.alpha = parse_f64(value)?,
        "beta" => spec.params.beta = parse_f64(value)?,
        "port_measure" => spec.port_measure = parse_enum(value, MEASURES)?,
        "adjoint_coefficients" => spec.adjoint_coefficients = parse_enum(value, COEFFICIENTS)?,
        "p" => spec.stress.p = parse_f64(value)?,
        "sigma_max" => spec.stress.sigma_max = parse_f64(value)?,
        "vm_convention" => spec.stress.convention = parse_enum(value, VM_CONVENTIONS)?,
        "heaviside_width" => spec.heaviside.w = parse_f64(value)?,
        "void_stiffness" => spec.heaviside.d = parse_f64(value)?,
        "rde_k" => spec.rde.k = parse_f64(value)?,
        "rde_c" => spec.rde.c = parse_f64(value)?,
        "tau" => spec.rde.tau = parse_f64(value)?,
        "dt" => spec.rde.dt = parse_f64(value)?,
        "substeps" => spec.rde.substeps = parse_usize(value)?,
        "volume_max" => spec.volume_max = parse_f64(value)?,
        "volume_step" => spec.volume_step = parse_f64(value)?,
        "mu" => spec.mu = parse_f64(value)?,
        "w_p" => spec.w_p = parse_f64(value)?,
        "max_iters" => spec.max_iters = parse_usize(value)?,
        "convergence_window" => spec.convergence_window = parse_usize(value)?,
        "convergence_tol" => spec.convergence_tol = parse_f64(value)?,
        "degenerate_factor" => spec.degenerate_factor = parse_f64(value)?,
        "checkpoint_every" => spec.checkpoint_every = parse_usize(value)?,
        "mode" => return Err("mode selects the preset and cannot be overridden here".into()),
        k if LIST_KEYS.contains(&k) => {
            return Err(format!("'{k}' is a list key and cannot be set here"))
        }
        k => return Err(format!("unknown key '{k}'")),
    }
    Ok(())
}

fn validate_group(spec: &ProblemSpec, group: Group) -> Result<()> {
    match group {
        Group::Domain => spec.domain.validate(),
        Group::Ports => validate_ports(&spec.ports, spec.domain.width, spec.domain.height),
        Group::Material => spec.material.validate(),
        Group::Loads => spec.loads.validate(),
        Group::Objective if spec.objective == ObjectiveKind::EffectiveEnergy => {
            spec.params.validate()
        }
        Group::Objective => Ok(()),
        Group::Stress => spec.stress.validate(),
        Group::Heaviside => spec.heaviside.validate(),
        Group::Rde => spec.rde.validate(),
        Group::Run => spec.validate(),
    }
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

fn entries(text: &str) -> Result<Vec<Entry<'_>>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            msg: format!("expected 'key = value', got '{content}'"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key != "mode" && group_of(key).is_none() {
            return Err(Error::Config {
                line,
                msg: format!("unknown key '{key}'"),
            });
        }
        if !LIST_KEYS.contains(&key) {
            if let Some(prev) = out.iter().find(|e| e.key == key) {
                return Err(Error::Config {
                    line,
                    msg: format!("duplicate key '{key}' (first set on line {})", prev.line),
                });
            }
        }
        out.push(Entry { line, key, value });
    }
    Ok(out)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ProblemSpec> {
    let entries = entries(text)?;
    let mode = match entries.iter().find(|e| e.key == "mode") {
        Some(e) => parse_enum(e.value, MODES).map_err(|msg| Error::Config { line: e.line, msg })?,
        None => Mode::Inverter,
    };
    let mut spec = ProblemSpec::preset(mode);
    let mut touched: Vec<(Group, usize)> = Vec::new();
    let mut cleared: Vec<&str> = Vec::new();
    let mut divisions: Option<&Entry> = None;

    for e in &entries {
        if e.key == "mode" {
            continue;
        }
        let group = group_of(e.key).expect("keys are checked while reading");
        match touched.iter_mut().find(|(g, _)| *g == group) {
            Some(t) => t.1 = e.line,
            None => touched.push((group, e.line)),
        }
        let err = |msg: String| Error::Config { line: e.line, msg };
        if LIST_KEYS.contains(&e.key) {
            if !cleared.contains(&e.key) {
                cleared.push(e.key);
                match e.key {
                    "port" => spec.ports.clear(),
                    "void_box" => spec.domain.void_boxes.clear(),
                    _ => spec.domain.solid_boxes.clear(),
                }
            }
            if e.value.eq_ignore_ascii_case("none") {
                continue;
            }
            match e.key {
                "port" => spec.ports.push(parse_port(e.value).map_err(err)?),
                "void_box" => spec
                    .domain
                    .void_boxes
                    .push(parse_box(e.value).map_err(err)?),
                _ => spec
                    .domain
                    .solid_boxes
                    .push(parse_box(e.value).map_err(err)?),
            }
        } else if e.key == "divisions" {
            parse_usize(e.value).map_err(err)?;
            divisions = Some(e);
        } else {
            set_key(&mut spec, e.key, e.value).map_err(err)?;
        }
    }
    if let Some(e) = divisions {
        set_key(&mut spec, "divisions", e.value)
            .map_err(|msg| Error::Config { line: e.line, msg })?;
    }

    for group in GROUPS {
        if let Some(&(_, line)) = touched.iter().find(|(g, _)| *g == group) {
            validate_group(&spec, group).map_err(|err| Error::Config {
                line,
                msg: err.to_string(),
            })?;
        }
    }
    let last = entries.last().map_or(0, |e| e.line);
    spec.validate().map_err(|err| Error::Config {
        line: last,
        msg: err.to_string(),
    })?;
    Ok(spec)
}

pub fn read_config(path: &Path) -> Result<ProblemSpec> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Writes every field of `spec` so that [`parse_config`] reproduces it.
pub fn write_config(spec: &ProblemSpec) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    let d = &spec.domain;
    kv("mode", name_of(spec.mode, MODES).into());
    kv("objective", name_of(spec.objective, OBJECTIVES).into());
    kv("length", d.length.to_string());
    kv("width", d.width.to_string());
    kv("height", d.height.to_string());
    kv("divisions_x", d.divisions_x.to_string());
    kv("divisions_y", d.divisions_y.to_string());
    let boxes = |b: &[BoxRegion]| -> Vec<String> {
        if b.is_empty() {
            return vec!["none".into()];
        }
        b.iter()
            .map(|b| format!("{},{},{},{}", b.x0, b.y0, b.x1, b.y1))
            .collect()
    };
    for v in boxes(&d.void_boxes) {
        kv("void_box", v);
    }
    for v in boxes(&d.solid_boxes) {
        kv("solid_box", v);
    }
    if spec.ports.is_empty() {
        kv("port", "none".into());
    }
    for p in &spec.ports {
        kv(
            "port",
            format!(
                "{},{},{},{}",
                name_of(p.side, SIDES),
                p.start,
                p.end,
                name_of(p.tag, TAGS)
            ),
        );
    }
    let m = &spec.material;
    kv("youngs_modulus", m.youngs_modulus.to_string());
    kv("poisson_ratio", m.poisson_ratio.to_string());
    kv("plane", name_of(m.plane, PLANES).into());
    let [tx, ty] = spec.loads.traction;
    kv("traction", format!("{tx},{ty}"));
    let [ex, ey] = spec.loads.output_direction;
    kv("output_direction", format!("{ex},{ey}"));
    kv("alpha", spec.params.alpha.to_string());
    kv("beta", spec.params.beta.to_string());
    kv("port_measure", name_of(spec.port_measure, MEASURES).into());
    kv(
        "adjoint_coefficients",
        name_of(spec.adjoint_coefficients, COEFFICIENTS).into(),
    );
    kv("p", spec.stress.p.to_string());
    kv("sigma_max", spec.stress.sigma_max.to_string());
    kv(
        "vm_convention",
        name_of(spec.stress.convention, VM_CONVENTIONS).into(),
    );
    kv("heaviside_width", spec.heaviside.w.to_string());
    kv("void_stiffness", spec.heaviside.d.to_string());
    kv("rde_k", spec.rde.k.to_string());
    kv("rde_c", spec.rde.c.to_string());
    kv("tau", spec.rde.tau.to_string());
    kv("dt", spec.rde.dt.to_string());
    kv("substeps", spec.rde.substeps.to_string());
    kv("volume_max", spec.volume_max.to_string());
    kv("volume_step", spec.volume_step.to_string());
    kv("mu", spec.mu.to_string());
    kv("w_p", spec.w_p.to_string());
    kv("max_iters", spec.max_iters.to_string());
    kv("convergence_window", spec.convergence_window.to_string());
    kv("convergence_tol", spec.convergence_tol.to_string());
    kv("degenerate_factor", spec.degenerate_factor.to_string());
    kv("checkpoint_every", spec.checkpoint_every.to_string());
    s
}

/// One sweep axis. Linked keys (`alpha:beta=1:0,0:1`) vary together.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub keys: Vec<String>,
    pub values: Vec<Vec<String>>,
}

/// Parses `key=v1,v2` or `k1:k2=a1:b1,a2:b2`; several axes may be joined
/// with `;`.
pub fn parse_grid(text: &str) -> Result<Vec<GridAxis>> {
    let mut axes = Vec::new();
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (keys, values) = part
            .split_once('=')
            .ok_or_else(|| Error::Cli(format!("grid axis '{part}' has no '='")))?;
        let keys: Vec<String> = keys.split(':').map(|k| k.trim().to_string()).collect();
        for k in &keys {
            if group_of(k).is_none() || LIST_KEYS.contains(&k.as_str()) {
                return Err(Error::Cli(format!("'{k}' cannot be swept")));
            }
        }
        let values: Vec<Vec<String>> = values
            .split(',')
            .map(|v| {
                v.split(':')
                    .map(|x| x.trim().to_string())
                    .collect::<Vec<_>>()
            })
            .collect();
        if values
            .iter()
            .any(|v| v.len() != keys.len() || v.iter().any(String::is_empty))
        {
            return Err(Error::Cli(format!(
                "grid axis '{part}': every value needs {} component(s)",
                keys.len()
            )));
        }
        axes.push(GridAxis { keys, values });
    }
    if axes.is_empty() {
        return Err(Error::Cli("empty grid".into()));
    }
    Ok(axes)
}

/// Condition labels `a`, `b`, …, `z`, `aa`, `ab`, …
pub fn condition_label(mut index: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (index % 26) as u8);
        if index < 26 {
            break;
        }
        index = index / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Cartesian product of the axes applied to `base`, first axis outermost.
pub fn expand_grid(base: &ProblemSpec, axes: &[GridAxis]) -> Result<Vec<(String, ProblemSpec)>> {
    let mut specs = vec![base.clone()];
    for axis in axes {
        let mut next = Vec::with_capacity(specs.len() * axis.values.len());
        for spec in &specs {
            for tuple in &axis.values {
                let mut s = spec.clone();
                for (k, v) in axis.keys.iter().zip(tuple) {
                    set_key(&mut s, k, v)
                        .map_err(|msg| Error::Cli(format!("grid {k}={v}: {msg}")))?;
                }
                next.push(s);
            }
        }
        specs = next;
    }
    specs
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.validate()?;
            Ok((condition_label(i), s))
        })
        .collect()
}
