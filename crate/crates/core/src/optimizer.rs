//! Optimization loop, problem presets, convergence and volume control.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{FemModel, LoadSpec, Material, PlaneModel};
use crate::levelset::{heaviside, HeavisideParams, LevelSetField, RdeParams, RdeSolver};
use crate::mesh::{
    build_structured_mesh, tag_boundaries, validate_ports, BoundaryTag, BoxRegion, Mesh, Port,
    RectDomain, Side,
};
use crate::objective::{
    compute_e, compute_j, compute_w, evaluation_displacements, init_normalization, mean_compliance,
    volume_fraction, Normalization, ObjectiveParams, PortMeasure, PortOperators,
};
use crate::sensitivity::{
    build_adjoint_rhs_compliance, build_adjoint_rhs_effective_energy, build_adjoint_rhs_pnorm,
    pnorm_gradient, project_to_nodes, stress_sensitivity_term, tensor_a,
    topological_derivative_elements, AdjointCoefficients, EnergyTerms, SensitivitySmoother,
    TensorA,
};
use crate::stress::{StressField, StressParams};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Inverter,
    Magnifier,
    LBeam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveKind {
    EffectiveEnergy,
    PNorm,
    Compliance,
}

/// Everything needed to reproduce one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub mode: Mode,
    pub objective: ObjectiveKind,
    pub domain: RectDomain,
    pub ports: Vec<Port>,
    pub material: Material,
    pub loads: LoadSpec,
    pub params: ObjectiveParams,
    pub stress: StressParams,
    pub heaviside: HeavisideParams,
    pub rde: RdeParams,
    pub volume_max: f64,
    /// Largest volume decrease requested per iteration.
    pub volume_step: f64,
    pub mu: f64,
    pub w_p: f64,
    pub max_iters: usize,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub adjoint_coefficients: AdjointCoefficients,
    pub port_measure: PortMeasure,
    /// Degenerate when `U_i` exceeds this multiple of the initial value.
    pub degenerate_factor: f64,
    /// Checkpoint period in iterations, 0 to disable.
    pub checkpoint_every: usize,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self::preset(Mode::Inverter)
    }
}

impl ProblemSpec {
    /// Half model of the inverter: the lower half of the `L × L` domain with
    /// a symmetry roller on the cut.
    pub fn inverter(divisions: usize) -> Self {
        Self {
            mode: Mode::Inverter,
            objective: ObjectiveKind::EffectiveEnergy,
            domain: RectDomain {
                length: 1.0,
                width: 1.0,
                height: 0.5,
                divisions_x: divisions,
                divisions_y: divisions.div_ceil(2),
                void_boxes: Vec::new(),
                solid_boxes: Vec::new(),
            },
            ports: vec![
                Port::new(Side::Left, 0.48, 0.5, BoundaryTag::Fixed),
                Port::new(Side::Left, 0.0, 0.05, BoundaryTag::Input),
                Port::new(Side::Right, 0.0, 0.05, BoundaryTag::Output),
                Port::new(Side::Bottom, 0.0, 1.0, BoundaryTag::Symmetry),
            ],
            material: Material::default(),
            loads: LoadSpec::default(),
            params: ObjectiveParams::default(),
            stress: StressParams::default(),
            heaviside: HeavisideParams::default(),
            rde: RdeParams::default(),
            volume_max: 0.3,
            volume_step: 0.02,
            mu: 0.0,
            w_p: 0.9,
            max_iters: 500,
            convergence_window: 5,
            convergence_tol: 1e-3,
            adjoint_coefficients: AdjointCoefficients::ChainRule,
            port_measure: PortMeasure::Integral,
            degenerate_factor: 1e3,
            checkpoint_every: 0,
        }
    }

    pub fn magnifier(divisions: usize) -> Self {
        let mut s = Self::inverter(divisions);
        s.mode = Mode::Magnifier;
        s.loads.output_direction = [1.0, 0.0];
        s.rde.tau = 1e-4;
        s
    }

    pub fn lbeam(divisions: usize) -> Self {
        let mut s = Self::inverter(divisions);
        s.mode = Mode::LBeam;
        s.objective = ObjectiveKind::PNorm;
        s.domain.height = 1.0;
        s.domain.divisions_y = divisions;
        s.domain.void_boxes = vec![BoxRegion::new(0.4, 0.4, 1.0, 1.0)];
        s.ports = vec![
            Port::new(Side::Top, 0.0, 0.4, BoundaryTag::Fixed),
            Port::new(Side::Right, 0.19, 0.21, BoundaryTag::Input),
        ];
        s.loads.traction = [0.0, -1e7];
        s.volume_max = 0.6;
        s
    }

    /// Preset at its reference resolution: element length `2.5e-3 L` for the
    /// inverter, `5e-3 L` for the magnifier and `1e-2 L` for the L-beam.
    pub fn preset(mode: Mode) -> Self {
        let divisions = match mode {
            Mode::Inverter => 400,
            Mode::Magnifier => 200,
            Mode::LBeam => 100,
        };
        Self::for_mode(mode, divisions)
    }

    pub fn for_mode(mode: Mode, divisions: usize) -> Self {
        match mode {
            Mode::Inverter => Self::inverter(divisions),
            Mode::Magnifier => Self::magnifier(divisions),
            Mode::LBeam => Self::lbeam(divisions),
        }
    }

    /// Switches to plane strain, the setting that reproduces the reference
    /// initial-structure displacements.
    pub fn with_plane(mut self, plane: PlaneModel) -> Self {
        self.material.plane = plane;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        validate_ports(&self.ports, self.domain.width, self.domain.height)?;
        self.material.validate()?;
        self.loads.validate()?;
        self.stress.validate()?;
        self.heaviside.validate()?;
        self.rde.validate()?;
        if self.objective == ObjectiveKind::EffectiveEnergy {
            self.params.validate()?;
        }
        let checks = [
            (
                self.volume_max > 0.0 && self.volume_max <= 1.0,
                "volume_max must be in (0, 1]",
            ),
            (self.volume_step > 0.0, "volume_step must be positive"),
            (self.mu >= 0.0, "mu must be non-negative"),
            ((0.0..1.0).contains(&self.w_p), "w_p must be in [0, 1)"),
            (self.max_iters >= 1, "max_iters must be at least 1"),
            (
                self.convergence_window >= 1,
                "convergence_window must be at least 1",
            ),
            (
                self.convergence_tol > 0.0,
                "convergence_tol must be positive",
            ),
            (
                self.degenerate_factor > 1.0,
                "degenerate_factor must exceed 1",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidParameter(msg.into()));
            }
        }
        Ok(())
    }

    pub fn build_mesh<T: Scalar>(&self) -> Result<Mesh<T>> {
        tag_boundaries(build_structured_mesh(&self.domain)?, &self.ports)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Converged,
    MaxIters,
    Degenerate,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "Converged",
            RunStatus::MaxIters => "MaxIters",
            RunStatus::Degenerate => "Degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub objective: f64,
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub volume: f64,
    pub sigma_pn: f64,
    pub max_stress_ratio: f64,
    pub max_von_mises: f64,
    #[serde(rename = "U_o")]
    pub u_o: f64,
    #[serde(rename = "U_i")]
    pub u_i: f64,
    /// Multiplier applied in the update that followed this evaluation.
    pub lambda: f64,
}

pub const HISTORY_COLUMNS: [&str; 11] = [
    "iter",
    "objective",
    "W",
    "E",
    "volume",
    "sigma_pn",
    "max_stress_ratio",
    "max_von_mises",
    "U_o",
    "U_i",
    "lambda",
];

impl HistoryRow {
    pub fn values(&self) -> [f64; 10] {
        [
            self.objective,
            self.w,
            self.e,
            self.volume,
            self.sigma_pn,
            self.max_stress_ratio,
            self.max_von_mises,
            self.u_o,
            self.u_i,
            self.lambda,
        ]
    }
}

/// True when the objective has settled over the last `window` rows and the
/// volume constraint holds.
pub fn check_convergence(
    history: &[HistoryRow],
    window: usize,
    tol: f64,
    volume_max: f64,
    volume_tol: f64,
) -> bool {
    if history.len() < window.max(1) + 1 {
        return false;
    }
    let tail = &history[history.len() - window - 1..];
    let last = tail[tail.len() - 1];
    if last.volume > volume_max + volume_tol {
        return false;
    }
    let scale = last.objective.abs().max(f64::MIN_POSITIVE);
    tail.iter()
        .all(|r| r.objective.is_finite() && (r.objective - last.objective).abs() / scale < tol)
}

/// Resumable optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState<T> {
    pub iter: usize,
    pub phi: LevelSetField<T>,
    pub smoother: SensitivitySmoother<T>,
    pub normalization: Option<Normalization>,
    pub initial_ui: Option<f64>,
    pub history: Vec<HistoryRow>,
}

/// State, stresses and scalar measures of one design.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub element_density: Vec<T>,
    pub u: Vec<T>,
    pub stress: StressField<T>,
    pub volume: T,
    pub sigma_pn: T,
    pub u_o: T,
    pub u_i: T,
    pub input_work: T,
}

#[derive(Debug, Clone)]
pub struct RunResult<T> {
    pub status: RunStatus,
    pub reason: Option<String>,
    pub disconnected: bool,
    pub state: OptimizerState<T>,
    pub final_eval: Option<Evaluation<T>>,
    pub wall_time: f64,
}

impl<T> RunResult<T> {
    pub fn last(&self) -> Option<&HistoryRow> {
        self.state.history.last()
    }
}

pub enum StepOutcome<T> {
    Continue,
    Finished(RunStatus, Option<String>, Box<Evaluation<T>>),
}

pub struct Optimizer<T> {
    pub spec: ProblemSpec,
    pub mesh: Mesh<T>,
    pub fem: FemModel<T>,
    pub rde: RdeSolver<T>,
    pub ports: PortOperators<T>,
    tensor: TensorA<T>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let mesh = spec.build_mesh::<T>()?;
        if mesh.edges_with_tag(BoundaryTag::Input).next().is_none() {
            return Err(Error::InvalidParameter("no Input edges".into()));
        }
        let needs_output = spec.objective == ObjectiveKind::EffectiveEnergy;
        if needs_output && mesh.edges_with_tag(BoundaryTag::Output).next().is_none() {
            return Err(Error::InvalidParameter("no Output edges".into()));
        }
        let fem = FemModel::new(&mesh, spec.material)?;
        let rde = RdeSolver::new(&mesh, spec.rde)?;
        let ports = PortOperators::new(&mesh, &spec.loads);
        let tensor = tensor_a(&spec.material)?;
        Ok(Self {
            spec,
            mesh,
            fem,
            rde,
            ports,
            tensor,
        })
    }

    pub fn initial_state(&self) -> Result<OptimizerState<T>> {
        Ok(OptimizerState {
            iter: 0,
            phi: LevelSetField::uniform(self.mesh.node_count(), T::one()),
            smoother: SensitivitySmoother::new(self.spec.w_p)?,
            normalization: None,
            initial_ui: None,
            history: Vec::new(),
        })
    }

    pub fn evaluate(
        &self,
        phi: &LevelSetField<T>,
    ) -> Result<(Evaluation<T>, crate::fem::SparseSystem<T>)> {
        let system = self
            .fem
            .assemble_system(&self.mesh, phi, &self.spec.heaviside)?;
        let u = self
            .fem
            .solve_state(&system, &self.mesh, &self.spec.loads)?;
        let element_density = system.element_density.clone();
        let stress = StressField::evaluate(&self.fem, &u, &element_density, &self.spec.stress);
        let sigma_pn = stress.pnorm(self.spec.stress.p);
        let (u_o, u_i) = evaluation_displacements(&u, &self.ports, self.spec.port_measure);
        let eval = Evaluation {
            volume: volume_fraction(&self.mesh, &element_density),
            input_work: mean_compliance(&u, &self.ports),
            element_density,
            u,
            stress,
            sigma_pn,
            u_o,
            u_i,
        };
        Ok((eval, system))
    }

    /// Largest relaxed von Mises stress of the design.
    pub fn max_von_mises(eval: &Evaluation<T>) -> T {
        eval.stress.max_relaxed()
    }

    /// One pass of evaluate / check / adjoint / update.
    pub fn step(&self, state: &mut OptimizerState<T>) -> Result<StepOutcome<T>> {
        let (eval, system) = self.evaluate(&state.phi)?;
        let spec = &self.spec;
        let norm = match state.normalization {
            Some(n) => n,
            None => {
                let n = match spec.objective {
                    ObjectiveKind::EffectiveEnergy => {
                        init_normalization(&eval.u, &self.mesh, &self.ports)?
                    }
                    _ => {
                        let e_bar = eval.input_work.abs().as_f64();
                        if !(e_bar > 0.0) {
                            return Err(Error::Degenerate(
                                "zero input work on the initial structure".into(),
                            ));
                        }
                        Normalization { w_bar: 1.0, e_bar }
                    }
                };
                state.normalization = Some(n);
                state.initial_ui = Some(eval.u_i.as_f64());
                n
            }
        };
        let w = compute_w(&eval.u, &self.ports, &norm);
        let e = compute_e(&eval.u, &self.ports, &norm);
        let objective = match spec.objective {
            ObjectiveKind::EffectiveEnergy => compute_j(w, e, &spec.params)?,
            ObjectiveKind::PNorm => eval.sigma_pn,
            ObjectiveKind::Compliance => eval.input_work,
        };
        state.history.push(HistoryRow {
            iter: state.iter,
            objective: objective.as_f64(),
            w: w.as_f64(),
            e: e.as_f64(),
            volume: eval.volume.as_f64(),
            sigma_pn: eval.sigma_pn.as_f64(),
            max_stress_ratio: eval.stress.max_ratio().as_f64(),
            max_von_mises: Self::max_von_mises(&eval).as_f64(),
            u_o: eval.u_o.as_f64(),
            u_i: eval.u_i.as_f64(),
            lambda: 0.0,
        });

        let ui0 = state.initial_ui.unwrap_or(0.0).abs();
        let ui = eval.u_i.as_f64();
        if !ui.is_finite() || ui.abs() > spec.degenerate_factor * ui0 {
            let why = format!(
                "input displacement {ui:e} exceeds {} x initial",
                spec.degenerate_factor
            );
            return Ok(StepOutcome::Finished(
                RunStatus::Degenerate,
                Some(why),
                Box::new(eval),
            ));
        }
        if check_convergence(
            &state.history,
            spec.convergence_window,
            spec.convergence_tol,
            spec.volume_max,
            0.005,
        ) {
            return Ok(StepOutcome::Finished(
                RunStatus::Converged,
                None,
                Box::new(eval),
            ));
        }
        if state.iter + 1 >= spec.max_iters {
            return Ok(StepOutcome::Finished(
                RunStatus::MaxIters,
                None,
                Box::new(eval),
            ));
        }

        let terms = EnergyTerms { w, e, j: objective };
        let (el, _) = self.sensitivity(&mut state.smoother, &eval, &system, &norm, &terms)?;
        let dtl = project_to_nodes(&self.mesh, &el);
        let descent: Vec<T> = dtl.iter().map(|&g| -g).collect();
        let scale = self.rde.normalization(&descent);
        let base: Vec<T> = descent.iter().map(|&g| scale * g).collect();

        let target = spec.volume_max.max(eval.volume.as_f64() - spec.volume_step);
        let (lambda, phi) = self.bisect_volume_multiplier(&state.phi, &base, target)?;
        if let Some(row) = state.history.last_mut() {
            row.lambda = lambda;
        }
        state.phi = phi;
        state.iter += 1;
        Ok(StepOutcome::Continue)
    }

    /// Element-wise `d_tL` at `λ = 0` and the smoothed stress term that
    /// entered it. Advances `smoother`.
    fn sensitivity(
        &self,
        smoother: &mut SensitivitySmoother<T>,
        eval: &Evaluation<T>,
        system: &crate::fem::SparseSystem<T>,
        norm: &Normalization,
        terms: &EnergyTerms<T>,
    ) -> Result<(Vec<T>, Vec<T>)> {
        let spec = &self.spec;
        let dens = &eval.element_density;
        let needs_grad = match spec.objective {
            ObjectiveKind::EffectiveEnergy => spec.mu > 0.0,
            ObjectiveKind::PNorm => true,
            ObjectiveKind::Compliance => false,
        };
        let grad = if needs_grad {
            pnorm_gradient(&self.fem, &eval.stress, dens, &spec.stress)
        } else {
            vec![T::zero(); self.fem.dof_count()]
        };
        let (rhs, stress_weight) = match spec.objective {
            ObjectiveKind::EffectiveEnergy => {
                let rhs = build_adjoint_rhs_effective_energy(
                    &self.ports,
                    terms,
                    norm,
                    &spec.params,
                    spec.mu,
                    &grad,
                    spec.adjoint_coefficients,
                )?;
                (rhs, spec.mu)
            }
            ObjectiveKind::PNorm => (build_adjoint_rhs_pnorm(&grad), 1.0),
            ObjectiveKind::Compliance => (build_adjoint_rhs_compliance(&self.ports), 0.0),
        };
        let v = self.fem.solve_adjoint(system, &rhs)?;
        let raw = stress_sensitivity_term(&eval.stress, spec.stress.p);
        let smoothed = smoother.smooth(&raw);
        let el = topological_derivative_elements(
            &self.fem,
            &eval.u,
            &v,
            dens,
            &self.tensor,
            T::zero(),
            T::c(stress_weight),
            Some(&smoothed),
        );
        Ok((el, smoothed))
    }

    /// Nodal `d_tL` (at `λ = 0`) and element stress term the next update
    /// would use, without changing `state`.
    pub fn sensitivity_fields(&self, state: &OptimizerState<T>) -> Result<(Vec<T>, Vec<T>)> {
        let norm = state
            .normalization
            .ok_or_else(|| Error::InvalidParameter("state has not been evaluated".into()))?;
        let (eval, system) = self.evaluate(&state.phi)?;
        let w = compute_w(&eval.u, &self.ports, &norm);
        let e = compute_e(&eval.u, &self.ports, &norm);
        let j = match self.spec.objective {
            ObjectiveKind::EffectiveEnergy => compute_j(w, e, &self.spec.params)?,
            _ => T::zero(),
        };
        let mut smoother = state.smoother.clone();
        let (el, smoothed) = self.sensitivity(
            &mut smoother,
            &eval,
            &system,
            &norm,
            &EnergyTerms { w, e, j },
        )?;
        Ok((project_to_nodes(&self.mesh, &el), smoothed))
    }

    fn trial(
        &self,
        phi: &LevelSetField<T>,
        base: &[T],
        lambda: f64,
    ) -> Result<(f64, LevelSetField<T>)> {
        let l = T::c(lambda);
        let drive: Vec<T> = base.iter().map(|&g| g - l).collect();
        let next = self.rde.step(phi, &drive)?;
        let dens = next.element_densities(&self.mesh, &self.spec.heaviside);
        Ok((volume_fraction(&self.mesh, &dens).as_f64(), next))
    }

    /// Chooses `λ ≥ 0` so the updated design meets the volume `target`.
    /// `base` is the normalized descent field; `λ` shifts it uniformly.
    pub fn bisect_volume_multiplier(
        &self,
        phi: &LevelSetField<T>,
        base: &[T],
        target: f64,
    ) -> Result<(f64, LevelSetField<T>)> {
        let (v0, next0) = self.trial(phi, base, 0.0)?;
        if v0 <= target {
            return Ok((0.0, next0));
        }
        let mut seen = vec![(0.0, v0)];
        let mut hi = 1.0;
        let mut hi_trial = self.trial(phi, base, hi)?;
        seen.push((hi, hi_trial.0));
        let mut doublings = 0;
        while hi_trial.0 > target {
            doublings += 1;
            if doublings > 60 {
                return Err(Error::Bracketing(60));
            }
            hi *= 2.0;
            hi_trial = self.trial(phi, base, hi)?;
            seen.push((hi, hi_trial.0));
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            if hi_trial.0 >= target - 1e-3 || hi - lo < 1e-12 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let t = self.trial(phi, base, mid)?;
            seen.push((mid, t.0));
            if t.0 > target {
                lo = mid;
            } else {
                hi = mid;
                hi_trial = t;
            }
        }
        check_monotone(&mut seen)?;
        Ok((hi, hi_trial.1))
    }

    /// Runs from `state` until a stopping condition. `on_iter` is called
    /// after every completed update.
    pub fn run_from(
        &self,
        mut state: OptimizerState<T>,
        mut on_iter: impl FnMut(&OptimizerState<T>) -> Result<()>,
    ) -> Result<RunResult<T>> {
        let start = Instant::now();
        loop {
            match self.step(&mut state)? {
                StepOutcome::Continue => on_iter(&state)?,
                StepOutcome::Finished(mut status, mut reason, eval) => {
                    let disconnected = !is_connected(&self.mesh, &state.phi);
                    if disconnected && status != RunStatus::Degenerate {
                        status = RunStatus::Degenerate;
                        reason = Some(
                            "design does not connect the fixed boundary to the input port".into(),
                        );
                    }
                    return Ok(RunResult {
                        status,
                        reason,
                        disconnected,
                        state,
                        final_eval: Some(*eval),
                        wall_time: start.elapsed().as_secs_f64(),
                    });
                }
            }
        }
    }

    pub fn run(&self) -> Result<RunResult<T>> {
        self.run_from(self.initial_state()?, |_| Ok(()))
    }
}

/// Trial volumes must not increase with `λ`.
fn check_monotone(trials: &mut [(f64, f64)]) -> Result<()> {
    trials.sort_by(|a, b| a.0.total_cmp(&b.0));
    match trials.windows(2).find(|w| w[1].1 > w[0].1 + 1e-9) {
        Some(w) => Err(Error::NonMonotoneVolume {
            lambda: w[1].0,
            volume: w[1].1,
            previous: w[0].1,
        }),
        None => Ok(()),
    }
}

/// Material elements (mean nodal `φ ≥ 0`) form a path, through shared
/// nodes, from an element on a Fixed edge to one on an Input edge.
pub fn is_connected<T: Scalar>(mesh: &Mesh<T>, phi: &LevelSetField<T>) -> bool {
    let third = T::one() / T::c(3.0);
    let solid: Vec<bool> = mesh
        .triangles
        .iter()
        .map(|t| (phi.values[t[0]] + phi.values[t[1]] + phi.values[t[2]]) * third >= T::zero())
        .collect();
    let mut node_tag = vec![0u8; mesh.node_count()];
    for edge in &mesh.boundary_edges {
        let bit = match edge.tag {
            BoundaryTag::Fixed => 1,
            BoundaryTag::Input => 2,
            _ => 0,
        };
        for &n in &edge.nodes {
            node_tag[n] |= bit;
        }
    }
    let mut node_elems = vec![Vec::new(); mesh.node_count()];
    for (e, t) in mesh.triangles.iter().enumerate() {
        if solid[e] {
            for &n in t {
                node_elems[n].push(e);
            }
        }
    }
    let mut seen = vec![false; mesh.element_count()];
    let mut stack: Vec<usize> = Vec::new();
    for (e, t) in mesh.triangles.iter().enumerate() {
        if solid[e] && t.iter().filter(|&&n| node_tag[n] & 1 != 0).count() >= 2 {
            seen[e] = true;
            stack.push(e);
        }
    }
    while let Some(e) = stack.pop() {
        let t = mesh.triangles[e];
        if t.iter().filter(|&&n| node_tag[n] & 2 != 0).count() >= 2 {
            return true;
        }
        for &n in &t {
            for &f in &node_elems[n] {
                if !seen[f] {
                    seen[f] = true;
                    stack.push(f);
                }
            }
        }
    }
    false
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub condition: String,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    #[serde(rename = "U_o")]
    pub u_o: f64,
    #[serde(rename = "U_i")]
    pub u_i: f64,
    pub ratio: f64,
    pub max_von_mises: f64,
    pub status: String,
}

pub const SWEEP_COLUMNS: [&str; 9] = [
    "condition",
    "alpha",
    "beta",
    "mu",
    "U_o",
    "U_i",
    "ratio",
    "max_von_mises",
    "status",
];

impl SweepRow {
    pub fn from_result<T>(condition: &str, spec: &ProblemSpec, result: &RunResult<T>) -> Self {
        let last = result.last().copied();
        let (u_o, u_i, vm) = last.map_or((f64::NAN, f64::NAN, f64::NAN), |r| {
            (r.u_o, r.u_i, r.max_von_mises)
        });
        Self {
            condition: condition.to_string(),
            alpha: spec.params.alpha,
            beta: spec.params.beta,
            mu: spec.mu,
            u_o,
            u_i,
            ratio: u_o / u_i,
            max_von_mises: vm,
            status: result.status.as_str().to_string(),
        }
    }

    pub fn failed(condition: &str, spec: &ProblemSpec, err: &Error) -> Self {
        let status = match err {
            Error::Degenerate(_) => "Degenerate".to_string(),
            _ => "Error".to_string(),
        };
        Self {
            condition: condition.to_string(),
            alpha: spec.params.alpha,
            beta: spec.params.beta,
            mu: spec.mu,
            u_o: f64::NAN,
            u_i: f64::NAN,
            ratio: f64::NAN,
            max_von_mises: f64::NAN,
            status,
        }
    }
}

/// Runs every condition on the rayon pool; a failing run becomes a row
/// with an error status instead of aborting the sweep.
pub fn sweep<F>(conditions: &[(String, ProblemSpec)], runner: F) -> Result<Vec<SweepRow>>
where
    F: Fn(&str, &ProblemSpec) -> Result<RunResult<f64>> + Sync,
{
    if conditions.is_empty() {
        return Err(Error::InvalidParameter("empty sweep grid".into()));
    }
    Ok(conditions
        .par_iter()
        .map(|(name, spec)| match runner(name, spec) {
            Ok(r) => SweepRow::from_result(name, spec, &r),
            Err(e) => SweepRow::failed(name, spec, &e),
        })
        .collect())
}

/// Density of the zero level, the threshold between void and material.
pub fn interface_density(params: &HeavisideParams) -> f64 {
    heaviside(0.0, params)
}
