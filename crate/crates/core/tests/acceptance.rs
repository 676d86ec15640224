//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use lsmech::cli::run_to_dir;
use lsmech::fem::{FemModel, LoadSpec, Material, PlaneModel};
use lsmech::levelset::LevelSetField;
use lsmech::mesh::{build_structured_mesh, tag_boundaries, BoundaryTag, Port, RectDomain, Side};
use lsmech::objective::{
    compute_e, compute_j, compute_w, init_normalization, ObjectiveParams, PortOperators,
};
use lsmech::optimizer::{ObjectiveKind, Optimizer, ProblemSpec, RunResult, RunStatus};
use lsmech::sensitivity::{
    build_adjoint_rhs_effective_energy, build_adjoint_rhs_pnorm, pnorm_gradient,
    AdjointCoefficients, EnergyTerms,
};
use lsmech::stress::{pnorm_aggregate, StressField, StressParams};

struct Suite {
    passed: usize,
    failed: Vec<String>,
}

impl Suite {
    fn check(&mut self, id: &str, ok: bool, detail: String) {
        println!("{} {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        if ok {
            self.passed += 1;
        } else {
            self.failed.push(id.to_string());
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn initial_structure(s: &mut Suite) {
    let t = Instant::now();
    let opt =
        Optimizer::<f64>::new(ProblemSpec::inverter(400).with_plane(PlaneModel::Strain)).unwrap();
    let (ev, _) = opt
        .evaluate(&LevelSetField::uniform(opt.mesh.node_count(), 1.0))
        .unwrap();
    let inv_time = t.elapsed().as_secs_f64();
    let (uo, ui) = (ev.u_o * 1e6, ev.u_i * 1e6);
    s.check(
        "1a inverter initial structure",
        rel(uo, -0.47) <= 0.05 && rel(ui, 0.86) <= 0.05 && inv_time < 120.0,
        format!(
            "U_o = {uo:.4} um (ref -0.47 +-5%), U_i = {ui:.4} um (ref 0.86 +-5%), {inv_time:.1} s"
        ),
    );

    let t = Instant::now();
    let opt =
        Optimizer::<f64>::new(ProblemSpec::magnifier(200).with_plane(PlaneModel::Strain)).unwrap();
    let (ev, _) = opt
        .evaluate(&LevelSetField::uniform(opt.mesh.node_count(), 1.0))
        .unwrap();
    let mag_time = t.elapsed().as_secs_f64();
    let (uo, ui) = (ev.u_o * 1e6, ev.u_i * 1e6);
    let ratio = uo / ui;
    s.check(
        "1b magnifier initial structure",
        rel(uo, 0.46) <= 0.05 && rel(ui, 0.85) <= 0.05 && rel(ratio, 0.54) <= 0.03 && mag_time < 120.0,
        format!(
            "U_o = {uo:.4} um (ref 0.46 +-5%), U_i = {ui:.4} um (ref 0.85 +-5%), ratio = {ratio:.4} (ref 0.54 +-3%), {mag_time:.1} s"
        ),
    );
}

fn patch_test(s: &mut Suite) {
    let sigma = 3e6;
    let mat = Material::default();
    let loads = LoadSpec {
        traction: [sigma, 0.0],
        ..LoadSpec::default()
    };
    let mut worst: f64 = 0.0;
    for (nx, ny) in [(4, 2), (12, 6), (32, 16)] {
        let d = RectDomain {
            length: 1.0,
            width: 2.0,
            height: 1.0,
            divisions_x: nx,
            divisions_y: ny,
            void_boxes: vec![],
            solid_boxes: vec![],
        };
        let ports = [
            Port::new(Side::Left, 0.0, 1.0, BoundaryTag::Symmetry),
            Port::new(Side::Bottom, 0.0, 2.0, BoundaryTag::Symmetry),
            Port::new(Side::Right, 0.0, 1.0, BoundaryTag::Input),
        ];
        let mesh = tag_boundaries(build_structured_mesh::<f64>(&d).unwrap(), &ports).unwrap();
        let model = FemModel::new(&mesh, mat).unwrap();
        let sys = model
            .assemble_densities(&vec![1.0; mesh.element_count()])
            .unwrap();
        let u = model.solve_state(&sys, &mesh, &loads).unwrap();
        let scale = 2.0 * sigma / mat.youngs_modulus;
        for (n, p) in mesh.nodes.iter().enumerate() {
            let ux = sigma * p[0] / mat.youngs_modulus;
            let uy = -mat.poisson_ratio * sigma * p[1] / mat.youngs_modulus;
            worst = worst
                .max((u[2 * n] - ux).abs() / scale)
                .max((u[2 * n + 1] - uy).abs() / scale);
        }
        for st in model.stresses(&u) {
            worst = worst
                .max((st[0] - sigma).abs() / sigma)
                .max(st[1].abs() / sigma)
                .max(st[2].abs() / sigma);
        }
    }
    s.check(
        "2 uniaxial patch test",
        worst <= 1e-10,
        format!("max relative error {worst:.2e} over 4x2, 12x6, 32x16 (tol 1e-10)"),
    );
}

/// Richardson-extrapolated central difference of `f` along `du`.
fn directional(f: &dyn Fn(&[f64]) -> f64, u: &[f64], du: &[f64], eta: f64) -> (f64, f64) {
    let d = |h: f64| {
        let a: Vec<f64> = u.iter().zip(du).map(|(x, d)| x + h * d).collect();
        let b: Vec<f64> = u.iter().zip(du).map(|(x, d)| x - h * d).collect();
        (f(&a) - f(&b)) / (2.0 * h)
    };
    let (d1, d2) = (d(eta), d(eta / 2.0));
    ((4.0 * d2 - d1) / 3.0, (d2 - d1).abs())
}

fn adjoint_check(s: &mut Suite) {
    let mut spec = ProblemSpec::inverter(20);
    spec.domain.divisions_y = 20;
    let opt = Optimizer::<f64>::new(spec.clone()).unwrap();
    let mesh = &opt.mesh;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let phi = LevelSetField {
        values: (0..mesh.node_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    };
    let (ev, _) = opt.evaluate(&phi).unwrap();
    let full = opt
        .evaluate(&LevelSetField::uniform(mesh.node_count(), 1.0))
        .unwrap()
        .0;
    let ports = PortOperators::new(mesh, &spec.loads);
    let norm = init_normalization(&full.u, mesh, &ports).unwrap();
    let dens = ev.element_density.clone();
    let model = &opt.fem;
    let stress = StressParams {
        p: 4.0,
        ..spec.stress
    };
    let params = ObjectiveParams {
        alpha: 0.5,
        beta: 1.0,
    };
    let mu = 0.3;

    let pnorm = |u: &[f64]| StressField::evaluate(model, u, &dens, &stress).pnorm(stress.p);
    let energy = |u: &[f64]| {
        let j = compute_j(
            compute_w(u, &ports, &norm),
            compute_e(u, &ports, &norm),
            &params,
        )
        .unwrap();
        -j + mu * pnorm(u)
    };

    let u = ev.u.clone();
    let field = StressField::evaluate(model, &u, &dens, &stress);
    let grad = pnorm_gradient(model, &field, &dens, &stress);
    let (w, e) = (compute_w(&u, &ports, &norm), compute_e(&u, &ports, &norm));
    let terms = EnergyTerms {
        w,
        e,
        j: compute_j(w, e, &params).unwrap(),
    };
    let rhs_ee = build_adjoint_rhs_effective_energy(
        &ports,
        &terms,
        &norm,
        &params,
        mu,
        &grad,
        AdjointCoefficients::ChainRule,
    )
    .unwrap();
    let rhs_pn = build_adjoint_rhs_pnorm(&grad);
    let unorm = u.iter().map(|x| x * x).sum::<f64>().sqrt();

    for (id, rhs, f) in [
        (
            "3a adjoint, effective energy",
            &rhs_ee,
            &energy as &dyn Fn(&[f64]) -> f64,
        ),
        (
            "3b adjoint, p-norm",
            &rhs_pn,
            &pnorm as &dyn Fn(&[f64]) -> f64,
        ),
    ] {
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let du: Vec<f64> = (0..u.len())
                .map(|k| {
                    if model.is_constrained(k) {
                        0.0
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect();
            let dn = du.iter().map(|x| x * x).sum::<f64>().sqrt();
            let (fd, _) = directional(f, &u, &du, 1e-3 * unorm / dn);
            let adj: f64 = -rhs.iter().zip(&du).map(|(r, d)| r * d).sum::<f64>();
            worst = worst.max(rel(adj, fd));
        }
        s.check(
            id,
            worst < 1e-6,
            format!("max relative error {worst:.2e} over 20 random directions on 20x20 (tol 1e-6)"),
        );
    }
}

fn pnorm_properties(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ps = [1.0, 2.0, 4.0, 8.0, 16.0];
    let mut monotone = true;
    for _ in 0..100 {
        let n = rng.random_range(10..200);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let areas: Vec<f64> = raw.iter().map(|a| a / total).collect();
        let ratio: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let vals: Vec<f64> = ps
            .iter()
            .map(|&p| pnorm_aggregate(&ratio, &areas, p))
            .collect();
        monotone &= vals.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-14));
    }
    s.check(
        "4a p-norm non-decreasing in p",
        monotone,
        "100 random fields on unit area, p in {1,2,4,8,16}".into(),
    );
    let mut worst: f64 = 0.0;
    for c in [0.0_f64, 0.3, 1.0, 2.5] {
        let areas = vec![0.01; 100];
        for p in ps {
            worst = worst.max((pnorm_aggregate(&vec![c; 100], &areas, p) - c).abs());
        }
    }
    s.check(
        "4b p-norm uniform identity",
        worst <= 1e-12,
        format!("max |pnorm - ratio| = {worst:.1e} (tol 1e-12)"),
    );
}

fn run_all(specs: Vec<ProblemSpec>) -> Vec<(ProblemSpec, RunResult<f64>)> {
    specs
        .into_par_iter()
        .map(|spec| {
            let r = Optimizer::<f64>::new(spec.clone()).unwrap().run().unwrap();
            (spec, r)
        })
        .collect()
}

fn um(r: &RunResult<f64>) -> (f64, f64) {
    let h = r.last().unwrap();
    (h.u_o * 1e6, h.u_i * 1e6)
}

fn describe(runs: &[(ProblemSpec, RunResult<f64>)]) {
    for (spec, r) in runs {
        let h = r.last().unwrap();
        println!(
            "     alpha={} beta={} mu={} p={} {:?}: U_o={:.4} um U_i={:.4} um ratio={:.3} vM={:.2} MPa vol={:.4} {} in {} iters, {:.1} s",
            spec.params.alpha,
            spec.params.beta,
            spec.mu,
            spec.stress.p,
            spec.objective,
            h.u_o * 1e6,
            h.u_i * 1e6,
            h.u_o / h.u_i,
            h.max_von_mises * 1e-6,
            h.volume,
            r.status.as_str(),
            r.state.history.len(),
            r.wall_time
        );
    }
}

fn inverter_trends(s: &mut Suite) -> Vec<(ProblemSpec, RunResult<f64>)> {
    let blocks = [(1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    let mus = [0.0, 0.3, 0.5];
    let mut specs = Vec::new();
    for (a, b) in blocks {
        for mu in mus {
            let mut spec = ProblemSpec::inverter(100);
            spec.params = ObjectiveParams { alpha: a, beta: b };
            spec.mu = mu;
            specs.push(spec);
        }
    }
    let runs = run_all(specs);
    describe(&runs);

    let converged: Vec<_> = runs
        .iter()
        .filter(|(_, r)| r.status == RunStatus::Converged)
        .collect();
    s.check(
        "5a inverter U_o > 0 when converged",
        !converged.is_empty() && converged.iter().all(|(_, r)| um(r).0 > 0.0),
        format!("{} of {} runs converged", converged.len(), runs.len()),
    );

    let mut violations = Vec::new();
    for (k, (a, b)) in blocks.iter().enumerate() {
        let block = &runs[3 * k..3 * k + 3];
        for w in block.windows(2) {
            let (o0, i0) = um(&w[0].1);
            let (o1, i1) = um(&w[1].1);
            if o1 > o0 {
                violations.push(format!(
                    "({a},{b}) U_o {o0:.4}->{o1:.4} at mu {}->{}",
                    w[0].0.mu, w[1].0.mu
                ));
            }
            if i1 > i0 {
                violations.push(format!(
                    "({a},{b}) U_i {i0:.4}->{i1:.4} at mu {}->{}",
                    w[0].0.mu, w[1].0.mu
                ));
            }
        }
    }
    s.check(
        "5b inverter U_o, U_i non-increasing in mu",
        violations.is_empty(),
        if violations.is_empty() {
            "all three (alpha, beta) blocks".into()
        } else {
            violations.join("; ")
        },
    );

    let mut ok = true;
    let mut pairs = Vec::new();
    for m in 0..3 {
        let (o10, _) = um(&runs[m].1);
        let (o01, _) = um(&runs[6 + m].1);
        ok &= o01 > o10;
        pairs.push(format!("mu={}: {o01:.4} vs {o10:.4}", mus[m]));
    }
    s.check("5c inverter U_o(0,1) > U_o(1,0)", ok, pairs.join(", "));

    let slowest = runs.iter().map(|(_, r)| r.wall_time).fold(0.0, f64::max);
    s.check(
        "5d inverter runtime",
        slowest < 900.0,
        format!("slowest run {slowest:.1} s (limit 900 s)"),
    );
    runs
}

fn magnifier_suite(s: &mut Suite) -> Vec<(ProblemSpec, RunResult<f64>)> {
    let mut specs = Vec::new();
    for a in [1.0, 0.5, 0.0] {
        for mu in [0.0, 0.1, 0.3, 0.5] {
            let mut spec = ProblemSpec::magnifier(100);
            spec.params = ObjectiveParams {
                alpha: a,
                beta: 1.0,
            };
            spec.mu = mu;
            specs.push(spec);
        }
    }
    let runs = run_all(specs);
    describe(&runs);

    let good: Vec<_> = runs
        .iter()
        .filter(|(_, r)| r.status == RunStatus::Converged && !r.disconnected)
        .collect();
    let bad: Vec<String> = good
        .iter()
        .filter(|(_, r)| {
            let (o, i) = um(r);
            o / i <= 1.0
        })
        .map(|(sp, r)| {
            format!(
                "alpha={} mu={} ratio {:.3}",
                sp.params.alpha,
                sp.mu,
                um(r).0 / um(r).1
            )
        })
        .collect();
    s.check(
        "6a magnifier U_o/U_i > 1 for converged connected beta=1 runs",
        !good.is_empty() && bad.is_empty(),
        if bad.is_empty() {
            format!(
                "{} of {} runs converged and connected",
                good.len(),
                runs.len()
            )
        } else {
            bad.join("; ")
        },
    );

    let (_, r) = &runs[0];
    s.check(
        "6b magnifier alpha=1 beta=1 mu=0 degenerate",
        r.status == RunStatus::Degenerate || r.disconnected,
        format!(
            "status {}, disconnected = {}",
            r.status.as_str(),
            r.disconnected
        ),
    );
    runs
}

fn lbeam_suite(s: &mut Suite) -> Vec<(ProblemSpec, RunResult<f64>)> {
    let mut specs = Vec::new();
    for p in [2.0, 4.0, 6.0, 8.0] {
        let mut spec = ProblemSpec::lbeam(100);
        spec.stress.p = p;
        specs.push(spec);
    }
    let mut comp = ProblemSpec::lbeam(100);
    comp.objective = ObjectiveKind::Compliance;
    specs.push(comp);
    let runs = run_all(specs);
    describe(&runs);

    let vm: Vec<f64> = runs
        .iter()
        .map(|(_, r)| r.last().unwrap().max_von_mises * 1e-6)
        .collect();
    let comp_vm = vm[4];
    s.check(
        "7a L-beam p=8 max stress below compliance design",
        vm[3] < comp_vm,
        format!("{:.2} MPa vs {:.2} MPa", vm[3], comp_vm),
    );
    s.check(
        "7b L-beam max stress non-increasing in p",
        vm[..4].windows(2).all(|w| w[1] <= w[0]),
        format!(
            "p=2,4,6,8: {:.2}, {:.2}, {:.2}, {:.2} MPa",
            vm[0], vm[1], vm[2], vm[3]
        ),
    );
    let ratio = vm[3] / comp_vm;
    s.check(
        "7c L-beam p=8 / compliance ratio <= 0.6",
        ratio <= 0.6,
        format!("ratio {ratio:.3}"),
    );
    let slowest = runs.iter().map(|(_, r)| r.wall_time).fold(0.0, f64::max);
    s.check(
        "7d L-beam runtime",
        slowest < 1200.0,
        format!("slowest run {slowest:.1} s (limit 1200 s)"),
    );
    runs
}

fn volume_feasibility(s: &mut Suite, runs: &[(ProblemSpec, RunResult<f64>)]) {
    let converged: Vec<_> = runs
        .iter()
        .filter(|(_, r)| r.status == RunStatus::Converged)
        .collect();
    let worst = converged
        .iter()
        .map(|(sp, r)| r.last().unwrap().volume - sp.volume_max)
        .fold(f64::NEG_INFINITY, f64::max);
    s.check(
        "8 volume feasibility",
        converged
            .iter()
            .all(|(sp, r)| r.last().unwrap().volume <= sp.volume_max + 0.01),
        format!(
            "{} converged runs, max excess over V_max {worst:.4} (tol 0.01)",
            converged.len()
        ),
    );
}

fn determinism(s: &mut Suite) {
    let mut spec = ProblemSpec::inverter(40);
    spec.mu = 0.3;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_to_dir(&spec, a.path(), None, 1, false).unwrap();
    run_to_dir(&spec, b.path(), None, 1, false).unwrap();
    let ha = std::fs::read(a.path().join("history.csv")).unwrap();
    let hb = std::fs::read(b.path().join("history.csv")).unwrap();
    s.check(
        "9 determinism",
        !ha.is_empty() && ha == hb,
        format!("history.csv {} bytes, identical = {}", ha.len(), ha == hb),
    );
}

fn main() -> ExitCode {
    let mut s = Suite {
        passed: 0,
        failed: Vec::new(),
    };
    initial_structure(&mut s);
    patch_test(&mut s);
    adjoint_check(&mut s);
    pnorm_properties(&mut s);
    let mut runs = inverter_trends(&mut s);
    runs.extend(magnifier_suite(&mut s));
    runs.extend(lbeam_suite(&mut s));
    volume_feasibility(&mut s, &runs);
    determinism(&mut s);

    println!("acceptance: {} passed, {} failed", s.passed, s.failed.len());
    if s.failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", s.failed.join(", "));
        ExitCode::FAILURE
    }
}
