//! Acceptance suite: one PASS/FAIL line per criterion, followed by the
//! measurements behind it.
//!
//! Criterion 1 contains the derivation law `D[A,B] = [DA,B] + [A,DB]` taken
//! literally. Under the fixed trace operator and bracket normalization it
//! holds only when `deg B` is even, so the criterion is reported as FAIL. That
//! outcome is expected and does not fail the run; any other criterion failing,
//! or criterion 1 failing for a different reason, does.

mod common;

use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use common::{coords, field, rng};
use foliation_poisson::dirac::{build_dirac, dirac_hamiltonian, invert_symplectic, verify_dirac};
use foliation_poisson::exterior::{exterior_derivative, schouten, trace_operator, Contravariant, Covariant};
use foliation_poisson::foliation::{
    check_integrability, default_generator_change, default_tangent_perturbations, delta_form,
    delta_wellposedness_suite, dual_frame, frame_duality_check, obstruction_certificate, FoliationPresentation,
};
use foliation_poisson::poisson::{
    constant_multiple, jacobi_residual, modular_field_for, poisson_from_compatible, transversally_constant_check,
    unimodular_certificate, PoissonStructure,
};
use foliation_poisson::verify::{probe_functions, CheckResult, DEFAULT_EXTRA_PROBES};
use foliation_poisson::{
    parse_scalar, CoordinateSystem, Form, Multivector, SampleBox, Sampler, ScalarExpr, VolumeForm,
};

const SAMPLES_PER_DEGREE: usize = 20;

/// Outcome of one criterion.
struct Verdict {
    passed: bool,
    lines: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Verdict {
            passed: true,
            lines: Vec::new(),
        }
    }

    /// Record a requirement; `ok` decides it, `detail` explains it.
    fn require(&mut self, ok: bool, detail: impl Into<String>) -> bool {
        self.passed &= ok;
        self.lines
            .push(format!("{} {}", if ok { "ok  " } else { "MISS" }, detail.into()));
        ok
    }

    fn note(&mut self, detail: impl Into<String>) {
        self.lines.push(format!("     {}", detail.into()));
    }

    /// PASS status and a residual at most `bound`.
    fn check(&mut self, label: &str, c: &CheckResult, bound: f64) -> bool {
        let ok = c.passed() && c.max_abs_residual <= bound;
        self.require(
            ok,
            format!(
                "{label}: {} residual {:.3e} (bound {bound:e}, {} points)",
                c.status.as_str(),
                c.max_abs_residual,
                c.points_used
            ),
        )
    }
}

fn sign(n: usize) -> ScalarExpr {
    ScalarExpr::constant(if n.is_multiple_of(2) { 1.0 } else { -1.0 })
}

fn cube(m: usize, lo: f64, hi: f64) -> Sampler {
    Sampler::with_defaults(SampleBox::cube(m, lo, hi).unwrap())
}

fn named(names: &[&str]) -> Arc<CoordinateSystem> {
    Arc::new(CoordinateSystem::new(names.iter().copied()).unwrap())
}

fn form(text: &str, c: &Arc<CoordinateSystem>) -> Form {
    foliation_poisson::cli::parse_geometry(text, c)
        .unwrap()
        .into_form(c)
        .unwrap()
}

fn bivector(text: &str, c: &Arc<CoordinateSystem>) -> Multivector {
    foliation_poisson::cli::parse_geometry(text, c)
        .unwrap()
        .into_multivector(c)
        .unwrap()
}

/// Largest residual over a family of checks together with whether all passed
/// within `bound`.
#[derive(Default)]
struct Tally {
    cases: usize,
    failures: usize,
    worst: f64,
    odd_failures: usize,
    even_failures: usize,
}

impl Tally {
    fn add(&mut self, c: &CheckResult, bound: f64, odd: bool) {
        self.cases += 1;
        self.worst = self.worst.max(c.max_abs_residual);
        if !(c.passed() && c.max_abs_residual <= bound) {
            self.failures += 1;
            if odd {
                self.odd_failures += 1;
            } else {
                self.even_failures += 1;
            }
        }
    }

    fn summary(&self) -> String {
        format!(
            "{}/{} cases within bound, worst residual {:.3e}",
            self.cases - self.failures,
            self.cases,
            self.worst
        )
    }
}

fn criterion_1() -> (Verdict, bool) {
    let start = Instant::now();
    let mut v = Verdict::new();
    let (mut dd, mut trace_sq, mut leibniz, mut literal, mut graded) = (
        Tally::default(),
        Tally::default(),
        Tally::default(),
        Tally::default(),
        Tally::default(),
    );
    for m in 3..=5 {
        let c = coords(m);
        let s = cube(m, -1.0, 1.0);
        let full: Vec<usize> = (0..m).collect();
        let vol = VolumeForm::certify(Form::monomial(&c, &full, parse_scalar("2 + x1**2", &c).unwrap()), &s).unwrap();
        let mut r = rng(1000 + m as u64);
        for q in 0..=m - 2 {
            for _ in 0..SAMPLES_PER_DEGREE {
                let beta: Form = field::<Covariant>(&mut r, &c, q);
                let res = exterior_derivative(&exterior_derivative(&beta));
                dd.add(&s.check_zero("d d", &res), 1e-8, false);
            }
        }
        for p in 2..=m {
            for _ in 0..SAMPLES_PER_DEGREE {
                let a: Multivector = field::<Contravariant>(&mut r, &c, p);
                let res = trace_operator(&trace_operator(&a, &vol).unwrap(), &vol).unwrap();
                trace_sq.add(&s.check_zero("D D", &res), 1e-8, false);
            }
        }
        for ra in 1..m {
            for kb in 1..=m - ra {
                for _ in 0..SAMPLES_PER_DEGREE {
                    let a: Multivector = field::<Contravariant>(&mut r, &c, ra);
                    let b: Multivector = field::<Contravariant>(&mut r, &c, kb);
                    let lhs = trace_operator(&a.wedge(&b).unwrap(), &vol).unwrap();
                    let rhs = trace_operator(&a, &vol)
                        .unwrap()
                        .wedge(&b)
                        .unwrap()
                        .scaled(&sign(kb))
                        .plus(&a.wedge(&trace_operator(&b, &vol).unwrap()).unwrap())
                        .plus(&schouten(&a, &b).unwrap().scaled(&sign(ra + kb + 1)));
                    leibniz.add(&s.check_zero("Leibniz", &lhs.minus(&rhs)), 1e-8, false);
                }
            }
        }
        for ra in 1..=m {
            for kb in 1..=(m + 1 - ra).min(m) {
                for _ in 0..SAMPLES_PER_DEGREE {
                    let a: Multivector = field::<Contravariant>(&mut r, &c, ra);
                    let b: Multivector = field::<Contravariant>(&mut r, &c, kb);
                    let lhs = trace_operator(&schouten(&a, &b).unwrap(), &vol).unwrap();
                    let da_b = schouten(&trace_operator(&a, &vol).unwrap(), &b).unwrap();
                    let a_db = schouten(&a, &trace_operator(&b, &vol).unwrap()).unwrap();
                    let odd = kb % 2 == 1;
                    literal.add(&s.check_zero("derivation", &lhs.minus(&da_b.plus(&a_db))), 1e-8, odd);
                    let corrected = lhs.minus(&da_b.scaled(&sign(kb)).plus(&a_db));
                    graded.add(&s.check_zero("graded derivation", &corrected), 1e-8, odd);
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    v.require(dd.failures == 0, format!("d d = 0: {}", dd.summary()));
    v.require(trace_sq.failures == 0, format!("D D = 0: {}", trace_sq.summary()));
    v.require(
        leibniz.failures == 0,
        format!("D(A^B) Leibniz law: {}", leibniz.summary()),
    );
    v.require(
        literal.failures == 0,
        format!("D[A,B] = [DA,B] + [A,DB] literally: {}", literal.summary()),
    );
    v.note(format!(
        "literal derivation failures: {} with deg B odd, {} with deg B even",
        literal.odd_failures, literal.even_failures
    ));
    v.note(format!(
        "graded form D[A,B] = (-1)^b [DA,B] + [A,DB]: {}",
        graded.summary()
    ));
    v.require(elapsed <= 60.0, format!("runtime {elapsed:.2} s (limit 60 s)"));
    // the one expected miss: the literal law, failing only for odd deg B
    let expected = dd.failures == 0
        && trace_sq.failures == 0
        && leibniz.failures == 0
        && graded.failures == 0
        && literal.even_failures == 0
        && literal.odd_failures > 0
        && elapsed <= 60.0;
    (v, expected)
}

struct Catalog {
    name: &'static str,
    fol: FoliationPresentation,
    omega: Form,
}

fn catalog() -> Vec<Catalog> {
    let r3 = named(&["x1", "x2", "x3"]);
    let r4 = named(&["x1", "x2", "x3", "y"]);
    let x1_box = Sampler::with_defaults(SampleBox::new(vec![(1.0, 2.0), (-1.0, 1.0), (-1.0, 1.0)]).unwrap());
    vec![
        Catalog {
            name: "dx3 on R^3",
            fol: FoliationPresentation::new(&r3, vec![form("dx3", &r3)], cube(3, -1.0, 1.0)).unwrap(),
            omega: form("dx1^dx2", &r3),
        },
        Catalog {
            name: "x1 dx2 on x1 in [1,2]",
            fol: FoliationPresentation::new(&r3, vec![form("x1*dx2", &r3)], x1_box).unwrap(),
            omega: form("dx1^dx3", &r3),
        },
        Catalog {
            name: "(dx3, dx1 + dy) on R^4",
            fol: FoliationPresentation::new(&r4, vec![form("dx3", &r4), form("dx1 + dy", &r4)], cube(4, -1.0, 1.0))
                .unwrap(),
            omega: form("dx1^dx2 + dx2^dy", &r4),
        },
    ]
}

fn find<'a>(checks: &'a [CheckResult], name: &str) -> &'a CheckResult {
    checks
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("no check named {name}"))
}

fn criterion_2() -> Verdict {
    let mut v = Verdict::new();
    for entry in catalog() {
        let fol = &entry.fol;
        v.check(
            &format!("[{}] integrability", entry.name),
            &check_integrability(fol),
            1e-8,
        );
        let frame = dual_frame(fol).unwrap();
        v.check(
            &format!("[{}] frame duality", entry.name),
            &frame_duality_check(fol, &frame),
            1e-9,
        );
        let delta = delta_form(fol, &frame).unwrap();
        v.check(
            &format!("[{}] d mu + delta ^ mu", entry.name),
            find(&delta.checks, "d mu + delta ^ mu"),
            1e-8,
        );
        v.check(
            &format!("[{}] d delta ^ mu", entry.name),
            find(&delta.checks, "d delta ^ mu"),
            1e-8,
        );
        let change = default_generator_change(fol);
        let tangent = default_tangent_perturbations(fol, &frame);
        let suite = delta_wellposedness_suite(fol, &change, &tangent).unwrap();
        let worst = CheckResult::merge("well-posedness", &suite.checks);
        v.check(
            &format!("[{}] delta well-posedness ({} checks)", entry.name, suite.checks.len()),
            &worst,
            1e-8,
        );
        if entry.name.starts_with("x1") {
            let h = parse_scalar("-ln(x1)", fol.coords()).unwrap();
            let cert = obstruction_certificate(fol, &delta.delta, &h).unwrap();
            v.check("[x1 dx2] certificate (dh - delta) ^ mu, h = -ln x1", &cert.check, 1e-8);
            match &cert.closed {
                Some(closed) => v.check("[x1 dx2] rescaled mu~ closed", closed, 1e-12),
                None => v.require(false, "[x1 dx2] rescaled mu~ closedness was not evaluated"),
            };
        }
    }
    v
}

fn criterion_3() -> Verdict {
    let mut v = Verdict::new();
    for entry in catalog() {
        let p = match poisson_from_compatible(&entry.fol, &entry.omega) {
            Ok(p) => p,
            Err(e) => {
                v.require(false, format!("[{}] construction error: {e}", entry.name));
                continue;
            }
        };
        let checks = p.construction_checks();
        v.check(
            &format!("[{}] i_Pi Omega = r mu ^ omega^(r-1)", entry.name),
            find(checks, "i_Pi Omega - r mu ^ omega^(r-1)"),
            1e-9,
        );
        v.check(
            &format!("[{}] Pi^#(alpha_i) = 0", entry.name),
            find(checks, "Pi^#(alpha) = 0"),
            1e-9,
        );
        let probes = probe_functions(p.coords().dim(), DEFAULT_EXTRA_PROBES, 42);
        let jacobi = jacobi_residual(&p, &probes);
        v.check(&format!("[{}] Jacobi via Schouten", entry.name), &jacobi.schouten, 1e-8);
        v.check(&format!("[{}] Jacobi via forms", entry.name), &jacobi.forms, 1e-8);
    }
    v
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut v = Verdict::new();
    let entry = catalog().pop().unwrap();
    let c = entry.fol.coords().clone();
    let p = poisson_from_compatible(&entry.fol, &entry.omega).unwrap();
    let target = bivector("d_x1^d_x2 + d_x2^d_y", &c);
    let (check, lambda) = constant_multiple(p.pi(), &target, p.sampler());
    v.check("Pi = lambda (d_x1^d_x2 + d_x2^d_y), variation of lambda", &check, 1e-9);
    v.note(format!(
        "lambda = {}",
        lambda.map_or("undefined".into(), |l| l.to_string())
    ));
    let z = modular_field_for(&p, p.volume()).unwrap();
    v.check("modular field = 0", &p.sampler().check_zero("Z", &z), 1e-9);
    let frame = dual_frame(&entry.fol).unwrap();
    let probes = probe_functions(4, DEFAULT_EXTRA_PROBES, 42);
    let suite = transversally_constant_check(&p, &entry.fol, &frame, &entry.omega, &probes).unwrap();
    let all = suite.checks.iter().all(CheckResult::passed);
    v.require(
        all,
        format!(
            "transversally constant: {} checks, all PASS = {all}",
            suite.checks.len()
        ),
    );
    let elapsed = start.elapsed().as_secs_f64();
    v.require(elapsed <= 5.0, format!("runtime {elapsed:.2} s (limit 5 s)"));
    v
}

fn criterion_5() -> Verdict {
    let mut v = Verdict::new();
    let c = named(&["q1", "q2", "p1", "p2"]);
    let s = cube(4, -1.0, 1.0);
    let omega = form("dq1^dp1 + dq2^dp2", &c);
    let sym = invert_symplectic(&omega, &s).unwrap();

    let canonical = build_dirac(&sym, &[ScalarExpr::var(1), ScalarExpr::var(3)]).unwrap();
    let off_block = Multivector::from_terms(
        &c,
        2,
        canonical
            .pi_dirac
            .terms()
            .filter(|(k, _)| k.as_slice() != [0, 2])
            .map(|(k, e)| (k.clone(), e.clone())),
    );
    v.check(
        "[canonical] off-block coefficients of Pi^DIR",
        &s.check_zero_within("off block", &off_block, 1e-12),
        1e-12,
    );
    let block = canonical.pi_dirac.coeff(&[0, 2]);
    v.note(format!("(q1,p1) coefficient: {}", block.display(&c)));
    for (i, g) in canonical.constraints.iter().enumerate() {
        let x = dirac_hamiltonian(&canonical, g);
        v.check(
            &format!("[canonical] X^DIR_g{}", i + 1),
            &s.check_zero_within("X_g", &x, 1e-12),
            1e-12,
        );
    }
    let suite = verify_dirac(&canonical).unwrap();
    v.check(
        "[canonical] mu ^ (omega^DIR)^r = mu ^ omega_0^r",
        find(&suite.checks, "mu ^ (omega^DIR)^r = mu ^ omega_0^r"),
        1e-12,
    );
    v.check(
        "[canonical] [Pi^DIR, Z_i]",
        find(&suite.checks, "[Pi^DIR, Z] = 0"),
        1e-9,
    );
    v.check(
        "[canonical] route cross-check",
        find(&suite.checks, "Pi^DIR = Pi from compatible pair"),
        1e-8,
    );

    let g2 = parse_scalar("p2*(1 + q1**2)", &c).unwrap();
    let variable = build_dirac(&sym, &[ScalarExpr::var(1), g2]).unwrap();
    let suite = verify_dirac(&variable).unwrap();
    v.require(
        suite.checks.len() == 7,
        format!("[variable] verify_dirac reports {} checks", suite.checks.len()),
    );
    for check in &suite.checks {
        v.check(&format!("[variable] {}", check.name), check, 1e-8);
    }
    v
}

fn criterion_6() -> Verdict {
    let mut v = Verdict::new();
    let xyz = named(&["x", "y", "z"]);
    let contact = FoliationPresentation::new(&xyz, vec![form("dz - y*dx", &xyz)], cube(3, -1.0, 1.0)).unwrap();
    let c = check_integrability(&contact);
    v.require(
        !c.passed() && c.max_abs_residual >= 0.5,
        format!(
            "contact form: {} residual {:.3e} (need FAIL, >= 0.5)",
            c.status.as_str(),
            c.max_abs_residual
        ),
    );

    let r4 = coords(4);
    let pi = bivector("d_x1^d_x2 + x1*d_x3^d_x4", &r4);
    match PoissonStructure::from_bivector(pi, VolumeForm::euclidean(&r4), cube(4, -1.0, 1.0)) {
        Ok(p) => {
            let j = jacobi_residual(&p, &probe_functions(4, DEFAULT_EXTRA_PROBES, 42));
            v.require(
                !j.schouten.passed() && !j.forms.passed(),
                format!(
                    "d_1^d_2 + x1 d_3^d_4: Schouten {} ({:.3e}), forms {} ({:.3e})",
                    j.schouten.status.as_str(),
                    j.schouten.max_abs_residual,
                    j.forms.status.as_str(),
                    j.forms.max_abs_residual
                ),
            );
        }
        Err(e) => {
            v.require(false, format!("non-Poisson bivector errored instead of failing: {e}"));
        }
    }

    let entry = catalog().remove(1);
    let p = poisson_from_compatible(&entry.fol, &entry.omega).unwrap();
    let frame = dual_frame(&entry.fol).unwrap();
    let delta = delta_form(&entry.fol, &frame).unwrap().delta;
    let probes = probe_functions(3, DEFAULT_EXTRA_PROBES, 42);
    match unimodular_certificate(&p, &entry.fol, &delta, &ScalarExpr::zero(), &probes) {
        Ok(suite) => {
            let failed: Vec<&str> = suite
                .checks
                .iter()
                .filter(|c| !c.passed())
                .map(|c| c.name.as_str())
                .collect();
            v.require(
                !suite.passed(),
                format!("h = 0 on x1 dx2: {} (failing: {failed:?})", suite.status().as_str()),
            );
        }
        Err(e) => {
            v.require(false, format!("h = 0 certificate errored instead of failing: {e}"));
        }
    }
    v
}

fn manifests() -> Vec<PathBuf> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../manifests");
    let mut out = Vec::new();
    for dir in [root.clone(), root.join("negative")] {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "json") {
                out.push(path);
            }
        }
    }
    out.sort();
    out
}

fn criterion_7() -> Verdict {
    let mut v = Verdict::new();
    let dir = std::env::temp_dir().join(format!("fp-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for path in manifests() {
        let mut reports = Vec::new();
        for run in 0..2 {
            let out = dir.join(format!("report{run}.json"));
            let _ = std::fs::remove_file(&out);
            let status = Command::new(env!("CARGO_BIN_EXE_foliation-poisson"))
                .args([
                    "run",
                    path.to_str().unwrap(),
                    "--format",
                    "json",
                    "--out",
                    out.to_str().unwrap(),
                ])
                .output()
                .unwrap()
                .status;
            reports.push((status.code(), std::fs::read(&out).ok()));
        }
        let name = path.file_name().unwrap().to_string_lossy();
        let same = reports[0] == reports[1];
        let detail = match &reports[0] {
            (code, Some(bytes)) => format!("exit {code:?}, {} bytes", bytes.len()),
            (code, None) => format!("exit {code:?}, no report (configuration error)"),
        };
        v.require(same, format!("{name}: identical across runs = {same} ({detail})"));
    }
    let _ = std::fs::remove_dir_all(&dir);
    v
}

fn main() {
    let titles = [
        "operator calculus (d d, D D, Leibniz law, derivation law)",
        "foliation catalog (duality, delta, well-posedness, certificate)",
        "Poisson construction from a compatible pair",
        "R^4 worked example (proportional Pi, unimodular, transversally constant)",
        "Dirac bracket reproduction",
        "negative controls",
        "determinism of reports",
    ];
    let (c1, c1_as_expected) = criterion_1();
    let verdicts = [
        c1,
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
    ];
    let mut unexpected = Vec::new();
    for (i, (v, title)) in verdicts.iter().zip(titles).enumerate() {
        println!(
            "criterion {}: {}  {title}",
            i + 1,
            if v.passed { "PASS" } else { "FAIL" }
        );
        for line in &v.lines {
            println!("    {line}");
        }
        let expected = if i == 0 { c1_as_expected } else { v.passed };
        if !expected {
            unexpected.push(i + 1);
        }
    }
    let passed = verdicts.iter().filter(|v| v.passed).count();
    println!("\n{passed}/{} criteria PASS", verdicts.len());
    if verdicts[0].passed {
        println!("criterion 1 passed although the literal derivation law was expected to fail");
    } else if c1_as_expected {
        println!("criterion 1 FAIL is the expected outcome: the literal derivation law holds only for even deg B");
    }
    if !unexpected.is_empty() {
        println!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
