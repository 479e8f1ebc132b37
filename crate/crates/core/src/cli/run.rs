//! Executes a manifest's tasks in order, feeding results forward.

use crate::dirac::{build_dirac, dirac_hamiltonian_check, invert_symplectic, verify_dirac_with};
use crate::error::Error;
use crate::expr::ScalarExpr;
use crate::exterior::{Form, Multivector, VolumeForm};
use crate::foliation::{
    check_integrability, connection_matrix, default_generator_change, default_tangent_perturbations, delta_form,
    delta_wellposedness_suite, dual_frame, frame_annihilates, frame_duality_check, obstruction_certificate, DualFrame,
    FoliationPresentation,
};
use crate::poisson::{
    check_compatible, constant_multiple, jacobi_residual, modular_class_check, modular_field_for,
    modular_rescale_check, modular_suite, normalize_compatible, poisson_from_compatible, transversally_constant_check,
    unimodular_certificate, PoissonStructure,
};
use crate::verify::{probe_functions, CheckResult, Sampler, DEFAULT_EXTRA_PROBES};

use super::geometry::Geometry;
use super::manifest::{Manifest, TaskSpec};
use super::report::{ReportDocument, TaskReport};

type Outcome = Result<Vec<CheckResult>, Error>;

struct Runner<'a> {
    m: &'a Manifest,
    sampler: Sampler,
    probes: Vec<ScalarExpr>,
    foliation: Option<FoliationPresentation>,
    frame: Option<DualFrame>,
    delta: Option<Form>,
    poisson: Option<PoissonStructure>,
    /// The two-form the last Poisson structure was built from.
    omega: Option<Form>,
}

/// Run every task of a validated manifest.
pub fn run_manifest(m: &Manifest) -> ReportDocument {
    let sampler = Sampler::new(m.region.clone(), m.sampling);
    let mut runner = Runner {
        m,
        probes: probe_functions(m.coords.dim(), DEFAULT_EXTRA_PROBES, m.sampling.seed),
        sampler,
        foliation: None,
        frame: None,
        delta: None,
        poisson: None,
        omega: None,
    };
    let tasks = m
        .tasks
        .iter()
        .map(|task| match runner.run(task) {
            Ok(checks) => TaskReport::new(task.name(), checks, None),
            Err(Error::VerificationFailed(c)) | Err(Error::JacobiFailed(c)) => {
                let msg = format!("verification `{}` failed", c.name);
                TaskReport::new(task.name(), vec![*c], Some(msg))
            }
            Err(e) => TaskReport::new(task.name(), Vec::new(), Some(e.to_string())),
        })
        .collect();
    ReportDocument::new(m.sha256.clone(), m.sampling, tasks)
}

impl Runner<'_> {
    fn foliation(&mut self) -> Result<FoliationPresentation, Error> {
        if self.foliation.is_none() {
            let gens = self.m.foliation.clone().expect("validated: foliation present");
            self.foliation = Some(FoliationPresentation::new(&self.m.coords, gens, self.sampler.clone())?);
        }
        Ok(self.foliation.clone().expect("just set"))
    }

    fn frame(&mut self) -> Result<DualFrame, Error> {
        if self.frame.is_none() {
            let fol = self.foliation()?;
            self.frame = Some(dual_frame(&fol)?);
        }
        Ok(self.frame.clone().expect("just set"))
    }

    fn delta(&mut self) -> Result<(Form, Vec<CheckResult>), Error> {
        let fol = self.foliation()?;
        let frame = self.frame()?;
        let d = delta_form(&fol, &frame)?;
        self.delta = Some(d.delta.clone());
        Ok((d.delta, d.checks))
    }

    fn cached_delta(&mut self) -> Result<Form, Error> {
        match &self.delta {
            Some(d) => Ok(d.clone()),
            None => Ok(self.delta()?.0),
        }
    }

    fn volume(&self) -> Result<Option<VolumeForm>, Error> {
        self.m
            .volume
            .clone()
            .map(|v| VolumeForm::certify(v, &self.sampler))
            .transpose()
    }

    /// The named bivector with the manifest volume (Euclidean if absent),
    /// or the structure built earlier.
    fn structure(&self, bivector: Option<&String>) -> Result<PoissonStructure, Error> {
        match bivector {
            Some(name) => {
                let pi = self.m.multivector_named(name, 2, "").expect("validated");
                let vol = self.volume()?.unwrap_or_else(|| VolumeForm::euclidean(&self.m.coords));
                PoissonStructure::from_bivector(pi, vol, self.sampler.clone())
            }
            None => Ok(self.poisson.clone().expect("validated: build-poisson ran")),
        }
    }

    fn run(&mut self, task: &TaskSpec) -> Outcome {
        let s = self.sampler.clone();
        match task {
            TaskSpec::CheckFoliation {} => {
                let fol = self.foliation()?;
                let integrability = check_integrability(&fol);
                if !integrability.passed() {
                    return Ok(vec![integrability]);
                }
                let frame = self.frame()?;
                let duality = frame_duality_check(&fol, &frame);
                let g = connection_matrix(&fol, &frame)?;
                Ok(vec![integrability, duality, g.check])
            }
            TaskSpec::Delta { expect } => {
                let (delta, mut checks) = self.delta()?;
                let fol = self.foliation()?;
                let frame = self.frame()?;
                let change = default_generator_change(&fol);
                let tangent = default_tangent_perturbations(&fol, &frame);
                checks.extend(delta_wellposedness_suite(&fol, &change, &tangent)?.checks);
                if let Some(e) = expect {
                    let expected = self.form_text(e)?;
                    checks.push(s.check_zero("delta = expected", &delta.try_sub(&expected)?));
                }
                Ok(checks)
            }
            TaskSpec::ObstructionCertificate { certificate } => {
                let h = self.m.function_named(certificate, "").expect("validated");
                let fol = self.foliation()?;
                let delta = self.cached_delta()?;
                let cert = obstruction_certificate(&fol, &delta, &h)?;
                Ok(std::iter::once(cert.check).chain(cert.closed).collect())
            }
            TaskSpec::CheckCompatible { two_form } => {
                let omega = self.m.task_two_form(two_form.as_ref(), "").expect("validated");
                let fol = self.foliation()?;
                Ok(check_compatible(&omega, &fol)?.checks())
            }
            TaskSpec::BuildPoisson {
                two_form,
                normalize,
                proportional_to,
            } => {
                let mut omega = self.m.task_two_form(two_form.as_ref(), "").expect("validated");
                let fol = self.foliation()?;
                let mut checks = Vec::new();
                if *normalize {
                    let frame = self.frame()?;
                    omega = normalize_compatible(&omega, &fol, &frame)?;
                    checks.push(frame_annihilates(&fol, &frame, &omega)?.renamed("i_X omega~ = 0"));
                }
                let p = poisson_from_compatible(&fol, &omega)?;
                checks.extend(p.construction_checks().iter().cloned());
                if let Some(name) = proportional_to {
                    let target = self.m.multivector_named(name, 2, "").expect("validated");
                    checks.push(constant_multiple(p.pi(), &target, &s).0);
                }
                self.poisson = Some(p);
                self.omega = Some(omega);
                Ok(checks)
            }
            TaskSpec::Jacobi { bivector } => {
                let p = self.structure(bivector.as_ref())?;
                Ok(jacobi_residual(&p, &self.probes).checks())
            }
            TaskSpec::Modular {
                bivector,
                rescale,
                expect,
            } => {
                let p = self.structure(bivector.as_ref())?;
                let vol = match self.volume()? {
                    Some(v) => v,
                    None => p.volume().clone(),
                };
                let mut checks = modular_suite(&p, &vol, &self.probes)?.checks;
                if let Some(h) = rescale {
                    let h = self.m.function_named(h, "").expect("validated");
                    checks.push(modular_rescale_check(&p, &vol, &h)?);
                }
                if let Some(e) = expect {
                    let expected = self.vector_text(e)?;
                    let z = modular_field_for(&p, &vol)?;
                    checks.push(s.check_zero("Z = expected", &z.try_sub(&expected)?));
                }
                Ok(checks)
            }
            TaskSpec::UnimodularCertificate { certificate } => {
                let h = self.m.function_named(certificate, "").expect("validated");
                let fol = self.foliation()?;
                let delta = self.cached_delta()?;
                let p = self.structure(None)?;
                let mut checks = unimodular_certificate(&p, &fol, &delta, &h, &self.probes)?.checks;
                checks.push(modular_class_check(&p, &fol, &delta)?);
                Ok(checks)
            }
            TaskSpec::TransversallyConstant {} => {
                let fol = self.foliation()?;
                let frame = self.frame()?;
                let p = self.structure(None)?;
                let omega = self.omega.clone().expect("set by build-poisson");
                Ok(transversally_constant_check(&p, &fol, &frame, &omega, &self.probes)?.checks)
            }
            TaskSpec::Dirac { constraints, two_form } => {
                let omega = self.m.task_two_form(two_form.as_ref(), "").expect("validated");
                let g: Vec<ScalarExpr> = constraints
                    .iter()
                    .map(|c| self.m.function_named(c, "").expect("validated"))
                    .collect();
                let sym = invert_symplectic(&omega, &s)?;
                let mut checks = vec![sym.inverse_check.clone()];
                let d = build_dirac(&sym, &g)?;
                checks.extend(d.delta_checks());
                checks.extend(verify_dirac_with(&d, &self.probes)?.checks);
                let routes: Vec<CheckResult> = self.probes.iter().map(|f| dirac_hamiltonian_check(&d, f)).collect();
                checks.push(CheckResult::merge("X_f^DIR routes agree", &routes));
                Ok(checks)
            }
            TaskSpec::CustomZeroCheck { expr, name } => {
                let g = self.m.geometry(expr, "").expect("validated");
                let label = name.clone().unwrap_or_else(|| format!("{expr} = 0"));
                Ok(vec![match g {
                    Geometry::Scalar(e) => s.check_zero(&label, &e),
                    Geometry::Form(f) => s.check_zero(&label, &f),
                    Geometry::Multivector(v) => s.check_zero(&label, &v),
                }])
            }
        }
    }

    fn form_text(&self, text: &str) -> Result<Form, Error> {
        let g = self.m.geometry(text, "").expect("validated");
        g.into_form(&self.m.coords)
            .ok_or_else(|| Error::DimensionMismatch(format!("`{text}` is not a form")))
    }

    fn vector_text(&self, text: &str) -> Result<Multivector, Error> {
        let g = self.m.geometry(text, "").expect("validated");
        g.into_multivector(&self.m.coords)
            .ok_or_else(|| Error::DimensionMismatch(format!("`{text}` is not a multivector")))
    }
}
