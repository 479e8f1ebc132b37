//! Regular Poisson structures built from forms compatible with a foliation.
//!
//! Given generators with product `mu` and a two-form `omega` such that
//! `d omega ^ mu = 0` and `Omega_omega = mu ^ omega^r` is a volume form
//! (`r` half the leaf dimension), the bivector `Pi` is the unique solution of
//! `i_Pi Omega_omega = r mu ^ omega^(r-1)`. Hamiltonian fields follow
//! `X_f = Pi^#(df)` so that `{f, g} = Pi(df, dg) = X_f(g)`.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::expr::{CoordinateSystem, ScalarExpr};
use crate::exterior::{
    contract_into_volume, differential, directional, divergence, exterior_derivative, interior, lie_derivative,
    schouten, sharp, solve_contraction, trace_operator, Form, Multivector, VolumeForm,
};
use crate::foliation::{f_equivalent, DualFrame, FoliationPresentation};
use crate::verify::{CheckResult, PointResidual, Sampler, Status, Suite};

/// Smallest admissible `|mu ^ omega^r|` coefficient at a sample.
pub const VOLUME_THRESHOLD: f64 = crate::exterior::VOLUME_THRESHOLD;

fn half_leaf_dim(fol: &FoliationPresentation) -> Result<usize> {
    let leaf = fol.leaf_dim();
    if leaf % 2 == 1 {
        return Err(Error::OddLeafDimension(leaf));
    }
    Ok(leaf / 2)
}

fn require_two_form(omega: &Form) -> Result<()> {
    if omega.degree() != 2 {
        return Err(Error::DegreeMismatch {
            expected: 2,
            found: omega.degree(),
        });
    }
    Ok(())
}

/// Outcome of the two compatibility conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    /// `d omega ^ mu = 0`.
    pub closed: CheckResult,
    /// `mu ^ omega^r` nonvanishing at every sample.
    pub volume: CheckResult,
    pub r: usize,
    pub omega_volume: Form,
}

impl CompatibilityReport {
    pub fn status(&self) -> Status {
        Status::combine([self.closed.status, self.volume.status])
    }

    pub fn passed(&self) -> bool {
        self.status() == Status::Pass
    }

    pub fn checks(&self) -> Vec<CheckResult> {
        vec![self.closed.clone(), self.volume.clone()]
    }
}

pub fn check_compatible(omega: &Form, fol: &FoliationPresentation) -> Result<CompatibilityReport> {
    require_two_form(omega)?;
    if omega.coords() != fol.coords() {
        return Err(Error::DimensionMismatch("two-form uses other coordinates".into()));
    }
    let r = half_leaf_dim(fol)?;
    let s = fol.sampler();
    let closed = s.check_zero("d omega ^ mu", &fol.modulo(&exterior_derivative(omega))?);
    let omega_volume = fol.mu().wedge(&omega.wedge_power(r))?;
    let full: Vec<usize> = (0..fol.dim()).collect();
    let volume = s.check_nonvanishing("mu ^ omega^r volume", &omega_volume.coeff(&full), VOLUME_THRESHOLD);
    Ok(CompatibilityReport {
        closed,
        volume,
        r,
        omega_volume,
    })
}

/// `omega~ = omega + sum_i (i_{X^i} omega) ^ alpha_i + 1/2 sum_ij omega(X^i, X^j) alpha_i ^ alpha_j`,
/// the compatible form with `i_{X^j} omega~ = 0`.
pub fn normalize_compatible(omega: &Form, fol: &FoliationPresentation, frame: &DualFrame) -> Result<Form> {
    require_two_form(omega)?;
    let gens = fol.generators();
    let x = &frame.fields;
    let half = ScalarExpr::constant(0.5);
    let mut out = omega.clone();
    for (i, alpha_i) in gens.iter().enumerate() {
        out = out.plus(&interior(&x[i], omega)?.wedge(alpha_i)?);
        for (j, alpha_j) in gens.iter().enumerate() {
            let c = omega.pair(&[x[i].clone(), x[j].clone()])?;
            out = out.plus(&alpha_i.wedge(alpha_j)?.scaled(&half.mul(&c)));
        }
    }
    let mut parts = Vec::with_capacity(x.len());
    for xi in x {
        parts.push(interior(xi, &out)?);
    }
    let check = fol.sampler().check_zero("i_X omega~", &parts);
    if !check.passed() {
        return Err(Error::VerificationFailed(Box::new(check)));
    }
    let report = check_compatible(&out, fol)?;
    if let Some(bad) = report.checks().into_iter().find(|c| !c.passed()) {
        return Err(Error::VerificationFailed(Box::new(bad)));
    }
    Ok(out)
}

/// The data a Poisson structure was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatiblePair {
    pub mu: Form,
    pub omega: Form,
    pub r: usize,
}

/// Schouten and differential-form residuals of the Jacobi identity.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiReport {
    /// Coefficients of `[Pi, Pi]`.
    pub schouten: CheckResult,
    /// `L_{X_f} sigma - div(X_f) sigma` over the probe functions.
    pub forms: CheckResult,
}

impl JacobiReport {
    pub fn status(&self) -> Status {
        Status::combine([self.schouten.status, self.forms.status])
    }

    pub fn passed(&self) -> bool {
        self.status() == Status::Pass
    }

    pub fn checks(&self) -> Vec<CheckResult> {
        vec![self.schouten.clone(), self.forms.clone()]
    }
}

/// A bivector together with the volume form used for `sigma = i_Pi Omega`.
#[derive(Debug)]
pub struct PoissonStructure {
    pi: Multivector,
    volume: VolumeForm,
    sigma: Form,
    sampler: Sampler,
    source_pair: Option<CompatiblePair>,
    construction_checks: Vec<CheckResult>,
    modular: OnceLock<Multivector>,
}

impl Clone for PoissonStructure {
    fn clone(&self) -> Self {
        let modular = OnceLock::new();
        if let Some(z) = self.modular.get() {
            let _ = modular.set(z.clone());
        }
        Self {
            pi: self.pi.clone(),
            volume: self.volume.clone(),
            sigma: self.sigma.clone(),
            sampler: self.sampler.clone(),
            source_pair: self.source_pair.clone(),
            construction_checks: self.construction_checks.clone(),
            modular,
        }
    }
}

impl PoissonStructure {
    /// Wrap an arbitrary bivector; no identity is asserted.
    pub fn from_bivector(pi: Multivector, volume: VolumeForm, sampler: Sampler) -> Result<Self> {
        if pi.degree() != 2 {
            return Err(Error::DegreeMismatch {
                expected: 2,
                found: pi.degree(),
            });
        }
        let sigma = contract_into_volume(&pi, &volume)?;
        Ok(Self {
            pi,
            volume,
            sigma,
            sampler,
            source_pair: None,
            construction_checks: Vec::new(),
            modular: OnceLock::new(),
        })
    }

    pub fn pi(&self) -> &Multivector {
        &self.pi
    }

    pub fn coords(&self) -> &Arc<CoordinateSystem> {
        self.pi.coords()
    }

    /// `Omega_omega` for constructed structures, else the supplied volume.
    pub fn volume(&self) -> &VolumeForm {
        &self.volume
    }

    pub fn sigma(&self) -> &Form {
        &self.sigma
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    pub fn source_pair(&self) -> Option<&CompatiblePair> {
        self.source_pair.as_ref()
    }

    /// Checks recorded while building from a compatible form.
    pub fn construction_checks(&self) -> &[CheckResult] {
        &self.construction_checks
    }

    pub fn bracket(&self, f: &ScalarExpr, g: &ScalarExpr) -> ScalarExpr {
        let (df, dg) = (differential(self.coords(), f), differential(self.coords(), g));
        self.pi.pair(&[df, dg]).expect("bivector pairing")
    }

    /// Modular field of the structure's own volume form, computed once.
    pub fn modular_field(&self) -> &Multivector {
        self.modular
            .get_or_init(|| trace_operator(&self.pi, &self.volume).expect("bivector trace"))
    }
}

/// `Pi` from `i_Pi Omega_omega = r mu ^ omega^(r-1)`, with the round trip,
/// Jacobi identity (both routes) and Casimir property checked.
pub fn poisson_from_compatible(fol: &FoliationPresentation, omega: &Form) -> Result<PoissonStructure> {
    let report = check_compatible(omega, fol)?;
    let r = report.r;
    let s = fol.sampler();
    if !report.closed.passed() {
        return Err(Error::VerificationFailed(Box::new(report.closed)));
    }
    let volume = VolumeForm::certify(report.omega_volume.clone(), s)?;
    let m = fol.dim();
    let rhs = if r == 0 {
        Form::zero(fol.coords(), m.saturating_sub(2))
    } else {
        fol.mu()
            .wedge(&omega.wedge_power(r - 1))?
            .scaled(&ScalarExpr::constant(r as f64))
    };
    let pi = if r == 0 {
        Multivector::zero(fol.coords(), 2)
    } else {
        solve_contraction(&rhs, &volume, 2)?
    };
    let mut p = PoissonStructure::from_bivector(pi, volume, s.clone())?;
    p.source_pair = Some(CompatiblePair {
        mu: fol.mu().clone(),
        omega: omega.clone(),
        r,
    });

    let round_trip = s.check_zero("i_Pi Omega - r mu ^ omega^(r-1)", &p.sigma.minus(&rhs));
    let casimirs: Vec<Multivector> = fol
        .generators()
        .iter()
        .map(|a| sharp(&p.pi, a))
        .collect::<Result<_>>()?;
    let casimir = s.check_zero("Pi^#(alpha) = 0", &casimirs);
    let jacobi = jacobi_residual(&p, &default_probes(&p));
    for c in [&round_trip, &casimir] {
        if !c.passed() {
            return Err(Error::VerificationFailed(Box::new(c.clone())));
        }
    }
    if !jacobi.passed() {
        let worst = if jacobi.schouten.passed() {
            jacobi.forms.clone()
        } else {
            jacobi.schouten.clone()
        };
        return Err(Error::JacobiFailed(Box::new(worst)));
    }
    p.construction_checks = vec![round_trip, casimir, jacobi.schouten, jacobi.forms];
    Ok(p)
}

/// Coordinates plus the default number of seeded quadratics.
pub fn default_probes(p: &PoissonStructure) -> Vec<ScalarExpr> {
    crate::verify::probe_functions(
        p.coords().dim(),
        crate::verify::DEFAULT_EXTRA_PROBES,
        p.sampler.config.seed,
    )
}

/// `X_f = Pi^#(df)`.
pub fn hamiltonian_field(p: &PoissonStructure, f: &ScalarExpr) -> Multivector {
    sharp(&p.pi, &differential(p.coords(), f)).expect("bivector and one-form")
}

/// `i_{X_f} Omega + df ^ sigma` for one function.
pub fn hamiltonian_contraction_residual(p: &PoissonStructure, f: &ScalarExpr) -> Result<Form> {
    let x = hamiltonian_field(p, f);
    let df = differential(p.coords(), f);
    Ok(contract_into_volume(&x, &p.volume)?.plus(&df.wedge(&p.sigma)?))
}

/// `L_X sigma - div(X) sigma`, which vanishes exactly when `X` preserves `Pi`
/// (for `X` a vector field and `sigma = i_Pi Omega`).
pub fn sigma_transport_residual(p: &PoissonStructure, x: &Multivector) -> Result<Form> {
    let div = divergence(x, &p.volume)?;
    Ok(lie_derivative(x, &p.sigma)?.minus(&p.sigma.scaled(&div)))
}

/// Jacobi identity through `[Pi, Pi] = 0` and through
/// `L_{X_f} sigma = div(X_f) sigma` on the probe functions.
pub fn jacobi_residual(p: &PoissonStructure, probes: &[ScalarExpr]) -> JacobiReport {
    let s = &p.sampler;
    let bracket = schouten(&p.pi, &p.pi).expect("same coordinates");
    let schouten_check = s.check_zero("[Pi, Pi] = 0", &bracket);
    let residuals: Vec<Form> = probes
        .iter()
        .map(|f| sigma_transport_residual(p, &hamiltonian_field(p, f)).expect("vector field"))
        .collect();
    let forms = s.check_zero("L_Xf sigma - div(Xf) sigma = 0", &residuals);
    JacobiReport {
        schouten: schouten_check,
        forms,
    }
}

/// `[Pi, X] = 0` together with `L_X sigma - div(X) sigma = 0`.
pub fn poisson_vector_field_check(p: &PoissonStructure, x: &Multivector) -> Result<CheckResult> {
    let s = &p.sampler;
    let commutes = s.check_zero("[Pi, X]", &schouten(&p.pi, x)?);
    let transport = s.check_zero("L_X sigma - div(X) sigma", &sigma_transport_residual(p, x)?);
    Ok(CheckResult::merge("Poisson vector field", &[commutes, transport]))
}

/// `Z_Omega = D_Omega(Pi)` for an arbitrary volume form.
pub fn modular_field_for(p: &PoissonStructure, volume: &VolumeForm) -> Result<Multivector> {
    trace_operator(&p.pi, volume)
}

/// Properties of the modular field: `div Z = 0`, `[Pi, Z] = 0` and
/// `div X_f = Z(f)` on the probes.
pub fn modular_suite(p: &PoissonStructure, volume: &VolumeForm, probes: &[ScalarExpr]) -> Result<Suite> {
    let s = &p.sampler;
    let z = modular_field_for(p, volume)?;
    let mut suite = Suite::new("modular field");
    suite.push(s.check_zero("div Z = 0", &divergence(&z, volume)?));
    suite.push(s.check_zero("[Pi, Z] = 0", &schouten(&p.pi, &z)?));
    let mut residuals = Vec::with_capacity(probes.len());
    for f in probes {
        let div = divergence(&hamiltonian_field(p, f), volume)?;
        residuals.push(div.sub(&directional(&z, f)));
    }
    suite.push(s.check_zero("div Xf - Z(f) = 0", &residuals));
    Ok(suite)
}

/// The modular field of `Omega`, returned only when [`modular_suite`] passes.
pub fn modular_field(p: &PoissonStructure, volume: &VolumeForm, probes: &[ScalarExpr]) -> Result<Multivector> {
    let suite = modular_suite(p, volume, probes)?;
    if let Some(bad) = suite.checks.iter().find(|c| !c.passed()) {
        return Err(Error::VerificationFailed(Box::new(bad.clone())));
    }
    modular_field_for(p, volume)
}

/// `Z_{h Omega} = Z_Omega - X_{ln h}` for a positive function `h`.
pub fn modular_rescale_check(p: &PoissonStructure, volume: &VolumeForm, h: &ScalarExpr) -> Result<CheckResult> {
    let s = &p.sampler;
    let scaled = volume.rescaled(h, s)?;
    let z = modular_field_for(p, volume)?;
    let z_scaled = modular_field_for(p, &scaled)?;
    // d ln h = dh / h
    let dlog = differential(p.coords(), h).map_coeffs(|c| c.div(h));
    let x_log = sharp(&p.pi, &dlog)?;
    Ok(s.check_zero("Z_hOmega - Z_Omega + X_ln h", &z_scaled.minus(&z).plus(&x_log)))
}

/// Certificate that `Pi` is unimodular: `(dh - delta) ^ mu = 0`,
/// `D_Omega(Pi) = X_h`, and `div X_f = -i_{X_f} delta` on the probes.
pub fn unimodular_certificate(
    p: &PoissonStructure,
    fol: &FoliationPresentation,
    delta: &Form,
    h: &ScalarExpr,
    probes: &[ScalarExpr],
) -> Result<Suite> {
    let s = &p.sampler;
    let dh = differential(p.coords(), h);
    let mut suite = Suite::new("unimodular certificate");
    suite.push(s.check_zero("(dh - delta) ^ mu", &fol.modulo(&dh.try_sub(delta)?)?));
    let z = p.modular_field();
    suite.push(s.check_zero("D(Pi) - X_h", &z.minus(&hamiltonian_field(p, h))));
    let mut residuals = Vec::with_capacity(probes.len());
    for f in probes {
        let x = hamiltonian_field(p, f);
        let div = divergence(&x, &p.volume)?;
        residuals.push(div.add(&delta.pair(std::slice::from_ref(&x))?));
    }
    suite.push(s.check_zero("div Xf + delta(Xf)", &residuals));
    Ok(suite)
}

/// `i_{Pi^#(delta)} Omega` and `i_{D(Pi)} Omega` agree along the leaves.
pub fn modular_class_check(p: &PoissonStructure, fol: &FoliationPresentation, delta: &Form) -> Result<CheckResult> {
    let a = contract_into_volume(&sharp(&p.pi, delta)?, &p.volume)?;
    let b = contract_into_volume(p.modular_field(), &p.volume)?;
    Ok(f_equivalent(&a, &b, fol)?.renamed("i_Pi#(delta) Omega ~ i_D(Pi) Omega"))
}

/// Per frame field: `i_{X_f} L_{X^j} mu = 0` on the probes,
/// `i_{X^j} mu ^ d omega = 0`, and the conclusion `[Pi, X^j] = 0`.
/// The standing assumption `i_{X^j} omega = 0` is reported first.
pub fn transversally_constant_check(
    p: &PoissonStructure,
    fol: &FoliationPresentation,
    frame: &DualFrame,
    omega: &Form,
    probes: &[ScalarExpr],
) -> Result<Suite> {
    let s = &p.sampler;
    let mu = fol.mu();
    let d_omega = exterior_derivative(omega);
    let hamiltonians: Vec<Multivector> = probes.iter().map(|f| hamiltonian_field(p, f)).collect();
    let mut suite = Suite::new("transversally constant");
    for (j, x) in frame.fields.iter().enumerate() {
        let n = j + 1;
        suite.push(s.check_zero(&format!("X{n}: i_X omega = 0"), &interior(x, omega)?));
        let l_mu = lie_derivative(x, mu)?;
        let mut a = Vec::with_capacity(hamiltonians.len());
        for xf in &hamiltonians {
            a.push(interior(xf, &l_mu)?);
        }
        suite.push(s.check_zero(&format!("X{n}: i_Xf L_X mu = 0"), &a));
        let b = interior(x, mu)?.wedge(&d_omega)?;
        suite.push(s.check_zero(&format!("X{n}: i_X mu ^ d omega = 0"), &b));
        suite.push(s.check_zero(&format!("X{n}: [Pi, X] = 0"), &schouten(&p.pi, x)?));
    }
    Ok(suite)
}

/// `a = lambda b` for a single constant `lambda`.
///
/// At each sample `lambda` is the least-squares ratio of the coefficient
/// vectors; the residual is the larger of its drift from the first sample and
/// the coefficient misfit `|a - lambda b|`. Returns the check and the first ratio.
pub fn constant_multiple(a: &Multivector, b: &Multivector, sampler: &Sampler) -> (CheckResult, Option<f64>) {
    let keys: Vec<Vec<usize>> = {
        let mut k: Vec<Vec<usize>> = a.terms().chain(b.terms()).map(|(i, _)| i.clone()).collect();
        k.sort();
        k.dedup();
        k
    };
    let mut first: Option<f64> = None;
    let check = sampler.check_with("constant multiple", |p| {
        let mut va = Vec::with_capacity(keys.len());
        let mut vb = Vec::with_capacity(keys.len());
        for k in &keys {
            va.push(a.coeff(k).eval(p)?);
            vb.push(b.coeff(k).eval(p)?);
        }
        let bb: f64 = vb.iter().map(|x| x * x).sum();
        let ab: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        let lambda = if bb > 0.0 { ab / bb } else { f64::NAN };
        let lambda0 = *first.get_or_insert(lambda);
        let misfit = va
            .iter()
            .zip(&vb)
            .fold(0.0f64, |acc, (x, y)| acc.max((x - lambda * y).abs()));
        Ok(PointResidual {
            residual: misfit.max((lambda - lambda0).abs()),
            scale: lambda.abs(),
        })
    });
    let note = match first {
        Some(l) if l.is_finite() => format!("lambda = {l}"),
        _ => "lambda undefined".to_string(),
    };
    (check.with_note(note), first.filter(|l| l.is_finite()))
}
