//! Dirac brackets for second-class constraints on a symplectic patch.
//!
//! With `Delta^{ij} = {g_i, g_j}_0` invertible and `Delta_{ij}` its inverse:
//!
//! * `omega^DIR = omega_0 + 1/2 sum Delta_{ij} dg_i ^ dg_j`
//! * `Pi^DIR    = Pi_0    + 1/2 sum Delta_{ij} X_{g_i} ^ X_{g_j}`
//! * `X_f^DIR   = X_f     + sum Delta_{ij} {g_i, f}_0 X_{g_j}`
//! * `Z_i       = sum_j Delta_{ij} X_{g_j}`
//!
//! The constraints are Casimirs of `Pi^DIR`, and the `Z_i` form a transversal
//! frame of Poisson vector fields for the level foliation `mu = dg_1 ^ ... ^ dg_2k`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{CoordinateSystem, ScalarExpr};
use crate::exterior::{
    differential, exterior_derivative, interior, lie_derivative, schouten, sharp, Form, Multivector,
};
use crate::foliation::FoliationPresentation;
use crate::matrix::ExprMatrix;
use crate::poisson::{poisson_from_compatible, PoissonStructure};
use crate::verify::{probe_functions, CheckResult, Sampler, Suite, DEFAULT_EXTRA_PROBES};

/// Smallest admissible `|det|` for the symplectic and constraint matrices.
pub const DET_THRESHOLD: f64 = 1e-12;

fn first_small_det(det: &ScalarExpr, sampler: &Sampler) -> Option<(Vec<f64>, f64)> {
    sampler.points().into_iter().find_map(|p| {
        let v = det.eval(&p).map(f64::abs).unwrap_or(0.0);
        (v < DET_THRESHOLD).then_some((p, v))
    })
}

/// A symplectic form and its inverse bivector.
#[derive(Debug, Clone)]
pub struct SymplecticData {
    pub omega: Form,
    /// `Pi_0 = -W^{-1}` for `W_ab = omega(d_a, d_b)`, so `{q, p}_0 = 1` for `dq ^ dp`.
    pub pi: Multivector,
    pub sampler: Sampler,
    /// Sampled `W^T Pi_0 - I`.
    pub inverse_check: CheckResult,
}

impl SymplecticData {
    pub fn coords(&self) -> &Arc<CoordinateSystem> {
        self.omega.coords()
    }

    /// `{f, g}_0 = Pi_0(df, dg)`.
    pub fn bracket(&self, f: &ScalarExpr, g: &ScalarExpr) -> ScalarExpr {
        let c = self.coords();
        self.pi
            .pair(&[differential(c, f), differential(c, g)])
            .expect("bivector pairing")
    }

    /// `X_f = Pi_0^#(df)`.
    pub fn hamiltonian(&self, f: &ScalarExpr) -> Multivector {
        sharp(&self.pi, &differential(self.coords(), f)).expect("bivector and one-form")
    }
}

/// Antisymmetric coefficient matrix `M_ab = T(e_a, e_b)` of a degree-2 field.
fn antisymmetric_matrix<V: crate::exterior::Variance>(t: &crate::exterior::Field<V>) -> ExprMatrix {
    ExprMatrix::from_fn(t.dim(), |a, b| match a.cmp(&b) {
        std::cmp::Ordering::Less => t.coeff(&[a, b]),
        std::cmp::Ordering::Greater => t.coeff(&[b, a]).neg(),
        std::cmp::Ordering::Equal => ScalarExpr::zero(),
    })
}

pub fn invert_symplectic(omega: &Form, sampler: &Sampler) -> Result<SymplecticData> {
    if omega.degree() != 2 {
        return Err(Error::DegreeMismatch {
            expected: 2,
            found: omega.degree(),
        });
    }
    let m = omega.dim();
    if m % 2 == 1 {
        return Err(Error::DimensionMismatch(format!(
            "symplectic form on odd dimension {m}"
        )));
    }
    let w = antisymmetric_matrix(omega);
    let (inv, det) = w.inverse();
    if let Some((point, value)) = first_small_det(&det, sampler) {
        return Err(Error::SingularSymplectic { point, value });
    }
    let mut pi = Multivector::zero(omega.coords(), 2);
    for a in 0..m {
        for b in a + 1..m {
            pi = pi.plus(&Multivector::monomial(omega.coords(), &[a, b], inv.get(a, b).neg()));
        }
    }
    let product = w.transpose().mul(&antisymmetric_matrix(&pi));
    let residuals: Vec<ScalarExpr> = (0..m)
        .flat_map(|a| (0..m).map(move |b| (a, b)))
        .map(|(a, b)| {
            let e = product.get(a, b).clone();
            if a == b {
                e.sub(&ScalarExpr::one())
            } else {
                e
            }
        })
        .collect();
    let inverse_check = sampler.check_zero("W^T Pi_0 = I", &residuals);
    if !inverse_check.passed() {
        return Err(Error::VerificationFailed(Box::new(inverse_check)));
    }
    Ok(SymplecticData {
        omega: omega.clone(),
        pi,
        sampler: sampler.clone(),
        inverse_check,
    })
}

/// Everything produced from the constraints.
#[derive(Debug, Clone)]
pub struct DiracResult {
    pub symplectic: SymplecticData,
    pub constraints: Vec<ScalarExpr>,
    /// `Delta^{ij} = {g_i, g_j}_0`.
    pub delta: ExprMatrix,
    /// `Delta_{ij}`, the inverse through the adjugate.
    pub delta_inv: ExprMatrix,
    pub omega_dirac: Form,
    pub pi_dirac: Multivector,
    pub frame: Vec<Multivector>,
    /// `dg_1 ^ ... ^ dg_2k`.
    pub mu: Form,
    /// Half the leaf dimension.
    pub r: usize,
}

pub fn build_dirac(s: &SymplecticData, constraints: &[ScalarExpr]) -> Result<DiracResult> {
    let c = s.coords();
    let n = constraints.len();
    let m = c.dim();
    if n % 2 == 1 || n > m {
        return Err(Error::DimensionMismatch(format!(
            "{n} constraints on a {m}-dimensional symplectic patch"
        )));
    }
    let delta = ExprMatrix::from_fn(n, |i, j| s.bracket(&constraints[i], &constraints[j]));
    let (delta_inv, det) = delta.inverse();
    if let Some((point, value)) = first_small_det(&det, &s.sampler) {
        return Err(Error::SingularDelta { point, value });
    }
    let dg: Vec<Form> = constraints.iter().map(|g| differential(c, g)).collect();
    let xg: Vec<Multivector> = constraints.iter().map(|g| s.hamiltonian(g)).collect();
    let half = ScalarExpr::constant(0.5);
    let mut omega_dirac = s.omega.clone();
    let mut pi_dirac = s.pi.clone();
    for i in 0..n {
        for j in 0..n {
            let w = half.mul(delta_inv.get(i, j));
            omega_dirac = omega_dirac.plus(&dg[i].wedge(&dg[j])?.scaled(&w));
            pi_dirac = pi_dirac.plus(&xg[i].wedge(&xg[j])?.scaled(&w));
        }
    }
    let frame = (0..n)
        .map(|i| {
            (0..n).fold(Multivector::zero(c, 1), |acc, j| {
                acc.plus(&xg[j].scaled(delta_inv.get(i, j)))
            })
        })
        .collect();
    let mu = dg.iter().fold(Form::scalar(c, ScalarExpr::one()), |acc, d| {
        acc.wedge(d).expect("same coordinates")
    });
    Ok(DiracResult {
        symplectic: s.clone(),
        constraints: constraints.to_vec(),
        delta,
        delta_inv,
        omega_dirac,
        pi_dirac,
        frame,
        mu,
        r: (m - n) / 2,
    })
}

impl DiracResult {
    pub fn coords(&self) -> &Arc<CoordinateSystem> {
        self.symplectic.coords()
    }

    fn sampler(&self) -> &Sampler {
        &self.symplectic.sampler
    }

    /// The level foliation of the constraints.
    pub fn foliation(&self) -> Result<FoliationPresentation> {
        let gens = self
            .constraints
            .iter()
            .map(|g| differential(self.coords(), g))
            .collect();
        FoliationPresentation::new(self.coords(), gens, self.sampler().clone())
    }

    /// `{f, g}^DIR = Pi^DIR(df, dg)`.
    pub fn bracket(&self, f: &ScalarExpr, g: &ScalarExpr) -> ScalarExpr {
        let c = self.coords();
        self.pi_dirac
            .pair(&[differential(c, f), differential(c, g)])
            .expect("bivector pairing")
    }

    /// `Delta^{ij} Delta_{jl} - delta_il` and `Delta^{ij} + Delta^{ji}` residuals.
    pub fn delta_checks(&self) -> Vec<CheckResult> {
        let n = self.constraints.len();
        let product = self.delta.mul(&self.delta_inv);
        let mut inverse = Vec::new();
        let mut antisym = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let e = product.get(i, j).clone();
                inverse.push(if i == j { e.sub(&ScalarExpr::one()) } else { e });
                antisym.push(self.delta.get(i, j).add(self.delta.get(j, i)));
            }
        }
        vec![
            self.sampler().check_zero("Delta Delta^-1 = I", &inverse),
            self.sampler().check_zero("Delta antisymmetric", &antisym),
        ]
    }
}

/// `X_f^DIR = X_f + sum Delta_{ij} {g_i, f}_0 X_{g_j}`.
pub fn dirac_hamiltonian(d: &DiracResult, f: &ScalarExpr) -> Multivector {
    let s = &d.symplectic;
    let mut x = s.hamiltonian(f);
    for (i, gi) in d.constraints.iter().enumerate() {
        let b = s.bracket(gi, f);
        if b.is_zero() {
            continue;
        }
        for (j, gj) in d.constraints.iter().enumerate() {
            x = x.plus(&s.hamiltonian(gj).scaled(&d.delta_inv.get(i, j).mul(&b)));
        }
    }
    x
}

/// `X_f^DIR` by the formula against `Pi^DIR^#(df)`.
pub fn dirac_hamiltonian_check(d: &DiracResult, f: &ScalarExpr) -> CheckResult {
    let formula = dirac_hamiltonian(d, f);
    let direct = sharp(&d.pi_dirac, &differential(d.coords(), f)).expect("bivector and one-form");
    d.sampler().check_zero("X_f^DIR routes agree", &formula.minus(&direct))
}

fn default_probes(d: &DiracResult) -> Vec<ScalarExpr> {
    probe_functions(d.coords().dim(), DEFAULT_EXTRA_PROBES, d.sampler().config.seed)
}

/// The seven checks on a Dirac construction.
pub fn verify_dirac(d: &DiracResult) -> Result<Suite> {
    verify_dirac_with(d, &default_probes(d))
}

pub fn verify_dirac_with(d: &DiracResult, probes: &[ScalarExpr]) -> Result<Suite> {
    let s = d.sampler();
    let c = d.coords();
    let mu = &d.mu;
    let mut suite = Suite::new("dirac");

    let closed = exterior_derivative(&d.omega_dirac).wedge(mu)?;
    suite.push(s.check_zero("d omega^DIR ^ mu = 0", &closed));

    let vol = mu
        .wedge(&d.omega_dirac.wedge_power(d.r))?
        .minus(&mu.wedge(&d.symplectic.omega.wedge_power(d.r))?);
    suite.push(s.check_zero("mu ^ (omega^DIR)^r = mu ^ omega_0^r", &vol));

    suite.push(s.check_zero("[Pi^DIR, Pi^DIR] = 0", &schouten(&d.pi_dirac, &d.pi_dirac)?));

    let casimirs: Vec<Multivector> = d
        .constraints
        .iter()
        .map(|g| sharp(&d.pi_dirac, &differential(c, g)))
        .collect::<Result<_>>()?;
    suite.push(s.check_zero("X^DIR_g = 0", &casimirs));

    let hamiltonians: Vec<Multivector> = probes.iter().map(|f| dirac_hamiltonian(d, f)).collect();
    let mut frame_residuals = Vec::new();
    let mut commutators = Vec::new();
    for z in &d.frame {
        let l_mu = lie_derivative(z, mu)?;
        for x in &hamiltonians {
            frame_residuals.push(interior(x, &l_mu)?);
        }
        frame_residuals.push(mu.wedge(&lie_derivative(z, &d.omega_dirac)?)?);
        commutators.push(schouten(&d.pi_dirac, z)?);
    }
    suite.push(s.check_zero("i_Xf L_Z mu = 0, mu ^ L_Z omega^DIR = 0", &frame_residuals));
    suite.push(s.check_zero("[Pi^DIR, Z] = 0", &commutators));
    suite.push(route_cross_check(d)?);
    Ok(suite)
}

/// `Pi^DIR` against the bivector built from `(mu, omega^DIR)` as a compatible pair.
pub fn route_cross_check(d: &DiracResult) -> Result<CheckResult> {
    let fol = d.foliation()?;
    let built: PoissonStructure = poisson_from_compatible(&fol, &d.omega_dirac)?;
    Ok(d.sampler()
        .check_zero("Pi^DIR = Pi from compatible pair", &built.pi().minus(&d.pi_dirac)))
}
