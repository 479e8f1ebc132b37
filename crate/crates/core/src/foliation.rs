//! Regular foliations presented by independent 1-forms.
//!
//! A presentation carries generators `alpha_1..alpha_k`, their product
//! `mu = alpha_1 ^ ... ^ alpha_k` and the sampler on which every identity is
//! checked. The transversal dual frame uses the Euclidean metric of the
//! given coordinates. The one-form `delta = sum_i L_{X^i} alpha_i` satisfies
//! `d mu = -delta ^ mu`, and its foliated class is the obstruction to
//! choosing generators with closed `mu`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::expr::{CoordinateSystem, ScalarExpr};
use crate::exterior::{exterior_derivative, interior, lie_derivative, schouten, Form, Multivector};
use crate::matrix::ExprMatrix;
use crate::verify::{CheckResult, Criterion, PointResidual, Sampler, Suite};

/// Singular-value ratio below which generators count as dependent.
pub const INDEPENDENCE_RATIO: f64 = 1e-8;

/// Smallest admissible `|det(Gram)|` when building a dual frame.
pub const GRAM_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FoliationPresentation {
    coords: Arc<CoordinateSystem>,
    generators: Vec<Form>,
    mu: Form,
    sampler: Sampler,
}

impl FoliationPresentation {
    /// Structural validation only; integrability is reported by
    /// [`check_integrability`] so that non-integrable input can be examined.
    pub fn new(coords: &Arc<CoordinateSystem>, generators: Vec<Form>, sampler: Sampler) -> Result<Self> {
        let m = coords.dim();
        if sampler.region.dim() != m {
            return Err(Error::DimensionMismatch(format!(
                "sample box has {} intervals for {} coordinates",
                sampler.region.dim(),
                m
            )));
        }
        if generators.len() > m {
            return Err(Error::DimensionMismatch(format!(
                "{} generators on a {m}-dimensional patch",
                generators.len()
            )));
        }
        let mut mu = Form::scalar(coords, ScalarExpr::one());
        for g in &generators {
            if g.coords() != coords {
                return Err(Error::DimensionMismatch("generator uses other coordinates".into()));
            }
            if g.degree() != 1 {
                return Err(Error::DegreeMismatch {
                    expected: 1,
                    found: g.degree(),
                });
            }
            mu = mu.wedge(g)?;
        }
        Ok(Self {
            coords: Arc::clone(coords),
            generators,
            mu,
            sampler,
        })
    }

    /// The foliation with a single leaf (`k = 0`, `mu = 1`).
    pub fn trivial(coords: &Arc<CoordinateSystem>, sampler: Sampler) -> Result<Self> {
        Self::new(coords, Vec::new(), sampler)
    }

    pub fn coords(&self) -> &Arc<CoordinateSystem> {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.dim()
    }

    pub fn codim(&self) -> usize {
        self.generators.len()
    }

    pub fn leaf_dim(&self) -> usize {
        self.dim() - self.codim()
    }

    pub fn generators(&self) -> &[Form] {
        &self.generators
    }

    pub fn mu(&self) -> &Form {
        &self.mu
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    /// Same sampler, different generators.
    pub fn with_generators(&self, generators: Vec<Form>) -> Result<Self> {
        Self::new(&self.coords, generators, self.sampler.clone())
    }

    /// Generators `alpha~_i = sum_j F_ij alpha_j`.
    pub fn transformed(&self, f: &ExprMatrix) -> Result<Self> {
        let k = self.codim();
        if f.size() != k {
            return Err(Error::DimensionMismatch(format!(
                "{0}x{0} matrix for {k} generators",
                f.size()
            )));
        }
        let gens = (0..k)
            .map(|i| {
                (0..k).fold(Form::zero(&self.coords, 1), |acc, j| {
                    acc.plus(&self.generators[j].scaled(f.get(i, j)))
                })
            })
            .collect();
        self.with_generators(gens)
    }

    /// Numeric `k x m` coefficient matrix of the generators at `point`.
    pub fn coefficient_matrix(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        let (k, m) = (self.codim(), self.dim());
        let mut a = DMatrix::zeros(k, m);
        for (i, g) in self.generators.iter().enumerate() {
            for (index, c) in g.terms() {
                a[(i, index[0])] = c.eval(point)?;
            }
        }
        Ok(a)
    }

    /// `beta ^ mu`, the form whose vanishing means `beta` is zero along leaves.
    pub fn modulo(&self, beta: &Form) -> Result<Form> {
        beta.wedge(&self.mu)
    }
}

/// Ratio of smallest to largest singular value of the generator matrix.
fn independence_ratio(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

/// Independence of the generators and `d alpha_i ^ mu = 0` at the samples.
pub fn check_integrability(fol: &FoliationPresentation) -> CheckResult {
    let s = fol.sampler();
    let mut dependent = 0usize;
    let independence = s.run("independence", Criterion::AbsoluteBound(0.0), |p| {
        let ratio = fol.coefficient_matrix(p).map(|a| independence_ratio(&a));
        let ratio = match ratio {
            Ok(r) => r,
            Err(Error::Eval(e)) => return Err(e),
            Err(_) => 0.0,
        };
        let bad = ratio <= INDEPENDENCE_RATIO;
        dependent += usize::from(bad);
        Ok(PointResidual {
            residual: if bad { 1.0 } else { 0.0 },
            scale: 0.0,
        })
    });
    let wedges: Vec<Form> = fol
        .generators()
        .iter()
        .map(|g| exterior_derivative(g).wedge(fol.mu()).expect("same coordinates"))
        .collect();
    let closure = s.check_zero("d alpha ^ mu", &wedges);
    let note = format!(
        "independence {} ({} dependent points), d alpha ^ mu {} (max {:e})",
        independence.status.as_str(),
        dependent,
        closure.status.as_str(),
        closure.max_abs_residual
    );
    CheckResult::merge("integrability", &[independence, closure]).with_note(note)
}

/// Vector fields `X^1..X^k` with `alpha_i(X^j) = delta_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFrame {
    pub fields: Vec<Multivector>,
}

impl DualFrame {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// `X^j + T^j` for tangent perturbations `T^j`.
    pub fn perturbed(&self, tangent: &[Multivector]) -> Result<Self> {
        if tangent.len() != self.fields.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} perturbations for {} frame fields",
                tangent.len(),
                self.fields.len()
            )));
        }
        Ok(Self {
            fields: self.fields.iter().zip(tangent).map(|(x, t)| x.plus(t)).collect(),
        })
    }
}

fn raise(alpha: &Form) -> Multivector {
    Multivector::from_terms(alpha.coords(), 1, alpha.terms().map(|(i, c)| (i.clone(), c.clone())))
}

/// Symbolic Gram matrix `Gram_ab = sum_c (alpha_a)_c (alpha_b)_c`.
pub fn gram_matrix(fol: &FoliationPresentation) -> ExprMatrix {
    let gens = fol.generators();
    ExprMatrix::from_fn(gens.len(), |a, b| {
        gens[a].terms().fold(ScalarExpr::zero(), |acc, (index, c)| {
            acc.add(&c.mul(&gens[b].coeff(index)))
        })
    })
}

/// Euclidean dual frame `X^j = sum_i (Gram^-1)_ji alpha_i^#`.
pub fn dual_frame(fol: &FoliationPresentation) -> Result<DualFrame> {
    let gram = gram_matrix(fol);
    let (inv, det) = gram.inverse();
    for p in fol.sampler().points() {
        let value = det.eval(&p).map(f64::abs).unwrap_or(0.0);
        if value < GRAM_THRESHOLD {
            return Err(Error::SingularFrame { point: p, value });
        }
    }
    let raised: Vec<Multivector> = fol.generators().iter().map(raise).collect();
    let k = fol.codim();
    let fields = (0..k)
        .map(|j| {
            (0..k).fold(Multivector::zero(fol.coords(), 1), |acc, i| {
                acc.plus(&raised[i].scaled(inv.get(j, i)))
            })
        })
        .collect();
    Ok(DualFrame { fields })
}

/// Sampled `alpha_i(X^j) - delta_ij`.
pub fn frame_duality_check(fol: &FoliationPresentation, frame: &DualFrame) -> CheckResult {
    let mut residuals = Vec::new();
    for (i, a) in fol.generators().iter().enumerate() {
        for (j, x) in frame.fields.iter().enumerate() {
            let v = a.pair(std::slice::from_ref(x)).expect("degree one");
            residuals.push(if i == j { v.sub(&ScalarExpr::one()) } else { v });
        }
    }
    fol.sampler().check_zero("frame duality", &residuals)
}

/// `G_i^j` with `d alpha_i = sum_j G_i^j ^ alpha_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionMatrix {
    pub entries: Vec<Vec<Form>>,
    pub check: CheckResult,
}

/// `G_i^j = -L_{X^j} alpha_i - 1/2 sum_r alpha_i([X^j, X^r]) alpha_r`, verified
/// against `d alpha_i = sum_j G_i^j ^ alpha_j` at the samples.
pub fn connection_matrix(fol: &FoliationPresentation, frame: &DualFrame) -> Result<ConnectionMatrix> {
    let gens = fol.generators();
    let k = gens.len();
    let x = &frame.fields;
    let mut entries = vec![Vec::with_capacity(k); k];
    for (i, alpha) in gens.iter().enumerate() {
        for j in 0..k {
            let mut g = lie_derivative(&x[j], alpha)?.negated();
            for (r, alpha_r) in gens.iter().enumerate() {
                let bracket = schouten(&x[j], &x[r])?;
                let c = alpha.pair(&[bracket])?;
                g = g.minus(&alpha_r.scaled(&c.mul(&ScalarExpr::constant(0.5))));
            }
            entries[i].push(g);
        }
    }
    let mut residuals = Vec::with_capacity(k);
    for (i, alpha) in gens.iter().enumerate() {
        let mut res = exterior_derivative(alpha);
        for (j, alpha_j) in gens.iter().enumerate() {
            res = res.minus(&entries[i][j].wedge(alpha_j)?);
        }
        residuals.push(res);
    }
    let check = fol.sampler().check_zero("d alpha = G ^ alpha", &residuals);
    if !check.passed() {
        return Err(Error::VerificationFailed(Box::new(check)));
    }
    Ok(ConnectionMatrix { entries, check })
}

/// `delta = sum_i L_{X^i} alpha_i` together with its defining checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaForm {
    pub delta: Form,
    /// `d mu + delta ^ mu = 0` and `d delta ^ mu = 0`.
    pub checks: Vec<CheckResult>,
}

/// The one-form `delta` without verification.
pub fn delta_of_frame(fol: &FoliationPresentation, frame: &DualFrame) -> Result<Form> {
    let mut delta = Form::zero(fol.coords(), 1);
    for (x, alpha) in frame.fields.iter().zip(fol.generators()) {
        delta = delta.plus(&lie_derivative(x, alpha)?);
    }
    Ok(delta)
}

/// `delta` for the frame, checked against `d mu + delta ^ mu = 0` and `d delta ^ mu = 0`.
pub fn delta_form(fol: &FoliationPresentation, frame: &DualFrame) -> Result<DeltaForm> {
    let delta = delta_of_frame(fol, frame)?;
    let s = fol.sampler();
    let mu = fol.mu();
    let structure = exterior_derivative(mu).plus(&delta.wedge(mu)?);
    let closed = exterior_derivative(&delta).wedge(mu)?;
    let checks = vec![
        s.check_zero("d mu + delta ^ mu", &structure),
        s.check_zero("d delta ^ mu", &closed),
    ];
    if let Some(bad) = checks.iter().find(|c| !c.passed()) {
        return Err(Error::VerificationFailed(Box::new(bad.clone())));
    }
    Ok(DeltaForm { delta, checks })
}

/// Change of generators `F = diag(1 + x_i^2) + strictly upper ones`, which has
/// positive determinant everywhere.
pub fn default_generator_change(fol: &FoliationPresentation) -> ExprMatrix {
    let m = fol.dim();
    ExprMatrix::from_fn(fol.codim(), |i, j| {
        if i == j {
            let x = ScalarExpr::var(i % m);
            ScalarExpr::one().add(&x.mul(&x))
        } else if j > i {
            ScalarExpr::one()
        } else {
            ScalarExpr::zero()
        }
    })
}

/// Tangent fields `T^j = V^j - sum_i alpha_i(V^j) X^i` built from
/// `V^j = x_{j+2} d_{j+1}` (indices mod `m`, one-based).
pub fn default_tangent_perturbations(fol: &FoliationPresentation, frame: &DualFrame) -> Vec<Multivector> {
    let m = fol.dim();
    (0..fol.codim())
        .map(|j| {
            let v = Multivector::monomial(fol.coords(), &[j % m], ScalarExpr::var((j + 1) % m));
            project_tangent(fol, frame, &v)
        })
        .collect()
}

/// Remove the transversal part of `v` along the dual frame.
pub fn project_tangent(fol: &FoliationPresentation, frame: &DualFrame, v: &Multivector) -> Multivector {
    fol.generators()
        .iter()
        .zip(&frame.fields)
        .fold(v.clone(), |acc, (alpha, x)| {
            let c = alpha.pair(std::slice::from_ref(v)).expect("degree one");
            acc.minus(&x.scaled(&c))
        })
}

/// Independence of the obstruction class from the choices made.
///
/// With `F` a change of generators and `T^j` tangent perturbations of the frame:
/// `(d delta~ - d delta) ^ mu = 0`, `(delta~ - delta + d ln det F) ^ mu = 0`,
/// `mu~ = det(F) mu`, `alpha_i(T^j) = 0` and `(delta' - delta) ^ mu = 0`.
pub fn delta_wellposedness_suite(
    fol: &FoliationPresentation,
    change: &ExprMatrix,
    tangent: &[Multivector],
) -> Result<Suite> {
    let s = fol.sampler();
    let mu = fol.mu();
    let frame = dual_frame(fol)?;
    let delta = delta_of_frame(fol, &frame)?;
    let mut suite = Suite::new("delta well-posedness");

    let changed = fol.transformed(change)?;
    let changed_frame = dual_frame(&changed)?;
    let changed_delta = delta_of_frame(&changed, &changed_frame)?;
    let det = change.det();
    suite.push(s.check_zero("mu~ - det(F) mu", &changed.mu().minus(&mu.scaled(&det))));
    let d_diff = exterior_derivative(&changed_delta).minus(&exterior_derivative(&delta));
    suite.push(s.check_zero("(d delta~ - d delta) ^ mu", &d_diff.wedge(mu)?));
    // d ln|det F| written as d(det F) / det F so no logarithm is needed
    let dlog = exterior_derivative(&Form::scalar(fol.coords(), det.clone())).map_coeffs(|c| c.div(&det));
    let shift = changed_delta.minus(&delta).plus(&dlog);
    suite.push(s.check_zero("(delta~ - delta + d ln det F) ^ mu", &shift.wedge(mu)?));

    let tangency: Vec<ScalarExpr> = fol
        .generators()
        .iter()
        .flat_map(|a| {
            tangent
                .iter()
                .map(move |t| a.pair(std::slice::from_ref(t)).expect("degree one"))
        })
        .collect();
    suite.push(s.check_zero("perturbations tangent", &tangency));
    let moved = frame.perturbed(tangent)?;
    let moved_delta = delta_of_frame(fol, &moved)?;
    suite.push(s.check_zero("(delta' - delta) ^ mu", &moved_delta.minus(&delta).wedge(mu)?));
    Ok(suite)
}

/// `(beta - rho) ^ mu = 0` at the samples.
pub fn f_equivalent(beta: &Form, rho: &Form, fol: &FoliationPresentation) -> Result<CheckResult> {
    let diff = beta.try_sub(rho)?;
    Ok(fol.sampler().check_zero("F-equivalence", &fol.modulo(&diff)?))
}

/// Orthonormal numeric basis of the common kernel of the generators at `point`.
pub fn tangent_basis_at(fol: &FoliationPresentation, point: &[f64]) -> Result<Vec<Vec<f64>>> {
    let (k, m) = (fol.codim(), fol.dim());
    if k == 0 {
        return Ok((0..m)
            .map(|i| (0..m).map(|j| f64::from(u8::from(i == j))).collect())
            .collect());
    }
    let a = fol.coefficient_matrix(point)?;
    let eig = SymmetricEigen::new(a.transpose() * &a);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let largest = eig.eigenvalues[order[m - 1]].max(0.0).sqrt();
    let smallest_kept = eig.eigenvalues[order[m - k]].max(0.0).sqrt();
    if largest == 0.0 || smallest_kept <= INDEPENDENCE_RATIO * largest {
        return Err(Error::RankDeficient { point: point.to_vec() });
    }
    Ok(order[..m - k]
        .iter()
        .map(|&c| eig.eigenvectors.column(c).iter().copied().collect())
        .collect())
}

fn combinations(n: usize, q: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, q: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == q {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, q, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, q, &mut Vec::new(), &mut out);
    out
}

/// Largest value of `beta` on tuples of the numeric tangent basis at each sample.
///
/// Vanishing here is equivalent to `beta ^ mu = 0`; the two verdicts are
/// computed independently so they can be compared.
pub fn tangent_vanishing(beta: &Form, fol: &FoliationPresentation) -> CheckResult {
    let q = beta.degree();
    fol.sampler().check_with("vanishes on tangent vectors", |p| {
        let basis = match tangent_basis_at(fol, p) {
            Ok(b) => b,
            Err(Error::Eval(e)) => return Err(e),
            Err(_) => {
                return Ok(PointResidual {
                    residual: f64::INFINITY,
                    scale: 0.0,
                })
            }
        };
        let mut scale = 0.0f64;
        for (_, c) in beta.terms() {
            scale = scale.max(c.eval(p)?.abs());
        }
        let mut residual = 0.0f64;
        if q <= basis.len() {
            for tuple in combinations(basis.len(), q) {
                let vectors: Vec<Vec<f64>> = tuple.iter().map(|&t| basis[t].clone()).collect();
                residual = residual.max(beta.pair_numeric(p, &vectors)?.abs());
            }
        }
        Ok(PointResidual { residual, scale })
    })
}

/// `beta ~ rho` implies `d beta ~ d rho`, and `d d beta ^ mu = 0`.
pub fn foliated_derivative_check(beta: &Form, rho: &Form, fol: &FoliationPresentation) -> Result<CheckResult> {
    let premise = f_equivalent(beta, rho, fol)?.renamed("premise");
    let derived = f_equivalent(&exterior_derivative(beta), &exterior_derivative(rho), fol)?.renamed("d beta ~ d rho");
    let twice = exterior_derivative(&exterior_derivative(beta));
    let square = fol.sampler().check_zero("d d beta ^ mu", &fol.modulo(&twice)?);
    Ok(CheckResult::merge("foliated derivative", &[premise, derived, square]))
}

/// Result of testing a candidate `h` with `delta = dh` along the leaves.
#[derive(Debug, Clone)]
pub struct ObstructionCertificate {
    pub check: CheckResult,
    /// Generators with `alpha_1` replaced by `e^h alpha_1` (only on PASS).
    pub rescaled: Option<FoliationPresentation>,
    /// `d mu~ = 0` for the rescaled generators (only on PASS).
    pub closed: Option<CheckResult>,
}

impl ObstructionCertificate {
    pub fn passed(&self) -> bool {
        self.check.passed() && self.closed.as_ref().is_none_or(CheckResult::passed)
    }
}

/// `(dh - delta) ^ mu = 0`; on success rescale the first generator by `e^h`
/// and check the new `mu` is closed.
pub fn obstruction_certificate(
    fol: &FoliationPresentation,
    delta: &Form,
    h: &ScalarExpr,
) -> Result<ObstructionCertificate> {
    let dh = exterior_derivative(&Form::scalar(fol.coords(), h.clone()));
    let check = fol
        .sampler()
        .check_zero("(dh - delta) ^ mu", &fol.modulo(&dh.try_sub(delta)?)?);
    if !check.passed() {
        return Ok(ObstructionCertificate {
            check,
            rescaled: None,
            closed: None,
        });
    }
    let mut gens = fol.generators().to_vec();
    if let Some(first) = gens.first_mut() {
        *first = first.scaled(&h.exp());
    }
    let rescaled = fol.with_generators(gens)?;
    let closed = fol.sampler().check_zero("d mu~", &exterior_derivative(rescaled.mu()));
    Ok(ObstructionCertificate {
        check,
        rescaled: Some(rescaled),
        closed: Some(closed),
    })
}

/// `i_{X^j} theta = 0` for every frame field.
pub fn frame_annihilates(fol: &FoliationPresentation, frame: &DualFrame, theta: &Form) -> Result<CheckResult> {
    let mut parts = Vec::with_capacity(frame.len());
    for x in &frame.fields {
        parts.push(interior(x, theta)?);
    }
    Ok(fol.sampler().check_zero("i_X theta", &parts))
}
