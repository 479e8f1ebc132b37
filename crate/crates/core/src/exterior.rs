//! Differential forms and multivector fields with symbolic coefficients.
//!
//! Both are stored sparsely on strictly increasing multi-indices. Pairings
//! use the determinant convention
//! `(dx^{i_1} ^ ... ^ dx^{i_q})(d_{j_1}, ..., d_{j_q}) = det(delta^{i_a}_{j_b})`
//! with no `1/q!`, and every contraction lets the multivector fill the
//! *first* argument slots: `i_{A_1 ^ ... ^ A_p} beta = beta(A_1, ..., A_p, -)`.
//!
//! The Schouten bracket is normalised so that for a bivector `P`
//! `[P, P](df, dg, dh) = 2 ({{f,g},h} + {{g,h},f} + {{h,f},g})` with
//! `{f,g} = P(df, dg)`, and so that the trace operator obeys
//! `D(A ^ B) = (-1)^b D(A) ^ B + A ^ D(B) + (-1)^(a+b+1) [A, B]`.

use std::collections::BTreeMap;
use std::fmt;
use std::marker::PhantomData;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{CoordinateSystem, ScalarExpr};
use crate::matrix::ExprMatrix;
use crate::verify::{Sampled, Sampler};

pub type MultiIndex = Vec<usize>;

/// Marker for covariant fields (differential forms).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Covariant;

/// Marker for contravariant fields (multivectors).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Contravariant;

pub trait Variance: Copy + fmt::Debug + PartialEq + 'static {
    type Dual: Variance<Dual = Self>;
    /// Prefix of a basis element in the text format (`dx1`, `d_x1`).
    const BASIS_PREFIX: &'static str;
}

impl Variance for Covariant {
    type Dual = Contravariant;
    const BASIS_PREFIX: &'static str = "d";
}

impl Variance for Contravariant {
    type Dual = Covariant;
    const BASIS_PREFIX: &'static str = "d_";
}

/// Antisymmetric tensor field of fixed degree.
#[derive(Clone, PartialEq)]
pub struct Field<V: Variance> {
    coords: Arc<CoordinateSystem>,
    degree: usize,
    coeffs: BTreeMap<MultiIndex, ScalarExpr>,
    _variance: PhantomData<V>,
}

pub type Form = Field<Covariant>;
pub type Multivector = Field<Contravariant>;

/// Sign of the permutation sorting `seq`, or `None` if it repeats an index.
pub fn sort_sign(seq: &[usize]) -> Option<(f64, MultiIndex)> {
    let mut v = seq.to_vec();
    let mut sign = 1.0;
    // insertion sort counting transpositions; sequences are short
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        None
    } else {
        Some((sign, v))
    }
}

fn complement(index: &[usize], dim: usize) -> MultiIndex {
    (0..dim).filter(|i| !index.contains(i)).collect()
}

fn same_coords(a: &CoordinateSystem, b: &CoordinateSystem) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "coordinates {:?} vs {:?}",
            a.names(),
            b.names()
        )))
    }
}

impl<V: Variance> Field<V> {
    pub fn zero(coords: &Arc<CoordinateSystem>, degree: usize) -> Self {
        Self {
            coords: Arc::clone(coords),
            degree,
            coeffs: BTreeMap::new(),
            _variance: PhantomData,
        }
    }

    /// Degree-0 field equal to `f`.
    pub fn scalar(coords: &Arc<CoordinateSystem>, f: ScalarExpr) -> Self {
        let mut out = Self::zero(coords, 0);
        out.insert(Vec::new(), f);
        out
    }

    /// `c * e_{i_1} ^ ... ^ e_{i_q}` for an arbitrary (unsorted) index list.
    pub fn monomial(coords: &Arc<CoordinateSystem>, index: &[usize], c: ScalarExpr) -> Self {
        let mut out = Self::zero(coords, index.len());
        assert!(index.iter().all(|&i| i < coords.dim()), "index out of range");
        if let Some((sign, sorted)) = sort_sign(index) {
            out.insert(sorted, if sign > 0.0 { c } else { c.neg() });
        }
        out
    }

    /// Basis 1-element `dx_i` or `d/dx_i`.
    pub fn basis(coords: &Arc<CoordinateSystem>, i: usize) -> Self {
        Self::monomial(coords, &[i], ScalarExpr::one())
    }

    /// Build from `(increasing index, coefficient)` pairs; repeated keys add.
    pub fn from_terms(
        coords: &Arc<CoordinateSystem>,
        degree: usize,
        terms: impl IntoIterator<Item = (MultiIndex, ScalarExpr)>,
    ) -> Self {
        let mut out = Self::zero(coords, degree);
        for (index, c) in terms {
            let term = Self::monomial(coords, &index, c);
            assert_eq!(index.len(), degree, "index length must equal the degree");
            out = out.plus(&term);
        }
        out
    }

    fn insert(&mut self, index: MultiIndex, c: ScalarExpr) {
        if c.is_zero() {
            self.coeffs.remove(&index);
        } else {
            self.coeffs.insert(index, c);
        }
    }

    fn accumulate(&mut self, index: MultiIndex, c: ScalarExpr) {
        if c.is_zero() {
            return;
        }
        let sum = match self.coeffs.get(&index) {
            Some(prev) => prev.add(&c),
            None => c,
        };
        self.insert(index, sum);
    }

    pub fn coords(&self) -> &Arc<CoordinateSystem> {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.dim()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Coefficient on increasing `index` (zero when absent).
    pub fn coeff(&self, index: &[usize]) -> ScalarExpr {
        self.coeffs.get(index).cloned().unwrap_or_else(ScalarExpr::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &ScalarExpr)> {
        self.coeffs.iter()
    }

    /// Structurally empty (every coefficient absent).
    pub fn is_structurally_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// The coefficient of a degree-0 field.
    pub fn as_scalar(&self) -> ScalarExpr {
        self.coeff(&[])
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        same_coords(&self.coords, &other.coords)?;
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                found: other.degree,
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (index, c) in &other.coeffs {
            out.accumulate(index.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&other.negated())
    }

    /// `self + other`; panics on mismatched coordinates or degrees.
    pub fn plus(&self, other: &Self) -> Self {
        self.try_add(other).expect("adding incompatible fields")
    }

    /// `self - other`; panics on mismatched coordinates or degrees.
    pub fn minus(&self, other: &Self) -> Self {
        self.try_sub(other).expect("subtracting incompatible fields")
    }

    pub fn negated(&self) -> Self {
        self.map_coeffs(|c| c.neg())
    }

    pub fn scaled(&self, f: &ScalarExpr) -> Self {
        self.map_coeffs(|c| f.mul(c))
    }

    pub fn map_coeffs(&self, f: impl Fn(&ScalarExpr) -> ScalarExpr) -> Self {
        let mut out = Self::zero(&self.coords, self.degree);
        for (index, c) in &self.coeffs {
            out.insert(index.clone(), f(c));
        }
        out
    }

    /// Componentwise partial derivative of the coefficients.
    pub fn partial(&self, i: usize) -> Self {
        self.map_coeffs(|c| c.partial(i))
    }

    /// Exterior product. Fields of degree above `m` come out as zero.
    pub fn wedge(&self, other: &Self) -> Result<Self> {
        same_coords(&self.coords, &other.coords)?;
        let mut out = Self::zero(&self.coords, self.degree + other.degree);
        for (i, a) in &self.coeffs {
            for (j, b) in &other.coeffs {
                let joined: Vec<usize> = i.iter().chain(j).copied().collect();
                if let Some((sign, k)) = sort_sign(&joined) {
                    let prod = a.mul(b);
                    out.accumulate(k, if sign > 0.0 { prod } else { prod.neg() });
                }
            }
        }
        Ok(out)
    }

    /// `self ^ self ^ ... ^ self` (`n` factors); `n = 0` gives the constant 1.
    pub fn wedge_power(&self, n: usize) -> Self {
        let mut out = Self::scalar(&self.coords, ScalarExpr::one());
        for _ in 0..n {
            out = out.wedge(self).expect("same coordinates");
        }
        out
    }

    /// Evaluate the coefficients at a point (dense over increasing indices).
    pub fn eval(&self, point: &[f64]) -> Result<BTreeMap<MultiIndex, f64>, crate::expr::EvalError> {
        self.coeffs
            .iter()
            .map(|(k, c)| Ok((k.clone(), c.eval(point)?)))
            .collect()
    }

    /// Pair with `degree` fields of the dual variance and degree 1, using
    /// the determinant convention.
    pub fn pair(&self, args: &[Field<V::Dual>]) -> Result<ScalarExpr> {
        if args.len() != self.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                found: args.len(),
            });
        }
        for a in args {
            same_coords(&self.coords, &a.coords)?;
            if a.degree != 1 {
                return Err(Error::DegreeMismatch {
                    expected: 1,
                    found: a.degree,
                });
            }
        }
        let mut acc = ScalarExpr::zero();
        for (index, c) in &self.coeffs {
            let q = index.len();
            let m = ExprMatrix::from_fn(q, |a, b| args[a].coeff(&[index[b]]));
            acc = acc.add(&c.mul(&m.det()));
        }
        Ok(acc)
    }

    /// Numeric pairing of the field evaluated at `point` with numeric vectors.
    pub fn pair_numeric(&self, point: &[f64], vectors: &[Vec<f64>]) -> Result<f64, crate::expr::EvalError> {
        let mut acc = 0.0;
        for (index, c) in &self.coeffs {
            let q = index.len();
            let m = nalgebra::DMatrix::from_fn(q, q, |a, b| vectors[a][index[b]]);
            acc += c.eval(point)? * if q == 0 { 1.0 } else { m.determinant() };
        }
        Ok(acc)
    }

    pub fn display(&self) -> String {
        self.to_string()
    }
}

impl<V: Variance> fmt::Display for Field<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return f.write_str("0");
        }
        for (n, (index, c)) in self.coeffs.iter().enumerate() {
            if n > 0 {
                f.write_str(" + ")?;
            }
            let basis: Vec<String> = index
                .iter()
                .map(|&i| format!("{}{}", V::BASIS_PREFIX, self.coords.name(i)))
                .collect();
            if basis.is_empty() {
                write!(f, "({})", c.display(&self.coords))?;
            } else if c.is_one() {
                f.write_str(&basis.join("^"))?;
            } else {
                write!(f, "({})*{}", c.display(&self.coords), basis.join("^"))?;
            }
        }
        Ok(())
    }
}

impl<V: Variance> fmt::Debug for Field<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Field<{:?}>[deg {}]({})", V::BASIS_PREFIX, self.degree, self)
    }
}

impl<V: Variance> Sampled for Field<V> {
    fn sampled_exprs(&self) -> Vec<ScalarExpr> {
        self.coeffs.values().cloned().collect()
    }
}

// ---------------------------------------------------------------------------
// Operators

/// `d beta`. A top-degree form maps to the zero form of degree `m + 1`.
pub fn exterior_derivative(beta: &Form) -> Form {
    let m = beta.dim();
    let mut out = Form::zero(&beta.coords, beta.degree + 1);
    for (index, c) in &beta.coeffs {
        for j in 0..m {
            if index.contains(&j) {
                continue;
            }
            let dc = c.partial(j);
            if dc.is_zero() {
                continue;
            }
            // moving dx_j into place past the smaller indices
            let before = index.iter().filter(|&&i| i < j).count();
            let mut k = index.clone();
            k.insert(before, j);
            out.accumulate(k, if before % 2 == 0 { dc } else { dc.neg() });
        }
    }
    out
}

/// `i_A beta` with `A` filling the first `p` slots. Zero (degree 0) when `p > q`.
pub fn interior(a: &Multivector, beta: &Form) -> Result<Form> {
    same_coords(&a.coords, &beta.coords)?;
    if a.degree > beta.degree {
        return Ok(Form::zero(&beta.coords, 0));
    }
    let mut out = Form::zero(&beta.coords, beta.degree - a.degree);
    for (i, ac) in &a.coeffs {
        for (k, bc) in &beta.coeffs {
            if !i.iter().all(|x| k.contains(x)) {
                continue;
            }
            let j: MultiIndex = k.iter().copied().filter(|x| !i.contains(x)).collect();
            let joined: Vec<usize> = i.iter().chain(&j).copied().collect();
            let (sign, _) = sort_sign(&joined).expect("disjoint indices");
            let prod = ac.mul(bc);
            out.accumulate(j, if sign > 0.0 { prod } else { prod.neg() });
        }
    }
    Ok(out)
}

/// Cartan formula `L_X beta = i_X d beta + d i_X beta`.
pub fn lie_derivative(x: &Multivector, beta: &Form) -> Result<Form> {
    if x.degree != 1 {
        return Err(Error::DegreeMismatch {
            expected: 1,
            found: x.degree,
        });
    }
    let first = interior(x, &exterior_derivative(beta))?;
    if beta.degree == 0 {
        return Ok(first);
    }
    Ok(first.plus(&exterior_derivative(&interior(x, beta)?)))
}

/// Derivative of a scalar along a vector field, `X(f)`.
pub fn directional(x: &Multivector, f: &ScalarExpr) -> ScalarExpr {
    x.coeffs.iter().fold(ScalarExpr::zero(), |acc, (index, c)| {
        acc.add(&c.mul(&f.partial(index[0])))
    })
}

/// Right odd derivative: move `d_i` to the end, then drop it.
fn odd_right(a: &Multivector, i: usize) -> Multivector {
    let mut out = Multivector::zero(&a.coords, a.degree.saturating_sub(1));
    for (index, c) in &a.coeffs {
        if let Some(pos) = index.iter().position(|&x| x == i) {
            let rest: MultiIndex = index.iter().copied().filter(|&x| x != i).collect();
            let c = if (index.len() - 1 - pos) % 2 == 0 {
                c.clone()
            } else {
                c.neg()
            };
            out.accumulate(rest, c);
        }
    }
    out
}

/// Left odd derivative: move `d_i` to the front, then drop it.
fn odd_left(a: &Multivector, i: usize) -> Multivector {
    let mut out = Multivector::zero(&a.coords, a.degree.saturating_sub(1));
    for (index, c) in &a.coeffs {
        if let Some(pos) = index.iter().position(|&x| x == i) {
            let rest: MultiIndex = index.iter().copied().filter(|&x| x != i).collect();
            let c = if pos % 2 == 0 { c.clone() } else { c.neg() };
            out.accumulate(rest, c);
        }
    }
    out
}

/// Schouten bracket `[A, B]` of degree `a + b - 1`.
///
/// Computed in the odd-variable picture (`d_i` as odd coordinates `xi_i`):
/// `(-1)^(a-1) sum_i (dA/dxi_i)_right (dB/dx_i) - (dA/dx_i) (dB/dxi_i)_left`.
/// On vector fields this is the Lie bracket and `[X, f] = X(f)`. The graded
/// symmetry is `[A, B] = (-1)^(ab) [B, A]`.
pub fn schouten(a: &Multivector, b: &Multivector) -> Result<Multivector> {
    same_coords(&a.coords, &b.coords)?;
    if a.degree + b.degree == 0 {
        return Ok(Multivector::zero(&a.coords, 0));
    }
    let mut out = Multivector::zero(&a.coords, a.degree + b.degree - 1);
    for i in 0..a.dim() {
        if a.degree > 0 {
            out = out.plus(&odd_right(a, i).wedge(&b.partial(i))?);
        }
        if b.degree > 0 {
            out = out.minus(&a.partial(i).wedge(&odd_left(b, i))?);
        }
    }
    Ok(if a.degree % 2 == 1 { out } else { out.negated() })
}

/// `Pi^#(eta)`, defined by `beta(Pi^#(eta)) = Pi(eta, beta)`.
pub fn sharp(pi: &Multivector, eta: &Form) -> Result<Multivector> {
    same_coords(&pi.coords, &eta.coords)?;
    if pi.degree != 2 || eta.degree != 1 {
        return Err(Error::DegreeMismatch {
            expected: 2,
            found: pi.degree,
        });
    }
    let mut out = Multivector::zero(&pi.coords, 1);
    for (index, c) in &pi.coeffs {
        let (i, j) = (index[0], index[1]);
        // Pi^{ij} d_i^d_j contributes eta_i Pi^{ij} d_j - eta_j Pi^{ij} d_i
        out.accumulate(vec![j], eta.coeff(&[i]).mul(c));
        out.accumulate(vec![i], eta.coeff(&[j]).mul(c).neg());
    }
    Ok(out)
}

/// Gradient 1-form `df`.
pub fn differential(coords: &Arc<CoordinateSystem>, f: &ScalarExpr) -> Form {
    exterior_derivative(&Form::scalar(coords, f.clone()))
}

// ---------------------------------------------------------------------------
// Volume forms and the trace operator

/// Top-degree form `f dx_1 ^ ... ^ dx_m` with `f` certified nonvanishing at samples.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeForm {
    form: Form,
    certified_on: Option<crate::verify::SampleBox>,
}

/// Smallest admissible `|f|` at a certification sample.
pub const VOLUME_THRESHOLD: f64 = 1e-10;

impl VolumeForm {
    /// The coordinate volume `dx_1 ^ ... ^ dx_m`.
    pub fn euclidean(coords: &Arc<CoordinateSystem>) -> Self {
        let full: MultiIndex = (0..coords.dim()).collect();
        Self {
            form: Form::monomial(coords, &full, ScalarExpr::one()),
            certified_on: None,
        }
    }

    /// Certify that `form` is a top-degree form whose coefficient stays away
    /// from zero on the sampler's points.
    pub fn certify(form: Form, sampler: &Sampler) -> Result<Self> {
        let m = form.dim();
        if form.degree != m {
            return Err(Error::DegreeMismatch {
                expected: m,
                found: form.degree,
            });
        }
        let f = form.coeff(&(0..m).collect::<Vec<_>>());
        for p in sampler.points() {
            let v = f.eval(&p).map(f64::abs).unwrap_or(0.0);
            if v < VOLUME_THRESHOLD {
                return Err(Error::NotAVolume { point: p, value: v });
            }
        }
        Ok(Self {
            form,
            certified_on: Some(sampler.region.clone()),
        })
    }

    /// `f * Omega`, certified on the sampler.
    pub fn rescaled(&self, h: &ScalarExpr, sampler: &Sampler) -> Result<Self> {
        Self::certify(self.form.scaled(h), sampler)
    }

    pub fn form(&self) -> &Form {
        &self.form
    }

    pub fn coords(&self) -> &Arc<CoordinateSystem> {
        self.form.coords()
    }

    /// The single coefficient `f`.
    pub fn density(&self) -> ScalarExpr {
        self.form.coeff(&(0..self.form.dim()).collect::<Vec<_>>())
    }

    pub fn certified_on(&self) -> Option<&crate::verify::SampleBox> {
        self.certified_on.as_ref()
    }
}

/// `i_A Omega`, a form of degree `m - p`.
pub fn contract_into_volume(a: &Multivector, omega: &VolumeForm) -> Result<Form> {
    interior(a, &omega.form)
}

/// The unique `A` of degree `p` with `i_A Omega = sigma`.
pub fn solve_contraction(sigma: &Form, omega: &VolumeForm, p: usize) -> Result<Multivector> {
    let m = omega.form.dim();
    same_coords(&sigma.coords, omega.coords())?;
    if p > m || sigma.degree + p != m {
        return Err(Error::DegreeMismatch {
            expected: m.saturating_sub(p),
            found: sigma.degree,
        });
    }
    let f = omega.density();
    let mut out = Multivector::zero(&sigma.coords, p);
    for (j, c) in &sigma.coeffs {
        let i = complement(j, m);
        let joined: Vec<usize> = i.iter().chain(j).copied().collect();
        let (sign, _) = sort_sign(&joined).expect("complementary indices");
        let v = c.div(&f);
        out.insert(i, if sign > 0.0 { v } else { v.neg() });
    }
    Ok(out)
}

/// Trace operator `D_Omega`, defined by `i_{D(A)} Omega = d i_A Omega`.
pub fn trace_operator(a: &Multivector, omega: &VolumeForm) -> Result<Multivector> {
    if a.degree == 0 {
        return Err(Error::DegreeMismatch { expected: 1, found: 0 });
    }
    let d = exterior_derivative(&contract_into_volume(a, omega)?);
    solve_contraction(&d, omega, a.degree - 1)
}

/// `div_Omega X` for a vector field.
pub fn divergence(x: &Multivector, omega: &VolumeForm) -> Result<ScalarExpr> {
    Ok(trace_operator(x, omega)?.as_scalar())
}
