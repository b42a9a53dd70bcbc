//! Polynomial Monge patches `z = f(x, y)` and their first fundamental form.
//!
//! A surface of degree `n` carries one coefficient per exponent pair `(i, j)`
//! with `i + j <= n`, stored in graded-lexicographic order: ascending total
//! degree, then ascending `i`. An optional affine change of the planar
//! coordinates maps the data's bounding box onto `[-1, 1]^2` before the
//! monomials are formed; it is stored with the surface so that evaluation
//! always takes raw `(x, y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn try_new(x: f64, y: f64, z: f64) -> Result<Self> {
        let p = Self { x, y, z };
        if p.is_finite() {
            Ok(p)
        } else {
            Err(Error::InvalidInput(format!("non-finite point ({x}, {y}, {z})")))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Same planar location, regardless of height.
    pub fn same_xy(&self, other: &Point3) -> bool {
        self.x == other.x && self.y == other.y
    }
}

/// Exponent pairs `(i, j)`, `i + j <= degree`, meaning the monomial `x^i y^j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    degree: usize,
    terms: Vec<(usize, usize)>,
}

impl MonomialBasis {
    pub fn new(degree: usize) -> Self {
        let mut terms = Vec::with_capacity(Self::term_count(degree));
        for total in 0..=degree {
            for i in 0..=total {
                terms.push((i, total - i));
            }
        }
        Self { degree, terms }
    }

    pub fn term_count(degree: usize) -> usize {
        (degree + 1) * (degree + 2) / 2
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> &[(usize, usize)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Position of `x^i y^j` in the ordering, if present.
    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        let total = i + j;
        (total <= self.degree).then(|| total * (total + 1) / 2 + i)
    }

    /// Values of every monomial at an already-scaled location.
    pub fn evaluate_row(&self, u: f64, v: f64) -> Vec<f64> {
        let (pu, pv) = (powers(u, self.degree), powers(v, self.degree));
        self.terms.iter().map(|&(i, j)| pu[i] * pv[j]).collect()
    }
}

/// Shorthand for [`MonomialBasis::new`].
pub fn monomial_basis(degree: usize) -> MonomialBasis {
    MonomialBasis::new(degree)
}

fn powers(t: f64, degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree + 1);
    let mut acc = 1.0;
    for _ in 0..=degree {
        out.push(acc);
        acc *= t;
    }
    out
}

/// Affine map `x' = (x - cx) / sx`, `y' = (y - cy) / sy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub cx: f64,
    pub cy: f64,
    pub sx: f64,
    pub sy: f64,
}

impl Scaling {
    /// Maps the planar bounding box of `points` onto `[-1, 1]^2`.
    pub fn unit_box<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Option<Self> {
        let mut it = points.into_iter().peekable();
        it.peek()?;
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in it {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        let half = |lo: f64, hi: f64| {
            let h = 0.5 * (hi - lo);
            if h > 0.0 {
                h
            } else {
                1.0
            }
        };
        Some(Self { cx: 0.5 * (x0 + x1), cy: 0.5 * (y0 + y1), sx: half(x0, x1), sy: half(y0, y1) })
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.cx) / self.sx, (y - self.cy) / self.sy)
    }
}

/// Whether fits rescale the planar coordinates before forming monomials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingMode {
    #[default]
    Off,
    UnitBox,
}

impl ScalingMode {
    pub fn scaling_for<'a>(self, points: impl IntoIterator<Item = &'a Point3>) -> Option<Scaling> {
        match self {
            ScalingMode::Off => None,
            ScalingMode::UnitBox => Scaling::unit_box(points),
        }
    }
}

/// `z = Σ a_ij x^i y^j` over a [`MonomialBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialSurface {
    basis: MonomialBasis,
    coefficients: Vec<f64>,
    scaling: Option<Scaling>,
}

/// Value and partial derivatives up to second order at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub f: f64,
    pub fx: f64,
    pub fy: f64,
    pub fxx: f64,
    pub fxy: f64,
    pub fyy: f64,
}

impl PolynomialSurface {
    pub fn new(degree: usize, coefficients: Vec<f64>, scaling: Option<Scaling>) -> Result<Self> {
        let basis = MonomialBasis::new(degree);
        if coefficients.len() != basis.len() {
            return Err(Error::InvalidInput(format!(
                "degree {degree} needs {} coefficients, got {}",
                basis.len(),
                coefficients.len()
            )));
        }
        if let Some((k, a)) = coefficients.iter().enumerate().find(|(_, a)| !a.is_finite()) {
            return Err(Error::NumericRange(format!("coefficient {k} is {a}")));
        }
        if let Some(s) = &scaling {
            let ok = [s.cx, s.cy, s.sx, s.sy].iter().all(|v| v.is_finite()) && s.sx > 0.0 && s.sy > 0.0;
            if !ok {
                return Err(Error::InvalidInput(format!("invalid scaling {s:?}")));
            }
        }
        Ok(Self { basis, coefficients, scaling })
    }

    pub fn zero(degree: usize) -> Self {
        let basis = MonomialBasis::new(degree);
        let coefficients = vec![0.0; basis.len()];
        Self { basis, coefficients, scaling: None }
    }

    /// The affine surface `z = a + b x + c y`.
    pub fn plane(a: f64, b: f64, c: f64) -> Self {
        // Graded-lex order for degree 1 is (0,0), (0,1), (1,0).
        Self { basis: MonomialBasis::new(1), coefficients: vec![a, c, b], scaling: None }
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn scaling(&self) -> Option<&Scaling> {
        self.scaling.as_ref()
    }

    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        self.basis.index_of(i, j).map_or(0.0, |k| self.coefficients[k])
    }

    #[inline]
    fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        match &self.scaling {
            Some(s) => s.apply(x, y),
            None => (x, y),
        }
    }

    #[inline]
    fn inv_scale(&self) -> (f64, f64) {
        match &self.scaling {
            Some(s) => (1.0 / s.sx, 1.0 / s.sy),
            None => (1.0, 1.0),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (u, v) = self.to_local(x, y);
        let n = self.degree();
        let (pu, pv) = (powers(u, n), powers(v, n));
        self.basis.terms.iter().zip(&self.coefficients).map(|(&(i, j), a)| a * pu[i] * pv[j]).sum()
    }

    /// [`eval`](Self::eval), failing when the result overflows.
    pub fn try_eval(&self, x: f64, y: f64) -> Result<f64> {
        let z = self.eval(x, y);
        if z.is_finite() {
            Ok(z)
        } else {
            Err(Error::NumericRange(format!("surface value at ({x}, {y}) is {z}")))
        }
    }

    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let j = self.jet(x, y);
        (j.fx, j.fy)
    }

    /// Value, gradient and Hessian in one pass over the monomials.
    pub fn jet(&self, x: f64, y: f64) -> Jet {
        let (u, v) = self.to_local(x, y);
        let (ku, kv) = self.inv_scale();
        let n = self.degree();
        let (pu, pv) = (powers(u, n), powers(v, n));
        let mut out = Jet { f: 0.0, fx: 0.0, fy: 0.0, fxx: 0.0, fxy: 0.0, fyy: 0.0 };
        for (&(i, j), &a) in self.basis.terms.iter().zip(&self.coefficients) {
            out.f += a * pu[i] * pv[j];
            if i >= 1 {
                out.fx += a * (i as f64) * pu[i - 1] * pv[j];
                if i >= 2 {
                    out.fxx += a * ((i * (i - 1)) as f64) * pu[i - 2] * pv[j];
                }
                if j >= 1 {
                    out.fxy += a * ((i * j) as f64) * pu[i - 1] * pv[j - 1];
                }
            }
            if j >= 1 {
                out.fy += a * (j as f64) * pu[i] * pv[j - 1];
                if j >= 2 {
                    out.fyy += a * ((j * (j - 1)) as f64) * pu[i] * pv[j - 2];
                }
            }
        }
        out.fx *= ku;
        out.fy *= kv;
        out.fxx *= ku * ku;
        out.fxy *= ku * kv;
        out.fyy *= kv * kv;
        out
    }

    /// `(E, F, G)` of the patch `(x, y, f(x, y))`.
    pub fn first_fundamental_form(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (fx, fy) = self.gradient(x, y);
        (1.0 + fx * fx, fx * fy, 1.0 + fy * fy)
    }

    pub fn lift(&self, x: f64, y: f64) -> Point3 {
        Point3::new(x, y, self.eval(x, y))
    }

    /// Vertical distance of `p` from the surface.
    pub fn residual(&self, p: &Point3) -> f64 {
        (self.eval(p.x, p.y) - p.z).abs()
    }
}

pub fn eval_surface(s: &PolynomialSurface, x: f64, y: f64) -> f64 {
    s.eval(x, y)
}

pub fn surface_gradient(s: &PolynomialSurface, x: f64, y: f64) -> (f64, f64) {
    s.gradient(x, y)
}

pub fn first_fundamental_form(s: &PolynomialSurface, x: f64, y: f64) -> (f64, f64, f64) {
    s.first_fundamental_form(x, y)
}

pub fn lift(s: &PolynomialSurface, x: f64, y: f64) -> Point3 {
    s.lift(x, y)
}

#[derive(Serialize, Deserialize)]
struct CoefficientRecord {
    i: usize,
    j: usize,
    a: f64,
}

#[derive(Serialize, Deserialize)]
struct SurfaceRecord {
    degree: usize,
    scaling: Option<Scaling>,
    coefficients: Vec<CoefficientRecord>,
}

impl Serialize for PolynomialSurface {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SurfaceRecord {
            degree: self.degree(),
            scaling: self.scaling,
            coefficients: self
                .basis
                .terms
                .iter()
                .zip(&self.coefficients)
                .map(|(&(i, j), &a)| CoefficientRecord { i, j, a })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PolynomialSurface {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = SurfaceRecord::deserialize(deserializer)?;
        let basis = MonomialBasis::new(rec.degree);
        let mut coefficients = vec![0.0; basis.len()];
        let mut seen = vec![false; basis.len()];
        for c in rec.coefficients {
            let k = basis
                .index_of(c.i, c.j)
                .ok_or_else(|| D::Error::custom(format!("term ({}, {}) exceeds degree {}", c.i, c.j, rec.degree)))?;
            if std::mem::replace(&mut seen[k], true) {
                return Err(D::Error::custom(format!("duplicate term ({}, {})", c.i, c.j)));
            }
            coefficients[k] = c.a;
        }
        PolynomialSurface::new(rec.degree, coefficients, rec.scaling).map_err(D::Error::custom)
    }
}
