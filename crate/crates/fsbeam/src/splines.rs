//! Univariate NURBS: knot vectors, rational basis functions with derivatives
//! up to third order, curve evaluation, knot refinement and degree elevation.

use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    values: Vec<f64>,
    degree: usize,
}

impl KnotVector {
    pub fn new(values: Vec<f64>, degree: usize) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidKnots("degree must be at least 1".into()));
        }
        if values.len() < 2 * (degree + 1) {
            return Err(Error::InvalidKnots(format!(
                "{} knots cannot define an open vector of degree {degree}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidKnots("non-finite knot".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("knots must be nondecreasing".into()));
        }
        let m = values.len();
        let first = values[0];
        let last = values[m - 1];
        if values[..=degree].iter().any(|&v| v != first)
            || values[m - degree - 1..].iter().any(|&v| v != last)
        {
            return Err(Error::InvalidKnots(
                "end knots must be repeated degree + 1 times".into(),
            ));
        }
        if first >= last {
            return Err(Error::InvalidKnots("no nonempty span".into()));
        }
        let mut interior_max = 0;
        let mut run = 0;
        for i in degree + 1..m - degree - 1 {
            run = if values[i] == values[i - 1] { run + 1 } else { 1 };
            interior_max = interior_max.max(run);
        }
        if interior_max > degree {
            return Err(Error::InvalidKnots(
                "interior knot multiplicity exceeds the degree".into(),
            ));
        }
        Ok(Self { values, degree })
    }

    /// Open knot vector on [0, 1] with `n_elements` equal spans.
    pub fn open_uniform(degree: usize, n_elements: usize) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::InvalidKnots("at least one element required".into()));
        }
        let mut values = vec![0.0; degree + 1];
        for i in 1..n_elements {
            values.push(i as f64 / n_elements as f64);
        }
        values.extend(std::iter::repeat(1.0).take(degree + 1));
        Self::new(values, degree)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_basis(&self) -> usize {
        self.values.len() - self.degree - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.values[0], self.values[self.values.len() - 1])
    }

    /// Index i with knot[i] <= u < knot[i+1]; the right end of the domain maps
    /// to the last nonempty span.
    pub fn find_span(&self, u: f64) -> Result<usize> {
        let (lo, hi) = self.domain();
        if !(u >= lo && u <= hi) {
            return Err(Error::Domain { u, lo, hi });
        }
        let p = self.degree;
        let n = self.n_basis();
        if u == hi {
            let mut i = n - 1;
            while self.values[i] == self.values[i + 1] {
                i -= 1;
            }
            return Ok(i);
        }
        // binary search in [p, n)
        let (mut low, mut high) = (p, n);
        while high - low > 1 {
            let mid = (low + high) / 2;
            if u < self.values[mid] {
                high = mid;
            } else {
                low = mid;
            }
        }
        Ok(low)
    }

    /// Nonempty spans as (span index, left knot, right knot).
    pub fn spans(&self) -> Vec<(usize, f64, f64)> {
        (self.degree..self.n_basis())
            .filter(|&i| self.values[i] < self.values[i + 1])
            .map(|i| (i, self.values[i], self.values[i + 1]))
            .collect()
    }

    /// Distinct knot values with their multiplicities.
    pub fn breaks(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &v in &self.values {
            match out.last_mut() {
                Some((last, m)) if *last == v => *m += 1,
                _ => out.push((v, 1)),
            }
        }
        out
    }

    /// Derivatives of the p+1 nonzero B-spline basis functions on `span`
    /// (The NURBS Book, algorithm A2.3). Returns ders[k][j].
    fn basis_ders(&self, span: usize, u: f64, nd: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let kv = &self.values;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = u - kv[span + 1 - j];
            right[j] = kv[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; nd + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=nd.min(p) {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = p as f64;
        for k in 1..=nd.min(p) {
            for v in ders[k].iter_mut() {
                *v *= fac;
            }
            fac *= (p - k) as f64;
        }
        ders
    }
}

/// Rational basis functions active at one parametric coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisValues {
    /// Index of the first active control point.
    pub first: usize,
    /// `ders[m][j]` is the m-th derivative of the basis function `first + j`.
    /// Orders above the requested one are zero.
    pub ders: [Vec<f64>; MAX_ORDER + 1],
}

impl BasisValues {
    pub fn n_active(&self) -> usize {
        self.ders[0].len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NurbsCurve {
    knots: KnotVector,
    points: Vec<Vector3<f64>>,
    weights: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl NurbsCurve {
    pub fn new(knots: KnotVector, points: Vec<Vector3<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != knots.n_basis() {
            return Err(Error::InvalidCurve(format!(
                "{} control points but the knot vector needs {}",
                points.len(),
                knots.n_basis()
            )));
        }
        if weights.len() != points.len() {
            return Err(Error::InvalidCurve("weight count differs from point count".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidCurve("weights must be positive".into()));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidCurve("non-finite control point".into()));
        }
        Ok(Self { knots, points, weights })
    }

    /// Non-rational curve (all weights one).
    pub fn bspline(knots: KnotVector, points: Vec<Vector3<f64>>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::new(knots, points, w)
    }

    /// Quarter circle of radius `radius` in the plane spanned by the unit
    /// vectors `e1` (start direction from center) and `e2`, centred at `center`.
    pub fn quarter_circle(
        center: Vector3<f64>,
        radius: f64,
        e1: Vector3<f64>,
        e2: Vector3<f64>,
    ) -> Result<Self> {
        let knots = KnotVector::new(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2)?;
        let pts = vec![
            center + radius * e1,
            center + radius * (e1 + e2),
            center + radius * e2,
        ];
        Self::new(knots, pts, vec![1.0, std::f64::consts::FRAC_1_SQRT_2, 1.0])
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.knots.degree
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    /// Same knots and weights with different control points.
    pub fn with_points(&self, points: Vec<Vector3<f64>>) -> Result<Self> {
        Self::new(self.knots.clone(), points, self.weights.clone())
    }

    /// Rational basis functions and their derivatives up to order `k`.
    pub fn basis_derivatives(&self, u: f64, k: usize) -> Result<BasisValues> {
        if k > MAX_ORDER {
            return Err(Error::UnsupportedOrder(k));
        }
        let p = self.knots.degree;
        let span = self.knots.find_span(u)?;
        let first = span - p;
        let n = self.knots.basis_ders(span, u, k);
        let w = &self.weights[first..=span];
        // derivatives of W = sum w_j N_j
        let mut wd = [0.0; MAX_ORDER + 1];
        for m in 0..=k {
            wd[m] = (0..=p).map(|j| w[j] * n[m][j]).sum();
        }
        let mut ders: [Vec<f64>; MAX_ORDER + 1] = std::array::from_fn(|_| vec![0.0; p + 1]);
        for m in 0..=k {
            for j in 0..=p {
                let mut v = w[j] * n[m][j];
                for i in 1..=m {
                    v -= binomial(m, i) * wd[i] * ders[m - i][j];
                }
                ders[m][j] = v / wd[0];
            }
        }
        Ok(BasisValues { first, ders })
    }

    /// Position and parametric derivatives up to order `k`; entries above
    /// `k` are zero.
    pub fn curve_derivatives(&self, u: f64, k: usize) -> Result<[Vector3<f64>; MAX_ORDER + 1]> {
        let basis = self.basis_derivatives(u, k)?;
        Ok(combine(&basis, &self.points))
    }

    pub fn point(&self, u: f64) -> Result<Vector3<f64>> {
        Ok(self.curve_derivatives(u, 0)?[0])
    }

    fn homogeneous(&self) -> Vec<Vector4<f64>> {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| Vector4::new(w * p.x, w * p.y, w * p.z, w))
            .collect()
    }

    fn from_homogeneous(knots: KnotVector, pw: &[Vector4<f64>]) -> Result<Self> {
        let weights: Vec<f64> = pw.iter().map(|q| q.w).collect();
        let points = pw.iter().map(|q| Vector3::new(q.x, q.y, q.z) / q.w).collect();
        Self::new(knots, points, weights)
    }

    /// Insert one knot (Boehm's algorithm on homogeneous points).
    pub fn insert_knot(&self, u: f64) -> Result<Self> {
        let (lo, hi) = self.knots.domain();
        if !(u > lo && u < hi) {
            return Err(Error::Domain { u, lo, hi });
        }
        let p = self.knots.degree;
        let kv = &self.knots.values;
        let k = self.knots.find_span(u)?;
        let pw = self.homogeneous();
        let mut q = Vec::with_capacity(pw.len() + 1);
        for i in 0..=pw.len() {
            let v = if i + p <= k {
                pw[i]
            } else if i > k {
                pw[i - 1]
            } else {
                let alpha = (u - kv[i]) / (kv[i + p] - kv[i]);
                pw[i] * alpha + pw[i - 1] * (1.0 - alpha)
            };
            q.push(v);
        }
        let mut values = kv.clone();
        values.insert(k + 1, u);
        Self::from_homogeneous(KnotVector::new(values, p)?, &q)
    }

    /// Split every nonempty span into `n_elements` equal parametric parts.
    pub fn refine_uniform(&self, n_elements: usize) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::InvalidCurve("refinement factor must be at least 1".into()));
        }
        let mut curve = self.clone();
        for (_, a, b) in self.knots.spans() {
            for i in 1..n_elements {
                curve = curve.insert_knot(a + (b - a) * i as f64 / n_elements as f64)?;
            }
        }
        Ok(curve)
    }

    /// Raise the degree to `p_new`, keeping interior continuity. The new
    /// homogeneous control points are recovered by collocation at the Greville
    /// abscissae of the elevated knot vector, which is exact because the
    /// original curve lies in the elevated spline space.
    pub fn elevate_degree(&self, p_new: usize) -> Result<Self> {
        let p = self.knots.degree;
        if p_new < p {
            return Err(Error::InvalidCurve(format!(
                "cannot lower the degree from {p} to {p_new}"
            )));
        }
        if p_new == p {
            return Ok(self.clone());
        }
        let t = p_new - p;
        let breaks = self.knots.breaks();
        let mut values = Vec::new();
        let nb = breaks.len();
        for (i, &(v, m)) in breaks.iter().enumerate() {
            let mult = if i == 0 || i == nb - 1 { p_new + 1 } else { m + t };
            values.extend(std::iter::repeat(v).take(mult));
        }
        let knots = KnotVector::new(values, p_new)?;
        let n = knots.n_basis();
        let kv = knots.values();
        let greville: Vec<f64> = (0..n)
            .map(|i| kv[i + 1..=i + p_new].iter().sum::<f64>() / p_new as f64)
            .collect();

        let pw = self.homogeneous();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DMatrix::<f64>::zeros(n, 4);
        for (row, &u) in greville.iter().enumerate() {
            let span = knots.find_span(u)?;
            let nb = knots.basis_ders(span, u, 0);
            for j in 0..=p_new {
                a[(row, span - p_new + j)] = nb[0][j];
            }
            let span_old = self.knots.find_span(u)?;
            let nold = self.knots.basis_ders(span_old, u, 0);
            let mut v = Vector4::zeros();
            for j in 0..=p {
                v += pw[span_old - p + j] * nold[0][j];
            }
            for c in 0..4 {
                rhs[(row, c)] = v[c];
            }
        }
        let lu = a.lu();
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidCurve("singular collocation matrix".into()))?;
        let q: Vec<Vector4<f64>> = (0..n)
            .map(|i| Vector4::new(sol[(i, 0)], sol[(i, 1)], sol[(i, 2)], sol[(i, 3)]))
            .collect();
        Self::from_homogeneous(knots, &q)
    }

    /// Approximate axis length by Gauss quadrature over each span.
    pub fn length(&self) -> Result<f64> {
        let (x, w) = crate::quadrature::gauss_legendre(12);
        let mut len = 0.0;
        for (_, a, b) in self.knots.spans() {
            for (xi, wi) in x.iter().zip(&w) {
                let u = 0.5 * (a + b) + 0.5 * (b - a) * xi;
                len += 0.5 * (b - a) * wi * self.curve_derivatives(u, 1)?[1].norm();
            }
        }
        Ok(len)
    }
}

/// Weighted sums of arbitrary control data with a set of basis values.
///
/// Points are taken relative to the first active one, which keeps the
/// cancellation in the derivative sums at the scale of the element.
pub fn combine(basis: &BasisValues, points: &[Vector3<f64>]) -> [Vector3<f64>; MAX_ORDER + 1] {
    let mut out = [Vector3::zeros(); MAX_ORDER + 1];
    let origin = points[basis.first];
    for (m, row) in basis.ders.iter().enumerate() {
        for (j, r) in row.iter().enumerate() {
            out[m] += (points[basis.first + j] - origin) * *r;
        }
    }
    out[0] += origin;
    out
}

/// Same as [`combine`] for scalar control data.
pub fn combine_scalar(basis: &BasisValues, values: &[f64]) -> [f64; MAX_ORDER + 1] {
    let mut out = [0.0; MAX_ORDER + 1];
    for (m, row) in basis.ders.iter().enumerate() {
        for (j, r) in row.iter().enumerate() {
            out[m] += values[basis.first + j] * r;
        }
    }
    out
}

/// Vector of basis values of order `m` scattered over all control points.
pub fn dense_row(basis: &BasisValues, m: usize, n_points: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n_points);
    for (j, r) in basis.ders[m].iter().enumerate() {
        v[basis.first + j] = *r;
    }
    v
}
